//! Interval evaluation of C++ return expressions.
//!
//! Backs the rule-based oracle: it over-approximates the set of values a
//! function can return using integer intervals with C++ conversion rules
//! (integer promotion, usual arithmetic conversions, modular wraparound).

use std::collections::{HashMap, HashSet};

use tree_sitter::Node;

use crate::int_types::{normalize_type_name, Bounds, IntLayout, TypeTable};
use crate::syntax::{node_text, parse_cpp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Val {
    bounds: Bounds,
    ty: IntLayout,
}

const INT: IntLayout = IntLayout::new(32, true);

impl Val {
    fn full(ty: IntLayout) -> Self {
        Self { bounds: ty.bounds(), ty }
    }

    /// Converts to `ty` with modular semantics: values that do not fit
    /// widen to the whole target range.
    fn convert(self, ty: IntLayout) -> Self {
        if self.bounds.is_within(&ty.bounds()) {
            Self { bounds: self.bounds, ty }
        } else {
            Self::full(ty)
        }
    }

    fn from_math(lo: Option<i128>, hi: Option<i128>, ty: IntLayout) -> Self {
        match (lo, hi) {
            (Some(lo), Some(hi)) if lo <= hi => Self { bounds: Bounds::new(lo, hi), ty }.convert(ty),
            _ => Self::full(ty),
        }
    }
}

fn promote(ty: IntLayout) -> IntLayout {
    if ty.bits < 32 {
        INT
    } else {
        ty
    }
}

fn common_type(a: IntLayout, b: IntLayout) -> IntLayout {
    let (a, b) = (promote(a), promote(b));
    if a.signed == b.signed {
        return if a.bits >= b.bits { a } else { b };
    }
    let (s, u) = if a.signed { (a, b) } else { (b, a) };
    if u.bits >= s.bits {
        u
    } else {
        s
    }
}

/// Result of analyzing one function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReturnRange {
    pub return_type: String,
    /// Interval of possible return values; `None` when not derivable.
    pub bounds: Option<Bounds>,
    /// Whether `bounds` covers the whole return type.
    pub full_range: bool,
}

impl ReturnRange {
    /// Free-text summary whose bounds phrasing is machine-parseable.
    pub fn describe(&self) -> String {
        match self.bounds {
            Some(b) if !self.full_range => {
                if b.min == b.max {
                    format!(
                        "The function always returns the constant {}, i.e. a value between {} and {}.",
                        b.min, b.min, b.max
                    )
                } else {
                    format!(
                        "The function always returns a value between {} and {}.",
                        b.min, b.max
                    )
                }
            }
            Some(_) => format!(
                "The return value depends on its inputs and can span the full range of `{}`.",
                self.return_type
            ),
            None => "The return value range could not be determined from the implementation."
                .to_string(),
        }
    }
}

/// Analyzes the first function definition in `src`.
pub fn return_range(src: &str, table: &TypeTable) -> Option<ReturnRange> {
    let tree = parse_cpp(src)?;
    let func = find_kind(tree.root_node(), "function_definition")?;
    let ret_ty = func
        .child_by_field_name("type")
        .map(|t| node_text(&t, src).to_string())
        .unwrap_or_default();
    let ret_ty = pointer_free_type(&ret_ty, func.child_by_field_name("declarator"), src);
    let mut eval = Evaluator::new(src, table);
    if let Some(decl) = func.child_by_field_name("declarator") {
        eval.bind_params(decl);
    }
    let body = func.child_by_field_name("body")?;
    eval.scan_body(body);

    let mut returns = Vec::new();
    collect_returns(body, &mut returns);
    let layout = table.layout(&ret_ty);
    let mut acc: Option<Bounds> = None;
    let mut known = !returns.is_empty();
    for r in &returns {
        let value = r.named_child(0).and_then(|e| eval.eval(e));
        match (value, layout) {
            (Some(v), Some(l)) => {
                let v = v.convert(l);
                acc = Some(acc.map_or(v.bounds, |a| a.union(&v.bounds)));
            }
            _ => known = false,
        }
    }
    let bounds = if known { acc } else { layout.map(|l| l.bounds()) };
    let full_range = match (bounds, layout) {
        (Some(b), Some(l)) => b == l.bounds(),
        _ => true,
    };
    Some(ReturnRange {
        return_type: ret_ty,
        bounds,
        full_range,
    })
}

fn pointer_free_type(ty: &str, declarator: Option<Node>, src: &str) -> String {
    match declarator {
        Some(d) if d.kind() == "function_declarator" => ty.to_string(),
        Some(d) => format!("{} {}", ty, node_text(&d, src).split('(').next().unwrap_or_default()),
        None => ty.to_string(),
    }
}

fn find_kind<'t>(node: Node<'t>, kind: &str) -> Option<Node<'t>> {
    if node.kind() == kind {
        return Some(node);
    }
    let mut cursor = node.walk();
    let children: Vec<Node<'t>> = node.children(&mut cursor).collect();
    children.into_iter().find_map(|c| find_kind(c, kind))
}

fn collect_returns<'t>(node: Node<'t>, out: &mut Vec<Node<'t>>) {
    if node.kind() == "lambda_expression" {
        return;
    }
    if node.kind() == "return_statement" {
        out.push(node);
        return;
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        collect_returns(child, out);
    }
}

struct Evaluator<'s, 't> {
    src: &'s str,
    table: &'s TypeTable,
    /// Declared type and optional single initializer per name.
    locals: HashMap<String, (Option<IntLayout>, Option<Node<'t>>)>,
    mutated: HashSet<String>,
    in_progress: HashSet<String>,
}

impl<'s, 't> Evaluator<'s, 't> {
    fn new(src: &'s str, table: &'s TypeTable) -> Self {
        Self {
            src,
            table,
            locals: HashMap::new(),
            mutated: HashSet::new(),
            in_progress: HashSet::new(),
        }
    }

    fn text(&self, node: Node) -> &'s str {
        node_text(&node, self.src)
    }

    fn layout_of(&self, ty: &str) -> Option<IntLayout> {
        self.table.layout(ty)
    }

    fn bind_params(&mut self, declarator: Node<'t>) {
        let Some(params) = declarator.child_by_field_name("parameters") else {
            return;
        };
        let mut cursor = params.walk();
        for p in params.named_children(&mut cursor) {
            if p.kind() != "parameter_declaration" {
                continue;
            }
            let ty = p.child_by_field_name("type").map(|t| self.text(t).to_string());
            let name = p.child_by_field_name("declarator").map(|d| self.text(d).to_string());
            if let (Some(ty), Some(name)) = (ty, name) {
                let layout = if name.starts_with('&') || name.starts_with('*') {
                    None
                } else {
                    self.layout_of(&ty)
                };
                self.locals.insert(name, (layout, None));
            }
        }
    }

    fn scan_body(&mut self, node: Node<'t>) {
        match node.kind() {
            "declaration" => {
                let ty = node
                    .child_by_field_name("type")
                    .map(|t| normalize_type_name(self.text(t)))
                    .unwrap_or_default();
                let mut cursor = node.walk();
                for d in node.children_by_field_name("declarator", &mut cursor) {
                    let (name, init) = if d.kind() == "init_declarator" {
                        (
                            d.child_by_field_name("declarator").map(|n| self.text(n).to_string()),
                            d.child_by_field_name("value"),
                        )
                    } else {
                        (Some(self.text(d).to_string()), None)
                    };
                    if let Some(name) = name {
                        let layout = if ty == "auto" { None } else { self.layout_of(&ty) };
                        let is_auto = ty == "auto";
                        if layout.is_some() || is_auto {
                            self.locals.entry(name).or_insert((layout, init));
                        }
                    }
                }
            }
            "assignment_expression" => {
                if let Some(left) = node.child_by_field_name("left") {
                    self.mutated.insert(self.text(left).to_string());
                }
            }
            "update_expression" => {
                if let Some(arg) = node.child_by_field_name("argument") {
                    self.mutated.insert(self.text(arg).to_string());
                }
            }
            "pointer_expression" => {
                if let Some(arg) = node.child_by_field_name("argument") {
                    self.mutated.insert(self.text(arg).to_string());
                }
            }
            _ => {}
        }
        let mut cursor = node.walk();
        for child in node.children(&mut cursor) {
            self.scan_body(child);
        }
    }

    fn lookup(&mut self, name: &str) -> Option<Val> {
        let (layout, init) = *self.locals.get(name)?;
        if self.mutated.contains(name) {
            // A mutated `auto` local keeps its initializer's type.
            let ty = match layout {
                Some(l) => l,
                None => self.eval(init?)?.ty,
            };
            return Some(Val::full(ty));
        }
        let init_val = match init {
            Some(init) if self.in_progress.insert(name.to_string()) => {
                let v = self.eval(init);
                self.in_progress.remove(name);
                v
            }
            _ => None,
        };
        match (layout, init_val) {
            (Some(l), Some(v)) => Some(v.convert(l)),
            (Some(l), None) => Some(Val::full(l)),
            (None, v) => v,
        }
    }

    fn eval(&mut self, node: Node<'t>) -> Option<Val> {
        match node.kind() {
            "number_literal" => parse_number(self.text(node)),
            "char_literal" => {
                let t = self.text(node);
                let inner = t.trim_start_matches(['u', 'U', 'L']).trim_matches('\'');
                let mut chars = inner.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => {
                        let ty = IntLayout::new(8, true);
                        Some(Val { bounds: Bounds::point(c as i128), ty })
                    }
                    _ => None,
                }
            }
            "true" | "false" => {
                let v = i128::from(node.kind() == "true");
                Some(Val { bounds: Bounds::point(v), ty: IntLayout::new(1, false) })
            }
            "identifier" => {
                let name = self.text(node).to_string();
                self.lookup(&name)
            }
            "parenthesized_expression" => self.eval(node.named_child(0)?),
            "unary_expression" => self.eval_unary(node),
            "binary_expression" => self.eval_binary(node),
            "conditional_expression" => {
                let a = self.eval(node.child_by_field_name("consequence")?)?;
                let b = self.eval(node.child_by_field_name("alternative")?)?;
                let ty = common_type(a.ty, b.ty);
                let (a, b) = (a.convert(ty), b.convert(ty));
                Some(Val { bounds: a.bounds.union(&b.bounds), ty })
            }
            "cast_expression" => {
                let ty = self.layout_of(self.text(node.child_by_field_name("type")?))?;
                let v = self.eval(node.child_by_field_name("value")?)?;
                Some(v.convert(ty))
            }
            "call_expression" => self.eval_call(node),
            _ => None,
        }
    }

    fn eval_unary(&mut self, node: Node<'t>) -> Option<Val> {
        let op = self.text(node.child_by_field_name("operator")?);
        let v = self.eval(node.child_by_field_name("argument")?)?;
        let ty = promote(v.ty);
        let v = v.convert(ty);
        let (lo, hi) = (v.bounds.min, v.bounds.max);
        Some(match op {
            "-" => Val::from_math(hi.checked_neg(), lo.checked_neg(), ty),
            "+" => v,
            "~" if ty.signed => Val::from_math(Some(-hi - 1), Some(-lo - 1), ty),
            "~" => {
                let max = ty.max();
                Val::from_math(Some(max - hi), Some(max - lo), ty)
            }
            "!" => Val { bounds: Bounds::new(0, 1), ty: INT },
            _ => return None,
        })
    }

    fn eval_binary(&mut self, node: Node<'t>) -> Option<Val> {
        let op = self.text(node.child_by_field_name("operator")?);
        let a = self.eval(node.child_by_field_name("left")?)?;
        let b = self.eval(node.child_by_field_name("right")?)?;
        if matches!(op, "<" | ">" | "<=" | ">=" | "==" | "!=" | "&&" | "||") {
            return Some(Val { bounds: Bounds::new(0, 1), ty: INT });
        }
        if matches!(op, "<<" | ">>") {
            let ty = promote(a.ty);
            let a = a.convert(ty);
            let (bl, bh) = (b.bounds.min, b.bounds.max);
            if bl < 0 || bh >= ty.bits as i128 {
                return Some(Val::full(ty));
            }
            let corners = [a.bounds.min, a.bounds.max]
                .into_iter()
                .flat_map(|x| [bl, bh].into_iter().map(move |s| (x, s as u32)))
                .map(|(x, s)| if op == ">>" { Some(x >> s) } else { x.checked_mul(1i128 << s) })
                .collect::<Option<Vec<i128>>>();
            return Some(match corners {
                Some(c) => Val::from_math(c.iter().min().copied(), c.iter().max().copied(), ty),
                None => Val::full(ty),
            });
        }
        let ty = common_type(a.ty, b.ty);
        let (a, b) = (a.convert(ty), b.convert(ty));
        let (al, ah, bl, bh) = (a.bounds.min, a.bounds.max, b.bounds.min, b.bounds.max);
        let corners = |f: fn(i128, i128) -> Option<i128>| -> (Option<i128>, Option<i128>) {
            let vals: Option<Vec<i128>> = [(al, bl), (al, bh), (ah, bl), (ah, bh)]
                .into_iter()
                .map(|(x, y)| f(x, y))
                .collect();
            match vals {
                Some(v) => (v.iter().min().copied(), v.iter().max().copied()),
                None => (None, None),
            }
        };
        Some(match op {
            "+" => Val::from_math(al.checked_add(bl), ah.checked_add(bh), ty),
            "-" => Val::from_math(al.checked_sub(bh), ah.checked_sub(bl), ty),
            "*" => {
                let (lo, hi) = corners(i128::checked_mul);
                Val::from_math(lo, hi, ty)
            }
            "/" if bl > 0 || bh < 0 => {
                let (lo, hi) = corners(i128::checked_div);
                Val::from_math(lo, hi, ty)
            }
            "%" if bl > 0 || bh < 0 => {
                let m = bl.abs().max(bh.abs()) - 1;
                let lo = if al >= 0 { 0 } else { al.max(-m) };
                let hi = if ah <= 0 { 0 } else { ah.min(m) };
                Val::from_math(Some(lo), Some(hi), ty)
            }
            "&" if al >= 0 && bl >= 0 => Val::from_math(Some(0), Some(ah.min(bh)), ty),
            "&" if al >= 0 => Val::from_math(Some(0), Some(ah), ty),
            "&" if bl >= 0 => Val::from_math(Some(0), Some(bh), ty),
            "|" | "^" if al >= 0 && bl >= 0 => {
                let top = ah.max(bh);
                let cap = if top == 0 { 0 } else { (1i128 << (128 - top.leading_zeros())) - 1 };
                let lo = if op == "|" { al.max(bl) } else { 0 };
                Val::from_math(Some(lo), Some(cap), ty)
            }
            _ => Val::full(ty),
        })
    }

    fn eval_call(&mut self, node: Node<'t>) -> Option<Val> {
        let func = node.child_by_field_name("function")?;
        let args = node.child_by_field_name("arguments")?;
        let mut cursor = args.walk();
        let arg_nodes: Vec<Node<'t>> = args.named_children(&mut cursor).collect();
        if func.kind() == "template_function" {
            let name = self.text(func.child_by_field_name("name")?);
            let targs = func.child_by_field_name("arguments")?;
            let ty_text = self.text(targs).trim_start_matches('<').trim_end_matches('>');
            let ty = self.layout_of(ty_text)?;
            let v = self.eval(*arg_nodes.first()?)?;
            return match name {
                "static_cast" => Some(v.convert(ty)),
                // Out-of-range values throw, so only the overlap can be returned.
                "safe_int_cast" => {
                    let lo = v.bounds.min.max(ty.min());
                    let hi = v.bounds.max.min(ty.max());
                    (lo <= hi).then(|| Val { bounds: Bounds::new(lo, hi), ty })
                }
                _ => None,
            };
        }
        let name = self.text(func).trim_start_matches("std::");
        let vals: Option<Vec<Val>> = arg_nodes.iter().map(|a| self.eval(*a)).collect();
        let vals = vals?;
        let ty = vals.iter().map(|v| v.ty).reduce(common_type)?;
        let vals: Vec<Val> = vals.into_iter().map(|v| v.convert(ty)).collect();
        match (name, vals.as_slice()) {
            ("min", [a, b]) => Some(Val {
                bounds: Bounds::new(a.bounds.min.min(b.bounds.min), a.bounds.max.min(b.bounds.max)),
                ty,
            }),
            ("max", [a, b]) => Some(Val {
                bounds: Bounds::new(a.bounds.min.max(b.bounds.min), a.bounds.max.max(b.bounds.max)),
                ty,
            }),
            ("clamp", [x, lo, hi]) if lo.bounds.max <= hi.bounds.min => {
                let min = x.bounds.min.max(lo.bounds.min).min(hi.bounds.min);
                let max = x.bounds.max.min(hi.bounds.max).max(lo.bounds.max);
                Some(Val { bounds: Bounds::new(min.min(max), max), ty })
            }
            _ => None,
        }
    }
}

/// Parses an integer literal with its C++ type (decimal without suffix:
/// `int` if it fits, else `long long`).
fn parse_number(text: &str) -> Option<Val> {
    let cleaned: String = text.chars().filter(|c| *c != '\'').collect();
    let lower = cleaned.to_ascii_lowercase();
    let is_hex = lower.starts_with("0x");
    if !is_hex && (lower.contains('.') || lower.contains('e')) {
        return None;
    }
    let digits_end = lower
        .char_indices()
        .find(|(i, c)| (*c == 'u' || *c == 'l') && !(is_hex && *i < 2))
        .map(|(i, _)| i)
        .unwrap_or(lower.len());
    let (digits, suffix) = lower.split_at(digits_end);
    let value = if let Some(h) = digits.strip_prefix("0x") {
        i128::from_str_radix(h, 16).ok()?
    } else if let Some(b) = digits.strip_prefix("0b") {
        i128::from_str_radix(b, 2).ok()?
    } else if digits.len() > 1 && digits.starts_with('0') {
        i128::from_str_radix(&digits[1..], 8).ok()?
    } else {
        digits.parse::<i128>().ok()?
    };
    let unsigned = suffix.contains('u');
    let long = suffix.contains('l');
    let candidates: &[IntLayout] = match (unsigned, long) {
        (true, true) => &[IntLayout::new(64, false)],
        (false, true) => &[IntLayout::new(64, true), IntLayout::new(64, false)],
        (true, false) => &[IntLayout::new(32, false), IntLayout::new(64, false)],
        (false, false) if is_hex || digits.starts_with('0') => &[
            IntLayout::new(32, true),
            IntLayout::new(32, false),
            IntLayout::new(64, true),
            IntLayout::new(64, false),
        ],
        (false, false) => &[IntLayout::new(32, true), IntLayout::new(64, true)],
    };
    let ty = candidates.iter().copied().find(|l| l.contains(value))?;
    Some(Val { bounds: Bounds::point(value), ty })
}
