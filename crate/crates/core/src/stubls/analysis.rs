//! Declaration indexing and clang-style diagnostics for the stub server.

use std::path::{Path, PathBuf};

use tree_sitter::{Node, Point, Tree};

use crate::diag::{Diagnostic, Position, Range, Severity};
use crate::int_types::{normalize_type_name, IntLayout, TypeTable};
use crate::syntax::{node_end, node_start, node_text, parse_cpp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeclKind {
    Variable,
    Param,
    Function,
    Type,
}

#[derive(Debug, Clone)]
pub struct Decl {
    pub name: String,
    pub kind: DeclKind,
    /// Declared type; the return type for functions.
    pub ty: String,
    pub params: Vec<String>,
    pub file: PathBuf,
    pub name_range: Range,
    /// Byte range of the enclosing callable, `None` at namespace/class scope.
    pub scope: Option<(usize, usize)>,
    pub decl_start: usize,
    /// Source text shown in hover cards.
    pub display: String,
    pub is_template: bool,
}

/// A parsed document with its declarations (own and from quoted includes).
pub struct Analysis {
    pub file: PathBuf,
    pub text: String,
    pub tree: Tree,
    pub decls: Vec<Decl>,
    pub include_errors: Vec<Diagnostic>,
}

const BUILTIN_CASTS: &[&str] = &["static_cast", "const_cast", "reinterpret_cast", "dynamic_cast"];

impl Analysis {
    /// `load` resolves quoted includes to their text.
    pub fn new(file: &Path, text: &str, load: &dyn Fn(&Path) -> Option<String>) -> Option<Self> {
        let tree = parse_cpp(text)?;
        let mut decls = Vec::new();
        collect_decls(tree.root_node(), text, file, None, false, &mut decls);
        let mut include_errors = Vec::new();
        let root = tree.root_node();
        let mut cursor = root.walk();
        let top: Vec<Node> = root.children(&mut cursor).collect();
        for node in top {
            if node.kind() != "preproc_include" {
                continue;
            }
            let Some(path_node) = node.child_by_field_name("path") else {
                continue;
            };
            if path_node.kind() != "string_literal" {
                continue;
            }
            let name = node_text(&path_node, text).trim_matches('"');
            let target = file.parent().unwrap_or(Path::new(".")).join(name);
            match load(&target).and_then(|t| parse_cpp(&t).map(|tree| (t, tree))) {
                Some((htext, htree)) => {
                    collect_decls(htree.root_node(), &htext, &target, None, false, &mut decls)
                }
                None => include_errors.push(Diagnostic {
                    file: file.to_path_buf(),
                    range: Range::new(node_start(&path_node), node_end(&path_node)),
                    severity: Severity::Error,
                    code: "pp_file_not_found".into(),
                    message: format!("'{name}' file not found"),
                    from_macro: false,
                }),
            }
        }
        drop(cursor);
        Some(Self { file: file.to_path_buf(), text: text.to_string(), tree, decls, include_errors })
    }

    /// The identifier token under `pos`, if any.
    pub fn identifier_at(&self, pos: Position) -> Option<Node<'_>> {
        let point = Point::new(pos.line as usize, pos.col as usize);
        let node = self.tree.root_node().descendant_for_point_range(point, point)?;
        let is_ident = matches!(node.kind(), "identifier" | "field_identifier" | "type_identifier");
        let start = node_start(&node);
        let end = node_end(&node);
        (is_ident && start <= pos && pos < end).then_some(node)
    }

    /// Resolves `name` as seen from byte offset `at` in this document.
    pub fn resolve(&self, name: &str, at: usize) -> Option<&Decl> {
        let own = |d: &&Decl| d.file == self.file;
        let scoped = self
            .decls
            .iter()
            .filter(|d| d.name == name && d.kind != DeclKind::Function)
            .filter(own)
            .filter(|d| matches!(d.scope, Some((s, e)) if s <= at && at < e) && d.decl_start <= at)
            .min_by_key(|d| {
                let (s, e) = d.scope.unwrap();
                (e - s, usize::MAX - d.decl_start)
            });
        scoped
            .or_else(|| {
                self.decls.iter().find(|d| {
                    d.name == name
                        && d.scope.is_none()
                        && d.kind != DeclKind::Function
                        && (d.file != self.file || d.decl_start <= at)
                })
            })
            .or_else(|| self.decls.iter().find(|d| d.name == name && d.kind == DeclKind::Function))
    }

    pub fn resolve_node(&self, node: Node) -> Option<&Decl> {
        self.resolve(node_text(&node, &self.text), node.start_byte())
    }

    fn is_type_name(&self, name: &str) -> bool {
        self.decls.iter().any(|d| d.kind == DeclKind::Type && d.name == name)
            || TypeTable::default().layout(name).is_some()
    }

    /// Everything a clang front end would report for the document that the
    /// stub understands: syntax errors, unresolved names, and implicit
    /// integer narrowing.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = self.include_errors.clone();
        let root = self.tree.root_node();
        self.syntax_errors(root, &mut out);
        self.walk(root, false, &mut out);
        out.sort();
        out.dedup();
        out
    }

    fn error(&self, node: &Node, code: &str, message: String) -> Diagnostic {
        Diagnostic {
            file: self.file.clone(),
            range: Range::new(node_start(node), node_end(node)),
            severity: Severity::Error,
            code: code.into(),
            message,
            from_macro: false,
        }
    }

    fn syntax_errors(&self, node: Node, out: &mut Vec<Diagnostic>) {
        if node.is_error() || node.is_missing() {
            let message = if node.is_missing() {
                format!("expected '{}'", node.kind())
            } else {
                "expected expression".to_string()
            };
            out.push(self.error(&node, "expected_expression", message));
            return;
        }
        if !node.has_error() {
            return;
        }
        let mut cursor = node.walk();
        for child in node.children(&mut cursor) {
            self.syntax_errors(child, out);
        }
    }

    fn walk(&self, node: Node, in_template: bool, out: &mut Vec<Diagnostic>) {
        let in_template = in_template || node.kind() == "template_declaration";
        if !in_template {
            self.check_node(node, out);
        }
        let mut cursor = node.walk();
        for child in node.children(&mut cursor) {
            self.walk(child, in_template, out);
        }
    }

    fn check_node(&self, node: Node, out: &mut Vec<Diagnostic>) {
        match node.kind() {
            "identifier" if is_value_use(&node) => {
                let name = node_text(&node, &self.text);
                if self.resolve_node(node).is_none() && !BUILTIN_CASTS.contains(&name) {
                    out.push(self.error(
                        &node,
                        "undeclared_var_use",
                        format!("use of undeclared identifier '{name}'"),
                    ));
                }
            }
            "type_identifier" => {
                let name = node_text(&node, &self.text);
                let qualified = node.parent().is_some_and(|p| p.kind() == "qualified_identifier");
                if !qualified && !self.is_type_name(name) && !is_declaring_type(&node) {
                    out.push(self.error(
                        &node,
                        "unknown_typename",
                        format!("unknown type name '{name}'"),
                    ));
                }
            }
            "declaration" => {
                let Some(ty) = node.child_by_field_name("type") else {
                    return;
                };
                let ty = normalize_type_name(node_text(&ty, &self.text));
                if ty == "auto" {
                    return;
                }
                let mut cursor = node.walk();
                for d in node.children_by_field_name("declarator", &mut cursor) {
                    if d.kind() != "init_declarator" {
                        continue;
                    }
                    let plain = d
                        .child_by_field_name("declarator")
                        .is_some_and(|n| n.kind() == "identifier");
                    if let (true, Some(value)) = (plain, d.child_by_field_name("value")) {
                        self.check_conversion(value, &ty, out);
                    }
                }
            }
            "assignment_expression" => {
                let op = node.child_by_field_name("operator").map(|o| node_text(&o, &self.text));
                if op != Some("=") {
                    return;
                }
                let (Some(left), Some(right)) =
                    (node.child_by_field_name("left"), node.child_by_field_name("right"))
                else {
                    return;
                };
                if left.kind() == "identifier" {
                    if let Some(decl) = self.resolve_node(left) {
                        if decl.kind != DeclKind::Function {
                            let ty = decl.ty.clone();
                            self.check_conversion(right, &ty, out);
                        }
                    }
                }
            }
            "return_statement" => {
                let Some(value) = node.named_child(0) else {
                    return;
                };
                if let Some(ty) = self.enclosing_return_type(node) {
                    self.check_conversion(value, &ty, out);
                }
            }
            "call_expression" => {
                let Some(func) = node.child_by_field_name("function") else {
                    return;
                };
                if !matches!(func.kind(), "identifier" | "field_identifier") {
                    return;
                }
                let Some(decl) = self.resolve_node(func) else {
                    return;
                };
                if decl.kind != DeclKind::Function {
                    return;
                }
                let params = decl.params.clone();
                let Some(args) = node.child_by_field_name("arguments") else {
                    return;
                };
                let mut cursor = args.walk();
                for (arg, ty) in args.named_children(&mut cursor).zip(params.iter()) {
                    self.check_conversion(arg, ty, out);
                }
            }
            _ => {}
        }
    }

    fn enclosing_return_type(&self, node: Node) -> Option<String> {
        let mut cur = node.parent();
        while let Some(n) = cur {
            match n.kind() {
                "function_definition" => {
                    let ty = n.child_by_field_name("type")?;
                    return Some(normalize_type_name(node_text(&ty, &self.text)));
                }
                // Lambdas without a trailing return type deduce it.
                "lambda_expression" => return None,
                _ => cur = n.parent(),
            }
        }
        None
    }

    fn check_conversion(&self, expr: Node, target: &str, out: &mut Vec<Diagnostic>) {
        let table = TypeTable::default();
        let Some(target_layout) = table.layout(target) else {
            return;
        };
        let Some(source) = self.type_of(expr) else {
            return;
        };
        let Some(source_layout) = table.layout(&source) else {
            return;
        };
        if let Some(v) = constant_value(expr, &self.text) {
            if target_layout.contains(v) {
                return;
            }
        }
        // Precision loss only; same-width sign changes are -Wsign-conversion.
        if source_layout.bits <= target_layout.bits {
            return;
        }
        let code = if source_layout.bits == 64 && target_layout.bits == 32 {
            "-Wshorten-64-to-32"
        } else {
            "-Wimplicit-int-conversion"
        };
        out.push(Diagnostic {
            file: self.file.clone(),
            range: Range::new(node_start(&expr), node_end(&expr)),
            severity: Severity::Warning,
            code: code.into(),
            message: format!(
                "implicit conversion loses integer precision: '{source}' to '{target}'"
            ),
            from_macro: false,
        });
    }

    /// Static type of an expression, spelled the way clang prints it.
    pub fn type_of(&self, expr: Node) -> Option<String> {
        let table = TypeTable::default();
        match expr.kind() {
            "number_literal" => literal_type(node_text(&expr, &self.text)),
            "char_literal" => Some("char".into()),
            "true" | "false" => Some("bool".into()),
            "identifier" => {
                let decl = self.resolve_node(expr)?;
                (decl.kind != DeclKind::Function).then(|| decl.ty.clone())
            }
            "parenthesized_expression" => self.type_of(expr.named_child(0)?),
            "cast_expression" => {
                let ty = expr.child_by_field_name("type")?;
                Some(normalize_type_name(node_text(&ty, &self.text)))
            }
            "call_expression" => {
                let func = expr.child_by_field_name("function")?;
                match func.kind() {
                    "template_function" => {
                        let name = node_text(&func.child_by_field_name("name")?, &self.text);
                        let args = func.child_by_field_name("arguments")?;
                        let ty = node_text(&args, &self.text);
                        let ty = ty.trim_start_matches('<').trim_end_matches('>');
                        (BUILTIN_CASTS.contains(&name)
                            || self.resolve(name, func.start_byte()).is_some_and(|d| d.is_template))
                        .then(|| normalize_type_name(ty))
                    }
                    "identifier" | "field_identifier" => {
                        let decl = self.resolve_node(func)?;
                        (decl.kind == DeclKind::Function).then(|| decl.ty.clone())
                    }
                    _ => None,
                }
            }
            "unary_expression" => {
                let op = node_text(&expr.child_by_field_name("operator")?, &self.text);
                if op == "!" {
                    return Some("bool".into());
                }
                let inner = self.type_of(expr.child_by_field_name("argument")?)?;
                Some(promoted(&inner, &table))
            }
            "update_expression" => self.type_of(expr.child_by_field_name("argument")?),
            "assignment_expression" => self.type_of(expr.child_by_field_name("left")?),
            "conditional_expression" => {
                let a = self.type_of(expr.child_by_field_name("consequence")?)?;
                let b = self.type_of(expr.child_by_field_name("alternative")?)?;
                Some(common(&a, &b, &table))
            }
            "binary_expression" => {
                let op = node_text(&expr.child_by_field_name("operator")?, &self.text);
                if matches!(op, "<" | ">" | "<=" | ">=" | "==" | "!=" | "&&" | "||") {
                    return Some("bool".into());
                }
                let a = self.type_of(expr.child_by_field_name("left")?)?;
                if matches!(op, "<<" | ">>") {
                    return Some(promoted(&a, &table));
                }
                let b = self.type_of(expr.child_by_field_name("right")?)?;
                Some(common(&a, &b, &table))
            }
            _ => None,
        }
    }
}

fn is_value_use(node: &Node) -> bool {
    let Some(parent) = node.parent() else {
        return false;
    };
    let field = |name: &str| {
        parent
            .child_by_field_name(name)
            .is_some_and(|c| c.id() == node.id())
    };
    match parent.kind() {
        "binary_expression" | "unary_expression" | "update_expression" | "argument_list"
        | "parenthesized_expression" | "conditional_expression" | "return_statement"
        | "expression_statement" | "subscript_expression" | "condition_clause"
        | "assignment_expression" | "pointer_expression" => true,
        "init_declarator" => field("value"),
        "call_expression" => field("function"),
        "template_function" => field("name"),
        "cast_expression" => field("value"),
        "field_expression" => field("argument"),
        _ => false,
    }
}

fn is_declaring_type(node: &Node) -> bool {
    node.parent().is_some_and(|p| {
        matches!(
            p.kind(),
            "struct_specifier" | "class_specifier" | "union_specifier" | "enum_specifier"
                | "type_definition" | "alias_declaration" | "type_parameter_declaration"
        )
    })
}

fn promoted(ty: &str, table: &TypeTable) -> String {
    match table.layout(ty) {
        Some(l) if l.bits < 32 => "int".into(),
        _ => ty.to_string(),
    }
}

/// Usual arithmetic conversions, keeping the winning operand's spelling.
fn common(a: &str, b: &str, table: &TypeTable) -> String {
    let (a, b) = (promoted(a, table), promoted(b, table));
    let (Some(la), Some(lb)) = (table.layout(&a), table.layout(&b)) else {
        return a;
    };
    let pick = |x: IntLayout, y: IntLayout| -> bool {
        // true → first operand's type wins
        if x.signed == y.signed {
            return x.bits >= y.bits;
        }
        if x.signed {
            x.bits > y.bits
        } else {
            x.bits >= y.bits
        }
    };
    if pick(la, lb) {
        a
    } else {
        b
    }
}

fn literal_type(text: &str) -> Option<String> {
    let lower = text.to_ascii_lowercase();
    if !lower.starts_with("0x") && (lower.contains('.') || lower.contains('e')) {
        return Some("double".into());
    }
    let suffix: String = lower.chars().rev().take_while(|c| *c == 'u' || *c == 'l').collect();
    let unsigned = suffix.contains('u');
    let longs = suffix.matches('l').count();
    let value = constant_literal(text)?;
    let ty = match (unsigned, longs) {
        (true, 2) => "unsigned long long",
        (false, 2) => "long long",
        (true, 1) => "unsigned long",
        (false, 1) => "long",
        (true, _) if value <= u32::MAX as i128 => "unsigned int",
        (true, _) => "unsigned long",
        (false, _) if value <= i32::MAX as i128 => "int",
        (false, _) => "long",
    };
    Some(ty.into())
}

fn constant_literal(text: &str) -> Option<i128> {
    let cleaned: String = text.chars().filter(|c| *c != '\'').collect();
    let lower = cleaned.to_ascii_lowercase();
    let digits = lower.trim_end_matches(['u', 'l']);
    if let Some(h) = digits.strip_prefix("0x") {
        i128::from_str_radix(h, 16).ok()
    } else if digits.len() > 1 && digits.starts_with('0') {
        i128::from_str_radix(&digits[1..], 8).ok()
    } else {
        digits.parse().ok()
    }
}

fn constant_value(expr: Node, src: &str) -> Option<i128> {
    match expr.kind() {
        "number_literal" => constant_literal(node_text(&expr, src)),
        "parenthesized_expression" => constant_value(expr.named_child(0)?, src),
        "unary_expression" => {
            let op = node_text(&expr.child_by_field_name("operator")?, src);
            let v = constant_value(expr.child_by_field_name("argument")?, src)?;
            match op {
                "-" => Some(-v),
                "+" => Some(v),
                _ => None,
            }
        }
        _ => None,
    }
}

fn declarator_name<'t>(node: Node<'t>) -> Option<Node<'t>> {
    match node.kind() {
        "identifier" | "field_identifier" => Some(node),
        "qualified_identifier" => node.child_by_field_name("name").and_then(declarator_name),
        "init_declarator" | "function_declarator" | "reference_declarator"
        | "pointer_declarator" | "array_declarator" => node
            .child_by_field_name("declarator")
            .or_else(|| node.named_child(0))
            .and_then(declarator_name),
        _ => None,
    }
}

fn params_of<'t>(declarator: Node<'t>, src: &str) -> Vec<(String, Option<Node<'t>>, String)> {
    let mut out = Vec::new();
    let Some(params) = declarator.child_by_field_name("parameters") else {
        return out;
    };
    let mut cursor = params.walk();
    for p in params.named_children(&mut cursor) {
        if p.kind() != "parameter_declaration" {
            continue;
        }
        let ty = p
            .child_by_field_name("type")
            .map(|t| normalize_type_name(node_text(&t, src)))
            .unwrap_or_default();
        let name = p.child_by_field_name("declarator").and_then(declarator_name);
        out.push((ty, name, node_text(&p, src).to_string()));
    }
    out
}

fn first_line(text: &str) -> String {
    text.lines().next().unwrap_or_default().trim().trim_end_matches('{').trim().to_string()
}

fn collect_decls(
    node: Node,
    src: &str,
    file: &Path,
    scope: Option<(usize, usize)>,
    in_template: bool,
    out: &mut Vec<Decl>,
) {
    let mk = |name: Node, kind, ty: String, params: Vec<String>, display: String, scope, tmpl| Decl {
        name: node_text(&name, src).to_string(),
        kind,
        ty,
        params,
        file: file.to_path_buf(),
        name_range: Range::new(node_start(&name), node_end(&name)),
        scope,
        decl_start: name.start_byte(),
        display,
        is_template: tmpl,
    };
    match node.kind() {
        "template_declaration" => {
            let mut cursor = node.walk();
            for child in node.children(&mut cursor) {
                collect_decls(child, src, file, scope, true, out);
            }
            return;
        }
        "function_definition" | "lambda_expression" => {
            let body_scope = Some((node.start_byte(), node.end_byte()));
            let declarator = node.child_by_field_name("declarator");
            if node.kind() == "function_definition" {
                let ret = node
                    .child_by_field_name("type")
                    .map(|t| normalize_type_name(node_text(&t, src)))
                    .unwrap_or_default();
                if let Some(decl) = declarator {
                    let fdecl = find_function_declarator(decl);
                    if let (Some(fd), Some(name)) = (fdecl, declarator_name(decl)) {
                        let params = params_of(fd, src);
                        out.push(mk(
                            name,
                            DeclKind::Function,
                            ret,
                            params.iter().map(|p| p.0.clone()).collect(),
                            first_line(node_text(&node, src)),
                            scope,
                            in_template,
                        ));
                    }
                }
            }
            let param_holder = if node.kind() == "lambda_expression" {
                declarator
            } else {
                declarator.and_then(find_function_declarator)
            };
            if let Some(fd) = param_holder {
                for (ty, name, display) in params_of(fd, src) {
                    if let Some(name) = name {
                        out.push(mk(name, DeclKind::Param, ty, Vec::new(), display, body_scope, false));
                    }
                }
            }
            if let Some(body) = node.child_by_field_name("body") {
                collect_decls(body, src, file, body_scope, in_template, out);
            }
            return;
        }
        "declaration" | "field_declaration" => {
            let ty = node
                .child_by_field_name("type")
                .map(|t| normalize_type_name(node_text(&t, src)))
                .unwrap_or_default();
            let mut cursor = node.walk();
            let declarators: Vec<Node> =
                node.children_by_field_name("declarator", &mut cursor).collect();
            for d in declarators {
                if let Some(fd) = find_function_declarator(d) {
                    if let Some(name) = declarator_name(fd) {
                        let params = params_of(fd, src);
                        out.push(mk(
                            name,
                            DeclKind::Function,
                            ty.clone(),
                            params.iter().map(|p| p.0.clone()).collect(),
                            first_line(node_text(&node, src)).trim_end_matches(';').to_string(),
                            scope,
                            in_template,
                        ));
                    }
                    continue;
                }
                let Some(name) = declarator_name(d) else {
                    continue;
                };
                let mut var_ty = ty.clone();
                if var_ty == "auto" {
                    var_ty = d
                        .child_by_field_name("value")
                        .and_then(|v| infer_shallow(v, src, out))
                        .unwrap_or_else(|| "auto".into());
                }
                let display = node_text(&node, src).trim().trim_end_matches(';').to_string();
                out.push(mk(name, DeclKind::Variable, var_ty, Vec::new(), display, scope, false));
            }
        }
        "for_range_loop" => {
            if let (Some(ty), Some(d)) =
                (node.child_by_field_name("type"), node.child_by_field_name("declarator"))
            {
                if let Some(name) = declarator_name(d) {
                    let ty = normalize_type_name(node_text(&ty, src));
                    let display = node_text(&name, src).to_string();
                    out.push(mk(name, DeclKind::Variable, ty, Vec::new(), display, scope, false));
                }
            }
        }
        "struct_specifier" | "class_specifier" | "type_definition" | "alias_declaration"
        | "type_parameter_declaration" => {
            let name = node
                .child_by_field_name("name")
                .or_else(|| node.child_by_field_name("declarator"))
                .or_else(|| node.named_child(0));
            if let Some(name) = name.filter(|n| n.kind() == "type_identifier") {
                let display = first_line(node_text(&node, src));
                out.push(mk(name, DeclKind::Type, String::new(), Vec::new(), display, scope, false));
            }
        }
        _ => {}
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        collect_decls(child, src, file, scope, in_template, out);
    }
}

fn find_function_declarator<'t>(node: Node<'t>) -> Option<Node<'t>> {
    if node.kind() == "function_declarator" {
        return Some(node);
    }
    match node.kind() {
        "reference_declarator" | "pointer_declarator" => {
            node.named_child(0).and_then(find_function_declarator)
        }
        _ => None,
    }
}

/// `auto` deduction from calls and variables already indexed.
fn infer_shallow(value: Node, src: &str, known: &[Decl]) -> Option<String> {
    match value.kind() {
        "number_literal" => literal_type(node_text(&value, src)),
        "call_expression" => {
            let func = value.child_by_field_name("function")?;
            if func.kind() == "template_function" {
                let args = func.child_by_field_name("arguments")?;
                let ty = node_text(&args, src).trim_start_matches('<').trim_end_matches('>');
                return Some(normalize_type_name(ty));
            }
            let name = node_text(&func, src);
            known
                .iter()
                .rev()
                .find(|d| d.name == name && d.kind == DeclKind::Function)
                .map(|d| d.ty.clone())
        }
        "identifier" => {
            let name = node_text(&value, src);
            known
                .iter()
                .rev()
                .find(|d| d.name == name && d.kind != DeclKind::Function)
                .map(|d| d.ty.clone())
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn analyze(text: &str) -> Analysis {
        Analysis::new(Path::new("/w/a.cpp"), text, &|_| None).unwrap()
    }

    const SAMPLE: &str = "\
int getSomeValue() {
    return 7;
}

void f() {
    long long bigNumber = getSomeValue();
    int smallerNumber = bigNumber;
}
";

    #[test]
    fn flags_64_to_32_narrowing() {
        let diags = analyze(SAMPLE).diagnostics();
        assert_eq!(diags.len(), 1, "{diags:?}");
        let d = &diags[0];
        assert_eq!(d.code, "-Wshorten-64-to-32");
        assert_eq!(d.message, "implicit conversion loses integer precision: 'long long' to 'int'");
        assert_eq!(d.range.start, Position::new(6, 24));
        assert_eq!(d.range.end, Position::new(6, 33));
    }

    #[test]
    fn explicit_cast_and_auto_silence_the_warning() {
        let fixed = SAMPLE.replace("= bigNumber;", "= static_cast<int>(bigNumber);");
        assert!(analyze(&fixed).diagnostics().is_empty());
        let auto = SAMPLE.replace("long long bigNumber", "auto bigNumber");
        assert!(analyze(&auto).diagnostics().is_empty());
    }

    #[test]
    fn unknown_identifier_is_an_error() {
        let broken = SAMPLE.replace("= bigNumber;", "= static_cast<int>(bigNumbr);");
        let diags = analyze(&broken).diagnostics();
        assert!(diags.iter().any(|d| d.severity == Severity::Error
            && d.message == "use of undeclared identifier 'bigNumbr'"));
    }

    #[test]
    fn undeclared_template_helper_is_an_error() {
        let text = "void f(long long v) { int x = safe_int_cast<int>(v); }\n";
        let diags = analyze(text).diagnostics();
        assert!(diags.iter().any(|d| d.message.contains("'safe_int_cast'")), "{diags:?}");
    }

    #[test]
    fn call_arguments_and_returns_are_checked() {
        let text = "\
void setLevel(short level);
void apply(int raw) { setLevel(raw); }
short narrow(int v) { return v; }
";
        let diags = analyze(text).diagnostics();
        let codes: Vec<_> = diags.iter().map(|d| (d.range.start.line, d.code.as_str())).collect();
        assert_eq!(codes, vec![(1, "-Wimplicit-int-conversion"), (2, "-Wimplicit-int-conversion")]);
    }

    #[test]
    fn constants_that_fit_do_not_warn() {
        assert!(analyze("void f() { short s = 12; unsigned char c = -0; }").diagnostics().is_empty());
    }

    #[test]
    fn resolves_shadowing_to_innermost_scope() {
        let text = "long long v = 1;\nvoid f() { int v = 2; int w = v; }\n";
        let a = analyze(text);
        assert!(a.diagnostics().is_empty());
        let at = text.rfind('v').unwrap();
        assert_eq!(a.resolve("v", at).unwrap().ty, "int");
    }
}
