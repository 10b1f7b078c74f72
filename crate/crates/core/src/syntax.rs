//! Thin helpers over the tree-sitter C++ grammar.

use tree_sitter::{Node, Parser, Tree};

use crate::diag::{LineSpan, Position};

/// Version of the vendored C++ grammar crate, recorded in audit output.
pub const GRAMMAR_VERSION: &str = "tree-sitter-cpp 0.23";

pub fn parse_cpp(text: &str) -> Option<Tree> {
    let mut parser = Parser::new();
    parser
        .set_language(&tree_sitter_cpp::LANGUAGE.into())
        .expect("C++ grammar is ABI compatible");
    parser.parse(text, None)
}

pub fn is_callable(node: &Node) -> bool {
    matches!(node.kind(), "function_definition" | "lambda_expression")
}

pub fn node_text<'a>(node: &Node, src: &'a str) -> &'a str {
    &src[node.byte_range()]
}

pub fn node_start(node: &Node) -> Position {
    let p = node.start_position();
    Position::new(p.row as u32, p.column as u32)
}

pub fn node_end(node: &Node) -> Position {
    let p = node.end_position();
    Position::new(p.row as u32, p.column as u32)
}

pub fn node_lines(node: &Node) -> LineSpan {
    LineSpan::new(node.start_position().row as u32, node.end_position().row as u32)
}

fn contains(node: &Node, pos: Position) -> bool {
    let start = node_start(node);
    let end = node_end(node);
    start <= pos && pos < end
}

/// Line spans of outermost function definitions (methods included,
/// functions nested in other callables excluded).
pub fn function_spans(text: &str) -> Vec<LineSpan> {
    let Some(tree) = parse_cpp(text) else {
        return Vec::new();
    };
    let mut spans = Vec::new();
    collect_outer_functions(tree.root_node(), &mut spans);
    spans.sort();
    spans
}

fn collect_outer_functions(node: Node, out: &mut Vec<LineSpan>) {
    if node.kind() == "function_definition" {
        out.push(node_lines(&node));
        return;
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        collect_outer_functions(child, out);
    }
}

/// Innermost callable (function definition or lambda) containing every position.
pub fn innermost_callable<'t>(tree: &'t Tree, positions: &[Position]) -> Option<Node<'t>> {
    let mut best: Option<Node<'t>> = None;
    let mut stack = vec![tree.root_node()];
    while let Some(node) = stack.pop() {
        if !positions.iter().all(|p| contains(&node, *p)) {
            continue;
        }
        if is_callable(&node) {
            best = Some(node);
        }
        let mut cursor = node.walk();
        for child in node.children(&mut cursor) {
            stack.push(child);
        }
    }
    best
}

/// The declaration part of a callable, whitespace-collapsed: everything
/// before its body.
pub fn signature_of(node: &Node, src: &str) -> String {
    let end = node
        .child_by_field_name("body")
        .map(|b| b.start_byte())
        .unwrap_or(node.end_byte());
    src[node.start_byte()..end]
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Function definition whose declarator name covers `pos`, or which contains it.
pub fn function_definition_at<'t>(tree: &'t Tree, pos: Position) -> Option<Node<'t>> {
    let mut best = None;
    let mut stack = vec![tree.root_node()];
    while let Some(node) = stack.pop() {
        if !contains(&node, pos) {
            continue;
        }
        if node.kind() == "function_definition" {
            best = Some(node);
        }
        let mut cursor = node.walk();
        for child in node.children(&mut cursor) {
            stack.push(child);
        }
    }
    best
}

/// Whether the whole file failed to parse into anything but an error node.
pub fn is_irrecoverable(tree: &Tree) -> bool {
    let root = tree.root_node();
    if root.kind() == "ERROR" {
        return true;
    }
    let mut cursor = root.walk();
    let children: Vec<Node> = root.children(&mut cursor).collect();
    !children.is_empty() && children.iter().all(|c| c.kind() == "ERROR")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "\
int helper(int x) {
    return x % 10;
}

struct S {
    void run(int v) {
        auto f = [&](int w) {
            return w + v;
        };
        f(v);
    }
};
";

    #[test]
    fn outer_spans_include_methods() {
        let spans = function_spans(SRC);
        assert_eq!(spans, vec![LineSpan::new(0, 2), LineSpan::new(5, 10)]);
    }

    #[test]
    fn innermost_prefers_lambda() {
        let tree = parse_cpp(SRC).unwrap();
        let node = innermost_callable(&tree, &[Position::new(7, 19)]).unwrap();
        assert_eq!(node.kind(), "lambda_expression");
        assert_eq!(signature_of(&node, SRC), "[&](int w)");
        let node = innermost_callable(&tree, &[Position::new(9, 8)]).unwrap();
        assert_eq!(signature_of(&node, SRC), "void run(int v)");
    }

    #[test]
    fn file_scope_has_no_callable() {
        let tree = parse_cpp("long long a = 1;\nint b = a;\n").unwrap();
        assert!(innermost_callable(&tree, &[Position::new(1, 8)]).is_none());
    }
}
