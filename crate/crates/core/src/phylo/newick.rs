//! Newick parsing and canonical serialization.
//!
//! Grammar: `TREE := SUBTREE ";"`, `SUBTREE := LEAF | "(" SUBTREE (","
//! SUBTREE)* ")" [LABEL] [":" LENGTH]`. Branch lengths are required on every
//! non-root edge; whitespace outside labels is ignored. Serialization is
//! canonical: children are ordered by their smallest leaf label.

use std::collections::HashSet;

use thiserror::Error;

use super::{Node, PhyloTree};

#[derive(Debug, Error, PartialEq)]
pub enum NewickError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("missing branch length at byte {0}")]
    MissingLength(usize),
    #[error("duplicate leaf label '{0}'")]
    DuplicateLabel(String),
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self
            .bytes
            .get(self.pos)
            .map_or(false, |b| b.is_ascii_whitespace())
        {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        Some(b)
    }

    fn expect(&mut self, want: u8) -> Result<(), NewickError> {
        match self.bump() {
            Some(b) if b == want => Ok(()),
            _ => Err(self.err(format!("expected '{}'", want as char))),
        }
    }

    fn err(&self, message: String) -> NewickError {
        NewickError::Syntax {
            offset: self.pos.min(self.bytes.len()),
            message,
        }
    }

    fn label(&mut self) -> Result<String, NewickError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if matches!(b, b'(' | b')' | b',' | b':' | b';') || b.is_ascii_whitespace() {
                break;
            }
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected a label".into()));
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn length(&mut self) -> Result<f64, NewickError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E') {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| self.err("invalid branch length".into()))?;
        let value: f64 = text
            .parse()
            .map_err(|_| self.err("invalid branch length".into()))?;
        if !value.is_finite() || value < 0.0 {
            return Err(self.err("branch lengths must be non-negative".into()));
        }
        Ok(value)
    }
}

/// Parses one Newick tree. Reports the byte offset of any syntax error;
/// rejects missing branch lengths and duplicate leaf labels.
pub fn parse_newick(text: &str) -> Result<PhyloTree, NewickError> {
    let mut parser = Parser {
        bytes: text.as_bytes(),
        pos: 0,
    };
    let mut nodes = Vec::new();
    let root = subtree(&mut parser, &mut nodes, true)?;
    parser.expect(b';')?;
    parser.skip_ws();
    if parser.pos != parser.bytes.len() {
        return Err(parser.err("trailing characters after ';'".into()));
    }
    let mut seen = HashSet::new();
    for node in &nodes {
        if let Some(label) = &node.label {
            if !seen.insert(label.clone()) {
                return Err(NewickError::DuplicateLabel(label.clone()));
            }
        }
    }
    Ok(PhyloTree { nodes, root })
}

fn subtree(
    parser: &mut Parser<'_>,
    nodes: &mut Vec<Node>,
    is_root: bool,
) -> Result<usize, NewickError> {
    match parser.peek() {
        Some(b'(') => {
            parser.expect(b'(')?;
            let id = nodes.len();
            nodes.push(Node {
                parent: None,
                children: Vec::new(),
                label: None,
                edge: 0.0,
            });
            loop {
                let child = subtree(parser, nodes, false)?;
                nodes[child].parent = Some(id);
                nodes[id].children.push(child);
                match parser.bump() {
                    Some(b',') => continue,
                    Some(b')') => break,
                    _ => return Err(parser.err("expected ',' or ')'".into())),
                }
            }
            // optional internal label, ignored
            if parser
                .peek()
                .map_or(false, |b| !matches!(b, b':' | b',' | b')' | b';'))
            {
                parser.label()?;
            }
            finish_edge(parser, nodes, id, is_root)?;
            Ok(id)
        }
        Some(_) => {
            let label = parser.label()?;
            let id = nodes.len();
            nodes.push(Node {
                parent: None,
                children: Vec::new(),
                label: Some(label),
                edge: 0.0,
            });
            finish_edge(parser, nodes, id, is_root)?;
            Ok(id)
        }
        None => Err(parser.err("unexpected end of input".into())),
    }
}

fn finish_edge(
    parser: &mut Parser<'_>,
    nodes: &mut [Node],
    id: usize,
    is_root: bool,
) -> Result<(), NewickError> {
    if parser.peek() == Some(b':') {
        parser.expect(b':')?;
        nodes[id].edge = parser.length()?;
    } else if !is_root {
        return Err(NewickError::MissingLength(parser.pos));
    }
    Ok(())
}

/// Serializes a tree canonically: children in lexicographic order of their
/// smallest leaf label, shortest round-trip float formatting, no internal
/// labels. Parsing the output reproduces the tree.
pub fn write_newick(tree: &PhyloTree) -> String {
    let mut min_label = vec![String::new(); tree.nodes.len()];
    fill_min_labels(tree, tree.root, &mut min_label);
    let mut out = String::new();
    write_subtree(tree, tree.root, &min_label, true, &mut out);
    out.push(';');
    out
}

fn fill_min_labels(tree: &PhyloTree, u: usize, out: &mut Vec<String>) {
    if tree.nodes[u].children.is_empty() {
        out[u] = tree.nodes[u].label.clone().unwrap_or_default();
        return;
    }
    let mut best: Option<String> = None;
    for &c in &tree.nodes[u].children {
        fill_min_labels(tree, c, out);
        if best.as_ref().map_or(true, |b| out[c] < *b) {
            best = Some(out[c].clone());
        }
    }
    out[u] = best.unwrap_or_default();
}

fn write_subtree(tree: &PhyloTree, u: usize, min_label: &[String], is_root: bool, out: &mut String) {
    let node = &tree.nodes[u];
    if node.children.is_empty() {
        out.push_str(node.label.as_deref().unwrap_or(""));
    } else {
        let mut order: Vec<usize> = node.children.clone();
        order.sort_by(|&a, &b| min_label[a].cmp(&min_label[b]));
        out.push('(');
        for (i, &c) in order.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write_subtree(tree, c, min_label, false, out);
        }
        out.push(')');
    }
    if !is_root {
        out.push(':');
        out.push_str(&format!("{}", node.edge));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_three_leaf_tree() {
        let t = parse_newick("((a:1,b:1):1,c:2);").unwrap();
        assert_eq!(t.taxa(), vec!["a", "b", "c"]);
        assert!(t.is_equidistant(1e-9));
        assert!((t.height() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn parses_single_leaf() {
        let t = parse_newick("(a:1);").unwrap();
        assert_eq!(t.taxa(), vec!["a"]);
        assert!((t.height() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_equidistant_parses_but_fails_check() {
        let t = parse_newick("((a:1,b:2):1,c:2);").unwrap();
        assert!(!t.is_equidistant(1e-9));
    }

    #[test]
    fn whitespace_is_ignored() {
        let t = parse_newick(" ( ( a:1 , b:1 ) :1 , c:2 ) ;").unwrap();
        assert_eq!(t.taxa(), vec!["a", "b", "c"]);
    }

    #[test]
    fn syntax_error_carries_offset() {
        let err = parse_newick("((a:1,b:1:1,c:2);").unwrap_err();
        assert!(matches!(err, NewickError::Syntax { .. }));
    }

    #[test]
    fn missing_length_rejected() {
        assert!(matches!(
            parse_newick("((a:1,b):1,c:2);"),
            Err(NewickError::MissingLength(_))
        ));
    }

    #[test]
    fn duplicate_label_rejected() {
        assert_eq!(
            parse_newick("((a:1,a:1):1,c:2);").unwrap_err(),
            NewickError::DuplicateLabel("a".into())
        );
    }

    #[test]
    fn canonical_write_roundtrip() {
        let text = "((a:1,b:1):1,c:2);";
        let t = parse_newick(text).unwrap();
        assert_eq!(write_newick(&t), text);
        // child order normalizes
        let t2 = parse_newick("(c:2,(b:1,a:1):1);").unwrap();
        assert_eq!(write_newick(&t2), text);
    }

    #[test]
    fn normalize_heights_repairs_pendants() {
        let mut t = parse_newick("((a:1,b:2):1,c:2);").unwrap();
        t.normalize_heights().unwrap();
        assert!(t.is_equidistant(1e-12));
        assert_eq!(write_newick(&t), "((a:2,b:2):1,c:3);");
    }
}
