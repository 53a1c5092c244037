//! Newick text with branch lengths; leaf labels are `1..=N`.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::tree::{canonicalize, Node, RawNode, RawTree, Tree, MAX_LEAVES};

pub fn to_newick(tree: &Tree) -> String {
    let mut out = String::new();
    write_node(tree, tree.topology().root(), &mut out);
    out.push(';');
    out
}

fn write_node(tree: &Tree, node: Node, out: &mut String) {
    let topo = tree.topology();
    match topo.children(node) {
        Some([a, b]) => {
            out.push('(');
            write_node(tree, a, out);
            out.push(',');
            write_node(tree, b, out);
            out.push(')');
        }
        None => {
            let _ = write!(out, "{node}");
        }
    }
    if topo.parent(node).is_some() {
        let _ = write!(out, ":{}", tree.branch_length(node));
    }
}

/// Parses a rooted binary tree; an internal node's time is the largest
/// child time plus branch length.
pub fn parse_newick(text: &str) -> Result<Tree> {
    let mut p = Parser {
        bytes: text.as_bytes(),
        pos: 0,
        internal: Vec::new(),
        leaves: Vec::new(),
    };
    p.skip_ws();
    p.subtree()?;
    p.skip_ws();
    if p.peek() == Some(b':') {
        p.pos += 1;
        p.number()?;
        p.skip_ws();
    }
    p.expect(b';')?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(p.error("trailing characters after ';'"));
    }
    let n = p.leaves.len();
    if n < 2 {
        return Err(p.error("tree needs at least two leaves"));
    }
    let mut sorted = p.leaves.clone();
    sorted.sort_unstable();
    if sorted.iter().enumerate().any(|(i, &l)| l != i + 1) {
        return Err(Error::Newick {
            position: 0,
            message: format!("leaf labels must be exactly 1..={n}"),
        });
    }
    canonicalize(&RawTree {
        n_leaves: n,
        internal: p.internal,
    })
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    internal: Vec<RawNode>,
    leaves: Vec<Node>,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Newick {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|b| b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, b: u8) -> Result<()> {
        self.skip_ws();
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", b as char)))
        }
    }

    fn token(&mut self) -> &str {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|b| !matches!(b, b'(' | b')' | b',' | b':' | b';') && !b.is_ascii_whitespace())
        {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("")
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let tok = self.token().to_string();
        tok.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite() && *x >= 0.0)
            .ok_or(Error::Newick {
                position: start,
                message: format!("invalid branch length '{tok}'"),
            })
    }

    /// Returns the node label and its time.
    fn subtree(&mut self) -> Result<(Node, f64)> {
        self.skip_ws();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let a = self.child()?;
            self.expect(b',')?;
            let b = self.child()?;
            self.skip_ws();
            if self.peek() == Some(b',') {
                return Err(self.error("only binary trees are supported"));
            }
            self.expect(b')')?;
            self.skip_ws();
            // optional internal label, ignored
            self.token();
            let label = MAX_LEAVES + 1 + self.internal.len();
            let time = a.1.max(b.1);
            self.internal.push(RawNode {
                label,
                children: [a.0, b.0],
                time,
            });
            Ok((label, time))
        } else {
            let start = self.pos;
            let tok = self.token().to_string();
            let leaf: Node = tok.parse().map_err(|_| Error::Newick {
                position: start,
                message: format!("invalid leaf label '{tok}'"),
            })?;
            if leaf == 0 || leaf > MAX_LEAVES {
                return Err(Error::Newick {
                    position: start,
                    message: format!("leaf label {leaf} outside 1..={MAX_LEAVES}"),
                });
            }
            self.leaves.push(leaf);
            Ok((leaf, 0.0))
        }
    }

    /// A subtree followed by `:length`; returns its label and its parent's time.
    fn child(&mut self) -> Result<(Node, f64)> {
        let (label, time) = self.subtree()?;
        self.expect(b':')?;
        let len = self.number()?;
        Ok((label, time + len))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::Topology;

    #[test]
    fn two_leaf_tree() {
        let topo = Topology::from_rows(2, vec![[1, 2]]).unwrap();
        let tree = Tree::new(topo, &[0., 0., 1.]).unwrap();
        assert_eq!(to_newick(&tree), "(1:1,2:1);");
        assert_eq!(parse_newick("(1:1,2:1);").unwrap(), tree);
    }

    #[test]
    fn round_trip_five_leaves() {
        let topo = Topology::from_rows(5, vec![[2, 4], [1, 3], [5, 6], [7, 8]]).unwrap();
        let tree = Tree::new(topo, &[0., 0., 0., 0., 0., 0.25, 0.7, 1.3, 2.9]).unwrap();
        let back = parse_newick(&to_newick(&tree)).unwrap();
        assert_eq!(back.topology(), tree.topology());
        for (a, b) in back.times().iter().zip(tree.times()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn malformed_inputs_report_errors() {
        for bad in ["((1:1,2:1);", "(1:1,2:1)", "(1:1,2:x);", "(1:1,3:1);", "(1:1,2:1,3:1);", "(1:1,2:1);x"] {
            assert!(
                matches!(parse_newick(bad), Err(Error::Newick { .. })),
                "{bad} parsed"
            );
        }
    }

    #[test]
    fn whitespace_and_root_length_are_accepted() {
        let tree = parse_newick(" ( 2 : 0.5 , 1 : 0.5 ) : 0 ;\n").unwrap();
        assert_eq!(tree.time(3), 0.5);
    }
}
