//! Black/white/grey colouring of a topology against the next segregating column.

use crate::tree::{Clade, Node, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Colour {
    Black,
    White,
    Grey,
}

/// Whether a node roots a maximal single-colour subtree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeClass {
    SubtreeRoot,
    Branch,
}

#[derive(Clone, Debug)]
pub struct ColouredTree {
    topology: Topology,
    colours: Vec<Colour>,
    classes: Vec<NodeClass>,
}

/// Leaves in `ones` are black, the rest white; an internal node takes the
/// common colour of its children, or grey.
pub fn colour_tree(topology: &Topology, ones: Clade) -> ColouredTree {
    let n_nodes = topology.n_nodes();
    let mut colours = vec![Colour::Grey; n_nodes + 1];
    for (v, colour) in colours.iter_mut().enumerate().skip(1) {
        let clade = topology.clade(v);
        *colour = if clade.is_subset(ones) {
            Colour::Black
        } else if !clade.intersects(ones) {
            Colour::White
        } else {
            Colour::Grey
        };
    }
    let mut classes = vec![NodeClass::Branch; n_nodes + 1];
    for v in 1..=n_nodes {
        let c = colours[v];
        let differs = topology.parent(v).map_or(true, |p| colours[p] != c);
        if c != Colour::Grey && differs {
            classes[v] = NodeClass::SubtreeRoot;
        }
    }
    ColouredTree {
        topology: topology.clone(),
        colours,
        classes,
    }
}

impl ColouredTree {
    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn colour(&self, node: Node) -> Colour {
        self.colours[node]
    }

    pub fn class(&self, node: Node) -> NodeClass {
        self.classes[node]
    }

    pub fn count_maximal_black_subtrees(&self) -> usize {
        (1..=self.topology.n_nodes())
            .filter(|&v| self.colours[v] == Colour::Black && self.classes[v] == NodeClass::SubtreeRoot)
            .count()
    }

    /// Candidate `(u, v)` prune/regraft pairs that can make the tree
    /// compatible with the colouring column.
    ///
    /// A black `u` under a non-black parent may join any black `v`; a white
    /// `u` under a non-white parent may join any `v` whose parent is not
    /// black (or the root).
    pub fn heuristic_sprs(&self) -> Vec<(Node, Node)> {
        let topo = &self.topology;
        let root = topo.root();
        let mut pairs = Vec::new();
        for u in 1..root {
            let p = topo.parent(u).expect("non-root");
            let cu = self.colours[u];
            if cu == Colour::Grey || self.colours[p] == cu {
                continue;
            }
            for v in 1..=root {
                if v == u || v == p || topo.is_descendant(v, u) {
                    continue;
                }
                let ok = match cu {
                    Colour::Black => self.colours[v] == Colour::Black,
                    _ => topo.parent(v).map_or(true, |pv| self.colours[pv] != Colour::Black),
                };
                if ok {
                    pairs.push((u, v));
                }
            }
        }
        pairs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caterpillar5() -> Topology {
        Topology::from_rows(5, vec![[1, 2], [3, 6], [4, 7], [5, 8]]).unwrap()
    }

    #[test]
    fn all_ones_is_one_black_subtree() {
        let topo = caterpillar5();
        let ct = colour_tree(&topo, Clade::all(5));
        assert!((1..=9).all(|v| ct.colour(v) == Colour::Black));
        assert_eq!(ct.class(9), NodeClass::SubtreeRoot);
        assert!((1..9).all(|v| ct.class(v) == NodeClass::Branch));
        assert_eq!(ct.count_maximal_black_subtrees(), 1);
        assert!(ct.heuristic_sprs().is_empty());
    }

    #[test]
    fn all_zeros_is_one_white_subtree() {
        let topo = caterpillar5();
        let ct = colour_tree(&topo, Clade::EMPTY);
        assert!((1..=9).all(|v| ct.colour(v) == Colour::White));
        assert_eq!(ct.class(9), NodeClass::SubtreeRoot);
        assert_eq!(ct.count_maximal_black_subtrees(), 0);
    }

    #[test]
    fn separated_black_leaves_form_two_subtrees() {
        // leaves 1 and 5 only meet at the root
        let topo = caterpillar5();
        let ones = Clade::leaf(1).union(Clade::leaf(5));
        let ct = colour_tree(&topo, ones);
        assert_eq!(ct.count_maximal_black_subtrees(), 2);
        assert_eq!(ct.colour(9), Colour::Grey);
        assert_eq!(ct.class(9), NodeClass::Branch);
        let pairs = ct.heuristic_sprs();
        assert!(pairs.contains(&(1, 5)));
        assert!(pairs.contains(&(5, 1)));
    }

    #[test]
    fn grey_nodes_are_branch_nodes() {
        let topo = caterpillar5();
        let ct = colour_tree(&topo, Clade::from_column(&[1, 0, 1, 0, 1]));
        for v in 1..=9 {
            if ct.colour(v) == Colour::Grey {
                assert_eq!(ct.class(v), NodeClass::Branch);
            }
        }
    }
}
