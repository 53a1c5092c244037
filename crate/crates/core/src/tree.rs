//! Rooted binary coalescent trees in canonical ranked form.
//!
//! Nodes are numbered `1..=2N-1`. Leaves are `1..=N`; internal nodes are
//! `N+1..=2N-1` in increasing time order, so the root is always `2N-1` and a
//! topology also fixes the time ranking of its coalescences. Label `0` is
//! reserved for "no node": the identity SPR operation uses it, and so does the
//! parent slot of the root.

use std::fmt;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};

pub type Node = usize;

/// Upper bound on the number of leaves (leaf sets are `u128` bitmasks).
pub const MAX_LEAVES: usize = 128;

/// Internal node times closer than this are treated as tied.
pub const TIME_TOLERANCE: f64 = 1e-12;

/// A set of leaves, bit `n - 1` standing for leaf `n`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Clade(pub u128);

impl Clade {
    pub const EMPTY: Clade = Clade(0);

    pub fn leaf(n: Node) -> Clade {
        debug_assert!((1..=MAX_LEAVES).contains(&n));
        Clade(1u128 << (n - 1))
    }

    pub fn all(n_leaves: usize) -> Clade {
        if n_leaves >= 128 {
            Clade(u128::MAX)
        } else {
            Clade((1u128 << n_leaves) - 1)
        }
    }

    /// Leaves carrying a `1` in a binary data column.
    pub fn from_column(column: &[u8]) -> Clade {
        column
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0)
            .fold(Clade::EMPTY, |acc, (i, _)| acc.union(Clade::leaf(i + 1)))
    }

    pub fn to_column(self, n_leaves: usize) -> Vec<u8> {
        (1..=n_leaves).map(|n| self.contains(n) as u8).collect()
    }

    pub fn contains(self, leaf: Node) -> bool {
        leaf >= 1 && leaf <= MAX_LEAVES && self.0 & (1u128 << (leaf - 1)) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Clade) -> Clade {
        Clade(self.0 | other.0)
    }

    pub fn minus(self, other: Clade) -> Clade {
        Clade(self.0 & !other.0)
    }

    pub fn intersects(self, other: Clade) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_subset(self, of: Clade) -> bool {
        self.0 & !of.0 == 0
    }

    pub fn leaves(self) -> impl Iterator<Item = Node> {
        let bits = self.0;
        (0..128usize).filter(move |i| bits & (1u128 << i) != 0).map(|i| i + 1)
    }
}

impl fmt::Debug for Clade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.leaves()).finish()
    }
}

/// Where a mutation must sit for a column to be explained by a topology.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MutationBranch {
    /// The column is all zero.
    NoMutation,
    /// The column's carriers are exactly the leaves below this branch.
    Branch(Node),
    /// No single branch explains the column.
    Incompatible,
}

/// Canonical ranked topology: row `k` holds the children of node `N+1+k`,
/// smaller label first.
#[derive(Clone, Debug)]
pub struct Topology {
    n: usize,
    rows: Vec<[Node; 2]>,
    parent: Vec<Node>,
    clades: Vec<Clade>,
}

impl PartialEq for Topology {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.rows == other.rows
    }
}

impl Eq for Topology {}

impl Hash for Topology {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.n.hash(state);
        self.rows.hash(state);
    }
}

impl Topology {
    pub fn from_rows(n_leaves: usize, rows: Vec<[Node; 2]>) -> Result<Self> {
        if !(2..=MAX_LEAVES).contains(&n_leaves) {
            return Err(Error::InvalidTopology(format!(
                "leaf count {n_leaves} outside 2..={MAX_LEAVES}"
            )));
        }
        if rows.len() != n_leaves - 1 {
            return Err(Error::InvalidTopology(format!(
                "expected {} rows, found {}",
                n_leaves - 1,
                rows.len()
            )));
        }
        let n_nodes = 2 * n_leaves - 1;
        let mut parent = vec![0; n_nodes + 1];
        let mut clades = vec![Clade::EMPTY; n_nodes + 1];
        for leaf in 1..=n_leaves {
            clades[leaf] = Clade::leaf(leaf);
        }
        for (k, &[a, b]) in rows.iter().enumerate() {
            let node = n_leaves + 1 + k;
            if a >= b {
                return Err(Error::InvalidTopology(format!(
                    "row {} ({a}, {b}) is not in increasing order",
                    k + 1
                )));
            }
            if a == 0 || b >= node {
                return Err(Error::InvalidTopology(format!(
                    "node {node} has child outside 1..{node}: ({a}, {b})"
                )));
            }
            for c in [a, b] {
                if parent[c] != 0 {
                    return Err(Error::InvalidTopology(format!(
                        "node {c} is a child of both {} and {node}",
                        parent[c]
                    )));
                }
                parent[c] = node;
            }
            clades[node] = clades[a].union(clades[b]);
        }
        if let Some(orphan) = (1..n_nodes).find(|&v| parent[v] == 0) {
            return Err(Error::InvalidTopology(format!("node {orphan} has no parent")));
        }
        Ok(Topology {
            n: n_leaves,
            rows,
            parent,
            clades,
        })
    }

    pub fn n_leaves(&self) -> usize {
        self.n
    }

    pub fn n_nodes(&self) -> usize {
        2 * self.n - 1
    }

    pub fn root(&self) -> Node {
        2 * self.n - 1
    }

    pub fn is_leaf(&self, node: Node) -> bool {
        node >= 1 && node <= self.n
    }

    pub fn internal_nodes(&self) -> std::ops::RangeInclusive<Node> {
        self.n + 1..=self.root()
    }

    pub fn rows(&self) -> &[[Node; 2]] {
        &self.rows
    }

    pub fn children(&self, node: Node) -> Option<[Node; 2]> {
        if node > self.n && node <= self.root() {
            Some(self.rows[node - self.n - 1])
        } else {
            None
        }
    }

    pub fn parent(&self, node: Node) -> Option<Node> {
        match self.parent.get(node) {
            Some(&p) if p != 0 => Some(p),
            _ => None,
        }
    }

    pub fn sibling(&self, node: Node) -> Option<Node> {
        let [a, b] = self.children(self.parent(node)?)?;
        Some(if a == node { b } else { a })
    }

    /// Leaves below (or equal to) `node`.
    pub fn clade(&self, node: Node) -> Clade {
        self.clades[node]
    }

    /// True when `node` lies strictly below `ancestor`.
    pub fn is_descendant(&self, node: Node, ancestor: Node) -> bool {
        node != ancestor && self.clades[node].is_subset(self.clades[ancestor])
    }

    pub fn node_with_clade(&self, clade: Clade) -> Option<Node> {
        (1..=self.root()).find(|&v| self.clades[v] == clade)
    }

    /// Parent of `v` once the subtree at `u` has been detached; the sibling
    /// of `u` inherits the branch of the removed parent.
    pub fn pruned_parent(&self, u: Node, v: Node) -> Option<Node> {
        let p = self.parent(u)?;
        match self.parent(v) {
            Some(pv) if pv == p => self.parent(p),
            other => other,
        }
    }

    pub fn mutation_branch(&self, ones: Clade) -> MutationBranch {
        if ones.is_empty() {
            return MutationBranch::NoMutation;
        }
        // the root carries no branch
        match (1..self.root()).find(|&v| self.clades[v] == ones) {
            Some(b) => MutationBranch::Branch(b),
            None => MutationBranch::Incompatible,
        }
    }

    pub fn is_compatible(&self, ones: Clade) -> bool {
        !matches!(self.mutation_branch(ones), MutationBranch::Incompatible)
    }

    /// The topology with internal node `N+k` placed at time `k`.
    pub fn ranked_tree(&self) -> Tree {
        let mut times = vec![0.0; self.root() + 1];
        for (k, node) in self.internal_nodes().enumerate() {
            times[node] = (k + 1) as f64;
        }
        Tree {
            topology: self.clone(),
            times,
        }
    }

    /// All ranked topologies reachable by pruning `u` and regrafting onto the
    /// branch `v`, one per admissible rank slot of the new node.
    pub fn spr_successors(&self, u: Node, v: Node) -> Vec<Topology> {
        let tree = self.ranked_tree();
        let r = tree.time(u);
        regraft_slots(&tree, u, v)
            .into_iter()
            .filter_map(|(lo, hi)| {
                let w = if hi.is_finite() { 0.5 * (lo + hi) } else { lo + 0.5 };
                apply_spr(&tree, &SprOp { u, v, r, w })
                    .ok()
                    .map(|t| t.topology)
            })
            .collect()
    }
}

/// Every `(u, v)` pair whose SPR turns ranked topology `from` into `to`.
///
/// Both trees must agree on the ranked structure left after detaching the
/// subtree at `u`; `v` is then the node of `from` carrying the branch that
/// `u` joins in `to`.
pub fn spr_ops_between(from: &Topology, to: &Topology) -> Vec<(Node, Node)> {
    let mut ops = Vec::new();
    if from.n != to.n {
        return ops;
    }
    for u in 1..from.root() {
        let moved = from.clade(u);
        let Some(u_to) = to.node_with_clade(moved) else {
            continue;
        };
        let (Some(p_from), Some(p_to)) = (from.parent(u), to.parent(u_to)) else {
            continue;
        };
        let pruned_from = pruned_keys(from, u, p_from);
        let pruned_to = pruned_keys(to, u_to, p_to);
        if !pruned_from.eq(pruned_to) {
            continue;
        }
        let Some(target) = to.sibling(u_to).map(|s| to.clade(s)) else {
            continue;
        };
        let v = (1..=from.root()).find(|&x| {
            x != p_from
                && x != u
                && !from.is_descendant(x, u)
                && from.clade(x).minus(moved) == target
        });
        if let Some(v) = v {
            ops.push((u, v));
        }
    }
    ops
}

/// Internal nodes other than `p` in rank order: those inside the subtree at
/// `u` by clade, the others by clade without the subtree's leaves.
fn pruned_keys(topo: &Topology, u: Node, p: Node) -> impl Iterator<Item = (bool, Clade)> + '_ {
    let moved = topo.clade(u);
    topo.internal_nodes().filter(move |&x| x != p).map(move |x| {
        let c = topo.clade(x);
        if c.is_subset(moved) {
            (true, c)
        } else {
            (false, c.minus(moved))
        }
    })
}

/// How the internal nodes of two consecutive topologies correspond under one
/// SPR move.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MoveMap {
    /// Internal node of the source removed by the prune.
    pub deleted: Node,
    /// Internal node of the target created by the regraft.
    pub created: Node,
    /// `map[x]` is the label in the target of source node `x` (`0` for `deleted`).
    pub map: Vec<Node>,
}

pub fn move_map(from: &Topology, u: Node, to: &Topology) -> Option<MoveMap> {
    let deleted = from.parent(u)?;
    let u_to = to.node_with_clade(from.clade(u))?;
    let created = to.parent(u_to)?;
    let mut map = vec![0; from.root() + 1];
    for leaf in 1..=from.n {
        map[leaf] = leaf;
    }
    let kept_to = to.internal_nodes().filter(|&x| x != created);
    for (a, b) in from.internal_nodes().filter(|&x| x != deleted).zip(kept_to) {
        map[a] = b;
    }
    Some(MoveMap {
        deleted,
        created,
        map,
    })
}

/// A topology together with node times.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    topology: Topology,
    // indexed by node label; slot 0 unused
    times: Vec<f64>,
}

/// Branch lengths `l_n = t_pa(n) - t_n` and their sum.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchMetrics {
    /// Indexed by node label; the root and slot 0 hold zero.
    pub per_branch: Vec<f64>,
    pub total: f64,
}

impl Tree {
    /// `node_times` lists `t_1, ..., t_{2N-1}`.
    pub fn new(topology: Topology, node_times: &[f64]) -> Result<Self> {
        let n = topology.n_leaves();
        if node_times.len() != topology.n_nodes() {
            return Err(Error::InvalidTree(format!(
                "expected {} node times, found {}",
                topology.n_nodes(),
                node_times.len()
            )));
        }
        let mut times = Vec::with_capacity(node_times.len() + 1);
        times.push(0.0);
        times.extend_from_slice(node_times);
        if let Some(leaf) = (1..=n).find(|&l| times[l] != 0.0) {
            return Err(Error::InvalidTree(format!("leaf {leaf} has non-zero time")));
        }
        check_internal_times(&times, n)?;
        Ok(Tree { topology, times })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn into_topology(self) -> Topology {
        self.topology
    }

    pub fn n_leaves(&self) -> usize {
        self.topology.n
    }

    pub fn time(&self, node: Node) -> f64 {
        self.times[node]
    }

    /// Times of nodes `1..=2N-1`.
    pub fn times(&self) -> &[f64] {
        &self.times[1..]
    }

    /// Time of the parent of `node`, `+inf` for the root.
    pub fn parent_time(&self, node: Node) -> f64 {
        self.topology
            .parent(node)
            .map_or(f64::INFINITY, |p| self.times[p])
    }

    pub fn branch_length(&self, node: Node) -> f64 {
        match self.topology.parent(node) {
            Some(p) => self.times[p] - self.times[node],
            None => 0.0,
        }
    }

    pub fn branch_metrics(&self) -> BranchMetrics {
        let mut per_branch = vec![0.0; self.times.len()];
        let mut total = 0.0;
        for v in 1..self.topology.root() {
            let l = self.branch_length(v);
            per_branch[v] = l;
            total += l;
        }
        BranchMetrics { per_branch, total }
    }

    pub fn total_length(&self) -> f64 {
        (1..self.topology.root()).map(|v| self.branch_length(v)).sum()
    }

    pub fn height(&self) -> f64 {
        self.times[self.topology.root()]
    }

    /// Time of the most recent common ancestor of two leaves.
    pub fn mrca_time(&self, a: Node, b: Node) -> f64 {
        let want = Clade::leaf(a).union(Clade::leaf(b));
        self.topology
            .internal_nodes()
            .find(|&x| want.is_subset(self.topology.clade(x)))
            .map_or(0.0, |x| self.times[x])
    }

    /// Moves an internal node without changing the time ranking.
    pub fn set_time(&mut self, node: Node, t: f64) -> Result<()> {
        let n = self.topology.n;
        if node <= n || node > self.topology.root() {
            return Err(Error::InvalidTree(format!("node {node} is not internal")));
        }
        let below = if node == n + 1 { 0.0 } else { self.times[node - 1] };
        let above = if node == self.topology.root() {
            f64::INFINITY
        } else {
            self.times[node + 1]
        };
        if !(t > below && t < above) || !t.is_finite() {
            return Err(Error::InvalidTree(format!(
                "time {t} for node {node} breaks ranking ({below}, {above})"
            )));
        }
        self.times[node] = t;
        Ok(())
    }
}

fn check_internal_times(times: &[f64], n: usize) -> Result<()> {
    let mut prev = 0.0;
    for node in n + 1..times.len() {
        let t = times[node];
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::InvalidTree(format!(
                "internal node {node} has time {t}"
            )));
        }
        if node > n + 1 {
            if (t - prev).abs() <= TIME_TOLERANCE {
                return Err(Error::DegenerateTimes {
                    first: prev,
                    second: t,
                });
            }
            if t < prev {
                return Err(Error::InvalidTree(format!(
                    "internal node {node} at {t} is earlier than node {} at {prev}",
                    node - 1
                )));
            }
        }
        prev = t;
    }
    Ok(())
}

/// Tree with arbitrary internal labels, as produced mid-edit.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTree {
    pub n_leaves: usize,
    pub internal: Vec<RawNode>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawNode {
    pub label: usize,
    pub children: [usize; 2],
    pub time: f64,
}

/// Relabels internal nodes by increasing time and sorts each row.
pub fn canonicalize(raw: &RawTree) -> Result<Tree> {
    let n = raw.n_leaves;
    if !(2..=MAX_LEAVES).contains(&n) {
        return Err(Error::InvalidTopology(format!("leaf count {n}")));
    }
    if raw.internal.len() != n - 1 {
        return Err(Error::InvalidTopology(format!(
            "expected {} internal nodes, found {}",
            n - 1,
            raw.internal.len()
        )));
    }
    let mut order: Vec<&RawNode> = raw.internal.iter().collect();
    if order.iter().any(|x| !x.time.is_finite()) {
        return Err(Error::InvalidTree("non-finite internal time".into()));
    }
    order.sort_by(|a, b| a.time.total_cmp(&b.time));
    for pair in order.windows(2) {
        if (pair[1].time - pair[0].time).abs() <= TIME_TOLERANCE {
            return Err(Error::DegenerateTimes {
                first: pair[0].time,
                second: pair[1].time,
            });
        }
    }
    let mut relabel = std::collections::HashMap::with_capacity(2 * n);
    for leaf in 1..=n {
        relabel.insert(leaf, leaf);
    }
    for (k, node) in order.iter().enumerate() {
        if node.label >= 1 && node.label <= n {
            return Err(Error::InvalidTopology(format!(
                "internal label {} collides with a leaf",
                node.label
            )));
        }
        if relabel.insert(node.label, n + 1 + k).is_some() {
            return Err(Error::InvalidTopology(format!(
                "duplicate internal label {}",
                node.label
            )));
        }
    }
    let mut rows = Vec::with_capacity(n - 1);
    let mut times = vec![0.0; n];
    for node in &order {
        let map = |c: usize| {
            relabel
                .get(&c)
                .copied()
                .ok_or_else(|| Error::InvalidTopology(format!("unknown child label {c}")))
        };
        let a = map(node.children[0])?;
        let b = map(node.children[1])?;
        rows.push([a.min(b), a.max(b)]);
        times.push(node.time);
    }
    let topology = Topology::from_rows(n, rows)?;
    Tree::new(topology, &times)
}

/// SPR quadruple `(u, v, r, w)`; all zero is the identity.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SprOp {
    pub u: Node,
    pub v: Node,
    pub r: f64,
    pub w: f64,
}

impl SprOp {
    pub const IDENTITY: SprOp = SprOp {
        u: 0,
        v: 0,
        r: 0.0,
        w: 0.0,
    };

    pub fn is_identity(&self) -> bool {
        self.u == 0 && self.v == 0 && self.r == 0.0 && self.w == 0.0
    }
}

pub fn validate_spr(tree: &Tree, op: &SprOp) -> Result<()> {
    if op.is_identity() {
        return Ok(());
    }
    let topo = &tree.topology;
    let bad = |msg: String| Err(Error::InvalidOperation(msg));
    if op.u == 0 || op.u >= topo.root() {
        return bad(format!("u = {} is not a non-root node", op.u));
    }
    if op.v == 0 || op.v > topo.root() {
        return bad(format!("v = {} is not a node", op.v));
    }
    let p = topo.parent(op.u).expect("non-root node has a parent");
    if op.v == op.u || op.v == p {
        return bad(format!("v = {} must differ from u and pa(u)", op.v));
    }
    if topo.is_descendant(op.v, op.u) {
        return bad(format!("v = {} lies inside the pruned subtree", op.v));
    }
    if !(op.r >= tree.time(op.u) && op.r <= tree.time(p)) {
        return bad(format!(
            "prune time {} outside [{}, {}]",
            op.r,
            tree.time(op.u),
            tree.time(p)
        ));
    }
    if !(op.w > op.r) || !op.w.is_finite() {
        return bad(format!("regraft time {} not above prune time {}", op.w, op.r));
    }
    let top = topo
        .pruned_parent(op.u, op.v)
        .map_or(f64::INFINITY, |x| tree.time(x));
    if !(op.w > tree.time(op.v) && op.w < top) {
        return bad(format!(
            "regraft time {} outside branch {} = ({}, {top})",
            op.w,
            op.v,
            tree.time(op.v)
        ));
    }
    Ok(())
}

/// Prunes the subtree at `u` and regrafts it onto branch `v` at time `w`.
pub fn apply_spr(tree: &Tree, op: &SprOp) -> Result<Tree> {
    if op.is_identity() {
        return Ok(tree.clone());
    }
    validate_spr(tree, op)?;
    let topo = &tree.topology;
    let n = topo.n;
    let fresh = topo.root() + 1;
    let mut kids: Vec<Option<[Node; 2]>> = vec![None; fresh + 1];
    for x in topo.internal_nodes() {
        kids[x] = topo.children(x);
    }
    let p = topo.parent(op.u).expect("validated");
    let s = topo.sibling(op.u).expect("validated");
    kids[p] = None;
    let replace = |slot: &mut Option<[Node; 2]>, old: Node, new: Node| {
        if let Some(pair) = slot.as_mut() {
            for c in pair.iter_mut() {
                if *c == old {
                    *c = new;
                }
            }
        }
    };
    if let Some(g) = topo.parent(p) {
        replace(&mut kids[g], p, s);
    }
    if let Some(pp) = (n + 1..=fresh).find(|&x| kids[x].is_some_and(|k| k.contains(&op.v))) {
        replace(&mut kids[pp], op.v, fresh);
    }
    kids[fresh] = Some([op.u, op.v]);
    let internal = (n + 1..=fresh)
        .filter_map(|x| {
            kids[x].map(|children| RawNode {
                label: x,
                children,
                time: if x == fresh { op.w } else { tree.time(x) },
            })
        })
        .collect();
    canonicalize(&RawTree {
        n_leaves: n,
        internal,
    })
}

/// Open time intervals on which `u` may rejoin branch `v`, one per rank slot
/// between the remaining internal nodes.
pub fn regraft_slots(tree: &Tree, u: Node, v: Node) -> Vec<(f64, f64)> {
    let topo = &tree.topology;
    let Some(p) = topo.parent(u) else {
        return Vec::new();
    };
    if v == u || v == p || v == 0 || v > topo.root() || topo.is_descendant(v, u) {
        return Vec::new();
    }
    let lo = tree.time(u).max(tree.time(v));
    let hi = topo
        .pruned_parent(u, v)
        .map_or(f64::INFINITY, |x| tree.time(x));
    if lo >= hi {
        return Vec::new();
    }
    let mut cuts = vec![lo];
    cuts.extend(
        topo.internal_nodes()
            .filter(|&x| x != p)
            .map(|x| tree.time(x))
            .filter(|&t| t > lo && t < hi),
    );
    cuts.push(hi);
    cuts.windows(2).map(|w| (w[0], w[1])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2_tree() -> Tree {
        let topo =
            Topology::from_rows(6, vec![[1, 2], [3, 4], [5, 6], [8, 9], [7, 10]]).unwrap();
        Tree::new(topo, &[0., 0., 0., 0., 0., 0., 1., 2., 3., 5., 8.]).unwrap()
    }

    fn parent_map_total(tree: &Tree) -> f64 {
        // walk every leaf to the root, charging each edge once
        let topo = tree.topology();
        let mut seen = vec![false; topo.n_nodes() + 1];
        let mut total = 0.0;
        for leaf in 1..=topo.n_leaves() {
            let mut x = leaf;
            while let Some(p) = topo.parent(x) {
                if !seen[x] {
                    seen[x] = true;
                    total += tree.time(p) - tree.time(x);
                }
                x = p;
            }
        }
        total
    }

    #[test]
    fn rows_must_be_sorted_and_ranked() {
        assert!(Topology::from_rows(3, vec![[2, 1], [3, 4]]).is_err());
        assert!(Topology::from_rows(3, vec![[1, 5], [2, 3]]).is_err());
        assert!(Topology::from_rows(3, vec![[1, 2], [1, 4]]).is_err());
        assert!(Topology::from_rows(3, vec![[1, 2], [3, 4]]).is_ok());
    }

    #[test]
    fn tied_internal_times_are_rejected() {
        let topo = Topology::from_rows(3, vec![[1, 2], [3, 4]]).unwrap();
        let err = Tree::new(topo, &[0., 0., 0., 1.0, 1.0 + 1e-13]).unwrap_err();
        assert!(matches!(err, Error::DegenerateTimes { .. }));
    }

    #[test]
    fn canonicalize_relabels_two_leaf_tree() {
        let raw = RawTree {
            n_leaves: 2,
            internal: vec![RawNode {
                label: 5,
                children: [2, 1],
                time: 1.0,
            }],
        };
        let tree = canonicalize(&raw).unwrap();
        assert_eq!(tree.topology().rows(), &[[1, 2]]);
        assert_eq!(tree.time(3), 1.0);
    }

    #[test]
    fn canonicalize_is_idempotent_on_canonical_trees() {
        let tree = fig2_tree();
        let raw = RawTree {
            n_leaves: 6,
            internal: tree
                .topology()
                .internal_nodes()
                .map(|x| RawNode {
                    label: x,
                    children: tree.topology().children(x).unwrap(),
                    time: tree.time(x),
                })
                .collect(),
        };
        assert_eq!(canonicalize(&raw).unwrap(), tree);
    }

    #[test]
    fn canonicalize_rejects_duplicate_times() {
        let raw = RawTree {
            n_leaves: 3,
            internal: vec![
                RawNode {
                    label: 10,
                    children: [1, 2],
                    time: 1.0,
                },
                RawNode {
                    label: 11,
                    children: [10, 3],
                    time: 1.0,
                },
            ],
        };
        assert!(matches!(
            canonicalize(&raw),
            Err(Error::DegenerateTimes { .. })
        ));
    }

    #[test]
    fn two_leaf_branch_metrics() {
        let topo = Topology::from_rows(2, vec![[1, 2]]).unwrap();
        let tree = Tree::new(topo, &[0., 0., 2.5]).unwrap();
        let m = tree.branch_metrics();
        assert_eq!(m.per_branch[1], 2.5);
        assert_eq!(m.per_branch[2], 2.5);
        assert_eq!(m.total, 5.0);
    }

    #[test]
    fn fig2_branch_total_matches_parent_map_walk() {
        let tree = fig2_tree();
        let m = tree.branch_metrics();
        assert_eq!(m.total, parent_map_total(&tree));
        // leaves 1..6 with parents at 1,1,2,2,3,3 then 7->11, 8->10, 9->10, 10->11
        assert_eq!(m.total, 1. + 1. + 2. + 2. + 3. + 3. + 7. + 3. + 2. + 3.);
    }

    #[test]
    fn fig2_spr_produces_expected_tree() {
        let tree = fig2_tree();
        let op = SprOp {
            u: 7,
            v: 9,
            r: 2.5,
            w: 4.0,
        };
        let next = apply_spr(&tree, &op).unwrap();
        assert_eq!(
            next.topology().rows(),
            &[[1, 2], [3, 4], [5, 6], [7, 9], [8, 10]]
        );
        assert_eq!(next.times(), &[0., 0., 0., 0., 0., 0., 1., 2., 3., 4., 5.]);
    }

    #[test]
    fn identity_spr_returns_same_tree() {
        let tree = fig2_tree();
        assert_eq!(apply_spr(&tree, &SprOp::IDENTITY).unwrap(), tree);
    }

    #[test]
    fn invalid_spr_is_rejected() {
        let tree = fig2_tree();
        let cases = [
            SprOp { u: 11, v: 9, r: 8.0, w: 9.0 },
            SprOp { u: 7, v: 11, r: 2.5, w: 9.0 },
            SprOp { u: 7, v: 9, r: 0.5, w: 4.0 },
            SprOp { u: 7, v: 9, r: 2.5, w: 2.0 },
            SprOp { u: 7, v: 9, r: 2.5, w: 6.0 },
            SprOp { u: 10, v: 3, r: 6.0, w: 7.0 },
        ];
        for op in cases {
            assert!(
                matches!(apply_spr(&tree, &op), Err(Error::InvalidOperation(_))),
                "{op:?} accepted"
            );
        }
    }

    #[test]
    fn sibling_regraft_above_parent_uses_sibling_label() {
        // prune 7, regraft onto the continuation of its sibling 10 above time 8
        let tree = fig2_tree();
        let op = SprOp { u: 7, v: 10, r: 3.0, w: 9.0 };
        let next = apply_spr(&tree, &op).unwrap();
        assert_eq!(next.topology(), tree.topology());
        assert_eq!(next.time(11), 9.0);
    }

    #[test]
    fn mutation_branch_cases() {
        let topo = Topology::from_rows(4, vec![[1, 2], [3, 5], [4, 6]]).unwrap();
        assert_eq!(topo.mutation_branch(Clade::EMPTY), MutationBranch::NoMutation);
        assert_eq!(
            topo.mutation_branch(Clade::leaf(3)),
            MutationBranch::Branch(3)
        );
        let ones = Clade::from_column(&[1, 1, 0, 0]);
        assert_eq!(topo.mutation_branch(ones), MutationBranch::Branch(5));
        let split = Clade::from_column(&[1, 0, 1, 0]);
        assert_eq!(topo.mutation_branch(split), MutationBranch::Incompatible);
        // all ones would need the root branch, which does not exist
        assert_eq!(
            topo.mutation_branch(Clade::all(4)),
            MutationBranch::Incompatible
        );
    }

    #[test]
    fn spr_ops_between_ignores_root_child_moves() {
        let from = Topology::from_rows(6, vec![[3, 5], [1, 2], [6, 8], [7, 9], [4, 10]]).unwrap();
        let to = Topology::from_rows(6, vec![[3, 5], [2, 7], [1, 8], [6, 9], [4, 10]]).unwrap();
        for (u, v) in spr_ops_between(&from, &to) {
            assert!(from.spr_successors(u, v).contains(&to), "({u}, {v})");
        }
    }

    #[test]
    fn spr_ops_between_recovers_generating_pair() {
        let tree = fig2_tree();
        let next = apply_spr(&tree, &SprOp { u: 7, v: 9, r: 2.5, w: 4.0 }).unwrap();
        let ops = spr_ops_between(tree.topology(), next.topology());
        assert!(ops.contains(&(7, 9)), "{ops:?}");
        for (u, v) in ops {
            let succ = tree.topology().spr_successors(u, v);
            assert!(succ.contains(next.topology()));
        }
    }

    #[test]
    fn move_map_tracks_surviving_nodes() {
        let tree = fig2_tree();
        let next = apply_spr(&tree, &SprOp { u: 7, v: 9, r: 2.5, w: 4.0 }).unwrap();
        let mm = move_map(tree.topology(), 7, next.topology()).unwrap();
        assert_eq!(mm.deleted, 11);
        assert_eq!(mm.created, 10);
        assert_eq!(&mm.map[7..], &[7, 8, 9, 11, 0]);
        for x in 7..=10 {
            assert_eq!(tree.time(x), next.time(mm.map[x]));
        }
    }

    #[test]
    fn regraft_slots_split_at_remaining_nodes() {
        let tree = fig2_tree();
        // u = 1 (parent 7 at t=1), v = 6: branch (0, 3), remaining nodes at 2
        let slots = regraft_slots(&tree, 1, 6);
        assert_eq!(slots, vec![(0.0, 2.0), (2.0, 3.0)]);
        // branch 1 ends below the time of node 10
        assert!(regraft_slots(&tree, 10, 1).is_empty());
    }

    #[test]
    fn mrca_time_is_lowest_shared_ancestor() {
        let tree = fig2_tree();
        assert_eq!(tree.mrca_time(1, 2), 1.0);
        assert_eq!(tree.mrca_time(3, 5), 5.0);
        assert_eq!(tree.mrca_time(1, 6), 8.0);
    }
}
