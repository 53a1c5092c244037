//! Slow reference implementations for tests and the `verify` command.
//!
//! Everything here walks explicit parent arrays and leaf lists instead of the
//! cached clades and helpers in [`crate::tree`], so a bug in the fast code
//! does not silently reappear in its checker.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::tree::{Clade, Node, Topology, Tree};

pub const BRUTE_FORCE_MAX_LEAVES: usize = 8;
pub const SCAN_MAX_LEAVES: usize = 6;
pub const SCAN_MAX_SITES: usize = 4;

/// Parent array (index 0 unused, 0 = no parent) plus node times.
#[derive(Clone, Debug)]
struct Shape {
    n: usize,
    parent: Vec<usize>,
    time: Vec<f64>,
    alive: Vec<bool>,
}

impl Shape {
    fn from_rows(n: usize, rows: &[[Node; 2]], time: Vec<f64>) -> Shape {
        let mut parent = vec![0; 2 * n];
        for (k, row) in rows.iter().enumerate() {
            for &c in row {
                parent[c] = n + 1 + k;
            }
        }
        Shape {
            n,
            parent,
            time,
            alive: vec![true; 2 * n],
        }
    }

    fn from_tree(tree: &Tree) -> Shape {
        let topo = tree.topology();
        let mut time = vec![0.0; 2 * topo.n_leaves()];
        time[1..].copy_from_slice(tree.times());
        Shape::from_rows(topo.n_leaves(), topo.rows(), time)
    }

    fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (1..self.parent.len()).filter(|&x| self.alive[x])
    }

    fn children(&self, x: usize) -> Vec<usize> {
        self.nodes().filter(|&c| self.parent[c] == x).collect()
    }

    fn root(&self) -> usize {
        self.nodes().find(|&x| self.parent[x] == 0).expect("a root exists")
    }

    fn is_below(&self, x: usize, anc: usize) -> bool {
        let mut y = x;
        while y != 0 {
            if y == anc {
                return true;
            }
            y = self.parent[y];
        }
        false
    }

    fn leaves_below(&self, x: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (1..=self.n).filter(|&l| self.is_below(l, x)).collect();
        out.sort_unstable();
        out
    }

    /// Detaches `u` with its parent; returns the reused parent label.
    fn prune(&mut self, u: usize) -> usize {
        let p = self.parent[u];
        let s = self.children(p).into_iter().find(|&c| c != u).expect("binary");
        self.parent[s] = self.parent[p];
        self.parent[p] = 0;
        self.alive[p] = false;
        p
    }

    fn regraft(&mut self, u: usize, v: usize, label: usize, w: f64) {
        self.alive[label] = true;
        self.parent[label] = self.parent[v];
        self.parent[v] = label;
        self.parent[u] = label;
        self.time[label] = w;
    }

    fn compatible(&self, ones: Clade) -> bool {
        let want: Vec<usize> = ones.leaves().collect();
        if want.is_empty() {
            return true;
        }
        let root = self.root();
        self.nodes()
            .filter(|&x| x != root)
            .any(|x| self.leaves_below(x) == want)
    }

    fn to_topology(&self) -> Topology {
        let mut internal: Vec<usize> = self.nodes().filter(|&x| x > self.n).collect();
        internal.sort_by(|a, b| self.time[*a].total_cmp(&self.time[*b]));
        let mut label = vec![0; self.parent.len()];
        for l in 1..=self.n {
            label[l] = l;
        }
        for (k, &x) in internal.iter().enumerate() {
            label[x] = self.n + 1 + k;
        }
        let rows = internal
            .iter()
            .map(|&x| {
                let mut c: Vec<usize> = self.children(x).iter().map(|&c| label[c]).collect();
                c.sort_unstable();
                [c[0], c[1]]
            })
            .collect();
        Topology::from_rows(self.n, rows).expect("oracle produced a valid topology")
    }
}

/// Every `(u, v)` for which some prune/regraft time pair turns `tree` into a
/// tree compatible with `ones`.
pub fn brute_force_compatible_sprs(tree: &Tree, ones: Clade) -> Result<BTreeSet<(Node, Node)>> {
    let n = tree.n_leaves();
    if n > BRUTE_FORCE_MAX_LEAVES {
        return Err(Error::Refused(format!(
            "brute-force SPR search is limited to {BRUTE_FORCE_MAX_LEAVES} leaves, got {n}"
        )));
    }
    let base = Shape::from_tree(tree);
    let root = base.root();
    let mut out = BTreeSet::new();
    for u in base.nodes().filter(|&x| x != root) {
        let p = base.parent[u];
        for v in base.nodes() {
            if v == u || v == p || base.is_below(v, u) {
                continue;
            }
            let mut pruned = base.clone();
            let label = pruned.prune(u);
            let lo = base.time[u].max(base.time[v]);
            let hi = match pruned.parent[v] {
                0 => f64::INFINITY,
                x => pruned.time[x],
            };
            if lo >= hi {
                continue;
            }
            let mut cuts: Vec<f64> = pruned
                .nodes()
                .map(|x| pruned.time[x])
                .filter(|&t| t > lo && t < hi)
                .collect();
            cuts.sort_by(f64::total_cmp);
            cuts.insert(0, lo);
            cuts.push(hi);
            for win in cuts.windows(2) {
                let w = if win[1].is_finite() {
                    0.5 * (win[0] + win[1])
                } else {
                    win[0] + 1.0
                };
                let mut next = pruned.clone();
                next.regraft(u, v, label, w);
                if next.compatible(ones) {
                    out.insert((u, v));
                    break;
                }
            }
        }
    }
    Ok(out)
}

/// All ranked topologies on `n` leaves, by exhaustive sequential pairing.
pub fn all_ranked_topologies(n: usize) -> Result<Vec<Topology>> {
    if !(2..=7).contains(&n) {
        return Err(Error::Refused(format!("topology enumeration is limited to 2..=7 leaves, got {n}")));
    }
    let mut out = Vec::new();
    let mut rows = Vec::new();
    let active: Vec<usize> = (1..=n).collect();
    pairings(n, &active, &mut rows, &mut out);
    Ok(out)
}

fn pairings(n: usize, active: &[usize], rows: &mut Vec<[Node; 2]>, out: &mut Vec<Topology>) {
    if active.len() == 1 {
        out.push(Topology::from_rows(n, rows.clone()).expect("pairing yields a topology"));
        return;
    }
    let new = n + 1 + rows.len();
    for i in 0..active.len() {
        for j in i + 1..active.len() {
            let (a, b) = (active[i].min(active[j]), active[i].max(active[j]));
            let rest: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&x| x != a && x != b)
                .chain(std::iter::once(new))
                .collect();
            rows.push([a, b]);
            pairings(n, &rest, rows, out);
            rows.pop();
        }
    }
}

/// Distinct ranked topologies one SPR away from `topo`, obtained by trying
/// every prune node, every regraft branch and every rank slot.
pub fn ranked_successors(topo: &Topology) -> Vec<Topology> {
    let n = topo.n_leaves();
    let mut time = vec![0.0; 2 * n];
    for x in n + 1..2 * n {
        time[x] = (x - n) as f64;
    }
    let base = Shape::from_rows(n, topo.rows(), time);
    let root = base.root();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for u in base.nodes().filter(|&x| x != root) {
        let p = base.parent[u];
        for v in base.nodes() {
            if v == u || v == p || base.is_below(v, u) {
                continue;
            }
            let mut pruned = base.clone();
            let label = pruned.prune(u);
            let lo = base.time[u].max(base.time[v]);
            let hi = match pruned.parent[v] {
                0 => f64::INFINITY,
                x => pruned.time[x],
            };
            let mut k = lo;
            while k + 0.5 < hi && k <= n as f64 {
                let mut next = pruned.clone();
                next.regraft(u, v, label, k + 0.5);
                let t = next.to_topology();
                if seen.insert(t.clone()) {
                    out.push(t);
                }
                k += 1.0;
            }
        }
    }
    out
}

fn shape_of(topo: &Topology) -> Shape {
    let n = topo.n_leaves();
    let mut time = vec![0.0; 2 * n];
    for x in n + 1..2 * n {
        time[x] = (x - n) as f64;
    }
    Shape::from_rows(n, topo.rows(), time)
}

pub fn oracle_compatible(topo: &Topology, ones: Clade) -> bool {
    shape_of(topo).compatible(ones)
}

/// A scanned path: for every gap, the topologies produced by each SPR in it.
pub type GapHistory = Vec<Vec<Topology>>;

/// Parsimonious scan with unrestricted SPR enumeration.
///
/// `columns[0]` belongs to the starting site and `widths[g]` is the number of
/// site boundaries available in gap `g`. In each gap the fewest SPRs (0, 1
/// or 2) that let any current path reach a compatible topology are used;
/// an empty result means some gap needed more than two.
pub fn exhaustive_tree_scan(left: &Topology, columns: &[Clade], widths: &[usize]) -> Result<HashSet<GapHistory>> {
    let n = left.n_leaves();
    if n > SCAN_MAX_LEAVES || columns.len() > SCAN_MAX_SITES {
        return Err(Error::Refused(format!(
            "exhaustive scan is limited to {SCAN_MAX_LEAVES} leaves and {SCAN_MAX_SITES} sites"
        )));
    }
    if widths.len() + 1 != columns.len() {
        return Err(Error::Refused("need one width per gap".into()));
    }
    let mut succ_cache: HashMap<Topology, Vec<Topology>> = HashMap::new();
    let mut succ = |t: &Topology| -> Vec<Topology> {
        succ_cache
            .entry(t.clone())
            .or_insert_with(|| ranked_successors(t))
            .clone()
    };
    let mut frontier: Vec<(Topology, GapHistory)> = vec![(left.clone(), Vec::new())];
    for (g, &width) in widths.iter().enumerate() {
        let target = columns[g + 1];
        let mut next: Vec<(Topology, GapHistory)> = Vec::new();
        for c in 0..=width.min(2) {
            for (t, hist) in &frontier {
                let mut chains: Vec<Vec<Topology>> = vec![Vec::new()];
                for _ in 0..c {
                    let mut longer = Vec::new();
                    for chain in &chains {
                        let last = chain.last().unwrap_or(t);
                        for s in succ(last) {
                            let mut ext = chain.clone();
                            ext.push(s);
                            longer.push(ext);
                        }
                    }
                    chains = longer;
                }
                for chain in chains {
                    let end = chain.last().unwrap_or(t).clone();
                    if oracle_compatible(&end, target) {
                        let mut h = hist.clone();
                        h.push(chain);
                        next.push((end, h));
                    }
                }
            }
            if !next.is_empty() {
                break;
            }
        }
        if next.is_empty() {
            return Ok(HashSet::new());
        }
        let mut seen = HashSet::new();
        next.retain(|(_, h)| seen.insert(h.clone()));
        frontier = next;
    }
    Ok(frontier.into_iter().map(|(_, h)| h).collect())
}

/// Fewest SPR operations over any timed tree sequence compatible with the
/// given segregating columns, found by dynamic programming over every
/// ranked topology. `widths[g]` bounds the operations in gap `g`.
pub fn min_recombinations(n: usize, columns: &[Clade], widths: &[usize]) -> Result<usize> {
    if n > SCAN_MAX_LEAVES {
        return Err(Error::Refused(format!("minimum search is limited to {SCAN_MAX_LEAVES} leaves")));
    }
    if columns.is_empty() {
        return Ok(0);
    }
    if widths.len() + 1 != columns.len() {
        return Err(Error::Refused("need one width per gap".into()));
    }
    let topos = all_ranked_topologies(n)?;
    let index: HashMap<&Topology, usize> = topos.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let adj: Vec<Vec<usize>> = topos
        .iter()
        .map(|t| ranked_successors(t).iter().map(|s| index[s]).collect())
        .collect();
    const INF: usize = usize::MAX / 2;
    let mut dist: Vec<usize> = topos
        .iter()
        .map(|t| if oracle_compatible(t, columns[0]) { 0 } else { INF })
        .collect();
    for (g, &width) in widths.iter().enumerate() {
        let mut cur = dist.clone();
        for _ in 0..width {
            let mut nxt = cur.clone();
            let mut changed = false;
            for (a, outs) in adj.iter().enumerate() {
                if cur[a] >= INF {
                    continue;
                }
                for &b in outs {
                    if cur[a] + 1 < nxt[b] {
                        nxt[b] = cur[a] + 1;
                        changed = true;
                    }
                }
            }
            cur = nxt;
            if !changed {
                break;
            }
        }
        for (i, t) in topos.iter().enumerate() {
            if !oracle_compatible(t, columns[g + 1]) {
                cur[i] = INF;
            }
        }
        dist = cur;
    }
    dist.into_iter()
        .min()
        .filter(|&d| d < INF)
        .ok_or_else(|| Error::Refused("no compatible sequence exists".into()))
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let pair = f(c - x) + f(c + x);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> Result<f64> {
    let (value, err) = gauss_kronrod(f, a, b);
    if err <= tol.max(1e-15 * value.abs()) {
        return Ok(value);
    }
    if depth == 0 {
        return Err(Error::Numerical(format!("quadrature did not converge on [{a}, {b}]")));
    }
    let m = 0.5 * (a + b);
    Ok(adaptive(f, a, m, 0.5 * tol, depth - 1)? + adaptive(f, m, b, 0.5 * tol, depth - 1)?)
}

/// Adaptive Gauss-Kronrod (7/15) integral of `f` over `[a, b]`; `b` may be
/// `+inf`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if b.is_infinite() {
        let g = |t: f64| {
            let s = 1.0 - t;
            f(a + t / s) / (s * s)
        };
        adaptive(&g, 0.0, 1.0, abs_tol, 40)
    } else {
        adaptive(&f, a, b, abs_tol, 40)
    }
}
