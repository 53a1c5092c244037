//! Sequentially Markov coalescent prior, the infinite-sites likelihood and a
//! forward simulator.

use rand::Rng;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::tree::{apply_spr, Clade, MutationBranch, Node, SprOp, Topology, Tree};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub theta: f64,
    pub rho: f64,
}

impl ModelParams {
    pub fn new(theta: f64, rho: f64) -> Result<Self> {
        for (name, x) in [("theta", theta), ("rho", rho)] {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {x}")));
            }
        }
        Ok(ModelParams { theta, rho })
    }
}

/// A tree together with the SPR leading to the next site's tree.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoratedTree {
    pub tree: Tree,
    pub op: SprOp,
}

pub fn choose2(m: usize) -> f64 {
    (m * m.saturating_sub(1) / 2) as f64
}

/// `ln(1 - exp(-x))` for `x > 0`.
pub fn log_one_minus_exp_neg(x: f64) -> f64 {
    if x > std::f64::consts::LN_2 {
        (-(-x).exp()).ln_1p()
    } else {
        (-(-x).exp_m1()).ln()
    }
}

/// Rate of the exponential gap below internal node `N+1+k`.
pub fn coalescence_rate(n_leaves: usize, k: usize) -> f64 {
    choose2(n_leaves - k)
}

pub fn sample_initial_tree<R: Rng + ?Sized>(rng: &mut R, n_leaves: usize) -> Result<Tree> {
    if n_leaves < 2 {
        return Err(Error::Config(format!("need at least 2 leaves, got {n_leaves}")));
    }
    let mut active: Vec<Node> = (1..=n_leaves).collect();
    let mut rows = Vec::with_capacity(n_leaves - 1);
    let mut times = vec![0.0; n_leaves];
    let mut t = 0.0;
    for k in 0..n_leaves - 1 {
        let i = rng.gen_range(0..active.len());
        let mut j = rng.gen_range(0..active.len() - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (active[i].min(active[j]), active[i].max(active[j]));
        active.retain(|&x| x != a && x != b);
        active.push(n_leaves + 1 + k);
        rows.push([a, b]);
        t += sample_exp(rng, coalescence_rate(n_leaves, k));
        times.push(t);
    }
    Tree::new(Topology::from_rows(n_leaves, rows)?, &times)
}

pub fn log_density_initial(tree: &Tree) -> f64 {
    let n = tree.n_leaves();
    let topo_part: f64 = (1..n).map(|i| -choose2(n - i + 1).ln()).sum();
    let mut prev = 0.0;
    let mut time_part = 0.0;
    for (k, node) in tree.topology().internal_nodes().enumerate() {
        let beta = coalescence_rate(n, k);
        let gap = tree.time(node) - prev;
        time_part += beta.ln() - beta * gap;
        prev = tree.time(node);
    }
    topo_part + time_part
}

fn sample_exp<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.gen();
    -(1.0 - u).ln() / rate
}

pub fn sample_recomb_node<R: Rng + ?Sized>(rng: &mut R, tree: &Tree, params: &ModelParams) -> Node {
    let total = tree.total_length();
    let p_none = (-params.rho * total).exp();
    if rng.gen::<f64>() < p_none {
        return 0;
    }
    let mut x = rng.gen::<f64>() * total;
    let root = tree.topology().root();
    for n in 1..root {
        x -= tree.branch_length(n);
        if x < 0.0 {
            return n;
        }
    }
    root - 1
}

pub fn log_recomb_node_prob(tree: &Tree, u: Node, params: &ModelParams) -> f64 {
    let total = tree.total_length();
    if u == 0 {
        return -params.rho * total;
    }
    log_one_minus_exp_neg(params.rho * total) + tree.branch_length(u).ln() - total.ln()
}

pub fn sample_prune_time<R: Rng + ?Sized>(rng: &mut R, tree: &Tree, u: Node) -> f64 {
    if u == 0 {
        return 0.0;
    }
    let lo = tree.time(u);
    let hi = tree.parent_time(u);
    lo + rng.gen::<f64>() * (hi - lo)
}

pub fn log_prune_density(tree: &Tree, u: Node, r: f64) -> f64 {
    let lo = tree.time(u);
    let hi = tree.parent_time(u);
    if r < lo || r > hi {
        f64::NEG_INFINITY
    } else {
        -(hi - lo).ln()
    }
}

/// Breakpoints `r = t~_0 < t~_1 < ... < t~_k` and the rate on each
/// interval `(t~_j, t~_{j+1})`, the last one unbounded.
pub fn regraft_time_segments(tree: &Tree, u: Node, r: f64) -> (Vec<f64>, Vec<f64>) {
    let topo = tree.topology();
    let p = topo.parent(u).expect("pruned node is not the root");
    let t_p = tree.time(p);
    let mut cuts = vec![r];
    cuts.extend(
        topo.internal_nodes()
            .filter(|&x| x == p || tree.time(x) > r)
            .map(|x| tree.time(x)),
    );
    let k = cuts.len() - 1;
    let rates = (0..=k)
        .map(|j| {
            if cuts[j] >= t_p {
                (k + 1 - j) as f64
            } else {
                (k - j) as f64
            }
        })
        .collect();
    (cuts, rates)
}

pub fn sample_regraft_time<R: Rng + ?Sized>(rng: &mut R, tree: &Tree, u: Node, r: f64) -> f64 {
    let (cuts, rates) = regraft_time_segments(tree, u, r);
    let mut hazard = -(1.0 - rng.gen::<f64>()).ln();
    for j in 0..cuts.len() {
        let rate = rates[j];
        if j + 1 == cuts.len() {
            return cuts[j] + hazard / rate;
        }
        let width = cuts[j + 1] - cuts[j];
        if rate > 0.0 && hazard < rate * width {
            return cuts[j] + hazard / rate;
        }
        hazard -= rate * width;
    }
    unreachable!("last segment is unbounded")
}

pub fn log_regraft_time_density(tree: &Tree, u: Node, r: f64, w: f64) -> f64 {
    if !(w > r) {
        return f64::NEG_INFINITY;
    }
    let (cuts, rates) = regraft_time_segments(tree, u, r);
    let mut log_survival = 0.0;
    for j in 0..cuts.len() {
        let upper = cuts.get(j + 1).copied().unwrap_or(f64::INFINITY);
        if w < upper {
            let rate = rates[j];
            if rate <= 0.0 {
                return f64::NEG_INFINITY;
            }
            return log_survival + rate.ln() - rate * (w - cuts[j]);
        }
        log_survival -= rates[j] * (upper - cuts[j]);
    }
    f64::NEG_INFINITY
}

/// Branches of the tree left after pruning `u` that cross time `w`, each
/// named by its lower node (the sibling of `u` carries its old parent's
/// branch).
pub fn regraft_candidates(tree: &Tree, u: Node, w: f64) -> Vec<Node> {
    let topo = tree.topology();
    let Some(p) = topo.parent(u) else {
        return Vec::new();
    };
    (1..=topo.root())
        .filter(|&n| n != u && n != p && !topo.is_descendant(n, u))
        .filter(|&n| {
            let top = topo.pruned_parent(u, n).map_or(f64::INFINITY, |x| tree.time(x));
            w > tree.time(n) && w < top
        })
        .collect()
}

pub fn sample_regraft_node<R: Rng + ?Sized>(rng: &mut R, tree: &Tree, u: Node, w: f64) -> Result<Node> {
    let cands = regraft_candidates(tree, u, w);
    if cands.is_empty() {
        return Err(Error::Numerical(format!("no branch crosses regraft time {w}")));
    }
    Ok(cands[rng.gen_range(0..cands.len())])
}

pub fn log_regraft_node_prob(tree: &Tree, u: Node, v: Node, w: f64) -> f64 {
    let cands = regraft_candidates(tree, u, w);
    if cands.contains(&v) {
        -(cands.len() as f64).ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Log density of the SPR quadruple alone, without checking the next tree.
pub fn op_log_density(tree: &Tree, op: &SprOp, params: &ModelParams) -> f64 {
    if op.is_identity() {
        return log_recomb_node_prob(tree, 0, params);
    }
    log_recomb_node_prob(tree, op.u, params)
        + log_prune_density(tree, op.u, op.r)
        + log_regraft_time_density(tree, op.u, op.r, op.w)
        + log_regraft_node_prob(tree, op.u, op.v, op.w)
}

pub fn transition_log_density(current: &DecoratedTree, next: &Tree, params: &ModelParams) -> Result<f64> {
    let expected = apply_spr(&current.tree, &current.op)
        .map_err(|e| Error::InconsistentTransition(e.to_string()))?;
    let same = expected.topology() == next.topology()
        && expected
            .times()
            .iter()
            .zip(next.times())
            .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    if !same {
        return Err(Error::InconsistentTransition(
            "tree differs from the result of applying the operation".into(),
        ));
    }
    Ok(op_log_density(&current.tree, &current.op, params))
}

pub fn site_log_likelihood(tree: &Tree, ones: Clade, params: &ModelParams) -> f64 {
    let total = tree.total_length();
    match tree.topology().mutation_branch(ones) {
        MutationBranch::NoMutation => -params.theta * total,
        MutationBranch::Branch(b) => {
            log_one_minus_exp_neg(params.theta * total) + tree.branch_length(b).ln() - total.ln()
        }
        MutationBranch::Incompatible => f64::NEG_INFINITY,
    }
}

/// Draws a full SPR quadruple from the prior kernel.
pub fn sample_op<R: Rng + ?Sized>(rng: &mut R, tree: &Tree, params: &ModelParams) -> Result<SprOp> {
    let u = sample_recomb_node(rng, tree, params);
    if u == 0 {
        return Ok(SprOp::IDENTITY);
    }
    let r = sample_prune_time(rng, tree, u);
    let w = sample_regraft_time(rng, tree, u, r);
    let v = sample_regraft_node(rng, tree, u, w)?;
    Ok(SprOp { u, v, r, w })
}

pub fn sample_column<R: Rng + ?Sized>(rng: &mut R, tree: &Tree, params: &ModelParams) -> Clade {
    let total = tree.total_length();
    if rng.gen::<f64>() < (-params.theta * total).exp() {
        return Clade::EMPTY;
    }
    let mut x = rng.gen::<f64>() * total;
    let root = tree.topology().root();
    let mut branch = root - 1;
    for n in 1..root {
        x -= tree.branch_length(n);
        if x < 0.0 {
            branch = n;
            break;
        }
    }
    tree.topology().clade(branch)
}

#[derive(Clone, Debug)]
pub struct Simulation {
    /// One decorated tree per site; the last carries the identity.
    pub trees: Vec<DecoratedTree>,
    pub data: DataMatrix,
}

pub fn simulate_smc<R: Rng + ?Sized>(
    rng: &mut R,
    n_leaves: usize,
    n_sites: usize,
    params: &ModelParams,
) -> Result<Simulation> {
    if n_sites == 0 {
        return Err(Error::Config("need at least one site".into()));
    }
    let mut tree = sample_initial_tree(rng, n_leaves)?;
    let mut trees = Vec::with_capacity(n_sites);
    let mut columns = Vec::with_capacity(n_sites);
    for i in 0..n_sites {
        columns.push(sample_column(rng, &tree, params));
        let op = if i + 1 < n_sites {
            sample_op(rng, &tree, params)?
        } else {
            SprOp::IDENTITY
        };
        let next = apply_spr(&tree, &op)?;
        trees.push(DecoratedTree {
            tree: std::mem::replace(&mut tree, next),
            op,
        });
    }
    Ok(Simulation {
        trees,
        data: DataMatrix::from_columns(n_leaves, columns)?,
    })
}
