//! Drawing a bridge from a set of plans and evaluating its proposal density.

use rand::Rng;

use crate::bridge::adjust::{Plan, RunLayout};
use crate::error::{Error, Result};
use crate::tree::{apply_spr, SprOp, Tree};

/// Sites available to SPRs between two consecutive segregating sites: the
/// transitions `first, first+1, ..., first+width-1` (transition `i` joins
/// site `i` to site `i+1`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Gap {
    pub first: usize,
    pub width: usize,
}

/// A realised bridge: trees along the plan's path, the SPRs joining them and
/// the transition site of each SPR.
#[derive(Clone, Debug, PartialEq)]
pub struct BridgeDraw {
    pub plan_index: usize,
    pub trees: Vec<Tree>,
    pub ops: Vec<SprOp>,
    pub op_sites: Vec<usize>,
    pub log_q: f64,
}

pub fn ln_choose(n: usize, k: usize) -> f64 {
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

fn sample_exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -(1.0 - rng.gen::<f64>()).ln()
}

/// Draws one plan uniformly, its free times, prune times and SPR sites.
pub fn sample_bridge<R: Rng + ?Sized>(rng: &mut R, plans: &[Plan], gaps: &[Gap]) -> Result<BridgeDraw> {
    if plans.is_empty() {
        return Err(Error::Refused("no feasible bridge plan".into()));
    }
    let plan_index = rng.gen_range(0..plans.len());
    let plan = &plans[plan_index];
    let layout = &plan.layout;
    let mut values = layout.pinned.clone();
    for &x in &layout.free {
        let (lo, hi) = layout.domain(x, &values);
        if !(hi - lo > 0.0) {
            return Err(Error::Numerical(format!("empty free-time domain ({lo}, {hi})")));
        }
        let t = if hi.is_finite() {
            lo + rng.gen::<f64>() * (hi - lo)
        } else {
            lo + sample_exp1(rng)
        };
        values[x] = Some(t);
    }
    let values: Vec<f64> = values.into_iter().map(|v| v.expect("all runs valued")).collect();
    let mut prune = Vec::with_capacity(plan.ops.len());
    for k in 0..plan.ops.len() {
        let (lo, hi) = prune_domain(plan, k, &values);
        prune.push(lo + rng.gen::<f64>() * (hi - lo));
    }
    let mut op_sites = Vec::with_capacity(plan.ops.len());
    for (gap, &c) in gaps.iter().zip(&plan.path.counts) {
        let mut chosen = rand::seq::index::sample(rng, gap.width, c).into_vec();
        chosen.sort_unstable();
        op_sites.extend(chosen.into_iter().map(|i| gap.first + i));
    }
    let (trees, ops) = realize(plan, &values, &prune)?;
    let log_q = log_density(plans.len(), plan, &values, &prune, gaps);
    Ok(BridgeDraw {
        plan_index,
        trees,
        ops,
        op_sites,
        log_q,
    })
}

fn prune_domain(plan: &Plan, k: usize, values: &[f64]) -> (f64, f64) {
    let layout = &plan.layout;
    let (u, _) = plan.ops[k];
    let topo = &plan.path.topos[k];
    let p = topo.parent(u).expect("pruned node has a parent");
    let lo = layout.time_at(k, u, values);
    let hi = layout.time_at(k, p, values).min(values[layout.created[k]]);
    (lo, hi)
}

/// Log proposal density of a bridge given by `plan` with run times
/// `values` and prune times `prune`, with `n_plans` plans to choose from.
pub fn log_density(n_plans: usize, plan: &Plan, values: &[f64], prune: &[f64], gaps: &[Gap]) -> f64 {
    let layout = &plan.layout;
    let mut lq = -(n_plans as f64).ln();
    for (gap, &c) in gaps.iter().zip(&plan.path.counts) {
        lq -= ln_choose(gap.width, c);
    }
    let mut known = layout.pinned.clone();
    for &x in &layout.free {
        let (lo, hi) = layout.domain(x, &known);
        let t = values[x];
        if !(t > lo && t < hi) {
            return f64::NEG_INFINITY;
        }
        lq += if hi.is_finite() { -(hi - lo).ln() } else { -(t - lo) };
        known[x] = Some(t);
    }
    for (k, &r) in prune.iter().enumerate() {
        let (lo, hi) = prune_domain(plan, k, values);
        if !(r >= lo && r <= hi) {
            return f64::NEG_INFINITY;
        }
        lq -= (hi - lo).ln();
    }
    lq
}

/// Trees and SPR quadruples for the given run and prune times, checked
/// against the SPR semantics.
pub fn realize(plan: &Plan, values: &[f64], prune: &[f64]) -> Result<(Vec<Tree>, Vec<SprOp>)> {
    let layout = &plan.layout;
    let mut trees = Vec::with_capacity(plan.path.topos.len());
    for (k, topo) in plan.path.topos.iter().enumerate() {
        trees.push(Tree::new(topo.clone(), &node_times(layout, k, values))?);
    }
    let mut ops = Vec::with_capacity(plan.ops.len());
    for (k, &(u, v)) in plan.ops.iter().enumerate() {
        let op = SprOp {
            u,
            v,
            r: prune[k],
            w: values[layout.created[k]],
        };
        let next = apply_spr(&trees[k], &op)?;
        if next != trees[k + 1] {
            return Err(Error::InconsistentTransition(format!(
                "SPR {k} of the bridge does not produce the planned tree"
            )));
        }
        ops.push(op);
    }
    Ok((trees, ops))
}

fn node_times(layout: &RunLayout, k: usize, values: &[f64]) -> Vec<f64> {
    let n = layout.n_leaves;
    (1..2 * n).map(|x| layout.time_at(k, x, values)).collect()
}

/// Run times read off an existing tree sequence following `plan`.
pub fn read_values(plan: &Plan, trees: &[Tree]) -> Result<Vec<f64>> {
    let layout = &plan.layout;
    let n = layout.n_leaves;
    let mut values: Vec<Option<f64>> = vec![None; layout.n_runs()];
    for (k, tree) in trees.iter().enumerate() {
        for x in n + 1..2 * n {
            let run = layout.run_of[k][x];
            let t = tree.time(x);
            match values[run] {
                None => values[run] = Some(t),
                Some(prev) if prev != t => {
                    return Err(Error::InconsistentTransition(format!(
                        "node run {run} has times {prev} and {t}"
                    )))
                }
                Some(_) => {}
            }
        }
    }
    values
        .into_iter()
        .map(|v| v.ok_or_else(|| Error::InconsistentTransition("unvisited node run".into())))
        .collect()
}
