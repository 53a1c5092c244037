//! Node trajectories along a topology path and the times they are pinned to.
//!
//! Every SPR deletes the parent of the pruned node and creates the node where
//! it is regrafted; all other internal nodes carry over with their times. A
//! *run* is one physical node between its creation (or the start of the
//! path) and its deletion (or the end). Runs present at an end with a
//! conditioning tree take that tree's time; the rest are free and sampled.

use crate::bridge::scan::TopoPath;
use crate::tree::{move_map, spr_ops_between, Node, Tree, TIME_TOLERANCE};

pub const NO_RUN: usize = usize::MAX;

/// Run bookkeeping for one (path, SPR choice) pair that admits times.
#[derive(Clone, Debug, PartialEq)]
pub struct RunLayout {
    pub n_leaves: usize,
    /// `run_of[k][x]` for internal label `x` at chain position `k`.
    pub run_of: Vec<Vec<usize>>,
    /// Run deleted by SPR `k` (the pruned node's old parent).
    pub deleted: Vec<usize>,
    /// Run created by SPR `k`; its time is the regraft time.
    pub created: Vec<usize>,
    /// Times pinned by the conditioning trees.
    pub pinned: Vec<Option<f64>>,
    /// Unpinned runs in sampling order (first position, then label).
    pub free: Vec<usize>,
    /// `reach[a][b]`: run `a` must be strictly earlier than run `b`.
    pub reach: Vec<Vec<bool>>,
}

impl RunLayout {
    pub fn n_runs(&self) -> usize {
        self.pinned.len()
    }

    /// Open interval allowed for run `x` given the runs already valued.
    pub fn domain(&self, x: usize, values: &[Option<f64>]) -> (f64, f64) {
        let mut lo = 0.0f64;
        let mut hi = f64::INFINITY;
        for (y, v) in values.iter().enumerate() {
            let Some(v) = *v else { continue };
            if y == x {
                continue;
            }
            if self.reach[y][x] {
                lo = lo.max(v);
            }
            if self.reach[x][y] {
                hi = hi.min(v);
            }
        }
        (lo, hi)
    }

    /// Time of node `x` at position `k` (leaves are at zero).
    pub fn time_at(&self, k: usize, x: Node, values: &[f64]) -> f64 {
        if x <= self.n_leaves {
            0.0
        } else {
            values[self.run_of[k][x]]
        }
    }
}

/// A topology path together with the SPR pair chosen for every step.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub path: TopoPath,
    pub ops: Vec<(Node, Node)>,
    pub layout: RunLayout,
}

/// Every way of labelling the steps of `path` with `(u, v)` pairs.
pub fn expand_op_choices(path: &TopoPath) -> Vec<Vec<(Node, Node)>> {
    let mut out: Vec<Vec<(Node, Node)>> = vec![Vec::new()];
    for pair in path.topos.windows(2) {
        let choices = spr_ops_between(&pair[0], &pair[1]);
        let mut longer = Vec::with_capacity(out.len() * choices.len());
        for prefix in &out {
            for &c in &choices {
                let mut p = prefix.clone();
                p.push(c);
                longer.push(p);
            }
        }
        out = longer;
    }
    out
}

/// Pins runs to the conditioning trees and checks that the ordering implied
/// by every topology on the path can still be met. Returns `None` when the
/// path cannot carry times consistent with both ends.
pub fn time_adjust(
    path: &TopoPath,
    ops: &[(Node, Node)],
    left: Option<&Tree>,
    right: Option<&Tree>,
) -> Option<RunLayout> {
    let n = path.topos[0].n_leaves();
    let k_max = path.n_ops();
    if ops.len() != k_max {
        return None;
    }
    if let Some(t) = left {
        if t.topology() != &path.topos[0] {
            return None;
        }
    }
    if let Some(t) = right {
        if t.topology() != path.last() {
            return None;
        }
    }
    let width = 2 * n;
    let mut run_of = vec![vec![NO_RUN; width]; k_max + 1];
    let mut first: Vec<(usize, Node)> = Vec::new();
    let mut last_pos: Vec<usize> = Vec::new();
    for x in n + 1..width {
        run_of[0][x] = first.len();
        first.push((0, x));
        last_pos.push(0);
    }
    let mut deleted = Vec::with_capacity(k_max);
    let mut created = Vec::with_capacity(k_max);
    for k in 0..k_max {
        let (u, _) = ops[k];
        let mm = move_map(&path.topos[k], u, &path.topos[k + 1])?;
        deleted.push(run_of[k][mm.deleted]);
        for x in n + 1..width {
            if x != mm.deleted {
                let run = run_of[k][x];
                run_of[k + 1][mm.map[x]] = run;
                last_pos[run] = k + 1;
            }
        }
        let fresh = first.len();
        run_of[k + 1][mm.created] = fresh;
        first.push((k + 1, mm.created));
        last_pos.push(k + 1);
        created.push(fresh);
    }
    let n_runs = first.len();
    let mut pinned: Vec<Option<f64>> = vec![None; n_runs];
    let mut right_only = Vec::new();
    for run in 0..n_runs {
        let (k0, x0) = first[run];
        let from_left = match left {
            Some(t) if k0 == 0 => Some(t.time(x0)),
            _ => None,
        };
        let from_right = match right {
            Some(t) if last_pos[run] == k_max => {
                let x = (n + 1..width).find(|&x| run_of[k_max][x] == run)?;
                Some(t.time(x))
            }
            _ => None,
        };
        pinned[run] = match (from_left, from_right) {
            (Some(a), Some(b)) if a != b => return None,
            (Some(a), _) => Some(a),
            (None, Some(b)) => {
                right_only.push(b);
                Some(b)
            }
            (None, None) => None,
        };
    }
    // a node recreated at exactly the time of another node would be a
    // measure-zero coincidence of the proposal
    if let Some(t) = left {
        if right_only.iter().any(|b| t.times().contains(b)) {
            return None;
        }
    }
    let mut succ = vec![Vec::new(); n_runs];
    for row in &run_of {
        for x in n + 1..width - 1 {
            let (a, b) = (row[x], row[x + 1]);
            if !succ[a].contains(&b) {
                succ[a].push(b);
            }
        }
    }
    let reach = closure(&succ)?;
    let layout = RunLayout {
        n_leaves: n,
        run_of,
        deleted,
        created,
        free: {
            let mut free: Vec<usize> = (0..n_runs).filter(|&r| pinned[r].is_none()).collect();
            free.sort_by_key(|&r| first[r]);
            free
        },
        pinned,
        reach,
    };
    for run in 0..n_runs {
        let (lo, hi) = layout.domain(run, &layout.pinned);
        match layout.pinned[run] {
            Some(v) => {
                if !(v > lo && v < hi) {
                    return None;
                }
            }
            None => {
                if hi - lo <= TIME_TOLERANCE {
                    return None;
                }
            }
        }
    }
    Some(layout)
}

/// Transitive closure of a DAG; `None` if it has a cycle.
fn closure(succ: &[Vec<usize>]) -> Option<Vec<Vec<bool>>> {
    let n = succ.len();
    let mut indeg = vec![0usize; n];
    for outs in succ {
        for &b in outs {
            indeg[b] += 1;
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut stack: Vec<usize> = (0..n).filter(|&x| indeg[x] == 0).collect();
    while let Some(x) = stack.pop() {
        order.push(x);
        for &b in &succ[x] {
            indeg[b] -= 1;
            if indeg[b] == 0 {
                stack.push(b);
            }
        }
    }
    if order.len() != n {
        return None;
    }
    let mut reach = vec![vec![false; n]; n];
    for &x in order.iter().rev() {
        for &b in &succ[x] {
            reach[x][b] = true;
            let row = reach[b].clone();
            for (y, r) in row.into_iter().enumerate() {
                if r {
                    reach[x][y] = true;
                }
            }
        }
    }
    Some(reach)
}
