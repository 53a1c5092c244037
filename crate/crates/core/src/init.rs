//! Greedy near-parsimonious starting state.
//!
//! The first tree displays the longest prefix of pairwise compatible
//! columns. Walking along the segregating sites, a tree is kept while it
//! stays compatible; otherwise the cheapest colouring-guided SPR sequence is
//! taken, preferring results that stay compatible furthest ahead. Dead ends
//! (a gap too short for the SPRs it needs) are resolved by backtracking.
//! Node times are spread over the coalescent prior means once the whole
//! topology path is known.

use std::collections::HashSet;

use crate::bridge::adjust::{expand_op_choices, time_adjust, Plan};
use crate::bridge::sample::realize;
use crate::bridge::scan::TopoPath;
use crate::colour::{colour_tree, Colour, NodeClass};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::smc::coalescence_rate;
use crate::state::{Block, ChainState};
use crate::tree::{canonicalize, spr_ops_between, Clade, Node, RawNode, RawTree, SprOp, Topology};

const LOOKAHEAD: usize = 64;
const SEARCH_BUDGET: usize = 200_000;
const SLOT_FRACTION: f64 = 0.4771;

fn nested_or_disjoint(a: Clade, b: Clade) -> bool {
    !a.intersects(b) || a.is_subset(b) || b.is_subset(a)
}

/// A ranked topology displaying every clade in `clades`, which must be
/// pairwise nested or disjoint.
pub fn perfect_phylogeny(n: usize, clades: &[Clade]) -> Result<Topology> {
    let all = Clade::all(n);
    let mut family: Vec<Clade> = clades
        .iter()
        .copied()
        .filter(|c| c.len() >= 2 && *c != all)
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    family.push(all);
    family.sort_by_key(|c| (c.len(), c.0));
    for (i, a) in family.iter().enumerate() {
        if let Some(b) = family[i + 1..].iter().find(|&&b| !nested_or_disjoint(*a, b)) {
            return Err(Error::Data(format!("clades {a:?} and {b:?} conflict")));
        }
    }
    // (clade, label, height) of the subtrees built so far
    let mut built: Vec<(Clade, Node, usize)> = (1..=n).map(|l| (Clade::leaf(l), l, 0)).collect();
    let mut internal = Vec::with_capacity(n - 1);
    let mut next_label = 2 * n;
    for clade in family {
        let (mut inside, outside): (Vec<_>, Vec<_>) =
            built.into_iter().partition(|(c, _, _)| c.is_subset(clade));
        inside.sort_by_key(|(c, _, _)| c.leaves().next());
        let mut acc = inside[0];
        for &item in &inside[1..] {
            let height = acc.2.max(item.2) + 1;
            internal.push(RawNode {
                label: next_label,
                children: [acc.1, item.1],
                time: (height * 1000 + internal.len()) as f64,
            });
            acc = (acc.0.union(item.0), next_label, height);
            next_label += 1;
        }
        built = outside;
        built.push(acc);
    }
    Ok(canonicalize(&RawTree {
        n_leaves: n,
        internal,
    })?
    .into_topology())
}

/// Topologies reachable through one colouring-guided SPR.
fn guided_successors(topo: &Topology, target: Clade) -> Vec<Topology> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (u, v) in colour_tree(topo, target).heuristic_sprs() {
        for next in topo.spr_successors(u, v) {
            if seen.insert(next.clone()) {
                out.push(next);
            }
        }
    }
    out
}

/// Joins maximal black subtrees pairwise until the column is displayed.
fn merge_steps(topo: &Topology, target: Clade) -> Vec<Topology> {
    let mut steps = Vec::new();
    let mut here = topo.clone();
    while !here.is_compatible(target) {
        let ct = colour_tree(&here, target);
        let roots: Vec<Node> = (1..=here.n_nodes())
            .filter(|&x| ct.colour(x) == Colour::Black && ct.class(x) == NodeClass::SubtreeRoot)
            .collect();
        let next = here.spr_successors(roots[1], roots[0]).into_iter().next();
        match next {
            Some(t) => {
                steps.push(t.clone());
                here = t;
            }
            None => break,
        }
    }
    steps
}

struct Walk<'a> {
    columns: &'a [Clade],
    widths: &'a [usize],
}

impl Walk<'_> {
    fn reach(&self, topo: &Topology, g: usize) -> usize {
        self.columns[g..]
            .iter()
            .take(LOOKAHEAD)
            .take_while(|c| topo.is_compatible(**c))
            .count()
    }

    /// SPR sequences crossing gap `g - 1` into site `g`, best first.
    fn options(&self, topo: &Topology, g: usize) -> Vec<Vec<Topology>> {
        let target = self.columns[g];
        let width = self.widths[g - 1];
        let mut out: Vec<Vec<Topology>> = Vec::new();
        if topo.is_compatible(target) {
            out.push(Vec::new());
        }
        let ranked = |mut found: Vec<Vec<Topology>>| {
            found.sort_by_key(|steps| std::cmp::Reverse(self.reach(steps.last().unwrap_or(topo), g)));
            found
        };
        let firsts = guided_successors(topo, target);
        let ones: Vec<Vec<Topology>> = firsts
            .iter()
            .filter(|y| y.is_compatible(target))
            .map(|y| vec![y.clone()])
            .collect();
        out.extend(ranked(ones));
        if !out.is_empty() || width < 2 {
            return out;
        }
        let mut twos = Vec::new();
        let mut seen = HashSet::new();
        for y in &firsts {
            for z in guided_successors(y, target) {
                if z.is_compatible(target) && seen.insert(z.clone()) {
                    twos.push(vec![y.clone(), z]);
                }
            }
        }
        if twos.is_empty() {
            let merge = merge_steps(topo, target);
            if !merge.is_empty() && merge.len() <= width {
                twos.push(merge);
            }
        }
        out.extend(ranked(twos));
        out
    }

    fn search(&self, start: &Topology) -> Result<Vec<Vec<Topology>>> {
        let n_gaps = self.widths.len();
        let mut chosen: Vec<Vec<Topology>> = Vec::with_capacity(n_gaps);
        let mut stack: Vec<(Vec<Vec<Topology>>, usize)> = Vec::with_capacity(n_gaps);
        let mut budget = SEARCH_BUDGET;
        let mut here = start.clone();
        while chosen.len() < n_gaps {
            let opts = self.options(&here, chosen.len() + 1);
            stack.push((opts, 0));
            loop {
                budget = budget.checked_sub(1).ok_or_else(|| {
                    Error::Refused("initial state search exceeded its budget".into())
                })?;
                let (opts, idx) = stack.last_mut().expect("non-empty stack");
                if *idx < opts.len() {
                    let steps = opts[*idx].clone();
                    *idx += 1;
                    chosen.push(steps);
                    break;
                }
                stack.pop();
                if chosen.pop().is_none() {
                    return Err(Error::Refused("no compatible tree sequence found".into()));
                }
            }
            here = chosen
                .iter()
                .rev()
                .find_map(|s| s.last())
                .unwrap_or(start)
                .clone();
        }
        Ok(chosen)
    }
}

/// Times for the node runs of a plan: runs are layered by the longest chain
/// of runs forced below them, layer `d` sits at the prior mean height of the
/// `d`-th coalescence, and runs sharing a layer are spread inside it.
fn layered_times(plan: &Plan) -> Vec<f64> {
    let layout = &plan.layout;
    let n = layout.n_leaves;
    let n_runs = layout.n_runs();
    let mut order: Vec<usize> = (0..n_runs).collect();
    order.sort_by_key(|&x| (0..n_runs).filter(|&y| layout.reach[y][x]).count());
    let mut depth = vec![0usize; n_runs];
    for &x in &order {
        depth[x] = (0..n_runs)
            .filter(|&y| layout.reach[y][x])
            .map(|y| depth[y] + 1)
            .max()
            .unwrap_or(0);
    }
    let max_depth = depth.iter().copied().max().unwrap_or(0);
    let mut level = Vec::with_capacity(max_depth + 2);
    let mut h = 0.0;
    for d in 0..=max_depth + 1 {
        h += if d + 1 < n { 1.0 / coalescence_rate(n, d) } else { 1.0 };
        level.push(h);
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); max_depth + 1];
    for x in 0..n_runs {
        members[depth[x]].push(x);
    }
    let mut values = vec![0.0; n_runs];
    for (d, runs) in members.iter().enumerate() {
        let span = level[d + 1] - level[d];
        for (j, &x) in runs.iter().enumerate() {
            values[x] = level[d] + span * SLOT_FRACTION * j as f64 / runs.len() as f64;
        }
    }
    values
}

/// A compatible state close to the fewest SPRs the data need.
pub fn initial_state(data: &DataMatrix) -> Result<ChainState> {
    let n = data.n_sequences();
    let seg = data.segregating();
    let columns: Vec<Clade> = seg.iter().map(|&s| data.column(s)).collect();
    let mut prefix: Vec<Clade> = Vec::new();
    for &c in &columns {
        if prefix.iter().all(|&p| nested_or_disjoint(p, c)) {
            prefix.push(c);
        } else {
            break;
        }
    }
    let start = perfect_phylogeny(n, &prefix)?;
    let widths: Vec<usize> = seg.windows(2).map(|w| w[1] - w[0]).collect();
    let walk = Walk {
        columns: &columns,
        widths: &widths,
    };
    let steps = if seg.len() > 1 { walk.search(&start)? } else { Vec::new() };
    let mut path = TopoPath {
        topos: vec![start],
        counts: Vec::with_capacity(steps.len()),
    };
    let mut op_sites = Vec::new();
    for (g, s) in steps.into_iter().enumerate() {
        let c = s.len();
        op_sites.extend(seg[g + 1] - c..seg[g + 1]);
        path.counts.push(c);
        path.topos.extend(s);
    }
    let first_choice: Vec<(Node, Node)> = path
        .topos
        .windows(2)
        .map(|w| spr_ops_between(&w[0], &w[1])[0])
        .collect();
    let plan = std::iter::once(first_choice)
        .chain(expand_op_choices(&path).into_iter().take(64))
        .find_map(|ops| {
            time_adjust(&path, &ops, None, None).map(|layout| Plan {
                path: path.clone(),
                ops,
                layout,
            })
        })
        .ok_or_else(|| Error::Refused("initial tree sequence admits no node times".into()))?;
    let values = layered_times(&plan);
    let prune: Vec<f64> = (0..plan.ops.len())
        .map(|k| {
            let (u, _) = plan.ops[k];
            let p = plan.path.topos[k].parent(u).expect("pruned node has a parent");
            let lo = plan.layout.time_at(k, u, &values);
            let hi = plan.layout.time_at(k, p, &values).min(values[plan.layout.created[k]]);
            lo + SLOT_FRACTION * (hi - lo)
        })
        .collect();
    let (trees, ops) = realize(&plan, &values, &prune)?;
    let mut blocks = Vec::with_capacity(trees.len());
    let mut start_site = 0;
    for (k, tree) in trees.into_iter().enumerate() {
        let (end, op) = match op_sites.get(k) {
            Some(&site) => (site, ops[k]),
            None => (data.n_sites() - 1, SprOp::IDENTITY),
        };
        blocks.push(Block {
            start: start_site,
            end,
            tree,
            op,
        });
        start_site = end + 1;
    }
    ChainState::new(blocks, data.n_sites())
}
