//! Property suites checking the samplers and the scan against the oracles.
//! Each returns a [`Check`] instead of panicking so callers can report.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bridge::scan::{tree_scan, TopoPath};
use crate::chain::{run_chain, ChainConfig, Recorder};
use crate::colour::colour_tree;
use crate::data::{preprocess, PreprocessOptions};
use crate::init::initial_state;
use crate::oracles::{
    all_ranked_topologies, brute_force_compatible_sprs, exhaustive_tree_scan, integrate, GapHistory,
};
use crate::smc::{
    log_regraft_time_density, regraft_time_segments, sample_initial_tree, sample_prune_time, sample_recomb_node,
    simulate_smc, ModelParams,
};
use crate::tree::{Clade, Topology};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Check {
        Check {
            name: name.into(),
            passed,
            detail,
        }
    }
}

/// A non-constant column colouring `topo` into more than one maximal black
/// subtree.
pub fn random_split_column<R: Rng + ?Sized>(rng: &mut R, topo: &Topology) -> Option<Clade> {
    let n = topo.n_leaves();
    let all = Clade::all(n).0;
    for _ in 0..10_000 {
        let c = Clade(rng.gen::<u128>() & all);
        if c.is_empty() || c.0 == all {
            continue;
        }
        if colour_tree(topo, c).count_maximal_black_subtrees() > 1 {
            return Some(c);
        }
    }
    None
}

/// Every SPR found by brute force on a ranked tree is among the colour
/// heuristic's candidates.
pub fn theorem1(max_leaves: usize, columns_per_topology: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut cases, mut exceptions, mut topologies) = (0usize, 0usize, 0usize);
    let mut first = String::new();
    for n in 3..=max_leaves {
        let topos = match all_ranked_topologies(n) {
            Ok(t) => t,
            Err(e) => return Check::new("theorem1", false, e.to_string()),
        };
        for topo in topos {
            topologies += 1;
            let tree = topo.ranked_tree();
            let mut verdicts: HashMap<Clade, bool> = HashMap::new();
            for _ in 0..columns_per_topology {
                let Some(col) = random_split_column(&mut rng, &topo) else {
                    continue;
                };
                cases += 1;
                let ok = *verdicts.entry(col).or_insert_with(|| {
                    let heuristic: BTreeSet<_> = colour_tree(&topo, col).heuristic_sprs().into_iter().collect();
                    brute_force_compatible_sprs(&tree, col).is_ok_and(|b| b.is_subset(&heuristic))
                });
                if !ok {
                    exceptions += 1;
                    if first.is_empty() {
                        first = format!(" first: {:?} column {:?}", topo.rows(), col);
                    }
                }
            }
        }
    }
    Check::new(
        "theorem1",
        exceptions == 0 && cases > 0,
        format!("{topologies} topologies, {cases} columns, {exceptions} exceptions{first}"),
    )
}

/// The regraft-time density integrates to one.
pub fn regraft_density_integrals(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.gen_range(3..=8);
        let tree = sample_initial_tree(&mut rng, n).expect("n >= 2");
        let root = tree.topology().root();
        let u = rng.gen_range(1..root);
        let r = sample_prune_time(&mut rng, &tree, u);
        let (cuts, _) = regraft_time_segments(&tree, u, r);
        let density = |w: f64| log_regraft_time_density(&tree, u, r, w).exp();
        let mut total = 0.0;
        for win in cuts.windows(2) {
            match integrate(density, win[0], win[1], 1e-10) {
                Ok(v) => total += v,
                Err(e) => return Check::new("regraft_density", false, e.to_string()),
            }
        }
        match integrate(density, *cuts.last().expect("non-empty"), f64::INFINITY, 1e-10) {
            Ok(v) => total += v,
            Err(e) => return Check::new("regraft_density", false, e.to_string()),
        }
        worst = worst.max((total - 1.0).abs());
    }
    Check::new(
        "regraft_density",
        worst <= 1e-6,
        format!("{cases} cases, max |integral - 1| = {worst:.3e}"),
    )
}

fn z_score(count: usize, draws: usize, p: f64) -> f64 {
    let mean = draws as f64 * p;
    (count as f64 - mean) / (mean * (1.0 - p)).sqrt()
}

/// Frequency of "no recombination" under the recombination-node kernel
/// against `exp(-rho L)`.
pub fn recombination_split(draws: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = sample_initial_tree(&mut rng, 6).expect("n >= 2");
    let rho = std::f64::consts::LN_2 / tree.total_length() * 0.6;
    let params = ModelParams::new(1.0, rho).expect("valid rates");
    let p = (-rho * tree.total_length()).exp();
    let none = (0..draws)
        .filter(|_| sample_recomb_node(&mut rng, &tree, &params) == 0)
        .count();
    let z = z_score(none, draws, p);
    Check::new(
        "recombination_split",
        z.abs() <= 4.0,
        format!("{draws} draws, expected {p:.5}, observed {:.5}, z = {z:.2}", none as f64 / draws as f64),
    )
}

/// Ranked topologies drawn from the initial-tree prior on four leaves are
/// uniform.
pub fn initial_topology_frequencies(draws: usize, seed: u64) -> Check {
    let topos = all_ranked_topologies(4).expect("small n");
    let index: HashMap<Topology, usize> = topos.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
    let mut counts = vec![0usize; topos.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..draws {
        let t = sample_initial_tree(&mut rng, 4).expect("n >= 2");
        counts[index[t.topology()]] += 1;
    }
    let p = 1.0 / topos.len() as f64;
    let worst = counts.iter().map(|&c| z_score(c, draws, p).abs()).fold(0.0, f64::max);
    Check::new(
        "initial_topology",
        worst <= 4.0,
        format!("{} topologies, {draws} draws, max |z| = {worst:.2}", topos.len()),
    )
}

fn history(path: &TopoPath) -> GapHistory {
    let mut out = Vec::with_capacity(path.counts.len());
    let mut at = 1;
    for &c in &path.counts {
        out.push(path.topos[at..at + c].to_vec());
        at += c;
    }
    out
}

/// The colour-guided scan against unrestricted enumeration: identical when
/// the enumeration needs at most one SPR per gap, a subset otherwise.
pub fn scan_against_exhaustive(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut equal, mut subset, mut failures) = (0usize, 0usize, 0usize);
    let mut tried = 0;
    while equal + subset + failures < instances && tried < 100 * instances {
        tried += 1;
        let n = rng.gen_range(3..=6);
        let start = sample_initial_tree(&mut rng, n).expect("n >= 2").into_topology();
        let all = Clade::all(n).0;
        let sites = rng.gen_range(2..=4);
        let mut columns = vec![Clade::EMPTY];
        for _ in 1..sites {
            columns.push(Clade(rng.gen::<u128>() & all));
        }
        let widths: Vec<usize> = (1..sites).map(|_| rng.gen_range(1..=3)).collect();
        let Ok(exhaustive) = exhaustive_tree_scan(&start, &columns, &widths) else {
            continue;
        };
        if exhaustive.is_empty() {
            continue;
        }
        let heuristic: HashSet<GapHistory> = match tree_scan(&start, &columns, &widths, None, usize::MAX) {
            Ok(paths) => paths.iter().map(history).collect(),
            Err(_) => HashSet::new(),
        };
        let single = exhaustive.iter().all(|h| h.iter().all(|g| g.len() <= 1));
        if single {
            if heuristic == exhaustive {
                equal += 1;
            } else {
                failures += 1;
            }
        } else if heuristic.is_subset(&exhaustive) {
            subset += 1;
        } else {
            let counts = |h: &GapHistory| h.iter().map(Vec::len).collect::<Vec<_>>();
            let e_counts: HashSet<Vec<usize>> = exhaustive.iter().map(counts).collect();
            if heuristic.iter().any(|h| e_counts.contains(&counts(h))) {
                failures += 1;
            } else {
                subset += 1;
            }
        }
    }
    Check::new(
        "scan_vs_exhaustive",
        failures == 0 && equal > 0,
        format!("{equal} equal, {subset} subset, {failures} mismatches"),
    )
}

/// Chains on simulated data with full re-validation after every accepted
/// move; any violation aborts the chain with an error.
pub fn compatibility_sweep(min_updates: usize, seed: u64) -> Check {
    let params = ModelParams::new(0.01, 0.004).expect("valid rates");
    let mut updates = 0;
    let mut chains = 0;
    let mut k = 0;
    while updates < min_updates && k < 100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k));
        k += 1;
        let n = rng.gen_range(4..=7);
        let Ok(sim) = simulate_smc(&mut rng, n, 1500, &params) else {
            continue;
        };
        let Ok(data) = preprocess(&sim.data.to_raw(), None, &PreprocessOptions::default()) else {
            continue;
        };
        if data.segregating().len() < 3 {
            continue;
        }
        let result = initial_state(&data).and_then(|init| {
            let mut config = ChainConfig::new(params);
            config.iterations = 2000;
            config.seed = seed + k;
            config.check_invariants = true;
            run_chain(&data, &config, init, &mut Recorder::default())
        });
        match result {
            Ok(summary) if summary.final_state.is_compatible(&data) => {
                updates += summary.iterations;
                chains += 1;
            }
            Ok(_) => return Check::new("compatibility", false, format!("chain {k} ended incompatible")),
            Err(e) => return Check::new("compatibility", false, format!("chain {k}: {e}")),
        }
    }
    Check::new(
        "compatibility",
        updates >= min_updates,
        format!("{chains} chains, {updates} checked updates, 0 violations"),
    )
}
