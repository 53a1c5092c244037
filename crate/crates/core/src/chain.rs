//! Metropolis-Hastings updates over segments and node times, and the sweep
//! scheduler.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bridge::adjust::{expand_op_choices, time_adjust, Plan};
use crate::bridge::sample::{log_density, read_values, sample_bridge, Gap};
use crate::bridge::scan::{scan_with_extra, ScanAbort, TopoPath};
use crate::bridge::{select_segments, Segment, SegmentKind};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::smc::{coalescence_rate, log_density_initial, op_log_density, ModelParams};
use crate::state::{block_log_terms, pieces_log_target, segregating_in, Block, ChainState, NodeRuns};
use crate::tree::{Clade, SprOp, Tree};

pub const DEFAULT_PATH_CAP: usize = 100_000;
const RECOMPUTE_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig {
    pub params: ModelParams,
    pub m: usize,
    pub iterations: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub thin: usize,
    /// Worker threads for segment waves; 0 runs segments one by one.
    pub parallel: usize,
    pub path_cap: usize,
    /// Re-validate the whole state after every accepted move.
    pub check_invariants: bool,
}

impl ChainConfig {
    pub fn new(params: ModelParams) -> Self {
        ChainConfig {
            params,
            m: 2,
            iterations: 1000,
            seed: 1,
            burn_in: 0,
            thin: 1,
            parallel: 0,
            path_cap: DEFAULT_PATH_CAP,
            check_invariants: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("bridge half-width m must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Event {
    Accept,
    Reject,
    Skip,
    TimeAccept,
    TimeReject,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Event::Accept => "accept",
            Event::Reject => "reject",
            Event::Skip => "skip",
            Event::TimeAccept => "time_accept",
            Event::TimeReject => "time_reject",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkipReason {
    Scan(ScanAbort),
    /// The current bridge has SPRs outside the gaps a proposal can use.
    TailOps,
    /// The current bridge is not among the regenerated plans.
    AbsentPath,
    Degenerate,
}

/// Everything that goes into one bridge acceptance decision.
#[derive(Clone, Debug, PartialEq)]
pub struct BridgeMove {
    pub segment: Segment,
    pub n_plans: usize,
    pub pieces: Vec<Block>,
    pub log_target_new: f64,
    pub log_target_old: f64,
    pub log_q_forward: f64,
    pub log_q_reverse: f64,
}

impl BridgeMove {
    pub fn log_ratio(&self) -> f64 {
        self.log_target_new - self.log_target_old + self.log_q_reverse - self.log_q_forward
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BridgeOutcome {
    Skipped(SkipReason),
    Decided { accepted: bool, proposal: BridgeMove },
}

/// Sites, columns and conditioning trees of one segment.
#[derive(Clone, Debug)]
pub struct Frame {
    pub segment: Segment,
    pub sites: Vec<usize>,
    pub columns: Vec<Clade>,
    pub gaps: Vec<Gap>,
    pub left: Option<Tree>,
    pub right: Option<Tree>,
    lam_lo: usize,
    lam_hi: usize,
}

impl Frame {
    pub fn new(state: &ChainState, data: &DataMatrix, segment: Segment) -> Frame {
        let sites = segregating_in(data, segment.left, segment.right).to_vec();
        let columns = sites.iter().map(|&s| data.column(s)).collect();
        let gaps = sites
            .windows(2)
            .map(|w| Gap {
                first: w[0],
                width: w[1] - w[0],
            })
            .collect();
        let (l, r) = (segment.left, segment.right);
        let (lam_lo, lam_hi) = match segment.kind {
            SegmentKind::Leftmost => (0, r.saturating_sub(1)),
            SegmentKind::Interior => (l + 1, r.saturating_sub(1)),
            SegmentKind::Rightmost => (l + 1, r),
        };
        Frame {
            segment,
            columns,
            gaps,
            left: segment.conditioned_left().then(|| state.tree_at(segment.left).clone()),
            right: segment.conditioned_right().then(|| state.tree_at(segment.right).clone()),
            sites,
            lam_lo,
            lam_hi,
        }
    }

    fn widths(&self) -> Vec<usize> {
        self.gaps.iter().map(|g| g.width).collect()
    }

    /// Every feasible (topology path, SPR labelling) pair of the segment.
    pub fn plans(&self, cap: usize) -> std::result::Result<Vec<Plan>, ScanAbort> {
        let widths = self.widths();
        let paths: Vec<TopoPath> = match self.segment.kind {
            SegmentKind::Leftmost => {
                let start = self.right.as_ref().expect("conditioned on the right").topology();
                let cols: Vec<Clade> = self.columns.iter().rev().copied().collect();
                let ws: Vec<usize> = widths.iter().rev().copied().collect();
                scan_with_extra(start, &cols, &ws, cap)?
                    .into_iter()
                    .map(|p| p.reversed())
                    .collect()
            }
            _ => {
                let start = self.left.as_ref().expect("conditioned on the left").topology();
                scan_with_extra(start, &self.columns, &widths, cap)?
            }
        };
        let mut plans = Vec::new();
        for path in paths {
            if let Some(t) = &self.right {
                if path.last() != t.topology() {
                    continue;
                }
            }
            for ops in expand_op_choices(&path) {
                if let Some(layout) = time_adjust(&path, &ops, self.left.as_ref(), self.right.as_ref()) {
                    plans.push(Plan {
                        path: path.clone(),
                        ops,
                        layout,
                    });
                    if plans.len() > cap {
                        return Err(ScanAbort::TooManyPaths);
                    }
                }
            }
        }
        Ok(plans)
    }

    /// The current bridge as a plan index, its run times and prune times.
    fn current(&self, state: &ChainState, plans: &[Plan]) -> std::result::Result<(usize, Vec<Tree>, Vec<f64>), SkipReason> {
        let first = self.sites[0];
        let last = *self.sites.last().expect("segment has segregating sites");
        if state.pieces(self.segment.left, first).len() > 1 {
            return Err(SkipReason::TailOps);
        }
        if state.pieces(last, self.segment.right).len() > 1 {
            return Err(SkipReason::TailOps);
        }
        let pieces = state.pieces(first, last);
        let trees: Vec<Tree> = pieces.iter().map(|p| p.tree.clone()).collect();
        let inner = &pieces[..pieces.len() - 1];
        let counts = self
            .gaps
            .iter()
            .map(|g| {
                inner
                    .iter()
                    .filter(|p| p.end >= g.first && p.end < g.first + g.width)
                    .count()
            })
            .collect();
        let path = TopoPath {
            topos: trees.iter().map(|t| t.topology().clone()).collect(),
            counts,
        };
        let ops: Vec<(usize, usize)> = inner.iter().map(|p| (p.op.u, p.op.v)).collect();
        let idx = plans
            .iter()
            .position(|p| p.path == path && p.ops == ops)
            .ok_or(SkipReason::AbsentPath)?;
        let prune = inner.iter().map(|p| p.op.r).collect();
        Ok((idx, trees, prune))
    }

    fn target(&self, pieces: &[Block], data: &DataMatrix, params: &ModelParams) -> f64 {
        pieces_log_target(
            pieces,
            self.segment.kind == SegmentKind::Leftmost,
            self.lam_lo,
            self.lam_hi,
            data,
            params,
        )
    }
}

/// Proposes a new bridge for `segment` and decides acceptance, without
/// touching the state.
pub fn propose_bridge<R: Rng + ?Sized>(
    state: &ChainState,
    data: &DataMatrix,
    segment: Segment,
    params: &ModelParams,
    cap: usize,
    rng: &mut R,
) -> Result<BridgeOutcome> {
    let frame = Frame::new(state, data, segment);
    let plans = match frame.plans(cap) {
        Ok(p) => p,
        Err(abort) => return Ok(BridgeOutcome::Skipped(SkipReason::Scan(abort))),
    };
    let (cur_idx, cur_trees, cur_prune) = match frame.current(state, &plans) {
        Ok(c) => c,
        Err(reason) => return Ok(BridgeOutcome::Skipped(reason)),
    };
    let cur_plan = &plans[cur_idx];
    let cur_values = read_values(cur_plan, &cur_trees)?;
    let log_q_reverse = log_density(plans.len(), cur_plan, &cur_values, &cur_prune, &frame.gaps);
    let draw = match sample_bridge(rng, &plans, &frame.gaps) {
        Ok(d) => d,
        Err(Error::Numerical(_)) => return Ok(BridgeOutcome::Skipped(SkipReason::Degenerate)),
        Err(e) => return Err(e),
    };
    let (left, right) = (segment.left, segment.right);
    let k = draw.ops.len();
    let mut pieces = Vec::with_capacity(k + 1);
    let mut start = left;
    for (i, tree) in draw.trees.into_iter().enumerate() {
        let (end, op) = if i < k {
            (draw.op_sites[i], draw.ops[i])
        } else {
            (right, SprOp::IDENTITY)
        };
        pieces.push(Block { start, end, tree, op });
        start = end + 1;
    }
    let old = state.pieces(left, right);
    let proposal = BridgeMove {
        segment,
        n_plans: plans.len(),
        log_target_new: frame.target(&pieces, data, params),
        log_target_old: frame.target(&old, data, params),
        log_q_forward: draw.log_q,
        log_q_reverse,
        pieces,
    };
    let ratio = proposal.log_ratio();
    let accepted = if ratio.is_nan() {
        false
    } else {
        ratio >= 0.0 || rng.gen::<f64>().ln() < ratio
    };
    Ok(BridgeOutcome::Decided { accepted, proposal })
}

/// One bridge update; returns the event and the change in log posterior.
pub fn mh_bridge_update<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &DataMatrix,
    segment: Segment,
    params: &ModelParams,
    cap: usize,
    rng: &mut R,
) -> Result<(Event, f64)> {
    let outcome = propose_bridge(state, data, segment, params, cap, rng)?;
    apply_outcome(state, outcome)
}

fn apply_outcome(state: &mut ChainState, outcome: BridgeOutcome) -> Result<(Event, f64)> {
    match outcome {
        BridgeOutcome::Skipped(_) => Ok((Event::Skip, 0.0)),
        BridgeOutcome::Decided { accepted: false, .. } => Ok((Event::Reject, 0.0)),
        BridgeOutcome::Decided {
            accepted: true,
            proposal,
        } => {
            let delta = proposal.log_target_new - proposal.log_target_old;
            let seg = proposal.segment;
            state.splice(seg.left, seg.right, proposal.pieces)?;
            Ok((Event::Accept, delta))
        }
    }
}

/// Terms of the log posterior that involve node run `run`, with the run
/// optionally moved to time `t`.
fn run_terms(
    state: &ChainState,
    runs: &NodeRuns,
    run: usize,
    t: Option<f64>,
    data: &DataMatrix,
    params: &ModelParams,
) -> Result<f64> {
    let blocks = state.blocks();
    let last = blocks.len() - 1;
    let mut lp = 0.0;
    for (b, x) in runs.occurrences(run) {
        let mut block = blocks[b].clone();
        if let Some(t) = t {
            block.tree.set_time(x, t)?;
        }
        if b == 0 {
            lp += log_density_initial(&block.tree);
        }
        lp += block_log_terms(&block, block.start, block.end, b < last, data, params);
    }
    if let Some(c) = runs.created_by[run] {
        let mut op = blocks[c].op;
        if let Some(t) = t {
            op.w = t;
        }
        lp += op_log_density(&blocks[c].tree, &op, params);
    }
    Ok(lp)
}

/// Open interval in which run `run` can move without changing any topology
/// or invalidating an SPR.
pub fn run_bounds(state: &ChainState, runs: &NodeRuns, run: usize) -> (f64, f64) {
    let blocks = state.blocks();
    let n = state.n_leaves();
    let root = 2 * n - 1;
    let last = blocks.len() - 1;
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    for (b, x) in runs.occurrences(run) {
        let tree = &blocks[b].tree;
        if x > n + 1 {
            lo = lo.max(tree.time(x - 1));
        }
        if x < root {
            hi = hi.min(tree.time(x + 1));
        }
        if b < last {
            let op = blocks[b].op;
            if op.u == x {
                hi = hi.min(op.r);
            }
            if tree.topology().parent(op.u) == Some(x) {
                lo = lo.max(op.r);
            }
        }
    }
    if let Some(c) = runs.created_by[run] {
        lo = lo.max(blocks[c].op.r);
    }
    (lo, hi)
}

fn sample_truncated_exp<R: Rng + ?Sized>(rng: &mut R, rate: f64, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.gen();
    let mass = if hi.is_finite() {
        -(-rate * (hi - lo)).exp_m1()
    } else {
        1.0
    };
    lo - (-u * mass).ln_1p() / rate
}

/// Moves one node run to a time drawn from a truncated exponential and
/// accepts against the full posterior.
pub fn coalescent_time_update<R: Rng + ?Sized>(
    state: &mut ChainState,
    runs: &NodeRuns,
    run: usize,
    data: &DataMatrix,
    params: &ModelParams,
    rng: &mut R,
) -> Result<(Event, f64)> {
    let n = state.n_leaves();
    let occ = runs.occurrences(run);
    let (b0, x0) = occ[0];
    let current = state.blocks()[b0].tree.time(x0);
    let (lo, hi) = run_bounds(state, runs, run);
    let rate = coalescence_rate(n, x0 - n - 1);
    if !(hi - lo > 0.0) {
        return Ok((Event::TimeReject, 0.0));
    }
    let t = sample_truncated_exp(rng, rate, lo, hi);
    if !(t > lo && t < hi) {
        return Ok((Event::TimeReject, 0.0));
    }
    let before = run_terms(state, runs, run, None, data, params)?;
    let after = match run_terms(state, runs, run, Some(t), data, params) {
        Ok(v) => v,
        Err(Error::InvalidTree(_)) | Err(Error::DegenerateTimes { .. }) => {
            return Ok((Event::TimeReject, 0.0))
        }
        Err(e) => return Err(e),
    };
    let delta = after - before;
    let ratio = delta + rate * (t - current);
    let accepted = !ratio.is_nan() && (ratio >= 0.0 || rng.gen::<f64>().ln() < ratio);
    if !accepted {
        return Ok((Event::TimeReject, 0.0));
    }
    state.set_run_time(runs, run, t)?;
    Ok((Event::TimeAccept, delta))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub log_posterior: f64,
    pub n_recomb: usize,
    pub event: Event,
}

/// Receives the trace and the thinned samples as the chain runs.
pub trait Observer {
    fn trace(&mut self, row: &TraceRow) -> Result<()>;
    fn sample(&mut self, sample_id: usize, state: &ChainState) -> Result<()>;
}

/// Collects everything in memory.
#[derive(Default, Debug, Clone)]
pub struct Recorder {
    pub rows: Vec<TraceRow>,
    pub samples: Vec<ChainState>,
}

impl Observer for Recorder {
    fn trace(&mut self, row: &TraceRow) -> Result<()> {
        self.rows.push(*row);
        Ok(())
    }

    fn sample(&mut self, _sample_id: usize, state: &ChainState) -> Result<()> {
        self.samples.push(state.clone());
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainSummary {
    pub final_state: ChainState,
    pub log_posterior: f64,
    pub iterations: usize,
    pub samples: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub skipped: usize,
    pub time_accepted: usize,
    pub time_rejected: usize,
}

struct Runner<'a, O: Observer> {
    data: &'a DataMatrix,
    config: &'a ChainConfig,
    observer: &'a mut O,
    state: ChainState,
    lp: f64,
    iter: usize,
    samples: usize,
    counts: [usize; 5],
}

impl<O: Observer> Runner<'_, O> {
    fn done(&self) -> bool {
        self.iter >= self.config.iterations
    }

    fn record(&mut self, event: Event, delta: f64) -> Result<()> {
        self.lp += delta;
        self.iter += 1;
        self.counts[event as usize] += 1;
        if self.config.check_invariants && matches!(event, Event::Accept | Event::TimeAccept) {
            self.check()?;
        }
        self.observer.trace(&TraceRow {
            iter: self.iter,
            log_posterior: self.lp,
            n_recomb: self.state.n_recombinations(),
            event,
        })?;
        let c = self.config;
        if self.iter > c.burn_in && (self.iter - c.burn_in) % c.thin == 0 {
            self.samples += 1;
            self.observer.sample(self.samples, &self.state)?;
        }
        Ok(())
    }

    fn check(&self) -> Result<()> {
        if !self.state.is_compatible(self.data) {
            return Err(Error::Numerical(format!(
                "state incompatible with the data after iteration {}",
                self.iter
            )));
        }
        ChainState::new(self.state.blocks().to_vec(), self.state.n_sites())?;
        let fresh = self.state.log_posterior(self.data, &self.config.params);
        if (fresh - self.lp).abs() > RECOMPUTE_TOLERANCE {
            return Err(Error::Numerical(format!(
                "cached log posterior {} differs from recomputed {fresh}",
                self.lp
            )));
        }
        Ok(())
    }

    fn resync(&mut self) -> Result<()> {
        if self.config.check_invariants {
            self.check()?;
        }
        self.lp = self.state.log_posterior(self.data, &self.config.params);
        Ok(())
    }
}

fn stream_rng(seed: u64, sweep: usize, n_segments: usize, segment: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + (sweep * n_segments + segment) as u64);
    rng
}

/// Runs sweeps (every segment left to right, then every node time) until
/// `config.iterations` updates have been made.
pub fn run_chain<O: Observer>(
    data: &DataMatrix,
    config: &ChainConfig,
    initial: ChainState,
    observer: &mut O,
) -> Result<ChainSummary> {
    config.validate()?;
    if initial.n_sites() != data.n_sites() || initial.n_leaves() != data.n_sequences() {
        return Err(Error::Config("initial state does not match the data".into()));
    }
    if !initial.is_compatible(data) {
        return Err(Error::Data("initial state is incompatible with the data".into()));
    }
    let segments = if data.segregating().is_empty() {
        Vec::new()
    } else {
        select_segments(data.segregating(), config.m, data.n_sites())?
    };
    let pool = if config.parallel > 0 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.parallel)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };
    let params = config.params;
    let lp = initial.log_posterior(data, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut run = Runner {
        data,
        config,
        observer,
        state: initial,
        lp,
        iter: 0,
        samples: 0,
        counts: [0; 5],
    };
    let mut sweep = 0;
    while !run.done() {
        match &pool {
            None => {
                for seg in &segments {
                    if run.done() {
                        break;
                    }
                    let (event, delta) =
                        mh_bridge_update(&mut run.state, data, *seg, &params, config.path_cap, &mut rng)?;
                    run.record(event, delta)?;
                }
            }
            Some(pool) => {
                for parity in [0, 1] {
                    let wave: Vec<Segment> = segments.iter().copied().filter(|s| s.index % 2 == parity).collect();
                    let snapshot = &run.state;
                    let outcomes: Vec<Result<BridgeOutcome>> = pool.install(|| {
                        wave.par_iter()
                            .map(|seg| {
                                let mut r = stream_rng(config.seed, sweep, segments.len(), seg.index);
                                propose_bridge(snapshot, data, *seg, &params, config.path_cap, &mut r)
                            })
                            .collect()
                    });
                    for outcome in outcomes {
                        if run.done() {
                            break;
                        }
                        let (event, delta) = apply_outcome(&mut run.state, outcome?)?;
                        run.record(event, delta)?;
                    }
                }
            }
        }
        if !segments.is_empty() {
            run.resync()?;
        }
        let runs = run.state.node_runs()?;
        let mut order: Vec<usize> = (0..runs.n_runs()).collect();
        let times: Vec<f64> = order
            .iter()
            .map(|&r| {
                let (b, x) = runs.occurrences(r)[0];
                run.state.blocks()[b].tree.time(x)
            })
            .collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]).then(a.cmp(&b)));
        for r in order {
            if run.done() {
                break;
            }
            let (event, delta) = coalescent_time_update(&mut run.state, &runs, r, data, &params, &mut rng)?;
            run.record(event, delta)?;
        }
        run.resync()?;
        sweep += 1;
    }
    let [accepted, rejected, skipped, time_accepted, time_rejected] = run.counts;
    Ok(ChainSummary {
        log_posterior: run.lp,
        iterations: run.iter,
        samples: run.samples,
        final_state: run.state,
        accepted,
        rejected,
        skipped,
        time_accepted,
        time_rejected,
    })
}
