//! The genome-wide tree sequence as run-length blocks.

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::smc::{log_density_initial, op_log_density, site_log_likelihood, ModelParams};
use crate::tree::{apply_spr, move_map, Node, SprOp, Tree};

/// Sites `start..=end` share `tree`; `op` leads from site `end` to `end+1`
/// (identity on the last block).
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub start: usize,
    pub end: usize,
    pub tree: Tree,
    pub op: SprOp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    blocks: Vec<Block>,
}

impl ChainState {
    /// Checks that the blocks tile `0..n_sites` and that every SPR turns a
    /// block's tree into the next one. Blocks joined by an identity are
    /// merged.
    pub fn new(blocks: Vec<Block>, n_sites: usize) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidTree("empty tree sequence".into()));
        }
        let mut expect = 0;
        for (i, b) in blocks.iter().enumerate() {
            if b.start != expect || b.end < b.start {
                return Err(Error::InvalidTree(format!(
                    "block {i} covers {}..={} but should start at {expect}",
                    b.start, b.end
                )));
            }
            expect = b.end + 1;
            if let Some(next) = blocks.get(i + 1) {
                let got = apply_spr(&b.tree, &b.op)
                    .map_err(|e| Error::InconsistentTransition(format!("block {i}: {e}")))?;
                if got != next.tree {
                    return Err(Error::InconsistentTransition(format!(
                        "SPR at site {} does not produce the next tree",
                        b.end
                    )));
                }
            } else if !b.op.is_identity() {
                return Err(Error::InvalidTree("last block carries an SPR".into()));
            }
        }
        if expect != n_sites {
            return Err(Error::InvalidTree(format!(
                "blocks cover {expect} sites, data has {n_sites}"
            )));
        }
        Ok(ChainState {
            blocks: merge_identity(blocks),
        })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn n_sites(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.end + 1)
    }

    pub fn n_leaves(&self) -> usize {
        self.blocks[0].tree.n_leaves()
    }

    pub fn n_recombinations(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn block_index(&self, site: usize) -> usize {
        self.blocks.partition_point(|b| b.end < site)
    }

    pub fn tree_at(&self, site: usize) -> &Tree {
        &self.blocks[self.block_index(site)].tree
    }

    /// SPR on the transition from `site` to `site + 1`.
    pub fn op_at(&self, site: usize) -> SprOp {
        let b = &self.blocks[self.block_index(site)];
        if b.end == site {
            b.op
        } else {
            SprOp::IDENTITY
        }
    }

    /// Blocks restricted to sites `left..=right`; the last piece keeps the
    /// SPR leaving `right`.
    pub fn pieces(&self, left: usize, right: usize) -> Vec<Block> {
        let mut out = Vec::new();
        for b in &self.blocks[self.block_index(left)..] {
            if b.start > right {
                break;
            }
            let end = b.end.min(right);
            out.push(Block {
                start: b.start.max(left),
                end,
                tree: b.tree.clone(),
                op: if end == b.end { b.op } else { SprOp::IDENTITY },
            });
        }
        out
    }

    /// Replaces sites `left..=right` with `pieces`. The trees at the ends of
    /// the range must match the current ones wherever they are conditioned;
    /// the SPR leaving `right` is kept.
    pub fn splice(&mut self, left: usize, right: usize, pieces: Vec<Block>) -> Result<()> {
        let op_right = self.op_at(right);
        let mut out: Vec<Block> = Vec::with_capacity(self.blocks.len() + pieces.len());
        for b in &self.blocks {
            if b.start >= left {
                break;
            }
            let mut b = b.clone();
            if b.end >= left {
                b.end = left - 1;
                b.op = SprOp::IDENTITY;
            }
            out.push(b);
        }
        let n_new = pieces.len();
        for (i, mut p) in pieces.into_iter().enumerate() {
            if i + 1 == n_new {
                p.op = op_right;
            }
            out.push(p);
        }
        for b in &self.blocks {
            if b.end <= right {
                continue;
            }
            let mut b = b.clone();
            b.start = b.start.max(right + 1);
            out.push(b);
        }
        let n_sites = self.n_sites();
        *self = ChainState::new(out, n_sites)?;
        Ok(())
    }

    /// True when every tree displays every column of its sites.
    pub fn is_compatible(&self, data: &DataMatrix) -> bool {
        self.blocks.iter().all(|b| {
            segregating_in(data, b.start, b.end)
                .iter()
                .all(|&s| b.tree.topology().is_compatible(data.column(s)))
        })
    }

    pub fn log_posterior(&self, data: &DataMatrix, params: &ModelParams) -> f64 {
        let last = self.blocks.len() - 1;
        let mut lp = log_density_initial(&self.blocks[0].tree);
        for (i, b) in self.blocks.iter().enumerate() {
            lp += block_log_terms(b, b.start, b.end, i < last, data, params);
        }
        lp
    }

    /// Moves every occurrence of a node run to time `t`, including the
    /// regraft time of the SPR that creates it.
    pub fn set_run_time(&mut self, runs: &NodeRuns, run: usize, t: f64) -> Result<()> {
        for (b, x) in runs.occurrences(run) {
            self.blocks[b].tree.set_time(x, t)?;
        }
        if let Some(c) = runs.created_by[run] {
            self.blocks[c].op.w = t;
        }
        Ok(())
    }

    /// Node identities across blocks: `runs[b][x]` for internal label `x`
    /// of block `b`, and for each run the block whose SPR created it.
    pub fn node_runs(&self) -> Result<NodeRuns> {
        let n = self.n_leaves();
        let width = 2 * n;
        let mut run_of = Vec::with_capacity(self.blocks.len());
        let mut first = vec![0usize; 0];
        let mut row = vec![usize::MAX; width];
        for (x, slot) in row.iter_mut().enumerate().skip(n + 1) {
            *slot = x - n - 1;
            first.push(0);
        }
        run_of.push(row);
        let mut created_by = vec![None; n - 1];
        for (b, pair) in self.blocks.windows(2).enumerate() {
            let op = pair[0].op;
            let mm = move_map(pair[0].tree.topology(), op.u, pair[1].tree.topology()).ok_or_else(|| {
                Error::InconsistentTransition(format!("cannot follow nodes across block {b}"))
            })?;
            let mut next = vec![usize::MAX; width];
            for x in n + 1..width {
                if x != mm.deleted {
                    next[mm.map[x]] = run_of[b][x];
                }
            }
            next[mm.created] = first.len();
            first.push(b + 1);
            created_by.push(Some(b));
            run_of.push(next);
        }
        Ok(NodeRuns {
            run_of,
            first_block: first,
            created_by,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeRuns {
    pub run_of: Vec<Vec<usize>>,
    pub first_block: Vec<usize>,
    /// Block whose outgoing SPR creates the run (`None` for block-0 nodes).
    pub created_by: Vec<Option<usize>>,
}

impl NodeRuns {
    pub fn n_runs(&self) -> usize {
        self.first_block.len()
    }

    /// `(block, label)` pairs carrying run `run`.
    pub fn occurrences(&self, run: usize) -> Vec<(usize, Node)> {
        let mut out = Vec::new();
        for b in self.first_block[run]..self.run_of.len() {
            match self.run_of[b].iter().position(|&r| r == run) {
                Some(x) => out.push((b, x)),
                None => break,
            }
        }
        out
    }
}

fn merge_identity(blocks: Vec<Block>) -> Vec<Block> {
    let mut out: Vec<Block> = Vec::with_capacity(blocks.len());
    for b in blocks {
        match out.last_mut() {
            Some(prev) if prev.op.is_identity() => {
                prev.end = b.end;
                prev.op = b.op;
            }
            _ => out.push(b),
        }
    }
    out
}

/// Segregating sites in `start..=end`.
pub fn segregating_in(data: &DataMatrix, start: usize, end: usize) -> &[usize] {
    let seg = data.segregating();
    let a = seg.partition_point(|&s| s < start);
    let b = seg.partition_point(|&s| s <= end);
    &seg[a..b]
}

/// Likelihood of sites `lam_lo..=lam_hi` (clipped to the block), the
/// identity transitions inside the block, and its outgoing SPR if
/// `with_op`.
pub fn block_log_terms(
    block: &Block,
    lam_lo: usize,
    lam_hi: usize,
    with_op: bool,
    data: &DataMatrix,
    params: &ModelParams,
) -> f64 {
    let total = block.tree.total_length();
    let mut lp = -params.rho * total * (block.end - block.start) as f64;
    let lo = lam_lo.max(block.start);
    let hi = lam_hi.min(block.end);
    if lo <= hi {
        let seg = segregating_in(data, lo, hi);
        let plain = (hi - lo + 1 - seg.len()) as f64;
        lp -= params.theta * total * plain;
        for &s in seg {
            lp += site_log_likelihood(&block.tree, data.column(s), params);
        }
    }
    if with_op {
        lp += op_log_density(&block.tree, &block.op, params);
    }
    lp
}

/// Log target restricted to what a bridge over `pieces` can change: the
/// initial-tree density if `with_initial`, every transition inside the
/// pieces except the one leaving the last, and the likelihood of sites
/// `lam_lo..=lam_hi`.
pub fn pieces_log_target(
    pieces: &[Block],
    with_initial: bool,
    lam_lo: usize,
    lam_hi: usize,
    data: &DataMatrix,
    params: &ModelParams,
) -> f64 {
    let mut lp = if with_initial {
        log_density_initial(&pieces[0].tree)
    } else {
        0.0
    };
    let last = pieces.len() - 1;
    for (i, p) in pieces.iter().enumerate() {
        lp += block_log_terms(p, lam_lo, lam_hi, i < last, data, params);
    }
    lp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{Clade, Topology};

    fn t4() -> Tree {
        let topo = Topology::from_rows(4, vec![[1, 2], [3, 4], [5, 6]]).unwrap();
        Tree::new(topo, &[0., 0., 0., 0., 0.5, 1.0, 2.0]).unwrap()
    }

    fn two_block_state() -> ChainState {
        let t = t4();
        let op = SprOp { u: 1, v: 3, r: 0.2, w: 0.7 };
        let next = apply_spr(&t, &op).unwrap();
        ChainState::new(
            vec![
                Block { start: 0, end: 3, tree: t, op },
                Block { start: 4, end: 9, tree: next, op: SprOp::IDENTITY },
            ],
            10,
        )
        .unwrap()
    }

    fn data10() -> DataMatrix {
        let mut cols = vec![Clade::EMPTY; 10];
        cols[1] = Clade::from_column(&[1, 1, 0, 0]);
        cols[6] = Clade::from_column(&[1, 0, 1, 1]);
        DataMatrix::from_columns(4, cols).unwrap()
    }

    #[test]
    fn lookup_and_pieces() {
        let s = two_block_state();
        assert_eq!(s.n_recombinations(), 1);
        assert_eq!(s.block_index(3), 0);
        assert_eq!(s.block_index(4), 1);
        assert!(s.op_at(2).is_identity());
        assert!(!s.op_at(3).is_identity());
        let p = s.pieces(2, 5);
        assert_eq!((p[0].start, p[0].end, p[1].start, p[1].end), (2, 3, 4, 5));
        assert!(!p[0].op.is_identity());
    }

    #[test]
    fn splitting_blocks_does_not_change_posterior() {
        let s = two_block_state();
        let data = data10();
        let params = ModelParams::new(0.3, 0.2).unwrap();
        let lp = s.log_posterior(&data, &params);
        let mut pieces = s.pieces(0, 9);
        let b = pieces.remove(1);
        let mut first = b.clone();
        first.end = 6;
        first.op = SprOp::IDENTITY;
        let mut second = b;
        second.start = 7;
        pieces.push(first);
        pieces.push(second);
        let split = pieces_log_target(&pieces, true, 0, 9, &data, &params);
        assert!((lp - split).abs() < 1e-12);
        assert!(s.is_compatible(&data));
    }

    #[test]
    fn naive_per_site_sum() {
        let s = two_block_state();
        let data = data10();
        let params = ModelParams::new(0.3, 0.2).unwrap();
        let mut naive = log_density_initial(s.tree_at(0));
        for site in 0..10 {
            let t = s.tree_at(site);
            naive += site_log_likelihood(t, data.column(site), &params);
            if site + 1 < 10 {
                naive += op_log_density(t, &s.op_at(site), &params);
            }
        }
        assert!((naive - s.log_posterior(&data, &params)).abs() < 1e-10);
    }

    #[test]
    fn splice_back_the_same_pieces() {
        let mut s = two_block_state();
        let before = s.clone();
        let pieces = s.pieces(2, 6);
        s.splice(2, 6, pieces).unwrap();
        assert_eq!(s, before);
        let runs = s.node_runs().unwrap();
        assert_eq!(runs.n_runs(), 4);
        assert_eq!(runs.created_by[3], Some(0));
    }
}
