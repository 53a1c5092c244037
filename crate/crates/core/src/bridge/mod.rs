//! Bridge proposals: segment selection, topology scanning, time adjustment
//! and sampling of the free times.

pub mod adjust;
pub mod sample;
pub mod scan;

pub use adjust::{expand_op_choices, time_adjust, Plan, RunLayout};
pub use sample::{sample_bridge, BridgeDraw, Gap};
pub use scan::{scan_with_extra, tree_scan, ScanAbort, TopoPath};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    /// Conditioned on the right end only; covers the first genome site.
    Leftmost,
    Interior,
    /// Conditioned on the left end only; covers the last genome site.
    Rightmost,
}

/// Sites `left..=right` (0-based) updated by one bridge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Segment {
    pub index: usize,
    pub left: usize,
    pub right: usize,
    pub kind: SegmentKind,
}

impl Segment {
    pub fn conditioned_left(&self) -> bool {
        self.kind != SegmentKind::Leftmost
    }

    pub fn conditioned_right(&self) -> bool {
        self.kind != SegmentKind::Rightmost
    }

    /// Segregating sites inside the segment.
    pub fn segregating_sites(&self, segregating: &[usize]) -> Vec<usize> {
        segregating
            .iter()
            .copied()
            .filter(|&s| s >= self.left && s <= self.right)
            .collect()
    }
}

/// Splits the genome into overlapping bridges over `2m+1` segregating sites.
///
/// Segment 0 runs from the first site to segregating site `m+1`; segment `j`
/// runs between segregating sites `m(j-1)+1` and `m(j+1)+1`; the last one
/// ends at the final genome site (segregating sites counted from 1).
pub fn select_segments(segregating: &[usize], m: usize, n_sites: usize) -> Result<Vec<Segment>> {
    let ms = segregating.len();
    if m == 0 {
        return Err(Error::Config("bridge half-width m must be at least 1".into()));
    }
    if ms <= m + 1 {
        return Err(Error::Config(format!(
            "{ms} segregating sites are too few for m = {m}; need more than {}",
            m + 1
        )));
    }
    let last = (ms - 2) / m;
    let mut out = Vec::with_capacity(last + 1);
    out.push(Segment {
        index: 0,
        left: 0,
        right: segregating[m],
        kind: SegmentKind::Leftmost,
    });
    for j in 1..last {
        out.push(Segment {
            index: j,
            left: segregating[m * (j - 1)],
            right: segregating[m * (j + 1)],
            kind: SegmentKind::Interior,
        });
    }
    out.push(Segment {
        index: last,
        left: segregating[m * (last - 1)],
        right: n_sites - 1,
        kind: SegmentKind::Rightmost,
    });
    Ok(out)
}
