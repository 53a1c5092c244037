//! Summaries of posterior samples: pairwise TMRCAs and the modal tree
//! sequence.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::state::ChainState;
use crate::tree::{Node, Topology, Tree};

/// `(start, end, topology)` of every block.
pub type Structure = Vec<(usize, usize, Topology)>;

/// Trees over site ranges, without the SPRs joining them.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeSequence {
    pub blocks: Vec<SequenceBlock>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBlock {
    pub start: usize,
    pub end: usize,
    pub tree: Tree,
}

impl From<&ChainState> for TreeSequence {
    fn from(state: &ChainState) -> Self {
        TreeSequence {
            blocks: state
                .blocks()
                .iter()
                .map(|b| SequenceBlock {
                    start: b.start,
                    end: b.end,
                    tree: b.tree.clone(),
                })
                .collect(),
        }
    }
}

impl TreeSequence {
    pub fn n_leaves(&self) -> usize {
        self.blocks[0].tree.n_leaves()
    }

    /// Block layout and topologies, ignoring times.
    pub fn structure(&self) -> Structure {
        self.blocks
            .iter()
            .map(|b| (b.start, b.end, b.tree.topology().clone()))
            .collect()
    }
}

/// Smallest MRCA time of leaves `a` and `b` over all sites.
pub fn tmrca(seq: &TreeSequence, a: Node, b: Node) -> f64 {
    seq.blocks
        .iter()
        .map(|blk| blk.tree.mrca_time(a, b))
        .fold(f64::INFINITY, f64::min)
}

/// Pairwise TMRCAs of one sample; `pairwise[a-1][b-1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TmrcaSummary {
    pub pairwise: Vec<Vec<f64>>,
    pub scaled: bool,
}

impl TmrcaSummary {
    pub fn of(seq: &TreeSequence) -> Self {
        let n = seq.n_leaves();
        let mut pairwise = vec![vec![0.0; n]; n];
        for a in 1..=n {
            for b in a + 1..=n {
                let t = tmrca(seq, a, b);
                pairwise[a - 1][b - 1] = t;
                pairwise[b - 1][a - 1] = t;
            }
        }
        TmrcaSummary {
            pairwise,
            scaled: false,
        }
    }
}

/// Divides every entry by the largest pairwise mean across samples.
pub fn scale_tmrca(summaries: &[TmrcaSummary]) -> Result<Vec<TmrcaSummary>> {
    let first = summaries
        .first()
        .ok_or_else(|| Error::Data("no TMRCA summaries to scale".into()))?;
    let n = first.pairwise.len();
    let mut max_mean = 0.0f64;
    for a in 0..n {
        for b in a + 1..n {
            let mean = summaries.iter().map(|s| s.pairwise[a][b]).sum::<f64>() / summaries.len() as f64;
            max_mean = max_mean.max(mean);
        }
    }
    if !(max_mean > 0.0) {
        return Err(Error::Numerical("largest mean TMRCA is not positive".into()));
    }
    Ok(summaries
        .iter()
        .map(|s| TmrcaSummary {
            pairwise: s
                .pairwise
                .iter()
                .map(|row| row.iter().map(|x| x / max_mean).collect())
                .collect(),
            scaled: true,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapBlock {
    pub start: usize,
    pub end: usize,
    pub tree: Tree,
    /// First site at which this topology appears in the sequence.
    pub first_site: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapSequence {
    pub blocks: Vec<MapBlock>,
    /// Samples sharing the modal structure.
    pub support: usize,
}

/// The most frequent block structure among `samples` (earliest wins ties),
/// with node times averaged over the samples that share it.
pub fn map_sequence(samples: &[TreeSequence]) -> Result<MapSequence> {
    if samples.is_empty() {
        return Err(Error::Data("no samples to summarise".into()));
    }
    // structure -> (count, first sample index)
    let mut counts: HashMap<Structure, (usize, usize)> = HashMap::new();
    for (i, s) in samples.iter().enumerate() {
        counts.entry(s.structure()).or_insert((0, i)).0 += 1;
    }
    let &(support, first) = counts
        .values()
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
        .expect("non-empty");
    let key = samples[first].structure();
    let matching: Vec<&TreeSequence> = samples.iter().filter(|s| s.structure() == key).collect();
    let mut blocks = Vec::with_capacity(key.len());
    for (i, (start, end, topo)) in key.iter().enumerate() {
        let n_nodes = topo.n_nodes();
        let mut times = vec![0.0; n_nodes];
        for s in &matching {
            for (x, t) in times.iter_mut().enumerate() {
                *t += s.blocks[i].tree.time(x + 1);
            }
        }
        for t in &mut times {
            *t /= matching.len() as f64;
        }
        let first_site = key
            .iter()
            .find(|(_, _, t)| t == topo)
            .map_or(*start, |(s, _, _)| *s);
        blocks.push(MapBlock {
            start: *start,
            end: *end,
            tree: Tree::new(topo.clone(), &times)?,
            first_site,
        });
    }
    Ok(MapSequence { blocks, support })
}
