//! Enumeration of topology paths between segregating sites.

use std::collections::{HashMap, HashSet};

use crate::colour::colour_tree;
use crate::tree::{Clade, Topology};

/// Topologies visited along a segment, one entry per chain position: the
/// starting topology, then the result of every SPR in order. `counts[g]` is
/// the number of SPRs between segregating sites `g` and `g+1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TopoPath {
    pub topos: Vec<Topology>,
    pub counts: Vec<usize>,
}

impl TopoPath {
    pub fn n_ops(&self) -> usize {
        self.topos.len() - 1
    }

    pub fn last(&self) -> &Topology {
        self.topos.last().expect("a path has a start")
    }

    /// Topology at segregating site `g`.
    pub fn at_site(&self, g: usize) -> &Topology {
        let pos: usize = self.counts[..g].iter().sum();
        &self.topos[pos]
    }

    /// The same path read from the other end.
    pub fn reversed(&self) -> TopoPath {
        TopoPath {
            topos: self.topos.iter().rev().cloned().collect(),
            counts: self.counts.iter().rev().copied().collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanAbort {
    /// Some gap needs more SPRs than allowed.
    TooManyOps { gap: usize },
    /// The path set grew beyond the cap.
    TooManyPaths,
}

pub const MAX_OPS_PER_GAP: usize = 2;

struct Successors {
    cache: HashMap<(Topology, Clade), Vec<Topology>>,
}

impl Successors {
    /// Distinct topologies reachable by one SPR whose prune/regraft pair
    /// passes the colouring filter for `target`.
    fn get(&mut self, topo: &Topology, target: Clade) -> &[Topology] {
        self.cache
            .entry((topo.clone(), target))
            .or_insert_with(|| {
                let coloured = colour_tree(topo, target);
                let mut seen = HashSet::new();
                let mut out = Vec::new();
                for (u, v) in coloured.heuristic_sprs() {
                    for next in topo.spr_successors(u, v) {
                        if seen.insert(next.clone()) {
                            out.push(next);
                        }
                    }
                }
                out
            })
    }
}

/// Parsimonious scan from `start` across `columns` (`columns[0]` is the
/// starting site). `widths[g]` is the number of site boundaries in gap `g`,
/// which bounds the SPRs placed there.
///
/// In every gap the smallest SPR count (0, 1 or 2) that lets some current
/// path reach a compatible topology is used and paths needing more are
/// dropped. With `forced_gap = Some(g)`, gap `g` must use exactly one SPR.
pub fn tree_scan(
    start: &Topology,
    columns: &[Clade],
    widths: &[usize],
    forced_gap: Option<usize>,
    cap: usize,
) -> Result<Vec<TopoPath>, ScanAbort> {
    let mut succ = Successors {
        cache: HashMap::new(),
    };
    let mut frontier = vec![TopoPath {
        topos: vec![start.clone()],
        counts: Vec::new(),
    }];
    for (g, &width) in widths.iter().enumerate() {
        let target = columns[g + 1];
        let counts: Vec<usize> = if forced_gap == Some(g) {
            vec![1]
        } else {
            (0..=width.min(MAX_OPS_PER_GAP)).collect()
        };
        let mut next = Vec::new();
        let mut seen = HashSet::new();
        for c in counts {
            if c > width {
                break;
            }
            for path in &frontier {
                extend(path, c, target, &mut succ, &mut |p| {
                    if seen.insert(p.clone()) {
                        next.push(p);
                    }
                });
                if next.len() > cap {
                    return Err(ScanAbort::TooManyPaths);
                }
            }
            if !next.is_empty() {
                break;
            }
        }
        if next.is_empty() {
            return Err(ScanAbort::TooManyOps { gap: g });
        }
        frontier = next;
    }
    Ok(frontier)
}

fn extend(
    path: &TopoPath,
    c: usize,
    target: Clade,
    succ: &mut Successors,
    emit: &mut dyn FnMut(TopoPath),
) {
    let here = path.last().clone();
    let push = |emit: &mut dyn FnMut(TopoPath), steps: &[&Topology]| {
        let mut p = path.clone();
        p.topos.extend(steps.iter().map(|t| (*t).clone()));
        p.counts.push(steps.len());
        emit(p);
    };
    match c {
        0 => {
            if here.is_compatible(target) {
                push(emit, &[]);
            }
        }
        1 => {
            let firsts = succ.get(&here, target).to_vec();
            for y in firsts.iter().filter(|y| y.is_compatible(target)) {
                push(emit, &[y]);
            }
        }
        _ => {
            let firsts = succ.get(&here, target).to_vec();
            for y in &firsts {
                let seconds = succ.get(y, target).to_vec();
                for z in seconds.iter().filter(|z| z.is_compatible(target)) {
                    push(emit, &[y, z]);
                }
            }
        }
    }
}

/// The parsimonious scan plus, for every gap it crosses without an SPR, a
/// variant forcing one SPR into that gap.
pub fn scan_with_extra(
    start: &Topology,
    columns: &[Clade],
    widths: &[usize],
    cap: usize,
) -> Result<Vec<TopoPath>, ScanAbort> {
    let base = tree_scan(start, columns, widths, None, cap)?;
    let mut seen: HashSet<TopoPath> = base.iter().cloned().collect();
    let mut out = base;
    let idle: Vec<usize> = (0..widths.len())
        .filter(|&g| out.iter().all(|p| p.counts[g] == 0))
        .collect();
    for g in idle {
        let Ok(variant) = tree_scan(start, columns, widths, Some(g), cap) else {
            continue;
        };
        for p in variant {
            if seen.insert(p.clone()) {
                out.push(p);
            }
        }
        if out.len() > cap {
            return Err(ScanAbort::TooManyPaths);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caterpillar4() -> Topology {
        Topology::from_rows(4, vec![[1, 2], [3, 5], [4, 6]]).unwrap()
    }

    #[test]
    fn compatible_columns_give_identity_path() {
        let cols = [
            Clade::from_column(&[1, 1, 0, 0]),
            Clade::leaf(4),
            Clade::from_column(&[1, 1, 1, 0]),
        ];
        let paths = tree_scan(&caterpillar4(), &cols, &[3, 2], None, 1000).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].counts, vec![0, 0]);
        assert_eq!(paths[0].topos.len(), 1);
    }

    #[test]
    fn extra_variants_add_one_op_per_idle_gap() {
        let cols = [
            Clade::from_column(&[1, 1, 0, 0]),
            Clade::leaf(4),
            Clade::from_column(&[1, 1, 1, 0]),
        ];
        let paths = scan_with_extra(&caterpillar4(), &cols, &[3, 2], 1000).unwrap();
        assert!(paths.len() > 1);
        let unique: HashSet<_> = paths.iter().collect();
        assert_eq!(unique.len(), paths.len());
        for p in &paths[1..] {
            assert_eq!(p.counts.iter().sum::<usize>(), 1);
        }
    }

    #[test]
    fn incompatible_column_needs_one_op() {
        let cols = [Clade::from_column(&[1, 1, 0, 0]), Clade::from_column(&[0, 1, 1, 0])];
        let paths = tree_scan(&caterpillar4(), &cols, &[1], None, 1000).unwrap();
        assert!(!paths.is_empty());
        for p in &paths {
            assert_eq!(p.counts, vec![1]);
            assert!(p.last().is_compatible(cols[1]));
        }
    }

    #[test]
    fn balanced_tree_conflict_needs_one_op() {
        let balanced = Topology::from_rows(4, vec![[1, 2], [3, 4], [5, 6]]).unwrap();
        let cols = [Clade::from_column(&[1, 1, 0, 0]), Clade::from_column(&[1, 0, 1, 0])];
        let paths = tree_scan(&balanced, &cols, &[1], None, 1000).unwrap();
        assert!(paths.iter().all(|p| p.counts == vec![1]));
        let none = tree_scan(&balanced, &cols, &[1], Some(0), 0);
        assert_eq!(none, Err(ScanAbort::TooManyPaths));
    }
}
