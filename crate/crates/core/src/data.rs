//! Binary haplotype matrices: parsing, filtering and segregating sites.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::tree::{Clade, MAX_LEAVES};

/// What happens to a column whose minor allele count is below the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ColumnFilter {
    /// Keep the site but treat it as monomorphic.
    #[default]
    Mask,
    /// Delete the site.
    Drop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PreprocessOptions {
    pub dedupe_rows: bool,
    pub min_minor_count: usize,
    pub filter: ColumnFilter,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            dedupe_rows: false,
            min_minor_count: 2,
            filter: ColumnFilter::Mask,
        }
    }
}

/// `N` sequences by `S` sites; each column is stored as the set of sequences
/// carrying a `1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    n: usize,
    columns: Vec<Clade>,
    segregating: Vec<usize>,
    positions: Vec<u64>,
    row_origin: Vec<usize>,
}

impl DataMatrix {
    pub fn from_columns(n: usize, columns: Vec<Clade>) -> Result<Self> {
        let positions = (0..columns.len() as u64).collect();
        Self::build(n, columns, positions, (0..n).collect())
    }

    fn build(n: usize, columns: Vec<Clade>, positions: Vec<u64>, row_origin: Vec<usize>) -> Result<Self> {
        if !(2..=MAX_LEAVES).contains(&n) {
            return Err(Error::Data(format!("need 2..={MAX_LEAVES} sequences, got {n}")));
        }
        if columns.is_empty() {
            return Err(Error::Data("matrix has no sites".into()));
        }
        let all = Clade::all(n);
        if let Some(i) = columns.iter().position(|c| !c.is_subset(all)) {
            return Err(Error::Data(format!("column {i} refers to sequences beyond {n}")));
        }
        let segregating = columns
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_empty() && **c != all)
            .map(|(i, _)| i)
            .collect();
        Ok(DataMatrix {
            n,
            columns,
            segregating,
            positions,
            row_origin,
        })
    }

    pub fn n_sequences(&self) -> usize {
        self.n
    }

    pub fn n_sites(&self) -> usize {
        self.columns.len()
    }

    /// Carriers of the derived allele at site `i` (0-based).
    pub fn column(&self, i: usize) -> Clade {
        self.columns[i]
    }

    pub fn columns(&self) -> &[Clade] {
        &self.columns
    }

    /// 0-based indices of columns with at least one `0` and one `1`.
    pub fn segregating(&self) -> &[usize] {
        &self.segregating
    }

    /// Original coordinate of each site.
    pub fn positions(&self) -> &[u64] {
        &self.positions
    }

    /// Input row index of each retained sequence.
    pub fn row_origin(&self) -> &[usize] {
        &self.row_origin
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.columns.len());
        for leaf in 1..=self.n {
            out.extend(self.columns.iter().map(|c| if c.contains(leaf) { '1' } else { '0' }));
            out.push('\n');
        }
        out
    }
}

/// Unfiltered matrix as read from text.
#[derive(Clone, Debug, PartialEq)]
pub struct RawMatrix {
    pub rows: Vec<Vec<u8>>,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn parse_matrix(text: &str) -> Result<RawMatrix> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or(Error::DataParse {
        line: 1,
        column: 1,
        message: "missing 'N S' header".into(),
    })?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    let parse_dim = |k: usize| -> Result<usize> {
        dims.get(k).and_then(|x| x.parse().ok()).ok_or(Error::DataParse {
            line: hline,
            column: 1,
            message: format!("header must be 'N S', got '{header}'"),
        })
    };
    let (n, s) = (parse_dim(0)?, parse_dim(1)?);
    if dims.len() != 2 {
        return Err(Error::DataParse {
            line: hline,
            column: 1,
            message: format!("header must be 'N S', got '{header}'"),
        });
    }
    let mut rows = Vec::with_capacity(n);
    let mut last_line = hline;
    for (lineno, line) in lines {
        last_line = lineno;
        if rows.len() == n {
            return Err(Error::DataParse {
                line: lineno,
                column: 1,
                message: format!("more than {n} sequence rows"),
            });
        }
        let mut row = Vec::with_capacity(s);
        for (col, ch) in line.chars().enumerate() {
            match ch {
                '0' => row.push(0),
                '1' => row.push(1),
                ' ' | '\t' => {}
                other => {
                    return Err(Error::DataParse {
                        line: lineno,
                        column: col + 1,
                        message: format!("non-binary character '{other}'"),
                    })
                }
            }
        }
        if row.len() != s {
            return Err(Error::DataParse {
                line: lineno,
                column: 1,
                message: format!("expected {s} sites, found {}", row.len()),
            });
        }
        rows.push(row);
    }
    if rows.len() != n {
        return Err(Error::DataParse {
            line: last_line,
            column: 1,
            message: format!("expected {n} sequence rows, found {}", rows.len()),
        });
    }
    Ok(RawMatrix { rows })
}

pub fn parse_positions(text: &str, n_sites: usize) -> Result<Vec<u64>> {
    let mut out = Vec::with_capacity(n_sites);
    for (lineno, line) in content_lines(text) {
        let x = line.parse::<u64>().map_err(|_| Error::DataParse {
            line: lineno,
            column: 1,
            message: format!("invalid position '{line}'"),
        })?;
        out.push(x);
    }
    if out.len() != n_sites {
        return Err(Error::Data(format!(
            "positions file has {} entries for {n_sites} sites",
            out.len()
        )));
    }
    Ok(out)
}

pub fn preprocess(raw: &RawMatrix, positions: Option<Vec<u64>>, opts: &PreprocessOptions) -> Result<DataMatrix> {
    let s = raw.rows.first().map_or(0, |r| r.len());
    let mut positions = positions.unwrap_or_else(|| (0..s as u64).collect());
    if positions.len() != s {
        return Err(Error::Data(format!("{} positions for {s} sites", positions.len())));
    }
    let mut row_origin = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in raw.rows.iter().enumerate() {
        if !opts.dedupe_rows || seen.insert(row.clone()) {
            row_origin.push(i);
        }
    }
    let n = row_origin.len();
    if n < 2 {
        return Err(Error::Data(format!("{n} sequences left after removing duplicates")));
    }
    if n > MAX_LEAVES {
        return Err(Error::Data(format!("at most {MAX_LEAVES} sequences are supported, got {n}")));
    }
    let mut columns = Vec::with_capacity(s);
    let mut keep = Vec::with_capacity(s);
    for j in 0..s {
        let mut c = Clade::EMPTY;
        for (leaf, &i) in row_origin.iter().enumerate() {
            if raw.rows[i][j] != 0 {
                c = c.union(Clade::leaf(leaf + 1));
            }
        }
        let minor = c.len().min(n - c.len());
        let filtered = minor < opts.min_minor_count.max(1);
        match (filtered, opts.filter) {
            (true, ColumnFilter::Drop) => {}
            (true, ColumnFilter::Mask) => {
                columns.push(Clade::EMPTY);
                keep.push(j);
            }
            (false, _) => {
                columns.push(c);
                keep.push(j);
            }
        }
    }
    if columns.is_empty() {
        return Err(Error::Data("no sites left after filtering".into()));
    }
    positions = keep.iter().map(|&j| positions[j]).collect();
    DataMatrix::build(n, columns, positions, row_origin)
}

pub fn load_and_preprocess(text: &str, positions: Option<&str>, opts: &PreprocessOptions) -> Result<DataMatrix> {
    let raw = parse_matrix(text)?;
    let s = raw.rows.first().map_or(0, |r| r.len());
    let pos = positions.map(|p| parse_positions(p, s)).transpose()?;
    preprocess(&raw, pos, opts)
}

impl DataMatrix {
    pub fn to_raw(&self) -> RawMatrix {
        RawMatrix {
            rows: (1..=self.n).map(|leaf| self.columns.iter().map(|c| c.contains(leaf) as u8).collect()).collect(),
        }
    }
}
