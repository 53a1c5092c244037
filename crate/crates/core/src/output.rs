//! Run output files: trace, thinned samples, TMRCAs, MAP sequence and the
//! resolved configuration.
//!
//! Sites are written 1-based and inclusive.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::chain::{ChainConfig, Observer, TraceRow};
use crate::diagnostics::{MapSequence, SequenceBlock, TmrcaSummary, TreeSequence};
use crate::error::{Error, Result};
use crate::newick::{parse_newick, to_newick};
use crate::state::ChainState;

pub const TRACE_FILE: &str = "trace.csv";
pub const SAMPLES_FILE: &str = "samples.trees";
pub const TMRCA_FILE: &str = "tmrca.csv";
pub const MAP_FILE: &str = "map.trees";
pub const CONFIG_FILE: &str = "config.txt";

pub const TRACE_HEADER: &str = "iter,log_posterior,n_recomb,event";
pub const TMRCA_HEADER: &str = "sample,a,b,tmrca";

pub fn write_sample<W: Write>(out: &mut W, sample_id: usize, seq: &TreeSequence) -> std::io::Result<()> {
    for b in &seq.blocks {
        writeln!(out, "{sample_id}\t{}\t{}\t{}", b.start + 1, b.end + 1, to_newick(&b.tree))?;
    }
    Ok(())
}

pub fn write_tmrca_rows<W: Write>(out: &mut W, sample_id: usize, summary: &TmrcaSummary) -> std::io::Result<()> {
    let n = summary.pairwise.len();
    for a in 1..=n {
        for b in a + 1..=n {
            writeln!(out, "{sample_id},{a},{b},{}", summary.pairwise[a - 1][b - 1])?;
        }
    }
    Ok(())
}

/// Streams chain output into a directory.
pub struct FileObserver {
    trace: BufWriter<File>,
    samples: BufWriter<File>,
    tmrca: BufWriter<File>,
}

impl FileObserver {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
        let mut trace = open(TRACE_FILE)?;
        writeln!(trace, "{TRACE_HEADER}")?;
        let mut tmrca = open(TMRCA_FILE)?;
        writeln!(tmrca, "{TMRCA_HEADER}")?;
        Ok(FileObserver {
            trace,
            samples: open(SAMPLES_FILE)?,
            tmrca,
        })
    }

    pub fn flush(&mut self) -> Result<()> {
        self.trace.flush()?;
        self.samples.flush()?;
        self.tmrca.flush()?;
        Ok(())
    }
}

impl Observer for FileObserver {
    fn trace(&mut self, row: &TraceRow) -> Result<()> {
        writeln!(
            self.trace,
            "{},{},{},{}",
            row.iter, row.log_posterior, row.n_recomb, row.event
        )?;
        Ok(())
    }

    fn sample(&mut self, sample_id: usize, state: &ChainState) -> Result<()> {
        let seq = TreeSequence::from(state);
        write_sample(&mut self.samples, sample_id, &seq)?;
        write_tmrca_rows(&mut self.tmrca, sample_id, &TmrcaSummary::of(&seq))?;
        Ok(())
    }
}

impl Drop for FileObserver {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

/// `key = value` lines describing a run.
pub fn config_text(config: &ChainConfig, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    for (k, v) in extra {
        line(k, v.clone());
    }
    line("theta", config.params.theta.to_string());
    line("rho", config.params.rho.to_string());
    line("m", config.m.to_string());
    line("iterations", config.iterations.to_string());
    line("seed", config.seed.to_string());
    line("burn_in", config.burn_in.to_string());
    line("thin", config.thin.to_string());
    line("parallel", config.parallel.to_string());
    line("path_cap", config.path_cap.to_string());
    out
}

pub fn write_map<W: Write>(out: &mut W, map: &MapSequence) -> std::io::Result<()> {
    for b in &map.blocks {
        writeln!(
            out,
            "map\t{}\t{}\t{}\t{}",
            b.start + 1,
            b.end + 1,
            b.first_site + 1,
            to_newick(&b.tree)
        )?;
    }
    Ok(())
}

/// Reads a samples file back into `(sample_id, sequence)` pairs.
pub fn read_samples<R: BufRead>(input: R) -> Result<Vec<(usize, TreeSequence)>> {
    let mut out: Vec<(usize, TreeSequence)> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: &str| Error::DataParse {
            line: i + 1,
            column: 0,
            message: message.into(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad("expected 4 tab-separated fields"));
        }
        let id: usize = fields[0].parse().map_err(|_| bad("bad sample id"))?;
        let start: usize = fields[1].parse().map_err(|_| bad("bad start site"))?;
        let end: usize = fields[2].parse().map_err(|_| bad("bad end site"))?;
        if start == 0 || end < start {
            return Err(bad("bad site range"));
        }
        let block = SequenceBlock {
            start: start - 1,
            end: end - 1,
            tree: parse_newick(fields[3])?,
        };
        match out.last_mut() {
            Some((last, seq)) if *last == id => {
                if seq.blocks.last().map(|b| b.end + 1) != Some(block.start) {
                    return Err(bad("blocks do not tile the sites"));
                }
                seq.blocks.push(block);
            }
            _ => {
                if block.start != 0 {
                    return Err(bad("sample does not start at site 1"));
                }
                out.push((id, TreeSequence { blocks: vec![block] }));
            }
        }
    }
    Ok(out)
}

pub fn read_samples_file(path: &Path) -> Result<Vec<(usize, TreeSequence)>> {
    read_samples(BufReader::new(File::open(path)?))
}
