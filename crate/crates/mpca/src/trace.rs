//! Per-iteration convergence records and their CSV format.
//!
//! Columns: `replicate,iter,epoch,sin2_error,rayleigh,samples_consumed`,
//! header mandatory, floats written with 17 significant digits so a parsed
//! trace reproduces the run exactly. `sin2_error` is NaN when no ground
//! truth was available to the run.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{MpcaError, Result};

pub const TRACE_HEADER: &str = "replicate,iter,epoch,sin2_error,rayleigh,samples_consumed";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub replicate: u32,
    pub iter: u64,
    pub epoch: u32,
    pub sin2_error: f64,
    pub rayleigh: f64,
    pub samples_consumed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceTrace {
    rows: Vec<TraceRow>,
}

impl ConvergenceTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends another trace, re-tagging its rows with a replicate id.
    pub fn absorb(&mut self, other: ConvergenceTrace, replicate: u32) {
        for mut row in other.rows {
            row.replicate = replicate;
            self.rows.push(row);
        }
    }

    /// Rows of one replicate, in order.
    pub fn replicate(&self, replicate: u32) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.replicate == replicate)
    }

    pub fn replicate_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.rows.iter().map(|r| r.replicate).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Checks the structural invariants: iter strictly increasing within
    /// each (replicate, epoch) and sin2 in [0, 1] (or NaN).
    pub fn validate(&self) -> Result<()> {
        use std::collections::HashMap;
        let mut last: HashMap<(u32, u32), u64> = HashMap::new();
        for row in &self.rows {
            if let Some(prev) = last.get(&(row.replicate, row.epoch)) {
                if row.iter <= *prev {
                    return Err(MpcaError::Format(format!(
                        "iter not strictly increasing in replicate {} epoch {}",
                        row.replicate, row.epoch
                    )));
                }
            }
            last.insert((row.replicate, row.epoch), row.iter);
            if !row.sin2_error.is_nan() && !(0.0..=1.0).contains(&row.sin2_error) {
                return Err(MpcaError::Format(format!(
                    "sin2_error out of range: {}",
                    row.sin2_error
                )));
            }
        }
        Ok(())
    }

    pub fn write_csv_to<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{:.16e},{:.16e},{}",
                r.replicate, r.iter, r.epoch, r.sin2_error, r.rayleigh, r.samples_consumed
            )?;
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_csv_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| MpcaError::Format("empty trace file".into()))??;
        if header.trim() != TRACE_HEADER {
            return Err(MpcaError::Format(format!(
                "unexpected trace header: {header}"
            )));
        }
        let mut trace = ConvergenceTrace::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 6 {
                return Err(MpcaError::Format(format!("bad trace row: {line}")));
            }
            let parse_err = |e: &dyn std::fmt::Display| MpcaError::Format(format!("bad trace value: {e}"));
            trace.push(TraceRow {
                replicate: parts[0].trim().parse().map_err(|e| parse_err(&e))?,
                iter: parts[1].trim().parse().map_err(|e| parse_err(&e))?,
                epoch: parts[2].trim().parse().map_err(|e| parse_err(&e))?,
                sin2_error: parts[3].trim().parse().map_err(|e| parse_err(&e))?,
                rayleigh: parts[4].trim().parse().map_err(|e| parse_err(&e))?,
                samples_consumed: parts[5].trim().parse().map_err(|e| parse_err(&e))?,
            });
        }
        Ok(trace)
    }
}
