//! Newline-delimited JSON metrics records.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossBreakdown;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneKind {
    Opacity,
    Budget,
}

/// One line of the metrics log. Records within an iteration appear in
/// execution order: densify, opacity reset, opacity prune, budget prune,
/// then the iteration summary and an optional evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogRecord {
    Iteration {
        iteration: usize,
        /// Training view used, `None` when all views were rendered.
        view: Option<usize>,
        loss: LossBreakdown,
        /// Primitive count after this iteration's density control.
        n: usize,
    },
    Densify {
        iteration: usize,
        cloned: Vec<usize>,
        split: Vec<usize>,
        n_before: usize,
        n_after: usize,
    },
    OpacityReset {
        iteration: usize,
    },
    Prune {
        iteration: usize,
        kind: PruneKind,
        removed: Vec<usize>,
        n_before: usize,
        n_after: usize,
    },
    Eval {
        iteration: usize,
        psnr: f64,
        ssim: f64,
        n: usize,
    },
}

impl LogRecord {
    pub fn iteration(&self) -> usize {
        match self {
            LogRecord::Iteration { iteration, .. }
            | LogRecord::Densify { iteration, .. }
            | LogRecord::OpacityReset { iteration }
            | LogRecord::Prune { iteration, .. }
            | LogRecord::Eval { iteration, .. } => *iteration,
        }
    }
}

pub fn write_ndjson<W: Write>(records: &[LogRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_ndjson<R: BufRead>(input: R) -> Result<Vec<LogRecord>> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::validation(format!("metrics log line {}: {e}", i + 1)))?;
        records.push(rec);
    }
    Ok(records)
}

/// Largest primitive count recorded after a budget pass, `None` if the log
/// has none.
pub fn max_n_after_prune(records: &[LogRecord]) -> Option<usize> {
    records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Prune {
                kind: PruneKind::Budget,
                n_after,
                ..
            } => Some(*n_after),
            _ => None,
        })
        .max()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ndjson_round_trip() {
        let records = vec![
            LogRecord::Iteration {
                iteration: 1,
                view: Some(0),
                loss: LossBreakdown {
                    total: 0.5,
                    l1: 0.25,
                    d_ssim: 0.125,
                    depth: None,
                },
                n: 3,
            },
            LogRecord::Prune {
                iteration: 100,
                kind: PruneKind::Budget,
                removed: vec![2],
                n_before: 3,
                n_after: 2,
            },
        ];
        let mut buf = Vec::new();
        write_ndjson(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"event\":\"prune\""));
        assert_eq!(read_ndjson(buf.as_slice()).unwrap(), records);
        assert_eq!(max_n_after_prune(&records), Some(2));
    }
}
