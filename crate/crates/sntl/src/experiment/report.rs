//! Benchmark results: per-replicate MSE rows, aggregation, and the CSV
//! format other implementations interoperate with.
//!
//! CSV schema: header `process,method,target_n,replicate,seed,mse`, floats
//! printed with 17 significant digits, LF line endings.

use crate::surfaces::ProcessKind;
use std::io::Write;
use std::path::Path;

/// Prediction method being scored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Transfer,
    TargetOnly,
    Kriging,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Transfer, Method::TargetOnly, Method::Kriging];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Transfer => "transfer",
            Self::TargetOnly => "target_only",
            Self::Kriging => "kriging",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "transfer" => Ok(Self::Transfer),
            "target_only" => Ok(Self::TargetOnly),
            "kriging" => Ok(Self::Kriging),
            other => Err(format!("unknown method '{other}'")),
        }
    }
}

/// One benchmark measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct MseRow {
    pub process: ProcessKind,
    pub method: Method,
    pub target_n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub mse: f64,
}

/// All rows plus warnings for replicates that failed and were excluded.
#[derive(Clone, Debug, Default)]
pub struct MseReport {
    pub rows: Vec<MseRow>,
    pub warnings: Vec<String>,
}

/// Mean and standard error for one (process, method, n) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub process: ProcessKind,
    pub method: Method,
    pub target_n: usize,
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

#[derive(Debug)]
pub enum ReportError {
    EmptyReport,
    Io(std::io::Error),
    Parse { line: usize, message: String },
}

impl std::fmt::Display for ReportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::EmptyReport => write!(f, "report has no rows"),
            Self::Io(e) => write!(f, "report I/O error: {e}"),
            Self::Parse { line, message } => write!(f, "report line {line}: {message}"),
        }
    }
}

impl std::error::Error for ReportError {}

impl From<std::io::Error> for ReportError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

impl MseReport {
    /// Per-cell mean and standard error, ordered by (process, n, method).
    pub fn aggregate(&self) -> Vec<CellSummary> {
        let mut keys: Vec<(ProcessKind, usize, Method)> = self
            .rows
            .iter()
            .map(|r| (r.process, r.target_n, r.method))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys.iter()
            .map(|&(process, target_n, method)| {
                let values: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| {
                        r.process == process && r.target_n == target_n && r.method == method
                    })
                    .map(|r| r.mse)
                    .collect();
                let count = values.len();
                let mean = values.iter().sum::<f64>() / count as f64;
                let std_error = if count > 1 {
                    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                        / (count - 1) as f64;
                    (var / count as f64).sqrt()
                } else {
                    0.0
                };
                CellSummary {
                    process,
                    method,
                    target_n,
                    mean,
                    std_error,
                    count,
                }
            })
            .collect()
    }

    /// Mean MSE of one cell, when present.
    pub fn mean_mse(&self, process: ProcessKind, method: Method, target_n: usize) -> Option<f64> {
        let values: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.process == process && r.target_n == target_n && r.method == method)
            .map(|r| r.mse)
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }

    /// Paired per-replicate MSEs of two methods in one cell.
    pub fn paired(
        &self,
        process: ProcessKind,
        target_n: usize,
        a: Method,
        b: Method,
    ) -> Vec<(f64, f64)> {
        let pick = |method: Method| -> Vec<(usize, f64)> {
            let mut v: Vec<(usize, f64)> = self
                .rows
                .iter()
                .filter(|r| r.process == process && r.target_n == target_n && r.method == method)
                .map(|r| (r.replicate, r.mse))
                .collect();
            v.sort_unstable_by_key(|&(rep, _)| rep);
            v
        };
        let va = pick(a);
        let vb = pick(b);
        va.iter()
            .filter_map(|&(rep, ma)| {
                vb.iter()
                    .find(|&&(rb, _)| rb == rep)
                    .map(|&(_, mb)| (ma, mb))
            })
            .collect()
    }
}

/// Floats with 17 significant digits round-trip f64 exactly.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the report CSV; refuses to create a file for an empty report.
pub fn write_csv(report: &MseReport, path: &Path) -> Result<(), ReportError> {
    if report.rows.is_empty() {
        return Err(ReportError::EmptyReport);
    }
    let mut out = String::with_capacity(64 * (report.rows.len() + 1));
    out.push_str("process,method,target_n,replicate,seed,mse\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.process,
            row.method,
            row.target_n,
            row.replicate,
            row.seed,
            format_float(row.mse)
        ));
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Reads a report CSV produced by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<MseReport, ReportError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == "process,method,target_n,replicate,seed,mse" => {}
        Some((_, other)) => {
            return Err(ReportError::Parse {
                line: 1,
                message: format!("unexpected header '{other}'"),
            })
        }
        None => return Err(ReportError::EmptyReport),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(ReportError::Parse {
                line: idx + 1,
                message: format!("expected 6 fields, got {}", parts.len()),
            });
        }
        let parse_err = |message: String| ReportError::Parse {
            line: idx + 1,
            message,
        };
        rows.push(MseRow {
            process: parts[0]
                .parse()
                .map_err(|e: String| parse_err(e))?,
            method: parts[1].parse().map_err(|e: String| parse_err(e))?,
            target_n: parts[2]
                .parse()
                .map_err(|e| parse_err(format!("bad target_n: {e}")))?,
            replicate: parts[3]
                .parse()
                .map_err(|e| parse_err(format!("bad replicate: {e}")))?,
            seed: parts[4]
                .parse()
                .map_err(|e| parse_err(format!("bad seed: {e}")))?,
            mse: parts[5]
                .parse()
                .map_err(|e| parse_err(format!("bad mse: {e}")))?,
        });
    }
    if rows.is_empty() {
        return Err(ReportError::EmptyReport);
    }
    Ok(MseReport {
        rows,
        warnings: Vec::new(),
    })
}
