//! Metrics CSV: `#`-prefixed `key=value` header lines, then
//! `t,eta,cost_unreg,cost_reg,rho,grad_norm_sq,accum`. Costs are blank on
//! rows without a full evaluation. Floats use the shortest round-trip
//! scientific form, so identical runs produce identical bytes.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::confinement::ConfinementParams;
use crate::error::{Error, Result};
use crate::optimizer::{MetricsRecord, MetricsSink, Schedule};

pub const COLUMNS: &str = "t,eta,cost_unreg,cost_reg,rho,grad_norm_sq,accum";

/// Header key/value pairs echoing the run's derived parameters.
pub fn header_fields(label: &str, params: &ConfinementParams, schedule: &Schedule) -> Vec<(String, String)> {
    let mut h = vec![
        ("label".to_string(), label.to_string()),
        ("schedule".to_string(), schedule.name().to_string()),
    ];
    if let Schedule::Deterministic { eta0, decay } = schedule {
        h.push(("eta0".into(), format!("{eta0:e}")));
        h.push(("K".into(), format!("{decay:e}")));
    }
    h.extend([
        ("lambda".to_string(), format!("{:e}", params.lambda)),
        ("k".to_string(), params.k.to_string()),
        ("kappa".to_string(), format!("{:e}", params.kappa)),
        ("kappa_bound".to_string(), format!("{:e}", params.kappa_bound())),
        ("rho0".to_string(), format!("{:e}", params.rho0)),
        ("rho1".to_string(), format!("{:e}", params.rho1)),
        ("alpha".to_string(), format!("{:e}", params.alpha)),
        ("epsilon".to_string(), format!("{:e}", params.epsilon)),
        ("beta".to_string(), format!("{:e}", params.beta)),
        ("a".to_string(), format!("{:e}", params.a)),
    ]);
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn format_record(r: &MetricsRecord) -> String {
    format!(
        "{},{:e},{},{},{:e},{:e},{:e}",
        r.t,
        r.eta,
        opt(r.cost_unreg),
        opt(r.cost_reg),
        r.rho,
        r.grad_norm_sq,
        r.accum
    )
}

/// Streams records to a writer.
pub struct CsvSink<W: Write> {
    out: W,
}

impl CsvSink<BufWriter<File>> {
    pub fn create(path: &Path, header: &[(String, String)]) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        Ok(Self::new(BufWriter::new(File::create(path)?), header)?)
    }
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W, header: &[(String, String)]) -> io::Result<Self> {
        for (k, v) in header {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "{COLUMNS}")?;
        Ok(Self { out })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> MetricsSink for CsvSink<W> {
    fn write_record(&mut self, record: &MetricsRecord) -> io::Result<()> {
        writeln!(self.out, "{}", format_record(record))
    }

    fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// A parsed metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsFile {
    pub header: Vec<(String, String)>,
    pub records: Vec<MetricsRecord>,
}

impl MetricsFile {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn lambda(&self) -> Option<f64> {
        self.get("lambda").and_then(|v| v.parse().ok())
    }
}

pub fn read_metrics(path: &Path) -> Result<MetricsFile> {
    parse_metrics(&fs::read_to_string(path)?)
}

pub fn parse_metrics(text: &str) -> Result<MetricsFile> {
    let mut header = Vec::new();
    let mut records = Vec::new();
    let mut seen_columns = false;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let parse_err = |message: String| Error::Parse { line: lineno, message };
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                header.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !seen_columns {
            if line.trim() != COLUMNS {
                return Err(parse_err(format!("expected column header `{COLUMNS}`")));
            }
            seen_columns = true;
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 7 {
            return Err(parse_err(format!("expected 7 fields, found {}", cells.len())));
        }
        let num = |i: usize| -> Result<f64> {
            cells[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| parse_err(format!("invalid number `{}`", cells[i])))
        };
        let opt_num = |i: usize| -> Result<Option<f64>> {
            if cells[i].trim().is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let t = cells[0]
            .trim()
            .parse::<u64>()
            .map_err(|_| parse_err(format!("invalid iteration `{}`", cells[0])))?;
        records.push(MetricsRecord {
            t,
            eta: num(1)?,
            cost_unreg: opt_num(2)?,
            cost_reg: opt_num(3)?,
            rho: num(4)?,
            grad_norm_sq: num(5)?,
            accum: num(6)?,
        });
    }
    if records.is_empty() {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: "metrics file has no records".into(),
        });
    }
    Ok(MetricsFile { header, records })
}
