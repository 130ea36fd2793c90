//! Coordinate-format CSV data files and the synthetic low-rank generator.
//!
//! Data files hold one observed entry per line as `i,j,value[,weight]` with
//! 1-based indices. An optional first line `# dims m n` fixes the matrix
//! shape; otherwise it is the largest index seen. Without a weight column
//! every observed entry gets weight `1 / #observed`.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::random_stiefel;
use crate::wlra::{Entry, SparseWeightedMatrix, WEIGHT_SUM_ERROR};

/// Reads a data file from disk.
pub fn ingest_csv(path: &Path) -> Result<SparseWeightedMatrix> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text)
}

/// Parses the coordinate CSV format.
pub fn parse_csv(text: &str) -> Result<SparseWeightedMatrix> {
    let mut dims: Option<(usize, usize)> = None;
    let mut rows: Vec<(usize, usize, f64, Option<f64>)> = Vec::new();
    let mut first_content = true;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if first_content {
                let mut parts = comment.split_whitespace();
                if parts.next() == Some("dims") {
                    let m = parse_index(parts.next(), line_no, "m")?;
                    let n = parse_index(parts.next(), line_no, "n")?;
                    if parts.next().is_some() {
                        return Err(parse_err(line_no, "trailing fields after `# dims m n`"));
                    }
                    dims = Some((m, n));
                }
            }
            first_content = false;
            continue;
        }
        first_content = false;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(parse_err(
                line_no,
                &format!("expected `i,j,value[,weight]`, found {} fields", fields.len()),
            ));
        }
        let i = parse_index(Some(fields[0]), line_no, "row index")?;
        let j = parse_index(Some(fields[1]), line_no, "column index")?;
        let value = parse_real(fields[2], line_no, "value")?;
        let weight = match fields.get(3) {
            Some(w) => Some(parse_real(w, line_no, "weight")?),
            None => None,
        };
        if let Some(&(_, _, _, prev)) = rows.last() {
            if prev.is_some() != weight.is_some() {
                return Err(parse_err(
                    line_no,
                    "weight column must be present on every line or on none",
                ));
            }
        }
        rows.push((i, j, value, weight));
    }
    if rows.is_empty() {
        return Err(Error::Config("data file has no entries".into()));
    }
    let (m, n) = match dims {
        Some(d) => d,
        None => (
            rows.iter().map(|r| r.0).max().unwrap_or(0),
            rows.iter().map(|r| r.1).max().unwrap_or(0),
        ),
    };
    let weighted = rows[0].3.is_some();
    let mut entries: Vec<Entry> = rows
        .iter()
        .map(|&(i, j, value, w)| Entry {
            row: i - 1,
            col: j - 1,
            value,
            weight: w.unwrap_or(1.0),
        })
        .collect();
    if weighted {
        if entries.iter().any(|e| e.weight < 0.0) {
            return Err(Error::Config("weights must be non-negative".into()));
        }
        let total: f64 = entries.iter().map(|e| e.weight).sum();
        if !(total > 0.0) {
            return Err(Error::Config("weights sum to zero".into()));
        }
        // Sums already within tolerance are left to the matrix constructor so
        // that normalized files round-trip bit for bit.
        if (total - 1.0).abs() > WEIGHT_SUM_ERROR {
            for e in &mut entries {
                e.weight /= total;
            }
        }
    } else {
        let w = 1.0 / entries.len() as f64;
        for e in &mut entries {
            e.weight = w;
        }
    }
    SparseWeightedMatrix::new(m, n, entries)
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::Parse {
        line,
        message: message.to_string(),
    }
}

fn parse_index(field: Option<&str>, line: usize, what: &str) -> Result<usize> {
    let field = field.ok_or_else(|| parse_err(line, &format!("missing {what}")))?;
    let v: usize = field
        .parse()
        .map_err(|_| parse_err(line, &format!("invalid {what} `{field}`")))?;
    if v == 0 {
        return Err(parse_err(line, &format!("{what} must be 1-based, got 0")));
    }
    Ok(v)
}

fn parse_real(field: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_err(line, &format!("invalid {what} `{field}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, &format!("{what} must be finite")));
    }
    Ok(v)
}

/// Serializes entries in the coordinate format. The weight column is
/// written only when the weights are not uniform.
pub fn to_csv(data: &SparseWeightedMatrix) -> String {
    let uniform = 1.0 / data.len() as f64;
    let with_weights = data.entries().iter().any(|e| e.weight != uniform);
    let mut out = format!("# dims {} {}\n", data.m(), data.n());
    for e in data.entries() {
        if with_weights {
            out.push_str(&format!("{},{},{},{}\n", e.row + 1, e.col + 1, e.value, e.weight));
        } else {
            out.push_str(&format!("{},{},{}\n", e.row + 1, e.col + 1, e.value));
        }
    }
    out
}

pub fn write_csv(data: &SparseWeightedMatrix, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(to_csv(data).as_bytes())?;
    Ok(())
}

fn default_scale() -> Option<f64> {
    None
}

/// Parameters of a synthetic matrix-completion instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    pub true_rank: usize,
    pub observed_fraction: f64,
    #[serde(default)]
    pub noise_std: f64,
    /// Round and clamp values to this integer range, like star ratings.
    #[serde(default)]
    pub rating_range: Option<(i64, i64)>,
    /// Largest singular value of the noiseless matrix. Defaults to `sqrt(m·n)`.
    #[serde(default = "default_scale")]
    pub scale: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Config("synthetic matrix must be nonempty".into()));
        }
        if self.true_rank == 0 || self.true_rank > self.m.min(self.n) {
            return Err(Error::Config(format!(
                "true_rank = {} must satisfy 1 <= true_rank <= min(m, n) = {}",
                self.true_rank,
                self.m.min(self.n)
            )));
        }
        if !(self.observed_fraction > 0.0 && self.observed_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "observed_fraction = {} must lie in (0, 1]",
                self.observed_fraction
            )));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::Config(format!(
                "noise_std = {} must be non-negative",
                self.noise_std
            )));
        }
        if let Some((lo, hi)) = self.rating_range {
            if lo > hi {
                return Err(Error::Config(format!("rating_range ({lo}, {hi}) is empty")));
            }
        }
        if let Some(s) = self.scale {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Config(format!("scale = {s} must be positive")));
            }
        }
        Ok(())
    }

    /// Singular values `σ_l = scale · (1 − l / (2r))`, positive and decreasing.
    pub fn singular_values(&self) -> Vec<f64> {
        let scale = self.scale.unwrap_or(((self.m * self.n) as f64).sqrt());
        let r = self.true_rank as f64;
        (0..self.true_rank)
            .map(|l| scale * (1.0 - l as f64 / (2.0 * r)))
            .collect()
    }
}

/// Full noiseless low-rank matrix `U* diag(σ) V*ᵀ` for a spec.
pub fn synthetic_low_rank(spec: &SyntheticSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    low_rank_from_rng(spec, &mut rng)
}

fn low_rank_from_rng(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let u = random_stiefel(spec.m, spec.true_rank, rng)?;
    let v = random_stiefel(spec.n, spec.true_rank, rng)?;
    let sigma = spec.singular_values();
    let us = DMatrix::from_fn(spec.m, spec.true_rank, |i, l| u.matrix()[(i, l)] * sigma[l]);
    Ok(us * v.matrix().transpose())
}

/// `A = U* diag(σ) V*ᵀ + noise`, observed on a uniform random subset of
/// `round(fraction · m·n)` entries (at least one), with uniform weights.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SparseWeightedMatrix> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let full = low_rank_from_rng(spec, &mut rng)?;
    let total = spec.m * spec.n;
    let count = ((spec.observed_fraction * total as f64).round() as usize).clamp(1, total);
    let mut picked = sample_indices(&mut rng, total, count).into_vec();
    picked.sort_unstable();
    let mut triples = Vec::with_capacity(count);
    for idx in picked {
        let (i, j) = (idx / spec.n, idx % spec.n);
        let mut value = full[(i, j)];
        if spec.noise_std > 0.0 {
            value += spec.noise_std * rng.sample::<f64, _>(StandardNormal);
        }
        if let Some((lo, hi)) = spec.rating_range {
            value = value.round().clamp(lo as f64, hi as f64);
        }
        triples.push((i, j, value));
    }
    SparseWeightedMatrix::uniform(spec.m, spec.n, &triples)
}
