//! Subcommand bodies, independent of argument parsing.

use std::fs;
use std::path::{Path, PathBuf};

use crate::confinement::ConfinementParams;
use crate::diagnostics::{run_all, DiagnosticsConfig, DiagnosticsOutcome};
use crate::error::{Error, Result};
use crate::manifold::ProductPoint;
use crate::optimizer::{initial_point, predraw, run, LiveSampler, MetricsRecord, PreDrawn, RunOptions, SampleSource};
use crate::sampling::SamplingTable;
use crate::wlra::SparseWeightedMatrix;

use super::config::RunConfig;
use super::data::{generate_synthetic, write_csv, SyntheticSpec};
use super::metrics::{header_fields, CsvSink};
use super::plot::{write_svg, Series};

/// What a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub label: String,
    pub params: ConfinementParams,
    pub metrics: PathBuf,
    pub records: Vec<MetricsRecord>,
}

impl RunSummary {
    pub fn series(&self) -> Series {
        Series {
            label: self.label.clone(),
            lambda: Some(self.params.lambda),
            points: self
                .records
                .iter()
                .filter_map(|r| r.cost_unreg.map(|c| (r.t, c)))
                .collect(),
        }
    }

    pub fn first_cost(&self) -> Option<f64> {
        self.records.iter().find_map(|r| r.cost_unreg)
    }

    pub fn last_cost(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.cost_unreg)
    }
}

fn run_with(
    cfg: &RunConfig,
    data: &SparseWeightedMatrix,
    init: &ProductPoint,
    samples: &mut dyn SampleSource,
) -> Result<RunSummary> {
    let params = cfg.derive_params(data, init.x.norm_squared())?;
    let schedule = cfg.schedule(&params);
    let label = cfg.display_label();
    let header = header_fields(&label, &params, &schedule);
    let mut sink = CsvSink::create(&cfg.output.metrics, &header)?;
    let opts = RunOptions {
        iterations: cfg.run.iterations,
        eval_every: cfg.run.eval_every,
    };
    let outcome = run(data, &params, &schedule, init.clone(), opts, samples, &mut sink)?;
    let summary = RunSummary {
        label,
        params,
        metrics: cfg.output.metrics.clone(),
        records: outcome.records,
    };
    if let Some(plot) = &cfg.output.plot {
        write_svg(&[summary.series()], plot)?;
    }
    Ok(summary)
}

/// Derives parameters, runs the optimizer and writes metrics (and a plot if
/// configured).
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let data = cfg.load_data()?;
    let init = initial_point(&data, cfg.problem.k, cfg.problem.x0, cfg.run.seed)?;
    let table = SamplingTable::new(&data)?;
    let mut sampler = LiveSampler::new(&table, cfg.run.seed);
    run_with(cfg, &data, &init, &mut sampler)
}

#[derive(Debug)]
pub struct CompareOutcome {
    /// One entry per config, in order.
    pub results: Vec<Result<RunSummary>>,
    pub plot: Option<PathBuf>,
}

impl CompareOutcome {
    /// 0 if every run succeeded, otherwise the largest failing exit code.
    pub fn exit_code(&self) -> i32 {
        self.results
            .iter()
            .filter_map(|r| r.as_ref().err())
            .map(Error::exit_code)
            .max()
            .unwrap_or(0)
    }
}

/// Runs every config over one pre-drawn sample sequence.
///
/// All configs must share the `problem` section and `run.seed`; they may
/// differ in confinement constants, schedule and iteration count. A failing
/// run does not stop the others.
pub fn cmd_compare(cfgs: &[RunConfig], plot: Option<&Path>) -> Result<CompareOutcome> {
    let first = cfgs
        .first()
        .ok_or_else(|| Error::Config("compare needs at least one config".into()))?;
    for (i, cfg) in cfgs.iter().enumerate() {
        cfg.validate()?;
        if cfg.problem != first.problem {
            return Err(Error::Config(format!(
                "config {} has a different `problem` section than config 1",
                i + 1
            )));
        }
        if cfg.run.seed != first.run.seed {
            return Err(Error::Config(format!(
                "config {} has a different run.seed than config 1",
                i + 1
            )));
        }
        if cfgs[..i].iter().any(|c| c.output.metrics == cfg.output.metrics) {
            return Err(Error::Config(format!(
                "config {} reuses metrics path {}",
                i + 1,
                cfg.output.metrics.display()
            )));
        }
    }
    let data = first.load_data()?;
    let init = initial_point(&data, first.problem.k, first.problem.x0, first.run.seed)?;
    let table = SamplingTable::new(&data)?;
    let longest = cfgs.iter().map(|c| c.run.iterations).max().unwrap_or(0);
    let samples = predraw(&table, first.run.seed, longest as usize);

    let results: Vec<Result<RunSummary>> = cfgs
        .iter()
        .map(|cfg| run_with(cfg, &data, &init, &mut PreDrawn::new(&samples)))
        .collect();

    let mut written = None;
    if let Some(path) = plot {
        let series: Vec<Series> = results
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .map(RunSummary::series)
            .collect();
        if !series.is_empty() {
            write_svg(&series, path)?;
            written = Some(path.to_path_buf());
        }
    }
    Ok(CompareOutcome { results, plot: written })
}

/// Runs the diagnostics and optionally writes a JSON report.
pub fn cmd_check(cfg: &DiagnosticsConfig, report: Option<&Path>) -> Result<DiagnosticsOutcome> {
    let outcome = run_all(cfg)?;
    if let Some(path) = report {
        let json = serde_json::to_string_pretty(&outcome).expect("report serializes");
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, json)?;
    }
    Ok(outcome)
}

/// Writes a synthetic instance as data CSV; returns the number of entries.
pub fn cmd_generate(spec: &SyntheticSpec, out: &Path) -> Result<usize> {
    let data = generate_synthetic(spec)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_csv(&data, out)?;
    Ok(data.len())
}
