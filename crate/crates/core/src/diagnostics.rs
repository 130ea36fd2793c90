//! Independent numerical oracles for the cost, gradient, Hessian and
//! confinement formulas.
//!
//! Every check draws its instances from `seed + trial`, so a failing instance
//! can be regenerated from the descriptor in its report.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::confinement::{
    confinement_pairing, hessian_quadratic_form, hessian_upper_bound, kappa_upper_bound, max_squared_entry, rho,
    ConfinementParams,
};
use crate::error::Result;
use crate::manifold::{
    inner, random_product_point, random_stiefel, random_unit_tangent, retract, ProductPoint, ProductTangent,
    StiefelPoint,
};
use crate::wlra::{
    cost_regularized, full_gradient, sample_cost, stochastic_gradient, Entry, EntrySample, SparseWeightedMatrix,
};

pub const FD_STEP: f64 = 1e-5;
pub const FD_THRESHOLD: f64 = 1e-6;
pub const IDENTITY_THRESHOLD: f64 = 1e-12;
pub const RETRACTION_ZERO_THRESHOLD: f64 = 1e-12;
pub const RETRACTION_DIFF_THRESHOLD: f64 = 1e-6;
/// Relative slack for the confinement inequalities.
pub const INEQUALITY_THRESHOLD: f64 = 1e-12;

const RICHARDSON_STEP: f64 = 1e-3;
const ESCAPE_GRID: usize = 9;

/// Enough to regenerate one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDescriptor {
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub lambda: f64,
}

impl std::fmt::Display for InstanceDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "seed={} m={} n={} k={} lambda={:e}",
            self.seed, self.m, self.n, self.k, self.lambda
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub instances: usize,
    pub max_rel_err: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Instances where an inequality failed.
    pub violations: usize,
    pub worst: Option<InstanceDescriptor>,
}

struct Tracker {
    name: &'static str,
    threshold: f64,
    instances: usize,
    max_err: f64,
    violations: usize,
    worst: Option<InstanceDescriptor>,
}

impl Tracker {
    fn new(name: &'static str, threshold: f64) -> Self {
        Self {
            name,
            threshold,
            instances: 0,
            max_err: 0.0,
            violations: 0,
            worst: None,
        }
    }

    fn record(&mut self, err: f64, desc: &InstanceDescriptor) {
        // NaN counts as the worst possible error.
        let err = if err.is_nan() { f64::INFINITY } else { err };
        if err > self.threshold {
            self.violations += 1;
        }
        if self.worst.is_none() || err > self.max_err {
            self.max_err = err.max(self.max_err);
            self.worst = Some(desc.clone());
        }
    }

    fn finish(self) -> CheckReport {
        CheckReport {
            name: self.name.to_string(),
            instances: self.instances,
            max_rel_err: self.max_err,
            threshold: self.threshold,
            pass: self.max_err <= self.threshold,
            violations: self.violations,
            worst: self.worst,
        }
    }
}

/// Random small instance with `m, n ≤ max_dim`, `k ≤ 3`.
struct Instance {
    data: SparseWeightedMatrix,
    point: ProductPoint,
    lambda: f64,
    desc: InstanceDescriptor,
}

fn random_instance(seed: u64, max_dim: usize, lambdas: &[f64]) -> Result<(Instance, ChaCha8Rng)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(1..=max_dim);
    let n = rng.random_range(1..=max_dim);
    let k = rng.random_range(1..=m.min(n).min(3));
    let lambda = lambdas[rng.random_range(0..lambdas.len())];
    let data = random_data(m, n, &mut rng)?;
    let x = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let point = random_product_point(m, n, x, &mut rng)?;
    let desc = InstanceDescriptor { seed, m, n, k, lambda };
    Ok((
        Instance {
            data,
            point,
            lambda,
            desc,
        },
        rng,
    ))
}

/// Roughly half the entries observed, standard normal values, random weights.
fn random_data<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<SparseWeightedMatrix> {
    let mut cells = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if rng.random_bool(0.5) {
                cells.push((i, j));
            }
        }
    }
    if cells.is_empty() {
        cells.push((rng.random_range(0..m), rng.random_range(0..n)));
    }
    let raw: Vec<f64> = cells.iter().map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let entries = cells
        .iter()
        .zip(&raw)
        .map(|(&(row, col), &w)| Entry {
            row,
            col,
            value: rng.sample::<f64, _>(StandardNormal),
            weight: w / total,
        })
        .collect();
    SparseWeightedMatrix::new(m, n, entries)
}

fn random_sample<R: Rng + ?Sized>(data: &SparseWeightedMatrix, rng: &mut R) -> Result<EntrySample> {
    let positive: Vec<usize> = (0..data.len()).filter(|&i| data.entries()[i].weight > 0.0).collect();
    data.sample_of(positive[rng.random_range(0..positive.len())])
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn tangent_diff_norm(a: &ProductTangent, b: &ProductTangent) -> f64 {
    ((a.y.matrix() - b.y.matrix()).norm_squared()
        + (&a.xhat - &b.xhat).norm_squared()
        + (a.z.matrix() - b.z.matrix()).norm_squared())
    .sqrt()
}

/// Central difference of `g ∘ R_p` along random unit tangents against
/// `⟨∇g, v⟩`. The error is scaled by `max(1, ‖∇g‖)`.
pub fn check_gradient_fd(seed: u64, trials: usize) -> Result<CheckReport> {
    gradient_fd(seed, trials, false)
}

/// [`check_gradient_fd`] with the sign of `∇_x g` flipped; must fail.
pub fn check_gradient_fd_flipped(seed: u64, trials: usize) -> Result<CheckReport> {
    gradient_fd(seed, trials, true)
}

fn gradient_fd(seed: u64, trials: usize, flip: bool) -> Result<CheckReport> {
    let name = if flip {
        "gradient_fd (flipped ∇x)"
    } else {
        "gradient_fd"
    };
    let mut tr = Tracker::new(name, FD_THRESHOLD);
    for trial in 0..trials {
        let (inst, mut rng) = random_instance(seed.wrapping_add(trial as u64), 8, &[0.0, 1e-2])?;
        let s = random_sample(&inst.data, &mut rng)?;
        let mut grad = stochastic_gradient(&inst.point, s, &inst.data, inst.lambda)?;
        if flip {
            grad.xhat = -grad.xhat;
        }
        let v = random_unit_tangent(&inst.point, &mut rng)?;
        let g = |t: f64| -> Result<f64> {
            let q = retract(&inst.point, &v.scaled(t))?;
            sample_cost(&q, s, &inst.data, inst.lambda)
        };
        let fd = (g(FD_STEP)? - g(-FD_STEP)?) / (2.0 * FD_STEP);
        let analytic = inner(&inst.point, &grad, &v)?;
        let scale = grad.norm_squared().sqrt().max(1.0);
        tr.instances += 1;
        tr.record((fd - analytic).abs() / scale, &inst.desc);
    }
    Ok(tr.finish())
}

/// `Σ_e w_e g_e` and `Σ_e w_e ∇g_e` against the full cost and gradient, on
/// the instance and on a copy with its weights permuted.
pub fn check_expectation(seed: u64, trials: usize) -> Result<CheckReport> {
    let mut tr = Tracker::new("expectation", IDENTITY_THRESHOLD);
    for trial in 0..trials {
        let (inst, mut rng) = random_instance(seed.wrapping_add(trial as u64), 8, &[0.0, 1e-2, 1.0])?;
        let mut permuted: Vec<Entry> = inst.data.entries().to_vec();
        let mut weights: Vec<f64> = permuted.iter().map(|e| e.weight).collect();
        weights.shuffle(&mut rng);
        for (e, w) in permuted.iter_mut().zip(weights) {
            e.weight = w;
        }
        let permuted = SparseWeightedMatrix::new(inst.data.m(), inst.data.n(), permuted)?;
        for data in [&inst.data, &permuted] {
            tr.instances += 1;
            tr.record(expectation_error(&inst.point, data, inst.lambda)?, &inst.desc);
        }
    }
    Ok(tr.finish())
}

fn expectation_error(p: &ProductPoint, data: &SparseWeightedMatrix, lambda: f64) -> Result<f64> {
    let mut cost = 0.0;
    let mut y = DMatrix::zeros(p.m(), p.k());
    let mut xhat = DVector::zeros(p.k());
    let mut z = DMatrix::zeros(p.n(), p.k());
    let mut magnitude = 0.0;
    for pos in 0..data.len() {
        let w = data.entries()[pos].weight;
        if w == 0.0 {
            continue;
        }
        let s = data.sample_of(pos)?;
        cost += w * sample_cost(p, s, data, lambda)?;
        let g = stochastic_gradient(p, s, data, lambda)?;
        y += g.y.matrix() * w;
        xhat += &g.xhat * w;
        z += g.z.matrix() * w;
        magnitude += w * g.norm_squared().sqrt();
    }
    let cost_err = rel_err(cost, cost_regularized(p, data, lambda)?);
    let full = full_gradient(p, data, lambda)?;
    let summed = ProductTangent::project(p, &y, xhat, &z)?;
    let scale = magnitude.max(full.norm_squared().sqrt());
    let grad_err = if scale == 0.0 {
        0.0
    } else {
        tangent_diff_norm(&summed, &full) / scale
    };
    Ok(cost_err.max(grad_err))
}

/// The closed-form Hessian quadratic form against `2‖∇_x g‖²`, plus its
/// upper bound `16(2ka + 2k‖x‖² + λ²‖x‖²)`.
pub fn check_hessian_identity(seed: u64, trials: usize) -> Result<CheckReport> {
    let mut tr = Tracker::new("hessian_identity", IDENTITY_THRESHOLD);
    for trial in 0..trials {
        let (inst, mut rng) = random_instance(seed.wrapping_add(trial as u64), 8, &[0.0, 1e-2, 1.0])?;
        let s = random_sample(&inst.data, &mut rng)?;
        let hess = hessian_quadratic_form(&inst.point, s, &inst.data, inst.lambda)?;
        let grad = stochastic_gradient(&inst.point, s, &inst.data, inst.lambda)?;
        let dual = 2.0 * grad.xhat.norm_squared();
        let a = max_squared_entry(&inst.data)?;
        let bound = hessian_upper_bound(&inst.point, a, inst.lambda);
        let excess = if bound > 0.0 { (hess - bound) / bound } else { hess };
        tr.instances += 1;
        tr.record(rel_err(hess, dual).max(excess), &inst.desc);
    }
    Ok(tr.finish())
}

/// The two confinement inequalities on random instances with `λ` drawn from
/// `{1e-2, 0.1, 1}` and `κ` from `(0.05, 0.95) × bound`:
///
/// - `⟨∇ρ, ∇g⟩ ≥ (κ/2) Hess(ρ∘R)(∇g, ∇g)` whenever `ρ0 ≤ ‖x‖² ≤ ρ1`;
/// - `ρ(R(−s∇g)) ≤ ρ1` whenever `‖x‖² ≤ ρ0` and `s ∈ [0, κ]`.
pub fn check_confinement(seed: u64, trials: usize) -> Result<CheckReport> {
    confinement_random(seed, trials, false)
}

/// [`check_confinement`] with `κ = 2 × bound` substituted into the
/// inequalities (and the `ρ0` formula); must report violations.
pub fn check_confinement_inflated(seed: u64, trials: usize) -> Result<CheckReport> {
    confinement_random(seed, trials, true)
}

fn confinement_random(seed: u64, trials: usize, inflate: bool) -> Result<CheckReport> {
    let name = if inflate {
        "confinement (inflated κ)"
    } else {
        "confinement"
    };
    let mut tr = Tracker::new(name, INEQUALITY_THRESHOLD);
    for trial in 0..trials {
        let (inst, mut rng) = random_instance(seed.wrapping_add(trial as u64), 8, &[1e-2, 0.1, 1.0])?;
        let k = inst.point.k();
        let a = max_squared_entry(&inst.data)?;
        let fraction = rng.random_range(0.05..0.95);
        let kappa = fraction * kappa_upper_bound(inst.lambda, k)?;
        let params = ConfinementParams::derive(inst.lambda, k, a, Some(kappa), 1.0, 0.25, 0.0)?;
        let params = if inflate { inflated(&params) } else { params };
        let err = confinement_trial(&inst.data, &params, &mut rng)?;
        tr.instances += 1;
        tr.record(err, &inst.desc);
    }
    Ok(tr.finish())
}

/// Same inequalities for fixed data and parameters.
pub fn check_confinement_annulus(
    data: &SparseWeightedMatrix,
    params: &ConfinementParams,
    seed: u64,
    trials: usize,
) -> Result<CheckReport> {
    let mut tr = Tracker::new("confinement_annulus", INEQUALITY_THRESHOLD);
    let desc = |s: u64| InstanceDescriptor {
        seed: s,
        m: data.m(),
        n: data.n(),
        k: params.k,
        lambda: params.lambda,
    };
    for trial in 0..trials {
        let s = seed.wrapping_add(trial as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let err = confinement_trial(data, params, &mut rng)?;
        tr.instances += 1;
        tr.record(err, &desc(s));
    }
    Ok(tr.finish())
}

/// `κ = 2 × bound` with `ρ0` recomputed from its formula, floored at 0.
fn inflated(params: &ConfinementParams) -> ConfinementParams {
    let k = params.k as f64;
    let kappa = 2.0 * params.kappa_bound();
    let l = params.lambda;
    let denom = 4.0 * l - 16.0 * k * kappa - 8.0 * l * l * kappa;
    let rho0 = ((1.0 + 16.0 * k * kappa) * params.a / denom).max(0.0);
    ConfinementParams { kappa, rho0, ..*params }
}

/// Largest relative excess of either inequality at one annulus point and one
/// inner point.
fn confinement_trial<R: Rng + ?Sized>(
    data: &SparseWeightedMatrix,
    params: &ConfinementParams,
    rng: &mut R,
) -> Result<f64> {
    let lambda = params.lambda;
    let s = random_sample(data, rng)?;

    let level = pick_level(params.rho0, params.rho1, rng);
    let p = point_at_level(data, params.k, level, s, rng)?;
    let pairing = confinement_pairing(&p, s, data, lambda)?;
    let rhs = 0.5 * params.kappa * hessian_quadratic_form(&p, s, data, lambda)?;
    let scale = pairing.abs().max(rhs).max(f64::MIN_POSITIVE);
    let mut worst = (rhs - pairing) / scale;

    let level = pick_level(0.0, params.rho0, rng);
    let p = point_at_level(data, params.k, level, s, rng)?;
    let grad = stochastic_gradient(&p, s, data, lambda)?;
    for i in 0..ESCAPE_GRID {
        let step = params.kappa * i as f64 / (ESCAPE_GRID - 1) as f64;
        let q = retract(&p, &grad.scaled(-step))?;
        worst = worst.max((rho(&q) - params.rho1) / params.rho1);
    }
    Ok(worst.max(0.0))
}

/// Endpoints with probability 1/4 each, otherwise uniform.
fn pick_level<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    match rng.random_range(0..4) {
        0 => lo,
        1 => hi,
        _ => rng.random_range(lo..=hi),
    }
}

/// A point with `‖x‖² = level`. Half the time `U` and `V` are chosen so the
/// sampled entry sees one factor fully (the extreme case for the bounds).
fn point_at_level<R: Rng + ?Sized>(
    data: &SparseWeightedMatrix,
    k: usize,
    level: f64,
    s: EntrySample,
    rng: &mut R,
) -> Result<ProductPoint> {
    let mut x = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = x.norm();
    if norm == 0.0 {
        x[0] = 1.0;
    } else {
        x /= norm;
    }
    x *= level.sqrt();
    let (u, v) = if rng.random_bool(0.5) {
        (
            aligned_stiefel(data.m(), k, s.row, rng)?,
            aligned_stiefel(data.n(), k, s.col, rng)?,
        )
    } else {
        (random_stiefel(data.m(), k, rng)?, random_stiefel(data.n(), k, rng)?)
    };
    ProductPoint::new(u, x, v)
}

/// Column-permuted, sign-flipped identity columns with `e_row` among them.
fn aligned_stiefel<R: Rng + ?Sized>(n: usize, k: usize, row: usize, rng: &mut R) -> Result<StiefelPoint> {
    let mut rows: Vec<usize> = (0..n).filter(|&i| i != row).collect();
    rows.shuffle(rng);
    rows.insert(rng.random_range(0..k), row);
    let mut q = DMatrix::zeros(n, k);
    for (l, &i) in rows.iter().take(k).enumerate() {
        q[(i, l)] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    }
    StiefelPoint::new(q)
}

/// `R_p(0) = p` and `dR_p(0) = id`, the latter by Richardson-extrapolated
/// central differences. Reports the larger of the two errors, each scaled
/// to its own threshold (`1e-12` and `1e-6`), so the reported threshold is 1.
pub fn check_retraction_axioms(seed: u64, trials: usize) -> Result<CheckReport> {
    let mut tr = Tracker::new("retraction_axioms", 1.0);
    for trial in 0..trials {
        let (inst, mut rng) = random_instance(seed.wrapping_add(trial as u64), 8, &[0.0])?;
        let p = &inst.point;
        let zero = retract(p, &ProductTangent::zeros(p))?;
        let zero_err = p.max_abs_diff(&zero);
        let v = random_unit_tangent(p, &mut rng)?;
        let d = |h: f64| -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
            let a = retract(p, &v.scaled(h))?;
            let b = retract(p, &v.scaled(-h))?;
            Ok((
                (a.u.matrix() - b.u.matrix()) / (2.0 * h),
                (&a.x - &b.x) / (2.0 * h),
                (a.v.matrix() - b.v.matrix()) / (2.0 * h),
            ))
        };
        let (u1, x1, v1) = d(RICHARDSON_STEP)?;
        let (u2, x2, v2) = d(RICHARDSON_STEP / 2.0)?;
        let du = (u2 * 4.0 - u1) / 3.0;
        let dx = (x2 * 4.0 - x1) / 3.0;
        let dv = (v2 * 4.0 - v1) / 3.0;
        let diff =
            ((du - v.y.matrix()).norm_squared() + (dx - &v.xhat).norm_squared() + (dv - v.z.matrix()).norm_squared())
                .sqrt();
        tr.instances += 1;
        tr.record(
            (zero_err / RETRACTION_ZERO_THRESHOLD).max(diff / RETRACTION_DIFF_THRESHOLD),
            &inst.desc,
        );
    }
    Ok(tr.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    GradientFd,
    Expectation,
    Hessian,
    Confinement,
    Retraction,
}

impl CheckKind {
    pub const ALL: [CheckKind; 5] = [
        CheckKind::GradientFd,
        CheckKind::Expectation,
        CheckKind::Hessian,
        CheckKind::Confinement,
        CheckKind::Retraction,
    ];

    pub fn default_trials(self) -> usize {
        match self {
            CheckKind::GradientFd => 50,
            CheckKind::Expectation => 20,
            CheckKind::Hessian => 1000,
            CheckKind::Confinement => 1000,
            CheckKind::Retraction => 50,
        }
    }
}

/// Deliberate formula corruptions used to confirm the oracles can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    FlipGradientX,
    InflateKappa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub seed: u64,
    pub checks: Vec<CheckKind>,
    /// Overrides every check's default trial count.
    pub trials: Option<usize>,
    pub mutation: Option<Mutation>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            checks: CheckKind::ALL.to_vec(),
            trials: None,
            mutation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsOutcome {
    pub reports: Vec<CheckReport>,
    pub warnings: Vec<String>,
}

impl DiagnosticsOutcome {
    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

pub fn run_all(config: &DiagnosticsConfig) -> Result<DiagnosticsOutcome> {
    let mut warnings = Vec::new();
    if config.checks.is_empty() {
        warnings.push("no checks selected; passing vacuously".to_string());
    }
    let mut reports = Vec::with_capacity(config.checks.len());
    for &kind in &config.checks {
        let trials = config.trials.unwrap_or(kind.default_trials());
        let seed = config.seed;
        let report = match (kind, config.mutation) {
            (CheckKind::GradientFd, Some(Mutation::FlipGradientX)) => check_gradient_fd_flipped(seed, trials)?,
            (CheckKind::GradientFd, _) => check_gradient_fd(seed, trials)?,
            (CheckKind::Expectation, _) => check_expectation(seed, trials)?,
            (CheckKind::Hessian, _) => check_hessian_identity(seed, trials)?,
            (CheckKind::Confinement, Some(Mutation::InflateKappa)) => check_confinement_inflated(seed, trials)?,
            (CheckKind::Confinement, _) => check_confinement(seed, trials)?,
            (CheckKind::Retraction, _) => check_retraction_axioms(seed, trials)?,
        };
        if report.instances == 0 {
            warnings.push(format!("{}: zero instances tested; passing vacuously", report.name));
        }
        reports.push(report);
    }
    Ok(DiagnosticsOutcome { reports, warnings })
}

/// Human-readable table of reports.
pub fn format_reports(reports: &[CheckReport]) -> String {
    let mut out = format!(
        "{:<28} {:>9} {:>12} {:>10} {:>6}  {}\n",
        "check", "instances", "max_rel_err", "threshold", "result", "worst instance"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<28} {:>9} {:>12.3e} {:>10.1e} {:>6}  {}\n",
            r.name,
            r.instances,
            r.max_rel_err,
            r.threshold,
            if r.pass { "PASS" } else { "FAIL" },
            r.worst.as_ref().map(|d| d.to_string()).unwrap_or_else(|| "-".into())
        ));
    }
    out
}
