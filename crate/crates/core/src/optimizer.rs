//! SGD on `V_k(R^m) × R^k × V_k(R^n)` with adaptive or deterministic
//! learning rates.
//!
//! Each step samples `(τ_t, γ_t)`, computes `∇g_{τ_t γ_t}` at the current
//! iterate and moves to `R_{x_t}(−η_t ∇g)`. In adaptive mode
//!
//! ```text
//! η_t = α / (β + Σ_{s<t} ‖∇g_s‖²)^(1/2 + ε)
//! ```
//!
//! so `η_t` only sees gradients of earlier steps.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confinement::{check_confined, rho, ConfinementParams};
use crate::error::{Error, Result};
use crate::manifold::{random_stiefel, retract, ProductPoint};
use crate::sampling::SamplingTable;
use crate::wlra::{cost_regularized, cost_unregularized, stochastic_gradient, EntrySample, SparseWeightedMatrix};

/// Default cadence for full-cost evaluation.
pub const DEFAULT_EVAL_EVERY: u64 = 10;

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Adaptive {
        alpha: f64,
        beta: f64,
        epsilon: f64,
    },
    /// `η_t = η0 · K / (K + t)`.
    Deterministic {
        eta0: f64,
        decay: f64,
    },
}

impl Schedule {
    pub fn adaptive(params: &ConfinementParams) -> Self {
        Schedule::Adaptive {
            alpha: params.alpha,
            beta: params.beta,
            epsilon: params.epsilon,
        }
    }

    /// Deterministic baseline starting at `η0 = κ`.
    pub fn deterministic(params: &ConfinementParams, decay: f64) -> Self {
        Schedule::Deterministic {
            eta0: params.kappa,
            decay,
        }
    }

    pub fn eta(&self, t: u64, accum: f64) -> f64 {
        match *self {
            Schedule::Adaptive { alpha, beta, epsilon } => adaptive_eta(alpha, beta, epsilon, accum),
            Schedule::Deterministic { eta0, decay } => deterministic_eta(t, eta0, decay),
        }
    }

    /// Checks the schedule against the confinement bundle: the first step
    /// must not exceed `κ`.
    pub fn validate(&self, params: &ConfinementParams) -> Result<()> {
        match *self {
            Schedule::Adaptive { alpha, beta, epsilon } => {
                if alpha != params.alpha || beta != params.beta || epsilon != params.epsilon {
                    return Err(Error::Parameter(
                        "adaptive schedule constants differ from the confinement bundle".into(),
                    ));
                }
                params.validate()
            }
            Schedule::Deterministic { eta0, decay } => {
                if !(decay > 0.0) || !decay.is_finite() {
                    return Err(Error::Parameter(format!(
                        "decay constant K must be positive, got {decay}"
                    )));
                }
                if !(eta0 > 0.0 && eta0 <= params.kappa) {
                    return Err(Error::Parameter(format!(
                        "deterministic eta0 = {eta0:e} must lie in (0, κ = {:e}]",
                        params.kappa
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Schedule::Adaptive { .. } => "adaptive",
            Schedule::Deterministic { .. } => "deterministic",
        }
    }
}

/// `α / (β + accum)^(1/2 + ε)`.
pub fn adaptive_eta(alpha: f64, beta: f64, epsilon: f64, accum: f64) -> f64 {
    alpha / (beta + accum).powf(0.5 + epsilon)
}

/// `η0 · K / (K + t)`: divergent sum, summable squares.
pub fn deterministic_eta(t: u64, eta0: f64, decay: f64) -> f64 {
    eta0 * decay / (decay + t as f64)
}

/// `α² / (2ε β^{2ε})`, the bound on every prefix of `Σ η_{t+1}² ‖∇g_t‖²`.
pub fn series_bound(alpha: f64, beta: f64, epsilon: f64) -> f64 {
    alpha * alpha / (2.0 * epsilon * beta.powf(2.0 * epsilon))
}

/// Iterate and learning-rate bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    /// Number of steps taken.
    pub t: u64,
    pub point: ProductPoint,
    /// `Σ_{s<t} ‖∇g_s‖²`.
    pub grad_sq_accum: f64,
    /// Learning rate for the next step.
    pub eta: f64,
    /// `Σ_{s<t} η_{s+1}² ‖∇g_s‖²`.
    pub series_sum: f64,
}

impl OptimizerState {
    pub fn new(point: ProductPoint, schedule: &Schedule) -> Self {
        Self {
            t: 0,
            point,
            grad_sq_accum: 0.0,
            eta: schedule.eta(0, 0.0),
            series_sum: 0.0,
        }
    }
}

/// One row of the metrics stream.
///
/// The record with index `t > 0` describes the step from `x_{t−1}` to `x_t`:
/// `eta` and `grad_norm_sq` belong to that step, the remaining fields to the
/// new iterate. Costs are `None` on steps that skip the full evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub t: u64,
    pub eta: f64,
    pub cost_unreg: Option<f64>,
    pub cost_reg: Option<f64>,
    pub rho: f64,
    pub grad_norm_sq: f64,
    pub accum: f64,
}

/// Baseline record for the initial iterate.
pub fn initial_record(
    state: &OptimizerState,
    data: &SparseWeightedMatrix,
    params: &ConfinementParams,
) -> Result<MetricsRecord> {
    Ok(MetricsRecord {
        t: state.t,
        eta: state.eta,
        cost_unreg: Some(cost_unregularized(&state.point, data)?),
        cost_reg: Some(cost_regularized(&state.point, data, params.lambda)?),
        rho: rho(&state.point),
        grad_norm_sq: 0.0,
        accum: state.grad_sq_accum,
    })
}

fn confinement_error(t: u64, p: &ProductPoint, params: &ConfinementParams) -> Error {
    Error::ConfinementViolation {
        t,
        rho: rho(p),
        rho1: params.rho1,
        params: params.describe(),
    }
}

/// One SGD step using the given sample.
pub fn step(
    state: &OptimizerState,
    sample: EntrySample,
    data: &SparseWeightedMatrix,
    params: &ConfinementParams,
    schedule: &Schedule,
    evaluate_cost: bool,
) -> Result<(OptimizerState, MetricsRecord)> {
    if !check_confined(&state.point, params) {
        return Err(confinement_error(state.t, &state.point, params));
    }
    let grad = stochastic_gradient(&state.point, sample, data, params.lambda)?;
    let grad_norm_sq = grad.norm_squared();
    let eta = state.eta;
    let point = retract(&state.point, &grad.scaled(-eta))?;
    let t = state.t + 1;
    if !check_confined(&point, params) {
        return Err(confinement_error(t, &point, params));
    }
    let accum = state.grad_sq_accum + grad_norm_sq;
    let next_eta = schedule.eta(t, accum);
    let series_sum = state.series_sum + next_eta * next_eta * grad_norm_sq;
    if let Schedule::Adaptive { alpha, beta, epsilon } = *schedule {
        debug_assert!(
            series_sum <= series_bound(alpha, beta, epsilon) * (1.0 + 1e-12),
            "adaptive series bound exceeded at t = {t}"
        );
    }
    let (cost_unreg, cost_reg) = if evaluate_cost {
        let f = cost_unregularized(&point, data)?;
        (Some(f), Some(f + params.lambda * point.x.norm_squared()))
    } else {
        (None, None)
    };
    let record = MetricsRecord {
        t,
        eta,
        cost_unreg,
        cost_reg,
        rho: rho(&point),
        grad_norm_sq,
        accum,
    };
    let next = OptimizerState {
        t,
        point,
        grad_sq_accum: accum,
        eta: next_eta,
        series_sum,
    };
    Ok((next, record))
}

/// Source of sampled entries for a run.
pub trait SampleSource {
    fn next_sample(&mut self) -> Result<EntrySample>;
}

/// Draws from the alias table with a seeded generator.
#[derive(Debug, Clone)]
pub struct LiveSampler<'a> {
    table: &'a SamplingTable,
    rng: ChaCha8Rng,
}

impl<'a> LiveSampler<'a> {
    pub fn new(table: &'a SamplingTable, seed: u64) -> Self {
        Self {
            table,
            rng: sampler_rng(seed),
        }
    }
}

impl SampleSource for LiveSampler<'_> {
    fn next_sample(&mut self) -> Result<EntrySample> {
        Ok(self.table.sample(&mut self.rng))
    }
}

/// Replays a fixed sample sequence, shared between compared runs.
#[derive(Debug, Clone)]
pub struct PreDrawn<'a> {
    samples: &'a [EntrySample],
    pos: usize,
}

impl<'a> PreDrawn<'a> {
    pub fn new(samples: &'a [EntrySample]) -> Self {
        Self { samples, pos: 0 }
    }
}

impl SampleSource for PreDrawn<'_> {
    fn next_sample(&mut self) -> Result<EntrySample> {
        let s =
            self.samples.get(self.pos).copied().ok_or_else(|| {
                Error::Config(format!("pre-drawn sample sequence exhausted after {} draws", self.pos))
            })?;
        self.pos += 1;
        Ok(s)
    }
}

/// Draws `count` samples with the same stream a [`LiveSampler`] with this
/// seed would produce.
pub fn predraw(table: &SamplingTable, seed: u64, count: usize) -> Vec<EntrySample> {
    let mut rng = sampler_rng(seed);
    (0..count).map(|_| table.sample(&mut rng)).collect()
}

fn sampler_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Receives records as the run progresses.
pub trait MetricsSink {
    fn write_record(&mut self, record: &MetricsRecord) -> std::io::Result<()>;

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

impl MetricsSink for Vec<MetricsRecord> {
    fn write_record(&mut self, record: &MetricsRecord) -> std::io::Result<()> {
        self.push(*record);
        Ok(())
    }
}

/// Discards every record.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl MetricsSink for NullSink {
    fn write_record(&mut self, _record: &MetricsRecord) -> std::io::Result<()> {
        Ok(())
    }
}

/// How `x0` is chosen for the initial iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum X0Init {
    /// `x0 = 0`.
    Zero,
    /// Every component equal to `sqrt(m·n·Σw a² / k)`, so that
    /// `‖U0 diag(x0) V0ᵀ‖_F²` matches the observed energy scaled to the full
    /// matrix.
    #[default]
    Matched,
    /// Every component equal to the given value.
    Constant(f64),
}

/// Random `U0`, `V0` from `seed` and `x0` per `init`.
pub fn initial_point(data: &SparseWeightedMatrix, k: usize, init: X0Init, seed: u64) -> Result<ProductPoint> {
    if k == 0 || k > data.m().min(data.n()) {
        return Err(Error::Parameter(format!(
            "rank k = {k} must satisfy 1 <= k <= min(m, n) = {}",
            data.m().min(data.n())
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_stiefel(data.m(), k, &mut rng)?;
    let v = random_stiefel(data.n(), k, &mut rng)?;
    let value = match init {
        X0Init::Zero => 0.0,
        X0Init::Matched => (data.m() as f64 * data.n() as f64 * data.weighted_mean_square() / k as f64).sqrt(),
        X0Init::Constant(c) => c,
    };
    if !value.is_finite() {
        return Err(Error::Parameter(format!("initial x0 component {value} is not finite")));
    }
    ProductPoint::new(u, DVector::from_element(k, value), v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub iterations: u64,
    pub eval_every: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            iterations: 1000,
            eval_every: DEFAULT_EVAL_EVERY,
        }
    }
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<MetricsRecord>,
    pub final_state: OptimizerState,
}

/// Runs `opts.iterations` steps from `init`, emitting the `t = 0` record
/// first and every step record after it.
pub fn run(
    data: &SparseWeightedMatrix,
    params: &ConfinementParams,
    schedule: &Schedule,
    init: ProductPoint,
    opts: RunOptions,
    samples: &mut dyn SampleSource,
    sink: &mut dyn MetricsSink,
) -> Result<RunOutcome> {
    if opts.iterations == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    if opts.eval_every == 0 {
        return Err(Error::Config("eval_every must be at least 1".into()));
    }
    if init.k() != params.k {
        return Err(Error::Dimension(format!(
            "initial point has rank {} but parameters were derived for k = {}",
            init.k(),
            params.k
        )));
    }
    schedule.validate(params)?;
    let mut state = OptimizerState::new(init, schedule);
    let mut records = Vec::with_capacity(opts.iterations as usize + 1);

    let emit = |sink: &mut dyn MetricsSink, records: &mut Vec<MetricsRecord>, r: MetricsRecord| -> Result<()> {
        if let Err(e) = sink.write_record(&r) {
            let _ = sink.flush();
            return Err(Error::Io(e));
        }
        records.push(r);
        Ok(())
    };

    let first = initial_record(&state, data, params)?;
    emit(sink, &mut records, first)?;
    for _ in 0..opts.iterations {
        let sample = samples.next_sample()?;
        let t_next = state.t + 1;
        let evaluate = t_next.is_multiple_of(opts.eval_every) || t_next == opts.iterations;
        let result = step(&state, sample, data, params, schedule, evaluate);
        let (next, record) = match result {
            Ok(v) => v,
            Err(e) => {
                let _ = sink.flush();
                return Err(e);
            }
        };
        state = next;
        emit(sink, &mut records, record)?;
    }
    sink.flush()?;
    Ok(RunOutcome {
        records,
        final_state: state,
    })
}

/// [`run`] with samples drawn live from `seed`.
pub fn run_seeded(
    data: &SparseWeightedMatrix,
    params: &ConfinementParams,
    schedule: &Schedule,
    init: ProductPoint,
    opts: RunOptions,
    seed: u64,
    sink: &mut dyn MetricsSink,
) -> Result<RunOutcome> {
    let table = SamplingTable::new(data)?;
    let mut sampler = LiveSampler::new(&table, seed);
    run(data, params, schedule, init, opts, &mut sampler, sink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::StiefelPoint;
    use crate::wlra::entry_value;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn small_problem(seed: u64) -> (SparseWeightedMatrix, ProductPoint, ConfinementParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut triples = Vec::new();
        for i in 0..6 {
            for j in 0..5 {
                if rng.random_bool(0.5) {
                    triples.push((i, j, rng.random_range(1.0..5.0f64).round()));
                }
            }
        }
        let data = SparseWeightedMatrix::uniform(6, 5, &triples).unwrap();
        let init = initial_point(&data, 2, X0Init::Matched, seed).unwrap();
        let a = crate::confinement::max_squared_entry(&data).unwrap();
        let params = ConfinementParams::derive(0.05, 2, a, None, 1.0, 0.25, init.x.norm_squared()).unwrap();
        (data, init, params)
    }

    #[test]
    fn zero_gradient_step_keeps_point() {
        let one = StiefelPoint::new(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let p = ProductPoint::new(one.clone(), DVector::from_element(1, 0.0), one).unwrap();
        let data = SparseWeightedMatrix::uniform(1, 1, &[(0, 0, 0.0)]).unwrap();
        let params = ConfinementParams::derive(0.1, 1, 0.0, Some(0.01), 1.0, 0.5, 0.0).unwrap();
        let schedule = Schedule::adaptive(&params);
        let state = OptimizerState::new(p.clone(), &schedule);
        let (next, rec) = step(&state, data.sample_at(0, 0).unwrap(), &data, &params, &schedule, true).unwrap();
        assert!(next.point.max_abs_diff(&p) <= 1e-12);
        assert_eq!(rec.grad_norm_sq, 0.0);
    }

    #[test]
    fn zero_residual_random_point_is_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = crate::manifold::random_product_point(4, 3, DVector::from_vec(vec![1.0, 2.0]), &mut rng).unwrap();
        let data = SparseWeightedMatrix::uniform(4, 3, &[(1, 2, entry_value(&p, 1, 2).unwrap())]).unwrap();
        let a = crate::confinement::max_squared_entry(&data).unwrap();
        let params = ConfinementParams::derive(0.1, 2, a, None, 1.0, 0.5, p.x.norm_squared()).unwrap();
        // λ > 0 pulls x toward 0, so compare only the Stiefel factors.
        let schedule = Schedule::adaptive(&params);
        let state = OptimizerState::new(p.clone(), &schedule);
        let (next, _) = step(&state, data.sample_at(1, 2).unwrap(), &data, &params, &schedule, false).unwrap();
        assert!((next.point.u.matrix() - p.u.matrix()).amax() <= 1e-12);
        assert!((next.point.v.matrix() - p.v.matrix()).amax() <= 1e-12);
    }

    #[test]
    fn adaptive_eta_arithmetic() {
        // α = 1, β = 100, ε = 1/2.
        assert!((adaptive_eta(1.0, 100.0, 0.5, 0.0) - 0.01).abs() < 1e-17);
        assert!((adaptive_eta(1.0, 100.0, 0.5, 300.0) - 0.0025).abs() < 1e-17);
    }

    #[test]
    fn first_eta_equals_kappa() {
        let (_, init, params) = small_problem(1);
        let state = OptimizerState::new(init, &Schedule::adaptive(&params));
        assert!(((state.eta - params.kappa) / params.kappa).abs() <= 1e-12);
    }

    #[test]
    fn deterministic_eta_examples() {
        assert_eq!(deterministic_eta(0, 0.3, 1e4), 0.3);
        assert!((deterministic_eta(10_000, 0.3, 1e4) - 0.15).abs() < 1e-16);
        // Harmonic-sum oracle: partial sums track η0·K·ln((K + T)/K).
        let (eta0, k) = (1.0, 1e4);
        let mut sum = 0.0;
        let mut checkpoints = Vec::new();
        for t in 0..1_000_000u64 {
            sum += deterministic_eta(t, eta0, k);
            if (t + 1) % 100_000 == 0 {
                checkpoints.push(sum);
                let approx = eta0 * k * ((k + t as f64 + 1.0) / k).ln();
                assert!((sum - approx).abs() / approx < 0.01);
            }
        }
        assert!(checkpoints.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn one_iteration_yields_two_records() {
        let (data, init, params) = small_problem(2);
        let out = run_seeded(
            &data,
            &params,
            &Schedule::adaptive(&params),
            init,
            RunOptions {
                iterations: 1,
                eval_every: 10,
            },
            7,
            &mut NullSink,
        )
        .unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[0].t, 0);
        assert_eq!(out.records[1].t, 1);
        assert!(out.records[1].cost_unreg.is_some());
    }

    #[test]
    fn eval_cadence() {
        let (data, init, params) = small_problem(3);
        let out = run_seeded(
            &data,
            &params,
            &Schedule::adaptive(&params),
            init,
            RunOptions {
                iterations: 25,
                eval_every: 10,
            },
            7,
            &mut NullSink,
        )
        .unwrap();
        let evaluated: Vec<u64> = out
            .records
            .iter()
            .filter(|r| r.cost_unreg.is_some())
            .map(|r| r.t)
            .collect();
        assert_eq!(evaluated, vec![0, 10, 20, 25]);
    }

    #[test]
    fn same_seed_same_stream() {
        let (data, init, params) = small_problem(4);
        let schedule = Schedule::adaptive(&params);
        let opts = RunOptions {
            iterations: 200,
            eval_every: 5,
        };
        let a = run_seeded(&data, &params, &schedule, init.clone(), opts, 11, &mut NullSink).unwrap();
        let b = run_seeded(&data, &params, &schedule, init, opts, 11, &mut NullSink).unwrap();
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn predrawn_matches_live() {
        let (data, init, params) = small_problem(5);
        let schedule = Schedule::adaptive(&params);
        let opts = RunOptions {
            iterations: 50,
            eval_every: 1,
        };
        let live = run_seeded(&data, &params, &schedule, init.clone(), opts, 3, &mut NullSink).unwrap();
        let table = SamplingTable::new(&data).unwrap();
        let samples = predraw(&table, 3, 50);
        let replay = run(
            &data,
            &params,
            &schedule,
            init,
            opts,
            &mut PreDrawn::new(&samples),
            &mut NullSink,
        )
        .unwrap();
        assert_eq!(live.records, replay.records);
    }

    #[test]
    fn predrawn_exhaustion_is_an_error() {
        let (data, init, params) = small_problem(6);
        let table = SamplingTable::new(&data).unwrap();
        let samples = predraw(&table, 3, 5);
        let err = run(
            &data,
            &params,
            &Schedule::adaptive(&params),
            init,
            RunOptions {
                iterations: 10,
                eval_every: 1,
            },
            &mut PreDrawn::new(&samples),
            &mut NullSink,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn eta_monotone_and_accum_nondecreasing() {
        let (data, init, params) = small_problem(7);
        for schedule in [Schedule::adaptive(&params), Schedule::deterministic(&params, 100.0)] {
            let out = run_seeded(
                &data,
                &params,
                &schedule,
                init.clone(),
                RunOptions {
                    iterations: 300,
                    eval_every: 50,
                },
                1,
                &mut NullSink,
            )
            .unwrap();
            for w in out.records.windows(2) {
                assert!(w[1].eta <= w[0].eta);
                assert!(w[1].accum >= w[0].accum);
            }
            assert!(out.records.iter().all(|r| r.eta <= params.kappa * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn adaptive_eta_matches_formula_along_run() {
        let (data, init, params) = small_problem(8);
        let schedule = Schedule::adaptive(&params);
        let out = run_seeded(
            &data,
            &params,
            &schedule,
            init,
            RunOptions {
                iterations: 100,
                eval_every: 10,
            },
            2,
            &mut NullSink,
        )
        .unwrap();
        let mut accum_before = 0.0;
        for r in &out.records[1..] {
            let expected = adaptive_eta(params.alpha, params.beta, params.epsilon, accum_before);
            assert!(((r.eta - expected) / expected).abs() <= 1e-12);
            accum_before = r.accum;
        }
    }

    #[test]
    fn strict_decrease_with_nonzero_gradient() {
        let (data, init, params) = small_problem(9);
        let schedule = Schedule::adaptive(&params);
        let out = run_seeded(
            &data,
            &params,
            &schedule,
            init,
            RunOptions {
                iterations: 50,
                eval_every: 10,
            },
            5,
            &mut NullSink,
        )
        .unwrap();
        // records[t+1].eta = η_t; η_{t+1} < η_t whenever ‖∇g_t‖ > 0.
        for w in out.records[1..].windows(2) {
            if w[0].grad_norm_sq > 0.0 {
                assert!(w[1].eta < w[0].eta);
            }
        }
    }

    #[test]
    fn deterministic_schedule_validation() {
        let (_, _, params) = small_problem(10);
        assert!(Schedule::deterministic(&params, 1e4).validate(&params).is_ok());
        let too_big = Schedule::Deterministic {
            eta0: params.kappa * 2.0,
            decay: 1e4,
        };
        assert!(too_big.validate(&params).is_err());
        let bad_k = Schedule::Deterministic {
            eta0: params.kappa,
            decay: 0.0,
        };
        assert!(bad_k.validate(&params).is_err());
    }

    #[test]
    fn violation_is_a_hard_error() {
        let (data, init, mut params) = small_problem(11);
        params.rho1 = init.x.norm_squared() * 0.5;
        let schedule = Schedule::adaptive(&params);
        let state = OptimizerState::new(init, &schedule);
        let s = SamplingTable::new(&data)
            .unwrap()
            .sample(&mut ChaCha8Rng::seed_from_u64(0));
        let err = step(&state, s, &data, &params, &schedule, false).unwrap_err();
        assert!(matches!(err, Error::ConfinementViolation { .. }));
        assert!(err.to_string().contains("kappa="));
    }

    #[test]
    fn sink_failure_is_io_error() {
        struct Failing(usize);
        impl MetricsSink for Failing {
            fn write_record(&mut self, _r: &MetricsRecord) -> std::io::Result<()> {
                if self.0 == 0 {
                    return Err(std::io::Error::other("disk full"));
                }
                self.0 -= 1;
                Ok(())
            }
        }
        let (data, init, params) = small_problem(12);
        let err = run_seeded(
            &data,
            &params,
            &Schedule::adaptive(&params),
            init,
            RunOptions {
                iterations: 10,
                eval_every: 1,
            },
            1,
            &mut Failing(3),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }

    #[test]
    fn li_orabona_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..500 {
            let a0: f64 = rng.random_range(1.0001..50.0);
            let b: f64 = rng.random_range(1.01..3.0);
            let len = rng.random_range(1..400);
            let mut partial = a0;
            let mut lhs = 0.0;
            for _ in 0..len {
                let at: f64 = if rng.random_bool(0.2) {
                    0.0
                } else {
                    rng.random_range(0.0..100.0)
                };
                partial += at;
                lhs += at / partial.powf(b);
            }
            let rhs = 1.0 / ((b - 1.0) * a0.powf(b - 1.0));
            assert!(lhs <= rhs, "a0 = {a0}, b = {b}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn initial_point_rank_checks() {
        let (data, _, _) = small_problem(14);
        assert!(initial_point(&data, 0, X0Init::Zero, 1).is_err());
        assert!(initial_point(&data, 6, X0Init::Zero, 1).is_err());
        let p = initial_point(&data, 3, X0Init::Constant(2.0), 1).unwrap();
        assert_eq!(p.x.as_slice(), &[2.0, 2.0, 2.0]);
        let m = initial_point(&data, 2, X0Init::Matched, 1).unwrap();
        let expected = 30.0 * data.weighted_mean_square();
        assert!((m.x.norm_squared() - expected).abs() <= 1e-12 * expected);
    }
}
