//! Regularized weighted low-rank approximation on the reduced-SVD
//! parametrization `P = U · diag(x) · Vᵀ`.
//!
//! The weights define a probability measure `μ` on the observed entries. For
//! a sampled entry `(τ, γ)` the random function is
//! `g_{τ,γ}(U, x, V) = (a_{τγ} − p_{τγ})² + λ‖x‖²`, whose expectation under
//! `μ` is the regularized cost `G = F̂ + λ‖x‖²`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::{project_row_tangent, project_tangent, ProductPoint, ProductTangent};

/// Weight sums further than this from one are an error.
pub const WEIGHT_SUM_ERROR: f64 = 1e-6;
/// Weight sums further than this (but within [`WEIGHT_SUM_ERROR`]) are renormalized.
pub const WEIGHT_SUM_RENORMALIZE: f64 = 1e-12;

/// One observed entry, 0-based indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
    pub weight: f64,
}

/// Observed entries of `A` together with the normalized weights `W`.
#[derive(Debug, Clone)]
pub struct SparseWeightedMatrix {
    m: usize,
    n: usize,
    entries: Vec<Entry>,
    index: HashMap<(usize, usize), usize>,
}

impl SparseWeightedMatrix {
    /// Validates indices, duplicates and weights.
    ///
    /// Weight sums within `1e-6` of one are renormalized; larger deviations
    /// are rejected.
    pub fn new(m: usize, n: usize, mut entries: Vec<Entry>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::Dimension(format!("matrix must be nonempty, got {m}x{n}")));
        }
        if entries.is_empty() {
            return Err(Error::Config("no observed entries".into()));
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (pos, e) in entries.iter().enumerate() {
            if e.row >= m || e.col >= n {
                return Err(Error::Dimension(format!(
                    "entry ({}, {}) outside {m}x{n}",
                    e.row + 1,
                    e.col + 1
                )));
            }
            if !e.value.is_finite() {
                return Err(Error::Config(format!(
                    "entry ({}, {}) has non-finite value",
                    e.row + 1,
                    e.col + 1
                )));
            }
            if !(e.weight >= 0.0) || !e.weight.is_finite() {
                return Err(Error::Config(format!(
                    "entry ({}, {}) has invalid weight {}",
                    e.row + 1,
                    e.col + 1,
                    e.weight
                )));
            }
            if index.insert((e.row, e.col), pos).is_some() {
                return Err(Error::Config(format!("duplicate entry ({}, {})", e.row + 1, e.col + 1)));
            }
        }
        let total = compensated_sum(entries.iter().map(|e| e.weight));
        let dev = (total - 1.0).abs();
        if dev > WEIGHT_SUM_ERROR {
            return Err(Error::Config(format!(
                "weights sum to {total}, which is not a probability measure"
            )));
        }
        if dev > WEIGHT_SUM_RENORMALIZE {
            for e in &mut entries {
                e.weight /= total;
            }
        }
        Ok(Self { m, n, entries, index })
    }

    /// Uniform weights `1 / #observed` over `(row, col, value)` triples.
    pub fn uniform(m: usize, n: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let w = 1.0 / triples.len().max(1) as f64;
        let entries = triples
            .iter()
            .map(|&(row, col, value)| Entry {
                row,
                col,
                value,
                weight: w,
            })
            .collect();
        Self::new(m, n, entries)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<&Entry> {
        self.index.get(&(row, col)).map(|&i| &self.entries[i])
    }

    /// Sample handle for the observed entry `(row, col)`.
    pub fn sample_at(&self, row: usize, col: usize) -> Result<EntrySample> {
        let &pos = self
            .index
            .get(&(row, col))
            .ok_or_else(|| Error::Dimension(format!("({}, {}) is not an observed entry", row + 1, col + 1)))?;
        self.sample_of(pos)
    }

    /// Sample handle for the `pos`-th stored entry.
    pub fn sample_of(&self, pos: usize) -> Result<EntrySample> {
        let e = self
            .entries
            .get(pos)
            .ok_or_else(|| Error::Dimension(format!("entry index {pos} out of range")))?;
        if e.weight <= 0.0 {
            return Err(Error::Config(format!(
                "entry ({}, {}) has zero weight and cannot be sampled",
                e.row + 1,
                e.col + 1
            )));
        }
        Ok(EntrySample {
            entry: pos,
            row: e.row,
            col: e.col,
        })
    }

    /// Weighted mean of the squared observed values, `Σ w a²`.
    pub fn weighted_mean_square(&self) -> f64 {
        self.entries.iter().map(|e| e.weight * e.value * e.value).sum()
    }
}

/// A sampled element `(τ, γ)` of the observed-entry probability space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EntrySample {
    /// Position of the entry in [`SparseWeightedMatrix::entries`].
    pub entry: usize,
    pub row: usize,
    pub col: usize,
}

fn check_dims(p: &ProductPoint, data: &SparseWeightedMatrix) -> Result<()> {
    if p.m() != data.m() || p.n() != data.n() {
        return Err(Error::Dimension(format!(
            "point is {}x{} but data is {}x{}",
            p.m(),
            p.n(),
            data.m(),
            data.n()
        )));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!(
            "lambda must be a finite non-negative number, got {lambda}"
        )));
    }
    Ok(())
}

#[inline]
fn entry_value_unchecked(p: &ProductPoint, row: usize, col: usize) -> f64 {
    let u = p.u.matrix();
    let v = p.v.matrix();
    (0..p.k()).map(|l| u[(row, l)] * p.x[l] * v[(col, l)]).sum()
}

/// `p_{τγ} = Σ_l u_{τl} x_l v_{γl}`.
pub fn entry_value(p: &ProductPoint, row: usize, col: usize) -> Result<f64> {
    if row >= p.m() || col >= p.n() {
        return Err(Error::Dimension(format!(
            "entry ({}, {}) outside {}x{}",
            row + 1,
            col + 1,
            p.m(),
            p.n()
        )));
    }
    Ok(entry_value_unchecked(p, row, col))
}

/// `F̂ = Σ w_ij (a_ij − p_ij)²` over the observed entries.
pub fn cost_unregularized(p: &ProductPoint, data: &SparseWeightedMatrix) -> Result<f64> {
    check_dims(p, data)?;
    Ok(data
        .entries()
        .iter()
        .filter(|e| e.weight > 0.0)
        .map(|e| {
            let r = e.value - entry_value_unchecked(p, e.row, e.col);
            e.weight * r * r
        })
        .sum())
}

/// `G = F̂ + λ‖x‖²`, using `‖U diag(x) Vᵀ‖_F = ‖x‖`.
pub fn cost_regularized(p: &ProductPoint, data: &SparseWeightedMatrix, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(cost_unregularized(p, data)? + lambda * p.x.norm_squared())
}

/// The sampled random function `g_{τγ} = (a − p)² + λ‖x‖²`.
pub fn sample_cost(p: &ProductPoint, s: EntrySample, data: &SparseWeightedMatrix, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let a = sampled_value(p, s, data)?;
    let r = a - entry_value_unchecked(p, s.row, s.col);
    Ok(r * r + lambda * p.x.norm_squared())
}

fn sampled_value(p: &ProductPoint, s: EntrySample, data: &SparseWeightedMatrix) -> Result<f64> {
    check_dims(p, data)?;
    let e = data
        .entries()
        .get(s.entry)
        .filter(|e| e.row == s.row && e.col == s.col)
        .ok_or_else(|| {
            Error::Dimension(format!(
                "sample ({}, {}) does not belong to this data",
                s.row + 1,
                s.col + 1
            ))
        })?;
    Ok(e.value)
}

/// Euclidean partials of `f̂_{τγ} = (a_{τγ} − p_{τγ})²`.
///
/// `∇_U f̂` is supported on row `τ` and `∇_V f̂` on row `γ`; only those rows
/// are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryPartials {
    pub row: usize,
    pub col: usize,
    /// Row `τ` of `∇_U f̂`: `−2(a − p) x_l v_{γl}`.
    pub u_row: DVector<f64>,
    /// Row `γ` of `∇_V f̂`: `−2(a − p) x_l u_{τl}`.
    pub v_row: DVector<f64>,
    /// `∇_x f̂`: `−2(a − p) u_{τl} v_{γl}`.
    pub dx: DVector<f64>,
    /// `a_{τγ} − p_{τγ}`.
    pub residual: f64,
}

impl EntryPartials {
    /// Dense `m × k` form of `∇_U f̂`.
    pub fn dense_u(&self, m: usize) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(m, self.u_row.len());
        g.set_row(self.row, &self.u_row.transpose());
        g
    }

    /// Dense `n × k` form of `∇_V f̂`.
    pub fn dense_v(&self, n: usize) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(n, self.v_row.len());
        g.set_row(self.col, &self.v_row.transpose());
        g
    }
}

pub fn entry_partials(p: &ProductPoint, s: EntrySample, data: &SparseWeightedMatrix) -> Result<EntryPartials> {
    let a = sampled_value(p, s, data)?;
    Ok(partials_at(p, s.row, s.col, a))
}

fn partials_at(p: &ProductPoint, row: usize, col: usize, a: f64) -> EntryPartials {
    let k = p.k();
    let u = p.u.matrix();
    let v = p.v.matrix();
    let residual = a - entry_value_unchecked(p, row, col);
    let c = -2.0 * residual;
    EntryPartials {
        row,
        col,
        u_row: DVector::from_fn(k, |l, _| c * p.x[l] * v[(col, l)]),
        v_row: DVector::from_fn(k, |l, _| c * p.x[l] * u[(row, l)]),
        dx: DVector::from_fn(k, |l, _| c * u[(row, l)] * v[(col, l)]),
        residual,
    }
}

/// Riemannian gradient of `g_{τγ}`:
/// `(Π_U(∇_U f̂), ∇_x f̂ + 2λx, Π_V(∇_V f̂))`.
pub fn stochastic_gradient(
    p: &ProductPoint,
    s: EntrySample,
    data: &SparseWeightedMatrix,
    lambda: f64,
) -> Result<ProductTangent> {
    check_lambda(lambda)?;
    let d = entry_partials(p, s, data)?;
    Ok(ProductTangent {
        y: project_row_tangent(&p.u, d.row, &d.u_row)?,
        xhat: d.dx + &p.x * (2.0 * lambda),
        z: project_row_tangent(&p.v, d.col, &d.v_row)?,
    })
}

/// Riemannian gradient of `G`: the `μ`-expectation of the stochastic
/// gradients, with the regularizer counted once.
pub fn full_gradient(p: &ProductPoint, data: &SparseWeightedMatrix, lambda: f64) -> Result<ProductTangent> {
    check_lambda(lambda)?;
    check_dims(p, data)?;
    let k = p.k();
    let mut gu = DMatrix::zeros(p.m(), k);
    let mut gv = DMatrix::zeros(p.n(), k);
    let mut gx = DVector::zeros(k);
    for e in data.entries().iter().filter(|e| e.weight > 0.0) {
        let d = partials_at(p, e.row, e.col, e.value);
        for l in 0..k {
            gu[(e.row, l)] += e.weight * d.u_row[l];
            gv[(e.col, l)] += e.weight * d.v_row[l];
        }
        gx.axpy(e.weight, &d.dx, 1.0);
    }
    gx.axpy(2.0 * lambda, &p.x, 1.0);
    Ok(ProductTangent {
        y: project_tangent(&p.u, &gu)?,
        xhat: gx,
        z: project_tangent(&p.v, &gv)?,
    })
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{inner, random_product_point, random_unit_tangent, retract, StiefelPoint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one() -> StiefelPoint {
        StiefelPoint::new(DMatrix::from_element(1, 1, 1.0)).unwrap()
    }

    fn grid_2x2() -> SparseWeightedMatrix {
        SparseWeightedMatrix::uniform(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 1, 4.0)]).unwrap()
    }

    fn random_instance(rng: &mut ChaCha8Rng, m: usize, n: usize, k: usize) -> (ProductPoint, SparseWeightedMatrix) {
        let x = DVector::from_fn(k, |_, _| rng.random_range(-3.0..3.0));
        let p = random_product_point(m, n, x, rng).unwrap();
        let mut entries = Vec::new();
        for i in 0..m {
            for j in 0..n {
                if rng.random_bool(0.6) || (i == 0 && j == 0) {
                    entries.push(Entry {
                        row: i,
                        col: j,
                        value: rng.random_range(-2.0..2.0),
                        weight: rng.random_range(0.1..1.0),
                    });
                }
            }
        }
        let total: f64 = entries.iter().map(|e| e.weight).sum();
        for e in &mut entries {
            e.weight /= total;
        }
        (p, SparseWeightedMatrix::new(m, n, entries).unwrap())
    }

    #[test]
    fn entry_value_vanishes_with_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_product_point(4, 3, DVector::zeros(2), &mut rng).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                assert_eq!(entry_value(&p, i, j).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn entry_value_rank_one_example() {
        let u = StiefelPoint::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let v = StiefelPoint::new(DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
        let p = ProductPoint::new(u, DVector::from_element(1, 3.0), v).unwrap();
        assert_eq!(entry_value(&p, 0, 1).unwrap(), 3.0);
        for (i, j) in [(0, 0), (1, 0), (1, 1)] {
            assert_eq!(entry_value(&p, i, j).unwrap(), 0.0);
        }
        assert!(matches!(entry_value(&p, 2, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn entry_value_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_product_point(6, 5, DVector::from_vec(vec![2.0, -1.0, 0.5]), &mut rng).unwrap();
        let dense = p.dense();
        for i in 0..6 {
            for j in 0..5 {
                assert!((entry_value(&p, i, j).unwrap() - dense[(i, j)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn cost_hand_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_product_point(2, 2, DVector::zeros(1), &mut rng).unwrap();
        let data = grid_2x2();
        assert!((cost_unregularized(&p, &data).unwrap() - 7.5).abs() < 1e-15);
        let p3 = ProductPoint::new(p.u.clone(), DVector::from_element(1, 3.0), p.v.clone()).unwrap();
        let dense = p3.dense();
        let expected: f64 = data
            .entries()
            .iter()
            .map(|e| 0.25 * (e.value - dense[(e.row, e.col)]).powi(2))
            .sum::<f64>()
            + 9.0;
        assert!((cost_regularized(&p3, &data, 1.0).unwrap() - expected).abs() < 1e-12);
        assert_eq!(
            cost_regularized(&p, &data, 1.0).unwrap(),
            cost_unregularized(&p, &data).unwrap()
        );
    }

    #[test]
    fn cost_zero_at_exact_fit() {
        let u = StiefelPoint::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let v = StiefelPoint::new(DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
        let p = ProductPoint::new(u, DVector::from_element(1, 3.0), v).unwrap();
        let data = SparseWeightedMatrix::uniform(2, 2, &[(0, 1, 3.0), (1, 1, 0.0)]).unwrap();
        assert_eq!(cost_unregularized(&p, &data).unwrap(), 0.0);
    }

    #[test]
    fn zero_weight_entries_contribute_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_product_point(2, 2, DVector::from_element(1, 1.0), &mut rng).unwrap();
        let base = vec![
            Entry {
                row: 0,
                col: 0,
                value: 1.0,
                weight: 0.5,
            },
            Entry {
                row: 1,
                col: 1,
                value: 2.0,
                weight: 0.5,
            },
        ];
        let mut with_zero = base.clone();
        with_zero.push(Entry {
            row: 0,
            col: 1,
            value: 1e6,
            weight: 0.0,
        });
        let a = SparseWeightedMatrix::new(2, 2, base).unwrap();
        let b = SparseWeightedMatrix::new(2, 2, with_zero).unwrap();
        assert_eq!(cost_unregularized(&p, &a).unwrap(), cost_unregularized(&p, &b).unwrap());
        assert!(b.sample_at(0, 1).is_err());
    }

    #[test]
    fn weight_scaling_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (p, data) = random_instance(&mut rng, 4, 4, 2);
        let base = cost_unregularized(&p, &data).unwrap();
        let halved: Vec<Entry> = data
            .entries()
            .iter()
            .map(|e| Entry {
                weight: e.weight * 0.5,
                ..*e
            })
            .collect();
        let direct: f64 = halved
            .iter()
            .map(|e| e.weight * (e.value - entry_value(&p, e.row, e.col).unwrap()).powi(2))
            .sum();
        assert!((direct - 0.5 * base).abs() <= 1e-14 * base.max(1.0));
    }

    #[test]
    fn weight_validation() {
        let e = |w| Entry {
            row: 0,
            col: 0,
            value: 1.0,
            weight: w,
        };
        let f = |w| Entry {
            row: 0,
            col: 1,
            value: 1.0,
            weight: w,
        };
        assert!(matches!(
            SparseWeightedMatrix::new(1, 2, vec![e(0.5), f(0.4)]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            SparseWeightedMatrix::new(1, 2, vec![e(-0.5), f(1.5)]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            SparseWeightedMatrix::new(1, 2, vec![e(0.5), e(0.5)]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            SparseWeightedMatrix::new(1, 1, vec![f(1.0)]),
            Err(Error::Dimension(_))
        ));
        let near = SparseWeightedMatrix::new(1, 2, vec![e(0.5), f(0.5 + 5e-7)]).unwrap();
        let sum: f64 = near.entries().iter().map(|e| e.weight).sum();
        assert!((sum - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn scalar_gradient_example() {
        let p = ProductPoint::new(one(), DVector::from_element(1, 0.5), one()).unwrap();
        let data = SparseWeightedMatrix::uniform(1, 1, &[(0, 0, 1.0)]).unwrap();
        let s = data.sample_at(0, 0).unwrap();
        let g = stochastic_gradient(&p, s, &data, 0.0).unwrap();
        assert_eq!(g.y.matrix()[(0, 0)], 0.0);
        assert_eq!(g.z.matrix()[(0, 0)], 0.0);
        assert_eq!(g.xhat[0], -1.0);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_product_point(4, 3, DVector::from_vec(vec![1.5, -0.7]), &mut rng).unwrap();
        let a = entry_value(&p, 2, 1).unwrap();
        let data = SparseWeightedMatrix::uniform(4, 3, &[(2, 1, a)]).unwrap();
        let g = stochastic_gradient(&p, data.sample_at(2, 1).unwrap(), &data, 0.0).unwrap();
        assert!(g.norm_squared() < 1e-28);
    }

    #[test]
    fn partials_are_row_sparse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (p, data) = random_instance(&mut rng, 6, 5, 3);
        let e = data.entries()[0];
        let d = entry_partials(&p, data.sample_at(e.row, e.col).unwrap(), &data).unwrap();
        let du = d.dense_u(6);
        let dv = d.dense_v(5);
        for i in 0..6 {
            if i != e.row {
                assert!(du.row(i).iter().all(|&v| v == 0.0));
            }
        }
        for j in 0..5 {
            if j != e.col {
                assert!(dv.row(j).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn stochastic_gradient_is_tangent_and_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..20 {
            let (p, data) = random_instance(&mut rng, 5, 4, 2);
            let lambda = if trial % 2 == 0 { 0.0 } else { 1e-2 };
            let e = data.entries()[rng.random_range(0..data.len())];
            let s = data.sample_at(e.row, e.col).unwrap();
            let g = stochastic_gradient(&p, s, &data, lambda).unwrap();
            assert!(g.tangency_error(&p) <= 1e-10);
            let v = random_unit_tangent(&p, &mut rng).unwrap();
            let h = 1e-5;
            let fp = sample_cost(&retract(&p, &v.scaled(h)).unwrap(), s, &data, lambda).unwrap();
            let fm = sample_cost(&retract(&p, &v.scaled(-h)).unwrap(), s, &data, lambda).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let an = inner(&p, &g, &v).unwrap();
            let scale = g.norm_squared().sqrt().max(1e-300);
            assert!((fd - an).abs() / scale <= 1e-6, "trial {trial}: fd {fd} vs {an}");
        }
    }

    #[test]
    fn full_gradient_single_entry_equals_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_product_point(3, 3, DVector::from_vec(vec![1.0, 2.0]), &mut rng).unwrap();
        let data = SparseWeightedMatrix::uniform(3, 3, &[(1, 2, 0.7)]).unwrap();
        let full = full_gradient(&p, &data, 0.3).unwrap();
        let st = stochastic_gradient(&p, data.sample_at(1, 2).unwrap(), &data, 0.3).unwrap();
        assert!((full.y.matrix() - st.y.matrix()).amax() < 1e-14);
        assert!((&full.xhat - &st.xhat).amax() < 1e-14);
        assert!((full.z.matrix() - st.z.matrix()).amax() < 1e-14);
    }

    #[test]
    fn full_gradient_is_weighted_combination() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (p, data) = random_instance(&mut rng, 5, 6, 3);
        let lambda = 0.2;
        let full = full_gradient(&p, &data, lambda).unwrap();
        let mut acc = ProductTangent::zeros(&p);
        for (pos, e) in data.entries().iter().enumerate() {
            let g = stochastic_gradient(&p, data.sample_of(pos).unwrap(), &data, 0.0).unwrap();
            acc = ProductTangent {
                y: crate::manifold::StiefelTangent::from_tangent(acc.y.matrix() + g.y.matrix() * e.weight),
                xhat: &acc.xhat + &g.xhat * e.weight,
                z: crate::manifold::StiefelTangent::from_tangent(acc.z.matrix() + g.z.matrix() * e.weight),
            };
        }
        acc.xhat += &p.x * (2.0 * lambda);
        let scale = full.norm_squared().sqrt();
        assert!((full.y.matrix() - acc.y.matrix()).amax() <= 1e-12 * scale);
        assert!((&full.xhat - &acc.xhat).amax() <= 1e-12 * scale);
        assert!((full.z.matrix() - acc.z.matrix()).amax() <= 1e-12 * scale);
    }

    #[test]
    fn full_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let (p, data) = random_instance(&mut rng, 6, 5, 2);
            let g = full_gradient(&p, &data, 1e-2).unwrap();
            let v = random_unit_tangent(&p, &mut rng).unwrap();
            let h = 1e-5;
            let fp = cost_regularized(&retract(&p, &v.scaled(h)).unwrap(), &data, 1e-2).unwrap();
            let fm = cost_regularized(&retract(&p, &v.scaled(-h)).unwrap(), &data, 1e-2).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let an = inner(&p, &g, &v).unwrap();
            assert!((fd - an).abs() / g.norm_squared().sqrt() <= 1e-6);
        }
    }

    #[test]
    fn regularizer_difference_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (p, data) = random_instance(&mut rng, 4, 4, 3);
        let lambda = 0.37;
        let diff = cost_regularized(&p, &data, lambda).unwrap() - cost_unregularized(&p, &data).unwrap();
        let expected = lambda * p.x.norm_squared();
        assert!((diff - expected).abs() <= 1e-14 * expected.max(1.0));
    }

    #[test]
    fn negative_lambda_rejected() {
        let data = grid_2x2();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = random_product_point(2, 2, DVector::zeros(1), &mut rng).unwrap();
        assert!(matches!(cost_regularized(&p, &data, -1.0), Err(Error::Parameter(_))));
    }
}
