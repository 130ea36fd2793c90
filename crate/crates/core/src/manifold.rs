//! Stiefel manifold `V_k(R^n) = { X ∈ R^{n×k} : XᵀX = I_k }` and the product
//! manifold `V_k(R^m) × R^k × V_k(R^n)`.
//!
//! Tangent vectors live in the ambient matrix space and carry the Frobenius
//! inner product. The retraction is the `qf` retraction applied factorwise:
//!
//! ```text
//! R_(U,x,V)(Y, x̂, Z) = (qf(U + Y), x + x̂, qf(V + Z))
//! ```

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Default tolerance for the orthonormality and tangency invariants.
pub const INVARIANT_TOL: f64 = 1e-10;

/// Relative tolerance on `|R_jj|` below which `qf` reports rank deficiency.
pub const RANK_TOL: f64 = 1e-12;

/// A point of `V_k(R^n)`: an `n × k` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    data: DMatrix<f64>,
}

impl StiefelPoint {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(data, INVARIANT_TOL)
    }

    pub fn with_tolerance(data: DMatrix<f64>, tol: f64) -> Result<Self> {
        if data.ncols() == 0 || data.ncols() > data.nrows() {
            return Err(Error::Dimension(format!(
                "Stiefel point needs 1 <= k <= n, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        let err = orthonormality_error(&data);
        if !(err <= tol) {
            return Err(Error::Contract(format!(
                "matrix is not orthonormal: max |XᵀX - I| = {err:e} > {tol:e}"
            )));
        }
        Ok(Self { data })
    }

    /// Builds a point without checking the invariant. Callers guarantee it.
    pub(crate) fn from_orthonormal(data: DMatrix<f64>) -> Self {
        Self { data }
    }

    /// Identity-like point: the first `k` columns of `I_n`.
    pub fn identity(n: usize, k: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, k))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    /// `max |XᵀX − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.data)
    }
}

fn orthonormality_error(x: &DMatrix<f64>) -> f64 {
    let gram = x.transpose() * x;
    let k = gram.nrows();
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// `max |XᵀZ + ZᵀX|`, zero exactly when `Z` is tangent at `X`.
pub fn tangency_error(x: &DMatrix<f64>, z: &DMatrix<f64>) -> f64 {
    let xtz = x.transpose() * z;
    let sym = &xtz + xtz.transpose();
    sym.amax()
}

/// A tangent vector at a Stiefel point, stored as an ambient `n × k` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelTangent {
    data: DMatrix<f64>,
}

impl StiefelTangent {
    /// Validates `XᵀZ + ZᵀX = 0` at the default tolerance.
    pub fn new(base: &StiefelPoint, data: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(base, data, INVARIANT_TOL)
    }

    pub fn with_tolerance(base: &StiefelPoint, data: DMatrix<f64>, tol: f64) -> Result<Self> {
        check_shape(base.matrix(), &data)?;
        let err = tangency_error(base.matrix(), &data);
        if !(err <= tol) {
            return Err(Error::Contract(format!(
                "matrix is not tangent: max |XᵀZ + ZᵀX| = {err:e} > {tol:e}"
            )));
        }
        Ok(Self { data })
    }

    pub fn zeros(base: &StiefelPoint) -> Self {
        Self {
            data: DMatrix::zeros(base.nrows(), base.ncols()),
        }
    }

    #[cfg(test)]
    pub(crate) fn from_tangent(data: DMatrix<f64>) -> Self {
        Self { data }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { data: &self.data * s }
    }
}

fn check_shape(x: &DMatrix<f64>, xi: &DMatrix<f64>) -> Result<()> {
    if x.shape() != xi.shape() {
        return Err(Error::Dimension(format!(
            "shape mismatch: base is {:?}, argument is {:?}",
            x.shape(),
            xi.shape()
        )));
    }
    Ok(())
}

/// Orthogonal projection onto `T_X V_k(R^n)`:
/// `Π_X(ξ) = (I − XXᵀ)ξ + ½X(Xᵀξ − ξᵀX)`, evaluated as `ξ − X·sym(Xᵀξ)`.
pub fn project_tangent(x: &StiefelPoint, xi: &DMatrix<f64>) -> Result<StiefelTangent> {
    check_shape(x.matrix(), xi)?;
    let xm = x.matrix();
    let xtxi = xm.transpose() * xi;
    let sym = (&xtxi + xtxi.transpose()) * 0.5;
    Ok(StiefelTangent { data: xi - xm * sym })
}

/// Projection of the rank-one matrix `e_row · gᵀ` onto `T_X V_k(R^n)`.
///
/// With `u` the `row`-th row of `X`, `Π_X(e_row gᵀ) = e_row gᵀ − ½X(u gᵀ + g uᵀ)`,
/// which costs `O(nk)` instead of forming the dense product.
pub fn project_row_tangent(x: &StiefelPoint, row: usize, g: &DVector<f64>) -> Result<StiefelTangent> {
    let xm = x.matrix();
    let (n, k) = xm.shape();
    if row >= n || g.len() != k {
        return Err(Error::Dimension(format!(
            "row projection: row {row} of {n}, vector length {} vs k = {k}",
            g.len()
        )));
    }
    let u: DVector<f64> = xm.row(row).transpose();
    let xu = xm * &u;
    let xg = xm * g;
    let mut data = (&xu * g.transpose() + &xg * u.transpose()) * -0.5;
    for l in 0..k {
        data[(row, l)] += g[l];
    }
    Ok(StiefelTangent { data })
}

/// The `Q` factor of the QR decomposition with strictly positive `diag(R)`.
pub fn qf(c: &DMatrix<f64>) -> Result<StiefelPoint> {
    qr_positive(c).map(|(q, _)| q)
}

/// Thin QR decomposition `C = QR` with `R_jj > 0`.
///
/// Householder QR followed by a sign fix on each column of `Q` and row of `R`
/// whose diagonal entry came out negative. Fails when
/// `|R_jj| <= RANK_TOL · ‖C_{:,j}‖`.
pub fn qr_positive(c: &DMatrix<f64>) -> Result<(StiefelPoint, DMatrix<f64>)> {
    let (n, k) = c.shape();
    if k == 0 || k > n {
        return Err(Error::Dimension(format!("qf needs 1 <= k <= n, got {n}x{k}")));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Dimension("qf input has non-finite entries".into()));
    }
    let qr = c.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..k {
        let col_norm = c.column(j).norm();
        let diag = r[(j, j)];
        let tol = RANK_TOL * col_norm;
        if diag.abs() <= tol {
            return Err(Error::RankDeficient {
                column: j,
                diag: diag.abs(),
                tol,
            });
        }
        if diag < 0.0 {
            q.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
    }
    Ok((StiefelPoint::from_orthonormal(q), r))
}

/// Uniformly distributed Stiefel point: `qf` of a standard Gaussian matrix.
pub fn random_stiefel<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<StiefelPoint> {
    if k == 0 || k > n {
        return Err(Error::Dimension(format!(
            "random_stiefel needs 1 <= k <= n, got n = {n}, k = {k}"
        )));
    }
    let mut last = None;
    for _ in 0..3 {
        let g = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        match qf(&g) {
            Ok(q) => return Ok(q),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("three attempts were made"))
}

/// A point `(U, x, V)` of `V_k(R^m) × R^k × V_k(R^n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPoint {
    pub u: StiefelPoint,
    pub x: DVector<f64>,
    pub v: StiefelPoint,
}

impl ProductPoint {
    pub fn new(u: StiefelPoint, x: DVector<f64>, v: StiefelPoint) -> Result<Self> {
        if u.ncols() != x.len() || v.ncols() != x.len() {
            return Err(Error::Dimension(format!(
                "product point rank mismatch: U has {} columns, x has {} entries, V has {} columns",
                u.ncols(),
                x.len(),
                v.ncols()
            )));
        }
        Ok(Self { u, x, v })
    }

    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.len()
    }

    /// Largest orthonormality error over both Stiefel factors.
    pub fn orthonormality_error(&self) -> f64 {
        self.u.orthonormality_error().max(self.v.orthonormality_error())
    }

    /// Dense `U · diag(x) · Vᵀ`. Only meant for small instances.
    pub fn dense(&self) -> DMatrix<f64> {
        let ux = DMatrix::from_fn(self.m(), self.k(), |i, l| self.u.matrix()[(i, l)] * self.x[l]);
        ux * self.v.matrix().transpose()
    }

    /// Entrywise max distance to another point of the same shape.
    pub fn max_abs_diff(&self, other: &ProductPoint) -> f64 {
        let du = (self.u.matrix() - other.u.matrix()).amax();
        let dx = (&self.x - &other.x).amax();
        let dv = (self.v.matrix() - other.v.matrix()).amax();
        du.max(dx).max(dv)
    }
}

/// A tangent vector `(Y, x̂, Z)` at a product point.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTangent {
    pub y: StiefelTangent,
    pub xhat: DVector<f64>,
    pub z: StiefelTangent,
}

impl ProductTangent {
    /// Validates tangency of both Stiefel components at `p`.
    pub fn new(p: &ProductPoint, y: DMatrix<f64>, xhat: DVector<f64>, z: DMatrix<f64>) -> Result<Self> {
        if xhat.len() != p.k() {
            return Err(Error::Dimension(format!(
                "x̂ has {} entries, expected {}",
                xhat.len(),
                p.k()
            )));
        }
        Ok(Self {
            y: StiefelTangent::new(&p.u, y)?,
            xhat,
            z: StiefelTangent::new(&p.v, z)?,
        })
    }

    /// Projects an arbitrary ambient triple onto the tangent space at `p`.
    pub fn project(p: &ProductPoint, y: &DMatrix<f64>, xhat: DVector<f64>, z: &DMatrix<f64>) -> Result<Self> {
        if xhat.len() != p.k() {
            return Err(Error::Dimension(format!(
                "x̂ has {} entries, expected {}",
                xhat.len(),
                p.k()
            )));
        }
        Ok(Self {
            y: project_tangent(&p.u, y)?,
            xhat,
            z: project_tangent(&p.v, z)?,
        })
    }

    pub fn zeros(p: &ProductPoint) -> Self {
        Self {
            y: StiefelTangent::zeros(&p.u),
            xhat: DVector::zeros(p.k()),
            z: StiefelTangent::zeros(&p.v),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            y: self.y.scaled(s),
            xhat: &self.xhat * s,
            z: self.z.scaled(s),
        }
    }

    /// `‖Y‖_F² + ‖x̂‖² + ‖Z‖_F²`.
    pub fn norm_squared(&self) -> f64 {
        self.y.matrix().norm_squared() + self.xhat.norm_squared() + self.z.matrix().norm_squared()
    }

    /// Largest tangency residual of the Stiefel components at `p`.
    pub fn tangency_error(&self, p: &ProductPoint) -> f64 {
        tangency_error(p.u.matrix(), self.y.matrix()).max(tangency_error(p.v.matrix(), self.z.matrix()))
    }
}

fn check_tangent_at(p: &ProductPoint, v: &ProductTangent) -> Result<()> {
    if v.y.matrix().shape() != p.u.matrix().shape()
        || v.z.matrix().shape() != p.v.matrix().shape()
        || v.xhat.len() != p.k()
    {
        return Err(Error::Contract("tangent vector shape does not match base point".into()));
    }
    let err = v.tangency_error(p);
    // Tangents built at p by projection are exact up to round-off that grows
    // with the vector's magnitude.
    let scale = 1.0 + v.y.matrix().amax().max(v.z.matrix().amax());
    if !(err <= INVARIANT_TOL * scale) {
        return Err(Error::Contract(format!(
            "tangent vector is not tangent at this base point (residual {err:e})"
        )));
    }
    Ok(())
}

/// Retraction `(qf(U + Y), x + x̂, qf(V + Z))`.
pub fn retract(p: &ProductPoint, v: &ProductTangent) -> Result<ProductPoint> {
    if v.y.matrix().shape() != p.u.matrix().shape()
        || v.z.matrix().shape() != p.v.matrix().shape()
        || v.xhat.len() != p.k()
    {
        return Err(Error::Dimension(
            "retraction: tangent shape does not match base point".into(),
        ));
    }
    let u = qf(&(p.u.matrix() + v.y.matrix()))?;
    let x = &p.x + &v.xhat;
    let w = qf(&(p.v.matrix() + v.z.matrix()))?;
    Ok(ProductPoint { u, x, v: w })
}

/// Riemannian metric on the product: sum of the factorwise Frobenius inner
/// products.
pub fn inner(p: &ProductPoint, v1: &ProductTangent, v2: &ProductTangent) -> Result<f64> {
    check_tangent_at(p, v1)?;
    check_tangent_at(p, v2)?;
    Ok(v1.y.matrix().dot(v2.y.matrix()) + v1.xhat.dot(&v2.xhat) + v1.z.matrix().dot(v2.z.matrix()))
}

/// Uniform random product point with the given `x`.
pub fn random_product_point<R: Rng + ?Sized>(m: usize, n: usize, x: DVector<f64>, rng: &mut R) -> Result<ProductPoint> {
    let k = x.len();
    let u = random_stiefel(m, k, rng)?;
    let v = random_stiefel(n, k, rng)?;
    ProductPoint::new(u, x, v)
}

/// Random tangent vector at `p` with unit norm.
pub fn random_unit_tangent<R: Rng + ?Sized>(p: &ProductPoint, rng: &mut R) -> Result<ProductTangent> {
    let mut draw = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = draw(p.m(), p.k());
    let z = draw(p.n(), p.k());
    let xhat: DVector<f64> = draw(p.k(), 1).column(0).into_owned();
    let t = ProductTangent::project(p, &y, xhat, &z)?;
    let norm = t.norm_squared().sqrt();
    if norm == 0.0 {
        return Err(Error::Contract("degenerate random tangent".into()));
    }
    Ok(t.scaled(1.0 / norm))
}
