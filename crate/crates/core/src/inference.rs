//! Restrictions on the sieve coefficients, their sandwich variance and the
//! Wald statistic with chi-square and standardized normal references.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::{
    basis_row, derivative_operator, design_matrix, domain_grid, multi_indices_up_to, BasisSpec,
    Family,
};
use crate::covariance::{CovarianceEstimate, CovarianceSource};
use crate::error::{Result, SieveError};
use crate::estimator::{Factored, FittedSieve, Surface};
use crate::linalg::{extreme_eigenvalues, symmetrize};
use crate::special::{chi2_sf, normal_sf};

/// Relative singular-value cutoff for constraint rank.
pub const CONSTRAINT_TOL: f64 = 1e-10;

/// Relative eigenvalue cutoff when inverting `V`.
pub const VARIANCE_TOL: f64 = 1e-10;

/// Largest `R` for which the chi-square reference is reported as primary.
pub const CHI2_PRIMARY_MAX_DF: usize = 30;

/// `H0: Psi_tilde beta = Gamma_0` with linearly independent rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    pub psi_tilde: DMatrix<f64>,
    pub gamma0: DVector<f64>,
    pub effective_rank: usize,
    /// Row count before rank reduction.
    pub original_rows: usize,
    pub label: String,
}

impl ConstraintSpec {
    /// Rank-reduce `(psi_tilde, gamma0)` and wrap the result.
    pub fn new(psi_tilde: DMatrix<f64>, gamma0: DVector<f64>, label: impl Into<String>) -> Result<Self> {
        let original_rows = psi_tilde.nrows();
        let reduced = rank_reduce(&psi_tilde, &gamma0, CONSTRAINT_TOL)?;
        Ok(ConstraintSpec {
            effective_rank: reduced.rank,
            psi_tilde: reduced.psi_tilde,
            gamma0: reduced.gamma0,
            original_rows,
            label: label.into(),
        })
    }

    pub fn params(&self) -> usize {
        self.psi_tilde.ncols()
    }

    /// `(lambda_min, lambda_max)` of `Psi_tilde Psi_tilde'`.
    pub fn row_gram_extremes(&self) -> (f64, f64) {
        extreme_eigenvalues(&(&self.psi_tilde * self.psi_tilde.transpose()))
    }

    /// Same restriction with rows mixed by an invertible `M`.
    pub fn transformed(&self, m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m * &self.psi_tilde, m * &self.gamma0, self.label.clone())
    }
}

/// Output of [`rank_reduce`].
#[derive(Debug, Clone, PartialEq)]
pub struct Reduced {
    pub psi_tilde: DMatrix<f64>,
    pub gamma0: DVector<f64>,
    pub rank: usize,
    /// Original row indices kept, in their original order.
    pub kept: Vec<usize>,
}

/// Keep a maximal independent subset of rows and check the dropped ones for consistency.
///
/// The rank comes from the singular values; rows are then picked by pivoted
/// Gram-Schmidt so the kept system is made of original rows.
pub fn rank_reduce(psi_tilde: &DMatrix<f64>, gamma0: &DVector<f64>, tol: f64) -> Result<Reduced> {
    if !(tol > 0.0) {
        return Err(SieveError::InvalidArgument("rank tolerance must be positive".into()));
    }
    let (rows, cols) = psi_tilde.shape();
    if gamma0.len() != rows {
        return Err(SieveError::DimensionMismatch {
            expected: rows,
            found: gamma0.len(),
        });
    }
    if psi_tilde.iter().chain(gamma0.iter()).any(|v| !v.is_finite()) {
        return Err(SieveError::NonFinite("constraint system".into()));
    }
    if rows == 0 || cols == 0 {
        return Err(SieveError::NoRestriction);
    }
    let sv = psi_tilde.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return Err(SieveError::NoRestriction);
    }
    let rank = sv.iter().filter(|&&s| s > tol * smax).count();

    let mut residual: Vec<DVector<f64>> = psi_tilde.row_iter().map(|r| r.transpose()).collect();
    let mut kept = Vec::with_capacity(rank);
    for _ in 0..rank {
        let (best, _) = residual
            .iter()
            .enumerate()
            .filter(|(i, _)| !kept.contains(i))
            .map(|(i, r)| (i, r.norm()))
            .fold((usize::MAX, -1.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        let q = &residual[best] / residual[best].norm();
        for (i, r) in residual.iter_mut().enumerate() {
            if i != best && !kept.contains(&i) {
                // twice is enough
                for _ in 0..2 {
                    let c = q.dot(r);
                    r.axpy(-c, &q, 1.0);
                }
            }
        }
        kept.push(best);
    }
    kept.sort_unstable();

    let basis = psi_tilde.select_rows(&kept);
    let g_kept = gamma0.select_rows(&kept);
    let qr = basis.transpose().qr();
    let (q, r) = (qr.q(), qr.r());
    for i in (0..rows).filter(|i| !kept.contains(i)) {
        let row = psi_tilde.row(i).transpose();
        // row = basis' c  =>  R c = Q' row
        let c = r
            .solve_upper_triangular(&(q.transpose() * &row))
            .expect("kept rows are independent");
        let implied = c.dot(&g_kept);
        let gap = (implied - gamma0[i]).abs();
        let scale = 1.0_f64
            .max(gamma0[i].abs())
            .max(c.iter().zip(g_kept.iter()).map(|(a, b)| (a * b).abs()).sum());
        if gap > 100.0 * tol * scale {
            return Err(SieveError::InconsistentConstraints { row: i, gap });
        }
    }
    Ok(Reduced {
        psi_tilde: basis,
        gamma0: g_kept,
        rank,
        kept,
    })
}

/// `f(x_r) = values_r` for each point.
pub fn pointwise_constraint(
    spec: &BasisSpec,
    points: &[Vec<f64>],
    values: &[f64],
) -> Result<ConstraintSpec> {
    if points.len() != values.len() {
        return Err(SieveError::DimensionMismatch {
            expected: points.len(),
            found: values.len(),
        });
    }
    if points.is_empty() {
        return Err(SieveError::NoRestriction);
    }
    let p = spec.len();
    let mut m = DMatrix::zeros(points.len(), p);
    for (r, x) in points.iter().enumerate() {
        let row = basis_row(spec, x).map_err(|e| SieveError::at_row(r, e))?;
        m.row_mut(r).copy_from_slice(&row);
    }
    ConstraintSpec::new(m, DVector::from_column_slice(values), "point")
}

/// `S_J (x) I + I (x) S_K` with chain factors, before rank reduction.
pub fn derivative_sum_matrix(spec: &BasisSpec) -> Result<DMatrix<f64>> {
    if spec.dim() != 2 {
        return Err(SieveError::DimensionMismatch {
            expected: 2,
            found: spec.dim(),
        });
    }
    if spec.family() != Family::Legendre {
        return Err(SieveError::FamilyMismatch(
            "the derivative-sum restriction is built for the legendre family".into(),
        ));
    }
    let dx = derivative_operator(spec, &[1, 0])?;
    let dy = derivative_operator(spec, &[0, 1])?;
    Ok(dx.matrix + dy.matrix)
}

/// `df/dx1 + df/dx2 = 0` as a restriction on every coefficient of the derivative.
pub fn derivative_sum_constraint(spec: &BasisSpec) -> Result<ConstraintSpec> {
    let m = derivative_sum_matrix(spec)?;
    let rows = m.nrows();
    ConstraintSpec::new(m, DVector::zeros(rows), "derivative_sum")
}

/// `f(x1, x2) = kappa (x1 - x2)`: zero intercept, opposite linear terms, nothing else.
pub fn stevens_constraint(spec: &BasisSpec) -> Result<ConstraintSpec> {
    if spec.dim() != 2 {
        return Err(SieveError::DimensionMismatch {
            expected: 2,
            found: spec.dim(),
        });
    }
    let (da, db) = (spec.domain()[0], spec.domain()[1]);
    if da != db {
        return Err(SieveError::Ordering(
            "both axes must share one interval for kappa (x1 - x2) to lie in the span".into(),
        ));
    }
    let find = |alpha: [usize; 2]| {
        spec.index_of(&alpha).ok_or_else(|| {
            SieveError::Ordering(format!("basis has no term with multi-index {alpha:?}"))
        })
    };
    let (c0, c1, c2) = (find([0, 0])?, find([1, 0])?, find([0, 1])?);
    let p = spec.len();
    let mut m = DMatrix::zeros(p - 1, p);
    m[(0, c0)] = 1.0;
    m[(1, c1)] = 1.0;
    m[(1, c2)] = 1.0;
    let mut r = 2;
    for j in (0..p).filter(|&j| j != c0 && j != c1 && j != c2) {
        m[(r, j)] = 1.0;
        r += 1;
    }
    ConstraintSpec::new(m, DVector::zeros(p - 1), "stevens")
}

/// User-supplied `(Psi_tilde, Gamma_0)`.
pub fn linear_constraint(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<ConstraintSpec> {
    if matrix.iter().all(|&v| v == 0.0) {
        return Err(SieveError::NoRestriction);
    }
    ConstraintSpec::new(matrix, rhs, "matrix")
}

/// Central-difference Jacobian with step `1e-6 (1 + |beta_j|)`.
pub fn finite_difference_jacobian(
    gamma: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    beta: &DVector<f64>,
) -> DMatrix<f64> {
    let r = gamma(beta).len();
    let p = beta.len();
    let mut jac = DMatrix::zeros(r, p);
    for j in 0..p {
        let h = 1e-6 * (1.0 + beta[j].abs());
        let mut up = beta.clone();
        let mut down = beta.clone();
        up[j] += h;
        down[j] -= h;
        let col = (gamma(&up) - gamma(&down)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Delta-method restriction `Gamma(beta) = Gamma_0` linearized at `beta_hat`.
///
/// The stored right-hand side is shifted so that `Psi_tilde beta_hat - rhs`
/// equals `Gamma(beta_hat) - Gamma_0`, which lets [`wald`] treat it as linear.
pub fn nonlinear_functional(
    gamma: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    gamma_prime_rows: Option<&dyn Fn(&DVector<f64>) -> DMatrix<f64>>,
    beta_hat: &DVector<f64>,
    gamma0: &DVector<f64>,
) -> Result<ConstraintSpec> {
    let value = gamma(beta_hat);
    let jac = match gamma_prime_rows {
        Some(f) => f(beta_hat),
        None => finite_difference_jacobian(gamma, beta_hat),
    };
    if value.iter().chain(jac.iter()).any(|v| !v.is_finite()) {
        return Err(SieveError::NonFinite("nonlinear functional or its derivative".into()));
    }
    if jac.shape() != (value.len(), beta_hat.len()) {
        return Err(SieveError::DimensionMismatch {
            expected: value.len() * beta_hat.len(),
            found: jac.len(),
        });
    }
    if gamma0.len() != value.len() {
        return Err(SieveError::DimensionMismatch {
            expected: value.len(),
            found: gamma0.len(),
        });
    }
    let rhs = gamma0 - value + &jac * beta_hat;
    ConstraintSpec::new(jac, rhs, "nonlinear")
}

/// `V = (1/n) Psi_tilde (Psi'Psi)^{-1} Psi' Sigma Psi (Psi'Psi)^{-1} Psi_tilde'`.
pub fn functional_variance(
    psi: &DMatrix<f64>,
    sigma: &CovarianceEstimate,
    psi_tilde: &DMatrix<f64>,
    n: usize,
) -> Result<DMatrix<f64>> {
    let factored = Factored::new(psi)?;
    functional_variance_factored(&factored, psi, sigma, psi_tilde, n)
}

fn functional_variance_factored(
    factored: &Factored,
    psi: &DMatrix<f64>,
    sigma: &CovarianceEstimate,
    psi_tilde: &DMatrix<f64>,
    n: usize,
) -> Result<DMatrix<f64>> {
    if psi_tilde.ncols() != psi.ncols() {
        return Err(SieveError::DimensionMismatch {
            expected: psi.ncols(),
            found: psi_tilde.ncols(),
        });
    }
    if sigma.dim() != psi.nrows() {
        return Err(SieveError::DimensionMismatch {
            expected: psi.nrows(),
            found: sigma.dim(),
        });
    }
    if n == 0 {
        return Err(SieveError::InvalidArgument("n must be positive".into()));
    }
    // Psi (Psi'Psi)^{-1} Psi_tilde' = Q R^{-T} Psi_tilde'
    let h = &factored.q * factored.whiten_rows(psi_tilde);
    let v = symmetrize(&(h.transpose() * &sigma.matrix * &h / n as f64));
    let (lmin, lmax) = extreme_eigenvalues(&v);
    if lmin < -1e-10 * lmax.abs().max(f64::MIN_POSITIVE) {
        return Err(SieveError::NotPsd(lmin));
    }
    Ok(v)
}

/// Symmetric `V^{-1/2}` by eigendecomposition.
pub fn inv_sqrt_psd(v: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if !v.is_square() || v.is_empty() {
        return Err(SieveError::InvalidArgument("V must be a nonempty square matrix".into()));
    }
    let eig = SymmetricEigen::new(symmetrize(v));
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if !(lmin > tol * lmax) || !(lmax > 0.0) {
        return Err(SieveError::IllConditioned {
            lambda_min: lmin,
            lambda_max: lmax,
        });
    }
    let scaled = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let u = &eig.eigenvectors;
    Ok(symmetrize(&(u * scaled * u.transpose())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    ChiSquare,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldReport {
    #[serde(rename = "statistic")]
    pub w_star: f64,
    #[serde(rename = "standardized")]
    pub w_standardized: f64,
    #[serde(rename = "df")]
    pub r: usize,
    pub p_chi2: f64,
    pub p_normal: f64,
    pub primary: Reference,
    pub covariance_source: CovarianceSource,
    #[serde(rename = "constraint")]
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bias_bound: Option<f64>,
}

impl WaldReport {
    pub fn from_statistic(w_star: f64, r: usize, source: CovarianceSource, label: &str) -> Self {
        let w = (w_star - r as f64) / (2.0 * r as f64).sqrt();
        WaldReport {
            w_star,
            w_standardized: w,
            r,
            p_chi2: chi2_sf(w_star, r),
            p_normal: normal_sf(w),
            primary: if r <= CHI2_PRIMARY_MAX_DF {
                Reference::ChiSquare
            } else {
                Reference::Normal
            },
            covariance_source: source,
            label: label.to_string(),
            bias_bound: None,
        }
    }

    pub fn primary_p(&self) -> f64 {
        match self.primary {
            Reference::ChiSquare => self.p_chi2,
            Reference::Normal => self.p_normal,
        }
    }
}

/// Precomputed `A_nT` for repeated statistics with a fixed design, restriction and covariance.
#[derive(Debug, Clone)]
pub struct WaldPlan {
    pub a: DMatrix<f64>,
    pub psi_tilde: DMatrix<f64>,
    pub gamma0: DVector<f64>,
    pub source: CovarianceSource,
    pub label: String,
}

impl WaldPlan {
    pub fn new(
        psi: &DMatrix<f64>,
        constraint: &ConstraintSpec,
        sigma: &CovarianceEstimate,
        n: usize,
    ) -> Result<Self> {
        let v = functional_variance(psi, sigma, &constraint.psi_tilde, n)?;
        Ok(WaldPlan {
            a: inv_sqrt_psd(&v, VARIANCE_TOL)?,
            psi_tilde: constraint.psi_tilde.clone(),
            gamma0: constraint.gamma0.clone(),
            source: sigma.source,
            label: constraint.label.clone(),
        })
    }

    /// `W* = ||A (Psi_tilde beta - Gamma_0)||^2`.
    pub fn w_star(&self, beta: &DVector<f64>) -> f64 {
        (&self.a * (&self.psi_tilde * beta - &self.gamma0)).norm_squared()
    }

    pub fn report(&self, beta: &DVector<f64>) -> WaldReport {
        WaldReport::from_statistic(self.w_star(beta), self.gamma0.len(), self.source, &self.label)
    }
}

/// Wald test of `constraint` at `fit` with covariance `sigma`.
pub fn wald(
    fit: &FittedSieve,
    constraint: &ConstraintSpec,
    sigma: &CovarianceEstimate,
) -> Result<WaldReport> {
    if constraint.params() != fit.params() {
        return Err(SieveError::DimensionMismatch {
            expected: fit.params(),
            found: constraint.params(),
        });
    }
    let plan = WaldPlan::new(&fit.design, constraint, sigma, fit.n)?;
    Ok(plan.report(&fit.beta_hat))
}

/// Upper bound on the standardized bias of the restriction.
///
/// `f_P` is the least-squares projection of `f_true` on the sieve over a
/// tensor grid with `grid_resolution` points per axis; the sup norms use the
/// same grid.
pub fn bias_bound(
    f_true: &dyn Surface,
    fit: &FittedSieve,
    constraint: &ConstraintSpec,
    sigma: &CovarianceEstimate,
    s: usize,
    c3: f64,
    grid_resolution: usize,
) -> Result<f64> {
    let spec = &fit.spec;
    let grid = domain_grid(spec, grid_resolution);
    let points = DMatrix::from_fn(grid.len(), spec.dim(), |i, k| grid[i][k]);
    let psi_grid = design_matrix(spec, &points)?;
    let values = DVector::from_iterator(grid.len(), grid.iter().map(|x| f_true.eval(x)));
    let coeffs = Factored::new(&psi_grid)?.solve_vec(&values);
    let ops = multi_indices_up_to(spec.dim(), s)
        .into_iter()
        .map(|l| derivative_operator(spec, &l))
        .collect::<Result<Vec<_>>>()?;
    let mut sup0: f64 = 0.0;
    let mut sup_s: f64 = 0.0;
    for (g, x) in grid.iter().enumerate() {
        let row = psi_grid.row(g);
        sup0 = sup0.max((row.dot(&coeffs.transpose()) - values[g]).abs());
        for op in &ops {
            let fp: f64 = (row * &op.matrix * &coeffs)[(0, 0)];
            sup_s = sup_s.max((fp - f_true.partial(&op.multi_index, x)).abs());
        }
    }
    if !(sigma.lambda_min > 0.0) {
        return Err(SieveError::IllConditioned {
            lambda_min: sigma.lambda_min,
            lambda_max: sigma.lambda_max,
        });
    }
    let (rmin, rmax) = constraint.row_gram_extremes();
    if !(rmin > 0.0) {
        return Err(SieveError::IllConditioned {
            lambda_min: rmin,
            lambda_max: rmax,
        });
    }
    let nt = fit.n as f64 * fit.tasks as f64;
    Ok((nt / sigma.lambda_min).sqrt() * (sup0 + c3 * sup_s / rmin.sqrt()))
}
