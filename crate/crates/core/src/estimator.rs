//! Sieve least squares on averaged responses, prediction, the varying
//! coefficient extension and leave-one-task-out order selection.

use nalgebra::{DMatrix, DVector};

use crate::basis::{
    basis_row, derivative_operator, derivative_row, design_matrix, domain_grid,
    multi_indices_up_to, BasisSpec, DOMAIN_TOL,
};
use crate::error::{Result, SieveError};
use crate::linalg::extreme_eigenvalues;

/// Gram eigenvalues at or below this fraction of `lambda_max` count as singular.
pub const RANK_TOL: f64 = 1e-10;

/// Leverage at or above `1 - LEVERAGE_TOL` pins a task.
pub const LEVERAGE_TOL: f64 = 1e-10;

/// A complete `n x T` response panel with shared stimuli.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    responses: DMatrix<f64>,
    stimuli: DMatrix<f64>,
    domain: Vec<(f64, f64)>,
    covariates: Option<DMatrix<f64>>,
    subject_ids: Vec<String>,
    task_ids: Vec<String>,
}

impl ExperimentData {
    /// `responses` is `n x T`, `stimuli` is `T x d`.
    pub fn new(
        responses: DMatrix<f64>,
        stimuli: DMatrix<f64>,
        domain: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let (n, t) = responses.shape();
        if n == 0 || t == 0 {
            return Err(SieveError::InvalidArgument(
                "the panel needs at least one subject and one task".into(),
            ));
        }
        if stimuli.nrows() != t {
            return Err(SieveError::DimensionMismatch {
                expected: t,
                found: stimuli.nrows(),
            });
        }
        if stimuli.ncols() != domain.len() {
            return Err(SieveError::DimensionMismatch {
                expected: domain.len(),
                found: stimuli.ncols(),
            });
        }
        for i in 0..n {
            for j in 0..t {
                if !responses[(i, j)].is_finite() {
                    return Err(SieveError::IncompletePanel { subject: i, task: j });
                }
            }
        }
        for j in 0..t {
            for (k, &(a, b)) in domain.iter().enumerate() {
                let x = stimuli[(j, k)];
                if !(x >= a - DOMAIN_TOL && x <= b + DOMAIN_TOL) {
                    return Err(SieveError::at_row(
                        j,
                        SieveError::OutsideDomain {
                            axis: k,
                            value: x,
                            lo: a,
                            hi: b,
                        },
                    ));
                }
            }
        }
        Ok(ExperimentData {
            responses,
            stimuli,
            domain,
            covariates: None,
            subject_ids: (1..=n).map(|i| i.to_string()).collect(),
            task_ids: (1..=t).map(|j| j.to_string()).collect(),
        })
    }

    /// Attach an `n x q` binary covariate matrix.
    pub fn with_covariates(mut self, z: DMatrix<f64>) -> Result<Self> {
        if z.nrows() != self.n() {
            return Err(SieveError::DimensionMismatch {
                expected: self.n(),
                found: z.nrows(),
            });
        }
        for i in 0..z.nrows() {
            for j in 0..z.ncols() {
                let v = z[(i, j)];
                if v != 0.0 && v != 1.0 {
                    return Err(SieveError::at_row(
                        i,
                        SieveError::InvalidArgument(format!(
                            "covariate z{} = {v} is not binary",
                            j + 1
                        )),
                    ));
                }
            }
        }
        self.covariates = Some(z);
        Ok(self)
    }

    pub fn with_ids(mut self, subject_ids: Vec<String>, task_ids: Vec<String>) -> Result<Self> {
        if subject_ids.len() != self.n() {
            return Err(SieveError::DimensionMismatch {
                expected: self.n(),
                found: subject_ids.len(),
            });
        }
        if task_ids.len() != self.tasks() {
            return Err(SieveError::DimensionMismatch {
                expected: self.tasks(),
                found: task_ids.len(),
            });
        }
        self.subject_ids = subject_ids;
        self.task_ids = task_ids;
        Ok(self)
    }

    pub fn responses(&self) -> &DMatrix<f64> {
        &self.responses
    }

    pub fn stimuli(&self) -> &DMatrix<f64> {
        &self.stimuli
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn covariates(&self) -> Option<&DMatrix<f64>> {
        self.covariates.as_ref()
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn task_ids(&self) -> &[String] {
        &self.task_ids
    }

    pub fn n(&self) -> usize {
        self.responses.nrows()
    }

    pub fn tasks(&self) -> usize {
        self.responses.ncols()
    }

    pub fn dim(&self) -> usize {
        self.stimuli.ncols()
    }
}

/// `Y_bar_t = (1/n) sum_i Y_it`.
pub fn average_responses(data: &ExperimentData) -> DVector<f64> {
    column_means(data.responses())
}

fn column_means(y: &DMatrix<f64>) -> DVector<f64> {
    let n = y.nrows() as f64;
    DVector::from_iterator(y.ncols(), y.column_iter().map(|c| c.sum() / n))
}

/// Thin QR of a checked design.
pub(crate) struct Factored {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Factored {
    pub(crate) fn new(psi: &DMatrix<f64>) -> Result<Self> {
        let (t, p) = psi.shape();
        if t < p {
            return Err(SieveError::Underdetermined { tasks: t, params: p });
        }
        let gram = psi.transpose() * psi / t as f64;
        let (lambda_min, lambda_max) = extreme_eigenvalues(&gram);
        if !(lambda_min > RANK_TOL * lambda_max) {
            return Err(SieveError::IllConditioned {
                lambda_min,
                lambda_max,
            });
        }
        let qr = psi.clone().qr();
        Ok(Factored {
            q: qr.q(),
            r: qr.r(),
            lambda_min,
            lambda_max,
        })
    }

    /// Least-squares coefficients for every column of `rhs`.
    pub(crate) fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let qty = self.q.transpose() * rhs;
        self.r
            .solve_upper_triangular(&qty)
            .expect("R has a nonzero diagonal once the Gram check passes")
    }

    pub(crate) fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let qty = self.q.transpose() * rhs;
        self.r
            .solve_upper_triangular(&qty)
            .expect("R has a nonzero diagonal once the Gram check passes")
    }

    /// `R^{-T} M'` so that `M (Psi'Psi)^{-1} M' = G' G` with `G` the result.
    pub(crate) fn whiten_rows(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.r
            .transpose()
            .solve_lower_triangular(&m.transpose())
            .expect("R has a nonzero diagonal once the Gram check passes")
    }

    /// Diagonal of the hat matrix.
    pub(crate) fn leverages(&self) -> Vec<f64> {
        self.q
            .row_iter()
            .map(|row| row.iter().map(|v| v * v).sum())
            .collect()
    }
}

/// Result of a pooled sieve fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedSieve {
    pub spec: BasisSpec,
    pub beta_hat: DVector<f64>,
    /// `T x P` design `Psi`.
    pub design: DMatrix<f64>,
    pub stimuli: DMatrix<f64>,
    pub avg_response: DVector<f64>,
    /// `n x T`, row `i` is `Y_i - Psi beta_hat`.
    pub residuals: DMatrix<f64>,
    pub gram_lambda_min: f64,
    pub gram_lambda_max: f64,
    pub n: usize,
    pub tasks: usize,
}

impl FittedSieve {
    pub fn params(&self) -> usize {
        self.beta_hat.len()
    }

    pub fn fitted_values(&self) -> DVector<f64> {
        &self.design * &self.beta_hat
    }

    /// `f_hat(x) = psi(x) beta_hat`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let row = basis_row(&self.spec, x)?;
        Ok(row.iter().zip(self.beta_hat.iter()).map(|(a, b)| a * b).sum())
    }

    /// `d^lambda f_hat(x)`, chain factors included.
    pub fn predict_derivative(&self, multi_index: &[usize], x: &[f64]) -> Result<f64> {
        let op = derivative_operator(&self.spec, multi_index)?;
        let row = derivative_row(&self.spec, &op, x)?;
        Ok(row.iter().zip(self.beta_hat.iter()).map(|(a, b)| a * b).sum())
    }

    /// `||Psi'(Y_bar - Psi beta_hat)||` and the scale `||Psi||_F ||Y_bar||` it is judged against.
    pub fn normal_equation_residual(&self) -> (f64, f64) {
        let resid = &self.avg_response - self.fitted_values();
        let lhs = (self.design.transpose() * resid).norm();
        (lhs, self.design.norm() * self.avg_response.norm())
    }

    /// The fitted polynomial as a [`Surface`].
    pub fn surface(&self) -> SeriesSurface {
        SeriesSurface {
            spec: self.spec.clone(),
            coeffs: self.beta_hat.clone(),
        }
    }
}

/// Pooled sieve least squares `beta_hat = (Psi'Psi)^{-1} Psi' Y_bar` via QR.
pub fn fit(data: &ExperimentData, spec: &BasisSpec) -> Result<FittedSieve> {
    check_dim(data, spec)?;
    let psi = design_matrix(spec, data.stimuli())?;
    fit_with_design(data.responses(), data.stimuli(), spec, psi)
}

fn check_dim(data: &ExperimentData, spec: &BasisSpec) -> Result<()> {
    if spec.dim() != data.dim() {
        return Err(SieveError::DimensionMismatch {
            expected: spec.dim(),
            found: data.dim(),
        });
    }
    Ok(())
}

pub(crate) fn fit_with_design(
    responses: &DMatrix<f64>,
    stimuli: &DMatrix<f64>,
    spec: &BasisSpec,
    psi: DMatrix<f64>,
) -> Result<FittedSieve> {
    let factored = Factored::new(&psi)?;
    let avg = column_means(responses);
    let beta_hat = factored.solve_vec(&avg);
    let fitted = &psi * &beta_hat;
    let mut residuals = responses.clone();
    for mut row in residuals.row_iter_mut() {
        for (v, f) in row.iter_mut().zip(fitted.iter()) {
            *v -= f;
        }
    }
    Ok(FittedSieve {
        spec: spec.clone(),
        beta_hat,
        stimuli: stimuli.clone(),
        avg_response: avg,
        residuals,
        gram_lambda_min: factored.lambda_min,
        gram_lambda_max: factored.lambda_max,
        n: responses.nrows(),
        tasks: responses.ncols(),
        design: psi,
    })
}

/// A function on the stimulus box with partial derivatives.
pub trait Surface: Sync {
    fn eval(&self, x: &[f64]) -> f64;

    /// `d^lambda f(x)`. The default uses nested central differences.
    fn partial(&self, multi_index: &[usize], x: &[f64]) -> f64 {
        finite_difference(&|y: &[f64]| self.eval(y), multi_index, x)
    }
}

impl<F> Surface for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

fn finite_difference(f: &dyn Fn(&[f64]) -> f64, multi_index: &[usize], x: &[f64]) -> f64 {
    let Some(k) = multi_index.iter().position(|&m| m > 0) else {
        return f(x);
    };
    let mut rest = multi_index.to_vec();
    rest[k] -= 1;
    let h = 1e-4 * (1.0 + x[k].abs());
    let shifted = |delta: f64| {
        let mut y = x.to_vec();
        y[k] += delta;
        finite_difference(f, &rest, &y)
    };
    (shifted(h) - shifted(-h)) / (2.0 * h)
}

/// `psi(x) coeffs` with exact derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSurface {
    pub spec: BasisSpec,
    pub coeffs: DVector<f64>,
}

impl Surface for SeriesSurface {
    fn eval(&self, x: &[f64]) -> f64 {
        let row = basis_row(&self.spec, x).expect("point inside the series domain");
        row.iter().zip(self.coeffs.iter()).map(|(a, b)| a * b).sum()
    }

    fn partial(&self, multi_index: &[usize], x: &[f64]) -> f64 {
        let op = derivative_operator(&self.spec, multi_index).expect("multi-index matches dimension");
        let row = derivative_row(&self.spec, &op, x).expect("point inside the series domain");
        row.iter().zip(self.coeffs.iter()).map(|(a, b)| a * b).sum()
    }
}

/// Grid approximation of `max_{|lambda| <= s} sup_x |d^lambda (f_hat - f)(x)|`.
pub fn sup_error(
    fit: &FittedSieve,
    f_true: &dyn Surface,
    s: usize,
    grid_resolution: usize,
) -> Result<f64> {
    let ops = multi_indices_up_to(fit.spec.dim(), s)
        .into_iter()
        .map(|lambda| derivative_operator(&fit.spec, &lambda))
        .collect::<Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    for x in domain_grid(&fit.spec, grid_resolution) {
        for op in &ops {
            let row = derivative_row(&fit.spec, op, &x)?;
            let fhat: f64 = row.iter().zip(fit.beta_hat.iter()).map(|(a, b)| a * b).sum();
            worst = worst.max((fhat - f_true.partial(&op.multi_index, &x)).abs());
        }
    }
    Ok(worst)
}

/// Coefficient blocks of `f(x, z) = f0(x) + z' f1(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VaryingCoefficients {
    pub f0_beta: DVector<f64>,
    /// `q x P`, row `j` holds the coefficients of the `j`-th covariate's function.
    pub f1_betas: DMatrix<f64>,
}

/// Joint least squares of `Y_it` on `(1, Z_i) kron psi(X_t)`.
///
/// The normal equations factor as `Psi'Psi B M = Psi' Y' Z~ / n`, with
/// `M = Z~'Z~ / n`, so only a `T x P` QR and a small `(q+1)` solve are needed.
pub fn fit_varying_coefficients(
    data: &ExperimentData,
    spec: &BasisSpec,
) -> Result<VaryingCoefficients> {
    check_dim(data, spec)?;
    let n = data.n();
    let q = data.covariates().map_or(0, |z| z.ncols());
    let mut ztilde = DMatrix::from_element(n, q + 1, 1.0);
    if let Some(z) = data.covariates() {
        ztilde.columns_mut(1, q).copy_from(z);
    }
    let m = ztilde.transpose() * &ztilde / n as f64;
    let (mmin, mmax) = extreme_eigenvalues(&m);
    if !(mmin > RANK_TOL * mmax) {
        return Err(SieveError::Identification(format!(
            "sample second moment of (1, Z) is rank deficient (lambda_min = {mmin:e})"
        )));
    }
    let psi = design_matrix(spec, data.stimuli())?;
    let factored = Factored::new(&psi)?;
    let rhs = data.responses().transpose() * &ztilde / n as f64;
    let c = factored.solve(&rhs);
    let blocks = if q == 0 {
        c
    } else {
        let chol = m
            .clone()
            .cholesky()
            .ok_or_else(|| SieveError::Identification("(1, Z) moment is not positive definite".into()))?;
        // B = C M^{-1}  <=>  M B' = C'
        chol.solve(&c.transpose()).transpose()
    };
    Ok(VaryingCoefficients {
        f0_beta: blocks.column(0).into_owned(),
        f1_betas: blocks.columns(1, q).transpose(),
    })
}

/// Leave-one-task-out CV of the averaged response via the hat-matrix identity.
pub fn loo_cv_score(data: &ExperimentData, spec: &BasisSpec) -> Result<f64> {
    check_dim(data, spec)?;
    let psi = design_matrix(spec, data.stimuli())?;
    let (t, p) = psi.shape();
    if t < p + 1 {
        return Err(SieveError::Underdetermined { tasks: t, params: p + 1 });
    }
    let factored = Factored::new(&psi)?;
    let avg = average_responses(data);
    let beta = factored.solve_vec(&avg);
    let resid = &avg - &psi * beta;
    let mut total = 0.0;
    for (task, (e, h)) in resid.iter().zip(factored.leverages()).enumerate() {
        if h >= 1.0 - LEVERAGE_TOL {
            return Err(SieveError::Leverage { task, leverage: h });
        }
        total += (e / (1.0 - h)).powi(2);
    }
    Ok(total / t as f64)
}

/// Outcome of [`select_order`].
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub spec: BasisSpec,
    /// CV score per candidate; `None` where the candidate failed its preconditions.
    pub scores: Vec<Option<f64>>,
}

/// Candidate with the smallest LOO score; ties go to the smaller `P`, then to list order.
pub fn select_order(data: &ExperimentData, candidates: &[BasisSpec]) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(SieveError::InvalidArgument("no candidate bases".into()));
    }
    let scores: Vec<Option<f64>> = candidates
        .iter()
        .map(|spec| loo_cv_score(data, spec).ok())
        .collect();
    let best = scores
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(SieveError::SelectionFailed);
    }
    // scores equal up to rounding count as ties; the floor is set by the data scale
    let avg = average_responses(data);
    let floor = 1e-24 * avg.norm_squared() / avg.len() as f64;
    let tie = best * (1.0 + 1e-12) + floor;
    let index = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, Some(v) if *v <= tie))
        .min_by_key(|(i, _)| (candidates[*i].len(), *i))
        .map(|(i, _)| i)
        .expect("at least one finite score");
    Ok(Selection {
        index,
        spec: candidates[index].clone(),
        scores,
    })
}
