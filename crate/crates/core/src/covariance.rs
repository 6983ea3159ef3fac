//! Average error covariance: plug-in estimate, spectral summaries and the
//! variance-function regression for heteroskedastic designs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{design_matrix, domain_grid, BasisSpec};
use crate::error::{Result, SieveError};
use crate::estimator::{fit_with_design, FittedSieve};
use crate::linalg::{asymmetry, extreme_eigenvalues, symmetrize};

/// Largest tolerated `|M - M'|` entry for inputs declared symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues down to `-PSD_TOL * lambda_max` count as round-off.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    PlugIn,
    Known,
    VarianceFunction,
}

impl std::fmt::Display for CovarianceSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CovarianceSource::PlugIn => "plug_in",
            CovarianceSource::Known => "known",
            CovarianceSource::VarianceFunction => "variance_function",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub trace: f64,
}

/// `T x T` covariance with its spectral summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub source: CovarianceSource,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub trace: f64,
}

impl CovarianceEstimate {
    fn from_symmetric(matrix: DMatrix<f64>, source: CovarianceSource) -> Result<Self> {
        let s = eigen_summary(&matrix)?;
        let matrix = symmetrize(&matrix);
        Ok(CovarianceEstimate {
            matrix,
            source,
            lambda_max: s.lambda_max,
            lambda_min: s.lambda_min,
            trace: s.trace,
        })
    }

    /// Wrap a user-supplied `Sigma_bar`, checking symmetry and semi-definiteness.
    pub fn known(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(SieveError::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(SieveError::NonFinite("covariance matrix".into()));
        }
        let est = Self::from_symmetric(matrix, CovarianceSource::Known)?;
        if est.lambda_min < -PSD_TOL * est.lambda_max.abs().max(f64::MIN_POSITIVE) {
            return Err(SieveError::NotPsd(est.lambda_min));
        }
        Ok(est)
    }

    /// Add `eps * I`. Meant for exploring `n < T`, not for reported tests.
    pub fn with_ridge(&self, eps: f64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(SieveError::InvalidArgument(format!(
                "ridge loading must be a nonnegative number, got {eps}"
            )));
        }
        let t = self.matrix.nrows();
        let loaded = &self.matrix + DMatrix::identity(t, t) * eps;
        Self::from_symmetric(loaded, self.source)
    }

    pub fn summary(&self) -> EigenSummary {
        EigenSummary {
            lambda_max: self.lambda_max,
            lambda_min: self.lambda_min,
            trace: self.trace,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `Sigma_bar_hat = (1/n) sum_i U_i U_i'` from an `n x T` residual panel.
pub fn sample_avg_covariance(residuals: &DMatrix<f64>) -> Result<CovarianceEstimate> {
    let n = residuals.nrows();
    if n == 0 {
        return Err(SieveError::InvalidArgument("no residual rows".into()));
    }
    let m = residuals.transpose() * residuals / n as f64;
    CovarianceEstimate::from_symmetric(symmetrize(&m), CovarianceSource::PlugIn)
}

/// Extreme eigenvalues and trace of a symmetric matrix.
pub fn eigen_summary(matrix: &DMatrix<f64>) -> Result<EigenSummary> {
    if !matrix.is_square() || matrix.is_empty() {
        return Err(SieveError::InvalidArgument(
            "eigen_summary needs a nonempty square matrix".into(),
        ));
    }
    let asym = asymmetry(matrix);
    if asym > SYMMETRY_TOL {
        return Err(SieveError::Asymmetric(asym));
    }
    let (lambda_min, lambda_max) = extreme_eigenvalues(&symmetrize(matrix));
    Ok(EigenSummary {
        lambda_max,
        lambda_min,
        trace: matrix.trace(),
    })
}

/// Sieve regression of the squared residuals on the stimuli.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceFunctionFit {
    pub fit: FittedSieve,
    /// Smallest `h_hat` on the diagnostic grid.
    pub grid_min: f64,
    pub warnings: Vec<String>,
}

impl VarianceFunctionFit {
    /// `h_hat(X_t)` per task.
    pub fn task_variances(&self) -> DVector<f64> {
        self.fit.fitted_values()
    }

    /// Diagonal `Sigma_bar` from `h_hat(X_t)`, negative values clipped to zero.
    pub fn diagonal_covariance(&self) -> Result<CovarianceEstimate> {
        let h = self.task_variances().map(|v| v.max(0.0));
        CovarianceEstimate::from_symmetric(
            DMatrix::from_diagonal(&h),
            CovarianceSource::VarianceFunction,
        )
    }
}

const VARIANCE_GRID: usize = 41;

/// Fit `U_it^2 = h(X_t) + nu_it` with the basis `vspec`.
pub fn variance_function_fit(fit: &FittedSieve, vspec: &BasisSpec) -> Result<VarianceFunctionFit> {
    let squared = fit.residuals.map(|u| u * u);
    let psi = design_matrix(vspec, &fit.stimuli)?;
    let hfit = fit_with_design(&squared, &fit.stimuli, vspec, psi)?;
    let res = if vspec.dim() <= 2 { VARIANCE_GRID } else { 9 };
    let mut grid_min = f64::INFINITY;
    for x in domain_grid(vspec, res) {
        grid_min = grid_min.min(hfit.predict(&x)?);
    }
    let mut warnings = Vec::new();
    if grid_min < 0.0 {
        warnings.push(format!(
            "fitted variance function is negative on the diagnostic grid (min {grid_min:.3e})"
        ));
    }
    Ok(VarianceFunctionFit {
        fit: hfit,
        grid_min,
        warnings,
    })
}

/// `max_t (1/n) sum_i U_it^2`.
pub fn diagonal_sigma_summary(residuals: &DMatrix<f64>) -> f64 {
    let n = residuals.nrows().max(1) as f64;
    residuals
        .column_iter()
        .map(|c| c.norm_squared() / n)
        .fold(0.0, f64::max)
}
