//! Data-generating processes and seeded Monte Carlo studies.
//!
//! Replication `r` of cell `c` draws from ChaCha8 stream `(c << 32) | r` of
//! the master seed, so results do not depend on evaluation order or on the
//! number of worker threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::basis::{design_matrix, BasisSpec};
use crate::covariance::{sample_avg_covariance, CovarianceEstimate};
use crate::design::DesignSet;
use crate::error::{Result, SieveError};
use crate::estimator::{fit, sup_error, ExperimentData, Factored, SeriesSurface, Surface};
use crate::inference::{ConstraintSpec, WaldPlan, WaldReport};
use crate::special::{chi2_cdf, normal_cdf};

/// Analytic test functions with geometric Legendre coefficient decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothPreset {
    /// `exp(x)`
    Exp1d,
    /// `exp(x1 - x2)`
    ExpDiff2d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truth {
    /// `kappa (x1 - x2) + distortion (x1 - x2)^3`; the log-ratio form of a power law.
    StevensLinear {
        kappa: f64,
        #[serde(default)]
        distortion: f64,
    },
    /// `psi(x) coeffs` in the given basis.
    Polynomial { spec: BasisSpec, coeffs: Vec<f64> },
    AnalyticSmooth { preset: SmoothPreset },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorModel {
    Iid {
        sigma2: f64,
    },
    /// `sigma2 (1 + gradient * mean_k u_k^2)` with `u` the point mapped to `[-1, 1]^d`.
    DiagonalHetero {
        sigma2: f64,
        gradient: f64,
    },
    /// `eps_it = nu_i + u_it`.
    Factor {
        sigma2_nu: f64,
        sigma2_u: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    #[default]
    Gaussian,
    /// Uniform on `[-sqrt 3, sqrt 3]`, unit variance.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub truth: Truth,
    pub errors: ErrorModel,
    #[serde(default)]
    pub noise: Noise,
    pub domain: Vec<(f64, f64)>,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        let valid = match self.errors {
            ErrorModel::Iid { sigma2 } => ok(sigma2),
            ErrorModel::DiagonalHetero { sigma2, gradient } => ok(sigma2) && ok(gradient),
            ErrorModel::Factor { sigma2_nu, sigma2_u } => ok(sigma2_nu) && ok(sigma2_u),
        };
        if !valid {
            return Err(SieveError::InvalidArgument(
                "error variances must be finite and nonnegative".into(),
            ));
        }
        let d = self.domain.len();
        let needed = match &self.truth {
            Truth::StevensLinear { .. } | Truth::AnalyticSmooth { preset: SmoothPreset::ExpDiff2d } => 2,
            Truth::AnalyticSmooth { preset: SmoothPreset::Exp1d } => 1,
            Truth::Polynomial { spec, coeffs } => {
                if coeffs.len() != spec.len() {
                    return Err(SieveError::DimensionMismatch {
                        expected: spec.len(),
                        found: coeffs.len(),
                    });
                }
                spec.dim()
            }
        };
        if d != needed {
            return Err(SieveError::DimensionMismatch {
                expected: needed,
                found: d,
            });
        }
        Ok(())
    }

    /// The regression function as a [`Surface`].
    pub fn surface(&self) -> TruthSurface {
        TruthSurface(self.truth.clone())
    }

    fn task_variance(&self, x: &[f64]) -> f64 {
        match self.errors {
            ErrorModel::Iid { sigma2 } => sigma2,
            ErrorModel::DiagonalHetero { sigma2, gradient } => {
                let u2: f64 = x
                    .iter()
                    .zip(&self.domain)
                    .map(|(&v, &(a, b))| {
                        let u = (2.0 * v - a - b) / (b - a);
                        u * u
                    })
                    .sum::<f64>()
                    / x.len() as f64;
                sigma2 * (1.0 + gradient * u2)
            }
            ErrorModel::Factor { sigma2_nu, sigma2_u } => sigma2_nu + sigma2_u,
        }
    }

    /// The per-subject covariance, which is also the average `Sigma_bar`.
    pub fn sigma_bar(&self, design: &DesignSet) -> Result<CovarianceEstimate> {
        let t = design.len();
        let m = match self.errors {
            ErrorModel::Factor { sigma2_nu, sigma2_u } => {
                DMatrix::from_element(t, t, sigma2_nu) + DMatrix::identity(t, t) * sigma2_u
            }
            _ => DMatrix::from_fn(t, t, |i, j| {
                if i == j {
                    self.task_variance(&design.point(i))
                } else {
                    0.0
                }
            }),
        };
        CovarianceEstimate::known(m)
    }
}

/// Regression function with analytic partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSurface(pub Truth);

impl Surface for TruthSurface {
    fn eval(&self, x: &[f64]) -> f64 {
        self.partial(&vec![0; x.len()], x)
    }

    fn partial(&self, lambda: &[usize], x: &[f64]) -> f64 {
        match &self.0 {
            Truth::StevensLinear { kappa, distortion } => {
                let z = x[0] - x[1];
                let sign = if lambda[1] % 2 == 1 { -1.0 } else { 1.0 };
                let order = lambda[0] + lambda[1];
                let dz = match order {
                    0 => kappa * z + distortion * z.powi(3),
                    1 => kappa + 3.0 * distortion * z * z,
                    2 => 6.0 * distortion * z,
                    3 => 6.0 * distortion,
                    _ => 0.0,
                };
                sign * dz
            }
            Truth::Polynomial { spec, coeffs } => SeriesSurface {
                spec: spec.clone(),
                coeffs: DVector::from_column_slice(coeffs),
            }
            .partial(lambda, x),
            Truth::AnalyticSmooth { preset: SmoothPreset::Exp1d } => x[0].exp(),
            Truth::AnalyticSmooth { preset: SmoothPreset::ExpDiff2d } => {
                let sign = if lambda[1] % 2 == 1 { -1.0 } else { 1.0 };
                sign * (x[0] - x[1]).exp()
            }
        }
    }
}

/// RNG for replication `rep` of cell `cell`.
pub fn replication_rng(master_seed: u64, cell: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((cell as u64) << 32) | rep as u64);
    rng
}

fn draw(noise: Noise, rng: &mut ChaCha8Rng) -> f64 {
    match noise {
        Noise::Gaussian => StandardNormal.sample(rng),
        Noise::Uniform => rng.random_range(-3f64.sqrt()..3f64.sqrt()),
    }
}

/// `Y_it = f(X_t) + eps_it`, subjects independent.
pub fn gen_panel(dgp: &DgpSpec, design: &DesignSet, n: usize, seed: u64) -> Result<ExperimentData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_panel_with(dgp, design, n, &mut rng)
}

pub fn gen_panel_with(
    dgp: &DgpSpec,
    design: &DesignSet,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ExperimentData> {
    dgp.validate()?;
    if n == 0 {
        return Err(SieveError::InvalidArgument("n must be at least 1".into()));
    }
    if design.dim() != dgp.domain.len() {
        return Err(SieveError::DimensionMismatch {
            expected: dgp.domain.len(),
            found: design.dim(),
        });
    }
    let t = design.len();
    let surface = dgp.surface();
    let points: Vec<Vec<f64>> = (0..t).map(|j| design.point(j)).collect();
    let mean: Vec<f64> = points.iter().map(|x| surface.eval(x)).collect();
    let sd: Vec<f64> = points.iter().map(|x| dgp.task_variance(x).sqrt()).collect();
    let mut y = DMatrix::zeros(n, t);
    for i in 0..n {
        match dgp.errors {
            ErrorModel::Factor { sigma2_nu, sigma2_u } => {
                let nu = sigma2_nu.sqrt() * draw(dgp.noise, rng);
                let su = sigma2_u.sqrt();
                for j in 0..t {
                    y[(i, j)] = mean[j] + nu + su * draw(dgp.noise, rng);
                }
            }
            _ => {
                for j in 0..t {
                    y[(i, j)] = mean[j] + sd[j] * draw(dgp.noise, rng);
                }
            }
        }
    }
    ExperimentData::new(y, design.points.clone(), dgp.domain.clone())
}

/// `(Psi'Psi)^{-1} Psi' f(X)`, the mean of `beta_hat` under the DGP.
pub fn population_beta(dgp: &DgpSpec, spec: &BasisSpec, design: &DesignSet) -> Result<DVector<f64>> {
    let psi = design_matrix(spec, &design.points)?;
    let surface = dgp.surface();
    let f = DVector::from_iterator(design.len(), (0..design.len()).map(|t| surface.eval(&design.point(t))));
    Ok(Factored::new(&psi)?.solve_vec(&f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeAxis {
    /// against `ln n`
    N,
    /// against `ln (n T)`
    NT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub axis: SlopeAxis,
    pub slope: f64,
    /// Absent with only two cells.
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub n: usize,
    pub tasks: usize,
    pub params: usize,
    pub reps: usize,
    pub failures: usize,
    pub master_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub median_sup_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rejection_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rejection_ci: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ks_chi2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ks_normal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub median_plugin_gap: Option<f64>,
}

impl CellSummary {
    fn new(cell: usize, n: usize, tasks: usize, params: usize, reps: usize, seed: u64) -> Self {
        CellSummary {
            cell,
            n,
            tasks,
            params,
            reps,
            failures: 0,
            master_seed: seed,
            median_sup_error: None,
            rejection_rate: None,
            rejection_ci: None,
            ks_chi2: None,
            ks_normal: None,
            median_plugin_gap: None,
        }
    }

    /// `(metric, value)` pairs present in this cell.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        let mut push = |name, v: Option<f64>| {
            if let Some(v) = v {
                out.push((name, v));
            }
        };
        push("median_sup_error", self.median_sup_error);
        push("rejection_rate", self.rejection_rate);
        push("rejection_ci_low", self.rejection_ci.map(|c| c.0));
        push("rejection_ci_high", self.rejection_ci.map(|c| c.1));
        push("ks_chi2", self.ks_chi2);
        push("ks_normal", self.ks_normal);
        push("median_plugin_gap", self.median_plugin_gap);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub kind: String,
    pub master_seed: u64,
    pub reps: usize,
    pub cells: Vec<CellSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub slope: Option<SlopeFit>,
}

/// One row of the long-format study table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TidyRow {
    pub cell: usize,
    pub n: usize,
    pub tasks: usize,
    pub params: usize,
    pub reps: usize,
    pub failures: usize,
    pub metric: &'static str,
    pub value: f64,
}

impl StudyResult {
    pub fn tidy_rows(&self) -> Vec<TidyRow> {
        self.cells
            .iter()
            .flat_map(|c| {
                c.metrics().into_iter().map(move |(metric, value)| TidyRow {
                    cell: c.cell,
                    n: c.n,
                    tasks: c.tasks,
                    params: c.params,
                    reps: c.reps,
                    failures: c.failures,
                    metric,
                    value,
                })
            })
            .collect()
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len();
    Some(if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    })
}

/// OLS slope of `y` on `x` and its conventional standard error (needs three points).
pub fn ols_slope(x: &[f64], y: &[f64]) -> Result<(f64, Option<f64>)> {
    let k = x.len();
    if k < 2 || y.len() != k {
        return Err(SieveError::InvalidArgument(
            "a slope needs at least two matched points".into(),
        ));
    }
    let mx = x.iter().sum::<f64>() / k as f64;
    let my = y.iter().sum::<f64>() / k as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(SieveError::InvalidArgument("slope needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let se = if k > 2 {
        let ssr: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
            .sum();
        Some((ssr / (k - 2) as f64 / sxx).sqrt())
    } else {
        None
    };
    Ok((slope, se))
}

/// One cell of a rate study.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCell {
    pub n: usize,
    pub design: DesignSet,
}

/// Median sup-norm error per cell and the log-log slope across cells.
pub fn convergence_study(
    dgp: &DgpSpec,
    spec: &BasisSpec,
    cells: &[RateCell],
    axis: SlopeAxis,
    reps: usize,
    master_seed: u64,
    grid_resolution: usize,
) -> Result<StudyResult> {
    dgp.validate()?;
    if reps == 0 {
        return Err(SieveError::InvalidArgument("reps must be at least 1".into()));
    }
    if cells.is_empty() {
        return Err(SieveError::InvalidArgument("study needs at least one cell".into()));
    }
    let truth = dgp.surface();
    let mut summaries = Vec::with_capacity(cells.len());
    for (c, cell) in cells.iter().enumerate() {
        let outcomes: Vec<Result<f64>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = replication_rng(master_seed, c, r);
                let data = gen_panel_with(dgp, &cell.design, cell.n, &mut rng)?;
                let fitted = fit(&data, spec)?;
                sup_error(&fitted, &truth, 0, grid_resolution)
            })
            .collect();
        let mut s = CellSummary::new(c, cell.n, cell.design.len(), spec.len(), reps, master_seed);
        let mut errs: Vec<f64> = outcomes.iter().filter_map(|o| o.as_ref().ok().copied()).collect();
        s.failures = reps - errs.len();
        s.median_sup_error = median(&mut errs);
        summaries.push(s);
    }
    let usable: Vec<(f64, f64)> = summaries
        .iter()
        .filter_map(|s| {
            let m = s.median_sup_error?;
            let x = match axis {
                SlopeAxis::N => s.n as f64,
                SlopeAxis::NT => (s.n * s.tasks) as f64,
            };
            Some((x.ln(), m))
        })
        .collect();
    let slope = if usable.len() >= 2 && usable.iter().any(|&(_, m)| m > 1e-10) && usable.iter().all(|&(_, m)| m > 0.0) {
        let xs: Vec<f64> = usable.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = usable.iter().map(|p| p.1.ln()).collect();
        let (slope, std_error) = ols_slope(&xs, &ys)?;
        Some(SlopeFit {
            axis,
            slope,
            std_error,
        })
    } else {
        None
    };
    Ok(StudyResult {
        kind: "convergence".into(),
        master_seed,
        reps,
        cells: summaries,
        slope,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    Known,
    #[serde(alias = "plugin")]
    PlugIn,
}

impl std::str::FromStr for SigmaMode {
    type Err = SieveError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "known" => Ok(SigmaMode::Known),
            "plugin" | "plug_in" => Ok(SigmaMode::PlugIn),
            other => Err(SieveError::InvalidArgument(format!(
                "sigma mode must be known or plugin, got {other:?}"
            ))),
        }
    }
}

/// Exact two-sided Clopper-Pearson interval for `k` successes in `m` trials.
pub fn clopper_pearson(k: usize, m: usize, confidence: f64) -> (f64, f64) {
    let alpha = 1.0 - confidence;
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(k as f64, (m - k + 1) as f64)
            .expect("positive shape parameters")
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if k == m {
        1.0
    } else {
        Beta::new((k + 1) as f64, (m - k) as f64)
            .expect("positive shape parameters")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// Reference law for [`distribution_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsReference {
    Chi2(usize),
    Normal,
}

/// Kolmogorov-Smirnov distance between a sample and a continuous reference.
pub fn distribution_distance(samples: &[f64], reference: KsReference) -> Result<f64> {
    let m = samples.len();
    if m < 100 {
        return Err(SieveError::InvalidArgument(format!(
            "KS distance needs at least 100 samples, got {m}"
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(SieveError::NonFinite("KS sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let cdf = |x: f64| match reference {
        KsReference::Chi2(r) => chi2_cdf(x, r),
        KsReference::Normal => normal_cdf(x),
    };
    let mf = m as f64;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / mf).abs().max(((i + 1) as f64 / mf - f).abs())
        })
        .fold(0.0, f64::max))
}

/// Inputs of a size or power study.
#[derive(Debug, Clone)]
pub struct WaldStudy<'a> {
    pub dgp: &'a DgpSpec,
    pub spec: &'a BasisSpec,
    pub constraint: &'a ConstraintSpec,
    pub design: &'a DesignSet,
    pub ns: &'a [usize],
    pub reps: usize,
    pub level: f64,
    pub sigma_mode: SigmaMode,
    pub master_seed: u64,
}

/// Per-replication Wald statistics of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct WaldDraws {
    pub reports: Vec<WaldReport>,
    /// `|W*_hat - W*|` per replication when the plug-in covariance is used.
    pub plugin_gaps: Vec<f64>,
    pub failures: usize,
}

/// Raw statistics for cell `cell` with `n` subjects.
pub fn wald_draws(study: &WaldStudy<'_>, cell: usize, n: usize) -> Result<WaldDraws> {
    let psi = design_matrix(study.spec, &study.design.points)?;
    let sigma_true = study.dgp.sigma_bar(study.design)?;
    let known_plan = WaldPlan::new(&psi, study.constraint, &sigma_true, n)?;
    let outcomes: Vec<Result<(WaldReport, Option<f64>)>> = (0..study.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = replication_rng(study.master_seed, cell, r);
            let data = gen_panel_with(study.dgp, study.design, n, &mut rng)?;
            let fitted = fit(&data, study.spec)?;
            let known = known_plan.report(&fitted.beta_hat);
            match study.sigma_mode {
                SigmaMode::Known => Ok((known, None)),
                SigmaMode::PlugIn => {
                    let sigma_hat = sample_avg_covariance(&fitted.residuals)?;
                    let plan = WaldPlan::new(&psi, study.constraint, &sigma_hat, n)?;
                    let rep = plan.report(&fitted.beta_hat);
                    let gap = (rep.w_star - known.w_star).abs();
                    Ok((rep, Some(gap)))
                }
            }
        })
        .collect();
    let mut reports = Vec::with_capacity(study.reps);
    let mut plugin_gaps = Vec::new();
    let mut failures = 0;
    for o in outcomes {
        match o {
            Ok((rep, gap)) => {
                reports.push(rep);
                plugin_gaps.extend(gap);
            }
            Err(_) => failures += 1,
        }
    }
    Ok(WaldDraws {
        reports,
        plugin_gaps,
        failures,
    })
}

/// Rejection frequency at `level` with a 95% exact interval, KS distances and plug-in gaps, per `n`.
pub fn size_power_study(study: &WaldStudy<'_>) -> Result<StudyResult> {
    study.dgp.validate()?;
    if study.reps == 0 {
        return Err(SieveError::InvalidArgument("reps must be at least 1".into()));
    }
    if !(study.level > 0.0 && study.level <= 1.0) {
        return Err(SieveError::InvalidArgument(format!(
            "level must lie in (0, 1], got {}",
            study.level
        )));
    }
    if study.ns.is_empty() {
        return Err(SieveError::InvalidArgument("study needs at least one n".into()));
    }
    let mut cells = Vec::with_capacity(study.ns.len());
    for (c, &n) in study.ns.iter().enumerate() {
        let draws = wald_draws(study, c, n)?;
        let mut s = CellSummary::new(c, n, study.design.len(), study.spec.len(), study.reps, study.master_seed);
        s.failures = draws.failures;
        let m = draws.reports.len();
        if m > 0 {
            let k = draws
                .reports
                .iter()
                .filter(|r| r.primary_p() <= study.level)
                .count();
            s.rejection_rate = Some(k as f64 / m as f64);
            s.rejection_ci = Some(clopper_pearson(k, m, 0.95));
        }
        if m >= 100 {
            let r = study.constraint.effective_rank;
            let w: Vec<f64> = draws.reports.iter().map(|x| x.w_star).collect();
            let z: Vec<f64> = draws.reports.iter().map(|x| x.w_standardized).collect();
            s.ks_chi2 = Some(distribution_distance(&w, KsReference::Chi2(r))?);
            s.ks_normal = Some(distribution_distance(&z, KsReference::Normal)?);
        }
        let mut gaps = draws.plugin_gaps;
        s.median_plugin_gap = median(&mut gaps);
        cells.push(s);
    }
    Ok(StudyResult {
        kind: match study.sigma_mode {
            SigmaMode::Known => "wald_known".into(),
            SigmaMode::PlugIn => "wald_plug_in".into(),
        },
        master_seed: study.master_seed,
        reps: study.reps,
        cells,
        slope: None,
    })
}
