//! The six workflows. Each one resolves and validates its whole config first,
//! computes everything in memory, then commits its files in one step.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use sieve_core::basis::{domain_grid, BasisSpec, Family};
use sieve_core::covariance::{sample_avg_covariance, CovarianceEstimate, EigenSummary};
use sieve_core::design::{
    assumption2_report, grid_design, gram_deviation, halton_design, target_gram_uniform_legendre,
    Assumption2Report, DesignSet,
};
use sieve_core::estimator::{
    fit as fit_sieve, fit_varying_coefficients, loo_cv_score, select_order, ExperimentData, Surface,
};
use sieve_core::inference::{
    derivative_sum_constraint, linear_constraint, pointwise_constraint, stevens_constraint, wald,
    ConstraintSpec, WaldReport,
};
use sieve_core::simulate::{
    convergence_study, gen_panel, size_power_study, DgpSpec, ErrorModel, Noise, RateCell,
    SigmaMode, SlopeAxis, SmoothPreset, StudyResult, Truth, WaldStudy,
};

use crate::config::{
    load_file, parse_range, parse_usize_list, pick, require, resolve_basis,
    resolve_constraint, resolve_domain, BasisFlags, ConstraintFlags, ConstraintRecipe, DataConfig,
    FileConfig, GeneratorKind, StudyKind,
};
use crate::error::{CliError, CliResult};
use crate::output::{json, Outputs, Report, VERSION};
use crate::tables::{fmt_f64, load_experiment, read_restriction, read_sigma, render, responses_csv, stimuli_csv};
use crate::{CommonArgs, CvArgs, DataArgs, DesignArgs, FitArgs, GenerateArgs, SimulateArgs, TestArgs};

const TIE_BREAK: &str =
    "scores within a relative 1e-12 of the minimum tie; ties go to the candidate with fewer terms, then to the lower degree";

fn out_dir(common: &CommonArgs, file: &FileConfig) -> PathBuf {
    pick(common.out.clone(), file.out.as_ref()).unwrap_or_else(|| PathBuf::from("out"))
}

fn seed(common: &CommonArgs, file: &FileConfig) -> u64 {
    common.seed.or(file.seed).unwrap_or(0)
}

fn resolve_data(args: &DataArgs, file: &FileConfig) -> CliResult<DataConfig> {
    Ok(DataConfig {
        responses: require(pick(args.data.clone(), file.data.as_ref()), "responses file (--data)")?,
        stimuli: require(pick(args.stimuli.clone(), file.stimuli.as_ref()), "stimuli file (--stimuli)")?,
        covariates: pick(args.covariates.clone(), file.covariates.as_ref()),
    })
}

fn load(data: &DataConfig, domain: &[(f64, f64)]) -> CliResult<ExperimentData> {
    load_experiment(&data.responses, &data.stimuli, data.covariates.as_deref(), domain)
}

fn check_identified(data: &ExperimentData, spec: &BasisSpec) -> CliResult<()> {
    if data.tasks() < spec.len() {
        return Err(sieve_core::SieveError::Underdetermined {
            tasks: data.tasks(),
            params: spec.len(),
        }
        .into());
    }
    Ok(())
}

fn default_resolution(dim: usize) -> usize {
    match dim {
        1 => 101,
        2 => 41,
        _ => 9,
    }
}

fn column(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn design_from(kind: GeneratorKind, tasks: Option<usize>, counts: Option<&Vec<usize>>, domain: &[(f64, f64)]) -> CliResult<DesignSet> {
    match kind {
        GeneratorKind::Halton => {
            let t = require(tasks, "number of Halton tasks (--tasks)")?;
            Ok(halton_design(t, domain)?)
        }
        GeneratorKind::Grid => {
            let c = require(counts, "grid counts (--counts)")?;
            if c.len() != domain.len() {
                return Err(CliError::usage(format!(
                    "{} grid counts for a {}-axis domain",
                    c.len(),
                    domain.len()
                )));
            }
            Ok(grid_design(c, domain)?)
        }
    }
}

fn task_ids(t: usize) -> Vec<String> {
    (1..=t).map(|j| format!("t{j}")).collect()
}

fn build_constraint(
    recipe: &ConstraintRecipe,
    spec: &BasisSpec,
    truth: Option<&dyn Surface>,
) -> CliResult<ConstraintSpec> {
    match recipe {
        ConstraintRecipe::Point { points, values } => {
            for p in points {
                if p.len() != spec.dim() {
                    return Err(CliError::usage(format!(
                        "constraint point {p:?} has {} coordinates, the basis has {} axes",
                        p.len(),
                        spec.dim()
                    )));
                }
            }
            let values = match (values, truth) {
                (Some(v), _) => v.clone(),
                (None, Some(f)) => points.iter().map(|p| f.eval(p)).collect(),
                (None, None) => return Err(CliError::usage("point restriction needs --values")),
            };
            Ok(pointwise_constraint(spec, points, &values)?)
        }
        ConstraintRecipe::DerivativeSum => Ok(derivative_sum_constraint(spec)?),
        ConstraintRecipe::Stevens => Ok(stevens_constraint(spec)?),
        ConstraintRecipe::MatrixFile { path } => {
            let (m, g) = read_restriction(path, spec.len())?;
            Ok(linear_constraint(m, g)?)
        }
    }
}

#[derive(Debug, Serialize)]
struct SurfaceConfig {
    resolution: usize,
    derivatives: Vec<Vec<usize>>,
}

#[derive(Debug, Serialize)]
struct FitConfig {
    data: DataConfig,
    basis: BasisSpec,
    surface: SurfaceConfig,
}

#[derive(Debug, Serialize)]
struct NormalEquations {
    norm: f64,
    scale: f64,
}

#[derive(Debug, Serialize)]
struct VaryingReport {
    f0: Vec<f64>,
    /// One row per covariate.
    f1: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct FitBody {
    params: usize,
    n: usize,
    tasks: usize,
    multi_indices: Vec<Vec<usize>>,
    beta_hat: Vec<f64>,
    gram: Assumption2Report,
    normal_equations: NormalEquations,
    sigma_hat: EigenSummary,
    /// Absent when the candidate cannot be cross-validated (for example `T = P`).
    #[serde(skip_serializing_if = "Option::is_none")]
    cv_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cv_note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    varying_coefficients: Option<VaryingReport>,
}

pub fn fit(args: &FitArgs) -> CliResult<Vec<PathBuf>> {
    let file = load_file(args.common.config.as_deref())?;
    let data_cfg = resolve_data(&args.data, &file)?;
    let spec = resolve_basis(&args.basis.flags(), &file.basis)?;
    let derivatives = if args.derivatives.is_empty() {
        file.surface.derivatives.clone().unwrap_or_default()
    } else {
        args.derivatives
            .iter()
            .map(|s| parse_usize_list(s, "--derivative"))
            .collect::<CliResult<_>>()?
    };
    for lam in &derivatives {
        if lam.len() != spec.dim() {
            return Err(CliError::usage(format!(
                "derivative {lam:?} needs {} entries",
                spec.dim()
            )));
        }
    }
    let resolution = pick(args.resolution, file.surface.resolution.as_ref())
        .unwrap_or_else(|| default_resolution(spec.dim()));
    if resolution < 2 {
        return Err(CliError::usage("surface resolution must be at least 2"));
    }
    let config = FitConfig {
        data: data_cfg,
        basis: spec.clone(),
        surface: SurfaceConfig {
            resolution,
            derivatives: derivatives.clone(),
        },
    };
    let out = out_dir(&args.common, &file);

    let data = load(&config.data, spec.domain())?;
    check_identified(&data, &spec)?;
    let fitted = fit_sieve(&data, &spec)?;
    let gram = assumption2_report(&fitted.design)?;
    let (norm, scale) = fitted.normal_equation_residual();
    let sigma_hat = sample_avg_covariance(&fitted.residuals)?.summary();
    let (cv_score, cv_note) = match loo_cv_score(&data, &spec) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let varying = match data.covariates() {
        Some(_) => {
            let vc = fit_varying_coefficients(&data, &spec)?;
            Some(VaryingReport {
                f0: column(&vc.f0_beta),
                f1: rows_of(&vc.f1_betas),
            })
        }
        None => None,
    };

    let mut header: Vec<String> = (1..=spec.dim()).map(|k| format!("x{k}")).collect();
    header.push("fhat".into());
    for lam in &derivatives {
        header.push(format!(
            "d{}",
            lam.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("_")
        ));
    }
    let mut rows = Vec::new();
    for x in domain_grid(&spec, resolution) {
        let mut r: Vec<String> = x.iter().map(|&v| fmt_f64(v)).collect();
        r.push(fmt_f64(fitted.predict(&x)?));
        for lam in &derivatives {
            r.push(fmt_f64(fitted.predict_derivative(lam, &x)?));
        }
        rows.push(r);
    }

    let body = FitBody {
        params: fitted.params(),
        n: fitted.n,
        tasks: fitted.tasks,
        multi_indices: spec.multi_indices().to_vec(),
        beta_hat: column(&fitted.beta_hat),
        gram,
        normal_equations: NormalEquations { norm, scale },
        sigma_hat,
        cv_score,
        cv_note,
        varying_coefficients: varying,
    };
    let mut outputs = Outputs::default();
    outputs.add(
        "report.json",
        json(&Report {
            version: VERSION,
            command: "fit",
            config: &config,
            body,
        })?,
    );
    outputs.add("surface.csv", render(&header, &rows));
    outputs.commit(&out)
}

#[derive(Debug, Serialize)]
struct SigmaConfig {
    mode: SigmaMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct TestConfig {
    data: DataConfig,
    basis: BasisSpec,
    constraint: ConstraintRecipe,
    sigma: SigmaConfig,
}

#[derive(Debug, Serialize)]
struct RestrictionSummary {
    original_rows: usize,
    effective_rank: usize,
}

#[derive(Debug, Serialize)]
struct TestBody {
    params: usize,
    n: usize,
    tasks: usize,
    beta_hat: Vec<f64>,
    restriction: RestrictionSummary,
    wald: WaldReport,
}

fn resolve_sigma(args: &TestArgs, file: &FileConfig) -> CliResult<SigmaConfig> {
    let mode = match &args.sigma {
        Some(s) => s.parse::<SigmaMode>()?,
        None => file.sigma.mode.unwrap_or(SigmaMode::PlugIn),
    };
    let path = pick(args.sigma_file.clone(), file.sigma.path.as_ref());
    match mode {
        SigmaMode::Known if path.is_none() => Err(CliError::usage(
            "--sigma known needs the covariance file (--sigma-file)",
        )),
        SigmaMode::PlugIn if path.is_some() => Err(CliError::usage(
            "--sigma-file is only used with --sigma known",
        )),
        _ => Ok(SigmaConfig { mode, path }),
    }
}

pub fn test(args: &TestArgs) -> CliResult<Vec<PathBuf>> {
    let file = load_file(args.common.config.as_deref())?;
    let config = TestConfig {
        data: resolve_data(&args.data, &file)?,
        basis: resolve_basis(&args.basis.flags(), &file.basis)?,
        constraint: resolve_constraint(&args.constraint_flags(), file.constraint.as_ref())?,
        sigma: resolve_sigma(args, &file)?,
    };
    if let ConstraintRecipe::Point { values: None, .. } = config.constraint {
        return Err(CliError::usage("point restriction needs --values"));
    }
    let out = out_dir(&args.common, &file);
    let spec = &config.basis;

    let data = load(&config.data, spec.domain())?;
    check_identified(&data, spec)?;
    let constraint = build_constraint(&config.constraint, spec, None)?;
    let known = match &config.sigma.path {
        Some(path) => {
            let m = read_sigma(path, data.task_ids())?;
            Some(CovarianceEstimate::known(m).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let fitted = fit_sieve(&data, spec)?;
    let sigma = match known {
        Some(s) => s,
        None => sample_avg_covariance(&fitted.residuals)?,
    };
    let report = wald(&fitted, &constraint, &sigma)?;
    let body = TestBody {
        params: fitted.params(),
        n: fitted.n,
        tasks: fitted.tasks,
        beta_hat: column(&fitted.beta_hat),
        restriction: RestrictionSummary {
            original_rows: constraint.original_rows,
            effective_rank: constraint.effective_rank,
        },
        wald: report,
    };
    let mut outputs = Outputs::default();
    outputs.add(
        "report.json",
        json(&Report {
            version: VERSION,
            command: "test",
            config: &config,
            body,
        })?,
    );
    outputs.commit(&out)
}

#[derive(Debug, Serialize)]
struct CvConfig {
    data: DataConfig,
    family: Family,
    domain: Vec<(f64, f64)>,
    degrees: (usize, usize),
    total: bool,
}

#[derive(Debug, Serialize)]
struct Candidate {
    orders: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    total_degree: Option<usize>,
    params: usize,
    loo_cv_score: Option<f64>,
    selected: bool,
}

#[derive(Debug, Serialize)]
struct CvBody {
    candidates: Vec<Candidate>,
    selected: usize,
    tie_break: &'static str,
}

pub fn cv(args: &CvArgs) -> CliResult<Vec<PathBuf>> {
    let file = load_file(args.common.config.as_deref())?;
    let data_cfg = resolve_data(&args.data, &file)?;
    let family = match &args.basis {
        Some(s) => s.parse::<Family>()?,
        None => file.basis.family.unwrap_or(Family::Legendre),
    };
    let degrees = match &args.degrees {
        Some(s) => parse_range(s)?,
        None => require(file.cv.degrees, "candidate degrees (--degrees lo..hi)")?,
    };
    if degrees.0 > degrees.1 {
        return Err(CliError::usage(format!(
            "empty degree range {}..{}",
            degrees.0, degrees.1
        )));
    }
    let total = args.total || file.cv.total.unwrap_or(false);
    let dim = crate::tables::read_stimuli(&data_cfg.stimuli)?.points.ncols();
    let domain = resolve_domain(args.domain.as_deref(), file.basis.domain.as_ref(), dim)?;
    let candidates: Vec<BasisSpec> = (degrees.0..=degrees.1)
        .map(|g| {
            let spec = BasisSpec::new(family, vec![g; dim], domain.clone())?;
            if total {
                spec.with_total_degree(g)
            } else {
                Ok(spec)
            }
        })
        .collect::<Result<_, _>>()?;
    let config = CvConfig {
        data: data_cfg,
        family,
        domain: domain.clone(),
        degrees,
        total,
    };
    let out = out_dir(&args.common, &file);

    let data = load(&config.data, &domain)?;
    let selection = select_order(&data, &candidates)?;
    let body = CvBody {
        candidates: candidates
            .iter()
            .zip(&selection.scores)
            .enumerate()
            .map(|(i, (c, s))| Candidate {
                orders: c.orders().to_vec(),
                total_degree: c.total_degree(),
                params: c.len(),
                loo_cv_score: *s,
                selected: i == selection.index,
            })
            .collect(),
        selected: selection.index,
        tie_break: TIE_BREAK,
    };
    let mut outputs = Outputs::default();
    outputs.add(
        "report.json",
        json(&Report {
            version: VERSION,
            command: "cv",
            config: &config,
            body,
        })?,
    );
    outputs.commit(&out)
}

#[derive(Debug, Serialize)]
struct DesignConfig {
    generator: GeneratorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    tasks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    counts: Option<Vec<usize>>,
    basis: BasisSpec,
}

#[derive(Debug, Serialize)]
struct DesignBody {
    tasks: usize,
    dim: usize,
    gram: Assumption2Report,
    /// Frobenius distance to the uniform-measure Legendre Gram; legendre family only.
    #[serde(skip_serializing_if = "Option::is_none")]
    gram_deviation: Option<f64>,
}

pub fn design(args: &DesignArgs) -> CliResult<Vec<PathBuf>> {
    let file = load_file(args.common.config.as_deref())?;
    let generator = match &args.generator {
        Some(s) => s.parse::<GeneratorKind>().map_err(CliError::Usage)?,
        None => file.design.generator.unwrap_or(GeneratorKind::Halton),
    };
    let counts = match &args.counts {
        Some(s) => Some(parse_usize_list(s, "--counts")?),
        None => file.design.counts.clone(),
    };
    let tasks = pick(args.tasks, file.design.tasks.as_ref());
    let mut flags = args.basis.flags();
    let dim_hint = pick(args.dim, file.design.dim.as_ref())
        .or_else(|| counts.as_ref().filter(|_| generator == GeneratorKind::Grid).map(|c| c.len()));
    if flags.domain.is_none() && file.basis.domain.is_none() {
        if let Some(d) = dim_hint {
            flags.domain = Some(vec!["-1:1"; d].join(","));
        }
    }
    if flags.orders.is_none() && file.basis.orders.is_none() {
        return Err(CliError::usage(
            "design diagnostics need basis orders (--orders or [basis].orders)",
        ));
    }
    let spec = resolve_basis(&flags, &file.basis)?;
    if let Some(d) = dim_hint {
        if d != spec.dim() {
            return Err(CliError::usage(format!(
                "--dim {d} disagrees with the {}-axis basis",
                spec.dim()
            )));
        }
    }
    let config = DesignConfig {
        generator,
        tasks: tasks.filter(|_| generator == GeneratorKind::Halton),
        counts: counts.clone().filter(|_| generator == GeneratorKind::Grid),
        basis: spec.clone(),
    };
    let out = out_dir(&args.common, &file);

    let set = design_from(generator, tasks, counts.as_ref(), spec.domain())?;
    let psi = sieve_core::basis::design_matrix(&spec, &set.points)?;
    let gram = assumption2_report(&psi)?;
    let gram_deviation = match spec.family() {
        Family::Legendre => Some(gram_deviation(&psi, &target_gram_uniform_legendre(&spec)?)?),
        Family::Power => None,
    };
    let body = DesignBody {
        tasks: set.len(),
        dim: set.dim(),
        gram,
        gram_deviation,
    };
    let mut outputs = Outputs::default();
    outputs.add("stimuli.csv", stimuli_csv(&task_ids(set.len()), &set.points));
    outputs.add(
        "report.json",
        json(&Report {
            version: VERSION,
            command: "design",
            config: &config,
            body,
        })?,
    );
    outputs.commit(&out)
}

#[derive(Debug, Serialize)]
struct GenerateConfig {
    dgp: DgpSpec,
    n: usize,
    generator: GeneratorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    tasks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    counts: Option<Vec<usize>>,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct GenerateBody {
    subjects: usize,
    tasks: usize,
}

fn truth_dim(truth: &Truth) -> usize {
    match truth {
        Truth::StevensLinear { .. } => 2,
        Truth::Polynomial { spec, .. } => spec.dim(),
        Truth::AnalyticSmooth { preset: SmoothPreset::Exp1d } => 1,
        Truth::AnalyticSmooth { preset: SmoothPreset::ExpDiff2d } => 2,
    }
}

fn resolve_dgp(args: &GenerateArgs, file: &FileConfig) -> CliResult<DgpSpec> {
    let base = file.generate.dgp.clone();
    let truth = match args.truth.as_deref() {
        Some("stevens") => Truth::StevensLinear {
            kappa: args.kappa.unwrap_or(1.0),
            distortion: args.distortion.unwrap_or(0.0),
        },
        Some("exp1d") => Truth::AnalyticSmooth { preset: SmoothPreset::Exp1d },
        Some("exp_diff2d") => Truth::AnalyticSmooth { preset: SmoothPreset::ExpDiff2d },
        Some(other) => {
            return Err(CliError::usage(format!(
                "unknown truth '{other}' (expected stevens, exp1d or exp_diff2d)"
            )))
        }
        None => match &base {
            Some(d) => match &d.truth {
                Truth::StevensLinear { kappa, distortion } => Truth::StevensLinear {
                    kappa: args.kappa.unwrap_or(*kappa),
                    distortion: args.distortion.unwrap_or(*distortion),
                },
                t => t.clone(),
            },
            None => Truth::StevensLinear {
                kappa: args.kappa.unwrap_or(1.0),
                distortion: args.distortion.unwrap_or(0.0),
            },
        },
    };
    if (args.kappa.is_some() || args.distortion.is_some()) && !matches!(truth, Truth::StevensLinear { .. }) {
        return Err(CliError::usage("--kappa and --distortion apply to the stevens truth only"));
    }
    let errors = match args.errors.as_deref() {
        Some("iid") => ErrorModel::Iid {
            sigma2: args.sigma2.unwrap_or(1.0),
        },
        Some("hetero") => ErrorModel::DiagonalHetero {
            sigma2: args.sigma2.unwrap_or(1.0),
            gradient: args.gradient.unwrap_or(1.0),
        },
        Some("factor") => ErrorModel::Factor {
            sigma2_nu: args.sigma2_nu.unwrap_or(1.0),
            sigma2_u: args.sigma2_u.unwrap_or(1.0),
        },
        Some(other) => {
            return Err(CliError::usage(format!(
                "unknown error model '{other}' (expected iid, hetero or factor)"
            )))
        }
        None => match base.as_ref().map(|d| d.errors.clone()) {
            Some(ErrorModel::Iid { sigma2 }) => ErrorModel::Iid {
                sigma2: args.sigma2.unwrap_or(sigma2),
            },
            Some(ErrorModel::DiagonalHetero { sigma2, gradient }) => ErrorModel::DiagonalHetero {
                sigma2: args.sigma2.unwrap_or(sigma2),
                gradient: args.gradient.unwrap_or(gradient),
            },
            Some(ErrorModel::Factor { sigma2_nu, sigma2_u }) => ErrorModel::Factor {
                sigma2_nu: args.sigma2_nu.unwrap_or(sigma2_nu),
                sigma2_u: args.sigma2_u.unwrap_or(sigma2_u),
            },
            None => ErrorModel::Iid {
                sigma2: args.sigma2.unwrap_or(1.0),
            },
        },
    };
    let noise = match args.noise.as_deref() {
        Some("gaussian") => Noise::Gaussian,
        Some("uniform") => Noise::Uniform,
        Some(other) => {
            return Err(CliError::usage(format!(
                "unknown noise '{other}' (expected gaussian or uniform)"
            )))
        }
        None => base.as_ref().map(|d| d.noise).unwrap_or_default(),
    };
    let dim = truth_dim(&truth);
    let domain = resolve_domain(
        args.domain.as_deref(),
        base.as_ref().map(|d| &d.domain).filter(|d| d.len() == dim),
        dim,
    )?;
    let dgp = DgpSpec {
        truth,
        errors,
        noise,
        domain,
    };
    dgp.validate()?;
    Ok(dgp)
}

pub fn generate(args: &GenerateArgs) -> CliResult<Vec<PathBuf>> {
    let file = load_file(args.common.config.as_deref())?;
    let dgp = resolve_dgp(args, &file)?;
    let n = require(pick(args.n, file.generate.n.as_ref()), "number of subjects (--n)")?;
    if n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    let generator = match &args.generator {
        Some(s) => s.parse::<GeneratorKind>().map_err(CliError::Usage)?,
        None => file.design.generator.unwrap_or(GeneratorKind::Halton),
    };
    let counts = match &args.counts {
        Some(s) => Some(parse_usize_list(s, "--counts")?),
        None => file.design.counts.clone(),
    };
    let tasks = pick(args.tasks, file.design.tasks.as_ref());
    let config = GenerateConfig {
        n,
        generator,
        tasks: tasks.filter(|_| generator == GeneratorKind::Halton),
        counts: counts.clone().filter(|_| generator == GeneratorKind::Grid),
        seed: seed(&args.common, &file),
        dgp,
    };
    let out = out_dir(&args.common, &file);

    let set = design_from(generator, tasks, counts.as_ref(), &config.dgp.domain)?;
    let data = gen_panel(&config.dgp, &set, n, config.seed)?;
    let subjects: Vec<String> = (1..=n).map(|i| format!("s{i}")).collect();
    let tasks_ids = task_ids(set.len());
    let mut outputs = Outputs::default();
    outputs.add("responses.csv", responses_csv(&subjects, &tasks_ids, data.responses()));
    outputs.add("stimuli.csv", stimuli_csv(&tasks_ids, &set.points));
    outputs.add(
        "dgp.json",
        json(&Report {
            version: VERSION,
            command: "generate",
            config: &config,
            body: GenerateBody {
                subjects: n,
                tasks: set.len(),
            },
        })?,
    );
    outputs.commit(&out)
}

#[derive(Debug, Serialize)]
struct SimulateConfig {
    study: StudyKind,
    dgp: DgpSpec,
    basis: BasisSpec,
    reps: usize,
    ns: Vec<usize>,
    generator: GeneratorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    tasks: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    counts: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    axis: Option<SlopeAxis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_resolution: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<SigmaMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    constraint: Option<ConstraintRecipe>,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct SimulateBody<'a> {
    result: &'a StudyResult,
}

fn resolve_simulate(args: &SimulateArgs, file: &FileConfig) -> CliResult<SimulateConfig> {
    let s = &file.simulate;
    let study = require(s.study, "[simulate].study (rate or wald)")?;
    let dgp = require(s.dgp.clone(), "[simulate].dgp")?;
    dgp.validate()?;
    let mut flags = BasisFlags::default();
    if file.basis.domain.is_none() {
        flags.domain = Some(
            dgp.domain
                .iter()
                .map(|(a, b)| format!("{a:?}:{b:?}"))
                .collect::<Vec<_>>()
                .join(","),
        );
    }
    let basis = resolve_basis(&flags, &file.basis)?;
    if basis.dim() != dgp.domain.len() {
        return Err(CliError::usage("the basis and the dgp domain disagree on the number of axes"));
    }
    let reps = require(args.reps.or(s.reps), "[simulate].reps")?;
    if reps == 0 {
        return Err(CliError::usage("reps must be at least 1"));
    }
    let ns = require(s.ns.clone(), "[simulate].ns")?;
    if ns.is_empty() || ns.contains(&0) {
        return Err(CliError::usage("[simulate].ns must list positive subject counts"));
    }
    let generator = file.design.generator.unwrap_or(GeneratorKind::Halton);
    let (tasks, counts) = match generator {
        GeneratorKind::Halton => {
            let t = require(s.tasks.clone(), "[simulate].tasks")?;
            let ok = match study {
                StudyKind::Rate => t.len() == 1 || t.len() == ns.len(),
                StudyKind::Wald => t.len() == 1,
            };
            if !ok || t.contains(&0) {
                return Err(CliError::usage(
                    "[simulate].tasks needs one positive entry (or one per n in a rate study)",
                ));
            }
            (Some(t), None)
        }
        GeneratorKind::Grid => (None, Some(require(file.design.counts.clone(), "[design].counts")?)),
    };
    let mut cfg = SimulateConfig {
        study,
        dgp,
        basis,
        reps,
        ns,
        generator,
        tasks,
        counts,
        axis: None,
        grid_resolution: None,
        level: None,
        sigma: None,
        constraint: None,
        seed: seed(&args.common, file),
    };
    match study {
        StudyKind::Rate => {
            cfg.axis = Some(s.axis.unwrap_or(SlopeAxis::N));
            let res = s.grid_resolution.unwrap_or_else(|| default_resolution(cfg.basis.dim()));
            if res < 2 {
                return Err(CliError::usage("grid_resolution must be at least 2"));
            }
            cfg.grid_resolution = Some(res);
        }
        StudyKind::Wald => {
            let level = s.level.unwrap_or(0.05);
            if !(level > 0.0 && level <= 1.0) {
                return Err(CliError::usage(format!("level must lie in (0, 1], got {level}")));
            }
            cfg.level = Some(level);
            cfg.sigma = Some(file.sigma.mode.unwrap_or(SigmaMode::Known));
            cfg.constraint = Some(resolve_constraint(&ConstraintFlags::default(), file.constraint.as_ref())?);
        }
    }
    Ok(cfg)
}

fn cell_design(cfg: &SimulateConfig, cell: usize) -> CliResult<DesignSet> {
    let tasks = cfg.tasks.as_ref().map(|t| if t.len() == 1 { t[0] } else { t[cell] });
    design_from(cfg.generator, tasks, cfg.counts.as_ref(), &cfg.dgp.domain)
}

pub fn simulate(args: &SimulateArgs) -> CliResult<Vec<PathBuf>> {
    if args.common.config.is_none() {
        return Err(CliError::usage("simulate reads its study from --config"));
    }
    let file = load_file(args.common.config.as_deref())?;
    let cfg = resolve_simulate(args, &file)?;
    let out = out_dir(&args.common, &file);

    let result = match cfg.study {
        StudyKind::Rate => {
            let cells = cfg
                .ns
                .iter()
                .enumerate()
                .map(|(c, &n)| Ok(RateCell { n, design: cell_design(&cfg, c)? }))
                .collect::<CliResult<Vec<_>>>()?;
            convergence_study(
                &cfg.dgp,
                &cfg.basis,
                &cells,
                cfg.axis.unwrap_or(SlopeAxis::N),
                cfg.reps,
                cfg.seed,
                cfg.grid_resolution.unwrap_or(2),
            )?
        }
        StudyKind::Wald => {
            let design = cell_design(&cfg, 0)?;
            let truth = cfg.dgp.surface();
            let recipe = cfg.constraint.as_ref().expect("resolved for wald studies");
            let constraint = build_constraint(recipe, &cfg.basis, Some(&truth))?;
            size_power_study(&WaldStudy {
                dgp: &cfg.dgp,
                spec: &cfg.basis,
                constraint: &constraint,
                design: &design,
                ns: &cfg.ns,
                reps: cfg.reps,
                level: cfg.level.unwrap_or(0.05),
                sigma_mode: cfg.sigma.unwrap_or(SigmaMode::Known),
                master_seed: cfg.seed,
            })?
        }
    };
    let header: Vec<String> = ["cell", "n", "tasks", "params", "reps", "failures", "metric", "value"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = result
        .tidy_rows()
        .into_iter()
        .map(|r| {
            vec![
                r.cell.to_string(),
                r.n.to_string(),
                r.tasks.to_string(),
                r.params.to_string(),
                r.reps.to_string(),
                r.failures.to_string(),
                r.metric.to_string(),
                fmt_f64(r.value),
            ]
        })
        .collect();
    let mut outputs = Outputs::default();
    outputs.add(
        "study.json",
        json(&Report {
            version: VERSION,
            command: "simulate",
            config: &cfg,
            body: SimulateBody { result: &result },
        })?,
    );
    outputs.add("cells.csv", render(&header, &rows));
    outputs.commit(&out)
}
