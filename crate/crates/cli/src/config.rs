//! Configuration file schema, flag parsing and resolution into per-command configs.
//!
//! A config file is TOML. Every key is optional and any flag given on the
//! command line replaces the matching key:
//!
//! ```toml
//! data = "responses.csv"
//! stimuli = "stimuli.csv"
//! covariates = "covariates.csv"
//! out = "out"
//! seed = 7
//!
//! [basis]
//! family = "legendre"          # or "power"
//! orders = [2, 2]
//! domain = [[0.0, 1.0], [0.0, 1.0]]
//! total_degree = 2
//!
//! [constraint]
//! kind = "point"               # point | derivative_sum | stevens | matrix_file
//! points = [[0.5, 0.5]]
//! values = [0.0]
//! path = "restriction.csv"     # matrix_file only
//!
//! [sigma]
//! mode = "plugin"              # or "known"
//! path = "sigma.csv"           # known only
//!
//! [surface]
//! resolution = 21
//! derivatives = [[1, 0], [0, 1]]
//!
//! [cv]
//! degrees = [1, 6]
//! total = false
//!
//! [design]
//! generator = "halton"         # or "grid"
//! tasks = 256
//! counts = [3]
//!
//! [generate]
//! n = 500
//! dgp = { truth = { kind = "stevens_linear", kappa = 1.0 }, errors = { kind = "iid", sigma2 = 0.01 }, domain = [[0.0, 1.0], [0.0, 1.0]] }
//!
//! [simulate]
//! study = "rate"               # or "wald"
//! reps = 200
//! ns = [100, 400]
//! tasks = [20]
//! axis = "n"
//! grid_resolution = 101
//! level = 0.05
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sieve_core::basis::{BasisSpec, Family};
use sieve_core::simulate::{DgpSpec, SigmaMode, SlopeAxis};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub stimuli: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub basis: BasisSection,
    pub constraint: Option<ConstraintSection>,
    #[serde(default)]
    pub sigma: SigmaSection,
    #[serde(default)]
    pub surface: SurfaceSection,
    #[serde(default)]
    pub cv: CvSection,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    pub family: Option<Family>,
    pub orders: Option<Vec<usize>>,
    pub domain: Option<Vec<(f64, f64)>>,
    pub total_degree: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    pub kind: Option<String>,
    pub points: Option<Vec<Vec<f64>>>,
    pub values: Option<Vec<f64>>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSection {
    pub mode: Option<SigmaMode>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSection {
    pub resolution: Option<usize>,
    pub derivatives: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    /// Inclusive `[lo, hi]`.
    pub degrees: Option<(usize, usize)>,
    pub total: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub generator: Option<GeneratorKind>,
    pub tasks: Option<usize>,
    pub counts: Option<Vec<usize>>,
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub n: Option<usize>,
    pub dgp: Option<DgpSpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub study: Option<StudyKind>,
    pub reps: Option<usize>,
    pub ns: Option<Vec<usize>>,
    pub tasks: Option<Vec<usize>>,
    pub axis: Option<SlopeAxis>,
    pub grid_resolution: Option<usize>,
    pub level: Option<f64>,
    pub dgp: Option<DgpSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Halton,
    Grid,
}

impl std::str::FromStr for GeneratorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "halton" => Ok(GeneratorKind::Halton),
            "grid" => Ok(GeneratorKind::Grid),
            other => Err(format!("unknown generator '{other}' (expected halton or grid)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Rate,
    Wald,
}

pub fn load_file(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| {
        CliError::usage(format!(
            "{}: {}",
            path.display(),
            e.message()
        ))
    })
}

pub fn parse_usize_list(s: &str, what: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::usage(format!("{what}: '{t}' is not a non-negative integer")))
        })
        .collect()
}

pub fn parse_f64_list(s: &str, what: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("{what}: '{t}' is not a number")))
        })
        .collect()
}

/// `lo:hi` per axis, axes separated by commas, e.g. `-1:1,0:2`.
pub fn parse_domain(s: &str) -> CliResult<Vec<(f64, f64)>> {
    s.split(',')
        .map(|axis| {
            let (lo, hi) = axis
                .split_once(':')
                .ok_or_else(|| CliError::usage(format!("--domain: '{axis}' is not of the form lo:hi")))?;
            let lo = lo.trim().parse::<f64>();
            let hi = hi.trim().parse::<f64>();
            match (lo, hi) {
                (Ok(a), Ok(b)) => Ok((a, b)),
                _ => Err(CliError::usage(format!("--domain: '{axis}' is not of the form lo:hi"))),
            }
        })
        .collect()
}

/// Points separated by `;`, coordinates by `,`.
pub fn parse_points(s: &str) -> CliResult<Vec<Vec<f64>>> {
    s.split(';').map(|p| parse_f64_list(p, "--points")).collect()
}

/// `lo..hi` inclusive.
pub fn parse_range(s: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::usage(format!("--degrees: '{s}' is not of the form lo..hi"));
    let (lo, hi) = s.split_once("..").ok_or_else(bad)?;
    let lo = lo.trim().parse().map_err(|_| bad())?;
    let hi = hi.trim().parse().map_err(|_| bad())?;
    Ok((lo, hi))
}

/// Basis flags layered over the `[basis]` section.
#[derive(Debug, Clone, Default)]
pub struct BasisFlags {
    pub family: Option<String>,
    pub orders: Option<String>,
    pub domain: Option<String>,
    pub total_degree: Option<usize>,
}

pub fn resolve_domain(flag: Option<&str>, file: Option<&Vec<(f64, f64)>>, dim: usize) -> CliResult<Vec<(f64, f64)>> {
    let domain = match (flag, file) {
        (Some(s), _) => parse_domain(s)?,
        (None, Some(d)) => d.clone(),
        (None, None) => vec![(-1.0, 1.0); dim],
    };
    if domain.len() != dim {
        return Err(CliError::usage(format!(
            "domain has {} axes but {dim} are needed",
            domain.len()
        )));
    }
    Ok(domain)
}

pub fn resolve_basis(flags: &BasisFlags, file: &BasisSection) -> CliResult<BasisSpec> {
    let family = match (&flags.family, file.family) {
        (Some(s), _) => s.parse::<Family>()?,
        (None, Some(f)) => f,
        (None, None) => Family::Legendre,
    };
    let orders = match (&flags.orders, &file.orders) {
        (Some(s), _) => parse_usize_list(s, "--orders")?,
        (None, Some(o)) => o.clone(),
        (None, None) => return Err(CliError::usage("basis orders are required (--orders or [basis].orders)")),
    };
    let domain = resolve_domain(flags.domain.as_deref(), file.domain.as_ref(), orders.len())?;
    let spec = BasisSpec::new(family, orders, domain)?;
    match flags.total_degree.or(file.total_degree) {
        Some(g) => Ok(spec.with_total_degree(g)?),
        None => Ok(spec),
    }
}

pub fn pick<T: Clone>(flag: Option<T>, file: Option<&T>) -> Option<T> {
    flag.or_else(|| file.cloned())
}

pub fn require<T>(v: Option<T>, what: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::usage(format!("missing required setting: {what}")))
}

/// Input files as recorded in reports.
#[derive(Debug, Clone, Serialize)]
pub struct DataConfig {
    pub responses: PathBuf,
    pub stimuli: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariates: Option<PathBuf>,
}

/// Restriction recipe as recorded in reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintRecipe {
    Point {
        points: Vec<Vec<f64>>,
        /// Absent in simulations: the truth supplies the values.
        #[serde(skip_serializing_if = "Option::is_none")]
        values: Option<Vec<f64>>,
    },
    DerivativeSum,
    Stevens,
    MatrixFile {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Default)]
pub struct ConstraintFlags {
    pub kind: Option<String>,
    pub points: Option<String>,
    pub values: Option<String>,
    pub matrix_file: Option<PathBuf>,
}

pub fn resolve_constraint(flags: &ConstraintFlags, file: Option<&ConstraintSection>) -> CliResult<ConstraintRecipe> {
    let empty = ConstraintSection::default();
    let file = file.unwrap_or(&empty);
    let kind = require(pick(flags.kind.clone(), file.kind.as_ref()), "constraint kind (--constraint)")?;
    match kind.as_str() {
        "point" => {
            let points = match &flags.points {
                Some(s) => parse_points(s)?,
                None => require(file.points.clone(), "constraint points (--points)")?,
            };
            let values = match &flags.values {
                Some(s) => Some(parse_f64_list(s, "--values")?),
                None => file.values.clone(),
            };
            if let Some(v) = &values {
                if v.len() != points.len() {
                    return Err(CliError::usage(format!(
                        "{} constraint points but {} values",
                        points.len(),
                        v.len()
                    )));
                }
            }
            Ok(ConstraintRecipe::Point { points, values })
        }
        "derivative_sum" => Ok(ConstraintRecipe::DerivativeSum),
        "stevens" => Ok(ConstraintRecipe::Stevens),
        "matrix_file" => Ok(ConstraintRecipe::MatrixFile {
            path: require(pick(flags.matrix_file.clone(), file.path.as_ref()), "restriction file (--matrix-file)")?,
        }),
        other => Err(CliError::usage(format!(
            "unknown constraint '{other}' (expected point, derivative_sum, stevens or matrix_file)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_and_lists_parse() {
        assert_eq!(parse_domain("-1:1,0:2.5").unwrap(), vec![(-1.0, 1.0), (0.0, 2.5)]);
        assert!(parse_domain("-1,1").is_err());
        assert_eq!(parse_usize_list("2, 3", "x").unwrap(), vec![2, 3]);
        assert!(parse_usize_list("2,-3", "x").is_err());
        assert_eq!(parse_points("0,1;0.5,0.5").unwrap(), vec![vec![0.0, 1.0], vec![0.5, 0.5]]);
        assert_eq!(parse_range("1..6").unwrap(), (1, 6));
        assert!(parse_range("1-6").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file: FileConfig = toml::from_str(
            "[basis]\nfamily = \"power\"\norders = [3]\ndomain = [[0.0, 2.0]]\n",
        )
        .unwrap();
        let spec = resolve_basis(&BasisFlags::default(), &file.basis).unwrap();
        assert_eq!(spec.family(), Family::Power);
        assert_eq!(spec.domain(), &[(0.0, 2.0)]);
        let flags = BasisFlags {
            family: Some("legendre".into()),
            orders: Some("2,2".into()),
            domain: Some("-1:1,-1:1".into()),
            total_degree: Some(2),
        };
        let spec = resolve_basis(&flags, &file.basis).unwrap();
        assert_eq!(spec.family(), Family::Legendre);
        assert_eq!(spec.len(), 6);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("colour = 3\n").is_err());
        assert!(toml::from_str::<FileConfig>("[basis]\norder = [3]\n").is_err());
    }

    #[test]
    fn domain_defaults_to_the_reference_box() {
        let flags = BasisFlags {
            orders: Some("2,3".into()),
            ..Default::default()
        };
        let spec = resolve_basis(&flags, &BasisSection::default()).unwrap();
        assert_eq!(spec.domain(), &[(-1.0, 1.0), (-1.0, 1.0)]);
        let bad = BasisFlags {
            orders: Some("2,3".into()),
            domain: Some("0:1".into()),
            ..Default::default()
        };
        assert!(resolve_basis(&bad, &BasisSection::default()).is_err());
    }

    #[test]
    fn constraint_recipes_resolve() {
        let flags = ConstraintFlags {
            kind: Some("point".into()),
            points: Some("0,0;0.5,0.5".into()),
            values: Some("1,2".into()),
            ..Default::default()
        };
        let r = resolve_constraint(&flags, None).unwrap();
        assert_eq!(
            r,
            ConstraintRecipe::Point {
                points: vec![vec![0.0, 0.0], vec![0.5, 0.5]],
                values: Some(vec![1.0, 2.0])
            }
        );
        let short = ConstraintFlags {
            values: Some("1".into()),
            ..flags
        };
        assert!(resolve_constraint(&short, None).is_err());
        let missing = ConstraintFlags {
            kind: Some("matrix_file".into()),
            ..Default::default()
        };
        assert!(resolve_constraint(&missing, None).is_err());
    }
}
