//! Stimulus designs and their Gram-matrix diagnostics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{power_to_legendre, BasisSpec, Family, DOMAIN_TOL};
use crate::error::{Result, SieveError};
use crate::linalg::{extreme_eigenvalues, frobenius, symmetrize};

/// Default cap on the number of points a tensor grid may hold.
pub const GRID_CAP: usize = 10_000_000;

const HALTON_PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Grid,
    Halton,
    External,
}

/// `T x d` stimuli inside an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSet {
    pub points: DMatrix<f64>,
    pub generator: Generator,
    pub domain: Vec<(f64, f64)>,
}

impl DesignSet {
    /// Wrap user-supplied points, checking that they lie inside `domain`.
    pub fn external(points: DMatrix<f64>, domain: Vec<(f64, f64)>) -> Result<Self> {
        if points.ncols() != domain.len() {
            return Err(SieveError::DimensionMismatch {
                expected: domain.len(),
                found: points.ncols(),
            });
        }
        for t in 0..points.nrows() {
            for (k, &(a, b)) in domain.iter().enumerate() {
                let x = points[(t, k)];
                if !(x >= a - DOMAIN_TOL && x <= b + DOMAIN_TOL) {
                    return Err(SieveError::at_row(
                        t,
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
        Ok(DesignSet {
            points,
            generator: Generator::External,
            domain,
        })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn point(&self, t: usize) -> Vec<f64> {
        self.points.row(t).iter().copied().collect()
    }
}

fn check_box(domain: &[(f64, f64)]) -> Result<()> {
    if domain.is_empty() {
        return Err(SieveError::InvalidArgument("design box has no axes".into()));
    }
    for (k, &(a, b)) in domain.iter().enumerate() {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(SieveError::InvalidArgument(format!(
                "box axis {k} must satisfy a < b, got [{a}, {b}]"
            )));
        }
    }
    Ok(())
}

/// Equispaced tensor grid including the endpoints; a count of 1 gives the midpoint.
pub fn grid_design(counts: &[usize], domain: &[(f64, f64)]) -> Result<DesignSet> {
    grid_design_with_cap(counts, domain, GRID_CAP)
}

pub fn grid_design_with_cap(
    counts: &[usize],
    domain: &[(f64, f64)],
    cap: usize,
) -> Result<DesignSet> {
    check_box(domain)?;
    if counts.len() != domain.len() {
        return Err(SieveError::DimensionMismatch {
            expected: domain.len(),
            found: counts.len(),
        });
    }
    if counts.contains(&0) {
        return Err(SieveError::InvalidArgument(
            "grid counts must be at least 1".into(),
        ));
    }
    let total: u128 = counts.iter().map(|&c| c as u128).product();
    if total > cap as u128 {
        return Err(SieveError::GridTooLarge { points: total, cap });
    }
    let total = total as usize;
    let d = counts.len();
    let axes: Vec<Vec<f64>> = counts
        .iter()
        .zip(domain)
        .map(|(&c, &(a, b))| {
            if c == 1 {
                vec![0.5 * (a + b)]
            } else {
                (0..c)
                    .map(|i| {
                        if i + 1 == c {
                            b
                        } else {
                            a + (b - a) * i as f64 / (c - 1) as f64
                        }
                    })
                    .collect()
            }
        })
        .collect();
    let mut points = DMatrix::zeros(total, d);
    for t in 0..total {
        let mut flat = t;
        for k in (0..d).rev() {
            points[(t, k)] = axes[k][flat % counts[k]];
            flat /= counts[k];
        }
    }
    Ok(DesignSet {
        points,
        generator: Generator::Grid,
        domain: domain.to_vec(),
    })
}

/// Van der Corput radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// First `t` Halton points (index starting at 1), mapped onto the box.
pub fn halton_design(t: usize, domain: &[(f64, f64)]) -> Result<DesignSet> {
    check_box(domain)?;
    let d = domain.len();
    if d > HALTON_PRIMES.len() {
        return Err(SieveError::UnsupportedDimension {
            dim: d,
            max: HALTON_PRIMES.len(),
        });
    }
    if t == 0 {
        return Err(SieveError::InvalidArgument("T must be at least 1".into()));
    }
    let mut points = DMatrix::zeros(t, d);
    for i in 0..t {
        for (k, &(a, b)) in domain.iter().enumerate() {
            let u = radical_inverse(i as u64 + 1, HALTON_PRIMES[k]);
            points[(i, k)] = a + (b - a) * u;
        }
    }
    Ok(DesignSet {
        points,
        generator: Generator::Halton,
        domain: domain.to_vec(),
    })
}

/// `Psi' Psi / T`, symmetrized.
pub fn gram_matrix(psi: &DMatrix<f64>) -> DMatrix<f64> {
    let t = psi.nrows().max(1) as f64;
    symmetrize(&(psi.transpose() * psi / t))
}

/// Gram of a Legendre basis under the uniform product measure on the box:
/// `diag(prod_k 1 / (2 alpha_k + 1))`.
pub fn target_gram_uniform_legendre(spec: &BasisSpec) -> Result<DMatrix<f64>> {
    if spec.family() != Family::Legendre {
        return Err(SieveError::FamilyMismatch(
            "the uniform target Gram is defined for the legendre family".into(),
        ));
    }
    let diag: Vec<f64> = spec
        .multi_indices()
        .iter()
        .map(|alpha| alpha.iter().map(|&j| 1.0 / (2 * j + 1) as f64).product())
        .collect();
    Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)))
}

/// `|| Psi' Psi / T - Q ||_F`.
pub fn gram_deviation(psi: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<f64> {
    if target.nrows() != psi.ncols() || target.ncols() != psi.ncols() {
        return Err(SieveError::DimensionMismatch {
            expected: psi.ncols(),
            found: target.nrows(),
        });
    }
    Ok(frobenius(&(gram_matrix(psi) - target)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assumption2Report {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub condition: f64,
    /// `lambda_min <= 1e-10 * lambda_max`.
    pub rank_deficient: bool,
}

/// Extreme eigenvalues of the sample Gram `Psi' Psi / T`.
pub fn assumption2_report(psi: &DMatrix<f64>) -> Result<Assumption2Report> {
    if psi.nrows() < psi.ncols() {
        return Err(SieveError::Underdetermined {
            tasks: psi.nrows(),
            params: psi.ncols(),
        });
    }
    let (lambda_min, lambda_max) = extreme_eigenvalues(&gram_matrix(psi));
    Ok(Assumption2Report {
        lambda_min,
        lambda_max,
        condition: lambda_max / lambda_min,
        rank_deficient: lambda_min <= 1e-10 * lambda_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZielkeCheck {
    pub degree: usize,
    /// Spectral condition number of `A_J`.
    pub kappa2: f64,
    /// Max-column-sum condition number of `A_J`.
    pub kappa1: f64,
    /// `J * kappa1`.
    pub bound: f64,
}

impl ZielkeCheck {
    pub fn holds(&self) -> bool {
        self.kappa2 <= self.bound
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Compare `kappa_2(A_J)` with `J * kappa_1(A_J)` for the power-to-Legendre map.
pub fn zielke_check(degree: usize) -> Result<ZielkeCheck> {
    if !(1..=20).contains(&degree) {
        return Err(SieveError::InvalidArgument(format!(
            "zielke_check supports 1 <= J <= 20, got {degree}"
        )));
    }
    let a = power_to_legendre(degree);
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let inv = a
        .solve_upper_triangular(&DMatrix::identity(degree + 1, degree + 1))
        .expect("A_J is invertible");
    let kappa1 = one_norm(&a) * one_norm(&inv);
    let check = ZielkeCheck {
        degree,
        kappa2: smax / smin,
        kappa1,
        bound: degree as f64 * kappa1,
    };
    assert!(
        check.holds(),
        "kappa2(A_{degree}) = {} exceeds J * kappa1 = {}",
        check.kappa2,
        check.bound
    );
    Ok(check)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateRegime {
    PowerLambda,
    PowerTau,
    SplineLambda,
    SplineTau,
}

/// Rate-optimal sieve dimension with unit constant, rounded and clamped to `[1, T]`.
///
/// `scale` is `lambda_nT` for the `*_lambda` regimes and `tau_nT` for `*_tau`.
pub fn optimal_basis_size(
    regime: RateRegime,
    smoothness: f64,
    dim: usize,
    n: usize,
    tasks: usize,
    scale: f64,
) -> Result<usize> {
    if !(smoothness > 0.0 && dim > 0 && n > 0 && tasks > 0 && scale > 0.0) {
        return Err(SieveError::InvalidArgument(
            "optimal_basis_size needs positive arguments".into(),
        ));
    }
    let d = dim as f64;
    let c = smoothness;
    match regime {
        RateRegime::PowerLambda | RateRegime::PowerTau if c <= d => {
            return Err(SieveError::Smoothness(format!(
                "power series need c > d for the bias P^(1-c/d) to vanish (c = {c}, d = {dim})"
            )))
        }
        RateRegime::SplineLambda | RateRegime::SplineTau if 2.0 * c <= d => {
            return Err(SieveError::Smoothness(format!(
                "regression splines need 2c > d for the bias P^(1/2-c/d) to vanish (c = {c}, d = {dim})"
            )))
        }
        _ => {}
    }
    let ratio = n as f64 * tasks as f64 / scale;
    let exponent = match regime {
        RateRegime::PowerLambda | RateRegime::SplineLambda => d / (d + 2.0 * c),
        RateRegime::PowerTau | RateRegime::SplineTau => d / (2.0 * c),
    };
    let p = ratio.powf(exponent).round();
    Ok((p.max(1.0) as usize).min(tasks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::design_matrix;

    #[test]
    fn grid_examples() {
        let g = grid_design(&[3], &[(-1.0, 1.0)]).unwrap();
        assert_eq!(g.points.as_slice(), &[-1.0, 0.0, 1.0]);
        let g2 = grid_design(&[2, 2], &[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let rows: Vec<Vec<f64>> = (0..4).map(|t| g2.point(t)).collect();
        assert_eq!(
            rows,
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]
        );
        let mid = grid_design(&[1], &[(-1.0, 1.0)]).unwrap();
        assert_eq!(mid.points.as_slice(), &[0.0]);
    }

    #[test]
    fn grid_errors() {
        assert!(matches!(
            grid_design_with_cap(&[100, 100], &[(0.0, 1.0), (0.0, 1.0)], 9_999),
            Err(SieveError::GridTooLarge { .. })
        ));
        assert!(grid_design(&[0], &[(0.0, 1.0)]).is_err());
        assert!(grid_design(&[2], &[(0.0, 1.0), (0.0, 1.0)]).is_err());
    }

    #[test]
    fn halton_examples() {
        let h = halton_design(3, &[(0.0, 1.0)]).unwrap();
        assert_eq!(h.points.as_slice(), &[0.5, 0.25, 0.75]);
        let h2 = halton_design(2, &[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(h2.point(0), vec![0.5, 1.0 / 3.0]);
        assert_eq!(h2.point(1), vec![0.25, 2.0 / 3.0]);
        let h3 = halton_design(17, &[(-1.0, 1.0)]).unwrap();
        assert_eq!(h3.points[(0, 0)], 0.0);
        assert!(matches!(
            halton_design(4, &[(0.0, 1.0); 9]),
            Err(SieveError::UnsupportedDimension { dim: 9, max: 8 })
        ));
    }

    #[test]
    fn halton_is_deterministic() {
        let a = halton_design(500, &[(0.0, 2.0), (-3.0, 1.0), (0.0, 1.0)]).unwrap();
        let b = halton_design(500, &[(0.0, 2.0), (-3.0, 1.0), (0.0, 1.0)]).unwrap();
        assert!(a
            .points
            .iter()
            .zip(b.points.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn gram_examples() {
        let psi = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]);
        assert_eq!(gram_matrix(&psi), DMatrix::identity(2, 2));
        assert_eq!(gram_matrix(&DMatrix::from_element(5, 1, 1.0)), DMatrix::from_element(1, 1, 1.0));
        assert_eq!(gram_deviation(&psi, &DMatrix::identity(2, 2)).unwrap(), 0.0);
        assert!(gram_deviation(&psi, &DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn target_gram_examples() {
        let q = target_gram_uniform_legendre(&BasisSpec::legendre(vec![2]).unwrap()).unwrap();
        assert_eq!(q, DMatrix::from_diagonal(&nalgebra::dvector![1.0, 1.0 / 3.0, 1.0 / 5.0]));
        let q0 = target_gram_uniform_legendre(&BasisSpec::legendre(vec![0]).unwrap()).unwrap();
        assert_eq!(q0, DMatrix::from_element(1, 1, 1.0));
        let q11 = target_gram_uniform_legendre(&BasisSpec::legendre(vec![1, 1]).unwrap()).unwrap();
        assert_eq!(
            q11,
            DMatrix::from_diagonal(&nalgebra::dvector![1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 9.0])
        );
        let pw = BasisSpec::on_unit_box(Family::Power, vec![2]).unwrap();
        assert!(matches!(
            target_gram_uniform_legendre(&pw),
            Err(SieveError::FamilyMismatch(_))
        ));
        let spec = BasisSpec::legendre(vec![3, 2]).unwrap();
        let (lmin, _) = extreme_eigenvalues(&target_gram_uniform_legendre(&spec).unwrap());
        assert!((lmin - 1.0 / 35.0).abs() < 1e-15);
    }

    #[test]
    fn assumption2_examples() {
        let psi = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]);
        let r = assumption2_report(&psi).unwrap();
        assert!((r.lambda_min - 1.0).abs() < 1e-14 && (r.lambda_max - 1.0).abs() < 1e-14);
        let dup = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 1.0, 0.3]);
        assert!(assumption2_report(&dup).unwrap().rank_deficient);
        assert!(matches!(
            assumption2_report(&DMatrix::from_element(1, 2, 1.0)),
            Err(SieveError::Underdetermined { tasks: 1, params: 2 })
        ));
    }

    #[test]
    fn halton_gram_decays() {
        let spec = BasisSpec::legendre(vec![4]).unwrap();
        let q = target_gram_uniform_legendre(&spec).unwrap();
        let dev = |t: usize| {
            let design = halton_design(t, &[(-1.0, 1.0)]).unwrap();
            gram_deviation(&design_matrix(&spec, &design.points).unwrap(), &q).unwrap()
        };
        let (d10, d12, d14) = (dev(1 << 10), dev(1 << 12), dev(1 << 14));
        assert!(d10 > d12 && d12 > d14);
        assert!(d14 < 10.0 * d10 * (1024.0 / 16384.0) * (14.0 / 10.0));
    }

    #[test]
    fn zielke_examples() {
        let z1 = zielke_check(1).unwrap();
        assert!((z1.kappa2 - 1.0).abs() < 1e-12 && (z1.bound - 1.0).abs() < 1e-12);
        let z2 = zielke_check(2).unwrap();
        // A_2^{-1} = [[1,0,1/3],[0,1,0],[0,0,2/3]]: ||A||_1 = 2, ||A^{-1}||_1 = 1
        assert!((z2.kappa1 - 2.0).abs() < 1e-12);
        assert!(z2.holds());
        assert!(zielke_check(10).unwrap().holds());
        assert!(zielke_check(0).is_err() && zielke_check(21).is_err());
    }

    #[test]
    fn optimal_size_examples() {
        assert_eq!(
            optimal_basis_size(RateRegime::PowerLambda, 2.0, 1, 1000, 100, 1.0).unwrap(),
            10
        );
        // (10^4)^(1/4) with c = 2, d = 1
        assert_eq!(
            optimal_basis_size(RateRegime::PowerTau, 2.0, 1, 100, 100, 1.0).unwrap(),
            10
        );
        assert_eq!(
            optimal_basis_size(RateRegime::SplineTau, 1.0, 1, 100, 200, 2.0).unwrap(),
            100
        );
        assert_eq!(
            optimal_basis_size(RateRegime::SplineTau, 1.0, 1, 1000, 50, 1.0).unwrap(),
            50
        );
        assert!(matches!(
            optimal_basis_size(RateRegime::PowerTau, 1.0, 1, 100, 100, 1.0),
            Err(SieveError::Smoothness(_))
        ));
        assert!(matches!(
            optimal_basis_size(RateRegime::SplineLambda, 1.0, 2, 100, 100, 1.0),
            Err(SieveError::Smoothness(_))
        ));
    }
}
