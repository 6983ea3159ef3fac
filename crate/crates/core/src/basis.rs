//! Univariate and tensor-product polynomial bases on axis-aligned boxes.
//!
//! Every coordinate is first mapped affinely from its axis interval `[a, b]` onto
//! `[-1, 1]`; the Legendre or monomial row is evaluated in the mapped coordinate.
//! Derivatives with respect to the original coordinates therefore pick up a
//! factor `2 / (b - a)` per differentiation, which [`derivative_operator`] folds
//! into the returned matrix.
//!
//! Coefficient vectors are ordered lexicographically over multi-indices with
//! dimension 1 outermost, so a bivariate tensor row equals
//! `psi_J(x1) ⊗ psi_K(x2)`. A total-degree truncation keeps only the
//! multi-indices with `|alpha| <= g` and orders them by total degree, then
//! by decreasing power of dimension 1 (`1, x1, x2, x1^2, x1 x2, x2^2, ...`).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SieveError};

/// Slack allowed when checking that a point lies in its domain.
pub const DOMAIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Legendre,
    Power,
}

impl std::str::FromStr for Family {
    type Err = SieveError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "legendre" => Ok(Family::Legendre),
            "power" => Ok(Family::Power),
            other => Err(SieveError::InvalidArgument(format!(
                "unknown basis family '{other}' (expected legendre or power)"
            ))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Legendre => f.write_str("legendre"),
            Family::Power => f.write_str("power"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawBasisSpec {
    family: Family,
    orders: Vec<usize>,
    domain: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    total_degree: Option<usize>,
}

/// Family, per-axis maximum degrees, domain box and optional total-degree cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBasisSpec", into = "RawBasisSpec")]
pub struct BasisSpec {
    family: Family,
    orders: Vec<usize>,
    domain: Vec<(f64, f64)>,
    total_degree: Option<usize>,
    indices: Vec<Vec<usize>>,
}

impl TryFrom<RawBasisSpec> for BasisSpec {
    type Error = SieveError;

    fn try_from(raw: RawBasisSpec) -> Result<Self> {
        let spec = BasisSpec::new(raw.family, raw.orders, raw.domain)?;
        match raw.total_degree {
            Some(g) => spec.with_total_degree(g),
            None => Ok(spec),
        }
    }
}

impl From<BasisSpec> for RawBasisSpec {
    fn from(spec: BasisSpec) -> Self {
        RawBasisSpec {
            family: spec.family,
            orders: spec.orders,
            domain: spec.domain,
            total_degree: spec.total_degree,
        }
    }
}

impl BasisSpec {
    pub fn new(family: Family, orders: Vec<usize>, domain: Vec<(f64, f64)>) -> Result<Self> {
        if orders.is_empty() {
            return Err(SieveError::InvalidArgument(
                "a basis needs at least one dimension".into(),
            ));
        }
        if domain.len() != orders.len() {
            return Err(SieveError::DimensionMismatch {
                expected: orders.len(),
                found: domain.len(),
            });
        }
        for (k, &(a, b)) in domain.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(SieveError::InvalidArgument(format!(
                    "domain axis {k} must be a finite interval with a < b, got [{a}, {b}]"
                )));
            }
        }
        let mut spec = BasisSpec {
            family,
            orders,
            domain,
            total_degree: None,
            indices: Vec::new(),
        };
        spec.indices = spec.enumerate_indices();
        Ok(spec)
    }

    /// Basis on `[-1, 1]^d`.
    pub fn on_unit_box(family: Family, orders: Vec<usize>) -> Result<Self> {
        let d = orders.len();
        Self::new(family, orders, vec![(-1.0, 1.0); d])
    }

    pub fn legendre(orders: Vec<usize>) -> Result<Self> {
        Self::on_unit_box(Family::Legendre, orders)
    }

    /// Restrict to multi-indices of total degree at most `g`, in graded order.
    pub fn with_total_degree(mut self, g: usize) -> Result<Self> {
        self.total_degree = Some(g);
        self.indices = self.enumerate_indices();
        Ok(self)
    }

    /// Same basis with a different family.
    pub fn with_family(&self, family: Family) -> Self {
        let mut spec = self.clone();
        spec.family = family;
        spec
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn total_degree(&self) -> Option<usize> {
        self.total_degree
    }

    pub fn dim(&self) -> usize {
        self.orders.len()
    }

    /// Number of basis functions `P`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Multi-indices in coefficient order.
    pub fn multi_indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn index_of(&self, alpha: &[usize]) -> Option<usize> {
        self.indices.iter().position(|a| a.as_slice() == alpha)
    }

    fn enumerate_indices(&self) -> Vec<Vec<usize>> {
        let count: usize = self.orders.iter().map(|j| j + 1).product();
        let all: Vec<Vec<usize>> = (0..count)
            .map(|mut flat| {
                // mixed radix with the last axis fastest
                let mut alpha = vec![0usize; self.orders.len()];
                for k in (0..self.orders.len()).rev() {
                    alpha[k] = flat % (self.orders[k] + 1);
                    flat /= self.orders[k] + 1;
                }
                alpha
            })
            .collect();
        match self.total_degree {
            None => all,
            Some(g) => {
                let mut kept: Vec<Vec<usize>> = all
                    .into_iter()
                    .filter(|a| a.iter().sum::<usize>() <= g)
                    .collect();
                // graded; within a degree, larger leading exponents first
                kept.sort_by(|a, b| {
                    let (da, db) = (a.iter().sum::<usize>(), b.iter().sum::<usize>());
                    da.cmp(&db).then_with(|| b.cmp(a))
                });
                kept
            }
        }
    }

    /// Affine map of `x` on axis `k` onto `[-1, 1]`, checking the domain.
    pub fn to_reference(&self, k: usize, x: f64) -> Result<f64> {
        let (a, b) = self.domain[k];
        if !x.is_finite() {
            return Err(SieveError::NonFinite(format!("coordinate on axis {k}")));
        }
        if x < a - DOMAIN_TOL || x > b + DOMAIN_TOL {
            return Err(SieveError::OutsideDomain {
                axis: k,
                value: x,
                lo: a,
                hi: b,
            });
        }
        Ok(((2.0 * x - a - b) / (b - a)).clamp(-1.0, 1.0))
    }

    /// Inverse of [`BasisSpec::to_reference`].
    pub fn from_reference(&self, k: usize, u: f64) -> f64 {
        let (a, b) = self.domain[k];
        0.5 * (a + b) + 0.5 * (b - a) * u
    }

    /// `d/dx = scale * d/du` on axis `k`.
    pub fn chain_scale(&self, k: usize) -> f64 {
        let (a, b) = self.domain[k];
        2.0 / (b - a)
    }
}

/// Legendre polynomial `L_j(x)` by the three-term recurrence.
pub fn eval_legendre(j: usize, x: f64) -> Result<f64> {
    if !x.is_finite() || x.abs() > 1.0 + DOMAIN_TOL {
        return Err(SieveError::OutsideDomain {
            axis: 0,
            value: x,
            lo: -1.0,
            hi: 1.0,
        });
    }
    Ok(*legendre_values(j, x.clamp(-1.0, 1.0)).last().unwrap())
}

/// `[L_0(u), ..., L_J(u)]`.
pub fn legendre_values(degree: usize, u: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(degree + 1);
    out.push(1.0);
    if degree == 0 {
        return out;
    }
    out.push(u);
    for j in 1..degree {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * u * out[j] - jf * out[j - 1]) / (jf + 1.0);
        out.push(next);
    }
    out
}

/// `[1, u, ..., u^J]`.
pub fn power_values(degree: usize, u: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(degree + 1);
    let mut p = 1.0;
    for _ in 0..=degree {
        out.push(p);
        p *= u;
    }
    out
}

fn univariate_values(family: Family, degree: usize, u: f64) -> Vec<f64> {
    match family {
        Family::Legendre => legendre_values(degree, u),
        Family::Power => power_values(degree, u),
    }
}

/// Basis row `psi_P(x)`.
pub fn basis_row(spec: &BasisSpec, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != spec.dim() {
        return Err(SieveError::DimensionMismatch {
            expected: spec.dim(),
            found: x.len(),
        });
    }
    let per_axis = x
        .iter()
        .enumerate()
        .map(|(k, &xk)| {
            let u = spec.to_reference(k, xk)?;
            Ok(univariate_values(spec.family, spec.orders[k], u))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(spec
        .multi_indices()
        .iter()
        .map(|alpha| {
            alpha
                .iter()
                .zip(&per_axis)
                .map(|(&j, vals)| vals[j])
                .product()
        })
        .collect())
}

/// `T x P` design matrix; `points` is `T x d`.
pub fn design_matrix(spec: &BasisSpec, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if points.nrows() == 0 {
        return Err(SieveError::InvalidArgument("design has no points".into()));
    }
    if points.ncols() != spec.dim() {
        return Err(SieveError::DimensionMismatch {
            expected: spec.dim(),
            found: points.ncols(),
        });
    }
    let p = spec.len();
    let mut psi = DMatrix::zeros(points.nrows(), p);
    let mut x = vec![0.0; spec.dim()];
    for t in 0..points.nrows() {
        for k in 0..spec.dim() {
            x[k] = points[(t, k)];
        }
        let row = basis_row(spec, &x).map_err(|e| SieveError::at_row(t, e))?;
        for (j, v) in row.into_iter().enumerate() {
            psi[(t, j)] = v;
        }
    }
    Ok(psi)
}

/// Differentiation matrix of the monomial basis: `B[j, j+1] = j + 1`.
pub fn power_diff_matrix(degree: usize) -> DMatrix<f64> {
    let n = degree + 1;
    let mut b = DMatrix::zeros(n, n);
    for j in 0..degree {
        b[(j, j + 1)] = (j + 1) as f64;
    }
    b
}

/// Change of basis with `psi_Leg(x) = psi_pow(x) * A`; column `j` holds the
/// monomial coefficients of `L_j`.
pub fn power_to_legendre(degree: usize) -> DMatrix<f64> {
    let n = degree + 1;
    let mut a = DMatrix::zeros(n, n);
    a[(0, 0)] = 1.0;
    if degree >= 1 {
        a[(1, 1)] = 1.0;
    }
    for j in 1..degree {
        let jf = j as f64;
        for i in 0..n {
            let shifted = if i > 0 { a[(i - 1, j)] } else { 0.0 };
            a[(i, j + 1)] = ((2.0 * jf + 1.0) * shifted - jf * a[(i, j - 1)]) / (jf + 1.0);
        }
    }
    a
}

/// Operational matrix of differentiation for Legendre polynomials, from
/// `L_j' = sum_{k < j, j - k odd} (2k + 1) L_k`.
pub fn legendre_diff_matrix(degree: usize) -> DMatrix<f64> {
    let n = degree + 1;
    let mut s = DMatrix::zeros(n, n);
    for j in 1..n {
        for k in (0..j).rev().step_by(2) {
            s[(k, j)] = (2 * k + 1) as f64;
        }
    }
    s
}

/// The same matrix obtained as `A^{-1} B A` through the monomial basis.
pub fn legendre_diff_by_conjugation(degree: usize) -> DMatrix<f64> {
    let a = power_to_legendre(degree);
    let ba = power_diff_matrix(degree) * &a;
    a.solve_upper_triangular(&ba)
        .expect("A_J has a positive diagonal")
}

fn univariate_diff(family: Family, degree: usize) -> DMatrix<f64> {
    match family {
        Family::Legendre => legendre_diff_matrix(degree),
        Family::Power => power_diff_matrix(degree),
    }
}

/// `D` with `d^lambda (psi(x) beta) = psi(x) D beta`, chain factors included.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivOperator {
    pub matrix: DMatrix<f64>,
    pub multi_index: Vec<usize>,
    pub chain_factor: f64,
}

impl DerivOperator {
    pub fn order(&self) -> usize {
        self.multi_index.iter().sum()
    }
}

pub fn derivative_operator(spec: &BasisSpec, multi_index: &[usize]) -> Result<DerivOperator> {
    if multi_index.len() != spec.dim() {
        return Err(SieveError::DimensionMismatch {
            expected: spec.dim(),
            found: multi_index.len(),
        });
    }
    let mut chain_factor = 1.0;
    let powers: Vec<DMatrix<f64>> = (0..spec.dim())
        .map(|k| {
            let m = univariate_diff(spec.family, spec.orders[k]);
            let scale = spec.chain_scale(k);
            let mut acc = DMatrix::identity(m.nrows(), m.ncols());
            for _ in 0..multi_index[k] {
                acc = &acc * &m;
                chain_factor *= scale;
            }
            acc
        })
        .collect();
    let idx = spec.multi_indices();
    let p = idx.len();
    let mut d = DMatrix::zeros(p, p);
    for (r, alpha) in idx.iter().enumerate() {
        for (c, gamma) in idx.iter().enumerate() {
            let mut v = chain_factor;
            for k in 0..spec.dim() {
                v *= powers[k][(alpha[k], gamma[k])];
                if v == 0.0 {
                    break;
                }
            }
            d[(r, c)] = v;
        }
    }
    Ok(DerivOperator {
        matrix: d,
        multi_index: multi_index.to_vec(),
        chain_factor,
    })
}

/// Row `psi(x) D` for the derivative `lambda` at `x`.
pub fn derivative_row(spec: &BasisSpec, op: &DerivOperator, x: &[f64]) -> Result<Vec<f64>> {
    let row = basis_row(spec, x)?;
    let p = row.len();
    Ok((0..p)
        .map(|c| (0..p).map(|r| row[r] * op.matrix[(r, c)]).sum())
        .collect())
}

/// `A ⊗ I + I ⊗ B`.
pub fn kronecker_sum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() || !b.is_square() {
        return Err(SieveError::InvalidArgument(
            "kronecker_sum needs square matrices".into(),
        ));
    }
    let ia = DMatrix::<f64>::identity(a.nrows(), a.nrows());
    let ib = DMatrix::<f64>::identity(b.nrows(), b.nrows());
    Ok(a.kronecker(&ib) + ia.kronecker(b))
}

/// All multi-indices of length `d` with total order at most `s`.
pub fn multi_indices_up_to(d: usize, s: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; d];
    fn rec(k: usize, left: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == current.len() {
            out.push(current.clone());
            return;
        }
        for v in 0..=left {
            current[k] = v;
            rec(k + 1, left - v, current, out);
        }
        current[k] = 0;
    }
    rec(0, s, &mut current, &mut out);
    out
}

/// Tensor grid with `resolution` equispaced points per axis, endpoints included.
pub fn domain_grid(spec: &BasisSpec, resolution: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = spec
        .domain()
        .iter()
        .map(|&(a, b)| {
            (0..resolution)
                .map(|i| {
                    if resolution == 1 {
                        0.5 * (a + b)
                    } else if i + 1 == resolution {
                        b
                    } else {
                        a + (b - a) * i as f64 / (resolution - 1) as f64
                    }
                })
                .collect()
        })
        .collect();
    let mut points = vec![Vec::with_capacity(axes.len())];
    for axis in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points
}

/// Grid approximation of `zeta_s(P) = max_{|lambda| <= s} sup_x ||d^lambda psi(x)||`.
///
/// The supremum is taken over a tensor grid that includes the box corners, so
/// the value is a lower bound for the continuous quantity.
pub fn zeta_s(spec: &BasisSpec, s: usize, grid_resolution: usize) -> Result<f64> {
    if grid_resolution < 2 {
        return Err(SieveError::InvalidArgument(
            "grid_resolution must be at least 2".into(),
        ));
    }
    let ops = multi_indices_up_to(spec.dim(), s)
        .into_iter()
        .map(|lambda| derivative_operator(spec, &lambda))
        .collect::<Result<Vec<_>>>()?;
    let mut best: f64 = 0.0;
    for x in domain_grid(spec, grid_resolution) {
        for op in &ops {
            let row = derivative_row(spec, op, &x)?;
            best = best.max(row.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn legendre_values_examples() {
        assert_eq!(eval_legendre(0, 0.37).unwrap(), 1.0);
        assert!(close(eval_legendre(5, 1.0).unwrap(), 1.0, 1e-15));
        assert!(close(eval_legendre(2, 0.5).unwrap(), -0.125, 1e-15));
        assert!(eval_legendre(3, 1.0 + 1e-13).is_ok());
        assert!(matches!(
            eval_legendre(3, 1.01),
            Err(SieveError::OutsideDomain { .. })
        ));
    }

    #[test]
    fn legendre_bounded_on_interval() {
        for j in 0..30 {
            for i in 0..=200 {
                let x = -1.0 + i as f64 / 100.0;
                assert!(eval_legendre(j, x).unwrap().abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn basis_row_examples() {
        let spec = BasisSpec::legendre(vec![1, 1]).unwrap();
        assert_eq!(basis_row(&spec, &[0.5, -1.0]).unwrap(), vec![1.0, -1.0, 0.5, -0.5]);
        let c = BasisSpec::legendre(vec![0]).unwrap();
        assert_eq!(basis_row(&c, &[0.3]).unwrap(), vec![1.0]);
        let pw = BasisSpec::on_unit_box(Family::Power, vec![2]).unwrap();
        assert_eq!(basis_row(&pw, &[0.5]).unwrap(), vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn basis_row_errors() {
        let spec = BasisSpec::legendre(vec![2, 2]).unwrap();
        assert!(matches!(
            basis_row(&spec, &[0.0]),
            Err(SieveError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            basis_row(&spec, &[0.0, 1.5]),
            Err(SieveError::OutsideDomain { axis: 1, .. })
        ));
    }

    #[test]
    fn design_matrix_examples() {
        let spec = BasisSpec::legendre(vec![1]).unwrap();
        let x = DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]);
        let psi = design_matrix(&spec, &x).unwrap();
        assert_eq!(psi, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]));

        let c = BasisSpec::legendre(vec![0]).unwrap();
        let x3 = DMatrix::from_column_slice(3, 1, &[-0.2, 0.1, 0.9]);
        assert_eq!(design_matrix(&c, &x3).unwrap(), DMatrix::from_element(3, 1, 1.0));

        let pw = BasisSpec::new(Family::Power, vec![1], vec![(0.0, 2.0)]).unwrap();
        let x2 = DMatrix::from_column_slice(2, 1, &[0.0, 2.0]);
        assert_eq!(
            design_matrix(&pw, &x2).unwrap(),
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0])
        );
    }

    #[test]
    fn design_matrix_reports_offending_row() {
        let spec = BasisSpec::legendre(vec![1]).unwrap();
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 0.5, 3.0]);
        match design_matrix(&spec, &x) {
            Err(SieveError::AtRow { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn power_diff_examples() {
        assert_eq!(
            power_diff_matrix(2),
            DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 2., 0., 0., 0.])
        );
        assert_eq!(power_diff_matrix(0), DMatrix::from_element(1, 1, 0.0));
        assert_eq!(
            power_diff_matrix(1),
            DMatrix::from_row_slice(2, 2, &[0., 1., 0., 0.])
        );
    }

    #[test]
    fn power_to_legendre_examples() {
        assert_eq!(power_to_legendre(1), DMatrix::identity(2, 2));
        assert_eq!(
            power_to_legendre(2),
            DMatrix::from_row_slice(3, 3, &[1., 0., -0.5, 0., 1., 0., 0., 0., 1.5])
        );
        assert_eq!(power_to_legendre(3)[(1, 3)], -1.5);
        // diagonal (2j)! / (2^j (j!)^2)
        let a = power_to_legendre(10);
        let mut expected = 1.0;
        for j in 0..=10 {
            if j > 0 {
                expected *= (2 * j - 1) as f64 / j as f64;
            }
            assert!(close(a[(j, j)], expected, 1e-12 * expected));
            for i in j + 1..=10 {
                assert_eq!(a[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn legendre_diff_examples() {
        assert_eq!(
            legendre_diff_matrix(1),
            DMatrix::from_row_slice(2, 2, &[0., 1., 0., 0.])
        );
        assert_eq!(
            legendre_diff_matrix(2),
            DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 3., 0., 0., 0.])
        );
        let conj = legendre_diff_by_conjugation(2);
        assert!((conj - legendre_diff_matrix(2)).norm() < 1e-14);
    }

    #[test]
    fn derivative_operator_examples() {
        let spec = BasisSpec::legendre(vec![1, 1]).unwrap();
        let id = derivative_operator(&spec, &[0, 0]).unwrap();
        assert_eq!(id.matrix, DMatrix::identity(4, 4));
        let d = derivative_operator(&spec, &[1, 0]).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[0., 0., 1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 0., 0., 0., 0.],
        );
        assert_eq!(d.matrix, expected);
        let quad = BasisSpec::legendre(vec![2]).unwrap();
        let d2 = derivative_operator(&quad, &[2]).unwrap();
        assert_eq!(
            d2.matrix,
            DMatrix::from_row_slice(3, 3, &[0., 0., 3., 0., 0., 0., 0., 0., 0.])
        );
        assert!(matches!(
            derivative_operator(&quad, &[1, 0]),
            Err(SieveError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn chain_factor_on_scaled_domain() {
        let spec = BasisSpec::new(Family::Legendre, vec![3], vec![(0.0, 4.0)]).unwrap();
        let op = derivative_operator(&spec, &[2]).unwrap();
        assert!(close(op.chain_factor, 0.25, 1e-15));
        // f(x) = L_3(u), u = x/2 - 1  =>  f'' = (1/4) * 15 u
        let beta = [0.0, 0.0, 0.0, 1.0];
        for &x in &[0.3, 1.7, 3.9] {
            let row = derivative_row(&spec, &op, &[x]).unwrap();
            let got: f64 = row.iter().zip(beta).map(|(r, b)| r * b).sum();
            let u = x / 2.0 - 1.0;
            assert!(close(got, 0.25 * 15.0 * u, 1e-12));
        }
    }

    #[test]
    fn kronecker_sum_examples() {
        let s1 = legendre_diff_matrix(1);
        let ks = kronecker_sum(&s1, &s1).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[0., 1., 1., 0., 0., 0., 0., 1., 0., 0., 0., 1., 0., 0., 0., 0.],
        );
        assert_eq!(ks, expected);
        assert_eq!(ks.rank(1e-10), 2);
        let s0 = legendre_diff_matrix(0);
        let s3 = legendre_diff_matrix(3);
        assert_eq!(kronecker_sum(&s3, &s0).unwrap(), s3);
        assert!(kronecker_sum(&DMatrix::zeros(2, 3), &s1).is_err());
    }

    #[test]
    fn zeta_examples() {
        let spec = BasisSpec::legendre(vec![3]).unwrap();
        assert!(close(zeta_s(&spec, 0, 11).unwrap(), 2.0, 1e-12));
        let c = BasisSpec::legendre(vec![0]).unwrap();
        assert!(close(zeta_s(&c, 0, 5).unwrap(), 1.0, 1e-15));
        let bi = BasisSpec::legendre(vec![2, 3]).unwrap();
        assert!(zeta_s(&bi, 1, 9).unwrap() >= zeta_s(&bi, 0, 9).unwrap());
        assert!(zeta_s(&c, 0, 1).is_err());
    }

    #[test]
    fn total_degree_ordering() {
        let spec = BasisSpec::legendre(vec![2, 2])
            .unwrap()
            .with_total_degree(2)
            .unwrap();
        let idx: Vec<Vec<usize>> = spec.multi_indices().to_vec();
        assert_eq!(
            idx,
            vec![
                vec![0, 0],
                vec![1, 0],
                vec![0, 1],
                vec![2, 0],
                vec![1, 1],
                vec![0, 2]
            ]
        );
        for (g, p) in [(2, 6), (3, 10), (4, 15)] {
            let s = BasisSpec::legendre(vec![g, g])
                .unwrap()
                .with_total_degree(g)
                .unwrap();
            assert_eq!(s.len(), p);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(BasisSpec::new(Family::Legendre, vec![], vec![]).is_err());
        assert!(BasisSpec::new(Family::Legendre, vec![1], vec![(1.0, 1.0)]).is_err());
        assert!(BasisSpec::new(Family::Legendre, vec![1, 2], vec![(0.0, 1.0)]).is_err());
    }
}
