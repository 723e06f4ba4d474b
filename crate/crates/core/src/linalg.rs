//! Dense real matrix kernels.
//!
//! Everything here works on [`Matrix`] (`nalgebra::DMatrix<f64>`). The
//! exponential uses nalgebra's Padé scaling-and-squaring, eigenvalues come
//! from its real Schur form and the 2-norm from the SVD.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Imaginary parts up to this multiple of `|λ|` count as real.
pub const REAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("non-finite scalar argument {0}")]
    NonFiniteScalar(f64),
    #[error("leading eigenvalue is not real ({re} + {im}i)")]
    ComplexLeading { re: f64, im: f64 },
    #[error("leading eigenvalue {value} is not simple (multiplicity {multiplicity})")]
    NonSimpleLeading { value: f64, multiplicity: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Unit 2-norm; largest-magnitude entry positive.
    pub vector: Vector,
}

/// Leading eigenvalue together with a basis of its eigenspace.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadingEigenspace {
    pub value: f64,
    pub basis: Vec<Vector>,
}

pub fn check_finite(m: &Matrix) -> Result<(), LinalgError> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Err(LinalgError::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

pub fn check_square(m: &Matrix) -> Result<(), LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

/// `e^{tA}`.
pub fn mat_exp(a: &Matrix, t: f64) -> Result<Matrix, LinalgError> {
    check_square(a)?;
    check_finite(a)?;
    if !t.is_finite() {
        return Err(LinalgError::NonFiniteScalar(t));
    }
    if t == 0.0 {
        return Ok(Matrix::identity(a.nrows(), a.ncols()));
    }
    let scaled = a * t;
    // nalgebra's expm is only exact up to rounding for diagonal input; keep
    // that case analytic.
    if is_diagonal(&scaled) {
        let mut out = Matrix::zeros(a.nrows(), a.ncols());
        for i in 0..a.nrows() {
            out[(i, i)] = scaled[(i, i)].exp();
        }
        return Ok(out);
    }
    Ok(scaled.exp())
}

fn is_diagonal(m: &Matrix) -> bool {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if r != c && m[(r, c)] != 0.0 {
                return false;
            }
        }
    }
    true
}

/// All eigenvalues as `(re, im)` pairs.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<(f64, f64)>, LinalgError> {
    check_square(m)?;
    check_finite(m)?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.nrows() == 1 {
        return Ok(vec![(m[(0, 0)], 0.0)]);
    }
    if m.nrows() == 2 {
        return Ok(eigenvalues_2x2(m));
    }
    Ok(m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect())
}

fn eigenvalues_2x2(m: &Matrix) -> Vec<(f64, f64)> {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let half_tr = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let disc = half_diff * half_diff + b * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        // Avoid cancellation in the smaller root.
        let big = if half_tr >= 0.0 { half_tr + s } else { half_tr - s };
        let det = a * d - b * c;
        let small = if big != 0.0 { det / big } else { half_tr - s };
        vec![(big, 0.0), (small, 0.0)]
    } else {
        let s = (-disc).sqrt();
        vec![(half_tr, s), (half_tr, -s)]
    }
}

/// Maximum modulus over all eigenvalues.
pub fn spectral_radius(m: &Matrix) -> Result<f64, LinalgError> {
    Ok(eigenvalues(m)?
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max))
}

/// Largest singular value.
pub fn operator_2norm(m: &Matrix) -> Result<f64, LinalgError> {
    check_finite(m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0.0);
    }
    if m.nrows() == 2 && m.ncols() == 2 {
        return Ok(norm2_2x2(m));
    }
    Ok(m.singular_values().iter().copied().fold(0.0, f64::max))
}

fn norm2_2x2(m: &Matrix) -> f64 {
    // σ_max² is the larger eigenvalue of MᵀM.
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let p = a * a + c * c;
    let q = b * b + d * d;
    let r = a * b + c * d;
    let half = 0.5 * (p + q);
    let disc = (0.5 * (p - q)).hypot(r);
    (half + disc).max(0.0).sqrt()
}

/// The maximal-modulus eigenvalue and a basis of its eigenspace.
///
/// The leading eigenvalues must be real and all equal, and the eigenvalue
/// must be semisimple (geometric multiplicity equals the cluster size).
pub fn leading_eigenspace(m: &Matrix) -> Result<LeadingEigenspace, LinalgError> {
    let eig = eigenvalues(m)?;
    let d = m.nrows();
    if d == 0 {
        return Err(LinalgError::NotSquare { rows: 0, cols: 0 });
    }
    let rho = eig.iter().map(|&(re, im)| re.hypot(im)).fold(0.0, f64::max);
    let scale = operator_2norm(m)?.max(f64::MIN_POSITIVE);
    if rho <= 1e-14 * scale {
        // Nilpotent-like; every vector of the kernel qualifies, but there is no
        // meaningful direction to grow along.
        return Err(LinalgError::NonSimpleLeading {
            value: 0.0,
            multiplicity: d,
        });
    }
    let cluster_tol = 1e-9 * rho;
    let cluster: Vec<(f64, f64)> = eig
        .iter()
        .copied()
        .filter(|&(re, im)| re.hypot(im) >= rho - cluster_tol)
        .collect();
    for &(re, im) in &cluster {
        if im.abs() > REAL_TOL * re.hypot(im) {
            return Err(LinalgError::ComplexLeading { re, im });
        }
    }
    let value = cluster[0].0;
    if cluster.iter().any(|&(re, _)| (re - value).abs() > 2.0 * cluster_tol) {
        // ±ρ both present.
        return Err(LinalgError::NonSimpleLeading {
            value: rho,
            multiplicity: cluster.len(),
        });
    }
    let value = cluster.iter().map(|c| c.0).sum::<f64>() / cluster.len() as f64;
    let k = cluster.len();

    let shifted = m - Matrix::identity(d, d) * value;
    let svd = shifted.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let null_tol = 1e-8 * scale.max(value.abs());
    let null_dim = order
        .iter()
        .filter(|&&i| svd.singular_values[i] <= null_tol)
        .count()
        .max(1);
    if null_dim < k {
        return Err(LinalgError::NonSimpleLeading {
            value,
            multiplicity: k,
        });
    }
    let nonneg = m.iter().all(|&x| x >= 0.0);
    let basis = order
        .iter()
        .take(k)
        .map(|&i| {
            let v = v_t.row(i).transpose();
            let v = refine_eigenvector(m, value, v);
            normalize_sign(v, nonneg && k == 1)
        })
        .collect();
    Ok(LeadingEigenspace { value, basis })
}

/// A few steps of inverse-free refinement: power steps scaled by `1/λ`
/// contract the subdominant components without moving the leading one.
fn refine_eigenvector(m: &Matrix, value: f64, mut v: Vector) -> Vector {
    for _ in 0..2 {
        let next = m * &v / value;
        let n = next.norm();
        if !n.is_finite() || n == 0.0 {
            break;
        }
        let cand = next / n;
        if (m * &cand - &cand * value).norm() <= (m * &v - &v * value).norm() {
            v = cand;
        } else {
            break;
        }
    }
    v
}

fn normalize_sign(mut v: Vector, clamp_nonneg: bool) -> Vector {
    let n = v.norm();
    if n > 0.0 {
        v /= n;
    }
    let imax = v.iamax();
    if v[imax] < 0.0 {
        v.neg_mut();
    }
    if clamp_nonneg {
        for x in v.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let n = v.norm();
        v /= n;
    }
    v
}

/// The real, simple eigenvalue of maximal modulus and its eigenvector.
pub fn leading_eigenpair(m: &Matrix) -> Result<EigenPair, LinalgError> {
    let space = leading_eigenspace(m)?;
    if space.basis.len() != 1 {
        return Err(LinalgError::NonSimpleLeading {
            value: space.value,
            multiplicity: space.basis.len(),
        });
    }
    Ok(EigenPair {
        value: space.value,
        vector: space.basis.into_iter().next().unwrap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, data.len() / rows, data)
    }

    /// Truncated Taylor series with scaling 2^-20 and squaring.
    fn taylor_exp(a: &Matrix, t: f64) -> Matrix {
        let d = a.nrows();
        let s = 20;
        let x = a * (t / f64::powi(2.0, s));
        let mut term = Matrix::identity(d, d);
        let mut sum = Matrix::identity(d, d);
        for k in 1..=30 {
            term = &term * &x / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    fn example1_a1() -> Matrix {
        let c = 1.0 / (2f64.sqrt() + 2.0);
        m(2, &[0.0, 0.0, c, 0.0])
    }

    fn example1_a2() -> Matrix {
        let c = 1.0 / (2f64.sqrt() + 2.0);
        m(2, &[-2.0 * c, -2.0 * c, -c, -2.0 * c])
    }

    #[test]
    fn exp_at_zero_is_identity() {
        let a = m(3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0]);
        assert_eq!(mat_exp(&a, 0.0).unwrap(), Matrix::identity(3, 3));
    }

    #[test]
    fn exp_of_diagonal() {
        let e = mat_exp(&m(2, &[1.0, 0.0, 0.0, 2.0]), 1.0).unwrap();
        assert_eq!(e[(0, 0)], 1f64.exp());
        assert_eq!(e[(1, 1)], 2f64.exp());
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn exp_matches_taylor_oracle() {
        // Frozen from the Taylor oracle: e^{0.2 A1} = [[1, 0], [0.2c, 1]].
        let c = 1.0 / (2f64.sqrt() + 2.0);
        let e = mat_exp(&example1_a1(), 0.2).unwrap();
        let oracle = taylor_exp(&example1_a1(), 0.2);
        for (x, y) in e.iter().zip(oracle.iter()) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300) + 1e-15);
        }
        assert!((e[(1, 0)] - 0.2 * c).abs() < 1e-15);

        // e^{0.2 A2}: the same Taylor oracle evaluated in 50-digit arithmetic
        // (in f64 the 20 squarings amplify rounding to ~1e-10).
        let e2 = mat_exp(&example1_a2(), 0.2).unwrap();
        let frozen = [
            [0.892_499_123_127_534_7, -0.104_324_229_398_234_85],
            [-0.052_162_114_699_117_426, 0.892_499_123_127_534_7],
        ];
        for r in 0..2 {
            for c in 0..2 {
                let y = frozen[r][c];
                assert!((e2[(r, c)] - y).abs() <= 1e-12 * y.abs(), "{} vs {y}", e2[(r, c)]);
            }
        }
    }

    #[test]
    fn exp_rejects_bad_input() {
        assert!(matches!(
            mat_exp(&Matrix::zeros(2, 3), 1.0),
            Err(LinalgError::NotSquare { .. })
        ));
        assert!(matches!(
            mat_exp(&m(1, &[f64::NAN]), 1.0),
            Err(LinalgError::NonFinite { .. })
        ));
    }

    #[test]
    fn spectral_radius_examples() {
        assert!((spectral_radius(&Matrix::identity(2, 2)).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(spectral_radius(&m(2, &[0.0, 1.0, 0.0, 0.0])).unwrap(), 0.0);
        assert!((spectral_radius(&m(2, &[2.0, 1.0, 1.0, 2.0])).unwrap() - 3.0).abs() < 1e-12);
        let r = spectral_radius(&m(3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 8.0, 0.0, 0.0])).unwrap();
        assert!((r - 2.0).abs() < 1e-9);
    }

    #[test]
    fn two_norm_examples() {
        assert!((operator_2norm(&Matrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-12);
        assert!((operator_2norm(&m(2, &[2.0, 0.0, 0.0, -5.0])).unwrap() - 5.0).abs() < 1e-12);
        assert!((operator_2norm(&m(2, &[0.0, 3.0, 0.0, 0.0])).unwrap() - 3.0).abs() < 1e-12);
        assert!((operator_2norm(&m(3, &[0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn leading_pair_diagonal() {
        let p = leading_eigenpair(&m(2, &[3.0, 0.0, 0.0, 1.0])).unwrap();
        assert!((p.value - 3.0).abs() < 1e-12);
        assert!((p.vector[0] - 1.0).abs() < 1e-12 && p.vector[1].abs() < 1e-12);
    }

    #[test]
    fn leading_pair_rejects_ties_and_rotations() {
        assert!(leading_eigenpair(&m(2, &[0.0, 1.0, 1.0, 0.0])).is_err());
        assert!(matches!(
            leading_eigenpair(&m(2, &[0.0, -1.0, 1.0, 0.0])),
            Err(LinalgError::ComplexLeading { .. })
        ));
    }

    #[test]
    fn scalar_matrix_has_full_eigenspace() {
        let s = leading_eigenspace(&(Matrix::identity(3, 3) * 2.0)).unwrap();
        assert!((s.value - 2.0).abs() < 1e-12);
        assert_eq!(s.basis.len(), 3);
    }

    #[test]
    fn leading_pair_of_nonnegative_is_nonnegative() {
        let a = m(3, &[0.0, 2.0, 0.0, 0.0, 0.0, 3.0, 1.0, 0.5, 0.1]);
        let p = leading_eigenpair(&a).unwrap();
        assert!(p.vector.iter().all(|&x| x >= 0.0));
        let resid = (&a * &p.vector - &p.vector * p.value).norm();
        assert!(resid <= 1e-8 * operator_2norm(&a).unwrap());
    }

    #[test]
    fn leading_pair_matches_power_iteration() {
        // Product e^{mA2}e^{hA2}^7 e^{mA1} e^{hA1}^180, a dominant real pair.
        let (h, mm) = (0.2, 1.0);
        let a1 = example1_a1();
        let a2 = example1_a2();
        let mut prod = Matrix::identity(2, 2);
        let steps = [
            mat_exp(&a1, h).unwrap().pow(180),
            mat_exp(&a1, mm).unwrap(),
            mat_exp(&a2, h).unwrap().pow(7),
            mat_exp(&a2, mm).unwrap(),
        ];
        for s in steps.iter() {
            prod = s * prod;
        }
        let p = leading_eigenpair(&prod).unwrap();
        let mut v = Vector::from_element(2, 1.0);
        let mut lam = 0.0;
        for _ in 0..10_000 {
            let w = &prod * &v;
            lam = w.norm() / v.norm();
            v = w.normalize();
        }
        // this product has a negative dominant eigenvalue
        assert!((p.value.abs() - lam).abs() <= 1e-9 * lam);
        assert!((p.value.abs() - spectral_radius(&prod).unwrap()).abs() <= 1e-9 * lam);
        assert!((p.vector.dot(&v).abs() - 1.0).abs() < 1e-9);
    }

    fn arb_matrix(d: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-2.0f64..2.0, d * d).prop_map(move |v| Matrix::from_vec(d, d, v))
    }

    proptest! {
        #[test]
        fn exp_semigroup(a in arb_matrix(3), s in 0.0f64..1.5, t in 0.0f64..1.5) {
            let lhs = mat_exp(&a, s).unwrap() * mat_exp(&a, t).unwrap();
            let rhs = mat_exp(&a, s + t).unwrap();
            let scale = operator_2norm(&rhs).unwrap();
            prop_assert!(operator_2norm(&(lhs - &rhs)).unwrap() <= 1e-9 * scale);
        }

        #[test]
        fn radius_below_norm(a in arb_matrix(4)) {
            prop_assert!(spectral_radius(&a).unwrap() <= operator_2norm(&a).unwrap() * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn radius_of_powers(a in arb_matrix(3), k in 1u32..=5) {
            let r = spectral_radius(&a).unwrap();
            let rk = spectral_radius(&a.pow(k)).unwrap();
            let expect = r.powi(k as i32);
            // Defective eigenvalues only keep half the digits; skip near-degenerate draws.
            prop_assume!(expect > 1e-3);
            prop_assert!((rk - expect).abs() <= 1e-7 * expect);
        }

        #[test]
        fn eigenpair_residual(a in arb_matrix(4)) {
            if let Ok(p) = leading_eigenpair(&a) {
                let resid = (&a * &p.vector - &p.vector * p.value).norm();
                prop_assert!(resid <= 1e-8 * operator_2norm(&a).unwrap());
                prop_assert!((p.vector.norm() - 1.0).abs() < 1e-12);
            }
        }
    }
}
