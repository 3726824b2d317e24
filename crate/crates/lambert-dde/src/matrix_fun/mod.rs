//! Matrix Lambert W for the shapes the branch method needs: diagonalizable
//! matrices, the structured 2x2 form M = [[0,0],[m21,m22]], and 2x2 Jordan
//! blocks, always under the hybrid-branch rule (branch 0 on zero
//! eigenvalues, branch k elsewhere).

mod eigen;
mod exp;

pub use eigen::{eigen, eigen_2x2, Eigen};
pub use exp::mat_exp;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lambert_w::{lambert_w, lambert_w_prime, EXP_NEG1};

/// Eigenvector-matrix condition number above which a matrix is treated as
/// defective rather than diagonalized.
const COND_LIMIT: f64 = 1e8;

/// The two free entries of M = [[0,0],[m21,m22]], the shape tau*B*Q takes
/// when B has a zero first row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuredM {
    pub m21: Complex64,
    pub m22: Complex64,
}

impl StructuredM {
    pub fn new(m21: Complex64, m22: Complex64) -> Self {
        Self { m21, m22 }
    }

    pub fn to_matrix(self) -> DMatrix<Complex64> {
        let zero = Complex64::new(0.0, 0.0);
        DMatrix::from_row_slice(2, 2, &[zero, zero, self.m21, self.m22])
    }

    /// Reinterpret a 2x2 matrix whose first row vanishes (relative to the
    /// matrix scale) as a structured M.
    pub fn from_matrix(m: &DMatrix<Complex64>) -> Option<Self> {
        if m.nrows() != 2 || m.ncols() != 2 {
            return None;
        }
        let scale = m.norm();
        if m[(0, 0)].norm() <= 1e-14 * scale && m[(0, 1)].norm() <= 1e-14 * scale {
            Some(Self::new(m[(1, 0)], m[(1, 1)]))
        } else {
            None
        }
    }
}

pub fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

fn all_finite(m: &DMatrix<Complex64>) -> bool {
    m.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

/// Closed-form W_k of a structured M.
///
/// For m22 != 0 this is [[0,0],[(m21/m22) W_k(m22), W_k(m22)]]; the zero
/// eigenvalue contributes the zero first row (hybrid rule). For m22 = 0 the
/// matrix is nilpotent and W is M itself on the forced branch 0.
pub fn structured_lambert_w(k: i64, m: StructuredM) -> Result<DMatrix<Complex64>> {
    let zero = Complex64::new(0.0, 0.0);
    if m.m22.norm() == 0.0 {
        return Ok(DMatrix::from_row_slice(2, 2, &[zero, zero, m.m21, zero]));
    }
    let w = lambert_w(k, m.m22)?;
    let w21 = m.m21 / m.m22 * w;
    Ok(DMatrix::from_row_slice(2, 2, &[zero, zero, w21, w]))
}

/// Matrix Lambert W on branch k: returns W with W*exp(W) = H.
///
/// Zero eigenvalues are evaluated on branch 0 regardless of k. Supported
/// shapes: diagonalizable H (any n), the structured 2x2 form, and 2x2
/// matrices with a double eigenvalue (W extended by its derivative unless
/// the eigenvalue sits at a branch-point value).
pub fn matrix_lambert_w(k: i64, h: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let n = h.nrows();
    if n != h.ncols() || n == 0 {
        return Err(Error::ShapeUnsupported(format!(
            "matrix Lambert W of a {}x{} matrix",
            h.nrows(),
            h.ncols()
        )));
    }
    if !all_finite(h) {
        return Err(Error::NonFinite("matrix Lambert W input"));
    }
    let hnorm = h.norm();
    if hnorm == 0.0 {
        // hybrid rule: W_0(0) = 0 on every branch
        return Ok(DMatrix::zeros(n, n));
    }
    let zero_tol = 1e-12 * hnorm;
    let branch_for = |lam: Complex64| if lam.norm() <= zero_tol { 0 } else { k };

    if n == 1 {
        let lam = h[(0, 0)];
        let w = lambert_w(branch_for(lam), lam)?;
        return Ok(DMatrix::from_element(1, 1, w));
    }

    if n == 2 {
        if let Some(m) = StructuredM::from_matrix(h) {
            return structured_lambert_w(k, m);
        }
        let dec = eigen_2x2(h);
        let sep = (dec.values[0] - dec.values[1]).norm();
        if sep <= 1e-9 * hnorm {
            return double_eigenvalue_2x2(k, h, 0.5 * (dec.values[0] + dec.values[1]), zero_tol);
        }
        return via_eigen(k, h, &dec, hnorm, branch_for);
    }

    let dec = eigen(h)?;
    via_eigen(k, h, &dec, hnorm, branch_for)
}

/// W of H = lambda*I + N with N = H - lambda*I nilpotent (every 2x2 with a
/// double eigenvalue has this form): W(H) = W(lambda) I + W'(lambda) N.
fn double_eigenvalue_2x2(
    k: i64,
    h: &DMatrix<Complex64>,
    lam: Complex64,
    zero_tol: f64,
) -> Result<DMatrix<Complex64>> {
    let nilpotent = h - DMatrix::<Complex64>::identity(2, 2) * lam;
    if lam.norm() <= zero_tol {
        // hybrid rule: a nilpotent block evaluates on branch 0, where the
        // series truncates to W(N) = N
        return Ok(nilpotent);
    }
    if nilpotent.norm() <= 1e-14 * h.norm() {
        let w = lambert_w(if lam.norm() <= zero_tol { 0 } else { k }, lam)?;
        return Ok(DMatrix::<Complex64>::identity(2, 2) * w);
    }
    // Both +/- 1/e are flagged: the derivative of W is singular at the
    // branch point -1/e, and e^{-1} is excluded alongside it.
    if k == 0 && ((lam - EXP_NEG1).norm() < 1e-9 || (lam + EXP_NEG1).norm() < 1e-9) {
        return Err(Error::BranchPointJordanBlock(k));
    }
    let w = lambert_w(k, lam)?;
    if (w + 1.0).norm() < 1e-8 {
        return Err(Error::BranchPointJordanBlock(k));
    }
    let wp = lambert_w_prime(k, lam)?;
    Ok(DMatrix::<Complex64>::identity(2, 2) * w + nilpotent * wp)
}

fn via_eigen(
    k: i64,
    h: &DMatrix<Complex64>,
    dec: &Eigen,
    hnorm: f64,
    branch_for: impl Fn(Complex64) -> i64,
) -> Result<DMatrix<Complex64>> {
    let v = &dec.vectors;
    let vinv = match v.clone().lu().try_inverse() {
        Some(inv) => inv,
        None => return Err(defective_error(k, &dec.values, f64::INFINITY)),
    };
    let cond = v.norm() * vinv.norm();
    if cond > COND_LIMIT {
        return Err(defective_error(k, &dec.values, cond));
    }
    let mut w_diag = Vec::with_capacity(dec.values.len());
    for &lam in &dec.values {
        w_diag.push(lambert_w(branch_for(lam), lam)?);
    }
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(w_diag));
    let w = v * d * vinv;
    let residual = (&w * mat_exp(&w) - h).norm();
    if residual > 1e-9 * hnorm.max(1.0) {
        return Err(Error::NoConvergence {
            context: "matrix Lambert W defining-equation residual",
            residual,
            iterations: 0,
        });
    }
    Ok(w)
}

fn defective_error(k: i64, values: &[Complex64], cond: f64) -> Error {
    // Clustered eigenvalues at +/- 1/e are the branch-point caveat rather
    // than a generic defective failure.
    if k == 0 {
        let near_bp = values.iter().any(|lam| {
            (lam - EXP_NEG1).norm() < 1e-6 || (lam + EXP_NEG1).norm() < 1e-6
        });
        if near_bp {
            return Error::BranchPointJordanBlock(k);
        }
    }
    Error::DefectiveUnsupported(cond)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn residual(w: &DMatrix<Complex64>, h: &DMatrix<Complex64>) -> f64 {
        (w * mat_exp(w) - h).norm()
    }

    #[test]
    fn w_of_zero_matrix_is_zero() {
        let z = DMatrix::<Complex64>::zeros(2, 2);
        assert_eq!(matrix_lambert_w(0, &z).unwrap(), z);
        assert_eq!(matrix_lambert_w(3, &z).unwrap(), z);
    }

    #[test]
    fn reported_m_matrix_recovers_reported_w() {
        // H is the M matrix whose W has entries 8.9521 and 5.3766.
        let ratio = 1162.8 / 5.3766;
        let h = DMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(0.0, 0.0), c(8.9521 * ratio, 0.0), c(1162.8, 0.0)],
        );
        let w = matrix_lambert_w(0, &h).unwrap();
        assert!((w[(1, 0)] - c(8.9521, 0.0)).norm() < 1e-3, "{}", w[(1, 0)]);
        assert!((w[(1, 1)] - c(5.3766, 0.0)).norm() < 1e-3);
        assert!(w[(0, 0)].norm() == 0.0 && w[(0, 1)].norm() == 0.0);
        assert!(residual(&w, &h) < 1e-9 * h.norm().max(1.0));
    }

    #[test]
    fn nilpotent_structured_is_identity_map() {
        let h = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(7.0, 0.0), c(0.0, 0.0)]);
        let w = matrix_lambert_w(0, &h).unwrap();
        assert_eq!(w, h);
        assert!(residual(&w, &h) < 1e-12);
    }

    #[test]
    fn structured_closed_form_branch_minus_one() {
        let w22 = c(-1.1692, 0.0);
        let m22 = w22 * w22.exp();
        let m21 = m22 * (-967.2027 / -1.1692);
        let w = structured_lambert_w(-1, StructuredM::new(m21, m22)).unwrap();
        assert!((w[(1, 0)] - c(-967.2027, 0.0)).norm() < 1e-3, "{}", w[(1, 0)]);
        assert!((w[(1, 1)] - c(-1.1692, 0.0)).norm() < 1e-3);
    }

    #[test]
    fn structured_trivial_cases() {
        let w = structured_lambert_w(0, StructuredM::new(c(7.0, 0.0), c(0.0, 0.0))).unwrap();
        let expected =
            DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(7.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(w, expected);
        let w = structured_lambert_w(0, StructuredM::new(c(0.0, 0.0), c(std::f64::consts::E, 0.0))).unwrap();
        assert!((w[(1, 1)] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(w[(1, 0)].norm() < 1e-12);
    }

    #[test]
    fn double_eigenvalue_block_uses_derivative() {
        let h = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        let w = matrix_lambert_w(0, &h).unwrap();
        assert!(residual(&w, &h) < 1e-9 * h.norm());
    }

    #[test]
    fn branch_point_jordan_block_rejected() {
        for lam in [-EXP_NEG1, EXP_NEG1] {
            let h = DMatrix::from_row_slice(2, 2, &[c(lam, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(lam, 0.0)]);
            assert!(matches!(
                matrix_lambert_w(0, &h),
                Err(Error::BranchPointJordanBlock(0))
            ));
        }
    }

    #[test]
    fn defective_3x3_unsupported() {
        let h = DMatrix::from_row_slice(
            3,
            3,
            &[
                c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0),
                c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0),
                c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0),
            ],
        );
        assert!(matches!(
            matrix_lambert_w(0, &h),
            Err(Error::DefectiveUnsupported(_))
        ));
    }

    #[test]
    fn diagonalizable_3x3_round_trip() {
        let h = DMatrix::from_row_slice(
            3,
            3,
            &[
                c(1.0, 0.0), c(0.4, 0.1), c(0.0, 0.0),
                c(0.0, 0.2), c(2.5, 0.0), c(0.3, 0.0),
                c(0.1, 0.0), c(0.0, 0.0), c(4.0, 1.0),
            ],
        );
        let w = matrix_lambert_w(2, &h).unwrap();
        assert!(residual(&w, &h) < 1e-9 * h.norm().max(1.0));
    }

    proptest! {
        #[test]
        fn defining_equation_on_random_diagonalizable(
            l1re in -3.0f64..3.0, l1im in 0.1f64..3.0,
            l2re in -3.0f64..3.0, l2im in -3.0f64..-0.1,
            k in -5i64..=5,
        ) {
            // construct H from a known well-conditioned eigenbasis
            let v = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.3, 0.1), c(-0.2, 0.0), c(1.0, 0.0)]);
            let vinv = v.clone().lu().try_inverse().unwrap();
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(l1re, l1im), c(l2re, l2im)]));
            let h = &v * d * &vinv;
            prop_assume!((c(l1re, l1im) - c(l2re, l2im)).norm() > 1e-3);
            let w = matrix_lambert_w(k, &h).unwrap();
            let res = residual(&w, &h);
            prop_assert!(res <= 1e-9 * h.norm().max(1.0), "res {res}");
        }

        #[test]
        fn structured_agrees_with_eigen_route(
            m21re in -50.0f64..50.0, m21im in -50.0f64..50.0,
            m22re in -50.0f64..50.0, m22im in -50.0f64..50.0,
            k in -3i64..=3,
        ) {
            let m22 = c(m22re, m22im);
            prop_assume!(m22.norm() > 1e-2);
            let m = StructuredM::new(c(m21re, m21im), m22);
            let h = m.to_matrix();
            let ws = structured_lambert_w(k, m).unwrap();
            // independent path: eigendecomposition route
            let dec = eigen_2x2(&h);
            let vinv = dec.vectors.clone().lu().try_inverse().unwrap();
            let cond = dec.vectors.norm() * vinv.norm();
            prop_assume!(cond < 1e6);
            let mut diag = Vec::new();
            for lam in dec.values {
                let kk = if lam.norm() <= 1e-12 * h.norm() { 0 } else { k };
                diag.push(lambert_w(kk, lam).unwrap());
            }
            let we = &dec.vectors * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)) * vinv;
            let rel = (&ws - &we).norm() / we.norm().max(1.0);
            prop_assert!(rel < 1e-8, "rel {rel}");
        }
    }
}
