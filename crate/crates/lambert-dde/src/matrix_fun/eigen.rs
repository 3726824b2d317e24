//! Dense complex eigendecomposition: closed-form for 2x2, Schur-based for
//! general n. Only what the branch solves need; no balancing heroics.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub struct Eigen {
    pub values: Vec<Complex64>,
    /// Eigenvectors as matrix columns, in the same order as `values`.
    pub vectors: DMatrix<Complex64>,
}

/// Closed-form eigendecomposition of a 2x2 complex matrix.
///
/// Always returns two pairs; for a defective matrix the two eigenvectors
/// coincide (callers detect that through the condition number of V).
pub fn eigen_2x2(h: &DMatrix<Complex64>) -> Eigen {
    assert_eq!((h.nrows(), h.ncols()), (2, 2));
    let a = h[(0, 0)];
    let b = h[(0, 1)];
    let c = h[(1, 0)];
    let d = h[(1, 1)];
    let tr = a + d;
    let det = a * d - b * c;
    let disc = tr * tr - 4.0 * det;
    let s = disc.sqrt();
    // pick the sign that avoids cancellation in tr +/- s
    let s = if (tr.conj() * s).re >= 0.0 { s } else { -s };
    let l1 = 0.5 * (tr + s);
    let l2 = if l1.norm() > 0.0 { det / l1 } else { tr - l1 };

    let mut vectors = DMatrix::<Complex64>::zeros(2, 2);
    for (idx, lam) in [l1, l2].into_iter().enumerate() {
        let v_row1 = DVector::from_vec(vec![b, lam - a]);
        let v_row2 = DVector::from_vec(vec![lam - d, c]);
        let v = if v_row1.norm() >= v_row2.norm() {
            v_row1
        } else {
            v_row2
        };
        let v = if v.norm() <= 1e-300 {
            // diagonal matrix: coordinate eigenvectors
            let mut e = DVector::zeros(2);
            e[idx] = Complex64::new(1.0, 0.0);
            e
        } else {
            let n = v.norm();
            v / Complex64::new(n, 0.0)
        };
        vectors.set_column(idx, &v);
    }
    Eigen {
        values: vec![l1, l2],
        vectors,
    }
}

/// Eigendecomposition for general n: complex Schur form for the values,
/// triangular back-substitution mapped through Q for the vectors.
pub fn eigen(h: &DMatrix<Complex64>) -> Result<Eigen> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(Error::ShapeUnsupported(format!(
            "eigendecomposition of a {}x{} matrix",
            h.nrows(),
            h.ncols()
        )));
    }
    if !h.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::NonFinite("eigendecomposition input"));
    }
    match n {
        0 => Ok(Eigen {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        }),
        1 => Ok(Eigen {
            values: vec![h[(0, 0)]],
            vectors: DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
        }),
        2 => Ok(eigen_2x2(h)),
        _ => eigen_schur(h),
    }
}

fn eigen_schur(h: &DMatrix<Complex64>) -> Result<Eigen> {
    let n = h.nrows();
    let schur = h
        .clone()
        .try_schur(1e-14, 100_000)
        .ok_or(Error::NoConvergence {
            context: "Schur iteration",
            residual: f64::NAN,
            iterations: 100_000,
        })?;
    let (q, t) = schur.unpack();
    let values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    let tnorm = t.norm().max(1e-300);

    // Back-substitute (T - lambda_i I) y = 0 on the leading block, then map
    // through Q. Near-singular pivots (clustered eigenvalues) are floored.
    let mut vectors = DMatrix::<Complex64>::zeros(n, n);
    for (i, &lam) in values.iter().enumerate() {
        let mut y = DVector::<Complex64>::zeros(n);
        y[i] = Complex64::new(1.0, 0.0);
        for j in (0..i).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in (j + 1)..=i {
                acc += t[(j, l)] * y[l];
            }
            let mut den = t[(j, j)] - lam;
            if den.norm() < 1e-15 * tnorm {
                den = Complex64::new(1e-15 * tnorm, 0.0);
            }
            y[j] = -acc / den;
        }
        let v = &q * y;
        let norm = v.norm();
        vectors.set_column(i, &(v / Complex64::new(norm, 0.0)));
    }
    Ok(Eigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pair_residual(h: &DMatrix<Complex64>, dec: &Eigen) -> f64 {
        let mut worst = 0.0_f64;
        for (i, &lam) in dec.values.iter().enumerate() {
            let v = dec.vectors.column(i);
            let r = (h * v - v * lam).norm();
            worst = worst.max(r);
        }
        worst
    }

    #[test]
    fn paper_dominant_pair_matrix() {
        let s = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(-3.2096, 0.0), c(0.0753, 0.0)]);
        let dec = eigen_2x2(&s);
        let mut values = dec.values.clone();
        values.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((values[1] - c(0.0377, 1.7911)).norm() < 1e-3, "{values:?}");
        assert!((values[0] - c(0.0377, -1.7911)).norm() < 1e-3);
        assert!(pair_residual(&s, &dec) < 1e-10 * s.norm());
    }

    #[test]
    fn identity_eigenvalues() {
        let i2 = DMatrix::<Complex64>::identity(2, 2);
        let dec = eigen_2x2(&i2);
        for v in dec.values {
            assert!((v - c(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn companion_real_roots() {
        // companion of (x-2)(x-3)
        let m = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(-6.0, 0.0), c(5.0, 0.0)]);
        let dec = eigen_2x2(&m);
        let mut vals: Vec<f64> = dec.values.iter().map(|v| v.re).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((vals[0] - 2.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
        assert!(pair_residual(&m, &dec) < 1e-12);
    }

    #[test]
    fn general_3x3() {
        let h = DMatrix::from_row_slice(
            3,
            3,
            &[
                c(1.0, 0.2),
                c(0.5, 0.0),
                c(0.0, -0.3),
                c(0.0, 0.0),
                c(-2.0, 0.0),
                c(1.0, 1.0),
                c(0.3, 0.0),
                c(0.0, 0.1),
                c(0.7, -0.5),
            ],
        );
        let dec = eigen(&h).unwrap();
        assert_eq!(dec.values.len(), 3);
        assert!(pair_residual(&h, &dec) < 1e-10 * h.norm(), "res {}", pair_residual(&h, &dec));
    }
}
