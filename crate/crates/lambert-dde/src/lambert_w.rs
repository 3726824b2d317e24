//! Scalar Lambert W function on any branch k for complex arguments.
//!
//! `W_k(z)` is the k-th solution of `w * exp(w) = z` under the branch-cut
//! convention of Corless et al.: the principal logarithm is cut along
//! `(-inf, 0]` and branch ranges are closed on their upper boundary.
//! Evaluation polishes an asymptotic (or series) initial guess with
//! Halley's method; real arguments on the two real branches are computed
//! entirely in real arithmetic so they come back exactly real.

use num_complex::Complex64;
use std::f64::consts::{E, PI};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;
/// e^{-1}; the branch point of W sits at z = -1/e.
pub const EXP_NEG1: f64 = 0.367_879_441_171_442_33;
/// Omega constant, W_0(1).
const OMEGA: f64 = 0.567_143_290_409_783_8;
/// W_0'(1) = Omega / (1 + Omega).
const OMEGA_PRIME: f64 = 0.361_896_256_634_889_2;
const MAX_ITER: usize = 100;
/// Sanity bound on branch indices; the asymptotic initial guess degrades
/// gracefully but we refuse indices where 2*pi*k loses precision outright.
const BRANCH_BOUND: i64 = 1_000_000;

fn check_branch(k: i64) -> Result<()> {
    if k.abs() > BRANCH_BOUND {
        return Err(Error::BranchOutOfRange(k));
    }
    Ok(())
}

fn check_finite(z: Complex64) -> Result<()> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::NonFinite("lambert_w argument"));
    }
    Ok(())
}

/// Evaluate the k-th branch of the Lambert W function at z.
///
/// Returns w with `|w*exp(w) - z| <= 1e-12 * max(1, |z|)`. `z = 0` is only
/// defined on the principal branch (`W_k(0)` diverges for k != 0).
pub fn lambert_w(k: i64, z: Complex64) -> Result<Complex64> {
    check_branch(k)?;
    check_finite(z)?;
    // A signed zero imaginary part would flip arg(z) to -pi on the cut;
    // normalize so real inputs take the closure-from-above convention.
    let z = if z.im == 0.0 {
        Complex64::new(z.re, 0.0)
    } else {
        z
    };
    if z.re == 0.0 && z.im == 0.0 {
        return if k == 0 {
            Ok(Complex64::new(0.0, 0.0))
        } else {
            Err(Error::DivergentBranchAtZero(k))
        };
    }
    if z.im == 0.0 {
        if k == 0 && z.re >= -EXP_NEG1 {
            return Ok(Complex64::new(real_w0(z.re)?, 0.0));
        }
        if k == -1 && (-EXP_NEG1..0.0).contains(&z.re) {
            return Ok(Complex64::new(real_wm1(z.re)?, 0.0));
        }
    }
    halley_complex(initial_guess(k, z), z)
}

/// Derivative of the k-th branch: `W/(z(1+W))` away from 0 and the branch
/// point, with the removable value `W_0'(0) = 1`.
pub fn lambert_w_prime(k: i64, z: Complex64) -> Result<Complex64> {
    check_branch(k)?;
    check_finite(z)?;
    if z.re == 0.0 && z.im == 0.0 {
        return if k == 0 {
            Ok(Complex64::new(1.0, 0.0))
        } else {
            Err(Error::DivergentBranchAtZero(k))
        };
    }
    let w = lambert_w(k, z)?;
    let one_plus = w + 1.0;
    // w = -1 forces z = -1/e; the derivative is singular there.
    if one_plus.norm() < 1e-8 {
        return Err(Error::UndefinedDerivativeAtBranchPoint);
    }
    Ok(w / (z * one_plus))
}

/// Branch index of a finite w: the k with `lambert_w(k, w*exp(w)) = w`.
///
/// Candidate `round(Im(w)/2pi)` is verified against its neighbors by round
/// trip, which is robust to the curved branch boundaries near the real axis.
pub fn branch_of(w: Complex64) -> Result<i64> {
    check_finite(w)?;
    let w = if w.im == 0.0 {
        Complex64::new(w.re, 0.0)
    } else {
        w
    };
    let k0 = (w.im / TWO_PI).round() as i64;
    let z = w * w.exp();
    if !z.re.is_finite() || !z.im.is_finite() {
        // exp(w) overflowed; far from the real axis the strips are exact.
        return Ok(k0);
    }
    let tol = 1e-9 * w.norm().max(1.0);
    let mut best = (f64::INFINITY, k0);
    for dk in [0, -1, 1, -2, 2] {
        let k = k0 + dk;
        let Ok(cand) = lambert_w(k, z) else { continue };
        let err = (cand - w).norm();
        if err <= tol {
            return Ok(k);
        }
        if err < best.0 {
            best = (err, k);
        }
    }
    Err(Error::NoConvergence {
        context: "branch_of round-trip verification",
        residual: best.0,
        iterations: 5,
    })
}

/// All real solutions of `w*exp(w) = x` with their branch labels:
/// one on branch 0 for x >= 0, two for -1/e < x < 0, and the double
/// point w = -1 (both labels) at x = -1/e.
pub fn real_branch_select(x: f64) -> Result<Vec<(i64, f64)>> {
    if !x.is_finite() {
        return Err(Error::NonFinite("real_branch_select argument"));
    }
    if x < -EXP_NEG1 {
        return Err(Error::NoRealSolution(x));
    }
    if x >= 0.0 {
        return Ok(vec![(0, real_w0(x)?)]);
    }
    Ok(vec![(0, real_w0(x)?), (-1, real_wm1(x)?)])
}

/// W_0 on its real domain [-1/e, inf); result is >= -1.
fn real_w0(x: f64) -> Result<f64> {
    debug_assert!(x >= -EXP_NEG1);
    if x == 0.0 {
        return Ok(0.0);
    }
    let p2 = 2.0 * (E * x + 1.0);
    let guess = if p2.max(0.0) < 4e-3 {
        let p = p2.max(0.0).sqrt();
        let w = branch_point_series(p);
        if p < 1e-4 {
            return Ok(w.max(-1.0));
        }
        w
    } else if x <= EXP_NEG1 {
        x * (1.0 - x)
    } else if x < 10.0 {
        (1.0 + x).ln()
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    let w = halley_real(guess, x)?;
    Ok(w.max(-1.0))
}

/// W_{-1} on its real domain [-1/e, 0); result is <= -1.
fn real_wm1(x: f64) -> Result<f64> {
    debug_assert!((-EXP_NEG1..0.0).contains(&x));
    let p2 = 2.0 * (E * x + 1.0);
    let guess = if p2.max(0.0) < 4e-3 {
        let p = p2.max(0.0).sqrt();
        let w = branch_point_series(-p);
        if p < 1e-4 {
            return Ok(w.min(-1.0));
        }
        w
    } else {
        let l = (-x).ln();
        l - (-l).ln()
    };
    let w = halley_real(guess, x)?;
    Ok(w.min(-1.0))
}

/// Series about the branch point: w = -1 + p - p^2/3 + 11 p^3/72 - 43 p^4/540,
/// where p = sqrt(2(e z + 1)) and the sign of p selects the sheet.
fn branch_point_series(p: f64) -> f64 {
    -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 + p * (-43.0 / 540.0))))
}

fn branch_point_series_c(p: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    -one + p * (one + p * (-one / 3.0 + p * (one * 11.0 / 72.0 + p * (-43.0 / 540.0))))
}

fn initial_guess(k: i64, z: Complex64) -> Complex64 {
    let near_bp = (z + EXP_NEG1).norm() < 0.3;
    if near_bp && (k == 0 || k == -1 || k == 1) {
        let p = (2.0 * (E * z + 1.0)).sqrt();
        if k == 0 {
            return branch_point_series_c(p);
        }
        // The -p sheet belongs to W_{-1} for Im z >= 0 and to W_1 for Im z < 0;
        // the other (k, half-plane) combinations sit in the bulk of their strip.
        if (k == -1 && z.im >= 0.0) || (k == 1 && z.im < 0.0) {
            return branch_point_series_c(-p);
        }
    }
    if k == 0 {
        if z.norm() <= EXP_NEG1 {
            return z * (Complex64::new(1.0, 0.0) - z);
        }
        let dz1 = z - 1.0;
        if dz1.norm() < 1.2 {
            return Complex64::new(OMEGA, 0.0) + OMEGA_PRIME * dz1;
        }
        if z.norm() <= 0.7 && (z + 0.5).norm() < 0.2 {
            return Complex64::new(0.7, if z.im >= 0.0 { 0.7 } else { -0.7 });
        }
    }
    let l1 = z.ln() + Complex64::new(0.0, TWO_PI * k as f64);
    let l2 = l1.ln();
    l1 - l2 + l2 / l1
}

fn halley_complex(mut w: Complex64, z: Complex64) -> Result<Complex64> {
    // the stop target is relative to |z| itself so that small-|z| branch
    // values come back accurately enough for branch identification
    let target = (1e-14 * z.norm()).max(1e-300);
    let accept = 1e-12 * z.norm().max(1.0);
    let mut best = (f64::INFINITY, w);
    for iter in 0..MAX_ITER {
        let ew = w.exp();
        let wew = w * ew;
        let res = wew - z;
        let rnorm = res.norm();
        if rnorm < best.0 {
            best = (rnorm, w);
        }
        if rnorm <= target {
            return Ok(w);
        }
        let fp = wew + ew;
        let two_w2 = 2.0 * w + 2.0;
        let den = if two_w2.norm() > 1e-12 {
            fp - (w + 2.0) * res / two_w2
        } else {
            fp
        };
        if den.norm() == 0.0 {
            break;
        }
        let step = res / den;
        w -= step;
        if step.norm() <= 1e-16 * (1.0 + w.norm()) {
            let r = (w * w.exp() - z).norm();
            if r < best.0 {
                best = (r, w);
            }
            break;
        }
        if iter == MAX_ITER - 1 {
            let r = (w * w.exp() - z).norm();
            if r < best.0 {
                best = (r, w);
            }
        }
    }
    if best.0 <= accept {
        return Ok(best.1);
    }
    Err(Error::NoConvergence {
        context: "Lambert W Halley polish",
        residual: best.0,
        iterations: MAX_ITER,
    })
}

fn halley_real(mut w: f64, x: f64) -> Result<f64> {
    let target = (1e-14 * x.abs()).max(1e-300);
    let accept = 1e-12 * x.abs().max(1.0);
    let mut best = (f64::INFINITY, w);
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let wew = w * ew;
        let res = wew - x;
        let rnorm = res.abs();
        if rnorm < best.0 {
            best = (rnorm, w);
        }
        if rnorm <= target {
            return Ok(w);
        }
        let fp = wew + ew;
        let two_w2 = 2.0 * w + 2.0;
        let den = if two_w2.abs() > 1e-12 {
            fp - (w + 2.0) * res / two_w2
        } else {
            fp
        };
        if den == 0.0 {
            break;
        }
        let step = res / den;
        w -= step;
        if step.abs() <= 1e-17 * (1.0 + w.abs()) {
            let r = (w * w.exp() - x).abs();
            if r < best.0 {
                best = (r, w);
            }
            break;
        }
    }
    if best.0 <= accept {
        return Ok(best.1);
    }
    Err(Error::NoConvergence {
        context: "Lambert W real Halley polish",
        residual: best.0,
        iterations: MAX_ITER,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Independent oracle: solve w*exp(w) = x by bisection on a real
    /// interval where the map is monotone.
    fn bisect_wexpw(x: f64, mut lo: f64, mut hi: f64) -> f64 {
        let g = |w: f64| w * w.exp() - x;
        assert!(g(lo) * g(hi) <= 0.0, "oracle bracket invalid");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(lo) * g(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn principal_branch_at_zero_is_zero() {
        assert_eq!(lambert_w(0, c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn w0_of_e_is_one() {
        let w = lambert_w(0, c(E, 0.0)).unwrap();
        assert!((w - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn wm1_at_branch_point_is_minus_one() {
        let w = lambert_w(-1, c(-EXP_NEG1, 0.0)).unwrap();
        assert!((w.re + 1.0).abs() < 1e-6, "got {w}");
        assert_eq!(w.im, 0.0);
    }

    #[test]
    fn w0_matches_reported_value() {
        // W(1162.8) appears as the 5.3766 entry of a W(M) matrix.
        let w = lambert_w(0, c(1162.8, 0.0)).unwrap();
        assert!((w.re - 5.3766).abs() < 1e-3, "got {w}");
    }

    #[test]
    fn branch_nine_round_trip() {
        let w = c(2.5693, 52.6026);
        let z = w * w.exp();
        let back = lambert_w(9, z).unwrap();
        assert!((back - w).norm() < 1e-9 * w.norm());
    }

    #[test]
    fn divergent_branches_at_zero() {
        assert!(matches!(
            lambert_w(1, c(0.0, 0.0)),
            Err(Error::DivergentBranchAtZero(1))
        ));
        assert!(matches!(
            lambert_w_prime(-3, c(0.0, 0.0)),
            Err(Error::DivergentBranchAtZero(-3))
        ));
    }

    #[test]
    fn branch_bound_enforced() {
        assert!(matches!(
            lambert_w(2_000_000, c(1.0, 0.0)),
            Err(Error::BranchOutOfRange(_))
        ));
    }

    #[test]
    fn nan_rejected() {
        assert!(lambert_w(0, c(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn prime_at_zero_is_one() {
        assert_eq!(lambert_w_prime(0, c(0.0, 0.0)).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn prime_at_e() {
        let d = lambert_w_prime(0, c(E, 0.0)).unwrap();
        assert!((d - c(1.0 / (2.0 * E), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn prime_matches_central_difference() {
        let z = c(-0.2, 0.0);
        let h = 1e-6;
        let fd = (lambert_w(-1, z + h).unwrap() - lambert_w(-1, z - h).unwrap()) / (2.0 * h);
        let d = lambert_w_prime(-1, z).unwrap();
        assert!((d - fd).norm() / d.norm() < 1e-6, "d={d} fd={fd}");
    }

    #[test]
    fn prime_undefined_at_branch_point() {
        assert!(matches!(
            lambert_w_prime(0, c(-EXP_NEG1, 0.0)),
            Err(Error::UndefinedDerivativeAtBranchPoint)
        ));
        assert!(matches!(
            lambert_w_prime(-1, c(-EXP_NEG1, 0.0)),
            Err(Error::UndefinedDerivativeAtBranchPoint)
        ));
    }

    #[test]
    fn branch_of_examples() {
        assert_eq!(branch_of(c(5.3766, 0.0)).unwrap(), 0);
        assert_eq!(branch_of(c(-1.1692, 0.0)).unwrap(), -1);
        assert_eq!(branch_of(c(2.5693, 52.6026)).unwrap(), 9);
        assert_eq!(branch_of(c(-0.5, 0.0)).unwrap(), 0);
    }

    #[test]
    fn real_branch_select_cases() {
        assert_eq!(real_branch_select(0.0).unwrap(), vec![(0, 0.0)]);

        let both = real_branch_select(-EXP_NEG1).unwrap();
        assert_eq!(both.len(), 2);
        for (_, w) in &both {
            assert!((w + 1.0).abs() < 1e-6);
        }

        // Oracle values for x = -0.2: the map w*exp(w) is monotone on
        // [-1, 0] and on [-20, -1].
        let w0 = bisect_wexpw(-0.2, -1.0, 0.0);
        let wm1 = bisect_wexpw(-0.2, -20.0, -1.0);
        assert!((w0 - (-0.2592)).abs() < 1e-3);
        assert!((wm1 - (-2.5426)).abs() < 1e-3);
        let got = real_branch_select(-0.2).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].0, 0);
        assert_eq!(got[1].0, -1);
        assert!((got[0].1 - w0).abs() < 1e-9);
        assert!((got[1].1 - wm1).abs() < 1e-9);
    }

    #[test]
    fn no_real_solution_below_branch_point() {
        assert!(matches!(
            real_branch_select(-0.4),
            Err(Error::NoRealSolution(_))
        ));
    }

    proptest! {
        #[test]
        fn round_trip_residual(
            k in -20i64..=20,
            logr in -6.0f64..6.0,
            theta in -PI..PI,
        ) {
            let z = Complex64::from_polar(10f64.powf(logr), theta);
            prop_assume!(!(z.re == 0.0 && z.im == 0.0));
            let w = lambert_w(k, z).unwrap();
            let res = (w * w.exp() - z).norm();
            prop_assert!(res <= 1e-12 * z.norm().max(1.0), "res {res} for k={k} z={z}");
        }

        #[test]
        fn branch_partition_round_trip(
            re in -20.0f64..20.0,
            im in -120.0f64..120.0,
        ) {
            let w = c(re, im);
            let k = branch_of(w).unwrap();
            let z = w * w.exp();
            let back = lambert_w(k, z).unwrap();
            prop_assert!((back - w).norm() <= 1e-9 * w.norm().max(1.0), "k={k} w={w} back={back}");
        }

        #[test]
        fn real_ranges(x in -0.367f64..20.0) {
            let w0 = lambert_w(0, c(x, 0.0)).unwrap();
            prop_assert_eq!(w0.im, 0.0);
            prop_assert!(w0.re >= -1.0);
            if x < 0.0 {
                let wm1 = lambert_w(-1, c(x, 0.0)).unwrap();
                prop_assert_eq!(wm1.im, 0.0);
                prop_assert!(wm1.re <= -1.0);
            }
        }

        #[test]
        fn conjugate_symmetry(
            k in -10i64..=10,
            re in -3.0f64..3.0,
            im in 0.05f64..3.0,
        ) {
            // off the cut: strictly complex z
            let z = c(re, im);
            let a = lambert_w(k, z.conj()).unwrap();
            let b = lambert_w(-k, z).unwrap().conj();
            prop_assert!((a - b).norm() <= 1e-9 * b.norm().max(1.0), "k={k} z={z} a={a} b={b}");
        }

        #[test]
        fn derivative_finite_difference(
            k in -5i64..=5,
            re in -3.0f64..3.0,
            im in 0.05f64..3.0,
        ) {
            let z = c(re, im);
            prop_assume!((z + EXP_NEG1).norm() > 0.05);
            let d = lambert_w_prime(k, z).unwrap();
            let h = 1e-6 * z.norm().max(1.0);
            let fd = (lambert_w(k, z + h).unwrap() - lambert_w(k, z - h).unwrap()) / (2.0 * h);
            prop_assert!((d - fd).norm() <= 1e-6 * d.norm().max(1e-6), "d={d} fd={fd}");
        }
    }
}
