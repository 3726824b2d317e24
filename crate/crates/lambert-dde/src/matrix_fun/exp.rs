//! Matrix exponential via scaling-and-squaring with a Pade(13) approximant.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Pade(13,13) coefficients, Higham (2005) style.
const PADE_COEFFS: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA_13: f64 = 5.371_920_351_148_152;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn one_norm(a: &DMatrix<Complex64>) -> f64 {
    let mut max_sum = 0.0_f64;
    for j in 0..a.ncols() {
        let col_sum: f64 = a.column(j).iter().map(|v| v.norm()).sum();
        max_sum = max_sum.max(col_sum);
    }
    max_sum
}

/// Compute exp(A) for a square complex matrix with finite entries.
pub fn mat_exp(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "mat_exp requires a square matrix");
    assert!(
        a.iter().all(|v| v.re.is_finite() && v.im.is_finite()),
        "mat_exp requires finite entries"
    );
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if n == 1 {
        return DMatrix::from_element(1, 1, a[(0, 0)].exp());
    }

    let norm = one_norm(a);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a * c(0.5_f64.powi(s as i32));
    let result = pade13(&scaled);
    // exp(A) = (exp(A/2^s))^(2^s)
    let mut m = result;
    for _ in 0..s {
        m = &m * &m;
    }
    m
}

fn pade13(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = a.nrows();
    let eye = DMatrix::<Complex64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let w1 = &a6 * c(PADE_COEFFS[13]) + &a4 * c(PADE_COEFFS[11]) + &a2 * c(PADE_COEFFS[9]);
    let w2 = &w1 * &a6
        + &a6 * c(PADE_COEFFS[7])
        + &a4 * c(PADE_COEFFS[5])
        + &a2 * c(PADE_COEFFS[3])
        + &eye * c(PADE_COEFFS[1]);
    let u = a * &w2;

    let v1 = &a6 * c(PADE_COEFFS[12]) + &a4 * c(PADE_COEFFS[10]) + &a2 * c(PADE_COEFFS[8]);
    let v = &v1 * &a6
        + &a6 * c(PADE_COEFFS[6])
        + &a4 * c(PADE_COEFFS[4])
        + &a2 * c(PADE_COEFFS[2])
        + &eye * c(PADE_COEFFS[0]);

    let num = &v + &u;
    let den = &v - &u;
    // The denominator is nonsingular whenever the scaled norm is below theta.
    den.lu()
        .solve(&num)
        .expect("Pade denominator must be nonsingular for a scaled matrix")
}
