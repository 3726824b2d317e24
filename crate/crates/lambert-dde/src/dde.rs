//! System model for x'(t) = A x(t) + B x(t - tau) and the residuals the
//! branch method is checked against: the characteristic matrix/function,
//! the solution-equation residual, and the branch-equation residual.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_fun::{complexify, mat_exp, matrix_lambert_w};

/// A linear time-invariant time-delay system: real A, B and delay tau > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DdeSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    tau: f64,
}

/// JSON wire format: {"A": [[...]], "B": [[...]], "tau": t}, row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemJson {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub tau: f64,
}

impl DdeSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, tau: f64) -> Result<Self> {
        if a.nrows() == 0 || a.nrows() != a.ncols() {
            return Err(Error::InvalidSystem(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.shape() != b.shape() {
            return Err(Error::InvalidSystem(format!(
                "A and B must have the same shape, got {:?} vs {:?}",
                a.shape(),
                b.shape()
            )));
        }
        if !a.iter().chain(b.iter()).all(|x| x.is_finite()) {
            return Err(Error::InvalidSystem("A or B has non-finite entries".into()));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidSystem(format!("tau must be positive, got {tau}")));
        }
        Ok(Self { a, b, tau })
    }

    pub fn from_parts_2x2(a: [f64; 4], b: [f64; 4], tau: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_row_slice(2, 2, &a),
            DMatrix::from_row_slice(2, 2, &b),
            tau,
        )
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn to_json(&self) -> SystemJson {
        let rows = |m: &DMatrix<f64>| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect()
        };
        SystemJson {
            a: rows(&self.a),
            b: rows(&self.b),
            tau: self.tau,
        }
    }

    pub fn from_json(json: &SystemJson) -> Result<Self> {
        let build = |rows: &Vec<Vec<f64>>, name: &str| -> Result<DMatrix<f64>> {
            let n = rows.len();
            if n == 0 || rows.iter().any(|r| r.len() != n) {
                return Err(Error::InvalidSystem(format!("{name} must be a square array of arrays")));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            Ok(DMatrix::from_row_slice(n, n, &flat))
        };
        Self::new(build(&json.a, "A")?, build(&json.b, "B")?, json.tau)
    }

    /// Characteristic matrix Delta(lambda) = lambda*I - A - B e^{-lambda*tau}.
    pub fn char_matrix(&self, lambda: Complex64) -> DMatrix<Complex64> {
        let n = self.dim();
        let e = (-lambda * self.tau).exp();
        let mut d = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut v = -Complex64::new(self.a[(i, j)], 0.0) - e * self.b[(i, j)];
                if i == j {
                    v += lambda;
                }
                d[(i, j)] = v;
            }
        }
        d
    }

    /// det(Delta(lambda)); zeros are the characteristic roots.
    pub fn char_function(&self, lambda: Complex64) -> Complex64 {
        let n = self.dim();
        let e = (-lambda * self.tau).exp();
        match n {
            1 => lambda - self.a[(0, 0)] - e * self.b[(0, 0)],
            2 => {
                let d00 = lambda - self.a[(0, 0)] - e * self.b[(0, 0)];
                let d01 = -self.a[(0, 1)] - e * self.b[(0, 1)];
                let d10 = -self.a[(1, 0)] - e * self.b[(1, 0)];
                let d11 = lambda - self.a[(1, 1)] - e * self.b[(1, 1)];
                d00 * d11 - d01 * d10
            }
            _ => self.char_matrix(lambda).lu().determinant(),
        }
    }

    /// Hadamard-style magnitude scale for |char_function| at lambda: the
    /// product of the row norms of Delta(lambda), floored at 1.
    pub fn char_scale(&self, lambda: Complex64) -> f64 {
        let d = self.char_matrix(lambda);
        let mut scale = 1.0_f64;
        for i in 0..d.nrows() {
            scale *= d.row(i).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        }
        scale.max(1.0)
    }

    /// Residual of the solution equation: S - A - B exp(-S tau).
    pub fn residual_solution(&self, s: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
        if s.shape() != self.a.shape() {
            return Err(Error::ShapeUnsupported(format!(
                "S must match the system dimension {}, got {}x{}",
                self.dim(),
                s.nrows(),
                s.ncols()
            )));
        }
        let exp_ms = mat_exp(&(-s * Complex64::new(self.tau, 0.0)));
        Ok(s - complexify(&self.a) - complexify(&self.b) * exp_ms)
    }

    /// Residual of the branch equation: W_k(M) exp(W_k(M) + A tau) - tau B.
    pub fn residual_branch(&self, k: i64, m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
        let w = matrix_lambert_w(k, m)?;
        Ok(self.residual_branch_from_w(&w))
    }

    pub(crate) fn residual_branch_from_w(&self, w: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let a_tau = complexify(&self.a) * Complex64::new(self.tau, 0.0);
        w * mat_exp(&(w + a_tau)) - complexify(&self.b) * Complex64::new(self.tau, 0.0)
    }

    /// S_k = (1/tau) W_k(M) + A; its eigenvalues are candidate roots.
    pub fn s_from_m(&self, k: i64, m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
        let w = matrix_lambert_w(k, m)?;
        Ok(w / Complex64::new(self.tau, 0.0) + complexify(&self.a))
    }
}

/// View of a system in the companion special shape
/// A = [[0,1],[a21,a22]], B = [[0,0],[b21,b22]].
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionDde {
    system: DdeSystem,
}

impl CompanionDde {
    pub fn new(a21: f64, a22: f64, b21: f64, b22: f64, tau: f64) -> Result<Self> {
        let system = DdeSystem::from_parts_2x2([0.0, 1.0, a21, a22], [0.0, 0.0, b21, b22], tau)?;
        Ok(Self { system })
    }

    /// Validate that an existing system has exactly the companion structure.
    pub fn from_system(sys: &DdeSystem) -> Result<Self> {
        if sys.dim() != 2 {
            return Err(Error::InvalidSystem(format!(
                "companion form requires a 2x2 system, got {}x{}",
                sys.dim(),
                sys.dim()
            )));
        }
        let a = sys.a();
        let b = sys.b();
        if a[(0, 0)] != 0.0 || a[(0, 1)] != 1.0 {
            return Err(Error::InvalidSystem(
                "companion form requires A = [[0,1],[a21,a22]]".into(),
            ));
        }
        if b[(0, 0)] != 0.0 || b[(0, 1)] != 0.0 {
            return Err(Error::InvalidSystem(
                "companion form requires B = [[0,0],[b21,b22]]".into(),
            ));
        }
        Ok(Self {
            system: sys.clone(),
        })
    }

    pub fn system(&self) -> &DdeSystem {
        &self.system
    }

    pub fn a21(&self) -> f64 {
        self.system.a()[(1, 0)]
    }

    pub fn a22(&self) -> f64 {
        self.system.a()[(1, 1)]
    }

    pub fn b21(&self) -> f64 {
        self.system.b()[(1, 0)]
    }

    pub fn b22(&self) -> f64 {
        self.system.b()[(1, 1)]
    }

    pub fn tau(&self) -> f64 {
        self.system.tau()
    }
}

/// The first worked system of the study: a second-order plant under
/// delayed state feedback with tau = 5.
pub fn example_system_1() -> DdeSystem {
    DdeSystem::from_parts_2x2([0.0, 1.0, -5.0, -1.0], [0.0, 0.0, -3.0, -0.6], 5.0).unwrap()
}

/// The second worked system: characteristic equation lambda^2 + 1 - e^{-lambda},
/// with a single real root at the origin.
pub fn example_system_2() -> DdeSystem {
    DdeSystem::from_parts_2x2([0.0, 1.0, -1.0, 0.0], [0.0, 0.0, 1.0, 0.0], 1.0).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Test-only exponential: scaled Taylor series, independent of the
    /// Pade path used by mat_exp.
    fn taylor_exp(x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let n = x.nrows();
        let s = 10u32;
        let xs = x * Complex64::new(0.5_f64.powi(s as i32), 0.0);
        let mut sum = DMatrix::<Complex64>::identity(n, n);
        let mut term = DMatrix::<Complex64>::identity(n, n);
        for k in 1..30 {
            term = &term * &xs / Complex64::new(k as f64, 0.0);
            sum += &term;
        }
        let mut m = sum;
        for _ in 0..s {
            m = &m * &m;
        }
        m
    }

    #[test]
    fn char_function_zero_at_origin_for_system_2() {
        let sys = example_system_2();
        let f = sys.char_function(c(0.0, 0.0));
        assert_eq!(f, c(0.0, 0.0));
    }

    #[test]
    fn char_function_reduces_without_delay_term() {
        let sys = DdeSystem::from_parts_2x2([0.0, 1.0, -6.0, 5.0], [0.0; 4], 1.0).unwrap();
        let lam = c(0.3, -0.7);
        let f = sys.char_function(lam);
        // det(lambda I - A) for the companion of (x-2)(x-3)
        let expected = (lam - 2.0) * (lam - 3.0);
        assert!((f - expected).norm() < 1e-13);
    }

    #[test]
    fn char_function_small_at_reported_dominant_root() {
        let sys = example_system_1();
        let f = sys.char_function(c(0.0377, 1.7911));
        assert!(f.norm() <= 1e-2, "|f| = {}", f.norm());
    }

    #[test]
    fn residual_solution_small_for_reported_s() {
        let sys = example_system_1();
        let s = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(-3.2096, 0.0), c(0.0753, 0.0)]);
        let r = sys.residual_solution(&s).unwrap();
        assert!(r.norm() <= 1e-2, "residual {}", r.norm());
    }

    #[test]
    fn residual_solution_zero_without_delay() {
        let sys = DdeSystem::from_parts_2x2([1.0, 2.0, 3.0, 4.0], [0.0; 4], 2.0).unwrap();
        let s = complexify(sys.a());
        let r = sys.residual_solution(&s).unwrap();
        assert!(r.norm() < 1e-14);
    }

    #[test]
    fn residual_branch_small_at_reported_m() {
        let sys = example_system_1();
        let m = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(1936.1, 0.0), c(1162.8, 0.0)]);
        let r = sys.residual_branch(0, &m).unwrap();
        let scale = (complexify(sys.b()) * Complex64::new(sys.tau(), 0.0)).norm();
        assert!(r.norm() <= 1e-1 * scale, "residual {} scale {}", r.norm(), scale);
    }

    #[test]
    fn residual_branch_zero_for_zero_m_without_delay_term() {
        let sys = DdeSystem::from_parts_2x2([0.0, 1.0, -2.0, -3.0], [0.0; 4], 1.5).unwrap();
        let m = DMatrix::<Complex64>::zeros(2, 2);
        let r = sys.residual_branch(0, &m).unwrap();
        assert!(r.norm() < 1e-14);
    }

    #[test]
    fn s_from_m_matches_reported_matrices() {
        let sys = example_system_1();
        // dominant pair: W(M) = [[0,0],[8.9521,5.3766]] -> S = [[0,1],[-3.2096,0.0753]]
        let w22 = c(5.3766, 0.0);
        let m22 = w22 * w22.exp();
        let m21 = m22 * (8.9521 / 5.3766);
        let m = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), m21, m22]);
        let s = sys.s_from_m(0, &m).unwrap();
        assert!((s[(1, 0)] - c(-3.2096, 0.0)).norm() < 1e-3, "{}", s[(1, 0)]);
        assert!((s[(1, 1)] - c(0.0753, 0.0)).norm() < 1e-3);
        assert!(s[(0, 0)].norm() < 1e-12);
        assert!((s[(0, 1)] - c(1.0, 0.0)).norm() < 1e-12);

        // k = -1 pair: W(M) = [[0,0],[-967.2027,-1.1692]] -> S = [[0,1],[-198.4405,-1.2338]]
        let w22 = c(-1.1692, 0.0);
        let m22 = w22 * w22.exp();
        let m21 = m22 * (-967.2027 / -1.1692);
        let m = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), m21, m22]);
        let s = sys.s_from_m(-1, &m).unwrap();
        assert!((s[(1, 0)] - c(-198.4405, 0.0)).norm() < 1e-3, "{}", s[(1, 0)]);
        assert!((s[(1, 1)] - c(-1.2338, 0.0)).norm() < 1e-3);
    }

    #[test]
    fn s_from_m_zero_gives_a() {
        let sys = example_system_1();
        let m = DMatrix::<Complex64>::zeros(2, 2);
        let s = sys.s_from_m(0, &m).unwrap();
        assert!((s - complexify(sys.a())).norm() < 1e-14);
    }

    #[test]
    fn companion_view_validates_structure() {
        assert!(CompanionDde::from_system(&example_system_1()).is_ok());
        let not_companion =
            DdeSystem::from_parts_2x2([0.5, 1.0, -5.0, -1.0], [0.0, 0.0, -3.0, -0.6], 5.0).unwrap();
        assert!(CompanionDde::from_system(&not_companion).is_err());
        let bad_b =
            DdeSystem::from_parts_2x2([0.0, 1.0, -5.0, -1.0], [0.1, 0.0, -3.0, -0.6], 5.0).unwrap();
        assert!(CompanionDde::from_system(&bad_b).is_err());
    }

    #[test]
    fn system_validation() {
        assert!(DdeSystem::from_parts_2x2([0.0; 4], [0.0; 4], 0.0).is_err());
        assert!(DdeSystem::from_parts_2x2([f64::NAN; 4], [0.0; 4], 1.0).is_err());
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 3.0]);
        let b = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(DdeSystem::new(a, b, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn residual_solution_matches_taylor_recomputation(
            entries in proptest::array::uniform4(-2.0f64..2.0),
            s_entries in proptest::array::uniform8(-1.5f64..1.5),
            tau in 0.5f64..3.0,
        ) {
            let sys = DdeSystem::from_parts_2x2(
                [0.0, 1.0, entries[0], entries[1]],
                [0.0, 0.0, entries[2], entries[3]],
                tau,
            ).unwrap();
            let s = DMatrix::from_row_slice(2, 2, &[
                c(s_entries[0], s_entries[1]), c(s_entries[2], s_entries[3]),
                c(s_entries[4], s_entries[5]), c(s_entries[6], s_entries[7]),
            ]);
            let r1 = sys.residual_solution(&s).unwrap();
            let r2 = &s - complexify(sys.a()) - complexify(sys.b()) * taylor_exp(&(-&s * Complex64::new(tau, 0.0)));
            prop_assert!((r1 - r2).norm() < 1e-10 * (1.0 + s.norm()));
        }

        #[test]
        fn json_round_trip_is_bit_exact(
            a in proptest::array::uniform4(-10.0f64..10.0),
            b in proptest::array::uniform4(-10.0f64..10.0),
            tau in 0.1f64..10.0,
        ) {
            let sys = DdeSystem::from_parts_2x2(a, b, tau).unwrap();
            let text = crate::report::to_json_string(&sys.to_json()).unwrap();
            let parsed: SystemJson = serde_json::from_str(&text).unwrap();
            let back = DdeSystem::from_json(&parsed).unwrap();
            prop_assert_eq!(sys, back);
        }
    }
}
