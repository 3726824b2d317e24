//! Seed construction by reverse engineering: from a target root pair build
//! S, the target W-matrix, the branch index and the seed M, by running the
//! branch algorithm's steps backwards on a companion-form system.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::dde::CompanionDde;
use crate::error::{Error, Result};
use crate::lambert_w::branch_of;
use crate::matrix_fun::complexify;
use crate::report::{ser_cmat, ser_pair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseTag {
    ConjugatePair,
    RealPair,
    DegenerateTrace,
    GeneralPair,
    ComplexRelaxed,
}

/// A seed built from a target root pair. Construction never requires the
/// pair to be true characteristic roots; `root_certified` records whether
/// the branch-equation residual vanishes, which holds exactly when they are.
#[derive(Debug, Clone, Serialize)]
pub struct SeedRecipe {
    pub branch: i64,
    #[serde(serialize_with = "ser_pair")]
    pub pair: (Complex64, Complex64),
    pub case_tag: CaseTag,
    #[serde(rename = "S_target", serialize_with = "ser_cmat")]
    pub s_target: DMatrix<Complex64>,
    #[serde(rename = "W_target", serialize_with = "ser_cmat")]
    pub w_target: DMatrix<Complex64>,
    #[serde(rename = "M", serialize_with = "ser_cmat")]
    pub m: DMatrix<Complex64>,
    pub root_residual: f64,
    pub root_certified: bool,
}

fn check_pair_finite(l1: Complex64, l2: Complex64) -> Result<()> {
    if ![l1.re, l1.im, l2.re, l2.im].iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("seed pair"));
    }
    Ok(())
}

/// Shared construction: S = [[0,1],[-l1*l2, l1+l2]], W = tau*(S - A),
/// branch and M from the structured closed form.
fn build_recipe(sys: &CompanionDde, l1: Complex64, l2: Complex64, tag: CaseTag) -> Result<SeedRecipe> {
    let tau = sys.tau();
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);

    let s21 = -l1 * l2;
    let s22 = l1 + l2;
    let s_target = DMatrix::from_row_slice(2, 2, &[zero, one, s21, s22]);
    let w_target = (s_target.clone() - complexify(sys.system().a())) * Complex64::new(tau, 0.0);
    let w22 = w_target[(1, 1)]; // tau*(l1 + l2 - a22)

    let (branch, m, tag) = if w22.norm() == 0.0 {
        // trace matches a22: M is nilpotent and the branch may be chosen
        // freely among the real ones; we fix 0 for determinism
        let m21 = -(Complex64::new(sys.a21(), 0.0) + l1 * l2) * tau;
        let m = DMatrix::from_row_slice(2, 2, &[zero, zero, m21, zero]);
        (0, m, CaseTag::DegenerateTrace)
    } else {
        let branch = if w22.im == 0.0 {
            // real W value: one of the two real branches covers it
            if w22.re >= -1.0 {
                0
            } else {
                -1
            }
        } else {
            branch_of(w22)?
        };
        let m22 = w22 * w22.exp();
        let m21 = -m22 * (l1 * l2 + sys.a21()) / (s22 - sys.a22());
        let m = DMatrix::from_row_slice(2, 2, &[zero, zero, m21, m22]);
        (branch, m, tag)
    };

    let residual = sys.system().residual_branch(branch, &m)?;
    let scale = (complexify(sys.system().b()) * Complex64::new(tau, 0.0)).norm().max(1.0);
    let root_residual = residual.norm();
    Ok(SeedRecipe {
        branch,
        pair: (l1, l2),
        case_tag: tag,
        s_target,
        w_target,
        m,
        root_residual,
        root_certified: root_residual <= 1e-9 * scale,
    })
}

/// Seed for a complex-conjugate pair {lambda, conj(lambda)}: real S, real M,
/// branch 0 or -1 depending on where tau*(2 Re(lambda) - a22) falls.
pub fn seed_conjugate_pair(sys: &CompanionDde, lambda: Complex64) -> Result<SeedRecipe> {
    check_pair_finite(lambda, lambda)?;
    if lambda.im == 0.0 {
        return Err(Error::DegeneratePair);
    }
    build_recipe(sys, lambda, lambda.conj(), CaseTag::ConjugatePair)
}

/// Seed for two distinct real roots.
pub fn seed_real_pair(sys: &CompanionDde, l1: f64, l2: f64) -> Result<SeedRecipe> {
    let c1 = Complex64::new(l1, 0.0);
    let c2 = Complex64::new(l2, 0.0);
    check_pair_finite(c1, c2)?;
    if l1 == l2 {
        return Err(Error::DegeneratePair);
    }
    build_recipe(sys, c1, c2, CaseTag::RealPair)
}

/// Seed for an arbitrary pair; S may be complex and the branch is whatever
/// branch contains tau*(l1 + l2 - a22).
pub fn seed_general_pair(sys: &CompanionDde, l1: Complex64, l2: Complex64) -> Result<SeedRecipe> {
    check_pair_finite(l1, l2)?;
    if l1 == l2 {
        return Err(Error::DegeneratePair);
    }
    build_recipe(sys, l1, l2, CaseTag::GeneralPair)
}

/// Pairing of a full root set: conjugate pairs matched, real roots paired
/// adjacent in ascending order, an odd real leftover paired with a complex
/// root through the complex-S relaxation.
#[derive(Debug, Clone, Serialize)]
pub struct PairingPlan {
    pub recipes: Vec<SeedRecipe>,
    #[serde(serialize_with = "crate::report::ser_roots")]
    pub unpaired: Vec<Complex64>,
    pub complex_relaxed_used: bool,
}

/// Close a root set under conjugation. Real systems have conjugate-symmetric
/// spectra, so roots clipped away by a half-plane window can be restored.
pub fn close_under_conjugation(roots: &[Complex64]) -> Vec<Complex64> {
    let mut out = roots.to_vec();
    for r in roots {
        if r.im != 0.0 {
            let want = r.conj();
            let present = out
                .iter()
                .any(|q| (q - want).norm() <= 1e-6 * want.norm().max(1.0));
            if !present {
                out.push(want);
            }
        }
    }
    out
}

pub fn pair_all_roots(sys: &CompanionDde, roots: &[Complex64]) -> Result<PairingPlan> {
    for r in roots {
        if !r.re.is_finite() || !r.im.is_finite() {
            return Err(Error::NonFinite("root list"));
        }
    }
    let real_tol = |r: &Complex64| 1e-9 * r.norm().max(1.0);
    let mut reals: Vec<f64> = Vec::new();
    let mut upper: Vec<Complex64> = Vec::new();
    let mut lower: Vec<Complex64> = Vec::new();
    for r in roots {
        if r.im.abs() <= real_tol(r) {
            reals.push(r.re);
        } else if r.im > 0.0 {
            upper.push(*r);
        } else {
            lower.push(*r);
        }
    }

    // conjugation closure: each upper root must have a lower partner
    let mut lower_used = vec![false; lower.len()];
    let mut pairs: Vec<Complex64> = Vec::new();
    for u in &upper {
        let want = u.conj();
        let found = lower
            .iter()
            .enumerate()
            .filter(|(i, _)| !lower_used[*i])
            .min_by(|(_, a), (_, b)| {
                (*a - want).norm().partial_cmp(&(*b - want).norm()).unwrap()
            });
        match found {
            Some((i, cand)) if (*cand - want).norm() <= 1e-6 * want.norm().max(1.0) => {
                lower_used[i] = true;
                pairs.push(*u);
            }
            _ => return Err(Error::ConjugationClosureViolated(format!("{u}"))),
        }
    }
    if let Some((i, _)) = lower_used.iter().enumerate().find(|(_, used)| !**used) {
        return Err(Error::ConjugationClosureViolated(format!("{}", lower[i])));
    }

    pairs.sort_by(|a, b| (a.im, a.re).partial_cmp(&(b.im, b.re)).unwrap());
    reals.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut recipes = Vec::new();
    for lam in &pairs {
        recipes.push(seed_conjugate_pair(sys, *lam)?);
    }
    let mut complex_relaxed_used = false;
    let mut unpaired = Vec::new();
    let even = reals.len() - reals.len() % 2;
    for chunk in reals[..even].chunks_exact(2) {
        recipes.push(seed_real_pair(sys, chunk[0], chunk[1])?);
    }
    if reals.len() % 2 == 1 {
        let leftover = Complex64::new(reals[reals.len() - 1], 0.0);
        if let Some(partner) = pairs.first() {
            // complex-S relaxation: pair it with the conjugate member of the
            // lowest conjugate pair; any branch may come out
            let mut recipe = seed_general_pair(sys, leftover, partner.conj())?;
            recipe.case_tag = CaseTag::ComplexRelaxed;
            recipes.push(recipe);
            complex_relaxed_used = true;
        } else {
            unpaired.push(leftover);
        }
    }
    Ok(PairingPlan {
        recipes,
        unpaired,
        complex_relaxed_used,
    })
}

/// Numerical witness that no real structured S with eigenvalue 0 solves the
/// solution equation. Eigenvalue 0 of a real S = [[0,1],[s21,s22]] forces
/// s21 = det(S) = 0, leaving a one-parameter family S(s22) whose residual
/// is minimized here.
#[derive(Debug, Clone, Serialize)]
pub struct RealSOriginCheck {
    pub min_residual: f64,
    pub s22_at_min: f64,
    pub contradiction_holds: bool,
}

pub fn real_s_origin_check(sys: &CompanionDde, s22_lo: f64, s22_hi: f64, samples: usize) -> RealSOriginCheck {
    let residual_at = |s22: f64| -> f64 {
        let zero = Complex64::new(0.0, 0.0);
        let s = DMatrix::from_row_slice(
            2,
            2,
            &[zero, Complex64::new(1.0, 0.0), zero, Complex64::new(s22, 0.0)],
        );
        sys.system().residual_solution(&s).unwrap().norm()
    };
    let samples = samples.max(3);
    let step = (s22_hi - s22_lo) / (samples - 1) as f64;
    let mut best = (f64::INFINITY, s22_lo);
    for i in 0..samples {
        let x = s22_lo + step * i as f64;
        let r = residual_at(x);
        if r < best.0 {
            best = (r, x);
        }
    }
    // golden-section polish around the grid minimum
    let (mut lo, mut hi) = (best.1 - step, best.1 + step);
    let phi = 0.618_033_988_749_894_9;
    for _ in 0..80 {
        let x1 = hi - phi * (hi - lo);
        let x2 = lo + phi * (hi - lo);
        if residual_at(x1) < residual_at(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    let x = 0.5 * (lo + hi);
    let r = residual_at(x);
    if r < best.0 {
        best = (r, x);
    }
    let scale = (sys.system().a().norm() + sys.system().b().norm()).max(1.0);
    RealSOriginCheck {
        min_residual: best.0,
        s22_at_min: best.1,
        contradiction_holds: best.0 > 1e-6 * scale,
    }
}
