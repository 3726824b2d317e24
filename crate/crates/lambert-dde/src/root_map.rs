//! Independent quasipolynomial root mapper: locate every characteristic
//! root in a complex-plane rectangle by grid detection of the zero curves
//! of Re f and Im f, Newton refinement, and a winding-number certificate
//! along the boundary.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::dde::DdeSystem;
use crate::error::{Error, Result};
use crate::matrix_fun::complexify;
use crate::report::ser_roots;

/// Rectangle in the complex plane with a grid pitch for curve detection.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Region {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub grid_step: f64,
}

impl Region {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64, grid_step: f64) -> Result<Self> {
        if ![re_min, re_max, im_min, im_max, grid_step].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidRegion("non-finite bound".into()));
        }
        if re_min >= re_max || im_min >= im_max {
            return Err(Error::InvalidRegion(format!(
                "degenerate rectangle [{re_min},{re_max}]x[{im_min},{im_max}]"
            )));
        }
        if grid_step <= 0.0 {
            return Err(Error::InvalidRegion(format!("grid_step must be positive, got {grid_step}")));
        }
        Ok(Self {
            re_min,
            re_max,
            im_min,
            im_max,
            grid_step,
        })
    }

    /// Step ceiling that resolves the fastest oscillation of e^{-lambda*tau}
    /// inside the strip.
    pub fn guard_step(&self, tau: f64) -> f64 {
        let im_extent = self.im_min.abs().max(self.im_max.abs()).max(1.0);
        PI / (4.0 * tau * im_extent)
    }

    fn contains(&self, z: Complex64) -> bool {
        (self.re_min..=self.re_max).contains(&z.re) && (self.im_min..=self.im_max).contains(&z.im)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RootReport {
    #[serde(serialize_with = "ser_roots")]
    pub roots: Vec<Complex64>,
    pub residuals: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub argument_count: i64,
    pub grid_candidates: usize,
}

/// d/dlambda det(Delta(lambda)) via trace(adj(Delta) * Delta'), with
/// Delta'(lambda) = I + tau * B * e^{-lambda*tau}. Computed as the sum of
/// determinants with one column replaced, which is the same trace without
/// forming the adjugate near a singular Delta.
pub fn char_derivative(sys: &DdeSystem, lambda: Complex64) -> Complex64 {
    let n = sys.dim();
    let tau = sys.tau();
    let e = (-lambda * tau).exp();
    if n == 1 {
        return Complex64::new(1.0, 0.0) + tau * e * sys.b()[(0, 0)];
    }
    let d = sys.char_matrix(lambda);
    let dp = DMatrix::<Complex64>::identity(n, n) + complexify(sys.b()) * (tau * e);
    if n == 2 {
        return d[(1, 1)] * dp[(0, 0)] - d[(0, 1)] * dp[(1, 0)] - d[(1, 0)] * dp[(0, 1)]
            + d[(0, 0)] * dp[(1, 1)];
    }
    let mut sum = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let mut dj = d.clone();
        dj.set_column(j, &dp.column(j));
        sum += dj.lu().determinant();
    }
    sum
}

/// Find all characteristic roots inside the region, certified by the
/// boundary winding number.
pub fn map_roots(sys: &DdeSystem, region: &Region) -> Result<RootReport> {
    let f = |z: Complex64| sys.char_function(z);
    let fp = |z: Complex64| char_derivative(sys, z);

    let h = region.grid_step.min(region.guard_step(sys.tau()));
    let nx = (((region.re_max - region.re_min) / h).ceil() as usize).max(1);
    let ny = (((region.im_max - region.im_min) / h).ceil() as usize).max(1);
    let dx = (region.re_max - region.re_min) / nx as f64;
    let dy = (region.im_max - region.im_min) / ny as f64;

    let scale = [
        Complex64::new(region.re_min, region.im_min),
        Complex64::new(region.re_max, region.im_min),
        Complex64::new(region.re_min, region.im_max),
        Complex64::new(region.re_max, region.im_max),
    ]
    .iter()
    .map(|&z| f(z).norm())
    .fold(1e-300_f64, f64::max);

    // Candidate cells: both zero curves cross some edge. Scanned in
    // horizontal bands so only two node rows are alive per band.
    let band = 256usize;
    let bands: Vec<usize> = (0..ny).step_by(band).collect();
    let mut candidates: Vec<Complex64> = bands
        .par_iter()
        .map(|&j0| {
            let j1 = (j0 + band).min(ny);
            let eval_row = |j: usize| -> Vec<Complex64> {
                let y = region.im_min + dy * j as f64;
                (0..=nx)
                    .map(|i| f(Complex64::new(region.re_min + dx * i as f64, y)))
                    .collect()
            };
            let mut found = Vec::new();
            let mut below = eval_row(j0);
            for j in j0..j1 {
                let above = eval_row(j + 1);
                for i in 0..nx {
                    let corners = [below[i], below[i + 1], above[i + 1], above[i]];
                    let re_cross = (0..4).any(|e| crossing(corners[e].re, corners[(e + 1) % 4].re));
                    let im_cross = (0..4).any(|e| crossing(corners[e].im, corners[(e + 1) % 4].im));
                    if re_cross && im_cross {
                        found.push(Complex64::new(
                            region.re_min + dx * (i as f64 + 0.5),
                            region.im_min + dy * (j as f64 + 0.5),
                        ));
                    }
                }
                below = above;
            }
            found
        })
        .reduce(Vec::new, |mut acc, mut v| {
            acc.append(&mut v);
            acc
        });
    candidates.sort_by(|a, b| (a.im, a.re).partial_cmp(&(b.im, b.re)).unwrap());
    let grid_candidates = candidates.len();

    // Newton refinement with a monotone |f| line search.
    let mut refined: Vec<Complex64> = Vec::new();
    for &start in &candidates {
        if let Some(root) = refine(&f, &fp, start, scale) {
            if region.contains(root) {
                refined.push(root);
            }
        }
    }

    // Merge clusters, then attach multiplicity via a local winding circle.
    // The merge radius widens with the Newton error estimate |f|/|f'| so
    // that refinements stalled around a multiple root still coalesce.
    refined.sort_by(|a, b| (a.im, a.re).partial_cmp(&(b.im, b.re)).unwrap());
    let err_estimate = |z: Complex64| {
        let d = fp(z).norm();
        if d > 0.0 {
            f(z).norm() / d
        } else {
            0.0
        }
    };
    let mut roots: Vec<Complex64> = Vec::new();
    for r in refined {
        let radius = |q: Complex64| 1e-7_f64.max(3.0 * (err_estimate(q) + err_estimate(r)));
        match roots.iter().position(|&q| (q - r).norm() <= radius(q)) {
            Some(i) => {
                if f(r).norm() < f(roots[i]).norm() {
                    roots[i] = r;
                }
            }
            None => roots.push(r),
        }
    }
    roots.sort_by(|a, b| (a.im, a.re).partial_cmp(&(b.im, b.re)).unwrap());

    let mut multiplicities = Vec::with_capacity(roots.len());
    for &r in &roots {
        multiplicities.push(local_multiplicity(&f, r)?);
    }

    let winding = boundary_winding(&f, &fp, region, h, scale)?;
    let total: usize = multiplicities.iter().sum();
    if winding != total as i64 {
        return Err(Error::CountMismatch {
            winding,
            refined: total,
        });
    }

    let residuals = roots.iter().map(|&r| f(r).norm()).collect();
    Ok(RootReport {
        roots,
        residuals,
        multiplicities,
        argument_count: winding,
        grid_candidates,
    })
}

fn crossing(a: f64, b: f64) -> bool {
    (a < 0.0) != (b < 0.0) || a == 0.0 || b == 0.0
}

fn refine(
    f: &impl Fn(Complex64) -> Complex64,
    fp: &impl Fn(Complex64) -> Complex64,
    start: Complex64,
    scale: f64,
) -> Option<Complex64> {
    let tol = 1e-12 * scale;
    let accept = 1e-10 * scale;
    let mut z = start;
    let mut fz = f(z);
    for _ in 0..60 {
        if fz.norm() <= tol {
            break;
        }
        let d = fp(z);
        if d.norm() == 0.0 {
            break;
        }
        let full = fz / d;
        let mut t = 1.0;
        let mut advanced = false;
        while t > 1e-4 {
            let zt = z - full * t;
            let ft = f(zt);
            if ft.norm() < fz.norm() {
                z = zt;
                fz = ft;
                advanced = true;
                break;
            }
            t *= 0.5;
        }
        if !advanced || full.norm() * t <= 1e-16 * (1.0 + z.norm()) {
            break;
        }
    }
    // snap tiny components to the axes when that does not hurt the residual
    for cand in [
        Complex64::new(z.re, 0.0),
        Complex64::new(0.0, z.im),
        Complex64::new(0.0, 0.0),
    ] {
        let close_enough = (z - cand).norm() <= 1e-8 * z.norm().max(1.0);
        if close_enough && f(cand).norm() <= fz.norm().max(tol) {
            z = cand;
            fz = f(z);
        }
    }
    (fz.norm() <= accept).then_some(z)
}

/// Winding number of f around a small circle at a refined root; 1 for a
/// simple root. Radius shrinks until the phase steps are resolved.
fn local_multiplicity(f: &impl Fn(Complex64) -> Complex64, root: Complex64) -> Result<usize> {
    let mut radius = 1e-5 * root.norm().max(1.0);
    'retry: for _ in 0..6 {
        let samples = 256;
        let mut total = 0.0;
        let mut prev = f(root + Complex64::new(radius, 0.0));
        if prev.norm() == 0.0 {
            radius *= 3.0;
            continue;
        }
        for s in 1..=samples {
            let ang = 2.0 * PI * s as f64 / samples as f64;
            let cur = f(root + Complex64::from_polar(radius, ang));
            if cur.norm() == 0.0 {
                radius *= 3.0;
                continue 'retry;
            }
            let dphi = (cur / prev).arg();
            if dphi.abs() > 0.5 * PI {
                radius *= 0.5;
                continue 'retry;
            }
            total += dphi;
            prev = cur;
        }
        let m = total / (2.0 * PI);
        if (m - m.round()).abs() < 0.1 && m.round() >= 1.0 {
            return Ok(m.round() as usize);
        }
        radius *= 0.5;
    }
    Err(Error::NoConvergence {
        context: "local multiplicity winding",
        residual: f64::NAN,
        iterations: 6,
    })
}

/// Argument-principle count along the region boundary. Each segment's phase
/// step is kept below pi/2 by adaptive subdivision; the trapezoid quadrature
/// of f'/f over the same nodes cross-checks the phase tracking.
fn boundary_winding(
    f: &impl Fn(Complex64) -> Complex64,
    fp: &impl Fn(Complex64) -> Complex64,
    region: &Region,
    h: f64,
    scale: f64,
) -> Result<i64> {
    let corners = [
        Complex64::new(region.re_min, region.im_min),
        Complex64::new(region.re_max, region.im_min),
        Complex64::new(region.re_max, region.im_max),
        Complex64::new(region.re_min, region.im_max),
    ];
    let min_f_allowed = 1e-8 * scale;

    struct Walk<'a, F, G> {
        f: &'a F,
        fp: &'a G,
        phase: f64,
        trap: Complex64,
        min_f: f64,
        limit: f64,
    }
    impl<F: Fn(Complex64) -> Complex64, G: Fn(Complex64) -> Complex64> Walk<'_, F, G> {
        fn segment(&mut self, z1: Complex64, f1: Complex64, z2: Complex64, f2: Complex64, depth: u32) -> Result<()> {
            self.min_f = self.min_f.min(f2.norm());
            if f2.norm() < self.limit {
                return Err(Error::BoundaryRootSuspected(f2.norm()));
            }
            let dphi = (f2 / f1).arg();
            if dphi.abs() <= 0.5 * PI || depth >= 48 {
                if depth >= 48 && dphi.abs() > 0.5 * PI {
                    return Err(Error::BoundaryRootSuspected(self.min_f));
                }
                self.phase += dphi;
                let g1 = (self.fp)(z1) / f1;
                let g2 = (self.fp)(z2) / f2;
                self.trap += (g1 + g2) * 0.5 * (z2 - z1);
                return Ok(());
            }
            let zm = 0.5 * (z1 + z2);
            let fm = (self.f)(zm);
            self.segment(z1, f1, zm, fm, depth + 1)?;
            self.segment(zm, fm, z2, f2, depth + 1)
        }
    }

    let mut walk = Walk {
        f,
        fp,
        phase: 0.0,
        trap: Complex64::new(0.0, 0.0),
        min_f: f64::INFINITY,
        limit: min_f_allowed,
    };
    for e in 0..4 {
        let a = corners[e];
        let b = corners[(e + 1) % 4];
        let len = (b - a).norm();
        let steps = ((len / (4.0 * h)).ceil() as usize).clamp(8, 50_000);
        let mut z1 = a;
        let mut f1 = f(z1);
        walk.min_f = walk.min_f.min(f1.norm());
        if f1.norm() < min_f_allowed {
            return Err(Error::BoundaryRootSuspected(f1.norm()));
        }
        for s in 1..=steps {
            let z2 = a + (b - a) * (s as f64 / steps as f64);
            let f2 = f(z2);
            walk.segment(z1, f1, z2, f2, 0)?;
            z1 = z2;
            f1 = f2;
        }
    }

    let turns = walk.phase / (2.0 * PI);
    let n = turns.round();
    if (turns - n).abs() > 1e-3 {
        return Err(Error::CountMismatch {
            winding: n as i64,
            refined: usize::MAX,
        });
    }
    // spec-stated quadrature must agree with the phase tracking
    let trap_turns = walk.trap.im / (2.0 * PI);
    if (trap_turns - n).abs() > 0.25 {
        return Err(Error::CountMismatch {
            winding: n as i64,
            refined: trap_turns.round() as usize,
        });
    }
    Ok(n as i64)
}
