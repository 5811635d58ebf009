//! Modal diagnostics on sampled periodic orbits: modal coordinates and
//! amplitudes, Fourier-differentiated velocities, relative and global modal
//! errors, and manifold orbit tables.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::dpim::DpimModel;
use crate::error::{Error, Result};
use crate::fom::EigenBasis;

/// Harmonics kept when differentiating sampled modal coordinates.
pub const DEFAULT_N_KEEP: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ModalTrace {
    pub mode_index: usize,
    /// `u_i(t_k) = φ_iᵀ M Ũ(t_k)` on the uniform period grid.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `max_k |u_i(t_k)|`.
    pub amplitude: f64,
}

/// Projects uniformly sampled states (one period, end point excluded) onto
/// mode `i` and differentiates the result spectrally.
pub fn modal_coordinate(
    basis: &EigenBasis,
    mass: &DMatrix<f64>,
    samples: &[DVector<f64>],
    i: usize,
    omega: f64,
    n_keep: usize,
) -> Result<ModalTrace> {
    if i >= basis.len() {
        return Err(Error::IndexOutOfRange {
            index: i,
            size: basis.len(),
        });
    }
    let w = mass * basis.modes.column(i);
    let u: Vec<f64> = samples.iter().map(|x| w.dot(x)).collect();
    let v = fourier_velocity(&u, omega, n_keep);
    let amplitude = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(ModalTrace {
        mode_index: i,
        u,
        v,
        amplitude,
    })
}

/// Time derivative of a uniformly sampled periodic signal: harmonics above
/// `n_keep` (and the Nyquist term) are dropped, harmonic `k` is rotated by
/// `kω`.
pub fn fourier_velocity(u: &[f64], omega: f64, n_keep: usize) -> Vec<f64> {
    let n = u.len();
    if n == 0 {
        return Vec::new();
    }
    let kmax = n_keep.min((n - 1) / 2);
    let mut a = vec![0.0; kmax + 1];
    let mut b = vec![0.0; kmax + 1];
    for (j, &x) in u.iter().enumerate() {
        let th = TAU * j as f64 / n as f64;
        for k in 1..=kmax {
            let (s, c) = (k as f64 * th).sin_cos();
            a[k] += x * c;
            b[k] += x * s;
        }
    }
    let scale = 2.0 / n as f64;
    (0..n)
        .map(|j| {
            let th = TAU * j as f64 / n as f64;
            let mut v = 0.0;
            for k in 1..=kmax {
                let kw = k as f64 * omega;
                let (s, c) = (k as f64 * th).sin_cos();
                v += scale * kw * (b[k] * c - a[k] * s);
            }
            v
        })
        .collect()
}

/// Trapezoid quadrature of a periodic sampled function over one period of
/// length `period` (uniform grid, end point excluded).
pub fn periodic_trapezoid(f: &[f64], period: f64) -> f64 {
    if f.is_empty() {
        return 0.0;
    }
    f.iter().sum::<f64>() * period / f.len() as f64
}

/// Mode-wise error of a test orbit against a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalError {
    pub mode: usize,
    /// `‖u^P_i − u^T_i‖ / ‖u^P_i‖`; `None` when the reference norm vanishes.
    pub relative: Option<f64>,
    /// `‖u^P_i − u^T_i‖ / ‖u^P‖` with `(u^P)² = ŨᵀMŨ`.
    pub global: f64,
}

/// Accumulates squared L2 norms over one or more orbits so that errors can
/// be pooled over a test set.
#[derive(Debug, Clone)]
pub struct ErrorAccumulator {
    modes: Vec<usize>,
    diff2: Vec<f64>,
    ref2: Vec<f64>,
    global2: f64,
}

impl ErrorAccumulator {
    pub fn new(modes: &[usize]) -> Self {
        Self {
            modes: modes.to_vec(),
            diff2: vec![0.0; modes.len()],
            ref2: vec![0.0; modes.len()],
            global2: 0.0,
        }
    }

    /// Adds one orbit pair sampled on the same grid over a period `period`.
    pub fn add(
        &mut self,
        basis: &EigenBasis,
        mass: &DMatrix<f64>,
        reference: &[DVector<f64>],
        test: &[DVector<f64>],
        period: f64,
    ) -> Result<()> {
        if reference.len() != test.len() {
            return Err(Error::DimensionMismatch {
                expected: reference.len(),
                got: test.len(),
            });
        }
        let g: Vec<f64> = reference.iter().map(|u| u.dot(&(mass * u))).collect();
        self.global2 += periodic_trapezoid(&g, period);
        for (slot, &m) in self.modes.iter().enumerate() {
            if m >= basis.len() {
                return Err(Error::IndexOutOfRange {
                    index: m,
                    size: basis.len(),
                });
            }
            let w = mass * basis.modes.column(m);
            let r: Vec<f64> = reference.iter().map(|u| w.dot(u)).collect();
            let t: Vec<f64> = test.iter().map(|u| w.dot(u)).collect();
            let d2: Vec<f64> = r.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).collect();
            let r2: Vec<f64> = r.iter().map(|a| a * a).collect();
            self.diff2[slot] += periodic_trapezoid(&d2, period);
            self.ref2[slot] += periodic_trapezoid(&r2, period);
        }
        Ok(())
    }

    pub fn finish(&self) -> Vec<ModalError> {
        self.modes
            .iter()
            .enumerate()
            .map(|(slot, &mode)| {
                let d = self.diff2[slot].sqrt();
                ModalError {
                    mode,
                    relative: (self.ref2[slot] > 0.0).then(|| d / self.ref2[slot].sqrt()),
                    global: if self.global2 > 0.0 { d / self.global2.sqrt() } else { f64::NAN },
                }
            })
            .collect()
    }
}

/// Errors of a single orbit pair.
pub fn modal_errors(
    basis: &EigenBasis,
    mass: &DMatrix<f64>,
    reference: &[DVector<f64>],
    test: &[DVector<f64>],
    modes: &[usize],
    period: f64,
) -> Result<Vec<ModalError>> {
    let mut acc = ErrorAccumulator::new(modes);
    acc.add(basis, mass, reference, test, period)?;
    Ok(acc.finish())
}

/// One row of a manifold orbit table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldPoint {
    pub orbit: usize,
    pub u_master: f64,
    pub v_master: f64,
    pub u_plot: f64,
}

/// `(u_master, v_master, u_plot)` along each sampled orbit; velocities are
/// Fourier-differentiated master coordinates.
pub fn manifold_orbits(
    basis: &EigenBasis,
    mass: &DMatrix<f64>,
    orbits: &[(f64, Vec<DVector<f64>>)],
    master: usize,
    plot: usize,
    n_keep: usize,
) -> Result<Vec<ManifoldPoint>> {
    let mut out = Vec::new();
    for (k, (omega, samples)) in orbits.iter().enumerate() {
        let tm = modal_coordinate(basis, mass, samples, master, *omega, n_keep)?;
        let tp = modal_coordinate(basis, mass, samples, plot, *omega, n_keep)?;
        for j in 0..samples.len() {
            out.push(ManifoldPoint {
                orbit: k,
                u_master: tm.u[j],
                v_master: tm.v[j],
                u_plot: tp.u[j],
            });
        }
    }
    Ok(out)
}

/// Invariant surface of a reduced model over an `(R, S)` grid, in the same
/// modal coordinates as [`manifold_orbits`].
#[derive(Debug, Clone)]
pub struct ManifoldSurface {
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    /// `points[i * s.len() + j]` at `(r[i], s[j])`.
    pub points: Vec<[f64; 3]>,
}

pub fn dpim_surface(
    model: &DpimModel,
    basis: &EigenBasis,
    mass: &DMatrix<f64>,
    plot: usize,
    r_max: f64,
    s_max: f64,
    n: usize,
) -> Result<ManifoldSurface> {
    if plot >= basis.len() {
        return Err(Error::IndexOutOfRange {
            index: plot,
            size: basis.len(),
        });
    }
    let n = n.max(2);
    let grid = |m: f64| (0..n).map(|i| -m + 2.0 * m * i as f64 / (n - 1) as f64).collect::<Vec<_>>();
    let (r, s) = (grid(r_max), grid(s_max));
    let wm = mass * basis.modes.column(model.master_index);
    let wp = mass * basis.modes.column(plot);
    let mut points = Vec::with_capacity(n * n);
    for &ri in &r {
        for &sj in &s {
            let (u, v) = model.decode(ri, sj);
            points.push([wm.dot(&u), wm.dot(&v), wp.dot(&u)]);
        }
    }
    Ok(ManifoldSurface { r, s, points })
}

/// Mean over master-coordinate bins of the residual variance of `u_plot`
/// after a local linear fit in `u_master`, divided by the squared range of
/// `u_plot`. Near zero when the orbits lie on a velocity-independent sheet.
pub fn sheet_velocity_dependence(points: &[ManifoldPoint], n_bins: usize) -> f64 {
    if points.len() < 3 || n_bins == 0 {
        return 0.0;
    }
    let (mut lo, mut hi, mut plo, mut phi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo = lo.min(p.u_master);
        hi = hi.max(p.u_master);
        plo = plo.min(p.u_plot);
        phi = phi.max(p.u_plot);
    }
    let range = phi - plo;
    if !(hi > lo) || !(range > 0.0) {
        return 0.0;
    }
    let mut bins: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_bins];
    for p in points {
        let k = (((p.u_master - lo) / (hi - lo)) * n_bins as f64).floor() as usize;
        bins[k.min(n_bins - 1)].push((p.u_master, p.u_plot));
    }
    let mut total = 0.0;
    let mut used = 0usize;
    for b in bins.iter().filter(|b| b.len() >= 3) {
        let n = b.len() as f64;
        let mx = b.iter().map(|p| p.0).sum::<f64>() / n;
        let my = b.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = b.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = b.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let var = b.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum::<f64>() / n;
        total += var;
        used += 1;
    }
    if used == 0 {
        return 0.0;
    }
    total / used as f64 / (range * range)
}

/// Largest orthogonal distance from orbit points to a reduced-model surface,
/// with each coordinate divided by the surface's range over the grid. The
/// surface is the exact decoded map, so the foot point is found by
/// Gauss-Newton in `(R, S)` from the nearest grid node.
pub fn max_surface_distance(model: &DpimModel, surface: &ManifoldSurface, basis: &EigenBasis, mass: &DMatrix<f64>, plot: usize, points: &[ManifoldPoint]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &surface.points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let scale: [f64; 3] = std::array::from_fn(|k| if hi[k] > lo[k] { hi[k] - lo[k] } else { 1.0 });
    let wm = mass * basis.modes.column(model.master_index);
    let wp = mass * basis.modes.column(plot);
    let map = |r: f64, s: f64| -> [f64; 3] {
        let (u, v) = model.decode(r, s);
        [wm.dot(&u) / scale[0], wm.dot(&v) / scale[1], wp.dot(&u) / scale[2]]
    };
    let ns = surface.s.len();
    let mut worst = 0.0f64;
    for p in points {
        let q = [p.u_master / scale[0], p.v_master / scale[1], p.u_plot / scale[2]];
        let d2 = |x: &[f64; 3]| (0..3).map(|k| (x[k] - q[k]).powi(2)).sum::<f64>();
        let best = surface
            .points
            .iter()
            .enumerate()
            .map(|(i, sp)| (i, d2(&[sp[0] / scale[0], sp[1] / scale[1], sp[2] / scale[2]])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (mut r, mut s) = (surface.r[best / ns], surface.s[best % ns]);
        let hr = 1e-7 * (surface.r[surface.r.len() - 1].abs() + 1e-12);
        let hs = 1e-7 * (surface.s[ns - 1].abs() + 1e-12);
        for _ in 0..30 {
            let f = map(r, s);
            let fr = map(r + hr, s);
            let fs = map(r, s + hs);
            let jr: [f64; 3] = std::array::from_fn(|k| (fr[k] - f[k]) / hr);
            let js: [f64; 3] = std::array::from_fn(|k| (fs[k] - f[k]) / hs);
            let e: [f64; 3] = std::array::from_fn(|k| f[k] - q[k]);
            let (a11, a12, a22) = (
                jr.iter().map(|x| x * x).sum::<f64>(),
                jr.iter().zip(&js).map(|(x, y)| x * y).sum::<f64>(),
                js.iter().map(|x| x * x).sum::<f64>(),
            );
            let (g1, g2) = (
                jr.iter().zip(&e).map(|(x, y)| x * y).sum::<f64>(),
                js.iter().zip(&e).map(|(x, y)| x * y).sum::<f64>(),
            );
            let det = a11 * a22 - a12 * a12;
            if det.abs() < 1e-300 {
                break;
            }
            let dr = (a22 * g1 - a12 * g2) / det;
            let ds = (a11 * g2 - a12 * g1) / det;
            r -= dr;
            s -= ds;
            if dr.abs() <= 1e-12 * (1.0 + r.abs()) && ds.abs() <= 1e-12 * (1.0 + s.abs()) {
                break;
            }
        }
        worst = worst.max(d2(&map(r, s)).sqrt());
    }
    worst
}
