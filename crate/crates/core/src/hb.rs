//! Harmonic balance with alternating frequency/time (AFT) evaluation of the
//! restoring force.
//!
//! Unknowns are stored dof-major: coefficient `h` of dof `d` sits at
//! `d * (2 N_H + 1) + h`, with `h = 0` the mean, `1..=N_H` the cosines and
//! `N_H+1..=2N_H` the sines.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fom::FomSystem;

/// Second-order periodic model `M ü + C u̇ + f(u, u̇) = β F cos(ωt)`.
///
/// `restoring_force` includes the linear stiffness term.
pub trait HbModel {
    fn n_dofs(&self) -> usize;
    fn mass(&self) -> &DMatrix<f64>;
    fn damping(&self) -> &DMatrix<f64>;
    fn linear_stiffness(&self) -> &DMatrix<f64>;
    fn load(&self) -> &DVector<f64>;
    fn restoring_force(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
    /// `(∂f/∂u, ∂f/∂u̇)`; the second is `None` when `f` ignores velocity.
    fn restoring_tangent(&self, u: &DVector<f64>, v: &DVector<f64>) -> (DMatrix<f64>, Option<DMatrix<f64>>);
    /// Scalar output at one instant; FRF amplitudes are `max_t |observe|`.
    fn observe(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64;
}

impl HbModel for FomSystem {
    fn n_dofs(&self) -> usize {
        FomSystem::n_dofs(self)
    }
    fn mass(&self) -> &DMatrix<f64> {
        FomSystem::mass(self)
    }
    fn damping(&self) -> &DMatrix<f64> {
        FomSystem::damping(self)
    }
    fn linear_stiffness(&self) -> &DMatrix<f64> {
        self.stiffness()
    }
    fn load(&self) -> &DVector<f64> {
        self.forcing_shape()
    }
    fn restoring_force(&self, u: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        self.internal_force(u)
    }
    fn restoring_tangent(&self, u: &DVector<f64>, _v: &DVector<f64>) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
        (self.tangent_stiffness(u), None)
    }
    fn observe(&self, u: &DVector<f64>, _v: &DVector<f64>) -> f64 {
        self.observation().dot(u)
    }
}

/// Sample tables for one harmonic truncation.
#[derive(Debug, Clone)]
pub struct HarmonicGrid {
    n_harmonics: usize,
    n_samples: usize,
    /// `basis[(s, h)]`: value of basis function `h` at sample `s`.
    basis: DMatrix<f64>,
    /// Time derivative of the basis at unit frequency.
    dbasis: DMatrix<f64>,
    /// Galerkin projection, `(2N_H+1) × n_samples`.
    proj: DMatrix<f64>,
}

impl HarmonicGrid {
    /// Uses `4 N_H + 1` samples rounded up to a power of two.
    pub fn new(n_harmonics: usize) -> Result<Self> {
        Self::with_samples(n_harmonics, (4 * n_harmonics + 1).next_power_of_two())
    }

    pub fn with_samples(n_harmonics: usize, n_samples: usize) -> Result<Self> {
        if n_harmonics == 0 {
            return Err(Error::InvalidParameter {
                name: "n_harmonics".into(),
                reason: "must be at least 1".into(),
            });
        }
        if n_samples <= 2 * n_harmonics {
            return Err(Error::InvalidParameter {
                name: "n_samples".into(),
                reason: format!("{n_samples} samples cannot resolve {n_harmonics} harmonics"),
            });
        }
        let nc = 2 * n_harmonics + 1;
        let mut basis = DMatrix::zeros(n_samples, nc);
        let mut dbasis = DMatrix::zeros(n_samples, nc);
        for s in 0..n_samples {
            let theta = TAU * s as f64 / n_samples as f64;
            basis[(s, 0)] = 1.0;
            for k in 1..=n_harmonics {
                let kf = k as f64;
                let (sn, cs) = (kf * theta).sin_cos();
                basis[(s, k)] = cs;
                basis[(s, n_harmonics + k)] = sn;
                dbasis[(s, k)] = -kf * sn;
                dbasis[(s, n_harmonics + k)] = kf * cs;
            }
        }
        let mut proj = basis.transpose() * (2.0 / n_samples as f64);
        proj.row_mut(0).scale_mut(0.5);
        Ok(Self {
            n_harmonics,
            n_samples,
            basis,
            dbasis,
            proj,
        })
    }

    pub fn n_harmonics(&self) -> usize {
        self.n_harmonics
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_coeffs(&self) -> usize {
        2 * self.n_harmonics + 1
    }

    /// Time samples of a coefficient row.
    pub fn synthesize(&self, coeffs: &[f64]) -> DVector<f64> {
        &self.basis * DVector::from_column_slice(coeffs)
    }

    /// Galerkin coefficients of a sampled signal.
    pub fn project(&self, samples: &[f64]) -> DVector<f64> {
        &self.proj * DVector::from_column_slice(samples)
    }
}

/// One steady-state periodic solution.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOrbit {
    pub omega: f64,
    pub n_harmonics: usize,
    /// `N_h × (2N_H+1)`, one row per dof.
    pub coeffs: DMatrix<f64>,
    pub samples_per_period: usize,
}

impl PeriodicOrbit {
    pub fn from_unknowns(x: &DVector<f64>, n_dofs: usize, n_harmonics: usize, omega: f64) -> Self {
        let nc = 2 * n_harmonics + 1;
        assert_eq!(x.len(), n_dofs * nc, "unknown vector length");
        Self {
            omega,
            n_harmonics,
            coeffs: DMatrix::from_row_slice(n_dofs, nc, x.as_slice()),
            samples_per_period: (4 * n_harmonics + 1).next_power_of_two(),
        }
    }

    pub fn unknowns(&self) -> DVector<f64> {
        DVector::from_iterator(self.coeffs.len(), self.coeffs.transpose().iter().copied())
    }

    pub fn n_dofs(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn period(&self) -> f64 {
        TAU / self.omega
    }

    /// Displacement at phase `θ = ωt`.
    pub fn displacement_at_phase(&self, theta: f64) -> DVector<f64> {
        let nh = self.n_harmonics;
        let mut u = self.coeffs.column(0).into_owned();
        for k in 1..=nh {
            let (s, c) = (k as f64 * theta).sin_cos();
            u += self.coeffs.column(k) * c + self.coeffs.column(nh + k) * s;
        }
        u
    }

    /// Velocity at phase `θ = ωt`.
    pub fn velocity_at_phase(&self, theta: f64) -> DVector<f64> {
        let nh = self.n_harmonics;
        let mut v = DVector::zeros(self.n_dofs());
        for k in 1..=nh {
            let kw = k as f64 * self.omega;
            let (s, c) = (k as f64 * theta).sin_cos();
            v += self.coeffs.column(k) * (-kw * s) + self.coeffs.column(nh + k) * (kw * c);
        }
        v
    }

    /// `n` uniform samples over one period, starting at `t = 0` (end point excluded).
    pub fn sample(&self, n: usize) -> Vec<DVector<f64>> {
        (0..n)
            .map(|s| self.displacement_at_phase(TAU * s as f64 / n as f64))
            .collect()
    }

    pub fn sample_velocity(&self, n: usize) -> Vec<DVector<f64>> {
        (0..n)
            .map(|s| self.velocity_at_phase(TAU * s as f64 / n as f64))
            .collect()
    }

    /// Mean-square value of the coefficients (Parseval).
    pub fn coefficient_energy(&self) -> f64 {
        let nh = self.n_harmonics;
        let mut e = 0.0;
        for d in 0..self.n_dofs() {
            e += self.coeffs[(d, 0)].powi(2);
            for k in 1..=2 * nh {
                e += 0.5 * self.coeffs[(d, k)].powi(2);
            }
        }
        e
    }
}

/// Maximum of `|g(θ)|` over one period, from a uniform scan refined by a
/// parabola through the best sample and its neighbours.
pub fn periodic_max_abs(g: impl Fn(f64) -> f64, n_scan: usize) -> f64 {
    let h = TAU / n_scan as f64;
    let vals: Vec<f64> = (0..n_scan).map(|s| g(h * s as f64).abs()).collect();
    let (best, &fmax) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty scan");
    let fl = vals[(best + n_scan - 1) % n_scan];
    let fr = vals[(best + 1) % n_scan];
    let denom = fl - 2.0 * fmax + fr;
    if denom >= 0.0 {
        return fmax;
    }
    let off = 0.5 * (fl - fr) / denom;
    let theta = h * (best as f64 + off.clamp(-0.5, 0.5));
    fmax.max(g(theta).abs())
}

/// Scan density used for FRF amplitudes.
pub const AMPLITUDE_SCAN: usize = 256;

/// `max_t |observe(u(t), u̇(t))|` over one period of an orbit.
pub fn orbit_amplitude<M: HbModel + ?Sized>(model: &M, orbit: &PeriodicOrbit) -> f64 {
    periodic_max_abs(
        |theta| model.observe(&orbit.displacement_at_phase(theta), &orbit.velocity_at_phase(theta)),
        AMPLITUDE_SCAN,
    )
}

fn check_len<M: HbModel + ?Sized>(model: &M, grid: &HarmonicGrid, x: &DVector<f64>) -> Result<()> {
    let expected = model.n_dofs() * grid.n_coeffs();
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

/// Time samples of displacement and velocity, one `DVector` per sample.
fn to_time<M: HbModel + ?Sized>(
    model: &M,
    grid: &HarmonicGrid,
    x: &DVector<f64>,
    omega: f64,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let n = model.n_dofs();
    let nc = grid.n_coeffs();
    let coeffs = DMatrix::from_row_slice(n, nc, x.as_slice());
    let u = &grid.basis * coeffs.transpose();
    let v = &grid.dbasis * coeffs.transpose() * omega;
    let us = (0..grid.n_samples).map(|s| u.row(s).transpose()).collect();
    let vs = (0..grid.n_samples).map(|s| v.row(s).transpose()).collect();
    (us, vs)
}

/// Adds the frequency-domain inertia and damping blocks `L(ω) x` to `r`.
fn add_linear_blocks<M: HbModel + ?Sized>(model: &M, grid: &HarmonicGrid, x: &DVector<f64>, omega: f64, r: &mut DVector<f64>) {
    let n = model.n_dofs();
    let nh = grid.n_harmonics;
    let nc = grid.n_coeffs();
    let m = model.mass();
    let c = model.damping();
    for k in 1..=nh {
        let kw = k as f64 * omega;
        for i in 0..n {
            let mut rc = 0.0;
            let mut rs = 0.0;
            for j in 0..n {
                let a = x[j * nc + k];
                let b = x[j * nc + nh + k];
                rc += -kw * kw * m[(i, j)] * a + kw * c[(i, j)] * b;
                rs += -kw * kw * m[(i, j)] * b - kw * c[(i, j)] * a;
            }
            r[i * nc + k] += rc;
            r[i * nc + nh + k] += rs;
        }
    }
}

/// Galerkin residual of the periodic problem at `(β, ω)`.
pub fn hb_residual<M: HbModel + ?Sized>(
    model: &M,
    grid: &HarmonicGrid,
    x: &DVector<f64>,
    beta: f64,
    omega: f64,
) -> Result<DVector<f64>> {
    check_len(model, grid, x)?;
    let n = model.n_dofs();
    let nc = grid.n_coeffs();
    let (us, vs) = to_time(model, grid, x, omega);
    let mut ft = DMatrix::zeros(grid.n_samples, n);
    for (s, (u, v)) in us.iter().zip(&vs).enumerate() {
        ft.row_mut(s).copy_from(&model.restoring_force(u, v).transpose());
    }
    let fc = &grid.proj * ft;
    let mut r = DVector::zeros(n * nc);
    for i in 0..n {
        for h in 0..nc {
            r[i * nc + h] = fc[(h, i)];
        }
        r[i * nc + 1] -= beta * model.load()[i];
    }
    add_linear_blocks(model, grid, x, omega, &mut r);
    Ok(r)
}

/// Residual Jacobian with respect to the unknowns and its derivative in `ω`.
pub fn hb_jacobian<M: HbModel + ?Sized>(
    model: &M,
    grid: &HarmonicGrid,
    x: &DVector<f64>,
    omega: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_len(model, grid, x)?;
    let n = model.n_dofs();
    let nh = grid.n_harmonics;
    let nc = grid.n_coeffs();
    let ns = grid.n_samples;
    let (us, vs) = to_time(model, grid, x, omega);
    let mut jac = DMatrix::zeros(n * nc, n * nc);
    let mut domega = DVector::zeros(n * nc);
    // Nonlinear part: P diag(K_u(t)) E + P diag(K_v(t)) ω E'.
    let mut pe = DMatrix::zeros(nc, nc);
    let mut ped = DMatrix::zeros(nc, nc);
    for s in 0..ns {
        let (ku, kv) = model.restoring_tangent(&us[s], &vs[s]);
        let p_col = grid.proj.column(s);
        pe.copy_from(&(p_col * grid.basis.row(s)));
        if kv.is_some() {
            ped.copy_from(&(p_col * grid.dbasis.row(s)));
        }
        for i in 0..n {
            for j in 0..n {
                let w = ku[(i, j)];
                if w != 0.0 {
                    let mut blk = jac.view_mut((i * nc, j * nc), (nc, nc));
                    blk += &pe * w;
                }
                if let Some(kv) = &kv {
                    let w = kv[(i, j)];
                    if w != 0.0 {
                        let mut blk = jac.view_mut((i * nc, j * nc), (nc, nc));
                        blk += &ped * (w * omega);
                        // ∂v/∂ω = v/ω at fixed coefficients.
                        let dv = if omega != 0.0 { vs[s][j] / omega } else { 0.0 };
                        for h in 0..nc {
                            domega[i * nc + h] += p_col[h] * w * dv;
                        }
                    }
                }
            }
        }
    }
    let m = model.mass();
    let c = model.damping();
    for k in 1..=nh {
        let kf = k as f64;
        let kw = kf * omega;
        for i in 0..n {
            for j in 0..n {
                let (ci, si) = (i * nc + k, i * nc + nh + k);
                let (cj, sj) = (j * nc + k, j * nc + nh + k);
                let mm = m[(i, j)];
                let cc = c[(i, j)];
                jac[(ci, cj)] -= kw * kw * mm;
                jac[(ci, sj)] += kw * cc;
                jac[(si, sj)] -= kw * kw * mm;
                jac[(si, cj)] -= kw * cc;
                let a = x[cj];
                let b = x[sj];
                domega[ci] += -2.0 * kf * kf * omega * mm * a + kf * cc * b;
                domega[si] += -2.0 * kf * kf * omega * mm * b - kf * cc * a;
            }
        }
    }
    Ok((jac, domega))
}

/// First-harmonic steady state of the linearized model.
pub fn linear_guess<M: HbModel + ?Sized>(model: &M, grid: &HarmonicGrid, beta: f64, omega: f64) -> Result<DVector<f64>> {
    let n = model.n_dofs();
    let nc = grid.n_coeffs();
    let nh = grid.n_harmonics;
    let dyn_k = model.linear_stiffness() - model.mass() * (omega * omega);
    let wc = model.damping() * omega;
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&dyn_k);
    a.view_mut((0, n), (n, n)).copy_from(&wc);
    a.view_mut((n, 0), (n, n)).copy_from(&(-&wc));
    a.view_mut((n, n), (n, n)).copy_from(&dyn_k);
    let mut rhs = DVector::zeros(2 * n);
    rhs.rows_mut(0, n).copy_from(&(model.load() * beta));
    let sol = a.lu().solve(&rhs).ok_or(Error::SingularJacobian { omega })?;
    let mut x = DVector::zeros(n * nc);
    for i in 0..n {
        x[i * nc + 1] = sol[i];
        x[i * nc + nh + 1] = sol[n + i];
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct HbOptions {
    /// Tolerance on `‖r‖` divided by [`residual_scale`].
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for HbOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 50,
        }
    }
}

/// Normalization applied to HB residual norms: the load magnitude `β‖F‖`, or 1
/// for an unforced problem.
pub fn residual_scale<M: HbModel + ?Sized>(model: &M, beta: f64) -> f64 {
    let s = beta * model.load().norm();
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Newton iteration on the HB residual at fixed `(β, ω)`. On success the
/// scaled residual norm is at most `opts.tol`.
pub fn hb_solve<M: HbModel + ?Sized>(
    model: &M,
    grid: &HarmonicGrid,
    beta: f64,
    omega: f64,
    guess: &DVector<f64>,
    opts: &HbOptions,
) -> Result<PeriodicOrbit> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol".into(),
            reason: "must be positive".into(),
        });
    }
    let scale = residual_scale(model, beta);
    let mut x = guess.clone();
    let mut res = f64::INFINITY;
    for _ in 0..=opts.max_iters {
        let r = hb_residual(model, grid, &x, beta, omega)?;
        res = r.norm() / scale;
        if !res.is_finite() {
            break;
        }
        if res <= opts.tol {
            let mut orbit = PeriodicOrbit::from_unknowns(&x, model.n_dofs(), grid.n_harmonics, omega);
            orbit.samples_per_period = grid.n_samples;
            return Ok(orbit);
        }
        let (j, _) = hb_jacobian(model, grid, &x, omega)?;
        let dx = j.lu().solve(&r).ok_or(Error::SingularJacobian { omega })?;
        x -= dx;
    }
    Err(Error::HbNoConvergence {
        iterations: opts.max_iters,
        residual: res,
    })
}
