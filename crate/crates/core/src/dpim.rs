//! Single-master direct parametrization of the invariant manifold, with a
//! second-order mapping and cubic reduced dynamics
//!
//! ```text
//! U = φR + aR² + bS² + cRS          Ṙ = S
//! V = φS + αR² + β_v S² + γ RS      Ṡ = −ξS − ω²R − AR³ − BRS² − CR²S + β β_f cos ωt
//! ```
//!
//! The mapping vectors solve the order-two invariance equations of the
//! autonomous undamped system. At cubic order the mapping is chosen without a
//! master component, so `A`, `B` collect the full master projection of the
//! cubic forcing terms. `C` comes from the same projection with the order-two
//! mapping of the damped flow.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::continuation::{trace_frf, ContinuationSettings, FrfCurve, HbProblem};
use crate::error::{Error, Result};
use crate::fom::{eigen_solve, FomSystem};
use crate::hb::{HarmonicGrid, HbModel};

/// Minimum relative distance between `k ω_m` (k = 1, 2, 3) and every other
/// eigenfrequency.
pub const RESONANCE_MARGIN: f64 = 0.05;
/// Lowest quality factor for which the light-damping treatment is accepted.
pub const MIN_QUALITY: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DpimModel {
    pub master_index: usize,
    pub phi: DVector<f64>,
    pub omega_m: f64,
    pub map_a: DVector<f64>,
    pub map_b: DVector<f64>,
    pub map_c: DVector<f64>,
    pub vel_alpha: DVector<f64>,
    pub vel_beta: DVector<f64>,
    pub vel_gamma: DVector<f64>,
    pub coeff_a: f64,
    pub coeff_b: f64,
    pub coeff_c: f64,
    /// `ω₀ / Q`.
    pub damping: f64,
    /// `β_f = φᵀF`.
    pub forcing_scalar: f64,
    /// Output functional applied to decoded displacements.
    pub observation: DVector<f64>,
}

/// Order-two mapping coefficients on the monomials `(R², RS, S²)`.
struct Order2 {
    disp: [DVector<f64>; 3],
    vel: [DVector<f64>; 3],
}

/// Solves `M (D² + ξD) W + K W = −g e_{R²}` on the monomial basis
/// `(R², RS, S²)`, where `D` is the Lie derivative along the linear flow.
fn solve_order2(sys: &FomSystem, g: &DVector<f64>, omega: f64, xi: f64) -> Result<Order2> {
    let n = sys.n_dofs();
    let w2 = omega * omega;
    let d = DMatrix::from_row_slice(3, 3, &[0.0, -w2, 0.0, 2.0, -xi, -2.0 * w2, 0.0, 1.0, -2.0 * xi]);
    let d2 = &d * &d + &d * xi;
    let mut op = DMatrix::zeros(3 * n, 3 * n);
    for p in 0..3 {
        for q in 0..3 {
            let mut blk = op.view_mut((p * n, q * n), (n, n));
            blk += sys.mass() * d2[(p, q)];
            if p == q {
                blk += sys.stiffness();
            }
        }
    }
    let mut rhs = DVector::zeros(3 * n);
    rhs.rows_mut(0, n).copy_from(&(-g));
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::ResonanceGuard("singular second-order homological operator".into()))?;
    let disp = [0, 1, 2].map(|p| sol.rows(p * n, n).into_owned());
    let vel = [0, 1, 2].map(|p| {
        let mut v = DVector::zeros(n);
        for q in 0..3 {
            v += &disp[q] * d[(p, q)];
        }
        v
    });
    Ok(Order2 { disp, vel })
}

/// Checks that `k ω_m` stays clear of every other eigenfrequency.
pub fn resonance_guard(frequencies: &[f64], master: usize) -> Result<()> {
    let wm = frequencies[master];
    for (i, &wi) in frequencies.iter().enumerate() {
        if i == master {
            continue;
        }
        for k in 1..=3 {
            let kw = k as f64 * wm;
            if (kw - wi).abs() < RESONANCE_MARGIN * wi {
                return Err(Error::ResonanceGuard(format!(
                    "{k}:1 resonance between master mode {master} (omega = {wm}) and mode {i} (omega = {wi}), ratio {:.4}",
                    wi / wm
                )));
            }
        }
    }
    Ok(())
}

/// Builds the reduced model on `master_index`.
pub fn build_dpim(sys: &FomSystem, master_index: usize) -> Result<DpimModel> {
    let n = sys.n_dofs();
    if master_index >= n {
        return Err(Error::IndexOutOfRange {
            index: master_index,
            size: n,
        });
    }
    if sys.quality() < MIN_QUALITY {
        return Err(Error::InvalidParameter {
            name: "q".into(),
            reason: format!("light-damping reduction needs Q >= {MIN_QUALITY}, got {}", sys.quality()),
        });
    }
    let basis = eigen_solve(sys, n)?;
    resonance_guard(&basis.frequencies, master_index)?;
    let phi = basis.mode(master_index);
    let omega = basis.frequencies[master_index];
    let xi = sys.damping_ratio();

    let g = sys.quadratic_bilinear(&phi, &phi);
    let undamped = solve_order2(sys, &g, omega, 0.0)?;
    let damped = solve_order2(sys, &g, omega, xi)?;
    let [map_a, map_c, map_b] = undamped.disp;
    let [vel_alpha, vel_gamma, vel_beta] = undamped.vel;

    let h = sys.cubic_force(&phi);
    let coeff_a = phi.dot(&(sys.quadratic_bilinear(&phi, &map_a) * 2.0 + h));
    let coeff_b = 2.0 * phi.dot(&sys.quadratic_bilinear(&phi, &map_b));
    let coeff_c = 2.0 * phi.dot(&sys.quadratic_bilinear(&phi, &damped.disp[1]));

    Ok(DpimModel {
        master_index,
        forcing_scalar: phi.dot(sys.forcing_shape()),
        observation: sys.observation().clone(),
        phi,
        omega_m: omega,
        map_a,
        map_b,
        map_c,
        vel_alpha,
        vel_beta,
        vel_gamma,
        coeff_a,
        coeff_b,
        coeff_c,
        damping: xi,
    })
}

impl DpimModel {
    pub fn n_dofs(&self) -> usize {
        self.phi.len()
    }

    /// `(Ṙ, Ṡ)` of the forced reduced dynamics at time `t`.
    pub fn reduced_rhs(&self, r: f64, s: f64, t: f64, beta: f64, omega: f64) -> (f64, f64) {
        let sdot = -self.damping * s - self.omega_m * self.omega_m * r - self.coeff_a * r * r * r
            - self.coeff_b * r * s * s
            - self.coeff_c * r * r * s
            + beta * self.forcing_scalar * (omega * t).cos();
        (s, sdot)
    }

    /// Full displacement and velocity on the manifold.
    pub fn decode(&self, r: f64, s: f64) -> (DVector<f64>, DVector<f64>) {
        let u = &self.phi * r + &self.map_a * (r * r) + &self.map_b * (s * s) + &self.map_c * (r * s);
        let v = &self.phi * s + &self.vel_alpha * (r * r) + &self.vel_beta * (s * s) + &self.vel_gamma * (r * s);
        (u, v)
    }

    /// Residual of the invariance equations of the autonomous undamped
    /// system at `(R, S)`: the kinematic part `∂U/∂z · ż − V` and the dynamic
    /// part `M ∂V/∂z · ż + f(U)` stacked.
    pub fn invariance_residual(&self, sys: &FomSystem, r: f64, s: f64) -> DVector<f64> {
        let n = self.n_dofs();
        let rdot = s;
        let sdot = -self.omega_m * self.omega_m * r - self.coeff_a * r * r * r - self.coeff_b * r * s * s;
        let (u, v) = self.decode(r, s);
        let du_dr = &self.phi + &self.map_a * (2.0 * r) + &self.map_c * s;
        let du_ds = &self.map_b * (2.0 * s) + &self.map_c * r;
        let dv_dr = &self.vel_alpha * (2.0 * r) + &self.vel_gamma * s;
        let dv_ds = &self.phi + &self.vel_beta * (2.0 * s) + &self.vel_gamma * r;
        let kin = du_dr * rdot + du_ds * sdot - v;
        let dynm = sys.mass() * (dv_dr * rdot + dv_ds * sdot) + sys.internal_force(&u);
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&kin);
        out.rows_mut(n, n).copy_from(&dynm);
        out
    }

    /// The reduced dynamics as a one-dof periodic model.
    pub fn oscillator(&self) -> ReducedOscillator<'_> {
        ReducedOscillator {
            model: self,
            m: DMatrix::from_element(1, 1, 1.0),
            c: DMatrix::from_element(1, 1, self.damping),
            k: DMatrix::from_element(1, 1, self.omega_m * self.omega_m),
            load: DVector::from_element(1, self.forcing_scalar),
        }
    }

    /// Keyed text with 17 significant digits per value.
    pub fn to_text(&self) -> String {
        let mut out = String::from("DPIM1\n");
        let scalar = |out: &mut String, k: &str, v: f64| {
            let _ = writeln!(out, "{k} {v:.16e}");
        };
        let vector = |out: &mut String, k: &str, v: &DVector<f64>| {
            let _ = write!(out, "{k}");
            for x in v.iter() {
                let _ = write!(out, " {x:.16e}");
            }
            out.push('\n');
        };
        let _ = writeln!(out, "n_dofs {}", self.n_dofs());
        let _ = writeln!(out, "master_index {}", self.master_index);
        scalar(&mut out, "omega_m", self.omega_m);
        scalar(&mut out, "damping", self.damping);
        scalar(&mut out, "forcing_scalar", self.forcing_scalar);
        scalar(&mut out, "coeff_a", self.coeff_a);
        scalar(&mut out, "coeff_b", self.coeff_b);
        scalar(&mut out, "coeff_c", self.coeff_c);
        vector(&mut out, "phi", &self.phi);
        vector(&mut out, "map_a", &self.map_a);
        vector(&mut out, "map_b", &self.map_b);
        vector(&mut out, "map_c", &self.map_c);
        vector(&mut out, "vel_alpha", &self.vel_alpha);
        vector(&mut out, "vel_beta", &self.vel_beta);
        vector(&mut out, "vel_gamma", &self.vel_gamma);
        vector(&mut out, "observation", &self.observation);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("DPIM1") {
            return Err(Error::Parse("missing DPIM1 header".into()));
        }
        let mut fields = std::collections::BTreeMap::new();
        for line in lines {
            let mut it = line.split_whitespace();
            let Some(key) = it.next() else { continue };
            fields.insert(key.to_string(), it.map(str::to_string).collect::<Vec<_>>());
        }
        let get = |k: &str| fields.get(k).ok_or_else(|| Error::Parse(format!("missing field `{k}`")));
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
        let int = |k: &str| -> Result<usize> {
            let v = get(k)?;
            v.first()
                .ok_or_else(|| Error::Parse(format!("empty field `{k}`")))?
                .parse()
                .map_err(|e| Error::Parse(format!("{k}: {e}")))
        };
        let scalar = |k: &str| -> Result<f64> {
            let v = get(k)?;
            if v.len() != 1 {
                return Err(Error::Parse(format!("field `{k}` expects one value")));
            }
            num(&v[0])
        };
        let n = int("n_dofs")?;
        let vector = |k: &str| -> Result<DVector<f64>> {
            let v = get(k)?;
            if v.len() != n {
                return Err(Error::Parse(format!("field `{k}` expects {n} values, got {}", v.len())));
            }
            Ok(DVector::from_vec(v.iter().map(|s| num(s)).collect::<Result<_>>()?))
        };
        Ok(Self {
            master_index: int("master_index")?,
            phi: vector("phi")?,
            omega_m: scalar("omega_m")?,
            map_a: vector("map_a")?,
            map_b: vector("map_b")?,
            map_c: vector("map_c")?,
            vel_alpha: vector("vel_alpha")?,
            vel_beta: vector("vel_beta")?,
            vel_gamma: vector("vel_gamma")?,
            coeff_a: scalar("coeff_a")?,
            coeff_b: scalar("coeff_b")?,
            coeff_c: scalar("coeff_c")?,
            damping: scalar("damping")?,
            forcing_scalar: scalar("forcing_scalar")?,
            observation: vector("observation")?,
        })
    }
}

/// `R̈ + ξṘ + ω²R + AR³ + BRṘ² + CR²Ṙ = β β_f cos ωt`; outputs are read
/// through the decoded displacement.
pub struct ReducedOscillator<'a> {
    model: &'a DpimModel,
    m: DMatrix<f64>,
    c: DMatrix<f64>,
    k: DMatrix<f64>,
    load: DVector<f64>,
}

impl HbModel for ReducedOscillator<'_> {
    fn n_dofs(&self) -> usize {
        1
    }
    fn mass(&self) -> &DMatrix<f64> {
        &self.m
    }
    fn damping(&self) -> &DMatrix<f64> {
        &self.c
    }
    fn linear_stiffness(&self) -> &DMatrix<f64> {
        &self.k
    }
    fn load(&self) -> &DVector<f64> {
        &self.load
    }
    fn restoring_force(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let (r, s) = (u[0], v[0]);
        let md = self.model;
        DVector::from_element(
            1,
            md.omega_m * md.omega_m * r + md.coeff_a * r * r * r + md.coeff_b * r * s * s + md.coeff_c * r * r * s,
        )
    }
    fn restoring_tangent(&self, u: &DVector<f64>, v: &DVector<f64>) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
        let (r, s) = (u[0], v[0]);
        let md = self.model;
        let dr = md.omega_m * md.omega_m + 3.0 * md.coeff_a * r * r + md.coeff_b * s * s + 2.0 * md.coeff_c * r * s;
        let ds = 2.0 * md.coeff_b * r * s + md.coeff_c * r * r;
        (DMatrix::from_element(1, 1, dr), Some(DMatrix::from_element(1, 1, ds)))
    }
    fn observe(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let (disp, _) = self.model.decode(u[0], v[0]);
        self.model.observation.dot(&disp)
    }
}

/// Reduced FRF traced by harmonic balance on the reduced oscillator.
pub fn dpim_frf(model: &DpimModel, grid: HarmonicGrid, beta: f64, settings: &ContinuationSettings) -> Result<FrfCurve> {
    let osc = model.oscillator();
    let prob = HbProblem::new(&osc, grid, beta);
    trace_frf(&prob, settings, beta)
}
