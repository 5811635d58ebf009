//! Average-acceleration Newmark marching (γ = ½, β = ¼) with a full Newton
//! solve of the nonlinear equilibrium at every step.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use super::{FomSystem, ForcingParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NewmarkState {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

impl NewmarkState {
    pub fn zeros(n: usize) -> Self {
        Self {
            u: DVector::zeros(n),
            v: DVector::zeros(n),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewmarkOptions {
    pub n_cycles: usize,
    pub steps_per_cycle: usize,
    /// Newton tolerance on the residual scaled by the inertia/force magnitude.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Stop early once the per-cycle relative L2 change drops below this.
    pub steady_tol: Option<f64>,
    /// Number of trailing cycles whose samples are kept (`None` keeps all).
    pub keep_cycles: Option<usize>,
}

impl Default for NewmarkOptions {
    fn default() -> Self {
        Self {
            n_cycles: 100,
            steps_per_cycle: 200,
            newton_tol: 1e-10,
            max_newton_iters: 30,
            steady_tol: Some(1e-8),
            keep_cycles: Some(2),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    /// Time of the first stored sample.
    pub t0: f64,
    pub displacement: Vec<DVector<f64>>,
    pub velocity: Vec<DVector<f64>>,
    /// Relative L2 change of the displacement between consecutive cycles.
    pub cycle_change: Vec<f64>,
    pub cycles_run: usize,
    pub steady: bool,
}

impl Trajectory {
    /// Displacement samples of the last complete cycle (`steps_per_cycle` of them).
    pub fn last_cycle(&self, steps_per_cycle: usize) -> &[DVector<f64>] {
        let n = self.displacement.len();
        &self.displacement[n - steps_per_cycle..]
    }

    /// `max_t |oᵀU(t)|` over the last cycle.
    pub fn last_cycle_amplitude(&self, steps_per_cycle: usize, observation: &DVector<f64>) -> f64 {
        self.last_cycle(steps_per_cycle)
            .iter()
            .map(|u| observation.dot(u).abs())
            .fold(0.0, f64::max)
    }
}

pub fn newmark_march(
    sys: &FomSystem,
    f: ForcingParams,
    init: NewmarkState,
    opts: &NewmarkOptions,
) -> Result<Trajectory> {
    let n = sys.n_dofs();
    if opts.steps_per_cycle < 50 {
        return Err(Error::InvalidParameter {
            name: "steps_per_cycle".into(),
            reason: format!("must be at least 50, got {}", opts.steps_per_cycle),
        });
    }
    if init.u.len() != n || init.v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: init.u.len(),
        });
    }
    let period = TAU / f.omega;
    let dt = period / opts.steps_per_cycle as f64;
    let load = |t: f64| sys.forcing_shape() * (f.beta * (f.omega * t).cos());
    let m = sys.mass();
    let c = sys.damping();
    let a_coef = 4.0 / (dt * dt);
    let v_coef = 2.0 / dt;
    let dyn_lin: DMatrix<f64> = m * a_coef + c * v_coef;

    let mut u = init.u;
    let mut v = init.v;
    // Consistent initial acceleration.
    let rhs0 = load(0.0) - c * &v - sys.internal_force(&u);
    let mut acc = m
        .clone()
        .lu()
        .solve(&rhs0)
        .ok_or_else(|| Error::InvalidSystem("singular mass matrix".into()))?;

    let keep = opts.keep_cycles.unwrap_or(opts.n_cycles + 1);
    let mut traj = Trajectory {
        dt,
        t0: 0.0,
        displacement: Vec::new(),
        velocity: Vec::new(),
        cycle_change: Vec::new(),
        cycles_run: 0,
        steady: false,
    };
    let mut prev_cycle: Vec<DVector<f64>> = Vec::new();
    let mut cur_cycle: Vec<DVector<f64>> = Vec::with_capacity(opts.steps_per_cycle);
    let mut cur_vel: Vec<DVector<f64>> = Vec::with_capacity(opts.steps_per_cycle);
    let mut step = 0usize;

    for cycle in 0..opts.n_cycles {
        for _ in 0..opts.steps_per_cycle {
            step += 1;
            let t = step as f64 * dt;
            let p = load(t);
            // Predictor terms that do not depend on u_{n+1}.
            let a_hist = &u * a_coef + &v * (4.0 / dt) + &acc;
            let v_hist = &u * v_coef + &v;
            let mut un = u.clone();
            let scale = p.norm() + (m * &a_hist).norm() + sys.internal_force(&u).norm() + f64::MIN_POSITIVE;
            let mut converged = false;
            let mut last = f64::INFINITY;
            for it in 0..opts.max_newton_iters {
                let an = &un * a_coef - &a_hist;
                let vn = &un * v_coef - &v_hist;
                let r = m * &an + c * &vn + sys.internal_force(&un) - &p;
                last = r.norm() / scale;
                if last <= opts.newton_tol {
                    converged = true;
                    break;
                }
                let jac = &dyn_lin + sys.tangent_stiffness(&un);
                let du = jac.lu().solve(&r).ok_or(Error::NewtonDivergence {
                    step,
                    iterations: it + 1,
                    residual: last,
                })?;
                un -= du;
            }
            if !converged {
                return Err(Error::NewtonDivergence {
                    step,
                    iterations: opts.max_newton_iters,
                    residual: last,
                });
            }
            let an = &un * a_coef - &a_hist;
            let vn = &un * v_coef - &v_hist;
            u = un;
            v = vn;
            acc = an;
            cur_cycle.push(u.clone());
            cur_vel.push(v.clone());
        }
        traj.cycles_run = cycle + 1;
        if !prev_cycle.is_empty() {
            let mut diff = 0.0;
            let mut norm = 0.0;
            for (a, b) in cur_cycle.iter().zip(&prev_cycle) {
                diff += (a - b).norm_squared();
                norm += a.norm_squared();
            }
            let change = if norm > 0.0 { (diff / norm).sqrt() } else { diff.sqrt() };
            traj.cycle_change.push(change);
            if let Some(tol) = opts.steady_tol {
                if change < tol {
                    traj.steady = true;
                }
            }
        }
        traj.displacement.extend(cur_cycle.iter().cloned());
        traj.velocity.extend(cur_vel.drain(..));
        let max_len = keep * opts.steps_per_cycle;
        if traj.displacement.len() > max_len {
            let drop = traj.displacement.len() - max_len;
            traj.displacement.drain(..drop);
            traj.velocity.drain(..drop);
        }
        prev_cycle = std::mem::take(&mut cur_cycle);
        if traj.steady {
            break;
        }
    }
    traj.t0 = (step + 1 - traj.displacement.len()) as f64 * dt;
    Ok(traj)
}
