//! Pseudo-arclength continuation of periodic solutions in the forcing
//! frequency.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hb::{hb_jacobian, hb_residual, linear_guess, orbit_amplitude, residual_scale, HarmonicGrid, HbModel, PeriodicOrbit};

/// A parametrized residual `R(x, ω) = 0`.
pub trait ContinuationProblem {
    fn dim(&self) -> usize;
    fn residual(&self, x: &DVector<f64>, omega: f64) -> DVector<f64>;
    /// `(∂R/∂x, ∂R/∂ω)`.
    fn jacobian(&self, x: &DVector<f64>, omega: f64) -> (DMatrix<f64>, DVector<f64>);
    fn amplitude(&self, x: &DVector<f64>, omega: f64) -> f64;
    /// Starting point for the first Newton solve at `omega`.
    fn initial_guess(&self, omega: f64) -> DVector<f64>;
}

/// Harmonic-balance residual of an [`HbModel`] at a fixed forcing level,
/// normalized by [`residual_scale`].
pub struct HbProblem<'a, M: HbModel + ?Sized> {
    pub model: &'a M,
    pub grid: HarmonicGrid,
    pub beta: f64,
    scale: f64,
}

impl<'a, M: HbModel + ?Sized> HbProblem<'a, M> {
    pub fn new(model: &'a M, grid: HarmonicGrid, beta: f64) -> Self {
        let scale = residual_scale(model, beta);
        Self {
            model,
            grid,
            beta,
            scale,
        }
    }

    pub fn orbit(&self, x: &DVector<f64>, omega: f64) -> PeriodicOrbit {
        let mut o = PeriodicOrbit::from_unknowns(x, self.model.n_dofs(), self.grid.n_harmonics(), omega);
        o.samples_per_period = self.grid.n_samples();
        o
    }
}

impl<M: HbModel + ?Sized> ContinuationProblem for HbProblem<'_, M> {
    fn dim(&self) -> usize {
        self.model.n_dofs() * self.grid.n_coeffs()
    }

    fn residual(&self, x: &DVector<f64>, omega: f64) -> DVector<f64> {
        hb_residual(self.model, &self.grid, x, self.beta, omega).expect("dimension checked by caller") / self.scale
    }

    fn jacobian(&self, x: &DVector<f64>, omega: f64) -> (DMatrix<f64>, DVector<f64>) {
        let (j, d) = hb_jacobian(self.model, &self.grid, x, omega).expect("dimension checked by caller");
        (j / self.scale, d / self.scale)
    }

    fn amplitude(&self, x: &DVector<f64>, omega: f64) -> f64 {
        orbit_amplitude(self.model, &self.orbit(x, omega))
    }

    fn initial_guess(&self, omega: f64) -> DVector<f64> {
        linear_guess(self.model, &self.grid, self.beta, omega).unwrap_or_else(|_| DVector::zeros(self.dim()))
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationSettings {
    pub omega_min: f64,
    pub omega_max: f64,
    pub step_init: f64,
    pub step_min: f64,
    pub step_max: f64,
    /// Corrector tolerance on the residual norm.
    pub tol: f64,
    pub max_corrector_iters: usize,
    /// Displacement scale dividing the unknowns in the arc-length metric.
    pub x_scale: f64,
    /// Frequency scale dividing `ω` in the arc-length metric.
    pub omega_scale: f64,
    pub max_points: usize,
}

impl ContinuationSettings {
    pub fn new(omega_min: f64, omega_max: f64) -> Self {
        Self {
            omega_min,
            omega_max,
            step_init: 1e-3,
            step_min: 1e-9,
            step_max: 2e-2,
            tol: 1e-10,
            max_corrector_iters: 8,
            x_scale: 1.0,
            omega_scale: 1.0,
            max_points: 20_000,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: &str| {
            Err(Error::InvalidParameter {
                name: name.into(),
                reason: reason.into(),
            })
        };
        if !(self.omega_min > 0.0 && self.omega_min < self.omega_max) {
            return bad("omega_range", "need 0 < omega_min < omega_max");
        }
        if !(self.step_min > 0.0 && self.step_min <= self.step_init && self.step_init <= self.step_max) {
            return bad("step", "need 0 < step_min <= step_init <= step_max");
        }
        if !(self.tol > 0.0 && self.x_scale > 0.0 && self.omega_scale > 0.0) {
            return bad("tol", "tolerance and scales must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrfPoint {
    pub omega: f64,
    pub amplitude: f64,
    pub x: DVector<f64>,
    /// `ω` component of the unit tangent in scaled coordinates.
    pub tangent_omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrfCurve {
    pub beta: f64,
    pub points: Vec<FrfPoint>,
    /// Indices `i` where the tangent `ω` component changes sign between
    /// points `i - 1` and `i`.
    pub fold_indices: Vec<usize>,
}

impl FrfCurve {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.omega).collect()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.amplitude).collect()
    }

    /// Index of the largest amplitude.
    pub fn peak_index(&self) -> usize {
        self.points
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.amplitude.total_cmp(&b.1.amplitude))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Amplitude at `omega` by linear interpolation on every branch crossing
    /// `omega`; several values inside a fold region.
    pub fn amplitudes_at(&self, omega: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for w in self.points.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let (lo, hi) = if a.omega <= b.omega { (a, b) } else { (b, a) };
            if omega >= lo.omega && omega <= hi.omega && hi.omega > lo.omega {
                let t = (omega - lo.omega) / (hi.omega - lo.omega);
                out.push(lo.amplitude + t * (hi.amplitude - lo.amplitude));
            }
        }
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs());
        out
    }
}

struct Scaled<'p, P: ContinuationProblem + ?Sized> {
    problem: &'p P,
    xs: f64,
    ws: f64,
}

impl<P: ContinuationProblem + ?Sized> Scaled<'_, P> {
    fn split(&self, y: &DVector<f64>) -> (DVector<f64>, f64) {
        let n = self.problem.dim();
        (y.rows(0, n) * self.xs, y[n] * self.ws)
    }

    fn join(&self, x: &DVector<f64>, omega: f64) -> DVector<f64> {
        let n = self.problem.dim();
        let mut y = DVector::zeros(n + 1);
        y.rows_mut(0, n).copy_from(&(x / self.xs));
        y[n] = omega / self.ws;
        y
    }

    /// Jacobian of the residual with respect to the scaled variables.
    fn jacobian(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let n = self.problem.dim();
        let (x, w) = self.split(y);
        let (jx, jw) = self.problem.jacobian(&x, w);
        let mut j = DMatrix::zeros(n, n + 1);
        j.view_mut((0, 0), (n, n)).copy_from(&(jx * self.xs));
        j.set_column(n, &(jw * self.ws));
        j
    }

    /// Unit tangent from `[J; t_refᵀ] τ = [0; 1]`, oriented along `t_ref`.
    fn tangent(&self, y: &DVector<f64>, t_ref: &DVector<f64>) -> Option<DVector<f64>> {
        let n = self.problem.dim();
        let mut a = DMatrix::zeros(n + 1, n + 1);
        a.view_mut((0, 0), (n, n + 1)).copy_from(&self.jacobian(y));
        a.row_mut(n).copy_from(&t_ref.transpose());
        let mut rhs = DVector::zeros(n + 1);
        rhs[n] = 1.0;
        let mut t = a.lu().solve(&rhs)?;
        let norm = t.norm();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        t /= norm;
        if t.dot(t_ref) < 0.0 {
            t = -t;
        }
        Some(t)
    }
}

/// Outcome of one corrector call.
#[derive(Debug, Clone)]
pub struct Corrected {
    pub x: DVector<f64>,
    pub omega: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Newton on `{R(x, ω) = 0, τᵀ(y − y_pred) = 0}` in the scaled variables
/// `y = (x / x_scale, ω / ω_scale)`. `tangent` is expressed in the same
/// scaled variables.
pub fn corrector<P: ContinuationProblem + ?Sized>(
    problem: &P,
    settings: &ContinuationSettings,
    x_pred: &DVector<f64>,
    omega_pred: f64,
    tangent: &DVector<f64>,
) -> Result<Corrected> {
    let sc = Scaled {
        problem,
        xs: settings.x_scale,
        ws: settings.omega_scale,
    };
    let n = problem.dim();
    if tangent.len() != n + 1 || x_pred.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            got: tangent.len(),
        });
    }
    if tangent.norm() == 0.0 {
        return Err(Error::InvalidParameter {
            name: "tangent".into(),
            reason: "must be nonzero".into(),
        });
    }
    let y_pred = sc.join(x_pred, omega_pred);
    let mut y = y_pred.clone();
    let mut res = f64::INFINITY;
    for it in 0..=settings.max_corrector_iters {
        let (x, w) = sc.split(&y);
        let r = problem.residual(&x, w);
        res = r.norm();
        if !res.is_finite() {
            break;
        }
        if res <= settings.tol {
            return Ok(Corrected {
                x,
                omega: w,
                iterations: it,
                residual: res,
            });
        }
        if it == settings.max_corrector_iters {
            break;
        }
        let mut a = DMatrix::zeros(n + 1, n + 1);
        a.view_mut((0, 0), (n, n + 1)).copy_from(&sc.jacobian(&y));
        a.row_mut(n).copy_from(&tangent.transpose());
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&r);
        rhs[n] = tangent.dot(&(&y - &y_pred));
        match a.lu().solve(&rhs) {
            Some(dy) => y -= dy,
            None => return Err(Error::SingularJacobian { omega: w }),
        }
    }
    Err(Error::NewtonDivergence {
        step: 0,
        iterations: settings.max_corrector_iters,
        residual: res,
    })
}

/// Newton at fixed `ω`.
pub fn solve_at<P: ContinuationProblem + ?Sized>(
    problem: &P,
    omega: f64,
    guess: &DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<DVector<f64>> {
    let mut x = guess.clone();
    let mut res = f64::INFINITY;
    for _ in 0..=max_iters {
        let r = problem.residual(&x, omega);
        res = r.norm();
        if !res.is_finite() {
            break;
        }
        if res <= tol {
            return Ok(x);
        }
        let (j, _) = problem.jacobian(&x, omega);
        let dx = j.lu().solve(&r).ok_or(Error::SingularJacobian { omega })?;
        x -= dx;
    }
    Err(Error::HbNoConvergence {
        iterations: max_iters,
        residual: res,
    })
}

/// Corrections needing at most this many Newton iterations count as easy.
const EASY_ITERS: usize = 3;
/// Consecutive easy corrections before the step doubles.
const EASY_STREAK: usize = 3;
/// Minimum cosine between consecutive tangents for a step to be accepted.
const MIN_TANGENT_COS: f64 = 0.9;

/// Traces the branch from `omega_min` to `omega_max`, following folds.
pub fn trace_frf<P: ContinuationProblem + ?Sized>(problem: &P, settings: &ContinuationSettings, beta: f64) -> Result<FrfCurve> {
    settings.validate()?;
    let n = problem.dim();
    let sc = Scaled {
        problem,
        xs: settings.x_scale,
        ws: settings.omega_scale,
    };
    let max_newton = 4 * settings.max_corrector_iters.max(10);
    let x0 = solve_at(
        problem,
        settings.omega_min,
        &problem.initial_guess(settings.omega_min),
        settings.tol,
        max_newton,
    )?;
    let mut y = sc.join(&x0, settings.omega_min);
    let mut t_ref = DVector::zeros(n + 1);
    t_ref[n] = 1.0;
    let mut t = sc.tangent(&y, &t_ref).ok_or(Error::SingularJacobian {
        omega: settings.omega_min,
    })?;

    let mut points = vec![FrfPoint {
        omega: settings.omega_min,
        amplitude: problem.amplitude(&x0, settings.omega_min),
        x: x0,
        tangent_omega: t[n],
    }];
    let mut step = settings.step_init;
    let mut easy = 0usize;

    loop {
        if points.len() >= settings.max_points {
            return Err(Error::TooManyPoints(settings.max_points));
        }
        let y_pred = &y + &t * step;
        let (xp, wp) = sc.split(&y_pred);
        let accepted = corrector(problem, settings, &xp, wp, &t).ok().and_then(|c| {
            let y_new = sc.join(&c.x, c.omega);
            let t_new = sc.tangent(&y_new, &t)?;
            let dist = (&y_new - &y).norm();
            (t_new.dot(&t) >= MIN_TANGENT_COS && dist <= 2.0 * step).then_some((c, y_new, t_new))
        });
        let Some((c, y_new, t_new)) = accepted else {
            step *= 0.5;
            easy = 0;
            if step < settings.step_min {
                let last = points.last().expect("start point");
                return Err(Error::StepUnderflow {
                    omega: last.omega,
                    amplitude: last.amplitude,
                    points: points.len(),
                });
            }
            continue;
        };

        if c.omega >= settings.omega_max || c.omega <= settings.omega_min {
            // Land exactly on the boundary, starting from the chord.
            let target = if c.omega >= settings.omega_max {
                settings.omega_max
            } else {
                settings.omega_min
            };
            let (x_old, w_old) = sc.split(&y);
            let frac = ((target - w_old) / (c.omega - w_old)).clamp(0.0, 1.0);
            let guess = &x_old + (&c.x - &x_old) * frac;
            let x_end = solve_at(problem, target, &guess, settings.tol, max_newton)?;
            let y_end = sc.join(&x_end, target);
            let t_end = sc.tangent(&y_end, &t).unwrap_or_else(|| t.clone());
            points.push(FrfPoint {
                omega: target,
                amplitude: problem.amplitude(&x_end, target),
                x: x_end,
                tangent_omega: t_end[n],
            });
            break;
        }

        points.push(FrfPoint {
            omega: c.omega,
            amplitude: problem.amplitude(&c.x, c.omega),
            x: c.x,
            tangent_omega: t_new[n],
        });
        y = y_new;
        t = t_new;
        if c.iterations <= EASY_ITERS {
            easy += 1;
            if easy >= EASY_STREAK {
                step = (2.0 * step).min(settings.step_max);
                easy = 0;
            }
        } else {
            easy = 0;
        }
    }

    let fold_indices = (1..points.len())
        .filter(|&i| points[i].tangent_omega.signum() != points[i - 1].tangent_omega.signum())
        .collect();
    Ok(FrfCurve {
        beta,
        points,
        fold_indices,
    })
}
