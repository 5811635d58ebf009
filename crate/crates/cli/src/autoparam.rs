//! Activation of a secondary mode through autoparametric coupling, measured
//! on FOM frequency responses and on surrogate ones.

use nalgebra::DVector;
use twinrom_core::continuation::{trace_frf, HbProblem};
use twinrom_core::fom::{EigenBasis, FomSystem};
use twinrom_core::frfarc::ArcFamily;
use twinrom_core::hb::{periodic_max_abs, HarmonicGrid, PeriodicOrbit, AMPLITUDE_SCAN};
use twinrom_dl::DlRomModel;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::rom::surrogate_amplitude;

/// Secondary-to-primary amplitude ratio above which a point counts as
/// activated.
pub const ACTIVATION_LEVEL: f64 = 0.1;

/// Modal amplitude summary of one frequency response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation {
    pub beta: f64,
    pub primary_peak: f64,
    pub secondary_peak: f64,
    /// Largest primary amplitude among activated points, zero if none.
    pub plateau: f64,
}

impl Activation {
    /// Summary of `(primary, secondary)` modal amplitudes along one FRF.
    pub fn from_amplitudes(beta: f64, amps: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut out = Self {
            beta,
            primary_peak: 0.0,
            secondary_peak: 0.0,
            plateau: 0.0,
        };
        for (p, s) in amps {
            out.primary_peak = out.primary_peak.max(p);
            out.secondary_peak = out.secondary_peak.max(s);
            if s >= ACTIVATION_LEVEL * p {
                out.plateau = out.plateau.max(p);
            }
        }
        out
    }

    /// `max secondary / max primary` along the response.
    pub fn ratio(&self) -> f64 {
        if self.primary_peak > 0.0 {
            self.secondary_peak / self.primary_peak
        } else {
            0.0
        }
    }

    pub fn is_active(&self) -> bool {
        self.ratio() >= ACTIVATION_LEVEL
    }

    /// Primary level held on the activated branches relative to the primary
    /// peak; below one when the primary saturates.
    pub fn saturation(&self) -> f64 {
        if self.primary_peak > 0.0 {
            self.plateau / self.primary_peak
        } else {
            0.0
        }
    }
}

/// Covector `Mφ_i` extracting modal coordinate `i` from a state.
pub fn modal_covector(sys: &FomSystem, basis: &EigenBasis, i: usize) -> DVector<f64> {
    sys.mass() * basis.modes.column(i)
}

/// Traces the FOM response at `beta` and measures the two modal amplitudes
/// at every continuation point.
pub fn fom_activation(cfg: &PipelineConfig, sys: &FomSystem, wp: &DVector<f64>, ws: &DVector<f64>, beta: f64) -> CliResult<Activation> {
    let grid = HarmonicGrid::new(cfg.solver.n_harmonics)?;
    let prob = HbProblem::new(sys, grid, beta);
    let curve = trace_frf(&prob, &cfg.continuation(), beta).map_err(|e| CliError::Solver(format!("beta = {beta}: {e}")))?;
    let (n, nh) = (sys.n_dofs(), cfg.solver.n_harmonics);
    Ok(Activation::from_amplitudes(
        beta,
        curve.points.iter().map(|p| {
            let o = PeriodicOrbit::from_unknowns(&p.x, n, nh, p.omega);
            let amp = |w: &DVector<f64>| periodic_max_abs(|th| w.dot(&o.displacement_at_phase(th)), AMPLITUDE_SCAN);
            (amp(wp), amp(ws))
        }),
    ))
}

/// Same measurement on the surrogate over `n_points` uniform values of `s`.
pub fn surrogate_activation(model: &DlRomModel, family: &ArcFamily, wp: &DVector<f64>, ws: &DVector<f64>, beta: f64, n_points: usize) -> Activation {
    let smax = family.curves.first().map(|c| c.n_regions).unwrap_or(1) as f64;
    Activation::from_amplitudes(
        beta,
        (0..n_points).map(|k| {
            let s = smax * k as f64 / (n_points - 1).max(1) as f64;
            (surrogate_amplitude(model, wp, beta, s), surrogate_amplitude(model, ws, beta, s))
        }),
    )
}

/// Forcing level at which `ratio(β)` first reaches [`ACTIVATION_LEVEL`],
/// by bisection on `[lo, hi]` down to a relative bracket of `rel_tol`.
/// `None` when the bracket does not straddle the level.
pub fn transition_beta(mut ratio: impl FnMut(f64) -> CliResult<f64>, lo: f64, hi: f64, rel_tol: f64) -> CliResult<Option<f64>> {
    let (mut lo, mut hi) = (lo, hi);
    if ratio(lo)? >= ACTIVATION_LEVEL || ratio(hi)? < ACTIVATION_LEVEL {
        return Ok(None);
    }
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if ratio(mid)? >= ACTIVATION_LEVEL {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_tracks_activated_points_only() {
        let a = Activation::from_amplitudes(1.0, [(1.0, 0.001), (0.4, 0.2), (0.3, 0.01)]);
        assert_eq!(a.primary_peak, 1.0);
        assert_eq!(a.secondary_peak, 0.2);
        assert_eq!(a.plateau, 0.4);
        assert!((a.ratio() - 0.2).abs() < 1e-15);
        assert!(a.is_active());
        assert!((a.saturation() - 0.4).abs() < 1e-15);
        let quiet = Activation::from_amplitudes(1.0, [(1.0, 0.001), (0.5, 0.004)]);
        assert!(!quiet.is_active());
        assert_eq!(quiet.plateau, 0.0);
    }

    #[test]
    fn bisection_finds_a_step() {
        let step = |b: f64| Ok(if b >= 0.37 { 0.5 } else { 0.01 });
        let t = transition_beta(step, 0.0, 1.0, 1e-6).unwrap().unwrap();
        assert!((t - 0.37).abs() < 1e-6);
        assert_eq!(transition_beta(step, 0.5, 1.0, 1e-6).unwrap(), None);
        assert_eq!(transition_beta(step, 0.0, 0.2, 1e-6).unwrap(), None);
    }
}
