//! FOM frequency responses, arc-length parametrization and snapshot sampling.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use twinrom_core::continuation::{corrector, trace_frf, ContinuationSettings, FrfCurve, HbProblem};
use twinrom_core::fom::FomSystem;
use twinrom_core::frfarc::{parametrize_curve, ArcFamily, ArcParametrizedFrf, AxisScaling};
use twinrom_core::hb::{HarmonicGrid, PeriodicOrbit};
use twinrom_dl::SnapshotSet;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

/// Converged FOM orbits on a uniform `s` grid of one curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    pub beta: f64,
    pub s: Vec<f64>,
    pub omega: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub orbits: Vec<PeriodicOrbit>,
}

/// Traced, parametrized and sampled curves for one list of forcing levels.
#[derive(Debug, Clone)]
pub struct CurveSet {
    pub curves: Vec<FrfCurve>,
    pub arcs: Vec<ArcParametrizedFrf>,
    pub sampled: Vec<SampledCurve>,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub train: CurveSet,
    pub test: CurveSet,
    pub family: ArcFamily,
    pub train_set: SnapshotSet,
    pub test_set: SnapshotSet,
}

pub fn trace_curves(sys: &FomSystem, cfg: &PipelineConfig, betas: &[f64]) -> CliResult<Vec<FrfCurve>> {
    let grid = HarmonicGrid::new(cfg.solver.n_harmonics)?;
    let settings = cfg.continuation();
    betas
        .iter()
        .map(|&b| {
            let prob = HbProblem::new(sys, grid.clone(), b);
            trace_frf(&prob, &settings, b).map_err(|e| CliError::Solver(format!("beta = {b}: {e}")))
        })
        .collect()
}

/// Orbits at `n_points` uniform values of `s` over `[0, n_regions]`.
/// Unknowns are interpolated along the continuation polyline and corrected
/// on the hyperplane normal to the local chord.
pub fn sample_curve(
    sys: &FomSystem,
    grid: &HarmonicGrid,
    settings: &ContinuationSettings,
    curve: &FrfCurve,
    arc: &ArcParametrizedFrf,
    n_points: usize,
) -> CliResult<SampledCurve> {
    let prob = HbProblem::new(sys, grid.clone(), curve.beta);
    let n = sys.n_dofs();
    let nh = grid.n_harmonics();
    let smax = arc.n_regions as f64;
    let mut out = SampledCurve {
        beta: curve.beta,
        s: Vec::with_capacity(n_points),
        omega: Vec::with_capacity(n_points),
        amplitude: Vec::with_capacity(n_points),
        orbits: Vec::with_capacity(n_points),
    };
    for k in 0..n_points {
        let s = smax * k as f64 / (n_points - 1) as f64;
        let i = arc.s.partition_point(|&v| v <= s).clamp(1, arc.s.len() - 1) - 1;
        let t = (s - arc.s[i]) / (arc.s[i + 1] - arc.s[i]);
        let (p0, p1) = (&curve.points[i], &curve.points[i + 1]);
        let (x, omega) = if t <= 0.0 {
            (p0.x.clone(), p0.omega)
        } else if t >= 1.0 {
            (p1.x.clone(), p1.omega)
        } else {
            let xp = &p0.x + (&p1.x - &p0.x) * t;
            let wp = p0.omega + t * (p1.omega - p0.omega);
            let mut tan = DVector::zeros(xp.len() + 1);
            tan.rows_mut(0, xp.len()).copy_from(&((&p1.x - &p0.x) / settings.x_scale));
            tan[xp.len()] = (p1.omega - p0.omega) / settings.omega_scale;
            let c = corrector(&prob, settings, &xp, wp, &tan)
                .map_err(|e| CliError::Solver(format!("sampling beta = {} at s = {s}: {e}", curve.beta)))?;
            (c.x, c.omega)
        };
        let mut orbit = PeriodicOrbit::from_unknowns(&x, n, nh, omega);
        orbit.samples_per_period = grid.n_samples();
        out.amplitude.push(twinrom_core::hb::orbit_amplitude(sys, &orbit));
        out.s.push(s);
        out.omega.push(omega);
        out.orbits.push(orbit);
    }
    Ok(out)
}

/// Snapshot columns `U(t̂)` at `samples_per_period` phases of every sampled
/// orbit, with parameter rows `(t̂, β, s)`.
pub fn snapshot_set(curves: &[SampledCurve], samples_per_period: usize) -> CliResult<SnapshotSet> {
    let n_dofs = curves
        .first()
        .and_then(|c| c.orbits.first())
        .map(|o| o.n_dofs())
        .ok_or_else(|| CliError::Solver("no sampled orbits".into()))?;
    let total: usize = curves.iter().map(|c| c.orbits.len()).sum::<usize>() * samples_per_period;
    let mut m = DMatrix::zeros(n_dofs, total);
    let mut p = DMatrix::zeros(total, 3);
    let mut col = 0;
    for c in curves {
        for (orbit, &s) in c.orbits.iter().zip(&c.s) {
            for j in 0..samples_per_period {
                let th = j as f64 / samples_per_period as f64;
                m.set_column(col, &orbit.displacement_at_phase(TAU * th));
                p[(col, 0)] = th;
                p[(col, 1)] = c.beta;
                p[(col, 2)] = s;
                col += 1;
            }
        }
    }
    Ok(SnapshotSet::new(m, p, samples_per_period)?)
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn sample_all(
    sys: &FomSystem,
    cfg: &PipelineConfig,
    curves: &[FrfCurve],
    scaling: &AxisScaling,
    overrides: Option<&Vec<Vec<f64>>>,
) -> CliResult<CurveSet> {
    let grid = HarmonicGrid::new(cfg.solver.n_harmonics)?;
    let settings = cfg.continuation();
    let mut arcs = Vec::with_capacity(curves.len());
    let mut sampled = Vec::with_capacity(curves.len());
    for (i, c) in curves.iter().enumerate() {
        let ov = overrides.map(|o| o[i].as_slice());
        let arc = parametrize_curve(c, scaling, cfg.arc.n_regions, cfg.arc.rel_prominence, ov)
            .map_err(|e| CliError::Solver(format!("beta = {}: {e}", c.beta)))?;
        sampled.push(sample_curve(sys, &grid, &settings, c, &arc, cfg.arc.points_per_curve)?);
        arcs.push(arc);
    }
    Ok(CurveSet {
        curves: curves.to_vec(),
        arcs,
        sampled,
    })
}

/// Full snapshot stage. Landmark overrides follow the configured β order,
/// which is kept as given; curves are processed in ascending β.
pub fn generate(cfg: &PipelineConfig) -> CliResult<Bundle> {
    let sys = cfg.system()?;
    let order = |betas: &[f64], ov: &Option<Vec<Vec<f64>>>| -> (Vec<f64>, Option<Vec<Vec<f64>>>) {
        let mut idx: Vec<usize> = (0..betas.len()).collect();
        idx.sort_by(|&a, &b| betas[a].total_cmp(&betas[b]));
        (
            idx.iter().map(|&i| betas[i]).collect(),
            ov.as_ref().map(|o| idx.iter().map(|&i| o[i].clone()).collect()),
        )
    };
    let (train_b, train_ov) = order(&cfg.betas.train, &cfg.arc.train_landmarks);
    let (test_b, test_ov) = order(&cfg.betas.test, &cfg.arc.test_landmarks);
    debug_assert_eq!(train_b, sorted(&cfg.betas.train));

    let train_curves = trace_curves(&sys, cfg, &train_b)?;
    let test_curves = trace_curves(&sys, cfg, &test_b)?;
    let scaling = AxisScaling::from_curves(&train_curves)?;
    let train = sample_all(&sys, cfg, &train_curves, &scaling, train_ov.as_ref())?;
    let test = sample_all(&sys, cfg, &test_curves, &scaling, test_ov.as_ref())?;
    let family = ArcFamily {
        scaling,
        curves: train.arcs.clone(),
    };
    let spp = cfg.arc.samples_per_period;
    let train_set = snapshot_set(&train.sampled, spp)?;
    let test_set = if test.sampled.is_empty() {
        SnapshotSet::new(DMatrix::zeros(sys.n_dofs(), 0), DMatrix::zeros(0, 3), spp)?
    } else {
        snapshot_set(&test.sampled, spp)?
    };
    Ok(Bundle {
        train,
        test,
        family,
        train_set,
        test_set,
    })
}
