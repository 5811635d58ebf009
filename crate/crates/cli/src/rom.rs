//! DL-ROM stages on in-memory data: POD, training sweep, inference, FRF
//! reconstruction and modal error tables.

use std::f64::consts::TAU;

use nalgebra::DVector;
use twinrom_core::fom::{EigenBasis, FomSystem};
use twinrom_core::frfarc::ArcFamily;
use twinrom_core::hb::{periodic_max_abs, AMPLITUDE_SCAN};
use twinrom_core::metrics::{ErrorAccumulator, ModalError};
use twinrom_dl::train::{seeded_rng, STREAM_RSVD};
use twinrom_dl::{rsvd, train, DlRomModel, PodBasis, SnapshotSet, TrainingOutcome};

use crate::config::PipelineConfig;
use crate::error::CliResult;

/// One sampled orbit of a reference set: `(β, s, ω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitKey {
    pub beta: f64,
    pub s: f64,
    pub omega: f64,
}

pub fn fit_pod(cfg: &PipelineConfig, set: &SnapshotSet) -> CliResult<PodBasis> {
    let n = cfg.pod.n_modes.min(set.matrix.nrows()).min(set.len());
    let mut rng = seeded_rng(cfg.seed, STREAM_RSVD);
    Ok(rsvd(&set.matrix, n, cfg.pod.oversampling, cfg.pod.power_iters, &mut rng)?)
}

/// Trains one model per latent dimension.
pub fn train_sweep(cfg: &PipelineConfig, set: &SnapshotSet, pod: &PodBasis, latent_dims: &[usize]) -> CliResult<Vec<TrainingOutcome>> {
    latent_dims
        .iter()
        .map(|&p| Ok(train(set, pod, &cfg.training_config(p)?)?))
        .collect()
}

/// States at `n` uniform phases of the orbit labelled `(β, s)`.
pub fn infer_orbit(model: &DlRomModel, beta: f64, s: f64, n: usize) -> Vec<DVector<f64>> {
    let raw: Vec<[f64; 3]> = (0..n).map(|j| [j as f64 / n as f64, beta, s]).collect();
    let u = model.infer_batch(&raw);
    u.column_iter().map(|c| c.into_owned()).collect()
}

/// FRF produced by a surrogate over a uniform `s` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedFrf {
    pub beta: f64,
    pub s: Vec<f64>,
    pub omega: Vec<f64>,
    pub amplitude: Vec<f64>,
}

impl ReconstructedFrf {
    pub fn peak(&self) -> (f64, f64) {
        let i = self
            .amplitude
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        (self.omega[i], self.amplitude[i])
    }
}

/// `max_t |w · Ũ(t)|` over one period of the surrogate orbit at `(β, s)`.
pub fn surrogate_amplitude(model: &DlRomModel, w: &DVector<f64>, beta: f64, s: f64) -> f64 {
    periodic_max_abs(|theta| w.dot(&model.infer(theta / TAU, beta, s).0), AMPLITUDE_SCAN)
}

/// Surrogate FRF at `beta` on `n_points` uniform `s` values, with `ω(s)`
/// interpolated across the training family. `w` selects the observed
/// quantity.
pub fn reconstruct_frf(model: &DlRomModel, family: &ArcFamily, w: &DVector<f64>, beta: f64, n_points: usize) -> CliResult<ReconstructedFrf> {
    let smax = family.curves.first().map(|c| c.n_regions).unwrap_or(1) as f64;
    let mut out = ReconstructedFrf {
        beta,
        s: Vec::with_capacity(n_points),
        omega: Vec::with_capacity(n_points),
        amplitude: Vec::with_capacity(n_points),
    };
    for k in 0..n_points {
        let s = smax * k as f64 / (n_points - 1).max(1) as f64;
        let (omega, _) = family.lookup(beta, s)?;
        out.s.push(s);
        out.omega.push(omega);
        out.amplitude.push(surrogate_amplitude(model, w, beta, s));
    }
    Ok(out)
}

/// `(β, s, ω)` of every sampled orbit, in snapshot order.
pub fn orbit_keys(curves: &[crate::snapshots::SampledCurve]) -> Vec<OrbitKey> {
    curves
        .iter()
        .flat_map(|c| {
            c.s.iter().zip(&c.omega).map(move |(&s, &omega)| OrbitKey {
                beta: c.beta,
                s,
                omega,
            })
        })
        .collect()
}

/// Pooled modal errors of the surrogate against reference snapshots grouped
/// by orbit (`samples_per_period` consecutive columns each).
pub fn modal_error_table(
    model: &DlRomModel,
    basis: &EigenBasis,
    sys: &FomSystem,
    reference: &SnapshotSet,
    keys: &[OrbitKey],
    modes: &[usize],
) -> CliResult<Vec<ModalError>> {
    let spp = reference.samples_per_period;
    let mut acc = ErrorAccumulator::new(modes);
    let pred = model.infer_batch(&reference.raw_params());
    for (k, key) in keys.iter().enumerate() {
        let r: Vec<DVector<f64>> = (0..spp).map(|j| reference.matrix.column(k * spp + j).into_owned()).collect();
        let t: Vec<DVector<f64>> = (0..spp).map(|j| pred.column(k * spp + j).into_owned()).collect();
        acc.add(basis, sys.mass(), &r, &t, TAU / key.omega)?;
    }
    Ok(acc.finish())
}
