//! Randomized range finder with power iterations and the resulting
//! truncated SVD.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Leading left singular vectors of a snapshot matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    /// `N_h × N`, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Descending singular-value estimates.
    pub singular_values: Vec<f64>,
    /// Share of the captured energy `Σσ²` relative to `‖S‖_F²`.
    pub energy_retained: f64,
    /// True when `N` exceeds the numerical rank and trailing columns carry
    /// no data.
    pub padded: bool,
}

impl PodBasis {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `V_Nᵀ U` column by column.
    pub fn project(&self, snapshots: &DMatrix<f64>) -> DMatrix<f64> {
        self.basis.tr_mul(snapshots)
    }

    pub fn lift(&self, coords: &DMatrix<f64>) -> DMatrix<f64> {
        &self.basis * coords
    }
}

fn orthonormalize(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

/// Rank-`n` randomized SVD with `oversampling` extra test vectors and
/// `power_iters` subspace iterations, re-orthonormalized at every half step.
pub fn rsvd<R: Rng + ?Sized>(
    a: &DMatrix<f64>,
    n: usize,
    oversampling: usize,
    power_iters: usize,
    rng: &mut R,
) -> Result<PodBasis> {
    let (rows, cols) = a.shape();
    let max_rank = rows.min(cols);
    if n == 0 || n > max_rank {
        return Err(Error::Config(format!(
            "requested {n} modes from a {rows}x{cols} matrix"
        )));
    }
    let k = (n + oversampling).min(max_rank);
    let omega = DMatrix::from_fn(cols, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut q = orthonormalize(a * omega);
    for _ in 0..power_iters {
        let z = orthonormalize(a.tr_mul(&q));
        q = orthonormalize(a * z);
    }
    let b = q.tr_mul(a);
    let svd = b.svd(true, false);
    let u_b = svd.u.ok_or_else(|| Error::Config("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut basis = DMatrix::zeros(rows, n);
    let mut sv = Vec::with_capacity(n);
    for (c, &idx) in order.iter().take(n).enumerate() {
        basis.set_column(c, &(&q * u_b.column(idx)));
        sv.push(svd.singular_values[idx]);
    }
    let total = a.norm_squared();
    let kept: f64 = sv.iter().map(|s| s * s).sum();
    let tol = sv.first().copied().unwrap_or(0.0) * f64::EPSILON * rows.max(cols) as f64;
    Ok(PodBasis {
        basis,
        energy_retained: if total > 0.0 { (kept / total).min(1.0) } else { 1.0 },
        padded: sv.iter().any(|&s| s <= tol),
        singular_values: sv,
    })
}
