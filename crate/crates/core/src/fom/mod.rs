//! Full-order model `M Ü + C U̇ + K U + G(U,U) + H(U,U,U) = β F cos(ωt)`.
//!
//! The quadratic and cubic internal forces are stored as sparse symmetrized
//! tensors: an entry `(i, j, k)` with `j <= k` stands for every permutation of
//! its trailing indices, so the full indicial sum picks it up once per distinct
//! permutation.

mod benchmarks;
mod eigen;
mod newmark;

pub use benchmarks::{build_benchmark, default_params, BenchmarkKind, BenchmarkParams, DEFAULTS_TABLE};
pub use eigen::{eigen_solve, EigenBasis};
pub use newmark::{newmark_march, NewmarkOptions, NewmarkState, Trajectory};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One stored coefficient of the quadratic force tensor, `j <= k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadEntry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: f64,
}

/// One stored coefficient of the cubic force tensor, `j <= k <= l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicEntry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub l: usize,
    pub value: f64,
}

impl QuadEntry {
    /// Number of distinct orderings of the trailing index pair.
    pub fn multiplicity(&self) -> f64 {
        if self.j == self.k {
            1.0
        } else {
            2.0
        }
    }
}

impl CubicEntry {
    /// Number of distinct orderings of the trailing index triple.
    pub fn multiplicity(&self) -> f64 {
        match (self.j == self.k, self.k == self.l) {
            (true, true) => 1.0,
            (false, false) if self.j != self.l => 6.0,
            _ => 3.0,
        }
    }
}

/// Forcing level and angular frequency of the harmonic load `β F cos(ωt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcingParams {
    pub beta: f64,
    pub omega: f64,
}

impl ForcingParams {
    pub fn new(beta: f64, omega: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "beta".into(),
                reason: format!("must be finite and non-negative, got {beta}"),
            });
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "omega".into(),
                reason: format!("must be finite and positive, got {omega}"),
            });
        }
        Ok(Self { beta, omega })
    }
}

/// Full-order model with exact polynomial internal forces.
#[derive(Debug, Clone)]
pub struct FomSystem {
    name: String,
    mass: DMatrix<f64>,
    damping: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    quad: Vec<QuadEntry>,
    cubic: Vec<CubicEntry>,
    forcing_shape: DVector<f64>,
    observation: DVector<f64>,
    master_mode: usize,
    omega0: f64,
    quality: f64,
}

impl FomSystem {
    /// Assembles a system and checks its invariants. Tensor entries are
    /// canonicalized (trailing indices sorted, duplicates merged, zeros dropped).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        mass: DMatrix<f64>,
        stiffness: DMatrix<f64>,
        quad: Vec<QuadEntry>,
        cubic: Vec<CubicEntry>,
        forcing_shape: DVector<f64>,
        omega0: f64,
        quality: f64,
    ) -> Result<Self> {
        let n = mass.nrows();
        if n == 0 {
            return Err(Error::InvalidSystem("system has no degrees of freedom".into()));
        }
        for (what, m) in [("mass", &mass), ("stiffness", &stiffness)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidSystem(format!("{what} matrix must be {n}x{n}")));
            }
            if !is_symmetric(m, 1e-12) {
                return Err(Error::InvalidSystem(format!("{what} matrix is not symmetric")));
            }
        }
        if forcing_shape.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: forcing_shape.len(),
            });
        }
        if !(omega0 > 0.0 && omega0.is_finite()) || !(quality > 0.0 && quality.is_finite()) {
            return Err(Error::InvalidSystem(format!(
                "omega0 and quality must be positive, got {omega0} and {quality}"
            )));
        }
        check_spd(&mass)?;

        let quad = canonical_quad(quad, n)?;
        let cubic = canonical_cubic(cubic, n)?;
        let damping = &mass * (omega0 / quality);
        let observation = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
        Ok(Self {
            name: name.into(),
            mass,
            damping,
            stiffness,
            quad,
            cubic,
            forcing_shape,
            observation,
            master_mode: 0,
            omega0,
            quality,
        })
    }

    /// Output vector `o` used for FRF amplitudes, `A = max_t |oᵀU(t)|`.
    pub fn with_observation(mut self, observation: DVector<f64>) -> Result<Self> {
        if observation.len() != self.n_dofs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_dofs(),
                got: observation.len(),
            });
        }
        self.observation = observation;
        Ok(self)
    }

    pub fn with_master_mode(mut self, mode: usize) -> Result<Self> {
        if mode >= self.n_dofs() {
            return Err(Error::IndexOutOfRange {
                index: mode,
                size: self.n_dofs(),
            });
        }
        self.master_mode = mode;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn n_dofs(&self) -> usize {
        self.mass.nrows()
    }
    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }
    pub fn damping(&self) -> &DMatrix<f64> {
        &self.damping
    }
    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }
    pub fn quad_tensor(&self) -> &[QuadEntry] {
        &self.quad
    }
    pub fn cubic_tensor(&self) -> &[CubicEntry] {
        &self.cubic
    }
    pub fn forcing_shape(&self) -> &DVector<f64> {
        &self.forcing_shape
    }
    pub fn observation(&self) -> &DVector<f64> {
        &self.observation
    }
    /// Index (ascending eigenfrequency order) of the mode the benchmark drives.
    pub fn master_mode(&self) -> usize {
        self.master_mode
    }
    pub fn omega0(&self) -> f64 {
        self.omega0
    }
    pub fn quality(&self) -> f64 {
        self.quality
    }
    /// Mass-proportional damping coefficient `ω₀/Q`.
    pub fn damping_ratio(&self) -> f64 {
        self.omega0 / self.quality
    }

    /// Returns a copy with every quadratic coefficient removed.
    pub fn without_quadratic(&self) -> Self {
        Self {
            quad: Vec::new(),
            ..self.clone()
        }
    }

    /// Returns a copy with the damping matrix set to zero (infinite Q).
    pub fn undamped(&self) -> Self {
        Self {
            damping: DMatrix::zeros(self.n_dofs(), self.n_dofs()),
            quality: f64::INFINITY,
            ..self.clone()
        }
    }

    /// Quadratic force `G(u, u)`.
    pub fn quadratic_force(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_dofs());
        for e in &self.quad {
            out[e.i] += e.multiplicity() * e.value * u[e.j] * u[e.k];
        }
        out
    }

    /// Symmetric bilinear form with `G(x, x)` equal to the quadratic force.
    pub fn quadratic_bilinear(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_dofs());
        for e in &self.quad {
            if e.j == e.k {
                out[e.i] += e.value * x[e.j] * y[e.k];
            } else {
                out[e.i] += e.value * (x[e.j] * y[e.k] + x[e.k] * y[e.j]);
            }
        }
        out
    }

    /// Cubic force `H(u, u, u)`.
    pub fn cubic_force(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_dofs());
        for e in &self.cubic {
            out[e.i] += e.multiplicity() * e.value * u[e.j] * u[e.k] * u[e.l];
        }
        out
    }

    /// `K u + G(u,u) + H(u,u,u)`.
    pub fn internal_force(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut f = &self.stiffness * u;
        for e in &self.quad {
            f[e.i] += e.multiplicity() * e.value * u[e.j] * u[e.k];
        }
        for e in &self.cubic {
            f[e.i] += e.multiplicity() * e.value * u[e.j] * u[e.k] * u[e.l];
        }
        f
    }

    /// Jacobian of [`Self::internal_force`] with respect to `u`.
    pub fn tangent_stiffness(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let mut kt = self.stiffness.clone();
        self.add_nonlinear_tangent(u, &mut kt);
        kt
    }

    pub(crate) fn add_nonlinear_tangent(&self, u: &DVector<f64>, kt: &mut DMatrix<f64>) {
        for e in &self.quad {
            let w = e.multiplicity() * e.value;
            kt[(e.i, e.j)] += w * u[e.k];
            kt[(e.i, e.k)] += w * u[e.j];
        }
        for e in &self.cubic {
            let w = e.multiplicity() * e.value;
            kt[(e.i, e.j)] += w * u[e.k] * u[e.l];
            kt[(e.i, e.k)] += w * u[e.j] * u[e.l];
            kt[(e.i, e.l)] += w * u[e.j] * u[e.k];
        }
    }

    /// Strain energy `½uᵀKu + ⅓uᵀG(u,u) + ¼uᵀH(u,u,u)`; meaningful when the
    /// tensors derive from a potential (see [`Self::is_conservative`]).
    pub fn potential_energy(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.stiffness * u))
            + u.dot(&self.quadratic_force(u)) / 3.0
            + u.dot(&self.cubic_force(u)) / 4.0
    }

    pub fn kinetic_energy(&self, v: &DVector<f64>) -> f64 {
        0.5 * v.dot(&(&self.mass * v))
    }

    /// True when the force tensors are fully symmetric, i.e. gradients of a
    /// polynomial potential.
    pub fn is_conservative(&self) -> bool {
        let n = self.n_dofs();
        let g = dense_quad(&self.quad, n);
        let tol = 1e-12 * g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if (g[(i * n + j) * n + k] - g[(j * n + i) * n + k]).abs() > tol {
                        return false;
                    }
                }
            }
        }
        let h = dense_cubic(&self.cubic, n);
        let tol = 1e-12 * h.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let a = h[((i * n + j) * n + k) * n + l];
                        let b = h[((j * n + i) * n + k) * n + l];
                        if (a - b).abs() > tol {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

/// Dense, fully index-symmetric copy of the quadratic tensor, `[(i*n + j)*n + k]`.
pub fn dense_quad(entries: &[QuadEntry], n: usize) -> Vec<f64> {
    let mut g = vec![0.0; n * n * n];
    for e in entries {
        g[(e.i * n + e.j) * n + e.k] = e.value;
        g[(e.i * n + e.k) * n + e.j] = e.value;
    }
    g
}

/// Dense copy of the cubic tensor with all trailing permutations filled.
pub fn dense_cubic(entries: &[CubicEntry], n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n * n * n];
    for e in entries {
        for (a, b, c) in [
            (e.j, e.k, e.l),
            (e.j, e.l, e.k),
            (e.k, e.j, e.l),
            (e.k, e.l, e.j),
            (e.l, e.j, e.k),
            (e.l, e.k, e.j),
        ] {
            h[((e.i * n + a) * n + b) * n + c] = e.value;
        }
    }
    h
}

fn is_symmetric(m: &DMatrix<f64>, rel: f64) -> bool {
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= rel * scale))
}

fn check_spd(m: &DMatrix<f64>) -> Result<()> {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let min = eig.eigenvalues.min();
    if !(min > f64::EPSILON * m.nrows() as f64 * max) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(())
}

fn canonical_quad(entries: Vec<QuadEntry>, n: usize) -> Result<Vec<QuadEntry>> {
    let mut out: Vec<QuadEntry> = Vec::with_capacity(entries.len());
    for mut e in entries {
        if e.i >= n || e.j >= n || e.k >= n {
            return Err(Error::InvalidSystem(format!(
                "quadratic entry ({}, {}, {}) outside of {n} dofs",
                e.i, e.j, e.k
            )));
        }
        if !e.value.is_finite() {
            return Err(Error::InvalidSystem("non-finite quadratic coefficient".into()));
        }
        if e.j > e.k {
            std::mem::swap(&mut e.j, &mut e.k);
        }
        out.push(e);
    }
    out.sort_by_key(|e| (e.i, e.j, e.k));
    out.dedup_by(|b, a| {
        if (a.i, a.j, a.k) == (b.i, b.j, b.k) {
            a.value += b.value;
            true
        } else {
            false
        }
    });
    out.retain(|e| e.value != 0.0);
    Ok(out)
}

fn canonical_cubic(entries: Vec<CubicEntry>, n: usize) -> Result<Vec<CubicEntry>> {
    let mut out: Vec<CubicEntry> = Vec::with_capacity(entries.len());
    for e in entries {
        if e.i >= n || e.j >= n || e.k >= n || e.l >= n {
            return Err(Error::InvalidSystem(format!(
                "cubic entry ({}, {}, {}, {}) outside of {n} dofs",
                e.i, e.j, e.k, e.l
            )));
        }
        if !e.value.is_finite() {
            return Err(Error::InvalidSystem("non-finite cubic coefficient".into()));
        }
        let mut idx = [e.j, e.k, e.l];
        idx.sort_unstable();
        out.push(CubicEntry {
            i: e.i,
            j: idx[0],
            k: idx[1],
            l: idx[2],
            value: e.value,
        });
    }
    out.sort_by_key(|e| (e.i, e.j, e.k, e.l));
    out.dedup_by(|b, a| {
        if (a.i, a.j, a.k, a.l) == (b.i, b.j, b.k, b.l) {
            a.value += b.value;
            true
        } else {
            false
        }
    });
    out.retain(|e| e.value != 0.0);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn duffing(gamma: f64) -> FomSystem {
        FomSystem::new(
            "d",
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            vec![],
            vec![CubicEntry {
                i: 0,
                j: 0,
                k: 0,
                l: 0,
                value: gamma,
            }],
            DVector::from_element(1, 1.0),
            1.0,
            1000.0,
        )
        .unwrap()
    }

    #[test]
    fn duffing_force_by_hand() {
        let s = duffing(0.1);
        let f = s.internal_force(&DVector::from_element(1, 2.0));
        assert!((f[0] - 2.8).abs() < 1e-15);
        assert_eq!(s.internal_force(&DVector::zeros(1))[0], 0.0);
    }

    #[test]
    fn multiplicities() {
        let q = |j, k| QuadEntry { i: 0, j, k, value: 1.0 }.multiplicity();
        assert_eq!((q(0, 0), q(0, 1)), (1.0, 2.0));
        let c = |j, k, l| CubicEntry { i: 0, j, k, l, value: 1.0 }.multiplicity();
        assert_eq!((c(1, 1, 1), c(0, 1, 1), c(0, 0, 1), c(0, 1, 2)), (1.0, 3.0, 3.0, 6.0));
    }

    #[test]
    fn canonicalization_sorts_and_merges() {
        let s = FomSystem::new(
            "x",
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            vec![
                QuadEntry { i: 0, j: 1, k: 0, value: 1.0 },
                QuadEntry { i: 0, j: 0, k: 1, value: 0.5 },
            ],
            vec![CubicEntry { i: 1, j: 1, k: 0, l: 0, value: 2.0 }],
            DVector::zeros(2),
            1.0,
            100.0,
        )
        .unwrap();
        assert_eq!(s.quad_tensor(), &[QuadEntry { i: 0, j: 0, k: 1, value: 1.5 }]);
        assert_eq!(s.cubic_tensor()[0], CubicEntry { i: 1, j: 0, k: 0, l: 1, value: 2.0 });
    }

    #[test]
    fn rejects_indefinite_mass() {
        let mut m = DMatrix::identity(2, 2);
        m[(1, 1)] = -1.0;
        let err = FomSystem::new("x", m, DMatrix::identity(2, 2), vec![], vec![], DVector::zeros(2), 1.0, 10.0);
        assert!(matches!(err, Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn damping_is_mass_proportional() {
        let s = duffing(0.0);
        assert_eq!(s.damping()[(0, 0)], 1e-3);
    }
}
