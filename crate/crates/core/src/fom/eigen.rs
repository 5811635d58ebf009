use nalgebra::{DMatrix, DVector};

use super::FomSystem;
use crate::error::{Error, Result};

/// Mass-normalized eigenpairs of `K φ = ω² M φ`, ascending in frequency.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub frequencies: Vec<f64>,
    /// `N_h × m`, one mode per column, `ΦᵀMΦ = I`.
    pub modes: DMatrix<f64>,
}

impl EigenBasis {
    pub fn mode(&self, i: usize) -> DVector<f64> {
        self.modes.column(i).into_owned()
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }
}

/// Solves the generalized symmetric eigenproblem through a Cholesky reduction
/// of the mass matrix. Each mode is signed so that its largest-magnitude
/// component is positive.
pub fn eigen_solve(sys: &FomSystem, m: usize) -> Result<EigenBasis> {
    let n = sys.n_dofs();
    if m == 0 || m > n {
        return Err(Error::InvalidParameter {
            name: "m".into(),
            reason: format!("requested {m} modes from a {n}-dof system"),
        });
    }
    let chol = sys.mass().clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::EigenFailure("singular Cholesky factor".into()))?;
    let mut a = &l_inv * sys.stiffness() * l_inv.transpose();
    a = (&a + a.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::try_new(a, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::EigenFailure("symmetric eigen iteration did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let mut frequencies = Vec::with_capacity(m);
    let mut modes = DMatrix::zeros(n, m);
    let back = l_inv.transpose();
    for (c, &idx) in order.iter().take(m).enumerate() {
        let lambda = eig.eigenvalues[idx];
        if lambda <= 0.0 {
            return Err(Error::EigenFailure(format!(
                "non-positive eigenvalue {lambda:e}; stiffness must be positive definite"
            )));
        }
        frequencies.push(lambda.sqrt());
        let mut phi = &back * eig.eigenvectors.column(idx);
        let norm = phi.dot(&(sys.mass() * &phi)).sqrt();
        phi /= norm;
        let pivot = phi.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            phi = -phi;
        }
        modes.set_column(c, &phi);
    }
    Ok(EigenBasis { frequencies, modes })
}
