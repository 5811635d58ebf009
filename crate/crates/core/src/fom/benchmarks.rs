//! Built-in benchmark systems, assembled directly in tensor form from modal
//! polynomial potentials.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::{eigen_solve, CubicEntry, FomSystem, QuadEntry};
use crate::error::{Error, Result};

/// Versioned defaults table shipped with the crate.
pub const DEFAULTS_TABLE: &str = include_str!("../../data/benchmarks.v1.tsv");

pub type BenchmarkParams = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkKind {
    Duffing1,
    MirrorAnalogue,
    ArchIr12,
    GyroAutoparam,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 4] = [
        BenchmarkKind::Duffing1,
        BenchmarkKind::MirrorAnalogue,
        BenchmarkKind::ArchIr12,
        BenchmarkKind::GyroAutoparam,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BenchmarkKind::Duffing1 => "duffing1",
            BenchmarkKind::MirrorAnalogue => "mirror_analogue",
            BenchmarkKind::ArchIr12 => "arch_ir12",
            BenchmarkKind::GyroAutoparam => "gyro_autoparam",
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownBenchmark(s.to_string()))
    }
}

/// Default parameters of one benchmark, read from [`DEFAULTS_TABLE`].
pub fn default_params(kind: BenchmarkKind) -> BenchmarkParams {
    DEFAULTS_TABLE
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            let (b, p, v) = (it.next()?, it.next()?, it.next()?);
            (b == kind.as_str()).then(|| (p.to_string(), v.parse::<f64>().expect("defaults table value")))
        })
        .collect()
}

/// Builds a benchmark with `overrides` applied on top of the shipped defaults.
pub fn build_benchmark(kind: BenchmarkKind, overrides: &BenchmarkParams) -> Result<FomSystem> {
    let mut p = default_params(kind);
    for (k, v) in overrides {
        if !p.contains_key(k) {
            return Err(Error::InvalidParameter {
                name: k.clone(),
                reason: format!("not a parameter of {kind}"),
            });
        }
        if !v.is_finite() {
            return Err(Error::InvalidParameter {
                name: k.clone(),
                reason: "must be finite".into(),
            });
        }
        p.insert(k.clone(), *v);
    }
    let get = |k: &str| p[k];
    match kind {
        BenchmarkKind::Duffing1 => duffing1(get("m"), get("omega0"), get("q"), get("gamma")),
        BenchmarkKind::MirrorAnalogue => mirror(&p),
        BenchmarkKind::ArchIr12 => arch(&p),
        BenchmarkKind::GyroAutoparam => gyro(&p),
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter {
            name: name.into(),
            reason: format!("must be positive, got {v}"),
        })
    }
}

fn duffing1(m: f64, omega0: f64, q: f64, gamma: f64) -> Result<FomSystem> {
    let m = positive("m", m)?;
    let omega0 = positive("omega0", omega0)?;
    let q = positive("q", q)?;
    let phi = 1.0 / m.sqrt();
    FomSystem::new(
        "duffing1",
        DMatrix::from_element(1, 1, m),
        DMatrix::from_element(1, 1, m * omega0 * omega0),
        vec![],
        vec![CubicEntry {
            i: 0,
            j: 0,
            k: 0,
            l: 0,
            value: gamma,
        }],
        // F = M φ with the mass-normalized mode φ = 1/√m.
        DVector::from_element(1, m * phi),
        omega0,
        q,
    )?
    .with_observation(DVector::from_element(1, 1.0))
}

/// Polynomial potential in modal coordinates.
struct ModalDesign {
    freqs: Vec<f64>,
    /// `(coefficient, indices)` of cubic monomials `c q_a q_b q_c`.
    cubic: Vec<(f64, [usize; 3])>,
    /// `(coefficient, indices)` of quartic monomials.
    quartic: Vec<(f64, [usize; 4])>,
    mixing: f64,
}

struct Assembled {
    mass: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    quad: Vec<QuadEntry>,
    cubic: Vec<CubicEntry>,
    /// Design mode shapes, `ΦᵀMΦ = I`.
    phi: DMatrix<f64>,
}

fn base_mass(n: usize, mixing: f64) -> DMatrix<f64> {
    let diag = [1.0, 1.2, 0.9, 1.1, 0.8];
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i % diag.len()];
        if i + 1 < n {
            m[(i, i + 1)] = 0.3 * mixing;
            m[(i + 1, i)] = 0.3 * mixing;
        }
    }
    m
}

fn givens_mixing(n: usize, angle: f64) -> DMatrix<f64> {
    let mut p = DMatrix::identity(n, n);
    for i in 0..n.saturating_sub(1) {
        let t = angle * (1.0 - 0.3 * i as f64);
        let mut g = DMatrix::identity(n, n);
        g[(i, i)] = t.cos();
        g[(i + 1, i + 1)] = t.cos();
        g[(i, i + 1)] = -t.sin();
        g[(i + 1, i)] = t.sin();
        p = g * p;
    }
    p
}

/// Count-factorial weight: the multi-index derivative of a monomial with
/// respect to its own variables.
fn derivative_weight(idx: &[usize]) -> f64 {
    let mut sorted = idx.to_vec();
    sorted.sort_unstable();
    let mut w = 1.0;
    let mut run = 1;
    for i in 1..=sorted.len() {
        if i < sorted.len() && sorted[i] == sorted[i - 1] {
            run += 1;
        } else {
            w *= (1..=run).product::<usize>() as f64;
            run = 1;
        }
    }
    w
}

fn assemble(design: &ModalDesign) -> Result<Assembled> {
    let n = design.freqs.len();
    let mass = base_mass(n, design.mixing);
    let l = mass.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.l();
    let l_inv_t = l.try_inverse().ok_or(Error::NotPositiveDefinite)?.transpose();
    let phi = l_inv_t * givens_mixing(n, design.mixing);
    // Modal coordinates q = W U with W = ΦᵀM; physical forces are Wᵀ ∇_q V.
    let w = phi.transpose() * &mass;
    let omega2 = DMatrix::from_diagonal(&DVector::from_iterator(n, design.freqs.iter().map(|f| f * f)));
    let stiffness = w.transpose() * omega2 * &w;
    let stiffness = (&stiffness + stiffness.transpose()) * 0.5;

    // Quadratic force tensor in modal space: half the third derivative of V3.
    let mut gq = vec![0.0; n * n * n];
    for &(c, idx) in &design.cubic {
        let weight = derivative_weight(&idx);
        for (a, b, cc) in permutations3(idx) {
            gq[(a * n + b) * n + cc] = 0.5 * c * weight;
        }
    }
    // Cubic force tensor: one sixth of the fourth derivative of V4.
    let mut hq = vec![0.0; n * n * n * n];
    for &(c, idx) in &design.quartic {
        let weight = derivative_weight(&idx);
        for (a, b, cc, d) in permutations4(idx) {
            hq[((a * n + b) * n + cc) * n + d] = c * weight / 6.0;
        }
    }

    let mut quad = Vec::new();
    let gmax = gq.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if gmax > 0.0 {
        for i in 0..n {
            for j in 0..n {
                for k in j..n {
                    let mut v = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            for c in 0..n {
                                v += w[(a, i)] * w[(b, j)] * w[(c, k)] * gq[(a * n + b) * n + c];
                            }
                        }
                    }
                    if v.abs() > 1e-14 * gmax {
                        quad.push(QuadEntry { i, j, k, value: v });
                    }
                }
            }
        }
    }
    let mut cubic = Vec::new();
    let hmax = hq.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if hmax > 0.0 {
        for i in 0..n {
            for j in 0..n {
                for k in j..n {
                    for l in k..n {
                        let mut v = 0.0;
                        for a in 0..n {
                            for b in 0..n {
                                for c in 0..n {
                                    for d in 0..n {
                                        v += w[(a, i)]
                                            * w[(b, j)]
                                            * w[(c, k)]
                                            * w[(d, l)]
                                            * hq[((a * n + b) * n + c) * n + d];
                                    }
                                }
                            }
                        }
                        if v.abs() > 1e-14 * hmax {
                            cubic.push(CubicEntry { i, j, k, l, value: v });
                        }
                    }
                }
            }
        }
    }
    Ok(Assembled {
        mass,
        stiffness,
        quad,
        cubic,
        phi,
    })
}

fn permutations3(i: [usize; 3]) -> [(usize, usize, usize); 6] {
    [
        (i[0], i[1], i[2]),
        (i[0], i[2], i[1]),
        (i[1], i[0], i[2]),
        (i[1], i[2], i[0]),
        (i[2], i[0], i[1]),
        (i[2], i[1], i[0]),
    ]
}

fn permutations4(i: [usize; 4]) -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    if a != b && a != c && a != d && b != c && b != d && c != d {
                        out.push((i[a], i[b], i[c], i[d]));
                    }
                }
            }
        }
    }
    out
}

fn ratio_near(ratio: f64, targets: &[f64], tol: f64) -> Option<f64> {
    targets.iter().copied().find(|t| (ratio / t - 1.0).abs() < tol)
}

fn mirror(p: &BenchmarkParams) -> Result<FomSystem> {
    let freqs = vec![
        positive("omega_1", p["omega_1"])?,
        positive("omega_2", p["omega_2"])?,
        positive("omega_3", p["omega_3"])?,
    ];
    if !(freqs[0] < freqs[1] && freqs[1] < freqs[2]) {
        return Err(Error::InvalidParameter {
            name: "omega_2".into(),
            reason: "master frequency must sit strictly between the slave frequencies".into(),
        });
    }
    for i in 0..3 {
        for j in 0..i {
            if let Some(t) = ratio_near(freqs[i] / freqs[j], &[1.0, 2.0, 3.0], 0.05) {
                return Err(Error::InvalidParameter {
                    name: format!("omega_{}", i + 1),
                    reason: format!(
                        "omega_{}/omega_{} = {:.4} is within 5% of {t}: internal resonance",
                        i + 1,
                        j + 1,
                        freqs[i] / freqs[j]
                    ),
                });
            }
        }
    }
    let design = ModalDesign {
        freqs: freqs.clone(),
        cubic: vec![(p["k_low"], [0, 1, 1]), (p["k_high"], [2, 1, 1])],
        quartic: vec![(0.25 * p["gamma"], [1, 1, 1, 1])],
        mixing: p["mixing"],
    };
    let a = assemble(&design)?;
    let phi_m = a.phi.column(1).into_owned();
    let load = &a.mass * &phi_m;
    FomSystem::new(
        "mirror_analogue",
        a.mass,
        a.stiffness,
        a.quad,
        a.cubic,
        load.clone(),
        freqs[1],
        positive("q", p["q"])?,
    )?
    .with_observation(load)?
    .with_master_mode(1)
}

fn arch(p: &BenchmarkParams) -> Result<FomSystem> {
    let freqs = vec![positive("omega_1", p["omega_1"])?, positive("omega_2", p["omega_2"])?];
    let ratio = freqs[1] / freqs[0];
    if !(1.98..=2.02).contains(&ratio) {
        return Err(Error::InvalidParameter {
            name: "omega_2".into(),
            reason: format!("omega_2/omega_1 = {ratio:.4} outside [1.98, 2.02]"),
        });
    }
    let design = ModalDesign {
        freqs: freqs.clone(),
        cubic: vec![(p["k"], [0, 0, 1])],
        quartic: vec![(0.25 * p["gamma_1"], [0, 0, 0, 0]), (0.25 * p["gamma_2"], [1, 1, 1, 1])],
        mixing: p["mixing"],
    };
    let a = assemble(&design)?;
    let load = &a.mass * a.phi.column(0);
    let n = a.mass.nrows();
    let sys = FomSystem::new(
        "arch_ir12",
        a.mass,
        a.stiffness,
        a.quad,
        a.cubic,
        load,
        freqs[0],
        positive("q", p["q"])?,
    )?
    .with_observation(DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 }))?;
    let basis = eigen_solve(&sys, 2)?;
    let r = basis.frequencies[1] / basis.frequencies[0];
    debug_assert!((r - ratio).abs() < 1e-8);
    sys.with_master_mode(0)
}

fn gyro(p: &BenchmarkParams) -> Result<FomSystem> {
    let wd = positive("omega_drive", p["omega_drive"])?;
    let ws = positive("omega_sense", p["omega_sense"])?;
    if wd == ws {
        return Err(Error::InvalidParameter {
            name: "omega_sense".into(),
            reason: "drive and sense frequencies must be split to keep the modes well defined".into(),
        });
    }
    // Modal indices follow ascending frequency.
    let (drive, sense) = if wd < ws { (0, 1) } else { (1, 0) };
    let mut freqs = vec![0.0; 2];
    freqs[drive] = wd;
    freqs[sense] = ws;
    let design = ModalDesign {
        freqs,
        cubic: vec![],
        quartic: vec![
            (0.5 * p["kappa"], [drive, drive, sense, sense]),
            (0.25 * p["gamma_drive"], [drive, drive, drive, drive]),
            (0.25 * p["gamma_sense"], [sense, sense, sense, sense]),
        ],
        mixing: p["mixing"],
    };
    let a = assemble(&design)?;
    let modal_load = DVector::from_fn(2, |i, _| {
        if i == drive {
            1.0
        } else {
            p["imperfection"]
        }
    });
    let load = &a.mass * &a.phi * modal_load;
    let observation = &a.mass * a.phi.column(drive);
    FomSystem::new("gyro_autoparam", a.mass, a.stiffness, a.quad, a.cubic, load, wd, positive("q", p["q"])?)?
        .with_observation(observation)?
        .with_master_mode(drive)
}
