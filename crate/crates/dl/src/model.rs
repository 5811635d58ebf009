//! The POD-DL-ROM: POD basis, encoder/decoder pair, the feed-forward network
//! mapping `(t̂, β, s)` to latent coordinates, and feature scaling.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::io::{BufRead, Read};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use twinrom_core::mxb;

use crate::error::{Error, Result};
use crate::nn::{Activation, Layer, Mlp};
use crate::rsvd::PodBasis;

/// How `(t̂, β, s)` enter the feed-forward network.
///
/// The phase is either scaled like the other inputs (`harmonics == 0`) or
/// replaced by `(cos 2πkt̂, sin 2πkt̂)` for `k = 1..=harmonics`, which makes
/// the network periodic in `t̂`. With `landmark_roots`, one extra feature
/// `sgn(s − k) √|s − k|` is appended per interior landmark `k`; orbits vary
/// like the square root of `s` next to a sharp amplitude peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputEncoding {
    pub harmonics: usize,
    pub landmark_roots: bool,
}

impl InputEncoding {
    pub const RAW: Self = Self {
        harmonics: 0,
        landmark_roots: false,
    };

    pub fn harmonic(n: usize) -> Self {
        Self {
            harmonics: n,
            landmark_roots: false,
        }
    }

    pub fn name(&self) -> String {
        let mut out = match self.harmonics {
            0 => "raw".to_string(),
            1 => "harmonic".to_string(),
            n => format!("harmonic:{n}"),
        };
        if self.landmark_roots {
            out.push_str("+roots");
        }
        out
    }

    pub fn width(&self, scaling: &InputScaling) -> usize {
        let phase = if self.harmonics == 0 { 1 } else { 2 * self.harmonics };
        let roots = if self.landmark_roots { scaling.interior_landmarks().len() } else { 0 };
        phase + 2 + roots
    }
}

impl FromStr for InputEncoding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown input encoding `{s}`"));
        let (phase, landmark_roots) = match s.strip_suffix("+roots") {
            Some(p) => (p, true),
            None => (s, false),
        };
        let harmonics = match phase {
            "raw" => 0,
            "harmonic" => 1,
            _ => match phase.strip_prefix("harmonic:").map(str::parse::<usize>) {
                Some(Ok(n)) if n > 0 => n,
                _ => return Err(bad()),
            },
        };
        Ok(Self {
            harmonics,
            landmark_roots,
        })
    }
}

/// Per-feature affine map of the raw inputs `(t̂, β, s)` onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaling {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl InputScaling {
    pub fn fit(params: &DMatrix<f64>) -> Result<Self> {
        if params.ncols() != 3 || params.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "parameter matrix must be N_s x 3, got {}x{}",
                params.nrows(),
                params.ncols()
            )));
        }
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for r in params.row_iter() {
            for k in 0..3 {
                min[k] = min[k].min(r[k]);
                max[k] = max[k].max(r[k]);
            }
        }
        Ok(Self { min, max })
    }

    pub fn scale(&self, k: usize, x: f64) -> f64 {
        let w = self.max[k] - self.min[k];
        if w > 0.0 {
            2.0 * (x - self.min[k]) / w - 1.0
        } else {
            0.0
        }
    }

    pub fn unscale(&self, k: usize, y: f64) -> f64 {
        let w = self.max[k] - self.min[k];
        if w > 0.0 {
            self.min[k] + 0.5 * (y + 1.0) * w
        } else {
            self.min[k]
        }
    }

    /// Integers strictly inside the training range of `s`.
    pub fn interior_landmarks(&self) -> Vec<f64> {
        let (lo, hi) = (self.min[2].floor() as i64 + 1, self.max[2].ceil() as i64 - 1);
        (lo..=hi).map(|k| k as f64).filter(|&k| k > self.min[2] && k < self.max[2]).collect()
    }

    /// True when any input lies outside the training box by more than 10% of
    /// its width.
    pub fn is_extrapolating(&self, raw: [f64; 3]) -> bool {
        (0..3).any(|k| {
            let w = self.max[k] - self.min[k];
            let tol = 0.1 * w;
            raw[k] < self.min[k] - tol || raw[k] > self.max[k] + tol
        })
    }
}

/// How POD coordinates are standardized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingMode {
    /// Each coordinate to zero mean and unit variance.
    PerCoordinate,
    /// Each coordinate centered; one common divisor, the root mean variance,
    /// so coordinates keep their relative energy.
    Global,
}

impl ScalingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::PerCoordinate => "per_coordinate",
            Self::Global => "global",
        }
    }
}

impl FromStr for ScalingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_coordinate" => Ok(Self::PerCoordinate),
            "global" => Ok(Self::Global),
            _ => Err(Error::Config(format!("unknown output scaling `{s}`"))),
        }
    }
}

/// Affine standardization of POD coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputScaling {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl OutputScaling {
    pub fn fit(coords: &DMatrix<f64>, mode: ScalingMode) -> Self {
        let n = coords.ncols().max(1) as f64;
        let mut mean = Vec::with_capacity(coords.nrows());
        let mut var = Vec::with_capacity(coords.nrows());
        for r in coords.row_iter() {
            let m = r.sum() / n;
            var.push(r.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n);
            mean.push(m);
        }
        let unit = |v: f64| if v > 0.0 { v.sqrt() } else { 1.0 };
        let std = match mode {
            ScalingMode::PerCoordinate => var.iter().map(|&v| unit(v)).collect(),
            ScalingMode::Global => {
                let g = unit(var.iter().sum::<f64>() / var.len().max(1) as f64);
                vec![g; var.len()]
            }
        };
        Self { mean, std }
    }

    pub fn scale(&self, coords: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(coords.nrows(), coords.ncols(), |i, j| (coords[(i, j)] - self.mean[i]) / self.std[i])
    }

    pub fn unscale(&self, scaled: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(scaled.nrows(), scaled.ncols(), |i, j| scaled[(i, j)] * self.std[i] + self.mean[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DlRomModel {
    pub pod: PodBasis,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub dfnn: Mlp,
    pub latent_dim: usize,
    pub input_scaling: InputScaling,
    pub output_scaling: OutputScaling,
    pub encoding: InputEncoding,
}

/// Network inputs for raw `(t̂, β, s)` rows.
pub fn encode_inputs(scaling: &InputScaling, encoding: InputEncoding, raw: &[[f64; 3]]) -> DMatrix<f64> {
    let landmarks = if encoding.landmark_roots { scaling.interior_landmarks() } else { Vec::new() };
    let mut x = DMatrix::zeros(encoding.width(scaling), raw.len());
    for (j, r) in raw.iter().enumerate() {
        let mut col = x.column_mut(j);
        let mut i = 0;
        if encoding.harmonics == 0 {
            col[0] = scaling.scale(0, r[0]);
            i = 1;
        }
        for k in 1..=encoding.harmonics {
            let (s, c) = (TAU * k as f64 * r[0]).sin_cos();
            col[i] = c;
            col[i + 1] = s;
            i += 2;
        }
        col[i] = scaling.scale(1, r[1]);
        col[i + 1] = scaling.scale(2, r[2]);
        i += 2;
        for &k in &landmarks {
            let d = r[2] - k;
            col[i] = d.signum() * d.abs().sqrt();
            i += 1;
        }
    }
    x
}

impl DlRomModel {
    pub fn n_dofs(&self) -> usize {
        self.pod.basis.nrows()
    }

    /// Full states for a batch of raw inputs, one column each. The encoder is
    /// not evaluated.
    pub fn infer_batch(&self, raw: &[[f64; 3]]) -> DMatrix<f64> {
        let x = encode_inputs(&self.input_scaling, self.encoding, raw);
        let z = self.dfnn.forward(&x);
        let coords = self.output_scaling.unscale(&self.decoder.forward(&z));
        self.pod.lift(&coords)
    }

    /// Full state at `(t̂, β, s)` and whether the query extrapolates.
    pub fn infer(&self, t_hat: f64, beta: f64, s: f64) -> (DVector<f64>, bool) {
        let u = self.infer_batch(&[[t_hat, beta, s]]);
        (u.column(0).into_owned(), self.input_scaling.is_extrapolating([t_hat, beta, s]))
    }

    /// Latent coordinates from the feed-forward network.
    pub fn latent(&self, raw: &[[f64; 3]]) -> DMatrix<f64> {
        self.dfnn.forward(&encode_inputs(&self.input_scaling, self.encoding, raw))
    }

    /// Autoencoder reconstruction of full states (columns).
    pub fn reconstruct(&self, states: &DMatrix<f64>) -> DMatrix<f64> {
        let x = self.output_scaling.scale(&self.pod.project(states));
        let y = self.decoder.forward(&self.encoder.forward(&x));
        self.pod.lift(&self.output_scaling.unscale(&y))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = String::from("DLROM1\n");
        let sizes = |m: &Mlp| m.sizes().iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(head, "latent_dim {}", self.latent_dim);
        let _ = writeln!(head, "encoding {}", self.encoding.name());
        let _ = writeln!(head, "activation {}", self.encoder.hidden);
        let _ = writeln!(head, "output_activation {}", self.encoder.output);
        let _ = writeln!(head, "encoder {}", sizes(&self.encoder));
        let _ = writeln!(head, "decoder {}", sizes(&self.decoder));
        let _ = writeln!(head, "dfnn {}", sizes(&self.dfnn));
        let _ = writeln!(head, "pod_padded {}", u8::from(self.pod.padded));
        let mut blocks: Vec<(String, DMatrix<f64>)> = vec![
            ("pod_basis".into(), self.pod.basis.clone()),
            ("pod_singular_values".into(), DMatrix::from_row_slice(1, self.pod.singular_values.len(), &self.pod.singular_values)),
            ("pod_energy".into(), DMatrix::from_element(1, 1, self.pod.energy_retained)),
            ("input_min".into(), DMatrix::from_row_slice(1, 3, &self.input_scaling.min)),
            ("input_max".into(), DMatrix::from_row_slice(1, 3, &self.input_scaling.max)),
            ("output_mean".into(), DMatrix::from_row_slice(1, self.output_scaling.mean.len(), &self.output_scaling.mean)),
            ("output_std".into(), DMatrix::from_row_slice(1, self.output_scaling.std.len(), &self.output_scaling.std)),
        ];
        for (name, net) in [("encoder", &self.encoder), ("decoder", &self.decoder), ("dfnn", &self.dfnn)] {
            for (i, l) in net.layers.iter().enumerate() {
                blocks.push((format!("{name}_w{i}"), l.w.clone()));
                blocks.push((format!("{name}_b{i}"), DMatrix::from_column_slice(l.b.len(), 1, l.b.as_slice())));
            }
        }
        let _ = writeln!(head, "blocks {}", blocks.len());
        let mut out = head.into_bytes();
        for (name, m) in &blocks {
            out.extend_from_slice(format!("block {name}\n").as_bytes());
            out.extend_from_slice(&mxb::to_bytes(m));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = std::io::Cursor::new(bytes);
        let mut line = String::new();
        let mut next_line = |cur: &mut std::io::Cursor<&[u8]>| -> Result<String> {
            line.clear();
            cur.read_line(&mut line)?;
            if line.is_empty() {
                return Err(Error::Format("unexpected end of model file".into()));
            }
            Ok(line.trim_end_matches('\n').to_string())
        };
        if next_line(&mut cur)? != "DLROM1" {
            return Err(Error::Format("missing DLROM1 header".into()));
        }
        let mut fields = std::collections::BTreeMap::new();
        let n_blocks: usize = loop {
            let l = next_line(&mut cur)?;
            let (k, v) = l
                .split_once(' ')
                .ok_or_else(|| Error::Format(format!("malformed header line `{l}`")))?;
            if k == "blocks" {
                break v.parse().map_err(|_| Error::Format(format!("bad block count `{v}`")))?;
            }
            fields.insert(k.to_string(), v.to_string());
        };
        let mut blocks = std::collections::BTreeMap::new();
        for _ in 0..n_blocks {
            let l = next_line(&mut cur)?;
            let name = l
                .strip_prefix("block ")
                .ok_or_else(|| Error::Format(format!("expected block header, got `{l}`")))?
                .to_string();
            let m = mxb::read_mxb(&mut cur).map_err(|e| Error::Format(format!("block {name}: {e}")))?;
            blocks.insert(name, m);
        }
        let mut rest = Vec::new();
        cur.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format("trailing bytes after last block".into()));
        }
        let field = |k: &str| fields.get(k).ok_or_else(|| Error::Format(format!("missing field `{k}`")));
        let block = |k: &str| blocks.get(k).ok_or_else(|| Error::Format(format!("missing block `{k}`")));
        let sizes = |k: &str| -> Result<Vec<usize>> {
            field(k)?
                .split(' ')
                .map(|s| s.parse().map_err(|_| Error::Format(format!("bad size in `{k}`"))))
                .collect()
        };
        let hidden: Activation = field("activation")?.parse()?;
        let output: Activation = field("output_activation")?.parse()?;
        let net = |name: &str| -> Result<Mlp> {
            let s = sizes(name)?;
            let mut layers = Vec::new();
            for i in 0..s.len().saturating_sub(1) {
                let w = block(&format!("{name}_w{i}"))?.clone();
                let b = block(&format!("{name}_b{i}"))?;
                if w.shape() != (s[i + 1], s[i]) || b.shape() != (s[i + 1], 1) {
                    return Err(Error::Format(format!("layer {name}_{i} does not match declared sizes")));
                }
                layers.push(Layer {
                    w,
                    b: b.column(0).into_owned(),
                });
            }
            if layers.is_empty() {
                return Err(Error::Format(format!("network `{name}` has no layers")));
            }
            Ok(Mlp { layers, hidden, output })
        };
        let row = |k: &str| -> Result<Vec<f64>> { Ok(block(k)?.iter().copied().collect()) };
        let arr3 = |k: &str| -> Result<[f64; 3]> {
            row(k)?
                .try_into()
                .map_err(|_| Error::Format(format!("block `{k}` must hold 3 values")))
        };
        Ok(Self {
            pod: PodBasis {
                basis: block("pod_basis")?.clone(),
                singular_values: row("pod_singular_values")?,
                energy_retained: block("pod_energy")?[(0, 0)],
                padded: field("pod_padded")? == "1",
            },
            encoder: net("encoder")?,
            decoder: net("decoder")?,
            dfnn: net("dfnn")?,
            latent_dim: field("latent_dim")?
                .parse()
                .map_err(|_| Error::Format("bad latent_dim".into()))?,
            input_scaling: InputScaling {
                min: arr3("input_min")?,
                max: arr3("input_max")?,
            },
            output_scaling: OutputScaling {
                mean: row("output_mean")?,
                std: row("output_std")?,
            },
            encoding: field("encoding")?.parse()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_scaling_maps_to_unit_box() {
        let p = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 1.0, 3.0, 2.0]);
        let s = InputScaling::fit(&p).unwrap();
        assert_eq!(s.scale(1, 1.0), -1.0);
        assert_eq!(s.scale(1, 3.0), 1.0);
        assert_eq!(s.unscale(2, 0.0), 1.0);
        assert!(!s.is_extrapolating([0.5, 3.1, 1.0]));
        assert!(s.is_extrapolating([0.5, 3.3, 1.0]));
    }

    #[test]
    fn encoding_names_round_trip() {
        for name in ["raw", "harmonic", "harmonic:3", "raw+roots", "harmonic:2+roots"] {
            assert_eq!(name.parse::<InputEncoding>().unwrap().name(), name);
        }
        for bad in ["harmonic:0", "harmonic:", "fourier", "roots", "harmonic+root"] {
            assert!(bad.parse::<InputEncoding>().is_err(), "{bad}");
        }
    }

    #[test]
    fn landmark_roots_follow_the_s_range() {
        let p = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.5, 2.0, 4.0]);
        let sc = InputScaling::fit(&p).unwrap();
        assert_eq!(sc.interior_landmarks(), vec![1.0, 2.0, 3.0]);
        let enc: InputEncoding = "harmonic:2+roots".parse().unwrap();
        assert_eq!(enc.width(&sc), 9);
        let x = encode_inputs(&sc, enc, &[[0.25, 1.5, 1.25]]);
        assert!((x[(0, 0)] - 0.0).abs() < 1e-15 && (x[(1, 0)] - 1.0).abs() < 1e-15);
        assert!((x[(2, 0)] + 1.0).abs() < 1e-15 && x[(3, 0)].abs() < 1e-15);
        assert_eq!(x[(4, 0)], 0.0);
        assert_eq!(x[(5, 0)], -0.375);
        assert_eq!(x[(6, 0)], 0.5);
        assert_eq!(x[(7, 0)], -(0.75f64.sqrt()));
        assert_eq!(x[(8, 0)], -(1.75f64.sqrt()));
        assert_eq!(InputEncoding::RAW.width(&sc), 3);
    }

    #[test]
    fn constant_output_coordinate_keeps_unit_std() {
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 0.0, 1.0, 2.0]);
        let s = OutputScaling::fit(&c, ScalingMode::PerCoordinate);
        assert_eq!(s.std[0], 1.0);
        assert!((s.unscale(&s.scale(&c)) - &c).amax() < 1e-14);
        let g = OutputScaling::fit(&c, ScalingMode::Global);
        assert_eq!(g.std[0], g.std[1]);
    }
}
