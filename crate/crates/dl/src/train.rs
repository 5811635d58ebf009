//! Joint training of encoder, decoder and feed-forward network with Adam.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{encode_inputs, DlRomModel, InputEncoding, InputScaling, OutputScaling, ScalingMode};
use crate::nn::{Activation, Mlp};
use crate::rsvd::PodBasis;

/// Snapshot matrix (`N_h × N_s`) and its `(t̂, β, s)` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub matrix: DMatrix<f64>,
    pub params: DMatrix<f64>,
    pub samples_per_period: usize,
}

impl SnapshotSet {
    pub fn new(matrix: DMatrix<f64>, params: DMatrix<f64>, samples_per_period: usize) -> Result<Self> {
        if matrix.ncols() != params.nrows() || params.ncols() != 3 {
            return Err(Error::Dimension(format!(
                "snapshot matrix has {} columns, parameter table is {}x{}",
                matrix.ncols(),
                params.nrows(),
                params.ncols()
            )));
        }
        Ok(Self {
            matrix,
            params,
            samples_per_period,
        })
    }

    pub fn len(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.ncols() == 0
    }

    pub fn raw_params(&self) -> Vec<[f64; 3]> {
        self.params
            .row_iter()
            .map(|r| [r[0], r[1], r[2]])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub latent_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub encoder_hidden: Vec<usize>,
    pub dfnn_hidden: Vec<usize>,
    pub activation: Activation,
    pub encoding: InputEncoding,
    pub output_scaling: ScalingMode,
    pub learning_rate: f64,
    /// Learning rate reached at the last epoch by geometric decay.
    pub final_learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub w_rec: f64,
    pub w_lat: f64,
    /// Weight of `‖û − f_D(φ_DF)‖²`; zero gives the two-term loss.
    pub w_inf: f64,
    pub validation_fraction: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            latent_dim: 2,
            encoder_hidden: vec![64, 32],
            dfnn_hidden: vec![32, 32],
            activation: Activation::Tanh,
            encoding: InputEncoding::RAW,
            output_scaling: ScalingMode::PerCoordinate,
            learning_rate: 1e-3,
            final_learning_rate: 1e-3,
            batch_size: 64,
            epochs: 200,
            w_rec: 0.5,
            w_lat: 0.5,
            w_inf: 0.0,
            validation_fraction: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive");
        }
        if !(self.learning_rate > 0.0 && self.final_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        if [self.w_rec, self.w_lat, self.w_inf].iter().any(|w| !(*w >= 0.0)) {
            return bad("loss weights must be non-negative");
        }
        if self.encoder_hidden.contains(&0) || self.dfnn_hidden.contains(&0) {
            return bad("layer widths must be positive");
        }
        Ok(())
    }
}

/// Stream ids for [`ChaCha8Rng::set_stream`]; each consumer of the seed draws
/// from its own stream.
pub const STREAM_RSVD: u64 = 1;
pub const STREAM_TRAIN: u64 = 2;

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: DlRomModel,
    pub log: Vec<LogRow>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Mean relative reconstruction error `‖û − f_D(f_E(û))‖ / ‖û‖` on the
    /// validation split, measured in full coordinates.
    pub val_relative_error: f64,
    /// False when the 10-epoch smoothed validation curve ever increases.
    pub smoothed_val_monotone: bool,
}

/// The three networks as one flat parameter vector: encoder, decoder, dfnn.
#[derive(Debug, Clone, PartialEq)]
pub struct Networks {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub dfnn: Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub rec: f64,
    pub lat: f64,
    pub inf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub rec: f64,
    pub lat: f64,
    pub inf: f64,
    pub total: f64,
}

fn sq_mean(d: &DMatrix<f64>) -> f64 {
    d.norm_squared() / d.len().max(1) as f64
}

impl Networks {
    pub fn n_params(&self) -> usize {
        self.encoder.n_params() + self.decoder.n_params() + self.dfnn.n_params()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p.extend(self.dfnn.params());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let (ne, nd) = (self.encoder.n_params(), self.decoder.n_params());
        self.encoder.set_params(&p[..ne]);
        self.decoder.set_params(&p[ne..ne + nd]);
        self.dfnn.set_params(&p[ne + nd..]);
    }

    /// Loss on a batch of scaled POD coordinates `x` (columns) and network
    /// inputs `q`.
    pub fn loss(&self, x: &DMatrix<f64>, q: &DMatrix<f64>, w: LossWeights) -> LossParts {
        let ze = self.encoder.forward(x);
        let zd = self.dfnn.forward(q);
        let rec = sq_mean(&(self.decoder.forward(&ze) - x));
        let lat = sq_mean(&(&ze - &zd));
        let inf = if w.inf > 0.0 {
            sq_mean(&(self.decoder.forward(&zd) - x))
        } else {
            0.0
        };
        LossParts {
            rec,
            lat,
            inf,
            total: w.rec * rec + w.lat * lat + w.inf * inf,
        }
    }

    /// Loss and its gradient with respect to [`Self::params`].
    pub fn loss_and_grad(&self, x: &DMatrix<f64>, q: &DMatrix<f64>, w: LossWeights) -> (f64, Vec<f64>) {
        let (ne, nd) = (self.encoder.n_params(), self.decoder.n_params());
        let mut grad = vec![0.0; self.n_params()];
        let (ge, rest) = grad.split_at_mut(ne);
        let (gd, gf) = rest.split_at_mut(nd);

        let ce = self.encoder.forward_cached(x);
        let cf = self.dfnn.forward_cached(q);
        let ze = ce.output();
        let zd = cf.output();
        let cd = self.decoder.forward_cached(ze);

        let r = cd.output() - x;
        let rec = sq_mean(&r);
        let l = ze - zd;
        let lat = sq_mean(&l);

        let mut dze = self.decoder.backward(&cd, &(r * (2.0 * w.rec / x.len() as f64)), gd);
        let dlat = l * (2.0 * w.lat / ze.len() as f64);
        dze += &dlat;
        let mut dzd = -dlat;

        let mut inf = 0.0;
        if w.inf > 0.0 {
            let ci = self.decoder.forward_cached(zd);
            let ri = ci.output() - x;
            inf = sq_mean(&ri);
            dzd += self.decoder.backward(&ci, &(ri * (2.0 * w.inf / x.len() as f64)), gd);
        }
        self.encoder.backward(&ce, &dze, ge);
        self.dfnn.backward(&cf, &dzd, gf);
        (w.rec * rec + w.lat * lat + w.inf * inf, grad)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(n: usize, cfg: &TrainingConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

fn gather(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])])
}

/// True when the trailing-window mean of `v` never increases.
pub fn smoothed_monotone(v: &[f64], window: usize) -> bool {
    if v.len() < window || window == 0 {
        return true;
    }
    let means: Vec<f64> = v.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect();
    means.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12))
}

pub fn build_networks(n_pod: usize, input_width: usize, cfg: &TrainingConfig, rng: &mut ChaCha8Rng) -> Networks {
    let p = cfg.latent_dim;
    let mut enc = vec![n_pod];
    enc.extend(&cfg.encoder_hidden);
    enc.push(p);
    let dec: Vec<usize> = enc.iter().rev().copied().collect();
    let mut df = vec![input_width];
    df.extend(&cfg.dfnn_hidden);
    df.push(p);
    let act = cfg.activation;
    Networks {
        encoder: Mlp::new(&enc, act, Activation::Linear, rng),
        decoder: Mlp::new(&dec, act, Activation::Linear, rng),
        dfnn: Mlp::new(&df, act, Activation::Linear, rng),
    }
}

pub fn train(snapshots: &SnapshotSet, pod: &PodBasis, cfg: &TrainingConfig) -> Result<TrainingOutcome> {
    cfg.validate()?;
    if snapshots.matrix.nrows() != pod.basis.nrows() {
        return Err(Error::Dimension(format!(
            "snapshots have {} rows, POD basis {}",
            snapshots.matrix.nrows(),
            pod.basis.nrows()
        )));
    }
    let ns = snapshots.len();
    let n_val = ((ns as f64) * cfg.validation_fraction).round() as usize;
    if ns < 2 || n_val >= ns {
        return Err(Error::Config(format!("{ns} snapshots cannot be split for validation")));
    }
    let mut rng = seeded_rng(cfg.seed, STREAM_TRAIN);

    let input_scaling = InputScaling::fit(&snapshots.params)?;
    let coords = pod.project(&snapshots.matrix);
    let output_scaling = OutputScaling::fit(&coords, cfg.output_scaling);
    let x_all = output_scaling.scale(&coords);
    let q_all = encode_inputs(&input_scaling, cfg.encoding, &snapshots.raw_params());

    let mut order: Vec<usize> = (0..ns).collect();
    order.shuffle(&mut rng);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let x_val = gather(&x_all, val_idx);
    let q_val = gather(&q_all, val_idx);

    let mut nets = build_networks(pod.dim(), cfg.encoding.width(&input_scaling), cfg, &mut rng);
    let weights = LossWeights {
        rec: cfg.w_rec,
        lat: cfg.w_lat,
        inf: cfg.w_inf,
    };
    let mut params = nets.params();
    let mut adam = Adam::new(params.len(), cfg);
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut log = Vec::with_capacity(cfg.epochs);
    let decay = if cfg.epochs > 1 {
        (cfg.final_learning_rate / cfg.learning_rate).powf(1.0 / (cfg.epochs - 1) as f64)
    } else {
        1.0
    };
    let mut lr = cfg.learning_rate;

    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut acc = 0.0;
        let mut n_seen = 0usize;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let x = gather(&x_all, chunk);
            let q = gather(&q_all, chunk);
            let (loss, grad) = nets.loss_and_grad(&x, &q, weights);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch, loss });
            }
            acc += loss * chunk.len() as f64;
            n_seen += chunk.len();
            adam.step(&mut params, &grad, lr);
            nets.set_params(&params);
        }
        let train_loss = acc / n_seen as f64;
        let val_loss = if n_val > 0 {
            nets.loss(&x_val, &q_val, weights).total
        } else {
            train_loss
        };
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, loss: val_loss });
        }
        if val_loss < best.0 {
            best = (val_loss, epoch, params.clone());
        }
        log.push(LogRow {
            epoch,
            train_loss,
            val_loss,
        });
        lr *= decay;
    }

    nets.set_params(&best.2);
    let model = DlRomModel {
        pod: pod.clone(),
        encoder: nets.encoder,
        decoder: nets.decoder,
        dfnn: nets.dfnn,
        latent_dim: cfg.latent_dim,
        input_scaling,
        output_scaling,
        encoding: cfg.encoding,
    };
    let val_cols: &[usize] = if n_val > 0 { val_idx } else { &train_idx };
    let truth = gather(&snapshots.matrix, val_cols);
    let recon = model.reconstruct(&truth);
    let val_relative_error = relative_column_error(&truth, &recon);
    let vals: Vec<f64> = log.iter().map(|r| r.val_loss).collect();
    Ok(TrainingOutcome {
        model,
        best_epoch: best.1,
        best_val_loss: best.0,
        smoothed_val_monotone: smoothed_monotone(&vals, 10),
        log,
        val_relative_error,
    })
}

/// `‖A − B‖_F / ‖A‖_F`, or the absolute error when `A` vanishes.
pub fn relative_column_error(truth: &DMatrix<f64>, approx: &DMatrix<f64>) -> f64 {
    let d = (truth - approx).norm();
    let n = truth.norm();
    if n > 0.0 {
        d / n
    } else {
        d
    }
}
