//! Pipeline configuration: a sectioned TOML file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use twinrom_core::continuation::ContinuationSettings;
use twinrom_core::fom::{build_benchmark, BenchmarkKind, FomSystem};
use twinrom_dl::nn::Activation;
use twinrom_dl::{InputEncoding, ScalingMode, TrainingConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Output directory; not part of the config hash.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub benchmark: BenchmarkSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub betas: BetaSection,
    #[serde(default)]
    pub arc: ArcSection,
    #[serde(default)]
    pub pod: PodSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub report: ReportSection,
}

/// `name` plus parameter overrides as plain keys of the same section;
/// unknown parameter names are rejected when the system is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSection {
    pub name: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub n_harmonics: usize,
    pub tol: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub step_init: f64,
    pub step_min: f64,
    pub step_max: f64,
    pub x_scale: f64,
    pub omega_scale: f64,
    pub max_corrector_iters: usize,
    pub max_points: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            n_harmonics: 7,
            tol: 1e-10,
            omega_min: 0.9,
            omega_max: 1.1,
            step_init: 0.01,
            step_min: 1e-9,
            step_max: 0.05,
            x_scale: 0.1,
            omega_scale: 0.01,
            max_corrector_iters: 8,
            max_points: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSection {
    pub train: Vec<f64>,
    #[serde(default)]
    pub test: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArcSection {
    pub n_regions: usize,
    pub rel_prominence: f64,
    /// Interior landmark frequencies per training curve, overriding detection.
    pub train_landmarks: Option<Vec<Vec<f64>>>,
    pub test_landmarks: Option<Vec<Vec<f64>>>,
    /// Uniform `s` samples per curve.
    pub points_per_curve: usize,
    pub samples_per_period: usize,
}

impl Default for ArcSection {
    fn default() -> Self {
        Self {
            n_regions: 1,
            rel_prominence: 0.01,
            train_landmarks: None,
            test_landmarks: None,
            points_per_curve: 32,
            samples_per_period: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PodSection {
    pub n_modes: usize,
    pub oversampling: usize,
    pub power_iters: usize,
}

impl Default for PodSection {
    fn default() -> Self {
        Self {
            n_modes: 20,
            oversampling: 10,
            power_iters: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub latent_dims: Vec<usize>,
    pub encoder_hidden: Vec<usize>,
    pub dfnn_hidden: Vec<usize>,
    pub activation: String,
    pub encoding: String,
    pub output_scaling: String,
    pub learning_rate: f64,
    pub final_learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub w_rec: f64,
    pub w_lat: f64,
    pub w_inf: f64,
    pub validation_fraction: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let d = TrainingConfig::default();
        Self {
            latent_dims: vec![1, 2, 3],
            encoder_hidden: d.encoder_hidden,
            dfnn_hidden: d.dfnn_hidden,
            activation: d.activation.as_str().into(),
            encoding: d.encoding.name(),
            output_scaling: d.output_scaling.as_str().into(),
            learning_rate: d.learning_rate,
            final_learning_rate: d.final_learning_rate,
            batch_size: d.batch_size,
            epochs: d.epochs,
            w_rec: d.w_rec,
            w_lat: d.w_lat,
            w_inf: d.w_inf,
            validation_fraction: d.validation_fraction,
            adam_beta1: d.adam_beta1,
            adam_beta2: d.adam_beta2,
            adam_eps: d.adam_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// Harmonics kept in Fourier-differentiated velocities.
    pub n_keep: usize,
    /// `s` samples of reconstructed FRFs.
    pub infer_points: usize,
    /// Eigenmodes reported in the error tables.
    pub modes: Vec<usize>,
    /// Mode index of the vertical axis in manifold plots.
    pub plot_mode: usize,
    pub manifold_bins: usize,
    /// Mode whose activation by the master is measured, if any.
    pub secondary_mode: Option<usize>,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            n_keep: 10,
            infer_points: 101,
            modes: vec![],
            plot_mode: 0,
            manifold_bins: 20,
            secondary_mode: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, excluding the output directory.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn kind(&self) -> CliResult<BenchmarkKind> {
        self.benchmark
            .name
            .parse()
            .map_err(|e: twinrom_core::Error| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        self.system()?;
        if self.betas.train.is_empty() {
            return bad("betas.train is empty".into());
        }
        for b in self.betas.train.iter().chain(&self.betas.test) {
            if !(b.is_finite() && *b > 0.0) {
                return bad(format!("forcing level {b} must be positive"));
            }
        }
        if let Some(b) = self.betas.test.iter().find(|b| self.betas.train.contains(b)) {
            return bad(format!("beta {b} is both a training and a testing level"));
        }
        if self.arc.n_regions == 0 || self.arc.points_per_curve < 2 || self.arc.samples_per_period < 2 {
            return bad("arc: need n_regions >= 1, points_per_curve >= 2, samples_per_period >= 2".into());
        }
        for (name, ov, n) in [
            ("train_landmarks", &self.arc.train_landmarks, self.betas.train.len()),
            ("test_landmarks", &self.arc.test_landmarks, self.betas.test.len()),
        ] {
            if let Some(ov) = ov {
                if ov.len() != n || ov.iter().any(|v| v.len() + 1 != self.arc.n_regions) {
                    return bad(format!(
                        "arc.{name}: need {n} lists of {} frequencies",
                        self.arc.n_regions - 1
                    ));
                }
            }
        }
        if self.solver.n_harmonics == 0 {
            return bad("solver.n_harmonics must be positive".into());
        }
        if self.pod.n_modes == 0 {
            return bad("pod.n_modes must be positive".into());
        }
        if self.training.latent_dims.is_empty() || self.training.latent_dims.contains(&0) {
            return bad("training.latent_dims must be a non-empty list of positive sizes".into());
        }
        self.training_config(self.training.latent_dims[0])?
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn system(&self) -> CliResult<FomSystem> {
        build_benchmark(self.kind()?, &self.benchmark.params)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn continuation(&self) -> ContinuationSettings {
        let s = &self.solver;
        let mut c = ContinuationSettings::new(s.omega_min, s.omega_max);
        c.tol = s.tol;
        c.step_init = s.step_init;
        c.step_min = s.step_min;
        c.step_max = s.step_max;
        c.x_scale = s.x_scale;
        c.omega_scale = s.omega_scale;
        c.max_corrector_iters = s.max_corrector_iters;
        c.max_points = s.max_points;
        c
    }

    pub fn training_config(&self, latent_dim: usize) -> CliResult<TrainingConfig> {
        let t = &self.training;
        let activation: Activation = t.activation.parse().map_err(|e: twinrom_dl::Error| CliError::Config(e.to_string()))?;
        let encoding: InputEncoding = t.encoding.parse().map_err(|e: twinrom_dl::Error| CliError::Config(e.to_string()))?;
        let output_scaling: ScalingMode = t
            .output_scaling
            .parse()
            .map_err(|e: twinrom_dl::Error| CliError::Config(e.to_string()))?;
        Ok(TrainingConfig {
            latent_dim,
            output_scaling,
            encoder_hidden: t.encoder_hidden.clone(),
            dfnn_hidden: t.dfnn_hidden.clone(),
            activation,
            encoding,
            learning_rate: t.learning_rate,
            final_learning_rate: t.final_learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            w_rec: t.w_rec,
            w_lat: t.w_lat,
            w_inf: t.w_inf,
            validation_fraction: t.validation_fraction,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
            seed: self.seed,
        })
    }

    /// The output directory, or `fallback` when unset.
    pub fn out_dir(&self, fallback: &Path) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| fallback.to_path_buf())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = "seed = 3\n[benchmark]\nname = \"duffing1\"\n[betas]\ntrain = [1e-4, 2e-4]\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = PipelineConfig::from_toml(MIN).unwrap();
        assert_eq!(c.solver.n_harmonics, 7);
        assert_eq!(c.training.w_rec, 0.5);
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn output_dir_does_not_change_hash() {
        let a = PipelineConfig::from_toml(MIN).unwrap();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 4;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn overlapping_betas_are_rejected() {
        let t = MIN.to_string() + "test = [1e-4]\n";
        assert!(matches!(PipelineConfig::from_toml(&t), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let t = MIN.to_string() + "[solver]\nharmonics = 3\n";
        assert!(PipelineConfig::from_toml(&t).is_err());
    }

    #[test]
    fn benchmark_overrides_are_plain_keys() {
        let t = MIN.replace("name = \"duffing1\"\n", "name = \"duffing1\"\ngamma = 0.25\n");
        let cfg = PipelineConfig::from_toml(&t).unwrap();
        assert_eq!(cfg.benchmark.params.get("gamma"), Some(&0.25));
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let bad = MIN.replace("name = \"duffing1\"\n", "name = \"duffing1\"\nzeta = 1.0\n");
        assert!(matches!(PipelineConfig::from_toml(&bad), Err(CliError::Config(_))));
    }

    #[test]
    fn empty_train_list_is_rejected() {
        let t = "seed = 1\n[benchmark]\nname = \"duffing1\"\n[betas]\ntrain = []\n";
        assert!(PipelineConfig::from_toml(t).is_err());
    }
}
