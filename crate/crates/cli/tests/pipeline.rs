use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use twinrom_cli::commands::{self, load_bundle, load_dpim};
use twinrom_cli::table::Table;
use twinrom_cli::PipelineConfig;
use twinrom_core::mxb;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn twinrom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twinrom")).args(args).output().expect("binary runs")
}

fn stage(stage: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut a = vec![stage, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    a.extend_from_slice(extra);
    twinrom(&a)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = r#"
seed = 4
[benchmark]
name = "duffing1"
[solver]
n_harmonics = 3
omega_min = 0.99
omega_max = 1.01
[betas]
train = [2e-5, 6e-5]
test = [4e-5]
[arc]
n_regions = 2
points_per_curve = 9
samples_per_period = 8
[pod]
n_modes = 1
[training]
latent_dims = [1]
encoder_hidden = [8]
dfnn_hidden = [8]
epochs = 5
batch_size = 16
"#;

fn sorted_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn duffing_pipeline_runs_end_to_end() {
    let tmp = TempDir::new().unwrap();
    let cfg_path = config_path("duffing1.toml");
    let out = tmp.path().join("out");
    for s in ["snapshots", "dpim", "train", "infer", "report"] {
        let o = stage(s, &cfg_path, &out, &[]);
        assert_eq!(code(&o), 0, "{s}: {}", stderr(&o));
    }
    let cfg = PipelineConfig::load(&cfg_path).unwrap();
    let b = load_bundle(&cfg, &out).unwrap();
    assert_eq!(b.train_set.len(), 4 * 17 * 16);
    assert_eq!(b.test_set.len(), 3 * 17 * 16);
    for f in ["frf_fom.csv", "frf_dpim.csv", "frf_dl_p1.csv", "errors.csv", "modal_frf_p1.csv", "manifold_p1.csv", "manifold_dpim.csv", "manifold_metrics.csv", "train_log_p1.csv", "training_summary.csv"] {
        let text = std::fs::read_to_string(out.join(f)).unwrap();
        let (t, h) = Table::parse(&text).unwrap();
        assert_eq!(h, cfg.hash(), "{f}");
        assert!(!t.rows.is_empty(), "{f}");
    }
    let (summary, _) = Table::parse(&std::fs::read_to_string(out.join(commands::TRAINING_SUMMARY)).unwrap()).unwrap();
    let rel = summary.column("val_relative_error").unwrap()[0];
    assert!(rel < 0.01, "p=1 validation reconstruction error {rel}");

    // The 1-dof reduced model is the full model, so the peak amplitudes match.
    let (dp, _) = Table::parse(&std::fs::read_to_string(out.join("frf_dpim.csv")).unwrap()).unwrap();
    let (fom, _) = Table::parse(&std::fs::read_to_string(out.join("frf_fom.csv")).unwrap()).unwrap();
    for beta in cfg.betas.train.iter().chain(&cfg.betas.test) {
        let peak = |t: &Table, bcol: usize, acol: usize| t.rows.iter().filter(|r| r[bcol] == *beta).map(|r| r[acol]).fold(0.0, f64::max);
        let (a, b) = (peak(&dp, 0, 2), peak(&fom, 1, 4));
        assert!((a - b).abs() <= 1e-6 * b, "beta {beta}: {a} vs {b}");
    }
}

#[test]
fn reruns_are_bitwise_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        for s in ["snapshots", "dpim", "train", "infer", "report"] {
            let o = stage(s, &cfg, out, &[]);
            assert_eq!(code(&o), 0, "{s}: {}", stderr(&o));
        }
    }
    let (fa, fb) = (sorted_files(&a), sorted_files(&b));
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert!(std::fs::read(x).unwrap() == std::fs::read(y).unwrap(), "{} differs", x.display());
    }
}

#[test]
fn seed_override_changes_the_hash_and_trips_the_stale_guard() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    assert_eq!(code(&stage("snapshots", &cfg, &out, &[])), 0);
    let o = stage("train", &cfg, &out, &["--seed", "9"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("stale"));
    assert_eq!(code(&stage("train", &cfg, &out, &[])), 0);
    assert_eq!(code(&stage("infer", &cfg, &out, &[])), 0);

    // An edited config invalidates every downstream artifact.
    let edited = write_config(tmp.path(), &SMALL.replace("epochs = 5", "epochs = 6"));
    for s in ["train", "infer", "report"] {
        assert_eq!(code(&stage(s, &edited, &out, &[])), 4, "{s}");
    }
}

#[test]
fn missing_artifacts_exit_with_four() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("empty");
    for s in ["train", "infer", "report"] {
        assert_eq!(code(&stage(s, &cfg, &out, &[])), 4, "{s}");
    }
}

#[test]
fn config_errors_exit_with_two_before_solving() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cases = [
        SMALL.replace("train = [2e-5, 6e-5]", "train = []"),
        SMALL.replace("test = [4e-5]", "test = [2e-5]"),
        SMALL.replace("n_harmonics = 3", "n_harmonic = 3"),
        SMALL.replace("name = \"duffing1\"", "name = \"duffing1\"\nzeta = 2.0"),
        SMALL.replace("name = \"duffing1\"", "name = \"pendulum\""),
        SMALL.replace("seed = 4\n", "seed = 4\n[training]\nactivation = \"relu\"\n"),
    ];
    for text in &cases {
        let cfg = write_config(tmp.path(), text);
        let o = stage("snapshots", &cfg, &out, &[]);
        assert_eq!(code(&o), 2, "{text}\n{}", stderr(&o));
        assert!(!out.exists());
    }
    assert_eq!(code(&stage("snapshots", &tmp.path().join("absent.toml"), &out, &[])), 2);
}

#[test]
fn arch_dpim_is_refused_with_a_resonance_diagnostic() {
    let tmp = TempDir::new().unwrap();
    let o = stage("dpim", &config_path("arch_ir12.toml"), tmp.path(), &[]);
    assert_eq!(code(&o), 2);
    let msg = stderr(&o);
    assert!(msg.contains("2:1") && msg.contains("ratio 2.0"), "{msg}");
}

#[test]
fn solver_failure_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let text = SMALL.replace("omega_max = 1.01", "omega_max = 1.01\ntol = 1e-30\nmax_corrector_iters = 1");
    let cfg = write_config(tmp.path(), &text);
    let o = stage("snapshots", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn bundle_matrices_are_exact_mxb_files() {
    let tmp = TempDir::new().unwrap();
    let cfg_path = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    assert_eq!(code(&stage("snapshots", &cfg_path, &out, &[])), 0);
    let cfg = PipelineConfig::load(&cfg_path).unwrap();
    for f in ["snapshots.mxb", "params.mxb", "test_snapshots.mxb", "train_frf.mxb"] {
        let bytes = std::fs::read(out.join(f)).unwrap();
        let m = mxb::from_bytes(&bytes).unwrap();
        let header = format!("MXB1 {} {}\n", m.nrows(), m.ncols());
        assert_eq!(bytes.len(), header.len() + 8 * m.len(), "{f}");
        assert_eq!(mxb::to_bytes(&m), bytes, "{f}");
    }
    let b = load_bundle(&cfg, &out).unwrap();
    assert_eq!(b.train_set.len(), 2 * 9 * 8);
    assert_eq!(b.train_set.params.ncols(), 3);
    for c in &b.family.curves {
        assert_eq!(c.s.first(), Some(&0.0));
        assert_eq!(c.s.last(), Some(&2.0));
    }
}

#[test]
fn dpim_model_file_round_trips() {
    let tmp = TempDir::new().unwrap();
    let cfg_path = config_path("mirror_analogue.toml");
    let cfg = PipelineConfig::load(&cfg_path).unwrap();
    let built = commands::cmd_dpim(&cfg, tmp.path()).unwrap();
    let loaded = load_dpim(&cfg, tmp.path()).unwrap();
    assert_eq!(loaded.to_text(), built.to_text());
    for (r, s) in [(0.01, 0.0), (-0.02, 0.013), (0.03, -0.02)] {
        let (a, b) = (built.decode(r, s), loaded.decode(r, s));
        assert!(a.0.iter().zip(b.0.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.1.iter().zip(b.1.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
