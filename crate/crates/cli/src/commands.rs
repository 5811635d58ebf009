//! Subcommands: each reads and writes artifacts in one output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use twinrom_core::continuation::FrfCurve;
use twinrom_core::dpim::{build_dpim, dpim_frf, DpimModel};
use twinrom_core::fom::{eigen_solve, EigenBasis, FomSystem};
use twinrom_core::frfarc::{ArcFamily, ArcParametrizedFrf, AxisScaling};
use twinrom_core::hb::HarmonicGrid;
use twinrom_core::metrics::{dpim_surface, manifold_orbits, max_surface_distance, modal_coordinate, sheet_velocity_dependence, ManifoldPoint};
use twinrom_core::mxb;
use twinrom_dl::{DlRomModel, SnapshotSet};

use crate::autoparam;
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::rom::{self, OrbitKey};
use crate::snapshots::{self, Bundle, CurveSet};
use crate::table::Table;

pub const MANIFEST: &str = "manifest.txt";
pub const DPIM_FILE: &str = "dpim.txt";
pub const TRAINING_SUMMARY: &str = "training_summary.csv";
/// Relative bracket at which transition bisection stops.
pub const TRANSITION_TOL: f64 = 1e-3;

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|_| CliError::Missing(path.display().to_string()))
}

fn save_mxb(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    write_bytes(path, &mxb::to_bytes(m))
}

fn load_mxb(path: &Path) -> CliResult<DMatrix<f64>> {
    let bytes = std::fs::read(path).map_err(|_| CliError::Missing(path.display().to_string()))?;
    mxb::from_bytes(&bytes).map_err(|e| CliError::Missing(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Refuses artifacts written under a different configuration.
pub fn check_hash(found: &str, cfg: &PipelineConfig, what: &str) -> CliResult<()> {
    let h = cfg.hash();
    if found != h {
        return Err(CliError::Stale(format!(
            "{what} was produced with config {found}, current config is {h}; rerun the earlier stages"
        )));
    }
    Ok(())
}

fn read_csv(path: &Path, cfg: &PipelineConfig) -> CliResult<Table> {
    let (t, h) = Table::parse(&read_text(path)?)?;
    check_hash(&h, cfg, &path.display().to_string())?;
    Ok(t)
}

fn curve_rows(c: &FrfCurve, a: &ArcParametrizedFrf) -> Vec<[f64; 4]> {
    c.points
        .iter()
        .zip(&a.s)
        .map(|(p, &s)| [c.beta, s, p.omega, p.amplitude])
        .collect()
}

fn set_rows(set: &CurveSet) -> DMatrix<f64> {
    let rows: Vec<[f64; 4]> = set
        .curves
        .iter()
        .zip(&set.arcs)
        .flat_map(|(c, a)| curve_rows(c, a))
        .collect();
    DMatrix::from_fn(rows.len(), 4, |i, j| rows[i][j])
}

fn orbit_rows(set: &CurveSet) -> DMatrix<f64> {
    let rows: Vec<[f64; 4]> = set
        .sampled
        .iter()
        .flat_map(|c| (0..c.s.len()).map(move |k| [c.beta, c.s[k], c.omega[k], c.amplitude[k]]))
        .collect();
    DMatrix::from_fn(rows.len(), 4, |i, j| rows[i][j])
}

/// Writes the snapshot bundle; see [`load_bundle`].
pub fn write_bundle(cfg: &PipelineConfig, b: &Bundle, out: &Path) -> CliResult<()> {
    ensure_dir(out)?;
    let hash = cfg.hash();
    save_mxb(&out.join("snapshots.mxb"), &b.train_set.matrix)?;
    save_mxb(&out.join("params.mxb"), &b.train_set.params)?;
    save_mxb(&out.join("test_snapshots.mxb"), &b.test_set.matrix)?;
    save_mxb(&out.join("test_params.mxb"), &b.test_set.params)?;
    save_mxb(&out.join("train_orbits.mxb"), &orbit_rows(&b.train))?;
    save_mxb(&out.join("test_orbits.mxb"), &orbit_rows(&b.test))?;
    save_mxb(&out.join("train_frf.mxb"), &set_rows(&b.train))?;
    save_mxb(&out.join("test_frf.mxb"), &set_rows(&b.test))?;
    let sc = &b.family.scaling;
    save_mxb(
        &out.join("axis_scaling.mxb"),
        &DMatrix::from_row_slice(1, 4, &[sc.omega_min, sc.omega_max, sc.amp_min, sc.amp_max]),
    )?;

    let mut frf = Table::new(&["set", "beta", "s", "omega", "amplitude"]);
    for (tag, set) in [(0.0, &b.train), (1.0, &b.test)] {
        for (c, a) in set.curves.iter().zip(&set.arcs) {
            for r in curve_rows(c, a) {
                frf.push(vec![tag, r[0], r[1], r[2], r[3]]);
            }
        }
    }
    frf.write(&out.join("frf_fom.csv"), &hash)?;

    let mut m = String::from("twinrom-bundle 1\n");
    let _ = writeln!(m, "config_hash {hash}");
    let _ = writeln!(m, "benchmark {}", cfg.benchmark.name);
    let _ = writeln!(m, "n_dofs {}", b.train_set.matrix.nrows());
    let _ = writeln!(m, "samples_per_period {}", b.train_set.samples_per_period);
    let _ = writeln!(m, "n_regions {}", cfg.arc.n_regions);
    let _ = writeln!(m, "train_snapshots {}", b.train_set.len());
    let _ = writeln!(m, "test_snapshots {}", b.test_set.len());
    for (tag, set) in [("train", &b.train), ("test", &b.test)] {
        for (c, a) in set.curves.iter().zip(&set.arcs) {
            let lm: Vec<String> = a.landmarks.iter().map(|&i| format!("{}", c.points[i].omega)).collect();
            let _ = writeln!(
                m,
                "curve {tag} beta {} points {} folds {} landmarks {}",
                c.beta,
                c.len(),
                c.fold_indices.len(),
                lm.join(" ")
            );
        }
    }
    write_bytes(&out.join(MANIFEST), m.as_bytes())
}

/// Snapshot bundle read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedBundle {
    pub train_set: SnapshotSet,
    pub test_set: SnapshotSet,
    pub train_keys: Vec<OrbitKey>,
    pub test_keys: Vec<OrbitKey>,
    pub train_orbit_amplitude: Vec<f64>,
    pub test_orbit_amplitude: Vec<f64>,
    pub family: ArcFamily,
    pub test_arcs: Vec<ArcParametrizedFrf>,
}

fn arcs_from_rows(rows: &DMatrix<f64>, n_regions: usize) -> Vec<ArcParametrizedFrf> {
    let mut out: Vec<ArcParametrizedFrf> = Vec::new();
    for r in rows.row_iter() {
        let (beta, s, omega, amp) = (r[0], r[1], r[2], r[3]);
        if out.last().map(|c| c.beta != beta).unwrap_or(true) {
            out.push(ArcParametrizedFrf {
                beta,
                s: vec![],
                omega: vec![],
                amplitude: vec![],
                landmarks: vec![],
                n_regions,
            });
        }
        let c = out.last_mut().expect("pushed");
        if s.fract() == 0.0 {
            c.landmarks.push(c.s.len());
        }
        c.s.push(s);
        c.omega.push(omega);
        c.amplitude.push(amp);
    }
    out
}

fn keys_from_rows(rows: &DMatrix<f64>) -> (Vec<OrbitKey>, Vec<f64>) {
    rows.row_iter()
        .map(|r| {
            (
                OrbitKey {
                    beta: r[0],
                    s: r[1],
                    omega: r[2],
                },
                r[3],
            )
        })
        .unzip()
}

fn manifest_hash(text: &str) -> Option<&str> {
    text.lines().find_map(|l| l.strip_prefix("config_hash "))
}

pub fn load_bundle(cfg: &PipelineConfig, out: &Path) -> CliResult<LoadedBundle> {
    let manifest = read_text(&out.join(MANIFEST))?;
    let h = manifest_hash(&manifest).ok_or_else(|| CliError::Stale("manifest lacks config_hash".into()))?;
    check_hash(h, cfg, "snapshot bundle")?;
    let spp = cfg.arc.samples_per_period;
    let train_set = SnapshotSet::new(load_mxb(&out.join("snapshots.mxb"))?, load_mxb(&out.join("params.mxb"))?, spp)?;
    let test_set = SnapshotSet::new(load_mxb(&out.join("test_snapshots.mxb"))?, load_mxb(&out.join("test_params.mxb"))?, spp)?;
    let (train_keys, train_orbit_amplitude) = keys_from_rows(&load_mxb(&out.join("train_orbits.mxb"))?);
    let (test_keys, test_orbit_amplitude) = keys_from_rows(&load_mxb(&out.join("test_orbits.mxb"))?);
    let sc = load_mxb(&out.join("axis_scaling.mxb"))?;
    let scaling = AxisScaling {
        omega_min: sc[(0, 0)],
        omega_max: sc[(0, 1)],
        amp_min: sc[(0, 2)],
        amp_max: sc[(0, 3)],
    };
    Ok(LoadedBundle {
        train_set,
        test_set,
        train_keys,
        test_keys,
        train_orbit_amplitude,
        test_orbit_amplitude,
        family: ArcFamily {
            scaling,
            curves: arcs_from_rows(&load_mxb(&out.join("train_frf.mxb"))?, cfg.arc.n_regions),
        },
        test_arcs: arcs_from_rows(&load_mxb(&out.join("test_frf.mxb"))?, cfg.arc.n_regions),
    })
}

pub fn cmd_snapshots(cfg: &PipelineConfig, out: &Path) -> CliResult<Bundle> {
    let t0 = Instant::now();
    let b = snapshots::generate(cfg)?;
    write_bundle(cfg, &b, out)?;
    eprintln!(
        "snapshots: {} training and {} testing columns in {:.2?}",
        b.train_set.len(),
        b.test_set.len(),
        t0.elapsed()
    );
    Ok(b)
}

fn all_betas(cfg: &PipelineConfig) -> Vec<f64> {
    let mut b: Vec<f64> = cfg.betas.train.iter().chain(&cfg.betas.test).copied().collect();
    b.sort_by(f64::total_cmp);
    b
}

/// Builds the DPIM model, traces its FRFs at every configured β and writes
/// the model, FRF and manifold tables.
pub fn cmd_dpim(cfg: &PipelineConfig, out: &Path) -> CliResult<DpimModel> {
    ensure_dir(out)?;
    let sys = cfg.system()?;
    let model = build_dpim(&sys, sys.master_mode()).map_err(|e| match e {
        twinrom_core::Error::ResonanceGuard(m) => CliError::Config(format!("DPIM refused: {m}")),
        other => other.into(),
    })?;
    let hash = cfg.hash();
    write_bytes(&out.join(DPIM_FILE), format!("# config_hash={hash}\n{}", model.to_text()).as_bytes())?;
    let grid = HarmonicGrid::new(cfg.solver.n_harmonics)?;
    let settings = cfg.continuation();
    let mut frf = Table::new(&["beta", "omega", "amplitude"]);
    let mut r_max = 0.0f64;
    for beta in all_betas(cfg) {
        let c = dpim_frf(&model, grid.clone(), beta, &settings)?;
        for p in &c.points {
            frf.push(vec![beta, p.omega, p.amplitude]);
            // Reduced unknowns: [mean, cos.., sin..] of R.
            let nh = grid.n_harmonics();
            let a1 = (p.x[1].powi(2) + p.x[1 + nh].powi(2)).sqrt();
            r_max = r_max.max(a1);
        }
    }
    frf.write(&out.join("frf_dpim.csv"), &hash)?;
    let basis = eigen_solve(&sys, sys.n_dofs())?;
    let r_max = if r_max > 0.0 { 1.1 * r_max } else { 1.0 };
    let surf = dpim_surface(&model, &basis, sys.mass(), cfg.report.plot_mode, r_max, r_max * model.omega_m, 41)?;
    let mut t = Table::new(&["r", "s", "u_master", "v_master", "u_plot"]);
    let ns = surf.s.len();
    for (k, p) in surf.points.iter().enumerate() {
        t.push(vec![surf.r[k / ns], surf.s[k % ns], p[0], p[1], p[2]]);
    }
    t.write(&out.join("manifold_dpim.csv"), &hash)?;
    Ok(model)
}

pub fn load_dpim(cfg: &PipelineConfig, out: &Path) -> CliResult<DpimModel> {
    let text = read_text(&out.join(DPIM_FILE))?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let h = first
        .strip_prefix("# config_hash=")
        .ok_or_else(|| CliError::Stale("DPIM file lacks config_hash".into()))?;
    check_hash(h, cfg, "DPIM model")?;
    Ok(DpimModel::from_text(rest)?)
}

pub fn model_path(out: &Path, p: usize) -> PathBuf {
    out.join(format!("model_p{p}.dlrom"))
}

/// Fits the POD basis and trains one model per latent dimension.
pub fn cmd_train(cfg: &PipelineConfig, out: &Path) -> CliResult<Vec<DlRomModel>> {
    let bundle = load_bundle(cfg, out)?;
    let hash = cfg.hash();
    let pod = rom::fit_pod(cfg, &bundle.train_set)?;
    save_mxb(&out.join("pod_basis.mxb"), &pod.basis)?;
    let mut summary = Table::new(&["p", "best_epoch", "best_val_loss", "val_relative_error", "smoothed_val_monotone"]);
    let mut models = Vec::new();
    for &p in &cfg.training.latent_dims {
        let t0 = Instant::now();
        let o = twinrom_dl::train(&bundle.train_set, &pod, &cfg.training_config(p)?)?;
        eprintln!(
            "train p={p}: best epoch {} val loss {:.3e} in {:.2?}",
            o.best_epoch,
            o.best_val_loss,
            t0.elapsed()
        );
        if !o.smoothed_val_monotone {
            eprintln!("train p={p}: flagged, smoothed validation loss is not monotone");
        }
        let mut log = Table::new(&["epoch", "train_loss", "val_loss"]);
        for r in &o.log {
            log.push(vec![r.epoch as f64, r.train_loss, r.val_loss]);
        }
        log.write(&out.join(format!("train_log_p{p}.csv")), &hash)?;
        write_bytes(&model_path(out, p), &o.model.to_bytes())?;
        summary.push(vec![
            p as f64,
            o.best_epoch as f64,
            o.best_val_loss,
            o.val_relative_error,
            if o.smoothed_val_monotone { 1.0 } else { 0.0 },
        ]);
        models.push(o.model);
    }
    summary.write(&out.join(TRAINING_SUMMARY), &hash)?;
    Ok(models)
}

/// Trained models listed in the training summary, after its hash check.
pub fn load_models(cfg: &PipelineConfig, out: &Path) -> CliResult<Vec<(usize, DlRomModel)>> {
    let summary = read_csv(&out.join(TRAINING_SUMMARY), cfg)?;
    let ps = summary.column("p").unwrap_or_default();
    ps.iter()
        .map(|&p| {
            let p = p as usize;
            let path = model_path(out, p);
            let bytes = std::fs::read(&path).map_err(|_| CliError::Missing(path.display().to_string()))?;
            Ok((p, DlRomModel::from_bytes(&bytes)?))
        })
        .collect()
}

/// Reconstructs observed FRFs at every configured β for every model.
pub fn cmd_infer(cfg: &PipelineConfig, out: &Path) -> CliResult<()> {
    let bundle = load_bundle(cfg, out)?;
    let sys = cfg.system()?;
    let hash = cfg.hash();
    for (p, model) in load_models(cfg, out)? {
        let mut t = Table::new(&["beta", "s", "omega", "amplitude", "extrapolated"]);
        for beta in all_betas(cfg) {
            let t0 = Instant::now();
            let f = rom::reconstruct_frf(&model, &bundle.family, sys.observation(), beta, cfg.report.infer_points)?;
            eprintln!("infer p={p} beta={beta}: {} points in {:.2?}", f.s.len(), t0.elapsed());
            for k in 0..f.s.len() {
                let ex = model.input_scaling.is_extrapolating([0.0, beta, f.s[k]]);
                t.push(vec![beta, f.s[k], f.omega[k], f.amplitude[k], if ex { 1.0 } else { 0.0 }]);
            }
        }
        t.write(&out.join(format!("frf_dl_p{p}.csv")), &hash)?;
    }
    Ok(())
}

fn modes_of(cfg: &PipelineConfig, sys: &FomSystem) -> Vec<usize> {
    if cfg.report.modes.is_empty() {
        (0..sys.n_dofs()).collect()
    } else {
        cfg.report.modes.clone()
    }
}

/// Reference orbits for reports: the test set, or the training set when no
/// testing levels are configured.
fn reference<'a>(b: &'a LoadedBundle) -> (&'a SnapshotSet, &'a [OrbitKey]) {
    if b.test_keys.is_empty() {
        (&b.train_set, &b.train_keys)
    } else {
        (&b.test_set, &b.test_keys)
    }
}

fn orbit_samples(set: &SnapshotSet, k: usize) -> Vec<DVector<f64>> {
    let spp = set.samples_per_period;
    (0..spp).map(|j| set.matrix.column(k * spp + j).into_owned()).collect()
}

fn manifold_table(points: &[ManifoldPoint]) -> Table {
    let mut t = Table::new(&["orbit", "u_master", "v_master", "u_plot"]);
    for p in points {
        t.push(vec![p.orbit as f64, p.u_master, p.v_master, p.u_plot]);
    }
    t
}

/// Error tables against FOM reference orbits, modal FRFs and manifold
/// diagnostics for every trained model.
pub fn cmd_report(cfg: &PipelineConfig, out: &Path) -> CliResult<()> {
    let bundle = load_bundle(cfg, out)?;
    let models = load_models(cfg, out)?;
    for (p, _) in &models {
        read_csv(&out.join(format!("frf_dl_p{p}.csv")), cfg)?;
    }
    let sys = cfg.system()?;
    let dpim = if build_dpim(&sys, sys.master_mode()).is_ok() {
        Some(load_dpim(cfg, out)?)
    } else {
        None
    };
    let hash = cfg.hash();
    let basis = eigen_solve(&sys, sys.n_dofs())?;
    let modes = modes_of(cfg, &sys);
    let master = sys.master_mode();
    let plot = cfg.report.plot_mode;
    let n_keep = cfg.report.n_keep;
    let (refset, keys) = reference(&bundle);
    let spp = refset.samples_per_period;

    let ref_orbits: Vec<(f64, Vec<DVector<f64>>)> = keys
        .iter()
        .enumerate()
        .map(|(k, key)| (key.omega, orbit_samples(refset, k)))
        .collect();
    let fom_points = manifold_orbits(&basis, sys.mass(), &ref_orbits, master, plot, n_keep)?;
    manifold_table(&fom_points).write(&out.join("manifold_fom.csv"), &hash)?;

    let mut errors = Table::new(&["p", "mode", "relative", "global"]);
    let mut geometry = Table::new(&["p", "sheet_velocity_dependence", "max_dpim_distance"]);
    for (p, model) in &models {
        for e in rom::modal_error_table(model, &basis, &sys, refset, keys, &modes)? {
            errors.push(vec![*p as f64, e.mode as f64, e.relative.unwrap_or(f64::NAN), e.global]);
        }
        let mut modal = Table::new(&["beta", "s", "omega", "mode", "amp_fom", "amp_dl"]);
        let mut dl_orbits = Vec::with_capacity(keys.len());
        for (k, key) in keys.iter().enumerate() {
            let dl = rom::infer_orbit(model, key.beta, key.s, spp);
            let fom = &ref_orbits[k].1;
            for &m in &modes {
                let a = modal_coordinate(&basis, sys.mass(), fom, m, key.omega, n_keep)?.amplitude;
                let b = modal_coordinate(&basis, sys.mass(), &dl, m, key.omega, n_keep)?.amplitude;
                modal.push(vec![key.beta, key.s, key.omega, m as f64, a, b]);
            }
            dl_orbits.push((key.omega, dl));
        }
        modal.write(&out.join(format!("modal_frf_p{p}.csv")), &hash)?;
        let pts = manifold_orbits(&basis, sys.mass(), &dl_orbits, master, plot, n_keep)?;
        manifold_table(&pts).write(&out.join(format!("manifold_p{p}.csv")), &hash)?;
        let sheet = sheet_velocity_dependence(&pts, cfg.report.manifold_bins);
        let dist = match &dpim {
            Some(d) => {
                let r_max = 1.3 * pts.iter().fold(0.0f64, |m, q| m.max(q.u_master.abs()));
                let v_max = 1.3 * pts.iter().fold(0.0f64, |m, q| m.max(q.v_master.abs()));
                let surf = dpim_surface(d, &basis, sys.mass(), plot, r_max.max(1e-12), v_max.max(1e-12), 41)?;
                max_surface_distance(d, &surf, &basis, sys.mass(), plot, &pts)
            }
            None => f64::NAN,
        };
        geometry.push(vec![*p as f64, sheet, dist]);
    }
    errors.write(&out.join("errors.csv"), &hash)?;
    geometry.write(&out.join("manifold_metrics.csv"), &hash)?;
    if let Some(sm) = cfg.report.secondary_mode {
        activation_report(cfg, &sys, &basis, &bundle.family, &models, sm, out)?;
    }
    Ok(())
}

/// `activation.csv`: modal amplitude summary per forcing level for the FOM
/// (`p = 0`) and each surrogate; `transition.csv`: forcing level at which the
/// secondary mode activates, NaN when it does not within the training range.
fn activation_report(
    cfg: &PipelineConfig,
    sys: &FomSystem,
    basis: &EigenBasis,
    family: &ArcFamily,
    models: &[(usize, DlRomModel)],
    secondary: usize,
    out: &Path,
) -> CliResult<()> {
    let master = sys.master_mode();
    if secondary >= sys.n_dofs() || secondary == master {
        return Err(CliError::Config(format!("secondary_mode {secondary} must be a mode other than the master {master}")));
    }
    let hash = cfg.hash();
    let wp = autoparam::modal_covector(sys, basis, master);
    let ws = autoparam::modal_covector(sys, basis, secondary);
    let mut betas: Vec<f64> = cfg.betas.train.iter().chain(&cfg.betas.test).copied().collect();
    betas.sort_by(f64::total_cmp);
    let (lo, hi) = (betas[0], betas[betas.len() - 1]);
    let n = cfg.report.infer_points;

    let mut table = Table::new(&["p", "beta", "ratio", "saturation", "primary_peak", "secondary_peak"]);
    let mut row = |p: usize, a: &autoparam::Activation| {
        table.push(vec![p as f64, a.beta, a.ratio(), a.saturation(), a.primary_peak, a.secondary_peak]);
    };
    for &b in &betas {
        row(0, &autoparam::fom_activation(cfg, sys, &wp, &ws, b)?);
    }
    for (p, model) in models {
        for &b in &betas {
            row(*p, &autoparam::surrogate_activation(model, family, &wp, &ws, b, n));
        }
    }
    table.write(&out.join("activation.csv"), &hash)?;

    let mut transitions = Table::new(&["p", "beta_transition"]);
    let fom = autoparam::transition_beta(|b| Ok(autoparam::fom_activation(cfg, sys, &wp, &ws, b)?.ratio()), lo, hi, TRANSITION_TOL)?;
    transitions.push(vec![0.0, fom.unwrap_or(f64::NAN)]);
    for (p, model) in models {
        let t = autoparam::transition_beta(|b| Ok(autoparam::surrogate_activation(model, family, &wp, &ws, b, n).ratio()), lo, hi, TRANSITION_TOL)?;
        transitions.push(vec![*p as f64, t.unwrap_or(f64::NAN)]);
    }
    transitions.write(&out.join("transition.csv"), &hash)
}
