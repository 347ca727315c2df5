use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use qkc::bounds::{bound_table, default_gamma_grid, gamma_star, n_sg, shots_for_conf, BoundInputs};
use qkc::conic::Matrix;
use qkc::data::{load_csv, save_csv, LabeledDataset};
use qkc::harness::{
    n_practical, prepare, prepare_from, reports_to_csv, run_noise_study_on, run_sweep_on, run_training_shots_study_on,
    train_est, training_estimate, Manifest, Schedule, Setup,
};
use qkc::robust::{train_robust, NormKind};
use qkc::sampler::DiagonalPolicy;
use qkc::svm::{accuracy, margins, predict, training_hash, SvmModel, Variant};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Dataset,
    Kernel,
    Train,
    Bounds,
    Npractical,
    Sweep,
    NoiseStudy,
    TrainingShotsStudy,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Dataset => "dataset",
            Command::Kernel => "kernel",
            Command::Train => "train",
            Command::Bounds => "bounds",
            Command::Npractical => "npractical",
            Command::Sweep => "sweep",
            Command::NoiseStudy => "noise-study",
            Command::TrainingShotsStudy => "training-shots-study",
        }
    }
}

/// Output files written into `cfg.out_dir`.
struct Outputs {
    dir: PathBuf,
    names: Vec<String>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        self.names.push(name.to_string());
        self.dir.join(name)
    }

    fn text(&mut self, name: &str, content: &str) -> Result<()> {
        let p = self.path(name);
        std::fs::write(&p, content).map_err(CliError::io(p))
    }
}

/// Runs one subcommand, writing its outputs and `manifest.json` into `cfg.out_dir`.
///
/// Human-readable summaries go to `log`. Returns the names of the files written.
pub fn dispatch(cmd: Command, cfg: &RunConfig, log: &mut dyn Write) -> Result<Vec<String>> {
    let start = Instant::now();
    std::fs::create_dir_all(&cfg.out_dir).map_err(CliError::io(&cfg.out_dir))?;
    let mut out = Outputs { dir: cfg.out_dir.clone(), names: Vec::new() };
    let mut cfg = cfg.clone();
    let setup = load_setup(&mut cfg)?;
    let e = &cfg.experiment;
    let io = |r: std::io::Result<()>| r.map_err(CliError::io("<log>"));

    match cmd {
        Command::Dataset => {
            for (name, ds) in [("train.csv", &setup.train), ("test.csv", &setup.test)] {
                let p = out.path(name);
                save_csv(ds, &p)?;
                out.names.push(format!("{name}.meta"));
                let (neg, pos) = ds.class_counts();
                io(writeln!(log, "{name}: {} points ({neg} negative, {pos} positive)", ds.len()))?;
            }
        }
        Command::Kernel => {
            out.text("kernel_train.csv", &matrix_csv(setup.k_train.entries()))?;
            out.text("kernel_eval.csv", &matrix_csv(setup.k_eval.entries()))?;
            let est = e.est_params(NormKind::L2, setup.train.len())?;
            let k_hat = training_estimate(&setup.k_train, est.shots_train, e, DiagonalPolicy::Unit)?;
            let name = format!("kernel_train_T{}.csv", est.shots_train);
            out.text(&name, &matrix_csv(k_hat.matrix()))?;
            io(writeln!(log, "exact kernels and a {}-shot training estimate written", est.shots_train))?;
        }
        Command::Train => {
            io(writeln!(log, "{:<14} {:>5} {:>12} {:>14} {:>9}", "variant", "m_sv", "|beta|", "objective", "accuracy"))?;
            for &v in &e.variants {
                let model = train_variant(v, &cfg, &setup)?;
                let acc = accuracy(&predict(&model, setup.k_eval.entries())?, &setup.y_eval)?;
                io(writeln!(log, "{:<14} {:>5} {:>12.6} {:>14.6} {:>9.4}", v.name(), model.m_sv, model.beta_norm2, model.objective, acc))?;
                model.save(&out.path(&format!("model_{}.txt", v.name())))?;
            }
        }
        Command::Bounds => {
            let model = match &cfg.model {
                Some(p) => {
                    let m = SvmModel::<f64>::load(p)?;
                    check_model(&m, &setup)?;
                    m
                }
                None => setup.ekc.clone(),
            };
            let gamma = reference_gamma(&model, &setup)?;
            let inputs = BoundInputs {
                beta_norm2: model.beta_norm2,
                gamma,
                circuit: e.circuit,
                dataset_size: setup.y_eval.len(),
                delta_target: e.delta_target,
                m_sv: model.m_sv,
                c: model.c,
                epsilon: cfg.epsilon,
                train_size: setup.train.len(),
            };
            let mut rows: Vec<(String, Option<f64>, u64)> =
                bound_table(&inputs)?.into_iter().map(|r| (r.name, Some(r.raw), r.shots)).collect();
            let conf_delta = e.delta1p / setup.train.len() as f64;
            rows.push(("shots_for_conf".into(), None, shots_for_conf(cfg.conf_target, conf_delta, e.circuit)?));
            io(writeln!(
                log,
                "variant {}  |beta| {:.6}  m_sv {}  gamma* {gamma}  circuit {}  delta {}",
                model.variant.name(),
                model.beta_norm2,
                model.m_sv,
                e.circuit.name(),
                e.delta_target
            ))?;
            io(writeln!(log, "{:<16} {:>16} {:>12}", "bound", "raw", "shots"))?;
            let mut csv = String::from("bound,raw,shots\n");
            for (name, raw, shots) in &rows {
                let raw_s = raw.map_or("-".to_string(), |r| format!("{r:.6e}"));
                io(writeln!(log, "{name:<16} {raw_s:>16} {shots:>12}"))?;
                csv.push_str(&format!("{name},{},{shots}\n", raw.map_or(String::new(), |r| r.to_string())));
            }
            out.text("bounds.csv", &csv)?;
        }
        Command::Npractical => {
            let gamma = reference_gamma(&setup.ekc, &setup)?;
            let nsg = n_sg(setup.ekc.beta_norm2, gamma, e.circuit, setup.y_eval.len(), e.delta_target)?;
            let np = n_practical(
                &setup.ekc,
                setup.k_eval.entries(),
                &setup.y_eval,
                gamma,
                e.delta_target,
                &e.trial_plan(1)?,
                Schedule::default(),
            )?;
            let report = NPracticalReport {
                gamma_star: gamma,
                n_sg: nsg,
                n_practical: np.n,
                delta_emp: np.delta_emp,
                ratio: nsg as f64 / np.n as f64,
                trace: np.trace,
            };
            io(writeln!(log, "gamma* {gamma}  n_sg {nsg}  n_practical {}  ratio {:.3}", np.n, report.ratio))?;
            out.text("npractical.json", &(to_json(&report) + "\n"))?;
        }
        Command::Sweep => {
            let reports = run_sweep_on(e, &setup)?;
            out.text("sweep.csv", &reports_to_csv(&reports))?;
            io(writeln!(log, "{} rows written", reports.len()))?;
        }
        Command::NoiseStudy => {
            let reports = run_noise_study_on(e, &setup)?;
            out.text("noise_study.csv", &reports_to_csv(&reports))?;
            io(writeln!(log, "{} rows written", reports.len()))?;
        }
        Command::TrainingShotsStudy => {
            let reports = run_training_shots_study_on(e, &setup)?;
            out.text("training_shots.csv", &reports_to_csv(&reports))?;
            io(writeln!(log, "{} rows written", reports.len()))?;
        }
    }

    let manifest = Manifest {
        command: cmd.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: e.master_seed,
        config: serde_json::to_value(&cfg).expect("config serializes"),
        outputs: out.names.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let mpath = out.dir.join("manifest.json");
    manifest.write(&mpath)?;
    out.names.push("manifest.json".into());
    Ok(out.names)
}

#[derive(Serialize)]
struct NPracticalReport {
    gamma_star: f64,
    n_sg: u64,
    n_practical: u64,
    delta_emp: f64,
    ratio: f64,
    trace: Vec<(u64, f64)>,
}

fn to_json<S: Serialize>(v: &S) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn load_setup(cfg: &mut RunConfig) -> Result<Setup> {
    match (&cfg.train_csv, &cfg.test_csv) {
        (Some(a), Some(b)) => {
            let train: LabeledDataset = load_csv(a)?;
            let test = load_csv(b)?;
            cfg.experiment.m_train = train.len();
            cfg.experiment.m_test = test.len();
            Ok(prepare_from(&cfg.experiment, train, test)?)
        }
        _ => Ok(prepare(&cfg.experiment)?),
    }
}

fn matrix_csv(m: &Matrix<f64>) -> String {
    let mut s = String::from("row,col,value\n");
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            s.push_str(&format!("{i},{j},{v:.17e}\n"));
        }
    }
    s
}

/// Largest margin on the default grid at which the model errs no more than at margin zero.
fn reference_gamma(model: &SvmModel<f64>, setup: &Setup) -> Result<f64> {
    let m = margins(model, setup.k_eval.entries(), &setup.y_eval)?;
    gamma_star(&m, &default_gamma_grid::<f64>())
        .ok_or_else(|| CliError::Core(qkc::Error::InvalidInput("no positive margin level leaves the margin error unchanged".into())))
}

fn check_model(model: &SvmModel<f64>, setup: &Setup) -> Result<()> {
    if model.m() != setup.train.len() {
        return Err(CliError::ModelMismatch(format!("model has {} coefficients, training set has {} points", model.m(), setup.train.len())));
    }
    if let Some(h) = &model.meta.train_hash {
        if *h != training_hash(&setup.train.points, &setup.train.labels) {
            return Err(CliError::ModelMismatch("training-set hash differs".into()));
        }
    }
    Ok(())
}

fn train_variant(v: Variant, cfg: &RunConfig, setup: &Setup) -> Result<SvmModel<f64>> {
    let e = &cfg.experiment;
    let y = &setup.train.labels;
    let n = cfg.shots_classify;
    let norm = if matches!(v, Variant::L1Shofar | Variant::L1ShofarEst) { NormKind::L1 } else { NormKind::L2 };
    let mut model = match v {
        Variant::Nominal => setup.ekc.clone(),
        Variant::Shofar | Variant::L1Shofar => {
            train_robust(&setup.k_train.to_sym()?, y, e.c, &e.robust_params(n, norm)?, None)?
        }
        Variant::ShofarEst | Variant::L1ShofarEst => {
            let est = e.est_params(norm, y.len())?;
            let k_hat = training_estimate(&setup.k_train, est.shots_train, e, DiagonalPolicy::Unit)?;
            train_est(&k_hat, y, e.c, &e.robust_params(n, norm)?, &est)?
        }
    };
    model.meta.embedding = Some(e.embedding_spec()?.id());
    model.meta.train_hash = Some(training_hash(&setup.train.points, y));
    Ok(model)
}
