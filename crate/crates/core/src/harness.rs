//! Reliability metrics and the experiment drivers built on stochastic classifiers.
//!
//! A stochastic classifier evaluates `g(x) = Σⱼ βⱼ K^(N)(x, xⱼ) + b` with freshly drawn kernel
//! estimates. Draws are keyed by `(master_seed, i, j, trial)` only, so every classifier evaluated on
//! the same points sees the same kernel instantiations.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{Matrix, SymMatrix};
use crate::data::{generate_split, DatasetKind, GenParams, LabeledDataset};
use crate::error::{invalid, Error, Result};
use crate::qkernel::{depolarize_matrix, kernel_matrix_exact, DepolarizingChannel, EmbeddingKind, EmbeddingSpec, ExactKernelMatrix};
use crate::robust::{train_robust, EstParams, NormKind, RobustParams};
use crate::sampler::{draw_kernel, draw_kernel_matrix, CircuitKind, DiagonalPolicy, SeedStream, ShotPlan};
use crate::svm::{accuracy, margins, predict, sign, solve_primal, Label, SvmModel, Variant};

/// Seed domain of classification-time kernel draws.
pub const EVAL_DOMAIN: u64 = 0xE7A1;
/// Seed domain of the training kernel estimate.
pub const TRAIN_DOMAIN: u64 = 0x7241;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub n_trials: usize,
    pub master_seed: u64,
    pub shot_plan: ShotPlan,
}

impl TrialPlan {
    pub fn new(n_trials: usize, master_seed: u64, shot_plan: ShotPlan) -> Result<Self> {
        if n_trials == 0 {
            return invalid("n_trials must be ≥ 1");
        }
        Ok(Self { n_trials, master_seed, shot_plan })
    }

    pub fn with_shots(&self, shots: u64) -> Result<Self> {
        Ok(Self { shot_plan: ShotPlan::new(self.shot_plan.kind, shots)?, ..*self })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reliability {
    pub per_point: Vec<f64>,
    pub dataset: f64,
    pub delta_threshold: f64,
}

/// Per-point agreement rates and the fraction of points with rate `≥ 1 − δ`.
pub fn empirical_reliability(labels_by_trial: &[Vec<Label>], ref_labels: &[Label], delta: f64) -> Result<Reliability> {
    if !(0.0..1.0).contains(&delta) {
        return invalid("delta must lie in [0, 1)");
    }
    if labels_by_trial.is_empty() || ref_labels.is_empty() {
        return invalid("need at least one trial and one point");
    }
    let m = ref_labels.len();
    if let Some(bad) = labels_by_trial.iter().find(|t| t.len() != m) {
        return Err(Error::DimensionMismatch { expected: m, got: bad.len() });
    }
    let trials = labels_by_trial.len() as f64;
    let per_point: Vec<f64> = (0..m)
        .map(|i| labels_by_trial.iter().filter(|t| t[i] == ref_labels[i]).count() as f64 / trials)
        .collect();
    let reliable = per_point.iter().filter(|&&r| r >= 1.0 - delta).count();
    Ok(Reliability { per_point, dataset: reliable as f64 / m as f64, delta_threshold: delta })
}

/// `Acc(h)/Acc(f)`.
pub fn relative_accuracy(acc_h: f64, acc_f: f64) -> Result<f64> {
    if acc_f <= 0.0 {
        return invalid("reference accuracy must be positive");
    }
    Ok(acc_h / acc_f)
}

/// Affine correction `v ↦ (v − shift)/scale` applied to each drawn kernel value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelCorrection {
    pub shift: f64,
    pub scale: f64,
}

impl KernelCorrection {
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.shift) / self.scale
    }
}

/// Decision values of one stochastic classifier instance.
///
/// `device` holds the expected kernel value of each `(eval, train)` pair on the device.
pub fn stochastic_decisions(
    model: &SvmModel<f64>,
    device: &Matrix<f64>,
    plan: &ShotPlan,
    master_seed: u64,
    trial: u64,
    correction: Option<KernelCorrection>,
) -> Result<Vec<f64>> {
    if device.cols() != model.m() {
        return Err(Error::DimensionMismatch { expected: model.m(), got: device.cols() });
    }
    let seeds = SeedStream::new(master_seed, EVAL_DOMAIN, trial);
    (0..device.rows())
        .map(|i| {
            let mut g = model.b;
            for (j, &bj) in model.beta.iter().enumerate() {
                if bj == 0.0 {
                    continue;
                }
                let mut v = draw_kernel(device[(i, j)], plan, &mut seeds.entry_rng(i, j))?;
                if let Some(c) = correction {
                    v = c.apply(v);
                }
                g += bj * v;
            }
            Ok(g)
        })
        .collect()
}

/// Labels of every trial, computed in parallel.
pub fn stochastic_labels(
    model: &SvmModel<f64>,
    device: &Matrix<f64>,
    plan: &TrialPlan,
    correction: Option<KernelCorrection>,
) -> Result<Vec<Vec<Label>>> {
    (0..plan.n_trials as u64)
        .into_par_iter()
        .map(|t| {
            let g = stochastic_decisions(model, device, &plan.shot_plan, plan.master_seed, t, correction)?;
            Ok(g.into_iter().map(sign).collect())
        })
        .collect()
}

/// How the shot count is searched in [`n_practical`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Schedule {
    /// `start, 2·start, 4·start, …` then bisection inside the first passing bracket.
    Doubling { start: u64, max: u64 },
    /// `start, start + step, …`.
    Additive { start: u64, step: u64, max: u64 },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Doubling { start: 1, max: 1 << 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NPractical {
    pub n: u64,
    pub delta_emp: f64,
    /// Every `(N, δ_emp)` evaluated, in search order.
    pub trace: Vec<(u64, f64)>,
}

/// Fraction of trials whose error count exceeds the count of margins below `γ` under the exact classifier.
pub fn empirical_violation(
    model: &SvmModel<f64>,
    k_eval: &Matrix<f64>,
    y: &[Label],
    gamma: f64,
    plan: &TrialPlan,
) -> Result<f64> {
    let eps_gamma = margins(model, k_eval, y)?.iter().filter(|&&v| v < gamma).count();
    let labels = stochastic_labels(model, k_eval, plan, None)?;
    let bad = labels
        .iter()
        .filter(|t| t.iter().zip(y).filter(|(a, b)| a != b).count() > eps_gamma)
        .count();
    Ok(bad as f64 / plan.n_trials as f64)
}

/// Smallest `N` on the schedule with empirical violation probability strictly below `δ_target`.
///
/// Trial `t` uses the same seeds at every `N`.
pub fn n_practical(
    model: &SvmModel<f64>,
    k_eval: &Matrix<f64>,
    y: &[Label],
    gamma: f64,
    delta_target: f64,
    plan: &TrialPlan,
    schedule: Schedule,
) -> Result<NPractical> {
    if !(delta_target > 0.0 && delta_target < 1.0) {
        return invalid("delta_target must lie in (0, 1)");
    }
    let mut trace = Vec::new();
    let mut eval = |n: u64| -> Result<bool> {
        let d = empirical_violation(model, k_eval, y, gamma, &plan.with_shots(n)?)?;
        trace.push((n, d));
        Ok(d < delta_target)
    };
    let exhausted = |trace: &[(u64, f64)]| {
        let &(last_n, last_delta) = trace.last().expect("at least one evaluation");
        Error::ScheduleExhausted { last_n, last_delta }
    };
    let n = match schedule {
        Schedule::Additive { start, step, max } => {
            if start == 0 || step == 0 {
                return invalid("start and step must be ≥ 1");
            }
            let mut n = start;
            loop {
                if eval(n)? {
                    break n;
                }
                n += step;
                if n > max {
                    return Err(exhausted(&trace));
                }
            }
        }
        Schedule::Doubling { start, max } => {
            if start == 0 {
                return invalid("start must be ≥ 1");
            }
            let mut hi = start;
            let mut lo = None;
            loop {
                if eval(hi)? {
                    break;
                }
                lo = Some(hi);
                hi = hi.saturating_mul(2);
                if hi > max {
                    return Err(exhausted(&trace));
                }
            }
            if let Some(mut lo) = lo {
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if eval(mid)? {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
            }
            hi
        }
    };
    let delta_emp = trace.iter().rev().find(|(m, _)| *m == n).map(|p| p.1).unwrap_or(0.0);
    Ok(NPractical { n, delta_emp, trace })
}

/// Estimated `λ²` from the mean of a sampled diagonal.
pub fn m_mean_lambda2(k_hat: &SymMatrix<f64>, d: usize) -> Result<f64> {
    if d < 2 {
        return invalid("Hilbert-space dimension must be ≥ 2");
    }
    let n = k_hat.dim();
    let mean = (0..n).map(|i| k_hat.get(i, i)).sum::<f64>() / n as f64;
    let l2 = ((1.0 - mean) / (1.0 - 1.0 / d as f64)).max(0.0);
    if l2 >= 1.0 {
        return Err(Error::Mitigation(l2));
    }
    Ok(l2)
}

/// Inverts global depolarizing noise on a kernel matrix using its diagonal.
pub fn mitigate_m_mean(k_hat: &SymMatrix<f64>, d: usize) -> Result<SymMatrix<f64>> {
    let l2 = m_mean_lambda2(k_hat, d)?;
    let c = m_mean_correction(l2, d);
    let n = k_hat.dim();
    SymMatrix::new(Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { c.apply(k_hat.get(i, j)) }))
}

pub fn m_mean_correction(lambda2: f64, d: usize) -> KernelCorrection {
    KernelCorrection { shift: lambda2 / d as f64, scale: 1.0 - lambda2 }
}

/// Which points the stochastic classifiers are scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSet {
    #[default]
    Train,
    Test,
}

/// Parameters shared by every driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub m_train: usize,
    pub m_test: usize,
    pub gen: GenParams,
    pub embedding: EmbeddingKind,
    pub n_qubits: usize,
    pub variants: Vec<Variant>,
    pub c: f64,
    pub circuit: CircuitKind,
    pub n_grid: Vec<u64>,
    pub delta1: f64,
    pub delta2: f64,
    /// Margin confidence interval of the L2 estimated-kernel program; fixes its training shots.
    pub est_conf: f64,
    /// Same, for the L1 program.
    pub est_conf_l1: f64,
    pub delta1p: f64,
    pub delta2p: f64,
    pub n_trials: usize,
    pub master_seed: u64,
    pub eval_set: EvalSet,
    pub reliability_delta: f64,
    pub lambda: f64,
    pub t_grid: Vec<u64>,
    pub delta_target: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let (m_train, m_test) = DatasetKind::Circles.default_sizes();
        Self {
            dataset: DatasetKind::Circles,
            m_train,
            m_test,
            gen: GenParams::default(),
            embedding: EmbeddingKind::Angle,
            n_qubits: 2,
            variants: vec![Variant::Nominal, Variant::Shofar],
            c: 1000.0,
            circuit: CircuitKind::Gates,
            n_grid: (0..=14).map(|k| 1u64 << k).collect(),
            delta1: 0.01,
            delta2: 0.01,
            est_conf: 0.1,
            est_conf_l1: 0.1,
            delta1p: 0.01,
            delta2p: 0.01,
            n_trials: 200,
            master_seed: 0,
            eval_set: EvalSet::Train,
            reliability_delta: 0.0,
            lambda: 0.05,
            t_grid: vec![100, 400, 1600, 6400],
            delta_target: 0.01,
        }
    }
}

impl ExperimentConfig {
    pub fn embedding_spec(&self) -> Result<EmbeddingSpec> {
        EmbeddingSpec::new(self.embedding, self.n_qubits)
    }

    pub fn trial_plan(&self, shots: u64) -> Result<TrialPlan> {
        TrialPlan::new(self.n_trials, self.master_seed, ShotPlan::new(self.circuit, shots)?)
    }

    pub fn robust_params(&self, shots: u64, norm: NormKind) -> Result<RobustParams> {
        RobustParams::new(shots, self.delta1, self.delta2, norm, self.circuit)
    }

    /// Confidence terms of the estimated-kernel program for `norm`, on `m` training points.
    pub fn est_params(&self, norm: NormKind, m: usize) -> Result<EstParams> {
        let conf = match norm {
            NormKind::L2 => self.est_conf,
            NormKind::L1 => self.est_conf_l1,
        };
        EstParams::for_conf(conf, self.delta1p, self.delta2p, self.circuit, m)
    }

    /// Every violated constraint, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let open01 = |x: f64| x > 0.0 && x < 1.0;
        for (name, x) in [("delta1", self.delta1), ("delta2", self.delta2), ("delta1p", self.delta1p), ("delta2p", self.delta2p), ("delta_target", self.delta_target)] {
            if !open01(x) {
                v.push(format!("{name} must lie in (0, 1), got {x}"));
            }
        }
        if !(0.0..1.0).contains(&self.reliability_delta) {
            v.push(format!("reliability_delta must lie in [0, 1), got {}", self.reliability_delta));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            v.push(format!("lambda must lie in [0, 1), got {}", self.lambda));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            v.push(format!("C must be positive, got {}", self.c));
        }
        if self.n_grid.is_empty() {
            v.push("n_grid must be nonempty".into());
        }
        if self.n_grid.contains(&0) || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            v.push("n_grid must hold strictly increasing positive shot counts".into());
        }
        if self.t_grid.contains(&0) {
            v.push("t_grid entries must be ≥ 1".into());
        }
        for (name, x) in [("est_conf", self.est_conf), ("est_conf_l1", self.est_conf_l1)] {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("{name} must be positive, got {x}"));
            }
        }
        if self.n_trials == 0 {
            v.push("n_trials must be ≥ 1".into());
        }
        if self.m_train < 2 || self.m_test < 2 {
            v.push("m_train and m_test must be ≥ 2".into());
        }
        if self.variants.is_empty() {
            v.push("variants must be nonempty".into());
        }
        if let Err(e) = self.embedding_spec() {
            v.push(e.to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            invalid(v.join("; "))
        }
    }
}

/// Data, exact kernels and the reference classifier of one experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub k_train: ExactKernelMatrix<f64>,
    /// Exact kernel between the evaluation points and the training points.
    pub k_eval: ExactKernelMatrix<f64>,
    pub y_eval: Vec<Label>,
    pub ekc: SvmModel<f64>,
    pub ekc_labels: Vec<Label>,
    pub ekc_accuracy: f64,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Setup> {
    cfg.validate()?;
    let spec = cfg.embedding_spec()?;
    let (train, test) = generate_split(cfg.dataset, cfg.m_train, cfg.m_test, cfg.master_seed, &cfg.gen, &spec)?;
    prepare_from(cfg, train, test)
}

/// Like [`prepare`], on datasets supplied by the caller.
pub fn prepare_from(cfg: &ExperimentConfig, train: LabeledDataset, test: LabeledDataset) -> Result<Setup> {
    cfg.validate()?;
    let spec = cfg.embedding_spec()?;
    let k_train = kernel_matrix_exact(&spec, &train.points, &train.points)?;
    let eval = match cfg.eval_set {
        EvalSet::Train => &train,
        EvalSet::Test => &test,
    };
    let k_eval = kernel_matrix_exact(&spec, &eval.points, &train.points)?;
    let y_eval = eval.labels.clone();
    let ekc = solve_primal(&k_train.to_sym()?, &train.labels, cfg.c)?;
    let ekc_labels = predict(&ekc, k_eval.entries())?;
    let ekc_accuracy = accuracy(&ekc_labels, &y_eval)?;
    Ok(Setup { train, test, k_train, k_eval, y_eval, ekc, ekc_labels, ekc_accuracy })
}

/// One row of a reliability report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub variant: String,
    pub n: u64,
    pub per_point_reliability: Vec<f64>,
    pub dataset_reliability: f64,
    pub delta_threshold: f64,
    /// Dataset reliability measured against the reference classifier instead of the variant's own.
    pub reliability_ekc: f64,
    pub accuracy_mean: f64,
    pub accuracy_min: f64,
    pub accuracy_max: f64,
    pub relative_accuracy: f64,
    pub m_sv: usize,
    pub total_shots: u64,
}

/// A classifier under test: parameters, the device kernel it samples, and its ideal labels.
pub struct Candidate<'a> {
    pub tag: String,
    pub model: &'a SvmModel<f64>,
    pub device: &'a Matrix<f64>,
    pub correction: Option<KernelCorrection>,
    pub ideal_labels: Vec<Label>,
}

/// Scores one candidate at one shot count.
pub fn score(cand: &Candidate<'_>, setup: &Setup, plan: &TrialPlan, delta: f64) -> Result<ReliabilityReport> {
    let labels = stochastic_labels(cand.model, cand.device, plan, cand.correction)?;
    let own = empirical_reliability(&labels, &cand.ideal_labels, delta)?;
    let vs_ekc = empirical_reliability(&labels, &setup.ekc_labels, delta)?;
    let accs = labels.iter().map(|l| accuracy(l, &setup.y_eval)).collect::<Result<Vec<f64>>>()?;
    let ideal_acc = accuracy(&cand.ideal_labels, &setup.y_eval)?;
    let n = plan.shot_plan.shots;
    Ok(ReliabilityReport {
        variant: cand.tag.clone(),
        n,
        per_point_reliability: own.per_point,
        dataset_reliability: own.dataset,
        delta_threshold: delta,
        reliability_ekc: vs_ekc.dataset,
        accuracy_mean: accs.iter().sum::<f64>() / accs.len() as f64,
        accuracy_min: accs.iter().copied().fold(f64::INFINITY, f64::min),
        accuracy_max: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        relative_accuracy: relative_accuracy(ideal_acc, setup.ekc_accuracy)?,
        m_sv: cand.model.m_sv,
        total_shots: cand.model.m_sv as u64 * n,
    })
}

fn norm_of(v: Variant) -> NormKind {
    match v {
        Variant::L1Shofar | Variant::L1ShofarEst => NormKind::L1,
        _ => NormKind::L2,
    }
}

/// Trains a confidence-interval program, enlarging the ridge if the estimate is too indefinite.
pub fn train_est(k_hat: &SymMatrix<f64>, y: &[Label], c: f64, p: &RobustParams, e: &EstParams) -> Result<SvmModel<f64>> {
    match train_robust(k_hat, y, c, p, Some(e)) {
        Err(Error::NotConvex { required }) => train_robust(k_hat, y, c, p, Some(&e.with_ridge(required, p.kind))),
        other => other,
    }
}

/// Shot-sampled training kernel matrix.
pub fn training_estimate(
    k_train: &ExactKernelMatrix<f64>,
    shots: u64,
    cfg: &ExperimentConfig,
    diagonal: DiagonalPolicy,
) -> Result<SymMatrix<f64>> {
    let seeds = SeedStream::new(cfg.master_seed, TRAIN_DOMAIN, shots);
    draw_kernel_matrix(k_train, &ShotPlan::new(cfg.circuit, shots)?, &seeds, diagonal)?.to_sym()
}

/// Reliability and accuracy of every configured variant at every `N`.
pub fn run_reliability_sweep(cfg: &ExperimentConfig) -> Result<Vec<ReliabilityReport>> {
    let setup = prepare(cfg)?;
    run_sweep_on(cfg, &setup)
}

pub fn run_sweep_on(cfg: &ExperimentConfig, setup: &Setup) -> Result<Vec<ReliabilityReport>> {
    let k_star = setup.k_train.to_sym()?;
    let y = &setup.train.labels;
    let mut estimates = Vec::new();
    for norm in [NormKind::L2, NormKind::L1] {
        let wanted = cfg.variants.iter().any(|&v| v.is_est() && norm_of(v) == norm);
        estimates.push(if wanted {
            let est = cfg.est_params(norm, y.len())?;
            Some((training_estimate(&setup.k_train, est.shots_train, cfg, DiagonalPolicy::Unit)?, est))
        } else {
            None
        });
    }
    let device = setup.k_eval.entries();
    let mut out = Vec::new();
    for &n in &cfg.n_grid {
        let plan = cfg.trial_plan(n)?;
        for &v in &cfg.variants {
            let model = match v {
                Variant::Nominal => setup.ekc.clone(),
                Variant::Shofar | Variant::L1Shofar => train_robust(&k_star, y, cfg.c, &cfg.robust_params(n, norm_of(v))?, None)?,
                Variant::ShofarEst | Variant::L1ShofarEst => {
                    let (k_hat, est) = estimates[(norm_of(v) == NormKind::L1) as usize].as_ref().expect("estimate drawn for est variants");
                    train_est(k_hat, y, cfg.c, &cfg.robust_params(n, norm_of(v))?, est)?
                }
            };
            let cand = Candidate {
                tag: v.name().to_string(),
                ideal_labels: predict(&model, device)?,
                model: &model,
                device,
                correction: None,
            };
            out.push(score(&cand, setup, &plan, cfg.reliability_delta)?);
        }
    }
    Ok(out)
}

/// The five classifiers of the depolarizing-noise study, scored at every `N`.
///
/// Tags: `U-SKC`, `M-SKC`, `U-RSKC`, `M-RSKC`, and `SKC` for the noiseless reference.
pub fn run_noise_study(cfg: &ExperimentConfig) -> Result<Vec<ReliabilityReport>> {
    run_noise_study_on(cfg, &prepare(cfg)?)
}

pub fn run_noise_study_on(cfg: &ExperimentConfig, setup: &Setup) -> Result<Vec<ReliabilityReport>> {
    let spec = cfg.embedding_spec()?;
    let d = spec.dim();
    let ch = DepolarizingChannel::new(cfg.lambda, d)?;
    let y = &setup.train.labels;
    let noisy_train = depolarize_matrix(&setup.k_train, &ch);
    let noisy_eval = depolarize_matrix(&setup.k_eval, &ch);
    let est = cfg.est_params(NormKind::L2, y.len())?;
    let k_hat = training_estimate(&noisy_train, est.shots_train, cfg, DiagonalPolicy::Sampled)?;
    let l2 = m_mean_lambda2(&k_hat, d)?;
    let k_miti = mitigate_m_mean(&k_hat, d)?;
    let corr = m_mean_correction(l2, d);
    let corrected = noisy_eval.entries().map(|v| corr.apply(v));

    let u_nom = solve_primal(&k_hat.spectral_shift(), y, cfg.c)?;
    let m_nom = solve_primal(&k_miti.spectral_shift(), y, cfg.c)?;
    let exact = setup.k_eval.entries();
    let mut out = Vec::new();
    for &n in &cfg.n_grid {
        let plan = cfg.trial_plan(n)?;
        let p = cfg.robust_params(n, NormKind::L2)?;
        let u_rob = train_est(&k_hat, y, cfg.c, &p, &est)?;
        let m_rob = train_est(&k_miti, y, cfg.c, &p, &est)?;
        let noisy = noisy_eval.entries();
        let cands = [
            ("U-SKC", &u_nom, noisy, None, noisy),
            ("M-SKC", &m_nom, noisy, Some(corr), &corrected),
            ("U-RSKC", &u_rob, noisy, None, noisy),
            ("M-RSKC", &m_rob, noisy, Some(corr), &corrected),
            ("SKC", &setup.ekc, exact, None, exact),
        ];
        for (tag, model, device, correction, limit) in cands {
            let cand = Candidate { tag: tag.into(), ideal_labels: predict(model, limit)?, model, device, correction };
            out.push(score(&cand, setup, &plan, cfg.reliability_delta)?);
        }
    }
    Ok(out)
}

/// Nominal models trained on shifted `T`-shot estimates, one block of rows per `T` in `t_grid`,
/// followed by the exact-kernel baseline tagged `T=inf`.
pub fn run_training_shots_study(cfg: &ExperimentConfig) -> Result<Vec<ReliabilityReport>> {
    run_training_shots_study_on(cfg, &prepare(cfg)?)
}

pub fn run_training_shots_study_on(cfg: &ExperimentConfig, setup: &Setup) -> Result<Vec<ReliabilityReport>> {
    let y = &setup.train.labels;
    let exact = setup.k_eval.entries();
    let mut models = Vec::new();
    for &t in &cfg.t_grid {
        let k_hat = training_estimate(&setup.k_train, t, cfg, DiagonalPolicy::Unit)?;
        models.push((format!("T={t}"), solve_primal(&k_hat.spectral_shift(), y, cfg.c)?));
    }
    models.push(("T=inf".to_string(), setup.ekc.clone()));
    let mut out = Vec::new();
    for (tag, model) in &models {
        let ideal_labels = predict(model, exact)?;
        for &n in &cfg.n_grid {
            let cand = Candidate { tag: tag.clone(), model, device: exact, correction: None, ideal_labels: ideal_labels.clone() };
            out.push(score(&cand, setup, &cfg.trial_plan(n)?, cfg.reliability_delta)?);
        }
    }
    Ok(out)
}

pub const CSV_HEADER: &str = "variant,N,reliability,acc_mean,acc_min,acc_max,RA,m_sv,total_shots,reliability_ekc";

pub fn reports_to_csv(reports: &[ReliabilityReport]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.variant,
            r.n,
            r.dataset_reliability,
            r.accuracy_mean,
            r.accuracy_min,
            r.accuracy_max,
            r.relative_accuracy,
            r.m_sv,
            r.total_shots,
            r.reliability_ekc
        ));
    }
    s
}

pub fn write_csv(reports: &[ReliabilityReport], path: &Path) -> Result<()> {
    std::fs::write(path, reports_to_csv(reports))?;
    Ok(())
}

/// Smallest `N` in the rows of `variant` meeting `pred`.
pub fn first_n(reports: &[ReliabilityReport], variant: &str, pred: impl Fn(&ReliabilityReport) -> bool) -> Option<u64> {
    reports.iter().filter(|r| r.variant == variant && pred(r)).map(|r| r.n).min()
}

/// Reproducibility record written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub master_seed: u64,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}
