//! TOML run configuration.
//!
//! Every key is optional; omitted keys take the documented defaults. Unknown keys and
//! out-of-range values are rejected, and all problems are reported together.
//!
//! ```toml
//! seed = 7
//! out = "runs/circles"
//!
//! [dataset]
//! kind = "circles"        # circles | moons | checkerboard | havlicek
//! m_train = 40
//! m_test = 360
//!
//! [classifier]
//! variants = ["nominal", "shofar"]
//! C = 1000.0
//!
//! [shots]
//! circuit = "GATES"
//! n_grid = [1, 2, 4, 8]
//! ```

use std::path::{Path, PathBuf};

use qkc::data::DatasetKind;
use qkc::harness::{EvalSet, ExperimentConfig};
use qkc::qkernel::EmbeddingKind;
use serde::Serialize;
use toml::{Table, Value};

use crate::error::{CliError, Result};

/// Everything a subcommand needs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub out_dir: PathBuf,
    /// Load the training set from CSV instead of generating it. Requires `test_csv`.
    pub train_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
    /// Saved model used by `bounds`.
    pub model: Option<PathBuf>,
    /// Classification shots assumed by `train` for the robust programs.
    pub shots_classify: u64,
    /// Kernel precision used by the `n_precise` bound.
    pub epsilon: f64,
    /// Margin interval used for the `shots_for_conf` row.
    pub conf_target: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentConfig::default(),
            out_dir: PathBuf::from("qkc-out"),
            train_csv: None,
            test_csv: None,
            model: None,
            shots_classify: 256,
            epsilon: 0.1,
            conf_target: 0.1,
        }
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}

/// Parses configuration text; relative paths resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<RunConfig> {
    let mut root: Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(vec![e.message().to_string()]))?;
    let mut r = Reader { errors: Vec::new() };
    let mut cfg = RunConfig::default();
    let e = &mut cfg.experiment;

    if let Some(v) = r.u64(&mut root, "", "seed") {
        e.master_seed = v;
    }
    cfg.out_dir = base.join(r.string(&mut root, "", "out").unwrap_or_else(|| "qkc-out".into()));

    let mut t = r.section(&mut root, "dataset");
    if let Some(v) = r.parsed::<DatasetKind>(&mut t, "dataset", "kind") {
        e.dataset = v;
        (e.m_train, e.m_test) = v.default_sizes();
        if v == DatasetKind::Havlicek {
            e.embedding = EmbeddingKind::Iqp;
        }
    }
    r.set_usize(&mut t, "dataset", "m_train", &mut e.m_train);
    r.set_usize(&mut t, "dataset", "m_test", &mut e.m_test);
    r.set_f64(&mut t, "dataset", "noise_sd", &mut e.gen.noise_sd);
    r.set_f64(&mut t, "dataset", "factor", &mut e.gen.factor);
    r.set_usize(&mut t, "dataset", "grid", &mut e.gen.grid);
    r.set_f64(&mut t, "dataset", "gap", &mut e.gen.gap);
    cfg.train_csv = r.string(&mut t, "dataset", "train_csv").map(|p| base.join(p));
    cfg.test_csv = r.string(&mut t, "dataset", "test_csv").map(|p| base.join(p));
    r.finish(t, "dataset");

    let mut t = r.section(&mut root, "embedding");
    if let Some(v) = r.parsed::<EmbeddingKind>(&mut t, "embedding", "kind") {
        e.embedding = v;
    }
    r.set_usize(&mut t, "embedding", "n_qubits", &mut e.n_qubits);
    r.finish(t, "embedding");

    let mut t = r.section(&mut root, "classifier");
    if let Some(list) = r.strings(&mut t, "classifier", "variants") {
        let mut vs = Vec::new();
        for s in list {
            match s.parse() {
                Ok(v) => vs.push(v),
                Err(err) => r.errors.push(format!("classifier.variants: {err}")),
            }
        }
        e.variants = vs;
    }
    r.set_f64(&mut t, "classifier", "C", &mut e.c);
    r.set_u64(&mut t, "classifier", "shots_classify", &mut cfg.shots_classify);
    r.finish(t, "classifier");

    let mut t = r.section(&mut root, "shots");
    if let Some(v) = r.parsed(&mut t, "shots", "circuit") {
        e.circuit = v;
    }
    if let Some(v) = r.u64s(&mut t, "shots", "n_grid") {
        e.n_grid = v;
    }
    if let Some(v) = r.u64s(&mut t, "shots", "t_grid") {
        e.t_grid = v;
    }
    r.finish(t, "shots");

    let mut t = r.section(&mut root, "robust");
    r.set_f64(&mut t, "robust", "delta1", &mut e.delta1);
    r.set_f64(&mut t, "robust", "delta2", &mut e.delta2);
    r.set_f64(&mut t, "robust", "delta1p", &mut e.delta1p);
    r.set_f64(&mut t, "robust", "delta2p", &mut e.delta2p);
    r.set_f64(&mut t, "robust", "est_conf", &mut e.est_conf);
    r.set_f64(&mut t, "robust", "est_conf_l1", &mut e.est_conf_l1);
    r.finish(t, "robust");

    let mut t = r.section(&mut root, "trials");
    r.set_usize(&mut t, "trials", "n_trials", &mut e.n_trials);
    if let Some(s) = r.string(&mut t, "trials", "eval_set") {
        match s.as_str() {
            "train" => e.eval_set = EvalSet::Train,
            "test" => e.eval_set = EvalSet::Test,
            other => r.errors.push(format!("trials.eval_set: expected \"train\" or \"test\", got \"{other}\"")),
        }
    }
    r.set_f64(&mut t, "trials", "reliability_delta", &mut e.reliability_delta);
    r.finish(t, "trials");

    let mut t = r.section(&mut root, "bounds");
    r.set_f64(&mut t, "bounds", "delta_target", &mut e.delta_target);
    r.set_f64(&mut t, "bounds", "epsilon", &mut cfg.epsilon);
    r.set_f64(&mut t, "bounds", "conf_target", &mut cfg.conf_target);
    cfg.model = r.string(&mut t, "bounds", "model").map(|p| base.join(p));
    r.finish(t, "bounds");

    let mut t = r.section(&mut root, "noise");
    r.set_f64(&mut t, "noise", "lambda", &mut e.lambda);
    r.finish(t, "noise");

    r.finish(root, "");

    let mut errors = r.errors;
    errors.extend(check(&cfg));
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(errors))
    }
}

/// Constraints on a fully assembled configuration.
pub fn check(cfg: &RunConfig) -> Vec<String> {
    let mut v = cfg.experiment.violations();
    if cfg.shots_classify == 0 {
        v.push("classifier.shots_classify must be ≥ 1".into());
    }
    if !(cfg.epsilon > 0.0) {
        v.push(format!("bounds.epsilon must be positive, got {}", cfg.epsilon));
    }
    if !(cfg.conf_target > 0.0) {
        v.push(format!("bounds.conf_target must be positive, got {}", cfg.conf_target));
    }
    if cfg.train_csv.is_some() != cfg.test_csv.is_some() {
        v.push("dataset.train_csv and dataset.test_csv must be given together".into());
    }
    for (key, p) in [("dataset.train_csv", &cfg.train_csv), ("dataset.test_csv", &cfg.test_csv), ("bounds.model", &cfg.model)] {
        if let Some(p) = p {
            if !p.is_file() {
                v.push(format!("{key}: file {} does not exist", p.display()));
            }
        }
    }
    v
}

struct Reader {
    errors: Vec<String>,
}

fn key_path(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

impl Reader {
    fn section(&mut self, root: &mut Table, name: &str) -> Table {
        match root.remove(name) {
            None => Table::new(),
            Some(Value::Table(t)) => t,
            Some(_) => {
                self.errors.push(format!("`{name}` must be a table"));
                Table::new()
            }
        }
    }

    fn finish(&mut self, t: Table, section: &str) {
        for k in t.keys() {
            let what = if section.is_empty() { "top level".to_string() } else { format!("[{section}]") };
            self.errors.push(format!("unknown key `{k}` at {what}"));
        }
    }

    fn take(&mut self, t: &mut Table, section: &str, key: &str, want: &str, f: impl Fn(&Value) -> bool) -> Option<Value> {
        let v = t.remove(key)?;
        if f(&v) {
            Some(v)
        } else {
            self.errors.push(format!("{}: expected {want}, got {v}", key_path(section, key)));
            None
        }
    }

    fn u64(&mut self, t: &mut Table, section: &str, key: &str) -> Option<u64> {
        self.take(t, section, key, "a non-negative integer", |v| v.as_integer().is_some_and(|i| i >= 0))
            .and_then(|v| v.as_integer())
            .map(|i| i as u64)
    }

    fn set_u64(&mut self, t: &mut Table, section: &str, key: &str, dst: &mut u64) {
        if let Some(v) = self.u64(t, section, key) {
            *dst = v;
        }
    }

    fn set_usize(&mut self, t: &mut Table, section: &str, key: &str, dst: &mut usize) {
        if let Some(v) = self.u64(t, section, key) {
            *dst = v as usize;
        }
    }

    fn set_f64(&mut self, t: &mut Table, section: &str, key: &str, dst: &mut f64) {
        let num = |v: &Value| v.as_float().or(v.as_integer().map(|i| i as f64));
        if let Some(v) = self.take(t, section, key, "a number", |v| num(v).is_some()) {
            *dst = num(&v).expect("checked");
        }
    }

    fn string(&mut self, t: &mut Table, section: &str, key: &str) -> Option<String> {
        self.take(t, section, key, "a string", Value::is_str).and_then(|v| v.as_str().map(str::to_string))
    }

    fn parsed<P: std::str::FromStr<Err = qkc::Error>>(&mut self, t: &mut Table, section: &str, key: &str) -> Option<P> {
        let s = self.string(t, section, key)?;
        match s.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(format!("{}: {e}", key_path(section, key)));
                None
            }
        }
    }

    fn array(&mut self, t: &mut Table, section: &str, key: &str, want: &str, f: impl Fn(&Value) -> bool) -> Option<Vec<Value>> {
        let ok = |v: &Value| v.as_array().is_some_and(|a| a.iter().all(&f));
        self.take(t, section, key, want, ok).and_then(|v| v.as_array().cloned())
    }

    fn u64s(&mut self, t: &mut Table, section: &str, key: &str) -> Option<Vec<u64>> {
        let a = self.array(t, section, key, "an array of non-negative integers", |v| v.as_integer().is_some_and(|i| i >= 0))?;
        Some(a.iter().map(|v| v.as_integer().expect("checked") as u64).collect())
    }

    fn strings(&mut self, t: &mut Table, section: &str, key: &str) -> Option<Vec<String>> {
        let a = self.array(t, section, key, "an array of strings", Value::is_str)?;
        Some(a.iter().map(|v| v.as_str().expect("checked").to_string()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        parse_config_str(text, Path::new("/tmp"))
    }

    fn errors(text: &str) -> Vec<String> {
        match parse(text) {
            Err(CliError::Config(v)) => v,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_config_takes_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg.experiment.c, 1000.0);
        assert_eq!(cfg.experiment.n_trials, 200);
        let e = &cfg.experiment;
        assert!([e.delta1, e.delta2, e.delta1p, e.delta2p].iter().all(|&d| d == 0.01));
        assert_eq!(cfg.out_dir, Path::new("/tmp/qkc-out"));
    }

    #[test]
    fn full_config_round_trips_values() {
        let cfg = parse(
            r#"
            seed = 9
            out = "runs"
            [dataset]
            kind = "moons"
            noise_sd = 0.1
            [embedding]
            kind = "iqp"
            [classifier]
            variants = ["nominal", "l1-shofar-est"]
            C = 10
            [shots]
            circuit = "swap"
            n_grid = [2, 8]
            [robust]
            delta1 = 0.05
            [trials]
            n_trials = 12
            eval_set = "test"
            [noise]
            lambda = 0.1
            "#,
        )
        .unwrap();
        let e = &cfg.experiment;
        assert_eq!(e.master_seed, 9);
        assert_eq!((e.m_train, e.m_test), (50, 350));
        assert_eq!(e.gen.noise_sd, 0.1);
        assert_eq!(e.embedding, EmbeddingKind::Iqp);
        assert_eq!(e.c, 10.0);
        assert_eq!(e.circuit, qkc::sampler::CircuitKind::Swap);
        assert_eq!(e.n_grid, vec![2, 8]);
        assert_eq!(e.delta1, 0.05);
        assert_eq!(e.n_trials, 12);
        assert_eq!(e.eval_set, EvalSet::Test);
        assert_eq!(e.lambda, 0.1);
        assert_eq!(e.variants.len(), 2);
        assert_eq!(cfg.out_dir, Path::new("/tmp/runs"));
    }

    #[test]
    fn havlicek_defaults_to_iqp() {
        let cfg = parse("[dataset]\nkind = \"havlicek\"").unwrap();
        assert_eq!(cfg.experiment.embedding, EmbeddingKind::Iqp);
        assert_eq!((cfg.experiment.m_train, cfg.experiment.m_test), (40, 40));
    }

    #[test]
    fn delta_out_of_range_rejected() {
        let errs = errors("[robust]\ndelta1 = 1.5");
        assert!(errs.iter().any(|e| e.contains("delta1")), "{errs:?}");
    }

    #[test]
    fn unknown_key_named() {
        let errs = errors("[shots]\nshotz = 5");
        assert_eq!(errs.len(), 1);
        assert!(errs[0].contains("`shotz`"));
        let errs = errors("shotz = 5");
        assert!(errs[0].contains("`shotz`"));
    }

    #[test]
    fn every_violation_listed() {
        let errs = errors("[robust]\ndelta1 = 1.5\ndelta2 = -1\n[shots]\nn_grid = [4, 2]\nshotz = 1\n[trials]\nn_trials = \"many\"");
        assert_eq!(errs.len(), 5, "{errs:?}");
    }

    #[test]
    fn missing_files_rejected() {
        let errs = errors("[dataset]\ntrain_csv = \"nope.csv\"\ntest_csv = \"nope2.csv\"");
        assert_eq!(errs.len(), 2);
        let errs = errors("[dataset]\ntrain_csv = \"nope.csv\"");
        assert!(errs.iter().any(|e| e.contains("together")));
    }

    #[test]
    fn bad_enum_and_syntax() {
        assert!(errors("[dataset]\nkind = \"spirals\"")[0].contains("spirals"));
        assert!(errors("[classifier]\nvariants = [\"robust\"]")[0].contains("robust"));
        assert!(matches!(parse("[dataset"), Err(CliError::Config(_))));
    }
}
