//! Seeded benchmark datasets and CSV persistence.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::qkernel::{embed, EmbeddingSpec};
use crate::sampler::derive_seed;
use crate::svm::Label;

const MAX_CANDIDATES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// `(#(+1), #(−1))`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (pos, self.labels.len() - pos)
    }

    fn with_param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }
}

fn rng_for(seed: u64, domain: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, domain, 0, 0, 0))
}

fn check_even(m: usize) -> Result<()> {
    if m < 2 || m % 2 != 0 {
        return invalid(format!("m must be even and ≥ 2, got {m}"));
    }
    Ok(())
}

fn normal(sd: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sd).map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Affine map of `[lo, hi]` onto `[0, π]`.
fn to_unit_pi(v: f64, lo: f64, hi: f64) -> f64 {
    (v - lo) / (hi - lo) * PI
}

/// Two concentric rings: radius 1 labelled −1, radius `factor` labelled +1.
pub fn gen_circles(m: usize, noise_sd: f64, factor: f64, seed: u64) -> Result<LabeledDataset> {
    check_even(m)?;
    if !(factor > 0.0 && factor < 1.0) {
        return invalid("factor must lie in (0, 1)");
    }
    let jitter = normal(noise_sd)?;
    let mut rng = rng_for(seed, 1);
    let half = m / 2;
    let mut points = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for (radius, label) in [(1.0, -1), (factor, 1)] {
        for k in 0..half {
            let t = 2.0 * PI * k as f64 / half as f64;
            let x = radius * t.cos() + jitter.sample(&mut rng);
            let y = radius * t.sin() + jitter.sample(&mut rng);
            points.push(vec![to_unit_pi(x, -1.0, 1.0), to_unit_pi(y, -1.0, 1.0)]);
            labels.push(label);
        }
    }
    Ok(LabeledDataset { points, labels, name: "circles".into(), seed, params: BTreeMap::new() }
        .with_param("noise_sd", noise_sd)
        .with_param("factor", factor)
        .with_param("rescale", "[-1,1]^2 -> [0,pi]^2"))
}

/// Two interleaving half circles: upper labelled −1, lower labelled +1.
pub fn gen_moons(m: usize, noise_sd: f64, seed: u64) -> Result<LabeledDataset> {
    check_even(m)?;
    let jitter = normal(noise_sd)?;
    let mut rng = rng_for(seed, 2);
    let half = m / 2;
    let mut points = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for label in [-1, 1] {
        for k in 0..half {
            let t = if half > 1 { PI * k as f64 / (half - 1) as f64 } else { 0.0 };
            let (x, y) = if label == -1 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
            let x = x + jitter.sample(&mut rng);
            let y = y + jitter.sample(&mut rng);
            points.push(vec![to_unit_pi(x, -1.0, 2.0), to_unit_pi(y, -0.5, 1.0)]);
            labels.push(label);
        }
    }
    Ok(LabeledDataset { points, labels, name: "moons".into(), seed, params: BTreeMap::new() }
        .with_param("noise_sd", noise_sd)
        .with_param("rescale", "[-1,2]x[-0.5,1] -> [0,pi]^2"))
}

/// Points spread round-robin over a `grid×grid` board on `[0, π]²`, labelled by cell parity.
pub fn gen_checkerboard(m: usize, grid: usize, seed: u64) -> Result<LabeledDataset> {
    if grid == 0 || m < grid * grid {
        return invalid(format!("need m ≥ grid² (m = {m}, grid = {grid})"));
    }
    let mut rng = rng_for(seed, 3);
    let width = PI / grid as f64;
    let mut points = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for k in 0..m {
        let cell = k % (grid * grid);
        let (i, j) = (cell / grid, cell % grid);
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        points.push(vec![(i as f64 + u) * width, (j as f64 + v) * width]);
        labels.push(if (i + j) % 2 == 0 { 1 } else { -1 });
    }
    Ok(LabeledDataset { points, labels, name: "checkerboard".into(), seed, params: BTreeMap::new() }
        .with_param("grid", grid))
}

/// Haar-random `d×d` unitary: Gram–Schmidt on a complex Gaussian matrix.
fn haar_unitary(d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Complex64>> {
    let mut cols: Vec<Vec<Complex64>> = (0..d)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    Complex64::new(re, im)
                })
                .collect()
        })
        .collect();
    for k in 0..d {
        for j in 0..k {
            let proj: Complex64 = (0..d).map(|i| cols[j][i].conj() * cols[k][i]).sum();
            for i in 0..d {
                let v = cols[j][i];
                cols[k][i] -= proj * v;
            }
        }
        let n = cols[k].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        cols[k].iter_mut().for_each(|v| *v /= n);
    }
    // rows of U = transpose of the column list
    (0..d).map(|i| (0..d).map(|j| cols[j][i]).collect()).collect()
}

/// `⟨ψ|V†(Z⊗…⊗Z)V|ψ⟩` with the parity observable on all qubits.
fn parity_expectation(v: &[Vec<Complex64>], psi: &[Complex64]) -> f64 {
    let d = psi.len();
    (0..d)
        .map(|z| {
            let amp: Complex64 = (0..d).map(|k| v[z][k] * psi[k]).sum();
            let sign = if z.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            sign * amp.norm_sqr()
        })
        .sum()
}

/// Labels from a seeded random unitary's parity expectation, keeping only points with `|⟨·⟩| ≥ gap`.
pub fn gen_havlicek(m: usize, gap: f64, seed: u64, spec: &EmbeddingSpec) -> Result<LabeledDataset> {
    check_even(m)?;
    if !(gap > 0.0 && gap < 1.0) {
        return invalid("gap must lie in (0, 1)");
    }
    let mut rng = rng_for(seed, 4);
    let v = haar_unitary(spec.dim(), &mut rng);
    let half = m / 2;
    let (mut npos, mut nneg) = (0, 0);
    let mut points = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..MAX_CANDIDATES {
        if npos == half && nneg == half {
            break;
        }
        let x: Vec<f64> = (0..spec.input_dim).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        let psi = embed(spec, &x)?;
        let e = parity_expectation(&v, psi.amplitudes());
        if e.abs() < gap {
            continue;
        }
        let label: Label = if e > 0.0 { 1 } else { -1 };
        let count = if label == 1 { &mut npos } else { &mut nneg };
        if *count < half {
            *count += 1;
            points.push(x);
            labels.push(label);
        }
    }
    if npos < half || nneg < half {
        return Err(Error::GenerationStalled(MAX_CANDIDATES));
    }
    Ok(LabeledDataset { points, labels, name: "havlicek".into(), seed, params: BTreeMap::new() }
        .with_param("gap", gap)
        .with_param("embedding", spec.id()))
}

/// Parity expectation used to label a Havlicek point; exposed for checking the gap rule.
pub fn havlicek_expectation(x: &[f64], seed: u64, spec: &EmbeddingSpec) -> Result<f64> {
    let mut rng = rng_for(seed, 4);
    let v = haar_unitary(spec.dim(), &mut rng);
    Ok(parity_expectation(&v, embed(spec, x)?.amplitudes()))
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

#[derive(Serialize, Deserialize)]
struct Meta {
    name: String,
    seed: u64,
    params: BTreeMap<String, String>,
}

/// Writes `x1,…,xd,label` rows and a JSON sidecar `<path>.meta`.
pub fn save_csv(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let d = ds.dim();
    let mut out: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    out.push("label".into());
    let mut text = out.join(",");
    text.push('\n');
    for (x, l) in ds.points.iter().zip(&ds.labels) {
        for v in x {
            text.push_str(&format!("{v:.16e},"));
        }
        text.push_str(&format!("{l}\n"));
    }
    std::fs::write(path, text)?;
    let meta = Meta { name: ds.name.clone(), seed: ds.seed, params: ds.params.clone() };
    std::fs::write(meta_path(path), serde_json::to_string_pretty(&meta).expect("meta serializes"))?;
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path)?;
    let perr = |line: usize, msg: String| Error::Parse { line, msg };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let d = cols.len().saturating_sub(1);
    let expected: Vec<String> = (1..=d).map(|i| format!("x{i}")).chain(["label".to_string()]).collect();
    if d == 0 || cols != expected {
        return Err(perr(1, format!("expected header {}", expected.join(","))));
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (ln, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(perr(ln, format!("expected {} fields, found {}", d + 1, fields.len())));
        }
        let x = fields[..d]
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|_| perr(ln, format!("bad number '{f}'"))))
            .collect::<Result<Vec<f64>>>()?;
        let label = match fields[d].trim() {
            "1" | "+1" => 1,
            "-1" => -1,
            other => return Err(perr(ln, format!("label must be ±1, found '{other}'"))),
        };
        points.push(x);
        labels.push(label);
    }
    if points.is_empty() {
        return Err(perr(1, "no data rows".into()));
    }
    let meta = match std::fs::read_to_string(meta_path(path)) {
        Ok(s) => serde_json::from_str::<Meta>(&s).map_err(|e| perr(0, format!("bad metadata: {e}")))?,
        Err(_) => Meta {
            name: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            seed: 0,
            params: BTreeMap::new(),
        },
    };
    Ok(LabeledDataset { points, labels, name: meta.name, seed: meta.seed, params: meta.params })
}

/// Named benchmark with its default generator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Circles,
    Moons,
    Checkerboard,
    Havlicek,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Circles => "circles",
            DatasetKind::Moons => "moons",
            DatasetKind::Checkerboard => "checkerboard",
            DatasetKind::Havlicek => "havlicek",
        }
    }

    /// Default `(train, test)` sizes.
    pub fn default_sizes(self) -> (usize, usize) {
        match self {
            DatasetKind::Circles => (40, 360),
            DatasetKind::Havlicek => (40, 40),
            DatasetKind::Moons => (50, 350),
            DatasetKind::Checkerboard => (100, 300),
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "circles" => Ok(Self::Circles),
            "moons" => Ok(Self::Moons),
            "checkerboard" => Ok(Self::Checkerboard),
            "havlicek" => Ok(Self::Havlicek),
            other => invalid(format!("unknown dataset '{other}'")),
        }
    }
}

/// Generator knobs; unset fields fall back to defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub noise_sd: f64,
    pub factor: f64,
    pub grid: usize,
    pub gap: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self { noise_sd: 0.05, factor: 0.5, grid: 4, gap: 0.3 }
    }
}

pub fn generate(kind: DatasetKind, m: usize, seed: u64, p: &GenParams, spec: &EmbeddingSpec) -> Result<LabeledDataset> {
    match kind {
        DatasetKind::Circles => gen_circles(m, p.noise_sd, p.factor, seed),
        DatasetKind::Moons => gen_moons(m, p.noise_sd, seed),
        DatasetKind::Checkerboard => gen_checkerboard(m, p.grid, seed),
        DatasetKind::Havlicek => gen_havlicek(m, p.gap, seed, spec),
    }
}

/// Independent train and test sets from one seed. Havlicek sets share the labelling unitary.
pub fn generate_split(
    kind: DatasetKind,
    m_train: usize,
    m_test: usize,
    seed: u64,
    p: &GenParams,
    spec: &EmbeddingSpec,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if kind == DatasetKind::Havlicek {
        // one draw so both halves come from the same labelling unitary
        let all = gen_havlicek(m_train + m_test, p.gap, seed, spec)?;
        return Ok(split_balanced(all, m_train));
    }
    let train = generate(kind, m_train, seed, p, spec)?;
    let test = generate(kind, m_test, derive_seed(seed, 0x7e57, 0, 0, 0), p, spec)?;
    Ok((train, test))
}

/// Splits keeping both parts as balanced as possible.
fn split_balanced(all: LabeledDataset, m_train: usize) -> (LabeledDataset, LabeledDataset) {
    let mut train = LabeledDataset { points: vec![], labels: vec![], ..all.clone() };
    let mut test = train.clone();
    let (mut tp, mut tn) = (0, 0);
    for (x, l) in all.points.into_iter().zip(all.labels) {
        let taken = if l == 1 { &mut tp } else { &mut tn };
        if *taken < m_train / 2 + usize::from(l == 1 && m_train % 2 == 1) {
            *taken += 1;
            train.points.push(x);
            train.labels.push(l);
        } else {
            test.points.push(x);
            test.labels.push(l);
        }
    }
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qkernel::EmbeddingKind;
    use proptest::prelude::*;

    fn iqp() -> EmbeddingSpec {
        EmbeddingSpec::new(EmbeddingKind::Iqp, 2).unwrap()
    }

    fn undo_circle(p: &[f64]) -> (f64, f64) {
        (p[0] / PI * 2.0 - 1.0, p[1] / PI * 2.0 - 1.0)
    }

    #[test]
    fn circles_zero_noise_radii() {
        let ds = gen_circles(8, 0.0, 0.5, 3).unwrap();
        assert_eq!(ds.class_counts(), (4, 4));
        for (p, &l) in ds.points.iter().zip(&ds.labels) {
            let (x, y) = undo_circle(p);
            let r = (x * x + y * y).sqrt();
            let want = if l == -1 { 1.0 } else { 0.5 };
            assert!((r - want).abs() < 1e-12);
        }
        assert!(gen_circles(7, 0.0, 0.5, 3).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(gen_circles(40, 0.05, 0.5, 9).unwrap(), gen_circles(40, 0.05, 0.5, 9).unwrap());
        assert_ne!(gen_circles(40, 0.05, 0.5, 9).unwrap(), gen_circles(40, 0.05, 0.5, 10).unwrap());
        assert_eq!(gen_moons(50, 0.05, 1).unwrap(), gen_moons(50, 0.05, 1).unwrap());
        assert_eq!(gen_checkerboard(100, 4, 1).unwrap(), gen_checkerboard(100, 4, 1).unwrap());
        assert_eq!(gen_havlicek(10, 0.3, 1, &iqp()).unwrap(), gen_havlicek(10, 0.3, 1, &iqp()).unwrap());
    }

    #[test]
    fn moons_zero_noise_shape() {
        let ds = gen_moons(10, 0.0, 0).unwrap();
        assert_eq!(ds.class_counts(), (5, 5));
        for p in &ds.points {
            assert!(p.iter().all(|&v| (-1e-12..=PI + 1e-12).contains(&v)));
        }
        // upper moon starts at (1, 0) → (2π/3, π/3)
        assert!((ds.points[0][0] - 2.0 * PI / 3.0).abs() < 1e-12);
        assert!((ds.points[0][1] - PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn checkerboard_examples() {
        let ds = gen_checkerboard(4, 2, 5).unwrap();
        assert_eq!(ds.labels, vec![1, -1, -1, 1]);
        let big = gen_checkerboard(100, 4, 5).unwrap();
        let (p, n) = big.class_counts();
        assert!(p.abs_diff(n) <= 2);
        assert!(big.points.iter().flatten().all(|&v| (0.0..=PI).contains(&v)));
        assert!(gen_checkerboard(3, 2, 5).is_err());
    }

    #[test]
    fn havlicek_gap_and_balance() {
        let spec = iqp();
        let ds = gen_havlicek(40, 0.3, 17, &spec).unwrap();
        assert_eq!(ds.class_counts(), (20, 20));
        for (x, &l) in ds.points.iter().zip(&ds.labels) {
            let e = havlicek_expectation(x, 17, &spec).unwrap();
            assert!(e.abs() >= 0.3);
            assert_eq!(l, if e > 0.0 { 1 } else { -1 });
        }
        assert!(ds.points.iter().flatten().all(|&v| (0.0..=2.0 * PI).contains(&v)));
    }

    #[test]
    fn havlicek_stalls_on_impossible_gap() {
        // |⟨Z⊗Z⟩| ≤ 1, so gap 0.999999 is essentially never met
        assert!(matches!(gen_havlicek(4, 0.999_999_9, 1, &iqp()), Err(Error::GenerationStalled(_))));
    }

    #[test]
    fn haar_is_unitary() {
        let u = haar_unitary(4, &mut rng_for(3, 9));
        for i in 0..4 {
            for j in 0..4 {
                let dot: Complex64 = (0..4).map(|k| u[k][i].conj() * u[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot.re - want).abs() < 1e-12 && dot.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn split_sizes() {
        let spec = iqp();
        for kind in [DatasetKind::Circles, DatasetKind::Moons, DatasetKind::Checkerboard, DatasetKind::Havlicek] {
            let (m, mm) = kind.default_sizes();
            let (tr, te) = generate_split(kind, m, mm, 4, &GenParams::default(), &spec).unwrap();
            assert_eq!((tr.len(), te.len()), (m, mm), "{kind:?}");
            let (p, n) = tr.class_counts();
            assert!(p.abs_diff(n) <= 2);
        }
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let ds = gen_circles(12, 0.05, 0.5, 77).unwrap();
        save_csv(&ds, &path).unwrap();
        assert_eq!(load_csv(&path).unwrap(), ds);
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("x1,x2,label\n"));
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x1,x2,label\n0.1,0.2,1\n0.3,0.4,2\n").unwrap();
        assert!(matches!(load_csv(&path), Err(Error::Parse { line: 3, .. })));
        std::fs::write(&path, "").unwrap();
        assert!(matches!(load_csv(&path), Err(Error::Parse { .. })));
        std::fs::write(&path, "x1,x2,label\n0.1,oops,1\n").unwrap();
        assert!(matches!(load_csv(&path), Err(Error::Parse { line: 2, .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn balanced_labels(half in 1usize..40, seed in any::<u64>()) {
            let m = 2 * half;
            for ds in [gen_circles(m, 0.05, 0.5, seed).unwrap(), gen_moons(m, 0.05, seed).unwrap()] {
                let (p, n) = ds.class_counts();
                prop_assert_eq!(p, n);
                prop_assert!(ds.labels.iter().all(|&l| l == 1 || l == -1));
            }
        }
    }
}
