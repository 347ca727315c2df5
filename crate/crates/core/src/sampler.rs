//! Shot-noise kernel estimation for the GATES and SWAP circuits.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::conic::{Matrix, SymMatrix};
use crate::error::{invalid, Error, Result};
use crate::qkernel::ExactKernelMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CircuitKind {
    Gates,
    Swap,
}

impl CircuitKind {
    pub fn name(self) -> &'static str {
        match self {
            CircuitKind::Gates => "GATES",
            CircuitKind::Swap => "SWAP",
        }
    }

    fn code(self) -> u8 {
        match self {
            CircuitKind::Gates => 0,
            CircuitKind::Swap => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(CircuitKind::Gates),
            1 => Ok(CircuitKind::Swap),
            _ => invalid(format!("unknown circuit code {c}")),
        }
    }
}

impl std::str::FromStr for CircuitKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GATES" => Ok(Self::Gates),
            "SWAP" => Ok(Self::Swap),
            other => invalid(format!("unknown circuit '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotPlan {
    pub kind: CircuitKind,
    pub shots: u64,
}

impl ShotPlan {
    pub fn new(kind: CircuitKind, shots: u64) -> Result<Self> {
        if shots == 0 {
            return invalid("shots must be ≥ 1");
        }
        Ok(Self { kind, shots })
    }
}

/// Subgaussian description of the kernel error `ΔK`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyModel {
    pub sigma0: f64,
    pub extra_variance: f64,
}

impl UncertaintyModel {
    pub fn from_plan(plan: &ShotPlan, extra_variance: f64) -> Result<Self> {
        if !(extra_variance >= 0.0) {
            return invalid("extra_variance must be ≥ 0");
        }
        Ok(Self { sigma0: sigma0(plan.kind, plan.shots)?, extra_variance })
    }

    /// `c²/(4N) + extra_variance`.
    pub fn variance_proxy(&self) -> f64 {
        self.sigma0 * self.sigma0 + self.extra_variance
    }

    pub fn effective_sigma(&self) -> f64 {
        self.variance_proxy().sqrt()
    }
}

pub fn circuit_factor(kind: CircuitKind) -> f64 {
    match kind {
        CircuitKind::Gates => 1.0,
        CircuitKind::Swap => 2.0,
    }
}

/// `c/(2√N)`.
pub fn sigma0(kind: CircuitKind, shots: u64) -> Result<f64> {
    if shots == 0 {
        return invalid("shots must be ≥ 1");
    }
    Ok(circuit_factor(kind) / (2.0 * (shots as f64).sqrt()))
}

fn check_prob(k: f64) -> Result<f64> {
    const SLACK: f64 = 1e-12;
    if !(-SLACK..=1.0 + SLACK).contains(&k) {
        return invalid(format!("kernel value {k} outside [0, 1]"));
    }
    Ok(k.clamp(0.0, 1.0))
}

/// One shot-noise estimate of `k_star`.
pub fn draw_kernel<R: Rng + ?Sized>(k_star: f64, plan: &ShotPlan, rng: &mut R) -> Result<f64> {
    let k = check_prob(k_star)?;
    let n = plan.shots;
    let p = match plan.kind {
        CircuitKind::Gates => k,
        CircuitKind::Swap => 0.5 * (1.0 + k),
    };
    let dist = Binomial::new(n, p).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let hits = dist.sample(rng) as f64;
    Ok(match plan.kind {
        CircuitKind::Gates => hits / n as f64,
        CircuitKind::Swap => 2.0 * hits / n as f64 - 1.0,
    })
}

pub fn estimator_variance(kind: CircuitKind, k_star: f64, shots: u64) -> Result<f64> {
    let k = check_prob(k_star)?;
    if shots == 0 {
        return invalid("shots must be ≥ 1");
    }
    let n = shots as f64;
    Ok(match kind {
        CircuitKind::Gates => k * (1.0 - k) / n,
        CircuitKind::Swap => (1.0 - k * k) / n,
    })
}

/// Optimal subgaussian variance proxy of a centered Bernoulli(p).
pub fn bernoulli_variance_proxy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("p = {p} outside [0, 1]"));
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    let q = 1.0 - p;
    if (p - 0.5).abs() < 1e-9 {
        return Ok(0.25);
    }
    Ok((p - q) / (2.0 * (p.ln() - q.ln())))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based seed for one matrix entry.
pub fn derive_seed(master: u64, domain: u64, i: u64, j: u64, trial: u64) -> u64 {
    [domain, i, j, trial].iter().fold(splitmix64(master), |h, &v| splitmix64(h ^ v))
}

/// Seed coordinates of one sampled matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStream {
    pub master: u64,
    pub domain: u64,
    pub trial: u64,
}

impl SeedStream {
    pub fn new(master: u64, domain: u64, trial: u64) -> Self {
        Self { master, domain, trial }
    }

    pub fn entry_rng(&self, i: usize, j: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.master, self.domain, i as u64, j as u64, self.trial))
    }

    /// Compact identifier recorded with the sampled matrix.
    pub fn id(&self) -> u64 {
        derive_seed(self.master, self.domain, u64::MAX, u64::MAX, self.trial)
    }
}

/// How the diagonal of a same-set matrix is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DiagonalPolicy {
    /// Fixed to exactly 1.
    #[default]
    Unit,
    /// Drawn from the supplied diagonal value (meaningful for noisy devices).
    Sampled,
}

/// Shot-sampled kernel values.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedKernelMatrix {
    entries: Matrix<f64>,
    plan: ShotPlan,
    seed: u64,
    same_set: bool,
}

impl EstimatedKernelMatrix {
    pub fn rows(&self) -> usize {
        self.entries.rows()
    }

    pub fn cols(&self) -> usize {
        self.entries.cols()
    }

    pub fn entries(&self) -> &Matrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn plan(&self) -> ShotPlan {
        self.plan
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn same_set(&self) -> bool {
        self.same_set
    }

    pub fn to_sym(&self) -> Result<SymMatrix<f64>> {
        SymMatrix::new(self.entries.clone())
    }

    /// Checks that every entry lies on the estimator's lattice.
    pub fn is_quantized(&self) -> bool {
        let n = self.plan.shots as f64;
        self.entries.as_slice().iter().all(|&v| {
            let k = match self.plan.kind {
                CircuitKind::Gates => v * n,
                CircuitKind::Swap => (v + 1.0) * 0.5 * n,
            };
            (k - k.round()).abs() < 1e-6 && k.round() >= 0.0 && k.round() <= n
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("row,col,value\n");
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push_str(&format!("{i},{j},{:.17e}\n", self.get(i, j)));
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Binary cache: magic, header `(rows, cols, kind, N, seed, same_set)`, then little-endian entries.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(CACHE_MAGIC)?;
        f.write_all(&(self.rows() as u64).to_le_bytes())?;
        f.write_all(&(self.cols() as u64).to_le_bytes())?;
        f.write_all(&[self.plan.kind.code(), self.same_set as u8])?;
        f.write_all(&self.plan.shots.to_le_bytes())?;
        f.write_all(&self.seed.to_le_bytes())?;
        for v in self.entries.as_slice() {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut cur = bytes.as_slice();
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return invalid("truncated kernel cache");
            }
            let (head, rest) = cur.split_at(n);
            cur = rest;
            Ok(head)
        };
        if take(CACHE_MAGIC.len())? != CACHE_MAGIC {
            return invalid("not a kernel cache file");
        }
        let u64_at = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8 bytes"));
        let rows = u64_at(take(8)?) as usize;
        let cols = u64_at(take(8)?) as usize;
        let flags = take(2)?.to_vec();
        let shots = u64_at(take(8)?);
        let seed = u64_at(take(8)?);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(f64::from_le_bytes(take(8)?.try_into().expect("8 bytes")));
        }
        let plan = ShotPlan::new(CircuitKind::from_code(flags[0])?, shots)?;
        Ok(Self { entries: Matrix::from_vec(rows, cols, data)?, plan, seed, same_set: flags[1] != 0 })
    }
}

const CACHE_MAGIC: &[u8; 8] = b"QKCKRN01";

/// Samples every entry of `k_star` independently with counter-based seeds.
///
/// Same-set matrices are drawn on the upper triangle and mirrored.
pub fn draw_kernel_matrix(
    k_star: &ExactKernelMatrix<f64>,
    plan: &ShotPlan,
    seeds: &SeedStream,
    diagonal: DiagonalPolicy,
) -> Result<EstimatedKernelMatrix> {
    let (r, c) = (k_star.rows(), k_star.cols());
    let mut out = Matrix::zeros(r, c);
    if k_star.same_set() {
        for i in 0..r {
            out[(i, i)] = match diagonal {
                DiagonalPolicy::Unit => 1.0,
                DiagonalPolicy::Sampled => draw_kernel(k_star.get(i, i), plan, &mut seeds.entry_rng(i, i))?,
            };
            for j in (i + 1)..c {
                let v = draw_kernel(k_star.get(i, j), plan, &mut seeds.entry_rng(i, j))?;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
    } else {
        for i in 0..r {
            for j in 0..c {
                out[(i, j)] = draw_kernel(k_star.get(i, j), plan, &mut seeds.entry_rng(i, j))?;
            }
        }
    }
    Ok(EstimatedKernelMatrix { entries: out, plan: *plan, seed: seeds.id(), same_set: k_star.same_set() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plan(kind: CircuitKind, n: u64) -> ShotPlan {
        ShotPlan::new(kind, n).unwrap()
    }

    fn exact(rows: &[Vec<f64>], same: bool) -> ExactKernelMatrix<f64> {
        ExactKernelMatrix::from_matrix(Matrix::from_rows(rows).unwrap(), same)
    }

    #[test]
    fn factors_and_sigma() {
        assert_eq!(circuit_factor(CircuitKind::Gates), 1.0);
        assert_eq!(circuit_factor(CircuitKind::Swap), 2.0);
        assert!((sigma0(CircuitKind::Gates, 25).unwrap() - 0.1).abs() < 1e-15);
        assert!((sigma0(CircuitKind::Swap, 25).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(sigma0(CircuitKind::Gates, 1).unwrap(), 0.5);
        assert!(sigma0(CircuitKind::Gates, 0).is_err());
        for k in [CircuitKind::Gates, CircuitKind::Swap] {
            let n = 37;
            assert_eq!(sigma0(k, n).unwrap(), circuit_factor(k) / (2.0 * (n as f64).sqrt()));
        }
    }

    #[test]
    fn uncertainty_model_total() {
        let um = UncertaintyModel::from_plan(&plan(CircuitKind::Swap, 100), 0.01).unwrap();
        assert!((um.variance_proxy() - (4.0 / 400.0 + 0.01)).abs() < 1e-15);
    }

    #[test]
    fn draw_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 5, 1000] {
            assert_eq!(draw_kernel(1.0, &plan(CircuitKind::Gates, n), &mut rng).unwrap(), 1.0);
        }
        for _ in 0..50 {
            let g = draw_kernel(0.5, &plan(CircuitKind::Gates, 1), &mut rng).unwrap();
            assert!(g == 0.0 || g == 1.0);
            let s = draw_kernel(0.5, &plan(CircuitKind::Swap, 1), &mut rng).unwrap();
            assert!(s == -1.0 || s == 1.0);
        }
        assert!(draw_kernel(1.5, &plan(CircuitKind::Gates, 3), &mut rng).is_err());
    }

    #[test]
    fn matrix_examples() {
        let s = SeedStream::new(1, 0, 0);
        let one = draw_kernel_matrix(&exact(&[vec![1.0]], true), &plan(CircuitKind::Gates, 10), &s, DiagonalPolicy::Unit)
            .unwrap();
        assert_eq!(one.get(0, 0), 1.0);
        let k = exact(&[vec![1.0, 0.4], vec![0.4, 1.0]], true);
        let e = draw_kernel_matrix(&k, &plan(CircuitKind::Swap, 10), &s, DiagonalPolicy::Unit).unwrap();
        assert_eq!(e.get(0, 1), e.get(1, 0));
        assert!(e.to_sym().is_ok());
        assert!(e.is_quantized());
    }

    #[test]
    fn sampled_diagonal_uses_diagonal_value() {
        let k = exact(&[vec![0.5, 0.4], vec![0.4, 0.5]], true);
        let mut saw_non_unit = false;
        for t in 0..20 {
            let e = draw_kernel_matrix(&k, &plan(CircuitKind::Gates, 4), &SeedStream::new(3, 0, t), DiagonalPolicy::Sampled)
                .unwrap();
            saw_non_unit |= e.get(0, 0) != 1.0;
        }
        assert!(saw_non_unit);
    }

    #[test]
    fn unbiased_mean() {
        // σ² = 0.3·0.7/100 = 0.0021
        let p = plan(CircuitKind::Gates, 100);
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mean: f64 = (0..draws).map(|_| draw_kernel(0.3, &p, &mut rng).unwrap()).sum::<f64>() / draws as f64;
        assert!((mean - 0.3).abs() <= 3.0 * (0.0021f64 / draws as f64).sqrt());

        for (kind, k) in [(CircuitKind::Swap, 0.3), (CircuitKind::Gates, 0.85), (CircuitKind::Swap, 0.05)] {
            let p = plan(kind, 20);
            let se = (estimator_variance(kind, k, 20).unwrap() / draws as f64).sqrt();
            let mean: f64 = (0..draws).map(|_| draw_kernel(k, &p, &mut rng).unwrap()).sum::<f64>() / draws as f64;
            assert!((mean - k).abs() < 5.0 * se, "{kind:?} {k}: {mean}");
        }
    }

    #[test]
    fn variance_examples() {
        assert!((estimator_variance(CircuitKind::Gates, 0.5, 100).unwrap() - 0.0025).abs() < 1e-15);
        assert!((estimator_variance(CircuitKind::Swap, 0.5, 100).unwrap() - 0.0075).abs() < 1e-15);
        assert_eq!(estimator_variance(CircuitKind::Gates, 1.0, 9).unwrap(), 0.0);
        assert!(estimator_variance(CircuitKind::Gates, 0.5, 0).is_err());
    }

    #[test]
    fn empirical_variance_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [CircuitKind::Gates, CircuitKind::Swap] {
            let p = plan(kind, 50);
            let xs: Vec<f64> = (0..50_000).map(|_| draw_kernel(0.6, &p, &mut rng).unwrap()).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            let want = estimator_variance(kind, 0.6, 50).unwrap();
            assert!((v / want - 1.0).abs() < 0.05, "{kind:?}: {v} vs {want}");
        }
    }

    #[test]
    fn proxy_examples() {
        assert_eq!(bernoulli_variance_proxy(0.5).unwrap(), 0.25);
        assert_eq!(bernoulli_variance_proxy(0.0).unwrap(), 0.0);
        assert_eq!(bernoulli_variance_proxy(1.0).unwrap(), 0.0);
        assert!((bernoulli_variance_proxy(0.9).unwrap() - 0.8 / (2.0 * 9f64.ln())).abs() < 1e-15);
        assert!((bernoulli_variance_proxy(0.5 + 1e-7).unwrap() - 0.25).abs() < 1e-9);
        assert!(bernoulli_variance_proxy(-0.1).is_err());
    }

    #[test]
    fn tail_bound_holds() {
        // P(Σ aᵢ ΔKᵢ ≥ t) ≤ exp(−t²/(2σ₀²‖a‖²))
        let k = [0.2, 0.5, 0.9, 0.35];
        let a = [1.0, -0.5, 2.0, 0.7];
        let a2: f64 = a.iter().map(|x| x * x).sum();
        let trials = 20_000;
        for kind in [CircuitKind::Gates, CircuitKind::Swap] {
            let p = plan(kind, 16);
            let s0 = sigma0(kind, 16).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let sums: Vec<f64> = (0..trials)
                .map(|_| k.iter().zip(&a).map(|(&ki, &ai)| ai * (draw_kernel(ki, &p, &mut rng).unwrap() - ki)).sum())
                .collect();
            for t in [0.1, 0.3, 0.6, 1.0] {
                let emp = sums.iter().filter(|&&v| v >= t).count() as f64 / trials as f64;
                let bound = (-t * t / (2.0 * s0 * s0 * a2)).exp();
                let se = (bound.min(0.25) * (1.0 - bound.min(0.25)) / trials as f64).sqrt().max(1.0 / trials as f64);
                assert!(emp <= bound + 3.0 * se, "{kind:?} t={t}: {emp} > {bound}");
            }
        }
    }

    #[test]
    fn deterministic_and_order_independent() {
        let k = exact(&[vec![1.0, 0.3, 0.6], vec![0.3, 1.0, 0.2], vec![0.6, 0.2, 1.0]], true);
        let p = plan(CircuitKind::Gates, 64);
        let a = draw_kernel_matrix(&k, &p, &SeedStream::new(42, 1, 3), DiagonalPolicy::Unit).unwrap();
        let b = draw_kernel_matrix(&k, &p, &SeedStream::new(42, 1, 3), DiagonalPolicy::Unit).unwrap();
        assert_eq!(a, b);
        let c = draw_kernel_matrix(&k, &p, &SeedStream::new(42, 1, 4), DiagonalPolicy::Unit).unwrap();
        assert_ne!(a, c);
        // entry (0,2) does not depend on the rest of the matrix
        let mut rng = SeedStream::new(42, 1, 3).entry_rng(0, 2);
        assert_eq!(draw_kernel(0.6, &p, &mut rng).unwrap(), a.get(0, 2));
    }

    #[test]
    fn cache_and_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let k = exact(&[vec![0.1, 0.9, 0.4], vec![0.7, 0.2, 0.5]], false);
        let e = draw_kernel_matrix(&k, &plan(CircuitKind::Swap, 33), &SeedStream::new(5, 2, 0), DiagonalPolicy::Unit)
            .unwrap();
        let path = dir.path().join("k.bin");
        e.write_cache(&path).unwrap();
        assert_eq!(EstimatedKernelMatrix::read_cache(&path).unwrap(), e);
        let csv = dir.path().join("k.csv");
        e.write_csv(&csv).unwrap();
        let text = std::fs::read_to_string(csv).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("row,col,value\n"));
        std::fs::write(&path, b"junk").unwrap();
        assert!(EstimatedKernelMatrix::read_cache(&path).is_err());
    }

    proptest! {
        #[test]
        fn swap_variance_dominates(k in 0.0f64..=1.0, n in 1u64..10_000) {
            prop_assert!(estimator_variance(CircuitKind::Swap, k, n).unwrap() >= estimator_variance(CircuitKind::Gates, k, n).unwrap());
        }

        #[test]
        fn proxy_symmetric_max_half(p in 0.0f64..=1.0) {
            let a = bernoulli_variance_proxy(p).unwrap();
            let b = bernoulli_variance_proxy(1.0 - p).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a <= 0.25 + 1e-15);
        }

        #[test]
        fn draws_are_quantized(k in 0.0f64..=1.0, n in 1u64..500, seed in any::<u64>(), swap in any::<bool>()) {
            let kind = if swap { CircuitKind::Swap } else { CircuitKind::Gates };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = draw_kernel(k, &plan(kind, n), &mut rng).unwrap();
            let lattice = if swap { (v + 1.0) / 2.0 * n as f64 } else { v * n as f64 };
            prop_assert!((lattice - lattice.round()).abs() < 1e-9);
        }
    }
}
