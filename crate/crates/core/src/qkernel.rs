//! Exact statevector simulation of embedding kernels and the kernel-level depolarizing channel.
//!
//! Basis index bit `n-1-q` holds qubit `q`, so qubit 0 is the most significant bit.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::conic::{Matrix, SymMatrix};
use crate::error::{invalid, Error, Result};
use crate::scalar::{lit, Real};

const MAX_QUBITS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingKind {
    Angle,
    Iqp,
    IqpThenAngle,
}

impl EmbeddingKind {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingKind::Angle => "angle",
            EmbeddingKind::Iqp => "iqp",
            EmbeddingKind::IqpThenAngle => "iqp-then-angle",
        }
    }
}

impl std::str::FromStr for EmbeddingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "angle" => Ok(Self::Angle),
            "iqp" => Ok(Self::Iqp),
            "iqp-then-angle" | "iqpthenangle" => Ok(Self::IqpThenAngle),
            other => invalid(format!("unknown embedding '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub kind: EmbeddingKind,
    pub n_qubits: usize,
    pub input_dim: usize,
}

impl EmbeddingSpec {
    pub fn new(kind: EmbeddingKind, n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return invalid(format!("n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"));
        }
        Ok(Self { kind, n_qubits, input_dim: n_qubits })
    }

    /// Hilbert-space dimension `2^n`.
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Short identifier such as `angle-2`.
    pub fn id(&self) -> String {
        format!("{}-{}", self.kind.name(), self.n_qubits)
    }

    fn check(&self, x: &[impl Copy]) -> Result<()> {
        if self.input_dim != self.n_qubits {
            return invalid("input_dim must equal n_qubits");
        }
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        Ok(())
    }
}

/// Normalized state `U(x)|0…0⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T> {
    amps: Vec<Complex<T>>,
}

impl<T: Real> StateVector<T> {
    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }

    pub fn norm(&self) -> T {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<T>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex<T> {
        self.amps.iter().zip(&other.amps).fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b)
    }

    /// `|⟨self|other⟩|²` clamped to `[0, 1]`.
    pub fn fidelity(&self, other: &Self) -> T {
        self.inner(other).norm_sqr().max(T::zero()).min(T::one())
    }
}

fn rx<T: Real>(theta: T) -> [[Complex<T>; 2]; 2] {
    let half = theta * lit(0.5);
    let c = Complex::new(half.cos(), T::zero());
    let s = Complex::new(T::zero(), -half.sin());
    [[c, s], [s, c]]
}

fn apply_1q<T: Real>(amps: &mut [Complex<T>], n: usize, qubit: usize, u: &[[Complex<T>; 2]; 2]) {
    let bit = 1usize << (n - 1 - qubit);
    for i in 0..amps.len() {
        if i & bit == 0 {
            let (a0, a1) = (amps[i], amps[i | bit]);
            amps[i] = u[0][0] * a0 + u[0][1] * a1;
            amps[i | bit] = u[1][0] * a0 + u[1][1] * a1;
        }
    }
}

/// `D(x)·H^⊗n |0⟩` with phase `Σ xᵢsᵢ + Σ_{i<j} xᵢxⱼsᵢsⱼ`, `sᵢ = (−1)^{zᵢ}`.
fn iqp_state<T: Real>(x: &[T]) -> Vec<Complex<T>> {
    let n = x.len();
    let d = 1usize << n;
    let amp = T::one() / lit::<T>(d as f64).sqrt();
    (0..d)
        .map(|z| {
            let s: Vec<T> = (0..n).map(|q| if z >> (n - 1 - q) & 1 == 0 { T::one() } else { -T::one() }).collect();
            let mut phase = T::zero();
            for i in 0..n {
                phase = phase + x[i] * s[i];
                for j in (i + 1)..n {
                    phase = phase + x[i] * x[j] * s[i] * s[j];
                }
            }
            Complex::from_polar(amp, phase)
        })
        .collect()
}

pub fn embed<T: Real>(spec: &EmbeddingSpec, x: &[T]) -> Result<StateVector<T>> {
    spec.check(x)?;
    let n = spec.n_qubits;
    let amps = match spec.kind {
        EmbeddingKind::Angle => {
            let mut amps = vec![Complex::new(T::zero(), T::zero()); 1 << n];
            amps[0] = Complex::new(T::one(), T::zero());
            for (q, &xq) in x.iter().enumerate() {
                apply_1q(&mut amps, n, q, &rx(xq));
            }
            amps
        }
        EmbeddingKind::Iqp => iqp_state(x),
        EmbeddingKind::IqpThenAngle => {
            let mut amps = iqp_state(x);
            for (q, &xq) in x.iter().enumerate() {
                apply_1q(&mut amps, n, q, &rx(xq));
            }
            amps
        }
    };
    Ok(StateVector { amps })
}

pub fn kernel_exact<T: Real>(spec: &EmbeddingSpec, x: &[T], x2: &[T]) -> Result<T> {
    let a = embed(spec, x)?;
    let b = embed(spec, x2)?;
    Ok(a.fidelity(&b))
}

/// Noiseless kernel values between two point sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactKernelMatrix<T> {
    entries: Matrix<T>,
    same_set: bool,
}

impl<T: Real> ExactKernelMatrix<T> {
    pub fn from_matrix(entries: Matrix<T>, same_set: bool) -> Self {
        Self { entries, same_set }
    }

    pub fn rows(&self) -> usize {
        self.entries.rows()
    }

    pub fn cols(&self) -> usize {
        self.entries.cols()
    }

    pub fn entries(&self) -> &Matrix<T> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[(i, j)]
    }

    /// Whether rows and columns index the same point set.
    pub fn same_set(&self) -> bool {
        self.same_set
    }

    pub fn to_sym(&self) -> Result<SymMatrix<T>> {
        SymMatrix::new(self.entries.clone())
    }
}

fn embed_all<T: Real>(spec: &EmbeddingSpec, xs: &[Vec<T>]) -> Result<Vec<StateVector<T>>> {
    if xs.is_empty() {
        return invalid("empty point list");
    }
    xs.iter().map(|x| embed(spec, x)).collect()
}

pub fn kernel_matrix_exact<T: Real>(spec: &EmbeddingSpec, xs: &[Vec<T>], xs2: &[Vec<T>]) -> Result<ExactKernelMatrix<T>> {
    let a = embed_all(spec, xs)?;
    if xs == xs2 {
        let m = a.len();
        let mut k = Matrix::zeros(m, m);
        for i in 0..m {
            k[(i, i)] = T::one();
            for j in (i + 1)..m {
                let v = a[i].fidelity(&a[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        return Ok(ExactKernelMatrix { entries: k, same_set: true });
    }
    let b = embed_all(spec, xs2)?;
    let k = Matrix::from_fn(a.len(), b.len(), |i, j| a[i].fidelity(&b[j]));
    Ok(ExactKernelMatrix { entries: k, same_set: false })
}

/// Uniform per-point depolarizing noise seen at the kernel level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepolarizingChannel {
    pub lambda: f64,
    pub d: usize,
}

impl DepolarizingChannel {
    pub fn new(lambda: f64, d: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return invalid(format!("lambda must be in [0,1], got {lambda}"));
        }
        if d < 2 || !d.is_power_of_two() {
            return invalid(format!("d must be a power of two ≥ 2, got {d}"));
        }
        Ok(Self { lambda, d })
    }

    /// `(1−λ²)k + λ²/d`.
    pub fn apply<T: Real>(&self, k: T) -> T {
        let l2 = lit::<T>(self.lambda * self.lambda);
        (T::one() - l2) * k + l2 / lit(self.d as f64)
    }
}

pub fn depolarize<T: Real>(k: T, ch: &DepolarizingChannel) -> T {
    ch.apply(k)
}

pub fn depolarize_matrix<T: Real>(k: &ExactKernelMatrix<T>, ch: &DepolarizingChannel) -> ExactKernelMatrix<T> {
    ExactKernelMatrix { entries: k.entries.map(|v| ch.apply(v)), same_set: k.same_set }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn spec(kind: EmbeddingKind, n: usize) -> EmbeddingSpec {
        EmbeddingSpec::new(kind, n).unwrap()
    }

    fn angle_oracle(x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(a, b)| ((a - b) / 2.0).cos().powi(2)).product()
    }

    fn close(a: Complex<f64>, re: f64, im: f64) -> bool {
        (a.re - re).abs() < 1e-12 && (a.im - im).abs() < 1e-12
    }

    #[test]
    fn embed_examples() {
        let s = embed(&spec(EmbeddingKind::Angle, 2), &[0.0, 0.0]).unwrap();
        assert!(close(s.amplitudes()[0], 1.0, 0.0));
        assert!(s.amplitudes()[1..].iter().all(|a| a.norm() < 1e-15));

        let s = embed(&spec(EmbeddingKind::Angle, 1), &[PI]).unwrap();
        assert!(close(s.amplitudes()[0], 0.0, 0.0) && close(s.amplitudes()[1], 0.0, -1.0));

        let s = embed(&spec(EmbeddingKind::Iqp, 2), &[0.0, 0.0]).unwrap();
        assert!(s.amplitudes().iter().all(|&a| close(a, 0.5, 0.0)));
    }

    #[test]
    fn qubit_zero_is_most_significant() {
        // Rx(π) on qubit 0 only: |10⟩ = index 2
        let s = embed(&spec(EmbeddingKind::Angle, 2), &[PI, 0.0]).unwrap();
        assert!(close(s.amplitudes()[2], 0.0, -1.0));
    }

    #[test]
    fn iqp_phase_by_hand() {
        // n=2, z=01 → s=(+1,−1): phase x₀ − x₁ − x₀x₁
        let x = [0.3, 0.7];
        let s = embed(&spec(EmbeddingKind::Iqp, 2), &x).unwrap();
        let phase: f64 = 0.3 - 0.7 - 0.21;
        assert!(close(s.amplitudes()[1], 0.5 * phase.cos(), 0.5 * phase.sin()));
    }

    #[test]
    fn kernel_examples() {
        let sp = spec(EmbeddingKind::Angle, 2);
        assert!((kernel_exact(&sp, &[0.0, 0.0], &[PI / 2.0, 0.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(kernel_exact(&sp, &[0.0, 0.0], &[PI, PI]).unwrap().abs() < 1e-12);
        for kind in [EmbeddingKind::Angle, EmbeddingKind::Iqp, EmbeddingKind::IqpThenAngle] {
            let v: f64 = kernel_exact(&spec(kind, 2), &[0.4, 1.9], &[0.4, 1.9]).unwrap();
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(kernel_exact(&sp, &[0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn matrix_examples() {
        let sp = spec(EmbeddingKind::Angle, 2);
        let one = kernel_matrix_exact(&sp, &[vec![0.2, 0.1]], &[vec![0.2, 0.1]]).unwrap();
        assert_eq!(one.get(0, 0), 1.0);
        let pts = vec![vec![0.0, 0.5], vec![1.0, 2.0], vec![3.0, 0.1]];
        let k = kernel_matrix_exact(&sp, &pts, &pts).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((k.get(i, j) - angle_oracle(&pts[i], &pts[j])).abs() < 1e-12);
            }
        }
        let empty: Vec<Vec<f64>> = vec![];
        assert!(kernel_matrix_exact(&sp, &empty, &pts).is_err());
    }

    #[test]
    fn depolarize_examples() {
        assert_eq!(depolarize(1.0, &DepolarizingChannel::new(0.0, 4).unwrap()), 1.0);
        let ch = DepolarizingChannel::new(0.05, 4).unwrap();
        assert!((depolarize(1.0f64, &ch) - 0.998125).abs() < 1e-15);
        assert!((depolarize(0.0f64, &ch) - 0.000625).abs() < 1e-15);
        assert!(DepolarizingChannel::new(1.5, 4).is_err());
        assert!(DepolarizingChannel::new(0.1, 3).is_err());
    }

    fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-2.0 * PI..2.0 * PI, n)
    }

    fn kind() -> impl Strategy<Value = EmbeddingKind> {
        prop_oneof![Just(EmbeddingKind::Angle), Just(EmbeddingKind::Iqp), Just(EmbeddingKind::IqpThenAngle)]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn angle_matches_analytic(x in point(3), y in point(3)) {
            let v = kernel_exact(&spec(EmbeddingKind::Angle, 3), &x, &y).unwrap();
            prop_assert!((v - angle_oracle(&x, &y)).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn normalized_symmetric_in_range(k in kind(), x in point(3), y in point(3)) {
            let sp = spec(k, 3);
            prop_assert!((embed(&sp, &x).unwrap().norm() - 1.0).abs() < 1e-12);
            let a = kernel_exact(&sp, &x, &y).unwrap();
            let b = kernel_exact(&sp, &y, &x).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn kernel_matrix_psd(k in kind(), pts in prop::collection::vec(point(2), 1..30)) {
            let m = kernel_matrix_exact(&spec(k, 2), &pts, &pts).unwrap();
            prop_assert!(m.to_sym().unwrap().min_eig() >= -1e-9);
        }

        #[test]
        fn depolarize_order_preserving(a in 0.0f64..1.0, b in 0.0f64..1.0, l in 0.0f64..1.0) {
            let ch = DepolarizingChannel::new(l, 4).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(depolarize(lo, &ch) <= depolarize(hi, &ch));
        }
    }
}
