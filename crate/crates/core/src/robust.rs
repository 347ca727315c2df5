//! Chance-constrained training programs that stay reliable under shot noise.

use serde::{Deserialize, Serialize};

use crate::bounds::{conf_delta, kappa, shots_for_conf};
use crate::conic::{ConeProgram, SymMatrix};
use crate::error::{invalid, Error, Result};
use crate::sampler::{sigma0, CircuitKind};
use crate::scalar::{lit, to_f64, Real};
use crate::svm::{HingeProblem, Label, ModelMeta, SvmModel, Variant};

pub use crate::svm::NormKind;

/// Extra margin added to a required ridge to absorb eigensolver error.
pub const CONVEXITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustParams {
    pub shots_classify: u64,
    pub delta1: f64,
    pub delta2: f64,
    pub norm: NormKind,
    pub kind: CircuitKind,
}

impl RobustParams {
    pub fn new(shots_classify: u64, delta1: f64, delta2: f64, norm: NormKind, kind: CircuitKind) -> Result<Self> {
        let p = Self { shots_classify, delta1, delta2, norm, kind };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots_classify == 0 {
            return invalid("shots_classify must be ≥ 1");
        }
        for (name, d) in [("delta1", self.delta1), ("delta2", self.delta2)] {
            if !(d > 0.0 && d < 1.0) {
                return invalid(format!("{name} = {d} outside (0, 1)"));
            }
        }
        if self.delta1 + self.delta2 >= 1.0 {
            return invalid("delta1 + delta2 must be < 1");
        }
        Ok(())
    }

    /// `σ₀·κ(δ₁/m)`, the per-row margin penalty coefficient.
    pub fn penalty<T: Real>(&self, m: usize) -> Result<T> {
        Ok(lit::<T>(sigma0(self.kind, self.shots_classify)?) * kappa(lit::<T>(self.delta1 / m as f64))?)
    }

    /// `σ₀·κ(δ₂)`, the ridge added to the quadratic term.
    pub fn ridge<T: Real>(&self) -> Result<T> {
        Ok(lit::<T>(sigma0(self.kind, self.shots_classify)?) * kappa(lit::<T>(self.delta2))?)
    }

    fn variant(&self, est: bool) -> Variant {
        match (self.norm, est) {
            (NormKind::L2, false) => Variant::Shofar,
            (NormKind::L2, true) => Variant::ShofarEst,
            (NormKind::L1, false) => Variant::L1Shofar,
            (NormKind::L1, true) => Variant::L1ShofarEst,
        }
    }
}

/// Confidence terms for programs built on an estimated kernel matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstParams {
    pub shots_train: u64,
    pub delta1p: f64,
    pub delta2p: f64,
    /// `c·κ(δ'₁/m)/(2√T)`.
    pub delta_conf: f64,
    /// `c·κ(δ'₂)/(2√T)`.
    pub ridge_conf: f64,
}

impl EstParams {
    pub fn from_shots(shots_train: u64, delta1p: f64, delta2p: f64, kind: CircuitKind, m: usize) -> Result<Self> {
        if m == 0 {
            return invalid("m must be ≥ 1");
        }
        Ok(Self {
            shots_train,
            delta1p,
            delta2p,
            delta_conf: conf_delta(shots_train, delta1p / m as f64, kind)?,
            ridge_conf: conf_delta(shots_train, delta2p, kind)?,
        })
    }

    /// Picks the smallest `T` whose margin interval is at most `target`.
    pub fn for_conf(target: f64, delta1p: f64, delta2p: f64, kind: CircuitKind, m: usize) -> Result<Self> {
        if m == 0 {
            return invalid("m must be ≥ 1");
        }
        let t = shots_for_conf(target, delta1p / m as f64, kind)?;
        Self::from_shots(t, delta1p, delta2p, kind, m)
    }

    /// Replaces the ridge with a larger one, recording the implied `δ'₂`.
    pub fn with_ridge(mut self, ridge_conf: f64, kind: CircuitKind) -> Self {
        if ridge_conf > self.ridge_conf {
            self.ridge_conf = ridge_conf;
            self.delta2p = delta_for_ridge(ridge_conf, self.shots_train, kind);
        }
        self
    }
}

/// Inverts `Δ = c·κ(δ)/(2√T)` for `δ`.
pub fn delta_for_ridge(ridge: f64, shots_train: u64, kind: CircuitKind) -> f64 {
    let k = 2.0 * (shots_train as f64).sqrt() * ridge / crate::sampler::circuit_factor(kind);
    (-0.5 * k * k).exp()
}

fn check_inputs<T: Real>(k: &SymMatrix<T>, y: &[Label], c: T) -> Result<()> {
    if k.dim() != y.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), got: k.dim() });
    }
    if !(c > T::zero()) {
        return invalid("C must be positive");
    }
    Ok(())
}

struct Built<T> {
    quad: SymMatrix<T>,
    pen: T,
}

fn shofar_terms<T: Real>(k: &SymMatrix<T>, p: &RobustParams) -> Result<Built<T>> {
    p.validate()?;
    Ok(Built { quad: k.add_ridge(p.ridge()?), pen: p.penalty(k.dim())? })
}

fn est_terms<T: Real>(k_hat: &SymMatrix<T>, p: &RobustParams, e: &EstParams) -> Result<Built<T>> {
    p.validate()?;
    let need = ensure_convexity(k_hat, p)?;
    if need > e.ridge_conf {
        return Err(Error::NotConvex { required: need });
    }
    let ridge = p.ridge::<T>()? + lit(e.ridge_conf);
    Ok(Built { quad: k_hat.add_ridge(ridge), pen: p.penalty::<T>(k_hat.dim())? + lit(e.delta_conf) })
}

fn problem<'a, T: Real>(k: &'a SymMatrix<T>, built: &'a Built<T>, y: &'a [Label], c: T, norm: NormKind) -> HingeProblem<'a, T> {
    HingeProblem { k_hinge: k, quad: &built.quad, y, c, pen: built.pen, norm: Some(norm) }
}

/// Program whose optimum upper-bounds the noisy training objective with probability `1 − δ₁ − δ₂`.
pub fn build_shofar<T: Real>(k_star: &SymMatrix<T>, y: &[Label], c: T, p: &RobustParams) -> Result<ConeProgram<T>> {
    check_inputs(k_star, y, c)?;
    let built = shofar_terms(k_star, p)?;
    Ok(problem(k_star, &built, y, c, p.norm).build()?.0)
}

/// As [`build_shofar`] but on an estimated, possibly indefinite, kernel matrix.
pub fn build_shofar_est<T: Real>(
    k_hat: &SymMatrix<T>,
    y: &[Label],
    c: T,
    p: &RobustParams,
    e: &EstParams,
) -> Result<ConeProgram<T>> {
    check_inputs(k_hat, y, c)?;
    let built = est_terms(k_hat, p, e)?;
    Ok(problem(k_hat, &built, y, c, p.norm).build()?.0)
}

/// Smallest extra ridge making `K̂ + (σ₀κ(δ₂) + ridge)·I` PSD; 0 when no extra ridge is needed.
pub fn ensure_convexity<T: Real>(k_hat: &SymMatrix<T>, p: &RobustParams) -> Result<f64> {
    let sampling: f64 = to_f64(p.ridge::<T>()?);
    Ok(required_ridge(to_f64(k_hat.min_eig()), sampling))
}

/// `max(0, −κ_min − sampling_ridge) + margin` when positive.
pub fn required_ridge(min_eig: f64, sampling_ridge: f64) -> f64 {
    let need = -min_eig - sampling_ridge;
    if need > 0.0 {
        need + CONVEXITY_MARGIN
    } else {
        0.0
    }
}

fn meta(p: &RobustParams, e: Option<&EstParams>) -> ModelMeta {
    ModelMeta {
        shots_classify: Some(p.shots_classify),
        delta1: Some(p.delta1),
        delta2: Some(p.delta2),
        shots_train: e.map(|e| e.shots_train),
        delta1p: e.map(|e| e.delta1p),
        delta2p: e.map(|e| e.delta2p),
        ..ModelMeta::default()
    }
}

/// Trains on the exact kernel matrix.
pub fn train_shofar<T: Real>(k_star: &SymMatrix<T>, y: &[Label], c: T, p: &RobustParams) -> Result<SvmModel<T>> {
    check_inputs(k_star, y, c)?;
    let built = shofar_terms(k_star, p)?;
    Ok(problem(k_star, &built, y, c, p.norm).solve(p.variant(false))?.with_meta(meta(p, None)))
}

/// Trains on an estimated kernel matrix.
pub fn train_shofar_est<T: Real>(
    k_hat: &SymMatrix<T>,
    y: &[Label],
    c: T,
    p: &RobustParams,
    e: &EstParams,
) -> Result<SvmModel<T>> {
    check_inputs(k_hat, y, c)?;
    let built = est_terms(k_hat, p, e)?;
    Ok(problem(k_hat, &built, y, c, p.norm).solve(p.variant(true))?.with_meta(meta(p, Some(e))))
}

/// Dispatches on whether confidence terms are supplied.
pub fn train_robust<T: Real>(
    k: &SymMatrix<T>,
    y: &[Label],
    c: T,
    p: &RobustParams,
    est: Option<&EstParams>,
) -> Result<SvmModel<T>> {
    match est {
        None => train_shofar(k, y, c, p),
        Some(e) => train_shofar_est(k, y, c, p, e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::Matrix;
    use crate::svm::{decision, solve_primal};
    use proptest::prelude::*;
    use CircuitKind::Gates;

    fn params(n: u64, norm: NormKind) -> RobustParams {
        RobustParams::new(n, 0.01, 0.01, norm, Gates).unwrap()
    }

    fn toy() -> (SymMatrix<f64>, Vec<Label>) {
        let pts: [(f64, f64); 6] = [(0.1, 0.3), (0.4, 0.2), (2.5, 2.9), (2.8, 2.4), (0.3, 2.7), (2.6, 0.5)];
        let k = SymMatrix::new(Matrix::from_fn(6, 6, |i, j| {
            let (a, b) = (pts[i], pts[j]);
            (((a.0 - b.0) / 2.0).cos() * ((a.1 - b.1) / 2.0).cos()).powi(2)
        }))
        .unwrap();
        (k, vec![1, 1, 1, 1, -1, -1])
    }

    #[test]
    fn coefficient_examples() {
        let p = params(256, NormKind::L2);
        let pen: f64 = p.penalty(40).unwrap();
        assert!((pen - (2.0 * 4000f64.ln()).sqrt() / 32.0).abs() < 1e-12);
        assert!((pen - 0.12728).abs() < 1e-5);
        let ridge: f64 = p.ridge().unwrap();
        assert!((ridge - (2.0 * 100f64.ln()).sqrt() / 32.0).abs() < 1e-12);
        assert!((ridge - 0.09484).abs() < 1e-5);
    }

    #[test]
    fn params_validation() {
        assert!(RobustParams::new(0, 0.01, 0.01, NormKind::L2, Gates).is_err());
        assert!(RobustParams::new(10, 0.6, 0.5, NormKind::L2, Gates).is_err());
        assert!(RobustParams::new(10, 0.0, 0.5, NormKind::L2, Gates).is_err());
    }

    #[test]
    fn est_params_examples() {
        let e = EstParams::for_conf(0.1, 0.01, 0.01, Gates, 40).unwrap();
        assert_eq!(e.shots_train, 415);
        let want = (2.0 * 4000f64.ln()).sqrt() / (2.0 * 415f64.sqrt());
        assert!((e.delta_conf - want).abs() < 1e-12);
        assert!(e.delta_conf <= 0.1);
        let want_r = (2.0 * 100f64.ln()).sqrt() / (2.0 * 415f64.sqrt());
        assert!((e.ridge_conf - want_r).abs() < 1e-12);
        let bumped = e.with_ridge(0.2, Gates);
        assert!((conf_delta(415, bumped.delta2p, Gates).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn convexity_examples() {
        assert_eq!(required_ridge(0.3, 0.02), 0.0);
        assert!((required_ridge(-0.05, 0.02) - (0.03 + CONVEXITY_MARGIN)).abs() < 1e-15);
        let p = params(256, NormKind::L2);
        assert_eq!(ensure_convexity(&SymMatrix::<f64>::identity(3), &p).unwrap(), 0.0);
        let k = SymMatrix::diag(&[1.0, -0.5]);
        let r = ensure_convexity(&k, &p).unwrap();
        let shifted = k.add_ridge(p.ridge::<f64>().unwrap() + r);
        assert!(shifted.min_eig() >= -1e-9);
    }

    #[test]
    fn est_rejects_nonconvex() {
        let (k, y) = toy();
        let bad = k.add_ridge(-5.0);
        let p = params(256, NormKind::L2);
        let e = EstParams::from_shots(415, 0.01, 0.01, Gates, 6).unwrap();
        match build_shofar_est(&bad, &y, 10.0, &p, &e) {
            Err(Error::NotConvex { required }) => assert!(required > 4.0),
            other => panic!("expected NotConvex, got {other:?}"),
        }
    }

    #[test]
    fn large_n_matches_nominal() {
        let (k, y) = toy();
        let nominal = solve_primal(&k, &y, 10.0).unwrap();
        for norm in [NormKind::L2, NormKind::L1] {
            let p = RobustParams::new(1_000_000_000_000, 0.01, 0.01, norm, Gates).unwrap();
            assert!(p.penalty::<f64>(6).unwrap() < 1e-5 && p.ridge::<f64>().unwrap() < 1e-5);
            let rob = train_shofar(&k, &y, 10.0, &p).unwrap();
            for (a, b) in rob.beta.iter().zip(&nominal.beta) {
                assert!((a - b).abs() < 1e-3, "{norm:?}: {:?} vs {:?}", rob.beta, nominal.beta);
            }
            assert!((rob.b - nominal.b).abs() < 1e-3);
        }
    }

    #[test]
    fn est_coincides_with_exact_in_limit() {
        let (k, y) = toy();
        let p = params(64, NormKind::L2);
        let e = EstParams::from_shots(u64::MAX / 4, 0.01, 0.01, Gates, 6).unwrap();
        let a = build_shofar(&k, &y, 10.0, &p).unwrap();
        let b = build_shofar_est(&k, &y, 10.0, &p, &e).unwrap();
        assert_eq!(a.blocks().len(), b.blocks().len());
        for (x, z) in a.blocks().iter().zip(b.blocks()) {
            assert!(x.a.sub(&z.a).max_abs() < 1e-9);
        }
    }

    #[test]
    fn l2_objective_below_l1() {
        let (k, y) = toy();
        for n in [16, 64, 256] {
            let l2 = train_shofar(&k, &y, 10.0, &params(n, NormKind::L2)).unwrap();
            let l1 = train_shofar(&k, &y, 10.0, &params(n, NormKind::L1)).unwrap();
            assert!(l2.objective <= l1.objective + 1e-6, "N={n}: {} > {}", l2.objective, l1.objective);
            assert_eq!(l1.variant, Variant::L1Shofar);
        }
    }

    #[test]
    fn robust_objective_dominates_nominal() {
        let (k, y) = toy();
        let nominal = solve_primal(&k, &y, 10.0).unwrap();
        let rob = train_shofar(&k, &y, 10.0, &params(64, NormKind::L2)).unwrap();
        assert!(rob.objective >= nominal.objective - 1e-6);
        let kv: Vec<f64> = k.matrix().row(0).to_vec();
        assert!(decision(&rob, &kv).unwrap().is_finite());
        assert_eq!(rob.meta.shots_classify, Some(64));
    }

    #[test]
    fn coefficients_monotone() {
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for n in [1u64, 4, 16, 64, 256, 1024] {
            let p = params(n, NormKind::L2);
            let cur: (f64, f64) = (p.penalty(40).unwrap(), p.ridge().unwrap());
            assert!(cur.0 < prev.0 && cur.1 < prev.1);
            prev = cur;
        }
        let loose = RobustParams::new(100, 0.1, 0.1, NormKind::L2, Gates).unwrap();
        let tight = RobustParams::new(100, 0.001, 0.001, NormKind::L2, Gates).unwrap();
        assert!(tight.penalty::<f64>(40).unwrap() > loose.penalty::<f64>(40).unwrap());
        assert!(tight.ridge::<f64>().unwrap() > loose.ridge::<f64>().unwrap());
    }

    #[test]
    fn union_bound_uses_delta_over_m() {
        let p = params(100, NormKind::L2);
        let want = 0.05 * (2.0 * (40.0f64 / 0.01).ln()).sqrt();
        assert!((p.penalty::<f64>(40).unwrap() - want).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn l1_feasible_is_l2_feasible(
            bp in prop::collection::vec(0.0f64..2.0, 6),
            bn in prop::collection::vec(0.0f64..2.0, 6),
            b in -2.0f64..2.0,
            slack in 0.0f64..0.5,
        ) {
            let (k, y) = toy();
            let p1 = params(32, NormKind::L1);
            let p2 = params(32, NormKind::L2);
            let prog1 = build_shofar(&k, &y, 10.0, &p1).unwrap();
            let prog2 = build_shofar(&k, &y, 10.0, &p2).unwrap();
            let pen: f64 = p1.penalty(6).unwrap();
            let beta: Vec<f64> = bp.iter().zip(&bn).map(|(a, c)| a - c).collect();
            let r: f64 = bp.iter().chain(&bn).sum::<f64>() + slack;
            let kb = k.matrix().matvec(&beta);
            let xi: Vec<f64> = (0..6).map(|i| (1.0 + pen * r - f64::from(y[i]) * (kb[i] + b)).max(0.0) + slack).collect();
            let t = 0.5 * k.add_ridge(p1.ridge().unwrap()).quad_form(&beta) + slack;
            let mut x1: Vec<f64> = bp.iter().chain(&bn).copied().collect();
            x1.push(b);
            x1.extend(&xi);
            x1.push(t);
            x1.push(r);
            prop_assert!(prog1.max_violation(&x1) <= 1e-9);
            let mut x2 = beta.clone();
            x2.push(b);
            x2.extend(&xi);
            x2.push(t);
            x2.push(r);
            prop_assert!(prog2.max_violation(&x2) <= 1e-9);
        }
    }
}
