//! Closed-form shot budgets for reliable classification.
//!
//! Every bound comes in a raw real form (`*_raw`) and a ceiled integer form.
//! Logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sampler::{circuit_factor, CircuitKind};
use crate::scalar::{lit, to_f64, Real};

/// Ceiling that treats values within `1e-9` (relative) of an integer as that integer.
pub fn ceil_snap(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r.max(0.0) as u64
    } else {
        x.ceil().max(0.0) as u64
    }
}

fn c<T: Real>(kind: CircuitKind) -> T {
    lit(circuit_factor(kind))
}

fn check_delta<T: Real>(delta: T) -> Result<()> {
    if !(delta > T::zero() && delta <= T::one()) {
        return invalid(format!("delta = {} outside (0, 1]", to_f64(delta)));
    }
    Ok(())
}

fn check_pos<T: Real>(name: &str, v: T) -> Result<()> {
    if !(v > T::zero()) || !v.is_finite() {
        return invalid(format!("{name} must be positive, got {}", to_f64(v)));
    }
    Ok(())
}

fn check_count(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return invalid(format!("{name} must be ≥ 1"));
    }
    Ok(())
}

/// `√(2 ln(1/δ))`.
pub fn kappa<T: Real>(delta: T) -> Result<T> {
    check_delta(delta)?;
    Ok((lit::<T>(2.0) * (T::one() / delta).ln()).max(T::zero()).sqrt())
}

pub fn n_reliable_point_raw<T: Real>(beta_norm2: T, gamma_x: T, kind: CircuitKind, delta: T) -> Result<T> {
    check_delta(delta)?;
    if gamma_x == T::zero() || !gamma_x.is_finite() {
        return Err(Error::OnBoundary);
    }
    let r = c::<T>(kind) * beta_norm2 / gamma_x.abs();
    Ok(lit::<T>(0.5) * r * r * (T::one() / delta).ln())
}

/// Shots after which a single point with margin `γ(x)` keeps its label with probability `1 − δ`.
pub fn n_reliable_point<T: Real>(beta_norm2: T, gamma_x: T, kind: CircuitKind, delta: T) -> Result<u64> {
    Ok(ceil_snap(to_f64(n_reliable_point_raw(beta_norm2, gamma_x, kind, delta)?)))
}

pub fn n_sg_raw<T: Real>(beta_norm2: T, gamma: T, kind: CircuitKind, m_eval: usize, delta: T) -> Result<T> {
    check_delta(delta)?;
    check_pos("gamma", gamma)?;
    check_count("M", m_eval)?;
    let cf = c::<T>(kind);
    Ok(cf * cf / (lit::<T>(2.0) * gamma * gamma) * beta_norm2 * beta_norm2 * (lit::<T>(m_eval as f64) / delta).ln())
}

/// Shots for the whole evaluation set of size `M` to respect the γ-margin error with probability `1 − δ`.
pub fn n_sg<T: Real>(beta_norm2: T, gamma: T, kind: CircuitKind, m_eval: usize, delta: T) -> Result<u64> {
    Ok(ceil_snap(to_f64(n_sg_raw(beta_norm2, gamma, kind, m_eval, delta)?)))
}

pub fn n_sg_worstcase_raw<T: Real>(m_sv: usize, cpar: T, gamma: T, kind: CircuitKind, m_eval: usize, delta: T) -> Result<T> {
    check_pos("C", cpar)?;
    let b2 = lit::<T>(m_sv as f64) * cpar * cpar;
    n_sg_raw(b2.sqrt(), gamma, kind, m_eval, delta)
}

/// `n_sg` with `‖β‖²` replaced by its worst case `m_sv·C²`.
pub fn n_sg_worstcase<T: Real>(m_sv: usize, cpar: T, gamma: T, kind: CircuitKind, m_eval: usize, delta: T) -> Result<u64> {
    Ok(ceil_snap(to_f64(n_sg_worstcase_raw(m_sv, cpar, gamma, kind, m_eval, delta)?)))
}

pub fn n_margin_risk_raw<T: Real>(beta_norm2: T, kind: CircuitKind, m: usize, delta: T) -> Result<T> {
    n_sg_raw(beta_norm2, T::one(), kind, m, delta)
}

/// Shots bounding the error by the unit-margin error over `m` points.
pub fn n_margin_risk<T: Real>(beta_norm2: T, kind: CircuitKind, m: usize, delta: T) -> Result<u64> {
    Ok(ceil_snap(to_f64(n_margin_risk_raw(beta_norm2, kind, m, delta)?)))
}

pub fn n_precise_raw<T: Real>(m_sv: usize, m_eval: usize, epsilon: T, kind: CircuitKind, delta: T) -> Result<T> {
    check_delta(delta)?;
    check_pos("epsilon", epsilon)?;
    check_count("m_sv", m_sv)?;
    check_count("M", m_eval)?;
    let cf = c::<T>(kind);
    let k = lit::<T>((m_sv * m_eval) as f64);
    Ok(cf * cf / (lit::<T>(2.0) * epsilon * epsilon) * k * (k / delta).ln())
}

/// Shots to estimate every needed kernel entry to precision `ε`.
pub fn n_precise<T: Real>(m_sv: usize, m_eval: usize, epsilon: T, kind: CircuitKind, delta: T) -> Result<u64> {
    Ok(ceil_snap(to_f64(n_precise_raw(m_sv, m_eval, epsilon, kind, delta)?)))
}

/// Confidence half-width `c·κ(δ)/(2√T)` of a kernel estimate from `T` shots.
pub fn conf_delta<T: Real>(shots: u64, delta: T, kind: CircuitKind) -> Result<T> {
    if shots == 0 {
        return invalid("T must be ≥ 1");
    }
    Ok(c::<T>(kind) * kappa(delta)? / (lit::<T>(2.0) * lit::<T>(shots as f64).sqrt()))
}

/// Smallest `T` whose confidence half-width is at most `delta_conf`.
pub fn shots_for_conf<T: Real>(delta_conf: T, delta: T, kind: CircuitKind) -> Result<u64> {
    check_pos("delta_conf", delta_conf)?;
    let r = c::<T>(kind) * kappa(delta)? / (lit::<T>(2.0) * delta_conf);
    Ok(ceil_snap(to_f64(r * r)).max(1))
}

/// Largest `γ` on the grid whose margin error equals the plain classification error.
///
/// `margins` are `yᵢ·g(xᵢ)`; the margin error at `γ` counts `margin < γ`.
pub fn gamma_star<T: Real>(margins: &[T], grid: &[T]) -> Option<T> {
    let base = margins.iter().filter(|&&m| m < T::zero()).count();
    grid.iter()
        .copied()
        .filter(|&g| g > T::zero() && margins.iter().filter(|&&m| m < g).count() == base)
        .fold(None, |best: Option<T>, g| Some(best.map_or(g, |b| b.max(g))))
}

/// Default `γ` grid: `0.01, 0.02, …, 2.0`.
pub fn default_gamma_grid<T: Real>() -> Vec<T> {
    (1..=200).map(|i| lit::<T>(i as f64 / 100.0)).collect()
}

/// Inputs for a full bound table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub beta_norm2: f64,
    pub gamma: f64,
    pub circuit: CircuitKind,
    pub dataset_size: usize,
    pub delta_target: f64,
    pub m_sv: usize,
    pub c: f64,
    pub epsilon: f64,
    pub train_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub name: String,
    pub raw: f64,
    pub shots: u64,
}

/// All bounds evaluated at one set of inputs.
pub fn bound_table(inp: &BoundInputs) -> Result<Vec<BoundRow>> {
    let k = inp.circuit;
    let d = inp.delta_target;
    let rows = [
        ("n_sg", n_sg_raw(inp.beta_norm2, inp.gamma, k, inp.dataset_size, d)?),
        ("n_sg_worstcase", n_sg_worstcase_raw(inp.m_sv, inp.c, inp.gamma, k, inp.dataset_size, d)?),
        ("n_margin_risk", n_margin_risk_raw(inp.beta_norm2, k, inp.train_size, d)?),
        ("n_precise", n_precise_raw(inp.m_sv.max(1), inp.dataset_size, inp.epsilon, k, d)?),
    ];
    Ok(rows.into_iter().map(|(n, raw)| BoundRow { name: n.to_string(), raw, shots: ceil_snap(raw) }).collect())
}
