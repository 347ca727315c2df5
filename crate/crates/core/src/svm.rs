//! Primal kernel SVM training and evaluation metrics.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conic::{self, quad_epigraph, ConeKind, ConeProgram, Lu, Matrix, SolveStatus, SymMatrix};
use crate::error::{invalid, Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Class label, `−1` or `+1`.
pub type Label = i8;

pub fn check_labels(y: &[Label]) -> Result<()> {
    if let Some(bad) = y.iter().find(|&&v| v != 1 && v != -1) {
        return invalid(format!("labels must be ±1, found {bad}"));
    }
    Ok(())
}

/// Which training program produced a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Nominal,
    Shofar,
    ShofarEst,
    L1Shofar,
    L1ShofarEst,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::Nominal, Variant::Shofar, Variant::ShofarEst, Variant::L1Shofar, Variant::L1ShofarEst];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Nominal => "nominal",
            Variant::Shofar => "shofar",
            Variant::ShofarEst => "shofar-est",
            Variant::L1Shofar => "l1-shofar",
            Variant::L1ShofarEst => "l1-shofar-est",
        }
    }

    /// Trained on a shot-sampled kernel matrix.
    pub fn is_est(self) -> bool {
        matches!(self, Variant::ShofarEst | Variant::L1ShofarEst)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| Error::InvalidInput(format!("unknown variant '{s}'")))
    }
}

/// Training context recorded alongside a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub shots_classify: Option<u64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub shots_train: Option<u64>,
    pub delta1p: Option<f64>,
    pub delta2p: Option<f64>,
    pub embedding: Option<String>,
    pub train_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel<T> {
    pub beta: Vec<T>,
    pub b: T,
    pub c: T,
    pub variant: Variant,
    pub objective: T,
    pub support_indices: Vec<usize>,
    pub m_sv: usize,
    pub beta_norm2: T,
    pub beta_norm1: T,
    pub meta: ModelMeta,
}

impl<T: Real> SvmModel<T> {
    pub fn new(beta: Vec<T>, b: T, c: T, variant: Variant, objective: T) -> Self {
        let thr = support_threshold(&beta);
        let support_indices: Vec<usize> = (0..beta.len()).filter(|&i| beta[i].abs() > thr).collect();
        Self {
            m_sv: support_indices.len(),
            support_indices,
            beta_norm2: conic::norm2(&beta),
            beta_norm1: beta.iter().map(|v| v.abs()).sum(),
            beta,
            b,
            c,
            variant,
            objective,
            meta: ModelMeta::default(),
        }
    }

    pub fn m(&self) -> usize {
        self.beta.len()
    }

    pub fn with_meta(mut self, meta: ModelMeta) -> Self {
        self.meta = meta;
        self
    }

    /// Versioned plain-text record.
    pub fn to_text(&self) -> String {
        let mut s = String::from("qkc-svm-model v1\n");
        let _ = writeln!(s, "variant {}", self.variant.name());
        let _ = writeln!(s, "m {}", self.m());
        let _ = writeln!(s, "c {}", self.c);
        let _ = writeln!(s, "b {}", self.b);
        let _ = writeln!(s, "objective {}", self.objective);
        let meta = serde_json::to_string(&self.meta).expect("meta serializes");
        let _ = writeln!(s, "meta {meta}");
        let beta: Vec<String> = self.beta.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "beta {}", beta.join(" "));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        match lines.next() {
            Some((_, "qkc-svm-model v1")) => {}
            _ => return Err(perr(1, "expected header 'qkc-svm-model v1'".into())),
        }
        let mut field = |key: &str| -> Result<(usize, String)> {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, format!("missing '{key}'")))?;
            let rest = l
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix(' ').or(if r.is_empty() { Some("") } else { None }))
                .ok_or_else(|| perr(ln, format!("expected '{key}'")))?;
            Ok((ln, rest.to_string()))
        };
        let num = |ln: usize, t: &str| T::from_str_radix(t, 10).map_err(|_| perr(ln, format!("bad number '{t}'")));
        let (ln, v) = field("variant")?;
        let variant: Variant = v.parse().map_err(|e: Error| perr(ln, e.to_string()))?;
        let (ln, m) = field("m")?;
        let m: usize = m.parse().map_err(|_| perr(ln, "bad m".into()))?;
        let (ln, c) = field("c")?;
        let c = num(ln, &c)?;
        let (ln, b) = field("b")?;
        let b = num(ln, &b)?;
        let (ln, o) = field("objective")?;
        let objective = num(ln, &o)?;
        let (ln, meta) = field("meta")?;
        let meta: ModelMeta = serde_json::from_str(&meta).map_err(|e| perr(ln, e.to_string()))?;
        let (ln, beta) = field("beta")?;
        let beta = beta.split_whitespace().map(|t| num(ln, t)).collect::<Result<Vec<T>>>()?;
        if beta.len() != m {
            return Err(perr(ln, format!("beta has {} entries, expected {m}", beta.len())));
        }
        Ok(Self::new(beta, b, c, variant, objective).with_meta(meta))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// SHA-256 over the training points and labels, hex encoded.
/// Coefficients at or below this magnitude are not support vectors.
pub fn support_threshold<T: Real>(beta: &[T]) -> T {
    let inf = beta.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    lit::<T>(1e-6) * inf.max(T::one())
}

pub fn training_hash(xs: &[Vec<f64>], y: &[Label]) -> String {
    let mut h = Sha256::new();
    for (x, &l) in xs.iter().zip(y) {
        for v in x {
            h.update(v.to_le_bytes());
        }
        h.update([l as u8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Optional `r ≥ ‖β‖` term in the hinge rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    L2,
    L1,
}

/// Variable layout of a hinge-loss program: `(β⁺, [β⁻], b, ξ, t, [r])`.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub m: usize,
    pub norm: Option<NormKind>,
}

impl Layout {
    fn split(&self) -> bool {
        self.norm == Some(NormKind::L1)
    }
    pub fn b(&self) -> usize {
        if self.split() {
            2 * self.m
        } else {
            self.m
        }
    }
    pub fn xi(&self) -> std::ops::Range<usize> {
        self.b() + 1..self.b() + 1 + self.m
    }
    pub fn t(&self) -> usize {
        self.b() + 1 + self.m
    }
    pub fn r(&self) -> Option<usize> {
        self.norm.map(|_| self.t() + 1)
    }
    pub fn n_vars(&self) -> usize {
        self.t() + 1 + usize::from(self.norm.is_some())
    }

    pub fn beta_of<T: Real>(&self, x: &[T]) -> Vec<T> {
        (0..self.m).map(|i| if self.split() { x[i] - x[self.m + i] } else { x[i] }).collect()
    }
}

/// `min C·Σξ + t` with hinge rows `ξᵢ ≥ 1 + pen·r − yᵢ(Kᵢβ + b)`, `r ≥ ‖β‖` and `½βᵀQβ ≤ t`.
#[derive(Debug, Clone)]
pub(crate) struct HingeProblem<'a, T> {
    pub k_hinge: &'a SymMatrix<T>,
    pub quad: &'a SymMatrix<T>,
    pub y: &'a [Label],
    pub c: T,
    pub pen: T,
    pub norm: Option<NormKind>,
}

impl<T: Real> HingeProblem<'_, T> {
    pub fn build(&self) -> Result<(ConeProgram<T>, Layout)> {
        let (y, c, pen, norm) = (self.y, self.c, self.pen, self.norm);
        let m = y.len();
        check_labels(y)?;
        if self.k_hinge.dim() != m || self.quad.dim() != m {
            return Err(Error::DimensionMismatch { expected: m, got: self.k_hinge.dim().min(self.quad.dim()) });
        }
        if m == 0 {
            return invalid("empty training set");
        }
        if !(c > T::zero()) {
            return invalid("C must be positive");
        }
        let lay = Layout { m, norm };
        let n = lay.n_vars();
        let mut obj = vec![T::zero(); n];
        lay.xi().for_each(|i| obj[i] = c);
        obj[lay.t()] = T::one();
        let mut p = ConeProgram::new(obj);

        // ξ ≥ 0 and hinge rows share one NonNeg block
        let mut a = Matrix::zeros(2 * m, n);
        let mut b = vec![T::zero(); 2 * m];
        for i in 0..m {
            a[(i, lay.xi().start + i)] = T::one();
            let row = m + i;
            let yi: T = lit(f64::from(y[i]));
            a[(row, lay.xi().start + i)] = T::one();
            for j in 0..m {
                let v = yi * self.k_hinge.get(i, j);
                a[(row, j)] = v;
                if lay.split() {
                    a[(row, m + j)] = -v;
                }
            }
            a[(row, lay.b())] = yi;
            if let Some(r) = lay.r() {
                a[(row, r)] = -pen;
            }
            b[row] = -T::one();
        }
        p.add(ConeKind::NonNeg, a, b)?;

        match (norm, lay.r()) {
            (Some(NormKind::L2), Some(r)) => {
                let mut a = Matrix::zeros(m + 1, n);
                a[(0, r)] = T::one();
                for j in 0..m {
                    a[(j + 1, j)] = T::one();
                }
                p.add(ConeKind::Soc, a, vec![T::zero(); m + 1])?;
            }
            (Some(NormKind::L1), Some(r)) => {
                let mut a = Matrix::zeros(2 * m + 1, n);
                for j in 0..2 * m {
                    a[(j, j)] = T::one();
                    a[(2 * m, j)] = -T::one();
                }
                a[(2 * m, r)] = T::one();
                p.add(ConeKind::NonNeg, a, vec![T::zero(); 2 * m + 1])?;
            }
            _ => {}
        }

        let epi = quad_epigraph(self.quad, lit(conic::DEFAULT_CLIP))?;
        let idx: Vec<usize> = (0..m).collect();
        let mut blk = epi.block(&idx, lay.t(), n)?;
        if lay.split() {
            for i in 0..blk.a.rows() {
                for j in 0..m {
                    blk.a[(i, m + j)] = -blk.a[(i, j)];
                }
            }
        }
        p.push(blk)?;
        Ok((p, lay))
    }

    /// Zeroes solver-noise coefficients, then re-optimizes the intercept.
    fn truncated(&self, mut beta: Vec<T>, b_fallback: T) -> (Vec<T>, T) {
        let thr = support_threshold(&beta);
        beta.iter_mut().filter(|v| v.abs() <= thr).for_each(|v| *v = T::zero());
        let f = self.k_hinge.matrix().matvec(&beta);
        let b = polish_intercept(&f, self.y, self.offset(&beta)).unwrap_or(b_fallback);
        (beta, b)
    }

    /// Hinge offset `1 + pen·‖β‖` at a given β.
    fn offset(&self, beta: &[T]) -> T {
        let nrm = match self.norm {
            Some(NormKind::L2) => conic::norm2(beta),
            Some(NormKind::L1) => beta.iter().map(|v| v.abs()).sum(),
            None => T::zero(),
        };
        T::one() + self.pen * nrm
    }

    /// Objective `C·Σ max(0, a − yᵢ(Kᵢβ + b)) + ½βᵀQβ` evaluated directly.
    pub fn objective(&self, beta: &[T], b: T) -> T {
        let f = self.k_hinge.matrix().matvec(beta);
        self.c * hinge_sum(&f, self.y, self.offset(beta), b) + lit::<T>(0.5) * self.quad.quad_form(beta)
    }

    pub fn solve(&self, variant: Variant) -> Result<SvmModel<T>> {
        let (p, lay) = self.build()?;
        let sol = conic::solve(&p, lit(solver_tol::<T>()), conic::DEFAULT_MAX_ITER)?;
        if !matches!(sol.status, SolveStatus::Optimal | SolveStatus::NearOptimal) {
            return Err(Error::Solver(format!(
                "{:?} after {} iterations (pres {:e}, dres {:e}, gap {:e})",
                sol.status,
                sol.iterations,
                to_f64(sol.primal_residual),
                to_f64(sol.dual_residual),
                to_f64(sol.gap)
            )));
        }
        let primal = self.truncated(lay.beta_of(&sol.x), sol.x[lay.b()]);
        let (beta, b) = match self.norm {
            None => self.best_nominal(primal, &sol.dual[self.y.len()..2 * self.y.len()]),
            Some(_) => primal,
        };
        let obj = self.objective(&beta, b);
        Ok(SvmModel::new(beta, b, self.c, variant, obj))
    }

    /// Picks among the primal iterate, the dual representation `y∘α` and its exact active-set polish.
    fn best_nominal(&self, primal: (Vec<T>, T), alpha: &[T]) -> (Vec<T>, T) {
        let slack = lit::<T>(0.1 * solver_tol::<T>());
        let no_worse = |cand: &(Vec<T>, T), base: &(Vec<T>, T)| {
            let jb = self.objective(&base.0, base.1);
            self.objective(&cand.0, cand.1) <= jb + slack * jb.abs().max(T::one())
        };
        if let Some((bp, bb)) = polish_dual(self.quad, self.y, self.c, alpha) {
            let polished = self.truncated(bp, bb);
            if no_worse(&polished, &primal) {
                return polished;
            }
        }
        let ya: Vec<T> = self.y.iter().zip(alpha).map(|(&yi, &a)| lit::<T>(f64::from(yi)) * a).collect();
        let dual = self.truncated(ya.clone(), primal.1);
        if no_worse(&dual, &primal) {
            return dual;
        }
        // keep the primal but take its arbitrary null(K) part from the dual
        let mut beta = primal.0;
        align_flat_directions(self.quad, &mut beta, &ya, slack);
        self.truncated(beta, primal.1)
    }
}

/// Exact optimum of the SVM dual on the active set suggested by approximate multipliers `α̃`.
///
/// Points split into `α = 0`, `α = C` and free; the free multipliers and `b` solve
/// `Q_FF α_F + y_F b = 1 − C·Q_FU 1`, `y_Fᵀα_F = −C·y_Uᵀ1` with `Q = (yyᵀ)∘K`. Returns `None` when
/// the system is singular or the result violates the optimality conditions.
fn polish_dual<T: Real>(k: &SymMatrix<T>, y: &[Label], c: T, alpha: &[T]) -> Option<(Vec<T>, T)> {
    let m = y.len();
    let eps = lit::<T>(1e-6) * c;
    let yf = |i: usize| lit::<T>(f64::from(y[i]));
    let free: Vec<usize> = (0..m).filter(|&i| alpha[i] > eps && alpha[i] < c - eps).collect();
    let upper: Vec<usize> = (0..m).filter(|&i| alpha[i] >= c - eps).collect();
    let mut a = vec![T::zero(); m];
    upper.iter().for_each(|&i| a[i] = c);
    let mut b = T::zero();
    if !free.is_empty() {
        let nf = free.len();
        let mut sys = Matrix::zeros(nf + 1, nf + 1);
        let mut rhs = vec![T::zero(); nf + 1];
        for (r, &i) in free.iter().enumerate() {
            for (s, &j) in free.iter().enumerate() {
                sys[(r, s)] = yf(i) * yf(j) * k.get(i, j);
            }
            sys[(r, nf)] = yf(i);
            sys[(nf, r)] = yf(i);
            rhs[r] = T::one() - upper.iter().fold(T::zero(), |acc, &j| acc + yf(i) * yf(j) * k.get(i, j) * c);
        }
        rhs[nf] = -upper.iter().fold(T::zero(), |acc, &j| acc + yf(j) * c);
        let sol = Lu::factor(sys).ok()?.solve(&rhs);
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        for (r, &i) in free.iter().enumerate() {
            a[i] = sol[r];
        }
        b = sol[nf];
    }
    let beta: Vec<T> = (0..m).map(|i| yf(i) * a[i]).collect();
    let f = k.matrix().matvec(&beta);
    let scale = f.iter().fold(T::one(), |acc, &v| acc.max(v.abs()));
    let tol = lit::<T>(1e3) * T::epsilon() * scale * lit(m as f64);
    if free.is_empty() {
        b = polish_intercept(&f, y, T::one())?;
    }
    let ok = (0..m).all(|i| {
        let mg = yf(i) * (f[i] + b);
        if a[i] < -tol || a[i] > c + tol {
            return false;
        }
        if a[i] <= T::zero() {
            mg >= T::one() - tol
        } else if a[i] >= c {
            mg <= T::one() + tol
        } else {
            (mg - T::one()).abs() <= tol
        }
    });
    let balance = (0..m).fold(T::zero(), |acc, i| acc + yf(i) * a[i]);
    (ok && balance.abs() <= tol * c.max(T::one())).then_some((beta, b))
}

/// Moves `beta` to `target` along every eigendirection of `K` where that barely changes `Kβ`.
///
/// With `target = y∘α` this removes the arbitrary `null(K)` part of a primal solution.
fn align_flat_directions<T: Real>(k: &SymMatrix<T>, beta: &mut [T], target: &[T], tol: T) {
    let eig = k.eigh();
    let n = beta.len();
    let kb = k.matrix().matvec(beta);
    let scale = kb.iter().fold(T::one(), |a, &v| a.max(v.abs()));
    for (col, &lam) in eig.values.iter().enumerate() {
        let coef = (0..n).fold(T::zero(), |acc, i| acc + eig.vectors[(i, col)] * (target[i] - beta[i]));
        if lam.abs() * coef.abs() > tol * scale {
            continue;
        }
        for (i, b) in beta.iter_mut().enumerate() {
            *b = *b + coef * eig.vectors[(i, col)];
        }
    }
}

fn hinge_sum<T: Real>(f: &[T], y: &[Label], a: T, b: T) -> T {
    f.iter().zip(y).map(|(&fi, &yi)| (a - lit::<T>(f64::from(yi)) * (fi + b)).max(T::zero())).sum()
}

/// Midpoint of `argmin_b Σ max(0, a − yᵢ(fᵢ + b))`; `None` when only one class is present.
///
/// The sum is piecewise linear with integer slopes, so the minimizer set is a kink or a flat segment.
pub(crate) fn polish_intercept<T: Real>(f: &[T], y: &[Label], a: T) -> Option<T> {
    if !(y.contains(&1) && y.contains(&-1)) {
        return None;
    }
    // positive labels: decreasing hinge with kink a − f; negative: increasing with kink −a − f
    let mut kinks: Vec<T> = f.iter().zip(y).map(|(&fi, &yi)| if yi == 1 { a - fi } else { -a - fi }).collect();
    kinks.sort_by(|p, q| p.partial_cmp(q).expect("finite kinks"));
    kinks.dedup();
    let slope = |b: T| -> i64 {
        f.iter()
            .zip(y)
            .map(|(&fi, &yi)| {
                if yi == 1 {
                    -i64::from(b < a - fi)
                } else {
                    i64::from(b > -a - fi)
                }
            })
            .sum()
    };
    let half = lit::<T>(0.5);
    for w in kinks.windows(2) {
        let s = slope((w[0] + w[1]) * half);
        if s == 0 {
            return Some((w[0] + w[1]) * half);
        }
        if s > 0 {
            return Some(w[0]);
        }
    }
    kinks.last().copied()
}

/// Solver tolerance suited to the scalar precision.
pub fn solver_tol<T: Real>() -> f64 {
    if T::eps_f64() < 1e-10 {
        conic::DEFAULT_TOL
    } else {
        1e-4
    }
}

fn not_psd_hint(e: Error) -> Error {
    match e {
        Error::NotPsd { min_eig, .. } => Error::InvalidInput(format!(
            "kernel matrix is not PSD (min eigenvalue {min_eig:e}); apply spectral_shift first"
        )),
        other => other,
    }
}

/// Trains the nominal soft-margin SVM on a PSD kernel matrix.
pub fn solve_primal<T: Real>(k: &SymMatrix<T>, y: &[Label], c: T) -> Result<SvmModel<T>> {
    let prob = HingeProblem { k_hinge: k, quad: k, y, c, pen: T::zero(), norm: None };
    prob.build().map_err(not_psd_hint)?;
    prob.solve(Variant::Nominal)
}

/// `C·Σ max(1 − yᵢ(Kᵢβ + b), 0) + ½βᵀKβ`.
pub fn primal_objective<T: Real>(k: &SymMatrix<T>, y: &[Label], c: T, beta: &[T], b: T) -> T {
    let kb = k.matrix().matvec(beta);
    let hinge: T = y
        .iter()
        .zip(&kb)
        .map(|(&yi, &v)| (T::one() - lit::<T>(f64::from(yi)) * (v + b)).max(T::zero()))
        .sum();
    c * hinge + lit::<T>(0.5) * conic::dot(beta, &kb)
}

/// `g(x) = Σⱼ βⱼ kⱼ + b`.
pub fn decision<T: Real>(model: &SvmModel<T>, kvec: &[T]) -> Result<T> {
    if kvec.len() != model.m() {
        return Err(Error::DimensionMismatch { expected: model.m(), got: kvec.len() });
    }
    Ok(conic::dot(&model.beta, kvec) + model.b)
}

/// Sign of the decision value, with `0 ↦ +1`.
pub fn classify<T: Real>(model: &SvmModel<T>, kvec: &[T]) -> Result<Label> {
    Ok(sign(decision(model, kvec)?))
}

pub fn sign<T: Real>(v: T) -> Label {
    if v < T::zero() {
        -1
    } else {
        1
    }
}

/// Decision values for every row of an `M×m` kernel matrix.
pub fn decisions<T: Real>(model: &SvmModel<T>, k_eval: &Matrix<T>) -> Result<Vec<T>> {
    if k_eval.cols() != model.m() {
        return Err(Error::DimensionMismatch { expected: model.m(), got: k_eval.cols() });
    }
    Ok(k_eval.matvec(&model.beta).into_iter().map(|v| v + model.b).collect())
}

pub fn predict<T: Real>(model: &SvmModel<T>, k_eval: &Matrix<T>) -> Result<Vec<Label>> {
    Ok(decisions(model, k_eval)?.into_iter().map(sign).collect())
}

/// Margins `yᵢ·g(xᵢ)`.
pub fn margins<T: Real>(model: &SvmModel<T>, k_eval: &Matrix<T>, y: &[Label]) -> Result<Vec<T>> {
    let g = decisions(model, k_eval)?;
    if g.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: g.len(), got: y.len() });
    }
    Ok(g.into_iter().zip(y).map(|(v, &l)| v * lit(f64::from(l))).collect())
}

/// Fraction of points with margin strictly below `γ`.
pub fn gamma_margin_error<T: Real>(model: &SvmModel<T>, k_eval: &Matrix<T>, y: &[Label], gamma: T) -> Result<T> {
    if gamma < T::zero() {
        return invalid("gamma must be ≥ 0");
    }
    let mg = margins(model, k_eval, y)?;
    if mg.is_empty() {
        return invalid("empty evaluation set");
    }
    let bad = if gamma == T::zero() {
        // at γ = 0 a zero margin classifies as +1, matching `classify`
        mg.iter().zip(y).filter(|(&v, &l)| sign(v * lit(f64::from(l))) != l).count()
    } else {
        mg.iter().filter(|&&v| v < gamma).count()
    };
    Ok(lit::<T>(bad as f64) / lit(mg.len() as f64))
}

pub fn accuracy(pred: &[Label], y: &[Label]) -> Result<f64> {
    if pred.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), got: pred.len() });
    }
    if y.is_empty() {
        return invalid("empty label vector");
    }
    Ok(pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub gamma: f64,
    pub gamma_margin_error: f64,
}

pub fn evaluate<T: Real>(model: &SvmModel<T>, k_eval: &Matrix<T>, y: &[Label], gamma: T) -> Result<EvalMetrics> {
    let acc = accuracy(&predict(model, k_eval)?, y)?;
    let err = gamma_margin_error(model, k_eval, y, gamma)?;
    Ok(EvalMetrics { accuracy: acc, gamma: to_f64(gamma), gamma_margin_error: to_f64(err) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(beta: Vec<f64>, b: f64) -> SvmModel<f64> {
        SvmModel::new(beta, b, 1.0, Variant::Nominal, 0.0)
    }

    #[test]
    fn two_point_problem() {
        let k = SymMatrix::<f64>::identity(2);
        for c in [10.0, 1e6] {
            let mdl = solve_primal(&k, &[1, -1], c).unwrap();
            assert!((mdl.beta[0] - 1.0).abs() < 1e-6 && (mdl.beta[1] + 1.0).abs() < 1e-6, "{:?}", mdl.beta);
            assert!(mdl.b.abs() < 1e-6);
            assert!((mdl.objective - 1.0).abs() < 1e-6);
            assert_eq!(mdl.m_sv, 2);
        }
    }

    #[test]
    fn rejects_indefinite_kernel() {
        let k = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let err = solve_primal(&k, &[1, -1], 1.0).unwrap_err();
        assert!(err.to_string().contains("spectral_shift"));
        assert!(solve_primal(&SymMatrix::<f64>::identity(2), &[1, 0], 1.0).is_err());
        assert!(solve_primal(&SymMatrix::<f64>::identity(2), &[1, -1], 0.0).is_err());
    }

    #[test]
    fn decision_examples() {
        let m = model(vec![1.0, -1.0], 0.0);
        assert_eq!(decision(&m, &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(decision(&model(vec![1.0, -1.0], 0.5), &[0.0, 0.0]).unwrap(), 0.5);
        assert!(decision(&m, &[1.0]).is_err());
        assert_eq!(classify(&model(vec![1.0], 0.0), &[1.0]).unwrap(), 1);
        assert_eq!(classify(&model(vec![1.0], 0.0), &[-0.3]).unwrap(), -1);
        assert_eq!(classify(&model(vec![1.0], 0.0), &[0.0]).unwrap(), 1);
    }

    #[test]
    fn training_margin_reproduced() {
        let k = SymMatrix::from_rows(&[vec![1.0, 0.3, 0.1], vec![0.3, 1.0, 0.6], vec![0.1, 0.6, 1.0]]).unwrap();
        let y = [1, -1, -1];
        let m = solve_primal(&k, &y, 5.0).unwrap();
        let g = decision(&m, k.matrix().row(0)).unwrap();
        let direct = m.beta.iter().zip(k.matrix().row(0)).map(|(a, b)| a * b).sum::<f64>() + m.b;
        assert!((g - direct).abs() < 1e-12);
        let obj = primal_objective(&k, &y, 5.0, &m.beta, m.b);
        assert!((obj - m.objective).abs() < 1e-6);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, -1, 1], &[1, -1, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, -1], &[-1, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 1, 1, -1], &[1, 1, 1, 1]).unwrap(), 0.75);
        assert!(accuracy(&[1], &[1, 1]).is_err());
    }

    #[test]
    fn margin_error_examples() {
        let m = model(vec![1.0, -1.0], 0.0);
        let k = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 2.5], vec![0.5, 0.0], vec![0.0, -0.2]]).unwrap();
        let y = [1, -1, -1, 1];
        let e0 = gamma_margin_error(&m, &k, &y, 0.0).unwrap();
        let acc = accuracy(&predict(&m, &k).unwrap(), &y).unwrap();
        assert!((e0 - (1.0 - acc)).abs() < 1e-15);
        let all_good = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 2.5]]).unwrap();
        assert_eq!(gamma_margin_error(&m, &all_good, &[1, -1], 1.0).unwrap(), 0.0);
        // strict inequality: margin exactly γ is not an error
        let exact = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(gamma_margin_error(&m, &exact, &[1], 1.0).unwrap(), 0.0);
        assert!(gamma_margin_error(&m, &k, &y, 0.5).unwrap() <= gamma_margin_error(&m, &k, &y, 1.0).unwrap());
        // zero decision value counts as +1 at γ = 0
        let zero = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(gamma_margin_error(&m, &zero, &[1], 0.0).unwrap(), 0.0);
        assert_eq!(gamma_margin_error(&m, &zero, &[-1], 0.0).unwrap(), 1.0);
    }

    #[test]
    fn polish_picks_segment_midpoint() {
        // f = (0, 0), y = (+1, −1), a = 1: kinks at 1 and −1, flat between ⇒ 0
        assert_eq!(polish_intercept(&[0.0, 0.0], &[1, -1], 1.0), Some(0.0));
        // two positives at kink 1, one negative at −1 ⇒ slope −2 then +1 at b = 1
        assert_eq!(polish_intercept(&[0.0, 0.0, 0.0], &[1, 1, -1], 1.0), Some(1.0));
        assert_eq!(polish_intercept(&[0.0], &[1], 1.0), None);
    }

    #[test]
    fn text_roundtrip() {
        let mut m = model(vec![0.25, -1e-9, 3.0], -0.125);
        m.meta.embedding = Some("angle-2".into());
        m.meta.train_hash = Some(training_hash(&[vec![0.1, 0.2]], &[1]));
        let back = SvmModel::<f64>::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.m_sv, 2);
        assert!(SvmModel::<f64>::from_text("garbage").is_err());
        let broken = m.to_text().replace("m 3", "m 4");
        assert!(SvmModel::<f64>::from_text(&broken).is_err());
    }

    #[test]
    fn training_hash_sensitive() {
        let a = training_hash(&[vec![0.1, 0.2]], &[1]);
        assert_eq!(a.len(), 64);
        assert_ne!(a, training_hash(&[vec![0.1, 0.2]], &[-1]));
    }

    #[test]
    fn f32_two_point() {
        let m = solve_primal(&SymMatrix::<f32>::identity(2), &[1, -1], 10.0).unwrap();
        assert!((m.beta[0] - 1.0).abs() < 1e-2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn primal_invariants(pts in prop::collection::vec((0.0f64..3.0, 0.0f64..3.0), 4..12), c in 0.5f64..50.0, seed in 0u32..1000) {
            let m = pts.len();
            let y: Vec<Label> = (0..m).map(|i| if (i as u32 + seed) % 2 == 0 { 1 } else { -1 }).collect();
            let k = SymMatrix::new(Matrix::from_fn(m, m, |i, j| {
                let (a, b) = (pts[i], pts[j]);
                (((a.0 - b.0) / 2.0).cos() * ((a.1 - b.1) / 2.0).cos()).powi(2)
            })).unwrap();
            let mdl = solve_primal(&k, &y, c).unwrap();
            prop_assert!(mdl.beta_norm2 <= mdl.beta_norm1 + 1e-12);
            prop_assert!(mdl.beta_norm2.powi(2) <= mdl.m_sv as f64 * c * c + 1e-6);
            let obj = primal_objective(&k, &y, c, &mdl.beta, mdl.b);
            prop_assert!((obj - mdl.objective).abs() <= 1e-6 * obj.abs().max(1.0));

            // permuting the training set permutes the classifier
            let perm: Vec<usize> = (0..m).rev().collect();
            let kp = SymMatrix::new(Matrix::from_fn(m, m, |i, j| k.get(perm[i], perm[j]))).unwrap();
            let yp: Vec<Label> = perm.iter().map(|&i| y[i]).collect();
            let mp = solve_primal(&kp, &yp, c).unwrap();
            for t in 0..m {
                let kv: Vec<f64> = k.matrix().row(t).to_vec();
                let kvp: Vec<f64> = perm.iter().map(|&i| kv[i]).collect();
                let a = decision(&mdl, &kv).unwrap();
                let b = decision(&mp, &kvp).unwrap();
                prop_assert!((a - b).abs() < 1e-6 * a.abs().max(1.0), "{} vs {}", a, b);
            }
        }
    }
}
