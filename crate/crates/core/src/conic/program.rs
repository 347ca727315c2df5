//! Cone program container, text format and the quadratic-epigraph block builder.

use std::fmt::Write as _;

use crate::conic::matrix::{dot, norm2, Matrix, SymMatrix};
use crate::error::{invalid, Error, Result};
use crate::scalar::{lit, Real};

/// Cone family of one constraint block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    /// `Ax + b = 0`.
    Zero,
    /// `Ax + b ≥ 0` componentwise.
    NonNeg,
    /// `Ax + b` in the second-order cone: first entry ≥ norm of the rest.
    Soc,
}

impl ConeKind {
    fn tag(self) -> &'static str {
        match self {
            ConeKind::Zero => "zero",
            ConeKind::NonNeg => "nonneg",
            ConeKind::Soc => "soc",
        }
    }
}

/// One affine block `Ax + b ∈ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeBlock<T> {
    pub kind: ConeKind,
    pub a: Matrix<T>,
    pub b: Vec<T>,
}

impl<T: Real> ConeBlock<T> {
    pub fn new(kind: ConeKind, a: Matrix<T>, b: Vec<T>) -> Result<Self> {
        if a.rows() != b.len() {
            return Err(Error::DimensionMismatch { expected: a.rows(), got: b.len() });
        }
        if kind == ConeKind::Soc && a.rows() < 2 {
            return invalid("SOC block needs at least 2 rows");
        }
        if a.rows() == 0 {
            return invalid("empty constraint block");
        }
        Ok(Self { kind, a, b })
    }

    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    /// `Ax + b`.
    pub fn eval(&self, x: &[T]) -> Vec<T> {
        self.a.matvec(x).into_iter().zip(&self.b).map(|(v, &b)| v + b).collect()
    }

    /// Distance-style violation of `Ax + b ∈ K` (0 when satisfied).
    pub fn violation(&self, x: &[T]) -> T {
        let v = self.eval(x);
        match self.kind {
            ConeKind::Zero => v.iter().fold(T::zero(), |m, e| m.max(e.abs())),
            ConeKind::NonNeg => v.iter().fold(T::zero(), |m, &e| m.max(-e)),
            ConeKind::Soc => (norm2(&v[1..]) - v[0]).max(T::zero()),
        }
    }
}

/// `min cᵀx` subject to a list of cone blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeProgram<T> {
    n_vars: usize,
    objective: Vec<T>,
    blocks: Vec<ConeBlock<T>>,
}

impl<T: Real> ConeProgram<T> {
    pub fn new(objective: Vec<T>) -> Self {
        Self { n_vars: objective.len(), objective, blocks: Vec::new() }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn objective(&self) -> &[T] {
        &self.objective
    }

    pub fn blocks(&self) -> &[ConeBlock<T>] {
        &self.blocks
    }

    pub fn push(&mut self, block: ConeBlock<T>) -> Result<()> {
        if block.a.cols() != self.n_vars {
            return Err(Error::DimensionMismatch { expected: self.n_vars, got: block.a.cols() });
        }
        self.blocks.push(block);
        Ok(())
    }

    pub fn add(&mut self, kind: ConeKind, a: Matrix<T>, b: Vec<T>) -> Result<()> {
        self.push(ConeBlock::new(kind, a, b)?)
    }

    pub fn objective_at(&self, x: &[T]) -> T {
        dot(&self.objective, x)
    }

    /// Largest block violation at `x`, recomputed from the raw data.
    pub fn max_violation(&self, x: &[T]) -> T {
        self.blocks.iter().fold(T::zero(), |m, b| m.max(b.violation(x)))
    }

    /// Plain-text dump, one section per block.
    ///
    /// ```text
    /// cone-program v1
    /// vars <n>
    /// objective <c_1> ... <c_n>
    /// block <zero|nonneg|soc> <rows>
    /// <b_i> : <a_i1> ... <a_in>
    /// end
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &[T]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "cone-program v1");
        let _ = writeln!(s, "vars {}", self.n_vars);
        let _ = writeln!(s, "objective {}", join(&self.objective));
        for blk in &self.blocks {
            let _ = writeln!(s, "block {} {}", blk.kind.tag(), blk.rows());
            for i in 0..blk.rows() {
                let _ = writeln!(s, "{} : {}", blk.b[i], join(blk.a.row(i)));
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perr = |line: usize, msg: &str| Error::Parse { line, msg: msg.to_string() };
        let num = |line: usize, tok: &str| -> Result<T> {
            T::from_str_radix(tok, 10).map_err(|_| perr(line, &format!("bad number '{tok}'")))
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());

        let (ln, head) = lines.next().ok_or_else(|| perr(1, "empty input"))?;
        if head != "cone-program v1" {
            return Err(perr(ln, "expected header 'cone-program v1'"));
        }
        let (ln, vars) = lines.next().ok_or_else(|| perr(ln, "missing vars"))?;
        let n: usize = vars
            .strip_prefix("vars ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| perr(ln, "expected 'vars <n>'"))?;
        let (ln, obj) = lines.next().ok_or_else(|| perr(ln, "missing objective"))?;
        let obj = obj.strip_prefix("objective").ok_or_else(|| perr(ln, "expected 'objective'"))?;
        let c = obj.split_whitespace().map(|t| num(ln, t)).collect::<Result<Vec<T>>>()?;
        if c.len() != n {
            return Err(perr(ln, "objective length differs from vars"));
        }
        let mut prog = Self::new(c);
        loop {
            let (ln, line) = lines.next().ok_or_else(|| perr(ln, "missing 'end'"))?;
            if line == "end" {
                break;
            }
            let mut parts = line.split_whitespace();
            if parts.next() != Some("block") {
                return Err(perr(ln, "expected 'block' or 'end'"));
            }
            let kind = match parts.next() {
                Some("zero") => ConeKind::Zero,
                Some("nonneg") => ConeKind::NonNeg,
                Some("soc") => ConeKind::Soc,
                _ => return Err(perr(ln, "unknown cone kind")),
            };
            let rows: usize =
                parts.next().and_then(|r| r.parse().ok()).ok_or_else(|| perr(ln, "bad row count"))?;
            let mut a = Matrix::zeros(rows, n);
            let mut b = Vec::with_capacity(rows);
            for i in 0..rows {
                let (ln, row) = lines.next().ok_or_else(|| perr(ln, "truncated block"))?;
                let (bs, rest) = row.split_once(':').ok_or_else(|| perr(ln, "expected '<b> : <row>'"))?;
                b.push(num(ln, bs.trim())?);
                let vals = rest.split_whitespace().map(|t| num(ln, t)).collect::<Result<Vec<T>>>()?;
                if vals.len() != n {
                    return Err(perr(ln, "row length differs from vars"));
                }
                a.row_mut(i).copy_from_slice(&vals);
            }
            prog.add(kind, a, b).map_err(|e| perr(ln, &e.to_string()))?;
        }
        Ok(prog)
    }
}

/// Builds SOC blocks encoding `½ βᵀMβ ≤ t`.
#[derive(Debug, Clone)]
pub struct QuadEpigraph<T> {
    root: SymMatrix<T>,
}

/// Prepares the epigraph of `½ βᵀMβ` using `A = psd_sqrt(M)`.
pub fn quad_epigraph<T: Real>(m: &SymMatrix<T>, clip: T) -> Result<QuadEpigraph<T>> {
    Ok(QuadEpigraph { root: m.psd_sqrt(clip)? })
}

impl<T: Real> QuadEpigraph<T> {
    pub fn root(&self) -> &SymMatrix<T> {
        &self.root
    }

    /// SOC block `(t+1, √2·Aβ, t−1)` over a program with `n_vars` variables.
    pub fn block(&self, beta_idx: &[usize], t_idx: usize, n_vars: usize) -> Result<ConeBlock<T>> {
        let m = self.root.dim();
        if beta_idx.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: beta_idx.len() });
        }
        if t_idx >= n_vars || beta_idx.iter().any(|&i| i >= n_vars) {
            return invalid("variable index out of range");
        }
        let sqrt2 = lit::<T>(2.0).sqrt();
        let mut a = Matrix::zeros(m + 2, n_vars);
        let mut b = vec![T::zero(); m + 2];
        a[(0, t_idx)] = T::one();
        b[0] = T::one();
        for i in 0..m {
            for (j, &col) in beta_idx.iter().enumerate() {
                a[(i + 1, col)] = a[(i + 1, col)] + sqrt2 * self.root.get(i, j);
            }
        }
        a[(m + 1, t_idx)] = T::one();
        b[m + 1] = -T::one();
        ConeBlock::new(ConeKind::Soc, a, b)
    }

    /// Signed slack `t + 1 − ‖(√2·Aβ, t−1)‖`; nonnegative iff the point satisfies the block.
    pub fn slack(&self, beta: &[T], t: T) -> T {
        let sqrt2 = lit::<T>(2.0).sqrt();
        let mut v: Vec<T> = self.root.matrix().matvec(beta).into_iter().map(|e| sqrt2 * e).collect();
        v.push(t - T::one());
        t + T::one() - norm2(&v)
    }
}
