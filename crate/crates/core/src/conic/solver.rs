//! Homogeneous self-dual interior-point method with Nesterov–Todd scaling.
//!
//! Internally the program is put in the form
//! `min cᵀx  s.t.  Gx + s = h,  Ax = b,  s ∈ ℝ₊ˡ × Q^{q₁} × …`.

use crate::conic::matrix::{dot, norm2, Lu, Matrix};
use crate::conic::program::{ConeKind, ConeProgram};
use crate::error::{invalid, Result};
use crate::scalar::{lit, to_f64, Real};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Stopped early with every residual below `√tol`.
    NearOptimal,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct ConeSolution<T> {
    pub x: Vec<T>,
    pub objective_value: T,
    pub status: SolveStatus,
    /// Relative residual of the cone constraints.
    pub primal_residual: T,
    /// Relative residual of the dual equality.
    pub dual_residual: T,
    /// Duality gap `sᵀz`, relative to `max(1, |cᵀx|)`.
    pub gap: T,
    pub iterations: usize,
    /// Multipliers of every block row, in program order.
    pub dual: Vec<T>,
}

type SparseRow<T> = Vec<(usize, T)>;

#[derive(Debug, Clone, Copy)]
enum Cone {
    NonNeg { start: usize, len: usize },
    Soc { start: usize, len: usize },
}

impl Cone {
    fn range(&self) -> std::ops::Range<usize> {
        match *self {
            Cone::NonNeg { start, len } | Cone::Soc { start, len } => start..start + len,
        }
    }
}

struct Standard<T> {
    n: usize,
    c: Vec<T>,
    a: Vec<SparseRow<T>>,
    b: Vec<T>,
    g: Vec<SparseRow<T>>,
    h: Vec<T>,
    cones: Vec<Cone>,
    /// Per program block: `(is_zero_block, rows)`.
    blocks: Vec<(bool, usize)>,
    /// Columns touched by each SOC cone (empty for NonNeg).
    soc_cols: Vec<Vec<usize>>,
}

fn sparse_rows<T: Real>(m: &Matrix<T>, sign: T) -> Vec<SparseRow<T>> {
    (0..m.rows())
        .map(|i| {
            m.row(i)
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != T::zero())
                .map(|(j, &v)| (j, sign * v))
                .collect()
        })
        .collect()
}

fn spmv<T: Real>(rows: &[SparseRow<T>], x: &[T]) -> Vec<T> {
    rows.iter().map(|r| r.iter().fold(T::zero(), |acc, &(j, v)| acc + v * x[j])).collect()
}

fn spmv_t<T: Real>(rows: &[SparseRow<T>], y: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n];
    for (r, &yi) in rows.iter().zip(y) {
        if yi != T::zero() {
            for &(j, v) in r {
                out[j] = out[j] + v * yi;
            }
        }
    }
    out
}

impl<T: Real> Standard<T> {
    fn from_program(p: &ConeProgram<T>) -> Self {
        let n = p.n_vars();
        let (mut a, mut b, mut g, mut h, mut cones, mut soc_cols) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let blocks = p.blocks().iter().map(|blk| (blk.kind == ConeKind::Zero, blk.rows())).collect();
        for blk in p.blocks() {
            match blk.kind {
                ConeKind::Zero => {
                    a.extend(sparse_rows(&blk.a, T::one()));
                    b.extend(blk.b.iter().map(|&v| -v));
                }
                kind => {
                    let start = g.len();
                    let rows = sparse_rows(&blk.a, -T::one());
                    let len = rows.len();
                    if kind == ConeKind::Soc {
                        let mut cols: Vec<usize> = rows.iter().flatten().map(|&(j, _)| j).collect();
                        cols.sort_unstable();
                        cols.dedup();
                        soc_cols.push(cols);
                        cones.push(Cone::Soc { start, len });
                    } else {
                        soc_cols.push(Vec::new());
                        cones.push(Cone::NonNeg { start, len });
                    }
                    g.extend(rows);
                    h.extend_from_slice(&blk.b);
                }
            }
        }
        Self { n, c: p.objective().to_vec(), a, b, g, h, cones, blocks, soc_cols }
    }

    fn m(&self) -> usize {
        self.h.len()
    }

    /// Interleaves equality and cone multipliers back into block order.
    fn dual(&self, y: &[T], z: &[T], tau: T) -> Vec<T> {
        let (mut iy, mut iz) = (0, 0);
        let mut out = Vec::with_capacity(y.len() + z.len());
        for &(zero, rows) in &self.blocks {
            let (src, i) = if zero { (y, &mut iy) } else { (z, &mut iz) };
            out.extend(src[*i..*i + rows].iter().map(|&v| v / tau));
            *i += rows;
        }
        out
    }

    fn degree(&self) -> usize {
        self.cones.iter().map(|c| if let Cone::NonNeg { len, .. } = c { *len } else { 1 }).sum()
    }
}

/// NT scaling for one cone.
#[derive(Debug, Clone)]
enum Scale<T> {
    NonNeg { w: Vec<T> },
    Soc { beta: T, wbar: Vec<T> },
}

struct Scaling<T> {
    cones: Vec<Cone>,
    blocks: Vec<Scale<T>>,
}

fn soc_jnorm<T: Real>(u: &[T]) -> T {
    let r = norm2(&u[1..]);
    ((u[0] - r) * (u[0] + r)).max(T::zero()).sqrt()
}

impl<T: Real> Scaling<T> {
    fn identity(cones: &[Cone]) -> Self {
        let blocks = cones
            .iter()
            .map(|c| match *c {
                Cone::NonNeg { len, .. } => Scale::NonNeg { w: vec![T::one(); len] },
                Cone::Soc { len, .. } => {
                    let mut wbar = vec![T::zero(); len];
                    wbar[0] = T::one();
                    Scale::Soc { beta: T::one(), wbar }
                }
            })
            .collect();
        Self { cones: cones.to_vec(), blocks }
    }

    fn compute(cones: &[Cone], s: &[T], z: &[T]) -> Self {
        let half = lit::<T>(0.5);
        let blocks = cones
            .iter()
            .map(|c| {
                let r = c.range();
                let (s, z) = (&s[r.clone()], &z[r]);
                match c {
                    Cone::NonNeg { .. } => {
                        Scale::NonNeg { w: s.iter().zip(z).map(|(&si, &zi)| (si / zi).sqrt()).collect() }
                    }
                    Cone::Soc { .. } => {
                        let sn = soc_jnorm(s);
                        let zn = soc_jnorm(z);
                        let sb: Vec<T> = s.iter().map(|&v| v / sn).collect();
                        let zb: Vec<T> = z.iter().map(|&v| v / zn).collect();
                        let gamma = ((T::one() + dot(&sb, &zb)) * half).sqrt();
                        let two_g = gamma + gamma;
                        let wbar: Vec<T> = sb
                            .iter()
                            .zip(&zb)
                            .enumerate()
                            .map(|(i, (&a, &b))| if i == 0 { (a + b) / two_g } else { (a - b) / two_g })
                            .collect();
                        Scale::Soc { beta: (sn / zn).sqrt(), wbar }
                    }
                }
            })
            .collect();
        Self { cones: cones.to_vec(), blocks }
    }

    fn apply(&self, x: &[T], inverse: bool) -> Vec<T> {
        let mut out = vec![T::zero(); x.len()];
        for (c, sc) in self.cones.iter().zip(&self.blocks) {
            let r = c.range();
            let (xi, oi) = (&x[r.clone()], &mut out[r]);
            match sc {
                Scale::NonNeg { w } => {
                    for ((o, &v), &wi) in oi.iter_mut().zip(xi).zip(w) {
                        *o = if inverse { v / wi } else { v * wi };
                    }
                }
                Scale::Soc { beta, wbar } => soc_scale(*beta, wbar, xi, oi, inverse),
            }
        }
        out
    }

    fn w(&self, x: &[T]) -> Vec<T> {
        self.apply(x, false)
    }

    fn winv(&self, x: &[T]) -> Vec<T> {
        self.apply(x, true)
    }
}

/// `β W̄ x` or `β⁻¹ W̄⁻¹ x` with `W̄ = [[w₀, w₁ᵀ], [w₁, I + w₁w₁ᵀ/(1+w₀)]]`.
fn soc_scale<T: Real>(beta: T, wbar: &[T], x: &[T], out: &mut [T], inverse: bool) {
    let w0 = wbar[0];
    let w1 = &wbar[1..];
    let x1 = &x[1..];
    let wx = dot(w1, x1);
    let sgn = if inverse { -T::one() } else { T::one() };
    let f = if inverse { T::one() / beta } else { beta };
    out[0] = f * (w0 * x[0] + sgn * wx);
    let coef = sgn * x[0] + wx / (T::one() + w0);
    for i in 0..w1.len() {
        out[i + 1] = f * (x1[i] + coef * w1[i]);
    }
}

fn jordan_prod<T: Real>(cones: &[Cone], u: &[T], v: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); u.len()];
    for c in cones {
        let r = c.range();
        match c {
            Cone::NonNeg { .. } => {
                for i in r {
                    out[i] = u[i] * v[i];
                }
            }
            Cone::Soc { start, len } => {
                let (u, v) = (&u[r.clone()], &v[r]);
                out[*start] = dot(u, v);
                for i in 1..*len {
                    out[start + i] = u[0] * v[i] + v[0] * u[i];
                }
            }
        }
    }
    out
}

/// Solves `λ ∘ x = r`.
fn jordan_div<T: Real>(cones: &[Cone], lambda: &[T], r: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); r.len()];
    for c in cones {
        let rg = c.range();
        match c {
            Cone::NonNeg { .. } => {
                for i in rg {
                    out[i] = r[i] / lambda[i];
                }
            }
            Cone::Soc { start, len } => {
                let (l, rr) = (&lambda[rg.clone()], &r[rg]);
                let l1 = &l[1..];
                let det = l[0] * l[0] - dot(l1, l1);
                let x0 = (l[0] * rr[0] - dot(l1, &rr[1..])) / det;
                out[*start] = x0;
                for i in 1..*len {
                    out[start + i] = (rr[i] - x0 * l[i]) / l[0];
                }
            }
        }
    }
    out
}

/// Identity element of the product cone.
fn unit<T: Real>(cones: &[Cone], m: usize) -> Vec<T> {
    let mut e = vec![T::zero(); m];
    for c in cones {
        match *c {
            Cone::NonNeg { start, len } => e[start..start + len].iter_mut().for_each(|v| *v = T::one()),
            Cone::Soc { start, .. } => e[start] = T::one(),
        }
    }
    e
}

/// Smallest "eigenvalue" of `u` with respect to the cone.
fn min_eig_cone<T: Real>(cones: &[Cone], u: &[T]) -> T {
    cones.iter().fold(T::infinity(), |m, c| {
        let r = c.range();
        let v = &u[r];
        let e = match c {
            Cone::NonNeg { .. } => v.iter().copied().fold(T::infinity(), T::min),
            Cone::Soc { .. } => v[0] - norm2(&v[1..]),
        };
        m.min(e)
    })
}

/// Largest `α` with `u + α d` in the cone (`u` interior); `∞` if unbounded.
fn max_step<T: Real>(cones: &[Cone], u: &[T], d: &[T]) -> T {
    let mut alpha = T::infinity();
    for c in cones {
        let r = c.range();
        let (u, d) = (&u[r.clone()], &d[r]);
        match c {
            Cone::NonNeg { .. } => {
                for (&ui, &di) in u.iter().zip(d) {
                    if di < T::zero() {
                        alpha = alpha.min(-ui / di);
                    }
                }
            }
            Cone::Soc { .. } => {
                let ln = soc_jnorm(u);
                let ub: Vec<T> = u.iter().map(|&v| v / ln).collect();
                let rho0 = (ub[0] * d[0] - dot(&ub[1..], &d[1..])) / ln;
                let f = (rho0 + d[0] / ln) / (ub[0] + T::one());
                let rho1: Vec<T> = (1..u.len()).map(|i| d[i] / ln - f * ub[i]).collect();
                let t = norm2(&rho1) - rho0;
                if t > T::zero() {
                    alpha = alpha.min(T::one() / t);
                }
            }
        }
    }
    alpha
}

/// Factorized Newton system for one scaling.
struct Kkt<'a, T> {
    p: &'a Standard<T>,
    scaling: &'a Scaling<T>,
    lu: Lu<T>,
}

impl<'a, T: Real> Kkt<'a, T> {
    fn factor(p: &'a Standard<T>, scaling: &'a Scaling<T>) -> Result<Self> {
        let n = p.n;
        let ne = p.a.len();
        let mut hm: Matrix<T> = Matrix::zeros(n, n);
        for (ci, (c, sc)) in p.cones.iter().zip(&scaling.blocks).enumerate() {
            let r = c.range();
            match sc {
                Scale::NonNeg { w } => {
                    for (row, &wi) in p.g[r].iter().zip(w) {
                        let f = T::one() / (wi * wi);
                        for &(j, vj) in row {
                            let fv = f * vj;
                            for &(k, vk) in row {
                                hm[(j, k)] = hm[(j, k)] + fv * vk;
                            }
                        }
                    }
                }
                Scale::Soc { beta, wbar } => {
                    let cols = &p.soc_cols[ci];
                    let q = r.len();
                    let mut local = Matrix::zeros(q, cols.len());
                    for (i, row) in p.g[r].iter().enumerate() {
                        for &(j, v) in row {
                            let k = cols.binary_search(&j).expect("column indexed");
                            local[(i, k)] = v;
                        }
                    }
                    let mut scaled = Matrix::zeros(q, cols.len());
                    let mut colbuf = vec![T::zero(); q];
                    let mut outbuf = vec![T::zero(); q];
                    for k in 0..cols.len() {
                        for i in 0..q {
                            colbuf[i] = local[(i, k)];
                        }
                        soc_scale(*beta, wbar, &colbuf, &mut outbuf, true);
                        for i in 0..q {
                            scaled[(i, k)] = outbuf[i];
                        }
                    }
                    for i in 0..q {
                        let row = scaled.row(i);
                        for (a, &ja) in cols.iter().enumerate() {
                            let va = row[a];
                            if va == T::zero() {
                                continue;
                            }
                            for (bidx, &jb) in cols.iter().enumerate() {
                                hm[(ja, jb)] = hm[(ja, jb)] + va * row[bidx];
                            }
                        }
                    }
                }
            }
        }
        let scale = (0..n).fold(T::one(), |m, i| m.max(hm[(i, i)].abs()));
        let reg = T::epsilon() * lit(4.0) * scale;
        let mut k = Matrix::zeros(n + ne, n + ne);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = hm[(i, j)];
            }
            k[(i, i)] = k[(i, i)] + reg;
        }
        for (i, row) in p.a.iter().enumerate() {
            for &(j, v) in row {
                k[(n + i, j)] = v;
                k[(j, n + i)] = v;
            }
            k[(n + i, n + i)] = -reg;
        }
        Ok(Self { p, scaling, lu: Lu::factor(k)? })
    }

    fn solve_once(&self, r1: &[T], r2: &[T], r3: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
        let p = self.p;
        let n = p.n;
        let t3 = self.scaling.winv(&self.scaling.winv(r3));
        let gt = spmv_t(&p.g, &t3, n);
        let mut rhs: Vec<T> = r1.iter().zip(&gt).map(|(&a, &b)| a + b).collect();
        rhs.extend_from_slice(r2);
        let sol = self.lu.solve(&rhs);
        let x = sol[..n].to_vec();
        let y = sol[n..].to_vec();
        let gx = spmv(&p.g, &x);
        let wgx = self.scaling.winv(&self.scaling.winv(&gx));
        let z = wgx.iter().zip(&t3).map(|(&a, &b)| a - b).collect();
        (x, y, z)
    }

    /// Solves `[[0, Aᵀ, Gᵀ], [A, 0, 0], [G, 0, −W²]] (x, y, z) = (r1, r2, r3)` with refinement.
    fn solve(&self, r1: &[T], r2: &[T], r3: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
        let p = self.p;
        let (mut x, mut y, mut z) = self.solve_once(r1, r2, r3);
        for _ in 0..6 {
            let aty = spmv_t(&p.a, &y, p.n);
            let gtz = spmv_t(&p.g, &z, p.n);
            let e1: Vec<T> = (0..p.n).map(|i| r1[i] - aty[i] - gtz[i]).collect();
            let ax = spmv(&p.a, &x);
            let e2: Vec<T> = r2.iter().zip(&ax).map(|(&a, &b)| a - b).collect();
            let gx = spmv(&p.g, &x);
            let w2z = self.scaling.w(&self.scaling.w(&z));
            let e3: Vec<T> = (0..r3.len()).map(|i| r3[i] - gx[i] + w2z[i]).collect();
            let err = norm2(&e1).max(norm2(&e2)).max(norm2(&e3));
            let base = norm2(r1).max(norm2(r2)).max(norm2(r3)).max(T::one());
            if err <= T::epsilon() * lit(10.0) * base {
                break;
            }
            let (dx, dy, dz) = self.solve_once(&e1, &e2, &e3);
            add_assign(&mut x, &dx, T::one());
            add_assign(&mut y, &dy, T::one());
            add_assign(&mut z, &dz, T::one());
        }
        (x, y, z)
    }
}

fn add_assign<T: Real>(x: &mut [T], d: &[T], alpha: T) {
    for (a, &b) in x.iter_mut().zip(d) {
        *a = *a + alpha * b;
    }
}

fn axpy<T: Real>(x: &[T], d: &[T], alpha: T) -> Vec<T> {
    x.iter().zip(d).map(|(&a, &b)| a + alpha * b).collect()
}

struct Iterate<T> {
    x: Vec<T>,
    y: Vec<T>,
    z: Vec<T>,
    s: Vec<T>,
    tau: T,
    kappa: T,
}

struct Direction<T> {
    x: Vec<T>,
    y: Vec<T>,
    z: Vec<T>,
    s: Vec<T>,
    tau: T,
    kappa: T,
}

/// Solves `p` to relative tolerance `tol`.
pub fn solve<T: Real>(p: &ConeProgram<T>, tol: T, max_iter: usize) -> Result<ConeSolution<T>> {
    if p.n_vars() == 0 {
        return invalid("cone program has no variables");
    }
    if !(tol > T::zero()) || tol > lit(1e-2) {
        return invalid(format!("tolerance {} outside (0, 1e-2]", to_f64(tol)));
    }
    let sp = Standard::from_program(p);
    if sp.m() == 0 {
        return invalid("cone program has no inequality or cone constraints");
    }
    Solver::new(&sp, tol).run(max_iter)
}

struct Solver<'a, T> {
    p: &'a Standard<T>,
    tol: T,
    e: Vec<T>,
    nu: T,
    cnorm: T,
    bnorm: T,
    hnorm: T,
}

struct Metrics<T> {
    pres: T,
    dres: T,
    relgap: T,
    pcost: T,
    pinf: Option<T>,
    dinf: Option<T>,
}

impl<'a, T: Real> Solver<'a, T> {
    fn new(p: &'a Standard<T>, tol: T) -> Self {
        Self {
            p,
            tol,
            e: unit(&p.cones, p.m()),
            nu: lit(p.degree() as f64),
            cnorm: norm2(&p.c).max(T::one()),
            bnorm: norm2(&p.b).max(T::one()),
            hnorm: norm2(&p.h).max(T::one()),
        }
    }

    fn initial(&self) -> Result<Iterate<T>> {
        let p = self.p;
        let id = Scaling::identity(&p.cones);
        let kkt = Kkt::factor(p, &id)?;
        let zeros_n = vec![T::zero(); p.n];
        let (x, _, negs) = kkt.solve(&zeros_n, &p.b, &p.h);
        let mut s: Vec<T> = negs.iter().map(|&v| -v).collect();
        let neg_c: Vec<T> = p.c.iter().map(|&v| -v).collect();
        let (_, y, mut z) = kkt.solve(&neg_c, &vec![T::zero(); p.b.len()], &vec![T::zero(); p.m()]);
        for v in [&mut s, &mut z] {
            let t = -min_eig_cone(&p.cones, v);
            if t >= -lit::<T>(1e-8) * norm2(v).max(T::one()) {
                add_assign(v, &self.e, T::one() + t);
            }
        }
        Ok(Iterate { x, y, z, s, tau: T::one(), kappa: T::one() })
    }

    fn residuals(&self, it: &Iterate<T>) -> (Vec<T>, Vec<T>, Vec<T>, T) {
        let p = self.p;
        let aty = spmv_t(&p.a, &it.y, p.n);
        let gtz = spmv_t(&p.g, &it.z, p.n);
        let rx: Vec<T> = (0..p.n).map(|i| aty[i] + gtz[i] + p.c[i] * it.tau).collect();
        let ax = spmv(&p.a, &it.x);
        let ry: Vec<T> = ax.iter().zip(&p.b).map(|(&a, &b)| a - b * it.tau).collect();
        let gx = spmv(&p.g, &it.x);
        let rz: Vec<T> = (0..p.m()).map(|i| it.s[i] + gx[i] - p.h[i] * it.tau).collect();
        let rt = it.kappa + dot(&p.c, &it.x) + dot(&p.b, &it.y) + dot(&p.h, &it.z);
        (rx, ry, rz, rt)
    }

    fn metrics(&self, it: &Iterate<T>, rx: &[T], ry: &[T], rz: &[T]) -> Metrics<T> {
        let p = self.p;
        let tau = it.tau;
        let cx = dot(&p.c, &it.x);
        let pcost = cx / tau;
        let pres = (norm2(ry) / self.bnorm).max(norm2(rz) / self.hnorm) / tau;
        let dres = norm2(rx) / tau / self.cnorm;
        let relgap = dot(&it.s, &it.z) / (tau * tau) / pcost.abs().max(T::one());

        let hz_by = dot(&p.h, &it.z) + dot(&p.b, &it.y);
        let pinf = (hz_by < T::zero()).then(|| {
            let aty = spmv_t(&p.a, &it.y, p.n);
            let gtz = spmv_t(&p.g, &it.z, p.n);
            let v: Vec<T> = aty.iter().zip(&gtz).map(|(&a, &b)| a + b).collect();
            norm2(&v) / self.cnorm / -hz_by
        });
        let dinf = (cx < T::zero()).then(|| {
            let ax = spmv(&p.a, &it.x);
            let gx = spmv(&p.g, &it.x);
            let gs: Vec<T> = gx.iter().zip(&it.s).map(|(&a, &b)| a + b).collect();
            (norm2(&ax) / self.bnorm).max(norm2(&gs) / self.hnorm) / -cx
        });
        Metrics { pres, dres, relgap, pcost, pinf, dinf }
    }

    fn direction(
        &self,
        kkt: &Kkt<T>,
        v1: &(Vec<T>, Vec<T>, Vec<T>),
        it: &Iterate<T>,
        res: &(Vec<T>, Vec<T>, Vec<T>, T),
        eta: T,
        dc: &[T],
        dtk: T,
    ) -> Direction<T> {
        let p = self.p;
        let sc = kkt.scaling;
        let wdc = sc.w(dc);
        let r1: Vec<T> = res.0.iter().map(|&v| -eta * v).collect();
        let r2: Vec<T> = res.1.iter().map(|&v| -eta * v).collect();
        let r3: Vec<T> = res.2.iter().zip(&wdc).map(|(&v, &w)| -eta * v - w).collect();
        let (x2, y2, z2) = kkt.solve(&r1, &r2, &r3);
        let q1 = dot(&p.c, &v1.0) + dot(&p.b, &v1.1) + dot(&p.h, &v1.2);
        let q2 = dot(&p.c, &x2) + dot(&p.b, &y2) + dot(&p.h, &z2);
        let dtau = (dtk / it.tau + eta * res.3 + q2) / (it.kappa / it.tau - q1);
        let dkappa = (dtk - it.kappa * dtau) / it.tau;
        let dx = axpy(&x2, &v1.0, dtau);
        let dy = axpy(&y2, &v1.1, dtau);
        let dz = axpy(&z2, &v1.2, dtau);
        let wdz = sc.w(&dz);
        let inner: Vec<T> = dc.iter().zip(&wdz).map(|(&a, &b)| a - b).collect();
        let ds = sc.w(&inner);
        Direction { x: dx, y: dy, z: dz, s: ds, tau: dtau, kappa: dkappa }
    }

    fn step_to_boundary(&self, it: &Iterate<T>, d: &Direction<T>) -> T {
        let cones = &self.p.cones;
        let mut a = max_step(cones, &it.s, &d.s).min(max_step(cones, &it.z, &d.z));
        if d.tau < T::zero() {
            a = a.min(-it.tau / d.tau);
        }
        if d.kappa < T::zero() {
            a = a.min(-it.kappa / d.kappa);
        }
        a
    }

    fn run(&self, max_iter: usize) -> Result<ConeSolution<T>> {
        let p = self.p;
        let cones = &p.cones;
        let mut it = self.initial()?;
        let mut best: Option<(T, ConeSolution<T>)> = None;
        let mut stalls = 0usize;

        for iter in 0..=max_iter {
            let res = self.residuals(&it);
            let m = self.metrics(&it, &res.0, &res.1, &res.2);
            let x_hat: Vec<T> = it.x.iter().map(|&v| v / it.tau).collect();
            let dual = p.dual(&it.y, &it.z, it.tau);
            let sol = |status| ConeSolution {
                x: x_hat.clone(),
                objective_value: m.pcost,
                status,
                primal_residual: m.pres,
                dual_residual: m.dres,
                gap: m.relgap,
                iterations: iter,
                dual: dual.clone(),
            };
            let score = m.pres.max(m.dres).max(m.relgap);
            if score.is_finite() && best.as_ref().is_none_or(|(b, _)| score < *b) {
                best = Some((score, sol(SolveStatus::MaxIter)));
            }
            if m.pres <= self.tol && m.dres <= self.tol && m.relgap <= self.tol {
                return Ok(sol(SolveStatus::Optimal));
            }
            if m.pinf.is_some_and(|v| v <= self.tol) {
                return Ok(sol(SolveStatus::Infeasible));
            }
            if m.dinf.is_some_and(|v| v <= self.tol) {
                return Ok(sol(SolveStatus::Unbounded));
            }
            if iter == max_iter || stalls >= 5 {
                break;
            }

            let scaling = Scaling::compute(cones, &it.s, &it.z);
            let lambda = scaling.w(&it.z);
            let kkt = match Kkt::factor(p, &scaling) {
                Ok(k) => k,
                Err(_) => break,
            };
            let neg_c: Vec<T> = p.c.iter().map(|&v| -v).collect();
            let v1 = kkt.solve(&neg_c, &p.b, &p.h);
            let mu = (dot(&it.s, &it.z) + it.tau * it.kappa) / (self.nu + T::one());

            // predictor
            let dc_aff: Vec<T> = lambda.iter().map(|&v| -v).collect();
            let aff = self.direction(&kkt, &v1, &it, &res, T::one(), &dc_aff, -it.tau * it.kappa);
            let a_aff = self.step_to_boundary(&it, &aff).min(T::one());
            let sigma = (T::one() - a_aff).powi(3);

            // corrector
            let ds_s = scaling.winv(&aff.s);
            let dz_s = scaling.w(&aff.z);
            let corr = jordan_prod(cones, &ds_s, &dz_s);
            let ll = jordan_prod(cones, &lambda, &lambda);
            let target: Vec<T> =
                (0..p.m()).map(|i| -ll[i] + sigma * mu * self.e[i] - corr[i]).collect();
            let dc = jordan_div(cones, &lambda, &target);
            let dtk = -it.tau * it.kappa + sigma * mu - aff.tau * aff.kappa;
            let d = self.direction(&kkt, &v1, &it, &res, T::one() - sigma, &dc, dtk);
            let alpha = (self.step_to_boundary(&it, &d) * lit(0.99)).min(T::one());
            if !alpha.is_finite() || alpha < lit(1e-10) {
                stalls += 1;
                if !alpha.is_finite() {
                    break;
                }
            } else {
                stalls = 0;
            }
            add_assign(&mut it.x, &d.x, alpha);
            add_assign(&mut it.y, &d.y, alpha);
            add_assign(&mut it.z, &d.z, alpha);
            add_assign(&mut it.s, &d.s, alpha);
            it.tau = it.tau + alpha * d.tau;
            it.kappa = it.kappa + alpha * d.kappa;
            if !(it.tau > T::zero()) || !(it.kappa > T::zero()) || it.x.iter().any(|v| !v.is_finite()) {
                break;
            }
        }
        let (score, mut out) = best.ok_or_else(|| crate::error::Error::Solver("no finite iterate".into()))?;
        if score <= self.tol.sqrt() {
            out.status = SolveStatus::NearOptimal;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::matrix::SymMatrix;
    use crate::conic::program::quad_epigraph;

    fn solve64(p: &ConeProgram<f64>) -> ConeSolution<f64> {
        solve(p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap()
    }

    fn assert_certificate(p: &ConeProgram<f64>, s: &ConeSolution<f64>) {
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!(s.primal_residual.max(s.dual_residual).max(s.gap) <= DEFAULT_TOL);
        let hn = p.blocks().iter().map(|b| norm2(&b.b)).fold(1.0, f64::max);
        assert!(p.max_violation(&s.x) <= 10.0 * DEFAULT_TOL * hn, "violation {}", p.max_violation(&s.x));
    }

    #[test]
    fn scaling_maps_z_and_s_to_same_lambda() {
        let cones = [Cone::NonNeg { start: 0, len: 2 }, Cone::Soc { start: 2, len: 3 }];
        let s = [0.5, 2.0, 3.0, 1.0, -0.5];
        let z = [1.5, 0.1, 2.0, -0.3, 1.2];
        let sc = Scaling::<f64>::compute(&cones, &s, &z);
        let wz = sc.w(&z);
        let wis = sc.winv(&s);
        for (a, b) in wz.iter().zip(&wis) {
            assert!((a - b).abs() < 1e-12, "{wz:?} vs {wis:?}");
        }
        let back = sc.winv(&sc.w(&s));
        for (a, b) in back.iter().zip(&s) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn jordan_div_inverts_product() {
        let cones = [Cone::Soc { start: 0, len: 3 }];
        let l = [2.0f64, 0.5, -0.7];
        let x = [0.3, -1.0, 2.0];
        let r = jordan_prod(&cones, &l, &x);
        let back = jordan_div(&cones, &l, &r);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn soc_max_step_matches_bisection() {
        let cones = [Cone::Soc { start: 0, len: 3 }];
        let u = [3.0, 1.0, -1.5];
        let d = [-1.0, 0.4, 2.0];
        let a = max_step(&cones, &u, &d);
        let inside = |t: f64| {
            let v: Vec<f64> = u.iter().zip(&d).map(|(x, y)| x + t * y).collect();
            v[0] >= norm2(&v[1..])
        };
        let (mut lo, mut hi) = (0.0, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if inside(mid) {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((a - lo).abs() < 1e-9, "{a} vs {lo}");
    }

    #[test]
    fn lp_single_variable() {
        let mut p = ConeProgram::new(vec![1.0]);
        p.add(ConeKind::NonNeg, Matrix::from_rows(&[vec![1.0]]).unwrap(), vec![-2.0]).unwrap();
        let s = solve64(&p);
        assert_certificate(&p, &s);
        assert!((s.x[0] - 2.0).abs() < 1e-7);
        assert!((s.objective_value - 2.0).abs() < 1e-7);
    }

    #[test]
    fn soc_norm() {
        let mut p = ConeProgram::new(vec![1.0]);
        p.add(ConeKind::Soc, Matrix::from_rows(&[vec![1.0], vec![0.0], vec![0.0]]).unwrap(), vec![0.0, 3.0, 4.0])
            .unwrap();
        let s = solve64(&p);
        assert_certificate(&p, &s);
        assert!((s.x[0] - 5.0).abs() < 1e-7);
    }

    #[test]
    fn quadratic_via_epigraph() {
        // x = (β₁, β₂, t)
        let mut p = ConeProgram::new(vec![0.0, 0.0, 1.0]);
        let rows = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, -1.0, 0.0]]).unwrap();
        p.add(ConeKind::NonNeg, rows, vec![-1.0, -1.0]).unwrap();
        let q = quad_epigraph(&SymMatrix::identity(2), 1e-9).unwrap();
        p.push(q.block(&[0, 1], 2, 3).unwrap()).unwrap();
        let s = solve64(&p);
        assert_certificate(&p, &s);
        assert!((s.objective_value - 1.0).abs() < 1e-7);
        assert!((s.x[0] - 1.0).abs() < 1e-6 && (s.x[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn equality_blocks() {
        // min x₁ + 2x₂ s.t. x₁ + x₂ = 1, x ≥ 0
        let mut p = ConeProgram::new(vec![1.0, 2.0]);
        p.add(ConeKind::Zero, Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap(), vec![-1.0]).unwrap();
        p.add(ConeKind::NonNeg, Matrix::identity(2), vec![0.0, 0.0]).unwrap();
        let s = solve64(&p);
        assert_certificate(&p, &s);
        assert!((s.x[0] - 1.0).abs() < 1e-7 && s.x[1].abs() < 1e-7);
    }

    #[test]
    fn detects_infeasible() {
        // x ≥ 1 and −x ≥ 0
        let mut p = ConeProgram::new(vec![1.0]);
        p.add(ConeKind::NonNeg, Matrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap(), vec![-1.0, 0.0]).unwrap();
        assert_eq!(solve64(&p).status, SolveStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        // min −x s.t. x ≥ 0
        let mut p = ConeProgram::new(vec![-1.0]);
        p.add(ConeKind::NonNeg, Matrix::from_rows(&[vec![1.0]]).unwrap(), vec![0.0]).unwrap();
        assert_eq!(solve64(&p).status, SolveStatus::Unbounded);
    }

    #[test]
    fn rejects_empty_and_bad_tol() {
        assert!(solve(&ConeProgram::<f64>::new(vec![]), 1e-8, 10).is_err());
        let mut p = ConeProgram::new(vec![1.0]);
        p.add(ConeKind::NonNeg, Matrix::from_rows(&[vec![1.0]]).unwrap(), vec![0.0]).unwrap();
        assert!(solve(&p, 0.1, 10).is_err());
        assert!(solve(&p, 0.0, 10).is_err());
    }

    #[test]
    fn iteration_cap_reports_maxiter() {
        let mut p = ConeProgram::new(vec![1.0]);
        p.add(ConeKind::Soc, Matrix::from_rows(&[vec![1.0], vec![0.0], vec![0.0]]).unwrap(), vec![0.0, 3.0, 4.0])
            .unwrap();
        let s = solve(&p, 1e-8, 1).unwrap();
        assert_eq!(s.status, SolveStatus::MaxIter);
    }

    #[test]
    fn f32_solves_loosely() {
        let mut p = ConeProgram::<f32>::new(vec![1.0]);
        p.add(ConeKind::Soc, Matrix::from_rows(&[vec![1.0], vec![0.0], vec![0.0]]).unwrap(), vec![0.0, 3.0, 4.0])
            .unwrap();
        let s = solve(&p, 1e-4, 200).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[0] - 5.0).abs() < 1e-3);
    }
}
