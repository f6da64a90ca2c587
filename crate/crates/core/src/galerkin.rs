//! Petrov-Galerkin discretization of `∂_t U + C U = F`, `U(0) = Ū`, with test
//! hats vanishing at `T` and trial space `B*(V_h)`, `B*v = −v′ + Cv`.
//!
//! There is no spatial derivative, so every spatial node carries its own
//! tridiagonal time system.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::transport::PulledBackProblem;

const GAUSS_1: ([f64; 1], [f64; 1]) = ([0.5], [1.0]);
const GAUSS_2: ([f64; 2], [f64; 2]) = ([0.211_324_865_405_187_1, 0.788_675_134_594_812_9], [0.5, 0.5]);
const GAUSS_3: ([f64; 3], [f64; 3]) = (
    [0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7],
    [0.277_777_777_777_777_8, 0.444_444_444_444_444_4, 0.277_777_777_777_777_8],
);
const GAUSS_4: ([f64; 4], [f64; 4]) = (
    [0.069_431_844_202_973_7, 0.330_009_478_207_571_9, 0.669_990_521_792_428_1, 0.930_568_155_797_026_3],
    [0.173_927_422_568_726_9, 0.326_072_577_431_273_1, 0.326_072_577_431_273_1, 0.173_927_422_568_726_9],
);
const GAUSS_5: ([f64; 5], [f64; 5]) = (
    [0.046_910_077_030_668, 0.230_765_344_947_158_5, 0.5, 0.769_234_655_052_841_5, 0.953_089_922_969_332],
    [0.118_463_442_528_094_5, 0.239_314_335_249_683_2, 0.284_444_444_444_444_4, 0.239_314_335_249_683_2, 0.118_463_442_528_094_5],
);

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_rule(n: usize) -> Result<(&'static [f64], &'static [f64])> {
    Ok(match n {
        1 => (&GAUSS_1.0, &GAUSS_1.1),
        2 => (&GAUSS_2.0, &GAUSS_2.1),
        3 => (&GAUSS_3.0, &GAUSS_3.1),
        4 => (&GAUSS_4.0, &GAUSS_4.1),
        5 => (&GAUSS_5.0, &GAUSS_5.1),
        _ => return Err(Error::Config(format!("gauss rule with {n} points not available (1..=5)"))),
    })
}

/// Rule used for trial-space norms in [`discrete_inf_sup`].
pub const REFERENCE_POINTS: usize = 5;

/// Coefficient data per spatial node.
pub trait NodeCoefficients {
    fn n_nodes(&self) -> usize;
    fn c(&self, j: usize, t: f64) -> f64;
    fn f(&self, j: usize, t: f64) -> f64;
    fn u0(&self, j: usize) -> f64;
    /// Spatial quadrature weight of node `j`.
    fn weight(&self, _j: usize) -> f64 {
        1.0
    }
}

fn interp(nodes: &[f64], vals: &[f64], t: f64) -> f64 {
    let k = nodes.partition_point(|x| *x <= t);
    if k == 0 {
        return vals[0];
    }
    if k >= nodes.len() {
        return vals[nodes.len() - 1];
    }
    let s = (t - nodes[k - 1]) / (nodes[k] - nodes[k - 1]);
    vals[k - 1] + s * (vals[k] - vals[k - 1])
}

/// Pulled-back samples, linear in time between grid nodes, unit node weights.
impl NodeCoefficients for PulledBackProblem {
    fn n_nodes(&self) -> usize {
        self.n_seeds()
    }

    fn c(&self, j: usize, t: f64) -> f64 {
        interp(self.grid.nodes(), self.c_row(j), t)
    }

    fn f(&self, j: usize, t: f64) -> f64 {
        interp(self.grid.nodes(), self.f_row(j), t)
    }

    fn u0(&self, j: usize) -> f64 {
        self.u0[j]
    }
}

/// Coefficients given by closures `c(j, t)`, `f(j, t)`.
pub struct FnCoefficients<C, F> {
    pub c: C,
    pub f: F,
    pub u0: Vec<f64>,
    pub weights: Option<Vec<f64>>,
}

impl<C: Fn(usize, f64) -> f64, F: Fn(usize, f64) -> f64> NodeCoefficients for FnCoefficients<C, F> {
    fn n_nodes(&self) -> usize {
        self.u0.len()
    }

    fn c(&self, j: usize, t: f64) -> f64 {
        (self.c)(j, t)
    }

    fn f(&self, j: usize, t: f64) -> f64 {
        (self.f)(j, t)
    }

    fn u0(&self, j: usize) -> f64 {
        self.u0[j]
    }

    fn weight(&self, j: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[j])
    }
}

/// Time mesh `0 = τ_0 < … < τ_M = T`; basis hats at `τ_0..τ_{M−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSpace {
    mesh: Vec<f64>,
}

impl TestSpace {
    pub fn uniform(t_end: f64, cells: usize) -> Result<Self> {
        if cells == 0 || !(t_end > 0.0) {
            return Err(Error::Config("test space needs T > 0 and at least one cell".into()));
        }
        Self::from_nodes((0..=cells).map(|i| t_end * i as f64 / cells as f64).collect())
    }

    pub fn from_nodes(mesh: Vec<f64>) -> Result<Self> {
        if mesh.len() < 2 || mesh.windows(2).any(|w| !(w[1] > w[0])) || mesh.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("time mesh must be finite and strictly increasing".into()));
        }
        Ok(Self { mesh })
    }

    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }

    pub fn cells(&self) -> usize {
        self.mesh.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.cells()
    }

    pub fn t_end(&self) -> f64 {
        self.mesh[self.mesh.len() - 1]
    }

    fn cell_of(&self, t: f64) -> usize {
        self.mesh.partition_point(|x| *x <= t).clamp(1, self.cells()) - 1
    }

    /// `(v_m(t), v_m′(t))`; on a shared mesh node the right cell is used.
    pub fn hat(&self, m: usize, t: f64) -> (f64, f64) {
        let i = self.cell_of(t);
        self.hat_in_cell(m, i, t)
    }

    fn hat_in_cell(&self, m: usize, i: usize, t: f64) -> (f64, f64) {
        let (a, b) = (self.mesh[i], self.mesh[i + 1]);
        let h = b - a;
        if m == i {
            ((b - t) / h, -1.0 / h)
        } else if m == i + 1 && m < self.dim() {
            ((t - a) / h, 1.0 / h)
        } else {
            (0.0, 0.0)
        }
    }
}

/// `B*v_m = −v_m′ + C v_m` at the times `ts`, with `c` sampled there.
pub fn apply_adjoint(space: &TestSpace, m: usize, c: impl Fn(f64) -> f64, ts: &[f64]) -> Vec<f64> {
    ts.iter()
        .map(|&t| {
            let (v, dv) = space.hat(m, t);
            -dv + c(t) * v
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct NodeSystem {
    weight: f64,
    /// `C` at the assembly and reference quadrature points.
    c_q: Vec<f64>,
    c_ref: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
    load: Vec<f64>,
    chol_d: Vec<f64>,
    chol_l: Vec<f64>,
}

/// Per-node Gram matrices `⟨B*v_m, B*v_n⟩` and loads `⟨F, v_m⟩ + Ū v_m(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinSystem {
    space: TestSpace,
    points: usize,
    /// Quadrature times and weights (weight includes the cell length).
    tq: Vec<f64>,
    wq: Vec<f64>,
    tref: Vec<f64>,
    wref: Vec<f64>,
    nodes: Vec<NodeSystem>,
}

fn quadrature(space: &TestSpace, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (x, w) = gauss_rule(n)?;
    let mut tq = Vec::with_capacity(space.cells() * n);
    let mut wq = Vec::with_capacity(space.cells() * n);
    for i in 0..space.cells() {
        let (a, b) = (space.mesh[i], space.mesh[i + 1]);
        for q in 0..n {
            tq.push(a + x[q] * (b - a));
            wq.push(w[q] * (b - a));
        }
    }
    Ok((tq, wq))
}

/// Tridiagonal Cholesky `G = L Lᵀ` (diagonal `d`, subdiagonal `l`).
fn tri_cholesky(diag: &[f64], off: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    let mut d = vec![0.0; n];
    let mut l = vec![0.0; n.saturating_sub(1)];
    for i in 0..n {
        let mut a = diag[i];
        if i > 0 {
            l[i - 1] = off[i - 1] / d[i - 1];
            a -= l[i - 1] * l[i - 1];
        }
        if !(a > 0.0) || !a.is_finite() {
            return None;
        }
        d[i] = libm::sqrt(a);
    }
    Some((d, l))
}

fn tri_solve(d: &[f64], l: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = rhs[i];
        if i > 0 {
            s -= l[i - 1] * y[i - 1];
        }
        y[i] = s / d[i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        if i + 1 < n {
            s -= l[i] * y[i + 1];
        }
        y[i] = s / d[i];
    }
    y
}

fn tri_mul(diag: &[f64], off: &[f64], x: &[f64]) -> Vec<f64> {
    let n = diag.len();
    (0..n)
        .map(|i| {
            let mut s = diag[i] * x[i];
            if i > 0 {
                s += off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += off[i] * x[i + 1];
            }
            s
        })
        .collect()
}

/// Builds and factors the per-node systems with a `points`-point Gauss rule per cell.
pub fn assemble_system(space: &TestSpace, data: &impl NodeCoefficients, points: usize) -> Result<GalerkinSystem> {
    let (tq, wq) = quadrature(space, points)?;
    let (tref, wref) = quadrature(space, REFERENCE_POINTS)?;
    let m = space.dim();
    let mut nodes = Vec::with_capacity(data.n_nodes());
    for j in 0..data.n_nodes() {
        let c_q: Vec<f64> = tq.iter().map(|t| data.c(j, *t)).collect();
        let c_ref: Vec<f64> = tref.iter().map(|t| data.c(j, *t)).collect();
        let mut diag = vec![0.0; m];
        let mut off = vec![0.0; m.saturating_sub(1)];
        let mut load = vec![0.0; m];
        for i in 0..space.cells() {
            for q in 0..points {
                let idx = i * points + q;
                let t = tq[idx];
                let w = wq[idx];
                let fval = data.f(j, t);
                let (v0, d0) = space.hat_in_cell(i, i, t);
                let (v1, d1) = space.hat_in_cell(i + 1, i, t);
                let b0 = -d0 + c_q[idx] * v0;
                let b1 = -d1 + c_q[idx] * v1;
                diag[i] += w * b0 * b0;
                load[i] += w * fval * v0;
                if i + 1 < m {
                    diag[i + 1] += w * b1 * b1;
                    off[i] += w * b0 * b1;
                    load[i + 1] += w * fval * v1;
                }
            }
        }
        load[0] += data.u0(j);
        let (chol_d, chol_l) = tri_cholesky(&diag, &off)
            .ok_or_else(|| Error::Assembly(format!("Gram matrix of node {j} is not positive definite")))?;
        let weight = data.weight(j);
        if !(weight > 0.0) {
            return Err(Error::Assembly(format!("node {j} has nonpositive weight")));
        }
        nodes.push(NodeSystem { weight, c_q, c_ref, diag, off, load, chol_d, chol_l });
    }
    Ok(GalerkinSystem { space: space.clone(), points, tq, wq, tref, wref, nodes })
}

/// Coefficients and quadrature samples of `U_h` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinSolution {
    pub coeffs: Vec<Vec<f64>>,
    pub samples: Vec<Vec<f64>>,
    /// `max_j ‖G_j c_j − ℓ_j‖ / ‖ℓ_j‖`.
    pub solve_residual: f64,
}

impl GalerkinSystem {
    pub fn space(&self) -> &TestSpace {
        &self.space
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn quad_times(&self) -> &[f64] {
        &self.tq
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.wq
    }

    pub fn node_weight(&self, j: usize) -> f64 {
        self.nodes[j].weight
    }

    /// Dense Gram matrix of node `j`.
    pub fn gram(&self, j: usize) -> DMatrix<f64> {
        let n = &self.nodes[j];
        let m = n.diag.len();
        DMatrix::from_fn(m, m, |a, b| {
            if a == b {
                n.diag[a]
            } else if a + 1 == b {
                n.off[a]
            } else if b + 1 == a {
                n.off[b]
            } else {
                0.0
            }
        })
    }

    pub fn load(&self, j: usize) -> &[f64] {
        &self.nodes[j].load
    }

    /// `G_j x`.
    pub fn gram_mul(&self, j: usize, x: &[f64]) -> Vec<f64> {
        tri_mul(&self.nodes[j].diag, &self.nodes[j].off, x)
    }

    /// `G_j⁻¹ r`.
    pub fn gram_solve(&self, j: usize, r: &[f64]) -> Vec<f64> {
        tri_solve(&self.nodes[j].chol_d, &self.nodes[j].chol_l, r)
    }

    /// `B*v_m` of node `j` at the assembly quadrature points.
    pub fn adjoint_samples(&self, j: usize, m: usize) -> Vec<f64> {
        let c = &self.nodes[j].c_q;
        (0..self.tq.len())
            .map(|idx| {
                let i = idx / self.points;
                let (v, dv) = self.space.hat_in_cell(m, i, self.tq[idx]);
                -dv + c[idx] * v
            })
            .collect()
    }

    /// `Σ_n w_n B*v_n` at the quadrature points.
    pub fn trial_samples(&self, j: usize, w: &[f64]) -> Vec<f64> {
        let c = &self.nodes[j].c_q;
        (0..self.tq.len())
            .map(|idx| {
                let i = idx / self.points;
                let t = self.tq[idx];
                let mut s = 0.0;
                for m in [i, i + 1] {
                    if m < w.len() {
                        let (v, dv) = self.space.hat_in_cell(m, i, t);
                        s += w[m] * (-dv + c[idx] * v);
                    }
                }
                s
            })
            .collect()
    }

    /// `Σ_n v_n v_n(t)` (a test-space element) at the quadrature points.
    pub fn test_samples(&self, v: &[f64]) -> Vec<f64> {
        (0..self.tq.len())
            .map(|idx| {
                let i = idx / self.points;
                let t = self.tq[idx];
                [i, i + 1].iter().filter(|m| **m < v.len()).map(|&m| v[m] * self.space.hat_in_cell(m, i, t).0).sum()
            })
            .collect()
    }

    /// `(Σ_j ω_j ∫ (a_j − b_j)²)^{1/2}` by the assembly quadrature.
    pub fn l2_distance(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.nodes.len() {
            let mut s = 0.0;
            for q in 0..self.tq.len() {
                let d = a[j][q] - b[j][q];
                s += self.wq[q] * d * d;
            }
            acc += self.nodes[j].weight * s;
        }
        libm::sqrt(acc)
    }

    /// `‖V‖_𝒴 = (vᵀ G_j v)^{1/2}`.
    pub fn test_norm(&self, j: usize, v: &[f64]) -> f64 {
        let gv = self.gram_mul(j, v);
        libm::sqrt(v.iter().zip(&gv).map(|(a, b)| a * b).sum::<f64>().max(0.0))
    }

    /// `‖V‖_{L²(0,T)}` by the assembly quadrature.
    pub fn test_l2_norm(&self, v: &[f64]) -> f64 {
        let s = self.test_samples(v);
        libm::sqrt(s.iter().zip(&self.wq).map(|(x, w)| w * x * x).sum())
    }
}

/// Solves `G_j c_j = ℓ_j` per node.
pub fn solve(system: &GalerkinSystem) -> Result<GalerkinSolution> {
    let mut coeffs = Vec::with_capacity(system.n_nodes());
    let mut samples = Vec::with_capacity(system.n_nodes());
    let mut worst: f64 = 0.0;
    for j in 0..system.n_nodes() {
        let l = system.load(j);
        let c = system.gram_solve(j, l);
        let gc = system.gram_mul(j, &c);
        let rn = libm::sqrt(gc.iter().zip(l).map(|(a, b)| (a - b) * (a - b)).sum());
        let ln = libm::sqrt(l.iter().map(|a| a * a).sum());
        let rel = if ln > 0.0 { rn / ln } else { rn };
        if !rel.is_finite() {
            return Err(Error::Solver(format!("non-finite Galerkin solve at node {j}")));
        }
        worst = worst.max(rel);
        samples.push(system.trial_samples(j, &c));
        coeffs.push(c);
    }
    Ok(GalerkinSolution { coeffs, samples, solve_residual: worst })
}

/// `‖R_W‖_{𝒴′} = (Σ_j ω_j r_jᵀ G_j r_j)^{1/2}` with `G_j r_j = ℓ_j − G_j w_j`.
pub fn residual_norm(system: &GalerkinSystem, w: &[Vec<f64>]) -> Result<f64> {
    if w.len() != system.n_nodes() {
        return Err(Error::Argument("trial vector has the wrong number of nodes".into()));
    }
    let mut acc = 0.0;
    for j in 0..system.n_nodes() {
        let gw = system.gram_mul(j, &w[j]);
        let rhs: Vec<f64> = system.load(j).iter().zip(&gw).map(|(a, b)| a - b).collect();
        let r = system.gram_solve(j, &rhs);
        let n = system.test_norm(j, &r);
        acc += system.node_weight(j) * n * n;
    }
    Ok(libm::sqrt(acc))
}

/// Trial basis used for [`discrete_inf_sup`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrialBasis {
    /// `B*v_n`.
    #[default]
    Optimal,
    /// The test hats themselves (a mismatched pairing).
    RawHats,
}

fn dense_cholesky(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(m)
        .map(|c| c.l())
        .ok_or_else(|| Error::Solver("mass matrix not positive definite".into()))
}

/// `min_j σ_min(L_V⁻¹ P_j L_U⁻ᵀ)` for test norm `‖B*V‖` and the trial `L²`
/// norm evaluated with the reference rule.
pub fn discrete_inf_sup(system: &GalerkinSystem, trial: TrialBasis) -> Result<f64> {
    let m = system.space.dim();
    let mut best = f64::INFINITY;
    for j in 0..system.n_nodes() {
        let node = &system.nodes[j];
        let trial_at = |n: usize, i: usize, t: f64, c: f64| {
            let (v, dv) = system.space.hat_in_cell(n, i, t);
            match trial {
                TrialBasis::Optimal => -dv + c * v,
                TrialBasis::RawHats => v,
            }
        };
        let mut mu = DMatrix::<f64>::zeros(m, m);
        let pref = REFERENCE_POINTS;
        for idx in 0..system.tref.len() {
            let i = idx / pref;
            let t = system.tref[idx];
            let vals: Vec<(usize, f64)> =
                [i, i + 1].iter().filter(|n| **n < m).map(|&n| (n, trial_at(n, i, t, node.c_ref[idx]))).collect();
            for &(a, va) in &vals {
                for &(b, vb) in &vals {
                    mu[(a, b)] += system.wref[idx] * va * vb;
                }
            }
        }
        let mut p = DMatrix::<f64>::zeros(m, m);
        for idx in 0..system.tq.len() {
            let i = idx / system.points;
            let t = system.tq[idx];
            for a in [i, i + 1].into_iter().filter(|n| *n < m) {
                let (v, dv) = system.space.hat_in_cell(a, i, t);
                let test = -dv + node.c_q[idx] * v;
                for b in [i, i + 1].into_iter().filter(|n| *n < m) {
                    p[(a, b)] += system.wq[idx] * test * trial_at(b, i, t, node.c_q[idx]);
                }
            }
        }
        let lv = dense_cholesky(system.gram(j))?;
        let lu = dense_cholesky(mu)?;
        let x = lv
            .solve_lower_triangular(&p)
            .ok_or_else(|| Error::Solver("singular test Cholesky factor".into()))?;
        let a = lu
            .solve_lower_triangular(&x.transpose())
            .ok_or_else(|| Error::Solver("singular trial Cholesky factor".into()))?
            .transpose();
        let sv = a.singular_values();
        best = best.min(sv.iter().copied().fold(f64::INFINITY, f64::min));
    }
    Ok(best)
}

/// Riesz representer `V_U`: solves `G_j v = (⟨U, B*v_m⟩)_m` with `U` given
/// at the quadrature points of each node.
pub fn trial_to_test(system: &GalerkinSystem, u: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if u.len() != system.n_nodes() || u.iter().any(|r| r.len() != system.tq.len()) {
        return Err(Error::Argument("trial samples do not match the quadrature grid".into()));
    }
    let m = system.space.dim();
    let mut out = Vec::with_capacity(system.n_nodes());
    for j in 0..system.n_nodes() {
        let c = &system.nodes[j].c_q;
        let mut rhs = vec![0.0; m];
        for idx in 0..system.tq.len() {
            let i = idx / system.points;
            let t = system.tq[idx];
            for a in [i, i + 1].into_iter().filter(|n| *n < m) {
                let (v, dv) = system.space.hat_in_cell(a, i, t);
                rhs[a] += system.wq[idx] * u[j][idx] * (-dv + c[idx] * v);
            }
        }
        out.push(system.gram_solve(j, &rhs));
    }
    Ok(out)
}

/// Largest `|ℓ_j − G_j c_j|` entry: the assembled Galerkin orthogonality defect.
pub fn orthogonality_defect(system: &GalerkinSystem, sol: &GalerkinSolution) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..system.n_nodes() {
        let gc = system.gram_mul(j, &sol.coeffs[j]);
        for (a, b) in gc.iter().zip(system.load(j)) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}
