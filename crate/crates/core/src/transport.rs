//! `∂_t U + C U = F` along each flow line, with `C`, `F`, `Ū` pulled back
//! from the Eulerian data.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::density::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::field::TimeGrid;
use crate::select::FlowMap;

/// Samples `C[j,k] = c(t_k, X(t_k, 0, x_j))`, same for `F`, and `Ū(x_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulledBackProblem {
    pub grid: TimeGrid,
    pub seeds: Vec<Vec<f64>>,
    /// Row-major `[seed × time]`.
    pub c: Vec<f64>,
    pub f: Vec<f64>,
    pub u0: Vec<f64>,
    pub lambda_shift: f64,
}

impl PulledBackProblem {
    pub fn new(grid: TimeGrid, seeds: Vec<Vec<f64>>, c: Vec<f64>, f: Vec<f64>, u0: Vec<f64>) -> Result<Self> {
        let p = Self { grid, seeds, c, f, u0, lambda_shift: 0.0 };
        p.validate()?;
        Ok(p)
    }

    /// Node-independent samples `c(t_k)`, `f(t_k)` for `n` seeds.
    pub fn from_time_functions(
        grid: TimeGrid,
        n: usize,
        c: impl Fn(f64) -> f64,
        f: impl Fn(f64) -> f64,
        u0: f64,
    ) -> Result<Self> {
        let ct: Vec<f64> = grid.nodes().iter().map(|t| c(*t)).collect();
        let ft: Vec<f64> = grid.nodes().iter().map(|t| f(*t)).collect();
        let seeds = vec![Vec::new(); n];
        Self::new(grid, seeds, ct.repeat(n), ft.repeat(n), vec![u0; n])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.seeds.len();
        let m = self.grid.nodes().len();
        if self.c.len() != n * m || self.f.len() != n * m || self.u0.len() != n {
            return Err(Error::Argument(format!("pulled-back arrays do not match {n} seeds × {m} nodes")));
        }
        if self.c.iter().chain(&self.f).chain(&self.u0).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite pulled-back sample".into()));
        }
        Ok(())
    }

    pub fn n_seeds(&self) -> usize {
        self.seeds.len()
    }

    pub fn n_times(&self) -> usize {
        self.grid.nodes().len()
    }

    pub fn c_row(&self, j: usize) -> &[f64] {
        let m = self.n_times();
        &self.c[j * m..(j + 1) * m]
    }

    pub fn f_row(&self, j: usize) -> &[f64] {
        let m = self.n_times();
        &self.f[j * m..(j + 1) * m]
    }

    /// Smallest shift making `C + λ ≥ 0`.
    pub fn required_shift(&self) -> f64 {
        self.c.iter().fold(0.0f64, |a, c| a.max(-c))
    }
}

/// Samples `c`, `f` along the flow lines of the seeds `seeds` (indices into
/// the flow) and `Ū` at their start points.
pub fn pull_back_data(
    flow: &FlowMap,
    seeds: &[usize],
    c: impl Fn(f64, &[f64]) -> f64,
    f: impl Fn(f64, &[f64]) -> f64,
    u0: impl Fn(&[f64]) -> f64,
) -> Result<PulledBackProblem> {
    let grid = flow.grid().clone();
    let m = grid.nodes().len();
    let mut cs = Vec::with_capacity(seeds.len() * m);
    let mut fs = Vec::with_capacity(seeds.len() * m);
    let mut us = Vec::with_capacity(seeds.len());
    let mut xs = Vec::with_capacity(seeds.len());
    for &j in seeds {
        let e = flow.entries().get(j).ok_or_else(|| Error::Argument(format!("no flow seed {j}")))?;
        if e.trajectory.len() != m {
            return Err(Error::Argument(format!("flow seed {j} does not start at t_start")));
        }
        for (k, t) in grid.nodes().iter().enumerate() {
            let z = e.trajectory.state(k);
            cs.push(c(*t, z));
            fs.push(f(*t, z));
        }
        us.push(u0(&e.x));
        xs.push(e.x.clone());
    }
    PulledBackProblem::new(grid, xs, cs, fs, us)
}

/// `C ↦ C + λ`, `F ↦ e^{−λt} F`; the solution of the shifted problem times
/// `e^{λt}` solves the original one.
pub fn shift_zeroth_order(p: &PulledBackProblem, lambda: f64) -> Result<PulledBackProblem> {
    if !(lambda >= 0.0) || lambda < p.required_shift() {
        return Err(Error::Argument(format!(
            "shift {lambda} below the required {}",
            p.required_shift()
        )));
    }
    let mut q = p.clone();
    if lambda == 0.0 {
        return Ok(q);
    }
    let m = q.n_times();
    for (idx, c) in q.c.iter_mut().enumerate() {
        *c += lambda;
        let t = q.grid.nodes()[idx % m];
        q.f[idx] *= libm::exp(-lambda * t);
    }
    q.lambda_shift += lambda;
    Ok(q)
}

/// `U` and `I = ∫_0^t C` per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicSolution {
    pub grid: TimeGrid,
    pub n_seeds: usize,
    pub u: Vec<f64>,
    pub i: Vec<f64>,
    pub lambda_shift: f64,
}

impl CharacteristicSolution {
    pub fn u_row(&self, j: usize) -> &[f64] {
        let m = self.grid.nodes().len();
        &self.u[j * m..(j + 1) * m]
    }

    pub fn i_row(&self, j: usize) -> &[f64] {
        let m = self.grid.nodes().len();
        &self.i[j * m..(j + 1) * m]
    }

    /// Undoes [`shift_zeroth_order`]: `U ↦ e^{λt} U`, `I ↦ I − λt`.
    pub fn unshifted(&self) -> Self {
        let mut s = self.clone();
        let lam = self.lambda_shift;
        if lam == 0.0 {
            return s;
        }
        let m = self.grid.nodes().len();
        for idx in 0..s.u.len() {
            let t = self.grid.nodes()[idx % m];
            s.u[idx] *= libm::exp(lam * t);
            s.i[idx] -= lam * t;
        }
        s.lambda_shift = 0.0;
        s
    }
}

/// `φ1(z) = (1 − e^{−z})/z` and `φ2(z) = (1 − (1 + z)e^{−z})/z²`.
fn phi12(z: f64) -> (f64, f64) {
    if z.abs() < 1e-2 {
        // Σ (−z)^n/(n+1)! and Σ (−z)^n/(n!(n+2))
        let (mut p1, mut p2) = (0.0, 0.0);
        let mut pow = 1.0;
        let mut fact = 1.0;
        for n in 0..10 {
            if n > 0 {
                pow *= -z;
                fact *= n as f64;
            }
            p1 += pow / (fact * (n + 1) as f64);
            p2 += pow / (fact * (n + 2) as f64);
        }
        (p1, p2)
    } else {
        let e = libm::exp(-z);
        ((1.0 - e) / z, (1.0 - (1.0 + z) * e) / (z * z))
    }
}

/// Per seed: trapezoidal `I`, then the explicit formula
/// `U = (Ū + ∫ F e^{I}) e^{−I}` in incremental form, integrating `F`
/// piecewise linearly against the per-step exponential. For a shifted
/// problem the factor `e^{−λt}` of `F` is integrated exactly and only
/// `e^{λt} F` is interpolated.
pub fn solve_characteristic_ode(p: &PulledBackProblem) -> Result<CharacteristicSolution> {
    p.validate()?;
    let m = p.n_times();
    let n = p.n_seeds();
    let nodes = p.grid.nodes();
    let lam = p.lambda_shift;
    let mut u = vec![0.0; n * m];
    let mut iacc = vec![0.0; n * m];
    for j in 0..n {
        let (c, f) = (p.c_row(j), p.f_row(j));
        let base = j * m;
        u[base] = p.u0[j];
        for k in 1..m {
            let h = nodes[k] - nodes[k - 1];
            let z = 0.5 * h * (c[k - 1] + c[k]);
            iacc[base + k] = iacc[base + k - 1] + z;
            let (p1, p2) = phi12(z - lam * h);
            let w0 = if lam == 0.0 { p2 } else { p2 * libm::exp(-lam * h) };
            let next = libm::exp(-z) * u[base + k - 1] + h * (f[k - 1] * w0 + f[k] * (p1 - p2));
            if !next.is_finite() {
                return Err(Error::Numerical(format!("characteristic solution overflow at seed {j}, t={}", nodes[k])));
            }
            u[base + k] = next;
        }
    }
    Ok(CharacteristicSolution { grid: p.grid.clone(), n_seeds: n, u, i: iacc, lambda_shift: p.lambda_shift })
}

/// Trapezoidal time weights of the grid.
pub fn trapezoid_weights(grid: &TimeGrid) -> Vec<f64> {
    let nodes = grid.nodes();
    let mut w = vec![0.0; nodes.len()];
    for k in 1..nodes.len() {
        let h = nodes[k] - nodes[k - 1];
        w[k - 1] += 0.5 * h;
        w[k] += 0.5 * h;
    }
    w
}

/// `Σ_j w_j Σ_k ω_k U[j,k] φ(t_k, X(t_k, 0, x_j))` for each probe `φ`, where
/// `seeds[j]` is the flow seed of particle `j` and `ω_k` the trapezoid weights.
pub fn assemble_flow_solution<P: Fn(f64, &[f64]) -> f64>(
    sol: &CharacteristicSolution,
    flow: &FlowMap,
    ensemble: &ParticleEnsemble,
    seeds: &[usize],
    probes: &[P],
) -> Result<Vec<f64>> {
    if seeds.len() != ensemble.len() || sol.n_seeds != ensemble.len() {
        return Err(Error::Argument("solution, ensemble and seed binding differ in length".into()));
    }
    let omega = trapezoid_weights(&sol.grid);
    let nodes = sol.grid.nodes();
    let mut out = Vec::with_capacity(probes.len());
    for phi in probes {
        let mut acc = 0.0;
        for (j, &sj) in seeds.iter().enumerate() {
            let tr = &flow.entries()[sj].trajectory;
            if tr.len() != nodes.len() {
                return Err(Error::Argument(format!("flow seed {sj} does not start at t_start")));
            }
            let u = sol.u_row(j);
            let mut part = 0.0;
            for k in 0..nodes.len() {
                part += omega[k] * u[k] * phi(nodes[k], tr.state(k));
            }
            acc += ensemble.weights()[j] * part;
        }
        out.push(acc);
    }
    Ok(out)
}
