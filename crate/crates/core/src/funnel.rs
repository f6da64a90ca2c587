//! Beam approximation of the solution funnel `Γ(s, x)` of `γ' ∈ F(t, γ)`.
//!
//! Each live trajectory branches at every step into the projection of the
//! field onto the envelope and the envelope's extreme points in a few
//! directions. Registered discontinuity surfaces additionally produce a
//! landing candidate (the Euler segment cut where it meets the surface) and a
//! sliding candidate on the surface. Candidates are certified against the
//! envelope at the start of the step. Children ending at the same state (within
//! `merge_tol`) are merged, keeping the shortest path; the beam is then pruned
//! by farthest-point greedy spread of the end states.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{clamp_to_tangent_cone, Hyperplane, TimeGrid, VelocityField};
use crate::filippov::{filippov_envelope, project_to_envelope, set_distance, EnvelopeParams, FilippovEnvelope};
use crate::math::{dist, dot, lex_cmp, norm};

/// A time-sampled curve on consecutive grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
}

impl Trajectory {
    pub fn new(dim: usize, times: Vec<f64>, states: Vec<f64>) -> Result<Self> {
        if dim == 0 || times.is_empty() || states.len() != times.len() * dim {
            return Err(Error::Argument("trajectory shape mismatch".into()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Argument("trajectory times must be strictly increasing".into()));
        }
        Ok(Self { dim, times, states })
    }

    /// Constant curve at `x` over `times`.
    pub fn constant(x: &[f64], times: &[f64]) -> Self {
        let mut states = Vec::with_capacity(times.len() * x.len());
        for _ in times {
            states.extend_from_slice(x);
        }
        Self { dim: x.len(), times: times.to_vec(), states }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn start_point(&self) -> &[f64] {
        self.state(0)
    }

    pub fn end_point(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Position index of grid time `t` (relative tolerance 1e-9 of a step).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let h = if self.len() > 1 { self.times[1] - self.times[0] } else { 1.0 };
        let tol = 1e-9 * h;
        let i = self.times.partition_point(|&s| s < t - tol);
        (i < self.len() && libm::fabs(self.times[i] - t) <= tol).then_some(i)
    }

    /// State at grid time `t`, if the trajectory covers it.
    pub fn at(&self, t: f64) -> Option<&[f64]> {
        self.index_of(t).map(|k| self.state(k))
    }

    /// Discrete velocity on step `k` (between samples `k` and `k+1`).
    pub fn velocity(&self, k: usize) -> Vec<f64> {
        let h = self.times[k + 1] - self.times[k];
        self.state(k + 1).iter().zip(self.state(k)).map(|(b, a)| (b - a) / h).collect()
    }

    /// Sup-norm distance to another trajectory on their common times.
    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, t) in self.times.iter().enumerate() {
            if let Some(j) = other.index_of(*t) {
                worst = worst.max(dist(self.state(k), other.state(j)));
            }
        }
        worst
    }
}

/// Beam settings of the funnel integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct FunnelParams {
    pub envelope: EnvelopeParams,
    pub branch_factor: usize,
    pub beam_width: usize,
    pub merge_tol: f64,
    pub resid_tol: f64,
}

impl FunnelParams {
    /// `merge_tol = 1e-8·diam(Ω)`, `resid_tol = 10·Δt·growth_c`, beam of 16,
    /// branching into every envelope direction.
    pub fn defaults(field: &VelocityField, grid: &TimeGrid, seed: u64) -> Self {
        let envelope = EnvelopeParams::defaults(field, seed);
        Self {
            branch_factor: envelope.dirs.len(),
            envelope,
            beam_width: 16,
            merge_tol: 1e-8 * field.domain().diameter(),
            resid_tol: 10.0 * grid.max_dt() * field.growth_c().max(1e-300),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.envelope.validate()?;
        if self.branch_factor == 0 || self.beam_width == 0 {
            return Err(Error::Config("branch_factor and beam_width must be >= 1".into()));
        }
        if !(self.merge_tol > 0.0) || !(self.resid_tol > 0.0) {
            return Err(Error::Config("merge_tol and resid_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Finite beam standing in for `Γ(s, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Funnel {
    pub seed_time: f64,
    pub seed_point: Vec<f64>,
    pub members: Vec<Trajectory>,
    /// Inclusion residual of each member, recorded while branching.
    pub residuals: Vec<f64>,
    pub beam_width: usize,
    pub branch_factor: usize,
}

impl Funnel {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// A beam member: its head state lives in the history arena at `node`.
#[derive(Clone, Copy)]
struct Live {
    node: usize,
    resid: f64,
    /// Arc length of the discrete path, used to pick one history per end state.
    length: f64,
}

/// Parent-linked states of every kept beam member.
struct History {
    dim: usize,
    states: Vec<f64>,
    parent: Vec<usize>,
}

impl History {
    fn push(&mut self, parent: usize, y: &[f64]) -> usize {
        self.states.extend_from_slice(y);
        self.parent.push(parent);
        self.parent.len() - 1
    }

    fn state(&self, node: usize) -> &[f64] {
        &self.states[node * self.dim..(node + 1) * self.dim]
    }

    fn set(&mut self, node: usize, parent: usize, y: &[f64]) {
        let d = self.dim;
        self.states[node * d..(node + 1) * d].copy_from_slice(y);
        self.parent[node] = parent;
    }

    /// States from the root to `node`, `len` of them.
    fn path(&self, mut node: usize, len: usize) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; len * d];
        for k in (0..len).rev() {
            out[k * d..(k + 1) * d].copy_from_slice(self.state(node));
            node = self.parent[node];
        }
        out
    }
}

fn branch_directions(env: &FilippovEnvelope, branch_factor: usize) -> impl Iterator<Item = usize> {
    let n = env.dirs.len();
    let b = branch_factor.min(n);
    (0..b).map(move |i| i * n / b)
}

/// Appends the end states reachable from `x` in one step, before
/// certification, to the flat buffer `out`.
#[allow(clippy::too_many_arguments)]
fn candidate_states(
    field: &VelocityField,
    env: &FilippovEnvelope,
    surfaces: &[Hyperplane],
    t: f64,
    x: &[f64],
    dt: f64,
    branch_factor: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    let dom = field.domain();
    let d = field.dim();
    let b = field.eval(t, x)?;
    let projected = project_to_envelope(env, &b)?;
    let mut y = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut emit = |mut v: Vec<f64>, out: &mut Vec<f64>| {
        clamp_to_tangent_cone(dom, x, &mut v);
        let mut theta: f64 = 1.0;
        for i in 0..d {
            let e = x[i] + dt * v[i];
            if e > dom.upper()[i] {
                theta = theta.min((dom.upper()[i] - x[i]) / (dt * v[i]));
            } else if e < dom.lower()[i] {
                theta = theta.min((dom.lower()[i] - x[i]) / (dt * v[i]));
            }
        }
        let theta = theta.clamp(0.0, 1.0);
        for i in 0..d {
            y[i] = x[i] + theta * dt * v[i];
        }
        dom.clamp(&mut y);
        for h in surfaces {
            let l0 = h.level(x);
            let l1 = h.level(&y);
            if l0 != 0.0 && (l1 == 0.0 || (l0 > 0.0) != (l1 > 0.0)) {
                let s = l0 / (l0 - l1);
                for i in 0..d {
                    z[i] = x[i] + s * (y[i] - x[i]);
                }
                h.project(&mut z);
                dom.clamp(&mut z);
                out.extend_from_slice(&z);
            }
        }
        out.extend_from_slice(&y);
    };
    emit(projected.clone(), out);
    for i in branch_directions(env, branch_factor) {
        emit(env.extreme_point(env.dirs.get(i))?, out);
    }
    for h in surfaces {
        if h.level(x) == 0.0 {
            // slide along the surface with the tangential part of the projected field
            let nn = dot(&h.normal, &h.normal);
            let s = dot(&projected, &h.normal) / nn;
            let mut z: Vec<f64> = (0..d).map(|i| x[i] + dt * (projected[i] - s * h.normal[i])).collect();
            h.project(&mut z);
            dom.clamp(&mut z);
            out.extend_from_slice(&z);
        }
    }
    Ok(())
}

fn prune(children: Vec<Live>, hist: &History, beam: usize) -> Vec<Live> {
    if children.len() <= beam {
        return children;
    }
    let head = |c: &Live| hist.state(c.node);
    let n = children.len();
    let mut first = 0;
    for i in 1..n {
        if lex_cmp(head(&children[i]), head(&children[first])).is_lt() {
            first = i;
        }
    }
    let mut kept = vec![first];
    let mut mind: Vec<f64> = children.iter().map(|c| dist(head(c), head(&children[first]))).collect();
    mind[first] = -1.0;
    while kept.len() < beam {
        let mut best = usize::MAX;
        for i in 0..n {
            if mind[i] >= 0.0 && (best == usize::MAX || mind[i] > mind[best]) {
                best = i;
            }
        }
        if best == usize::MAX {
            break;
        }
        kept.push(best);
        mind[best] = -1.0;
        for i in 0..n {
            if mind[i] >= 0.0 {
                mind[i] = mind[i].min(dist(head(&children[i]), head(&children[best])));
            }
        }
    }
    kept.sort_unstable();
    kept.into_iter().map(|i| children[i]).collect()
}

/// Builds the beam funnel from `(s, x)` to the end of `grid`.
pub fn integrate_branching(
    field: &VelocityField,
    params: &FunnelParams,
    grid: &TimeGrid,
    s: f64,
    x: &[f64],
) -> Result<Funnel> {
    params.validate()?;
    let d = field.dim();
    if x.len() != d || !field.domain().contains(x) {
        return Err(Error::Domain(format!("funnel seed {x:?} outside the domain")));
    }
    let k0 = grid
        .index_of(s)
        .ok_or_else(|| Error::Argument(format!("seed time {s} is not a grid node")))?;
    let surfaces = field.discontinuities();
    let nodes = grid.nodes();
    let mut hist = History { dim: d, states: Vec::new(), parent: Vec::new() };
    let root = hist.push(usize::MAX, x);
    let mut live = vec![Live { node: root, resid: 0.0, length: 0.0 }];
    let mut cands: Vec<f64> = Vec::new();
    let mut vel = vec![0.0; d];
    let mut xk = vec![0.0; d];
    for k in k0..grid.n_steps() {
        let t = nodes[k];
        let dt = grid.dt(k);
        let mut children: Vec<Live> = Vec::new();
        for m in &live {
            xk.copy_from_slice(hist.state(m.node));
            let env = filippov_envelope(field, t, &xk, &params.envelope)?;
            cands.clear();
            candidate_states(field, &env, &surfaces, t, &xk, dt, params.branch_factor, &mut cands)?;
            for y in cands.chunks_exact(d) {
                for i in 0..d {
                    vel[i] = (y[i] - xk[i]) / dt;
                }
                let r = set_distance(&env, &vel);
                if r > params.resid_tol {
                    continue;
                }
                let length = m.length + dist(y, &xk);
                let dup = children.iter().position(|c| dist(hist.state(c.node), y) <= params.merge_tol);
                let resid = m.resid.max(r);
                match dup {
                    Some(i) if children[i].length <= length => {}
                    Some(i) => {
                        hist.set(children[i].node, m.node, y);
                        children[i] = Live { node: children[i].node, resid, length };
                    }
                    None => {
                        let node = hist.push(m.node, y);
                        children.push(Live { node, resid, length });
                    }
                }
            }
        }
        if children.is_empty() {
            let heads: Vec<Vec<f64>> = live.iter().map(|m| hist.state(m.node).to_vec()).collect();
            return Err(Error::Infeasible(format!(
                "no admissible velocity at t={t} from states {heads:?} (F ∩ T_xΩ empty)"
            )));
        }
        live = prune(children, &hist, params.beam_width);
    }
    let times = nodes[k0..].to_vec();
    let mut members = Vec::with_capacity(live.len());
    let mut residuals = Vec::with_capacity(live.len());
    for m in live {
        residuals.push(m.resid);
        members.push(Trajectory::new(d, times.clone(), hist.path(m.node, times.len()))?);
    }
    Ok(Funnel {
        seed_time: s,
        seed_point: x.to_vec(),
        members,
        residuals,
        beam_width: params.beam_width,
        branch_factor: params.branch_factor,
    })
}

/// `max_k dist(F(t_k, γ_k), (γ_{k+1} − γ_k)/Δt)`.
pub fn inclusion_residual(traj: &Trajectory, field: &VelocityField, params: &EnvelopeParams) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..traj.len().saturating_sub(1) {
        let env = filippov_envelope(field, traj.times[k], traj.state(k), params)?;
        worst = worst.max(set_distance(&env, &traj.velocity(k)));
    }
    Ok(worst)
}

/// `γ` on `[start, s]` followed by `η` on `[s, T]`.
pub fn splice(gamma: &Trajectory, eta: &Trajectory, s: f64, merge_tol: f64) -> Result<Trajectory> {
    if gamma.dim != eta.dim {
        return Err(Error::Argument("splice of trajectories with different dimensions".into()));
    }
    let k = gamma
        .index_of(s)
        .ok_or_else(|| Error::Argument(format!("splice time {s} not on the first trajectory")))?;
    if libm::fabs(eta.start_time() - s) > 1e-9 * (1.0 + libm::fabs(s)) {
        return Err(Error::Argument(format!("second trajectory starts at {}, not {s}", eta.start_time())));
    }
    let gap = dist(gamma.state(k), eta.start_point());
    if gap > merge_tol {
        return Err(Error::Argument(format!("splice mismatch {gap} exceeds merge_tol {merge_tol}")));
    }
    let mut times = gamma.times[..k].to_vec();
    times.extend_from_slice(&eta.times);
    let mut states = gamma.states[..k * gamma.dim].to_vec();
    states.extend_from_slice(&eta.states);
    Trajectory::new(gamma.dim, times, states)
}

/// Tail of `γ` from grid time `s`.
pub fn restrict(gamma: &Trajectory, s: f64) -> Result<Trajectory> {
    let k = gamma
        .index_of(s)
        .ok_or_else(|| Error::Argument(format!("restriction time {s} outside the trajectory")))?;
    Trajectory::new(gamma.dim, gamma.times[k..].to_vec(), gamma.states[k * gamma.dim..].to_vec())
}

/// `(|x| + c τ) e^{c τ}` with `τ = t − s`.
pub fn gronwall_bound(x_norm: f64, growth_c: f64, elapsed: f64) -> f64 {
    (x_norm + growth_c * elapsed) * libm::exp(growth_c * elapsed)
}

/// Largest excess of `|γ(t)|` over the Gronwall envelope widened by the
/// envelope radius `delta`: Euler steps with velocities bounded by
/// `c(1 + |x| + δ)` obey `|γ(t)| <= (|x| + cτ)e^{cτ} + δ(e^{cτ} − 1)`.
pub fn gronwall_excess(traj: &Trajectory, growth_c: f64, delta: f64) -> f64 {
    let x0 = norm(traj.start_point());
    let s = traj.start_time();
    let mut worst = f64::NEG_INFINITY;
    for k in 0..traj.len() {
        let tau = traj.times[k] - s;
        let bound = gronwall_bound(x0, growth_c, tau) + delta * (libm::exp(growth_c * tau) - 1.0);
        worst = worst.max(norm(traj.state(k)) - bound);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::SpatialDomain;
    use crate::filippov::SupportMode;

    fn setup(id: &str, lo: f64, hi: f64, params: &[f64], n: usize) -> (VelocityField, TimeGrid, FunnelParams) {
        let f = VelocityField::from_registry(id, params, 1.0, SpatialDomain::interval(lo, hi).unwrap()).unwrap();
        let g = TimeGrid::uniform(0.0, 1.0, n).unwrap();
        let p = FunnelParams::defaults(&f, &g, 1);
        (f, g, p)
    }

    #[test]
    fn constant_field_single_member() {
        let (f, g, mut p) = setup("constant", -1.0, 3.0, &[1.0], 32);
        for beam in [1, 4, 16] {
            p.beam_width = beam;
            let fun = integrate_branching(&f, &p, &g, 0.0, &[0.25]).unwrap();
            assert_eq!(fun.len(), 1);
            let m = &fun.members[0];
            for (k, t) in m.times().iter().enumerate() {
                assert!((m.state(k)[0] - (0.25 + t)).abs() < 1e-14);
            }
            assert_eq!(inclusion_residual(m, &f, &p.envelope).unwrap(), 0.0);
        }
    }

    fn gamma_c(c: f64, t: f64) -> f64 {
        if t < c {
            0.0
        } else {
            (t - c) * (t - c)
        }
    }

    #[test]
    fn sqrt_funnel_contains_zero_curve_and_departures() {
        let (f, g, mut p) = setup("sqrt", -4.0, 4.0, &[], 64);
        p.envelope.delta_schedule = vec![0.02, 0.01, 0.005];
        p.beam_width = 32;
        let fun = integrate_branching(&f, &p, &g, 0.0, &[0.0]).unwrap();
        assert!(fun.len() >= 16);
        assert!(fun.members.iter().any(|m| m.states().iter().all(|x| *x == 0.0)));
        // curves that leave 0 late and early, tracking (t − c)² up to the envelope bias
        let leave_time = |m: &Trajectory| m.times().iter().zip(m.states()).find(|(_, x)| **x > 0.0).map(|(t, _)| *t);
        let mut leaves: Vec<f64> = fun.members.iter().filter_map(leave_time).collect();
        leaves.sort_by(f64::total_cmp);
        leaves.dedup();
        assert!(leaves.len() >= 5 && leaves[0] <= 0.05 && *leaves.last().unwrap() >= 0.2, "{leaves:?}");
        // the fastest member leaving at c stays within the envelope bias of γ_c
        for c in &leaves {
            let fastest = fun
                .members
                .iter()
                .filter(|m| leave_time(m) == Some(*c))
                .map(|m| m.end_point()[0])
                .fold(0.0, f64::max);
            let exact = gamma_c(c - g.dt(0), 1.0);
            assert!(fastest >= exact - 0.05 && fastest <= exact + 0.35, "c={c}: {fastest} vs {exact}");
        }
        assert!(fun.residuals.iter().all(|r| *r <= p.resid_tol));
    }

    #[test]
    fn sign_funnel_contains_rest_at_zero() {
        let (f, g, p) = setup("sign1d", -1.0, 1.0, &[], 32);
        let fun = integrate_branching(&f, &p, &g, 0.0, &[0.0]).unwrap();
        let rest = fun.members.iter().find(|m| m.states().iter().all(|x| *x == 0.0));
        let rest = rest.expect("γ ≡ 0 is a member");
        assert_eq!(inclusion_residual(rest, &f, &p.envelope).unwrap(), 0.0);
    }

    #[test]
    fn spurious_curve_has_large_residual() {
        let (f, g, mut p) = setup("sqrt", -1.0, 1.0, &[], 64);
        p.envelope.delta_schedule = vec![0.1, 0.05, 0.025];
        let t: Vec<f64> = g.nodes().to_vec();
        let lin = Trajectory::new(1, t.clone(), t.clone()).unwrap();
        assert!(inclusion_residual(&lin, &f, &p.envelope).unwrap() > 0.5);
    }

    #[test]
    fn compressive_funnel_lands_on_the_discontinuity() {
        let (f, g, p) = setup("compressive-sign", -1.0, 1.0, &[], 100);
        let fun = integrate_branching(&f, &p, &g, 0.0, &[0.5]).unwrap();
        assert!(fun.members.iter().any(|m| m.at(0.6).unwrap()[0] == 0.0 && m.end_point()[0] == 0.0));
    }

    #[test]
    fn outward_field_is_infeasible_at_the_boundary() {
        let (f, g, p) = setup("constant", -1.0, 1.0, &[1.0], 16);
        let e = integrate_branching(&f, &p, &g, 0.0, &[0.5]).unwrap_err();
        assert!(matches!(e, Error::Infeasible(_)));
    }

    #[test]
    fn splice_and_restrict_on_the_sqrt_family() {
        let g = TimeGrid::uniform(0.0, 1.0, 64).unwrap();
        let times = g.nodes().to_vec();
        let zero = Trajectory::constant(&[0.0], &times);
        let late: Vec<f64> = times.iter().filter(|t| **t >= 0.5).copied().collect();
        let eta = Trajectory::new(1, late.clone(), late.iter().map(|t| (t - 0.5) * (t - 0.5)).collect()).unwrap();
        let spliced = splice(&zero, &eta, 0.5, 1e-12).unwrap();
        for (k, t) in spliced.times().iter().enumerate() {
            assert_eq!(spliced.state(k)[0], gamma_c(0.5, *t));
        }
        assert_eq!(splice(&zero, &zero, 0.0, 1e-12).unwrap(), zero);
        let bad = Trajectory::constant(&[0.1], &late);
        assert!(splice(&zero, &bad, 0.5, 1e-8).is_err());

        let g25 = Trajectory::new(1, times.clone(), times.iter().map(|t| gamma_c(0.25, *t)).collect()).unwrap();
        let tail = restrict(&g25, 0.5).unwrap();
        assert_eq!(tail.start_time(), 0.5);
        for (k, t) in tail.times().iter().enumerate() {
            assert_eq!(tail.state(k)[0], (t - 0.25) * (t - 0.25));
        }
        assert_eq!(restrict(&g25, 0.0).unwrap(), g25);
        assert!(restrict(&g25, 1.5).is_err());
    }

    #[test]
    fn splice_restrict_do_not_increase_residual() {
        let (f, g, mut p) = setup("sqrt", -4.0, 4.0, &[], 32);
        p.envelope.delta_schedule = vec![0.05];
        let fun = integrate_branching(&f, &p, &g, 0.0, &[0.0]).unwrap();
        let gamma = &fun.members[fun.len() / 2];
        let r = inclusion_residual(gamma, &f, &p.envelope).unwrap();
        let s = g.nodes()[16];
        let tail = restrict(gamma, s).unwrap();
        assert!(inclusion_residual(&tail, &f, &p.envelope).unwrap() <= r);
        let eta_f = integrate_branching(&f, &p, &g, s, gamma.at(s).unwrap()).unwrap();
        let eta = &eta_f.members[0];
        let joined = splice(gamma, eta, s, p.merge_tol).unwrap();
        let rj = inclusion_residual(&joined, &f, &p.envelope).unwrap();
        let re = inclusion_residual(eta, &f, &p.envelope).unwrap();
        assert!(rj <= r.max(re));
        assert!(rj <= p.resid_tol);
    }

    #[test]
    fn members_obey_gronwall_and_determinism() {
        for (id, x0, lo, hi) in [("sqrt", 0.3, -4.0, 4.0), ("compressive-sign", -0.7, -1.0, 1.0)] {
            let (f, g, p) = setup(id, lo, hi, &[], 64);
            let a = integrate_branching(&f, &p, &g, 0.25, &[x0]).unwrap();
            let b = integrate_branching(&f, &p, &g, 0.25, &[x0]).unwrap();
            assert_eq!(a, b);
            for m in &a.members {
                assert!(gronwall_excess(m, f.growth_c(), p.envelope.delta_final()) <= 1e-12);
                assert_eq!(m.start_point(), &[x0]);
                assert!(m.states().iter().all(|x| *x >= lo && *x <= hi));
            }
            assert!(a.len() <= p.beam_width && !a.is_empty());
        }
    }

    #[test]
    fn sampled_and_exact_modes_both_build_funnels() {
        let (f, g, mut p) = setup("compressive-sign", -1.0, 1.0, &[], 32);
        p.envelope.mode = SupportMode::Sampled;
        let fun = integrate_branching(&f, &p, &g, 0.0, &[0.25]).unwrap();
        assert!(fun.members.iter().any(|m| m.end_point()[0] == 0.0));
    }
}
