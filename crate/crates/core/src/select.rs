//! Selection of one curve per seed by iterated maximization of
//! `f_{λ,φ}(γ) = ∫ e^{−λt} φ(γ(t)) dt` over the funnel beam.
//!
//! The schedule pairs rates `μ_n = n` with Lipschitz tents centered on the
//! dyadic cell centers of Ω, enumerated along Cantor diagonals. After the
//! truncated schedule is exhausted, remaining ties are broken by the
//! lexicographic order of the sampled states.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{SpatialDomain, TimeGrid, VelocityField};
use crate::funnel::{integrate_branching, restrict, FunnelParams, Trajectory};
use crate::math::{dist, lex_cmp};

/// `φ(z) = amplitude · max(0, 1 − k |z − y|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tent {
    pub center: Vec<f64>,
    pub steepness: f64,
    pub amplitude: f64,
}

impl Tent {
    pub fn new(center: Vec<f64>, steepness: f64) -> Self {
        Self { center, steepness, amplitude: 1.0 }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.amplitude * (1.0 - self.steepness * dist(z, &self.center)).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleEntry {
    pub lambda: f64,
    pub tent: Tent,
}

/// Ordered, truncated list of `(λ_k, φ_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSchedule {
    pub entries: Vec<ScheduleEntry>,
}

impl FunctionalSchedule {
    /// Tents of levels `0..levels`: level `l` has the `2^l` cell centers per
    /// axis and steepness `2^{l+1} / side`, where `side` is the longest edge.
    pub fn dyadic_tents(domain: &SpatialDomain, levels: usize) -> Vec<Tent> {
        let d = domain.dim();
        let side = (0..d).map(|i| domain.upper()[i] - domain.lower()[i]).fold(0.0, f64::max);
        let mut tents = Vec::new();
        for l in 0..levels {
            let per_axis = 1usize << l;
            let k = (1u64 << (l + 1)) as f64 / side;
            let count = per_axis.pow(d as u32);
            for flat in 0..count {
                let mut rem = flat;
                let mut center = vec![0.0; d];
                for i in (0..d).rev() {
                    let j = rem % per_axis;
                    rem /= per_axis;
                    let h = (domain.upper()[i] - domain.lower()[i]) / per_axis as f64;
                    center[i] = domain.lower()[i] + (j as f64 + 0.5) * h;
                }
                tents.push(Tent::new(center, k));
            }
        }
        tents
    }

    /// First `k` pairs `(μ_n, g_i)` of the Cantor diagonal enumeration with
    /// `μ_n = n`, over the dyadic tents of `levels` levels.
    pub fn dyadic(domain: &SpatialDomain, levels: usize, k: usize) -> Result<Self> {
        if levels == 0 || k == 0 {
            return Err(Error::Config("schedule needs at least one tent level and K >= 1".into()));
        }
        let tents = Self::dyadic_tents(domain, levels);
        let mut entries = Vec::with_capacity(k);
        let mut diag = 0usize;
        while entries.len() < k {
            for i in 0..=diag {
                if i >= tents.len() {
                    break;
                }
                let n = diag - i + 1;
                entries.push(ScheduleEntry { lambda: n as f64, tent: tents[i].clone() });
                if entries.len() == k {
                    break;
                }
            }
            diag += 1;
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn truncated(&self, k: usize) -> Self {
        Self { entries: self.entries[..k.min(self.entries.len())].to_vec() }
    }

    /// Same schedule with every tent multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        for e in &mut s.entries {
            e.tent.amplitude *= factor;
        }
        s
    }
}

/// Trapezoidal `∫ e^{−λt} φ(γ(t)) dt` over the trajectory's samples.
pub fn functional_value(gamma: &Trajectory, lambda: f64, tent: &Tent) -> f64 {
    let g = |k: usize| libm::exp(-lambda * gamma.times()[k]) * tent.eval(gamma.state(k));
    let mut acc = 0.0;
    let mut prev = g(0);
    for k in 1..gamma.len() {
        let cur = g(k);
        acc += 0.5 * (gamma.times()[k] - gamma.times()[k - 1]) * (prev + cur);
        prev = cur;
    }
    acc
}

/// Outcome of [`iterated_argmax`].
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Index into the member list.
    pub index: usize,
    /// Stage after which a single survivor remained (0 = singleton input).
    pub singleton_stage: Option<usize>,
    pub survivors: usize,
}

/// Sequentially keeps the members within `tie_tol·range` of each stage's
/// maximum; the canonical (lexicographic) first survivor wins ties.
pub fn iterated_argmax(members: &[Trajectory], schedule: &FunctionalSchedule, tie_tol: f64) -> Result<Selection> {
    if members.is_empty() {
        return Err(Error::Argument("iterated_argmax on an empty funnel".into()));
    }
    if schedule.is_empty() {
        return Err(Error::Argument("iterated_argmax needs K >= 1".into()));
    }
    let mut alive: Vec<usize> = (0..members.len()).collect();
    let mut singleton_stage = (alive.len() == 1).then_some(0);
    for (k, e) in schedule.entries.iter().enumerate() {
        if alive.len() == 1 {
            break;
        }
        let vals: Vec<f64> = alive.iter().map(|&i| functional_value(&members[i], e.lambda, &e.tent)).collect();
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let cut = max - tie_tol * (max - min);
        alive = alive.iter().zip(&vals).filter(|(_, v)| **v >= cut).map(|(i, _)| *i).collect();
        if alive.len() == 1 && singleton_stage.is_none() {
            singleton_stage = Some(k + 1);
        }
    }
    let survivors = alive.len();
    let index = alive
        .into_iter()
        .min_by(|a, b| lex_cmp(members[*a].states(), members[*b].states()))
        .expect("nonempty");
    Ok(Selection { index, singleton_stage, survivors })
}

/// Selected curve for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowEntry {
    pub s: f64,
    pub x: Vec<f64>,
    pub trajectory: Trajectory,
    pub residual: f64,
    pub singleton_stage: Option<usize>,
    pub funnel_size: usize,
}

/// Selected trajectories `X(·, s, x)` for a finite seed table.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap {
    grid: TimeGrid,
    domain: SpatialDomain,
    entries: Vec<FlowEntry>,
}

impl FlowMap {
    pub fn new(grid: TimeGrid, domain: SpatialDomain) -> Self {
        Self { grid, domain, entries: Vec::new() }
    }

    pub fn from_entries(grid: TimeGrid, domain: SpatialDomain, entries: Vec<FlowEntry>) -> Result<Self> {
        let mut f = Self::new(grid, domain);
        for e in entries {
            f.push(e)?;
        }
        Ok(f)
    }

    /// Adds a seed; its trajectory must run from `s` to the end of the grid.
    pub fn push(&mut self, entry: FlowEntry) -> Result<()> {
        let tr = &entry.trajectory;
        if tr.dim() != self.dim() || entry.x.len() != self.dim() {
            return Err(Error::Argument("flow entry dimension mismatch".into()));
        }
        let k = self
            .grid
            .index_of(entry.s)
            .ok_or_else(|| Error::Argument(format!("seed time {} not on the grid", entry.s)))?;
        if tr.len() != self.grid.nodes().len() - k || tr.start_point() != &entry.x[..] {
            return Err(Error::Argument("flow entry trajectory does not start at its seed".into()));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn domain(&self) -> &SpatialDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn entries(&self) -> &[FlowEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Nearest seed with start time `s` within `snap_tol` of `x`.
    pub fn find_seed(&self, s: f64, x: &[f64], snap_tol: f64) -> Option<usize> {
        let tol_t = 1e-9 * self.grid.max_dt();
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            if libm::fabs(e.s - s) > tol_t {
                continue;
            }
            let d = dist(&e.x, x);
            if d <= snap_tol && best.is_none_or(|(_, b)| d < b) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }

    /// `X(t, s_i, x_i)` for seed `i`.
    pub fn position(&self, seed: usize, t: f64) -> Option<&[f64]> {
        self.entries.get(seed).and_then(|e| e.trajectory.at(t))
    }

    pub fn resid_max(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }
}

/// Builds the funnel at `(s, x)` and selects its curve.
pub fn select_seed(
    field: &VelocityField,
    grid: &TimeGrid,
    params: &FunnelParams,
    schedule: &FunctionalSchedule,
    tie_tol: f64,
    s: f64,
    x: &[f64],
) -> Result<FlowEntry> {
    let funnel = integrate_branching(field, params, grid, s, x)?;
    let sel = iterated_argmax(&funnel.members, schedule, tie_tol)?;
    let residual = funnel.residuals[sel.index];
    let funnel_size = funnel.len();
    let trajectory = funnel.members.into_iter().nth(sel.index).expect("selected index");
    Ok(FlowEntry { s, x: x.to_vec(), trajectory, residual, singleton_stage: sel.singleton_stage, funnel_size })
}

/// Sequential flow construction over all seeds.
pub fn build_flow(
    field: &VelocityField,
    seeds: &[(f64, Vec<f64>)],
    grid: &TimeGrid,
    params: &FunnelParams,
    schedule: &FunctionalSchedule,
    tie_tol: f64,
) -> Result<FlowMap> {
    let mut flow = FlowMap::new(grid.clone(), field.domain().clone());
    for (s, x) in seeds {
        flow.push(select_seed(field, grid, params, schedule, tie_tol, *s, x)?)?;
    }
    Ok(flow)
}

/// A semigroup query `X(t, r, x)` vs `X(t, s, X(s, r, x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub r: f64,
    pub s: f64,
    pub t: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SemigroupReport {
    pub max_defect: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Seeds `(s, X(s, r, x))` the triples need but the flow does not have yet.
pub fn semigroup_intermediates(flow: &FlowMap, triples: &[Triple], snap_tol: f64) -> Vec<(f64, Vec<f64>)> {
    let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
    for q in triples {
        let Some(i) = flow.find_seed(q.r, &q.x, snap_tol) else { continue };
        let Some(y) = flow.position(i, q.s) else { continue };
        if flow.find_seed(q.s, y, 0.0).is_none() && !out.iter().any(|(s, z)| *s == q.s && z == y) {
            out.push((q.s, y.to_vec()));
        }
    }
    out
}

/// `max |X(t, r, x) − X(t, s, X(s, r, x))|` over the triples, snapping to the
/// nearest seed within `snap_tol`; unsnappable triples are counted as skipped.
pub fn check_semigroup(flow: &FlowMap, triples: &[Triple], snap_tol: f64) -> SemigroupReport {
    let mut rep = SemigroupReport::default();
    for q in triples {
        if !(q.r <= q.s && q.s <= q.t) {
            rep.skipped += 1;
            continue;
        }
        let Some(i) = flow.find_seed(q.r, &q.x, snap_tol) else {
            rep.skipped += 1;
            continue;
        };
        let (Some(y), Some(direct)) = (flow.position(i, q.s), flow.position(i, q.t)) else {
            rep.skipped += 1;
            continue;
        };
        let Some(j) = flow.find_seed(q.s, y, snap_tol) else {
            rep.skipped += 1;
            continue;
        };
        let Some(composed) = flow.position(j, q.t) else {
            rep.skipped += 1;
            continue;
        };
        rep.max_defect = rep.max_defect.max(dist(direct, composed));
        rep.checked += 1;
    }
    rep
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UntangledReport {
    pub violations: usize,
    pub worst_resep: f64,
    pub merged_pairs: usize,
}

/// For every pair of seeds sharing a start time: once they come within
/// `merge_tol`, their later separation must stay below `resep_tol`.
pub fn check_untangled(flow: &FlowMap, merge_tol: f64, resep_tol: f64) -> UntangledReport {
    let mut rep = UntangledReport::default();
    let e = flow.entries();
    for i in 0..e.len() {
        for j in (i + 1)..e.len() {
            if e[i].s != e[j].s {
                continue;
            }
            let (a, b) = (&e[i].trajectory, &e[j].trajectory);
            let Some(k0) = (0..a.len()).find(|&k| dist(a.state(k), b.state(k)) <= merge_tol) else {
                continue;
            };
            rep.merged_pairs += 1;
            let worst = (k0..a.len()).map(|k| dist(a.state(k), b.state(k))).fold(0.0, f64::max);
            rep.worst_resep = rep.worst_resep.max(worst);
            if worst > resep_tol {
                rep.violations += 1;
            }
        }
    }
    rep
}

/// Sup distance between `restrict(X(·, r, x), s)` and the selected curve of
/// the seed `(s, X(s, r, x))`, if that seed is in the flow.
pub fn restriction_defect(flow: &FlowMap, seed: usize, s: f64, snap_tol: f64) -> Option<f64> {
    let e = flow.entries().get(seed)?;
    let tail = restrict(&e.trajectory, s).ok()?;
    let j = flow.find_seed(s, tail.start_point(), snap_tol)?;
    Some(tail.sup_distance(&flow.entries()[j].trajectory))
}

/// Cell midpoints of a uniform `n`-per-axis lattice on the box `[lower, upper]`.
pub fn lattice_seeds(lower: &[f64], upper: &[f64], n: usize) -> Vec<Vec<f64>> {
    let d = lower.len();
    let mut out = Vec::with_capacity(n.pow(d as u32));
    for flat in 0..n.pow(d as u32) {
        let mut rem = flat;
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            let j = rem % n;
            rem /= n;
            x[i] = lower[i] + (j as f64 + 0.5) * (upper[i] - lower[i]) / n as f64;
        }
        out.push(x);
    }
    out
}
