//! Push-forward of an initial measure along a selected flow, as a weighted
//! particle ensemble.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::SpatialDomain;
use crate::math::dist;
use crate::select::{lattice_seeds, FlowMap};

/// Weighted particles `(x_i, w_i)` representing `ϱ̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    total_mass: f64,
}

impl ParticleEnsemble {
    /// Lebesgue measure on the box `[lower, upper]`: `n` equal-weight
    /// particles per axis at the cell midpoints.
    pub fn uniform(lower: &[f64], upper: &[f64], n: usize) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() || n == 0 {
            return Err(Error::Argument("uniform ensemble needs a nonempty box and n >= 1".into()));
        }
        let vol: f64 = lower.iter().zip(upper).map(|(a, b)| b - a).product();
        if !(vol > 0.0) {
            return Err(Error::Argument("uniform ensemble box has no volume".into()));
        }
        let pts = lattice_seeds(lower, upper, n);
        let w = vol / pts.len() as f64;
        let weights = vec![w; pts.len()];
        Self::point_masses(&pts, &weights)
    }

    /// Arbitrary positive point masses.
    pub fn point_masses(points: &[Vec<f64>], weights: &[f64]) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::Argument("point masses need matching nonempty lists".into()));
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Argument("point masses of mixed dimension".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Argument("particle weights must be positive and finite".into()));
        }
        let total_mass = weights.iter().sum();
        Ok(Self { dim, points: points.concat(), weights: weights.to_vec(), total_mass })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Sum of the weights in index order, as at construction.
    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Seed points, in index order, for building the flow from `s = t_start`.
    pub fn seeds(&self, s: f64) -> Vec<(f64, Vec<f64>)> {
        (0..self.len()).map(|i| (s, self.point(i).to_vec())).collect()
    }

    /// Index of each particle's seed `(t_start, x_i)` in the flow.
    pub fn bind(&self, flow: &FlowMap) -> Result<Vec<usize>> {
        if flow.dim() != self.dim {
            return Err(Error::Argument("ensemble and flow dimensions differ".into()));
        }
        let t0 = flow.grid().t_start();
        let e = flow.entries();
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let x = self.point(i);
            let j = if i < e.len() && e[i].s == t0 && e[i].x == x {
                Some(i)
            } else {
                flow.find_seed(t0, x, 0.0)
            };
            out.push(j.ok_or_else(|| Error::Argument(format!("particle {i} at {x:?} is not a flow seed")))?);
        }
        Ok(out)
    }
}

/// Uniform histogram over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub bins_per_axis: usize,
    pub masses: Vec<f64>,
}

impl Histogram {
    pub fn new(domain: &SpatialDomain, bins_per_axis: usize) -> Result<Self> {
        if bins_per_axis == 0 {
            return Err(Error::Config("histogram needs at least one bin".into()));
        }
        let n = bins_per_axis.pow(domain.dim() as u32);
        Ok(Self {
            lower: domain.lower().to_vec(),
            upper: domain.upper().to_vec(),
            bins_per_axis,
            masses: vec![0.0; n],
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.bins_per_axis as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    /// Multi-index of the bin containing `z`; the upper face belongs to the last bin.
    pub fn multi_index(&self, z: &[f64]) -> Vec<usize> {
        (0..self.dim())
            .map(|i| {
                let r = libm::floor((z[i] - self.lower[i]) / self.width(i));
                (r.max(0.0) as usize).min(self.bins_per_axis - 1)
            })
            .collect()
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, i| acc * self.bins_per_axis + i)
    }

    pub fn unflat(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for i in (0..self.dim()).rev() {
            idx[i] = flat % self.bins_per_axis;
            flat /= self.bins_per_axis;
        }
        idx
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        self.unflat(flat)
            .iter()
            .enumerate()
            .map(|(i, j)| self.lower[i] + (*j as f64 + 0.5) * self.width(i))
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Aggregated cluster of merged particles.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub location: Vec<f64>,
    pub mass: f64,
    pub count: usize,
}

/// `ϱ(t, ·)` as bins plus atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySnapshot {
    pub t: f64,
    pub bins: Histogram,
    pub atoms: Vec<Atom>,
    /// Weight sum of the ensemble in index order.
    pub total_mass: f64,
}

impl DensitySnapshot {
    pub fn mass(&self) -> f64 {
        self.bins.total() + self.atoms.iter().map(|a| a.mass).sum::<f64>()
    }

    /// Atom whose location is within `tol` of `z`.
    pub fn atom_near(&self, z: &[f64], tol: f64) -> Option<&Atom> {
        self.atoms.iter().find(|a| dist(&a.location, z) <= tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotParams {
    pub bins_per_axis: usize,
    pub merge_tol: f64,
    /// Minimum cluster size counted as an atom; `None` means `max(2, ⌈0.01·N⌉)`.
    pub atom_threshold: Option<usize>,
}

impl SnapshotParams {
    pub fn new(bins_per_axis: usize, merge_tol: f64) -> Self {
        Self { bins_per_axis, merge_tol, atom_threshold: None }
    }

    pub fn threshold(&self, n: usize) -> usize {
        self.atom_threshold.unwrap_or_else(|| 2.max(n.div_ceil(100)))
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Groups of particle indices whose positions chain within `tol`.
pub fn clusters(positions: &[&[f64]], tol: f64) -> Vec<Vec<usize>> {
    let n = positions.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| positions[*a][0].total_cmp(&positions[*b][0]));
    let mut parent: Vec<usize> = (0..n).collect();
    for a in 0..n {
        for b in (a + 1)..n {
            let (i, j) = (order[a], order[b]);
            if positions[j][0] - positions[i][0] > tol {
                break;
            }
            if dist(positions[i], positions[j]) <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// Locates each particle at `X(t, 0, x_i)`, aggregates large clusters into
/// atoms and bins the rest.
pub fn push_forward(
    flow: &FlowMap,
    ensemble: &ParticleEnsemble,
    t: f64,
    params: &SnapshotParams,
) -> Result<DensitySnapshot> {
    let binding = ensemble.bind(flow)?;
    push_forward_bound(flow, ensemble, &binding, t, params)
}

/// [`push_forward`] with a precomputed [`ParticleEnsemble::bind`].
pub fn push_forward_bound(
    flow: &FlowMap,
    ensemble: &ParticleEnsemble,
    binding: &[usize],
    t: f64,
    params: &SnapshotParams,
) -> Result<DensitySnapshot> {
    if flow.grid().index_of(t).is_none() {
        return Err(Error::Argument(format!("snapshot time {t} is not a grid node")));
    }
    let mut pos: Vec<&[f64]> = Vec::with_capacity(ensemble.len());
    for &j in binding {
        pos.push(flow.position(j, t).ok_or_else(|| Error::Argument(format!("flow seed {j} undefined at {t}")))?);
    }
    let threshold = params.threshold(ensemble.len());
    let mut bins = Histogram::new(flow.domain(), params.bins_per_axis)?;
    let mut atoms = Vec::new();
    let w = ensemble.weights();
    for group in clusters(&pos, params.merge_tol) {
        if group.len() >= threshold {
            let mass: f64 = group.iter().map(|i| w[*i]).sum();
            let mut loc = vec![0.0; ensemble.dim()];
            for &i in &group {
                for (l, p) in loc.iter_mut().zip(pos[i]) {
                    *l += w[i] * p;
                }
            }
            loc.iter_mut().for_each(|l| *l /= mass);
            atoms.push(Atom { location: loc, mass, count: group.len() });
        } else {
            for &i in &group {
                let k = bins.flat(&bins.multi_index(pos[i]));
                bins.masses[k] += w[i];
            }
        }
    }
    atoms.sort_by(|a, b| crate::math::lex_cmp(&a.location, &b.location));
    Ok(DensitySnapshot { t, bins, atoms, total_mass: ensemble.weight_sum() })
}

/// `ψ(t, z) = a·β((t − t_c)/r_t)·β(|z − z_c|/r_z)` with `β(s) = (1 − s²)²` on `|s| < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeBump {
    pub t_center: f64,
    pub t_radius: f64,
    pub x_center: Vec<f64>,
    pub x_radius: f64,
    pub amplitude: f64,
}

impl SpaceTimeBump {
    fn beta(s: f64) -> f64 {
        if s.abs() >= 1.0 {
            0.0
        } else {
            let q = 1.0 - s * s;
            q * q
        }
    }

    pub fn value(&self, t: f64, z: &[f64]) -> f64 {
        let tau = (t - self.t_center) / self.t_radius;
        let rho = dist(z, &self.x_center) / self.x_radius;
        self.amplitude * Self::beta(tau) * Self::beta(rho)
    }

    /// `(∂_t ψ, ∇ψ)` at `(t, z)`.
    pub fn gradient(&self, t: f64, z: &[f64]) -> (f64, Vec<f64>) {
        let tau = (t - self.t_center) / self.t_radius;
        let rho = dist(z, &self.x_center) / self.x_radius;
        if tau.abs() >= 1.0 || rho >= 1.0 {
            return (0.0, vec![0.0; z.len()]);
        }
        let bt = Self::beta(tau);
        let br = Self::beta(rho);
        let dt = self.amplitude * (-4.0 * tau * (1.0 - tau * tau)) / self.t_radius * br;
        // β'(ρ)/ρ = −4(1 − ρ²), so the spatial gradient is regular at the center
        let g = self.amplitude * bt * (-4.0 * (1.0 - rho * rho)) / (self.x_radius * self.x_radius);
        (dt, z.iter().zip(&self.x_center).map(|(a, c)| g * (a - c)).collect())
    }

    /// Support inside `(t0, t1) × Ω̊`.
    pub fn supported_in(&self, t0: f64, t1: f64, domain: &SpatialDomain) -> bool {
        self.t_center - self.t_radius > t0
            && self.t_center + self.t_radius < t1
            && (0..domain.dim()).all(|i| {
                self.x_center[i] - self.x_radius > domain.lower()[i]
                    && self.x_center[i] + self.x_radius < domain.upper()[i]
            })
    }
}

/// `max_ψ |Σ_i w_i ∫ (∂_t ψ + v·∇ψ)(t, X(t, 0, x_i)) dt|`, with `v` the
/// particle's own discrete velocity and midpoint quadrature per step.
pub fn continuity_residual(flow: &FlowMap, ensemble: &ParticleEnsemble, test_fns: &[SpaceTimeBump]) -> Result<f64> {
    let g = flow.grid();
    for psi in test_fns {
        if psi.amplitude != 0.0 && !psi.supported_in(g.t_start(), g.t_end(), flow.domain()) {
            return Err(Error::Argument("test function not compactly supported in (0,T)×Ω".into()));
        }
    }
    let binding = ensemble.bind(flow)?;
    let w = ensemble.weights();
    let d = ensemble.dim();
    let mut worst: f64 = 0.0;
    for psi in test_fns {
        if psi.amplitude == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for (i, &j) in binding.iter().enumerate() {
            let tr = &flow.entries()[j].trajectory;
            let mut part = 0.0;
            for k in 0..tr.len() - 1 {
                let (t0, t1) = (tr.times()[k], tr.times()[k + 1]);
                let h = t1 - t0;
                let (a, b) = (tr.state(k), tr.state(k + 1));
                let mid: Vec<f64> = (0..d).map(|q| 0.5 * (a[q] + b[q])).collect();
                let (pt, px) = psi.gradient(0.5 * (t0 + t1), &mid);
                let adv: f64 = (0..d).map(|q| (b[q] - a[q]) / h * px[q]).sum();
                part += h * (pt + adv);
            }
            acc += w[i] * part;
        }
        worst = worst.max(acc.abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncompressibilityReport {
    pub ok: bool,
    pub worst_ratio: f64,
    pub atoms: usize,
    pub bins_checked: usize,
}

/// Bin densities relative to `initial_density` must lie in
/// `[1/c_bound, c_bound]`. Occupied bins with an empty axis neighbour sit on
/// the edge of the support and are only partially covered, so they are
/// skipped; any atom fails the check.
pub fn near_incompressibility(
    snapshots: &[DensitySnapshot],
    initial_density: f64,
    c_bound: f64,
) -> IncompressibilityReport {
    let mut rep = IncompressibilityReport { ok: true, worst_ratio: 1.0, atoms: 0, bins_checked: 0 };
    for snap in snapshots {
        rep.atoms += snap.atoms.len();
        let h = &snap.bins;
        let vol = h.cell_volume();
        for k in 0..h.masses.len() {
            if h.masses[k] == 0.0 {
                continue;
            }
            let idx = h.unflat(k);
            let edge = (0..h.dim()).any(|a| {
                let mut nb = idx.clone();
                let lo = idx[a] > 0 && {
                    nb[a] = idx[a] - 1;
                    h.masses[h.flat(&nb)] == 0.0
                };
                let hi = idx[a] + 1 < h.bins_per_axis && {
                    nb[a] = idx[a] + 1;
                    h.masses[h.flat(&nb)] == 0.0
                };
                lo || hi
            });
            if edge {
                continue;
            }
            rep.bins_checked += 1;
            let r = h.masses[k] / vol / initial_density;
            rep.worst_ratio = rep.worst_ratio.max(r.max(1.0 / r));
        }
    }
    rep.ok = rep.atoms == 0 && rep.worst_ratio <= c_bound;
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{TimeGrid, VelocityField};
    use crate::funnel::FunnelParams;
    use crate::select::{build_flow, FunctionalSchedule};

    fn flow(id: &str, lo: f64, hi: f64, ens: &ParticleEnsemble, n: usize, delta: f64) -> FlowMap {
        let f = VelocityField::from_registry(id, &[1.0], 1.0, SpatialDomain::interval(lo, hi).unwrap()).unwrap();
        let g = TimeGrid::uniform(0.0, 1.0, n).unwrap();
        let mut p = FunnelParams::defaults(&f, &g, 1);
        p.envelope.delta_schedule = vec![delta];
        let sched = FunctionalSchedule::dyadic(f.domain(), 4, 32).unwrap();
        build_flow(&f, &ens.seeds(0.0), &g, &p, &sched, 1e-9).unwrap()
    }

    #[test]
    fn uniform_ensemble_mass() {
        let e = ParticleEnsemble::uniform(&[-1.0], &[1.0], 1000).unwrap();
        assert_eq!(e.len(), 1000);
        assert!((e.total_mass() - 2.0).abs() < 1e-12);
        assert_eq!(e.weight_sum(), e.total_mass());
        assert!(ParticleEnsemble::point_masses(&[vec![0.0]], &[-1.0]).is_err());
    }

    #[test]
    fn identity_snapshot_at_t0() {
        let e = ParticleEnsemble::uniform(&[-1.0], &[1.0], 64).unwrap();
        let fl = flow("compressive-sign", -1.0, 1.0, &e, 8, 0.125);
        let s = push_forward(&fl, &e, 0.0, &SnapshotParams::new(16, 1e-8)).unwrap();
        assert!(s.atoms.is_empty());
        assert!(s.bins.masses.iter().all(|m| (m - 0.125).abs() < 1e-12));
        assert!((s.mass() - s.total_mass).abs() <= 1e-12 * s.total_mass);
    }

    #[test]
    fn constant_translation() {
        let e = ParticleEnsemble::uniform(&[-1.0], &[0.0], 64).unwrap();
        let fl = flow("constant", -1.0, 3.0, &e, 16, 1e-3);
        let s = push_forward(&fl, &e, 1.0, &SnapshotParams::new(16, 1e-8)).unwrap();
        assert!(s.atoms.is_empty());
        // bins of width 0.25: [0,1] is bins 4..8
        for (k, m) in s.bins.masses.iter().enumerate() {
            let expect = if (4..8).contains(&k) { 0.25 } else { 0.0 };
            assert!((m - expect).abs() < 1e-12, "bin {k}: {m}");
        }
        let rep = near_incompressibility(&[s], 1.0, 1.01);
        assert!(rep.ok && (rep.worst_ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sticky_atom_mass() {
        let n = 400;
        let e = ParticleEnsemble::uniform(&[-1.0], &[1.0], n).unwrap();
        let fl = flow("compressive-sign", -1.0, 1.0, &e, 20, 0.05);
        for t in [0.25, 0.5, 0.75, 1.0] {
            let s = push_forward(&fl, &e, t, &SnapshotParams::new(20, 1e-8)).unwrap();
            let atom = s.atom_near(&[0.0], 1e-12).expect("atom at 0");
            let oracle: f64 = (0..n).map(|i| e.point(i)[0]).filter(|x| x.abs() <= t).count() as f64 * 2.0 / n as f64;
            assert!((atom.mass - oracle).abs() < 1e-12, "t={t}: {} vs {oracle} ({} particles)", atom.mass, atom.count);
            assert!((atom.mass - 2.0 * t).abs() <= 2.0 * 2.0 / (n as f64).sqrt());
            assert_eq!(s.total_mass, e.total_mass());
            assert!((s.mass() - s.total_mass).abs() <= 1e-12 * s.total_mass);
            assert!(!near_incompressibility(&[s], 1.0, 2.0).ok);
        }
    }

    #[test]
    fn expanding_field_jacobian() {
        let e = ParticleEnsemble::uniform(&[-1.0], &[1.0], 4000).unwrap();
        let fl = flow("linear", -3.0, 3.0, &e, 64, 1e-9);
        let s = push_forward(&fl, &e, 0.5, &SnapshotParams::new(16, 1e-8)).unwrap();
        assert!(s.atoms.is_empty());
        let rep = near_incompressibility(&[s], 1.0, 2.0);
        assert!(rep.ok && rep.bins_checked >= 8);
        // explicit Euler Jacobian (1 + Δt)^{32} ≈ e^{0.5}
        assert!((rep.worst_ratio - 0.5f64.exp()).abs() < 0.03, "{}", rep.worst_ratio);
    }

    #[test]
    fn clusters_chain_and_split() {
        let pts = [[0.0], [1e-9], [2e-9], [1.0], [0.5]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| &p[..]).collect();
        let mut g = clusters(&refs, 1.5e-9);
        g.sort();
        assert_eq!(g, vec![vec![0, 1, 2], vec![3], vec![4]]);
    }

    #[test]
    fn bump_gradient_matches_differences() {
        let psi = SpaceTimeBump { t_center: 0.5, t_radius: 0.3, x_center: vec![0.1], x_radius: 0.4, amplitude: 2.0 };
        let (t, z) = (0.61, 0.27);
        let h = 1e-6;
        let (pt, px) = psi.gradient(t, &[z]);
        let ft = (psi.value(t + h, &[z]) - psi.value(t - h, &[z])) / (2.0 * h);
        let fx = (psi.value(t, &[z + h]) - psi.value(t, &[z - h])) / (2.0 * h);
        assert!((pt - ft).abs() < 1e-6 && (px[0] - fx).abs() < 1e-6);
    }

    #[test]
    fn continuity_residual_small() {
        let e = ParticleEnsemble::uniform(&[-1.0], &[1.0], 200).unwrap();
        let psi = vec![
            SpaceTimeBump { t_center: 0.5, t_radius: 0.3, x_center: vec![0.0], x_radius: 0.5, amplitude: 1.0 },
            SpaceTimeBump { t_center: 0.4, t_radius: 0.2, x_center: vec![0.3], x_radius: 0.3, amplitude: 1.0 },
        ];
        let zero = vec![SpaceTimeBump { amplitude: 0.0, ..psi[0].clone() }];
        let fl = flow("compressive-sign", -1.0, 1.0, &e, 32, 1.0 / 32.0);
        assert_eq!(continuity_residual(&fl, &e, &zero).unwrap(), 0.0);
        let r = continuity_residual(&fl, &e, &psi).unwrap();
        assert!(r <= 1.0 / 32.0 + 1.0 / (200f64).sqrt(), "{r}");

        let ec = ParticleEnsemble::uniform(&[-1.0], &[0.0], 100).unwrap();
        let shifted = vec![SpaceTimeBump { x_center: vec![0.0], ..psi[0].clone() }];
        let r1 = continuity_residual(&flow("constant", -1.0, 3.0, &ec, 16, 1e-3), &ec, &shifted).unwrap();
        let r2 = continuity_residual(&flow("constant", -1.0, 3.0, &ec, 32, 1e-3), &ec, &shifted).unwrap();
        assert!(r2 <= r1 + 1e-15 && r1 <= 1.0 / 16.0);
    }
}
