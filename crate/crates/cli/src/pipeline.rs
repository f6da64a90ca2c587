//! The full scenario pipeline and its certificates.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use untangled_core::density::{
    continuity_residual, near_incompressibility, push_forward_bound, DensitySnapshot, ParticleEnsemble,
    SnapshotParams, SpaceTimeBump,
};
use untangled_core::field::{SpatialDomain, TimeGrid, VelocityField};
use untangled_core::filippov::{DirectionSet, SupportMode};
use untangled_core::funnel::{gronwall_excess, FunnelParams};
use untangled_core::galerkin::{
    assemble_system, discrete_inf_sup, orthogonality_defect, residual_norm, solve, FnCoefficients,
    GalerkinSolution, GalerkinSystem, NodeCoefficients, TestSpace, TrialBasis,
};
use untangled_core::select::{
    check_semigroup, check_untangled, lattice_seeds, select_seed, semigroup_intermediates, FlowMap,
    FunctionalSchedule, Triple,
};
use untangled_core::transport::{
    assemble_flow_solution, pull_back_data, shift_zeroth_order, solve_characteristic_ode, CharacteristicSolution,
    PulledBackProblem,
};

use crate::config::{ScenarioConfig, SupportModeName};
use crate::output::Artifacts;
use crate::{stage, thread_pool, Failure};

/// Field, grid and selection settings shared by every stage.
#[derive(Debug, Clone)]
pub struct Setup {
    pub field: VelocityField,
    pub grid: TimeGrid,
    pub params: FunnelParams,
    pub schedule: FunctionalSchedule,
    pub tie_tol: f64,
}

impl Setup {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, Failure> {
        let domain = stage("field", SpatialDomain::new(cfg.domain.lower.clone(), cfg.domain.upper.clone()))?;
        let field = stage(
            "field",
            VelocityField::from_registry(&cfg.field.id, &cfg.field.params, cfg.field.growth_c, domain),
        )?;
        let grid = stage("field", TimeGrid::uniform(cfg.time.t_start, cfg.time.t_end, cfg.steps()))?;
        let mut params = FunnelParams::defaults(&field, &grid, cfg.funnel.seed);
        let env = &cfg.envelope;
        if let Some(d) = &env.delta {
            params.envelope.delta_schedule = d.clone();
        }
        params.envelope.samples = env.samples;
        params.envelope.mode = match env.mode {
            SupportModeName::Exact => SupportMode::ExactWhenAvailable,
            SupportModeName::Sampled => SupportMode::Sampled,
        };
        if let Some(n) = env.directions {
            if field.dim() != 2 {
                return Err(Failure::Config("`envelope.directions` applies to 2-D domains only".into()));
            }
            params.envelope.dirs = Arc::new(stage("envelope", DirectionSet::circle(n))?);
        }
        params.branch_factor = cfg.funnel.branch_factor.unwrap_or(params.envelope.dirs.len());
        params.beam_width = cfg.funnel.beam_width;
        if let Some(v) = cfg.funnel.merge_tol {
            params.merge_tol = v;
        }
        if let Some(v) = cfg.funnel.resid_tol {
            params.resid_tol = v;
        }
        stage("funnel", params.validate())?;
        let schedule = stage(
            "select",
            FunctionalSchedule::dyadic(field.domain(), cfg.selection.tent_levels, cfg.selection.k),
        )?;
        Ok(Self { field, grid, params, schedule, tie_tol: cfg.selection.tie_tol })
    }

    /// Selected curves for `seeds`, built in parallel and kept in seed order.
    pub fn build_flow(&self, pool: &rayon::ThreadPool, seeds: &[(f64, Vec<f64>)]) -> Result<FlowMap, Failure> {
        let mut flow = FlowMap::new(self.grid.clone(), self.field.domain().clone());
        self.extend_flow(pool, &mut flow, seeds)?;
        Ok(flow)
    }

    pub fn extend_flow(
        &self,
        pool: &rayon::ThreadPool,
        flow: &mut FlowMap,
        seeds: &[(f64, Vec<f64>)],
    ) -> Result<(), Failure> {
        let entries = pool.install(|| {
            seeds
                .par_iter()
                .map(|(s, x)| {
                    select_seed(&self.field, &self.grid, &self.params, &self.schedule, self.tie_tol, *s, x)
                })
                .collect::<untangled_core::Result<Vec<_>>>()
        });
        for e in stage("select", entries)? {
            stage("select", flow.push(e))?;
        }
        Ok(())
    }

    pub fn delta_final(&self) -> f64 {
        self.params.envelope.delta_final()
    }

    /// `2·Δt·growth_c`, plus round-off slack.
    pub fn semigroup_tol(&self) -> f64 {
        2.0 * self.grid.max_dt() * self.field.growth_c() + 1e-12
    }

    pub fn gronwall_tol(&self) -> f64 {
        1e-12 * (1.0 + self.field.domain().diameter())
    }
}

fn seed_box(cfg: &ScenarioConfig) -> (Vec<f64>, Vec<f64>) {
    (
        cfg.seeds.lower.clone().unwrap_or_else(|| cfg.domain.lower.clone()),
        cfg.seeds.upper.clone().unwrap_or_else(|| cfg.domain.upper.clone()),
    )
}

fn density_box(cfg: &ScenarioConfig) -> (Vec<f64>, Vec<f64>) {
    (
        cfg.density.lower.clone().unwrap_or_else(|| cfg.domain.lower.clone()),
        cfg.density.upper.clone().unwrap_or_else(|| cfg.domain.upper.clone()),
    )
}

/// `triple_grid` evenly spread grid times.
pub fn triple_times(grid: &TimeGrid, n: usize) -> Vec<f64> {
    let steps = grid.n_steps();
    let mut idx: Vec<usize> = if n == 1 {
        vec![0]
    } else {
        (0..n).map(|i| ((i * steps) as f64 / (n - 1) as f64).round() as usize).collect()
    };
    idx.dedup();
    idx.into_iter().map(|k| grid.nodes()[k]).collect()
}

/// Base seeds and the `(r, s, t, x)` triples of the semigroup certificate.
pub fn certificate_seeds(cfg: &ScenarioConfig, grid: &TimeGrid) -> (Vec<(f64, Vec<f64>)>, Vec<Triple>) {
    let (lo, hi) = seed_box(cfg);
    let t0 = grid.t_start();
    let mut seeds: Vec<(f64, Vec<f64>)> = lattice_seeds(&lo, &hi, cfg.seeds.per_axis).into_iter().map(|x| (t0, x)).collect();
    let times = triple_times(grid, cfg.seeds.triple_grid);
    let xs = lattice_seeds(&lo, &hi, cfg.seeds.triple_grid);
    let mut triples = Vec::new();
    for &r in &times {
        for x in &xs {
            if !seeds.iter().any(|(s, y)| *s == r && y == x) {
                seeds.push((r, x.clone()));
            }
            for &s in times.iter().filter(|s| **s >= r) {
                for &t in times.iter().filter(|t| **t >= s) {
                    triples.push(Triple { r, s, t, x: x.clone() });
                }
            }
        }
    }
    (seeds, triples)
}

/// Snapshot times, snapped to grid nodes.
pub fn snapshot_times(cfg: &ScenarioConfig, grid: &TimeGrid) -> Vec<f64> {
    let n = grid.n_steps() as f64;
    let span = grid.t_end() - grid.t_start();
    let wanted: Vec<f64> = match &cfg.density.snapshots {
        Some(v) => v.clone(),
        None => [0.25, 0.5, 0.75, 1.0].iter().map(|q| grid.t_start() + q * span).collect(),
    };
    let mut out: Vec<f64> = wanted
        .iter()
        .map(|t| {
            let k = (((t - grid.t_start()) / span) * n).round().clamp(0.0, n) as usize;
            grid.nodes()[k]
        })
        .collect();
    out.dedup();
    out
}

/// Test bumps at 30%, 50% and 70% of the domain, centred in time.
pub fn default_bumps(domain: &SpatialDomain, grid: &TimeGrid) -> Vec<SpaceTimeBump> {
    let span = grid.t_end() - grid.t_start();
    let width = (0..domain.dim()).map(|i| domain.upper()[i] - domain.lower()[i]).fold(f64::INFINITY, f64::min);
    [0.3, 0.5, 0.7]
        .iter()
        .map(|q| SpaceTimeBump {
            t_center: grid.t_start() + 0.5 * span,
            t_radius: 0.4 * span,
            x_center: (0..domain.dim()).map(|i| domain.lower()[i] + q * (domain.upper()[i] - domain.lower()[i])).collect(),
            x_radius: 0.15 * width,
            amplitude: 1.0,
        })
        .collect()
}

/// One pass/fail line of the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, upper: f64) -> Self {
        Self { name: name.into(), value, lower: None, upper: Some(upper), pass: value <= upper }
    }

    pub fn within(name: &str, value: f64, lower: f64, upper: f64) -> Self {
        Self { name: name.into(), value, lower: Some(lower), upper: Some(upper), pass: lower <= value && value <= upper }
    }

    pub fn flag(name: &str, pass: bool) -> Self {
        Self { name: name.into(), value: if pass { 1.0 } else { 0.0 }, lower: Some(1.0), upper: None, pass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomRecord {
    pub location: Vec<f64>,
    pub mass: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotSummary {
    pub t: f64,
    pub total_mass: f64,
    pub binned_mass: f64,
    pub atoms: Vec<AtomRecord>,
}

impl SnapshotSummary {
    fn of(s: &DensitySnapshot) -> Self {
        Self {
            t: s.t,
            total_mass: s.total_mass,
            binned_mass: s.bins.total(),
            atoms: s
                .atoms
                .iter()
                .map(|a| AtomRecord { location: a.location.clone(), mass: a.mass, count: a.count })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Certificates {
    pub semigroup_defect: f64,
    pub semigroup_checked: usize,
    pub semigroup_skipped: usize,
    pub untangled_violations: usize,
    pub untangled_merged_pairs: usize,
    pub untangled_worst_resep: f64,
    pub inclusion_residual_max: f64,
    pub gronwall_violations: usize,
    pub gronwall_worst_excess: f64,
    pub initial_mass: f64,
    /// Largest `|bins + atoms − Σ w|` over the snapshots.
    pub mass_drift: f64,
    /// Every snapshot's weight sum equals the initial one bit for bit.
    pub mass_exact: bool,
    pub continuity_residual: f64,
    pub incompressible: bool,
    pub incompressibility_ratio: f64,
    pub lambda_shift: f64,
    pub inf_sup: f64,
    pub residual_identity_defect: f64,
    pub galerkin_orthogonality_defect: f64,
    pub galerkin_solve_residual: f64,
    pub galerkin_vs_characteristics: f64,
    pub snapshots: Vec<SnapshotSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Summary of a run; `timings` go to their own file so the rest is
/// reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub ok: bool,
    pub certificates: Certificates,
    pub checks: Vec<Check>,
    pub manifest: Vec<String>,
    #[serde(skip)]
    pub timings: Vec<StageTiming>,
}

impl RunReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Clock {
    last: Instant,
    timings: Vec<StageTiming>,
}

impl Clock {
    fn new() -> Self {
        Self { last: Instant::now(), timings: Vec::new() }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push(StageTiming { stage: stage.into(), seconds: (now - self.last).as_secs_f64() });
        self.last = now;
    }
}

/// Largest Gronwall excess and the number of trajectories above `tol`.
pub fn gronwall_violations(flows: &[&FlowMap], growth_c: f64, delta: f64, tol: f64) -> (usize, f64) {
    let mut count = 0;
    let mut worst = f64::NEG_INFINITY;
    for f in flows {
        for e in f.entries() {
            let x = gronwall_excess(&e.trajectory, growth_c, delta);
            worst = worst.max(x);
            if x > tol {
                count += 1;
            }
        }
    }
    (count, worst)
}

/// Space-time test function applied to the assembled flow solution.
pub type Probe = Box<dyn Fn(f64, &[f64]) -> f64>;

/// Pulled-back samples restricted to a subset of seeds, with equal node weights.
pub fn node_subset(
    p: &PulledBackProblem,
    idx: Vec<usize>,
    weight: f64,
) -> FnCoefficients<impl Fn(usize, f64) -> f64 + '_, impl Fn(usize, f64) -> f64 + '_> {
    let u0 = idx.iter().map(|&j| p.u0[j]).collect();
    let n = idx.len();
    let (ic, jf) = (idx.clone(), idx);
    FnCoefficients {
        c: move |j: usize, t: f64| NodeCoefficients::c(p, ic[j], t),
        f: move |j: usize, t: f64| NodeCoefficients::f(p, jf[j], t),
        u0,
        weights: Some(vec![weight; n]),
    }
}

/// `n` evenly strided indices out of `len`.
pub fn strided(len: usize, n: usize) -> Vec<usize> {
    let n = n.min(len);
    (0..n).map(|j| j * len / n).collect()
}

/// Linear interpolation of grid samples at `t`.
pub fn interp(nodes: &[f64], vals: &[f64], t: f64) -> f64 {
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

/// Characteristic solution rows `rows` sampled at the Galerkin quadrature times.
pub fn characteristic_samples(sys: &GalerkinSystem, sol: &CharacteristicSolution, rows: &[usize]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|&j| sys.quad_times().iter().map(|t| interp(sol.grid.nodes(), sol.u_row(j), *t)).collect())
        .collect()
}

/// `max |residual_norm(W) − ‖U_h − W‖|` over `trials` random trial vectors.
pub fn residual_identity_defect(
    sys: &GalerkinSystem,
    sol: &GalerkinSolution,
    trials: usize,
    seed: u64,
) -> Result<f64, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = sys.space().dim();
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let w: Vec<Vec<f64>> =
            (0..sys.n_nodes()).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let r = stage("galerkin", residual_norm(sys, &w))?;
        let ws: Vec<Vec<f64>> = w.iter().enumerate().map(|(j, c)| sys.trial_samples(j, c)).collect();
        worst = worst.max((r - sys.l2_distance(&sol.samples, &ws)).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
struct ProbeRecord {
    name: String,
    value: f64,
}

#[derive(Debug, Clone, Serialize)]
struct GalerkinRecord {
    cells: usize,
    quadrature: usize,
    nodes: Vec<Vec<f64>>,
    inf_sup: f64,
    galerkin_orthogonality_defect: f64,
    residual_identity_defect: f64,
    solve_residual: f64,
    l2_vs_characteristics: f64,
}

#[derive(Debug, Clone, Serialize)]
struct FlowCertificate {
    seeds: usize,
    triples: usize,
    semigroup_defect: f64,
    semigroup_tol: f64,
    semigroup_checked: usize,
    semigroup_skipped: usize,
    merge_tol: f64,
    resep_tol: f64,
    untangled_violations: usize,
    untangled_merged_pairs: usize,
    untangled_worst_resep: f64,
    inclusion_residual_max: f64,
    resid_tol: f64,
    delta_final: f64,
}

/// Intermediate results of a run, kept for the verification suite.
pub struct RunState {
    pub setup: Setup,
    pub triples: Vec<Triple>,
    /// Certificate flow: lattice seeds, triple seeds and their intermediates.
    pub flow: FlowMap,
    pub ensemble: ParticleEnsemble,
    /// Flow of the particle seeds.
    pub particle_flow: FlowMap,
    pub binding: Vec<usize>,
    pub snapshot_params: SnapshotParams,
    pub snapshots: Vec<DensitySnapshot>,
    pub pulled_back: PulledBackProblem,
    pub shifted: PulledBackProblem,
    pub characteristics: CharacteristicSolution,
    pub galerkin_rows: Vec<usize>,
    pub system: GalerkinSystem,
    pub galerkin: GalerkinSolution,
}

/// Runs the pipeline and writes its artifacts to `out` (default: the
/// configured output directory).
pub fn run_scenario(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<RunReport, Failure> {
    execute(cfg, out).map(|(r, _)| r)
}

/// [`run_scenario`] that also hands back the intermediate state.
pub fn execute(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<(RunReport, RunState), Failure> {
    cfg.validate()?;
    let pool = thread_pool()?;
    let mut clock = Clock::new();
    let mut art = Artifacts::create(out.unwrap_or(&cfg.output_dir))?;
    let setup = Setup::new(cfg)?;
    let grid = &setup.grid.clone();
    let mut cert = Certificates::default();
    let mut checks = Vec::new();
    clock.lap("setup");

    // flow certificates
    let (base, triples) = certificate_seeds(cfg, grid);
    let mut flow = setup.build_flow(&pool, &base)?;
    let snap_tol = setup.params.merge_tol;
    let extra = semigroup_intermediates(&flow, &triples, snap_tol);
    setup.extend_flow(&pool, &mut flow, &extra)?;
    let sg = check_semigroup(&flow, &triples, snap_tol);
    let resep_tol = cfg.seeds.resep_factor * setup.params.merge_tol;
    let un = check_untangled(&flow, setup.params.merge_tol, resep_tol);
    cert.semigroup_defect = sg.max_defect;
    cert.semigroup_checked = sg.checked;
    cert.semigroup_skipped = sg.skipped;
    cert.untangled_violations = un.violations;
    cert.untangled_merged_pairs = un.merged_pairs;
    cert.untangled_worst_resep = un.worst_resep;
    cert.inclusion_residual_max = flow.resid_max();
    checks.push(Check::at_most("semigroup_defect", sg.max_defect, setup.semigroup_tol()));
    checks.push(Check::at_most("untangled_violations", un.violations as f64, 0.0));
    checks.push(Check::at_most("inclusion_residual_max", cert.inclusion_residual_max, setup.params.resid_tol));
    art.flow("flow.csv", &flow)?;
    art.json(
        "flow_certificate.json",
        &FlowCertificate {
            seeds: flow.len(),
            triples: triples.len(),
            semigroup_defect: sg.max_defect,
            semigroup_tol: setup.semigroup_tol(),
            semigroup_checked: sg.checked,
            semigroup_skipped: sg.skipped,
            merge_tol: setup.params.merge_tol,
            resep_tol,
            untangled_violations: un.violations,
            untangled_merged_pairs: un.merged_pairs,
            untangled_worst_resep: un.worst_resep,
            inclusion_residual_max: cert.inclusion_residual_max,
            resid_tol: setup.params.resid_tol,
            delta_final: setup.delta_final(),
        },
    )?;
    clock.lap("flow");

    // density
    let (dlo, dhi) = density_box(cfg);
    let d = cfg.dim();
    let per_axis = ((cfg.density.particles as f64).powf(1.0 / d as f64).round() as usize).max(1);
    let ens = stage("density", ParticleEnsemble::uniform(&dlo, &dhi, per_axis))?;
    let pflow = setup.build_flow(&pool, &ens.seeds(grid.t_start()))?;
    let binding = stage("density", ens.bind(&pflow))?;
    let sparams = SnapshotParams {
        bins_per_axis: cfg.density.bins,
        merge_tol: setup.params.merge_tol,
        atom_threshold: cfg.density.atom_threshold,
    };
    let times = snapshot_times(cfg, grid);
    let snaps: Vec<DensitySnapshot> = times
        .iter()
        .map(|t| stage("density", push_forward_bound(&pflow, &ens, &binding, *t, &sparams)))
        .collect::<Result<_, _>>()?;
    cert.initial_mass = ens.total_mass();
    cert.mass_exact = snaps.iter().all(|s| s.total_mass.to_bits() == ens.total_mass().to_bits());
    cert.mass_drift = snaps.iter().map(|s| (s.mass() - s.total_mass).abs()).fold(0.0, f64::max);
    let volume: f64 = dlo.iter().zip(&dhi).map(|(a, b)| b - a).product();
    let inc = near_incompressibility(&snaps, ens.total_mass() / volume, cfg.density.c_bound);
    cert.incompressible = inc.ok;
    cert.incompressibility_ratio = inc.worst_ratio;
    cert.continuity_residual =
        stage("density", continuity_residual(&pflow, &ens, &default_bumps(setup.field.domain(), grid)))?;
    cert.snapshots = snaps.iter().map(SnapshotSummary::of).collect();
    checks.push(Check::flag("mass_exact", cert.mass_exact));
    checks.push(Check::at_most("mass_drift", cert.mass_drift, 1e-12 * ens.total_mass()));
    let (gv, gw) = gronwall_violations(&[&flow, &pflow], setup.field.growth_c(), setup.delta_final(), setup.gronwall_tol());
    cert.gronwall_violations = gv;
    cert.gronwall_worst_excess = gw;
    checks.push(Check::at_most("gronwall_violations", gv as f64, 0.0));
    art.density("density.csv", &snaps)?;
    art.json("atoms.json", &cert.snapshots)?;
    clock.lap("density");

    // transport
    let t = &cfg.transport;
    let raw = stage(
        "transport",
        pull_back_data(&pflow, &binding, |s, z| t.c.eval(s, z), |s, z| t.f.eval(s, z), |z| t.u0.eval(0.0, z)),
    )?;
    let lambda = t.lambda_shift.unwrap_or_else(|| raw.required_shift());
    let shifted = stage("transport", shift_zeroth_order(&raw, lambda))?;
    cert.lambda_shift = lambda;
    let csol = stage("transport", solve_characteristic_ode(&shifted))?;
    let usol = csol.unshifted();
    let mut bumps: Vec<(String, SpaceTimeBump)> = t
        .probes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            (
                format!("probe{i}"),
                SpaceTimeBump {
                    t_center: p.t_center,
                    t_radius: p.t_radius,
                    x_center: p.x_center.clone(),
                    x_radius: p.x_radius,
                    amplitude: 1.0,
                },
            )
        })
        .collect();
    if bumps.is_empty() {
        bumps = default_bumps(setup.field.domain(), grid)
            .into_iter()
            .enumerate()
            .map(|(i, b)| (format!("bump{i}"), b))
            .collect();
    }
    let mut probes: Vec<Probe> = vec![Box::new(|_, _| 1.0)];
    let mut names = vec!["one".to_string()];
    for (n, b) in bumps {
        names.push(n);
        probes.push(Box::new(move |s, z| b.value(s, z)));
    }
    let vals = stage("transport", assemble_flow_solution(&usol, &pflow, &ens, &binding, &probes))?;
    art.characteristics("characteristics.csv", &usol, &strided(ens.len(), 256))?;
    art.json(
        "probes.json",
        &names.into_iter().zip(vals).map(|(name, value)| ProbeRecord { name, value }).collect::<Vec<_>>(),
    )?;
    clock.lap("transport");

    // galerkin, on the shifted problem so that C >= 0
    let g = &cfg.galerkin;
    let rows = strided(ens.len(), g.nodes);
    let data = node_subset(&shifted, rows.clone(), ens.total_mass() / rows.len() as f64);
    let mesh: Vec<f64> = (0..=g.cells)
        .map(|i| grid.t_start() + (grid.t_end() - grid.t_start()) * i as f64 / g.cells as f64)
        .collect();
    let space = stage("galerkin", TestSpace::from_nodes(mesh))?;
    let sys = stage("galerkin", assemble_system(&space, &data, g.quadrature))?;
    drop(data);
    let gsol = stage("galerkin", solve(&sys))?;
    cert.inf_sup = stage("galerkin", discrete_inf_sup(&sys, TrialBasis::Optimal))?;
    cert.residual_identity_defect = residual_identity_defect(&sys, &gsol, g.random_trials, g.seed)?;
    cert.galerkin_orthogonality_defect = orthogonality_defect(&sys, &gsol);
    cert.galerkin_solve_residual = gsol.solve_residual;
    let reference = characteristic_samples(&sys, &csol, &rows);
    cert.galerkin_vs_characteristics = sys.l2_distance(&gsol.samples, &reference);
    checks.push(Check::within("inf_sup", cert.inf_sup, g.inf_sup_min, 1.0 + 1e-8));
    checks.push(Check::at_most("residual_identity_defect", cert.residual_identity_defect, 1e-8));
    let load_scale = (0..sys.n_nodes()).flat_map(|j| sys.load(j).iter().map(|v| v.abs())).fold(1.0, f64::max);
    checks.push(Check::at_most("galerkin_orthogonality_defect", cert.galerkin_orthogonality_defect, 1e-12 * load_scale));
    art.galerkin("galerkin.csv", &sys, &gsol)?;
    art.json(
        "galerkin.json",
        &GalerkinRecord {
            cells: g.cells,
            quadrature: g.quadrature,
            nodes: rows.iter().map(|&j| ens.point(j).to_vec()).collect(),
            inf_sup: cert.inf_sup,
            galerkin_orthogonality_defect: cert.galerkin_orthogonality_defect,
            residual_identity_defect: cert.residual_identity_defect,
            solve_residual: cert.galerkin_solve_residual,
            l2_vs_characteristics: cert.galerkin_vs_characteristics,
        },
    )?;
    clock.lap("galerkin");

    let ok = checks.iter().all(|c| c.pass);
    art.reserve("report.json");
    art.reserve("timings.json");
    let report = RunReport {
        scenario: cfg.id.clone(),
        ok,
        certificates: cert,
        checks,
        manifest: art.manifest().to_vec(),
        timings: clock.timings,
    };
    art.json("report.json", &report)?;
    art.json("timings.json", &report.timings)?;
    let state = RunState {
        setup,
        triples,
        flow,
        ensemble: ens,
        particle_flow: pflow,
        binding,
        snapshot_params: sparams,
        snapshots: snaps,
        pulled_back: raw,
        shifted,
        characteristics: csol,
        galerkin_rows: rows,
        system: sys,
        galerkin: gsol,
    };
    Ok((report, state))
}
