//! Convergence studies: mollified sign fields against the selected flow, and
//! Galerkin refinement against a fine characteristic reference.

use std::path::Path;

use serde::Serialize;
use untangled_core::density::ParticleEnsemble;
use untangled_core::galerkin::{assemble_system, solve, TestSpace};
use untangled_core::select::FlowMap;
use untangled_core::transport::{
    assemble_flow_solution, pull_back_data, shift_zeroth_order, solve_characteristic_ode, trapezoid_weights,
};

use crate::config::ScenarioConfig;
use crate::output::Artifacts;
use crate::pipeline::{characteristic_samples, default_bumps, node_subset, strided, Probe, Setup};
use crate::{stage, thread_pool, Failure};

/// Smallest accepted error ratio per Galerkin refinement.
pub const GALERKIN_MIN_RATIO: f64 = 1.8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub eps: f64,
    pub flow_l1_error: f64,
    /// Transport cost of the identity coupling at the final time, an upper
    /// bound for the Wasserstein-1 distance of the two densities.
    pub density_w1_proxy: f64,
    pub probe_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GalerkinRow {
    pub cells: usize,
    pub dtau: f64,
    pub l2_error: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub scenario: String,
    pub ok: bool,
    pub stability: Vec<StabilityRow>,
    /// Each row's flow error is strictly below the previous one.
    pub stability_monotone: bool,
    pub galerkin: Vec<GalerkinRow>,
    pub galerkin_min_ratio: Option<f64>,
    pub manifest: Vec<String>,
}

fn with_field(cfg: &ScenarioConfig, id: &str, params: Vec<f64>, steps: usize, delta: Option<Vec<f64>>) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.field.id = id.into();
    c.field.params = params;
    c.time.steps = Some(steps);
    c.time.dt = None;
    if delta.is_some() {
        c.envelope.delta = delta;
    }
    c
}

/// `Σ_i w_i Σ_k ω_k |X_a(t_k, x_i) − X_b(t_k, x_i)|`.
fn flow_l1(a: &FlowMap, b: &FlowMap, ens: &ParticleEnsemble) -> f64 {
    let omega = trapezoid_weights(a.grid());
    let mut acc = 0.0;
    for i in 0..ens.len() {
        let (ta, tb) = (&a.entries()[i].trajectory, &b.entries()[i].trajectory);
        let part: f64 = (0..ta.len()).map(|k| omega[k] * untangled_core::dist(ta.state(k), tb.state(k))).sum();
        acc += ens.weights()[i] * part;
    }
    acc
}

fn final_coupling(a: &FlowMap, b: &FlowMap, ens: &ParticleEnsemble) -> f64 {
    (0..ens.len())
        .map(|i| ens.weights()[i] * untangled_core::dist(a.entries()[i].trajectory.end_point(), b.entries()[i].trajectory.end_point()))
        .sum()
}

fn probe_values(cfg: &ScenarioConfig, flow: &FlowMap, ens: &ParticleEnsemble) -> Result<Vec<f64>, Failure> {
    let binding: Vec<usize> = (0..ens.len()).collect();
    let t = &cfg.transport;
    let raw = stage(
        "study",
        pull_back_data(flow, &binding, |s, z| t.c.eval(s, z), |s, z| t.f.eval(s, z), |z| t.u0.eval(0.0, z)),
    )?;
    let lambda = t.lambda_shift.unwrap_or_else(|| raw.required_shift());
    let sol = stage("study", shift_zeroth_order(&raw, lambda).and_then(|p| solve_characteristic_ode(&p)))?.unshifted();
    let bumps = default_bumps(flow.domain(), flow.grid());
    let mut probes: Vec<Probe> = vec![Box::new(|_, _| 1.0)];
    for b in bumps {
        probes.push(Box::new(move |s, z| b.value(s, z)));
    }
    stage("study", assemble_flow_solution(&sol, flow, ens, &binding, &probes))
}

/// Mollified compressive sign fields `−clamp(x/ε)` against the selected
/// Filippov flow of the compressive sign field.
pub fn stability_rows(cfg: &ScenarioConfig) -> Result<Vec<StabilityRow>, Failure> {
    if cfg.study.eps.is_empty() {
        return Ok(Vec::new());
    }
    let pool = thread_pool()?;
    let st = &cfg.study;
    let lo = cfg.density.lower.clone().unwrap_or_else(|| cfg.domain.lower.clone());
    let hi = cfg.density.upper.clone().unwrap_or_else(|| cfg.domain.upper.clone());
    let ens = stage("study", ParticleEnsemble::uniform(&lo, &hi, st.particles))?;
    let reference_cfg = with_field(cfg, "compressive-sign", Vec::new(), st.steps, None);
    let reference = Setup::new(&reference_cfg)?;
    let seeds = ens.seeds(reference.grid.t_start());
    let rflow = reference.build_flow(&pool, &seeds)?;
    let rprobes = probe_values(cfg, &rflow, &ens)?;
    let mut rows = Vec::with_capacity(st.eps.len());
    for &eps in &st.eps {
        let c = with_field(cfg, "mollified-sign", vec![eps], st.steps, Some(vec![1e-9]));
        let flow = Setup::new(&c)?.build_flow(&pool, &seeds)?;
        let probes = probe_values(cfg, &flow, &ens)?;
        rows.push(StabilityRow {
            eps,
            flow_l1_error: flow_l1(&flow, &rflow, &ens),
            density_w1_proxy: final_coupling(&flow, &rflow, &ens),
            probe_error: probes.iter().zip(&rprobes).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
        });
    }
    Ok(rows)
}

/// Galerkin `L²` error against the characteristic solution on a grid of
/// `reference_steps`, for each mesh in `galerkin_cells`.
pub fn galerkin_rows(cfg: &ScenarioConfig) -> Result<Vec<GalerkinRow>, Failure> {
    let st = &cfg.study;
    if st.galerkin_cells.is_empty() {
        return Ok(Vec::new());
    }
    let pool = thread_pool()?;
    let fine = with_field(cfg, &cfg.field.id, cfg.field.params.clone(), st.reference_steps, None);
    let setup = Setup::new(&fine)?;
    let lo = cfg.density.lower.clone().unwrap_or_else(|| cfg.domain.lower.clone());
    let hi = cfg.density.upper.clone().unwrap_or_else(|| cfg.domain.upper.clone());
    let d = cfg.dim();
    let per_axis = ((cfg.density.particles as f64).powf(1.0 / d as f64).round() as usize).max(1);
    let ens = stage("study", ParticleEnsemble::uniform(&lo, &hi, per_axis))?;
    let rows = strided(ens.len(), cfg.galerkin.nodes);
    let seeds: Vec<(f64, Vec<f64>)> = rows.iter().map(|&j| (setup.grid.t_start(), ens.point(j).to_vec())).collect();
    let flow = setup.build_flow(&pool, &seeds)?;
    let t = &cfg.transport;
    let idx: Vec<usize> = (0..seeds.len()).collect();
    let raw = stage(
        "study",
        pull_back_data(&flow, &idx, |s, z| t.c.eval(s, z), |s, z| t.f.eval(s, z), |z| t.u0.eval(0.0, z)),
    )?;
    let lambda = t.lambda_shift.unwrap_or_else(|| raw.required_shift());
    let shifted = stage("study", shift_zeroth_order(&raw, lambda))?;
    let reference = stage("study", solve_characteristic_ode(&shifted))?;
    let (t0, t1) = (setup.grid.t_start(), setup.grid.t_end());
    let weight = ens.total_mass() / idx.len() as f64;
    let mut out: Vec<GalerkinRow> = Vec::new();
    for &cells in &st.galerkin_cells {
        let mesh = (0..=cells).map(|i| t0 + (t1 - t0) * i as f64 / cells as f64).collect();
        let space = stage("study", TestSpace::from_nodes(mesh))?;
        let data = node_subset(&shifted, idx.clone(), weight);
        let sys = stage("study", assemble_system(&space, &data, cfg.galerkin.quadrature))?;
        let sol = stage("study", solve(&sys))?;
        let err = sys.l2_distance(&sol.samples, &characteristic_samples(&sys, &reference, &idx));
        let ratio = out.last().map(|r| r.l2_error / err);
        out.push(GalerkinRow { cells, dtau: (t1 - t0) / cells as f64, l2_error: err, ratio });
    }
    Ok(out)
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Runs both study sections and writes their tables.
pub fn convergence_study(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<StudyReport, Failure> {
    cfg.validate()?;
    let mut art = Artifacts::create(out.unwrap_or(&cfg.output_dir))?;
    let stability = stability_rows(cfg)?;
    if !stability.is_empty() {
        let header: Vec<String> =
            ["eps", "flow_l1_error", "density_w1_proxy", "probe_error"].iter().map(|s| s.to_string()).collect();
        let rows = stability
            .iter()
            .map(|r| vec![num(r.eps), num(r.flow_l1_error), num(r.density_w1_proxy), num(r.probe_error)]);
        art.csv("study_stability.csv", &header, rows)?;
    }
    let galerkin = galerkin_rows(cfg)?;
    if !galerkin.is_empty() {
        let header: Vec<String> = ["cells", "dtau", "l2_error", "ratio"].iter().map(|s| s.to_string()).collect();
        let rows = galerkin.iter().map(|r| {
            vec![r.cells.to_string(), num(r.dtau), num(r.l2_error), r.ratio.map(num).unwrap_or_default()]
        });
        art.csv("study_galerkin.csv", &header, rows)?;
    }
    let stability_monotone = stability.windows(2).all(|w| w[1].flow_l1_error < w[0].flow_l1_error);
    let galerkin_min_ratio = galerkin.iter().filter_map(|r| r.ratio).reduce(f64::min);
    let ok = stability_monotone && galerkin_min_ratio.is_none_or(|r| r >= GALERKIN_MIN_RATIO);
    art.reserve("study.json");
    let report = StudyReport {
        scenario: cfg.id.clone(),
        ok,
        stability,
        stability_monotone,
        galerkin,
        galerkin_min_ratio,
        manifest: art.manifest().to_vec(),
    };
    art.json("study.json", &report)?;
    Ok(report)
}
