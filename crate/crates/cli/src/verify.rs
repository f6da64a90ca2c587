//! Invariant suite run on top of a scenario.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use untangled_core::density::{clusters, push_forward_bound, SnapshotParams};
use untangled_core::field::{check_growth, tangent_cone_admissible, SpatialDomain, TimeGrid};
use untangled_core::filippov::filippov_envelope;
use untangled_core::funnel::{integrate_branching, Trajectory};
use untangled_core::galerkin::trial_to_test;
use untangled_core::select::{check_untangled, restriction_defect, select_seed, FlowEntry, FlowMap, FunctionalSchedule};
use untangled_core::transport::{solve_characteristic_ode, PulledBackProblem};

use crate::config::ScenarioConfig;
use crate::output::Artifacts;
use crate::pipeline::{characteristic_samples, execute, triple_times, Check, RunReport, RunState, Setup};
use crate::{stage, thread_pool, Failure};

/// Latin hypercube of `n` points in `[lower, upper]`.
pub fn latin_hypercube(lower: &[f64], upper: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let d = lower.len();
    let mut pts = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for i in 0..d {
        perm.shuffle(rng);
        for (p, &k) in pts.iter_mut().zip(&perm) {
            let u: f64 = rng.gen();
            p[i] = lower[i] + (k as f64 + u) / n as f64 * (upper[i] - lower[i]);
        }
    }
    pts
}

/// Two seeds that meet at the midpoint and separate again.
pub fn tangled_fixture() -> FlowMap {
    let grid = TimeGrid::uniform(0.0, 1.0, 4).expect("grid");
    let domain = SpatialDomain::interval(-1.0, 1.0).expect("domain");
    let line = |a: f64| {
        let states: Vec<f64> = (0..5).map(|k| a * (1.0 - 0.5 * k as f64)).collect();
        Trajectory::new(1, grid.nodes().to_vec(), states).expect("trajectory")
    };
    let entry = |a: f64| FlowEntry {
        s: 0.0,
        x: vec![a],
        trajectory: line(a),
        residual: 0.0,
        singleton_stage: Some(0),
        funnel_size: 1,
    };
    let entries = vec![entry(-1.0), entry(1.0)];
    FlowMap::from_entries(grid, domain, entries).expect("fixture")
}

fn field_checks(cfg: &ScenarioConfig, setup: &Setup) -> Result<Vec<Check>, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.funnel.seed);
    let dom = setup.field.domain();
    let g = &setup.grid;
    let mut lo = vec![g.t_start()];
    lo.extend_from_slice(dom.lower());
    let mut hi = vec![g.t_end()];
    hi.extend_from_slice(dom.upper());
    let samples: Vec<(f64, Vec<f64>)> =
        latin_hypercube(&lo, &hi, 10_000, &mut rng).into_iter().map(|p| (p[0], p[1..].to_vec())).collect();
    let diag = stage("field", check_growth(&setup.field, &samples))?;
    let zero = vec![0.0; dom.dim()];
    let mut zero_ok = true;
    let corners = [dom.lower().to_vec(), dom.upper().to_vec(), dom.center()];
    for x in samples.iter().map(|s| &s.1).chain(corners.iter()) {
        zero_ok &= stage("field", tangent_cone_admissible(dom, x, &zero, 0.0))?;
    }

    let p = &setup.params.envelope;
    let delta = p.delta_final();
    let c = setup.field.growth_c();
    let (mut monotone, mut unsound, mut growth_excess) = (true, 0usize, f64::NEG_INFINITY);
    for (t, x) in samples.iter().step_by(40) {
        let env = stage("envelope", filippov_envelope(&setup.field, *t, x, p))?;
        monotone &= env.monotone;
        let bound = c * (1.0 + untangled_core::norm(x) + delta);
        for (xi, h) in p.dirs.iter().zip(&env.support) {
            growth_excess = growth_excess.max(h.abs() - bound);
            for frac in [-0.9, -0.5, 0.0, 0.5, 0.9] {
                for axis in 0..x.len() {
                    let mut y = x.clone();
                    y[axis] += frac * delta;
                    if !dom.contains(&y) {
                        continue;
                    }
                    let b = stage("field", setup.field.eval(*t, &y))?;
                    if untangled_core::dot(xi, &b) > h + 1e-12 {
                        unsound += 1;
                    }
                }
            }
        }
    }
    Ok(vec![
        Check::at_most("field_growth_violations", diag.growth_violations as f64, 0.0),
        Check::flag("zero_velocity_tangent", zero_ok),
        Check::flag("envelope_delta_monotone", monotone),
        Check::at_most("envelope_soundness_violations", unsound as f64, 0.0),
        Check::at_most("envelope_growth_excess", growth_excess, 1e-12 * (1.0 + bound_scale(dom, c, delta))),
    ])
}

fn bound_scale(dom: &SpatialDomain, c: f64, delta: f64) -> f64 {
    c * (1.0 + dom.diameter() + delta)
}

fn funnel_checks(setup: &Setup, state: &RunState) -> Result<Vec<Check>, Failure> {
    let e = &state.flow.entries()[0];
    let a = stage("funnel", integrate_branching(&setup.field, &setup.params, &setup.grid, e.s, &e.x))?;
    let b = stage("funnel", integrate_branching(&setup.field, &setup.params, &setup.grid, e.s, &e.x))?;
    let nonempty = state.flow.entries().iter().all(|e| e.funnel_size >= 1);
    Ok(vec![Check::flag("funnel_deterministic", a == b), Check::flag("funnel_nonempty", nonempty)])
}

fn reselect(
    setup: &Setup,
    pool: &rayon::ThreadPool,
    seeds: &[&FlowEntry],
    schedule: &FunctionalSchedule,
) -> Result<Vec<FlowEntry>, Failure> {
    let r = pool.install(|| {
        seeds
            .par_iter()
            .map(|e| select_seed(&setup.field, &setup.grid, &setup.params, schedule, setup.tie_tol, e.s, &e.x))
            .collect::<untangled_core::Result<Vec<_>>>()
    });
    stage("select", r)
}

fn selection_checks(cfg: &ScenarioConfig, setup: &Setup, state: &RunState) -> Result<Vec<Check>, Failure> {
    let pool = thread_pool()?;
    let t0 = setup.grid.t_start();
    let n_base = cfg.seeds.per_axis.pow(cfg.dim() as u32);
    let base: Vec<&FlowEntry> = state.flow.entries().iter().filter(|e| e.s == t0).take(n_base).collect();
    let tol = setup.params.merge_tol;

    let full = stage(
        "select",
        FunctionalSchedule::dyadic(setup.field.domain(), cfg.selection.tent_levels, 32.max(cfg.selection.k)),
    )?;
    let runs: Vec<Vec<FlowEntry>> =
        [8, 16, 32].iter().map(|&k| reselect(setup, &pool, &base, &full.truncated(k))).collect::<Result<_, _>>()?;
    let mut stable_worst: f64 = 0.0;
    for i in 0..base.len() {
        if runs[0][i].singleton_stage.is_none_or(|k| k > 8) {
            continue;
        }
        for r in &runs[1..] {
            stable_worst = stable_worst.max(runs[0][i].trajectory.sup_distance(&r[i].trajectory));
        }
    }

    let scaled = reselect(setup, &pool, &base, &setup.schedule.scaled(3.0))?;
    let scale_worst = base
        .iter()
        .zip(&scaled)
        .map(|(a, b)| a.trajectory.sup_distance(&b.trajectory))
        .fold(0.0, f64::max);

    let again = reselect(setup, &pool, &base, &setup.schedule)?;
    let deterministic = base.iter().zip(&again).all(|(a, b)| **a == *b);

    let times = triple_times(&setup.grid, cfg.seeds.triple_grid);
    let mut restr_worst: f64 = 0.0;
    let mut restr_checked = 0usize;
    for (i, e) in state.flow.entries().iter().enumerate() {
        if !times.contains(&e.s) {
            continue;
        }
        for &s in times.iter().filter(|s| **s > e.s) {
            if let Some(d) = restriction_defect(&state.flow, i, s, tol) {
                restr_worst = restr_worst.max(d);
                restr_checked += 1;
            }
        }
    }
    let restr_tol = tol + 2.0 * setup.grid.max_dt();

    let fixture = tangled_fixture();
    let tangled = check_untangled(&fixture, 1e-9, 1e-8);
    Ok(vec![
        Check::at_most("selection_stability_k8_16_32", stable_worst, tol),
        Check::at_most("selection_scale_invariance", scale_worst, tol),
        Check::flag("selection_deterministic", deterministic),
        Check::at_most("restriction_consistency", restr_worst, restr_tol),
        Check::within("restriction_pairs_checked", restr_checked as f64, 1.0, f64::INFINITY),
        Check::within("tangled_fixture_violations", tangled.violations as f64, 1.0, f64::INFINITY),
    ])
}

fn density_checks(state: &RunState) -> Result<Vec<Check>, Failure> {
    let fine_params = SnapshotParams { bins_per_axis: 2 * state.snapshot_params.bins_per_axis, ..state.snapshot_params };
    let mut refine_worst: f64 = 0.0;
    for snap in &state.snapshots {
        let fine = stage(
            "density",
            push_forward_bound(&state.particle_flow, &state.ensemble, &state.binding, snap.t, &fine_params),
        )?;
        refine_worst = refine_worst.max((fine.mass() - snap.mass()).abs());
        let mut agg = vec![0.0; snap.bins.masses.len()];
        for (k, m) in fine.bins.masses.iter().enumerate() {
            let idx: Vec<usize> = fine.bins.unflat(k).iter().map(|i| i / 2).collect();
            agg[snap.bins.flat(&idx)] += m;
        }
        for (a, b) in agg.iter().zip(&snap.bins.masses) {
            refine_worst = refine_worst.max((a - b).abs());
        }
    }

    let flow = &state.particle_flow;
    let tol = state.snapshot_params.merge_tol;
    let mut counts = Vec::with_capacity(flow.grid().nodes().len());
    for &t in flow.grid().nodes() {
        let pos: Vec<&[f64]> = state.binding.iter().map(|&j| flow.position(j, t).expect("grid node")).collect();
        counts.push(clusters(&pos, tol).len());
    }
    let increases = counts.windows(2).filter(|w| w[1] > w[0]).count();
    let mass = state.ensemble.total_mass();
    Ok(vec![
        Check::at_most("histogram_refinement", refine_worst, 1e-12 * mass),
        Check::at_most("monotone_merging_increases", increases as f64, 0.0),
    ])
}

fn with_forcing(p: &PulledBackProblem, u0: Vec<f64>, f: Vec<f64>) -> PulledBackProblem {
    let mut q = p.clone();
    q.u0 = u0;
    q.f = f;
    q
}

fn transport_checks(cfg: &ScenarioConfig, state: &RunState) -> Result<Vec<Check>, Failure> {
    let p = &state.shifted;
    let m = p.n_times();
    let n = p.n_seeds();

    let homogeneous = with_forcing(p, p.u0.clone(), vec![0.0; p.f.len()]);
    let sol = stage("transport", solve_characteristic_ode(&homogeneous))?;
    let mut maxes = vec![0.0f64; m];
    for j in 0..n {
        for (k, u) in sol.u_row(j).iter().enumerate() {
            maxes[k] = maxes[k].max(u.abs());
        }
    }
    let scale = maxes[0].max(1e-300);
    let growth = maxes.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max).max(0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.galerkin.seed);
    let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let (u1, f1, u2, f2) = (draw(n), draw(n * m), draw(n), draw(n * m));
    let (a, b) = (0.7, -1.3);
    let comb = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(x, y)| a * x + b * y).collect::<Vec<f64>>();
    let s1 = stage("transport", solve_characteristic_ode(&with_forcing(p, u1.clone(), f1.clone())))?;
    let s2 = stage("transport", solve_characteristic_ode(&with_forcing(p, u2.clone(), f2.clone())))?;
    let s3 = stage("transport", solve_characteristic_ode(&with_forcing(p, comb(&u1, &u2), comb(&f1, &f2))))?;
    let mut lin: f64 = 0.0;
    let mut lin_scale: f64 = 1.0;
    for j in 0..n {
        for k in 0..m {
            let (x, y, z) = (s1.u_row(j)[k], s2.u_row(j)[k], s3.u_row(j)[k]);
            lin = lin.max((a * x + b * y - z).abs());
            lin_scale = lin_scale.max(z.abs());
        }
    }

    // once two particles share a position, D·e^{I} stays fixed for D = U_1 − U_2
    let cs = &state.characteristics;
    let flow = &state.particle_flow;
    let mut merge_worst: f64 = 0.0;
    let mut merged = 0usize;
    for w in state.binding.windows(2) {
        let (ta, tb) = (&flow.entries()[w[0]].trajectory, &flow.entries()[w[1]].trajectory);
        let Some(k0) = (0..m).find(|&k| ta.state(k) == tb.state(k)) else { continue };
        if (k0..m).any(|k| ta.state(k) != tb.state(k)) {
            continue;
        }
        merged += 1;
        let j = state.binding.iter().position(|b| *b == w[0]).expect("bound");
        let (ua, ub, ia) = (cs.u_row(j), cs.u_row(j + 1), cs.i_row(j));
        let base = (ua[k0] - ub[k0]) * ia[k0].exp();
        let scale = ua[k0].abs().max(ub[k0].abs()).max(1.0) * ia[k0].exp();
        for k in k0..m {
            let v = (ua[k] - ub[k]) * ia[k].exp();
            merge_worst = merge_worst.max((v - base).abs() / scale);
        }
    }

    let order = transport_order()?;
    Ok(vec![
        Check::at_most("max_principle_growth", growth, 1e-12 * scale),
        Check::at_most("linearity_defect", lin, 1e-10 * lin_scale),
        Check::at_most("merge_consistency", merge_worst, 1e-10),
        Check::within("merge_pairs_checked", merged as f64, 0.0, f64::INFINITY),
        Check::within("transport_quadrature_order", order, 1.9, f64::INFINITY),
    ])
}

/// Richardson order estimate on `C(t) = t`, `F ≡ 1`, `Ū = 2` over `[0, 1]`.
pub fn transport_order() -> Result<f64, Failure> {
    let end = |n: usize| -> Result<f64, Failure> {
        let g = stage("transport", TimeGrid::uniform(0.0, 1.0, n))?;
        let p = stage("transport", PulledBackProblem::from_time_functions(g, 1, |t| t, |_| 1.0, 2.0))?;
        let s = stage("transport", solve_characteristic_ode(&p))?;
        Ok(*s.u_row(0).last().expect("nonempty"))
    };
    let (a, b, c) = (end(64)?, end(128)?, end(256)?);
    Ok(((a - b) / (b - c)).abs().log2())
}

fn galerkin_checks(state: &RunState, inf_sup: f64) -> Result<Vec<Check>, Failure> {
    let sys = &state.system;
    let space = sys.space();
    let horizon = space.mesh()[space.cells()] - space.mesh()[0];
    let mut poincare: f64 = f64::NEG_INFINITY;
    for j in 0..sys.n_nodes() {
        for mi in 0..space.dim() {
            let mut v = vec![0.0; space.dim()];
            v[mi] = 1.0;
            poincare = poincare.max(sys.test_l2_norm(&v) - 2.0 * horizon * sys.test_norm(j, &v));
        }
    }

    let reference = characteristic_samples(sys, &state.characteristics, &state.galerkin_rows);
    let err = sys.l2_distance(&state.galerkin.samples, &reference);
    let proj = stage("galerkin", trial_to_test(sys, &reference))?;
    let best_samples: Vec<Vec<f64>> = proj.iter().enumerate().map(|(j, v)| sys.trial_samples(j, v)).collect();
    let best = sys.l2_distance(&best_samples, &reference);
    let zero: Vec<Vec<f64>> = reference.iter().map(|r| vec![0.0; r.len()]).collect();
    let slack = 1e-10 * sys.l2_distance(&reference, &zero).max(1.0);
    Ok(vec![
        Check::at_most("poincare_excess", poincare, 1e-12),
        Check::at_most("quasi_optimality_excess", err - (1.0 + 1.0 / inf_sup) * best, slack),
    ])
}

/// Runs the scenario, then every invariant check; writes `verify.json`.
pub fn verify(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<RunReport, Failure> {
    let (mut report, state) = execute(cfg, out)?;
    let setup = &state.setup;
    let mut extra = field_checks(cfg, setup)?;
    extra.extend(funnel_checks(setup, &state)?);
    extra.extend(selection_checks(cfg, setup, &state)?);
    extra.extend(density_checks(&state)?);
    extra.extend(transport_checks(cfg, &state)?);
    extra.extend(galerkin_checks(&state, report.certificates.inf_sup)?);
    report.checks.extend(extra);
    report.ok = report.checks.iter().all(|c| c.pass);
    let mut art = Artifacts::create(out.unwrap_or(&cfg.output_dir))?;
    art.reserve("verify.json");
    report.manifest.push("verify.json".into());
    art.json("verify.json", &report)?;
    Ok(report)
}
