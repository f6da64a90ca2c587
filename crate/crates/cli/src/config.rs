//! Scenario configuration (TOML, one scenario per file).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::registry::ScalarFn;
use crate::Failure;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub id: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub field: FieldBlock,
    pub domain: DomainBlock,
    pub time: TimeBlock,
    #[serde(default)]
    pub envelope: EnvelopeBlock,
    #[serde(default)]
    pub funnel: FunnelBlock,
    #[serde(default)]
    pub selection: SelectionBlock,
    #[serde(default)]
    pub seeds: SeedsBlock,
    #[serde(default)]
    pub density: DensityBlock,
    #[serde(default)]
    pub transport: TransportBlock,
    #[serde(default)]
    pub galerkin: GalerkinBlock,
    #[serde(default)]
    pub study: StudyBlock,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldBlock {
    pub id: String,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default = "one")]
    pub growth_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    #[serde(default)]
    pub t_start: f64,
    pub t_end: f64,
    /// Either `steps` or `dt` must be given.
    pub steps: Option<usize>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeBlock {
    /// Absolute radii; default `{0.2, 0.1, 0.05, 0.025}·diam(Ω)`.
    pub delta: Option<Vec<f64>>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub mode: SupportModeName,
    /// Directions in 2D; 1D always uses `±e_1`.
    pub directions: Option<usize>,
}

impl Default for EnvelopeBlock {
    fn default() -> Self {
        Self { delta: None, samples: default_samples(), mode: SupportModeName::Exact, directions: None }
    }
}

fn default_samples() -> usize {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportModeName {
    #[default]
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunnelBlock {
    pub branch_factor: Option<usize>,
    #[serde(default = "default_beam")]
    pub beam_width: usize,
    pub merge_tol: Option<f64>,
    pub resid_tol: Option<f64>,
    #[serde(default = "one_u64")]
    pub seed: u64,
}

impl Default for FunnelBlock {
    fn default() -> Self {
        Self { branch_factor: None, beam_width: default_beam(), merge_tol: None, resid_tol: None, seed: 1 }
    }
}

fn default_beam() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionBlock {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_tie")]
    pub tie_tol: f64,
    #[serde(default = "default_levels")]
    pub tent_levels: usize,
}

impl Default for SelectionBlock {
    fn default() -> Self {
        Self { k: default_k(), tie_tol: default_tie(), tent_levels: default_levels() }
    }
}

fn default_k() -> usize {
    32
}

fn default_tie() -> f64 {
    1e-9
}

fn default_levels() -> usize {
    4
}

/// Seeds of the certified flow (semigroup and untangledness checks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsBlock {
    #[serde(default = "default_seeds")]
    pub per_axis: usize,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    /// Points per axis of the `(r, s, t)` × `x` triple grid.
    #[serde(default = "ten")]
    pub triple_grid: usize,
    /// `resep_tol = resep_factor·merge_tol`.
    #[serde(default = "ten_f")]
    pub resep_factor: f64,
}

impl Default for SeedsBlock {
    fn default() -> Self {
        Self { per_axis: default_seeds(), lower: None, upper: None, triple_grid: 10, resep_factor: 10.0 }
    }
}

fn default_seeds() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityBlock {
    /// Total particle count; rounded to a full lattice in more than one dimension.
    #[serde(default = "default_particles")]
    pub particles: usize,
    /// Support of `ϱ̄` (Lebesgue); default Ω.
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    pub atom_threshold: Option<usize>,
    /// Snapshot times; default every quarter of the horizon.
    pub snapshots: Option<Vec<f64>>,
    #[serde(default = "two")]
    pub c_bound: f64,
}

impl Default for DensityBlock {
    fn default() -> Self {
        Self {
            particles: default_particles(),
            lower: None,
            upper: None,
            bins: default_bins(),
            atom_threshold: None,
            snapshots: None,
            c_bound: 2.0,
        }
    }
}

fn default_particles() -> usize {
    1000
}

fn default_bins() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportBlock {
    #[serde(default = "ScalarFn::zero")]
    pub c: ScalarFn,
    #[serde(default = "ScalarFn::zero")]
    pub f: ScalarFn,
    #[serde(default = "ScalarFn::one")]
    pub u0: ScalarFn,
    /// Zeroth-order shift; default the smallest making `C + λ ≥ 0`.
    pub lambda_shift: Option<f64>,
    /// Space-time probes `(t_center, t_radius, x_center, x_radius)`.
    #[serde(default)]
    pub probes: Vec<ProbeSpec>,
}

impl Default for TransportBlock {
    fn default() -> Self {
        Self { c: ScalarFn::zero(), f: ScalarFn::zero(), u0: ScalarFn::one(), lambda_shift: None, probes: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub t_center: f64,
    pub t_radius: f64,
    pub x_center: Vec<f64>,
    pub x_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GalerkinBlock {
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "two_u")]
    pub quadrature: usize,
    /// Spatial nodes, taken evenly from the particle ensemble.
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_inf_sup_min")]
    pub inf_sup_min: f64,
    #[serde(default = "default_random_w")]
    pub random_trials: usize,
    #[serde(default = "one_u64")]
    pub seed: u64,
}

impl Default for GalerkinBlock {
    fn default() -> Self {
        Self {
            cells: default_cells(),
            quadrature: 2,
            nodes: default_nodes(),
            inf_sup_min: default_inf_sup_min(),
            random_trials: default_random_w(),
            seed: 1,
        }
    }
}

fn default_cells() -> usize {
    64
}

fn default_nodes() -> usize {
    8
}

fn default_inf_sup_min() -> f64 {
    1.0 - 1e-8
}

fn default_random_w() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyBlock {
    /// Mollification widths for the compressive sign field.
    #[serde(default)]
    pub eps: Vec<f64>,
    /// Steps of the time grid used by the mollification study.
    #[serde(default = "default_study_steps")]
    pub steps: usize,
    #[serde(default = "default_study_particles")]
    pub particles: usize,
    /// Galerkin cell counts, each a refinement of the previous.
    #[serde(default)]
    pub galerkin_cells: Vec<usize>,
    #[serde(default = "default_reference_steps")]
    pub reference_steps: usize,
}

impl Default for StudyBlock {
    fn default() -> Self {
        Self {
            eps: Vec::new(),
            steps: default_study_steps(),
            particles: default_study_particles(),
            galerkin_cells: Vec::new(),
            reference_steps: default_reference_steps(),
        }
    }
}

fn default_study_steps() -> usize {
    256
}

fn default_study_particles() -> usize {
    200
}

fn default_reference_steps() -> usize {
    8192
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn ten() -> usize {
    10
}

fn ten_f() -> f64 {
    10.0
}

fn two_u() -> usize {
    2
}

fn one_u64() -> u64 {
    1
}

fn positive(name: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::Config(format!("`{name}` must be positive and finite, got {v}")))
    }
}

fn at_least_one(name: &str, v: usize) -> Result<(), Failure> {
    if v >= 1 {
        Ok(())
    } else {
        Err(Failure::Config(format!("`{name}` must be >= 1")))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, Failure> {
        let cfg: Self = toml::from_str(text).map_err(|e| Failure::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Number of grid steps.
    pub fn steps(&self) -> usize {
        match (self.time.steps, self.time.dt) {
            (Some(n), _) => n,
            (None, Some(dt)) => ((self.time.t_end - self.time.t_start) / dt).round() as usize,
            (None, None) => 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.lower.len()
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Failure::Config(format!(
                "`schema_version` must be {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        if self.domain.lower.len() != self.domain.upper.len() || self.domain.lower.is_empty() {
            return Err(Failure::Config("`domain.lower` and `domain.upper` must have the same nonzero length".into()));
        }
        if !(self.field.growth_c >= 0.0 && self.field.growth_c.is_finite()) {
            return Err(Failure::Config(format!("`field.growth_c` must be >= 0, got {}", self.field.growth_c)));
        }
        let span = self.time.t_end - self.time.t_start;
        positive("time.t_end - time.t_start", span)?;
        match (self.time.steps, self.time.dt) {
            (Some(_), Some(_)) => return Err(Failure::Config("give only one of `time.steps` and `time.dt`".into())),
            (None, None) => return Err(Failure::Config("one of `time.steps` or `time.dt` is required".into())),
            (Some(n), None) => at_least_one("time.steps", n)?,
            (None, Some(dt)) => {
                positive("time.dt", dt)?;
                let n = span / dt;
                if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
                    return Err(Failure::Config(format!("`time.dt` = {dt} does not divide the horizon {span}")));
                }
            }
        }
        if let Some(d) = &self.envelope.delta {
            for v in d {
                positive("envelope.delta", *v)?;
            }
        }
        at_least_one("envelope.samples", self.envelope.samples)?;
        at_least_one("funnel.beam_width", self.funnel.beam_width)?;
        if let Some(b) = self.funnel.branch_factor {
            at_least_one("funnel.branch_factor", b)?;
        }
        if let Some(v) = self.funnel.merge_tol {
            positive("funnel.merge_tol", v)?;
        }
        if let Some(v) = self.funnel.resid_tol {
            positive("funnel.resid_tol", v)?;
        }
        at_least_one("selection.k", self.selection.k)?;
        at_least_one("selection.tent_levels", self.selection.tent_levels)?;
        positive("selection.tie_tol", self.selection.tie_tol)?;
        at_least_one("seeds.per_axis", self.seeds.per_axis)?;
        at_least_one("seeds.triple_grid", self.seeds.triple_grid)?;
        positive("seeds.resep_factor", self.seeds.resep_factor)?;
        at_least_one("density.particles", self.density.particles)?;
        at_least_one("density.bins", self.density.bins)?;
        positive("density.c_bound", self.density.c_bound)?;
        for b in [&self.seeds.lower, &self.seeds.upper, &self.density.lower, &self.density.upper].into_iter().flatten() {
            if b.len() != self.dim() {
                return Err(Failure::Config("seed and density boxes must match the domain dimension".into()));
            }
        }
        if let Some(l) = self.transport.lambda_shift {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Failure::Config(format!("`transport.lambda_shift` must be >= 0, got {l}")));
            }
        }
        for f in [&self.transport.c, &self.transport.f, &self.transport.u0] {
            f.validate()?;
        }
        for p in &self.transport.probes {
            positive("transport.probes.t_radius", p.t_radius)?;
            positive("transport.probes.x_radius", p.x_radius)?;
            if p.x_center.len() != self.dim() {
                return Err(Failure::Config("`transport.probes.x_center` must match the domain dimension".into()));
            }
        }
        at_least_one("galerkin.cells", self.galerkin.cells)?;
        at_least_one("galerkin.nodes", self.galerkin.nodes)?;
        if !(1..=5).contains(&self.galerkin.quadrature) {
            return Err(Failure::Config("`galerkin.quadrature` must be 1..=5 Gauss points".into()));
        }
        for e in &self.study.eps {
            positive("study.eps", *e)?;
        }
        at_least_one("study.steps", self.study.steps)?;
        at_least_one("study.particles", self.study.particles)?;
        at_least_one("study.reference_steps", self.study.reference_steps)?;
        for c in &self.study.galerkin_cells {
            at_least_one("study.galerkin_cells", *c)?;
        }
        Ok(())
    }
}
