//! `envelope` subcommand: the support table at one point.

use serde::Serialize;
use untangled_core::filippov::filippov_envelope;

use crate::config::ScenarioConfig;
use crate::pipeline::Setup;
use crate::{stage, Failure};

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeDump {
    pub field: String,
    pub t: f64,
    pub x: Vec<f64>,
    pub delta_schedule: Vec<f64>,
    pub delta_used: f64,
    pub samples_per_ball: usize,
    pub monotone: bool,
    pub velocity: Option<Vec<f64>>,
    pub directions: Vec<Vec<f64>>,
    pub support: Vec<f64>,
}

/// Parses `t,x1,x2,…`.
pub fn parse_point(s: &str, dim: usize) -> Result<(f64, Vec<f64>), Failure> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Failure::Config(format!("`--at`: cannot parse `{p}`"))))
        .collect::<Result<_, _>>()?;
    if vals.len() != dim + 1 {
        return Err(Failure::Config(format!("`--at` needs t and {dim} coordinates, got {} values", vals.len())));
    }
    Ok((vals[0], vals[1..].to_vec()))
}

pub fn dump(cfg: &ScenarioConfig, t: f64, x: &[f64]) -> Result<EnvelopeDump, Failure> {
    let setup = Setup::new(cfg)?;
    let p = &setup.params.envelope;
    let env = stage("envelope", filippov_envelope(&setup.field, t, x, p))?;
    Ok(EnvelopeDump {
        field: setup.field.id().to_string(),
        t,
        x: x.to_vec(),
        delta_schedule: p.delta_schedule.clone(),
        delta_used: env.delta_used,
        samples_per_ball: env.samples_per_ball,
        monotone: env.monotone,
        velocity: setup.field.eval(t, x).ok(),
        directions: p.dirs.iter().map(|d| d.to_vec()).collect(),
        support: env.support.clone(),
    })
}
