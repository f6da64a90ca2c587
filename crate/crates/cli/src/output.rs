//! CSV and JSON artifact writers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use untangled_core::density::DensitySnapshot;
use untangled_core::galerkin::{GalerkinSolution, GalerkinSystem};
use untangled_core::select::FlowMap;
use untangled_core::transport::CharacteristicSolution;

use crate::Failure;

/// Output directory that records every file it writes.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

fn csv_err(e: csv::Error) -> Failure {
    Failure::Io(e.to_string())
}

fn num(v: f64) -> String {
    format!("{v}")
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &[String] {
        &self.written
    }

    fn path(&mut self, name: &str) -> PathBuf {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        self.dir.join(name)
    }

    /// Lists `name` in the manifest ahead of writing it.
    pub fn reserve(&mut self, name: &str) {
        self.path(name);
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
        text.push('\n');
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", p.display())))
    }

    /// Writes `header` and `rows` as CSV.
    pub fn csv(&mut self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), Failure> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(&r).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Failure::Io(e.to_string()))
    }

    /// Long format: `seed_s, seed_x…, t, state…`.
    pub fn flow(&mut self, name: &str, flow: &FlowMap) -> Result<(), Failure> {
        let d = flow.dim();
        let mut header = vec!["seed_s".to_string()];
        header.extend((0..d).map(|i| format!("seed_x{i}")));
        header.push("t".into());
        header.extend((0..d).map(|i| format!("state{i}")));
        let rows = flow.entries().iter().flat_map(|e| {
            (0..e.trajectory.len()).map(move |k| {
                let mut r = vec![num(e.s)];
                r.extend(e.x.iter().map(|v| num(*v)));
                r.push(num(e.trajectory.times()[k]));
                r.extend(e.trajectory.state(k).iter().map(|v| num(*v)));
                r
            })
        });
        self.csv(name, &header, rows)
    }

    /// `t, cell_center…, mass` for every bin of every snapshot.
    pub fn density(&mut self, name: &str, snaps: &[DensitySnapshot]) -> Result<(), Failure> {
        let d = snaps.first().map_or(1, |s| s.bins.dim());
        let mut header = vec!["t".to_string()];
        header.extend((0..d).map(|i| format!("cell_center{i}")));
        header.push("mass".into());
        let rows = snaps.iter().flat_map(|s| {
            (0..s.bins.masses.len()).map(move |k| {
                let mut r = vec![num(s.t)];
                r.extend(s.bins.center(k).iter().map(|v| num(*v)));
                r.push(num(s.bins.masses[k]));
                r
            })
        });
        self.csv(name, &header, rows)
    }

    /// `seed, t, U, I` for the particle indices in `seeds`.
    pub fn characteristics(&mut self, name: &str, sol: &CharacteristicSolution, seeds: &[usize]) -> Result<(), Failure> {
        let header: Vec<String> = ["seed", "t", "U", "I"].iter().map(|s| s.to_string()).collect();
        let nodes = sol.grid.nodes();
        let rows = seeds.iter().flat_map(|&j| {
            (0..nodes.len()).map(move |k| vec![j.to_string(), num(nodes[k]), num(sol.u_row(j)[k]), num(sol.i_row(j)[k])])
        });
        self.csv(name, &header, rows)
    }

    /// `node, tau, U_h` at the quadrature points.
    pub fn galerkin(&mut self, name: &str, system: &GalerkinSystem, sol: &GalerkinSolution) -> Result<(), Failure> {
        let header: Vec<String> = ["node", "tau", "U_h"].iter().map(|s| s.to_string()).collect();
        let tq = system.quad_times();
        let rows = sol
            .samples
            .iter()
            .enumerate()
            .flat_map(|(j, u)| tq.iter().zip(u).map(move |(t, v)| vec![j.to_string(), num(*t), num(*v)]));
        self.csv(name, &header, rows)
    }
}
