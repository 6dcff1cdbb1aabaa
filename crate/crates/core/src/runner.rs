//! Runs scenarios end to end and writes their artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::arz::{evolve_arz, ArzTrajectory};
use crate::atomize::{atomize_arz, atomize_arz_unchecked, atomize_compact, atomize_hughes, atomize_ibvp};
use crate::density::{DensityProfile, PiecewiseConstantDensity};
use crate::diagnostics::{
    arz_report, boundary_trace_check, convergence_table, hughes_report, ibvp_report, l1_error, lwr_report,
    ConvergenceRow, InvariantReport, TraceReport,
};
use crate::error::{Error, Result};
use crate::hughes::{evolve_hughes, HughesTrajectory, DOMAIN};
use crate::ibvp::{evolve_ibvp, IbvpTrajectory};
use crate::integrator::IntegratorStats;
use crate::lwr::{evolve_cauchy, LwrTrajectory};
use crate::model::FluxModel;
use crate::reference::{
    godunov_hughes, godunov_solve, BoundaryMode, ExactPtd, GodunovGrid, GodunovRun, RiemannComposition,
};
use crate::scenario::{ReferenceKind, ScenarioConfig, Scheme};

#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    Lwr(LwrTrajectory),
    Ibvp(IbvpTrajectory),
    Hughes(HughesTrajectory),
    Arz(ArzTrajectory),
}

impl Trajectory {
    pub fn sample_count(&self) -> usize {
        match self {
            Trajectory::Lwr(t) => t.snapshots.len(),
            Trajectory::Ibvp(t) => t.snapshots.len(),
            Trajectory::Hughes(t) => t.snapshots.len(),
            Trajectory::Arz(t) => t.snapshots.len(),
        }
    }

    pub fn integrator_stats(&self) -> &IntegratorStats {
        match self {
            Trajectory::Lwr(t) => &t.stats.integrator,
            Trajectory::Ibvp(t) => &t.stats.integrator,
            Trajectory::Hughes(t) => &t.stats.integrator,
            Trajectory::Arz(t) => &t.stats.integrator,
        }
    }

    pub fn wall_seconds(&self) -> f64 {
        match self {
            Trajectory::Lwr(t) => t.stats.wall_seconds,
            Trajectory::Ibvp(t) => t.stats.wall_seconds,
            Trajectory::Hughes(t) => t.stats.wall_seconds,
            Trajectory::Arz(t) => t.stats.wall_seconds,
        }
    }

    /// Sample time and the density to report at sample `k`.
    pub fn density_at(&self, k: usize) -> Result<(f64, PiecewiseConstantDensity)> {
        match self {
            Trajectory::Lwr(t) => Ok((t.snapshots[k].t, t.density_at(k)?)),
            Trajectory::Ibvp(t) => Ok((t.snapshots[k].t, t.domain_density_at(k)?)),
            Trajectory::Hughes(t) => Ok((t.snapshots[k].snapshot.t, t.density_at(k)?)),
            Trajectory::Arz(t) => Ok((t.snapshots[k].snapshot.t, t.density_at(k)?)),
        }
    }

    pub fn final_density(&self) -> Result<PiecewiseConstantDensity> {
        Ok(self.density_at(self.sample_count() - 1)?.1)
    }

    /// Sample time, index of the first particle and positions at sample `k`.
    pub fn particles_at(&self, k: usize) -> (f64, isize, &[f64]) {
        match self {
            Trajectory::Lwr(t) => (t.snapshots[k].t, 0, &t.snapshots[k].positions),
            Trajectory::Ibvp(t) => (t.snapshots[k].t, -(t.queue_len as isize), &t.snapshots[k].positions),
            Trajectory::Hughes(t) => (t.snapshots[k].snapshot.t, 0, &t.snapshots[k].snapshot.positions),
            Trajectory::Arz(t) => (t.snapshots[k].snapshot.t, 0, &t.snapshots[k].snapshot.positions),
        }
    }
}

/// L1 distance to a reference solution at the final time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub reference: ReferenceKind,
    pub t: f64,
    pub domain: (f64, f64),
    pub l1_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub godunov_cells: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub godunov_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub scenario: ScenarioConfig,
    pub trajectory: Trajectory,
    pub report: Option<InvariantReport>,
    pub comparison: Option<Comparison>,
    pub traces: Option<TraceReport>,
}

impl RunOutcome {
    /// Whether every requested invariant check passed.
    pub fn passed(&self) -> bool {
        self.report.as_ref().is_none_or(|r| r.passed())
    }
}

pub fn evolve(cfg: &ScenarioConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let n = cfg.particles;
    let t = cfg.t_final;
    let model = &cfg.velocity;
    let run = || -> Result<Trajectory> {
        Ok(match cfg.scheme {
            Scheme::LwrCauchy => {
                let init = atomize_compact(&cfg.initial, n)?;
                Trajectory::Lwr(evolve_cauchy(&init, model, t, &cfg.evolve)?)
            }
            Scheme::LwrIbvp => {
                let inflow = cfg.inflow.as_ref().expect("validated");
                let outflow = cfg.outflow.as_ref().expect("validated");
                let m = cfg.windows.expect("validated");
                let init = atomize_ibvp(&cfg.initial, inflow.value_at(0.0), n, t, model)?;
                Trajectory::Ibvp(evolve_ibvp(
                    &init,
                    &cfg.initial,
                    inflow,
                    outflow,
                    model,
                    t,
                    m,
                    &cfg.evolve,
                    &cfg.ibvp,
                )?)
            }
            Scheme::Hughes => {
                let cost = cfg.cost_model()?;
                let init = atomize_hughes(&cfg.initial, n, &cost)?;
                Trajectory::Hughes(evolve_hughes(&init, model, &cost, t, &cfg.evolve, cfg.switching)?)
            }
            Scheme::Arz => {
                let setup = cfg.arz.as_ref().expect("validated");
                let markers = setup.marker_field()?;
                let init = if setup.pressure.is_admissible() {
                    atomize_arz(&cfg.initial, &markers, n)?
                } else {
                    log::warn!("{}: pressure is not admissible, markers are not checked", cfg.name);
                    atomize_arz_unchecked(&cfg.initial, &markers, n)?
                };
                Trajectory::Arz(evolve_arz(&init, &setup.pressure, t, &cfg.evolve)?)
            }
        })
    };
    run().map_err(|e| e.in_scenario(&cfg.name))
}

/// Domain on which a Cauchy run is compared: the data hull widened by `v_max T`.
fn cauchy_domain(cfg: &ScenarioConfig) -> Result<(f64, f64)> {
    let (a, b) = cfg.initial.support_hull().ok_or(Error::ZeroMass)?;
    let reach = cfg.velocity.v_max * cfg.t_final;
    Ok((a - reach, b + reach))
}

/// Godunov solution for the scenario at its final time.
pub fn godunov_reference(cfg: &ScenarioConfig) -> Result<GodunovRun> {
    let flux = FluxModel::new(cfg.velocity.clone());
    let cells = cfg.godunov_cells();
    match cfg.scheme {
        Scheme::LwrCauchy => {
            let (a, b) = cauchy_domain(cfg)?;
            let (ha, hb) = cfg.initial.support_hull().ok_or(Error::ZeroMass)?;
            let total = ((b - a) / (hb - ha) * cells as f64).round() as usize;
            let grid = GodunovGrid::from_density(&cfg.initial, a, b, total)?;
            godunov_solve(&grid, &flux, &BoundaryMode::Transmissive, cfg.t_final, &cfg.godunov)
        }
        Scheme::LwrIbvp => {
            let grid = GodunovGrid::from_density(&cfg.initial, 0.0, 1.0, cells)?;
            let mode = BoundaryMode::Dirichlet {
                inflow: cfg.inflow.clone().expect("validated"),
                outflow: cfg.outflow.clone().expect("validated"),
            };
            godunov_solve(&grid, &flux, &mode, cfg.t_final, &cfg.godunov)
        }
        Scheme::Hughes => {
            let grid = GodunovGrid::from_density(&cfg.initial, DOMAIN.0, DOMAIN.1, cells)?;
            godunov_hughes(&grid, &cfg.cost_model()?, cfg.t_final, &cfg.godunov)
        }
        Scheme::Arz => Err(Error::Config(vec!["reference: no Godunov comparator for arz".into()])),
    }
}

pub fn compare(cfg: &ScenarioConfig, traj: &Trajectory) -> Result<Option<Comparison>> {
    let density = traj.final_density()?;
    let t = cfg.t_final;
    let comparison = |domain: (f64, f64), profile: &dyn DensityProfile, run: Option<&GodunovRun>| Comparison {
        reference: cfg.reference,
        t,
        domain,
        l1_error: l1_error(&density, profile, domain.0, domain.1),
        godunov_cells: run.map(|r| r.grid.values.len()),
        godunov_steps: run.map(|r| r.steps),
    };
    let result = match cfg.reference {
        ReferenceKind::None => None,
        ReferenceKind::Riemann => {
            let fans = RiemannComposition::new(&cfg.initial, &FluxModel::new(cfg.velocity.clone()))?;
            Some(comparison(cauchy_domain(cfg)?, &fans.at(t)?, None))
        }
        ReferenceKind::ExactPtd => Some(comparison((0.0, 1.0), &ExactPtd, None)),
        ReferenceKind::Godunov => {
            let run = godunov_reference(cfg)?;
            let reference = run.grid.to_density()?;
            let domain = match cfg.scheme {
                Scheme::LwrCauchy => cauchy_domain(cfg)?,
                Scheme::LwrIbvp => (0.0, 1.0),
                _ => DOMAIN,
            };
            Some(comparison(domain, &reference, Some(&run)))
        }
    };
    Ok(result)
}

pub fn check(cfg: &ScenarioConfig, traj: &Trajectory) -> Result<InvariantReport> {
    let tol = &cfg.tolerances;
    match traj {
        Trajectory::Lwr(t) => lwr_report(t, tol),
        Trajectory::Ibvp(t) => ibvp_report(t, tol),
        Trajectory::Hughes(t) => Ok(hughes_report(t, tol)),
        Trajectory::Arz(t) => arz_report(t, tol),
    }
}

pub fn simulate(cfg: &ScenarioConfig, check_invariants: bool) -> Result<RunOutcome> {
    let trajectory = evolve(cfg)?;
    let inner = || -> Result<RunOutcome> {
        let report = if check_invariants {
            Some(check(cfg, &trajectory)?)
        } else {
            None
        };
        let comparison = compare(cfg, &trajectory)?;
        let traces = match &trajectory {
            Trajectory::Ibvp(t) => Some(boundary_trace_check(t)?),
            _ => None,
        };
        Ok(RunOutcome {
            scenario: cfg.clone(),
            trajectory: trajectory.clone(),
            report,
            comparison,
            traces,
        })
    };
    inner().map_err(|e| e.in_scenario(&cfg.name))
}

/// Reference errors over the scenario's particle (and window) sweep.
pub fn convergence(cfg: &ScenarioConfig) -> Result<Vec<ConvergenceRow>> {
    if cfg.reference == ReferenceKind::None {
        return Err(Error::Config(vec![format!(
            "reference: scenario '{}' has no reference solution to converge to",
            cfg.name
        )]));
    }
    let windows: Vec<Option<usize>> = if cfg.scheme != Scheme::LwrIbvp {
        vec![None]
    } else if cfg.convergence.windows.is_empty() {
        vec![cfg.windows]
    } else {
        cfg.convergence.windows.iter().map(|m| Some(*m)).collect()
    };
    convergence_table(&cfg.convergence.particles, &windows, |n, m| {
        let mut member = cfg.clone().with_particles(n);
        member.windows = m.or(cfg.windows);
        // the Godunov comparator is refined together with the particles
        if cfg.reference == ReferenceKind::Godunov {
            member.godunov_cells = Some(n);
        }
        let traj = evolve(&member)?;
        Ok(compare(&member, &traj)?.expect("reference requested").l1_error)
    })
    .map_err(|e| e.in_scenario(&cfg.name))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

fn float(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").expect("string write");
}

fn write_file(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    written.push(path);
    Ok(())
}

pub fn snapshots_csv(traj: &Trajectory) -> Result<String> {
    let mut out = String::from("t,x_left,x_right,rho\n");
    for k in 0..traj.sample_count() {
        let (t, d) = traj.density_at(k)?;
        let b = d.breakpoints();
        for (j, rho) in d.values().iter().enumerate() {
            for (i, x) in [t, b[j], b[j + 1], *rho].into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                float(&mut out, x);
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn tracks_csv(traj: &Trajectory, stride: usize) -> String {
    let mut out = String::from("t,particle_index,x\n");
    for k in 0..traj.sample_count() {
        let (t, first, x) = traj.particles_at(k);
        for (j, xj) in x.iter().enumerate().step_by(stride) {
            float(&mut out, t);
            write!(out, ",{},", first + j as isize).expect("string write");
            float(&mut out, *xj);
            out.push('\n');
        }
    }
    out
}

fn turning_point_csv(traj: &HughesTrajectory) -> String {
    let mut out = String::from("t,turning_point,residual,split\n");
    for s in &traj.xi_track {
        float(&mut out, s.t);
        out.push(',');
        float(&mut out, s.turning_point);
        out.push(',');
        float(&mut out, s.residual);
        writeln!(out, ",{}", s.split).expect("string write");
    }
    out
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("n,m,error,order\n");
    for r in rows {
        write!(out, "{},", r.n).expect("string write");
        if let Some(m) = r.m {
            write!(out, "{m}").expect("string write");
        }
        out.push(',');
        float(&mut out, r.error);
        out.push(',');
        if let Some(p) = r.order {
            float(&mut out, p);
        }
        out.push('\n');
    }
    out
}

pub fn convergence_json(rows: &[ConvergenceRow]) -> Result<String> {
    Ok(serde_json::to_string_pretty(rows)? + "\n")
}

#[derive(Serialize)]
struct DensityRecord {
    t: f64,
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct TrackRecord<'a> {
    t: f64,
    first_index: isize,
    positions: &'a [f64],
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    scenario: &'a str,
    scheme: &'a str,
    particles: usize,
    t_final: f64,
    passed: bool,
    invariants: Option<&'a InvariantReport>,
    comparison: Option<&'a Comparison>,
    integrator: &'a IntegratorStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    boundary_traces: Option<TraceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rearrangements: Option<&'a [crate::ibvp::Rearrangement]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    switches: Option<&'a [crate::hughes::SwitchEvent]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pressure_admissible: Option<bool>,
}

#[derive(Serialize)]
struct TraceSummary {
    max_left: f64,
    max_right: f64,
}

/// Machine-readable summary; excludes wall-clock time so reruns are byte-identical.
pub fn diagnostics_json(outcome: &RunOutcome) -> Result<String> {
    let traj = &outcome.trajectory;
    let doc = Diagnostics {
        scenario: &outcome.scenario.name,
        scheme: outcome.scenario.scheme.as_str(),
        particles: outcome.scenario.particles,
        t_final: outcome.scenario.t_final,
        passed: outcome.passed(),
        invariants: outcome.report.as_ref(),
        comparison: outcome.comparison.as_ref(),
        integrator: traj.integrator_stats(),
        boundary_traces: outcome.traces.as_ref().map(|t| TraceSummary {
            max_left: t.max_left,
            max_right: t.max_right,
        }),
        rearrangements: match traj {
            Trajectory::Ibvp(t) => Some(&t.rearrangements),
            _ => None,
        },
        switches: match traj {
            Trajectory::Hughes(t) => Some(&t.switches),
            _ => None,
        },
        pressure_admissible: match traj {
            Trajectory::Arz(t) => Some(t.pressure_admissible),
            _ => None,
        },
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Writes the requested artifacts into `dir` and returns their paths.
pub fn write_bundle(outcome: &RunOutcome, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let outputs = &outcome.scenario.outputs;
    let traj = &outcome.trajectory;
    let mut written = Vec::new();
    if outputs.snapshots {
        match format {
            OutputFormat::Csv => write_file(dir, "snapshots.csv", &snapshots_csv(traj)?, &mut written)?,
            OutputFormat::Json => {
                let records = (0..traj.sample_count())
                    .map(|k| {
                        let (t, d) = traj.density_at(k)?;
                        Ok(DensityRecord {
                            t,
                            breakpoints: d.breakpoints().to_vec(),
                            values: d.values().to_vec(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                write_file(dir, "snapshots.json", &serde_json::to_string(&records)?, &mut written)?;
            }
        }
    }
    if outputs.tracks {
        match format {
            OutputFormat::Csv => write_file(dir, "tracks.csv", &tracks_csv(traj, outputs.track_stride), &mut written)?,
            OutputFormat::Json => {
                let records: Vec<TrackRecord> = (0..traj.sample_count())
                    .map(|k| {
                        let (t, first_index, positions) = traj.particles_at(k);
                        TrackRecord {
                            t,
                            first_index,
                            positions,
                        }
                    })
                    .collect();
                write_file(dir, "tracks.json", &serde_json::to_string(&records)?, &mut written)?;
            }
        }
        if let Trajectory::Hughes(t) = traj {
            write_file(dir, "turning_point.csv", &turning_point_csv(t), &mut written)?;
        }
    }
    if outputs.diagnostics {
        write_file(dir, "diagnostics.json", &diagnostics_json(outcome)?, &mut written)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::preset;

    #[test]
    fn csv_floats_round_trip() {
        let cfg = preset("lwr-test1").unwrap().with_particles(10);
        let mut cfg = cfg;
        cfg.evolve.samples = 2;
        let traj = evolve(&cfg).unwrap();
        let text = snapshots_csv(&traj).unwrap();
        let d = traj.final_density().unwrap();
        let last = text.lines().last().unwrap();
        let fields: Vec<f64> = last.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields[3].to_bits(), d.values().last().unwrap().to_bits());
        assert_eq!(fields[2].to_bits(), d.right().to_bits());
    }

    #[test]
    fn small_runs_of_every_scheme() {
        for name in ["lwr-test1", "ibvp-test2bc", "hughes-steps", "arz-test2"] {
            let mut cfg = preset(name).unwrap().with_particles(20);
            cfg.evolve.samples = 5;
            let outcome = simulate(&cfg, true).unwrap();
            assert!(outcome.passed(), "{name}: {:?}", outcome.report.unwrap().failures());
            if cfg.reference != ReferenceKind::None {
                assert!(outcome.comparison.unwrap().l1_error.is_finite());
            }
        }
    }

    #[test]
    fn errors_carry_the_scenario_name() {
        let mut cfg = preset("lwr-test1").unwrap();
        cfg.t_final = 3.0;
        let err = simulate(&cfg, false).unwrap_err();
        assert!(err.to_string().contains("lwr-test1"), "{err}");
    }

    #[test]
    fn bundle_files() {
        let mut cfg = preset("hughes-steps").unwrap().with_particles(20);
        cfg.evolve.samples = 3;
        let outcome = simulate(&cfg, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_bundle(&outcome, dir.path(), OutputFormat::Csv).unwrap();
        let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_owned()).collect();
        assert_eq!(names, ["snapshots.csv", "tracks.csv", "turning_point.csv", "diagnostics.json"]);
        let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&files[3]).unwrap()).unwrap();
        assert_eq!(doc["scheme"], "hughes");
        let files = write_bundle(&outcome, dir.path(), OutputFormat::Json).unwrap();
        assert!(files[0].ends_with("snapshots.json"));
    }
}
