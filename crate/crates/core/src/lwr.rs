//! Follow-the-leader approximation of the LWR Cauchy problem.

use std::time::Instant;

use serde::Serialize;

use crate::atomize::Atomization;
use crate::density::PiecewiseConstantDensity;
use crate::error::{Error, Result};
use crate::integrator::{integrate, Problem, StepPoint};
use crate::model::VelocityModel;
use crate::trajectory::{sample_times, EvolveConfig, RunStats, Snapshot};

/// Relative slack allowed on the discrete maximum principle.
pub const GAP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub t: f64,
    pub positions: Vec<f64>,
    pub chunk_mass: f64,
    pub model: VelocityModel,
}

impl ParticleState {
    pub fn rhs_cauchy(&self) -> Result<Vec<f64>> {
        check_ordering(&self.positions)?;
        let mut out = vec![0.0; self.positions.len()];
        cauchy_velocities(&self.model, self.chunk_mass, &self.positions, &mut out);
        Ok(out)
    }

    pub fn discrete_density(&self) -> Result<PiecewiseConstantDensity> {
        discrete_density(&self.positions, self.chunk_mass)
    }
}

pub fn check_ordering(positions: &[f64]) -> Result<()> {
    for (index, w) in positions.windows(2).enumerate() {
        let gap = w[1] - w[0];
        if !(gap > 0.0) {
            return Err(Error::Ordering { index, gap });
        }
    }
    Ok(())
}

/// `x_i' = v(l / (x_{i+1} - x_i))` for followers and `v_max` for the leader.
pub fn cauchy_velocities(model: &VelocityModel, chunk_mass: f64, x: &[f64], out: &mut [f64]) {
    let n = x.len() - 1;
    for i in 0..n {
        out[i] = model.speed(chunk_mass / (x[i + 1] - x[i]));
    }
    out[n] = model.v_max;
}

/// Density `l / (x_{i+1} - x_i)` on `[x_i, x_{i+1})`, zero elsewhere.
pub fn discrete_density(positions: &[f64], chunk_mass: f64) -> Result<PiecewiseConstantDensity> {
    check_ordering(positions)?;
    let values = positions.windows(2).map(|w| chunk_mass / (w[1] - w[0])).collect();
    PiecewiseConstantDensity::new(positions.to_vec(), values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LwrTrajectory {
    pub model: VelocityModel,
    pub chunk_mass: f64,
    /// Essential supremum of the initial density.
    pub max_density: f64,
    pub snapshots: Vec<Snapshot>,
    pub stats: RunStats,
}

impl LwrTrajectory {
    pub fn density_at(&self, k: usize) -> Result<PiecewiseConstantDensity> {
        discrete_density(&self.snapshots[k].positions, self.chunk_mass)
    }

    pub fn final_density(&self) -> Result<PiecewiseConstantDensity> {
        self.density_at(self.snapshots.len() - 1)
    }

    pub fn min_gap_bound(&self) -> f64 {
        self.chunk_mass / self.max_density
    }
}

pub fn evolve_cauchy(
    init: &Atomization,
    model: &VelocityModel,
    t_final: f64,
    cfg: &EvolveConfig,
) -> Result<LwrTrajectory> {
    let start = Instant::now();
    check_ordering(&init.positions)?;
    let times = sample_times(t_final, cfg.samples)?;
    let chunk = init.chunk_mass;
    let floor = chunk / init.max_density * (1.0 - GAP_SLACK);
    let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| cauchy_velocities(model, chunk, y, dy);
    let guard = |y: &[f64]| y.windows(2).all(|w| w[1] - w[0] >= floor);
    let mut snapshots = Vec::with_capacity(times.len());
    let mut observer = |p: &StepPoint| {
        if p.stop.is_some() {
            snapshots.push(Snapshot {
                t: p.t,
                positions: p.y.to_vec(),
                velocities: p.dydt.to_vec(),
            });
        }
    };
    let mut problem = Problem::new(&mut rhs);
    problem.guard = Some(&guard);
    problem.stops = &times;
    problem.observer = Some(&mut observer);
    let solution = integrate(problem, &init.positions, 0.0, t_final, &cfg.integrator)?;
    log::debug!(
        "cauchy run: n = {}, {} accepted steps, {} rejected",
        init.n(),
        solution.stats.accepted,
        solution.stats.rejected
    );
    Ok(LwrTrajectory {
        model: model.clone(),
        chunk_mass: chunk,
        max_density: init.max_density,
        snapshots,
        stats: RunStats {
            integrator: solution.stats,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomize::atomize_compact;
    use approx::assert_relative_eq;

    fn state(positions: Vec<f64>, chunk: f64) -> ParticleState {
        ParticleState {
            t: 0.0,
            positions,
            chunk_mass: chunk,
            model: VelocityModel::unit_greenshields(),
        }
    }

    #[test]
    fn jammed_follower_stops() {
        let v = state(vec![0.0, 0.2, 0.5], 0.2).rhs_cauchy().unwrap();
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn direct_formula() {
        let v = state(vec![0.0, 0.5, 1.5], 0.2).rhs_cauchy().unwrap();
        assert_relative_eq!(v[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(v[1], 0.8, epsilon = 1e-15);
        assert_eq!(v[2], 1.0);
    }

    #[test]
    fn ordering_violation() {
        let err = state(vec![0.0, 0.5, 0.5], 0.2).rhs_cauchy().unwrap_err();
        assert_eq!(err, Error::Ordering { index: 1, gap: 0.0 });
    }

    #[test]
    fn discrete_density_values() {
        let d = discrete_density(&[0.0, 0.5, 1.0, 1.5], 0.2).unwrap();
        assert!(d.values().iter().all(|v| (*v - 0.4).abs() < 1e-15));
        let single = discrete_density(&[1.0, 1.25], 0.1).unwrap();
        assert_eq!(single.values(), &[0.4]);
        assert_relative_eq!(single.mass(), 0.1, max_relative = 1e-12);
    }

    #[test]
    fn uniform_interior_gaps_stationary() {
        let model = VelocityModel::unit_greenshields();
        let d = PiecewiseConstantDensity::constant(0.0, 1.0, 0.5).unwrap();
        let init = atomize_compact(&d, 10).unwrap();
        let traj = evolve_cauchy(&init, &model, 0.05, &EvolveConfig::default()).unwrap();
        let last = traj.snapshots.last().unwrap();
        // the leader's influence decays like (t R^2 / l)^k / k! with the distance k
        for w in last.positions[..4].windows(2) {
            assert_relative_eq!(w[1] - w[0], 0.1, max_relative = 1e-6);
        }
        let first = &traj.snapshots[0].velocities;
        assert!(first[..9].iter().all(|v| (v - first[0]).abs() < 1e-12));
    }

    #[test]
    fn leader_moves_at_full_speed() {
        let model = VelocityModel::unit_greenshields();
        let d = PiecewiseConstantDensity::new(vec![-1.0, 0.0, 1.0], vec![0.4, 0.8]).unwrap();
        let init = atomize_compact(&d, 50).unwrap();
        let traj = evolve_cauchy(&init, &model, 0.5, &EvolveConfig::default()).unwrap();
        assert_eq!(traj.snapshots.len(), 101);
        let last = traj.snapshots.last().unwrap();
        assert_relative_eq!(last.positions[50], 1.5, max_relative = 1e-12);
        let bound = traj.min_gap_bound() * (1.0 - GAP_SLACK);
        for s in &traj.snapshots {
            assert!(s.min_gap() >= bound);
            assert!(s.velocities.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
