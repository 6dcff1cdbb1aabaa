//! Follow-the-leader scheme on `(0, 1)` with Dirichlet data.
//!
//! Inflow is modelled by a queue of particles on the negative axis and
//! outflow by the leader's speed `v(rho_1)`. At the end of every window of
//! length `T / m` the particles outside the domain are respaced to match the
//! boundary data at the new time.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::atomize::IbvpAtomization;
use crate::density::{wasserstein_scaled, BoundaryData, PiecewiseConstantDensity};
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorStats, Problem, StepPoint};
use crate::lwr::{check_ordering, GAP_SLACK};
use crate::model::{FluxModel, VelocityModel};
use crate::trajectory::{sample_times, EvolveConfig, RunStats, Snapshot};

/// Densities below this are treated as vacuum when bounding gaps from above.
pub const DENSITY_FLOOR: f64 = 1e-6;

/// Particle configuration over indices `-N..=n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IbvpState {
    pub t: f64,
    /// `positions[j]` is particle `j - queue_len`.
    pub positions: Vec<f64>,
    pub queue_len: usize,
    pub n: usize,
    pub chunk_mass: f64,
    pub remainder: f64,
    /// Queue particles strictly inside `(0, inf)`.
    pub crossed_inflow: usize,
    /// Particles in `[1, inf)`.
    pub crossed_outflow: usize,
    pub window: usize,
}

impl IbvpState {
    pub fn from_atomization(atom: &IbvpAtomization) -> Self {
        IbvpState {
            t: 0.0,
            positions: atom.positions.clone(),
            queue_len: atom.queue_len,
            n: atom.n,
            chunk_mass: atom.chunk_mass,
            remainder: atom.remainder,
            crossed_inflow: 0,
            crossed_outflow: 0,
            window: 0,
        }
    }

    pub fn position(&self, index: isize) -> f64 {
        self.positions[self.slot(index)]
    }

    fn slot(&self, index: isize) -> usize {
        (index + self.queue_len as isize) as usize
    }

    /// Mass carried by the chunk to the right of storage slot `j`.
    pub fn chunk_at(&self, j: usize) -> f64 {
        if j == 0 {
            self.remainder
        } else {
            self.chunk_mass
        }
    }

    pub fn rhs_ibvp(&self, model: &VelocityModel, outflow_density: f64) -> Result<Vec<f64>> {
        check_ordering(&self.positions)?;
        let mut out = vec![0.0; self.positions.len()];
        ibvp_velocities(model, self.chunk_mass, self.remainder, model.speed(outflow_density), &self.positions, &mut out);
        Ok(out)
    }

    /// Density of all particles, including the queue.
    pub fn density(&self) -> Result<PiecewiseConstantDensity> {
        particle_density(&self.positions, self.chunk_mass, self.remainder)
    }

    /// Updates the crossing counts from the current positions.
    pub fn count_crossings(&mut self) {
        let queue = &self.positions[..self.queue_len];
        self.crossed_inflow = queue.len() - queue.partition_point(|x| *x <= 0.0);
        self.crossed_outflow = self.positions.len() - self.positions.partition_point(|x| *x < 1.0);
    }

    /// Respaces the particles outside the domain to match the boundary data.
    ///
    /// Particles with index in `-h0-1 ..= n-h1+1` are left untouched.
    pub fn rearrange(&mut self, inflow_density: f64, outflow_density: f64) -> Result<Rearrangement> {
        self.count_crossings();
        let h0 = self.crossed_inflow;
        let h1 = self.crossed_outflow;
        if h0 + 1 >= self.queue_len {
            return Err(Error::QueueUnderflow {
                t: self.t,
                crossed: h0,
                queue: self.queue_len,
            });
        }
        let before = self.positions.clone();
        let n = self.n as isize;
        let left_anchor = -(h0 as isize) - 1;
        let right_anchor = n - h1 as isize + 1;
        if outflow_density > 0.0 && right_anchor < n {
            let spacing = self.chunk_mass / outflow_density;
            let base = self.position(right_anchor);
            for i in (right_anchor + 1)..=n {
                let slot = self.slot(i);
                self.positions[slot] = base + (i - right_anchor) as f64 * spacing;
            }
        }
        let spacing = self.chunk_mass / inflow_density;
        let base = self.position(left_anchor);
        let first_regular = -(self.queue_len as isize) + 1;
        for i in first_regular..left_anchor {
            let slot = self.slot(i);
            self.positions[slot] = base + (i - left_anchor) as f64 * spacing;
        }
        self.positions[0] = self.positions[1] - self.remainder / inflow_density;
        let moved = before
            .iter()
            .zip(&self.positions)
            .filter(|(a, b)| a != b)
            .count();
        let max_shift = before
            .iter()
            .zip(&self.positions)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let keep = self.slot(left_anchor)..=self.slot(right_anchor.min(n));
        let protected_moved = keep.filter(|j| before[*j] != self.positions[*j]).count();
        let jump = wasserstein_scaled(
            &particle_density(&before, self.chunk_mass, self.remainder)?,
            &self.density()?,
        )?;
        Ok(Rearrangement {
            window: self.window,
            t: self.t,
            crossed_inflow: h0,
            crossed_outflow: h1,
            inflow_density,
            outflow_density,
            moved,
            max_shift,
            protected_moved,
            jump,
            protected: (left_anchor, right_anchor.min(n)),
        })
    }
}

pub fn ibvp_velocities(
    model: &VelocityModel,
    chunk: f64,
    remainder: f64,
    leader_speed: f64,
    x: &[f64],
    out: &mut [f64],
) {
    let last = x.len() - 1;
    out[0] = model.speed(remainder / (x[1] - x[0]));
    for j in 1..last {
        out[j] = model.speed(chunk / (x[j + 1] - x[j]));
    }
    out[last] = leader_speed;
}

pub fn particle_density(positions: &[f64], chunk: f64, remainder: f64) -> Result<PiecewiseConstantDensity> {
    check_ordering(positions)?;
    let values = positions
        .windows(2)
        .enumerate()
        .map(|(j, w)| if j == 0 { remainder } else { chunk } / (w[1] - w[0]))
        .collect();
    PiecewiseConstantDensity::new(positions.to_vec(), values)
}

/// One respacing step at a window boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rearrangement {
    /// Index of the window that starts at `t`.
    pub window: usize,
    pub t: f64,
    pub crossed_inflow: usize,
    pub crossed_outflow: usize,
    pub inflow_density: f64,
    pub outflow_density: f64,
    pub moved: usize,
    pub max_shift: f64,
    /// Particles in the protected range that moved; zero by construction.
    pub protected_moved: usize,
    /// Scaled Wasserstein distance between the configurations before and after.
    pub jump: f64,
    /// Indices `(-h0-1, n-h1+1)` bounding the particles kept in place.
    pub protected: (isize, isize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct IbvpOptions {
    /// Skip respacing when constant data send all characteristics out of the domain.
    pub skip_inactive_rearrangement: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IbvpTrajectory {
    pub model: VelocityModel,
    pub queue_len: usize,
    pub n: usize,
    pub chunk_mass: f64,
    pub remainder: f64,
    pub queue_mass: f64,
    pub windows: usize,
    pub window_times: Vec<f64>,
    /// Upper density bound `R` over interior and boundary data.
    pub max_density: f64,
    /// Lower density bound `delta`, floored at [`DENSITY_FLOOR`].
    pub min_density: f64,
    /// Whether some datum touches vacuum, voiding the upper gap bound.
    pub vacuum_datum: bool,
    /// Total variation constant of the data.
    pub tv_constant: f64,
    pub snapshots: Vec<Snapshot>,
    /// Index of the window each snapshot belongs to.
    pub snapshot_windows: Vec<usize>,
    pub rearrangements: Vec<Rearrangement>,
    pub inflow: BoundaryData,
    pub outflow: BoundaryData,
    pub stats: RunStats,
}

impl IbvpTrajectory {
    pub fn particle_density_at(&self, k: usize) -> Result<PiecewiseConstantDensity> {
        particle_density(&self.snapshots[k].positions, self.chunk_mass, self.remainder)
    }

    /// Discrete density restricted to `[0, 1]`.
    pub fn domain_density_at(&self, k: usize) -> Result<PiecewiseConstantDensity> {
        self.particle_density_at(k)?.restrict(0.0, 1.0)
    }

    pub fn final_domain_density(&self) -> Result<PiecewiseConstantDensity> {
        self.domain_density_at(self.snapshots.len() - 1)
    }

    /// Chunk mass to the right of storage slot `j`.
    pub fn chunk_at(&self, j: usize) -> f64 {
        if j == 0 {
            self.remainder
        } else {
            self.chunk_mass
        }
    }
}

/// `TV(rho) + TV(rho_0) + TV(rho_1) + |rho_0(0+) - rho(0+)| + |rho_1(0+) - rho(1-)|`.
pub fn tv_constant(initial: &PiecewiseConstantDensity, inflow: &BoundaryData, outflow: &BoundaryData) -> f64 {
    let left_value = initial.values()[0];
    let right_value = initial.values()[initial.values().len() - 1];
    initial.total_variation(false)
        + inflow.total_variation()
        + outflow.total_variation()
        + (inflow.value_at(0.0) - left_value).abs()
        + (outflow.value_at(0.0) - right_value).abs()
}

#[allow(clippy::too_many_arguments)]
pub fn evolve_ibvp(
    init: &IbvpAtomization,
    initial: &PiecewiseConstantDensity,
    inflow: &BoundaryData,
    outflow: &BoundaryData,
    model: &VelocityModel,
    t_final: f64,
    windows: usize,
    cfg: &EvolveConfig,
    options: &IbvpOptions,
) -> Result<IbvpTrajectory> {
    let start = Instant::now();
    if windows == 0 {
        return Err(Error::Domain("at least one rearrangement window is required".into()));
    }
    inflow.check_bounded(model.rho_max)?;
    outflow.check_bounded(model.rho_max)?;
    check_ordering(&init.positions)?;
    let times = sample_times(t_final, cfg.samples)?;
    let window_times = sample_times(t_final, windows)?;
    let max_density = initial.ess_sup().max(inflow.max()).max(outflow.max());
    let lowest = initial.ess_inf().min(inflow.min()).min(outflow.min());
    let min_density = lowest.max(DENSITY_FLOOR);
    let vacuum_datum = lowest < DENSITY_FLOOR;
    let rho_hat = FluxModel::new(model.clone()).rho_hat();
    let inactive = options.skip_inactive_rearrangement
        && inflow.is_constant()
        && outflow.is_constant()
        && inflow.value_at(0.0) >= rho_hat
        && outflow.value_at(0.0) <= rho_hat;

    let mut state = IbvpState::from_atomization(init);
    let chunk = state.chunk_mass;
    let remainder = state.remainder;
    let ceiling = max_density * (1.0 + GAP_SLACK);
    // the remainder gap can be tiny and stiff, so both density bounds are enforced per step
    let floor = if vacuum_datum { 0.0 } else { min_density * (1.0 - GAP_SLACK) };
    let admissible = |mass: f64, gap: f64| gap > 0.0 && (floor..=ceiling).contains(&(mass / gap));
    let guard = |y: &[f64]| {
        admissible(remainder, y[1] - y[0]) && y[1..].windows(2).all(|w| admissible(chunk, w[1] - w[0]))
    };
    let mut snapshots = Vec::with_capacity(times.len());
    let mut snapshot_windows = Vec::with_capacity(times.len());
    let mut rearrangements = Vec::new();
    let mut stats = IntegratorStats::default();
    let mut step_hint = None;
    let mut k = 0usize;
    while k < windows {
        let t0 = window_times[k];
        let mut k_end = k + 1;
        if inactive {
            k_end = windows;
        }
        let t1 = window_times[k_end];
        let outflow_density = outflow.value_at(t0);
        let leader_speed = model.speed(outflow_density);
        let stops: Vec<f64> = times
            .iter()
            .copied()
            .filter(|s| (*s > t0 || (k == 0 && *s == t0)) && *s <= t1)
            .collect();
        let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| ibvp_velocities(model, chunk, remainder, leader_speed, y, dy);
        let mut observer = |p: &StepPoint| {
            if p.stop.is_some() {
                snapshots.push(Snapshot {
                    t: p.t,
                    positions: p.y.to_vec(),
                    velocities: p.dydt.to_vec(),
                });
                snapshot_windows.push(k);
            }
        };
        let mut problem = Problem::new(&mut rhs);
        problem.guard = Some(&guard);
        problem.stops = &stops;
        problem.observer = Some(&mut observer);
        problem.initial_step = step_hint;
        let solution = integrate(problem, &state.positions, t0, t1, &cfg.integrator)?;
        stats.absorb(&solution.stats);
        step_hint = Some(solution.next_step);
        state.positions = solution.y;
        state.t = t1;
        if k_end < windows {
            state.window = k_end;
            let record = state.rearrange(inflow.value_at(t1), outflow.value_at(t1))?;
            log::trace!("window {k_end}: h0 = {}, h1 = {}, moved {}", record.crossed_inflow, record.crossed_outflow, record.moved);
            rearrangements.push(record);
        } else {
            state.count_crossings();
        }
        k = k_end;
    }
    Ok(IbvpTrajectory {
        model: model.clone(),
        queue_len: init.queue_len,
        n: init.n,
        chunk_mass: chunk,
        remainder,
        queue_mass: init.queue_mass,
        windows,
        window_times,
        max_density,
        min_density,
        vacuum_datum,
        tv_constant: tv_constant(initial, inflow, outflow),
        snapshots,
        snapshot_windows,
        rearrangements,
        inflow: inflow.clone(),
        outflow: outflow.clone(),
        stats: RunStats {
            integrator: stats,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomize::atomize_ibvp;
    use approx::assert_relative_eq;

    fn setup(rho: f64, rho0: f64, n: usize, t: f64) -> (IbvpAtomization, PiecewiseConstantDensity) {
        let d = PiecewiseConstantDensity::constant(0.0, 1.0, rho).unwrap();
        let a = atomize_ibvp(&d, rho0, n, t, &VelocityModel::unit_greenshields()).unwrap();
        (a, d)
    }

    #[test]
    fn leader_speed_from_outflow() {
        let (a, _) = setup(0.2, 0.4, 10, 0.5);
        let s = IbvpState::from_atomization(&a);
        let model = VelocityModel::unit_greenshields();
        let v = s.rhs_ibvp(&model, 1.0).unwrap();
        assert_eq!(*v.last().unwrap(), 0.0);
        let v = s.rhs_ibvp(&model, 0.0).unwrap();
        assert_eq!(*v.last().unwrap(), 1.0);
        // uniform queue moves at v(0.4)
        for vi in &v[1..a.queue_len - 1] {
            assert_relative_eq!(*vi, 0.6, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_rearrangement_without_crossings() {
        let (a, _) = setup(0.2, 0.4, 10, 0.5);
        let mut s = IbvpState::from_atomization(&a);
        let before = s.positions.clone();
        let r = s.rearrange(0.4, 0.2).unwrap();
        assert_eq!(r.crossed_inflow, 0);
        // the particle at x = 1 counts as crossed
        assert_eq!(r.crossed_outflow, 1);
        for (x, y) in before.iter().zip(&s.positions) {
            assert_relative_eq!(*x, *y, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_outflow_crossing_respaces_the_tail() {
        let (a, _) = setup(0.2, 0.4, 10, 0.5);
        let mut s = IbvpState::from_atomization(&a);
        let n = s.n as isize;
        let slot = s.slot(n);
        s.positions[slot] = 1.3;
        let slot = s.slot(n - 1);
        s.positions[slot] = 1.05;
        let r = s.rearrange(0.4, 0.5).unwrap();
        assert_eq!(r.crossed_outflow, 2);
        assert_eq!(r.protected.1, n - 1);
        assert_eq!(s.position(n - 1), 1.05);
        assert_relative_eq!(s.position(n), 1.05 + s.chunk_mass / 0.5, epsilon = 1e-14);
    }

    #[test]
    fn queue_respaced_for_new_inflow() {
        let (a, _) = setup(0.3, 0.1, 20, 2.0);
        let mut s = IbvpState::from_atomization(&a);
        let anchor = s.position(-1);
        s.rearrange(0.6, 0.9).unwrap();
        assert_eq!(s.position(-1), anchor);
        let l = s.chunk_mass;
        assert_relative_eq!(s.position(-2), anchor - l / 0.6, epsilon = 1e-12);
        assert_relative_eq!(s.positions[1] - s.positions[0], s.remainder / 0.6, max_relative = 1e-9);
    }

    #[test]
    fn queue_underflow_detected() {
        let (a, _) = setup(0.2, 0.4, 10, 0.1);
        let mut s = IbvpState::from_atomization(&a);
        let q = s.queue_len;
        for j in 1..q {
            s.positions[j] = 1e-3 * j as f64 / q as f64;
        }
        assert!(matches!(s.rearrange(0.4, 0.2), Err(Error::QueueUnderflow { .. })));
    }

    #[test]
    fn total_mass_is_queue_plus_interior() {
        let (a, d) = setup(0.2, 0.4, 50, 1.0);
        let inflow = BoundaryData::constant(0.4).unwrap();
        let outflow = BoundaryData::constant(1.0).unwrap();
        let model = VelocityModel::unit_greenshields();
        let traj = evolve_ibvp(&a, &d, &inflow, &outflow, &model, 1.0, 10, &EvolveConfig::default(), &IbvpOptions::default()).unwrap();
        assert_eq!(traj.snapshots.len(), 101);
        for k in 0..traj.snapshots.len() {
            let m = traj.particle_density_at(k).unwrap().mass();
            assert_relative_eq!(m, a.queue_mass + 0.2, max_relative = 1e-10);
        }
        assert_eq!(traj.rearrangements.len(), 9);
    }

    #[test]
    fn tv_constant_of_test_data() {
        let d = PiecewiseConstantDensity::constant(0.0, 1.0, 0.2).unwrap();
        let c = tv_constant(&d, &BoundaryData::constant(0.4).unwrap(), &BoundaryData::constant(1.0).unwrap());
        assert_relative_eq!(c, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn inactive_fast_path_matches_full_run() {
        let (a, d) = setup(0.6, 0.7, 40, 0.4);
        let inflow = BoundaryData::constant(0.7).unwrap();
        let outflow = BoundaryData::constant(0.3).unwrap();
        let model = VelocityModel::unit_greenshields();
        let cfg = EvolveConfig::default().samples(4);
        let fast = evolve_ibvp(&a, &d, &inflow, &outflow, &model, 0.4, 8, &cfg, &IbvpOptions { skip_inactive_rearrangement: true }).unwrap();
        assert!(fast.rearrangements.is_empty());
        let full = evolve_ibvp(&a, &d, &inflow, &outflow, &model, 0.4, 8, &cfg, &IbvpOptions::default()).unwrap();
        let e = fast.final_domain_density().unwrap().l1_distance(&full.final_domain_density().unwrap());
        assert!(e < 0.05, "{e}");
    }
}
