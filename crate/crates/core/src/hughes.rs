//! Two-sided follow-the-leader scheme for the Hughes evacuation model on `(-1, 1)`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::atomize::HughesAtomization;
use crate::density::PiecewiseConstantDensity;
use crate::error::{Error, Result};
use crate::integrator::{integrate, Crossing, Event, IntegratorStats, Problem, StepPoint};
use crate::lwr::{check_ordering, GAP_SLACK};
use crate::model::VelocityModel;
use crate::trajectory::{sample_times, EvolveConfig, RunStats, Snapshot};

pub const DOMAIN: (f64, f64) = (-1.0, 1.0);

/// Shape of the running cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostKind {
    /// `c = v_max / v(rho)`.
    InverseVelocity,
    /// `c = 1 + linear rho + quadratic rho^2`.
    Quadratic { linear: f64, quadratic: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostModel {
    pub kind: CostKind,
    pub velocity: VelocityModel,
}

impl CostModel {
    pub fn new(kind: CostKind, velocity: VelocityModel) -> Result<Self> {
        let cost = CostModel { kind, velocity };
        cost.validate()?;
        Ok(cost)
    }

    pub fn inverse_velocity(velocity: VelocityModel) -> Self {
        CostModel {
            kind: CostKind::InverseVelocity,
            velocity,
        }
    }

    /// Largest density at which the cost is finite.
    pub fn cap(&self) -> f64 {
        match self.kind {
            CostKind::InverseVelocity => self.velocity.rho_max * (1.0 - 1e-12),
            CostKind::Quadratic { .. } => self.velocity.rho_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let CostKind::Quadratic { linear, quadratic } = self.kind {
            if !(linear >= 0.0 && quadratic > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "quadratic cost needs linear >= 0 and quadratic > 0, got {linear}, {quadratic}"
                )));
            }
        }
        let top = self.cap();
        let grid = 1000;
        let mut prev_slope = self.derivative(0.0);
        for k in 0..=grid {
            let r = top * k as f64 / grid as f64;
            if !(self.derivative(r) >= 0.0) {
                return Err(Error::InvalidModel("cost must be nondecreasing".into()));
            }
            if k > 0 {
                let s = self.derivative(r);
                if !(s > prev_slope) {
                    return Err(Error::InvalidModel("cost must be strictly convex".into()));
                }
                prev_slope = s;
            }
        }
        Ok(())
    }

    pub fn eval(&self, rho: f64) -> f64 {
        match self.kind {
            CostKind::InverseVelocity => self.velocity.v_max / self.velocity.speed(rho),
            CostKind::Quadratic { linear, quadratic } => 1.0 + linear * rho + quadratic * rho * rho,
        }
    }

    pub fn derivative(&self, rho: f64) -> f64 {
        match self.kind {
            CostKind::InverseVelocity => {
                let v = self.velocity.speed(rho);
                -self.velocity.v_max * self.velocity.derivative(rho) / (v * v)
            }
            CostKind::Quadratic { linear, quadratic } => linear + 2.0 * quadratic * rho,
        }
    }

    pub fn second_derivative(&self, rho: f64) -> f64 {
        match self.kind {
            CostKind::InverseVelocity => {
                let v = self.velocity.speed(rho);
                let dv = self.velocity.derivative(rho);
                let ddv = self.velocity.second_derivative(rho);
                self.velocity.v_max * (2.0 * dv * dv - v * ddv) / (v * v * v)
            }
            CostKind::Quadratic { quadratic, .. } => 2.0 * quadratic,
        }
    }
}

/// Pieces `(start, end, cost)` of the integrand `c(rho)` covering `[-1, 1]`.
///
/// `density(i)` gives the value on `[breaks[i], breaks[i + 1])`.
fn cost_pieces(breaks: &[f64], density: impl Fn(usize) -> f64, cost: &CostModel) -> Result<Vec<(f64, f64, f64)>> {
    let (lo, hi) = DOMAIN;
    let mut pieces = Vec::with_capacity(breaks.len() + 2);
    let mut cursor = lo;
    let base = cost.eval(0.0);
    for i in 0..breaks.len().saturating_sub(1) {
        let a = breaks[i].max(lo);
        let b = breaks[i + 1].min(hi);
        if b <= a {
            continue;
        }
        if a > cursor {
            pieces.push((cursor, a, base));
        }
        let rho = density(i);
        if rho > cost.cap() {
            return Err(Error::Domain(format!(
                "density {rho} exceeds the largest density {} with finite cost",
                cost.cap()
            )));
        }
        pieces.push((a, b, cost.eval(rho)));
        cursor = b;
    }
    if cursor < hi {
        pieces.push((cursor, hi, base));
    }
    Ok(pieces)
}

/// Exact root of the piecewise-linear balance `int_{-1}^xi c = int_xi^1 c`.
fn balance_root(pieces: &[(f64, f64, f64)]) -> f64 {
    let total: f64 = pieces.iter().map(|(a, b, c)| c * (b - a)).sum();
    let half = 0.5 * total;
    let mut acc = 0.0;
    for (a, b, c) in pieces {
        let m = c * (b - a);
        if acc + m >= half {
            return (a + (half - acc) / c).clamp(*a, *b);
        }
        acc += m;
    }
    DOMAIN.1
}

/// `int_{-1}^xi c - int_xi^1 c`, summed piece by piece.
fn balance_residual(pieces: &[(f64, f64, f64)], xi: f64) -> f64 {
    let mut left = 0.0;
    let mut right = 0.0;
    for (a, b, c) in pieces {
        if xi >= *b {
            left += c * (b - a);
        } else if xi <= *a {
            right += c * (b - a);
        } else {
            left += c * (xi - a);
            right += c * (b - xi);
        }
    }
    left - right
}

/// Turning point of a density on `(-1, 1)`.
pub fn turning_point(density: &PiecewiseConstantDensity, cost: &CostModel) -> Result<f64> {
    let values = density.values();
    let pieces = cost_pieces(density.breakpoints(), |i| values[i], cost)?;
    Ok(balance_root(&pieces))
}

/// Balance residual of `xi` for a density on `(-1, 1)`.
pub fn turning_point_residual(density: &PiecewiseConstantDensity, cost: &CostModel, xi: f64) -> Result<f64> {
    let values = density.values();
    let pieces = cost_pieces(density.breakpoints(), |i| values[i], cost)?;
    Ok(balance_residual(&pieces, xi))
}

fn particle_density(positions: &[f64], chunk: f64, split: usize, i: usize) -> f64 {
    if i == split {
        0.0
    } else {
        chunk / (positions[i + 1] - positions[i])
    }
}

/// Turning point and residual for particles whose chunk `split` is vacuum.
pub fn particle_turning_point(positions: &[f64], chunk: f64, split: usize, cost: &CostModel) -> Result<(f64, f64)> {
    let pieces = cost_pieces(positions, |i| particle_density(positions, chunk, split, i), cost)?;
    let xi = balance_root(&pieces);
    Ok((xi, balance_residual(&pieces, xi)))
}

/// Split chunk whose own vacuum keeps the turning point inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettledSplit {
    pub split: usize,
    pub turning_point: f64,
    pub residual: f64,
    /// False when two neighbouring choices each push the turning point into the other.
    pub consistent: bool,
}

/// Distance of `xi` outside `[x_split, x_{split + 1}]`, signed by side.
fn outside(positions: &[f64], split: usize, xi: f64) -> f64 {
    if xi < positions[split] {
        xi - positions[split]
    } else if xi > positions[split + 1] {
        xi - positions[split + 1]
    } else {
        0.0
    }
}

/// Walks the split index from `start` until the turning point lies in the vacuum chunk.
///
/// Emptying a chunk shifts the turning point by about one gap, so the chunk
/// holding the turning point of the full density need not hold its own.
pub fn settle_split(positions: &[f64], chunk: f64, start: usize, cost: &CostModel) -> Result<SettledSplit> {
    let n = positions.len() - 1;
    let mut split = start.min(n - 1);
    let mut last_dir = 0i8;
    loop {
        let (xi, residual) = particle_turning_point(positions, chunk, split, cost)?;
        let off = outside(positions, split, xi);
        let dir = if off < 0.0 && split > 0 {
            -1
        } else if off > 0.0 && split + 1 < n {
            1
        } else {
            return Ok(SettledSplit {
                split,
                turning_point: xi,
                residual,
                consistent: off == 0.0,
            });
        };
        if dir == -last_dir {
            // two-cycle: keep whichever choice misses by less
            let other = (split as isize + dir as isize) as usize;
            let (xo, ro) = particle_turning_point(positions, chunk, other, cost)?;
            let keep_other = outside(positions, other, xo).abs() < off.abs();
            let (split, turning_point, residual) = if keep_other { (other, xo, ro) } else { (split, xi, residual) };
            return Ok(SettledSplit {
                split,
                turning_point,
                residual,
                consistent: false,
            });
        }
        last_dir = dir;
        split = (split as isize + dir as isize) as usize;
    }
}

/// Discrete density of the two-sided scheme, vacuum on the split chunk.
pub fn hughes_density(positions: &[f64], chunk: f64, split: usize) -> Result<PiecewiseConstantDensity> {
    check_ordering(positions)?;
    let values = (0..positions.len() - 1)
        .map(|i| particle_density(positions, chunk, split, i))
        .collect();
    PiecewiseConstantDensity::new(positions.to_vec(), values)
}

/// Mass of the discrete density inside `(-1, 1)`.
pub fn mass_inside(positions: &[f64], chunk: f64, split: usize) -> f64 {
    let (lo, hi) = DOMAIN;
    (0..positions.len() - 1)
        .map(|i| {
            let width = (positions[i + 1].min(hi) - positions[i].max(lo)).max(0.0);
            particle_density(positions, chunk, split, i) * width
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallnessReport {
    pub satisfied: bool,
    /// `max c''(rho) rho` on `[0, R]`.
    pub lipschitz: f64,
    /// `c'(R) R`.
    pub cost_constant: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub sup_density: f64,
    pub total_variation: f64,
}

/// Smallness condition for a datum with supremum `sup_density` and variation `total_variation`.
pub fn smallness_from_bounds(
    sup_density: f64,
    total_variation: f64,
    model: &VelocityModel,
    cost: &CostModel,
) -> Result<SmallnessReport> {
    if !(sup_density < model.rho_max) {
        return Err(Error::Domain(format!(
            "supremum {sup_density} reaches rho_max {}; the condition cannot hold",
            model.rho_max
        )));
    }
    if sup_density < 0.0 {
        return Err(Error::Domain(format!("negative supremum {sup_density}")));
    }
    let grid = 2000;
    let lipschitz = (0..=grid)
        .map(|k| {
            let r = sup_density * k as f64 / grid as f64;
            cost.second_derivative(r) * r
        })
        .fold(0.0, f64::max);
    let cost_constant = cost.derivative(sup_density) * sup_density;
    let lhs = 0.5 * model.v_max * (lipschitz * total_variation + 3.0 * cost_constant);
    let rhs = model.speed(sup_density);
    Ok(SmallnessReport {
        satisfied: lhs < rhs,
        lipschitz,
        cost_constant,
        lhs,
        rhs,
        sup_density,
        total_variation,
    })
}

pub fn smallness_check(
    density: &PiecewiseConstantDensity,
    model: &VelocityModel,
    cost: &CostModel,
) -> Result<SmallnessReport> {
    smallness_from_bounds(density.ess_sup(), density.total_variation(true), model, cost)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HughesState {
    pub t: f64,
    pub positions: Vec<f64>,
    pub chunk_mass: f64,
    /// Particles `0..=split` move left, the others move right.
    pub split: usize,
    pub turning_point: f64,
}

impl HughesState {
    pub fn rhs_hughes(&self, model: &VelocityModel) -> Result<Vec<f64>> {
        check_ordering(&self.positions)?;
        let mut out = vec![0.0; self.positions.len()];
        hughes_velocities(model, self.chunk_mass, self.split, &self.positions, &mut out);
        Ok(out)
    }

    pub fn moves_left(&self, i: usize) -> bool {
        i <= self.split
    }
}

pub fn hughes_velocities(model: &VelocityModel, chunk: f64, split: usize, x: &[f64], out: &mut [f64]) {
    let n = x.len() - 1;
    out[0] = -model.v_max;
    for i in 1..n {
        out[i] = if i <= split {
            -model.speed(chunk / (x[i] - x[i - 1]))
        } else {
            model.speed(chunk / (x[i + 1] - x[i]))
        };
    }
    out[n] = model.v_max;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HughesSnapshot {
    #[serde(flatten)]
    pub snapshot: Snapshot,
    pub split: usize,
    pub turning_point: f64,
    pub residual: f64,
}

/// A particle whose direction flipped because the turning point crossed it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchEvent {
    pub t: f64,
    pub particle: usize,
    /// True when the particle turned from the right group to the left group.
    pub now_moves_left: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiSample {
    pub t: f64,
    pub turning_point: f64,
    pub residual: f64,
    pub split: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HughesTrajectory {
    pub model: VelocityModel,
    pub cost: CostModel,
    pub chunk_mass: f64,
    pub max_density: f64,
    pub snapshots: Vec<HughesSnapshot>,
    /// Turning point after every accepted step.
    pub xi_track: Vec<XiSample>,
    pub switches: Vec<SwitchEvent>,
    pub max_residual: f64,
    pub stats: RunStats,
}

impl HughesTrajectory {
    pub fn density_at(&self, k: usize) -> Result<PiecewiseConstantDensity> {
        let s = &self.snapshots[k];
        hughes_density(&s.snapshot.positions, self.chunk_mass, s.split)
    }

    pub fn mass_inside_at(&self, k: usize) -> f64 {
        let s = &self.snapshots[k];
        mass_inside(&s.snapshot.positions, self.chunk_mass, s.split)
    }
}

const MAX_RESTARTS: usize = 1_000_000;

pub fn evolve_hughes(
    init: &HughesAtomization,
    model: &VelocityModel,
    cost: &CostModel,
    t_final: f64,
    cfg: &EvolveConfig,
    switching: bool,
) -> Result<HughesTrajectory> {
    let start = Instant::now();
    check_ordering(&init.positions)?;
    let times = sample_times(t_final, cfg.samples)?;
    let chunk = init.chunk_mass;
    let n = init.positions.len() - 1;
    let max_density = init
        .positions
        .windows(2)
        .map(|w| chunk / (w[1] - w[0]))
        .fold(0.0, f64::max);
    let mut split = init.split_index;
    let mut t = 0.0;
    let mut y = init.positions.clone();
    let mut snapshots = Vec::with_capacity(times.len());
    let mut xi_track = Vec::new();
    let mut switches = Vec::new();
    let mut max_residual: f64 = 0.0;
    let mut stats = IntegratorStats::default();
    let mut step_hint = None;
    let mut restarts = 0usize;
    let floor = chunk / max_density * (1.0 - GAP_SLACK);

    loop {
        let current = split;
        let mut failure: Option<Error> = None;
        let mut rhs = |_t: f64, x: &[f64], dx: &mut [f64]| hughes_velocities(model, chunk, current, x, dx);
        let xi_of = |x: &[f64]| {
            particle_turning_point(x, chunk, current, cost)
                .map(|(xi, _)| xi)
                .unwrap_or(f64::NAN)
        };
        // watch the nearest particles on either side of the turning point, which are the
        // split chunk's own ends unless two neighbouring splits disagree
        let xi0 = xi_of(&y);
        let left = y[..=current].partition_point(|x| *x <= xi0).saturating_sub(1);
        let right = current + 1 + y[current + 1..].partition_point(|x| *x < xi0);
        let right = right.min(n);
        // each group obeys its own maximum principle; the emptied chunk only has to stay ordered
        let guard = move |y: &[f64]| {
            y.windows(2)
                .enumerate()
                .all(|(i, w)| w[1] > w[0] && (i == current || w[1] - w[0] >= floor))
        };
        let mut events = Vec::new();
        let mut kinds = Vec::new();
        if left >= 1 {
            events.push(Event::new(move |_t, x: &[f64]| xi_of(x) - x[left], Crossing::Falling, true));
            kinds.push(false);
        }
        if right < n {
            events.push(Event::new(move |_t, x: &[f64]| x[right] - xi_of(x), Crossing::Falling, true));
            kinds.push(true);
        }
        let mut observer = |p: &StepPoint| {
            let (xi, residual) = match particle_turning_point(p.y, chunk, current, cost) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    (f64::NAN, f64::NAN)
                }
            };
            max_residual = max_residual.max(residual.abs());
            xi_track.push(XiSample {
                t: p.t,
                turning_point: xi,
                residual,
                split: current,
            });
            if p.stop.is_some() {
                snapshots.push(HughesSnapshot {
                    snapshot: Snapshot {
                        t: p.t,
                        positions: p.y.to_vec(),
                        velocities: p.dydt.to_vec(),
                    },
                    split: current,
                    turning_point: xi,
                    residual,
                });
            }
        };
        let mut problem = Problem::new(&mut rhs);
        problem.events = &events;
        problem.guard = Some(&guard);
        problem.stops = &times;
        problem.observer = Some(&mut observer);
        problem.initial_step = step_hint;
        let solution = integrate(problem, &y, t, t_final, &cfg.integrator)?;
        if let Some(e) = failure {
            return Err(e);
        }
        stats.absorb(&solution.stats);
        t = solution.t;
        y = solution.y;
        step_hint = Some(solution.next_step);
        let Some(which) = solution.terminated_by else {
            break;
        };
        let hit_right = kinds[which];
        let crossed = if hit_right { right } else { left };
        if !switching {
            return Err(Error::TurningPointCollision { t, particle: crossed });
        }
        // every particle between the split and the crossed one changes side; emptying
        // the new chunk can then move the turning point a few particles either way
        let crossed_split = if hit_right { crossed } else { crossed - 1 };
        let settled = settle_split(&y, chunk, crossed_split, cost)?.split;
        // never settle back onto the old split, which would refire the same event
        split = if settled == current { crossed_split } else { settled };
        let flipped: Vec<(usize, bool)> = if split > current {
            (current + 1..=split).map(|i| (i, true)).collect()
        } else {
            (split + 1..=current).rev().map(|i| (i, false)).collect()
        };
        for (particle, now_moves_left) in flipped {
            switches.push(SwitchEvent {
                t,
                particle,
                now_moves_left,
            });
        }
        log::debug!("turning point crossed particle {crossed} at t = {t}");
        restarts += 1;
        if restarts > MAX_RESTARTS {
            return Err(Error::Integration {
                t,
                reason: "too many direction switches".into(),
            });
        }
    }

    Ok(HughesTrajectory {
        model: model.clone(),
        cost: cost.clone(),
        chunk_mass: chunk,
        max_density,
        snapshots,
        xi_track,
        switches,
        max_residual,
        stats: RunStats {
            integrator: stats,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    })
}
