//! Reference solutions: exact Riemann fans, a closed-form boundary test and
//! a first-order Godunov finite-volume solver.

use serde::{Deserialize, Serialize};

use crate::density::{BoundaryData, DensityProfile, PiecewiseConstantDensity};
use crate::error::{Error, Result};
use crate::hughes::{turning_point, CostModel, DOMAIN};
use crate::model::{FluxModel, VelocityKind};

fn check_range(flux: &FluxModel, rho: f64) -> Result<()> {
    if !(0.0..=flux.rho_max()).contains(&rho) {
        return Err(Error::DensityOutOfRange {
            value: rho,
            rho_max: flux.rho_max(),
        });
    }
    Ok(())
}

/// Exact Godunov flux for a unimodal flux, in demand/supply form.
pub fn godunov_flux(left: f64, right: f64, flux: &FluxModel) -> Result<f64> {
    check_range(flux, left)?;
    check_range(flux, right)?;
    Ok(godunov_flux_unchecked(left, right, flux))
}

#[inline]
fn godunov_flux_unchecked(left: f64, right: f64, flux: &FluxModel) -> f64 {
    let hat = flux.rho_hat();
    let demand = flux.flux_unchecked(left.min(hat));
    let supply = flux.flux_unchecked(right.max(hat));
    demand.min(supply)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Wave {
    Constant,
    Shock { speed: f64 },
    /// Fan between the characteristic speeds `f'(left)` and `f'(right)`.
    Rarefaction { head: f64, tail: f64 },
}

/// Self-similar entropy solution `rho(x / t)` of a Riemann problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LaxRiemann {
    pub left: f64,
    pub right: f64,
    pub wave: Wave,
    flux: FluxModel,
}

pub fn lax_riemann(left: f64, right: f64, flux: &FluxModel) -> Result<LaxRiemann> {
    check_range(flux, left)?;
    check_range(flux, right)?;
    if !flux.is_concave_on(left, right) {
        return Err(Error::NonConcaveFlux(left.min(right), left.max(right)));
    }
    let wave = if left == right {
        Wave::Constant
    } else if left < right {
        Wave::Shock {
            speed: (flux.flux_unchecked(right) - flux.flux_unchecked(left)) / (right - left),
        }
    } else {
        Wave::Rarefaction {
            head: flux.derivative(left),
            tail: flux.derivative(right),
        }
    };
    Ok(LaxRiemann {
        left,
        right,
        wave,
        flux: flux.clone(),
    })
}

impl LaxRiemann {
    /// Value at `xi = x / t`; shocks take the right state at `xi = speed`.
    pub fn eval(&self, xi: f64) -> f64 {
        match self.wave {
            Wave::Constant => self.left,
            Wave::Shock { speed } => {
                if xi < speed {
                    self.left
                } else {
                    self.right
                }
            }
            Wave::Rarefaction { head, tail } => {
                if xi <= head {
                    self.left
                } else if xi >= tail {
                    self.right
                } else {
                    self.fan(xi)
                }
            }
        }
    }

    /// Solves `f'(rho) = xi` inside the fan.
    fn fan(&self, xi: f64) -> f64 {
        let model = &self.flux.velocity;
        if let VelocityKind::Greenshields = model.kind {
            let rho = 0.5 * model.rho_max * (1.0 - xi / model.v_max);
            return rho.clamp(self.right, self.left);
        }
        // f' is decreasing on [right, left]
        let (mut lo, mut hi) = (self.right, self.left);
        while hi - lo > 1e-15 {
            let mid = 0.5 * (lo + hi);
            if self.flux.derivative(mid) > xi {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Limit of the solution at `x = 0+`.
    pub fn trace_right_of_zero(&self) -> f64 {
        match self.wave {
            Wave::Shock { speed } if speed > 0.0 => self.left,
            Wave::Shock { .. } => self.right,
            _ => self.eval(0.0),
        }
    }

    /// Limit of the solution at `x = 0-`.
    pub fn trace_left_of_zero(&self) -> f64 {
        match self.wave {
            Wave::Shock { speed } if speed >= 0.0 => self.left,
            Wave::Shock { .. } => self.right,
            _ => self.eval(0.0),
        }
    }

    /// Extreme wave speeds `(slowest, fastest)`.
    pub fn speeds(&self) -> (f64, f64) {
        match self.wave {
            Wave::Constant => (0.0, 0.0),
            Wave::Shock { speed } => (speed, speed),
            Wave::Rarefaction { head, tail } => (head, tail),
        }
    }

    /// Profile at time `t` for a jump initially at `center`.
    pub fn at(&self, center: f64, t: f64) -> RiemannProfile<'_> {
        RiemannProfile {
            riemann: self,
            center,
            t,
        }
    }
}

pub struct RiemannProfile<'a> {
    riemann: &'a LaxRiemann,
    center: f64,
    t: f64,
}

impl DensityProfile for RiemannProfile<'_> {
    fn eval(&self, x: f64) -> f64 {
        if self.t <= 0.0 {
            return if x < self.center {
                self.riemann.left
            } else {
                self.riemann.right
            };
        }
        self.riemann.eval((x - self.center) / self.t)
    }

    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let (lo, hi) = self.riemann.speeds();
        let mut out = vec![self.center + lo * self.t, self.center + hi * self.t];
        out.retain(|x| *x > a && *x < b);
        out.dedup();
        out
    }
}

/// Superposition of the Riemann fans issued by a piecewise-constant datum,
/// extended by vacuum, valid until neighbouring waves meet.
#[derive(Debug, Clone)]
pub struct RiemannComposition {
    centers: Vec<f64>,
    waves: Vec<LaxRiemann>,
    interaction_time: f64,
}

impl RiemannComposition {
    pub fn new(datum: &PiecewiseConstantDensity, flux: &FluxModel) -> Result<Self> {
        let mut states = vec![0.0];
        states.extend_from_slice(datum.values());
        states.push(0.0);
        let mut centers = Vec::new();
        let mut waves = Vec::new();
        for (x, pair) in datum.breakpoints().iter().zip(states.windows(2)) {
            if pair[0] != pair[1] {
                centers.push(*x);
                waves.push(lax_riemann(pair[0], pair[1], flux)?);
            }
        }
        let mut interaction_time = f64::INFINITY;
        for j in 1..waves.len() {
            let closing = waves[j - 1].speeds().1 - waves[j].speeds().0;
            if closing > 0.0 {
                interaction_time = interaction_time.min((centers[j] - centers[j - 1]) / closing);
            }
        }
        Ok(RiemannComposition {
            centers,
            waves,
            interaction_time,
        })
    }

    /// First time two fans touch.
    pub fn interaction_time(&self) -> f64 {
        self.interaction_time
    }

    pub fn at(&self, t: f64) -> Result<CompositionProfile<'_>> {
        if t > self.interaction_time {
            return Err(Error::Domain(format!(
                "waves interact at t = {}, cannot evaluate at t = {t}",
                self.interaction_time
            )));
        }
        Ok(CompositionProfile { composition: self, t })
    }
}

pub struct CompositionProfile<'a> {
    composition: &'a RiemannComposition,
    t: f64,
}

impl DensityProfile for CompositionProfile<'_> {
    fn eval(&self, x: f64) -> f64 {
        let c = self.composition;
        for (center, wave) in c.centers.iter().zip(&c.waves) {
            let (_, fastest) = wave.speeds();
            if x < center + fastest * self.t || (self.t == 0.0 && x < *center) {
                return wave.at(*center, self.t).eval(x);
            }
        }
        c.waves.last().map_or(0.0, |w| w.right)
    }

    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let c = self.composition;
        let mut out: Vec<f64> = c
            .centers
            .iter()
            .zip(&c.waves)
            .flat_map(|(center, wave)| wave.at(*center, self.t).breakpoints(a, b))
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// Right end of the middle plateau of the boundary test solution.
pub fn ptd_plateau_end() -> f64 {
    0.2 * (9.0 - 2.0 * 5f64.sqrt())
}

/// Closed-form density at `T = 2` for the time-dependent boundary test
/// (interior 0.3, inflow 0.1 then 0.6, outflow 0.9 then 0.1, switch at `t = 1`).
pub fn exact_ptd(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("exact solution is defined on [0, 1], got {x}")));
    }
    Ok(if x <= 0.8 {
        0.5 * (1.0 - x)
    } else if x <= ptd_plateau_end() {
        0.1
    } else {
        0.5 * (2.0 - x)
    })
}

/// [`exact_ptd`] as a profile; zero outside `[0, 1]`.
pub struct ExactPtd;

impl DensityProfile for ExactPtd {
    fn eval(&self, x: f64) -> f64 {
        exact_ptd(x).unwrap_or(0.0)
    }

    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        [0.0, 0.8, ptd_plateau_end(), 1.0]
            .into_iter()
            .filter(|x| *x > a && *x < b)
            .collect()
    }
}

/// Cell averages on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GodunovGrid {
    pub left: f64,
    pub right: f64,
    pub values: Vec<f64>,
}

impl GodunovGrid {
    pub fn from_density(density: &PiecewiseConstantDensity, left: f64, right: f64, cells: usize) -> Result<Self> {
        if cells == 0 || !(right > left) {
            return Err(Error::Domain(format!("bad grid: {cells} cells on [{left}, {right}]")));
        }
        let dx = (right - left) / cells as f64;
        let values = (0..cells)
            .map(|j| {
                let a = left + j as f64 * dx;
                let b = if j + 1 == cells { right } else { a + dx };
                (density.cdf(b) - density.cdf(a)) / (b - a)
            })
            .collect();
        Ok(GodunovGrid { left, right, values })
    }

    pub fn dx(&self) -> f64 {
        (self.right - self.left) / self.values.len() as f64
    }

    pub fn edge(&self, j: usize) -> f64 {
        if j == self.values.len() {
            self.right
        } else {
            self.left + j as f64 * self.dx()
        }
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx()
    }

    pub fn to_density(&self) -> Result<PiecewiseConstantDensity> {
        let edges = (0..=self.values.len()).map(|j| self.edge(j)).collect();
        PiecewiseConstantDensity::new(edges, self.values.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Ghost cells copy their neighbours.
    Transmissive,
    /// Empty ghost cells on both sides.
    GhostZero,
    /// Ghost cells carry the boundary data at the start of each step.
    Dirichlet { inflow: BoundaryData, outflow: BoundaryData },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GodunovConfig {
    pub cfl: f64,
    /// Fixed number of steps; otherwise derived from `cfl`.
    pub steps: Option<usize>,
}

impl Default for GodunovConfig {
    fn default() -> Self {
        GodunovConfig { cfl: 0.9, steps: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GodunovRun {
    pub grid: GodunovGrid,
    pub steps: usize,
    pub dt: f64,
    pub cfl: f64,
    /// Largest per-step gap between the mass change and the boundary fluxes.
    pub mass_defect: f64,
    /// Turning point at the final time, Hughes mode only.
    pub turning_point: Option<f64>,
}

/// `faces` is how many faces a single cell can drain through at once.
fn time_step(grid: &GodunovGrid, flux: &FluxModel, t_final: f64, cfg: &GodunovConfig, faces: f64) -> Result<(usize, f64, f64)> {
    if !(t_final > 0.0) {
        return Err(Error::Domain(format!("final time must be positive, got {t_final}")));
    }
    if !(cfg.cfl > 0.0 && cfg.cfl <= 1.0) {
        return Err(Error::Cfl(cfg.cfl));
    }
    let speed = faces * flux.max_wave_speed();
    let dx = grid.dx();
    let steps = match cfg.steps {
        Some(s) if s > 0 => s,
        Some(_) => return Err(Error::Domain("step count must be positive".into())),
        None => (t_final * speed / (cfg.cfl * dx)).ceil().max(1.0) as usize,
    };
    let dt = t_final / steps as f64;
    let cfl = dt * speed / dx;
    if cfl > 1.0 + 1e-12 {
        return Err(Error::Cfl(cfl));
    }
    Ok((steps, dt, cfl / faces))
}

fn update(values: &mut [f64], fluxes: &[f64], ratio: f64) {
    for (j, v) in values.iter_mut().enumerate() {
        *v -= ratio * (fluxes[j + 1] - fluxes[j]);
    }
}

/// First-order Godunov scheme for `rho_t + f(rho)_x = 0`.
pub fn godunov_solve(
    initial: &GodunovGrid,
    flux: &FluxModel,
    mode: &BoundaryMode,
    t_final: f64,
    cfg: &GodunovConfig,
) -> Result<GodunovRun> {
    for v in &initial.values {
        check_range(flux, *v)?;
    }
    let (steps, dt, cfl) = time_step(initial, flux, t_final, cfg, 1.0)?;
    let dx = initial.dx();
    let mut grid = initial.clone();
    let cells = grid.values.len();
    let mut fluxes = vec![0.0; cells + 1];
    let mut mass_defect = 0.0f64;
    for k in 0..steps {
        let t = k as f64 * dt;
        let (ghost_left, ghost_right) = match mode {
            BoundaryMode::Transmissive => (grid.values[0], grid.values[cells - 1]),
            BoundaryMode::GhostZero => (0.0, 0.0),
            BoundaryMode::Dirichlet { inflow, outflow } => (inflow.value_at(t), outflow.value_at(t)),
        };
        fluxes[0] = godunov_flux_unchecked(ghost_left, grid.values[0], flux);
        for (j, w) in grid.values.windows(2).enumerate() {
            fluxes[j + 1] = godunov_flux_unchecked(w[0], w[1], flux);
        }
        fluxes[cells] = godunov_flux_unchecked(grid.values[cells - 1], ghost_right, flux);
        let before = grid.mass();
        update(&mut grid.values, &fluxes, dt / dx);
        let expected = (fluxes[0] - fluxes[cells]) * dt;
        mass_defect = mass_defect.max((grid.mass() - before - expected).abs());
    }
    Ok(GodunovRun {
        grid,
        steps,
        dt,
        cfl,
        mass_defect,
        turning_point: None,
    })
}

/// Godunov scheme for the Hughes model on `(-1, 1)` with perfect exits.
///
/// Left of the turning point the flux is `-f`, handled by mirroring the
/// Riemann problem; the turning point is recomputed from the cell averages
/// before every step. The cell around the turning point drains through both
/// faces, so the step is half the usual CFL step to keep it nonnegative.
pub fn godunov_hughes(
    initial: &GodunovGrid,
    cost: &CostModel,
    t_final: f64,
    cfg: &GodunovConfig,
) -> Result<GodunovRun> {
    if initial.left != DOMAIN.0 || initial.right != DOMAIN.1 {
        return Err(Error::Domain("Hughes grid must cover (-1, 1) exactly".into()));
    }
    let flux = FluxModel::new(cost.velocity.clone());
    for v in &initial.values {
        check_range(&flux, *v)?;
    }
    let (steps, dt, cfl) = time_step(initial, &flux, t_final, cfg, 2.0)?;
    let dx = initial.dx();
    let mut grid = initial.clone();
    let cells = grid.values.len();
    let mut fluxes = vec![0.0; cells + 1];
    let mut mass_defect = 0.0f64;
    let mut xi = 0.0;
    for _ in 0..steps {
        xi = turning_point(&grid.to_density()?, cost)?;
        let cell = |j: isize| {
            if j < 0 || j >= cells as isize {
                0.0
            } else {
                grid.values[j as usize]
            }
        };
        for (j, slot) in fluxes.iter_mut().enumerate() {
            let (left, right) = (cell(j as isize - 1), cell(j as isize));
            let edge = grid.edge(j);
            *slot = if (edge - xi).abs() <= 1e-12 {
                // nothing crosses a turning point sitting on a face
                0.0
            } else if edge < xi {
                -godunov_flux_unchecked(right, left, &flux)
            } else {
                godunov_flux_unchecked(left, right, &flux)
            };
        }
        let before = grid.mass();
        update(&mut grid.values, &fluxes, dt / dx);
        let expected = (fluxes[0] - fluxes[cells]) * dt;
        mass_defect = mass_defect.max((grid.mass() - before - expected).abs());
    }
    Ok(GodunovRun {
        grid,
        steps,
        dt,
        cfl,
        mass_defect,
        turning_point: Some(xi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VelocityModel;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit() -> FluxModel {
        FluxModel::new(VelocityModel::unit_greenshields())
    }

    #[test]
    fn godunov_flux_cases() {
        let f = unit();
        assert_relative_eq!(godunov_flux(0.3, 0.3, &f).unwrap(), 0.21, epsilon = 1e-15);
        assert_relative_eq!(godunov_flux(1.0, 0.0, &f).unwrap(), 0.25, epsilon = 1e-15);
        // brute-force minimum of f over [0.2, 0.6]
        let oracle = (0..=4000)
            .map(|k| {
                let r = 0.2 + 0.4 * k as f64 / 4000.0;
                r * (1.0 - r)
            })
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(oracle, 0.16, epsilon = 1e-12);
        assert_relative_eq!(godunov_flux(0.2, 0.6, &f).unwrap(), 0.16, epsilon = 1e-15);
        assert!(godunov_flux(1.2, 0.0, &f).is_err());
    }

    proptest! {
        #[test]
        fn godunov_flux_is_consistent(r in 0.0f64..=1.0) {
            let f = unit();
            prop_assert!((godunov_flux(r, r, &f).unwrap() - r * (1.0 - r)).abs() < 1e-15);
        }

        #[test]
        fn godunov_flux_extremises_over_interval(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let f = unit();
            let g = godunov_flux(a, b, &f).unwrap();
            let samples = (0..=200).map(|k| {
                let r = a.min(b) + (a - b).abs() * k as f64 / 200.0;
                r * (1.0 - r)
            });
            let oracle = if a <= b {
                samples.fold(f64::INFINITY, f64::min)
            } else {
                samples.fold(f64::NEG_INFINITY, f64::max)
            };
            prop_assert!((g - oracle).abs() < 1e-4);
        }

        #[test]
        fn rarefaction_is_monotone(l in 0.0f64..=1.0, r in 0.0f64..=1.0) {
            prop_assume!(l > r);
            let lax = lax_riemann(l, r, &unit()).unwrap();
            let mut prev = l;
            for k in 0..=100 {
                let v = lax.eval(-1.2 + 2.4 * k as f64 / 100.0);
                prop_assert!(v <= prev + 1e-15 && v >= r - 1e-15);
                prev = v;
            }
        }

        #[test]
        fn shock_satisfies_chord_condition(l in 0.0f64..=1.0, r in 0.0f64..=1.0) {
            prop_assume!(r - l > 1e-3);
            let f = unit();
            let lax = lax_riemann(l, r, &f).unwrap();
            let Wave::Shock { speed } = lax.wave else { panic!("expected shock") };
            // concave flux lies above its chord between the states
            for k in 1..20 {
                let u = l + (r - l) * k as f64 / 20.0;
                let chord = f.flux_unchecked(l) + speed * (u - l);
                prop_assert!(f.flux_unchecked(u) >= chord - 1e-14);
            }
        }
    }

    #[test]
    fn lax_examples() {
        let f = unit();
        let c = lax_riemann(0.3, 0.3, &f).unwrap();
        assert_eq!(c.eval(-5.0), 0.3);
        assert_eq!(c.eval(5.0), 0.3);
        let s = lax_riemann(0.4, 0.8, &f).unwrap();
        match s.wave {
            Wave::Shock { speed } => assert_relative_eq!(speed, -0.2, epsilon = 1e-15),
            _ => panic!("expected a shock"),
        }
        let r = lax_riemann(0.8, 0.1, &f).unwrap();
        let Wave::Rarefaction { head, tail } = r.wave else { panic!() };
        assert_relative_eq!(head, -0.6, epsilon = 1e-15);
        assert_relative_eq!(tail, 0.8, epsilon = 1e-15);
        for xi in [-0.5, 0.0, 0.3, 0.7] {
            assert_relative_eq!(r.eval(xi), 0.5 * (1.0 - xi), epsilon = 1e-15);
        }
        assert!(lax_riemann(0.4, 1.5, &f).is_err());
    }

    #[test]
    fn generic_fan_matches_closed_form() {
        let tab = VelocityModel::new(
            VelocityKind::Tabulated {
                samples: vec![[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]],
            },
            1.0,
            1.0,
        )
        .unwrap();
        let r = lax_riemann(0.8, 0.1, &FluxModel::new(tab)).unwrap();
        for xi in [-0.5, 0.0, 0.3, 0.7] {
            assert_relative_eq!(r.eval(xi), 0.5 * (1.0 - xi), epsilon = 1e-12);
        }
    }

    #[test]
    fn boundary_traces() {
        let f = unit();
        // incoming shock from the right boundary
        let s = lax_riemann(0.2, 1.0, &f).unwrap();
        assert_eq!(s.trace_left_of_zero(), 1.0);
        let s = lax_riemann(0.4, 0.2, &f).unwrap();
        assert_relative_eq!(s.trace_right_of_zero(), 0.4, epsilon = 1e-15);
        let s = lax_riemann(0.8, 0.1, &f).unwrap();
        assert_relative_eq!(s.trace_right_of_zero(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn composition_for_two_blocks() {
        let f = unit();
        let d = PiecewiseConstantDensity::new(vec![-1.0, 0.0, 1.0], vec![0.4, 0.8]).unwrap();
        let c = RiemannComposition::new(&d, &f).unwrap();
        assert_relative_eq!(c.interaction_time(), 1.25, epsilon = 1e-12);
        let p = c.at(0.5).unwrap();
        assert_eq!(p.eval(-1.5), 0.0);
        assert_eq!(p.eval(-0.5), 0.4);
        assert_eq!(p.eval(-0.05), 0.8);
        assert_eq!(p.eval(0.5), 0.8);
        assert_relative_eq!(p.eval(1.0), 0.5, epsilon = 1e-15);
        assert_eq!(p.eval(1.6), 0.0);
        assert!(c.at(2.0).is_err());
        let exact_mass = d.mass();
        let grid = GodunovGrid::from_density(&d, -3.0, 3.0, 6000).unwrap();
        let approx = grid.to_density().unwrap().l1_distance_to(&c.at(0.0).unwrap(), -3.0, 3.0);
        assert!(approx < 1e-12);
        assert_relative_eq!(grid.mass(), exact_mass, max_relative = 1e-12);
    }

    #[test]
    fn ptd_values() {
        assert_relative_eq!(exact_ptd(0.4).unwrap(), 0.3, epsilon = 1e-15);
        assert_eq!(exact_ptd(0.85).unwrap(), 0.1);
        assert_relative_eq!(exact_ptd(1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert!(exact_ptd(1.1).is_err());
        assert_relative_eq!(ptd_plateau_end(), 0.9055728090000841, epsilon = 1e-15);
    }

    #[test]
    fn constant_state_is_preserved() {
        let d = PiecewiseConstantDensity::constant(0.0, 1.0, 0.3).unwrap();
        let grid = GodunovGrid::from_density(&d, 0.0, 1.0, 50).unwrap();
        let run = godunov_solve(&grid, &unit(), &BoundaryMode::Transmissive, 1.0, &GodunovConfig::default()).unwrap();
        for v in &run.grid.values {
            assert_relative_eq!(*v, 0.3, epsilon = 1e-14);
        }
        assert!(run.cfl <= 0.9);
    }

    #[test]
    fn cfl_violation_aborts() {
        let d = PiecewiseConstantDensity::constant(0.0, 1.0, 0.3).unwrap();
        let grid = GodunovGrid::from_density(&d, 0.0, 1.0, 50).unwrap();
        let cfg = GodunovConfig { cfl: 1.5, steps: None };
        assert!(matches!(godunov_solve(&grid, &unit(), &BoundaryMode::GhostZero, 1.0, &cfg), Err(Error::Cfl(_))));
        let cfg = GodunovConfig { cfl: 0.9, steps: Some(10) };
        assert!(matches!(godunov_solve(&grid, &unit(), &BoundaryMode::GhostZero, 1.0, &cfg), Err(Error::Cfl(_))));
    }

    #[test]
    fn mass_balance_per_step() {
        let d = PiecewiseConstantDensity::new(vec![0.0, 0.5, 1.0], vec![0.8, 0.1]).unwrap();
        let grid = GodunovGrid::from_density(&d, 0.0, 1.0, 100).unwrap();
        let mode = BoundaryMode::Dirichlet {
            inflow: BoundaryData::constant(0.3).unwrap(),
            outflow: BoundaryData::constant(0.1).unwrap(),
        };
        let run = godunov_solve(&grid, &unit(), &mode, 1.0, &GodunovConfig::default()).unwrap();
        assert!(run.mass_defect < 1e-12, "{}", run.mass_defect);
    }

    #[test]
    fn shock_converges_under_refinement() {
        let f = unit();
        let d = PiecewiseConstantDensity::new(vec![-1.0, 0.0, 1.0], vec![0.4, 0.8]).unwrap();
        let exact = RiemannComposition::new(&d, &f).unwrap();
        let t = 0.5;
        let mut prev = f64::INFINITY;
        for cells in [100, 200, 400, 800] {
            let grid = GodunovGrid::from_density(&d, -2.0, 2.0, cells).unwrap();
            let run = godunov_solve(&grid, &f, &BoundaryMode::Transmissive, t, &GodunovConfig::default()).unwrap();
            let e = run.grid.to_density().unwrap().l1_distance_to(&exact.at(t).unwrap(), -2.0, 2.0);
            assert!(e < prev, "{cells}: {e} vs {prev}");
            prev = e;
        }
        assert!(prev < 0.02);
    }

    #[test]
    fn hughes_symmetric_datum_keeps_centre() {
        let cost = CostModel::inverse_velocity(VelocityModel::unit_greenshields());
        let d = PiecewiseConstantDensity::new(vec![-0.5, 0.5], vec![0.4]).unwrap();
        let grid = GodunovGrid::from_density(&d, -1.0, 1.0, 200).unwrap();
        let run = godunov_hughes(&grid, &cost, 0.5, &GodunovConfig::default()).unwrap();
        assert!(run.turning_point.unwrap().abs() < 1e-10);
        assert!(run.grid.mass() < d.mass());
        let v = &run.grid.values;
        for j in 0..v.len() {
            assert_relative_eq!(v[j], v[v.len() - 1 - j], epsilon = 1e-12);
        }
    }
}
