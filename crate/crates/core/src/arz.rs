//! Second-order follow-the-leader scheme for the Aw–Rascle–Zhang system.
//!
//! Every particle carries the marker `w = v + p(rho)` of the chunk ahead of
//! it; markers are frozen in time and the velocities are `w_i - p(R_i)`.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::atomize::ArzAtomization;
use crate::density::PiecewiseConstantDensity;
use crate::error::{Error, Result};
use crate::integrator::{integrate, Problem, StepPoint};
use crate::lwr::{check_ordering, discrete_density};
use crate::trajectory::{sample_times, EvolveConfig, RunStats, Snapshot};

/// Scalar pressure law supplied as a closure.
#[derive(Clone)]
pub struct CustomPressure {
    pub name: String,
    pub pressure: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomPressure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomPressure({})", self.name)
    }
}

impl PartialEq for CustomPressure {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.pressure, &other.pressure)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PressureModel {
    /// `rho^gamma`.
    PowerLaw { gamma: f64 },
    /// `slope * rho`.
    Linear { slope: f64 },
    /// `coefficient * ln(rho)`.
    LogScaled { coefficient: f64 },
    #[serde(skip)]
    Custom(CustomPressure),
}

const INVERSE_TOL: f64 = 1e-14;
const VALIDITY_GRID: usize = 1000;
const VALIDITY_TOP: f64 = 2.0;

impl PressureModel {
    pub fn custom(name: &str, pressure: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        PressureModel::Custom(CustomPressure {
            name: name.to_string(),
            pressure: Arc::new(pressure),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            PressureModel::PowerLaw { gamma } => *gamma > 0.0 && gamma.is_finite(),
            PressureModel::Linear { slope } => *slope > 0.0 && slope.is_finite(),
            PressureModel::LogScaled { coefficient } => *coefficient > 0.0 && coefficient.is_finite(),
            PressureModel::Custom(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!("invalid pressure parameters {self:?}")))
        }
    }

    #[inline]
    pub fn eval(&self, rho: f64) -> f64 {
        match self {
            PressureModel::PowerLaw { gamma } => rho.max(0.0).powf(*gamma),
            PressureModel::Linear { slope } => slope * rho,
            PressureModel::LogScaled { coefficient } => coefficient * rho.ln(),
            PressureModel::Custom(c) => (c.pressure)(rho),
        }
    }

    fn derivative(&self, rho: f64) -> f64 {
        match self {
            PressureModel::PowerLaw { gamma } => gamma * rho.powf(gamma - 1.0),
            PressureModel::Linear { slope } => *slope,
            PressureModel::LogScaled { coefficient } => coefficient / rho,
            PressureModel::Custom(_) => {
                let h = 1e-6 * rho.max(1e-6);
                (self.eval(rho + h) - self.eval(rho - h)) / (2.0 * h)
            }
        }
    }

    fn second_derivative(&self, rho: f64) -> f64 {
        match self {
            PressureModel::PowerLaw { gamma } => gamma * (gamma - 1.0) * rho.powf(gamma - 2.0),
            PressureModel::Linear { .. } => 0.0,
            PressureModel::LogScaled { coefficient } => -coefficient / (rho * rho),
            PressureModel::Custom(_) => {
                let h = 1e-4 * rho.max(1e-4);
                (self.eval(rho + h) - 2.0 * self.eval(rho) + self.eval(rho - h)) / (h * h)
            }
        }
    }

    /// Whether `p(0+) = 0`, `p' > 0` and `2 p' + rho p'' > 0` hold on a sample grid.
    pub fn is_admissible(&self) -> bool {
        if self.eval(1e-12).abs() > 1e-6 || !self.eval(1e-12).is_finite() {
            return false;
        }
        (1..=VALIDITY_GRID).all(|k| {
            let r = VALIDITY_TOP * k as f64 / VALIDITY_GRID as f64;
            let d = self.derivative(r);
            d > 0.0 && 2.0 * d + r * self.second_derivative(r) > 0.0
        })
    }

    /// Density with pressure `value`.
    pub fn inverse(&self, value: f64) -> f64 {
        match self {
            PressureModel::PowerLaw { gamma } => value.max(0.0).powf(1.0 / gamma),
            PressureModel::Linear { slope } => value / slope,
            PressureModel::LogScaled { coefficient } => (value / coefficient).exp(),
            PressureModel::Custom(_) => {
                let (mut lo, mut hi) = (0.0, 1.0);
                while self.eval(hi) < value && hi < 1e12 {
                    lo = hi;
                    hi *= 2.0;
                }
                while hi - lo > INVERSE_TOL * hi.max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if self.eval(mid) < value {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

/// Piecewise-constant function on the whole line: `values[k]` holds between
/// `breakpoints[k - 1]` and `breakpoints[k]`, the end values extend to infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawField", into = "RawField")]
pub struct MarkerField {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawField {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawField> for MarkerField {
    type Error = Error;
    fn try_from(raw: RawField) -> Result<Self> {
        MarkerField::new(raw.breakpoints, raw.values)
    }
}

impl From<MarkerField> for RawField {
    fn from(f: MarkerField) -> Self {
        RawField {
            breakpoints: f.breakpoints,
            values: f.values,
        }
    }
}

impl MarkerField {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidDensity(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                values.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) || breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidDensity("field breakpoints must be finite and increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDensity("field values must be finite".into()));
        }
        Ok(MarkerField { breakpoints, values })
    }

    pub fn constant(value: f64) -> Self {
        MarkerField {
            breakpoints: Vec::new(),
            values: vec![value],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at `x`, pieces closed on the left.
    pub fn eval(&self, x: f64) -> f64 {
        self.values[self.breakpoints.partition_point(|b| *b <= x)]
    }

    /// Largest value over pieces meeting the open interval `(a, b)`.
    pub fn ess_sup_on(&self, a: f64, b: f64) -> f64 {
        let first = self.breakpoints.partition_point(|x| *x <= a);
        let last = self.breakpoints.partition_point(|x| *x < b);
        self.values[first..=last].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Marker of a two-state datum: `v + p(rho)` on either side of `jump`.
    pub fn riemann(jump: f64, left: (f64, f64), right: (f64, f64), pressure: &PressureModel) -> Self {
        MarkerField {
            breakpoints: vec![jump],
            values: vec![left.1 + pressure.eval(left.0), right.1 + pressure.eval(right.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArzParticleState {
    pub t: f64,
    pub positions: Vec<f64>,
    pub chunk_mass: f64,
    pub markers: Vec<f64>,
    pub pressure: PressureModel,
}

impl ArzParticleState {
    pub fn from_atomization(atom: &ArzAtomization, pressure: &PressureModel) -> Self {
        ArzParticleState {
            t: 0.0,
            positions: atom.positions.clone(),
            chunk_mass: atom.chunk_mass,
            markers: atom.markers.clone(),
            pressure: pressure.clone(),
        }
    }

    pub fn rhs_arz(&self) -> Result<Vec<f64>> {
        check_ordering(&self.positions)?;
        let mut out = vec![0.0; self.positions.len()];
        arz_velocities(&self.pressure, self.chunk_mass, &self.markers, &self.positions, &mut out);
        if self.pressure.is_admissible() {
            if let Some(i) = out.iter().position(|v| *v < 0.0) {
                return Err(Error::Domain(format!("negative velocity {} for particle {i}", out[i])));
            }
        }
        Ok(out)
    }

    pub fn reconstruct_fields(&self) -> Result<ArzFields> {
        reconstruct_fields(&self.positions, self.chunk_mass, &self.markers, &self.pressure)
    }
}

/// `x_i' = w_i - p(l / (x_{i+1} - x_i))` and `x_n' = w_{n-1}`.
pub fn arz_velocities(pressure: &PressureModel, chunk: f64, markers: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len() - 1;
    for i in 0..n {
        out[i] = markers[i] - pressure.eval(chunk / (x[i + 1] - x[i]));
    }
    out[n] = markers[n - 1];
}

/// Marker, velocity and density fields of a particle configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArzFields {
    pub marker: MarkerField,
    pub velocity: MarkerField,
    pub density: PiecewiseConstantDensity,
}

pub fn reconstruct_fields(
    positions: &[f64],
    chunk: f64,
    markers: &[f64],
    pressure: &PressureModel,
) -> Result<ArzFields> {
    check_ordering(positions)?;
    let n = positions.len() - 1;
    let densities: Vec<f64> = positions.windows(2).map(|w| chunk / (w[1] - w[0])).collect();
    let mut w = Vec::with_capacity(n + 2);
    let mut v = Vec::with_capacity(n + 2);
    w.push(markers[0]);
    v.push(markers[0]);
    for i in 0..n {
        w.push(markers[i]);
        v.push(markers[i] - pressure.eval(densities[i]));
    }
    w.push(markers[n - 1]);
    v.push(markers[n - 1]);
    // density from the fields, vacuum where the two coincide outside the hull
    let rho: Vec<f64> = (0..n).map(|i| pressure.inverse(w[i + 1] - v[i + 1])).collect();
    Ok(ArzFields {
        marker: MarkerField::new(positions.to_vec(), w)?,
        velocity: MarkerField::new(positions.to_vec(), v)?,
        density: PiecewiseConstantDensity::new(positions.to_vec(), rho)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArzSnapshot {
    #[serde(flatten)]
    pub snapshot: Snapshot,
    /// Markers read by the right-hand side at this time.
    pub markers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArzTrajectory {
    pub pressure: PressureModel,
    pub pressure_admissible: bool,
    pub chunk_mass: f64,
    pub initial_markers: Vec<f64>,
    pub snapshots: Vec<ArzSnapshot>,
    pub stats: RunStats,
}

impl Serialize for PressureModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(2))?;
        match self {
            PressureModel::PowerLaw { gamma } => {
                map.serialize_entry("kind", "power_law")?;
                map.serialize_entry("gamma", gamma)?;
            }
            PressureModel::Linear { slope } => {
                map.serialize_entry("kind", "linear")?;
                map.serialize_entry("slope", slope)?;
            }
            PressureModel::LogScaled { coefficient } => {
                map.serialize_entry("kind", "log_scaled")?;
                map.serialize_entry("coefficient", coefficient)?;
            }
            PressureModel::Custom(c) => {
                map.serialize_entry("kind", "custom")?;
                map.serialize_entry("name", &c.name)?;
            }
        }
        map.end()
    }
}

impl ArzTrajectory {
    pub fn density_at(&self, k: usize) -> Result<PiecewiseConstantDensity> {
        discrete_density(&self.snapshots[k].snapshot.positions, self.chunk_mass)
    }

    pub fn fields_at(&self, k: usize) -> Result<ArzFields> {
        let s = &self.snapshots[k];
        reconstruct_fields(&s.snapshot.positions, self.chunk_mass, &s.markers, &self.pressure)
    }
}

pub fn evolve_arz(
    init: &ArzAtomization,
    pressure: &PressureModel,
    t_final: f64,
    cfg: &EvolveConfig,
) -> Result<ArzTrajectory> {
    let start = Instant::now();
    pressure.validate()?;
    check_ordering(&init.positions)?;
    let state = ArzParticleState::from_atomization(init, pressure);
    let times = sample_times(t_final, cfg.samples)?;
    let chunk = state.chunk_mass;
    let markers = &state.markers;
    let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| arz_velocities(pressure, chunk, markers, y, dy);
    let guard = |y: &[f64]| y.windows(2).all(|w| w[1] > w[0]);
    let mut snapshots = Vec::with_capacity(times.len());
    let mut observer = |p: &StepPoint| {
        if p.stop.is_some() {
            snapshots.push(ArzSnapshot {
                snapshot: Snapshot {
                    t: p.t,
                    positions: p.y.to_vec(),
                    velocities: p.dydt.to_vec(),
                },
                markers: markers.clone(),
            });
        }
    };
    let mut problem = Problem::new(&mut rhs);
    problem.guard = Some(&guard);
    problem.stops = &times;
    problem.observer = Some(&mut observer);
    let solution = integrate(problem, &state.positions, 0.0, t_final, &cfg.integrator)?;
    let admissible = pressure.is_admissible();
    if !admissible {
        log::warn!("pressure law {pressure:?} violates p(0+) = 0, p' > 0 or 2p' + rho p'' > 0");
    }
    Ok(ArzTrajectory {
        pressure: pressure.clone(),
        pressure_admissible: admissible,
        chunk_mass: chunk,
        initial_markers: init.markers.clone(),
        snapshots,
        stats: RunStats {
            integrator: solution.stats,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;
    use crate::atomize::atomize_arz_unchecked;
    use approx::assert_relative_eq;

    fn linear() -> PressureModel {
        PressureModel::Linear { slope: 6.0 }
    }

    #[test]
    fn riemann_markers_of_test_two() {
        let f = MarkerField::riemann(0.0, (0.05, 0.05), (0.05, 0.5), &linear());
        assert_relative_eq!(f.values()[0], 0.35, epsilon = 1e-15);
        assert_relative_eq!(f.values()[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn jammed_particle_stops() {
        let p = linear();
        let w = 0.35;
        let chunk = 0.01;
        let gap = chunk / p.inverse(w);
        let s = ArzParticleState {
            t: 0.0,
            positions: vec![0.0, gap, gap + 1.0],
            chunk_mass: chunk,
            markers: vec![w, w],
            pressure: p,
        };
        let v = s.rhs_arz().unwrap();
        assert!(v[0].abs() < 1e-15);
        assert_eq!(v[2], w);
    }

    #[test]
    fn uniform_state_speed() {
        let s = ArzParticleState {
            t: 0.0,
            positions: vec![0.0, 0.2, 0.4, 0.6],
            chunk_mass: 0.01,
            markers: vec![0.35; 3],
            pressure: linear(),
        };
        let v = s.rhs_arz().unwrap();
        for vi in &v[..3] {
            assert_relative_eq!(*vi, 0.05, epsilon = 1e-15);
        }
        let fields = s.reconstruct_fields().unwrap();
        for k in 1..4 {
            assert_relative_eq!(fields.velocity.values()[k], 0.05, epsilon = 1e-15);
        }
        assert_eq!(fields.marker.eval(-1.0), fields.velocity.eval(-1.0));
        assert_eq!(fields.marker.eval(2.0), fields.velocity.eval(2.0));
        assert_eq!(fields.density.eval(-1.0), 0.0);
    }

    #[test]
    fn test_one_fields_reproduce_densities() {
        let p = PressureModel::LogScaled { coefficient: 1.4427 };
        assert!(!p.is_admissible());
        let d = PiecewiseConstantDensity::new(vec![-1.0, 0.0, 1.0], vec![0.5, 0.1]).unwrap();
        let w = MarkerField::riemann(0.0, (0.5, 1.2), (0.1, 1.6), &p);
        assert!(w.values()[1] < 0.0);
        let atom = atomize_arz_unchecked(&d, &w, 60).unwrap();
        let fields = reconstruct_fields(&atom.positions, atom.chunk_mass, &atom.markers, &p).unwrap();
        let disc = discrete_density(&atom.positions, atom.chunk_mass).unwrap();
        for (a, b) in fields.density.values().iter().zip(disc.values()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12);
        }
    }

    #[test]
    fn admissibility() {
        assert!(PressureModel::PowerLaw { gamma: 2.0 }.is_admissible());
        assert!(linear().is_admissible());
        assert!(PressureModel::custom("cubic", |r| r * r * r).is_admissible());
        assert!(PressureModel::PowerLaw { gamma: -1.0 }.validate().is_err());
    }

    #[test]
    fn inverses() {
        let models = [
            PressureModel::PowerLaw { gamma: 2.0 },
            linear(),
            PressureModel::LogScaled { coefficient: 1.4427 },
            PressureModel::custom("square", |r| r * r),
        ];
        for p in &models {
            for r in [0.05, 0.3, 0.9] {
                assert_relative_eq!(p.inverse(p.eval(r)), r, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn equal_markers_reduce_to_first_order() {
        let p = linear();
        let d = PiecewiseConstantDensity::new(vec![-1.0, 0.0, 1.0], vec![0.05, 0.02]).unwrap();
        let w = MarkerField::constant(0.4);
        let atom = crate::atomize::atomize_arz(&d, &w, 40).unwrap();
        let traj = evolve_arz(&atom, &p, 0.5, &EvolveConfig::default()).unwrap();
        let lwr_model = crate::model::VelocityModel::greenshields(0.4, 0.4 / 6.0);
        let plain = crate::atomize::atomize_compact(&d, 40).unwrap();
        let lwr = crate::lwr::evolve_cauchy(&plain, &lwr_model, 0.5, &EvolveConfig::default()).unwrap();
        let a = &traj.snapshots.last().unwrap().snapshot.positions;
        let b = &lwr.snapshots.last().unwrap().positions;
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn markers_never_change() {
        let p = linear();
        let d = PiecewiseConstantDensity::new(vec![-1.0, 0.0, 1.0], vec![0.05, 0.05]).unwrap();
        let w = MarkerField::riemann(0.0, (0.05, 0.05), (0.05, 0.5), &p);
        let atom = crate::atomize::atomize_arz(&d, &w, 40).unwrap();
        let traj = evolve_arz(&atom, &p, 1.0, &EvolveConfig::default()).unwrap();
        for s in &traj.snapshots {
            assert_eq!(s.markers, atom.markers);
        }
    }
}
