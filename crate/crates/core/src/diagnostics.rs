//! Invariant checks and error metrics over finished trajectories.
//!
//! Every check is a pure function of its inputs and returns an
//! [`InvariantEntry`]. `worst` is the largest signed excess over the bound,
//! so a passing check has `worst <= 0`.

use serde::{Deserialize, Serialize};

use crate::arz::{arz_velocities, ArzTrajectory};
use crate::density::{DensityProfile, PiecewiseConstantDensity};
use crate::error::Result;
use crate::hughes::{HughesTrajectory, DOMAIN};
use crate::ibvp::IbvpTrajectory;
use crate::lwr::LwrTrajectory;
use crate::model::FluxModel;
use crate::reference::lax_riemann;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative slack on gap bounds.
    pub gap: f64,
    pub oleinik: f64,
    pub total_variation: f64,
    pub wasserstein: f64,
    /// Largest `|t - s|` used by the time continuity check.
    pub wasserstein_window: f64,
    pub residual: f64,
    pub tv_bound: f64,
    /// Relative tolerance of the integrator, scaled by ten for consistency checks.
    pub integrator: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            gap: 1e-9,
            oleinik: 1e-6,
            total_variation: 1e-8,
            wasserstein: 1e-6,
            wasserstein_window: 0.1,
            residual: 1e-10,
            tv_bound: 1e-6,
            integrator: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantEntry {
    pub name: String,
    pub passed: bool,
    /// Set when the check did not apply; a skipped check counts as passed.
    pub skipped: bool,
    /// Reported for information only, never fails.
    pub informational: bool,
    pub worst: f64,
    pub tolerance: f64,
    pub time: Option<f64>,
    pub index: Option<usize>,
    pub note: Option<String>,
}

impl InvariantEntry {
    fn new(name: &str, tolerance: f64) -> Self {
        InvariantEntry {
            name: name.into(),
            passed: true,
            skipped: false,
            informational: false,
            worst: f64::NEG_INFINITY,
            tolerance,
            time: None,
            index: None,
            note: None,
        }
    }

    fn skipped(name: &str, note: &str) -> Self {
        InvariantEntry {
            skipped: true,
            worst: 0.0,
            note: Some(note.into()),
            ..Self::new(name, 0.0)
        }
    }

    fn observe(&mut self, excess: f64, t: f64, index: Option<usize>) {
        if excess > self.worst || self.time.is_none() {
            self.worst = excess;
            self.time = Some(t);
            self.index = index;
        }
    }

    fn finish(mut self) -> Self {
        if self.worst == f64::NEG_INFINITY {
            self.worst = 0.0;
        }
        self.passed = self.informational || self.worst <= 0.0;
        self
    }

    fn with_note(mut self, note: String) -> Self {
        self.note = Some(note);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantReport {
    pub scheme: String,
    pub entries: Vec<InvariantEntry>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn entry(&self, name: &str) -> Option<&InvariantEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn failures(&self) -> Vec<&InvariantEntry> {
        self.entries.iter().filter(|e| !e.passed).collect()
    }
}

/// Lower gap bound `l / R` for every chunk at every sample.
pub fn check_max_principle(traj: &LwrTrajectory, tol: &Tolerances) -> InvariantEntry {
    let bound = traj.min_gap_bound();
    let mut entry = InvariantEntry::new("max_principle", tol.gap);
    for s in &traj.snapshots {
        for (i, w) in s.positions.windows(2).enumerate() {
            entry.observe((bound - (w[1] - w[0])) / bound - tol.gap, s.t, Some(i));
        }
    }
    entry.finish()
}

/// `t R_i (x'_{i+1} - x'_i) <= l` for `t > 0`.
pub fn check_oleinik(traj: &LwrTrajectory, tol: &Tolerances) -> InvariantEntry {
    if !traj.model.has_nonincreasing_rho_v_prime() {
        return InvariantEntry::skipped("oleinik", "speed law does not have rho v'(rho) nonincreasing");
    }
    let l = traj.chunk_mass;
    let mut entry = InvariantEntry::new("oleinik", tol.oleinik);
    for s in traj.snapshots.iter().filter(|s| s.t > 0.0) {
        for i in 0..s.positions.len() - 1 {
            let r = l / (s.positions[i + 1] - s.positions[i]);
            let z = s.t * r * (s.velocities[i + 1] - s.velocities[i]);
            entry.observe((z - l * (1.0 + tol.oleinik)) / l, s.t, Some(i));
        }
    }
    entry.finish()
}

/// Total variation series of the Cauchy densities, extended by zero.
pub fn total_variation_series(traj: &LwrTrajectory) -> Result<Vec<f64>> {
    (0..traj.snapshots.len())
        .map(|k| Ok(traj.density_at(k)?.total_variation(true)))
        .collect()
}

pub fn check_tv(traj: &LwrTrajectory, tol: &Tolerances) -> Result<InvariantEntry> {
    let tv = total_variation_series(traj)?;
    let mut entry = InvariantEntry::new("total_variation", tol.total_variation);
    for k in 1..tv.len() {
        entry.observe(tv[k] - tv[k - 1] - tol.total_variation, traj.snapshots[k].t, Some(k));
    }
    Ok(entry.finish().with_note(format!("initial {:.12}, final {:.12}", tv[0], tv[tv.len() - 1])))
}

/// `W(rho(t), rho(s)) <= constant |t - s|` over all pairs with `|t - s| <= window`.
///
/// Pairs in different groups are skipped. Returns the entry and the largest
/// observed ratio `W / |t - s|`.
pub fn check_wasserstein_lipschitz(
    series: &[(f64, PiecewiseConstantDensity)],
    groups: Option<&[usize]>,
    constant: f64,
    tol: &Tolerances,
) -> Result<(InvariantEntry, f64)> {
    let mut entry = InvariantEntry::new("wasserstein_lipschitz", tol.wasserstein);
    let inverses = series
        .iter()
        .map(|(_, d)| d.pseudo_inverse())
        .collect::<Result<Vec<_>>>()?;
    let mut ratio = 0.0f64;
    for j in 0..series.len() {
        for k in (j + 1)..series.len() {
            let dt = series[k].0 - series[j].0;
            if dt > tol.wasserstein_window * (1.0 + 1e-12) {
                break;
            }
            if groups.is_some_and(|g| g[j] != g[k]) {
                continue;
            }
            let w = inverses[j].l1_distance(&inverses[k])?;
            if dt > 0.0 {
                ratio = ratio.max(w / dt);
            }
            entry.observe(w - constant * dt * (1.0 + tol.wasserstein), series[k].0, Some(j));
        }
    }
    let note = format!("max W / |t - s| = {ratio:.12}, bound {constant:.12}");
    Ok((entry.finish().with_note(note), ratio))
}

pub fn lwr_density_series(traj: &LwrTrajectory) -> Result<Vec<(f64, PiecewiseConstantDensity)>> {
    (0..traj.snapshots.len())
        .map(|k| Ok((traj.snapshots[k].t, traj.density_at(k)?)))
        .collect()
}

/// L1 distance on `[a, b]`, integrating exactly between breakpoints.
pub fn l1_error(density: &PiecewiseConstantDensity, reference: &dyn DensityProfile, a: f64, b: f64) -> f64 {
    density.l1_distance_to(reference, a, b)
}

pub fn lwr_report(traj: &LwrTrajectory, tol: &Tolerances) -> Result<InvariantReport> {
    let mass = traj.chunk_mass * (traj.snapshots[0].positions.len() - 1) as f64;
    let series = lwr_density_series(traj)?;
    let (wass, _) = check_wasserstein_lipschitz(&series, None, mass * traj.model.v_max, tol)?;
    Ok(InvariantReport {
        scheme: "lwr_cauchy".into(),
        entries: vec![
            check_max_principle(traj, tol),
            check_oleinik(traj, tol),
            check_tv(traj, tol)?,
            wass,
        ],
    })
}

/// Two-sided gap bounds `l / R <= gap <= l / delta`, with `q` for the first gap.
pub fn check_ibvp_gaps(traj: &IbvpTrajectory, tol: &Tolerances) -> (InvariantEntry, InvariantEntry) {
    let mut lower = InvariantEntry::new("gap_lower", tol.gap);
    let mut upper = InvariantEntry::new("gap_upper", tol.gap);
    for s in &traj.snapshots {
        for (j, w) in s.positions.windows(2).enumerate() {
            let chunk = traj.chunk_at(j);
            let gap = w[1] - w[0];
            let lo = chunk / traj.max_density;
            lower.observe((lo - gap) / lo - tol.gap, s.t, Some(j));
            let hi = chunk / traj.min_density;
            upper.observe((gap - hi) / hi - tol.gap, s.t, Some(j));
        }
    }
    let upper = if traj.vacuum_datum {
        InvariantEntry::skipped("gap_upper", "a datum touches vacuum, so no positive lower density bound exists")
    } else {
        upper.finish()
    };
    (lower.finish(), upper)
}

pub fn check_ibvp_mass(traj: &IbvpTrajectory, tol: &Tolerances) -> Result<InvariantEntry> {
    let expected = traj.queue_mass + traj.chunk_mass * traj.n as f64;
    let mut entry = InvariantEntry::new("total_mass", tol.gap);
    for k in 0..traj.snapshots.len() {
        let m = traj.particle_density_at(k)?.mass();
        entry.observe(((m - expected) / expected).abs() - tol.gap, traj.snapshots[k].t, None);
    }
    Ok(entry.finish())
}

pub fn check_rearrangement_locality(traj: &IbvpTrajectory) -> InvariantEntry {
    let mut entry = InvariantEntry::new("rearrangement_locality", 0.0);
    for r in &traj.rearrangements {
        entry.observe(r.protected_moved as f64, r.t, Some(r.window));
    }
    entry.finish()
}

/// Variation inside the domain against the data constant `C`.
pub fn check_ibvp_tv(traj: &IbvpTrajectory, tol: &Tolerances) -> Result<InvariantEntry> {
    let mut entry = InvariantEntry::new("total_variation_bound", tol.tv_bound);
    for k in 0..traj.snapshots.len() {
        let tv = traj.domain_density_at(k)?.total_variation(false);
        entry.observe(tv - traj.tv_constant - tol.tv_bound, traj.snapshots[k].t, Some(k));
    }
    Ok(entry.finish().with_note(format!("C = {:.12}", traj.tv_constant)))
}

/// Outflow crossings per window against `tau v_max rho_max / l + 1`.
pub fn check_crossing_bound(traj: &IbvpTrajectory) -> InvariantEntry {
    let tau = traj.window_times[1] - traj.window_times[0];
    let bound = tau * traj.model.v_max * traj.model.rho_max / traj.chunk_mass + 1.0;
    let mut entry = InvariantEntry::new("crossing_bound", 0.0);
    let first = &traj.snapshots[0].positions;
    let mut prev = first.len() - first.partition_point(|x| *x < 1.0);
    for r in &traj.rearrangements {
        entry.observe(r.crossed_outflow as f64 - prev as f64 - bound, r.t, Some(r.window));
        prev = r.crossed_outflow;
    }
    entry.finish()
}

/// Largest rearrangement jump per unit window length; reported only.
pub fn rearrangement_jump(traj: &IbvpTrajectory) -> InvariantEntry {
    let tau = traj.window_times[1] - traj.window_times[0];
    let mut entry = InvariantEntry::new("rearrangement_jump", 0.0);
    entry.informational = true;
    for r in &traj.rearrangements {
        entry.observe(r.jump / tau, r.t, Some(r.window));
    }
    let entry = entry.finish();
    let note = format!("max jump / tau = {:.12}", entry.worst);
    entry.with_note(note)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSample {
    pub t: f64,
    pub left_interior: f64,
    pub left_admissible: f64,
    pub right_interior: f64,
    pub right_admissible: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceReport {
    pub max_left: f64,
    pub max_right: f64,
    pub samples: Vec<TraceSample>,
}

/// Compares the chunk values next to each boundary with the traces selected
/// by the boundary Riemann problems.
pub fn boundary_trace_check(traj: &IbvpTrajectory) -> Result<TraceReport> {
    let flux = FluxModel::new(traj.model.clone());
    let mut samples = Vec::new();
    for (k, s) in traj.snapshots.iter().enumerate().skip(1) {
        let x = &s.positions;
        let window_start = traj.window_times[traj.snapshot_windows[k]];
        let value = |j: usize| traj.chunk_at(j) / (x[j + 1] - x[j]);
        let left_slot = x.partition_point(|p| *p <= 0.0).saturating_sub(1);
        let right_slot = x.partition_point(|p| *p < 1.0).saturating_sub(1).min(x.len() - 2);
        let left_interior = value(left_slot);
        let right_interior = value(right_slot);
        let inflow = traj.inflow.value_at(window_start);
        let outflow = traj.outflow.value_at(window_start);
        samples.push(TraceSample {
            t: s.t,
            left_interior,
            left_admissible: lax_riemann(inflow, left_interior, &flux)?.trace_right_of_zero(),
            right_interior,
            right_admissible: lax_riemann(right_interior, outflow, &flux)?.trace_left_of_zero(),
        });
    }
    let max_left = samples
        .iter()
        .map(|s| (s.left_admissible - s.left_interior).abs())
        .fold(0.0, f64::max);
    let max_right = samples
        .iter()
        .map(|s| (s.right_admissible - s.right_interior).abs())
        .fold(0.0, f64::max);
    Ok(TraceReport {
        max_left,
        max_right,
        samples,
    })
}

pub fn ibvp_report(traj: &IbvpTrajectory, tol: &Tolerances) -> Result<InvariantReport> {
    let (lower, upper) = check_ibvp_gaps(traj, tol);
    let series = (0..traj.snapshots.len())
        .map(|k| Ok((traj.snapshots[k].t, traj.particle_density_at(k)?)))
        .collect::<Result<Vec<_>>>()?;
    let mass = traj.queue_mass + traj.chunk_mass * traj.n as f64;
    let (wass, _) = check_wasserstein_lipschitz(&series, Some(&traj.snapshot_windows), mass * traj.model.v_max, tol)?;
    let traces = boundary_trace_check(traj)?;
    let mut trace = InvariantEntry::new("boundary_traces", 0.0);
    trace.informational = true;
    trace.worst = traces.max_left.max(traces.max_right);
    let trace = trace
        .finish()
        .with_note(format!("left {:.6e}, right {:.6e}", traces.max_left, traces.max_right));
    Ok(InvariantReport {
        scheme: "lwr_ibvp".into(),
        entries: vec![
            lower,
            upper,
            check_ibvp_mass(traj, tol)?,
            check_rearrangement_locality(traj),
            check_ibvp_tv(traj, tol)?,
            check_crossing_bound(traj),
            wass,
            rearrangement_jump(traj),
            trace,
        ],
    })
}

pub fn hughes_report(traj: &HughesTrajectory, tol: &Tolerances) -> InvariantReport {
    let mut residual = InvariantEntry::new("turning_point_residual", tol.residual);
    let mut inside = InvariantEntry::new("turning_point_inside", 0.0);
    for x in &traj.xi_track {
        residual.observe(x.residual.abs() - tol.residual, x.t, Some(x.split));
        let margin = (x.turning_point - DOMAIN.0).min(DOMAIN.1 - x.turning_point);
        inside.observe(-margin, x.t, Some(x.split));
    }
    let mut lower = InvariantEntry::new("gap_lower", tol.gap);
    let bound = traj.chunk_mass / traj.max_density;
    for s in &traj.snapshots {
        for (i, w) in s.snapshot.positions.windows(2).enumerate() {
            if i != s.split {
                lower.observe((bound - (w[1] - w[0])) / bound - tol.gap, s.snapshot.t, Some(i));
            }
        }
    }
    // distance of the turning point beyond the split chunk and its two neighbours; emptying
    // a wide, costly chunk can move it further, so this is reported rather than asserted
    let mut in_split = InvariantEntry::new("turning_point_near_split", 0.0);
    in_split.informational = true;
    for s in &traj.snapshots {
        let x = &s.snapshot.positions;
        let lo = x[s.split.saturating_sub(1)];
        let hi = x[(s.split + 2).min(x.len() - 1)];
        in_split.observe((lo - s.turning_point).max(s.turning_point - hi), s.snapshot.t, Some(s.split));
    }
    let mut mass = InvariantEntry::new("mass_inside_nonincreasing", 1e-12);
    for k in 1..traj.snapshots.len() {
        mass.observe(traj.mass_inside_at(k) - traj.mass_inside_at(k - 1) - 1e-12, traj.snapshots[k].snapshot.t, Some(k));
    }
    let mut switches = InvariantEntry::new("direction_switches", 0.0);
    switches.informational = true;
    switches.worst = traj.switches.len() as f64;
    let note = format!(
        "{} switches; vacuum chunk book-keeping error {:.6e}",
        traj.switches.len(),
        traj.chunk_mass
    );
    InvariantReport {
        scheme: "hughes".into(),
        entries: vec![
            residual.finish(),
            inside.finish(),
            in_split.finish(),
            lower.finish(),
            mass.finish(),
            switches.finish().with_note(note),
        ],
    }
}

/// Largest gap at every sample.
pub fn max_gap_series(snapshots: &[crate::trajectory::Snapshot]) -> Vec<f64> {
    snapshots.iter().map(|s| s.max_gap()).collect()
}

/// Compares the chunk-density ODE `R_i' = -(R_i^2 / l)(v_{i+1} - v_i)` with a
/// centred difference of `l / gap` along the position flow.
pub fn check_arz_density_ode(traj: &ArzTrajectory, tol: &Tolerances) -> InvariantEntry {
    let tolerance = 10.0 * tol.integrator;
    let mut entry = InvariantEntry::new("density_ode_consistency", tolerance);
    let l = traj.chunk_mass;
    let markers = &traj.initial_markers;
    let step = |x: &[f64], h: f64| -> Vec<f64> {
        // one classical RK4 step of the position system
        let n = x.len();
        let eval = |y: &[f64]| {
            let mut out = vec![0.0; n];
            arz_velocities(&traj.pressure, l, markers, y, &mut out);
            out
        };
        let k1 = eval(x);
        let y: Vec<f64> = x.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
        let k2 = eval(&y);
        let y: Vec<f64> = x.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
        let k3 = eval(&y);
        let y: Vec<f64> = x.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
        let k4 = eval(&y);
        (0..n)
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    };
    // Richardson-extrapolated central differences; a plain one is too coarse at contacts
    let h = 2e-6;
    let central = |x: &[f64], h: f64| -> Vec<f64> {
        let forward = step(x, h);
        let backward = step(x, -h);
        (0..x.len() - 1)
            .map(|i| (l / (forward[i + 1] - forward[i]) - l / (backward[i + 1] - backward[i])) / (2.0 * h))
            .collect()
    };
    let stride = (traj.snapshots.len() / 10).max(1);
    for s in traj.snapshots.iter().step_by(stride) {
        let x = &s.snapshot.positions;
        let v = &s.snapshot.velocities;
        let coarse = central(x, h);
        let fine = central(x, 0.5 * h);
        for i in 0..x.len() - 1 {
            let r = l / (x[i + 1] - x[i]);
            let predicted = -(r * r / l) * (v[i + 1] - v[i]);
            let fd = (4.0 * fine[i] - coarse[i]) / 3.0;
            let scale = 1.0 + predicted.abs();
            entry.observe((fd - predicted).abs() / scale - tolerance, s.snapshot.t, Some(i));
        }
    }
    entry.finish()
}

pub fn arz_report(traj: &ArzTrajectory, tol: &Tolerances) -> Result<InvariantReport> {
    let mut markers = InvariantEntry::new("markers_constant", 0.0);
    let mut ordering = InvariantEntry::new("ordering", 0.0);
    let mut mass = InvariantEntry::new("total_space", 1e-12);
    let n = traj.initial_markers.len();
    let expected = traj.chunk_mass * n as f64;
    for (k, s) in traj.snapshots.iter().enumerate() {
        let moved = s
            .markers
            .iter()
            .zip(&traj.initial_markers)
            .filter(|(a, b)| a.to_bits() != b.to_bits())
            .count();
        markers.observe(moved as f64, s.snapshot.t, Some(k));
        ordering.observe(-s.snapshot.min_gap(), s.snapshot.t, Some(k));
        let m = traj.density_at(k)?.mass();
        mass.observe(((m - expected) / expected).abs() - 1e-12, s.snapshot.t, Some(k));
    }
    let principle = if traj.pressure_admissible {
        let mut e = InvariantEntry::new("velocity_bounds", 1e-12);
        for s in &traj.snapshots {
            for i in 0..n {
                let v = s.snapshot.velocities[i];
                let w = s.markers[i];
                e.observe((-v).max(v - w) - 1e-12, s.snapshot.t, Some(i));
            }
        }
        e.finish()
    } else {
        InvariantEntry::skipped(
            "velocity_bounds",
            "pressure violates the admissibility assumption; only ordering and marker constancy are asserted",
        )
    };
    Ok(InvariantReport {
        scheme: "arz".into(),
        entries: vec![
            markers.finish(),
            ordering.finish(),
            mass.finish(),
            principle,
            check_arz_density_ode(traj, tol),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub m: Option<usize>,
    pub error: f64,
    /// `log(e_prev / e) / log(n / n_prev)` against the previous row with the same `m`.
    pub order: Option<f64>,
}

/// Runs `error(n, m)` for every pair concurrently and tabulates observed orders.
pub fn convergence_table<F>(ns: &[usize], ms: &[Option<usize>], error: F) -> Result<Vec<ConvergenceRow>>
where
    F: Fn(usize, Option<usize>) -> Result<f64> + Sync,
{
    let jobs: Vec<(usize, Option<usize>)> = ms
        .iter()
        .flat_map(|m| ns.iter().map(move |n| (*n, *m)))
        .collect();
    let results: Vec<Result<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(n, m)| {
                let error = &error;
                scope.spawn(move || error(*n, *m))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("convergence worker panicked"))
            .collect()
    });
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(jobs.len());
    for ((n, m), result) in jobs.into_iter().zip(results) {
        let error = result?;
        let order = rows
            .last()
            .filter(|prev| prev.m == m)
            .map(|prev| (prev.error / error).ln() / (n as f64 / prev.n as f64).ln());
        rows.push(ConvergenceRow { n, m, error, order });
    }
    Ok(rows)
}
