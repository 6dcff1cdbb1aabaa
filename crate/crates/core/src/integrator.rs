//! Adaptive Bogacki–Shampine 3(2) integrator with dense output, event
//! location and step-acceptance guards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Unbounded when absent or `null`.
    #[serde(with = "unbounded")]
    pub max_step: f64,
    pub safety: f64,
    pub event_tol: f64,
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            s.serialize_some(value)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            max_step: f64::INFINITY,
            safety: 0.9,
            event_tol: 1e-12,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerance(tol: f64) -> Self {
        IntegratorConfig {
            rel_tol: tol,
            abs_tol: tol * 1e-3,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.rel_tol > 0.0) {
            problems.push(format!("rel_tol must be positive, got {}", self.rel_tol));
        }
        if !(self.abs_tol > 0.0) {
            problems.push(format!("abs_tol must be positive, got {}", self.abs_tol));
        }
        if !(self.max_step > 0.0) {
            problems.push(format!("max_step must be positive, got {}", self.max_step));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            problems.push(format!("safety must lie in (0, 1), got {}", self.safety));
        }
        if !(self.event_tol > 0.0) {
            problems.push(format!("event_tol must be positive, got {}", self.event_tol));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Sign change that triggers an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    /// From positive to nonpositive.
    Falling,
    /// From negative to nonnegative.
    Rising,
    Either,
}

/// Scalar function of time and state whose zeros are located.
pub type EventFn<'a> = Box<dyn Fn(f64, &[f64]) -> f64 + 'a>;

pub struct Event<'a> {
    pub function: EventFn<'a>,
    pub crossing: Crossing,
    /// Stop the integration at the first occurrence.
    pub terminal: bool,
}

impl<'a> Event<'a> {
    pub fn new(function: impl Fn(f64, &[f64]) -> f64 + 'a, crossing: Crossing, terminal: bool) -> Self {
        Event {
            function: Box::new(function),
            crossing,
            terminal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub event: usize,
    pub t: f64,
    /// Accepted step that brackets the event.
    pub bracket: (f64, f64),
}

/// Point handed to the observer after each accepted step.
pub struct StepPoint<'a> {
    pub t: f64,
    pub y: &'a [f64],
    pub dydt: &'a [f64],
    /// Index into the requested stop times when the step landed on one.
    pub stop: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub guard_rejections: usize,
    pub rhs_evaluations: usize,
}

impl IntegratorStats {
    pub fn absorb(&mut self, other: &IntegratorStats) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.guard_rejections += other.guard_rejections;
        self.rhs_evaluations += other.rhs_evaluations;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub t: f64,
    pub y: Vec<f64>,
    pub events: Vec<EventRecord>,
    /// Index of the terminal event that ended the run, if any.
    pub terminated_by: Option<usize>,
    pub stats: IntegratorStats,
    /// Step size proposed for a continuation.
    pub next_step: f64,
}

/// Cubic Hermite interpolant on one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct HermiteStep<'a> {
    pub t0: f64,
    pub t1: f64,
    pub y0: &'a [f64],
    pub y1: &'a [f64],
    pub f0: &'a [f64],
    pub f1: &'a [f64],
}

impl HermiteStep<'_> {
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        for (k, o) in out.iter_mut().enumerate() {
            *o = h00 * self.y0[k] + h * h10 * self.f0[k] + h01 * self.y1[k] + h * h11 * self.f1[k];
        }
    }
}

pub type Rhs<'a> = dyn FnMut(f64, &[f64], &mut [f64]) + 'a;
pub type Guard<'a> = dyn Fn(&[f64]) -> bool + 'a;

pub struct Problem<'a, 'b> {
    pub rhs: &'b mut Rhs<'a>,
    pub events: &'b [Event<'a>],
    pub guard: Option<&'b Guard<'a>>,
    /// Times the integrator must land on exactly, in increasing order.
    pub stops: &'b [f64],
    pub observer: Option<&'b mut dyn FnMut(&StepPoint)>,
    /// Suggested first step.
    pub initial_step: Option<f64>,
}

impl<'a, 'b> Problem<'a, 'b> {
    pub fn new(rhs: &'b mut Rhs<'a>) -> Self {
        Problem {
            rhs,
            events: &[],
            guard: None,
            stops: &[],
            observer: None,
            initial_step: None,
        }
    }
}

const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const UNDERFLOW: f64 = 1e-14;

fn error_norm(y: &[f64], y_new: &[f64], err: &[f64], cfg: &IntegratorConfig) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..y.len() {
        let scale = cfg.abs_tol + cfg.rel_tol * y[k].abs().max(y_new[k].abs());
        worst = worst.max(err[k].abs() / scale);
    }
    worst
}

fn initial_step(
    rhs: &mut Rhs,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    span: f64,
    cfg: &IntegratorConfig,
    stats: &mut IntegratorStats,
) -> f64 {
    let scale = |k: usize| cfg.abs_tol + cfg.rel_tol * y0[k].abs();
    let d0 = (0..y0.len()).map(|k| y0[k].abs() / scale(k)).fold(0.0, f64::max);
    let d1 = (0..y0.len()).map(|k| f0[k].abs() / scale(k)).fold(0.0, f64::max);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span).min(cfg.max_step);
    let y1: Vec<f64> = (0..y0.len()).map(|k| y0[k] + h0 * f0[k]).collect();
    let mut f1 = vec![0.0; y0.len()];
    rhs(t0 + h0, &y1, &mut f1);
    stats.rhs_evaluations += 1;
    let d2 = (0..y0.len())
        .map(|k| (f1[k] - f0[k]).abs() / scale(k))
        .fold(0.0, f64::max)
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 3.0)
    };
    (100.0 * h0).min(h1).min(span).min(cfg.max_step)
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t1`.
///
/// Steps are truncated to land on every requested stop time and on `t1`.
/// Trial steps failing the guard are rejected and halved. Terminal events
/// end the run at the located event time with the interpolated state.
pub fn integrate(problem: Problem, y0: &[f64], t0: f64, t1: f64, cfg: &IntegratorConfig) -> Result<Solution> {
    cfg.validate()?;
    let Problem {
        rhs,
        events,
        guard,
        stops,
        mut observer,
        initial_step: first,
    } = problem;
    let span = t1 - t0;
    if !(span > 0.0) || !span.is_finite() {
        return Err(Error::Integration {
            t: t0,
            reason: format!("degenerate time span [{t0}, {t1}]"),
        });
    }
    let dim = y0.len();
    let mut stats = IntegratorStats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; dim];
    rhs(t, &y, &mut k1);
    stats.rhs_evaluations += 1;
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];

    let mut next_stop = stops.partition_point(|s| *s < t0);
    if let Some(obs) = observer.as_mut() {
        let at = (next_stop < stops.len() && stops[next_stop] == t0).then_some(next_stop);
        obs(&StepPoint {
            t,
            y: &y,
            dydt: &k1,
            stop: at,
        });
    }
    if next_stop < stops.len() && stops[next_stop] == t0 {
        next_stop += 1;
    }

    let mut g_prev: Vec<f64> = events.iter().map(|e| (e.function)(t, &y)).collect();
    let mut armed: Vec<bool> = events
        .iter()
        .zip(&g_prev)
        .map(|(e, g)| match e.crossing {
            Crossing::Falling => *g > 0.0,
            Crossing::Rising => *g < 0.0,
            Crossing::Either => *g != 0.0,
        })
        .collect();
    let mut records = Vec::new();

    let mut h = match first {
        Some(h) if h > 0.0 => h.min(cfg.max_step),
        _ => initial_step(rhs, t, &y, &k1, span, cfg, &mut stats),
    };
    let min_step = UNDERFLOW * span;

    loop {
        let target = if next_stop < stops.len() && stops[next_stop] < t1 {
            stops[next_stop]
        } else {
            t1
        };
        let mut landing = false;
        let mut step = h.min(cfg.max_step);
        if t + step >= target || target - (t + step) < min_step {
            step = target - t;
            landing = true;
        }
        if step < min_step && !(landing && step > 0.0) {
            return Err(Error::Integration {
                t,
                reason: format!("step size {step:e} underflowed"),
            });
        }

        for k in 0..dim {
            stage[k] = y[k] + 0.5 * step * k1[k];
        }
        rhs(t + 0.5 * step, &stage, &mut k2);
        for k in 0..dim {
            stage[k] = y[k] + 0.75 * step * k2[k];
        }
        rhs(t + 0.75 * step, &stage, &mut k3);
        for k in 0..dim {
            y_new[k] = y[k] + step * (2.0 / 9.0 * k1[k] + 1.0 / 3.0 * k2[k] + 4.0 / 9.0 * k3[k]);
        }
        let t_new = if landing { target } else { t + step };
        rhs(t_new, &y_new, &mut k4);
        stats.rhs_evaluations += 3;
        for k in 0..dim {
            err[k] = step
                * (-5.0 / 72.0 * k1[k] + 1.0 / 12.0 * k2[k] + 1.0 / 9.0 * k3[k] - 1.0 / 8.0 * k4[k]);
        }
        let norm = error_norm(&y, &y_new, &err, cfg);
        if !norm.is_finite() || norm > 1.0 {
            stats.rejected += 1;
            let factor = if norm.is_finite() {
                (cfg.safety * norm.powf(-1.0 / 3.0)).max(MIN_FACTOR)
            } else {
                MIN_FACTOR
            };
            h = step * factor;
            if h < min_step {
                return Err(Error::Integration {
                    t,
                    reason: format!("step size {h:e} underflowed after error-control rejection"),
                });
            }
            continue;
        }
        if let Some(g) = guard {
            if !g(&y_new) {
                stats.guard_rejections += 1;
                h = 0.5 * step;
                if h < min_step {
                    return Err(Error::Integration {
                        t,
                        reason: format!("step size {h:e} underflowed after guard rejection"),
                    });
                }
                continue;
            }
        }

        // Accepted step: look for events on the Hermite interpolant.
        let mut terminal: Option<(f64, usize)> = None;
        let mut g_new = Vec::with_capacity(events.len());
        {
            let interp = HermiteStep {
                t0: t,
                t1: t_new,
                y0: &y,
                y1: &y_new,
                f0: &k1,
                f1: &k4,
            };
            for (idx, ev) in events.iter().enumerate() {
                let g1 = (ev.function)(t_new, &y_new);
                g_new.push(g1);
                let g0 = g_prev[idx];
                let hit = armed[idx]
                    && match ev.crossing {
                        Crossing::Falling => g0 > 0.0 && g1 <= 0.0,
                        Crossing::Rising => g0 < 0.0 && g1 >= 0.0,
                        Crossing::Either => (g0 > 0.0 && g1 <= 0.0) || (g0 < 0.0 && g1 >= 0.0),
                    };
                if !hit {
                    continue;
                }
                let t_event = locate(&*ev.function, &interp, g0, cfg.event_tol, &mut scratch);
                records.push(EventRecord {
                    event: idx,
                    t: t_event,
                    bracket: (t, t_new),
                });
                if ev.terminal && terminal.is_none_or(|(te, _)| t_event < te) {
                    terminal = Some((t_event, idx));
                }
            }
            if let Some((t_event, idx)) = terminal {
                interp.eval_into(t_event, &mut scratch);
                records.retain(|r| r.t <= t_event);
                stats.accepted += 1;
                return Ok(Solution {
                    t: t_event,
                    y: scratch,
                    events: records,
                    terminated_by: Some(idx),
                    stats,
                    next_step: step,
                });
            }
        }
        for (idx, ev) in events.iter().enumerate() {
            let g1 = g_new[idx];
            armed[idx] = armed[idx]
                || match ev.crossing {
                    Crossing::Falling => g1 > 0.0,
                    Crossing::Rising => g1 < 0.0,
                    Crossing::Either => g1 != 0.0,
                };
        }
        g_prev = g_new;

        stats.accepted += 1;
        t = t_new;
        std::mem::swap(&mut y, &mut y_new);
        std::mem::swap(&mut k1, &mut k4);
        let at_stop = landing && next_stop < stops.len() && stops[next_stop] == target;
        let stop_index = if at_stop { Some(next_stop) } else { None };
        if let Some(obs) = observer.as_mut() {
            obs(&StepPoint {
                t,
                y: &y,
                dydt: &k1,
                stop: stop_index,
            });
        }
        if at_stop {
            next_stop += 1;
        }
        let factor = if norm == 0.0 {
            MAX_FACTOR
        } else {
            (cfg.safety * norm.powf(-1.0 / 3.0)).clamp(MIN_FACTOR, MAX_FACTOR)
        };
        // A step shortened to land on a stop time does not shrink the controller's proposal.
        h = if landing { h.max(step * factor) } else { step * factor };
        if landing && target == t1 {
            return Ok(Solution {
                t,
                y,
                events: records,
                terminated_by: None,
                stats,
                next_step: h,
            });
        }
    }
}

fn locate(g: &dyn Fn(f64, &[f64]) -> f64, interp: &HermiteStep, g0: f64, tol: f64, buf: &mut [f64]) -> f64 {
    let (mut lo, mut hi) = (interp.t0, interp.t1);
    let lo_sign = g0 > 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        interp.eval_into(mid, buf);
        let gm = g(mid, buf);
        let same = if lo_sign { gm > 0.0 } else { gm < 0.0 };
        if same {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}
