//! Sampled particle trajectories shared by the schemes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{IntegratorConfig, IntegratorStats};

/// Particle positions and velocities at one sample time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
}

impl Snapshot {
    pub fn min_gap(&self) -> f64 {
        self.positions
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_gap(&self) -> f64 {
        self.positions.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub integrator: IntegratorConfig,
    /// Number of uniform sample intervals on `[0, T]`.
    pub samples: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            integrator: IntegratorConfig::default(),
            samples: 100,
        }
    }
}

impl EvolveConfig {
    pub fn with_tolerance(tol: f64) -> Self {
        EvolveConfig {
            integrator: IntegratorConfig::with_tolerance(tol),
            ..Default::default()
        }
    }

    pub fn samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }
}

/// `samples + 1` uniform times from 0 to `t_final`, the last exactly `t_final`.
pub fn sample_times(t_final: f64, samples: usize) -> Result<Vec<f64>> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::Domain(format!("final time must be positive, got {t_final}")));
    }
    if samples == 0 {
        return Err(Error::Domain("at least one sample interval is required".into()));
    }
    let mut times: Vec<f64> = (0..samples)
        .map(|k| t_final * k as f64 / samples as f64)
        .collect();
    times.push(t_final);
    Ok(times)
}

/// Summary of a completed evolution.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub integrator: IntegratorStats,
    pub wall_seconds: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_grid() {
        let t = sample_times(0.5, 100).unwrap();
        assert_eq!(t.len(), 101);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[100], 0.5);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert!(sample_times(0.0, 10).is_err());
        assert!(sample_times(1.0, 0).is_err());
    }

    #[test]
    fn gaps() {
        let s = Snapshot {
            t: 0.0,
            positions: vec![0.0, 0.1, 0.4],
            velocities: vec![0.0; 3],
        };
        assert_eq!(s.min_gap(), 0.1);
        assert!((s.max_gap() - 0.3).abs() < 1e-15);
    }
}
