//! Speed-density laws and the fluxes they induce.
//!
//! Every law is strictly decreasing on `[0, rho_max]` with `v(0) = v_max` and
//! `v(rho_max) = 0`. The flux is `f(rho) = rho * v(rho)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a speed-density relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocityKind {
    /// `v_max (1 - rho / rho_max)`.
    Greenshields,
    /// `v_max (1 - (rho / rho_max)^alpha)`.
    PipesMunjal { alpha: f64 },
    /// `v_max log((rho_max + alpha) / (rho + alpha)) / log((rho_max + alpha) / alpha)`.
    GreenbergModified { alpha: f64 },
    /// `v_max (e^-rho - e^-rho_max) / (1 - e^-rho_max)`.
    UnderwoodModified,
    /// Monotone linear interpolation of `(rho, v)` samples.
    Tabulated { samples: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityModel {
    #[serde(flatten)]
    pub kind: VelocityKind,
    pub v_max: f64,
    pub rho_max: f64,
}

const ENDPOINT_TOL: f64 = 1e-12;
const MONOTONE_GRID: usize = 1000;

impl VelocityModel {
    pub fn new(kind: VelocityKind, v_max: f64, rho_max: f64) -> Result<Self> {
        let model = VelocityModel {
            kind,
            v_max,
            rho_max,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn greenshields(v_max: f64, rho_max: f64) -> Self {
        VelocityModel::new(VelocityKind::Greenshields, v_max, rho_max)
            .expect("greenshields parameters must be positive")
    }

    /// Unit Greenshields law `v = 1 - rho`.
    pub fn unit_greenshields() -> Self {
        Self::greenshields(1.0, 1.0)
    }

    /// Checks parameters, endpoint values and strict monotonicity on a grid.
    pub fn validate(&self) -> Result<()> {
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return Err(Error::InvalidModel(format!("v_max must be positive, got {}", self.v_max)));
        }
        if !(self.rho_max > 0.0 && self.rho_max.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "rho_max must be positive, got {}",
                self.rho_max
            )));
        }
        match &self.kind {
            VelocityKind::PipesMunjal { alpha } | VelocityKind::GreenbergModified { alpha } => {
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::InvalidModel(format!("alpha must be positive, got {alpha}")));
                }
            }
            VelocityKind::Tabulated { samples } => {
                if samples.len() < 2 {
                    return Err(Error::InvalidModel("tabulated law needs at least two samples".into()));
                }
                for w in samples.windows(2) {
                    if !(w[1][0] > w[0][0]) {
                        return Err(Error::InvalidModel(
                            "tabulated densities must be strictly increasing".into(),
                        ));
                    }
                    if !(w[1][1] < w[0][1]) {
                        return Err(Error::InvalidModel(
                            "tabulated speeds must be strictly decreasing".into(),
                        ));
                    }
                }
                let first = samples[0];
                let last = samples[samples.len() - 1];
                if first[0] != 0.0 || (last[0] - self.rho_max).abs() > ENDPOINT_TOL * self.rho_max {
                    return Err(Error::InvalidModel(
                        "tabulated samples must span [0, rho_max]".into(),
                    ));
                }
            }
            VelocityKind::Greenshields | VelocityKind::UnderwoodModified => {}
        }
        let v0 = self.speed(0.0);
        let v1 = self.speed(self.rho_max);
        if (v0 - self.v_max).abs() > ENDPOINT_TOL * self.v_max {
            return Err(Error::InvalidModel(format!("v(0) = {v0} differs from v_max")));
        }
        if v1.abs() > ENDPOINT_TOL * self.v_max {
            return Err(Error::InvalidModel(format!("v(rho_max) = {v1} is not zero")));
        }
        let mut prev = v0;
        for k in 1..=MONOTONE_GRID {
            let v = self.speed(self.rho_max * k as f64 / MONOTONE_GRID as f64);
            if !(v < prev) {
                return Err(Error::InvalidModel("speed law is not strictly decreasing".into()));
            }
            prev = v;
        }
        Ok(())
    }

    /// Speed at `rho`, rejecting densities outside `[0, rho_max]`.
    pub fn velocity(&self, rho: f64) -> Result<f64> {
        self.check_range(rho)?;
        Ok(self.speed(rho))
    }

    fn check_range(&self, rho: f64) -> Result<()> {
        if !(0.0..=self.rho_max).contains(&rho) {
            return Err(Error::DensityOutOfRange {
                value: rho,
                rho_max: self.rho_max,
            });
        }
        Ok(())
    }

    /// Speed at `rho` with the argument clamped into `[0, rho_max]`.
    ///
    /// This is the hot-path evaluation used inside the particle right-hand
    /// sides, where local densities may exceed `rho_max` by rounding only.
    #[inline]
    pub fn speed(&self, rho: f64) -> f64 {
        let rho = rho.clamp(0.0, self.rho_max);
        let s = rho / self.rho_max;
        match &self.kind {
            VelocityKind::Greenshields => self.v_max * (1.0 - s),
            VelocityKind::PipesMunjal { alpha } => self.v_max * (1.0 - s.powf(*alpha)),
            VelocityKind::GreenbergModified { alpha } => {
                let norm = ((self.rho_max + alpha) / alpha).ln();
                self.v_max * ((self.rho_max + alpha) / (rho + alpha)).ln() / norm
            }
            VelocityKind::UnderwoodModified => {
                let e_max = (-self.rho_max).exp();
                self.v_max * ((-rho).exp() - e_max) / (1.0 - e_max)
            }
            VelocityKind::Tabulated { samples } => {
                let j = segment_index(samples, rho);
                let (a, b) = (samples[j], samples[j + 1]);
                let w = (rho - a[0]) / (b[0] - a[0]);
                a[1] + w * (b[1] - a[1])
            }
        }
    }

    /// `v'(rho)`. For tabulated laws this is the slope of the segment to the right.
    pub fn derivative(&self, rho: f64) -> f64 {
        let rho = rho.clamp(0.0, self.rho_max);
        match &self.kind {
            VelocityKind::Greenshields => -self.v_max / self.rho_max,
            VelocityKind::PipesMunjal { alpha } => {
                -self.v_max * alpha * rho.powf(alpha - 1.0) / self.rho_max.powf(*alpha)
            }
            VelocityKind::GreenbergModified { alpha } => {
                let norm = ((self.rho_max + alpha) / alpha).ln();
                -self.v_max / (norm * (rho + alpha))
            }
            VelocityKind::UnderwoodModified => {
                let e_max = (-self.rho_max).exp();
                -self.v_max * (-rho).exp() / (1.0 - e_max)
            }
            VelocityKind::Tabulated { samples } => {
                let j = segment_index(samples, rho);
                (samples[j + 1][1] - samples[j][1]) / (samples[j + 1][0] - samples[j][0])
            }
        }
    }

    /// `rho v'(rho)`, finite at `rho = 0` for every law.
    pub fn rho_times_derivative(&self, rho: f64) -> f64 {
        match &self.kind {
            VelocityKind::PipesMunjal { alpha } => {
                let s = rho.clamp(0.0, self.rho_max) / self.rho_max;
                -self.v_max * alpha * s.powf(*alpha)
            }
            _ => rho.clamp(0.0, self.rho_max) * self.derivative(rho),
        }
    }

    /// `v''(rho)`; zero for tabulated laws.
    pub fn second_derivative(&self, rho: f64) -> f64 {
        let rho = rho.clamp(0.0, self.rho_max);
        match &self.kind {
            VelocityKind::Greenshields | VelocityKind::Tabulated { .. } => 0.0,
            VelocityKind::PipesMunjal { alpha } => {
                -self.v_max * alpha * (alpha - 1.0) * rho.powf(alpha - 2.0)
                    / self.rho_max.powf(*alpha)
            }
            VelocityKind::GreenbergModified { alpha } => {
                let norm = ((self.rho_max + alpha) / alpha).ln();
                self.v_max / (norm * (rho + alpha).powi(2))
            }
            VelocityKind::UnderwoodModified => {
                let e_max = (-self.rho_max).exp();
                self.v_max * (-rho).exp() / (1.0 - e_max)
            }
        }
    }

    /// Whether `rho -> rho v'(rho)` is non-increasing on a sample grid.
    pub fn has_nonincreasing_rho_v_prime(&self) -> bool {
        let mut prev = self.rho_times_derivative(0.0);
        for k in 1..=MONOTONE_GRID {
            let cur = self.rho_times_derivative(self.rho_max * k as f64 / MONOTONE_GRID as f64);
            if cur > prev + 1e-14 * self.v_max {
                return false;
            }
            prev = cur;
        }
        true
    }
}

fn segment_index(samples: &[[f64; 2]], rho: f64) -> usize {
    let last = samples.len() - 2;
    match samples.iter().position(|s| s[0] > rho) {
        Some(0) => 0,
        Some(k) => (k - 1).min(last),
        None => last,
    }
}

/// Flux `f = rho v(rho)` together with its maximiser.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxModel {
    pub velocity: VelocityModel,
    rho_hat: f64,
}

const GOLDEN_TOL: f64 = 1e-12;

impl FluxModel {
    pub fn new(velocity: VelocityModel) -> Self {
        let rho_hat = match &velocity.kind {
            VelocityKind::Greenshields => velocity.rho_max / 2.0,
            VelocityKind::PipesMunjal { alpha } => {
                velocity.rho_max * (1.0 + alpha).powf(-1.0 / alpha)
            }
            _ => golden_section_max(|r| r * velocity.speed(r), 0.0, velocity.rho_max, GOLDEN_TOL),
        };
        FluxModel { velocity, rho_hat }
    }

    pub fn rho_max(&self) -> f64 {
        self.velocity.rho_max
    }

    pub fn v_max(&self) -> f64 {
        self.velocity.v_max
    }

    /// The density of maximal flow.
    pub fn rho_hat(&self) -> f64 {
        self.rho_hat
    }

    pub fn flux(&self, rho: f64) -> Result<f64> {
        Ok(rho * self.velocity.velocity(rho)?)
    }

    #[inline]
    pub fn flux_unchecked(&self, rho: f64) -> f64 {
        let rho = rho.clamp(0.0, self.rho_max());
        rho * self.velocity.speed(rho)
    }

    /// `f'(rho) = v(rho) + rho v'(rho)`.
    pub fn derivative(&self, rho: f64) -> f64 {
        self.velocity.speed(rho) + self.velocity.rho_times_derivative(rho)
    }

    /// Upper bound of `|f'|` over `[0, rho_max]`, from a grid plus endpoints.
    pub fn max_wave_speed(&self) -> f64 {
        (0..=MONOTONE_GRID)
            .map(|k| self.derivative(self.rho_max() * k as f64 / MONOTONE_GRID as f64).abs())
            .fold(0.0, f64::max)
    }

    /// Whether `f'` is non-increasing on `[a, b]` (sampled).
    pub fn is_concave_on(&self, a: f64, b: f64) -> bool {
        let (a, b) = (a.min(b), a.max(b));
        let mut prev = self.derivative(a);
        for k in 1..=MONOTONE_GRID {
            let cur = self.derivative(a + (b - a) * k as f64 / MONOTONE_GRID as f64);
            if cur > prev + 1e-12 * self.v_max() {
                return false;
            }
            prev = cur;
        }
        true
    }
}

/// Maximiser of a unimodal function on `[a, b]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn all_models() -> Vec<VelocityModel> {
        vec![
            VelocityModel::greenshields(1.0, 1.0),
            VelocityModel::new(VelocityKind::PipesMunjal { alpha: 2.0 }, 1.5, 2.0).unwrap(),
            VelocityModel::new(VelocityKind::PipesMunjal { alpha: 0.5 }, 1.0, 1.0).unwrap(),
            VelocityModel::new(VelocityKind::GreenbergModified { alpha: 0.3 }, 1.0, 1.0).unwrap(),
            VelocityModel::new(VelocityKind::UnderwoodModified, 2.0, 1.0).unwrap(),
            VelocityModel::new(
                VelocityKind::Tabulated {
                    samples: vec![[0.0, 1.0], [0.3, 0.8], [0.7, 0.3], [1.0, 0.0]],
                },
                1.0,
                1.0,
            )
            .unwrap(),
        ]
    }

    #[test]
    fn greenshields_values() {
        let m = VelocityModel::unit_greenshields();
        assert_eq!(m.velocity(0.0).unwrap(), 1.0);
        assert_eq!(m.velocity(1.0).unwrap(), 0.0);
        assert_eq!(m.velocity(0.5).unwrap(), 0.5);
    }

    #[test]
    fn velocity_rejects_out_of_range() {
        let m = VelocityModel::unit_greenshields();
        assert!(matches!(m.velocity(1.1), Err(Error::DensityOutOfRange { .. })));
        assert!(m.velocity(-0.1).is_err());
    }

    #[test]
    fn flux_values() {
        let f = FluxModel::new(VelocityModel::unit_greenshields());
        assert_eq!(f.flux(0.0).unwrap(), 0.0);
        assert_eq!(f.flux(0.5).unwrap(), 0.25);
        assert_eq!(f.flux(1.0).unwrap(), 0.0);
        assert_eq!(f.rho_hat(), 0.5);
    }

    #[test]
    fn endpoints_and_rho_hat_for_every_law() {
        for m in all_models() {
            assert_relative_eq!(m.speed(0.0), m.v_max, max_relative = 1e-12);
            assert!(m.speed(m.rho_max).abs() <= 1e-12 * m.v_max);
            let f = FluxModel::new(m.clone());
            let rh = f.rho_hat();
            assert!(rh > 0.0 && rh < m.rho_max);
            let fmax = f.flux_unchecked(rh);
            for k in 0..=2000 {
                let r = m.rho_max * k as f64 / 2000.0;
                assert!(f.flux_unchecked(r) <= fmax + 1e-12, "{:?} at {r}", m.kind);
            }
        }
    }

    #[test]
    fn pipes_munjal_closed_form_matches_search() {
        let m = VelocityModel::new(VelocityKind::PipesMunjal { alpha: 2.0 }, 1.5, 2.0).unwrap();
        let f = FluxModel::new(m.clone());
        let searched = golden_section_max(|r| r * m.speed(r), 0.0, 2.0, 1e-13);
        assert_relative_eq!(f.rho_hat(), searched, max_relative = 1e-6);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for m in all_models() {
            if matches!(m.kind, VelocityKind::Tabulated { .. }) {
                continue;
            }
            for k in 1..20 {
                let r = m.rho_max * k as f64 / 20.0;
                let h = 1e-6;
                let fd = (m.speed(r + h) - m.speed(r - h)) / (2.0 * h);
                assert_relative_eq!(m.derivative(r), fd, max_relative = 1e-5);
                let fd2 = (m.derivative(r + h) - m.derivative(r - h)) / (2.0 * h);
                assert!((m.second_derivative(r) - fd2).abs() <= 1e-4 * (1.0 + fd2.abs()));
            }
        }
    }

    #[test]
    fn tabulated_rejects_non_monotone() {
        let bad = VelocityModel::new(
            VelocityKind::Tabulated {
                samples: vec![[0.0, 1.0], [0.5, 1.2], [1.0, 0.0]],
            },
            1.0,
            1.0,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(VelocityModel::new(VelocityKind::Greenshields, 0.0, 1.0).is_err());
        assert!(VelocityModel::new(VelocityKind::PipesMunjal { alpha: -1.0 }, 1.0, 1.0).is_err());
    }

    #[test]
    fn v2_condition() {
        assert!(VelocityModel::unit_greenshields().has_nonincreasing_rho_v_prime());
        let pm = VelocityModel::new(VelocityKind::PipesMunjal { alpha: 2.0 }, 1.0, 1.0).unwrap();
        assert!(pm.has_nonincreasing_rho_v_prime());
    }

    #[test]
    fn serde_round_trip_keeps_kind() {
        let m = VelocityModel::new(VelocityKind::GreenbergModified { alpha: 0.3 }, 1.0, 1.0).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"kind\":\"greenberg_modified\""));
        let back: VelocityModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    proptest::proptest! {
        #[test]
        fn velocity_strictly_decreasing(a in 0.0f64..1.0, b in 0.0f64..1.0, which in 0usize..6) {
            let m = &all_models()[which];
            let (lo, hi) = (a.min(b) * m.rho_max, a.max(b) * m.rho_max);
            proptest::prop_assume!(hi - lo > 1e-9);
            proptest::prop_assert!(m.speed(lo) > m.speed(hi));
        }
    }
}
