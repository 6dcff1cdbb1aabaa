//! Piecewise-constant densities, their pseudo-inverses and exact functionals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on the equality of masses compared by Wasserstein distance.
pub const MASS_TOLERANCE: f64 = 1e-10;

/// Density equal to `values[i]` on `[breakpoints[i], breakpoints[i + 1])` and zero
/// outside `[breakpoints[0], breakpoints[m])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDensity", into = "RawDensity")]
pub struct PiecewiseConstantDensity {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDensity {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawDensity> for PiecewiseConstantDensity {
    type Error = Error;
    fn try_from(raw: RawDensity) -> Result<Self> {
        PiecewiseConstantDensity::new(raw.breakpoints, raw.values)
    }
}

impl From<PiecewiseConstantDensity> for RawDensity {
    fn from(d: PiecewiseConstantDensity) -> Self {
        RawDensity {
            breakpoints: d.breakpoints,
            values: d.values,
        }
    }
}

impl PiecewiseConstantDensity {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidDensity("at least two breakpoints are required".into()));
        }
        if values.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidDensity(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len() - 1,
                values.len()
            )));
        }
        if breakpoints.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidDensity("breakpoints must be finite".into()));
        }
        if let Some(k) = breakpoints.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidDensity(format!(
                "breakpoints must be strictly increasing (index {k})"
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidDensity(format!("density value {v} is not a finite nonnegative number")));
        }
        Ok(PiecewiseConstantDensity { breakpoints, values })
    }

    /// Single block of height `value` on `[a, b)`.
    pub fn constant(a: f64, b: f64, value: f64) -> Result<Self> {
        Self::new(vec![a, b], vec![value])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn segment_count(&self) -> usize {
        self.values.len()
    }

    pub fn left(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn right(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    /// Rejects values above `rho_max`.
    pub fn check_bounded(&self, rho_max: f64) -> Result<()> {
        match self.values.iter().find(|v| **v > rho_max) {
            Some(v) => Err(Error::DensityOutOfRange {
                value: *v,
                rho_max,
            }),
            None => Ok(()),
        }
    }

    pub fn mass(&self) -> f64 {
        self.values
            .iter()
            .zip(self.breakpoints.windows(2))
            .map(|(v, w)| v * (w[1] - w[0]))
            .sum()
    }

    /// Value at `x`; segments are closed on the left.
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.left() || x >= self.right() {
            return 0.0;
        }
        let k = self.breakpoints.partition_point(|b| *b <= x);
        self.values[k - 1]
    }

    /// Largest value on a segment of positive width.
    pub fn ess_sup(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest value over the segments.
    pub fn ess_inf(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest value over segments meeting the open interval `(a, b)`.
    pub fn ess_sup_on(&self, a: f64, b: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        if a < self.left() || b > self.right() {
            best = 0.0;
        }
        for (v, w) in self.values.iter().zip(self.breakpoints.windows(2)) {
            if w[1] > a && w[0] < b {
                best = best.max(*v);
            }
        }
        best
    }

    pub fn total_variation(&self, extend_by_zero: bool) -> f64 {
        let interior: f64 = self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        if extend_by_zero {
            interior + self.values[0] + self.values[self.values.len() - 1]
        } else {
            interior
        }
    }

    /// Smallest interval outside of which the density vanishes.
    pub fn support_hull(&self) -> Option<(f64, f64)> {
        let first = self.values.iter().position(|v| *v > 0.0)?;
        let last = self.values.iter().rposition(|v| *v > 0.0)?;
        Some((self.breakpoints[first], self.breakpoints[last + 1]))
    }

    /// Cumulative mass `F(x) = int_{-inf}^x rho`.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (v, w) in self.values.iter().zip(self.breakpoints.windows(2)) {
            if x <= w[0] {
                break;
            }
            acc += v * (x.min(w[1]) - w[0]);
        }
        acc
    }

    /// Restriction to `[a, b)`, extended by zero where the density is undefined.
    pub fn restrict(&self, a: f64, b: f64) -> Result<Self> {
        if !(b > a) {
            return Err(Error::Domain(format!("empty restriction interval [{a}, {b}]")));
        }
        let mut points = vec![a];
        points.extend(self.breakpoints.iter().copied().filter(|x| *x > a && *x < b));
        points.push(b);
        let values = points
            .windows(2)
            .map(|w| self.eval(0.5 * (w[0] + w[1])))
            .collect();
        Self::new(points, values)
    }

    pub fn translate(&self, shift: f64) -> Self {
        PiecewiseConstantDensity {
            breakpoints: self.breakpoints.iter().map(|x| x + shift).collect(),
            values: self.values.clone(),
        }
    }

    /// Splits every segment at its midpoint without changing the values.
    pub fn refine(&self) -> Self {
        let mut breakpoints = Vec::with_capacity(2 * self.breakpoints.len());
        let mut values = Vec::with_capacity(2 * self.values.len());
        for (v, w) in self.values.iter().zip(self.breakpoints.windows(2)) {
            breakpoints.push(w[0]);
            breakpoints.push(0.5 * (w[0] + w[1]));
            values.push(*v);
            values.push(*v);
        }
        breakpoints.push(self.right());
        PiecewiseConstantDensity { breakpoints, values }
    }

    pub fn pseudo_inverse(&self) -> Result<PseudoInverse> {
        let mut pieces = Vec::new();
        let mut z = 0.0;
        for (v, w) in self.values.iter().zip(self.breakpoints.windows(2)) {
            if *v > 0.0 {
                let dz = v * (w[1] - w[0]);
                pieces.push(AffinePiece {
                    z_start: z,
                    x_start: w[0],
                    slope: 1.0 / v,
                });
                z += dz;
            }
        }
        if pieces.is_empty() || !(z > 0.0) {
            return Err(Error::ZeroMass);
        }
        Ok(PseudoInverse { pieces, mass: z })
    }

    /// Exact L1 distance between two piecewise-constant densities.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        let points = merge_sorted(&self.breakpoints, &other.breakpoints);
        points
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                (self.eval(mid) - other.eval(mid)).abs() * (w[1] - w[0])
            })
            .sum()
    }

    /// L1 distance on `[a, b]` to an arbitrary profile.
    ///
    /// The interval is split at the breakpoints of both functions and the
    /// smooth pieces are integrated by adaptive Gauss-Legendre quadrature.
    pub fn l1_distance_to(&self, profile: &dyn DensityProfile, a: f64, b: f64) -> f64 {
        let mut points: Vec<f64> = vec![a, b];
        points.extend(self.breakpoints.iter().copied().filter(|x| *x > a && *x < b));
        points.extend(profile.breakpoints(a, b).into_iter().filter(|x| *x > a && *x < b));
        points.sort_by(f64::total_cmp);
        points.dedup();
        let mut total = 0.0;
        for w in points.windows(2) {
            if w[1] - w[0] <= 0.0 {
                continue;
            }
            let level = self.eval(0.5 * (w[0] + w[1]));
            let g = |x: f64| (level - profile.eval(x)).abs();
            total += adaptive_gauss(&g, w[0], w[1], 1e-13, 40);
        }
        total
    }
}

impl DensityProfile for PiecewiseConstantDensity {
    fn eval(&self, x: f64) -> f64 {
        PiecewiseConstantDensity::eval(self, x)
    }

    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        self.breakpoints
            .iter()
            .copied()
            .filter(|x| *x >= a && *x <= b)
            .collect()
    }
}

/// A density profile that is smooth between a finite set of breakpoints.
pub trait DensityProfile {
    fn eval(&self, x: f64) -> f64;
    /// Points in `[a, b]` where the profile may fail to be smooth.
    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64>;
}

fn merge_sorted(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Adaptive five-point Gauss-Legendre quadrature. Only interior points are
/// sampled, so jumps sitting exactly on `a` or `b` do not leak in.
pub(crate) fn adaptive_gauss(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let whole = gauss5(f, a, b);
    gauss_step(f, a, b, whole, tol, depth)
}

fn gauss5(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        0.538_469_310_105_683_1,
        -0.538_469_310_105_683_1,
        0.906_179_845_938_664,
        -0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_47,
        0.478_628_670_499_366_47,
        0.236_926_885_056_189_08,
        0.236_926_885_056_189_08,
    ];
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * NODES.iter().zip(WEIGHTS).map(|(x, w)| w * f(c + h * x)).sum::<f64>()
}

fn gauss_step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (left, right) = (gauss5(f, a, m), gauss5(f, m, b));
    if depth == 0 || (left + right - whole).abs() <= tol {
        return left + right;
    }
    gauss_step(f, a, m, left, 0.5 * tol, depth - 1) + gauss_step(f, m, b, right, 0.5 * tol, depth - 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct AffinePiece {
    z_start: f64,
    x_start: f64,
    slope: f64,
}

/// `X(z) = inf { x : F(x) > z }` on `[0, L)`, affine on each chunk of positive density.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoInverse {
    pieces: Vec<AffinePiece>,
    mass: f64,
}

impl PseudoInverse {
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Values of `z` at which a new affine piece starts.
    pub fn z_breakpoints(&self) -> Vec<f64> {
        self.pieces.iter().map(|p| p.z_start).collect()
    }

    fn piece_at(&self, z: f64) -> &AffinePiece {
        let k = self.pieces.partition_point(|p| p.z_start <= z);
        &self.pieces[k.max(1) - 1]
    }

    pub fn eval(&self, z: f64) -> f64 {
        let p = self.piece_at(z.clamp(0.0, self.mass));
        p.x_start + (z - p.z_start) * p.slope
    }

    /// Exact `int_0^L |X - Y| dz` for pseudo-inverses of equal mass.
    pub fn l1_distance(&self, other: &PseudoInverse) -> Result<f64> {
        let scale = self.mass.max(other.mass);
        if (self.mass - other.mass).abs() > MASS_TOLERANCE * scale {
            return Err(Error::MassMismatch {
                left: self.mass,
                right: other.mass,
            });
        }
        let top = self.mass.min(other.mass);
        let mut cuts = merge_sorted(&self.z_breakpoints(), &other.z_breakpoints());
        cuts.retain(|z| *z < top);
        cuts.push(top);
        let (mut i, mut j) = (0usize, 0usize);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (z0, z1) = (w[0], w[1]);
            while i + 1 < self.pieces.len() && self.pieces[i + 1].z_start <= z0 {
                i += 1;
            }
            while j + 1 < other.pieces.len() && other.pieces[j + 1].z_start <= z0 {
                j += 1;
            }
            let (p, q) = (&self.pieces[i], &other.pieces[j]);
            let d0 = (p.x_start + (z0 - p.z_start) * p.slope) - (q.x_start + (z0 - q.z_start) * q.slope);
            let d1 = (p.x_start + (z1 - p.z_start) * p.slope) - (q.x_start + (z1 - q.z_start) * q.slope);
            total += abs_linear_integral(d0, d1, z1 - z0);
        }
        Ok(total)
    }
}

/// `int_0^h |d(s)| ds` for `d` affine with `d(0) = d0`, `d(h) = d1`.
fn abs_linear_integral(d0: f64, d1: f64, h: f64) -> f64 {
    if d0 * d1 >= 0.0 {
        0.5 * h * (d0 + d1).abs()
    } else {
        0.5 * h * (d0 * d0 + d1 * d1) / (d1 - d0).abs()
    }
}

/// Scaled 1-Wasserstein distance between two densities of equal mass.
pub fn wasserstein_scaled(a: &PiecewiseConstantDensity, b: &PiecewiseConstantDensity) -> Result<f64> {
    a.pseudo_inverse()?.l1_distance(&b.pseudo_inverse()?)
}

/// Piecewise-constant-in-time boundary datum, right-continuous at its jumps.
///
/// `values[j]` holds on `[times[j], times[j + 1])`; the last value holds for
/// all later times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBoundary", into = "RawBoundary")]
pub struct BoundaryData {
    times: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawBoundary {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawBoundary> for BoundaryData {
    type Error = Error;
    fn try_from(raw: RawBoundary) -> Result<Self> {
        BoundaryData::new(raw.times, raw.values)
    }
}

impl From<BoundaryData> for RawBoundary {
    fn from(b: BoundaryData) -> Self {
        RawBoundary {
            times: b.times,
            values: b.values,
        }
    }
}

impl BoundaryData {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidDensity(
                "boundary data needs as many switch times as values".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidDensity("boundary data must start at t = 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidDensity("boundary switch times must increase".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidDensity("boundary values must be finite and nonnegative".into()));
        }
        Ok(BoundaryData { times, values })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![value])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_constant(&self) -> bool {
        self.values.windows(2).all(|w| w[0] == w[1])
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|s| *s <= t);
        self.values[k.max(1) - 1]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn total_variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    pub fn check_bounded(&self, rho_max: f64) -> Result<()> {
        match self.values.iter().find(|v| **v > rho_max) {
            Some(v) => Err(Error::DensityOutOfRange {
                value: *v,
                rho_max,
            }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pcd(b: &[f64], v: &[f64]) -> PiecewiseConstantDensity {
        PiecewiseConstantDensity::new(b.to_vec(), v.to_vec()).unwrap()
    }

    fn steps() -> PiecewiseConstantDensity {
        pcd(&[-0.8, -0.5, -0.3, 0.3, 0.4, 0.75], &[0.8, 0.0, 0.6, 0.0, 0.9])
    }

    #[test]
    fn rejects_bad_input() {
        assert!(PiecewiseConstantDensity::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(PiecewiseConstantDensity::new(vec![0.0, 1.0], vec![-1.0]).is_err());
        assert!(PiecewiseConstantDensity::new(vec![0.0, 1.0, 2.0], vec![1.0]).is_err());
        assert!(pcd(&[0.0, 1.0], &[2.0]).check_bounded(1.0).is_err());
    }

    #[test]
    fn pseudo_inverse_identity() {
        let x = pcd(&[0.0, 1.0], &[1.0]).pseudo_inverse().unwrap();
        for z in [0.0, 0.25, 0.5, 0.99] {
            assert_relative_eq!(x.eval(z), z, epsilon = 1e-15);
        }
    }

    #[test]
    fn pseudo_inverse_linear() {
        let x = pcd(&[0.0, 2.0], &[0.5]).pseudo_inverse().unwrap();
        for z in [0.0, 0.25, 0.5, 0.99] {
            assert_relative_eq!(x.eval(z), 2.0 * z, epsilon = 1e-15);
        }
    }

    #[test]
    fn pseudo_inverse_jumps_across_vacuum() {
        let x = pcd(&[0.0, 1.0, 2.0, 3.0], &[1.0, 0.0, 1.0]).pseudo_inverse().unwrap();
        assert_relative_eq!(x.eval(1.0 - 1e-12), 1.0, epsilon = 1e-11);
        assert_eq!(x.eval(1.0), 2.0);
        assert_eq!(x.eval(1.5), 2.5);
    }

    #[test]
    fn pseudo_inverse_zero_mass() {
        assert_eq!(pcd(&[0.0, 1.0], &[0.0]).pseudo_inverse(), Err(Error::ZeroMass));
    }

    #[test]
    fn wasserstein_examples() {
        let a = pcd(&[0.0, 1.0], &[1.0]);
        let b = pcd(&[0.0, 2.0], &[0.5]);
        assert_eq!(wasserstein_scaled(&a, &a).unwrap(), 0.0);
        // closed form int_0^1 |2z - z| dz = 1/2, checked against midpoint quadrature
        let xa = a.pseudo_inverse().unwrap();
        let xb = b.pseudo_inverse().unwrap();
        let n = 100_000;
        let quad: f64 = (0..n)
            .map(|k| {
                let z = (k as f64 + 0.5) / n as f64;
                (xa.eval(z) - xb.eval(z)).abs() / n as f64
            })
            .sum();
        assert_relative_eq!(quad, 0.5, max_relative = 1e-8);
        assert_relative_eq!(wasserstein_scaled(&a, &b).unwrap(), 0.5, max_relative = 1e-14);
        let s = steps();
        assert_relative_eq!(
            wasserstein_scaled(&s, &s.translate(0.3)).unwrap(),
            0.3 * s.mass(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn wasserstein_mass_mismatch() {
        let a = pcd(&[0.0, 1.0], &[1.0]);
        let b = pcd(&[0.0, 1.0], &[0.9]);
        assert!(matches!(wasserstein_scaled(&a, &b), Err(Error::MassMismatch { .. })));
    }

    #[test]
    fn crossing_pseudo_inverses() {
        // X = 2z on [0,1) vs Y = 0.5 + z: cross at z = 0.5
        let a = pcd(&[0.0, 2.0], &[0.5]);
        let b = pcd(&[0.5, 1.5], &[1.0]);
        let exact = 0.125 + 0.125;
        assert_relative_eq!(wasserstein_scaled(&a, &b).unwrap(), exact, max_relative = 1e-14);
    }

    #[test]
    fn total_variation_examples() {
        assert_eq!(pcd(&[-1.0, 1.0], &[0.4]).total_variation(false), 0.0);
        let ic = pcd(&[-1.0, 0.0, 1.0], &[0.4, 0.8]);
        assert_relative_eq!(ic.total_variation(true), 1.6, epsilon = 1e-15);
        assert_relative_eq!(steps().total_variation(true), 4.6, epsilon = 1e-14);
    }

    #[test]
    fn mass_cdf_eval_support() {
        let s = steps();
        assert_relative_eq!(s.mass(), 0.8 * 0.3 + 0.6 * 0.6 + 0.9 * 0.35, epsilon = 1e-15);
        assert_relative_eq!(s.cdf(10.0), s.mass(), epsilon = 1e-15);
        assert_eq!(s.cdf(-0.8), 0.0);
        assert_eq!(s.eval(-0.4), 0.0);
        assert_eq!(s.eval(-0.3), 0.6);
        assert_eq!(s.eval(0.75), 0.0);
        assert_eq!(s.support_hull(), Some((-0.8, 0.75)));
        assert_eq!(s.ess_sup(), 0.9);
        assert_eq!(s.ess_sup_on(-0.5, -0.3), 0.0);
        assert_eq!(s.ess_sup_on(-0.6, -0.3), 0.8);
    }

    #[test]
    fn restrict_extends_by_zero() {
        let d = pcd(&[0.0, 1.0], &[0.5]);
        let r = d.restrict(-1.0, 0.5).unwrap();
        assert_eq!(r.breakpoints(), &[-1.0, 0.0, 0.5]);
        assert_eq!(r.values(), &[0.0, 0.5]);
    }

    #[test]
    fn l1_distances() {
        let a = pcd(&[0.0, 1.0], &[1.0]);
        let b = pcd(&[0.5, 1.5], &[1.0]);
        assert_relative_eq!(a.l1_distance(&b), 1.0, epsilon = 1e-15);
        assert_eq!(a.l1_distance(&a), 0.0);
        assert_relative_eq!(a.l1_distance_to(&b, -1.0, 2.0), 1.0, epsilon = 1e-12);
    }

    struct Ramp;
    impl DensityProfile for Ramp {
        fn eval(&self, x: f64) -> f64 {
            x
        }
        fn breakpoints(&self, _a: f64, _b: f64) -> Vec<f64> {
            Vec::new()
        }
    }

    #[test]
    fn l1_against_smooth_profile() {
        // int_0^1 |0.5 - x| dx = 0.25
        let d = pcd(&[0.0, 1.0], &[0.5]);
        assert_relative_eq!(d.l1_distance_to(&Ramp, 0.0, 1.0), 0.25, epsilon = 1e-10);
    }

    #[test]
    fn boundary_data_is_right_continuous() {
        let b = BoundaryData::new(vec![0.0, 1.0], vec![0.1, 0.6]).unwrap();
        assert_eq!(b.value_at(0.0), 0.1);
        assert_eq!(b.value_at(0.999), 0.1);
        assert_eq!(b.value_at(1.0), 0.6);
        assert_eq!(b.value_at(5.0), 0.6);
        assert!(!b.is_constant());
        assert_relative_eq!(b.total_variation(), 0.5);
        assert!(BoundaryData::new(vec![0.5], vec![0.1]).is_err());
    }

    #[test]
    fn serde_validates() {
        let ok: PiecewiseConstantDensity =
            serde_json::from_str(r#"{"breakpoints":[0,1],"values":[0.5]}"#).unwrap();
        assert_eq!(ok.mass(), 0.5);
        assert!(serde_json::from_str::<PiecewiseConstantDensity>(r#"{"breakpoints":[1,0],"values":[0.5]}"#).is_err());
    }

    fn arb_density() -> impl Strategy<Value = PiecewiseConstantDensity> {
        prop::collection::vec((0.01f64..1.0, 0.05f64..1.0), 1..8).prop_map(|segs| {
            let mut b = vec![0.0];
            let mut v = Vec::new();
            for (w, r) in segs {
                b.push(b.last().unwrap() + w);
                v.push(r);
            }
            PiecewiseConstantDensity::new(b, v).unwrap()
        })
    }

    /// Rescales `d` to unit mass by stretching its values.
    fn unit(d: PiecewiseConstantDensity) -> PiecewiseConstantDensity {
        let m = d.mass();
        PiecewiseConstantDensity::new(
            d.breakpoints().to_vec(),
            d.values().iter().map(|v| v / m).collect(),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn wasserstein_self_is_zero(d in arb_density()) {
            prop_assert_eq!(wasserstein_scaled(&d, &d).unwrap(), 0.0);
        }

        #[test]
        fn wasserstein_triangle(a in arb_density(), b in arb_density(), c in arb_density(), s in -2.0f64..2.0) {
            let (a, b, c) = (unit(a), unit(b).translate(s), unit(c));
            let ab = wasserstein_scaled(&a, &b).unwrap();
            let bc = wasserstein_scaled(&b, &c).unwrap();
            let ac = wasserstein_scaled(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
        }

        #[test]
        fn wasserstein_translation(d in arb_density(), shift in 0.0f64..3.0) {
            let w = wasserstein_scaled(&d, &d.translate(shift)).unwrap();
            prop_assert!((w - d.mass() * shift).abs() <= 1e-10 * (d.mass() * shift).max(1e-300) + 1e-14);
        }

        #[test]
        fn tv_refinement_invariant(d in arb_density(), ext in proptest::bool::ANY) {
            let tv = d.total_variation(ext);
            let refined = d.refine().refine();
            prop_assert!((refined.total_variation(ext) - tv).abs() <= 1e-14);
        }

        #[test]
        fn pseudo_inverse_monotone(d in arb_density(), z1 in 0.0f64..1.0, z2 in 0.0f64..1.0) {
            let x = d.pseudo_inverse().unwrap();
            let (lo, hi) = (z1.min(z2) * d.mass(), z1.max(z2) * d.mass());
            prop_assert!(x.eval(lo) <= x.eval(hi));
        }
    }
}
