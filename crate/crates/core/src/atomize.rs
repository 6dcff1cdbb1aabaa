//! Equal-mass splitting of initial densities into particle positions.

use serde::Serialize;

use crate::arz::MarkerField;
use crate::density::PiecewiseConstantDensity;
use crate::error::{Error, Result};
use crate::hughes::{settle_split, turning_point, CostModel};
use crate::model::VelocityModel;

pub const MIN_PARTICLES: usize = 3;

/// Hull-anchored particles `x_0 < ... < x_n` separating chunks of mass `chunk_mass`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atomization {
    pub positions: Vec<f64>,
    pub chunk_mass: f64,
    /// Essential supremum of the atomized density.
    pub max_density: f64,
}

impl Atomization {
    pub fn n(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn total_mass(&self) -> f64 {
        self.chunk_mass * self.n() as f64
    }
}

fn check_count(n: usize) -> Result<()> {
    if n < MIN_PARTICLES {
        return Err(Error::TooFewParticles {
            min: MIN_PARTICLES,
            got: n,
        });
    }
    Ok(())
}

/// Positions `x_1 < ... < x_{n-1}` with `F(x_i) - F(x_0) = i L / n`.
///
/// Mass boundaries that coincide with the start of a vacuum interval are
/// placed at its near end, i.e. at `sup { x : mass of [x_{i-1}, x) < l }`.
fn split_positions(density: &PiecewiseConstantDensity, n: usize) -> Result<(Vec<f64>, f64)> {
    check_count(n)?;
    let (a, b) = density.support_hull().ok_or(Error::ZeroMass)?;
    let mass = density.mass();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    let chunk = mass / n as f64;
    let bps = density.breakpoints();
    let vals = density.values();
    let mut positions = Vec::with_capacity(n + 1);
    positions.push(a);
    let mut seg = 0usize;
    let mut cum = 0.0;
    for i in 1..n {
        let target = chunk * i as f64;
        loop {
            let m = vals[seg] * (bps[seg + 1] - bps[seg]);
            if vals[seg] > 0.0 && cum + m >= target {
                break;
            }
            cum += m;
            seg += 1;
            if seg == vals.len() {
                // rounding left `target` above the accumulated mass
                seg -= 1;
                cum -= vals[seg] * (bps[seg + 1] - bps[seg]);
                break;
            }
        }
        let x = (bps[seg] + (target - cum) / vals[seg]).clamp(bps[seg], bps[seg + 1]);
        let x = x.max(*positions.last().unwrap());
        positions.push(x);
    }
    positions.push(b);
    Ok((positions, chunk))
}

/// Splits a compactly supported density into `n` chunks anchored at its support hull.
pub fn atomize_compact(density: &PiecewiseConstantDensity, n: usize) -> Result<Atomization> {
    let (positions, chunk_mass) = split_positions(density, n)?;
    Ok(Atomization {
        positions,
        chunk_mass,
        max_density: density.ess_sup(),
    })
}

/// Particles of the Dirichlet scheme: the interior block on `[0, 1]` and the queue on the negative axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IbvpAtomization {
    /// `positions[j]` is particle `j - queue_len`.
    pub positions: Vec<f64>,
    pub queue_len: usize,
    pub n: usize,
    pub chunk_mass: f64,
    /// Mass of the leftmost queue chunk.
    pub remainder: f64,
    pub queue_mass: f64,
}

impl IbvpAtomization {
    pub fn position(&self, index: isize) -> f64 {
        self.positions[(index + self.queue_len as isize) as usize]
    }
}

/// Queue size for an inflow horizon `t_final`: `(Q, N, q)` with
/// `Q = 2 T v_max rho_max`, `N = ceil(Q / l)` and `q = Q - l (N - 1)`.
pub fn queue_size(chunk_mass: f64, t_final: f64, model: &VelocityModel) -> (f64, usize, f64) {
    let queue_mass = 2.0 * t_final * model.v_max * model.rho_max;
    let ratio = queue_mass / chunk_mass;
    // guard against ratios like 1999.9999999999998 for an exact multiple
    let count = (ratio - 1e-9 * ratio.max(1.0)).ceil().max(1.0) as usize;
    let remainder = queue_mass - chunk_mass * (count - 1) as f64;
    (queue_mass, count, remainder)
}

pub fn atomize_ibvp(
    density: &PiecewiseConstantDensity,
    inflow_density: f64,
    n: usize,
    t_final: f64,
    model: &VelocityModel,
) -> Result<IbvpAtomization> {
    if density.left() != 0.0 || density.right() != 1.0 {
        return Err(Error::Domain(format!(
            "interior datum must be given on [0, 1], got [{}, {}]",
            density.left(),
            density.right()
        )));
    }
    if !(density.ess_inf() > 0.0) {
        return Err(Error::InvalidDensity(
            "interior datum must be bounded away from zero".into(),
        ));
    }
    if !(inflow_density > 0.0) {
        return Err(Error::InvalidDensity(format!(
            "inflow density must be positive, got {inflow_density}"
        )));
    }
    if !(t_final > 0.0) {
        return Err(Error::Domain(format!("final time must be positive, got {t_final}")));
    }
    density.check_bounded(model.rho_max)?;
    if inflow_density > model.rho_max {
        return Err(Error::DensityOutOfRange {
            value: inflow_density,
            rho_max: model.rho_max,
        });
    }
    let (interior, chunk_mass) = split_positions(density, n)?;
    let (queue_mass, queue_len, remainder) = queue_size(chunk_mass, t_final, model);
    let spacing = chunk_mass / inflow_density;
    let mut positions = Vec::with_capacity(queue_len + n + 1);
    let first_regular = -(queue_len as f64) + 1.0;
    positions.push(first_regular * spacing - remainder / inflow_density);
    for i in 1..queue_len {
        positions.push((i as f64 - queue_len as f64) * spacing);
    }
    positions.extend_from_slice(&interior);
    Ok(IbvpAtomization {
        positions,
        queue_len,
        n,
        chunk_mass,
        remainder,
        queue_mass,
    })
}

/// Particles of the second-order scheme together with their frozen markers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArzAtomization {
    pub positions: Vec<f64>,
    pub chunk_mass: f64,
    /// `markers[i]` is the essential supremum of the marker field on `[x_i, x_{i+1}]`.
    pub markers: Vec<f64>,
}

/// Rejects negative markers.
pub fn atomize_arz(density: &PiecewiseConstantDensity, markers: &MarkerField, n: usize) -> Result<ArzAtomization> {
    let atom = atomize_arz_unchecked(density, markers, n)?;
    if let Some((i, w)) = atom.markers.iter().enumerate().find(|(_, w)| **w < 0.0) {
        return Err(Error::Domain(format!("marker {w} of chunk {i} is negative")));
    }
    Ok(atom)
}

/// As [`atomize_arz`] but accepts negative markers, for pressure laws outside the admissible class.
pub fn atomize_arz_unchecked(
    density: &PiecewiseConstantDensity,
    markers: &MarkerField,
    n: usize,
) -> Result<ArzAtomization> {
    let (positions, chunk_mass) = split_positions(density, n)?;
    let markers = positions
        .windows(2)
        .map(|w| markers.ess_sup_on(w[0], w[1]))
        .collect();
    Ok(ArzAtomization {
        positions,
        chunk_mass,
        markers,
    })
}

/// Particles of the two-sided scheme with the initial turning point and split index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HughesAtomization {
    pub positions: Vec<f64>,
    pub chunk_mass: f64,
    /// Turning point with the split chunk emptied; it lies in `[x_split, x_{split + 1}]`
    /// unless two neighbouring splits each push it into the other.
    pub turning_point: f64,
    pub split_index: usize,
    /// Particle moved to break a tie with the turning point, if any.
    pub perturbed: Option<usize>,
}

pub fn atomize_hughes(density: &PiecewiseConstantDensity, n: usize, cost: &CostModel) -> Result<HughesAtomization> {
    let (hull_a, hull_b) = density.support_hull().ok_or(Error::ZeroMass)?;
    if hull_a < -1.0 || hull_b > 1.0 {
        return Err(Error::Domain(format!(
            "support [{hull_a}, {hull_b}] must lie inside [-1, 1]"
        )));
    }
    let (mut positions, chunk_mass) = split_positions(density, n)?;
    let discrete = crate::lwr::discrete_density(&positions, chunk_mass)?;
    let xi = turning_point(&discrete, cost)?;
    let mut perturbed = None;
    if let Some(k) = positions.iter().position(|x| (*x - xi).abs() <= 1e-12) {
        let shift = 1e-9 * chunk_mass;
        let left_density = if k > 0 { chunk_mass / (positions[k] - positions[k - 1]) } else { 0.0 };
        let right_density = if k < n { chunk_mass / (positions[k + 1] - positions[k]) } else { 0.0 };
        if left_density <= right_density {
            positions[k] -= shift;
        } else {
            positions[k] += shift;
        }
        perturbed = Some(k);
    }
    let first_guess = positions.partition_point(|x| *x < xi).saturating_sub(1);
    let settled = settle_split(&positions, chunk_mass, first_guess, cost)?;
    Ok(HughesAtomization {
        positions,
        chunk_mass,
        turning_point: settled.turning_point,
        split_index: settled.split,
        perturbed,
    })
}
