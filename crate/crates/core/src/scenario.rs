//! Declarative scenario descriptions, validation and the built-in presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arz::{MarkerField, PressureModel};
use crate::atomize::MIN_PARTICLES;
use crate::density::{BoundaryData, PiecewiseConstantDensity};
use crate::diagnostics::Tolerances;
use crate::error::{Error, Result};
use crate::hughes::{CostKind, CostModel, DOMAIN};
use crate::ibvp::IbvpOptions;
use crate::model::VelocityModel;
use crate::reference::GodunovConfig;
use crate::trajectory::EvolveConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    LwrCauchy,
    LwrIbvp,
    Hughes,
    Arz,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::LwrCauchy => "lwr_cauchy",
            Scheme::LwrIbvp => "lwr_ibvp",
            Scheme::Hughes => "hughes",
            Scheme::Arz => "arz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    #[default]
    None,
    /// Superposed exact Riemann fans of the initial datum.
    Riemann,
    /// Closed-form solution of the time-dependent boundary test at `T = 2`.
    ExactPtd,
    Godunov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArzMarkers {
    /// Two states `(rho, v)` on either side of `jump`.
    Riemann { jump: f64, left: [f64; 2], right: [f64; 2] },
    Field { breakpoints: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArzSetup {
    pub pressure: PressureModel,
    pub markers: ArzMarkers,
}

impl ArzSetup {
    pub fn marker_field(&self) -> Result<MarkerField> {
        match &self.markers {
            ArzMarkers::Riemann { jump, left, right } => Ok(MarkerField::riemann(
                *jump,
                (left[0], left[1]),
                (right[0], right[1]),
                &self.pressure,
            )),
            ArzMarkers::Field { breakpoints, values } => MarkerField::new(breakpoints.clone(), values.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub particles: Vec<usize>,
    /// Window counts for the boundary scheme; empty means the scenario's own.
    pub windows: Vec<usize>,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        ConvergenceSpec {
            particles: vec![100, 200, 400],
            windows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub snapshots: bool,
    pub tracks: bool,
    pub diagnostics: bool,
    /// Write every `track_stride`-th particle to the track file.
    pub track_stride: usize,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            snapshots: true,
            tracks: true,
            diagnostics: true,
            track_stride: 1,
        }
    }
}

fn default_switching() -> bool {
    true
}

fn default_cost() -> CostKind {
    CostKind::InverseVelocity
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub scheme: Scheme,
    pub velocity: VelocityModel,
    pub initial: PiecewiseConstantDensity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflow: Option<BoundaryData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outflow: Option<BoundaryData>,
    #[serde(default = "default_cost")]
    pub cost: CostKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arz: Option<ArzSetup>,
    pub particles: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<usize>,
    pub t_final: f64,
    #[serde(default)]
    pub evolve: EvolveConfig,
    /// Let particles change direction when the turning point reaches them.
    #[serde(default = "default_switching")]
    pub switching: bool,
    #[serde(default)]
    pub ibvp: IbvpOptions,
    #[serde(default)]
    pub reference: ReferenceKind,
    #[serde(default)]
    pub godunov: GodunovConfig,
    /// Godunov cells over the data extent; defaults to `particles`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub godunov_cells: Option<usize>,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub convergence: ConvergenceSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Preset name or path to a JSON file.
    pub fn load(spec: &str) -> Result<Self> {
        match preset(spec) {
            Some(cfg) => Ok(cfg),
            None if Path::new(spec).exists() => Self::from_path(Path::new(spec)),
            None => Err(Error::Config(vec![format!(
                "scenario: '{spec}' is neither a preset nor an existing file"
            )])),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn cost_model(&self) -> Result<CostModel> {
        CostModel::new(self.cost.clone(), self.velocity.clone())
    }

    pub fn godunov_cells(&self) -> usize {
        self.godunov_cells.unwrap_or(self.particles)
    }

    pub fn with_particles(mut self, n: usize) -> Self {
        self.particles = n;
        self
    }

    pub fn with_windows(mut self, m: usize) -> Self {
        self.windows = Some(m);
        self
    }

    /// Checks the whole configuration and reports every problem found.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut push = |field: &str, msg: String| problems.push(format!("{field}: {msg}"));
        if self.name.trim().is_empty() {
            push("name", "must not be empty".into());
        }
        if let Err(e) = self.velocity.validate() {
            push("velocity", e.to_string());
        }
        if self.particles < MIN_PARTICLES {
            push("particles", format!("need at least {MIN_PARTICLES}, got {}", self.particles));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            push("t_final", format!("must be positive and finite, got {}", self.t_final));
        }
        if self.evolve.samples == 0 {
            push("evolve.samples", "must be at least 1".into());
        }
        if let Err(Error::Config(list)) = self.evolve.integrator.validate() {
            for p in list {
                push("evolve.integrator", p);
            }
        }
        if let Err(e) = self.initial.check_bounded(self.velocity.rho_max) {
            push("initial", e.to_string());
        }
        if self.initial.mass() <= 0.0 {
            push("initial", "datum carries no mass".into());
        }
        if self.outputs.track_stride == 0 {
            push("outputs.track_stride", "must be at least 1".into());
        }
        if !(self.godunov.cfl > 0.0 && self.godunov.cfl <= 1.0) {
            push("godunov.cfl", format!("must lie in (0, 1], got {}", self.godunov.cfl));
        }
        if self.godunov_cells == Some(0) {
            push("godunov_cells", "must be positive".into());
        }
        if self.convergence.particles.iter().any(|n| *n < MIN_PARTICLES) {
            push("convergence.particles", format!("every entry needs at least {MIN_PARTICLES}"));
        }
        if self.convergence.windows.contains(&0) {
            push("convergence.windows", "entries must be positive".into());
        }
        match self.scheme {
            Scheme::LwrIbvp => {
                for (field, data) in [("inflow", &self.inflow), ("outflow", &self.outflow)] {
                    match data {
                        None => push(field, "boundary data is required for lwr_ibvp".into()),
                        Some(d) => {
                            if let Err(e) = d.check_bounded(self.velocity.rho_max) {
                                push(field, e.to_string());
                            }
                        }
                    }
                }
                if let Some(d) = &self.inflow {
                    if !(d.min() > 0.0) {
                        push("inflow", "inflow density must stay positive".into());
                    }
                }
                match self.windows {
                    None => push("windows", "rearrangement window count is required for lwr_ibvp".into()),
                    Some(0) => push("windows", "must be at least 1".into()),
                    _ => {}
                }
                if self.initial.left() != 0.0 || self.initial.right() != 1.0 {
                    push("initial", "must be given exactly on [0, 1]".into());
                }
                if !(self.initial.ess_inf() > 0.0) {
                    push("initial", "must be bounded away from zero on [0, 1]".into());
                }
            }
            _ => {
                if self.inflow.is_some() || self.outflow.is_some() {
                    push("inflow", format!("boundary data only applies to lwr_ibvp, not {}", self.scheme.as_str()));
                }
                if self.windows.is_some() {
                    push("windows", format!("only applies to lwr_ibvp, not {}", self.scheme.as_str()));
                }
            }
        }
        if self.scheme == Scheme::Hughes {
            if let Err(e) = self.cost_model() {
                push("cost", e.to_string());
            }
            if let Some((a, b)) = self.initial.support_hull() {
                if a < DOMAIN.0 || b > DOMAIN.1 {
                    push("initial", format!("support [{a}, {b}] must lie inside [-1, 1]"));
                }
            }
        }
        match (&self.scheme, &self.arz) {
            (Scheme::Arz, None) => push("arz", "pressure and markers are required for arz".into()),
            (Scheme::Arz, Some(setup)) => {
                if let Err(e) = setup.pressure.validate() {
                    push("arz.pressure", e.to_string());
                }
                if let Err(e) = setup.marker_field() {
                    push("arz.markers", e.to_string());
                }
            }
            (_, Some(_)) => push("arz", format!("only applies to arz, not {}", self.scheme.as_str())),
            _ => {}
        }
        let reference_ok = match self.reference {
            ReferenceKind::None => true,
            ReferenceKind::Riemann => self.scheme == Scheme::LwrCauchy,
            ReferenceKind::ExactPtd => self.scheme == Scheme::LwrIbvp && self.t_final == 2.0,
            ReferenceKind::Godunov => self.scheme != Scheme::Arz,
        };
        if !reference_ok {
            push(
                "reference",
                format!("{:?} is not available for {} with T = {}", self.reference, self.scheme.as_str(), self.t_final),
            );
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

fn density(breakpoints: &[f64], values: &[f64]) -> PiecewiseConstantDensity {
    PiecewiseConstantDensity::new(breakpoints.to_vec(), values.to_vec()).expect("preset density")
}

fn boundary(times: &[f64], values: &[f64]) -> BoundaryData {
    BoundaryData::new(times.to_vec(), values.to_vec()).expect("preset boundary data")
}

fn base(name: &str, description: &str, scheme: Scheme, initial: PiecewiseConstantDensity, n: usize, t: f64) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        description: description.into(),
        scheme,
        velocity: VelocityModel::unit_greenshields(),
        initial,
        inflow: None,
        outflow: None,
        cost: CostKind::InverseVelocity,
        arz: None,
        particles: n,
        windows: None,
        t_final: t,
        evolve: EvolveConfig::default(),
        switching: true,
        ibvp: IbvpOptions::default(),
        reference: ReferenceKind::None,
        godunov: GodunovConfig::default(),
        godunov_cells: None,
        outputs: Outputs::default(),
        convergence: ConvergenceSpec::default(),
        tolerances: Tolerances::default(),
    }
}

#[allow(clippy::too_many_arguments)]
fn ibvp(name: &str, description: &str, initial: PiecewiseConstantDensity, inflow: BoundaryData, outflow: BoundaryData, n: usize, m: usize, t: f64) -> ScenarioConfig {
    let mut cfg = base(name, description, Scheme::LwrIbvp, initial, n, t);
    cfg.inflow = Some(inflow);
    cfg.outflow = Some(outflow);
    cfg.windows = Some(m);
    cfg.reference = ReferenceKind::Godunov;
    cfg
}

/// Every built-in scenario.
pub fn presets() -> Vec<ScenarioConfig> {
    let mut out = Vec::new();

    let mut c = base(
        "lwr-test1",
        "two-block datum 0.4 on [-1, 0], 0.8 on (0, 1]",
        Scheme::LwrCauchy,
        density(&[-1.0, 0.0, 1.0], &[0.4, 0.8]),
        200,
        0.5,
    );
    c.reference = ReferenceKind::Riemann;
    out.push(c);

    let mut c = base(
        "lwr-riemann-shock",
        "Riemann shock 0.4 | 0.8 on [-2, 2]",
        Scheme::LwrCauchy,
        density(&[-2.0, 0.0, 2.0], &[0.4, 0.8]),
        400,
        1.0,
    );
    c.reference = ReferenceKind::Riemann;
    out.push(c);

    let mut c = base(
        "lwr-riemann-rarefaction",
        "Riemann rarefaction 0.8 | 0.1 on [-2, 2]",
        Scheme::LwrCauchy,
        density(&[-2.0, 0.0, 2.0], &[0.8, 0.1]),
        100,
        1.0,
    );
    c.reference = ReferenceKind::Riemann;
    out.push(c);

    out.push(ibvp(
        "ibvp-test1bc",
        "interior 0.2, inflow 0.4, free outflow: two rarefactions",
        density(&[0.0, 1.0], &[0.2]),
        boundary(&[0.0], &[0.4]),
        boundary(&[0.0], &[0.0]),
        100,
        20,
        1.0,
    ));
    out.push(ibvp(
        "ibvp-test2bc",
        "interior 0.2, inflow 0.4, blocked outflow: backward shock",
        density(&[0.0, 1.0], &[0.2]),
        boundary(&[0.0], &[0.4]),
        boundary(&[0.0], &[1.0]),
        100,
        20,
        1.0,
    ));
    out.push(ibvp(
        "ibvp-pp",
        "interior 0.8 | 0.1, inflow 0.3, outflow 0.1",
        density(&[0.0, 0.5, 1.0], &[0.8, 0.1]),
        boundary(&[0.0], &[0.3]),
        boundary(&[0.0], &[0.1]),
        100,
        20,
        1.0,
    ));
    let mut c = ibvp(
        "ibvp-ptd",
        "interior 0.3, inflow 0.1 then 0.6, outflow 0.9 then 0.1, exact solution at T = 2",
        density(&[0.0, 1.0], &[0.3]),
        boundary(&[0.0, 1.0], &[0.1, 0.6]),
        boundary(&[0.0, 1.0], &[0.9, 0.1]),
        400,
        40,
        2.0,
    );
    c.reference = ReferenceKind::ExactPtd;
    out.push(c);

    let mut c = base(
        "arz-test1",
        "contact discontinuity, p = 1.4427 log(rho)",
        Scheme::Arz,
        density(&[-1.0, 0.0, 1.0], &[0.5, 0.1]),
        200,
        0.2,
    );
    c.arz = Some(ArzSetup {
        // the published coefficient, not log2(e)
        #[allow(clippy::approx_constant)]
        pressure: PressureModel::LogScaled { coefficient: 1.4427 },
        markers: ArzMarkers::Riemann {
            jump: 0.0,
            left: [0.5, 1.2],
            right: [0.1, 1.6],
        },
    });
    out.push(c);

    let mut c = base(
        "arz-test2",
        "vacuum formation, p = 6 rho",
        Scheme::Arz,
        density(&[-1.0, 0.0, 1.0], &[0.05, 0.05]),
        200,
        1.0,
    );
    c.arz = Some(ArzSetup {
        pressure: PressureModel::Linear { slope: 6.0 },
        markers: ArzMarkers::Riemann {
            jump: 0.0,
            left: [0.05, 0.05],
            right: [0.05, 0.5],
        },
    });
    out.push(c);

    let mut c = base(
        "hughes-steps",
        "three-step crowd 0.8, 0.6, 0.9 with cost 1 / v",
        Scheme::Hughes,
        density(&[-0.8, -0.5, -0.3, 0.3, 0.4, 0.75], &[0.8, 0.0, 0.6, 0.0, 0.9]),
        200,
        1.0,
    );
    c.reference = ReferenceKind::Godunov;
    out.push(c);

    let mut c = base(
        "hughes-two-step",
        "crowd 0.3 on [-1, 0], 0.7 on (0, 1] with cost 1 / v",
        Scheme::Hughes,
        density(&[-1.0, 0.0, 1.0], &[0.3, 0.7]),
        1000,
        0.5,
    );
    c.reference = ReferenceKind::Godunov;
    out.push(c);

    out
}

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    presets().into_iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        let all = presets();
        assert_eq!(all.len(), 11);
        for p in &all {
            p.validate().unwrap_or_else(|e| panic!("{}: {e}", p.name));
            let back = ScenarioConfig::from_json_str(&p.to_json().unwrap()).unwrap();
            assert_eq!(&back, p);
        }
    }

    #[test]
    fn missing_boundary_data_is_named() {
        let mut cfg = preset("ibvp-test1bc").unwrap();
        cfg.outflow = None;
        let Err(Error::Config(list)) = cfg.validate() else { panic!() };
        assert!(list.iter().any(|p| p.starts_with("outflow:")), "{list:?}");
    }

    #[test]
    fn too_few_particles() {
        let cfg = preset("lwr-test1").unwrap().with_particles(2);
        let Err(Error::Config(list)) = cfg.validate() else { panic!() };
        assert!(list.iter().any(|p| p.starts_with("particles:")));
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&preset("lwr-test1").unwrap().to_json().unwrap()).unwrap();
        v["particle_count"] = 5.into();
        let err = ScenarioConfig::from_json_str(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("particle_count"), "{err}");
    }

    #[test]
    fn minimal_document_uses_defaults() {
        let text = r#"{
            "name": "small",
            "scheme": "lwr_cauchy",
            "velocity": {"kind": "greenshields", "v_max": 1.0, "rho_max": 1.0},
            "initial": {"breakpoints": [0.0, 1.0], "values": [0.5]},
            "particles": 10,
            "t_final": 0.1
        }"#;
        let cfg = ScenarioConfig::from_json_str(text).unwrap();
        assert_eq!(cfg.evolve.samples, 100);
        assert!(cfg.outputs.snapshots);
    }

    #[test]
    fn load_rejects_unknown_names() {
        assert!(ScenarioConfig::load("no-such-preset").is_err());
        assert!(ScenarioConfig::load("arz-test2").is_ok());
    }
}
