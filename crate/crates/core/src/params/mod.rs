//! Scenario parameters and their validation.
//!
//! Values are stored in the units the parameter table is written in
//! (μm, s, molecule, K, g/cm³, g/(cm·s), counts per mm³, cm³). Helper methods
//! expose the few converted quantities the equations need so every formula
//! downstream works in μm and s.

mod config;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use config::{load_config, Config, Numerics};

/// μm³ per mm³.
pub const UM3_PER_MM3: f64 = 1e9;
/// μm³ per cm³.
pub const UM3_PER_CM3: f64 = 1e12;
/// μm³ per liter.
pub const UM3_PER_LITER: f64 = 1e15;
/// μm³ per m³.
pub const UM3_PER_M3: f64 = 1e18;

/// Every physical and control constant of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Vessel radius R, μm.
    pub vessel_radius: f64,
    /// Vessel length L, μm.
    pub vessel_length: f64,
    /// Small vessels per mm³ of tissue.
    pub vessel_density: f64,
    /// Tissue volume, cm³.
    pub tissue_volume: f64,
    /// Axial extent of the source patch on the wall, μm.
    pub source_length: f64,
    /// Production flux at the source, molecule/(s·μm²).
    pub source_flux: f64,
    /// Fluid density, g/cm³.
    pub fluid_density: f64,
    /// Dynamic viscosity, g/(cm·s).
    pub viscosity: f64,
    /// Cross-section average flow speed, μm/s.
    pub avg_velocity: f64,
    /// Fluid temperature, K.
    pub temperature: f64,
    /// Robot radius a, μm.
    pub robot_radius: f64,
    /// Robots per mm³ of blood.
    pub robot_density: f64,
    /// Robot diffusion coefficient, μm²/s.
    pub robot_diffusion: f64,
    /// Chemical diffusion coefficient D, μm²/s.
    pub chem_diffusion: f64,
    /// Nominal concentration next to the source, molecule/μm³.
    pub c_source: f64,
    /// Uniform background concentration c, molecule/μm³.
    pub c_background: f64,
    /// Trailing measurement window, s.
    pub measure_time: f64,
    /// Counts within the window needed to declare a detection.
    pub threshold: u32,
    /// Time the fleet collects detections for a diagnosis, s.
    pub task_time: f64,
    /// Robots that must report the source for a positive diagnosis.
    pub required_detections: u32,
    /// False reports tolerated before the mission counts as a false positive.
    pub false_detections: u32,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        default_params()
    }
}

/// Parameter-table defaults.
pub fn default_params() -> ScenarioParams {
    ScenarioParams {
        vessel_radius: 5.0,
        vessel_length: 1000.0,
        vessel_density: 500.0,
        tissue_volume: 1.0,
        source_length: 30.0,
        source_flux: 56.0,
        fluid_density: 1.0,
        viscosity: 1e-2,
        avg_velocity: 1000.0,
        temperature: 310.0,
        robot_radius: 1.0,
        robot_density: 200.0,
        robot_diffusion: 0.076,
        chem_diffusion: 100.0,
        c_source: 1.8,
        c_background: 6e-3,
        measure_time: 0.01,
        threshold: 10,
        task_time: 1000.0,
        required_detections: 1,
        false_detections: 1,
    }
}

impl ScenarioParams {
    pub fn robot_density_per_um3(&self) -> f64 {
        self.robot_density / UM3_PER_MM3
    }

    /// Number of small vessels in the tissue volume.
    pub fn vessel_count(&self) -> f64 {
        self.vessel_density * self.tissue_volume * (UM3_PER_CM3 / UM3_PER_MM3)
    }

    /// Fraction of tissue volume occupied by small vessels.
    pub fn vessel_volume_fraction(&self) -> f64 {
        let vessel_volume =
            std::f64::consts::PI * self.vessel_radius.powi(2) * self.vessel_length;
        self.vessel_density / UM3_PER_MM3 * vessel_volume
    }

    /// Largest radial coordinate a robot center can reach.
    pub fn max_robot_radius(&self) -> f64 {
        self.vessel_radius - self.robot_radius
    }

    /// Molecules per second released by the whole source patch.
    pub fn source_production_rate(&self) -> f64 {
        self.source_flux * 2.0 * std::f64::consts::PI * self.vessel_radius * self.source_length
    }

    /// Capture-rate prefactor 4πDa, μm³/s.
    pub fn capture_coefficient(&self) -> f64 {
        4.0 * std::f64::consts::PI * self.chem_diffusion * self.robot_radius
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }
}

/// One failed parameter constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub key: String,
    pub constraint: String,
}

impl Violation {
    pub fn new(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            constraint: constraint.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.constraint)
    }
}

/// Returns every invariant the parameters break; empty when valid.
pub fn validate(p: &ScenarioParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let positive = [
        ("vessel_radius", p.vessel_radius),
        ("vessel_length", p.vessel_length),
        ("vessel_density", p.vessel_density),
        ("tissue_volume", p.tissue_volume),
        ("source_length", p.source_length),
        ("fluid_density", p.fluid_density),
        ("viscosity", p.viscosity),
        ("avg_velocity", p.avg_velocity),
        ("temperature", p.temperature),
        ("robot_radius", p.robot_radius),
        ("robot_density", p.robot_density),
        ("robot_diffusion", p.robot_diffusion),
        ("chem_diffusion", p.chem_diffusion),
        ("measure_time", p.measure_time),
        ("task_time", p.task_time),
    ];
    for (key, value) in positive {
        // NaN fails this comparison too
        if !(value > 0.0 && value.is_finite()) {
            out.push(Violation::new(key, format!("{key} > 0")));
        }
    }
    let non_negative = [
        ("source_flux", p.source_flux),
        ("c_source", p.c_source),
        ("c_background", p.c_background),
    ];
    for (key, value) in non_negative {
        if !(value >= 0.0 && value.is_finite()) {
            out.push(Violation::new(key, format!("{key} ≥ 0")));
        }
    }
    if p.threshold < 1 {
        out.push(Violation::new("threshold", "C_threshold ≥ 1"));
    }
    if p.required_detections < 1 {
        out.push(Violation::new("required_detections", "required_detections ≥ 1"));
    }
    if p.false_detections < 1 {
        out.push(Violation::new("false_detections", "false_detections ≥ 1"));
    }
    if !(p.robot_radius < p.vessel_radius) {
        out.push(Violation::new("robot_radius", "robot_radius < vessel_radius"));
    }
    out
}
