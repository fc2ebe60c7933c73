//! Flow and motion primitives: Reynolds number, the Poiseuille profile,
//! Stokes drag, Brownian spread and passive streamline advection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ScenarioParams;

/// Axisymmetric location in the vessel: radial distance from the axis and
/// axial coordinate (positive downstream), both in μm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub r: f64,
    pub x: f64,
}

impl Position {
    pub fn new(r: f64, x: f64) -> Self {
        Self { r, x }
    }
}

/// Reynolds number `sρv/η` for an object of `size_um` moving at `speed_um_s`
/// through fluid of density g/cm³ and viscosity g/(cm·s).
pub fn reynolds(size_um: f64, speed_um_s: f64, density: f64, viscosity: f64) -> f64 {
    const CM_PER_UM: f64 = 1e-4;
    (size_um * CM_PER_UM) * density * (speed_um_s * CM_PER_UM) / viscosity
}

/// Axial speed at radius `r` (μm/s): `2 v_avg (1 - (r/R)²)`.
pub fn velocity_profile(r: f64, p: &ScenarioParams) -> Result<f64> {
    // small tolerance so R computed as a sum of grid steps still counts
    if !(r >= 0.0 && r <= p.vessel_radius * (1.0 + 1e-12)) {
        return Err(Error::OutOfDomain {
            r,
            x: f64::NAN,
            domain: "vessel cross-section",
        });
    }
    Ok(poiseuille(r, p.vessel_radius, p.avg_velocity))
}

/// Poiseuille speed without range checks.
#[inline]
pub(crate) fn poiseuille(r: f64, radius: f64, avg_velocity: f64) -> f64 {
    let s = r / radius;
    (2.0 * avg_velocity * (1.0 - s * s)).max(0.0)
}

/// Mean axial speed over the annulus `[r0, r1]`, i.e. volumetric flux
/// through it divided by its area.
pub(crate) fn annulus_mean_velocity(r0: f64, r1: f64, radius: f64, avg_velocity: f64) -> f64 {
    if r1 <= r0 {
        return poiseuille(r0, radius, avg_velocity);
    }
    // ∫ 2 v_avg (1 - r²/R²) 2πr dr / π(r1² - r0²)
    let (a, b) = (r0 * r0, r1 * r1);
    2.0 * avg_velocity * (1.0 - (a + b) / (2.0 * radius * radius))
}

/// Stokes drag `6πaηv` in newtons for radius in μm, speed in μm/s and
/// viscosity in g/(cm·s).
pub fn stokes_drag(radius_um: f64, speed_um_s: f64, viscosity: f64) -> f64 {
    const PA_S_PER_POISE: f64 = 0.1;
    const M_PER_UM: f64 = 1e-6;
    6.0 * std::f64::consts::PI
        * (radius_um * M_PER_UM)
        * (viscosity * PA_S_PER_POISE)
        * (speed_um_s * M_PER_UM)
}

/// Three-dimensional RMS Brownian displacement `√(6Dt)`, μm.
pub fn brownian_rms(diffusion_um2_s: f64, t: f64) -> f64 {
    (6.0 * diffusion_um2_s * t).sqrt()
}

/// Where a passively carried robot was `tau` seconds ago (negative `tau`
/// looks forward). Streamlines never cross, so only `x` changes.
pub fn advect(pos: Position, tau: f64, p: &ScenarioParams) -> Position {
    let v = poiseuille(pos.r, p.vessel_radius, p.avg_velocity);
    Position {
        r: pos.r,
        x: pos.x - v * tau,
    }
}
