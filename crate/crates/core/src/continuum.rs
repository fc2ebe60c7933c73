//! Fleet-level detection analysis.
//!
//! Monitoring robots are depleted by the detection hazard as they are carried
//! through the vessel. Robot diffusion is negligible against advection
//! (Péclet ≈ 7·10⁴), so the monitor density is solved exactly along each
//! streamline: `d ln R_monitor / dt = −α(r, x(t))`. Per-transit detection
//! probabilities are flux-weighted averages over entry radii, and the fleet
//! rates scale them by the robot entry rates.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chemfield::ScalarField;
use crate::error::{Error, Result};
use crate::hydro::{poiseuille, Position};
use crate::params::{ScenarioParams, UM3_PER_LITER, UM3_PER_M3};
use crate::poisson_detect::{
    background_counts, detection_hazard, expected_counts_with_step, steps_for, tail_prob, PATH_STEP,
};

/// Detection rates for one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRates {
    pub threshold: u32,
    /// True positives from the single source vessel, 1/s.
    pub sigma_source: f64,
    /// False positives from all source-free vessels, 1/s.
    pub sigma_background: f64,
    /// Probability a robot transiting the source vessel detects.
    pub p_transit_source: f64,
    /// Same for a vessel without a source.
    pub p_transit_background: f64,
}

/// One point of a mission ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: u32,
    /// Probability at least `n` robots report the source within the task time.
    pub p_true: f64,
    /// Probability of at least `n_false` false reports within the task time.
    pub p_false: f64,
}

/// Quadrature controls for the characteristic integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumOptions {
    /// Largest time step along a streamline, s.
    pub path_step: f64,
    /// Width of the radial sub-intervals carrying 4 Gauss points each, μm.
    pub radial_cell: f64,
}

impl Default for ContinuumOptions {
    fn default() -> Self {
        Self {
            path_step: PATH_STEP,
            radial_cell: 0.25,
        }
    }
}

impl ContinuumOptions {
    pub fn for_field(f: Option<&ScalarField>, path_step: f64) -> Self {
        Self {
            path_step,
            radial_cell: f.map_or(0.25, |f| f.grid.dr),
        }
    }
}

/// Robots entering one vessel per second, `ρ_robot·πR²·v_avg`.
pub fn vessel_entry_rate(p: &ScenarioParams) -> f64 {
    p.robot_density_per_um3() * PI * p.vessel_radius.powi(2) * p.avg_velocity
}

/// Robots entering any small vessel of the tissue per second.
pub fn tissue_entry_rate(p: &ScenarioParams) -> f64 {
    p.vessel_count() * vessel_entry_rate(p)
}

/// Independent measurement windows per transit, `L / (v_avg·T_measure)`.
pub fn windows_per_transit(p: &ScenarioParams) -> f64 {
    p.vessel_length / (p.avg_velocity * p.measure_time)
}

/// False-positive rate over the whole tissue: each transit offers
/// `L/(v_avg·T_measure)` independent windows, each reaching the threshold
/// with the background Poisson tail probability.
pub fn false_positive_rate(p: &ScenarioParams) -> f64 {
    windows_per_transit(p)
        * tissue_entry_rate(p)
        * tail_prob(background_counts(p), p.threshold as u64)
}

/// Probability that a robot entering at radius `r` detects during the
/// transit from `x_min` to `x_min + L`.
pub fn streamline_detection_prob(
    f: Option<&ScalarField>,
    p: &ScenarioParams,
    r: f64,
    opts: &ContinuumOptions,
) -> Result<f64> {
    let v = poiseuille(r, p.vessel_radius, p.avg_velocity);
    if v <= 0.0 {
        return Ok(0.0);
    }
    let transit = p.vessel_length / v;
    let field = match f {
        None => {
            let hazard = detection_hazard(0.0, 0.0, p);
            return Ok(-(-hazard * transit).exp_m1());
        }
        Some(field) => field,
    };

    let x0 = field.grid.x_min;
    let line = field.streamline(r);
    let coeff = p.capture_coefficient();
    // window covered by exactly `nw` steps
    let (nw, h) = steps_for(p.measure_time, opts.path_step);
    let full = (transit / h).floor() as usize;
    let mut samples = Vec::with_capacity(full + 1);
    for m in 0..=full {
        samples.push(line.at(x0 + v * m as f64 * h));
    }

    // running trapezoid of the trailing window; samples before entry are 0
    let mut window_sum = 0.0;
    let mut exposure = 0.0;
    let mut prev_hazard = 0.0;
    for (m, &c) in samples.iter().enumerate() {
        window_sum += c;
        let oldest = if m >= nw {
            let o = samples[m - nw];
            if m > nw {
                window_sum -= samples[m - nw - 1];
            }
            o
        } else {
            0.0
        };
        let k = coeff * h * (window_sum - 0.5 * (c + oldest));
        let hazard = detection_hazard(c, k, p);
        if m > 0 {
            exposure += 0.5 * h * (hazard + prev_hazard);
        }
        prev_hazard = hazard;
    }
    let tail = transit - full as f64 * h;
    if tail > 0.0 {
        let end = Position::new(r, x0 + p.vessel_length);
        let k = expected_counts_with_step(field, end, p, opts.path_step)?;
        let hazard = detection_hazard(line.at(end.x), k, p);
        exposure += 0.5 * tail * (hazard + prev_hazard);
    }
    Ok(-(-exposure).exp_m1())
}

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
];

/// Entry radii and normalised flux weights `∝ v(r)·2πr` on `[0, R − a]`.
pub fn entry_quadrature(p: &ScenarioParams, radial_cell: f64) -> Vec<(f64, f64)> {
    let r_max = p.max_robot_radius();
    let cells = (r_max / radial_cell - 1e-9).ceil().max(1.0) as usize;
    let w = r_max / cells as f64;
    let mut nodes = Vec::with_capacity(4 * cells);
    for c in 0..cells {
        let mid = (c as f64 + 0.5) * w;
        for (xi, wi) in GAUSS4 {
            let r = mid + 0.5 * w * xi;
            let flux = poiseuille(r, p.vessel_radius, p.avg_velocity) * 2.0 * PI * r;
            nodes.push((r, 0.5 * w * wi * flux));
        }
    }
    let total: f64 = nodes.iter().map(|n| n.1).sum();
    for n in &mut nodes {
        n.1 /= total;
    }
    nodes
}

fn check_field(f: Option<&ScalarField>, with_source: bool) -> Result<Option<&ScalarField>> {
    if !with_source {
        return Ok(None);
    }
    let field = f.ok_or(Error::MissingField)?;
    if !(field.residual < field.grid.tolerance) {
        return Err(Error::NotConverged {
            residual: field.residual,
            iterations: 0,
            tolerance: field.grid.tolerance,
        });
    }
    Ok(Some(field))
}

/// Flux-weighted probability a transiting robot detects, with or without
/// the source plume.
pub fn per_robot_detection_prob(
    f: Option<&ScalarField>,
    p: &ScenarioParams,
    with_source: bool,
) -> Result<f64> {
    let opts = ContinuumOptions::for_field(f, PATH_STEP);
    per_robot_detection_prob_with(f, p, with_source, &opts)
}

pub fn per_robot_detection_prob_with(
    f: Option<&ScalarField>,
    p: &ScenarioParams,
    with_source: bool,
    opts: &ContinuumOptions,
) -> Result<f64> {
    let field = check_field(f, with_source)?;
    let nodes = entry_quadrature(p, opts.radial_cell);
    let probs: Result<Vec<f64>> = nodes
        .par_iter()
        .map(|&(r, _)| streamline_detection_prob(field, p, r, opts))
        .collect();
    Ok(probs?
        .iter()
        .zip(&nodes)
        .map(|(prob, &(_, w))| prob * w)
        .sum::<f64>()
        .clamp(0.0, 1.0))
}

/// `σ_source = σ₁ · P(detect | transit through the source vessel)`.
pub fn source_detection_rate(f: &ScalarField, p: &ScenarioParams) -> Result<f64> {
    Ok(vessel_entry_rate(p) * per_robot_detection_prob(Some(f), p, true)?)
}

/// All rates at `p.threshold`.
pub fn detection_rates(f: &ScalarField, p: &ScenarioParams) -> Result<DetectionRates> {
    let opts = ContinuumOptions::for_field(Some(f), PATH_STEP);
    detection_rates_with(f, p, &opts)
}

pub fn detection_rates_with(
    f: &ScalarField,
    p: &ScenarioParams,
    opts: &ContinuumOptions,
) -> Result<DetectionRates> {
    let p_src = per_robot_detection_prob_with(Some(f), p, true, opts)?;
    let p_bg = per_robot_detection_prob_with(None, p, false, opts)?;
    Ok(DetectionRates {
        threshold: p.threshold,
        sigma_source: vessel_entry_rate(p) * p_src,
        sigma_background: false_positive_rate(p),
        p_transit_source: p_src,
        p_transit_background: p_bg,
    })
}

/// Rates for each threshold, in the order given.
pub fn rate_sweep(
    f: &ScalarField,
    p: &ScenarioParams,
    thresholds: &[u32],
) -> Result<Vec<DetectionRates>> {
    thresholds
        .iter()
        .map(|&threshold| {
            let pt = ScenarioParams {
                threshold,
                ..p.clone()
            };
            detection_rates(f, &pt)
        })
        .collect()
}

/// ROC points from precomputed rates.
pub fn roc_from_rates(
    rates: &[DetectionRates],
    task_time: f64,
    required: u32,
    n_false: u32,
) -> Vec<RocPoint> {
    rates
        .iter()
        .map(|r| RocPoint {
            threshold: r.threshold,
            p_true: tail_prob((r.sigma_source + r.sigma_background) * task_time, required as u64),
            p_false: tail_prob(r.sigma_background * task_time, n_false as u64),
        })
        .collect()
}

/// Mission ROC curve over `thresholds` for `p.task_time`.
pub fn mission_roc(
    f: &ScalarField,
    p: &ScenarioParams,
    thresholds: &[u32],
    required: u32,
    n_false: u32,
) -> Result<Vec<RocPoint>> {
    let rates = rate_sweep(f, p, thresholds)?;
    Ok(roc_from_rates(&rates, p.task_time, required, n_false))
}

/// Highest `p_true` among points with `p_false < max_false`.
pub fn best_point(points: &[RocPoint], max_false: f64) -> Option<RocPoint> {
    points
        .iter()
        .filter(|pt| pt.p_false < max_false)
        .copied()
        .max_by(|a, b| a.p_true.total_cmp(&b.p_true))
}

/// Source output diluted into a blood sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BloodSample {
    /// Concentration added by the source, molecule/m³.
    pub added_per_m3: f64,
    /// Added concentration relative to the background.
    pub ratio_to_background: f64,
}

/// Concentration reached when everything the source releases over
/// `duration` seconds is mixed into `volume_liters` of blood.
pub fn blood_sample_comparison(
    p: &ScenarioParams,
    duration: f64,
    volume_liters: f64,
) -> Result<BloodSample> {
    if !(duration >= 0.0) || !(volume_liters > 0.0) {
        return Err(Error::Invalid(vec![crate::params::Violation::new(
            "blood_sample",
            "duration ≥ 0 and volume > 0",
        )]));
    }
    let per_um3 = p.source_production_rate() * duration / (volume_liters * UM3_PER_LITER);
    let ratio = if per_um3 == 0.0 { 0.0 } else { per_um3 / p.c_background };
    Ok(BloodSample {
        added_per_m3: per_um3 * UM3_PER_M3,
        ratio_to_background: ratio,
    })
}
