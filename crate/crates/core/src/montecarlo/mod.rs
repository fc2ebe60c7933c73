//! Discrete-event validation of the continuum analysis.
//!
//! Each trial follows one robot through one vessel in fixed time bins. Counts
//! per bin are Poisson with mean `4πDa(C + c)·Δt`; they are generated exactly
//! as the bin-wise increments of an inhomogeneous Poisson process, by walking
//! unit-exponential gaps through the cumulative intensity. A robot detects in
//! the first bin where the trailing window of `⌈T_measure/Δt⌉` bins holds at
//! least `C_threshold` counts.
//!
//! Every trial draws from its own ChaCha stream keyed by
//! `(master_seed, trial_index)`, and aggregation is an integer reduction, so
//! results do not depend on how trials are scheduled across threads.

mod window;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use window::SlidingWindow;

use crate::chemfield::ScalarField;
use crate::continuum::{per_robot_detection_prob_with, ContinuumOptions};
use crate::error::{Error, Result};
use crate::hydro::{poiseuille, Position};
use crate::params::ScenarioParams;
use crate::poisson_detect::PATH_STEP;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Trials handled per parallel work item.
const CHUNK: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub with_source: bool,
    /// Time bin, s.
    pub dt: f64,
    /// Radial Brownian steps with reflection at the axis and at `R − a`.
    pub brownian: bool,
    pub n_trials: u64,
    pub master_seed: u64,
    /// Fixed entry radius instead of the flux-weighted draw.
    pub entry_radius: Option<f64>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            with_source: true,
            dt: 1e-4,
            brownian: false,
            n_trials: 100_000,
            master_seed: 1,
            entry_radius: None,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self, p: &ScenarioParams) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= p.measure_time / 10.0 * (1.0 + 1e-12)) {
            return Err(Error::Trial(format!(
                "time bin {} s must lie in (0, T_measure/10]",
                self.dt
            )));
        }
        if self.n_trials < 1 {
            return Err(Error::Trial("n_trials must be at least 1".into()));
        }
        if let Some(r) = self.entry_radius {
            if !(r >= 0.0 && r <= p.max_robot_radius()) {
                return Err(Error::Trial(format!(
                    "entry radius {r} um outside [0, R - a]"
                )));
            }
        }
        Ok(())
    }

    pub fn window_bins(&self, p: &ScenarioParams) -> usize {
        ((p.measure_time / self.dt) - 1e-9).ceil().max(1.0) as usize
    }
}

/// What happened during one transit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitOutcome {
    /// Reached `p.threshold` at some point.
    pub detected: bool,
    /// Bin-midpoint position where the threshold was first reached.
    pub first_detection: Option<Position>,
    /// Largest trailing-window count seen; detection at threshold `E` is
    /// `max_window_count >= E`.
    pub max_window_count: u32,
    /// Every count collected during the transit.
    pub total_counts: u64,
    pub entry_radius: f64,
    pub exit_radius: f64,
    /// Simulated time, a whole number of bins, s.
    pub duration: f64,
}

/// Detection-probability estimate with a Wilson-score 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialEstimate {
    pub threshold: u32,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_trials: u64,
    pub n_detections: u64,
    pub seed: u64,
}

/// Wilson-score 95% interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    wilson_interval_z(k, n, Z_95)
}

/// Wilson-score interval at normal quantile `z`.
pub fn wilson_interval_z(k: u64, n: u64, z: f64) -> (f64, f64) {
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if k == 0 { 0.0 } else { (centre - half).clamp(0.0, p) };
    let hi = if k == n { 1.0 } else { (centre + half).clamp(p, 1.0) };
    (lo, hi)
}

impl TrialEstimate {
    fn new(threshold: u32, n_detections: u64, n_trials: u64, seed: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(n_detections, n_trials);
        Self {
            threshold,
            p_hat: n_detections as f64 / n_trials as f64,
            ci_low,
            ci_high,
            n_trials,
            n_detections,
            seed,
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        p >= self.ci_low && p <= self.ci_high
    }

    /// Same counts with the interval recomputed at quantile `z`.
    pub fn with_z(self, z: f64) -> Self {
        let (ci_low, ci_high) = wilson_interval_z(self.n_detections, self.n_trials, z);
        Self {
            ci_low,
            ci_high,
            ..self
        }
    }
}

/// Random stream for one trial.
pub fn trial_rng(master_seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}

/// Inverse-CDF draw of an entry radius with density `∝ v(r)·r` on
/// `[0, r_max]`.
pub fn sample_entry_radius(u: f64, vessel_radius: f64, r_max: f64) -> f64 {
    // in s = r² the density is ∝ 1 − s/R², so the CDF is quadratic
    let r2 = vessel_radius * vessel_radius;
    let s_max = r_max * r_max;
    let f_max = s_max - s_max * s_max / (2.0 * r2);
    let disc = (1.0 - 2.0 * u * f_max / r2).max(0.0);
    (r2 * (1.0 - disc.sqrt())).clamp(0.0, s_max).sqrt()
}

struct Tracker {
    window: SlidingWindow,
    threshold: u32,
    max: u32,
    total: u64,
    first: Option<Position>,
}

impl Tracker {
    fn new(bins: usize, threshold: u32) -> Self {
        Self {
            window: SlidingWindow::new(bins),
            threshold,
            max: 0,
            total: 0,
            first: None,
        }
    }

    #[inline]
    fn record(&mut self, bin: u64, count: u32, at: impl FnOnce() -> Position) {
        let sum = self.window.record(bin, count);
        self.total += count as u64;
        self.max = self.max.max(sum);
        if self.first.is_none() && sum >= self.threshold {
            self.first = Some(at());
        }
    }
}

/// Simulates one transit from `x_min` to `x_min + L`.
pub fn simulate_transit(
    f: Option<&ScalarField>,
    p: &ScenarioParams,
    cfg: &TrialConfig,
    trial_index: u64,
) -> Result<TransitOutcome> {
    cfg.validate(p)?;
    let field = if cfg.with_source {
        Some(f.ok_or(Error::MissingField)?)
    } else {
        None
    };
    Ok(run_transit(field, p, cfg, trial_index))
}

fn run_transit(
    field: Option<&ScalarField>,
    p: &ScenarioParams,
    cfg: &TrialConfig,
    trial_index: u64,
) -> TransitOutcome {
    let mut rng = trial_rng(cfg.master_seed, trial_index);
    let r_max = p.max_robot_radius();
    let r0 = match cfg.entry_radius {
        Some(r) => r,
        None => sample_entry_radius(rng.random::<f64>(), p.vessel_radius, r_max),
    };
    let x_start = field.map_or(0.0, |f| f.grid.x_min);
    let x_end = x_start + p.vessel_length;
    let dt = cfg.dt;
    let coeff = p.capture_coefficient();
    let mut tracker = Tracker::new(cfg.window_bins(p), p.threshold.max(1));

    if field.is_none() && !cfg.brownian {
        // constant intensity and a fixed streamline: jump event to event
        let v = poiseuille(r0, p.vessel_radius, p.avg_velocity);
        let bins = if v > 0.0 {
            (p.vessel_length / (v * dt)).ceil() as u64
        } else {
            0
        };
        let per_bin = coeff * p.c_background * dt;
        if per_bin > 0.0 {
            let mut t: f64 = rng.sample::<f64, _>(Exp1) / per_bin;
            let mut pending: Option<(u64, u32)> = None;
            while t < bins as f64 {
                let bin = t as u64;
                match pending {
                    Some((b, ref mut n)) if b == bin => *n += 1,
                    _ => {
                        if let Some((b, n)) = pending {
                            tracker.record(b, n, || bin_position(r0, x_start, v, b, dt));
                        }
                        pending = Some((bin, 1));
                    }
                }
                t += rng.sample::<f64, _>(Exp1) / per_bin;
            }
            if let Some((b, n)) = pending {
                tracker.record(b, n, || bin_position(r0, x_start, v, b, dt));
            }
        }
        return tracker.finish(r0, r0, bins as f64 * dt);
    }

    let step_sigma = (2.0 * p.robot_diffusion * dt).sqrt();
    let mut r = r0;
    let mut x = x_start;
    let mut bin = 0u64;
    let mut remaining: f64 = rng.sample(Exp1);
    while x < x_end {
        let v = poiseuille(r, p.vessel_radius, p.avg_velocity);
        if v <= 0.0 {
            break;
        }
        let x_mid = x + 0.5 * v * dt;
        let c_src = field.map_or(0.0, |f| f.streamline(r).at(x_mid));
        remaining -= coeff * (c_src + p.c_background) * dt;
        let mut count = 0u32;
        while remaining <= 0.0 {
            count += 1;
            remaining += rng.sample::<f64, _>(Exp1);
        }
        if count > 0 {
            tracker.record(bin, count, || Position::new(r, x_mid));
        }
        x += v * dt;
        bin += 1;
        if cfg.brownian {
            let step: f64 = rng.sample(StandardNormal);
            r = reflect(r + step_sigma * step, r_max);
        }
    }
    tracker.finish(r0, r, bin as f64 * dt)
}

fn bin_position(r: f64, x_start: f64, v: f64, bin: u64, dt: f64) -> Position {
    Position::new(r, x_start + v * (bin as f64 + 0.5) * dt)
}

/// Folds `r` back into `[0, r_max]`.
fn reflect(mut r: f64, r_max: f64) -> f64 {
    loop {
        if r < 0.0 {
            r = -r;
        } else if r > r_max {
            r = 2.0 * r_max - r;
        } else {
            return r;
        }
    }
}

impl Tracker {
    fn finish(self, entry: f64, exit: f64, duration: f64) -> TransitOutcome {
        TransitOutcome {
            detected: self.first.is_some(),
            first_detection: self.first,
            max_window_count: self.max,
            total_counts: self.total,
            entry_radius: entry,
            exit_radius: exit,
            duration,
        }
    }
}

/// Applies `visit` to every trial outcome and reduces the per-chunk results
/// with `merge` in trial order.
pub fn fold_trials<T, V, M>(
    f: Option<&ScalarField>,
    p: &ScenarioParams,
    cfg: &TrialConfig,
    init: impl Fn() -> T + Sync,
    visit: V,
    merge: M,
) -> Result<T>
where
    T: Send,
    V: Fn(&mut T, &TransitOutcome) + Sync,
    M: Fn(T, T) -> T,
{
    cfg.validate(p)?;
    let field = if cfg.with_source {
        Some(f.ok_or(Error::MissingField)?)
    } else {
        None
    };
    let chunks = cfg.n_trials.div_ceil(CHUNK);
    let parts: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            let end = ((c + 1) * CHUNK).min(cfg.n_trials);
            for i in c * CHUNK..end {
                let out = run_transit(field, p, cfg, i);
                visit(&mut acc, &out);
            }
            acc
        })
        .collect();
    Ok(parts.into_iter().fold(init(), merge))
}

/// Detection-probability estimate at `p.threshold`.
pub fn estimate_detection_prob(
    f: Option<&ScalarField>,
    p: &ScenarioParams,
    cfg: &TrialConfig,
) -> Result<TrialEstimate> {
    let detections = fold_trials(
        f,
        p,
        cfg,
        || 0u64,
        |n, out| *n += out.detected as u64,
        |a, b| a + b,
    )?;
    Ok(TrialEstimate::new(
        p.threshold,
        detections,
        cfg.n_trials,
        cfg.master_seed,
    ))
}

/// Estimates for several thresholds from the same trials: a transit detects
/// at threshold `E` iff its largest window count reaches `E`.
pub fn estimate_curve(
    f: Option<&ScalarField>,
    p: &ScenarioParams,
    cfg: &TrialConfig,
    thresholds: &[u32],
) -> Result<Vec<TrialEstimate>> {
    if thresholds.is_empty() {
        return Ok(Vec::new());
    }
    let cap = thresholds.iter().copied().max().unwrap_or(1) as usize;
    // histogram[m] = trials whose max window count is min(m, cap)
    let histogram = fold_trials(
        f,
        p,
        cfg,
        || vec![0u64; cap + 1],
        |h, out| h[(out.max_window_count as usize).min(cap)] += 1,
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    )?;
    Ok(thresholds
        .iter()
        .map(|&e| {
            let detections: u64 = histogram[(e as usize).min(cap)..].iter().sum();
            TrialEstimate::new(e, detections, cfg.n_trials, cfg.master_seed)
        })
        .collect())
}

/// Which vessel a comparison row refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Source,
    Background,
}

impl Case {
    pub fn as_str(self) -> &'static str {
        match self {
            Case::Source => "source",
            Case::Background => "background",
        }
    }
}

/// Monte Carlo vs continuum per-transit detection probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub case: Case,
    pub threshold: u32,
    pub mc: TrialEstimate,
    pub p_analytic: f64,
    /// `p_analytic / p_mc`; 1 when both vanish.
    pub ratio: f64,
    pub analytic_in_ci: bool,
}

impl ComparisonRow {
    /// Within the Monte Carlo interval or within `rel` relative of the point
    /// estimate.
    pub fn agrees(&self, rel: f64) -> bool {
        self.analytic_in_ci || (self.ratio - 1.0).abs() <= rel
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub source_trials: u64,
    pub background_trials: u64,
    pub seed: u64,
    pub dt: f64,
    pub brownian: bool,
    /// Normal quantile for the Monte Carlo intervals.
    pub z: f64,
    /// Path quadrature step of the continuum side, s.
    pub path_step: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            source_trials: 100_000,
            background_trials: 10_000_000,
            seed: 1,
            dt: 1e-4,
            brownian: false,
            z: Z_95,
            path_step: PATH_STEP,
        }
    }
}

/// Runs both pipelines on the same parameters for the source vessel and a
/// source-free vessel.
pub fn compare_with_continuum(
    f: &ScalarField,
    p: &ScenarioParams,
    thresholds: &[u32],
    cc: &CompareConfig,
) -> Result<Vec<ComparisonRow>> {
    if thresholds.is_empty() {
        return Ok(Vec::new());
    }
    let opts = ContinuumOptions::for_field(Some(f), cc.path_step);
    let mut rows = Vec::with_capacity(2 * thresholds.len());
    for (case, trials) in [
        (Case::Source, cc.source_trials),
        (Case::Background, cc.background_trials),
    ] {
        let with_source = case == Case::Source;
        let cfg = TrialConfig {
            with_source,
            dt: cc.dt,
            brownian: cc.brownian,
            n_trials: trials,
            master_seed: cc.seed,
            entry_radius: None,
        };
        let estimates = estimate_curve(Some(f), p, &cfg, thresholds)?;
        for est in estimates {
            let est = est.with_z(cc.z);
            let pt = ScenarioParams {
                threshold: est.threshold,
                ..p.clone()
            };
            let analytic = per_robot_detection_prob_with(Some(f), &pt, with_source, &opts)?;
            let ratio = if est.p_hat > 0.0 {
                analytic / est.p_hat
            } else if analytic == 0.0 {
                1.0
            } else {
                f64::INFINITY
            };
            rows.push(ComparisonRow {
                case,
                threshold: est.threshold,
                mc: est,
                p_analytic: analytic,
                ratio,
                analytic_in_ci: est.contains(analytic),
            });
        }
    }
    Ok(rows)
}

/// Flux-weighted mean of `g(r)` over `[0, r_max]`, for tests and reports.
pub fn flux_average(p: &ScenarioParams, g: impl Fn(f64) -> f64) -> f64 {
    let n = 4000;
    let r_max = p.max_robot_radius();
    let h = r_max / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        let r = (i as f64 + 0.5) * h;
        let w = poiseuille(r, p.vessel_radius, p.avg_velocity) * 2.0 * PI * r;
        num += w * g(r);
        den += w;
    }
    num / den
}
