//! Counting statistics of diffusive molecule capture.
//!
//! A robot is an ideal absorbing sphere of radius `a` that samples the
//! undisturbed concentration at its center and collects molecules at rate
//! `4πDaC`. Counts in any interval are Poisson; the detection hazard is the
//! rate at which a robot holding `C_threshold − 1` counts in its trailing
//! window receives one more.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::chemfield::ScalarField;
use crate::error::{Error, Result};
use crate::hydro::{advect, Position};
use crate::params::ScenarioParams;

/// Expected counts in one trailing measurement window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountModel {
    /// Expected source-molecule counts.
    pub source: f64,
    /// Expected background counts.
    pub background: f64,
    /// Window length, s.
    pub window: f64,
    pub threshold: u32,
}

/// Capture rate `4πDaC` (counts/s) for an absorbing sphere.
pub fn capture_rate(diffusion: f64, radius: f64, conc: f64) -> f64 {
    4.0 * std::f64::consts::PI * diffusion * radius * conc
}

fn ln_pmf(mu: f64, n: u64) -> f64 {
    -mu + n as f64 * mu.ln() - ln_factorial(n)
}

/// `e^{−μ} μⁿ / n!`, evaluated in log space.
pub fn poisson_pmf(mu: f64, n: u64) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    ln_pmf(mu, n).exp()
}

/// `Pr(N ≥ e)` for `N ~ Poisson(μ)`.
///
/// Sums whichever side of the distribution is the small one, so tails far
/// below machine epsilon keep their relative precision.
pub fn tail_prob(mu: f64, e: u64) -> f64 {
    if e == 0 {
        return 1.0;
    }
    if mu == 0.0 {
        return 0.0;
    }
    let p = if (e as f64) > mu {
        // upper tail: terms decrease monotonically from n = e
        let mut term = poisson_pmf(mu, e);
        let mut sum = 0.0;
        let mut n = e;
        while term > 0.0 && term > sum * 1e-17 {
            sum += term;
            n += 1;
            term *= mu / n as f64;
        }
        sum
    } else {
        1.0 - lower_sum(mu, e)
    };
    p.clamp(0.0, 1.0)
}

/// `Σ_{n<e} Po(μ, n)`.
fn lower_sum(mu: f64, e: u64) -> f64 {
    // walk down from the largest term so nothing underflows prematurely
    let mut term = poisson_pmf(mu, e - 1);
    let mut sum = 0.0;
    let mut n = e - 1;
    loop {
        sum += term;
        if n == 0 || term < sum * 1e-17 {
            break;
        }
        term *= n as f64 / mu;
        n -= 1;
    }
    sum
}

/// Expected background counts `k = 4πDa·c·T_measure`.
pub fn background_counts(p: &ScenarioParams) -> f64 {
    p.capture_coefficient() * p.c_background * p.measure_time
}

/// Quadrature nodes covering `[0, span]` with spacing at most `max_step`.
pub(crate) fn steps_for(span: f64, max_step: f64) -> (usize, f64) {
    let n = ((span / max_step) - 1e-9).ceil().max(1.0) as usize;
    (n, span / n as f64)
}

/// Default path quadrature step, s.
pub const PATH_STEP: f64 = 1e-4;

/// Expected source counts `K` collected over the trailing window by a robot
/// now at `pos`, integrating along its past streamline with the trapezoid
/// rule (step ≤ [`PATH_STEP`]). Past positions upstream of the grid
/// contribute nothing.
pub fn expected_counts(f: &ScalarField, pos: Position, p: &ScenarioParams) -> Result<f64> {
    expected_counts_with_step(f, pos, p, PATH_STEP)
}

pub fn expected_counts_with_step(
    f: &ScalarField,
    pos: Position,
    p: &ScenarioParams,
    max_step: f64,
) -> Result<f64> {
    if !(pos.r >= 0.0 && pos.r <= p.max_robot_radius()) {
        return Err(Error::OutOfDomain {
            r: pos.r,
            x: pos.x,
            domain: "region reachable by robot centers",
        });
    }
    let line = f.streamline(pos.r);
    let (n, h) = steps_for(p.measure_time, max_step);
    let mut integral = 0.0;
    for m in 0..=n {
        let back = advect(pos, m as f64 * h, p);
        let w = if m == 0 || m == n { 0.5 } else { 1.0 };
        integral += w * line.at(back.x);
    }
    Ok(p.capture_coefficient() * integral * h)
}

/// Hazard (1/s) that a monitoring robot first crosses the threshold, given
/// the local source concentration and the source counts `K` expected in its
/// window. With `c_here = 0` and `k_source = 0` this is the false-positive
/// hazard.
pub fn detection_hazard(c_here: f64, k_source: f64, p: &ScenarioParams) -> f64 {
    let mu = k_source + background_counts(p);
    p.capture_coefficient() * (c_here + p.c_background) * threshold_ratio(mu, p.threshold)
}

/// `Po(μ, E−1) / Σ_{n<E} Po(μ, n)`: probability of sitting one count below
/// the threshold given the threshold has not been reached.
pub fn threshold_ratio(mu: f64, threshold: u32) -> f64 {
    if threshold <= 1 {
        return 1.0;
    }
    if mu == 0.0 {
        return 0.0;
    }
    let top = threshold as u64 - 1;
    if mu >= top as f64 {
        // terms shrink walking down from the top one
        let (mut term, mut sum) = (1.0, 1.0);
        for n in (1..=top).rev() {
            term *= n as f64 / mu;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        return 1.0 / sum;
    }
    if mu < 500.0 {
        // μⁿ/n! stays finite for μ < 500; the top term may underflow to 0
        let (mut term, mut sum) = (1.0, 1.0);
        for n in 1..=top {
            term *= mu / n as f64;
            sum += term;
        }
        return term / sum;
    }
    // e^{−μ} cancels; log-sum-exp over ln(μⁿ/n!) for n < E
    let ln_mu = mu.ln();
    let ln_term = |n: u64| n as f64 * ln_mu - ln_factorial(n);
    let ln_max = ln_term(mu.floor() as u64);
    let denom: f64 = (0..=top).map(|n| (ln_term(n) - ln_max).exp()).sum();
    ((ln_term(top) - ln_max).exp() / denom).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemfield::GridSpec;
    use crate::params::default_params;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Summation oracle: pmf by plain recurrence from n = 0.
    fn cumulative_oracle(mu: f64, e: u64) -> f64 {
        let mut term = (-mu).exp();
        let mut sum = 0.0;
        for n in 0..e {
            sum += term;
            term *= mu / (n + 1) as f64;
        }
        sum
    }

    #[test]
    fn capture_rates() {
        assert_relative_eq!(capture_rate(100.0, 1.0, 6e-3), 7.5398, max_relative = 1e-4);
        assert_relative_eq!(capture_rate(100.0, 1.0, 1.8), 2261.95, max_relative = 1e-5);
        assert_eq!(capture_rate(100.0, 1.0, 0.0), 0.0);
    }

    #[test]
    fn pmf_values() {
        assert_eq!(poisson_pmf(0.0, 0), 1.0);
        assert_eq!(poisson_pmf(0.0, 3), 0.0);
        assert_relative_eq!(poisson_pmf(2.0, 0), (-2.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(poisson_pmf(2.0, 0), 0.1353, max_relative = 1e-3);
        // large n stays finite
        assert!(poisson_pmf(900.0, 1000) > 0.0);
    }

    #[test]
    fn pmf_normalises() {
        for mu in [0.01, 0.5, 1.0, 7.3, 20.0, 50.0] {
            let total: f64 = (0..400).map(|n| poisson_pmf(mu, n)).sum();
            assert!((total - 1.0).abs() < 1e-12, "mu={mu} total={total}");
        }
    }

    #[test]
    fn tail_examples() {
        assert_eq!(tail_prob(0.08, 0), 1.0);
        assert_relative_eq!(tail_prob(0.08, 1), 1.0 - (-0.08f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(tail_prob(0.08, 1), 0.0769, max_relative = 1e-3);
        let two = 1.0 - cumulative_oracle(0.08, 2);
        assert_relative_eq!(tail_prob(0.08, 2), two, max_relative = 1e-10);
        assert_relative_eq!(tail_prob(0.08, 2), 3.03e-3, max_relative = 2e-3);
        assert_eq!(tail_prob(0.0, 1), 0.0);
    }

    #[test]
    fn deep_tail_keeps_relative_precision() {
        // leading term dominates: e^{-μ} μ^10/10! (1 + μ/11 + ...)
        let mu: f64 = 0.0754;
        let lead = (-mu).exp() * mu.powi(10) / 3_628_800.0;
        let got = tail_prob(mu, 10);
        assert!(got > lead && got < lead * (1.0 + mu / 10.0));
    }

    #[test]
    fn background_counts_defaults() {
        let p = default_params();
        assert_relative_eq!(background_counts(&p), 0.075398, max_relative = 1e-4);
        let none = ScenarioParams {
            c_background: 0.0,
            ..p.clone()
        };
        assert_eq!(background_counts(&none), 0.0);
        let longer = ScenarioParams {
            measure_time: 2.0 * p.measure_time,
            ..p.clone()
        };
        assert_relative_eq!(background_counts(&longer), 2.0 * background_counts(&p), max_relative = 1e-15);
    }

    #[test]
    fn hazard_examples() {
        let p = ScenarioParams {
            threshold: 1,
            ..default_params()
        };
        assert_relative_eq!(
            detection_hazard(0.3, 4.0, &p),
            capture_rate(100.0, 1.0, 0.3 + 6e-3),
            max_relative = 1e-14
        );
        let silent = ScenarioParams {
            threshold: 3,
            c_background: 0.0,
            ..default_params()
        };
        assert_eq!(detection_hazard(0.0, 0.0, &silent), 0.0);
        // C_here = 0, K = 0, k = 0.08 fixed by choosing c accordingly
        let p2 = ScenarioParams {
            threshold: 2,
            c_background: 0.08 / (4.0 * std::f64::consts::PI * 100.0 * 0.01),
            ..default_params()
        };
        let gamma = capture_rate(100.0, 1.0, p2.c_background);
        assert_relative_eq!(detection_hazard(0.0, 0.0, &p2), gamma * 0.08 / 1.08, max_relative = 1e-12);
        // the quoted 7.54 × 0.08/1.08 = 0.559
        assert_relative_eq!(7.54 * 0.08 / 1.08, 0.5585, max_relative = 1e-3);
    }

    #[test]
    fn ratio_matches_direct_formula() {
        for &(mu, e) in &[(0.08, 2u32), (3.0, 5), (25.0, 10), (0.5, 1), (200.0, 150), (0.07, 30), (700.0, 900)] {
            let num = poisson_pmf(mu, e as u64 - 1);
            let den: f64 = (0..e as u64).map(|n| poisson_pmf(mu, n)).sum();
            assert_relative_eq!(threshold_ratio(mu, e), num / den, max_relative = 1e-10);
        }
    }

    #[test]
    fn expected_counts_cases() {
        let p = default_params();
        let grid = GridSpec::default();
        let zero = ScalarField::uniform(grid.clone(), &p, 0.0).unwrap();
        assert_eq!(expected_counts(&zero, Position::new(1.0, 20.0), &p).unwrap(), 0.0);

        // uniform 1.8 everywhere on the grid; the path stays on the grid
        let flat = ScalarField::uniform(grid.clone(), &p, 1.8).unwrap();
        let k = expected_counts(&flat, Position::new(0.0, 100.0), &p).unwrap();
        let analytic = 4.0 * std::f64::consts::PI * 100.0 * 1.0 * 1.8 * 0.01;
        assert_relative_eq!(k, analytic, max_relative = 1e-12);
        assert_relative_eq!(k, 22.6, max_relative = 1e-3);

        let f = crate::chemfield::solve_source_field(&p, &grid).unwrap();
        let at_inlet = expected_counts(&f, Position::new(1.0, grid.x_min), &p).unwrap();
        assert!(at_inlet.abs() < 1e-12);
        assert!(expected_counts(&f, Position::new(4.5, 0.0), &p).is_err());
    }

    proptest! {
        #[test]
        fn tail_equals_one_minus_cumulative(mu in 0.0f64..50.0, e in 0u64..=100) {
            let oracle = 1.0 - cumulative_oracle(mu, e);
            prop_assert!((tail_prob(mu, e) - oracle.clamp(0.0, 1.0)).abs() < 1e-10);
        }

        #[test]
        fn hazard_non_increasing_in_threshold(c in 0.0f64..3.0, k in 0.0f64..40.0, e in 1u32..60) {
            let lo = ScenarioParams { threshold: e, ..default_params() };
            let hi = ScenarioParams { threshold: e + 1, ..default_params() };
            let a = detection_hazard(c, k, &lo);
            let b = detection_hazard(c, k, &hi);
            prop_assert!(b <= a * (1.0 + 1e-12));
        }
    }
}
