//! Observables along the tuned branch: susceptibility, its ν-derivative,
//! the specific heat, and the log-log exponent fits they feed.
//!
//! Everything here is pure aggregation over immutable tuned runs; the only
//! numerics are ordinary least squares on log-transformed points.

use crate::model::{ModelSpec, Result, RgError};
use crate::tune::TunedRun;

/// Susceptibility data at one tuned mass point.
#[derive(Debug, Clone, Copy)]
pub struct SusceptibilityPoint {
    pub m2: f64,
    pub nu_star: f64,
    /// Distance to the extrapolated critical point, t = ν* − ν_c.
    pub t: f64,
    pub chi: f64,
    pub chi_prime: f64,
    pub nu_inf: f64,
    pub nu_inf_prime: f64,
}

/// Specific-heat data at one tuned mass point.
#[derive(Debug, Clone, Copy)]
pub struct HeatPoint {
    pub m2: f64,
    pub t: f64,
    pub c_h: f64,
}

/// χ = 1/m² − ν_∞/m⁴ and χ′ = −ν′_∞/m⁴ from a converged run.
pub fn susceptibility(run: &TunedRun, nu_c: f64) -> Result<SusceptibilityPoint> {
    let m2 = run.tune.m2;
    let nu_inf = run
        .record
        .nu_infinity
        .ok_or_else(|| RgError::Domain("run has no converged nu_infinity".into()))?;
    let tangents = run
        .record
        .tangents
        .as_ref()
        .ok_or_else(|| RgError::Domain("run has no tangent trajectory".into()))?;
    let nu_inf_prime = tangents
        .last()
        .expect("tangent trajectory is nonempty")
        .nu1;
    let m4 = m2 * m2;
    Ok(SusceptibilityPoint {
        m2,
        nu_star: run.tune.nu_star,
        t: run.tune.nu_star - nu_c,
        chi: 1.0 / m2 - nu_inf / m4,
        chi_prime: -nu_inf_prime / m4,
        nu_inf,
        nu_inf_prime,
    })
}

/// c_H = −u″_∞ from a converged run.
pub fn specific_heat(run: &TunedRun, nu_c: f64) -> Result<HeatPoint> {
    let u2 = run
        .record
        .u2_infinity
        .ok_or_else(|| RgError::Domain("run has no converged u2_infinity".into()))?;
    Ok(HeatPoint {
        m2: run.tune.m2,
        t: run.tune.nu_star - nu_c,
        c_h: -u2,
    })
}

/// One least-squares exponent estimate with its provenance.
#[derive(Debug, Clone)]
pub struct ExponentFit {
    /// Slope of the fitted log-log line.
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the fit residuals.
    pub stderr: f64,
    /// Decades of the abscissa actually spanned by the window.
    pub window_decades: f64,
    pub points_used: usize,
    /// Exponent the slope translates to.
    pub estimate: f64,
    pub target: f64,
    pub deviation: f64,
}

/// ε-expansion target γ = 1 + γ̄ ε/α.
pub fn gamma_target(spec: &ModelSpec) -> f64 {
    1.0 + spec.gamma_bar() * spec.epsilon / spec.alpha()
}

/// ε-expansion target α_H = (4 − n)/(n + 8) · ε/α.
pub fn alpha_h_target(spec: &ModelSpec) -> f64 {
    (4.0 - spec.n as f64) / (spec.n as f64 + 8.0) * spec.epsilon / spec.alpha()
}

/// Plain OLS of y on x with slope standard error.
fn ols(xy: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xy
        .iter()
        .map(|p| {
            let r = p.1 - intercept - slope * p.0;
            r * r
        })
        .sum();
    let dof = (xy.len().max(3) - 2) as f64;
    let stderr = (sse / dof / sxx).sqrt();
    (slope, intercept, stderr)
}

/// Fit-window policy shared by the exponent fits: points ordered by
/// descending m², the largest m² decade dropped (boundary-scale transients),
/// then ≥ 6 points spanning ≥ 2 decades of the fit abscissa required.
fn windowed<'a, T, F>(points: &'a [T], m2_of: F) -> Result<Vec<&'a T>>
where
    F: Fn(&T) -> f64,
{
    if points.is_empty() {
        return Err(RgError::Domain("no points to fit".into()));
    }
    let m2_max = points.iter().map(&m2_of).fold(f64::MIN, f64::max);
    let kept: Vec<&T> = points
        .iter()
        .filter(|p| m2_of(p) <= m2_max / 10.0 * (1.0 + 1e-12))
        .collect();
    if kept.len() < 6 {
        return Err(RgError::Domain(format!(
            "fit window has {} points after dropping the largest decade; need >= 6",
            kept.len()
        )));
    }
    Ok(kept)
}

fn check_span(xy: &[(f64, f64)]) -> Result<f64> {
    let lo = xy.iter().map(|p| p.0).fold(f64::MAX, f64::min);
    let hi = xy.iter().map(|p| p.0).fold(f64::MIN, f64::max);
    let decades = (hi - lo) / std::f64::consts::LN_10;
    if decades < 2.0 - 1e-9 {
        return Err(RgError::Domain(format!(
            "fit window spans {decades:.2} decades; need >= 2"
        )));
    }
    Ok(decades)
}

/// Both γ estimators: the χ-vs-t fit (γ = −slope) and the ν′_∞-vs-m² fit
/// (γ = 1 + slope).
#[derive(Debug, Clone)]
pub struct GammaFits {
    pub chi_fit: ExponentFit,
    pub nu_prime_fit: ExponentFit,
}

/// Fit γ from a tuned sweep. Every windowed point must have t > 0 for the
/// χ route; the ν′_∞ route is independent of the ν_c extrapolation.
pub fn fit_gamma(points: &[SusceptibilityPoint], spec: &ModelSpec) -> Result<GammaFits> {
    let target = gamma_target(spec);
    let kept = windowed(points, |p: &SusceptibilityPoint| p.m2)?;

    let mut chi_xy = Vec::with_capacity(kept.len());
    for p in &kept {
        if !(p.t > 0.0) {
            return Err(RgError::Domain(format!(
                "chi fit needs t > 0, got t = {:.3e} at m2 = {:.3e}",
                p.t, p.m2
            )));
        }
        if !(p.chi > 0.0) {
            return Err(RgError::Domain(format!(
                "chi fit needs chi > 0, got {:.3e} at m2 = {:.3e}",
                p.chi, p.m2
            )));
        }
        chi_xy.push((p.t.ln(), p.chi.ln()));
    }
    let decades = check_span(&chi_xy)?;
    let (slope, intercept, stderr) = ols(&chi_xy);
    let chi_fit = ExponentFit {
        slope,
        intercept,
        stderr,
        window_decades: decades,
        points_used: chi_xy.len(),
        estimate: -slope,
        target,
        deviation: -slope - target,
    };

    let np_xy: Vec<(f64, f64)> = kept
        .iter()
        .map(|p| (p.m2.ln(), p.nu_inf_prime.ln()))
        .collect();
    let decades = check_span(&np_xy)?;
    let (slope, intercept, stderr) = ols(&np_xy);
    let nu_prime_fit = ExponentFit {
        slope,
        intercept,
        stderr,
        window_decades: decades,
        points_used: np_xy.len(),
        estimate: 1.0 + slope,
        target,
        deviation: 1.0 + slope - target,
    };

    Ok(GammaFits { chi_fit, nu_prime_fit })
}

/// Fit α_H from the specific-heat sweep: slope of log c_H vs log t is −α_H.
pub fn fit_alpha_h(points: &[HeatPoint], spec: &ModelSpec) -> Result<ExponentFit> {
    let target = alpha_h_target(spec);
    let kept = windowed(points, |p: &HeatPoint| p.m2)?;
    let mut xy = Vec::with_capacity(kept.len());
    for p in &kept {
        if !(p.t > 0.0 && p.c_h > 0.0) {
            return Err(RgError::Domain(format!(
                "alpha_H fit needs t > 0 and c_H > 0, got ({:.3e}, {:.3e})",
                p.t, p.c_h
            )));
        }
        xy.push((p.t.ln(), p.c_h.ln()));
    }
    let decades = check_span(&xy)?;
    let (slope, intercept, stderr) = ols(&xy);
    Ok(ExponentFit {
        slope,
        intercept,
        stderr,
        window_decades: decades,
        points_used: xy.len(),
        estimate: -slope,
        target,
        deviation: -slope - target,
    })
}

/// Largest deviation of χ·m² from 1 over a sweep (the Gaussian value has
/// χ·m² = 1 exactly; interactions shift it by O(ε)).
pub fn chi_normalization_band(points: &[SusceptibilityPoint]) -> f64 {
    points
        .iter()
        .map(|p| (p.chi * p.m2 - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Band ratio of the differential-inequality combination
/// −χ′ · χ^{−2 + εγ̄/α} over the fit window: (max, min, max/min).
pub fn differential_band(points: &[SusceptibilityPoint], spec: &ModelSpec) -> Result<(f64, f64, f64)> {
    let kept = windowed(points, |p: &SusceptibilityPoint| p.m2)?;
    let expo = -2.0 + spec.epsilon * spec.gamma_bar() / spec.alpha();
    let vals: Vec<f64> = kept
        .iter()
        .map(|p| -p.chi_prime * p.chi.powf(expo))
        .collect();
    let hi = vals.iter().copied().fold(f64::MIN, f64::max);
    let lo = vals.iter().copied().fold(f64::MAX, f64::min);
    if !(lo > 0.0) {
        return Err(RgError::Domain(format!(
            "differential band needs positive combinations, min = {lo:.3e}"
        )));
    }
    Ok((hi, lo, hi / lo))
}

/// One row of the n-dependence comparison: measured γ − 1 against the
/// γ̄ = (n+2)/(n+8) prediction, normalized to n = 1.
#[derive(Debug, Clone, Copy)]
pub struct NDependenceRow {
    pub n: u32,
    pub gamma_excess: f64,
    pub target_excess: f64,
    /// (γ(n) − 1)/(γ(1) − 1).
    pub ratio_to_n1: f64,
    /// γ̄(n)/γ̄(1).
    pub target_ratio: f64,
}

/// Compare γ − 1 across n; the reference n = 1 must be present.
pub fn n_dependence_report(
    fits: &[(u32, ExponentFit)],
    epsilon: f64,
    alpha: f64,
) -> Result<Vec<NDependenceRow>> {
    let gbar = |n: u32| (n as f64 + 2.0) / (n as f64 + 8.0);
    let base = fits
        .iter()
        .find(|(n, _)| *n == 1)
        .ok_or_else(|| RgError::Domain("n-dependence report needs the n = 1 fit".into()))?;
    let base_excess = base.1.estimate - 1.0;
    Ok(fits
        .iter()
        .map(|(n, fit)| NDependenceRow {
            n: *n,
            gamma_excess: fit.estimate - 1.0,
            target_excess: gbar(*n) * epsilon / alpha,
            ratio_to_n1: (fit.estimate - 1.0) / base_excess,
            target_ratio: gbar(*n) / gbar(1),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowDriver;
    use crate::testfix::{fixed_point, massive1e4, spec};
    use crate::tune::{tuned_run, TuneConfig};
    use approx::assert_relative_eq;

    fn synthetic_points(gamma: f64, count: usize) -> Vec<SusceptibilityPoint> {
        // m² grid over count half-decades; t proportional to m² so both
        // abscissas span the same decades.
        (0..count)
            .map(|k| {
                let m2 = 10f64.powf(-3.0 - 0.5 * k as f64);
                let t = 2.0 * m2;
                let chi = t.powf(-gamma);
                SusceptibilityPoint {
                    m2,
                    nu_star: t - 0.3,
                    t,
                    chi,
                    chi_prime: -gamma * t.powf(-gamma - 1.0),
                    nu_inf: 0.0,
                    nu_inf_prime: m2.powf(gamma - 1.0),
                }
            })
            .collect()
    }

    #[test]
    fn exact_power_law_is_recovered_to_machine_precision() {
        let pts = synthetic_points(1.05, 11);
        let s = spec(1);
        let fits = fit_gamma(&pts, &s).unwrap();
        assert_relative_eq!(fits.chi_fit.slope, -1.05, max_relative = 1e-12);
        assert_relative_eq!(fits.chi_fit.estimate, 1.05, max_relative = 1e-12);
        assert!(fits.chi_fit.stderr < 1e-12);
        // nu_inf_prime was seeded with exponent gamma - 1 in m².
        assert_relative_eq!(fits.nu_prime_fit.estimate, 1.05, max_relative = 1e-12);
        // Window drops the largest decade (2 of 11 half-decade points).
        assert_eq!(fits.chi_fit.points_used, 9);
        assert!(fits.chi_fit.window_decades >= 2.0);
    }

    #[test]
    fn targets_are_the_stated_arithmetic() {
        let s1 = spec(1);
        assert_relative_eq!(
            gamma_target(&s1),
            1.0 + (1.0 / 3.0) * (0.02 / 0.51),
            max_relative = 1e-15
        );
        assert!((gamma_target(&s1) - 1.01307).abs() < 1e-5);
        assert_relative_eq!(
            alpha_h_target(&s1),
            (1.0 / 3.0) * (0.02 / 0.51),
            max_relative = 1e-15
        );
        // n = 2 vs n = 1 target ratio for alpha_H: (2/10)/(3/9) = 0.6.
        let s2 = spec(2);
        assert_relative_eq!(
            alpha_h_target(&s2) / alpha_h_target(&s1),
            0.6,
            max_relative = 1e-12
        );
        // gamma-excess ratios: n=0 vs 1 → 0.75, n=2 vs 1 → 1.2.
        let gb = |n: u32| (n as f64 + 2.0) / (n as f64 + 8.0);
        assert_relative_eq!(gb(0) / gb(1), 0.75, max_relative = 1e-12);
        assert_relative_eq!(gb(2) / gb(1), 1.2, max_relative = 1e-12);
    }

    #[test]
    fn window_rules_reject_thin_or_narrow_input() {
        let s = spec(1);
        // 7 half-decade points leave 5 after the first decade is dropped.
        let pts = synthetic_points(1.05, 7);
        assert!(fit_gamma(&pts, &s).is_err());
        // Negative t in the window is refused.
        let mut pts = synthetic_points(1.05, 11);
        for p in &mut pts {
            p.t = -p.t;
        }
        assert!(fit_gamma(&pts, &s).is_err());
    }

    #[test]
    fn alpha_h_fit_matches_seeded_exponent() {
        let pts: Vec<HeatPoint> = (0..11)
            .map(|k| {
                let m2 = 10f64.powf(-3.0 - 0.5 * k as f64);
                let t = m2;
                HeatPoint {
                    m2,
                    t,
                    c_h: 3.0 * t.powf(-0.0131),
                }
            })
            .collect();
        let fit = fit_alpha_h(&pts, &spec(1)).unwrap();
        assert_relative_eq!(fit.estimate, 0.0131, max_relative = 1e-10);
    }

    #[test]
    fn n_report_normalizes_to_n1() {
        let mk = |est: f64| ExponentFit {
            slope: 0.0,
            intercept: 0.0,
            stderr: 0.0,
            window_decades: 3.0,
            points_used: 9,
            estimate: est,
            target: 0.0,
            deviation: 0.0,
        };
        let rows = n_dependence_report(
            &[(0, mk(1.010)), (1, mk(1.013)), (2, mk(1.016))],
            0.02,
            0.51,
        )
        .unwrap();
        assert_eq!(rows.len(), 3);
        assert_relative_eq!(rows[0].ratio_to_n1, 0.010 / 0.013, max_relative = 1e-12);
        assert_relative_eq!(rows[0].target_ratio, 0.75, max_relative = 1e-12);
        assert_relative_eq!(rows[2].target_ratio, 1.2, max_relative = 1e-12);
        assert!(n_dependence_report(&[(0, mk(1.0))], 0.02, 0.51).is_err());
    }

    #[test]
    fn tuned_point_has_gaussian_scale_chi_and_negative_slope() {
        let drv = FlowDriver::new(massive1e4(), fixed_point());
        let run = tuned_run(&drv, drv.sbar(), &TuneConfig::default()).unwrap();
        // Any plausible nu_c below nu_star works for the point itself.
        let nu_c = run.tune.nu_star - 1e-4;
        let p = susceptibility(&run, nu_c).unwrap();
        assert!(p.chi > 0.0);
        assert!(p.chi_prime < 0.0);
        assert!(
            (p.chi * p.m2 - 1.0).abs() < 0.2,
            "chi normalization {:.4}",
            p.chi * p.m2
        );
        let h = specific_heat(&run, nu_c).unwrap();
        assert!(h.c_h.is_finite());
        assert!(h.c_h > 0.0, "c_H = {:.3e}", h.c_h);
    }
}
