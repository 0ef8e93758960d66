//! Critical tuning: locate the initial value mu0 whose trajectory stays on
//! the stable manifold up to the mass scale, convert it to the bare critical
//! coupling ν₀^c(m²), and extrapolate the critical point ν_c as m² ↓ 0.
//!
//! The relevant direction grows like L^α per scale, so the transformed μ one
//! scale past j_m is an extremely sensitive, monotone function of mu0 and a
//! plain bisection on its sign is both robust and as accurate as f64 allows.
//! That granularity is a real ceiling: one ulp of ν₀ moves the residual by
//! roughly ulp(ν₀)·L^{α j_m}, which overtakes the default tolerance once j_m
//! exceeds ~9. `TuneResult::converged` records which regime a run ended in.

use crate::coeffs::{CoefficientTable, FixedPointData};
use crate::decomp::{Backend, ScaleDecomposition};
use crate::flow::{FlowDriver, FlowRecord, RemainderModel};
use crate::model::{mass_scale, ModelSpec, QuadratureSpec, Result, RgError};
use crate::moments::MomentTable;

/// Default residual target: |μ_{target}| < tol_mu · s̄².
pub const TOL_MU_DEFAULT: f64 = 1e-8;
/// Initial bracket half-width in units of σ s̄².
pub const BRACKET_FACTOR_DEFAULT: f64 = 2.0;
/// Bracket doublings before giving up (2 → 64 in units of σ s̄²).
pub const MAX_BRACKET_DOUBLINGS: usize = 5;
/// Hard cap on bisection steps (the f64 floor is reached in ~60).
pub const MAX_BISECTIONS: usize = 200;

/// Knobs for a single shooting run.
#[derive(Debug, Clone)]
pub struct TuneConfig {
    pub tol_mu: f64,
    pub bracket_factor: f64,
    /// Shooting target scale is j_m + 1 + offset; a negative offset aims a
    /// few scales before the mass scale instead.
    pub target_offset: isize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            tol_mu: TOL_MU_DEFAULT,
            bracket_factor: BRACKET_FACTOR_DEFAULT,
            target_offset: 0,
        }
    }
}

/// Outcome of one tuned mass point.
#[derive(Debug, Clone)]
pub struct TuneResult {
    pub m2: f64,
    pub jm: usize,
    /// Quartic coupling the run was shot at.
    pub g: f64,
    /// Critical initial value of the transformed mass direction.
    pub mu0_c: f64,
    /// Bare critical coupling: μ₀^c − (n+2) C₀₀(m²) g.
    pub nu0_c: f64,
    /// Effective-mass combination ν₀^c + m², the quantity extrapolated to ν_c.
    pub nu_star: f64,
    /// Sign-changing bracket the bisection started from.
    pub bracket: (f64, f64),
    pub iterations: usize,
    /// |μ| at the target scale for the returned mu0_c.
    pub residual: f64,
    /// Whether the residual met tol_mu · s̄²; false means the bisection hit
    /// the f64 granularity of the shooting functional first (deep j_m).
    pub converged: bool,
}

/// Locate the critical mu0 by sign bisection of the shooting residual.
///
/// The residual functional must be strictly increasing in mu0; every probe
/// is checked against the bracket ordering and a violation aborts with
/// `NonMonotone` (it would mean the coefficient table is pathological).
pub fn shoot_mu0(driver: &FlowDriver, g: f64, cfg: &TuneConfig) -> Result<TuneResult> {
    let table = driver.table;
    let jm = table.jm;
    if jm == crate::coeffs::NO_MASS_SCALE {
        return Err(RgError::Domain(
            "shooting needs a massive table (finite mass scale)".into(),
        ));
    }
    let sbar = driver.sbar();
    let y0 = sbar - g;
    if y0.abs() > driver.omega * sbar {
        return Err(RgError::Domain(format!(
            "initial y0 = {y0:.3e} outside the tuning window |y0| <= {:.3e}",
            driver.omega * sbar
        )));
    }
    let target = (jm as isize + 1 + cfg.target_offset).max(1) as usize;
    if target > jm + 1 {
        return Err(RgError::Domain(format!(
            "target offset {} aims past j_m + 1",
            cfg.target_offset
        )));
    }
    let scale2 = sbar * sbar;
    let probe = |mu0: f64| -> Result<f64> {
        let rec = driver.flow_below(mu0, y0)?;
        driver.shooting_residual(&rec, target)
    };

    // σ = 0 can only happen for degenerate synthetic tables (π ≡ 0); keep
    // the bracket positive anyway.
    let sigma_eff = if driver.sigma > 0.0 { driver.sigma } else { 1.0 };
    let mut half = cfg.bracket_factor * sigma_eff * scale2;
    let (mut lo, mut hi) = (-half, half);
    let mut flo = probe(lo)?;
    let mut fhi = probe(hi)?;
    let mut doublings = 0;
    while flo.signum() == fhi.signum() {
        if flo == 0.0 || fhi == 0.0 {
            break; // an endpoint is already exactly critical
        }
        if doublings >= MAX_BRACKET_DOUBLINGS {
            return Err(RgError::Bracket {
                doublings,
                lo: flo,
                hi: fhi,
            });
        }
        half *= 2.0;
        lo = -half;
        hi = half;
        flo = probe(lo)?;
        fhi = probe(hi)?;
        doublings += 1;
    }
    if flo > 0.0 {
        // An increasing functional must be negative on the left.
        return Err(RgError::NonMonotone { mu0: lo });
    }
    let bracket = (lo, hi);

    let (mut best, mut best_res) = if flo.abs() <= fhi.abs() {
        (lo, flo)
    } else {
        (hi, fhi)
    };
    let mut iterations = 0;
    while iterations < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break; // bracket collapsed to adjacent floats
        }
        let fm = probe(mid)?;
        iterations += 1;
        if fm < flo || fm > fhi {
            return Err(RgError::NonMonotone { mu0: mid });
        }
        if fm.abs() < best_res.abs() {
            best = mid;
            best_res = fm;
        }
        if fm.abs() < cfg.tol_mu * scale2 {
            break;
        }
        if fm > 0.0 {
            hi = mid;
            fhi = fm;
        } else {
            lo = mid;
            flo = fm;
        }
    }

    let nu0_c = nu0_critical(best, g, table);
    Ok(TuneResult {
        m2: table.m2,
        jm,
        g,
        mu0_c: best,
        nu0_c,
        nu_star: nu0_c + table.m2,
        bracket,
        iterations,
        residual: best_res.abs(),
        converged: best_res.abs() < cfg.tol_mu * scale2,
    })
}

/// Bare critical coupling from the tuned mu0. At scale 0 the transform is
/// exact (w̄₀ = 0), so this is just the background subtraction
/// ν₀^c = μ₀^c − (n+2) C₀₀(m²) g, with (n+2) C₀₀ stored as η_{≥0}.
pub fn nu0_critical(mu0_c: f64, g: f64, table: &CoefficientTable) -> f64 {
    mu0_c - table.at(0).eta_geq * g
}

/// A tuned mass point with everything downstream stages read off it:
/// the converged record carries ν_∞, both tangent orders and u″.
#[derive(Debug, Clone)]
pub struct TunedRun {
    pub tune: TuneResult,
    pub record: FlowRecord,
}

/// Shoot, then run the full trajectory (below + above the mass scale) with
/// second-order tangents and the vacuum-energy second derivative attached.
pub fn tuned_run(driver: &FlowDriver, g: f64, cfg: &TuneConfig) -> Result<TunedRun> {
    let tune = shoot_mu0(driver, g, cfg)?;
    let mut record = driver.flow_below(tune.mu0_c, driver.sbar() - g)?;
    if let Some((scale, quantity)) = record.diverged.clone() {
        return Err(RgError::FlowDiverged { scale, quantity });
    }
    driver.flow_above(&mut record)?;
    driver.tangent_flow(&mut record, 2)?;
    driver.u_second_flow(&mut record)?;
    Ok(TunedRun { tune, record })
}

/// Critical-point extrapolation m² ↓ 0.
#[derive(Debug, Clone)]
pub struct CriticalPoint {
    /// Intercept of the power-law fit ν*(m²) = ν_c + A (m²)^θ.
    pub nu_c: f64,
    pub amplitude: f64,
    pub theta: f64,
    /// Root-mean-square fit residual.
    pub fit_rms: f64,
    /// Mass points that entered the fit, descending.
    pub m2_values: Vec<f64>,
    /// Plain alternative: ν* at the smallest mass.
    pub last_value: f64,
    /// Aitken extrapolation from the three smallest masses (needs a
    /// near-geometric grid), if numerically stable.
    pub richardson: Option<f64>,
    /// Massless lattice Green diagonal τ^(α) for the asymptotic comparison.
    pub tau_alpha: f64,
    pub warning: Option<String>,
}

impl CriticalPoint {
    /// ν_c / (−(n+2) τ^(α) g): approaches 1 as g → 0.
    pub fn asymptotic_ratio(&self, spec: &ModelSpec, g: f64) -> f64 {
        self.nu_c / (-((spec.n as f64 + 2.0) * self.tau_alpha * g))
    }
}

/// Least-squares fit of ν*(m²) = ν_c + A (m²)^θ with θ free (coarse grid
/// plus golden-section refinement on the profiled SSE), alternatives
/// reported alongside. Requires ≥ 4 points spanning ≥ 3 decades of m².
pub fn nu_c_extrapolate(results: &[TuneResult], tau_alpha: f64) -> Result<CriticalPoint> {
    if results.len() < 4 {
        return Err(RgError::Domain(format!(
            "extrapolation needs >= 4 tuned points, got {}",
            results.len()
        )));
    }
    let mut pts: Vec<(f64, f64)> = results.iter().map(|r| (r.m2, r.nu_star)).collect();
    pts.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let span = pts.first().unwrap().0 / pts.last().unwrap().0;
    if span < 0.999e3 {
        return Err(RgError::Domain(format!(
            "extrapolation needs >= 3 decades of m², got {:.2}",
            span.log10()
        )));
    }

    let sse = |theta: f64| -> (f64, f64, f64) {
        // Profiled linear LS for (nu_c, A) at fixed theta.
        let n = pts.len() as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for &(m2, y) in &pts {
            let x = m2.powf(theta);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let det = n * sxx - sx * sx;
        let a = (n * sxy - sx * sy) / det;
        let c = (sy - a * sx) / n;
        let mut s = 0.0;
        for &(m2, y) in &pts {
            let r = y - c - a * m2.powf(theta);
            s += r * r;
        }
        (s, c, a)
    };

    let mut best = (f64::INFINITY, 1.0);
    let mut th = 0.05;
    while th <= 3.0 + 1e-12 {
        let (s, _, _) = sse(th);
        if s < best.0 {
            best = (s, th);
        }
        th += 0.05;
    }
    // Golden-section refinement around the best grid node.
    let (mut a_lo, mut a_hi) = ((best.1 - 0.05).max(1e-3), best.1 + 0.05);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let t1 = a_hi - phi * (a_hi - a_lo);
        let t2 = a_lo + phi * (a_hi - a_lo);
        if sse(t1).0 <= sse(t2).0 {
            a_hi = t2;
        } else {
            a_lo = t1;
        }
    }
    let theta = 0.5 * (a_lo + a_hi);
    let (s, nu_c, amp) = sse(theta);
    let fit_rms = (s / pts.len() as f64).sqrt();

    // Monotone approach (within fit noise) is expected but not guaranteed.
    let mut warning = None;
    let diffs: Vec<f64> = pts.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let tol = 10.0 * fit_rms + 1e-15;
    let pos = diffs.iter().any(|&d| d > tol);
    let neg = diffs.iter().any(|&d| d < -tol);
    if pos && neg {
        warning = Some("nu_star sequence is not monotone beyond fit noise".into());
    }

    // Aitken acceleration on the three smallest masses.
    let k = pts.len();
    let (y1, y2, y3) = (pts[k - 3].1, pts[k - 2].1, pts[k - 1].1);
    let denom = y3 - 2.0 * y2 + y1;
    let richardson = if denom.abs() > 1e3 * f64::EPSILON * (y1.abs() + y3.abs()) {
        Some(y3 - (y3 - y2) * (y3 - y2) / denom)
    } else {
        None
    };

    Ok(CriticalPoint {
        nu_c,
        amplitude: amp,
        theta,
        fit_rms,
        m2_values: pts.iter().map(|p| p.0).collect(),
        last_value: pts[k - 1].1,
        richardson,
        tau_alpha,
        warning,
    })
}

/// Default mass grid: half-decade steps over m² ∈ [1e−8, 1e−3].
pub fn default_m2_grid() -> Vec<f64> {
    (0..=10).map(|k| 10f64.powf(-3.0 - 0.5 * k as f64)).collect()
}

/// Sweep-level configuration: grid, backend, table depths and budgets.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub m2_grid: Vec<f64>,
    /// Quartic coupling; None shoots at g = s̄ (exactly on the fixed point).
    pub g: Option<f64>,
    pub tune: TuneConfig,
    pub backend: Backend,
    pub quad: QuadratureSpec,
    /// Coefficient-table depth is j_m + headroom (flow needs ~7 scales past
    /// j_m to converge, and the table loses two scales to differencing).
    pub depth_headroom: usize,
    /// Depth of the massless table the fixed point is extracted from.
    pub massless_depth: usize,
    /// Mass points with j_m above this budget are skipped, not failed.
    pub j_max: usize,
    pub remainder: RemainderModel,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            m2_grid: default_m2_grid(),
            g: None,
            tune: TuneConfig::default(),
            backend: Backend::DirectFractional,
            quad: QuadratureSpec::default(),
            depth_headroom: 10,
            massless_depth: 14,
            j_max: 60,
            remainder: RemainderModel::default(),
        }
    }
}

/// Everything a sweep produces: the fixed point it tuned against, one
/// `TunedRun` per kept mass point (descending m²), and the skipped points.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub fp: FixedPointData,
    pub runs: Vec<TunedRun>,
    pub skipped: Vec<(f64, usize)>,
}

/// Extract the fixed point for `spec` from a freshly built massless table.
pub fn fixed_point_for(
    spec: &ModelSpec,
    quad: &QuadratureSpec,
    backend: Backend,
    depth: usize,
) -> Result<FixedPointData> {
    let dc = ScaleDecomposition::new(*spec, quad.clone(), backend, 0.0)?;
    let moments = MomentTable::build(&dc, depth)?;
    let table = CoefficientTable::new(&moments, spec)?;
    crate::coeffs::extract_a(&table)
}

/// Tune one mass point from scratch (decomposition, moments, coefficients,
/// shoot, flows). Independent across points, so safe to fan out.
fn sweep_point(
    spec: &ModelSpec,
    cfg: &SweepConfig,
    fp: FixedPointData,
    g: f64,
    m2: f64,
    jm: usize,
) -> Result<TunedRun> {
    let dc = ScaleDecomposition::new(*spec, cfg.quad.clone(), cfg.backend, m2)?;
    let moments = MomentTable::build(&dc, jm + cfg.depth_headroom)?;
    let table = CoefficientTable::new(&moments, spec)?;
    let driver = FlowDriver::new(&table, fp).with_remainder(cfg.remainder.clone());
    tuned_run(&driver, g, &cfg.tune)
}

/// Build one coefficient table per mass point and tune it. Moment tables
/// are n-independent, so callers sweeping several n should build their own
/// tables once and call `tuned_run` directly; this convenience rebuilds.
pub fn sweep(spec: &ModelSpec, cfg: &SweepConfig) -> Result<SweepResult> {
    sweep_with_pool(spec, cfg, 1)
}

/// `sweep` with the independent mass points fanned out over `pool` worker
/// threads (`pool <= 1` runs inline). Results are ordered by descending m²
/// either way, so output is deterministic regardless of scheduling.
pub fn sweep_with_pool(spec: &ModelSpec, cfg: &SweepConfig, pool: usize) -> Result<SweepResult> {
    let fp = fixed_point_for(spec, &cfg.quad, cfg.backend, cfg.massless_depth)?;
    let g = cfg.g.unwrap_or(fp.sbar);
    let mut grid = cfg.m2_grid.clone();
    grid.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut work = Vec::new();
    let mut skipped = Vec::new();
    for &m2 in &grid {
        let jm = mass_scale(spec, m2)?;
        if jm > cfg.j_max {
            skipped.push((m2, jm));
        } else {
            work.push((m2, jm));
        }
    }
    let runs = if pool > 1 {
        let tp = rayon::ThreadPoolBuilder::new()
            .num_threads(pool.min(work.len().max(1)))
            .build()
            .map_err(|e| RgError::Config(format!("worker pool: {e}")))?;
        use rayon::prelude::*;
        tp.install(|| {
            work.par_iter()
                .map(|&(m2, jm)| sweep_point(spec, cfg, fp, g, m2, jm))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        work.iter()
            .map(|&(m2, jm)| sweep_point(spec, cfg, fp, g, m2, jm))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(SweepResult { fp, runs, skipped })
}
