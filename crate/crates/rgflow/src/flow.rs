//! Iteration of the second-order coupling flow.
//!
//! The engine drives three coupled layers:
//!
//! - the raw one-step map for (g, ν, u), a quadratic polynomial whose
//!   coefficients come straight from the moment layer — this is the
//!   production recursion at every scale, with g frozen above the mass
//!   scale;
//! - a per-scale quadratic change of variables to (s, μ), in which the
//!   one-step map becomes the clean product form s₊ = L^ε s(1 − β: s),
//!   μ₊ = L^α(μ − γ̄ β μ s − π s²) up to higher order;
//! - exact tangent flows: first and second derivatives of the trajectory
//!   with respect to the initial mass coupling, propagated by forward-mode
//!   differentiation of the step polynomials.
//!
//! Raw couplings decay geometrically along critical trajectories
//! (g_j ~ L^{-εj}, ν_j ~ L^{-α(j∧j_m)}); the "hat" views blow that decay
//! back up so that domain membership can be monitored against O(1) bounds.

use crate::coeffs::{CoefficientTable, FixedPointData};
use crate::model::{Result, RgError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// y-weight ω in the domain bound |y_j| ≤ ω s̄.
pub const OMEGA_DEFAULT: f64 = 1.0 / 32.0;
/// Domain constant C_D in |ĝ|, |μ̂| ≤ C_D s̄.
pub const DOMAIN_FACTOR_DEFAULT: f64 = 2.0;
/// The stability box sits at this multiple of the domain bound.
pub const BOX_FACTOR_DEFAULT: f64 = 10.0;
/// Hard ceiling on scales iterated above the mass scale.
pub const J_MAX_ABOVE: usize = 60;
/// Relative stopping tolerance for the ν flow above the mass scale.
pub const NU_STOP_RTOL: f64 = 1e-4;

/// Raw couplings entering a scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingState {
    pub g: f64,
    pub nu: f64,
    /// Cumulative vacuum-energy (zero-point) coupling.
    pub u: f64,
}

/// Transformed couplings at a scale, plus the deviation y = s̄ − s.
#[derive(Debug, Clone, Copy)]
pub struct TransformedState {
    pub s: f64,
    pub mu: f64,
    pub y: f64,
}

/// First- and second-derivative data with respect to the initial mass
/// coupling ν₀ (at fixed m², g, y₀).
#[derive(Debug, Clone, Copy, Default)]
pub struct TangentState {
    pub g1: f64,
    pub nu1: f64,
    pub u1: f64,
    pub g2: f64,
    pub nu2: f64,
    /// Cumulative second derivative of u, accumulated in the cancelled
    /// form by [`FlowDriver::u_second_flow`].
    pub u2: f64,
}

/// Bounded remainder injections modelling the rigorous error terms that
/// the second-order truncation drops. Signs are pseudo-random but fully
/// determined by (seed, scale), so trajectories remain reproducible and
/// differentiable in ν₀.
#[derive(Debug, Clone, Copy)]
pub struct RemainderModel {
    pub enabled: bool,
    /// Fraction of the per-scale cap to inject (1 = at the cap).
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for RemainderModel {
    fn default() -> Self {
        RemainderModel {
            enabled: false,
            amplitude: 0.0,
            seed: 0,
        }
    }
}

impl RemainderModel {
    pub fn at_cap(seed: u64) -> Self {
        RemainderModel {
            enabled: true,
            amplitude: 1.0,
            seed,
        }
    }

    /// Deterministic sign pair for scale j.
    fn signs(&self, j: usize) -> (f64, f64) {
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.seed ^ (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let s = |b: bool| if b { 1.0 } else { -1.0 };
        (s(rng.gen_bool(0.5)), s(rng.gen_bool(0.5)))
    }

    /// Raw-scale remainder pair (r_g, r_ν) injected in the step j → j+1.
    /// Caps: |r_g| ≤ amp·s̄³·L^{-εj} below the mass scale (zero above it,
    /// where g is frozen), |r_ν| ≤ amp·s̄³·ϑ_{j+1}·L^{-α(j∧j_m)}.
    fn draw(&self, table: &CoefficientTable, sbar: f64, j: usize) -> (f64, f64) {
        if !self.enabled || self.amplitude == 0.0 {
            return (0.0, 0.0);
        }
        let spec = &table.spec;
        let jm = table.jm;
        let (sg, sn) = self.signs(j);
        let s3 = self.amplitude * sbar * sbar * sbar;
        let rg = if j < jm {
            sg * s3 * spec.l_pow(-spec.epsilon * j as f64)
        } else {
            0.0
        };
        let theta_next = crate::coeffs::theta_factor(spec, j + 1, jm);
        let rn = sn * s3 * theta_next * spec.l_pow(-spec.alpha() * (j.min(jm)) as f64);
        (rg, rn)
    }
}

/// One recorded scale of a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct ScaleRow {
    pub j: usize,
    pub state: CouplingState,
    /// Hat views ĝ = L^{ε(j∧j_m)} g, μ̂ = L^{α(j∧j_m)} ν.
    pub ghat: f64,
    pub muhat: f64,
    pub ts: TransformedState,
    /// Running product P_j = Π_{k<j∧j_m} (1 − γ̄ β_k s_k).
    pub p: f64,
    /// Remainder pair injected in the step leaving this scale.
    pub r_g: f64,
    pub r_nu: f64,
}

/// A trajectory with everything later stages consume.
#[derive(Debug, Clone)]
pub struct FlowRecord {
    pub m2: f64,
    pub jm: usize,
    pub rows: Vec<ScaleRow>,
    /// First scale j ≤ j_m at which |μ| exceeded the nominal weight σ s̄².
    pub ball_mu_fail: Option<usize>,
    /// First scale j ≤ j_m at which |y| exceeded the nominal weight ω s̄.
    /// The ω = 1/32 constant is calibrated for asymptotically small ε; at
    /// moderate ε this flag is informational (see `y_sup` for the measured
    /// excursion), while divergence is policed by the stability box.
    pub ball_y_fail: Option<usize>,
    /// Set when the stability box was violated: the record is truncated at
    /// the offending scale and this carries the diagnostic.
    pub diverged: Option<(usize, String)>,
    /// Limit of the ν flow above the mass scale (set by `flow_above`).
    pub nu_infinity: Option<f64>,
    /// Tangent trajectory aligned with `rows` (set by `tangent_flow`).
    pub tangents: Option<Vec<TangentState>>,
    /// Total second ν₀-derivative of the vacuum energy.
    pub u2_infinity: Option<f64>,
}

impl FlowRecord {
    pub fn last(&self) -> &ScaleRow {
        self.rows.last().expect("flow record has at least one row")
    }

    /// Row at scale j (rows start at j = 0).
    pub fn at(&self, j: usize) -> &ScaleRow {
        &self.rows[j]
    }

    /// Largest |y_j| over recorded scales j ≤ j_m.
    pub fn y_sup(&self) -> f64 {
        self.rows
            .iter()
            .take_while(|r| r.j <= self.jm)
            .map(|r| r.ts.y.abs())
            .fold(0.0, f64::max)
    }

    /// Largest |μ_j| over recorded scales j ≤ j_m.
    pub fn mu_sup(&self) -> f64 {
        self.rows
            .iter()
            .take_while(|r| r.j <= self.jm)
            .map(|r| r.ts.mu.abs())
            .fold(0.0, f64::max)
    }
}

/// Drives flows over one coefficient table. The fixed-point data must come
/// from the matching massless table (same d, L, ε, n and backend).
#[derive(Debug, Clone)]
pub struct FlowDriver<'a> {
    pub table: &'a CoefficientTable,
    pub fp: FixedPointData,
    /// μ-weight multiplier: the domain is |μ| ≤ σ s̄² with σ = 5 sup|π|.
    pub sigma: f64,
    pub omega: f64,
    pub domain_factor: f64,
    pub box_factor: f64,
    pub remainder: RemainderModel,
}

impl<'a> FlowDriver<'a> {
    pub fn new(table: &'a CoefficientTable, fp: FixedPointData) -> Self {
        FlowDriver {
            table,
            fp,
            sigma: 5.0 * table.pi_sup(),
            omega: OMEGA_DEFAULT,
            domain_factor: DOMAIN_FACTOR_DEFAULT,
            box_factor: BOX_FACTOR_DEFAULT,
            remainder: RemainderModel::default(),
        }
    }

    pub fn with_remainder(mut self, remainder: RemainderModel) -> Self {
        self.remainder = remainder;
        self
    }

    pub fn sbar(&self) -> f64 {
        self.fp.sbar
    }

    fn jm(&self) -> usize {
        self.table.jm
    }

    /// Hat views of a raw state at scale j.
    pub fn hat(&self, j: usize, state: &CouplingState) -> (f64, f64) {
        let spec = &self.table.spec;
        let jc = j.min(self.jm()) as f64;
        (
            spec.l_pow(spec.epsilon * jc) * state.g,
            spec.l_pow(spec.alpha() * jc) * state.nu,
        )
    }

    fn box_bound(&self) -> f64 {
        self.box_factor * self.domain_factor * self.fp.sbar
    }

    /// One raw step j → j+1. Quadratic polynomial map; g is frozen at and
    /// above the mass scale. Errors when the hat views leave the stability
    /// box.
    pub fn pt_step(&self, j: usize, state: &CouplingState) -> Result<CouplingState> {
        let (ghat, muhat) = self.hat(j, state);
        let bound = self.box_bound();
        if !(ghat.abs() <= bound) || !(muhat.abs() <= bound) {
            return Err(RgError::FlowDiverged {
                scale: j,
                quantity: format!("ghat = {ghat:.3e}, muhat = {muhat:.3e}, box = {bound:.3e}"),
            });
        }
        let r = self.table.raw_at(j);
        let n = self.table.spec.n;
        let gb = self.table.spec.gamma_bar();
        let (g, nu) = (state.g, state.nu);
        let (w, wp) = (r.w1, r.w1_next);
        // δ[νw^{(1)}] and δ[ν²w^{(1)}] across the step.
        let a = (nu + r.eta_p * g) * wp - nu * w;
        let b = (nu + r.eta_p * g) * (nu + r.eta_p * g) * wp - nu * nu * w;
        let (rg, rn) = self.remainder.draw(self.table, self.fp.sbar, j);
        let g_next = if j < self.jm() {
            g - r.beta_p * g * g - 4.0 * g * a + rg
        } else {
            g
        };
        let nu_next = nu + r.eta_p * (g + 4.0 * g * nu * w)
            - r.xi_p * g * g
            - gb * r.beta_p * nu * g
            - b
            + rn;
        let du = if n == 0 {
            0.0
        } else {
            r.kappa_g_p * g + r.kappa_nu_p * nu
                - r.kappa_gnu_p * g * nu
                - r.kappa_gg_p * g * g
                - r.kappa_nunu_p * nu * nu
        };
        Ok(CouplingState {
            g: g_next,
            nu: nu_next,
            u: state.u + du,
        })
    }

    /// The change of variables T_j applied to hat couplings.
    pub fn transform(&self, j: usize, ghat: f64, muhat: f64) -> TransformedState {
        let row = self.table.at(j);
        let (w, eta) = (row.wbar1, row.eta_geq);
        let s = ghat + 4.0 * ghat * (muhat + eta * ghat) * w;
        let mu = muhat + eta * (ghat + 4.0 * ghat * muhat * w) + muhat * muhat * w;
        TransformedState {
            s,
            mu,
            y: self.fp.sbar - s,
        }
    }

    /// Inverse of T_j by damped Newton iteration (exact at j = 0 where the
    /// map is linear). Converges to 1e-13 residual inside the small-field
    /// ball; errors outside it.
    pub fn inverse_transform(&self, j: usize, s: f64, mu: f64) -> Result<(f64, f64)> {
        let row = self.table.at(j);
        let (w, eta) = (row.wbar1, row.eta_geq);
        let scale = 1.0 + s.abs() + mu.abs();
        let tol = 1e-13 * scale;
        let mut gh = s;
        let mut mh = mu - eta * s;
        let f = |gh: f64, mh: f64| {
            let f1 = gh + 4.0 * gh * (mh + eta * gh) * w - s;
            let f2 = mh + eta * (gh + 4.0 * gh * mh * w) + mh * mh * w - mu;
            (f1, f2)
        };
        let (mut f1, mut f2) = f(gh, mh);
        for _ in 0..60 {
            if f1.abs().max(f2.abs()) <= tol {
                return Ok((gh, mh));
            }
            let j11 = 1.0 + 4.0 * (mh + eta * gh) * w + 4.0 * gh * eta * w;
            let j12 = 4.0 * gh * w;
            let j21 = eta * (1.0 + 4.0 * mh * w);
            let j22 = 1.0 + 4.0 * eta * gh * w + 2.0 * mh * w;
            let det = j11 * j22 - j12 * j21;
            if det.abs() < 1e-14 {
                break;
            }
            let dg = (f1 * j22 - f2 * j12) / det;
            let dm = (f2 * j11 - f1 * j21) / det;
            // Damped update: halve until the residual actually drops.
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..8 {
                let (t1, t2) = f(gh - lambda * dg, mh - lambda * dm);
                if t1.abs().max(t2.abs()) < f1.abs().max(f2.abs()) {
                    gh -= lambda * dg;
                    mh -= lambda * dm;
                    f1 = t1;
                    f2 = t2;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if f1.abs().max(f2.abs()) <= tol {
            Ok((gh, mh))
        } else {
            Err(RgError::NoConvergence {
                what: format!("inverse transform at scale {j}"),
                iterations: 60,
                residual: f1.abs().max(f2.abs()),
            })
        }
    }

    /// The transformed one-step map (valid below the mass scale).
    pub fn barpt_step(&self, j: usize, ts: &TransformedState) -> TransformedState {
        let spec = &self.table.spec;
        let row = self.table.at(j);
        let le = spec.l_pow(spec.epsilon);
        let la = spec.l_pow(spec.alpha());
        let s = le * ts.s * (1.0 - row.beta_colon * ts.s);
        let mu = la * (ts.mu - spec.gamma_bar() * row.beta * ts.mu * ts.s - row.pi * ts.s * ts.s);
        TransformedState {
            s,
            mu,
            y: self.fp.sbar - s,
        }
    }

    /// Flow from scale 0 to the mass scale. Initial data is given in the
    /// transformed coordinates of scale 0 (where w̄₀ = 0 makes the
    /// inversion exact): s₀ = s̄ − y₀ and μ₀ = mu0.
    pub fn flow_below(&self, mu0: f64, y0: f64) -> Result<FlowRecord> {
        let jm = self.jm();
        if jm == usize::MAX {
            return Err(RgError::Domain(
                "flow_below needs a finite mass scale (m² > 0)".into(),
            ));
        }
        if self.table.steps() <= jm {
            return Err(RgError::Config(format!(
                "coefficient table has {} rows, flow needs them through j_m = {jm}",
                self.table.steps()
            )));
        }
        let eta0 = self.table.at(0).eta_geq;
        let s0 = self.fp.sbar - y0;
        let state0 = CouplingState {
            g: s0,
            nu: mu0 - eta0 * s0,
            u: 0.0,
        };
        let mut record = FlowRecord {
            m2: self.table.m2,
            jm,
            rows: Vec::with_capacity(jm + 1),
            ball_mu_fail: None,
            ball_y_fail: None,
            diverged: None,
            nu_infinity: None,
            tangents: None,
            u2_infinity: None,
        };
        let mut state = state0;
        let mut p = 1.0;
        for j in 0..=jm {
            p = self.push_row(&mut record, j, state, p);
            if j == jm {
                break;
            }
            match self.pt_step(j, &state) {
                Ok(next) => state = next,
                Err(RgError::FlowDiverged { scale, quantity }) => {
                    record.diverged = Some((scale, quantity));
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(record)
    }

    /// Record scale j and return the updated P product.
    fn push_row(&self, record: &mut FlowRecord, j: usize, state: CouplingState, p: f64) -> f64 {
        let (ghat, muhat) = self.hat(j, &state);
        let ts = self.transform(j, ghat, muhat);
        // The (σ, ω) domain bounds are a below-mass-scale statement; above
        // j_m the frozen-power μ̂ legitimately grows to O(s̄).
        if j <= self.jm() {
            let sb2 = self.sigma * self.fp.sbar * self.fp.sbar;
            if record.ball_mu_fail.is_none() && ts.mu.abs() > sb2 {
                record.ball_mu_fail = Some(j);
            }
            if record.ball_y_fail.is_none() && ts.y.abs() > self.omega * self.fp.sbar {
                record.ball_y_fail = Some(j);
            }
        }
        let (r_g, r_nu) = self.remainder.draw(self.table, self.fp.sbar, j);
        record.rows.push(ScaleRow {
            j,
            state,
            ghat,
            muhat,
            ts,
            p,
            r_g,
            r_nu,
        });
        // P accumulates factors only below the mass scale.
        if j < self.jm() {
            p * (1.0 - self.table.spec.gamma_bar() * self.table.at(j).beta * ts.s)
        } else {
            p
        }
    }

    /// Continue a below-record past the mass scale until the ν increments
    /// drop under the stopping tolerance; sets `nu_infinity`. The quartic
    /// coupling is frozen by `pt_step` for j ≥ j_m.
    pub fn flow_above(&self, record: &mut FlowRecord) -> Result<f64> {
        if record.diverged.is_some() {
            return Err(RgError::Domain(
                "cannot continue a diverged record past the mass scale".into(),
            ));
        }
        let jm = record.jm;
        let sbar = self.fp.sbar;
        let spec = &self.table.spec;
        let floor = sbar * spec.l_pow(-spec.alpha() * jm as f64);
        let mut state = record.last().state;
        let mut j = record.last().j;
        let mut p = record.last().p;
        let mut residuals = Vec::new();
        while j + 1 < self.table.steps() && j < jm + J_MAX_ABOVE {
            let next = match self.pt_step(j, &state) {
                Ok(next) => next,
                Err(RgError::FlowDiverged { scale, quantity }) => {
                    record.diverged = Some((scale, quantity));
                    return Err(RgError::FlowDiverged { scale, quantity: String::new() });
                }
                Err(e) => return Err(e),
            };
            let dnu = (next.nu - state.nu).abs();
            residuals.push(dnu);
            state = next;
            j += 1;
            p = self.push_row(record, j, state, p);
            if j > jm && dnu < NU_STOP_RTOL * (state.nu.abs() + floor) {
                record.nu_infinity = Some(state.nu);
                return Ok(state.nu);
            }
        }
        Err(RgError::NoConvergence {
            what: format!(
                "nu flow above the mass scale (reached j = {j}, residuals {:?})",
                &residuals[residuals.len().saturating_sub(4)..]
            ),
            iterations: j - jm,
            residual: residuals.last().copied().unwrap_or(f64::NAN),
        })
    }

    /// Forward-mode derivatives of the recorded trajectory with respect to
    /// ν₀ (equivalently mu0, since ∂ν₀/∂mu0 = 1 at fixed y₀). Coefficients
    /// depend only on m², so they differentiate to zero; the remainder
    /// draws are ν₀-independent constants. Initial data: (g′, ν′) = (0, 1).
    pub fn tangent_flow(&self, record: &mut FlowRecord, order: u8) -> Result<()> {
        if !(1..=2).contains(&order) {
            return Err(RgError::Domain(format!("tangent order {order} not in 1..=2")));
        }
        let jm = record.jm;
        let n = self.table.spec.n;
        let gb = self.table.spec.gamma_bar();
        let mut t = TangentState {
            nu1: 1.0,
            ..TangentState::default()
        };
        let mut out = Vec::with_capacity(record.rows.len());
        out.push(t);
        for win in record.rows.windows(2) {
            let j = win[0].j;
            let st = &win[0].state;
            let r = self.table.raw_at(j);
            let (g, nu) = (st.g, st.nu);
            let (g1, nu1, g2, nu2) = (t.g1, t.nu1, t.g2, t.nu2);
            let (w, wp) = (r.w1, r.w1_next);
            let e = r.eta_p;
            // First derivatives of δ[νw] and δ[ν²w].
            let a1 = (nu1 + e * g1) * wp - nu1 * w;
            let b1 = 2.0 * (nu + e * g) * (nu1 + e * g1) * wp - 2.0 * nu * nu1 * w;
            let (g1n, g2n);
            if j < jm {
                let a = (nu + e * g) * wp - nu * w;
                let a2 = (nu2 + e * g2) * wp - nu2 * w;
                g1n = g1 - 2.0 * r.beta_p * g * g1 - 4.0 * (g1 * a + g * a1);
                g2n = g2
                    - 2.0 * r.beta_p * (g1 * g1 + g * g2)
                    - 4.0 * (g2 * a + 2.0 * g1 * a1 + g * a2);
            } else {
                g1n = g1;
                g2n = g2;
            }
            let b2 = 2.0
                * ((nu1 + e * g1) * (nu1 + e * g1) + (nu + e * g) * (nu2 + e * g2))
                * wp
                - 2.0 * (nu1 * nu1 + nu * nu2) * w;
            let nu1n = nu1 + e * g1 + 4.0 * e * (g1 * nu + g * nu1) * w
                - 2.0 * r.xi_p * g * g1
                - gb * r.beta_p * (nu1 * g + nu * g1)
                - b1;
            let nu2n = nu2
                + e * g2
                + 4.0 * e * (g2 * nu + 2.0 * g1 * nu1 + g * nu2) * w
                - 2.0 * r.xi_p * (g1 * g1 + g * g2)
                - gb * r.beta_p * (nu2 * g + 2.0 * nu1 * g1 + nu * g2)
                - b2;
            let du1 = if n == 0 {
                0.0
            } else {
                r.kappa_g_p * g1 + r.kappa_nu_p * nu1
                    - r.kappa_gnu_p * (g1 * nu + g * nu1)
                    - 2.0 * r.kappa_gg_p * g * g1
                    - 2.0 * r.kappa_nunu_p * nu * nu1
            };
            t = TangentState {
                g1: g1n,
                nu1: nu1n,
                u1: t.u1 + du1,
                g2: if order == 2 { g2n } else { 0.0 },
                nu2: if order == 2 { nu2n } else { 0.0 },
                u2: 0.0,
            };
            out.push(t);
        }
        record.tangents = Some(out);
        Ok(())
    }

    /// Per-step second-derivative increment of u in the cancelled form:
    /// the pair κ_ν ν″ − 2κ_νν (ν′)² is rewritten so that the large
    /// opposing pieces combine analytically before evaluation.
    fn du2_cancelled(&self, j: usize, st: &CouplingState, t: &TangentState) -> f64 {
        let n = self.table.spec.n as f64;
        if n == 0.0 {
            return 0.0;
        }
        let r = self.table.raw_at(j);
        let (g, nu) = (st.g, st.nu);
        r.kappa_g_p * t.g2
            - r.kappa_gnu_p * (t.g2 * nu + 2.0 * t.g1 * t.nu1 + g * t.nu2)
            - 2.0 * r.kappa_gg_p * (g * t.g2 + t.g1 * t.g1)
            - 2.0 * r.kappa_nunu_p * nu * t.nu2
            + (-0.5 * n * r.delta_w2 * t.nu1 * t.nu1
                + 0.5 * n * r.c_diag * (t.nu2 + 2.0 * r.w1 * t.nu1 * t.nu1))
    }

    /// Same increment without the rearrangement (dual form for checks).
    pub fn du2_straight(&self, j: usize, st: &CouplingState, t: &TangentState) -> f64 {
        let n = self.table.spec.n;
        if n == 0 {
            return 0.0;
        }
        let r = self.table.raw_at(j);
        let (g, nu) = (st.g, st.nu);
        r.kappa_g_p * t.g2 + r.kappa_nu_p * t.nu2
            - r.kappa_gnu_p * (t.g2 * nu + 2.0 * t.g1 * t.nu1 + g * t.nu2)
            - 2.0 * r.kappa_gg_p * (g * t.g2 + t.g1 * t.g1)
            - 2.0 * r.kappa_nunu_p * (nu * t.nu2 + t.nu1 * t.nu1)
    }

    /// Accumulate u″ over the record (cancelled form), writing the running
    /// total into the tangent rows and returning the final value.
    pub fn u_second_flow(&self, record: &mut FlowRecord) -> Result<f64> {
        let Some(tangents) = record.tangents.clone() else {
            return Err(RgError::Domain(
                "u_second_flow needs order-2 tangents on the record".into(),
            ));
        };
        let mut total = 0.0;
        let mut out = tangents.clone();
        for (i, win) in record.rows.windows(2).enumerate() {
            total += self.du2_cancelled(win[0].j, &win[0].state, &tangents[i]);
            out[i + 1].u2 = total;
        }
        record.tangents = Some(out);
        record.u2_infinity = Some(total);
        Ok(total)
    }

    /// P product at scale j (recorded running value).
    pub fn p_product(&self, record: &FlowRecord, j: usize) -> f64 {
        record.at(j).p
    }

    /// Diagnostic ratio P_j / (g_j/g_0)^γ̄ (both sides ~ 1 on tuned flows).
    pub fn p_ratio(&self, record: &FlowRecord, j: usize) -> f64 {
        let gb = self.table.spec.gamma_bar();
        let g0 = record.at(0).state.g;
        let gj = record.at(j).state.g
            * self
                .table
                .spec
                .l_pow(self.table.spec.epsilon * (j.min(record.jm)) as f64);
        record.at(j).p / (gj / g0).powf(gb)
    }

    /// Shooting residual for the tuner: the transformed μ at `target`
    /// (1 ≤ target ≤ j_m + 1). Flows that left the stability box before the
    /// target yield a sign-preserving boosted surrogate instead, so bisection
    /// can operate on arbitrarily bad initial values: the transformed μ is
    /// the coordinate that is monotone in mu0, while the raw μ̂ carries the
    /// −η_{≥}ĝ background offset.
    pub fn shooting_residual(&self, record: &FlowRecord, target: usize) -> Result<f64> {
        let spec = &self.table.spec;
        let jm = record.jm;
        if target == 0 || target > jm + 1 {
            return Err(RgError::Domain(format!(
                "shooting target {target} outside 1..={}",
                jm + 1
            )));
        }
        let surrogate = |row: &ScaleRow| {
            let boost = spec.l_pow(spec.alpha() * (target.saturating_sub(row.j)) as f64);
            row.ts.mu * boost
        };
        let last = record.last();
        if last.j >= target {
            return Ok(record.at(target).ts.mu);
        }
        if record.diverged.is_some() {
            return Ok(surrogate(last));
        }
        if last.j < jm {
            return Err(RgError::Domain(
                "record does not reach the mass scale".into(),
            ));
        }
        if self.table.steps() <= jm + 1 {
            return Err(RgError::Config(format!(
                "coefficient table too shallow for the residual at j = {}",
                jm + 1
            )));
        }
        // Complete below-record ending exactly at j_m: take the one extra step.
        let state = match self.pt_step(jm, &last.state) {
            Ok(s) => s,
            Err(RgError::FlowDiverged { .. }) => return Ok(surrogate(record.at(jm))),
            Err(e) => return Err(e),
        };
        let (ghat, muhat) = self.hat(jm + 1, &state);
        Ok(self.transform(jm + 1, ghat, muhat).mu)
    }

    /// `shooting_residual` at the default target j_m + 1.
    pub fn residual_past_jm(&self, record: &FlowRecord) -> Result<f64> {
        self.shooting_residual(record, record.jm + 1)
    }
}
