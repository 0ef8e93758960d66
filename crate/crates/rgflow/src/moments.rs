//! Lattice moments of the partial covariance w_j = Σ_{i≤j} C_i and the
//! slice C_{j+1}, computed entirely in momentum space.
//!
//! Every coefficient of the discrete flow is built from sums of the form
//! Σ_x w(x)^p C(x)^q. Real-space windows cannot reach them at depth — slice
//! j lives at distance L^{j-1}, which exceeds 10^12 sites within the sweeps
//! this crate runs — but all of them are Brillouin-zone integrals:
//!
//!   Σ_x f(x) g(x)            = (2π)^{-1} ∫ f̂ ĝ dk,
//!   Σ_x f g h                = (2π)^{-1} ∫ \widehat{fg} ĥ dk,
//!   \widehat{fg}(k)          = (2π)^{-1} ∫ f̂(q) ĝ(k-q) dq,
//!
//! with every hat function even and 2π-periodic. Products of two hats are
//! evaluated through the symmetric substitution q = k/2 + r, which leaves a
//! single interior feature at r = k/2 (where one argument crosses zero) and
//! is integrated by two logarithmic panel meshes meeting at that point.
//!
//! Accuracy is tiered deliberately: quadratic objects (diagonals, bubbles,
//! pair sums) drive the precision-critical parts of the flow and are
//! integrated on the full-resolution mesh with direct symbol evaluation;
//! cubic and quartic sums enter the flow only through O(s̄²)-suppressed
//! corrections, so they run on the coarser `conv_points` meshes against
//! spline-tabulated symbols.
//!
//! The combinations the flow actually consumes are *differences* like
//! δ[w²] - 2 C₀ w^{(1)} whose naive evaluation could lose digits; in this
//! regime the cancellations are O(1)-shallow (verified in tests), and the
//! positive-integrand form of δ[w²] is kept exact by construction.

use crate::decomp::ScaleDecomposition;
use crate::kernels::symbol_lambda_1d;
use crate::quad::{gl_mesh, log_gl_panels, CubicSpline};

/// Hard floor of the convolution t-meshes; integrands there are bounded, so
/// the neglected mass is ≤ floor · sup|integrand|.
const CONV_T_FLOOR: f64 = 1e-30;
/// Hard floor of the spline tabulation grid in k.
const TAB_K_FLOOR: f64 = 1e-26;

/// All moments of (w_j, C_{j+1}) that the flow coefficients at step j need.
/// Everything here is independent of the number of field components.
#[derive(Debug, Clone)]
pub struct StepMoments {
    pub j: usize,
    /// w^{(1)} = Σ_x w(x) = ŵ(0).
    pub w1: f64,
    /// Σ_x C(x) = Ĉ(0).
    pub c1: f64,
    /// C₀ = C(0,0), the slice diagonal.
    pub c_diag: f64,
    /// Diagonal of the remainder R_j (what is left to integrate out,
    /// including this step's slice).
    pub remainder_diag: f64,
    /// Diagonal of R_{j+1}, on the same mesh (their difference is exactly
    /// the slice diagonal).
    pub remainder_diag_next: f64,
    /// w^{(2)} = Σ_x w(x)².
    pub w2: f64,
    /// δ[w²] = Σ_x [(w+C)² - w²](x), positive by construction.
    pub delta_w2: f64,
    /// Σ_x w C and Σ_x C².
    pub sum_wc: f64,
    pub sum_c2: f64,
    /// w^{(3)} = Σ_x w(x)³.
    pub w3: f64,
    /// Cubic sums Σ w²C, Σ wC², Σ C³.
    pub sum_w2c: f64,
    pub sum_wc2: f64,
    pub sum_c3: f64,
    /// Quartic sums Σ w³C, Σ w²C², Σ wC³, Σ C⁴.
    pub sum_w3c: f64,
    pub sum_w2c2: f64,
    pub sum_wc3: f64,
    pub sum_c4: f64,
}

impl StepMoments {
    /// δ[w²] - 2 C₀ w^{(1)} = 2 Σ_x w(x)(C(x) - C₀) + Σ C², the
    /// diagonal-subtracted pair sum entering the quadratic vacuum flow.
    pub fn pair_combo(&self) -> f64 {
        2.0 * (self.sum_wc - self.c_diag * self.w1) + self.sum_c2
    }

    /// δ[w³] - 3 w^{(2)} C₀ = 3 Σ w²(C-C₀) + 3 Σ wC² + Σ C³, the
    /// diagonal-subtracted triple sum entering the mass flow.
    pub fn cubic_combo(&self) -> f64 {
        3.0 * (self.sum_w2c - self.c_diag * self.w2) + 3.0 * self.sum_wc2 + self.sum_c3
    }

    /// δ[w⁴] - 4 C₀ w^{(3)} - 6 C₀² w^{(2)}
    ///   = 4 Σ w³(C-C₀) + 6 Σ w²(C²-C₀²) + 4 Σ wC³ + Σ C⁴,
    /// the diagonal-subtracted quadruple sum entering the vacuum flow.
    pub fn quartic_combo(&self) -> f64 {
        4.0 * (self.sum_w3c - self.c_diag * self.w3)
            + 6.0 * (self.sum_w2c2 - self.c_diag * self.c_diag * self.w2)
            + 4.0 * self.sum_wc3
            + self.sum_c4
    }

    /// Internal consistency: δ[w²] computed in positive form must equal
    /// 2 Σ wC + Σ C² assembled from its parts.
    pub fn delta_w2_residual(&self) -> f64 {
        (self.delta_w2 - (2.0 * self.sum_wc + self.sum_c2)).abs()
            / self.delta_w2.abs().max(f64::MIN_POSITIVE)
    }
}

/// An even 2π-periodic function of momentum.
trait EvenSymbol {
    fn at(&self, k: f64) -> f64;
}

/// Direct backend evaluation (closed form or ρ-integral per call).
struct DirectSymbol<'a> {
    dc: &'a ScaleDecomposition,
    /// 0 = partial sum ŵ_j, 1 = slice Ĉ_{j+1}.
    which: u8,
    j: usize,
}

impl EvenSymbol for DirectSymbol<'_> {
    fn at(&self, k: f64) -> f64 {
        let lam = symbol_lambda_1d(k);
        match self.which {
            0 => self.dc.partial_symbol(self.j, lam),
            _ => self.dc.slice_symbol(self.j + 1, lam),
        }
    }
}

/// Spline tabulation in ln k of an even periodic symbol on (0, π], with the
/// argument folded into the zone first.
struct SplineSymbol {
    spline: CubicSpline,
}

impl SplineSymbol {
    /// Tabulate on a log grid over [k_lo, π]. Below k_lo the spline clamps
    /// to the value at k_lo, so pick k_lo well inside the symbol's flat
    /// small-momentum region.
    fn build<S: EvenSymbol>(sym: &S, points: usize, k_lo: f64) -> Self {
        let k_lo = k_lo.max(TAB_K_FLOOR);
        let span = (std::f64::consts::PI / k_lo).ln();
        let n = points.max(64);
        let xs: Vec<f64> = (0..=n)
            .map(|i| k_lo.ln() + span * i as f64 / n as f64)
            .collect();
        let ys: Vec<f64> = xs.iter().map(|&u| sym.at(u.exp())).collect();
        SplineSymbol {
            spline: CubicSpline::new(xs, ys),
        }
    }
}

impl EvenSymbol for SplineSymbol {
    fn at(&self, k: f64) -> f64 {
        let folded = fold_to_zone(k);
        self.spline.eval(folded.max(1e-290).ln())
    }
}

/// Fold any real momentum into [0, π] using evenness and periodicity.
fn fold_to_zone(k: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut t = k.abs() % two_pi;
    if t > std::f64::consts::PI {
        t = two_pi - t;
    }
    t
}

/// \widehat{fg}(k) = (2π)^{-1} ∫_{-π}^{π} f̂(q) ĝ(k-q) dq for even periodic
/// f̂, ĝ. Substituting q = k/2 + r and symmetrising leaves the single
/// feature r = k/2, split into two log meshes in t = |r - k/2|.
fn conv_at<A: EvenSymbol, B: EvenSymbol>(
    a: &A,
    b: &B,
    k: f64,
    base_points: usize,
    t_floor: f64,
) -> f64 {
    let k = fold_to_zone(k);
    let half = 0.5 * k;
    let t_floor = t_floor.max(CONV_T_FLOOR);
    let integrand = |t: f64, sign: f64| {
        // r = k/2 ± t: arguments k/2 + r = k ± t… and k/2 - r = ∓t.
        let p = a.at(k + sign * t) * b.at(t) + a.at(t) * b.at(k + sign * t);
        p
    };
    let mut total = 0.0;
    // r ∈ [0, k/2]: t = k/2 - r ∈ (0, k/2].
    if half > t_floor {
        total += log_gl_panels(&|t: f64| integrand(t, -1.0), t_floor, half, base_points, 0.0);
    }
    // r ∈ [k/2, π]: t = r - k/2 ∈ (0, π - k/2].
    let upper = std::f64::consts::PI - half;
    if upper > t_floor {
        total += log_gl_panels(&|t: f64| integrand(t, 1.0), t_floor, upper, base_points, 0.0);
    }
    total / (2.0 * std::f64::consts::PI)
}

/// Tabulate \widehat{fg} on the coarse zone mesh as a spline symbol.
fn conv_table<A: EvenSymbol, B: EvenSymbol>(
    a: &A,
    b: &B,
    tab_points: usize,
    base_points: usize,
    t_floor: f64,
    k_lo: f64,
) -> SplineSymbol {
    let k_lo = k_lo.max(TAB_K_FLOOR);
    let span = (std::f64::consts::PI / k_lo).ln();
    let n = tab_points.max(64);
    let xs: Vec<f64> = (0..=n)
        .map(|i| k_lo.ln() + span * i as f64 / n as f64)
        .collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&u| conv_at(a, b, u.exp(), base_points, t_floor))
        .collect();
    SplineSymbol {
        spline: CubicSpline::new(xs, ys),
    }
}

/// Moments for every step a flow will visit, cached per decomposition.
///
/// Everything in here depends only on (m², backend, quadrature); in
/// particular it is independent of the coupling, the initial mass, and the
/// number of field components, so one table serves a whole bisection sweep
/// and every n at a given m².
#[derive(Debug, Clone)]
pub struct MomentTable {
    pub m2: f64,
    /// Mass scale j_m, or `usize::MAX` when m² = 0.
    pub jm: usize,
    /// Step moments for j = 0..=depth.
    pub steps: Vec<StepMoments>,
}

impl MomentTable {
    /// Build moments for j = 0..=depth.
    pub fn build(dc: &ScaleDecomposition, depth: usize) -> crate::model::Result<Self> {
        let jm = if dc.m2 == 0.0 {
            usize::MAX
        } else {
            dc.mass_scale()?
        };
        let steps = (0..=depth).map(|j| step_moments(dc, j)).collect();
        Ok(MomentTable {
            m2: dc.m2,
            jm,
            steps,
        })
    }

    /// Deepest step held.
    pub fn depth(&self) -> usize {
        self.steps.len() - 1
    }
}

/// Compute all step-j moments for a decomposition.
pub fn step_moments(dc: &ScaleDecomposition, j: usize) -> StepMoments {
    assert_eq!(dc.model.d, 1, "the moment engine is one-dimensional");
    let pi = std::f64::consts::PI;
    let w_sym = DirectSymbol { dc, which: 0, j };
    let c_sym = DirectSymbol { dc, which: 1, j };

    // Zero-momentum values are exact λ = 0 evaluations.
    let w1 = dc.partial_symbol(j, 0.0);
    let c1 = dc.slice_symbol(j + 1, 0.0);

    // Quadratic moments on the precision mesh. The slice symbol is dead
    // above its envelope cut; the mesh covers the full zone regardless
    // (the waste is small and keeps all quadratic objects on one mesh).
    let mesh = gl_mesh(TAB_K_FLOOR, pi, dc.q.k_points_per_axis, 0.0);
    let mut c_diag = 0.0;
    let mut w2 = 0.0;
    let mut delta_w2 = 0.0;
    let mut sum_wc = 0.0;
    let mut sum_c2 = 0.0;
    let mut remainder_diag = 0.0;
    let mut remainder_diag_next = 0.0;
    for &(k, wt) in &mesh {
        let lam = symbol_lambda_1d(k);
        let wv = dc.partial_symbol(j, lam);
        let cv = dc.slice_symbol(j + 1, lam);
        c_diag += wt * cv;
        w2 += wt * wv * wv;
        delta_w2 += wt * (2.0 * wv + cv) * cv;
        sum_wc += wt * wv * cv;
        sum_c2 += wt * cv * cv;
        let rj = dc.remainder_symbol(j, lam);
        remainder_diag += wt * rj;
        remainder_diag_next += wt * (rj - cv);
    }
    c_diag /= pi;
    w2 /= pi;
    delta_w2 /= pi;
    sum_wc /= pi;
    sum_c2 /= pi;
    remainder_diag /= pi;
    remainder_diag_next /= pi;

    // Cubic and quartic moments through the convolution layer on spline
    // symbols; they only enter the flow at the 1e-3 .. 1e-2 level.
    //
    // Both ŵ_j and Ĉ_{j+1} are flat below the spectral knee k ~ π L^{-j}
    // (the resolvent prefactors cancel there), so the tabulation and the
    // t-meshes only need to reach a safe margin below it. The truncated
    // region contributes ≲ floor/knee of the integrals (the measure is
    // linear in k), far inside this layer's accuracy budget.
    let knee = pi * dc.model.l_pow(-(j as f64 + 2.0));
    let t_floor = (1e-4 * knee).max(CONV_T_FLOOR);
    let tab_floor = (1e-3 * knee).max(TAB_K_FLOOR);

    // Once the mass has killed the slice (c_diag collapses far below its
    // critical-scaling magnitude L^{-(d-α)j}), every conv-layer moment is
    // bounded by powers of the dead slice and cannot move the flow even
    // after rescaling; report them as exact zeros instead of integrating
    // noise. (w³ alone stays finite, but it is only ever consumed
    // multiplied by the slice.)
    let dm_alpha = dc.model.d as f64 - dc.model.alpha();
    let slice_dead = c_diag.abs() < 1e-20 * dc.model.l_pow(-dm_alpha * j as f64);

    let mut w3 = 0.0;
    let mut sum_w2c = 0.0;
    let mut sum_wc2 = 0.0;
    let mut sum_c3 = 0.0;
    let mut sum_w3c = 0.0;
    let mut sum_w2c2 = 0.0;
    let mut sum_wc3 = 0.0;
    let mut sum_c4 = 0.0;
    if !slice_dead {
        let cp = dc.q.conv_points;
        let tab = cp.max(192);
        let w_tab = SplineSymbol::build(&w_sym, 4 * tab, tab_floor);
        let c_tab = SplineSymbol::build(&c_sym, 4 * tab, tab_floor);
        let p_c2 = conv_table(&c_tab, &c_tab, tab, cp, t_floor, tab_floor);
        let coarse = gl_mesh(t_floor.max(TAB_K_FLOOR), pi, cp.max(192), 0.0);

        let trivial_w = w1 == 0.0; // step 0: nothing integrated out yet
        let (p_w2, p_w3) = if trivial_w {
            (None, None)
        } else {
            let p_w2 = conv_table(&w_tab, &w_tab, tab, cp, t_floor, tab_floor);
            let p_w3 = conv_table(&p_w2, &w_tab, tab, cp, t_floor, tab_floor);
            (Some(p_w2), Some(p_w3))
        };
        let p_c3 = conv_table(&p_c2, &c_tab, tab, cp, t_floor, tab_floor);

        for &(k, wt) in &coarse {
            let wv = w_tab.at(k);
            let cv = c_tab.at(k);
            let pc2 = p_c2.at(k);
            let pc3 = p_c3.at(k);
            sum_wc2 += wt * wv * pc2;
            sum_c3 += wt * cv * pc2;
            sum_wc3 += wt * wv * pc3;
            sum_c4 += wt * pc2 * pc2;
            if let (Some(pw2), Some(pw3)) = (&p_w2, &p_w3) {
                let pw2v = pw2.at(k);
                w3 += wt * pw2v * wv;
                sum_w2c += wt * pw2v * cv;
                sum_w3c += wt * pw3.at(k) * cv;
                sum_w2c2 += wt * pw2v * pc2;
            }
        }
        w3 /= pi;
        sum_w2c /= pi;
        sum_wc2 /= pi;
        sum_c3 /= pi;
        sum_w3c /= pi;
        sum_w2c2 /= pi;
        sum_wc3 /= pi;
        sum_c4 /= pi;
    }

    StepMoments {
        j,
        w1,
        c1,
        c_diag,
        remainder_diag,
        remainder_diag_next,
        w2,
        delta_w2,
        sum_wc,
        sum_c2,
        w3,
        sum_w2c,
        sum_wc2,
        sum_c3,
        sum_w3c,
        sum_w2c2,
        sum_wc3,
        sum_c4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::{Backend, ScaleDecomposition};
    use crate::model::{ModelSpec, QuadratureSpec};
    use crate::quad::bz_integral_1d;
    use approx::assert_relative_eq;

    /// Fourier transform of the geometric kernel a^{|x|}.
    struct Geometric {
        a: f64,
    }
    impl EvenSymbol for Geometric {
        fn at(&self, k: f64) -> f64 {
            let a = self.a;
            (1.0 - a * a) / (1.0 - 2.0 * a * k.cos() + a * a)
        }
    }

    #[test]
    fn convolution_matches_geometric_closed_form() {
        // (a^{|x|})² = (a²)^{|x|}, so the convolution of the geometric
        // symbol with itself is again geometric with parameter a².
        let a = 0.62;
        let f = Geometric { a };
        let want = Geometric { a: a * a };
        for &k in &[1e-9, 1e-4, 0.02, 0.7, 2.9, std::f64::consts::PI] {
            let got = conv_at(&f, &f, k, 256, CONV_T_FLOOR);
            assert_relative_eq!(got, want.at(k), max_relative = 1e-9);
        }
    }

    #[test]
    fn convolution_of_distinct_symbols() {
        // a^{|x|} · b^{|x|} = (ab)^{|x|}.
        let f = Geometric { a: 0.45 };
        let g = Geometric { a: 0.83 };
        let want = Geometric { a: 0.45 * 0.83 };
        for &k in &[1e-6, 0.3, 1.8] {
            let got = conv_at(&f, &g, k, 256, CONV_T_FLOOR);
            assert_relative_eq!(got, want.at(k), max_relative = 1e-9);
        }
    }

    #[test]
    fn parseval_reproduces_geometric_power_sums() {
        // Σ_x a^{p|x|} = (1+a^p)/(1-a^p) in closed form; route the p = 3
        // case through conv_table + zone integral like the production code.
        let a = 0.7f64;
        let f = Geometric { a };
        let p2 = conv_table(&f, &f, 1024, 256, CONV_T_FLOOR, TAB_K_FLOOR);
        let s3 = bz_integral_1d(|k| p2.at(k) * f.at(k), 0.0, 2048);
        let want = (1.0 + a.powi(3)) / (1.0 - a.powi(3));
        // The tabulation grid spends most of its nodes on decades the
        // geometric symbol is flat over; pointwise conv tests cover the
        // high-precision claims, this guards normalisation and wiring.
        assert_relative_eq!(s3, want, max_relative = 1e-5);
    }

    fn decomp(m2: f64) -> ScaleDecomposition {
        ScaleDecomposition::new(
            ModelSpec {
                d: 1,
                l: 16,
                epsilon: 0.02,
                n: 1,
                g: 0.01,
            },
            QuadratureSpec::default(),
            Backend::DirectFractional,
            m2,
        )
        .unwrap()
    }

    #[test]
    fn step_zero_has_no_partial_sum() {
        let m = step_moments(&decomp(1e-3), 0);
        assert_eq!(m.w1, 0.0);
        assert_eq!(m.w2, 0.0);
        assert_eq!(m.w3, 0.0);
        assert!(m.c_diag > 0.0);
        // With w ≡ 0: δ[w²] = Σ C².
        assert_relative_eq!(m.delta_w2, m.sum_c2, max_relative = 1e-13);
    }

    #[test]
    fn quadratic_identities_hold_on_shared_mesh() {
        for j in [1usize, 3, 6] {
            let m = step_moments(&decomp(1e-4), j);
            assert!(m.delta_w2 >= 0.0);
            assert!(m.delta_w2_residual() < 1e-12, "at j={j}");
            // Remainder diagonals difference telescopes to the slice diagonal.
            let diff = m.remainder_diag - m.remainder_diag_next;
            assert_relative_eq!(diff, m.c_diag, max_relative = 1e-12);
        }
    }

    #[test]
    fn pair_sum_matches_real_space_window() {
        // Independent x-space check of Σ_x w(x)² at a shallow scale where
        // window entries are affordable. Algebraic tails (x^{-1-α} per
        // factor) limit the achievable agreement; budget for the remainder.
        let dc = decomp(1e-2);
        let j = 1usize;
        let m = step_moments(&dc, j);
        let radius = 400i64;
        let entry = |x: i64| {
            let xa = x.abs() as f64;
            bz_integral_1d(
                |k| dc.partial_symbol(j, symbol_lambda_1d(k)) * (k * xa).cos(),
                xa,
                dc.q.k_points_per_axis,
            )
        };
        let mut w2x = entry(0).powi(2);
        let mut last = 0.0;
        for x in 1..=radius {
            last = entry(x);
            w2x += 2.0 * last * last;
        }
        // Tail estimate: |w(x)| ~ c x^{-1-α}, so Σ_{x>R} w² ≈ R w(R)²/(1+2α).
        let tail = (radius as f64) * last * last / (1.0 + 2.0 * 0.51);
        let diff = (m.w2 - w2x).abs();
        assert!(
            diff < 5.0 * tail.abs() + 1e-6 * m.w2,
            "k-space {} vs x-space {} (tail est {:.2e})",
            m.w2,
            w2x,
            tail
        );
    }

    #[test]
    fn cubic_combo_is_diagonal_subtracted() {
        // At any step, |cubic_combo| must stay comparable to its parts
        // rather than collapsing to rounding noise: the cancellation is
        // structural (removes the x = 0 diagonal), not catastrophic.
        let m = step_moments(&decomp(1e-4), 4);
        let parts = 3.0 * (m.sum_w2c.abs() + m.c_diag * m.w2)
            + 3.0 * m.sum_wc2.abs()
            + m.sum_c3.abs();
        assert!(m.cubic_combo().abs() > 1e-6 * parts);
    }
}
