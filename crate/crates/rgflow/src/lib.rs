//! Renormalisation-group flows for long-range O(n) lattice field theories.
//!
//! The crate builds the full pipeline from first principles:
//!
//! - [`kernels`] — fractional-Laplacian symbol, real-space entries, Green
//!   functions and the bubble integral on Z^d and discrete tori;
//! - [`decomp`] — multi-scale covariance decompositions of the critical
//!   propagator, with two independent backends;
//! - [`moments`] — the handful of lattice moments (diagonals, bubbles,
//!   triangles, squares) that feed the flow coefficients;
//! - [`coeffs`] — scale-dependent coefficients of the discrete flow
//!   equations, their rescalings, and fixed-point data;
//! - [`flow`] — second-order coupling-constant recursions, tangent flows and
//!   the accumulated four-point susceptibility;
//! - [`tune`] — the shooting/bisection search for the critical mass
//!   parameter;
//! - [`observe`] — susceptibility and specific-heat observables and
//!   power-law exponent fits;
//! - [`oracle`] — small exactly-solvable configurations (dense linear
//!   algebra, random-walk expansions, direct Gaussian quadrature of the
//!   partition function) used to cross-validate the production code paths.

pub mod coeffs;
pub mod config;
pub mod decomp;
pub mod flow;
pub mod kernels;
pub mod model;
pub mod moments;
pub mod observe;
pub mod oracle;
pub mod quad;
pub mod report;
pub mod tune;

pub use model::{mass_scale, KernelWindow, ModelSpec, QuadratureSpec, Result, RgError};

/// Shared, lazily-built fixtures for the unit tests. Moment sweeps are the
/// expensive part of the suite, so every module reuses the same handful of
/// coefficient tables instead of rebuilding them.
#[cfg(test)]
pub(crate) mod testfix {
    use crate::coeffs::CoefficientTable;
    use crate::decomp::{Backend, ScaleDecomposition};
    use crate::model::{ModelSpec, QuadratureSpec};
    use crate::moments::MomentTable;
    use std::sync::OnceLock;

    pub fn spec(n: u32) -> ModelSpec {
        ModelSpec {
            d: 1,
            l: 16,
            epsilon: 0.02,
            n,
            g: 0.01,
        }
    }

    pub fn direct_moments(m2: f64, depth: usize) -> MomentTable {
        let dc = ScaleDecomposition::new(
            spec(1),
            QuadratureSpec::default(),
            Backend::DirectFractional,
            m2,
        )
        .unwrap();
        MomentTable::build(&dc, depth).unwrap()
    }

    pub fn direct_table(m2: f64, n: u32, depth: usize) -> CoefficientTable {
        CoefficientTable::new(&direct_moments(m2, depth), &spec(n)).unwrap()
    }

    /// Massless depth-14 table (n = 1).
    pub fn massless14() -> &'static CoefficientTable {
        static T: OnceLock<CoefficientTable> = OnceLock::new();
        T.get_or_init(|| direct_table(0.0, 1, 14))
    }

    /// m² = 1e-4 depth-15 moments (mass scale j_m = 8), shared across n.
    pub fn massive1e4_moments() -> &'static MomentTable {
        static T: OnceLock<MomentTable> = OnceLock::new();
        T.get_or_init(|| direct_moments(1e-4, 15))
    }

    /// m² = 1e-4 depth-15 table (n = 1).
    pub fn massive1e4() -> &'static CoefficientTable {
        static T: OnceLock<CoefficientTable> = OnceLock::new();
        T.get_or_init(|| CoefficientTable::new(massive1e4_moments(), &spec(1)).unwrap())
    }

    /// Fixed point extracted from the massless table (n = 1).
    pub fn fixed_point() -> crate::coeffs::FixedPointData {
        static F: OnceLock<crate::coeffs::FixedPointData> = OnceLock::new();
        *F.get_or_init(|| crate::coeffs::extract_a(massless14()).unwrap())
    }

    /// Synthetic table pinned at the idealized fixed point: rescaled β ≡ a
    /// (raw β′_j = a L^{εj}), everything else zero. `jm` places the mass
    /// scale; pass depth + 10 to push it past the table end.
    pub fn pinned_table(a: f64, depth: usize, jm: usize) -> CoefficientTable {
        use crate::coeffs::{RawCoefficients, RescaledCoefficients};
        let s = spec(1);
        let raw = (0..depth)
            .map(|j| {
                let mut r = RawCoefficients::zeroed(j);
                // Below the mass scale the quartic coefficient grows like
                // L^{εj}; above it the slice covariances are mass-suppressed,
                // which the fixture mimics with an L^{-2α} per-scale decay.
                let above = j.saturating_sub(jm) as f64;
                r.beta_p = a
                    * s.l_pow(s.epsilon * j.min(jm) as f64)
                    * s.l_pow(-2.0 * s.alpha() * above);
                r
            })
            .collect();
        let rows = (0..depth)
            .map(|j| {
                let mut r = RescaledCoefficients::zeroed(j);
                r.beta = a;
                r.beta_colon = a;
                r
            })
            .collect();
        CoefficientTable::synthetic(s, 1e-30, jm, raw, rows)
    }

    /// Matching fixed-point data for `pinned_table`.
    pub fn pinned_fp(a: f64) -> crate::coeffs::FixedPointData {
        let s = spec(1);
        crate::coeffs::FixedPointData {
            a,
            plateau_window: (0, 0),
            plateau_residual: 0.0,
            sbar: (1.0 - s.l_pow(-s.epsilon)) / a,
        }
    }
}
