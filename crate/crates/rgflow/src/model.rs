//! Model and quadrature parameter sets shared by every stage of the pipeline.
//!
//! A model is an O(n) field on Z^d whose Gaussian part is the fractional
//! resolvent ((-Δ)^{α/2} + m²)^{-1} with long-range exponent α = (d+ε)/2.
//! ε > 0 measures the distance below the upper-critical dimension: all
//! perturbative couplings are organised in powers of ε, and the interesting
//! regime is 0 < ε ≪ 1 at fixed small coupling g.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors shared by the numerical layers.
///
/// `Domain` flags precondition violations (caller bugs or bad config),
/// the remaining variants are runtime diagnoses that map to exit code 3
/// in the CLI.
#[derive(Debug, Error)]
pub enum RgError {
    /// Parameter outside the documented domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A quadrature failed its internal convergence/consistency check.
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    /// A Fourier-side slice symbol came out negative beyond round-off.
    #[error("scale {j}: slice symbol negative ({min:.3e}) beyond tolerance")]
    Positivity { j: usize, min: f64 },
    /// A coupling left its stability box while iterating the flow.
    #[error("flow left the stability box at scale {scale}: {quantity}")]
    FlowDiverged { scale: usize, quantity: String },
    /// Bisection could not bracket a sign change for the shooting problem.
    #[error("shooting bracket failed after {doublings} doublings: residuals ({lo:.3e}, {hi:.3e})")]
    Bracket { doublings: usize, lo: f64, hi: f64 },
    /// The shooting residual was observed non-monotone in the initial value.
    #[error("shooting residual non-monotone near mu0 = {mu0:.6e}")]
    NonMonotone { mu0: f64 },
    /// An iterative scheme ran out of its iteration budget.
    #[error("no convergence in {what} after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },
    /// The coefficient plateau needed for the fixed point never formed.
    #[error("no beta-coefficient plateau within {scales} scales (best run {best_run})")]
    NoPlateau { scales: usize, best_run: usize },
    /// Configuration file / flag validation failure (CLI exit code 2).
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, RgError>;

/// Physical model parameters.
///
/// `alpha` is not stored: it is always (d+ε)/2, so d and ε determine it.
/// The β appearing in kernel operations defaults to α/2 = (d+ε)/4 but the
/// kernel layer also accepts a free β ∈ (0,1) for cross-checks.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ModelSpec {
    /// Spatial dimension of the lattice Z^d, 1 ≤ d ≤ 3.
    pub d: usize,
    /// Block ratio L ≥ 2 of the multi-scale decomposition.
    pub l: u32,
    /// Distance below the upper-critical dimension, ε = 2α - d > 0.
    pub epsilon: f64,
    /// Number of field components; n = 0 is the self-avoiding-walk limit.
    pub n: u32,
    /// Bare quartic coupling g > 0 (n ≥ 1) or walk interaction strength (n = 0).
    pub g: f64,
}

impl ModelSpec {
    /// Long-range exponent α = (d + ε)/2 of the base operator (-Δ)^{α/2}.
    pub fn alpha(&self) -> f64 {
        (self.d as f64 + self.epsilon) / 2.0
    }

    /// Exponent of the fractional Laplacian actually inverted: β = α/2.
    pub fn kernel_beta(&self) -> f64 {
        self.alpha() / 2.0
    }

    /// One-loop ratio γ̄ = (n+2)/(n+8) controlling the susceptibility exponent.
    pub fn gamma_bar(&self) -> f64 {
        (self.n as f64 + 2.0) / (self.n as f64 + 8.0)
    }

    /// Field scaling dimension used in norm bookkeeping: (d-α)/2 below the
    /// mass scale, (d+α')/2 above it, with α' = α/4.
    pub fn field_dimension(&self, above_mass_scale: bool) -> f64 {
        if above_mass_scale {
            (self.d as f64 + self.alpha() / 4.0) / 2.0
        } else {
            (self.d as f64 - self.alpha()) / 2.0
        }
    }

    /// Validate the mutual constraints; returns self for chaining.
    pub fn validated(self) -> Result<Self> {
        if !(1..=3).contains(&self.d) {
            return Err(RgError::Domain(format!("d = {} not in 1..=3", self.d)));
        }
        if self.l < 2 {
            return Err(RgError::Domain(format!("L = {} must be >= 2", self.l)));
        }
        if !(self.epsilon > 0.0) {
            return Err(RgError::Domain(format!(
                "epsilon = {} must be positive",
                self.epsilon
            )));
        }
        let alpha = self.alpha();
        if !(alpha < 2.0 && alpha < self.d as f64) {
            return Err(RgError::Domain(format!(
                "alpha = {alpha} must satisfy alpha < min(2, d); got d = {}, epsilon = {}",
                self.d, self.epsilon
            )));
        }
        if !(self.g >= 0.0) || !self.g.is_finite() {
            return Err(RgError::Domain(format!("g = {} must be >= 0", self.g)));
        }
        Ok(self)
    }

    /// ln L as f64, used in every rescaling power.
    pub fn ln_l(&self) -> f64 {
        (self.l as f64).ln()
    }

    /// L^p for fractional p.
    pub fn l_pow(&self, p: f64) -> f64 {
        (p * self.ln_l()).exp()
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            d: 1,
            l: 16,
            epsilon: 0.02,
            n: 1,
            g: 0.01,
        }
    }
}

/// Numerical quadrature controls.
///
/// `k_points_per_axis` is the base Brillouin-zone resolution. In d = 1 the
/// engine integrates by Gauss–Legendre panels in ln k (see `quad`), with this
/// many base nodes distributed over the logarithmic range; oscillatory
/// entries add panels proportionally to the total phase. In d ≥ 2 it is the
/// per-axis node count of a power-graded tensor mesh with grading
/// `grading_exponent`.
///
/// The s-integrals against the Stieltjes weight ρ are done in u = ln s over
/// `s_log_range` with `s_points` trapezoid nodes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct QuadratureSpec {
    pub k_points_per_axis: usize,
    /// Mesh grading exponent q ≥ 1 for the d ≥ 2 tensor mesh; q ≥ 3 is needed
    /// once integrands carry a |k|^{-α} singularity.
    pub grading_exponent: f64,
    /// (u_min, u_max) bounds of the logarithmic s-mesh.
    pub s_log_range: (f64, f64),
    pub s_points: usize,
    /// Base resolution of the circular-convolution layer feeding cubic and
    /// quartic lattice moments (those only enter at the 1e-3 .. 1e-2 level).
    pub conv_points: usize,
    /// Relative tolerance that certified truncations are budgeted against.
    pub rel_tol: f64,
}

impl QuadratureSpec {
    pub fn validated(self) -> Result<Self> {
        if self.k_points_per_axis < 16 {
            return Err(RgError::Domain(format!(
                "k_points_per_axis = {} too small (min 16)",
                self.k_points_per_axis
            )));
        }
        if !(self.grading_exponent >= 1.0) {
            return Err(RgError::Domain(format!(
                "grading_exponent = {} must be >= 1",
                self.grading_exponent
            )));
        }
        if !(self.s_log_range.0 < self.s_log_range.1) {
            return Err(RgError::Domain(format!(
                "s_log_range = ({}, {}) must be increasing",
                self.s_log_range.0, self.s_log_range.1
            )));
        }
        if self.s_points < 32 {
            return Err(RgError::Domain(format!(
                "s_points = {} too small (min 32)",
                self.s_points
            )));
        }
        if self.conv_points < 32 {
            return Err(RgError::Domain(format!(
                "conv_points = {} too small (min 32)",
                self.conv_points
            )));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1e-2) {
            return Err(RgError::Domain(format!(
                "rel_tol = {} outside (0, 1e-2)",
                self.rel_tol
            )));
        }
        Ok(self)
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            k_points_per_axis: 2048,
            grading_exponent: 6.0,
            // Wide enough that the ρ^{(β)} tails (~ e^{-β u} above, e^{(1-β)u}
            // below) are < 1e-12 for every β = α/2 ∈ (0.25, 1) in scope.
            s_log_range: (-200.0, 120.0),
            s_points: 2048,
            conv_points: 256,
            rel_tol: 1e-8,
        }
    }
}

/// A kernel restricted to a finite window, stored on the fundamental domain
/// of the lattice symmetry group (coordinate permutations and sign flips).
///
/// In d = 1 `values[i]` is the entry at offset i ∈ 0..=radius. In d ≥ 2
/// values are stored over the box 0 ≤ x_1, .., x_d ≤ radius in row-major
/// order and looked up through coordinate canonicalisation, trading a factor
/// ~2^d d! of memory for an index-free layout.
#[derive(Debug, Clone)]
pub struct KernelWindow {
    pub d: usize,
    pub radius: i64,
    pub values: Vec<f64>,
    /// Certified bound on the total absolute mass outside the window.
    pub tail_bound: f64,
}

impl KernelWindow {
    pub fn new(d: usize, radius: i64, values: Vec<f64>, tail_bound: f64) -> Self {
        let expect = ((radius + 1) as usize).pow(d as u32);
        assert_eq!(values.len(), expect, "window storage size mismatch");
        KernelWindow {
            d,
            radius,
            values,
            tail_bound,
        }
    }

    /// Entry at lattice offset `x` (len d), or None outside the window.
    pub fn get(&self, x: &[i64]) -> Option<f64> {
        debug_assert_eq!(x.len(), self.d);
        let mut idx = 0usize;
        let side = (self.radius + 1) as usize;
        for &xi in x {
            let a = xi.abs();
            if a > self.radius {
                return None;
            }
            idx = idx * side + a as usize;
        }
        // Canonical order does not matter for the box layout: the window is
        // built symmetric, so (|x1|,..,|xd|) indexes the stored value directly.
        Some(self.values[idx])
    }

    /// Number of lattice points represented by the fundamental-domain entry
    /// at `x` (with all coordinates ≥ 0): sign flips of nonzero coordinates.
    pub fn orbit_weight(x: &[i64]) -> f64 {
        let nonzero = x.iter().filter(|&&v| v != 0).count() as u32;
        2f64.powi(nonzero as i32)
    }

    /// Sum of the kernel over the full window (all sign combinations).
    pub fn full_sum(&self) -> f64 {
        let side = (self.radius + 1) as usize;
        let mut total = 0.0;
        let mut coords = vec![0i64; self.d];
        for flat in 0..self.values.len() {
            let mut rem = flat;
            for c in (0..self.d).rev() {
                coords[c] = (rem % side) as i64;
                rem /= side;
            }
            total += Self::orbit_weight(&coords) * self.values[flat];
        }
        total
    }
}

/// Mass scale j_m = ⌈1 + (1/α) log_L m^{-2}⌉, clamped to ≥ 1.
///
/// This is the scale at which m² L^{α(j-1)} crosses 1; beyond it the slices
/// are mass-suppressed and the flow coefficients decay.
pub fn mass_scale(model: &ModelSpec, m2: f64) -> Result<usize> {
    if !(m2 > 0.0) {
        return Err(RgError::Domain(format!("mass_scale needs m2 > 0, got {m2}")));
    }
    let alpha = model.alpha();
    let raw = 1.0 + (1.0 / alpha) * (1.0 / m2).ln() / model.ln_l();
    let jm = raw.ceil();
    Ok(if jm < 1.0 { 1 } else { jm as usize })
}
