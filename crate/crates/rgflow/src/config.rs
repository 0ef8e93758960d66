//! Run configuration: a TOML file with nested sections, every field
//! defaulted, unknown keys rejected. The resolved (defaults-applied)
//! form can be echoed back for reproducibility, and its canonical
//! serialization is hashed into every emitted artifact header.

use serde::{Deserialize, Serialize};

use crate::decomp::Backend;
use crate::flow::RemainderModel;
use crate::model::{ModelSpec, QuadratureSpec, Result, RgError};
use crate::tune::{default_m2_grid, SweepConfig, TuneConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d: usize,
    pub l: u32,
    pub epsilon: f64,
    pub n: u32,
    /// Bare quartic coupling; 0 means "use the fixed-point value s̄".
    pub g: f64,
    /// Optional consistency pin: must equal (d + epsilon)/2 when present.
    pub alpha: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            d: 1,
            l: 16,
            epsilon: 0.02,
            n: 1,
            g: 0.0,
            alpha: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSection {
    pub k_points_per_axis: usize,
    pub grading_exponent: f64,
    pub s_log_range: [f64; 2],
    pub s_points: usize,
    pub conv_points: usize,
    pub rel_tol: f64,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        let q = QuadratureSpec::default();
        QuadratureSection {
            k_points_per_axis: q.k_points_per_axis,
            grading_exponent: q.grading_exponent,
            s_log_range: [q.s_log_range.0, q.s_log_range.1],
            s_points: q.s_points,
            conv_points: q.conv_points,
            rel_tol: q.rel_tol,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompositionSection {
    /// "direct" (fractional-resolvent slicing) or "rho-heat".
    pub backend: String,
    /// Mass used by the standalone `decompose` subcommand.
    pub m2: f64,
    /// Scales reported by `decompose`.
    pub depth: usize,
}

impl Default for DecompositionSection {
    fn default() -> Self {
        DecompositionSection {
            backend: "direct".into(),
            m2: 1e-4,
            depth: 12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub tol_mu: f64,
    pub bracket_factor: f64,
    pub target_offset: i64,
    /// Mass sweep grid; tuned in descending order.
    pub m2_grid: Vec<f64>,
    /// Mass points whose j_m exceeds this are skipped (reported, not fatal).
    pub j_max: usize,
    /// Depth of the massless table the fixed point is extracted from.
    pub massless_depth: usize,
    /// Scales kept past j_m in each per-mass table.
    pub depth_headroom: usize,
}

impl Default for TuneSection {
    fn default() -> Self {
        let t = TuneConfig::default();
        TuneSection {
            tol_mu: t.tol_mu,
            bracket_factor: t.bracket_factor,
            target_offset: t.target_offset as i64,
            m2_grid: default_m2_grid(),
            j_max: 60,
            massless_depth: 14,
            depth_headroom: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RemainderSection {
    pub enabled: bool,
    /// Fraction of the per-scale rigorous cap to inject (1 = at the cap).
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelsSection {
    /// Largest |x| tabulated by the `kernels` subcommand.
    pub radius: i64,
    /// Decay-band window checked by the generator report.
    pub band: [i64; 2],
}

impl Default for KernelsSection {
    fn default() -> Self {
        KernelsSection {
            radius: 40,
            band: [10, 200],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    /// Worker threads for independent mass points; 0 = available cores.
    pub pool: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "rgflow-out".into(),
            pool: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub quadrature: QuadratureSection,
    pub decomposition: DecompositionSection,
    pub tune: TuneSection,
    pub remainder: RemainderSection,
    pub kernels: KernelsSection,
    pub output: OutputSection,
}

impl RunConfig {
    /// Parse a TOML document; empty input yields pure defaults. Unknown
    /// keys anywhere are a schema error.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| RgError::Config(e.to_string()))
    }

    /// Collect every constraint violation (empty list means valid).
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let m = &self.model;
        if !(1..=3).contains(&m.d) {
            errs.push(format!("model.d = {} not in 1..=3", m.d));
        }
        if m.l < 2 {
            errs.push(format!("model.l = {} must be >= 2", m.l));
        }
        if !(m.epsilon > 0.0) {
            errs.push(format!("model.epsilon = {} must be > 0", m.epsilon));
        }
        let alpha = (m.d as f64 + m.epsilon) / 2.0;
        if !(alpha < m.d.min(2) as f64) {
            errs.push(format!(
                "model.epsilon = {} puts alpha = {alpha} at or above min(d, 2)",
                m.epsilon
            ));
        }
        if let Some(a) = m.alpha {
            if (a - alpha).abs() > 1e-12 {
                errs.push(format!(
                    "model.alpha = {a} inconsistent with model.d = {} and model.epsilon = {} \
                     (they give alpha = {alpha})",
                    m.d, m.epsilon
                ));
            }
        }
        if !(m.g >= 0.0) {
            errs.push(format!("model.g = {} must be >= 0", m.g));
        }
        if self.backend().is_none() {
            errs.push(format!(
                "decomposition.backend = {:?} (expected \"direct\" or \"rho-heat\")",
                self.decomposition.backend
            ));
        }
        if !(self.decomposition.m2 >= 0.0) {
            errs.push(format!(
                "decomposition.m2 = {} must be >= 0",
                self.decomposition.m2
            ));
        }
        if !(self.tune.tol_mu > 0.0) {
            errs.push(format!("tune.tol_mu = {} must be > 0", self.tune.tol_mu));
        }
        if !(self.tune.bracket_factor > 0.0) {
            errs.push(format!(
                "tune.bracket_factor = {} must be > 0",
                self.tune.bracket_factor
            ));
        }
        if self.tune.m2_grid.is_empty() {
            errs.push("tune.m2_grid is empty".into());
        }
        for &m2 in &self.tune.m2_grid {
            if !(m2 > 0.0) {
                errs.push(format!("tune.m2_grid entry {m2} must be > 0"));
                break;
            }
        }
        if self.tune.massless_depth < 4 {
            errs.push(format!(
                "tune.massless_depth = {} too shallow for a plateau",
                self.tune.massless_depth
            ));
        }
        if !(self.remainder.amplitude >= 0.0 && self.remainder.amplitude <= 1.0) {
            errs.push(format!(
                "remainder.amplitude = {} not in [0, 1]",
                self.remainder.amplitude
            ));
        }
        if self.kernels.radius < 1 {
            errs.push(format!("kernels.radius = {} must be >= 1", self.kernels.radius));
        }
        if self.kernels.band[0] < 1 || self.kernels.band[1] <= self.kernels.band[0] {
            errs.push(format!(
                "kernels.band = {:?} must satisfy 1 <= lo < hi",
                self.kernels.band
            ));
        }
        errs
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            d: self.model.d,
            l: self.model.l,
            epsilon: self.model.epsilon,
            n: self.model.n,
            g: self.model.g,
        }
    }

    pub fn quadrature_spec(&self) -> QuadratureSpec {
        QuadratureSpec {
            k_points_per_axis: self.quadrature.k_points_per_axis,
            grading_exponent: self.quadrature.grading_exponent,
            s_log_range: (self.quadrature.s_log_range[0], self.quadrature.s_log_range[1]),
            s_points: self.quadrature.s_points,
            conv_points: self.quadrature.conv_points,
            rel_tol: self.quadrature.rel_tol,
        }
    }

    pub fn backend(&self) -> Option<Backend> {
        match self.decomposition.backend.as_str() {
            "direct" | "direct-fractional" => Some(Backend::DirectFractional),
            "rho-heat" | "rho_heat" => Some(Backend::RhoHeat),
            _ => None,
        }
    }

    pub fn remainder_model(&self) -> RemainderModel {
        RemainderModel {
            enabled: self.remainder.enabled,
            amplitude: self.remainder.amplitude,
            seed: self.remainder.seed,
        }
    }

    pub fn tune_config(&self) -> TuneConfig {
        TuneConfig {
            tol_mu: self.tune.tol_mu,
            bracket_factor: self.tune.bracket_factor,
            target_offset: self.tune.target_offset as isize,
        }
    }

    /// Assemble the sweep configuration; `backend()` must have validated.
    pub fn sweep_config(&self) -> Result<SweepConfig> {
        let backend = self.backend().ok_or_else(|| {
            RgError::Config(format!(
                "unknown decomposition.backend {:?}",
                self.decomposition.backend
            ))
        })?;
        Ok(SweepConfig {
            m2_grid: self.tune.m2_grid.clone(),
            g: if self.model.g > 0.0 {
                Some(self.model.g)
            } else {
                None
            },
            tune: self.tune_config(),
            backend,
            quad: self.quadrature_spec(),
            depth_headroom: self.tune.depth_headroom,
            massless_depth: self.tune.massless_depth,
            j_max: self.tune.j_max,
            remainder: self.remainder_model(),
        })
    }

    /// Canonical serialized form (defaults applied) — what `validate-config`
    /// echoes and what the artifact hash is computed over.
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// FNV-1a hash of the canonical form; embedded in artifact headers so
    /// outputs are traceable to the exact resolved configuration.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.canonical_toml().as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    /// Worker pool size with the 0 = all-cores convention applied.
    pub fn pool_size(&self) -> usize {
        if self.output.pool == 0 {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        } else {
            self.output.pool
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_full_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert!(cfg.validate().is_empty());
        assert_eq!(cfg.model.d, 1);
        assert_eq!(cfg.model.l, 16);
        assert_eq!(cfg.model.n, 1);
        assert_eq!(cfg.tune.m2_grid.len(), 11);
        assert_eq!(cfg.output.dir, "rgflow-out");
        // Echo parses back to the same hash.
        let echo = cfg.canonical_toml();
        let re = RunConfig::from_toml(&echo).unwrap();
        assert_eq!(cfg.hash(), re.hash());
    }

    #[test]
    fn unknown_keys_are_rejected_everywhere() {
        assert!(RunConfig::from_toml("frobnicate = 1").is_err());
        assert!(RunConfig::from_toml("[model]\nfrobnicate = 1").is_err());
        assert!(RunConfig::from_toml("[tune]\ntol = 1e-8").is_err());
    }

    #[test]
    fn alpha_pin_must_match_d_and_epsilon() {
        let cfg = RunConfig::from_toml("[model]\nalpha = 0.51").unwrap();
        assert!(cfg.validate().is_empty());
        let cfg = RunConfig::from_toml("[model]\nalpha = 0.6").unwrap();
        let errs = cfg.validate();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].contains("model.alpha"));
        assert!(errs[0].contains("model.d"));
        assert!(errs[0].contains("model.epsilon"));
    }

    #[test]
    fn violations_are_listed_per_key() {
        let cfg = RunConfig::from_toml(
            "[model]\nepsilon = -1.0\n[tune]\ntol_mu = 0.0\nm2_grid = []\n",
        )
        .unwrap();
        let errs = cfg.validate();
        assert!(errs.iter().any(|e| e.contains("model.epsilon")));
        assert!(errs.iter().any(|e| e.contains("tune.tol_mu")));
        assert!(errs.iter().any(|e| e.contains("tune.m2_grid")));
    }

    #[test]
    fn backend_strings_map_to_variants() {
        let cfg = RunConfig::from_toml("[decomposition]\nbackend = \"rho-heat\"").unwrap();
        assert_eq!(cfg.backend(), Some(Backend::RhoHeat));
        let cfg = RunConfig::from_toml("[decomposition]\nbackend = \"bogus\"").unwrap();
        assert!(cfg.backend().is_none());
        assert!(!cfg.validate().is_empty());
    }

    #[test]
    fn hash_tracks_content_not_formatting() {
        let a = RunConfig::from_toml("[model]\nn = 2").unwrap();
        let b = RunConfig::from_toml("[model]\n\n  n   =   2\n").unwrap();
        let c = RunConfig::from_toml("[model]\nn = 3").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn sweep_config_reflects_sections() {
        let cfg = RunConfig::from_toml(
            "[model]\ng = 0.005\n[tune]\ntol_mu = 1e-6\nm2_grid = [1e-3, 1e-4]\n[remainder]\nenabled = true\namplitude = 1.0\nseed = 7\n",
        )
        .unwrap();
        assert!(cfg.validate().is_empty());
        let sw = cfg.sweep_config().unwrap();
        assert_eq!(sw.g, Some(0.005));
        assert_eq!(sw.m2_grid, vec![1e-3, 1e-4]);
        assert_eq!(sw.tune.tol_mu, 1e-6);
        assert!(sw.remainder.enabled);
        assert_eq!(sw.remainder.seed, 7);
    }
}
