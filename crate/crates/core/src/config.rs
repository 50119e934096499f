//! Run configuration: a TOML schema covering the rod structure, the
//! asymptotic class, solver geometry and tolerances, and diagnostics
//! settings. Configs resolve all defaults before any computation and the
//! resolved form (plus its hash) is what run artifacts embed.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model_map::{AsymptoticClass, MapVariant, ModelMapError, ModelMapSpec};
use crate::rod::{RodError, RodStructure, RodVector};
use crate::solver::SolveParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    /// Schema-level problem (missing/ill-typed/ill-formed field): the
    /// config never reaches domain validation.
    #[error("config schema: {0}")]
    Schema(String),
    #[error("rod structure: {0}")]
    Rod(#[from] RodError),
    #[error("model map: {0}")]
    ModelMap(#[from] ModelMapError),
}

fn default_class() -> String {
    "alf".into()
}
fn default_nut() -> f64 {
    1.0
}

/// Rod structure block: corner positions and integer rod vectors.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RodBlock {
    pub corners: Vec<f64>,
    /// One [a, b] pair per rod (corners.len() + 1 of them).
    pub vectors: Vec<[i64; 2]>,
}

/// Asymptotics block: "ale" or "alf" plus the NUT parameter for ALF.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AsymptoticsBlock {
    #[serde(default = "default_class")]
    pub class: String,
    /// NUT parameter N (ALF only; ignored for ALE).
    #[serde(default = "default_nut")]
    pub nut: f64,
}

impl Default for AsymptoticsBlock {
    fn default() -> Self {
        AsymptoticsBlock { class: default_class(), nut: default_nut() }
    }
}

fn default_n_rho() -> usize {
    128
}
fn default_n_z() -> usize {
    256
}
fn default_tol() -> f64 {
    1e-6
}
fn default_max_sweeps() -> usize {
    20_000
}
fn default_omega() -> f64 {
    1.9
}
fn default_min_coarse() -> usize {
    32
}
fn default_rho0() -> f64 {
    0.25
}
fn default_window() -> f64 {
    0.3
}
fn default_variant() -> String {
    "main".into()
}
fn default_checkpoint_every() -> usize {
    0
}

/// Solver block: grid sizes, model-map geometry and iteration control.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolverBlock {
    #[serde(default = "default_n_rho")]
    pub n_rho: usize,
    #[serde(default = "default_n_z")]
    pub n_z: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "default_min_coarse")]
    pub min_coarse: usize,
    /// Axis-tube radius of the model-map region decomposition.
    #[serde(default = "default_rho0")]
    pub rho0: f64,
    /// Outer model radius R; 0 means automatic from the rod span.
    #[serde(default)]
    pub big_r: f64,
    #[serde(default = "default_window")]
    pub window_frac: f64,
    /// "main" or "ale-alt" (the alternate ALE end transitions).
    #[serde(default = "default_variant")]
    pub variant: String,
    /// Sweeps between checkpoints; 0 disables checkpointing.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

fn default_snap_height() -> i64 {
    50
}
fn default_snap_angle() -> f64 {
    0.05
}
fn default_rel_tol() -> f64 {
    1e-2
}

/// Diagnostics block: fit windows and tolerances.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiagnosticsBlock {
    /// Maximum integer height when snapping axis directions.
    #[serde(default = "default_snap_height")]
    pub snap_max_height: i64,
    /// Angular snap tolerance in radians.
    #[serde(default = "default_snap_angle")]
    pub snap_angle_tol: f64,
    /// Relative tolerance for fitted-invariant comparisons.
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

impl Default for DiagnosticsBlock {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

fn default_out_dir() -> String {
    "runs".into()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OutputBlock {
    #[serde(default = "default_out_dir")]
    pub dir: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { dir: default_out_dir() }
    }
}

/// The full run configuration; every block except the rod structure has
/// complete defaults.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub rod: RodBlock,
    #[serde(default)]
    pub asymptotics: AsymptoticsBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub diagnostics: DiagnosticsBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

impl RunConfig {
    /// Parses and schema-validates a TOML document. Domain admissibility
    /// of the rod structure is *not* checked here; that is a verdict, not
    /// a schema error.
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            toml::from_str(s).map_err(|e| ConfigError::Schema(e.to_string()))?;
        cfg.check_schema()?;
        Ok(cfg)
    }

    fn check_schema(&self) -> Result<(), ConfigError> {
        let r = &self.rod;
        if r.vectors.len() != r.corners.len() + 1 {
            return Err(ConfigError::Schema(format!(
                "rod.vectors: expected {} vectors for {} corners, got {}",
                r.corners.len() + 1,
                r.corners.len(),
                r.vectors.len()
            )));
        }
        if r.corners.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::Schema(
                "rod.corners: must be strictly increasing".into(),
            ));
        }
        if !r.corners.iter().all(|c| c.is_finite()) {
            return Err(ConfigError::Schema("rod.corners: non-finite entry".into()));
        }
        match self.asymptotics.class.as_str() {
            "ale" => {}
            "alf" => {
                if self.asymptotics.nut == 0.0 || !self.asymptotics.nut.is_finite() {
                    return Err(ConfigError::Schema(
                        "asymptotics.nut: ALF requires a nonzero finite NUT parameter".into(),
                    ));
                }
            }
            other => {
                return Err(ConfigError::Schema(format!(
                    "asymptotics.class: expected \"ale\" or \"alf\", got \"{other}\""
                )))
            }
        }
        match self.solver.variant.as_str() {
            "main" | "ale-alt" => {}
            other => {
                return Err(ConfigError::Schema(format!(
                    "solver.variant: expected \"main\" or \"ale-alt\", got \"{other}\""
                )))
            }
        }
        if self.solver.n_rho < 4 || self.solver.n_z < 4 {
            return Err(ConfigError::Schema(
                "solver.n_rho / solver.n_z: grid too small".into(),
            ));
        }
        if !(self.solver.tol > 0.0) || !(self.solver.omega > 0.0 && self.solver.omega < 2.0) {
            return Err(ConfigError::Schema(
                "solver.tol must be positive and solver.omega in (0, 2)".into(),
            ));
        }
        Ok(())
    }

    /// The fully-resolved (defaults materialized) TOML text.
    pub fn to_resolved_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 hex digest of the resolved TOML; embedded in artifacts so
    /// downstream commands can refuse mismatched pairs.
    pub fn resolved_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_resolved_toml().as_bytes());
        hex_string(&h.finalize())
    }

    /// The rod structure; this is where domain (admissibility) errors
    /// surface, distinct from schema errors.
    pub fn rod_structure(&self) -> Result<RodStructure, ConfigError> {
        let vectors = self
            .rod
            .vectors
            .iter()
            .map(|&[a, b]| RodVector::new(a, b))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RodStructure::new(self.rod.corners.clone(), vectors)?)
    }

    pub fn asymptotic_class(&self) -> AsymptoticClass {
        match self.asymptotics.class.as_str() {
            "ale" => AsymptoticClass::Ale,
            _ => AsymptoticClass::Alf { n: self.asymptotics.nut },
        }
    }

    pub fn map_variant(&self) -> MapVariant {
        match self.solver.variant.as_str() {
            "ale-alt" => MapVariant::AleAlt,
            _ => MapVariant::Main,
        }
    }

    pub fn model_map_spec(&self) -> Result<ModelMapSpec, ConfigError> {
        let rs = self.rod_structure()?;
        let big_r = if self.solver.big_r > 0.0 { Some(self.solver.big_r) } else { None };
        Ok(ModelMapSpec::with_geometry(
            &rs,
            self.asymptotic_class(),
            self.map_variant(),
            self.solver.rho0,
            big_r,
            self.solver.window_frac,
        )?)
    }

    pub fn solve_params(&self) -> SolveParams {
        SolveParams {
            n_rho: self.solver.n_rho,
            n_z: self.solver.n_z,
            tol: self.solver.tol,
            max_sweeps: self.solver.max_sweeps,
            omega: self.solver.omega,
            min_coarse: self.solver.min_coarse,
            ..SolveParams::default()
        }
    }
}

pub fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(2 * bytes.len());
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAUB_BOLT: &str = r#"
        [rod]
        corners = [0.0, 1.5]
        vectors = [[0, 1], [1, 0], [1, -1]]

        [asymptotics]
        class = "alf"
        nut = 1.0
    "#;

    #[test]
    fn parses_with_defaults_and_resolves() {
        let cfg = RunConfig::from_toml_str(TAUB_BOLT).unwrap();
        assert_eq!(cfg.solver.n_rho, 128);
        assert_eq!(cfg.diagnostics.snap_max_height, 50);
        let resolved = cfg.to_resolved_toml();
        let back = RunConfig::from_toml_str(&resolved).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.resolved_hash(), back.resolved_hash());
        assert_eq!(cfg.resolved_hash().len(), 64);
    }

    #[test]
    fn schema_errors_name_the_field() {
        let bad = TAUB_BOLT.replace("[0.0, 1.5]", "[1.5, 0.0]");
        let err = RunConfig::from_toml_str(&bad).unwrap_err();
        assert!(err.to_string().contains("rod.corners"), "{err}");

        let bad = TAUB_BOLT.replace("\"alf\"", "\"alg\"");
        let err = RunConfig::from_toml_str(&bad).unwrap_err();
        assert!(err.to_string().contains("asymptotics.class"), "{err}");
    }

    #[test]
    fn admissibility_is_a_domain_error_not_schema() {
        // (0,1), (2,0) is well-formed but not admissible ((2,0) imprimitive)
        let cfg = RunConfig::from_toml_str(
            r#"
            [rod]
            corners = [0.0]
            vectors = [[0, 1], [2, 0]]
            "#,
        )
        .unwrap();
        assert!(matches!(cfg.rod_structure(), Err(ConfigError::Rod(_))));
    }

    #[test]
    fn builds_model_map_spec() {
        let cfg = RunConfig::from_toml_str(TAUB_BOLT).unwrap();
        let spec = cfg.model_map_spec().unwrap();
        assert_eq!(spec.corners.len(), 2);
    }
}
