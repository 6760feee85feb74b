//! Run configuration.
//!
//! The file is TOML: sections of `key = value` lines. Every key can be
//! overridden from the environment as `SWEEPDDM_<SECTION>_<KEY>`, e.g.
//! `SWEEPDDM_SOLVER_TOL=1e-8`; command-line flags override both. Values
//! from the environment are parsed as TOML values and fall back to plain
//! strings. Grammar and defaults are documented in the README.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const ENV_PREFIX: &str = "SWEEPDDM_";

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub medium: MediumSection,
    #[serde(default)]
    pub source: SourceSection,
    pub discretization: DiscretizationSection,
    pub partition: PartitionSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub convergence: Option<ConvergenceSection>,
    #[serde(default)]
    pub decay: Option<DecaySection>,
    #[serde(default)]
    pub pipeline: Option<PipelineSection>,
    #[serde(default)]
    pub precond: Option<PrecondSection>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub dim: usize,
    /// Interior domain `[lo, hi]`, the same on every axis.
    pub extent: [f64; 2],
    /// Frequency `ω / 2π`.
    pub frequency: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MediumSection {
    pub kind: MediumKind,
    pub speed: f64,
    pub interfaces: Vec<f64>,
    pub speeds: Vec<f64>,
    pub path: Option<PathBuf>,
}

impl Default for MediumSection {
    fn default() -> Self {
        MediumSection { kind: MediumKind::Constant, speed: 1.0, interfaces: Vec::new(), speeds: Vec::new(), path: None }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum MediumKind {
    Constant,
    Layered,
    Raster,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub kind: SourceKind,
    /// Gaussian centre.
    pub center: Vec<f64>,
    /// Shot locations.
    pub locations: Vec<Vec<f64>>,
    /// Number of shots for random placement.
    pub count: usize,
}

impl Default for SourceSection {
    fn default() -> Self {
        SourceSection { kind: SourceKind::Shots, center: Vec::new(), locations: Vec::new(), count: 1 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    Gaussian,
    Shots,
    RandomShots,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    /// Interior cells per axis.
    pub cells: usize,
    pub overlap: usize,
    pub pml: usize,
    #[serde(default = "default_strength")]
    pub strength: f64,
    #[serde(default = "default_exponent")]
    pub exponent: i32,
}

fn default_strength() -> f64 {
    sweepddm::pml::DEFAULT_STRENGTH
}
fn default_exponent() -> i32 {
    2
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    pub counts: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    DirectDdm,
    GmresDdm,
    GlobalDirect,
    AdditiveDdm,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub mode: SolveMode,
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
    /// `default` or `distance` (3D only).
    pub plan: String,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection { mode: SolveMode::GmresDdm, tol: 1e-6, restart: 30, max_iter: 200, plan: "default".into() }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub field: bool,
    pub pgm: bool,
    /// JSON-lines solve log and transfer CSV (direct-ddm only).
    pub events: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), field: true, pgm: true, events: false }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    /// Refinement factors applied to cells, overlap and pml; the partition
    /// stays fixed.
    pub factors: Vec<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DecaySection {
    pub partitions: Vec<Vec<usize>>,
    pub iterations: usize,
    /// Iterations dropped before fitting the slope.
    #[serde(default = "default_skip")]
    pub skip: usize,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_skip() -> usize {
    2
}
fn default_floor() -> f64 {
    1e-11
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub counts: Vec<usize>,
    pub n_rhs: Vec<usize>,
    pub n_iter: usize,
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default)]
    pub transfer_cost: f64,
    /// Write the task list of the first N_RHS value as CSV.
    #[serde(default)]
    pub gantt: bool,
}

fn default_t0() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PrecondSection {
    /// `[interior cells, subdomains per axis, frequency]` per row.
    pub rows: Vec<(usize, usize, f64)>,
}

/// Configuration text together with its parsed form.
#[derive(Debug)]
pub struct Loaded {
    pub config: RunConfig,
    pub text: String,
}

fn toml_error(e: toml::de::Error, text: &str, what: &str) -> CliError {
    let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    match line {
        Some(l) => CliError::Config(format!("{what}, line {l}: {}", e.message())),
        None => CliError::Config(format!("{what}: {}", e.message())),
    }
}

/// Line of `key` inside `[section]`, for diagnostics.
pub fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (k, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(s) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = s.trim().to_string();
        } else if current == section && t.split('=').next().map(str::trim) == Some(key) {
            return Some(k + 1);
        }
    }
    None
}

/// Parses `text` and applies overrides from `env` (pairs of name and value).
pub fn load(text: &str, origin: &str, env: &[(String, String)]) -> Result<Loaded, CliError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| toml_error(e, text, origin))?;
    // Type-check the file on its own first so errors point at its lines.
    let _: RunConfig = toml::from_str(text).map_err(|e| toml_error(e, text, origin))?;
    let mut applied = BTreeMap::new();
    for (name, value) in env {
        let Some(rest) = name.strip_prefix(ENV_PREFIX) else { continue };
        let rest = rest.to_ascii_lowercase();
        if rest == "seed" {
            table.insert("seed".into(), parse_value(value));
            applied.insert(name.clone(), value.clone());
            continue;
        }
        let Some((section, key)) = rest.split_once('_') else {
            return Err(CliError::Config(format!("{name}: expected {ENV_PREFIX}<SECTION>_<KEY>")));
        };
        let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let Some(t) = entry.as_table_mut() else {
            return Err(CliError::Config(format!("{name}: {section} is not a section")));
        };
        t.insert(key.to_string(), parse_value(value));
        applied.insert(name.clone(), value.clone());
    }
    let config: RunConfig = if applied.is_empty() {
        toml::from_str(text).map_err(|e| toml_error(e, text, origin))?
    } else {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("after environment overrides {applied:?}: {}", e.message())))?
    };
    Ok(Loaded { config, text: text.to_string() })
}

fn parse_value(s: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {s}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(s.to_string()))
}

/// First 16 hex digits of the SHA-256 of the effective configuration.
pub fn config_hash(c: &RunConfig) -> String {
    let canonical = serde_json::to_string(c).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
[problem]
dim = 2
extent = [0.0, 1.0]
frequency = 4.0

[discretization]
cells = 60
overlap = 3
pml = 8

[partition]
counts = [3, 3]
";

    #[test]
    fn defaults_and_overrides() {
        let l = load(BASE, "t", &[]).unwrap();
        assert_eq!(l.config.solver.tol, 1e-6);
        assert_eq!(l.config.discretization.strength, sweepddm::pml::DEFAULT_STRENGTH);
        let env = vec![("SWEEPDDM_SOLVER_TOL".to_string(), "1e-9".to_string()), ("SWEEPDDM_SOLVER_MODE".into(), "direct-ddm".into())];
        let o = load(BASE, "t", &env).unwrap();
        assert_eq!(o.config.solver.tol, 1e-9);
        assert_eq!(o.config.solver.mode, SolveMode::DirectDdm);
        assert_ne!(config_hash(&l.config), config_hash(&o.config));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = BASE.replace("pml = 8", "pml = \"wide\"");
        let e = load(&bad, "cfg", &[]).unwrap_err().to_string();
        assert!(e.contains("line 9"), "{e}");
        let unknown = format!("{BASE}\n[solver]\nfoo = 1\n");
        let e = load(&unknown, "cfg", &[]).unwrap_err().to_string();
        assert!(e.contains("line 15") && e.contains("foo"), "{e}");
        assert_eq!(locate(BASE, "partition", "counts"), Some(12));
    }
}
