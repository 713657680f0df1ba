//! Run configuration, read from TOML.
//!
//! Every section is optional; missing keys take the defaults below, which
//! reproduce `presets/half-court.toml`.

use std::path::{Path, PathBuf};

use lgcp_core::basis::{Basis, DomainMap, KernelParams, Truncation};
use lgcp_core::data::{Encoding, GridSpec};
use lgcp_core::geometry::Region;
use lgcp_core::io::RowPolicy;
use lgcp_core::sampler::{SamplerConfig, StepRule};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub kernel: KernelSection,
    pub region: RegionSection,
    pub grid: GridSection,
    pub encoding: EncodingSection,
    pub data: DataSection,
    pub sampler: SamplerSection,
    pub simulate: SimulateSection,
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub a: f64,
    pub b: f64,
    /// Fixed basis size; takes precedence over `recovery`.
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    /// Smallest L whose captured variance fraction exceeds this.
    pub recovery: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self { a: 0.25, b: 1.5, l: None, recovery: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionSection {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for RegionSection {
    fn default() -> Self {
        let r = Region::half_court();
        Self { x_min: r.x_min, x_max: r.x_max, y_min: r.y_min, y_max: r.y_max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { nx: 50, ny: 35 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodingSection {
    pub scheme: String,
}

impl Default for EncodingSection {
    fn default() -> Self {
        Self { scheme: "additive".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub policy: RowPolicy,
    /// Apply the 1–28 ft distance filter on ingestion.
    pub filter: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { policy: RowPolicy::Strict, filter: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    pub step_rule: StepRule,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau0_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_beta_sq: Option<f64>,
    pub adapt: bool,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let s = SamplerConfig::default();
        Self {
            iterations: s.iterations,
            burn_in: s.burn_in,
            thin: s.thin,
            seed: s.seed,
            chains: 1,
            step_rule: s.step_rule,
            tau0_sq: s.tau0_sq,
            tau_beta_sq: s.tau_beta_sq,
            adapt: s.adapt,
            a_sigma: s.a_sigma,
            b_sigma: s.b_sigma,
            c: s.c,
            d: s.d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// `uniform-theta` or `fitted-theta`.
    pub scenario: String,
    pub games: usize,
    pub seed: u64,
    /// Truth JSON supplying θ for `fitted-theta`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_input: Option<PathBuf>,
    pub data_output: PathBuf,
    pub truth_output: PathBuf,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            scenario: "uniform-theta".into(),
            games: 200,
            seed: 1,
            truth_input: None,
            data_output: "shots.csv".into(),
            truth_output: "truth.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// Retention probability of the p-thinning split.
    pub p: f64,
    pub repetitions: usize,
    pub seed: u64,
    /// Rectangles per side of the scoring partition.
    pub partition: usize,
    /// Refit on every training split; otherwise reuse a full-data fit.
    pub refit: bool,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { p: 0.8, repetitions: 10, seed: 1, partition: lgcp_core::evaluation::NPLL_PARTITION, refit: true }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Hex SHA-256 of the canonical TOML form, so formatting and comments do
    /// not change the hash.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn region(&self) -> Result<Region, CliError> {
        let r = &self.region;
        Ok(Region::new(r.x_min, r.x_max, r.y_min, r.y_max)?)
    }

    pub fn grid(&self) -> Result<GridSpec, CliError> {
        Ok(GridSpec::new(self.region()?, self.grid.nx, self.grid.ny)?)
    }

    pub fn encoding(&self) -> Result<Encoding, CliError> {
        Ok(Encoding::parse(&self.encoding.scheme)?)
    }

    pub fn basis(&self) -> Result<Basis, CliError> {
        let params = KernelParams::new(self.kernel.a, self.kernel.b)?;
        let truncation = match self.kernel.l {
            Some(l) => Truncation::Fixed(l),
            None => Truncation::Threshold(self.kernel.recovery),
        };
        Ok(Basis::build(params, truncation, DomainMap::from_region(&self.region()?))?)
    }

    pub fn sampler(&self) -> Result<SamplerConfig, CliError> {
        let s = &self.sampler;
        let cfg = SamplerConfig {
            iterations: s.iterations,
            burn_in: s.burn_in,
            thin: s.thin,
            seed: s.seed,
            step_rule: s.step_rule,
            tau0_sq: s.tau0_sq,
            tau_beta_sq: s.tau_beta_sq,
            adapt: s.adapt,
            a_sigma: s.a_sigma,
            b_sigma: s.b_sigma,
            c: s.c,
            d: s.d,
        };
        cfg.validate()?;
        if s.chains == 0 {
            return Err(CliError::usage("sampler.chains must be at least 1"));
        }
        Ok(cfg)
    }
}
