//! TOML run configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use praxbench_core::corpus::Domain;
use praxbench_core::stats::DeltaModelSource;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    #[default]
    Live,
    /// Live calls whose exchanges are saved to the fixture file.
    Record,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EndpointKind {
    Synthetic {
        #[serde(default = "default_skill")]
        skill: f64,
        #[serde(default = "default_leak")]
        leak_rate: f64,
    },
    Openai {
        base_url: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
    },
}

fn default_skill() -> f64 {
    0.8
}

fn default_leak() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub id: String,
    #[serde(flatten)]
    pub kind: EndpointKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewaySection {
    #[serde(default)]
    pub mode: GatewayMode,
    /// Fixture file read in replay mode and written in record mode.
    pub fixtures: Option<PathBuf>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Roster id used for extraction and generation calls.
    pub generator: Option<String>,
}

fn default_concurrency() -> usize {
    4
}

impl Default for GatewaySection {
    fn default() -> Self {
        Self {
            mode: GatewayMode::default(),
            fixtures: None,
            concurrency: default_concurrency(),
            generator: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractSection {
    pub input: Option<PathBuf>,
    pub id_prefix: Option<String>,
    #[serde(default = "yes")]
    pub summarize: bool,
    /// Manual review list, one `<id> allow|deny` per line.
    pub review: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    #[serde(default)]
    pub n_scenarios: usize,
    #[serde(default = "default_cap")]
    pub regeneration_cap: u32,
    #[serde(default)]
    pub fixed_position: bool,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_cap() -> u32 {
    5
}

fn default_workers() -> usize {
    4
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self {
            n_scenarios: 0,
            regeneration_cap: default_cap(),
            fixed_position: false,
            workers: default_workers(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExamSection {
    /// Scenarios sampled; each contributes four items.
    #[serde(default)]
    pub n_scenarios: usize,
    /// Examinee roster ids; defaults to every endpoint except the generator.
    #[serde(default)]
    pub models: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeSection {
    /// Defaults to the domain's guessing rate.
    pub chance: Option<f64>,
    pub model_separation: Option<f64>,
    pub bloom_separation: Option<f64>,
    #[serde(default)]
    pub delta_model_source: DeltaModelSource,
    #[serde(default = "yes")]
    pub rank_stability: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Required by extract and generate; analysis infers it from trials.
    pub domain: Option<Domain>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub gateway: GatewaySection,
    #[serde(default)]
    pub endpoints: Vec<Endpoint>,
    #[serde(default)]
    pub extract: ExtractSection,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub exam: ExamSection,
    #[serde(default)]
    pub analyze: AnalyzeSection,
}

impl RunConfig {
    pub fn minimal() -> Self {
        Self {
            domain: None,
            seed: None,
            gateway: GatewaySection::default(),
            endpoints: Vec::new(),
            extract: ExtractSection::default(),
            generate: GenerateSection::default(),
            exam: ExamSection::default(),
            analyze: AnalyzeSection::default(),
        }
    }

    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        if !path.exists() {
            return Err(CliError::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p.as_mut().filter(|p| p.is_relative()) {
                *inner = base.join(&*inner);
            }
        };
        rebase(&mut config.gateway.fixtures);
        rebase(&mut config.extract.input);
        rebase(&mut config.extract.review);
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let mut ids = BTreeSet::new();
        for e in &self.endpoints {
            if !ids.insert(e.id.as_str()) {
                return Err(CliError::Config(format!("duplicate endpoint id `{}`", e.id)));
            }
        }
        if let Some(g) = &self.gateway.generator {
            if !ids.contains(g.as_str()) {
                return Err(CliError::Config(format!("generator `{g}` is not in the endpoint roster")));
            }
        }
        for m in &self.exam.models {
            if !ids.contains(m.as_str()) {
                return Err(CliError::Config(format!("exam model `{m}` is not in the endpoint roster")));
            }
        }
        if self.gateway.mode != GatewayMode::Live && self.gateway.fixtures.is_none() {
            return Err(CliError::Config("record and replay modes need gateway.fixtures".into()));
        }
        if self.gateway.concurrency == 0 {
            return Err(CliError::Config("gateway.concurrency must be positive".into()));
        }
        Ok(())
    }

    pub fn require_domain(&self) -> Result<Domain, CliError> {
        self.domain.clone().ok_or_else(|| CliError::Config("`domain` is not set".into()))
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("a seed is required for sampling stages (--seed or `seed =`)".into()))
    }

    pub fn generator_id(&self) -> Result<&str, CliError> {
        self.gateway
            .generator
            .as_deref()
            .ok_or_else(|| CliError::Config("gateway.generator is not set".into()))
    }

    /// Examinee ids in sorted order.
    pub fn examinees(&self) -> Vec<String> {
        let mut out: Vec<String> = if self.exam.models.is_empty() {
            self.endpoints
                .iter()
                .map(|e| e.id.clone())
                .filter(|id| Some(id) != self.gateway.generator.as_ref())
                .collect()
        } else {
            self.exam.models.clone()
        };
        out.sort();
        out
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        crate::manifest::sha256_hex(serde_json::to_string(self).expect("config serialises").as_bytes())
    }
}
