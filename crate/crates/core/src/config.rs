//! Run configuration: a TOML file with `[env]`, `[network]`, `[es]` and
//! `[run]` tables. Unknown keys are rejected.
//!
//! ```toml
//! [env]
//! name = "nonstationary_bandit"
//!
//! [network]
//! hidden = [8]
//! plastic = true
//!
//! [es]
//! population_size = 50
//! sigma = 0.1
//! learning_rate = 0.05
//! iterations = 500
//! master_seed = 1
//!
//! [run]
//! out_dir = "runs/bandit-sm"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::es::EsConfig;
use crate::plastic::{Activation, LayerOptions, PlasticNetwork};
use crate::policy::{AnyTemplate, DirectTemplate};

fn default_hidden() -> Vec<usize> {
    vec![8]
}
fn default_true() -> bool {
    true
}
fn default_omega() -> f64 {
    1.0
}

/// Network shape. Input and output widths come from the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Switches between self-modifying and static networks.
    #[serde(default = "default_true")]
    pub plastic: bool,
    #[serde(default = "default_true")]
    pub bias: bool,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "default_omega")]
    pub omega: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            hidden: default_hidden(),
            plastic: true,
            bias: true,
            activation: Activation::Tanh,
            omega: default_omega(),
        }
    }
}

impl NetworkConfig {
    pub fn layer_options(&self) -> LayerOptions {
        LayerOptions {
            plastic: self.plastic,
            bias: self.bias,
            omega: self.omega,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/default")
}
fn default_checkpoint_every() -> u64 {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Evaluation threads; 0 uses every available core. Never affects results.
    #[serde(default)]
    pub workers: usize,
    /// Generations between checkpoints.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            out_dir: default_out_dir(),
            workers: 0,
            checkpoint_every: default_checkpoint_every(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    pub es: EsConfig,
    #[serde(default)]
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
        for section in ["env", "es"] {
            if !table.get(section).is_some_and(toml::Value::is_table) {
                return Err(Error::config(section, "missing required table"));
            }
        }
        if !table["env"]
            .as_table()
            .is_some_and(|t| t.contains_key("name"))
        {
            return Err(Error::config("env.name", "missing environment name"));
        }
        let config: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .map_or_else(|| "<file>".to_string(), str::to_string);
            Error::config(field, e.message().trim().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.es.validate()?;
        if let Some(k) = self.network.hidden.iter().position(|&h| h == 0) {
            return Err(Error::config(
                format!("network.hidden[{k}]"),
                "layer width must be positive",
            ));
        }
        if !(self.network.omega > 0.0 && self.network.omega.is_finite()) {
            return Err(Error::config(
                "network.omega",
                "must be positive and finite",
            ));
        }
        if self.run.checkpoint_every == 0 {
            return Err(Error::config("run.checkpoint_every", "must be positive"));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the config.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("run config serializes to JSON");
        hex::encode(Sha256::digest(&bytes))
    }

    /// The genome template this config trains: the raw point for
    /// benchmarks, a network sized to the environment otherwise.
    pub fn template(&self) -> Result<AnyTemplate<f64>> {
        let spec = self.env.spec()?;
        if self.env.is_benchmark() {
            return Ok(AnyTemplate::Direct(DirectTemplate {
                dim: spec.action_dim,
            }));
        }
        let mut sizes = Vec::with_capacity(self.network.hidden.len() + 2);
        sizes.push(spec.obs_dim);
        sizes.extend_from_slice(&self.network.hidden);
        sizes.push(spec.action_dim);
        Ok(AnyTemplate::Network(PlasticNetwork::zeros(
            &sizes,
            self.network.activation,
            self.network.layer_options(),
        )?))
    }

    /// True when the two configs differ at most in `network.plastic`.
    pub fn differs_only_in_plasticity(&self, other: &RunConfig) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.network.plastic = false;
        b.network.plastic = false;
        // output location and thread count do not change results
        a.run = RunSection::default();
        b.run = RunSection::default();
        a == b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BANDIT: &str = r#"
[env]
name = "nonstationary_bandit"

[network]
hidden = [8]
plastic = true

[es]
population_size = 10
sigma = 0.1
learning_rate = 0.05
iterations = 5
master_seed = 3
"#;

    #[test]
    fn parses_and_fills_defaults() {
        let cfg = RunConfig::from_toml_str(BANDIT).unwrap();
        assert_eq!(cfg.env, EnvConfig::nonstationary_bandit());
        assert!(cfg.es.mirrored);
        assert_eq!(cfg.es.episodes_per_eval, 3);
        assert_eq!(cfg.run.checkpoint_every, 50);
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn missing_env_name_is_reported() {
        let text = BANDIT.replace("name = \"nonstationary_bandit\"", "");
        match RunConfig::from_toml_str(&text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "env.name"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = BANDIT.replace("plastic = true", "plastic = true\nplasticity = 2");
        match RunConfig::from_toml_str(&text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "plasticity"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_name_fields() {
        let text = BANDIT.replace("sigma = 0.1", "sigma = -1.0");
        match RunConfig::from_toml_str(&text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "es.sigma"),
            other => panic!("{other:?}"),
        }
        let text = BANDIT.replace("hidden = [8]", "hidden = [8, 0]");
        match RunConfig::from_toml_str(&text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "network.hidden[1]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn static_variant_has_shorter_genome() {
        let sm = RunConfig::from_toml_str(BANDIT).unwrap();
        let mut st = sm.clone();
        st.network.plastic = false;
        use crate::policy::GenomeTemplate;
        // 3 -> 8 -> 2
        assert_eq!(
            sm.template().unwrap().genome_len(),
            (24 + 24 + 8 + 8 + 1) + (16 + 16 + 2 + 2 + 1)
        );
        assert_eq!(st.template().unwrap().genome_len(), (24 + 8) + (16 + 2));
        assert!(sm.differs_only_in_plasticity(&st));
        st.es.sigma = 0.2;
        assert!(!sm.differs_only_in_plasticity(&st));
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::from_toml_str(BANDIT).unwrap();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.es.master_seed += 1;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn benchmark_uses_direct_template() {
        let text = BANDIT.replace(
            "name = \"nonstationary_bandit\"",
            "name = \"rosenbrock\"\ndim = 2",
        );
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(
            cfg.template().unwrap(),
            AnyTemplate::Direct(DirectTemplate { dim: 2 })
        );
    }
}
