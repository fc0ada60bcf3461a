//! Checkpoint files.
//!
//! A checkpoint is a few `#` comment lines for humans followed by one JSON
//! document. Parameter vectors are stored as the hex form of each `f64`'s
//! IEEE-754 bit pattern so that a save/load cycle is bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::es::{EsState, TrainLog};
use crate::plastic::GENOME_LAYOUT_VERSION;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub state: EsState<f64>,
    pub log: TrainLog,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Body {
    format_version: u32,
    genome_layout_version: u32,
    config: RunConfig,
    generation: u64,
    theta_bits: Vec<String>,
    velocity_bits: Vec<String>,
    train_log: TrainLog,
}

fn encode(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| format!("{:016x}", x.to_bits())).collect()
}

fn decode(v: &[String], what: &str) -> Result<Vec<f64>> {
    v.iter()
        .map(|s| {
            u64::from_str_radix(s, 16)
                .map(f64::from_bits)
                .map_err(|e| Error::Checkpoint(format!("bad {what} entry `{s}`: {e}")))
        })
        .collect()
}

impl Checkpoint {
    pub fn new(config: RunConfig, state: EsState<f64>, log: TrainLog) -> Self {
        Checkpoint { config, state, log }
    }

    pub fn generation(&self) -> u64 {
        self.state.generation
    }

    pub fn theta(&self) -> &[f64] {
        &self.state.theta
    }

    pub fn to_string_pretty(&self) -> Result<String> {
        let body = Body {
            format_version: CHECKPOINT_FORMAT_VERSION,
            genome_layout_version: GENOME_LAYOUT_VERSION,
            config: self.config.clone(),
            generation: self.state.generation,
            theta_bits: encode(&self.state.theta),
            velocity_bits: encode(&self.state.velocity),
            train_log: self.log.clone(),
        };
        let mut out = String::new();
        out.push_str("# evoplastic checkpoint\n");
        out.push_str(&format!("# format_version = {CHECKPOINT_FORMAT_VERSION}\n"));
        out.push_str(&format!("# env = {}\n", self.config.env.key()));
        out.push_str(&format!("# plastic = {}\n", self.config.network.plastic));
        out.push_str(&format!("# generation = {}\n", self.state.generation));
        out.push_str(&format!("# genome_len = {}\n", self.state.theta.len()));
        out.push_str(&format!("# config_digest = {}\n", self.config.digest()));
        out.push_str(&serde_json::to_string_pretty(&body)?);
        out.push('\n');
        Ok(out)
    }

    pub fn from_str(text: &str) -> Result<Self> {
        let json: String = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n");
        let value: serde_json::Value = serde_json::from_str(&json)?;
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Checkpoint("missing format_version".into()))?;
        if found != u64::from(CHECKPOINT_FORMAT_VERSION) {
            return Err(Error::CheckpointVersion {
                found: found as u32,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        let body: Body = serde_json::from_value(value)?;
        if body.genome_layout_version != GENOME_LAYOUT_VERSION {
            return Err(Error::Checkpoint(format!(
                "genome layout version {} is not supported",
                body.genome_layout_version
            )));
        }
        body.config.validate()?;
        let theta = decode(&body.theta_bits, "theta")?;
        let velocity = decode(&body.velocity_bits, "velocity")?;
        if theta.len() != velocity.len() {
            return Err(Error::Checkpoint(
                "theta and velocity lengths differ".into(),
            ));
        }
        Ok(Checkpoint {
            config: body.config,
            state: EsState {
                generation: body.generation,
                theta,
                velocity,
            },
            log: body.train_log,
        })
    }

    /// Writes through a temporary file so a crash never leaves a torn file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        let text = self.to_string_pretty()?;
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(text.as_bytes())
            .map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str(&text)
    }
}
