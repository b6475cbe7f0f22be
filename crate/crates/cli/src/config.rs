//! Run configuration: a TOML file with one table per pipeline stage, plus
//! `section.key=value` overrides applied before validation.

use std::path::Path;

use anyhow::{bail, Context};
use entropart::datagen::GenSpec;
use entropart::sampler::Normalization;
use entropart::trainer::{PhaseSwitch, TrainConfig};
use entropart::PartitionerConfig;
use serde::{Deserialize, Serialize};

/// Marks an error caused by a bad config file or override.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Unit,
    #[default]
    Ew,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Unit => "unit",
            Scheme::Ew => "ew",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSection {
    pub scheme: Scheme,
    pub num_parts: usize,
    /// Weight of feature similarity in edge weights.
    pub c: f64,
    /// Neighbour-sample size used by the edge-weight probability term.
    pub fanout_k: usize,
    pub imbalance_epsilon: f64,
    pub coarsen_stop: usize,
    pub refine_passes: usize,
    pub seed: u64,
}

impl Default for PartitionSection {
    fn default() -> Self {
        let p = PartitionerConfig::default();
        PartitionSection {
            scheme: Scheme::Ew,
            num_parts: p.num_parts,
            c: 1.0,
            fanout_k: 25,
            imbalance_epsilon: p.imbalance_epsilon,
            coarsen_stop: p.coarsen_stop,
            refine_passes: p.refine_passes,
            seed: p.seed,
        }
    }
}

impl PartitionSection {
    pub fn partitioner(&self) -> PartitionerConfig {
        PartitionerConfig {
            num_parts: self.num_parts,
            imbalance_epsilon: self.imbalance_epsilon,
            coarsen_stop: self.coarsen_stop,
            refine_passes: self.refine_passes,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub enabled: bool,
    pub fraction: f64,
    pub batch_size: usize,
    pub fanouts: Vec<usize>,
    pub normalization: Normalization,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        SamplerSection {
            enabled: t.sampler_enabled,
            fraction: t.fraction,
            batch_size: t.batch_size,
            fanouts: t.fanouts,
            normalization: t.normalization,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnSection {
    pub hidden: usize,
    pub lr: f64,
}

impl Default for GnnSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        GnnSection {
            hidden: t.hidden,
            lr: t.lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub num_workers: usize,
    pub lambda: f64,
    pub patience: usize,
    pub phase0_max_epochs: usize,
    pub phase1_max_epochs: usize,
    pub phase_switch: PhaseSwitch,
    pub seed: u64,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainerSection {
            num_workers: t.num_workers,
            lambda: t.lambda,
            patience: t.patience,
            phase0_max_epochs: t.phase0_max_epochs,
            phase1_max_epochs: t.phase1_max_epochs,
            phase_switch: t.phase_switch,
            seed: t.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub datagen: GenSpec,
    pub partitioner: PartitionSection,
    pub sampler: SamplerSection,
    pub gnn: GnnSection,
    pub trainer: TrainerSection,
}

impl RunConfig {
    /// Read `path` (or start from defaults), apply overrides, validate.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                text.parse::<toml::Table>()
                    .map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| ConfigError(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.datagen.validate()?;
        self.partitioner.partitioner().validate()?;
        if !(self.partitioner.c.is_finite()) || self.partitioner.fanout_k == 0 {
            return Err(ConfigError("partitioner.c must be finite and partitioner.fanout_k >= 1".into()).into());
        }
        self.train_config(false).validate()?;
        Ok(())
    }

    pub fn train_config(&self, baseline: bool) -> TrainConfig {
        TrainConfig {
            num_workers: self.trainer.num_workers,
            lr: self.gnn.lr,
            hidden: self.gnn.hidden,
            fanouts: self.sampler.fanouts.clone(),
            batch_size: self.sampler.batch_size,
            fraction: self.sampler.fraction,
            lambda: self.trainer.lambda,
            patience: self.trainer.patience,
            phase0_max_epochs: self.trainer.phase0_max_epochs,
            phase1_max_epochs: self.trainer.phase1_max_epochs,
            phase_switch: self.trainer.phase_switch,
            seed: self.trainer.seed,
            sampler_enabled: self.sampler.enabled,
            normalization: self.sampler.normalization,
            baseline,
        }
    }
}

/// Apply one `dotted.key=value` override. The value is read as a TOML
/// literal when it parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> anyhow::Result<()> {
    let Some((key, raw)) = spec.split_once('=') else {
        bail!(ConfigError(format!("override {spec:?} is not key=value")));
    };
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        bail!(ConfigError(format!("override {spec:?} has an empty key segment")));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("override {spec:?}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        assert_eq!(RunConfig::load(None, &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn overrides_parse_values() {
        let cfg = RunConfig::load(
            None,
            &[
                "datagen.seed=7".into(),
                "sampler.fanouts=[10, 5]".into(),
                "sampler.normalization=symmetric".into(),
                "partitioner.scheme=unit".into(),
                "trainer.phase_switch={ mode = \"fixed-fraction\", fraction = 0.5 }".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.datagen.seed, 7);
        assert_eq!(cfg.sampler.fanouts, vec![10, 5]);
        assert_eq!(cfg.sampler.normalization, Normalization::Symmetric);
        assert_eq!(cfg.partitioner.scheme, Scheme::Unit);
        assert_eq!(cfg.trainer.phase_switch, PhaseSwitch::FixedFraction { fraction: 0.5 });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::load(None, &["trainer.lamda=0.1".into()]).unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().is_some(), "{err:#}");
        assert!(RunConfig::load(None, &["nosuch.key=1".into()]).is_err());
        assert!(RunConfig::load(None, &["noequals".into()]).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::load(None, &["sampler.fraction=0".into()]).is_err());
        assert!(RunConfig::load(None, &["datagen.num_classes=3".into()]).is_err());
    }
}
