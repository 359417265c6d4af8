//! Run configuration: a single TOML file with key=value sections. Unknown
//! keys are rejected; command-line flags override file values; every run
//! serializes the resolved configuration next to its outputs together with
//! a digest manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use iqa_core::distort::hex_sha256;
use iqa_core::nn::encoder::EncoderConfig;
use iqa_core::pairs::{OlaBounds, PipelineConfig};
use iqa_core::protocol::{Grouping, SplitSpec};
use iqa_core::ridge::LambdaGrid;
use iqa_core::trainer::{TrainConfig, TrainMode};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub paths: PathsSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub n_aug: usize,
    pub patch: usize,
    pub ola_min: f64,
    pub ola_max: f64,
    pub scales: Vec<f64>,
    pub max_crop_attempts: u32,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let d = PipelineConfig::default();
        PipelineSection {
            n_aug: d.n_aug,
            patch: d.patch,
            ola_min: d.ola.min_frac,
            ola_max: d.ola.max_frac,
            scales: d.scales,
            max_crop_attempts: d.max_crop_attempts,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr0: f64,
    pub epochs: usize,
    pub tau: f64,
    pub momentum: f64,
    pub batch_pairs: usize,
    pub queue_capacity: usize,
    pub sgd_momentum: f64,
    pub mode: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            lr0: d.lr0,
            epochs: d.epochs,
            tau: d.tau,
            momentum: d.momentum,
            batch_pairs: d.batch_pairs,
            queue_capacity: d.queue_capacity,
            sgd_momentum: d.sgd_momentum,
            mode: d.mode.name().to_string(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    pub channels: Vec<usize>,
    pub head_hidden: usize,
    pub embed_dim: usize,
}

impl Default for EncoderSection {
    fn default() -> Self {
        let d = EncoderConfig::default();
        EncoderSection {
            channels: d.channels,
            head_hidden: d.head_hidden,
            embed_dim: d.embed_dim,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Explicit grid values; empty means the default 13-point grid.
    #[serde(default)]
    pub lambdas: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub repeats: usize,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub grouping: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            repeats: 10,
            train_frac: 0.70,
            val_frac: 0.10,
            test_frac: 0.20,
            grouping: "by-image".into(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    /// Severity table override; empty uses the built-in table.
    #[serde(default)]
    pub severity_table: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<RunConfig> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                let cfg: RunConfig = toml::from_str(&text)
                    .map_err(|e| anyhow::anyhow!("config {}: {e}", p.display()))?;
                Ok(cfg)
            }
        }
    }

    pub fn pipeline_config(&self) -> anyhow::Result<PipelineConfig> {
        let cfg = PipelineConfig {
            n_aug: self.pipeline.n_aug,
            patch: self.pipeline.patch,
            ola: OlaBounds {
                min_frac: self.pipeline.ola_min,
                max_frac: self.pipeline.ola_max,
            },
            scales: self.pipeline.scales.clone(),
            max_crop_attempts: self.pipeline.max_crop_attempts,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self, seed: u64) -> anyhow::Result<TrainConfig> {
        let mode = TrainMode::from_name(&self.train.mode)
            .ok_or_else(|| anyhow::anyhow!("unknown train mode `{}`", self.train.mode))?;
        let cfg = TrainConfig {
            lr0: self.train.lr0,
            epochs: self.train.epochs,
            tau: self.train.tau,
            momentum: self.train.momentum,
            batch_pairs: self.train.batch_pairs,
            seed,
            mode,
            queue_capacity: self.train.queue_capacity,
            sgd_momentum: self.train.sgd_momentum,
            encoder: EncoderConfig {
                channels: self.encoder.channels.clone(),
                head_hidden: self.encoder.head_hidden,
                embed_dim: self.encoder.embed_dim,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn lambda_grid(&self) -> anyhow::Result<LambdaGrid> {
        let grid = if self.grid.lambdas.is_empty() {
            LambdaGrid::default()
        } else {
            LambdaGrid {
                values: self.grid.lambdas.clone(),
            }
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn split_spec(&self, seed: u64, has_content: bool) -> anyhow::Result<SplitSpec> {
        let grouping = match self.eval.grouping.as_str() {
            "by-image" if !has_content => Grouping::ByImage,
            "by-image" => Grouping::ByContent, // content ids force grouping
            "by-content" => Grouping::ByContent,
            other => anyhow::bail!("unknown grouping `{other}`"),
        };
        let spec = SplitSpec {
            fractions: (self.eval.train_frac, self.eval.val_frac, self.eval.test_frac),
            repeats: self.eval.repeats,
            seed,
            grouping,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Write the resolved config and a digest manifest next to the outputs.
/// `stem` is a path prefix: `<stem>.config.toml` and `<stem>.manifest.txt`.
pub fn write_run_manifest(
    stem: &Path,
    command: &str,
    config: &RunConfig,
    seed: u64,
    severity_digest: &str,
    artifacts: &[(&str, PathBuf)],
) -> anyhow::Result<()> {
    let config_text = config.to_toml();
    let config_path = stem.with_extension("config.toml");
    std::fs::write(&config_path, &config_text)?;

    let mut manifest = String::new();
    manifest.push_str(&format!("command={command}\n"));
    manifest.push_str(&format!("seed={seed}\n"));
    manifest.push_str(&format!("config_sha256={}\n", hex_sha256(config_text.as_bytes())));
    manifest.push_str(&format!("severity_table_sha256={severity_digest}\n"));
    for (name, path) in artifacts {
        let digest = hex_sha256(&std::fs::read(path)?);
        manifest.push_str(&format!("{name}_sha256={digest}\n"));
    }
    std::fs::write(stem.with_extension("manifest.txt"), manifest)?;
    Ok(())
}
