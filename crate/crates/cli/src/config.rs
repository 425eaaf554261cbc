//! Run configuration: one TOML file holds every knob for the pipeline so a
//! run is fully described by config + seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use driftrec_core::embedding::{EMBED_DEFAULT_EPOCHS, EMBED_DEFAULT_LR};
use driftrec_core::{CoreError, Result, TrainConfig, WalkConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed; every stage derives its own stream from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub variant: String,
    pub data: DataSection,
    pub features: FeaturesSection,
    pub embedding: EmbeddingSection,
    pub interest: InterestSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            variant: "full".into(),
            data: DataSection::default(),
            features: FeaturesSection::default(),
            embedding: EmbeddingSection::default(),
            interest: InterestSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Tab-separated `user item rating timestamp` log.
    pub interactions: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesSection {
    pub cross_depth: usize,
    pub field: Vec<FieldSection>,
}

impl Default for FeaturesSection {
    fn default() -> FeaturesSection {
        FeaturesSection {
            cross_depth: 2,
            field: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub name: String,
    /// `user`, `item`, or `interaction`.
    pub source: String,
    /// `dense`, `categorical-onehot`, or `pretrained`.
    pub kind: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingSection {
    pub dim: usize,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub p: f64,
    pub q: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for EmbeddingSection {
    fn default() -> EmbeddingSection {
        EmbeddingSection {
            dim: 64,
            walk_length: 20,
            walks_per_node: 100,
            p: 1.0,
            q: 1.0,
            epochs: EMBED_DEFAULT_EPOCHS,
            lr: EMBED_DEFAULT_LR,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterestSection {
    pub k: usize,
}

impl Default for InterestSection {
    fn default() -> InterestSection {
        InterestSection { k: 8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for TrainSection {
    fn default() -> TrainSection {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            negatives: t.negatives,
            lr: t.lr,
            l2: t.l2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub negatives: usize,
    pub cutoffs: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> EvalSection {
        EvalSection {
            negatives: 99,
            cutoffs: vec![5, 10, 20],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| CoreError::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Check invariants and that every referenced input file exists.
    pub fn validate(&self) -> Result<()> {
        if self.embedding.dim < 1 {
            return Err(CoreError::InvalidConfig("embedding dim must be >= 1".into()));
        }
        self.walk_config().validate()?;
        self.train_config().validate()?;
        driftrec_core::ranker::Variant::parse(&self.variant)?;
        if !self.data.interactions.exists() {
            return Err(CoreError::InvalidConfig(format!(
                "interaction file not found: {}",
                self.data.interactions.display()
            )));
        }
        for f in &self.features.field {
            driftrec_core::FeatureKind::parse(&f.kind)?;
            parse_source(&f.source)?;
            if !f.path.exists() {
                return Err(CoreError::InvalidConfig(format!(
                    "feature file not found: {}",
                    f.path.display()
                )));
            }
        }
        if self.eval.negatives == 0 || self.eval.cutoffs.is_empty() {
            return Err(CoreError::InvalidConfig(
                "eval needs >= 1 negative and >= 1 cutoff".into(),
            ));
        }
        Ok(())
    }

    pub fn walk_config(&self) -> WalkConfig {
        WalkConfig {
            p: self.embedding.p,
            q: self.embedding.q,
            walk_length: self.embedding.walk_length,
            walks_per_node: self.embedding.walks_per_node,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            negatives: self.train.negatives,
            lr: self.train.lr,
            l2: self.train.l2,
            seed: self.seed,
        }
    }

    pub fn eval_config(&self) -> driftrec_core::EvalConfig {
        driftrec_core::EvalConfig {
            n_negatives: self.eval.negatives,
            cutoffs: self.eval.cutoffs.clone(),
            seed: self.seed,
        }
    }
}

pub fn parse_source(s: &str) -> Result<driftrec_core::FieldSource> {
    match s {
        "user" => Ok(driftrec_core::FieldSource::User),
        "item" => Ok(driftrec_core::FieldSource::Item),
        "interaction" => Ok(driftrec_core::FieldSource::Interaction),
        other => Err(CoreError::InvalidConfig(format!(
            "unknown field source {other:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.to_toml(), text);
        assert_eq!(back.embedding.dim, 64);
        assert_eq!(back.embedding.walk_length, 20);
        assert_eq!(back.embedding.walks_per_node, 100);
        assert_eq!(back.train.batch_size, 256);
        assert_eq!(back.train.negatives, 4);
        assert_eq!(back.eval.negatives, 99);
        assert_eq!(back.eval.cutoffs, vec![5, 10, 20]);
        assert_eq!(back.interest.k, 8);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("surprise = 1");
        assert!(err.is_err());
    }

    #[test]
    fn validate_flags_missing_files() {
        let mut cfg = RunConfig::default();
        cfg.data.interactions = PathBuf::from("/nonexistent/u.data");
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("/nonexistent/u.data"));
    }

    #[test]
    fn validate_rejects_short_walks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.tsv");
        std::fs::write(&path, "1\t1\t1\t1\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.data.interactions = path;
        cfg.embedding.walk_length = 1;
        assert!(cfg.validate().is_err());
        cfg.embedding.walk_length = 2;
        cfg.validate().unwrap();
    }
}
