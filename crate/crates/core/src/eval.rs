//! Leave-one-out ranking evaluation: each held-out interaction is ranked
//! against sampled negatives and scored with hit rate and NDCG at the
//! configured cutoffs.

use rayon::prelude::*;

use crate::context::{ContextSchema, ContextTables};
use crate::data::{sample_negatives, Interaction, InteractionMatrix};
use crate::error::{CoreError, Result};
use crate::ranker::{RankingModel, TrainConfig, Variant};
use crate::seed::{indexed_seed, rng_from, stage_seed};

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub n_negatives: usize,
    pub cutoffs: Vec<usize>,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> EvalConfig {
        EvalConfig {
            n_negatives: 99,
            cutoffs: vec![5, 10, 20],
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_negatives == 0 || self.cutoffs.is_empty() {
            return Err(CoreError::InvalidConfig(
                "need >= 1 negative and >= 1 cutoff".into(),
            ));
        }
        if self.cutoffs.iter().any(|&k| k == 0) {
            return Err(CoreError::InvalidConfig("cutoffs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Anything that can rank a candidate list for a user, best first.
pub trait Scorer: Sync {
    fn rank(
        &self,
        train: &InteractionMatrix,
        user: usize,
        candidates: &[usize],
    ) -> Result<Vec<(usize, f64)>>;
}

/// The trained model as a scorer, with a fixed evaluation seed for its
/// history sampling.
pub struct ModelScorer<'a> {
    pub model: &'a RankingModel,
    pub eval_seed: u64,
}

impl Scorer for ModelScorer<'_> {
    fn rank(
        &self,
        train: &InteractionMatrix,
        user: usize,
        candidates: &[usize],
    ) -> Result<Vec<(usize, f64)>> {
        self.model
            .score_candidates(train, user, candidates, self.eval_seed)
    }
}

/// Ranks by global training popularity; ties toward the smaller index.
pub struct PopularityScorer {
    counts: Vec<usize>,
}

impl PopularityScorer {
    pub fn from_train(train: &InteractionMatrix) -> PopularityScorer {
        PopularityScorer {
            counts: train.item_popularity(),
        }
    }
}

impl Scorer for PopularityScorer {
    fn rank(
        &self,
        _train: &InteractionMatrix,
        _user: usize,
        candidates: &[usize],
    ) -> Result<Vec<(usize, f64)>> {
        let mut scored: Vec<(usize, f64)> = candidates
            .iter()
            .map(|&c| (c, self.counts.get(c).copied().unwrap_or(0) as f64))
            .collect();
        sort_ranked(&mut scored);
        Ok(scored)
    }
}

/// Scores each (user, item) pair with a seeded uniform draw.
pub struct RandomScorer {
    pub seed: u64,
}

impl Scorer for RandomScorer {
    fn rank(
        &self,
        _train: &InteractionMatrix,
        user: usize,
        candidates: &[usize],
    ) -> Result<Vec<(usize, f64)>> {
        use rand::Rng;
        let stage = stage_seed(self.seed, "random-scorer");
        let mut scored: Vec<(usize, f64)> = candidates
            .iter()
            .map(|&c| {
                let mut rng = rng_from(indexed_seed(stage, user as u64, c as u64));
                (c, rng.gen::<f64>())
            })
            .collect();
        sort_ranked(&mut scored);
        Ok(scored)
    }
}

fn sort_ranked(scored: &mut [(usize, f64)]) {
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
}

/// 1 if the target lands in the top k of the ranking, else 0.
pub fn hit_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

/// Discounted gain of a single relevant item at the given 1-based rank.
pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// Metric means over all evaluated users.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub cutoffs: Vec<usize>,
    pub hr: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub n_evaluated: usize,
}

impl EvalReport {
    pub fn hr_at(&self, k: usize) -> Option<f64> {
        self.cutoffs.iter().position(|&c| c == k).map(|i| self.hr[i])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.cutoffs
            .iter()
            .position(|&c| c == k)
            .map(|i| self.ndcg[i])
    }

    /// One `metric<TAB>cutoff<TAB>value` line per metric/cutoff pair.
    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, &k) in self.cutoffs.iter().enumerate() {
            out.push(format!("hr\t{k}\t{:.6}", self.hr[i]));
        }
        for (i, &k) in self.cutoffs.iter().enumerate() {
            out.push(format!("ndcg\t{k}\t{:.6}", self.ndcg[i]));
        }
        out
    }
}

/// Rank each held-out interaction against sampled negatives and average
/// the metrics. Negative draws are per-(user, item) seeded, so different
/// scorers see identical candidate lists.
pub fn evaluate(
    scorer: &dyn Scorer,
    train: &InteractionMatrix,
    test: &[Interaction],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    if test.is_empty() {
        return Err(CoreError::EmptyInput("test interactions".into()));
    }
    let stage = stage_seed(cfg.seed, "eval-negatives");

    let per_user: Vec<Result<Vec<(f64, f64)>>> = test
        .par_iter()
        .map(|held| {
            let (user, target) = (held.user_idx, held.item_idx);
            let mut rng = rng_from(indexed_seed(stage, user as u64, target as u64));
            // the held-out item is absent from train, so it can come back as
            // a "negative"; over-draw by one and drop it if so
            let drawn = sample_negatives(train, user, cfg.n_negatives + 1, &mut rng)?;
            let mut candidates: Vec<usize> = drawn
                .into_iter()
                .filter(|&c| c != target)
                .take(cfg.n_negatives)
                .collect();
            candidates.push(target);
            let ranked = scorer.rank(train, user, &candidates)?;
            let rank = ranked
                .iter()
                .position(|&(item, _)| item == target)
                .map(|p| p + 1)
                .ok_or_else(|| CoreError::Data("target missing from ranking".into()))?;
            Ok(cfg
                .cutoffs
                .iter()
                .map(|&k| (hit_at_k(rank, k), ndcg_at_k(rank, k)))
                .collect())
        })
        .collect();

    let n = test.len() as f64;
    let mut hr = vec![0.0; cfg.cutoffs.len()];
    let mut ndcg = vec![0.0; cfg.cutoffs.len()];
    for row in per_user {
        for (i, (h, g)) in row?.into_iter().enumerate() {
            hr[i] += h / n;
            ndcg[i] += g / n;
        }
    }
    Ok(EvalReport {
        cutoffs: cfg.cutoffs.clone(),
        hr,
        ndcg,
        n_evaluated: test.len(),
    })
}

/// Per-variant evaluation results from an ablation run.
#[derive(Debug, Clone)]
pub struct AblationReport {
    pub entries: Vec<(Variant, EvalReport)>,
}

impl AblationReport {
    pub fn get(&self, variant: Variant) -> Option<&EvalReport> {
        self.entries
            .iter()
            .find(|(v, _)| *v == variant)
            .map(|(_, r)| r)
    }

    /// `variant<TAB>metric<TAB>cutoff<TAB>value` lines.
    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (variant, report) in &self.entries {
            for line in report.lines() {
                out.push(format!("{}\t{line}", variant.label()));
            }
        }
        out
    }
}

/// Train and evaluate each requested variant from the same frozen
/// embeddings, seeds, and negative draws.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    variants: &[Variant],
    user_emb: &[Vec<f64>],
    item_emb: &[Vec<f64>],
    schema: &ContextSchema,
    tables: &ContextTables,
    train: &InteractionMatrix,
    test: &[Interaction],
    train_cfg: &TrainConfig,
    eval_cfg: &EvalConfig,
    interest_k: usize,
) -> Result<AblationReport> {
    let mut entries = Vec::with_capacity(variants.len());
    for &variant in variants {
        log::info!("ablation: training variant {}", variant.label());
        let mut model = RankingModel::new(
            variant,
            user_emb.to_vec(),
            item_emb.to_vec(),
            schema,
            tables.clone(),
            interest_k,
            train_cfg.seed,
        )?;
        for epoch in 0..train_cfg.epochs {
            let loss = model.train_epoch(train, train_cfg, epoch)?;
            log::debug!("variant {} epoch {epoch}: loss {loss:.6}", variant.label());
        }
        let scorer = ModelScorer {
            model: &model,
            eval_seed: eval_cfg.seed,
        };
        entries.push((variant, evaluate(&scorer, train, test, eval_cfg)?));
    }
    Ok(AblationReport { entries })
}
