//! End-to-end ranking model: frozen graph embeddings plus the adaptive
//! context, interest, and attention layers, trained with sampled negatives
//! and binary cross-entropy.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::autograd::{
    gaussian, MlpParams, ParamGrads, ParamId, ParamStore, Tape, Tensor, Var,
};
use crate::context::{
    assemble_x0, cross_network, fuse, ContextSchema, ContextTables, CrossNetworkParams,
    FusionParams,
};
use crate::data::{sample_negatives, FeatureKind, InteractionMatrix};
use crate::error::{CoreError, Result};
use crate::fusion::{global_fuse, local_interaction, GlobalFusionParams, LocalBlockParams};
use crate::interest::{init_valuation, sample_history, user_interest, InterestConfig, ValuationParams};
use crate::seed::{indexed_seed, rng_from, stage_seed};

/// Model variants for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    /// Drop pretrained (embedding-valued) context fields.
    NoMultimodal,
    /// Drop categorical and dense side-information fields.
    NoSideInfo,
    /// Zero the interest vector and its history components.
    NoInterest,
    /// Replace the attention blocks with a direct concat + linear map.
    NoInteractive,
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoMultimodal => "no_multimodal",
            Variant::NoSideInfo => "no_side_info",
            Variant::NoInterest => "no_interest",
            Variant::NoInteractive => "no_interactive",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "full" => Ok(Variant::Full),
            "no_multimodal" => Ok(Variant::NoMultimodal),
            "no_side_info" => Ok(Variant::NoSideInfo),
            "no_interest" => Ok(Variant::NoInterest),
            "no_interactive" => Ok(Variant::NoInteractive),
            other => Err(CoreError::InvalidConfig(format!(
                "unknown variant {other:?}"
            ))),
        }
    }

    pub fn all() -> [Variant; 5] {
        [
            Variant::Full,
            Variant::NoMultimodal,
            Variant::NoSideInfo,
            Variant::NoInterest,
            Variant::NoInteractive,
        ]
    }
}

/// Optimization settings for the ranking stage.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 10,
            batch_size: 256,
            negatives: 4,
            lr: 0.001,
            l2: 1e-7,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.negatives == 0 {
            return Err(CoreError::InvalidConfig(
                "batch size and negatives must be >= 1".into(),
            ));
        }
        if !(self.lr > 0.0) || self.l2 < 0.0 {
            return Err(CoreError::InvalidConfig(
                "lr must be positive and l2 non-negative".into(),
            ));
        }
        Ok(())
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Parameter bundles for all trainable blocks of one variant.
#[derive(Debug, Clone)]
struct ModelParams {
    cross: CrossNetworkParams,
    fusion: FusionParams,
    valuation: Option<ValuationParams>,
    local_ut: Option<LocalBlockParams>,
    local_uc: Option<LocalBlockParams>,
    global: Option<GlobalFusionParams>,
    /// Direct projection for the no-attention variant.
    bypass: Option<(ParamId, ParamId)>,
    tower: MlpParams,
}

/// Ranker with frozen user/item embeddings and trainable head.
pub struct RankingModel {
    pub variant: Variant,
    pub dim: usize,
    pub user_emb: Vec<Vec<f64>>,
    pub item_emb: Vec<Vec<f64>>,
    pub schema: ContextSchema,
    pub tables: ContextTables,
    pub interest: InterestConfig,
    pub store: ParamStore,
    params: ModelParams,
}

fn tower_hidden(d: usize) -> Vec<usize> {
    let mut v = Vec::new();
    let mut h = d / 2;
    while h > 8 {
        v.push(h);
        h /= 2;
    }
    v.push(h.max(1));
    v
}

impl RankingModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        variant: Variant,
        user_emb: Vec<Vec<f64>>,
        item_emb: Vec<Vec<f64>>,
        schema: &ContextSchema,
        tables: ContextTables,
        interest_k: usize,
        seed: u64,
    ) -> Result<RankingModel> {
        let dim = user_emb
            .first()
            .map(Vec::len)
            .ok_or_else(|| CoreError::EmptyInput("user embedding table".into()))?;
        if item_emb.is_empty() {
            return Err(CoreError::EmptyInput("item embedding table".into()));
        }
        if user_emb.iter().chain(&item_emb).any(|e| e.len() != dim) {
            return Err(CoreError::Data("ragged embedding table".into()));
        }
        let schema = match variant {
            Variant::NoMultimodal => schema.without_kinds(&[FeatureKind::Pretrained]),
            Variant::NoSideInfo => {
                schema.without_kinds(&[FeatureKind::CategoricalOnehot, FeatureKind::Dense])
            }
            _ => schema.clone(),
        };
        let interest = InterestConfig::for_dim(interest_k, dim);
        interest.validate()?;

        let c = schema.total_dim();
        let mut store = ParamStore::new();
        let mut rng = rng_from(stage_seed(seed, "ranker-init"));
        let cross = CrossNetworkParams::init(&mut store, "cross", c, schema.cross_depth, &mut rng);
        let fusion = FusionParams::init(&mut store, "fuse", c, &mut rng);
        let valuation = match variant {
            Variant::NoInterest => None,
            _ => Some(init_valuation(&mut store, "val", dim, &interest, &mut rng)),
        };
        let k = interest.k;
        let (local_ut, local_uc, global, bypass) = if variant == Variant::NoInteractive {
            let in_dim = 3 * dim + c; // concat of e_u, e_i, e_c, theta
            let std = (1.0 / in_dim as f64).sqrt();
            let w: Vec<f64> = (0..dim * in_dim).map(|_| gaussian(&mut rng) * std).collect();
            let bw = store.add("bypass.w", Tensor::matrix(dim, in_dim, w));
            let bb = store.add("bypass.b", Tensor::zeros(&[dim]));
            (None, None, None, Some((bw, bb)))
        } else {
            let local_ut = LocalBlockParams::init(&mut store, "local_ut", k, dim + c, &mut rng);
            let local_uc = LocalBlockParams::init(&mut store, "local_uc", k, 3 * dim, &mut rng);
            let reps: Vec<(&str, usize)> = vec![
                ("e_u", dim),
                ("e_i", dim),
                ("e_c", c),
                ("theta", dim),
                ("r_ut", dim + c),
                ("r_uc", 3 * dim),
            ];
            let global = GlobalFusionParams::init(&mut store, "global", &reps, dim, &mut rng);
            (Some(local_ut), Some(local_uc), Some(global), None)
        };
        let tower = MlpParams::init(&mut store, "tower", dim, &tower_hidden(dim), 1, &mut rng);

        Ok(RankingModel {
            variant,
            dim,
            user_emb,
            item_emb,
            schema,
            tables,
            interest,
            store,
            params: ModelParams {
                cross,
                fusion,
                valuation,
                local_ut,
                local_uc,
                global,
                bypass,
                tower,
            },
        })
    }

    /// Predicted interaction probability for one (user, item, history).
    pub fn score(&self, user: usize, item: usize, history: &[usize]) -> Result<f64> {
        let mut tape = Tape::new(&self.store);
        let s = forward(
            &mut tape,
            &self.params,
            &self.schema,
            &self.tables,
            &self.user_emb,
            &self.item_emb,
            self.dim,
            user,
            item,
            history,
        )?;
        Ok(tape.value(s).item())
    }

    /// Loss value and parameter gradients for one labeled example, against
    /// the current parameter values (for external gradient checking).
    pub fn loss_and_grads(
        &self,
        user: usize,
        item: usize,
        history: &[usize],
        label: f64,
    ) -> Result<(f64, ParamGrads)> {
        let mut tape = Tape::new(&self.store);
        let s = forward(
            &mut tape,
            &self.params,
            &self.schema,
            &self.tables,
            &self.user_emb,
            &self.item_emb,
            self.dim,
            user,
            item,
            history,
        )?;
        let loss = bce_loss(&mut tape, s, label)?;
        let grads = tape.backward(loss)?;
        Ok((tape.value(loss).item(), grads))
    }

    /// Sample the interest history for a (user, target) pair under a fixed
    /// seeding scheme. Falls back to the target itself for users whose
    /// history holds nothing else.
    pub fn history_for(
        &self,
        train: &InteractionMatrix,
        user: usize,
        target: usize,
        stage: u64,
    ) -> Vec<usize> {
        let mut rng = rng_from(indexed_seed(stage, user as u64, target as u64));
        sample_history(user, train, target, self.interest.k, &mut rng)
            .unwrap_or_else(|_| vec![target; self.interest.k])
    }

    /// One pass over all positives with fresh negatives; returns the mean
    /// per-example loss including the L2 penalty.
    pub fn train_epoch(
        &mut self,
        train: &InteractionMatrix,
        cfg: &TrainConfig,
        epoch: usize,
    ) -> Result<f64> {
        cfg.validate()?;
        let stage = stage_seed(cfg.seed, "ranker-train");
        let mut rng = rng_from(indexed_seed(stage, epoch as u64, 0));

        let mut examples: Vec<(usize, usize, f64)> = Vec::new();
        for user in 0..train.n_users {
            for &item in train.row(user) {
                examples.push((user, item, 1.0));
                for neg in sample_negatives(train, user, cfg.negatives, &mut rng)? {
                    examples.push((user, neg, 0.0));
                }
            }
        }
        if examples.is_empty() {
            return Err(CoreError::EmptyInput("training interactions".into()));
        }
        examples.shuffle(&mut rng);

        let hist_stage = indexed_seed(stage, epoch as u64, 1);
        let mut total = 0.0;
        for batch in examples.chunks(cfg.batch_size) {
            let results: Vec<Result<(f64, ParamGrads)>> = {
                let store = &self.store;
                let params = &self.params;
                let schema = &self.schema;
                let tables = &self.tables;
                let (ue, ie, dim) = (&self.user_emb, &self.item_emb, self.dim);
                batch
                    .par_iter()
                    .map(|&(user, item, label)| {
                        let history = if params.valuation.is_some() {
                            let mut hrng =
                                rng_from(indexed_seed(hist_stage, user as u64, item as u64));
                            sample_history(user, train, item, self.interest.k, &mut hrng)
                                .unwrap_or_else(|_| vec![item; self.interest.k])
                        } else {
                            Vec::new()
                        };
                        let mut tape = Tape::new(store);
                        let s = forward(
                            &mut tape, params, schema, tables, ue, ie, dim, user, item, &history,
                        )?;
                        let loss = bce_loss(&mut tape, s, label)?;
                        let grads = tape.backward(loss)?;
                        Ok((tape.value(loss).item(), grads))
                    })
                    .collect()
            };
            self.store.zero_grads();
            let n = batch.len() as f64;
            for r in results {
                let (loss, grads) = r?;
                total += loss;
                self.store.accumulate(&grads);
            }
            // mean over the batch, then decay and step
            for id in self.store.ids().collect::<Vec<_>>() {
                self.store
                    .param_mut(id)
                    .grad
                    .data_mut()
                    .iter_mut()
                    .for_each(|g| *g /= n);
            }
            self.store.apply_l2(cfg.l2);
            self.store
                .adam_step(cfg.lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
        }
        let mean = total / examples.len() as f64 + cfg.l2 * self.store.l2_sum_squares();
        if !mean.is_finite() {
            return Err(CoreError::Numeric("non-finite training loss".into()));
        }
        Ok(mean)
    }

    /// Score a candidate list for one user and return it ranked best-first.
    /// Ties break toward the smaller item index; duplicates are an error.
    pub fn score_candidates(
        &self,
        train: &InteractionMatrix,
        user: usize,
        candidates: &[usize],
        eval_seed: u64,
    ) -> Result<Vec<(usize, f64)>> {
        let mut seen = std::collections::HashSet::new();
        for &c in candidates {
            if !seen.insert(c) {
                return Err(CoreError::Data(format!("duplicate candidate item {c}")));
            }
        }
        let stage = stage_seed(eval_seed, "ranker-eval-history");
        let mut scored = Vec::with_capacity(candidates.len());
        for &item in candidates {
            let history = if self.params.valuation.is_some() {
                self.history_for(train, user, item, stage)
            } else {
                Vec::new()
            };
            scored.push((item, self.score(user, item, &history)?));
        }
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        Ok(scored)
    }
}

/// Build the forward graph for one example; returns the sigmoid score var.
#[allow(clippy::too_many_arguments)]
fn forward<'s>(
    tape: &mut Tape<'s>,
    params: &ModelParams,
    schema: &ContextSchema,
    tables: &ContextTables,
    user_emb: &[Vec<f64>],
    item_emb: &[Vec<f64>],
    dim: usize,
    user: usize,
    item: usize,
    history: &[usize],
) -> Result<Var> {
    if user >= user_emb.len() {
        return Err(CoreError::IndexOutOfRange {
            index: user,
            n: user_emb.len(),
        });
    }
    if item >= item_emb.len() {
        return Err(CoreError::IndexOutOfRange {
            index: item,
            n: item_emb.len(),
        });
    }
    let e_u = tape.constant_vec(&user_emb[user]);
    let e_i = tape.constant_vec(&item_emb[item]);

    // adaptive context pathway
    let x0 = {
        let v = assemble_x0(user, item, schema, tables)?;
        tape.constant(Tensor::vector(v))
    };
    let xl = cross_network(tape, x0, &params.cross)?;
    let e_c = fuse(tape, x0, xl, &params.fusion)?;

    // target-conditioned interest
    let k = match &params.local_ut {
        Some(b) => b.attn.len(),
        None => history.len().max(1),
    };
    let (components, theta): (Vec<Var>, Var) = match &params.valuation {
        Some(val) => {
            let hist_vars: Vec<Var> = history
                .iter()
                .map(|&h| {
                    if h >= item_emb.len() {
                        return Err(CoreError::IndexOutOfRange {
                            index: h,
                            n: item_emb.len(),
                        });
                    }
                    Ok(tape.constant_vec(&item_emb[h]))
                })
                .collect::<Result<_>>()?;
            let (theta, _) = user_interest(tape, &hist_vars, e_i, val)?;
            (hist_vars, theta)
        }
        None => {
            let zero = tape.constant(Tensor::zeros(&[dim]));
            (vec![zero; k], zero)
        }
    };

    let fused = if let Some((bw, bb)) = params.bypass {
        let rep = tape.concat(&[e_u, e_i, e_c, theta])?;
        let w = tape.param(bw);
        let b = tape.param(bb);
        let proj = tape.matvec(w, rep)?;
        tape.add(proj, b)?
    } else {
        let r_ut = local_interaction(tape, &components, e_c, params.local_ut.as_ref().unwrap())?;
        let partner_uc = tape.concat(&[e_u, e_i])?;
        let r_uc =
            local_interaction(tape, &components, partner_uc, params.local_uc.as_ref().unwrap())?;
        global_fuse(
            tape,
            &[
                ("e_u", e_u),
                ("e_i", e_i),
                ("e_c", e_c),
                ("theta", theta),
                ("r_ut", r_ut),
                ("r_uc", r_uc),
            ],
            params.global.as_ref().unwrap(),
        )?
    };

    let logit = params.tower.forward(tape, fused)?;
    Ok(tape.sigmoid(logit))
}

/// Binary cross-entropy of a length-1 score vector against a 0/1 label,
/// with a tiny clamp so saturated scores stay differentiable.
pub fn bce_loss(tape: &mut Tape, score: Var, label: f64) -> Result<Var> {
    if tape.value(score).len() != 1 {
        return Err(CoreError::Data("bce expects a length-1 score".into()));
    }
    let eps = 1e-12;
    let squeezed = tape.scale(score, 1.0 - 2.0 * eps);
    let s = tape.add_const(squeezed, eps);
    let term = if label >= 0.5 {
        tape.ln(s)?
    } else {
        let flipped = tape.scale(s, -1.0);
        let one_minus = tape.add_const(flipped, 1.0);
        tape.ln(one_minus)?
    };
    let neg = tape.scale(term, -1.0);
    Ok(tape.sum(neg))
}
