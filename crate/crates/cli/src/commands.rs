//! Pipeline commands. Each command reads/writes artifacts under the
//! configured output directory, so stages can be rerun independently:
//!
//! ```text
//! prepare -> prepared/{train,test,users,items,stats,feature_*}.tsv
//! embed   -> embed.ckpt
//! train   -> model.ckpt + train.log
//! evaluate-> eval.tsv
//! ablate  -> ablation.tsv
//! sweep   -> sweep_<axis>.tsv
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use driftrec_core::embedding::{count_cooccurrences, generate_walks};
use driftrec_core::eval::{AblationReport, ModelScorer};
use driftrec_core::ranker::Variant;
use driftrec_core::seed::stage_seed;
use driftrec_core::{
    build_item_similarity, build_matrix, build_user_similarity, evaluate, finalize,
    leave_one_out_split, load_interactions, run_ablation, train_embeddings, ContextSchema,
    ContextTables, CoreError, EvalReport, FeatureKind, FeatureTable, FieldSpec, Interaction,
    InteractionMatrix, RankingModel, Result, Tensor,
};

use crate::checkpoint::{embedding_rows, embedding_tensor, Checkpoint};
use crate::config::{parse_source, RunConfig};

/// Output-directory layout.
pub struct Artifacts {
    pub out_dir: PathBuf,
}

impl Artifacts {
    pub fn new(out_dir: &Path) -> Artifacts {
        Artifacts {
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn prepared_dir(&self) -> PathBuf {
        self.out_dir.join("prepared")
    }

    pub fn train_tsv(&self) -> PathBuf {
        self.prepared_dir().join("train.tsv")
    }

    pub fn test_tsv(&self) -> PathBuf {
        self.prepared_dir().join("test.tsv")
    }

    pub fn users_tsv(&self) -> PathBuf {
        self.prepared_dir().join("users.tsv")
    }

    pub fn items_tsv(&self) -> PathBuf {
        self.prepared_dir().join("items.tsv")
    }

    pub fn stats_tsv(&self) -> PathBuf {
        self.prepared_dir().join("stats.tsv")
    }

    pub fn feature_tsv(&self, field: &str) -> PathBuf {
        self.prepared_dir().join(format!("feature_{field}.tsv"))
    }

    pub fn embed_ckpt(&self) -> PathBuf {
        self.out_dir.join("embed.ckpt")
    }

    pub fn model_ckpt(&self) -> PathBuf {
        self.out_dir.join("model.ckpt")
    }

    pub fn train_log(&self) -> PathBuf {
        self.out_dir.join("train.log")
    }

    pub fn eval_tsv(&self) -> PathBuf {
        self.out_dir.join("eval.tsv")
    }

    pub fn ablation_tsv(&self) -> PathBuf {
        self.out_dir.join("ablation.tsv")
    }

    pub fn sweep_tsv(&self, axis: &str) -> PathBuf {
        self.out_dir.join(format!("sweep_{axis}.tsv"))
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CoreError + '_ {
    move |e| CoreError::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn write_interactions(path: &Path, xs: &[Interaction]) -> Result<()> {
    let mut out = String::new();
    for x in xs {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            x.user_idx, x.item_idx, x.rating, x.timestamp
        ));
    }
    write_text(path, &out)
}

/// Parse a prepared interaction file whose ids are already dense indices.
fn read_interactions(path: &Path) -> Result<Vec<Interaction>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let parse_err = |msg: String| CoreError::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            msg,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(parse_err(format!("expected 4 columns, got {}", cols.len())));
        }
        out.push(Interaction {
            user_idx: cols[0].parse().map_err(|_| parse_err("bad user".into()))?,
            item_idx: cols[1].parse().map_err(|_| parse_err("bad item".into()))?,
            rating: cols[2].parse().map_err(|_| parse_err("bad rating".into()))?,
            timestamp: cols[3]
                .parse()
                .map_err(|_| parse_err("bad timestamp".into()))?,
        });
    }
    Ok(out)
}

fn read_stats(path: &Path) -> Result<HashMap<String, usize>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = HashMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('\t') {
            out.insert(
                k.to_string(),
                v.parse().map_err(|_| CoreError::Parse {
                    path: path.display().to_string(),
                    line: 0,
                    msg: format!("bad stat value for {k}"),
                })?,
            );
        }
    }
    Ok(out)
}

fn stat(stats: &HashMap<String, usize>, key: &str) -> Result<usize> {
    stats
        .get(key)
        .copied()
        .ok_or_else(|| CoreError::Data(format!("missing stat {key:?}")))
}

/// Train matrix sized by the full corpus, not just the indices present in
/// the train split.
fn load_train_matrix(art: &Artifacts) -> Result<InteractionMatrix> {
    let stats = read_stats(&art.stats_tsv())?;
    let train = read_interactions(&art.train_tsv())?;
    let mut m = build_matrix(&train)?;
    m.pad_to(stat(&stats, "users")?, stat(&stats, "items")?)?;
    Ok(m)
}

fn read_remap(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let (ext, idx) = line.split_once('\t').ok_or_else(|| CoreError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: "expected external<TAB>index".into(),
        })?;
        if idx.parse::<usize>() != Ok(i) {
            return Err(CoreError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: "remap rows out of order".into(),
            });
        }
        out.push(ext.to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrepareSummary {
    pub n_users: usize,
    pub n_items: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub dropped_users: usize,
}

/// Load, remap, split, and normalize everything into canonical on-disk
/// artifacts. Deterministic, so reruns produce identical bytes.
pub fn cmd_prepare(cfg: &RunConfig) -> Result<PrepareSummary> {
    cfg.validate()?;
    let art = Artifacts::new(&cfg.out_dir);
    std::fs::create_dir_all(art.prepared_dir()).map_err(io_err(&art.prepared_dir()))?;

    let log = load_interactions(&cfg.data.interactions)?;
    let split = leave_one_out_split(&log.interactions)?;
    write_interactions(&art.train_tsv(), &split.train)?;
    write_interactions(&art.test_tsv(), &split.test)?;

    let mut users = String::new();
    for (i, ext) in log.users.to_external.iter().enumerate() {
        users.push_str(&format!("{ext}\t{i}\n"));
    }
    write_text(&art.users_tsv(), &users)?;
    let mut items = String::new();
    for (i, ext) in log.items.to_external.iter().enumerate() {
        items.push_str(&format!("{ext}\t{i}\n"));
    }
    write_text(&art.items_tsv(), &items)?;

    let summary = PrepareSummary {
        n_users: log.users.len(),
        n_items: log.items.len(),
        n_train: split.train.len(),
        n_test: split.test.len(),
        dropped_users: split.dropped_users,
    };
    write_text(
        &art.stats_tsv(),
        &format!(
            "users\t{}\nitems\t{}\ntrain\t{}\ntest\t{}\ndropped_users\t{}\n",
            summary.n_users, summary.n_items, summary.n_train, summary.n_test,
            summary.dropped_users
        ),
    )?;

    for field in &cfg.features.field {
        let kind = FeatureKind::parse(&field.kind)?;
        let source = parse_source(&field.source)?;
        let raw = FeatureTable::load(&field.path, kind)?;
        let table = if kind == FeatureKind::Dense {
            driftrec_core::data::min_max_normalize(&raw)?
        } else {
            raw
        };
        // remap row keys from external ids to internal indices
        let mut remapped = FeatureTable::new(table.dim, table.kind);
        let mut kept = 0usize;
        for id in table.ids() {
            let internal = match source {
                driftrec_core::FieldSource::User => {
                    log.users.to_index.get(id).map(usize::to_string)
                }
                driftrec_core::FieldSource::Item => {
                    log.items.to_index.get(id).map(usize::to_string)
                }
                driftrec_core::FieldSource::Interaction => {
                    id.split_once(':').and_then(|(u, i)| {
                        Some(format!(
                            "{}:{}",
                            log.users.to_index.get(u)?,
                            log.items.to_index.get(i)?
                        ))
                    })
                }
            };
            match internal {
                Some(key) => {
                    remapped.insert(&key, table.get(id).unwrap().to_vec())?;
                    kept += 1;
                }
                None => log::warn!(
                    "feature {} row {id:?} matches no interaction id; dropped",
                    field.name
                ),
            }
        }
        log::info!("feature {}: kept {kept}/{} rows", field.name, table.len());
        remapped.save(&art.feature_tsv(&field.name))?;
    }
    log::info!(
        "prepared N={} users, M={} items, {} train / {} test interactions",
        summary.n_users,
        summary.n_items,
        summary.n_train,
        summary.n_test
    );
    Ok(summary)
}

fn embed_one(
    sim: &driftrec_core::SimilarityMatrix,
    n: usize,
    cfg: &RunConfig,
    stage: &str,
) -> Result<Vec<Vec<f64>>> {
    let mut walk_cfg = cfg.walk_config();
    walk_cfg.seed = stage_seed(cfg.seed, &format!("walks-{stage}"));
    let walks = generate_walks(sim, &walk_cfg)?;
    log::info!(
        "{stage}: {} walks ({} isolated starts skipped)",
        walks.walks.len(),
        walks.skipped_isolated
    );
    let table = count_cooccurrences(&walks.walks)?;
    log::info!(
        "{stage}: {} co-occurring pairs, total mass {:.1}",
        table.len(),
        table.total()
    );
    let emb = train_embeddings(
        &table,
        cfg.embedding.dim,
        cfg.embedding.epochs,
        cfg.embedding.lr,
        stage_seed(cfg.seed, &format!("embed-{stage}")),
    )?;
    let mut rows = finalize(&emb);
    // nodes that never entered a walk keep zero vectors
    rows.resize(n, vec![0.0; cfg.embedding.dim]);
    rows.truncate(n);
    Ok(rows)
}

/// Build both similarity graphs and train the static embeddings.
pub fn cmd_embed(cfg: &RunConfig) -> Result<()> {
    let art = Artifacts::new(&cfg.out_dir);
    let matrix = load_train_matrix(&art)?;

    let user_sim = build_user_similarity(&matrix)?;
    let item_sim = build_item_similarity(&matrix)?;
    let user_rows = embed_one(&user_sim, matrix.n_users, cfg, "user")?;
    let item_rows = embed_one(&item_sim, matrix.n_items, cfg, "item")?;

    let mut ckpt = Checkpoint {
        config: cfg.to_toml(),
        users: read_remap(&art.users_tsv())?,
        items: read_remap(&art.items_tsv())?,
        tensors: Vec::new(),
    };
    ckpt.push("user_emb", embedding_tensor(&user_rows));
    ckpt.push("item_emb", embedding_tensor(&item_rows));
    ckpt.save(&art.embed_ckpt())?;
    log::info!("wrote {}", art.embed_ckpt().display());
    Ok(())
}

/// Schema and tables from the prepared (normalized, remapped) features.
pub fn load_context(cfg: &RunConfig, art: &Artifacts) -> Result<(ContextSchema, ContextTables)> {
    let mut fields = Vec::new();
    let mut tables = ContextTables::default();
    for f in &cfg.features.field {
        let kind = FeatureKind::parse(&f.kind)?;
        let table = FeatureTable::load(&art.feature_tsv(&f.name), kind)?;
        fields.push(FieldSpec {
            name: f.name.clone(),
            source: parse_source(&f.source)?,
            kind,
            dim: table.dim,
        });
        tables.insert(&f.name, table);
    }
    Ok((
        ContextSchema {
            fields,
            cross_depth: cfg.features.cross_depth,
        },
        tables,
    ))
}

fn build_model(cfg: &RunConfig, art: &Artifacts) -> Result<RankingModel> {
    let embed = Checkpoint::load(&art.embed_ckpt())?;
    let user_emb = embedding_rows(
        embed
            .tensor("user_emb")
            .ok_or_else(|| CoreError::Data("embed checkpoint lacks user_emb".into()))?,
    )?;
    let item_emb = embedding_rows(
        embed
            .tensor("item_emb")
            .ok_or_else(|| CoreError::Data("embed checkpoint lacks item_emb".into()))?,
    )?;
    let (schema, tables) = load_context(cfg, art)?;
    RankingModel::new(
        Variant::parse(&cfg.variant)?,
        user_emb,
        item_emb,
        &schema,
        tables,
        cfg.interest.k,
        cfg.seed,
    )
}

const META_EPOCHS: &str = "meta.epochs_done";

fn save_model(cfg: &RunConfig, art: &Artifacts, model: &RankingModel, epochs_done: usize) -> Result<()> {
    let embed = Checkpoint::load(&art.embed_ckpt())?;
    let mut ckpt = Checkpoint {
        config: cfg.to_toml(),
        users: embed.users,
        items: embed.items,
        tensors: Vec::new(),
    };
    // iter_named and ids walk parameters in the same insertion order
    for ((name, value), id) in model.store.iter_named().zip(model.store.ids()) {
        let (m, v, step) = model.store.opt_state(id);
        ckpt.push(&format!("param.{name}"), value.clone());
        ckpt.push(&format!("adam_m.{name}"), m.clone());
        ckpt.push(&format!("adam_v.{name}"), v.clone());
        ckpt.push(&format!("step.{name}"), Tensor::scalar(step as f64));
    }
    ckpt.push(META_EPOCHS, Tensor::scalar(epochs_done as f64));
    ckpt.save(&art.model_ckpt())
}

fn restore_model(model: &mut RankingModel, ckpt: &Checkpoint) -> Result<usize> {
    let names: Vec<String> = model
        .store
        .iter_named()
        .map(|(n, _)| n.to_string())
        .collect();
    for name in &names {
        let value = ckpt
            .tensor(&format!("param.{name}"))
            .ok_or_else(|| CoreError::Data(format!("checkpoint lacks parameter {name:?}")))?;
        model.store.set_value(name, value.clone())?;
        if let (Some(m), Some(v), Some(step)) = (
            ckpt.tensor(&format!("adam_m.{name}")),
            ckpt.tensor(&format!("adam_v.{name}")),
            ckpt.tensor(&format!("step.{name}")),
        ) {
            model
                .store
                .set_opt_state(name, m.clone(), v.clone(), step.item() as u64)?;
        }
    }
    Ok(ckpt
        .tensor(META_EPOCHS)
        .map(|t| t.item() as usize)
        .unwrap_or(0))
}

/// Train the ranking head on frozen embeddings. With `resume`, optimizer
/// state and the epoch counter continue from the existing model checkpoint.
pub fn cmd_train(cfg: &RunConfig, resume: bool) -> Result<()> {
    let art = Artifacts::new(&cfg.out_dir);
    let matrix = load_train_matrix(&art)?;
    let mut model = build_model(cfg, &art)?;
    let mut start_epoch = 0usize;
    if resume {
        start_epoch = restore_model(&mut model, &Checkpoint::load(&art.model_ckpt())?)?;
        log::info!("resuming after {start_epoch} epochs");
    }

    let train_cfg = cfg.train_config();
    let mut log_lines = if resume {
        std::fs::read_to_string(art.train_log()).unwrap_or_default()
    } else {
        String::new()
    };
    for epoch in start_epoch..start_epoch + cfg.train.epochs {
        let t0 = Instant::now();
        let loss = model.train_epoch(&matrix, &train_cfg, epoch)?;
        let wall_ms = t0.elapsed().as_millis();
        log::info!("epoch {epoch}: mean loss {loss:.6} ({wall_ms} ms)");
        log_lines.push_str(&format!("{epoch}\t{loss:.6}\t{wall_ms}\n"));
    }
    write_text(&art.train_log(), &log_lines)?;
    save_model(cfg, &art, &model, start_epoch + cfg.train.epochs)?;
    log::info!("wrote {}", art.model_ckpt().display());
    Ok(())
}

/// Evaluate the trained model under the leave-one-out protocol.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvalReport> {
    let art = Artifacts::new(&cfg.out_dir);
    let matrix = load_train_matrix(&art)?;
    let test = read_interactions(&art.test_tsv())?;
    let mut model = build_model(cfg, &art)?;
    restore_model(&mut model, &Checkpoint::load(&art.model_ckpt())?)?;

    let scorer = ModelScorer {
        model: &model,
        eval_seed: cfg.seed,
    };
    let report = evaluate(&scorer, &matrix, &test, &cfg.eval_config())?;
    write_text(&art.eval_tsv(), &(report.lines().join("\n") + "\n"))?;
    Ok(report)
}

/// Train and evaluate every ablation variant from the shared embeddings.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<AblationReport> {
    let art = Artifacts::new(&cfg.out_dir);
    let matrix = load_train_matrix(&art)?;
    let test = read_interactions(&art.test_tsv())?;
    let embed = Checkpoint::load(&art.embed_ckpt())?;
    let user_emb = embedding_rows(embed.tensor("user_emb").unwrap())?;
    let item_emb = embedding_rows(embed.tensor("item_emb").unwrap())?;
    let (schema, tables) = load_context(cfg, &art)?;

    let report = run_ablation(
        &Variant::all(),
        &user_emb,
        &item_emb,
        &schema,
        &tables,
        &matrix,
        &test,
        &cfg.train_config(),
        &cfg.eval_config(),
        cfg.interest.k,
    )?;
    write_text(&art.ablation_tsv(), &(report.lines().join("\n") + "\n"))?;
    Ok(report)
}

/// Sweep axes and their fixed value grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    EmbeddingDim,
    WalkLength,
    InterestK,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<SweepAxis> {
        match s {
            "embedding_dim" => Ok(SweepAxis::EmbeddingDim),
            "walk_length" => Ok(SweepAxis::WalkLength),
            "interest_k" => Ok(SweepAxis::InterestK),
            other => Err(CoreError::InvalidConfig(format!(
                "unknown sweep axis {other:?}"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SweepAxis::EmbeddingDim => "embedding_dim",
            SweepAxis::WalkLength => "walk_length",
            SweepAxis::InterestK => "interest_k",
        }
    }

    pub fn values(&self) -> &'static [usize] {
        match self {
            SweepAxis::EmbeddingDim => &[32, 64],
            SweepAxis::WalkLength => &[5, 10, 20],
            SweepAxis::InterestK => &[1, 4, 8],
        }
    }
}

/// Run the full pipeline per grid value and collect evaluation reports.
pub fn cmd_sweep(cfg: &RunConfig, axis: SweepAxis) -> Result<Vec<(usize, EvalReport)>> {
    let art = Artifacts::new(&cfg.out_dir);
    let mut results = Vec::new();
    for &value in axis.values() {
        let mut sub = cfg.clone();
        match axis {
            SweepAxis::EmbeddingDim => sub.embedding.dim = value,
            SweepAxis::WalkLength => sub.embedding.walk_length = value,
            SweepAxis::InterestK => sub.interest.k = value,
        }
        sub.out_dir = cfg.out_dir.join("sweep").join(axis.label()).join(value.to_string());
        log::info!("sweep {}={value}", axis.label());
        cmd_prepare(&sub)?;
        cmd_embed(&sub)?;
        cmd_train(&sub, false)?;
        results.push((value, cmd_evaluate(&sub)?));
    }
    let mut lines = String::new();
    for (value, report) in &results {
        for line in report.lines() {
            lines.push_str(&format!("{}\t{value}\t{line}\n", axis.label()));
        }
    }
    write_text(&art.sweep_tsv(axis.label()), &lines)?;
    Ok(results)
}
