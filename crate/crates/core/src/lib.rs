//! Hybrid recommender core: static graph embeddings from co-interaction
//! similarity, an adaptive context/interest head on top, and leave-one-out
//! ranking evaluation. The `cli` crate drives these pieces end to end.

pub mod autograd;
pub mod context;
pub mod data;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod interest;
pub mod ranker;
pub mod seed;
pub mod similarity;

pub use autograd::{MlpParams, ParamId, ParamStore, Tape, Tensor, Var};
pub use context::{ContextSchema, ContextTables, FieldSource, FieldSpec};
pub use data::{
    build_matrix, leave_one_out_split, load_interactions, FeatureKind, FeatureTable, IdRemap,
    Interaction, InteractionLog, InteractionMatrix, Split,
};
pub use embedding::{finalize, train_embeddings, EmbeddingTable, WalkConfig};
pub use error::{CoreError, Result};
pub use eval::{evaluate, run_ablation, EvalConfig, EvalReport, Scorer};
pub use ranker::{RankingModel, TrainConfig, Variant};
pub use similarity::{build_item_similarity, build_user_similarity, SimilarityMatrix};
