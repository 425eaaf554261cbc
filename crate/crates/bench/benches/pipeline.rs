use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use driftrec_bench::{random_matrix, random_rows};
use driftrec_core::embedding::{count_cooccurrences, generate_walks};
use driftrec_core::ranker::Variant;
use driftrec_core::{
    build_user_similarity, ContextSchema, ContextTables, FeatureKind, FeatureTable, FieldSource,
    FieldSpec, RankingModel, WalkConfig,
};

fn bench_similarity(c: &mut Criterion) {
    let mut group = c.benchmark_group("similarity_build");
    for &n_users in &[200usize, 500] {
        let matrix = random_matrix(n_users, 400, 0.05, 42);
        group.bench_with_input(BenchmarkId::from_parameter(n_users), &matrix, |b, m| {
            b.iter(|| build_user_similarity(m).unwrap())
        });
    }
    group.finish();
}

fn bench_walks(c: &mut Criterion) {
    let matrix = random_matrix(300, 400, 0.05, 42);
    let sim = build_user_similarity(&matrix).unwrap();
    let cfg = WalkConfig {
        walks_per_node: 5,
        walk_length: 20,
        seed: 7,
        ..WalkConfig::default()
    };
    c.bench_function("generate_walks", |b| {
        b.iter(|| generate_walks(&sim, &cfg).unwrap())
    });
    let walks = generate_walks(&sim, &cfg).unwrap();
    c.bench_function("count_cooccurrences", |b| {
        b.iter(|| count_cooccurrences(&walks.walks).unwrap())
    });
}

fn bench_forward(c: &mut Criterion) {
    let dim = 64;
    let (n_users, n_items) = (100, 120);
    let user_emb = random_rows(n_users, dim, 1);
    let item_emb = random_rows(n_items, dim, 2);
    let schema = ContextSchema {
        fields: vec![FieldSpec {
            name: "side".into(),
            source: FieldSource::User,
            kind: FeatureKind::Dense,
            dim: 16,
        }],
        cross_depth: 2,
    };
    let mut table = FeatureTable::new(16, FeatureKind::Dense);
    for (u, row) in random_rows(n_users, 16, 3).into_iter().enumerate() {
        table.insert(&u.to_string(), row).unwrap();
    }
    let mut tables = ContextTables::default();
    tables.insert("side", table);
    let model =
        RankingModel::new(Variant::Full, user_emb, item_emb, &schema, tables, 8, 11).unwrap();
    let history: Vec<usize> = (0..8).collect();
    c.bench_function("forward_score", |b| {
        b.iter(|| model.score(3, 17, &history).unwrap())
    });
}

criterion_group!(benches, bench_similarity, bench_walks, bench_forward);
criterion_main!(benches);
