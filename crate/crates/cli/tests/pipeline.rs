//! End-to-end pipeline runs on a small synthetic corpus.

use driftrec_cli::commands::{cmd_embed, cmd_evaluate, cmd_prepare, cmd_train, Artifacts};
use driftrec_cli::synth::{generate, SynthConfig};
use driftrec_cli::RunConfig;

fn small_corpus(dir: &std::path::Path) -> RunConfig {
    let synth = SynthConfig {
        n_users: 60,
        n_items: 48,
        n_groups: 4,
        interactions_per_user: 10,
        ..SynthConfig::default()
    };
    let data = generate(&synth, &dir.join("data")).unwrap();
    let mut cfg = data.run_config(&dir.join("out"));
    cfg.embedding.dim = 8;
    cfg.embedding.walks_per_node = 10;
    cfg.embedding.epochs = 10;
    cfg.interest.k = 4;
    cfg.train.epochs = 2;
    cfg.train.batch_size = 64;
    cfg.eval.negatives = 20;
    cfg
}

#[test]
fn prepare_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_corpus(dir.path());
    let art = Artifacts::new(&cfg.out_dir);
    let s1 = cmd_prepare(&cfg).unwrap();
    let bytes1 = std::fs::read(art.train_tsv()).unwrap();
    let feat1 = std::fs::read(art.feature_tsv("user_profile")).unwrap();
    let s2 = cmd_prepare(&cfg).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(bytes1, std::fs::read(art.train_tsv()).unwrap());
    assert_eq!(feat1, std::fs::read(art.feature_tsv("user_profile")).unwrap());
    assert_eq!(s1.n_users, 60);
    assert_eq!(s1.n_test, 60);
}

#[test]
fn missing_input_errors_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_corpus(dir.path());
    cfg.data.interactions = dir.path().join("no_such_file.tsv");
    let err = cmd_prepare(&cfg).unwrap_err();
    assert!(err.to_string().contains("no_such_file.tsv"), "{err}");
}

#[test]
fn full_pipeline_runs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_corpus(dir.path());
    let art = Artifacts::new(&cfg.out_dir);

    cmd_prepare(&cfg).unwrap();
    cmd_embed(&cfg).unwrap();
    let embed_bytes = std::fs::read(art.embed_ckpt()).unwrap();
    cmd_train(&cfg, false).unwrap();
    let report = cmd_evaluate(&cfg).unwrap();
    assert_eq!(report.n_evaluated, 60);
    assert!(report.hr_at(10).unwrap() > 0.0);

    // embeddings were never touched after the embed stage
    assert_eq!(embed_bytes, std::fs::read(art.embed_ckpt()).unwrap());

    // identical seed: identical embedding tensors and eval report (the
    // checkpoint bytes embed the config snapshot, whose paths differ here)
    let dir2 = tempfile::tempdir().unwrap();
    let cfg2 = small_corpus(dir2.path());
    let art2 = Artifacts::new(&cfg2.out_dir);
    cmd_prepare(&cfg2).unwrap();
    cmd_embed(&cfg2).unwrap();
    cmd_train(&cfg2, false).unwrap();
    let report2 = cmd_evaluate(&cfg2).unwrap();
    let ck1 = driftrec_cli::Checkpoint::load(&art.embed_ckpt()).unwrap();
    let ck2 = driftrec_cli::Checkpoint::load(&art2.embed_ckpt()).unwrap();
    assert_eq!(ck1.tensors, ck2.tensors);
    assert_eq!(report, report2);
}

#[test]
fn resume_continues_the_epoch_counter() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_corpus(dir.path());
    cfg.train.epochs = 1;
    let art = Artifacts::new(&cfg.out_dir);

    cmd_prepare(&cfg).unwrap();
    cmd_embed(&cfg).unwrap();
    cmd_train(&cfg, false).unwrap();
    cmd_train(&cfg, true).unwrap();
    let log = std::fs::read_to_string(art.train_log()).unwrap();
    let epochs: Vec<&str> = log
        .lines()
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(epochs, vec!["0", "1"]);

    // two epochs in one run match one run resumed after one epoch
    let dir2 = tempfile::tempdir().unwrap();
    let mut cfg2 = small_corpus(dir2.path());
    cfg2.train.epochs = 2;
    cmd_prepare(&cfg2).unwrap();
    cmd_embed(&cfg2).unwrap();
    cmd_train(&cfg2, false).unwrap();
    let r1 = cmd_evaluate(&cfg).unwrap();
    let r2 = cmd_evaluate(&cfg2).unwrap();
    assert_eq!(r1, r2);
}

#[test]
fn swapped_features_change_scores_without_touching_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_corpus(dir.path());
    let art = Artifacts::new(&cfg.out_dir);

    cmd_prepare(&cfg).unwrap();
    cmd_embed(&cfg).unwrap();
    cmd_train(&cfg, false).unwrap();
    let before = cmd_evaluate(&cfg).unwrap();
    let embed_bytes = std::fs::read(art.embed_ckpt()).unwrap();

    // re-prepare with shuffled user profiles, then evaluate again
    let mut swapped = cfg.clone();
    let profile_path = dir.path().join("data").join("user_profile_swapped.tsv");
    let original = std::fs::read_to_string(&cfg.features.field[0].path).unwrap();
    let (mut ids, mut rows): (Vec<&str>, Vec<&str>) = (Vec::new(), Vec::new());
    let mut header = Vec::new();
    for line in original.lines() {
        if line.starts_with('#') {
            header.push(line);
        } else {
            let (id, row) = line.split_once('\t').unwrap();
            ids.push(id);
            rows.push(row);
        }
    }
    // rotate the value rows against the ids so every user gets another
    // user's profile
    let mid = rows.len() / 2;
    rows.rotate_left(mid);
    let mut text = header.join("\n") + "\n";
    for (id, row) in ids.iter().zip(&rows) {
        text.push_str(&format!("{id}\t{row}\n"));
    }
    std::fs::write(&profile_path, text).unwrap();
    swapped.features.field[0].path = profile_path;
    cmd_prepare(&swapped).unwrap();
    let after = cmd_evaluate(&swapped).unwrap();

    assert_ne!(before, after, "swapped features should change scores");
    assert_eq!(
        embed_bytes,
        std::fs::read(art.embed_ckpt()).unwrap(),
        "embed checkpoint must not change"
    );
}
