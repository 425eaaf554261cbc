//! Deterministic synthetic dataset with planted group structure, used by
//! integration tests and as a stand-in corpus when no real interaction log
//! is available. Items belong to groups; each user favors a couple of
//! groups, and context features expose the same structure.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;

use driftrec_core::seed::{rng_from, stage_seed};
use driftrec_core::{CoreError, FeatureKind, FeatureTable, Result};

use crate::config::{FieldSection, RunConfig};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_groups: usize,
    /// Preferred groups per user.
    pub groups_per_user: usize,
    pub interactions_per_user: usize,
    /// Probability that an interaction lands inside a preferred group.
    pub focus: f64,
    /// Universally popular items appended after the group items. Every
    /// user consumes `hubs_per_user` of them, which floods the user-user
    /// co-interaction graph with taste-free edges (the popularity skew of
    /// real logs) while leaving the item graph's group structure mostly
    /// intact.
    pub n_hubs: usize,
    pub hubs_per_user: usize,
    /// Width of the pretrained item vectors.
    pub pretrained_dim: usize,
    /// When false, the user profile is pure noise instead of encoding the
    /// preferred groups, so group preference is only recoverable from the
    /// interaction history.
    pub informative_profile: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            n_users: 400,
            n_items: 240,
            n_groups: 8,
            groups_per_user: 2,
            interactions_per_user: 24,
            focus: 0.9,
            n_hubs: 0,
            hubs_per_user: 0,
            pretrained_dim: 8,
            informative_profile: true,
            seed: 0,
        }
    }
}

/// Files written by `generate`.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub interactions: PathBuf,
    pub user_profile: PathBuf,
    pub item_genre: PathBuf,
    pub item_embed: PathBuf,
}

impl SynthDataset {
    /// A RunConfig wired to the generated files, with small-corpus defaults.
    pub fn run_config(&self, out_dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.out_dir = out_dir.to_path_buf();
        cfg.data.interactions = self.interactions.clone();
        cfg.features.field = vec![
            FieldSection {
                name: "user_profile".into(),
                source: "user".into(),
                kind: "dense".into(),
                path: self.user_profile.clone(),
            },
            FieldSection {
                name: "item_genre".into(),
                source: "item".into(),
                kind: "categorical-onehot".into(),
                path: self.item_genre.clone(),
            },
            FieldSection {
                name: "item_embed".into(),
                source: "item".into(),
                kind: "pretrained".into(),
                path: self.item_embed.clone(),
            },
        ];
        cfg
    }
}

/// Write the interaction log and feature files into `dir`.
pub fn generate(cfg: &SynthConfig, dir: &Path) -> Result<SynthDataset> {
    if cfg.n_groups == 0
        || cfg.groups_per_user == 0
        || cfg.groups_per_user > cfg.n_groups
        || cfg.n_items < cfg.n_groups
        || cfg.interactions_per_user < 2
        || cfg.hubs_per_user > cfg.n_hubs
    {
        return Err(CoreError::InvalidConfig("bad synthetic layout".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| CoreError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let group_of = |item: usize| item % cfg.n_groups;
    let mut rng = rng_from(stage_seed(cfg.seed, "synth"));

    // per-user preferred groups, sampled without replacement
    let prefs: Vec<Vec<usize>> = (0..cfg.n_users)
        .map(|_| {
            let mut groups: Vec<usize> = (0..cfg.n_groups).collect();
            for i in 0..cfg.groups_per_user {
                let j = rng.gen_range(i..groups.len());
                groups.swap(i, j);
            }
            groups.truncate(cfg.groups_per_user);
            groups
        })
        .collect();

    let interactions = dir.join("interactions.tsv");
    {
        let mut out =
            std::io::BufWriter::new(std::fs::File::create(&interactions).map_err(|e| {
                CoreError::Io {
                    path: interactions.display().to_string(),
                    source: e,
                }
            })?);
        let io_err = |e: std::io::Error| CoreError::Io {
            path: interactions.display().to_string(),
            source: e,
        };
        for (user, groups) in prefs.iter().enumerate() {
            let mut seen = std::collections::HashSet::new();
            let mut t = 0usize;
            // hub consumption first (earliest timestamps)
            let mut hubs: Vec<usize> = (0..cfg.n_hubs).collect();
            for i in 0..cfg.hubs_per_user {
                let j = rng.gen_range(i..hubs.len());
                hubs.swap(i, j);
                let item = cfg.n_items + hubs[i];
                writeln!(out, "{user}\t{item}\t1\t{t}").map_err(io_err)?;
                t += 1;
            }
            let total = cfg.interactions_per_user.min(cfg.n_items);
            let in_group = |rng: &mut rand_chacha::ChaCha8Rng| {
                // uniform item within a uniformly chosen preferred group
                let g = groups[rng.gen_range(0..groups.len())];
                let per_group =
                    cfg.n_items / cfg.n_groups + usize::from(g < cfg.n_items % cfg.n_groups);
                g + cfg.n_groups * rng.gen_range(0..per_group)
            };
            let mut attempts = 0usize;
            while seen.len() < total {
                // the final interaction (the leave-one-out holdout) is
                // always on-preference; earlier ones follow `focus`
                let last = seen.len() + 1 == total;
                let item = if (last && attempts < 1000) || rng.gen::<f64>() < cfg.focus {
                    in_group(&mut rng)
                } else {
                    rng.gen_range(0..cfg.n_items)
                };
                attempts += 1;
                if seen.insert(item) {
                    writeln!(out, "{user}\t{item}\t1\t{t}").map_err(io_err)?;
                    t += 1;
                    attempts = 0;
                }
            }
        }
    }

    // dense user profile: preferred-group multi-hot plus mild noise, or
    // pure noise when the profile is configured as uninformative
    let user_profile = dir.join("user_profile.tsv");
    {
        let mut table = FeatureTable::new(cfg.n_groups, FeatureKind::Dense);
        for (user, groups) in prefs.iter().enumerate() {
            let mut row = vec![0.0; cfg.n_groups];
            if cfg.informative_profile {
                for &g in groups {
                    row[g] = 1.0;
                }
                for x in &mut row {
                    *x += 0.05 * rng.gen::<f64>();
                }
            } else {
                for x in &mut row {
                    *x = rng.gen::<f64>();
                }
            }
            table.insert(&user.to_string(), row)?;
        }
        table.save(&user_profile)?;
    }

    // one-hot item group; hubs get a dedicated category of their own
    let n_cats = cfg.n_groups + usize::from(cfg.n_hubs > 0);
    let item_genre = dir.join("item_genre.tsv");
    {
        let mut table = FeatureTable::new(n_cats, FeatureKind::CategoricalOnehot);
        for item in 0..cfg.n_items + cfg.n_hubs {
            let mut row = vec![0.0; n_cats];
            let cat = if item < cfg.n_items {
                group_of(item)
            } else {
                cfg.n_groups
            };
            row[cat] = 1.0;
            table.insert(&item.to_string(), row)?;
        }
        table.save(&item_genre)?;
    }

    // pretrained item vectors: group centroid plus noise
    let item_embed = dir.join("item_embed.tsv");
    {
        let centroids: Vec<Vec<f64>> = (0..cfg.n_groups + 1)
            .map(|_| {
                (0..cfg.pretrained_dim)
                    .map(|_| rng.gen::<f64>() * 2.0 - 1.0)
                    .collect()
            })
            .collect();
        let mut table = FeatureTable::new(cfg.pretrained_dim, FeatureKind::Pretrained);
        for item in 0..cfg.n_items + cfg.n_hubs {
            let cat = if item < cfg.n_items {
                group_of(item)
            } else {
                cfg.n_groups
            };
            let row: Vec<f64> = centroids[cat]
                .iter()
                .map(|c| c + 0.1 * (rng.gen::<f64>() - 0.5))
                .collect();
            table.insert(&item.to_string(), row)?;
        }
        table.save(&item_embed)?;
    }

    Ok(SynthDataset {
        interactions,
        user_profile,
        item_genre,
        item_embed,
    })
}
