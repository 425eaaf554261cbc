//! Interaction-log ingestion, implicit-feedback binarization, leave-one-out
//! splitting, negative sampling, and feature tables.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};

/// One raw interaction event, already remapped to dense indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user_idx: usize,
    pub item_idx: usize,
    pub rating: f64,
    pub timestamp: i64,
}

/// Binary user x item interaction matrix, stored as per-user sorted rows.
/// Any observed event counts as an interaction regardless of rating value.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    pub n_users: usize,
    pub n_items: usize,
    rows: Vec<Vec<usize>>,
}

impl InteractionMatrix {
    pub fn row(&self, user: usize) -> &[usize] {
        &self.rows[user]
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.rows[user].binary_search(&item).is_ok()
    }

    pub fn n_interactions(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Widen to cover users/items with no training interactions.
    pub fn pad_to(&mut self, n_users: usize, n_items: usize) -> Result<()> {
        if n_users < self.n_users || n_items < self.n_items {
            return Err(CoreError::Data(format!(
                "cannot shrink a {}x{} matrix to {n_users}x{n_items}",
                self.n_users, self.n_items
            )));
        }
        self.n_users = n_users;
        self.n_items = n_items;
        self.rows.resize(n_users, Vec::new());
        Ok(())
    }

    /// Interactions per item, over the whole matrix.
    pub fn item_popularity(&self) -> Vec<usize> {
        let mut pop = vec![0usize; self.n_items];
        for row in &self.rows {
            for &i in row {
                pop[i] += 1;
            }
        }
        pop
    }
}

/// Mapping between external string ids and dense internal indices.
#[derive(Debug, Clone, Default)]
pub struct IdRemap {
    pub to_index: HashMap<String, usize>,
    pub to_external: Vec<String>,
}

impl IdRemap {
    fn intern(&mut self, id: &str) -> usize {
        if let Some(&ix) = self.to_index.get(id) {
            return ix;
        }
        let ix = self.to_external.len();
        self.to_index.insert(id.to_string(), ix);
        self.to_external.push(id.to_string());
        ix
    }

    pub fn len(&self) -> usize {
        self.to_external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_external.is_empty()
    }
}

/// Loaded interaction log plus the id remap tables it produced.
#[derive(Debug, Clone)]
pub struct InteractionLog {
    pub interactions: Vec<Interaction>,
    pub users: IdRemap,
    pub items: IdRemap,
}

/// Parse a tab-separated `user item rating timestamp` log (ML-100K u.data
/// compatible). External ids are remapped to dense 0-based indices in order
/// of first appearance.
pub fn load_interactions(path: &Path) -> Result<InteractionLog> {
    let file = std::fs::File::open(path).map_err(|e| CoreError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let reader = BufReader::new(file);
    let mut users = IdRemap::default();
    let mut items = IdRemap::default();
    let mut interactions = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CoreError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 4 {
            return Err(CoreError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("expected 4 tab-separated fields, got {}", parts.len()),
            });
        }
        let parse_err = |msg: String| CoreError::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            msg,
        };
        let rating: f64 = parts[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad rating {:?}", parts[2])))?;
        let timestamp: i64 = parts[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad timestamp {:?}", parts[3])))?;
        if timestamp < 0 {
            return Err(parse_err(format!("negative timestamp {timestamp}")));
        }
        interactions.push(Interaction {
            user_idx: users.intern(parts[0].trim()),
            item_idx: items.intern(parts[1].trim()),
            rating,
            timestamp,
        });
    }
    if interactions.is_empty() {
        return Err(CoreError::EmptyInput(path.display().to_string()));
    }
    Ok(InteractionLog {
        interactions,
        users,
        items,
    })
}

/// Binarize interactions into the implicit-feedback matrix. Duplicate
/// (user, item) pairs collapse to a single entry.
pub fn build_matrix(interactions: &[Interaction]) -> Result<InteractionMatrix> {
    if interactions.is_empty() {
        return Err(CoreError::EmptyInput("interaction list".into()));
    }
    let n_users = interactions.iter().map(|x| x.user_idx).max().unwrap() + 1;
    let n_items = interactions.iter().map(|x| x.item_idx).max().unwrap() + 1;
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    for x in interactions {
        rows[x.user_idx].push(x.item_idx);
    }
    for row in &mut rows {
        row.sort_unstable();
        row.dedup();
    }
    Ok(InteractionMatrix {
        n_users,
        n_items,
        rows,
    })
}

/// Leave-one-out split: per user, the max-timestamp interaction is held out
/// (timestamp ties broken by larger item index).
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<Interaction>,
    /// One held-out interaction per retained user.
    pub test: Vec<Interaction>,
    /// Users excluded because they had fewer than 2 interactions.
    pub dropped_users: usize,
}

pub fn leave_one_out_split(interactions: &[Interaction]) -> Result<Split> {
    if interactions.is_empty() {
        return Err(CoreError::EmptyInput("interaction list".into()));
    }
    let mut per_user: BTreeMap<usize, Vec<Interaction>> = BTreeMap::new();
    for x in interactions {
        per_user.entry(x.user_idx).or_default().push(*x);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut dropped_users = 0usize;
    for (user, mut events) in per_user {
        if events.len() < 2 {
            // still usable for training, but not evaluable
            log::debug!("user {user} has a single interaction; excluded from test");
            dropped_users += 1;
            train.extend(events);
            continue;
        }
        let held = events
            .iter()
            .enumerate()
            .max_by_key(|(_, x)| (x.timestamp, x.item_idx))
            .map(|(i, _)| i)
            .unwrap();
        test.push(events.remove(held));
        train.extend(events);
    }
    Ok(Split {
        train,
        test,
        dropped_users,
    })
}

/// Sample `n` items uniformly without replacement from the user's
/// un-interacted items.
pub fn sample_negatives(
    matrix: &InteractionMatrix,
    user: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if user >= matrix.n_users {
        return Err(CoreError::IndexOutOfRange {
            index: user,
            n: matrix.n_users,
        });
    }
    let interacted = matrix.row(user);
    let pool = matrix.n_items - interacted.len();
    if pool < n {
        return Err(CoreError::Data(format!(
            "user {user} has only {pool} un-interacted items, need {n}"
        )));
    }
    let mut picked = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    // rejection sampling; interaction rows are sparse so this terminates fast
    while out.len() < n {
        let cand = rng.gen_range(0..matrix.n_items);
        if interacted.binary_search(&cand).is_err() && picked.insert(cand) {
            out.push(cand);
        }
    }
    Ok(out)
}

/// What a feature table holds; drives preprocessing and ablation toggles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    CategoricalOnehot,
    Dense,
    Pretrained,
}

impl FeatureKind {
    pub fn parse(s: &str) -> Result<FeatureKind> {
        match s {
            "categorical-onehot" => Ok(FeatureKind::CategoricalOnehot),
            "dense" => Ok(FeatureKind::Dense),
            "pretrained" => Ok(FeatureKind::Pretrained),
            other => Err(CoreError::InvalidConfig(format!(
                "unknown feature kind {other:?}"
            ))),
        }
    }
}

/// id -> fixed-length real vector.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub dim: usize,
    pub kind: FeatureKind,
    entries: HashMap<String, Vec<f64>>,
}

impl FeatureTable {
    pub fn new(dim: usize, kind: FeatureKind) -> FeatureTable {
        FeatureTable {
            dim,
            kind,
            entries: HashMap::new(),
        }
    }

    pub fn insert(&mut self, id: &str, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(CoreError::DimMismatch {
                id: id.to_string(),
                expected: self.dim,
                got: v.len(),
            });
        }
        self.entries.insert(id.to_string(), v);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Parse the feature-file format: first line `#dim=<d>`, optional
    /// `#kind=<k>`, then `id<TAB>v1,v2,...,vd` per line.
    pub fn load(path: &Path, default_kind: FeatureKind) -> Result<FeatureTable> {
        let file = std::fs::File::open(path).map_err(|e| CoreError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let reader = BufReader::new(file);
        let mut dim: Option<usize> = None;
        let mut kind = default_kind;
        let mut table: Option<FeatureTable> = None;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| CoreError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            let parse_err = |msg: String| CoreError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#dim=") {
                dim = Some(
                    rest.parse()
                        .map_err(|_| parse_err(format!("bad dim {rest:?}")))?,
                );
                continue;
            }
            if let Some(rest) = line.strip_prefix("#kind=") {
                kind = FeatureKind::parse(rest)?;
                continue;
            }
            let d = dim.ok_or_else(|| parse_err("missing #dim= header".into()))?;
            let t = table.get_or_insert_with(|| FeatureTable::new(d, kind));
            let (id, values) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected id<TAB>values".into()))?;
            let v: Vec<f64> = values
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(format!("bad value in row {id:?}")))?;
            if v.len() != d {
                return Err(CoreError::DimMismatch {
                    id: id.to_string(),
                    expected: d,
                    got: v.len(),
                });
            }
            t.entries.insert(id.to_string(), v);
        }
        match (table, dim) {
            (Some(mut t), _) => {
                t.kind = kind;
                Ok(t)
            }
            (None, Some(d)) => Ok(FeatureTable::new(d, kind)),
            (None, None) => Err(CoreError::EmptyInput(path.display().to_string())),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| {
            CoreError::Io {
                path: path.display().to_string(),
                source: e,
            }
        })?);
        let io_err = |e: std::io::Error| CoreError::Io {
            path: path.display().to_string(),
            source: e,
        };
        writeln!(out, "#dim={}", self.dim).map_err(io_err)?;
        let kind = match self.kind {
            FeatureKind::CategoricalOnehot => "categorical-onehot",
            FeatureKind::Dense => "dense",
            FeatureKind::Pretrained => "pretrained",
        };
        writeln!(out, "#kind={kind}").map_err(io_err)?;
        let mut ids: Vec<&String> = self.entries.keys().collect();
        ids.sort();
        for id in ids {
            let row = &self.entries[id];
            let vals: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
            writeln!(out, "{id}\t{}", vals.join(",")).map_err(io_err)?;
        }
        Ok(())
    }
}

/// Min-max scale every coordinate of a dense table into [0,1]. A constant
/// coordinate maps to 0.
pub fn min_max_normalize(table: &FeatureTable) -> Result<FeatureTable> {
    if table.is_empty() {
        return Err(CoreError::EmptyInput("feature table".into()));
    }
    let d = table.dim;
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for v in table.entries.values() {
        for (j, &x) in v.iter().enumerate() {
            lo[j] = lo[j].min(x);
            hi[j] = hi[j].max(x);
        }
    }
    let mut out = FeatureTable::new(d, table.kind);
    for (id, v) in &table.entries {
        let scaled = v
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let range = hi[j] - lo[j];
                if range > 0.0 {
                    (x - lo[j]) / range
                } else {
                    0.0
                }
            })
            .collect();
        out.entries.insert(id.clone(), scaled);
    }
    Ok(out)
}

/// One-hot encode a categorical column. The vocabulary is the sorted set of
/// distinct values; unseen values at transform time encode as all zeros.
pub struct OneHotEncoder {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
}

impl OneHotEncoder {
    pub fn fit(values: impl IntoIterator<Item = String>) -> OneHotEncoder {
        let mut vocab: Vec<String> = values.into_iter().collect();
        vocab.sort();
        vocab.dedup();
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i))
            .collect();
        OneHotEncoder { vocab, index }
    }

    pub fn dim(&self) -> usize {
        self.vocab.len()
    }

    pub fn encode(&self, value: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.vocab.len()];
        match self.index.get(value) {
            Some(&i) => v[i] = 1.0,
            None => log::warn!("unseen category {value:?}; encoding as zeros"),
        }
        v
    }
}

/// One-hot encode `(id, value)` pairs into a FeatureTable.
pub fn one_hot_encode(column: &[(String, String)]) -> FeatureTable {
    let enc = OneHotEncoder::fit(column.iter().map(|(_, v)| v.clone()));
    let mut t = FeatureTable::new(enc.dim(), FeatureKind::CategoricalOnehot);
    for (id, value) in column {
        t.entries.insert(id.clone(), enc.encode(value));
    }
    t
}
