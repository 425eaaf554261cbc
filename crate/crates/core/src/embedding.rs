//! Static node embeddings: biased random walks over a similarity graph,
//! whole-sequence co-occurrence counts, and a squared-log-residual
//! co-occurrence objective trained with sparse Adam.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::seed::{indexed_seed, rng_from};
use crate::similarity::SimilarityMatrix;

/// Biased-walk settings. `p` discourages returning to the previous node,
/// `q` trades off staying near it versus exploring outward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkConfig {
    pub p: f64,
    pub q: f64,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub seed: u64,
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p <= 0.0 || self.q <= 0.0 {
            return Err(CoreError::InvalidConfig("walk p and q must be > 0".into()));
        }
        if self.walk_length < 2 {
            return Err(CoreError::InvalidConfig("walk_length must be >= 2".into()));
        }
        if self.walks_per_node < 1 {
            return Err(CoreError::InvalidConfig(
                "walks_per_node must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for WalkConfig {
    fn default() -> WalkConfig {
        WalkConfig {
            p: 1.0,
            q: 1.0,
            walk_length: 20,
            walks_per_node: 100,
            seed: 0,
        }
    }
}

/// Next-hop distribution from `cur`, given the previously visited node.
/// Unnormalized weights: w/p back to `prev`, w for neighbors of `prev`,
/// w/q otherwise; the first step (no `prev`) is plain weight-proportional.
pub fn transition_probs(
    sim: &SimilarityMatrix,
    prev: Option<usize>,
    cur: usize,
    cfg: &WalkConfig,
) -> Result<Vec<(usize, f64)>> {
    let neighbors = sim.neighbors(cur)?;
    if neighbors.is_empty() {
        return Err(CoreError::Data(format!("node {cur} is isolated")));
    }
    let mut weights: Vec<(usize, f64)> = neighbors
        .iter()
        .map(|&(x, w)| {
            let w = f64::from(w);
            let biased = match prev {
                None => w,
                Some(p_node) if x == p_node => w / cfg.p,
                Some(p_node) if sim.has_edge(p_node, x) => w,
                Some(_) => w / cfg.q,
            };
            (x, biased)
        })
        .collect();
    let total: f64 = weights.iter().map(|&(_, w)| w).sum();
    for (_, w) in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// Sample the next hop according to `transition_probs` weights.
pub fn sample_next(
    sim: &SimilarityMatrix,
    prev: Option<usize>,
    cur: usize,
    cfg: &WalkConfig,
    rng: &mut impl Rng,
) -> Result<usize> {
    let probs = transition_probs(sim, prev, cur, cfg)?;
    let mut roll: f64 = rng.gen();
    for &(x, p) in &probs {
        roll -= p;
        if roll <= 0.0 {
            return Ok(x);
        }
    }
    Ok(probs.last().unwrap().0)
}

/// All walks of one run plus the isolated nodes that were skipped.
#[derive(Debug, Clone)]
pub struct WalkSet {
    pub walks: Vec<Vec<u32>>,
    pub skipped_isolated: usize,
}

/// Start `walks_per_node` walks at every non-isolated node. Dead ends
/// truncate the walk. Each walk owns an RNG stream derived from
/// (seed, start, repeat), so the result is independent of scheduling.
pub fn generate_walks(sim: &SimilarityMatrix, cfg: &WalkConfig) -> Result<WalkSet> {
    cfg.validate()?;
    if sim.n() == 0 {
        return Err(CoreError::EmptyInput("similarity matrix".into()));
    }
    let starts: Vec<usize> = (0..sim.n()).filter(|&v| !sim.is_isolated(v)).collect();
    let skipped_isolated = sim.n() - starts.len();
    let walks: Vec<Vec<u32>> = starts
        .par_iter()
        .flat_map_iter(|&start| {
            (0..cfg.walks_per_node).map(move |rep| (start, rep))
        })
        .map(|(start, rep)| {
            let mut rng = rng_from(indexed_seed(cfg.seed, start as u64, rep as u64));
            let mut walk = Vec::with_capacity(cfg.walk_length);
            walk.push(start as u32);
            let mut prev: Option<usize> = None;
            let mut cur = start;
            for _ in 1..cfg.walk_length {
                match sample_next(sim, prev, cur, cfg, &mut rng) {
                    Ok(next) => {
                        walk.push(next as u32);
                        prev = Some(cur);
                        cur = next;
                    }
                    Err(_) => break, // dead end: truncate
                }
            }
            walk
        })
        .collect();
    Ok(WalkSet {
        walks,
        skipped_isolated,
    })
}

/// Symmetric co-occurrence counts over unordered node pairs.
#[derive(Debug, Clone, Default)]
pub struct CooccurrenceTable {
    counts: HashMap<(u32, u32), f64>,
}

impl CooccurrenceTable {
    pub fn get(&self, a: u32, b: u32) -> f64 {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.counts.get(&key).copied().unwrap_or(0.0)
    }

    pub fn insert(&mut self, a: u32, b: u32, count: f64) {
        assert!(a != b && count > 0.0);
        let key = if a <= b { (a, b) } else { (b, a) };
        self.counts.insert(key, count);
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.counts.values().sum()
    }

    /// Unordered pairs with their counts.
    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.counts.iter().map(|(&(a, b), &c)| (a, b, c))
    }

    pub fn max_node(&self) -> Option<u32> {
        self.counts.keys().map(|&(a, b)| a.max(b)).max()
    }
}

/// Count, for every walk, each unordered pair of distinct positions holding
/// distinct nodes. Same-node pairs are ignored.
pub fn count_cooccurrences(walks: &[Vec<u32>]) -> Result<CooccurrenceTable> {
    if walks.is_empty() {
        return Err(CoreError::EmptyInput("walks".into()));
    }
    let merged = walks
        .par_chunks(256.max(walks.len() / 64))
        .map(|chunk| {
            let mut local: HashMap<(u32, u32), f64> = HashMap::new();
            for walk in chunk {
                for i in 0..walk.len() {
                    for j in (i + 1)..walk.len() {
                        let (a, b) = (walk[i], walk[j]);
                        if a == b {
                            continue;
                        }
                        let key = if a <= b { (a, b) } else { (b, a) };
                        *local.entry(key).or_insert(0.0) += 1.0;
                    }
                }
            }
            local
        })
        .reduce(HashMap::new, |mut acc, local| {
            for (k, v) in local {
                *acc.entry(k).or_insert(0.0) += v;
            }
            acc
        });
    Ok(CooccurrenceTable { counts: merged })
}

/// Main/context vectors and biases per node.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub n: usize,
    main: Vec<f64>,
    context: Vec<f64>,
    bias: Vec<f64>,
    context_bias: Vec<f64>,
}

impl EmbeddingTable {
    pub fn init(n: usize, dim: usize, seed: u64) -> EmbeddingTable {
        let mut rng = rng_from(seed);
        let half = 0.5 / dim as f64;
        let mut draw = |count: usize| -> Vec<f64> {
            (0..count).map(|_| rng.gen_range(-half..half)).collect()
        };
        EmbeddingTable {
            dim,
            n,
            main: draw(n * dim),
            context: draw(n * dim),
            bias: vec![0.0; n],
            context_bias: vec![0.0; n],
        }
    }

    pub fn main(&self, node: usize) -> &[f64] {
        &self.main[node * self.dim..(node + 1) * self.dim]
    }

    pub fn context(&self, node: usize) -> &[f64] {
        &self.context[node * self.dim..(node + 1) * self.dim]
    }

    pub fn bias(&self, node: usize) -> f64 {
        self.bias[node]
    }

    pub fn context_bias(&self, node: usize) -> f64 {
        self.context_bias[node]
    }

    pub fn set_main(&mut self, node: usize, v: &[f64]) {
        self.main[node * self.dim..(node + 1) * self.dim].copy_from_slice(v);
    }

    pub fn set_context(&mut self, node: usize, v: &[f64]) {
        self.context[node * self.dim..(node + 1) * self.dim].copy_from_slice(v);
    }

    pub fn scale_all(&mut self, c: f64) {
        for x in self
            .main
            .iter_mut()
            .chain(&mut self.context)
            .chain(&mut self.bias)
            .chain(&mut self.context_bias)
        {
            *x *= c;
        }
    }

    fn residual(&self, n: usize, l: usize, log_count: f64) -> f64 {
        let dot: f64 = self
            .main(n)
            .iter()
            .zip(self.context(l))
            .map(|(a, b)| a * b)
            .sum();
        dot + self.bias[n] + self.context_bias[l] - log_count
    }
}

/// Squared-log-residual loss over both orders of every stored pair:
/// sum of (e_n . e~_l + b_n + b~_l - log O_nl)^2.
pub fn glove_loss(emb: &EmbeddingTable, table: &CooccurrenceTable) -> Result<f64> {
    if table.is_empty() {
        return Err(CoreError::EmptyInput("co-occurrence table".into()));
    }
    let mut loss = 0.0;
    for (a, b, count) in table.pairs() {
        let lc = count.ln();
        for (n, l) in [(a as usize, b as usize), (b as usize, a as usize)] {
            if n >= emb.n || l >= emb.n {
                return Err(CoreError::IndexOutOfRange {
                    index: n.max(l),
                    n: emb.n,
                });
            }
            let r = emb.residual(n, l, lc);
            loss += r * r;
        }
    }
    Ok(loss)
}

/// Analytic gradient of `glove_loss` for a batch of ordered pairs, keyed by
/// node. Used by the trainer; checked against finite differences in tests.
pub struct GloveGrads {
    pub d_main: HashMap<usize, Vec<f64>>,
    pub d_context: HashMap<usize, Vec<f64>>,
    pub d_bias: HashMap<usize, f64>,
    pub d_context_bias: HashMap<usize, f64>,
}

pub fn glove_grad(emb: &EmbeddingTable, ordered: &[(usize, usize, f64)]) -> GloveGrads {
    let dim = emb.dim;
    let mut g = GloveGrads {
        d_main: HashMap::new(),
        d_context: HashMap::new(),
        d_bias: HashMap::new(),
        d_context_bias: HashMap::new(),
    };
    for &(n, l, log_count) in ordered {
        let r2 = 2.0 * emb.residual(n, l, log_count);
        let dm = g.d_main.entry(n).or_insert_with(|| vec![0.0; dim]);
        for (d, c) in dm.iter_mut().zip(emb.context(l)) {
            *d += r2 * c;
        }
        let dc = g.d_context.entry(l).or_insert_with(|| vec![0.0; dim]);
        for (d, m) in dc.iter_mut().zip(emb.main(n)) {
            *d += r2 * m;
        }
        *g.d_bias.entry(n).or_insert(0.0) += r2;
        *g.d_context_bias.entry(l).or_insert(0.0) += r2;
    }
    g
}

/// Adam state over the four embedding blocks, updated sparsely: only rows
/// touched by a batch pay the update cost. Bias correction uses the global
/// step counter.
struct SparseAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
}

impl SparseAdam {
    fn new(len: usize, lr: f64) -> SparseAdam {
        SparseAdam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
        }
    }

    fn tick(&mut self) {
        self.step += 1;
    }

    fn update(&mut self, values: &mut [f64], offset: usize, grads: &[f64]) {
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (k, &g) in grads.iter().enumerate() {
            let i = offset + k;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

pub const EMBED_DEFAULT_LR: f64 = 0.05;
pub const EMBED_DEFAULT_EPOCHS: usize = 30;

/// Fit embeddings to the co-occurrence table by Adam over shuffled ordered
/// pair minibatches.
pub fn train_embeddings(
    table: &CooccurrenceTable,
    dim: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<EmbeddingTable> {
    if dim < 1 {
        return Err(CoreError::InvalidConfig("embedding dim must be >= 1".into()));
    }
    if table.is_empty() {
        return Err(CoreError::EmptyInput("co-occurrence table".into()));
    }
    let n = table.max_node().unwrap() as usize + 1;
    let mut emb = EmbeddingTable::init(n, dim, seed);

    // both orders of every stored pair enter the objective
    let mut ordered: Vec<(usize, usize, f64)> = Vec::with_capacity(table.len() * 2);
    for (a, b, count) in table.pairs() {
        let lc = count.ln();
        ordered.push((a as usize, b as usize, lc));
        ordered.push((b as usize, a as usize, lc));
    }
    ordered.sort_unstable_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));

    let mut adam_main = SparseAdam::new(n * dim, lr);
    let mut adam_ctx = SparseAdam::new(n * dim, lr);
    let mut adam_bias = SparseAdam::new(n, lr);
    let mut adam_cbias = SparseAdam::new(n, lr);
    let mut rng = rng_from(crate::seed::stage_seed(seed, "embed-shuffle"));
    let batch = 1024;

    for epoch in 0..epochs {
        // Fisher-Yates with our own rng for cross-version stability
        for i in (1..ordered.len()).rev() {
            let j = rng.gen_range(0..=i);
            ordered.swap(i, j);
        }
        for chunk in ordered.chunks(batch) {
            let grads = glove_grad(&emb, chunk);
            adam_main.tick();
            adam_ctx.tick();
            adam_bias.tick();
            adam_cbias.tick();
            for (node, g) in &grads.d_main {
                adam_main.update(&mut emb.main, node * dim, g);
            }
            for (node, g) in &grads.d_context {
                adam_ctx.update(&mut emb.context, node * dim, g);
            }
            for (&node, &g) in &grads.d_bias {
                adam_bias.update(&mut emb.bias, node, &[g]);
            }
            for (&node, &g) in &grads.d_context_bias {
                adam_cbias.update(&mut emb.context_bias, node, &[g]);
            }
        }
        if !emb.main.iter().all(|x| x.is_finite()) {
            return Err(CoreError::Numeric(format!(
                "non-finite embedding values at epoch {epoch}"
            )));
        }
    }
    Ok(emb)
}

/// Collapse main and context vectors into the final per-node embedding
/// (e + e~); biases are discarded.
pub fn finalize(emb: &EmbeddingTable) -> Vec<Vec<f64>> {
    (0..emb.n)
        .map(|node| {
            emb.main(node)
                .iter()
                .zip(emb.context(node))
                .map(|(a, b)| a + b)
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_matrix, Interaction};
    use crate::similarity::build_user_similarity;
    use approx::assert_relative_eq;

    fn path_graph() -> SimilarityMatrix {
        // users 0-1-2 share items pairwise in a chain
        let xs = [
            (0, 0),
            (0, 1),
            (1, 1),
            (1, 2),
            (2, 2),
            (2, 3),
        ];
        let interactions: Vec<Interaction> = xs
            .iter()
            .map(|&(u, i)| Interaction {
                user_idx: u,
                item_idx: i,
                rating: 1.0,
                timestamp: 0,
            })
            .collect();
        build_user_similarity(&build_matrix(&interactions).unwrap()).unwrap()
    }

    #[test]
    fn first_step_is_weight_proportional() {
        let sim = path_graph();
        let cfg = WalkConfig::default();
        // node 1 has neighbors 0 and 2, both weight 1
        let probs = transition_probs(&sim, None, 1, &cfg).unwrap();
        assert_eq!(probs.len(), 2);
        for &(_, p) in &probs {
            assert_relative_eq!(p, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn plain_walk_when_p_q_are_one() {
        let sim = path_graph();
        let cfg = WalkConfig::default();
        let probs = transition_probs(&sim, Some(0), 1, &cfg).unwrap();
        // p=q=1: proportional to edge weights regardless of prev
        let total: f64 = probs.iter().map(|&(_, p)| p).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        for &(_, p) in &probs {
            assert_relative_eq!(p, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn forced_first_hop_on_path() {
        let sim = path_graph();
        let cfg = WalkConfig {
            walk_length: 3,
            walks_per_node: 1,
            ..WalkConfig::default()
        };
        let set = generate_walks(&sim, &cfg).unwrap();
        let from_zero = set.walks.iter().find(|w| w[0] == 0).unwrap();
        assert_eq!(from_zero[1], 1);
    }

    #[test]
    fn walk_count_is_starts_times_repeats() {
        let sim = path_graph();
        let cfg = WalkConfig {
            walks_per_node: 100,
            ..WalkConfig::default()
        };
        let set = generate_walks(&sim, &cfg).unwrap();
        assert_eq!(set.walks.len(), 300);
        assert_eq!(set.skipped_isolated, 0);
    }

    #[test]
    fn walks_deterministic_given_seed() {
        let sim = path_graph();
        let cfg = WalkConfig {
            seed: 99,
            ..WalkConfig::default()
        };
        let a = generate_walks(&sim, &cfg).unwrap();
        let b = generate_walks(&sim, &cfg).unwrap();
        assert_eq!(a.walks, b.walks);
    }

    #[test]
    fn cooccurrence_pair_enumeration() {
        let t = count_cooccurrences(&[vec![0, 1, 2]]).unwrap();
        assert_eq!(t.get(0, 1), 1.0);
        assert_eq!(t.get(0, 2), 1.0);
        assert_eq!(t.get(1, 2), 1.0);
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn cooccurrence_repeated_node() {
        let t = count_cooccurrences(&[vec![0, 1, 0]]).unwrap();
        assert_eq!(t.get(0, 1), 2.0);
        assert_eq!(t.get(0, 0), 0.0);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn cooccurrence_additivity() {
        let once = count_cooccurrences(&[vec![0, 1, 2]]).unwrap();
        let twice = count_cooccurrences(&[vec![0, 1, 2], vec![0, 1, 2]]).unwrap();
        for (a, b, c) in once.pairs() {
            assert_eq!(twice.get(a, b), 2.0 * c);
        }
    }

    #[test]
    fn glove_loss_zero_cases() {
        let emb = EmbeddingTable::init(2, 4, 1);
        let mut zeroed = emb.clone();
        zeroed.scale_all(0.0);
        let mut t = CooccurrenceTable::default();
        t.insert(0, 1, 1.0); // log 1 = 0
        assert_relative_eq!(glove_loss(&zeroed, &t).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn glove_loss_hand_value() {
        let mut emb = EmbeddingTable::init(2, 4, 1);
        emb.scale_all(0.0);
        let mut t = CooccurrenceTable::default();
        t.insert(0, 1, std::f64::consts::E.powi(2)); // log = 2
        // residual -2 in both orders: loss = 2 * 4 = 8
        assert_relative_eq!(glove_loss(&emb, &t).unwrap(), 8.0, epsilon = 1e-10);
    }

    #[test]
    fn glove_loss_rejects_empty_table() {
        let emb = EmbeddingTable::init(2, 4, 1);
        assert!(glove_loss(&emb, &CooccurrenceTable::default()).is_err());
    }

    #[test]
    fn glove_grad_matches_finite_differences() {
        let mut t = CooccurrenceTable::default();
        let mut rng = rng_from(5);
        for a in 0..5u32 {
            for b in (a + 1)..5 {
                t.insert(a, b, rng.gen_range(1.0..20.0));
            }
        }
        let emb = EmbeddingTable::init(5, 3, 17);
        let ordered: Vec<(usize, usize, f64)> = t
            .pairs()
            .flat_map(|(a, b, c)| {
                [
                    (a as usize, b as usize, c.ln()),
                    (b as usize, a as usize, c.ln()),
                ]
            })
            .collect();
        let grads = glove_grad(&emb, &ordered);

        let eps = 1e-5;
        let check = |analytic: f64, perturb: &dyn Fn(&mut EmbeddingTable, f64)| {
            let mut up = emb.clone();
            perturb(&mut up, eps);
            let mut down = emb.clone();
            perturb(&mut down, -eps);
            let numeric =
                (glove_loss(&up, &t).unwrap() - glove_loss(&down, &t).unwrap()) / (2.0 * eps);
            let denom = numeric.abs().max(analytic.abs()).max(1e-7);
            assert!(
                (numeric - analytic).abs() / denom < 1e-4,
                "grad mismatch: numeric {numeric}, analytic {analytic}"
            );
        };
        for node in 0..5usize {
            for k in 0..3usize {
                let a = grads.d_main.get(&node).map_or(0.0, |g| g[k]);
                check(a, &|e, d| e.main[node * 3 + k] += d);
                let a = grads.d_context.get(&node).map_or(0.0, |g| g[k]);
                check(a, &|e, d| e.context[node * 3 + k] += d);
            }
            let a = grads.d_bias.get(&node).copied().unwrap_or(0.0);
            check(a, &|e, d| e.bias[node] += d);
            let a = grads.d_context_bias.get(&node).copied().unwrap_or(0.0);
            check(a, &|e, d| e.context_bias[node] += d);
        }
    }

    #[test]
    fn training_fits_single_pair() {
        let mut t = CooccurrenceTable::default();
        t.insert(0, 1, 7.0);
        let emb = train_embeddings(&t, 4, 200, 0.05, 3).unwrap();
        let r = emb.residual(0, 1, 7.0_f64.ln());
        assert!(r.abs() < 1e-3, "residual {r}");
    }

    #[test]
    fn training_separates_two_cliques() {
        // walks confined to two disjoint 5-cliques
        let mut walks = Vec::new();
        let mut rng = rng_from(2);
        for rep in 0..200 {
            let base = if rep % 2 == 0 { 0u32 } else { 5u32 };
            let walk: Vec<u32> = (0..12).map(|_| base + rng.gen_range(0..5)).collect();
            walks.push(walk);
        }
        let t = count_cooccurrences(&walks).unwrap();
        let emb = train_embeddings(&t, 8, 60, 0.05, 7).unwrap();
        let vecs = finalize(&emb);
        let cos = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb)
        };
        let mut intra = Vec::new();
        let mut inter = Vec::new();
        for a in 0..10 {
            for b in (a + 1)..10 {
                let c = cos(&vecs[a], &vecs[b]);
                if (a < 5) == (b < 5) {
                    intra.push(c);
                } else {
                    inter.push(c);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&intra) > mean(&inter),
            "intra {} <= inter {}",
            mean(&intra),
            mean(&inter)
        );
    }

    #[test]
    fn finalize_is_sum_and_linear() {
        let mut emb = EmbeddingTable::init(1, 2, 0);
        emb.set_main(0, &[1.0, 0.0]);
        emb.set_context(0, &[0.0, 1.0]);
        assert_eq!(finalize(&emb)[0], vec![1.0, 1.0]);

        let mut doubled = emb.clone();
        doubled.scale_all(2.0);
        let f1 = finalize(&emb);
        let f2 = finalize(&doubled);
        for (a, b) in f1[0].iter().zip(&f2[0]) {
            assert_relative_eq!(2.0 * a, *b, epsilon = 1e-12);
        }
    }
}
