//! Target-conditioned user interest: a valuation MLP scores K sampled
//! history items against the target, and softmax attention over those
//! scores mixes the history embeddings into the interest vector.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{MlpParams, ParamStore, Tape, Var};
use crate::data::InteractionMatrix;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone)]
pub struct InterestConfig {
    pub k: usize,
    pub hidden_dims: Vec<usize>,
}

impl InterestConfig {
    /// Default hidden widths for a given embedding dim: [d, d/2].
    pub fn for_dim(k: usize, dim: usize) -> InterestConfig {
        InterestConfig {
            k,
            hidden_dims: vec![dim, (dim / 2).max(1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(CoreError::InvalidConfig("interest K must be >= 1".into()));
        }
        Ok(())
    }
}

/// Valuation MLP over concat(e_k, e_target, e_k - e_target).
pub type ValuationParams = MlpParams;

pub fn init_valuation(
    store: &mut ParamStore,
    prefix: &str,
    dim: usize,
    cfg: &InterestConfig,
    rng: &mut impl Rng,
) -> ValuationParams {
    MlpParams::init(store, prefix, 3 * dim, &cfg.hidden_dims, 1, rng)
}

/// Uniformly sample K of the user's interacted items, excluding the target.
/// With replacement when the pool is smaller than K, without otherwise.
pub fn sample_history(
    user: usize,
    train: &InteractionMatrix,
    target: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let pool: Vec<usize> = train
        .row(user)
        .iter()
        .copied()
        .filter(|&i| i != target)
        .collect();
    if pool.is_empty() {
        return Err(CoreError::Data(format!(
            "user {user} has no history items besides the target"
        )));
    }
    if pool.len() < k {
        Ok((0..k).map(|_| pool[rng.gen_range(0..pool.len())]).collect())
    } else {
        // partial Fisher-Yates for the first k positions
        let mut pool = pool;
        for i in 0..k {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.truncate(k);
        Ok(pool)
    }
}

/// Score one history item against the target.
pub fn valuation(
    tape: &mut Tape,
    e_hist: Var,
    e_target: Var,
    params: &ValuationParams,
) -> Result<Var> {
    let diff = tape.sub(e_hist, e_target)?;
    let input = tape.concat(&[e_hist, e_target, diff])?;
    let out = params.forward(tape, input)?;
    // MLP output is a length-1 vector; keep it as the scalar logit
    tape.slice(out, 0, 1)
}

/// Attention over history valuations. Returns the interest vector and the
/// attention weight vector.
pub fn user_interest(
    tape: &mut Tape,
    history: &[Var],
    e_target: Var,
    params: &ValuationParams,
) -> Result<(Var, Var)> {
    if history.is_empty() {
        return Err(CoreError::Data("empty history".into()));
    }
    let logits: Vec<Var> = history
        .iter()
        .map(|&h| valuation(tape, h, e_target, params))
        .collect::<Result<_>>()?;
    let stacked = tape.stack(&logits)?;
    let weights = tape.softmax(stacked)?;
    let mut theta = None;
    for (k, &h) in history.iter().enumerate() {
        let wk = tape.slice(weights, k, k + 1)?;
        let part = tape.scale_by(h, wk)?;
        theta = Some(match theta {
            None => part,
            Some(acc) => tape.add(acc, part)?,
        });
    }
    Ok((theta.unwrap(), weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tensor;
    use crate::data::{build_matrix, Interaction};
    use crate::seed::rng_from;
    use approx::assert_relative_eq;

    fn train_matrix(items: &[usize]) -> InteractionMatrix {
        let xs: Vec<Interaction> = items
            .iter()
            .map(|&i| Interaction {
                user_idx: 0,
                item_idx: i,
                rating: 1.0,
                timestamp: 0,
            })
            .collect();
        build_matrix(&xs).unwrap()
    }

    #[test]
    fn history_forced_replacement() {
        let m = train_matrix(&[3, 9]);
        let mut rng = rng_from(1);
        let h = sample_history(0, &m, 9, 4, &mut rng).unwrap();
        assert_eq!(h, vec![3, 3, 3, 3]);
    }

    #[test]
    fn history_without_replacement_when_pool_large() {
        let m = train_matrix(&(0..11).collect::<Vec<_>>());
        let mut rng = rng_from(2);
        let h = sample_history(0, &m, 10, 5, &mut rng).unwrap();
        assert_eq!(h.len(), 5);
        let mut sorted = h.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 5, "expected distinct members");
        assert!(h.iter().all(|&i| i != 10 && m.contains(0, i)));
    }

    #[test]
    fn history_deterministic_and_excludes_target() {
        let m = train_matrix(&[1, 2, 3]);
        let a = sample_history(0, &m, 2, 2, &mut rng_from(5)).unwrap();
        let b = sample_history(0, &m, 2, 2, &mut rng_from(5)).unwrap();
        assert_eq!(a, b);
        assert!(!a.contains(&2));

        let single = train_matrix(&[7]);
        assert!(sample_history(0, &single, 7, 2, &mut rng_from(5)).is_err());
    }

    #[test]
    fn valuation_zero_params_gives_zero() {
        let mut store = ParamStore::new();
        let cfg = InterestConfig::for_dim(2, 2);
        let params = init_valuation(&mut store, "val", 2, &cfg, &mut rng_from(1));
        for id in store.ids().collect::<Vec<_>>() {
            let shape = store.param(id).value.shape().to_vec();
            store.param_mut(id).value = Tensor::zeros(&shape);
        }
        let mut tape = Tape::new(&store);
        let h = tape.constant_vec(&[1.0, -4.0]);
        let t = tape.constant_vec(&[2.0, 0.5]);
        let v = valuation(&mut tape, h, t, &params).unwrap();
        assert_eq!(tape.value(v).data(), &[0.0]);
    }

    #[test]
    fn valuation_single_linear_layer_hand_value() {
        let mut store = ParamStore::new();
        // 1-dim embeddings, no hidden layer: weights [1,1,1], bias 0
        let params = MlpParams::init(&mut store, "val", 3, &[], 1, &mut rng_from(1));
        store
            .set_value("val.w0", Tensor::matrix(1, 3, vec![1.0, 1.0, 1.0]))
            .unwrap();
        store.set_value("val.b0", Tensor::zeros(&[1])).unwrap();
        let mut tape = Tape::new(&store);
        let h = tape.constant_vec(&[2.0]);
        let t = tape.constant_vec(&[1.0]);
        let v = valuation(&mut tape, h, t, &params).unwrap();
        // 2 + 1 + (2-1) = 4
        assert_eq!(tape.value(v).data(), &[4.0]);
    }

    #[test]
    fn interest_singleton_history() {
        let mut store = ParamStore::new();
        let cfg = InterestConfig::for_dim(1, 2);
        let params = init_valuation(&mut store, "val", 2, &cfg, &mut rng_from(3));
        let mut tape = Tape::new(&store);
        let h = tape.constant_vec(&[0.25, -1.5]);
        let t = tape.constant_vec(&[0.0, 0.0]);
        let (theta, weights) = user_interest(&mut tape, &[h], t, &params).unwrap();
        assert_eq!(tape.value(weights).data(), &[1.0]);
        assert_eq!(tape.value(theta).data(), &[0.25, -1.5]);
    }

    #[test]
    fn interest_equal_valuations_average() {
        let mut store = ParamStore::new();
        let cfg = InterestConfig::for_dim(2, 2);
        let params = init_valuation(&mut store, "val", 2, &cfg, &mut rng_from(3));
        for id in store.ids().collect::<Vec<_>>() {
            let shape = store.param(id).value.shape().to_vec();
            store.param_mut(id).value = Tensor::zeros(&shape);
        }
        let mut tape = Tape::new(&store);
        let h1 = tape.constant_vec(&[1.0, 0.0]);
        let h2 = tape.constant_vec(&[0.0, 1.0]);
        let t = tape.constant_vec(&[3.0, 3.0]);
        let (theta, _) = user_interest(&mut tape, &[h1, h2], t, &params).unwrap();
        assert_eq!(tape.value(theta).data(), &[0.5, 0.5]);
    }

    #[test]
    fn interest_softmax_of_hand_logits() {
        // single linear valuation designed to emit ln 3 and 0
        let mut store = ParamStore::new();
        let params = MlpParams::init(&mut store, "val", 6, &[], 1, &mut rng_from(1));
        // input layout: [h(2), t(2), h-t(2)]; pick w so v = ln3 * h[0]
        let mut w = vec![0.0; 6];
        w[0] = 3.0_f64.ln();
        store.set_value("val.w0", Tensor::matrix(1, 6, w)).unwrap();
        store.set_value("val.b0", Tensor::zeros(&[1])).unwrap();
        let mut tape = Tape::new(&store);
        let h1 = tape.constant_vec(&[1.0, 0.0]); // valuation ln 3
        let h2 = tape.constant_vec(&[0.0, 1.0]); // valuation 0
        let t = tape.constant_vec(&[0.0, 0.0]);
        let (theta, weights) = user_interest(&mut tape, &[h1, h2], t, &params).unwrap();
        assert_relative_eq!(tape.value(weights).data()[0], 0.75, epsilon = 1e-12);
        assert_relative_eq!(tape.value(weights).data()[1], 0.25, epsilon = 1e-12);
        assert_relative_eq!(tape.value(theta).data()[0], 0.75, epsilon = 1e-12);
        assert_relative_eq!(tape.value(theta).data()[1], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn interest_weights_positive_sum_one_and_shift_invariant() {
        let mut store = ParamStore::new();
        let cfg = InterestConfig::for_dim(3, 2);
        let params = init_valuation(&mut store, "val", 2, &cfg, &mut rng_from(9));
        let mut tape = Tape::new(&store);
        let hs: Vec<Var> = [[0.3, 0.1], [-0.2, 0.8], [1.1, -0.4]]
            .iter()
            .map(|v| tape.constant_vec(v))
            .collect();
        let t = tape.constant_vec(&[0.5, 0.5]);
        let (_, weights) = user_interest(&mut tape, &hs, t, &params).unwrap();
        let w = tape.value(weights).data().to_vec();
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(w.iter().all(|&x| x > 0.0));

        // adding a constant to the output bias shifts all valuations equally
        let before = w;
        store.set_value("val.b2", Tensor::vector(vec![5.0])).unwrap();
        let mut tape = Tape::new(&store);
        let hs: Vec<Var> = [[0.3, 0.1], [-0.2, 0.8], [1.1, -0.4]]
            .iter()
            .map(|v| tape.constant_vec(v))
            .collect();
        let t = tape.constant_vec(&[0.5, 0.5]);
        let (_, weights) = user_interest(&mut tape, &hs, t, &params).unwrap();
        for (a, b) in before.iter().zip(tape.value(weights).data()) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }
}
