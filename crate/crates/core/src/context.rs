//! Adaptive contextual pathway: assemble the concatenated feature vector,
//! run it through the feature-crossing network, and fuse the raw and
//! crossed vectors with a two-branch attention layer.

use std::collections::HashMap;

use crate::autograd::{gaussian, ParamId, ParamStore, Tape, Tensor, Var};
use crate::data::{FeatureKind, FeatureTable};
use crate::error::{CoreError, Result};

/// Which entity a context field describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSource {
    User,
    Item,
    Interaction,
}

/// One named slot in the assembled context vector.
#[derive(Debug, Clone)]
pub struct FieldSpec {
    pub name: String,
    pub source: FieldSource,
    pub kind: FeatureKind,
    pub dim: usize,
}

/// Ordered context layout plus crossing depth.
#[derive(Debug, Clone)]
pub struct ContextSchema {
    pub fields: Vec<FieldSpec>,
    pub cross_depth: usize,
}

impl ContextSchema {
    pub fn total_dim(&self) -> usize {
        self.fields.iter().map(|f| f.dim).sum()
    }

    /// Same schema with some field kinds removed (ablation toggles).
    pub fn without_kinds(&self, drop: &[FeatureKind]) -> ContextSchema {
        ContextSchema {
            fields: self
                .fields
                .iter()
                .filter(|f| !drop.contains(&f.kind))
                .cloned()
                .collect(),
            cross_depth: self.cross_depth,
        }
    }
}

/// Feature tables keyed by field name. Rows are keyed by the internal index
/// rendered in decimal; interaction rows by `user:item`.
#[derive(Debug, Clone, Default)]
pub struct ContextTables {
    tables: HashMap<String, FeatureTable>,
}

impl ContextTables {
    pub fn insert(&mut self, field: &str, table: FeatureTable) {
        self.tables.insert(field.to_string(), table);
    }

    pub fn get(&self, field: &str) -> Option<&FeatureTable> {
        self.tables.get(field)
    }

    pub fn row_key(source: FieldSource, user: usize, item: usize) -> String {
        match source {
            FieldSource::User => user.to_string(),
            FieldSource::Item => item.to_string(),
            FieldSource::Interaction => format!("{user}:{item}"),
        }
    }
}

/// Concatenate all schema fields for (user, item) in schema order. Missing
/// rows contribute a zero block; a table whose dim disagrees with the
/// schema is an error.
pub fn assemble_x0(
    user: usize,
    item: usize,
    schema: &ContextSchema,
    tables: &ContextTables,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(schema.total_dim());
    for field in &schema.fields {
        let key = ContextTables::row_key(field.source, user, item);
        match tables.get(&field.name) {
            Some(table) => {
                if table.dim != field.dim {
                    return Err(CoreError::DimMismatch {
                        id: field.name.clone(),
                        expected: field.dim,
                        got: table.dim,
                    });
                }
                match table.get(&key) {
                    Some(row) => out.extend_from_slice(row),
                    None => {
                        log::warn!("missing feature row {key} in {}; using zeros", field.name);
                        out.extend(std::iter::repeat(0.0).take(field.dim));
                    }
                }
            }
            None => {
                log::warn!("missing feature table {}; using zeros", field.name);
                out.extend(std::iter::repeat(0.0).take(field.dim));
            }
        }
    }
    Ok(out)
}

/// Per-layer weight and bias vectors of the crossing network.
#[derive(Debug, Clone)]
pub struct CrossNetworkParams {
    pub layers: Vec<(ParamId, ParamId)>,
}

impl CrossNetworkParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        total_dim: usize,
        depth: usize,
        rng: &mut impl rand::Rng,
    ) -> CrossNetworkParams {
        let layers = (0..depth)
            .map(|l| {
                let w: Vec<f64> = (0..total_dim).map(|_| gaussian(rng) * 0.01).collect();
                (
                    store.add(&format!("{prefix}.w{l}"), Tensor::vector(w)),
                    store.add(&format!("{prefix}.b{l}"), Tensor::zeros(&[total_dim])),
                )
            })
            .collect();
        CrossNetworkParams { layers }
    }
}

/// One crossing step: x0 * (xl . w) + b + xl.
pub fn cross_layer(tape: &mut Tape, x0: Var, xl: Var, w: Var, b: Var) -> Result<Var> {
    let s = tape.dot(xl, w)?;
    let crossed = tape.scale_by(x0, s)?;
    let with_bias = tape.add(crossed, b)?;
    tape.add(with_bias, xl)
}

/// L-fold crossing seeded with x0; depth 0 returns x0 unchanged.
pub fn cross_network(tape: &mut Tape, x0: Var, params: &CrossNetworkParams) -> Result<Var> {
    let mut xl = x0;
    for &(w, b) in &params.layers {
        let wv = tape.param(w);
        let bv = tape.param(b);
        xl = cross_layer(tape, x0, xl, wv, bv)?;
    }
    Ok(xl)
}

/// Attention weights for the two fusion branches (raw x0 and crossed xL).
#[derive(Debug, Clone)]
pub struct FusionParams {
    pub w_raw: ParamId,
    pub b_raw: ParamId,
    pub w_cross: ParamId,
    pub b_cross: ParamId,
}

impl FusionParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        total_dim: usize,
        rng: &mut impl rand::Rng,
    ) -> FusionParams {
        let mut vec_init = |name: &str| {
            let w: Vec<f64> = (0..total_dim).map(|_| gaussian(rng) * 0.01).collect();
            store.add(&format!("{prefix}.{name}"), Tensor::vector(w))
        };
        let w_raw = vec_init("w_raw");
        let w_cross = vec_init("w_cross");
        FusionParams {
            w_raw,
            b_raw: store.add(&format!("{prefix}.b_raw"), Tensor::scalar(0.0)),
            w_cross,
            b_cross: store.add(&format!("{prefix}.b_cross"), Tensor::scalar(0.0)),
        }
    }
}

/// Softmax over tanh(w_i . x_i + b_i) for the two branches; the output is
/// the resulting convex combination of x0 and xL.
pub fn fuse(tape: &mut Tape, x0: Var, xl: Var, params: &FusionParams) -> Result<Var> {
    let branch_logit = |tape: &mut Tape, x: Var, w: ParamId, b: ParamId| -> Result<Var> {
        let wv = tape.param(w);
        let bv = tape.param(b);
        let d = tape.dot(wv, x)?;
        let z = tape.add(d, bv)?;
        Ok(tape.tanh(z))
    };
    let l0 = branch_logit(tape, x0, params.w_raw, params.b_raw)?;
    let l1 = branch_logit(tape, xl, params.w_cross, params.b_cross)?;
    let logits = tape.stack(&[l0, l1])?;
    let alpha = tape.softmax(logits)?;
    let a0 = tape.slice(alpha, 0, 1)?;
    let a1 = tape.slice(alpha, 1, 2)?;
    let part0 = tape.scale_by(x0, a0)?;
    let part1 = tape.scale_by(xl, a1)?;
    tape.add(part0, part1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use approx::assert_relative_eq;

    fn schema_with_dims(dims: &[usize]) -> ContextSchema {
        ContextSchema {
            fields: dims
                .iter()
                .enumerate()
                .map(|(i, &d)| FieldSpec {
                    name: format!("f{i}"),
                    source: FieldSource::User,
                    kind: FeatureKind::Dense,
                    dim: d,
                })
                .collect(),
            cross_depth: 0,
        }
    }

    #[test]
    fn assemble_length_additivity() {
        let schema = schema_with_dims(&[2, 3, 1]);
        let tables = ContextTables::default();
        // all tables missing: zero vector of total length
        let x = assemble_x0(0, 0, &schema, &tables).unwrap();
        assert_eq!(x.len(), 6);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn assemble_direct_concat() {
        let mut schema = schema_with_dims(&[2, 3, 1]);
        schema.fields[1].source = FieldSource::Item;
        schema.fields[2].source = FieldSource::Interaction;
        let mut tables = ContextTables::default();
        let mut tu = FeatureTable::new(2, FeatureKind::Dense);
        tu.insert("0", vec![1.0, 0.0]).unwrap();
        tables.insert("f0", tu);
        let mut ti = FeatureTable::new(3, FeatureKind::Dense);
        ti.insert("4", vec![0.0, 2.0, 0.0]).unwrap();
        tables.insert("f1", ti);
        let mut tc = FeatureTable::new(1, FeatureKind::Dense);
        tc.insert("0:4", vec![5.0]).unwrap();
        tables.insert("f2", tc);
        let x = assemble_x0(0, 4, &schema, &tables).unwrap();
        assert_eq!(x, vec![1.0, 0.0, 0.0, 2.0, 0.0, 5.0]);
    }

    #[test]
    fn assemble_rejects_dim_mismatch() {
        let schema = schema_with_dims(&[2]);
        let mut tables = ContextTables::default();
        tables.insert("f0", FeatureTable::new(3, FeatureKind::Dense));
        assert!(assemble_x0(0, 0, &schema, &tables).is_err());
    }

    #[test]
    fn cross_layer_residual_identity() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::zeros(&[2]));
        let b = store.add("b", Tensor::zeros(&[2]));
        let mut tape = Tape::new(&store);
        let x0 = tape.constant_vec(&[1.0, 2.0]);
        let xl = tape.constant_vec(&[3.0, 4.0]);
        let wv = tape.param(w);
        let bv = tape.param(b);
        let y = cross_layer(&mut tape, x0, xl, wv, bv).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 4.0]);
    }

    #[test]
    fn cross_layer_hand_value() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::vector(vec![1.0, 0.0]));
        let b = store.add("b", Tensor::zeros(&[2]));
        let mut tape = Tape::new(&store);
        let x0 = tape.constant_vec(&[1.0, 2.0]);
        let xl = tape.constant_vec(&[1.0, 1.0]);
        let wv = tape.param(w);
        let bv = tape.param(b);
        let y = cross_layer(&mut tape, x0, xl, wv, bv).unwrap();
        // xl.w = 1, so x0*1 + 0 + xl = [2,3]
        assert_eq!(tape.value(y).data(), &[2.0, 3.0]);
    }

    #[test]
    fn cross_layer_bias_only() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::zeros(&[2]));
        let b = store.add("b", Tensor::vector(vec![7.0, 7.0]));
        let mut tape = Tape::new(&store);
        let x0 = tape.constant_vec(&[1.0, 2.0]);
        let xl = tape.constant_vec(&[1.0, 1.0]);
        let wv = tape.param(w);
        let bv = tape.param(b);
        let y = cross_layer(&mut tape, x0, xl, wv, bv).unwrap();
        assert_eq!(tape.value(y).data(), &[8.0, 8.0]);
    }

    #[test]
    fn cross_network_depth_zero_and_zero_params() {
        let mut store = ParamStore::new();
        let empty = CrossNetworkParams { layers: vec![] };
        let mut tape = Tape::new(&store);
        let x0 = tape.constant_vec(&[1.0, -1.0]);
        let y = cross_network(&mut tape, x0, &empty).unwrap();
        assert_eq!(y, x0);

        let two = CrossNetworkParams {
            layers: vec![
                (store.add("w0", Tensor::zeros(&[2])), store.add("b0", Tensor::zeros(&[2]))),
                (store.add("w1", Tensor::zeros(&[2])), store.add("b1", Tensor::zeros(&[2]))),
            ],
        };
        let mut tape = Tape::new(&store);
        let x0 = tape.constant_vec(&[1.0, -1.0]);
        let y = cross_network(&mut tape, x0, &two).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, -1.0]);
    }

    #[test]
    fn fuse_uniform_when_logits_match() {
        let mut store = ParamStore::new();
        let mut rng = rng_from(1);
        let params = FusionParams::init(&mut store, "fuse", 2, &mut rng);
        // zero weights: both logits are tanh(b)=0 -> uniform mix
        store.set_value("fuse.w_raw", Tensor::zeros(&[2])).unwrap();
        store.set_value("fuse.w_cross", Tensor::zeros(&[2])).unwrap();
        let mut tape = Tape::new(&store);
        let x0 = tape.constant_vec(&[2.0, 0.0]);
        let xl = tape.constant_vec(&[0.0, 4.0]);
        let y = fuse(&mut tape, x0, xl, &params).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0]);
    }

    #[test]
    fn fuse_is_identity_when_inputs_match() {
        let mut store = ParamStore::new();
        let mut rng = rng_from(2);
        let params = FusionParams::init(&mut store, "fuse", 3, &mut rng);
        let mut tape = Tape::new(&store);
        let x0 = tape.constant_vec(&[1.0, 2.0, 3.0]);
        let xl = tape.constant_vec(&[1.0, 2.0, 3.0]);
        let y = fuse(&mut tape, x0, xl, &params).unwrap();
        for (a, b) in tape.value(y).data().iter().zip(&[1.0, 2.0, 3.0]) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn fuse_matches_scalar_hand_computation() {
        let mut store = ParamStore::new();
        let mut rng = rng_from(3);
        let params = FusionParams::init(&mut store, "fuse", 1, &mut rng);
        store.set_value("fuse.w_raw", Tensor::vector(vec![1.0])).unwrap();
        store.set_value("fuse.w_cross", Tensor::vector(vec![1.0])).unwrap();
        store.set_value("fuse.b_raw", Tensor::scalar(0.0)).unwrap();
        store.set_value("fuse.b_cross", Tensor::scalar(0.0)).unwrap();
        let (x0v, xlv) = (0.7, -0.3);
        let mut tape = Tape::new(&store);
        let x0 = tape.constant_vec(&[x0v]);
        let xl = tape.constant_vec(&[xlv]);
        let y = fuse(&mut tape, x0, xl, &params).unwrap();
        let (l0, l1) = (x0v.tanh(), xlv.tanh());
        let z = l0.exp() + l1.exp();
        let expected = (l0.exp() / z) * x0v + (l1.exp() / z) * xlv;
        assert_relative_eq!(tape.value(y).data()[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn cross_and_fuse_grads_match_finite_differences() {
        let mut store = ParamStore::new();
        let mut rng = rng_from(4);
        let cross = CrossNetworkParams::init(&mut store, "cross", 3, 2, &mut rng);
        let fusion = FusionParams::init(&mut store, "fuse", 3, &mut rng);
        let x0_data = [0.3, -0.8, 0.5];

        let run = |st: &ParamStore| -> (f64, Option<crate::autograd::ParamGrads>) {
            let mut tape = Tape::new(st);
            let x0 = tape.constant_vec(&x0_data);
            let xl = cross_network(&mut tape, x0, &cross).unwrap();
            let ec = fuse(&mut tape, x0, xl, &fusion).unwrap();
            // scalarize with a fixed probe
            let probe = tape.constant_vec(&[1.0, -2.0, 0.5]);
            let s = tape.dot(ec, probe).unwrap();
            let val = tape.value(s).item();
            (val, Some(tape.backward(s).unwrap()))
        };
        let (_, grads) = run(&store);
        let grads = grads.unwrap();

        let eps = 1e-5;
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            for i in 0..store.param(id).value.len() {
                let orig = store.param(id).value.data()[i];
                store.param_mut(id).value.data_mut()[i] = orig + eps;
                let (up, _) = run(&store);
                store.param_mut(id).value.data_mut()[i] = orig - eps;
                let (down, _) = run(&store);
                store.param_mut(id).value.data_mut()[i] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let analytic = grads.get(id).map(|g| g.data()[i]).unwrap_or(0.0);
                let denom = numeric.abs().max(analytic.abs()).max(1e-7);
                assert!(
                    (numeric - analytic).abs() / denom < 1e-4,
                    "mismatch at {id:?}[{i}]: {numeric} vs {analytic}"
                );
            }
        }
    }
}
