//! User-user and item-item co-interaction similarity graphs, derived from
//! the binary interaction matrix.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::data::InteractionMatrix;
use crate::error::{CoreError, Result};

/// Similarity measure hook. Only co-interaction counts are implemented;
/// the enum exists so alternative measures slot in behind the same graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityMeasure {
    CoCount,
}

/// Sparse symmetric weighted graph. Weights are positive co-interaction
/// counts; the diagonal is always absent.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    adjacency: Vec<Vec<(usize, u32)>>,
}

impl SimilarityMatrix {
    /// Build directly from an undirected weighted edge list (for synthetic
    /// graphs and tests). Duplicate edges are an error.
    pub fn from_edges(n: usize, edges: &[(usize, usize, u32)]) -> Result<SimilarityMatrix> {
        let mut adjacency: Vec<Vec<(usize, u32)>> = vec![Vec::new(); n];
        for &(a, b, w) in edges {
            if a >= n || b >= n {
                return Err(CoreError::IndexOutOfRange { index: a.max(b), n });
            }
            if a == b || w == 0 {
                return Err(CoreError::Data(format!(
                    "invalid edge ({a}, {b}, {w}): no self-loops or zero weights"
                )));
            }
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        for (node, row) in adjacency.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(j, _)| j);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(CoreError::Data(format!("duplicate edge at node {node}")));
            }
        }
        Ok(SimilarityMatrix { n, adjacency })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Nonzero off-diagonal row, sorted by neighbor index.
    pub fn neighbors(&self, node: usize) -> Result<&[(usize, u32)]> {
        self.adjacency
            .get(node)
            .map(Vec::as_slice)
            .ok_or(CoreError::IndexOutOfRange {
                index: node,
                n: self.n,
            })
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a]
            .binary_search_by_key(&b, |&(j, _)| j)
            .is_ok()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn is_isolated(&self, node: usize) -> bool {
        self.adjacency[node].is_empty()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Text edge list `a<TAB>b<TAB>w`, a < b only.
    pub fn export_edges(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| {
            CoreError::Io {
                path: path.display().to_string(),
                source: e,
            }
        })?);
        for (a, row) in self.adjacency.iter().enumerate() {
            for &(b, w) in row {
                if a < b {
                    writeln!(out, "{a}\t{b}\t{w}").map_err(|e| CoreError::Io {
                        path: path.display().to_string(),
                        source: e,
                    })?;
                }
            }
        }
        Ok(())
    }
}

/// Shared-item counts between users: the sparse form of Y·Yᵀ with the
/// diagonal dropped.
pub fn build_user_similarity(matrix: &InteractionMatrix) -> Result<SimilarityMatrix> {
    if matrix.n_users == 0 {
        return Err(CoreError::EmptyInput("interaction matrix".into()));
    }
    let rows: Vec<&[usize]> = (0..matrix.n_users).map(|u| matrix.row(u)).collect();
    Ok(build_from_rows(&rows, matrix.n_items))
}

/// Shared-user counts between items: the sparse form of Yᵀ·Y with the
/// diagonal dropped.
pub fn build_item_similarity(matrix: &InteractionMatrix) -> Result<SimilarityMatrix> {
    if matrix.n_users == 0 {
        return Err(CoreError::EmptyInput("interaction matrix".into()));
    }
    // transpose into per-item user lists, then count the same way
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); matrix.n_items];
    for u in 0..matrix.n_users {
        for &i in matrix.row(u) {
            cols[i].push(u);
        }
    }
    let col_refs: Vec<&[usize]> = cols.iter().map(Vec::as_slice).collect();
    Ok(build_from_rows(&col_refs, matrix.n_users))
}

/// Count pairwise intersections by scattering each row over an inverted
/// index. Parallel over nodes; each node's row is computed independently.
fn build_from_rows(rows: &[&[usize]], n_cols: usize) -> SimilarityMatrix {
    let n = rows.len();
    // inverted index: column -> nodes containing it
    let mut inverted: Vec<Vec<usize>> = vec![Vec::new(); n_cols];
    for (node, row) in rows.iter().enumerate() {
        for &c in *row {
            inverted[c].push(node);
        }
    }
    let adjacency: Vec<Vec<(usize, u32)>> = (0..n)
        .into_par_iter()
        .map(|node| {
            let mut counts: std::collections::HashMap<usize, u32> =
                std::collections::HashMap::new();
            for &c in rows[node] {
                for &other in &inverted[c] {
                    if other != node {
                        *counts.entry(other).or_insert(0) += 1;
                    }
                }
            }
            let mut row: Vec<(usize, u32)> = counts.into_iter().collect();
            row.sort_unstable_by_key(|&(j, _)| j);
            row
        })
        .collect();
    SimilarityMatrix { n, adjacency }
}
