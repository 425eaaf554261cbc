//! Shared fixture builders for the criterion benches.

use rand::Rng;

use driftrec_core::seed::rng_from;
use driftrec_core::{build_matrix, Interaction, InteractionMatrix};

/// Random implicit-feedback matrix with roughly `density` fill.
pub fn random_matrix(n_users: usize, n_items: usize, density: f64, seed: u64) -> InteractionMatrix {
    let mut rng = rng_from(seed);
    let mut xs = Vec::new();
    for u in 0..n_users {
        let mut any = false;
        for i in 0..n_items {
            if rng.gen::<f64>() < density {
                xs.push(Interaction {
                    user_idx: u,
                    item_idx: i,
                    rating: 1.0,
                    timestamp: (u * n_items + i) as i64,
                });
                any = true;
            }
        }
        if !any {
            // keep every user represented so the matrix shape is stable
            xs.push(Interaction {
                user_idx: u,
                item_idx: rng.gen_range(0..n_items),
                rating: 1.0,
                timestamp: 0,
            });
        }
    }
    let mut m = build_matrix(&xs).unwrap();
    m.pad_to(n_users, n_items).unwrap();
    m
}

/// Random dense embedding rows in [-0.5, 0.5).
pub fn random_rows(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect())
        .collect()
}
