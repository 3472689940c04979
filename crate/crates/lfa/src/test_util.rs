//! Shared helpers for unit tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{split, RatingMatrix, RatingTriplet, SplitSpec};

pub(crate) fn mat(triplets: &[(usize, usize, f64)], rows: usize, cols: usize) -> RatingMatrix {
    let ts = triplets
        .iter()
        .map(|&(row, col, value)| RatingTriplet { row, col, value })
        .collect();
    RatingMatrix::from_triplets(ts, rows, cols).unwrap()
}

/// Rank-2 noiseless synthetic matrix with partial observation, split 80/10/10.
pub(crate) fn rank2_dataset(n: usize, density: f64, seed: u64) -> (RatingMatrix, RatingMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pt: Vec<f64> = (0..n * 2).map(|_| rng.random_range(0.2..1.2)).collect();
    let qt: Vec<f64> = (0..n * 2).map(|_| rng.random_range(0.2..1.2)).collect();
    let mut triplets = Vec::new();
    for e in 0..n {
        for u in 0..n {
            if rng.random::<f64>() < density {
                let r = pt[e * 2] * qt[u * 2] + pt[e * 2 + 1] * qt[u * 2 + 1];
                triplets.push(RatingTriplet {
                    row: e,
                    col: u,
                    value: r,
                });
            }
        }
    }
    let m = RatingMatrix::from_triplets(triplets, n, n).unwrap();
    let spec = SplitSpec {
        train_frac: 0.8,
        val_frac: 0.1,
        test_frac: 0.1,
        seed,
    };
    let (train, val, _test) = split(&m, &spec).unwrap();
    (train, val)
}
