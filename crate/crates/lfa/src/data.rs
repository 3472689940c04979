//! Sparse rating data: parsing, indexing, and train/val/test splitting.
//!
//! A [`RatingMatrix`] stores the known entries of a high-dimensional
//! incomplete matrix as a triplet list plus row and column indices, so
//! per-entity slices are cheap. Matrices are immutable after construction
//! and safe to share across worker threads.

use std::collections::HashSet;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mix_seed;

/// One known entry: row entity `row`, column entity `col`, rating `value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingTriplet {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Sparse set of known ratings with per-row and per-column position indices.
#[derive(Debug, Clone)]
pub struct RatingMatrix {
    triplets: Vec<RatingTriplet>,
    num_rows: usize,
    num_cols: usize,
    row_index: Vec<Vec<usize>>,
    col_index: Vec<Vec<usize>>,
}

impl RatingMatrix {
    /// Build from dense-id triplets. Rejects duplicate (row, col) pairs,
    /// out-of-range ids, and non-finite ratings.
    pub fn from_triplets(
        triplets: Vec<RatingTriplet>,
        num_rows: usize,
        num_cols: usize,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(triplets.len());
        for t in &triplets {
            if t.row >= num_rows || t.col >= num_cols {
                return Err(Error::Index(format!(
                    "triplet ({}, {}) outside {}x{}",
                    t.row, t.col, num_rows, num_cols
                )));
            }
            if !t.value.is_finite() {
                return Err(Error::Config(format!(
                    "non-finite rating at ({}, {})",
                    t.row, t.col
                )));
            }
            if !seen.insert((t.row, t.col)) {
                return Err(Error::DuplicatePair {
                    row: t.row as u64,
                    col: t.col as u64,
                });
            }
        }
        Ok(Self::build(triplets, num_rows, num_cols))
    }

    fn build(triplets: Vec<RatingTriplet>, num_rows: usize, num_cols: usize) -> Self {
        let mut row_index = vec![Vec::new(); num_rows];
        let mut col_index = vec![Vec::new(); num_cols];
        for (pos, t) in triplets.iter().enumerate() {
            row_index[t.row].push(pos);
            col_index[t.col].push(pos);
        }
        Self {
            triplets,
            num_rows,
            num_cols,
            row_index,
            col_index,
        }
    }

    pub fn triplets(&self) -> &[RatingTriplet] {
        &self.triplets
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    /// The (col, rating) pairs of row `e`, in stable triplet order.
    pub fn row_slice(&self, e: usize) -> Result<impl Iterator<Item = (usize, f64)> + '_> {
        if e >= self.num_rows {
            return Err(Error::Index(format!("row {} >= {}", e, self.num_rows)));
        }
        Ok(self.row_index[e]
            .iter()
            .map(move |&pos| (self.triplets[pos].col, self.triplets[pos].value)))
    }

    /// The (row, rating) pairs of column `u`, in stable triplet order.
    pub fn col_slice(&self, u: usize) -> Result<impl Iterator<Item = (usize, f64)> + '_> {
        if u >= self.num_cols {
            return Err(Error::Index(format!("col {} >= {}", u, self.num_cols)));
        }
        Ok(self.col_index[u]
            .iter()
            .map(move |&pos| (self.triplets[pos].row, self.triplets[pos].value)))
    }

    pub fn row_count(&self, e: usize) -> usize {
        self.row_index[e].len()
    }

    pub fn col_count(&self, u: usize) -> usize {
        self.col_index[u].len()
    }
}

/// Train/validation/test fractions plus the shuffle seed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, frac) in [
            ("train_frac", self.train_frac),
            ("val_frac", self.val_frac),
            ("test_frac", self.test_frac),
        ] {
            if !(frac > 0.0 && frac < 1.0) {
                return Err(Error::Config(format!("{name} must be in (0,1), got {frac}")));
            }
        }
        let sum = self.train_frac + self.val_frac + self.test_frac;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Partition the triplets by a seeded uniform shuffle. Validation and test
/// take `floor(frac * n)` entries each; train gets the remainder. All three
/// parts keep the input's dimensions.
pub fn split(
    matrix: &RatingMatrix,
    spec: &SplitSpec,
) -> Result<(RatingMatrix, RatingMatrix, RatingMatrix)> {
    spec.validate()?;
    if matrix.is_empty() {
        return Err(Error::Config("cannot split an empty matrix".into()));
    }
    let n = matrix.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 0x5b17));
    order.shuffle(&mut rng);

    let n_val = (spec.val_frac * n as f64).floor() as usize;
    let n_test = (spec.test_frac * n as f64).floor() as usize;

    let part = |positions: &[usize]| {
        let mut sorted: Vec<usize> = positions.to_vec();
        sorted.sort_unstable();
        let triplets = sorted.iter().map(|&p| matrix.triplets[p]).collect();
        RatingMatrix::build(triplets, matrix.num_rows, matrix.num_cols)
    };

    let val = part(&order[..n_val]);
    let test = part(&order[n_val..n_val + n_test]);
    let train = part(&order[n_val + n_test..]);
    Ok((train, val, test))
}

/// Parse delimited triplet text into a [`RatingMatrix`].
///
/// Lines starting with `#` are comments; one leading non-numeric line is
/// treated as a header and skipped. Non-negative integer ids index the
/// matrix directly (dimensions are max id + 1); fields past the third are
/// ignored.
pub fn parse_ratings<R: BufRead>(source: R, delimiter: char) -> Result<RatingMatrix> {
    let mut triplets = Vec::new();
    let mut max_row: Option<u64> = None;
    let mut max_col: Option<u64> = None;
    let mut seen = HashSet::new();
    let mut header_allowed = true;

    for (line_no, line) in source.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(delimiter).collect();
        let parsed = (|| {
            if fields.len() < 3 {
                return None;
            }
            let raw_row: u64 = fields[0].trim().parse().ok()?;
            let raw_col: u64 = fields[1].trim().parse().ok()?;
            let value: f64 = fields[2].trim().parse().ok()?;
            value.is_finite().then_some((raw_row, raw_col, value))
        })();
        let (raw_row, raw_col, value) = match parsed {
            Some(p) => p,
            None if header_allowed => {
                header_allowed = false;
                continue;
            }
            None => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected `row{delimiter}col{delimiter}rating`, got {trimmed:?}"),
                })
            }
        };
        header_allowed = false;

        let (row, col) = (raw_row as usize, raw_col as usize);
        if !seen.insert((row, col)) {
            return Err(Error::DuplicatePair {
                row: raw_row,
                col: raw_col,
            });
        }
        max_row = Some(max_row.map_or(raw_row, |m| m.max(raw_row)));
        max_col = Some(max_col.map_or(raw_col, |m| m.max(raw_col)));
        triplets.push(RatingTriplet { row, col, value });
    }

    let num_rows = max_row.map_or(0, |m| m as usize + 1);
    let num_cols = max_col.map_or(0, |m| m as usize + 1);
    Ok(RatingMatrix::build(triplets, num_rows, num_cols))
}
