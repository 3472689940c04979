//! Factor model state, prediction, the regularized objective, and
//! RMSE/MAE evaluation.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::RatingMatrix;
use crate::error::{Error, Result};
use crate::{mix_seed, KahanSum};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Low-rank factors plus linear biases: prediction is
/// `p_e . q_u + c_e + d_u`.
///
/// `p` and `q` are row-major `num_rows x factors` and `num_cols x factors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorState {
    pub num_rows: usize,
    pub num_cols: usize,
    pub factors: usize,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

/// Accuracy metrics over one evaluation split.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    state: FactorState,
}

impl FactorState {
    /// Fresh state: P, Q entries uniform in (0, scale], biases zero.
    pub fn init(
        num_rows: usize,
        num_cols: usize,
        factors: usize,
        seed: u64,
        scale: f64,
    ) -> Result<Self> {
        if factors == 0 {
            return Err(Error::Config("latent dimension f must be positive".into()));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!("init scale must be positive, got {scale}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x1417));
        // 1 - U[0,1) lands in (0, 1]
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| scale * (1.0 - rng.random::<f64>())).collect()
        };
        Ok(Self {
            num_rows,
            num_cols,
            factors,
            p: draw(num_rows * factors),
            q: draw(num_cols * factors),
            c: vec![0.0; num_rows],
            d: vec![0.0; num_cols],
        })
    }

    pub fn p_row(&self, e: usize) -> &[f64] {
        &self.p[e * self.factors..(e + 1) * self.factors]
    }

    pub fn q_row(&self, u: usize) -> &[f64] {
        &self.q[u * self.factors..(u + 1) * self.factors]
    }

    pub fn p_row_mut(&mut self, e: usize) -> &mut [f64] {
        &mut self.p[e * self.factors..(e + 1) * self.factors]
    }

    pub fn q_row_mut(&mut self, u: usize) -> &mut [f64] {
        &mut self.q[u * self.factors..(u + 1) * self.factors]
    }

    /// `p_e . q_u + c_e + d_u`. Panics on out-of-range ids.
    pub fn predict(&self, e: usize, u: usize) -> f64 {
        assert!(e < self.num_rows, "row id {} out of range {}", e, self.num_rows);
        assert!(u < self.num_cols, "col id {} out of range {}", u, self.num_cols);
        let dot: f64 = self
            .p_row(e)
            .iter()
            .zip(self.q_row(u))
            .map(|(a, b)| a * b)
            .sum();
        dot + self.c[e] + self.d[u]
    }

    pub fn dims_match(&self, data: &RatingMatrix) -> bool {
        self.num_rows == data.num_rows() && self.num_cols == data.num_cols()
    }

    /// Regularized squared-error objective over the known entries:
    /// `1/2 sum (r - r_hat)^2 + lambda/2 sum (|p_e|^2 + |q_u|^2 + c_e^2 + d_u^2)`,
    /// both sums ranging over the known-entry set (so an entity's
    /// regularization terms count once per rating it participates in).
    pub fn objective(&self, data: &RatingMatrix, lambda: f64) -> f64 {
        let mut acc = KahanSum::default();
        for t in data.triplets() {
            let residual = t.value - self.predict(t.row, t.col);
            acc.add(0.5 * residual * residual);
            if lambda != 0.0 {
                let p_sq: f64 = self.p_row(t.row).iter().map(|x| x * x).sum();
                let q_sq: f64 = self.q_row(t.col).iter().map(|x| x * x).sum();
                let c = self.c[t.row];
                let d = self.d[t.col];
                acc.add(0.5 * lambda * (p_sq + q_sq + c * c + d * d));
            }
        }
        acc.value()
    }

    /// RMSE and MAE over every triplet of `data`.
    pub fn evaluate(&self, data: &RatingMatrix) -> Result<EvalReport> {
        if data.is_empty() {
            return Err(Error::EmptyEval);
        }
        let mut sq = KahanSum::default();
        let mut abs = KahanSum::default();
        for t in data.triplets() {
            let residual = t.value - self.predict(t.row, t.col);
            sq.add(residual * residual);
            abs.add(residual.abs());
        }
        let n = data.len();
        Ok(EvalReport {
            rmse: (sq.value() / n as f64).sqrt(),
            mae: abs.value() / n as f64,
            n,
        })
    }

    pub fn all_finite(&self) -> bool {
        self.p.iter().all(|x| x.is_finite())
            && self.q.iter().all(|x| x.is_finite())
            && self.c.iter().all(|x| x.is_finite())
            && self.d.iter().all(|x| x.is_finite())
    }

    /// Serialize to a JSON checkpoint. serde_json emits shortest
    /// round-trippable f64 representations, so checkpoints are bit-exact.
    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let cp = Checkpoint {
            version: CHECKPOINT_VERSION,
            state: self.clone(),
        };
        serde_json::to_writer(writer, &cp).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let cp: Checkpoint =
            serde_json::from_reader(reader).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                cp.version
            )));
        }
        let s = &cp.state;
        if s.p.len() != s.num_rows * s.factors
            || s.q.len() != s.num_cols * s.factors
            || s.c.len() != s.num_rows
            || s.d.len() != s.num_cols
        {
            return Err(Error::Checkpoint("inconsistent checkpoint dimensions".into()));
        }
        Ok(cp.state)
    }

    pub fn save_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.save(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::load(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
