//! Gradient trainers over the regularized objective: per-entry SGD and a
//! per-parameter Adam variant on the same gradients.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::RatingMatrix;
use crate::error::{Error, Result};
use crate::mix_seed;
use crate::model::FactorState;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SgdConfig {
    pub eta: f64,
    pub lambda: f64,
    pub max_epochs: usize,
    /// Stop when |delta val RMSE| stays below this for 2 consecutive epochs.
    pub tol: f64,
    /// Seed for the per-epoch entry shuffle.
    pub seed: u64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.tol < 0.0 {
            return Err(Error::Config("tol must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_hat: f64,
    pub lambda: f64,
    pub max_epochs: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_hat: 1e-8,
            lambda: 0.03,
            max_epochs: 100,
            tol: 1e-5,
            seed: 0,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0,1), got {b}")));
            }
        }
        if !(self.epsilon_hat > 0.0) {
            return Err(Error::Config("epsilon_hat must be positive".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub objective: f64,
    pub val_rmse: f64,
    pub val_mae: f64,
    pub seconds: f64,
}

/// Per-epoch training history.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainTrace {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,objective,val_rmse,val_mae,seconds")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{:.3}",
                r.epoch, r.objective, r.val_rmse, r.val_mae, r.seconds
            )?;
        }
        Ok(())
    }
}

fn shuffled_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, epoch as u64));
    order.shuffle(&mut rng);
    order
}

/// One pass of per-entry SGD in seeded shuffled order.
///
/// For each triplet: `delta = r - predict`, then with pre-update values
/// `p_ek += eta (delta q_uk - lambda p_ek)`, `q_uk += eta (delta p_ek - lambda q_uk)`,
/// `c_e += eta (delta - lambda c_e)`, `d_u += eta (delta - lambda d_u)`.
pub fn sgd_epoch(
    state: &mut FactorState,
    train: &RatingMatrix,
    cfg: &SgdConfig,
    epoch: usize,
) -> Result<()> {
    debug_assert!(state.dims_match(train));
    let f = state.factors;
    let mut p_old = vec![0.0; f];
    for &pos in &shuffled_order(train.len(), cfg.seed, epoch) {
        let t = train.triplets()[pos];
        let delta = t.value - state.predict(t.row, t.col);
        p_old.copy_from_slice(state.p_row(t.row));
        {
            let base_p = t.row * f;
            let base_q = t.col * f;
            for k in 0..f {
                let p = state.p[base_p + k];
                let q = state.q[base_q + k];
                state.p[base_p + k] = p + cfg.eta * (delta * q - cfg.lambda * p);
                state.q[base_q + k] = q + cfg.eta * (delta * p_old[k] - cfg.lambda * q);
            }
        }
        state.c[t.row] += cfg.eta * (delta - cfg.lambda * state.c[t.row]);
        state.d[t.col] += cfg.eta * (delta - cfg.lambda * state.d[t.col]);

        let finite = state.p_row(t.row).iter().all(|x| x.is_finite())
            && state.q_row(t.col).iter().all(|x| x.is_finite())
            && state.c[t.row].is_finite()
            && state.d[t.col].is_finite();
        if !finite {
            return Err(Error::Diverged {
                row: t.row,
                col: t.col,
                epoch,
            });
        }
    }
    Ok(())
}

/// Shared epoch loop: runs `step` once per epoch, tracks the best
/// validation-RMSE state, and stops after two consecutive epochs whose
/// validation RMSE moved by less than `tol` (measured against the epoch
/// before, starting from the pre-training baseline).
fn train_loop<F>(
    mut state: FactorState,
    train: &RatingMatrix,
    val: &RatingMatrix,
    lambda: f64,
    max_epochs: usize,
    tol: f64,
    mut step: F,
) -> Result<(FactorState, TrainTrace)>
where
    F: FnMut(&mut FactorState, usize) -> Result<()>,
{
    let mut trace = TrainTrace::default();
    let baseline = state.evaluate(val)?;
    let mut best_rmse = baseline.rmse;
    let mut best_state = state.clone();
    let mut prev_rmse = baseline.rmse;
    let mut calm_streak = 0usize;
    let start = Instant::now();

    for epoch in 1..=max_epochs {
        step(&mut state, epoch)?;
        let objective = state.objective(train, lambda);
        let rep = state.evaluate(val)?;
        trace.rows.push(TraceRow {
            epoch,
            objective,
            val_rmse: rep.rmse,
            val_mae: rep.mae,
            seconds: start.elapsed().as_secs_f64(),
        });
        if rep.rmse < best_rmse {
            best_rmse = rep.rmse;
            best_state = state.clone();
        }
        if (rep.rmse - prev_rmse).abs() < tol {
            calm_streak += 1;
        } else {
            calm_streak = 0;
        }
        prev_rmse = rep.rmse;
        if calm_streak >= 2 {
            break;
        }
    }
    Ok((best_state, trace))
}

/// SGD training with early stopping; returns the lowest-validation-RMSE
/// state seen (including the input).
pub fn sgd_train(
    state: FactorState,
    train: &RatingMatrix,
    val: &RatingMatrix,
    cfg: &SgdConfig,
) -> Result<(FactorState, TrainTrace)> {
    cfg.validate()?;
    train_loop(
        state,
        train,
        val,
        cfg.lambda,
        cfg.max_epochs,
        cfg.tol,
        |s, epoch| sgd_epoch(s, train, cfg, epoch),
    )
}

/// Per-parameter Adam moments, with per-entity step counters so bias
/// correction is exact even though entities are touched at different rates.
struct AdamMoments {
    m_p: Vec<f64>,
    v_p: Vec<f64>,
    m_q: Vec<f64>,
    v_q: Vec<f64>,
    m_c: Vec<f64>,
    v_c: Vec<f64>,
    m_d: Vec<f64>,
    v_d: Vec<f64>,
    t_row: Vec<u32>,
    t_col: Vec<u32>,
}

impl AdamMoments {
    fn new(state: &FactorState) -> Self {
        Self {
            m_p: vec![0.0; state.p.len()],
            v_p: vec![0.0; state.p.len()],
            m_q: vec![0.0; state.q.len()],
            v_q: vec![0.0; state.q.len()],
            m_c: vec![0.0; state.c.len()],
            v_c: vec![0.0; state.c.len()],
            m_d: vec![0.0; state.d.len()],
            v_d: vec![0.0; state.d.len()],
            t_row: vec![0; state.num_rows],
            t_col: vec![0; state.num_cols],
        }
    }
}

#[inline]
fn adam_update(
    param: &mut f64,
    grad: f64,
    m: &mut f64,
    v: &mut f64,
    bc1: f64,
    bc2: f64,
    cfg: &AdamConfig,
) {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * grad;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * grad * grad;
    let m_hat = *m / bc1;
    let v_hat = *v / bc2;
    *param -= cfg.alpha * m_hat / (v_hat.sqrt() + cfg.epsilon_hat);
}

fn adam_epoch(
    state: &mut FactorState,
    moments: &mut AdamMoments,
    train: &RatingMatrix,
    cfg: &AdamConfig,
    epoch: usize,
) -> Result<()> {
    let f = state.factors;
    let mut p_old = vec![0.0; f];
    for &pos in &shuffled_order(train.len(), cfg.seed, epoch) {
        let t = train.triplets()[pos];
        let delta = t.value - state.predict(t.row, t.col);
        p_old.copy_from_slice(state.p_row(t.row));

        moments.t_row[t.row] += 1;
        moments.t_col[t.col] += 1;
        let bc1_row = 1.0 - cfg.beta1.powi(moments.t_row[t.row] as i32);
        let bc2_row = 1.0 - cfg.beta2.powi(moments.t_row[t.row] as i32);
        let bc1_col = 1.0 - cfg.beta1.powi(moments.t_col[t.col] as i32);
        let bc2_col = 1.0 - cfg.beta2.powi(moments.t_col[t.col] as i32);

        let base_p = t.row * f;
        let base_q = t.col * f;
        for k in 0..f {
            let q = state.q[base_q + k];
            // gradient of the per-entry objective term
            let g_p = -(delta * q - cfg.lambda * p_old[k]);
            let g_q = -(delta * p_old[k] - cfg.lambda * q);
            adam_update(
                &mut state.p[base_p + k],
                g_p,
                &mut moments.m_p[base_p + k],
                &mut moments.v_p[base_p + k],
                bc1_row,
                bc2_row,
                cfg,
            );
            adam_update(
                &mut state.q[base_q + k],
                g_q,
                &mut moments.m_q[base_q + k],
                &mut moments.v_q[base_q + k],
                bc1_col,
                bc2_col,
                cfg,
            );
        }
        let g_c = -(delta - cfg.lambda * state.c[t.row]);
        adam_update(
            &mut state.c[t.row],
            g_c,
            &mut moments.m_c[t.row],
            &mut moments.v_c[t.row],
            bc1_row,
            bc2_row,
            cfg,
        );
        let g_d = -(delta - cfg.lambda * state.d[t.col]);
        adam_update(
            &mut state.d[t.col],
            g_d,
            &mut moments.m_d[t.col],
            &mut moments.v_d[t.col],
            bc1_col,
            bc2_col,
            cfg,
        );

        let finite = state.p_row(t.row).iter().all(|x| x.is_finite())
            && state.q_row(t.col).iter().all(|x| x.is_finite())
            && state.c[t.row].is_finite()
            && state.d[t.col].is_finite();
        if !finite {
            return Err(Error::Diverged {
                row: t.row,
                col: t.col,
                epoch,
            });
        }
    }
    Ok(())
}

/// Adam training on the same per-entry gradients as SGD, with
/// bias-corrected moments. Stopping rule matches [`sgd_train`].
pub fn adam_train(
    state: FactorState,
    train: &RatingMatrix,
    val: &RatingMatrix,
    cfg: &AdamConfig,
) -> Result<(FactorState, TrainTrace)> {
    cfg.validate()?;
    let mut moments = AdamMoments::new(&state);
    train_loop(
        state,
        train,
        val,
        cfg.lambda,
        cfg.max_epochs,
        cfg.tol,
        |s, epoch| adam_epoch(s, &mut moments, train, cfg, epoch),
    )
}
