//! Per-entity beetle search with Adam-adjusted antennae, and the sequential
//! row-then-column refinement loop with validation gating.
//!
//! Each row entity `e` owns an (f+1)-dimensional beetle over `[p_e, c_e]`;
//! each column entity `u` owns one over `[q_u, d_u]`. A beetle probes two
//! antennae placed symmetrically around its best position, displaced by a
//! bias-corrected moment estimate of random unit directions scaled by a
//! shrinking antennae length, and moves only on strict improvement.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::RatingMatrix;
use crate::error::{Error, Result};
use crate::mix_seed;
use crate::model::FactorState;
use crate::pso::MetricMode;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Initial antennae length; the swept knob.
    pub al0: f64,
    /// Multiplicative antennae decay per beetle step, in (0, 1].
    pub al_decay: f64,
    /// Antennae length floor.
    pub al_min: f64,
    /// Extra step scale on top of the antennae length.
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_hat: f64,
    pub lambda: f64,
    /// Weight of the L1 penalty in MAE-mode fitness; defaults to `lambda`.
    pub l1_weight: Option<f64>,
    pub metric_mode: MetricMode,
    pub max_beetle_iters: usize,
    /// A beetle stops after 3 consecutive steps improving by no more than this.
    pub beetle_tol: f64,
    pub max_rounds: usize,
    pub seed: u64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            al0: 2.0,
            al_decay: 0.95,
            al_min: 1e-3,
            alpha: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_hat: 1e-8,
            lambda: 0.03,
            l1_weight: None,
            metric_mode: MetricMode::Rmse,
            max_beetle_iters: 50,
            beetle_tol: 1e-6,
            max_rounds: 10,
            seed: 0,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.al0 > 0.0) {
            return Err(Error::Config("al0 must be positive".into()));
        }
        if !(self.al_decay > 0.0 && self.al_decay <= 1.0) {
            return Err(Error::Config("al_decay must be in (0, 1]".into()));
        }
        if !(self.al_min > 0.0 && self.al_min <= self.al0) {
            return Err(Error::Config("need 0 < al_min <= al0".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0,1), got {b}")));
            }
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        Ok(())
    }

    fn l1_weight(&self) -> f64 {
        self.l1_weight.unwrap_or(self.lambda)
    }
}

/// One beetle: best position over `(f+1)` coordinates, its fitness, the
/// Adam moment pair over random directions, and the shrinking antennae
/// length.
#[derive(Debug, Clone)]
pub struct BeetleState {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub al: f64,
    pub t: u32,
}

impl BeetleState {
    fn new(x_best: Vec<f64>, f_best: f64, al: f64) -> Self {
        let dim = x_best.len();
        Self {
            x_best,
            f_best,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            al,
            t: 0,
        }
    }
}

/// Fitness of candidate `x = [p_e, c_e]` for row `e`, with the other side's
/// factors read from `state`. RMSE mode:
/// `1/2 sum_{(e,u) in row} (r - p.q_u - c - d_u)^2 + lambda/2 (|p|^2 + c^2)`.
/// MAE mode: `sum |r - p.q_u - c - d_u| + w (|p|_1 + |c|)`.
pub fn row_fitness(
    x: &[f64],
    e: usize,
    state: &FactorState,
    train: &RatingMatrix,
    cfg: &RefineConfig,
) -> f64 {
    let f = state.factors;
    debug_assert_eq!(x.len(), f + 1);
    let (p, c) = (&x[..f], x[f]);
    let mut data = 0.0;
    for (u, r) in train.row_slice(e).expect("row in range") {
        let q = state.q_row(u);
        let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
        let residual = r - dot - c - state.d[u];
        data += match cfg.metric_mode {
            MetricMode::Rmse => 0.5 * residual * residual,
            MetricMode::Mae => residual.abs(),
        };
    }
    let reg = match cfg.metric_mode {
        MetricMode::Rmse => {
            0.5 * cfg.lambda * (p.iter().map(|a| a * a).sum::<f64>() + c * c)
        }
        MetricMode::Mae => cfg.l1_weight() * (p.iter().map(|a| a.abs()).sum::<f64>() + c.abs()),
    };
    data + reg
}

/// Column mirror of [`row_fitness`]: `x = [q_u, d_u]`, other side from `state`.
pub fn col_fitness(
    x: &[f64],
    u: usize,
    state: &FactorState,
    train: &RatingMatrix,
    cfg: &RefineConfig,
) -> f64 {
    let f = state.factors;
    debug_assert_eq!(x.len(), f + 1);
    let (q, d) = (&x[..f], x[f]);
    let mut data = 0.0;
    for (e, r) in train.col_slice(u).expect("col in range") {
        let p = state.p_row(e);
        let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
        let residual = r - dot - state.c[e] - d;
        data += match cfg.metric_mode {
            MetricMode::Rmse => 0.5 * residual * residual,
            MetricMode::Mae => residual.abs(),
        };
    }
    let reg = match cfg.metric_mode {
        MetricMode::Rmse => {
            0.5 * cfg.lambda * (q.iter().map(|a| a * a).sum::<f64>() + d * d)
        }
        MetricMode::Mae => cfg.l1_weight() * (q.iter().map(|a| a.abs()).sum::<f64>() + d.abs()),
    };
    data + reg
}

pub fn init_row_beetle(
    state: &FactorState,
    e: usize,
    train: &RatingMatrix,
    cfg: &RefineConfig,
) -> BeetleState {
    let mut x = state.p_row(e).to_vec();
    x.push(state.c[e]);
    let f_best = row_fitness(&x, e, state, train, cfg);
    BeetleState::new(x, f_best, cfg.al0)
}

pub fn init_col_beetle(
    state: &FactorState,
    u: usize,
    train: &RatingMatrix,
    cfg: &RefineConfig,
) -> BeetleState {
    let mut x = state.q_row(u).to_vec();
    x.push(state.d[u]);
    let f_best = col_fitness(&x, u, state, train, cfg);
    BeetleState::new(x, f_best, cfg.al0)
}

/// Uniform random direction: each component U[0,1], normalized to unit
/// Euclidean norm. An all-zero draw (probability zero) is redrawn.
pub fn random_direction<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    debug_assert!(dim >= 1);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

/// One beetle iteration. Draws a random direction, updates and
/// bias-corrects the moment pair, places the antennae at
/// `x_best +- alpha * al * m_hat / sqrt(v_hat + eps)`, probes both, and
/// moves only if the better antenna strictly improves `f_best`. The
/// antennae length then decays toward `al_min`. Returns the improvement
/// in `f_best` (0.0 when the beetle did not move).
pub fn beetle_step<F, R>(b: &mut BeetleState, mut fitness: F, cfg: &RefineConfig, rng: &mut R) -> f64
where
    F: FnMut(&[f64]) -> f64,
    R: Rng,
{
    let dim = b.x_best.len();
    b.t += 1;
    let dr = random_direction(dim, rng);
    let bc1 = 1.0 - cfg.beta1.powi(b.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(b.t as i32);

    let mut x_r = vec![0.0; dim];
    let mut x_l = vec![0.0; dim];
    for i in 0..dim {
        b.m[i] = cfg.beta1 * b.m[i] + (1.0 - cfg.beta1) * dr[i];
        b.v[i] = cfg.beta2 * b.v[i] + (1.0 - cfg.beta2) * dr[i] * dr[i];
        let m_hat = b.m[i] / bc1;
        let v_hat = b.v[i] / bc2;
        let step = cfg.alpha * b.al * m_hat / (v_hat + cfg.epsilon_hat).sqrt();
        x_r[i] = b.x_best[i] + step;
        x_l[i] = b.x_best[i] - step;
    }

    let guard = |f: f64| if f.is_finite() { f } else { f64::INFINITY };
    let f_r = guard(fitness(&x_r));
    let f_l = guard(fitness(&x_l));
    // ties go to the left antenna, as the selection rule is written
    let (x_temp, f_temp) = if f_r < f_l { (x_r, f_r) } else { (x_l, f_l) };

    let mut improvement = 0.0;
    if f_temp < b.f_best {
        improvement = b.f_best - f_temp;
        b.x_best = x_temp;
        b.f_best = f_temp;
    }
    b.al = (b.al * cfg.al_decay).max(cfg.al_min);
    improvement
}

fn run_beetle<F, R>(
    mut b: BeetleState,
    mut fitness: F,
    cfg: &RefineConfig,
    rng: &mut R,
) -> (Vec<f64>, f64, usize)
where
    F: FnMut(&[f64]) -> f64,
    R: Rng,
{
    let mut stalled = 0usize;
    let mut steps = 0usize;
    for _ in 0..cfg.max_beetle_iters {
        let improvement = beetle_step(&mut b, &mut fitness, cfg, rng);
        steps += 1;
        if improvement > cfg.beetle_tol {
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 3 {
                break;
            }
        }
    }
    (b.x_best, b.f_best, steps)
}

/// Refine one row's `[p_e, c_e]` while the rest of the model stays fixed.
/// The result's fitness never exceeds the initial fitness.
pub fn refine_row<R: Rng>(
    state: &FactorState,
    e: usize,
    train: &RatingMatrix,
    cfg: &RefineConfig,
    rng: &mut R,
) -> (Vec<f64>, f64, usize) {
    let b = init_row_beetle(state, e, train, cfg);
    run_beetle(b, |x| row_fitness(x, e, state, train, cfg), cfg, rng)
}

/// Column mirror of [`refine_row`].
pub fn refine_col<R: Rng>(
    state: &FactorState,
    u: usize,
    train: &RatingMatrix,
    cfg: &RefineConfig,
    rng: &mut R,
) -> (Vec<f64>, f64, usize) {
    let b = init_col_beetle(state, u, train, cfg);
    run_beetle(b, |x| col_fitness(x, u, state, train, cfg), cfg, rng)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RefineRoundRow {
    pub round: usize,
    pub val_rmse: f64,
    pub val_mae: f64,
    pub committed: bool,
    pub seconds: f64,
}

/// Per-round refinement history plus aggregate beetle statistics.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RefineTrace {
    pub rows: Vec<RefineRoundRow>,
    pub total_beetle_steps: usize,
}

impl RefineTrace {
    pub fn committed_rounds(&self) -> usize {
        self.rows.iter().filter(|r| r.committed).count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "round,val_rmse,val_mae,committed,seconds")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{:.3}",
                r.round, r.val_rmse, r.val_mae, r.committed, r.seconds
            )?;
        }
        Ok(())
    }
}

fn entity_seed(cfg: &RefineConfig, round: usize, phase: u64, entity: usize) -> u64 {
    mix_seed(
        cfg.seed ^ entity as u64,
        (round as u64) << 32 | phase << 24 | entity as u64,
    )
}

/// One full round: refine every row against the frozen `Q, d`, write the
/// results back, then refine every column against the updated `P, c`.
/// Entities within a phase are independent and run in parallel on
/// per-entity RNG streams, so parallel and sequential execution agree.
fn refine_round(
    work: &mut FactorState,
    train: &RatingMatrix,
    cfg: &RefineConfig,
    round: usize,
) -> usize {
    let f = work.factors;
    let row_results: Vec<(Vec<f64>, f64, usize)> = (0..work.num_rows)
        .into_par_iter()
        .map(|e| {
            let mut rng = ChaCha8Rng::seed_from_u64(entity_seed(cfg, round, 0, e));
            refine_row(work, e, train, cfg, &mut rng)
        })
        .collect();
    let mut steps = 0;
    for (e, (x, _fit, s)) in row_results.into_iter().enumerate() {
        work.p_row_mut(e).copy_from_slice(&x[..f]);
        work.c[e] = x[f];
        steps += s;
    }

    let col_results: Vec<(Vec<f64>, f64, usize)> = (0..work.num_cols)
        .into_par_iter()
        .map(|u| {
            let mut rng = ChaCha8Rng::seed_from_u64(entity_seed(cfg, round, 1, u));
            refine_col(work, u, train, cfg, &mut rng)
        })
        .collect();
    for (u, (x, _fit, s)) in col_results.into_iter().enumerate() {
        work.q_row_mut(u).copy_from_slice(&x[..f]);
        work.d[u] = x[f];
        steps += s;
    }
    steps
}

/// Sequential beetle refinement with validation gating: after each round
/// the gating metric (validation RMSE in RMSE mode, MAE in MAE mode) must
/// be strictly lower than the best seen, else the round is rolled back and
/// refinement stops. Returns the committed state.
pub fn sequential_refine(
    state: FactorState,
    train: &RatingMatrix,
    val: &RatingMatrix,
    cfg: &RefineConfig,
) -> Result<(FactorState, RefineTrace)> {
    cfg.validate()?;
    if !state.dims_match(train) {
        return Err(Error::Config("state dimensions do not match training data".into()));
    }
    let mut committed = state;
    let mut best_gate = cfg.metric_mode.pick(&committed.evaluate(val)?);
    let mut trace = RefineTrace::default();
    let start = Instant::now();

    for round in 1..=cfg.max_rounds {
        let mut work = committed.clone();
        trace.total_beetle_steps += refine_round(&mut work, train, cfg, round);
        let rep = work.evaluate(val)?;
        let gate = cfg.metric_mode.pick(&rep);
        let commit = gate < best_gate;
        trace.rows.push(RefineRoundRow {
            round,
            val_rmse: rep.rmse,
            val_mae: rep.mae,
            committed: commit,
            seconds: start.elapsed().as_secs_f64(),
        });
        if commit {
            committed = work;
            best_gate = gate;
        } else {
            break;
        }
    }
    Ok((committed, trace))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepRow {
    pub al0: f64,
    pub test_rmse: f64,
    pub test_mae: f64,
    pub rounds: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "al0,test_rmse,test_mae,rounds,seconds")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{:.3}",
                r.al0, r.test_rmse, r.test_mae, r.rounds, r.seconds
            )?;
        }
        Ok(())
    }
}

/// Run [`sequential_refine`] once per initial antennae length, from the
/// same input state, and report test metrics and rounds-to-converge.
pub fn antennae_sweep(
    state: &FactorState,
    train: &RatingMatrix,
    val: &RatingMatrix,
    test: &RatingMatrix,
    cfg: &RefineConfig,
    al_values: &[f64],
) -> Result<SweepReport> {
    if al_values.is_empty() {
        return Err(Error::Config("sweep list must be non-empty".into()));
    }
    let mut report = SweepReport::default();
    for &al0 in al_values {
        let run_cfg = RefineConfig {
            al0,
            al_min: cfg.al_min.min(al0),
            ..cfg.clone()
        };
        let start = Instant::now();
        let (refined, trace) = sequential_refine(state.clone(), train, val, &run_cfg)?;
        let rep = refined.evaluate(test)?;
        report.rows.push(SweepRow {
            al0,
            test_rmse: rep.rmse,
            test_mae: rep.mae,
            rounds: trace.committed_rounds(),
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(report)
}
