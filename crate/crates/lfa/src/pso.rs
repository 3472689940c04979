//! Position-transitional PSO over the SGD learning rate.
//!
//! Each particle is one candidate learning rate. A round trains a copy of
//! the current model for one epoch per particle, scores it on the
//! validation split, and moves the swarm. After the swarm settles, plain
//! SGD continues with the global best rate.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::RatingMatrix;
use crate::error::{Error, Result};
use crate::mix_seed;
use crate::model::FactorState;
use crate::train::{sgd_epoch, sgd_train, SgdConfig, TrainTrace};

/// Which validation metric drives fitness and gating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricMode {
    Rmse,
    Mae,
}

impl MetricMode {
    pub fn pick(&self, rep: &crate::model::EvalReport) -> f64 {
        match self {
            MetricMode::Rmse => rep.rmse,
            MetricMode::Mae => rep.mae,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Particle {
    pub position: f64,
    pub velocity: f64,
    pub best_position: f64,
    pub best_fitness: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwarmConfig {
    pub size: usize,
    pub omega_start: f64,
    pub omega_end: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Scale of the injected position term in the velocity update.
    pub rho: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    /// Velocity clamp as a fraction of the learning-rate range.
    pub vel_max_frac: f64,
    pub max_rounds: usize,
    pub patience: usize,
    pub tol: f64,
    pub seed: u64,
    pub metric: MetricMode,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            size: 10,
            omega_start: 0.9,
            omega_end: 0.4,
            gamma1: 2.0,
            gamma2: 2.0,
            rho: 0.1,
            eta_min: 1e-4,
            eta_max: 1e-1,
            vel_max_frac: 0.1,
            max_rounds: 20,
            patience: 3,
            tol: 1e-5,
            seed: 0,
            metric: MetricMode::Rmse,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::Config("swarm size must be at least 2".into()));
        }
        if !(self.eta_min > 0.0 && self.eta_max > self.eta_min) {
            return Err(Error::Config("need 0 < eta_min < eta_max".into()));
        }
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be at least 1".into()));
        }
        if !(self.vel_max_frac > 0.0) {
            return Err(Error::Config("vel_max_frac must be positive".into()));
        }
        Ok(())
    }

    pub fn vel_max(&self) -> f64 {
        self.vel_max_frac * (self.eta_max - self.eta_min)
    }
}

#[derive(Debug)]
pub struct Swarm {
    pub particles: Vec<Particle>,
    pub best_position: f64,
    pub best_fitness: f64,
    cfg: SwarmConfig,
    rng: ChaCha8Rng,
}

/// One row of the per-round swarm log.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SwarmRoundRow {
    pub round: usize,
    pub gbest_eta: f64,
    pub gbest_fit: f64,
    pub mean_fit: f64,
}

pub fn write_swarm_log<W: Write>(rows: &[SwarmRoundRow], mut w: W) -> Result<()> {
    writeln!(w, "round,gbest_eta,gbest_fit,mean_fit")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.round, r.gbest_eta, r.gbest_fit, r.mean_fit)?;
    }
    Ok(())
}

impl Swarm {
    /// Particles start uniformly at random in `[eta_min, eta_max]` with
    /// zero velocity; bests are unset until the first evaluation.
    pub fn new(cfg: SwarmConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x9503));
        let particles = (0..cfg.size)
            .map(|_| {
                let position = rng.random_range(cfg.eta_min..=cfg.eta_max);
                Particle {
                    position,
                    velocity: 0.0,
                    best_position: position,
                    best_fitness: f64::INFINITY,
                }
            })
            .collect();
        Ok(Self {
            particles,
            best_position: cfg.eta_min,
            best_fitness: f64::INFINITY,
            cfg,
            rng,
        })
    }

    pub fn config(&self) -> &SwarmConfig {
        &self.cfg
    }

    /// Record a particle's fitness at its current position.
    pub fn record_fitness(&mut self, idx: usize, fitness: f64) {
        let p = &mut self.particles[idx];
        if fitness < p.best_fitness {
            p.best_fitness = fitness;
            p.best_position = p.position;
        }
        if fitness < self.best_fitness {
            self.best_fitness = fitness;
            self.best_position = p.position;
        }
    }

    /// Velocity/position update:
    /// `v = w v + g1 r1 (pbest - x) + g2 r2 (gbest - x) + rho (g1 r1 + g2 r2)(x - v)`,
    /// with velocity clamped to +-vel_max and position to [eta_min, eta_max].
    pub fn step(&mut self, omega: f64) {
        let vel_max = self.cfg.vel_max();
        let gbest = self.best_position;
        for p in &mut self.particles {
            let r1: f64 = self.rng.random();
            let r2: f64 = self.rng.random();
            let g1r1 = self.cfg.gamma1 * r1;
            let g2r2 = self.cfg.gamma2 * r2;
            let mut v = omega * p.velocity
                + g1r1 * (p.best_position - p.position)
                + g2r2 * (gbest - p.position)
                + self.cfg.rho * (g1r1 + g2r2) * (p.position - p.velocity);
            v = v.clamp(-vel_max, vel_max);
            p.velocity = v;
            p.position = (p.position + v).clamp(self.cfg.eta_min, self.cfg.eta_max);
        }
    }
}

/// PSO-tuned SGD training (the PLFA model).
///
/// Each round every particle trains one epoch on a private copy of the
/// current base state with its learning rate; fitness is the resulting
/// validation metric. The copy trained with the global best rate becomes
/// the next round's base. After the swarm settles (or `max_rounds`), SGD
/// continues from the base with `eta = gbest` under the usual stopping
/// rule. Returns the lowest-validation state seen plus traces.
pub fn plfa_train(
    state: FactorState,
    train: &RatingMatrix,
    val: &RatingMatrix,
    swarm_cfg: &SwarmConfig,
    sgd_cfg: &SgdConfig,
) -> Result<(FactorState, TrainTrace, Vec<SwarmRoundRow>)> {
    sgd_cfg.validate()?;
    let mut swarm = Swarm::new(swarm_cfg.clone())?;
    let mut base = state;
    let mut rounds = Vec::new();
    let mut prev_gbest = f64::INFINITY;
    let mut calm_streak = 0usize;

    for round in 1..=swarm_cfg.max_rounds {
        let mut fitness_sum = 0.0;
        for idx in 0..swarm.particles.len() {
            let eta = swarm.particles[idx].position;
            let cfg = SgdConfig {
                eta,
                seed: mix_seed(sgd_cfg.seed, (round * 1024 + idx) as u64),
                ..*sgd_cfg
            };
            let mut candidate = base.clone();
            let fitness = match sgd_epoch(&mut candidate, train, &cfg, 1) {
                Ok(()) => swarm_cfg.metric.pick(&candidate.evaluate(val)?),
                Err(Error::Diverged { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            fitness_sum += fitness;
            swarm.record_fitness(idx, fitness);
        }

        // advance the base with the global best learning rate
        let cfg = SgdConfig {
            eta: swarm.best_position,
            seed: mix_seed(sgd_cfg.seed, (round * 1024 + 1000) as u64),
            ..*sgd_cfg
        };
        match sgd_epoch(&mut base, train, &cfg, 1) {
            Ok(()) => {}
            Err(Error::Diverged { .. }) => {
                return Err(Error::Config(format!(
                    "gbest learning rate {} diverges on the base state",
                    swarm.best_position
                )))
            }
            Err(e) => return Err(e),
        }

        rounds.push(SwarmRoundRow {
            round,
            gbest_eta: swarm.best_position,
            gbest_fit: swarm.best_fitness,
            mean_fit: fitness_sum / swarm.particles.len() as f64,
        });

        if (prev_gbest - swarm.best_fitness).abs() < swarm_cfg.tol {
            calm_streak += 1;
        } else {
            calm_streak = 0;
        }
        prev_gbest = swarm.best_fitness;
        if calm_streak >= swarm_cfg.patience {
            break;
        }

        let frac = if swarm_cfg.max_rounds > 1 {
            (round - 1) as f64 / (swarm_cfg.max_rounds - 1) as f64
        } else {
            0.0
        };
        let omega = swarm_cfg.omega_start + frac * (swarm_cfg.omega_end - swarm_cfg.omega_start);
        swarm.step(omega);
    }

    // continue plain SGD from the base with the tuned rate
    let tail_cfg = SgdConfig {
        eta: swarm.best_position,
        ..*sgd_cfg
    };
    let (best, trace) = sgd_train(base, train, val, &tail_cfg)?;
    Ok((best, trace, rounds))
}
