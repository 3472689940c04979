//! Run configuration: a single JSON document, with every CLI flag
//! overriding its config key. Sub-seeds are derived from one master seed
//! so a run is reproducible from `(config, seed)` alone.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use lfa::mix_seed;
use lfa::pso::{MetricMode, SwarmConfig};
use lfa::refine::RefineConfig;
use lfa::train::{AdamConfig, SgdConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
    Plfa,
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Optimizer::Sgd => write!(f, "sgd"),
            Optimizer::Adam => write!(f, "adam"),
            Optimizer::Plfa => write!(f, "plfa"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitBlock {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitBlock {
    fn default() -> Self {
        Self {
            train_frac: 0.7,
            val_frac: 0.1,
            test_frac: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamBlock {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_hat: f64,
}

impl Default for AdamBlock {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_hat: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwarmBlock {
    pub size: usize,
    pub omega_start: f64,
    pub omega_end: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub rho: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    pub vel_max_frac: f64,
    pub max_rounds: usize,
    pub patience: usize,
    pub tol: f64,
}

impl Default for SwarmBlock {
    fn default() -> Self {
        let d = SwarmConfig::default();
        Self {
            size: d.size,
            omega_start: d.omega_start,
            omega_end: d.omega_end,
            gamma1: d.gamma1,
            gamma2: d.gamma2,
            rho: d.rho,
            eta_min: d.eta_min,
            eta_max: d.eta_max,
            vel_max_frac: d.vel_max_frac,
            max_rounds: d.max_rounds,
            patience: d.patience,
            tol: d.tol,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineBlock {
    pub al0: f64,
    pub al_decay: f64,
    pub al_min: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_hat: f64,
    pub l1_weight: Option<f64>,
    pub max_beetle_iters: usize,
    pub beetle_tol: f64,
    pub max_rounds: usize,
}

impl Default for RefineBlock {
    fn default() -> Self {
        let d = RefineConfig::default();
        Self {
            al0: d.al0,
            al_decay: d.al_decay,
            al_min: d.al_min,
            alpha: d.alpha,
            beta1: d.beta1,
            beta2: d.beta2,
            epsilon_hat: d.epsilon_hat,
            l1_weight: d.l1_weight,
            max_beetle_iters: d.max_beetle_iters,
            beetle_tol: d.beetle_tol,
            max_rounds: d.max_rounds,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub delimiter: String,
    pub split: SplitBlock,
    /// Master seed; split/init/shuffle/swarm/refine streams derive from it.
    pub seed: u64,
    pub factors: usize,
    pub lambda: f64,
    pub eta: f64,
    pub init_scale: f64,
    pub optimizer: Optimizer,
    pub max_epochs: usize,
    pub tol: f64,
    pub adam: AdamBlock,
    pub swarm: SwarmBlock,
    pub refine: RefineBlock,
    pub sweep: Vec<f64>,
    /// Where artifacts land; has no effect on results, so it is left out of
    /// serialized summaries to keep reruns byte-identical.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    pub metric: MetricMode,
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            delimiter: ",".into(),
            split: SplitBlock::default(),
            seed: 42,
            factors: 20,
            lambda: 0.03,
            eta: 0.015,
            init_scale: 0.004,
            optimizer: Optimizer::Plfa,
            max_epochs: 100,
            tol: 1e-5,
            adam: AdamBlock::default(),
            swarm: SwarmBlock::default(),
            refine: RefineBlock::default(),
            sweep: vec![0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
            out_dir: PathBuf::from("out"),
            metric: MetricMode::Rmse,
            threads: None,
        }
    }
}

// seed stream ids
const STREAM_SPLIT: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_SWARM: u64 = 4;
const STREAM_REFINE: u64 = 5;

impl RunConfig {
    pub fn split_spec(&self) -> lfa::SplitSpec {
        lfa::SplitSpec {
            train_frac: self.split.train_frac,
            val_frac: self.split.val_frac,
            test_frac: self.split.test_frac,
            seed: mix_seed(self.seed, STREAM_SPLIT),
        }
    }

    pub fn init_seed(&self) -> u64 {
        mix_seed(self.seed, STREAM_INIT)
    }

    pub fn sgd_config(&self) -> SgdConfig {
        SgdConfig {
            eta: self.eta,
            lambda: self.lambda,
            max_epochs: self.max_epochs,
            tol: self.tol,
            seed: mix_seed(self.seed, STREAM_SHUFFLE),
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            alpha: self.adam.alpha,
            beta1: self.adam.beta1,
            beta2: self.adam.beta2,
            epsilon_hat: self.adam.epsilon_hat,
            lambda: self.lambda,
            max_epochs: self.max_epochs,
            tol: self.tol,
            seed: mix_seed(self.seed, STREAM_SHUFFLE),
        }
    }

    pub fn swarm_config(&self) -> SwarmConfig {
        SwarmConfig {
            size: self.swarm.size,
            omega_start: self.swarm.omega_start,
            omega_end: self.swarm.omega_end,
            gamma1: self.swarm.gamma1,
            gamma2: self.swarm.gamma2,
            rho: self.swarm.rho,
            eta_min: self.swarm.eta_min,
            eta_max: self.swarm.eta_max,
            vel_max_frac: self.swarm.vel_max_frac,
            max_rounds: self.swarm.max_rounds,
            patience: self.swarm.patience,
            tol: self.swarm.tol,
            seed: mix_seed(self.seed, STREAM_SWARM),
            metric: self.metric,
        }
    }

    pub fn refine_config(&self) -> RefineConfig {
        RefineConfig {
            al0: self.refine.al0,
            al_decay: self.refine.al_decay,
            al_min: self.refine.al_min,
            alpha: self.refine.alpha,
            beta1: self.refine.beta1,
            beta2: self.refine.beta2,
            epsilon_hat: self.refine.epsilon_hat,
            lambda: self.lambda,
            l1_weight: self.refine.l1_weight,
            metric_mode: self.metric,
            max_beetle_iters: self.refine.max_beetle_iters,
            beetle_tol: self.refine.beetle_tol,
            max_rounds: self.refine.max_rounds,
            seed: mix_seed(self.seed, STREAM_REFINE),
        }
    }
}
