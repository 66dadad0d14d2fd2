//! End-to-end optimization: episode replay, ε-greedy rollout with periodic
//! strategy broadcast, the TD and variational losses, RMSprop updates with
//! target networks, and the training loop.

pub mod config;
pub mod loss;
pub mod replay;
pub mod rollout;
pub mod run;

#[cfg(test)]
mod tests;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{checkpoint::Checkpoint, ParamStore, TapeError};
use crate::comms::CommsError;
use crate::env::EnvError;
use crate::nets::{init_model, NetDims};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("tape: {0}")]
    Tape(#[from] TapeError),
    #[error("comms: {0}")]
    Comms(#[from] CommsError),
    #[error("malformed episode record: {0}")]
    BadRecord(String),
    #[error("training diverged at update {update}: loss {loss} above {limit} for {streak} consecutive updates")]
    Diverged {
        update: u64,
        loss: f64,
        limit: f64,
        streak: u32,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Optimization hyperparameters. Defaults follow the published training
/// setup; scaled-down runs override via the run config.
#[derive(Clone, Copy, Debug)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub lr: f64,
    pub rms_alpha: f64,
    pub rms_eps: f64,
    /// Minimum transitions per update batch.
    pub batch: usize,
    pub grad_clip: f64,
    /// Target refresh period in updates.
    pub target_interval: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Broadcast period T.
    pub period: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of total steps at which ε reaches its floor.
    pub eps_anneal_frac: f64,
    pub workers: usize,
    pub total_steps: u64,
    pub buffer_capacity: usize,
    /// Environment steps per gradient update.
    pub update_ratio: u64,
    pub coach_enabled: bool,
    pub metrics_interval: u64,
    /// Checkpoint every this many env steps; 0 = final only.
    pub checkpoint_interval: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            gamma: 0.99,
            lr: 3e-4,
            rms_alpha: 0.99,
            rms_eps: 1e-5,
            batch: 256,
            grad_clip: 10.0,
            target_interval: 200,
            lambda1: 1e-3,
            lambda2: 1e-4,
            period: 4,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_anneal_frac: 0.8,
            workers: 8,
            total_steps: 0,
            buffer_capacity: 100_000,
            update_ratio: 8,
            coach_enabled: true,
            metrics_interval: 1000,
            checkpoint_interval: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positives = [
            ("gamma", self.gamma),
            ("lr", self.lr),
            ("rms_alpha", self.rms_alpha),
            ("rms_eps", self.rms_eps),
            ("grad_clip", self.grad_clip),
            ("eps_start", self.eps_start),
            ("eps_end", self.eps_end),
            ("eps_anneal_frac", self.eps_anneal_frac),
        ];
        for (name, v) in positives {
            if !(v > 0.0) {
                return Err(TrainError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.gamma >= 1.0 {
            return Err(TrainError::Config(format!("gamma {} must be < 1", self.gamma)));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(TrainError::Config("lambda1/lambda2 must be ≥ 0".into()));
        }
        if !(0.0..=1.0).contains(&self.eps_end) || !(0.0..=1.0).contains(&self.eps_start) {
            return Err(TrainError::Config("ε endpoints must lie in [0, 1]".into()));
        }
        if self.eps_end > self.eps_start {
            return Err(TrainError::Config("eps_end must not exceed eps_start".into()));
        }
        if self.batch == 0
            || self.period == 0
            || self.workers == 0
            || self.buffer_capacity == 0
            || self.update_ratio == 0
            || self.target_interval == 0
            || self.metrics_interval == 0
        {
            return Err(TrainError::Config("counts must be positive".into()));
        }
        if self.buffer_capacity < self.batch {
            return Err(TrainError::Config(
                "buffer capacity smaller than batch size".into(),
            ));
        }
        Ok(())
    }

    /// Exponential ε schedule: ε(t) = max(floor, start·0.9999^(t·k)) with k
    /// calibrated so the floor is reached at `eps_anneal_frac` of total
    /// steps.
    pub fn epsilon_at(&self, env_steps: u64) -> f64 {
        if self.total_steps == 0 {
            return self.eps_end;
        }
        if self.eps_start <= self.eps_end {
            return self.eps_end;
        }
        let horizon = self.eps_anneal_frac * self.total_steps as f64;
        let base: f64 = 0.9999;
        let k = (self.eps_end / self.eps_start).ln() / (horizon * base.ln());
        let eps = self.eps_start * base.powf(env_steps as f64 * k);
        eps.max(self.eps_end)
    }
}

/// Divergence guard thresholds.
pub const DIVERGENCE_LOSS_LIMIT: f64 = 1e6;
pub const DIVERGENCE_STREAK: u32 = 100;

/// Stream tags for [`mix_seed`], keeping parameter init, episode rollouts,
/// and batch sampling on disjoint deterministic RNG streams.
pub const STREAM_INIT: u64 = 1;
pub const STREAM_EPISODE: u64 = 2;
pub const STREAM_BATCH: u64 = 3;
pub const STREAM_SCENARIO: u64 = 4;
pub const STREAM_EVAL: u64 = 5;

/// Online and target parameter stores plus run counters. The single online
/// store holds player, coach, mixer, and decoder parameters under their
/// name prefixes; the target store mirrors its layout and is refreshed by
/// full copy.
#[derive(Clone)]
pub struct ModelBundle {
    pub dims: NetDims,
    pub online: ParamStore,
    pub target: ParamStore,
    pub updates: u64,
    pub env_steps: u64,
    pub episodes: u64,
}

impl ModelBundle {
    pub fn init(dims: NetDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, STREAM_INIT, 0));
        let mut online = ParamStore::new();
        init_model(&mut online, &mut rng, &dims);
        let target = online.clone();
        ModelBundle {
            dims,
            online,
            target,
            updates: 0,
            env_steps: 0,
            episodes: 0,
        }
    }

    pub fn refresh_target(&mut self) {
        self.target.copy_values_from(&self.online);
    }

    /// Serializes stores, counters, and architecture into a checkpoint.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_u64("updates", self.updates);
        ck.set_u64("env_steps", self.env_steps);
        ck.set_u64("episodes", self.episodes);
        ck.set_u64("d_e", self.dims.d_e as u64);
        ck.set_u64("d_h", self.dims.d_h as u64);
        ck.set_u64("d_z", self.dims.d_z as u64);
        ck.set_u64("n_actions", self.dims.n_actions as u64);
        ck.set_u64("n_heads", self.dims.n_heads as u64);
        ck.set_u64("mix_hidden", self.dims.mix_hidden as u64);
        ck.set_u64("dec_hidden", self.dims.dec_hidden as u64);
        ck.push_store("online", self.online.clone());
        ck.push_store("target", self.target.clone());
        ck
    }

    pub fn from_checkpoint(mut ck: Checkpoint) -> Result<Self, TrainError> {
        let need = |ck: &Checkpoint, k: &str| {
            ck.u64(k)
                .ok_or_else(|| TrainError::Config(format!("checkpoint missing {k}")))
        };
        let dims = NetDims {
            d_e: need(&ck, "d_e")? as usize,
            d_h: need(&ck, "d_h")? as usize,
            d_z: need(&ck, "d_z")? as usize,
            n_actions: need(&ck, "n_actions")? as usize,
            n_heads: need(&ck, "n_heads")? as usize,
            mix_hidden: need(&ck, "mix_hidden")? as usize,
            dec_hidden: need(&ck, "dec_hidden")? as usize,
        };
        let updates = need(&ck, "updates")?;
        let env_steps = need(&ck, "env_steps")?;
        let episodes = need(&ck, "episodes")?;
        let online = ck
            .take_store("online")
            .ok_or_else(|| TrainError::Config("checkpoint missing online store".into()))?;
        let target = ck
            .take_store("target")
            .ok_or_else(|| TrainError::Config("checkpoint missing target store".into()))?;
        Ok(ModelBundle {
            dims,
            online,
            target,
            updates,
            env_steps,
            episodes,
        })
    }
}

/// Deterministic seed derivation for independent random streams
/// (SplitMix64 over the combined words).
pub fn mix_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut x = seed
        .wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add(stream.rotate_left(17))
        .wrapping_add(index.wrapping_mul(0xBF58476D1CE4E5B9));
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58476D1CE4E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}
