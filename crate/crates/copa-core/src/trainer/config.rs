//! Flat `key = value` run configuration: environment choice, scenario
//! split, architecture widths, and optimization hyperparameters. Unknown
//! keys are rejected by name with their line number, and the canonical
//! serialization is stable so downstream tooling can hash it.

use rand_chacha::ChaCha8Rng;

use crate::env::{
    matrix_distribution, rescue_test_distribution, rescue_train_distribution,
    resource_test_distribution, resource_train_distribution, resource_varying_distribution,
    Environment, MatrixEnv, RescueEnv, ResourceEnv, Scenario, ScenarioDistribution,
};
use crate::nets::NetDims;

use super::{TrainError, TrainerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    Resource,
    Rescue,
    Matrix,
}

impl EnvKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::Resource => "resource",
            EnvKind::Rescue => "rescue",
            EnvKind::Matrix => "matrix",
        }
    }

    /// Draws a scenario from `dist` (dispatches to the task's sampler).
    pub fn sample_scenario(&self, dist: &ScenarioDistribution, rng: &mut ChaCha8Rng) -> Scenario {
        match self {
            EnvKind::Resource => ResourceEnv::sample_scenario(dist, rng),
            EnvKind::Rescue => RescueEnv::sample_scenario(dist, rng),
            EnvKind::Matrix => MatrixEnv::sample_scenario(dist, rng),
        }
    }
}

/// Which scenario distribution to draw from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    Varying,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Varying => "varying",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub env: EnvKind,
    pub split: Split,
    /// Agent-count overrides for test/matrix splits; 0 keeps the
    /// distribution default.
    pub n_agents_lo: usize,
    pub n_agents_hi: usize,
    /// Sight-radius override for the rescue task; 0 keeps the default.
    pub rescue_sight: usize,
    pub d_h: usize,
    pub d_z: usize,
    pub n_heads: usize,
    pub trainer: TrainerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvKind::Resource,
            split: Split::Train,
            n_agents_lo: 0,
            n_agents_hi: 0,
            rescue_sight: 0,
            d_h: 128,
            d_z: 16,
            n_heads: 4,
            trainer: TrainerConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.trainer.validate()?;
        if self.d_h == 0 || self.d_z == 0 || self.n_heads == 0 {
            return Err(TrainError::Config("widths must be positive".into()));
        }
        if self.d_h % self.n_heads != 0 {
            return Err(TrainError::Config(format!(
                "d_h {} not divisible by n_heads {}",
                self.d_h, self.n_heads
            )));
        }
        if (self.n_agents_lo == 0) != (self.n_agents_hi == 0) || self.n_agents_lo > self.n_agents_hi
        {
            return Err(TrainError::Config(
                "n_agents_lo/n_agents_hi must be set together, lo ≤ hi".into(),
            ));
        }
        if self.env == EnvKind::Matrix && self.n_agents_lo == 0 {
            return Err(TrainError::Config(
                "matrix env needs explicit n_agents_lo/n_agents_hi".into(),
            ));
        }
        Ok(())
    }

    /// The scenario distribution this run draws from.
    pub fn distribution(&self) -> Result<ScenarioDistribution, TrainError> {
        let mut dist = match (self.env, self.split) {
            (EnvKind::Resource, Split::Train) => resource_train_distribution(),
            (EnvKind::Resource, Split::Test) => {
                resource_test_distribution(self.n_agents_lo.max(4), self.n_agents_hi.max(4))
            }
            (EnvKind::Resource, Split::Varying) => resource_varying_distribution(),
            (EnvKind::Rescue, Split::Train) => rescue_train_distribution(),
            (EnvKind::Rescue, Split::Test) => {
                rescue_test_distribution(self.n_agents_lo.max(3), self.n_agents_hi.max(3))
            }
            (EnvKind::Matrix, _) => matrix_distribution(self.n_agents_lo, self.n_agents_hi),
            (EnvKind::Rescue, Split::Varying) => {
                return Err(TrainError::Config(
                    "rescue has no varying-composition split".into(),
                ))
            }
        };
        if self.n_agents_lo > 0 && self.split == Split::Train {
            dist.n_agents_lo = self.n_agents_lo;
            dist.n_agents_hi = self.n_agents_hi;
        }
        Ok(dist)
    }

    pub fn make_env(&self) -> Result<Box<dyn Environment>, TrainError> {
        let dist = self.distribution()?;
        Ok(match self.env {
            EnvKind::Resource => Box::new(ResourceEnv::new(&dist)),
            EnvKind::Rescue => {
                if self.rescue_sight > 0 {
                    Box::new(RescueEnv::with_sight(&dist, self.rescue_sight))
                } else {
                    Box::new(RescueEnv::new(&dist))
                }
            }
            EnvKind::Matrix => Box::new(MatrixEnv::new(&dist)),
        })
    }

    /// Network dimensions for this run against the given environment.
    pub fn net_dims(&self, env: &dyn Environment) -> NetDims {
        let mut dims = NetDims::new(env.d_e(), env.n_actions());
        dims.n_heads = self.n_heads;
        dims.with_width(self.d_h).with_d_z(self.d_z)
    }

    /// Canonical serialization: every key, fixed order. Stable input for
    /// run manifests and config hashes.
    pub fn to_text(&self) -> String {
        let t = &self.trainer;
        format!(
            "env = {}\nsplit = {}\nn_agents_lo = {}\nn_agents_hi = {}\nrescue_sight = {}\n\
             d_h = {}\nd_z = {}\nn_heads = {}\n\
             gamma = {}\nlr = {}\nrms_alpha = {}\nrms_eps = {}\nbatch = {}\ngrad_clip = {}\n\
             target_interval = {}\nlambda1 = {}\nlambda2 = {}\nperiod = {}\n\
             eps_start = {}\neps_end = {}\neps_anneal_frac = {}\nworkers = {}\n\
             total_steps = {}\nbuffer_capacity = {}\nupdate_ratio = {}\ncoach_enabled = {}\n\
             metrics_interval = {}\ncheckpoint_interval = {}\n",
            self.env.name(),
            self.split.name(),
            self.n_agents_lo,
            self.n_agents_hi,
            self.rescue_sight,
            self.d_h,
            self.d_z,
            self.n_heads,
            t.gamma,
            t.lr,
            t.rms_alpha,
            t.rms_eps,
            t.batch,
            t.grad_clip,
            t.target_interval,
            t.lambda1,
            t.lambda2,
            t.period,
            t.eps_start,
            t.eps_end,
            t.eps_anneal_frac,
            t.workers,
            t.total_steps,
            t.buffer_capacity,
            t.update_ratio,
            t.coach_enabled,
            t.metrics_interval,
            t.checkpoint_interval,
        )
    }

    /// Parses `key = value` lines; `#` starts a comment. Every key is
    /// optional and overrides the default.
    pub fn parse(text: &str) -> Result<RunConfig, TrainError> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                TrainError::Config(format!("line {line_no}: expected `key = value`, got `{line}`"))
            })?;
            let key = key.trim();
            let value = value.trim();
            if value.is_empty() {
                return Err(TrainError::Config(format!("line {line_no}: empty value for {key}")));
            }
            cfg.set(key, value)
                .map_err(|e| TrainError::Config(format!("line {line_no}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse::<T>().map_err(|_| format!("invalid value `{v}` for {key}"))
        }
        let t = &mut self.trainer;
        match key {
            "env" => {
                self.env = match value {
                    "resource" => EnvKind::Resource,
                    "rescue" => EnvKind::Rescue,
                    "matrix" => EnvKind::Matrix,
                    _ => return Err(format!("unknown env `{value}`")),
                }
            }
            "split" => {
                self.split = match value {
                    "train" => Split::Train,
                    "test" => Split::Test,
                    "varying" => Split::Varying,
                    _ => return Err(format!("unknown split `{value}`")),
                }
            }
            "n_agents_lo" => self.n_agents_lo = num(key, value)?,
            "n_agents_hi" => self.n_agents_hi = num(key, value)?,
            "rescue_sight" => self.rescue_sight = num(key, value)?,
            "d_h" => self.d_h = num(key, value)?,
            "d_z" => self.d_z = num(key, value)?,
            "n_heads" => self.n_heads = num(key, value)?,
            "gamma" => t.gamma = num(key, value)?,
            "lr" => t.lr = num(key, value)?,
            "rms_alpha" => t.rms_alpha = num(key, value)?,
            "rms_eps" => t.rms_eps = num(key, value)?,
            "batch" => t.batch = num(key, value)?,
            "grad_clip" => t.grad_clip = num(key, value)?,
            "target_interval" => t.target_interval = num(key, value)?,
            "lambda1" => t.lambda1 = num(key, value)?,
            "lambda2" => t.lambda2 = num(key, value)?,
            "period" => t.period = num(key, value)?,
            "eps_start" => t.eps_start = num(key, value)?,
            "eps_end" => t.eps_end = num(key, value)?,
            "eps_anneal_frac" => t.eps_anneal_frac = num(key, value)?,
            "workers" => t.workers = num(key, value)?,
            "total_steps" => t.total_steps = num(key, value)?,
            "buffer_capacity" => t.buffer_capacity = num(key, value)?,
            "update_ratio" => t.update_ratio = num(key, value)?,
            "coach_enabled" => {
                t.coach_enabled = match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(format!("invalid value `{value}` for coach_enabled")),
                }
            }
            "metrics_interval" => t.metrics_interval = num(key, value)?,
            "checkpoint_interval" => t.checkpoint_interval = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }
}
