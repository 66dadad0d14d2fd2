//! Strategy broadcast scheduling: the fixed-period, ℓ2-gated delivery rule,
//! communication-frequency accounting, and the performance-bound calculator
//! with its tabular verification harness.

pub mod bound;

#[cfg(test)]
mod tests;

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CommsError {
    #[error("invalid comms config: {0}")]
    InvalidConfig(String),
    #[error("tick called at step {step}, not a multiple of period {period}")]
    OffTick { step: usize, period: usize },
    #[error("discount {0} outside [0, 1)")]
    BadDiscount(f64),
    #[error("bound inputs must be nonnegative: {0}")]
    NegativeInput(&'static str),
    #[error("tabular MDP too large: {0}")]
    MdpTooLarge(String),
}

/// Broadcast schedule: a fresh strategy is proposed every `period` steps and
/// delivered only when it moved at least `beta` (ℓ2) from the last delivery.
#[derive(Clone, Copy, Debug)]
pub struct CommsConfig {
    pub period: usize,
    pub beta: f64,
    pub d_z: usize,
}

impl CommsConfig {
    pub fn new(period: usize, beta: f64, d_z: usize) -> Result<Self, CommsError> {
        if period < 1 {
            return Err(CommsError::InvalidConfig("period must be ≥ 1".into()));
        }
        if !(beta >= 0.0) {
            return Err(CommsError::InvalidConfig(format!("beta {beta} must be ≥ 0")));
        }
        if d_z == 0 {
            return Err(CommsError::InvalidConfig("d_z must be ≥ 1".into()));
        }
        Ok(CommsConfig { period, beta, d_z })
    }
}

/// Outcome of one gate decision for one agent.
#[derive(Clone, Debug)]
pub struct Delivery {
    pub agent_id: u64,
    /// Strategy in force after the tick: the fresh proposal if it was
    /// delivered, the previous delivery otherwise — never a third value.
    pub z: Vec<f64>,
    pub sent: bool,
}

/// Per-agent last-delivered strategies plus the counters behind the
/// communication frequency `f`. Newborn agents start from the zero vector
/// and pass through the same gate as everyone else.
#[derive(Clone, Debug)]
pub struct StrategyLedger {
    d_z: usize,
    z_old: HashMap<u64, Vec<f64>>,
    last_delivery: HashMap<u64, usize>,
    pub deliveries: u64,
    pub ticks: u64,
    pub agent_steps: u64,
}

impl StrategyLedger {
    pub fn new(d_z: usize) -> Self {
        StrategyLedger {
            d_z,
            z_old: HashMap::new(),
            last_delivery: HashMap::new(),
            deliveries: 0,
            ticks: 0,
            agent_steps: 0,
        }
    }

    /// Records one environment step for `living` agents (they each consumed
    /// a strategy this step) and creates zero-vector entries for ids not yet
    /// seen.
    pub fn note_step(&mut self, living: &[u64]) {
        self.agent_steps += living.len() as u64;
        for &id in living {
            self.z_old.entry(id).or_insert_with(|| vec![0.0; self.d_z]);
        }
    }

    /// Strategy currently in force for an agent (zero vector before any
    /// delivery).
    pub fn z_for(&self, id: u64) -> Option<&[f64]> {
        self.z_old.get(&id).map(Vec::as_slice)
    }

    /// Applies the gate to freshly proposed strategies at a broadcast step.
    /// `proposals` holds one `(agent id, z)` pair per living agent; the
    /// proposal is delivered iff ‖z − z_old‖₂ ≥ β (boundary inclusive).
    pub fn tick(
        &mut self,
        step: usize,
        cfg: &CommsConfig,
        proposals: &[(u64, Vec<f64>)],
    ) -> Result<Vec<Delivery>, CommsError> {
        if step % cfg.period != 0 {
            return Err(CommsError::OffTick { step, period: cfg.period });
        }
        self.ticks += 1;
        let mut out = Vec::with_capacity(proposals.len());
        for (id, z_new) in proposals {
            debug_assert_eq!(z_new.len(), self.d_z);
            let old = self
                .z_old
                .entry(*id)
                .or_insert_with(|| vec![0.0; self.d_z]);
            let dist2: f64 = z_new
                .iter()
                .zip(old.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let sent = dist2.sqrt() >= cfg.beta;
            if sent {
                old.copy_from_slice(z_new);
                self.deliveries += 1;
                self.last_delivery.insert(*id, step);
            }
            out.push(Delivery {
                agent_id: *id,
                z: old.clone(),
                sent,
            });
        }
        Ok(out)
    }

    /// Communication frequency: deliveries per agent-step, so broadcasting
    /// to every agent every step is 1.
    pub fn frequency(&self) -> f64 {
        assert!(self.agent_steps > 0, "frequency needs at least one agent-step");
        self.deliveries as f64 / self.agent_steps as f64
    }

    /// Drops entries for agents no longer in the episode (their counters
    /// remain; only the per-agent state is released).
    pub fn retire(&mut self, id: u64) {
        self.z_old.remove(&id);
        self.last_delivery.remove(&id);
    }
}

/// Inputs of the performance bound for gated broadcasting.
#[derive(Clone, Copy, Debug)]
pub struct BoundInputs {
    pub n_a: usize,
    /// Lipschitz constant of per-agent utilities in the strategy argument.
    pub eta: f64,
    pub beta: f64,
    /// Sup-norm utility approximation error.
    pub kappa: f64,
    pub gamma: f64,
}

/// Worst-case value gap of greedy execution on stale-strategy utilities:
/// 2(n_a·η·β + κ)/(1 − γ).
pub fn theorem_bound(inputs: &BoundInputs) -> Result<f64, CommsError> {
    if !(0.0..1.0).contains(&inputs.gamma) {
        return Err(CommsError::BadDiscount(inputs.gamma));
    }
    if !(inputs.eta >= 0.0) {
        return Err(CommsError::NegativeInput("eta"));
    }
    if !(inputs.beta >= 0.0) {
        return Err(CommsError::NegativeInput("beta"));
    }
    if !(inputs.kappa >= 0.0) {
        return Err(CommsError::NegativeInput("kappa"));
    }
    Ok(2.0 * (inputs.n_a as f64 * inputs.eta * inputs.beta + inputs.kappa) / (1.0 - inputs.gamma))
}
