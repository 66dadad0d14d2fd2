//! Learnable function approximators: player networks, coach, monotonic
//! mixer, and the variational decoder, all built on the tape in
//! [`crate::autodiff`].

pub mod coach;
pub mod decoder;
pub mod gauss;
pub mod layers;
pub mod mixer;
pub mod player;


pub use coach::{coach_forward, coach_heads, coach_team, entropy_sum, sample_strategy, CoachOut};
pub use decoder::{obs_factor, pooled_log_density, state_factor};
pub use mixer::mixer_forward;
pub use player::{player_step, PlayerStep};

use rand::Rng;

use crate::autodiff::ParamStore;
use crate::env::Observation;

/// Architecture widths shared by every network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetDims {
    /// Entity feature width (environment-specific).
    pub d_e: usize,
    /// Model width: encoder output, attention dim, GRU hidden size.
    pub d_h: usize,
    /// Strategy vector width.
    pub d_z: usize,
    /// Action count of the environment.
    pub n_actions: usize,
    /// Attention heads; must divide `d_h`.
    pub n_heads: usize,
    /// Hidden width of the mixing network.
    pub mix_hidden: usize,
    /// Hidden width of the decoder factor nets.
    pub dec_hidden: usize,
}

impl NetDims {
    /// Default widths: 128-wide model, 4 heads, d_z = 16, mixing hidden 32.
    pub fn new(d_e: usize, n_actions: usize) -> Self {
        NetDims {
            d_e,
            d_h: 128,
            d_z: 16,
            n_actions,
            n_heads: 4,
            mix_hidden: 32,
            dec_hidden: 64,
        }
    }

    /// Shrinks the model width (and decoder hidden) for scaled-down runs.
    pub fn with_width(mut self, d_h: usize) -> Self {
        assert_eq!(d_h % self.n_heads, 0);
        self.d_h = d_h;
        self.dec_hidden = (d_h / 2).max(8);
        self
    }

    pub fn with_d_z(mut self, d_z: usize) -> Self {
        self.d_z = d_z;
        self
    }

    /// GRU input width: attended features plus previous-action one-hot.
    pub fn gru_in(&self) -> usize {
        self.d_h + self.n_actions
    }
}

/// Registers every parameter of the model (player, coach, mixer, decoder)
/// into `store` in a fixed order.
pub fn init_model(store: &mut ParamStore, rng: &mut impl Rng, dims: &NetDims) {
    player::init_player(store, rng, dims);
    coach::init_coach(store, rng, dims);
    mixer::init_mixer(store, rng, dims);
    decoder::init_decoder(store, rng, dims);
}

/// Attention mask for the player networks: each agent-slot row is that
/// agent's sight mask over all entity slots. Rows of dead slots (all zero,
/// which a softmax cannot normalize) are replaced by self-attention only;
/// their outputs are never read and self-visibility keeps every living row
/// valid.
pub fn player_attn_mask(obs: &Observation) -> Vec<f64> {
    player_attn_mask_raw(&obs.m, obs.n_agent_slots, obs.n_slots, &obs.alive)
}

/// [`player_attn_mask`] from stored mask fields instead of a live
/// observation (replay of recorded episodes).
pub fn player_attn_mask_raw(
    m: &[f64],
    n_agent_slots: usize,
    n_slots: usize,
    alive: &[bool],
) -> Vec<f64> {
    patch_dead_rows(m.to_vec(), n_agent_slots, n_slots, alive)
}

/// Attention mask for the coach: agent-slot rows of the omniscient
/// co-existence mask, so every living agent attends to every existing
/// entity. Dead rows are patched as in [`player_attn_mask`].
pub fn coach_attn_mask(obs: &Observation) -> Vec<f64> {
    coach_attn_mask_raw(&obs.m_star, obs.n_agent_slots, obs.n_slots, &obs.alive)
}

/// [`coach_attn_mask`] from stored mask fields instead of a live
/// observation.
pub fn coach_attn_mask_raw(
    m_star: &[f64],
    n_agent_slots: usize,
    n_slots: usize,
    alive: &[bool],
) -> Vec<f64> {
    let mut m = Vec::with_capacity(n_agent_slots * n_slots);
    for i in 0..n_agent_slots {
        m.extend_from_slice(&m_star[i * n_slots..(i + 1) * n_slots]);
    }
    patch_dead_rows(m, n_agent_slots, n_slots, alive)
}

fn patch_dead_rows(mut m: Vec<f64>, n_rows: usize, n_cols: usize, alive: &[bool]) -> Vec<f64> {
    for (i, &a) in alive.iter().enumerate().take(n_rows) {
        if !a {
            let row = &mut m[i * n_cols..(i + 1) * n_cols];
            row.fill(0.0);
            row[i] = 1.0;
        }
    }
    m
}
