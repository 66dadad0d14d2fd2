use rand::Rng;

use crate::autodiff::{ParamStore, Tape, TapeError, Var};

use super::layers::{init_linear, init_mha, linear, mha};
use super::NetDims;

/// One player step: utility values and the advanced recurrent state.
pub struct PlayerStep {
    /// `[n_q, n_actions]` utilities Q^a(τ, ·).
    pub q: Var,
    /// `[n_q, d_h]` next GRU hidden state.
    pub h: Var,
}

/// Registers the player network (shared across agents): entity encoder,
/// attention block, GRU, and strategy-conditioned utility head.
pub fn init_player(store: &mut ParamStore, rng: &mut impl Rng, dims: &NetDims) {
    init_linear(store, rng, "player.enc", dims.d_e, dims.d_h);
    init_mha(store, rng, "player.mha", dims.d_h);
    let d_in = dims.gru_in();
    for gate in ["z", "r", "n"] {
        store.add_uniform(&format!("player.gru.w{gate}"), (d_in, dims.d_h), dims.d_h, rng);
        store.add_uniform(&format!("player.gru.u{gate}"), (dims.d_h, dims.d_h), dims.d_h, rng);
        store.add_uniform(&format!("player.gru.b{gate}"), (1, dims.d_h), dims.d_h, rng);
    }
    init_linear(store, rng, "player.q1", dims.d_h + dims.d_z, dims.d_h);
    init_linear(store, rng, "player.q2", dims.d_h, dims.n_actions);
}

/// Advances every agent slot one step. `x_e` is the `[n_s, d_e]` entity
/// matrix, `mask` the flattened `[n_q, n_s]` sight mask (see
/// [`super::player_attn_mask`]), `prev_onehot` the `[n_q, n_actions]`
/// one-hot of each agent's previous action, `h_prev` the `[n_q, d_h]`
/// carried hidden state, and `z` the `[n_q, d_z]` strategies in force.
#[allow(clippy::too_many_arguments)]
pub fn player_step(
    tape: &mut Tape,
    tag: usize,
    store: &ParamStore,
    trainable: bool,
    dims: &NetDims,
    x_e: Var,
    mask: &[f64],
    n_q: usize,
    prev_onehot: Var,
    h_prev: Var,
    z: Var,
) -> Result<PlayerStep, TapeError> {
    let enc = linear(tape, tag, store, trainable, "player.enc", x_e)?;
    let enc = tape.relu(enc);
    let queries = tape.slice(enc, 0, n_q, 0)?;
    let attn = mha(tape, tag, store, trainable, "player.mha", dims.n_heads, queries, enc, mask)?;

    let gru_x = tape.concat(&[attn, prev_onehot], 1)?;
    let p = |t: &mut Tape, n: &str| t.param(tag, store, &format!("player.gru.{n}"), trainable);
    let (wz, uz, bz) = (p(tape, "wz"), p(tape, "uz"), p(tape, "bz"));
    let (wr, ur, br) = (p(tape, "wr"), p(tape, "ur"), p(tape, "br"));
    let (wn, un, bn) = (p(tape, "wn"), p(tape, "un"), p(tape, "bn"));
    let h = tape.gru_cell(gru_x, h_prev, wz, uz, bz, wr, ur, br, wn, un, bn)?;

    let hz = tape.concat(&[h, z], 1)?;
    let hid = linear(tape, tag, store, trainable, "player.q1", hz)?;
    let hid = tape.relu(hid);
    let q = linear(tape, tag, store, trainable, "player.q2", hid)?;
    Ok(PlayerStep { q, h })
}
