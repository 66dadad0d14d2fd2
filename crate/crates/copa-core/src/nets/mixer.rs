use rand::Rng;

use crate::autodiff::{ParamStore, Tape, TapeError, Var};

use super::layers::{init_linear, linear};
use super::NetDims;

/// Registers the mixing hypernetwork. Per-agent weight rows come from each
/// agent's team encoding; the second-layer weights and both biases come from
/// the pooled encoding, with the final bias through a two-layer head.
pub fn init_mixer(store: &mut ParamStore, rng: &mut impl Rng, dims: &NetDims) {
    init_linear(store, rng, "mixer.w1", dims.d_h, dims.mix_hidden);
    init_linear(store, rng, "mixer.b1", dims.d_h, dims.mix_hidden);
    init_linear(store, rng, "mixer.w2", dims.d_h, dims.mix_hidden);
    init_linear(store, rng, "mixer.b2a", dims.d_h, dims.mix_hidden);
    init_linear(store, rng, "mixer.b2b", dims.mix_hidden, 1);
}

/// Combines per-agent utilities into Q^tot. `q_agents` is `[1, n]` (one
/// chosen utility per living agent) and `h_team` is `[n, d_h]` (their team
/// encodings, same order). Mixing weights pass through |·| so Q^tot is
/// monotone nondecreasing in every Q^a; biases are unconstrained.
pub fn mixer_forward(
    tape: &mut Tape,
    tag: usize,
    store: &ParamStore,
    trainable: bool,
    dims: &NetDims,
    q_agents: Var,
    h_team: Var,
) -> Result<Var, TapeError> {
    let n = tape.shape(h_team).0;
    assert_eq!(
        tape.shape(q_agents),
        (1, n),
        "one utility per team-encoding row"
    );
    assert_eq!(tape.shape(h_team).1, dims.d_h, "team-encoding width");

    let w1 = linear(tape, tag, store, trainable, "mixer.w1", h_team)?;
    let w1 = tape.abs(w1);

    let ones = tape.leaf((1, n), vec![1.0 / n as f64; n]);
    let pool = tape.matmul(ones, h_team)?;

    let b1 = linear(tape, tag, store, trainable, "mixer.b1", pool)?;
    let qw = tape.matmul(q_agents, w1)?;
    let hidden = tape.add(qw, b1)?;
    let hidden = tape.elu(hidden);

    let w2 = linear(tape, tag, store, trainable, "mixer.w2", pool)?;
    let w2 = tape.abs(w2);
    let hw = tape.mul(hidden, w2)?;
    let qtot = tape.sum(hw);

    let b2 = linear(tape, tag, store, trainable, "mixer.b2a", pool)?;
    let b2 = tape.relu(b2);
    let b2 = linear(tape, tag, store, trainable, "mixer.b2b", b2)?;
    tape.add(qtot, b2)
}
