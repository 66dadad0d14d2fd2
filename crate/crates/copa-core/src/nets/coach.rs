use rand::Rng;

use crate::autodiff::{ParamStore, Tape, TapeError, Var};

use super::layers::{init_linear, init_mha, linear, mha};
use super::NetDims;

/// Clamp range for the log-variance pre-activation; keeps σ² in
/// [e⁻⁵, e²] and entropy terms finite.
pub const LOGVAR_LO: f64 = -5.0;
pub const LOGVAR_HI: f64 = 2.0;

/// Per-agent strategy distribution and team embedding.
pub struct CoachOut {
    /// `[n_q, d_z]` Gaussian means μ^a.
    pub mu: Var,
    /// `[n_q, d_z]` clamped log-variances; σ² = exp(logvar).
    pub logvar: Var,
    /// `[n_q, d_h]` per-agent global encodings h^team.
    pub h_team: Var,
}

/// Registers the coach network: its own encoder and attention block plus the
/// Gaussian strategy head.
pub fn init_coach(store: &mut ParamStore, rng: &mut impl Rng, dims: &NetDims) {
    init_linear(store, rng, "coach.enc", dims.d_e, dims.d_h);
    init_mha(store, rng, "coach.mha", dims.d_h);
    init_linear(store, rng, "coach.mu", dims.d_h, dims.d_z);
    init_linear(store, rng, "coach.lv", dims.d_h, dims.d_z);
}

/// Omniscient per-agent team encodings: each agent-slot row attends over all
/// existing entities. `mask` comes from [`super::coach_attn_mask`].
pub fn coach_team(
    tape: &mut Tape,
    tag: usize,
    store: &ParamStore,
    trainable: bool,
    dims: &NetDims,
    x_e: Var,
    mask: &[f64],
    n_q: usize,
) -> Result<Var, TapeError> {
    let enc = linear(tape, tag, store, trainable, "coach.enc", x_e)?;
    let enc = tape.relu(enc);
    let queries = tape.slice(enc, 0, n_q, 0)?;
    mha(tape, tag, store, trainable, "coach.mha", dims.n_heads, queries, enc, mask)
}

/// Strategy head on top of the team embedding: per-agent (μ, log σ²).
pub fn coach_heads(
    tape: &mut Tape,
    tag: usize,
    store: &ParamStore,
    trainable: bool,
    h_team: Var,
) -> Result<(Var, Var), TapeError> {
    let mu = linear(tape, tag, store, trainable, "coach.mu", h_team)?;
    let lv = linear(tape, tag, store, trainable, "coach.lv", h_team)?;
    let lv = tape.clamp(lv, LOGVAR_LO, LOGVAR_HI);
    Ok((mu, lv))
}

/// Full coach pass: strategies plus team embedding.
#[allow(clippy::too_many_arguments)]
pub fn coach_forward(
    tape: &mut Tape,
    tag: usize,
    store: &ParamStore,
    trainable: bool,
    dims: &NetDims,
    x_e: Var,
    mask: &[f64],
    n_q: usize,
) -> Result<CoachOut, TapeError> {
    let h_team = coach_team(tape, tag, store, trainable, dims, x_e, mask, n_q)?;
    let (mu, logvar) = coach_heads(tape, tag, store, trainable, h_team)?;
    Ok(CoachOut { mu, logvar, h_team })
}

/// Reparameterized draw z = μ + σ·ε with σ = exp(logvar / 2). `eps` is a
/// `[n_q, d_z]` leaf of recorded standard-normal noise, so the draw is
/// differentiable through μ and logvar and replayable bit-exactly.
pub fn sample_strategy(tape: &mut Tape, mu: Var, logvar: Var, eps: Var) -> Result<Var, TapeError> {
    let half = tape.scale(logvar, 0.5);
    let sigma = tape.exp(half);
    let noise = tape.mul(sigma, eps)?;
    tape.add(mu, noise)
}

/// Σ over all rows and dims of the Gaussian entropy
/// ½·(logvar + ln 2πe) per coordinate; callers divide by the row count
/// for a mean.
pub fn entropy_sum(tape: &mut Tape, logvar: Var) -> Var {
    let (r, c) = tape.shape(logvar);
    let s = tape.sum(logvar);
    let s = tape.scale(s, 0.5);
    tape.add_scalar(s, 0.5 * (r * c) as f64 * (super::gauss::LN_2PI + 1.0))
}
