use rand::Rng;

use crate::autodiff::{ParamStore, Tape, TapeError, Var};

use super::coach::{LOGVAR_LO, LOGVAR_HI};
use super::gauss::LN_2PI;
use super::layers::{init_linear, linear};
use super::NetDims;

/// Registers the two variational factor nets: the state factor conditioned
/// on the tick's global state and joint action, and the observation factor
/// conditioned on one agent's later observation and action.
pub fn init_decoder(store: &mut ParamStore, rng: &mut impl Rng, dims: &NetDims) {
    init_linear(store, rng, "dec.s.enc", dims.d_e + dims.n_actions, dims.dec_hidden);
    init_linear(store, rng, "dec.s.mu", dims.dec_hidden, dims.d_z);
    init_linear(store, rng, "dec.s.lv", dims.dec_hidden, dims.d_z);
    init_linear(store, rng, "dec.o.enc", 2 * dims.d_e + dims.n_actions, dims.dec_hidden);
    init_linear(store, rng, "dec.o.mu", dims.dec_hidden, dims.d_z);
    init_linear(store, rng, "dec.o.lv", dims.dec_hidden, dims.d_z);
}

fn heads(
    tape: &mut Tape,
    tag: usize,
    store: &ParamStore,
    trainable: bool,
    prefix: &str,
    pooled: Var,
) -> Result<(Var, Var), TapeError> {
    let mu = linear(tape, tag, store, trainable, &format!("{prefix}.mu"), pooled)?;
    let lv = linear(tape, tag, store, trainable, &format!("{prefix}.lv"), pooled)?;
    let lv = tape.clamp(lv, LOGVAR_LO, LOGVAR_HI);
    Ok((mu, lv))
}

/// State factor q⁽ᵗ⁾(z | s_t, u_t). `xu` is `[n_s, d_e + n_actions]`: the
/// entity matrix with each agent row's chosen action appended one-hot (zeros
/// on non-agent rows). `pool_w` is a `[1, n_s]` averaging row over existing
/// entities. Returns (μ, log σ²), each `[1, d_z]`.
pub fn state_factor(
    tape: &mut Tape,
    tag: usize,
    store: &ParamStore,
    trainable: bool,
    xu: Var,
    pool_w: &[f64],
) -> Result<(Var, Var), TapeError> {
    let n_s = tape.shape(xu).0;
    let enc = linear(tape, tag, store, trainable, "dec.s.enc", xu)?;
    let enc = tape.relu(enc);
    let w = tape.leaf((1, n_s), pool_w.to_vec());
    let pooled = tape.matmul(w, enc)?;
    heads(tape, tag, store, trainable, "dec.s", pooled)
}

/// Observation factor q⁽ᵏ⁾(z | o_k, u_k) for one agent at one later step.
/// `inp` is `[1, 2·d_e + n_actions]`: the agent's own feature row, the mean
/// of its visible entity rows, and its action one-hot.
pub fn obs_factor(
    tape: &mut Tape,
    tag: usize,
    store: &ParamStore,
    trainable: bool,
    inp: Var,
) -> Result<(Var, Var), TapeError> {
    let enc = linear(tape, tag, store, trainable, "dec.o.enc", inp)?;
    let enc = tape.relu(enc);
    heads(tape, tag, store, trainable, "dec.o", enc)
}

/// Log-density at `z` (a `[1, d_z]` leaf) of the renormalized product of
/// Gaussian factors given as (μ, log σ²) pairs: pooled precision is the sum
/// of factor precisions, pooled mean the precision-weighted average.
pub fn pooled_log_density(
    tape: &mut Tape,
    factors: &[(Var, Var)],
    z: Var,
) -> Result<Var, TapeError> {
    if factors.is_empty() {
        return Err(TapeError::ShapeMismatch {
            op: "pooled_log_density",
            detail: "empty factor set".into(),
        });
    }
    let d_z = tape.shape(z).1;
    let mut lam: Option<Var> = None;
    let mut mw: Option<Var> = None;
    for &(mu, lv) in factors {
        debug_assert_eq!(tape.shape(mu), (1, d_z));
        let neg = tape.scale(lv, -1.0);
        let prec = tape.exp(neg);
        let weighted = tape.mul(mu, prec)?;
        lam = Some(match lam {
            Some(l) => tape.add(l, prec)?,
            None => prec,
        });
        mw = Some(match mw {
            Some(m) => tape.add(m, weighted)?,
            None => weighted,
        });
    }
    let lam = lam.unwrap();
    let mw = mw.unwrap();

    let log_lam = tape.log(lam);
    let neg_log_lam = tape.scale(log_lam, -1.0);
    let inv_lam = tape.exp(neg_log_lam);
    let mean = tape.mul(mw, inv_lam)?;

    let diff = tape.sub(z, mean)?;
    let d2 = tape.square(diff);
    let quad = tape.mul(lam, d2)?;
    let half_log = tape.scale(log_lam, 0.5);
    let half_quad = tape.scale(quad, 0.5);
    let per_dim = tape.sub(half_log, half_quad)?;
    let total = tape.sum(per_dim);
    Ok(tape.add_scalar(total, -0.5 * LN_2PI * d_z as f64))
}
