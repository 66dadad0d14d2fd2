use rand::Rng;

use crate::autodiff::{ParamStore, Tape, TapeError, Var};

/// Registers a linear layer `{name}.w` of `[d_in, d_out]` plus `{name}.b` of
/// `[1, d_out]`, both initialized uniformly in ±1/√d_in.
pub fn init_linear(store: &mut ParamStore, rng: &mut impl Rng, name: &str, d_in: usize, d_out: usize) {
    store.add_uniform(&format!("{name}.w"), (d_in, d_out), d_in, rng);
    store.add_uniform(&format!("{name}.b"), (1, d_out), d_in, rng);
}

/// Applies the linear layer registered under `name`: `x·W + b` with the bias
/// broadcast over rows.
pub fn linear(
    tape: &mut Tape,
    tag: usize,
    store: &ParamStore,
    trainable: bool,
    name: &str,
    x: Var,
) -> Result<Var, TapeError> {
    let w = tape.param(tag, store, &format!("{name}.w"), trainable);
    let b = tape.param(tag, store, &format!("{name}.b"), trainable);
    let xw = tape.matmul(x, w)?;
    tape.add(xw, b)
}

/// Registers the four projections of a multi-head attention block.
pub fn init_mha(store: &mut ParamStore, rng: &mut impl Rng, name: &str, d_h: usize) {
    for proj in ["q", "k", "v", "o"] {
        init_linear(store, rng, &format!("{name}.{proj}"), d_h, d_h);
    }
}

/// Multi-head scaled-dot-product attention. `queries` is `[n_q, d_h]`,
/// `keys` is `[n_s, d_h]` (also used as values), and `mask` is a flattened
/// `[n_q, n_s]` visibility matrix shared by all heads: entries equal to zero
/// are excluded from the softmax and contribute exactly nothing.
pub fn mha(
    tape: &mut Tape,
    tag: usize,
    store: &ParamStore,
    trainable: bool,
    name: &str,
    n_heads: usize,
    queries: Var,
    keys: Var,
    mask: &[f64],
) -> Result<Var, TapeError> {
    let d_h = tape.shape(queries).1;
    assert_eq!(d_h % n_heads, 0, "model dim {d_h} not divisible by {n_heads} heads");
    let d_k = d_h / n_heads;

    let q = linear(tape, tag, store, trainable, &format!("{name}.q"), queries)?;
    let k = linear(tape, tag, store, trainable, &format!("{name}.k"), keys)?;
    let v = linear(tape, tag, store, trainable, &format!("{name}.v"), keys)?;

    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = tape.slice(q, h * d_k, d_k, 1)?;
        let kh = tape.slice(k, h * d_k, d_k, 1)?;
        let vh = tape.slice(v, h * d_k, d_k, 1)?;
        let scores = tape.matmul_t(qh, false, kh, true)?;
        let scores = tape.scale(scores, 1.0 / (d_k as f64).sqrt());
        let probs = tape.softmax_masked(scores, mask)?;
        heads.push(tape.matmul(probs, vh)?);
    }
    let ctx = tape.concat(&heads, 1)?;
    linear(tape, tag, store, trainable, &format!("{name}.o"), ctx)
}
