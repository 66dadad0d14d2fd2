//! Finite-difference gradient verification.

use super::store::ParamStore;
use super::tape::{Tape, TapeError, Var};
use super::ONLINE_TAG;

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    /// Parameter name, flat index, analytic grad, FD grad at the worst spot.
    pub worst: Option<(String, usize, f64, f64)>,
    pub checked: usize,
}

/// Compares reverse-mode gradients against central finite differences for
/// every coordinate of every trainable parameter in `store`. The loss
/// closure must inject parameters via `tape.param(ONLINE_TAG, store, ..)`
/// and return a scalar, and must be deterministic given the store.
pub fn check_grads<F>(
    store: &mut ParamStore,
    loss: F,
    h: f64,
) -> Result<GradcheckReport, TapeError>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<Var, TapeError>,
{
    let mut tape = Tape::new();
    let l = loss(store, &mut tape)?;
    tape.backward(l)?;
    store.zero_grads();
    tape.accumulate_grads(ONLINE_TAG, store);
    let analytic: Vec<Vec<f64>> = store.entries().map(|e| e.grad.clone()).collect();
    let names: Vec<String> = store.entries().map(|e| e.name.clone()).collect();
    store.zero_grads();

    let mut report = GradcheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
    };
    for (pi, name) in names.iter().enumerate() {
        let n = analytic[pi].len();
        for j in 0..n {
            let orig = store.entry(pi).values[j];
            store.entry_mut(pi).values[j] = orig + h;
            let lp = eval(store, &loss)?;
            store.entry_mut(pi).values[j] = orig - h;
            let lm = eval(store, &loss)?;
            store.entry_mut(pi).values[j] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let an = analytic[pi][j];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1.0);
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((name.clone(), j, an, fd));
            }
        }
    }
    Ok(report)
}

fn eval<F>(store: &ParamStore, loss: &F) -> Result<f64, TapeError>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<Var, TapeError>,
{
    let mut tape = Tape::new();
    let l = loss(store, &mut tape)?;
    Ok(tape.scalar(l))
}
