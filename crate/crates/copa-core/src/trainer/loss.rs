//! Replay losses: the TD loss on the mixed team value and the variational
//! regularizer on broadcast strategies, unrolled over whole episodes.
//!
//! Each episode is processed on two tapes: the online tape carries
//! gradients; the target tape only produces bootstrap values (its store is
//! injected frozen, so nothing on it trains). Per-episode losses are
//! pre-scaled by batch-level normalizers so that summing per-episode
//! backward passes reproduces the batch-mean gradient exactly.

use crate::autodiff::{ParamStore, Tape, TapeError, Var, ONLINE_TAG, TARGET_TAG};
use crate::nets::{
    coach_attn_mask_raw, coach_forward, coach_team, entropy_sum, obs_factor,
    player_attn_mask_raw, player_step, pooled_log_density, sample_strategy, state_factor,
    mixer_forward, NetDims,
};

use super::replay::{EpisodeRecord, StepRecord};
use super::rollout::argmax_row;
use super::{TrainError, TrainerConfig};

/// Loss hyperparameters (the slice of [`TrainerConfig`] the loss needs).
#[derive(Clone, Copy, Debug)]
pub struct LossCfg {
    pub gamma: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub period: usize,
    pub coach_enabled: bool,
}

impl From<&TrainerConfig> for LossCfg {
    fn from(c: &TrainerConfig) -> Self {
        LossCfg {
            gamma: c.gamma,
            lambda1: c.lambda1,
            lambda2: c.lambda2,
            period: c.period,
            coach_enabled: c.coach_enabled,
        }
    }
}

/// Batch-level normalizers: reciprocals of the total transition count and
/// the total (tick, living agent) count across the batch. Zero disables the
/// corresponding term.
#[derive(Clone, Copy, Debug)]
pub struct LossNorms {
    pub inv_transitions: f64,
    pub inv_var_terms: f64,
}

/// Number of (tick, living agent) pairs an episode contributes to the
/// variational loss.
pub fn var_term_count(rec: &EpisodeRecord) -> usize {
    rec.ticks
        .iter()
        .map(|t| rec.steps[t.step].alive.iter().filter(|&&a| a).count())
        .sum()
}

pub struct EpisodeLossOut {
    /// Pre-normalized episode contribution to the batch loss.
    pub loss: Var,
    /// Raw Σ td² over the episode (metrics).
    pub td_sq_sum: f64,
    /// Raw Σ (−λ1·log q − λ2·H) over the episode's variational terms.
    pub var_sum: f64,
    pub n_transitions: usize,
    pub n_var_terms: usize,
    /// Per step, per living agent (slot order): replayed online Q of the
    /// stored action. Backs the off-policy replay-determinism check.
    pub q_replay: Vec<Vec<f64>>,
}

fn one_hot_rows(actions: &[i32], n_rows: usize, n_actions: usize) -> Vec<f64> {
    let mut v = vec![0.0; n_rows * n_actions];
    for (i, &a) in actions.iter().enumerate() {
        if a >= 0 {
            v[i * n_actions + a as usize] = 1.0;
        }
    }
    v
}

/// Row-broadcast 0/1 mask as a flat matrix.
fn row_mask(valid: &[bool], width: usize) -> Vec<f64> {
    let mut v = vec![0.0; valid.len() * width];
    for (i, &ok) in valid.iter().enumerate() {
        if ok {
            v[i * width..(i + 1) * width].fill(1.0);
        }
    }
    v
}

/// Living rows of `m` (shape `[n_rows, width]`) stacked in slot order, or
/// `m` unchanged when every slot is living.
fn living_rows(
    tape: &mut Tape,
    m: Var,
    living: &[usize],
    n_rows: usize,
) -> Result<Var, TapeError> {
    if living.len() == n_rows {
        return Ok(m);
    }
    let parts: Vec<Var> = living
        .iter()
        .map(|&i| tape.slice(m, i, 1, 0))
        .collect::<Result<_, _>>()?;
    tape.concat(&parts, 0)
}

/// Decoder input row for one agent at one step: own features, mean of the
/// feature rows it can see, and its action one-hot.
fn obs_factor_input(s: &StepRecord, slot: usize, n_slots: usize, d_e: usize, n_actions: usize) -> Vec<f64> {
    let mut inp = Vec::with_capacity(2 * d_e + n_actions);
    inp.extend_from_slice(&s.x_e[slot * d_e..(slot + 1) * d_e]);
    let mut mean = vec![0.0; d_e];
    let mut seen = 0.0;
    for j in 0..n_slots {
        if s.m[slot * n_slots + j] != 0.0 {
            seen += 1.0;
            for (d, m) in mean.iter_mut().enumerate() {
                *m += s.x_e[j * d_e + d];
            }
        }
    }
    if seen > 0.0 {
        for m in &mut mean {
            *m /= seen;
        }
    }
    inp.extend_from_slice(&mean);
    let mut oh = vec![0.0; n_actions];
    if s.actions[slot] >= 0 {
        oh[s.actions[slot] as usize] = 1.0;
    }
    inp.extend_from_slice(&oh);
    inp
}

/// Unrolls one episode on both tapes and returns the pre-normalized loss
/// contribution plus raw sums for metrics.
///
/// Replay semantics mirror collection: broadcast strategies refresh at
/// every tick (training gate threshold is zero), hidden state and strategy
/// rows are zeroed for slots that are empty or changed occupant, and target
/// bootstrap values use per-agent greedy actions mixed monotonically —
/// exact joint greedy by monotonicity of the mixer.
#[allow(clippy::too_many_arguments)]
pub fn episode_loss(
    tape: &mut Tape,
    tgt_tape: &mut Tape,
    online: &ParamStore,
    target: &ParamStore,
    dims: &NetDims,
    cfg: &LossCfg,
    rec: &EpisodeRecord,
    norms: &LossNorms,
) -> Result<EpisodeLossOut, TrainError> {
    rec.validate(cfg.period)?;
    let len = rec.len();
    let n_ag = rec.steps[0].alive.len();
    let n_slots = rec.steps[0].m.len() / n_ag;
    let d_e = rec.steps[0].x_e.len() / n_slots;
    if d_e != dims.d_e {
        return Err(TrainError::BadRecord(format!(
            "record feature width {d_e} does not match model width {}",
            dims.d_e
        )));
    }
    let n_actions = dims.n_actions;
    let (d_h, d_z) = (dims.d_h, dims.d_z);
    let want_var = cfg.coach_enabled && norms.inv_var_terms > 0.0;

    let mut h_on = tape.leaf((n_ag, d_h), vec![0.0; n_ag * d_h]);
    let mut h_tg = tgt_tape.leaf((n_ag, d_h), vec![0.0; n_ag * d_h]);
    let mut z_win: Option<(Var, Var)> = None; // (online, target) tick draws
    let mut tick_alive: Vec<bool> = vec![false; n_ag];
    let mut tick_ids: Vec<u64> = vec![0; n_ag];

    let mut qtots: Vec<Var> = Vec::with_capacity(len);
    let mut qtot_tg_vals: Vec<f64> = Vec::with_capacity(len);
    let mut logq_sum: Option<Var> = None;
    let mut ent_sum: Option<Var> = None;
    let mut n_var_terms = 0usize;
    let mut q_replay: Vec<Vec<f64>> = Vec::with_capacity(len);

    for t in 0..len {
        let s = &rec.steps[t];
        let living: Vec<usize> = (0..n_ag).filter(|&i| s.alive[i]).collect();
        if living.is_empty() {
            return Err(TrainError::BadRecord(format!("no living agents at step {t}")));
        }
        let pmask = player_attn_mask_raw(&s.m, n_ag, n_slots, &s.alive);
        let cmask = coach_attn_mask_raw(&s.m_star, n_ag, n_slots, &s.alive);
        let x_on = tape.leaf((n_slots, d_e), s.x_e.clone());
        let x_tg = tgt_tape.leaf((n_slots, d_e), s.x_e.clone());

        // Team embedding every step; strategy heads only at ticks.
        let is_tick = t % cfg.period == 0;
        let (h_team_on, h_team_tg) = if is_tick && cfg.coach_enabled {
            let tk = &rec.ticks[rec.tick_for(t, cfg.period)];
            let out_on = coach_forward(tape, ONLINE_TAG, online, true, dims, x_on, &cmask, n_ag)?;
            let eps_on = tape.leaf((n_ag, d_z), tk.eps.clone());
            let z_on = sample_strategy(tape, out_on.mu, out_on.logvar, eps_on)?;
            let out_tg =
                coach_forward(tgt_tape, TARGET_TAG, target, false, dims, x_tg, &cmask, n_ag)?;
            let eps_tg = tgt_tape.leaf((n_ag, d_z), tk.eps.clone());
            let z_tg = sample_strategy(tgt_tape, out_tg.mu, out_tg.logvar, eps_tg)?;
            z_win = Some((z_on, z_tg));
            tick_alive.copy_from_slice(&s.alive);
            tick_ids.copy_from_slice(&s.agent_ids);

            if want_var {
                // Strategy entropy over living agents.
                let lv_liv = living_rows(tape, out_on.logvar, &living, n_ag)?;
                let ent = entropy_sum(tape, lv_liv);
                ent_sum = Some(match ent_sum {
                    Some(acc) => tape.add(acc, ent)?,
                    None => ent,
                });

                // State factor, shared by every agent at this tick.
                let mut xu = Vec::with_capacity(n_slots * (d_e + n_actions));
                for j in 0..n_slots {
                    xu.extend_from_slice(&s.x_e[j * d_e..(j + 1) * d_e]);
                    let mut oh = vec![0.0; n_actions];
                    if j < n_ag && s.actions[j] >= 0 {
                        oh[s.actions[j] as usize] = 1.0;
                    }
                    xu.extend_from_slice(&oh);
                }
                let exists: Vec<bool> =
                    (0..n_slots).map(|j| s.m_star[j * n_slots + j] != 0.0).collect();
                let n_exist = exists.iter().filter(|&&e| e).count().max(1);
                let pool_w: Vec<f64> = exists
                    .iter()
                    .map(|&e| if e { 1.0 / n_exist as f64 } else { 0.0 })
                    .collect();
                let xu_leaf = tape.leaf((n_slots, d_e + n_actions), xu);
                let sf = state_factor(tape, ONLINE_TAG, online, true, xu_leaf, &pool_w)?;

                // Pooled posterior per living agent over the tick window.
                for &i in &living {
                    let id = s.agent_ids[i];
                    let mut factors = vec![sf];
                    let hi = (t + cfg.period - 1).min(len - 1);
                    for sk in &rec.steps[t + 1..=hi] {
                        if !sk.alive[i] || sk.agent_ids[i] != id {
                            break;
                        }
                        let inp = obs_factor_input(sk, i, n_slots, d_e, n_actions);
                        let inp = tape.leaf((1, 2 * d_e + n_actions), inp);
                        factors.push(obs_factor(tape, ONLINE_TAG, online, true, inp)?);
                    }
                    let z_row = tape.slice(z_win.unwrap().0, i, 1, 0)?;
                    let lq = pooled_log_density(tape, &factors, z_row)?;
                    logq_sum = Some(match logq_sum {
                        Some(acc) => tape.add(acc, lq)?,
                        None => lq,
                    });
                    n_var_terms += 1;
                }
            }
            (out_on.h_team, out_tg.h_team)
        } else {
            let on = coach_team(tape, ONLINE_TAG, online, true, dims, x_on, &cmask, n_ag)?;
            let tg = coach_team(tgt_tape, TARGET_TAG, target, false, dims, x_tg, &cmask, n_ag)?;
            if is_tick {
                // Coach disabled: strategies stay zero; window bookkeeping
                // still tracks the roster so masks stay consistent.
                tick_alive.copy_from_slice(&s.alive);
                tick_ids.copy_from_slice(&s.agent_ids);
            }
            (on, tg)
        };

        // Strategy rows valid only for the tick-time occupant.
        let (z_on, z_tg) = match z_win {
            Some((zw_on, zw_tg)) => {
                let valid: Vec<bool> = (0..n_ag)
                    .map(|i| s.alive[i] && tick_alive[i] && s.agent_ids[i] == tick_ids[i])
                    .collect();
                let mv = row_mask(&valid, d_z);
                let m_on = tape.leaf((n_ag, d_z), mv.clone());
                let m_tg = tgt_tape.leaf((n_ag, d_z), mv);
                (tape.mul(zw_on, m_on)?, tgt_tape.mul(zw_tg, m_tg)?)
            }
            None => (
                tape.leaf((n_ag, d_z), vec![0.0; n_ag * d_z]),
                tgt_tape.leaf((n_ag, d_z), vec![0.0; n_ag * d_z]),
            ),
        };

        // Hidden-state rows persist only while the same occupant holds the
        // slot (matching collection-time invalidation).
        if t > 0 {
            let prev = &rec.steps[t - 1];
            let keep: Vec<bool> = (0..n_ag)
                .map(|i| s.alive[i] && prev.alive[i] && s.agent_ids[i] == prev.agent_ids[i])
                .collect();
            let kv = row_mask(&keep, d_h);
            let k_on = tape.leaf((n_ag, d_h), kv.clone());
            let k_tg = tgt_tape.leaf((n_ag, d_h), kv);
            h_on = tape.mul(h_on, k_on)?;
            h_tg = tgt_tape.mul(h_tg, k_tg)?;
        }

        let prev_oh = one_hot_rows(&s.prev_actions, n_ag, n_actions);
        let poh_on = tape.leaf((n_ag, n_actions), prev_oh.clone());
        let poh_tg = tgt_tape.leaf((n_ag, n_actions), prev_oh);
        let po = player_step(
            tape, ONLINE_TAG, online, true, dims, x_on, &pmask, n_ag, poh_on, h_on, z_on,
        )?;
        h_on = po.h;
        let pt = player_step(
            tgt_tape, TARGET_TAG, target, false, dims, x_tg, &pmask, n_ag, poh_tg, h_tg, z_tg,
        )?;
        h_tg = pt.h;

        // Online mixed value of the actions actually taken.
        let mut qcols = Vec::with_capacity(living.len());
        for &i in &living {
            let row = tape.slice(po.q, i, 1, 0)?;
            let mut oh = vec![0.0; n_actions];
            oh[s.actions[i] as usize] = 1.0;
            let col = tape.leaf((n_actions, 1), oh);
            qcols.push(tape.matmul(row, col)?);
        }
        q_replay.push(qcols.iter().map(|&c| tape.scalar(c)).collect());
        let q_ag = tape.concat(&qcols, 1)?;
        let ht_liv = living_rows(tape, h_team_on, &living, n_ag)?;
        qtots.push(mixer_forward(tape, ONLINE_TAG, online, true, dims, q_ag, ht_liv)?);

        // Target mixed value of per-agent greedy actions.
        let qv = tgt_tape.values(pt.q);
        let amax: Vec<f64> = living
            .iter()
            .map(|&i| {
                let row = &qv[i * n_actions..(i + 1) * n_actions];
                row[argmax_row(row)]
            })
            .collect();
        let q_ag_tg = tgt_tape.leaf((1, living.len()), amax);
        let ht_liv_tg = living_rows(tgt_tape, h_team_tg, &living, n_ag)?;
        let qtot_tg =
            mixer_forward(tgt_tape, TARGET_TAG, target, false, dims, q_ag_tg, ht_liv_tg)?;
        qtot_tg_vals.push(tgt_tape.scalar(qtot_tg));
    }

    // One-step targets: r + γ·max Q̄ of the next step, r alone at the end.
    let q_cat = tape.concat(&qtots, 1)?;
    let y: Vec<f64> = (0..len)
        .map(|t| {
            let s = &rec.steps[t];
            if s.done {
                s.reward
            } else {
                s.reward + cfg.gamma * qtot_tg_vals[t + 1]
            }
        })
        .collect();
    let y_leaf = tape.leaf((1, len), y);
    let diff = tape.sub(q_cat, y_leaf)?;
    let sq = tape.square(diff);
    let td_sq = tape.sum(sq);

    let mut loss = tape.scale(td_sq, norms.inv_transitions);
    let mut var_sum = 0.0;
    if let Some(lq) = logq_sum {
        var_sum -= cfg.lambda1 * tape.scalar(lq);
        let term = tape.scale(lq, -cfg.lambda1 * norms.inv_var_terms);
        loss = tape.add(loss, term)?;
    }
    if let Some(es) = ent_sum {
        var_sum -= cfg.lambda2 * tape.scalar(es);
        let term = tape.scale(es, -cfg.lambda2 * norms.inv_var_terms);
        loss = tape.add(loss, term)?;
    }

    Ok(EpisodeLossOut {
        loss,
        td_sq_sum: tape.scalar(td_sq),
        var_sum,
        n_transitions: len,
        n_var_terms,
        q_replay,
    })
}
