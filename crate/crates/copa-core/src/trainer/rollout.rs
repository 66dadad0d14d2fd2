//! Episode collection: ε-greedy players acting on the online networks,
//! with the coach broadcasting gated strategies on its fixed period.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, ONLINE_TAG};
use crate::autodiff::ParamStore;
use crate::comms::{CommsConfig, StrategyLedger};
use crate::env::{Environment, Scenario};
use crate::nets::{coach_attn_mask, coach_forward, player_attn_mask, player_step, NetDims};

use super::replay::{EpisodeRecord, StepRecord, TickRecord};
use super::TrainError;

/// Offset separating the policy RNG stream from the environment stream,
/// which both derive from the episode seed.
pub(crate) const POLICY_STREAM_XOR: u64 = 0x6a09e667f3bcc909;

/// Strategies the coach proposed at one broadcast step, before gating:
/// one `(agent id, z)` pair per living agent.
#[derive(Debug, Clone)]
pub struct TickProposals {
    pub step: usize,
    pub items: Vec<(u64, Vec<f64>)>,
}

pub struct RolloutOutcome {
    pub record: EpisodeRecord,
    /// Gate statistics aggregated over the episode.
    pub deliveries: u64,
    pub agent_steps: u64,
    pub ticks: u64,
    /// Pre-gate coach proposals, for replaying the gate at other thresholds.
    pub proposals: Vec<TickProposals>,
}

/// Draws `n` standard-normal values via Box-Muller.
pub fn standard_normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let u1: f64 = rng.gen::<f64>().max(1e-300);
        let u2: f64 = rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * u2;
        out.push(r * th.cos());
        out.push(r * th.sin());
    }
    out.truncate(n);
    out
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

/// First index of the row maximum (deterministic tie-breaking).
pub fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Plays one episode and returns its replay record plus gate statistics.
///
/// Determinism: the outcome is a pure function of (scenario, seed, store
/// values, config). The environment consumes `seed` directly; policy
/// exploration and strategy noise come from an offset stream of the same
/// seed, so neither perturbs the other.
#[allow(clippy::too_many_arguments)]
pub fn rollout_episode(
    env: &mut dyn Environment,
    scenario: &Scenario,
    store: &ParamStore,
    dims: &NetDims,
    comms: &CommsConfig,
    coach_enabled: bool,
    epsilon: f64,
    seed: u64,
) -> Result<RolloutOutcome, TrainError> {
    let mut policy_rng = ChaCha8Rng::seed_from_u64(seed ^ POLICY_STREAM_XOR);
    let mut obs = env.reset(scenario, seed)?;
    let n_agents = env.agent_slots();
    let n_actions = env.n_actions();
    let d_h = dims.d_h;
    let d_z = dims.d_z;

    let mut ledger = StrategyLedger::new(d_z);
    // Per-slot recurrent state and previous action, keyed to the occupant id
    // so both reset when a slot is vacated or re-occupied.
    let mut h = vec![0.0; n_agents * d_h];
    let mut h_ids: Vec<u64> = vec![0; n_agents];
    let mut prev_actions: Vec<i32> = vec![-1; n_agents];
    let mut known_ids: Vec<u64> = Vec::new();

    let mut steps: Vec<StepRecord> = Vec::new();
    let mut ticks: Vec<TickRecord> = Vec::new();
    let mut captured: Vec<TickProposals> = Vec::new();
    let mut ret = 0.0;

    for t in 0..env.max_steps() {
        // Invalidate recurrent state for slots whose occupant changed.
        for i in 0..n_agents {
            let occupied = obs.alive[i];
            let id = obs.agent_ids[i];
            if !occupied || id != h_ids[i] {
                h[i * d_h..(i + 1) * d_h].fill(0.0);
                prev_actions[i] = -1;
                h_ids[i] = if occupied { id } else { 0 };
            }
        }
        let living: Vec<u64> = (0..n_agents)
            .filter(|&i| obs.alive[i])
            .map(|i| obs.agent_ids[i])
            .collect();
        for &id in &known_ids {
            if !living.contains(&id) {
                ledger.retire(id);
            }
        }
        known_ids = living.clone();

        // Coach tick: propose fresh strategies, pass them through the gate.
        if t % comms.period == 0 {
            let eps_noise = standard_normals(&mut policy_rng, n_agents * d_z);
            if coach_enabled {
                let mut tape = Tape::new();
                let x = tape.leaf((obs.n_slots, obs.d_e), obs.x_e.clone());
                let mask = coach_attn_mask(&obs);
                let out = coach_forward(
                    &mut tape, ONLINE_TAG, store, false, dims, x, &mask, n_agents,
                )?;
                let mu = tape.values(out.mu);
                let lv = tape.values(out.logvar);
                let mut proposals = Vec::new();
                for i in 0..n_agents {
                    if !obs.alive[i] {
                        continue;
                    }
                    let z: Vec<f64> = (0..d_z)
                        .map(|j| {
                            let k = i * d_z + j;
                            mu[k] + (0.5 * lv[k]).exp() * eps_noise[k]
                        })
                        .collect();
                    proposals.push((obs.agent_ids[i], z));
                }
                ledger.tick(t, comms, &proposals)?;
                captured.push(TickProposals { step: t, items: proposals });
            }
            ticks.push(TickRecord { step: t, eps: eps_noise });
        }
        ledger.note_step(&living);

        // Player forward pass for every slot on a throwaway tape.
        let mut tape = Tape::new();
        let x = tape.leaf((obs.n_slots, obs.d_e), obs.x_e.clone());
        let mask = player_attn_mask(&obs);
        let prev_oh = tape.leaf(
            (n_agents, n_actions),
            one_hot_rows(&prev_actions, n_agents, n_actions),
        );
        let h_prev = tape.leaf((n_agents, d_h), h.clone());
        let mut z_vals = vec![0.0; n_agents * d_z];
        for i in 0..n_agents {
            if obs.alive[i] {
                if let Some(z) = ledger.z_for(obs.agent_ids[i]) {
                    z_vals[i * d_z..(i + 1) * d_z].copy_from_slice(z);
                }
            }
        }
        let z = tape.leaf((n_agents, d_z), z_vals);
        let step_out = player_step(
            &mut tape, ONLINE_TAG, store, false, dims, x, &mask, n_agents, prev_oh, h_prev, z,
        )?;
        let q = tape.values(step_out.q).to_vec();
        let h_next = tape.values(step_out.h).to_vec();

        // ε-greedy selection per living slot, in slot order.
        let mut actions_env = vec![0usize; n_agents];
        let mut actions_rec = vec![-1i32; n_agents];
        let mut q_chosen = Vec::new();
        for i in 0..n_agents {
            if !obs.alive[i] {
                continue;
            }
            let row = &q[i * n_actions..(i + 1) * n_actions];
            let a = if policy_rng.gen::<f64>() < epsilon {
                policy_rng.gen_range(0..n_actions)
            } else {
                argmax_row(row)
            };
            actions_env[i] = a;
            actions_rec[i] = a as i32;
            q_chosen.push(row[a]);
        }

        let fed_prev = prev_actions.clone();
        let result = env.step(&actions_env)?;
        ret += result.reward;
        steps.push(StepRecord {
            x_e: obs.x_e.clone(),
            m: obs.m.clone(),
            m_star: obs.m_star.clone(),
            alive: obs.alive.clone(),
            agent_ids: obs.agent_ids.clone(),
            prev_actions: fed_prev,
            actions: actions_rec.clone(),
            reward: result.reward,
            done: result.done,
            q_chosen,
        });

        h = h_next;
        for i in 0..n_agents {
            prev_actions[i] = actions_rec[i];
        }
        obs = result.obs;
        if steps.last().unwrap().done {
            break;
        }
    }

    let record = EpisodeRecord {
        scenario: scenario.clone(),
        seed,
        steps,
        ticks,
        ret,
    };
    record.validate(comms.period)?;
    Ok(RolloutOutcome {
        record,
        deliveries: ledger.deliveries,
        agent_steps: ledger.agent_steps,
        ticks: ledger.ticks,
        proposals: captured,
    })
}
