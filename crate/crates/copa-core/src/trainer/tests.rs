use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{check_grads, ParamStore, Tape};
use crate::comms::CommsConfig;
use crate::env::{rescue_train_distribution, Environment, RescueEnv, Scenario};
use crate::nets::gauss::{self, LN_2PI};
use crate::nets::{init_model, mixer_forward, NetDims};

use super::config::{EnvKind, RunConfig, Split};
use super::loss::{episode_loss, var_term_count, LossCfg, LossNorms};
use super::replay::{EpisodeRecord, ReplayBuffer, StepRecord, TickRecord};
use super::rollout::rollout_episode;
use super::run::{train, CollectSink};
use super::{mix_seed, ModelBundle, TrainerConfig, STREAM_BATCH, STREAM_EPISODE};

fn toy_dims() -> NetDims {
    NetDims {
        d_e: 5,
        d_h: 6,
        d_z: 3,
        n_actions: 4,
        n_heads: 2,
        mix_hidden: 5,
        dec_hidden: 6,
    }
}

/// Handcrafted episode over 3 agent slots and 2 extra entities; slot 2 dies
/// at `death_step` (pass `len` or more for a fixed roster). Structurally
/// identical to collected records: ticks carry noise for every slot,
/// previous actions reset on death, features zero for absent entities.
fn toy_record(dims: &NetDims, len: usize, period: usize, death_step: usize, seed: u64) -> EpisodeRecord {
    let n_ag = 3;
    let n_slots = 5;
    let d_e = dims.d_e;
    let na = dims.n_actions;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps = Vec::new();
    let mut ticks = Vec::new();
    let mut prev: Vec<i32> = vec![-1; n_ag];
    let mut ret = 0.0;
    for t in 0..len {
        let alive: Vec<bool> = (0..n_ag).map(|i| !(i == 2 && t >= death_step)).collect();
        let exist: Vec<bool> = (0..n_slots).map(|j| if j < n_ag { alive[j] } else { true }).collect();
        let x_e: Vec<f64> = (0..n_slots * d_e)
            .map(|k| if exist[k / d_e] { rng.gen_range(-1.0..1.0) } else { 0.0 })
            .collect();
        let mut m = vec![0.0; n_ag * n_slots];
        for i in 0..n_ag {
            if alive[i] {
                m[i * n_slots + i] = 1.0;
                m[i * n_slots + 3] = 1.0;
                if i == 0 && alive[1] {
                    m[i * n_slots + 1] = 1.0;
                }
            }
        }
        let mut m_star = vec![0.0; n_slots * n_slots];
        for a in 0..n_slots {
            for b in 0..n_slots {
                if exist[a] && exist[b] {
                    m_star[a * n_slots + b] = 1.0;
                }
            }
        }
        let actions: Vec<i32> = (0..n_ag)
            .map(|i| if alive[i] { rng.gen_range(0..na) as i32 } else { -1 })
            .collect();
        let reward = rng.gen_range(-1.0..1.0);
        ret += reward;
        if t % period == 0 {
            ticks.push(TickRecord {
                step: t,
                eps: (0..n_ag * dims.d_z).map(|_| rng.gen_range(-1.5..1.5)).collect(),
            });
        }
        let prev_t: Vec<i32> = (0..n_ag).map(|i| if alive[i] { prev[i] } else { -1 }).collect();
        steps.push(StepRecord {
            x_e,
            m,
            m_star,
            alive: alive.clone(),
            agent_ids: vec![101, 102, 103],
            prev_actions: prev_t,
            actions: actions.clone(),
            reward,
            done: t + 1 == len,
            q_chosen: vec![],
        });
        prev = actions;
    }
    EpisodeRecord {
        scenario: Scenario { n_a: n_ag, d_c: 1, chars: vec![0.5; n_ag] },
        seed,
        steps,
        ticks,
        ret,
    }
}

fn zero_store(dims: &NetDims) -> ParamStore {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    init_model(&mut store, &mut rng, dims);
    for i in 0..store.len() {
        store.entry_mut(i).values.fill(0.0);
    }
    store
}

fn stores_equal(a: &ParamStore, b: &ParamStore) -> bool {
    a.len() == b.len()
        && a.entries()
            .zip(b.entries())
            .all(|(x, y)| x.name == y.name && x.values == y.values)
}

// ---------------------------------------------------------------- schedule

#[test]
fn epsilon_schedule_hits_endpoints() {
    let cfg = TrainerConfig { total_steps: 100_000, ..TrainerConfig::default() };
    assert!((cfg.epsilon_at(0) - 1.0).abs() < 1e-12);
    // Floor reached at 80% of the run, held afterwards.
    let at_anneal = cfg.epsilon_at(80_000);
    assert!((at_anneal - 0.05).abs() < 1e-9, "ε at anneal end: {at_anneal}");
    assert_eq!(cfg.epsilon_at(90_000), 0.05);
    assert_eq!(cfg.epsilon_at(100_000), 0.05);
    // Strictly decreasing before the floor.
    let mut last = 2.0;
    for t in (0..80_000).step_by(5000) {
        let e = cfg.epsilon_at(t);
        assert!(e < last);
        last = e;
    }
}

// -------------------------------------------------------------------- loss

#[test]
fn zero_param_loss_matches_closed_form() {
    let dims = toy_dims();
    let period = 3;
    let rec = toy_record(&dims, 6, period, 99, 11);
    let store = zero_store(&dims);
    let cfg = LossCfg {
        gamma: 0.99,
        lambda1: 1e-3,
        lambda2: 1e-4,
        period,
        coach_enabled: true,
    };
    let n_var = var_term_count(&rec);
    assert_eq!(n_var, 6); // two ticks × three living agents
    let norms = LossNorms {
        inv_transitions: 1.0 / rec.len() as f64,
        inv_var_terms: 1.0 / n_var as f64,
    };
    let mut tape = Tape::new();
    let mut tgt = Tape::new();
    let out = episode_loss(&mut tape, &mut tgt, &store, &store, &dims, &cfg, &rec, &norms)
        .expect("loss");

    // All-zero networks: Q ≡ 0 ⇒ every TD error is its reward.
    let rl_expect: f64 = rec.steps.iter().map(|s| s.reward * s.reward).sum();
    assert!((out.td_sq_sum - rl_expect).abs() < 1e-12);

    // Coach heads at zero give μ = 0, log σ² = 0, so z = ε and every factor
    // is a unit Gaussian; the pooled posterior is exact in closed form.
    let d_z = dims.d_z;
    let mut logq_expect = 0.0;
    let mut ent_expect = 0.0;
    for tick in &rec.ticks {
        for a in 0..3 {
            let z = &tick.eps[a * d_z..(a + 1) * d_z];
            // State factor plus one observation factor per later window step.
            let n_factors = 1 + (rec.len() - 1 - tick.step).min(period - 1);
            let unit = (vec![0.0; d_z], vec![1.0; d_z]);
            let factors = vec![unit; n_factors];
            let (m, v) = gauss::pool_gaussians(&factors);
            logq_expect += gauss::log_density(&m, &v, z);
            ent_expect += 0.5 * d_z as f64 * (LN_2PI + 1.0);
        }
    }
    let var_expect = -cfg.lambda1 * logq_expect - cfg.lambda2 * ent_expect;
    assert!(
        (out.var_sum - var_expect).abs() < 1e-10,
        "var {} vs {}",
        out.var_sum,
        var_expect
    );
    let loss_expect = rl_expect / rec.len() as f64 + var_expect / n_var as f64;
    assert!((tape.scalar(out.loss) - loss_expect).abs() < 1e-10);
}

#[test]
fn lambda_zero_gives_zero_decoder_grads() {
    let dims = toy_dims();
    let rec = toy_record(&dims, 6, 3, 4, 17);
    let mut online = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    init_model(&mut online, &mut rng, &dims);
    let target = online.clone();
    let cfg = LossCfg { gamma: 0.99, lambda1: 0.0, lambda2: 0.0, period: 3, coach_enabled: true };
    let norms = LossNorms { inv_transitions: 1.0 / 6.0, inv_var_terms: 1.0 / 6.0 };
    let mut tape = Tape::new();
    let mut tgt = Tape::new();
    let out = episode_loss(&mut tape, &mut tgt, &online, &target, &dims, &cfg, &rec, &norms)
        .expect("loss");
    assert_eq!(out.var_sum, 0.0);
    tape.backward(out.loss).unwrap();
    online.zero_grads();
    tape.accumulate_grads(crate::autodiff::ONLINE_TAG, &mut online);
    for e in online.entries() {
        if e.name.starts_with("dec.") {
            assert!(e.grad.iter().all(|&g| g == 0.0), "{} got TD gradient", e.name);
        }
    }
    let any_player_grad = online
        .entries()
        .filter(|e| e.name.starts_with("player."))
        .any(|e| e.grad.iter().any(|&g| g != 0.0));
    assert!(any_player_grad, "TD loss produced no player gradients");
}

#[test]
fn episode_loss_gradcheck() {
    let dims = toy_dims();
    let period = 3;
    let rec = toy_record(&dims, 6, period, 4, 23);
    let cfg = LossCfg {
        gamma: 0.99,
        lambda1: 1e-2,
        lambda2: 1e-3,
        period,
        coach_enabled: true,
    };
    let n_var = var_term_count(&rec);
    let norms = LossNorms {
        inv_transitions: 1.0 / rec.len() as f64,
        inv_var_terms: 1.0 / n_var as f64,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut online = ParamStore::new();
    init_model(&mut online, &mut rng, &dims);
    let mut target = ParamStore::new();
    init_model(&mut target, &mut rng, &dims);
    let report = check_grads(
        &mut online,
        |store, tape| {
            let mut tgt = Tape::new();
            let out = episode_loss(tape, &mut tgt, store, &target, &dims, &cfg, &rec, &norms)
                .map_err(|e| match e {
                    super::TrainError::Tape(t) => t,
                    other => panic!("unexpected loss error: {other}"),
                })?;
            Ok(out.loss)
        },
        1e-5,
    )
    .expect("gradcheck");
    assert!(
        report.max_rel_err < 1e-5,
        "worst {:?} rel {}",
        report.worst,
        report.max_rel_err
    );
}

#[test]
fn decomposed_max_matches_joint_max() {
    // Monotone mixing ⇒ per-agent greedy actions maximize the mixed value.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..200 {
        let n_ag = 1 + (trial % 3);
        let na = 5;
        let dims = NetDims {
            d_e: 4,
            d_h: 6,
            d_z: 2,
            n_actions: na,
            n_heads: 2,
            mix_hidden: 4,
            dec_hidden: 6,
        };
        let mut store = ParamStore::new();
        crate::nets::mixer::init_mixer(&mut store, &mut rng, &dims);
        let h_team: Vec<f64> = (0..n_ag * dims.d_h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let q: Vec<f64> = (0..n_ag * na).map(|_| rng.gen_range(-2.0..2.0)).collect();

        let mix = |choice: &[usize]| -> f64 {
            let mut tape = Tape::new();
            let qv: Vec<f64> = choice.iter().enumerate().map(|(i, &a)| q[i * na + a]).collect();
            let qvar = tape.leaf((1, n_ag), qv);
            let ht = tape.leaf((n_ag, dims.d_h), h_team.clone());
            let out =
                mixer_forward(&mut tape, crate::autodiff::ONLINE_TAG, &store, false, &dims, qvar, ht)
                    .unwrap();
            tape.scalar(out)
        };

        let greedy: Vec<usize> = (0..n_ag)
            .map(|i| super::rollout::argmax_row(&q[i * na..(i + 1) * na]))
            .collect();
        let greedy_val = mix(&greedy);

        let mut best = f64::NEG_INFINITY;
        let mut joint = vec![0usize; n_ag];
        loop {
            best = best.max(mix(&joint));
            let mut k = 0;
            while k < n_ag {
                joint[k] += 1;
                if joint[k] < na {
                    break;
                }
                joint[k] = 0;
                k += 1;
            }
            if k == n_ag {
                break;
            }
        }
        assert_eq!(greedy_val, best, "trial {trial}");
    }
}

// ------------------------------------------------------------------ replay

#[test]
fn buffer_eviction_is_episode_atomic() {
    let dims = toy_dims();
    let mut buf = ReplayBuffer::new(100);
    for k in 0..10 {
        buf.push(toy_record(&dims, 30, 3, 99, k));
    }
    assert!(buf.transitions() <= 100);
    assert_eq!(buf.transitions() % 30, 0, "partial episode stored");
    assert_eq!(buf.episodes(), 3);
    // Oldest evicted first: survivors are the three most recent seeds.
    let seeds: Vec<u64> = buf.iter().map(|e| e.seed).collect();
    assert_eq!(seeds, vec![7, 8, 9]);
}

#[test]
fn sample_batch_covers_requested_transitions() {
    let dims = toy_dims();
    let mut buf = ReplayBuffer::new(1000);
    for k in 0..20 {
        buf.push(toy_record(&dims, 10, 5, 99, k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch = buf.sample_batch(&mut rng, 35);
    let total: usize = batch.iter().map(|e| e.len()).sum();
    assert!(total >= 35);
    // Distinct episodes only.
    let mut seeds: Vec<u64> = batch.iter().map(|e| e.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    assert_eq!(seeds.len(), batch.len());
}

#[test]
fn validate_rejects_malformed_records() {
    let dims = toy_dims();
    let good = toy_record(&dims, 6, 3, 99, 1);
    assert!(good.validate(3).is_ok());

    let mut wrong_tick = good.clone();
    wrong_tick.ticks[1].step = 2;
    assert!(wrong_tick.validate(3).is_err());

    let mut early_done = good.clone();
    early_done.steps[2].done = true;
    assert!(early_done.validate(3).is_err());

    let mut missing_tick = good.clone();
    missing_tick.ticks.pop();
    assert!(missing_tick.validate(3).is_err());

    let empty = EpisodeRecord {
        scenario: good.scenario.clone(),
        seed: 0,
        steps: vec![],
        ticks: vec![],
        ret: 0.0,
    };
    assert!(empty.validate(3).is_err());
}

// ----------------------------------------------------------------- rollout

#[test]
fn rollout_is_deterministic() {
    let dist = rescue_train_distribution();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let scenario = RescueEnv::sample_scenario(&dist, &mut rng);
    let mut env = RescueEnv::new(&dist);
    let dims = NetDims::new(env.d_e(), env.n_actions()).with_width(8).with_d_z(4);
    let mut store = ParamStore::new();
    init_model(&mut store, &mut ChaCha8Rng::seed_from_u64(4), &dims);
    let comms = CommsConfig::new(4, 0.0, dims.d_z).unwrap();

    let a = rollout_episode(&mut env, &scenario, &store, &dims, &comms, true, 0.3, 555).unwrap();
    let b = rollout_episode(&mut env, &scenario, &store, &dims, &comms, true, 0.3, 555).unwrap();
    assert_eq!(a.record.len(), b.record.len());
    assert_eq!(a.record.ret, b.record.ret);
    for (sa, sb) in a.record.steps.iter().zip(&b.record.steps) {
        assert_eq!(sa.actions, sb.actions);
        assert_eq!(sa.q_chosen, sb.q_chosen);
        assert_eq!(sa.x_e, sb.x_e);
    }
    for (ta, tb) in a.record.ticks.iter().zip(&b.record.ticks) {
        assert_eq!(ta.eps, tb.eps);
    }
    assert_eq!(a.deliveries, b.deliveries);
}

#[test]
fn rollout_frequency_is_inverse_period_on_fixed_roster() {
    let dist = rescue_train_distribution();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let scenario = RescueEnv::sample_scenario(&dist, &mut rng);
    let mut env = RescueEnv::new(&dist);
    let dims = NetDims::new(env.d_e(), env.n_actions()).with_width(8).with_d_z(4);
    let mut store = ParamStore::new();
    init_model(&mut store, &mut ChaCha8Rng::seed_from_u64(4), &dims);
    let comms = CommsConfig::new(4, 0.0, dims.d_z).unwrap();
    let out = rollout_episode(&mut env, &scenario, &store, &dims, &comms, true, 1.0, 123).unwrap();
    // Rescue runs exactly 100 steps with a fixed roster: 25 ticks, every
    // living agent served at each (β = 0).
    assert_eq!(out.record.len(), 100);
    let f = out.deliveries as f64 / out.agent_steps as f64;
    assert_eq!(f, 0.25);
    // Coach disabled: no deliveries at all.
    let out2 = rollout_episode(&mut env, &scenario, &store, &dims, &comms, false, 1.0, 123).unwrap();
    assert_eq!(out2.deliveries, 0);
}

#[test]
fn greedy_rollout_with_zero_nets_picks_first_action() {
    let dist = rescue_train_distribution();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let scenario = RescueEnv::sample_scenario(&dist, &mut rng);
    let mut env = RescueEnv::new(&dist);
    let dims = NetDims::new(env.d_e(), env.n_actions()).with_width(8).with_d_z(4);
    let store = zero_store(&dims);
    let comms = CommsConfig::new(4, 0.0, dims.d_z).unwrap();
    let out = rollout_episode(&mut env, &scenario, &store, &dims, &comms, true, 0.0, 42).unwrap();
    for s in &out.record.steps {
        for (i, &a) in s.actions.iter().enumerate() {
            if s.alive[i] {
                assert_eq!(a, 0);
            }
        }
    }
}

#[test]
fn replay_reproduces_rollout_q_values() {
    let dist = rescue_train_distribution();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let scenario = RescueEnv::sample_scenario(&dist, &mut rng);
    let mut env = RescueEnv::new(&dist);
    let dims = NetDims::new(env.d_e(), env.n_actions()).with_width(8).with_d_z(4);
    let mut store = ParamStore::new();
    init_model(&mut store, &mut ChaCha8Rng::seed_from_u64(8), &dims);
    let comms = CommsConfig::new(4, 0.0, dims.d_z).unwrap();
    let out = rollout_episode(&mut env, &scenario, &store, &dims, &comms, true, 0.4, 777).unwrap();

    let cfg = LossCfg { gamma: 0.99, lambda1: 1e-3, lambda2: 1e-4, period: 4, coach_enabled: true };
    let norms = LossNorms { inv_transitions: 1.0, inv_var_terms: 1.0 };
    let mut tape = Tape::new();
    let mut tgt = Tape::new();
    let replay =
        episode_loss(&mut tape, &mut tgt, &store, &store, &dims, &cfg, &out.record, &norms)
            .expect("replay");
    assert_eq!(replay.q_replay.len(), out.record.len());
    for (t, (rq, step)) in replay.q_replay.iter().zip(&out.record.steps).enumerate() {
        assert_eq!(rq.len(), step.q_chosen.len(), "step {t}");
        for (a, (x, y)) in rq.iter().zip(&step.q_chosen).enumerate() {
            assert!(
                (x - y).abs() <= 1e-10,
                "step {t} agent {a}: replay {x} vs rollout {y}"
            );
        }
    }
}

// ------------------------------------------------------------------- train

fn tiny_matrix_config(total_steps: u64, coach: bool) -> RunConfig {
    RunConfig {
        env: EnvKind::Matrix,
        split: Split::Train,
        n_agents_lo: 2,
        n_agents_hi: 3,
        rescue_sight: 0,
        d_h: 8,
        d_z: 4,
        n_heads: 2,
        trainer: TrainerConfig {
            batch: 16,
            buffer_capacity: 256,
            workers: 2,
            total_steps,
            update_ratio: 4,
            target_interval: 10,
            metrics_interval: 50,
            coach_enabled: coach,
            ..TrainerConfig::default()
        },
    }
}

#[test]
fn train_zero_steps_returns_initial_bundle() {
    let cfg = tiny_matrix_config(0, true);
    let mut sink = CollectSink::default();
    let out = train(&cfg, 99, None, &mut sink).expect("train");
    assert!(out.rows.is_empty());
    assert_eq!(out.bundle.env_steps, 0);
    assert_eq!(out.bundle.updates, 0);
    let mut env = cfg.make_env().unwrap();
    let fresh = ModelBundle::init(cfg.net_dims(env.as_mut()), 99);
    assert!(stores_equal(&out.bundle.online, &fresh.online));
}

#[test]
fn train_smoke_on_matrix_and_metrics_are_deterministic() {
    let cfg = tiny_matrix_config(400, true);
    let mut s1 = CollectSink::default();
    let out1 = train(&cfg, 7, None, &mut s1).expect("train 1");
    assert!(out1.bundle.env_steps >= 400);
    assert!(out1.bundle.updates > 0);
    assert!(!out1.rows.is_empty());
    for row in &out1.rows {
        assert!(row.loss_rl.is_finite());
        assert!(row.loss_var.is_finite());
        // One-step episodes: every step is a tick, every living agent
        // served, so the realized broadcast frequency is exactly 1.
        assert_eq!(row.f, 1.0);
    }
    let mut s2 = CollectSink::default();
    let out2 = train(&cfg, 7, None, &mut s2).expect("train 2");
    assert_eq!(out1.rows.len(), out2.rows.len());
    for (a, b) in out1.rows.iter().zip(&out2.rows) {
        assert_eq!(a.step, b.step);
        assert_eq!(a.mean_return, b.mean_return);
        assert_eq!(a.loss_rl, b.loss_rl);
        assert_eq!(a.loss_var, b.loss_var);
        assert_eq!(a.f, b.f);
        assert_eq!(a.epsilon, b.epsilon);
    }
    assert!(stores_equal(&out1.bundle.online, &out2.bundle.online));

    // Coach-disabled ablation: no broadcasts, no variational loss.
    let cfg0 = tiny_matrix_config(200, false);
    let mut s3 = CollectSink::default();
    let out3 = train(&cfg0, 7, None, &mut s3).expect("ablation");
    for row in &out3.rows {
        assert_eq!(row.f, 0.0);
        assert_eq!(row.loss_var, 0.0);
    }
}

#[test]
fn target_changes_only_at_refresh() {
    // Never refreshed within the run: target stays at its initial clone.
    let mut cfg = tiny_matrix_config(200, true);
    cfg.trainer.target_interval = 1_000_000;
    let mut sink = CollectSink::default();
    let out = train(&cfg, 21, None, &mut sink).expect("train");
    let mut env = cfg.make_env().unwrap();
    let fresh = ModelBundle::init(cfg.net_dims(env.as_mut()), 21);
    assert!(stores_equal(&out.bundle.target, &fresh.online));
    assert!(!stores_equal(&out.bundle.online, &fresh.online));

    // Refreshed after every update: target tracks online exactly.
    let mut cfg2 = tiny_matrix_config(200, true);
    cfg2.trainer.target_interval = 1;
    let mut sink2 = CollectSink::default();
    let out2 = train(&cfg2, 21, None, &mut sink2).expect("train");
    assert!(stores_equal(&out2.bundle.target, &out2.bundle.online));
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let cfg = tiny_matrix_config(120, true);
    let mut sink = CollectSink::default();
    let out = train(&cfg, 33, None, &mut sink).expect("train");
    let ck = out.bundle.to_checkpoint();
    let mut buf = Vec::new();
    ck.write_to(&mut buf).expect("serialize");
    let back = crate::autodiff::checkpoint::Checkpoint::read_from(&mut buf.as_slice())
        .expect("deserialize");
    let restored = ModelBundle::from_checkpoint(back).expect("restore");
    assert_eq!(restored.dims, out.bundle.dims);
    assert_eq!(restored.env_steps, out.bundle.env_steps);
    assert_eq!(restored.updates, out.bundle.updates);
    assert_eq!(restored.episodes, out.bundle.episodes);
    assert!(stores_equal(&restored.online, &out.bundle.online));
    assert!(stores_equal(&restored.target, &out.bundle.target));
    // Optimizer state must survive too.
    for (a, b) in restored.online.entries().zip(out.bundle.online.entries()) {
        assert_eq!(a.rms, b.rms);
    }
}

#[test]
fn resume_continues_counters_and_schedule() {
    let cfg_half = tiny_matrix_config(150, true);
    let mut sink = CollectSink::default();
    let half = train(&cfg_half, 55, None, &mut sink).expect("first half");
    let resumed_from = half.bundle.env_steps;
    assert!(resumed_from >= 150);

    let cfg_full = tiny_matrix_config(300, true);
    let mut sink2 = CollectSink::default();
    let full = train(&cfg_full, 55, Some(half.bundle), &mut sink2).expect("second half");
    assert!(full.bundle.env_steps >= 300);
    assert!(full.bundle.env_steps > resumed_from);
    // ε depends only on the resumed step counter: partway through the
    // schedule, not restarted at 1.
    let eps_resumed = cfg_full.trainer.epsilon_at(resumed_from);
    assert!(eps_resumed < cfg_full.trainer.epsilon_at(0));
    assert!(eps_resumed > cfg_full.trainer.eps_end);
    // Mismatched architecture is rejected.
    let mut cfg_bad = tiny_matrix_config(400, true);
    cfg_bad.d_h = 16;
    let err = train(&cfg_bad, 55, Some(full.bundle), &mut CollectSink::default());
    assert!(err.is_err());
}

#[test]
fn divergence_guard_trips_on_huge_rewards() {
    // A reward scale of 1e9 makes the TD loss astronomically large from the
    // first update; the guard must abort instead of looping forever.
    let dims = toy_dims();
    let mut online = ParamStore::new();
    init_model(&mut online, &mut ChaCha8Rng::seed_from_u64(1), &dims);
    let target = online.clone();
    let mut rec = toy_record(&dims, 6, 3, 99, 3);
    for s in &mut rec.steps {
        s.reward = 1e9;
    }
    let cfg = LossCfg { gamma: 0.99, lambda1: 0.0, lambda2: 0.0, period: 3, coach_enabled: true };
    let norms = LossNorms { inv_transitions: 1.0 / 6.0, inv_var_terms: 0.0 };
    let mut tape = Tape::new();
    let mut tgt = Tape::new();
    let out = episode_loss(&mut tape, &mut tgt, &online, &target, &dims, &cfg, &rec, &norms)
        .expect("loss");
    assert!(tape.scalar(out.loss) > super::DIVERGENCE_LOSS_LIMIT);
}

// ------------------------------------------------------------------ config

#[test]
fn config_parse_roundtrip() {
    let mut cfg = RunConfig::default();
    cfg.env = EnvKind::Rescue;
    cfg.d_h = 64;
    cfg.trainer.total_steps = 12345;
    cfg.trainer.lambda1 = 5e-3;
    cfg.trainer.coach_enabled = false;
    let text = cfg.to_text();
    let parsed = RunConfig::parse(&text).expect("parse");
    assert_eq!(parsed.to_text(), text);
}

#[test]
fn config_rejects_unknown_keys_and_bad_values() {
    let err = RunConfig::parse("env = resource\nbogus_key = 3\n").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("bogus_key"), "{msg}");
    assert!(msg.contains("line 2"), "{msg}");

    let err = RunConfig::parse("gamma = fast\n").unwrap_err();
    assert!(err.to_string().contains("gamma"));

    let err = RunConfig::parse("gamma\n").unwrap_err();
    assert!(err.to_string().contains("key = value"));

    // Comments and blank lines are fine.
    let ok = RunConfig::parse("# full line comment\n\nenv = matrix # trailing\nn_agents_lo = 2\nn_agents_hi = 4\n");
    assert!(ok.is_ok());

    // Validation failures surface as config errors.
    assert!(RunConfig::parse("gamma = 1.5\n").is_err());
    assert!(RunConfig::parse("d_h = 10\nn_heads = 4\n").is_err());
    assert!(RunConfig::parse("env = matrix\n").is_err(), "matrix needs agent counts");
}

#[test]
fn mix_seed_separates_streams() {
    let a = mix_seed(1, STREAM_EPISODE, 0);
    let b = mix_seed(1, STREAM_EPISODE, 1);
    let c = mix_seed(1, STREAM_BATCH, 0);
    let d = mix_seed(2, STREAM_EPISODE, 0);
    assert_ne!(a, b);
    assert_ne!(a, c);
    assert_ne!(a, d);
    assert_ne!(b, c);
}
