//! The training loop: rounds of worker episodes feeding the replay buffer,
//! interleaved with RMSprop updates at a fixed step-to-update ratio,
//! periodic target refreshes, and metrics emission.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, ONLINE_TAG};
use crate::comms::CommsConfig;

use super::config::RunConfig;
use super::loss::{episode_loss, var_term_count, LossCfg, LossNorms};
use super::replay::ReplayBuffer;
use super::rollout::rollout_episode;
use super::{
    mix_seed, ModelBundle, TrainError, DIVERGENCE_LOSS_LIMIT, DIVERGENCE_STREAK, STREAM_BATCH,
    STREAM_EPISODE, STREAM_SCENARIO,
};

/// One metrics emission, aggregated since the previous row.
#[derive(Clone, Copy, Debug)]
pub struct MetricsRow {
    pub step: u64,
    pub mean_return: f64,
    pub loss_rl: f64,
    pub loss_var: f64,
    /// Realized broadcast frequency: deliveries per agent-step.
    pub f: f64,
    pub epsilon: f64,
}

/// Receives metrics rows and periodic checkpoints as training progresses.
pub trait TrainSink {
    fn on_metrics(&mut self, row: &MetricsRow) {
        let _ = row;
    }
    fn on_checkpoint(&mut self, bundle: &ModelBundle) -> Result<(), TrainError> {
        let _ = bundle;
        Ok(())
    }
}

/// Sink that keeps everything in memory.
#[derive(Default)]
pub struct CollectSink {
    pub rows: Vec<MetricsRow>,
}

impl TrainSink for CollectSink {
    fn on_metrics(&mut self, row: &MetricsRow) {
        self.rows.push(*row);
    }
}

pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub rows: Vec<MetricsRow>,
}

/// Runs training to `total_steps` environment steps. Fully deterministic in
/// (config, seed, resume point): episode seeds and batch draws derive from
/// run counters, so a resumed run replays the exact step and ε schedule.
pub fn train(
    cfg: &RunConfig,
    seed: u64,
    resume: Option<ModelBundle>,
    sink: &mut dyn TrainSink,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let tc = cfg.trainer;
    let dist = cfg.distribution()?;
    let mut env = cfg.make_env()?;
    let dims = cfg.net_dims(env.as_ref());
    let mut bundle = match resume {
        Some(b) => {
            if b.dims != dims {
                return Err(TrainError::Config(format!(
                    "checkpoint dims {:?} do not match config dims {dims:?}",
                    b.dims
                )));
            }
            b
        }
        None => ModelBundle::init(dims, seed),
    };
    // Training broadcasts are ungated; β matters only for deployment.
    let comms = CommsConfig::new(tc.period, 0.0, dims.d_z)?;
    let loss_cfg = LossCfg::from(&tc);
    let mut buffer = ReplayBuffer::new(tc.buffer_capacity);

    let mut rows: Vec<MetricsRow> = Vec::new();
    let mut divergence_streak: u32 = 0;
    // Aggregates since the last metrics row.
    let mut acc_return = 0.0;
    let mut acc_episodes = 0u64;
    let mut acc_deliveries = 0u64;
    let mut acc_agent_steps = 0u64;
    let mut acc_rl = 0.0;
    let mut acc_var = 0.0;
    let mut acc_updates = 0u64;
    let mut next_metrics = bundle.env_steps / tc.metrics_interval + 1;
    let mut next_checkpoint = if tc.checkpoint_interval > 0 {
        bundle.env_steps / tc.checkpoint_interval + 1
    } else {
        u64::MAX
    };

    while bundle.env_steps < tc.total_steps {
        let epsilon = tc.epsilon_at(bundle.env_steps);

        // One round: `workers` episodes collected with frozen parameters.
        for _ in 0..tc.workers {
            let ep_idx = bundle.episodes;
            let mut scen_rng =
                ChaCha8Rng::seed_from_u64(mix_seed(seed, STREAM_SCENARIO, ep_idx));
            let scenario = cfg.env.sample_scenario(&dist, &mut scen_rng);
            let ep_seed = mix_seed(seed, STREAM_EPISODE, ep_idx);
            let out = rollout_episode(
                env.as_mut(),
                &scenario,
                &bundle.online,
                &dims,
                &comms,
                tc.coach_enabled,
                epsilon,
                ep_seed,
            )?;
            bundle.env_steps += out.record.len() as u64;
            bundle.episodes += 1;
            acc_return += out.record.ret;
            acc_episodes += 1;
            acc_deliveries += out.deliveries;
            acc_agent_steps += out.agent_steps;
            buffer.push(out.record);
        }

        // Catch up on owed updates at the configured step:update ratio.
        while bundle.updates < bundle.env_steps / tc.update_ratio {
            if buffer.transitions() < tc.batch {
                break;
            }
            let mut batch_rng =
                ChaCha8Rng::seed_from_u64(mix_seed(seed, STREAM_BATCH, bundle.updates));
            let batch = buffer.sample_batch(&mut batch_rng, tc.batch);
            let n_tr: usize = batch.iter().map(|e| e.len()).sum();
            let n_var: usize = if tc.coach_enabled {
                batch.iter().map(|e| var_term_count(e)).sum()
            } else {
                0
            };
            let norms = LossNorms {
                inv_transitions: 1.0 / n_tr as f64,
                inv_var_terms: if n_var > 0 { 1.0 / n_var as f64 } else { 0.0 },
            };

            bundle.online.zero_grads();
            let mut batch_loss = 0.0;
            let mut batch_rl = 0.0;
            let mut batch_var = 0.0;
            for rec in &batch {
                let mut tape = Tape::new();
                let mut tgt_tape = Tape::new();
                let out = episode_loss(
                    &mut tape,
                    &mut tgt_tape,
                    &bundle.online,
                    &bundle.target,
                    &dims,
                    &loss_cfg,
                    rec,
                    &norms,
                )?;
                tape.backward(out.loss)?;
                tape.accumulate_grads(ONLINE_TAG, &mut bundle.online);
                batch_loss += tape.scalar(out.loss);
                batch_rl += out.td_sq_sum;
                batch_var += out.var_sum;
            }
            bundle.online.clip_grad_norm(tc.grad_clip);
            bundle.online.rmsprop_step(tc.lr, tc.rms_alpha, tc.rms_eps);
            bundle.updates += 1;
            acc_updates += 1;
            acc_rl += batch_rl / n_tr as f64;
            acc_var += if n_var > 0 { batch_var / n_var as f64 } else { 0.0 };
            if bundle.updates % tc.target_interval == 0 {
                bundle.refresh_target();
            }
            if !(batch_loss <= DIVERGENCE_LOSS_LIMIT) {
                divergence_streak += 1;
                if divergence_streak >= DIVERGENCE_STREAK {
                    return Err(TrainError::Diverged {
                        update: bundle.updates,
                        loss: batch_loss,
                        limit: DIVERGENCE_LOSS_LIMIT,
                        streak: divergence_streak,
                    });
                }
            } else {
                divergence_streak = 0;
            }
        }

        if bundle.env_steps >= next_metrics * tc.metrics_interval {
            let row = MetricsRow {
                step: bundle.env_steps,
                mean_return: if acc_episodes > 0 {
                    acc_return / acc_episodes as f64
                } else {
                    0.0
                },
                loss_rl: if acc_updates > 0 { acc_rl / acc_updates as f64 } else { 0.0 },
                loss_var: if acc_updates > 0 { acc_var / acc_updates as f64 } else { 0.0 },
                f: if acc_agent_steps > 0 {
                    acc_deliveries as f64 / acc_agent_steps as f64
                } else {
                    0.0
                },
                epsilon,
            };
            sink.on_metrics(&row);
            rows.push(row);
            acc_return = 0.0;
            acc_episodes = 0;
            acc_deliveries = 0;
            acc_agent_steps = 0;
            acc_rl = 0.0;
            acc_var = 0.0;
            acc_updates = 0;
            next_metrics = bundle.env_steps / tc.metrics_interval + 1;
        }
        if tc.checkpoint_interval > 0 && bundle.env_steps >= next_checkpoint * tc.checkpoint_interval
        {
            sink.on_checkpoint(&bundle)?;
            next_checkpoint = bundle.env_steps / tc.checkpoint_interval + 1;
        }
    }

    Ok(TrainOutcome { bundle, rows })
}
