//! Frozen-policy evaluation: greedy rollouts over serialized scenario sets,
//! gate sweeps replayed on frozen proposal trajectories, and scripted
//! baselines (uniform-random, greedy expert, greedy matcher, exhaustive
//! oracle).
//!
//! Everything here is a pure function of its inputs: scenario files carry a
//! per-line seed, so re-running with the same checkpoint and set reproduces
//! every number bit-for-bit. Scenario evaluation parallelizes across
//! scenarios (ordering preserved); aggregation is single-threaded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::comms::{CommsConfig, StrategyLedger};
use crate::env::{Environment, MatrixEnv, Observation, RescueEnv, ResourceEnv, Scenario};
use crate::trainer::config::{EnvKind, RunConfig};
use crate::trainer::rollout::{rollout_episode, TickProposals, POLICY_STREAM_XOR};
use crate::trainer::{mix_seed, ModelBundle, TrainError, STREAM_EVAL, STREAM_SCENARIO};


/// Sample mean and standard error (n−1 variance); stderr is 0 for n < 2.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Zero-shot evaluation of a frozen model over a scenario set.
#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Per-scenario episode returns, in input order.
    pub returns: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
    pub deliveries: u64,
    pub agent_steps: u64,
    /// Delivered strategies per agent-step over the whole set.
    pub f: f64,
}

fn check_match(cfg: &RunConfig, bundle: &ModelBundle) -> Result<(), TrainError> {
    let env = cfg.make_env()?;
    let dims = cfg.net_dims(env.as_ref());
    if dims != bundle.dims {
        return Err(TrainError::Config(format!(
            "checkpoint dims {:?} do not match config dims {dims:?}",
            bundle.dims
        )));
    }
    Ok(())
}

fn run_over_set<T, F>(set: &[(u64, Scenario)], per_scenario: F) -> Result<Vec<T>, TrainError>
where
    T: Send,
    F: Fn(&(u64, Scenario)) -> Result<T, TrainError> + Sync + Send,
{
    if set.is_empty() {
        return Err(TrainError::Config("scenario set is empty".into()));
    }
    #[cfg(feature = "parallel")]
    {
        set.par_iter().map(per_scenario).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        set.iter().map(per_scenario).collect()
    }
}

/// Plays every scenario greedily (ε = 0) with the gate at `beta` and the
/// broadcast period from `cfg`, and aggregates returns and gate statistics.
pub fn evaluate(
    cfg: &RunConfig,
    bundle: &ModelBundle,
    set: &[(u64, Scenario)],
    beta: f64,
) -> Result<EvalReport, TrainError> {
    check_match(cfg, bundle)?;
    let comms = CommsConfig::new(cfg.trainer.period, beta, bundle.dims.d_z)?;
    let results = run_over_set(set, |(seed, scen)| {
        let mut env = cfg.make_env()?;
        let out = rollout_episode(
            env.as_mut(),
            scen,
            &bundle.online,
            &bundle.dims,
            &comms,
            cfg.trainer.coach_enabled,
            0.0,
            *seed,
        )?;
        Ok((out.record.ret, out.deliveries, out.agent_steps))
    })?;

    let returns: Vec<f64> = results.iter().map(|r| r.0).collect();
    let deliveries: u64 = results.iter().map(|r| r.1).sum();
    let agent_steps: u64 = results.iter().map(|r| r.2).sum();
    let (mean, stderr) = mean_stderr(&returns);
    let f = if agent_steps > 0 {
        deliveries as f64 / agent_steps as f64
    } else {
        0.0
    };
    Ok(EvalReport { returns, mean, stderr, deliveries, agent_steps, f })
}

/// One β of a gate sweep. `f_replay` re-runs the gate over proposal
/// trajectories frozen from a β = 0 pass, isolating the gate's effect from
/// behavioral drift; `mean_return`, `stderr` and `f_live` come from fresh
/// gated rollouts at this β.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub beta: f64,
    pub f_replay: f64,
    pub mean_return: f64,
    pub stderr: f64,
    pub f_live: f64,
}

/// Sweeps the broadcast gate over `betas`.
pub fn sweep_beta(
    cfg: &RunConfig,
    bundle: &ModelBundle,
    set: &[(u64, Scenario)],
    betas: &[f64],
) -> Result<Vec<SweepRow>, TrainError> {
    if !cfg.trainer.coach_enabled {
        return Err(TrainError::Config(
            "sweep-beta needs the coach enabled".into(),
        ));
    }
    if betas.is_empty() {
        return Err(TrainError::Config("no β values to sweep".into()));
    }
    check_match(cfg, bundle)?;
    let d_z = bundle.dims.d_z;

    // Reference pass: always-deliver rollouts, proposals frozen.
    let comms0 = CommsConfig::new(cfg.trainer.period, 0.0, d_z)?;
    let reference: Vec<(Vec<TickProposals>, u64)> = run_over_set(set, |(seed, scen)| {
        let mut env = cfg.make_env()?;
        let out = rollout_episode(
            env.as_mut(),
            scen,
            &bundle.online,
            &bundle.dims,
            &comms0,
            true,
            0.0,
            *seed,
        )?;
        Ok((out.proposals, out.agent_steps))
    })?;
    let total_agent_steps: u64 = reference.iter().map(|r| r.1).sum();

    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let comms = CommsConfig::new(cfg.trainer.period, beta, d_z)?;
        let mut deliveries = 0u64;
        for (ticks, _) in &reference {
            let mut ledger = StrategyLedger::new(d_z);
            for tick in ticks {
                let sent = ledger
                    .tick(tick.step, &comms, &tick.items)?
                    .iter()
                    .filter(|d| d.sent)
                    .count();
                deliveries += sent as u64;
            }
        }
        let f_replay = if total_agent_steps > 0 {
            deliveries as f64 / total_agent_steps as f64
        } else {
            0.0
        };
        let live = evaluate(cfg, bundle, set, beta)?;
        rows.push(SweepRow {
            beta,
            f_replay,
            mean_return: live.mean,
            stderr: live.stderr,
            f_live: live.f,
        });
    }
    Ok(rows)
}

/// Scripted reference policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselinePolicy {
    /// Uniform over actions for every living agent; valid everywhere.
    Random,
    /// Full-view collector heuristic; resource environment only.
    GreedyExpert,
    /// Skill/emergency sort-matching heuristic; rescue environment only.
    GreedyMatcher,
    /// Exhaustive optimal expected return; one-step matrix game only.
    Oracle,
}

impl BaselinePolicy {
    pub fn name(self) -> &'static str {
        match self {
            BaselinePolicy::Random => "random",
            BaselinePolicy::GreedyExpert => "greedy-expert",
            BaselinePolicy::GreedyMatcher => "greedy-matcher",
            BaselinePolicy::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "random" => Some(BaselinePolicy::Random),
            "greedy-expert" => Some(BaselinePolicy::GreedyExpert),
            "greedy-matcher" => Some(BaselinePolicy::GreedyMatcher),
            "oracle" => Some(BaselinePolicy::Oracle),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineReport {
    pub returns: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
}

fn play_episode<E, F>(
    env: &mut E,
    scen: &Scenario,
    seed: u64,
    mut act: F,
) -> Result<f64, TrainError>
where
    E: Environment + ?Sized,
    F: FnMut(&E, &Observation) -> Vec<usize>,
{
    let mut obs = env.reset(scen, seed)?;
    let mut ret = 0.0;
    for _ in 0..env.max_steps() {
        let actions = act(env, &obs);
        let result = env.step(&actions)?;
        ret += result.reward;
        obs = result.obs;
        if result.done {
            break;
        }
    }
    Ok(ret)
}

fn random_actions(obs: &Observation, n_actions: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..obs.n_agent_slots)
        .map(|i| if obs.alive[i] { rng.gen_range(0..n_actions) } else { 0 })
        .collect()
}

/// Plays a scripted baseline over the set. Greedy baselines are
/// deterministic given the per-line seeds; the random baseline draws its
/// actions from a stream derived from the same seeds.
pub fn run_baseline(
    cfg: &RunConfig,
    policy: BaselinePolicy,
    set: &[(u64, Scenario)],
) -> Result<BaselineReport, TrainError> {
    if set.is_empty() {
        return Err(TrainError::Config("scenario set is empty".into()));
    }
    let returns: Vec<f64> = match (cfg.env, policy) {
        (_, BaselinePolicy::Random) => {
            let mut out = Vec::with_capacity(set.len());
            for (seed, scen) in set {
                let mut env = cfg.make_env()?;
                let n_actions = env.n_actions();
                let mut rng = ChaCha8Rng::seed_from_u64(*seed ^ POLICY_STREAM_XOR);
                out.push(play_episode(env.as_mut(), scen, *seed, |_, obs| {
                    random_actions(obs, n_actions, &mut rng)
                })?);
            }
            out
        }
        (EnvKind::Resource, BaselinePolicy::GreedyExpert) => {
            let dist = cfg.distribution()?;
            let mut out = Vec::with_capacity(set.len());
            for (seed, scen) in set {
                let mut env = ResourceEnv::new(&dist);
                out.push(play_episode(&mut env, scen, *seed, |e, _| e.greedy_expert())?);
            }
            out
        }
        (EnvKind::Rescue, BaselinePolicy::GreedyMatcher) => {
            let dist = cfg.distribution()?;
            let mut out = Vec::with_capacity(set.len());
            for (seed, scen) in set {
                let mut env = RescueEnv::new(&dist);
                out.push(play_episode(&mut env, scen, *seed, |e, _| e.greedy_matcher())?);
            }
            out
        }
        (EnvKind::Matrix, BaselinePolicy::Oracle) => {
            set.iter().map(|(_, s)| MatrixEnv::optimal_value(s)).collect()
        }
        (env, policy) => {
            return Err(TrainError::Config(format!(
                "baseline `{}` is not defined for the {} environment",
                policy.name(),
                env.name(),
            )));
        }
    };
    let (mean, stderr) = mean_stderr(&returns);
    Ok(BaselineReport { returns, mean, stderr })
}

/// Draws `count` scenarios from the distribution selected by `cfg`
/// (environment, split, team-size overrides), pairing each with a derived
/// episode seed. The result is position-independent: item `i` depends only
/// on `(seed, i)`.
pub fn generate_scenario_set(
    cfg: &RunConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<(u64, Scenario)>, TrainError> {
    if count == 0 {
        return Err(TrainError::Config("scenario count must be positive".into()));
    }
    let dist = cfg.distribution()?;
    Ok((0..count as u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, STREAM_SCENARIO, i));
            let scen = cfg.env.sample_scenario(&dist, &mut rng);
            (mix_seed(seed, STREAM_EVAL, i), scen)
        })
        .collect())
}
