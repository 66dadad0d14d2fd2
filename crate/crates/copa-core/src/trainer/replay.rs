use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::Scenario;

use super::TrainError;

/// Everything recorded at one environment step, as seen at decision time.
#[derive(Clone, Debug)]
pub struct StepRecord {
    /// `n_slots × d_e` entity features.
    pub x_e: Vec<f64>,
    /// `n_agent_slots × n_slots` sight mask.
    pub m: Vec<f64>,
    /// `n_slots × n_slots` co-existence mask.
    pub m_star: Vec<f64>,
    /// Per agent slot: occupied?
    pub alive: Vec<bool>,
    /// Per agent slot: occupant id (bumps on respawn).
    pub agent_ids: Vec<u64>,
    /// Per agent slot: action taken at the previous step, −1 if none
    /// (episode start or freshly spawned).
    pub prev_actions: Vec<i32>,
    /// Per agent slot: action chosen this step, −1 for empty slots.
    pub actions: Vec<i32>,
    /// Team reward received for this step.
    pub reward: f64,
    /// True on the final step only.
    pub done: bool,
    /// Per living agent (slot order): rollout-time Q^a of the chosen action.
    /// Diagnostic payload backing the replay-determinism check.
    pub q_chosen: Vec<f64>,
}

/// Coach-tick payload: the reparameterization noise drawn at the tick. One
/// row per agent slot (dead slots carry unused noise so shapes are fixed).
#[derive(Clone, Debug)]
pub struct TickRecord {
    pub step: usize,
    /// `n_agent_slots × d_z` standard-normal draws.
    pub eps: Vec<f64>,
}

/// One complete episode: scenario, per-step records, and per-tick noise.
#[derive(Clone, Debug)]
pub struct EpisodeRecord {
    pub scenario: Scenario,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub ticks: Vec<TickRecord>,
    /// Undiscounted episode return.
    pub ret: f64,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Index into `ticks` of the tick governing `step`.
    pub fn tick_for(&self, step: usize, period: usize) -> usize {
        step / period
    }

    /// Checks the structural invariants: ticks exactly at steps ≡ 0 (mod
    /// period), consistent lengths, done flag only on the last step.
    pub fn validate(&self, period: usize) -> Result<(), TrainError> {
        if self.steps.is_empty() {
            return Err(TrainError::BadRecord("empty episode".into()));
        }
        let expect_ticks = self.steps.len().div_ceil(period);
        if self.ticks.len() != expect_ticks {
            return Err(TrainError::BadRecord(format!(
                "{} ticks for {} steps at period {period}",
                self.ticks.len(),
                self.steps.len()
            )));
        }
        for (i, tick) in self.ticks.iter().enumerate() {
            if tick.step != i * period {
                return Err(TrainError::BadRecord(format!(
                    "tick {i} recorded at step {}, expected {}",
                    tick.step,
                    i * period
                )));
            }
        }
        for (t, s) in self.steps.iter().enumerate() {
            if s.done != (t + 1 == self.steps.len()) {
                return Err(TrainError::BadRecord(format!("done flag wrong at step {t}")));
            }
        }
        Ok(())
    }
}

/// Ring of whole episodes capped by total transition count; eviction is
/// oldest-first and episode-atomic.
pub struct ReplayBuffer {
    episodes: VecDeque<EpisodeRecord>,
    capacity_transitions: usize,
    stored_transitions: usize,
}

impl ReplayBuffer {
    pub fn new(capacity_transitions: usize) -> Self {
        assert!(capacity_transitions > 0);
        ReplayBuffer {
            episodes: VecDeque::new(),
            capacity_transitions,
            stored_transitions: 0,
        }
    }

    pub fn push(&mut self, episode: EpisodeRecord) {
        assert!(
            episode.len() <= self.capacity_transitions,
            "episode longer than buffer capacity"
        );
        self.stored_transitions += episode.len();
        self.episodes.push_back(episode);
        while self.stored_transitions > self.capacity_transitions {
            let old = self.episodes.pop_front().expect("nonempty");
            self.stored_transitions -= old.len();
        }
    }

    pub fn episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn transitions(&self) -> usize {
        self.stored_transitions
    }

    pub fn iter(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.episodes.iter()
    }

    /// Samples distinct episodes uniformly until they cover at least
    /// `min_transitions` transitions (or the whole buffer if smaller).
    pub fn sample_batch(&self, rng: &mut ChaCha8Rng, min_transitions: usize) -> Vec<&EpisodeRecord> {
        let n = self.episodes.len();
        let mut order: Vec<usize> = (0..n).collect();
        // Partial Fisher-Yates: draw as many distinct indices as needed.
        let mut picked = Vec::new();
        let mut covered = 0;
        for i in 0..n {
            let j = rng.gen_range(i..n);
            order.swap(i, j);
            let ep = &self.episodes[order[i]];
            covered += ep.len();
            picked.push(ep);
            if covered >= min_transitions {
                break;
            }
        }
        picked
    }
}
