//! Cooperative environments over sets of characteristic entities.
//!
//! World state is a fixed set of entity *slots* (agent slots first). A slot
//! may be empty — masks carry existence, so network shapes stay constant
//! while the roster changes mid-episode. Each environment fixes its own
//! feature layout `[characteristics | position | velocity | type | status]`
//! and documents it at the layout constants.

mod matrix;
mod rescue;
mod resource;

pub use matrix::{matrix_distribution, MatrixEnv, MATRIX_D_C, MATRIX_D_E};
pub use rescue::{
    rescue_test_distribution, rescue_train_distribution, RescueEnv, RESCUE_D_C, RESCUE_D_E,
};
pub use resource::{
    resource_test_distribution, resource_train_distribution, resource_varying_distribution,
    ResourceEnv, RESOURCE_D_C, RESOURCE_D_E,
};

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid action {action} for agent slot {agent}")]
    InvalidAction { agent: usize, action: usize },
    #[error("step called on a finished episode")]
    EpisodeDone,
    #[error("scenario line {line}: {msg}")]
    BadLine { line: usize, msg: String },
}

/// A team composition plus world instance: the multiset of characteristic
/// vectors of every *living* entity, agents first. Entities share one
/// characteristic width `d_c` split into an agent part and a non-agent part;
/// at most one part is nonzero per entity.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n_a: usize,
    pub d_c: usize,
    /// `n_e * d_c` row-major characteristic values, living entities only.
    pub chars: Vec<f64>,
}

impl Scenario {
    pub fn n_e(&self) -> usize {
        self.chars.len() / self.d_c
    }

    pub fn entity(&self, i: usize) -> &[f64] {
        &self.chars[i * self.d_c..(i + 1) * self.d_c]
    }
}

/// How agent characteristics are drawn.
#[derive(Debug, Clone)]
pub enum CharDist {
    Choice(Vec<f64>),
    Interval(f64, f64),
}

impl CharDist {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            CharDist::Choice(xs) => xs[rng.gen_range(0..xs.len())],
            CharDist::Interval(lo, hi) => rng.gen_range(*lo..*hi),
        }
    }
}

/// Mid-episode roster dynamics: every ν steps (ν ~ U{lo..hi}, redrawn after
/// each trigger) one agent is added or dropped, staying within bounds.
#[derive(Debug, Clone)]
pub struct RosterDynamics {
    pub interval_lo: u32,
    pub interval_hi: u32,
    pub min_agents: usize,
    pub max_agents: usize,
}

/// Distribution over scenarios: team size range, per-dimension agent
/// characteristic draws, environment-specific extra entity count range
/// (e.g. initial fires), and optional roster dynamics.
#[derive(Debug, Clone)]
pub struct ScenarioDistribution {
    pub n_agents_lo: usize,
    pub n_agents_hi: usize,
    pub agent_chars: Vec<CharDist>,
    pub extra_lo: usize,
    pub extra_hi: usize,
    pub roster: Option<RosterDynamics>,
}

impl ScenarioDistribution {
    pub fn sample_n_agents(&self, rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(self.n_agents_lo..=self.n_agents_hi)
    }

    pub fn sample_agent_chars(&self, out: &mut Vec<f64>, rng: &mut ChaCha8Rng) {
        for d in &self.agent_chars {
            out.push(d.sample(rng));
        }
    }

    /// Agent slot capacity implied by this distribution (roster bound or
    /// static team-size upper bound).
    pub fn agent_capacity(&self) -> usize {
        self.roster
            .as_ref()
            .map(|r| r.max_agents)
            .unwrap_or(self.n_agents_hi)
    }
}

/// One step of the world as the networks see it: slot-indexed entity
/// features with observability and existence masks.
#[derive(Debug, Clone)]
pub struct Observation {
    pub n_agent_slots: usize,
    pub n_slots: usize,
    pub d_e: usize,
    /// `n_slots * d_e`, agents-first; rows of empty slots are zero.
    pub x_e: Vec<f64>,
    /// `n_agent_slots * n_slots` observability mask; row i marks what the
    /// agent in slot i sees (empty slots: all-zero row). A living agent
    /// always sees itself.
    pub m: Vec<f64>,
    /// `n_slots * n_slots` co-existence mask: 1 iff both slots are occupied.
    pub m_star: Vec<f64>,
    /// Per agent slot: stable id of the occupant, bumped on respawn so
    /// downstream state (strategies, hidden states) can be invalidated.
    pub agent_ids: Vec<u64>,
    /// Per agent slot: occupied?
    pub alive: Vec<bool>,
}

impl Observation {
    pub fn alive_entities(&self) -> Vec<bool> {
        (0..self.n_slots)
            .map(|j| self.m_star[j * self.n_slots + j] != 0.0)
            .collect()
    }

    /// Omniscient variant: every living agent sees every living entity.
    pub fn full_view_mask(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_agent_slots * self.n_slots];
        for i in 0..self.n_agent_slots {
            if !self.alive[i] {
                continue;
            }
            for j in 0..self.n_slots {
                m[i * self.n_slots + j] = self.m_star[j * self.n_slots + j];
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub reward: f64,
    pub done: bool,
    pub obs: Observation,
    /// Current composition after any roster change this step.
    pub scenario: Scenario,
}

/// Common step contract. Joint actions are slot-indexed; entries for empty
/// agent slots are ignored.
pub trait Environment {
    fn d_e(&self) -> usize;
    fn d_c(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn agent_slots(&self) -> usize;
    fn n_slots(&self) -> usize;
    fn max_steps(&self) -> usize;
    fn reset(&mut self, scenario: &Scenario, seed: u64) -> Result<Observation, EnvError>;
    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError>;
    fn scenario(&self) -> Scenario;
}

/// Shared roster-trigger clock.
#[derive(Debug, Clone)]
pub struct RosterClock {
    dyn_cfg: Option<RosterDynamics>,
    next_trigger: u64,
}

impl RosterClock {
    pub fn new(dyn_cfg: Option<RosterDynamics>, rng: &mut ChaCha8Rng) -> Self {
        let next_trigger = dyn_cfg
            .as_ref()
            .map(|d| draw_interval(d, rng))
            .unwrap_or(u64::MAX);
        RosterClock { dyn_cfg, next_trigger }
    }

    /// Returns `Some(addition?)` when a roster event fires at `step`
    /// (1-based step count). Direction is resampled at the bounds so the
    /// trigger cadence is preserved.
    pub fn poll(&mut self, step: u64, n_living: usize, rng: &mut ChaCha8Rng) -> Option<bool> {
        let d = self.dyn_cfg.as_ref()?;
        if step < self.next_trigger {
            return None;
        }
        self.next_trigger = step + draw_interval(d, rng);
        let mut add = rng.gen_bool(0.5);
        if add && n_living >= d.max_agents {
            add = false;
        } else if !add && n_living <= d.min_agents {
            add = true;
        }
        Some(add)
    }
}

fn draw_interval(d: &RosterDynamics, rng: &mut ChaCha8Rng) -> u64 {
    rng.gen_range(d.interval_lo..=d.interval_hi) as u64
}

const SCENARIO_PRECISION: usize = 6;

/// One scenario per line: `seed n_a n_e d_c v...` with values at fixed
/// decimal precision, so evaluation sets are diffable and reproducible.
pub fn write_scenario_line(seed: u64, s: &Scenario) -> String {
    let mut line = format!("{} {} {} {}", seed, s.n_a, s.n_e(), s.d_c);
    for v in &s.chars {
        write!(line, " {v:.prec$}", prec = SCENARIO_PRECISION).unwrap();
    }
    line
}

pub fn parse_scenario_line(line_no: usize, line: &str) -> Result<(u64, Scenario), EnvError> {
    let bad = |msg: &str| EnvError::BadLine {
        line: line_no,
        msg: msg.to_string(),
    };
    let mut it = line.split_whitespace();
    let mut next_usize = |what: &str| -> Result<usize, EnvError> {
        it.next()
            .ok_or_else(|| bad(&format!("missing {what}")))?
            .parse()
            .map_err(|_| bad(&format!("bad {what}")))
    };
    let seed = next_usize("seed")? as u64;
    let n_a = next_usize("agent count")?;
    let n_e = next_usize("entity count")?;
    let d_c = next_usize("characteristic width")?;
    let chars: Result<Vec<f64>, EnvError> = it
        .map(|tok| tok.parse::<f64>().map_err(|_| bad("bad value")))
        .collect();
    let chars = chars?;
    if chars.len() != n_e * d_c {
        return Err(bad(&format!(
            "expected {} values, got {}",
            n_e * d_c,
            chars.len()
        )));
    }
    if n_a > n_e || n_a == 0 {
        return Err(bad("agent count out of range"));
    }
    Ok((seed, Scenario { n_a, d_c, chars }))
}

pub fn write_scenario_set(set: &[(u64, Scenario)]) -> String {
    let mut out = String::new();
    for (seed, s) in set {
        out.push_str(&write_scenario_line(*seed, s));
        out.push('\n');
    }
    out
}

pub fn parse_scenario_set(text: &str) -> Result<Vec<(u64, Scenario)>, EnvError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| parse_scenario_line(i + 1, l))
        .collect()
}
