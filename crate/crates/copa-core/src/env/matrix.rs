//! One-step diagnostic game: each agent either performs the task (1) or
//! idles (0); the team earns the best acting agent's skill plus one minus
//! the head count that acted. Skills are redrawn every episode, so a
//! decentralized agent seeing only its own skill cannot tell whether a
//! teammate is better placed — exactly the coordination gap a coach closes.
//!
//! Entity feature layout (`d_e` = 2): `[c^a skill | 1.0]`.

use rand_chacha::ChaCha8Rng;

use super::{
    CharDist, EnvError, Environment, Observation, Scenario, ScenarioDistribution, StepResult,
};

pub const MATRIX_D_C: usize = 1;
pub const MATRIX_D_E: usize = 2;
pub const N_ACTIONS: usize = 2;

#[derive(Debug, Clone)]
pub struct MatrixEnv {
    agent_cap: usize,
    skills: Vec<f64>, // per slot; 0 = empty
    n_a: usize,
    done: bool,
}

impl MatrixEnv {
    pub fn new(dist: &ScenarioDistribution) -> Self {
        MatrixEnv {
            agent_cap: dist.agent_capacity(),
            skills: vec![0.0; dist.agent_capacity()],
            n_a: 0,
            done: true,
        }
    }

    pub fn sample_scenario(dist: &ScenarioDistribution, rng: &mut ChaCha8Rng) -> Scenario {
        let n_a = dist.sample_n_agents(rng);
        let mut chars = Vec::with_capacity(n_a);
        for _ in 0..n_a {
            dist.sample_agent_chars(&mut chars, rng);
        }
        Scenario {
            n_a,
            d_c: MATRIX_D_C,
            chars,
        }
    }

    /// R(u; c) = max_a c^a·u^a + 1 − Σ_a u^a (max over an empty set is 0).
    pub fn reward(skills: &[f64], actions: &[usize]) -> f64 {
        let best = skills
            .iter()
            .zip(actions)
            .filter(|(_, &u)| u == 1)
            .map(|(&c, _)| c)
            .fold(0.0, f64::max);
        let acted: usize = actions.iter().sum();
        best + 1.0 - acted as f64
    }

    /// Best achievable reward: either nobody acts (1) or exactly the most
    /// skillful agent acts (max c). Equal to the brute-force maximum over
    /// all 2^n joint actions.
    pub fn optimal_value(scenario: &Scenario) -> f64 {
        scenario
            .chars
            .iter()
            .take(scenario.n_a)
            .fold(1.0, |m, &c| m.max(c))
    }

    /// Exhaustive check over all joint actions; test oracle only.
    pub fn brute_force_value(skills: &[f64]) -> f64 {
        let n = skills.len();
        let mut best = f64::NEG_INFINITY;
        for bits in 0..(1u32 << n) {
            let actions: Vec<usize> = (0..n).map(|i| ((bits >> i) & 1) as usize).collect();
            best = best.max(Self::reward(skills, &actions));
        }
        best
    }

    fn build_observation(&self) -> Observation {
        let n = self.agent_cap;
        let mut x_e = vec![0.0; n * MATRIX_D_E];
        let mut m = vec![0.0; n * n];
        let mut m_star = vec![0.0; n * n];
        for i in 0..self.n_a {
            x_e[i * MATRIX_D_E] = self.skills[i];
            x_e[i * MATRIX_D_E + 1] = 1.0;
            m[i * n + i] = 1.0; // partial view: own skill only
            for j in 0..self.n_a {
                m_star[i * n + j] = 1.0;
            }
        }
        Observation {
            n_agent_slots: n,
            n_slots: n,
            d_e: MATRIX_D_E,
            x_e,
            m,
            m_star,
            agent_ids: (0..n as u64).map(|i| i + 1).collect(),
            alive: (0..n).map(|i| i < self.n_a).collect(),
        }
    }
}

impl Environment for MatrixEnv {
    fn d_e(&self) -> usize {
        MATRIX_D_E
    }

    fn d_c(&self) -> usize {
        MATRIX_D_C
    }

    fn n_actions(&self) -> usize {
        N_ACTIONS
    }

    fn agent_slots(&self) -> usize {
        self.agent_cap
    }

    fn n_slots(&self) -> usize {
        self.agent_cap
    }

    fn max_steps(&self) -> usize {
        1
    }

    fn reset(&mut self, scenario: &Scenario, _seed: u64) -> Result<Observation, EnvError> {
        if scenario.d_c != MATRIX_D_C {
            return Err(EnvError::InvalidScenario(format!(
                "characteristic width {} != {MATRIX_D_C}",
                scenario.d_c
            )));
        }
        if scenario.n_a == 0 || scenario.n_a > self.agent_cap {
            return Err(EnvError::InvalidScenario(format!(
                "agent count {} outside capacity 1..={}",
                scenario.n_a, self.agent_cap
            )));
        }
        if scenario.chars.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
            return Err(EnvError::InvalidScenario("skills must be finite positive".into()));
        }
        self.n_a = scenario.n_a;
        self.skills.iter_mut().for_each(|s| *s = 0.0);
        self.skills[..scenario.n_a].copy_from_slice(&scenario.chars);
        self.done = false;
        Ok(self.build_observation())
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        for (i, &u) in actions.iter().enumerate().take(self.n_a) {
            if u >= N_ACTIONS {
                return Err(EnvError::InvalidAction { agent: i, action: u });
            }
        }
        let reward = Self::reward(&self.skills[..self.n_a], &actions[..self.n_a]);
        self.done = true;
        Ok(StepResult {
            reward,
            done: true,
            obs: self.build_observation(),
            scenario: self.scenario(),
        })
    }

    fn scenario(&self) -> Scenario {
        Scenario {
            n_a: self.n_a,
            d_c: MATRIX_D_C,
            chars: self.skills[..self.n_a].to_vec(),
        }
    }
}

pub fn matrix_distribution(n_lo: usize, n_hi: usize) -> ScenarioDistribution {
    ScenarioDistribution {
        n_agents_lo: n_lo,
        n_agents_hi: n_hi,
        agent_chars: vec![CharDist::Interval(0.1, 2.0)],
        extra_lo: 0,
        extra_hi: 0,
        roster: None,
    }
}
