//! Rescue Game: a 10×10 building grid where skill-heterogeneous firefighters
//! put out stochastic fires; the team is rewarded for the squared-emergency
//! mass it removes each step.
//!
//! Entity feature layout (`d_e` = 6):
//! `[c^a skill | c^b emergency | x/9 y/9 | type agent/fire]`
//! with the two characteristic entries forming the agent/non-agent split.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    CharDist, EnvError, Environment, Observation, Scenario, ScenarioDistribution, StepResult,
};

pub const RESCUE_D_C: usize = 2;
pub const RESCUE_D_E: usize = 6;

pub const GRID: usize = 10;
pub const FIRE_CAP: usize = 10;
pub const IGNITION_P: f64 = 0.001;
pub const MAX_STEPS: usize = 100;
pub const N_ACTIONS: usize = 5;
pub const DEFAULT_SIGHT: usize = 2;

#[derive(Debug, Clone, Default)]
struct AgentSlot {
    alive: bool,
    id: u64,
    skill: f64,
    x: usize,
    y: usize,
}

#[derive(Debug, Clone, Default, Copy)]
struct FireSlot {
    active: bool,
    x: usize,
    y: usize,
    level: f64,
}

#[derive(Debug, Clone)]
pub struct RescueEnv {
    agent_cap: usize,
    agents: Vec<AgentSlot>,
    fires: [FireSlot; FIRE_CAP],
    sight: usize,
    ignition_p: f64,
    rng: ChaCha8Rng,
    prev_emergency: f64,
    step_count: usize,
    done: bool,
    next_id: u64,
}

impl RescueEnv {
    pub fn new(dist: &ScenarioDistribution) -> Self {
        Self::with_sight(dist, DEFAULT_SIGHT)
    }

    pub fn with_sight(dist: &ScenarioDistribution, sight: usize) -> Self {
        assert!((1..=5).contains(&sight), "sight range must be 1..=5");
        let cap = dist.agent_capacity();
        RescueEnv {
            agent_cap: cap,
            agents: vec![AgentSlot::default(); cap],
            fires: [FireSlot::default(); FIRE_CAP],
            sight,
            ignition_p: IGNITION_P,
            rng: ChaCha8Rng::seed_from_u64(0),
            prev_emergency: 0.0,
            step_count: 0,
            done: true,
            next_id: 0,
        }
    }

    /// Overrides the per-cell ignition probability (0 disables new fires).
    pub fn set_ignition(&mut self, p: f64) {
        self.ignition_p = p;
    }

    /// Total emergency `c^B = Σ_b (c^b)²`.
    pub fn emergency(&self) -> f64 {
        self.fires
            .iter()
            .filter(|f| f.active)
            .map(|f| f.level * f.level)
            .sum()
    }

    pub fn sample_scenario(dist: &ScenarioDistribution, rng: &mut ChaCha8Rng) -> Scenario {
        let n_a = dist.sample_n_agents(rng);
        let n_fires = rng.gen_range(dist.extra_lo..=dist.extra_hi);
        let mut chars = Vec::with_capacity((n_a + n_fires) * RESCUE_D_C);
        for _ in 0..n_a {
            dist.sample_agent_chars(&mut chars, rng);
            chars.push(0.0);
        }
        for _ in 0..n_fires {
            chars.push(0.0);
            chars.push(rng.gen_range(0.0..1.0));
        }
        Scenario {
            n_a,
            d_c: RESCUE_D_C,
            chars,
        }
    }

    fn fire_at(&self, x: usize, y: usize) -> Option<usize> {
        (0..FIRE_CAP).find(|&k| self.fires[k].active && self.fires[k].x == x && self.fires[k].y == y)
    }

    fn n_fires(&self) -> usize {
        self.fires.iter().filter(|f| f.active).count()
    }

    fn build_observation(&self) -> Observation {
        let n_slots = self.agent_cap + FIRE_CAP;
        let d = RESCUE_D_E;
        let mut x_e = vec![0.0; n_slots * d];
        let mut exists = vec![false; n_slots];
        let mut cell = vec![(0usize, 0usize); n_slots];
        let denom = (GRID - 1) as f64;

        for (i, a) in self.agents.iter().enumerate() {
            if !a.alive {
                continue;
            }
            exists[i] = true;
            cell[i] = (a.x, a.y);
            let row = &mut x_e[i * d..(i + 1) * d];
            row[0] = a.skill;
            row[2] = a.x as f64 / denom;
            row[3] = a.y as f64 / denom;
            row[4] = 1.0;
        }
        for (k, f) in self.fires.iter().enumerate() {
            if !f.active {
                continue;
            }
            let s = self.agent_cap + k;
            exists[s] = true;
            cell[s] = (f.x, f.y);
            let row = &mut x_e[s * d..(s + 1) * d];
            row[1] = f.level;
            row[2] = f.x as f64 / denom;
            row[3] = f.y as f64 / denom;
            row[5] = 1.0;
        }

        let mut m = vec![0.0; self.agent_cap * n_slots];
        for i in 0..self.agent_cap {
            if !self.agents[i].alive {
                continue;
            }
            for j in 0..n_slots {
                if !exists[j] {
                    continue;
                }
                let dx = cell[i].0.abs_diff(cell[j].0);
                let dy = cell[i].1.abs_diff(cell[j].1);
                if j == i || dx.max(dy) <= self.sight {
                    m[i * n_slots + j] = 1.0;
                }
            }
        }
        let mut m_star = vec![0.0; n_slots * n_slots];
        for i in 0..n_slots {
            if !exists[i] {
                continue;
            }
            for j in 0..n_slots {
                if exists[j] {
                    m_star[i * n_slots + j] = 1.0;
                }
            }
        }
        Observation {
            n_agent_slots: self.agent_cap,
            n_slots,
            d_e: d,
            x_e,
            m,
            m_star,
            agent_ids: self.agents.iter().map(|a| a.id).collect(),
            alive: self.agents.iter().map(|a| a.alive).collect(),
        }
    }

    /// Read-only view for rendering: `(slot, id, skill, x, y)` per living
    /// agent and `(x, y, level)` per active fire.
    pub fn snapshot(&self) -> (Vec<(usize, u64, f64, usize, usize)>, Vec<(usize, usize, f64)>, usize) {
        let agents = self
            .agents
            .iter()
            .enumerate()
            .filter(|(_, a)| a.alive)
            .map(|(s, a)| (s, a.id, a.skill, a.x, a.y))
            .collect();
        let fires = self
            .fires
            .iter()
            .filter(|f| f.active)
            .map(|f| (f.x, f.y, f.level))
            .collect();
        (agents, fires, self.step_count)
    }

    /// Full-view baseline: the k-th most skillful living agent is matched to
    /// the k-th highest-emergency fire, walks to it Manhattan-greedily
    /// (x before y), and extinguishes on arrival. Unmatched agents hold
    /// position with a harmless extinguish.
    pub fn greedy_matcher(&self) -> Vec<usize> {
        let mut actions = vec![4usize; self.agent_cap];
        let mut agents: Vec<usize> = (0..self.agent_cap).filter(|&i| self.agents[i].alive).collect();
        agents.sort_by(|&a, &b| {
            self.agents[b]
                .skill
                .partial_cmp(&self.agents[a].skill)
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut fires: Vec<usize> = (0..FIRE_CAP).filter(|&k| self.fires[k].active).collect();
        fires.sort_by(|&a, &b| {
            self.fires[b]
                .level
                .partial_cmp(&self.fires[a].level)
                .unwrap()
                .then(a.cmp(&b))
        });
        for (i, k) in agents.into_iter().zip(fires) {
            let a = &self.agents[i];
            let f = &self.fires[k];
            actions[i] = if a.x < f.x {
                3
            } else if a.x > f.x {
                2
            } else if a.y < f.y {
                0
            } else if a.y > f.y {
                1
            } else {
                4
            };
        }
        actions
    }
}

#[cfg(test)]
impl RescueEnv {
    pub(crate) fn test_place_agent(&mut self, slot: usize, x: usize, y: usize) {
        self.agents[slot].x = x;
        self.agents[slot].y = y;
    }

    pub(crate) fn test_set_fires(&mut self, fires: &[(usize, usize, f64)]) {
        self.fires = [FireSlot::default(); FIRE_CAP];
        for (k, &(x, y, level)) in fires.iter().enumerate() {
            self.fires[k] = FireSlot {
                active: true,
                x,
                y,
                level,
            };
        }
        self.prev_emergency = self.emergency();
    }
}

impl Environment for RescueEnv {
    fn d_e(&self) -> usize {
        RESCUE_D_E
    }

    fn d_c(&self) -> usize {
        RESCUE_D_C
    }

    fn n_actions(&self) -> usize {
        N_ACTIONS
    }

    fn agent_slots(&self) -> usize {
        self.agent_cap
    }

    fn n_slots(&self) -> usize {
        self.agent_cap + FIRE_CAP
    }

    fn max_steps(&self) -> usize {
        MAX_STEPS
    }

    fn reset(&mut self, scenario: &Scenario, seed: u64) -> Result<Observation, EnvError> {
        if scenario.d_c != RESCUE_D_C {
            return Err(EnvError::InvalidScenario(format!(
                "characteristic width {} != {RESCUE_D_C}",
                scenario.d_c
            )));
        }
        let n_fires = scenario.n_e() - scenario.n_a;
        if scenario.n_a == 0 || scenario.n_a > self.agent_cap {
            return Err(EnvError::InvalidScenario(format!(
                "agent count {} outside capacity 1..={}",
                scenario.n_a, self.agent_cap
            )));
        }
        if n_fires > FIRE_CAP {
            return Err(EnvError::InvalidScenario(format!(
                "{n_fires} initial fires exceed cap {FIRE_CAP}"
            )));
        }
        for i in 0..scenario.n_a {
            let c = scenario.entity(i);
            if c[0] <= 0.0 || c[1] != 0.0 {
                return Err(EnvError::InvalidScenario(format!(
                    "agent {i} characteristics malformed: {c:?}"
                )));
            }
        }
        for i in scenario.n_a..scenario.n_e() {
            let c = scenario.entity(i);
            if c[0] != 0.0 || !(0.0..=1.0).contains(&c[1]) {
                return Err(EnvError::InvalidScenario(format!(
                    "fire {i} characteristics malformed: {c:?}"
                )));
            }
        }
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.next_id = 0;
        for s in 0..self.agent_cap {
            self.agents[s] = AgentSlot::default();
        }
        for i in 0..scenario.n_a {
            self.next_id += 1;
            self.agents[i] = AgentSlot {
                alive: true,
                id: self.next_id,
                skill: scenario.entity(i)[0],
                x: self.rng.gen_range(0..GRID),
                y: self.rng.gen_range(0..GRID),
            };
        }
        self.fires = [FireSlot::default(); FIRE_CAP];
        for (k, i) in (scenario.n_a..scenario.n_e()).enumerate() {
            // Distinct cells: a building either burns or it does not.
            let (x, y) = loop {
                let x = self.rng.gen_range(0..GRID);
                let y = self.rng.gen_range(0..GRID);
                if self.fire_at(x, y).is_none() {
                    break (x, y);
                }
            };
            self.fires[k] = FireSlot {
                active: true,
                x,
                y,
                level: scenario.entity(i)[1],
            };
        }
        self.prev_emergency = self.emergency();
        self.step_count = 0;
        self.done = false;
        Ok(self.build_observation())
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        debug_assert_eq!(actions.len(), self.agent_cap);
        for (i, (&u, a)) in actions.iter().zip(&self.agents).enumerate() {
            if a.alive && u >= N_ACTIONS {
                return Err(EnvError::InvalidAction { agent: i, action: u });
            }
        }
        for (a, &u) in self.agents.iter_mut().zip(actions) {
            if !a.alive {
                continue;
            }
            match u {
                0 => a.y = (a.y + 1).min(GRID - 1),
                1 => a.y = a.y.saturating_sub(1),
                2 => a.x = a.x.saturating_sub(1),
                3 => a.x = (a.x + 1).min(GRID - 1),
                _ => {}
            }
        }
        // Simultaneous extinguishes apply in slot order; the clamp at zero
        // makes the order observable only when a fire is fully put out.
        for i in 0..self.agent_cap {
            if !self.agents[i].alive || actions[i] != 4 {
                continue;
            }
            if let Some(k) = self.fire_at(self.agents[i].x, self.agents[i].y) {
                let f = &mut self.fires[k];
                f.level = (f.level - self.agents[i].skill).max(0.0);
                if f.level == 0.0 {
                    f.active = false;
                }
            }
        }
        if self.ignition_p > 0.0 {
            'ignite: for y in 0..GRID {
                for x in 0..GRID {
                    if self.n_fires() >= FIRE_CAP {
                        break 'ignite;
                    }
                    if self.fire_at(x, y).is_some() {
                        continue;
                    }
                    if self.rng.gen_bool(self.ignition_p) {
                        let slot = (0..FIRE_CAP).find(|&k| !self.fires[k].active).unwrap();
                        self.fires[slot] = FireSlot {
                            active: true,
                            x,
                            y,
                            level: self.rng.gen_range(0.0..1.0),
                        };
                    }
                }
            }
        }
        let cur = self.emergency();
        let reward = self.prev_emergency - cur;
        self.prev_emergency = cur;

        self.step_count += 1;
        self.done = self.step_count >= MAX_STEPS;
        Ok(StepResult {
            reward,
            done: self.done,
            obs: self.build_observation(),
            scenario: self.scenario(),
        })
    }

    fn scenario(&self) -> Scenario {
        let mut chars = Vec::new();
        let mut n_a = 0;
        for a in &self.agents {
            if a.alive {
                n_a += 1;
                chars.push(a.skill);
                chars.push(0.0);
            }
        }
        for f in &self.fires {
            if f.active {
                chars.push(0.0);
                chars.push(f.level);
            }
        }
        Scenario {
            n_a,
            d_c: RESCUE_D_C,
            chars,
        }
    }
}

pub fn rescue_train_distribution() -> ScenarioDistribution {
    ScenarioDistribution {
        n_agents_lo: 3,
        n_agents_hi: 5,
        agent_chars: vec![CharDist::Choice(vec![0.2, 0.5, 1.0])],
        extra_lo: 3,
        extra_hi: 6,
        roster: None,
    }
}

pub fn rescue_test_distribution(n_lo: usize, n_hi: usize) -> ScenarioDistribution {
    ScenarioDistribution {
        n_agents_lo: n_lo,
        n_agents_hi: n_hi,
        agent_chars: vec![CharDist::Interval(0.2, 1.0)],
        extra_lo: 1,
        extra_hi: 8,
        roster: None,
    }
}
