//! Resource Collection: a continuous square map where a heterogeneous team
//! picks up typed resources, banks them at home, and intercepts an invader.
//!
//! Entity feature layout (`d_e` = 16):
//! `[c_r c_g c_b v | t_r t_g t_b | pos x y | vel x y | type a/r/h/i | status]`
//! where the first 7 entries are the characteristic vector (agent part then
//! non-agent part), `type` is a 4-way one-hot (agent, resource, home,
//! invader) and `status` is carrying/available/active.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    CharDist, EnvError, Environment, Observation, RosterClock, Scenario, ScenarioDistribution,
    StepResult,
};

pub const RESOURCE_D_C: usize = 7;
pub const RESOURCE_D_E: usize = 16;

pub const HALF_WIDTH: f64 = 0.9;
pub const SIGHT: f64 = 0.2;
pub const CONTACT: f64 = 0.05;
pub const ACCEL: f64 = 0.08;
pub const DAMPING: f64 = 0.85;
pub const DECEL: f64 = 0.5;
pub const INVADER_SPAWN_P: f64 = 0.01;
pub const INVADER_SPEED: f64 = 0.25;
pub const MAX_STEPS: usize = 145;
pub const N_RESOURCES: usize = 6;
pub const N_ACTIONS: usize = 5;

const PICKUP_SCALE: f64 = 10.0;
const DEPOSIT_REWARD: f64 = 1.0;
const CATCH_REWARD: f64 = 4.0;
const BREACH_PENALTY: f64 = -4.0;

/// Fixed placement for the "more static" mode where resources always spawn
/// at the same locations.
const STATIC_POSITIONS: [(f64, f64); N_RESOURCES] = [
    (-0.6, -0.6),
    (-0.6, 0.6),
    (0.6, -0.6),
    (0.6, 0.6),
    (0.0, -0.6),
    (0.0, 0.6),
];

#[derive(Debug, Clone, Default)]
struct AgentSlot {
    alive: bool,
    id: u64,
    chars: [f64; 4], // c_r, c_g, c_b, v_max
    pos: (f64, f64),
    vel: (f64, f64),
    carrying: Option<usize>, // resource type
}

#[derive(Debug, Clone, Default)]
struct ResourceItem {
    kind: usize, // 0=r 1=g 2=b
    pos: (f64, f64),
}

#[derive(Debug, Clone, Default)]
struct Invader {
    active: bool,
    pos: (f64, f64),
    vel: (f64, f64),
}

/// Read-only view of one agent for rendering and inspection.
#[derive(Debug, Clone)]
pub struct AgentView {
    pub slot: usize,
    pub id: u64,
    pub chars: [f64; 4],
    pub pos: (f64, f64),
    pub vel: (f64, f64),
    pub carrying: Option<usize>,
}

/// Read-only world view for rendering and inspection.
#[derive(Debug, Clone)]
pub struct ResourceSnapshot {
    pub agents: Vec<AgentView>,
    /// (type, x, y) per resource.
    pub resources: Vec<(usize, f64, f64)>,
    pub invader: Option<(f64, f64)>,
    pub step: usize,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub step: usize,
    pub agent_id: u64,
    pub x: f64,
    pub y: f64,
    pub event: String,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct ResourceEnv {
    agent_cap: usize,
    agents: Vec<AgentSlot>,
    resources: Vec<ResourceItem>,
    invader: Invader,
    static_resources: bool,
    respawn_chars: Vec<CharDist>,
    roster_cfg: Option<super::RosterDynamics>,
    clock: RosterClock,
    rng: ChaCha8Rng,
    step_count: usize,
    done: bool,
    next_id: u64,
    trace_on: bool,
    trace: Vec<TraceRow>,
}

impl ResourceEnv {
    pub fn new(dist: &ScenarioDistribution) -> Self {
        Self::with_placement(dist, false)
    }

    pub fn with_placement(dist: &ScenarioDistribution, static_resources: bool) -> Self {
        let cap = dist.agent_capacity();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        ResourceEnv {
            agent_cap: cap,
            agents: vec![AgentSlot::default(); cap],
            resources: vec![ResourceItem::default(); N_RESOURCES],
            invader: Invader::default(),
            static_resources,
            respawn_chars: dist.agent_chars.clone(),
            roster_cfg: dist.roster.clone(),
            clock: RosterClock::new(None, &mut rng),
            rng,
            step_count: 0,
            done: true,
            next_id: 0,
            trace_on: false,
            trace: Vec::new(),
        }
    }

    pub fn record_trace(&mut self, on: bool) {
        self.trace_on = on;
        self.trace.clear();
    }

    pub fn snapshot(&self) -> ResourceSnapshot {
        ResourceSnapshot {
            agents: self
                .agents
                .iter()
                .enumerate()
                .filter(|(_, a)| a.alive)
                .map(|(slot, a)| AgentView {
                    slot,
                    id: a.id,
                    chars: a.chars,
                    pos: a.pos,
                    vel: a.vel,
                    carrying: a.carrying,
                })
                .collect(),
            resources: self
                .resources
                .iter()
                .map(|r| (r.kind, r.pos.0, r.pos.1))
                .collect(),
            invader: self.invader.active.then_some(self.invader.pos),
            step: self.step_count,
            done: self.done,
        }
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    /// Draws a full scenario: agents, then 2 resources per type, home,
    /// invader. Non-agent characteristic rows carry the resource type
    /// one-hot; home and invader rows are zero.
    pub fn sample_scenario(dist: &ScenarioDistribution, rng: &mut ChaCha8Rng) -> Scenario {
        let n_a = dist.sample_n_agents(rng);
        let mut chars = Vec::with_capacity((n_a + N_RESOURCES + 2) * RESOURCE_D_C);
        for _ in 0..n_a {
            dist.sample_agent_chars(&mut chars, rng);
            chars.extend_from_slice(&[0.0; 3]);
        }
        for r in 0..N_RESOURCES {
            let mut row = [0.0; RESOURCE_D_C];
            row[4 + r / 2] = 1.0;
            chars.extend_from_slice(&row);
        }
        chars.extend_from_slice(&[0.0; RESOURCE_D_C]); // home
        chars.extend_from_slice(&[0.0; RESOURCE_D_C]); // invader
        Scenario {
            n_a,
            d_c: RESOURCE_D_C,
            chars,
        }
    }

    fn slot_of_resource(&self, r: usize) -> usize {
        self.agent_cap + r
    }

    fn home_slot(&self) -> usize {
        self.agent_cap + N_RESOURCES
    }

    fn invader_slot(&self) -> usize {
        self.agent_cap + N_RESOURCES + 1
    }

    fn n_living(&self) -> usize {
        self.agents.iter().filter(|a| a.alive).count()
    }

    fn random_pos(rng: &mut ChaCha8Rng) -> (f64, f64) {
        (
            rng.gen_range(-HALF_WIDTH..HALF_WIDTH),
            rng.gen_range(-HALF_WIDTH..HALF_WIDTH),
        )
    }

    fn spawn_agent(&mut self, slot: usize, chars: [f64; 4]) {
        self.next_id += 1;
        self.agents[slot] = AgentSlot {
            alive: true,
            id: self.next_id,
            chars,
            pos: (0.0, 0.0),
            vel: (0.0, 0.0),
            carrying: None,
        };
    }

    fn push_trace(&mut self, slot: usize, event: &str, reward: f64) {
        if !self.trace_on {
            return;
        }
        let (id, pos) = if slot == usize::MAX {
            (0, self.invader.pos)
        } else {
            (self.agents[slot].id, self.agents[slot].pos)
        };
        self.trace.push(TraceRow {
            step: self.step_count,
            agent_id: id,
            x: pos.0,
            y: pos.1,
            event: event.to_string(),
            reward,
        });
    }

    fn build_observation(&self) -> Observation {
        let n_slots = self.agent_cap + N_RESOURCES + 2;
        let d = RESOURCE_D_E;
        let mut x_e = vec![0.0; n_slots * d];
        let mut exists = vec![false; n_slots];
        let mut pos = vec![(0.0, 0.0); n_slots];

        for (i, a) in self.agents.iter().enumerate() {
            if !a.alive {
                continue;
            }
            exists[i] = true;
            pos[i] = a.pos;
            let row = &mut x_e[i * d..(i + 1) * d];
            row[..4].copy_from_slice(&a.chars);
            row[7] = a.pos.0;
            row[8] = a.pos.1;
            row[9] = a.vel.0;
            row[10] = a.vel.1;
            row[11] = 1.0;
            row[15] = if a.carrying.is_some() { 1.0 } else { 0.0 };
        }
        for (r, item) in self.resources.iter().enumerate() {
            let s = self.slot_of_resource(r);
            exists[s] = true;
            pos[s] = item.pos;
            let row = &mut x_e[s * d..(s + 1) * d];
            row[4 + item.kind] = 1.0;
            row[7] = item.pos.0;
            row[8] = item.pos.1;
            row[12] = 1.0;
            row[15] = 1.0;
        }
        {
            let s = self.home_slot();
            exists[s] = true;
            let row = &mut x_e[s * d..(s + 1) * d];
            row[13] = 1.0;
            row[15] = 1.0;
        }
        if self.invader.active {
            let s = self.invader_slot();
            exists[s] = true;
            pos[s] = self.invader.pos;
            let row = &mut x_e[s * d..(s + 1) * d];
            row[7] = self.invader.pos.0;
            row[8] = self.invader.pos.1;
            row[9] = self.invader.vel.0;
            row[10] = self.invader.vel.1;
            row[14] = 1.0;
            row[15] = 1.0;
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
                if j == i || dist(pos[i], pos[j]) <= SIGHT {
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

    /// Hand-coded baseline: each agent pursues the nearest resource of the
    /// type it collects best (ties to the lowest type index) or brings its
    /// load home; when the invader is active, the closest agent intercepts
    /// it instead. Actions are chosen by one-step lookahead on the real
    /// kinematics.
    pub fn greedy_expert(&self) -> Vec<usize> {
        let mut actions = vec![0usize; self.agent_cap];
        let mut interceptor = None;
        if self.invader.active {
            let mut best = f64::INFINITY;
            for (i, a) in self.agents.iter().enumerate() {
                if a.alive {
                    let d = dist(a.pos, self.invader.pos);
                    if d < best {
                        best = d;
                        interceptor = Some(i);
                    }
                }
            }
        }
        for (i, a) in self.agents.iter().enumerate() {
            if !a.alive {
                continue;
            }
            let target = if interceptor == Some(i) {
                self.invader.pos
            } else if a.carrying.is_some() {
                (0.0, 0.0)
            } else {
                let best_kind = best_type(&a.chars);
                let mut best_pos = (0.0, 0.0);
                let mut best_d = f64::INFINITY;
                for item in &self.resources {
                    if item.kind == best_kind {
                        let d = dist(a.pos, item.pos);
                        if d < best_d {
                            best_d = d;
                            best_pos = item.pos;
                        }
                    }
                }
                best_pos
            };
            actions[i] = greedy_action(a, target);
        }
        actions
    }
}

#[cfg(test)]
impl ResourceEnv {
    pub(crate) fn test_place_agent(&mut self, slot: usize, pos: (f64, f64), vel: (f64, f64)) {
        self.agents[slot].pos = pos;
        self.agents[slot].vel = vel;
    }

    pub(crate) fn test_place_resource(&mut self, r: usize, pos: (f64, f64)) {
        self.resources[r].pos = pos;
    }

    pub(crate) fn test_spawn_invader(&mut self, pos: (f64, f64)) {
        let d = (pos.0 * pos.0 + pos.1 * pos.1).sqrt();
        self.invader = Invader {
            active: true,
            pos,
            vel: (-pos.0 / d * INVADER_SPEED, -pos.1 / d * INVADER_SPEED),
        };
    }

    pub(crate) fn test_carrying(&self, slot: usize) -> Option<usize> {
        self.agents[slot].carrying
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn best_type(chars: &[f64; 4]) -> usize {
    let mut k = 0;
    for t in 1..3 {
        if chars[t] > chars[k] {
            k = t;
        }
    }
    k
}

/// Applies one kinematics step for `action`, returning new (pos, vel).
fn integrate(pos: (f64, f64), vel: (f64, f64), v_max: f64, action: usize) -> ((f64, f64), (f64, f64)) {
    let mut v = (vel.0 * DAMPING, vel.1 * DAMPING);
    match action {
        0 => v.1 += ACCEL,
        1 => v.1 -= ACCEL,
        2 => v.0 -= ACCEL,
        3 => v.0 += ACCEL,
        _ => {
            v.0 *= DECEL;
            v.1 *= DECEL;
        }
    }
    let speed = (v.0 * v.0 + v.1 * v.1).sqrt();
    if speed > v_max {
        let k = v_max / speed;
        v.0 *= k;
        v.1 *= k;
    }
    let p = (
        (pos.0 + v.0).clamp(-HALF_WIDTH, HALF_WIDTH),
        (pos.1 + v.1).clamp(-HALF_WIDTH, HALF_WIDTH),
    );
    (p, v)
}

fn greedy_action(a: &AgentSlot, target: (f64, f64)) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for action in 0..N_ACTIONS {
        let (p, _) = integrate(a.pos, a.vel, a.chars[3], action);
        let d = dist(p, target);
        if d < best_d - 1e-12 {
            best_d = d;
            best = action;
        }
    }
    best
}

impl Environment for ResourceEnv {
    fn d_e(&self) -> usize {
        RESOURCE_D_E
    }

    fn d_c(&self) -> usize {
        RESOURCE_D_C
    }

    fn n_actions(&self) -> usize {
        N_ACTIONS
    }

    fn agent_slots(&self) -> usize {
        self.agent_cap
    }

    fn n_slots(&self) -> usize {
        self.agent_cap + N_RESOURCES + 2
    }

    fn max_steps(&self) -> usize {
        MAX_STEPS
    }

    fn reset(&mut self, scenario: &Scenario, seed: u64) -> Result<Observation, EnvError> {
        if scenario.d_c != RESOURCE_D_C {
            return Err(EnvError::InvalidScenario(format!(
                "characteristic width {} != {RESOURCE_D_C}",
                scenario.d_c
            )));
        }
        if scenario.n_a == 0 || scenario.n_a > self.agent_cap {
            return Err(EnvError::InvalidScenario(format!(
                "agent count {} outside capacity 1..={}",
                scenario.n_a, self.agent_cap
            )));
        }
        if scenario.n_e() != scenario.n_a + N_RESOURCES + 2 {
            return Err(EnvError::InvalidScenario(format!(
                "entity count {} != agents + {} resources + home + invader",
                scenario.n_e(),
                N_RESOURCES
            )));
        }
        for i in 0..scenario.n_a {
            let c = scenario.entity(i);
            if c[..4].iter().any(|&x| x <= 0.0) || c[4..].iter().any(|&x| x != 0.0) {
                return Err(EnvError::InvalidScenario(format!(
                    "agent {i} characteristics malformed: {c:?}"
                )));
            }
        }
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.next_id = 0;
        for s in 0..self.agent_cap {
            self.agents[s] = AgentSlot::default();
        }
        for i in 0..scenario.n_a {
            let c = scenario.entity(i);
            self.spawn_agent(i, [c[0], c[1], c[2], c[3]]);
        }
        for r in 0..N_RESOURCES {
            let pos = if self.static_resources {
                STATIC_POSITIONS[r]
            } else {
                Self::random_pos(&mut self.rng)
            };
            self.resources[r] = ResourceItem { kind: r / 2, pos };
        }
        self.invader = Invader::default();
        self.clock = RosterClock::new(self.roster_cfg.clone(), &mut self.rng);
        self.step_count = 0;
        self.done = false;
        self.trace.clear();
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
        let mut reward = 0.0;

        for (i, a) in self.agents.iter_mut().enumerate() {
            if a.alive {
                let (p, v) = integrate(a.pos, a.vel, a.chars[3], actions[i]);
                a.pos = p;
                a.vel = v;
            }
        }
        if self.invader.active {
            self.invader.pos.0 += self.invader.vel.0;
            self.invader.pos.1 += self.invader.vel.1;
        }

        // Per-agent events in slot order: deposit frees the slot before the
        // pickup check, so an agent can bank and reload in one step.
        for i in 0..self.agent_cap {
            if !self.agents[i].alive {
                continue;
            }
            if self.agents[i].carrying.is_some() && dist(self.agents[i].pos, (0.0, 0.0)) <= CONTACT
            {
                self.agents[i].carrying = None;
                reward += DEPOSIT_REWARD;
                self.push_trace(i, "deposit", DEPOSIT_REWARD);
            }
            if self.agents[i].carrying.is_none() {
                for r in 0..N_RESOURCES {
                    if dist(self.agents[i].pos, self.resources[r].pos) <= CONTACT {
                        let kind = self.resources[r].kind;
                        let gain = PICKUP_SCALE * self.agents[i].chars[kind];
                        self.agents[i].carrying = Some(kind);
                        reward += gain;
                        self.push_trace(i, &format!("pickup:{kind}"), gain);
                        self.resources[r].pos = Self::random_pos(&mut self.rng);
                        break;
                    }
                }
            }
        }

        if self.invader.active {
            let catcher = (0..self.agent_cap).find(|&i| {
                self.agents[i].alive && dist(self.agents[i].pos, self.invader.pos) <= CONTACT
            });
            if let Some(i) = catcher {
                self.invader.active = false;
                reward += CATCH_REWARD;
                self.push_trace(i, "catch", CATCH_REWARD);
            } else if dist(self.invader.pos, (0.0, 0.0)) <= CONTACT {
                self.invader.active = false;
                reward += BREACH_PENALTY;
                self.push_trace(usize::MAX, "breach", BREACH_PENALTY);
            }
        }
        if !self.invader.active && self.rng.gen_bool(INVADER_SPAWN_P) {
            let side = self.rng.gen_range(0..4u8);
            let offset = self.rng.gen_range(-HALF_WIDTH..HALF_WIDTH);
            let pos = match side {
                0 => (offset, HALF_WIDTH),
                1 => (offset, -HALF_WIDTH),
                2 => (-HALF_WIDTH, offset),
                _ => (HALF_WIDTH, offset),
            };
            let d = (pos.0 * pos.0 + pos.1 * pos.1).sqrt();
            self.invader = Invader {
                active: true,
                pos,
                vel: (-pos.0 / d * INVADER_SPEED, -pos.1 / d * INVADER_SPEED),
            };
            self.push_trace(usize::MAX, "invader", 0.0);
        }

        self.step_count += 1;
        let n_living = self.n_living();
        if let Some(add) = self.clock.poll(self.step_count as u64, n_living, &mut self.rng) {
            if add {
                if let Some(slot) = (0..self.agent_cap).find(|&s| !self.agents[s].alive) {
                    let mut chars = Vec::with_capacity(4);
                    for d in &self.respawn_chars {
                        chars.push(d.sample(&mut self.rng));
                    }
                    self.spawn_agent(slot, [chars[0], chars[1], chars[2], chars[3]]);
                    self.push_trace(slot, "join", 0.0);
                }
            } else {
                let living: Vec<usize> = (0..self.agent_cap)
                    .filter(|&s| self.agents[s].alive)
                    .collect();
                let victim = living[self.rng.gen_range(0..living.len())];
                self.push_trace(victim, "leave", 0.0);
                self.agents[victim] = AgentSlot::default();
            }
        }

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
                chars.extend_from_slice(&a.chars);
                chars.extend_from_slice(&[0.0; 3]);
            }
        }
        for item in &self.resources {
            let mut row = [0.0; RESOURCE_D_C];
            row[4 + item.kind] = 1.0;
            chars.extend_from_slice(&row);
        }
        chars.extend_from_slice(&[0.0; RESOURCE_D_C]);
        chars.extend_from_slice(&[0.0; RESOURCE_D_C]);
        Scenario {
            n_a,
            d_c: RESOURCE_D_C,
            chars,
        }
    }
}

pub fn resource_train_distribution() -> ScenarioDistribution {
    ScenarioDistribution {
        n_agents_lo: 2,
        n_agents_hi: 4,
        agent_chars: vec![
            CharDist::Choice(vec![0.1, 0.5, 0.9]),
            CharDist::Choice(vec![0.1, 0.5, 0.9]),
            CharDist::Choice(vec![0.1, 0.5, 0.9]),
            CharDist::Choice(vec![0.3, 0.5, 0.7]),
        ],
        extra_lo: 0,
        extra_hi: 0,
        roster: None,
    }
}

pub fn resource_test_distribution(n_lo: usize, n_hi: usize) -> ScenarioDistribution {
    ScenarioDistribution {
        n_agents_lo: n_lo,
        n_agents_hi: n_hi,
        agent_chars: vec![
            CharDist::Interval(0.1, 0.9),
            CharDist::Interval(0.1, 0.9),
            CharDist::Interval(0.1, 0.9),
            CharDist::Interval(0.2, 0.8),
        ],
        extra_lo: 0,
        extra_hi: 0,
        roster: None,
    }
}

/// The dynamic-composition task: start from 4 agents, add or drop one every
/// ν ~ U{8..12} steps while staying within [2, 6].
pub fn resource_varying_distribution() -> ScenarioDistribution {
    let mut d = resource_test_distribution(4, 4);
    d.roster = Some(super::RosterDynamics {
        interval_lo: 8,
        interval_hi: 12,
        min_agents: 2,
        max_agents: 6,
    });
    d
}
