//! Empirical verification of the stale-strategy performance bound on
//! randomized tabular MDPs small enough for exact value iteration.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{theorem_bound, BoundInputs, CommsError};

pub const MAX_STATES: usize = 50;
pub const MAX_AGENTS: usize = 4;
pub const MAX_ACTIONS: usize = 3;

/// Width of the synthetic strategy vectors used by the Lipschitz map.
const BOUND_D_Z: usize = 3;

/// Size and discount of the tabular MDPs to generate.
#[derive(Clone, Copy, Debug)]
pub struct MdpSpec {
    pub n_states: usize,
    pub n_agents: usize,
    pub n_actions: usize,
    pub gamma: f64,
}

impl MdpSpec {
    pub fn new(n_states: usize, n_agents: usize, n_actions: usize, gamma: f64) -> Result<Self, CommsError> {
        if n_states == 0 || n_states > MAX_STATES {
            return Err(CommsError::MdpTooLarge(format!(
                "{n_states} states (limit {MAX_STATES})"
            )));
        }
        if n_agents == 0 || n_agents > MAX_AGENTS {
            return Err(CommsError::MdpTooLarge(format!(
                "{n_agents} agents (limit {MAX_AGENTS})"
            )));
        }
        if n_actions < 2 || n_actions > MAX_ACTIONS {
            return Err(CommsError::MdpTooLarge(format!(
                "{n_actions} actions per agent (limit {MAX_ACTIONS}, minimum 2)"
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(CommsError::BadDiscount(gamma));
        }
        Ok(MdpSpec { n_states, n_agents, n_actions, gamma })
    }

    pub fn joint_actions(&self) -> usize {
        self.n_actions.pow(self.n_agents as u32)
    }
}

/// Dense tabular MDP over joint actions.
pub struct TabularMdp {
    pub spec: MdpSpec,
    /// `[s·joint + ja][s']` transition probabilities, each row normalized.
    transition: Vec<f64>,
    /// `[s·joint + ja]` rewards in [0, 1].
    reward: Vec<f64>,
}

impl TabularMdp {
    pub fn random(spec: MdpSpec, rng: &mut impl Rng) -> Self {
        let n = spec.n_states;
        let joint = spec.joint_actions();
        let mut transition = vec![0.0; n * joint * n];
        for row in 0..n * joint {
            let r = &mut transition[row * n..(row + 1) * n];
            let mut total = 0.0;
            for p in r.iter_mut() {
                *p = rng.gen_range(1e-3..1.0);
                total += *p;
            }
            for p in r.iter_mut() {
                *p /= total;
            }
        }
        let reward = (0..n * joint).map(|_| rng.gen_range(0.0..1.0)).collect();
        TabularMdp { spec, transition, reward }
    }

    /// Overrides one reward cell; for constructing specific MDPs.
    pub fn set_reward(&mut self, s: usize, ja: usize, r: f64) {
        self.reward[s * self.spec.joint_actions() + ja] = r;
    }

    /// Makes (s, ja) transition to `sp` with probability 1.
    pub fn set_transition_deterministic(&mut self, s: usize, ja: usize, sp: usize) {
        let n = self.spec.n_states;
        let row = (s * self.spec.joint_actions() + ja) * n;
        self.transition[row..row + n].fill(0.0);
        self.transition[row + sp] = 1.0;
    }

    /// Q* by value iteration to sup-norm tolerance 1e-13 on V.
    pub fn value_iteration(&self) -> Vec<f64> {
        let n = self.spec.n_states;
        let joint = self.spec.joint_actions();
        let mut v = vec![0.0; n];
        let mut q = vec![0.0; n * joint];
        for _ in 0..100_000 {
            let mut delta = 0.0f64;
            for s in 0..n {
                let mut best = f64::NEG_INFINITY;
                for ja in 0..joint {
                    let row = (s * joint + ja) * n;
                    let mut ev = 0.0;
                    for (sp, &p) in self.transition[row..row + n].iter().enumerate() {
                        ev += p * v[sp];
                    }
                    let qv = self.reward[s * joint + ja] + self.spec.gamma * ev;
                    q[s * joint + ja] = qv;
                    if qv > best {
                        best = qv;
                    }
                }
                delta = delta.max((best - v[s]).abs());
                v[s] = best;
            }
            if delta < 1e-13 {
                break;
            }
        }
        // One more backup from the converged V so Q is consistent with it.
        for s in 0..n {
            for ja in 0..joint {
                let row = (s * joint + ja) * n;
                let mut ev = 0.0;
                for (sp, &p) in self.transition[row..row + n].iter().enumerate() {
                    ev += p * v[sp];
                }
                q[s * joint + ja] = self.reward[s * joint + ja] + self.spec.gamma * ev;
            }
        }
        q
    }

    /// First-max greedy joint action per state.
    pub fn greedy(&self, q: &[f64]) -> Vec<usize> {
        let joint = self.spec.joint_actions();
        (0..self.spec.n_states)
            .map(|s| {
                let row = &q[s * joint..(s + 1) * joint];
                let mut best = 0;
                for (ja, &value) in row.iter().enumerate() {
                    if value > row[best] {
                        best = ja;
                    }
                }
                best
            })
            .collect()
    }

    /// Exact policy value by solving (I − γ P_π) V = R_π.
    pub fn policy_value(&self, policy: &[usize]) -> Vec<f64> {
        let n = self.spec.n_states;
        let joint = self.spec.joint_actions();
        let mut a = vec![0.0; n * n];
        let mut b = vec![0.0; n];
        for s in 0..n {
            let row = (s * joint + policy[s]) * n;
            for sp in 0..n {
                a[s * n + sp] = -self.spec.gamma * self.transition[row + sp];
            }
            a[s * n + s] += 1.0;
            b[s] = self.reward[s * joint + policy[s]];
        }
        solve_dense(&mut a, &mut b, n);
        b
    }
}

/// In-place Gaussian elimination with partial pivoting; solution left in `b`.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) {
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[pivot * n + col].abs() {
                pivot = r;
            }
        }
        if pivot != col {
            for c in 0..n {
                a.swap(col * n + c, pivot * n + c);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        assert!(d.abs() > 1e-12, "singular policy-evaluation system");
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut x = b[col];
        for c in col + 1..n {
            x -= a[col * n + c] * b[c];
        }
        b[col] = x / a[col * n + col];
    }
}

/// Perturbed utilities Q̃ = Q* + e + Σ_a η·⟨w_a, δz_a⟩ with ‖e‖∞ ≤ κ,
/// ‖w_a‖₂ ≤ 1 and ‖δz_a‖₂ ≤ β, so ‖Q̃ − Q*‖∞ ≤ κ + n_a·η·β by
/// construction.
fn perturb_random(
    q: &[f64],
    spec: &MdpSpec,
    kappa: f64,
    eta: f64,
    beta: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    // Stale-strategy displacement per agent, norm ≤ β.
    let dz: Vec<Vec<f64>> = (0..spec.n_agents)
        .map(|_| scaled_direction(beta * rng.gen::<f64>(), rng))
        .collect();
    q.iter()
        .map(|&base| {
            let mut val = base + kappa * rng.gen_range(-1.0..=1.0);
            for d in &dz {
                // Fresh unit-ball direction per (state, joint action, agent):
                // the Lipschitz map's local gradient.
                let w = scaled_direction(rng.gen::<f64>(), rng);
                let dot: f64 = w.iter().zip(d).map(|(a, b)| a * b).sum();
                val += eta * dot;
            }
            val
        })
        .collect()
}

/// Worst-case perturbation at the bound surface: in every state the true
/// best joint action is pushed down by the full budget κ + n_a·η·β and the
/// true worst is pushed up by the same amount.
fn perturb_adversarial(q: &[f64], spec: &MdpSpec, kappa: f64, eta: f64, beta: f64) -> Vec<f64> {
    let joint = spec.joint_actions();
    let budget = kappa + spec.n_agents as f64 * eta * beta;
    let mut out = q.to_vec();
    for s in 0..spec.n_states {
        let row = &q[s * joint..(s + 1) * joint];
        let (mut best, mut worst) = (0, 0);
        for (ja, &value) in row.iter().enumerate() {
            if value > row[best] {
                best = ja;
            }
            if value < row[worst] {
                worst = ja;
            }
        }
        out[s * joint + best] -= budget;
        out[s * joint + worst] += budget;
    }
    out
}

/// Direction vector of the given norm (uniform on the sphere).
fn scaled_direction(norm: f64, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..BOUND_D_Z).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x * norm / n).collect();
        }
    }
}

/// Outcome of a batch of bound trials.
#[derive(Clone, Copy, Debug)]
pub struct BoundReport {
    pub trials: usize,
    pub max_gap: f64,
    pub bound: f64,
    /// Smallest observed bound − gap; nonnegative iff `holds`.
    pub min_slack: f64,
    pub holds: bool,
}

/// Runs `trials` random MDPs: perturbs Q* within (κ, η, β), executes the
/// greedy policy on the perturbed utilities, and compares its exact value to
/// V*. `adversarial` replaces the random perturbation with the worst-case
/// one at the budget surface.
pub fn verify_bound(
    spec: MdpSpec,
    kappa: f64,
    eta: f64,
    beta: f64,
    trials: usize,
    seed: u64,
    adversarial: bool,
) -> Result<BoundReport, CommsError> {
    let bound = theorem_bound(&BoundInputs {
        n_a: spec.n_agents,
        eta,
        beta,
        kappa,
        gamma: spec.gamma,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_gap = 0.0f64;
    for _ in 0..trials {
        let mdp = TabularMdp::random(spec, &mut rng);
        let q = mdp.value_iteration();
        let v_star = mdp.policy_value(&mdp.greedy(&q));
        let q_tilde = if adversarial {
            perturb_adversarial(&q, &spec, kappa, eta, beta)
        } else {
            perturb_random(&q, &spec, kappa, eta, beta, &mut rng)
        };
        let v_tilde = mdp.policy_value(&mdp.greedy(&q_tilde));
        let gap = v_star
            .iter()
            .zip(&v_tilde)
            .map(|(a, b)| a - b)
            .fold(0.0f64, f64::max);
        max_gap = max_gap.max(gap);
    }
    Ok(BoundReport {
        trials,
        max_gap,
        bound,
        min_slack: bound - max_gap,
        holds: max_gap <= bound + 1e-9,
    })
}
