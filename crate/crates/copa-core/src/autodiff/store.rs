//! Named parameter storage with optimizer state.

use std::collections::HashMap;

use rand::Rng;

use super::tape::Shape;

/// One named tensor with its gradient accumulator and RMSProp second-moment
/// state. `rms` lives here so checkpoints capture the optimizer exactly.
#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Shape,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
    pub rms: Vec<f64>,
}

impl ParamEntry {
    pub fn add_grad(&mut self, g: &[f64]) {
        debug_assert_eq!(g.len(), self.grad.len());
        for (d, s) in self.grad.iter_mut().zip(g) {
            *d += s;
        }
    }
}

/// Gradient magnitudes over a whole store, taken before clipping.
#[derive(Debug, Clone, Copy)]
pub struct GradStats {
    pub l2_norm: f64,
    pub max_abs: f64,
}

/// Insertion-ordered collection of named parameters. Ordering is part of the
/// contract: checkpoints and gradient reductions walk entries in insertion
/// order so runs replay bit-exactly.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value_count(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn entry(&self, idx: usize) -> &ParamEntry {
        &self.entries[idx]
    }

    pub fn entry_mut(&mut self, idx: usize) -> &mut ParamEntry {
        &mut self.entries[idx]
    }

    pub fn get(&self, name: &str) -> &ParamEntry {
        let idx = self.index_of(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        &self.entries[idx]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut ParamEntry {
        let idx = self.index_of(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        &mut self.entries[idx]
    }

    pub fn entries(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter()
    }

    pub fn add(&mut self, name: &str, shape: Shape, values: Vec<f64>) {
        assert_eq!(shape.0 * shape.1, values.len(), "bad init for {name}");
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter {name}"
        );
        let n = values.len();
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape,
            values,
            grad: vec![0.0; n],
            rms: vec![0.0; n],
        });
    }

    /// Adds a tensor drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn add_uniform(&mut self, name: &str, shape: Shape, fan_in: usize, rng: &mut impl Rng) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let values = (0..shape.0 * shape.1)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        self.add(name, shape, values);
    }

    pub fn add_zeros(&mut self, name: &str, shape: Shape) {
        self.add(name, shape, vec![0.0; shape.0 * shape.1]);
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn grad_stats(&self) -> GradStats {
        let mut sq = 0.0;
        let mut mx = 0.0f64;
        for e in &self.entries {
            for &g in &e.grad {
                sq += g * g;
                mx = mx.max(g.abs());
            }
        }
        GradStats {
            l2_norm: sq.sqrt(),
            max_abs: mx,
        }
    }

    /// Scales gradients so their global L2 norm is at most `max_norm`.
    /// Returns the factor applied (1.0 when already within bounds).
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_stats().l2_norm;
        if norm <= max_norm || norm == 0.0 {
            return 1.0;
        }
        let scale = max_norm / norm;
        for e in &mut self.entries {
            e.grad.iter_mut().for_each(|g| *g *= scale);
        }
        scale
    }

    /// RMSProp update: `v <- alpha*v + (1-alpha)*g^2`, then
    /// `p <- p - lr*g/sqrt(v + eps)`. Gradients are cleared afterwards.
    pub fn rmsprop_step(&mut self, lr: f64, alpha: f64, eps: f64) {
        for e in &mut self.entries {
            for ((p, v), g) in e.values.iter_mut().zip(&mut e.rms).zip(&mut e.grad) {
                *v = alpha * *v + (1.0 - alpha) * *g * *g;
                *p -= lr * *g / (*v + eps).sqrt();
                *g = 0.0;
            }
        }
    }

    /// Copies parameter values (not grads, not optimizer state) from `src`.
    /// Both stores must have identical layouts; used for target refresh.
    pub fn copy_values_from(&mut self, src: &ParamStore) {
        assert_eq!(self.entries.len(), src.entries.len(), "store layout mismatch");
        for (dst, s) in self.entries.iter_mut().zip(&src.entries) {
            assert_eq!(dst.name, s.name, "store layout mismatch");
            dst.values.copy_from_slice(&s.values);
        }
    }

    /// True when any parameter value is non-finite or exceeds `limit` in
    /// magnitude; used by the training divergence guard.
    pub fn any_exceeds(&self, limit: f64) -> bool {
        self.entries
            .iter()
            .any(|e| e.values.iter().any(|v| !v.is_finite() || v.abs() > limit))
    }
}
