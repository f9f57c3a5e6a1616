//! Corner search over a network's adversarial polytope.
//!
//! For a clean input `x` and a box of perturbations `‖ε‖∞ ≤ r`, the set of
//! reachable logits `{f(x + ε)}` is generally nonconvex. [`find_corners`]
//! estimates representative extreme points with a particle method:
//!
//! 1. draw `N` perturbations uniformly from the box;
//! 2. take the empirical center `C = mean_n f(x + εₙ)`;
//! 3. for `T` rounds, move every particle one projected gradient-ascent
//!    step on `‖f(x + εₙ) − C‖²` with `C` frozen, then recompute `C`.
//!
//! Because `C` only changes between rounds, the particle updates inside a
//! round are independent. They run through rayon and the result does not
//! depend on the thread count; the center is always reduced in ascending
//! particle order.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    Linf,
}

/// Allowed perturbation set: an l∞ ball, optionally intersected with an input box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBudget {
    pub epsilon: f64,
    #[serde(default)]
    pub norm: NormKind,
    #[serde(default)]
    pub input_clip: Option<(f64, f64)>,
}

impl PerturbationBudget {
    pub fn linf(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, None)
    }

    pub fn new(epsilon: f64, input_clip: Option<(f64, f64)>) -> Result<Self> {
        let b = Self {
            epsilon,
            norm: NormKind::Linf,
            input_clip,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::contract(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        if let Some((lo, hi)) = self.input_clip {
            if !(lo < hi) {
                return Err(Error::contract(format!("input clip needs lo < hi, got ({lo}, {hi})")));
            }
        }
        Ok(())
    }

    /// True when `p` is in the box and `x + p` respects the input clip.
    pub fn contains(&self, p: &[f64], x: &[f64]) -> bool {
        p.iter().zip(x).all(|(&pi, &xi)| {
            pi.abs() <= self.epsilon
                && self
                    .input_clip
                    .map_or(true, |(lo, hi)| xi + pi >= lo && xi + pi <= hi)
        })
    }
}

/// The `N` perturbation vectors for one clean sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    pub particles: Vec<Vec<f64>>,
    pub budget: PerturbationBudget,
    pub rng_seed: u64,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles.first().map_or(0, Vec::len)
    }
}

/// Corner logits, their empirical center and summary geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeEstimate {
    pub corners: Vec<Vec<f64>>,
    pub center: Vec<f64>,
    pub distances: Vec<f64>,
    pub diameter: f64,
    /// Mean squared corner-to-center distance after each round.
    pub objective_history: Vec<f64>,
}

impl PolytopeEstimate {
    fn from_corners(corners: Vec<Vec<f64>>, center: Vec<f64>, objective_history: Vec<f64>) -> Self {
        let distances = corners.iter().map(|c| sq_dist(c, &center).sqrt()).collect();
        let diameter = diameter(&corners);
        Self {
            corners,
            center,
            distances,
            diameter,
            objective_history,
        }
    }
}

/// Settings for [`find_corners`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerSearch {
    pub particles: usize,
    pub steps: usize,
    pub eta: f64,
    pub budget: PerturbationBudget,
    pub seed: u64,
}

impl CornerSearch {
    /// Default particle count.
    pub const PARTICLES: usize = 10;
    /// Default number of ascent rounds.
    pub const STEPS: usize = 40;
    /// Default ascent step size.
    pub const ETA: f64 = 2.0 / 255.0;

    pub fn new(budget: PerturbationBudget, seed: u64) -> Self {
        Self {
            particles: Self::PARTICLES,
            steps: Self::STEPS,
            eta: Self::ETA,
            budget,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.budget.validate()?;
        if self.particles == 0 {
            return Err(Error::contract("corner search needs at least one particle"));
        }
        if self.steps == 0 {
            return Err(Error::contract("corner search needs at least one step"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::contract(format!("eta must be > 0, got {}", self.eta)));
        }
        Ok(())
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn add(x: &[f64], p: &[f64]) -> Vec<f64> {
    x.iter().zip(p).map(|(a, b)| a + b).collect()
}

/// Draws `n` particles with i.i.d. `U(-ε, ε)` coordinates.
pub fn init_particles(
    seed: u64,
    n_particles: usize,
    dim: usize,
    budget: PerturbationBudget,
) -> Result<ParticleSet> {
    if n_particles == 0 || dim == 0 {
        return Err(Error::contract(format!(
            "need n_particles >= 1 and dim >= 1, got {n_particles} and {dim}"
        )));
    }
    budget.validate()?;
    let eps = budget.epsilon;
    let mut rng = rng_from_seed(seed);
    let particles = (0..n_particles)
        .map(|_| {
            (0..dim)
                .map(|_| if eps == 0.0 { 0.0 } else { rng.gen_range(-eps..=eps) })
                .collect()
        })
        .collect();
    Ok(ParticleSet {
        particles,
        budget,
        rng_seed: seed,
    })
}

/// Euclidean projection of `p` onto the feasible perturbation box.
///
/// Coordinates are clamped to `[-ε, ε]` and, with an input clip, to
/// `[lo - x, hi - x]`. The clip bound is then nudged by ulps where needed so
/// that `x + p` lands inside `[lo, hi]` exactly in floating point.
pub fn project(p: &[f64], budget: &PerturbationBudget, x: &[f64]) -> Vec<f64> {
    let eps = budget.epsilon;
    p.iter()
        .zip(x)
        .map(|(&pi, &xi)| {
            let mut q = pi.clamp(-eps, eps);
            if let Some((lo, hi)) = budget.input_clip {
                q = q.clamp(lo - xi, hi - xi);
                while xi + q > hi {
                    q = q.next_down();
                }
                while xi + q < lo {
                    q = q.next_up();
                }
            }
            q
        })
        .collect()
}

/// Mean of `f(x + εₙ)` over the particles, accumulated in index order.
pub fn empirical_center(model: &Mlp, x: &[f64], particles: &ParticleSet) -> Result<Vec<f64>> {
    let outputs = particles
        .particles
        .iter()
        .map(|p| model.logits(&add(x, p)))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_of(&outputs))
}

/// Running mean in index order. Identical outputs give a center that is
/// bit-equal to them, which a plain sum-then-divide does not guarantee.
fn mean_of(outputs: &[Vec<f64>]) -> Vec<f64> {
    let mut center = outputs[0].clone();
    for (k, o) in outputs.iter().enumerate().skip(1) {
        let n = (k + 1) as f64;
        center.iter_mut().zip(o).for_each(|(c, v)| *c += (v - *c) / n);
    }
    center
}

/// One projected ascent step on `‖f(x + p) − center‖²`.
pub fn ascend_step(
    model: &Mlp,
    x: &[f64],
    particle: &[f64],
    center: &[f64],
    eta: f64,
    budget: &PerturbationBudget,
) -> Result<Vec<f64>> {
    if particle.len() != x.len() {
        return Err(Error::shape("particle", x.len(), particle.len()));
    }
    if center.len() != model.output_dim() {
        return Err(Error::shape("center", model.output_dim(), center.len()));
    }
    let (out, trace) = model.forward(&add(x, particle))?;
    let cotangent: Vec<f64> = out.iter().zip(center).map(|(o, c)| 2.0 * (o - c)).collect();
    let grad = model.grad_input(&trace, &cotangent)?;
    if let Some(j) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("ascent gradient coordinate {j}")));
    }
    let stepped: Vec<f64> = particle.iter().zip(&grad).map(|(p, g)| p + eta * g).collect();
    Ok(project(&stepped, budget, x))
}

/// Runs the particle corner search from freshly drawn particles.
pub fn find_corners(
    model: &Mlp,
    x: &[f64],
    cfg: &CornerSearch,
) -> Result<(ParticleSet, PolytopeEstimate)> {
    cfg.validate()?;
    if x.len() != model.input_dim() {
        return Err(Error::shape("clean sample", model.input_dim(), x.len()));
    }
    let mut set = init_particles(cfg.seed, cfg.particles, x.len(), cfg.budget)?;
    // Uniform draws may leave the input domain; start from a feasible point.
    if cfg.budget.input_clip.is_some() {
        for p in &mut set.particles {
            *p = project(p, &cfg.budget, x);
        }
    }
    let mut center = empirical_center(model, x, &set)?;
    let mut history = Vec::with_capacity(cfg.steps);
    let mut outputs = Vec::new();
    for _ in 0..cfg.steps {
        set.particles = set
            .particles
            .par_iter()
            .enumerate()
            .map(|(n, p)| {
                ascend_step(model, x, p, &center, cfg.eta, &cfg.budget).map_err(|e| match e {
                    Error::NonFinite(msg) => Error::NonFinite(format!("particle {n}: {msg}")),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        outputs = set
            .particles
            .par_iter()
            .map(|p| model.logits(&add(x, p)))
            .collect::<Result<Vec<_>>>()?;
        center = mean_of(&outputs);
        let objective =
            outputs.iter().map(|o| sq_dist(o, &center)).sum::<f64>() / outputs.len() as f64;
        history.push(objective);
    }
    Ok((set, PolytopeEstimate::from_corners(outputs, center, history)))
}

/// Largest pairwise Euclidean distance between corners; 0 for a single corner.
pub fn diameter(corners: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in corners.iter().enumerate() {
        for b in &corners[i + 1..] {
            best = best.max(sq_dist(a, b));
        }
    }
    best.sqrt()
}
