//! Training loops: corner-confinement training plus two baselines.
//!
//! The confinement objective for one sample is
//!
//! ```text
//! CE(softmax(f(x)), y) + λ Σₙ ‖f(x + εₙ*) − C*‖²
//! ```
//!
//! where `εₙ*` and `C*` come from [`find_corners`] run against the current
//! parameters. Both are held constant when differentiating with respect to
//! the parameters. A minibatch loss is the mean of the per-sample losses.
//!
//! Baselines: plain cross-entropy (`clean`) and cross-entropy on PGD
//! examples (`vanilla_at`).

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{pgd, AttackConfig, AttackKind};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, LabelVector, Mlp, ParamGrads};
use crate::polytope::{find_corners, CornerSearch, ParticleSet, PerturbationBudget};
use crate::rng::{derive_seed, rng_from_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainerKind {
    Cap,
    Clean,
    VanillaAt,
}

impl std::fmt::Display for TrainerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainerKind::Cap => "cap",
            TrainerKind::Clean => "clean",
            TrainerKind::VanillaAt => "vanilla_at",
        })
    }
}

/// Particle settings for the corner search; the seed is derived per visit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolytopeConfig {
    #[serde(default = "PolytopeConfig::default_particles")]
    pub particles: usize,
    #[serde(default = "PolytopeConfig::default_steps")]
    pub steps: usize,
    #[serde(default = "PolytopeConfig::default_eta")]
    pub eta: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub input_clip: Option<(f64, f64)>,
}

impl PolytopeConfig {
    fn default_particles() -> usize {
        CornerSearch::PARTICLES
    }
    fn default_steps() -> usize {
        CornerSearch::STEPS
    }
    fn default_eta() -> f64 {
        CornerSearch::ETA
    }

    pub fn new(epsilon: f64) -> Self {
        Self {
            particles: Self::default_particles(),
            steps: Self::default_steps(),
            eta: Self::default_eta(),
            epsilon,
            input_clip: None,
        }
    }

    pub fn search(&self, seed: u64) -> CornerSearch {
        CornerSearch {
            particles: self.particles,
            steps: self.steps,
            eta: self.eta,
            budget: PerturbationBudget {
                epsilon: self.epsilon,
                norm: Default::default(),
                input_clip: self.input_clip,
            },
            seed,
        }
    }
}

/// Learning-rate drop: after `epoch` epochs have completed, divide by `divisor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrDrop {
    pub epoch: usize,
    pub divisor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub trainer: TrainerKind,
    #[serde(default)]
    pub lambda: f64,
    pub polytope: PolytopeConfig,
    pub epochs: usize,
    #[serde(default = "TrainConfig::default_batch_size")]
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default)]
    pub lr_drops: Vec<LrDrop>,
    #[serde(default = "TrainConfig::default_momentum")]
    pub momentum: f64,
    #[serde(default = "TrainConfig::default_weight_decay")]
    pub weight_decay: f64,
    /// Inner maximisation for `vanilla_at`.
    #[serde(default)]
    pub attack: Option<AttackConfig>,
    /// Training samples (taken from the front) on which the mean polytope
    /// diameter is tracked each epoch.
    #[serde(default = "TrainConfig::default_probe_size")]
    pub probe_size: usize,
    /// Set from the run seed, never read from config files.
    #[serde(default, skip_deserializing)]
    pub seed: u64,
}

impl TrainConfig {
    pub const MOMENTUM: f64 = 0.9;
    pub const WEIGHT_DECAY: f64 = 5e-4;
    pub const BATCH_SIZE: usize = 128;

    fn default_batch_size() -> usize {
        Self::BATCH_SIZE
    }
    fn default_momentum() -> f64 {
        Self::MOMENTUM
    }
    fn default_weight_decay() -> f64 {
        Self::WEIGHT_DECAY
    }
    fn default_probe_size() -> usize {
        32
    }

    pub fn new(trainer: TrainerKind, epochs: usize, lr: f64, polytope: PolytopeConfig) -> Self {
        Self {
            trainer,
            lambda: 0.0,
            polytope,
            epochs,
            batch_size: Self::BATCH_SIZE,
            lr,
            lr_drops: Vec::new(),
            momentum: Self::MOMENTUM,
            weight_decay: Self::WEIGHT_DECAY,
            attack: None,
            probe_size: Self::default_probe_size(),
            seed: 0,
        }
    }

    /// Checks every field, naming the first offender.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::Config {
                field: field.to_string(),
                message,
            })
        };
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", format!("must be >= 0, got {}", self.lambda));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("must be > 0, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", format!("must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay", format!("must be >= 0, got {}", self.weight_decay));
        }
        for (i, d) in self.lr_drops.iter().enumerate() {
            if !(d.divisor > 0.0 && d.divisor.is_finite()) {
                return bad("lr_drops", format!("divisor must be > 0, got {}", d.divisor));
            }
            if i > 0 && d.epoch <= self.lr_drops[i - 1].epoch {
                return bad("lr_drops", "epochs must be strictly increasing".into());
            }
        }
        if let Err(e) = self.polytope.search(0).validate() {
            return bad("polytope", e.to_string());
        }
        if self.trainer == TrainerKind::VanillaAt {
            match &self.attack {
                None => return bad("attack", "vanilla_at needs an attack config".into()),
                Some(a) if a.kind != AttackKind::Pgd => {
                    return bad("attack", "vanilla_at uses a PGD inner maximisation".into())
                }
                Some(a) => {
                    if let Err(e) = a.validate() {
                        return bad("attack", e.to_string());
                    }
                }
            }
        }
        Ok(())
    }

    /// Learning rate in effect during (1-based) `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr_drops
            .iter()
            .filter(|d| epoch > d.epoch)
            .fold(self.lr, |lr, d| lr / d.divisor)
    }
}

/// SGD hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
}

/// Momentum buffers and schedule position.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: ParamGrads,
    pub lr: f64,
    pub epoch: usize,
}

impl OptimizerState {
    pub fn new(model: &Mlp, lr: f64) -> Self {
        Self {
            velocity: ParamGrads::zeros_like(model),
            lr,
            epoch: 0,
        }
    }
}

/// SGD with momentum and coupled weight decay:
/// `v ← μ v + (g + wd·θ)`, `θ ← θ − lr·v`.
pub fn sgd_step(model: &mut Mlp, grads: &ParamGrads, state: &mut OptimizerState, cfg: &SgdConfig) {
    let lr = state.lr;
    for ((w, b), (g, v)) in model
        .params_mut()
        .zip(grads.layers.iter().zip(state.velocity.layers.iter_mut()))
    {
        let update = |p: &mut [f64], g: &[f64], v: &mut [f64]| {
            for ((p, g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                *v = cfg.momentum * *v + (g + cfg.weight_decay * *p);
                *p -= lr * *v;
            }
        };
        update(w, &g.weights, &mut v.weights);
        update(b, &g.bias, &mut v.bias);
    }
}

/// Per-sample loss value, its two terms and the parameter gradient.
#[derive(Debug, Clone)]
pub struct CapLoss {
    pub total: f64,
    pub ce: f64,
    pub reg: f64,
    pub grads: ParamGrads,
}

/// Cross-entropy on `x` plus `λ` times the summed squared distance from each
/// corner output to the (constant) center.
pub fn cap_loss(
    model: &Mlp,
    x: &[f64],
    y: &LabelVector,
    corners: &ParticleSet,
    center: &[f64],
    lambda: f64,
) -> Result<CapLoss> {
    if center.len() != model.output_dim() {
        return Err(Error::contract(format!(
            "center has length {}, model emits {}",
            center.len(),
            model.output_dim()
        )));
    }
    let (ce, mut grads) = ce_loss(model, x, y)?;
    let mut reg = 0.0;
    if lambda != 0.0 {
        for p in &corners.particles {
            let xp: Vec<f64> = x.iter().zip(p).map(|(a, b)| a + b).collect();
            let (out, trace) = model.forward(&xp)?;
            let cot: Vec<f64> = out
                .iter()
                .zip(center)
                .map(|(o, c)| 2.0 * lambda * (o - c))
                .collect();
            reg += out.iter().zip(center).map(|(o, c)| (o - c) * (o - c)).sum::<f64>();
            model.accumulate_grad_params(&trace, &cot, &mut grads)?;
        }
    }
    Ok(CapLoss {
        total: ce + lambda * reg,
        ce,
        reg,
        grads,
    })
}

/// Cross-entropy of `softmax(f(x))` and its parameter gradient.
pub fn ce_loss(model: &Mlp, x: &[f64], y: &LabelVector) -> Result<(f64, ParamGrads)> {
    let (logits, trace) = model.forward(x)?;
    let (loss, cot) = softmax_cross_entropy(&logits, y)?;
    Ok((loss, model.grad_params(&trace, &cot)?))
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub clean_acc: f64,
    /// Mean cross-entropy over the epoch's samples.
    pub ce_term: f64,
    /// Mean summed squared corner distance (before multiplying by λ).
    pub reg_term: f64,
    pub mean_diameter: f64,
    pub lr: f64,
    /// Kept out of serialized reports so reruns produce identical files.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
    #[serde(default)]
    pub checkpoint: Option<String>,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str = "epoch,clean_acc,ce_term,reg_term,mean_diameter,lr";

    pub fn history_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.history {
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{:?},{:?}\n",
                r.epoch, r.clean_acc, r.ce_term, r.reg_term, r.mean_diameter, r.lr
            ));
        }
        out
    }
}

/// Seed of the particle set drawn when `sample` is visited in `epoch`.
pub fn particle_seed(seed: u64, epoch: usize, sample: usize) -> u64 {
    derive_seed(seed, &[stream::PARTICLES, epoch as u64, sample as u64])
}

/// Mean polytope diameter over `samples`, using probe-stream particle seeds.
pub fn mean_diameter(
    model: &Mlp,
    dataset: &Dataset,
    samples: &[usize],
    polytope: &PolytopeConfig,
    seed: u64,
) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let diameters = samples
        .par_iter()
        .map(|&i| {
            let search = polytope.search(derive_seed(seed, &[stream::PROBE, i as u64]));
            find_corners(model, dataset.features().row(i), &search).map(|(_, est)| est.diameter)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(diameters.iter().sum::<f64>() / diameters.len() as f64)
}

struct SampleOutcome {
    ce: f64,
    reg: f64,
    correct: bool,
    grads: ParamGrads,
}

fn sample_step(
    model: &Mlp,
    dataset: &Dataset,
    cfg: &TrainConfig,
    epoch: usize,
    i: usize,
) -> Result<SampleOutcome> {
    let x = dataset.features().row(i);
    let y = dataset.label_vector(i)?;
    let correct = model.predict(x)? == y.class();
    match cfg.trainer {
        TrainerKind::Clean => {
            let (ce, grads) = ce_loss(model, x, &y)?;
            Ok(SampleOutcome { ce, reg: 0.0, correct, grads })
        }
        TrainerKind::Cap if cfg.lambda == 0.0 => {
            // The regulariser vanishes; skip the corner search so the
            // trajectory is exactly the clean one.
            let (ce, grads) = ce_loss(model, x, &y)?;
            Ok(SampleOutcome { ce, reg: 0.0, correct, grads })
        }
        TrainerKind::Cap => {
            let search = cfg.polytope.search(particle_seed(cfg.seed, epoch, i));
            let (particles, estimate) = find_corners(model, x, &search)?;
            let loss = cap_loss(model, x, &y, &particles, &estimate.center, cfg.lambda)?;
            Ok(SampleOutcome {
                ce: loss.ce,
                reg: loss.reg,
                correct,
                grads: loss.grads,
            })
        }
        TrainerKind::VanillaAt => {
            let attack = cfg
                .attack
                .as_ref()
                .ok_or_else(|| Error::contract("vanilla_at needs an attack config"))?;
            let s = derive_seed(cfg.seed, &[stream::TRAIN_ATTACK, epoch as u64, i as u64]);
            let adv = pgd(model, x, &y, attack, s)?;
            let (ce, grads) = ce_loss(model, &adv, &y)?;
            Ok(SampleOutcome { ce, reg: 0.0, correct, grads })
        }
    }
}

/// Trains `model` in place according to `cfg` and returns the per-epoch history.
///
/// Samples in a minibatch are processed concurrently against the same
/// parameters; their gradients are summed in sample-index order, so the
/// result does not depend on the thread count.
pub fn train(mut model: Mlp, dataset: &Dataset, cfg: &TrainConfig) -> Result<(Mlp, TrainReport)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::contract("empty training set"));
    }
    if dataset.dim() != model.input_dim() || dataset.classes() != model.output_dim() {
        return Err(Error::contract(format!(
            "model {:?} does not fit data with d = {}, c = {}",
            model.dims(),
            dataset.dim(),
            dataset.classes()
        )));
    }
    let sgd = SgdConfig {
        momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
    };
    let mut state = OptimizerState::new(&model, cfg.lr);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut shuffle_rng = rng_from_seed(derive_seed(cfg.seed, &[stream::SHUFFLE]));
    let probe: Vec<usize> = (0..cfg.probe_size.min(dataset.len())).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        state.epoch = epoch;
        state.lr = cfg.lr_at(epoch);
        order.shuffle(&mut shuffle_rng);
        let (mut ce_sum, mut reg_sum, mut correct) = (0.0, 0.0, 0usize);

        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let snapshot = &model;
            let outcomes = batch
                .par_iter()
                .map(|&i| sample_step(snapshot, dataset, cfg, epoch, i))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| annotate(e, epoch, b))?;
            let mut grads = ParamGrads::zeros_like(&model);
            for o in &outcomes {
                ce_sum += o.ce;
                reg_sum += o.reg;
                correct += usize::from(o.correct);
                grads.add_assign(&o.grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            let batch_loss = outcomes
                .iter()
                .map(|o| o.ce + cfg.lambda * o.reg)
                .sum::<f64>();
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at epoch {epoch}, batch {b} is {batch_loss}"
                )));
            }
            sgd_step(&mut model, &grads, &mut state, &sgd);
        }

        let mean_diameter = mean_diameter(&model, dataset, &probe, &cfg.polytope, cfg.seed)
            .map_err(|e| annotate(e, epoch, usize::MAX))?;
        let n = dataset.len() as f64;
        history.push(EpochRecord {
            epoch,
            clean_acc: correct as f64 / n,
            ce_term: ce_sum / n,
            reg_term: reg_sum / n,
            mean_diameter,
            lr: state.lr,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        });
    }

    Ok((
        model,
        TrainReport {
            config: cfg.clone(),
            seed: cfg.seed,
            history,
            checkpoint: None,
        },
    ))
}

fn annotate(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFinite(msg) if batch == usize::MAX => {
            Error::NonFinite(format!("epoch {epoch}, probe: {msg}"))
        }
        Error::NonFinite(msg) => Error::NonFinite(format!("epoch {epoch}, batch {batch}: {msg}")),
        other => other,
    }
}
