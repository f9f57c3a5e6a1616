//! White-box l∞ attacks (FGSM, PGD) and robust-accuracy measurement.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, LabelVector, Mlp};
use crate::rng::{derive_seed, rng_from_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Fgsm,
    Pgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub epsilon: f64,
    /// PGD step size α; ignored by FGSM.
    #[serde(default = "AttackConfig::default_step_size")]
    pub step_size: f64,
    /// PGD iteration count; ignored by FGSM.
    #[serde(default = "AttackConfig::default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub random_start: bool,
    #[serde(default)]
    pub input_clip: Option<(f64, f64)>,
    /// Seed for the random start; each sample derives its own stream from it.
    /// Set from the run seed, never read from config files.
    #[serde(default, skip_deserializing)]
    pub seed: u64,
}

impl AttackConfig {
    fn default_step_size() -> f64 {
        2.0 / 255.0
    }

    fn default_steps() -> usize {
        20
    }

    pub fn fgsm(epsilon: f64) -> Self {
        Self {
            kind: AttackKind::Fgsm,
            epsilon,
            step_size: epsilon,
            steps: 1,
            random_start: false,
            input_clip: None,
            seed: 0,
        }
    }

    pub fn pgd(epsilon: f64, step_size: f64, steps: usize, random_start: bool) -> Self {
        Self {
            kind: AttackKind::Pgd,
            epsilon,
            step_size,
            steps,
            random_start,
            input_clip: None,
            seed: 0,
        }
    }

    /// Short label such as `FGSM` or `PGD-20`.
    pub fn label(&self) -> String {
        match self.kind {
            AttackKind::Fgsm => "FGSM".to_string(),
            AttackKind::Pgd => format!("PGD-{}", self.steps),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::contract(format!("attack epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.kind == AttackKind::Pgd {
            if self.steps == 0 {
                return Err(Error::contract("PGD needs at least one step"));
            }
            if !(self.step_size > 0.0 && self.step_size.is_finite()) {
                return Err(Error::contract(format!(
                    "PGD step size must be > 0, got {}",
                    self.step_size
                )));
            }
        }
        if let Some((lo, hi)) = self.input_clip {
            if !(lo < hi) {
                return Err(Error::contract(format!("input clip needs lo < hi, got ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

/// Gradient of the cross-entropy loss with respect to the input.
pub fn input_loss_gradient(model: &Mlp, x: &[f64], y: &LabelVector) -> Result<(f64, Vec<f64>)> {
    let (logits, trace) = model.forward(x)?;
    let (loss, cot) = softmax_cross_entropy(&logits, y)?;
    let grad = model.grad_input(&trace, &cot)?;
    if let Some(j) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("input gradient coordinate {j}")));
    }
    Ok((loss, grad))
}

/// `sign` with `sign(0) = 0`.
#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Clamps `adv` into the ε-box around `x` and then into the input clip.
fn project_box(adv: &mut [f64], x: &[f64], epsilon: f64, clip: Option<(f64, f64)>) {
    for (a, &xi) in adv.iter_mut().zip(x) {
        *a = a.clamp(xi - epsilon, xi + epsilon);
        if let Some((lo, hi)) = clip {
            *a = a.clamp(lo, hi);
        }
    }
}

pub fn fgsm(model: &Mlp, x: &[f64], y: &LabelVector, cfg: &AttackConfig) -> Result<Vec<f64>> {
    if cfg.kind != AttackKind::Fgsm {
        return Err(Error::contract("fgsm called with a non-FGSM config"));
    }
    cfg.validate()?;
    let (_, grad) = input_loss_gradient(model, x, y)?;
    let mut adv: Vec<f64> = x
        .iter()
        .zip(&grad)
        .map(|(xi, g)| xi + cfg.epsilon * sign(*g))
        .collect();
    project_box(&mut adv, x, cfg.epsilon, cfg.input_clip);
    Ok(adv)
}

/// PGD with signed steps. `stream_seed` keys the random start.
pub fn pgd(
    model: &Mlp,
    x: &[f64],
    y: &LabelVector,
    cfg: &AttackConfig,
    stream_seed: u64,
) -> Result<Vec<f64>> {
    if cfg.kind != AttackKind::Pgd {
        return Err(Error::contract("pgd called with a non-PGD config"));
    }
    cfg.validate()?;
    let eps = cfg.epsilon;
    let mut adv = x.to_vec();
    if cfg.random_start && eps > 0.0 {
        let mut rng = rng_from_seed(stream_seed);
        for a in &mut adv {
            *a += rng.gen_range(-eps..=eps);
        }
        project_box(&mut adv, x, eps, cfg.input_clip);
    }
    for _ in 0..cfg.steps {
        let (_, grad) = input_loss_gradient(model, &adv, y)?;
        for (a, g) in adv.iter_mut().zip(&grad) {
            *a += cfg.step_size * sign(*g);
        }
        project_box(&mut adv, x, eps, cfg.input_clip);
    }
    Ok(adv)
}

/// Attacks one sample; `index` selects its random-start stream.
pub fn attack(
    model: &Mlp,
    x: &[f64],
    y: &LabelVector,
    cfg: &AttackConfig,
    index: u64,
) -> Result<Vec<f64>> {
    match cfg.kind {
        AttackKind::Fgsm => fgsm(model, x, y, cfg),
        AttackKind::Pgd => pgd(
            model,
            x,
            y,
            cfg,
            derive_seed(cfg.seed, &[stream::EVAL_ATTACK, index]),
        ),
    }
}

/// Fraction of samples still classified correctly after the attack.
///
/// The zero perturbation is always in budget, so a sample only counts if
/// both the clean point and the attacked point are classified correctly;
/// an attack can therefore never raise accuracy above the clean value.
/// With `epsilon = 0` this is exactly clean accuracy.
pub fn robust_accuracy(model: &Mlp, dataset: &Dataset, cfg: &AttackConfig) -> Result<f64> {
    cfg.validate()?;
    let correct = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let x = dataset.features().row(i);
            let y = dataset.label_vector(i)?;
            if model.predict(x)? != y.class() {
                return Ok(0);
            }
            let adv = attack(model, x, &y, cfg, i as u64)?;
            Ok(usize::from(model.predict(&adv)? == y.class()))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / dataset.len() as f64)
}

/// Fraction of unperturbed samples classified correctly.
pub fn clean_accuracy(model: &Mlp, dataset: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for i in 0..dataset.len() {
        if model.predict(dataset.features().row(i))? == dataset.labels()[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// One line of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub attack: String,
    pub epsilon: f64,
    pub steps: usize,
    pub accuracy: f64,
    pub n_samples: usize,
    pub seed: u64,
}

pub fn evaluate(model: &Mlp, dataset: &Dataset, cfg: &AttackConfig) -> Result<EvalResult> {
    Ok(EvalResult {
        attack: cfg.label(),
        epsilon: cfg.epsilon,
        steps: match cfg.kind {
            AttackKind::Fgsm => 1,
            AttackKind::Pgd => cfg.steps,
        },
        accuracy: robust_accuracy(model, dataset, cfg)?,
        n_samples: dataset.len(),
        seed: cfg.seed,
    })
}
