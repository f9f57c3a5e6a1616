#![allow(dead_code)]

use cap_lab::nn::{Activation, Dense, LabelVector, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Forward pass written out as plain nested loops, independent of `Mlp::forward`.
pub fn naive_forward(model: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for layer in model.layers() {
        let mut out = vec![0.0; layer.rows()];
        for (r, o) in out.iter_mut().enumerate() {
            let mut s = layer.bias()[r];
            for c in 0..layer.cols() {
                s += layer.weights()[r * layer.cols() + c] * h[c];
            }
            *o = match layer.activation() {
                Activation::Relu => s.max(0.0),
                Activation::Identity => s,
            };
        }
        h = out;
    }
    h
}

/// Single affine layer `f(x) = Wx + b` with no activation.
pub fn linear(w: &[Vec<f64>], b: &[f64]) -> Mlp {
    let rows = w.len();
    let cols = w[0].len();
    let flat = w.iter().flatten().copied().collect();
    Mlp::new(vec![Dense::new(rows, cols, flat, b.to_vec(), Activation::Identity).unwrap()]).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// All `2^d` sign patterns scaled by `eps`.
pub fn vertices(d: usize, eps: f64) -> Vec<Vec<f64>> {
    (0..1usize << d)
        .map(|mask| {
            (0..d)
                .map(|j| if mask >> j & 1 == 1 { eps } else { -eps })
                .collect()
        })
        .collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cross-entropy via log-sum-exp, written independently of the library.
pub fn ce_oracle(logits: &[f64], class: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    lse - logits[class]
}

pub fn label(class: usize, classes: usize) -> LabelVector {
    LabelVector::new(class, classes).unwrap()
}

/// Relative error with a floor that keeps tiny magnitudes from dominating.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central difference of `f` along parameter `i`.
pub fn fd_param(model: &mut Mlp, i: usize, h: f64, f: impl Fn(&Mlp) -> f64) -> f64 {
    let w = model.param(i);
    model.set_param(i, w + h);
    let up = f(model);
    model.set_param(i, w - h);
    let down = f(model);
    model.set_param(i, w);
    (up - down) / (2.0 * h)
}

/// Central difference of `f` along input coordinate `j`.
pub fn fd_input(x: &[f64], j: usize, h: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut xp = x.to_vec();
    xp[j] += h;
    let up = f(&xp);
    xp[j] -= 2.0 * h;
    let down = f(&xp);
    (up - down) / (2.0 * h)
}

/// Moves every pre-activation at least `margin` away from zero by shifting
/// biases, so finite differences never straddle a relu kink.
pub fn away_from_kinks(model: &mut Mlp, inputs: &[Vec<f64>], margin: f64) {
    let depth = model.layers().len();
    let mut offset = 0;
    for k in 0..depth {
        let (rows, cols) = (model.layers()[k].rows(), model.layers()[k].cols());
        for r in 0..rows {
            let bias_index = offset + rows * cols + r;
            for _ in 0..8 {
                let near = inputs.iter().any(|x| {
                    let (_, trace) = model.forward(x).unwrap();
                    trace.pre_activation(k)[r].abs() < margin
                });
                if !near {
                    break;
                }
                let b = model.param(bias_index);
                model.set_param(bias_index, b + 3.0 * margin);
            }
        }
        offset += rows * cols + rows;
    }
}

pub fn preset_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(name)
}

/// A shipped preset with its run seed replaced.
pub fn preset(name: &str, seed: u64) -> cap_lab::cli::RunConfig {
    let mut cfg = cap_lab::cli::RunConfig::load(preset_path(name)).unwrap();
    cfg.set_seed(seed);
    cfg
}

pub fn bits(model: &Mlp) -> Vec<u64> {
    (0..model.parameter_count()).map(|i| model.param(i).to_bits()).collect()
}
