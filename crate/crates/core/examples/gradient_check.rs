// Compares backprop gradients of a small MLP against central differences.

use cap_lab::nn::{softmax_cross_entropy, LabelVector};
use cap_lab::{Activation, Mlp};

const H: f64 = 1e-5;

fn loss(model: &Mlp, x: &[f64], y: &LabelVector) -> cap_lab::Result<f64> {
    Ok(softmax_cross_entropy(&model.logits(x)?, y)?.0)
}

pub fn run_example() -> cap_lab::Result<f64> {
    let mut model = Mlp::init(7, &[3, 8, 8, 4], Activation::Relu)?;
    let x = [0.3, -0.7, 1.1];
    let y = LabelVector::new(2, 4)?;

    let (logits, trace) = model.forward(&x)?;
    let (_, cot) = softmax_cross_entropy(&logits, &y)?;
    let analytic: Vec<f64> = model.grad_params(&trace, &cot)?.iter().collect();

    let mut worst = 0.0f64;
    for i in 0..model.parameter_count() {
        let w = model.param(i);
        model.set_param(i, w + H);
        let up = loss(&model, &x, &y)?;
        model.set_param(i, w - H);
        let down = loss(&model, &x, &y)?;
        model.set_param(i, w);
        let fd = (up - down) / (2.0 * H);
        let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    println!("{} parameters, worst relative error {worst:.2e}", model.parameter_count());

    let dx = model.grad_input(&trace, &cot)?;
    println!("input gradient {dx:?}");
    Ok(worst)
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
