// Runs the particle corner search around one point and writes an SVG of
// the corner logits.

use cap_lab::plot::corners_svg;
use cap_lab::polytope::{find_corners, CornerSearch, PerturbationBudget};
use cap_lab::{Activation, Mlp};

pub fn run_example() -> cap_lab::Result<f64> {
    let model = Mlp::init(3, &[2, 16, 2], Activation::Relu)?;
    let x = [0.2, -0.4];

    let mut search = CornerSearch::new(PerturbationBudget::linf(0.1)?, 11);
    search.eta = 0.02;
    let (particles, est) = find_corners(&model, &x, &search)?;

    for (p, c) in particles.particles.iter().zip(&est.corners) {
        println!("δ = [{:+.4}, {:+.4}]  f(x+δ) = [{:+.4}, {:+.4}]", p[0], p[1], c[0], c[1]);
    }
    println!("center {:?}", est.center);
    println!("diameter {:.4}", est.diameter);
    println!(
        "spread per round: {:.3e} -> {:.3e}",
        est.objective_history[0],
        est.objective_history[est.objective_history.len() - 1]
    );

    if let Some(svg) = corners_svg(&est, "corners around (0.2, -0.4)") {
        let path = std::env::temp_dir().join("cap_lab_corners.svg");
        std::fs::write(&path, svg).map_err(|e| cap_lab::Error::Io { path: path.clone(), source: e })?;
        println!("wrote {}", path.display());
    }
    Ok(est.diameter)
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
