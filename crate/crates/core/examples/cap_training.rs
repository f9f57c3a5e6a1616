// Trains a small MLP with the confinement regularizer and prints the
// per-epoch loss terms and the polytope diameter on the probe samples.

use cap_lab::attacks::clean_accuracy;
use cap_lab::data::{gen_blobs, split};
use cap_lab::train::{train, PolytopeConfig, TrainConfig, TrainerKind};
use cap_lab::{Activation, Mlp};

pub fn run_example() -> cap_lab::Result<(f64, f64)> {
    let centers = vec![vec![0.0, 0.4], vec![-0.35, -0.2], vec![0.35, -0.2]];
    let data = gen_blobs(1, 60, &centers, 0.1)?;
    let (train_set, test_set) = split(&data, 0.5, 1)?;

    let mut polytope = PolytopeConfig::new(0.1);
    polytope.steps = 10;
    polytope.eta = 0.02;
    let mut cfg = TrainConfig::new(TrainerKind::Cap, 20, 0.05, polytope);
    cfg.lambda = 0.6;
    cfg.batch_size = 16;
    cfg.probe_size = 16;
    cfg.seed = 1;

    let model = Mlp::init(1, &[2, 16, 16, 3], Activation::Relu)?;
    let (model, report) = train(model, &train_set, &cfg)?;
    for r in report.history.iter().step_by(5) {
        println!(
            "epoch {:3}  acc {:.3}  ce {:.4}  reg {:.4}  diameter {:.4}",
            r.epoch, r.clean_acc, r.ce_term, r.reg_term, r.mean_diameter
        );
    }
    let first = report.history[0].mean_diameter;
    let last = report.history[report.history.len() - 1].mean_diameter;
    println!("test accuracy {:.3}", clean_accuracy(&model, &test_set)?);
    Ok((first, last))
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
