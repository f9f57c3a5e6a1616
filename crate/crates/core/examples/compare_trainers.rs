// Clean training, PGD adversarial training and confinement training on the
// same data and seed, evaluated with the same attack.

use cap_lab::attacks::{clean_accuracy, robust_accuracy, AttackConfig};
use cap_lab::data::{gen_blobs, split};
use cap_lab::train::{mean_diameter, train, PolytopeConfig, TrainConfig, TrainerKind};
use cap_lab::{Activation, Mlp};

pub fn run_example() -> cap_lab::Result<Vec<(TrainerKind, f64, f64, f64)>> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(15);
    let centers = vec![vec![0.0, 0.4], vec![-0.35, -0.2], vec![0.35, -0.2]];
    let data = gen_blobs(2, 60, &centers, 0.1)?;
    let (train_set, test_set) = split(&data, 0.5, 2)?;

    let mut polytope = PolytopeConfig::new(0.1);
    polytope.steps = 10;
    polytope.eta = 0.02;
    let mut eval = AttackConfig::pgd(0.1, 0.02, 20, true);
    eval.seed = 2;
    let probe: Vec<usize> = (0..test_set.len()).collect();

    let mut rows = Vec::new();
    println!("{:<11} {:>6} {:>7} {:>9}", "trainer", "clean", "PGD-20", "diameter");
    for trainer in [TrainerKind::Clean, TrainerKind::VanillaAt, TrainerKind::Cap] {
        let mut cfg = TrainConfig::new(trainer, epochs, 0.05, polytope);
        cfg.batch_size = 16;
        cfg.probe_size = 0;
        cfg.seed = 2;
        if trainer == TrainerKind::Cap {
            cfg.lambda = 0.6;
        }
        if trainer == TrainerKind::VanillaAt {
            cfg.attack = Some(AttackConfig::pgd(0.1, 0.025, 10, true));
        }
        let model = Mlp::init(2, &[2, 16, 16, 3], Activation::Relu)?;
        let (model, _) = train(model, &train_set, &cfg)?;
        let clean = clean_accuracy(&model, &test_set)?;
        let robust = robust_accuracy(&model, &test_set, &eval)?;
        let diam = mean_diameter(&model, &test_set, &probe, &polytope, 2)?;
        println!("{:<11} {clean:>6.3} {robust:>7.3} {diam:>9.4}", trainer.to_string());
        rows.push((trainer, clean, robust, diam));
    }
    Ok(rows)
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
