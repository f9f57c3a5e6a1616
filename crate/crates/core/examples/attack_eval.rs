// Clean, FGSM and PGD accuracy of a quickly trained classifier.

use cap_lab::attacks::{clean_accuracy, evaluate, AttackConfig};
use cap_lab::data::{gen_moons, split};
use cap_lab::train::{train, PolytopeConfig, TrainConfig, TrainerKind};
use cap_lab::{Activation, Mlp};

pub fn run_example() -> cap_lab::Result<Vec<f64>> {
    let data = gen_moons(4, 100, 0.1)?;
    let (train_set, test_set) = split(&data, 0.5, 4)?;
    let mut cfg = TrainConfig::new(TrainerKind::Clean, 60, 0.05, PolytopeConfig::new(0.1));
    cfg.batch_size = 16;
    cfg.probe_size = 0;
    let model = Mlp::init(4, &[2, 32, 32, 2], Activation::Relu)?;
    let (model, _) = train(model, &train_set, &cfg)?;

    println!("clean {:.3}", clean_accuracy(&model, &test_set)?);
    let mut accs = Vec::new();
    for eps in [0.05, 0.1, 0.2] {
        for mut atk in [AttackConfig::fgsm(eps), AttackConfig::pgd(eps, eps / 4.0, 20, true)] {
            atk.seed = 4;
            let r = evaluate(&model, &test_set, &atk)?;
            println!("{:7} ε = {eps:.2}  accuracy {:.3}", r.attack, r.accuracy);
            accs.push(r.accuracy);
        }
    }
    Ok(accs)
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
