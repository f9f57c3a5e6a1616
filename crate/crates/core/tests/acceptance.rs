//! Acceptance suite. Runs without the libtest harness so that each check
//! prints exactly one `criterion N: PASS|FAIL` line with its measurements,
//! whether it passes or not. Exits nonzero if any check fails.

mod common;

use cap_lab::attacks::{clean_accuracy, pgd, robust_accuracy, AttackConfig};
use cap_lab::nn::{softmax_cross_entropy, Mlp};
use cap_lab::polytope::{find_corners, CornerSearch, PerturbationBudget};
use cap_lab::train::{mean_diameter, train, TrainerKind};
use cap_lab::Activation;
use common::*;
use rand::Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn within(start: Instant, limit_secs: u64) -> (bool, Duration) {
    let t = start.elapsed();
    (t < Duration::from_secs(limit_secs), t)
}

// ---------------------------------------------------------------------------

fn criterion_1_gradient_fidelity() -> Verdict {
    let start = Instant::now();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for seed in 0..20u64 {
        let mut r = rng(1000 + seed);
        let depth = r.gen_range(1..=3);
        let mut dims = vec![r.gen_range(1..=16)];
        for _ in 0..depth {
            dims.push(r.gen_range(2..=16));
        }
        let mut model = Mlp::init(seed, &dims, Activation::Relu).unwrap();
        let x = random_vec(&mut r, dims[0], 1.0);
        away_from_kinks(&mut model, &[x.clone()], 10.0 * h);
        let class = r.gen_range(0..*dims.last().unwrap());
        let y = label(class, *dims.last().unwrap());
        let ce = |m: &Mlp, x: &[f64]| softmax_cross_entropy(&m.logits(x).unwrap(), &y).unwrap().0;

        let (logits, trace) = model.forward(&x).unwrap();
        let (_, cot) = softmax_cross_entropy(&logits, &y).unwrap();
        let gp: Vec<f64> = model.grad_params(&trace, &cot).unwrap().iter().collect();
        let gx = model.grad_input(&trace, &cot).unwrap();
        for (i, &a) in gp.iter().enumerate() {
            worst = worst.max(rel_err(a, fd_param(&mut model, i, h, |m| ce(m, &x))));
            checked += 1;
        }
        for (j, &a) in gx.iter().enumerate() {
            worst = worst.max(rel_err(a, fd_input(&x, j, h, |xp| ce(&model, xp))));
            checked += 1;
        }
    }
    let (fast, t) = within(start, 30);
    verdict(
        worst < 1e-6 && fast,
        format!("{checked} coordinates, worst relative error {worst:.2e} (< 1e-6), {t:.2?} (< 30 s)"),
    )
}

// ---------------------------------------------------------------------------

fn corner_oracle(w: &[Vec<f64>], x: &[f64]) -> (f64, f64) {
    let d = x.len();
    let eps = 0.1;
    let model = linear(w, &vec![0.0; w.len()]);
    let images: Vec<Vec<f64>> = vertices(d, eps).iter().map(|v| model.logits(&add(x, v)).unwrap()).collect();
    let (mut coord_err, mut corner_err) = (0.0f64, 0.0f64);
    for seed in 0..10 {
        let search = CornerSearch {
            particles: 8,
            steps: 40,
            eta: 0.02,
            budget: PerturbationBudget::linf(eps).unwrap(),
            seed,
        };
        let (set, est) = find_corners(&model, x, &search).unwrap();
        for v in set.particles.iter().flatten() {
            coord_err = coord_err.max((v.abs() - eps).abs());
        }
        for c in &est.corners {
            let nearest = images.iter().map(|v| sq_dist(v, c).sqrt()).fold(f64::INFINITY, f64::min);
            corner_err = corner_err.max(nearest);
        }
    }
    (coord_err, corner_err)
}

fn criterion_2_corner_oracle() -> Verdict {
    let start = Instant::now();
    // Deviations from the particle mean grow roughly like (1 + 2η·σ_min(W)²)
    // per round, so W is chosen with σ_min² = 10: a particle that starts
    // next to the mean still reaches a face well within 40 rounds.
    let (c2, v2) = corner_oracle(&[vec![3.0, 1.0], vec![-1.0, 3.0]], &[0.3, -0.2]);
    // Square as well: a rank-deficient W leaves null-space coordinates with
    // zero gradient.
    let w6: Vec<Vec<f64>> = (0..6)
        .map(|k| (0..6).map(|j| if j == k { 3.0 } else { 0.1 * (j as f64 - k as f64) }).collect())
        .collect();
    let (c6, v6) = corner_oracle(&w6, &[0.1, -0.4, 0.2, 0.0, 0.7, -0.1]);
    let (fast, t) = within(start, 10);
    verdict(
        c2 <= 1e-3 && v2 <= 1e-6 && c6 <= 1e-3 && v6 <= 1e-6 && fast,
        format!(
            "d=2: max |‖δ‖-ε| {c2:.1e}, vertex gap {v2:.1e}; d=6: {c6:.1e}, {v6:.1e}; {t:.2?}"
        ),
    )
}

// ---------------------------------------------------------------------------

fn random_search(seed: u64) -> (Mlp, Vec<f64>, CornerSearch) {
    let mut r = rng(seed);
    let d = r.gen_range(1..=6);
    let c = r.gen_range(2..=5);
    let model = Mlp::init(seed, &[d, r.gen_range(2..=12), c], Activation::Relu).unwrap();
    let clip = r.gen_bool(0.5).then_some((0.0, 1.0));
    let x: Vec<f64> = (0..d).map(|_| r.gen_range(0.0..=1.0)).collect();
    let eps = r.gen_range(0.0..0.3);
    let search = CornerSearch {
        particles: r.gen_range(1..=10),
        steps: r.gen_range(1..=10),
        eta: r.gen_range(0.001..0.2),
        budget: PerturbationBudget::new(eps, clip).unwrap(),
        seed,
    };
    (model, x, search)
}

fn criterion_3_feasibility_and_determinism() -> Verdict {
    let mut violations = 0usize;
    for seed in 0..1000 {
        let (model, x, search) = random_search(seed);
        let (set, _) = find_corners(&model, &x, &search).unwrap();
        violations += set.particles.iter().filter(|p| !search.budget.contains(p, &x)).count();
    }
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let (one, eight) = (pool(1), pool(8));
    let mut mismatches = 0usize;
    for seed in 0..50 {
        let (model, x, search) = random_search(10_000 + seed);
        let a = one.install(|| find_corners(&model, &x, &search).unwrap());
        let b = eight.install(|| find_corners(&model, &x, &search).unwrap());
        let to_bits = |v: &(cap_lab::polytope::ParticleSet, cap_lab::polytope::PolytopeEstimate)| {
            let mut out: Vec<u64> = v.0.particles.iter().flatten().map(|f| f.to_bits()).collect();
            out.extend(v.1.corners.iter().flatten().map(|f| f.to_bits()));
            out.extend(v.1.center.iter().map(|f| f.to_bits()));
            out.push(v.1.diameter.to_bits());
            out
        };
        if to_bits(&a) != to_bits(&b) {
            mismatches += 1;
        }
    }
    verdict(
        violations == 0 && mismatches == 0,
        format!("{violations} l∞/clip violations in 1000 runs; {mismatches}/50 runs differ between 1 and 8 threads"),
    )
}

// ---------------------------------------------------------------------------

fn criterion_4_zero_lambda_reduction() -> Verdict {
    let mut cap = preset("blobs_cap.toml", 1);
    cap.train.lambda = 0.0;
    cap.train.epochs = 1;
    let mut clean = preset("blobs_clean.toml", 1);
    clean.train.epochs = 1;
    let (train_set, _) = cap.datasets().unwrap();
    let mut a = cap.build_model(&train_set).unwrap();
    let mut b = clean.build_model(&train_set).unwrap();
    let mut identical_epochs = 0;
    let mut first_diff = None;
    for epoch in 1..=5 {
        a = train(a, &train_set, &cap.train).unwrap().0;
        b = train(b, &train_set, &clean.train).unwrap().0;
        if bits(&a) == bits(&b) {
            identical_epochs += 1;
        } else if first_diff.is_none() {
            first_diff = Some(epoch);
        }
    }
    // A single five-epoch run must agree as well, including the shuffles of epochs 2–5.
    cap.train.epochs = 5;
    clean.train.epochs = 5;
    let (fa, ra) = train(cap.build_model(&train_set).unwrap(), &train_set, &cap.train).unwrap();
    let (fb, rb) = train(clean.build_model(&train_set).unwrap(), &train_set, &clean.train).unwrap();
    let same_run = bits(&fa) == bits(&fb)
        && ra.history.iter().zip(&rb.history).all(|(x, y)| x.ce_term.to_bits() == y.ce_term.to_bits());
    verdict(
        identical_epochs == 5 && same_run,
        format!("{identical_epochs}/5 epoch checkpoints bit-identical, full 5-epoch run identical: {same_run}, first difference {first_diff:?}"),
    )
}

// ---------------------------------------------------------------------------

struct Outcome {
    clean: f64,
    robust: f64,
    diameter: f64,
}

struct Fixture {
    clean: Vec<Outcome>,
    cap: Vec<Outcome>,
    vanilla_at: Vec<Outcome>,
    /// Train + evaluation wall time per trainer: clean, cap, vanilla AT.
    time: [Duration; 3],
}

const SEEDS: [u64; 3] = [1, 2, 3];

fn pgd20(seed: u64) -> AttackConfig {
    let mut a = AttackConfig::pgd(0.1, 0.02, 20, true);
    a.seed = seed;
    a
}

fn run_fixture(preset_name: &str, seed: u64, with_diameter: bool) -> (Outcome, Duration, Duration) {
    let cfg = preset(preset_name, seed);
    let (train_set, test_set) = cfg.datasets().unwrap();
    assert_eq!((train_set.len(), test_set.len()), (300, 300));
    let t0 = Instant::now();
    let (model, _) = train(cfg.build_model(&train_set).unwrap(), &train_set, &cfg.train).unwrap();
    let trained = t0.elapsed();
    let t1 = Instant::now();
    let all: Vec<usize> = (0..test_set.len()).collect();
    let diameter = if with_diameter {
        mean_diameter(&model, &test_set, &all, &cfg.train.polytope, seed).unwrap()
    } else {
        f64::NAN
    };
    let outcome = Outcome {
        clean: clean_accuracy(&model, &test_set).unwrap(),
        robust: robust_accuracy(&model, &test_set, &pgd20(seed)).unwrap(),
        diameter,
    };
    (outcome, trained, t1.elapsed())
}

/// Clean, CAP and PGD-trained models on the shipped blobs presets, trained
/// once and shared by criteria 5 and 6.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let mut f = Fixture {
            clean: vec![],
            cap: vec![],
            vanilla_at: vec![],
            time: [Duration::ZERO; 3],
        };
        for &seed in &SEEDS {
            for (name, slot, diam) in [
                ("blobs_clean.toml", 0, true),
                ("blobs_cap.toml", 1, true),
                ("blobs_vanilla_at.toml", 2, false),
            ] {
                let (o, t_train, t_eval) = run_fixture(name, seed, diam);
                f.time[slot] += t_train + t_eval;
                match slot {
                    0 => f.clean.push(o),
                    1 => f.cap.push(o),
                    _ => f.vanilla_at.push(o),
                }
            }
        }
        f
    })
}

fn mean(v: &[Outcome], key: fn(&Outcome) -> f64) -> f64 {
    v.iter().map(key).sum::<f64>() / v.len() as f64
}

fn criterion_5_confinement() -> Verdict {
    let f = fixture();
    let preset_cap = preset("blobs_cap.toml", 1);
    assert_eq!(preset_cap.train.trainer, TrainerKind::Cap);
    assert_eq!(preset_cap.train.lambda, 0.6);
    let p = preset_cap.train.polytope;
    assert_eq!((p.particles, p.steps, p.eta, p.epsilon), (10, 10, 0.02, 0.1));
    assert_eq!(preset_cap.train.epochs, 150);

    let cap = mean(&f.cap, |o| o.diameter);
    let clean = mean(&f.clean, |o| o.diameter);
    let t = f.time[0] + f.time[1];
    let fast = t < Duration::from_secs(300);
    verdict(
        cap < 0.7 * clean && fast,
        format!("mean test diameter CAP {cap:.4} vs clean {clean:.4} (ratio {:.3}, need < 0.7), {t:.1?} (< 5 min)", cap / clean),
    )
}

fn criterion_6_robustness() -> Verdict {
    let f = fixture();
    let r = |v: &[Outcome]| mean(v, |o| o.robust);
    let c = |v: &[Outcome]| mean(v, |o| o.clean);
    let (r_cap, r_clean, r_at) = (r(&f.cap), r(&f.clean), r(&f.vanilla_at));
    let (c_cap, c_clean, c_at) = (c(&f.cap), c(&f.clean), c(&f.vanilla_at));
    let beats_clean = r_cap - r_clean >= 0.10;
    let matches_at = r_cap >= r_at && (c_cap - c_at).abs() <= 0.02;
    let keeps_clean = (c_cap - c_clean).abs() <= 0.03;
    let t = f.time.iter().sum::<Duration>();
    let fast = t < Duration::from_secs(600);
    verdict(
        beats_clean && matches_at && keeps_clean && fast,
        format!(
            "PGD-20 robust: CAP {r_cap:.4}, clean {r_clean:.4}, vanilla AT {r_at:.4} \
             (CAP−clean {:+.4}, need ≥ +0.10: {beats_clean}; CAP ≥ AT at |Δclean| ≤ 0.02: {matches_at}); \
             clean acc: CAP {c_cap:.4}, clean {c_clean:.4}, AT {c_at:.4} (|Δ| ≤ 0.03: {keeps_clean}); {t:.1?} (< 10 min)",
            r_cap - r_clean
        ),
    )
}

// ---------------------------------------------------------------------------

// On a linear two-class model the cross-entropy depends on x only through the
// affine margin (w_y − w_other)·x + b, and is a convex, monotone function of
// it; a convex function attains its maximum over a box at a vertex, so
// enumerating {±ε}^d gives the exact optimum that PGD is compared against.
fn criterion_7_attack_oracle() -> Verdict {
    let start = Instant::now();
    let mut r = rng(77);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for d in 1..=10 {
        for _ in 0..5 {
            let model = linear(&random_matrix(&mut r, 2, d), &random_vec(&mut r, 2, 0.5));
            let x = random_vec(&mut r, d, 1.0);
            let class = r.gen_range(0..2);
            for random_start in [false, true] {
                let mut cfg = AttackConfig::pgd(0.1, 0.02, 20, random_start);
                cfg.seed = 7;
                let adv = pgd(&model, &x, &label(class, 2), &cfg, d as u64).unwrap();
                let got = ce_oracle(&model.logits(&adv).unwrap(), class);
                let best = vertices(d, 0.1)
                    .iter()
                    .map(|v| ce_oracle(&model.logits(&add(&x, v)).unwrap(), class))
                    .fold(f64::NEG_INFINITY, f64::max);
                worst = worst.max((got - best).abs());
                cases += 1;
            }
        }
    }
    let (fast, t) = within(start, 10);
    verdict(
        worst <= 1e-9 && fast,
        format!("{cases} cases with d ≤ 10, worst |CE_pgd − CE_vertex| {worst:.1e} (≤ 1e-9), {t:.2?}"),
    )
}

// ---------------------------------------------------------------------------

fn files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "run.log" {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_8_end_to_end_compare() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let compare = |name: &str| {
        let out = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_cap-lab"))
            .arg("compare")
            .arg(preset_path("blobs_cap.toml"))
            .arg(preset_path("blobs_clean.toml"))
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        (o, out)
    };
    let (o1, out1) = compare("first");
    let (o2, out2) = compare("second");
    let table = std::fs::read_to_string(out1.join("compare.md")).unwrap_or_default();
    let stdout = String::from_utf8_lossy(&o1.stdout);
    let populated = table.contains("| blobs_cap | cap |")
        && table.contains("| blobs_clean | clean |")
        && table.contains("PGD-20")
        && stdout.contains(table.trim());
    let (f1, f2) = (files(&out1), files(&out2));
    let identical = !f1.is_empty() && f1 == f2;
    let logs = out1.join("a/run.log").is_file() && out1.join("b/run.log").is_file();
    verdict(
        o1.status.success() && o2.status.success() && populated && identical && logs,
        format!(
            "exit codes {:?}/{:?}, table populated: {populated}, {} files byte-identical across runs: {identical}",
            o1.status.code(),
            o2.status.code(),
            f1.len()
        ),
    )
}

fn main() {
    let checks: [(u32, fn() -> Verdict); 8] = [
        (1, criterion_1_gradient_fidelity),
        (2, criterion_2_corner_oracle),
        (3, criterion_3_feasibility_and_determinism),
        (4, criterion_4_zero_lambda_reduction),
        (5, criterion_5_confinement),
        (6, criterion_6_robustness),
        (7, criterion_7_attack_oracle),
        (8, criterion_8_end_to_end_compare),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| f == &n.to_string()) {
            continue;
        }
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| Verdict {
            pass: false,
            detail: format!(
                "panicked: {}",
                e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
            ),
        });
        println!("criterion {n}: {} — {}", if verdict.pass { "PASS" } else { "FAIL" }, verdict.detail);
        failed += usize::from(!verdict.pass);
    }
    println!("acceptance: {failed} failing");
    std::process::exit(i32::from(failed > 0));
}
