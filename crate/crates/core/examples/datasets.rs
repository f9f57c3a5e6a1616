// Synthetic generators, seeded splits and a CSV round trip.

use cap_lab::data::{gen_blobs, gen_moons, load_csv, split, CsvSchema, FeatureScaling};

pub fn run_example() -> cap_lab::Result<usize> {
    let centers = vec![vec![0.0, 1.0], vec![-0.87, -0.5], vec![0.87, -0.5]];
    let blobs = gen_blobs(1, 50, &centers, 0.2)?;
    let (train, test) = split(&blobs, 0.5, 1)?;
    println!("blobs: {} samples, {} train / {} test", blobs.len(), train.len(), test.len());

    let moons = gen_moons(2, 100, 0.05)?;
    println!("moons: {} samples, feature range {:?}", moons.len(), moons.feature_range());

    let dir = std::env::temp_dir().join("cap_lab_datasets_example");
    std::fs::create_dir_all(&dir).map_err(|e| cap_lab::Error::Io { path: dir.clone(), source: e })?;
    let path = dir.join("moons.csv");
    moons.save_csv(&path)?;

    let schema = CsvSchema {
        feature_scaling: FeatureScaling::MinmaxToUnit,
        ..CsvSchema::default()
    };
    let loaded = load_csv(&path, &schema)?;
    println!(
        "reloaded {} rows from {}, scaled to {:?}",
        loaded.len(),
        path.display(),
        loaded.feature_range()
    );
    Ok(loaded.len())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
