//! Regenerates the bundled problem/run configs under `configs/` from the
//! library fixtures. Run from the workspace root:
//! `cargo run -p teamlq-cli --example generate_configs`

use std::fs;
use std::path::Path;

use teamlq::config::ProblemFile;
use teamlq::fixtures;

fn main() -> std::io::Result<()> {
    let dir = Path::new("configs");
    fs::create_dir_all(dir)?;

    let problems = [
        ("two_dm_coupled", ProblemFile::from_lqf(&fixtures::two_dm_coupled(400))),
        ("two_dm_decoupled", ProblemFile::from_lqf(&fixtures::two_dm_decoupled(300))),
        ("three_dm_ring", ProblemFile::from_lqf(&fixtures::three_dm_ring(300))),
        ("scalar_tanh", ProblemFile::from_lqf(&fixtures::scalar_tanh(2000))),
    ];
    for (name, file) in &problems {
        let path = dir.join(format!("{name}.problem.json"));
        fs::write(&path, file.to_json() + "\n")?;
        println!("wrote {}", path.display());
    }

    let runs = [
        (
            "two_dm_coupled.run.json",
            serde_json::json!({
                "problem": "two_dm_coupled.problem.json",
                "n_paths": 10000,
                "seed": 42,
                "csv_paths": 50,
                "picard": {"max_iter": 200, "tol": 1e-8, "damping": 0.5},
                "verify": {"eps": [1e-3], "directions": 10, "paths": 20},
                "sweep": [0.0, 0.25, 0.5, 0.75, 1.0]
            }),
        ),
        (
            "two_dm_decoupled.run.json",
            serde_json::json!({
                "problem": "two_dm_decoupled.problem.json",
                "n_paths": 2000,
                "seed": 7,
                "csv_paths": 20,
                "sweep": [0.0, 0.5]
            }),
        ),
        (
            "three_dm_ring.run.json",
            serde_json::json!({
                "problem": "three_dm_ring.problem.json",
                "n_paths": 2000,
                "seed": 11,
                "csv_paths": 20,
                "sweep": [0.0, 0.5, 1.0]
            }),
        ),
    ];
    for (name, value) in &runs {
        let path = dir.join(name);
        fs::write(&path, serde_json::to_string_pretty(value).unwrap() + "\n")?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
