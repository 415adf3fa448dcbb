//! Scenario files and the command layer: a TOML description is validated,
//! run, and written out as CSV snapshots with a JSON summary.
//!
//! `cargo run --release --example scenario_file`

use std::path::PathBuf;

use crowd::cli::{run_cli, Command, Flags, Outcome};

const CORRIDOR: &str = r#"
name = "corridor"

[model]
kind = "local"
speed = { law = "linear", vmax = 1.5, jam = 1.0 }

[geometry]
domain = [0.0, 0.0, 6.0, 2.0]
dx = 0.1
exits = [{ side = "east", from = 0.0, to = 2.0 }]

[[populations]]
direction = "geodesic"
initial = [{ rect = [0.5, 0.5, 2.5, 1.5], level = 0.8 }]

[scheme]
cfl = 0.45
dt_max = 0.05
end_time = 4.0
snapshot_every = 1.0
"#;

pub fn run_example(dir: PathBuf) -> std::io::Result<Outcome> {
    std::fs::create_dir_all(&dir)?;
    let config = dir.join("corridor.toml");
    std::fs::write(&config, CORRIDOR)?;
    let outcome = run_cli(Command::Simulate, &config, &Flags { out: Some(dir.join("out")), ..Flags::default() });
    println!("exit code {}: {}", outcome.code, outcome.summary);
    for f in &outcome.files {
        println!("  wrote {}", f.display());
    }
    // a rejected file gives exit code 2 and a message naming the line
    std::fs::write(&config, CORRIDOR.replace("vmax = 1.5", "vmax = -1.5"))?;
    let bad = run_cli(Command::Simulate, &config, &Flags { out: Some(dir.join("bad")), ..Flags::default() });
    println!("exit code {}: {}", bad.code, bad.summary);
    Ok(outcome)
}

#[allow(dead_code)]
fn main() {
    let dir = std::env::temp_dir().join("crowd_scenario_file");
    if let Err(e) = run_example(dir) {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
