//! Command-line front end: verify a JSON scene file against its declared
//! expectations, or export the built-in scene catalog.
//!
//! Exit codes: 0 every executed check matched its expectation, 1 at least
//! one mismatch, 2 usage/IO/validation error, 3 internal numeric failure.

use bendings::catalog;
use bendings::runner::{run_scene, RunConfig, RunError};
use bendings::scene::SceneFile;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bendings", version, about = "Numerical verification of submanifold bendings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scene's checks and compare against its expectations.
    Verify {
        /// Path to a scene JSON file.
        scene: PathBuf,
        /// Write the JSON report here (stdout gets a summary either way).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Comma-separated subset of checks to run.
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<String>>,
        /// Override the number of pseudo-random sample points.
        #[arg(long)]
        samples: Option<usize>,
        /// Override the sampling seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the pointwise residual tolerance.
        #[arg(long)]
        tol_pointwise: Option<f64>,
        /// Require an expectation entry for every executed check.
        #[arg(long)]
        strict: bool,
    },
    /// Write every built-in scene as `<name>.json` into a directory.
    ExportScenes {
        #[arg(long, default_value = "scenes")]
        dir: PathBuf,
    },
}

fn machine_error(kind: &str, message: &str) {
    // Machine-readable error channel: one JSON object on stderr.
    eprintln!(
        "{}",
        serde_json::json!({ "error": { "kind": kind, "message": message } })
    );
}

fn verify(
    scene_path: &PathBuf,
    report_path: Option<&PathBuf>,
    cfg: &RunConfig,
) -> ExitCode {
    let text = match std::fs::read_to_string(scene_path) {
        Ok(t) => t,
        Err(e) => {
            machine_error("io", &format!("{}: {e}", scene_path.display()));
            return ExitCode::from(2);
        }
    };
    let scene = match SceneFile::from_json_str(&text) {
        Ok(s) => s,
        Err(e) => {
            machine_error("validation", &e.to_string());
            return ExitCode::from(2);
        }
    };
    let outcome = std::panic::catch_unwind(|| run_scene(&scene, cfg));
    let report = match outcome {
        Ok(Ok(r)) => r,
        Ok(Err(RunError::Scene(e))) => {
            machine_error("validation", &e.to_string());
            return ExitCode::from(2);
        }
        Ok(Err(RunError::Internal(e))) => {
            machine_error("internal", &e);
            return ExitCode::from(3);
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic with non-string payload".to_string());
            machine_error("internal", &msg);
            return ExitCode::from(3);
        }
    };
    for (name, check) in &report.checks {
        let status = serde_json::to_value(check.status).unwrap();
        let marker = if check.matched { "ok " } else { "MISMATCH" };
        println!(
            "{marker:9} {name:28} status={} residual={}",
            status.as_str().unwrap_or("?"),
            check.residual.map_or("-".to_string(), |r| format!("{r:.3e}")),
        );
    }
    println!(
        "{}: {}",
        report.scene.name,
        if report.all_matched { "all checks matched" } else { "MISMATCHES PRESENT" }
    );
    if let Some(path) = report_path {
        if let Err(e) = std::fs::write(path, report.to_json_string()) {
            machine_error("io", &format!("{}: {e}", path.display()));
            return ExitCode::from(2);
        }
    }
    if report.all_matched {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn export(dir: &PathBuf) -> ExitCode {
    if let Err(e) = std::fs::create_dir_all(dir) {
        machine_error("io", &format!("{}: {e}", dir.display()));
        return ExitCode::from(2);
    }
    for scene in catalog::all_scenes() {
        let path = dir.join(format!("{}.json", scene.name));
        if let Err(e) = std::fs::write(&path, scene.to_json_string()) {
            machine_error("io", &format!("{}: {e}", path.display()));
            return ExitCode::from(2);
        }
        println!("wrote {}", path.display());
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Verify { scene, report, checks, samples, seed, tol_pointwise, strict } => {
            let cfg = RunConfig { checks, samples, seed, tol_pointwise, strict };
            verify(&scene, report.as_ref(), &cfg)
        }
        Command::ExportScenes { dir } => export(&dir),
    }
}
