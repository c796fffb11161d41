use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use tactica_cli::{exit, load_scenario_with, run, Command, Overrides};

/// Run a scenario and write CSV/JSON artifacts plus report.json.
///
/// Exit status: 0 success, 1 validation or usage error, 2 runtime error or
/// failed checks, 3 insolvable class or stranded comment.
#[derive(Debug, Parser)]
#[command(name = "tactica", version)]
struct Cli {
    /// Command family to run.
    #[arg(value_enum)]
    command: Command,
    /// Scenario file (TOML).
    #[arg(long, required_unless_present = "batch")]
    scenario: Option<PathBuf>,
    /// Output directory; batch runs write into `<out>/<scenario stem>/`.
    #[arg(long)]
    out: PathBuf,
    /// Override the integration step.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Default tolerance for scenarios that do not set one.
    #[arg(long, env = "TACTICA_TOLERANCE")]
    tolerance: Option<f64>,
    /// Comma-separated scenario files run concurrently.
    #[arg(long, value_delimiter = ',')]
    batch: Vec<PathBuf>,
}

/// Load, run and report one scenario; returns the exit status.
fn run_one(cli: &Cli, path: &Path, out: &Path, overrides: &Overrides) -> i32 {
    let started = Instant::now();
    let scenario = match load_scenario_with(path, overrides) {
        Ok(s) => s,
        Err(e) => {
            eprint!("{e}");
            return exit::VALIDATION;
        }
    };
    let code = match run(&scenario, cli.command, out) {
        Ok(report) => {
            let mut line = format!(
                "{}: {} {} -> {} ({} artifacts)",
                path.display(),
                report.command,
                report.status,
                out.display(),
                report.artifacts.len()
            );
            if let Some(e) = &report.error {
                line.push_str(&format!(": {e}"));
            }
            for c in report.checks.iter().filter(|c| !c.passed) {
                line.push_str(&format!("; check `{}` failed (value {:?})", c.metric, c.value));
            }
            println!("{line}");
            report.exit_code
        }
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            e.exit_code()
        }
    };
    eprintln!("{}: {:.3} s", path.display(), started.elapsed().as_secs_f64());
    code
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        dt: cli.dt,
        seed: cli.seed,
        tolerance: cli.tolerance,
    };
    let code = if cli.batch.is_empty() {
        let path = cli.scenario.clone().expect("clap requires --scenario without --batch");
        run_one(&cli, &path, &cli.out, &overrides)
    } else {
        let paths: Vec<PathBuf> = cli.scenario.iter().chain(&cli.batch).cloned().collect();
        let dirs: Vec<PathBuf> = paths
            .iter()
            .map(|p| cli.out.join(p.file_stem().unwrap_or(p.as_os_str())))
            .collect();
        for (i, d) in dirs.iter().enumerate() {
            if dirs[..i].contains(d) {
                eprintln!("batch scenarios share the output directory {}", d.display());
                return ExitCode::from(exit::VALIDATION as u8);
            }
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = paths
                .iter()
                .zip(&dirs)
                .map(|(p, d)| s.spawn(|| run_one(&cli, p, d, &overrides)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or(exit::RUNTIME))
                .max()
                .unwrap_or(exit::OK)
        })
    };
    ExitCode::from(code as u8)
}
