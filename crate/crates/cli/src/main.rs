use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adnet::batch::{self, Execution};
use adnet::engine::bundled;
use adnet::engine::parse::parse_scenario;
use adnet::engine::report::{self, compare_runs, write_artifacts, ARTIFACTS};
use adnet::engine::{Mode, RunOutput, Scenario};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "adnet",
    version,
    about = "Adaptive flow-label routing simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and report every problem with its line number.
    Validate { file: PathBuf },
    /// Run one scenario and write events.csv, throughput.csv and summary.txt.
    Run {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "adaptive")]
        mode: Mode,
        /// Throughput sample window in seconds.
        #[arg(long)]
        window: Option<f64>,
        /// Overwrite existing artifacts.
        #[arg(long)]
        force: bool,
    },
    /// Run a bundled evaluation scenario in both modes and write a comparison report.
    #[command(name = "paper")]
    Evaluate {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=3))]
        scenario: u8,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn exit(self) -> ExitCode {
        match self {
            Failure::Validation(m) => {
                eprintln!("{m}");
                ExitCode::from(1)
            }
            Failure::Runtime(m) => {
                eprintln!("error: {m}");
                ExitCode::from(2)
            }
        }
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| Failure::Validation(format!("{}:\n{e}", path.display())))
}

fn check_out_dir(dir: &Path, force: bool) -> Result<(), Failure> {
    if force {
        return Ok(());
    }
    if let Some(f) = ARTIFACTS.iter().map(|a| dir.join(a)).find(|p| p.exists()) {
        return Err(Failure::Runtime(format!(
            "{} already exists (use --force to overwrite)",
            f.display()
        )));
    }
    Ok(())
}

fn write(out: &RunOutput, dir: &Path, force: bool) -> Result<(), Failure> {
    check_out_dir(dir, force)?;
    write_artifacts(out, dir)
        .map_err(|e| Failure::Runtime(format!("writing {}: {e}", dir.display())))
}

fn validate(file: &Path) -> Result<(), Failure> {
    load(file)?;
    println!("OK");
    Ok(())
}

fn run(
    file: &Path,
    out: &Path,
    seed: Option<u64>,
    mode: Mode,
    window: Option<f64>,
    force: bool,
) -> Result<(), Failure> {
    let mut sc = load(file)?;
    if let Some(s) = seed {
        sc.sim.seed = s;
    }
    if let Some(w) = window {
        sc.sim.window = w;
    }
    check_out_dir(out, force)?;
    let output = adnet::engine::run(&sc, mode).map_err(|e| Failure::Validation(e.to_string()))?;
    write(&output, out, force)?;
    print!("{}", report::summary_text(&output));
    Ok(())
}

fn evaluate(n: u8, out: &Path, force: bool) -> Result<(), Failure> {
    let variants: Vec<(&str, &str)> = match n {
        1 => vec![("", "scenario1")],
        2 => vec![("", "scenario2")],
        _ => vec![("fast", "scenario3-fast"), ("slow", "scenario3-slow")],
    };
    let report_path = out.join("report.txt");
    if !force && report_path.exists() {
        return Err(Failure::Runtime(format!(
            "{} already exists (use --force to overwrite)",
            report_path.display()
        )));
    }
    let mut text = String::new();
    for (sub, name) in variants {
        let sc = bundled::load(name)
            .ok_or_else(|| Failure::Runtime(format!("missing bundled scenario {name}")))?;
        let (a, b) = batch::run_pair(&sc, Execution::default())
            .map_err(|e| Failure::Runtime(e.to_string()))?;
        let base = out.join(sub);
        write(&a, &base.join(Mode::Adaptive.keyword()), force)?;
        write(&b, &base.join(Mode::DvBaseline.keyword()), force)?;
        let cmp = compare_runs(&a, &b).map_err(|e| Failure::Runtime(e.to_string()))?;
        text.push_str(&cmp.to_string());
    }
    fs::write(&report_path, &text)
        .map_err(|e| Failure::Runtime(format!("writing {}: {e}", report_path.display())))?;
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Validate { file } => validate(file),
        Command::Run {
            file,
            out,
            seed,
            mode,
            window,
            force,
        } => run(file, out, *seed, *mode, *window, *force),
        Command::Evaluate {
            scenario,
            out,
            force,
        } => evaluate(*scenario, out, *force),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.exit(),
    }
}
