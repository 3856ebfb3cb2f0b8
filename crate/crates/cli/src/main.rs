use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use starfd_core::harness::{
    configs_to_csv, load_plan, oracle_check, plot_svg, rows_to_csv, run_plan, summarize, train_for_plan, Axes,
    ExperimentPlan, Method, RunOptions, Summary,
};

/// STAR-RIS full-duplex link simulator.
#[derive(Parser)]
#[command(name = "starfd", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a plan file and report every problem with its line.
    Validate { config: PathBuf },
    /// Run a plan and write results.csv and configs.csv.
    Run {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory; defaults to the plan's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Median/IQR table of a results CSV; also writes a summary CSV.
    Summarize {
        csv: PathBuf,
        /// Summary CSV path; defaults to summary.csv next to the input.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SVG line chart of a summary CSV.
    Plot {
        summary: PathBuf,
        #[arg(long, default_value = "M")]
        x: String,
        #[arg(long, default_value = "sic_gain_db")]
        y: String,
        /// SVG path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a critic/generator pair for the plan's first sweep point.
    Train {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained model over the plan's sweep.
    Eval {
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Compare optimizers with exhaustive enumeration on small instances.
    OracleCheck { config: PathBuf },
}

enum Failure {
    Config(Vec<String>),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn plan(path: &Path) -> Result<ExperimentPlan, Failure> {
    load_plan(path).map_err(|errs| Failure::Config(errs.iter().map(|e| format!("{}: {e}", path.display())).collect()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Validate { config } => {
            let p = plan(&config)?;
            println!(
                "ok: {} ({} sweep values x {} trials x {} methods = {} rows)",
                p.name,
                p.values.len(),
                p.trials,
                p.methods.len(),
                p.values.len() * p.trials * p.methods.len()
            );
        }
        Cmd::Run {
            config,
            seed,
            out,
            jobs,
        } => {
            let p = plan(&config)?;
            let dir = out.unwrap_or_else(|| p.output.clone());
            let rows = run_plan(&p, seed, RunOptions { jobs }).map_err(anyhow::Error::from)?;
            let results = dir.join("results.csv");
            write(&results, &rows_to_csv(&rows))?;
            write(&dir.join("configs.csv"), &configs_to_csv(&rows))?;
            let failed = rows.iter().filter(|r| r.result.is_err()).count();
            println!("{} rows ({failed} failed) -> {}", rows.len(), results.display());
        }
        Cmd::Summarize { csv, out } => {
            let s = summarize(&read(&csv)?).map_err(anyhow::Error::from)?;
            print!("{}", s.to_table());
            let out = out.unwrap_or_else(|| csv.with_file_name("summary.csv"));
            write(&out, &s.to_csv())?;
        }
        Cmd::Plot { summary, x, y, out } => {
            let s = Summary::from_csv(&read(&summary)?).map_err(anyhow::Error::from)?;
            let axes = Axes::new(&x, &y).map_err(anyhow::Error::from)?;
            let svg = plot_svg(&s.rows, &axes).map_err(anyhow::Error::from)?;
            match out {
                Some(path) => write(&path, &svg)?,
                None => print!("{svg}"),
            }
        }
        Cmd::Train { config, out } => {
            let p = plan(&config)?;
            let bundle = train_for_plan(&p).map_err(anyhow::Error::from)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            bundle.save(&out).with_context(|| format!("saving {}", out.display()))?;
            println!("model -> {}", out.display());
        }
        Cmd::Eval {
            config,
            model,
            seed,
            jobs,
        } => {
            let mut p = plan(&config)?;
            p.methods = vec![Method::Neural];
            p.neural.model = Some(model);
            let rows = run_plan(&p, seed, RunOptions { jobs }).map_err(anyhow::Error::from)?;
            if let Some(Err(e)) = rows.iter().map(|r| &r.result).find(|r| r.is_err()) {
                return Err(Failure::Runtime(anyhow::anyhow!("{e}")));
            }
            let s = summarize(&rows_to_csv(&rows)).map_err(anyhow::Error::from)?;
            print!("{}", s.to_table());
        }
        Cmd::OracleCheck { config } => {
            let p = plan(&config)?;
            let rep = oracle_check(&p).map_err(anyhow::Error::from)?;
            println!(
                "instances {}, oracle feasible {}, alternating within {:.0}%: {} (need {})",
                rep.instances,
                rep.oracle_feasible,
                p.oracle_check.alt_tol * 100.0,
                rep.alt_within,
                rep.alt_min
            );
            if let Some(n) = rep.neural_within {
                println!(
                    "neural within {:.0}%: {n} (need {})",
                    p.oracle_check.neural_tol * 100.0,
                    rep.neural_min
                );
            }
            if !rep.passed() {
                return Err(Failure::Runtime(anyhow::anyhow!("oracle check below threshold")));
            }
            println!("pass");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(errs)) => {
            for e in errs {
                eprintln!("{e}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
