use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use topk_ga::harness::{exit_code, resolve_out_dir, run_config, RunConfig, CATALOG};
use topk_ga::Error;

#[derive(Parser)]
#[command(name = "topk-ga", version, about = "Gaussian approximation experiments for the κ-th largest coordinate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run { config: PathBuf },
    /// List experiment kinds and the result each one exercises.
    List,
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<(RunConfig, String), Error> {
    let (mut config, raw) = RunConfig::load(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let config = config.with_seed(config.seed);
    config.validate()?;
    Ok((config, raw))
}

fn fail(e: &Error) -> ExitCode {
    let mut report = json!({ "status": "error", "kind": e.kind(), "message": e.to_string() });
    if let Error::Config { field, .. } = e {
        report["field"] = json!(field);
    }
    eprintln!("{report}");
    ExitCode::from(exit_code(e) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads == Some(0) {
        return fail(&Error::Config {
            field: "--threads".into(),
            message: "thread count must be positive".into(),
        });
    }
    match cli.command {
        Command::List => {
            for c in &CATALOG {
                println!("{} → {}", c.kind, c.exercises);
                println!("    {}", c.summary);
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&config, cli.seed) {
            Ok((c, _)) => {
                println!("{}", json!({ "status": "ok", "experiment": c.experiment.kind(), "seed": c.seed }));
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Run { config } => {
            let (c, raw) = match load(&config, cli.seed) {
                Ok(v) => v,
                Err(e) => return fail(&e),
            };
            let out = resolve_out_dir(cli.out, &c);
            match run_config(&c, &raw, cli.threads, &out) {
                Ok(m) => {
                    println!(
                        "{}",
                        json!({
                            "status": "ok",
                            "experiment": m.experiment,
                            "out_dir": out.display().to_string(),
                            "files": m.files.iter().map(|f| &f.path).collect::<Vec<_>>(),
                        })
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
