use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ssr_cli::{scenarios, workers_from_env, CliError, ExperimentConfig, EXIT_USAGE, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "ssr", version, about = "Superselection scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a JSON experiment document.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n: Option<usize>,
        /// Output directory (default: the document's `output`, else `ssr-out/<scenario>`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<String>,
    },
    /// List registered scenarios with their expected verdicts.
    List,
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    if let Some(n) = workers_from_env(std::env::var(WORKERS_ENV).ok().as_deref())? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?;
    }
    match cli.command {
        Command::List => {
            for s in scenarios::SCENARIOS {
                println!("{:<28} expect {:<12} {}", s.name, s.expected, s.summary);
            }
            Ok(0)
        }
        Command::Run {
            config,
            seed,
            n,
            out,
            scenario,
        } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(s) = scenario {
                cfg.scenario = s;
            }
            if seed.is_some() {
                cfg.run.seed = seed;
            }
            if n.is_some() {
                cfg.run.n = n;
            }
            cfg.validate()?;
            let out_dir = out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from("ssr-out").join(&cfg.scenario));
            let summary = ssr_cli::run(&cfg, &out_dir)?;
            eprintln!(
                "{}: verdict {} (expected {}), artifacts in {}",
                summary.scenario,
                summary.verdict,
                summary.expected,
                summary.out_dir.display()
            );
            for name in &summary.failed_checks {
                eprintln!("  failed check: {name}");
            }
            Ok(summary.exit_code())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE as u8)
        }
    }
}
