use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sddej::analysis::{check_assumption, AssumptionKind};
use sddej::experiment::{self, EXIT_CONFIG, EXIT_FAIL, EXIT_PASS};
use sddej::model::{builtin, BUILTIN_IDS};

#[derive(Parser)]
#[command(name = "sddej", version, about = "Truncated EM for stochastic delay equations with jumps")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List built-in model ids.
    ListModels,
    /// Sample one structural condition on a built-in model.
    Check {
        #[arg(long)]
        model: String,
        /// holder, local-lipschitz, monotone, khasminskii, jump-khasminskii,
        /// jump-monotone (or a31, a32, a33, a34, a42, a46).
        #[arg(long)]
        assumption: String,
        #[arg(long, default_value_t = 10.0)]
        radius: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Model parameter `key=value`; repeatable.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
        /// Check the monotonicity conditions without their gap functions.
        #[arg(long)]
        drop_u: bool,
    },
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v: f64 = v.parse().map_err(|e| format!("`{v}`: {e}"))?;
    Ok((k.to_string(), v))
}

fn check(
    model: &str,
    assumption: &str,
    radius: f64,
    samples: usize,
    seed: u64,
    params: Vec<(String, f64)>,
    drop_u: bool,
) -> i32 {
    let Some(kind) = AssumptionKind::parse(assumption) else {
        eprintln!("unknown assumption `{assumption}`");
        return EXIT_CONFIG;
    };
    let params: BTreeMap<String, f64> = params.into_iter().collect();
    let b = match builtin(model, &params) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let mut constants = b.constants.clone().unwrap_or_default();
    if drop_u {
        constants.u = None;
        constants.u_jump = None;
    }
    match check_assumption(kind, &b.model, &constants, radius, samples, seed) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report is serializable"));
            if report.violations == 0 {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_CONFIG
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot start worker pool: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let code = pool.install(|| match cli.command {
        Command::Run { config, out } => experiment::run_file(&config, out.as_deref()),
        Command::ListModels => {
            for (id, about) in BUILTIN_IDS {
                println!("{id}\t{about}");
            }
            EXIT_PASS
        }
        Command::Check {
            model,
            assumption,
            radius,
            samples,
            seed,
            params,
            drop_u,
        } => check(&model, &assumption, radius, samples, seed, params, drop_u),
    });
    ExitCode::from(code as u8)
}
