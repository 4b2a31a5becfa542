use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drccbo_cli::{gp_rebuild_check, lp_oracle_check};
use drccbo_core::output::{emit_csv, emit_plot};
use drccbo_core::problems::{write_sir_cache, sir_table, SirParams};
use drccbo_core::{make_grid, run_experiment, Error, ExperimentConfig, Method, Setting};

#[derive(Parser)]
#[command(name = "drccbo", version, about = "Distributionally robust chance-constrained BO experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the replicated experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run only this method.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        setting: Option<String>,
    },
    /// Cross-check the worst-case expectation and the GP posterior against
    /// the reference solvers.
    OracleCheck {
        #[arg(long, default_value_t = 1000)]
        lp_instances: usize,
        #[arg(long, default_value_t = 200)]
        gp_configs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute and cache the SIR peak-infection table.
    PrecomputeSir {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        grid_points: usize,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            out,
            reps,
            seed,
            method,
            setting,
        } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
            let mut cfg = ExperimentConfig::from_json(&text)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if let Some(r) = reps {
                cfg.replications = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(m) = method {
                cfg.methods = vec![m.parse::<Method>()?];
            }
            if let Some(s) = setting {
                cfg.setting = s.parse::<Setting>()?;
            }
            cfg.validate()?;
            let result = run_experiment(&cfg)?;
            emit_csv(&result, &cfg.output_dir)?;
            emit_plot(&result, &cfg.output_dir)?;
            for m in &result.methods {
                let last = m.mean_gap.last().copied().unwrap_or(f64::NAN);
                println!("{:<9} final mean utility gap {last:.6e}", m.method.as_str());
            }
            println!("wrote {}", cfg.output_dir.display());
            Ok(())
        }
        Command::OracleCheck {
            lp_instances,
            gp_configs,
            seed,
        } => {
            let reports = [lp_oracle_check(lp_instances, seed), gp_rebuild_check(gp_configs, seed)];
            let mut ok = true;
            for r in &reports {
                println!(
                    "{}: {} ({} cases, {} failures, max error {:.3e}, tolerance {:e})",
                    r.name,
                    if r.passed() { "ok" } else { "FAILED" },
                    r.cases,
                    r.failures,
                    r.max_error,
                    r.tolerance
                );
                ok &= r.passed();
            }
            if ok {
                Ok(())
            } else {
                Err(Error::Inconsistent("oracle check failed".into()))
            }
        }
        Command::PrecomputeSir { out, grid_points } => {
            let rates = make_grid(0.01, 0.5, grid_points).map_err(|e| Error::Config(e.to_string()))?;
            let params = SirParams::default();
            let table = sir_table(&rates, &params);
            write_sir_cache(&out, &rates, &params, &table)?;
            println!("wrote {} values to {}", table.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
