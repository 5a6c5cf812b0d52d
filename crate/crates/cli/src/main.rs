use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use learnchan::data::export_delimited;
use learnchan::experiment::{run_experiment, run_ode, run_ode_sweep, DataConfig, DataFile, ExperimentConfig, OdeConfig};
use learnchan::verify::{run_all, VerifyOptions};
use learnchan::Error;

#[derive(Parser)]
#[command(name = "learnchan", version, about = "Learning-channel experiments and the ODE bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the seed named in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write per-epoch metrics.
    Train(Common),
    /// Integrate an averaged-dynamics system and write its report.
    Ode {
        #[command(flatten)]
        common: Common,
        /// Run N integrations with seeds seed, seed+1, ...
        #[arg(long)]
        sweep: Option<usize>,
    },
    /// Materialize the dataset a config describes as delimited text.
    Data(Common),
    /// Run the acceptance battery and print a pass/fail table.
    Verify {
        /// Directory holding the bundled experiment configs.
        #[arg(long, default_value = "configs")]
        configs: PathBuf,
        /// Comma-separated criterion numbers; all when absent.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        #[arg(long)]
        quiet: bool,
    },
}

/// A failure with its exit code: 2 for usage and schema problems, 1 otherwise.
struct Failure(u8, String);

fn usage(e: Error) -> Failure {
    Failure(2, e.to_string())
}

fn runtime(e: Error) -> Failure {
    match e {
        Error::Schema(_) | Error::Config(_) => usage(e),
        _ => Failure(1, e.to_string()),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure(1, e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Failure(1, format!("{}: {e}", path.display())))
}

fn cmd_train(c: Common) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(&c.config).map_err(usage)?;
    if let Some(seed) = c.seed {
        cfg.train.seed = seed;
    }
    let quiet = c.quiet;
    let summary = run_experiment(&cfg, c.out.as_deref(), &mut |r| {
        if !quiet {
            let acc = |v: Option<f64>| v.map_or("-".into(), |a| format!("{:.2}%", 100.0 * a));
            eprintln!(
                "epoch {:>3}  loss {:.4}  train {}  val {}",
                r.epoch,
                r.train_loss,
                acc(r.train_accuracy),
                acc(r.val_accuracy)
            );
        }
    })
    .map_err(runtime)?;
    if !quiet {
        eprintln!("{:?} after {} epochs, {:.1}s", summary.status, summary.epochs_run, summary.elapsed_secs);
    }
    if summary.diverged() {
        return Err(Failure(1, format!("training diverged: {:?}", summary.status)));
    }
    Ok(())
}

fn cmd_ode(c: Common, sweep: Option<usize>) -> Result<(), Failure> {
    let mut cfg = OdeConfig::load(&c.config).map_err(usage)?;
    if let Some(seed) = c.seed {
        cfg.init.seed = seed;
    }
    match sweep {
        Some(n) => {
            let runs = run_ode_sweep(&cfg, n, c.out.as_deref()).map_err(runtime)?;
            if !c.quiet {
                for r in &runs {
                    eprintln!("seed {:>6}  {:?}  residual {:.2e}", r.seed, r.report.verdict, r.report.final_residual);
                }
            }
        }
        None => {
            let (run, _) = run_ode(&cfg, c.out.as_deref()).map_err(runtime)?;
            if !c.quiet {
                let r = &run.report;
                eprintln!(
                    "{}: {:?} at t = {:.2} ({} steps), residual {:.2e}, max invariant drift {:.2e}",
                    r.system,
                    r.verdict,
                    r.t_final,
                    r.steps,
                    r.final_residual,
                    r.max_drift()
                );
                for note in &r.notes {
                    eprintln!("  {note}");
                }
            }
        }
    }
    Ok(())
}

fn cmd_data(c: Common) -> Result<(), Failure> {
    let mut file = DataFile::load(&c.config).map_err(usage)?;
    if let Some(s) = c.seed {
        match &mut file.data {
            DataConfig::Bianchini { seed, .. } | DataConfig::Linear { seed, .. } => *seed = s,
            _ => return Err(Failure(2, "this data source takes no seed".into())),
        }
    }
    let (train, val) = file.data.load().map_err(runtime)?;
    let describe = |d: &learnchan::data::Dataset| {
        serde_json::json!({ "rows": d.len(), "input_dim": d.input_dim(), "output_dim": d.output_dim() })
    };
    let summary = serde_json::json!({
        "config": serde_json::to_value(&file.data).map_err(|e| Failure(1, e.to_string()))?,
        "train": describe(&train),
        "validation": val.as_ref().map(describe),
    });
    if let Some(dir) = &c.out {
        fs::create_dir_all(dir).map_err(|e| Failure(1, format!("{}: {e}", dir.display())))?;
        export_delimited(&train, &dir.join("train.csv"), ',').map_err(runtime)?;
        if let Some(v) = &val {
            export_delimited(v, &dir.join("validation.csv"), ',').map_err(runtime)?;
        }
        write_json(&dir.join("data.json"), &summary)?;
    }
    if !c.quiet {
        println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    }
    Ok(())
}

fn cmd_verify(configs: PathBuf, only: Vec<u8>, quiet: bool) -> Result<(), Failure> {
    if let Some(bad) = only.iter().find(|id| !(1..=10).contains(*id)) {
        return Err(Failure(2, format!("no criterion numbered {bad}")));
    }
    let ids: Vec<u8> = if only.is_empty() { (1..=10).collect() } else { only };
    let results = run_all(&ids, &VerifyOptions::new(configs), &mut |r| {
        if !quiet {
            println!("{}", r.line());
        }
    });
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        return Err(Failure(1, format!("{failed} criteria failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(c) => cmd_train(c),
        Command::Ode { common, sweep } => cmd_ode(common, sweep),
        Command::Data(c) => cmd_data(c),
        Command::Verify { configs, only, quiet } => cmd_verify(configs, only, quiet),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
