use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use taco::config::parse_pairs;
use taco::harness::{
    cmd_eval, cmd_export_embeddings, cmd_probe_reconstruction, cmd_sweep, cmd_train, sweep_output_dir,
    write_json, write_probe_csv, ProbeConfig, ProbeTarget, RunHandle, SweepSpec,
};
use taco::Error;

#[derive(Parser)]
#[command(name = "taco", about = "Tacit cooperative MARL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// `key=value` config override; repeatable, later wins.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn pairs(&self) -> taco::Result<Vec<(String, String)>> {
        parse_pairs(&self.set.join("\n"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one run; writes config, metrics.csv and model.ckpt.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        algo: Option<String>,
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Greedy evaluation of a trained run at a fixed alpha.
    Eval {
        run: PathBuf,
        #[arg(long, default_value_t = 64)]
        episodes: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f32,
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to `<run>/eval_alpha<alpha>.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run every cell of a sweep spec and aggregate over seeds.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallel_cells: usize,
    },
    /// Fit probes from hidden states to reconstruction targets.
    ProbeRec {
        run: PathBuf,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, value_delimiter = ',', default_value = "attention,mean_hidden,global_state")]
        targets: Vec<ProbeTarget>,
        #[arg(long)]
        alpha: Option<f32>,
        /// Defaults to `<run>/probe.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export (v, v_hat) pairs of a TACO run for visualisation.
    ExportEmb {
        run: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long)]
        alpha: Option<f32>,
        /// Defaults to `<run>/embeddings.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> taco::Result<()> {
    match cli.command {
        Command::Train {
            config,
            algo,
            env,
            seed,
            output_dir,
            overrides,
        } => {
            let mut pairs = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path, source: e })?;
                    parse_pairs(&text)?
                }
                None => Vec::new(),
            };
            let flags = [("algo", algo), ("env", env), ("seed", seed)];
            pairs.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
            if let Some(dir) = output_dir {
                pairs.push(("output_dir".into(), dir.display().to_string()));
            }
            pairs.extend(overrides.pairs()?);
            let art = cmd_train(&pairs, |row| eprintln!("{}", row.to_csv()))?;
            println!("{}", art.output_dir.display());
        }
        Command::Eval {
            run,
            episodes,
            alpha,
            seed,
            out,
            overrides,
        } => {
            let handle = RunHandle::open(&run, &overrides.pairs()?)?;
            let report = cmd_eval(&handle, episodes, alpha, seed)?;
            let out = out.unwrap_or_else(|| handle.dir.join(format!("eval_alpha{alpha}.json")));
            write_json(&out, &report)?;
            println!(
                "algo={} env={} alpha={} episodes={} success_rate={} mean_return={}",
                report.algo, report.env, report.alpha, report.episodes, report.success_rate, report.mean_return
            );
        }
        Command::Sweep {
            spec,
            output_dir,
            parallel_cells,
        } => {
            let sweep = SweepSpec::load(&spec)?;
            let out = output_dir.unwrap_or_else(|| sweep_output_dir(&spec));
            let report = cmd_sweep(&sweep, &out, parallel_cells)?;
            for r in report.runs.iter().filter(|r| r.outcome.is_err()) {
                eprintln!("cell {} seed {} failed: {}", r.cell, r.seed, r.outcome.as_ref().unwrap_err());
            }
            println!("{}", report.summary_csv.display());
        }
        Command::ProbeRec {
            run,
            episodes,
            targets,
            alpha,
            out,
        } => {
            let handle = RunHandle::open(&run, &[])?;
            let cfg = ProbeConfig {
                episodes,
                targets,
                alpha,
                ..ProbeConfig::default()
            };
            let results = cmd_probe_reconstruction(&handle, &cfg)?;
            let out = out.unwrap_or_else(|| handle.dir.join("probe.csv"));
            write_probe_csv(&out, &results)?;
            for r in &results {
                println!("{} mse={} normalized={:?}", r.target.name(), r.mse, r.normalized_mse);
            }
        }
        Command::ExportEmb {
            run,
            episodes,
            alpha,
            out,
        } => {
            let handle = RunHandle::open(&run, &[])?;
            let out = out.unwrap_or_else(|| handle.dir.join("embeddings.csv"));
            let export = cmd_export_embeddings(&handle, episodes, alpha, &out)?;
            println!("{} rows -> {}", export.rows, export.path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
