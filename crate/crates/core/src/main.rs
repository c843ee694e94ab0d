use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pbrl_core::envs::{generate_dataset, read_dataset, write_dataset, Behavior, Environment};
use pbrl_core::harness::{
    preset, run_preset, uq_demo, write_grid_csv, write_json, write_report, write_run_files, UqDemoConfig,
    DEFAULT_SEEDS,
};
use pbrl_core::numerics::SeededRng;
use pbrl_core::pbrl::{train, PbrlConfig};
use pbrl_core::{Error, Result};

#[derive(Parser)]
#[command(name = "pbrl", version, about = "Pessimistic bootstrapping for offline RL at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out a behavior policy and write an offline dataset.
    GenData {
        #[arg(long)]
        env: String,
        #[arg(long)]
        behavior: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a dataset file; writes config, metrics, summary and critic checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a named experiment preset over seeds.
    RunPreset {
        #[arg(long)]
        name: String,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: PathBuf,
        /// Override the gradient-step count of every training run.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Aggregate run records into tables, profiles and intervals.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value_t = 50.0)]
        eta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit an ensemble to 2-D regression data and write its uncertainty grid.
    UqDemo {
        #[arg(long, default_value_t = 60)]
        n_points: usize,
        #[arg(long, default_value_t = 41)]
        grid_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Start every member from the same parameters.
        #[arg(long)]
        identical_members: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenData { env, behavior, n, seed, out } => {
            let env = Environment::from_id(&env)?;
            let ds = generate_dataset(&env, Behavior::parse(&behavior)?, n, &mut SeededRng::new(seed))?;
            write_dataset(&ds, BufWriter::new(File::create(&out)?))?;
            eprintln!("wrote {} transitions to {}", ds.len(), out.display());
        }
        Command::Train { config, dataset, seed, out } => {
            let text = fs::read_to_string(&config)?;
            let cfg = PbrlConfig::parse(&text)?;
            let ds = read_dataset(BufReader::new(File::open(&dataset)?))?;
            let result = train(&ds, &cfg, &SeededRng::new(seed))?;
            write_run_files(&out, &cfg, &result)?;
            result.critic.save(BufWriter::new(File::create(out.join("critic.ckpt"))?), seed)?;
            println!("{}", serde_json::to_string(&result.summary)?);
        }
        Command::RunPreset { name, seeds, out, steps } => {
            let p = preset(&name, steps)?;
            let seeds = seeds.unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
            let records = run_preset(&p, &seeds, &out)?;
            let mut failed = 0;
            for r in &records {
                match (&r.error, r.final_normalized_score) {
                    (Some(e), _) => {
                        failed += 1;
                        eprintln!("FAILED {} {} seed {}: {e}", r.algorithm, r.task, r.seed);
                    }
                    (None, Some(s)) => eprintln!("{} {} seed {}: {s:.1} ({:.1}s)", r.algorithm, r.task, r.seed, r.wall_clock_s),
                    (None, None) => eprintln!("{} {} seed {} done ({:.1}s)", r.algorithm, r.task, r.seed, r.wall_clock_s),
                }
            }
            eprintln!("{} runs, {failed} failed", records.len());
            return Ok(failed == 0);
        }
        Command::Report { runs, eta, out } => {
            let report = write_report(&runs, eta, &out)?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::UqDemo { n_points, grid_n, seed, identical_members, out } => {
            let cfg = UqDemoConfig { n_points, grid_n, identical_members, ..UqDemoConfig::default() };
            let demo = uq_demo(&cfg, &SeededRng::new(seed))?;
            fs::create_dir_all(&out)?;
            write_grid_csv(&demo, BufWriter::new(File::create(out.join("grid.csv"))?))?;
            write_json(&out.join("summary.json"), &demo.summary)?;
            println!("{}", serde_json::to_string(&demo.summary)?);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::NonFinite { .. } = e {
                eprintln!("training diverged; lower the learning rates or check the dataset");
            }
            ExitCode::FAILURE
        }
    }
}
