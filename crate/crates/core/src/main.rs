use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polarwz::harness::experiment::out_of_range;
use polarwz::harness::{plot, run_trials, sweep, verify, write_csv, Aggregate, CodeCache, ExperimentConfig};
use polarwz::{Error, Result};

#[derive(Parser)]
#[command(name = "polarwz", version, about = "Universal interactive Wyner-Ziv quantization with polar lattices")]
struct Cli {
    /// Base seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Config override, `key=value` with a TOML value. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the code sets for every round and write the cache.
    Construct {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "codes.json")]
        out: PathBuf,
    },
    /// Run `trials` sessions at `sigma_z2`.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run `trials` sessions at every noise variance in `sweep`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Run oracle and property suites.
    Verify {
        #[arg(long)]
        suite: Option<String>,
    },
}

impl Cli {
    fn config(&self, path: &Path) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        ExperimentConfig::load(path, &overrides)
    }
}

fn print_aggregates(aggs: &[Aggregate]) {
    println!("sigma_z2  trials  success  mean_tau  mean_rate  p10    p90    wz_rate  mean_mse");
    for a in aggs {
        println!(
            "{:<8}  {:<6}  {:<7.3}  {:<8.3}  {:<9.4}  {:<5.3}  {:<5.3}  {:<7.4}  {:.4}",
            a.sigma_z2,
            a.trials,
            a.success_fraction,
            a.mean_tau,
            a.mean_rate,
            a.rate_p10,
            a.rate_p90,
            a.wz_rate,
            a.mean_mse
        );
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot set up {t} threads: {e}")))?;
    }
    match &cli.command {
        Command::Construct { config, out } => {
            let cfg = cli.config(config)?;
            let cache = CodeCache::build(&cfg)?;
            cache.save(out)?;
            for p in &cache.parts {
                let sent: usize = p.levels.iter().map(|l| l.sent.chars().map(hex_ones).sum::<usize>()).sum();
                println!("round {}: {sent} payload bits ({:.4} bits/sample)", p.round, sent as f64 / cfg.n as f64);
            }
            println!("wrote {} (digest {})", out.display(), cache.digest);
        }
        Command::Run { config, cache, out } => {
            let cfg = cli.config(config)?;
            let sz2 = cfg
                .sigma_z2
                .ok_or_else(|| Error::Config("`run` needs `sigma_z2`".into()))?;
            warn_out_of_range(&cfg, &[sz2])?;
            let codes = CodeCache::load(cache)?.session_codes(&cfg)?;
            let rows = run_trials(&cfg, &codes, sz2)?;
            write_csv(out, &rows)?;
            print_aggregates(&[polarwz::harness::aggregate(&cfg, sz2, &rows)?]);
        }
        Command::Sweep { config, cache, out, plot: plot_path } => {
            let cfg = cli.config(config)?;
            warn_out_of_range(&cfg, &cfg.sweep)?;
            let codes = CodeCache::load(cache)?.session_codes(&cfg)?;
            let (rows, aggs) = sweep(&cfg, &codes)?;
            write_csv(out, &rows)?;
            print_aggregates(&aggs);
            if let Some(p) = plot_path {
                std::fs::write(p, plot::sweep_svg(&aggs))?;
            }
        }
        Command::Verify { suite } => {
            let reports = verify::run_suites(suite.as_deref(), cli.seed.unwrap_or(0))?;
            let mut ok = true;
            for r in &reports {
                print!("{r}");
                ok &= r.passed();
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn hex_ones(c: char) -> usize {
    c.to_digit(16).map_or(0, |d| d.count_ones() as usize)
}

fn warn_out_of_range(cfg: &ExperimentConfig, values: &[f64]) -> Result<()> {
    let (lo, hi) = cfg.schedule()?.interval();
    for s in out_of_range(cfg, values)? {
        eprintln!("warning: sigma_z2 = {s} lies outside the schedule interval [{lo}, {hi}]");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidParameter(_) | Error::CacheMiss(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
