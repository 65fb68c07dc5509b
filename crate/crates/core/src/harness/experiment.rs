//! Trial runs and sweeps over the true noise variance.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::hashtest::{choose_hash_params, HashParams};
use crate::protocol::{run_session, SessionCodes, SessionSeeds};

use super::config::ExperimentConfig;

/// One session. The first eight fields are the CSV columns, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub sigma_z2: f64,
    pub trial: usize,
    pub tau: usize,
    pub rate_bits_per_sample: f64,
    pub feedback_bits: usize,
    pub mse_per_sample: f64,
    pub success: bool,
    pub seed: u64,
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub sigma_z2: f64,
    pub trials: usize,
    pub success_fraction: f64,
    pub mean_tau: f64,
    pub mean_rate: f64,
    pub rate_p10: f64,
    pub rate_p90: f64,
    /// Over successful trials; NaN when none succeeded.
    pub mean_mse: f64,
    pub wz_rate: f64,
}

pub fn hash_params(cfg: &ExperimentConfig) -> Result<HashParams> {
    choose_hash_params(cfg.n, cfg.delta, cfg.sigma_x2, cfg.hash_m)
}

/// Seed of trial `trial` at noise `sigma_z2`; stable across thread counts.
pub fn trial_seed(base: u64, sigma_z2: f64, trial: usize) -> u64 {
    derive_seed(derive_seed(base, sigma_z2.to_bits()), trial as u64)
}

/// Runs `cfg.trials` independent sessions at `sigma_z2`.
pub fn run_trials(cfg: &ExperimentConfig, codes: &SessionCodes, sigma_z2: f64) -> Result<Vec<TrialResult>> {
    let src = cfg.source(sigma_z2)?;
    let hp = hash_params(cfg)?;
    (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(cfg.seed, sigma_z2, trial);
            let start = Instant::now();
            let t = run_session(&src, codes, &hp, SessionSeeds::derive(seed))?;
            Ok(TrialResult {
                sigma_z2,
                trial,
                tau: t.tau,
                rate_bits_per_sample: t.total_rate,
                feedback_bits: t.feedback_bits,
                mse_per_sample: t.mse,
                success: t.success,
                seed,
                wall_time_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn aggregate(cfg: &ExperimentConfig, sigma_z2: f64, rows: &[TrialResult]) -> Result<Aggregate> {
    let n = rows.len().max(1) as f64;
    let mut rates: Vec<f64> = rows.iter().map(|r| r.rate_bits_per_sample).collect();
    rates.sort_by(f64::total_cmp);
    let ok: Vec<&TrialResult> = rows.iter().filter(|r| r.success).collect();
    Ok(Aggregate {
        sigma_z2,
        trials: rows.len(),
        success_fraction: ok.len() as f64 / n,
        mean_tau: rows.iter().map(|r| r.tau as f64).sum::<f64>() / n,
        mean_rate: rates.iter().sum::<f64>() / n,
        rate_p10: quantile(&rates, 0.1),
        rate_p90: quantile(&rates, 0.9),
        mean_mse: if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|r| r.mse_per_sample).sum::<f64>() / ok.len() as f64
        },
        wz_rate: cfg.source(sigma_z2)?.wz_rate().unwrap_or(f64::NAN),
    })
}

pub const CSV_COLUMNS: [&str; 8] = [
    "sigma_z2",
    "trial",
    "tau",
    "rate_bits_per_sample",
    "feedback_bits",
    "mse_per_sample",
    "success",
    "seed",
];

/// Per-trial rows under [`CSV_COLUMNS`]; the header is written even when
/// there are no rows.
pub fn write_csv(path: &Path, rows: &[TrialResult]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Noise variances outside the schedule's interval, where no round is
/// designed for the true noise.
pub fn out_of_range(cfg: &ExperimentConfig, sweep: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = cfg.schedule()?.interval();
    Ok(sweep.iter().copied().filter(|s| *s < lo || *s > hi).collect())
}

/// Per-trial rows for every noise variance of the sweep, plus aggregates.
pub fn sweep(cfg: &ExperimentConfig, codes: &SessionCodes) -> Result<(Vec<TrialResult>, Vec<Aggregate>)> {
    if cfg.sweep.is_empty() {
        return Err(Error::Config("`sweep` lists no noise variances".into()));
    }
    let mut rows = Vec::new();
    let mut aggs = Vec::new();
    for &s in &cfg.sweep {
        let r = run_trials(cfg, codes, s)?;
        aggs.push(aggregate(cfg, s, &r)?);
        rows.extend(r);
    }
    Ok((rows, aggs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::cache::CodeCache;

    #[test]
    fn csv_header_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let row = TrialResult {
            sigma_z2: 2.0,
            trial: 0,
            tau: 1,
            rate_bits_per_sample: 1.5,
            feedback_bits: 1,
            mse_per_sample: 0.9,
            success: true,
            seed: 7,
            wall_time_s: 0.1,
        };
        write_csv(&path, &[row]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "sigma_z2,trial,tau,rate_bits_per_sample,feedback_bits,mse_per_sample,success,seed"
        );
        assert_eq!(lines.next().unwrap(), "2.0,0,1,1.5,1,0.9,true,7");
        write_csv(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
    }

    #[test]
    fn trials_are_deterministic_across_pools() {
        let cfg = ExperimentConfig::from_toml(
            "n = 64\nsigma_x2 = 4.0\nschedule = [1.5, 3.0]\nmc_samples = 40\nz_low = 1e-3\ntrials = 6\nhash_m = 32",
            &[],
        )
        .unwrap();
        let codes = CodeCache::build(&cfg).unwrap().session_codes(&cfg).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_trials(&cfg, &codes, 2.0).unwrap())
        };
        let (a, b) = (run(1), run(3));
        let strip = |v: Vec<TrialResult>| {
            v.into_iter()
                .map(|r| TrialResult { wall_time_s: 0.0, ..r })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(a), strip(b));
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert!((quantile(&v, 0.1) - 1.4).abs() < 1e-12);
    }
}
