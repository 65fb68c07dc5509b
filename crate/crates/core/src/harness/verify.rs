//! Oracle and property suites behind `polarwz verify`.
//!
//! Every suite is deterministic in its seed and reports one line per check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::hashtest::{choose_hash_params, Feedback};
use crate::lattice::{DiscreteGaussian, DiscreteGaussianSpec, Lattice1D};
use crate::model::{mi_decomposition, mmse_reconstruct, round_params, GuessSchedule, SourceParams};
use crate::oracle::{
    coset_weight, exhaustive_conditionals, exhaustive_multilevel, mi_oracle, mmse_oracle,
    tv_distance, ClosenessScenario,
};
use crate::polar::{multilevel_pass, multilevel_posteriors, sc_pass, BitRule, PartModel, PolarTransform};

pub const SUITES: [&str; 6] = [
    "transform",
    "sc-oracle",
    "dg-sampler",
    "mi-identity",
    "mmse-identity",
    "closeness",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: &str) -> Self {
        Self {
            suite: suite.to_string(),
            checks: Vec::new(),
        }
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl std::fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "ok  " } else { "FAIL" };
            writeln!(f, "[{tag}] {}/{}: {}", self.suite, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Runs one suite by name, or all of them for `None`.
pub fn run_suites(name: Option<&str>, seed: u64) -> Result<Vec<SuiteReport>> {
    let names: Vec<&str> = match name {
        None => SUITES.to_vec(),
        Some(n) if SUITES.contains(&n) => vec![n],
        Some(n) => {
            return Err(Error::Config(format!(
                "unknown suite `{n}` (expected one of {})",
                SUITES.join(", ")
            )))
        }
    };
    names
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            let s = derive_seed(seed, i as u64);
            match n {
                "transform" => transform_suite(1000, s),
                "sc-oracle" => sc_oracle_suite(100, s),
                "dg-sampler" => dg_sampler_suite(100_000, s),
                "mi-identity" => mi_identity_suite(1000, s),
                "mmse-identity" => mmse_identity_suite(1000, s),
                _ => closeness_suite(10_000, s),
            }
        })
        .collect()
}

/// `G_N` is an involution: `trials` random inputs at every `N` up to 4096.
pub fn transform_suite(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("transform");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = PolarTransform::new(2)?;
    rep.check(
        "example",
        t.apply(&[1, 1])? == [0, 1],
        "G_2 (1,1) = (0,1)",
    );
    for log_n in 1..=12 {
        let t = PolarTransform::new(1 << log_n)?;
        let bad = (0..trials)
            .filter(|_| {
                let u: Vec<u8> = (0..t.n()).map(|_| rng.random_range(0..2)).collect();
                let mut v = u.clone();
                t.apply_in_place(&mut v);
                t.apply_in_place(&mut v);
                v != u
            })
            .count();
        rep.check(
            format!("involution-n{}", t.n()),
            bad == 0,
            format!("{bad}/{trials} inputs not restored"),
        );
    }
    Ok(rep)
}

fn random_weights(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| [rng.random_range(0.01..1.0), rng.random_range(0.01..1.0)])
        .collect()
}

/// SC posteriors against exhaustive enumeration: binary SC for `N <= 16`
/// and the multilevel lattice pass for every `N ell <= 16`.
pub fn sc_oracle_suite(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("sc-oracle");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in [1usize, 2, 4, 8, 16] {
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let w = random_weights(n, &mut rng);
            let (u, posts) = sc_pass(&w, &vec![BitRule::Sample; n], &mut rng)?;
            let exact = exhaustive_conditionals(&w, &u);
            for (p, e) in posts.iter().zip(&exact) {
                worst = worst.max((p[0] - e[0]).abs()).max((p[1] - e[1]).abs());
            }
        }
        rep.check(
            format!("binary-n{n}"),
            worst <= 1e-9,
            format!("max abs error {worst:.2e} over {trials} weight vectors"),
        );
    }
    for t in 1..=4u32 {
        let n = 1usize << t;
        let lattice = Lattice1D::new(t)?;
        for ell in 1..=16 / n {
            let mut worst: f64 = 0.0;
            for _ in 0..trials {
                let var_part = rng.random_range(0.3..3.0);
                let noise_var = rng.random_range(0.2..2.0);
                let model = PartModel::new(lattice, ell, var_part)?;
                let obs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                // a path of positive probability
                let target = multilevel_pass(&model, &obs, noise_var, 0, 1, |_, _| BitRule::Sample, &mut rng)?;
                let posts = multilevel_posteriors(&model, &obs, noise_var, &target)?;
                let exact = exhaustive_multilevel(
                    n,
                    ell,
                    |j, m| coset_weight(&model.dg, obs[j], noise_var, ell, m),
                    &target,
                )?;
                for (pl, el) in posts.iter().zip(&exact) {
                    for (p, e) in pl.iter().zip(el) {
                        worst = worst.max((p[0] - e[0]).abs()).max((p[1] - e[1]).abs());
                    }
                }
            }
            rep.check(
                format!("multilevel-n{n}-l{ell}"),
                worst <= 1e-9,
                format!("max abs error {worst:.2e} over {trials} observation vectors"),
            );
        }
    }
    Ok(rep)
}

/// Sampler total-variation distance and pmf normalization.
pub fn dg_sampler_suite(samples: usize, seed: u64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("dg-sampler");
    let cases = [
        (Lattice1D::integers(), 1.0, 0.0),
        (Lattice1D::integers(), 2.5, 0.3),
        (Lattice1D::new(12)?, 0.5, 0.0),
        (Lattice1D::new(8)?, 0.7, -0.4),
    ];
    for (i, (lattice, sigma, center)) in cases.into_iter().enumerate() {
        let dg = DiscreteGaussian::new(DiscreteGaussianSpec::new(lattice, sigma, center)?);
        let (lo, hi) = dg.support();
        let pmf: Vec<f64> = (lo..=hi).map(|m| dg.pmf_index(m)).collect();
        let norm_err = (pmf.iter().sum::<f64>() - 1.0).abs();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let mut counts = vec![0u64; pmf.len()];
        for m in dg.sample_indices(samples, &mut rng) {
            counts[(m - lo) as usize] += 1;
        }
        let tv = tv_distance(&counts, &pmf);
        let name = format!("scale{:.3}-sigma{sigma}-c{center}", lattice.scale);
        rep.check(
            format!("{name}-normalization"),
            norm_err <= 1e-12,
            format!("|sum pmf - 1| = {norm_err:.2e}"),
        );
        rep.check(
            format!("{name}-tv"),
            tv <= 0.01,
            format!("TV {tv:.4} at {samples} samples"),
        );
    }
    Ok(rep)
}

/// A random valid (source, schedule, round) triple.
fn random_instance(rng: &mut ChaCha8Rng) -> Result<(SourceParams, GuessSchedule, usize)> {
    let delta = rng.random_range(0.2..2.0);
    let sigma_x2 = delta * rng.random_range(3.0..60.0);
    let r = rng.random_range(1..=5);
    let mut pts: Vec<f64> = (0..=r)
        .map(|_| rng.random_range(delta * 1.05..sigma_x2 * 0.95))
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let sched = GuessSchedule::from_points(pts)?;
    let k = rng.random_range(1..=sched.rounds().max(1));
    Ok((SourceParams::codec(sigma_x2, delta)?, sched, k))
}

/// The mutual-information decomposition of the auxiliary, closed form and
/// from dense covariance algebra.
pub fn mi_identity_suite(draws: usize, seed: u64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("mi-identity");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut closed, mut oracle, mut cross): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut used = 0;
    while used < draws {
        let (src, sched, k) = random_instance(&mut rng)?;
        if sched.rounds() == 0 {
            continue;
        }
        used += 1;
        let (l, r) = mi_decomposition(k, &sched, &src)?;
        let (ol, or) = mi_oracle(k, &sched, &src)?;
        closed = closed.max((l - r).abs());
        oracle = oracle.max((ol - or).abs());
        cross = cross.max((l - ol).abs());
    }
    rep.check("closed-form", closed <= 1e-9, format!("max |lhs - rhs| {closed:.2e} over {draws} draws"));
    rep.check("covariance", oracle <= 1e-9, format!("max |lhs - rhs| {oracle:.2e}"));
    rep.check("agreement", cross <= 1e-9, format!("max |closed - covariance| {cross:.2e}"));
    Ok(rep)
}

/// The reconstruction gain against the linear MMSE weights solved from the
/// joint covariance.
pub fn mmse_identity_suite(draws: usize, seed: u64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("mmse-identity");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut gain_err, mut recon_err): (f64, f64) = (0.0, 0.0);
    let mut used = 0;
    while used < draws {
        let (src, sched, k) = random_instance(&mut rng)?;
        if sched.rounds() == 0 {
            continue;
        }
        used += 1;
        let rp = round_params(k, &sched, &src)?;
        let (ca, cy) = mmse_oracle(&src, &rp);
        gain_err = gain_err.max((cy - rp.mmse_gain(&src)).abs()).max((ca + cy - 1.0).abs());
        let a: f64 = rng.random_range(-5.0..5.0);
        let y: f64 = rng.random_range(-5.0..5.0);
        let x_hat = mmse_reconstruct(&[a], &[y], &src, &rp)?[0];
        recon_err = recon_err.max((x_hat - (ca * a + cy * y)).abs());
    }
    rep.check("gain", gain_err <= 1e-9, format!("max coefficient error {gain_err:.2e} over {draws} draws"));
    rep.check("reconstruction", recon_err <= 1e-9, format!("max estimate error {recon_err:.2e}"));
    Ok(rep)
}

/// Wrong-decision rates of the closeness test at `N = 4096`, `sigma_x2 = 4`,
/// `delta = 1`: raw counts at `m = 2048`, tilted estimates at `m = 288` and
/// `m = 2048`, and a cross-check of the tilted estimator at small `m`.
pub fn closeness_suite(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("closeness");
    let scenario = |m, ratio, expected| -> Result<ClosenessScenario> {
        Ok(ClosenessScenario {
            params: choose_hash_params(4096, 1.0, 4.0, m)?,
            sigma_x2: 4.0,
            delta: 1.0,
            ratio,
            expected,
        })
    };
    for (label, ratio, expected) in [("false-ack", 8.0, Feedback::Nack), ("false-nack", 1.0, Feedback::Ack)] {
        let big = scenario(2048, ratio, expected)?;
        let errors = big.raw_errors(trials, derive_seed(seed, 1));
        let rate = errors as f64 / trials as f64;
        rep.check(
            format!("{label}-m2048"),
            rate <= 1e-3,
            format!("{errors}/{trials} wrong decisions"),
        );
        let small = scenario(288, ratio, expected)?;
        let t_big = big.tilted(4000, derive_seed(seed, 2));
        let t_small = small.tilted(4000, derive_seed(seed, 3));
        rep.check(
            format!("{label}-m288-vs-m2048"),
            t_small.log10_p > t_big.log10_p,
            format!(
                "log10 P: m=288 {:.1} (rse {:.2}), m=2048 {:.1} (rse {:.2})",
                t_small.log10_p, t_small.rel_se, t_big.log10_p, t_big.rel_se
            ),
        );
        let tiny = scenario(16, ratio, expected)?;
        let raw = tiny.raw_errors(100_000, derive_seed(seed, 4)) as f64 / 1e5;
        let tilted = 10f64.powf(tiny.tilted(10_000, derive_seed(seed, 5)).log10_p);
        rep.check(
            format!("{label}-estimator-m16"),
            (raw / tilted - 1.0).abs() <= 0.2,
            format!("raw {raw:.3e} vs tilted {tilted:.3e}"),
        );
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suites_pass() {
        for rep in [
            transform_suite(20, 1).unwrap(),
            sc_oracle_suite(3, 2).unwrap(),
            dg_sampler_suite(100_000, 3).unwrap(),
            mi_identity_suite(50, 4).unwrap(),
            mmse_identity_suite(50, 5).unwrap(),
        ] {
            assert!(rep.passed(), "{rep}");
        }
    }

    #[test]
    fn unknown_suite_is_a_config_error() {
        assert!(matches!(run_suites(Some("nope"), 0), Err(Error::Config(_))));
    }
}
