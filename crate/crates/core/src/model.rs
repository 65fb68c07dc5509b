//! Gaussian source model, guess schedule and closed-form per-round parameters.
//!
//! The source is a pair `(X, Y)` with `X = Y + Z`, `Y` and `Z` independent,
//! `var(X) = sigma_x2` and `var(Z) = sigma_z2`. The codec only ever sees
//! `sigma_x2` and the target distortion; the true noise variance is a harness
//! concern and is optional in [`SourceParams`].
//!
//! For a guess `s2` of the noise variance the optimal auxiliary has distortion
//! parameter `delta_s = s2 * delta / (s2 - delta)` and shrinkage
//! `alpha_s = sigma_x2 / (sigma_x2 + delta_s)`. Round `k` conveys the part
//! `X'_{k-1}` whose variance is the drop of `alpha * delta` between guesses
//! `k - 1` and `k`, with `alpha_0 * delta_0 = sigma_x2` (nothing agreed yet).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, invalid_param, Result};

/// Known and (optionally) hidden parameters of the Gaussian source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    pub sigma_x2: f64,
    /// True noise variance. `None` on the codec side.
    pub sigma_z2: Option<f64>,
    pub delta_target: f64,
}

impl SourceParams {
    /// Full source description, `sigma_x2 > sigma_z2 > delta > 0`.
    pub fn new(sigma_x2: f64, sigma_z2: f64, delta_target: f64) -> Result<Self> {
        if !(delta_target > 0.0 && sigma_z2 > delta_target && sigma_x2 > sigma_z2)
            || !sigma_x2.is_finite()
        {
            return Err(invalid_param(format!(
                "need sigma_x2 > sigma_z2 > delta > 0, got {sigma_x2}, {sigma_z2}, {delta_target}"
            )));
        }
        Ok(Self {
            sigma_x2,
            sigma_z2: Some(sigma_z2),
            delta_target,
        })
    }

    /// Codec-side view: the noise variance is unknown.
    pub fn codec(sigma_x2: f64, delta_target: f64) -> Result<Self> {
        if !(delta_target > 0.0 && sigma_x2 > delta_target) || !sigma_x2.is_finite() {
            return Err(invalid_param(format!(
                "need sigma_x2 > delta > 0, got {sigma_x2}, {delta_target}"
            )));
        }
        Ok(Self {
            sigma_x2,
            sigma_z2: None,
            delta_target,
        })
    }

    pub fn without_noise(&self) -> Self {
        Self {
            sigma_z2: None,
            ..*self
        }
    }

    /// The Wyner-Ziv rate `(1/2) log2(sigma_z2 / delta)` for the true noise.
    pub fn wz_rate(&self) -> Option<f64> {
        self.sigma_z2
            .map(|sz2| 0.5 * (sz2 / self.delta_target).log2())
    }
}

/// Ordered noise-variance guesses `[sigma_0^2, ..., sigma_r^2]`.
///
/// `sigma_0^2` is the lower end of the covered interval; round `k` in `1..=r`
/// designs its code for `sigma_k^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessSchedule {
    pub sigma2: Vec<f64>,
    pub omega: f64,
}

impl GuessSchedule {
    /// Builds a schedule from explicit points; `omega` is the largest
    /// half-log2 ratio between consecutive guesses.
    pub fn from_points(sigma2: Vec<f64>) -> Result<Self> {
        if sigma2.is_empty() {
            return Err(invalid_param("empty guess schedule"));
        }
        if sigma2.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(invalid_param("guesses must be positive and finite"));
        }
        if sigma2.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid_param("guesses must be strictly increasing"));
        }
        let omega = sigma2
            .windows(2)
            .map(|w| 0.5 * (w[1] / w[0]).log2())
            .fold(0.0, f64::max);
        Ok(Self { sigma2, omega })
    }

    /// Number of rounds `r` (guesses beyond `sigma_0^2`).
    pub fn rounds(&self) -> usize {
        self.sigma2.len() - 1
    }

    pub fn guess(&self, k: usize) -> f64 {
        self.sigma2[k]
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.sigma2[0], *self.sigma2.last().unwrap())
    }

    /// Checks `delta < sigma_0^2` and `sigma_r^2 < sigma_x2`.
    pub fn validate_for(&self, src: &SourceParams) -> Result<()> {
        let (lo, hi) = self.interval();
        if lo <= src.delta_target {
            return Err(invalid_param(format!(
                "lowest guess {lo} must exceed the target distortion {}",
                src.delta_target
            )));
        }
        if hi >= src.sigma_x2 {
            return Err(invalid_param(format!(
                "highest guess {hi} must stay below sigma_x2 = {}",
                src.sigma_x2
            )));
        }
        Ok(())
    }
}

/// Geometric grid `sigma_{i+1}^2 = sigma_i^2 * 2^(2 omega)` from `lo` until it
/// covers `hi`.
pub fn make_schedule(interval_lo: f64, interval_hi: f64, omega: f64) -> Result<GuessSchedule> {
    if !(interval_lo > 0.0) || !(omega > 0.0) || !interval_hi.is_finite() {
        return Err(invalid_param(format!(
            "schedule needs positive bounds and omega, got ({interval_lo}, {interval_hi}, {omega})"
        )));
    }
    if interval_hi < interval_lo {
        return Err(invalid_param("interval_hi must be at least interval_lo"));
    }
    let ratio = (2.0 * omega).exp2();
    let mut grid = vec![interval_lo];
    // Relative slack so that exact powers (2 -> 4 -> 8) terminate on the bound.
    while *grid.last().unwrap() < interval_hi * (1.0 - 1e-12) {
        let next = grid.last().unwrap() * ratio;
        grid.push(next);
    }
    Ok(GuessSchedule {
        sigma2: grid,
        omega,
    })
}

/// `delta_s = s2 * delta / (s2 - delta)`.
pub fn delta_at(s2: f64, delta: f64) -> f64 {
    s2 * delta / (s2 - delta)
}

/// `alpha_s = sigma_x2 / (sigma_x2 + delta_s)`.
pub fn alpha_at(s2: f64, sigma_x2: f64, delta: f64) -> f64 {
    sigma_x2 / (sigma_x2 + delta_at(s2, delta))
}

/// `alpha_s * delta_s`, the residual variance `var(X - A_s)`.
pub fn residual_var_at(s2: f64, sigma_x2: f64, delta: f64) -> f64 {
    alpha_at(s2, sigma_x2, delta) * delta_at(s2, delta)
}

/// `var(Z')` of the scaled side information under guess `s2`.
pub fn zprime_var_at(s2: f64, sigma_x2: f64) -> f64 {
    sigma_x2 * s2 / (sigma_x2 - s2)
}

/// All scalars a round needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundParams {
    pub k: usize,
    pub sigma_k2: f64,
    pub delta_k: f64,
    pub alpha_k: f64,
    /// Variance of the part `X'_{k-1}` conveyed in this round.
    pub var_part: f64,
    /// Variance of `T_k`, the residual after this round's part.
    pub var_t: f64,
    /// Variance of `Z'` at this round's guess.
    pub var_zprime: f64,
    pub ybar_scale: f64,
}

impl RoundParams {
    /// Gain applied to the innovation `ybar - a_hat` by the MMSE estimate.
    pub fn mmse_gain(&self, src: &SourceParams) -> f64 {
        (src.sigma_x2 - self.sigma_k2) * src.delta_target / (src.sigma_x2 * self.sigma_k2)
    }
}

fn check_guess(s2: f64, src: &SourceParams) -> Result<()> {
    if s2 <= src.delta_target {
        return Err(invalid_param(format!(
            "guess {s2} must exceed delta = {} (pole in delta_k)",
            src.delta_target
        )));
    }
    if s2 >= src.sigma_x2 {
        return Err(invalid_param(format!(
            "guess {s2} must stay below sigma_x2 = {} (pole in the side-information scale)",
            src.sigma_x2
        )));
    }
    Ok(())
}

/// Parameters of round `k` (`1..=r`).
pub fn round_params(k: usize, sched: &GuessSchedule, src: &SourceParams) -> Result<RoundParams> {
    if k == 0 || k > sched.rounds() {
        return Err(invalid_param(format!(
            "round {k} outside 1..={}",
            sched.rounds()
        )));
    }
    round_params_at(k, sched.guess(k), prev_residual(k, sched, src)?, src)
}

fn prev_residual(k: usize, sched: &GuessSchedule, src: &SourceParams) -> Result<f64> {
    if k == 1 {
        Ok(src.sigma_x2)
    } else {
        let prev = sched.guess(k - 1);
        check_guess(prev, src)?;
        Ok(residual_var_at(prev, src.sigma_x2, src.delta_target))
    }
}

/// Round parameters for a single guess, with the previous residual variance
/// given explicitly.
pub fn round_params_at(
    k: usize,
    sigma_k2: f64,
    prev_residual: f64,
    src: &SourceParams,
) -> Result<RoundParams> {
    check_guess(sigma_k2, src)?;
    let delta_k = delta_at(sigma_k2, src.delta_target);
    let alpha_k = src.sigma_x2 / (src.sigma_x2 + delta_k);
    let var_t = alpha_k * delta_k;
    let var_part = prev_residual - var_t;
    if !(var_part > 0.0) {
        return Err(invalid_param(format!(
            "round {k}: part variance {var_part} is not positive; guesses must increase"
        )));
    }
    Ok(RoundParams {
        k,
        sigma_k2,
        delta_k,
        alpha_k,
        var_part,
        var_t,
        var_zprime: zprime_var_at(sigma_k2, src.sigma_x2),
        ybar_scale: src.sigma_x2 / (src.sigma_x2 - sigma_k2),
    })
}

/// `n` i.i.d. draws of `(X, Y)`; deterministic in `seed`.
pub fn sample_source(n: usize, src: &SourceParams, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(invalid_arg("sample count must be at least 1"));
    }
    let sz2 = src
        .sigma_z2
        .ok_or_else(|| invalid_param("sampling needs the true noise variance"))?;
    if !(sz2 >= 0.0 && sz2 < src.sigma_x2) {
        return Err(invalid_param(format!(
            "invalid covariance: sigma_z2 = {sz2}, sigma_x2 = {}",
            src.sigma_x2
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ny = Normal::new(0.0, (src.sigma_x2 - sz2).sqrt()).map_err(|e| invalid_param(e.to_string()))?;
    let nz = Normal::new(0.0, sz2.sqrt()).map_err(|e| invalid_param(e.to_string()))?;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let yi = ny.sample(&mut rng);
        let zi = nz.sample(&mut rng);
        x.push(yi + zi);
        y.push(yi);
    }
    Ok((x, y))
}

/// `ybar = sigma_x2 / (sigma_x2 - sigma_k2) * y`.
pub fn scaled_side_info(y: &[f64], rp: &RoundParams) -> Vec<f64> {
    y.iter().map(|v| v * rp.ybar_scale).collect()
}

/// `x_hat = a_hat + gain * (ybar - a_hat)`.
pub fn mmse_reconstruct(
    a_hat: &[f64],
    ybar: &[f64],
    src: &SourceParams,
    rp: &RoundParams,
) -> Result<Vec<f64>> {
    if a_hat.len() != ybar.len() {
        return Err(invalid_arg(format!(
            "length mismatch: a_hat has {}, ybar has {}",
            a_hat.len(),
            ybar.len()
        )));
    }
    let gain = rp.mmse_gain(src);
    Ok(a_hat
        .iter()
        .zip(ybar)
        .map(|(a, y)| a + gain * (y - a))
        .collect())
}

/// Conditional mutual information of the decomposition terms under guess `k`:
/// entry `j` is `I(X'_j ; X_{j+1} | Y_{j+1})` for `j = 0..k`.
///
/// All parts are those of the schedule; the side-information noise is the one
/// of guess `k`.
pub fn decomposition_terms(k: usize, sched: &GuessSchedule, src: &SourceParams) -> Result<Vec<f64>> {
    if k == 0 || k > sched.rounds() {
        return Err(invalid_param(format!(
            "round {k} outside 1..={}",
            sched.rounds()
        )));
    }
    let v = zprime_var_at(sched.guess(k), src.sigma_x2);
    check_guess(sched.guess(k), src)?;
    (1..=k)
        .map(|j| {
            let rp = round_params(j, sched, src)?;
            let (p, t) = (rp.var_part, rp.var_t);
            Ok(0.5 * (((t + v) * (p + t)) / (t * (p + t + v))).log2())
        })
        .collect()
}

/// Both sides of the mutual-information decomposition for round `k`.
///
/// `lhs = I(A_k ; X | Ybar)` from the two conditional variances of the
/// auxiliary; `rhs` is the sum of [`decomposition_terms`].
pub fn mi_decomposition(k: usize, sched: &GuessSchedule, src: &SourceParams) -> Result<(f64, f64)> {
    let terms = decomposition_terms(k, sched, src)?;
    let rp = round_params(k, sched, src)?;
    let sx2 = src.sigma_x2;
    let var_a = rp.alpha_k * sx2;
    let var_ybar = sx2 + rp.var_zprime;
    let var_a_given_ybar = var_a - var_a * var_a / var_ybar;
    let var_a_given_x = var_a - var_a * var_a / sx2;
    let lhs = 0.5 * (var_a_given_ybar / var_a_given_x).log2();
    Ok((lhs, terms.iter().sum()))
}
