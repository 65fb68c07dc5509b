//! The scaled integer lattice `2^(-t/4) Z`, the discrete Gaussian over it and
//! the per-level coset likelihoods that drive the multilevel polar code.
//!
//! Lattice points are handled as integer indices `m` (the point is
//! `m * scale`) wherever possible, so that bit-plane arithmetic is exact.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, invalid_param, Error, Result};

/// Tail width of the truncation window, in standard deviations.
pub const WINDOW_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice1D {
    pub t: u32,
    pub scale: f64,
}

impl Lattice1D {
    /// `2^(-t/4) Z` for a polar block of length `2^t`.
    pub fn new(t: u32) -> Result<Self> {
        if t == 0 {
            return Err(invalid_param("lattice exponent t must be at least 1"));
        }
        Ok(Self {
            t,
            scale: (-(t as f64) / 4.0).exp2(),
        })
    }

    /// The integer lattice `Z`, used by reference computations.
    pub fn integers() -> Self {
        Self { t: 0, scale: 1.0 }
    }

    /// Integer index of a lattice point, or an error if `v` is off-lattice.
    pub fn index_of(&self, v: f64) -> Result<i64> {
        let q = v / self.scale;
        let m = q.round();
        if !q.is_finite() || (q - m).abs() > 1e-9 * m.abs().max(1.0) {
            return Err(invalid_arg(format!("{v} is not a point of {}Z", self.scale)));
        }
        Ok(m as i64)
    }

    pub fn point(&self, m: i64) -> f64 {
        m as f64 * self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteGaussianSpec {
    pub lattice: Lattice1D,
    pub sigma: f64,
    pub center: f64,
    /// Half-width of the support in lattice steps around the center.
    pub window: u64,
}

impl DiscreteGaussianSpec {
    pub fn new(lattice: Lattice1D, sigma: f64, center: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !center.is_finite() {
            return Err(invalid_param(format!("invalid discrete Gaussian sigma {sigma}")));
        }
        let window = (WINDOW_SIGMAS * sigma / lattice.scale).ceil() as u64;
        Ok(Self {
            lattice,
            sigma,
            center,
            window,
        })
    }

    /// Overrides the truncation window.
    pub fn with_window(mut self, window: u64) -> Self {
        self.window = window;
        self
    }

    /// Inclusive index range of the support.
    pub fn support(&self) -> (i64, i64) {
        let c = (self.center / self.lattice.scale).round() as i64;
        (c - self.window as i64, c + self.window as i64)
    }
}

/// A discrete Gaussian with its normalized pmf and CDF tabulated over the
/// window.
#[derive(Debug, Clone)]
pub struct DiscreteGaussian {
    spec: DiscreteGaussianSpec,
    lo: i64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    log_norm: f64,
}

impl DiscreteGaussian {
    pub fn new(spec: DiscreteGaussianSpec) -> Self {
        let (lo, hi) = spec.support();
        let s = spec.lattice.scale;
        let inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
        let log_f: Vec<f64> = (lo..=hi)
            .map(|m| {
                let d = m as f64 * s - spec.center;
                -d * d * inv
            })
            .collect();
        let top = log_f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let unnorm: Vec<f64> = log_f.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = unnorm.iter().sum();
        let pmf: Vec<f64> = unnorm.iter().map(|u| u / total).collect();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Self {
            spec,
            lo,
            pmf,
            cdf,
            log_norm: top + total.ln(),
        }
    }

    pub fn spec(&self) -> &DiscreteGaussianSpec {
        &self.spec
    }

    pub fn support(&self) -> (i64, i64) {
        (self.lo, self.lo + self.pmf.len() as i64 - 1)
    }

    /// `log sum_window f(lambda)` with `f` the unnormalized Gaussian kernel.
    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    /// Probability of the point with index `m`; zero outside the window.
    pub fn pmf_index(&self, m: i64) -> f64 {
        let off = m - self.lo;
        if off < 0 || off as usize >= self.pmf.len() {
            0.0
        } else {
            self.pmf[off as usize]
        }
    }

    pub fn pmf(&self, lambda: f64) -> Result<f64> {
        Ok(self.pmf_index(self.spec.lattice.index_of(lambda)?))
    }

    /// One draw by inverse CDF, as a lattice index.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.random();
        let pos = self.cdf.partition_point(|c| *c <= u);
        self.lo + pos.min(self.cdf.len() - 1) as i64
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<i64> {
        (0..n).map(|_| self.sample_index(rng)).collect()
    }
}

/// `D(lambda)` over the truncation window.
pub fn dg_pmf(spec: &DiscreteGaussianSpec, lambda: f64) -> Result<f64> {
    DiscreteGaussian::new(*spec).pmf(lambda)
}

/// `n` i.i.d. lattice points by inverse CDF.
pub fn dg_sample<R: Rng + ?Sized>(spec: &DiscreteGaussianSpec, n: usize, rng: &mut R) -> Vec<f64> {
    let dg = DiscreteGaussian::new(*spec);
    dg.sample_indices(n, rng)
        .into_iter()
        .map(|m| spec.lattice.point(m))
        .collect()
}

/// The `ell` least significant bit-planes of a vector, LSB first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitPlanes {
    pub ell: usize,
    pub n: usize,
    pub planes: Vec<Vec<u8>>,
}

impl BitPlanes {
    pub fn zeros(ell: usize, n: usize) -> Self {
        Self {
            ell,
            n,
            planes: vec![vec![0; n]; ell],
        }
    }

    /// Two's-complement residues of integer indices mod `2^ell`.
    pub fn from_indices(m: &[i64], ell: usize) -> Self {
        let mask = (1i64 << ell) - 1;
        let mut planes = vec![vec![0u8; m.len()]; ell];
        for (j, &v) in m.iter().enumerate() {
            let r = v & mask;
            for (i, plane) in planes.iter_mut().enumerate() {
                plane[j] = ((r >> i) & 1) as u8;
            }
        }
        Self {
            ell,
            n: m.len(),
            planes,
        }
    }

    /// Residues `sum_i 2^(i-1) plane_i(j)` in `[0, 2^ell)`.
    pub fn residues(&self) -> Vec<i64> {
        let mut out = vec![0i64; self.n];
        for (i, plane) in self.planes.iter().enumerate() {
            for (o, &b) in out.iter_mut().zip(plane) {
                *o |= (b as i64) << i;
            }
        }
        out
    }

    /// Centered representatives in `[-2^(ell-1), 2^(ell-1))`.
    pub fn centered_indices(&self) -> Vec<i64> {
        let half = 1i64 << (self.ell - 1);
        self.residues()
            .into_iter()
            .map(|m| if m >= half { m - 2 * half } else { m })
            .collect()
    }
}

pub fn point_to_planes(v: &[f64], lattice: &Lattice1D, ell: usize) -> Result<BitPlanes> {
    if ell == 0 || ell > 62 {
        return Err(invalid_arg(format!("unsupported level count {ell}")));
    }
    let m = v
        .iter()
        .map(|x| lattice.index_of(*x))
        .collect::<Result<Vec<_>>>()?;
    Ok(BitPlanes::from_indices(&m, ell))
}

pub fn planes_to_point(planes: &BitPlanes, lattice: &Lattice1D) -> Vec<f64> {
    planes
        .centered_indices()
        .into_iter()
        .map(|m| lattice.point(m))
        .collect()
}

fn gauss_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-d * d / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn check_level(residue: i64, level: usize) -> Result<()> {
    if level == 0 || level > 62 {
        return Err(invalid_arg(format!("level {level} out of range")));
    }
    if residue < 0 || residue >= 1i64 << (level - 1) {
        return Err(invalid_arg(format!(
            "residue {residue} outside [0, 2^{})",
            level - 1
        )));
    }
    Ok(())
}

/// Joint weight of bit `b` at level `level` with the observation: the sum of
/// `D(lambda) * N(obs; lambda, noise_var)` over the window points whose index
/// is `residue + 2^(level-1) b (mod 2^level)`.
///
/// This is the direct sum over the window; [`LevelLikelihood`] computes the
/// same quantity in closed form for the codec.
pub fn level_channel_weights(
    obs: f64,
    residue: i64,
    level: usize,
    dg: &DiscreteGaussian,
    noise_var: f64,
) -> Result<(f64, f64)> {
    check_level(residue, level)?;
    if !(noise_var > 0.0) {
        return Err(invalid_param("noise variance must be positive"));
    }
    let modulus = 1i64 << level;
    let half = modulus >> 1;
    let (lo, hi) = dg.support();
    let s = dg.spec().lattice.scale;
    let mut w = [0.0f64; 2];
    let mut members = [0usize; 2];
    for m in lo..=hi {
        let r = m.rem_euclid(modulus);
        if r % half != residue {
            continue;
        }
        let b = (r >= half) as usize;
        members[b] += 1;
        w[b] += dg.pmf_index(m) * gauss_density(obs, m as f64 * s, noise_var);
    }
    if members[0] + members[1] == 0 {
        return Err(Error::DegenerateWeight {
            index: residue as usize,
            reason: format!("residue class {residue} at level {level} has no window points"),
        });
    }
    Ok((w[0], w[1]))
}

/// Coset prior `sum D(lambda)` over each half of a residue class.
pub fn level_prior_weights(residue: i64, level: usize, dg: &DiscreteGaussian) -> Result<(f64, f64)> {
    check_level(residue, level)?;
    let modulus = 1i64 << level;
    let half = modulus >> 1;
    let (lo, hi) = dg.support();
    let mut w = [0.0; 2];
    for m in lo..=hi {
        let r = m.rem_euclid(modulus);
        if r % half == residue {
            w[(r >= half) as usize] += dg.pmf_index(m);
        }
    }
    Ok((w[0], w[1]))
}

/// Fast per-level likelihoods for one discrete Gaussian prior and one noise
/// variance.
///
/// Uses `D(l) N(obs; l, v) ∝ exp(-(l - mu)^2 / 2 tau^2)` with
/// `tau^2 = sigma^2 v / (sigma^2 + v)` and sums each coset outward from the
/// point nearest `mu`, by a multiplicative recurrence, in the log domain.
#[derive(Debug, Clone)]
pub struct LevelLikelihood {
    lo: i64,
    hi: i64,
    scale: f64,
    sigma2: f64,
    center: f64,
    noise_var: f64,
    tau2: f64,
    log_norm: f64,
}

/// Relative size below which coset tail terms are dropped.
const TAIL_EPS: f64 = 1e-18;
const POISSON_RATIO: f64 = 1.6;
const EDGE_TAUS: f64 = 12.0;

impl LevelLikelihood {
    pub fn new(dg: &DiscreteGaussian, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return Err(invalid_param(format!("noise variance {noise_var} must be positive")));
        }
        let spec = dg.spec();
        let sigma2 = spec.sigma * spec.sigma;
        let (lo, hi) = dg.support();
        Ok(Self {
            lo,
            hi,
            scale: spec.lattice.scale,
            sigma2,
            center: spec.center,
            noise_var,
            tau2: sigma2 * noise_var / (sigma2 + noise_var),
            log_norm: dg.log_normalizer(),
        })
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Exact `log w_b` for both bits (up to floating point), `-inf` for an
    /// empty coset.
    pub fn log_weights(&self, obs: f64, residue: i64, level: usize) -> [f64; 2] {
        let total_var = self.sigma2 + self.noise_var;
        let d = obs - self.center;
        let common = -self.log_norm
            - 0.5 * (2.0 * std::f64::consts::PI * self.noise_var).ln()
            - d * d / (2.0 * total_var);
        let mu = (self.center * self.noise_var + obs * self.sigma2) / total_var;
        let half = 1i64 << (level - 1);
        let step = half << 1;
        let mut out = [f64::NEG_INFINITY; 2];
        for (b, o) in out.iter_mut().enumerate() {
            let class = residue + half * b as i64;
            if let Some(ls) = self.log_coset_sum(mu, class, step) {
                *o = common + ls;
            }
        }
        out
    }

    /// Normalized pair `(P(b=0 | obs, residue), P(b=1 | obs, residue))`.
    pub fn posterior(&self, obs: f64, residue: i64, level: usize) -> Result<[f64; 2]> {
        let total_var = self.sigma2 + self.noise_var;
        let mu = (self.center * self.noise_var + obs * self.sigma2) / total_var;
        let step = 1i64 << level;
        let spacing = step as f64 * self.scale;
        let tau = self.tau2.sqrt();
        // Poisson summation: the two coset sums differ by a relative
        // 2 exp(-2 pi^2 tau^2 / spacing^2) < 1e-21 once tau > 1.6 spacing,
        // provided the window does not cut the bump.
        if tau > POISSON_RATIO * spacing
            && mu - EDGE_TAUS * tau > self.lo as f64 * self.scale
            && mu + EDGE_TAUS * tau < self.hi as f64 * self.scale
        {
            return Ok([0.5, 0.5]);
        }
        let half = step >> 1;
        let l0 = self.log_coset_sum(mu, residue, step);
        let l1 = self.log_coset_sum(mu, residue + half, step);
        normalize_log_pair(
            l0.unwrap_or(f64::NEG_INFINITY),
            l1.unwrap_or(f64::NEG_INFINITY),
        )
        .ok_or_else(|| Error::DegenerateWeight {
            index: residue as usize,
            reason: format!("no window point in residue class {residue} at level {level}"),
        })
    }

    /// `log sum_{m = class mod step, m in window} exp(-(m s - mu)^2 / 2 tau^2)`.
    fn log_coset_sum(&self, mu: f64, class: i64, step: i64) -> Option<f64> {
        let first = self.lo + (class - self.lo).rem_euclid(step);
        if first > self.hi {
            return None;
        }
        let last = first + (self.hi - first) / step * step;
        let target = mu / self.scale;
        let k = ((target - class as f64) / step as f64).round();
        let nearest = (class as f64 + k * step as f64).clamp(first as f64, last as f64) as i64;
        let s = self.scale;
        let delta = step as f64 * s;
        let d0 = nearest as f64 * s - mu;
        let inv = 1.0 / (2.0 * self.tau2);
        let rho = (-delta * delta * 2.0 * inv).exp();
        let mut acc = 1.0;
        // upward
        let mut term = 1.0;
        let mut q = (-(2.0 * d0 * delta + delta * delta) * inv).exp();
        let mut m = nearest + step;
        while m <= last {
            term *= q;
            acc += term;
            if term < TAIL_EPS * acc {
                break;
            }
            q *= rho;
            m += step;
        }
        // downward
        let mut term = 1.0;
        let mut q = (-(-2.0 * d0 * delta + delta * delta) * inv).exp();
        let mut m = nearest - step;
        while m >= first {
            term *= q;
            acc += term;
            if term < TAIL_EPS * acc {
                break;
            }
            q *= rho;
            m -= step;
        }
        Some(-d0 * d0 * inv + acc.ln())
    }
}

/// `[p0, p1]` from log weights, `None` if both are `-inf` or non-finite.
pub fn normalize_log_pair(l0: f64, l1: f64) -> Option<[f64; 2]> {
    if l0.is_nan() || l1.is_nan() {
        return None;
    }
    if l0 == f64::NEG_INFINITY && l1 == f64::NEG_INFINITY {
        return None;
    }
    let p1 = 1.0 / (1.0 + (l0 - l1).exp());
    let p0 = 1.0 / (1.0 + (l1 - l0).exp());
    Some([p0, p1])
}

/// Coset priors for every level and residue class, tabulated once per part.
#[derive(Debug, Clone)]
pub struct LevelPrior {
    tables: Vec<Vec<[f64; 2]>>,
}

impl LevelPrior {
    pub fn new(dg: &DiscreteGaussian, ell: usize) -> Result<Self> {
        if ell == 0 || ell > 24 {
            return Err(invalid_arg(format!("unsupported level count {ell}")));
        }
        let (lo, hi) = dg.support();
        let mut tables: Vec<Vec<[f64; 2]>> =
            (1..=ell).map(|i| vec![[0.0; 2]; 1usize << (i - 1)]).collect();
        for m in lo..=hi {
            let p = dg.pmf_index(m);
            for (i, table) in tables.iter_mut().enumerate() {
                let level = i + 1;
                let r = m.rem_euclid(1i64 << level);
                let half = 1i64 << (level - 1);
                table[(r % half) as usize][(r >= half) as usize] += p;
            }
        }
        Ok(Self { tables })
    }

    pub fn ell(&self) -> usize {
        self.tables.len()
    }

    /// Unnormalized coset masses for `(residue, level)`.
    pub fn weights(&self, residue: i64, level: usize) -> [f64; 2] {
        self.tables[level - 1][residue as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_spec(sigma: f64) -> DiscreteGaussianSpec {
        DiscreteGaussianSpec::new(Lattice1D::integers(), sigma, 0.0).unwrap()
    }

    #[test]
    fn lattice_scale() {
        let l = Lattice1D::new(12).unwrap();
        assert_eq!(l.scale, 0.125);
        assert!(Lattice1D::new(0).is_err());
        assert_eq!(l.index_of(0.375).unwrap(), 3);
        assert!(l.index_of(0.3).is_err());
    }

    #[test]
    fn pmf_is_symmetric_and_normalized() {
        let spec = DiscreteGaussianSpec::new(Lattice1D::new(8).unwrap(), 1.3, 0.0).unwrap();
        let dg = DiscreteGaussian::new(spec);
        let (lo, hi) = dg.support();
        let total: f64 = (lo..=hi).map(|m| dg.pmf_index(m)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for m in 0..=hi {
            assert!((dg.pmf_index(m) - dg.pmf_index(-m)).abs() < 1e-15);
        }
        for m in 0..hi {
            assert!(dg.pmf_index(m) >= dg.pmf_index(m + 1));
        }
        assert!(dg_pmf(&spec, 0.3).is_err());
        assert!(spec.window as f64 * spec.lattice.scale >= WINDOW_SIGMAS * spec.sigma);
    }

    #[test]
    fn pmf_at_zero_matches_truncated_sum() {
        // oracle: 1 / sum_{|l| <= 40} exp(-l^2 / 2)
        let oracle = 1.0 / (-40i64..=40).map(|l| (-(l * l) as f64 / 2.0).exp()).sum::<f64>();
        let spec = unit_spec(1.0).with_window(40);
        assert!((dg_pmf(&spec, 0.0).unwrap() - oracle).abs() < 1e-15);
    }

    #[test]
    fn collapsed_window_is_a_point_mass() {
        let spec = DiscreteGaussianSpec::new(Lattice1D::new(4).unwrap(), 1.0, 1.0)
            .unwrap()
            .with_window(0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(dg_sample(&spec, 50, &mut rng).iter().all(|v| *v == 1.0));
    }

    #[test]
    fn sampler_is_deterministic() {
        let spec = unit_spec(2.0);
        let a = dg_sample(&spec, 64, &mut ChaCha8Rng::seed_from_u64(9));
        let b = dg_sample(&spec, 64, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn plane_examples() {
        let l = Lattice1D::integers();
        let p = point_to_planes(&[5.0, -3.0], &l, 3).unwrap();
        assert_eq!(p.planes, vec![vec![1, 1], vec![0, 0], vec![1, 1]]);
        assert_eq!(planes_to_point(&p, &l), vec![-3.0, -3.0]);
        assert_eq!(planes_to_point(&BitPlanes::zeros(4, 3), &l), vec![0.0; 3]);
        assert!(point_to_planes(&[0.5], &l, 3).is_err());
    }

    #[test]
    fn planes_round_trip_on_centered_range() {
        let l = Lattice1D::new(4).unwrap();
        for ell in 1..=6 {
            let half = 1i64 << (ell - 1);
            let pts: Vec<f64> = (-half..half).map(|m| l.point(m)).collect();
            let p = point_to_planes(&pts, &l, ell).unwrap();
            assert_eq!(planes_to_point(&p, &l), pts);
        }
    }

    #[test]
    fn level_weights_marginalize_to_density() {
        let spec = DiscreteGaussianSpec::new(Lattice1D::new(6).unwrap(), 1.1, 0.0).unwrap();
        let dg = DiscreteGaussian::new(spec);
        let (lo, hi) = dg.support();
        let v = 0.4;
        for &obs in &[-1.3, 0.0, 0.77, 3.1] {
            let total: f64 = (lo..=hi)
                .map(|m| dg.pmf_index(m) * gauss_density(obs, m as f64 * spec.lattice.scale, v))
                .sum();
            for level in 1..=5usize {
                let mut acc = 0.0;
                for r in 0..(1i64 << (level - 1)) {
                    let (w0, w1) = level_channel_weights(obs, r, level, &dg, v).unwrap();
                    acc += w0 + w1;
                }
                assert!((acc - total).abs() <= 1e-12 * total.max(1e-300), "level {level}");
            }
        }
    }

    #[test]
    fn symmetric_level_one_odds() {
        // obs = 0, center 0: w0 / w1 = even/odd prior mass weighted by N(0; l, v)
        let spec = unit_spec(1.5).with_window(30);
        let dg = DiscreteGaussian::new(spec);
        let v = 0.8;
        let even: f64 = (-30i64..=30)
            .filter(|m| m % 2 == 0)
            .map(|m| dg.pmf_index(m) * gauss_density(0.0, m as f64, v))
            .sum();
        let odd: f64 = (-30i64..=30)
            .filter(|m| m % 2 != 0)
            .map(|m| dg.pmf_index(m) * gauss_density(0.0, m as f64, v))
            .sum();
        let (w0, w1) = level_channel_weights(0.0, 0, 1, &dg, v).unwrap();
        assert!(((w0 / w1) - even / odd).abs() < 1e-12);
    }

    #[test]
    fn vanishing_noise_concentrates_on_true_bit() {
        let spec = DiscreteGaussianSpec::new(Lattice1D::new(8).unwrap(), 2.0, 0.0).unwrap();
        let dg = DiscreteGaussian::new(spec);
        let lik = LevelLikelihood::new(&dg, 1e-8).unwrap();
        let m = 13i64; // binary 1101
        let obs = spec.lattice.point(m);
        for level in 1..=4usize {
            let residue = m & ((1 << (level - 1)) - 1);
            let bit = ((m >> (level - 1)) & 1) as usize;
            let p = lik.posterior(obs, residue, level).unwrap();
            assert!(p[bit] > 1.0 - 1e-12);
        }
    }

    #[test]
    fn fast_likelihood_matches_direct_sum() {
        let spec = DiscreteGaussianSpec::new(Lattice1D::new(12).unwrap(), 1.7, 0.0).unwrap();
        let dg = DiscreteGaussian::new(spec);
        for &v in &[0.05, 1.2, 17.0] {
            let lik = LevelLikelihood::new(&dg, v).unwrap();
            for &obs in &[-20.0, -3.3, 0.01, 2.5, 14.2] {
                for level in 1..=9usize {
                    for r in [0i64, 1, 5, 77] {
                        if r >= 1 << (level - 1) {
                            continue;
                        }
                        let (w0, w1) = level_channel_weights(obs, r, level, &dg, v).unwrap();
                        let [l0, l1] = lik.log_weights(obs, r, level);
                        for (w, l) in [(w0, l0), (w1, l1)] {
                            if w > 1e-250 {
                                assert!((l.exp() - w).abs() <= 1e-11 * w, "{obs} {level} {r}");
                            }
                        }
                        if w0 + w1 > 1e-250 {
                            let p = lik.posterior(obs, r, level).unwrap();
                            assert!((p[1] - w1 / (w0 + w1)).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn prior_table_matches_direct_sum() {
        let spec = DiscreteGaussianSpec::new(Lattice1D::new(8).unwrap(), 1.4, 0.0).unwrap();
        let dg = DiscreteGaussian::new(spec);
        let prior = LevelPrior::new(&dg, 6).unwrap();
        for level in 1..=6usize {
            for r in 0..(1i64 << (level - 1)) {
                let (a, b) = level_prior_weights(r, level, &dg).unwrap();
                let w = prior.weights(r, level);
                assert!((w[0] - a).abs() < 1e-14 && (w[1] - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn bad_level_arguments() {
        let dg = DiscreteGaussian::new(unit_spec(1.0));
        assert!(level_channel_weights(0.0, 2, 2, &dg, 1.0).is_err());
        assert!(level_channel_weights(0.0, 0, 1, &dg, 0.0).is_err());
        // support {-1, 0, 1} has nothing congruent to 2 or 6 mod 8
        let dg = DiscreteGaussian::new(unit_spec(1.0).with_window(1));
        assert!(matches!(
            level_channel_weights(0.0, 2, 3, &dg, 1.0),
            Err(Error::DegenerateWeight { .. })
        ));
    }
}
