//! Independent reference computations used by tests and `polarwz verify`.
//!
//! Everything here is brute force or dense linear algebra; none of it shares
//! code paths with the fast implementations it checks.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::derive_seed;
use crate::error::{invalid_arg, Result};
use crate::hashtest::{decide, level_value, quantize, Feedback, HashParams, Projector, ACK_THRESHOLD};
use crate::lattice::{BitPlanes, DiscreteGaussian};
use crate::model::{round_params, zprime_var_at, GuessSchedule, RoundParams, SourceParams};

fn gf2_transform(u: &[u8]) -> Vec<u8> {
    // x_c = xor of u_i over rows i whose support contains c (c submask of i)
    let n = u.len();
    (0..n)
        .map(|c| (0..n).filter(|&i| i & c == c).fold(0, |acc, i| acc ^ u[i]))
        .collect()
}

/// `P(u_j | u_0..u_{j-1})` for every `j` by enumerating all `2^n` inputs,
/// with `weights[k]` the channel pair of coordinate `x_k`.
pub fn exhaustive_conditionals(weights: &[[f64; 2]], u: &[u8]) -> Vec<[f64; 2]> {
    let n = weights.len();
    let joint: Vec<f64> = (0..1usize << n)
        .map(|bits| {
            let uu: Vec<u8> = (0..n).map(|k| ((bits >> k) & 1) as u8).collect();
            gf2_transform(&uu)
                .iter()
                .zip(weights)
                .map(|(&b, w)| w[b as usize])
                .product()
        })
        .collect();
    (0..n)
        .map(|j| {
            let mask = (1usize << j) - 1;
            let prefix = (0..j).fold(0usize, |acc, k| acc | ((u[k] as usize) << k));
            let mut acc = [0.0; 2];
            for (bits, p) in joint.iter().enumerate() {
                if bits & mask == prefix {
                    acc[(bits >> j) & 1] += p;
                }
            }
            let s = acc[0] + acc[1];
            [acc[0] / s, acc[1] / s]
        })
        .collect()
}

/// Multilevel conditionals `P(u_i(j) | u_i(<j), u_{<i})` by enumerating all
/// `2^(n ell)` plane configurations. `coord_weight(j, m)` is the joint weight
/// of coordinate `j` taking residue `m` mod `2^ell`. Indexed `[level][j]`.
pub fn exhaustive_multilevel(
    n: usize,
    ell: usize,
    coord_weight: impl Fn(usize, i64) -> f64,
    u: &BitPlanes,
) -> Result<Vec<Vec<[f64; 2]>>> {
    let total = n * ell;
    if total > 20 {
        return Err(invalid_arg(format!("{total} bits are too many to enumerate")));
    }
    let table: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..1i64 << ell).map(|m| coord_weight(j, m)).collect())
        .collect();
    let joint: Vec<f64> = (0..1usize << total)
        .map(|cfg| {
            let mut m = vec![0i64; n];
            for i in 0..ell {
                let plane: Vec<u8> = (0..n).map(|j| ((cfg >> (i * n + j)) & 1) as u8).collect();
                for (mj, b) in m.iter_mut().zip(gf2_transform(&plane)) {
                    *mj |= (b as i64) << i;
                }
            }
            m.iter().enumerate().map(|(j, &r)| table[j][r as usize]).product()
        })
        .collect();
    let target: Vec<u8> = (0..ell).flat_map(|i| u.planes[i].iter().copied()).collect();
    let mut out = vec![vec![[0.0; 2]; n]; ell];
    for (i, level) in out.iter_mut().enumerate() {
        for (j, slot) in level.iter_mut().enumerate() {
            let pos = i * n + j;
            let mask = (1usize << pos) - 1;
            let prefix = (0..pos).fold(0usize, |acc, k| acc | ((target[k] as usize) << k));
            let mut acc = [0.0; 2];
            for (cfg, p) in joint.iter().enumerate() {
                if cfg & mask == prefix {
                    acc[(cfg >> pos) & 1] += p;
                }
            }
            let s = acc[0] + acc[1];
            *slot = [acc[0] / s, acc[1] / s];
        }
    }
    Ok(out)
}

/// Joint weight of residue `m` mod `2^ell` for one coordinate observed as
/// `obs` through Gaussian noise: the discrete Gaussian mass times the noise
/// density, summed directly over the support.
pub fn coset_weight(dg: &DiscreteGaussian, obs: f64, noise_var: f64, ell: usize, m: i64) -> f64 {
    let lattice = dg.spec().lattice;
    let (lo, hi) = dg.support();
    let modulus = 1i64 << ell;
    (lo..=hi)
        .filter(|idx| idx.rem_euclid(modulus) == m)
        .map(|idx| {
            let d = obs - lattice.point(idx);
            dg.pmf_index(idx) * (-d * d / (2.0 * noise_var)).exp()
        })
        .sum()
}

/// Jointly Gaussian vector given as `L b` with independent base variables
/// of variances `base_var`.
struct GaussianModel {
    base_var: Vec<f64>,
}

impl GaussianModel {
    fn cov(&self, rows: &[Vec<f64>]) -> DMatrix<f64> {
        let d = rows.len();
        DMatrix::from_fn(d, d, |a, b| {
            rows[a]
                .iter()
                .zip(&rows[b])
                .zip(&self.base_var)
                .map(|((x, y), v)| x * y * v)
                .sum()
        })
    }

    fn log2_det(&self, rows: &[Vec<f64>]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        self.cov(rows).determinant().log2()
    }

    /// `I(U ; V | W)` in bits.
    fn cmi(&self, u: &[f64], v: &[f64], w: &[f64]) -> f64 {
        let uw = [u.to_vec(), w.to_vec()];
        let vw = [v.to_vec(), w.to_vec()];
        let uvw = [u.to_vec(), v.to_vec(), w.to_vec()];
        0.5 * (self.log2_det(&uw) + self.log2_det(&vw)
            - self.log2_det(&[w.to_vec()])
            - self.log2_det(&uvw))
    }
}

/// Both sides of the round-`k` decomposition from dense covariance algebra.
///
/// Base variables: parts `X'_0 .. X'_{k-1}`, residual `T_k`, noise `Z'` at
/// guess `k`.
pub fn mi_oracle(k: usize, sched: &GuessSchedule, src: &SourceParams) -> Result<(f64, f64)> {
    let rps: Vec<RoundParams> = (1..=k).map(|j| round_params(j, sched, src)).collect::<Result<_>>()?;
    let mut base_var: Vec<f64> = rps.iter().map(|r| r.var_part).collect();
    base_var.push(rps[k - 1].var_t);
    base_var.push(zprime_var_at(sched.guess(k), src.sigma_x2));
    let dim = k + 2;
    let g = GaussianModel { base_var };
    let comb = |coef: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..dim).map(coef).collect() };
    let x = comb(&|i| if i < dim - 1 { 1.0 } else { 0.0 });
    let ybar = comb(&|_| 1.0);
    let a_k = comb(&|i| if i < k { 1.0 } else { 0.0 });
    let lhs = g.cmi(&a_k, &x, &ybar);
    let mut rhs = 0.0;
    for j in 0..k {
        // X_{j+1} = X - A_j, Y_{j+1} = Ybar - A_j
        let part = comb(&|i| (i == j) as u8 as f64);
        let xj = comb(&|i| if i >= j && i < dim - 1 { 1.0 } else { 0.0 });
        let yj = comb(&|i| if i >= j { 1.0 } else { 0.0 });
        rhs += g.cmi(&part, &xj, &yj);
    }
    Ok((lhs, rhs))
}

/// Weights `(c_a, c_y)` of the linear MMSE estimate of `X` from
/// `(A_k, Ybar)` at the round's guess, solved from the joint covariance.
pub fn mmse_oracle(src: &SourceParams, rp: &RoundParams) -> (f64, f64) {
    let var_a = src.sigma_x2 - rp.var_t;
    let var_y = src.sigma_x2 + rp.var_zprime;
    let cov = DMatrix::from_row_slice(2, 2, &[var_a, var_a, var_a, var_y]);
    let cross = DVector::from_vec(vec![var_a, src.sigma_x2]);
    let w = cov.lu().solve(&cross).expect("covariance of (A, Ybar) is non-singular");
    (w[0], w[1])
}

/// Total-variation distance between empirical counts and a pmf on the same
/// support.
pub fn tv_distance(counts: &[u64], pmf: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    0.5 * counts
        .iter()
        .zip(pmf)
        .map(|(&c, &p)| (c as f64 / total as f64 - p).abs())
        .sum::<f64>()
}

/// The closeness test on `|x|^2 = N sigma_x2` and an error `e` orthogonal to
/// `x` with `|e|^2 = ratio N delta`, where `expected` is the correct answer.
///
/// For Gaussian `R` the projections of `x` and `e` are independent normals
/// with variances `|x|^2` and `|e|^2`, so a trial needs `2m` draws rather
/// than an `N x m` matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosenessScenario {
    pub params: HashParams,
    pub sigma_x2: f64,
    pub delta: f64,
    pub ratio: f64,
    pub expected: Feedback,
}

/// Importance-sampling estimate of a small probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedEstimate {
    pub log10_p: f64,
    /// Relative standard error of `p`.
    pub rel_se: f64,
    pub hits: usize,
}

impl ClosenessScenario {
    fn var_s(&self) -> f64 {
        self.params.n as f64 * self.sigma_x2
    }

    fn var_d(&self) -> f64 {
        self.ratio * self.params.n as f64 * self.delta
    }

    /// `gamma` from projections `s = R^T x` and `d = R^T e`; `None` if every
    /// entry overflowed.
    fn gamma(&self, s: &[f64], d: &[f64]) -> Option<f64> {
        let mut sum = 0.0;
        let mut used = 0usize;
        for (&si, &di) in s.iter().zip(d) {
            if let Some(i) = quantize(si, &self.params) {
                let g = level_value(i, &self.params) - (si - di);
                sum += g * g;
                used += 1;
            }
        }
        (used > 0).then(|| sum / used as f64)
    }

    fn is_wrong(&self, gamma: Option<f64>) -> bool {
        let fb = gamma.map_or(Feedback::Nack, |g| decide(g, self.params.n, self.delta));
        fb != self.expected
    }

    fn draw(&self, var_d: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ss, sd) = (self.var_s().sqrt(), var_d.sqrt());
        let m = self.params.m;
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let s = (0..m).map(|_| ss * normal()).collect();
        let d = (0..m).map(|_| sd * normal()).collect();
        (s, d)
    }

    /// Wrong decisions in `trials` independent trials.
    pub fn raw_errors(&self, trials: usize, seed: u64) -> usize {
        (0..trials)
            .into_par_iter()
            .filter(|&t| {
                let (s, d) = self.draw(self.var_d(), derive_seed(seed, t as u64));
                self.is_wrong(self.gamma(&s, &d))
            })
            .count()
    }

    /// Same experiment through the real hash and test with an explicit
    /// projection matrix; only practical for small `N`.
    pub fn pipeline_errors(&self, trials: usize, seed: u64) -> Result<usize> {
        let n = self.params.n;
        let mut errors = 0;
        for t in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let mut draw = |scale2: f64| -> Vec<f64> {
                let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                v.into_iter().map(|a| a * (scale2).sqrt() / norm).collect()
            };
            let x = draw(self.var_s());
            let mut e = draw(1.0);
            let dot: f64 = x.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / self.var_s();
            e.iter_mut().zip(&x).for_each(|(ei, xi)| *ei -= dot * xi);
            let norm2: f64 = e.iter().map(|a| a * a).sum();
            let scale = (self.var_d() / norm2).sqrt();
            let x_hat: Vec<f64> = x.iter().zip(&e).map(|(xi, ei)| xi - scale * ei).collect();
            let proj = Projector::new(&self.params.with_seed(derive_seed(seed ^ 0x5eed, t as u64)));
            let hash = proj.make_hash(&x)?;
            let gamma = match proj.gamma(&hash, &x_hat) {
                Ok(g) => Some(g),
                Err(crate::Error::TestDegenerate) => None,
                Err(e) => return Err(e),
            };
            errors += self.is_wrong(gamma) as usize;
        }
        Ok(errors)
    }

    /// Exponentially tilts each `d_i` towards the decision boundary and
    /// reweights by the likelihood ratio.
    ///
    /// With quantization error `u_i = s_i - Q(s_i)` the tilted law of `d_i`
    /// is `N(-(D'/D - 1) u_i, D')`; `D'` is chosen so that `E[gamma]` sits on
    /// the threshold.
    pub fn tilted(&self, samples: usize, seed: u64) -> TiltedEstimate {
        let tau = ACK_THRESHOLD * self.params.n as f64 * self.delta;
        let quant = self.params.cell().powi(2) / 3.0;
        let var_d = self.var_d();
        // D' + (D'/D)^2 E[u^2] = tau
        let a = quant / (var_d * var_d);
        let var_p = (-1.0 + (1.0 + 4.0 * a * tau).sqrt()) / (2.0 * a);
        let shift = var_p / var_d - 1.0;
        let sd_p = var_p.sqrt();
        let half_log = 0.5 * (var_p / var_d).ln();
        let logs: Vec<f64> = (0..samples)
            .into_par_iter()
            .filter_map(|t| {
                let (s, z) = self.draw(1.0, derive_seed(seed, t as u64));
                let mut log_w = 0.0;
                let d: Vec<f64> = s
                    .iter()
                    .zip(&z)
                    .map(|(&si, &zi)| {
                        let mu = quantize(si, &self.params)
                            .map_or(0.0, |i| -shift * (si - level_value(i, &self.params)));
                        let di = mu + sd_p * zi;
                        log_w += half_log - di * di / (2.0 * var_d) + zi * zi / 2.0;
                        di
                    })
                    .collect();
                self.is_wrong(self.gamma(&s, &d)).then_some(log_w)
            })
            .collect();
        if logs.is_empty() {
            return TiltedEstimate {
                log10_p: f64::NEG_INFINITY,
                rel_se: f64::INFINITY,
                hits: 0,
            };
        }
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = samples as f64;
        let s1: f64 = logs.iter().map(|l| (l - top).exp()).sum();
        let s2: f64 = logs.iter().map(|l| (2.0 * (l - top)).exp()).sum();
        let mean = s1 / n;
        let var = (s2 / n - mean * mean).max(0.0);
        TiltedEstimate {
            log10_p: (top + mean.ln()) / std::f64::consts::LN_10,
            rel_se: (var / n).sqrt() / mean,
            hits: logs.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_schedule;

    #[test]
    fn transform_reference_agrees() {
        let u = [1u8, 0, 1, 1, 0, 0, 1, 0];
        assert_eq!(gf2_transform(&u), crate::polar::transform(&u).unwrap());
    }

    #[test]
    fn oracles_agree_with_closed_forms() {
        let src = SourceParams::codec(16.0, 1.0).unwrap();
        let sched = make_schedule(1.5, 12.0, 0.5).unwrap();
        for k in 1..=sched.rounds() {
            let (lhs, rhs) = mi_oracle(k, &sched, &src).unwrap();
            let (l2, r2) = crate::model::mi_decomposition(k, &sched, &src).unwrap();
            assert!((lhs - l2).abs() < 1e-9 && (rhs - r2).abs() < 1e-9);
            let rp = round_params(k, &sched, &src).unwrap();
            let (ca, cy) = mmse_oracle(&src, &rp);
            assert!((cy - rp.mmse_gain(&src)).abs() < 1e-9);
            assert!((ca + cy - 1.0).abs() < 1e-9);
        }
    }
}
