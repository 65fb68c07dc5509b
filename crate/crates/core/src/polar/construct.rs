//! Monte-Carlo Bhattacharyya construction of the per-level index sets.
//!
//! A [`GenieSource`] draws a realization, exposes per-level bit channels for
//! several observations at once and reveals the true bits. Running SC with
//! the true bits fixed and averaging `2 sqrt(p0 p1)` per index and channel
//! gives the Bhattacharyya parameters under every conditioning in one sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::codec::PartModel;
use super::sc::ScEngine;
use crate::derive_seed;
use crate::error::{invalid_arg, invalid_param, Result};
use crate::lattice::{Lattice1D, LevelLikelihood};
use crate::model::{round_params, zprime_var_at, GuessSchedule, SourceParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstructionConfig {
    pub mc_samples: usize,
    pub z_low: f64,
    pub z_high: f64,
}

impl Default for ConstructionConfig {
    fn default() -> Self {
        Self {
            mc_samples: 2000,
            z_low: 0.05,
            z_high: 0.95,
        }
    }
}

impl ConstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_samples == 0 {
            return Err(invalid_param("mc_samples must be positive"));
        }
        if !(0.0 < self.z_low && self.z_low < self.z_high && self.z_high < 1.0) {
            return Err(invalid_param(format!(
                "need 0 < z_low < z_high < 1, got {} and {}",
                self.z_low, self.z_high
            )));
        }
        Ok(())
    }
}

/// Role of one `u`-domain index at one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IndexClass {
    /// `F1`: realized from shared randomness at both ends.
    Frozen,
    /// `dF = F2 \ F1`: sampled by the encoder and sent.
    Sent,
    /// `I2`: MAP-decoded from side information.
    Decoded,
}

/// Per-level index sets. `I2`, `dF` and `F1` partition `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSets {
    pub n: usize,
    pub levels: Vec<Vec<IndexClass>>,
}

impl CodeSets {
    pub fn uniform(n: usize, ell: usize, class: IndexClass) -> Self {
        Self {
            n,
            levels: vec![vec![class; n]; ell],
        }
    }

    pub fn ell(&self) -> usize {
        self.levels.len()
    }

    fn select(&self, level: usize, keep: impl Fn(IndexClass) -> bool) -> Vec<usize> {
        self.levels[level]
            .iter()
            .enumerate()
            .filter(|(_, c)| keep(**c))
            .map(|(j, _)| j)
            .collect()
    }

    /// Levels are 0-based here.
    pub fn f1(&self, level: usize) -> Vec<usize> {
        self.select(level, |c| c == IndexClass::Frozen)
    }

    pub fn i1(&self, level: usize) -> Vec<usize> {
        self.select(level, |c| c != IndexClass::Frozen)
    }

    pub fn f2(&self, level: usize) -> Vec<usize> {
        self.select(level, |c| c != IndexClass::Decoded)
    }

    pub fn i2(&self, level: usize) -> Vec<usize> {
        self.select(level, |c| c == IndexClass::Decoded)
    }

    pub fn df(&self, level: usize) -> Vec<usize> {
        self.select(level, |c| c == IndexClass::Sent)
    }

    /// `sum_i |dF_i| / n`.
    pub fn rate(&self) -> f64 {
        let sent: usize = (0..self.ell()).map(|i| self.df(i).len()).sum();
        sent as f64 / self.n as f64
    }

    pub fn check(&self) -> Result<()> {
        if self.levels.iter().any(|c| c.len() != self.n) {
            return Err(invalid_arg("every level must classify all n indices"));
        }
        Ok(())
    }
}

/// Bhattacharyya estimates, indexed `[level][channel][index]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZEstimates {
    pub samples: usize,
    pub z: Vec<Vec<Vec<f64>>>,
}

impl ZEstimates {
    fn zeros(levels: usize, channels: usize, n: usize) -> Self {
        Self {
            samples: 0,
            z: vec![vec![vec![0.0; n]; channels]; levels],
        }
    }

    fn add(&mut self, other: &Self) {
        self.samples += other.samples;
        for (a, b) in self.z.iter_mut().zip(&other.z) {
            for (a, b) in a.iter_mut().zip(b) {
                for (a, b) in a.iter_mut().zip(b) {
                    *a += b;
                }
            }
        }
    }

    pub fn channel(&self, level: usize, channel: usize) -> &[f64] {
        &self.z[level][channel]
    }
}

/// A random model whose bit channels can be enumerated level by level.
pub trait GenieSource: Sync {
    type Draw: Send;

    fn block_len(&self) -> usize;
    fn levels(&self) -> usize;
    fn channels(&self) -> usize;
    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Self::Draw>;

    /// Fills channel-major weights for `level` (1-based, `channels * n`
    /// pairs) and the true `x`-domain bits.
    fn level(&self, draw: &Self::Draw, level: usize, weights: &mut [[f64; 2]], bits: &mut [u8]) -> Result<()>;
}

const MAX_CHUNKS: usize = 32;

/// Genie-aided Monte-Carlo estimates of every channel's Bhattacharyya
/// parameter. Deterministic in `seed` regardless of thread count.
pub fn estimate_all<G: GenieSource>(source: &G, mc_samples: usize, seed: u64) -> Result<ZEstimates> {
    if mc_samples == 0 {
        return Err(invalid_param("mc_samples must be positive"));
    }
    let n = source.block_len();
    let (levels, channels) = (source.levels(), source.channels());
    let chunk = mc_samples.div_ceil(MAX_CHUNKS).max(1);
    let bounds: Vec<(usize, usize)> = (0..mc_samples)
        .step_by(chunk)
        .map(|s| (s, (s + chunk).min(mc_samples)))
        .collect();
    let partial: Vec<Result<ZEstimates>> = bounds
        .par_iter()
        .enumerate()
        .map(|(c, &(lo, hi))| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, c as u64));
            let mut acc = ZEstimates::zeros(levels, channels, n);
            let mut engine = ScEngine::new(n, channels)?;
            let mut bits = vec![0u8; n];
            let transform = super::PolarTransform::new(n)?;
            for _ in lo..hi {
                let draw = source.draw(&mut rng)?;
                for level in 1..=levels {
                    source.level(&draw, level, engine.input_mut(), &mut bits)?;
                    transform.apply_in_place(&mut bits);
                    let z = &mut acc.z[level - 1];
                    engine.run(|j, posts| {
                        for (zc, p) in z.iter_mut().zip(posts) {
                            zc[j] += 2.0 * (p[0] * p[1]).sqrt();
                        }
                        Ok(bits[j])
                    })?;
                }
                acc.samples += 1;
            }
            Ok(acc)
        })
        .collect();
    let mut total = ZEstimates::zeros(levels, channels, n);
    for p in partial {
        total.add(&p?);
    }
    let m = total.samples as f64;
    for v in total.z.iter_mut().flatten().flatten() {
        *v = (*v / m).clamp(0.0, 1.0);
    }
    Ok(total)
}

/// Binary symmetric surrogate: uniform `x` bits, one observation per
/// channel through its own crossover probability. A crossover of 0.5 is
/// uninformative; 0 is a perfect channel.
#[derive(Debug, Clone)]
pub struct BscGenie {
    pub n: usize,
    pub crossover: Vec<f64>,
}

impl GenieSource for BscGenie {
    type Draw = (Vec<u8>, Vec<Vec<u8>>);

    fn block_len(&self) -> usize {
        self.n
    }

    fn levels(&self) -> usize {
        1
    }

    fn channels(&self) -> usize {
        self.crossover.len()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Self::Draw> {
        let x: Vec<u8> = (0..self.n).map(|_| rng.random::<bool>() as u8).collect();
        let obs = self
            .crossover
            .iter()
            .map(|&p| x.iter().map(|&b| b ^ (rng.random::<f64>() < p) as u8).collect())
            .collect();
        Ok((x, obs))
    }

    fn level(&self, draw: &Self::Draw, _level: usize, weights: &mut [[f64; 2]], bits: &mut [u8]) -> Result<()> {
        let (x, obs) = draw;
        bits.copy_from_slice(x);
        for (c, &p) in self.crossover.iter().enumerate() {
            for j in 0..self.n {
                let y = obs[c][j] as usize;
                let mut w = [p, p];
                w[y] = 1.0 - p;
                weights[c * self.n + j] = w;
            }
        }
        Ok(())
    }
}

/// Which observation a Bhattacharyya estimate conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    PriorOnly,
    WithX,
    /// Side information at the part's own guess.
    WithY,
}

impl Conditioning {
    fn channel(self) -> usize {
        match self {
            Conditioning::PriorOnly => 0,
            Conditioning::WithX => 1,
            Conditioning::WithY => 2,
        }
    }
}

/// Variances that define the channels of one part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartDesign {
    /// Part index `p`; the part is sent in round `p + 1`.
    pub part: usize,
    pub var_part: f64,
    /// Residual `T_{p+1}` added to the part in the source domain.
    pub var_t: f64,
    /// Side-information noise `var_t + var(Z')` at guesses `p + 1 ..= r`.
    pub side_vars: Vec<f64>,
}

impl PartDesign {
    pub fn round(&self) -> usize {
        self.part + 1
    }
}

/// Designs for parts `0..r` of a schedule.
pub fn part_designs(sched: &GuessSchedule, src: &SourceParams) -> Result<Vec<PartDesign>> {
    sched.validate_for(src)?;
    let r = sched.rounds();
    (1..=r)
        .map(|k| {
            let rp = round_params(k, sched, src)?;
            Ok(PartDesign {
                part: k - 1,
                var_part: rp.var_part,
                var_t: rp.var_t,
                side_vars: (k..=r)
                    .map(|g| rp.var_t + zprime_var_at(sched.guess(g), src.sigma_x2))
                    .collect(),
            })
        })
        .collect()
}

/// Lattice genie for one part: `lambda ~ D`, `x = lambda + T`,
/// `y_g = x + Z'_g`. Channels: prior, x, then each `y_g`.
pub struct LatticeGenie<'a> {
    model: &'a PartModel,
    var_t: f64,
    x_lik: LevelLikelihood,
    y_liks: Vec<LevelLikelihood>,
    side_vars: Vec<f64>,
}

impl<'a> LatticeGenie<'a> {
    pub fn new(model: &'a PartModel, design: &PartDesign) -> Result<Self> {
        Ok(Self {
            model,
            var_t: design.var_t,
            x_lik: model.likelihood(design.var_t)?,
            y_liks: design
                .side_vars
                .iter()
                .map(|v| model.likelihood(*v))
                .collect::<Result<_>>()?,
            side_vars: design.side_vars.clone(),
        })
    }
}

pub struct LatticeDraw {
    lambda: Vec<i64>,
    x: Vec<f64>,
    y: Vec<Vec<f64>>,
}

impl GenieSource for LatticeGenie<'_> {
    type Draw = LatticeDraw;

    fn block_len(&self) -> usize {
        self.model.n()
    }

    fn levels(&self) -> usize {
        self.model.ell
    }

    fn channels(&self) -> usize {
        2 + self.y_liks.len()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<LatticeDraw> {
        let n = self.model.n();
        let lambda = self.model.dg.sample_indices(n, rng);
        let st = self.var_t.sqrt();
        let s = self.model.lattice.scale;
        let x: Vec<f64> = lambda
            .iter()
            .map(|&m| {
                let e: f64 = StandardNormal.sample(rng);
                m as f64 * s + st * e
            })
            .collect();
        // side-information noise increments so that y_g is degraded from y_{g-1}
        let mut y = Vec::with_capacity(self.side_vars.len());
        let mut prev_var = self.var_t;
        let mut prev = x.clone();
        for &v in &self.side_vars {
            let sd = (v - prev_var).max(0.0).sqrt();
            let next: Vec<f64> = prev
                .iter()
                .map(|&o| {
                    let e: f64 = StandardNormal.sample(rng);
                    o + sd * e
                })
                .collect();
            prev_var = v;
            prev = next.clone();
            y.push(next);
        }
        Ok(LatticeDraw { lambda, x, y })
    }

    fn level(&self, d: &LatticeDraw, level: usize, w: &mut [[f64; 2]], bits: &mut [u8]) -> Result<()> {
        let n = self.model.n();
        let mask = (1i64 << (level - 1)) - 1;
        for j in 0..n {
            let m = d.lambda[j];
            let residue = m & mask;
            bits[j] = ((m >> (level - 1)) & 1) as u8;
            w[j] = self.model.prior.weights(residue, level);
            w[n + j] = self.x_lik.posterior(d.x[j], residue, level)?;
            for (g, lik) in self.y_liks.iter().enumerate() {
                w[(2 + g) * n + j] = lik.posterior(d.y[g][j], residue, level)?;
            }
        }
        Ok(())
    }
}

/// Bhattacharyya estimates of a part's bit channels under one conditioning,
/// as a vector per level.
pub fn estimate_bhattacharyya(
    model: &PartModel,
    design: &PartDesign,
    conditioning: Conditioning,
    cfg: &ConstructionConfig,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let genie = LatticeGenie::new(model, design)?;
    let z = estimate_all(&genie, cfg.mc_samples, seed)?;
    Ok(z.z.into_iter().map(|mut lv| lv.swap_remove(conditioning.channel())).collect())
}

/// Index classes from Bhattacharyya estimates.
///
/// `F1 = {Z_x >= z_high} u {Z_prior <= z_low}`;
/// `I2_g = {Z_y_g <= z_low and Z_prior >= z_high} \ F1`, intersected with
/// `I2_{g-1}` so that later guesses only shrink the decoded set. Returns the
/// classes at the first guess and the decoded masks at every guess.
pub fn classify(
    z_prior: &[f64],
    z_x: &[f64],
    z_ys: &[&[f64]],
    z_low: f64,
    z_high: f64,
) -> (Vec<IndexClass>, Vec<Vec<bool>>) {
    let n = z_prior.len();
    let f1: Vec<bool> = (0..n).map(|j| z_x[j] >= z_high || z_prior[j] <= z_low).collect();
    let mut masks: Vec<Vec<bool>> = Vec::with_capacity(z_ys.len());
    for zy in z_ys {
        let mask: Vec<bool> = (0..n)
            .map(|j| {
                let ok = zy[j] <= z_low && z_prior[j] >= z_high && !f1[j];
                ok && masks.last().is_none_or(|prev| prev[j])
            })
            .collect();
        masks.push(mask);
    }
    let classes = (0..n)
        .map(|j| {
            if f1[j] {
                IndexClass::Frozen
            } else if masks.first().is_some_and(|m| m[j]) {
                IndexClass::Decoded
            } else {
                IndexClass::Sent
            }
        })
        .collect();
    (classes, masks)
}

/// The code for one part: sets at its own round, decoded masks at every
/// guess from its own round to the last, and the raw estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartCode {
    pub design: PartDesign,
    pub sets: CodeSets,
    /// `[g][level][j]`, `g = 0` being the part's own round.
    pub decoded_at: Vec<Vec<Vec<bool>>>,
    pub z: ZEstimates,
}

impl PartCode {
    /// Decoded mask at round `k` (`k >= part + 1`), per level.
    pub fn decoded_in_round(&self, k: usize) -> Result<&[Vec<bool>]> {
        let g = k
            .checked_sub(self.design.round())
            .filter(|g| *g < self.decoded_at.len())
            .ok_or_else(|| invalid_arg(format!("part {} has no sets for round {k}", self.design.part)))?;
        Ok(&self.decoded_at[g])
    }

    /// Indices that are MAP-decoded at round `k - 1` but not at round `k`,
    /// levels then indices ascending.
    pub fn top_up(&self, k: usize) -> Result<Vec<(usize, usize)>> {
        let before = self.decoded_in_round(k - 1)?;
        let now = self.decoded_in_round(k)?;
        let mut out = Vec::new();
        for (level, (b, a)) in before.iter().zip(now).enumerate() {
            for j in 0..b.len() {
                if b[j] && !a[j] {
                    out.push((level, j));
                }
            }
        }
        Ok(out)
    }
}

/// Builds one part's code from a fresh Monte-Carlo estimate.
pub fn construct_part(
    model: &PartModel,
    design: &PartDesign,
    cfg: &ConstructionConfig,
    seed: u64,
) -> Result<PartCode> {
    cfg.validate()?;
    let genie = LatticeGenie::new(model, design)?;
    let z = estimate_all(&genie, cfg.mc_samples, seed)?;
    let n = model.n();
    let mut sets = CodeSets::uniform(n, model.ell, IndexClass::Sent);
    let guesses = design.side_vars.len();
    let mut decoded_at = vec![Vec::with_capacity(model.ell); guesses];
    for level in 0..model.ell {
        let zl = &z.z[level];
        let ys: Vec<&[f64]> = zl[2..].iter().map(|v| v.as_slice()).collect();
        let (classes, masks) = classify(&zl[0], &zl[1], &ys, cfg.z_low, cfg.z_high);
        sets.levels[level] = classes;
        for (g, m) in masks.into_iter().enumerate() {
            decoded_at[g].push(m);
        }
    }
    Ok(PartCode {
        design: design.clone(),
        sets,
        decoded_at,
        z,
    })
}

/// Code sets of round `k` for a schedule.
pub fn construct_sets(
    k: usize,
    ell: usize,
    lattice: Lattice1D,
    sched: &GuessSchedule,
    src: &SourceParams,
    cfg: &ConstructionConfig,
    seed: u64,
) -> Result<CodeSets> {
    let designs = part_designs(sched, src)?;
    let design = designs
        .get(k.wrapping_sub(1))
        .ok_or_else(|| invalid_param(format!("round {k} outside 1..={}", designs.len())))?;
    let model = PartModel::new(lattice, ell, design.var_part)?;
    Ok(construct_part(&model, design, cfg, seed)?.sets)
}
