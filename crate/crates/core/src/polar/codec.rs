//! Multilevel covering encoder and packing decoder.
//!
//! Levels are processed from the least significant bit up. At level `i` each
//! coordinate's bit channel is conditioned on the residue formed by the
//! lower levels already fixed, in the `x` domain, and the `u`-domain bits are
//! produced by one SC pass with two channels in lockstep: the data channel
//! (source or side information) and the prior alone, which feeds the shared
//! frozen-bit rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::construct::{CodeSets, IndexClass};
use super::sc::{apply_rule, BitRule, ScEngine};
use super::shared::SharedStream;
use crate::error::{invalid_arg, invalid_param, Error, Result};
use crate::lattice::{
    planes_to_point, BitPlanes, DiscreteGaussian, DiscreteGaussianSpec, Lattice1D,
    LevelLikelihood, LevelPrior,
};

/// The discrete Gaussian part conveyed in one round, with its level tables.
#[derive(Debug, Clone)]
pub struct PartModel {
    pub lattice: Lattice1D,
    pub ell: usize,
    pub var_part: f64,
    pub dg: DiscreteGaussian,
    pub prior: LevelPrior,
}

impl PartModel {
    pub fn new(lattice: Lattice1D, ell: usize, var_part: f64) -> Result<Self> {
        if !(var_part > 0.0) {
            return Err(invalid_param(format!("part variance {var_part} must be positive")));
        }
        let dg = DiscreteGaussian::new(DiscreteGaussianSpec::new(lattice, var_part.sqrt(), 0.0)?);
        let prior = LevelPrior::new(&dg, ell)?;
        Ok(Self {
            lattice,
            ell,
            var_part,
            dg,
            prior,
        })
    }

    pub fn n(&self) -> usize {
        1usize << self.lattice.t
    }

    pub fn likelihood(&self, noise_var: f64) -> Result<LevelLikelihood> {
        LevelLikelihood::new(&self.dg, noise_var)
    }
}

/// Smallest `ell` with `scale * 2^(ell-1) >= 6 sigma`.
pub fn choose_ell(lattice: &Lattice1D, max_var_part: f64) -> usize {
    let need = 6.0 * max_var_part.sqrt() / lattice.scale;
    let mut ell = 1;
    while ((1u64 << (ell - 1)) as f64) < need {
        ell += 1;
    }
    ell
}

/// One multilevel SC sweep. `rule(level, j)` picks the decision at each
/// index (levels are 1-based). Returns `u`-domain planes.
pub fn multilevel_pass<R, F>(
    model: &PartModel,
    obs: &[f64],
    noise_var: f64,
    shared_seed: u64,
    round: usize,
    rule: F,
    rng: &mut R,
) -> Result<BitPlanes>
where
    R: Rng + ?Sized,
    F: FnMut(usize, usize) -> BitRule,
{
    multilevel_sweep(model, obs, noise_var, shared_seed, round, rule, rng, |_, _, _| {})
}

/// Posteriors `P(u_i(j) | u_i(<j), u_(<i), obs)` along the path `target`,
/// indexed `[level][j]`.
pub fn multilevel_posteriors(
    model: &PartModel,
    obs: &[f64],
    noise_var: f64,
    target: &BitPlanes,
) -> Result<Vec<Vec<[f64; 2]>>> {
    if target.ell != model.ell || target.n != model.n() {
        return Err(invalid_arg("target planes do not match the model"));
    }
    let mut posts = vec![vec![[0.0; 2]; model.n()]; model.ell];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    multilevel_sweep(
        model,
        obs,
        noise_var,
        0,
        1,
        |level, j| BitRule::Fixed(target.planes[level - 1][j]),
        &mut rng,
        |level, j, p| posts[level - 1][j] = p,
    )?;
    Ok(posts)
}

#[allow(clippy::too_many_arguments)]
fn multilevel_sweep<R, F, O>(
    model: &PartModel,
    obs: &[f64],
    noise_var: f64,
    shared_seed: u64,
    round: usize,
    mut rule: F,
    rng: &mut R,
    mut observe: O,
) -> Result<BitPlanes>
where
    R: Rng + ?Sized,
    F: FnMut(usize, usize) -> BitRule,
    O: FnMut(usize, usize, [f64; 2]),
{
    let n = model.n();
    if obs.len() != n {
        return Err(invalid_arg(format!("expected {n} observations, got {}", obs.len())));
    }
    let lik = model.likelihood(noise_var)?;
    let mut engine = ScEngine::new(n, 2)?;
    let mut residues = vec![0i64; n];
    let mut u = BitPlanes::zeros(model.ell, n);
    for level in 1..=model.ell {
        {
            let input = engine.input_mut();
            let (main, prior) = input.split_at_mut(n);
            for j in 0..n {
                main[j] = lik.posterior(obs[j], residues[j], level).map_err(|e| match e {
                    Error::DegenerateWeight { reason, .. } => Error::DegenerateWeight { index: j, reason },
                    e => e,
                })?;
                prior[j] = model.prior.weights(residues[j], level);
            }
        }
        let mut stream = SharedStream::new(shared_seed, round, level);
        engine.run(|j, p| {
            observe(level, j, p[0]);
            let r = rule(level, j);
            Ok(apply_rule(r, p[0], p[1], || stream.uniform(j), rng))
        })?;
        u.planes[level - 1].copy_from_slice(engine.u());
        for (r, &b) in residues.iter_mut().zip(engine.x()) {
            *r |= (b as i64) << (level - 1);
        }
    }
    Ok(u)
}

/// Lattice point of `u`-domain planes: `G_N` on each plane, then the
/// centered scalar map.
pub fn lattice_point(u: &BitPlanes, lattice: &Lattice1D) -> Result<Vec<f64>> {
    let t = super::PolarTransform::new(u.n)?;
    let mut x = u.clone();
    for plane in x.planes.iter_mut() {
        t.apply_in_place(plane);
    }
    Ok(planes_to_point(&x, lattice))
}

/// Payload size `sum_i |dF_i|`.
pub fn payload_len(sets: &CodeSets) -> usize {
    sets.levels
        .iter()
        .map(|c| c.iter().filter(|k| **k == IndexClass::Sent).count())
        .sum()
}

/// Quantizes `x_k` with the randomized MAP rule on the information set and
/// the shared rule on the frozen set. Returns the `u`-domain planes and the
/// dF bits, levels ascending then indices ascending.
pub fn covering_encode<R: Rng + ?Sized>(
    x_k: &[f64],
    model: &PartModel,
    var_t: f64,
    sets: &CodeSets,
    shared_seed: u64,
    round: usize,
    rng: &mut R,
) -> Result<(BitPlanes, Vec<u8>)> {
    check_sets(model, sets)?;
    let u = multilevel_pass(
        model,
        x_k,
        var_t,
        shared_seed,
        round,
        |level, j| match sets.levels[level - 1][j] {
            IndexClass::Frozen => BitRule::Shared,
            _ => BitRule::Sample,
        },
        rng,
    )?;
    let sent = collect_bits(&u, sets, |c| c == IndexClass::Sent);
    Ok((u, sent))
}

/// MAP decoding on `I2`, received bits on `dF`, shared rule on `F1`.
pub fn packing_decode(
    y_k: &[f64],
    model: &PartModel,
    noise_var: f64,
    sets: &CodeSets,
    received: &[u8],
    shared_seed: u64,
    round: usize,
) -> Result<BitPlanes> {
    check_sets(model, sets)?;
    let expected = payload_len(sets);
    if received.len() != expected {
        return Err(Error::ProtocolViolation(format!(
            "payload carries {} bits, the code sends {expected}",
            received.len()
        )));
    }
    let mut known = vec![vec![None; model.n()]; model.ell];
    let mut it = received.iter();
    for (level, classes) in sets.levels.iter().enumerate() {
        for (j, c) in classes.iter().enumerate() {
            if *c == IndexClass::Sent {
                known[level][j] = it.next().copied();
            }
        }
    }
    let decoded: Vec<Vec<bool>> = sets
        .levels
        .iter()
        .map(|c| c.iter().map(|k| *k == IndexClass::Decoded).collect())
        .collect();
    decode_with_known(y_k, model, noise_var, &decoded, &known, shared_seed, round)
}

/// Decoder with an explicit split: bits in `known` are copied, indices in
/// `decoded` get MAP decisions and everything else follows the shared rule.
pub fn decode_with_known(
    y: &[f64],
    model: &PartModel,
    noise_var: f64,
    decoded: &[Vec<bool>],
    known: &[Vec<Option<u8>>],
    shared_seed: u64,
    round: usize,
) -> Result<BitPlanes> {
    if decoded.len() != model.ell || known.len() != model.ell {
        return Err(invalid_arg("decoder masks must cover every level"));
    }
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    multilevel_pass(
        model,
        y,
        noise_var,
        shared_seed,
        round,
        |level, j| match (known[level - 1][j], decoded[level - 1][j]) {
            (Some(b), _) => BitRule::Fixed(b),
            (None, true) => BitRule::Argmax,
            (None, false) => BitRule::Shared,
        },
        &mut unused,
    )
}

/// Bits of `u` at indices whose class passes `keep`, levels then indices
/// ascending.
pub fn collect_bits(u: &BitPlanes, sets: &CodeSets, keep: impl Fn(IndexClass) -> bool) -> Vec<u8> {
    let mut out = Vec::new();
    for (plane, classes) in u.planes.iter().zip(&sets.levels) {
        for (b, c) in plane.iter().zip(classes) {
            if keep(*c) {
                out.push(*b);
            }
        }
    }
    out
}

fn check_sets(model: &PartModel, sets: &CodeSets) -> Result<()> {
    if sets.levels.len() != model.ell || sets.n != model.n() {
        return Err(invalid_arg(format!(
            "code sets for ell={} n={} do not fit a part with ell={} n={}",
            sets.levels.len(),
            sets.n,
            model.ell,
            model.n()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polar::construct::CodeSets;

    fn model(t: u32, var: f64) -> PartModel {
        let lattice = Lattice1D::new(t).unwrap();
        let ell = choose_ell(&lattice, var);
        PartModel::new(lattice, ell, var).unwrap()
    }

    #[test]
    fn ell_rule() {
        let l = Lattice1D::new(12).unwrap();
        // 6 * sqrt(16/7) / 0.125 = 72.6 -> 2^7 = 128 -> ell = 8
        assert_eq!(choose_ell(&l, 16.0 / 7.0), 8);
        assert_eq!(choose_ell(&l, 1.0), 7);
    }

    #[test]
    fn all_frozen_is_shared_randomness_only() {
        let m = model(4, 2.0);
        let sets = CodeSets::uniform(m.n(), m.ell, IndexClass::Frozen);
        let x: Vec<f64> = (0..m.n()).map(|j| j as f64 * 0.1).collect();
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let (a, sa) = covering_encode(&x, &m, 0.5, &sets, 9, 1, &mut r1).unwrap();
        let (b, sb) = covering_encode(&x, &m, 0.5, &sets, 9, 1, &mut r2).unwrap();
        assert_eq!(a, b);
        assert!(sa.is_empty() && sb.is_empty());
        let dec = packing_decode(&[0.0; 16], &m, 3.0, &sets, &[], 9, 1).unwrap();
        assert_eq!(dec, a);
    }

    #[test]
    fn payload_is_verbatim_and_checked() {
        let m = model(3, 1.0);
        let sets = CodeSets::uniform(m.n(), m.ell, IndexClass::Sent);
        let payload: Vec<u8> = (0..m.n() * m.ell).map(|i| (i % 3 == 0) as u8).collect();
        let dec = packing_decode(&[0.0; 8], &m, 1.0, &sets, &payload, 4, 1).unwrap();
        let flat: Vec<u8> = dec.planes.concat();
        assert_eq!(flat, payload);
        assert!(matches!(
            packing_decode(&[0.0; 8], &m, 1.0, &sets, &payload[1..], 4, 1),
            Err(Error::ProtocolViolation(_))
        ));
    }

    #[test]
    fn noiseless_round_trip() {
        let m = model(6, 2.0);
        let n = m.n();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // mixed classes, no constraint from a construction
        let mut sets = CodeSets::uniform(n, m.ell, IndexClass::Decoded);
        for level in 0..m.ell {
            for j in 0..n {
                sets.levels[level][j] = match (j + level) % 3 {
                    0 => IndexClass::Frozen,
                    1 => IndexClass::Sent,
                    _ => IndexClass::Decoded,
                };
            }
        }
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (u, sent) = covering_encode(&x, &m, 1e-3, &sets, 7, 1, &mut rng).unwrap();
        let point = lattice_point(&u, &m.lattice).unwrap();
        let dec = packing_decode(&point, &m, 1e-6, &sets, &sent, 7, 1).unwrap();
        assert_eq!(dec, u);
    }

    #[test]
    fn encoder_is_deterministic() {
        let m = model(5, 2.0);
        let sets = CodeSets::uniform(m.n(), m.ell, IndexClass::Sent);
        let x = vec![0.7; m.n()];
        let a = covering_encode(&x, &m, 0.5, &sets, 1, 1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = covering_encode(&x, &m, 0.5, &sets, 1, 1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }
}
