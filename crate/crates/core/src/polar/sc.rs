//! Successive cancellation over one or more channels in lockstep.
//!
//! Each channel is a vector of per-coordinate pairs `(P(x_j = 0), P(x_j = 1))`
//! up to scale. All channels share the decisions, so one pass can produce the
//! posteriors of the same bit under different observations, as the covering
//! encoder (data and prior), the packing decoder and the Monte-Carlo
//! construction all need.

use rand::Rng;

use crate::error::{invalid_arg, Error, Result};

const FLOOR: f64 = 1e-300;

/// How the bit at one index is set once its posteriors are known.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitRule {
    /// Draw from the posterior of channel 0.
    Sample,
    /// MAP on channel 0, ties to 0.
    Argmax,
    Fixed(u8),
    /// Threshold a shared uniform against the posterior of the prior channel.
    Shared,
}

#[inline]
fn normalize(p: [f64; 2]) -> [f64; 2] {
    let s = p[0] + p[1];
    [(p[0] / s).max(FLOOR), (p[1] / s).max(FLOOR)]
}

/// Reusable SC decoder for block length `n` and `channels` channels.
#[derive(Debug, Clone)]
pub struct ScEngine {
    n: usize,
    channels: usize,
    bufs: Vec<Vec<[f64; 2]>>,
    post: Vec<[f64; 2]>,
    u: Vec<u8>,
    x: Vec<u8>,
}

impl ScEngine {
    pub fn new(n: usize, channels: usize) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(invalid_arg(format!("block length {n} is not a power of two")));
        }
        if channels == 0 {
            return Err(invalid_arg("at least one channel is required"));
        }
        let depth = n.trailing_zeros() as usize;
        let bufs = (0..=depth).map(|d| vec![[0.0; 2]; channels * (n >> d)]).collect();
        Ok(Self {
            n,
            channels,
            bufs,
            post: vec![[0.0; 2]; channels],
            u: vec![0; n],
            x: vec![0; n],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Decided bits, in the `u` domain.
    pub fn u(&self) -> &[u8] {
        &self.u
    }

    /// `u G_N` of the decided bits.
    pub fn x(&self) -> &[u8] {
        &self.x
    }

    /// Input buffer, channel-major: `n` pairs for channel 0, then channel 1...
    pub fn input_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.bufs[0]
    }

    /// Runs one pass over the weights already in [`Self::input_mut`].
    ///
    /// `decide(j, posts)` receives the normalized posterior of `u_j` under
    /// every channel, given the decisions so far, and returns the bit.
    pub fn run<F>(&mut self, mut decide: F) -> Result<()>
    where
        F: FnMut(usize, &[[f64; 2]]) -> Result<u8>,
    {
        let n = self.n;
        for (i, w) in self.bufs[0].iter_mut().enumerate() {
            let s = w[0] + w[1];
            if !(s > 0.0) || !s.is_finite() || w[0] < 0.0 || w[1] < 0.0 {
                return Err(Error::DegenerateWeight {
                    index: i % n,
                    reason: format!("input pair {w:?} on channel {}", i / n),
                });
            }
            *w = normalize(*w);
        }
        let Self {
            bufs, post, u, x, ..
        } = self;
        rec(bufs, post, u, x, self.channels, 0, 0, &mut decide)
    }

    /// Convenience wrapper: loads `weights` (channel-major) and runs.
    pub fn run_with<F>(&mut self, weights: &[[f64; 2]], decide: F) -> Result<()>
    where
        F: FnMut(usize, &[[f64; 2]]) -> Result<u8>,
    {
        if weights.len() != self.n * self.channels {
            return Err(invalid_arg(format!(
                "expected {} weight pairs, got {}",
                self.n * self.channels,
                weights.len()
            )));
        }
        self.bufs[0].copy_from_slice(weights);
        self.run(decide)
    }
}

#[allow(clippy::too_many_arguments)]
fn rec<F>(
    bufs: &mut [Vec<[f64; 2]>],
    post: &mut [[f64; 2]],
    u: &mut [u8],
    x: &mut [u8],
    channels: usize,
    depth: usize,
    off: usize,
    decide: &mut F,
) -> Result<()>
where
    F: FnMut(usize, &[[f64; 2]]) -> Result<u8>,
{
    let len = bufs[depth].len() / channels;
    if len == 1 {
        for (p, w) in post.iter_mut().zip(&bufs[depth]) {
            *p = normalize(*w);
        }
        let bit = decide(off, post)?;
        if bit > 1 {
            return Err(invalid_arg(format!("decision {bit} is not a bit")));
        }
        u[off] = bit;
        x[off] = bit;
        return Ok(());
    }
    let h = len / 2;
    {
        let (cur, next) = bufs[depth..].split_at_mut(1);
        let (cur, next) = (&cur[0], &mut next[0]);
        for c in 0..channels {
            let a = &cur[c * len..c * len + h];
            let b = &cur[c * len + h..(c + 1) * len];
            for ((o, a), b) in next[c * h..(c + 1) * h].iter_mut().zip(a).zip(b) {
                *o = normalize([a[0] * b[0] + a[1] * b[1], a[0] * b[1] + a[1] * b[0]]);
            }
        }
    }
    rec(bufs, post, u, x, channels, depth + 1, off, decide)?;
    {
        let (cur, next) = bufs[depth..].split_at_mut(1);
        let (cur, next) = (&cur[0], &mut next[0]);
        let left = &x[off..off + h];
        for c in 0..channels {
            let a = &cur[c * len..c * len + h];
            let b = &cur[c * len + h..(c + 1) * len];
            for (((o, a), b), &v) in next[c * h..(c + 1) * h].iter_mut().zip(a).zip(b).zip(left) {
                let v = v as usize;
                *o = normalize([a[v] * b[0], a[1 - v] * b[1]]);
            }
        }
    }
    rec(bufs, post, u, x, channels, depth + 1, off + h, decide)?;
    let (l, r) = x[off..off + len].split_at_mut(h);
    for (a, b) in l.iter_mut().zip(r.iter()) {
        *a ^= *b;
    }
    Ok(())
}

/// Applies a [`BitRule`] to a posterior pair. `shared_u` is the shared
/// uniform for this index, consumed only by [`BitRule::Shared`].
pub fn apply_rule<R: Rng + ?Sized>(
    rule: BitRule,
    main: [f64; 2],
    prior: [f64; 2],
    shared_u: impl FnOnce() -> f64,
    rng: &mut R,
) -> u8 {
    match rule {
        BitRule::Sample => (rng.random::<f64>() < main[1]) as u8,
        BitRule::Argmax => (main[1] > main[0]) as u8,
        BitRule::Fixed(b) => b,
        BitRule::Shared => (shared_u() < prior[1]) as u8,
    }
}

/// Single-channel pass: decisions by `policy`, returning the bits and the
/// posterior at every index. [`BitRule::Shared`] thresholds a uniform from
/// `rng` against the same channel.
pub fn sc_pass<R: Rng + ?Sized>(
    weights: &[[f64; 2]],
    policy: &[BitRule],
    rng: &mut R,
) -> Result<(Vec<u8>, Vec<[f64; 2]>)> {
    let n = weights.len();
    if policy.len() != n {
        return Err(invalid_arg("policy length must match the weights"));
    }
    let mut engine = ScEngine::new(n, 1)?;
    let mut posts = vec![[0.0; 2]; n];
    engine.run_with(weights, |j, p| {
        posts[j] = p[0];
        let rule = policy[j];
        let bit = match rule {
            BitRule::Shared => (rng.random::<f64>() < p[0][1]) as u8,
            _ => apply_rule(rule, p[0], p[0], || 0.0, rng),
        };
        Ok(bit)
    })?;
    Ok((engine.u().to_vec(), posts))
}
