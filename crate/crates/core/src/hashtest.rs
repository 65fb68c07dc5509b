//! Quantized random projections and the closeness test.
//!
//! The encoder sends `Q(R^T x)` for an `N x m` standard normal matrix `R`
//! drawn from a shared seed. After each round the decoder compares the hash
//! with `R^T x_hat`: the mean squared gap `gamma` concentrates around
//! `|x - x_hat|^2` plus the quantization error, so `gamma <= 2.84 N delta`
//! separates `|x - x_hat|^2 <= N delta` from `|x - x_hat|^2 >= 8 N delta`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, invalid_param, Error, Result};

/// Decision threshold on `gamma / (N delta)`.
pub const ACK_THRESHOLD: f64 = 2.84;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HashParams {
    pub n: usize,
    pub m: usize,
    pub q: u32,
    pub t_range: f64,
    pub seed_r: u64,
}

impl HashParams {
    pub fn with_seed(self, seed_r: u64) -> Self {
        Self { seed_r, ..self }
    }

    /// Width `2T / (q - 1)` of a quantizer cell.
    pub fn cell(&self) -> f64 {
        2.0 * self.t_range / (self.q - 1) as f64
    }

    /// Bits per entry, `ceil(log2(q + 1))`; the extra symbol is overflow.
    pub fn entry_bits(&self) -> u32 {
        u32::BITS - self.q.leading_zeros()
    }

    /// `m * ceil(log2(q + 1))`.
    pub fn hash_bits(&self) -> u64 {
        self.m as u64 * self.entry_bits() as u64
    }
}

/// `T = 4 sigma_x sqrt(N)` and the smallest `q` with
/// `6 T^2 / (q - 1)^2 <= N delta`.
pub fn choose_hash_params(n: usize, delta: f64, sigma_x2: f64, m: usize) -> Result<HashParams> {
    if n == 0 || m == 0 || !(delta > 0.0) || !(sigma_x2 > 0.0) {
        return Err(invalid_param(format!(
            "hash needs positive n, m, delta and sigma_x2 (got {n}, {m}, {delta}, {sigma_x2})"
        )));
    }
    let nf = n as f64;
    let t_range = 4.0 * sigma_x2.sqrt() * nf.sqrt();
    let mut q = (1.0 + t_range * (6.0 / (nf * delta)).sqrt()).ceil().max(2.0) as u32;
    while 6.0 * t_range * t_range / ((q - 1) as f64).powi(2) > nf * delta {
        q += 1;
    }
    Ok(HashParams {
        n,
        m,
        q,
        t_range,
        seed_r: 0,
    })
}

/// Quantizer cell index of `v`, `None` outside `[-T, T]`.
pub fn quantize(v: f64, params: &HashParams) -> Option<u32> {
    let t = params.t_range;
    if !(-t..=t).contains(&v) {
        return None;
    }
    let i = ((v + t) * (params.q - 1) as f64 / (2.0 * t)).floor() as u32;
    Some(i.min(params.q - 1))
}

/// Reconstruction value `-T + i * 2T / (q - 1)` of cell `i`.
pub fn level_value(i: u32, params: &HashParams) -> f64 {
    -params.t_range + i as f64 * params.cell()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedHash {
    pub values: Vec<Option<u32>>,
}

impl QuantizedHash {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Big-endian packing of `entry_bits` per entry, overflow as `q`.
    pub fn to_bytes(&self, params: &HashParams) -> Vec<u8> {
        let b = params.entry_bits();
        let mut w = BitWriter::default();
        for v in &self.values {
            w.push(v.unwrap_or(params.q) as u64, b);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8], params: &HashParams) -> Result<Self> {
        let b = params.entry_bits();
        let need = (params.m * b as usize).div_ceil(8);
        if bytes.len() != need {
            return Err(invalid_arg(format!("hash needs {need} bytes, got {}", bytes.len())));
        }
        let mut r = BitReader::new(bytes);
        let values = (0..params.m)
            .map(|_| {
                let v = r.read(b) as u32;
                match v {
                    v if v == params.q => Ok(None),
                    v if v < params.q => Ok(Some(v)),
                    v => Err(invalid_arg(format!("hash entry {v} exceeds q = {}", params.q))),
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { values })
    }
}

/// MSB-first bit packer.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    used: u32,
}

impl BitWriter {
    pub fn push(&mut self, value: u64, bits: u32) {
        for k in (0..bits).rev() {
            if self.used == 0 {
                self.bytes.push(0);
            }
            let bit = ((value >> k) & 1) as u8;
            *self.bytes.last_mut().unwrap() |= bit << (7 - self.used);
            self.used = (self.used + 1) % 8;
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

#[derive(Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    /// Reads `bits` bits; missing bits read as zero.
    pub fn read(&mut self, bits: u32) -> u64 {
        let mut v = 0u64;
        for _ in 0..bits {
            let byte = self.bytes.get(self.pos / 8).copied().unwrap_or(0);
            v = (v << 1) | ((byte >> (7 - self.pos % 8)) & 1) as u64;
            self.pos += 1;
        }
        v
    }
}

/// The shared projection matrix, materialized once per session.
#[derive(Debug, Clone)]
pub struct Projector {
    params: HashParams,
    /// Row-major `N x m`.
    r: Vec<f64>,
}

impl Projector {
    pub fn new(params: &HashParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed_r);
        let r = (0..params.n * params.m)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Self { params: *params, r }
    }

    pub fn params(&self) -> &HashParams {
        &self.params
    }

    /// `R^T x`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.params.n {
            return Err(invalid_arg(format!(
                "expected a vector of length {}, got {}",
                self.params.n,
                x.len()
            )));
        }
        let m = self.params.m;
        let mut out = vec![0.0; m];
        for (row, &xj) in self.r.chunks_exact(m).zip(x) {
            for (o, rv) in out.iter_mut().zip(row) {
                *o += rv * xj;
            }
        }
        Ok(out)
    }

    pub fn make_hash(&self, x: &[f64]) -> Result<QuantizedHash> {
        Ok(QuantizedHash {
            values: self
                .project(x)?
                .into_iter()
                .map(|v| quantize(v, &self.params))
                .collect(),
        })
    }

    pub fn gamma(&self, hash: &QuantizedHash, x_hat: &[f64]) -> Result<f64> {
        gamma_from_projection(hash, &self.project(x_hat)?, &self.params)
    }

    pub fn closeness_test(&self, hash: &QuantizedHash, x_hat: &[f64], delta: f64) -> Result<Feedback> {
        let g = self.gamma(hash, x_hat)?;
        Ok(decide(g, self.params.n, delta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Feedback {
    Ack,
    Nack,
}

/// ACK iff `gamma <= 2.84 N delta`.
pub fn decide(gamma: f64, n: usize, delta: f64) -> Feedback {
    if gamma <= ACK_THRESHOLD * n as f64 * delta {
        Feedback::Ack
    } else {
        Feedback::Nack
    }
}

/// `gamma` over the entries that did not overflow.
pub fn gamma_from_projection(hash: &QuantizedHash, proj: &[f64], params: &HashParams) -> Result<f64> {
    if hash.len() != proj.len() {
        return Err(invalid_arg("hash and projection lengths differ"));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (h, p) in hash.values.iter().zip(proj) {
        if let Some(i) = h {
            let d = level_value(*i, params) - p;
            sum += d * d;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::TestDegenerate);
    }
    Ok(sum / used as f64)
}

/// Hash of `x` under the projection generated from `params.seed_r`.
pub fn make_hash(x: &[f64], params: &HashParams) -> Result<QuantizedHash> {
    Projector::new(params).make_hash(x)
}

/// ACK/NACK for `x_hat` against a received hash.
pub fn closeness_test(hash: &QuantizedHash, x_hat: &[f64], params: &HashParams, delta: f64) -> Result<Feedback> {
    Projector::new(params).closeness_test(hash, x_hat, delta)
}
