//! The interactive session.
//!
//! Round 0 sends the hash of `x`. Round `k` sends the new part `X'_{k-1}` of
//! the auxiliary, quantized with the covering encoder, and the decoder
//! answers ACK or NACK from the closeness test; the session stops at the
//! first ACK.
//!
//! By default the decoder re-decodes every earlier part in each round with
//! the current guess, and the encoder tops up the bits that the current
//! guess can no longer MAP-decode. Without this a part decoded wrongly under
//! a too-optimistic guess would poison every later round. The literal mode
//! (each part decoded once, in its own round) is kept behind
//! [`ProtocolOptions::redecode`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{invalid_arg, invalid_param, Error, Result};
use crate::hashtest::{BitReader, BitWriter, Feedback, HashParams, Projector, QuantizedHash};
use crate::lattice::{BitPlanes, Lattice1D};
use crate::model::{mmse_reconstruct, round_params, sample_source, scaled_side_info, GuessSchedule, SourceParams};
use crate::polar::codec::{decode_with_known, lattice_point};
use crate::polar::{covering_encode, IndexClass, PartCode, PartModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    pub redecode: bool,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self { redecode: true }
    }
}

/// Everything both endpoints agree on before the session.
#[derive(Debug, Clone)]
pub struct SessionCodes {
    pub src: SourceParams,
    pub sched: GuessSchedule,
    pub lattice: Lattice1D,
    pub ell: usize,
    pub parts: Vec<PartCode>,
    pub models: Vec<PartModel>,
    pub options: ProtocolOptions,
}

impl SessionCodes {
    pub fn new(
        src: SourceParams,
        sched: GuessSchedule,
        lattice: Lattice1D,
        ell: usize,
        parts: Vec<PartCode>,
        options: ProtocolOptions,
    ) -> Result<Self> {
        let src = src.without_noise();
        sched.validate_for(&src)?;
        if parts.len() != sched.rounds() {
            return Err(invalid_param(format!(
                "{} part codes for {} rounds",
                parts.len(),
                sched.rounds()
            )));
        }
        let models = parts
            .iter()
            .map(|p| {
                if p.sets.ell() != ell || p.sets.n != 1usize << lattice.t {
                    return Err(invalid_param("part code does not match the lattice"));
                }
                PartModel::new(lattice, ell, p.design.var_part)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            src,
            sched,
            lattice,
            ell,
            parts,
            models,
            options,
        })
    }

    pub fn n(&self) -> usize {
        1usize << self.lattice.t
    }

    pub fn rounds(&self) -> usize {
        self.sched.rounds()
    }

    /// `(part, level, index)` positions of the bits sent in round `k`, in
    /// wire order.
    pub fn payload_layout(&self, k: usize) -> Result<Vec<(usize, usize, usize)>> {
        if k == 0 || k > self.rounds() {
            return Err(Error::SessionExhausted { rounds: self.rounds() });
        }
        let mut out = Vec::new();
        if self.options.redecode {
            for p in 0..k - 1 {
                for (level, j) in self.parts[p].top_up(k)? {
                    out.push((p, level, j));
                }
            }
        }
        let sets = &self.parts[k - 1].sets;
        for (level, classes) in sets.levels.iter().enumerate() {
            for (j, c) in classes.iter().enumerate() {
                if *c == IndexClass::Sent {
                    out.push((k - 1, level, j));
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Message {
    Round0Hash(QuantizedHash),
    RoundPayload { k: usize, bits: Vec<u8> },
    Feedback(Feedback),
}

impl Message {
    /// Framed bytes: a tag byte, then for payloads the round and bit count as
    /// big-endian `u32`s followed by the bits packed MSB first; hashes carry
    /// the entry count and packed entries.
    pub fn to_frame(&self, params: &HashParams) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Message::Round0Hash(h) => {
                out.push(0);
                out.extend_from_slice(&(h.len() as u32).to_be_bytes());
                out.extend(h.to_bytes(params));
            }
            Message::RoundPayload { k, bits } => {
                out.push(1);
                out.extend_from_slice(&(*k as u32).to_be_bytes());
                out.extend_from_slice(&(bits.len() as u32).to_be_bytes());
                let mut w = BitWriter::default();
                for b in bits {
                    w.push(*b as u64, 1);
                }
                out.extend(w.finish());
            }
            Message::Feedback(f) => {
                out.push(2);
                out.push((*f == Feedback::Ack) as u8);
            }
        }
        out
    }

    pub fn from_frame(bytes: &[u8], params: &HashParams) -> Result<Self> {
        let word = |at: usize| -> Result<usize> {
            bytes
                .get(at..at + 4)
                .map(|s| u32::from_be_bytes(s.try_into().unwrap()) as usize)
                .ok_or_else(|| invalid_arg("truncated frame"))
        };
        match bytes.first() {
            Some(0) => {
                let m = word(1)?;
                if m != params.m {
                    return Err(invalid_arg(format!("hash has {m} entries, expected {}", params.m)));
                }
                Ok(Message::Round0Hash(QuantizedHash::from_bytes(&bytes[5..], params)?))
            }
            Some(1) => {
                let k = word(1)?;
                let len = word(5)?;
                let body = &bytes[9..];
                if body.len() != len.div_ceil(8) {
                    return Err(invalid_arg("payload length does not match its prefix"));
                }
                let mut r = BitReader::new(body);
                let bits = (0..len).map(|_| r.read(1) as u8).collect();
                Ok(Message::RoundPayload { k, bits })
            }
            Some(2) if bytes.len() == 2 => Ok(Message::Feedback(if bytes[1] == 1 {
                Feedback::Ack
            } else {
                Feedback::Nack
            })),
            _ => Err(invalid_arg("unknown frame")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncoderState {
    pub x: Vec<f64>,
    pub a: Vec<f64>,
    pub round: usize,
    pub spent_bits: usize,
    /// `u`-domain planes of every part sent so far.
    pub parts: Vec<BitPlanes>,
}

impl EncoderState {
    pub fn new(x: Vec<f64>) -> Self {
        let n = x.len();
        Self {
            x,
            a: vec![0.0; n],
            round: 0,
            spent_bits: 0,
            parts: Vec::new(),
        }
    }
}

/// Quantizes the next part and emits its payload.
pub fn encoder_round<R: rand::Rng + ?Sized>(
    state: &mut EncoderState,
    codes: &SessionCodes,
    shared_seed: u64,
    rng: &mut R,
) -> Result<Message> {
    let k = state.round + 1;
    if k > codes.rounds() {
        return Err(Error::SessionExhausted { rounds: codes.rounds() });
    }
    let rp = round_params(k, &codes.sched, &codes.src)?;
    let x_k: Vec<f64> = state.x.iter().zip(&state.a).map(|(x, a)| x - a).collect();
    let code = &codes.parts[k - 1];
    let (u, sent) = covering_encode(&x_k, &codes.models[k - 1], rp.var_t, &code.sets, shared_seed, k, rng)?;
    let point = lattice_point(&u, &codes.lattice)?;
    for (a, p) in state.a.iter_mut().zip(&point) {
        *a += p;
    }
    let mut bits = Vec::new();
    if codes.options.redecode {
        for p in 0..k - 1 {
            for (level, j) in codes.parts[p].top_up(k)? {
                bits.push(state.parts[p].planes[level][j]);
            }
        }
    }
    bits.extend(sent);
    state.parts.push(u);
    state.round = k;
    state.spent_bits += bits.len();
    Ok(Message::RoundPayload { k, bits })
}

#[derive(Debug, Clone)]
pub struct DecoderState {
    pub y: Vec<f64>,
    pub a_hat: Vec<f64>,
    pub round: usize,
    pub x_hat: Vec<f64>,
    /// Bits received so far, `[part][level][j]`.
    pub known: Vec<Vec<Vec<Option<u8>>>>,
    /// Decoded `u` planes of every part at the latest round.
    pub parts: Vec<BitPlanes>,
}

impl DecoderState {
    pub fn new(y: Vec<f64>) -> Self {
        let n = y.len();
        Self {
            y,
            a_hat: vec![0.0; n],
            round: 0,
            x_hat: vec![0.0; n],
            known: Vec::new(),
            parts: Vec::new(),
        }
    }
}

/// Decodes round `k`, reconstructs and runs the closeness test.
pub fn decoder_round(
    state: &mut DecoderState,
    codes: &SessionCodes,
    msg: &Message,
    shared_seed: u64,
    hash: &QuantizedHash,
    projector: &Projector,
) -> Result<Message> {
    let Message::RoundPayload { k, bits } = msg else {
        return Err(Error::ProtocolViolation("expected a round payload".into()));
    };
    let k = *k;
    if k != state.round + 1 {
        return Err(Error::ProtocolViolation(format!(
            "payload for round {k} while expecting round {}",
            state.round + 1
        )));
    }
    let layout = codes.payload_layout(k)?;
    if layout.len() != bits.len() {
        return Err(Error::ProtocolViolation(format!(
            "round {k} payload carries {} bits, the code sends {}",
            bits.len(),
            layout.len()
        )));
    }
    let (n, ell) = (codes.n(), codes.ell);
    state.known.push(vec![vec![None; n]; ell]);
    for (&(p, level, j), &b) in layout.iter().zip(bits) {
        state.known[p][level][j] = Some(b);
    }
    let rp = round_params(k, &codes.sched, &codes.src)?;
    let ybar = scaled_side_info(&state.y, &rp);
    let first = if codes.options.redecode { 0 } else { k - 1 };
    let mut a_hat = if codes.options.redecode {
        vec![0.0; n]
    } else {
        state.a_hat.clone()
    };
    state.parts.truncate(first);
    for p in first..k {
        let code = &codes.parts[p];
        let g = k - code.design.round();
        let obs: Vec<f64> = ybar.iter().zip(&a_hat).map(|(y, a)| y - a).collect();
        let u = decode_with_known(
            &obs,
            &codes.models[p],
            code.design.side_vars[g],
            code.decoded_in_round(k)?,
            &state.known[p],
            shared_seed,
            code.design.round(),
        )?;
        for (a, v) in a_hat.iter_mut().zip(lattice_point(&u, &codes.lattice)?) {
            *a += v;
        }
        state.parts.push(u);
    }
    let x_hat = mmse_reconstruct(&a_hat, &ybar, &codes.src, &rp)?;
    let feedback = match projector.closeness_test(hash, &x_hat, codes.src.delta_target) {
        Ok(f) => f,
        Err(Error::TestDegenerate) => Feedback::Nack,
        Err(e) => return Err(e),
    };
    state.a_hat = a_hat;
    state.x_hat = x_hat;
    state.round = k;
    Ok(Message::Feedback(feedback))
}

/// Seeds of one session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSeeds {
    pub source: u64,
    pub shared: u64,
    pub hash: u64,
    pub encoder: u64,
}

impl SessionSeeds {
    pub fn derive(seed: u64) -> Self {
        Self {
            source: derive_seed(seed, 1),
            shared: derive_seed(seed, 2),
            hash: derive_seed(seed, 3),
            encoder: derive_seed(seed, 4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub tau: usize,
    pub per_round_bits: Vec<usize>,
    pub hash_bits: u64,
    pub feedback_bits: usize,
    /// Forward bits per sample: hash plus payloads.
    pub total_rate: f64,
    pub mse: f64,
    pub success: bool,
    pub feedback: Vec<Feedback>,
    /// Distortion of the reconstruction after each round.
    pub round_mse: Vec<f64>,
    /// Whether the decoder's auxiliary equals the encoder's after each round.
    pub aux_match: Vec<bool>,
    pub messages: Vec<Message>,
}

/// Runs one session on a fresh draw of the source. `src` must carry the true
/// noise variance.
pub fn run_session(
    src: &SourceParams,
    codes: &SessionCodes,
    hash_params: &HashParams,
    seeds: SessionSeeds,
) -> Result<SessionTranscript> {
    let n = codes.n();
    if hash_params.n != n {
        return Err(invalid_param("hash parameters are for a different block length"));
    }
    let (x, y) = sample_source(n, src, seeds.source)?;
    let projector = Projector::new(&hash_params.with_seed(seeds.hash));
    run_session_on(&x, &y, codes, &projector, seeds)
}

/// Runs one session on given vectors.
pub fn run_session_on(
    x: &[f64],
    y: &[f64],
    codes: &SessionCodes,
    projector: &Projector,
    seeds: SessionSeeds,
) -> Result<SessionTranscript> {
    let n = codes.n();
    if x.len() != n || y.len() != n {
        return Err(invalid_arg(format!("session vectors must have length {n}")));
    }
    let hash = projector.make_hash(x)?;
    let mut messages = vec![Message::Round0Hash(hash.clone())];
    let mut enc = EncoderState::new(x.to_vec());
    let mut dec = DecoderState::new(y.to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.encoder);
    let mut per_round_bits = Vec::new();
    let mut feedback = Vec::new();
    let mut round_mse = Vec::new();
    let mut aux_match = Vec::new();
    let mut tau = codes.rounds();
    let mut success = false;
    for k in 1..=codes.rounds() {
        let payload = encoder_round(&mut enc, codes, seeds.shared, &mut rng)?;
        if let Message::RoundPayload { bits, .. } = &payload {
            per_round_bits.push(bits.len());
        }
        let reply = decoder_round(&mut dec, codes, &payload, seeds.shared, &hash, projector)?;
        messages.push(payload);
        round_mse.push(mse(x, &dec.x_hat));
        aux_match.push(enc.a == dec.a_hat);
        let Message::Feedback(f) = reply else {
            unreachable!("decoder replies with feedback")
        };
        feedback.push(f);
        messages.push(reply);
        if f == Feedback::Ack {
            tau = k;
            success = true;
            break;
        }
    }
    let hash_bits = projector.params().hash_bits();
    let total_rate = (hash_bits as f64 + per_round_bits.iter().sum::<usize>() as f64) / n as f64;
    Ok(SessionTranscript {
        tau,
        hash_bits,
        feedback_bits: feedback.len(),
        total_rate,
        mse: mse(x, &dec.x_hat),
        success,
        feedback,
        per_round_bits,
        round_mse,
        aux_match,
        messages,
    })
}

/// `(1/N) |x - x_hat|^2`.
pub fn mse(x: &[f64], x_hat: &[f64]) -> f64 {
    x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64
}
