mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use polarwz::harness::experiment::hash_params;
use polarwz::harness::{run_trials, CodeCache, ExperimentConfig};
use polarwz::hashtest::{Feedback, Projector};
use polarwz::model::{round_params, sample_source};
use polarwz::polar::payload_len;
use polarwz::protocol::{
    decoder_round, encoder_round, run_session, run_session_on, DecoderState, EncoderState,
    Message, SessionCodes, SessionSeeds,
};
use polarwz::Error;

const SMALL: &str = "n = 256\nsigma_x2 = 4.0\nschedule = [1.5, 2.0, 3.0]\nmc_samples = 200\nz_low = 1e-3\nhash_m = 64";

fn small(redecode: bool) -> (ExperimentConfig, SessionCodes) {
    let mut cfg = common::config(SMALL);
    cfg.redecode = redecode;
    let codes = CodeCache::build(&cfg).unwrap().session_codes(&cfg).unwrap();
    (cfg, codes)
}

fn session(cfg: &ExperimentConfig, codes: &SessionCodes, sz2: f64, seed: u64) -> polarwz::protocol::SessionTranscript {
    run_session(&cfg.source(sz2).unwrap(), codes, &hash_params(cfg).unwrap(), SessionSeeds::derive(seed)).unwrap()
}

#[test]
fn transcripts_are_well_formed() {
    let (cfg, codes) = small(true);
    for seed in 0..20 {
        for sz2 in [1.6, 2.5, 3.5] {
            let t = session(&cfg, &codes, sz2, seed);
            assert!(matches!(t.messages[0], Message::Round0Hash(_)));
            assert_eq!(t.messages.len(), 1 + 2 * t.feedback.len());
            for (i, pair) in t.messages[1..].chunks(2).enumerate() {
                assert!(matches!(&pair[0], Message::RoundPayload { k, bits } if *k == i + 1 && bits.len() == t.per_round_bits[i]));
                assert_eq!(pair[1], Message::Feedback(t.feedback[i]));
            }
            let (last, earlier) = t.feedback.split_last().unwrap();
            assert!(earlier.iter().all(|f| *f == Feedback::Nack));
            assert_eq!(t.success, *last == Feedback::Ack);
            assert_eq!(t.feedback_bits, t.feedback.len());
            if t.success {
                assert_eq!(t.tau, t.feedback.len());
            } else {
                assert_eq!(t.tau, codes.rounds());
            }
            let total = (t.hash_bits as f64 + t.per_round_bits.iter().sum::<usize>() as f64) / cfg.n as f64;
            assert_eq!(t.total_rate, total);
            assert_eq!(t.round_mse.len(), t.feedback.len());
            assert_eq!(t.mse, *t.round_mse.last().unwrap());
        }
    }
}

#[test]
fn rate_grows_with_stopping_round() {
    let (cfg, codes) = small(true);
    let mut by_tau: Vec<Vec<f64>> = vec![Vec::new(); codes.rounds() + 1];
    for seed in 0..30 {
        for sz2 in [1.6, 2.5, 3.5] {
            let t = session(&cfg, &codes, sz2, seed);
            by_tau[t.tau].push(t.total_rate);
        }
    }
    let maxes: Vec<f64> = by_tau.iter().filter(|v| !v.is_empty()).map(|v| v.iter().copied().fold(0.0, f64::max)).collect();
    let mins: Vec<f64> = by_tau.iter().filter(|v| !v.is_empty()).map(|v| v.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    for i in 1..maxes.len() {
        assert!(mins[i] >= maxes[i - 1], "{mins:?} {maxes:?}");
    }
}

#[test]
fn sessions_are_deterministic() {
    let (cfg, codes) = small(true);
    assert_eq!(session(&cfg, &codes, 2.5, 9), session(&cfg, &codes, 2.5, 9));
}

#[test]
fn literal_mode_sends_each_part_once() {
    let (cfg, codes) = small(false);
    for seed in 0..10 {
        let t = session(&cfg, &codes, 3.5, seed);
        for (k, bits) in t.per_round_bits.iter().enumerate() {
            assert_eq!(*bits, payload_len(&codes.parts[k].sets));
        }
    }
}

#[test]
fn exhaustion_reports_failure_with_last_reconstruction() {
    let (cfg, codes) = small(true);
    let src = cfg.source(2.5).unwrap();
    let (x, y) = sample_source(cfg.n, &src, 1).unwrap();
    let projector = Projector::new(&hash_params(&cfg).unwrap().with_seed(5));
    // the hash describes a different source vector, so no round can pass
    let other: Vec<f64> = x.iter().map(|v| -3.0 * v).collect();
    let hash = projector.make_hash(&other).unwrap();
    let seeds = SessionSeeds::derive(3);
    let mut enc = EncoderState::new(x.clone());
    let mut dec = DecoderState::new(y);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.encoder);
    for _ in 0..codes.rounds() {
        let msg = encoder_round(&mut enc, &codes, seeds.shared, &mut rng).unwrap();
        let reply = decoder_round(&mut dec, &codes, &msg, seeds.shared, &hash, &projector).unwrap();
        assert_eq!(reply, Message::Feedback(Feedback::Nack));
    }
    assert!(matches!(
        encoder_round(&mut enc, &codes, seeds.shared, &mut rng),
        Err(Error::SessionExhausted { .. })
    ));
    assert!(dec.x_hat.iter().all(|v| v.is_finite()));

    // out-of-interval noise runs the same path through run_session
    let t = session(&cfg, &codes, 3.9, 2);
    if !t.success {
        assert_eq!(t.feedback, vec![Feedback::Nack; codes.rounds()]);
    }
}

#[test]
fn decoder_rejects_malformed_payloads() {
    let (cfg, codes) = small(true);
    let (x, y) = sample_source(cfg.n, &cfg.source(2.0).unwrap(), 1).unwrap();
    let projector = Projector::new(&hash_params(&cfg).unwrap());
    let hash = projector.make_hash(&x).unwrap();
    let mut enc = EncoderState::new(x);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let Message::RoundPayload { k, mut bits } = encoder_round(&mut enc, &codes, 7, &mut rng).unwrap() else {
        panic!("payload expected")
    };
    let violation = |msg: Message| {
        let mut dec = DecoderState::new(y.clone());
        matches!(
            decoder_round(&mut dec, &codes, &msg, 7, &hash, &projector),
            Err(Error::ProtocolViolation(_))
        )
    };
    assert!(violation(Message::RoundPayload { k: 2, bits: bits.clone() }));
    assert!(violation(Message::Feedback(Feedback::Ack)));
    bits.push(0);
    assert!(violation(Message::RoundPayload { k, bits }));
}

#[test]
fn sample_source_covariance() {
    let src = polarwz::model::SourceParams::new(4.0, 1.0, 0.5).unwrap();
    let (x, y) = sample_source(1_000_000, &src, 11).unwrap();
    let n = x.len() as f64;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>() / n;
    assert!((dot(&x, &x) - 4.0).abs() <= 0.02);
    assert!((dot(&x, &y) - 3.0).abs() <= 0.02);
    assert!((dot(&y, &y) - 3.0).abs() <= 0.02);
}

#[test]
fn matched_sessions_agree_on_the_auxiliary() {
    let (cfg, codes) = common::matched();
    let mut cfg = cfg.clone();
    cfg.trials = 40;
    let sz2 = cfg.sigma_z2.unwrap();
    let hp = hash_params(&cfg).unwrap();
    let mut matched = 0;
    for seed in 0..cfg.trials as u64 {
        let t = run_session(&cfg.source(sz2).unwrap(), codes, &hp, SessionSeeds::derive(seed)).unwrap();
        matched += usize::from(*t.aux_match.last().unwrap());
    }
    assert!(matched as f64 >= 0.9 * cfg.trials as f64, "{matched}/{}", cfg.trials);
}

#[test]
fn corrupted_payload_is_rejected() {
    let (cfg, codes) = common::matched();
    let src = cfg.source(cfg.sigma_z2.unwrap()).unwrap();
    let hp = hash_params(cfg).unwrap();
    let trials = 100;
    let mut nacks = 0;
    for seed in 0..trials {
        let seeds = SessionSeeds::derive(1000 + seed);
        let (x, y) = sample_source(cfg.n, &src, seeds.source).unwrap();
        let projector = Projector::new(&hp.with_seed(seeds.hash));
        let hash = projector.make_hash(&x).unwrap();
        let mut enc = EncoderState::new(x);
        let mut dec = DecoderState::new(y);
        let mut rng = ChaCha8Rng::seed_from_u64(seeds.encoder);
        let Message::RoundPayload { k, bits } = encoder_round(&mut enc, codes, seeds.shared, &mut rng).unwrap() else {
            panic!("payload expected")
        };
        let flipped = Message::RoundPayload { k, bits: bits.iter().map(|b| b ^ 1).collect() };
        let reply = decoder_round(&mut dec, codes, &flipped, seeds.shared, &hash, &projector).unwrap();
        nacks += u64::from(reply == Message::Feedback(Feedback::Nack));
    }
    assert!(nacks as f64 >= 0.99 * trials as f64, "{nacks}/{trials}");
}

#[test]
fn matched_residual_variance() {
    let (cfg, codes) = common::matched();
    let src = cfg.source(cfg.sigma_z2.unwrap()).unwrap();
    let rp = round_params(1, &codes.sched, &codes.src).unwrap();
    let mut total = 0.0;
    let reps = 20;
    for seed in 0..reps {
        let (x, _) = sample_source(cfg.n, &src, seed).unwrap();
        let mut enc = EncoderState::new(x.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        encoder_round(&mut enc, codes, seed, &mut rng).unwrap();
        total += polarwz::protocol::mse(&x, &enc.a);
    }
    let var = total / reps as f64;
    let want = rp.alpha_k * rp.delta_k;
    assert!((var - want).abs() <= 0.15 * want, "var(x - a) = {var}, expected {want}");
}

#[test]
fn projection_preserves_energy() {
    let (cfg, _) = small(true);
    let (x, _) = sample_source(cfg.n, &cfg.source(2.0).unwrap(), 4).unwrap();
    let norm: f64 = x.iter().map(|v| v * v).sum();
    let mut params = hash_params(&cfg).unwrap();
    params.m = 256;
    let mut acc = 0.0;
    let draws = 40;
    for s in 0..draws {
        let proj = Projector::new(&params.with_seed(s)).project(&x).unwrap();
        acc += proj.iter().map(|v| v * v).sum::<f64>();
    }
    let var = acc / (draws as f64 * params.m as f64);
    assert!((var / norm - 1.0).abs() < 0.03, "{var} vs {norm}");
}

#[test]
fn gamma_is_bracketed_by_the_distance() {
    let (cfg, _) = small(true);
    let (x, _) = sample_source(cfg.n, &cfg.source(2.0).unwrap(), 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let e: Vec<f64> = (0..cfg.n).map(|_| rand::Rng::random_range(&mut rng, -1.5..1.5)).collect();
    let x_hat: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a - b).collect();
    let dist: f64 = e.iter().map(|v| v * v).sum();
    let params = hash_params(&cfg).unwrap();
    let draws = 400;
    let mean = (0..draws)
        .map(|s| {
            let p = Projector::new(&params.with_seed(s));
            p.gamma(&p.make_hash(&x).unwrap(), &x_hat).unwrap()
        })
        .sum::<f64>()
        / draws as f64;
    // 3% slack for the Monte-Carlo mean over 400 x 64 projections
    let nd = cfg.n as f64 * cfg.delta;
    assert!(mean >= 0.97 * dist && mean <= 1.03 * (dist + nd), "{mean} vs [{dist}, {}]", dist + nd);
}

#[test]
fn mean_stopping_round_grows_with_noise() {
    let (cfg, codes) = common::sweep();
    let mut cfg = cfg.clone();
    cfg.trials = 30;
    let means: Vec<f64> = cfg
        .sweep
        .iter()
        .map(|&s| {
            let rows = run_trials(&cfg, codes, s).unwrap();
            rows.iter().map(|r| r.tau as f64).sum::<f64>() / rows.len() as f64
        })
        .collect();
    assert!(means.windows(2).all(|w| w[1] >= w[0]), "{means:?}");
}

#[test]
fn session_on_rejects_wrong_lengths() {
    let (cfg, codes) = small(true);
    let projector = Projector::new(&hash_params(&cfg).unwrap());
    let x = vec![0.0; cfg.n - 1];
    assert!(run_session_on(&x, &x, &codes, &projector, SessionSeeds::derive(0)).is_err());
}
