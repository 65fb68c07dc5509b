//! The on-disk code cache.
//!
//! A JSON document with a format version, the digest of the configuration it
//! was built from, and one record per (round, level). Index sets are stored
//! as hex bitsets (MSB first); the Bhattacharyya estimates are kept so a
//! cache can be inspected without rebuilding it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::model::GuessSchedule;
use crate::polar::{
    construct_part, part_designs, CodeSets, ConstructionConfig, IndexClass, PartCode, PartDesign,
    PartModel, ZEstimates,
};
use crate::protocol::{ProtocolOptions, SessionCodes};

use super::config::ExperimentConfig;

pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeCache {
    pub version: u32,
    pub digest: String,
    pub n: usize,
    pub ell: usize,
    pub sigma_x2: f64,
    pub delta: f64,
    pub schedule: Vec<f64>,
    pub construction: ConstructionConfig,
    pub seed: u64,
    pub parts: Vec<PartRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartRecord {
    pub round: usize,
    pub design: PartDesign,
    pub mc_samples: usize,
    pub levels: Vec<LevelRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    /// 1-based.
    pub level: usize,
    pub frozen: String,
    pub sent: String,
    pub decoded: String,
    /// Decoded masks at the part's own guess and every later one.
    pub decoded_by_guess: Vec<String>,
    /// Estimates for the channels prior, X, then each guess.
    pub z: Vec<Vec<f64>>,
}

pub fn bits_to_hex(bits: &[bool]) -> String {
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    for (i, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
        bytes[i / 8] |= 0x80 >> (i % 8);
    }
    hex::encode(bytes)
}

pub fn hex_to_bits(s: &str, n: usize) -> Result<Vec<bool>> {
    let bytes = hex::decode(s).map_err(|e| Error::Serde(format!("bad bitset: {e}")))?;
    if bytes.len() != n.div_ceil(8) {
        return Err(Error::Serde(format!(
            "bitset of {} bytes for {n} indices",
            bytes.len()
        )));
    }
    Ok((0..n).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect())
}

fn class_mask(classes: &[IndexClass], class: IndexClass) -> Vec<bool> {
    classes.iter().map(|c| *c == class).collect()
}

impl PartRecord {
    fn from_code(code: &PartCode) -> Self {
        let levels = code
            .sets
            .levels
            .iter()
            .enumerate()
            .map(|(l, classes)| LevelRecord {
                level: l + 1,
                frozen: bits_to_hex(&class_mask(classes, IndexClass::Frozen)),
                sent: bits_to_hex(&class_mask(classes, IndexClass::Sent)),
                decoded: bits_to_hex(&class_mask(classes, IndexClass::Decoded)),
                decoded_by_guess: code.decoded_at.iter().map(|g| bits_to_hex(&g[l])).collect(),
                z: code.z.z[l].clone(),
            })
            .collect();
        Self {
            round: code.design.round(),
            design: code.design.clone(),
            mc_samples: code.z.samples,
            levels,
        }
    }

    fn to_code(&self, n: usize) -> Result<PartCode> {
        let guesses = self.design.side_vars.len();
        let mut sets = CodeSets::uniform(n, self.levels.len(), IndexClass::Sent);
        let mut decoded_at = vec![Vec::new(); guesses];
        let mut z = Vec::with_capacity(self.levels.len());
        for (l, rec) in self.levels.iter().enumerate() {
            let frozen = hex_to_bits(&rec.frozen, n)?;
            let sent = hex_to_bits(&rec.sent, n)?;
            let decoded = hex_to_bits(&rec.decoded, n)?;
            for j in 0..n {
                sets.levels[l][j] = match (frozen[j], sent[j], decoded[j]) {
                    (true, false, false) => IndexClass::Frozen,
                    (false, true, false) => IndexClass::Sent,
                    (false, false, true) => IndexClass::Decoded,
                    _ => {
                        return Err(Error::Serde(format!(
                            "round {} level {} index {j} is not in exactly one set",
                            self.round, rec.level
                        )))
                    }
                };
            }
            if rec.decoded_by_guess.len() != guesses {
                return Err(Error::Serde(format!(
                    "round {} level {}: {} decoded masks for {guesses} guesses",
                    self.round,
                    rec.level,
                    rec.decoded_by_guess.len()
                )));
            }
            for (g, h) in rec.decoded_by_guess.iter().enumerate() {
                decoded_at[g].push(hex_to_bits(h, n)?);
            }
            z.push(rec.z.clone());
        }
        sets.check()?;
        Ok(PartCode {
            design: self.design.clone(),
            sets,
            decoded_at,
            z: ZEstimates {
                samples: self.mc_samples,
                z,
            },
        })
    }
}

impl CodeCache {
    /// Runs the construction for every round of the configured schedule.
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let lattice = cfg.lattice()?;
        let ell = cfg.ell()?;
        let sched = cfg.schedule()?;
        let construction = cfg.construction();
        let designs = part_designs(&sched, &cfg.codec_source()?)?;
        let parts = designs
            .iter()
            .map(|d| {
                let model = PartModel::new(lattice, ell, d.var_part)?;
                let code = construct_part(&model, d, &construction, derive_seed(cfg.seed, 0x100 + d.part as u64))?;
                Ok(PartRecord::from_code(&code))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            version: CACHE_VERSION,
            digest: cfg.digest()?,
            n: cfg.n,
            ell,
            sigma_x2: cfg.sigma_x2,
            delta: cfg.delta,
            schedule: sched.sigma2,
            construction,
            seed: cfg.seed,
            parts,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("partial");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::CacheMiss(format!("cannot read {}: {e}", path.display())))?;
        let cache: Self = serde_json::from_slice(&bytes)?;
        if cache.version != CACHE_VERSION {
            return Err(Error::CacheMiss(format!(
                "cache version {} (expected {CACHE_VERSION})",
                cache.version
            )));
        }
        Ok(cache)
    }

    /// Fails with `CacheMiss` unless the cache was built from a configuration
    /// with the same construction inputs.
    pub fn ensure_matches(&self, cfg: &ExperimentConfig) -> Result<()> {
        let want = cfg.digest()?;
        if self.digest != want {
            return Err(Error::CacheMiss(format!(
                "digest {} does not match configuration digest {want}",
                self.digest
            )));
        }
        Ok(())
    }

    /// Loads `path` if it matches `cfg`, otherwise builds and writes it.
    pub fn load_or_build(path: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        match Self::load(path) {
            Ok(c) if c.ensure_matches(cfg).is_ok() => Ok(c),
            _ => {
                let c = Self::build(cfg)?;
                c.save(path)?;
                Ok(c)
            }
        }
    }

    pub fn part_codes(&self) -> Result<Vec<PartCode>> {
        self.parts.iter().map(|p| p.to_code(self.n)).collect()
    }

    pub fn session_codes(&self, cfg: &ExperimentConfig) -> Result<SessionCodes> {
        self.ensure_matches(cfg)?;
        SessionCodes::new(
            cfg.codec_source()?,
            GuessSchedule::from_points(self.schedule.clone())?,
            cfg.lattice()?,
            self.ell,
            self.part_codes()?,
            ProtocolOptions {
                redecode: cfg.redecode,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            "n = 64\nsigma_x2 = 4.0\nschedule = [1.5, 2.0, 3.0]\nmc_samples = 40\nz_low = 1e-3",
            &[],
        )
        .unwrap()
    }

    #[test]
    fn hex_bitsets() {
        let bits = [true, false, false, false, false, false, false, true, true];
        assert_eq!(bits_to_hex(&bits), "8180");
        assert_eq!(hex_to_bits("8180", 9).unwrap(), bits);
        assert!(hex_to_bits("81", 9).is_err());
    }

    #[test]
    fn round_trip_is_lossless() {
        let cfg = small();
        let cache = CodeCache::build(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("codes.json");
        cache.save(&path).unwrap();
        let back = CodeCache::load(&path).unwrap();
        assert_eq!(back, cache);
        let codes = back.part_codes().unwrap();
        assert_eq!(codes.len(), 2);
        assert_eq!(codes[0].decoded_at.len(), 2);
        back.session_codes(&cfg).unwrap();
    }

    #[test]
    fn rebuild_is_byte_identical() {
        let cfg = small();
        let a = serde_json::to_vec(&CodeCache::build(&cfg).unwrap()).unwrap();
        let b = serde_json::to_vec(&CodeCache::build(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_config_is_a_miss() {
        let cfg = small();
        let cache = CodeCache::build(&cfg).unwrap();
        let mut other = cfg.clone();
        other.z_low = 2e-3;
        assert!(matches!(cache.ensure_matches(&other), Err(Error::CacheMiss(_))));
        assert!(matches!(
            CodeCache::load(Path::new("/nonexistent/codes.json")),
            Err(Error::CacheMiss(_))
        ));
    }
}
