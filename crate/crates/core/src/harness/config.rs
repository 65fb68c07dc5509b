//! Experiment configuration: a flat TOML table with command-line overrides.
//!
//! ```toml
//! n = 4096
//! sigma_x2 = 16.0
//! delta = 1.0
//! sigma_lo = 2.0
//! sigma_hi = 8.0
//! omega = 0.5
//! sigma_z2 = 3.5
//! sweep = [2.2, 3.5, 6.5]
//! hash_m = 192
//! z_low = 3e-4
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::Lattice1D;
use crate::model::{make_schedule, GuessSchedule, SourceParams};
use crate::polar::{choose_ell, part_designs, ConstructionConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Block length, a power of two.
    pub n: usize,
    /// Number of bit-planes; derived from the part variances when unset.
    pub ell: Option<usize>,
    pub sigma_x2: f64,
    pub delta: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub omega: f64,
    /// Explicit guesses, overriding the geometric grid.
    pub schedule: Option<Vec<f64>>,
    /// True noise variance for `run`.
    pub sigma_z2: Option<f64>,
    /// Noise variances for `sweep`.
    pub sweep: Vec<f64>,
    pub hash_m: usize,
    pub mc_samples: usize,
    pub z_low: f64,
    pub z_high: f64,
    pub trials: usize,
    pub seed: u64,
    pub redecode: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let c = ConstructionConfig::default();
        Self {
            n: 4096,
            ell: None,
            sigma_x2: 16.0,
            delta: 1.0,
            sigma_lo: 2.0,
            sigma_hi: 8.0,
            omega: 0.5,
            schedule: None,
            sigma_z2: None,
            sweep: Vec::new(),
            hash_m: 2048,
            mc_samples: c.mc_samples,
            z_low: c.z_low,
            z_high: c.z_high,
            trials: 200,
            seed: 1,
            redecode: true,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl ExperimentConfig {
    /// Parses a TOML document and applies `key=value` overrides, where each
    /// value is itself a TOML value (`trials=20`, `sweep=[2.5, 5.0]`).
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(config_err)?;
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| config_err(format!("override `{o}` is not key=value")))?;
            let doc: toml::Table = format!("v = {value}")
                .parse()
                .or_else(|_| format!("v = \"{value}\"").parse())
                .map_err(config_err)?;
            table.insert(key.trim().to_string(), doc["v"].clone());
        }
        let cfg: Self = table.try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n.is_power_of_two() || self.n < 2 {
            return Err(config_err(format!("n = {} must be a power of two >= 2", self.n)));
        }
        if self.hash_m == 0 {
            return Err(config_err("hash_m must be positive"));
        }
        self.construction().validate().map_err(config_err)?;
        let src = self.codec_source()?;
        self.schedule()?.validate_for(&src).map_err(config_err)?;
        if let Some(sz2) = self.sigma_z2 {
            self.source(sz2)?;
        }
        for &sz2 in &self.sweep {
            self.source(sz2)?;
        }
        let ell = self.ell()?;
        if !(1..=24).contains(&ell) {
            return Err(config_err(format!("ell = {ell} outside 1..=24")));
        }
        Ok(())
    }

    pub fn lattice(&self) -> Result<Lattice1D> {
        Lattice1D::new(self.n.trailing_zeros()).map_err(config_err)
    }

    pub fn codec_source(&self) -> Result<SourceParams> {
        SourceParams::codec(self.sigma_x2, self.delta).map_err(config_err)
    }

    /// Source with true noise `sigma_z2`.
    pub fn source(&self, sigma_z2: f64) -> Result<SourceParams> {
        SourceParams::new(self.sigma_x2, sigma_z2, self.delta).map_err(config_err)
    }

    pub fn schedule(&self) -> Result<GuessSchedule> {
        let s = match &self.schedule {
            Some(points) => GuessSchedule::from_points(points.clone()),
            None => make_schedule(self.sigma_lo, self.sigma_hi, self.omega),
        };
        let s = s.map_err(config_err)?;
        if s.rounds() == 0 {
            return Err(config_err("the schedule needs at least two guesses"));
        }
        Ok(s)
    }

    pub fn construction(&self) -> ConstructionConfig {
        ConstructionConfig {
            mc_samples: self.mc_samples,
            z_low: self.z_low,
            z_high: self.z_high,
        }
    }

    /// Explicit `ell`, or the smallest one covering six standard deviations
    /// of the largest part.
    pub fn ell(&self) -> Result<usize> {
        if let Some(ell) = self.ell {
            return Ok(ell);
        }
        let designs = part_designs(&self.schedule()?, &self.codec_source()?).map_err(config_err)?;
        let max_var = designs.iter().map(|d| d.var_part).fold(0.0, f64::max);
        Ok(choose_ell(&self.lattice()?, max_var))
    }

    /// Hex SHA-256 over everything that determines the code construction.
    pub fn digest(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Key<'a> {
            n: usize,
            ell: usize,
            sigma_x2: f64,
            delta: f64,
            schedule: &'a [f64],
            construction: ConstructionConfig,
            seed: u64,
        }
        let sched = self.schedule()?;
        let key = Key {
            n: self.n,
            ell: self.ell()?,
            sigma_x2: self.sigma_x2,
            delta: self.delta,
            schedule: &sched.sigma2,
            construction: self.construction(),
            seed: self.seed,
        };
        let bytes = serde_json::to_vec(&key)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}
