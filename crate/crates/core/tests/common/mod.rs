#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use polarwz::harness::{CodeCache, ExperimentConfig};
use polarwz::protocol::SessionCodes;

pub const MATCHED: &str = include_str!("../../../../configs/matched.toml");
pub const SWEEP: &str = include_str!("../../../../configs/sweep.toml");

pub fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text, &[]).expect("bundled configs are valid")
}

/// Codes for `cfg`, built once and kept under the cargo temp dir across
/// test binaries.
pub fn codes(name: &str, cfg: &ExperimentConfig) -> SessionCodes {
    let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(format!("{name}.codes.json"));
    CodeCache::load_or_build(&path, cfg)
        .and_then(|c| c.session_codes(cfg))
        .expect("code construction")
}

pub fn matched() -> &'static (ExperimentConfig, SessionCodes) {
    static CELL: OnceLock<(ExperimentConfig, SessionCodes)> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = config(MATCHED);
        let codes = codes("matched", &cfg);
        (cfg, codes)
    })
}

pub fn sweep() -> &'static (ExperimentConfig, SessionCodes) {
    static CELL: OnceLock<(ExperimentConfig, SessionCodes)> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = config(SWEEP);
        let codes = codes("sweep", &cfg);
        (cfg, codes)
    })
}
