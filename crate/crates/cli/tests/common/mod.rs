#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use olx_fixtures::{FailureMix, FixtureConfig, RetrievalMode};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_olx")
}

/// Bundled miniature dataset, regenerated from [`mini_config`] when
/// `OLX_BLESS=1`.
pub fn mini() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/mini")
}

pub fn mini_config() -> FixtureConfig {
    FixtureConfig {
        seed: 2024,
        scenes: 2,
        objects: 5,
        points_per_object: 20,
        size_jitter: 2,
        synonyms: 2,
        depictions: 1,
        visually_similar: 2,
        dim: 0,
        mix: FailureMix::EVEN,
        retrieval: RetrievalMode::Noisy,
    }
}

pub fn olx(args: &[&str]) -> Output {
    olx_env(args, &[])
}

pub fn olx_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(bin());
    c.args(args).env_remove("OLX_THREADS").env_remove("RUST_LOG");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("run olx")
}

pub fn ok(args: &[&str]) -> Output {
    let out = olx(args);
    assert!(
        out.status.success(),
        "olx {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}
