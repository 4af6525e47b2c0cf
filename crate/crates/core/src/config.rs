//! `.repograph/config.toml`: every tunable with its default.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::community::{DEFAULT_RESOLUTION, DEFAULT_SEED};
use crate::error::{Error, Result};
use crate::expand::ExpansionConfig;
use crate::extract::IndexConfig;

pub const DEFAULT_STALE_THRESHOLD: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommunityConfig {
    pub seed: u64,
    pub resolution: f64,
    /// Changed-file fraction since the last computation above which
    /// communities are recomputed.
    pub stale_threshold: f64,
}

impl Default for CommunityConfig {
    fn default() -> Self {
        CommunityConfig {
            seed: DEFAULT_SEED,
            resolution: DEFAULT_RESOLUTION,
            stale_threshold: DEFAULT_STALE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SidecarConfig {
    pub cap: usize,
    pub flow_max_len: usize,
}

impl Default for SidecarConfig {
    fn default() -> Self {
        SidecarConfig {
            cap: crate::sidecar::DEFAULT_CAP,
            flow_max_len: crate::sidecar::DEFAULT_FLOW_MAX_LEN,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepoConfig {
    pub index: IndexConfig,
    pub communities: CommunityConfig,
    pub sidecars: SidecarConfig,
    pub search: ExpansionConfig,
}

impl RepoConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path`, or returns the defaults when it does not exist.
    pub fn load_or_default(path: &Path) -> Result<Self> {
        match fs::read_to_string(path) {
            Ok(text) => Self::from_toml_str(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_files_keep_defaults() {
        let cfg = RepoConfig::from_toml_str(
            "[index]\ndrop_tests = true\nexclude = [\"vendor/**\"]\n\n[search]\nk = 5\n",
        )
        .unwrap();
        assert!(cfg.index.drop_tests);
        assert_eq!(cfg.index.exclude, vec!["vendor/**"]);
        assert_eq!(cfg.search.k, 5);
        assert_eq!(cfg.search.theta, 0.5);
        assert_eq!(cfg.communities.seed, 42);
        assert_eq!(cfg.communities.stale_threshold, 0.10);
        assert_eq!(cfg.sidecars.cap, 20);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RepoConfig::from_toml_str("[search]\nkk = 1\n"),
            Err(Error::Config(_))
        ));
    }
}
