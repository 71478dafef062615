//! Provenance records embedded in every artifact.

use anyhow::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hash of the configuration that produced an artifact, plus the hashes of
/// everything it was derived from. `lineage[0]` is the root dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub lineage: Vec<String>,
    pub code_version: String,
}

impl Provenance {
    pub fn root(config_hash: &str) -> Self {
        Self { config_hash: config_hash.into(), lineage: vec![config_hash.into()], code_version: CODE_VERSION.into() }
    }

    /// Provenance of an artifact built with `config_hash` from `parents`.
    pub fn derived(config_hash: &str, parents: &[&Provenance]) -> Self {
        let mut lineage: Vec<String> = Vec::new();
        for p in parents {
            for h in &p.lineage {
                if !lineage.contains(h) {
                    lineage.push(h.clone());
                }
            }
        }
        if !lineage.iter().any(|h| h == config_hash) {
            lineage.push(config_hash.into());
        }
        Self { config_hash: config_hash.into(), lineage, code_version: CODE_VERSION.into() }
    }

    pub fn root_hash(&self) -> &str {
        self.lineage.first().map_or(self.config_hash.as_str(), String::as_str)
    }
}

/// SHA-256 of the canonical JSON form of a value, as lowercase hex.
pub fn hash_value<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)?;
    Ok(hex(&Sha256::digest(&json)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = hash_value(&serde_json::json!({"x": 1})).unwrap();
        assert_eq!(a, hash_value(&serde_json::json!({"x": 1})).unwrap());
        assert_ne!(a, hash_value(&serde_json::json!({"x": 2})).unwrap());
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn derived_keeps_root_first() {
        let root = Provenance::root("r");
        let fit = Provenance::derived("f", &[&root]);
        let run = Provenance::derived("s", &[&fit, &root]);
        assert_eq!(run.lineage, vec!["r", "f", "s"]);
        assert_eq!(run.root_hash(), "r");
    }
}
