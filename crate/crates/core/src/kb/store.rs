//! On-disk layout: `samples.jsonl` (one sample per line, insertion order)
//! plus `manifest.json` with dimension, domain counts and a content digest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::KnowledgeBase;
use crate::error::{Error, Result};
use crate::types::KnowledgeSample;

pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "rttc-kb/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbManifest {
    pub format: String,
    pub dim: usize,
    pub total: usize,
    pub domains: BTreeMap<String, usize>,
    /// Hex SHA-256 of `samples.jsonl`.
    pub digest: String,
    /// Describes the embedder the prompts were encoded with.
    pub embedder: String,
}

impl KnowledgeBase {
    /// Writes the base to `dir`, creating it if needed.
    pub fn save(&self, dir: &Path, embedder: &str) -> Result<KbManifest> {
        fs::create_dir_all(dir)?;
        let mut hasher = Sha256::new();
        let mut out = BufWriter::new(fs::File::create(dir.join(SAMPLES_FILE))?);
        for s in &self.samples {
            let mut line = serde_json::to_vec(s)?;
            line.push(b'\n');
            hasher.update(&line);
            out.write_all(&line)?;
        }
        out.flush()?;
        let manifest = KbManifest {
            format: FORMAT.into(),
            dim: self.dim,
            total: self.len(),
            domains: self.domain_counts.clone(),
            digest: hex::encode(hasher.finalize()),
            embedder: embedder.into(),
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(manifest)
    }

    /// Loads a base written by [`KnowledgeBase::save`], verifying the digest
    /// and the manifest counts.
    pub fn load(dir: &Path) -> Result<(Self, KbManifest)> {
        let manifest: KbManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
        if manifest.format != FORMAT {
            return Err(Error::Parse(format!("unsupported knowledge base format {}", manifest.format)));
        }
        let mut kb = KnowledgeBase::new(manifest.dim);
        let mut hasher = Sha256::new();
        let reader = BufReader::new(fs::File::open(dir.join(SAMPLES_FILE))?);
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
            let sample: KnowledgeSample = serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("{SAMPLES_FILE}:{}: {e}", lineno + 1)))?;
            kb.push(sample)?;
        }
        if hex::encode(hasher.finalize()) != manifest.digest {
            return Err(Error::Parse("samples digest does not match manifest".into()));
        }
        if kb.len() != manifest.total || kb.domain_counts != manifest.domains {
            return Err(Error::Parse("manifest counts do not match samples".into()));
        }
        Ok((kb, manifest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::RawRecord;
    use crate::model::{Embedder, HashEmbedder};

    fn base() -> KnowledgeBase {
        let mut kb = KnowledgeBase::new(64);
        kb.ingest(
            vec![
                RawRecord::new("sum of angles in a triangle", "180 degrees", "math"),
                RawRecord::new("what does ATC code A10 cover", "drugs used in diabetes", "medical"),
                RawRecord::new("fizzbuzz in rust", "for i in 1..=100 {..}", "code"),
            ],
            &HashEmbedder::default(),
        )
        .unwrap();
        kb
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let kb = base();
        let m = kb.save(dir.path(), "feature-hash").unwrap();
        assert_eq!(m.total, 3);
        let (back, m2) = KnowledgeBase::load(dir.path()).unwrap();
        assert_eq!(m, m2);
        assert_eq!(back.samples(), kb.samples());
        let q = HashEmbedder::default().embed("angles of a triangle").unwrap();
        assert_eq!(back.retrieve_top_k(&q, 2).unwrap(), kb.retrieve_top_k(&q, 2).unwrap());
    }

    #[test]
    fn tampered_samples_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        base().save(dir.path(), "feature-hash").unwrap();
        let path = dir.path().join(SAMPLES_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("180 degrees", "181 degrees");
        fs::write(&path, text).unwrap();
        assert!(matches!(KnowledgeBase::load(dir.path()), Err(Error::Parse(_))));
    }
}
