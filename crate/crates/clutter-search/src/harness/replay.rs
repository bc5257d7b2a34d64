//! Replayable episode records.
//!
//! A record stores everything needed to re-simulate an episode bit-exactly:
//! the seed, a digest of the episode config, and the per-step action, reward,
//! outcome, observation, and RNG cursor. Files are line-delimited JSON: a
//! header object carrying the full config, then one record object per
//! episode.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{Action, Env, EpisodeConfig, Outcome};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: Action,
    pub reward: f64,
    pub outcome: Outcome,
    pub observation: Vec<f64>,
    /// ChaCha word position of the episode RNG after the step, as decimal.
    pub rng_pos: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub agent: String,
    pub seed: u64,
    pub config_digest: String,
    pub outcome: Outcome,
    pub had_target: bool,
    pub steps: Vec<StepRecord>,
    /// Wall-clock episode time (env + agent), milliseconds. Not replayed.
    pub wall_ms: f64,
}

impl EpisodeRecord {
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }
}

/// Digest of the episode configuration pinning a record to the code/config
/// combination that produced it.
pub fn episode_digest(cfg: &EpisodeConfig) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_string(cfg).expect("config serializes");
    let mut h = Sha256::new();
    h.update(json.as_bytes());
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Re-simulate a record and compare every step bit-exactly.
pub fn replay(cfg: &EpisodeConfig, record: &EpisodeRecord) -> Result<()> {
    let digest = episode_digest(cfg);
    if digest != record.config_digest {
        return Err(Error::ReplayMismatch {
            step: 0,
            what: format!(
                "config digest {} != record {}",
                digest, record.config_digest
            ),
        });
    }
    let mut env = Env::reset(cfg, record.seed)?;
    for rec in &record.steps {
        let res = env.step(&rec.action).map_err(|e| Error::ReplayMismatch {
            step: rec.step,
            what: format!("env refused logged action: {e}"),
        })?;
        if res.reward.to_bits() != rec.reward.to_bits() {
            return Err(Error::ReplayMismatch {
                step: rec.step,
                what: format!("reward {} != logged {}", res.reward, rec.reward),
            });
        }
        if res.outcome != rec.outcome {
            return Err(Error::ReplayMismatch {
                step: rec.step,
                what: format!("outcome {:?} != logged {:?}", res.outcome, rec.outcome),
            });
        }
        if res.observation.0.len() != rec.observation.len()
            || res
                .observation
                .0
                .iter()
                .zip(rec.observation.iter())
                .any(|(a, b)| a.to_bits() != b.to_bits())
        {
            return Err(Error::ReplayMismatch {
                step: rec.step,
                what: "observation diverged".into(),
            });
        }
        let pos = env.rng_word_pos().to_string();
        if pos != rec.rng_pos {
            return Err(Error::ReplayMismatch {
                step: rec.step,
                what: format!("rng cursor {pos} != logged {}", rec.rng_pos),
            });
        }
    }
    if env.outcome() != record.outcome {
        return Err(Error::ReplayMismatch {
            step: record.steps.len(),
            what: format!(
                "final outcome {:?} != logged {:?}",
                env.outcome(),
                record.outcome
            ),
        });
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct FileHeader {
    format: String,
    config_digest: String,
    config: EpisodeConfig,
}

/// Write a header line plus one JSON line per episode record.
pub fn write_records(path: &Path, cfg: &EpisodeConfig, records: &[EpisodeRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header = FileHeader {
        format: "clutter-search-records-v1".into(),
        config_digest: episode_digest(cfg),
        config: cfg.clone(),
    };
    writeln!(
        f,
        "{}",
        serde_json::to_string(&header).expect("header serializes")
    )?;
    for r in records {
        writeln!(
            f,
            "{}",
            serde_json::to_string(r).expect("record serializes")
        )?;
    }
    Ok(())
}

pub fn read_records(path: &Path) -> Result<(EpisodeConfig, Vec<EpisodeRecord>)> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines();
    let header_line = lines.next().ok_or_else(|| Error::Format {
        format: "records file",
        detail: "missing header".into(),
    })??;
    let header: FileHeader = serde_json::from_str(&header_line).map_err(|e| Error::Format {
        format: "records file",
        detail: format!("bad header: {e}"),
    })?;
    if header.format != "clutter-search-records-v1" {
        return Err(Error::Format {
            format: "records file",
            detail: "unknown format tag".into(),
        });
    }
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| Error::Format {
            format: "records file",
            detail: format!("bad record: {e}"),
        })?);
    }
    Ok((header.config, records))
}
