//! Line-oriented corpus files: one header record, then one trajectory per line.

use std::fmt::Write as _;
use std::path::Path;

use demoqual_core::corpus::{Corpus, TierLadder, Trajectory};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const CORPUS_FORMAT: &str = "demoqual-corpus";
pub const CORPUS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    obs_dim: usize,
    tiers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    run_config: Option<RunConfig>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    demonstrator: String,
    label: Option<String>,
    obs: Vec<Vec<f64>>,
}

/// Serialize a corpus, optionally echoing the config that produced it.
pub fn corpus_to_string(c: &Corpus, run_config: Option<&RunConfig>) -> String {
    let header = Header {
        format: CORPUS_FORMAT.into(),
        version: CORPUS_VERSION,
        obs_dim: c.obs_dim(),
        tiers: c.ladder().names().to_vec(),
        run_config: run_config.cloned(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for t in c.trajectories() {
        let rec = Record {
            id: t.id().into(),
            demonstrator: t.demonstrator_id().into(),
            label: t.label().map(|l| c.ladder().name(l).to_string()),
            obs: t.steps().map(<[f64]>::to_vec).collect(),
        };
        let line = serde_json::to_string(&rec).expect("finite observations serialize");
        writeln!(out, "{line}").expect("string write");
    }
    out
}

pub fn parse_corpus(text: &str) -> Result<Corpus> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, first)) = lines.next() else {
        return Ok(Corpus::empty(TierLadder::default_ladder()));
    };
    let header: Header =
        serde_json::from_str(first).map_err(|e| CliError::Data(format!("line 1: bad header: {e}")))?;
    if header.format != CORPUS_FORMAT || header.version != CORPUS_VERSION {
        return Err(CliError::Data(format!(
            "line 1: unsupported corpus format {} v{}",
            header.format, header.version
        )));
    }
    let ladder = TierLadder::new(header.tiers).map_err(|e| CliError::Data(format!("line 1: {e}")))?;
    let mut trajectories = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        let rec: Record = serde_json::from_str(line).map_err(|e| CliError::Data(format!("line {n}: {e}")))?;
        if let Some(step) = rec.obs.iter().position(|o| o.len() != header.obs_dim) {
            return Err(CliError::Data(format!(
                "line {n}: trajectory `{}` step {step} has {} values, obs_dim is {}",
                rec.id,
                rec.obs[step].len(),
                header.obs_dim
            )));
        }
        let label = match rec.label {
            Some(name) => Some(ladder.tier(&name).map_err(|e| CliError::Data(format!("line {n}: {e}")))?),
            None => None,
        };
        let t = Trajectory::new(rec.id, rec.demonstrator, label, &rec.obs)
            .map_err(|e| CliError::Data(format!("line {n}: {e}")))?;
        trajectories.push(t);
    }
    Ok(Corpus::new(header.obs_dim, ladder, trajectories)?)
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_corpus(&text).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn save_corpus(path: &Path, c: &Corpus, run_config: Option<&RunConfig>) -> Result<()> {
    std::fs::write(path, corpus_to_string(c, run_config)).map_err(|e| CliError::io(path, e))
}
