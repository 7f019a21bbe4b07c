//! Report, selection and table files. Every file carries the run config and
//! the hashes of the artifacts it was computed from.

use std::fmt::Write as _;
use std::path::Path;

use demoqual_core::corpus::{Tier, TierLadder};
use demoqual_core::evalkit::{Histogram, SelectionConfusion, SeparabilityReport};
use demoqual_core::filterpipe::TrajectoryScoreReport;
use serde::{Deserialize, Serialize};

use crate::artifact::Lineage;
use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const SELECTION_FORMAT: &str = "demoqual-selection";
pub const REPORTS_FORMAT: &str = "demoqual-reports";

pub fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn json_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

#[derive(Serialize)]
struct ReportsHeader<'a> {
    format: &'a str,
    version: u32,
    run_config: &'a RunConfig,
    lineage: &'a Lineage,
}

#[derive(Serialize)]
struct ReportRecord<'a> {
    id: &'a str,
    good_fraction: f64,
    score_mean: f64,
    score_variance: f64,
    assignments: Vec<&'a str>,
    segment_scores: &'a [f64],
}

pub fn reports_jsonl(
    cfg: &RunConfig,
    lineage: &Lineage,
    ladder: &TierLadder,
    reports: &[TrajectoryScoreReport],
) -> String {
    let mut out = json_line(&ReportsHeader {
        format: REPORTS_FORMAT,
        version: 1,
        run_config: cfg,
        lineage,
    });
    out.push('\n');
    for r in reports {
        let rec = ReportRecord {
            id: &r.id,
            good_fraction: r.good_fraction,
            score_mean: r.score_mean,
            score_variance: r.score_variance,
            assignments: r.assignments.iter().map(|&t| ladder.name(t)).collect(),
            segment_scores: &r.segment_scores,
        };
        out.push_str(&json_line(&rec));
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selection {
    pub format: String,
    pub version: u32,
    pub run_config: RunConfig,
    /// Model hashes plus `candidates`, the hash of the scored id set.
    pub lineage: Lineage,
    pub top_k: usize,
    pub selected: Vec<String>,
}

impl Selection {
    pub fn new(cfg: &RunConfig, lineage: Lineage, selected: Vec<String>) -> Self {
        Selection {
            format: SELECTION_FORMAT.into(),
            version: 1,
            run_config: cfg.clone(),
            lineage,
            top_k: selected.len(),
            selected,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let s: Selection = serde_json::from_str(text).map_err(|e| CliError::Data(format!("selection: {e}")))?;
        if s.format != SELECTION_FORMAT || s.version != 1 {
            return Err(CliError::Data(format!("unsupported selection format {} v{}", s.format, s.version)));
        }
        if s.top_k != s.selected.len() {
            return Err(CliError::Data("selection top_k disagrees with its id list".into()));
        }
        Ok(s)
    }
}

/// `# run_config` and `# lineage` comment lines that open every table.
fn table_preamble(cfg: &RunConfig, lineage: &Lineage) -> String {
    format!("# run_config {}\n# lineage {}\n", json_line(cfg), json_line(lineage))
}

pub fn loss_tsv(cfg: &RunConfig, lineage: &Lineage, trace: &[f64]) -> String {
    let mut out = table_preamble(cfg, lineage);
    out.push_str("step\tloss\n");
    for (i, l) in trace.iter().enumerate() {
        writeln!(out, "{i}\t{l}").expect("string write");
    }
    out
}

pub fn separability_tsv(cfg: &RunConfig, lineage: &Lineage, ladder: &TierLadder, rep: &SeparabilityReport) -> String {
    let mut out = table_preamble(cfg, lineage);
    writeln!(out, "# normalized {}", rep.normalized).expect("string write");
    out.push_str("pair\tdistance\n");
    for p in &rep.pairs {
        writeln!(out, "{}>{}\t{}", ladder.name(p.better), ladder.name(p.worse), p.distance).expect("string write");
    }
    writeln!(out, "total\t{}", rep.total).expect("string write");
    out
}

pub fn confusion_tsv(cfg: &RunConfig, lineage: &Lineage, ladder: &TierLadder, c: &SelectionConfusion) -> String {
    let mut out = table_preamble(cfg, lineage);
    out.push_str("tier\tcount\tfraction\n");
    for (i, &n) in c.counts.iter().enumerate() {
        let frac = if c.top_k == 0 { 0.0 } else { n as f64 / c.top_k as f64 };
        writeln!(out, "{}\t{n}\t{frac}", ladder.name(Tier(i as u32))).expect("string write");
    }
    out
}

pub fn histogram_tsv(cfg: &RunConfig, lineage: &Lineage, ladder: &TierLadder, h: &Histogram) -> String {
    let mut out = table_preamble(cfg, lineage);
    out.push_str("bin\tlower\tupper");
    for name in ladder.names() {
        write!(out, "\t{name}").expect("string write");
    }
    out.push('\n');
    for b in 0..h.edges.len().saturating_sub(1) {
        write!(out, "{b}\t{}\t{}", h.edges[b], h.edges[b + 1]).expect("string write");
        for counts in &h.counts {
            write!(out, "\t{}", counts[b]).expect("string write");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_round_trip_and_checks() {
        let s = Selection::new(&RunConfig::default(), Lineage::new(), vec!["b".into(), "a".into()]);
        assert_eq!(Selection::parse(&s.to_json()).unwrap(), s);
        let mut bad = s.clone();
        bad.top_k = 3;
        assert!(matches!(Selection::parse(&bad.to_json()), Err(CliError::Data(_))));
    }

    #[test]
    fn confusion_table_rows() {
        let c = SelectionConfusion {
            counts: vec![1, 0, 3],
            top_k: 4,
        };
        let t = confusion_tsv(&RunConfig::default(), &Lineage::new(), &TierLadder::default_ladder(), &c);
        let rows: Vec<&str> = t.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows, ["tier\tcount\tfraction", "bad\t1\t0.25", "okay\t0\t0", "good\t3\t0.75"]);
    }
}
