use crate::{Error, Real, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

/// One row of the per-iteration metrics stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: u64,
    pub episodes: usize,
    pub mean_return: Real,
    pub cvar_half_return: Real,
    pub risk_events_per_episode: Real,
    /// Mean episode length over the horizon (time-to-fall analog).
    pub ttf: Real,
    pub critic_loss: Real,
    pub policy_loss: Real,
    pub entropy: Real,
    pub iqr_mean: Real,
}

const SUMMARY_COLUMNS: [&str; 10] = [
    "iteration",
    "episodes",
    "mean_return",
    "cvar_half_return",
    "risk_events_per_episode",
    "ttf",
    "critic_loss",
    "policy_loss",
    "entropy",
    "iqr_mean",
];

/// Tab-separated summary table (header plus one line per record).
pub fn summary_table(records: &[MetricsRecord]) -> String {
    let mut out = SUMMARY_COLUMNS.join("\t");
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.iteration,
            r.episodes,
            r.mean_return,
            r.cvar_half_return,
            r.risk_events_per_episode,
            r.ttf,
            r.critic_loss,
            r.policy_loss,
            r.entropy,
            r.iqr_mean
        ));
    }
    out
}

/// Write `metrics.jsonl` (one JSON record per line) and `summary.tsv` into a
/// run directory named by timestamp and seed. Returns the directory.
pub fn export_metrics(records: &[MetricsRecord], out_root: &Path, seed: u64) -> Result<PathBuf> {
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let dir = out_root.join(format!("run-{stamp}-seed{seed}"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;

    let jsonl = dir.join("metrics.jsonl");
    let mut f = std::fs::File::create(&jsonl)
        .map_err(|e| Error::Io(format!("{}: {e}", jsonl.display())))?;
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Io(format!("metrics encode: {e}")))?;
        writeln!(f, "{line}").map_err(|e| Error::Io(format!("{}: {e}", jsonl.display())))?;
    }

    let tsv = dir.join("summary.tsv");
    std::fs::write(&tsv, summary_table(records))
        .map_err(|e| Error::Io(format!("{}: {e}", tsv.display())))?;
    Ok(dir)
}

/// Read a `metrics.jsonl` file back into records.
pub fn read_records(path: &Path) -> Result<Vec<MetricsRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Io(format!("{}: bad record: {e}", path.display())))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: u64) -> MetricsRecord {
        MetricsRecord {
            iteration: i,
            episodes: 3,
            mean_return: 1.5 * i as Real,
            cvar_half_return: 0.5,
            risk_events_per_episode: 0.25,
            ttf: 0.9,
            critic_loss: 0.1,
            policy_loss: -0.05,
            entropy: 1.2,
            iqr_mean: 0.3,
        }
    }

    #[test]
    fn export_and_round_trip() {
        let tmp = std::env::temp_dir().join(format!("riskgrad-metrics-{}", std::process::id()));
        let records: Vec<MetricsRecord> = (1..=5).map(record).collect();
        let dir = export_metrics(&records, &tmp, 7).unwrap();
        let back = read_records(&dir.join("metrics.jsonl")).unwrap();
        assert_eq!(back.len(), records.len());
        // Reloading reproduces the summary table exactly.
        assert_eq!(summary_table(&back), summary_table(&records));
        std::fs::remove_dir_all(&tmp).ok();
    }

    #[test]
    fn empty_run_writes_header_only() {
        let tmp = std::env::temp_dir().join(format!("riskgrad-metrics-e-{}", std::process::id()));
        let dir = export_metrics(&[], &tmp, 0).unwrap();
        let text = std::fs::read_to_string(dir.join("summary.tsv")).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("iteration\t"));
        let back = read_records(&dir.join("metrics.jsonl")).unwrap();
        assert!(back.is_empty());
        std::fs::remove_dir_all(&tmp).ok();
    }
}
