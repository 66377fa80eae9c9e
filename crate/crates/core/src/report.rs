//! Ranked-output serialization and run summaries.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ann_index::{IndexMode, IndexParams};
use crate::cost_model::CostConfig;
use crate::error::{Error, Result};
use crate::isec_core::{ranking_order, PairScore, RankStats};

pub const CSV_HEADER: [&str; 11] = [
    "rank",
    "label_i",
    "label_j",
    "isec",
    "fmn",
    "dsn",
    "cm",
    "cp",
    "cmp",
    "flags",
    "config_fingerprint",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidParams(format!("unknown format {other:?}"))),
        }
    }
}

/// Hash of the cost configuration together with the index parameters.
pub fn config_fingerprint(cfg: &CostConfig, params: &IndexParams) -> String {
    let mut h = Sha256::new();
    h.update(cfg.to_json_string().as_bytes());
    h.update(serde_json::to_vec(params).expect("params serialize"));
    format!("{:x}", h.finalize())
}

/// Instrumentation for one ranking run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n: usize,
    pub k: usize,
    pub mode: Option<IndexMode>,
    pub morph_evaluations: u64,
    pub reverse_evaluations: u64,
    pub brute_force_pairs: u64,
    /// Brute-force pairs per alignment actually run.
    pub speedup_ratio: f64,
    pub unique_pairs: usize,
    /// Brute-force pairs per distinct scored pair; 1.0 when every pair was scored.
    pub dedup_ratio: f64,
    pub ann_node_visits: u64,
    pub ann_searches: u64,
    pub ann_build_visits: u64,
    /// Never serialized, so ranking files stay byte-identical across runs.
    #[serde(skip)]
    pub wall_clock: Option<Duration>,
}

pub fn run_summary(stats: &RankStats, wall_clock: Option<Duration>) -> RunSummary {
    let evals = stats.morph_evaluations + stats.reverse_evaluations;
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    RunSummary {
        n: stats.n,
        k: stats.k,
        mode: stats.mode,
        morph_evaluations: stats.morph_evaluations,
        reverse_evaluations: stats.reverse_evaluations,
        brute_force_pairs: stats.brute_force_pairs,
        speedup_ratio: ratio(stats.brute_force_pairs, evals),
        unique_pairs: stats.unique_pairs,
        dedup_ratio: ratio(stats.brute_force_pairs, stats.unique_pairs as u64),
        ann_node_visits: stats.index.distance_evals,
        ann_searches: stats.index.searches,
        ann_build_visits: stats.index.build_distance_evals,
        wall_clock,
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            Some(IndexMode::Hnsw) => "hnsw",
            Some(IndexMode::Exact) => "exact",
            None => "brute-force",
        };
        writeln!(f, "labels:               {}", self.n)?;
        writeln!(f, "mode:                 {mode} (K={})", self.k)?;
        writeln!(
            f,
            "alignments:           {} (+{} reverse)",
            self.morph_evaluations, self.reverse_evaluations
        )?;
        writeln!(f, "brute-force pairs:    {}", self.brute_force_pairs)?;
        writeln!(f, "evaluation ratio:     {:.2}x", self.speedup_ratio)?;
        writeln!(f, "unique pairs scored:  {}", self.unique_pairs)?;
        writeln!(
            f,
            "ann node visits:      {} over {} searches",
            self.ann_node_visits, self.ann_searches
        )?;
        if let Some(w) = self.wall_clock {
            writeln!(f, "wall clock:           {:.3}s", w.as_secs_f64())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub rank: usize,
    #[serde(flatten)]
    pub score: PairScore,
}

/// Everything written to a JSON ranking file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingDocument {
    pub config_fingerprint: String,
    pub config: crate::cost_model::CostFile,
    pub params: IndexParams,
    pub summary: RunSummary,
    pub pairs: Vec<RankedPair>,
}

/// A finished ranking plus the settings that produced it.
#[derive(Debug, Clone)]
pub struct RankingReport<'a> {
    pub scores: &'a [PairScore],
    pub cfg: &'a CostConfig,
    pub params: &'a IndexParams,
    pub summary: RunSummary,
}

impl RankingReport<'_> {
    fn top(&self, top_m: Option<usize>) -> Result<&[PairScore]> {
        if self
            .scores
            .windows(2)
            .any(|w| ranking_order(&w[0], &w[1]) == std::cmp::Ordering::Greater)
        {
            return Err(Error::Validation("scores are not in ranking order".into()));
        }
        let m = top_m.unwrap_or(self.scores.len()).min(self.scores.len());
        Ok(&self.scores[..m])
    }

    pub fn document(&self, top_m: Option<usize>) -> Result<RankingDocument> {
        let pairs = self
            .top(top_m)?
            .iter()
            .enumerate()
            .map(|(r, s)| RankedPair {
                rank: r + 1,
                score: s.clone(),
            })
            .collect();
        Ok(RankingDocument {
            config_fingerprint: config_fingerprint(self.cfg, self.params),
            config: self.cfg.to_file(),
            params: *self.params,
            summary: self.summary.clone(),
            pairs,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W, top_m: Option<usize>) -> Result<()> {
        let fp = config_fingerprint(self.cfg, self.params);
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for (r, s) in self.top(top_m)?.iter().enumerate() {
            w.write_record([
                (r + 1).to_string(),
                s.label_i.clone(),
                s.label_j.clone(),
                s.isec.to_string(),
                s.fmn.to_string(),
                s.dsn.to_string(),
                s.cm.to_string(),
                s.cp.to_string(),
                s.cmp.to_string(),
                s.flags_string(),
                fp.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut out: W, top_m: Option<usize>) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, &self.document(top_m)?)?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

/// Writes the ranking to `path`; `top_m = None` keeps every pair.
pub fn write_ranking(
    report: &RankingReport<'_>,
    path: impl AsRef<Path>,
    format: OutputFormat,
    top_m: Option<usize>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        OutputFormat::Csv => report.write_csv(&mut out, top_m)?,
        OutputFormat::Json => report.write_json(&mut out, top_m)?,
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json_file<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashEmbedder;
    use crate::isec_core::{rank_brute_force, rank_taxonomy, Ranking, Taxonomy};

    fn ranking(n: usize) -> (Ranking, CostConfig, IndexParams) {
        let labels: Vec<String> = (0..n).map(|i| format!("item{:03}x{}", i * 7 % 31, i)).collect();
        let tax = Taxonomy::from_labels(&labels, &HashEmbedder::default()).unwrap();
        let cfg = CostConfig::default();
        let params = IndexParams {
            k: 4,
            ..IndexParams::default()
        };
        (rank_taxonomy(&tax, &cfg, &params).unwrap(), cfg, params)
    }

    fn csv_of(report: &RankingReport<'_>, top_m: Option<usize>) -> String {
        let mut buf = Vec::new();
        report.write_csv(&mut buf, top_m).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_scores_give_header_only() {
        let cfg = CostConfig::default();
        let params = IndexParams::default();
        let report = RankingReport {
            scores: &[],
            cfg: &cfg,
            params: &params,
            summary: run_summary(&RankStats::default(), None),
        };
        assert_eq!(csv_of(&report, None), format!("{}\n", CSV_HEADER.join(",")));
    }

    #[test]
    fn top_m_truncates() {
        let labels: Vec<String> = (0..15).map(|i| format!("lbl{i}")).collect();
        let tax = Taxonomy::from_labels(&labels, &HashEmbedder::default()).unwrap();
        let cfg = CostConfig::default();
        let r = rank_brute_force(&tax, &cfg).unwrap();
        assert_eq!(r.scores.len(), 105);
        let params = IndexParams::default();
        let report = RankingReport {
            scores: &r.scores,
            cfg: &cfg,
            params: &params,
            summary: run_summary(&r.stats, None),
        };
        let text = csv_of(&report, Some(5));
        let ranks: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(ranks, ["1", "2", "3", "4", "5"]);
        let doc = report.document(Some(5)).unwrap();
        assert_eq!(doc.pairs.len(), 5);
        assert_eq!(doc.pairs[4].rank, 5);
    }

    #[test]
    fn unsorted_scores_rejected() {
        let (r, cfg, params) = ranking(10);
        let mut scores = r.scores.clone();
        scores.reverse();
        let report = RankingReport {
            scores: &scores,
            cfg: &cfg,
            params: &params,
            summary: run_summary(&r.stats, None),
        };
        assert!(report.document(None).is_err());
    }

    #[test]
    fn repeated_runs_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut files = Vec::new();
        for run in 0..2 {
            let (r, cfg, params) = ranking(40);
            let report = RankingReport {
                scores: &r.scores,
                cfg: &cfg,
                params: &params,
                summary: run_summary(&r.stats, Some(Duration::from_millis(run * 17))),
            };
            for format in [OutputFormat::Csv, OutputFormat::Json] {
                let p = dir.path().join(format!("{run}-{format:?}"));
                write_ranking(&report, &p, format, None).unwrap();
                files.push(std::fs::read(p).unwrap());
            }
        }
        assert_eq!(files[0], files[2]);
        assert_eq!(files[1], files[3]);
    }

    #[test]
    fn json_schema() {
        let (r, cfg, params) = ranking(12);
        let report = RankingReport {
            scores: &r.scores,
            cfg: &cfg,
            params: &params,
            summary: run_summary(&r.stats, Some(Duration::from_secs(1))),
        };
        let mut buf = Vec::new();
        report.write_json(&mut buf, Some(3)).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["config", "config_fingerprint", "pairs", "params", "summary"]);
        let pair = v["pairs"][0].as_object().unwrap();
        for key in ["rank", "label_i", "label_j", "isec", "fmn", "dsn", "cm", "cp", "cmp", "path", "flags"] {
            assert!(pair.contains_key(key), "missing {key}");
        }
        assert!(v["pairs"][0]["path"]["ops"].is_array());
        assert!(v["summary"].get("wall_clock").is_none());
        assert_eq!(v["config_fingerprint"], config_fingerprint(&cfg, &params));
        let back: RankingDocument = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back.pairs.len(), 3);
    }

    #[test]
    fn summary_arithmetic() {
        let stats = RankStats {
            n: 1000,
            k: 10,
            morph_evaluations: 10_000,
            brute_force_pairs: 499_500,
            ..RankStats::default()
        };
        let s = run_summary(&stats, None);
        assert!((s.speedup_ratio - 49.95).abs() < 1e-12);

        let tiny = RankStats {
            n: 2,
            k: 1,
            morph_evaluations: 2,
            brute_force_pairs: 1,
            unique_pairs: 1,
            ..RankStats::default()
        };
        let s = run_summary(&tiny, None);
        assert_eq!(s.speedup_ratio, 0.5);
        assert_eq!(s.dedup_ratio, 1.0);
    }

    #[test]
    fn unwritable_path() {
        let (r, cfg, params) = ranking(5);
        let report = RankingReport {
            scores: &r.scores,
            cfg: &cfg,
            params: &params,
            summary: run_summary(&r.stats, None),
        };
        let err = write_ranking(&report, "/nonexistent-dir/x.csv", OutputFormat::Csv, None).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn format_parse() {
        assert_eq!("JSON".parse::<OutputFormat>().unwrap(), OutputFormat::Json);
        assert!("xml".parse::<OutputFormat>().is_err());
    }
}
