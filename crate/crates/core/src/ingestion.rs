//! CSV ingestion: normalize labels, count frequencies, report collisions.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::embedding::{load_embeddings, HashEmbedder, MissingPolicy};
use crate::error::{Error, Result};
use crate::isec_core::Taxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationPolicy {
    pub trim: bool,
    pub case_fold: bool,
    pub nfc: bool,
    pub collapse_whitespace: bool,
}

impl Default for NormalizationPolicy {
    fn default() -> Self {
        NormalizationPolicy {
            trim: true,
            case_fold: false,
            nfc: true,
            collapse_whitespace: true,
        }
    }
}

impl NormalizationPolicy {
    pub fn normalize(&self, raw: &str) -> String {
        let mut s: String = if self.nfc {
            raw.nfc().collect()
        } else {
            raw.to_string()
        };
        if self.collapse_whitespace {
            let mut out = String::with_capacity(s.len());
            let mut in_ws = false;
            for c in s.chars() {
                if c.is_whitespace() {
                    if !in_ws {
                        out.push(' ');
                    }
                    in_ws = true;
                } else {
                    out.push(c);
                    in_ws = false;
                }
            }
            s = out;
        }
        if self.trim {
            s = s.trim().to_string();
        }
        if self.case_fold {
            s = s.to_lowercase();
            if self.nfc {
                s = s.nfc().collect();
            }
        }
        s
    }
}

/// Distinct raw spellings that collapse onto one normalized label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collision {
    pub normalized: String,
    pub raw_variants: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateReport {
    pub collisions: Vec<Collision>,
}

impl DuplicateReport {
    pub fn is_empty(&self) -> bool {
        self.collisions.is_empty()
    }

    /// The collision recorded for a normalized label, if any.
    pub fn find(&self, normalized: &str) -> Option<&Collision> {
        self.collisions.iter().find(|c| c.normalized == normalized)
    }
}

/// Ingested label counts, ready to be embedded into a [`Taxonomy`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Normalized labels with frequencies, sorted by label.
    pub entries: Vec<(String, u64)>,
    pub duplicates: DuplicateReport,
    pub policy: NormalizationPolicy,
    pub rows: usize,
    /// Rows whose label was empty after normalization.
    pub skipped_empty: usize,
}

impl Dataset {
    pub fn total_frequency(&self) -> u64 {
        self.entries.iter().map(|(_, f)| f).sum()
    }

    pub fn to_taxonomy(&self, embedder: &HashEmbedder) -> Result<Taxonomy> {
        Taxonomy::embed(self.entries.clone(), embedder)
    }

    /// Uses precomputed vectors from a TSV embedding file.
    pub fn to_taxonomy_with_embeddings(
        &self,
        path: impl AsRef<Path>,
        policy: MissingPolicy,
    ) -> Result<Taxonomy> {
        let labels: Vec<String> = self.entries.iter().map(|(l, _)| l.clone()).collect();
        let mut loaded = load_embeddings(path, &labels, policy)?;
        let entries = self
            .entries
            .iter()
            .map(|(l, f)| {
                let v = loaded.vectors.remove(l).expect("loader covers every label");
                (l.clone(), *f, v)
            })
            .collect();
        Taxonomy::new(entries)
    }
}

fn parse_frequency(cell: &str, row: usize) -> Result<u64> {
    let cell = cell.trim();
    let value = cell.parse::<u64>().ok().or_else(|| {
        cell.parse::<f64>()
            .ok()
            .filter(|v| v.fract() == 0.0 && *v >= 0.0 && *v <= u64::MAX as f64)
            .map(|v| v as u64)
    });
    match value {
        Some(v) if v > 0 => Ok(v),
        Some(_) => Err(Error::Ingestion {
            row,
            message: format!("frequency must be positive, got {cell:?}"),
        }),
        None => Err(Error::Ingestion {
            row,
            message: format!("non-numeric frequency {cell:?}"),
        }),
    }
}

/// Reads an RFC-4180 CSV with a header row from any reader.
pub fn read_dataset_from<R: Read>(
    reader: R,
    label_column: &str,
    freq_column: Option<&str>,
    policy: NormalizationPolicy,
) -> Result<Dataset> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let label_idx = find(label_column)?;
    let freq_idx = freq_column.map(find).transpose()?;

    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut variants: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut rows = 0;
    let mut skipped_empty = 0;
    for (n, record) in csv.records().enumerate() {
        let record = record?;
        // header is line 1
        let row = record.position().map_or(n + 2, |p| p.line() as usize);
        let raw = record.get(label_idx).unwrap_or_default();
        let freq = match freq_idx {
            Some(i) => parse_frequency(record.get(i).unwrap_or_default(), row)?,
            None => 1,
        };
        let label = policy.normalize(raw);
        if label.is_empty() {
            skipped_empty += 1;
            continue;
        }
        rows += 1;
        *counts.entry(label.clone()).or_insert(0) += freq;
        variants.entry(label).or_default().insert(raw.to_string());
    }
    if counts.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let collisions = variants
        .into_iter()
        .filter(|(_, raws)| raws.len() > 1)
        .map(|(normalized, raws)| Collision {
            normalized,
            raw_variants: raws.into_iter().collect(),
        })
        .collect();
    Ok(Dataset {
        entries: counts.into_iter().collect(),
        duplicates: DuplicateReport { collisions },
        policy,
        rows,
        skipped_empty,
    })
}

pub fn read_dataset(
    path: impl AsRef<Path>,
    label_column: &str,
    freq_column: Option<&str>,
    policy: NormalizationPolicy,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_from(std::io::BufReader::new(file), label_column, freq_column, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn read(text: &str, freq: Option<&str>, policy: NormalizationPolicy) -> Result<Dataset> {
        read_dataset_from(text.as_bytes(), "provincia", freq, policy)
    }

    #[test]
    fn counts_occurrences() {
        let ds = read("provincia\ncaba\ncaba\ncba\n", None, NormalizationPolicy::default()).unwrap();
        assert_eq!(ds.entries, vec![("caba".to_string(), 2), ("cba".to_string(), 1)]);
        assert_eq!(ds.total_frequency(), 3);
        assert_eq!(ds.rows, 3);
        assert!(ds.duplicates.is_empty());
    }

    #[test]
    fn case_fold_merges_and_reports() {
        let text = "provincia\nBizcocho achiras del Huila\nBizcocho achiras del huila\n";
        let plain = read(text, None, NormalizationPolicy::default()).unwrap();
        assert_eq!(plain.entries.len(), 2);
        let folded = read(
            text,
            None,
            NormalizationPolicy {
                case_fold: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(folded.entries, vec![("bizcocho achiras del huila".to_string(), 2)]);
        let c = folded.duplicates.find("bizcocho achiras del huila").unwrap();
        assert_eq!(c.raw_variants.len(), 2);
    }

    #[test]
    fn whitespace_variants_collide() {
        let ds = read("provincia\n\" caba\"\ncaba\n\"ca  ba\"\n", None, NormalizationPolicy::default()).unwrap();
        assert_eq!(ds.entries, vec![("ca ba".to_string(), 1), ("caba".to_string(), 2)]);
        assert_eq!(ds.duplicates.collisions.len(), 1);
    }

    #[test]
    fn frequency_column() {
        let text = "provincia,n\ncaba,10\ncba,5\ncaba,3\n";
        let ds = read(text, Some("n"), NormalizationPolicy::default()).unwrap();
        assert_eq!(ds.entries, vec![("caba".to_string(), 13), ("cba".to_string(), 5)]);
    }

    #[test]
    fn bad_frequency_names_row() {
        let text = "provincia,n\ncaba,10\ncba,abc\n";
        match read(text, Some("n"), NormalizationPolicy::default()) {
            Err(Error::Ingestion { row, message }) => {
                assert_eq!(row, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_empty() {
        assert!(matches!(
            read_dataset_from("x\n1\n".as_bytes(), "provincia", None, Default::default()),
            Err(Error::MissingColumn(c)) if c == "provincia"
        ));
        assert!(matches!(
            read("provincia\n", None, Default::default()),
            Err(Error::EmptyDataset)
        ));
        assert!(matches!(
            read("provincia,n\ncaba,1\n", Some("count"), Default::default()),
            Err(Error::MissingColumn(c)) if c == "count"
        ));
    }

    #[test]
    fn nfc_merges_decomposed_forms() {
        let text = "provincia\nCo\u{301}rdoba\nCórdoba\n";
        let ds = read(text, None, Default::default()).unwrap();
        assert_eq!(ds.entries, vec![("Córdoba".to_string(), 2)]);
    }

    proptest! {
        #[test]
        fn normalize_idempotent(raw in "\\PC{0,24}", fold in any::<bool>(), trim in any::<bool>(), collapse in any::<bool>()) {
            let p = NormalizationPolicy { trim, case_fold: fold, nfc: true, collapse_whitespace: collapse };
            let once = p.normalize(&raw);
            prop_assert_eq!(p.normalize(&once), once.clone());
        }

        #[test]
        fn frequencies_sum_to_rows(labels in proptest::collection::vec("[a-c]{1,3}", 1..40)) {
            let mut text = String::from("provincia\n");
            for l in &labels {
                text.push_str(l);
                text.push('\n');
            }
            let ds = read(&text, None, Default::default()).unwrap();
            prop_assert_eq!(ds.total_frequency(), labels.len() as u64);
        }
    }
}
