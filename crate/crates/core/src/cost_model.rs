//! Per-character operation costs and the scalar scoring parameters.
//!
//! A [`CostConfig`] holds four override tables (substitution, insertion,
//! deletion, transposition) on top of a default baseline cost, plus the
//! penalty scalar `k` and the semantic/morphological balance `alpha`. With no
//! overrides and a baseline of 1.0 every lookup is 1.0 and alignment reduces
//! to the classical unit-cost Damerau-Levenshtein distance.
//!
//! The on-disk format is JSON:
//!
//! ```json
//! {"default_cost": 1.0, "k": 0.0, "alpha": 0.5, "symmetric_subs": true,
//!  "substitutions": [{"from": "G", "to": "T", "cost": 0.35}],
//!  "insertions": [{"char": "a", "cost": 1.0}],
//!  "deletions": [{"char": " ", "cost": 0.1}],
//!  "transpositions": [{"a": "A", "b": "G", "cost": 0.3}]}
//! ```
//!
//! Every section is optional.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_COST: f64 = 1.0;
pub const DEFAULT_K: f64 = 0.0;
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct CostConfig {
    sub: HashMap<(char, char), f64>,
    ins: HashMap<char, f64>,
    del: HashMap<char, f64>,
    // keyed by (min, max)
    trans: HashMap<(char, char), f64>,
    default_cost: f64,
    symmetric_subs: bool,
    k: f64,
    alpha: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            sub: HashMap::new(),
            ins: HashMap::new(),
            del: HashMap::new(),
            trans: HashMap::new(),
            default_cost: DEFAULT_COST,
            symmetric_subs: true,
            k: DEFAULT_K,
            alpha: DEFAULT_ALPHA,
        }
    }
}

fn unordered(a: char, b: char) -> (char, char) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn check_cost(what: &str, cost: f64) -> Result<()> {
    if !cost.is_finite() || cost < 0.0 {
        return Err(Error::Validation(format!(
            "{what} cost must be a finite non-negative number, got {cost}"
        )));
    }
    Ok(())
}

impl CostConfig {
    pub fn new(default_cost: f64, k: f64, alpha: f64, symmetric_subs: bool) -> Result<Self> {
        let mut cfg = CostConfig {
            symmetric_subs,
            ..CostConfig::default()
        };
        check_cost("default", default_cost)?;
        cfg.default_cost = default_cost;
        cfg.set_k(k)?;
        cfg.set_alpha(alpha)?;
        Ok(cfg)
    }

    pub fn default_cost(&self) -> f64 {
        self.default_cost
    }

    pub fn symmetric_subs(&self) -> bool {
        self.symmetric_subs
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn set_k(&mut self, k: f64) -> Result<()> {
        if !k.is_finite() || k < 0.0 {
            return Err(Error::Validation(format!("k must be >= 0, got {k}")));
        }
        self.k = k;
        Ok(())
    }

    pub fn set_alpha(&mut self, alpha: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Validation(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        self.alpha = alpha;
        Ok(())
    }

    /// Adds (or replaces) a substitution override `from -> to`. With mirrored
    /// substitutions this also replaces any `to -> from` entry.
    pub fn set_sub(&mut self, from: char, to: char, cost: f64) -> Result<()> {
        if from == to {
            return Err(Error::Validation(format!(
                "substitution override needs two distinct characters, got {from:?}"
            )));
        }
        check_cost("substitution", cost)?;
        if self.symmetric_subs {
            self.sub.remove(&(to, from));
        }
        self.sub.insert((from, to), cost);
        Ok(())
    }

    pub fn set_ins(&mut self, c: char, cost: f64) -> Result<()> {
        check_cost("insertion", cost)?;
        self.ins.insert(c, cost);
        Ok(())
    }

    pub fn set_del(&mut self, c: char, cost: f64) -> Result<()> {
        check_cost("deletion", cost)?;
        self.del.insert(c, cost);
        Ok(())
    }

    pub fn set_trans(&mut self, a: char, b: char, cost: f64) -> Result<()> {
        if a == b {
            return Err(Error::Validation(format!(
                "transposition override needs two distinct characters, got {a:?}"
            )));
        }
        check_cost("transposition", cost)?;
        self.trans.insert(unordered(a, b), cost);
        Ok(())
    }

    /// Cost of replacing `a` with `b`. Identical characters cost nothing.
    pub fn lookup_sub(&self, a: char, b: char) -> f64 {
        if a == b {
            return 0.0;
        }
        if let Some(&c) = self.sub.get(&(a, b)) {
            return c;
        }
        if self.symmetric_subs {
            if let Some(&c) = self.sub.get(&(b, a)) {
                return c;
            }
        }
        self.default_cost
    }

    pub fn lookup_ins(&self, a: char) -> f64 {
        self.ins.get(&a).copied().unwrap_or(self.default_cost)
    }

    pub fn lookup_del(&self, a: char) -> f64 {
        self.del.get(&a).copied().unwrap_or(self.default_cost)
    }

    /// Cost of swapping adjacent `a` and `b`; orientation does not matter.
    pub fn lookup_trans(&self, a: char, b: char) -> f64 {
        self.trans
            .get(&unordered(a, b))
            .copied()
            .unwrap_or(self.default_cost)
    }

    /// True when alignment cost is independent of argument order: substitution
    /// lookups are mirrored and every character inserts and deletes at the
    /// same price.
    pub fn is_symmetric(&self) -> bool {
        let subs = self
            .sub
            .keys()
            .all(|&(a, b)| self.lookup_sub(a, b) == self.lookup_sub(b, a));
        let chars = self.ins.keys().chain(self.del.keys());
        subs && chars
            .into_iter()
            .all(|&ch| self.lookup_ins(ch) == self.lookup_del(ch))
    }

    /// Substitution overrides as `(from, to, cost)`, sorted.
    pub fn substitution_overrides(&self) -> Vec<(char, char, f64)> {
        let mut v: Vec<_> = self.sub.iter().map(|(&(a, b), &c)| (a, b, c)).collect();
        v.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        v
    }

    /// Largest cost any single edit event can have under this configuration.
    pub fn max_single_cost(&self) -> f64 {
        self.sub
            .values()
            .chain(self.ins.values())
            .chain(self.del.values())
            .chain(self.trans.values())
            .fold(self.default_cost, |m, &c| m.max(c))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: CostFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.try_into()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Canonical JSON: sections sorted by key so equal configs serialize equally.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("cost file serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string() + "\n").map_err(|e| Error::io(path, e))
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_json_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_file(&self) -> CostFile {
        let subs: BTreeMap<_, _> = self.sub.iter().collect();
        let ins: BTreeMap<_, _> = self.ins.iter().collect();
        let del: BTreeMap<_, _> = self.del.iter().collect();
        let trans: BTreeMap<_, _> = self.trans.iter().collect();
        CostFile {
            default_cost: Some(self.default_cost),
            k: Some(self.k),
            alpha: Some(self.alpha),
            symmetric_subs: Some(self.symmetric_subs),
            substitutions: subs
                .into_iter()
                .map(|(&(from, to), &cost)| SubEntry {
                    from: from.to_string(),
                    to: to.to_string(),
                    cost,
                })
                .collect(),
            insertions: ins
                .into_iter()
                .map(|(&c, &cost)| CharEntry {
                    ch: c.to_string(),
                    cost,
                })
                .collect(),
            deletions: del
                .into_iter()
                .map(|(&c, &cost)| CharEntry {
                    ch: c.to_string(),
                    cost,
                })
                .collect(),
            transpositions: trans
                .into_iter()
                .map(|(&(a, b), &cost)| TransEntry {
                    a: a.to_string(),
                    b: b.to_string(),
                    cost,
                })
                .collect(),
        }
    }
}

/// Serialized form of [`CostConfig`].
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CostFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetric_subs: Option<bool>,
    #[serde(default)]
    pub substitutions: Vec<SubEntry>,
    #[serde(default)]
    pub insertions: Vec<CharEntry>,
    #[serde(default)]
    pub deletions: Vec<CharEntry>,
    #[serde(default)]
    pub transpositions: Vec<TransEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SubEntry {
    pub from: String,
    pub to: String,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CharEntry {
    #[serde(rename = "char")]
    pub ch: String,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TransEntry {
    pub a: String,
    pub b: String,
    pub cost: f64,
}

fn single_char(section: &str, s: &str) -> Result<char> {
    let mut it = s.chars();
    match (it.next(), it.next()) {
        (Some(c), None) => Ok(c),
        _ => Err(Error::Validation(format!(
            "{section}: expected exactly one character, got {s:?}"
        ))),
    }
}

impl TryFrom<CostFile> for CostConfig {
    type Error = Error;

    fn try_from(file: CostFile) -> Result<Self> {
        let mut cfg = CostConfig::new(
            file.default_cost.unwrap_or(DEFAULT_COST),
            file.k.unwrap_or(DEFAULT_K),
            file.alpha.unwrap_or(DEFAULT_ALPHA),
            file.symmetric_subs.unwrap_or(true),
        )?;

        for e in &file.substitutions {
            let (a, b) = (
                single_char("substitutions", &e.from)?,
                single_char("substitutions", &e.to)?,
            );
            let clash = cfg.sub.contains_key(&(a, b))
                || (cfg.symmetric_subs && cfg.sub.contains_key(&(b, a)));
            if clash {
                return Err(Error::Validation(format!(
                    "duplicate substitution entry {a:?} -> {b:?}"
                )));
            }
            cfg.set_sub(a, b, e.cost)?;
        }
        for e in &file.insertions {
            let c = single_char("insertions", &e.ch)?;
            if cfg.ins.contains_key(&c) {
                return Err(Error::Validation(format!("duplicate insertion entry {c:?}")));
            }
            cfg.set_ins(c, e.cost)?;
        }
        for e in &file.deletions {
            let c = single_char("deletions", &e.ch)?;
            if cfg.del.contains_key(&c) {
                return Err(Error::Validation(format!("duplicate deletion entry {c:?}")));
            }
            cfg.set_del(c, e.cost)?;
        }
        for e in &file.transpositions {
            let (a, b) = (
                single_char("transpositions", &e.a)?,
                single_char("transpositions", &e.b)?,
            );
            if cfg.trans.contains_key(&unordered(a, b)) {
                return Err(Error::Validation(format!(
                    "duplicate transposition entry {a:?} <-> {b:?}"
                )));
            }
            cfg.set_trans(a, b, e.cost)?;
        }
        Ok(cfg)
    }
}
