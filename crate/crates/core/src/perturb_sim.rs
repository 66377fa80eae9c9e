//! Monte-Carlo typo simulation.
//!
//! Each trial takes a taxonomy label, applies sampled keyboard-style edit
//! events (adjacent-key or random substitution, deletion, insertion, adjacent
//! transposition) and hands the result to a nearest-label corrector that only
//! sees weighted edit distances. The outcome is `recovered` when the source
//! wins clearly, `misassigned` when another label wins clearly, and
//! `indeterminate` when the two best candidates are within the margin `delta`.
//! Per-pair confusion rates are then rank-correlated with the pair scores.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann_index::IndexParams;
use crate::cost_model::CostConfig;
use crate::edit_engine::distance_chars;
use crate::error::{Error, Result};
use crate::isec_core::{rank_taxonomy, PairScore, Taxonomy};

const TIE_EPS: f64 = 1e-9;
const BOOTSTRAP_STREAM: u64 = 0xb007;

/// Shipped QWERTY adjacency, in cost-override JSON form.
pub const QWERTY_JSON: &str = include_str!("../data/qwerty.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TypoKind {
    AdjacentSubstitution,
    RandomSubstitution,
    Deletion,
    Insertion,
    Transposition,
}

/// Relative event probabilities; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventWeights {
    pub adjacent_substitution: f64,
    pub random_substitution: f64,
    pub deletion: f64,
    pub insertion: f64,
    pub transposition: f64,
}

impl Default for EventWeights {
    fn default() -> Self {
        EventWeights {
            adjacent_substitution: 0.3,
            random_substitution: 0.1,
            deletion: 0.25,
            insertion: 0.15,
            transposition: 0.2,
        }
    }
}

impl EventWeights {
    fn as_array(&self) -> [(TypoKind, f64); 5] {
        [
            (TypoKind::AdjacentSubstitution, self.adjacent_substitution),
            (TypoKind::RandomSubstitution, self.random_substitution),
            (TypoKind::Deletion, self.deletion),
            (TypoKind::Insertion, self.insertion),
            (TypoKind::Transposition, self.transposition),
        ]
    }

    fn validate(&self) -> Result<()> {
        let arr = self.as_array();
        if arr.iter().any(|(_, p)| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParams("event probabilities must be >= 0".into()));
        }
        let total: f64 = arr.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "event probabilities must sum to 1, got {total}"
            )));
        }
        Ok(())
    }
}

/// How many events hit one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventCount {
    Fixed(usize),
    /// Uniform over `min..=max`.
    Uniform { min: usize, max: usize },
}

impl Default for EventCount {
    fn default() -> Self {
        EventCount::Fixed(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypoModel {
    #[serde(default)]
    pub weights: EventWeights,
    /// Symmetric key adjacency; defaults to QWERTY.
    #[serde(default = "qwerty_adjacency")]
    pub adjacency: BTreeMap<char, BTreeSet<char>>,
    #[serde(default)]
    pub events_per_label: EventCount,
    /// Characters drawn for random substitutions and insertions.
    #[serde(default = "default_alphabet")]
    pub alphabet: String,
    #[serde(default)]
    pub seed: u64,
}

fn default_alphabet() -> String {
    "abcdefghijklmnopqrstuvwxyz0123456789".to_string()
}

/// Adjacency implied by substitution overrides cheaper than the default cost.
pub fn adjacency_from_config(cfg: &CostConfig) -> BTreeMap<char, BTreeSet<char>> {
    let mut adj: BTreeMap<char, BTreeSet<char>> = BTreeMap::new();
    for (a, b, cost) in cfg.substitution_overrides() {
        if cost < cfg.default_cost() {
            adj.entry(a).or_default().insert(b);
            adj.entry(b).or_default().insert(a);
        }
    }
    adj
}

pub fn qwerty_adjacency() -> BTreeMap<char, BTreeSet<char>> {
    let cfg = CostConfig::from_json_str(QWERTY_JSON).expect("bundled qwerty.json is valid");
    adjacency_from_config(&cfg)
}

impl Default for TypoModel {
    fn default() -> Self {
        TypoModel {
            weights: EventWeights::default(),
            adjacency: qwerty_adjacency(),
            events_per_label: EventCount::default(),
            alphabet: default_alphabet(),
            seed: 0,
        }
    }
}

impl TypoModel {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        for (a, ns) in &self.adjacency {
            for b in ns {
                if !self.adjacency.get(b).is_some_and(|back| back.contains(a)) {
                    return Err(Error::InvalidParams(format!(
                        "adjacency map is not symmetric: {a:?} -> {b:?}"
                    )));
                }
            }
        }
        if self.alphabet.is_empty() {
            return Err(Error::InvalidParams("typo alphabet is empty".into()));
        }
        if let EventCount::Uniform { min, max } = self.events_per_label {
            if min > max {
                return Err(Error::InvalidParams(format!("event range {min}..={max} is empty")));
            }
        }
        Ok(())
    }

    fn neighbors(&self, c: char) -> Vec<char> {
        if let Some(ns) = self.adjacency.get(&c) {
            return ns.iter().copied().collect();
        }
        // try the other case, then restore it
        let flipped = if c.is_uppercase() {
            c.to_lowercase().next()
        } else {
            c.to_uppercase().next()
        };
        match flipped.and_then(|f| self.adjacency.get(&f)) {
            Some(ns) => ns
                .iter()
                .map(|&n| {
                    if c.is_uppercase() {
                        n.to_uppercase().next().unwrap_or(n)
                    } else {
                        n.to_lowercase().next().unwrap_or(n)
                    }
                })
                .collect(),
            None => Vec::new(),
        }
    }

    fn random_char(&self, like: Option<char>, rng: &mut impl Rng) -> char {
        let alphabet: Vec<char> = self.alphabet.chars().collect();
        let c = alphabet[rng.gen_range(0..alphabet.len())];
        match like {
            Some(l) if l.is_uppercase() => c.to_uppercase().next().unwrap_or(c),
            _ => c,
        }
    }
}

/// One applied edit; `pos` indexes the label as it was before the event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypoEvent {
    pub kind: TypoKind,
    pub pos: usize,
    /// Replacement or inserted character.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ch: Option<char>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub text: String,
    pub events: Vec<TypoEvent>,
}

/// Applies a single event. Out-of-range positions leave the label unchanged.
pub fn apply_event(label: &str, event: &TypoEvent) -> String {
    let mut chars: Vec<char> = label.chars().collect();
    let p = event.pos;
    match event.kind {
        TypoKind::AdjacentSubstitution | TypoKind::RandomSubstitution => {
            if let (Some(slot), Some(c)) = (chars.get_mut(p), event.ch) {
                *slot = c;
            }
        }
        TypoKind::Deletion => {
            if p < chars.len() {
                chars.remove(p);
            }
        }
        TypoKind::Insertion => {
            if let Some(c) = event.ch {
                chars.insert(p.min(chars.len()), c);
            }
        }
        TypoKind::Transposition => {
            if p + 1 < chars.len() {
                chars.swap(p, p + 1);
            }
        }
    }
    chars.into_iter().collect()
}

fn sample_kind(weights: &EventWeights, rng: &mut impl Rng) -> TypoKind {
    let arr = weights.as_array();
    let mut u: f64 = rng.gen();
    for (kind, p) in arr {
        if u < p {
            return kind;
        }
        u -= p;
    }
    arr.iter()
        .rev()
        .find(|(_, p)| *p > 0.0)
        .map_or(TypoKind::Deletion, |(k, _)| *k)
}

fn sample_event(label: &[char], model: &TypoModel, rng: &mut impl Rng) -> Option<TypoEvent> {
    let n = label.len();
    let kind = sample_kind(&model.weights, rng);
    match kind {
        TypoKind::AdjacentSubstitution => {
            let options: Vec<(usize, Vec<char>)> = (0..n)
                .map(|i| (i, model.neighbors(label[i])))
                .filter(|(_, ns)| !ns.is_empty())
                .collect();
            if options.is_empty() {
                return random_substitution(label, model, rng);
            }
            let (pos, ns) = &options[rng.gen_range(0..options.len())];
            Some(TypoEvent {
                kind,
                pos: *pos,
                ch: Some(ns[rng.gen_range(0..ns.len())]),
            })
        }
        TypoKind::RandomSubstitution => random_substitution(label, model, rng),
        TypoKind::Deletion => (n > 0).then(|| TypoEvent {
            kind,
            pos: rng.gen_range(0..n),
            ch: None,
        }),
        TypoKind::Insertion => {
            let pos = rng.gen_range(0..=n);
            let like = label.get(pos).or_else(|| label.last()).copied();
            Some(TypoEvent {
                kind,
                pos,
                ch: Some(model.random_char(like, rng)),
            })
        }
        TypoKind::Transposition => {
            let options: Vec<usize> = (0..n.saturating_sub(1))
                .filter(|&i| label[i] != label[i + 1])
                .collect();
            if options.is_empty() {
                return random_substitution(label, model, rng);
            }
            Some(TypoEvent {
                kind,
                pos: options[rng.gen_range(0..options.len())],
                ch: None,
            })
        }
    }
}

fn random_substitution(label: &[char], model: &TypoModel, rng: &mut impl Rng) -> Option<TypoEvent> {
    if label.is_empty() {
        return None;
    }
    let pos = rng.gen_range(0..label.len());
    // redraw a few times to avoid a no-op replacement
    let mut c = model.random_char(Some(label[pos]), rng);
    for _ in 0..8 {
        if c != label[pos] {
            break;
        }
        c = model.random_char(Some(label[pos]), rng);
    }
    Some(TypoEvent {
        kind: TypoKind::RandomSubstitution,
        pos,
        ch: Some(c),
    })
}

/// Applies sampled events to `label`.
pub fn perturb(label: &str, model: &TypoModel, rng: &mut impl Rng) -> Perturbation {
    let count = match model.events_per_label {
        EventCount::Fixed(n) => n,
        EventCount::Uniform { min, max } => rng.gen_range(min..=max),
    };
    let mut text = label.to_string();
    let mut events = Vec::with_capacity(count);
    for _ in 0..count {
        let chars: Vec<char> = text.chars().collect();
        if let Some(ev) = sample_event(&chars, model, rng) {
            text = apply_event(&text, &ev);
            events.push(ev);
        }
    }
    Perturbation { text, events }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Recovered,
    Misassigned { to: usize },
    /// Every label within `delta` of the best distance.
    Indeterminate { candidates: Vec<usize> },
}

/// Nearest-label correction of `perturbed` by weighted edit distance.
pub fn classify_back(
    perturbed: &str,
    source: usize,
    tax: &Taxonomy,
    cfg: &CostConfig,
    delta: f64,
) -> Outcome {
    let chars: Vec<char> = perturbed.chars().collect();
    let label_chars: Vec<Vec<char>> = tax.labels().iter().map(|l| l.chars().collect()).collect();
    classify_chars(&chars, source, &label_chars, cfg, delta)
}

fn classify_chars(
    perturbed: &[char],
    source: usize,
    labels: &[Vec<char>],
    cfg: &CostConfig,
    delta: f64,
) -> Outcome {
    let dists: Vec<f64> = labels
        .iter()
        .map(|l| distance_chars(perturbed, l, cfg))
        .collect();
    let best = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let near: Vec<usize> = dists
        .iter()
        .enumerate()
        .filter(|(_, &d)| d - best <= delta + TIE_EPS)
        .map(|(i, _)| i)
        .collect();
    if near.len() > 1 {
        Outcome::Indeterminate { candidates: near }
    } else if near[0] == source {
        Outcome::Recovered
    } else {
        Outcome::Misassigned { to: near[0] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceStats {
    pub label: String,
    pub trials: u64,
    pub recovered: u64,
    pub misassigned: u64,
    pub indeterminate: u64,
}

/// Confusions from `source` trials towards `target`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairConfusion {
    pub source: usize,
    pub target: usize,
    pub misassigned: u64,
    pub indeterminate: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionStats {
    pub trials: u64,
    pub delta: f64,
    pub seed: u64,
    pub per_source: Vec<SourceStats>,
    /// Sorted by (source, target).
    pub pairs: Vec<PairConfusion>,
}

impl ConfusionStats {
    /// Share of trials from either side of `{a, b}` that landed on the other
    /// label or in a tie involving both.
    pub fn pair_rate(&self, a: usize, b: usize) -> f64 {
        let hits: u64 = self
            .pairs
            .iter()
            .filter(|p| (p.source == a && p.target == b) || (p.source == b && p.target == a))
            .map(|p| p.misassigned + p.indeterminate)
            .sum();
        let trials = self.per_source[a].trials + self.per_source[b].trials;
        if trials == 0 {
            0.0
        } else {
            hits as f64 / trials as f64
        }
    }

    pub fn total_indeterminate(&self) -> u64 {
        self.per_source.iter().map(|s| s.indeterminate).sum()
    }
}

/// Runs `trials` single-label trials spread evenly over the taxonomy.
///
/// Label `i` draws from its own ChaCha stream `i` under `model.seed`, so the
/// result does not depend on thread scheduling.
pub fn simulate(
    tax: &Taxonomy,
    cfg: &CostConfig,
    model: &TypoModel,
    trials: u64,
    delta: f64,
) -> Result<ConfusionStats> {
    simulate_with_progress(tax, cfg, model, trials, delta, None)
}

/// [`simulate`], bumping `progress` once per finished trial.
pub fn simulate_with_progress(
    tax: &Taxonomy,
    cfg: &CostConfig,
    model: &TypoModel,
    trials: u64,
    delta: f64,
    progress: Option<&AtomicU64>,
) -> Result<ConfusionStats> {
    model.validate()?;
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be >= 1".into()));
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidParams(format!("delta must be >= 0, got {delta}")));
    }
    let n = tax.len() as u64;
    let label_chars: Vec<Vec<char>> = tax.labels().iter().map(|l| l.chars().collect()).collect();
    let per_label: Vec<(SourceStats, BTreeMap<usize, (u64, u64)>)> = (0..tax.len())
        .into_par_iter()
        .map(|i| {
            let my_trials = trials / n + u64::from((i as u64) < trials % n);
            let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
            rng.set_stream(i as u64);
            let mut stats = SourceStats {
                label: tax.label(i).to_string(),
                trials: my_trials,
                ..SourceStats::default()
            };
            let mut toward: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
            for _ in 0..my_trials {
                let p = perturb(tax.label(i), model, &mut rng);
                let chars: Vec<char> = p.text.chars().collect();
                match classify_chars(&chars, i, &label_chars, cfg, delta) {
                    Outcome::Recovered => stats.recovered += 1,
                    Outcome::Misassigned { to } => {
                        stats.misassigned += 1;
                        toward.entry(to).or_default().0 += 1;
                    }
                    Outcome::Indeterminate { candidates } => {
                        stats.indeterminate += 1;
                        for c in candidates.into_iter().filter(|&c| c != i) {
                            toward.entry(c).or_default().1 += 1;
                        }
                    }
                }
                if let Some(p) = progress {
                    p.fetch_add(1, Ordering::Relaxed);
                }
            }
            (stats, toward)
        })
        .collect();

    let mut per_source = Vec::with_capacity(per_label.len());
    let mut pairs = Vec::new();
    for (source, (stats, toward)) in per_label.into_iter().enumerate() {
        per_source.push(stats);
        pairs.extend(toward.into_iter().map(|(target, (mis, ind))| PairConfusion {
            source,
            target,
            misassigned: mis,
            indeterminate: ind,
        }));
    }
    Ok(ConfusionStats {
        trials,
        delta,
        seed: model.seed,
        per_source,
        pairs,
    })
}

/// Average ranks, ties sharing the mean of their positions.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let rank = (start + end - 1) as f64 / 2.0 + 1.0;
        for &k in &idx[start..end] {
            out[k] = rank;
        }
        start = end;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation; `None` when either side has no variance.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&ranks(x), &ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub i: usize,
    pub j: usize,
    pub isec: f64,
    pub confusion_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub stats: ConfusionStats,
    pub points: Vec<ValidationPoint>,
    pub spearman: Option<f64>,
    /// 95% percentile bootstrap interval over resampled pairs.
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub bootstrap_samples: usize,
    /// True when confusion (or ISEC) is constant and no correlation exists.
    pub degenerate: bool,
}

pub const DEFAULT_BOOTSTRAP: usize = 1000;

/// Ranks the taxonomy, simulates typos and correlates pair ISEC with
/// empirical confusion rate.
pub fn validate_ranking(
    tax: &Taxonomy,
    cfg: &CostConfig,
    params: &IndexParams,
    model: &TypoModel,
    trials: u64,
    delta: f64,
) -> Result<ValidationReport> {
    check_trials(tax.len(), trials)?;
    let ranking = rank_taxonomy(tax, cfg, params)?;
    let stats = simulate(tax, cfg, model, trials, delta)?;
    Ok(correlate(&ranking.scores, stats, model.seed))
}

pub fn check_trials(n: usize, trials: u64) -> Result<()> {
    let min_trials = 100 * n as u64;
    if trials < min_trials {
        return Err(Error::InvalidParams(format!(
            "validation needs at least 100 trials per label ({min_trials}), got {trials}"
        )));
    }
    Ok(())
}

/// Spearman correlation between pair ISEC and confusion rate, with a seeded
/// percentile bootstrap over pairs.
pub fn correlate(scores: &[PairScore], stats: ConfusionStats, seed: u64) -> ValidationReport {
    let points: Vec<ValidationPoint> = scores
        .iter()
        .map(|s| ValidationPoint {
            i: s.i.min(s.j),
            j: s.i.max(s.j),
            isec: s.isec,
            confusion_rate: stats.pair_rate(s.i, s.j),
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.isec).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.confusion_rate).collect();
    let rho = spearman(&xs, &ys);

    let (mut ci_low, mut ci_high) = (None, None);
    let mut samples = 0;
    if rho.is_some() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(BOOTSTRAP_STREAM);
        let mut boot = Vec::with_capacity(DEFAULT_BOOTSTRAP);
        let (mut bx, mut by) = (vec![0.0; xs.len()], vec![0.0; xs.len()]);
        for _ in 0..DEFAULT_BOOTSTRAP {
            for k in 0..xs.len() {
                let pick = rng.gen_range(0..xs.len());
                bx[k] = xs[pick];
                by[k] = ys[pick];
            }
            if let Some(r) = spearman(&bx, &by) {
                boot.push(r);
            }
        }
        boot.sort_by(f64::total_cmp);
        samples = boot.len();
        if !boot.is_empty() {
            let at = |q: f64| boot[((q * (boot.len() - 1) as f64).round() as usize).min(boot.len() - 1)];
            ci_low = Some(at(0.025));
            ci_high = Some(at(0.975));
        }
    }
    ValidationReport {
        stats,
        points,
        degenerate: rho.is_none(),
        spearman: rho,
        ci_low,
        ci_high,
        bootstrap_samples: samples,
    }
}
