//! Weighted Optimal-String-Alignment edit paths.
//!
//! [`align`] finds a minimal-cost edit script between two labels under a
//! [`CostConfig`] using insertions, deletions, substitutions and adjacent
//! transpositions (a transposed pair is never edited again). Among scripts of
//! equal cost the one with fewer operations wins; remaining ties resolve by the
//! backtrace order substitution, deletion, insertion, transposition, so the
//! witness path and everything derived from it is deterministic.
//!
//! From the path we derive the mean operation cost (CM), the penalty cost
//! (CP, which excludes transpositions) and the penalized mean cost
//! `CMP = CM + k * CP`.

use serde::{Deserialize, Serialize};

use crate::cost_model::CostConfig;
use crate::error::{Error, Result};

/// Cost differences below this are treated as ties.
const COST_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Insertion,
    Deletion,
    Substitution,
    Transposition,
}

impl EditKind {
    /// Whether the operation counts towards the penalty cost.
    pub fn is_penalized(self) -> bool {
        !matches!(self, EditKind::Transposition)
    }
}

/// One operation of an edit path.
///
/// `pos` indexes the source label (in chars): the character replaced or
/// deleted, the character an insertion goes in front of, or the first of a
/// transposed pair. `from`/`to` hold the characters before and after the
/// edit; a transposition stores the pair as it reads in the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditOp {
    pub kind: EditKind,
    pub pos: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub from: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub to: Option<String>,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub insertion: usize,
    pub deletion: usize,
    pub substitution: usize,
    pub transposition: usize,
}

impl KindCounts {
    pub fn total(&self) -> usize {
        self.insertion + self.deletion + self.substitution + self.transposition
    }

    fn bump(&mut self, kind: EditKind) {
        match kind {
            EditKind::Insertion => self.insertion += 1,
            EditKind::Deletion => self.deletion += 1,
            EditKind::Substitution => self.substitution += 1,
            EditKind::Transposition => self.transposition += 1,
        }
    }
}

/// The minimal-cost edit path between two labels and its summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub ops: Vec<EditOp>,
    pub total_cost: f64,
    pub n_ops: usize,
    pub cm: f64,
    pub cp: f64,
    pub counts: KindCounts,
}

impl PathSummary {
    pub fn from_ops(ops: Vec<EditOp>) -> Self {
        let mut counts = KindCounts::default();
        let mut total_cost = 0.0;
        let mut cp = 0.0;
        for op in &ops {
            counts.bump(op.kind);
            total_cost += op.cost;
            if op.kind.is_penalized() {
                cp += op.cost;
            }
        }
        let n_ops = ops.len();
        let cm = if n_ops > 0 {
            total_cost / n_ops as f64
        } else {
            0.0
        };
        PathSummary {
            ops,
            total_cost,
            n_ops,
            cm,
            cp,
            counts,
        }
    }

    /// Applies the path to `source` and returns the resulting label.
    pub fn replay(&self, source: &str) -> String {
        let src: Vec<char> = source.chars().collect();
        let mut out = String::with_capacity(source.len() + self.ops.len());
        let mut i = 0;
        for op in &self.ops {
            while i < op.pos && i < src.len() {
                out.push(src[i]);
                i += 1;
            }
            match op.kind {
                EditKind::Substitution => {
                    out.push_str(op.to.as_deref().unwrap_or_default());
                    i += 1;
                }
                EditKind::Deletion => i += 1,
                EditKind::Insertion => out.push_str(op.to.as_deref().unwrap_or_default()),
                EditKind::Transposition => {
                    out.push(src[i + 1]);
                    out.push(src[i]);
                    i += 2;
                }
            }
        }
        out.extend(&src[i.min(src.len())..]);
        out
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Move {
    Start,
    Match,
    Sub,
    Del,
    Ins,
    Trans,
}

#[derive(Clone, Copy)]
struct Cell {
    cost: f64,
    ops: u32,
    mv: Move,
}

#[inline]
fn improves(cost: f64, ops: u32, best: &Cell) -> bool {
    if cost < best.cost - COST_EPS {
        return true;
    }
    cost <= best.cost + COST_EPS && ops < best.ops
}

/// Minimal-cost weighted edit path turning `a` into `b`.
///
/// Identical inputs yield an empty path; callers filter identity pairs before
/// scoring, and [`cmp`] rejects such a path.
pub fn align(a: &str, b: &str, cfg: &CostConfig) -> PathSummary {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    let mut dp = vec![
        Cell {
            cost: 0.0,
            ops: 0,
            mv: Move::Start,
        };
        (n + 1) * w
    ];
    for i in 1..=n {
        let prev = dp[(i - 1) * w];
        dp[i * w] = Cell {
            cost: prev.cost + cfg.lookup_del(a[i - 1]),
            ops: prev.ops + 1,
            mv: Move::Del,
        };
    }
    for j in 1..=m {
        let prev = dp[j - 1];
        dp[j] = Cell {
            cost: prev.cost + cfg.lookup_ins(b[j - 1]),
            ops: prev.ops + 1,
            mv: Move::Ins,
        };
    }
    for i in 1..=n {
        for j in 1..=m {
            let (ca, cb) = (a[i - 1], b[j - 1]);
            let diag = dp[(i - 1) * w + j - 1];
            let mut best = if ca == cb {
                Cell {
                    cost: diag.cost,
                    ops: diag.ops,
                    mv: Move::Match,
                }
            } else {
                Cell {
                    cost: diag.cost + cfg.lookup_sub(ca, cb),
                    ops: diag.ops + 1,
                    mv: Move::Sub,
                }
            };
            let up = dp[(i - 1) * w + j];
            let c = up.cost + cfg.lookup_del(ca);
            if improves(c, up.ops + 1, &best) {
                best = Cell {
                    cost: c,
                    ops: up.ops + 1,
                    mv: Move::Del,
                };
            }
            let left = dp[i * w + j - 1];
            let c = left.cost + cfg.lookup_ins(cb);
            if improves(c, left.ops + 1, &best) {
                best = Cell {
                    cost: c,
                    ops: left.ops + 1,
                    mv: Move::Ins,
                };
            }
            if i > 1 && j > 1 && ca == b[j - 2] && a[i - 2] == cb && ca != cb {
                let tt = dp[(i - 2) * w + j - 2];
                let c = tt.cost + cfg.lookup_trans(a[i - 2], ca);
                if improves(c, tt.ops + 1, &best) {
                    best = Cell {
                        cost: c,
                        ops: tt.ops + 1,
                        mv: Move::Trans,
                    };
                }
            }
            dp[i * w + j] = best;
        }
    }

    let mut ops = Vec::with_capacity(dp[n * w + m].ops as usize);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        match dp[i * w + j].mv {
            Move::Start => unreachable!("backtrace reached the origin early"),
            Move::Match => {
                i -= 1;
                j -= 1;
            }
            Move::Sub => {
                ops.push(EditOp {
                    kind: EditKind::Substitution,
                    pos: i - 1,
                    from: Some(a[i - 1].to_string()),
                    to: Some(b[j - 1].to_string()),
                    cost: cfg.lookup_sub(a[i - 1], b[j - 1]),
                });
                i -= 1;
                j -= 1;
            }
            Move::Del => {
                ops.push(EditOp {
                    kind: EditKind::Deletion,
                    pos: i - 1,
                    from: Some(a[i - 1].to_string()),
                    to: None,
                    cost: cfg.lookup_del(a[i - 1]),
                });
                i -= 1;
            }
            Move::Ins => {
                ops.push(EditOp {
                    kind: EditKind::Insertion,
                    pos: i,
                    from: None,
                    to: Some(b[j - 1].to_string()),
                    cost: cfg.lookup_ins(b[j - 1]),
                });
                j -= 1;
            }
            Move::Trans => {
                let pair: String = [a[i - 2], a[i - 1]].iter().collect();
                let swapped: String = [a[i - 1], a[i - 2]].iter().collect();
                ops.push(EditOp {
                    kind: EditKind::Transposition,
                    pos: i - 2,
                    from: Some(pair),
                    to: Some(swapped),
                    cost: cfg.lookup_trans(a[i - 2], a[i - 1]),
                });
                i -= 2;
                j -= 2;
            }
        }
    }
    ops.reverse();
    PathSummary::from_ops(ops)
}

/// Minimal weighted edit cost only, in O(|b|) memory.
pub fn distance(a: &str, b: &str, cfg: &CostConfig) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    distance_chars(&a, &b, cfg)
}

pub(crate) fn distance_chars(a: &[char], b: &[char], cfg: &CostConfig) -> f64 {
    let m = b.len();
    let mut prev2 = vec![0.0; m + 1];
    let mut prev = vec![0.0; m + 1];
    let mut cur = vec![0.0; m + 1];
    for j in 1..=m {
        prev[j] = prev[j - 1] + cfg.lookup_ins(b[j - 1]);
    }
    for i in 1..=a.len() {
        let ca = a[i - 1];
        cur[0] = prev[0] + cfg.lookup_del(ca);
        for j in 1..=m {
            let cb = b[j - 1];
            let mut best = prev[j - 1] + cfg.lookup_sub(ca, cb);
            best = best.min(prev[j] + cfg.lookup_del(ca));
            best = best.min(cur[j - 1] + cfg.lookup_ins(cb));
            if i > 1 && j > 1 && ca == b[j - 2] && a[i - 2] == cb && ca != cb {
                best = best.min(prev2[j - 2] + cfg.lookup_trans(a[i - 2], ca));
            }
            cur[j] = best;
        }
        std::mem::swap(&mut prev2, &mut prev);
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Penalized mean cost `cm + k * cp` of a path.
pub fn cmp(path: &PathSummary, k: f64) -> Result<f64> {
    if path.n_ops == 0 {
        return Err(Error::DegeneratePath);
    }
    if !k.is_finite() || k < 0.0 {
        return Err(Error::InvalidParams(format!("k must be >= 0, got {k}")));
    }
    Ok(path.cm + k * path.cp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Textbook unit-cost OSA distance, written independently of `align`.
    fn osa_reference(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = (d[i - 1][j] + 1)
                    .min(d[i][j - 1] + 1)
                    .min(d[i - 1][j - 1] + cost);
                if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                    d[i][j] = d[i][j].min(d[i - 2][j - 2] + 1);
                }
            }
        }
        d[a.len()][b.len()]
    }

    #[test]
    fn single_insertion() {
        let p = align("cba", "caba", &CostConfig::default());
        assert_eq!(p.n_ops, 1);
        assert_eq!(p.counts.insertion, 1);
        assert_eq!(p.ops[0].to.as_deref(), Some("a"));
        assert_eq!(p.total_cost, 1.0);
        assert_eq!(p.cm, 1.0);
        assert_eq!(p.cp, 1.0);
        assert_eq!(p.replay("cba"), "caba");
    }

    #[test]
    fn single_transposition() {
        let p = align("AAGX110216", "AGAX110216", &CostConfig::default());
        assert_eq!(p.n_ops, 1);
        assert_eq!(p.ops[0].kind, EditKind::Transposition);
        assert_eq!(p.ops[0].from.as_deref(), Some("AG"));
        assert_eq!(p.total_cost, 1.0);
        assert_eq!(p.cm, 1.0);
        assert_eq!(p.cp, 0.0);
        assert_eq!(p.replay("AAGX110216"), "AGAX110216");
    }

    #[test]
    fn kitten_sitting() {
        assert_eq!(osa_reference("kitten", "sitting"), 3);
        let p = align("kitten", "sitting", &CostConfig::default());
        assert_eq!(p.total_cost, 3.0);
        assert_eq!(p.n_ops, 3);
        assert_eq!(p.cm, 1.0);
        assert_eq!(p.cp, 3.0);
        assert_eq!(p.replay("kitten"), "sitting");
    }

    #[test]
    fn cmp_values() {
        let ins = align("cba", "caba", &CostConfig::default());
        assert_eq!(cmp(&ins, 0.0).unwrap(), 1.0);
        let tr = align("AAGX110216", "AGAX110216", &CostConfig::default());
        assert_eq!(cmp(&tr, 5.0).unwrap(), 1.0);
        let ks = align("kitten", "sitting", &CostConfig::default());
        assert_eq!(cmp(&ks, 1.0).unwrap(), 4.0);
    }

    #[test]
    fn cmp_rejects_identity_path() {
        let p = align("same", "same", &CostConfig::default());
        assert_eq!(p.n_ops, 0);
        assert!(matches!(cmp(&p, 1.0), Err(Error::DegeneratePath)));
        assert!(matches!(
            cmp(&align("a", "b", &CostConfig::default()), -1.0),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn empty_sides() {
        let cfg = CostConfig::default();
        let p = align("", "abc", &cfg);
        assert_eq!(p.counts.insertion, 3);
        assert_eq!(p.replay(""), "abc");
        let p = align("abc", "", &cfg);
        assert_eq!(p.counts.deletion, 3);
        assert_eq!(p.replay("abc"), "");
    }

    #[test]
    fn cheap_transposition_preferred() {
        let mut cfg = CostConfig::default();
        cfg.set_trans('A', 'G', 0.3).unwrap();
        let p = align("AAGX", "AGAX", &cfg);
        assert!((p.total_cost - 0.3).abs() < 1e-12);
        assert_eq!(p.cp, 0.0);
    }

    #[test]
    fn qwerty_substitution_lowers_cost() {
        let mut cfg = CostConfig::default();
        cfg.set_sub('G', 'T', 0.35).unwrap();
        let p = align("GAP", "TAP", &cfg);
        assert!((p.total_cost - 0.35).abs() < 1e-12);
        let p = align("TAP", "GAP", &cfg);
        assert!((p.total_cost - 0.35).abs() < 1e-12);
    }

    #[test]
    fn fewer_ops_break_cost_ties() {
        // "ab" -> "ba": one transposition (cost 2) ties two substitutions.
        let mut cfg = CostConfig::default();
        cfg.set_trans('a', 'b', 2.0).unwrap();
        let p = align("ab", "ba", &cfg);
        assert_eq!(p.total_cost, 2.0);
        assert_eq!(p.n_ops, 1);
        assert_eq!(p.ops[0].kind, EditKind::Transposition);
    }

    #[test]
    fn substitution_wins_over_indel_pair_tie() {
        // sub (cost 2) vs del+ins (cost 1+1): equal cost, sub has fewer ops.
        let cfg = CostConfig::new(2.0, 0.0, 0.5, true).unwrap();
        let mut cfg = cfg;
        cfg.set_ins('y', 1.0).unwrap();
        cfg.set_del('x', 1.0).unwrap();
        let p = align("x", "y", &cfg);
        assert_eq!(p.n_ops, 1);
        assert_eq!(p.ops[0].kind, EditKind::Substitution);
    }

    #[test]
    fn unicode_scalars() {
        let p = align("Córdoba", "Cordoba", &CostConfig::default());
        assert_eq!(p.total_cost, 1.0);
        assert_eq!(p.replay("Córdoba"), "Cordoba");
    }

    fn small_str() -> impl Strategy<Value = String> {
        proptest::string::string_regex("[abcd]{0,12}").unwrap()
    }

    fn arb_costs() -> impl Strategy<Value = CostConfig> {
        let ch = proptest::char::range('a', 'd');
        (
            proptest::collection::vec((ch.clone(), ch.clone(), 0.05f64..2.0), 0..6),
            proptest::collection::vec((ch.clone(), 0.05f64..2.0), 0..3),
            proptest::collection::vec((ch.clone(), 0.05f64..2.0), 0..3),
            proptest::collection::vec((ch.clone(), ch, 0.05f64..2.0), 0..3),
        )
            .prop_map(|(subs, ins, del, trans)| {
                let mut cfg = CostConfig::new(1.0, 0.0, 0.5, false).unwrap();
                for (a, b, c) in subs {
                    if a != b {
                        cfg.set_sub(a, b, c).unwrap();
                    }
                }
                for (a, c) in ins {
                    cfg.set_ins(a, c).unwrap();
                }
                for (a, c) in del {
                    cfg.set_del(a, c).unwrap();
                }
                for (a, b, c) in trans {
                    if a != b {
                        cfg.set_trans(a, b, c).unwrap();
                    }
                }
                cfg
            })
    }

    proptest! {
        #[test]
        fn classical_reduction(a in small_str(), b in small_str()) {
            let p = align(&a, &b, &CostConfig::default());
            prop_assert_eq!(p.total_cost, osa_reference(&a, &b) as f64);
            prop_assert_eq!(distance(&a, &b, &CostConfig::default()), p.total_cost);
        }

        #[test]
        fn witness_consistency(a in small_str(), b in small_str(), cfg in arb_costs()) {
            let p = align(&a, &b, &cfg);
            prop_assert_eq!(p.replay(&a), b.clone());
            let sum: f64 = p.ops.iter().map(|o| o.cost).sum();
            prop_assert!((sum - p.total_cost).abs() < 1e-9);
            prop_assert_eq!(p.n_ops, p.counts.total());
            prop_assert!(p.cp <= p.total_cost + 1e-12);
            prop_assert!((distance(&a, &b, &cfg) - p.total_cost).abs() < 1e-9);
            for op in &p.ops {
                let expected = match op.kind {
                    EditKind::Insertion => cfg.lookup_ins(op.to.as_ref().unwrap().chars().next().unwrap()),
                    EditKind::Deletion => cfg.lookup_del(op.from.as_ref().unwrap().chars().next().unwrap()),
                    EditKind::Substitution => cfg.lookup_sub(
                        op.from.as_ref().unwrap().chars().next().unwrap(),
                        op.to.as_ref().unwrap().chars().next().unwrap()),
                    EditKind::Transposition => {
                        let mut it = op.from.as_ref().unwrap().chars();
                        cfg.lookup_trans(it.next().unwrap(), it.next().unwrap())
                    }
                };
                prop_assert_eq!(op.cost, expected);
            }
        }

        #[test]
        fn cp_linearity(a in small_str(), b in small_str(), cfg in arb_costs(), extra in 0.0f64..3.0, trans in any::<bool>()) {
            let p = align(&a, &b, &cfg);
            let mut ops = p.ops.clone();
            let kind = if trans { EditKind::Transposition } else { EditKind::Insertion };
            ops.push(EditOp { kind, pos: a.chars().count(), from: None, to: Some("z".into()), cost: extra });
            let q = PathSummary::from_ops(ops);
            let expected = if trans { p.cp } else { p.cp + extra };
            prop_assert!((q.cp - expected).abs() < 1e-12);
        }

        #[test]
        fn lowering_a_cost_never_raises_total(a in small_str(), b in small_str(), cfg in arb_costs(),
                                               x in proptest::char::range('a', 'd'), y in proptest::char::range('a', 'd'),
                                               which in 0usize..4, factor in 0.0f64..1.0) {
            let before = align(&a, &b, &cfg).total_cost;
            let mut lower = cfg.clone();
            match which {
                0 if x != y => lower.set_sub(x, y, cfg.lookup_sub(x, y) * factor).unwrap(),
                1 => lower.set_ins(x, cfg.lookup_ins(x) * factor).unwrap(),
                2 => lower.set_del(x, cfg.lookup_del(x) * factor).unwrap(),
                3 if x != y => lower.set_trans(x, y, cfg.lookup_trans(x, y) * factor).unwrap(),
                _ => {}
            }
            prop_assert!(align(&a, &b, &lower).total_cost <= before + 1e-9);
        }

        #[test]
        fn cost_symmetry(a in small_str(), b in small_str(),
                         subs in proptest::collection::vec((proptest::char::range('a', 'd'), proptest::char::range('a', 'd'), 0.05f64..2.0), 0..5),
                         indel in proptest::collection::vec((proptest::char::range('a', 'd'), 0.05f64..2.0), 0..3)) {
            let mut cfg = CostConfig::default();
            for (x, y, c) in subs {
                if x != y { cfg.set_sub(x, y, c).unwrap(); }
            }
            for (x, c) in indel {
                cfg.set_ins(x, c).unwrap();
                cfg.set_del(x, c).unwrap();
            }
            prop_assert!(cfg.is_symmetric());
            let ab = align(&a, &b, &cfg).total_cost;
            let ba = align(&b, &a, &cfg).total_cost;
            prop_assert!((ab - ba).abs() < 1e-9);
        }

        #[test]
        fn cmp_monotone_in_added_ops(a in small_str(), b in small_str(), k in 0.0f64..5.0) {
            // Under unit costs each added penalized op raises cp by one and keeps cm at one.
            let p = align(&a, &b, &CostConfig::default());
            prop_assume!(p.n_ops > 0);
            let mut ops = p.ops.clone();
            ops.push(EditOp { kind: EditKind::Deletion, pos: 0, from: Some("x".into()), to: None, cost: 1.0 });
            let q = PathSummary::from_ops(ops);
            prop_assert!(cmp(&q, k).unwrap() >= cmp(&p, k).unwrap());
        }
    }
}
