//! Per-rater evidence and its aggregation into pairwise preference confidences.
//!
//! Each rater contributes an indicator in `{0, 0.5, 1}` for "A beats B" (a
//! score tie counts half), and the confidence `P(A > B)` is the mean over
//! raters. Training labels store the complement `p_b_over_a = 1 - P(A > B)`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

/// Confidence margin used when none is configured.
pub const DEFAULT_MARGIN: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterScoreRecord {
    pub rater_id: String,
    pub doc_id: String,
    pub score: f64,
}

/// Repeated A/B votes from one rater shown the pair in one order:
/// `doc_a` was presented first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectionalJudgment {
    pub rater_id: String,
    pub doc_a: String,
    pub doc_b: String,
    pub votes_a: u32,
    pub votes_b: u32,
}

impl DirectionalJudgment {
    pub fn new(rater_id: &str, doc_a: &str, doc_b: &str, votes_a: u32, votes_b: u32) -> Result<Self> {
        if votes_a as u64 + votes_b as u64 == 0 {
            return Err(Error::validation(format!(
                "directional judgment {doc_a}/{doc_b} from `{rater_id}` has no votes"
            )));
        }
        Ok(DirectionalJudgment {
            rater_id: rater_id.to_owned(),
            doc_a: doc_a.to_owned(),
            doc_b: doc_b.to_owned(),
            votes_a,
            votes_b,
        })
    }

    /// Fraction of votes for the first-shown document.
    pub fn first_fraction(&self) -> f64 {
        self.votes_a as f64 / (self.votes_a as f64 + self.votes_b as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    English,
    Monolingual,
    Crosslingual,
    Parallel,
}

impl fmt::Display for PairKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairKind::English => "english",
            PairKind::Monolingual => "monolingual",
            PairKind::Crosslingual => "crosslingual",
            PairKind::Parallel => "parallel",
        })
    }
}

/// One training example: the probability that `doc_b` is preferred over `doc_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPairJudgment")]
pub struct PairJudgment {
    pub doc_a: String,
    pub doc_b: String,
    pub p_b_over_a: f64,
    pub kind: PairKind,
    pub source_pair: Option<String>,
}

#[derive(Deserialize)]
struct RawPairJudgment {
    doc_a: String,
    doc_b: String,
    p_b_over_a: f64,
    kind: PairKind,
    #[serde(default)]
    source_pair: Option<String>,
}

impl TryFrom<RawPairJudgment> for PairJudgment {
    type Error = Error;
    fn try_from(raw: RawPairJudgment) -> Result<Self> {
        let j = PairJudgment {
            doc_a: raw.doc_a,
            doc_b: raw.doc_b,
            p_b_over_a: raw.p_b_over_a,
            kind: raw.kind,
            source_pair: raw.source_pair,
        };
        j.validate()?;
        Ok(j)
    }
}

impl PairJudgment {
    pub fn new(doc_a: &str, doc_b: &str, p_b_over_a: f64, kind: PairKind) -> Result<Self> {
        let j = PairJudgment {
            doc_a: doc_a.to_owned(),
            doc_b: doc_b.to_owned(),
            p_b_over_a,
            kind,
            source_pair: None,
        };
        j.validate()?;
        Ok(j)
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source_pair = Some(source.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_b_over_a) {
            return Err(Error::validation(format!(
                "pair {}/{}: p_b_over_a {} outside [0, 1]",
                self.doc_a, self.doc_b, self.p_b_over_a
            )));
        }
        if self.kind == PairKind::Parallel && self.p_b_over_a != 0.5 {
            return Err(Error::validation(format!(
                "parallel pair {}/{} must have p_b_over_a = 0.5",
                self.doc_a, self.doc_b
            )));
        }
        if self.doc_a == self.doc_b {
            return Err(Error::validation(format!("pair compares `{}` with itself", self.doc_a)));
        }
        Ok(())
    }

    /// `|2p - 1|`, the agreement strength of the label.
    pub fn margin(&self) -> f64 {
        (2.0 * self.p_b_over_a - 1.0).abs()
    }

    /// Identifier of the unordered source pair, `doc_a|doc_b`.
    pub fn pair_id(&self) -> String {
        format!("{}|{}", self.doc_a, self.doc_b)
    }
}

fn preference_indicator(a: f64, b: f64) -> f64 {
    if a > b {
        1.0
    } else if a == b {
        0.5
    } else {
        0.0
    }
}

/// Mean of per-rater preference values for A, each in `[0, 1]`. Returns `P(A > B)`.
pub fn combine_preferences<'a>(per_rater: impl IntoIterator<Item = &'a f64>) -> Result<f64> {
    let (sum, n) = per_rater.into_iter().fold((0.0, 0usize), |(s, n), p| (s + p, n + 1));
    if n == 0 {
        return Err(Error::validation("empty rater set"));
    }
    Ok(sum / n as f64)
}

/// Per-rater "A beats B" indicators over a shared rater set.
pub fn rater_indicators(
    scores_a: &BTreeMap<String, f64>,
    scores_b: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>> {
    if scores_a.is_empty() {
        return Err(Error::validation("empty rater set"));
    }
    if scores_a.len() != scores_b.len() || scores_a.keys().zip(scores_b.keys()).any(|(x, y)| x != y) {
        let a: Vec<_> = scores_a.keys().map(String::as_str).collect();
        let b: Vec<_> = scores_b.keys().map(String::as_str).collect();
        return Err(Error::validation(format!(
            "rater sets differ: [{}] vs [{}]",
            a.join(", "),
            b.join(", ")
        )));
    }
    Ok(scores_a
        .iter()
        .zip(scores_b.values())
        .map(|((rater, &sa), &sb)| (rater.clone(), preference_indicator(sa, sb)))
        .collect())
}

/// Aggregates scalar rater scores for documents A and B into a judgment.
/// Document ids are filled in by the caller; the returned judgment uses
/// the placeholders `"a"` and `"b"`.
pub fn aggregate_pair(scores_a: &BTreeMap<String, f64>, scores_b: &BTreeMap<String, f64>) -> Result<PairJudgment> {
    aggregate_pair_for("a", "b", scores_a, scores_b)
}

pub fn aggregate_pair_for(
    doc_a: &str,
    doc_b: &str,
    scores_a: &BTreeMap<String, f64>,
    scores_b: &BTreeMap<String, f64>,
) -> Result<PairJudgment> {
    let indicators = rater_indicators(scores_a, scores_b)?;
    let p_a = combine_preferences(indicators.values())?;
    PairJudgment::new(doc_a, doc_b, 1.0 - p_a, PairKind::English)
}

/// `P(A > B)` from order-debiased directional votes.
///
/// `reverse`, when given, concerns the same pair shown with B first. The
/// result is the mean of the forward fraction for A and the complement of
/// the reverse fraction for B.
pub fn directional_preference(forward: &DirectionalJudgment, reverse: Option<&DirectionalJudgment>) -> Result<f64> {
    let fwd = forward.first_fraction();
    match reverse {
        None => Ok(fwd),
        Some(rev) => {
            if rev.doc_a != forward.doc_b || rev.doc_b != forward.doc_a {
                return Err(Error::validation(format!(
                    "reverse judgment {}/{} does not mirror {}/{}",
                    rev.doc_a, rev.doc_b, forward.doc_a, forward.doc_b
                )));
            }
            if rev.rater_id != forward.rater_id {
                return Err(Error::validation(format!(
                    "reverse judgment from `{}` paired with forward from `{}`",
                    rev.rater_id, forward.rater_id
                )));
            }
            Ok((fwd + (1.0 - rev.first_fraction())) / 2.0)
        }
    }
}

pub fn aggregate_directional(
    forward: &DirectionalJudgment,
    reverse: Option<&DirectionalJudgment>,
) -> Result<PairJudgment> {
    let p_a = directional_preference(forward, reverse)?;
    PairJudgment::new(&forward.doc_a, &forward.doc_b, 1.0 - p_a, PairKind::English)
}

/// Keeps judgments whose margin reaches `margin`; parallel pairs always pass.
pub fn margin_filter(judgments: &[PairJudgment], margin: f64) -> Vec<PairJudgment> {
    judgments
        .iter()
        .filter(|j| j.kind == PairKind::Parallel || j.margin() >= margin)
        .cloned()
        .collect()
}

pub fn read_rater_scores(path: &Path) -> Result<Vec<RaterScoreRecord>> {
    let records: Vec<RaterScoreRecord> = jsonl::read(path)?;
    if let Some((i, r)) = records.iter().enumerate().find(|(_, r)| !r.score.is_finite()) {
        return Err(Error::validation(format!(
            "{}: record {} ({}/{}) has a non-finite score",
            path.display(),
            i + 1,
            r.rater_id,
            r.doc_id
        )));
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Presentation {
    Ab,
    Ba,
}

/// Directional-judgment file record. `doc_a`/`doc_b` and the vote counts
/// are canonical; `order` says which document was shown first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionalRecord {
    pub rater_id: String,
    pub doc_a: String,
    pub doc_b: String,
    pub votes_a: u32,
    pub votes_b: u32,
    pub order: Presentation,
}

impl DirectionalRecord {
    /// The judgment as presented, with the first-shown document as `doc_a`.
    pub fn as_presented(&self) -> Result<DirectionalJudgment> {
        match self.order {
            Presentation::Ab => DirectionalJudgment::new(&self.rater_id, &self.doc_a, &self.doc_b, self.votes_a, self.votes_b),
            Presentation::Ba => DirectionalJudgment::new(&self.rater_id, &self.doc_b, &self.doc_a, self.votes_b, self.votes_a),
        }
    }
}

pub fn read_directional(path: &Path) -> Result<Vec<DirectionalRecord>> {
    jsonl::read(path)
}

/// Per (rater, canonical pair) `P(doc_a > doc_b)`, summing repeated records of the same order.
pub fn directional_preferences(records: &[DirectionalRecord]) -> Result<BTreeMap<(String, String, String), f64>> {
    let mut votes: BTreeMap<(String, String, String), [[u32; 2]; 2]> = BTreeMap::new();
    for r in records {
        // normalise so that the key's first document is lexicographically smaller
        let (a, b, va, vb) = if r.doc_a <= r.doc_b {
            (&r.doc_a, &r.doc_b, r.votes_a, r.votes_b)
        } else {
            (&r.doc_b, &r.doc_a, r.votes_b, r.votes_a)
        };
        let first_is_a = (r.order == Presentation::Ab) == (a == &r.doc_a);
        let slot = votes.entry((r.rater_id.clone(), a.clone(), b.clone())).or_default();
        let dir = if first_is_a { 0 } else { 1 };
        slot[dir][0] += va;
        slot[dir][1] += vb;
    }
    let mut out = BTreeMap::new();
    for ((rater, a, b), [fwd, rev]) in votes {
        let forward = (fwd[0] + fwd[1] > 0).then(|| DirectionalJudgment::new(&rater, &a, &b, fwd[0], fwd[1])).transpose()?;
        let reverse = (rev[0] + rev[1] > 0).then(|| DirectionalJudgment::new(&rater, &b, &a, rev[1], rev[0])).transpose()?;
        let p_a = match (forward, reverse) {
            (Some(f), r) => directional_preference(&f, r.as_ref())?,
            (None, Some(r)) => 1.0 - r.first_fraction(),
            (None, None) => unreachable!("directional record without votes"),
        };
        out.insert((rater, a, b), p_a);
    }
    Ok(out)
}

pub fn read_judgments(path: &Path) -> Result<Vec<PairJudgment>> {
    jsonl::read(path)
}

pub fn write_judgments(path: &Path, judgments: &[PairJudgment]) -> Result<()> {
    jsonl::write(path, judgments)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(v: &[f64]) -> BTreeMap<String, f64> {
        v.iter().enumerate().map(|(i, &s)| (format!("r{i}"), s)).collect()
    }

    #[test]
    fn eq1_counts() {
        let j = aggregate_pair(&scores(&[2.0, 2.0, 2.0, 0.0]), &scores(&[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert_eq!(1.0 - j.p_b_over_a, 0.75);
        assert_eq!(j.p_b_over_a, 0.25);
        assert_eq!(j.kind, PairKind::English);

        let j = aggregate_pair(&scores(&[1.0, 3.0]), &scores(&[1.0, 3.0])).unwrap();
        assert_eq!(j.p_b_over_a, 0.5);

        let j = aggregate_pair(&scores(&[5.0, 5.0, 1.0, 0.0]), &scores(&[1.0, 1.0, 1.0, 2.0])).unwrap();
        assert_eq!(1.0 - j.p_b_over_a, 0.625);
    }

    #[test]
    fn eq1_rejects_bad_rater_sets() {
        assert!(aggregate_pair(&scores(&[]), &scores(&[])).is_err());
        assert!(aggregate_pair(&scores(&[1.0]), &scores(&[1.0, 2.0])).is_err());
        let mut b = scores(&[1.0, 2.0]);
        let v = b.remove("r1").unwrap();
        b.insert("other".into(), v);
        assert!(aggregate_pair(&scores(&[1.0, 2.0]), &b).is_err());
    }

    #[test]
    fn directional_examples() {
        let fwd = DirectionalJudgment::new("gpt", "A", "B", 8, 12).unwrap();
        let rev = DirectionalJudgment::new("gpt", "B", "A", 8, 12).unwrap();
        assert_eq!(directional_preference(&fwd, Some(&rev)).unwrap(), 0.5);

        let only = DirectionalJudgment::new("gpt", "A", "B", 20, 0).unwrap();
        let j = aggregate_directional(&only, None).unwrap();
        assert_eq!(j.p_b_over_a, 0.0);

        let half = DirectionalJudgment::new("gpt", "A", "B", 5, 5).unwrap();
        let half_rev = DirectionalJudgment::new("gpt", "B", "A", 5, 5).unwrap();
        assert_eq!(directional_preference(&half, Some(&half_rev)).unwrap(), 0.5);

        let wrong = DirectionalJudgment::new("gpt", "A", "C", 1, 1).unwrap();
        assert!(directional_preference(&fwd, Some(&wrong)).is_err());
        assert!(DirectionalJudgment::new("gpt", "A", "B", 0, 0).is_err());
    }

    #[test]
    fn directional_records_group_by_pair() {
        let recs = vec![
            DirectionalRecord {
                rater_id: "g".into(),
                doc_a: "A".into(),
                doc_b: "B".into(),
                votes_a: 8,
                votes_b: 12,
                order: Presentation::Ab,
            },
            // same canonical pair, B shown first; A still wins 12 of 20
            DirectionalRecord {
                rater_id: "g".into(),
                doc_a: "A".into(),
                doc_b: "B".into(),
                votes_a: 12,
                votes_b: 8,
                order: Presentation::Ba,
            },
        ];
        let prefs = directional_preferences(&recs).unwrap();
        assert_eq!(prefs[&("g".to_string(), "A".to_string(), "B".to_string())], 0.5);
    }

    #[test]
    fn margin_examples() {
        let j = |p, kind| PairJudgment::new("a", "b", p, kind).unwrap();
        let set = vec![j(0.9, PairKind::English), j(0.6, PairKind::English), j(0.5, PairKind::Parallel)];
        let kept = margin_filter(&set, 0.5);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].p_b_over_a, 0.9);
        assert_eq!(kept[1].kind, PairKind::Parallel);
        assert_eq!(margin_filter(&set, 0.0), set);
    }

    #[test]
    fn judgment_invariants() {
        assert!(PairJudgment::new("a", "b", 1.1, PairKind::English).is_err());
        assert!(PairJudgment::new("a", "b", 0.4, PairKind::Parallel).is_err());
        assert!(PairJudgment::new("a", "a", 0.4, PairKind::English).is_err());
        let bad = r#"{"doc_a":"a","doc_b":"b","p_b_over_a":0.3,"kind":"parallel","source_pair":null}"#;
        assert!(serde_json::from_str::<PairJudgment>(bad).is_err());
        let ok = r#"{"doc_a":"a","doc_b":"b","p_b_over_a":0.3,"kind":"crosslingual"}"#;
        let j: PairJudgment = serde_json::from_str(ok).unwrap();
        assert_eq!(j.source_pair, None);
    }
}
