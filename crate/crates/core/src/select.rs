//! Corpus scoring and token-budget selection.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LangCode};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::scorer::{score, Backend, ScorerState};

/// Language key used for the single entry of a global selection.
pub const GLOBAL_SCOPE: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDocument {
    pub doc_id: String,
    pub lang: LangCode,
    pub score: f64,
    pub token_count: usize,
}

/// Scores every document in corpus order.
pub fn score_corpus(state: &ScorerState, corpus: &Corpus) -> Result<Vec<ScoredDocument>> {
    corpus.iter().map(|d| score_one(state, d)).collect()
}

/// [`score_corpus`] spread over `workers` threads; output is identical for any worker count.
pub fn score_corpus_sharded(state: &ScorerState, corpus: &Corpus, workers: usize) -> Result<Vec<ScoredDocument>> {
    if workers <= 1 {
        return score_corpus(state, corpus);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::validation(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| corpus.documents().par_iter().map(|d| score_one(state, d)).collect())
}

fn score_one(state: &ScorerState, doc: &crate::corpus::Document) -> Result<ScoredDocument> {
    let s = score(state, doc).map_err(|e| match (state.backend, e) {
        (Backend::LatentTable, crate::Error::UnknownDocument(id)) => Error::validation(format!(
            "latent_table scorer cannot score unseen document `{id}`; use a hashed_linear checkpoint"
        )),
        (_, e) => e,
    })?;
    if !s.is_finite() {
        return Err(Error::validation(format!("non-finite score for `{}`", doc.id)));
    }
    Ok(ScoredDocument {
        doc_id: doc.id.clone(),
        lang: doc.lang.clone(),
        score: s,
        token_count: doc.token_count(),
    })
}

pub fn read_scored(path: &Path) -> Result<Vec<ScoredDocument>> {
    let docs: Vec<ScoredDocument> = jsonl::read(path)?;
    let mut seen = HashSet::new();
    for (i, d) in docs.iter().enumerate() {
        if !d.score.is_finite() || d.token_count == 0 {
            return Err(Error::parse(path, i + 1, format!("`{}` needs a finite score and token_count >= 1", d.doc_id)));
        }
        if !seen.insert(d.doc_id.as_str()) {
            return Err(Error::parse(path, i + 1, format!("duplicate document id `{}`", d.doc_id)));
        }
    }
    Ok(docs)
}

pub fn write_scored(path: &Path, docs: &[ScoredDocument]) -> Result<()> {
    jsonl::write(path, docs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageSelection {
    /// Language code, or `"*"` for a global selection.
    pub lang: String,
    pub fraction: f64,
    pub budget_tokens: usize,
    pub selected: Vec<String>,
    pub selected_tokens: usize,
    pub total_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionManifest {
    pub checkpoint_hash: String,
    pub fraction: f64,
    pub by_language: bool,
    pub languages: Vec<LanguageSelection>,
}

impl SelectionManifest {
    pub fn selected_ids(&self) -> impl Iterator<Item = &str> {
        self.languages.iter().flat_map(|l| l.selected.iter().map(String::as_str))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }
}

/// `ceil(fraction * total)`, ignoring representation error of a few ulps
/// so that e.g. `0.1 * 30` gives 3 rather than 4.
pub fn token_budget(fraction: f64, total: usize) -> usize {
    let raw = fraction * total as f64;
    let nearest = raw.round();
    if (raw - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        raw.ceil() as usize
    }
}

/// Score descending, then id ascending.
pub fn selection_order(a: &ScoredDocument, b: &ScoredDocument) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id))
}

fn select_bucket(lang: String, mut docs: Vec<&ScoredDocument>, fraction: f64) -> LanguageSelection {
    docs.sort_by(|a, b| selection_order(a, b));
    let total_tokens: usize = docs.iter().map(|d| d.token_count).sum();
    let budget_tokens = token_budget(fraction, total_tokens);
    let mut selected = Vec::new();
    let mut selected_tokens = 0;
    for d in docs {
        if selected_tokens >= budget_tokens {
            break;
        }
        selected_tokens += d.token_count;
        selected.push(d.doc_id.clone());
    }
    LanguageSelection {
        lang,
        fraction,
        budget_tokens,
        selected,
        selected_tokens,
        total_tokens,
    }
}

/// Greedily takes the best documents until their tokens reach
/// `ceil(fraction × total)`, per language or over the whole set.
pub fn select_top_fraction(scored: &[ScoredDocument], fraction: f64, by_language: bool) -> Result<SelectionManifest> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::validation(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    if scored.is_empty() {
        return Err(Error::validation("nothing to select from: scored set is empty"));
    }
    if let Some(d) = scored.iter().find(|d| !d.score.is_finite() || d.token_count == 0) {
        return Err(Error::validation(format!("`{}` needs a finite score and token_count >= 1", d.doc_id)));
    }
    let languages = if by_language {
        let mut buckets: BTreeMap<(usize, &LangCode), Vec<&ScoredDocument>> = BTreeMap::new();
        for d in scored {
            let order = d.lang.registry_index().unwrap_or(usize::MAX);
            buckets.entry((order, &d.lang)).or_default().push(d);
        }
        buckets
            .into_iter()
            .map(|((_, lang), docs)| select_bucket(lang.to_string(), docs, fraction))
            .collect()
    } else {
        vec![select_bucket(GLOBAL_SCOPE.to_owned(), scored.iter().collect(), fraction)]
    };
    Ok(SelectionManifest {
        checkpoint_hash: String::new(),
        fraction,
        by_language,
        languages,
    })
}

/// Jaccard overlap of the selected sets, pooled over all languages.
pub fn overlap_fraction(m1: &SelectionManifest, m2: &SelectionManifest) -> Result<f64> {
    let shape = |m: &SelectionManifest| -> Vec<(String, usize)> {
        m.languages.iter().map(|l| (l.lang.clone(), l.total_tokens)).collect()
    };
    if m1.fraction != m2.fraction || m1.by_language != m2.by_language || shape(m1) != shape(m2) {
        return Err(Error::validation(
            "manifests do not cover the same corpus and fraction (languages, token totals or fraction differ)",
        ));
    }
    let a: HashSet<&str> = m1.selected_ids().collect();
    let b: HashSet<&str> = m2.selected_ids().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return Ok(1.0);
    }
    Ok(a.intersection(&b).count() as f64 / union as f64)
}
