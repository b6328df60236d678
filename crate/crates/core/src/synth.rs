//! Deterministic synthetic corpora with known latent quality.
//!
//! Each document has a latent quality `q ~ N(0, 1)`. Its words are drawn
//! from a fixed vocabulary where word `k` has affinity `c_k ~ N(0, 1)` and
//! is sampled with probability proportional to `exp(sharpness · q · c_k)`,
//! so word counts carry a linear signal about `q`. Raters observe
//! `q + N(0, noise²)`.

use std::collections::{BTreeMap, HashSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::corpus::{Corpus, Document, LangCode};
use crate::error::Result;
use crate::raters::{aggregate_pair_for, PairJudgment, RaterScoreRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct WorldOptions {
    pub vocab_size: usize,
    pub sharpness: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for WorldOptions {
    fn default() -> Self {
        WorldOptions {
            vocab_size: 400,
            sharpness: 1.5,
            min_len: 40,
            max_len: 120,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub vocab: Vec<String>,
    pub affinity: Vec<f64>,
    options: WorldOptions,
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

impl SyntheticWorld {
    pub fn new(options: WorldOptions, rng: &mut impl Rng) -> Self {
        let mut seen = HashSet::new();
        let mut vocab = Vec::with_capacity(options.vocab_size);
        while vocab.len() < options.vocab_size {
            let syllables = rng.gen_range(2..=3);
            let word: String = (0..syllables)
                .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
                .collect();
            if seen.insert(word.clone()) {
                vocab.push(word);
            }
        }
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let affinity = (0..options.vocab_size).map(|_| normal.sample(rng)).collect();
        SyntheticWorld { vocab, affinity, options }
    }

    /// Text of a document with latent quality `quality`.
    pub fn text(&self, quality: f64, rng: &mut impl Rng) -> String {
        let weights: Vec<f64> = self.affinity.iter().map(|c| (self.options.sharpness * quality * c).exp()).collect();
        let dist = WeightedIndex::new(&weights).expect("positive weights");
        let len = rng.gen_range(self.options.min_len..=self.options.max_len);
        let words: Vec<&str> = (0..len).map(|_| self.vocab[dist.sample(rng)].as_str()).collect();
        words.join(" ")
    }
}

/// English documents with their latent qualities, ids `{prefix}{index:05}`.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub qualities: Vec<f64>,
}

impl SyntheticCorpus {
    pub fn generate(world: &SyntheticWorld, n_docs: usize, prefix: &str, rng: &mut impl Rng) -> Result<Self> {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut corpus = Corpus::new();
        let mut qualities = Vec::with_capacity(n_docs);
        for i in 0..n_docs {
            let q = normal.sample(rng);
            corpus.push(Document::new(format!("{prefix}{i:05}"), LangCode::english(), world.text(q, rng))?)?;
            qualities.push(q);
        }
        Ok(SyntheticCorpus { corpus, qualities })
    }

    pub fn id(&self, i: usize) -> &str {
        &self.corpus.documents()[i].id
    }
}

/// `n_raters` raters scoring every document as `quality + N(0, noise²)`.
pub fn simulate_raters(
    docs: &SyntheticCorpus,
    n_raters: usize,
    noise: f64,
    rng: &mut impl Rng,
) -> Vec<RaterScoreRecord> {
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    let mut out = Vec::with_capacity(n_raters * docs.qualities.len());
    for r in 0..n_raters {
        for (i, q) in docs.qualities.iter().enumerate() {
            let eps = if noise > 0.0 { normal.sample(rng) } else { 0.0 };
            out.push(RaterScoreRecord {
                rater_id: format!("rater{r}"),
                doc_id: docs.id(i).to_owned(),
                score: q + eps,
            });
        }
    }
    out
}

/// Up to `n_pairs` distinct unordered pairs of document indices, each in random orientation.
pub fn random_pairs(n_docs: usize, n_pairs: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let max = n_docs * n_docs.saturating_sub(1) / 2;
    let want = n_pairs.min(max);
    let mut seen = HashSet::with_capacity(want);
    let mut out = Vec::with_capacity(want);
    if want * 2 > max {
        let mut all: Vec<(usize, usize)> = (0..n_docs).flat_map(|i| ((i + 1)..n_docs).map(move |j| (i, j))).collect();
        all.shuffle(rng);
        all.truncate(want);
        return all.into_iter().map(|(i, j)| if rng.gen_bool(0.5) { (i, j) } else { (j, i) }).collect();
    }
    while out.len() < want {
        let i = rng.gen_range(0..n_docs);
        let j = rng.gen_range(0..n_docs);
        if i != j && seen.insert((i.min(j), i.max(j))) {
            out.push((i, j));
        }
    }
    out
}

/// Aggregates rater scores over the given index pairs.
pub fn aggregate_pairs(
    docs: &SyntheticCorpus,
    scores: &[RaterScoreRecord],
    pairs: &[(usize, usize)],
) -> Result<Vec<PairJudgment>> {
    let mut by_doc: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
    for r in scores {
        by_doc.entry(r.doc_id.as_str()).or_default().insert(r.rater_id.clone(), r.score);
    }
    pairs
        .iter()
        .map(|&(a, b)| {
            let (ia, ib) = (docs.id(a), docs.id(b));
            aggregate_pair_for(ia, ib, &by_doc[ia], &by_doc[ib])
        })
        .collect()
}

/// Judgments from raters whose noise is drawn afresh for every comparison:
/// rater `n` sees `q_a + e` and `q_b + e'` with independent `e, e' ~ N(0, noise²)`.
pub fn noisy_comparisons(
    docs: &SyntheticCorpus,
    pairs: &[(usize, usize)],
    n_raters: usize,
    noise: f64,
    rng: &mut impl Rng,
) -> Result<Vec<PairJudgment>> {
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    let draw = |rng: &mut dyn rand::RngCore| if noise > 0.0 { normal.sample(rng) } else { 0.0 };
    pairs
        .iter()
        .map(|&(a, b)| {
            let mut sa = BTreeMap::new();
            let mut sb = BTreeMap::new();
            for r in 0..n_raters {
                sa.insert(format!("rater{r}"), docs.qualities[a] + draw(rng));
                sb.insert(format!("rater{r}"), docs.qualities[b] + draw(rng));
            }
            aggregate_pair_for(docs.id(a), docs.id(b), &sa, &sb)
        })
        .collect()
}

/// A complete English rating setup: corpus, compared pairs and aggregated judgments.
#[derive(Debug, Clone)]
pub struct RatedSetup {
    pub world: SyntheticWorld,
    pub docs: SyntheticCorpus,
    pub pairs: Vec<(usize, usize)>,
    pub judgments: Vec<PairJudgment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetupOptions {
    pub world: WorldOptions,
    pub n_docs: usize,
    pub n_pairs: usize,
    pub n_raters: usize,
    pub noise: f64,
}

impl Default for SetupOptions {
    fn default() -> Self {
        SetupOptions {
            world: WorldOptions::default(),
            n_docs: 200,
            n_pairs: 5000,
            n_raters: 4,
            noise: 0.3,
        }
    }
}

/// Synthetic English documents judged by raters whose noise is drawn
/// afresh for every comparison (see [`noisy_comparisons`]).
pub fn rated_setup(options: &SetupOptions, seed: u64) -> Result<RatedSetup> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = SyntheticWorld::new(options.world.clone(), &mut rng);
    let docs = SyntheticCorpus::generate(&world, options.n_docs, "doc", &mut rng)?;
    let pairs = random_pairs(options.n_docs, options.n_pairs, &mut rng);
    let judgments = noisy_comparisons(&docs, &pairs, options.n_raters, options.noise, &mut rng)?;
    Ok(RatedSetup {
        world,
        docs,
        pairs,
        judgments,
    })
}
