//! Trainable scalar quality scorer.
//!
//! Two backends share one objective: a latent table holding one free score
//! per known document, and a linear model over hashed n-gram features that
//! can score unseen text. Both are fit by minimising the mean Bradley–Terry
//! cross-entropy over non-parallel pairs plus `lambda` times the mean
//! parallel-pair penalty.

mod checkpoint;
mod features;
pub mod loss;
mod optim;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::raters::{PairJudgment, PairKind, DEFAULT_MARGIN};

pub use checkpoint::{checkpoint_bytes, checkpoint_digest, load_checkpoint, load_checkpoint_for, save_checkpoint, state_from_bytes, CHECKPOINT_VERSION};
pub use features::{featurize, featurize_text, FeatureVector};
pub use loss::{pairwise_loss, parallel_loss};
pub use optim::{adam_update, AdamParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    LatentTable,
    HashedLinear,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::LatentTable => "latent_table",
            Backend::HashedLinear => "hashed_linear",
        })
    }
}

impl FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latent_table" | "latent" => Ok(Backend::LatentTable),
            "hashed_linear" | "hashed" => Ok(Backend::HashedLinear),
            other => Err(Error::validation(format!(
                "unknown backend `{other}` (expected latent_table or hashed_linear)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: u32,
    pub batch_size: u32,
    pub margin: f64,
    pub seed: u64,
    pub hash_bits: u32,
    pub max_tokens_per_doc: u32,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lambda: 0.5,
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 64,
            margin: DEFAULT_MARGIN,
            seed: 0,
            hash_bits: 18,
            max_tokens_per_doc: 512,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainingConfig {
    /// Defaults with the backend's learning rate (0.1 latent, 0.05 hashed).
    pub fn for_backend(backend: Backend) -> Self {
        let learning_rate = match backend {
            Backend::LatentTable => 0.1,
            Backend::HashedLinear => 0.05,
        };
        TrainingConfig {
            learning_rate,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::validation(m));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be a finite non-negative number, got {}", self.lambda));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return fail("epochs must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.margin) {
            return fail(format!("margin must lie in [0, 1], got {}", self.margin));
        }
        if !(10..=24).contains(&self.hash_bits) {
            return fail(format!("hash_bits must lie in [10, 24], got {}", self.hash_bits));
        }
        if self.max_tokens_per_doc == 0 {
            return fail("max_tokens_per_doc must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return fail("adaptive-moment constants need beta1, beta2 in [0, 1) and epsilon > 0".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Parameters, optimizer moments and configuration of a scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerState {
    pub backend: Backend,
    pub config: TrainingConfig,
    /// Latent: one score per document. Hashed: `2^hash_bits` weights then the bias.
    pub params: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    doc_ids: Vec<String>,
    doc_index: HashMap<String, usize>,
}

impl ScorerState {
    /// Zero-initialised latent table over `doc_ids`.
    pub fn latent(doc_ids: Vec<String>, config: TrainingConfig) -> Result<Self> {
        let mut doc_index = HashMap::with_capacity(doc_ids.len());
        for (i, id) in doc_ids.iter().enumerate() {
            if doc_index.insert(id.clone(), i).is_some() {
                return Err(Error::validation(format!("duplicate document id `{id}` in latent table")));
            }
        }
        let n = doc_ids.len();
        Ok(ScorerState {
            backend: Backend::LatentTable,
            config,
            params: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            doc_ids,
            doc_index,
        })
    }

    /// Zero-initialised hashed linear model sized by `config.hash_bits`.
    pub fn hashed(config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        let n = (1usize << config.hash_bits) + 1;
        Ok(ScorerState {
            backend: Backend::HashedLinear,
            config,
            params: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            doc_ids: Vec::new(),
            doc_index: HashMap::new(),
        })
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn bias(&self) -> f64 {
        match self.backend {
            Backend::HashedLinear => *self.params.last().expect("hashed model has a bias"),
            Backend::LatentTable => 0.0,
        }
    }

    fn latent_slot(&self, id: &str) -> Result<usize> {
        self.doc_index.get(id).copied().ok_or_else(|| Error::UnknownDocument(id.to_owned()))
    }

    fn features(&self, doc: &Document) -> Result<FeatureVector> {
        featurize(doc, self.config.hash_bits, self.config.max_tokens_per_doc as usize)
    }
}

/// Scalar quality score of `doc`.
pub fn score(state: &ScorerState, doc: &Document) -> Result<f64> {
    match state.backend {
        Backend::LatentTable => Ok(state.params[state.latent_slot(&doc.id)?]),
        Backend::HashedLinear => Ok(state.features(doc)?.dot(&state.params) + state.bias()),
    }
}

enum Slot {
    Latent(usize),
    Features(FeatureVector),
}

struct PreparedPair {
    a: usize,
    b: usize,
    p_b_over_a: f64,
    parallel: bool,
}

/// A judgment set with every referenced document resolved once.
struct Prepared {
    slots: Vec<Slot>,
    pairs: Vec<PreparedPair>,
}

impl Prepared {
    fn new(judgments: &[PairJudgment], state: &ScorerState, corpus: &Corpus) -> Result<Self> {
        let mut ids: HashMap<&str, usize> = HashMap::new();
        let mut slots = Vec::new();
        let mut pairs = Vec::with_capacity(judgments.len());
        for j in judgments {
            let mut resolved = [0usize; 2];
            for (k, id) in [j.doc_a.as_str(), j.doc_b.as_str()].into_iter().enumerate() {
                resolved[k] = match ids.get(id) {
                    Some(&s) => s,
                    None => {
                        let slot = match state.backend {
                            Backend::LatentTable => Slot::Latent(state.latent_slot(id)?),
                            Backend::HashedLinear => {
                                let doc = corpus.get(id).ok_or_else(|| Error::UnknownDocument(id.to_owned()))?;
                                Slot::Features(state.features(doc)?)
                            }
                        };
                        slots.push(slot);
                        ids.insert(id, slots.len() - 1);
                        slots.len() - 1
                    }
                };
            }
            pairs.push(PreparedPair {
                a: resolved[0],
                b: resolved[1],
                p_b_over_a: j.p_b_over_a,
                parallel: j.kind == PairKind::Parallel,
            });
        }
        Ok(Prepared { slots, pairs })
    }

    fn slot_score(&self, state: &ScorerState, slot: usize) -> f64 {
        match &self.slots[slot] {
            Slot::Latent(i) => state.params[*i],
            Slot::Features(f) => f.dot(&state.params) + state.bias(),
        }
    }

    fn scores(&self, state: &ScorerState) -> Vec<f64> {
        (0..self.slots.len()).map(|s| self.slot_score(state, s)).collect()
    }

    fn add_score_grad(&self, slot: usize, scale: f64, grad: &mut [f64]) {
        match &self.slots[slot] {
            Slot::Latent(i) => grad[*i] += scale,
            Slot::Features(f) => {
                f.add_scaled_to(grad, scale);
                *grad.last_mut().expect("bias") += scale;
            }
        }
    }

    /// Combined objective over `batch` (indices into `pairs`); accumulates
    /// its gradient into `grad` when given.
    fn objective(&self, state: &ScorerState, batch: &[usize], grad: Option<&mut [f64]>) -> f64 {
        let lambda = state.config.lambda;
        let n_par = batch.iter().filter(|&&i| self.pairs[i].parallel).count();
        let n_pw = batch.len() - n_par;
        let mut pw_sum = 0.0;
        let mut par_sum = 0.0;
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        for &i in batch {
            let pair = &self.pairs[i];
            let s_a = self.slot_score(state, pair.a);
            let s_b = self.slot_score(state, pair.b);
            let g_b = if pair.parallel {
                par_sum += loss::parallel_loss(s_a, s_b);
                lambda * loss::parallel_grad_b(s_a, s_b) / n_par as f64
            } else {
                pw_sum += loss::pairwise_loss(s_a, s_b, pair.p_b_over_a);
                loss::pairwise_grad_b(s_a, s_b, pair.p_b_over_a) / n_pw as f64
            };
            if grad.is_some() {
                coeffs.push((pair.b, g_b));
                coeffs.push((pair.a, -g_b));
            }
        }
        if let Some(g) = grad {
            for (slot, c) in coeffs {
                if c != 0.0 {
                    self.add_score_grad(slot, c, g);
                }
            }
        }
        let pw = if n_pw > 0 { pw_sum / n_pw as f64 } else { 0.0 };
        let par = if n_par > 0 { par_sum / n_par as f64 } else { 0.0 };
        pw + lambda * par
    }

    fn parallel_gap_mean(&self, state: &ScorerState) -> Option<f64> {
        let gaps: Vec<f64> = self
            .pairs
            .iter()
            .filter(|p| p.parallel)
            .map(|p| (self.slot_score(state, p.a) - self.slot_score(state, p.b)).abs())
            .collect();
        (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64)
    }
}

/// Mean pairwise loss over non-parallel pairs plus `lambda` times the mean
/// parallel loss over parallel pairs. An empty sub-batch contributes zero.
pub fn total_loss(batch: &[PairJudgment], state: &ScorerState, corpus: &Corpus) -> Result<f64> {
    let prepared = Prepared::new(batch, state, corpus)?;
    let all: Vec<usize> = (0..prepared.pairs.len()).collect();
    Ok(prepared.objective(state, &all, None))
}

/// Exact gradient of [`total_loss`] with respect to `state.params`.
pub fn gradient(batch: &[PairJudgment], state: &ScorerState, corpus: &Corpus) -> Result<Vec<f64>> {
    let prepared = Prepared::new(batch, state, corpus)?;
    let all: Vec<usize> = (0..prepared.pairs.len()).collect();
    let mut grad = vec![0.0; state.params.len()];
    prepared.objective(state, &all, Some(&mut grad));
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: u32,
    pub mean_loss: f64,
    pub parallel_gap_mean: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub state: ScorerState,
    pub log: Vec<EpochLog>,
}

/// Fits a scorer with seed-shuffled mini-batches and adaptive-moment updates.
///
/// Judgments are expected to be margin-filtered already. The latent table
/// covers every corpus document in corpus order. After each epoch the
/// objective is re-evaluated on the full judgment set and logged.
pub fn train(judgments: &[PairJudgment], corpus: &Corpus, backend: Backend, config: &TrainingConfig) -> Result<Trained> {
    config.validate()?;
    if judgments.is_empty() {
        return Err(Error::validation("cannot train on an empty judgment set"));
    }
    let mut state = match backend {
        Backend::LatentTable => ScorerState::latent(corpus.iter().map(|d| d.id.clone()).collect(), config.clone())?,
        Backend::HashedLinear => ScorerState::hashed(config.clone())?,
    };
    let prepared = Prepared::new(judgments, &state, corpus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..prepared.pairs.len()).collect();
    let mut grad = vec![0.0; state.params.len()];
    let hp = config.adam();
    let mut log = Vec::with_capacity(config.epochs as usize);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size as usize) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = prepared.objective(&state, batch, Some(&mut grad));
            let step = state.step + 1;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            let ScorerState { params, m, v, .. } = &mut state;
            adam_update(params, m, v, &grad, step, &hp);
            state.step = step;
            if !state.params.iter().all(|p| p.is_finite()) {
                return Err(Error::NonFiniteParameter { step });
            }
        }
        let all: Vec<usize> = (0..prepared.pairs.len()).collect();
        let mean_loss = prepared.objective(&state, &all, None);
        if !mean_loss.is_finite() {
            return Err(Error::NonFiniteLoss { step: state.step });
        }
        let entry = EpochLog {
            epoch,
            mean_loss,
            parallel_gap_mean: prepared.parallel_gap_mean(&state),
        };
        tracing::debug!(epoch, mean_loss, "epoch finished");
        log.push(entry);
    }
    Ok(Trained { state, log })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginAccuracy {
    pub margin: f64,
    /// `None` when no pair reaches the margin.
    pub accuracy: Option<f64>,
    pub pairs: usize,
}

/// Fraction of non-parallel pairs with `|2p - 1| >= margin` whose score
/// order agrees with the label direction. Score ties count as wrong.
pub fn evaluate_accuracy(
    state: &ScorerState,
    judgments: &[PairJudgment],
    corpus: &Corpus,
    margins: &[f64],
) -> Result<Vec<MarginAccuracy>> {
    if judgments.is_empty() {
        return Err(Error::validation("cannot evaluate accuracy on an empty judgment set"));
    }
    let prepared = Prepared::new(judgments, state, corpus)?;
    let scores = prepared.scores(state);
    Ok(margins
        .iter()
        .map(|&margin| {
            let mut total = 0usize;
            let mut correct = 0usize;
            for p in prepared.pairs.iter().filter(|p| !p.parallel) {
                if (2.0 * p.p_b_over_a - 1.0).abs() < margin {
                    continue;
                }
                total += 1;
                let diff = scores[p.b] - scores[p.a];
                let label = p.p_b_over_a - 0.5;
                if diff != 0.0 && label != 0.0 && (diff > 0.0) == (label > 0.0) {
                    correct += 1;
                }
            }
            MarginAccuracy {
                margin,
                accuracy: (total > 0).then(|| correct as f64 / total as f64),
                pairs: total,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LangCode;
    use std::f64::consts::LN_2;

    fn corpus(n: usize) -> Corpus {
        Corpus::from_documents((0..n).map(|i| {
            Document::new(format!("d{i}"), LangCode::english(), format!("tok{i} common words here {}", i * 7)).unwrap()
        }))
        .unwrap()
    }

    fn pair(a: usize, b: usize, p: f64, kind: PairKind) -> PairJudgment {
        PairJudgment::new(&format!("d{a}"), &format!("d{b}"), p, kind).unwrap()
    }

    fn latent(c: &Corpus, lambda: f64) -> ScorerState {
        let cfg = TrainingConfig {
            lambda,
            ..TrainingConfig::for_backend(Backend::LatentTable)
        };
        ScorerState::latent(c.iter().map(|d| d.id.clone()).collect(), cfg).unwrap()
    }

    #[test]
    fn score_lookup_and_zero_model() {
        let c = corpus(2);
        let mut s = latent(&c, 0.5);
        s.params[1] = 1.7;
        assert_eq!(score(&s, c.get("d1").unwrap()).unwrap(), 1.7);
        let stranger = Document::new("zz", LangCode::english(), "x").unwrap();
        assert!(matches!(score(&s, &stranger), Err(Error::UnknownDocument(_))));

        let h = ScorerState::hashed(TrainingConfig::default()).unwrap();
        assert_eq!(h.params.len(), (1 << 18) + 1);
        assert_eq!(score(&h, &stranger).unwrap(), 0.0);
    }

    #[test]
    fn loss_composition() {
        let c = corpus(3);
        let s = latent(&c, 0.5);
        let par = [pair(0, 1, 0.5, PairKind::Parallel)];
        assert!((total_loss(&par, &s, &c).unwrap() - LN_2).abs() < 1e-12);
        assert!(gradient(&par, &s, &c).unwrap().iter().all(|&g| g == 0.0));

        let mut s = latent(&c, 2.0);
        s.params = vec![0.3, -0.4, 1.1];
        let batch = [
            pair(0, 1, 0.8, PairKind::English),
            pair(1, 2, 0.5, PairKind::Parallel),
            pair(2, 0, 0.1, PairKind::Crosslingual),
        ];
        let by_hand = (pairwise_loss(0.3, -0.4, 0.8) + pairwise_loss(1.1, 0.3, 0.1)) / 2.0 + 2.0 * parallel_loss(-0.4, 1.1);
        assert!((total_loss(&batch, &s, &c).unwrap() - by_hand).abs() < 1e-12);

        let g = gradient(&[pair(0, 1, 0.75, PairKind::English)], &latent(&c, 0.5), &c).unwrap();
        assert_eq!(g[1], -0.25);
        assert_eq!(g[0], 0.25);
    }

    #[test]
    fn lambda_zero_ignores_parallel_pairs() {
        let c = corpus(3);
        let mut s = latent(&c, 0.0);
        s.params = vec![0.3, -0.4, 1.1];
        let with = [pair(0, 1, 0.8, PairKind::English), pair(1, 2, 0.5, PairKind::Parallel)];
        let without = [pair(0, 1, 0.8, PairKind::English)];
        assert_eq!(total_loss(&with, &s, &c).unwrap(), total_loss(&without, &s, &c).unwrap());
        assert_eq!(gradient(&with, &s, &c).unwrap(), gradient(&without, &s, &c).unwrap());
    }

    #[test]
    fn unresolvable_docs_error() {
        let c = corpus(2);
        let s = latent(&c, 0.5);
        let bad = [PairJudgment::new("d0", "nope", 0.2, PairKind::English).unwrap()];
        assert!(matches!(total_loss(&bad, &s, &c), Err(Error::UnknownDocument(id)) if id == "nope"));
        let h = ScorerState::hashed(TrainingConfig { hash_bits: 10, ..Default::default() }).unwrap();
        assert!(gradient(&bad, &h, &c).is_err());
    }

    #[test]
    fn two_doc_training_orders_scores() {
        let c = corpus(2);
        let js = [pair(0, 1, 1.0, PairKind::English)];
        for backend in [Backend::LatentTable, Backend::HashedLinear] {
            let cfg = TrainingConfig {
                hash_bits: 12,
                epochs: 5,
                ..TrainingConfig::for_backend(backend)
            };
            let t = train(&js, &c, backend, &cfg).unwrap();
            let sa = score(&t.state, c.get("d0").unwrap()).unwrap();
            let sb = score(&t.state, c.get("d1").unwrap()).unwrap();
            assert!(sb > sa, "{backend}: {sa} vs {sb}");
            assert_eq!(t.log.len(), 5);
            assert!(t.log.windows(2).all(|w| w[1].mean_loss <= w[0].mean_loss));
        }
    }

    #[test]
    fn train_rejects_bad_input() {
        let c = corpus(2);
        let cfg = TrainingConfig::for_backend(Backend::LatentTable);
        assert!(train(&[], &c, Backend::LatentTable, &cfg).is_err());
        let bad = TrainingConfig { margin: 1.5, ..cfg.clone() };
        assert!(train(&[pair(0, 1, 1.0, PairKind::English)], &c, Backend::LatentTable, &bad).is_err());
        let huge = TrainingConfig { learning_rate: f64::MAX, ..cfg };
        let err = train(&[pair(0, 1, 1.0, PairKind::English)], &c, Backend::LatentTable, &huge).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. } | Error::NonFiniteParameter { .. }), "{err}");
    }

    #[test]
    fn accuracy_rules() {
        let c = corpus(4);
        let mut s = latent(&c, 0.5);
        s.params = vec![0.0, 1.0, 2.0, 3.0];
        let js = [
            pair(0, 1, 1.0, PairKind::English),
            pair(3, 2, 0.1, PairKind::English),
            pair(1, 2, 0.7, PairKind::English),
            pair(0, 3, 0.5, PairKind::Parallel),
        ];
        let acc = evaluate_accuracy(&s, &js, &c, &[0.5, 0.8, 1.0]).unwrap();
        assert_eq!(acc[0].accuracy, Some(1.0));
        assert_eq!(acc[0].pairs, 2);
        assert_eq!(acc[1].pairs, 2);
        assert_eq!(acc[2].pairs, 1);

        let flat = latent(&c, 0.5);
        let acc = evaluate_accuracy(&flat, &js, &c, &[0.0]).unwrap();
        assert_eq!(acc[0].accuracy, Some(0.0));

        let only_par = [pair(0, 3, 0.5, PairKind::Parallel)];
        assert_eq!(evaluate_accuracy(&s, &only_par, &c, &[0.5]).unwrap()[0].accuracy, None);
        assert!(evaluate_accuracy(&s, &[], &c, &[0.5]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        for bad in [
            TrainingConfig { lambda: -1.0, ..Default::default() },
            TrainingConfig { learning_rate: 0.0, ..Default::default() },
            TrainingConfig { hash_bits: 9, ..Default::default() },
            TrainingConfig { hash_bits: 25, ..Default::default() },
            TrainingConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
