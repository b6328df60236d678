//! Multilingual training-pair construction.
//!
//! English judgments are projected onto translated monolingual and
//! cross-lingual pairs with their labels copied verbatim, and single
//! documents translated into two languages become neutral parallel pairs.

use std::collections::{BTreeSet, HashMap};
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{load_corpus, tokenize, Corpus, Document, LangCode};
use crate::error::{Error, Result};
use crate::raters::{PairJudgment, PairKind};

/// Default mix proportions: English, monolingual, cross-lingual, parallel.
pub const DEFAULT_MIX: [usize; 4] = [75_000, 150_000, 150_000, 75_000];

/// Produces translated documents. Implementations must be deterministic.
pub trait TranslationProvider {
    fn translate(&self, doc: &Document, target: &LangCode) -> Result<Document>;
}

/// Id of `doc` translated into `lang`.
pub fn translated_id(id: &str, lang: &LangCode) -> String {
    format!("{id}:{lang}")
}

/// Source id of a translated document, if it carries a `:lang` suffix.
pub fn source_id(id: &str) -> &str {
    match id.rsplit_once(':') {
        Some((src, lang)) if LangCode::new(lang).is_ok() => src,
        _ => id,
    }
}

/// Deterministic token-for-token substitution standing in for machine translation.
#[derive(Debug, Clone, Copy)]
pub struct PseudoTranslator {
    pub seed: u64,
}

impl PseudoTranslator {
    pub fn new(seed: u64) -> Self {
        PseudoTranslator { seed }
    }

    pub fn translate_token(&self, token: &str, lang: &LangCode) -> String {
        let mut h = FnvHasher::default();
        h.write(&self.seed.to_le_bytes());
        h.write(lang.as_str().as_bytes());
        h.write(&[0xff]);
        h.write(token.as_bytes());
        format!("{lang}{}", base36(h.finish()))
    }
}

fn base36(mut n: u64) -> String {
    const DIGITS: &[u8; 36] = b"0123456789abcdefghijklmnopqrstuvwxyz";
    let mut buf = Vec::with_capacity(13);
    loop {
        buf.push(DIGITS[(n % 36) as usize]);
        n /= 36;
        if n == 0 {
            break;
        }
    }
    buf.reverse();
    String::from_utf8(buf).expect("ascii digits")
}

impl TranslationProvider for PseudoTranslator {
    fn translate(&self, doc: &Document, target: &LangCode) -> Result<Document> {
        let words: Vec<String> = tokenize(&doc.text).map(|t| self.translate_token(t, target)).collect();
        Document::new(translated_id(&doc.id, target), target.clone(), words.join(" "))
    }
}

/// Serves pre-translated documents whose ids follow `source:lang`.
#[derive(Debug, Clone)]
pub struct FileTranslator {
    docs: HashMap<(String, LangCode), Document>,
}

impl FileTranslator {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_corpus(load_corpus(path)?))
    }

    pub fn from_corpus(corpus: Corpus) -> Self {
        let docs = corpus
            .iter()
            .map(|d| ((source_id(&d.id).to_owned(), d.lang.clone()), d.clone()))
            .collect();
        FileTranslator { docs }
    }
}

impl TranslationProvider for FileTranslator {
    fn translate(&self, doc: &Document, target: &LangCode) -> Result<Document> {
        let key = (doc.id.clone(), target.clone());
        let found = self.docs.get(&key).ok_or_else(|| Error::Translation {
            doc: doc.id.clone(),
            lang: target.to_string(),
            message: "no pre-translated document".into(),
        })?;
        let mut out = found.clone();
        out.id = translated_id(&doc.id, target);
        Ok(out)
    }
}

/// `doc` in language `lang`; identity when it is already there.
fn render(doc: &Document, lang: &LangCode, tp: &dyn TranslationProvider) -> Result<Document> {
    if &doc.lang == lang {
        return Ok(doc.clone());
    }
    let out = tp.translate(doc, lang)?;
    if &out.lang != lang || out.id != translated_id(&doc.id, lang) {
        return Err(Error::Translation {
            doc: doc.id.clone(),
            lang: lang.to_string(),
            message: format!("provider returned `{}` in `{}`", out.id, out.lang),
        });
    }
    Ok(out)
}

fn resolve<'a>(corpus: &'a Corpus, id: &str) -> Result<&'a Document> {
    corpus.get(id).ok_or_else(|| Error::UnknownDocument(id.to_owned()))
}

fn require_english(j: &PairJudgment) -> Result<()> {
    if j.kind != PairKind::English {
        return Err(Error::validation(format!(
            "can only project english judgments, got {} pair {}",
            j.kind,
            j.pair_id()
        )));
    }
    Ok(())
}

fn with_pair_context(j: &PairJudgment, e: Error) -> Error {
    match e {
        Error::Translation { doc, lang, message } => Error::Translation {
            doc,
            lang,
            message: format!("{message} (pair {})", j.pair_id()),
        },
        other => other,
    }
}

/// A projected pair together with the documents it references.
#[derive(Debug, Clone)]
pub struct Projected {
    pub judgment: PairJudgment,
    pub doc_a: Document,
    pub doc_b: Document,
}

pub fn project_monolingual(
    j: &PairJudgment,
    docs: &Corpus,
    m: &LangCode,
    tp: &dyn TranslationProvider,
) -> Result<Projected> {
    require_english(j)?;
    if m.is_english() {
        return Err(Error::validation("monolingual projection needs a non-English target"));
    }
    project(j, docs, m, m, PairKind::Monolingual, tp)
}

pub fn project_crosslingual(
    j: &PairJudgment,
    docs: &Corpus,
    m: &LangCode,
    m2: &LangCode,
    tp: &dyn TranslationProvider,
) -> Result<Projected> {
    require_english(j)?;
    if m == m2 {
        return Err(Error::validation(format!(
            "cross-lingual projection needs two different languages, got `{m}` twice"
        )));
    }
    project(j, docs, m, m2, PairKind::Crosslingual, tp)
}

fn project(
    j: &PairJudgment,
    docs: &Corpus,
    m: &LangCode,
    m2: &LangCode,
    kind: PairKind,
    tp: &dyn TranslationProvider,
) -> Result<Projected> {
    let a = resolve(docs, &j.doc_a)?;
    let b = resolve(docs, &j.doc_b)?;
    let doc_a = render(a, m, tp).map_err(|e| with_pair_context(j, e))?;
    let doc_b = render(b, m2, tp).map_err(|e| with_pair_context(j, e))?;
    let judgment = PairJudgment {
        doc_a: doc_a.id.clone(),
        doc_b: doc_b.id.clone(),
        p_b_over_a: j.p_b_over_a,
        kind,
        source_pair: Some(j.pair_id()),
    };
    judgment.validate()?;
    Ok(Projected { judgment, doc_a, doc_b })
}

pub fn make_parallel(doc: &Document, m: &LangCode, m2: &LangCode, tp: &dyn TranslationProvider) -> Result<Projected> {
    if m == m2 {
        return Err(Error::validation(format!("parallel pair needs two different languages, got `{m}` twice")));
    }
    let doc_a = render(doc, m, tp)?;
    let doc_b = render(doc, m2, tp)?;
    let judgment = PairJudgment::new(&doc_a.id, &doc_b.id, 0.5, PairKind::Parallel)?.with_source(doc.id.clone());
    Ok(Projected { judgment, doc_a, doc_b })
}

/// Requested composition of a training mix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairMixSpec {
    pub n_english: usize,
    pub n_monolingual: usize,
    pub n_crosslingual: usize,
    pub n_parallel: usize,
    pub languages: Vec<LangCode>,
    pub seed: u64,
}

impl PairMixSpec {
    /// The default 1:2:2:1 ratio anchored on `n_english`.
    pub fn default_ratio(n_english: usize, languages: Vec<LangCode>, seed: u64) -> Self {
        PairMixSpec {
            n_english,
            n_monolingual: 2 * n_english,
            n_crosslingual: 2 * n_english,
            n_parallel: n_english,
            languages,
            seed,
        }
    }

    /// Counts `round(ratio_i * scale)`.
    pub fn scaled(ratio: [usize; 4], scale: f64, languages: Vec<LangCode>, seed: u64) -> Self {
        let n = |x: usize| (x as f64 * scale).round() as usize;
        PairMixSpec {
            n_english: n(ratio[0]),
            n_monolingual: n(ratio[1]),
            n_crosslingual: n(ratio[2]),
            n_parallel: n(ratio[3]),
            languages,
            seed,
        }
    }

    pub fn total(&self) -> usize {
        self.n_english + self.n_monolingual + self.n_crosslingual + self.n_parallel
    }

    fn validate(&self) -> Result<()> {
        if self.languages.is_empty() {
            return Err(Error::validation("pair mix needs at least one target language"));
        }
        if self.languages.iter().any(LangCode::is_english) {
            return Err(Error::validation("pair mix target languages must exclude `en`"));
        }
        let unique: BTreeSet<_> = self.languages.iter().collect();
        if unique.len() != self.languages.len() {
            return Err(Error::validation("pair mix target languages contain duplicates"));
        }
        Ok(())
    }
}

/// A constructed training mix and every document it references.
#[derive(Debug, Clone)]
pub struct PairMix {
    pub judgments: Vec<PairJudgment>,
    pub documents: Corpus,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample_without_replacement(n_available: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n_available).collect();
    idx.shuffle(rng);
    idx.truncate(n);
    idx
}

/// Language pairs `(m, m2)`, `m != m2`, with each side cycling round-robin
/// through `langs`. With a single language the other side is English.
fn language_pairs(langs: &[LangCode], n: usize) -> Vec<(LangCode, LangCode)> {
    let k = langs.len();
    (0..n)
        .map(|i| {
            if k == 1 {
                let en = LangCode::english();
                if i % 2 == 0 {
                    (langs[0].clone(), en)
                } else {
                    (en, langs[0].clone())
                }
            } else {
                let offset = 1 + (i / k) % (k - 1);
                (langs[i % k].clone(), langs[(i + offset) % k].clone())
            }
        })
        .collect()
}

/// Builds the multilingual training mix. Output is ordered by kind, then
/// source pair, then the two document ids, independent of construction order.
pub fn build_mix(
    judgments: &[PairJudgment],
    docs: &Corpus,
    spec: &PairMixSpec,
    tp: &dyn TranslationProvider,
) -> Result<PairMix> {
    spec.validate()?;
    for j in judgments {
        require_english(j)?;
    }
    let source_docs: Vec<&str> = judgments
        .iter()
        .flat_map(|j| [j.doc_a.as_str(), j.doc_b.as_str()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut shortfalls = Vec::new();
    for (kind, want, have) in [
        (PairKind::English, spec.n_english, judgments.len()),
        (PairKind::Monolingual, spec.n_monolingual, judgments.len()),
        (PairKind::Crosslingual, spec.n_crosslingual, judgments.len()),
        (PairKind::Parallel, spec.n_parallel, source_docs.len()),
    ] {
        if want > have {
            shortfalls.push(format!("{kind}: need {want}, have {have} (short {})", want - have));
        }
    }
    if !shortfalls.is_empty() {
        return Err(Error::validation(format!("insufficient source pairs: {}", shortfalls.join("; "))));
    }

    let mut langs = spec.languages.clone();
    langs.shuffle(&mut stream_rng(spec.seed, 0));

    let mut out: Vec<PairJudgment> = Vec::with_capacity(spec.total());
    let mut documents: Vec<Document> = Vec::new();
    let mut keep = |p: Projected, out: &mut Vec<PairJudgment>| {
        documents.push(p.doc_a);
        documents.push(p.doc_b);
        out.push(p.judgment);
    };

    for &i in &sample_without_replacement(judgments.len(), spec.n_english, &mut stream_rng(spec.seed, 1)) {
        let j = &judgments[i];
        let a = resolve(docs, &j.doc_a)?.clone();
        let b = resolve(docs, &j.doc_b)?.clone();
        let mut e = j.clone();
        e.source_pair = Some(j.pair_id());
        keep(Projected { judgment: e, doc_a: a, doc_b: b }, &mut out);
    }

    let mono = sample_without_replacement(judgments.len(), spec.n_monolingual, &mut stream_rng(spec.seed, 2));
    for (slot, &i) in mono.iter().enumerate() {
        let lang = &langs[slot % langs.len()];
        keep(project_monolingual(&judgments[i], docs, lang, tp)?, &mut out);
    }

    let cross = sample_without_replacement(judgments.len(), spec.n_crosslingual, &mut stream_rng(spec.seed, 3));
    for (&i, (m, m2)) in cross.iter().zip(language_pairs(&langs, cross.len())) {
        keep(project_crosslingual(&judgments[i], docs, &m, &m2, tp)?, &mut out);
    }

    let par = sample_without_replacement(source_docs.len(), spec.n_parallel, &mut stream_rng(spec.seed, 4));
    for (&i, (m, m2)) in par.iter().zip(language_pairs(&langs, par.len())) {
        let doc = resolve(docs, source_docs[i])?;
        keep(make_parallel(doc, &m, &m2, tp)?, &mut out);
    }

    out.sort_by(|x, y| {
        (x.kind, &x.source_pair, &x.doc_a, &x.doc_b).cmp(&(y.kind, &y.source_pair, &y.doc_a, &y.doc_b))
    });

    let mut by_id: HashMap<String, Document> = HashMap::new();
    for d in documents {
        by_id.entry(d.id.clone()).or_insert(d);
    }
    let mut corpus = Corpus::new();
    for j in &out {
        for id in [&j.doc_a, &j.doc_b] {
            if let Some(d) = by_id.remove(id) {
                corpus.push(d)?;
            }
        }
    }
    Ok(PairMix { judgments: out, documents: corpus })
}
