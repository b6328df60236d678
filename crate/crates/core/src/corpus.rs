//! Documents, corpora, token counting and the language registry.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::jsonl;

/// English plus the 17 target languages, in registry order.
pub const REGISTERED_LANGUAGES: [&str; 18] = [
    "en", "ar", "zh", "nl", "fr", "de", "id", "it", "ja", "ko", "pt", "ru", "es", "th", "tr", "vi", "ms", "tl",
];

/// A lowercase two- or three-letter language identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LangCode(String);

impl LangCode {
    pub fn new(code: &str) -> Result<Self> {
        let ok = (2..=3).contains(&code.len()) && code.bytes().all(|b| b.is_ascii_lowercase());
        if ok {
            Ok(LangCode(code.to_owned()))
        } else {
            Err(Error::validation(format!("invalid language code `{code}`: expected [a-z]{{2,3}}")))
        }
    }

    pub fn english() -> Self {
        LangCode("en".to_owned())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_english(&self) -> bool {
        self.0 == "en"
    }

    /// Position in [`REGISTERED_LANGUAGES`], if registered.
    pub fn registry_index(&self) -> Option<usize> {
        REGISTERED_LANGUAGES.iter().position(|l| *l == self.0)
    }

    /// Parses and checks membership in the registry.
    pub fn registered(code: &str) -> Result<Self> {
        let lang = LangCode::new(code)?;
        if lang.registry_index().is_none() {
            return Err(Error::validation(format!(
                "unknown language `{code}`; registered codes: {}",
                REGISTERED_LANGUAGES.join(", ")
            )));
        }
        Ok(lang)
    }

    /// All registered codes except English.
    pub fn targets() -> Vec<LangCode> {
        REGISTERED_LANGUAGES[1..].iter().map(|l| LangCode((*l).to_owned())).collect()
    }
}

impl fmt::Display for LangCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for LangCode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LangCode::registered(s)
    }
}

impl Serialize for LangCode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for LangCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        LangCode::registered(&s).map_err(serde::de::Error::custom)
    }
}

/// Scripts written without spaces: each scalar is a token of its own.
fn is_standalone_scalar(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF     // CJK Unified Ideographs
        | 0x3040..=0x309F   // Hiragana
        | 0x30A0..=0x30FF   // Katakana
        | 0xAC00..=0xD7AF   // Hangul Syllables
        | 0x0E00..=0x0E7F)  // Thai
}

/// Iterator over the tokens of a text. See [`count_tokens`] for the rule.
pub struct Tokens<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Iterator for Tokens<'a> {
    type Item = &'a str;

    fn next(&mut self) -> Option<&'a str> {
        let rest = &self.text[self.pos..];
        let mut start = None;
        for (off, c) in rest.char_indices() {
            let at = self.pos + off;
            if c.is_whitespace() {
                if let Some(s) = start {
                    self.pos = at;
                    return Some(&self.text[s..at]);
                }
            } else if is_standalone_scalar(c) {
                if let Some(s) = start {
                    self.pos = at;
                    return Some(&self.text[s..at]);
                }
                let end = at + c.len_utf8();
                self.pos = end;
                return Some(&self.text[at..end]);
            } else if start.is_none() {
                start = Some(at);
            }
        }
        self.pos = self.text.len();
        start.map(|s| &self.text[s..])
    }
}

pub fn tokenize(text: &str) -> Tokens<'_> {
    Tokens { text, pos: 0 }
}

/// Number of maximal non-whitespace runs, with every CJK, kana, Hangul or
/// Thai scalar counted as a token of its own.
pub fn count_tokens(text: &str) -> usize {
    tokenize(text).count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Document {
    pub id: String,
    pub lang: LangCode,
    pub text: String,
    #[serde(skip)]
    token_count: usize,
}

impl Document {
    /// Fails on texts without any token.
    pub fn new(id: impl Into<String>, lang: LangCode, text: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let text = text.into();
        let token_count = count_tokens(&text);
        if token_count == 0 {
            return Err(Error::validation(format!("document `{id}` has empty text")));
        }
        Ok(Document {
            id,
            lang,
            text,
            token_count,
        })
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }
}

/// An ordered, id-unique collection of documents.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    documents: Vec<Document>,
    index: HashMap<String, usize>,
    totals: BTreeMap<LangCode, usize>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_documents(docs: impl IntoIterator<Item = Document>) -> Result<Self> {
        let mut corpus = Corpus::new();
        for doc in docs {
            corpus.push(doc)?;
        }
        Ok(corpus)
    }

    pub fn push(&mut self, doc: Document) -> Result<()> {
        if self.index.contains_key(&doc.id) {
            return Err(Error::validation(format!("duplicate document id `{}`", doc.id)));
        }
        *self.totals.entry(doc.lang.clone()).or_insert(0) += doc.token_count;
        self.index.insert(doc.id.clone(), self.documents.len());
        self.documents.push(doc);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&i| &self.documents[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn token_total(&self, lang: &LangCode) -> usize {
        self.totals.get(lang).copied().unwrap_or(0)
    }

    pub fn token_totals(&self) -> &BTreeMap<LangCode, usize> {
        &self.totals
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;
    fn into_iter(self) -> Self::IntoIter {
        self.documents.iter()
    }
}

const CORPUS_FIELDS: [&str; 3] = ["id", "lang", "text"];

/// Loads a JSON Lines corpus with records `{id, lang, text}`.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let mut corpus = Corpus::new();
    jsonl::for_each_line(path, |line_no, line| {
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::parse(path, line_no, "expected a JSON object"))?;
        let field = |name: &str| -> Result<&str> {
            obj.get(name)
                .ok_or_else(|| Error::parse(path, line_no, format!("missing field `{name}`")))?
                .as_str()
                .ok_or_else(|| Error::parse(path, line_no, format!("field `{name}` must be a string")))
        };
        let id = field("id")?;
        let lang = field("lang")?;
        let text = field("text")?;
        for key in obj.keys().filter(|k| !CORPUS_FIELDS.contains(&k.as_str())) {
            tracing::warn!("{}, line {line_no}: ignoring extra field `{key}`", path.display());
        }
        let at_line = |e: Error| Error::Validation(format!("{}, line {line_no}: {e}", path.display()));
        let lang = LangCode::registered(lang).map_err(at_line)?;
        let doc = Document::new(id, lang, text).map_err(at_line)?;
        corpus.push(doc).map_err(at_line)
    })?;
    Ok(corpus)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    jsonl::write(path, corpus.iter())
}

pub fn write_corpus<W: std::io::Write>(corpus: &Corpus, writer: W) -> std::io::Result<()> {
    jsonl::write_to(writer, corpus.iter())
}
