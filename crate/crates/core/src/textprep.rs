//! Text cleaning, TF-IDF vocabulary selection and index encoding.
//!
//! Cleaning follows the report-preparation rules: lowercase, split on
//! non-letter boundaries (which also removes numbers and punctuation), drop
//! stopwords, optionally drop Afrikaans-only reports via a word-list ratio
//! heuristic. The vocabulary is the top-K tokens by max-over-documents
//! TF-IDF, fitted on training documents only.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Index reserved for sequence padding.
pub const PAD_INDEX: usize = 0;
/// Index for out-of-vocabulary tokens (reachable only when vocabulary
/// filtering is disabled).
pub const UNK_INDEX: usize = 1;

#[derive(Debug, Clone)]
pub struct PrepConfig {
    pub stopword_list: Vec<String>,
    pub top_k: usize,
    pub max_len: usize,
    pub afrikaans_wordlist: Vec<String>,
    pub afrikaans_ratio_threshold: f64,
    pub afrikaans_filter_enabled: bool,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            stopword_list: Vec::new(),
            top_k: 1400,
            max_len: 400,
            afrikaans_wordlist: Vec::new(),
            afrikaans_ratio_threshold: 0.8,
            afrikaans_filter_enabled: false,
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::invalid("top_k must be at least 1"));
        }
        if self.max_len == 0 {
            return Err(Error::invalid("max_len must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.afrikaans_ratio_threshold) {
            return Err(Error::invalid(format!(
                "afrikaans ratio threshold {} not in [0, 1]",
                self.afrikaans_ratio_threshold
            )));
        }
        Ok(())
    }
}

/// Lowercase, split on non-letter boundaries, drop stopwords.
/// Numbers and punctuation vanish as separators; order is preserved.
/// Letters with no lowercase form (e.g. squared-letter symbols) are treated
/// as separators too, so the output is guaranteed uppercase-free.
pub fn tokenize(text: &str, config: &PrepConfig) -> Vec<String> {
    let lower = text.to_lowercase();
    lower
        .split(|c: char| !c.is_alphabetic() || c.is_uppercase())
        .filter(|t| !t.is_empty())
        .filter(|t| !config.stopword_list.iter().any(|s| s == t))
        .map(str::to_string)
        .collect()
}

/// True iff the fraction of tokens found in the Afrikaans word list reaches
/// the configured threshold. An empty token list is never Afrikaans-only.
pub fn detect_afrikaans_only(tokens: &[String], config: &PrepConfig) -> bool {
    if tokens.is_empty() {
        return false;
    }
    let hits = tokens
        .iter()
        .filter(|t| config.afrikaans_wordlist.iter().any(|w| w == *t))
        .count();
    hits as f64 / tokens.len() as f64 >= config.afrikaans_ratio_threshold
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocabEntry {
    pub token: String,
    pub index: usize,
    pub idf: f64,
}

/// Top-K TF-IDF token ranking with reserved pad/unknown indices.
/// Entry indices run contiguously from 2 in rank order.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
    fitted_on: usize,
    top_k: usize,
    lookup: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn fitted_on(&self) -> usize {
        self.fitted_on
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.lookup.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.lookup.contains_key(token)
    }

    /// Number of embedding rows needed: entries plus pad and unknown.
    pub fn table_rows(&self) -> usize {
        self.entries.len() + 2
    }

    /// Line-oriented text form: `#top_k=`, `#idf=smooth-ln`, `#fitted_on=`
    /// headers, then `token<TAB>index<TAB>idf` sorted by index.
    pub fn to_file_string(&self) -> String {
        let mut s = format!(
            "#top_k={}\n#idf=smooth-ln\n#fitted_on={}\n",
            self.top_k, self.fitted_on
        );
        for e in &self.entries {
            s.push_str(&format!("{}\t{}\t{}\n", e.token, e.index, e.idf));
        }
        s
    }

    pub fn from_file_string(text: &str) -> Result<Self> {
        let mut top_k = None;
        let mut fitted_on = None;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let (key, value) = rest
                    .split_once('=')
                    .ok_or_else(|| Error::invalid(format!("vocab line {}: bad header", i + 1)))?;
                match key {
                    "top_k" => {
                        top_k = Some(value.parse::<usize>().map_err(|e| {
                            Error::invalid(format!("vocab line {}: {e}", i + 1))
                        })?)
                    }
                    "fitted_on" => {
                        fitted_on = Some(value.parse::<usize>().map_err(|e| {
                            Error::invalid(format!("vocab line {}: {e}", i + 1))
                        })?)
                    }
                    "idf" => {
                        if value != "smooth-ln" {
                            return Err(Error::invalid(format!(
                                "vocab line {}: unsupported idf variant `{value}`",
                                i + 1
                            )));
                        }
                    }
                    other => {
                        return Err(Error::invalid(format!(
                            "vocab line {}: unknown header `{other}`",
                            i + 1
                        )))
                    }
                }
                continue;
            }
            let mut fields = line.split('\t');
            let (token, index, idf) = (fields.next(), fields.next(), fields.next());
            let (Some(token), Some(index), Some(idf)) = (token, index, idf) else {
                return Err(Error::invalid(format!("vocab line {}: expected 3 fields", i + 1)));
            };
            entries.push(VocabEntry {
                token: token.to_string(),
                index: index
                    .parse()
                    .map_err(|e| Error::invalid(format!("vocab line {}: {e}", i + 1)))?,
                idf: idf
                    .parse()
                    .map_err(|e| Error::invalid(format!("vocab line {}: {e}", i + 1)))?,
            });
        }
        let top_k = top_k.ok_or_else(|| Error::invalid("vocab file missing #top_k header"))?;
        let fitted_on =
            fitted_on.ok_or_else(|| Error::invalid("vocab file missing #fitted_on header"))?;
        for (rank, e) in entries.iter().enumerate() {
            if e.index != rank + 2 {
                return Err(Error::invalid(format!(
                    "vocab entry `{}` has index {}, expected {}",
                    e.token,
                    e.index,
                    rank + 2
                )));
            }
        }
        let lookup = entries
            .iter()
            .map(|e| (e.token.clone(), e.index))
            .collect();
        Ok(Vocabulary {
            entries,
            fitted_on,
            top_k,
            lookup,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Vocabulary::from_file_string(&text)
    }

    /// Hex SHA-256 of the serialized file form; checkpoints pin this so a
    /// model can never be paired with the wrong vocabulary.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_file_string().as_bytes());
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Fit the top-K vocabulary on training documents.
///
/// Per-token score is the maximum over documents of `tf * idf` with raw
/// counts for tf and the smoothed `ln((1+N)/(1+df)) + 1` for idf, so
/// frequent-but-universal tokens still rank. Ties break lexicographically.
/// Scores are per-token maxima, hence invariant to document order.
pub fn fit_tfidf(documents: &[Vec<String>], top_k: usize) -> Result<Vocabulary> {
    if top_k == 0 {
        return Err(Error::invalid("top_k must be at least 1"));
    }
    let n = documents.len();
    if documents.iter().all(|d| d.is_empty()) {
        return Err(Error::invalid("cannot fit a vocabulary on empty documents"));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    let mut doc_counts: Vec<BTreeMap<&str, usize>> = Vec::with_capacity(n);
    for doc in documents {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for tok in doc {
            *counts.entry(tok.as_str()).or_insert(0) += 1;
        }
        for tok in counts.keys() {
            *df.entry(tok).or_insert(0) += 1;
        }
        doc_counts.push(counts);
    }
    let idf_of = |df: usize| ((1 + n) as f64 / (1 + df) as f64).ln() + 1.0;
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for counts in &doc_counts {
        for (tok, &tf) in counts {
            let score = tf as f64 * idf_of(df[tok]);
            best.entry(tok)
                .and_modify(|b| *b = b.max(score))
                .or_insert(score);
        }
    }
    let mut ranked: Vec<(&str, f64)> = best.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(top_k);
    let entries: Vec<VocabEntry> = ranked
        .into_iter()
        .enumerate()
        .map(|(rank, (token, _))| VocabEntry {
            token: token.to_string(),
            index: rank + 2,
            idf: idf_of(df[token]),
        })
        .collect();
    let lookup = entries
        .iter()
        .map(|e| (e.token.clone(), e.index))
        .collect();
    Ok(Vocabulary {
        entries,
        fitted_on: n,
        top_k,
        lookup,
    })
}

/// Keep only in-vocabulary tokens, order preserved.
pub fn filter_by_vocab(tokens: &[String], vocab: &Vocabulary) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| vocab.contains(t))
        .cloned()
        .collect()
}

/// Map tokens to indices, right-pad with 0 to `max_len` or truncate to the
/// first `max_len` entries. Out-of-vocabulary tokens map to 1.
pub fn encode(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> Vec<usize> {
    let mut indices: Vec<usize> = tokens
        .iter()
        .take(max_len)
        .map(|t| vocab.index_of(t).unwrap_or(UNK_INDEX))
        .collect();
    indices.resize(max_len, PAD_INDEX);
    indices
}

/// A report after cleaning and encoding: a fixed-length index sequence plus
/// an optional class index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedReport {
    pub id: String,
    pub indices: Vec<usize>,
    pub label_index: Option<usize>,
}

impl EncodedReport {
    pub fn new(id: String, tokens: &[String], label_index: Option<usize>, vocab: &Vocabulary, max_len: usize) -> Self {
        let filtered = filter_by_vocab(tokens, vocab);
        EncodedReport {
            id,
            indices: encode(&filtered, vocab, max_len),
            label_index,
        }
    }
}
