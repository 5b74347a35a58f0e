//! Seed lexicon handling and corpus-specific bigram detection.
//!
//! The fragment inventory starts from user-supplied seed word lists and is
//! enlarged with bigrams that contain a seed term and score highly under
//! the discounted normalized pair count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhraseError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("seed lexicon file is empty")]
    EmptyLexicon,
    #[error("seed word `{word}` in category `{category}` contains whitespace")]
    WordWithWhitespace { category: String, word: String },
    #[error("duplicate word `{word}` in category `{category}`")]
    DuplicateWord { category: String, word: String },
    #[error("seed word `{0}` appears before any #category header")]
    WordBeforeCategory(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arity {
    Unigram,
    Bigram,
}

/// A unigram or bigram treated as one atomic signal. Bigram text is two
/// space-joined tokens; the merged token form joins them with `_`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fragment {
    pub text: String,
    pub arity: Arity,
}

impl Fragment {
    pub fn unigram(text: &str) -> Self {
        Fragment {
            text: text.to_string(),
            arity: Arity::Unigram,
        }
    }

    pub fn bigram(a: &str, b: &str) -> Self {
        Fragment {
            text: format!("{a} {b}"),
            arity: Arity::Bigram,
        }
    }

    /// Parse from display text; one space means bigram.
    pub fn parse(text: &str) -> Self {
        if text.contains(' ') {
            Fragment {
                text: text.to_string(),
                arity: Arity::Bigram,
            }
        } else {
            Fragment {
                text: text.to_string(),
                arity: Arity::Unigram,
            }
        }
    }

    /// Token form as it appears in a phrase-merged stream.
    pub fn merged_token(&self) -> String {
        self.text.replace(' ', "_")
    }

    /// Component tokens (one for unigrams, two for bigrams).
    pub fn components(&self) -> Vec<&str> {
        self.text.split(' ').collect()
    }
}

impl fmt::Display for Fragment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Named categories of seed words, e.g. "tentative" and "certain".
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SeedLexicon {
    pub categories: BTreeMap<String, Vec<String>>,
}

impl SeedLexicon {
    /// Parse the plaintext format: `#category` headers followed by one
    /// word per line. Blank lines and `//` comments are skipped.
    pub fn parse(text: &str) -> Result<(Self, Vec<String>), PhraseError> {
        let mut categories: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            if let Some(name) = line.strip_prefix('#') {
                let name = name.trim().to_lowercase();
                categories.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let cat = current
                .clone()
                .ok_or_else(|| PhraseError::WordBeforeCategory(line.to_string()))?;
            let word = line.to_lowercase();
            if word.split_whitespace().count() > 1 {
                return Err(PhraseError::WordWithWhitespace {
                    category: cat,
                    word,
                });
            }
            let list = categories.get_mut(&cat).unwrap();
            if list.contains(&word) {
                return Err(PhraseError::DuplicateWord {
                    category: cat,
                    word,
                });
            }
            list.push(word);
        }
        if categories.is_empty() {
            return Err(PhraseError::EmptyLexicon);
        }
        let mut warnings = Vec::new();
        for (cat, words) in &categories {
            if words.is_empty() {
                warnings.push(format!("category `{cat}` has no words"));
            }
        }
        Ok((SeedLexicon { categories }, warnings))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<String>), PhraseError> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// All seed words across categories.
    pub fn words(&self) -> BTreeSet<String> {
        self.categories
            .values()
            .flat_map(|ws| ws.iter().cloned())
            .collect()
    }
}

/// Adjacent-pair statistics restricted to pairs containing a seed word.
#[derive(Debug, Clone, Default)]
pub struct PhraseStats {
    pub unigram_counts: BTreeMap<String, u64>,
    pub pair_counts: BTreeMap<(String, String), u64>,
    pub total_tokens: u64,
}

impl PhraseStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accumulate one token stream. Commutative, so streams may be
    /// counted in any order or merged across workers.
    pub fn add_stream(&mut self, tokens: &[String], seed_words: &BTreeSet<String>) {
        self.total_tokens += tokens.len() as u64;
        for t in tokens {
            *self.unigram_counts.entry(t.clone()).or_insert(0) += 1;
        }
        for pair in tokens.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if seed_words.contains(a) || seed_words.contains(b) {
                *self
                    .pair_counts
                    .entry((a.clone(), b.clone()))
                    .or_insert(0) += 1;
            }
        }
    }

    pub fn merge(&mut self, other: PhraseStats) {
        self.total_tokens += other.total_tokens;
        for (k, v) in other.unigram_counts {
            *self.unigram_counts.entry(k).or_insert(0) += v;
        }
        for (k, v) in other.pair_counts {
            *self.pair_counts.entry(k).or_insert(0) += v;
        }
    }
}

/// A bigram candidate with its count and phrase score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredBigram {
    pub a: String,
    pub b: String,
    pub pair_count: u64,
    pub score: f64,
}

impl ScoredBigram {
    pub fn fragment(&self) -> Fragment {
        Fragment::bigram(&self.a, &self.b)
    }
}

/// Score = (pair_count - min_count) * total_tokens / (count_a * count_b).
/// Emits pairs with pair_count >= min_count and score > threshold, sorted
/// by descending score (ties lexicographic).
pub fn detect_bigrams(stats: &PhraseStats, min_count: u64, threshold: f64) -> Vec<ScoredBigram> {
    assert!(min_count >= 1, "min_count must be >= 1");
    let mut out = Vec::new();
    for ((a, b), &pc) in &stats.pair_counts {
        if pc < min_count {
            continue;
        }
        let ca = *stats.unigram_counts.get(a).unwrap_or(&0);
        let cb = *stats.unigram_counts.get(b).unwrap_or(&0);
        if ca == 0 || cb == 0 {
            continue;
        }
        let score =
            (pc - min_count) as f64 * stats.total_tokens as f64 / (ca as f64 * cb as f64);
        if score > threshold {
            out.push(ScoredBigram {
                a: a.clone(),
                b: b.clone(),
                pair_count: pc,
                score,
            });
        }
    }
    out.sort_by(|x, y| {
        y.score
            .partial_cmp(&x.score)
            .unwrap()
            .then_with(|| (&x.a, &x.b).cmp(&(&y.a, &y.b)))
    });
    out
}

/// Greedy leftmost-longest merge: whenever two adjacent tokens form a known
/// bigram, replace them with the single `a_b` token and resume after it.
pub fn merge_phrases(tokens: &[String], bigrams: &BTreeSet<(String, String)>) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        if i + 1 < tokens.len() {
            let key = (tokens[i].clone(), tokens[i + 1].clone());
            if bigrams.contains(&key) {
                out.push(format!("{}_{}", key.0, key.1));
                i += 2;
                continue;
            }
        }
        out.push(tokens[i].clone());
        i += 1;
    }
    out
}

/// Bigram lookup set from a fragment inventory.
pub fn bigram_set(fragments: &[Fragment]) -> BTreeSet<(String, String)> {
    fragments
        .iter()
        .filter(|f| f.arity == Arity::Bigram)
        .map(|f| {
            let c = f.components();
            (c[0].to_string(), c[1].to_string())
        })
        .collect()
}
