//! LDA topic modeling over argument-word-stripped, pronoun-stripped text.
//!
//! Fitting uses a single collapsed Gibbs chain with a seeded generator;
//! inference on held-out documents keeps the topic-word distributions
//! fixed and samples only the document's own assignments.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::communities::PatternLexicon;

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("vocabulary is empty after filtering")]
    EmptyVocabulary,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid parameter {name}: {why}")]
    BadParam { name: &'static str, why: String },
}

/// Closed-class English pronouns, removable because argument patterns --
/// not topics -- should own first/second-person signal.
pub const PRONOUNS: &[&str] = &[
    "i", "me", "my", "mine", "myself", "we", "us", "our", "ours", "ourselves", "you", "your",
    "yours", "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers",
    "herself", "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "who",
    "whom", "whose", "which", "what", "this", "that", "these", "those", "anyone", "everyone",
    "someone", "no-one", "nobody", "anybody", "everybody", "somebody", "anything", "everything",
    "something", "nothing", "one", "oneself",
];

/// Minimal English stopword list for topic vocabulary pruning.
pub const STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "if", "then", "than", "so", "as", "of", "at", "by",
    "for", "with", "about", "against", "between", "into", "through", "during", "before", "after",
    "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over", "under",
    "again", "further", "once", "here", "there", "when", "where", "why", "how", "all", "any",
    "both", "each", "few", "more", "most", "other", "some", "such", "no", "nor", "not", "only",
    "own", "same", "too", "very", "can", "will", "just", "don't", "should", "now", "is", "am",
    "are", "was", "were", "be", "been", "being", "have", "has", "had", "having", "do", "does",
    "did", "doing", "would", "could", "might", "must", "shall", "may", "also", "because",
    "while", "until", "it's", "i'm", "you're", "that's", "there's", "isn't", "aren't", "wasn't",
    "weren't", "won't", "wouldn't", "couldn't", "shouldn't", "can't", "cannot", "didn't",
    "doesn't", "haven't", "hasn't",
];

/// Vocabulary for topic modeling: corpus tokens minus lexicon fragments
/// (unigram members and bigram components), pronouns, stopwords, and
/// tokens with document frequency below `min_df`.
pub fn build_topic_vocab<'a, I>(
    docs: I,
    lexicon: &PatternLexicon,
    pronouns: &[&str],
    min_df: usize,
) -> Result<Vec<String>, TopicError>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut banned: BTreeSet<String> = BTreeSet::new();
    for frag in lexicon.assignment.keys() {
        for part in frag.split('_') {
            banned.insert(part.to_string());
        }
    }
    banned.extend(pronouns.iter().map(|s| s.to_string()));
    banned.extend(STOPWORDS.iter().map(|s| s.to_string()));

    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for tokens in docs {
        let uniq: BTreeSet<&String> = tokens.iter().collect();
        for t in uniq {
            if !banned.contains(t.as_str()) {
                *df.entry(t.clone()).or_insert(0) += 1;
            }
        }
    }
    let vocab: Vec<String> = df
        .into_iter()
        .filter(|(_, c)| *c >= min_df)
        .map(|(t, _)| t)
        .collect();
    if vocab.is_empty() {
        return Err(TopicError::EmptyVocabulary);
    }
    Ok(vocab)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdaParams {
    pub n_topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub rng_seed: u64,
}

impl LdaParams {
    /// MALLET-conventional defaults: alpha = 5/K, beta = 0.01.
    pub fn with_defaults(n_topics: usize, iterations: usize, rng_seed: u64) -> Self {
        LdaParams {
            n_topics,
            alpha: 5.0 / n_topics as f64,
            beta: 0.01,
            iterations,
            rng_seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicModel {
    pub n_topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocab: Vec<String>,
    /// topic_word[k][v] = P(word v | topic k); rows sum to 1.
    pub topic_word: Vec<Vec<f64>>,
    pub iterations: usize,
    pub rng_seed: u64,
}

impl TopicModel {
    pub fn vocab_index(&self) -> BTreeMap<&str, usize> {
        self.vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.as_str(), i))
            .collect()
    }

    /// Top `n` words of topic `k` by probability (ties lexicographic).
    pub fn top_words(&self, k: usize, n: usize) -> Vec<&str> {
        let mut idx: Vec<usize> = (0..self.vocab.len()).collect();
        idx.sort_by(|&a, &b| {
            self.topic_word[k][b]
                .partial_cmp(&self.topic_word[k][a])
                .unwrap()
                .then(self.vocab[a].cmp(&self.vocab[b]))
        });
        idx.into_iter().take(n).map(|i| self.vocab[i].as_str()).collect()
    }

    /// Report label: top three words hyphen-joined.
    pub fn topic_label(&self, k: usize) -> String {
        self.top_words(k, 3).join("-")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocTopics {
    pub doc_id: String,
    pub theta: Vec<f64>,
    pub dominant: usize,
    /// Set when the document had no in-vocab tokens (theta is uniform).
    pub no_vocab_tokens: bool,
}

fn argmax_lowest(theta: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in theta.iter().enumerate() {
        if v > theta[best] {
            best = i;
        }
    }
    best
}

fn sample_discrete(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Fit by collapsed Gibbs sampling. Documents with no in-vocab tokens get
/// uniform theta and are flagged. Same seed gives an identical model.
pub fn fit_lda(
    doc_ids: &[String],
    docs: &[Vec<String>],
    vocab: &[String],
    params: &LdaParams,
) -> Result<(TopicModel, Vec<DocTopics>), TopicError> {
    if params.n_topics == 0 {
        return Err(TopicError::BadParam {
            name: "n_topics",
            why: "must be >= 1".into(),
        });
    }
    if params.iterations == 0 {
        return Err(TopicError::BadParam {
            name: "iterations",
            why: "must be >= 1".into(),
        });
    }
    if docs.is_empty() {
        return Err(TopicError::EmptyCorpus);
    }
    if params.n_topics > docs.len() {
        log::warn!(
            "n_topics {} exceeds document count {}",
            params.n_topics,
            docs.len()
        );
    }
    let index: BTreeMap<&str, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();
    let encoded: Vec<Vec<usize>> = docs
        .iter()
        .map(|tokens| {
            tokens
                .iter()
                .filter_map(|t| index.get(t.as_str()).copied())
                .collect()
        })
        .collect();

    let k = params.n_topics;
    let v = vocab.len();
    let (alpha, beta) = (params.alpha, params.beta);
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);

    let mut z: Vec<Vec<usize>> = Vec::with_capacity(encoded.len());
    let mut ndk = vec![vec![0u32; k]; encoded.len()];
    let mut nkw = vec![vec![0u32; v]; k];
    let mut nk = vec![0u32; k];
    for (d, words) in encoded.iter().enumerate() {
        let mut zd = Vec::with_capacity(words.len());
        for &w in words {
            let t = rng.gen_range(0..k);
            zd.push(t);
            ndk[d][t] += 1;
            nkw[t][w] += 1;
            nk[t] += 1;
        }
        z.push(zd);
    }

    let mut weights = vec![0.0f64; k];
    for _ in 0..params.iterations {
        for (d, words) in encoded.iter().enumerate() {
            for (pos, &w) in words.iter().enumerate() {
                let old = z[d][pos];
                ndk[d][old] -= 1;
                nkw[old][w] -= 1;
                nk[old] -= 1;
                for t in 0..k {
                    weights[t] = (ndk[d][t] as f64 + alpha)
                        * (nkw[t][w] as f64 + beta)
                        / (nk[t] as f64 + v as f64 * beta);
                }
                let new = sample_discrete(&weights, &mut rng);
                z[d][pos] = new;
                ndk[d][new] += 1;
                nkw[new][w] += 1;
                nk[new] += 1;
            }
        }
    }

    // count-matrix consistency: every token is assigned exactly once
    debug_assert_eq!(
        nk.iter().map(|&c| c as usize).sum::<usize>(),
        encoded.iter().map(|d| d.len()).sum::<usize>()
    );

    let topic_word: Vec<Vec<f64>> = (0..k)
        .map(|t| {
            let denom = nk[t] as f64 + v as f64 * beta;
            (0..v).map(|w| (nkw[t][w] as f64 + beta) / denom).collect()
        })
        .collect();
    let model = TopicModel {
        n_topics: k,
        alpha,
        beta,
        vocab: vocab.to_vec(),
        topic_word,
        iterations: params.iterations,
        rng_seed: params.rng_seed,
    };

    let doc_topics = encoded
        .iter()
        .enumerate()
        .map(|(d, words)| {
            let nd = words.len();
            if nd == 0 {
                return DocTopics {
                    doc_id: doc_ids[d].clone(),
                    theta: vec![1.0 / k as f64; k],
                    dominant: 0,
                    no_vocab_tokens: true,
                };
            }
            let denom = nd as f64 + k as f64 * alpha;
            let theta: Vec<f64> = (0..k)
                .map(|t| (ndk[d][t] as f64 + alpha) / denom)
                .collect();
            let dominant = argmax_lowest(&theta);
            DocTopics {
                doc_id: doc_ids[d].clone(),
                theta,
                dominant,
                no_vocab_tokens: false,
            }
        })
        .collect();
    Ok((model, doc_topics))
}

/// Infer theta for a held-out document with topic_word fixed.
pub fn infer_doc_topics(
    model: &TopicModel,
    doc_id: &str,
    tokens: &[String],
    rng_seed: u64,
    sweeps: usize,
) -> DocTopics {
    let index = model.vocab_index();
    let words: Vec<usize> = tokens
        .iter()
        .filter_map(|t| index.get(t.as_str()).copied())
        .collect();
    let k = model.n_topics;
    if words.is_empty() {
        return DocTopics {
            doc_id: doc_id.to_string(),
            theta: vec![1.0 / k as f64; k],
            dominant: 0,
            no_vocab_tokens: true,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut z = Vec::with_capacity(words.len());
    let mut ndk = vec![0u32; k];
    for _ in &words {
        let t = rng.gen_range(0..k);
        z.push(t);
        ndk[t] += 1;
    }
    let mut weights = vec![0.0f64; k];
    for _ in 0..sweeps.max(1) {
        for (pos, &w) in words.iter().enumerate() {
            let old = z[pos];
            ndk[old] -= 1;
            for t in 0..k {
                weights[t] = (ndk[t] as f64 + model.alpha) * model.topic_word[t][w];
            }
            let new = sample_discrete(&weights, &mut rng);
            z[pos] = new;
            ndk[new] += 1;
        }
    }
    let denom = words.len() as f64 + k as f64 * model.alpha;
    let theta: Vec<f64> = (0..k)
        .map(|t| (ndk[t] as f64 + model.alpha) / denom)
        .collect();
    let dominant = argmax_lowest(&theta);
    DocTopics {
        doc_id: doc_id.to_string(),
        theta,
        dominant,
        no_vocab_tokens: false,
    }
}

/// Topics whose top-`top_n` words cover at least `threshold` of the
/// marker list. Intended for human review before document exclusion.
pub fn flag_meta_topics(
    model: &TopicModel,
    markers: &[String],
    top_n: usize,
    threshold: f64,
) -> BTreeSet<usize> {
    if markers.is_empty() {
        return BTreeSet::new();
    }
    let marker_set: BTreeSet<&str> = markers.iter().map(|s| s.as_str()).collect();
    let mut out = BTreeSet::new();
    for k in 0..model.n_topics {
        let top: BTreeSet<&str> = model.top_words(k, top_n).into_iter().collect();
        let hits = marker_set.iter().filter(|m| top.contains(**m)).count();
        let frac = hits as f64 / marker_set.len() as f64;
        if frac >= threshold && hits > 0 {
            out.insert(k);
        }
    }
    out
}
