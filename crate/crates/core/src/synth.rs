//! Seeded synthetic corpora with planted structure.
//!
//! These generators back the verification suite and the `synth` CLI
//! command: planted fragment groups for clustering recovery, planted
//! outcome rates for efficacy recovery, planted preference axes for PCA
//! recovery, and a small end-to-end mini corpus exercising every
//! pipeline stage.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analytics::{CommentObs, UserProfile};
use crate::corpus::{DocKind, Document};

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for i in 0..n {
        *table.entry((a[i], b[i])).or_insert(0) += 1;
        *rows.entry(a[i]).or_insert(0) += 1;
        *cols.entry(b[i]).or_insert(0) += 1;
    }
    let choose2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.values().map(|&v| choose2(v)).sum();
    let sum_a: f64 = rows.values().map(|&v| choose2(v)).sum();
    let sum_b: f64 = cols.values().map(|&v| choose2(v)).sum();
    let total = choose2(n as u64);
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if (max - expected).abs() < 1e-15 {
        return 1.0;
    }
    (sum_ij - expected) / (max - expected)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn post(id: &str, author: &str, body: String) -> Document {
    Document {
        id: id.to_string(),
        parent_id: None,
        thread_id: id.to_string(),
        author: author.to_string(),
        kind: DocKind::Post,
        body,
        score: 1,
        delta_awarded: false,
        timestamp: 0,
    }
}

fn reply(id: &str, thread: &str, author: &str, body: String, delta: bool, score: i64) -> Document {
    Document {
        id: id.to_string(),
        parent_id: Some(thread.to_string()),
        thread_id: thread.to_string(),
        author: author.to_string(),
        kind: DocKind::Reply,
        body,
        score,
        delta_awarded: delta,
        timestamp: 0,
    }
}

/// Corpus with `n_groups` fragment groups of `frags_per_group` unigrams:
/// high intra-group, low cross-group co-occurrence. Returns the documents
/// plus the fragment names and their planted group labels.
pub fn planted_fragment_corpus(
    n_docs: usize,
    n_groups: usize,
    frags_per_group: usize,
    seed: u64,
) -> (Vec<Document>, Vec<String>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fragments = Vec::new();
    let mut labels = Vec::new();
    for g in 0..n_groups {
        for i in 0..frags_per_group {
            fragments.push(format!("g{g}w{i}"));
            labels.push(g);
        }
    }
    let filler = [
        "point", "case", "matter", "part", "side", "thing", "way", "fact", "idea", "view",
    ];
    let mut docs = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        let g = d % n_groups;
        let mut tokens: Vec<String> = Vec::new();
        let n_frag = rng.gen_range(6..=10);
        for _ in 0..n_frag {
            let i = rng.gen_range(0..frags_per_group);
            tokens.push(format!("g{g}w{i}"));
        }
        if rng.gen::<f64>() < 0.1 {
            let og = (g + 1 + rng.gen_range(0..n_groups - 1)) % n_groups;
            let i = rng.gen_range(0..frags_per_group);
            tokens.push(format!("g{og}w{i}"));
        }
        for _ in 0..2 {
            tokens.push(filler[rng.gen_range(0..filler.len())].to_string());
        }
        docs.push(post(&format!("p{d}"), &format!("u{}", d % 50), tokens.join(" ")));
    }
    (docs, fragments, labels)
}

/// Dominant-tagged comments with per-pattern planted delta rates,
/// patterns assigned round-robin within one topic stratum.
pub fn planted_delta_comments(n: usize, rates: &[f64], seed: u64) -> Vec<CommentObs> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let p = i % rates.len();
            CommentObs {
                doc_id: format!("c{i}"),
                author: format!("u{}", i % 200),
                pattern: p,
                topic: 0,
                delta: rng.gen::<f64>() < rates[p],
                score: 0,
            }
        })
        .collect()
}

/// Profiles planted on two orthogonal zero-sum axes with the given
/// variance shares; leftover variance is spread isotropically over the
/// remaining zero-sum directions. Returns the profiles plus the two
/// planted (unit) axes.
pub fn planted_axis_profiles(
    n: usize,
    shares: (f64, f64),
    seed: u64,
) -> (Vec<UserProfile>, Vec<f64>, Vec<f64>) {
    const P: usize = 6;
    // orthonormal zero-sum basis via Gram-Schmidt over fixed start vectors
    let raw: Vec<[f64; P]> = vec![
        [-1.0, -1.0, -1.0, -1.0, -1.0, 5.0],
        [-1.0, -1.0, -1.0, 2.0, 2.0, -1.0],
        [1.0, -1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, -1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, -1.0, 0.0, 0.0],
    ];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in raw {
        let mut v = v.to_vec();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    assert!(basis.len() >= 5);
    let (v1, v2) = (basis[0].clone(), basis[1].clone());
    let noise_dirs = &basis[2..5];
    let residual = (1.0 - shares.0 - shares.1).max(0.0) / noise_dirs.len() as f64;

    let scale = 0.02;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profiles = (0..n)
        .map(|i| {
            let mut mp = vec![1.0 / P as f64; P];
            let coeffs: Vec<f64> = std::iter::once(shares.0)
                .chain(std::iter::once(shares.1))
                .chain(noise_dirs.iter().map(|_| residual))
                .map(|var| normal(&mut rng) * (var.sqrt() * scale))
                .collect();
            for (c, dir) in coeffs.iter().zip(std::iter::once(&v1).chain(std::iter::once(&v2)).chain(noise_dirs.iter())) {
                for (m, d) in mp.iter_mut().zip(dir) {
                    *m += c * d;
                }
            }
            UserProfile {
                author: format!("u{i}"),
                n_comments: 20,
                mean_pattern: mp,
            }
        })
        .collect();
    (profiles, v1, v2)
}

/// File paths of a written mini corpus bundle.
pub struct MiniPaths {
    pub corpus: PathBuf,
    pub seeds: PathBuf,
    pub cogproc: PathBuf,
    pub markers: PathBuf,
}

/// A 200-document corpus exercising every pipeline stage: 30 posts over
/// two semantic topics plus a meta topic, and 180 replies carrying four
/// planted argument-fragment groups, planted bigrams, candidate words
/// correlated with two of the groups, and planted delta/score effects.
pub struct MiniCorpus {
    pub documents: Vec<Document>,
    pub seeds_file: String,
    pub cogproc_file: String,
    pub meta_markers_file: String,
    /// seed unigram -> planted group
    pub fragment_groups: BTreeMap<String, usize>,
}

const MINI_GROUPS: [[&str; 4]; 4] = [
    ["likely", "probably", "possible", "chance"],
    ["clearly", "surely", "certainly", "definitely"],
    ["irrelevant", "wrong", "assume", "presume"],
    ["feels", "felt", "personally", "experience"],
];

impl MiniCorpus {
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topic_a = [
            "guns", "crime", "police", "law", "control", "violence", "weapon", "safety",
        ];
        let topic_b = [
            "school", "teacher", "student", "education", "class", "learning", "grade", "exam",
        ];
        let topic_meta = [
            "moderator", "rule", "delta", "removed", "flair", "sidebar", "violation", "report",
        ];
        let filler = [
            "point", "case", "matter", "part", "side", "thing", "way", "fact", "idea", "view",
        ];

        let mut documents = Vec::new();
        let mut threads = Vec::new();
        for p in 0..30 {
            let vocab: &[&str] = if p < 12 {
                &topic_a
            } else if p < 24 {
                &topic_b
            } else {
                &topic_meta
            };
            let body: Vec<&str> = (0..20).map(|_| vocab[rng.gen_range(0..vocab.len())]).collect();
            let id = format!("post{p:02}");
            documents.push(post(&id, &format!("op{p}"), body.join(" ")));
            threads.push(id);
        }

        let mut r = 0usize;
        for t in 0..30 {
            for _ in 0..6 {
                let author_id = r % 24;
                let author = format!("user{author_id:02}");
                let pref = author_id % 4;
                let group = if rng.gen::<f64>() < 0.7 {
                    pref
                } else {
                    rng.gen_range(0..4)
                };
                let mut tokens: Vec<String> = Vec::new();
                for _ in 0..5 {
                    let w = MINI_GROUPS[group][rng.gen_range(0..4)];
                    // planted bigrams: "more likely" and "quite clearly"
                    if w == "likely" && rng.gen::<f64>() < 0.7 {
                        tokens.push("more".into());
                    }
                    if w == "clearly" && rng.gen::<f64>() < 0.7 {
                        tokens.push("quite".into());
                    }
                    tokens.push(w.into());
                }
                if group == 0 && rng.gen::<f64>() < 0.6 {
                    tokens.push(if rng.gen() { "because".into() } else { "cause".into() });
                }
                if group == 3 && rng.gen::<f64>() < 0.6 {
                    tokens.push(if rng.gen() { "remember".into() } else { "childhood".into() });
                }
                if rng.gen::<f64>() < 0.3 {
                    tokens.push("banana".into()); // uniform candidate, should not cluster
                }
                for _ in 0..3 {
                    tokens.push(filler[rng.gen_range(0..filler.len())].into());
                }
                let delta_rate = match group {
                    0 => 0.15,
                    2 => 0.03,
                    _ => 0.08,
                };
                let delta = rng.gen::<f64>() < delta_rate;
                let score = rng.gen_range(0..5) + if group == 3 { 2 } else { 0 };
                documents.push(reply(
                    &format!("reply{r:03}"),
                    &threads[t],
                    &author,
                    tokens.join(" "),
                    delta,
                    score,
                ));
                r += 1;
            }
        }

        let seeds_file = "\
#tentative
likely
probably
possible
chance
#certain
clearly
surely
certainly
definitely
#relevance
irrelevant
wrong
assume
presume
#personal
feels
felt
personally
experience
"
        .to_string();
        let cogproc_file = "because\ncause\nremember\nchildhood\nbanana\n".to_string();
        let meta_markers_file = "moderator\nrule\ndelta\nremoved\nflair\n".to_string();

        let fragment_groups = MINI_GROUPS
            .iter()
            .enumerate()
            .flat_map(|(g, words)| words.iter().map(move |w| (w.to_string(), g)))
            .collect();

        MiniCorpus {
            documents,
            seeds_file,
            cogproc_file,
            meta_markers_file,
            fragment_groups,
        }
    }

    pub fn write_to(&self, dir: &Path) -> io::Result<MiniPaths> {
        fs::create_dir_all(dir)?;
        let corpus = dir.join("mini.jsonl");
        let lines: Vec<String> = self
            .documents
            .iter()
            .map(|d| serde_json::to_string(d).expect("serializable"))
            .collect();
        fs::write(&corpus, lines.join("\n") + "\n")?;
        let seeds = dir.join("seeds.txt");
        fs::write(&seeds, &self.seeds_file)?;
        let cogproc = dir.join("cogproc.txt");
        fs::write(&cogproc, &self.cogproc_file)?;
        let markers = dir.join("meta_markers.txt");
        fs::write(&markers, &self.meta_markers_file)?;
        Ok(MiniPaths {
            corpus,
            seeds,
            cogproc,
            markers,
        })
    }
}

/// Large flat corpus for throughput checks: `n` replies under a handful
/// of posts, with bodies of plain prose plus occasional seed fragments.
pub fn throughput_corpus(n: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = [
        "the", "point", "you", "make", "is", "that", "people", "will", "not", "change", "their",
        "minds", "without", "good", "reasons", "and", "clear", "evidence", "about", "policy",
        "likely", "clearly", "wrong", "feels", "possible", "surely", "irrelevant", "experience",
    ];
    let mut docs = Vec::with_capacity(n + 5);
    for p in 0..5 {
        docs.push(post(&format!("tp{p}"), "op", "a view about policy and change".into()));
    }
    for i in 0..n {
        let len = rng.gen_range(15..40);
        let body: Vec<&str> = (0..len).map(|_| words[rng.gen_range(0..words.len())]).collect();
        docs.push(reply(
            &format!("tr{i}"),
            &format!("tp{}", i % 5),
            &format!("u{}", i % 1000),
            body.join(" "),
            rng.gen::<f64>() < 0.01,
            rng.gen_range(-2..10),
        ));
    }
    docs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ari_bounds() {
        let a = vec![0, 0, 1, 1, 2, 2];
        assert!((adjusted_rand_index(&a, &a) - 1.0).abs() < 1e-12);
        let b = vec![2, 2, 0, 0, 1, 1]; // same partition, relabeled
        assert!((adjusted_rand_index(&a, &b) - 1.0).abs() < 1e-12);
        let c = vec![0, 1, 0, 1, 0, 1];
        assert!(adjusted_rand_index(&a, &c) < 0.5);
    }

    #[test]
    fn planted_corpus_shape() {
        let (docs, frags, labels) = planted_fragment_corpus(60, 6, 8, 1);
        assert_eq!(docs.len(), 60);
        assert_eq!(frags.len(), 48);
        assert_eq!(labels.len(), 48);
        assert!(docs.iter().all(|d| !d.body.is_empty()));
    }

    #[test]
    fn mini_corpus_is_valid_and_deterministic() {
        let m1 = MiniCorpus::generate(7);
        let m2 = MiniCorpus::generate(7);
        assert_eq!(m1.documents, m2.documents);
        assert_eq!(m1.documents.len(), 210);
        let n_posts = m1
            .documents
            .iter()
            .filter(|d| d.kind == DocKind::Post)
            .count();
        assert_eq!(n_posts, 30);
        // some deltas exist
        assert!(m1.documents.iter().any(|d| d.delta_awarded));
    }

    #[test]
    fn planted_axes_are_orthonormal() {
        let (_profiles, v1, v2) = planted_axis_profiles(10, (0.65, 0.15), 3);
        let n1: f64 = v1.iter().map(|x| x * x).sum();
        let n2: f64 = v2.iter().map(|x| x * x).sum();
        let dot: f64 = v1.iter().zip(&v2).map(|(a, b)| a * b).sum();
        let s1: f64 = v1.iter().sum();
        let s2: f64 = v2.iter().sum();
        assert!((n1 - 1.0).abs() < 1e-9);
        assert!((n2 - 1.0).abs() < 1e-9);
        assert!(dot.abs() < 1e-9);
        assert!(s1.abs() < 1e-9);
        assert!(s2.abs() < 1e-9);
    }
}
