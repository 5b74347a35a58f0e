//! Corpus ingestion, normalization, tokenization, and the on-disk store.
//!
//! A corpus is a set of threaded-discussion documents (top-level posts and
//! replies) ingested from JSONL. After ingestion the store is immutable;
//! downstream stages read filtered views of it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus `{0}` not found in store")]
    NotFound(String),
    #[error("corrupt manifest or record: {0}")]
    Corrupt(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocKind {
    Post,
    Reply,
}

/// One post or reply in a threaded discussion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub thread_id: String,
    pub author: String,
    pub kind: DocKind,
    pub body: String,
    #[serde(default)]
    pub score: i64,
    #[serde(default)]
    pub delta_awarded: bool,
    #[serde(default)]
    pub timestamp: i64,
}

impl Document {
    /// Structural checks beyond what deserialization enforces.
    fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        match self.kind {
            DocKind::Post => {
                if self.parent_id.is_some() {
                    return Err(format!("post {} has a parent_id", self.id));
                }
                if self.delta_awarded {
                    return Err(format!("post {} has delta_awarded=true", self.id));
                }
            }
            DocKind::Reply => {
                if self.parent_id.is_none() {
                    return Err(format!("reply {} is missing parent_id", self.id));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct CorpusStats {
    pub n_posts: u64,
    pub n_replies: u64,
    pub n_authors: u64,
    pub delta_rate: f64,
}

/// Outcome of one ingest run. Malformed lines are counted, never silently dropped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestReport {
    pub stats: CorpusStats,
    pub n_accepted: u64,
    pub n_malformed: u64,
    pub n_duplicates: u64,
    /// First few rejection messages, for diagnostics.
    pub sample_errors: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub name: String,
    pub stats: CorpusStats,
    pub n_malformed: u64,
    pub n_duplicates: u64,
    pub content_hash: String,
}

/// On-disk store: one directory per corpus holding a manifest, the
/// normalized record file, and an exclusion list.
pub struct CorpusStore {
    root: PathBuf,
}

impl CorpusStore {
    pub fn open(root: impl Into<PathBuf>) -> Self {
        CorpusStore { root: root.into() }
    }

    fn corpus_dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Ingest a JSONL file as corpus `name`, replacing any prior content.
    pub fn ingest(&self, path: &Path, name: &str) -> Result<IngestReport, CorpusError> {
        let file = fs::File::open(path)?;
        let reader = BufReader::new(file);

        let dir = self.corpus_dir(name);
        fs::create_dir_all(&dir)?;
        let records_path = dir.join("documents.jsonl");
        let mut out = BufWriter::new(fs::File::create(&records_path)?);

        let mut seen_ids: BTreeSet<String> = BTreeSet::new();
        let mut authors: BTreeSet<String> = BTreeSet::new();
        let mut n_posts = 0u64;
        let mut n_replies = 0u64;
        let mut n_deltas = 0u64;
        let mut n_malformed = 0u64;
        let mut n_duplicates = 0u64;
        let mut sample_errors = Vec::new();
        let mut hasher = Sha256::new();

        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: Document = match serde_json::from_str(&line) {
                Ok(d) => d,
                Err(e) => {
                    n_malformed += 1;
                    if sample_errors.len() < 10 {
                        sample_errors.push(format!("line {}: {}", lineno + 1, e));
                    }
                    continue;
                }
            };
            if let Err(msg) = doc.validate() {
                n_malformed += 1;
                if sample_errors.len() < 10 {
                    sample_errors.push(format!("line {}: {}", lineno + 1, msg));
                }
                continue;
            }
            if !seen_ids.insert(doc.id.clone()) {
                n_duplicates += 1;
                if sample_errors.len() < 10 {
                    sample_errors.push(format!("line {}: duplicate id {}", lineno + 1, doc.id));
                }
                continue;
            }
            match doc.kind {
                DocKind::Post => n_posts += 1,
                DocKind::Reply => {
                    n_replies += 1;
                    if doc.delta_awarded {
                        n_deltas += 1;
                    }
                }
            }
            authors.insert(doc.author.clone());
            let rec = serde_json::to_string(&doc)?;
            hasher.update(rec.as_bytes());
            hasher.update(b"\n");
            out.write_all(rec.as_bytes())?;
            out.write_all(b"\n")?;
        }
        out.flush()?;

        if n_posts + n_replies == 0 {
            log::warn!("corpus `{}` ingested with zero documents", name);
        }
        if n_malformed > 0 || n_duplicates > 0 {
            log::warn!(
                "corpus `{}`: {} malformed, {} duplicate records rejected",
                name,
                n_malformed,
                n_duplicates
            );
        }

        let stats = CorpusStats {
            n_posts,
            n_replies,
            n_authors: authors.len() as u64,
            delta_rate: if n_replies > 0 {
                n_deltas as f64 / n_replies as f64
            } else {
                0.0
            },
        };
        let manifest = CorpusManifest {
            name: name.to_string(),
            stats,
            n_malformed,
            n_duplicates,
            content_hash: hex::encode(hasher.finalize()),
        };
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        // fresh ingest clears any stale exclusions
        let _ = fs::remove_file(dir.join("exclusions.json"));

        Ok(IngestReport {
            stats,
            n_accepted: n_posts + n_replies,
            n_malformed,
            n_duplicates,
            sample_errors,
        })
    }

    pub fn manifest(&self, name: &str) -> Result<CorpusManifest, CorpusError> {
        let path = self.corpus_dir(name).join("manifest.json");
        if !path.exists() {
            return Err(CorpusError::NotFound(name.to_string()));
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn stats(&self, name: &str) -> Result<CorpusStats, CorpusError> {
        Ok(self.manifest(name)?.stats)
    }

    pub fn load(&self, name: &str) -> Result<Corpus, CorpusError> {
        let dir = self.corpus_dir(name);
        let records_path = dir.join("documents.jsonl");
        if !records_path.exists() {
            return Err(CorpusError::NotFound(name.to_string()));
        }
        let reader = BufReader::new(fs::File::open(records_path)?);
        let mut docs = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            docs.push(serde_json::from_str(&line)?);
        }
        let excl_path = dir.join("exclusions.json");
        let excluded = if excl_path.exists() {
            serde_json::from_str(&fs::read_to_string(excl_path)?)?
        } else {
            BTreeMap::new()
        };
        Ok(Corpus {
            name: name.to_string(),
            docs,
            excluded,
        })
    }

    /// Persist the exclusion list for `corpus`.
    pub fn save_exclusions(&self, corpus: &Corpus) -> Result<(), CorpusError> {
        let dir = self.corpus_dir(&corpus.name);
        fs::write(
            dir.join("exclusions.json"),
            serde_json::to_string_pretty(&corpus.excluded)?,
        )?;
        Ok(())
    }
}

/// An in-memory corpus plus its exclusion list (doc id -> reason tag).
pub struct Corpus {
    pub name: String,
    pub docs: Vec<Document>,
    pub excluded: BTreeMap<String, String>,
}

impl Corpus {
    pub fn from_docs(name: &str, docs: Vec<Document>) -> Self {
        Corpus {
            name: name.to_string(),
            docs,
            excluded: BTreeMap::new(),
        }
    }

    /// Mark documents as excluded with a reason tag. Unknown ids are
    /// reported back, not errors.
    pub fn exclude_documents<I: IntoIterator<Item = String>>(
        &mut self,
        ids: I,
        reason: &str,
    ) -> Vec<String> {
        let known: BTreeSet<&str> = self.docs.iter().map(|d| d.id.as_str()).collect();
        let mut unknown = Vec::new();
        for id in ids {
            if known.contains(id.as_str()) {
                self.excluded.insert(id, reason.to_string());
            } else {
                unknown.push(id);
            }
        }
        if !unknown.is_empty() {
            log::warn!("exclude_documents: {} unknown ids skipped", unknown.len());
        }
        unknown
    }

    /// Iterate non-excluded documents in ingestion order.
    pub fn view(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter().filter(|d| !self.excluded.contains_key(&d.id))
    }

    pub fn n_visible(&self) -> usize {
        self.view().count()
    }
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)https?://\S+|\bwww\.\S+").unwrap())
}

fn keep_char(c: char) -> bool {
    if c == '\'' {
        return true;
    }
    if c.is_alphanumeric() {
        return true;
    }
    // emoji and other non-ASCII symbols pass through; punctuation does not
    if c.is_ascii() {
        return false;
    }
    !matches!(
        c,
        '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2013}' | '\u{2014}'
            | '\u{2026}' | '\u{00AB}' | '\u{00BB}' | '\u{00A1}' | '\u{00BF}' | '\u{00B7}'
    )
}

/// Normalize a document body into tokens: blockquoted lines and URLs
/// removed, lowercased, punctuation stripped except intra-word apostrophes.
pub fn tokenize(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in body.lines() {
        if line.trim_start().starts_with('>') {
            continue;
        }
        let line = url_re().replace_all(line, " ");
        // curly apostrophes normalize to ASCII so "don’t" and "don't" agree
        let line = line.replace('\u{2019}', "'");
        for raw in line.split_whitespace() {
            let cleaned: String = raw
                .chars()
                .map(|c| if keep_char(c) { c } else { ' ' })
                .collect();
            for piece in cleaned.split_whitespace() {
                let t = piece.trim_matches('\'');
                if !t.is_empty() {
                    out.push(t.to_lowercase());
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, kind: DocKind, parent: Option<&str>, delta: bool) -> Document {
        Document {
            id: id.into(),
            parent_id: parent.map(Into::into),
            thread_id: "t1".into(),
            author: format!("u_{id}"),
            kind,
            body: "hello world".into(),
            score: 1,
            delta_awarded: delta,
            timestamp: 0,
        }
    }

    #[test]
    fn tokenize_keeps_intraword_apostrophes() {
        assert_eq!(tokenize("I don't see it."), vec!["i", "don't", "see", "it"]);
    }

    #[test]
    fn tokenize_removes_urls() {
        assert_eq!(tokenize("See https://x.y now"), vec!["see", "now"]);
        assert_eq!(tokenize("go to www.example.com ok"), vec!["go", "to", "ok"]);
    }

    #[test]
    fn tokenize_case_and_punctuation() {
        assert_eq!(tokenize("Perfectly Possible!"), vec!["perfectly", "possible"]);
    }

    #[test]
    fn tokenize_drops_blockquotes() {
        assert_eq!(
            tokenize("> you said this\nbut I disagree"),
            vec!["but", "i", "disagree"]
        );
    }

    #[test]
    fn tokenize_empty_body() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n> quoted only").is_empty());
    }

    #[test]
    fn tokenize_passes_non_latin() {
        assert_eq!(tokenize("héllo 日本語"), vec!["héllo", "日本語"]);
    }

    fn write_jsonl(dir: &Path, docs: &[Document]) -> PathBuf {
        let p = dir.join("in.jsonl");
        let mut f = fs::File::create(&p).unwrap();
        for d in docs {
            writeln!(f, "{}", serde_json::to_string(d).unwrap()).unwrap();
        }
        p
    }

    #[test]
    fn ingest_counts_posts_replies_deltas() {
        let tmp = tempfile::tempdir().unwrap();
        let docs = vec![
            doc("p1", DocKind::Post, None, false),
            doc("r1", DocKind::Reply, Some("p1"), true),
            doc("r2", DocKind::Reply, Some("p1"), false),
        ];
        let input = write_jsonl(tmp.path(), &docs);
        let store = CorpusStore::open(tmp.path().join("store"));
        let report = store.ingest(&input, "c").unwrap();
        assert_eq!(report.stats.n_posts, 1);
        assert_eq!(report.stats.n_replies, 2);
        assert_eq!(report.stats.delta_rate, 0.5);
        assert_eq!(report.n_malformed, 0);
    }

    #[test]
    fn ingest_empty_file_is_ok() {
        let tmp = tempfile::tempdir().unwrap();
        let input = tmp.path().join("empty.jsonl");
        fs::write(&input, "").unwrap();
        let store = CorpusStore::open(tmp.path().join("store"));
        let report = store.ingest(&input, "c").unwrap();
        assert_eq!(report.stats.n_posts, 0);
        assert_eq!(report.stats.n_replies, 0);
        assert_eq!(report.stats.delta_rate, 0.0);
    }

    #[test]
    fn ingest_rejects_duplicates_and_malformed() {
        let tmp = tempfile::tempdir().unwrap();
        let input = tmp.path().join("in.jsonl");
        let good = serde_json::to_string(&doc("p1", DocKind::Post, None, false)).unwrap();
        let dup = good.clone();
        fs::write(&input, format!("{good}\nnot json\n{dup}\n")).unwrap();
        let store = CorpusStore::open(tmp.path().join("store"));
        let report = store.ingest(&input, "c").unwrap();
        assert_eq!(report.n_accepted, 1);
        assert_eq!(report.n_malformed, 1);
        assert_eq!(report.n_duplicates, 1);
        assert_eq!(report.sample_errors.len(), 2);
    }

    #[test]
    fn ingest_rejects_delta_on_post_and_orphan_reply() {
        let tmp = tempfile::tempdir().unwrap();
        let mut bad_post = doc("p1", DocKind::Post, None, false);
        bad_post.delta_awarded = true;
        let mut orphan = doc("r1", DocKind::Reply, None, false);
        orphan.parent_id = None;
        let input = write_jsonl(tmp.path(), &[bad_post, orphan]);
        let store = CorpusStore::open(tmp.path().join("store"));
        let report = store.ingest(&input, "c").unwrap();
        assert_eq!(report.n_accepted, 0);
        assert_eq!(report.n_malformed, 2);
    }

    #[test]
    fn ingest_is_idempotent() {
        let tmp = tempfile::tempdir().unwrap();
        let docs = vec![
            doc("p1", DocKind::Post, None, false),
            doc("r1", DocKind::Reply, Some("p1"), true),
        ];
        let input = write_jsonl(tmp.path(), &docs);
        let store = CorpusStore::open(tmp.path().join("store"));
        let m1 = {
            store.ingest(&input, "c").unwrap();
            store.manifest("c").unwrap()
        };
        let m2 = {
            store.ingest(&input, "c").unwrap();
            store.manifest("c").unwrap()
        };
        assert_eq!(m1.content_hash, m2.content_hash);
        assert_eq!(m1.stats, m2.stats);
    }

    #[test]
    fn exclusions_filter_views() {
        let docs = vec![
            doc("p1", DocKind::Post, None, false),
            doc("r1", DocKind::Reply, Some("p1"), false),
            doc("r2", DocKind::Reply, Some("p1"), false),
        ];
        let mut corpus = Corpus::from_docs("c", docs);
        assert_eq!(corpus.n_visible(), 3);
        let unknown = corpus.exclude_documents(vec!["r1".to_string(), "zz".to_string()], "meta");
        assert_eq!(unknown, vec!["zz".to_string()]);
        assert_eq!(corpus.n_visible(), 2);
        // exclude everything
        let all: Vec<String> = corpus.docs.iter().map(|d| d.id.clone()).collect();
        corpus.exclude_documents(all, "meta");
        assert_eq!(corpus.n_visible(), 0);
    }
}
