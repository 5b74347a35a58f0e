//! End-to-end pipeline: ingest, phrase detection, linkage network,
//! clustering, lexicon expansion, topic modeling, tagging, and reports.
//!
//! Each stage writes its artifacts under the configured output directory
//! and records input/output hashes in a run manifest. A rerun with an
//! unchanged configuration and inputs reuses fresh artifacts instead of
//! recomputing them; `force` disables that.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{
    build_profiles, efficacy, efficacy_csv, pca_profiles, quadrant_bonus, significance,
    CommentObs, EfficacyRow, Outcome, PcaResult, QuadrantRow, UserProfile,
};
use crate::communities::{
    admission_log_csv, louvain, AdmissionRecord, Expander, PatternLexicon, Provenance,
};
use crate::corpus::{tokenize, Corpus, CorpusStore, DocKind};
use crate::linkage::{FragmentCounts, LinkageNetwork};
use crate::phrases::{
    bigram_set, detect_bigrams, merge_phrases, Fragment, PhraseStats, ScoredBigram, SeedLexicon,
};
use crate::tagging::{pattern_frequencies, tag_document, tags_csv, FrequencyMode, PatternVector};
use crate::topics::{
    build_topic_vocab, fit_lda, flag_meta_topics, DocTopics, LdaParams, TopicModel, PRONOUNS,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSection {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoreSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputSection {
    pub dir: PathBuf,
}

fn d_min_count() -> u64 {
    25
}
fn d_threshold() -> f64 {
    10.0
}
fn d_min_df() -> usize {
    50
}
fn d_resolution() -> f64 {
    1.0
}
fn d_true() -> bool {
    true
}
fn d_n_topics() -> usize {
    25
}
fn d_beta() -> f64 {
    0.01
}
fn d_iterations() -> usize {
    1000
}
fn d_meta_threshold() -> f64 {
    0.5
}
fn d_meta_top_n() -> usize {
    30
}
fn d_vocab_min_df() -> usize {
    5
}
fn d_min_comments() -> u64 {
    20
}
fn d_permutations() -> usize {
    10_000
}
fn d_n_floor() -> u64 {
    200
}
fn d_frequency_mode() -> FrequencyMode {
    FrequencyMode::HitShare
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhrasesSection {
    pub seeds: PathBuf,
    #[serde(default = "d_min_count")]
    pub min_count: u64,
    #[serde(default = "d_threshold")]
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    #[default]
    All,
    Posts,
    Replies,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkageSection {
    #[serde(default = "d_min_df")]
    pub min_df: usize,
    #[serde(default)]
    pub scope: Scope,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSection {
    pub rng_seed: u64,
    #[serde(default = "d_resolution")]
    pub resolution: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpandSection {
    pub candidates: PathBuf,
    pub tag: Provenance,
    #[serde(default = "d_true")]
    pub recompute: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicsSection {
    #[serde(default = "d_n_topics")]
    pub n_topics: usize,
    /// Defaults to 5 / n_topics when unset.
    pub alpha: Option<f64>,
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_iterations")]
    pub iterations: usize,
    pub rng_seed: u64,
    pub meta_markers: Option<PathBuf>,
    #[serde(default = "d_meta_threshold")]
    pub meta_threshold: f64,
    #[serde(default = "d_meta_top_n")]
    pub meta_top_n: usize,
    #[serde(default = "d_vocab_min_df")]
    pub min_df: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyticsSection {
    #[serde(default = "d_min_comments")]
    pub min_comments: u64,
    #[serde(default = "d_permutations")]
    pub permutations: usize,
    pub rng_seed: u64,
    #[serde(default = "d_n_floor")]
    pub n_floor: u64,
    #[serde(default = "d_frequency_mode")]
    pub frequency_mode: FrequencyMode,
    /// Pattern indices whose loadings are forced positive on (pc1, pc2).
    pub orient: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub corpus: CorpusSection,
    pub store: StoreSection,
    pub output: OutputSection,
    pub phrases: PhrasesSection,
    #[serde(default = "default_linkage")]
    pub linkage: LinkageSection,
    pub cluster: ClusterSection,
    #[serde(default)]
    pub expand: Vec<ExpandSection>,
    pub topics: TopicsSection,
    pub analytics: AnalyticsSection,
}

fn default_linkage() -> LinkageSection {
    LinkageSection {
        min_df: d_min_df(),
        scope: Scope::All,
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    /// Field-by-field validation. Returns one message per violation;
    /// empty means the config is usable. Paths resolve against `base`.
    pub fn validate(&self, base: &Path) -> Vec<String> {
        let mut errs = Vec::new();
        if self.corpus.name.is_empty() {
            errs.push("corpus.name: must be non-empty".into());
        }
        if !resolve(base, &self.corpus.path).exists() {
            errs.push(format!(
                "corpus.path: file not found: {}",
                self.corpus.path.display()
            ));
        }
        if !resolve(base, &self.phrases.seeds).exists() {
            errs.push(format!(
                "phrases.seeds: file not found: {}",
                self.phrases.seeds.display()
            ));
        }
        if self.phrases.min_count < 1 {
            errs.push("phrases.min_count: must be >= 1".into());
        }
        if !self.phrases.threshold.is_finite() {
            errs.push("phrases.threshold: must be finite".into());
        }
        if self.linkage.min_df < 1 {
            errs.push("linkage.min_df: must be >= 1".into());
        }
        if !(self.cluster.resolution > 0.0) {
            errs.push("cluster.resolution: must be > 0".into());
        }
        for (i, e) in self.expand.iter().enumerate() {
            if !resolve(base, &e.candidates).exists() {
                errs.push(format!(
                    "expand[{i}].candidates: file not found: {}",
                    e.candidates.display()
                ));
            }
        }
        if self.topics.n_topics < 1 {
            errs.push("topics.n_topics: must be >= 1".into());
        }
        if self.topics.iterations < 1 {
            errs.push("topics.iterations: must be >= 1".into());
        }
        if let Some(a) = self.topics.alpha {
            if !(a > 0.0) {
                errs.push("topics.alpha: must be > 0".into());
            }
        }
        if !(self.topics.beta > 0.0) {
            errs.push("topics.beta: must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.topics.meta_threshold) {
            errs.push("topics.meta_threshold: must be in [0, 1]".into());
        }
        if self.topics.meta_top_n < 1 {
            errs.push("topics.meta_top_n: must be >= 1".into());
        }
        if self.topics.min_df < 1 {
            errs.push("topics.min_df: must be >= 1".into());
        }
        if let Some(p) = &self.topics.meta_markers {
            if !resolve(base, p).exists() {
                errs.push(format!(
                    "topics.meta_markers: file not found: {}",
                    p.display()
                ));
            }
        }
        if self.analytics.permutations < 1 {
            errs.push("analytics.permutations: must be >= 1".into());
        }
        if self.analytics.min_comments < 1 {
            errs.push("analytics.min_comments: must be >= 1".into());
        }
        errs
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_parts(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes =
        fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hash_bytes(&bytes))
}

fn section_json<T: Serialize>(section: &T) -> String {
    serde_json::to_string(section).expect("config sections serialize")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub input_hash: String,
    /// output path (relative to the run base) -> content hash
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub config_hash: String,
    pub stages: BTreeMap<String, StageRecord>,
}

struct Ctx {
    base: PathBuf,
    out_dir: PathBuf,
    prev: Option<RunManifest>,
    manifest: RunManifest,
    force: bool,
}

impl Ctx {
    /// A stage is fresh when the previous run recorded the same input
    /// hash and all of its outputs are still on disk unchanged.
    fn fresh(&self, stage: &str, input_hash: &str) -> bool {
        if self.force {
            return false;
        }
        let Some(prev) = &self.prev else { return false };
        let Some(rec) = prev.stages.get(stage) else {
            return false;
        };
        if rec.input_hash != input_hash {
            return false;
        }
        rec.outputs.iter().all(|(rel, want)| {
            let p = self.base.join(rel);
            matches!(hash_file(&p), Ok(h) if h == *want)
        })
    }

    fn out_rel(&self, file: &str) -> String {
        let p = self.out_dir.join(file);
        p.strip_prefix(&self.base)
            .unwrap_or(&p)
            .to_string_lossy()
            .into_owned()
    }

    fn write_output(
        &self,
        outputs: &mut BTreeMap<String, String>,
        file: &str,
        bytes: &[u8],
    ) -> Result<()> {
        let path = self.out_dir.join(file);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        outputs.insert(self.out_rel(file), hash_bytes(bytes));
        Ok(())
    }

    fn record(&mut self, stage: &str, input_hash: String, outputs: BTreeMap<String, String>) {
        self.manifest
            .stages
            .insert(stage.to_string(), StageRecord { input_hash, outputs });
    }

    fn record_fresh(&mut self, stage: &str) {
        let rec = self.prev.as_ref().unwrap().stages[stage].clone();
        self.manifest.stages.insert(stage.to_string(), rec);
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, file: &str) -> Result<T> {
        let path = self.out_dir.join(file);
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PhrasesArtifact {
    seed_words: Vec<String>,
    bigrams: Vec<ScoredBigram>,
    fragments: Vec<Fragment>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkArtifact {
    nodes: Vec<String>,
    edges: Vec<(usize, usize, f64)>,
}

impl NetworkArtifact {
    fn from_network(net: &LinkageNetwork) -> Self {
        NetworkArtifact {
            nodes: net.nodes.clone(),
            edges: net.edges.iter().map(|(&(i, j), &w)| (i, j, w)).collect(),
        }
    }

    fn into_network(self) -> LinkageNetwork {
        LinkageNetwork {
            nodes: self.nodes,
            edges: self.edges.into_iter().map(|(i, j, w)| ((i, j), w)).collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ExpandArtifact {
    lexicon: PatternLexicon,
    log: Vec<AdmissionRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TopicsArtifact {
    model: TopicModel,
    doc_topics: Vec<DocTopics>,
    flagged: Vec<usize>,
    /// thread id -> dominant topic of its post
    thread_topic: BTreeMap<String, usize>,
    /// documents excluded as meta (posts in flagged topics plus replies)
    excluded: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TagsArtifact {
    vectors: Vec<PatternVector>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportSummary {
    pub frequencies: Vec<f64>,
    pub delta: Vec<EfficacyRow>,
    pub score: Vec<EfficacyRow>,
    pub pca: Option<PcaResult>,
    pub quadrants: Option<Vec<QuadrantRow>>,
}

/// Run every stage. Relative paths in `config` resolve against `base`.
pub fn run_pipeline(config: &PipelineConfig, base: &Path, force: bool) -> Result<RunManifest> {
    let errs = config.validate(base);
    if !errs.is_empty() {
        bail!("invalid configuration:\n  {}", errs.join("\n  "));
    }
    let out_dir = resolve(base, &config.output.dir);
    fs::create_dir_all(&out_dir)?;
    let config_hash = hash_parts(&[&section_json(config)]);
    let manifest_path = out_dir.join("manifest.json");
    let prev: Option<RunManifest> = fs::read_to_string(&manifest_path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .filter(|m: &RunManifest| m.config_hash == config_hash);
    let mut ctx = Ctx {
        base: base.to_path_buf(),
        out_dir: out_dir.clone(),
        prev,
        manifest: RunManifest {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.clone(),
            stages: BTreeMap::new(),
        },
        force,
    };

    // ---- ingest ----
    let store = CorpusStore::open(resolve(base, &config.store.dir));
    let input_path = resolve(base, &config.corpus.path);
    let ingest_input = hash_parts(&[&hash_file(&input_path)?, &section_json(&config.corpus)]);
    let have_corpus = store.manifest(&config.corpus.name).is_ok();
    if ctx.fresh("ingest", &ingest_input) && have_corpus {
        log::info!("ingest: up to date");
        ctx.record_fresh("ingest");
    } else {
        let report = store.ingest(&input_path, &config.corpus.name)?;
        log::info!(
            "ingest: {} documents accepted, {} malformed, {} duplicates",
            report.n_accepted,
            report.n_malformed,
            report.n_duplicates
        );
        ctx.record(
            "ingest",
            ingest_input,
            BTreeMap::from([(
                format!(
                    "{}",
                    resolve(base, &config.store.dir)
                        .join(&config.corpus.name)
                        .join("documents.jsonl")
                        .strip_prefix(base)
                        .map(|p| p.to_path_buf())
                        .unwrap_or_else(|_| {
                            resolve(base, &config.store.dir)
                                .join(&config.corpus.name)
                                .join("documents.jsonl")
                        })
                        .display()
                ),
                store.manifest(&config.corpus.name)?.content_hash,
            )]),
        );
    }
    let mut corpus = store.load(&config.corpus.name)?;
    let corpus_hash = store.manifest(&config.corpus.name)?.content_hash;

    // raw token streams for every document, in ingestion order
    let raw_tokens: BTreeMap<String, Vec<String>> = corpus
        .docs
        .iter()
        .map(|d| (d.id.clone(), tokenize(&d.body)))
        .collect();

    // ---- phrases ----
    let seeds_path = resolve(base, &config.phrases.seeds);
    let phrases_input = hash_parts(&[
        &corpus_hash,
        &hash_file(&seeds_path)?,
        &section_json(&config.phrases),
    ]);
    let phrases_art: PhrasesArtifact = if ctx.fresh("phrases", &phrases_input) {
        log::info!("phrases: up to date");
        ctx.record_fresh("phrases");
        ctx.read_json("fragments.json")?
    } else {
        let (seed_lex, warnings) = SeedLexicon::load(&seeds_path)?;
        for w in warnings {
            log::warn!("seed lexicon: {w}");
        }
        let seed_words = seed_lex.words();
        let mut stats = PhraseStats::new();
        for doc in corpus.docs.iter() {
            stats.add_stream(&raw_tokens[&doc.id], &seed_words);
        }
        let bigrams = detect_bigrams(&stats, config.phrases.min_count, config.phrases.threshold);
        let mut fragments: Vec<Fragment> =
            seed_words.iter().map(|w| Fragment::unigram(w)).collect();
        fragments.extend(bigrams.iter().map(|b| b.fragment()));
        fragments.sort();
        fragments.dedup();
        log::info!(
            "phrases: {} seed words, {} bigrams detected",
            seed_words.len(),
            bigrams.len()
        );
        let art = PhrasesArtifact {
            seed_words: seed_words.into_iter().collect(),
            bigrams,
            fragments,
        };
        let mut outputs = BTreeMap::new();
        ctx.write_output(
            &mut outputs,
            "fragments.json",
            serde_json::to_string_pretty(&art)?.as_bytes(),
        )?;
        let mut tsv = String::from("fragment\tarity\tpair_count\tscore\n");
        for f in &art.fragments {
            let (count, score) = art
                .bigrams
                .iter()
                .find(|b| b.fragment() == *f)
                .map(|b| (b.pair_count.to_string(), format!("{:.6}", b.score)))
                .unwrap_or_default();
            tsv.push_str(&format!("{}\t{:?}\t{}\t{}\n", f.text, f.arity, count, score));
        }
        ctx.write_output(&mut outputs, "fragments.tsv", tsv.as_bytes())?;
        ctx.record("phrases", phrases_input, outputs);
        art
    };
    let phrases_hash = hash_parts(&[&serde_json::to_string(&phrases_art)?]);

    // phrase-merged token streams
    let bigrams = bigram_set(&phrases_art.fragments);
    let merged: BTreeMap<String, Vec<String>> = corpus
        .docs
        .iter()
        .map(|d| (d.id.clone(), merge_phrases(&raw_tokens[&d.id], &bigrams)))
        .collect();

    // candidate words from every expansion batch, counted alongside the
    // inventory so their occurrence statistics share the document set
    let mut candidate_batches: Vec<(Vec<String>, Provenance, bool)> = Vec::new();
    let mut candidate_hashes = Vec::new();
    for e in &config.expand {
        let p = resolve(base, &e.candidates);
        candidate_hashes.push(hash_file(&p)?);
        let words: Vec<String> = fs::read_to_string(&p)?
            .split_whitespace()
            .map(|w| w.to_lowercase())
            .collect();
        candidate_batches.push((words, e.tag, e.recompute));
    }

    let inventory: BTreeSet<String> = phrases_art
        .fragments
        .iter()
        .map(|f| f.merged_token())
        .collect();
    let mut counted: BTreeSet<String> = inventory.clone();
    for (words, _, _) in &candidate_batches {
        counted.extend(words.iter().cloned());
    }

    let scope_docs = |scope: Scope| {
        corpus.docs.iter().filter(move |d| match scope {
            Scope::All => true,
            Scope::Posts => d.kind == DocKind::Post,
            Scope::Replies => d.kind == DocKind::Reply,
        })
    };
    let count_streams: Vec<(String, &[String])> = scope_docs(config.linkage.scope)
        .map(|d| (d.id.clone(), merged[&d.id].as_slice()))
        .collect();
    // counts over the inventory alone drive the network; counts that also
    // include candidates drive expansion
    let inv_counts = FragmentCounts::count(count_streams.clone(), &inventory)?;
    let exp_counts = FragmentCounts::count(count_streams, &counted)?;

    // ---- linkage ----
    let linkage_input = hash_parts(&[
        &corpus_hash,
        &phrases_hash,
        &section_json(&config.linkage),
    ]);
    let network: LinkageNetwork = if ctx.fresh("linkage", &linkage_input) {
        log::info!("linkage: up to date");
        ctx.record_fresh("linkage");
        ctx.read_json::<NetworkArtifact>("network.json")?.into_network()
    } else {
        let net = inv_counts.build_network(config.linkage.min_df)?;
        log::info!(
            "linkage: {} nodes, {} positive edges",
            net.n_nodes(),
            net.edges.len()
        );
        let mut outputs = BTreeMap::new();
        ctx.write_output(
            &mut outputs,
            "network.json",
            serde_json::to_string_pretty(&NetworkArtifact::from_network(&net))?.as_bytes(),
        )?;
        ctx.write_output(&mut outputs, "network.tsv", net.to_tsv().as_bytes())?;
        let mut counts_tsv = String::from("fragment\tdoc_freq\ttotal_occ\n");
        for (i, f) in inv_counts.fragments.iter().enumerate() {
            counts_tsv.push_str(&format!(
                "{}\t{}\t{}\n",
                f,
                inv_counts.doc_freq(i),
                inv_counts.total_occ(i)
            ));
        }
        ctx.write_output(&mut outputs, "counts.tsv", counts_tsv.as_bytes())?;
        ctx.record("linkage", linkage_input, outputs);
        net
    };
    let network_hash = hash_parts(&[&serde_json::to_string(&NetworkArtifact::from_network(
        &network,
    ))?]);

    // ---- cluster ----
    let cluster_input = hash_parts(&[&network_hash, &section_json(&config.cluster)]);
    let partition = if ctx.fresh("cluster", &cluster_input) {
        log::info!("cluster: up to date");
        ctx.record_fresh("cluster");
        ctx.read_json("partition.json")?
    } else {
        let p = louvain(&network, config.cluster.rng_seed, config.cluster.resolution)?;
        log::info!(
            "cluster: {} clusters, modularity {:.4}",
            p.n_clusters,
            p.modularity
        );
        let mut outputs = BTreeMap::new();
        ctx.write_output(
            &mut outputs,
            "partition.json",
            serde_json::to_string_pretty(&p)?.as_bytes(),
        )?;
        let mut csv = String::from("fragment,cluster_id\n");
        for (i, node) in p.nodes.iter().enumerate() {
            csv.push_str(&format!("{},{}\n", node, p.assignment[i]));
        }
        ctx.write_output(&mut outputs, "clusters.csv", csv.as_bytes())?;
        ctx.record("cluster", cluster_input, outputs);
        p
    };
    let partition_hash = hash_parts(&[&serde_json::to_string(&partition)?]);

    // ---- expand ----
    let mut expand_parts = vec![partition_hash.clone(), section_json(&config.expand)];
    expand_parts.extend(candidate_hashes);
    let expand_input = hash_parts(&expand_parts.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    let expand_art: ExpandArtifact = if ctx.fresh("expand", &expand_input) {
        log::info!("expand: up to date");
        ctx.record_fresh("expand");
        ctx.read_json("lexicon.json")?
    } else {
        let seed_provenance: BTreeMap<String, Provenance> = partition
            .nodes
            .iter()
            .map(|n| {
                let tag = if n.contains('_') {
                    Provenance::Bigram
                } else {
                    Provenance::Seed
                };
                (n.clone(), tag)
            })
            .collect();
        let mut expander = Expander::new(&network, &exp_counts, &partition, &seed_provenance)?;
        for (words, tag, recompute) in &candidate_batches {
            expander.expand(words, *tag, *recompute)?;
        }
        let (lexicon, log) = expander.into_parts();
        log::info!(
            "expand: {} fragments in lexicon, {} of {} candidates admitted",
            lexicon.assignment.len(),
            log.iter().filter(|r| r.accepted).count(),
            log.len()
        );
        let art = ExpandArtifact { lexicon, log };
        let mut outputs = BTreeMap::new();
        ctx.write_output(
            &mut outputs,
            "lexicon.json",
            serde_json::to_string_pretty(&art)?.as_bytes(),
        )?;
        ctx.write_output(&mut outputs, "lexicon.csv", art.lexicon.to_csv().as_bytes())?;
        ctx.write_output(
            &mut outputs,
            "admission_log.json",
            serde_json::to_string_pretty(&art.log)?.as_bytes(),
        )?;
        ctx.write_output(
            &mut outputs,
            "admission_log.csv",
            admission_log_csv(&art.log).as_bytes(),
        )?;
        ctx.record("expand", expand_input, outputs);
        art
    };
    let lexicon = &expand_art.lexicon;
    let lexicon_hash = hash_parts(&[&serde_json::to_string(lexicon)?]);

    // ---- topics ----
    let markers: Vec<String> = match &config.topics.meta_markers {
        Some(p) => fs::read_to_string(resolve(base, p))?
            .split_whitespace()
            .map(|w| w.to_lowercase())
            .collect(),
        None => Vec::new(),
    };
    let topics_input = hash_parts(&[
        &corpus_hash,
        &lexicon_hash,
        &section_json(&config.topics),
        &hash_parts(&markers.iter().map(|s| s.as_str()).collect::<Vec<_>>()),
    ]);
    let topics_art: TopicsArtifact = if ctx.fresh("topics", &topics_input) {
        log::info!("topics: up to date");
        ctx.record_fresh("topics");
        ctx.read_json("topics.json")?
    } else {
        let posts: Vec<&crate::corpus::Document> = corpus
            .docs
            .iter()
            .filter(|d| d.kind == DocKind::Post)
            .collect();
        if posts.is_empty() {
            bail!("topic modeling needs at least one post");
        }
        let post_streams: Vec<&[String]> =
            posts.iter().map(|d| merged[&d.id].as_slice()).collect();
        let vocab = build_topic_vocab(
            post_streams.iter().copied(),
            lexicon,
            PRONOUNS,
            config.topics.min_df,
        )?;
        let params = LdaParams {
            n_topics: config.topics.n_topics,
            alpha: config
                .topics
                .alpha
                .unwrap_or(5.0 / config.topics.n_topics as f64),
            beta: config.topics.beta,
            iterations: config.topics.iterations,
            rng_seed: config.topics.rng_seed,
        };
        let ids: Vec<String> = posts.iter().map(|d| d.id.clone()).collect();
        let docs_tokens: Vec<Vec<String>> = posts.iter().map(|d| merged[&d.id].clone()).collect();
        let (model, doc_topics) = fit_lda(&ids, &docs_tokens, &vocab, &params)?;
        let flagged = flag_meta_topics(
            &model,
            &markers,
            config.topics.meta_top_n,
            config.topics.meta_threshold,
        );
        let thread_topic: BTreeMap<String, usize> = posts
            .iter()
            .zip(&doc_topics)
            .map(|(d, dt)| (d.thread_id.clone(), dt.dominant))
            .collect();
        let excluded: Vec<String> = corpus
            .docs
            .iter()
            .filter(|d| {
                thread_topic
                    .get(&d.thread_id)
                    .map(|t| flagged.contains(t))
                    .unwrap_or(false)
            })
            .map(|d| d.id.clone())
            .collect();
        log::info!(
            "topics: {} topics fit over {} posts, {} flagged as meta, {} documents excluded",
            model.n_topics,
            posts.len(),
            flagged.len(),
            excluded.len()
        );
        let art = TopicsArtifact {
            model,
            doc_topics,
            flagged: flagged.into_iter().collect(),
            thread_topic,
            excluded,
        };
        let mut outputs = BTreeMap::new();
        ctx.write_output(
            &mut outputs,
            "topics.json",
            serde_json::to_string_pretty(&art)?.as_bytes(),
        )?;
        let mut csv = String::from("doc_id,dominant,label\n");
        for dt in &art.doc_topics {
            csv.push_str(&format!(
                "{},{},{}\n",
                dt.doc_id,
                dt.dominant,
                art.model.topic_label(dt.dominant)
            ));
        }
        ctx.write_output(&mut outputs, "doc_topics.csv", csv.as_bytes())?;
        // persist exclusions next to the corpus and record the file so a
        // re-ingest (which clears them) forces this stage to rerun
        corpus.exclude_documents(art.excluded.iter().cloned(), "meta-topic");
        store.save_exclusions(&corpus)?;
        let excl_path = resolve(base, &config.store.dir)
            .join(&config.corpus.name)
            .join("exclusions.json");
        let rel = excl_path
            .strip_prefix(base)
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|_| excl_path.clone());
        outputs.insert(rel.to_string_lossy().into_owned(), hash_file(&excl_path)?);
        ctx.record("topics", topics_input, outputs);
        art
    };
    // make sure the in-memory corpus reflects the exclusions even when
    // the stage was skipped
    corpus.exclude_documents(topics_art.excluded.iter().cloned(), "meta-topic");
    let topics_hash = hash_parts(&[&serde_json::to_string(&topics_art)?]);

    // ---- tag ----
    let tag_input = hash_parts(&[&corpus_hash, &lexicon_hash, &topics_hash]);
    let tags_art: TagsArtifact = if ctx.fresh("tag", &tag_input) {
        log::info!("tag: up to date");
        ctx.record_fresh("tag");
        ctx.read_json("tags.json")?
    } else {
        let vectors: Vec<PatternVector> = corpus
            .view()
            .filter(|d| d.kind == DocKind::Reply)
            .map(|d| tag_document(&d.id, &merged[&d.id], lexicon))
            .collect();
        log::info!(
            "tag: {} replies tagged, {} with a dominant pattern",
            vectors.len(),
            vectors.iter().filter(|v| v.dominant.is_some()).count()
        );
        let art = TagsArtifact { vectors };
        let mut outputs = BTreeMap::new();
        ctx.write_output(
            &mut outputs,
            "tags.json",
            serde_json::to_string_pretty(&art)?.as_bytes(),
        )?;
        ctx.write_output(
            &mut outputs,
            "tags.csv",
            tags_csv(&art.vectors, lexicon.n_clusters).as_bytes(),
        )?;
        ctx.record("tag", tag_input, outputs);
        art
    };
    let tags_hash = hash_parts(&[&serde_json::to_string(&tags_art)?]);

    // ---- report ----
    let report_input = hash_parts(&[&tags_hash, &topics_hash, &section_json(&config.analytics)]);
    if ctx.fresh("report", &report_input) {
        log::info!("report: up to date");
        ctx.record_fresh("report");
    } else {
        let mut outputs = BTreeMap::new();
        write_reports(
            &ctx,
            &mut outputs,
            config,
            &corpus,
            &tags_art.vectors,
            &topics_art,
            lexicon.n_clusters,
        )?;
        ctx.record("report", report_input, outputs);
    }

    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&ctx.manifest)?,
    )?;
    Ok(ctx.manifest)
}

#[allow(clippy::too_many_arguments)]
fn write_reports(
    ctx: &Ctx,
    outputs: &mut BTreeMap<String, String>,
    config: &PipelineConfig,
    corpus: &Corpus,
    vectors: &[PatternVector],
    topics: &TopicsArtifact,
    n_patterns: usize,
) -> Result<()> {
    let by_id: BTreeMap<&str, &crate::corpus::Document> =
        corpus.docs.iter().map(|d| (d.id.as_str(), d)).collect();

    // pattern frequencies
    let freqs = pattern_frequencies(vectors, n_patterns, config.analytics.frequency_mode)?;
    let mut csv = String::from("pattern,frequency\n");
    for (p, f) in freqs.iter().enumerate() {
        csv.push_str(&format!("{p},{f:.8}\n"));
    }
    ctx.write_output(outputs, "frequencies.csv", csv.as_bytes())?;

    // efficacy per outcome, with permutation significance
    let obs: Vec<CommentObs> = vectors
        .iter()
        .filter_map(|v| {
            let p = v.dominant?;
            let d = by_id.get(v.doc_id.as_str())?;
            let topic = topics.thread_topic.get(&d.thread_id).copied().unwrap_or(0);
            Some(CommentObs {
                doc_id: d.id.clone(),
                author: d.author.clone(),
                pattern: p,
                topic,
                delta: d.delta_awarded,
                score: d.score,
            })
        })
        .collect();
    let mut delta_rows = Vec::new();
    let mut score_rows = Vec::new();
    if obs.is_empty() {
        log::warn!("report: no dominant-tagged comments, efficacy skipped");
    } else {
        for (outcome, file) in [(Outcome::Delta, "efficacy_delta"), (Outcome::Score, "efficacy_score")] {
            let mut rows = efficacy(&obs, n_patterns, config.analytics.n_floor, outcome)?;
            significance(
                &mut rows,
                &obs,
                n_patterns,
                outcome,
                config.analytics.permutations,
                config.analytics.rng_seed,
            );
            let label = |k: usize| topics.model.topic_label(k);
            ctx.write_output(
                outputs,
                &format!("{file}.csv"),
                efficacy_csv(&rows, label).as_bytes(),
            )?;
            ctx.write_output(
                outputs,
                &format!("{file}.json"),
                serde_json::to_string_pretty(&rows)?.as_bytes(),
            )?;
            match outcome {
                Outcome::Delta => delta_rows = rows,
                Outcome::Score => score_rows = rows,
            }
        }
    }

    // user profiles and preference structure
    let comments: Vec<(String, Vec<f64>)> = vectors
        .iter()
        .filter_map(|v| {
            let props = v.proportions()?;
            let d = by_id.get(v.doc_id.as_str())?;
            Some((d.author.clone(), props))
        })
        .collect();
    let mut pca: Option<PcaResult> = None;
    let mut quadrants: Option<Vec<QuadrantRow>> = None;
    let mut profiles: Vec<UserProfile> = Vec::new();
    match build_profiles(&comments, n_patterns, config.analytics.min_comments) {
        Ok(p) => profiles = p,
        Err(e) => log::warn!("report: {e}, profile outputs skipped"),
    }
    if !profiles.is_empty() {
        match pca_profiles(&profiles, config.analytics.orient) {
            Ok(r) => pca = Some(r),
            Err(e) => log::warn!("report: {e}, pca outputs skipped"),
        }
    }
    let mut csv = String::from("author,n_comments");
    for p in 0..n_patterns {
        csv.push_str(&format!(",mean_{p}"));
    }
    csv.push_str(",pc1,pc2\n");
    for prof in &profiles {
        csv.push_str(&format!("{},{}", prof.author, prof.n_comments));
        for v in &prof.mean_pattern {
            csv.push_str(&format!(",{v:.8}"));
        }
        match pca.as_ref().and_then(|r| r.scores.get(&prof.author)) {
            Some(&(a, b)) => csv.push_str(&format!(",{a:.8},{b:.8}\n")),
            None => csv.push_str(",,\n"),
        }
    }
    ctx.write_output(outputs, "profiles.csv", csv.as_bytes())?;

    if let Some(r) = &pca {
        let mut csv = String::from("pattern,pc1_loading,pc2_loading\n");
        for p in 0..n_patterns {
            csv.push_str(&format!(
                "{p},{:.8},{:.8}\n",
                r.loadings[0][p], r.loadings[1][p]
            ));
        }
        csv.push_str(&format!(
            "explained_variance,{:.8},{:.8}\n",
            r.explained_variance[0], r.explained_variance[1]
        ));
        ctx.write_output(outputs, "factor.csv", csv.as_bytes())?;
        ctx.write_output(
            outputs,
            "pca.json",
            serde_json::to_string_pretty(r)?.as_bytes(),
        )?;

        let delta_comments: Vec<(String, bool)> = obs
            .iter()
            .map(|o| (o.author.clone(), o.delta))
            .collect();
        match quadrant_bonus(r, &delta_comments) {
            Ok(rows) => {
                let mut csv = String::from("quadrant,n_users,n_comments,delta_bonus\n");
                for q in &rows {
                    csv.push_str(&format!(
                        "{},{},{},{:.6}\n",
                        q.quadrant, q.n_users, q.n_comments, q.delta_bonus
                    ));
                }
                ctx.write_output(outputs, "quadrants.csv", csv.as_bytes())?;
                ctx.write_output(
                    outputs,
                    "quadrants.json",
                    serde_json::to_string_pretty(&rows)?.as_bytes(),
                )?;
                quadrants = Some(rows);
            }
            Err(e) => log::warn!("report: {e}, quadrant outputs skipped"),
        }
    }

    let summary = ReportSummary {
        frequencies: freqs,
        delta: delta_rows,
        score: score_rows,
        pca,
        quadrants,
    };
    ctx.write_output(
        outputs,
        "report.json",
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::MiniCorpus;

    fn mini_config(base: &Path) -> PipelineConfig {
        let mini = MiniCorpus::generate(7);
        let paths = mini.write_to(&base.join("data")).unwrap();
        PipelineConfig {
            corpus: CorpusSection {
                name: "mini".into(),
                path: paths.corpus.strip_prefix(base).unwrap().to_path_buf(),
            },
            store: StoreSection { dir: "store".into() },
            output: OutputSection { dir: "out".into() },
            phrases: PhrasesSection {
                seeds: paths.seeds.strip_prefix(base).unwrap().to_path_buf(),
                min_count: 5,
                threshold: 10.0,
            },
            linkage: LinkageSection {
                min_df: 3,
                scope: Scope::All,
            },
            cluster: ClusterSection {
                rng_seed: 1,
                resolution: 1.0,
            },
            expand: vec![ExpandSection {
                candidates: paths.cogproc.strip_prefix(base).unwrap().to_path_buf(),
                tag: Provenance::Cogproc,
                recompute: true,
            }],
            topics: TopicsSection {
                n_topics: 3,
                alpha: None,
                beta: 0.01,
                iterations: 200,
                rng_seed: 11,
                meta_markers: Some(paths.markers.strip_prefix(base).unwrap().to_path_buf()),
                meta_threshold: 0.5,
                meta_top_n: 10,
                min_df: 2,
            },
            analytics: AnalyticsSection {
                min_comments: 3,
                permutations: 200,
                rng_seed: 5,
                n_floor: 1,
                frequency_mode: FrequencyMode::HitShare,
                orient: None,
            },
        }
    }

    #[test]
    fn validate_reports_each_bad_field() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = mini_config(tmp.path());
        config.phrases.min_count = 0;
        config.cluster.resolution = 0.0;
        config.topics.n_topics = 0;
        config.corpus.path = "missing.jsonl".into();
        let errs = config.validate(tmp.path());
        assert!(errs.iter().any(|e| e.starts_with("phrases.min_count")));
        assert!(errs.iter().any(|e| e.starts_with("cluster.resolution")));
        assert!(errs.iter().any(|e| e.starts_with("topics.n_topics")));
        assert!(errs.iter().any(|e| e.starts_with("corpus.path")));
    }

    #[test]
    fn toml_roundtrip_with_defaults() {
        let text = r#"
[corpus]
name = "mini"
path = "data/mini.jsonl"

[store]
dir = "store"

[output]
dir = "out"

[phrases]
seeds = "data/seeds.txt"

[cluster]
rng_seed = 1

[[expand]]
candidates = "data/cogproc.txt"
tag = "cogproc"

[topics]
rng_seed = 2

[analytics]
rng_seed = 3
"#;
        let config: PipelineConfig = toml::from_str(text).unwrap();
        assert_eq!(config.phrases.min_count, 25);
        assert_eq!(config.phrases.threshold, 10.0);
        assert_eq!(config.linkage.min_df, 50);
        assert_eq!(config.linkage.scope, Scope::All);
        assert_eq!(config.cluster.resolution, 1.0);
        assert_eq!(config.expand.len(), 1);
        assert!(config.expand[0].recompute);
        assert_eq!(config.topics.n_topics, 25);
        assert_eq!(config.topics.iterations, 1000);
        assert_eq!(config.analytics.n_floor, 200);
        assert_eq!(config.analytics.frequency_mode, FrequencyMode::HitShare);
    }

    #[test]
    fn full_run_produces_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let config = mini_config(tmp.path());
        let manifest = run_pipeline(&config, tmp.path(), false).unwrap();
        let out = tmp.path().join("out");
        for f in [
            "fragments.json",
            "network.json",
            "partition.json",
            "lexicon.json",
            "admission_log.csv",
            "topics.json",
            "tags.csv",
            "frequencies.csv",
            "efficacy_delta.csv",
            "profiles.csv",
            "report.json",
            "manifest.json",
        ] {
            assert!(out.join(f).exists(), "{f} missing");
        }
        assert_eq!(manifest.stages.len(), 8);
        // planted bigram made it into the inventory
        let art: PhrasesArtifact = serde_json::from_str(
            &fs::read_to_string(out.join("fragments.json")).unwrap(),
        )
        .unwrap();
        assert!(art
            .fragments
            .iter()
            .any(|f| f.text == "more likely" || f.text == "quite clearly"));
    }

    #[test]
    fn rerun_is_byte_identical_and_skips() {
        let tmp = tempfile::tempdir().unwrap();
        let config = mini_config(tmp.path());
        run_pipeline(&config, tmp.path(), false).unwrap();
        let out = tmp.path().join("out");
        let snapshot: BTreeMap<String, Vec<u8>> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        // second run reuses every stage and leaves the bytes unchanged
        run_pipeline(&config, tmp.path(), false).unwrap();
        for (name, bytes) in &snapshot {
            assert_eq!(&fs::read(out.join(name)).unwrap(), bytes, "{name} changed");
        }
        // forced recomputation still reproduces the same bytes
        run_pipeline(&config, tmp.path(), true).unwrap();
        for (name, bytes) in &snapshot {
            assert_eq!(&fs::read(out.join(name)).unwrap(), bytes, "{name} changed");
        }
    }

    #[test]
    fn meta_threads_are_excluded() {
        let tmp = tempfile::tempdir().unwrap();
        let config = mini_config(tmp.path());
        run_pipeline(&config, tmp.path(), false).unwrap();
        let art: TopicsArtifact = serde_json::from_str(
            &fs::read_to_string(tmp.path().join("out/topics.json")).unwrap(),
        )
        .unwrap();
        if !art.flagged.is_empty() {
            assert!(!art.excluded.is_empty());
            // excluded documents never show up in the tag output
            let tags: TagsArtifact = serde_json::from_str(
                &fs::read_to_string(tmp.path().join("out/tags.json")).unwrap(),
            )
            .unwrap();
            let excluded: BTreeSet<&String> = art.excluded.iter().collect();
            for v in &tags.vectors {
                assert!(!excluded.contains(&v.doc_id));
            }
        }
    }
}
