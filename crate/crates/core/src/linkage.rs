//! Fragment occurrence statistics and the PMI linkage network.
//!
//! Documents are reduced to their fragment occurrences; documents with no
//! fragments are excluded entirely. Pairwise linkage is the base-2 PMI of
//! per-document occurrence distributions, with the joint estimated as the
//! mean over documents of N(i,d)N(j,d)/N(d)^2 and the marginal as the mean
//! of N(i,d)/N(d). Fragment-to-cluster linkage follows the same shape with
//! cluster occurrence totals in place of the second fragment.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinkageError {
    #[error("fragment set is empty")]
    EmptyFragmentSet,
    #[error("unknown fragment `{0}`")]
    UnknownFragment(String),
    #[error("no fragment has document frequency >= {0}")]
    NoQualifyingFragments(usize),
    #[error("fragment `{0}` occurs in no document")]
    NoOccurrences(String),
    #[error("network has zero total edge weight")]
    ZeroWeight,
}

/// Per-document fragment occurrence counts over the fragment-filtered
/// document collection.
#[derive(Debug, Clone)]
pub struct FragmentCounts {
    /// Fragments in lexicographic order (merged-token form).
    pub fragments: Vec<String>,
    index: BTreeMap<String, usize>,
    /// Documents retained (had at least one fragment), in input order.
    pub doc_ids: Vec<String>,
    /// occ[f] maps doc index -> N(w_f, d).
    pub occ: Vec<BTreeMap<usize, u32>>,
    /// doc_len[d] = N(d), total fragment occurrences in d.
    pub doc_len: Vec<u32>,
}

impl FragmentCounts {
    /// Count fragment occurrences over phrase-merged token streams.
    /// `fragments` are merged-token forms ("a_b" for bigrams).
    pub fn count<'a, I>(streams: I, fragments: &BTreeSet<String>) -> Result<Self, LinkageError>
    where
        I: IntoIterator<Item = (String, &'a [String])>,
    {
        if fragments.is_empty() {
            return Err(LinkageError::EmptyFragmentSet);
        }
        let frag_list: Vec<String> = fragments.iter().cloned().collect();
        let index: BTreeMap<String, usize> = frag_list
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
        let mut occ: Vec<BTreeMap<usize, u32>> = vec![BTreeMap::new(); frag_list.len()];
        let mut doc_len = Vec::new();
        let mut doc_ids = Vec::new();

        for (doc_id, tokens) in streams {
            let mut per_doc: BTreeMap<usize, u32> = BTreeMap::new();
            for t in tokens {
                if let Some(&fi) = index.get(t) {
                    *per_doc.entry(fi).or_insert(0) += 1;
                }
            }
            if per_doc.is_empty() {
                continue; // document leaves the collection entirely
            }
            let d = doc_ids.len();
            let total: u32 = per_doc.values().sum();
            for (fi, c) in per_doc {
                occ[fi].insert(d, c);
            }
            doc_len.push(total);
            doc_ids.push(doc_id);
        }

        Ok(FragmentCounts {
            fragments: frag_list,
            index,
            doc_ids,
            occ,
            doc_len,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn fragment_index(&self, frag: &str) -> Result<usize, LinkageError> {
        self.index
            .get(frag)
            .copied()
            .ok_or_else(|| LinkageError::UnknownFragment(frag.to_string()))
    }

    /// Number of documents containing the fragment.
    pub fn doc_freq(&self, i: usize) -> usize {
        self.occ[i].len()
    }

    /// Total corpus occurrences of the fragment (within retained docs).
    pub fn total_occ(&self, i: usize) -> u64 {
        self.occ[i].values().map(|&c| c as u64).sum()
    }

    /// P(w_i) = (1/|D|) sum_d N(i,d)/N(d).
    pub fn marginal_prob(&self, i: usize) -> f64 {
        if self.n_docs() == 0 {
            return 0.0;
        }
        let s: f64 = self.occ[i]
            .iter()
            .map(|(&d, &c)| c as f64 / self.doc_len[d] as f64)
            .sum();
        s / self.n_docs() as f64
    }

    /// P(w_i, w_j) = (1/|D|) sum_d N(i,d)N(j,d)/N(d)^2.
    pub fn joint_prob(&self, i: usize, j: usize) -> f64 {
        assert_ne!(i, j, "joint_prob requires distinct fragments");
        if self.n_docs() == 0 {
            return 0.0;
        }
        // iterate the sparser of the two occurrence maps
        let (small, big) = if self.occ[i].len() <= self.occ[j].len() {
            (&self.occ[i], &self.occ[j])
        } else {
            (&self.occ[j], &self.occ[i])
        };
        let s: f64 = small
            .iter()
            .filter_map(|(&d, &ci)| {
                big.get(&d).map(|&cj| {
                    let n = self.doc_len[d] as f64;
                    ci as f64 * cj as f64 / (n * n)
                })
            })
            .sum();
        s / self.n_docs() as f64
    }

    /// Linkage in bits; `None` when the pair never co-occurs (no edge).
    pub fn linkage(&self, i: usize, j: usize) -> Option<f64> {
        let joint = self.joint_prob(i, j);
        if joint <= 0.0 {
            return None;
        }
        let pi = self.marginal_prob(i);
        let pj = self.marginal_prob(j);
        Some((joint / (pi * pj)).log2())
    }

    /// Build the linkage network over fragments with document frequency
    /// >= `min_df`, keeping only strictly positive edges.
    pub fn build_network(&self, min_df: usize) -> Result<LinkageNetwork, LinkageError> {
        assert!(min_df >= 1, "min_df must be >= 1");
        let kept: Vec<usize> = (0..self.fragments.len())
            .filter(|&i| self.doc_freq(i) >= min_df)
            .collect();
        if kept.is_empty() {
            return Err(LinkageError::NoQualifyingFragments(min_df));
        }
        // kept is already in lexicographic fragment order
        let nodes: Vec<String> = kept.iter().map(|&i| self.fragments[i].clone()).collect();
        let mut edges = BTreeMap::new();
        for a in 0..kept.len() {
            for b in (a + 1)..kept.len() {
                if let Some(w) = self.linkage(kept[a], kept[b]) {
                    if w > 0.0 {
                        edges.insert((a, b), w);
                    }
                }
            }
        }
        Ok(LinkageNetwork { nodes, edges })
    }
}

/// Weighted undirected fragment graph; edge weights are linkage in bits.
/// Edges are keyed (i, j) with i < j; only positive weights are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkageNetwork {
    pub nodes: Vec<String>,
    pub edges: BTreeMap<(usize, usize), f64>,
}

impl LinkageNetwork {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.values().sum()
    }

    /// TSV export: `frag_i<TAB>frag_j<TAB>linkage_bits`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (&(i, j), w) in &self.edges {
            out.push_str(&format!("{}\t{}\t{:.12}\n", self.nodes[i], self.nodes[j], w));
        }
        out
    }
}

/// Per-document occurrence totals for each cluster, N(C_k, d).
#[derive(Debug, Clone)]
pub struct ClusterCounts {
    pub n_clusters: usize,
    /// per cluster: doc index -> total member-fragment occurrences
    pub occ: Vec<BTreeMap<usize, u32>>,
}

impl ClusterCounts {
    /// Aggregate member-fragment occurrences per cluster. `membership`
    /// maps fragment index (in `counts`) to cluster id.
    pub fn build(
        counts: &FragmentCounts,
        membership: &BTreeMap<usize, usize>,
        n_clusters: usize,
    ) -> Self {
        let mut occ = vec![BTreeMap::new(); n_clusters];
        for (&fi, &k) in membership {
            for (&d, &c) in &counts.occ[fi] {
                *occ[k].entry(d).or_insert(0) += c;
            }
        }
        ClusterCounts { n_clusters, occ }
    }

    /// Add one fragment's occurrences to cluster `k` (used as candidates
    /// are admitted during lexicon expansion).
    pub fn add_fragment(&mut self, counts: &FragmentCounts, fi: usize, k: usize) {
        for (&d, &c) in &counts.occ[fi] {
            *self.occ[k].entry(d).or_insert(0) += c;
        }
    }

    /// P(C_k) = (1/|D|) sum_d N(C_k,d)/N(d).
    pub fn prior(&self, counts: &FragmentCounts, k: usize) -> f64 {
        if counts.n_docs() == 0 {
            return 0.0;
        }
        let s: f64 = self.occ[k]
            .iter()
            .map(|(&d, &c)| c as f64 / counts.doc_len[d] as f64)
            .sum();
        s / counts.n_docs() as f64
    }
}

/// Fragment-to-cluster linkage L-hat for candidate fragment `j`:
/// log2(P(C_k|w_j) / P(C_k)), with the conditional normalized over
/// clusters. Clusters with zero conditional mass are omitted.
pub fn cluster_linkage(
    counts: &FragmentCounts,
    clusters: &ClusterCounts,
    j: usize,
) -> Result<BTreeMap<usize, f64>, LinkageError> {
    if counts.occ[j].is_empty() {
        return Err(LinkageError::NoOccurrences(counts.fragments[j].clone()));
    }
    let mut unnorm = vec![0.0f64; clusters.n_clusters];
    for (&d, &cj) in &counts.occ[j] {
        let n = counts.doc_len[d] as f64;
        for k in 0..clusters.n_clusters {
            if let Some(&ck) = clusters.occ[k].get(&d) {
                unnorm[k] += ck as f64 * cj as f64 / n;
            }
        }
    }
    let z: f64 = unnorm.iter().sum();
    let mut out = BTreeMap::new();
    if z <= 0.0 {
        return Ok(out); // no cluster word co-occurs with j
    }
    for k in 0..clusters.n_clusters {
        if unnorm[k] <= 0.0 {
            continue;
        }
        let cond = unnorm[k] / z;
        let prior = clusters.prior(counts, k);
        if prior > 0.0 {
            out.insert(k, (cond / prior).log2());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn fragset(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    /// The worked two-document example: D = {d1:[a,b], d2:[c,c]}.
    fn two_doc_counts() -> FragmentCounts {
        let d1 = toks("a b");
        let d2 = toks("c c");
        FragmentCounts::count(
            vec![("d1".to_string(), &d1[..]), ("d2".to_string(), &d2[..])],
            &fragset(&["a", "b", "c"]),
        )
        .unwrap()
    }

    #[test]
    fn count_filters_and_excludes_empty_docs() {
        let d1 = toks("a x b");
        let d2 = toks("x y");
        let counts = FragmentCounts::count(
            vec![("d1".to_string(), &d1[..]), ("d2".to_string(), &d2[..])],
            &fragset(&["a", "b"]),
        )
        .unwrap();
        assert_eq!(counts.n_docs(), 1);
        assert_eq!(counts.doc_ids, vec!["d1"]);
        let a = counts.fragment_index("a").unwrap();
        let b = counts.fragment_index("b").unwrap();
        assert_eq!(counts.occ[a][&0], 1);
        assert_eq!(counts.occ[b][&0], 1);
        assert_eq!(counts.doc_len[0], 2);
    }

    #[test]
    fn count_repeated_fragment() {
        let d = toks("a a a x");
        let counts = FragmentCounts::count(
            vec![("d".to_string(), &d[..])],
            &fragset(&["a"]),
        )
        .unwrap();
        assert_eq!(counts.occ[0][&0], 3);
        assert_eq!(counts.doc_len[0], 3);
    }

    #[test]
    fn empty_fragment_set_errors() {
        let d = toks("a");
        let r = FragmentCounts::count(vec![("d".to_string(), &d[..])], &BTreeSet::new());
        assert!(matches!(r, Err(LinkageError::EmptyFragmentSet)));
    }

    #[test]
    fn worked_example_probabilities() {
        let c = two_doc_counts();
        let a = c.fragment_index("a").unwrap();
        let b = c.fragment_index("b").unwrap();
        let cc = c.fragment_index("c").unwrap();
        assert!((c.joint_prob(a, b) - 0.125).abs() < 1e-15);
        assert!((c.marginal_prob(a) - 0.25).abs() < 1e-15);
        assert!((c.marginal_prob(cc) - 0.5).abs() < 1e-15);
        assert_eq!(c.joint_prob(a, cc), 0.0);
        assert!((c.linkage(a, b).unwrap() - 1.0).abs() < 1e-12);
        assert!(c.linkage(a, cc).is_none());
    }

    #[test]
    fn linkage_is_symmetric() {
        let c = two_doc_counts();
        let a = c.fragment_index("a").unwrap();
        let b = c.fragment_index("b").unwrap();
        assert_eq!(c.linkage(a, b), c.linkage(b, a));
    }

    #[test]
    fn duplicating_documents_is_invariant() {
        let d1 = toks("a b b");
        let d2 = toks("a c");
        let base = FragmentCounts::count(
            vec![("d1".to_string(), &d1[..]), ("d2".to_string(), &d2[..])],
            &fragset(&["a", "b", "c"]),
        )
        .unwrap();
        let doubled = FragmentCounts::count(
            vec![
                ("d1".to_string(), &d1[..]),
                ("d2".to_string(), &d2[..]),
                ("d1x".to_string(), &d1[..]),
                ("d2x".to_string(), &d2[..]),
            ],
            &fragset(&["a", "b", "c"]),
        )
        .unwrap();
        for i in 0..3 {
            assert!((base.marginal_prob(i) - doubled.marginal_prob(i)).abs() < 1e-15);
            for j in 0..3 {
                if i != j {
                    assert!((base.joint_prob(i, j) - doubled.joint_prob(i, j)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn fragment_filling_every_doc_has_marginal_one() {
        let d1 = toks("a a");
        let d2 = toks("a");
        let c = FragmentCounts::count(
            vec![("d1".to_string(), &d1[..]), ("d2".to_string(), &d2[..])],
            &fragset(&["a", "z"]),
        )
        .unwrap();
        let a = c.fragment_index("a").unwrap();
        let z = c.fragment_index("z").unwrap();
        assert!((c.marginal_prob(a) - 1.0).abs() < 1e-15);
        assert_eq!(c.marginal_prob(z), 0.0);
    }

    #[test]
    fn build_network_worked_example() {
        let c = two_doc_counts();
        let net = c.build_network(1).unwrap();
        assert_eq!(net.nodes, vec!["a", "b", "c"]);
        assert_eq!(net.edges.len(), 1);
        let w = net.edges[&(0, 1)];
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn build_network_min_df_too_high() {
        let c = two_doc_counts();
        assert!(matches!(
            c.build_network(5),
            Err(LinkageError::NoQualifyingFragments(5))
        ));
    }

    #[test]
    fn cluster_linkage_degenerate_conditional() {
        // candidate j co-occurs only with cluster-0 fragments
        let d1 = toks("s0 j");
        let d2 = toks("s0 s0");
        let d3 = toks("s1 s1");
        let counts = FragmentCounts::count(
            vec![
                ("d1".to_string(), &d1[..]),
                ("d2".to_string(), &d2[..]),
                ("d3".to_string(), &d3[..]),
            ],
            &fragset(&["s0", "s1", "j"]),
        )
        .unwrap();
        let s0 = counts.fragment_index("s0").unwrap();
        let s1 = counts.fragment_index("s1").unwrap();
        let j = counts.fragment_index("j").unwrap();
        let membership: BTreeMap<usize, usize> = [(s0, 0), (s1, 1)].into();
        let clusters = ClusterCounts::build(&counts, &membership, 2);
        let lhat = cluster_linkage(&counts, &clusters, j).unwrap();
        // P(C_0|w_j) = 1 so L-hat_0 = -log2 P(C_0), and cluster 1 is omitted
        let p0 = clusters.prior(&counts, 0);
        assert_eq!(lhat.len(), 1);
        assert!((lhat[&0] - (-p0.log2())).abs() < 1e-12);
        assert!(lhat[&0] > 0.0);
    }

    #[test]
    fn cluster_linkage_symmetric_candidate() {
        // j rides equally with both clusters: conditional 1/2 each, and
        // each prior is (1/2)(1/2) = 1/4, so both clusters get exactly
        // one bit
        let d1 = toks("s0 j");
        let d2 = toks("s1 j");
        let counts = FragmentCounts::count(
            vec![("d1".to_string(), &d1[..]), ("d2".to_string(), &d2[..])],
            &fragset(&["s0", "s1", "j"]),
        )
        .unwrap();
        let s0 = counts.fragment_index("s0").unwrap();
        let s1 = counts.fragment_index("s1").unwrap();
        let j = counts.fragment_index("j").unwrap();
        let membership: BTreeMap<usize, usize> = [(s0, 0), (s1, 1)].into();
        let clusters = ClusterCounts::build(&counts, &membership, 2);
        let lhat = cluster_linkage(&counts, &clusters, j).unwrap();
        assert_eq!(lhat.len(), 2);
        assert!((lhat[&0] - 1.0).abs() < 1e-12);
        assert!((lhat[&1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cluster_conditional_sums_to_one() {
        // brute-force check on a 4-doc, 2-cluster instance
        let d1 = toks("s0 s0 j x");
        let d2 = toks("s1 j j");
        let d3 = toks("s0 s1");
        let d4 = toks("j s1 s0 s0");
        let counts = FragmentCounts::count(
            vec![
                ("d1".to_string(), &d1[..]),
                ("d2".to_string(), &d2[..]),
                ("d3".to_string(), &d3[..]),
                ("d4".to_string(), &d4[..]),
            ],
            &fragset(&["s0", "s1", "j"]),
        )
        .unwrap();
        let s0 = counts.fragment_index("s0").unwrap();
        let s1 = counts.fragment_index("s1").unwrap();
        let j = counts.fragment_index("j").unwrap();
        let membership: BTreeMap<usize, usize> = [(s0, 0), (s1, 1)].into();
        let clusters = ClusterCounts::build(&counts, &membership, 2);

        // independent evaluation of the conditional, then compare L-hat
        let mut unnorm = [0.0f64; 2];
        for (&d, &cj) in &counts.occ[j] {
            let n = counts.doc_len[d] as f64;
            for k in 0..2 {
                let ck = *clusters.occ[k].get(&d).unwrap_or(&0);
                unnorm[k] += ck as f64 * cj as f64 / n;
            }
        }
        let z = unnorm[0] + unnorm[1];
        let cond = [unnorm[0] / z, unnorm[1] / z];
        assert!((cond[0] + cond[1] - 1.0).abs() < 1e-9);

        let lhat = cluster_linkage(&counts, &clusters, j).unwrap();
        for k in 0..2 {
            let expect = (cond[k] / clusters.prior(&counts, k)).log2();
            assert!((lhat[&k] - expect).abs() < 1e-12);
        }
    }
}
