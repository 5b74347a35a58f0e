//! Community detection on the linkage network and modularity-gated
//! lexicon expansion.
//!
//! Louvain here is the standard two-phase algorithm (seeded local moves,
//! then graph aggregation) on positive edge weights. Expansion attaches
//! candidate fragments to the fragment-cluster graph one at a time and
//! admits each only if bipartite modularity strictly increases.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linkage::{cluster_linkage, ClusterCounts, FragmentCounts, LinkageNetwork};

#[derive(Debug, Error)]
pub enum CommunityError {
    #[error("network is empty")]
    EmptyNetwork,
    #[error("network has zero total edge weight")]
    ZeroWeight,
    #[error("assignment covers {got} nodes, network has {want}")]
    BadAssignment { got: usize, want: usize },
    #[error("partition is not a fixed point of local refinement")]
    NotRefined,
    #[error("candidate `{0}` overlaps existing lexicon")]
    CandidateOverlap(String),
}

/// A hard partition of the network nodes into contiguous cluster ids,
/// ordered by descending cluster size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub nodes: Vec<String>,
    /// assignment[i] is the cluster of nodes[i]
    pub assignment: Vec<usize>,
    pub n_clusters: usize,
    pub modularity: f64,
}

impl Partition {
    pub fn as_map(&self) -> BTreeMap<String, usize> {
        self.nodes
            .iter()
            .cloned()
            .zip(self.assignment.iter().copied())
            .collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_clusters];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }
}

/// Internal graph form: symmetric adjacency without self entries, plus
/// self-loop weight (counted once) used by aggregated levels.
#[derive(Debug, Clone)]
struct Graph {
    n: usize,
    adj: Vec<BTreeMap<usize, f64>>,
    self_loops: Vec<f64>,
    degrees: Vec<f64>,
    total_weight: f64, // m: each undirected edge once, self loops once
}

impl Graph {
    fn from_network(net: &LinkageNetwork) -> Self {
        let n = net.n_nodes();
        let mut adj = vec![BTreeMap::new(); n];
        let mut total_weight = 0.0;
        for (&(i, j), &w) in &net.edges {
            adj[i].insert(j, w);
            adj[j].insert(i, w);
            total_weight += w;
        }
        let self_loops = vec![0.0; n];
        let degrees = (0..n)
            .map(|i| adj[i].values().sum::<f64>())
            .collect();
        Graph {
            n,
            adj,
            self_loops,
            degrees,
            total_weight,
        }
    }

    /// Q = sum_c [ W_c/m - gamma (S_c/2m)^2 ].
    fn modularity(&self, assignment: &[usize], gamma: f64) -> f64 {
        let m = self.total_weight;
        let n_comm = assignment.iter().max().map_or(0, |&c| c + 1);
        let mut intra = vec![0.0; n_comm];
        let mut deg = vec![0.0; n_comm];
        for i in 0..self.n {
            deg[assignment[i]] += self.degrees[i];
            intra[assignment[i]] += self.self_loops[i];
            for (&j, &w) in &self.adj[i] {
                if j > i && assignment[j] == assignment[i] {
                    intra[assignment[i]] += w;
                }
            }
        }
        (0..n_comm)
            .map(|c| {
                let s = deg[c] / (2.0 * m);
                intra[c] / m - gamma * s * s
            })
            .sum()
    }

    /// One pass of local moves starting from `comm`; returns whether any
    /// node moved. Node visit order is shuffled by `rng` each sweep.
    fn local_moves(&self, comm: &mut Vec<usize>, gamma: f64, rng: &mut ChaCha8Rng) -> bool {
        let m = self.total_weight;
        let mut comm_tot = vec![0.0; self.n];
        for i in 0..self.n {
            comm_tot[comm[i]] += self.degrees[i];
        }
        let mut order: Vec<usize> = (0..self.n).collect();
        let mut any_move = false;
        loop {
            order.shuffle(rng);
            let mut moved = false;
            for &i in &order {
                let old = comm[i];
                // neighbor community weights
                let mut neigh: BTreeMap<usize, f64> = BTreeMap::new();
                neigh.insert(old, 0.0);
                for (&j, &w) in &self.adj[i] {
                    *neigh.entry(comm[j]).or_insert(0.0) += w;
                }
                comm_tot[old] -= self.degrees[i];
                let mut best_c = old;
                let mut best_gain = neigh[&old] - gamma * self.degrees[i] * comm_tot[old] / (2.0 * m);
                for (&c, &k_in) in &neigh {
                    if c == old {
                        continue;
                    }
                    let gain = k_in - gamma * self.degrees[i] * comm_tot[c] / (2.0 * m);
                    // strict improvement only; ascending iteration keeps the
                    // lowest community id on ties
                    if gain > best_gain + 1e-12 {
                        best_c = c;
                        best_gain = gain;
                    }
                }
                comm_tot[best_c] += self.degrees[i];
                if best_c != old {
                    comm[i] = best_c;
                    moved = true;
                    any_move = true;
                }
            }
            if !moved {
                break;
            }
        }
        any_move
    }

    /// Collapse communities into nodes. Returns the aggregated graph and
    /// the relabeling old-community -> new-node (dense, by first
    /// appearance in node order for determinism).
    fn aggregate(&self, comm: &[usize]) -> (Graph, Vec<usize>) {
        let mut relabel: BTreeMap<usize, usize> = BTreeMap::new();
        for i in 0..self.n {
            let next = relabel.len();
            relabel.entry(comm[i]).or_insert(next);
        }
        let k = relabel.len();
        let mut adj = vec![BTreeMap::new(); k];
        let mut self_loops = vec![0.0; k];
        for i in 0..self.n {
            let ci = relabel[&comm[i]];
            self_loops[ci] += self.self_loops[i];
            for (&j, &w) in &self.adj[i] {
                if j < i {
                    continue;
                }
                let cj = relabel[&comm[j]];
                if ci == cj {
                    self_loops[ci] += w;
                } else {
                    *adj[ci].entry(cj).or_insert(0.0) += w;
                    *adj[cj].entry(ci).or_insert(0.0) += w;
                }
            }
        }
        let degrees: Vec<f64> = (0..k)
            .map(|c| adj[c].values().sum::<f64>() + 2.0 * self_loops[c])
            .collect();
        let total_weight =
            self_loops.iter().sum::<f64>() + adj.iter().enumerate()
                .flat_map(|(i, m)| m.iter().filter(move |(&j, _)| j > i).map(|(_, &w)| w))
                .sum::<f64>();
        let map: Vec<usize> = comm.iter().map(|c| relabel[c]).collect();
        (
            Graph {
                n: k,
                adj,
                self_loops,
                degrees,
                total_weight,
            },
            map,
        )
    }
}

fn check_network(net: &LinkageNetwork) -> Result<(), CommunityError> {
    if net.n_nodes() == 0 {
        return Err(CommunityError::EmptyNetwork);
    }
    if net.total_weight() <= 0.0 {
        return Err(CommunityError::ZeroWeight);
    }
    Ok(())
}

/// Weighted Newman-Girvan modularity of an assignment, with resolution
/// `gamma` scaling the null term.
pub fn modularity(
    net: &LinkageNetwork,
    assignment: &[usize],
    gamma: f64,
) -> Result<f64, CommunityError> {
    check_network(net)?;
    if assignment.len() != net.n_nodes() {
        return Err(CommunityError::BadAssignment {
            got: assignment.len(),
            want: net.n_nodes(),
        });
    }
    Ok(Graph::from_network(net).modularity(assignment, gamma))
}

/// Relabel an assignment to contiguous ids ordered by descending cluster
/// size, ties broken by the smallest member node index.
fn canonical_labels(assignment: &[usize]) -> (Vec<usize>, usize) {
    let mut info: BTreeMap<usize, (usize, usize)> = BTreeMap::new(); // comm -> (size, min idx)
    for (i, &c) in assignment.iter().enumerate() {
        let e = info.entry(c).or_insert((0, i));
        e.0 += 1;
    }
    let mut order: Vec<(usize, (usize, usize))> = info.into_iter().collect();
    order.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
    let relabel: BTreeMap<usize, usize> = order
        .iter()
        .enumerate()
        .map(|(new, (old, _))| (*old, new))
        .collect();
    let out: Vec<usize> = assignment.iter().map(|c| relabel[c]).collect();
    (out, relabel.len())
}

/// Two-phase Louvain. Same seed, network, and resolution give identical
/// output.
pub fn louvain(
    net: &LinkageNetwork,
    rng_seed: u64,
    resolution: f64,
) -> Result<Partition, CommunityError> {
    check_network(net)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut graph = Graph::from_network(net);
    // node_map[i] = current aggregated node holding original node i
    let mut node_map: Vec<usize> = (0..net.n_nodes()).collect();
    loop {
        let mut comm: Vec<usize> = (0..graph.n).collect();
        let improved = graph.local_moves(&mut comm, resolution, &mut rng);
        if !improved {
            break;
        }
        let (agg, map) = graph.aggregate(&comm);
        for slot in node_map.iter_mut() {
            *slot = map[comm[*slot]];
        }
        if agg.n == graph.n {
            break;
        }
        graph = agg;
    }
    let (assignment, n_clusters) = canonical_labels(&node_map);
    let q = Graph::from_network(net).modularity(&assignment, resolution);
    Ok(Partition {
        nodes: net.nodes.clone(),
        assignment,
        n_clusters,
        modularity: q,
    })
}

/// Repeated single-node moves (no aggregation) until no move increases
/// modularity. The result's modularity is >= the input's.
pub fn refine_partition(
    net: &LinkageNetwork,
    partition: &Partition,
    rng_seed: u64,
    resolution: f64,
) -> Result<Partition, CommunityError> {
    check_network(net)?;
    if partition.assignment.len() != net.n_nodes() {
        return Err(CommunityError::BadAssignment {
            got: partition.assignment.len(),
            want: net.n_nodes(),
        });
    }
    let graph = Graph::from_network(net);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut comm = partition.assignment.clone();
    let moved = graph.local_moves(&mut comm, resolution, &mut rng);
    if !moved {
        let q = graph.modularity(&comm, resolution);
        return Ok(Partition {
            nodes: partition.nodes.clone(),
            assignment: comm,
            n_clusters: partition.n_clusters,
            modularity: q,
        });
    }
    let (assignment, n_clusters) = canonical_labels(&comm);
    let q = graph.modularity(&assignment, resolution);
    Ok(Partition {
        nodes: partition.nodes.clone(),
        assignment,
        n_clusters,
        modularity: q,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Seed,
    Bigram,
    Cogproc,
    External,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Provenance::Seed => "seed",
            Provenance::Bigram => "bigram",
            Provenance::Cogproc => "cogproc",
            Provenance::External => "external",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Provenance {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seed" => Ok(Provenance::Seed),
            "bigram" => Ok(Provenance::Bigram),
            "cogproc" => Ok(Provenance::Cogproc),
            "external" => Ok(Provenance::External),
            other => Err(format!("unknown provenance tag `{other}`")),
        }
    }
}

/// The cluster-assigned fragment inventory. Keys are merged-token forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternLexicon {
    pub assignment: BTreeMap<String, usize>,
    pub n_clusters: usize,
    pub provenance: BTreeMap<String, Provenance>,
    /// Human-supplied labels; no algorithmic role.
    #[serde(default)]
    pub names: BTreeMap<usize, String>,
}

impl PatternLexicon {
    pub fn from_partition(partition: &Partition, provenance: &BTreeMap<String, Provenance>) -> Self {
        let assignment = partition.as_map();
        let provenance = assignment
            .keys()
            .map(|f| {
                let p = provenance
                    .get(f)
                    .copied()
                    .unwrap_or(Provenance::Seed);
                (f.clone(), p)
            })
            .collect();
        PatternLexicon {
            assignment,
            n_clusters: partition.n_clusters,
            provenance,
            names: BTreeMap::new(),
        }
    }

    /// CSV export: `fragment,cluster_id,provenance`, fragments sorted.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fragment,cluster_id,provenance\n");
        for (frag, &c) in &self.assignment {
            let prov = self.provenance.get(frag).copied().unwrap_or(Provenance::Seed);
            out.push_str(&format!("{frag},{c},{prov}\n"));
        }
        out
    }
}

/// One admission attempt during lexicon expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionRecord {
    pub fragment: String,
    pub argmax_cluster: Option<usize>,
    pub linkage_bits: f64,
    pub modularity_before: f64,
    pub modularity_after: f64,
    pub accepted: bool,
    pub tag: Provenance,
}

pub fn admission_log_csv(records: &[AdmissionRecord]) -> String {
    let mut out =
        String::from("fragment,argmax_cluster,linkage_bits,modularity_before,modularity_after,accepted\n");
    for r in records {
        let k = r
            .argmax_cluster
            .map(|k| k.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{:.12},{:.12},{:.12},{}\n",
            r.fragment, k, r.linkage_bits, r.modularity_before, r.modularity_after, r.accepted
        ));
    }
    out
}

/// Modularity bookkeeping for the fragment-cluster graph: cluster nodes
/// aggregate the seed network by partition; accepted candidates hang off
/// their cluster as pendant nodes weighted by L-hat.
struct BipartiteState {
    m: f64,
    intra: Vec<f64>,  // W_c
    deg: Vec<f64>,    // S_c
}

impl BipartiteState {
    fn from_partition(net: &LinkageNetwork, partition: &Partition) -> Result<Self, CommunityError> {
        check_network(net)?;
        let k = partition.n_clusters;
        let mut intra = vec![0.0; k];
        let mut cross = vec![0.0; k]; // per-cluster cross-edge weight sum
        for (&(i, j), &w) in &net.edges {
            let (ci, cj) = (partition.assignment[i], partition.assignment[j]);
            if ci == cj {
                intra[ci] += w;
            } else {
                cross[ci] += w;
                cross[cj] += w;
            }
        }
        let m = net.total_weight();
        let deg: Vec<f64> = (0..k).map(|c| 2.0 * intra[c] + cross[c]).collect();
        Ok(BipartiteState { m, intra, deg })
    }

    fn modularity(&self) -> f64 {
        (0..self.intra.len())
            .map(|c| {
                let s = self.deg[c] / (2.0 * self.m);
                self.intra[c] / self.m - s * s
            })
            .sum()
    }

    /// Modularity after tentatively attaching a pendant of weight `w` to
    /// cluster `c`.
    fn modularity_with_pendant(&self, c: usize, w: f64) -> f64 {
        let m = self.m + w;
        (0..self.intra.len())
            .map(|k| {
                let (intra, deg) = if k == c {
                    (self.intra[k] + w, self.deg[k] + 2.0 * w)
                } else {
                    (self.intra[k], self.deg[k])
                };
                let s = deg / (2.0 * m);
                intra / m - s * s
            })
            .sum()
    }

    fn attach(&mut self, c: usize, w: f64) {
        self.m += w;
        self.intra[c] += w;
        self.deg[c] += 2.0 * w;
    }
}

/// Incremental lexicon expansion over one or more candidate batches.
/// Candidates within a batch are processed in descending corpus
/// frequency order; each goes to the cluster maximizing L-hat and is
/// kept only if bipartite modularity strictly increases. Seed
/// memberships never change.
pub struct Expander<'a> {
    counts: &'a FragmentCounts,
    state: BipartiteState,
    clusters: ClusterCounts,
    lexicon: PatternLexicon,
    log: Vec<AdmissionRecord>,
}

impl<'a> Expander<'a> {
    pub fn new(
        net: &LinkageNetwork,
        counts: &'a FragmentCounts,
        partition: &Partition,
        seed_provenance: &BTreeMap<String, Provenance>,
    ) -> Result<Self, CommunityError> {
        let lexicon = PatternLexicon::from_partition(partition, seed_provenance);
        let mut membership: BTreeMap<usize, usize> = BTreeMap::new();
        for (frag, &k) in &lexicon.assignment {
            if let Ok(fi) = counts.fragment_index(frag) {
                membership.insert(fi, k);
            }
        }
        let clusters = ClusterCounts::build(counts, &membership, partition.n_clusters);
        let state = BipartiteState::from_partition(net, partition)?;
        Ok(Expander {
            counts,
            state,
            clusters,
            lexicon,
            log: Vec::new(),
        })
    }

    /// Process one candidate batch. When `recompute` is set (the
    /// default), accepted candidates contribute to cluster counts for
    /// later candidates.
    pub fn expand(
        &mut self,
        candidates: &[String],
        tag: Provenance,
        recompute: bool,
    ) -> Result<(), CommunityError> {
        for c in candidates {
            if self.lexicon.assignment.contains_key(c) {
                return Err(CommunityError::CandidateOverlap(c.clone()));
            }
        }
        // descending corpus frequency, ties lexicographic
        let mut ordered: Vec<(u64, String)> = candidates
            .iter()
            .map(|c| {
                let occ = self
                    .counts
                    .fragment_index(c)
                    .map(|fi| self.counts.total_occ(fi))
                    .unwrap_or(0);
                (occ, c.clone())
            })
            .collect();
        ordered.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

        for (occ_total, cand) in ordered {
            let q_before = self.state.modularity();
            if occ_total == 0 {
                log::warn!("candidate `{cand}` has zero document frequency, skipped");
                self.log.push(AdmissionRecord {
                    fragment: cand,
                    argmax_cluster: None,
                    linkage_bits: 0.0,
                    modularity_before: q_before,
                    modularity_after: q_before,
                    accepted: false,
                    tag,
                });
                continue;
            }
            let fi = self.counts.fragment_index(&cand).expect("occ_total > 0");
            let lhat = cluster_linkage(self.counts, &self.clusters, fi)
                .expect("candidate has occurrences");
            // argmax over clusters; ties -> lowest id
            let best = lhat
                .iter()
                .fold(None::<(usize, f64)>, |acc, (&k, &v)| match acc {
                    Some((_, bv)) if v <= bv => acc,
                    _ => Some((k, v)),
                });
            let (k_star, w) = match best {
                Some((k, w)) => (Some(k), w),
                None => (None, 0.0),
            };
            // a non-positive linkage is no link at all; the record keeps
            // the tentative delta at zero
            let (q_after, accepted) = match k_star {
                Some(k) if w > 0.0 => {
                    let q = self.state.modularity_with_pendant(k, w);
                    (q, q > q_before)
                }
                _ => (q_before, false),
            };
            if accepted {
                let k = k_star.unwrap();
                self.state.attach(k, w);
                self.lexicon.assignment.insert(cand.clone(), k);
                self.lexicon.provenance.insert(cand.clone(), tag);
                if recompute {
                    self.clusters.add_fragment(self.counts, fi, k);
                }
            }
            self.log.push(AdmissionRecord {
                fragment: cand,
                argmax_cluster: k_star,
                linkage_bits: w,
                modularity_before: q_before,
                modularity_after: q_after,
                accepted,
                tag,
            });
        }
        Ok(())
    }

    pub fn into_parts(self) -> (PatternLexicon, Vec<AdmissionRecord>) {
        (self.lexicon, self.log)
    }
}

/// One-batch convenience wrapper around [`Expander`].
pub fn expand_lexicon(
    net: &LinkageNetwork,
    counts: &FragmentCounts,
    partition: &Partition,
    seed_provenance: &BTreeMap<String, Provenance>,
    candidates: &[String],
    tag: Provenance,
    recompute: bool,
) -> Result<(PatternLexicon, Vec<AdmissionRecord>), CommunityError> {
    let mut expander = Expander::new(net, counts, partition, seed_provenance)?;
    expander.expand(candidates, tag, recompute)?;
    Ok(expander.into_parts())
}

/// Rebuild the expanded lexicon from a refined partition plus an
/// admission log. Used to audit that the log fully determines the result.
pub fn replay_admissions(
    partition: &Partition,
    seed_provenance: &BTreeMap<String, Provenance>,
    records: &[AdmissionRecord],
) -> PatternLexicon {
    let mut lexicon = PatternLexicon::from_partition(partition, seed_provenance);
    for r in records {
        if r.accepted {
            let k = r.argmax_cluster.expect("accepted record has a cluster");
            lexicon.assignment.insert(r.fragment.clone(), k);
            lexicon.provenance.insert(r.fragment.clone(), r.tag);
        }
    }
    lexicon
}
