//! Pattern efficacy and per-user preference structure.
//!
//! Efficacy compares outcome rates for comments dominated by each pattern
//! against a per-topic baseline, with permutation-test significance.
//! User preferences are summarized by mean pattern distributions and a
//! two-component PCA.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("no comments with a dominant pattern")]
    NoObservations,
    #[error("no users with at least {0} qualifying comments")]
    NoQualifyingUsers(u64),
    #[error("need at least 3 profiles for PCA, got {0}")]
    TooFewProfiles(usize),
    #[error("profiles have zero variance")]
    ZeroVariance,
    #[error("quadrant {0} is empty")]
    EmptyQuadrant(&'static str),
}

/// One dominant-tagged comment with its outcomes and topic stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentObs {
    pub doc_id: String,
    pub author: String,
    pub pattern: usize,
    pub topic: usize,
    pub delta: bool,
    pub score: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Delta,
    Score,
}

/// Efficacy of one pattern within one topic stratum (`topic == None` is
/// the all-topics row). `bonus` is a relative percentage for deltas and
/// an additive difference for scores; `None` when the stratum baseline
/// is undefined (no delta-tagged comments).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficacyRow {
    pub pattern: usize,
    pub topic: Option<usize>,
    pub n_comments: u64,
    pub baseline: f64,
    pub bonus: Option<f64>,
    pub p_value: Option<f64>,
}

impl EfficacyRow {
    /// Star label at the 0.05 / 0.01 / 1e-3 thresholds.
    pub fn stars(&self) -> &'static str {
        match self.p_value {
            Some(p) if p < 1e-3 => "***",
            Some(p) if p < 0.01 => "**",
            Some(p) if p < 0.05 => "*",
            _ => "",
        }
    }
}

fn strata(obs: &[CommentObs]) -> Vec<(Option<usize>, Vec<usize>)> {
    let mut by_topic: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, o) in obs.iter().enumerate() {
        by_topic.entry(o.topic).or_default().push(i);
    }
    let mut out = vec![(None, (0..obs.len()).collect::<Vec<_>>())];
    out.extend(by_topic.into_iter().map(|(t, v)| (Some(t), v)));
    out
}

fn stratum_rows(
    obs: &[CommentObs],
    idx: &[usize],
    topic: Option<usize>,
    n_patterns: usize,
    outcome: Outcome,
) -> Vec<EfficacyRow> {
    let mut n = vec![0u64; n_patterns];
    let mut sum = vec![0.0f64; n_patterns];
    let mut total = 0.0f64;
    for &i in idx {
        let o = &obs[i];
        let y = match outcome {
            Outcome::Delta => o.delta as u8 as f64,
            Outcome::Score => o.score as f64,
        };
        n[o.pattern] += 1;
        sum[o.pattern] += y;
        total += y;
    }
    let n_total: u64 = n.iter().sum();
    if n_total == 0 {
        return Vec::new();
    }
    let baseline = total / n_total as f64;
    (0..n_patterns)
        .filter(|&p| n[p] > 0)
        .map(|p| {
            let mean_p = sum[p] / n[p] as f64;
            let bonus = match outcome {
                Outcome::Delta => {
                    if baseline > 0.0 {
                        Some(100.0 * (mean_p / baseline - 1.0))
                    } else {
                        None
                    }
                }
                Outcome::Score => Some(mean_p - baseline),
            };
            EfficacyRow {
                pattern: p,
                topic,
                n_comments: n[p],
                baseline,
                bonus,
                p_value: None,
            }
        })
        .collect()
}

/// Delta bonus per (pattern, topic) including the all-topics stratum.
/// Rows with fewer than `n_floor` comments are suppressed.
pub fn delta_bonus(
    obs: &[CommentObs],
    n_patterns: usize,
    n_floor: u64,
) -> Result<Vec<EfficacyRow>, AnalyticsError> {
    efficacy(obs, n_patterns, n_floor, Outcome::Delta)
}

/// Additive score bonus per (pattern, topic).
pub fn score_bonus(
    obs: &[CommentObs],
    n_patterns: usize,
    n_floor: u64,
) -> Result<Vec<EfficacyRow>, AnalyticsError> {
    efficacy(obs, n_patterns, n_floor, Outcome::Score)
}

pub fn efficacy(
    obs: &[CommentObs],
    n_patterns: usize,
    n_floor: u64,
    outcome: Outcome,
) -> Result<Vec<EfficacyRow>, AnalyticsError> {
    if obs.is_empty() {
        return Err(AnalyticsError::NoObservations);
    }
    let mut rows = Vec::new();
    for (topic, idx) in strata(obs) {
        rows.extend(
            stratum_rows(obs, &idx, topic, n_patterns, outcome)
                .into_iter()
                .filter(|r| r.n_comments >= n_floor),
        );
    }
    Ok(rows)
}

/// Attach permutation p-values to efficacy rows. Within each stratum,
/// pattern labels are shuffled across comments; the p-value is the
/// two-sided tail fraction of permuted |bonus| >= observed |bonus|.
/// Deterministic under a fixed seed.
pub fn significance(
    rows: &mut [EfficacyRow],
    obs: &[CommentObs],
    n_patterns: usize,
    outcome: Outcome,
    n_permutations: usize,
    rng_seed: u64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for (topic, idx) in strata(obs) {
        if idx.len() < 2 {
            log::warn!("stratum {topic:?} has too few comments to permute");
            continue;
        }
        let observed = stratum_rows(obs, &idx, topic, n_patterns, outcome);
        let obs_bonus: BTreeMap<usize, f64> = observed
            .iter()
            .filter_map(|r| r.bonus.map(|b| (r.pattern, b)))
            .collect();
        if obs_bonus.is_empty() {
            continue;
        }
        let mut labels: Vec<usize> = idx.iter().map(|&i| obs[i].pattern).collect();
        let values: Vec<f64> = idx
            .iter()
            .map(|&i| match outcome {
                Outcome::Delta => obs[i].delta as u8 as f64,
                Outcome::Score => obs[i].score as f64,
            })
            .collect();
        let total: f64 = values.iter().sum();
        let baseline = total / values.len() as f64;
        let mut exceed: BTreeMap<usize, usize> = obs_bonus.keys().map(|&p| (p, 0)).collect();
        let mut n = vec![0u64; n_patterns];
        for &l in &labels {
            n[l] += 1;
        }
        let mut sum = vec![0.0f64; n_patterns];
        for _ in 0..n_permutations {
            labels.shuffle(&mut rng);
            sum.iter_mut().for_each(|s| *s = 0.0);
            for (k, &l) in labels.iter().enumerate() {
                sum[l] += values[k];
            }
            for (&p, cnt) in exceed.iter_mut() {
                let mean_p = sum[p] / n[p] as f64;
                let perm_bonus = match outcome {
                    Outcome::Delta => 100.0 * (mean_p / baseline - 1.0),
                    Outcome::Score => mean_p - baseline,
                };
                if perm_bonus.abs() >= obs_bonus[&p].abs() {
                    *cnt += 1;
                }
            }
        }
        for row in rows.iter_mut() {
            if row.topic == topic {
                if let Some(cnt) = exceed.get(&row.pattern) {
                    row.p_value = Some(*cnt as f64 / n_permutations as f64);
                }
            }
        }
    }
}

/// A user's mean distribution over patterns, from their hit-bearing
/// comments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub author: String,
    pub n_comments: u64,
    pub mean_pattern: Vec<f64>,
}

/// Build profiles from per-comment hit proportions. Only users with at
/// least `min_comments` hit-bearing comments qualify.
pub fn build_profiles(
    comments: &[(String, Vec<f64>)],
    n_patterns: usize,
    min_comments: u64,
) -> Result<Vec<UserProfile>, AnalyticsError> {
    let mut by_author: BTreeMap<&str, (u64, Vec<f64>)> = BTreeMap::new();
    for (author, props) in comments {
        let e = by_author
            .entry(author.as_str())
            .or_insert_with(|| (0, vec![0.0; n_patterns]));
        e.0 += 1;
        for (p, v) in props.iter().enumerate() {
            e.1[p] += v;
        }
    }
    let profiles: Vec<UserProfile> = by_author
        .into_iter()
        .filter(|(_, (n, _))| *n >= min_comments)
        .map(|(author, (n, sums))| UserProfile {
            author: author.to_string(),
            n_comments: n,
            mean_pattern: sums.iter().map(|s| s / n as f64).collect(),
        })
        .collect();
    if profiles.is_empty() {
        return Err(AnalyticsError::NoQualifyingUsers(min_comments));
    }
    Ok(profiles)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    /// Two orthonormal loading rows of length P.
    pub loadings: Vec<Vec<f64>>,
    /// Fraction of total variance explained by each component.
    pub explained_variance: Vec<f64>,
    pub scores: BTreeMap<String, (f64, f64)>,
}

/// PCA of mean-centered profiles: top-2 eigenvectors of the covariance.
/// `orient` optionally names a pattern index per component whose loading
/// is made positive; by default the largest-magnitude loading is made
/// positive so signs are reproducible.
pub fn pca_profiles(
    profiles: &[UserProfile],
    orient: Option<(usize, usize)>,
) -> Result<PcaResult, AnalyticsError> {
    if profiles.len() < 3 {
        return Err(AnalyticsError::TooFewProfiles(profiles.len()));
    }
    let p = profiles[0].mean_pattern.len();
    let n = profiles.len();
    let mut mean = vec![0.0f64; p];
    for prof in profiles {
        for (j, v) in prof.mean_pattern.iter().enumerate() {
            mean[j] += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(p, p);
    for prof in profiles {
        for a in 0..p {
            let da = prof.mean_pattern[a] - mean[a];
            for b in 0..p {
                let db = prof.mean_pattern[b] - mean[b];
                cov[(a, b)] += da * db;
            }
        }
    }
    cov /= (n - 1) as f64;
    let total_var = cov.trace();
    if total_var <= 1e-15 {
        return Err(AnalyticsError::ZeroVariance);
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let mut loadings = Vec::with_capacity(2);
    let mut explained = Vec::with_capacity(2);
    for (c, &ei) in order.iter().take(2).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(ei).iter().copied().collect();
        let pivot = match (orient, c) {
            (Some((i, _)), 0) => i,
            (Some((_, j)), 1) => j,
            _ => {
                // largest-magnitude loading
                (0..p)
                    .max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap())
                    .unwrap()
            }
        };
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        loadings.push(v);
        explained.push(eig.eigenvalues[ei].max(0.0) / total_var);
    }

    let scores = profiles
        .iter()
        .map(|prof| {
            let centered: Vec<f64> = prof
                .mean_pattern
                .iter()
                .zip(&mean)
                .map(|(v, m)| v - m)
                .collect();
            let s1: f64 = centered.iter().zip(&loadings[0]).map(|(x, l)| x * l).sum();
            let s2: f64 = centered.iter().zip(&loadings[1]).map(|(x, l)| x * l).sum();
            (prof.author.clone(), (s1, s2))
        })
        .collect();

    Ok(PcaResult {
        loadings,
        explained_variance: explained,
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrantRow {
    /// Signs of (pc1, pc2) relative to the per-axis medians, e.g. "+-".
    pub quadrant: String,
    pub n_users: u64,
    pub n_comments: u64,
    pub delta_bonus: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Bucket users into quadrants by the signs of their PCA scores relative
/// to the per-axis medians, then compare each quadrant's delta rate with
/// the global rate over the same comment pool.
pub fn quadrant_bonus(
    pca: &PcaResult,
    comments: &[(String, bool)], // (author, delta) for profile-qualifying comments
) -> Result<Vec<QuadrantRow>, AnalyticsError> {
    let mut pc1: Vec<f64> = pca.scores.values().map(|&(a, _)| a).collect();
    let mut pc2: Vec<f64> = pca.scores.values().map(|&(_, b)| b).collect();
    let m1 = median(&mut pc1);
    let m2 = median(&mut pc2);

    let quadrant_of = |author: &str| -> Option<&'static str> {
        let &(a, b) = pca.scores.get(author)?;
        Some(match (a >= m1, b >= m2) {
            (true, true) => "++",
            (true, false) => "+-",
            (false, true) => "-+",
            (false, false) => "--",
        })
    };

    let mut users_per: BTreeMap<&'static str, u64> = BTreeMap::new();
    for author in pca.scores.keys() {
        *users_per.entry(quadrant_of(author).unwrap()).or_insert(0) += 1;
    }

    let mut per: BTreeMap<&'static str, (u64, u64)> = BTreeMap::new(); // (deltas, total)
    let mut global = (0u64, 0u64);
    for (author, delta) in comments {
        if let Some(q) = quadrant_of(author) {
            let e = per.entry(q).or_insert((0, 0));
            e.1 += 1;
            if *delta {
                e.0 += 1;
            }
            global.1 += 1;
            if *delta {
                global.0 += 1;
            }
        }
    }
    if global.1 == 0 || global.0 == 0 {
        return Err(AnalyticsError::NoObservations);
    }
    let global_rate = global.0 as f64 / global.1 as f64;

    let mut rows = Vec::new();
    for q in ["++", "+-", "-+", "--"] {
        let &(d, n) = per
            .get(q)
            .ok_or(AnalyticsError::EmptyQuadrant("no comments in quadrant"))?;
        if n == 0 {
            return Err(AnalyticsError::EmptyQuadrant("no comments in quadrant"));
        }
        let rate = d as f64 / n as f64;
        rows.push(QuadrantRow {
            quadrant: q.to_string(),
            n_users: *users_per.get(q).unwrap_or(&0),
            n_comments: n,
            delta_bonus: 100.0 * (rate / global_rate - 1.0),
        });
    }
    Ok(rows)
}

/// CSV export of efficacy rows with star labels.
pub fn efficacy_csv(rows: &[EfficacyRow], topic_label: impl Fn(usize) -> String) -> String {
    let mut out = String::from("topic,pattern,n_comments,baseline,bonus,p_value,stars\n");
    for r in rows {
        let topic = r.topic.map(&topic_label).unwrap_or_else(|| "all".into());
        let bonus = r.bonus.map(|b| format!("{b:.6}")).unwrap_or_default();
        let p = r.p_value.map(|p| format!("{p:.6}")).unwrap_or_default();
        out.push_str(&format!(
            "{topic},{},{},{:.8},{bonus},{p},{}\n",
            r.pattern,
            r.n_comments,
            r.baseline,
            r.stars()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn obs(pattern: usize, topic: usize, delta: bool, score: i64) -> CommentObs {
        CommentObs {
            doc_id: String::new(),
            author: String::new(),
            pattern,
            topic,
            delta,
            score,
        }
    }

    fn planted_delta_obs(
        n: usize,
        rates: &[f64],
        seed: u64,
    ) -> Vec<CommentObs> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let p = i % rates.len();
                obs(p, 0, rng.gen::<f64>() < rates[p], 0)
            })
            .collect()
    }

    #[test]
    fn constant_scores_give_zero_bonus() {
        let data: Vec<CommentObs> = (0..100).map(|i| obs(i % 3, i % 2, false, 5)).collect();
        let rows = score_bonus(&data, 3, 1).unwrap();
        for r in rows {
            assert_eq!(r.bonus, Some(0.0));
        }
    }

    #[test]
    fn identical_rates_give_small_bonus() {
        let data = planted_delta_obs(30_000, &[0.05, 0.05, 0.05], 3);
        let rows = delta_bonus(&data, 3, 1).unwrap();
        for r in rows.iter().filter(|r| r.topic.is_none()) {
            assert!(r.bonus.unwrap().abs() < 10.0, "bonus {:?}", r.bonus);
        }
    }

    #[test]
    fn doubled_rate_recovers_plus_hundred() {
        // pattern 0 at 2.5x the shared base rate of the other five gives a
        // +100% bonus against the pooled baseline
        let data = planted_delta_obs(60_000, &[0.025, 0.01, 0.01, 0.01, 0.01, 0.01], 11);
        let rows = delta_bonus(&data, 6, 1).unwrap();
        let r = rows
            .iter()
            .find(|r| r.topic.is_none() && r.pattern == 0)
            .unwrap();
        let b = r.bonus.unwrap();
        assert!(b > 70.0 && b < 130.0, "bonus {b}");
    }

    #[test]
    fn per_topic_centering_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<CommentObs> = (0..5000)
            .map(|_| {
                obs(
                    rng.gen_range(0..4),
                    rng.gen_range(0..3),
                    rng.gen::<f64>() < 0.1,
                    rng.gen_range(-5..20),
                )
            })
            .collect();
        for outcome in [Outcome::Delta, Outcome::Score] {
            let rows = efficacy(&data, 4, 1, outcome).unwrap();
            let mut by_topic: BTreeMap<Option<usize>, f64> = BTreeMap::new();
            for r in &rows {
                let w = r.n_comments as f64;
                let contribution = match outcome {
                    Outcome::Delta => w * r.bonus.unwrap() * r.baseline / 100.0,
                    Outcome::Score => w * r.bonus.unwrap(),
                };
                *by_topic.entry(r.topic).or_insert(0.0) += contribution;
            }
            for (_, v) in by_topic {
                assert!(v.abs() < 1e-9, "centering violated: {v}");
            }
        }
    }

    #[test]
    fn n_floor_suppresses_rows() {
        let data = planted_delta_obs(100, &[0.5, 0.5], 1);
        let rows = delta_bonus(&data, 2, 60).unwrap();
        assert!(rows.is_empty());
        let rows = delta_bonus(&data, 2, 10).unwrap();
        assert!(!rows.is_empty());
    }

    #[test]
    fn significance_detects_planted_effect() {
        let data = planted_delta_obs(10_000, &[0.15, 0.05], 23);
        let mut rows = delta_bonus(&data, 2, 1).unwrap();
        significance(&mut rows, &data, 2, Outcome::Delta, 1000, 5);
        let r = rows
            .iter()
            .find(|r| r.topic.is_none() && r.pattern == 0)
            .unwrap();
        assert!(r.p_value.unwrap() < 1e-3);
        assert_eq!(r.stars(), "***");
    }

    #[test]
    fn significance_is_deterministic() {
        let data = planted_delta_obs(500, &[0.1, 0.1], 2);
        let mut r1 = delta_bonus(&data, 2, 1).unwrap();
        significance(&mut r1, &data, 2, Outcome::Delta, 1000, 42);
        let mut r2 = delta_bonus(&data, 2, 1).unwrap();
        significance(&mut r2, &data, 2, Outcome::Delta, 1000, 42);
        assert_eq!(r1, r2);
    }

    #[test]
    fn profiles_constant_user() {
        let comments: Vec<(String, Vec<f64>)> = (0..25)
            .map(|_| ("u1".to_string(), vec![0.0, 0.0, 1.0]))
            .collect();
        let profiles = build_profiles(&comments, 3, 20).unwrap();
        assert_eq!(profiles.len(), 1);
        assert_eq!(profiles[0].mean_pattern, vec![0.0, 0.0, 1.0]);
        assert!((profiles[0].mean_pattern.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn profiles_hand_average() {
        let comments = vec![
            ("a".to_string(), vec![1.0, 0.0]),
            ("a".to_string(), vec![0.0, 1.0]),
            ("b".to_string(), vec![0.5, 0.5]),
            ("c".to_string(), vec![1.0, 0.0]),
            ("c".to_string(), vec![1.0, 0.0]),
        ];
        let profiles = build_profiles(&comments, 2, 1).unwrap();
        assert_eq!(profiles.len(), 3);
        assert_eq!(profiles[0].mean_pattern, vec![0.5, 0.5]); // a
        assert_eq!(profiles[1].mean_pattern, vec![0.5, 0.5]); // b
        assert_eq!(profiles[2].mean_pattern, vec![1.0, 0.0]); // c
    }

    #[test]
    fn profiles_min_comments_filter() {
        let comments = vec![
            ("a".to_string(), vec![1.0, 0.0]),
            ("b".to_string(), vec![1.0, 0.0]),
            ("b".to_string(), vec![1.0, 0.0]),
        ];
        let profiles = build_profiles(&comments, 2, 2).unwrap();
        assert_eq!(profiles.len(), 1);
        assert_eq!(profiles[0].author, "b");
        assert!(matches!(
            build_profiles(&comments, 2, 5),
            Err(AnalyticsError::NoQualifyingUsers(5))
        ));
    }

    fn planted_profiles(n: usize, seed: u64) -> Vec<UserProfile> {
        // two orthogonal zero-sum axes over 4 patterns
        let v1 = [0.5, 0.5, -0.5, -0.5];
        let v2 = [0.5, -0.5, 0.5, -0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let a: f64 = rng.gen::<f64>() - 0.5;
                let b: f64 = (rng.gen::<f64>() - 0.5) * 0.4;
                let mean_pattern: Vec<f64> = (0..4)
                    .map(|j| 0.25 + 0.1 * (a * v1[j] + b * v2[j]))
                    .collect();
                UserProfile {
                    author: format!("u{i}"),
                    n_comments: 20,
                    mean_pattern,
                }
            })
            .collect()
    }

    #[test]
    fn pca_recovers_planted_axes() {
        let profiles = planted_profiles(2000, 3);
        let pca = pca_profiles(&profiles, None).unwrap();
        let v1 = [0.5, 0.5, -0.5, -0.5];
        let cos: f64 = pca.loadings[0].iter().zip(&v1).map(|(a, b)| a * b).sum();
        assert!(cos.abs() > 0.95, "cosine {cos}");
        assert!(pca.explained_variance[0] >= pca.explained_variance[1]);
        // loadings orthonormal
        let n1: f64 = pca.loadings[0].iter().map(|x| x * x).sum();
        let n2: f64 = pca.loadings[1].iter().map(|x| x * x).sum();
        let dot: f64 = pca.loadings[0]
            .iter()
            .zip(&pca.loadings[1])
            .map(|(a, b)| a * b)
            .sum();
        assert!((n1 - 1.0).abs() < 1e-9);
        assert!((n2 - 1.0).abs() < 1e-9);
        assert!(dot.abs() < 1e-9);
    }

    #[test]
    fn pca_orientation_pins_signs() {
        let profiles = planted_profiles(500, 9);
        let pca = pca_profiles(&profiles, Some((0, 0))).unwrap();
        assert!(pca.loadings[0][0] > 0.0);
        assert!(pca.loadings[1][0] > 0.0);
    }

    #[test]
    fn pca_identical_profiles_error() {
        let profiles: Vec<UserProfile> = (0..5)
            .map(|i| UserProfile {
                author: format!("u{i}"),
                n_comments: 20,
                mean_pattern: vec![0.25; 4],
            })
            .collect();
        assert!(matches!(
            pca_profiles(&profiles, None),
            Err(AnalyticsError::ZeroVariance)
        ));
    }

    #[test]
    fn quadrants_null_is_flat() {
        let profiles = planted_profiles(400, 21);
        let pca = pca_profiles(&profiles, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let comments: Vec<(String, bool)> = profiles
            .iter()
            .flat_map(|p| {
                let author = p.author.clone();
                (0..20)
                    .map(|_| (author.clone(), rng.gen::<f64>() < 0.1))
                    .collect::<Vec<_>>()
            })
            .collect();
        let rows = quadrant_bonus(&pca, &comments).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert!(r.delta_bonus.abs() < 25.0, "{r:?}");
        }
    }

    #[test]
    fn quadrants_planted_effect_recovered() {
        let profiles = planted_profiles(400, 21);
        let pca = pca_profiles(&profiles, None).unwrap();
        let mut pc1: Vec<f64> = pca.scores.values().map(|&(a, _)| a).collect();
        let m1 = median(&mut pc1);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // users high on pc1 get double the delta rate
        let comments: Vec<(String, bool)> = profiles
            .iter()
            .flat_map(|p| {
                let rate = if pca.scores[&p.author].0 >= m1 { 0.2 } else { 0.1 };
                let author = p.author.clone();
                (0..20)
                    .map(|_| (author.clone(), rng.gen::<f64>() < rate))
                    .collect::<Vec<_>>()
            })
            .collect();
        let rows = quadrant_bonus(&pca, &comments).unwrap();
        let plus: f64 = rows
            .iter()
            .filter(|r| r.quadrant.starts_with('+'))
            .map(|r| r.delta_bonus)
            .sum();
        let minus: f64 = rows
            .iter()
            .filter(|r| r.quadrant.starts_with('-'))
            .map(|r| r.delta_bonus)
            .sum();
        assert!(plus > minus, "plus {plus} minus {minus}");
    }
}
