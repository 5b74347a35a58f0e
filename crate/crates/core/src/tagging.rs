//! Score documents against the pattern lexicon and compute corpus-level
//! pattern frequencies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::communities::PatternLexicon;

#[derive(Debug, Error)]
pub enum TaggingError {
    #[error("no documents with pattern hits")]
    NoHits,
}

/// Per-document pattern hit counts. `dominant` is present only when a
/// unique maximum exists and there is at least one hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternVector {
    pub doc_id: String,
    pub hits: Vec<u64>,
    pub total_hits: u64,
    pub dominant: Option<usize>,
}

impl PatternVector {
    /// Per-pattern hit proportions; None when the document has no hits.
    pub fn proportions(&self) -> Option<Vec<f64>> {
        if self.total_hits == 0 {
            return None;
        }
        Some(
            self.hits
                .iter()
                .map(|&h| h as f64 / self.total_hits as f64)
                .collect(),
        )
    }
}

/// Count fragment hits per pattern over a phrase-merged token stream.
/// Dominance requires a strict unique maximum.
pub fn tag_document(doc_id: &str, tokens: &[String], lexicon: &PatternLexicon) -> PatternVector {
    let mut hits = vec![0u64; lexicon.n_clusters];
    for t in tokens {
        if let Some(&p) = lexicon.assignment.get(t) {
            hits[p] += 1;
        }
    }
    let total_hits: u64 = hits.iter().sum();
    let dominant = dominant_pattern(&hits);
    PatternVector {
        doc_id: doc_id.to_string(),
        hits,
        total_hits,
        dominant,
    }
}

fn dominant_pattern(hits: &[u64]) -> Option<usize> {
    let max = *hits.iter().max()?;
    if max == 0 {
        return None;
    }
    let mut at_max = hits.iter().enumerate().filter(|(_, &h)| h == max);
    let first = at_max.next()?.0;
    if at_max.next().is_some() {
        None // tie
    } else {
        Some(first)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrequencyMode {
    /// frequency[p] = sum of hits[p] / sum of total hits (the default).
    HitShare,
    /// frequency[p] = fraction of dominant-tagged documents dominated by p.
    DominantShare,
}

/// Pattern frequencies over documents with at least one hit. Sums to 1.
pub fn pattern_frequencies(
    vectors: &[PatternVector],
    n_patterns: usize,
    mode: FrequencyMode,
) -> Result<Vec<f64>, TaggingError> {
    match mode {
        FrequencyMode::HitShare => {
            let mut sums = vec![0u64; n_patterns];
            let mut total = 0u64;
            for v in vectors {
                if v.total_hits == 0 {
                    continue;
                }
                for (p, &h) in v.hits.iter().enumerate() {
                    sums[p] += h;
                }
                total += v.total_hits;
            }
            if total == 0 {
                return Err(TaggingError::NoHits);
            }
            Ok(sums.iter().map(|&s| s as f64 / total as f64).collect())
        }
        FrequencyMode::DominantShare => {
            let mut counts = vec![0u64; n_patterns];
            let mut total = 0u64;
            for v in vectors {
                if let Some(p) = v.dominant {
                    counts[p] += 1;
                    total += 1;
                }
            }
            if total == 0 {
                return Err(TaggingError::NoHits);
            }
            Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
        }
    }
}

/// CSV export: `doc_id,hits_0..hits_{P-1},dominant`.
pub fn tags_csv(vectors: &[PatternVector], n_patterns: usize) -> String {
    let mut out = String::from("doc_id");
    for p in 0..n_patterns {
        out.push_str(&format!(",hits_{p}"));
    }
    out.push_str(",dominant\n");
    for v in vectors {
        out.push_str(&v.doc_id);
        for &h in &v.hits {
            out.push_str(&format!(",{h}"));
        }
        match v.dominant {
            Some(p) => out.push_str(&format!(",{p}\n")),
            None => out.push_str(",\n"),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::communities::Provenance;
    use std::collections::BTreeMap;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn lexicon() -> PatternLexicon {
        // three patterns over six fragments
        let frags = [
            ("never_said", 0),
            ("irrelevant", 0),
            ("defined_as", 1),
            ("distinction", 1),
            ("more_likely", 2),
            ("possible", 2),
        ];
        PatternLexicon {
            assignment: frags.iter().map(|(f, c)| (f.to_string(), *c)).collect(),
            n_clusters: 3,
            provenance: frags
                .iter()
                .map(|(f, _)| (f.to_string(), Provenance::Seed))
                .collect(),
            names: BTreeMap::new(),
        }
    }

    #[test]
    fn tag_counts_and_dominant() {
        let lex = lexicon();
        let v = tag_document("d1", &toks("never_said filler never_said"), &lex);
        assert_eq!(v.hits, vec![2, 0, 0]);
        assert_eq!(v.total_hits, 2);
        assert_eq!(v.dominant, Some(0));
    }

    #[test]
    fn tie_means_no_dominant() {
        let lex = lexicon();
        let v = tag_document("d1", &toks("never_said defined_as"), &lex);
        assert_eq!(v.total_hits, 2);
        assert_eq!(v.dominant, None);
    }

    #[test]
    fn zero_hits_means_no_dominant() {
        let lex = lexicon();
        let v = tag_document("d1", &toks("plain words only"), &lex);
        assert_eq!(v.total_hits, 0);
        assert_eq!(v.dominant, None);
        assert!(v.proportions().is_none());
    }

    #[test]
    fn hand_counted_documents() {
        let lex = lexicon();
        let cases = [
            ("never_said possible possible", vec![1, 0, 2], Some(2)),
            ("defined_as distinction", vec![0, 2, 0], Some(1)),
            ("irrelevant", vec![1, 0, 0], Some(0)),
            ("possible more_likely defined_as x", vec![0, 1, 2], Some(2)),
        ];
        for (text, hits, dom) in cases {
            let v = tag_document("d", &toks(text), &lex);
            assert_eq!(v.hits, hits, "{text}");
            assert_eq!(v.dominant, dom, "{text}");
        }
    }

    #[test]
    fn dominant_strictly_exceeds_others() {
        let lex = lexicon();
        for text in [
            "never_said possible possible",
            "irrelevant irrelevant defined_as",
            "more_likely",
        ] {
            let v = tag_document("d", &toks(text), &lex);
            if let Some(p) = v.dominant {
                for (q, &h) in v.hits.iter().enumerate() {
                    if q != p {
                        assert!(v.hits[p] > h);
                    }
                }
            }
        }
    }

    #[test]
    fn frequencies_hit_share() {
        let lex = lexicon();
        let vectors = vec![
            tag_document("d1", &toks("never_said never_said possible"), &lex),
            tag_document("d2", &toks("defined_as"), &lex),
            tag_document("d3", &toks("no hits here"), &lex),
        ];
        let f = pattern_frequencies(&vectors, 3, FrequencyMode::HitShare).unwrap();
        assert_eq!(f, vec![0.5, 0.25, 0.25]);
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn frequencies_planted_shares_recovered() {
        let lex = lexicon();
        // plant hit shares 0.5 / 0.3 / 0.2 over 10 single-hit docs
        let mut vectors = Vec::new();
        let plan = [(0usize, 5usize), (1, 3), (2, 2)];
        let frag_of = ["never_said", "defined_as", "possible"];
        for (p, n) in plan {
            for i in 0..n {
                vectors.push(tag_document(
                    &format!("d{p}_{i}"),
                    &toks(frag_of[p]),
                    &lex,
                ));
            }
        }
        let f = pattern_frequencies(&vectors, 3, FrequencyMode::HitShare).unwrap();
        assert_eq!(f, vec![0.5, 0.3, 0.2]);
    }

    #[test]
    fn frequencies_order_invariant() {
        let lex = lexicon();
        let mut vectors = vec![
            tag_document("d1", &toks("never_said possible"), &lex),
            tag_document("d2", &toks("defined_as defined_as"), &lex),
            tag_document("d3", &toks("possible"), &lex),
        ];
        let f1 = pattern_frequencies(&vectors, 3, FrequencyMode::HitShare).unwrap();
        vectors.reverse();
        let f2 = pattern_frequencies(&vectors, 3, FrequencyMode::HitShare).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn frequencies_error_without_hits() {
        let lex = lexicon();
        let vectors = vec![tag_document("d1", &toks("nothing matches"), &lex)];
        assert!(matches!(
            pattern_frequencies(&vectors, 3, FrequencyMode::HitShare),
            Err(TaggingError::NoHits)
        ));
    }
}
