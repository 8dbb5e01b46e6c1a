//! Deterministic test double: every decision is a pure function of marker
//! tags embedded in the texts (`[TAG] rest of document`).

use super::{ClusterDigest, Refiner, RefinerError};
use std::collections::BTreeMap;

/// Tag-driven refiner. Split count is the number of distinct tags (1 when
/// homogeneous), merge fires when both sides share a majority tag, the label
/// is the majority tag, and outliers go to the candidate whose label equals
/// the node's tag.
pub struct MockRefiner {
    #[allow(dead_code)]
    seed: u64,
}

impl MockRefiner {
    pub fn new(seed: u64) -> Self {
        MockRefiner { seed }
    }
}

/// Extracts the leading `[TAG]` marker, empty when absent.
pub fn marker_tag(text: &str) -> &str {
    if let Some(rest) = text.strip_prefix('[') {
        if let Some(end) = rest.find(']') {
            return &rest[..end];
        }
    }
    ""
}

fn majority_tag<'a>(samples: &[&'a str]) -> &'a str {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(marker_tag(s)).or_insert(0) += 1;
    }
    // Highest count; lexicographically smallest tag on ties (BTreeMap order).
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(a.0)))
        .map(|(tag, _)| tag)
        .unwrap_or("")
}

impl Refiner for MockRefiner {
    fn decide_split(&mut self, samples: &[&str]) -> Result<usize, RefinerError> {
        let distinct: std::collections::BTreeSet<&str> =
            samples.iter().map(|s| marker_tag(s)).collect();
        Ok(if distinct.len() >= 2 { distinct.len() } else { 1 })
    }

    fn decide_merge(&mut self, a: &[&str], b: &[&str]) -> Result<bool, RefinerError> {
        Ok(majority_tag(a) == majority_tag(b))
    }

    fn summarize(&mut self, samples: &[&str]) -> Result<ClusterDigest, RefinerError> {
        let tag = majority_tag(samples);
        Ok(ClusterDigest {
            label: tag.to_string(),
            summary: format!("{} documents tagged {}", samples.len(), tag),
        })
    }

    fn assign_outlier(
        &mut self,
        text: &str,
        candidates: &[ClusterDigest],
        current: usize,
    ) -> Result<usize, RefinerError> {
        let tag = marker_tag(text);
        let choice = candidates
            .iter()
            .position(|c| c.label == tag)
            .unwrap_or(current);
        Ok(choice + 1)
    }
}

/// A refiner that never splits and never merges; useful for identity checks.
#[cfg(test)]
pub(crate) struct NoOpRefiner;

#[cfg(test)]
impl Refiner for NoOpRefiner {
    fn decide_split(&mut self, _samples: &[&str]) -> Result<usize, RefinerError> {
        Ok(1)
    }

    fn decide_merge(&mut self, _a: &[&str], _b: &[&str]) -> Result<bool, RefinerError> {
        Ok(false)
    }

    fn summarize(&mut self, samples: &[&str]) -> Result<ClusterDigest, RefinerError> {
        Ok(ClusterDigest {
            label: format!("cluster of {}", samples.len()),
            summary: String::new(),
        })
    }

    fn assign_outlier(
        &mut self,
        _text: &str,
        _candidates: &[ClusterDigest],
        current: usize,
    ) -> Result<usize, RefinerError> {
        Ok(current + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_counts_distinct_tags() {
        let mut mock = MockRefiner::new(0);
        assert_eq!(mock.decide_split(&["[A] x", "[A] y", "[B] z"]).unwrap(), 2);
        assert_eq!(mock.decide_split(&["[A] x", "[A] y"]).unwrap(), 1);
    }

    #[test]
    fn merge_compares_majority_tags() {
        let mut mock = MockRefiner::new(0);
        assert!(mock.decide_merge(&["[A] 1", "[A] 2"], &["[A] 3"]).unwrap());
        assert!(!mock.decide_merge(&["[A] 1"], &["[B] 2"]).unwrap());
    }

    #[test]
    fn assign_picks_matching_label() {
        let mut mock = MockRefiner::new(0);
        let candidates = vec![
            ClusterDigest { label: "A".into(), summary: String::new() },
            ClusterDigest { label: "C".into(), summary: String::new() },
            ClusterDigest { label: "B".into(), summary: String::new() },
        ];
        // Node tagged C, candidates [A, C, B]: 1-based answer 2.
        assert_eq!(mock.assign_outlier("[C] doc", &candidates, 0).unwrap(), 2);
        // No match: stays on the current candidate.
        assert_eq!(mock.assign_outlier("[Z] doc", &candidates, 1).unwrap(), 2);
    }

    #[test]
    fn summarize_uses_majority_tag() {
        let mut mock = MockRefiner::new(0);
        let digest = mock.summarize(&["[A] 1", "[B] 2", "[A] 3"]).unwrap();
        assert_eq!(digest.label, "A");
        assert!(digest.summary.contains("3 documents"));
    }

    #[test]
    fn tag_extraction_handles_missing_markers() {
        assert_eq!(marker_tag("[A] text"), "A");
        assert_eq!(marker_tag("no tag"), "");
        assert_eq!(marker_tag("[unclosed"), "");
    }
}
