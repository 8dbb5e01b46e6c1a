//! LLM-assisted clustering refinement.
//!
//! A single pass over the finest-level clusters, in order: split low-cohesion
//! clusters, merge near-duplicate clusters, redistribute undersized clusters,
//! summarize every survivor, and re-home per-cluster outliers. All decisions
//! come from a [`Refiner`] (an HTTP chat-completion client in production, a
//! deterministic marker-tag mock in tests), and every decision is recorded
//! in a replayable transcript.

mod llm;
mod mock;

pub use llm::{
    render_merge_prompt, render_outlier_prompt, render_split_prompt, render_summarize_prompt,
    LlmConfig, LlmRefiner, API_KEY_ENV,
};
pub use mock::MockRefiner;

use crate::error::{Error, Result};
use crate::graph::ClusterAssignment;
use crate::kmeans::{cohesion, kmeans, KMeansConfig, COS_EPS};
use crate::matrix::{cosine, Matrix};
use crate::rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

/// Largest subcluster count a split decision may request.
pub const MAX_SPLIT: usize = 8;

/// Errors surfaced by refiner implementations.
#[derive(ThisError, Debug)]
pub enum RefinerError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {detail}")]
    Http { status: u16, detail: String },
    #[error("malformed response: {0}")]
    Parse(String),
    #[error("transcript replay mismatch: {0}")]
    Replay(String),
}

impl RefinerError {
    pub fn is_parse(&self) -> bool {
        matches!(self, RefinerError::Parse(_))
    }
}

/// A cluster's natural-language label and summary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterDigest {
    pub label: String,
    pub summary: String,
}

/// The four capabilities refinement needs. Implementations must be total:
/// every call returns a usable value or a typed error.
pub trait Refiner {
    /// Subcluster count suggested for one cluster's sample texts; 1 means no
    /// split. Values above [`MAX_SPLIT`] are clamped by the caller.
    fn decide_split(&mut self, samples: &[&str]) -> std::result::Result<usize, RefinerError>;

    /// Whether two clusters cover the same topic and should merge.
    fn decide_merge(
        &mut self,
        a: &[&str],
        b: &[&str],
    ) -> std::result::Result<bool, RefinerError>;

    /// Label and summary for one cluster's representative texts.
    fn summarize(&mut self, samples: &[&str])
        -> std::result::Result<ClusterDigest, RefinerError>;

    /// 1-based choice among `candidates` for the document; `current` is the
    /// 0-based position of the node's current cluster in `candidates`. The
    /// caller validates the range and keeps the node in place on a
    /// out-of-range answer.
    fn assign_outlier(
        &mut self,
        text: &str,
        candidates: &[ClusterDigest],
        current: usize,
    ) -> std::result::Result<usize, RefinerError>;
}

/// Refinement thresholds.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct RefinerConfig {
    /// Cohesion below this gates a split query.
    pub tau_split: f64,
    /// Texts sampled for a split query.
    pub n_split: usize,
    /// Centroid cosine above this gates a merge query.
    pub tau_merge: f64,
    /// Texts sampled per side for a merge query.
    pub n_merge: usize,
    /// Clusters smaller than this are dissolved.
    pub n_min: usize,
    /// Representatives fed to the summarizer.
    pub n_close: usize,
    /// Fraction of each cluster audited as outliers.
    pub r: f64,
    /// Candidate clusters offered per outlier.
    pub n_outlier: usize,
    /// Seed for the deterministic text sampling.
    pub seed: u64,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        RefinerConfig {
            tau_split: 0.75,
            n_split: 20,
            tau_merge: 0.9,
            n_merge: 10,
            n_min: 10,
            n_close: 10,
            r: 0.05,
            n_outlier: 3,
            seed: 0,
        }
    }
}

impl RefinerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, tau) in [("tau_split", self.tau_split), ("tau_merge", self.tau_merge)] {
            if !(-1.0 < tau && tau <= 1.0) {
                return Err(Error::InvalidConfig(format!("{name} = {tau} outside (-1, 1]")));
            }
        }
        for (name, v) in [
            ("n_split", self.n_split),
            ("n_merge", self.n_merge),
            ("n_min", self.n_min),
            ("n_close", self.n_close),
            ("n_outlier", self.n_outlier),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if !(0.0 < self.r && self.r < 1.0) {
            return Err(Error::InvalidConfig(format!("r = {} outside (0, 1)", self.r)));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Transcript
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Split,
    Merge,
    Summarize,
    Reassign,
}

/// The decision a refiner returned, as recorded (raw, before clamping or
/// range validation, so replay re-derives the applied effect).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Decision {
    Split { parts: usize },
    Merge { merged: bool },
    Summarize { label: String, summary: String },
    Assign { choice: usize },
}

/// One audited refiner interaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub step: StepKind,
    /// Cluster ids involved, in the working indexing at that step.
    pub clusters: Vec<usize>,
    pub decision: Decision,
    /// FNV-1a hash of the raw response text.
    pub response_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Ordered decision log; applying it to the same initial clustering
/// reproduces the refined clustering exactly.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Transcript> {
        let mut entries = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(line)?);
        }
        Ok(Transcript { entries })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Transcript> {
        Transcript::from_jsonl(&std::fs::read_to_string(path)?)
    }
}

/// 64-bit FNV-1a, hex-encoded; stable across runs and platforms.
pub fn fnv1a_hex(text: &str) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

/// Replays a recorded transcript as a [`Refiner`]; decisions are served in
/// order and each query kind is verified against the recording.
pub struct TranscriptRefiner {
    entries: std::vec::IntoIter<TranscriptEntry>,
}

impl TranscriptRefiner {
    pub fn new(transcript: Transcript) -> Self {
        TranscriptRefiner {
            entries: transcript.entries.into_iter(),
        }
    }

    fn next_entry(&mut self, expect: StepKind) -> std::result::Result<Decision, RefinerError> {
        let entry = self.entries.next().ok_or_else(|| {
            RefinerError::Replay(format!("transcript exhausted, expected {expect:?}"))
        })?;
        if entry.step != expect {
            return Err(RefinerError::Replay(format!(
                "expected {expect:?}, transcript has {:?}",
                entry.step
            )));
        }
        Ok(entry.decision)
    }
}

impl Refiner for TranscriptRefiner {
    fn decide_split(&mut self, _samples: &[&str]) -> std::result::Result<usize, RefinerError> {
        match self.next_entry(StepKind::Split)? {
            Decision::Split { parts } => Ok(parts),
            other => Err(RefinerError::Replay(format!("unexpected decision {other:?}"))),
        }
    }

    fn decide_merge(
        &mut self,
        _a: &[&str],
        _b: &[&str],
    ) -> std::result::Result<bool, RefinerError> {
        match self.next_entry(StepKind::Merge)? {
            Decision::Merge { merged } => Ok(merged),
            other => Err(RefinerError::Replay(format!("unexpected decision {other:?}"))),
        }
    }

    fn summarize(
        &mut self,
        _samples: &[&str],
    ) -> std::result::Result<ClusterDigest, RefinerError> {
        match self.next_entry(StepKind::Summarize)? {
            Decision::Summarize { label, summary } => Ok(ClusterDigest { label, summary }),
            other => Err(RefinerError::Replay(format!("unexpected decision {other:?}"))),
        }
    }

    fn assign_outlier(
        &mut self,
        _text: &str,
        _candidates: &[ClusterDigest],
        _current: usize,
    ) -> std::result::Result<usize, RefinerError> {
        match self.next_entry(StepKind::Reassign)? {
            Decision::Assign { choice } => Ok(choice),
            other => Err(RefinerError::Replay(format!("unexpected decision {other:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Refinement pass
// ---------------------------------------------------------------------------

/// Result of a full refinement pass.
pub struct RefineOutcome {
    pub assignment: ClusterAssignment,
    /// One digest per surviving cluster, in cluster order.
    pub digests: Vec<ClusterDigest>,
}

/// Working clustering: member lists plus centroids over the embeddings.
struct Working<'a> {
    z: &'a Matrix,
    members: Vec<Vec<usize>>,
    centroids: Matrix,
}

impl<'a> Working<'a> {
    fn from_assignment(assignment: &ClusterAssignment, z: &'a Matrix) -> Self {
        let members = assignment.members();
        let mut w = Working {
            z,
            members,
            centroids: Matrix::zeros(assignment.k, z.cols()),
        };
        w.recompute_centroids();
        w
    }

    fn recompute_centroids(&mut self) {
        let mut centroids = Matrix::zeros(self.members.len(), self.z.cols());
        for (c, ids) in self.members.iter().enumerate() {
            centroids.row_mut(c).copy_from_slice(&self.z.mean_of_rows(ids));
        }
        self.centroids = centroids;
    }

    fn k(&self) -> usize {
        self.members.len()
    }

    fn cohesion_of(&self, c: usize) -> f64 {
        cohesion(self.z, &self.members[c], self.centroids.row(c))
    }

    /// Member ids of cluster `c` ordered by cosine to its centroid,
    /// descending, node id breaking ties.
    fn members_by_closeness(&self, c: usize) -> Vec<usize> {
        let centroid = self.centroids.row(c);
        let mut scored: Vec<(usize, f64)> = self.members[c]
            .iter()
            .map(|&i| (i, cosine(self.z.row(i), centroid, COS_EPS)))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        scored.into_iter().map(|(i, _)| i).collect()
    }

    fn into_assignment(self) -> Result<ClusterAssignment> {
        let n: usize = self.members.iter().map(Vec::len).sum();
        let mut assignment = vec![0u32; n];
        for (c, ids) in self.members.iter().enumerate() {
            for &i in ids {
                assignment[i] = c as u32;
            }
        }
        ClusterAssignment::new(assignment, self.members.len(), self.centroids)
    }
}

/// Deterministic prompt sampling: the nearest half first, the rest filled by
/// a seeded draw from the remaining members.
fn sample_ids(ordered_by_closeness: &[usize], count: usize, seed: u64) -> Vec<usize> {
    if ordered_by_closeness.len() <= count {
        return ordered_by_closeness.to_vec();
    }
    let nearest = count.div_ceil(2);
    let mut picked: Vec<usize> = ordered_by_closeness[..nearest].to_vec();
    let mut rest: Vec<usize> = ordered_by_closeness[nearest..].to_vec();
    let mut rng = rng::stream(seed, &[0x5a]);
    for _ in 0..count - nearest {
        let at = rng.random_range(0..rest.len());
        picked.push(rest.swap_remove(at));
    }
    picked
}

fn texts_of<'t>(texts: &'t [String], ids: &[usize]) -> Vec<&'t str> {
    ids.iter().map(|&i| texts[i].as_str()).collect()
}

/// Runs the five-step pass. Queries append to `transcript` as they happen, so
/// on error the log written so far survives for persistence; on success the
/// transcript replays to the identical outcome.
pub fn refine(
    assignment: &ClusterAssignment,
    embeddings: &Matrix,
    texts: &[String],
    refiner: &mut dyn Refiner,
    config: &RefinerConfig,
    transcript: &mut Transcript,
) -> Result<RefineOutcome> {
    config.validate()?;
    if texts.len() != embeddings.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} texts for {} embeddings",
            texts.len(),
            embeddings.rows()
        )));
    }
    let mut w = Working::from_assignment(assignment, embeddings);

    split_step(&mut w, texts, refiner, config, transcript)?;
    merge_step(&mut w, texts, refiner, config, transcript)?;
    redistribute_step(&mut w, config)?;
    let digests = summarize_step(&w, texts, refiner, config, transcript)?;
    let digests = reassign_step(&mut w, digests, texts, refiner, config, transcript)?;

    let assignment = w.into_assignment()?;
    Ok(RefineOutcome { assignment, digests })
}

/// Step 1: clusters with cohesion below `tau_split` are offered for
/// splitting; an answer of `m > 1` re-clusters the members with K-Means.
/// Cluster count can only grow.
fn split_step(
    w: &mut Working,
    texts: &[String],
    refiner: &mut dyn Refiner,
    config: &RefinerConfig,
    transcript: &mut Transcript,
) -> Result<()> {
    let k = w.k();
    let mut new_members: Vec<Vec<usize>> = Vec::with_capacity(k);
    for c in 0..k {
        if w.cohesion_of(c) >= config.tau_split {
            new_members.push(w.members[c].clone());
            continue;
        }
        let ordered = w.members_by_closeness(c);
        let sample = sample_ids(
            &ordered,
            config.n_split,
            rng::derive_seed(config.seed, &[0x51, c as u64]),
        );
        let sample_texts = texts_of(texts, &sample);
        let requested = refiner.decide_split(&sample_texts)?;

        let cap = (w.members[c].len() / config.n_min).min(MAX_SPLIT).max(1);
        let parts = requested.clamp(1, cap);
        let note = (parts != requested)
            .then(|| format!("clamped from {requested} to {parts} (cap {cap})"));
        transcript.entries.push(TranscriptEntry {
            step: StepKind::Split,
            clusters: vec![c],
            decision: Decision::Split { parts: requested },
            response_hash: fnv1a_hex(&requested.to_string()),
            note,
        });

        if parts <= 1 {
            new_members.push(w.members[c].clone());
            continue;
        }
        let ids = &w.members[c];
        let mut points = Matrix::zeros(ids.len(), w.z.cols());
        for (row, &i) in ids.iter().enumerate() {
            points.row_mut(row).copy_from_slice(w.z.row(i));
        }
        let sub = kmeans(
            &points,
            &KMeansConfig::new(parts, rng::derive_seed(config.seed, &[0x52, c as u64])),
        )?;
        let mut parts_members: Vec<Vec<usize>> = vec![Vec::new(); parts];
        for (row, &cluster) in sub.assignment.iter().enumerate() {
            parts_members[cluster as usize].push(ids[row]);
        }
        new_members.extend(parts_members);
    }
    w.members = new_members;
    w.recompute_centroids();
    Ok(())
}

/// Step 2: cluster pairs with centroid cosine above `tau_merge`, visited in
/// descending similarity, merge through union-find so chains stay
/// consistent. Cluster count can only shrink.
fn merge_step(
    w: &mut Working,
    texts: &[String],
    refiner: &mut dyn Refiner,
    config: &RefinerConfig,
    transcript: &mut Transcript,
) -> Result<()> {
    let k = w.k();
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            let sim = cosine(w.centroids.row(i), w.centroids.row(j), COS_EPS);
            if sim > config.tau_merge {
                candidates.push((i, j, sim));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then((a.0, a.1).cmp(&(b.0, b.1))));

    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }

    for (i, j, _) in candidates {
        let ri = find(&mut parent, i);
        let rj = find(&mut parent, j);
        if ri == rj {
            continue; // already merged transitively
        }
        let sample = |c: usize| -> Vec<usize> {
            let ordered = w.members_by_closeness(c);
            sample_ids(
                &ordered,
                config.n_merge,
                rng::derive_seed(config.seed, &[0x53, i as u64, j as u64, c as u64]),
            )
        };
        let a_ids = sample(i);
        let b_ids = sample(j);
        let merged = refiner.decide_merge(&texts_of(texts, &a_ids), &texts_of(texts, &b_ids))?;
        transcript.entries.push(TranscriptEntry {
            step: StepKind::Merge,
            clusters: vec![i, j],
            decision: Decision::Merge { merged },
            response_hash: fnv1a_hex(if merged { "1" } else { "0" }),
            note: None,
        });
        if merged {
            let (lo, hi) = (ri.min(rj), ri.max(rj));
            parent[hi] = lo;
        }
    }

    // Rebuild groups in order of their smallest original index.
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for c in 0..k {
        let root = find(&mut parent, c);
        groups.entry(root).or_default().extend(w.members[c].iter().copied());
    }
    w.members = groups
        .into_values()
        .map(|mut m| {
            m.sort_unstable();
            m
        })
        .collect();
    w.recompute_centroids();
    Ok(())
}

/// Step 3: clusters below `n_min` dissolve; members move to the most
/// cosine-similar sufficiently large cluster.
fn redistribute_step(w: &mut Working, config: &RefinerConfig) -> Result<()> {
    let sizes: Vec<usize> = w.members.iter().map(Vec::len).collect();
    let small: Vec<usize> = (0..w.k()).filter(|&c| sizes[c] < config.n_min).collect();
    if small.is_empty() {
        return Ok(());
    }
    let targets: Vec<usize> = (0..w.k()).filter(|&c| sizes[c] >= config.n_min).collect();
    if targets.is_empty() {
        return Err(Error::NoViableTargets);
    }
    let mut moves: Vec<(usize, usize)> = Vec::new(); // (node, target cluster)
    for &c in &small {
        for &i in &w.members[c] {
            let mut best = targets[0];
            let mut best_sim = f64::NEG_INFINITY;
            for &t in &targets {
                let sim = cosine(w.z.row(i), w.centroids.row(t), COS_EPS);
                if sim > best_sim {
                    best_sim = sim;
                    best = t;
                }
            }
            moves.push((i, best));
        }
        w.members[c].clear();
    }
    for (i, t) in moves {
        w.members[t].push(i);
    }
    w.members.retain(|m| !m.is_empty());
    for m in &mut w.members {
        m.sort_unstable();
    }
    w.recompute_centroids();
    Ok(())
}

/// Step 4: the `n_close` members nearest each centroid feed the summarizer.
fn summarize_step(
    w: &Working,
    texts: &[String],
    refiner: &mut dyn Refiner,
    config: &RefinerConfig,
    transcript: &mut Transcript,
) -> Result<Vec<ClusterDigest>> {
    let mut digests = Vec::with_capacity(w.k());
    for c in 0..w.k() {
        let ordered = w.members_by_closeness(c);
        let reps: Vec<usize> = ordered.into_iter().take(config.n_close).collect();
        let digest = refiner.summarize(&texts_of(texts, &reps))?;
        transcript.entries.push(TranscriptEntry {
            step: StepKind::Summarize,
            clusters: vec![c],
            decision: Decision::Summarize {
                label: digest.label.clone(),
                summary: digest.summary.clone(),
            },
            response_hash: fnv1a_hex(&format!("{}|{}", digest.label, digest.summary)),
            note: None,
        });
        digests.push(digest);
    }
    Ok(digests)
}

/// Step 5: the bottom `r`-fraction of each cluster (at least one node) is
/// offered the `n_outlier` nearest clusters (current included); a valid
/// choice moves the node, anything else leaves it in place with a note.
fn reassign_step(
    w: &mut Working,
    digests: Vec<ClusterDigest>,
    texts: &[String],
    refiner: &mut dyn Refiner,
    config: &RefinerConfig,
    transcript: &mut Transcript,
) -> Result<Vec<ClusterDigest>> {
    let k = w.k();
    let mut moves: Vec<(usize, usize, usize)> = Vec::new(); // (node, from, to)
    for c in 0..k {
        let ordered = w.members_by_closeness(c);
        let count = ((config.r * ordered.len() as f64).floor() as usize).max(1);
        // Farthest from the centroid: the tail of the closeness order.
        let outliers: Vec<usize> = ordered.iter().rev().take(count).copied().collect();

        for node in outliers {
            // Candidate clusters by cosine between the node and centroids.
            let mut scored: Vec<(usize, f64)> = (0..k)
                .map(|t| (t, cosine(w.z.row(node), w.centroids.row(t), COS_EPS)))
                .collect();
            scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let mut candidates: Vec<usize> =
                scored.iter().take(config.n_outlier).map(|&(t, _)| t).collect();
            if !candidates.contains(&c) {
                *candidates.last_mut().unwrap() = c;
            }
            let current_pos = candidates.iter().position(|&t| t == c).unwrap();
            let candidate_digests: Vec<ClusterDigest> =
                candidates.iter().map(|&t| digests[t].clone()).collect();

            let choice =
                match refiner.assign_outlier(&texts[node], &candidate_digests, current_pos) {
                    Ok(choice) => choice,
                    Err(e) if e.is_parse() => {
                        transcript.entries.push(TranscriptEntry {
                            step: StepKind::Reassign,
                            clusters: candidates.clone(),
                            decision: Decision::Assign { choice: 0 },
                            response_hash: fnv1a_hex("parse-error"),
                            note: Some(format!("node {node}: rejected ({e})")),
                        });
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };

            let valid = (1..=candidates.len()).contains(&choice);
            let note = if valid {
                None
            } else {
                Some(format!(
                    "node {node}: choice {choice} outside [1, {}], staying",
                    candidates.len()
                ))
            };
            transcript.entries.push(TranscriptEntry {
                step: StepKind::Reassign,
                clusters: candidates.clone(),
                decision: Decision::Assign { choice },
                response_hash: fnv1a_hex(&choice.to_string()),
                note,
            });
            if valid {
                let target = candidates[choice - 1];
                if target != c {
                    moves.push((node, c, target));
                }
            }
        }
    }

    for &(node, from, to) in &moves {
        w.members[from].retain(|&i| i != node);
        w.members[to].push(node);
    }
    // Dropping emptied clusters must keep digests aligned.
    let mut kept_digests = Vec::new();
    let mut kept_members = Vec::new();
    for (m, d) in w.members.drain(..).zip(digests) {
        if !m.is_empty() {
            kept_members.push(m);
            kept_digests.push(d);
        }
    }
    w.members = kept_members;
    for m in &mut w.members {
        m.sort_unstable();
    }
    w.recompute_centroids();
    Ok(kept_digests)
}
