//! Flat K-Means with greedy k-means++ seeding, deterministic tie-breaking,
//! empty cluster repair, a Hartigan-style single-point polish, optional
//! per-point weights, and the cohesion score used to gate cluster splitting.
//!
//! Tiny bipartition instances (k = 2, n <= 16) are solved exactly by
//! enumeration, which costs less than iterating at that size.

use crate::error::{Error, Result};
use crate::graph::ClusterAssignment;
use crate::matrix::{cosine, dist_sq, Matrix};
use crate::rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

/// Epsilon guard for cosine computations on near-zero vectors.
pub const COS_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KMeansInit {
    KMeansPlusPlus,
    Random,
}

/// K-Means settings.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Convergence threshold on the largest centroid shift.
    pub tol: f64,
    pub seed: u64,
    pub init: KMeansInit,
    /// Independent seeded restarts; the lowest-SSE run wins. 1 = no restarts.
    pub restarts: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            max_iters: 100,
            tol: 1e-6,
            seed,
            init: KMeansInit::KMeansPlusPlus,
            restarts: 1,
        }
    }
}

/// Within-cluster sum of squared distances.
pub fn sse(points: &Matrix, assignment: &[u32], centroids: &Matrix) -> f64 {
    let mut total = 0.0;
    for (i, &c) in assignment.iter().enumerate() {
        total += dist_sq(points.row(i), centroids.row(c as usize));
    }
    total
}

fn weighted_sse(points: &Matrix, weights: &[f64], assignment: &[u32], centroids: &Matrix) -> f64 {
    let mut total = 0.0;
    for (i, &c) in assignment.iter().enumerate() {
        total += weights[i] * dist_sq(points.row(i), centroids.row(c as usize));
    }
    total
}

fn weighted_mean(points: &Matrix, weights: &[f64], ids: &[usize]) -> Vec<f64> {
    let mut mean = vec![0.0; points.cols()];
    let mut total = 0.0;
    for &i in ids {
        total += weights[i];
        for (m, v) in mean.iter_mut().zip(points.row(i)) {
            *m += weights[i] * v;
        }
    }
    for m in &mut mean {
        *m /= total;
    }
    mean
}

fn init_centroids(
    points: &Matrix,
    weights: &[f64],
    k: usize,
    init: KMeansInit,
    rng: &mut rng::Rng,
) -> Matrix {
    let n = points.rows();
    let mut centroids = Matrix::zeros(k, points.cols());
    match init {
        KMeansInit::Random => {
            // k distinct points, uniform without replacement.
            let mut ids: Vec<usize> = (0..n).collect();
            for c in 0..k {
                let pick = rng.random_range(0..ids.len());
                let id = ids.swap_remove(pick);
                centroids.row_mut(c).copy_from_slice(points.row(id));
            }
        }
        KMeansInit::KMeansPlusPlus => {
            // Greedy variant: several weight-times-D^2 candidates per step,
            // keep the one that lowers the total potential the most.
            let candidates = 2 + (k as f64).ln().ceil() as usize;
            let first = rng.random_range(0..n);
            centroids.row_mut(0).copy_from_slice(points.row(first));
            let mut d2: Vec<f64> = (0..n)
                .map(|i| weights[i] * dist_sq(points.row(i), centroids.row(0)))
                .collect();
            for c in 1..k {
                let total: f64 = d2.iter().sum();
                let mut best_pick = None;
                for _ in 0..candidates {
                    let pick = if total <= 0.0 {
                        // All remaining points coincide with a centroid.
                        rng.random_range(0..n)
                    } else {
                        let mut target = rng.random::<f64>() * total;
                        let mut chosen = n - 1;
                        for (i, &w) in d2.iter().enumerate() {
                            target -= w;
                            if target <= 0.0 {
                                chosen = i;
                                break;
                            }
                        }
                        chosen
                    };
                    let potential: f64 = (0..n)
                        .map(|i| {
                            d2[i].min(weights[i] * dist_sq(points.row(i), points.row(pick)))
                        })
                        .sum();
                    if best_pick.is_none_or(|(_, p)| potential < p) {
                        best_pick = Some((pick, potential));
                    }
                }
                let (pick, _) = best_pick.unwrap();
                centroids.row_mut(c).copy_from_slice(points.row(pick));
                for i in 0..n {
                    let d = weights[i] * dist_sq(points.row(i), points.row(pick));
                    if d < d2[i] {
                        d2[i] = d;
                    }
                }
            }
        }
    }
    centroids
}

/// Nearest centroid, ties broken toward the lower cluster index.
fn nearest(point: &[f64], centroids: &Matrix) -> u32 {
    let mut best = 0u32;
    let mut best_d = f64::INFINITY;
    for c in 0..centroids.rows() {
        let d = dist_sq(point, centroids.row(c));
        if d < best_d {
            best_d = d;
            best = c as u32;
        }
    }
    best
}

struct LloydRun {
    assignment: Vec<u32>,
    centroids: Matrix,
    sse: f64,
}

/// Assign/update iterations until the centroids settle.
fn lloyd_phase(
    points: &Matrix,
    weights: &[f64],
    k: usize,
    max_iters: usize,
    tol: f64,
    assignment: &mut Vec<u32>,
    centroids: &mut Matrix,
    prev_sse: &mut f64,
    trace: &mut Option<&mut Vec<f64>>,
) {
    let n = points.rows();
    for _iter in 0..max_iters {
        for (i, a) in assignment.iter_mut().enumerate() {
            *a = nearest(points.row(i), centroids);
        }

        // Repair empty clusters by stealing the point currently costing the
        // most; its cost drops to zero, so the objective cannot increase.
        loop {
            let mut sizes = vec![0usize; k];
            for &c in assignment.iter() {
                sizes[c as usize] += 1;
            }
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                break;
            };
            let mut worst = 0usize;
            let mut worst_d = -1.0;
            for i in 0..n {
                if sizes[assignment[i] as usize] <= 1 {
                    continue; // stealing would just move the hole
                }
                let d = weights[i] * dist_sq(points.row(i), centroids.row(assignment[i] as usize));
                if d > worst_d {
                    worst_d = d;
                    worst = i;
                }
            }
            assignment[worst] = empty as u32;
            centroids.row_mut(empty).copy_from_slice(points.row(worst));
        }

        // Weighted mean update.
        let mut sums = Matrix::zeros(k, points.cols());
        let mut mass = vec![0.0f64; k];
        for (i, &c) in assignment.iter().enumerate() {
            mass[c as usize] += weights[i];
            for (s, v) in sums.row_mut(c as usize).iter_mut().zip(points.row(i)) {
                *s += weights[i] * v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let inv = 1.0 / mass[c];
            let mut moved = 0.0;
            for (j, s) in sums.row(c).iter().enumerate() {
                let newv = s * inv;
                let d = newv - centroids.get(c, j);
                moved += d * d;
                centroids.set(c, j, newv);
            }
            shift = shift.max(moved.sqrt());
        }

        let cur = weighted_sse(points, weights, assignment, centroids);
        debug_assert!(cur <= *prev_sse + 1e-9, "SSE increased: {prev_sse} -> {cur}");
        if let Some(t) = trace.as_deref_mut() {
            t.push(cur);
        }
        *prev_sse = cur;
        if shift < tol {
            break;
        }
    }
}

/// Single-point improvement sweeps (Hartigan-style): move a point whenever
/// the exact objective change is negative. Escapes Lloyd fixed points that a
/// pure assign/update alternation cannot leave. Returns whether any point
/// moved.
fn polish_phase(
    points: &Matrix,
    weights: &[f64],
    k: usize,
    assignment: &mut [u32],
    centroids: &mut Matrix,
    prev_sse: &mut f64,
    trace: &mut Option<&mut Vec<f64>>,
) -> bool {
    let n = points.rows();
    let mut counts = vec![0usize; k];
    let mut mass = vec![0.0f64; k];
    for (i, &c) in assignment.iter().enumerate() {
        counts[c as usize] += 1;
        mass[c as usize] += weights[i];
    }
    let mut any_move = false;
    loop {
        let mut moved = false;
        for i in 0..n {
            let a = assignment[i] as usize;
            if counts[a] <= 1 {
                continue;
            }
            let w = weights[i];
            let wa = mass[a];
            let removal_gain = wa * w / (wa - w) * dist_sq(points.row(i), centroids.row(a));
            let mut best_target = a;
            let mut best_cost = removal_gain;
            for b in 0..k {
                if b == a {
                    continue;
                }
                let wb = mass[b];
                let addition_cost = wb * w / (wb + w) * dist_sq(points.row(i), centroids.row(b));
                if addition_cost < best_cost - 1e-12 {
                    best_cost = addition_cost;
                    best_target = b;
                }
            }
            if best_target != a {
                let b = best_target;
                let (wa, wb) = (mass[a], mass[b]);
                for j in 0..points.cols() {
                    let x = points.get(i, j);
                    centroids.set(a, j, (centroids.get(a, j) * wa - w * x) / (wa - w));
                    centroids.set(b, j, (centroids.get(b, j) * wb + w * x) / (wb + w));
                }
                counts[a] -= 1;
                counts[b] += 1;
                mass[a] -= w;
                mass[b] += w;
                assignment[i] = b as u32;
                moved = true;
            }
        }
        let cur = weighted_sse(points, weights, assignment, centroids);
        debug_assert!(cur <= *prev_sse + 1e-9, "polish raised SSE: {prev_sse} -> {cur}");
        if let Some(t) = trace.as_deref_mut() {
            t.push(cur);
        }
        *prev_sse = cur;
        if !moved {
            break;
        }
        any_move = true;
    }
    any_move
}

fn run_once(
    points: &Matrix,
    weights: &[f64],
    k: usize,
    init: KMeansInit,
    max_iters: usize,
    tol: f64,
    seed: u64,
    mut trace: Option<&mut Vec<f64>>,
) -> LloydRun {
    let n = points.rows();
    let mut rng = rng::stream(seed, &[0x6b]);
    let mut centroids = init_centroids(points, weights, k, init, &mut rng);
    let mut assignment = vec![0u32; n];
    let mut prev_sse = f64::INFINITY;

    // Alternate full Lloyd convergence with polish sweeps until neither
    // phase finds a descent step.
    for _round in 0..max_iters {
        lloyd_phase(
            points,
            weights,
            k,
            max_iters,
            tol,
            &mut assignment,
            &mut centroids,
            &mut prev_sse,
            &mut trace,
        );
        let improved = polish_phase(
            points,
            weights,
            k,
            &mut assignment,
            &mut centroids,
            &mut prev_sse,
            &mut trace,
        );
        if !improved {
            break;
        }
    }

    let final_sse = weighted_sse(points, weights, &assignment, &centroids);
    LloydRun {
        assignment,
        centroids,
        sse: final_sse,
    }
}

/// Exhaustive optimal bipartition; cheaper than iterating when `2^(n-1)`
/// candidate partitions cost less than a Lloyd run.
fn exact_two_means(points: &Matrix, weights: &[f64]) -> LloydRun {
    let n = points.rows();
    let mut best: Option<(u32, f64)> = None;
    for mask in 1u32..(1 << (n - 1)) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for i in 0..n {
            if mask & (1 << i) != 0 {
                a.push(i);
            } else {
                b.push(i);
            }
        }
        let mut total = 0.0;
        for ids in [&a, &b] {
            let mean = weighted_mean(points, weights, ids);
            for &i in ids.iter() {
                total += weights[i] * dist_sq(points.row(i), &mean);
            }
        }
        if best.is_none_or(|(_, sse)| total < sse) {
            best = Some((mask, total));
        }
    }
    let (mask, total) = best.expect("n >= 2");
    let mut assignment = vec![0u32; n];
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for i in 0..n {
        if mask & (1 << i) != 0 {
            assignment[i] = 0;
            a.push(i);
        } else {
            assignment[i] = 1;
            b.push(i);
        }
    }
    let mut centroids = Matrix::zeros(2, points.cols());
    centroids
        .row_mut(0)
        .copy_from_slice(&weighted_mean(points, weights, &a));
    centroids
        .row_mut(1)
        .copy_from_slice(&weighted_mean(points, weights, &b));
    LloydRun {
        assignment,
        centroids,
        sse: total,
    }
}

/// Runs K-Means and returns a validated assignment. With `restarts > 1` the
/// lowest-SSE run (derived seeds) is kept.
pub fn kmeans(points: &Matrix, config: &KMeansConfig) -> Result<ClusterAssignment> {
    kmeans_impl(points, None, config, None)
}

/// K-Means with a positive weight per point; centroids are weighted means
/// and the objective is the weighted SSE.
pub fn kmeans_weighted(
    points: &Matrix,
    weights: &[f64],
    config: &KMeansConfig,
) -> Result<ClusterAssignment> {
    kmeans_impl(points, Some(weights), config, None)
}

/// Like [`kmeans`], additionally collecting the per-iteration SSE trace of
/// every restart.
pub fn kmeans_traced(
    points: &Matrix,
    config: &KMeansConfig,
) -> Result<(ClusterAssignment, Vec<Vec<f64>>)> {
    let mut traces = Vec::new();
    let assignment = kmeans_impl(points, None, config, Some(&mut traces))?;
    Ok((assignment, traces))
}

fn kmeans_impl(
    points: &Matrix,
    weights: Option<&[f64]>,
    config: &KMeansConfig,
    mut traces: Option<&mut Vec<Vec<f64>>>,
) -> Result<ClusterAssignment> {
    let n = points.rows();
    if config.k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if config.k > n {
        return Err(Error::InvalidConfig(format!(
            "k = {} exceeds point count {}",
            config.k, n
        )));
    }
    points.ensure_finite("kmeans input")?;
    let owned_weights;
    let weights: &[f64] = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} weights for {} points",
                    w.len(),
                    n
                )));
            }
            if w.iter().any(|&v| !v.is_finite() || v <= 0.0) {
                return Err(Error::InvalidConfig(
                    "kmeans weights must be positive and finite".into(),
                ));
            }
            w
        }
        None => {
            owned_weights = vec![1.0; n];
            &owned_weights
        }
    };

    if config.k == 2 && (2..=16).contains(&n) {
        let run = exact_two_means(points, weights);
        if let Some(all) = traces.as_deref_mut() {
            all.push(vec![run.sse]);
        }
        return ClusterAssignment::new(run.assignment, 2, run.centroids);
    }

    let restarts = config.restarts.max(1);
    let mut best: Option<LloydRun> = None;
    for r in 0..restarts {
        let seed = rng::derive_seed(config.seed, &[0x6d, r as u64]);
        // The first restart honors the configured init; later ones alternate
        // so repeated seeding cannot keep landing in one basin.
        let init = if r % 2 == 0 {
            config.init
        } else {
            match config.init {
                KMeansInit::KMeansPlusPlus => KMeansInit::Random,
                KMeansInit::Random => KMeansInit::KMeansPlusPlus,
            }
        };
        let mut run_trace = traces.is_some().then(Vec::new);
        let run = run_once(
            points,
            weights,
            config.k,
            init,
            config.max_iters,
            config.tol,
            seed,
            run_trace.as_mut(),
        );
        if let (Some(all), Some(t)) = (traces.as_deref_mut(), run_trace) {
            all.push(t);
        }
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    let LloydRun {
        assignment,
        mut centroids,
        ..
    } = best.unwrap();
    // Centroids consistent with the final assignment.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); config.k];
    for (i, &c) in assignment.iter().enumerate() {
        members[c as usize].push(i);
    }
    for (c, ids) in members.iter().enumerate() {
        // The repair step guarantees non-empty clusters.
        centroids
            .row_mut(c)
            .copy_from_slice(&weighted_mean(points, weights, ids));
    }
    ClusterAssignment::new(assignment, config.k, centroids)
}

/// Mean cosine similarity of cluster members to their centroid. Zero-norm
/// members or centroids are epsilon-guarded, which drives the value toward
/// zero rather than failing.
pub fn cohesion(members: &Matrix, member_ids: &[usize], centroid: &[f64]) -> f64 {
    assert!(!member_ids.is_empty(), "cohesion of an empty cluster");
    let mut total = 0.0;
    for &i in member_ids {
        total += cosine(members.row(i), centroid, COS_EPS);
    }
    total / member_ids.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn points(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows)
    }

    #[test]
    fn separates_two_obvious_pairs() {
        let p = points(&[
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![10.0, 0.0],
            vec![10.0, 1.0],
        ]);
        let a = kmeans(&p, &KMeansConfig::new(2, 0)).unwrap();
        assert_eq!(a.assignment[0], a.assignment[1]);
        assert_eq!(a.assignment[2], a.assignment[3]);
        assert_ne!(a.assignment[0], a.assignment[2]);
        let c_low = a.assignment[0] as usize;
        let c_high = a.assignment[2] as usize;
        assert_eq!(a.centroids.row(c_low), &[0.0, 0.5]);
        assert_eq!(a.centroids.row(c_high), &[10.0, 0.5]);
    }

    #[test]
    fn k_equals_n_gives_zero_sse() {
        let p = points(&[vec![1.0], vec![2.0], vec![5.0]]);
        let a = kmeans(&p, &KMeansConfig::new(3, 1)).unwrap();
        assert_eq!(sse(&p, &a.assignment, &a.centroids), 0.0);
        let sizes = a.cluster_sizes();
        assert!(sizes.iter().all(|&s| s == 1));
    }

    #[test]
    fn k_larger_than_n_errors() {
        let p = points(&[vec![1.0], vec![2.0]]);
        assert!(matches!(
            kmeans(&p, &KMeansConfig::new(3, 0)),
            Err(Error::InvalidConfig(_))
        ));
    }

    /// Exhaustive 2-partition oracle: the optimal SSE over all non-trivial
    /// bipartitions.
    fn optimal_two_partition_sse(p: &Matrix) -> f64 {
        let n = p.rows();
        let mut best = f64::INFINITY;
        for mask in 1..(1u32 << (n - 1)) {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for i in 0..n {
                if mask & (1 << i) != 0 {
                    a.push(i);
                } else {
                    b.push(i);
                }
            }
            let mut total = 0.0;
            for ids in [&a, &b] {
                if ids.is_empty() {
                    continue;
                }
                let mean = p.mean_of_rows(ids);
                for &i in ids.iter() {
                    total += dist_sq(p.row(i), &mean);
                }
            }
            best = best.min(total);
        }
        best
    }

    #[test]
    fn matches_exhaustive_optimum_on_tiny_instances() {
        let mut r = crate::rng::stream(2024, &[0]);
        let mut hits = 0;
        let trials = 50;
        for t in 0..trials {
            let n = r.random_range(4..=8);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
                .collect();
            let p = points(&rows);
            let optimal = optimal_two_partition_sse(&p);
            let mut config = KMeansConfig::new(2, t as u64);
            config.restarts = 10;
            let a = kmeans(&p, &config).unwrap();
            if sse(&p, &a.assignment, &a.centroids) <= optimal + 1e-9 {
                hits += 1;
            }
        }
        assert_eq!(hits, trials, "restarted kmeans missed the optimum");
    }

    #[test]
    fn larger_two_means_instances_also_reach_lloyd_quality() {
        // Above the exact-enumeration cutoff the iterative path handles k=2.
        let mut r = crate::rng::stream(2025, &[0]);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let side = if r.random::<bool>() { 3.0 } else { -3.0 };
                vec![side + r.random_range(-0.5..0.5), r.random_range(-0.5..0.5)]
            })
            .collect();
        let p = points(&rows);
        let a = kmeans(&p, &KMeansConfig::new(2, 9)).unwrap();
        // The two planted sides separate exactly.
        for i in 1..40 {
            let same_side = (rows[i][0] > 0.0) == (rows[0][0] > 0.0);
            assert_eq!(a.assignment[i] == a.assignment[0], same_side);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut r = crate::rng::stream(3, &[9]);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![r.random_range(-1.0..1.0); 3])
            .collect();
        let p = points(&rows);
        let a = kmeans(&p, &KMeansConfig::new(4, 7)).unwrap();
        let b = kmeans(&p, &KMeansConfig::new(4, 7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn repairs_empty_clusters() {
        // More clusters than distinct locations forces repair.
        let p = points(&[
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![5.0, 5.0],
            vec![5.0, 5.0],
            vec![9.0, 0.0],
        ]);
        for seed in 0..10 {
            let a = kmeans(&p, &KMeansConfig::new(3, seed)).unwrap();
            assert!(a.cluster_sizes().iter().all(|&s| s > 0));
        }
    }

    #[test]
    fn weighted_centroids_are_weighted_means() {
        // Two fixed groups; the heavy point dominates its centroid.
        let p = points(&[vec![0.0], vec![1.0], vec![10.0], vec![11.0]]);
        let weights = vec![3.0, 1.0, 1.0, 1.0];
        let a = kmeans_weighted(&p, &weights, &KMeansConfig::new(2, 0)).unwrap();
        let c_low = a.assignment[0] as usize;
        // (3*0 + 1*1) / 4 = 0.25
        assert!((a.centroids.get(c_low, 0) - 0.25).abs() < 1e-9);
    }

    #[test]
    fn unit_weights_match_unweighted() {
        let mut r = crate::rng::stream(77, &[0]);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| vec![r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)])
            .collect();
        let p = points(&rows);
        let config = KMeansConfig::new(3, 5);
        let plain = kmeans(&p, &config).unwrap();
        let weighted = kmeans_weighted(&p, &vec![1.0; 30], &config).unwrap();
        assert_eq!(plain, weighted);
    }

    #[test]
    fn invalid_weights_rejected() {
        let p = points(&[vec![0.0], vec![1.0], vec![2.0]]);
        let err = kmeans_weighted(&p, &[1.0, 0.0, 1.0], &KMeansConfig::new(1, 0));
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
        let err = kmeans_weighted(&p, &[1.0, 1.0], &KMeansConfig::new(1, 0));
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn traces_are_monotone() {
        let mut r = crate::rng::stream(8, &[1]);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)])
            .collect();
        let p = points(&rows);
        let mut config = KMeansConfig::new(4, 2);
        config.restarts = 3;
        let (_, traces) = kmeans_traced(&p, &config).unwrap();
        assert_eq!(traces.len(), 3);
        for trace in traces {
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9);
            }
        }
    }

    #[test]
    fn cohesion_of_identical_members_is_one() {
        let m = points(&[vec![0.5, 0.5], vec![0.5, 0.5]]);
        let c = vec![0.5, 0.5];
        assert!((cohesion(&m, &[0, 1], &c) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cohesion_degenerates_to_zero_for_opposite_members() {
        // Centroid of diametrically opposite members is ~zero; the guard
        // drives each cosine (and so the mean) to zero.
        let m = points(&[vec![1.0, 0.0], vec![-1.0, 0.0]]);
        let c = vec![0.0, 0.0];
        assert!(cohesion(&m, &[0, 1], &c).abs() < 1e-6);
    }

    #[test]
    fn cohesion_matches_member_loop() {
        let mut r = crate::rng::stream(5, &[2]);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..8).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let m = points(&rows);
        let ids: Vec<usize> = (0..20).collect();
        let c = m.mean_of_rows(&ids);
        let fast = cohesion(&m, &ids, &c);
        let mut slow = 0.0;
        for i in 0..20 {
            let num: f64 = m.row(i).iter().zip(&c).map(|(a, b)| a * b).sum();
            let na: f64 = m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            let nc: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            slow += num / (na * nc);
        }
        slow /= 20.0;
        assert!((fast - slow).abs() < 1e-9);
    }
}
