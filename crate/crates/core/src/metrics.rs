//! Evaluation metrics and the 2-D projection export.

use crate::matrix::{dot, Matrix};
use std::collections::HashMap;

fn comb2(n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        (n * (n - 1) / 2) as f64
    }
}

/// Adjusted Rand Index between two clusterings.
///
/// 0 is chance level, 1 is perfect agreement (up to label permutation).
pub fn ari(pred: &[u32], truth: &[u32]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    if pred.is_empty() {
        return 0.0;
    }
    let mut joint: HashMap<(u32, u32), usize> = HashMap::new();
    let mut rows: HashMap<u32, usize> = HashMap::new();
    let mut cols: HashMap<u32, usize> = HashMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *joint.entry((p, t)).or_insert(0) += 1;
        *rows.entry(p).or_insert(0) += 1;
        *cols.entry(t).or_insert(0) += 1;
    }
    let sum_ij: f64 = joint.values().map(|&c| comb2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| comb2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| comb2(c)).sum();
    let total = comb2(pred.len());
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom.abs() < 1e-12 {
        return 1.0;
    }
    (sum_ij - expected) / denom
}

/// Fraction of nodes whose argmax logit matches the label.
pub fn accuracy(logits: &Matrix, labels: &[i32], nodes: &[u32]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let mut correct = 0usize;
    for &i in nodes {
        let row = logits.row(i as usize);
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        if best as i32 == labels[i as usize] {
            correct += 1;
        }
    }
    correct as f64 / nodes.len() as f64
}

/// Per-class accuracy over the given nodes; `NaN`-free: classes absent from
/// the node set are omitted.
pub fn per_class_accuracy(logits: &Matrix, labels: &[i32], nodes: &[u32]) -> Vec<(i32, f64)> {
    let mut totals: HashMap<i32, (usize, usize)> = HashMap::new();
    for &i in nodes {
        let row = logits.row(i as usize);
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        let entry = totals.entry(labels[i as usize]).or_insert((0, 0));
        entry.1 += 1;
        if best as i32 == labels[i as usize] {
            entry.0 += 1;
        }
    }
    let mut out: Vec<(i32, f64)> = totals
        .into_iter()
        .map(|(c, (hit, tot))| (c, hit as f64 / tot as f64))
        .collect();
    out.sort_by_key(|&(c, _)| c);
    out
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Projects rows onto the top two principal components (power iteration with
/// deflation, deterministic start vectors). Returns an `n x 2` matrix.
pub fn pca_2d(z: &Matrix) -> Matrix {
    let n = z.rows();
    let d = z.cols();
    // Center.
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(z.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut centered = z.clone();
    for i in 0..n {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }

    // Covariance (d x d).
    let mut cov = centered.t_matmul(&centered);
    cov.scale_assign(1.0 / n.max(1) as f64);

    let mut components: Vec<Vec<f64>> = Vec::new();
    for c in 0..2.min(d) {
        // Deterministic start: basis-ish vector offset per component.
        let mut v: Vec<f64> = (0..d)
            .map(|j| if (j + c) % 2 == 0 { 1.0 } else { 0.5 })
            .collect();
        normalize(&mut v);
        for _ in 0..200 {
            let mut next = mat_vec(&cov, &v);
            // Deflate previously found directions.
            for comp in &components {
                let proj = dot(&next, comp);
                for (x, c) in next.iter_mut().zip(comp) {
                    *x -= proj * c;
                }
            }
            if normalize(&mut next) < 1e-12 {
                break;
            }
            v = next;
        }
        components.push(v);
    }

    let mut out = Matrix::zeros(n, 2);
    for i in 0..n {
        for (c, comp) in components.iter().enumerate() {
            out.set(i, c, dot(centered.row(i), comp));
        }
    }
    out
}

fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|i| dot(m.row(i), v)).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ari_perfect_and_permuted() {
        assert!((ari(&[0, 0, 1, 1], &[0, 0, 1, 1]) - 1.0).abs() < 1e-12);
        assert!((ari(&[1, 1, 0, 0], &[0, 0, 1, 1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ari_random_is_near_zero() {
        // Alternating vs blocked: a classic low-agreement pair.
        let pred = [0, 1, 0, 1, 0, 1, 0, 1];
        let truth = [0, 0, 0, 0, 1, 1, 1, 1];
        assert!(ari(&pred, &truth).abs() < 0.3);
    }

    #[test]
    fn accuracy_counts_argmax_hits() {
        let logits = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0], vec![2.0, 0.0]]);
        let labels = vec![0, 1, 1];
        assert!((accuracy(&logits, &labels, &[0, 1, 2]) - 2.0 / 3.0).abs() < 1e-12);
        let per = per_class_accuracy(&logits, &labels, &[0, 1, 2]);
        assert_eq!(per, vec![(0, 1.0), (1, 0.5)]);
    }

    #[test]
    fn mean_std_basic() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert!((m - 2.0).abs() < 1e-12);
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pca_recovers_dominant_axis() {
        // Points stretched along (1, 1, 0).
        let mut rows = Vec::new();
        for i in 0..50 {
            let t = (i as f64 - 25.0) / 5.0;
            rows.push(vec![t + 0.01 * (i % 3) as f64, t, 0.1 * (i % 2) as f64]);
        }
        let z = Matrix::from_rows(&rows);
        let proj = pca_2d(&z);
        // First component captures far more variance than the second.
        let var = |c: usize| -> f64 {
            let vals: Vec<f64> = (0..proj.rows()).map(|i| proj.get(i, c)).collect();
            let (_, s) = mean_std(&vals);
            s * s
        };
        assert!(var(0) > 10.0 * var(1));
    }
}
