//! Training objectives: the similarity-guided contrastive loss, the
//! cophenetic-correlation regularizer, cross-entropy, and their combination.
//!
//! The contrastive loss sums over all ordered cross-view pairs:
//!
//! ```text
//! L = - sum_{S_ij = 1} z1_i . z2_j  +  gamma * sum_{S_ij = 0} (z1_i . z2_j)^2
//! ```
//!
//! The negative term is computed exactly via
//! `sum_ij (z1_i . z2_j)^2 = trace((Z1^T Z1)(Z2^T Z2))`, which costs
//! `O(n d^2)` instead of `O(n^2 d)`, so no negative subsampling is needed at
//! any graph size this crate targets.

use crate::error::{Error, Result};
use crate::graph::ClusterAssignment;
use crate::matrix::{dist_sq, dot, Matrix};
use crate::similarity::SimilarityMatrix;
use serde::Serialize;
use std::collections::BTreeMap;

/// Norm tolerance for the unit-row precondition of the contrastive loss.
const UNIT_NORM_TOL: f64 = 1e-6;
/// Floor for prototype-distance denominators in gradients.
pub const DIST_EPS: f64 = 1e-9;
/// Variance floor below which a Pearson correlation is undefined.
const VAR_EPS: f64 = 1e-24;

/// Contrastive loss settings.
#[derive(Clone, Copy, Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct SgclConfig {
    /// Negative-pair weight; 1.0 by default.
    pub gamma: f64,
}

impl Default for SgclConfig {
    fn default() -> Self {
        SgclConfig { gamma: 1.0 }
    }
}

/// Checks that every row of `z` has unit Euclidean norm.
fn ensure_unit_rows(z: &Matrix) -> Result<()> {
    for i in 0..z.rows() {
        let n = dot(z.row(i), z.row(i)).sqrt();
        if (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::NotNormalized(i));
        }
    }
    Ok(())
}

/// Similarity-guided contrastive loss with gradients w.r.t. both views.
///
/// Positives are the diagonal plus the indicator's pair set, counted over
/// ordered cross-view pairs (so an off-diagonal positive contributes both
/// `(i, j)` and `(j, i)`).
pub fn sgcl_loss(
    z1: &Matrix,
    z2: &Matrix,
    sim: &SimilarityMatrix,
    gamma: f64,
) -> Result<(f64, Matrix, Matrix)> {
    if z1.rows() != z2.rows() || z1.cols() != z2.cols() {
        return Err(Error::DimensionMismatch("view shapes differ".into()));
    }
    if z1.rows() != sim.n() {
        return Err(Error::DimensionMismatch(format!(
            "embeddings have {} rows, similarity has n = {}",
            z1.rows(),
            sim.n()
        )));
    }
    ensure_unit_rows(z1)?;
    ensure_unit_rows(z2)?;

    let n = z1.rows();
    let mut g1 = Matrix::zeros(n, z1.cols());
    let mut g2 = Matrix::zeros(n, z1.cols());

    // Total squared-inner-product mass over all ordered pairs.
    let gram1 = z1.t_matmul(z1); // d x d
    let gram2 = z2.t_matmul(z2);
    let mut total_sq = 0.0;
    for i in 0..gram1.rows() {
        total_sq += dot(gram1.row(i), gram2.row(i));
    }
    // d(total_sq)/dZ1 = 2 Z1 Gram2, and symmetrically for Z2.
    let g1_total = z1.matmul(&gram2).scale(2.0 * gamma);
    let g2_total = z2.matmul(&gram1).scale(2.0 * gamma);
    g1.add_assign(&g1_total);
    g2.add_assign(&g2_total);

    // Walk the positive pairs: subtract their squared term from the negative
    // mass and accumulate the attraction term.
    let mut pos_inner_sum = 0.0;
    let mut pos_sq_sum = 0.0;
    let mut visit = |i: usize, j: usize, g1: &mut Matrix, g2: &mut Matrix| {
        let inner = dot(z1.row(i), z2.row(j));
        pos_inner_sum += inner;
        pos_sq_sum += inner * inner;
        let coeff = -1.0 - 2.0 * gamma * inner; // attraction minus the over-counted negative term
        for (g, &v) in g1.row_mut(i).iter_mut().zip(z2.row(j)) {
            *g += coeff * v;
        }
        for (g, &v) in g2.row_mut(j).iter_mut().zip(z1.row(i)) {
            *g += coeff * v;
        }
    };
    for i in 0..n {
        visit(i, i, &mut g1, &mut g2);
    }
    for (a, b) in sim.positives() {
        visit(a as usize, b as usize, &mut g1, &mut g2);
        visit(b as usize, a as usize, &mut g1, &mut g2);
    }

    let loss = -pos_inner_sum + gamma * (total_sq - pos_sq_sum);
    Ok((loss, g1, g2))
}

/// Cluster prototypes: row `c` is the mean embedding of cluster `c`.
pub fn prototypes(z: &Matrix, assignment: &ClusterAssignment) -> Result<Matrix> {
    if z.rows() != assignment.assignment.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} embeddings vs {} assigned nodes",
            z.rows(),
            assignment.assignment.len()
        )));
    }
    let members = assignment.members();
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(Error::DegenerateCluster(format!("cluster {c} is empty")));
    }
    let mut p = Matrix::zeros(assignment.k, z.cols());
    for (c, ids) in members.iter().enumerate() {
        p.row_mut(c).copy_from_slice(&z.mean_of_rows(ids));
    }
    Ok(p)
}

/// Pairwise Euclidean distance matrix between the rows of `p`.
pub fn pairwise_distances(p: &Matrix) -> Matrix {
    let k = p.rows();
    let mut d = Matrix::zeros(k, k);
    for i in 0..k {
        for j in (i + 1)..k {
            let dist = dist_sq(p.row(i), p.row(j)).sqrt();
            d.set(i, j, dist);
            d.set(j, i, dist);
        }
    }
    d
}

fn upper_entries(d: &Matrix) -> Vec<f64> {
    let k = d.rows();
    let mut v = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            v.push(d.get(i, j));
        }
    }
    v
}

/// Pearson correlation between the upper-triangular entries of two symmetric
/// `k x k` matrices. `None` when either vector has (numerically) zero
/// variance, which includes every `k < 3`.
pub fn ccc(d: &Matrix, d_coph: &Matrix) -> Option<f64> {
    assert_eq!(d.rows(), d.cols());
    assert_eq!(d_coph.rows(), d_coph.cols());
    assert_eq!(d.rows(), d_coph.rows());
    let u = upper_entries(d);
    let v = upper_entries(d_coph);
    pearson(&u, &v)
}

fn pearson(u: &[f64], v: &[f64]) -> Option<f64> {
    let m = u.len();
    if m < 2 {
        return None;
    }
    let mf = m as f64;
    let mean_u = u.iter().sum::<f64>() / mf;
    let mean_v = v.iter().sum::<f64>() / mf;
    let mut suu = 0.0;
    let mut svv = 0.0;
    let mut suv = 0.0;
    for i in 0..m {
        let a = u[i] - mean_u;
        let b = v[i] - mean_v;
        suu += a * a;
        svv += b * b;
        suv += a * b;
    }
    if suu < VAR_EPS || svv < VAR_EPS {
        return None;
    }
    Some(suv / (suu.sqrt() * svv.sqrt()))
}

/// Result of the cophenetic regularizer.
#[derive(Clone, Debug)]
pub struct CccRegResult {
    /// `1 - CCC`, or 0 when the correlation is undefined.
    pub loss: f64,
    /// Gradient w.r.t. the node embeddings; zero when undefined.
    pub grad_z: Matrix,
    /// The correlation itself, when defined.
    pub ccc: Option<f64>,
    /// Set when the degenerate zero-loss path was taken.
    pub degenerate: bool,
}

/// Cophenetic regularization `1 - CCC(D, D_coph)` with gradient w.r.t. `z`.
///
/// The chain runs prototypes -> pairwise distances -> Pearson; `d_coph` is a
/// constant. A degenerate correlation (zero variance, fewer than three
/// clusters) contributes zero loss and zero gradient rather than failing, so
/// transient collapsed epochs cannot kill a run.
pub fn ccc_reg_loss(
    z: &Matrix,
    assignment: &ClusterAssignment,
    d_coph: &Matrix,
) -> Result<CccRegResult> {
    if d_coph.rows() != assignment.k {
        return Err(Error::DimensionMismatch(format!(
            "cophenetic matrix is {}x{} but k = {}",
            d_coph.rows(),
            d_coph.cols(),
            assignment.k
        )));
    }
    let p = prototypes(z, assignment)?;
    let d = pairwise_distances(&p);
    let k = assignment.k;

    let u = upper_entries(&d);
    let v = upper_entries(d_coph);
    let r = match pearson(&u, &v) {
        Some(r) => r,
        None => {
            return Ok(CccRegResult {
                loss: 0.0,
                grad_z: Matrix::zeros(z.rows(), z.cols()),
                ccc: None,
                degenerate: true,
            });
        }
    };

    // d(pearson)/d(u_e) = b_e / sqrt(Suu*Svv) - Suv * a_e / (Suu^{3/2} * sqrt(Svv))
    let m = u.len() as f64;
    let mean_u = u.iter().sum::<f64>() / m;
    let mean_v = v.iter().sum::<f64>() / m;
    let mut suu = 0.0;
    let mut svv = 0.0;
    let mut suv = 0.0;
    for i in 0..u.len() {
        let a = u[i] - mean_u;
        let b = v[i] - mean_v;
        suu += a * a;
        svv += b * b;
        suv += a * b;
    }
    let denom = suu.sqrt() * svv.sqrt();

    // Gradient w.r.t. prototypes, then scatter to member embeddings.
    let mut grad_p = Matrix::zeros(k, p.cols());
    let mut e = 0usize;
    for i in 0..k {
        for j in (i + 1)..k {
            let a = u[e] - mean_u;
            let b = v[e] - mean_v;
            // d(loss)/d(D_ij) = -d(r)/d(D_ij)
            let dr_du = b / denom - suv * a / (suu * denom);
            let dloss_du = -dr_du;
            let dist = d.get(i, j).max(DIST_EPS);
            for c in 0..p.cols() {
                let diff = (p.get(i, c) - p.get(j, c)) / dist;
                grad_p.set(i, c, grad_p.get(i, c) + dloss_du * diff);
                grad_p.set(j, c, grad_p.get(j, c) - dloss_du * diff);
            }
            e += 1;
        }
    }

    let mut grad_z = Matrix::zeros(z.rows(), z.cols());
    let members = assignment.members();
    for (c, ids) in members.iter().enumerate() {
        let inv = 1.0 / ids.len() as f64;
        for &i in ids {
            for (g, &gp) in grad_z.row_mut(i).iter_mut().zip(grad_p.row(c)) {
                *g += inv * gp;
            }
        }
    }

    Ok(CccRegResult {
        loss: 1.0 - r,
        grad_z,
        ccc: Some(r),
        degenerate: false,
    })
}

/// Mean cross-entropy over the listed nodes, with gradient w.r.t. logits.
pub fn cross_entropy(
    logits: &Matrix,
    labels: &[i32],
    nodes: &[u32],
) -> Result<(f64, Matrix)> {
    if nodes.is_empty() {
        return Err(Error::EmptySupervision);
    }
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let inv = 1.0 / nodes.len() as f64;
    for &i in nodes {
        let i = i as usize;
        let y = labels[i];
        if y < 0 || y as usize >= logits.cols() {
            return Err(Error::InvalidGraph(format!(
                "node {i} has label {y}, expected [0, {})",
                logits.cols()
            )));
        }
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss -= ((row[y as usize] - max) - sum.ln()) * inv;
        for (j, g) in grad.row_mut(i).iter_mut().enumerate() {
            let p = exps[j] / sum;
            *g = (p - if j == y as usize { 1.0 } else { 0.0 }) * inv;
        }
    }
    Ok((loss, grad))
}

/// Per-epoch loss breakdown, serialized into the training log.
#[derive(Clone, Debug, Serialize)]
pub struct LossReport {
    pub total: f64,
    pub components: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ccc_value: Option<f64>,
}

/// Output of [`total_loss`]: the report plus gradients w.r.t. logits and
/// embeddings.
pub struct TotalLoss {
    pub report: LossReport,
    pub grad_logits: Matrix,
    pub grad_z: Matrix,
}

/// Combined classification objective: cross-entropy on train nodes plus
/// `lambda` times the cophenetic regularizer. `lambda = 0` reproduces plain
/// cross-entropy training exactly.
pub fn total_loss(
    logits: &Matrix,
    labels: &[i32],
    train_nodes: &[u32],
    z: &Matrix,
    assignment: &ClusterAssignment,
    d_coph: &Matrix,
    lambda: f64,
) -> Result<TotalLoss> {
    let (ce, grad_logits) = cross_entropy(logits, labels, train_nodes)?;
    let (ccc_reg, grad_z, ccc_value) = if lambda == 0.0 {
        (0.0, Matrix::zeros(z.rows(), z.cols()), None)
    } else {
        let reg = ccc_reg_loss(z, assignment, d_coph)?;
        (reg.loss, reg.grad_z.scale(lambda), reg.ccc)
    };
    let total = ce + lambda * ccc_reg;
    let mut components = BTreeMap::new();
    components.insert("ce".to_string(), ce);
    components.insert("ccc_reg".to_string(), ccc_reg);
    Ok(TotalLoss {
        report: LossReport {
            total,
            components,
            ccc_value,
        },
        grad_logits,
        grad_z,
    })
}
