//! Server-side aggregation. Inputs are weight vectors only.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Output of one aggregation step.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    /// `ω*[j]` for each contributing client, in input order.
    pub personalized: Vec<Vec<f64>>,
    pub global: Vec<f64>,
}

fn check_lengths(weights: &[Vec<f64>]) -> Result<usize> {
    let first = weights
        .first()
        .ok_or_else(|| Error::InvalidArgument("aggregation needs at least one client".into()))?;
    if weights.iter().any(|w| w.len() != first.len()) {
        return Err(Error::shape(
            "client weight vectors differ in length".to_string(),
        ));
    }
    Ok(first.len())
}

/// Elementwise mean, accumulated in client order as offsets from the first
/// client. Identical inputs come back bit-exact.
pub fn mean_weights(weights: &[Vec<f64>]) -> Result<Vec<f64>> {
    let len = check_lengths(weights)?;
    let base = &weights[0];
    let mut acc = vec![0.0; len];
    for w in &weights[1..] {
        for ((a, v), b) in acc.iter_mut().zip(w).zip(base) {
            *a += v - b;
        }
    }
    let n = weights.len() as f64;
    Ok(base.iter().zip(&acc).map(|(b, a)| b + a / n).collect())
}

/// Every client receives the plain average.
pub fn fedavg_aggregate(weights: &[Vec<f64>]) -> Result<Aggregation> {
    let global = mean_weights(weights)?;
    Ok(Aggregation {
        personalized: vec![global.clone(); weights.len()],
        global,
    })
}

/// Cosine of two flat weight vectors; 0 when either is all zeros.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Pairwise cosine similarities; symmetric with unit diagonal.
pub fn similarity_matrix(weights: &[Vec<f64>]) -> Array2<f64> {
    let n = weights.len();
    let mut m = Array2::from_elem((n, n), 1.0);
    for j in 0..n {
        for k in j + 1..n {
            let s = cosine_sim(&weights[j], &weights[k]);
            m[[j, k]] = s;
            m[[k, j]] = s;
        }
    }
    m
}

/// Relation matrix used for message passing.
pub fn relation_matrix(weights: &[Vec<f64>], clamp: bool) -> Array2<f64> {
    let mut r = similarity_matrix(weights);
    if clamp {
        r.mapv_inplace(|v| v.clamp(0.0, 1.0));
    }
    r
}

/// Similarity-weighted message passing over the complete client graph.
///
/// Each step replaces `ω[j]` by `Σ_k R[j,k] ω[k] / Σ_k R[j,k]`; `R` is built
/// once from the incoming weights. The global model is the mean of the
/// personalized ones.
pub fn fedgraph_aggregate(
    weights: &[Vec<f64>],
    clamp: bool,
    mp_steps: usize,
) -> Result<Aggregation> {
    let len = check_lengths(weights)?;
    let rel = relation_matrix(weights, clamp);
    let n = weights.len();
    let mut current = weights.to_vec();
    for _ in 0..mp_steps {
        let mut next = Vec::with_capacity(n);
        for j in 0..n {
            let row = rel.row(j);
            let norm: f64 = row.sum();
            if !(norm > 0.0) {
                return Err(Error::Data(format!(
                    "client {j} has non-positive relation mass {norm}"
                )));
            }
            // Weighted mean written as an offset from the client's own weights.
            let own = &current[j];
            let mut acc = vec![0.0; len];
            for (k, &r) in row.iter().enumerate() {
                if r == 0.0 || k == j {
                    continue;
                }
                for ((a, v), o) in acc.iter_mut().zip(&current[k]).zip(own) {
                    *a += r * (v - o);
                }
            }
            next.push(own.iter().zip(&acc).map(|(o, a)| o + a / norm).collect());
        }
        current = next;
    }
    let global = mean_weights(&current)?;
    Ok(Aggregation {
        personalized: current,
        global,
    })
}
