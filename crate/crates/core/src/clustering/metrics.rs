//! External clustering metrics: NMI and matched Cohen's kappa.

use std::collections::BTreeMap;

use ndarray::Array2;

use super::hungarian::hungarian_match;
use crate::error::{Error, Result};

fn check_lengths(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "label vectors differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Dimension("label vectors are empty".into()));
    }
    Ok(())
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    let mapped = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (mapped, ids.len())
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with arithmetic-mean normalization,
/// `2 I(A;B) / (H(A) + H(B))`. Two constant labelings score 1; a constant
/// labeling against a non-constant one scores 0.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    check_lengths(a, b)?;
    let n = a.len() as f64;
    let (a, ka) = compact(a);
    let (b, kb) = compact(b);
    let mut table = vec![0usize; ka * kb];
    for (&i, &j) in a.iter().zip(&b) {
        table[i * kb + j] += 1;
    }
    let mut rows = vec![0usize; ka];
    let mut cols = vec![0usize; kb];
    for i in 0..ka {
        for j in 0..kb {
            rows[i] += table[i * kb + j];
            cols[j] += table[i * kb + j];
        }
    }
    let ha = entropy(&rows, n);
    let hb = entropy(&cols, n);
    if ha + hb == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let nij = table[i * kb + j];
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

/// Cohen's kappa between two labelings over the same label set.
pub fn cohen_kappa(a: &[usize], b: &[usize]) -> Result<f64> {
    check_lengths(a, b)?;
    let n = a.len() as f64;
    let size = a.iter().chain(b).copied().max().unwrap_or(0) + 1;
    let mut ca = vec![0usize; size];
    let mut cb = vec![0usize; size];
    let mut agree = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        ca[x] += 1;
        cb[y] += 1;
        agree += usize::from(x == y);
    }
    let po = agree as f64 / n;
    let pe: f64 = ca
        .iter()
        .zip(&cb)
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum::<f64>()
        / (n * n);
    Ok(kappa_from(po, pe))
}

fn kappa_from(po: f64, pe: f64) -> f64 {
    if 1.0 - pe <= 0.0 {
        // Both labelings constant on the same label.
        if po >= 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (po - pe) / (1.0 - pe)
    }
}

/// Contingency counts `table[predicted][truth]` padded to a `size × size`
/// square.
fn square_contingency(predicted: &[usize], truth: &[usize], size: usize) -> Array2<f64> {
    let mut table = Array2::zeros((size, size));
    for (&p, &t) in predicted.iter().zip(truth) {
        table[[p, t]] += 1.0;
    }
    table
}

/// Cluster-to-class mapping that maximizes Cohen's kappa.
///
/// Kappa is a ratio of two linear functions of the matching, so it is
/// maximized with Dinkelbach iterations, each a linear assignment solved by
/// the Hungarian method. The first iterate is the maximum-agreement matching.
pub fn best_kappa_matching(predicted: &[usize], truth: &[usize], k: usize) -> Result<Vec<usize>> {
    check_lengths(predicted, truth)?;
    if let Some(&bad) = truth.iter().find(|&&t| t >= k) {
        return Err(Error::Config(format!("truth label {bad} outside [0, {k})")));
    }
    let size = k.max(predicted.iter().copied().max().unwrap_or(0) + 1);
    let n = predicted.len() as f64;
    let table = square_contingency(predicted, truth, size);
    let row_totals: Vec<f64> = table.rows().into_iter().map(|r| r.sum() / n).collect();
    let col_totals: Vec<f64> = table.columns().into_iter().map(|c| c.sum() / n).collect();
    let agreement = &table / n;

    let evaluate = |mapping: &[usize]| {
        let po: f64 = mapping
            .iter()
            .enumerate()
            .map(|(p, &t)| agreement[[p, t]])
            .sum();
        let pe: f64 = mapping
            .iter()
            .enumerate()
            .map(|(p, &t)| row_totals[p] * col_totals[t])
            .sum();
        (po, pe)
    };

    let max_count = table.iter().copied().fold(0.0, f64::max);
    let mut mapping = hungarian_match((table.mapv(|c| max_count - c)).view())?;
    let (po, pe) = evaluate(&mapping);
    let mut ratio = kappa_from(po, pe);
    for _ in 0..64 {
        // maximize sum_p [agree(p, t) - pe(p, t)] - ratio * (1 - sum_p pe(p, t))
        let weight = Array2::from_shape_fn((size, size), |(p, t)| {
            agreement[[p, t]] - (1.0 - ratio) * row_totals[p] * col_totals[t]
        });
        let max_w = weight.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let candidate = hungarian_match(weight.mapv(|w| max_w - w).view())?;
        let (po_c, pe_c) = evaluate(&candidate);
        let next = kappa_from(po_c, pe_c);
        if next <= ratio + 1e-15 {
            break;
        }
        mapping = candidate;
        ratio = next;
    }
    Ok(mapping)
}

/// Cohen's kappa after mapping predicted clusters onto classes with the
/// kappa-maximizing one-to-one matching.
pub fn kappa(predicted: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    let mapping = best_kappa_matching(predicted, truth, k)?;
    let mapped: Vec<usize> = predicted.iter().map(|&p| mapping[p]).collect();
    cohen_kappa(&mapped, truth)
}
