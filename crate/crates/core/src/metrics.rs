//! Rank and linear correlation metrics.

use crate::error::{Error, Result};

/// Spearman rank-order correlation: Pearson correlation of fractional
/// (average-tie) ranks.
pub fn srcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    let rx = fractional_ranks(x);
    let ry = fractional_ranks(y);
    pearson(&rx, &ry)
}

/// Pearson linear correlation on raw values (two-pass).
pub fn plcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    pearson(x, y)
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid("correlation requires equal lengths"));
    }
    if x.len() < 2 {
        return Err(Error::invalid("correlation requires at least 2 samples"));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("correlation inputs must be finite"));
    }
    Ok(())
}

/// Average ranks, 1-based; ties get the mean of the ranks they span.
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("finite inputs"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the average 1-based rank.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateMetric(
            "constant input has no defined correlation".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}
