//! Integer codes: random permutations of `1..=M` and Fisher ordering by
//! mean response.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// `levels × copies` matrix; each column is a uniformly random bijection
/// onto `1..=levels`.
pub fn random_permutations(levels: usize, copies: usize, seed: u64) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(levels, copies);
    for c in 0..copies {
        let mut stream = rng::stream(seed, c as u64);
        let mut values: Vec<usize> = (1..=levels).collect();
        values.shuffle(&mut stream);
        for (r, v) in values.into_iter().enumerate() {
            out[(r, c)] = v as f64;
        }
    }
    out
}

/// Rank (1-based) of each level by increasing mean of `y`; ties go to the
/// lower level index.
pub fn fisher_ranks(g: &[usize], y: &[f64], levels: usize) -> Result<Vec<usize>> {
    if g.len() != y.len() {
        return Err(Error::Dimension(format!(
            "{} labels but {} responses",
            g.len(),
            y.len()
        )));
    }
    let mut sums = vec![0.0; levels];
    let mut counts = vec![0usize; levels];
    for (&gi, &yi) in g.iter().zip(y) {
        sums[gi] += yi;
        counts[gi] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Fit(format!("level {empty} has no rows")));
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();
    let mut order: Vec<usize> = (0..levels).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)));
    let mut ranks = vec![0; levels];
    for (rank, level) in order.into_iter().enumerate() {
        ranks[level] = rank + 1;
    }
    Ok(ranks)
}
