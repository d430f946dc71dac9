//! Cross-validated choice of the low-rank dimension.

use serde::Serialize;

use super::{EncoderSpec, Method};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{predict_with_encoder, stratified_kfold, LearnerK, PreparedFold};
use crate::par::Execution;
use crate::rng;

/// Pooled out-of-fold MSE of every (spec, neighbour count) pair, indexed
/// `[spec][k]`. A spec that fails to fit on some fold scores `+∞`.
pub fn cv_grid(
    d: &Dataset,
    specs: &[EncoderSpec],
    ks: &[usize],
    folds: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    let y = d
        .y()
        .ok_or_else(|| Error::Config("cross-validation needs a response".to_string()))?;
    let plan = stratified_kfold(d.g(), folds, &mut rng::stream(seed, 0))?;
    let per_fold = exec.map_range(folds, |f| -> Result<Option<(usize, Vec<Vec<f64>>)>> {
        let test_rows = plan.test_rows(f);
        if test_rows.is_empty() {
            return Ok(None);
        }
        let train = d.split_rows(&plan.train_rows(f))?;
        let test = d.split_rows(&test_rows)?;
        let fold = PreparedFold::new(
            train.x(),
            train.y().expect("checked"),
            test.x(),
            Execution::Sequential,
        )?;
        let truth: Vec<f64> = test_rows.iter().map(|&i| y[i]).collect();
        let sse = specs
            .iter()
            .map(|spec| {
                let enc = match spec.fit(&train) {
                    Ok(e) => e,
                    Err(e) => {
                        log::debug!("inner fold {f}: {} failed to fit: {e}", spec.method);
                        return vec![f64::INFINITY; ks.len()];
                    }
                };
                ks.iter()
                    .map(|&k| {
                        match predict_with_encoder(
                            &fold,
                            &enc,
                            &train,
                            &test,
                            k,
                            Execution::Sequential,
                        ) {
                            Ok(pred) => pred
                                .iter()
                                .zip(&truth)
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum(),
                            Err(_) => f64::INFINITY,
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Some((test_rows.len(), sse)))
    });
    let mut total = vec![vec![0.0; ks.len()]; specs.len()];
    let mut count = 0usize;
    for r in per_fold {
        if let Some((n, sse)) = r? {
            count += n;
            for (t, s) in total.iter_mut().zip(sse) {
                for (a, b) in t.iter_mut().zip(s) {
                    *a += b;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::Empty(
            "no category has enough rows for a cross-validation test fold".to_string(),
        ));
    }
    for row in total.iter_mut() {
        row.iter_mut().for_each(|v| *v /= count as f64);
    }
    Ok(total)
}

/// Pooled out-of-fold MSE of each spec with neighbour rule `learner`.
pub fn cv_mse(
    d: &Dataset,
    specs: &[EncoderSpec],
    folds: usize,
    learner: LearnerK,
    seed: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    // training folds hold about (folds − 1)/folds of the rows
    let n_train = d.n() * (folds - 1).max(1) / folds.max(1);
    let k = learner.resolve(n_train.max(1));
    Ok(cv_grid(d, specs, &[k], folds, seed, exec)?
        .into_iter()
        .map(|r| r[0])
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSelection {
    pub k: usize,
    pub grid: Vec<usize>,
    pub mse: Vec<f64>,
}

/// Index of the smallest finite value, first on ties.
pub(crate) fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| *v < values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Rank for `lowrank` / `sparselowrank` minimizing the cross-validated MSE
/// over `1..=min(levels, p)`; ties go to the smallest rank.
pub fn select_k_by_cv(
    d: &Dataset,
    spec: &EncoderSpec,
    folds: usize,
    learner: LearnerK,
    seed: u64,
    exec: Execution,
) -> Result<KSelection> {
    if !matches!(spec.method, Method::Lowrank | Method::Sparselowrank) {
        return Err(Error::Config(format!(
            "rank selection applies to lowrank and sparselowrank, not {}",
            spec.method
        )));
    }
    let levels = d.level_counts().iter().filter(|&&c| c > 0).count();
    let grid: Vec<usize> = (1..=levels.min(d.p())).collect();
    select_k_from_grid(d, spec, &grid, folds, learner, seed, exec)
}

pub fn select_k_from_grid(
    d: &Dataset,
    spec: &EncoderSpec,
    grid: &[usize],
    folds: usize,
    learner: LearnerK,
    seed: u64,
    exec: Execution,
) -> Result<KSelection> {
    if grid.is_empty() {
        return Err(Error::Dimension("empty rank grid".to_string()));
    }
    let specs: Vec<EncoderSpec> = grid.iter().map(|&k| spec.clone().with_k(k)).collect();
    let mse = cv_mse(d, &specs, folds, learner, seed, exec)?;
    let best = argmin_first(&mse)
        .ok_or_else(|| Error::Fit("no rank could be fitted on every fold".to_string()))?;
    Ok(KSelection {
        k: grid[best],
        grid: grid.to_vec(),
        mse,
    })
}
