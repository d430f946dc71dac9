//! Brute-force k-nearest-neighbour regression on z-scored features.
//!
//! Features are standardized with training statistics; constant training
//! columns contribute nothing. Neighbours are ranked by squared Euclidean
//! distance, ties going to the lower training index, and the prediction is
//! the mean response of the `k` nearest training rows.
//!
//! [`PreparedFold`] splits the distance into a covariate part, computed once
//! per train/test split, and a category part that only depends on the pair of
//! codes, so many encoders can be scored against the same split cheaply.

use std::cmp::Ordering;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::par::Execution;

/// Column means and inverse standard deviations (0 for constant columns).
fn column_scaling(
    cols: usize,
    rows: usize,
    value: impl Fn(usize, usize) -> f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rows as f64;
    let mut mean = vec![0.0; cols];
    let mut inv_sd = vec![0.0; cols];
    for j in 0..cols {
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for i in 0..rows {
            let v = value(i, j);
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
        }
        mean[j] = sum / n;
        if hi > lo {
            let var = (0..rows)
                .map(|i| (value(i, j) - mean[j]).powi(2))
                .sum::<f64>()
                / n;
            inv_sd[j] = 1.0 / var.sqrt();
        }
    }
    (mean, inv_sd)
}

fn standardized_rows(x: &DMatrix<f64>, mean: &[f64], inv_sd: &[f64]) -> Vec<f64> {
    let (n, p) = x.shape();
    let mut out = vec![0.0; n * p];
    for i in 0..n {
        for j in 0..p {
            out[i * p + j] = (x[(i, j)] - mean[j]) * inv_sd[j];
        }
    }
    out
}

#[derive(Clone, Copy)]
struct Neighbor {
    dist: f64,
    idx: usize,
}

impl PartialEq for Neighbor {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.idx.cmp(&other.idx))
    }
}

/// Mean response of the `k` smallest `(distance, index)` pairs.
fn nearest_mean(k: usize, y: &[f64], dist: impl Iterator<Item = f64>) -> f64 {
    let mut all: Vec<Neighbor> = dist
        .enumerate()
        .map(|(idx, dist)| Neighbor { dist, idx })
        .collect();
    let k = k.min(all.len());
    if k < all.len() {
        all.select_nth_unstable(k - 1);
    }
    let mut chosen = all[..k].to_vec();
    chosen.sort_unstable();
    chosen.iter().map(|nb| y[nb.idx]).sum::<f64>() / k as f64
}

fn clip_k(k: usize, n_train: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::Config("k-NN needs k >= 1".to_string()));
    }
    if k > n_train {
        log::warn!("k-NN k={k} exceeds the {n_train} training rows; using {n_train}");
        return Ok(n_train);
    }
    Ok(k)
}

/// Category codes for one split: `table` holds one feature row per code,
/// `train` and `test` give each row's code.
#[derive(Debug, Clone, Copy)]
pub struct CodedFeatures<'a> {
    pub table: &'a DMatrix<f64>,
    pub train: &'a [usize],
    pub test: &'a [usize],
}

/// Covariate distances of one train/test split.
#[derive(Debug, Clone)]
pub struct PreparedFold {
    n_train: usize,
    n_test: usize,
    /// Row-major n_test × n_train squared distances.
    base: Vec<f64>,
    train_y: Vec<f64>,
}

impl PreparedFold {
    pub fn new(
        train_x: &DMatrix<f64>,
        train_y: &[f64],
        test_x: &DMatrix<f64>,
        exec: Execution,
    ) -> Result<Self> {
        let (n_train, p) = train_x.shape();
        if n_train == 0 {
            return Err(Error::Empty("k-NN training set is empty".to_string()));
        }
        if train_y.len() != n_train {
            return Err(Error::Dimension(format!(
                "{} responses for {n_train} training rows",
                train_y.len()
            )));
        }
        if test_x.ncols() != p {
            return Err(Error::Dimension(format!(
                "test rows have {} features, training rows {p}",
                test_x.ncols()
            )));
        }
        let (mean, inv_sd) = column_scaling(p, n_train, |i, j| train_x[(i, j)]);
        let zr = standardized_rows(train_x, &mean, &inv_sd);
        let zt = standardized_rows(test_x, &mean, &inv_sd);
        let n_test = test_x.nrows();
        let rows = exec.map_range(n_test, |i| {
            let q = &zt[i * p..(i + 1) * p];
            (0..n_train)
                .map(|j| {
                    let r = &zr[j * p..(j + 1) * p];
                    q.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                })
                .collect::<Vec<f64>>()
        });
        Ok(PreparedFold {
            n_train,
            n_test,
            base: rows.concat(),
            train_y: train_y.to_vec(),
        })
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn n_test(&self) -> usize {
        self.n_test
    }

    /// Predictions from the covariates alone.
    pub fn predict(&self, k: usize, exec: Execution) -> Result<Vec<f64>> {
        let k = clip_k(k, self.n_train)?;
        let n = self.n_train;
        Ok(exec.map_range(self.n_test, |i| {
            nearest_mean(
                k,
                &self.train_y,
                self.base[i * n..(i + 1) * n].iter().cloned(),
            )
        }))
    }

    /// Predictions with the category features appended to the covariates.
    pub fn predict_coded(
        &self,
        coded: CodedFeatures<'_>,
        k: usize,
        exec: Execution,
    ) -> Result<Vec<f64>> {
        let k = clip_k(k, self.n_train)?;
        let table = coded.table;
        let (codes, dim) = table.shape();
        if coded.train.len() != self.n_train || coded.test.len() != self.n_test {
            return Err(Error::Dimension(
                "code vectors do not match the split".to_string(),
            ));
        }
        if let Some(&bad) = coded.train.iter().chain(coded.test).find(|&&c| c >= codes) {
            return Err(Error::Bounds {
                index: bad,
                len: codes,
            });
        }
        // training statistics of the encoded columns, from code counts
        let mut counts = vec![0usize; codes];
        coded.train.iter().for_each(|&c| counts[c] += 1);
        let present: Vec<usize> = (0..codes).filter(|&c| counts[c] > 0).collect();
        let n = self.n_train as f64;
        let mut z = table.clone();
        for j in 0..dim {
            let lo = present
                .iter()
                .map(|&c| table[(c, j)])
                .fold(f64::INFINITY, f64::min);
            let hi = present
                .iter()
                .map(|&c| table[(c, j)])
                .fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                let mean = present
                    .iter()
                    .map(|&c| counts[c] as f64 * table[(c, j)])
                    .sum::<f64>()
                    / n;
                let var = present
                    .iter()
                    .map(|&c| counts[c] as f64 * (table[(c, j)] - mean).powi(2))
                    .sum::<f64>()
                    / n;
                let inv = 1.0 / var.sqrt();
                for c in 0..codes {
                    z[(c, j)] = (table[(c, j)] - mean) * inv;
                }
            } else {
                z.column_mut(j).fill(0.0);
            }
        }
        let mut pair = vec![0.0; codes * codes];
        for a in 0..codes {
            for b in 0..codes {
                pair[a * codes + b] = (0..dim).map(|j| (z[(a, j)] - z[(b, j)]).powi(2)).sum();
            }
        }
        let nt = self.n_train;
        Ok(exec.map_range(self.n_test, |i| {
            let row = &pair[coded.test[i] * codes..(coded.test[i] + 1) * codes];
            let base = &self.base[i * nt..(i + 1) * nt];
            let dist = base.iter().zip(coded.train).map(|(b, &c)| b + row[c]);
            nearest_mean(k, &self.train_y, dist)
        }))
    }
}

/// k-NN regression of `train_y` on `train_x`, predicted at `test_x`.
/// `k` larger than the training set is clipped with a warning.
pub fn knn_regress(
    train_x: &DMatrix<f64>,
    train_y: &[f64],
    test_x: &DMatrix<f64>,
    k: usize,
    exec: Execution,
) -> Result<Vec<f64>> {
    PreparedFold::new(train_x, train_y, test_x, exec)?.predict(k, exec)
}

/// `round(√n)`, at least 1.
pub fn sqrt_k(n_train: usize) -> usize {
    ((n_train as f64).sqrt().round() as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0))
    }

    /// Sort every training row by (distance, index) and average the first k.
    fn sort_oracle(train: &DMatrix<f64>, y: &[f64], test: &DMatrix<f64>, k: usize) -> Vec<f64> {
        let (n, p) = train.shape();
        let mut mean = vec![0.0; p];
        let mut sd = vec![0.0; p];
        for j in 0..p {
            mean[j] = train.column(j).iter().sum::<f64>() / n as f64;
            sd[j] = (train
                .column(j)
                .iter()
                .map(|v| (v - mean[j]).powi(2))
                .sum::<f64>()
                / n as f64)
                .sqrt();
        }
        let z = |m: &DMatrix<f64>, i: usize, j: usize| {
            if sd[j] > 0.0 {
                (m[(i, j)] - mean[j]) / sd[j]
            } else {
                0.0
            }
        };
        (0..test.nrows())
            .map(|i| {
                let mut d: Vec<(f64, usize)> = (0..n)
                    .map(|r| {
                        (
                            (0..p)
                                .map(|j| (z(test, i, j) - z(train, r, j)).powi(2))
                                .sum(),
                            r,
                        )
                    })
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d[..k].iter().map(|&(_, r)| y[r]).sum::<f64>() / k as f64
            })
            .collect()
    }

    #[test]
    fn matches_sort_oracle() {
        let train = random(30, 3, 1);
        let test = random(12, 3, 2);
        let y: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let got = knn_regress(&train, &y, &test, 5, Execution::Sequential).unwrap();
        let want = sort_oracle(&train, &y, &test, 5);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn trivial_cases() {
        let train = DMatrix::from_row_slice(3, 1, &[0.0, 5.0, 10.0]);
        let y = [1.0, 2.0, 3.0];
        let test = DMatrix::from_row_slice(1, 1, &[5.0]);
        assert_eq!(
            knn_regress(&train, &y, &test, 1, Execution::Sequential).unwrap(),
            vec![2.0]
        );
        let flat = [4.0; 3];
        let test = random(5, 1, 3);
        let got = knn_regress(&train, &flat, &test, 2, Execution::Sequential).unwrap();
        assert!(got.iter().all(|&v| v == 4.0));
        // clipped k averages everything
        let got = knn_regress(&train, &y, &test, 99, Execution::Sequential).unwrap();
        assert!(got.iter().all(|&v| (v - 2.0).abs() <= 1e-15));
        assert!(matches!(
            knn_regress(&train, &y, &test, 0, Execution::Sequential),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn distance_ties_go_to_lower_index() {
        let train = DMatrix::from_row_slice(4, 1, &[-1.0, 1.0, 1.0, -1.0]);
        let y = [10.0, 20.0, 30.0, 40.0];
        let test = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert_eq!(
            knn_regress(&train, &y, &test, 1, Execution::Sequential).unwrap(),
            vec![10.0]
        );
        assert_eq!(
            knn_regress(&train, &y, &test, 2, Execution::Sequential).unwrap(),
            vec![15.0]
        );
    }

    #[test]
    fn affine_rescaling_invariance() {
        let train = random(40, 3, 4);
        let test = random(10, 3, 5);
        let y: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let base = knn_regress(&train, &y, &test, 4, Execution::Sequential).unwrap();
        let mut t2 = train.clone();
        let mut s2 = test.clone();
        t2.column_mut(1)
            .iter_mut()
            .for_each(|v| *v = 7.5 * *v - 3.0);
        s2.column_mut(1)
            .iter_mut()
            .for_each(|v| *v = 7.5 * *v - 3.0);
        let scaled = knn_regress(&t2, &y, &s2, 4, Execution::Sequential).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn coded_path_matches_dense_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (nr, nt, p, codes) = (60, 20, 2, 6);
        let train_x = random(nr, p, 6);
        let test_x = random(nt, p, 7);
        let y: Vec<f64> = (0..nr).map(|_| rng.random_range(0.0..1.0)).collect();
        let table = random(codes, 3, 8);
        let train_c: Vec<usize> = (0..nr).map(|_| rng.random_range(0..codes - 1)).collect();
        // last code never appears in training
        let test_c: Vec<usize> = (0..nt).map(|_| rng.random_range(0..codes)).collect();
        let dense = |x: &DMatrix<f64>, c: &[usize]| {
            DMatrix::from_fn(x.nrows(), p + 3, |i, j| {
                if j < p {
                    x[(i, j)]
                } else {
                    table[(c[i], j - p)]
                }
            })
        };
        let want = knn_regress(
            &dense(&train_x, &train_c),
            &y,
            &dense(&test_x, &test_c),
            5,
            Execution::Sequential,
        )
        .unwrap();
        let fold = PreparedFold::new(&train_x, &y, &test_x, Execution::Sequential).unwrap();
        let coded = CodedFeatures {
            table: &table,
            train: &train_c,
            test: &test_c,
        };
        let got = fold.predict_coded(coded, 5, Execution::Sequential).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12, "{a} {b}");
        }
        let par = fold.predict_coded(coded, 5, Execution::Parallel).unwrap();
        assert_eq!(par, got);
    }

    #[test]
    fn sqrt_rule() {
        assert_eq!(sqrt_k(3750), 61);
        assert_eq!(sqrt_k(0), 1);
    }
}
