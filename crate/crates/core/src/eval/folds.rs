//! Stratified k-fold assignment.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Fold of every row; `None` marks rows that are always in training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: usize,
    pub assignment: Vec<Option<usize>>,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == Some(fold))
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != Some(fold))
            .collect()
    }

    pub fn train_only_rows(&self) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i].is_none())
            .collect()
    }
}

/// Rows of each category are shuffled and dealt round-robin, the dealing
/// position carrying over from one category to the next so fold sizes stay
/// within one row of each other. Categories with fewer rows than folds never
/// enter a test fold.
pub fn stratified_kfold(g: &[usize], folds: usize, rng: &mut Rng) -> Result<FoldPlan> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    let levels = g.iter().max().map_or(0, |&m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); levels];
    for (i, &gi) in g.iter().enumerate() {
        members[gi].push(i);
    }
    let mut assignment = vec![None; g.len()];
    let mut next = 0usize;
    let mut small = 0usize;
    for rows in members.iter_mut() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < folds {
            small += 1;
            continue;
        }
        rows.shuffle(rng);
        for &r in rows.iter() {
            assignment[r] = Some(next % folds);
            next += 1;
        }
    }
    if small > 0 {
        log::warn!("{small} categories have fewer rows than folds and stay in training only");
    }
    Ok(FoldPlan { folds, assignment })
}
