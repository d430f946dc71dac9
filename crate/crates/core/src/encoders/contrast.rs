//! Fixed contrast tables: one-hot (dummy), deviation, difference, Helmert
//! and repeated-effect coding. Each is an M×(M−1) table, one row per level.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContrastScheme {
    Onehot,
    Deviation,
    Difference,
    Helmert,
    Repeated,
}

impl ContrastScheme {
    pub const ALL: [ContrastScheme; 5] = [
        ContrastScheme::Onehot,
        ContrastScheme::Deviation,
        ContrastScheme::Difference,
        ContrastScheme::Helmert,
        ContrastScheme::Repeated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ContrastScheme::Onehot => "onehot",
            ContrastScheme::Deviation => "deviation",
            ContrastScheme::Difference => "difference",
            ContrastScheme::Helmert => "helmert",
            ContrastScheme::Repeated => "repeated",
        }
    }
}

impl fmt::Display for ContrastScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContrastScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ContrastScheme::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown contrast scheme '{s}'")))
    }
}

/// The M×(M−1) contrast table; row `g` is the code of level `g`.
pub fn contrast_encode(scheme: ContrastScheme, m: usize) -> Result<DMatrix<f64>> {
    if m < 2 {
        return Err(Error::Dimension(format!(
            "{scheme} coding needs at least 2 levels, got {m}"
        )));
    }
    let mf = m as f64;
    let table = DMatrix::from_fn(m, m - 1, |row, col| match scheme {
        ContrastScheme::Onehot => {
            if row == col + 1 {
                1.0
            } else {
                0.0
            }
        }
        ContrastScheme::Deviation => {
            if row == m - 1 {
                -1.0
            } else if row == col {
                1.0
            } else {
                0.0
            }
        }
        // column c compares level c+1 with the mean of levels 0..=c
        ContrastScheme::Difference => {
            let c = col as f64;
            if row <= col {
                -1.0 / (c + 2.0)
            } else if row == col + 1 {
                (c + 1.0) / (c + 2.0)
            } else {
                0.0
            }
        }
        // column c compares level c with the mean of the levels after it
        ContrastScheme::Helmert => {
            let rest = (m - col) as f64;
            if row == col {
                (rest - 1.0) / rest
            } else if row > col {
                -1.0 / rest
            } else {
                0.0
            }
        }
        ContrastScheme::Repeated => {
            let c = col as f64;
            if row <= col {
                (mf - c - 1.0) / mf
            } else {
                -(c + 1.0) / mf
            }
        }
    });
    Ok(table)
}
