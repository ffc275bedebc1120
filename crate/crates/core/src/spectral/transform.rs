use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::EigenBasis;
use crate::error::Error;

/// Post-transform applied to the eigenvector matrix before it joins the
/// node features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FMode {
    #[default]
    Identity,
    /// Entrywise absolute value; removes the sign ambiguity of eigenvectors.
    Abs,
    /// Divides the whole matrix by its Frobenius norm.
    FrobeniusNorm,
}

impl std::fmt::Display for FMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FMode::Identity => "identity",
            FMode::Abs => "abs",
            FMode::FrobeniusNorm => "frobenius_norm",
        })
    }
}

impl std::str::FromStr for FMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "identity" => Ok(FMode::Identity),
            "abs" => Ok(FMode::Abs),
            "frobenius_norm" | "frobenius" => Ok(FMode::FrobeniusNorm),
            _ => Err(Error::Config(format!("unknown f mode {s:?}"))),
        }
    }
}

pub fn apply_f(basis: &EigenBasis, mode: FMode) -> Array2<f64> {
    let q = &basis.vectors;
    match mode {
        FMode::Identity => q.clone(),
        FMode::Abs => q.mapv(f64::abs),
        FMode::FrobeniusNorm => {
            let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                q / norm
            } else {
                q.clone()
            }
        }
    }
}
