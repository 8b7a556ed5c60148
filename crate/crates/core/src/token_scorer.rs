//! Per-token matrix entropy over attention heads and budgeted token selection.
//!
//! A token of width d is split into h contiguous head slices of width d/h; the
//! slices form an h×d_h matrix whose row covariance entropy is the token score.
//! Centering over heads means at most h-1 directions survive, so scores lie in
//! `[0, ln(h-1)]`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::spectral_fastpath::entropy_fast;

/// Splits `token` into `heads` contiguous slices, one row per head.
pub fn headwise_reshape(token: &[f64], heads: usize) -> Result<DenseMatrix> {
    if heads == 0 || token.is_empty() || !token.len().is_multiple_of(heads) {
        return Err(Error::Parameter(format!(
            "token width {} is not divisible by {heads} heads",
            token.len()
        )));
    }
    DenseMatrix::from_vec(heads, token.len() / heads, token.to_vec())
}

/// Entropy score of one token; 0 when all head slices coincide.
pub fn token_entropy(token: &[f64], heads: usize) -> Result<f64> {
    if heads < 2 {
        return Err(Error::Parameter(format!(
            "token entropy needs at least 2 heads, got {heads}"
        )));
    }
    entropy_fast(&headwise_reshape(token, heads)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScores {
    scores: Vec<f64>,
}

impl TokenScores {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("token score {s}")));
        }
        Ok(Self { scores })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// `(token_index, score)` pairs in token order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.scores.iter().copied().enumerate()
    }

    /// Scores of the given tokens, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            scores: indices.iter().map(|&i| self.scores[i]).collect(),
        }
    }
}

/// Scores every row of `states`. Rows are scored independently, so the result
/// does not depend on the rayon thread count.
pub fn score_tokens(states: &DenseMatrix, heads: usize) -> Result<TokenScores> {
    if heads < 2 || !states.cols().is_multiple_of(heads) {
        return Err(Error::Parameter(format!(
            "cannot split width {} into {heads} heads (need >= 2 heads dividing the width)",
            states.cols()
        )));
    }
    let scores = (0..states.rows())
        .into_par_iter()
        .map(|i| token_entropy(states.row(i), heads))
        .collect::<Result<Vec<f64>>>()?;
    TokenScores::new(scores)
}

/// Number of tokens to keep, absolute or as a percentage of the token count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Count(usize),
    Percent(f64),
}

impl Budget {
    /// Resolves against `tokens`; percentages round half up.
    pub fn resolve(self, tokens: usize) -> Result<usize> {
        let n = match self {
            Budget::Count(n) => n,
            Budget::Percent(p) => {
                if !(p > 0.0 && p <= 100.0) {
                    return Err(Error::Parameter(format!(
                        "budget percentage must be in (0, 100], got {p}"
                    )));
                }
                (p * tokens as f64 / 100.0 + 0.5).floor() as usize
            }
        };
        if n == 0 {
            return Err(Error::Parameter(format!(
                "budget {self} keeps no tokens out of {tokens}"
            )));
        }
        Ok(n)
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Count(n) => write!(f, "{n}"),
            Budget::Percent(p) => write!(f, "{p}%"),
        }
    }
}

impl FromStr for Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parameter(format!("budget must look like `192` or `25%`, got {s:?}"));
        if let Some(p) = s.strip_suffix('%') {
            let p: f64 = p.trim().parse().map_err(|_| bad())?;
            if !(p > 0.0 && p <= 100.0) {
                return Err(bad());
            }
            Ok(Budget::Percent(p))
        } else {
            let n: usize = s.parse().map_err(|_| bad())?;
            if n == 0 {
                return Err(bad());
            }
            Ok(Budget::Count(n))
        }
    }
}

/// Retained token indices, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeepMask {
    kept: Vec<usize>,
    budget: usize,
    tokens: usize,
}

impl KeepMask {
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// Token count the mask was built for.
    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    /// True when every token is kept.
    pub fn is_identity(&self) -> bool {
        self.kept.len() == self.tokens
    }
}

/// Keeps the `budget` highest-scoring tokens; equal scores go to the lower index.
pub fn select_keep(scores: &TokenScores, budget: usize) -> Result<KeepMask> {
    if budget == 0 {
        return Err(Error::Parameter("budget must be at least 1".into()));
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores.scores[b]
            .total_cmp(&scores.scores[a])
            .then(a.cmp(&b))
    });
    order.truncate(budget.min(n));
    order.sort_unstable();
    Ok(KeepMask {
        kept: order,
        budget,
        tokens: n,
    })
}

/// Gathers the kept rows in ascending index order.
pub fn apply_mask(states: &DenseMatrix, mask: &KeepMask) -> Result<DenseMatrix> {
    if mask.tokens != states.rows() {
        return Err(Error::Shape(format!(
            "mask was built for {} tokens, states have {}",
            mask.tokens,
            states.rows()
        )));
    }
    states.select_rows(&mask.kept)
}
