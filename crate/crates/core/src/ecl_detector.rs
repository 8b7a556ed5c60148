//! Layer-wise entropy profiles and Entropy Collapse Layer detection.
//!
//! Each layer's visual-token matrix (N×d, one row per token) is reduced to the
//! von Neumann entropy of its trace-normalized covariance, computed on the
//! smaller Gram side. The collapse layer is the layer after which the
//! sample-aggregated entropy drops the most.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::matrix_entropy::{topk_entropy, von_neumann_entropy};
use crate::spectral_fastpath::small_side_spectrum;
use crate::tensor_io::{ActivationDump, LayerStates, ModelGeometry, Sample, StateKind};

/// How per-sample entropies are combined into one curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    #[default]
    Mean,
    Median,
}

impl FromStr for Aggregate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregate::Mean),
            "median" => Ok(Aggregate::Median),
            other => Err(Error::Parameter(format!(
                "aggregate must be 'mean' or 'median', got {other:?}"
            ))),
        }
    }
}

/// Drop measure between consecutive layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DropKind {
    /// `S(l) - S(l+1)`
    #[default]
    Absolute,
    /// `(S(l) - S(l+1)) / S(l)`, zero where `S(l) = 0`
    Relative,
}

impl FromStr for DropKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(DropKind::Absolute),
            "relative" => Ok(DropKind::Relative),
            other => Err(Error::Parameter(format!(
                "drop kind must be 'absolute' or 'relative', got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for DropKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropKind::Absolute => "absolute",
            DropKind::Relative => "relative",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleEntropy {
    pub sample_id: String,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerEntropy {
    /// 1-based layer index.
    pub layer: usize,
    pub mean_entropy: f64,
    pub median_entropy: f64,
    pub samples: Vec<SampleEntropy>,
}

impl LayerEntropy {
    pub fn aggregate(&self, how: Aggregate) -> f64 {
        match how {
            Aggregate::Mean => self.mean_entropy,
            Aggregate::Median => self.median_entropy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyProfile {
    pub state: StateKind,
    pub topk: Option<usize>,
    pub layers: Vec<LayerEntropy>,
    /// Degenerate token matrices that were scored as 0.
    pub warnings: Vec<String>,
}

impl EntropyProfile {
    /// One value per layer, in layer order.
    pub fn curve(&self, how: Aggregate) -> Vec<f64> {
        self.layers.iter().map(|l| l.aggregate(how)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProfileOptions {
    pub state: StateKind,
    /// Restrict each entropy to the k largest eigenvalues.
    pub topk: Option<usize>,
}

/// Entropy of one token matrix (rows are tokens); `None` if all tokens coincide.
///
/// A `topk` larger than the small-side spectrum covers all non-zero eigenvalues
/// and is treated as the full spectrum.
pub fn token_matrix_entropy(tokens: &DenseMatrix, topk: Option<usize>) -> Result<Option<f64>> {
    let Some(spectrum) = small_side_spectrum(tokens)? else {
        return Ok(None);
    };
    let h = match topk {
        Some(0) => return Err(Error::Parameter("top-k must be at least 1".into())),
        Some(k) => topk_entropy(&spectrum, k.min(spectrum.len()))?,
        None => von_neumann_entropy(&spectrum)?,
    };
    Ok(Some(h))
}

pub fn layerwise_profile(dump: &ActivationDump, opts: &ProfileOptions) -> Result<EntropyProfile> {
    let samples = dump.samples();
    if samples.is_empty() {
        return Err(Error::Parameter("activation dump has no samples".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.tokens() < 2) {
        return Err(Error::Parameter(format!(
            "sample {:?} has {} tokens; profiling needs at least 2",
            s.id,
            s.tokens()
        )));
    }
    if opts.topk == Some(0) {
        return Err(Error::Parameter("top-k must be at least 1".into()));
    }
    let layers = dump.layers();
    let jobs: Vec<(usize, usize)> = (0..layers)
        .flat_map(|l| (0..samples.len()).map(move |s| (l, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(l, s)| {
            let tokens = samples[s].layers[l].get(opts.state);
            token_matrix_entropy(tokens, opts.topk).map_err(|e| {
                e.at(format!("sample {:?}, layer {}", samples[s].id, l + 1))
            })
        })
        .collect::<Result<Vec<Option<f64>>>>()?;

    let mut warnings = Vec::new();
    let mut out = Vec::with_capacity(layers);
    for (l, chunk) in results.chunks(samples.len()).enumerate() {
        let per_sample: Vec<SampleEntropy> = chunk
            .iter()
            .zip(samples)
            .map(|(h, sample)| {
                if h.is_none() {
                    warnings.push(format!(
                        "sample {:?}, layer {}: all {} tokens identical, entropy set to 0",
                        sample.id,
                        l + 1,
                        opts.state
                    ));
                }
                SampleEntropy {
                    sample_id: sample.id.clone(),
                    entropy: h.unwrap_or(0.0),
                }
            })
            .collect();
        let values: Vec<f64> = per_sample.iter().map(|s| s.entropy).collect();
        out.push(LayerEntropy {
            layer: l + 1,
            mean_entropy: mean(&values),
            median_entropy: median(&values),
            samples: per_sample,
        });
    }
    Ok(EntropyProfile {
        state: opts.state,
        topk: opts.topk,
        layers: out,
        warnings,
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DetectOptions {
    pub min_drop: f64,
    pub drop_kind: DropKind,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EclReport {
    /// Layer after which entropy collapses; pruning applies from `ecl + 1`.
    pub ecl: usize,
    pub drop: f64,
    /// `all_drops[i]` is the drop from layer `i + 1` to `i + 2`.
    pub all_drops: Vec<f64>,
    pub min_drop_threshold: f64,
    pub drop_kind: DropKind,
    pub aggregate: Aggregate,
    /// The curve the drops were taken from.
    pub profile: Vec<f64>,
}

/// Finds the boundary with the largest drop in a per-layer entropy curve.
pub fn detect_ecl_curve(curve: &[f64], min_drop: f64, kind: DropKind) -> Result<EclReport> {
    if curve.len() < 2 {
        return Err(Error::Parameter(format!(
            "collapse detection needs at least 2 layers, got {}",
            curve.len()
        )));
    }
    if !(min_drop >= 0.0) || !min_drop.is_finite() {
        return Err(Error::Parameter(format!(
            "min drop must be finite and >= 0, got {min_drop}"
        )));
    }
    let drops: Vec<f64> = curve
        .windows(2)
        .map(|w| match kind {
            DropKind::Absolute => w[0] - w[1],
            DropKind::Relative if w[0] > 0.0 => (w[0] - w[1]) / w[0],
            DropKind::Relative => 0.0,
        })
        .collect();
    let mut best = 0;
    for (i, &d) in drops.iter().enumerate() {
        if d > drops[best] {
            best = i;
        }
    }
    let drop = drops[best];
    if drop < min_drop {
        return Err(Error::NoCollapse {
            max_drop: drop,
            threshold: min_drop,
        });
    }
    Ok(EclReport {
        ecl: best + 1,
        drop,
        all_drops: drops,
        min_drop_threshold: min_drop,
        drop_kind: kind,
        aggregate: Aggregate::Mean,
        profile: curve.to_vec(),
    })
}

pub fn detect_ecl(profile: &EntropyProfile, opts: &DetectOptions) -> Result<EclReport> {
    let mut report = detect_ecl_curve(&profile.curve(opts.aggregate), opts.min_drop, opts.drop_kind)?;
    report.aggregate = opts.aggregate;
    Ok(report)
}

/// Parameters of a synthetic dump with a planted entropy collapse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub layers: usize,
    pub tokens: usize,
    pub hidden: usize,
    pub heads: usize,
    /// Last high-rank layer (1-based).
    pub collapse_layer: usize,
    pub rank_hi: usize,
    pub rank_lo: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    pub samples: usize,
    pub seed: u64,
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Parameter(m));
        if self.layers < 2 {
            return fail(format!("need at least 2 layers, got {}", self.layers));
        }
        if self.collapse_layer < 1 || self.collapse_layer >= self.layers {
            return fail(format!(
                "collapse layer {} must lie in 1..={}",
                self.collapse_layer,
                self.layers - 1
            ));
        }
        if self.rank_lo == 0 || self.rank_lo >= self.rank_hi {
            return fail(format!(
                "need 1 <= rank_lo < rank_hi, got {} and {}",
                self.rank_lo, self.rank_hi
            ));
        }
        if self.rank_hi > self.hidden.min(self.tokens.saturating_sub(1)) {
            return fail(format!(
                "rank_hi {} exceeds min(N-1, d) = {}",
                self.rank_hi,
                self.hidden.min(self.tokens.saturating_sub(1))
            ));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return fail(format!("noise must be finite and >= 0, got {}", self.noise));
        }
        if self.samples == 0 {
            return fail("need at least one sample".into());
        }
        Ok(())
    }
}

/// Orthonormal rows spanning a random `rank`-dimensional subspace of R^dim.
fn random_basis(rng: &mut ChaCha8Rng, rank: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rank);
    while basis.len() < rank {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        // two Gram-Schmidt passes
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= dot * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// Tokens drawn isotropically from a random `rank`-dimensional subspace plus noise.
pub fn subspace_tokens(
    rng: &mut ChaCha8Rng,
    tokens: usize,
    dim: usize,
    rank: usize,
    noise: f64,
) -> DenseMatrix {
    let basis = random_basis(rng, rank, dim);
    let mut data = vec![0.0; tokens * dim];
    for row in data.chunks_exact_mut(dim) {
        for b in &basis {
            let g: f64 = StandardNormal.sample(rng);
            for (x, y) in row.iter_mut().zip(b) {
                *x += g * y;
            }
        }
        if noise > 0.0 {
            for x in row.iter_mut() {
                let e: f64 = StandardNormal.sample(rng);
                *x += noise * e;
            }
        }
    }
    DenseMatrix::from_parts(tokens, dim, data)
}

/// Builds a dump whose layers `1..=collapse_layer` are rank `rank_hi` and the rest rank `rank_lo`.
pub fn synth_collapse_dump(params: &SynthParams) -> Result<ActivationDump> {
    params.validate()?;
    let geometry = ModelGeometry::new(params.layers, params.heads, params.hidden)
        .map_err(|e| Error::Parameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut samples = Vec::with_capacity(params.samples);
    for s in 0..params.samples {
        let layers = (1..=params.layers)
            .map(|l| {
                let rank = if l <= params.collapse_layer {
                    params.rank_hi
                } else {
                    params.rank_lo
                };
                let mut draw =
                    || subspace_tokens(&mut rng, params.tokens, params.hidden, rank, params.noise);
                let query = draw();
                let key = draw();
                LayerStates { query, key }
            })
            .collect();
        samples.push(Sample {
            id: format!("synth-{s}"),
            layers,
        });
    }
    ActivationDump::new(geometry, samples)
}
