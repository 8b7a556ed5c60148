//! Deterministic toy decoder: RMSNorm, causal multi-head attention, SwiGLU FFN,
//! residuals and learned additive positions. Captures Q/K per layer, counts
//! matmul FLOPs, and can drop tokens after a chosen layer.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::ecl_detector::{detect_ecl, layerwise_profile, DetectOptions, EclReport, ProfileOptions};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::tensor_io::{ActivationDump, LayerStates, ModelGeometry, Sample, StateKind};
use crate::token_scorer::{apply_mask, score_tokens, select_keep, Budget, KeepMask, TokenScores};

const RMS_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneLayer {
    /// Detected from calibration samples.
    Auto,
    Index(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrunePlan {
    pub layer: PruneLayer,
    #[serde(serialize_with = "budget_as_string")]
    pub budget: Budget,
}

fn budget_as_string<S: serde::Serializer>(b: &Budget, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub ffn: usize,
    /// Maximum sequence length (size of the position table).
    pub tokens: usize,
    pub seed: u64,
    pub prune: Option<PrunePlan>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Parameter(m));
        if self.layers == 0 || self.heads == 0 || self.hidden == 0 || self.ffn == 0 || self.tokens == 0 {
            return fail("layers, heads, hidden, ffn and tokens must all be >= 1".into());
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return fail(format!(
                "hidden {} is not divisible by {} heads",
                self.hidden, self.heads
            ));
        }
        match self.prune.map(|p| p.layer) {
            Some(PruneLayer::Auto) if self.layers < 2 => {
                fail("automatic prune layer needs at least 2 layers".into())
            }
            Some(PruneLayer::Index(k)) if k == 0 || k > self.layers => fail(format!(
                "prune layer must lie in 1..={}, got {k}",
                self.layers
            )),
            _ => Ok(()),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerWeights {
    wq: DenseMatrix,
    wk: DenseMatrix,
    wv: DenseMatrix,
    wo: DenseMatrix,
    w_gate: DenseMatrix,
    w_up: DenseMatrix,
    w_down: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimModel {
    config: SimConfig,
    positions: DenseMatrix,
    layers: Vec<LayerWeights>,
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut *rng);
            scale * z
        })
        .collect();
    DenseMatrix::from_parts(rows, cols, data)
}

/// Draws all weights from `N(0, 1/d)` with a ChaCha8 stream seeded by `cfg.seed`.
pub fn sim_init(cfg: &SimConfig) -> Result<SimModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (d, m) = (cfg.hidden, cfg.ffn);
    let scale = 1.0 / (d as f64).sqrt();
    let positions = normal_matrix(&mut rng, cfg.tokens, d, scale);
    let layers = (0..cfg.layers)
        .map(|_| LayerWeights {
            wq: normal_matrix(&mut rng, d, d, scale),
            wk: normal_matrix(&mut rng, d, d, scale),
            wv: normal_matrix(&mut rng, d, d, scale),
            wo: normal_matrix(&mut rng, d, d, scale),
            w_gate: normal_matrix(&mut rng, d, m, scale),
            w_up: normal_matrix(&mut rng, d, m, scale),
            w_down: normal_matrix(&mut rng, m, d, scale),
        })
        .collect();
    Ok(SimModel {
        config: *cfg,
        positions,
        layers,
    })
}

impl SimModel {
    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Random token embeddings, `N(0, 1)`, for driving the model.
    pub fn random_embeddings(&self, tokens: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        normal_matrix(&mut rng, tokens, self.config.hidden, 1.0)
    }
}

/// What one layer saw.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCapture {
    pub layer: usize,
    pub query: DenseMatrix,
    pub key: DenseMatrix,
    /// `2 · (product dims)` summed over this layer's matmuls.
    pub counted_macs: u64,
}

impl LayerCapture {
    pub fn tokens(&self) -> usize {
        self.query.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub layers: Vec<LayerCapture>,
    pub final_states: DenseMatrix,
    pub prune_layer: Option<usize>,
    pub keep_mask: Option<KeepMask>,
    /// Scores of the prune-layer query states, when pruning ran.
    pub scores: Option<TokenScores>,
    /// Detection result when the prune layer was chosen automatically.
    pub ecl: Option<EclReport>,
}

impl SimTrace {
    pub fn counted_macs(&self) -> u64 {
        self.layers.iter().map(|l| l.counted_macs).sum()
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            layers: self
                .layers
                .iter()
                .map(|l| LayerSummary {
                    layer: l.layer,
                    tokens: l.tokens(),
                    hidden: l.query.cols(),
                    counted_macs: l.counted_macs,
                })
                .collect(),
            final_shape: self.final_states.shape(),
            prune_layer: self.prune_layer,
            kept: self.keep_mask.as_ref().map(|m| m.kept().to_vec()),
            scores: self.scores.as_ref().map(|s| s.as_slice().to_vec()),
            counted_macs: self.counted_macs(),
            ecl: self.ecl.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSummary {
    pub layer: usize,
    pub tokens: usize,
    pub hidden: usize,
    pub counted_macs: u64,
}

/// JSON view of a [`SimTrace`] without the tensors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSummary {
    pub layers: Vec<LayerSummary>,
    pub final_shape: (usize, usize),
    pub prune_layer: Option<usize>,
    pub kept: Option<Vec<usize>>,
    pub scores: Option<Vec<f64>>,
    pub counted_macs: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ecl: Option<EclReport>,
}

/// A resolved prune step: drop tokens after `layer`, keeping `budget`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PruneStep {
    pub layer: usize,
    pub budget: usize,
}

/// Query states to use instead of the computed ones, keyed by 1-based layer.
pub type Injection = BTreeMap<usize, DenseMatrix>;

fn rms_norm(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    let d = x.cols() as f64;
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let ms = row.iter().map(|v| v * v).sum::<f64>() / d;
        let inv = 1.0 / (ms + RMS_EPS).sqrt();
        row.iter_mut().for_each(|v| *v *= inv);
    }
    out
}

fn add_in_place(x: &mut DenseMatrix, y: &DenseMatrix) {
    for i in 0..x.rows() {
        for (a, b) in x.row_mut(i).iter_mut().zip(y.row(i)) {
            *a += b;
        }
    }
}

fn silu(v: f64) -> f64 {
    v / (1.0 + (-v).exp())
}

fn check_finite(m: &DenseMatrix, layer: usize, what: &str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericOverflow {
            layer,
            what: what.to_string(),
        })
    }
}

/// Causal attention over all heads; returns the concatenated head outputs.
fn causal_attention(q: &DenseMatrix, k: &DenseMatrix, v: &DenseMatrix, heads: usize) -> DenseMatrix {
    let (n, d) = q.shape();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = DenseMatrix::zeros(n, d);
    let mut weights = vec![0.0; n];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..n {
            let qi = &q.row(i)[cols.clone()];
            let mut max = f64::NEG_INFINITY;
            for (j, w) in weights.iter_mut().enumerate().take(i + 1) {
                let kj = &k.row(j)[cols.clone()];
                *w = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                max = max.max(*w);
            }
            let mut total = 0.0;
            for w in &mut weights[..=i] {
                *w = (*w - max).exp();
                total += *w;
            }
            let out_row = &mut out.row_mut(i)[cols.clone()];
            for (j, &w) in weights[..=i].iter().enumerate() {
                let p = w / total;
                for (o, &vj) in out_row.iter_mut().zip(&v.row(j)[cols.clone()]) {
                    *o += p * vj;
                }
            }
        }
    }
    out
}

/// Matmul FLOPs of one layer at `n` tokens: `6nd² + 4n²d + 2nd² + 6nmd`.
///
/// Attention scores are counted over the full `n × n` product.
pub fn counted_layer_macs(n: usize, d: usize, m: usize) -> u64 {
    let (n, d, m) = (n as u64, d as u64, m as u64);
    6 * n * d * d + 4 * n * n * d + 2 * n * d * d + 6 * n * m * d
}

fn run_layer(
    w: &LayerWeights,
    x: &mut DenseMatrix,
    heads: usize,
    layer: usize,
    injected: Option<&DenseMatrix>,
) -> Result<LayerCapture> {
    let (n, d) = x.shape();
    let m = w.w_up.cols();
    let xn = rms_norm(x);
    let query = match injected {
        Some(q) => {
            if q.shape() != (n, d) {
                return Err(Error::Shape(format!(
                    "injected query at layer {layer} is {}x{}, expected {n}x{d}",
                    q.rows(),
                    q.cols()
                )));
            }
            q.clone()
        }
        None => xn.matmul(&w.wq)?,
    };
    let key = xn.matmul(&w.wk)?;
    let value = xn.matmul(&w.wv)?;
    check_finite(&query, layer, "query")?;
    check_finite(&key, layer, "key")?;
    let attn = causal_attention(&query, &key, &value, heads).matmul(&w.wo)?;
    check_finite(&attn, layer, "attention output")?;
    add_in_place(x, &attn);

    let xn = rms_norm(x);
    let gate = xn.matmul(&w.w_gate)?;
    let up = xn.matmul(&w.w_up)?;
    let mut hidden = gate;
    for i in 0..n {
        for (g, &u) in hidden.row_mut(i).iter_mut().zip(up.row(i)) {
            *g = silu(*g) * u;
        }
    }
    let ffn = hidden.matmul(&w.w_down)?;
    check_finite(&ffn, layer, "ffn output")?;
    add_in_place(x, &ffn);
    check_finite(x, layer, "residual stream")?;

    Ok(LayerCapture {
        layer,
        query,
        key,
        counted_macs: counted_layer_macs(n, d, m),
    })
}

/// Runs all layers on `embeddings` (plus positions). With `prune`, layer k runs on
/// every token, its query states are scored, and layers k+1..L see only the
/// kept tokens in their original order.
pub fn sim_forward(
    model: &SimModel,
    embeddings: &DenseMatrix,
    prune: Option<PruneStep>,
    inject: &Injection,
) -> Result<SimTrace> {
    let cfg = &model.config;
    let (n, d) = embeddings.shape();
    if d != cfg.hidden {
        return Err(Error::Shape(format!(
            "embeddings have width {d}, model hidden size is {}",
            cfg.hidden
        )));
    }
    if n > cfg.tokens {
        return Err(Error::Shape(format!(
            "{n} tokens exceed the position table of {}",
            cfg.tokens
        )));
    }
    if !embeddings.is_finite() {
        return Err(Error::NonFinite("embeddings".into()));
    }
    if let Some(&l) = inject.keys().find(|&&l| l == 0 || l > cfg.layers) {
        return Err(Error::Parameter(format!(
            "injection layer {l} outside 1..={}",
            cfg.layers
        )));
    }
    if let Some(p) = prune {
        if p.layer == 0 || p.layer > cfg.layers || p.budget == 0 {
            return Err(Error::Parameter(format!(
                "prune step needs layer in 1..={} and budget >= 1, got layer {} budget {}",
                cfg.layers, p.layer, p.budget
            )));
        }
    }

    let mut x = embeddings.clone();
    for i in 0..n {
        for (a, b) in x.row_mut(i).iter_mut().zip(model.positions.row(i)) {
            *a += b;
        }
    }

    let mut layers = Vec::with_capacity(cfg.layers);
    let mut keep_mask = None;
    let mut scores = None;
    for (idx, w) in model.layers.iter().enumerate() {
        let layer = idx + 1;
        let capture = run_layer(w, &mut x, cfg.heads, layer, inject.get(&layer))?;
        if let Some(p) = prune.filter(|p| p.layer == layer) {
            let s = score_tokens(&capture.query, cfg.heads)?;
            let mask = select_keep(&s, p.budget)?;
            x = apply_mask(&x, &mask)?;
            keep_mask = Some(mask);
            scores = Some(s);
        }
        layers.push(capture);
    }
    Ok(SimTrace {
        layers,
        final_states: x,
        prune_layer: prune.map(|p| p.layer),
        keep_mask,
        scores,
        ecl: None,
    })
}

/// One calibration input for automatic layer selection.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSample {
    pub id: String,
    pub embeddings: DenseMatrix,
    pub inject: Injection,
}

/// Turns each sample of `dump` into a calibration input whose query states are
/// injected at every layer.
pub fn calibration_from_dump(model: &SimModel, dump: &ActivationDump, seed: u64) -> Vec<CalibrationSample> {
    dump.samples()
        .iter()
        .enumerate()
        .map(|(s, sample)| CalibrationSample {
            id: sample.id.clone(),
            embeddings: model.random_embeddings(sample.tokens(), seed.wrapping_add(s as u64)),
            inject: sample
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| (i + 1, l.query.clone()))
                .collect(),
        })
        .collect()
}

/// Unpruned forward passes over the calibration inputs, collected as a dump.
pub fn capture_dump(model: &SimModel, calibration: &[CalibrationSample]) -> Result<ActivationDump> {
    let cfg = &model.config;
    let samples = calibration
        .iter()
        .map(|c| {
            let trace = sim_forward(model, &c.embeddings, None, &c.inject)
                .map_err(|e| e.at(format!("calibration sample {}", c.id)))?;
            Ok(Sample {
                id: c.id.clone(),
                layers: trace
                    .layers
                    .into_iter()
                    .map(|l| LayerStates {
                        query: l.query,
                        key: l.key,
                    })
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ActivationDump::new(ModelGeometry::new(cfg.layers, cfg.heads, cfg.hidden)?, samples)
}

/// Profile, detect, score, prune, continue. The layer comes from the config's
/// plan: an explicit index is used as is, `Auto` runs detection on the
/// calibration inputs' query profiles.
pub fn sim_run_pipeline(
    model: &SimModel,
    embeddings: &DenseMatrix,
    calibration: &[CalibrationSample],
    detect: &DetectOptions,
) -> Result<SimTrace> {
    let Some(plan) = model.config.prune else {
        return sim_forward(model, embeddings, None, &Injection::new());
    };
    let (layer, ecl) = match plan.layer {
        PruneLayer::Index(k) => (k, None),
        PruneLayer::Auto => {
            if calibration.is_empty() {
                return Err(Error::Parameter(
                    "automatic prune layer needs calibration samples".into(),
                ));
            }
            let dump = capture_dump(model, calibration)?;
            let profile = layerwise_profile(
                &dump,
                &ProfileOptions {
                    state: StateKind::Query,
                    topk: None,
                },
            )?;
            let report = detect_ecl(&profile, detect)?;
            (report.ecl, Some(report))
        }
    };
    let budget = plan.budget.resolve(embeddings.rows())?;
    let mut trace = sim_forward(model, embeddings, Some(PruneStep { layer, budget }), &Injection::new())?;
    trace.ecl = ecl;
    Ok(trace)
}
