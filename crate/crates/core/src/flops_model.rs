//! Analytic prefill FLOPs for a decoder layer (multi-head attention + SwiGLU FFN)
//! and the savings from dropping visual tokens after layer k.
//!
//! Counts are visual-token only: n tokens of width d, h heads, FFN width m.
//! All quantities are integers below 2^53 for realistic geometries and are
//! carried as `f64`.

use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FlopsMode {
    /// `4n²d + 24nd²`
    #[default]
    Simplified,
    /// Itemized sum, see [`LayerBreakdown`].
    Exact,
}

impl FromStr for FlopsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simplified" => Ok(FlopsMode::Simplified),
            "exact" => Ok(FlopsMode::Exact),
            other => Err(Error::Parameter(format!(
                "flops mode must be 'simplified' or 'exact', got {other:?}"
            ))),
        }
    }
}

/// Simplified per-layer cost, `4n²d + 24nd²` (FFN width folded in as m ≈ 8d/3).
pub fn layer_flops_simplified(n: u64, d: u64) -> f64 {
    let (n, d) = (n as f64, d as f64);
    4.0 * n * n * d + 24.0 * n * d * d
}

/// Itemized per-layer cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerBreakdown {
    /// Q, K, V projections: `6nd²`.
    pub qkv_projection: f64,
    /// Rotary embeddings: `6nd`.
    pub rope: f64,
    /// `QKᵀ` and the weighted sum over V: `4n²d`.
    pub attention_scores: f64,
    /// Softmax and scaling: `4n²h`.
    pub softmax: f64,
    /// Output projection: `2nd²`.
    pub output_projection: f64,
    /// Gate and up projections: `4nmd`.
    pub ffn_up_gate: f64,
    /// SwiGLU element-wise work: `2nm`.
    pub ffn_activation: f64,
    /// Down projection: `2nmd`.
    pub ffn_down: f64,
    /// Norm/residual term, `5nmd`, only when explicitly requested.
    pub norm_residual: f64,
}

impl LayerBreakdown {
    pub fn total(&self) -> f64 {
        self.qkv_projection
            + self.rope
            + self.attention_scores
            + self.softmax
            + self.output_projection
            + self.ffn_up_gate
            + self.ffn_activation
            + self.ffn_down
            + self.norm_residual
    }

    /// Matrix-multiply terms only (no RoPE, softmax, activation or norm terms).
    pub fn matmul_total(&self) -> f64 {
        self.qkv_projection
            + self.attention_scores
            + self.output_projection
            + self.ffn_up_gate
            + self.ffn_down
    }
}

/// Itemized cost `4n²d + 4n²h + 8nd² + 6nmd + 6nd + 2nm`, plus `5nmd` if `include_norm_term`.
pub fn layer_flops_exact(n: u64, d: u64, h: u64, m: u64, include_norm_term: bool) -> LayerBreakdown {
    let (n, d, h, m) = (n as f64, d as f64, h as f64, m as f64);
    LayerBreakdown {
        qkv_projection: 6.0 * n * d * d,
        rope: 6.0 * n * d,
        attention_scores: 4.0 * n * n * d,
        softmax: 4.0 * n * n * h,
        output_projection: 2.0 * n * d * d,
        ffn_up_gate: 4.0 * n * m * d,
        ffn_activation: 2.0 * n * m,
        ffn_down: 2.0 * n * m * d,
        norm_residual: if include_norm_term { 5.0 * n * m * d } else { 0.0 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlopsConfig {
    /// Visual tokens before pruning.
    pub tokens: u64,
    pub hidden: u64,
    pub heads: u64,
    pub ffn: u64,
    pub layers: u64,
    /// Layers `1..=prune_layer` see all tokens, the rest see `keep`.
    pub prune_layer: u64,
    pub keep: u64,
    pub mode: FlopsMode,
    /// Text tokens present in every layer; calibration only, normally 0.
    pub text_tokens: u64,
    pub include_norm_term: bool,
}

impl FlopsConfig {
    /// LLaVA-1.5-7B geometry: 576 visual tokens, d = 4096, 32 heads, m = 11008, 32 layers.
    pub fn llava_7b(prune_layer: u64, keep: u64) -> Self {
        Self {
            tokens: 576,
            hidden: 4096,
            heads: 32,
            ffn: 11008,
            layers: 32,
            prune_layer,
            keep,
            mode: FlopsMode::Simplified,
            text_tokens: 0,
            include_norm_term: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Parameter(m));
        if self.tokens == 0 || self.hidden == 0 || self.heads == 0 || self.ffn == 0 || self.layers == 0 {
            return fail("tokens, hidden, heads, ffn and layers must all be positive".into());
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return fail(format!(
                "hidden {} is not divisible by {} heads",
                self.hidden, self.heads
            ));
        }
        if self.prune_layer > self.layers {
            return fail(format!(
                "prune layer {} exceeds layer count {}",
                self.prune_layer, self.layers
            ));
        }
        if self.keep == 0 || self.keep > self.tokens {
            return fail(format!(
                "keep must be in 1..={}, got {}",
                self.tokens, self.keep
            ));
        }
        Ok(())
    }

    /// Pruned fraction `r = 1 - keep / n`.
    pub fn pruned_fraction(&self) -> f64 {
        (self.tokens - self.keep) as f64 / self.tokens as f64
    }

    /// Per-layer cost at `n` visual tokens under the configured mode.
    pub fn layer_cost(&self, n: u64) -> f64 {
        let n = n + self.text_tokens;
        match self.mode {
            FlopsMode::Simplified => layer_flops_simplified(n, self.hidden),
            FlopsMode::Exact => {
                layer_flops_exact(n, self.hidden, self.heads, self.ffn, self.include_norm_term).total()
            }
        }
    }
}

/// Total-FLOPs reduction ratio `R = 1 - [k F(n) + (L-k) F(n̂)] / (L F(n))`.
pub fn reduction_ratio(cfg: &FlopsConfig) -> Result<f64> {
    cfg.validate()?;
    let full = cfg.layer_cost(cfg.tokens);
    let pruned = cfg.layer_cost(cfg.keep);
    let (k, l) = (cfg.prune_layer as f64, cfg.layers as f64);
    Ok(1.0 - (k * full + (l - k) * pruned) / (l * full))
}

/// Closed-form approximation `((L - k) / L) · r`.
pub fn approx_reduction(r: f64, k: u64, layers: u64) -> f64 {
    (layers - k.min(layers)) as f64 * r / layers as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Overhead {
    /// Covariance (`2nhd`) plus eigendecomposition (`4nh³`).
    pub flops: f64,
    /// Relative to one simplified layer at the same n and d.
    pub ratio_vs_layer: f64,
}

/// Cost of scoring n tokens with the small-side Gram.
pub fn pruning_overhead(n: u64, h: u64, d: u64) -> Overhead {
    let (nf, hf, df) = (n as f64, h as f64, d as f64);
    let flops = 2.0 * nf * hf * df + 4.0 * nf * hf * hf * hf;
    Overhead {
        flops,
        ratio_vs_layer: flops / layer_flops_simplified(n, d),
    }
}

/// Comparison of the modeled remaining-FLOPs share against an externally reported one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub anchor_remaining_pct: f64,
    pub modeled_remaining_pct: f64,
    /// `anchor - modeled`, in percentage points.
    pub gap_points: f64,
    /// Text-token count in the searched range that best closes the gap.
    pub closing_text_tokens: u64,
    pub closing_remaining_pct: f64,
    pub closing_gap_points: f64,
    pub note: String,
}

/// Searches `text_tokens` over `search` for the value whose remaining share is closest to `anchor_pct`.
pub fn calibrate(
    cfg: &FlopsConfig,
    anchor_pct: f64,
    search: std::ops::RangeInclusive<u64>,
) -> Result<Calibration> {
    let modeled = 100.0 * (1.0 - reduction_ratio(cfg)?);
    let mut best: Option<(u64, f64)> = None;
    for t in search {
        let pct = 100.0 * (1.0 - reduction_ratio(&FlopsConfig { text_tokens: t, ..*cfg })?);
        if best.is_none_or(|(_, b)| (pct - anchor_pct).abs() < (b - anchor_pct).abs()) {
            best = Some((t, pct));
        }
    }
    let (t, pct) = best.ok_or_else(|| Error::Parameter("empty text-token search range".into()))?;
    Ok(Calibration {
        anchor_remaining_pct: anchor_pct,
        modeled_remaining_pct: modeled,
        gap_points: anchor_pct - modeled,
        closing_text_tokens: t,
        closing_remaining_pct: pct,
        closing_gap_points: anchor_pct - pct,
        note: format!(
            "the model counts visual tokens only; text tokens, which are never pruned, \
             raise the remaining share, and about {t} of them account for the gap"
        ),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlopsReport {
    pub config: FlopsConfig,
    pub per_layer_full: f64,
    pub per_layer_pruned: f64,
    pub total_baseline: f64,
    pub total_pruned: f64,
    pub reduction_ratio: f64,
    pub remaining_fraction: f64,
    pub approx_reduction: f64,
    pub overhead_flops: f64,
    pub overhead_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breakdown_full: Option<LayerBreakdown>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breakdown_pruned: Option<LayerBreakdown>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

pub fn flops_report(cfg: &FlopsConfig) -> Result<FlopsReport> {
    let r = reduction_ratio(cfg)?;
    let per_layer_full = cfg.layer_cost(cfg.tokens);
    let per_layer_pruned = cfg.layer_cost(cfg.keep);
    let k = cfg.prune_layer as f64;
    let overhead = pruning_overhead(cfg.tokens, cfg.heads, cfg.hidden);
    let breakdown = |n: u64| {
        (cfg.mode == FlopsMode::Exact).then(|| {
            layer_flops_exact(
                n + cfg.text_tokens,
                cfg.hidden,
                cfg.heads,
                cfg.ffn,
                cfg.include_norm_term,
            )
        })
    };
    Ok(FlopsReport {
        config: *cfg,
        per_layer_full,
        per_layer_pruned,
        total_baseline: cfg.layers as f64 * per_layer_full,
        total_pruned: k * per_layer_full + (cfg.layers as f64 - k) * per_layer_pruned,
        reduction_ratio: r,
        remaining_fraction: 1.0 - r,
        approx_reduction: approx_reduction(cfg.pruned_fraction(), cfg.prune_layer, cfg.layers),
        overhead_flops: overhead.flops,
        overhead_ratio: overhead.ratio_vs_layer,
        breakdown_full: breakdown(cfg.tokens),
        breakdown_pruned: breakdown(cfg.keep),
        calibration: None,
    })
}
