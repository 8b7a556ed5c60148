//! Command implementations behind the `entroprune` binary.

pub mod args;
pub mod bench;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use entroprune_core::ecl_detector::{
    detect_ecl, layerwise_profile, synth_collapse_dump, DetectOptions, EclReport, EntropyProfile,
    ProfileOptions, SynthParams,
};
use entroprune_core::flops_model::{calibrate, flops_report, FlopsConfig};
use entroprune_core::sim_transformer::{
    calibration_from_dump, sim_init, sim_run_pipeline, PruneLayer, PrunePlan, SimConfig,
};
use entroprune_core::tensor_io::{load_dump, write_dump, write_npy, ActivationDump, StateKind};
use entroprune_core::token_scorer::{apply_mask, score_tokens, select_keep};
use entroprune_core::{Error, ErrorClass, Result};
use serde::Serialize;

use crate::args::{
    BenchArgs, Cli, Command, DetectArgs, DetectionArgs, FlopsArgs, LayerArg, ManifestArgs,
    ProfileArgs, PruneArgs, ScoreArgs, SimulateArgs, SynthArgs,
};
use crate::bench::{run_bench, BenchParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NO_COLLAPSE: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Usage => EXIT_USAGE,
        ErrorClass::NoCollapse => EXIT_NO_COLLAPSE,
        ErrorClass::Data => EXIT_DATA,
        ErrorClass::Numeric => EXIT_NUMERIC,
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Parameter("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Profile(a) => cmd_profile(&a),
        Command::Detect(a) => cmd_detect(&a),
        Command::Score(a) => cmd_score(&a, None),
        Command::Prune(a) => cmd_prune(&a),
        Command::Flops(a) => cmd_flops(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Synth(a) => cmd_synth(&a),
    })
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| Error::io(path, e)),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    write_output(out, text.as_bytes())
}

fn detect_options(a: &DetectionArgs) -> Result<DetectOptions> {
    if !(a.min_drop >= 0.0) || !a.min_drop.is_finite() {
        return Err(Error::Parameter(format!(
            "--min-drop must be finite and >= 0, got {}",
            a.min_drop
        )));
    }
    Ok(DetectOptions {
        min_drop: a.min_drop,
        drop_kind: a.drop_kind,
        aggregate: a.aggregate,
    })
}

fn load_nonempty(input: &ManifestArgs) -> Result<ActivationDump> {
    if input.topk == Some(0) {
        return Err(Error::Parameter("--topk must be at least 1".into()));
    }
    let dump = load_dump(&input.manifest)?;
    if dump.samples().is_empty() {
        return Err(Error::Parameter(format!(
            "manifest {} lists no samples",
            input.manifest.display()
        )));
    }
    Ok(dump)
}

fn profile_of(dump: &ActivationDump, input: &ManifestArgs) -> Result<EntropyProfile> {
    let profile = layerwise_profile(
        dump,
        &ProfileOptions {
            state: input.state,
            topk: input.topk,
        },
    )?;
    for w in &profile.warnings {
        eprintln!("warning: {w}");
    }
    Ok(profile)
}

#[derive(Serialize)]
struct CsvRow<'a> {
    layer: usize,
    state: StateKind,
    mean_entropy: f64,
    sample_id: &'a str,
    entropy: f64,
}

/// CSV with one row per (layer, sample).
pub fn profile_csv(profile: &EntropyProfile) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for layer in &profile.layers {
        for s in &layer.samples {
            w.serialize(CsvRow {
                layer: layer.layer,
                state: profile.state,
                mean_entropy: layer.mean_entropy,
                sample_id: &s.sample_id,
                entropy: s.entropy,
            })
            .map_err(|e| Error::Format(format!("csv: {e}")))?;
        }
    }
    w.into_inner()
        .map_err(|e| Error::Format(format!("csv: {e}")))
}

fn cmd_profile(a: &ProfileArgs) -> Result<()> {
    let dump = load_nonempty(&a.input)?;
    write_output(a.out.as_deref(), &profile_csv(&profile_of(&dump, &a.input)?)?)
}

#[derive(Serialize)]
struct DetectOutput<'a> {
    state: StateKind,
    topk: Option<usize>,
    samples: usize,
    #[serde(flatten)]
    report: &'a EclReport,
    warnings: &'a [String],
}

fn cmd_detect(a: &DetectArgs) -> Result<()> {
    let opts = detect_options(&a.detection)?;
    let dump = load_nonempty(&a.input)?;
    let profile = profile_of(&dump, &a.input)?;
    let report = detect_ecl(&profile, &opts)?;
    write_json(
        a.out.as_deref(),
        &DetectOutput {
            state: profile.state,
            topk: profile.topk,
            samples: dump.samples().len(),
            report: &report,
            warnings: &profile.warnings,
        },
    )
}

#[derive(Serialize)]
struct SampleScores {
    id: String,
    tokens: usize,
    keep: usize,
    scores: Vec<f64>,
    kept: Vec<usize>,
}

#[derive(Serialize)]
struct ScoreOutput {
    state: StateKind,
    layer: usize,
    layer_source: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    ecl: Option<EclReport>,
    budget: String,
    samples: Vec<SampleScores>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    emitted: Vec<PathBuf>,
}

fn cmd_score(a: &ScoreArgs, emit: Option<&Path>) -> Result<()> {
    let opts = detect_options(&a.detection)?;
    let dump = load_nonempty(&a.input)?;
    let (layer, source, ecl) = match a.layer {
        LayerArg::Index(k) => {
            if k > dump.layers() {
                return Err(Error::Parameter(format!(
                    "--layer {k} exceeds the dump's {} layers",
                    dump.layers()
                )));
            }
            (k, "explicit", None)
        }
        LayerArg::Auto => {
            let report = detect_ecl(&profile_of(&dump, &a.input)?, &opts)?;
            (report.ecl, "auto", Some(report))
        }
    };
    if let Some(dir) = emit {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut samples = Vec::with_capacity(dump.samples().len());
    let mut emitted = Vec::new();
    for (s, sample) in dump.samples().iter().enumerate() {
        let states = sample.layer(layer).expect("layer validated against dump");
        let here = || format!("sample {:?}, layer {layer}", sample.id);
        let keep = a.budget.resolve(sample.tokens()).map_err(|e| e.at(here()))?;
        let scores = score_tokens(states.get(a.input.state), dump.heads()).map_err(|e| e.at(here()))?;
        let mask = select_keep(&scores, keep)?;
        if let Some(dir) = emit {
            for (kind, m) in [("query", &states.query), ("key", &states.key)] {
                let path = dir.join(format!("s{s}_l{layer}_{kind}.npy"));
                write_npy(&apply_mask(m, &mask)?, &path)?;
                emitted.push(path);
            }
        }
        samples.push(SampleScores {
            id: sample.id.clone(),
            tokens: sample.tokens(),
            keep: mask.len(),
            scores: scores.as_slice().to_vec(),
            kept: mask.kept().to_vec(),
        });
    }
    write_json(
        a.out.as_deref(),
        &ScoreOutput {
            state: a.input.state,
            layer,
            layer_source: source,
            ecl,
            budget: a.budget.to_string(),
            samples,
            emitted,
        },
    )
}

fn cmd_prune(a: &PruneArgs) -> Result<()> {
    cmd_score(&a.score, a.emit_pruned.as_deref())
}

fn cmd_flops(a: &FlopsArgs) -> Result<()> {
    let cfg = FlopsConfig {
        tokens: a.tokens,
        hidden: a.hidden,
        heads: a.heads,
        ffn: a.ffn,
        layers: a.layers,
        prune_layer: a.prune_layer,
        keep: a.keep,
        mode: a.mode,
        text_tokens: a.text_tokens,
        include_norm_term: a.include_norm_term,
    };
    let mut report = flops_report(&cfg)?;
    if let Some(anchor) = a.anchor_remaining {
        if !(0.0..=100.0).contains(&anchor) {
            return Err(Error::Parameter(format!(
                "--anchor-remaining is a percentage, got {anchor}"
            )));
        }
        report.calibration = Some(calibrate(&cfg, anchor, 0..=a.max_text_tokens)?);
    }
    write_json(a.out.as_deref(), &report)
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let report = run_bench(&BenchParams {
        head_dim: a.head_dim,
        heads: a.heads,
        tokens: a.tokens,
        iters: a.iters,
        seed: a.seed,
    })?;
    write_json(a.out.as_deref(), &report)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let detect = detect_options(&a.detection)?;
    let prune = match (a.prune_layer, a.budget) {
        (Some(layer), Some(budget)) => Some(PrunePlan {
            layer: match layer {
                LayerArg::Auto => PruneLayer::Auto,
                LayerArg::Index(k) => PruneLayer::Index(k),
            },
            budget,
        }),
        _ => None,
    };
    let cfg = SimConfig {
        layers: a.layers,
        heads: a.heads,
        hidden: a.hidden,
        ffn: a.ffn.unwrap_or((8 * a.hidden).div_ceil(3)),
        tokens: a.tokens,
        seed: a.seed,
        prune,
    };
    let model = sim_init(&cfg)?;
    let calibration = match (&a.calibration, prune.map(|p| p.layer)) {
        (Some(path), Some(PruneLayer::Auto)) => {
            let dump = load_dump(path)?;
            let g = dump.geometry();
            if (g.layers, g.heads, g.hidden) != (cfg.layers, cfg.heads, cfg.hidden) {
                return Err(Error::Shape(format!(
                    "calibration dump geometry (L={}, h={}, d={}) differs from the model (L={}, h={}, d={})",
                    g.layers, g.heads, g.hidden, cfg.layers, cfg.heads, cfg.hidden
                )));
            }
            calibration_from_dump(&model, &dump, a.input_seed.wrapping_add(1))
        }
        (None, Some(PruneLayer::Auto)) => {
            return Err(Error::Parameter(
                "--prune-layer auto needs --calibration".into(),
            ))
        }
        _ => Vec::new(),
    };
    let embeddings = model.random_embeddings(a.tokens, a.input_seed);
    let trace = sim_run_pipeline(&model, &embeddings, &calibration, &detect)?;
    if let Some(dir) = &a.emit_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for l in &trace.layers {
            write_npy(&l.query, dir.join(format!("l{}_query.npy", l.layer)))?;
            write_npy(&l.key, dir.join(format!("l{}_key.npy", l.layer)))?;
        }
        write_npy(&trace.final_states, dir.join("final.npy"))?;
    }
    write_json(a.out.as_deref(), &trace.summary())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let dump = synth_collapse_dump(&SynthParams {
        layers: a.layers,
        tokens: a.tokens,
        hidden: a.hidden,
        heads: a.heads,
        collapse_layer: a.collapse_layer,
        rank_hi: a.rank_hi,
        rank_lo: a.rank_lo,
        noise: a.noise,
        samples: a.samples,
        seed: a.seed,
    })?;
    let manifest = write_dump(&dump, &a.out)?;
    eprintln!("wrote {}", manifest.display());
    Ok(())
}
