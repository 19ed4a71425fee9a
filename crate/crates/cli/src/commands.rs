//! Subcommand implementations: load inputs, orchestrate the library,
//! write outputs. All fallible paths route through `CliError` so `main`
//! can map them to exit codes.

use std::io::{BufRead, Write as _};
use std::path::{Path, PathBuf};

use clap::Args;

use facekit_core::io::{self as fio, EmotionRecord};
use facekit_core::{
    aggregate_window, apply_channel_offsets, apply_strength, bilabial_score, build_face_mask,
    expressiveness, fourier_jitter, frechet_distance, lip_gap, plan_windows, solve_sequence,
    temporal_smooth, AnimationSequence, BlendshapeModel, EmotionProbs, EmotionTrack, FaceMask,
    JawTarget, LipVertexPairs, Mesh, MetricReport, OnlineSmoother, VertexSelector, WindowConfig,
};

use crate::config::{EmotionSection, MetricsSection, PipelineConfig};
use crate::CliError;

/// Loads the pipeline config, or stock defaults when no path was given.
fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => Ok(fio::read_json(p)?),
    }
}

/// Where a config-driven value came from, for error messages.
fn config_origin(path: Option<&Path>) -> String {
    path.map(|p| p.display().to_string())
        .unwrap_or_else(|| "config defaults".into())
}

/// Builds the lip pairing from the metrics config section, if declared.
fn lip_pairs(section: &MetricsSection, origin: &str) -> Result<Option<LipVertexPairs>, CliError> {
    match &section.lip_pairs {
        None => Ok(None),
        Some(pairs) => LipVertexPairs::new(
            pairs.clone(),
            section.central_pair,
            section.closure_threshold,
        )
        .map(Some)
        .map_err(|e| CliError::Parse(format!("{origin}: {e}"))),
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Blendshape model file (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Vertex animation to fit (JSON, deltas or absolute positions).
    #[arg(long)]
    pub animation: PathBuf,
    /// Pipeline config file (JSON); flags win where both speak.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output weight track file.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON array of weights the first frame's temporal term pulls toward.
    #[arg(long)]
    pub warm_start: Option<PathBuf>,
}

fn load_warm_start(path: &Path, shape_count: usize) -> Result<Vec<f64>, CliError> {
    let weights: Vec<f64> = fio::read_json(path)?;
    for (i, w) in weights.iter().enumerate() {
        if !(w.is_finite() && (0.0..=1.0).contains(w)) {
            return Err(CliError::Parse(format!(
                "invalid data in {}: warm-start weight {i} is {w}, expected a value in [0, 1]",
                path.display()
            )));
        }
    }
    if weights.len() != shape_count {
        return Err(CliError::Shape(format!(
            "warm start {}: expected {shape_count} weights to match the model, got {}",
            path.display(),
            weights.len()
        )));
    }
    Ok(weights)
}

pub fn run_solve(args: &SolveArgs) -> Result<(), CliError> {
    let model = fio::load_model(&args.model)?.model;
    let animation = fio::load_animation(&args.animation)?;
    let config = load_config(args.config.as_deref())?;
    let origin = config_origin(args.config.as_deref());

    let selector = match (&config.solve.sample_vertices, &config.solve.sample_weights) {
        (None, None) => VertexSelector::all(model.vertex_count()),
        (Some(idx), None) => VertexSelector::new(idx.clone())
            .map_err(|e| CliError::Parse(format!("{origin}: {e}")))?,
        (Some(idx), Some(w)) => VertexSelector::with_weights(idx.clone(), w.clone())
            .map_err(|e| CliError::Parse(format!("{origin}: {e}")))?,
        (None, Some(_)) => {
            return Err(CliError::Parse(format!(
                "{origin}: sample_weights requires sample_vertices"
            )))
        }
    };
    if let Some(&max) = selector.indices().iter().max() {
        if max >= model.vertex_count() {
            return Err(CliError::Shape(format!(
                "sample vertex {max} out of range ({} vertices in the model)",
                model.vertex_count()
            )));
        }
    }

    let warm = match &args.warm_start {
        Some(path) => Some(load_warm_start(path, model.shape_count())?),
        None => None,
    };

    // The jaw term needs per-frame targets: the reference vertex's motion
    // and the current lip opening. Only worth building when the term is
    // on, the model declares jaw shapes, and the config names lip pairs.
    let pairs = lip_pairs(&config.metrics, &origin)?;
    let jaw_targets = match &pairs {
        Some(pairs)
            if config.solve.solver.lambda_jaw_base > 0.0
                && !model.jaw_shape_indices().is_empty() =>
        {
            let jref = model.jaw_reference_vertex();
            let mut targets = Vec::with_capacity(animation.frames.len());
            for t in 0..animation.frames.len() {
                let delta = animation.frame_delta(t, model.neutral())?;
                let positions = animation.frame_positions(t, model.neutral())?;
                let (_, central_gap) = lip_gap(&positions, pairs)?;
                targets.push(JawTarget {
                    d_jaw: [delta[3 * jref], delta[3 * jref + 1], delta[3 * jref + 2]],
                    lip_gap: central_gap,
                });
            }
            Some(targets)
        }
        _ => None,
    };

    let result = solve_sequence(
        &model,
        &selector,
        &animation,
        jaw_targets.as_deref(),
        warm.as_deref(),
        &config.solve.solver,
    )?;

    let mut max_kkt = 0.0f64;
    for d in &result.diagnostics {
        let last = d.pass2.as_ref().unwrap_or(&d.pass1);
        max_kkt = max_kkt.max(last.kkt_residual);
        match &d.pass2 {
            None => println!(
                "frame {}: kkt {:.3e} in {} sweeps",
                d.frame, d.pass1.kkt_residual, d.pass1.iterations
            ),
            Some(p2) => println!(
                "frame {}: kkt {:.3e} in {} + {} sweeps (cancel re-solve)",
                d.frame, p2.kkt_residual, d.pass1.iterations, p2.iterations
            ),
        }
    }
    fio::save_weight_track(&args.out, &result.track)?;
    println!(
        "solved {} frames, max kkt {:.3e}, wrote {}",
        result.diagnostics.len(),
        max_kkt,
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct PostprocessArgs {
    /// Animation to clean up (JSON, deltas or absolute positions).
    #[arg(long)]
    pub animation: PathBuf,
    /// Post-processing parameter file (JSON).
    #[arg(long)]
    pub params: PathBuf,
    /// Output animation file.
    #[arg(long)]
    pub out: PathBuf,
    /// Model whose neutral mesh anchors deltas and the face mask;
    /// optional when the animation itself provides positions.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Auxiliary channel file (jaw, tongue, eyes) to adjust alongside.
    #[arg(long, requires = "channels_out")]
    pub channels: Option<PathBuf>,
    /// Output path for the adjusted auxiliary channels.
    #[arg(long, requires = "channels")]
    pub channels_out: Option<PathBuf>,
}

pub fn run_postprocess(args: &PostprocessArgs) -> Result<(), CliError> {
    let params = fio::load_params(&args.params)?;
    let animation = fio::load_animation(&args.animation)?;
    let model = match &args.model {
        Some(path) => Some(fio::load_model(path)?.model),
        None => None,
    };

    // Reference mesh the deltas and face mask are taken against: the
    // model's neutral when given, else frame 0 of a position animation.
    let neutral: Option<Mesh> = match (&model, animation.is_delta) {
        (Some(m), _) => Some(m.neutral().clone()),
        (None, false) => Some(Mesh::new(animation.frames[0].clone())?),
        (None, true) => None,
    };

    let mask = match &neutral {
        Some(n) => build_face_mask(n, params.face_mask_level, params.face_mask_softness)?,
        None => {
            let split = params.upper_face_strength != params.lower_face_strength
                || params.upper_face_smoothing != params.lower_face_smoothing;
            if split {
                return Err(CliError::Shape(
                    "distinct upper/lower face parameters need a model (or a position \
                     animation) to locate the face mask"
                        .into(),
                ));
            }
            // With equal upper/lower settings the mask value cancels out.
            FaceMask::uniform(0.5, animation.frames[0].len() / 3)?
        }
    };

    let mut deltas = Vec::with_capacity(animation.frames.len());
    for t in 0..animation.frames.len() {
        let d = match &neutral {
            Some(n) => animation.frame_delta(t, n)?,
            None => animation.frames[t].clone(),
        };
        deltas.push(apply_strength(&d, &mask, &params)?);
    }
    let smoothed = temporal_smooth(
        &deltas,
        &mask,
        params.upper_face_smoothing,
        params.lower_face_smoothing,
    )?;

    let frames: Vec<Vec<f64>> = if animation.is_delta {
        smoothed
    } else {
        let n = &neutral
            .as_ref()
            .expect("position input always has a reference mesh")
            .positions;
        smoothed
            .into_iter()
            .map(|d| d.iter().zip(n).map(|(dv, nv)| nv + dv).collect())
            .collect()
    };
    let out_animation = AnimationSequence::new(animation.frame_rate, animation.is_delta, frames)?;
    fio::save_animation(&args.out, &out_animation)?;
    println!(
        "post-processed {} frames, wrote {}",
        out_animation.frames.len(),
        args.out.display()
    );

    if let (Some(channels_path), Some(channels_out)) = (&args.channels, &args.channels_out) {
        let channels = fio::load_aux_channels(channels_path)?;
        let adjusted = apply_channel_offsets(&channels, &params)?;
        fio::save_aux_channels(channels_out, &adjusted)?;
        println!(
            "adjusted {} channel frames, wrote {}",
            adjusted.frame_count(),
            channels_out.display()
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Animation to score (JSON, deltas or absolute positions).
    #[arg(long)]
    pub animation: PathBuf,
    /// Reference animation for the trajectory distance.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Blendshape model file; supplies the neutral mesh and any
    /// expressiveness features.
    #[arg(long)]
    pub model: PathBuf,
    /// Phoneme alignment file enabling the bilabial closure score.
    #[arg(long)]
    pub alignment: Option<PathBuf>,
    /// Pipeline config file (JSON); flags win where both speak.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output metric report file.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-frame lip-gap CSV path; defaults to the report path with a
    /// .lipgap.csv extension when lip pairs are configured.
    #[arg(long)]
    pub lipgap_csv: Option<PathBuf>,
    /// Jitter cutoff frequency (Hz), overriding the config.
    #[arg(long)]
    pub cutoff_hz: Option<f64>,
    /// Frame rate override (Hz) for the scored animation.
    #[arg(long)]
    pub frame_rate: Option<f64>,
}

fn all_positions(
    animation: &AnimationSequence,
    model: &BlendshapeModel,
) -> Result<Vec<Vec<f64>>, CliError> {
    let mut out = Vec::with_capacity(animation.frames.len());
    for t in 0..animation.frames.len() {
        out.push(animation.frame_positions(t, model.neutral())?);
    }
    Ok(out)
}

pub fn run_metrics(args: &MetricsArgs) -> Result<(), CliError> {
    let loaded = fio::load_model(&args.model)?;
    let model = loaded.model;
    let mut pred = fio::load_animation(&args.animation)?;
    if let Some(rate) = args.frame_rate {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(CliError::Parse(format!(
                "--frame-rate must be positive, got {rate}"
            )));
        }
        pred.frame_rate = rate;
    }
    let config = load_config(args.config.as_deref())?;
    let origin = config_origin(args.config.as_deref());
    let cutoff = args.cutoff_hz.unwrap_or(config.metrics.cutoff_hz);
    let pairs = lip_pairs(&config.metrics, &origin)?;

    let pred_positions = all_positions(&pred, &model)?;

    let mut report = MetricReport {
        fourier_jitter: Some(fourier_jitter(&pred_positions, pred.frame_rate, cutoff)?),
        ..MetricReport::default()
    };

    if let Some(gt_path) = &args.gt {
        let gt = fio::load_animation(gt_path)?;
        let gt_positions = all_positions(&gt, &model)?;
        report.frechet_distance = Some(frechet_distance(&pred_positions, &gt_positions)?);
    }

    if let Some(alignment_path) = &args.alignment {
        let intervals = fio::load_alignment(alignment_path)?;
        let pairs = pairs.as_ref().ok_or_else(|| {
            CliError::Shape("bilabial scoring needs lip_pairs in the config".into())
        })?;
        let scored = bilabial_score(&pred_positions, pred.frame_rate, pairs, &intervals)?;
        report.bilabial_score = scored.score;
    }

    if !loaded.features.is_empty() {
        report.expressiveness = Some(expressiveness(
            &pred_positions,
            model.neutral(),
            &loaded.features,
        )?);
    }

    if let Some(pairs) = &pairs {
        let mut gaps = Vec::with_capacity(pred_positions.len());
        for frame in &pred_positions {
            gaps.push(lip_gap(frame, pairs)?.0);
        }
        let csv_path = args
            .lipgap_csv
            .clone()
            .unwrap_or_else(|| args.out.with_extension("lipgap.csv"));
        fio::write_lip_gap_csv(&csv_path, pred.frame_rate, &gaps)?;
        println!("wrote lip-gap trace {}", csv_path.display());
    } else if args.lipgap_csv.is_some() {
        return Err(CliError::Shape(
            "the lip-gap CSV needs lip_pairs in the config".into(),
        ));
    }

    fio::save_metric_report(&args.out, &report)?;
    for (name, value) in [
        ("fourier_jitter", report.fourier_jitter),
        ("frechet_distance", report.frechet_distance),
        ("bilabial_score", report.bilabial_score),
        ("expressiveness", report.expressiveness),
    ] {
        if let Some(v) = value {
            println!("{name}: {v}");
        }
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum EmotionMode {
    /// Aggregate a whole clip's records into a keyframed track.
    Offline,
    /// Smooth a JSON-lines record stream from stdin to stdout.
    Online,
}

#[derive(Debug, Args)]
pub struct EmotionArgs {
    /// Classifier output records (JSON array); offline mode only.
    #[arg(long, required_if_eq("mode", "offline"))]
    pub probs: Option<PathBuf>,
    /// Processing mode.
    #[arg(long, value_enum)]
    pub mode: EmotionMode,
    /// Pipeline config file (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output emotion track file; offline mode only.
    #[arg(long, required_if_eq("mode", "offline"))]
    pub out: Option<PathBuf>,
}

/// A record's anchor in seconds; window-indexed records resolve to the
/// nominal center of that analysis window.
fn record_time(record: &EmotionRecord, windows: &WindowConfig) -> f64 {
    match record.time {
        Some(t) => t,
        None => {
            let k = record
                .window
                .expect("validated records carry a time or a window index");
            k as f64 * windows.stride + windows.window_size / 2.0
        }
    }
}

pub fn run_emotion(args: &EmotionArgs) -> Result<(), CliError> {
    let config = load_config(args.config.as_deref())?;
    let origin = config_origin(args.config.as_deref());
    match args.mode {
        EmotionMode::Offline => run_emotion_offline(args, &config.emotion),
        EmotionMode::Online => run_emotion_online(args, &config.emotion, &origin),
    }
}

fn run_emotion_offline(args: &EmotionArgs, section: &EmotionSection) -> Result<(), CliError> {
    let probs_path = args
        .probs
        .as_ref()
        .expect("clap enforces --probs in offline mode");
    let out_path = args
        .out
        .as_ref()
        .expect("clap enforces --out in offline mode");

    let records = fio::load_emotion_records(probs_path)?;
    if records.is_empty() {
        return Err(CliError::Parse(format!(
            "invalid data in {}: no emotion records",
            probs_path.display()
        )));
    }
    let mut resolved: Vec<(f64, EmotionProbs)> = Vec::with_capacity(records.len());
    for r in &records {
        resolved.push((record_time(r, &section.windows), r.validate()?));
    }

    let max_time = resolved
        .iter()
        .map(|(t, _)| *t)
        .fold(f64::NEG_INFINITY, f64::max);
    let duration = section
        .duration
        .unwrap_or(max_time + section.windows.sub_window_size / 2.0);
    let plan = plan_windows(duration, &section.windows)?;

    let mut keyframes = Vec::with_capacity(plan.len());
    for window in &plan {
        let center = 0.5 * (window.start + window.end);
        let members: Vec<EmotionProbs> = resolved
            .iter()
            .filter(|(t, _)| *t >= window.start - 1e-9 && *t <= window.end + 1e-9)
            .map(|(_, p)| *p)
            .collect();
        // A window with no records borrows the record nearest its center,
        // so sparse streams still yield a total track.
        let aggregated = if members.is_empty() {
            let mut best = &resolved[0];
            for r in &resolved[1..] {
                if (r.0 - center).abs() < (best.0 - center).abs() {
                    best = r;
                }
            }
            aggregate_window(&[best.1])?
        } else {
            aggregate_window(&members)?
        };
        keyframes.push((center, aggregated));
    }

    let track = EmotionTrack::new(keyframes)?;
    fio::save_emotion_track(out_path, &track)?;
    println!(
        "planned {} windows over {duration}s, wrote {}",
        plan.len(),
        out_path.display()
    );
    Ok(())
}

fn run_emotion_online(
    args: &EmotionArgs,
    section: &EmotionSection,
    origin: &str,
) -> Result<(), CliError> {
    if args.probs.is_some() {
        return Err(CliError::Parse(
            "online mode reads records from stdin; --probs only applies to offline mode".into(),
        ));
    }
    if args.out.is_some() {
        return Err(CliError::Parse(
            "online mode writes records to stdout; --out only applies to offline mode".into(),
        ));
    }
    let mut smoother = OnlineSmoother::new(section.smoothing)
        .map_err(|e| CliError::Parse(format!("{origin}: {e}")))?;

    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (index, line) in stdin.lock().lines().enumerate() {
        let line = line
            .map_err(|e| CliError::Parse(format!("cannot read stdin line {}: {e}", index + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EmotionRecord = serde_json::from_str(&line).map_err(|e| {
            CliError::Parse(format!("malformed JSON on stdin line {}: {e}", index + 1))
        })?;
        let probs = record.validate().map_err(|e| {
            CliError::Parse(format!("invalid record on stdin line {}: {e}", index + 1))
        })?;
        let smoothed = smoother.push(probs);
        let out_record = EmotionRecord {
            time: record.time,
            window: record.window,
            probs: smoothed.0,
        };
        let text = serde_json::to_string(&out_record)
            .map_err(|e| CliError::Parse(format!("cannot serialize record: {e}")))?;
        // One record out per record in: write and flush before the next read.
        writeln!(out, "{text}")
            .map_err(|e| CliError::Parse(format!("cannot write stdout: {e}")))?;
        out.flush()
            .map_err(|e| CliError::Parse(format!("cannot write stdout: {e}")))?;
    }
    Ok(())
}
