//! JSON (and CSV) serialization of every on-disk artifact.
//!
//! Field names in these files are a compatibility contract; the structs
//! here define them once and the loaders validate on the way in, so a
//! value that made it into the library types is already well-formed.
//! JSON is written pretty-printed with a trailing newline. serde_json
//! prints floats in shortest round-trip form, so values survive a
//! save/load cycle bit-exactly.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::emotion::{EmotionProbs, EmotionTrack};
use crate::error::Error;
use crate::metrics::{ExpressivenessFeature, FeatureKind, MetricReport, PhonemeInterval};
use crate::model::{AnimationSequence, BlendshapeModel, Mesh, WeightTrack};
use crate::postprocess::{AuxChannels, PostProcessParams};

/// Errors from file loading and saving. Everything here means "the file
/// was unreadable or its contents malformed"; cross-file consistency is
/// the caller's business.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid data in {path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: Error,
    },
}

pub type IoResult<T> = std::result::Result<T, IoError>;

/// Reads and parses one JSON file; errors name the offending path.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> IoResult<T> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a value as pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> IoResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn invalid(path: &Path, source: Error) -> IoError {
    IoError::Invalid {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Serialize, Deserialize)]
struct ShapeDto {
    name: String,
    delta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FeatureDto {
    name: String,
    kind: String,
    vertices: Vec<usize>,
    range: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelDto {
    vertex_count: usize,
    neutral: Vec<f64>,
    shapes: Vec<ShapeDto>,
    /// Absent means every shape is active.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    active_set: Option<Vec<usize>>,
    #[serde(default)]
    cancel_pairs: Vec<(usize, usize)>,
    #[serde(default)]
    symmetry_pairs: Vec<(usize, usize)>,
    #[serde(default)]
    jaw_shapes: Vec<usize>,
    #[serde(default)]
    jaw_reference_vertex: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    features: Vec<FeatureDto>,
}

/// A model file's contents: the rig plus its optional expressiveness
/// feature definitions.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: BlendshapeModel,
    pub features: Vec<ExpressivenessFeature>,
}

fn feature_from_dto(path: &Path, dto: FeatureDto) -> IoResult<ExpressivenessFeature> {
    let kind = match dto.kind.as_str() {
        "pair" => {
            if dto.vertices.len() != 2 {
                return Err(invalid(
                    path,
                    Error::invalid(
                        "feature",
                        format!(
                            "pair feature {:?} needs exactly 2 vertices, got {}",
                            dto.name,
                            dto.vertices.len()
                        ),
                    ),
                ));
            }
            FeatureKind::VertexPairDistance {
                a: dto.vertices[0],
                b: dto.vertices[1],
            }
        }
        "region" => FeatureKind::RegionMeanDisplacement {
            vertices: dto.vertices,
        },
        other => {
            return Err(invalid(
                path,
                Error::invalid(
                    "feature",
                    format!(
                        "feature {:?} has unknown kind {other:?}, expected \"pair\" or \"region\"",
                        dto.name
                    ),
                ),
            ));
        }
    };
    Ok(ExpressivenessFeature {
        name: dto.name,
        kind,
        range: dto.range,
    })
}

fn feature_to_dto(feature: &ExpressivenessFeature) -> FeatureDto {
    let (kind, vertices) = match &feature.kind {
        FeatureKind::VertexPairDistance { a, b } => ("pair", vec![*a, *b]),
        FeatureKind::RegionMeanDisplacement { vertices } => ("region", vertices.clone()),
    };
    FeatureDto {
        name: feature.name.clone(),
        kind: kind.to_string(),
        vertices,
        range: feature.range,
    }
}

pub fn load_model(path: &Path) -> IoResult<LoadedModel> {
    let dto: ModelDto = read_json(path)?;
    if dto.neutral.len() != 3 * dto.vertex_count {
        return Err(invalid(
            path,
            Error::DimensionMismatch {
                context: "model neutral",
                expected: 3 * dto.vertex_count,
                actual: dto.neutral.len(),
            },
        ));
    }
    let shape_count = dto.shapes.len();
    let neutral = Mesh::new(dto.neutral).map_err(|e| invalid(path, e))?;
    let shapes = dto.shapes.into_iter().map(|s| (s.name, s.delta)).collect();
    let active_set = dto.active_set.unwrap_or_else(|| (0..shape_count).collect());
    let model = BlendshapeModel::new(
        neutral,
        shapes,
        active_set,
        dto.cancel_pairs,
        dto.symmetry_pairs,
        dto.jaw_shapes,
        dto.jaw_reference_vertex,
    )
    .map_err(|e| invalid(path, e))?;
    let features = dto
        .features
        .into_iter()
        .map(|f| feature_from_dto(path, f))
        .collect::<IoResult<Vec<_>>>()?;
    Ok(LoadedModel { model, features })
}

pub fn save_model(
    path: &Path,
    model: &BlendshapeModel,
    features: &[ExpressivenessFeature],
) -> IoResult<()> {
    let shapes = (0..model.shape_count())
        .map(|s| ShapeDto {
            name: model.shape_names()[s].clone(),
            delta: model.delta_column(s).to_vec(),
        })
        .collect();
    let dto = ModelDto {
        vertex_count: model.vertex_count(),
        neutral: model.neutral().positions.clone(),
        shapes,
        active_set: Some(model.active_set().to_vec()),
        cancel_pairs: model.cancel_pairs().to_vec(),
        symmetry_pairs: model.symmetry_pairs().to_vec(),
        jaw_shapes: model.jaw_shape_indices().to_vec(),
        jaw_reference_vertex: model.jaw_reference_vertex(),
        features: features.iter().map(feature_to_dto).collect(),
    };
    write_json(path, &dto)
}

#[derive(Serialize, Deserialize)]
struct AnimationDto {
    frame_rate: f64,
    is_delta: bool,
    frames: Vec<Vec<f64>>,
}

pub fn load_animation(path: &Path) -> IoResult<AnimationSequence> {
    let dto: AnimationDto = read_json(path)?;
    AnimationSequence::new(dto.frame_rate, dto.is_delta, dto.frames).map_err(|e| invalid(path, e))
}

pub fn save_animation(path: &Path, animation: &AnimationSequence) -> IoResult<()> {
    write_json(
        path,
        &AnimationDto {
            frame_rate: animation.frame_rate,
            is_delta: animation.is_delta,
            frames: animation.frames.clone(),
        },
    )
}

#[derive(Serialize, Deserialize)]
struct WeightTrackDto {
    frame_rate: f64,
    weights: Vec<Vec<f64>>,
}

pub fn load_weight_track(path: &Path) -> IoResult<WeightTrack> {
    let dto: WeightTrackDto = read_json(path)?;
    WeightTrack::new(dto.frame_rate, dto.weights).map_err(|e| invalid(path, e))
}

pub fn save_weight_track(path: &Path, track: &WeightTrack) -> IoResult<()> {
    write_json(
        path,
        &WeightTrackDto {
            frame_rate: track.frame_rate,
            weights: track.weights.clone(),
        },
    )
}

/// Post-processing parameters; absent fields keep their neutral defaults.
pub fn load_params(path: &Path) -> IoResult<PostProcessParams> {
    let params: PostProcessParams = read_json(path)?;
    params.validate().map_err(|e| invalid(path, e))?;
    Ok(params)
}

pub fn save_params(path: &Path, params: &PostProcessParams) -> IoResult<()> {
    write_json(path, params)
}

/// Phoneme alignment: a top-level array of labeled intervals.
pub fn load_alignment(path: &Path) -> IoResult<Vec<PhonemeInterval>> {
    let intervals: Vec<PhonemeInterval> = read_json(path)?;
    for interval in &intervals {
        interval.validate().map_err(|e| invalid(path, e))?;
    }
    Ok(intervals)
}

pub fn save_alignment(path: &Path, intervals: &[PhonemeInterval]) -> IoResult<()> {
    write_json(path, &intervals)
}

/// One classifier output record: probabilities anchored either at a time
/// (seconds) or at an analysis-window index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    pub probs: [f64; 6],
}

impl EmotionRecord {
    /// Checks the anchor and the simplex constraint, returning the
    /// validated probabilities.
    pub fn validate(&self) -> crate::error::Result<EmotionProbs> {
        match (self.time, self.window) {
            (None, None) => {
                return Err(Error::invalid(
                    "emotion record",
                    "needs a time or a window index",
                ));
            }
            (Some(t), _) if !t.is_finite() => {
                return Err(Error::invalid(
                    "emotion record",
                    format!("non-finite time {t}"),
                ));
            }
            _ => {}
        }
        EmotionProbs::new(self.probs)
    }
}

pub fn load_emotion_records(path: &Path) -> IoResult<Vec<EmotionRecord>> {
    let records: Vec<EmotionRecord> = read_json(path)?;
    for record in &records {
        record.validate().map_err(|e| invalid(path, e))?;
    }
    Ok(records)
}

pub fn save_emotion_records(path: &Path, records: &[EmotionRecord]) -> IoResult<()> {
    write_json(path, &records)
}

#[derive(Serialize, Deserialize)]
struct KeyframeDto {
    time: f64,
    probs: [f64; 6],
}

#[derive(Serialize, Deserialize)]
struct EmotionTrackDto {
    keyframes: Vec<KeyframeDto>,
}

pub fn load_emotion_track(path: &Path) -> IoResult<EmotionTrack> {
    let dto: EmotionTrackDto = read_json(path)?;
    let mut keyframes = Vec::with_capacity(dto.keyframes.len());
    for kf in dto.keyframes {
        let probs = EmotionProbs::new(kf.probs).map_err(|e| invalid(path, e))?;
        keyframes.push((kf.time, probs));
    }
    EmotionTrack::new(keyframes).map_err(|e| invalid(path, e))
}

pub fn save_emotion_track(path: &Path, track: &EmotionTrack) -> IoResult<()> {
    let dto = EmotionTrackDto {
        keyframes: track
            .keyframes
            .iter()
            .map(|(time, probs)| KeyframeDto {
                time: *time,
                probs: probs.0,
            })
            .collect(),
    };
    write_json(path, &dto)
}

pub fn load_metric_report(path: &Path) -> IoResult<MetricReport> {
    read_json(path)
}

pub fn save_metric_report(path: &Path, report: &MetricReport) -> IoResult<()> {
    write_json(path, report)
}

pub fn load_aux_channels(path: &Path) -> IoResult<AuxChannels> {
    let channels: AuxChannels = read_json(path)?;
    channels.validate().map_err(|e| invalid(path, e))?;
    Ok(channels)
}

pub fn save_aux_channels(path: &Path, channels: &AuxChannels) -> IoResult<()> {
    write_json(path, channels)
}

/// Writes per-frame lip gaps as CSV: a header row, then one row per frame
/// with the frame index, its time in seconds, and one gap column per lip
/// pair. "." is the decimal separator, lines end with \n, floats print in
/// shortest round-trip form.
pub fn write_lip_gap_csv(path: &Path, frame_rate: f64, gaps: &[Vec<f64>]) -> IoResult<()> {
    let pair_count = gaps.first().map(Vec::len).unwrap_or(0);
    let mut out = String::from("frame,time_s");
    for p in 0..pair_count {
        out.push_str(&format!(",gap_{p}_mm"));
    }
    out.push('\n');
    for (t, row) in gaps.iter().enumerate() {
        out.push_str(&format!("{t},{}", t as f64 / frame_rate));
        for gap in row {
            out.push_str(&format!(",{gap}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}
