//! Artist-facing post-processing of solved animation.
//!
//! Skin deltas get region strength scaling (split into upper and lower face
//! by a smooth vertical mask) and one-pole temporal smoothing. Auxiliary
//! channels (jaw transform, tongue, eyelids, lip openness, eye rotations)
//! get strength scaling about their neutral pose plus constant offsets.
//! With default parameters every operation is the identity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Mesh;

/// All post-processing controls. Strengths multiply motion about the
/// neutral pose; heights, depths, and offsets add constants (mm, or degrees
/// for eye rotation). Defaults leave the animation untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostProcessParams {
    /// Global multiplier on skin deltas.
    pub skin_strength: f64,
    pub upper_face_strength: f64,
    pub lower_face_strength: f64,
    /// Smoothing coefficients in `[0, 1)`: 0 is off, higher values blend
    /// more of the previous frames into the current one.
    pub upper_face_smoothing: f64,
    pub lower_face_smoothing: f64,
    /// Vertical position of the upper/lower transition, as a fraction of
    /// the face bounding box height.
    pub face_mask_level: f64,
    /// Width of the transition band, same normalized units.
    pub face_mask_softness: f64,
    /// Constant opening (mm) added to the lip-openness channel.
    pub lip_open_offset: f64,
    pub jaw_strength: f64,
    /// Constant vertical offset (mm) on the jaw transform points.
    pub jaw_height: f64,
    /// Constant depth offset (mm) on the jaw transform points.
    pub jaw_depth: f64,
    pub tongue_strength: f64,
    pub tongue_height: f64,
    pub tongue_depth: f64,
    /// Constant offset (mm) on the eyelid channel.
    pub eyelid_offset: f64,
    /// Multiplier on eyelid motion.
    pub blink_strength: f64,
    /// Multiplier on the fast component of eye rotation.
    pub eye_saccade_strength: f64,
    /// Multiplier on the slow (gaze offset) component of eye rotation.
    pub eye_offset_strength: f64,
    /// Constant rotation offsets in degrees, `[left, right]`.
    pub eye_rotation_offset_x: [f64; 2],
    pub eye_rotation_offset_y: [f64; 2],
}

impl Default for PostProcessParams {
    fn default() -> Self {
        Self {
            skin_strength: 1.0,
            upper_face_strength: 1.0,
            lower_face_strength: 1.0,
            upper_face_smoothing: 0.0,
            lower_face_smoothing: 0.0,
            face_mask_level: 0.5,
            face_mask_softness: 0.1,
            lip_open_offset: 0.0,
            jaw_strength: 1.0,
            jaw_height: 0.0,
            jaw_depth: 0.0,
            tongue_strength: 1.0,
            tongue_height: 0.0,
            tongue_depth: 0.0,
            eyelid_offset: 0.0,
            blink_strength: 1.0,
            eye_saccade_strength: 1.0,
            eye_offset_strength: 1.0,
            eye_rotation_offset_x: [0.0; 2],
            eye_rotation_offset_y: [0.0; 2],
        }
    }
}

impl PostProcessParams {
    pub fn validate(&self) -> Result<()> {
        let strengths = [
            ("skin_strength", self.skin_strength),
            ("upper_face_strength", self.upper_face_strength),
            ("lower_face_strength", self.lower_face_strength),
            ("jaw_strength", self.jaw_strength),
            ("tongue_strength", self.tongue_strength),
            ("blink_strength", self.blink_strength),
            ("eye_saccade_strength", self.eye_saccade_strength),
            ("eye_offset_strength", self.eye_offset_strength),
        ];
        for (name, v) in strengths {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(
                    "postprocess params",
                    format!("{name} must be finite and non-negative, got {v}"),
                ));
            }
        }
        for (name, v) in [
            ("upper_face_smoothing", self.upper_face_smoothing),
            ("lower_face_smoothing", self.lower_face_smoothing),
        ] {
            if !(v.is_finite() && (0.0..1.0).contains(&v)) {
                return Err(Error::invalid(
                    "postprocess params",
                    format!("{name} must lie in [0, 1), got {v}"),
                ));
            }
        }
        if !(self.face_mask_level.is_finite() && (0.0..=1.0).contains(&self.face_mask_level)) {
            return Err(Error::invalid(
                "postprocess params",
                format!(
                    "face_mask_level must lie in [0, 1], got {}",
                    self.face_mask_level
                ),
            ));
        }
        if !(self.face_mask_softness.is_finite() && self.face_mask_softness > 0.0) {
            return Err(Error::invalid(
                "postprocess params",
                format!(
                    "face_mask_softness must be positive, got {}",
                    self.face_mask_softness
                ),
            ));
        }
        let offsets = [
            self.lip_open_offset,
            self.jaw_height,
            self.jaw_depth,
            self.tongue_height,
            self.tongue_depth,
            self.eyelid_offset,
            self.eye_rotation_offset_x[0],
            self.eye_rotation_offset_x[1],
            self.eye_rotation_offset_y[0],
            self.eye_rotation_offset_y[1],
        ];
        if offsets.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "postprocess params",
                "offsets must be finite",
            ));
        }
        Ok(())
    }
}

/// Per-vertex upper-face membership in `[0, 1]`; 1 is fully upper face.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceMask {
    values: Vec<f64>,
}

impl FaceMask {
    /// Constant mask, for meshes where the upper/lower split is irrelevant.
    pub fn uniform(value: f64, vertex_count: usize) -> Result<Self> {
        if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
            return Err(Error::invalid(
                "face mask",
                format!("mask value must lie in [0, 1], got {value}"),
            ));
        }
        Ok(Self {
            values: vec![value; vertex_count],
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vertex_count(&self) -> usize {
        self.values.len()
    }
}

fn smoothstep(t: f64) -> f64 {
    let c = t.clamp(0.0, 1.0);
    c * c * (3.0 - 2.0 * c)
}

/// Builds the upper/lower face mask from the neutral mesh.
///
/// Each vertex's height is normalized over the mesh's vertical bounding
/// box, then mapped through a smoothstep window of width `softness`
/// centered at `level`: a vertex exactly at the level gets 0.5. Fails on a
/// mesh with zero bounding-box height.
pub fn build_face_mask(neutral: &Mesh, level: f64, softness: f64) -> Result<FaceMask> {
    if !(softness.is_finite() && softness > 0.0) {
        return Err(Error::invalid(
            "face mask",
            format!("softness must be positive, got {softness}"),
        ));
    }
    if !(level.is_finite() && (0.0..=1.0).contains(&level)) {
        return Err(Error::invalid(
            "face mask",
            format!("level must lie in [0, 1], got {level}"),
        ));
    }
    if neutral.vertex_count == 0 {
        return Err(Error::Empty {
            context: "face mask",
        });
    }
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for v in 0..neutral.vertex_count {
        let y = neutral.positions[v * 3 + 1];
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    let height = y_max - y_min;
    if height <= 0.0 {
        return Err(Error::invalid(
            "face mask",
            "mesh has zero vertical extent, cannot normalize heights",
        ));
    }
    let values = (0..neutral.vertex_count)
        .map(|v| {
            let y = (neutral.positions[v * 3 + 1] - y_min) / height;
            smoothstep((y - level + softness / 2.0) / softness)
        })
        .collect();
    Ok(FaceMask { values })
}

/// Scales one frame of skin deltas: each vertex gets
/// `skin_strength * (mask * upper_face_strength + (1 - mask) * lower_face_strength)`.
pub fn apply_strength(
    deltas: &[f64],
    mask: &FaceMask,
    params: &PostProcessParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    if deltas.len() != mask.values.len() * 3 {
        return Err(Error::DimensionMismatch {
            context: "apply strength",
            expected: mask.values.len() * 3,
            actual: deltas.len(),
        });
    }
    let mut out = Vec::with_capacity(deltas.len());
    for (v, &m) in mask.values.iter().enumerate() {
        let s = params.skin_strength
            * (m * params.upper_face_strength + (1.0 - m) * params.lower_face_strength);
        let o = v * 3;
        out.push(deltas[o] * s);
        out.push(deltas[o + 1] * s);
        out.push(deltas[o + 2] * s);
    }
    Ok(out)
}

/// One-pole temporal smoothing over a clip of flat `3V` frames.
///
/// Per vertex the coefficient is `mask * upper_coeff + (1 - mask) * lower_coeff`,
/// and the recursion is `s_t = (1 - c) * x_t + c * s_{t-1}` with `s_0 = x_0`,
/// so previous frames blend into the current one with geometrically decaying
/// weight. Coefficients of 0 return the input unchanged.
pub fn temporal_smooth(
    frames: &[Vec<f64>],
    mask: &FaceMask,
    upper_coeff: f64,
    lower_coeff: f64,
) -> Result<Vec<Vec<f64>>> {
    for (name, c) in [("upper", upper_coeff), ("lower", lower_coeff)] {
        if !(c.is_finite() && (0.0..1.0).contains(&c)) {
            return Err(Error::invalid(
                "temporal smoothing",
                format!("{name} coefficient must lie in [0, 1), got {c}"),
            ));
        }
    }
    if frames.is_empty() {
        return Err(Error::Empty {
            context: "temporal smoothing",
        });
    }
    let dim = mask.values.len() * 3;
    for (t, f) in frames.iter().enumerate() {
        if f.len() != dim {
            return Err(Error::Frame {
                frame: t,
                source: Box::new(Error::DimensionMismatch {
                    context: "temporal smoothing",
                    expected: dim,
                    actual: f.len(),
                }),
            });
        }
    }
    let coeffs: Vec<f64> = mask
        .values
        .iter()
        .map(|&m| m * upper_coeff + (1.0 - m) * lower_coeff)
        .collect();
    let mut out = Vec::with_capacity(frames.len());
    let mut state = frames[0].clone();
    out.push(state.clone());
    for frame in &frames[1..] {
        for (v, &c) in coeffs.iter().enumerate() {
            for k in 0..3 {
                let i = v * 3 + k;
                state[i] = (1.0 - c) * frame[i] + c * state[i];
            }
        }
        out.push(state.clone());
    }
    Ok(out)
}

/// Non-skin animation channels, all sampled at the same frame rate and
/// stored as motion relative to the neutral pose (degrees for rotations,
/// mm for everything else).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxChannels {
    pub frame_rate: f64,
    /// Five tracked jaw points per frame, xyz deltas, flattened to 15.
    pub jaw: Vec<[f64; 15]>,
    /// Flat tongue vertex deltas per frame.
    pub tongue: Vec<Vec<f64>>,
    /// Eyelid openness delta per eye, `[left, right]`.
    pub eyelid: Vec<[f64; 2]>,
    /// Scalar lip opening per frame.
    pub lip_openness: Vec<f64>,
    /// Eye rotation per frame, `[left_x, left_y, right_x, right_y]`.
    pub eye_rotations: Vec<[f64; 4]>,
}

impl AuxChannels {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::invalid(
                "aux channels",
                format!("frame rate must be positive, got {}", self.frame_rate),
            ));
        }
        let t = self.jaw.len();
        if t == 0 {
            return Err(Error::Empty {
                context: "aux channels",
            });
        }
        for (name, len) in [
            ("tongue", self.tongue.len()),
            ("eyelid", self.eyelid.len()),
            ("lip_openness", self.lip_openness.len()),
            ("eye_rotations", self.eye_rotations.len()),
        ] {
            if len != t {
                return Err(Error::invalid(
                    "aux channels",
                    format!("{name} has {len} frames, jaw has {t}"),
                ));
            }
        }
        let tongue_dim = self.tongue[0].len();
        if !tongue_dim.is_multiple_of(3) {
            return Err(Error::invalid(
                "aux channels",
                format!("tongue frame length {tongue_dim} is not a multiple of 3"),
            ));
        }
        for f in &self.tongue {
            if f.len() != tongue_dim {
                return Err(Error::DimensionMismatch {
                    context: "tongue frame",
                    expected: tongue_dim,
                    actual: f.len(),
                });
            }
        }
        let all_finite = self.jaw.iter().flatten().all(|v| v.is_finite())
            && self.tongue.iter().flatten().all(|v| v.is_finite())
            && self.eyelid.iter().flatten().all(|v| v.is_finite())
            && self.lip_openness.iter().all(|v| v.is_finite())
            && self.eye_rotations.iter().flatten().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::invalid("aux channels", "non-finite channel value"));
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        self.jaw.len()
    }
}

/// Centered moving average with window `width`, clamped at the clip edges.
fn moving_average(series: &[f64], width: usize) -> Vec<f64> {
    let n = series.len();
    let half_before = (width - 1) / 2;
    let half_after = width - 1 - half_before;
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half_before);
            let hi = (t + half_after).min(n - 1);
            let sum: f64 = series[lo..=hi].iter().sum();
            sum / (hi - lo + 1) as f64
        })
        .collect()
}

/// Applies strengths and constant offsets to the auxiliary channels.
///
/// Jaw and tongue deltas are scaled by their strengths, then height (Y) and
/// depth (Z) offsets are added to every point. Eyelid motion is scaled by
/// `blink_strength` and shifted by `eyelid_offset`; the lip-openness channel
/// is shifted by `lip_open_offset`. Eye rotation is split into a slow gaze
/// baseline (a centered 0.5 s moving average) and the fast remainder;
/// `eye_offset_strength` scales the baseline, `eye_saccade_strength` the
/// remainder, and the per-eye rotation offsets are added on top.
pub fn apply_channel_offsets(
    channels: &AuxChannels,
    params: &PostProcessParams,
) -> Result<AuxChannels> {
    params.validate()?;
    channels.validate()?;
    let t = channels.frame_count();

    let mut jaw = Vec::with_capacity(t);
    for frame in &channels.jaw {
        let mut out = [0.0; 15];
        for p in 0..5 {
            out[p * 3] = params.jaw_strength * frame[p * 3];
            out[p * 3 + 1] = params.jaw_strength * frame[p * 3 + 1] + params.jaw_height;
            out[p * 3 + 2] = params.jaw_strength * frame[p * 3 + 2] + params.jaw_depth;
        }
        jaw.push(out);
    }

    let tongue = channels
        .tongue
        .iter()
        .map(|frame| {
            frame
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let scaled = params.tongue_strength * v;
                    match i % 3 {
                        1 => scaled + params.tongue_height,
                        2 => scaled + params.tongue_depth,
                        _ => scaled,
                    }
                })
                .collect()
        })
        .collect();

    let eyelid = channels
        .eyelid
        .iter()
        .map(|&[l, r]| {
            [
                params.blink_strength * l + params.eyelid_offset,
                params.blink_strength * r + params.eyelid_offset,
            ]
        })
        .collect();

    let lip_openness = channels
        .lip_openness
        .iter()
        .map(|&v| v + params.lip_open_offset)
        .collect();

    let window = ((0.5 * channels.frame_rate).round() as usize).max(1);
    let rotation_offsets = [
        params.eye_rotation_offset_x[0],
        params.eye_rotation_offset_y[0],
        params.eye_rotation_offset_x[1],
        params.eye_rotation_offset_y[1],
    ];
    let mut eye_rotations = vec![[0.0; 4]; t];
    for axis in 0..4 {
        let series: Vec<f64> = channels.eye_rotations.iter().map(|r| r[axis]).collect();
        let baseline = moving_average(&series, window);
        for i in 0..t {
            let saccade = series[i] - baseline[i];
            eye_rotations[i][axis] = params.eye_offset_strength * baseline[i]
                + params.eye_saccade_strength * saccade
                + rotation_offsets[axis];
        }
    }

    Ok(AuxChannels {
        frame_rate: channels.frame_rate,
        jaw,
        tongue,
        eyelid,
        lip_openness,
        eye_rotations,
    })
}
