//! Core data types for delta-blendshape rigs and vertex animation.
//!
//! Conventions used throughout the crate:
//!
//! * all coordinates are millimeters, flattened `[x0, y0, z0, x1, ...]`;
//! * the vertical axis is Y;
//! * a blendshape is stored as its delta from the neutral mesh, so a pose
//!   is reconstructed as `neutral + sum_i w_i * delta_i`;
//! * deltas are stored shape-major (one contiguous column per shape)
//!   because the solver's normal-equation assembly walks whole columns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn ensure_finite(context: &'static str, data: &[f64]) -> Result<()> {
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(
            context,
            format!("non-finite value at flat index {pos}"),
        ));
    }
    Ok(())
}

/// A triangle-less point cloud: vertex positions only, topology is
/// irrelevant to everything in this crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertex_count: usize,
    /// Flat positions, `3 * vertex_count` entries.
    pub positions: Vec<f64>,
}

impl Mesh {
    pub fn new(positions: Vec<f64>) -> Result<Self> {
        if !positions.len().is_multiple_of(3) {
            return Err(Error::invalid(
                "mesh",
                format!(
                    "position array length {} is not a multiple of 3",
                    positions.len()
                ),
            ));
        }
        ensure_finite("mesh", &positions)?;
        Ok(Self {
            vertex_count: positions.len() / 3,
            positions,
        })
    }

    pub fn vertex(&self, index: usize) -> [f64; 3] {
        let o = index * 3;
        [
            self.positions[o],
            self.positions[o + 1],
            self.positions[o + 2],
        ]
    }
}

/// A delta-blendshape rig: neutral geometry plus one delta column per shape,
/// with the solve-related metadata that ships with the rig.
#[derive(Debug, Clone)]
pub struct BlendshapeModel {
    neutral: Mesh,
    /// Column-major deltas, `3 * vertex_count` entries per shape.
    deltas: Vec<f64>,
    shape_names: Vec<String>,
    /// Sorted, deduplicated indices of the shapes the solver may use.
    active_set: Vec<usize>,
    cancel_pairs: Vec<(usize, usize)>,
    symmetry_pairs: Vec<(usize, usize)>,
    jaw_shape_indices: Vec<usize>,
    jaw_reference_vertex: usize,
}

impl BlendshapeModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        neutral: Mesh,
        shapes: Vec<(String, Vec<f64>)>,
        active_set: Vec<usize>,
        cancel_pairs: Vec<(usize, usize)>,
        symmetry_pairs: Vec<(usize, usize)>,
        jaw_shape_indices: Vec<usize>,
        jaw_reference_vertex: usize,
    ) -> Result<Self> {
        let dim = neutral.positions.len();
        let n = shapes.len();
        let mut deltas = Vec::with_capacity(dim * n);
        let mut shape_names = Vec::with_capacity(n);
        for (name, delta) in shapes {
            if delta.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "blendshape delta",
                    expected: dim,
                    actual: delta.len(),
                });
            }
            ensure_finite("blendshape delta", &delta)?;
            deltas.extend_from_slice(&delta);
            shape_names.push(name);
        }

        let mut active_set = active_set;
        active_set.sort_unstable();
        active_set.dedup();
        if let Some(&bad) = active_set.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange {
                context: "active set",
                index: bad,
                limit: n,
            });
        }
        for (context, pairs) in [
            ("cancel pair", &cancel_pairs),
            ("symmetry pair", &symmetry_pairs),
        ] {
            for &(a, b) in pairs.iter() {
                if a >= n || b >= n {
                    return Err(Error::IndexOutOfRange {
                        context,
                        index: a.max(b),
                        limit: n,
                    });
                }
                if a == b {
                    return Err(Error::invalid(
                        context,
                        format!("shape {a} paired with itself"),
                    ));
                }
            }
        }
        let mut jaw_shape_indices = jaw_shape_indices;
        jaw_shape_indices.sort_unstable();
        jaw_shape_indices.dedup();
        if let Some(&bad) = jaw_shape_indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange {
                context: "jaw shape set",
                index: bad,
                limit: n,
            });
        }
        if jaw_reference_vertex >= neutral.vertex_count {
            return Err(Error::IndexOutOfRange {
                context: "jaw reference vertex",
                index: jaw_reference_vertex,
                limit: neutral.vertex_count,
            });
        }

        Ok(Self {
            neutral,
            deltas,
            shape_names,
            active_set,
            cancel_pairs,
            symmetry_pairs,
            jaw_shape_indices,
            jaw_reference_vertex,
        })
    }

    /// Builds the delta columns from captured expression meshes:
    /// `delta_i = expression_i - neutral`. All shapes start active, with no
    /// pair metadata.
    pub fn from_expression_meshes(neutral: Mesh, expressions: Vec<(String, Mesh)>) -> Result<Self> {
        let dim = neutral.positions.len();
        let mut shapes = Vec::with_capacity(expressions.len());
        for (name, mesh) in expressions {
            if mesh.positions.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "expression mesh",
                    expected: dim,
                    actual: mesh.positions.len(),
                });
            }
            let delta: Vec<f64> = mesh
                .positions
                .iter()
                .zip(&neutral.positions)
                .map(|(e, n)| e - n)
                .collect();
            shapes.push((name, delta));
        }
        let active = (0..shapes.len()).collect();
        Self::new(neutral, shapes, active, vec![], vec![], vec![], 0)
    }

    pub fn neutral(&self) -> &Mesh {
        &self.neutral
    }

    pub fn vertex_count(&self) -> usize {
        self.neutral.vertex_count
    }

    pub fn shape_count(&self) -> usize {
        self.shape_names.len()
    }

    pub fn shape_names(&self) -> &[String] {
        &self.shape_names
    }

    /// Delta column of one shape, `3 * vertex_count` entries.
    pub fn delta_column(&self, shape: usize) -> &[f64] {
        let dim = self.neutral.positions.len();
        &self.deltas[shape * dim..(shape + 1) * dim]
    }

    pub fn active_set(&self) -> &[usize] {
        &self.active_set
    }

    pub fn cancel_pairs(&self) -> &[(usize, usize)] {
        &self.cancel_pairs
    }

    pub fn symmetry_pairs(&self) -> &[(usize, usize)] {
        &self.symmetry_pairs
    }

    pub fn jaw_shape_indices(&self) -> &[usize] {
        &self.jaw_shape_indices
    }

    pub fn jaw_reference_vertex(&self) -> usize {
        self.jaw_reference_vertex
    }

    /// Delta of one shape at one vertex.
    pub fn shape_delta_at(&self, shape: usize, vertex: usize) -> [f64; 3] {
        let col = self.delta_column(shape);
        let o = vertex * 3;
        [col[o], col[o + 1], col[o + 2]]
    }
}

/// `neutral + sum_i weights[i] * delta_i`.
pub fn reconstruct(model: &BlendshapeModel, weights: &[f64]) -> Result<Mesh> {
    if weights.len() != model.shape_count() {
        return Err(Error::DimensionMismatch {
            context: "reconstruct weights",
            expected: model.shape_count(),
            actual: weights.len(),
        });
    }
    ensure_finite("reconstruct weights", weights)?;
    let mut positions = model.neutral.positions.clone();
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let col = model.delta_column(i);
        for (p, d) in positions.iter_mut().zip(col) {
            *p += w * d;
        }
    }
    Ok(Mesh {
        vertex_count: model.neutral.vertex_count,
        positions,
    })
}

/// Selects a vertex subset for the solve, optionally with per-vertex
/// importance weights.
///
/// Applying the selector scales each selected vertex's coordinates by
/// `sqrt(weight)`, so plain squared error on the selected data realizes the
/// weighted least-squares objective.
#[derive(Debug, Clone)]
pub struct VertexSelector {
    indices: Vec<usize>,
    weights: Option<Vec<f64>>,
}

impl VertexSelector {
    /// Identity selector over a full mesh.
    pub fn all(vertex_count: usize) -> Self {
        Self {
            indices: (0..vertex_count).collect(),
            weights: None,
        }
    }

    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty {
                context: "vertex selector",
            });
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid(
                "vertex selector",
                "indices must be strictly increasing",
            ));
        }
        Ok(Self {
            indices,
            weights: None,
        })
    }

    pub fn with_weights(indices: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let mut sel = Self::new(indices)?;
        if weights.len() != sel.indices.len() {
            return Err(Error::DimensionMismatch {
                context: "selector weights",
                expected: sel.indices.len(),
                actual: weights.len(),
            });
        }
        if let Some(pos) = weights.iter().position(|&w| !(w.is_finite() && w > 0.0)) {
            return Err(Error::invalid(
                "selector weights",
                format!("weight at position {pos} must be finite and positive"),
            ));
        }
        sel.weights = Some(weights);
        Ok(sel)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn selected_count(&self) -> usize {
        self.indices.len()
    }

    /// Gathers the selected vertices out of a flat `3V` array, scaling by
    /// `sqrt(weight)` where weights are present.
    pub fn apply(&self, data: &[f64]) -> Result<Vec<f64>> {
        if !data.len().is_multiple_of(3) {
            return Err(Error::invalid(
                "apply selector",
                format!("data length {} is not a multiple of 3", data.len()),
            ));
        }
        let vertex_count = data.len() / 3;
        let mut out = Vec::with_capacity(self.indices.len() * 3);
        for (k, &v) in self.indices.iter().enumerate() {
            if v >= vertex_count {
                return Err(Error::IndexOutOfRange {
                    context: "apply selector",
                    index: v,
                    limit: vertex_count,
                });
            }
            let s = match &self.weights {
                Some(w) => w[k].sqrt(),
                None => 1.0,
            };
            let o = v * 3;
            out.push(data[o] * s);
            out.push(data[o + 1] * s);
            out.push(data[o + 2] * s);
        }
        Ok(out)
    }
}

/// A vertex animation clip. Frames either hold absolute positions or deltas
/// from a neutral mesh; `is_delta` says which.
#[derive(Debug, Clone, PartialEq)]
pub struct AnimationSequence {
    pub frame_rate: f64,
    pub is_delta: bool,
    /// One flat `3V` array per frame.
    pub frames: Vec<Vec<f64>>,
}

impl AnimationSequence {
    pub fn new(frame_rate: f64, is_delta: bool, frames: Vec<Vec<f64>>) -> Result<Self> {
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::invalid(
                "animation",
                format!("frame rate must be positive, got {frame_rate}"),
            ));
        }
        if frames.is_empty() {
            return Err(Error::Empty {
                context: "animation",
            });
        }
        let dim = frames[0].len();
        if dim == 0 || !dim.is_multiple_of(3) {
            return Err(Error::invalid(
                "animation",
                format!("frame length {dim} is not a positive multiple of 3"),
            ));
        }
        for (t, frame) in frames.iter().enumerate() {
            if frame.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "animation frame",
                    expected: dim,
                    actual: frame.len(),
                });
            }
            ensure_finite("animation frame", frame).map_err(|e| Error::Frame {
                frame: t,
                source: Box::new(e),
            })?;
        }
        Ok(Self {
            frame_rate,
            is_delta,
            frames,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.frames[0].len() / 3
    }

    /// Clip duration in seconds (frame count over rate).
    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 / self.frame_rate
    }

    /// Frame `t` as a delta from `neutral`, regardless of storage mode.
    pub fn frame_delta(&self, t: usize, neutral: &Mesh) -> Result<Vec<f64>> {
        let frame = &self.frames[t];
        if frame.len() != neutral.positions.len() {
            return Err(Error::DimensionMismatch {
                context: "animation vs neutral",
                expected: neutral.positions.len(),
                actual: frame.len(),
            });
        }
        if self.is_delta {
            Ok(frame.clone())
        } else {
            Ok(frame
                .iter()
                .zip(&neutral.positions)
                .map(|(f, n)| f - n)
                .collect())
        }
    }

    /// Frame `t` as absolute positions, regardless of storage mode.
    pub fn frame_positions(&self, t: usize, neutral: &Mesh) -> Result<Vec<f64>> {
        let frame = &self.frames[t];
        if frame.len() != neutral.positions.len() {
            return Err(Error::DimensionMismatch {
                context: "animation vs neutral",
                expected: neutral.positions.len(),
                actual: frame.len(),
            });
        }
        if self.is_delta {
            Ok(frame
                .iter()
                .zip(&neutral.positions)
                .map(|(f, n)| f + n)
                .collect())
        } else {
            Ok(frame.clone())
        }
    }
}

/// Per-frame blendshape weights, the solver's output.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTrack {
    pub frame_rate: f64,
    /// One weight vector (length = shape count) per frame.
    pub weights: Vec<Vec<f64>>,
}

impl WeightTrack {
    pub fn new(frame_rate: f64, weights: Vec<Vec<f64>>) -> Result<Self> {
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::invalid(
                "weight track",
                format!("frame rate must be positive, got {frame_rate}"),
            ));
        }
        let dim = weights.first().map(Vec::len).unwrap_or(0);
        for (t, frame) in weights.iter().enumerate() {
            if frame.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "weight track frame",
                    expected: dim,
                    actual: frame.len(),
                });
            }
            if frame.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
                return Err(Error::Frame {
                    frame: t,
                    source: Box::new(Error::invalid("weight track", "weight outside [0, 1]")),
                });
            }
        }
        Ok(Self {
            frame_rate,
            weights,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.weights.len()
    }
}
