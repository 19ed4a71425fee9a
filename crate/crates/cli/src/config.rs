//! The pipeline config file: one JSON document with optional `solve`,
//! `metrics`, and `emotion` sections. Every field has a default, so an
//! empty object (or no config at all) runs the stock pipeline. Flags
//! override config values where both exist.

use serde::Deserialize;

use facekit_core::emotion::WindowConfig;
use facekit_core::solver::SolveConfig;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub solve: SolveSection,
    pub metrics: MetricsSection,
    pub emotion: EmotionSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct SolveSection {
    /// Regularizer weights and convergence settings, inlined.
    #[serde(flatten)]
    pub solver: SolveConfig,
    /// Vertex subset the data term samples; absent means every vertex.
    pub sample_vertices: Option<Vec<usize>>,
    /// Optional per-vertex importance, parallel to `sample_vertices`.
    pub sample_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct MetricsSection {
    /// Upper/lower lip vertex pairs, needed for lip-gap traces, bilabial
    /// scoring, and jaw target construction.
    pub lip_pairs: Option<Vec<(usize, usize)>>,
    /// Which of `lip_pairs` stands in for the mouth opening.
    pub central_pair: usize,
    /// Gap (mm) under which the mouth counts as closed.
    pub closure_threshold: f64,
    /// Jitter metric cutoff frequency (Hz).
    pub cutoff_hz: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            lip_pairs: None,
            central_pair: 0,
            closure_threshold: 1.0,
            cutoff_hz: 8.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct EmotionSection {
    /// Analysis window layout, inlined (`window_size`, `stride`,
    /// `sub_window`, `sub_stride`).
    #[serde(flatten)]
    pub windows: WindowConfig,
    /// Online-mode exponential smoothing factor in `[0, 1)`.
    pub smoothing: f64,
    /// Clip duration override (s) for offline window planning; inferred
    /// from the records when absent.
    pub duration: Option<f64>,
}

impl Default for EmotionSection {
    fn default() -> Self {
        Self {
            windows: WindowConfig::default(),
            smoothing: 0.6,
            duration: None,
        }
    }
}
