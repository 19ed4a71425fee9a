//! Retargeting and quality assessment for audio-driven facial animation.
//!
//! The pipeline this crate serves: a generator produces per-frame vertex
//! motion for a face mesh; [`solver`] retargets that motion onto a
//! blendshape rig by solving a box-constrained quadratic program per frame;
//! [`postprocess`] applies artist-facing controls (strengths, masks,
//! smoothing, auxiliary jaw/tongue/eye channels) to the result;
//! [`metrics`] scores clips (spectral jitter, Frechet distance to a
//! reference, bilabial closures, expressiveness); [`emotion`] turns
//! windowed classifier probabilities into smooth emotion timelines.
//!
//! [`io`] pins the JSON/CSV file formats and [`fixtures`] generates the
//! deterministic synthetic data the test suites and benchmarks run on.
//!
//! Conventions throughout: millimeters, Y up, vertex buffers as flat
//! `[x0, y0, z0, x1, ...]` arrays, indices 0-based, weights in `[0, 1]`.

// The numeric kernels (Jacobi sweeps, DP tables, smoothing recursions)
// keep explicit indices to mirror the formulas they implement.
#![allow(clippy::needless_range_loop)]

pub mod emotion;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod metrics;
pub mod model;
pub mod postprocess;
pub mod solver;

pub use emotion::{
    aggregate_window, offline_timeline, plan_windows, transition_blend, EmotionProbs, EmotionTrack,
    OnlineSmoother, WindowConfig, WindowPlan, EMOTION_CLASSES,
};
pub use error::{Error, Result};
pub use metrics::{
    bilabial_score, expressiveness, fourier_jitter, frechet_distance, lip_gap, BilabialInstance,
    BilabialScore, ExpressivenessFeature, FeatureKind, LipVertexPairs, MetricReport,
    PhonemeInterval,
};
pub use model::{
    reconstruct, AnimationSequence, BlendshapeModel, Mesh, VertexSelector, WeightTrack,
};
pub use postprocess::{
    apply_channel_offsets, apply_strength, build_face_mask, temporal_smooth, AuxChannels, FaceMask,
    PostProcessParams,
};
pub use solver::{
    assemble_problem, jaw_weight, kkt_residual, solve_frame, solve_qp, solve_sequence,
    ConvergenceReport, FrameDiagnostics, JawTarget, QuadraticProblem, SequenceSolve, SolveConfig,
    SolvedFrame,
};
