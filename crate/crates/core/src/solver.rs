//! Box-constrained least-squares weight solving.
//!
//! Each frame minimizes, over `w` in `[0, 1]^N_a` (the active shapes),
//!
//! ```text
//! |dv - D w|^2 + l2 |w|^2 + l1 (sum w)^2 + lt |w - w_prev|^2
//!              + ls |S w|^2 + lj |C w - d_jaw|^2
//! ```
//!
//! where `D` holds the selector-restricted delta columns, `S` has one
//! `+1/-1` row per active symmetry pair, and `C` holds each jaw shape's
//! delta at the jaw reference vertex. The L1 sparsity pressure is realized
//! as the quadratic proxy `(sum w)^2`, which keeps the problem a plain QP.
//!
//! Everything is normalized into the canonical form `min 1/2 w'Qw - b'w`
//! and handed to a projected cyclic coordinate-descent loop with a box-KKT
//! stopping certificate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnimationSequence, BlendshapeModel, VertexSelector, WeightTrack};

/// Regularizer strengths and stopping parameters for the per-frame solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub lambda_l2: f64,
    pub lambda_l1: f64,
    /// Pull toward the previous frame's solution; inactive on the first
    /// frame unless a warm start is supplied.
    pub lambda_temporal: f64,
    /// Penalty on weight differences across symmetry pairs.
    pub lambda_sym: f64,
    /// Base strength of the jaw target term; the effective weight is
    /// modulated per frame, see [`jaw_weight`].
    pub lambda_jaw_base: f64,
    /// Length scale (mm) of the jaw weight modulation.
    pub jaw_sigma: f64,
    /// Relative box-KKT residual below which a solve counts as converged.
    pub kkt_tolerance: f64,
    /// Sweep budget; `None` means `10 * N_a + 200`.
    pub max_iterations: Option<usize>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            lambda_l2: 0.0,
            lambda_l1: 0.0,
            lambda_temporal: 0.0,
            lambda_sym: 0.0,
            lambda_jaw_base: 0.0,
            jaw_sigma: 1.0,
            kkt_tolerance: 1e-8,
            max_iterations: None,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("lambda_l2", self.lambda_l2),
            ("lambda_l1", self.lambda_l1),
            ("lambda_temporal", self.lambda_temporal),
            ("lambda_sym", self.lambda_sym),
            ("lambda_jaw_base", self.lambda_jaw_base),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(
                    "solve config",
                    format!("{name} must be finite and non-negative, got {v}"),
                ));
            }
        }
        if !(self.jaw_sigma.is_finite() && self.jaw_sigma > 0.0) {
            return Err(Error::invalid(
                "solve config",
                format!("jaw_sigma must be positive, got {}", self.jaw_sigma),
            ));
        }
        if !(self.kkt_tolerance.is_finite() && self.kkt_tolerance > 0.0) {
            return Err(Error::invalid(
                "solve config",
                format!("kkt_tolerance must be positive, got {}", self.kkt_tolerance),
            ));
        }
        Ok(())
    }
}

/// Observed jaw state for one frame: the jaw delta at the reference vertex
/// and the current lip opening, both in mm. The lip gap comes from the
/// metrics module; the solver treats it as given.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct JawTarget {
    pub d_jaw: [f64; 3],
    pub lip_gap: f64,
}

impl JawTarget {
    pub fn validate(&self) -> Result<()> {
        if self.d_jaw.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("jaw target", "d_jaw must be finite"));
        }
        if !(self.lip_gap.is_finite() && self.lip_gap >= 0.0) {
            return Err(Error::invalid(
                "jaw target",
                format!(
                    "lip gap must be finite and non-negative, got {}",
                    self.lip_gap
                ),
            ));
        }
        Ok(())
    }
}

/// Effective jaw term strength for one frame:
///
/// ```text
/// lambda_jaw_base * exp(-|d_jaw|^2 / (2 sigma^2)) * (1 - exp(-gap^2 / (2 sigma^2)))
/// ```
///
/// Large jaw motion or a closed mouth both drive the weight toward zero, so
/// the target only bites when the jaw is near rest with the lips apart.
pub fn jaw_weight(jaw: &JawTarget, config: &SolveConfig) -> f64 {
    let s2 = 2.0 * config.jaw_sigma * config.jaw_sigma;
    let d2 = jaw.d_jaw.iter().map(|v| v * v).sum::<f64>();
    let g2 = jaw.lip_gap * jaw.lip_gap;
    config.lambda_jaw_base * (-d2 / s2).exp() * (1.0 - (-g2 / s2).exp())
}

/// The canonical per-frame QP `min 1/2 w'Qw - b'w` over `[lower, upper]`,
/// in active-subset coordinates.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    n: usize,
    /// Row-major symmetric `n * n`.
    q: Vec<f64>,
    b: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl QuadraticProblem {
    pub fn new(q: Vec<f64>, b: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = b.len();
        if q.len() != n * n {
            return Err(Error::DimensionMismatch {
                context: "quadratic problem matrix",
                expected: n * n,
                actual: q.len(),
            });
        }
        if lower.len() != n || upper.len() != n {
            return Err(Error::DimensionMismatch {
                context: "quadratic problem bounds",
                expected: n,
                actual: lower.len().min(upper.len()),
            });
        }
        for v in q.iter().chain(&b) {
            if !v.is_finite() {
                return Err(Error::invalid(
                    "quadratic problem",
                    "non-finite coefficient",
                ));
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (q[i * n + j] - q[j * n + i]).abs() > 1e-12 {
                    return Err(Error::invalid(
                        "quadratic problem",
                        format!("matrix not symmetric at ({i}, {j})"),
                    ));
                }
            }
        }
        for i in 0..n {
            let (l, u) = (lower[i], upper[i]);
            if !(l.is_finite()
                && u.is_finite()
                && l <= u
                && (0.0..=1.0).contains(&l)
                && (0.0..=1.0).contains(&u))
            {
                return Err(Error::invalid(
                    "quadratic problem",
                    format!("bounds [{l}, {u}] at {i} must satisfy 0 <= lower <= upper <= 1"),
                ));
            }
        }
        Ok(Self {
            n,
            q,
            b,
            lower,
            upper,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &[f64] {
        &self.q
    }

    pub fn linear(&self) -> &[f64] {
        &self.b
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Clamps one shape's upper bound; used by the cancel-pair second pass.
    pub fn restrict_upper(&mut self, index: usize, value: f64) -> Result<()> {
        if index >= self.n {
            return Err(Error::IndexOutOfRange {
                context: "restrict upper bound",
                index,
                limit: self.n,
            });
        }
        if !(value.is_finite() && value >= self.lower[index] && value <= 1.0) {
            return Err(Error::invalid(
                "restrict upper bound",
                format!(
                    "value {value} conflicts with lower bound {}",
                    self.lower[index]
                ),
            ));
        }
        self.upper[index] = value;
        Ok(())
    }

    /// `1/2 w'Qw - b'w`; the dropped constant is the data term's `|dv|^2`
    /// (plus the analogous temporal and jaw constants) over 2.
    pub fn objective(&self, w: &[f64]) -> f64 {
        debug_assert_eq!(w.len(), self.n);
        let mut quad = 0.0;
        for i in 0..self.n {
            let row = &self.q[i * self.n..(i + 1) * self.n];
            let mut s = 0.0;
            for j in 0..self.n {
                s += row[j] * w[j];
            }
            quad += w[i] * s;
        }
        let lin: f64 = self.b.iter().zip(w).map(|(b, w)| b * w).sum();
        0.5 * quad - lin
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.q[i * self.n..(i + 1) * self.n];
            let mut s = 0.0;
            for j in 0..self.n {
                s += row[j] * w[j];
            }
            g[i] = s - self.b[i];
        }
        g
    }
}

/// Scaled box-KKT residual of `w` for `problem`: the largest per-coordinate
/// optimality violation, each scaled by `1 + |b_i|`. Interior coordinates
/// need `g_i = 0`, coordinates at the lower bound need `g_i >= 0`, at the
/// upper bound `g_i <= 0`.
pub fn kkt_residual(problem: &QuadraticProblem, w: &[f64]) -> f64 {
    let g = problem.gradient(w);
    let mut worst = 0.0f64;
    for i in 0..problem.n {
        if problem.lower[i] == problem.upper[i] {
            continue;
        }
        let scale = 1.0 + problem.b[i].abs();
        let v = if w[i] <= problem.lower[i] {
            (-g[i]).max(0.0)
        } else if w[i] >= problem.upper[i] {
            g[i].max(0.0)
        } else {
            g[i].abs()
        };
        worst = worst.max(v / scale);
    }
    worst
}

/// One solve's stopping summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Full coordinate sweeps performed.
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
}

/// Projected cyclic coordinate descent: each coordinate is minimized
/// exactly and clamped to its box, sweeping until the KKT residual drops
/// below `config.kkt_tolerance` or the sweep budget runs out.
///
/// A `1e-12` diagonal jitter guards the per-coordinate division against
/// rank-deficient data; the convergence certificate is still measured
/// against the caller's unmodified problem.
pub fn solve_qp(
    problem: &QuadraticProblem,
    config: &SolveConfig,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    config.validate()?;
    let n = problem.n;
    if n == 0 {
        return Ok((
            vec![],
            ConvergenceReport {
                iterations: 0,
                kkt_residual: 0.0,
                converged: true,
            },
        ));
    }
    let max_sweeps = config.max_iterations.unwrap_or(10 * n + 200);
    let diag: Vec<f64> = (0..n).map(|i| problem.q[i * n + i] + 1e-12).collect();
    let mut w: Vec<f64> = (0..n)
        .map(|i| 0.0f64.clamp(problem.lower[i], problem.upper[i]))
        .collect();

    let mut residual = kkt_residual(problem, &w);
    if residual <= config.kkt_tolerance {
        return Ok((
            w,
            ConvergenceReport {
                iterations: 0,
                kkt_residual: residual,
                converged: true,
            },
        ));
    }
    for sweep in 1..=max_sweeps {
        for i in 0..n {
            let row = &problem.q[i * n..(i + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += row[j] * w[j];
            }
            s -= row[i] * w[i];
            let free = (problem.b[i] - s) / diag[i];
            w[i] = free.clamp(problem.lower[i], problem.upper[i]);
        }
        residual = kkt_residual(problem, &w);
        if residual <= config.kkt_tolerance {
            return Ok((
                w,
                ConvergenceReport {
                    iterations: sweep,
                    kkt_residual: residual,
                    converged: true,
                },
            ));
        }
    }
    Err(Error::NoConvergence {
        iterations: max_sweeps,
        residual,
        best: w,
    })
}

fn active_position(active: &[usize], shape: usize) -> Option<usize> {
    active.binary_search(&shape).ok()
}

/// Builds the canonical QP for one frame.
///
/// `frame_delta` is the target in delta space (length `3V`); `w_prev` is a
/// full-length previous solution (the temporal term is skipped when absent);
/// `jaw` supplies the per-frame jaw target. All matrix blocks are restricted
/// to the model's active set. The jaw rows bypass the vertex selector: the
/// reference vertex participates regardless of the sampling pattern. The
/// bounds are `[0, 1]` on every active shape.
pub fn assemble_problem(
    model: &BlendshapeModel,
    selector: &VertexSelector,
    frame_delta: &[f64],
    w_prev: Option<&[f64]>,
    jaw: Option<&JawTarget>,
    config: &SolveConfig,
) -> Result<QuadraticProblem> {
    config.validate()?;
    let dim = model.neutral().positions.len();
    if frame_delta.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "frame delta",
            expected: dim,
            actual: frame_delta.len(),
        });
    }
    if let Some(pos) = frame_delta.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(
            "frame delta",
            format!("non-finite value at flat index {pos}"),
        ));
    }
    if let Some(wp) = w_prev {
        if wp.len() != model.shape_count() {
            return Err(Error::DimensionMismatch {
                context: "previous weights",
                expected: model.shape_count(),
                actual: wp.len(),
            });
        }
        if wp.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("previous weights", "non-finite value"));
        }
    }

    let active = model.active_set();
    let na = active.len();
    let cols: Vec<Vec<f64>> = active
        .iter()
        .map(|&s| selector.apply(model.delta_column(s)))
        .collect::<Result<_>>()?;
    let target = selector.apply(frame_delta)?;

    let mut q = vec![0.0; na * na];
    let mut b = vec![0.0; na];
    for i in 0..na {
        for j in i..na {
            let v: f64 = cols[i].iter().zip(&cols[j]).map(|(a, c)| a * c).sum();
            q[i * na + j] = v;
            q[j * na + i] = v;
        }
        b[i] = cols[i].iter().zip(&target).map(|(a, t)| a * t).sum();
    }

    let temporal = if w_prev.is_some() {
        config.lambda_temporal
    } else {
        0.0
    };
    if config.lambda_l2 > 0.0 || temporal > 0.0 {
        for i in 0..na {
            q[i * na + i] += config.lambda_l2 + temporal;
        }
    }
    if let Some(wp) = w_prev {
        if temporal > 0.0 {
            for (k, &s) in active.iter().enumerate() {
                b[k] += temporal * wp[s];
            }
        }
    }
    if config.lambda_l1 > 0.0 {
        for v in q.iter_mut() {
            *v += config.lambda_l1;
        }
    }
    if config.lambda_sym > 0.0 {
        for &(a, c) in model.symmetry_pairs() {
            if let (Some(i), Some(j)) = (active_position(active, a), active_position(active, c)) {
                q[i * na + i] += config.lambda_sym;
                q[j * na + j] += config.lambda_sym;
                q[i * na + j] -= config.lambda_sym;
                q[j * na + i] -= config.lambda_sym;
            }
        }
    }
    if let Some(jaw) = jaw {
        jaw.validate()?;
        let lj = jaw_weight(jaw, config);
        if lj > 0.0 {
            let r = model.jaw_reference_vertex();
            let c: Vec<[f64; 3]> = active
                .iter()
                .map(|&s| {
                    if model.jaw_shape_indices().contains(&s) {
                        model.shape_delta_at(s, r)
                    } else {
                        [0.0; 3]
                    }
                })
                .collect();
            for i in 0..na {
                for j in i..na {
                    let v = lj * (c[i][0] * c[j][0] + c[i][1] * c[j][1] + c[i][2] * c[j][2]);
                    q[i * na + j] += v;
                    if i != j {
                        q[j * na + i] += v;
                    }
                }
                b[i] +=
                    lj * (c[i][0] * jaw.d_jaw[0] + c[i][1] * jaw.d_jaw[1] + c[i][2] * jaw.d_jaw[2]);
            }
        }
    }

    QuadraticProblem::new(q, b, vec![0.0; na], vec![1.0; na])
}

/// One frame's solved weights plus the convergence reports of the one or
/// two QP passes that produced them.
#[derive(Debug, Clone)]
pub struct SolvedFrame {
    /// Full-length weights; inactive shapes are zero.
    pub weights: Vec<f64>,
    pub pass1: ConvergenceReport,
    /// Present when cancel pairs forced a re-solve.
    pub pass2: Option<ConvergenceReport>,
}

/// Solves one frame with cancel-pair handling.
///
/// Pass 1 solves under plain `[0, 1]` bounds. For every cancel pair whose
/// two shapes are both active, the shape with the smaller pass-1 activation
/// gets its upper bound clamped to zero (ties zero the second shape of the
/// pair), and pass 2 re-solves under the tightened bounds. Without any
/// affected pair the pass-1 result is returned as is.
pub fn solve_frame(
    model: &BlendshapeModel,
    selector: &VertexSelector,
    frame_delta: &[f64],
    w_prev: Option<&[f64]>,
    jaw: Option<&JawTarget>,
    config: &SolveConfig,
) -> Result<SolvedFrame> {
    let mut problem = assemble_problem(model, selector, frame_delta, w_prev, jaw, config)?;
    let (w1, pass1) = solve_qp(&problem, config)?;

    let active = model.active_set();
    let mut restricted = false;
    for &(a, c) in model.cancel_pairs() {
        if let (Some(i), Some(j)) = (active_position(active, a), active_position(active, c)) {
            // Ties zero the second shape of the pair.
            let loser = if w1[i] < w1[j] { i } else { j };
            problem.restrict_upper(loser, 0.0)?;
            restricted = true;
        }
    }

    let (w_active, pass2) = if restricted {
        let (w2, rep) = solve_qp(&problem, config)?;
        (w2, Some(rep))
    } else {
        (w1, None)
    };

    let mut weights = vec![0.0; model.shape_count()];
    for (k, &s) in active.iter().enumerate() {
        weights[s] = w_active[k];
    }
    Ok(SolvedFrame {
        weights,
        pass1,
        pass2,
    })
}

/// Per-frame convergence diagnostics for a sequence solve.
#[derive(Debug, Clone, Serialize)]
pub struct FrameDiagnostics {
    pub frame: usize,
    pub pass1: ConvergenceReport,
    pub pass2: Option<ConvergenceReport>,
}

/// A solved sequence: the weight track plus per-frame diagnostics.
#[derive(Debug, Clone)]
pub struct SequenceSolve {
    pub track: WeightTrack,
    pub diagnostics: Vec<FrameDiagnostics>,
}

/// Solves a whole clip, chaining the temporal term frame to frame.
///
/// Frame `t` uses frame `t-1`'s final weights as `w_prev`; the first frame
/// has no temporal term unless `warm_start` supplies one. `jaw_targets`,
/// when given, must provide one target per frame. The first failing frame
/// aborts the solve with its index attached.
pub fn solve_sequence(
    model: &BlendshapeModel,
    selector: &VertexSelector,
    animation: &AnimationSequence,
    jaw_targets: Option<&[JawTarget]>,
    warm_start: Option<&[f64]>,
    config: &SolveConfig,
) -> Result<SequenceSolve> {
    config.validate()?;
    if let Some(targets) = jaw_targets {
        if targets.len() != animation.frame_count() {
            return Err(Error::DimensionMismatch {
                context: "jaw targets",
                expected: animation.frame_count(),
                actual: targets.len(),
            });
        }
    }
    if let Some(ws) = warm_start {
        if ws.len() != model.shape_count() {
            return Err(Error::DimensionMismatch {
                context: "warm start weights",
                expected: model.shape_count(),
                actual: ws.len(),
            });
        }
    }

    let mut weights = Vec::with_capacity(animation.frame_count());
    let mut diagnostics = Vec::with_capacity(animation.frame_count());
    let mut prev: Option<Vec<f64>> = warm_start.map(<[f64]>::to_vec);
    for t in 0..animation.frame_count() {
        let wrap = |e: Error| Error::Frame {
            frame: t,
            source: Box::new(e),
        };
        let delta = animation.frame_delta(t, model.neutral()).map_err(wrap)?;
        let jaw = jaw_targets.map(|j| &j[t]);
        let solved =
            solve_frame(model, selector, &delta, prev.as_deref(), jaw, config).map_err(wrap)?;
        diagnostics.push(FrameDiagnostics {
            frame: t,
            pass1: solved.pass1,
            pass2: solved.pass2,
        });
        prev = Some(solved.weights.clone());
        weights.push(solved.weights);
    }
    let track = WeightTrack::new(animation.frame_rate, weights)?;
    Ok(SequenceSolve { track, diagnostics })
}
