//! Deterministic synthetic test data.
//!
//! Two generators: a random blendshape rig animated with known smooth
//! weights (for solver recovery tests), and a lip-closure clip with a
//! scripted phoneme alignment (for the bilabial metric). Both are seeded
//! and use `ChaCha8Rng`, whose output is identical across platforms, so
//! fixtures regenerate bit-for-bit everywhere.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{LipVertexPairs, PhonemeInterval};
use crate::model::{AnimationSequence, BlendshapeModel, Mesh, WeightTrack};

/// Parameters for the known-weights blendshape fixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub seed: u64,
    pub vertex_count: usize,
    pub shape_count: usize,
    pub frame_count: usize,
    pub frame_rate: f64,
    /// Standard deviation (mm) of Gaussian noise added to each frame
    /// coordinate; zero means exact reconstruction is possible.
    pub noise_std: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            vertex_count: 20,
            shape_count: 6,
            frame_count: 24,
            frame_rate: 30.0,
            noise_std: 0.0,
        }
    }
}

impl FixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vertex_count == 0 || self.shape_count == 0 || self.frame_count == 0 {
            return Err(Error::invalid(
                "fixture spec",
                "vertex, shape, and frame counts must be positive",
            ));
        }
        if 3 * self.vertex_count < self.shape_count {
            return Err(Error::invalid(
                "fixture spec",
                format!(
                    "{} shapes over {} vertices is underdetermined",
                    self.shape_count, self.vertex_count
                ),
            ));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::invalid(
                "fixture spec",
                format!("frame rate must be positive, got {}", self.frame_rate),
            ));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::invalid(
                "fixture spec",
                format!("noise std must be non-negative, got {}", self.noise_std),
            ));
        }
        Ok(())
    }
}

/// A random rig plus an animation rendered from known weights.
#[derive(Debug, Clone)]
pub struct KnownBlendFixture {
    pub spec: FixtureSpec,
    pub model: BlendshapeModel,
    /// Delta-frame animation `D w(t)` (plus noise when requested).
    pub animation: AnimationSequence,
    /// The weights the animation was rendered from.
    pub true_weights: WeightTrack,
}

/// Eigenvalues of a small symmetric matrix via cyclic Jacobi rotations.
/// Quadratic per sweep, fine for the shape-count-sized Gram matrices here.
fn symmetric_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Condition number of the delta matrix, from its Gram spectrum.
fn delta_condition(deltas: &[f64], dim: usize, n: usize) -> f64 {
    let mut gram = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i..n {
            let dot: f64 = (0..dim)
                .map(|r| deltas[i * dim + r] * deltas[j * dim + r])
                .sum();
            gram[i][j] = dot;
            gram[j][i] = dot;
        }
    }
    let evals = symmetric_eigenvalues(gram);
    let max = evals.iter().cloned().fold(f64::MIN, f64::max);
    let min = evals.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        return f64::INFINITY;
    }
    (max / min).sqrt()
}

/// Builds a rig with well-conditioned random delta columns and renders an
/// animation from smooth sinusoidal weights held inside `[0.05, 0.95]`, so
/// no box constraint is active on the ground truth. Same spec, same output,
/// on every platform.
pub fn make_known_blend_fixture(spec: &FixtureSpec) -> Result<KnownBlendFixture> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = 3 * spec.vertex_count;
    let n = spec.shape_count;

    let neutral: Vec<f64> = (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect();

    // Redraw until the delta matrix is numerically sane; uniform columns
    // are almost never close to dependent, so this rarely loops at all.
    let mut deltas = Vec::new();
    let mut conditioned = false;
    for _ in 0..100 {
        deltas = (0..dim * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if delta_condition(&deltas, dim, n) <= 1e6 {
            conditioned = true;
            break;
        }
    }
    if !conditioned {
        return Err(Error::invalid(
            "fixture spec",
            "failed to draw a well-conditioned delta matrix in 100 attempts",
        ));
    }

    let amps: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.45)).collect();
    let freqs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.2)).collect();
    let phases: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    let weights: Vec<Vec<f64>> = (0..spec.frame_count)
        .map(|t| {
            let time = t as f64 / spec.frame_rate;
            (0..n)
                .map(|s| {
                    0.5 + amps[s] * (std::f64::consts::TAU * freqs[s] * time + phases[s]).sin()
                })
                .collect()
        })
        .collect();

    let noise = if spec.noise_std > 0.0 {
        Some(Normal::new(0.0, spec.noise_std).expect("validated std"))
    } else {
        None
    };
    let frames: Vec<Vec<f64>> = weights
        .iter()
        .map(|w| {
            let mut frame = vec![0.0f64; dim];
            for (s, &ws) in w.iter().enumerate() {
                let col = &deltas[s * dim..(s + 1) * dim];
                for (f, d) in frame.iter_mut().zip(col) {
                    *f += ws * d;
                }
            }
            if let Some(dist) = &noise {
                for f in frame.iter_mut() {
                    *f += dist.sample(&mut rng);
                }
            }
            frame
        })
        .collect();

    let shapes: Vec<(String, Vec<f64>)> = (0..n)
        .map(|s| {
            (
                format!("shape_{s:02}"),
                deltas[s * dim..(s + 1) * dim].to_vec(),
            )
        })
        .collect();
    let model = BlendshapeModel::new(
        Mesh::new(neutral)?,
        shapes,
        (0..n).collect(),
        Vec::new(),
        Vec::new(),
        Vec::new(),
        0,
    )?;
    Ok(KnownBlendFixture {
        spec: *spec,
        model,
        animation: AnimationSequence::new(spec.frame_rate, true, frames)?,
        true_weights: WeightTrack::new(spec.frame_rate, weights)?,
    })
}

/// One scripted mouth closure for the bilabial fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosurePlan {
    pub label: String,
    pub start: f64,
    pub end: f64,
    /// Gap (mm) the clip dips to during the middle of the interval.
    pub min_gap: f64,
}

/// A lip-closure clip with its alignment and the score the bilabial metric
/// should report for it.
#[derive(Debug, Clone)]
pub struct BilabialFixture {
    /// Absolute positions, five lip pairs plus two anchor vertices.
    pub animation: AnimationSequence,
    pub pairs: LipVertexPairs,
    pub intervals: Vec<PhonemeInterval>,
    /// `None` when the plan contains no valid bilabial entry.
    pub expected_score: Option<f64>,
}

const NEUTRAL_GAP: f64 = 4.0;
const CLOSURE_THRESHOLD: f64 = 1.0;

fn gap_at(time: f64, plan: &[ClosurePlan]) -> f64 {
    for entry in plan {
        if time < entry.start || time > entry.end {
            continue;
        }
        // Ramp down over the first fifth of the interval, hold the plateau
        // across the middle three fifths, ramp back up over the last fifth.
        let u = (time - entry.start) / (entry.end - entry.start);
        let blend = if u < 0.2 {
            u / 0.2
        } else if u > 0.8 {
            (1.0 - u) / 0.2
        } else {
            1.0
        };
        return NEUTRAL_GAP + blend * (entry.min_gap - NEUTRAL_GAP);
    }
    NEUTRAL_GAP
}

/// Renders a clip whose central lip gap follows `plan`, together with the
/// alignment made of the plan's labels. Pairs sit at distinct x positions;
/// two extra anchor vertices never move.
pub fn make_bilabial_fixture_with_plan(
    frame_rate: f64,
    duration: f64,
    plan: &[ClosurePlan],
) -> Result<BilabialFixture> {
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        return Err(Error::invalid(
            "bilabial fixture",
            format!("frame rate must be positive, got {frame_rate}"),
        ));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid(
            "bilabial fixture",
            format!("duration must be positive, got {duration}"),
        ));
    }
    for entry in plan {
        if !(entry.start.is_finite() && entry.end.is_finite() && entry.start < entry.end) {
            return Err(Error::invalid(
                "bilabial fixture",
                format!("bad plan interval [{}, {}]", entry.start, entry.end),
            ));
        }
        if !(entry.min_gap.is_finite() && entry.min_gap >= 0.0) {
            return Err(Error::invalid(
                "bilabial fixture",
                format!("plan gap must be non-negative, got {}", entry.min_gap),
            ));
        }
    }

    let frame_count = (duration * frame_rate).round() as usize;
    if frame_count == 0 {
        return Err(Error::invalid(
            "bilabial fixture",
            "duration shorter than one frame",
        ));
    }
    let frames: Vec<Vec<f64>> = (0..frame_count)
        .map(|t| {
            let gap = gap_at(t as f64 / frame_rate, plan);
            let mut frame = Vec::with_capacity(36);
            for pair in 0..5 {
                let x = pair as f64 - 2.0;
                frame.extend_from_slice(&[x, gap / 2.0, 0.0]); // upper lip
                frame.extend_from_slice(&[x, -gap / 2.0, 0.0]); // lower lip
            }
            frame.extend_from_slice(&[-6.0, 0.0, 0.0, 6.0, 0.0, 0.0]); // anchors
            frame
        })
        .collect();
    let animation = AnimationSequence::new(frame_rate, false, frames)?;

    let pairs = LipVertexPairs::new(
        vec![(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)],
        2,
        CLOSURE_THRESHOLD,
    )?;
    let intervals: Vec<PhonemeInterval> = plan
        .iter()
        .map(|e| PhonemeInterval {
            label: e.label.clone(),
            start: e.start,
            end: e.end,
        })
        .collect();

    let clip_duration = frame_count as f64 / frame_rate;
    let mut valid = 0usize;
    let mut hits = 0usize;
    for entry in plan {
        let bilabial = matches!(
            entry.label.trim().to_ascii_uppercase().as_str(),
            "M" | "B" | "P"
        );
        if !bilabial || entry.start < -1e-9 || entry.end > clip_duration + 1e-9 {
            continue;
        }
        valid += 1;
        hits += (entry.min_gap < CLOSURE_THRESHOLD) as usize;
    }
    let expected_score = (valid > 0).then(|| hits as f64 / valid as f64);

    Ok(BilabialFixture {
        animation,
        pairs,
        intervals,
        expected_score,
    })
}

/// The stock closure script: three real closures and one incomplete B that
/// only narrows to 3 mm, so three of four instances succeed.
pub fn make_bilabial_fixture(frame_rate: f64) -> Result<BilabialFixture> {
    let plan = [
        ClosurePlan {
            label: "B".into(),
            start: 0.5,
            end: 1.0,
            min_gap: 0.2,
        },
        ClosurePlan {
            label: "M".into(),
            start: 1.5,
            end: 2.0,
            min_gap: 0.2,
        },
        ClosurePlan {
            label: "P".into(),
            start: 2.5,
            end: 3.0,
            min_gap: 0.2,
        },
        ClosurePlan {
            label: "B".into(),
            start: 3.5,
            end: 4.0,
            min_gap: 3.0,
        },
    ];
    make_bilabial_fixture_with_plan(frame_rate, 5.0, &plan)
}
