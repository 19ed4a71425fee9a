//! Quality metrics for facial animation clips.
//!
//! Four scalar metrics: a spectral jitter ratio (energy of vertex
//! acceleration above a cutoff frequency), the discrete Frechet distance
//! against a reference clip, a bilabial closure success rate driven by a
//! phoneme alignment, and a normalized expressiveness score over declared
//! facial features. Plus the lip-gap helper the solver's jaw term feeds on.

use serde::{Deserialize, Serialize};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::model::Mesh;

/// Upper/lower lip vertex pairings used for gap measurements.
///
/// `pairs` is ordered across the mouth; `central_pair` indexes the pair
/// whose gap stands in for "the" lip opening; `closure_threshold` (mm) is
/// the gap below which the mouth counts as closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipVertexPairs {
    pub pairs: Vec<(usize, usize)>,
    pub central_pair: usize,
    pub closure_threshold: f64,
}

impl LipVertexPairs {
    pub fn new(
        pairs: Vec<(usize, usize)>,
        central_pair: usize,
        closure_threshold: f64,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty {
                context: "lip pairs",
            });
        }
        if central_pair >= pairs.len() {
            return Err(Error::IndexOutOfRange {
                context: "central lip pair",
                index: central_pair,
                limit: pairs.len(),
            });
        }
        if !(closure_threshold.is_finite() && closure_threshold > 0.0) {
            return Err(Error::invalid(
                "lip pairs",
                format!("closure threshold must be positive, got {closure_threshold}"),
            ));
        }
        Ok(Self {
            pairs,
            central_pair,
            closure_threshold,
        })
    }

    fn check_vertices(&self, vertex_count: usize) -> Result<()> {
        for &(u, l) in &self.pairs {
            let bad = u.max(l);
            if bad >= vertex_count {
                return Err(Error::IndexOutOfRange {
                    context: "lip pair vertex",
                    index: bad,
                    limit: vertex_count,
                });
            }
        }
        Ok(())
    }
}

/// Vertical gaps (mm) between the lip pairs of one frame of absolute
/// positions, clamped at zero for interpenetration, plus the central pair's
/// gap.
pub fn lip_gap(positions: &[f64], pairs: &LipVertexPairs) -> Result<(Vec<f64>, f64)> {
    if !positions.len().is_multiple_of(3) {
        return Err(Error::invalid(
            "lip gap",
            format!(
                "position array length {} is not a multiple of 3",
                positions.len()
            ),
        ));
    }
    pairs.check_vertices(positions.len() / 3)?;
    let gaps: Vec<f64> = pairs
        .pairs
        .iter()
        .map(|&(u, l)| (positions[u * 3 + 1] - positions[l * 3 + 1]).max(0.0))
        .collect();
    let central = gaps[pairs.central_pair];
    Ok((gaps, central))
}

/// Spectral jitter: the fraction of vertex-acceleration energy above
/// `cutoff_hz`.
///
/// Per coordinate channel the second difference
/// `x[t+1] - 2 x[t] + x[t-1]` is taken (endpoints dropped), normalized by
/// its RMS, and transformed with an FFT along time. The metric is the mean
/// over channels of (energy in bins strictly above the cutoff) / (energy in
/// all bins), a dimensionless value in `[0, 1]`. Channels with zero RMS are
/// skipped; a constant clip scores 0. Needs at least 8 frames and a cutoff
/// below the Nyquist rate.
pub fn fourier_jitter(frames: &[Vec<f64>], frame_rate: f64, cutoff_hz: f64) -> Result<f64> {
    if frames.len() < 8 {
        return Err(Error::invalid(
            "fourier jitter",
            format!("need at least 8 frames, got {}", frames.len()),
        ));
    }
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        return Err(Error::invalid(
            "fourier jitter",
            format!("frame rate must be positive, got {frame_rate}"),
        ));
    }
    if !(cutoff_hz.is_finite() && cutoff_hz > 0.0 && cutoff_hz < frame_rate / 2.0) {
        return Err(Error::invalid(
            "fourier jitter",
            format!(
                "cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
                frame_rate / 2.0
            ),
        ));
    }
    let dim = frames[0].len();
    for (t, f) in frames.iter().enumerate() {
        if f.len() != dim {
            return Err(Error::Frame {
                frame: t,
                source: Box::new(Error::DimensionMismatch {
                    context: "fourier jitter",
                    expected: dim,
                    actual: f.len(),
                }),
            });
        }
    }

    let len = frames.len() - 2;
    let fft = FftPlanner::new().plan_fft_forward(len);
    let mut ratios = Vec::new();
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for ch in 0..dim {
        let mut rms = 0.0;
        for t in 1..frames.len() - 1 {
            let a = frames[t + 1][ch] - 2.0 * frames[t][ch] + frames[t - 1][ch];
            rms += a * a;
            buf[t - 1] = Complex::new(a, 0.0);
        }
        let rms = (rms / len as f64).sqrt();
        if rms == 0.0 {
            continue;
        }
        for v in buf.iter_mut() {
            *v = Complex::new(v.re / rms, 0.0);
        }
        fft.process(&mut buf);
        let mut total = 0.0;
        let mut high = 0.0;
        for (k, v) in buf.iter().enumerate() {
            // Fold the mirrored half onto the physical frequency axis.
            let freq = k.min(len - k) as f64 * frame_rate / len as f64;
            let e = v.norm_sqr();
            total += e;
            if freq > cutoff_hz {
                high += e;
            }
        }
        if total > 0.0 {
            ratios.push(high / total);
        }
    }
    if ratios.is_empty() {
        return Ok(0.0);
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

fn point_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Discrete Frechet distance between two clips, each frame treated as one
/// point in `R^{3V}`. Symmetric in its arguments; both clips must share the
/// per-frame dimension but may differ in length.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty {
            context: "frechet distance",
        });
    }
    let dim = a[0].len();
    for f in a.iter().chain(b.iter()) {
        if f.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "frechet distance",
                expected: dim,
                actual: f.len(),
            });
        }
    }
    // Rolling two-row dynamic program over the coupling lattice.
    let cols = b.len();
    let mut prev = vec![0.0f64; cols];
    let mut row = vec![0.0f64; cols];
    prev[0] = point_distance(&a[0], &b[0]);
    for j in 1..cols {
        prev[j] = prev[j - 1].max(point_distance(&a[0], &b[j]));
    }
    for i in 1..a.len() {
        row[0] = prev[0].max(point_distance(&a[i], &b[0]));
        for j in 1..cols {
            let reach = prev[j].min(prev[j - 1]).min(row[j - 1]);
            row[j] = reach.max(point_distance(&a[i], &b[j]));
        }
        std::mem::swap(&mut prev, &mut row);
    }
    Ok(prev[cols - 1])
}

/// One labeled phoneme occurrence, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeInterval {
    pub label: String,
    pub start: f64,
    pub end: f64,
}

impl PhonemeInterval {
    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.end.is_finite() && self.start < self.end) {
            return Err(Error::invalid(
                "phoneme interval",
                format!(
                    "bad interval [{}, {}] for label {:?}",
                    self.start, self.end, self.label
                ),
            ));
        }
        Ok(())
    }
}

/// Outcome of one bilabial instance.
#[derive(Debug, Clone, Serialize)]
pub struct BilabialInstance {
    pub label: String,
    pub start: f64,
    pub end: f64,
    /// False when the interval falls outside the clip; such instances are
    /// excluded from the score.
    pub valid: bool,
    pub min_gap: Option<f64>,
    pub closed: Option<bool>,
}

/// Bilabial closure results: the success fraction plus per-instance detail.
#[derive(Debug, Clone, Serialize)]
pub struct BilabialScore {
    /// `None` when the alignment contains no valid bilabial instance.
    pub score: Option<f64>,
    pub instances: Vec<BilabialInstance>,
}

fn is_bilabial(label: &str) -> bool {
    matches!(label.trim().to_ascii_uppercase().as_str(), "M" | "B" | "P")
}

/// Scores bilabial closures: for every M/B/P occurrence in the alignment,
/// success means the central lip gap drops below the closure threshold on
/// some frame overlapping the occurrence. The score is successes over valid
/// instances. Frames are positions; intervals reaching outside the clip
/// duration are flagged invalid and excluded.
pub fn bilabial_score(
    frames: &[Vec<f64>],
    frame_rate: f64,
    pairs: &LipVertexPairs,
    intervals: &[PhonemeInterval],
) -> Result<BilabialScore> {
    if frames.is_empty() {
        return Err(Error::Empty {
            context: "bilabial score",
        });
    }
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        return Err(Error::invalid(
            "bilabial score",
            format!("frame rate must be positive, got {frame_rate}"),
        ));
    }
    let central: Vec<f64> = frames
        .iter()
        .map(|f| lip_gap(f, pairs).map(|(_, c)| c))
        .collect::<Result<_>>()?;

    let duration = frames.len() as f64 / frame_rate;
    let last = frames.len() - 1;
    let mut instances = Vec::new();
    let mut hits = 0usize;
    let mut valid_count = 0usize;
    for interval in intervals {
        if !is_bilabial(&interval.label) {
            continue;
        }
        interval.validate()?;
        if interval.start < -1e-9 || interval.end > duration + 1e-9 {
            instances.push(BilabialInstance {
                label: interval.label.clone(),
                start: interval.start,
                end: interval.end,
                valid: false,
                min_gap: None,
                closed: None,
            });
            continue;
        }
        // Frames whose sample time lies inside the interval; a sub-frame
        // interval falls back to the frame nearest its midpoint.
        let mut first = ((interval.start * frame_rate - 1e-9).ceil().max(0.0)) as usize;
        let mut after = ((interval.end * frame_rate + 1e-9).floor()) as usize;
        first = first.min(last);
        after = after.min(last);
        if first > after {
            let mid = ((interval.start + interval.end) * 0.5 * frame_rate).round() as usize;
            first = mid.min(last);
            after = first;
        }
        let min_gap = central[first..=after]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let closed = min_gap < pairs.closure_threshold;
        valid_count += 1;
        hits += closed as usize;
        instances.push(BilabialInstance {
            label: interval.label.clone(),
            start: interval.start,
            end: interval.end,
            valid: true,
            min_gap: Some(min_gap),
            closed: Some(closed),
        });
    }
    let score = (valid_count > 0).then(|| hits as f64 / valid_count as f64);
    Ok(BilabialScore { score, instances })
}

/// What a single expressiveness feature measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    /// Euclidean distance between two vertices within a frame.
    VertexPairDistance { a: usize, b: usize },
    /// Mean displacement magnitude of a vertex region relative to neutral.
    RegionMeanDisplacement { vertices: Vec<usize> },
}

/// One scalar facial feature with its normalization range in mm.
///
/// The stock set for a speaking face is eight vertex-pair distances:
/// brow raise left/right, eye opening left/right, mouth width, mouth
/// opening, and lip corner height left/right; models declare the concrete
/// vertex indices and ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressivenessFeature {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    pub range: f64,
}

impl ExpressivenessFeature {
    fn validate(&self, vertex_count: usize) -> Result<()> {
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(Error::invalid(
                "expressiveness feature",
                format!(
                    "feature {:?} has non-positive range {}",
                    self.name, self.range
                ),
            ));
        }
        let check = |v: usize| -> Result<()> {
            if v >= vertex_count {
                return Err(Error::IndexOutOfRange {
                    context: "expressiveness feature vertex",
                    index: v,
                    limit: vertex_count,
                });
            }
            Ok(())
        };
        match &self.kind {
            FeatureKind::VertexPairDistance { a, b } => {
                check(*a)?;
                check(*b)?;
            }
            FeatureKind::RegionMeanDisplacement { vertices } => {
                if vertices.is_empty() {
                    return Err(Error::Empty {
                        context: "expressiveness feature region",
                    });
                }
                for &v in vertices {
                    check(v)?;
                }
            }
        }
        Ok(())
    }

    fn evaluate(&self, positions: &[f64], neutral: &[f64]) -> f64 {
        match &self.kind {
            FeatureKind::VertexPairDistance { a, b } => {
                point_distance(&positions[a * 3..a * 3 + 3], &positions[b * 3..b * 3 + 3])
            }
            FeatureKind::RegionMeanDisplacement { vertices } => {
                let sum: f64 = vertices
                    .iter()
                    .map(|&v| {
                        point_distance(&positions[v * 3..v * 3 + 3], &neutral[v * 3..v * 3 + 3])
                    })
                    .sum();
                sum / vertices.len() as f64
            }
        }
    }
}

/// Mean normalized deviation of the declared features from their neutral
/// values: per frame and feature `|f(frame) - f(neutral)| / range`, averaged
/// over features, then over frames. Invariant to rigid translation applied
/// to both the clip and the neutral mesh.
pub fn expressiveness(
    frames: &[Vec<f64>],
    neutral: &Mesh,
    features: &[ExpressivenessFeature],
) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::Empty {
            context: "expressiveness",
        });
    }
    if features.is_empty() {
        return Err(Error::Empty {
            context: "expressiveness features",
        });
    }
    for feature in features {
        feature.validate(neutral.vertex_count)?;
    }
    let dim = neutral.positions.len();
    for (t, f) in frames.iter().enumerate() {
        if f.len() != dim {
            return Err(Error::Frame {
                frame: t,
                source: Box::new(Error::DimensionMismatch {
                    context: "expressiveness",
                    expected: dim,
                    actual: f.len(),
                }),
            });
        }
    }
    let baseline: Vec<f64> = features
        .iter()
        .map(|f| f.evaluate(&neutral.positions, &neutral.positions))
        .collect();
    let mut total = 0.0;
    for frame in frames {
        let mut per_frame = 0.0;
        for (feature, base) in features.iter().zip(&baseline) {
            per_frame += (feature.evaluate(frame, &neutral.positions) - base).abs() / feature.range;
        }
        total += per_frame / features.len() as f64;
    }
    Ok(total / frames.len() as f64)
}

/// The four clip-level metrics; fields are absent when their inputs were
/// not supplied (no reference clip, no alignment, no features).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fourier_jitter: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frechet_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bilabial_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expressiveness: Option<f64>,
}
