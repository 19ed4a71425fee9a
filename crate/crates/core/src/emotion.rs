//! Emotion probability timelines: windowed aggregation of classifier
//! output, keyframe resampling, online smoothing, and cross-fades.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class order used by every probability vector in this module.
pub const EMOTION_CLASSES: [&str; 6] = ["anger", "disgust", "fear", "joy", "neutral", "sadness"];

/// A point on the 6-class probability simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmotionProbs(pub [f64; 6]);

impl EmotionProbs {
    /// Validates entries are finite, non-negative, and sum to 1 within 1e-6.
    pub fn new(probs: [f64; 6]) -> Result<Self> {
        for (i, p) in probs.iter().enumerate() {
            if !(p.is_finite() && *p >= 0.0) {
                return Err(Error::invalid(
                    "emotion probabilities",
                    format!("class {:?} has invalid probability {p}", EMOTION_CLASSES[i]),
                ));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(
                "emotion probabilities",
                format!("probabilities sum to {sum}, expected 1"),
            ));
        }
        Ok(Self(probs))
    }

    /// Scales a non-negative vector back onto the simplex. Errors on a zero
    /// or non-finite total.
    pub fn renormalized(values: [f64; 6]) -> Result<Self> {
        let sum: f64 = values.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::invalid(
                "emotion probabilities",
                format!("cannot renormalize vector with total {sum}"),
            ));
        }
        let mut out = values;
        for v in out.iter_mut() {
            *v /= sum;
        }
        Ok(Self(out))
    }

    /// Index and name of the most probable class (first on ties).
    pub fn dominant(&self) -> (usize, &'static str) {
        let mut best = 0;
        for i in 1..6 {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        (best, EMOTION_CLASSES[best])
    }
}

/// Sliding-window layout for classifying a clip: long overlapping windows,
/// each subdivided into overlapping sub-windows. All values in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub window_size: f64,
    pub stride: f64,
    #[serde(rename = "sub_window")]
    pub sub_window_size: f64,
    pub sub_stride: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_size: 1.9,
            stride: 0.5,
            sub_window_size: 0.625,
            sub_stride: 0.31,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("window_size", self.window_size),
            ("stride", self.stride),
            ("sub_window_size", self.sub_window_size),
            ("sub_stride", self.sub_stride),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(
                    "window config",
                    format!("{name} must be positive, got {v}"),
                ));
            }
        }
        if self.sub_window_size > self.window_size {
            return Err(Error::invalid(
                "window config",
                format!(
                    "sub-window {} s exceeds window {} s",
                    self.sub_window_size, self.window_size
                ),
            ));
        }
        if self.stride > self.window_size {
            return Err(Error::invalid(
                "window config",
                format!(
                    "stride {} s exceeds window {} s, clip would have gaps",
                    self.stride, self.window_size
                ),
            ));
        }
        if self.sub_stride > self.sub_window_size {
            return Err(Error::invalid(
                "window config",
                format!(
                    "sub-stride {} s exceeds sub-window {} s, windows would have gaps",
                    self.sub_stride, self.sub_window_size
                ),
            ));
        }
        Ok(())
    }
}

/// One planned window with its sub-window spans.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowPlan {
    pub start: f64,
    pub end: f64,
    pub sub_windows: Vec<(f64, f64)>,
}

fn spans(origin: f64, limit: f64, width: f64, stride: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let start = origin + k as f64 * stride;
        let end = (start + width).min(limit);
        out.push((start, end));
        // The window reaching the clip end is the last one; the epsilon
        // keeps float accumulation from spawning a zero-length straggler.
        if start + width >= limit - 1e-9 {
            break;
        }
        k += 1;
    }
    out
}

/// Lays out analysis windows over a clip of `duration` seconds. Every
/// window starts at a stride multiple; the final window is clamped to the
/// clip end. A clip shorter than one window yields a single clamped window.
pub fn plan_windows(duration: f64, config: &WindowConfig) -> Result<Vec<WindowPlan>> {
    config.validate()?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid(
            "window plan",
            format!("duration must be positive, got {duration}"),
        ));
    }
    let plans = spans(0.0, duration, config.window_size, config.stride)
        .into_iter()
        .map(|(start, end)| WindowPlan {
            start,
            end,
            sub_windows: spans(start, end, config.sub_window_size, config.sub_stride),
        })
        .collect();
    Ok(plans)
}

/// Mean of sub-window probabilities, renormalized. This is the reduction
/// from per-sub-window classifier output to one vector per window.
pub fn aggregate_window(sub_probs: &[EmotionProbs]) -> Result<EmotionProbs> {
    if sub_probs.is_empty() {
        return Err(Error::Empty {
            context: "window aggregation",
        });
    }
    let mut mean = [0.0f64; 6];
    for p in sub_probs {
        for (m, v) in mean.iter_mut().zip(&p.0) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= sub_probs.len() as f64;
    }
    EmotionProbs::renormalized(mean)
}

/// Probability keyframes at strictly increasing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionTrack {
    pub keyframes: Vec<(f64, EmotionProbs)>,
}

impl EmotionTrack {
    pub fn new(keyframes: Vec<(f64, EmotionProbs)>) -> Result<Self> {
        if keyframes.is_empty() {
            return Err(Error::Empty {
                context: "emotion track",
            });
        }
        for (t, _) in &keyframes {
            if !t.is_finite() {
                return Err(Error::invalid(
                    "emotion track",
                    format!("non-finite keyframe time {t}"),
                ));
            }
        }
        for pair in keyframes.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::invalid(
                    "emotion track",
                    format!(
                        "keyframe times must strictly increase, got {} then {}",
                        pair[0].0, pair[1].0
                    ),
                ));
            }
        }
        Ok(Self { keyframes })
    }

    /// Probabilities at time `t`: the exact keyframe vector at keyframe
    /// times and beyond the track's ends, linear interpolation (then
    /// renormalization) in between.
    pub fn sample(&self, t: f64) -> EmotionProbs {
        let keys = &self.keyframes;
        if t <= keys[0].0 {
            return keys[0].1;
        }
        if t >= keys[keys.len() - 1].0 {
            return keys[keys.len() - 1].1;
        }
        // Binary search for the bracketing segment.
        let idx = keys.partition_point(|(kt, _)| *kt <= t);
        let (t0, p0) = keys[idx - 1];
        if t == t0 {
            return p0;
        }
        let (t1, p1) = keys[idx];
        let alpha = (t - t0) / (t1 - t0);
        let mut mixed = [0.0f64; 6];
        for i in 0..6 {
            mixed[i] = (1.0 - alpha) * p0.0[i] + alpha * p1.0[i];
        }
        // A convex mix of simplex points stays on the simplex up to float
        // error; renormalization removes that error.
        EmotionProbs::renormalized(mixed).expect("convex mix of probabilities has positive total")
    }
}

/// Samples a keyframe track on a uniform grid: `floor(duration * rate) + 1`
/// samples at `i / rate` covering `[0, duration]`.
pub fn offline_timeline(
    track: &EmotionTrack,
    sample_rate: f64,
    duration: f64,
) -> Result<Vec<EmotionProbs>> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::invalid(
            "emotion timeline",
            format!("sample rate must be positive, got {sample_rate}"),
        ));
    }
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::invalid(
            "emotion timeline",
            format!("duration must be non-negative, got {duration}"),
        ));
    }
    let count = (duration * sample_rate).floor() as usize + 1;
    Ok((0..count)
        .map(|i| track.sample(i as f64 / sample_rate))
        .collect())
}

/// Exponential smoother for streaming probability vectors:
/// `s_t = (1 - alpha) * x_t + alpha * s_{t-1}`, seeded with the first
/// input, each output renormalized. Larger `alpha` means smoother output;
/// `alpha = 0` passes input through.
#[derive(Debug, Clone)]
pub struct OnlineSmoother {
    alpha: f64,
    state: Option<[f64; 6]>,
}

impl OnlineSmoother {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && (0.0..1.0).contains(&alpha)) {
            return Err(Error::invalid(
                "online smoother",
                format!("smoothing factor must lie in [0, 1), got {alpha}"),
            ));
        }
        Ok(Self { alpha, state: None })
    }

    pub fn push(&mut self, input: EmotionProbs) -> EmotionProbs {
        let next = match self.state {
            None => input.0,
            Some(prev) => {
                let mut mixed = [0.0f64; 6];
                for i in 0..6 {
                    mixed[i] = (1.0 - self.alpha) * input.0[i] + self.alpha * prev[i];
                }
                mixed
            }
        };
        self.state = Some(next);
        EmotionProbs::renormalized(next).expect("smoothed probabilities have positive total")
    }

    pub fn reset(&mut self) {
        self.state = None;
    }
}

/// Linear cross-fade `alpha * from + (1 - alpha) * to` over arbitrary
/// equal-length expression vectors (weights, probabilities, positions).
/// No renormalization: at `alpha` 1 and 0 the endpoints come back exactly.
pub fn transition_blend(from: &[f64], to: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if from.len() != to.len() {
        return Err(Error::DimensionMismatch {
            context: "transition blend",
            expected: from.len(),
            actual: to.len(),
        });
    }
    if !(alpha.is_finite() && (0.0..=1.0).contains(&alpha)) {
        return Err(Error::invalid(
            "transition blend",
            format!("blend factor must lie in [0, 1], got {alpha}"),
        ));
    }
    Ok(from
        .iter()
        .zip(to)
        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
        .collect())
}
