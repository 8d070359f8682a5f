//! Vocal distress from raw audio.
//!
//! Per-frame F0 comes from a normalised autocorrelation peak search between
//! 50 and 400 Hz. The utterance is summarised as mean F0, F0 coefficient of
//! variation, mean RMS energy and jitter, and those four are mapped onto
//! saturating `[0, 1]` components and combined with fixed weights:
//!
//! ```text
//! P = clamp((F0_mean - B) / R)      B, R depend on the estimated speaker sex
//! V = min(1, CV / 0.5)
//! E = min(1, energy / 0.1)
//! J = min(1, jitter / 0.02)
//! D = 0.30 P + 0.35 V + 0.20 E + 0.15 J
//! ```
//!
//! None of this depends on the transcript, so it still works when ASR fails.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{frame_geometry, frame_signal, AudioBuffer, FrameSeries};

pub const MIN_F0_HZ: f64 = 50.0;
pub const MAX_F0_HZ: f64 = 400.0;

/// Initial window used for the sex heuristic.
pub const INITIAL_WINDOW_SECS: f64 = 3.0;
/// Mean initial F0 below this is treated as a male voice.
pub const SEX_SPLIT_HZ: f64 = 165.0;
/// Jitter above this is shown to dispatchers as a pathology-range flag.
/// It does not feed the score.
pub const JITTER_PATHOLOGY_THRESHOLD: f64 = 0.0104;

const CV_SATURATION: f64 = 0.5;
const ENERGY_SATURATION: f64 = 0.1;
const JITTER_SATURATION: f64 = 0.02;

// A later autocorrelation peak must reach this fraction of the best peak to
// be skipped in favour of an earlier one (suppresses sub-octave errors).
const EARLIEST_PEAK_RATIO: f64 = 0.9;
// Search window for the next glottal cycle, relative to the frame period.
const CYCLE_SEARCH_TOLERANCE: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BioacousticError {
    #[error("no voiced speech detected")]
    NoVoicedSpeech,
    #[error("distress weights must be non-negative and sum to 1.0 (got {0})")]
    InvalidWeights(f64),
}

/// Voicing decision thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoicingParams {
    /// Minimum normalised autocorrelation peak.
    pub min_autocorrelation: f64,
    /// Minimum frame RMS.
    pub min_rms: f64,
}

impl Default for VoicingParams {
    fn default() -> Self {
        Self {
            min_autocorrelation: 0.45,
            min_rms: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticFeatures {
    /// Mean F0 over voiced frames, Hz.
    pub f0_mean: f64,
    /// Population standard deviation of voiced-frame F0, Hz.
    pub f0_std: f64,
    /// `f0_std / f0_mean`.
    pub f0_cv: f64,
    /// Mean voiced-frame RMS on the full-scale range.
    pub energy_mean: f64,
    /// Relative mean absolute period difference between adjacent voiced frames.
    pub jitter: f64,
    /// Mean F0 over voiced frames starting in the first three seconds.
    pub f0_init_mean: f64,
    pub voiced_fraction: f64,
}

impl AcousticFeatures {
    pub fn jitter_above_pathology_threshold(&self) -> bool {
        self.jitter > JITTER_PATHOLOGY_THRESHOLD
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SexCategory {
    EstimatedMale,
    EstimatedFemale,
}

/// Heuristic speaker category with its pitch baseline and range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SexEstimate {
    pub category: SexCategory,
    pub baseline_hz: f64,
    pub range_hz: f64,
}

impl SexEstimate {
    pub fn male() -> Self {
        Self {
            category: SexCategory::EstimatedMale,
            baseline_hz: 120.0,
            range_hz: 80.0,
        }
    }

    pub fn female() -> Self {
        Self {
            category: SexCategory::EstimatedFemale,
            baseline_hz: 200.0,
            range_hz: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistressWeights {
    pub pitch: f64,
    pub variability: f64,
    pub energy: f64,
    pub jitter: f64,
}

impl Default for DistressWeights {
    fn default() -> Self {
        Self {
            pitch: 0.30,
            variability: 0.35,
            energy: 0.20,
            jitter: 0.15,
        }
    }
}

impl DistressWeights {
    pub fn validate(&self) -> Result<(), BioacousticError> {
        let all = [self.pitch, self.variability, self.energy, self.jitter];
        let sum: f64 = all.iter().sum();
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(BioacousticError::InvalidWeights(sum));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistressParams {
    pub weights: DistressWeights,
    /// `D` strictly above this is high distress.
    pub high_threshold: f64,
}

impl Default for DistressParams {
    fn default() -> Self {
        Self {
            weights: DistressWeights::default(),
            high_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistressScore {
    /// P, pitch elevation above the speaker baseline.
    pub pitch_elevation: f64,
    /// V, pitch instability.
    pub instability: f64,
    /// E, energy.
    pub energy: f64,
    /// J, perturbation.
    pub perturbation: f64,
    /// D, the weighted composite.
    pub composite: f64,
    pub high_distress: bool,
}

/// Everything the bio-acoustic layer produces for one call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BioacousticAnalysis {
    pub features: AcousticFeatures,
    pub sex: SexEstimate,
    pub distress: DistressScore,
}

/// Frame, track F0 and score a canonical buffer in one go.
pub fn analyze(
    buf: &AudioBuffer,
    voicing: &VoicingParams,
    params: &DistressParams,
) -> Result<BioacousticAnalysis, BioacousticError> {
    let frames = estimate_f0(buf, frame_signal(buf), voicing);
    let features = compute_features(&frames)?;
    let sex = estimate_sex(&features);
    let distress = compute_distress(&features, &sex, params);
    Ok(BioacousticAnalysis {
        features,
        sex,
        distress,
    })
}

/// Fill per-frame F0, voicing and glottal-cycle period.
pub fn estimate_f0(
    buf: &AudioBuffer,
    mut series: FrameSeries,
    voicing: &VoicingParams,
) -> FrameSeries {
    let rate = buf.sample_rate() as f64;
    let (len, hop) = frame_geometry(buf.sample_rate());
    let min_lag = (rate / MAX_F0_HZ).floor() as usize;
    let max_lag = (rate / MIN_F0_HZ).ceil() as usize;
    let samples = buf.samples();

    for (i, frame) in series.frames.iter_mut().enumerate() {
        frame.f0 = None;
        frame.voiced = false;
        frame.cycle_period = None;
        if frame.rms < voicing.min_rms {
            continue;
        }
        let start = i * hop;
        let Some(window) = samples.get(start..start + len) else {
            continue;
        };
        let mean = window.iter().map(|&s| s as f64).sum::<f64>() / len as f64;
        let x: Vec<f64> = window.iter().map(|&s| s as f64 - mean).collect();

        let Some((lag, strength)) = autocorrelation_peak(&x, min_lag, max_lag.min(len - 2)) else {
            continue;
        };
        let f0 = rate / lag;
        if strength < voicing.min_autocorrelation || !(MIN_F0_HZ..=MAX_F0_HZ).contains(&f0) {
            continue;
        }
        frame.f0 = Some(f0);
        frame.voiced = true;
        frame.cycle_period = cycle_period(samples, start, mean, lag).map(|p| p / rate);
    }
    series
}

/// Best normalised autocorrelation peak in `[min_lag, max_lag]`, with
/// parabolic refinement of the lag. Returns `(fractional lag, peak value)`.
fn autocorrelation_peak(x: &[f64], min_lag: usize, max_lag: usize) -> Option<(f64, f64)> {
    let n = x.len();
    if min_lag < 2 || max_lag <= min_lag || max_lag + 1 >= n {
        return None;
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v * v);
    }
    let nacf = |lag: usize| -> f64 {
        let overlap = n - lag;
        let dot: f64 = x[..overlap].iter().zip(&x[lag..]).map(|(a, b)| a * b).sum();
        let e1 = prefix[overlap];
        let e2 = prefix[n] - prefix[lag];
        let denom = (e1 * e2).sqrt();
        if denom <= 0.0 {
            0.0
        } else {
            dot / denom
        }
    };
    let r: Vec<f64> = (min_lag - 1..=max_lag + 1).map(nacf).collect();
    // r[k] corresponds to lag min_lag - 1 + k.
    let peaks: Vec<usize> = (1..r.len() - 1)
        .filter(|&k| r[k] > 0.0 && r[k] >= r[k - 1] && r[k] > r[k + 1])
        .collect();
    let best = peaks
        .iter()
        .map(|&k| r[k])
        .fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return None;
    }
    let k = *peaks
        .iter()
        .find(|&&k| r[k] >= EARLIEST_PEAK_RATIO * best)?;
    let (a, b, c) = (r[k - 1], r[k], r[k + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 1e-12 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let lag = (min_lag - 1 + k) as f64 + shift;
    let value = b - 0.25 * (a - c) * shift;
    Some((lag, value.min(1.0)))
}

/// Length in samples of the first complete cycle after `start`, measured
/// between same-phase upward zero crossings.
fn cycle_period(samples: &[f32], start: usize, offset: f64, period: f64) -> Option<f64> {
    let at = |i: usize| samples[i] as f64 - offset;
    let upward = |i: usize| -> Option<f64> {
        let (a, b) = (at(i), at(i + 1));
        (a < 0.0 && b >= 0.0).then(|| i as f64 + (-a) / (b - a))
    };
    let first_end = (start + period.ceil() as usize + 1).min(samples.len().saturating_sub(1));
    let z0 = (start..first_end).find_map(upward)?;

    let lo = (z0 + period * (1.0 - CYCLE_SEARCH_TOLERANCE)).floor() as usize;
    let hi = ((z0 + period * (1.0 + CYCLE_SEARCH_TOLERANCE)).ceil() as usize)
        .min(samples.len().saturating_sub(1));
    let target = z0 + period;
    (lo..hi)
        .filter_map(upward)
        .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
        .map(|z1| z1 - z0)
}

/// Summarise voiced frames into utterance-level features.
pub fn compute_features(series: &FrameSeries) -> Result<AcousticFeatures, BioacousticError> {
    let voiced: Vec<_> = series
        .frames
        .iter()
        .filter_map(|f| match (f.voiced, f.f0) {
            (true, Some(f0)) => Some((f, f0)),
            _ => None,
        })
        .collect();
    if voiced.is_empty() {
        return Err(BioacousticError::NoVoicedSpeech);
    }
    let n = voiced.len() as f64;
    let f0_mean = voiced.iter().map(|(_, f0)| f0).sum::<f64>() / n;
    let f0_std = (voiced
        .iter()
        .map(|(_, f0)| (f0 - f0_mean).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let energy_mean = voiced.iter().map(|(f, _)| f.rms).sum::<f64>() / n;

    let initial: Vec<f64> = voiced
        .iter()
        .filter(|(f, _)| f.start_time < INITIAL_WINDOW_SECS)
        .map(|(_, f0)| *f0)
        .collect();
    let f0_init_mean = if initial.is_empty() {
        f0_mean
    } else {
        initial.iter().sum::<f64>() / initial.len() as f64
    };

    let mut diffs = Vec::new();
    for pair in series.frames.windows(2) {
        if let (true, true, Some(a), Some(b)) = (
            pair[0].voiced,
            pair[1].voiced,
            pair[0].period(),
            pair[1].period(),
        ) {
            diffs.push((b - a).abs());
        }
    }
    let periods: Vec<f64> = voiced.iter().filter_map(|(f, _)| f.period()).collect();
    let mean_period = periods.iter().sum::<f64>() / periods.len().max(1) as f64;
    let jitter = if diffs.is_empty() || mean_period <= 0.0 {
        0.0
    } else {
        diffs.iter().sum::<f64>() / diffs.len() as f64 / mean_period
    };

    Ok(AcousticFeatures {
        f0_mean,
        f0_std,
        f0_cv: f0_std / f0_mean,
        energy_mean: energy_mean.clamp(0.0, 1.0),
        jitter,
        f0_init_mean,
        voiced_fraction: series.voiced_fraction(),
    })
}

pub fn estimate_sex(features: &AcousticFeatures) -> SexEstimate {
    if features.f0_init_mean < SEX_SPLIT_HZ {
        SexEstimate::male()
    } else {
        SexEstimate::female()
    }
}

pub fn compute_distress(
    features: &AcousticFeatures,
    sex: &SexEstimate,
    params: &DistressParams,
) -> DistressScore {
    let w = &params.weights;
    let pitch_elevation = ((features.f0_mean - sex.baseline_hz) / sex.range_hz).clamp(0.0, 1.0);
    let instability = (features.f0_cv / CV_SATURATION).min(1.0);
    let energy = (features.energy_mean / ENERGY_SATURATION).min(1.0);
    let perturbation = (features.jitter / JITTER_SATURATION).min(1.0);
    let composite = w.pitch * pitch_elevation
        + w.variability * instability
        + w.energy * energy
        + w.jitter * perturbation;
    DistressScore {
        pitch_elevation,
        instability,
        energy,
        perturbation,
        composite,
        high_distress: composite > params.high_threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::Frame;

    fn frames_with_f0(f0s: &[f64]) -> FrameSeries {
        FrameSeries {
            frames: f0s
                .iter()
                .enumerate()
                .map(|(i, &f0)| Frame {
                    start_time: i as f64 * 0.01,
                    rms: 0.05,
                    f0: Some(f0),
                    voiced: true,
                    cycle_period: None,
                })
                .collect(),
            frame_length: 0.04,
            hop: 0.01,
        }
    }

    fn features(f0_mean: f64, f0_cv: f64, energy_mean: f64, jitter: f64) -> AcousticFeatures {
        AcousticFeatures {
            f0_mean,
            f0_std: f0_cv * f0_mean,
            f0_cv,
            energy_mean,
            jitter,
            f0_init_mean: f0_mean,
            voiced_fraction: 1.0,
        }
    }

    #[test]
    fn constant_f0_has_no_variation() {
        let f = compute_features(&frames_with_f0(&[200.0; 50])).unwrap();
        assert!((f.f0_mean - 200.0).abs() < 1e-12);
        assert_eq!(f.f0_cv, 0.0);
        assert_eq!(f.jitter, 0.0);
    }

    #[test]
    fn alternating_f0_matches_hand_arithmetic() {
        let f0s: Vec<f64> = (0..100)
            .map(|i| if i % 2 == 0 { 198.0 } else { 202.0 })
            .collect();
        let f = compute_features(&frames_with_f0(&f0s)).unwrap();
        assert!((f.f0_mean - 200.0).abs() < 1e-9);
        assert!((f.f0_cv - 0.01).abs() < 1e-12);
        // |1/202 - 1/198| / ((1/198 + 1/202) / 2), evaluated independently.
        assert!((f.jitter - 0.020000000000000073).abs() < 1e-12);
    }

    #[test]
    fn all_unvoiced_is_an_error() {
        let mut series = frames_with_f0(&[200.0; 5]);
        for f in &mut series.frames {
            f.voiced = false;
            f.f0 = None;
        }
        assert_eq!(
            compute_features(&series),
            Err(BioacousticError::NoVoicedSpeech)
        );
    }

    #[test]
    fn initial_window_falls_back_to_whole_utterance() {
        let mut series = frames_with_f0(&[150.0, 150.0, 250.0, 250.0]);
        for (i, f) in series.frames.iter_mut().enumerate() {
            f.start_time = 3.0 + i as f64 * 0.01;
        }
        let f = compute_features(&series).unwrap();
        assert_eq!(f.f0_init_mean, f.f0_mean);

        series.frames[0].start_time = 2.99;
        let f = compute_features(&series).unwrap();
        assert_eq!(f.f0_init_mean, 150.0);
    }

    #[test]
    fn sex_heuristic_boundaries() {
        let mut f = features(120.0, 0.0, 0.0, 0.0);
        assert_eq!(estimate_sex(&f), SexEstimate::male());
        f.f0_init_mean = 200.0;
        assert_eq!(estimate_sex(&f), SexEstimate::female());
        f.f0_init_mean = 165.0;
        assert_eq!(estimate_sex(&f).category, SexCategory::EstimatedFemale);
        f.f0_init_mean = 164.999;
        assert_eq!(estimate_sex(&f).category, SexCategory::EstimatedMale);
    }

    #[test]
    fn worked_distress_example() {
        let d = compute_distress(
            &features(170.0, 0.35, 0.08, 0.015),
            &SexEstimate::male(),
            &DistressParams::default(),
        );
        assert!((d.pitch_elevation - 0.625).abs() < 1e-12);
        assert!((d.instability - 0.7).abs() < 1e-12);
        assert!((d.energy - 0.8).abs() < 1e-12);
        assert!((d.perturbation - 0.75).abs() < 1e-12);
        assert!((d.composite - 0.705).abs() < 1e-12);
        assert!(d.high_distress);
    }

    #[test]
    fn floor_features_score_zero() {
        let d = compute_distress(
            &features(120.0, 0.0, 0.0, 0.0),
            &SexEstimate::male(),
            &DistressParams::default(),
        );
        assert_eq!(d.composite, 0.0);
        assert!(!d.high_distress);
    }

    #[test]
    fn threshold_is_strict() {
        // P = 0, V = 1, E = 0.75, J = 0 -> 0.35 + 0.15 = 0.5 exactly.
        let d = compute_distress(
            &features(100.0, 0.5, 0.075, 0.0),
            &SexEstimate::male(),
            &DistressParams::default(),
        );
        assert!((d.composite - 0.5).abs() < 1e-12);
        assert_eq!(d.high_distress, d.composite > 0.5);
    }

    #[test]
    fn weight_validation() {
        assert!(DistressWeights::default().validate().is_ok());
        let bad = DistressWeights {
            pitch: 0.5,
            ..Default::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(BioacousticError::InvalidWeights(_))
        ));
    }

    #[test]
    fn jitter_flag_is_display_only() {
        assert!(features(200.0, 0.0, 0.0, 0.011).jitter_above_pathology_threshold());
        assert!(!features(200.0, 0.0, 0.0, 0.0104).jitter_above_pathology_threshold());
    }
}
