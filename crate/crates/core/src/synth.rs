//! Synthetic voiced signals with known pitch and cycle periods.
//!
//! Used by the examples, the batch fixtures and the DSP tests. The generator
//! builds the waveform cycle by cycle with continuous phase, so every cycle
//! length it reports is exactly the length present in the output.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{AudioBuffer, CANONICAL_RATE};

/// How the fundamental frequency moves over time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PitchContour {
    Steady(f64),
    /// Sinusoidal vibrato: `centre * (1 + depth * sin(2 pi rate t))`.
    Vibrato {
        centre: f64,
        depth: f64,
        rate_hz: f64,
    },
    /// Square-wave alternation between two pitches. Each period of
    /// `segment_secs` spends `high_share` of its time at `high`.
    Alternating {
        low: f64,
        high: f64,
        segment_secs: f64,
        high_share: f64,
    },
}

impl PitchContour {
    fn at(&self, t: f64) -> f64 {
        match *self {
            PitchContour::Steady(f) => f,
            PitchContour::Vibrato {
                centre,
                depth,
                rate_hz,
            } => centre * (1.0 + depth * (TAU * rate_hz * t).sin()),
            PitchContour::Alternating {
                low,
                high,
                segment_secs,
                high_share,
            } => {
                if (t / segment_secs).fract() < high_share {
                    high
                } else {
                    low
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoiceSpec {
    pub contour: PitchContour,
    /// Each cycle's period is scaled by `1 + u`, `u` uniform in
    /// `[-cycle_spread, cycle_spread]`.
    pub cycle_spread: f64,
    /// Peak amplitude of the fundamental.
    pub amplitude: f64,
    /// Relative amplitudes of the 2nd, 3rd, ... harmonics.
    pub harmonics: Vec<f64>,
    pub duration_secs: f64,
    pub seed: u64,
}

impl VoiceSpec {
    pub fn tone(freq: f64, duration_secs: f64, amplitude: f64) -> Self {
        Self {
            contour: PitchContour::Steady(freq),
            cycle_spread: 0.0,
            amplitude,
            harmonics: Vec::new(),
            duration_secs,
            seed: 0,
        }
    }
}

/// A synthesised signal together with the exact length of every cycle
/// it contains, in samples.
#[derive(Debug, Clone)]
pub struct Synthesized {
    pub samples: Vec<f32>,
    pub cycle_periods: Vec<f64>,
}

impl Synthesized {
    pub fn into_buffer(self, source_id: &str) -> AudioBuffer {
        AudioBuffer::from_mono(&self.samples, CANONICAL_RATE, source_id)
    }

    /// Local jitter of the generated cycles: mean absolute difference of
    /// consecutive periods over the mean period.
    pub fn local_jitter(&self) -> f64 {
        let p = &self.cycle_periods;
        if p.len() < 2 {
            return 0.0;
        }
        let diffs: f64 = p.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        diffs / (p.len() - 1) as f64 / mean
    }
}

pub fn synthesize(spec: &VoiceSpec) -> Synthesized {
    let rate = CANONICAL_RATE as f64;
    let n = (spec.duration_secs * rate).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let next_period = |t: f64, rng: &mut ChaCha8Rng| -> f64 {
        let base = rate / spec.contour.at(t);
        let u = if spec.cycle_spread > 0.0 {
            rng.random_range(-spec.cycle_spread..=spec.cycle_spread)
        } else {
            0.0
        };
        base * (1.0 + u)
    };

    let norm = 1.0 + spec.harmonics.iter().map(|h| h.abs()).sum::<f64>();
    let mut samples = Vec::with_capacity(n);
    let mut periods = Vec::new();
    let mut period = next_period(0.0, &mut rng);
    // Phase in cycles, within the current cycle.
    let mut phase = 0.0;
    for i in 0..n {
        let mut v = (TAU * phase).sin();
        for (k, h) in spec.harmonics.iter().enumerate() {
            v += h * (TAU * (k + 2) as f64 * phase).sin();
        }
        samples.push((spec.amplitude * v / norm) as f32);

        phase += 1.0 / period;
        if phase >= 1.0 {
            // Time past the cycle boundary, in samples, is spent in the new cycle.
            let over = (phase - 1.0) * period;
            periods.push(period);
            period = next_period((i + 1) as f64 / rate, &mut rng);
            phase = over / period;
        }
    }
    Synthesized {
        samples,
        cycle_periods: periods,
    }
}

/// Steady sine tone as a canonical buffer.
pub fn tone(freq: f64, duration_secs: f64, amplitude: f64) -> AudioBuffer {
    synthesize(&VoiceSpec::tone(freq, duration_secs, amplitude)).into_buffer("tone")
}

/// Uniform white noise with the given RMS.
pub fn white_noise(duration_secs: f64, rms: f64, seed: u64) -> AudioBuffer {
    let n = (duration_secs * CANONICAL_RATE as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Uniform on [-a, a] has RMS a / sqrt(3).
    let a = rms * 3f64.sqrt();
    let samples: Vec<f32> = (0..n).map(|_| rng.random_range(-a..=a) as f32).collect();
    AudioBuffer::from_mono(&samples, CANONICAL_RATE, "noise")
}

/// Preset speaking styles used by the examples and batch fixtures.
pub mod presets {
    use super::*;

    /// Low, steady, quiet male-range voice. Scores near zero distress.
    pub fn calm(duration_secs: f64, seed: u64) -> VoiceSpec {
        VoiceSpec {
            contour: PitchContour::Steady(118.0),
            cycle_spread: 0.0,
            amplitude: 0.02,
            harmonics: vec![0.3, 0.1],
            duration_secs,
            seed,
        }
    }

    /// Raised, wavering, loud, rough voice. Scores above the high-distress
    /// threshold but below the early-exit thresholds.
    pub fn distressed(duration_secs: f64, seed: u64) -> VoiceSpec {
        VoiceSpec {
            contour: PitchContour::Vibrato {
                centre: 290.0,
                depth: 0.2,
                rate_hz: 4.0,
            },
            cycle_spread: 0.03,
            amplitude: 0.5,
            harmonics: vec![0.3, 0.1],
            duration_secs,
            seed,
        }
    }

    /// Wide pitch swings, mostly high. Scores between 0.8 and 0.9.
    pub fn severe(duration_secs: f64, seed: u64) -> VoiceSpec {
        VoiceSpec {
            contour: PitchContour::Alternating {
                low: 160.0,
                high: 370.0,
                segment_secs: 0.4,
                high_share: 0.7,
            },
            cycle_spread: 0.03,
            amplitude: 0.5,
            harmonics: vec![0.3, 0.1],
            duration_secs,
            seed,
        }
    }

    /// Extreme pitch swings at full intensity. Scores above 0.9.
    pub fn extreme(duration_secs: f64, seed: u64) -> VoiceSpec {
        VoiceSpec {
            contour: PitchContour::Alternating {
                low: 110.0,
                high: 390.0,
                segment_secs: 0.4,
                high_share: 0.7,
            },
            cycle_spread: 0.03,
            amplitude: 0.6,
            harmonics: vec![0.3, 0.1],
            duration_secs,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steady_tone_cycles_are_exact() {
        let s = synthesize(&VoiceSpec::tone(200.0, 1.0, 0.5));
        assert!(s.cycle_periods.iter().all(|p| (p - 80.0).abs() < 1e-9));
        assert_eq!(s.samples.len(), 16_000);
        assert_eq!(s.local_jitter(), 0.0);
    }

    #[test]
    fn cycle_periods_cover_the_signal() {
        let mut spec = VoiceSpec::tone(150.0, 2.0, 0.5);
        spec.cycle_spread = 0.02;
        spec.seed = 9;
        let s = synthesize(&spec);
        let covered: f64 = s.cycle_periods.iter().sum();
        assert!(covered <= s.samples.len() as f64);
        assert!(s.samples.len() as f64 - covered < 120.0);
    }

    #[test]
    fn noise_rms_is_as_requested() {
        let buf = white_noise(2.0, 0.05, 1);
        let rms = (buf
            .samples()
            .iter()
            .map(|&s| (s as f64).powi(2))
            .sum::<f64>()
            / buf.samples().len() as f64)
            .sqrt();
        assert!((rms - 0.05).abs() < 0.002);
    }
}
