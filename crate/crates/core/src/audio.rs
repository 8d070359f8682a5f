//! Audio ingest: decode 16-bit PCM WAV, downmix to mono, resample to the
//! canonical 16 kHz rate and cut the signal into analysis frames.
//!
//! Samples are scaled to full-scale floating point (`i16 / 32768`), so an RMS
//! of 1.0 is a full-scale square wave. The bio-acoustic energy scale is
//! defined against this range.

use std::f64::consts::PI;
use std::io::{Cursor, Read, Seek};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Canonical sample rate for every buffer leaving this module.
pub const CANONICAL_RATE: u32 = 16_000;
/// Calls shorter than this are rejected.
pub const MIN_DURATION_SECS: f64 = 0.5;
/// Analysis frame length (40 ms).
pub const FRAME_LENGTH_SECS: f64 = 0.040;
/// Analysis hop (10 ms).
pub const FRAME_HOP_SECS: f64 = 0.010;

const SUPPORTED_RATES: [u32; 5] = [8_000, 16_000, 22_050, 44_100, 48_000];

// Sinc zero crossings on each side of the resampling kernel.
const SINC_HALF_WIDTH: f64 = 16.0;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("audio too short: {duration:.3} s (minimum {MIN_DURATION_SECS} s)")]
    EmptyAudio { duration: f64 },
    #[error("i/o error reading audio: {0}")]
    Io(#[from] std::io::Error),
}

/// Mono, 16 kHz, full-scale normalised call audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
    channel_count_original: u16,
    source_id: String,
}

impl AudioBuffer {
    /// Build a canonical buffer from mono samples at an arbitrary rate.
    ///
    /// Samples are clamped to `[-1, 1]` and resampled to 16 kHz. No minimum
    /// duration is enforced here; that is a property of [`load_audio`].
    pub fn from_mono(samples: &[f32], sample_rate: u32, source_id: impl Into<String>) -> Self {
        let clamped: Vec<f32> = samples.iter().map(|s| s.clamp(-1.0, 1.0)).collect();
        let samples = if sample_rate == CANONICAL_RATE {
            clamped
        } else {
            resample(&clamped, sample_rate, CANONICAL_RATE)
        };
        Self {
            samples,
            sample_rate: CANONICAL_RATE,
            channel_count_original: 1,
            source_id: source_id.into(),
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn channel_count_original(&self) -> u16 {
        self.channel_count_original
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }

    /// Encode as a 16-bit mono WAV at the canonical rate.
    pub fn to_wav_bytes(&self) -> Vec<u8> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        {
            let mut writer =
                hound::WavWriter::new(&mut cursor, spec).expect("in-memory wav writer");
            for &s in &self.samples {
                writer
                    .write_sample(float_to_i16(s))
                    .expect("in-memory wav write");
            }
            writer.finalize().expect("in-memory wav finalize");
        }
        cursor.into_inner()
    }
}

fn float_to_i16(s: f32) -> i16 {
    (s.clamp(-1.0, 1.0) * 32767.0).round() as i16
}

/// Decode a WAV file from disk. The file stem becomes the buffer's source id.
pub fn load_audio_file(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let path = path.as_ref();
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    load_audio(file, source_id)
}

/// Decode WAV bytes held in memory.
pub fn load_audio_bytes(
    bytes: &[u8],
    source_id: impl Into<String>,
) -> Result<AudioBuffer, AudioError> {
    load_audio(Cursor::new(bytes), source_id)
}

/// Decode a 16-bit PCM WAV stream into a canonical [`AudioBuffer`].
///
/// Stereo input is downmixed by averaging the two channels.
pub fn load_audio<R: Read + Seek>(
    reader: R,
    source_id: impl Into<String>,
) -> Result<AudioBuffer, AudioError> {
    let mut wav = hound::WavReader::new(reader).map_err(map_hound)?;
    let spec = wav.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::UnsupportedFormat(format!(
            "expected 16-bit integer PCM, got {:?} {}-bit",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if spec.channels == 0 || spec.channels > 2 {
        return Err(AudioError::UnsupportedFormat(format!(
            "{} channels (mono or stereo only)",
            spec.channels
        )));
    }
    if !SUPPORTED_RATES.contains(&spec.sample_rate) {
        return Err(AudioError::UnsupportedFormat(format!(
            "sample rate {} Hz",
            spec.sample_rate
        )));
    }

    let raw = wav
        .samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<Result<Vec<f32>, _>>()
        .map_err(map_hound)?;
    let mono = if spec.channels == 2 {
        downmix_stereo(&raw)
    } else {
        raw
    };

    let mut buf = AudioBuffer::from_mono(&mono, spec.sample_rate, source_id);
    buf.channel_count_original = spec.channels;
    let duration = buf.duration();
    if duration < MIN_DURATION_SECS {
        return Err(AudioError::EmptyAudio { duration });
    }
    Ok(buf)
}

fn map_hound(err: hound::Error) -> AudioError {
    match err {
        hound::Error::IoError(e) => AudioError::Io(e),
        other => AudioError::UnsupportedFormat(other.to_string()),
    }
}

/// Average interleaved L/R pairs. A trailing odd sample is dropped.
pub fn downmix_stereo(interleaved: &[f32]) -> Vec<f32> {
    interleaved
        .chunks_exact(2)
        .map(|lr| (lr[0] + lr[1]) / 2.0)
        .collect()
}

/// Band-limited (Hann-windowed sinc) resampling.
///
/// Output length is `round(len * to / from)`, which keeps the duration within
/// one output sample period.
pub fn resample(input: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    let ratio = to as f64 / from as f64;
    let out_len = (input.len() as f64 * ratio).round() as usize;
    // Cutoff relative to the input Nyquist frequency.
    let cutoff = ratio.min(1.0);
    let reach = SINC_HALF_WIDTH / cutoff;
    let step = from as f64 / to as f64;

    (0..out_len)
        .map(|j| {
            let centre = j as f64 * step;
            let lo = (centre - reach).ceil().max(0.0) as usize;
            let hi = ((centre + reach).floor() as usize).min(input.len() - 1);
            let mut acc = 0.0;
            let mut norm = 0.0;
            for (k, &x) in input.iter().enumerate().take(hi + 1).skip(lo) {
                let d = centre - k as f64;
                let w = cutoff * sinc(cutoff * d) * hann(d / reach);
                acc += x as f64 * w;
                norm += w;
            }
            // Normalising by the kernel sum keeps DC gain at exactly one,
            // including near the edges where the kernel is truncated.
            let y = if norm.abs() > 1e-12 { acc / norm } else { 0.0 };
            y.clamp(-1.0, 1.0) as f32
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn hann(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (PI * x).cos())
    }
}

/// One analysis frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    /// Seconds from the start of the buffer.
    pub start_time: f64,
    /// Frame RMS on the full-scale amplitude range, in `[0, 1]`.
    pub rms: f64,
    /// Frame F0 in Hz, present only for voiced frames.
    pub f0: Option<f64>,
    pub voiced: bool,
    /// Length in seconds of the first complete glottal cycle in the frame,
    /// when it could be measured. Used for jitter; `1 / f0` otherwise.
    pub cycle_period: Option<f64>,
}

impl Frame {
    /// Period used for jitter: measured cycle period, else `1 / f0`.
    pub fn period(&self) -> Option<f64> {
        self.cycle_period.or_else(|| self.f0.map(|f| 1.0 / f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSeries {
    pub frames: Vec<Frame>,
    pub frame_length: f64,
    pub hop: f64,
}

impl FrameSeries {
    pub fn voiced_count(&self) -> usize {
        self.frames.iter().filter(|f| f.voiced).count()
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.frames.is_empty() {
            0.0
        } else {
            self.voiced_count() as f64 / self.frames.len() as f64
        }
    }
}

/// Frame length and hop in samples for a given rate.
pub fn frame_geometry(sample_rate: u32) -> (usize, usize) {
    let len = (FRAME_LENGTH_SECS * sample_rate as f64).round() as usize;
    let hop = (FRAME_HOP_SECS * sample_rate as f64).round() as usize;
    (len, hop)
}

/// Number of whole frames that fit in `n` samples.
pub fn frame_count(n: usize, frame_len: usize, hop: usize) -> usize {
    if n < frame_len {
        0
    } else {
        (n - frame_len) / hop + 1
    }
}

/// Cut the buffer into 40 ms frames with a 10 ms hop and compute RMS.
///
/// F0 and voicing are left unset; see [`crate::bioacoustics::estimate_f0`].
pub fn frame_signal(buf: &AudioBuffer) -> FrameSeries {
    let (len, hop) = frame_geometry(buf.sample_rate());
    let samples = buf.samples();
    let rate = buf.sample_rate() as f64;
    let frames = (0..frame_count(samples.len(), len, hop))
        .map(|i| {
            let start = i * hop;
            let window = &samples[start..start + len];
            let energy: f64 = window.iter().map(|&s| (s as f64) * (s as f64)).sum();
            Frame {
                start_time: start as f64 / rate,
                rms: (energy / len as f64).sqrt().min(1.0),
                f0: None,
                voiced: false,
                cycle_period: None,
            }
        })
        .collect();
    FrameSeries {
        frames,
        frame_length: len as f64 / rate,
        hop: hop as f64 / rate,
    }
}
