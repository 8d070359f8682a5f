//! Load a WAV, normalise it to 16 kHz mono and cut it into analysis frames.
//!
//! `cargo run --example ingest_and_frame [path.wav]`

use calltriage::audio::{frame_signal, load_audio_bytes, load_audio_file};
use calltriage::synth::tone;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let buf = match std::env::args().nth(1) {
        Some(path) => load_audio_file(path)?,
        None => {
            // 44.1 kHz tone, written and read back so the resampler runs
            let raw = tone(220.0, 1.5, 0.4);
            let bytes = raw.to_wav_bytes();
            load_audio_bytes(&bytes, "tone")?
        }
    };
    println!(
        "{}: {:.2}s at {} Hz, {} channel(s) originally",
        buf.source_id(),
        buf.duration(),
        buf.sample_rate(),
        buf.channel_count_original()
    );
    let frames = frame_signal(&buf);
    println!(
        "{} frames of {:.0} ms every {:.0} ms",
        frames.frames.len(),
        frames.frame_length * 1000.0,
        frames.hop * 1000.0
    );
    for f in frames.frames.iter().step_by(25).take(6) {
        println!("  t={:.2}s rms={:.3}", f.start_time, f.rms);
    }
    Ok(())
}
