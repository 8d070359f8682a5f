//! Score synthetic voices for vocal distress.
//!
//! `cargo run --example vocal_distress [path.wav]`

use calltriage::audio::load_audio_file;
use calltriage::bioacoustics::{analyze, DistressParams, VoicingParams};
use calltriage::synth::{presets, synthesize};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut inputs = Vec::new();
    if let Some(path) = std::env::args().nth(1) {
        inputs.push(load_audio_file(path)?);
    } else {
        inputs.push(synthesize(&presets::calm(4.0, 1)).into_buffer("calm"));
        inputs.push(synthesize(&presets::distressed(4.0, 1)).into_buffer("distressed"));
        inputs.push(synthesize(&presets::severe(4.0, 1)).into_buffer("severe"));
        inputs.push(synthesize(&presets::extreme(4.0, 1)).into_buffer("extreme"));
    }

    println!(
        "{:<12} {:>7} {:>7} {:>6} {:>6} {:>6} {:>6} {:>6}",
        "voice", "F0", "jitter", "P", "V", "E", "J", "D"
    );
    for buf in &inputs {
        match analyze(buf, &VoicingParams::default(), &DistressParams::default()) {
            Ok(a) => {
                let d = a.distress;
                println!(
                    "{:<12} {:>7.1} {:>7.4} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>6.3}{}",
                    buf.source_id(),
                    a.features.f0_mean,
                    a.features.jitter,
                    d.pitch_elevation,
                    d.instability,
                    d.energy,
                    d.perturbation,
                    d.composite,
                    if d.high_distress { "  HIGH" } else { "" }
                );
            }
            Err(e) => println!("{:<12} {e}", buf.source_id()),
        }
    }
    Ok(())
}
