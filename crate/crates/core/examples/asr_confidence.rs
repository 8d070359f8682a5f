//! Turn token log-probabilities into an utterance confidence and a band.

use calltriage::asr::{band, utterance_confidence, ConfidenceThresholds};

fn main() {
    let thresholds = ConfidenceThresholds::default();
    let utterances: [(&str, &[f64]); 4] = [
        ("clear speech", &[-0.02, -0.05, -0.01, -0.10]),
        ("accented speech", &[-0.3, -0.9, -0.4, -0.6, -0.5]),
        ("heavy noise", &[-1.8, -2.5, -1.1, -3.0]),
        ("silence", &[]),
    ];
    for (name, logprobs) in utterances {
        let c = utterance_confidence(logprobs);
        println!("{name:<16} C={c:.3} band={:?}", band(c, &thresholds));
    }
}
