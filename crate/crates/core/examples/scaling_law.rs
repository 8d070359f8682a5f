//! Predict word error rate from model size and fine-tuning hours, and
//! invert it to size a data collection effort.

use calltriage::scaling::{hours_for_target, predict_wer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>8} {:>8} {:>8}", "params M", "hours", "WER %");
    for m in [39.0, 244.0, 769.0, 1550.0] {
        for d in [10.0, 42.58, 100.0] {
            println!("{m:>8.0} {d:>8.2} {:>8.2}", predict_wer(m, d)?);
        }
    }
    let target = 12.0;
    println!(
        "\nhours needed for {target}% WER with 769M params: {:.1}",
        hours_for_target(769.0, target)?
    );
    if let Err(e) = predict_wer(-1.0, 10.0) {
        println!("out of domain: {e}");
    }
    Ok(())
}
