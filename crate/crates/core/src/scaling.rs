//! ASR accuracy planning from model size and training data.
//!
//! `WER = 158.06 · M^-0.255 · D^-0.269`, with `M` in millions of parameters,
//! `D` in hours of transcribed training audio and the result in percent.

use thiserror::Error;

pub const COEFFICIENT: f64 = 158.06;
pub const MODEL_EXPONENT: f64 = -0.255;
pub const DATA_EXPONENT: f64 = -0.269;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{name} must be finite and strictly positive, got {value}")]
pub struct DomainError {
    pub name: &'static str,
    pub value: f64,
}

/// Predicted word error rate in percent.
pub fn predict_wer(model_params_millions: f64, dataset_hours: f64) -> Result<f64, DomainError> {
    for (name, value) in [
        ("model size", model_params_millions),
        ("dataset hours", dataset_hours),
    ] {
        if !(value.is_finite() && value > 0.0) {
            return Err(DomainError { name, value });
        }
    }
    Ok(
        COEFFICIENT
            * model_params_millions.powf(MODEL_EXPONENT)
            * dataset_hours.powf(DATA_EXPONENT),
    )
}

/// Hours of data needed to reach `target_wer` at a given model size.
pub fn hours_for_target(model_params_millions: f64, target_wer: f64) -> Result<f64, DomainError> {
    let base = predict_wer(model_params_millions, 1.0)?;
    if !(target_wer.is_finite() && target_wer > 0.0) {
        return Err(DomainError {
            name: "target WER",
            value: target_wer,
        });
    }
    Ok((target_wer / base).powf(1.0 / DATA_EXPONENT))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_inputs() {
        assert_eq!(predict_wer(1.0, 1.0).unwrap(), 158.06);
    }

    #[test]
    fn whisper_medium_on_small_corpus() {
        // independently evaluated: 10.584112300477312
        let w = predict_wer(769.0, 42.58).unwrap();
        assert!((w - 10.584112300477312).abs() < 1e-9, "{w}");
    }

    #[test]
    fn rejects_non_positive() {
        assert!(predict_wer(0.0, 1.0).is_err());
        assert!(predict_wer(1.0, -3.0).is_err());
        assert!(predict_wer(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn inverse_round_trips() {
        let h = hours_for_target(769.0, 5.0).unwrap();
        assert!((predict_wer(769.0, h).unwrap() - 5.0).abs() < 1e-9);
    }
}
