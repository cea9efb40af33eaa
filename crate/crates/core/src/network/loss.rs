//! Binary cross-entropy with a probability clamp for numerical safety.

use serde::{Deserialize, Serialize};

/// Predictions are clamped to [PROB_CLAMP, 1 - PROB_CLAMP] inside the
/// loss so a saturated sigmoid cannot produce an infinite loss.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossReduction {
    Sum,
    Mean,
}

///-(y ln p + (1 - y) ln(1 - p)) with p clamped.
pub fn bce_loss_single(y_hat: f64, y: f64) -> f64 {
    let p = y_hat.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// d(loss)/d(y_hat). Inside the clamped region the gradient is zero,
/// matching the flat clamped loss.
pub fn bce_grad_single(y_hat: f64, y: f64) -> f64 {
    if y_hat < PROB_CLAMP || y_hat > 1.0 - PROB_CLAMP {
        return 0.0;
    }
    -y / y_hat + (1.0 - y) / (1.0 - y_hat)
}

/// Batch loss: sum over samples, divided by the batch size under Mean.
pub fn bce_loss(y_hat: &[f64], y: &[f64], reduction: LossReduction) -> f64 {
    assert_eq!(y_hat.len(), y.len(), "prediction and label counts differ");
    let total: f64 = y_hat
        .iter()
        .zip(y)
        .map(|(&p, &t)| bce_loss_single(p, t))
        .sum();
    match reduction {
        LossReduction::Sum => total,
        LossReduction::Mean => total / y.len() as f64,
    }
}
