use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Batch size and seen-pairs budget scaled up so that the English portion of
/// training keeps the English-only budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingPlan {
    pub english_share: f64,
    /// `1 / english_share` rounded to one decimal.
    pub scale_factor: f64,
    pub base_batch: u64,
    pub scaled_batch: u64,
    pub base_seen_pairs: u64,
    pub scaled_seen_pairs: u64,
}

/// The factor is kept in integer tenths, so `scaled = base * tenths / 10`
/// floors exactly instead of through a float product.
pub fn plan_training(
    english_share: f64,
    base_batch: u64,
    base_seen_pairs: u64,
) -> Result<TrainingPlan> {
    if !(english_share > 0.0 && english_share <= 1.0) {
        return Err(Error::validation(format!(
            "english_share must be in (0, 1], got {english_share}"
        )));
    }
    let tenths = (10.0 / english_share).round() as u64;
    let scale = |base: u64, what: &str| {
        base.checked_mul(tenths)
            .map(|v| v / 10)
            .ok_or_else(|| Error::validation(format!("scaled {what} overflows u64")))
    };
    Ok(TrainingPlan {
        english_share,
        scale_factor: tenths as f64 / 10.0,
        base_batch,
        scaled_batch: scale(base_batch, "batch")?,
        base_seen_pairs,
        scaled_seen_pairs: scale(base_seen_pairs, "seen pairs")?,
    })
}
