//! Conversion of natural-scale ratings to the conventional Elo scale, plus
//! plot-ready exports (rating histogram, two-system scatter).

use std::collections::BTreeMap;
use std::f64::consts::LOG10_E;

use crate::error::{Error, Result};
use crate::model::{PlayerId, RatingTable};

/// `400 * log10(e)`: converts the natural logistic to Elo's base-10, 400-point curve.
pub const ELO_SCALE: f64 = 400.0 * LOG10_E;

/// Mean rating of the competition player pool on the Elo scale.
pub const DEFAULT_OFFSET: f64 = 2338.0;

pub const DEFAULT_BUCKET_WIDTH: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Offset {
    Fixed(f64),
    /// Pick the offset so the scaled ratings average to this value.
    MatchMean(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationParams {
    pub scale: f64,
    pub offset: Offset,
}

impl Default for NormalizationParams {
    fn default() -> Self {
        NormalizationParams {
            scale: ELO_SCALE,
            offset: Offset::Fixed(DEFAULT_OFFSET),
        }
    }
}

impl NormalizationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::invalid("scale must be positive and finite"));
        }
        let offset = match self.offset {
            Offset::Fixed(o) | Offset::MatchMean(o) => o,
        };
        if !offset.is_finite() {
            return Err(Error::invalid("offset must be finite"));
        }
        Ok(())
    }
}

pub fn to_elo_scale(ratings: &RatingTable, params: &NormalizationParams) -> Result<RatingTable> {
    params.validate()?;
    let scale = params.scale;
    let offset = match params.offset {
        Offset::Fixed(o) => o,
        Offset::MatchMean(target) => target - scale * ratings.mean(),
    };
    Ok(ratings.map(|r| scale * r + offset))
}

/// Elo points a white advantage `gamma` is worth.
pub fn scaled_white_advantage(gamma: f64, scale: f64) -> f64 {
    scale * gamma
}

/// Expected score under the classic Elo curve.
pub fn elo_expected_score(elo_white: f64, elo_black: f64, elo_advantage: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf((elo_black - elo_white - elo_advantage) / 400.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBucket {
    pub lower: f64,
    pub count: usize,
}

/// Player counts per bucket `[k * width, (k + 1) * width)`, covering every
/// bucket from the lowest to the highest rating, empty ones included.
pub fn export_histogram(ratings: &RatingTable, bucket_width: f64) -> Result<Vec<HistogramBucket>> {
    if !(bucket_width.is_finite() && bucket_width > 0.0) {
        return Err(Error::range(format!(
            "bucket width must be positive, got {bucket_width}"
        )));
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for (p, r) in ratings.iter() {
        if !r.is_finite() {
            return Err(Error::invalid(format!(
                "player {p} has non-finite rating {r}"
            )));
        }
        *counts.entry((r / bucket_width).floor() as i64).or_default() += 1;
    }
    let (Some(&lo), Some(&hi)) = (counts.keys().next(), counts.keys().next_back()) else {
        return Ok(Vec::new());
    };
    Ok((lo..=hi)
        .map(|k| HistogramBucket {
            lower: k as f64 * bucket_width,
            count: counts.get(&k).copied().unwrap_or(0),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterRow {
    pub player: PlayerId,
    pub a: f64,
    pub b: f64,
}

/// One row per player rated in both tables, ascending by player.
pub fn export_scatter(a: &RatingTable, b: &RatingTable) -> Vec<ScatterRow> {
    a.iter()
        .filter_map(|(player, ra)| {
            b.get(player).map(|rb| ScatterRow {
                player,
                a: ra,
                b: rb,
            })
        })
        .collect()
}
