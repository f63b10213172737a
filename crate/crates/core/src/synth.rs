//! Synthetic games drawn from known latent ratings, and a classic sequential
//! Elo baseline to compare against.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{expected_score, Dataset, GameRecord, Outcome, PlayerId, RatingTable};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub players: usize,
    pub games: usize,
    pub months: u32,
    /// White advantage used to draw outcomes.
    pub gamma_true: f64,
    /// Draw probability between equal players; scales down with the rating gap.
    pub draw_fraction: f64,
    /// Standard deviation of the latent ratings (natural-log scale).
    pub latent_spread: f64,
    /// Opponents are accepted with probability `exp(-locality * |gap|)`.
    pub tournament_locality: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            players: 200,
            games: 20_000,
            months: 100,
            gamma_true: 0.2,
            draw_fraction: 0.3,
            latent_spread: 1.0,
            tournament_locality: 1.0,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.players < 2 {
            return Err(Error::validation("need at least two players"));
        }
        if self.games < 1 || self.months < 1 {
            return Err(Error::validation("games and months must be positive"));
        }
        if !self.gamma_true.is_finite() {
            return Err(Error::validation("gamma_true must be finite"));
        }
        if !(0.0..1.0).contains(&self.draw_fraction) {
            return Err(Error::validation("draw_fraction must lie in [0, 1)"));
        }
        if !(self.latent_spread.is_finite() && self.latent_spread > 0.0) {
            return Err(Error::validation("latent_spread must be positive"));
        }
        if !(self.tournament_locality.is_finite() && self.tournament_locality >= 0.0) {
            return Err(Error::validation(
                "tournament_locality must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Samples white's score for an expected score `p`.
///
/// A draw happens with probability `d = draw_fraction * 4p(1-p)`; otherwise
/// white wins with probability `(p - d/2) / (1 - d)`. The mean stays `p`.
pub fn sample_outcome<R: Rng + ?Sized>(p: f64, draw_fraction: f64, rng: &mut R) -> Outcome {
    let d = draw_fraction * 4.0 * p * (1.0 - p);
    if rng.random::<f64>() < d {
        return Outcome::Draw;
    }
    let win = ((p - d / 2.0) / (1.0 - d)).clamp(0.0, 1.0);
    if rng.random::<f64>() < win {
        Outcome::WhiteWins
    } else {
        Outcome::BlackWins
    }
}

/// Draws an opponent for `player` by rejection: uniform proposals, accepted
/// with probability `exp(-locality * |gap|)`.
fn pick_opponent<R: Rng + ?Sized>(
    player: usize,
    latent: &[f64],
    locality: f64,
    rng: &mut R,
) -> usize {
    let n = latent.len();
    loop {
        let mut other = rng.random_range(0..n - 1);
        if other >= player {
            other += 1;
        }
        if locality == 0.0 {
            return other;
        }
        let accept = (-locality * (latent[player] - latent[other]).abs()).exp();
        if rng.random::<f64>() < accept {
            return other;
        }
    }
}

/// Random pairings, months and outcomes from latent ratings.
///
/// Players are numbered `1..=players`. Games come back sorted by month, with
/// generation order kept inside a month.
pub fn generate(config: &SynthConfig) -> Result<(Dataset, RatingTable)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, config.latent_spread)
        .map_err(|e| Error::validation(format!("latent spread: {e}")))?;
    let latent: Vec<f64> = (0..config.players)
        .map(|_| normal.sample(&mut rng))
        .collect();

    let mut games = Vec::with_capacity(config.games);
    for _ in 0..config.games {
        let a = rng.random_range(0..config.players);
        let b = pick_opponent(a, &latent, config.tournament_locality, &mut rng);
        let (white, black) = if rng.random::<bool>() { (a, b) } else { (b, a) };
        let month = rng.random_range(1..=config.months);
        let p = expected_score(latent[white], latent[black], config.gamma_true);
        let outcome = sample_outcome(p, config.draw_fraction, &mut rng);
        games.push(GameRecord {
            white: PlayerId(white as u64 + 1),
            black: PlayerId(black as u64 + 1),
            month,
            outcome: Some(outcome),
        });
    }
    games.sort_by_key(|g| g.month);

    let table = latent
        .iter()
        .enumerate()
        .map(|(i, &r)| (PlayerId(i as u64 + 1), r))
        .collect();
    Ok((Dataset::new(games)?, table))
}

pub const ELO_INITIAL: f64 = 1500.0;
pub const ELO_DEFAULT_K: f64 = 32.0;

/// Classic Elo: every player starts at 1500 and after each game
/// `r <- r + K (score - expected)` on the base-10, 400-point curve.
/// Games are replayed in month order; ties keep file order.
pub fn elo_baseline(dataset: &Dataset, k_factor: f64) -> Result<RatingTable> {
    dataset.require_outcomes()?;
    if !(k_factor.is_finite() && k_factor > 0.0) {
        return Err(Error::invalid("K factor must be positive"));
    }
    let mut ordered: Vec<&GameRecord> = dataset.games().iter().collect();
    ordered.sort_by_key(|g| g.month);

    let mut ratings = RatingTable::new();
    for g in ordered {
        let rw = ratings.get(g.white).unwrap_or(ELO_INITIAL);
        let rb = ratings.get(g.black).unwrap_or(ELO_INITIAL);
        let expected = 1.0 / (1.0 + 10f64.powf((rb - rw) / 400.0));
        let score = g.outcome.map(Outcome::score).unwrap_or_default();
        let delta = k_factor * (score - expected);
        ratings.insert(g.white, rw + delta);
        ratings.insert(g.black, rb - delta);
    }
    Ok(ratings)
}
