//! Rating training by stochastic gradient descent.
//!
//! Every epoch first freezes the neighbor averages computed from the ratings
//! at epoch start, then visits the games in a freshly shuffled order and
//! nudges both players of each game:
//!
//! ```text
//! r_w <- r_w - eta * ( w (o_hat - o) o_hat (1 - o_hat) + lambda / |N_w| (r_w - a_w))
//! r_b <- r_b - eta * (-w (o_hat - o) o_hat (1 - o_hat) + lambda / |N_b| (r_b - a_b))
//! ```
//!
//! with `eta = ((1 + 0.1 P) / (p + 0.1 P))^0.602` at epoch `p` of `P`.
//! The data term is applied exactly as written above. It is half the
//! analytic derivative of the squared error; the step size absorbs the
//! constant.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    expected_score, Dataset, GameRecord, NeighborStats, PlayerId, RatingTable, TimeWeights,
};

/// Ratings beyond this magnitude (natural-log scale) abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e3;

/// Generator used for shuffling: ChaCha with 8 rounds, seeded from a `u64`
/// through `SeedableRng::seed_from_u64`. Its output stream is fixed by the
/// algorithm, so shuffles reproduce across platforms.
pub type ShuffleRng = ChaCha8Rng;

pub fn shuffle_rng(seed: u64) -> ShuffleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stop training once the held-out loss has risen for `patience` epochs in a row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyOut {
    /// Approximate share of games, taken from the latest months, held out.
    pub validation_fraction: f64,
    pub patience: usize,
}

impl Default for EarlyOut {
    fn default() -> Self {
        EarlyOut {
            validation_fraction: 0.1,
            patience: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    /// White advantage added to the white player's rating.
    pub gamma: f64,
    /// Strength of the pull towards the neighbor average.
    pub lambda: f64,
    /// Number of epochs.
    pub iterations: usize,
    pub seed: u64,
    pub early_out: Option<EarlyOut>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            gamma: 0.2,
            lambda: 0.77,
            iterations: 50,
            seed: 1,
            early_out: None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() {
            return Err(Error::invalid("gamma must be finite"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid("lambda must be finite and non-negative"));
        }
        if self.iterations < 1 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if let Some(eo) = &self.early_out {
            if !(eo.validation_fraction > 0.0 && eo.validation_fraction < 1.0) {
                return Err(Error::invalid("validation fraction must lie in (0, 1)"));
            }
            if eo.patience < 1 {
                return Err(Error::invalid("patience must be at least 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub ratings: RatingTable,
    /// Total loss on the training games; entry 0 is the zero-initialised state,
    /// entry `p` the state after epoch `p`.
    pub loss_history: Vec<f64>,
    /// Validation RMSE, aligned with `loss_history`. Present only with early-out.
    pub validation_history: Option<Vec<f64>>,
    pub stopped_early: bool,
    pub epochs_run: usize,
    /// Epoch whose ratings were returned when early-out is active.
    pub best_epoch: Option<usize>,
}

/// Step size of epoch `p` (1-based) out of `total`.
pub fn learning_rate(p: usize, total: usize) -> Result<f64> {
    if p < 1 || p > total {
        return Err(Error::range(format!("epoch {p} outside [1, {total}]")));
    }
    let tenth = 0.1 * total as f64;
    Ok(((1.0 + tenth) / (p as f64 + tenth)).powf(0.602))
}

/// Everything one game update needs, with neighbor averages and sizes frozen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TupleState {
    pub r_white: f64,
    pub r_black: f64,
    pub a_white: f64,
    pub a_black: f64,
    pub n_white: usize,
    pub n_black: usize,
    pub weight: f64,
    pub score: f64,
}

/// Gradient estimate `(d_white, d_black)` that a single game contributes.
pub fn tuple_gradient(t: &TupleState, gamma: f64, lambda: f64) -> (f64, f64) {
    let o_hat = expected_score(t.r_white, t.r_black, gamma);
    let data = t.weight * (o_hat - t.score) * o_hat * (1.0 - o_hat);
    (
        data + lambda / t.n_white as f64 * (t.r_white - t.a_white),
        -data + lambda / t.n_black as f64 * (t.r_black - t.a_black),
    )
}

/// Ratings of both players after the update for one game.
#[inline]
pub fn apply_tuple(t: &TupleState, gamma: f64, lambda: f64, eta: f64) -> (f64, f64) {
    let (g_white, g_black) = tuple_gradient(t, gamma, lambda);
    (t.r_white - eta * g_white, t.r_black - eta * g_black)
}

/// Sum of weighted squared prediction errors plus `lambda` times the squared
/// distance of every rating from its neighbor average.
pub fn total_loss(
    dataset: &Dataset,
    ratings: &RatingTable,
    stats: &NeighborStats,
    weights: &TimeWeights,
    hyper: &Hyperparams,
) -> Result<f64> {
    if weights.len() != dataset.len() {
        return Err(Error::Consistency(format!(
            "{} weights for {} games",
            weights.len(),
            dataset.len()
        )));
    }
    let rating = |p: PlayerId| {
        ratings
            .get(p)
            .ok_or_else(|| Error::Consistency(format!("no rating for player {p}")))
    };
    let mut data = 0.0;
    for (g, &w) in dataset.games().iter().zip(weights.as_slice()) {
        let o = g
            .outcome
            .ok_or_else(|| Error::validation("loss needs games with outcomes"))?
            .score();
        let o_hat = expected_score(rating(g.white)?, rating(g.black)?, hyper.gamma);
        data += w * (o_hat - o) * (o_hat - o);
    }
    let mut reg = 0.0;
    for (&p, &a) in &stats.averages {
        let d = rating(p)? - a;
        reg += d * d;
    }
    Ok(data + hyper.lambda * reg)
}

#[derive(Debug, Clone, Copy)]
struct DenseGame {
    white: usize,
    black: usize,
    weight: f64,
    score: f64,
}

/// Games and neighborhoods re-indexed onto dense player slots.
#[derive(Debug, Clone)]
struct Problem {
    players: Vec<PlayerId>,
    games: Vec<DenseGame>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl Problem {
    /// `players` must cover every player of `games`; extra players get an
    /// empty neighborhood.
    fn new(players: Vec<PlayerId>, games: &[GameRecord], weights: &[f64]) -> Result<Self> {
        let slot: HashMap<PlayerId, usize> =
            players.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        let lookup = |p: PlayerId| {
            slot.get(&p)
                .copied()
                .ok_or_else(|| Error::Consistency(format!("no rating for player {p}")))
        };
        let mut neighbors = vec![Vec::new(); players.len()];
        let mut dense = Vec::with_capacity(games.len());
        for (g, &weight) in games.iter().zip(weights) {
            let white = lookup(g.white)?;
            let black = lookup(g.black)?;
            let score = g
                .outcome
                .ok_or_else(|| Error::validation("training games need outcomes"))?
                .score();
            neighbors[white].push((black, weight));
            neighbors[black].push((white, weight));
            dense.push(DenseGame {
                white,
                black,
                weight,
                score,
            });
        }
        Ok(Problem {
            players,
            games: dense,
            neighbors,
        })
    }

    fn averages(&self, ratings: &[f64]) -> Vec<f64> {
        self.neighbors
            .iter()
            .map(|n| {
                let (num, den) = n.iter().fold((0.0, 0.0), |(num, den), &(k, w)| {
                    (num + w * ratings[k], den + w)
                });
                if den > 0.0 {
                    num / den
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn loss(&self, ratings: &[f64], gamma: f64, lambda: f64) -> f64 {
        let data: f64 = self
            .games
            .iter()
            .map(|g| {
                let e = expected_score(ratings[g.white], ratings[g.black], gamma) - g.score;
                g.weight * e * e
            })
            .sum();
        let averages = self.averages(ratings);
        let reg: f64 = ratings
            .iter()
            .zip(&averages)
            .zip(&self.neighbors)
            .filter(|(_, n)| !n.is_empty())
            .map(|((r, a), _)| (r - a) * (r - a))
            .sum();
        data + lambda * reg
    }

    /// One shuffled pass over the games with averages frozen at epoch start.
    fn epoch(
        &self,
        ratings: &mut [f64],
        eta: f64,
        gamma: f64,
        lambda: f64,
        order: &mut [usize],
        rng: &mut ShuffleRng,
    ) {
        let averages = self.averages(ratings);
        for (i, slot) in order.iter_mut().enumerate() {
            *slot = i;
        }
        order.shuffle(rng);
        for &gi in order.iter() {
            let g = self.games[gi];
            let state = TupleState {
                r_white: ratings[g.white],
                r_black: ratings[g.black],
                a_white: averages[g.white],
                a_black: averages[g.black],
                n_white: self.neighbors[g.white].len(),
                n_black: self.neighbors[g.black].len(),
                weight: g.weight,
                score: g.score,
            };
            let (w, b) = apply_tuple(&state, gamma, lambda, eta);
            ratings[g.white] = w;
            ratings[g.black] = b;
        }
    }

    fn table(&self, ratings: &[f64]) -> RatingTable {
        self.players
            .iter()
            .copied()
            .zip(ratings.iter().copied())
            .collect()
    }
}

fn check_divergence(ratings: &[f64], epoch: usize) -> Result<()> {
    match ratings
        .iter()
        .find(|r| !r.is_finite() || r.abs() > DIVERGENCE_LIMIT)
    {
        Some(r) => Err(Error::Divergence {
            epoch,
            reason: format!("rating reached {r}"),
        }),
        None => Ok(()),
    }
}

/// Runs epoch `p` over `dataset`, starting from `ratings`.
///
/// Neighbor sizes and averages are derived from `dataset` and `ratings` at
/// call time and stay fixed for the whole pass.
pub fn sgd_epoch(
    dataset: &Dataset,
    ratings: &RatingTable,
    weights: &TimeWeights,
    hyper: &Hyperparams,
    p: usize,
    rng: &mut ShuffleRng,
) -> Result<RatingTable> {
    hyper.validate()?;
    dataset.require_outcomes()?;
    if weights.len() != dataset.len() {
        return Err(Error::Consistency(format!(
            "{} weights for {} games",
            weights.len(),
            dataset.len()
        )));
    }
    let eta = learning_rate(p, hyper.iterations)?;
    let players: Vec<PlayerId> = ratings.players().collect();
    let problem = Problem::new(players, dataset.games(), weights.as_slice())?;
    let mut r: Vec<f64> = ratings.values().collect();
    let mut order = vec![0; problem.games.len()];
    problem.epoch(&mut r, eta, hyper.gamma, hyper.lambda, &mut order, rng);
    check_divergence(&r, p)?;
    Ok(problem.table(&r))
}

/// Splits off the latest whole months holding roughly `fraction` of the games.
///
/// Months are taken from the newest backwards until at least
/// `fraction * len` games are collected. Game order is preserved on both sides.
pub fn validation_tail(dataset: &Dataset, fraction: f64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid("validation fraction must lie in (0, 1)"));
    }
    let mut per_month = std::collections::BTreeMap::new();
    for g in dataset.games() {
        *per_month.entry(g.month).or_insert(0usize) += 1;
    }
    let target = fraction * dataset.len() as f64;
    let mut taken = 0usize;
    let mut cutoff = u32::MAX;
    for (&month, &count) in per_month.iter().rev() {
        taken += count;
        cutoff = month;
        if taken as f64 >= target {
            break;
        }
    }
    let (validation, train): (Vec<_>, Vec<_>) =
        dataset.games().iter().partition(|g| g.month >= cutoff);
    if train.is_empty() || validation.is_empty() {
        return Err(Error::range(
            "validation split leaves no training games; the data needs at least two months",
        ));
    }
    Ok((Dataset::new(train)?, Dataset::new(validation)?))
}

fn validation_rmse(
    slot: &HashMap<PlayerId, usize>,
    games: &[GameRecord],
    ratings: &[f64],
    gamma: f64,
) -> f64 {
    let rating = |p: PlayerId| slot.get(&p).map_or(0.0, |&i| ratings[i]);
    let sse: f64 = games
        .iter()
        .filter_map(|g| {
            let o = g.outcome?.score();
            let e = expected_score(rating(g.white), rating(g.black), gamma) - o;
            Some(e * e)
        })
        .sum();
    (sse / games.len() as f64).sqrt()
}

/// Trains ratings from zero over `hyper.iterations` epochs.
pub fn train(dataset: &Dataset, hyper: &Hyperparams) -> Result<TrainReport> {
    hyper.validate()?;
    dataset.require_outcomes()?;
    let index = dataset.index()?;
    let players: Vec<PlayerId> = index.players.iter().copied().collect();

    let (fit, validation) = match &hyper.early_out {
        Some(eo) => {
            let (fit, val) = validation_tail(dataset, eo.validation_fraction)?;
            (fit, Some(val))
        }
        None => (dataset.clone(), None),
    };
    let fit_index = fit.index()?;
    let weights = TimeWeights::for_dataset(&fit, &fit_index)?;
    let problem = Problem::new(players, fit.games(), weights.as_slice())?;
    let slot: HashMap<PlayerId, usize> = problem
        .players
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, i))
        .collect();

    let (gamma, lambda) = (hyper.gamma, hyper.lambda);
    let mut ratings = vec![0.0; problem.players.len()];
    let mut order = vec![0usize; problem.games.len()];
    let mut rng = shuffle_rng(hyper.seed);

    let mut loss_history = vec![problem.loss(&ratings, gamma, lambda)];
    let mut validation_history = validation
        .as_ref()
        .map(|v| vec![validation_rmse(&slot, v.games(), &ratings, gamma)]);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut rising = 0usize;
    let mut stopped_early = false;
    let mut epochs_run = 0;

    for p in 1..=hyper.iterations {
        let eta = learning_rate(p, hyper.iterations)?;
        problem.epoch(&mut ratings, eta, gamma, lambda, &mut order, &mut rng);
        check_divergence(&ratings, p)?;
        let loss = problem.loss(&ratings, gamma, lambda);
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch: p,
                reason: format!("loss became {loss}"),
            });
        }
        loss_history.push(loss);
        epochs_run = p;

        if let (Some(val), Some(history), Some(eo)) = (
            validation.as_ref(),
            validation_history.as_mut(),
            hyper.early_out.as_ref(),
        ) {
            let v = validation_rmse(&slot, val.games(), &ratings, gamma);
            let previous = *history.last().expect("history starts non-empty");
            history.push(v);
            if best.as_ref().is_none_or(|(_, b, _)| v < *b) {
                best = Some((p, v, ratings.clone()));
            }
            rising = if p > 1 && v > previous { rising + 1 } else { 0 };
            if rising >= eo.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (best_epoch, final_ratings) = match best {
        Some((epoch, _, r)) => (Some(epoch), r),
        None => (None, ratings),
    };
    Ok(TrainReport {
        ratings: problem.table(&final_ratings),
        loss_history,
        validation_history,
        stopped_early,
        epochs_run,
        best_epoch,
    })
}
