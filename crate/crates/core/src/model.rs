//! Domain types and the closed-form pieces of the model: outcome prediction,
//! recency weighting and opponent-neighborhood averaging.
//!
//! Ratings live on the natural-log logistic scale. A white player rated `r_w`
//! facing a black player rated `r_b` is expected to score
//! `1 / (1 + exp(r_b - (r_w + gamma)))`, where `gamma` is the global white
//! advantage.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PlayerId(pub u64);

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Result of a game from white's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    BlackWins,
    Draw,
    WhiteWins,
}

impl Outcome {
    /// White's score: 0, 0.5 or 1.
    pub fn score(self) -> f64 {
        match self {
            Outcome::BlackWins => 0.0,
            Outcome::Draw => 0.5,
            Outcome::WhiteWins => 1.0,
        }
    }

    pub fn from_score(score: f64) -> Option<Self> {
        if score == 0.0 {
            Some(Outcome::BlackWins)
        } else if score == 0.5 {
            Some(Outcome::Draw)
        } else if score == 1.0 {
            Some(Outcome::WhiteWins)
        } else {
            None
        }
    }
}

/// One game. `outcome` is `None` for games whose result is still to be predicted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameRecord {
    pub white: PlayerId,
    pub black: PlayerId,
    pub month: u32,
    pub outcome: Option<Outcome>,
}

impl GameRecord {
    pub fn new(
        white: PlayerId,
        black: PlayerId,
        month: u32,
        outcome: Option<Outcome>,
    ) -> Result<Self> {
        let game = GameRecord {
            white,
            black,
            month,
            outcome,
        };
        game.validate()?;
        Ok(game)
    }

    pub fn validate(&self) -> Result<()> {
        if self.white == self.black {
            return Err(Error::validation(format!(
                "player {} cannot play against themselves",
                self.white
            )));
        }
        if self.month < 1 {
            return Err(Error::validation("month must be at least 1"));
        }
        Ok(())
    }

    pub fn involves(&self, player: PlayerId) -> bool {
        self.white == player || self.black == player
    }
}

/// Ordered collection of games.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    games: Vec<GameRecord>,
}

impl Dataset {
    pub fn new(games: Vec<GameRecord>) -> Result<Self> {
        for (i, g) in games.iter().enumerate() {
            g.validate()
                .map_err(|e| Error::validation(format!("game {}: {e}", i + 1)))?;
        }
        Ok(Dataset { games })
    }

    pub fn games(&self) -> &[GameRecord] {
        &self.games
    }

    pub fn len(&self) -> usize {
        self.games.len()
    }

    pub fn is_empty(&self) -> bool {
        self.games.is_empty()
    }

    pub fn into_games(self) -> Vec<GameRecord> {
        self.games
    }

    /// Fails unless the dataset is non-empty and every game has a result.
    pub fn require_outcomes(&self) -> Result<()> {
        if self.games.is_empty() {
            return Err(Error::invalid("training dataset is empty"));
        }
        if let Some(i) = self.games.iter().position(|g| g.outcome.is_none()) {
            return Err(Error::validation(format!("game {} has no outcome", i + 1)));
        }
        Ok(())
    }

    pub fn index(&self) -> Result<DatasetIndex> {
        DatasetIndex::new(self)
    }
}

/// Facts derived from a dataset: its player domain and month range.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub players: BTreeSet<PlayerId>,
    pub t_min: u32,
    pub t_max: u32,
    pub games_per_player: BTreeMap<PlayerId, usize>,
}

impl DatasetIndex {
    pub fn new(dataset: &Dataset) -> Result<Self> {
        let games = dataset.games();
        let first = games
            .first()
            .ok_or_else(|| Error::invalid("cannot index an empty dataset"))?;
        let mut t_min = first.month;
        let mut t_max = first.month;
        let mut games_per_player = BTreeMap::new();
        for g in games {
            t_min = t_min.min(g.month);
            t_max = t_max.max(g.month);
            *games_per_player.entry(g.white).or_insert(0) += 1;
            *games_per_player.entry(g.black).or_insert(0) += 1;
        }
        Ok(DatasetIndex {
            players: games_per_player.keys().copied().collect(),
            t_min,
            t_max,
            games_per_player,
        })
    }

    /// Number of distinct months covered, counting gaps.
    pub fn month_span(&self) -> u32 {
        self.t_max - self.t_min + 1
    }
}

/// Recency weight of each game, aligned with the dataset's game order.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeWeights(Vec<f64>);

impl TimeWeights {
    pub fn for_dataset(dataset: &Dataset, index: &DatasetIndex) -> Result<Self> {
        dataset
            .games()
            .iter()
            .map(|g| time_weight(g.month, index.t_min, index.t_max))
            .collect::<Result<Vec<_>>>()
            .map(TimeWeights)
    }

    pub fn from_vec(weights: Vec<f64>) -> Self {
        TimeWeights(weights)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One rating per player, natural-log logistic scale.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingTable(BTreeMap<PlayerId, f64>);

impl RatingTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every player of `players` at rating zero.
    pub fn zeros<'a>(players: impl IntoIterator<Item = &'a PlayerId>) -> Self {
        RatingTable(players.into_iter().map(|&p| (p, 0.0)).collect())
    }

    pub fn get(&self, player: PlayerId) -> Option<f64> {
        self.0.get(&player).copied()
    }

    /// Rating of `player`, or 0 for a player the table has never seen.
    pub fn get_or_default(&self, player: PlayerId) -> f64 {
        self.get(player).unwrap_or(0.0)
    }

    pub fn insert(&mut self, player: PlayerId, rating: f64) -> Option<f64> {
        self.0.insert(player, rating)
    }

    pub fn contains(&self, player: PlayerId) -> bool {
        self.0.contains_key(&player)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Entries in ascending player order.
    pub fn iter(&self) -> impl Iterator<Item = (PlayerId, f64)> + '_ {
        self.0.iter().map(|(&p, &r)| (p, r))
    }

    pub fn players(&self) -> impl Iterator<Item = PlayerId> + '_ {
        self.0.keys().copied()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.values().copied()
    }

    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.values().sum::<f64>() / self.0.len() as f64
    }

    /// Population standard deviation.
    pub fn std_dev(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        let mean = self.mean();
        let var = self.values().map(|r| (r - mean).powi(2)).sum::<f64>() / self.0.len() as f64;
        var.sqrt()
    }

    /// New table with `f` applied to every rating.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        RatingTable(self.0.iter().map(|(&p, &r)| (p, f(r))).collect())
    }
}

impl FromIterator<(PlayerId, f64)> for RatingTable {
    fn from_iter<I: IntoIterator<Item = (PlayerId, f64)>>(iter: I) -> Self {
        RatingTable(iter.into_iter().collect())
    }
}

/// Logistic expectation without input checks; used on hot paths.
#[inline]
pub(crate) fn expected_score(r_white: f64, r_black: f64, gamma: f64) -> f64 {
    1.0 / (1.0 + (r_black - (r_white + gamma)).exp())
}

/// Expected score of the white player.
pub fn predict_outcome(r_white: f64, r_black: f64, gamma: f64) -> Result<f64> {
    if !(r_white.is_finite() && r_black.is_finite() && gamma.is_finite()) {
        return Err(Error::invalid(format!(
            "non-finite prediction input (white {r_white}, black {r_black}, gamma {gamma})"
        )));
    }
    Ok(expected_score(r_white, r_black, gamma))
}

/// Recency weight `((1 + t - t_min) / (1 + t_max - t_min))^2`.
pub fn time_weight(t: u32, t_min: u32, t_max: u32) -> Result<f64> {
    if t_min > t || t > t_max {
        return Err(Error::range(format!(
            "month {t} outside [{t_min}, {t_max}]"
        )));
    }
    let ratio = (1.0 + f64::from(t - t_min)) / (1.0 + f64::from(t_max - t_min));
    Ok(ratio * ratio)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub opponent: PlayerId,
    pub weight: f64,
}

/// Multiset of weighted opponents per player, colors ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Neighborhoods(BTreeMap<PlayerId, Vec<Neighbor>>);

impl Neighborhoods {
    pub fn get(&self, player: PlayerId) -> &[Neighbor] {
        self.0.get(&player).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Multiset cardinality, i.e. the number of games `player` took part in.
    pub fn size(&self, player: PlayerId) -> usize {
        self.get(player).len()
    }

    pub fn players(&self) -> impl Iterator<Item = PlayerId> + '_ {
        self.0.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PlayerId, &[Neighbor])> + '_ {
        self.0.iter().map(|(&p, n)| (p, n.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn build_neighborhoods(dataset: &Dataset, weights: &TimeWeights) -> Result<Neighborhoods> {
    if dataset.is_empty() {
        return Err(Error::invalid(
            "cannot build neighborhoods of an empty dataset",
        ));
    }
    if weights.len() != dataset.len() {
        return Err(Error::Consistency(format!(
            "{} weights for {} games",
            weights.len(),
            dataset.len()
        )));
    }
    let mut map: BTreeMap<PlayerId, Vec<Neighbor>> = BTreeMap::new();
    for (g, &weight) in dataset.games().iter().zip(weights.as_slice()) {
        map.entry(g.white).or_default().push(Neighbor {
            opponent: g.black,
            weight,
        });
        map.entry(g.black).or_default().push(Neighbor {
            opponent: g.white,
            weight,
        });
    }
    Ok(Neighborhoods(map))
}

/// Weighted mean of opponent ratings. An empty neighborhood averages to 0.
pub fn neighbor_average(neighbors: &[Neighbor], ratings: &RatingTable) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for n in neighbors {
        let r = ratings
            .get(n.opponent)
            .ok_or_else(|| Error::Consistency(format!("no rating for player {}", n.opponent)))?;
        num += n.weight * r;
        den += n.weight;
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

pub fn neighbor_averages(
    neighborhoods: &Neighborhoods,
    ratings: &RatingTable,
) -> Result<BTreeMap<PlayerId, f64>> {
    neighborhoods
        .iter()
        .map(|(p, n)| Ok((p, neighbor_average(n, ratings)?)))
        .collect()
}

/// Neighborhoods together with the averages computed from one rating table.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborStats {
    pub neighborhoods: Neighborhoods,
    pub averages: BTreeMap<PlayerId, f64>,
}

impl NeighborStats {
    pub fn compute(neighborhoods: Neighborhoods, ratings: &RatingTable) -> Result<Self> {
        let averages = neighbor_averages(&neighborhoods, ratings)?;
        Ok(NeighborStats {
            neighborhoods,
            averages,
        })
    }

    pub fn size(&self, player: PlayerId) -> usize {
        self.neighborhoods.size(player)
    }

    pub fn average(&self, player: PlayerId) -> f64 {
        self.averages.get(&player).copied().unwrap_or(0.0)
    }
}
