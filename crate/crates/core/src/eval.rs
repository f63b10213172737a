//! Prediction-quality metrics, chronological hold-out splits and grid tuning
//! of the white advantage and regularization strength.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{expected_score, Dataset, GameRecord, PlayerId, RatingTable};
use crate::trainer::{train, Hyperparams};

/// Candidate white advantages tried by default.
pub const DEFAULT_GAMMAS: [f64; 4] = [0.0, 0.1, 0.2, 0.3];
/// Candidate regularization strengths tried by default.
pub const DEFAULT_LAMBDAS: [f64; 5] = [0.2, 0.4, 0.6, 0.77, 1.0];
/// Months held out at the end of the data when tuning.
pub const DEFAULT_TAIL_MONTHS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub game: GameRecord,
    /// Expected score of the white player.
    pub expected: f64,
}

pub type PredictionSet = Vec<Prediction>;

/// Predicts every game of `dataset`. Players missing from `ratings` are rated 0.
pub fn predict(dataset: &Dataset, ratings: &RatingTable, gamma: f64) -> PredictionSet {
    dataset
        .games()
        .iter()
        .map(|&game| Prediction {
            game,
            expected: expected_score(
                ratings.get_or_default(game.white),
                ratings.get_or_default(game.black),
                gamma,
            ),
        })
        .collect()
}

fn actual(p: &Prediction, i: usize) -> Result<f64> {
    p.game
        .outcome
        .map(|o| o.score())
        .ok_or_else(|| Error::validation(format!("prediction {} has no actual outcome", i + 1)))
}

pub fn rmse(predictions: &[Prediction]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::invalid("cannot score an empty prediction set"));
    }
    let mut sse = 0.0;
    for (i, p) in predictions.iter().enumerate() {
        let e = p.expected - actual(p, i)?;
        sse += e * e;
    }
    Ok((sse / predictions.len() as f64).sqrt())
}

/// Player/month aggregated RMSE.
///
/// This is an approximation of the competition metric, whose exact definition
/// was never published. Each game is seen from both sides: white scores `o`
/// against an expectation of `o_hat`, black scores `1 - o` against `1 - o_hat`.
/// Those per-player scores are grouped by (player, month). A group of `n`
/// games has error `(sum expected - sum actual) / n`, and the result is
/// `sqrt(sum n * e^2 / sum n)`.
pub fn pm_rmse(predictions: &[Prediction]) -> Result<f64> {
    Ok(pm_groups(predictions)?.0)
}

/// Returns the metric and the number of (player, month) groups.
fn pm_groups(predictions: &[Prediction]) -> Result<(f64, usize)> {
    if predictions.is_empty() {
        return Err(Error::invalid("cannot score an empty prediction set"));
    }
    // (expected sum, actual sum, games)
    let mut groups: BTreeMap<(PlayerId, u32), (f64, f64, usize)> = BTreeMap::new();
    for (i, p) in predictions.iter().enumerate() {
        let o = actual(p, i)?;
        let month = p.game.month;
        let white = groups.entry((p.game.white, month)).or_default();
        white.0 += p.expected;
        white.1 += o;
        white.2 += 1;
        let black = groups.entry((p.game.black, month)).or_default();
        black.0 += 1.0 - p.expected;
        black.1 += 1.0 - o;
        black.2 += 1;
    }
    let (num, den) = groups
        .values()
        .fold((0.0, 0usize), |(num, den), &(e, a, n)| {
            let err = (e - a) / n as f64;
            (num + n as f64 * err * err, den + n)
        });
    Ok(((num / den as f64).sqrt(), groups.len()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub rmse: f64,
    pub pm_rmse: f64,
    pub games: usize,
    pub player_months: usize,
}

pub fn evaluate(predictions: &[Prediction]) -> Result<EvalReport> {
    let rmse = rmse(predictions)?;
    let (pm_rmse, player_months) = pm_groups(predictions)?;
    Ok(EvalReport {
        rmse,
        pm_rmse,
        games: predictions.len(),
        player_months,
    })
}

/// Holds out every game in the last `tail_months` months of the span.
pub fn time_split(dataset: &Dataset, tail_months: u32) -> Result<(Dataset, Dataset)> {
    let index = dataset.index()?;
    if tail_months < 1 || tail_months >= index.month_span() {
        return Err(Error::range(format!(
            "tail of {tail_months} months must be in [1, {})",
            index.month_span()
        )));
    }
    let cutoff = index.t_max - tail_months;
    let (train, holdout): (Vec<_>, Vec<_>) =
        dataset.games().iter().partition(|g| g.month <= cutoff);
    if train.is_empty() || holdout.is_empty() {
        return Err(Error::range(format!(
            "splitting after month {cutoff} leaves an empty side"
        )));
    }
    Ok((Dataset::new(train)?, Dataset::new(holdout)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Rmse,
    PmRmse,
}

impl Metric {
    pub fn score(self, predictions: &[Prediction]) -> Result<f64> {
        match self {
            Metric::Rmse => rmse(predictions),
            Metric::PmRmse => pm_rmse(predictions),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Rmse => "rmse",
            Metric::PmRmse => "pm_rmse",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rmse" => Ok(Metric::Rmse),
            "pm_rmse" => Ok(Metric::PmRmse),
            other => Err(Error::invalid(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub gamma: f64,
    pub lambda: f64,
    /// Hold-out metric; `+inf` when training diverged.
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best_gamma: f64,
    pub best_lambda: f64,
    /// Every point in iteration order: gammas outer, lambdas inner.
    pub grid: Vec<GridPoint>,
    pub metric: Metric,
}

/// Scores one (gamma, lambda) pair: train on `train_set`, predict `holdout`.
pub fn score_point(
    train_set: &Dataset,
    holdout: &Dataset,
    hyper: &Hyperparams,
    metric: Metric,
) -> Result<f64> {
    let report = train(train_set, hyper)?;
    metric.score(&predict(holdout, &report.ratings, hyper.gamma))
}

/// Exhaustive search over `gammas x lambdas` on a chronological split.
///
/// Points train in parallel, each with its own shuffle stream seeded from
/// `base.seed`. Ties go to the earliest point in iteration order.
pub fn grid_tune(
    dataset: &Dataset,
    gammas: &[f64],
    lambdas: &[f64],
    base: &Hyperparams,
    tail_months: u32,
    metric: Metric,
) -> Result<TuneResult> {
    if gammas.is_empty() || lambdas.is_empty() {
        return Err(Error::invalid("tuning grids must be non-empty"));
    }
    dataset.require_outcomes()?;
    let (train_set, holdout) = time_split(dataset, tail_months)?;
    let pairs: Vec<(f64, f64)> = gammas
        .iter()
        .flat_map(|&g| lambdas.iter().map(move |&l| (g, l)))
        .collect();
    for &(g, l) in &pairs {
        Hyperparams {
            gamma: g,
            lambda: l,
            ..*base
        }
        .validate()?;
    }

    let grid: Vec<GridPoint> = pairs
        .par_iter()
        .map(|&(gamma, lambda)| {
            let hyper = Hyperparams {
                gamma,
                lambda,
                ..*base
            };
            let metric = match score_point(&train_set, &holdout, &hyper, metric) {
                Ok(m) => m,
                Err(Error::Divergence { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            Ok(GridPoint {
                gamma,
                lambda,
                metric,
            })
        })
        .collect::<Result<_>>()?;

    let best = grid
        .iter()
        .fold(None::<&GridPoint>, |best, p| match best {
            Some(b) if b.metric <= p.metric => Some(b),
            _ => Some(p),
        })
        .expect("grid is non-empty");
    Ok(TuneResult {
        best_gamma: best.gamma,
        best_lambda: best.lambda,
        grid,
        metric,
    })
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ranks are 1-based; ties share the mean of their positions
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation over the players both tables rate.
pub fn spearman(a: &RatingTable, b: &RatingTable) -> Result<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = a
        .iter()
        .filter_map(|(p, r)| b.get(p).map(|s| (r, s)))
        .unzip();
    if x.len() < 2 {
        return Err(Error::invalid(
            "rank correlation needs at least two shared players",
        ));
    }
    Ok(pearson(&average_ranks(&x), &average_ranks(&y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Outcome;
    use approx::assert_abs_diff_eq;

    fn pred(w: u64, b: u64, month: u32, o: f64, expected: f64) -> Prediction {
        Prediction {
            game: GameRecord::new(PlayerId(w), PlayerId(b), month, Outcome::from_score(o)).unwrap(),
            expected,
        }
    }

    fn games_in_months(months: &[u32]) -> Dataset {
        Dataset::new(
            months
                .iter()
                .enumerate()
                .map(|(i, &m)| {
                    GameRecord::new(PlayerId(i as u64), PlayerId(1000), m, Some(Outcome::Draw))
                        .unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(
            rmse(&[pred(1, 2, 1, 1.0, 1.0), pred(1, 2, 1, 0.0, 0.0)]).unwrap(),
            0.0
        );
        assert_eq!(rmse(&[pred(1, 2, 1, 1.0, 0.5)]).unwrap(), 0.5);
        let two = [pred(1, 2, 1, 1.0, 0.7), pred(3, 4, 1, 0.0, 0.4)];
        assert_abs_diff_eq!(rmse(&two).unwrap(), (0.125f64).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(rmse(&two).unwrap(), 0.353_553, epsilon = 1e-6);
        assert!(matches!(rmse(&[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn rmse_requires_outcomes() {
        let p = Prediction {
            game: GameRecord::new(PlayerId(1), PlayerId(2), 1, None).unwrap(),
            expected: 0.5,
        };
        assert!(rmse(&[p]).is_err());
        assert!(pm_rmse(&[p]).is_err());
    }

    #[test]
    fn pm_rmse_examples() {
        assert_eq!(pm_rmse(&[pred(1, 2, 3, 0.5, 0.5)]).unwrap(), 0.0);
        assert!(matches!(pm_rmse(&[]), Err(Error::InvalidArgument(_))));
        assert_abs_diff_eq!(
            pm_rmse(&[pred(1, 2, 1, 1.0, 0.6)]).unwrap(),
            0.4,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pm_rmse_cancels_within_a_player_month() {
        // Player 1 overshoots by 0.2 against player 2 and undershoots by 0.2
        // against player 3 in the same month. Brute force over the four groups:
        //   (1, m): n = 2, e = (0.2 - 0.2) / 2 = 0
        //   (2, m): n = 1, e = -0.2 ; (3, m): n = 1, e = +0.2
        //   sqrt((0 + 0.04 + 0.04) / 4) = sqrt(0.02)
        let ps = [pred(1, 2, 7, 0.5, 0.7), pred(1, 3, 7, 0.5, 0.3)];
        let report = evaluate(&ps).unwrap();
        assert_eq!(report.player_months, 3);
        assert_abs_diff_eq!(report.pm_rmse, 0.02f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(report.rmse, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn time_split_examples() {
        let months: Vec<u32> = (1..=100).collect();
        let (train, hold) = time_split(&games_in_months(&months), 5).unwrap();
        assert!(train.games().iter().all(|g| g.month <= 95));
        assert_eq!(train.len(), 95);
        assert!(hold.games().iter().all(|g| (96..=100).contains(&g.month)));
        assert_eq!(hold.len(), 5);

        assert!(matches!(
            time_split(&games_in_months(&months), 100),
            Err(Error::Range(_))
        ));
        assert!(time_split(&games_in_months(&months), 0).is_err());

        let (train, hold) = time_split(&games_in_months(&[1, 2, 3]), 1).unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(hold.games()[0].month, 3);
        assert_eq!(hold.len(), 1);
    }

    #[test]
    fn metric_parses() {
        assert_eq!("rmse".parse::<Metric>().unwrap(), Metric::Rmse);
        assert_eq!("pm_rmse".parse::<Metric>().unwrap(), Metric::PmRmse);
        assert!("mae".parse::<Metric>().is_err());
    }

    #[test]
    fn spearman_handles_ties_and_order() {
        let a: RatingTable = (0..5).map(|i| (PlayerId(i), i as f64)).collect();
        let b: RatingTable = (0..5).map(|i| (PlayerId(i), (i * i) as f64)).collect();
        assert_abs_diff_eq!(spearman(&a, &b).unwrap(), 1.0, epsilon = 1e-12);
        let rev = a.map(|r| -r);
        assert_abs_diff_eq!(spearman(&a, &rev).unwrap(), -1.0, epsilon = 1e-12);
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
        // x = 1..5, y = [2, 1, 4, 3, 5]: 1 - 6 * 4 / (5 * 24) = 0.8
        let y: RatingTable = [2.0, 1.0, 4.0, 3.0, 5.0]
            .iter()
            .enumerate()
            .map(|(i, &v)| (PlayerId(i as u64), v))
            .collect();
        assert_abs_diff_eq!(spearman(&a, &y).unwrap(), 0.8, epsilon = 1e-12);
    }
}
