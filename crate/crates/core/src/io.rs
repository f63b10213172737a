//! CSV files: games, ratings, predictions and the tabular exports.
//!
//! Games use the header `month,white,black,score`; the score column may be
//! empty or absent for games still to be predicted. Ratings use
//! `player,rating` (natural scale) or `player,rating_elo`. Numbers are
//! written with a period decimal separator in their shortest exact form, so
//! every `f64` survives a save/load cycle bit for bit.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::{GridPoint, Prediction};
use crate::model::{Dataset, DatasetIndex, GameRecord, Outcome, PlayerId, RatingTable};
use crate::normalize::{HistogramBucket, ScatterRow};

/// Header names to read the four game columns from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub month: String,
    pub white: String,
    pub black: String,
    pub score: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            month: "month".into(),
            white: "white".into(),
            black: "black".into(),
            score: "score".into(),
        }
    }
}

impl FromStr for ColumnMap {
    type Err = Error;

    /// Parses `month=Month,white=WhitePlayer,...`; unnamed columns keep their default.
    fn from_str(s: &str) -> Result<Self> {
        let mut map = ColumnMap::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(|| {
                Error::invalid(format!("column mapping `{part}` is not key=name"))
            })?;
            let slot = match key.trim() {
                "month" => &mut map.month,
                "white" => &mut map.white,
                "black" => &mut map.black,
                "score" => &mut map.score,
                other => return Err(Error::invalid(format!("unknown column key `{other}`"))),
            };
            *slot = value.trim().to_string();
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingScale {
    Natural,
    Elo,
}

impl RatingScale {
    pub fn column(self) -> &'static str {
        match self {
            RatingScale::Natural => "rating",
            RatingScale::Elo => "rating_elo",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<Option<usize>> {
    let mut hits = headers.iter().enumerate().filter(|(_, h)| *h == name);
    let first = hits.next().map(|(i, _)| i);
    if hits.next().is_some() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("column `{name}` appears more than once"),
        });
    }
    Ok(first)
}

fn required_column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    column(headers, name, path)?.ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: format!("missing column `{name}`"),
    })
}

fn parse_score(raw: &str) -> std::result::Result<Outcome, String> {
    raw.parse::<f64>()
        .ok()
        .and_then(Outcome::from_score)
        .ok_or_else(|| format!("score `{raw}` is not one of 0, 0.5, 1"))
}

/// Reads games from any CSV source. `path` only labels diagnostics.
pub fn read_games<R: Read>(
    input: R,
    path: &Path,
    require_outcomes: bool,
    columns: &ColumnMap,
) -> Result<Dataset> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let month_col = required_column(&headers, &columns.month, path)?;
    let white_col = required_column(&headers, &columns.white, path)?;
    let black_col = required_column(&headers, &columns.black, path)?;
    let score_col = column(&headers, &columns.score, path)?;
    if require_outcomes && score_col.is_none() {
        return Err(Error::validation(format!(
            "{}: games need a `{}` column",
            path.display(),
            columns.score
        )));
    }

    let mut games = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err(path))?;
        let line = record.position().map_or(0, |p| p.line());
        let fail = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let field = |i: usize| record.get(i).unwrap_or("");
        let month: u32 = field(month_col)
            .parse()
            .ok()
            .filter(|&m| m >= 1)
            .ok_or_else(|| {
                fail(format!(
                    "month `{}` is not an integer >= 1",
                    field(month_col)
                ))
            })?;
        let player = |i: usize| {
            field(i).parse::<u64>().map(PlayerId).map_err(|_| {
                fail(format!(
                    "player `{}` is not a non-negative integer",
                    field(i)
                ))
            })
        };
        let white = player(white_col)?;
        let black = player(black_col)?;
        let raw_score = score_col.map(field).unwrap_or("");
        let outcome = if raw_score.is_empty() {
            if require_outcomes {
                return Err(Error::validation(format!(
                    "{}: line {line}: missing score",
                    path.display()
                )));
            }
            None
        } else {
            Some(parse_score(raw_score).map_err(fail)?)
        };
        if white == black {
            return Err(Error::validation(format!(
                "{}: line {line}: player {white} plays against themselves",
                path.display()
            )));
        }
        games.push(GameRecord {
            white,
            black,
            month,
            outcome,
        });
    }
    Dataset::new(games)
}

/// Loads and indexes a games file.
pub fn load_games(
    path: &Path,
    require_outcomes: bool,
    columns: &ColumnMap,
) -> Result<(Dataset, DatasetIndex)> {
    let dataset = read_games(open(path)?, path, require_outcomes, columns)?;
    if dataset.is_empty() {
        return Err(Error::validation(format!("{}: no games", path.display())));
    }
    let index = dataset.index()?;
    Ok((dataset, index))
}

fn score_text(outcome: Option<Outcome>) -> &'static str {
    match outcome {
        None => "",
        Some(Outcome::BlackWins) => "0",
        Some(Outcome::Draw) => "0.5",
        Some(Outcome::WhiteWins) => "1",
    }
}

pub fn write_games<W: Write>(mut out: W, dataset: &Dataset) -> std::io::Result<()> {
    writeln!(out, "month,white,black,score")?;
    for g in dataset.games() {
        writeln!(
            out,
            "{},{},{},{}",
            g.month,
            g.white,
            g.black,
            score_text(g.outcome)
        )?;
    }
    out.flush()
}

pub fn save_games(path: &Path, dataset: &Dataset) -> Result<()> {
    write_games(create(path)?, dataset).map_err(io_err(path))
}

pub fn write_ratings<W: Write>(
    mut out: W,
    table: &RatingTable,
    scale: RatingScale,
) -> std::io::Result<()> {
    writeln!(out, "player,{}", scale.column())?;
    for (p, r) in table.iter() {
        writeln!(out, "{p},{r}")?;
    }
    out.flush()
}

pub fn save_ratings(path: &Path, table: &RatingTable, scale: RatingScale) -> Result<()> {
    write_ratings(create(path)?, table, scale).map_err(io_err(path))
}

pub fn read_ratings<R: Read>(input: R, path: &Path) -> Result<(RatingTable, RatingScale)> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let player_col = required_column(&headers, "player", path)?;
    let (rating_col, scale) = match (
        column(&headers, "rating", path)?,
        column(&headers, "rating_elo", path)?,
    ) {
        (Some(i), None) => (i, RatingScale::Natural),
        (None, Some(i)) => (i, RatingScale::Elo),
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "expected exactly one of `rating`, `rating_elo`".into(),
            })
        }
    };

    let mut table = RatingTable::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err(path))?;
        let line = record.position().map_or(0, |p| p.line());
        let fail = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let raw_player = record.get(player_col).unwrap_or("");
        let player = raw_player.parse::<u64>().map(PlayerId).map_err(|_| {
            fail(format!(
                "player `{raw_player}` is not a non-negative integer"
            ))
        })?;
        let raw_rating = record.get(rating_col).unwrap_or("");
        let rating = raw_rating
            .parse::<f64>()
            .ok()
            .filter(|r| r.is_finite())
            .ok_or_else(|| fail(format!("rating `{raw_rating}` is not a finite number")))?;
        if table.insert(player, rating).is_some() {
            return Err(Error::validation(format!(
                "{}: line {line}: duplicate row for player {player}",
                path.display()
            )));
        }
    }
    Ok((table, scale))
}

pub fn load_ratings(path: &Path) -> Result<(RatingTable, RatingScale)> {
    read_ratings(open(path)?, path)
}

pub fn write_predictions<W: Write>(mut out: W, predictions: &[Prediction]) -> std::io::Result<()> {
    writeln!(out, "month,white,black,expected_score")?;
    for p in predictions {
        writeln!(
            out,
            "{},{},{},{}",
            p.game.month, p.game.white, p.game.black, p.expected
        )?;
    }
    out.flush()
}

pub fn save_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    write_predictions(create(path)?, predictions).map_err(io_err(path))
}

/// Reads a predictions file and pairs it row by row with `games`.
pub fn load_predictions(path: &Path, games: &Dataset) -> Result<Vec<Prediction>> {
    let mut rdr = reader(open(path)?);
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let month_col = required_column(&headers, "month", path)?;
    let white_col = required_column(&headers, "white", path)?;
    let black_col = required_column(&headers, "black", path)?;
    let exp_col = required_column(&headers, "expected_score", path)?;

    let mut out = Vec::with_capacity(games.len());
    let mut rows = rdr.records();
    for (i, game) in games.games().iter().enumerate() {
        let record = match rows.next() {
            Some(r) => r.map_err(csv_err(path))?,
            None => {
                return Err(Error::validation(format!(
                    "{}: {} predictions for {} games",
                    path.display(),
                    i,
                    games.len()
                )))
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let field = |c: usize| record.get(c).unwrap_or("");
        let same = field(month_col).parse::<u32>().ok() == Some(game.month)
            && field(white_col).parse::<u64>().ok() == Some(game.white.0)
            && field(black_col).parse::<u64>().ok() == Some(game.black.0);
        if !same {
            return Err(Error::validation(format!(
                "{}: line {line}: prediction does not match game {} ({},{},{})",
                path.display(),
                i + 1,
                game.month,
                game.white,
                game.black
            )));
        }
        let expected = field(exp_col)
            .parse::<f64>()
            .ok()
            .filter(|e| (0.0..=1.0).contains(e))
            .ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected score `{}` is not in [0, 1]", field(exp_col)),
            })?;
        out.push(Prediction {
            game: *game,
            expected,
        });
    }
    if rows.next().is_some() {
        return Err(Error::validation(format!(
            "{}: more predictions than games",
            path.display()
        )));
    }
    Ok(out)
}

pub fn save_grid(path: &Path, grid: &[GridPoint], metric: &str) -> Result<()> {
    let write = |mut out: BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "gamma,lambda,{metric}")?;
        for p in grid {
            writeln!(out, "{},{},{}", p.gamma, p.lambda, p.metric)?;
        }
        out.flush()
    };
    write(create(path)?).map_err(io_err(path))
}

pub fn save_histogram(path: &Path, buckets: &[HistogramBucket]) -> Result<()> {
    let write = |mut out: BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "bucket_lower,count")?;
        for b in buckets {
            writeln!(out, "{},{}", b.lower, b.count)?;
        }
        out.flush()
    };
    write(create(path)?).map_err(io_err(path))
}

pub fn save_scatter(path: &Path, rows: &[ScatterRow]) -> Result<()> {
    let write = |mut out: BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "player,a,b")?;
        for r in rows {
            writeln!(out, "{},{},{}", r.player, r.a, r.b)?;
        }
        out.flush()
    };
    write(create(path)?).map_err(io_err(path))
}

/// Players referenced by `dataset` that `table` has no rating for.
pub fn unrated_players(dataset: &Dataset, table: &RatingTable) -> Vec<PlayerId> {
    let mut seen = HashSet::new();
    let mut missing = Vec::new();
    for g in dataset.games() {
        for p in [g.white, g.black] {
            if !table.contains(p) && seen.insert(p) {
                missing.push(p);
            }
        }
    }
    missing
}
