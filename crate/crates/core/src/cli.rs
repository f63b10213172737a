//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 validation or parse failure,
//! 3 training divergence.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::eval::{self, Metric, DEFAULT_TAIL_MONTHS};
use crate::io::{self, ColumnMap, RatingScale};
use crate::model::RatingTable;
use crate::normalize::{
    self, NormalizationParams, Offset, DEFAULT_BUCKET_WIDTH, DEFAULT_OFFSET, ELO_SCALE,
};
use crate::synth::{self, SynthConfig};
use crate::trainer::{self, EarlyOut, Hyperparams};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "elopp",
    version,
    about = "Train, apply and evaluate regularized chess ratings"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit ratings to a games file
    Train(TrainArgs),
    /// Expected scores for games from a ratings file
    Predict(PredictArgs),
    /// Score predictions against known outcomes
    Evaluate(EvaluateArgs),
    /// Grid-search gamma and lambda on a chronological hold-out
    Tune(TuneArgs),
    /// Convert natural-scale ratings to the Elo scale
    Normalize(NormalizeArgs),
    /// Write histogram or scatter data for plotting
    Export(ExportArgs),
    /// Generate games from random latent ratings
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct GamesArgs {
    #[arg(long)]
    games: PathBuf,
    /// Header remapping, e.g. `month=Month,white=WhitePlayer`
    #[arg(long)]
    columns: Option<ColumnMap>,
}

impl GamesArgs {
    fn columns(&self) -> ColumnMap {
        self.columns.clone().unwrap_or_default()
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    input: GamesArgs,
    #[arg(long)]
    out_ratings: PathBuf,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    gamma: f64,
    #[arg(long, default_value_t = 0.77)]
    lambda: f64,
    #[arg(long, default_value_t = 50)]
    iterations: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Hold out the latest games and stop once their error keeps rising
    #[arg(long)]
    early_out: bool,
    #[arg(long, requires = "early_out")]
    validation_fraction: Option<f64>,
    #[arg(long, requires = "early_out")]
    patience: Option<usize>,
    /// Print the loss after every epoch
    #[arg(long)]
    report_loss: bool,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    input: GamesArgs,
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    gamma: f64,
    #[arg(long)]
    out_predictions: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricChoice {
    Rmse,
    #[value(name = "pm_rmse")]
    PmRmse,
    Both,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["ratings", "predictions"])))]
struct EvaluateArgs {
    #[command(flatten)]
    input: GamesArgs,
    #[arg(long)]
    ratings: Option<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    gamma: f64,
    #[arg(long, value_enum, default_value_t = MetricChoice::Both)]
    metric: MetricChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TuneMetric {
    Rmse,
    #[value(name = "pm_rmse")]
    PmRmse,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[command(flatten)]
    input: GamesArgs,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true,
          default_values_t = eval::DEFAULT_GAMMAS.to_vec())]
    gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = eval::DEFAULT_LAMBDAS.to_vec())]
    lambdas: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_TAIL_MONTHS)]
    tail_months: u32,
    #[arg(long, value_enum, default_value_t = TuneMetric::Rmse)]
    metric: TuneMetric,
    #[arg(long, default_value_t = 50)]
    iterations: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_grid: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct NormalizeArgs {
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long, default_value_t = ELO_SCALE)]
    scale: f64,
    #[arg(long, default_value_t = DEFAULT_OFFSET, allow_negative_numbers = true,
          conflicts_with = "match_mean")]
    offset: f64,
    /// Choose the offset so the output averages to this value
    #[arg(long, allow_negative_numbers = true)]
    match_mean: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("kind").required(true).args(["histogram", "scatter"])))]
struct ExportArgs {
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long)]
    ratings_b: Option<PathBuf>,
    #[arg(long)]
    histogram: bool,
    #[arg(long, requires = "ratings_b")]
    scatter: bool,
    #[arg(long, default_value_t = DEFAULT_BUCKET_WIDTH)]
    bucket_width: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    players: usize,
    #[arg(long, default_value_t = 20_000)]
    games: usize,
    #[arg(long, default_value_t = 100)]
    months: u32,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    gamma_true: f64,
    #[arg(long, default_value_t = 0.3)]
    draw_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    latent_spread: f64,
    #[arg(long, default_value_t = 1.0)]
    locality: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_games: PathBuf,
    #[arg(long)]
    out_latent: Option<PathBuf>,
}

fn natural_ratings(path: &Path) -> Result<RatingTable> {
    match io::load_ratings(path)? {
        (table, RatingScale::Natural) => Ok(table),
        (_, RatingScale::Elo) => Err(Error::validation(format!(
            "{}: expected natural-scale ratings (`rating` column)",
            path.display()
        ))),
    }
}

fn train_cmd(args: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let (dataset, index) = io::load_games(&args.input.games, true, &args.input.columns())?;
    let early_out = args.early_out.then(|| {
        let d = EarlyOut::default();
        EarlyOut {
            validation_fraction: args.validation_fraction.unwrap_or(d.validation_fraction),
            patience: args.patience.unwrap_or(d.patience),
        }
    });
    let hyper = Hyperparams {
        gamma: args.gamma,
        lambda: args.lambda,
        iterations: args.iterations,
        seed: args.seed,
        early_out,
    };
    let report = trainer::train(&dataset, &hyper)?;
    io::save_ratings(&args.out_ratings, &report.ratings, RatingScale::Natural)?;

    let w = |e: std::io::Error| Error::Io {
        path: "<stdout>".into(),
        source: e,
    };
    if args.report_loss {
        match &report.validation_history {
            Some(val) => {
                writeln!(out, "epoch,loss,validation_rmse").map_err(w)?;
                for (p, (l, v)) in report.loss_history.iter().zip(val).enumerate() {
                    writeln!(out, "{p},{l},{v}").map_err(w)?;
                }
            }
            None => {
                writeln!(out, "epoch,loss").map_err(w)?;
                for (p, l) in report.loss_history.iter().enumerate() {
                    writeln!(out, "{p},{l}").map_err(w)?;
                }
            }
        }
    }
    writeln!(
        out,
        "trained {} players on {} games over {} epochs{}",
        index.players.len(),
        dataset.len(),
        report.epochs_run,
        match report.best_epoch {
            Some(b) if report.stopped_early => format!(" (stopped early, kept epoch {b})"),
            Some(b) => format!(" (kept epoch {b})"),
            None => String::new(),
        }
    )
    .map_err(w)
}

fn predict_cmd(args: PredictArgs) -> Result<()> {
    let (dataset, _) = io::load_games(&args.input.games, false, &args.input.columns())?;
    let ratings = natural_ratings(&args.ratings)?;
    let predictions = eval::predict(&dataset, &ratings, args.gamma);
    io::save_predictions(&args.out_predictions, &predictions)
}

fn evaluate_cmd(args: EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let (dataset, _) = io::load_games(&args.input.games, true, &args.input.columns())?;
    let predictions = match (&args.ratings, &args.predictions) {
        (Some(r), _) => eval::predict(&dataset, &natural_ratings(r)?, args.gamma),
        (None, Some(p)) => io::load_predictions(p, &dataset)?,
        (None, None) => unreachable!("clap enforces one prediction source"),
    };
    let report = eval::evaluate(&predictions)?;
    let w = |e: std::io::Error| Error::Io {
        path: "<stdout>".into(),
        source: e,
    };
    if matches!(args.metric, MetricChoice::Rmse | MetricChoice::Both) {
        writeln!(out, "rmse={}", report.rmse).map_err(w)?;
    }
    if matches!(args.metric, MetricChoice::PmRmse | MetricChoice::Both) {
        writeln!(out, "pm_rmse={}", report.pm_rmse).map_err(w)?;
    }
    writeln!(
        out,
        "games={} player_months={}",
        report.games, report.player_months
    )
    .map_err(w)
}

fn tune_cmd(args: TuneArgs, out: &mut dyn Write) -> Result<()> {
    let (dataset, _) = io::load_games(&args.input.games, true, &args.input.columns())?;
    let metric = match args.metric {
        TuneMetric::Rmse => Metric::Rmse,
        TuneMetric::PmRmse => Metric::PmRmse,
    };
    let base = Hyperparams {
        iterations: args.iterations,
        seed: args.seed,
        ..Hyperparams::default()
    };
    let result = eval::grid_tune(
        &dataset,
        &args.gammas,
        &args.lambdas,
        &base,
        args.tail_months,
        metric,
    )?;
    if let Some(path) = &args.out_grid {
        io::save_grid(path, &result.grid, &metric.to_string())?;
    }
    let best = result
        .grid
        .iter()
        .find(|p| p.gamma == result.best_gamma && p.lambda == result.best_lambda)
        .map_or(f64::NAN, |p| p.metric);
    writeln!(
        out,
        "best gamma={} lambda={} {}={}",
        result.best_gamma, result.best_lambda, metric, best
    )
    .map_err(|e| Error::Io {
        path: "<stdout>".into(),
        source: e,
    })
}

fn normalize_cmd(args: NormalizeArgs) -> Result<()> {
    let ratings = natural_ratings(&args.ratings)?;
    let params = NormalizationParams {
        scale: args.scale,
        offset: match args.match_mean {
            Some(m) => Offset::MatchMean(m),
            None => Offset::Fixed(args.offset),
        },
    };
    let scaled = normalize::to_elo_scale(&ratings, &params)?;
    io::save_ratings(&args.out, &scaled, RatingScale::Elo)
}

fn export_cmd(args: ExportArgs) -> Result<()> {
    let (a, _) = io::load_ratings(&args.ratings)?;
    if args.scatter {
        let path = args.ratings_b.as_ref().expect("clap requires --ratings-b");
        let (b, _) = io::load_ratings(path)?;
        io::save_scatter(&args.out, &normalize::export_scatter(&a, &b))
    } else {
        io::save_histogram(
            &args.out,
            &normalize::export_histogram(&a, args.bucket_width)?,
        )
    }
}

fn synth_cmd(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        players: args.players,
        games: args.games,
        months: args.months,
        gamma_true: args.gamma_true,
        draw_fraction: args.draw_fraction,
        latent_spread: args.latent_spread,
        tournament_locality: args.locality,
        seed: args.seed,
    };
    let (dataset, latent) = synth::generate(&config)?;
    io::save_games(&args.out_games, &dataset)?;
    if let Some(path) = &args.out_latent {
        io::save_ratings(path, &latent, RatingScale::Natural)?;
    }
    Ok(())
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(a) => train_cmd(a, out),
        Command::Predict(a) => predict_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a, out),
        Command::Tune(a) => tune_cmd(a, out),
        Command::Normalize(a) => normalize_cmd(a),
        Command::Export(a) => export_cmd(a),
        Command::Synth(a) => synth_cmd(a),
    }
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Divergence { .. } => EXIT_DIVERGED,
        _ => EXIT_INVALID,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
