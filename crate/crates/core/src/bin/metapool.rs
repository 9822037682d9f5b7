use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use metapool::meta::Weighting;
use metapool::pipeline::{exit_code, run, summary_table, MethodChoice, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Weights {
    Equal,
    Inverse,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Ci {
    Wald,
    Knha,
    Both,
}

/// Pool per-model percentile estimates of R(t), r and I into combined
/// estimates with confidence and prediction intervals.
#[derive(Debug, Parser)]
#[command(name = "metapool", version)]
struct Args {
    /// Quantile CSV: measure,region,model,q5,q25,q50,q75,q95[,fit]
    input: PathBuf,

    /// Output directory.
    #[arg(long, default_value = "metapool-out")]
    out: PathBuf,

    /// Two-sided interval level parameter (0.10 gives 90% intervals).
    #[arg(long, default_value_t = 0.10)]
    alpha: f64,

    /// Model weights when pooling.
    #[arg(long, value_enum, default_value_t = Weights::Equal)]
    weights: Weights,

    /// Interval method.
    #[arg(long, value_enum, default_value_t = Ci::Both)]
    ci: Ci,

    /// Seed for the gamma-fit swarm.
    #[arg(long, env = "METAPOOL_SEED", default_value_t = 0)]
    seed: u64,

    /// Absolute Bowley skewness above which a gamma is fitted.
    #[arg(long, default_value_t = 0.5)]
    skew_threshold: f64,

    /// Floor the Knapp-Hartung scale factor at 1.
    #[arg(long)]
    knha_truncate: bool,

    /// Region signal CSV: region,daily_deaths,subarea_cases
    #[arg(long)]
    signals: Option<PathBuf>,

    /// Fail on gamma-fit failures and on groups with fewer than two models.
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();

    let mut cfg = RunConfig::new(args.input, args.out);
    cfg.alpha = args.alpha;
    cfg.weighting = match args.weights {
        Weights::Equal => Weighting::Equal,
        Weights::Inverse => Weighting::InverseVariance,
    };
    cfg.method = match args.ci {
        Ci::Wald => MethodChoice::Wald,
        Ci::Knha => MethodChoice::Knha,
        Ci::Both => MethodChoice::Both,
    };
    cfg.seed = args.seed;
    cfg.skew_threshold = args.skew_threshold;
    cfg.knha_truncate = args.knha_truncate;
    cfg.signals = args.signals;
    cfg.strict = args.strict;

    match run(&cfg) {
        Ok(report) => {
            print!("{}", summary_table(&report));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("metapool: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
