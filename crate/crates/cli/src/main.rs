use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ewarn_core::config::ExperimentConfig;
use ewarn_core::experiment::{self, DetectorSpec, Model, Prepared, SweepAxis};
use ewarn_core::kv::KeyValues;
use ewarn_core::panel::{IsoWeek, SyntheticPanelSpec};
use ewarn_core::Error;

/// Multivariate EWMA early-warning detectors for weekly surveillance panels.
#[derive(Parser, Debug)]
#[command(name = "ewarn", version)]
struct Cli {
    /// Worker threads (default: all available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config file (`key = value` lines).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Panel manifest; overrides `panel` from the config.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Output directory; overrides `output` and $EWARN_OUT.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Extra `key=value` settings applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one detector over the whole panel and write its alarm trace.
    Detect {
        #[command(flatten)]
        common: Common,
        /// Comma-separated predictor subset for a MEWMA detector.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["week_trigger", "rise_trigger"])]
        subset: Vec<String>,
        /// Smoothing parameter; calibrated over the grid when omitted.
        #[arg(long)]
        lambda: Option<f64>,
        /// Alarm threshold; solved from the target ATFS when omitted.
        #[arg(long)]
        threshold: Option<f64>,
        /// Alarm in this ISO week every year.
        #[arg(long, conflicts_with = "rise_trigger")]
        week_trigger: Option<u32>,
        /// Alarm after this many consecutive increases of the gold standard.
        #[arg(long)]
        rise_trigger: Option<u32>,
    },
    /// Forward selection replicates with median-rank aggregation.
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Cross-validated comparison of the selected model and the baselines.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Models to compare.
        #[arg(long, value_delimiter = ',', default_value = "optimized,week-trigger,rise-trigger,univariate-gold")]
        models: Vec<String>,
        /// Predictor subset for `optimized` (default: the selection in the output directory).
        #[arg(long, value_delimiter = ',')]
        subset: Vec<String>,
    },
    /// Rerun selection and evaluation over a grid of one setting.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// epsilon, window, atfs, train or gap.
        #[arg(long)]
        axis: String,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Write a synthetic seasonal panel with leading predictors.
    Synth {
        /// Directory for the series files and `panel.manifest`.
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        seasons: usize,
        #[arg(long, default_value_t = 52)]
        weeks_per_season: usize,
        #[arg(long, default_value_t = 5)]
        predictors: usize,
        #[arg(long, default_value_t = 0)]
        decoys: usize,
        /// Weeks by which the predictors lead the gold standard.
        #[arg(long, default_value_t = 3)]
        lead: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0.8)]
        baseline: f64,
        #[arg(long, default_value_t = 4.0)]
        peak: f64,
        #[arg(long, default_value_t = 2)]
        jitter: usize,
        /// First week, e.g. 2010-W27.
        #[arg(long, default_value = "2010-W27")]
        start: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

// Like `println!`, but a closed pipe (`ewarn ... | head`) is not a panic.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let text = common.set.join("\n");
    let kv = KeyValues::parse(&text, Path::new("--set"))?;
    config.apply(&kv, Path::new("."))?;
    if let Some(p) = &common.panel {
        config.panel = Some(p.clone());
    }
    if let Some(o) = &common.output {
        config.output = o.clone();
    }
    if let Some(s) = common.seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    }
    match cli.command {
        Command::Detect {
            common,
            subset,
            lambda,
            threshold,
            week_trigger,
            rise_trigger,
        } => {
            let config = load_config(&common)?;
            let spec = match (week_trigger, rise_trigger) {
                (Some(w), _) => DetectorSpec::WeekTrigger(w),
                (_, Some(n)) => DetectorSpec::RiseTrigger(n),
                _ => DetectorSpec::Mewma {
                    subset: if subset.is_empty() { config.subset.clone() } else { subset },
                    lambda,
                    threshold,
                },
            };
            let prepared = Prepared::load(&config)?;
            let out = experiment::run_detect(&config, &prepared, &spec)?;
            say!(
                "{} alarm weeks, {} cluster onsets; performance {:.4}, precision {:.4}, recall {:.4}",
                out.trace.alarm_weeks().len(),
                out.trace.onsets.len(),
                out.report.performance,
                out.report.precision,
                out.report.recall
            );
            if let Some(cal) = &out.calibration {
                say!("λ = {}, h = {}", cal.best.lambda, cal.best.threshold);
            }
            say!("wrote {}", config.output.display());
        }
        Command::Select { common, replicates } => {
            let mut config = load_config(&common)?;
            if let Some(r) = replicates {
                config.replicates = r;
                config.validate()?;
            }
            let prepared = Prepared::load(&config)?;
            let out = experiment::run_select(&config, &prepared)?;
            if out.resumed > 0 {
                say!("resumed {} of {} replicates from checkpoints", out.resumed, config.replicates);
            }
            say!("selected: {}", out.aggregate.selection.join(", "));
            say!("wrote {}", config.output.display());
        }
        Command::Evaluate { common, models, subset } => {
            let mut config = load_config(&common)?;
            if !subset.is_empty() {
                config.subset = subset;
            }
            let models = models.iter().map(|m| m.parse()).collect::<Result<Vec<Model>, _>>()?;
            let prepared = Prepared::load(&config)?;
            let results = experiment::run_evaluate(&config, &prepared, &models)?;
            for r in &results {
                say!(
                    "{:<16} performance {:.4}  precision {:.4}  recall {:.4}",
                    r.model.name(),
                    r.performance,
                    r.pooled.precision,
                    r.pooled.recall
                );
            }
            say!("wrote {}", config.output.display());
        }
        Command::Sweep { common, axis, values } => {
            let config = load_config(&common)?;
            let axis: SweepAxis = axis.parse()?;
            let prepared = Prepared::load(&config)?;
            let rows = experiment::run_sweep(&config, &prepared.panel, axis, &values)?;
            for r in &rows {
                match &r.outcome {
                    Ok(p) => say!("{} = {}: performance {:.4}", axis.name(), r.value, p.performance),
                    Err(e) => say!("{} = {}: failed: {e}", axis.name(), r.value),
                }
            }
            say!("wrote {}", config.output.display());
        }
        Command::Synth {
            out,
            seasons,
            weeks_per_season,
            predictors,
            decoys,
            lead,
            noise,
            baseline,
            peak,
            jitter,
            start,
            seed,
        } => {
            let spec = SyntheticPanelSpec {
                seasons,
                weeks_per_season,
                baseline_level: baseline,
                peak_height: peak,
                peak_week_jitter: jitter,
                noise_scale: noise,
                predictor_count: predictors,
                predictor_lead: lead,
                decoy_count: decoys,
                start: start.parse::<IsoWeek>()?,
                rng_seed: seed,
            };
            let manifest = experiment::run_synth(&spec, &out)?;
            say!("wrote {}", manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
