use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use log::info;

use somrank::pipeline::{self, PipelineConfig, ReportKind, Stage, StageError};
use somrank::synth::{self, ChangePlan, SynthSpec};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "somrank", version, about = "Label, map and rank company fundamentals")]
struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic fixture with ground truth.
    Synth(SynthArgs),
    /// Load, align and filter the inputs.
    Ingest(ConfigArgs),
    /// Run through CUSUM segmentation.
    Segment(SegmentArgs),
    /// Run through interval labeling.
    Label(ConfigArgs),
    /// Run through cleaning, standardization and feature selection.
    Select(ConfigArgs),
    /// Run through map training.
    Train(ConfigArgs),
    /// Run through ranking of the test vectors.
    Rank(ConfigArgs),
    /// Full pipeline plus run manifest.
    Run(ConfigArgs),
    /// Emit plot data for a diagnostic as CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file; relative paths inside it resolve against its directory.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set som.rows=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Shorthand for `--set paths.output_dir=DIR`.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    #[command(flatten)]
    common: ConfigArgs,

    /// small, medium or large (or a week count: 25, 52, 156).
    #[arg(long)]
    target: Option<String>,

    /// Comma-separated CUSUM thresholds, in standard deviations.
    #[arg(long)]
    thresholds: Option<String>,

    /// Comma-separated CUSUM drifts, in standard deviations.
    #[arg(long)]
    drifts: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// umat, lcp, fwc, qq or pca.
    kind: String,

    #[command(flatten)]
    common: ConfigArgs,

    /// Series for the qq report: `date,price` or a single `value` column.
    #[arg(long)]
    input: Option<PathBuf>,

    /// Write to this file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SynthSpec::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = SynthSpec::default().n_companies)]
    companies: usize,
    #[arg(long, default_value_t = SynthSpec::default().weeks)]
    weeks: usize,
    /// First market date (YYYY-MM-DD).
    #[arg(long, default_value_t = SynthSpec::default().start)]
    start: NaiveDate,
    /// Random change points per company.
    #[arg(long, default_value_t = 6)]
    changes_per_company: usize,
    /// Minimum weeks between random change points.
    #[arg(long, default_value_t = 52)]
    min_gap: usize,
    /// Explicit change `COMPANY:WEEK:SHIFT`; replaces the random plan. Repeatable.
    #[arg(long = "change", value_name = "COMPANY:WEEK:SHIFT")]
    explicit_changes: Vec<String>,
    #[arg(long, default_value_t = SynthSpec::default().good_drift, allow_negative_numbers = true)]
    good_drift: f64,
    #[arg(long, default_value_t = SynthSpec::default().bad_drift, allow_negative_numbers = true)]
    bad_drift: f64,
    #[arg(long, default_value_t = SynthSpec::default().base_drift, allow_negative_numbers = true)]
    base_drift: f64,
    #[arg(long, default_value_t = SynthSpec::default().market_sigma)]
    market_sigma: f64,
    #[arg(long, default_value_t = SynthSpec::default().noise_sigma)]
    noise_sigma: f64,
    #[arg(long, default_value_t = SynthSpec::default().n_features)]
    features: usize,
    #[arg(long, default_value_t = SynthSpec::default().planted_feature)]
    planted_feature: usize,
    /// Comma-separated key ratio column indices.
    #[arg(long, default_value = "0,1")]
    key_ratios: String,
    #[arg(long, default_value_t = SynthSpec::default().lead_weeks)]
    lead_weeks: usize,
    #[arg(long, default_value_t = SynthSpec::default().short_history)]
    short_history: usize,
    /// Keep every key ratio present for all companies.
    #[arg(long)]
    no_sparse_key_ratio: bool,
    #[arg(long, default_value_t = SynthSpec::default().missing_rate)]
    missing_rate: f64,
    #[arg(long, default_value_t = SynthSpec::default().min_annual_return)]
    min_annual_return: f64,
}

/// Error plus the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_USAGE,
            error: error.into(),
        }
    }
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        let code = if e.source.is_validation() {
            EXIT_VALIDATION
        } else {
            EXIT_STAGE
        };
        Failure { code, error: e.into() }
    }
}

impl From<somrank::Error> for Failure {
    fn from(e: somrank::Error) -> Self {
        let code = if e.is_validation() { EXIT_VALIDATION } else { EXIT_STAGE };
        Failure { code, error: e.into() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Synth(a) => synth_cmd(a),
        Command::Ingest(a) => stage_cmd(&a, &[], Stage::Ingest),
        Command::Segment(a) => {
            let extra: Vec<String> = [
                a.target.map(|v| format!("target_size={v}")),
                a.thresholds.map(|v| format!("segment.thresholds={v}")),
                a.drifts.map(|v| format!("segment.drifts={v}")),
            ]
            .into_iter()
            .flatten()
            .collect();
            stage_cmd(&a.common, &extra, Stage::Segment)
        }
        Command::Label(a) => stage_cmd(&a, &[], Stage::Label),
        Command::Select(a) => stage_cmd(&a, &[], Stage::Select),
        Command::Train(a) => stage_cmd(&a, &[], Stage::Train),
        Command::Rank(a) => stage_cmd(&a, &[], Stage::Rank),
        Command::Run(a) => {
            let cfg = load_config(&a, &[])?;
            let out = pipeline::run_pipeline(&cfg)?;
            let ranked = out.ranked.as_ref().map_or(0, |r| r.ranking.entries.len());
            println!("ranked {ranked} vectors into {}", cfg.output_dir.display());
            println!("manifest sha256 {}", out.manifest_hash.unwrap_or_default());
            Ok(())
        }
        Command::Report(a) => {
            let kind: ReportKind = a.kind.parse().map_err(Failure::usage)?;
            let cfg = load_config(&a.common, &[])?;
            let text = pipeline::report(&cfg, kind, a.input.as_deref())?;
            match a.out {
                Some(p) => std::fs::write(&p, text)
                    .with_context(|| format!("writing {}", p.display()))
                    .map_err(|error| Failure {
                        code: EXIT_STAGE,
                        error,
                    })?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}

fn load_config(a: &ConfigArgs, extra: &[String]) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| match e {
            somrank::Error::Io { .. } => Failure::usage(anyhow!("cannot read config: {e}")),
            e => Failure::usage(e),
        })?,
        None => PipelineConfig::default(),
    };
    cfg.apply_overrides(&a.overrides).map_err(Failure::usage)?;
    cfg.apply_overrides(extra).map_err(Failure::usage)?;
    if let Some(o) = &a.output {
        cfg.output_dir = o.clone();
    }
    cfg.validate().map_err(Failure::usage)?;
    Ok(cfg)
}

fn stage_cmd(a: &ConfigArgs, extra: &[String], stage: Stage) -> Result<(), Failure> {
    let cfg = load_config(a, extra)?;
    info!("running through the {stage} stage");
    pipeline::run_through(&cfg, stage)?;
    println!("{stage}: artifacts in {}", cfg.output_dir.display());
    Ok(())
}

fn parse_change(s: &str) -> anyhow::Result<(usize, usize, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    let [c, w, d] = parts[..] else {
        return Err(anyhow!("change {s:?} is not COMPANY:WEEK:SHIFT"));
    };
    Ok((
        c.parse().with_context(|| format!("company in {s:?}"))?,
        w.parse().with_context(|| format!("week in {s:?}"))?,
        d.parse().with_context(|| format!("shift in {s:?}"))?,
    ))
}

fn synth_spec(a: &SynthArgs) -> anyhow::Result<SynthSpec> {
    let changes = if a.explicit_changes.is_empty() {
        ChangePlan::Random {
            per_company: a.changes_per_company,
            min_gap: a.min_gap,
        }
    } else {
        let mut plan = vec![Vec::new(); a.companies];
        for s in &a.explicit_changes {
            let (c, w, d) = parse_change(s)?;
            plan.get_mut(c)
                .ok_or_else(|| anyhow!("change {s:?}: company {c} out of range"))?
                .push((w, d));
        }
        for cps in &mut plan {
            cps.sort_by_key(|&(w, _)| w);
        }
        ChangePlan::Explicit(plan)
    };
    let key_ratios = a
        .key_ratios
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<usize>().with_context(|| format!("key ratio {s:?}")))
        .collect::<anyhow::Result<_>>()?;
    Ok(SynthSpec {
        seed: a.seed,
        n_companies: a.companies,
        weeks: a.weeks,
        start: a.start,
        changes,
        good_drift: a.good_drift,
        bad_drift: a.bad_drift,
        base_drift: a.base_drift,
        market_sigma: a.market_sigma,
        noise_sigma: a.noise_sigma,
        n_features: a.features,
        planted_feature: a.planted_feature,
        key_ratios,
        lead_weeks: a.lead_weeks,
        short_history: a.short_history,
        sparse_key_ratio: !a.no_sparse_key_ratio,
        missing_rate: a.missing_rate,
        min_annual_return: a.min_annual_return,
    })
}

fn synth_cmd(a: SynthArgs) -> Result<(), Failure> {
    let spec = synth_spec(&a).map_err(Failure::usage)?;
    spec.validate().map_err(Failure::usage)?;
    let out = synth::generate(&spec)?;
    std::fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))
        .map_err(|error| Failure {
            code: EXIT_STAGE,
            error,
        })?;
    synth::write_fixture(&a.out, &out)?;
    write_starter_config(&a.out, &spec).map_err(|error| Failure {
        code: EXIT_STAGE,
        error,
    })?;
    println!(
        "wrote {} companies, {} weeks to {}",
        spec.n_companies,
        spec.weeks,
        a.out.display()
    );
    Ok(())
}

/// A config next to the fixture that points at it.
fn write_starter_config(dir: &Path, spec: &SynthSpec) -> anyhow::Result<()> {
    let names = spec.feature_names();
    let keys: Vec<&str> = spec.key_ratios.iter().map(|&k| names[k].as_str()).collect();
    let text = format!(
        "[paths]\nprices_dir = prices\nmarket = market.csv\nfundamentals = fundamentals.csv\noutput_dir = out\n\n\
         [ingest]\nkey_ratios = {}\n",
        keys.join(",")
    );
    let p = dir.join("config.txt");
    std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
}
