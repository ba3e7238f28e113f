//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data or validation
//! errors. Diagnostics go to standard error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{segment_distances, segment_stats, AnalysisConfig, Design, Panel};
use crate::dtw::{align_values, warp_values, AlignConfig, StepPattern};
use crate::error::{Error, Result};
use crate::io::{clean_session, load_session_pair, ChannelLimits};
use crate::metrics::{CoarseMode, DEFAULT_WINDOW};
use crate::model::{Segment, Session, SessionType, CHANNELS};
use crate::report::{analyze_panel, write_report, AnalyzeOptions, REPORT_VERSION};
use crate::simgen::{write_panel, DistractionEffect, EffectMap};
use crate::stats::{qq_points, TestKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "drivedist",
    version,
    about = "Baseline-referenced analysis of driving sessions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic panel of sessions.
    Simulate(SimulateArgs),
    /// Align one channel of a session to a baseline and write the warping path.
    Align(AlignArgs),
    /// Segment distances of a session from its baseline.
    Distances(DistancesArgs),
    /// Run a paired design over a whole panel.
    Analyze(AnalyzeArgs),
    /// QQ points of a per-participant sample, for a normality check.
    Qq(QqArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 16)]
    pub participants: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// e.g. `VS:-0.2,HR:+10` or `DS1/VS:-0.2,DS3/Steering:2`
    #[arg(long, value_parser = parse_effects, default_value = "")]
    pub effect: EffectMap,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct AlignOpts {
    /// Sakoe-Chiba band radius in samples.
    #[arg(long)]
    pub band: Option<usize>,
    #[arg(long, default_value_t = StepPattern::SymmetricUniform)]
    pub step: StepPattern,
}

impl AlignOpts {
    fn config(&self) -> AlignConfig {
        AlignConfig {
            step_pattern: self.step,
            band_radius: self.band,
        }
    }
}

#[derive(Debug, Args, Clone)]
pub struct CleanOpts {
    /// JSON map of channel to `[min, max]`; defaults to the built-in limits.
    #[arg(long)]
    pub limits: Option<PathBuf>,
    /// Skip outlier cleaning.
    #[arg(long, conflicts_with = "limits")]
    pub no_clean: bool,
}

impl CleanOpts {
    fn limits(&self) -> Result<Option<ChannelLimits>> {
        match (&self.limits, self.no_clean) {
            (_, true) => Ok(None),
            (Some(path), false) => ChannelLimits::load(path).map(Some),
            (None, false) => Ok(Some(ChannelLimits::default())),
        }
    }
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub baseline: PathBuf,
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long)]
    pub channel: String,
    #[command(flatten)]
    pub align: AlignOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DistancesArgs {
    #[arg(long)]
    pub baseline: PathBuf,
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long, conflicts_with = "all")]
    pub channel: Option<String>,
    /// Every channel both sessions share (the default).
    #[arg(long)]
    pub all: bool,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// z-score both series with the baseline's mean and stddev first.
    #[arg(long)]
    pub normalize: bool,
    /// Coarse distance as sqrt of the summed squares instead of the absolute sum.
    #[arg(long)]
    pub euclidean: bool,
    #[command(flatten)]
    pub align: AlignOpts,
    #[command(flatten)]
    pub clean: CleanOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long)]
    pub design: Design,
    /// Defaults to `ttest` for the means design and `wilcoxon` for distances.
    #[arg(long)]
    pub test: Option<TestKind>,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub euclidean: bool,
    /// Exclude participants whose distances fail instead of aborting.
    #[arg(long)]
    pub allow_partial: bool,
    /// Restrict to these channels (repeatable).
    #[arg(long = "channel")]
    pub channels: Vec<String>,
    #[command(flatten)]
    pub align: AlignOpts,
    #[command(flatten)]
    pub clean: CleanOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QqArgs {
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long)]
    pub design: Design,
    #[arg(long)]
    pub segment: Segment,
    #[arg(long)]
    pub channel: String,
    #[arg(long, default_value_t = SessionType::DS1)]
    pub distraction: SessionType,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    #[command(flatten)]
    pub align: AlignOpts,
    #[command(flatten)]
    pub clean: CleanOpts,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `KEY:VALUE` pairs, each optionally prefixed with `DSk/`.
pub fn parse_effects(text: &str) -> std::result::Result<EffectMap, String> {
    let mut map = EffectMap::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (scope, pair) = match item.split_once('/') {
            Some((ds, rest)) => {
                let t: SessionType = ds.parse().map_err(|e: Error| e.to_string())?;
                if t.is_baseline() {
                    return Err(format!("{t} is the baseline and takes no effect"));
                }
                (vec![t], rest)
            }
            None => (SessionType::DISTRACTIONS.to_vec(), item),
        };
        let (key, value) = pair
            .split_once(':')
            .ok_or_else(|| format!("expected KEY:VALUE, got '{item}'"))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| format!("invalid number in '{item}'"))?;
        for t in scope {
            let effect = map.entry(t).or_insert_with(DistractionEffect::none);
            match key.trim().to_ascii_lowercase().as_str() {
                "vs" | "speed" => effect.speed_shift = value,
                "hr" => effect.hr_shift = value,
                "steering" => effect.steering_noise_multiplier = value,
                "ramp" => effect.onset_ramp = value,
                other => return Err(format!("unknown effect key '{other}' (use VS, HR, Steering or ramp)")),
            }
            effect.validate().map_err(|e| e.to_string())?;
        }
    }
    Ok(map)
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Align(a) => align(a),
        Command::Distances(a) => distances(a),
        Command::Analyze(a) => analyze(a),
        Command::Qq(a) => qq(a),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `<dir>/<stem><suffix>` for an output path.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let manifest = write_panel(&a.out, a.participants, &a.effect, a.seed)?;
    println!(
        "wrote {} sessions for {} participants to {}",
        manifest.participants.iter().map(|p| p.sessions.len()).sum::<usize>(),
        manifest.participants.len(),
        a.out.display()
    );
    Ok(())
}

fn align(a: AlignArgs) -> Result<()> {
    let baseline = load_session_pair(&a.baseline)?;
    let session = load_session_pair(&a.session)?;
    let reference = baseline.channel(&a.channel)?;
    let query = session.channel(&a.channel)?;
    let alignment = align_values(query.values(), reference.values(), &a.align.config())?;

    let mut path_csv = String::from("query_index,reference_index\n");
    for (i, j) in &alignment.path {
        path_csv.push_str(&format!("{},{}\n", i + 1, j + 1));
    }
    write_file(&a.out, &path_csv)?;

    let warped = warp_values(query.values(), reference.len(), &alignment)?;
    let mut warped_csv = format!("t,{}\n", a.channel);
    for (t, v) in reference.times().iter().zip(&warped) {
        warped_csv.push_str(&format!("{t:?},{v:?}\n"));
    }
    let warped_path = sibling(&a.out, "_warped.csv");
    write_file(&warped_path, &warped_csv)?;
    println!(
        "distance {:?}, path length {}; wrote {} and {}",
        alignment.distance,
        alignment.path.len(),
        a.out.display(),
        warped_path.display()
    );
    Ok(())
}

fn cleaned(session: Session, clean: &CleanOpts) -> Result<Session> {
    match clean.limits()? {
        Some(limits) => Ok(clean_session(&session, &limits)?.0),
        None => Ok(session),
    }
}

/// Registered channels first in table order, then any others by name.
fn shared_channels(a: &Session, b: &Session) -> Vec<String> {
    let mut names: Vec<String> = CHANNELS
        .iter()
        .filter(|c| a.has_channel(c) && b.has_channel(c))
        .map(|c| c.to_string())
        .collect();
    names.extend(
        a.channel_names()
            .filter(|c| !CHANNELS.contains(c) && b.has_channel(c))
            .map(str::to_string),
    );
    names
}

#[derive(Serialize)]
struct DistancesOutput<'a> {
    version: &'a str,
    window: usize,
    step_pattern: StepPattern,
    band_radius: Option<usize>,
    normalize: bool,
    coarse_mode: CoarseMode,
    reports: Vec<crate::analysis::SegmentDistanceReport>,
}

fn distances(a: DistancesArgs) -> Result<()> {
    let baseline = cleaned(load_session_pair(&a.baseline)?, &a.clean)?;
    let session = cleaned(load_session_pair(&a.session)?, &a.clean)?;
    let channels = match &a.channel {
        Some(c) => vec![c.clone()],
        None => shared_channels(&session, &baseline),
    };
    let config = AnalysisConfig {
        window: a.window,
        align: a.align.config(),
        normalize: a.normalize,
        coarse_mode: coarse_mode(a.euclidean),
    };
    let reports = channels
        .iter()
        .map(|c| segment_distances(&session, &baseline, c, &config))
        .collect::<Result<Vec<_>>>()?;

    for r in &reports {
        for segment in Segment::ALL {
            let path = sibling(&a.out, &format!("_{}_fine_{}.csv", r.channel, segment.as_str()));
            write_file(&path, &r.fine(segment).to_csv())?;
        }
    }
    let output = DistancesOutput {
        version: REPORT_VERSION,
        window: a.window,
        step_pattern: config.align.step_pattern,
        band_radius: config.align.band_radius,
        normalize: a.normalize,
        coarse_mode: config.coarse_mode,
        reports,
    };
    write_file(
        &a.out,
        &(serde_json::to_string_pretty(&output).expect("report serialises") + "\n"),
    )?;
    for r in &output.reports {
        println!(
            "{}: before {:?}, during {:?}, after {:?}",
            r.channel, r.coarse_before, r.coarse_during, r.coarse_after
        );
    }
    Ok(())
}

fn coarse_mode(euclidean: bool) -> CoarseMode {
    if euclidean {
        CoarseMode::Euclidean
    } else {
        CoarseMode::AbsoluteSum
    }
}

fn default_test(design: Design) -> TestKind {
    match design {
        Design::Means => TestKind::PairedT,
        Design::Distances => TestKind::WilcoxonSignedRank,
    }
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let panel = Panel::load_dir(&a.panel)?;
    let options = AnalyzeOptions {
        design: a.design,
        test: a.test.unwrap_or_else(|| default_test(a.design)),
        config: AnalysisConfig {
            window: a.window,
            align: a.align.config(),
            normalize: a.normalize,
            coarse_mode: coarse_mode(a.euclidean),
        },
        allow_partial: a.allow_partial,
        limits: a.clean.limits()?,
        channels: a.channels,
    };
    let report = analyze_panel(&panel, &options)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for path in write_report(&report, &a.out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn qq(a: QqArgs) -> Result<()> {
    let limits = a.clean.limits()?;
    let mut panel = Panel::load_dir(&a.panel)?;
    if let Some(limits) = &limits {
        panel = panel.try_map(|s| Ok(clean_session(s, limits)?.0))?;
    }
    let config = AnalysisConfig {
        window: a.window,
        align: a.align.config(),
        ..AnalysisConfig::default()
    };
    let mut sample = Vec::new();
    for participant in panel.participants() {
        let session = panel
            .session(participant, a.distraction)
            .ok_or_else(|| Error::MissingSession {
                participant: participant.to_string(),
                session_type: a.distraction,
            })?;
        let value = match a.design {
            Design::Means => {
                segment_stats(session, &a.channel).map_err(|e| e.for_participant(participant))?[Segment::ALL
                    .iter()
                    .position(|s| *s == a.segment)
                    .expect("segment listed")]
                .mean
            }
            Design::Distances => {
                let baseline =
                    panel
                        .session(participant, SessionType::BASELINE)
                        .ok_or_else(|| Error::MissingBaseline {
                            participant: participant.to_string(),
                        })?;
                segment_distances(session, baseline, &a.channel, &config)
                    .map_err(|e| e.for_participant(participant))?
                    .coarse(a.segment)
            }
        };
        sample.push(value);
    }
    let plot = qq_points(&sample)?;
    write_file(&a.out, &plot.to_csv())?;
    println!(
        "{} points, correlation {:.4}; wrote {}",
        plot.points.len(),
        plot.r,
        a.out.display()
    );
    Ok(())
}
