//! Whole-panel analysis run and its JSON/CSV renderings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    paired_design_distances, paired_design_means, panel_summary, relative_difference, AnalysisConfig, Design,
    DistanceDesignOptions, Exclusion, PairedDesignResult, Panel, PanelSummary, ParticipantPair, ParticipantValue,
};
use crate::dtw::StepPattern;
use crate::error::{Error, Result};
use crate::io::{clean_session, ChannelLimits};
use crate::metrics::CoarseMode;
use crate::model::{SessionType, CHANNELS};
use crate::stats::TestKind;

/// Stamped into every report.
pub const REPORT_VERSION: &str = concat!("drivedist ", env!("CARGO_PKG_VERSION"));

/// Channels of the per-participant and summary relative-distance tables.
pub const RELATIVE_TABLE_CHANNELS: [&str; 3] = ["HR", "VS", "Brake"];
/// Channels of the means-design p-value table.
pub const MEANS_TABLE_CHANNELS: [&str; 4] = ["HR", "Brake", "VS", "RPM"];

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub design: Design,
    pub test: TestKind,
    pub config: AnalysisConfig,
    pub allow_partial: bool,
    /// Outlier limits applied to every session first. `None` skips cleaning.
    pub limits: Option<ChannelLimits>,
    /// Channels to analyse; empty means every registered channel in the panel.
    pub channels: Vec<String>,
}

impl AnalyzeOptions {
    pub fn new(design: Design, test: TestKind) -> Self {
        Self {
            design,
            test,
            config: AnalysisConfig::default(),
            allow_partial: false,
            limits: Some(ChannelLimits::default()),
            channels: Vec::new(),
        }
    }
}

/// Coarse distances of one (participant, distraction, channel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub participant_id: String,
    pub distraction_type: SessionType,
    pub channel: String,
    pub coarse_before: f64,
    pub coarse_during: f64,
    pub coarse_after: f64,
    /// Percent; absent when the before distance is zero.
    pub relative_difference: Option<f64>,
    pub fine_length: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestEntry {
    pub distraction_type: SessionType,
    pub channel: String,
    pub design: Design,
    pub test: TestKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_effective: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub significance: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub pairs: Vec<ParticipantPair>,
    pub excluded: Vec<Exclusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelReport {
    pub version: String,
    pub design: Design,
    pub test: TestKind,
    pub window: usize,
    pub step_pattern: StepPattern,
    pub band_radius: Option<usize>,
    pub normalize: bool,
    pub coarse_mode: CoarseMode,
    pub participants: Vec<String>,
    /// Samples replaced by outlier cleaning, per channel over the whole panel.
    pub cleaned_samples: BTreeMap<String, usize>,
    pub distances: Vec<DistanceRecord>,
    pub summaries: Vec<PanelSummary>,
    pub tests: Vec<TestEntry>,
    pub warnings: Vec<String>,
}

impl PanelReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    pub fn test(&self, distraction: SessionType, channel: &str) -> Option<&TestEntry> {
        self.tests
            .iter()
            .find(|t| t.distraction_type == distraction && t.channel == channel)
    }

    pub fn p_value(&self, distraction: SessionType, channel: &str) -> Option<f64> {
        self.test(distraction, channel).and_then(|t| t.p_value)
    }
}

/// `p<0.05`, `p<0.10` or `ns`.
pub fn significance(p: f64) -> &'static str {
    if p < 0.05 {
        "p<0.05"
    } else if p < 0.10 {
        "p<0.10"
    } else {
        "ns"
    }
}

/// Two decimals from 0.01 up, one significant digit in `dE-XX` form below.
pub fn format_p(p: f64) -> String {
    if p >= 0.01 {
        return format!("{p:.2}");
    }
    let mut exponent = p.log10().floor() as i32;
    let mut mantissa = (p / 10f64.powi(exponent)).round() as i64;
    if mantissa >= 10 {
        mantissa = 1;
        exponent += 1;
    }
    format!("{mantissa}E-{:02}", -exponent)
}

/// Integer percent, halves rounded up.
pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

fn analysed_channels(panel: &Panel, requested: &[String]) -> Vec<String> {
    if requested.is_empty() {
        CHANNELS
            .iter()
            .filter(|c| panel.has_channel(c))
            .map(|c| c.to_string())
            .collect()
    } else {
        requested.to_vec()
    }
}

fn entry_from(
    distraction: SessionType,
    channel: &str,
    design: Design,
    test: TestKind,
    outcome: Result<PairedDesignResult>,
    warnings: &mut Vec<String>,
) -> TestEntry {
    match outcome {
        Ok(r) => {
            for e in &r.excluded {
                warnings.push(format!(
                    "{distraction}/{channel}: participant {} excluded: {}",
                    e.participant_id, e.reason
                ));
            }
            TestEntry {
                distraction_type: distraction,
                channel: channel.to_string(),
                design,
                test,
                statistic: Some(r.result.statistic),
                p_value: Some(r.result.p_value),
                n_effective: Some(r.result.n_effective),
                significance: Some(significance(r.result.p_value).to_string()),
                error: None,
                pairs: r.pairs,
                excluded: r.excluded,
            }
        }
        Err(e) => {
            warnings.push(format!("{distraction}/{channel}: test not computed: {e}"));
            TestEntry {
                distraction_type: distraction,
                channel: channel.to_string(),
                design,
                test,
                statistic: None,
                p_value: None,
                n_effective: None,
                significance: None,
                error: Some(e.to_string()),
                pairs: Vec::new(),
                excluded: Vec::new(),
            }
        }
    }
}

/// Statistical failures become table gaps; anything about the inputs aborts.
fn is_statistical(e: &Error) -> bool {
    matches!(
        e,
        Error::TooFewObservations { .. }
            | Error::DegeneratePairedSample
            | Error::NoNonzeroDifferences
            | Error::ZeroVariance
    )
}

/// Runs the chosen design over every distraction type and channel in the panel.
pub fn analyze_panel(panel: &Panel, options: &AnalyzeOptions) -> Result<PanelReport> {
    let mut cleaned_samples = BTreeMap::new();
    let cleaned_panel;
    let panel = match &options.limits {
        Some(limits) => {
            cleaned_panel = panel.try_map(|s| {
                let (cleaned, counts) = clean_session(s, limits).map_err(|e| e.for_participant(s.participant_id()))?;
                for (channel, n) in counts {
                    *cleaned_samples.entry(channel).or_insert(0) += n;
                }
                Ok(cleaned)
            })?;
            &cleaned_panel
        }
        None => panel,
    };
    if panel.is_empty() {
        return Err(Error::InvalidConfig("panel holds no sessions".into()));
    }

    let channels = analysed_channels(panel, &options.channels);
    let mut warnings = Vec::new();
    let mut distances = Vec::new();
    let mut summaries = Vec::new();
    let mut tests = Vec::new();

    for distraction in SessionType::DISTRACTIONS {
        if !panel.has_session_type(distraction) {
            warnings.push(format!("no {distraction} sessions in panel"));
            continue;
        }
        for channel in &channels {
            match options.design {
                Design::Means => {
                    let outcome = paired_design_means(panel, distraction, channel, options.test);
                    let outcome = match outcome {
                        Err(e) if !is_statistical(&e) => return Err(e),
                        o => o,
                    };
                    tests.push(entry_from(
                        distraction,
                        channel,
                        Design::Means,
                        options.test,
                        outcome,
                        &mut warnings,
                    ));
                }
                Design::Distances => {
                    let opts = DistanceDesignOptions {
                        config: options.config,
                        test: options.test,
                        allow_partial: options.allow_partial,
                    };
                    let outcome = match paired_design_distances(panel, distraction, channel, &opts) {
                        Ok(r) => {
                            let mut rel = Vec::new();
                            for report in &r.reports {
                                let relative = match relative_difference(report.coarse_before, report.coarse_during) {
                                    Ok(v) => {
                                        rel.push(ParticipantValue {
                                            participant_id: report.participant_id.clone(),
                                            value: v,
                                        });
                                        Some(v)
                                    }
                                    Err(e) => {
                                        warnings.push(format!(
                                            "{distraction}/{channel}: participant {}: {e}",
                                            report.participant_id
                                        ));
                                        None
                                    }
                                };
                                distances.push(DistanceRecord {
                                    participant_id: report.participant_id.clone(),
                                    distraction_type: distraction,
                                    channel: channel.clone(),
                                    coarse_before: report.coarse_before,
                                    coarse_during: report.coarse_during,
                                    coarse_after: report.coarse_after,
                                    relative_difference: relative,
                                    fine_length: [
                                        report.fine_before.len(),
                                        report.fine_during.len(),
                                        report.fine_after.len(),
                                    ],
                                });
                            }
                            match panel_summary(&rel, distraction, channel) {
                                Ok(s) => summaries.push(s),
                                Err(e) => warnings.push(format!("{distraction}/{channel}: no summary: {e}")),
                            }
                            Ok(r.design)
                        }
                        Err(e) if !is_statistical(&e) => return Err(e),
                        Err(e) => Err(e),
                    };
                    tests.push(entry_from(
                        distraction,
                        channel,
                        Design::Distances,
                        options.test,
                        outcome,
                        &mut warnings,
                    ));
                }
            }
        }
    }

    Ok(PanelReport {
        version: REPORT_VERSION.to_string(),
        design: options.design,
        test: options.test,
        window: options.config.window,
        step_pattern: options.config.align.step_pattern,
        band_radius: options.config.align.band_radius,
        normalize: options.config.normalize,
        coarse_mode: options.config.coarse_mode,
        participants: panel.participants().iter().map(|p| p.to_string()).collect(),
        cleaned_samples,
        distances,
        summaries,
        tests,
        warnings,
    })
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| round_half_up(x).to_string()).unwrap_or_else(|| "NA".into())
}

/// Per-participant relative differences for one distraction, with avg and
/// stddev rows recomputed from the listed values.
pub fn relative_distance_table(report: &PanelReport, distraction: SessionType) -> String {
    let mut out = String::from("Participant");
    for c in RELATIVE_TABLE_CHANNELS {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    let lookup = |pid: &str, channel: &str| {
        report
            .distances
            .iter()
            .find(|d| d.participant_id == pid && d.distraction_type == distraction && d.channel == channel)
            .and_then(|d| d.relative_difference)
    };
    for pid in &report.participants {
        out.push_str(pid);
        for c in RELATIVE_TABLE_CHANNELS {
            out.push(',');
            out.push_str(&fmt_cell(lookup(pid, c)));
        }
        out.push('\n');
    }
    let summary = |c: &str| {
        report
            .summaries
            .iter()
            .find(|s| s.distraction_type == distraction && s.channel == c)
    };
    for (label, pick) in [("avg", 0), ("stddev", 1)] {
        out.push_str(label);
        for c in RELATIVE_TABLE_CHANNELS {
            out.push(',');
            out.push_str(&fmt_cell(summary(c).map(|s| if pick == 0 { s.mean } else { s.stddev })));
        }
        out.push('\n');
    }
    out
}

/// One row per distraction type, mean and stddev of the relative differences.
pub fn relative_summary_table(report: &PanelReport) -> String {
    let mut out = String::from("Distraction");
    for c in RELATIVE_TABLE_CHANNELS {
        out.push_str(&format!(",{c}_mean,{c}_stddev"));
    }
    out.push('\n');
    for distraction in SessionType::DISTRACTIONS {
        out.push_str(distraction.as_str());
        for c in RELATIVE_TABLE_CHANNELS {
            let s = report
                .summaries
                .iter()
                .find(|s| s.distraction_type == distraction && s.channel == c);
            out.push_str(&format!(
                ",{},{}",
                fmt_cell(s.map(|s| s.mean)),
                fmt_cell(s.map(|s| s.stddev))
            ));
        }
        out.push('\n');
    }
    out
}

/// Columns of the p-value table for `design`.
pub fn p_value_columns(design: Design) -> &'static [&'static str] {
    match design {
        Design::Means => &MEANS_TABLE_CHANNELS,
        Design::Distances => &CHANNELS,
    }
}

/// One row per distraction type, one column per channel.
pub fn p_value_table(report: &PanelReport) -> String {
    let columns = p_value_columns(report.design);
    let mut out = String::from("Distraction");
    for c in columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for distraction in SessionType::DISTRACTIONS {
        out.push_str(distraction.as_str());
        for c in columns {
            out.push(',');
            match report.p_value(distraction, c) {
                Some(p) => out.push_str(&format_p(p)),
                None => out.push_str("NA"),
            }
        }
        out.push('\n');
    }
    out
}

/// Writes the table CSVs next to `json_path`, named after its stem.
pub fn write_tables(report: &PanelReport, json_path: &Path) -> Result<Vec<PathBuf>> {
    let dir = json_path.parent().unwrap_or(Path::new("."));
    let stem = json_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    let mut files = Vec::new();
    if report.design == Design::Distances {
        for distraction in SessionType::DISTRACTIONS {
            files.push((
                dir.join(format!("{stem}_relative_distances_{distraction}.csv")),
                relative_distance_table(report, distraction),
            ));
        }
        files.push((
            dir.join(format!("{stem}_relative_summary.csv")),
            relative_summary_table(report),
        ));
    }
    files.push((
        dir.join(format!("{stem}_p_values_{}.csv", report.design)),
        p_value_table(report),
    ));
    let mut written = Vec::new();
    for (path, text) in files {
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Writes the report JSON and its tables.
pub fn write_report(report: &PanelReport, json_path: &Path) -> Result<Vec<PathBuf>> {
    if let Some(dir) = json_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(json_path, report.to_json()).map_err(|e| Error::io(json_path, e))?;
    let mut files = vec![json_path.to_path_buf()];
    files.extend(write_tables(report, json_path)?);
    Ok(files)
}
