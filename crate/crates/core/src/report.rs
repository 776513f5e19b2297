//! Session and comparison reports, plus plot-ready data tables.
//!
//! Structured output is pretty-printed JSON. Delimited output is UTF-8 CSV
//! with `\n` line endings and a header row. Statistics carry 3 decimals and
//! percentages 1 decimal in both forms.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{channel_summary, ChannelSummary, JointAngleSeries, JointChannel};
use crate::rula::{
    band_percentages, format_percent, BandShares, RiskBand, RulaConfig, RulaTimeline,
};
use crate::sync::{ComparisonReport, Metric, RunSummary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("timeline is empty")]
    EmptyTimeline,
    #[error("nothing to report")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Structured,
    Delimited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Imu,
    Video,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Imu => "imu",
            SourceKind::Video => "video",
        }
    }
}

pub fn round_to(x: f64, decimals: i32) -> f64 {
    let p = 10f64.powi(decimals);
    let r = (x * p).round() / p;
    // no negative zero in output
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Fixed 3-decimal rendering of a statistic.
pub fn fmt_stat(x: f64) -> String {
    format!("{:.3}", round_to(x, 3))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetadata {
    pub source_kind: SourceKind,
    pub sample_rate: f64,
    pub samples: usize,
    pub start_time: f64,
    pub duration: f64,
    pub config_checksum: String,
    /// Run settings echoed back, e.g. `strict` or `reference`.
    pub settings: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandEntry {
    pub band: RiskBand,
    pub samples: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub metadata: SessionMetadata,
    pub bands: Vec<BandEntry>,
    /// The four shares as `a % / b % / c % / d %`.
    pub band_row: String,
    pub degraded_frames: usize,
    pub summaries: BTreeMap<JointChannel, ChannelSummary>,
    pub final_scores: FinalScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalScores {
    pub left: Vec<u8>,
    pub right: Vec<u8>,
    pub combined: Vec<u8>,
}

fn rounded_summary(s: ChannelSummary) -> ChannelSummary {
    ChannelSummary {
        mean: round_to(s.mean, 3),
        std_dev: round_to(s.std_dev, 3),
        min: round_to(s.min, 3),
        max: round_to(s.max, 3),
        count: s.count,
    }
}

impl SessionReport {
    /// Collect everything reported for one scored recording. Channels with no
    /// samples are left out of the summaries.
    pub fn new(
        timeline: &RulaTimeline,
        series: &JointAngleSeries,
        config: &RulaConfig,
        source_kind: SourceKind,
        settings: BTreeMap<String, String>,
    ) -> Result<Self, ReportError> {
        let shares = band_percentages(timeline).map_err(|_| ReportError::EmptyTimeline)?;
        let mut counts = [0usize; 4];
        for f in &timeline.frames {
            counts[f.band as usize] += 1;
        }
        let bands = RiskBand::ALL
            .iter()
            .map(|&band| BandEntry {
                band,
                samples: counts[band as usize],
                percent: round_to(shares.get(band), 1),
            })
            .collect();
        let summaries = series
            .channel_names()
            .filter_map(|c| {
                channel_summary(series, c)
                    .ok()
                    .map(|s| (c, rounded_summary(s)))
            })
            .collect();
        Ok(Self {
            metadata: SessionMetadata {
                source_kind,
                sample_rate: round_to(timeline.sample_rate, 3),
                samples: timeline.len(),
                start_time: round_to(timeline.start_time, 3),
                duration: round_to(timeline.duration(), 3),
                config_checksum: config.checksum(),
                settings,
            },
            bands,
            band_row: shares.format_row(),
            degraded_frames: timeline.degraded_count(),
            summaries,
            final_scores: FinalScores {
                left: timeline.frames.iter().map(|f| f.left.final_score).collect(),
                right: timeline
                    .frames
                    .iter()
                    .map(|f| f.right.final_score)
                    .collect(),
                combined: timeline.frames.iter().map(|f| f.combined).collect(),
            },
        })
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Render a session report. The delimited form is a `field,value` listing
/// of the scalar content; per-sample scores go to [`score_series_csv`].
pub fn emit_session_report(report: &SessionReport, format: Format) -> String {
    match format {
        Format::Structured => to_json(report),
        Format::Delimited => {
            let m = &report.metadata;
            let mut out = String::from("field,value\n");
            let mut row = |k: &str, v: &str| {
                out.push_str(k);
                out.push(',');
                out.push_str(v);
                out.push('\n');
            };
            row("source_kind", m.source_kind.as_str());
            row("sample_rate", &fmt_stat(m.sample_rate));
            row("samples", &m.samples.to_string());
            row("start_time", &fmt_stat(m.start_time));
            row("duration", &fmt_stat(m.duration));
            row("config_checksum", &m.config_checksum);
            for (k, v) in &m.settings {
                row(&format!("setting.{k}"), v);
            }
            row("degraded_frames", &report.degraded_frames.to_string());
            for b in &report.bands {
                row(&format!("band.{}.samples", b.band), &b.samples.to_string());
                row(
                    &format!("band.{}.percent", b.band),
                    &format_percent(b.percent),
                );
            }
            row("band_row", &report.band_row);
            for (c, s) in &report.summaries {
                row(&format!("summary.{c}.mean"), &fmt_stat(s.mean));
                row(&format!("summary.{c}.std_dev"), &fmt_stat(s.std_dev));
                row(&format!("summary.{c}.min"), &fmt_stat(s.min));
                row(&format!("summary.{c}.max"), &fmt_stat(s.max));
                row(&format!("summary.{c}.count"), &s.count.to_string());
            }
            out
        }
    }
}

/// `time,left,right,combined`, one row per sample.
pub fn score_series_csv(timeline: &RulaTimeline) -> Result<String, ReportError> {
    if timeline.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let mut out = String::from("time,left,right,combined\n");
    for (i, f) in timeline.frames.iter().enumerate() {
        writeln!(
            out,
            "{:.6},{},{},{}",
            round_to(timeline.timestamp(i), 6),
            f.left.final_score,
            f.right.final_score,
            f.combined
        )
        .unwrap();
    }
    Ok(out)
}

/// `band,samples,percent` for a pie chart.
pub fn band_share_csv(timeline: &RulaTimeline) -> Result<String, ReportError> {
    let shares: BandShares = band_percentages(timeline).map_err(|_| ReportError::EmptyInput)?;
    let mut counts = [0usize; 4];
    for f in &timeline.frames {
        counts[f.band as usize] += 1;
    }
    let mut out = String::from("band,samples,percent\n");
    for band in RiskBand::ALL {
        writeln!(
            out,
            "{band},{},{:.1}",
            counts[band as usize],
            round_to(shares.get(band), 1)
        )
        .unwrap();
    }
    Ok(out)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_stat)
}

/// `channel,rmse,correlation,flag` from the run means, for bar charts.
pub fn comparison_bars_csv(summary: &RunSummary) -> Result<String, ReportError> {
    if summary.rows.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let mut by_channel: BTreeMap<JointChannel, [Option<&crate::sync::SummaryRow>; 2]> =
        BTreeMap::new();
    for r in &summary.rows {
        by_channel.entry(r.channel).or_default()[(r.metric == Metric::Correlation) as usize] =
            Some(r);
    }
    let mut out = String::from("channel,rmse,correlation,flag\n");
    for (c, [rmse, corr]) in by_channel {
        let flag = corr
            .and_then(|r| r.flag)
            .or(rmse.and_then(|r| r.flag))
            .map_or("", |f| f.as_str());
        writeln!(
            out,
            "{c},{},{},{flag}",
            cell(rmse.and_then(|r| r.mean)),
            cell(corr.and_then(|r| r.mean))
        )
        .unwrap();
    }
    Ok(out)
}

#[derive(Serialize)]
struct StructuredComparison<'a> {
    runs: usize,
    lags: &'a [i64],
    sample_rates: &'a [f64],
    rows: Vec<StructuredRow>,
}

#[derive(Serialize)]
struct StructuredRow {
    metric: Metric,
    channel: JointChannel,
    flag: Option<&'static str>,
    values: Vec<Option<f64>>,
    mean: Option<f64>,
}

/// Channels as rows, runs as `Record 1..N` columns, `MEAN` last. Missing
/// values print as `NA`.
pub fn emit_comparison_report(summary: &RunSummary, format: Format) -> String {
    let r3 = |v: Option<f64>| v.map(|x| round_to(x, 3));
    match format {
        Format::Structured => to_json(&StructuredComparison {
            runs: summary.runs,
            lags: &summary.lags,
            sample_rates: &summary.sample_rates,
            rows: summary
                .rows
                .iter()
                .map(|r| StructuredRow {
                    metric: r.metric,
                    channel: r.channel,
                    flag: r.flag.map(|f| f.as_str()),
                    values: r.values.iter().map(|&v| r3(v)).collect(),
                    mean: r3(r.mean),
                })
                .collect(),
        }),
        Format::Delimited => {
            let mut out = String::from("metric,channel,flag");
            for i in 1..=summary.runs {
                write!(out, ",Record {i}").unwrap();
            }
            out.push_str(",MEAN\n");
            for r in &summary.rows {
                write!(
                    out,
                    "{},{},{}",
                    r.metric.as_str(),
                    r.channel,
                    r.flag.map_or("", |f| f.as_str())
                )
                .unwrap();
                for &v in &r.values {
                    write!(out, ",{}", cell(v)).unwrap();
                }
                writeln!(out, ",{}", cell(r.mean)).unwrap();
            }
            out
        }
    }
}

/// Structured dump of a single pairwise comparison.
pub fn emit_pairwise(report: &ComparisonReport) -> String {
    to_json(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TaskFactors;
    use crate::rula::{score_frame, MissingPolicy, RulaFrameScore};
    use crate::sync::{summarize_runs, ChannelComparison};

    fn neutral_frame() -> RulaFrameScore {
        let angles = JointChannel::ALL.iter().map(|&c| (c, 0.0)).collect();
        score_frame(
            &angles,
            TaskFactors::default(),
            &RulaConfig::default(),
            MissingPolicy::Strict,
        )
        .unwrap()
    }

    fn timeline(finals: &[u8]) -> RulaTimeline {
        let c = RulaConfig::default();
        let base = neutral_frame();
        RulaTimeline {
            start_time: 0.0,
            sample_rate: 30.0,
            frames: finals
                .iter()
                .map(|&f| RulaFrameScore {
                    combined: f,
                    band: c.risk_band(f),
                    ..base
                })
                .collect(),
        }
    }

    fn series(n: usize) -> JointAngleSeries {
        JointAngleSeries::from_dense(
            30.0,
            0.0,
            [(JointChannel::ElbowFlexR, (0..n).map(|i| i as f64).collect())],
        )
        .unwrap()
    }

    #[test]
    fn neutral_session_is_all_negligible() {
        let tl = timeline(&[1; 10]);
        let r = SessionReport::new(
            &tl,
            &series(10),
            &RulaConfig::default(),
            SourceKind::Imu,
            BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(r.band_row, "100.0 % / 0.0 % / 0.0 % / 0.0 %");
        assert_eq!(r.metadata.duration, 0.3);
        let text = emit_session_report(&r, Format::Delimited);
        assert!(text.contains("band.negligible.percent,100.0 %\n"));
        assert!(text.contains("summary.elbow_flex_r.mean,4.500\n"));
    }

    #[test]
    fn band_row_fixture() {
        let tl = timeline(&[3, 3, 5, 7]);
        let r = SessionReport::new(
            &tl,
            &series(4),
            &RulaConfig::default(),
            SourceKind::Video,
            BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(r.band_row, "0.0 % / 50.0 % / 25.0 % / 25.0 %");
    }

    #[test]
    fn emission_is_deterministic() {
        let tl = timeline(&[3, 3, 5, 7, 2]);
        let settings = BTreeMap::from([("strict".to_string(), "false".to_string())]);
        let mk = || {
            SessionReport::new(
                &tl,
                &series(5),
                &RulaConfig::default(),
                SourceKind::Imu,
                settings.clone(),
            )
            .unwrap()
        };
        for f in [Format::Structured, Format::Delimited] {
            assert_eq!(emit_session_report(&mk(), f), emit_session_report(&mk(), f));
        }
    }

    #[test]
    fn structured_and_delimited_agree() {
        let tl = timeline(&[3, 3, 5, 7, 2, 1]);
        let r = SessionReport::new(
            &tl,
            &series(6),
            &RulaConfig::default(),
            SourceKind::Imu,
            BTreeMap::new(),
        )
        .unwrap();
        let json: serde_json::Value =
            serde_json::from_str(&emit_session_report(&r, Format::Structured)).unwrap();
        let csv = emit_session_report(&r, Format::Delimited);
        let field = |k: &str| {
            csv.lines()
                .find_map(|l| l.strip_prefix(&format!("{k},")))
                .unwrap()
                .to_string()
        };
        let std = json["summaries"]["elbow_flex_r"]["std_dev"]
            .as_f64()
            .unwrap();
        assert_eq!(
            field("summary.elbow_flex_r.std_dev")
                .parse::<f64>()
                .unwrap(),
            std
        );
        let low = json["bands"][1]["percent"].as_f64().unwrap();
        assert_eq!(
            field("band.low.percent")
                .trim_end_matches(" %")
                .parse::<f64>()
                .unwrap(),
            low
        );
    }

    #[test]
    fn plot_series_shapes() {
        let tl = timeline(&[1, 3, 5]);
        let scores = score_series_csv(&tl).unwrap();
        let lines: Vec<_> = scores.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "time,left,right,combined");
        assert_eq!(lines[2], "0.033333,1,1,3");
        let bands = band_share_csv(&tl).unwrap();
        assert!(bands.contains("medium,1,33.3\n"));
        assert_eq!(
            score_series_csv(&timeline(&[])),
            Err(ReportError::EmptyInput)
        );
    }

    fn comparison(rmse: f64, corr: Option<f64>) -> ComparisonReport {
        ComparisonReport {
            reference: JointChannel::ArmFlexR,
            sample_rate: 30.0,
            lag: 0,
            overlap: 900,
            channels: BTreeMap::from([
                (
                    JointChannel::LumbarFlexion,
                    ChannelComparison {
                        rmse: Some(rmse),
                        correlation: corr,
                        valid_fraction: 1.0,
                        unavailable: None,
                        low_quality: corr.is_some_and(|c| c < 0.3),
                    },
                ),
                (
                    JointChannel::WristFlexR,
                    ChannelComparison {
                        rmse: Some(9.0),
                        correlation: Some(0.1),
                        valid_fraction: 1.0,
                        unavailable: None,
                        low_quality: true,
                    },
                ),
            ]),
        }
    }

    #[test]
    fn comparison_table_layout() {
        let s = summarize_runs(&[
            comparison(6.872, Some(0.9)),
            comparison(5.483, Some(0.8)),
            comparison(5.529, None),
        ])
        .unwrap();
        let text = emit_comparison_report(&s, Format::Delimited);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[0],
            "metric,channel,flag,Record 1,Record 2,Record 3,MEAN"
        );
        assert!(lines.contains(&"rmse,lumbar_flexion,,6.872,5.483,5.529,5.961"));
        assert!(lines.contains(&"correlation,lumbar_flexion,unavailable,0.900,0.800,NA,0.850"));
        assert!(lines.contains(&"correlation,wrist_flex_r,low_correlation,0.100,0.100,0.100,0.100"));
        let bars = comparison_bars_csv(&s).unwrap();
        assert!(bars.contains("lumbar_flexion,5.961,0.850,unavailable\n"));
    }

    #[test]
    fn self_comparison_rows_are_zero() {
        let s = summarize_runs(&[comparison(0.0, Some(1.0))]).unwrap();
        let text = emit_comparison_report(&s, Format::Delimited);
        assert!(text.contains("rmse,lumbar_flexion,,0.000,0.000\n"));
        let bars = comparison_bars_csv(&s).unwrap();
        assert!(bars.contains("lumbar_flexion,0.000,1.000,\n"));
    }
}
