//! Alignment and agreement statistics between two recordings of the same task.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{JointAngleSeries, JointChannel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no sample pair has both values present")]
    NoValidPairs,
    #[error("a series has zero variance over the valid pairs")]
    ZeroVariance,
    #[error("no lag within +/-{max_lag} samples leaves {required} overlapping samples")]
    InsufficientOverlap { max_lag: usize, required: usize },
    #[error("reference channel {0} is missing from {1}")]
    ReferenceChannelMissing(JointChannel, Recording),
    #[error("sample rates differ: {0} Hz vs {1} Hz; resample first")]
    RateMismatch(f64, f64),
    #[error("no reports to summarize")]
    NoRuns,
    #[error("run {run} has channels {found:?}, expected {expected:?}")]
    ChannelSetMismatch {
        run: usize,
        expected: Vec<JointChannel>,
        found: Vec<JointChannel>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recording {
    A,
    B,
}

impl fmt::Display for Recording {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Recording::A => "recording A",
            Recording::B => "recording B",
        })
    }
}

fn pairs<'a>(a: &'a [Option<f64>], b: &'a [Option<f64>]) -> impl Iterator<Item = (f64, f64)> + 'a {
    a.iter().zip(b).filter_map(|(x, y)| Some(((*x)?, (*y)?)))
}

/// Root mean square difference over the pairs where both values are present.
pub fn rmse(a: &[Option<f64>], b: &[Option<f64>]) -> Result<f64, SyncError> {
    if a.len() != b.len() {
        return Err(SyncError::LengthMismatch(a.len(), b.len()));
    }
    let (n, sum) = pairs(a, b).fold((0usize, 0.0), |(n, s), (x, y)| {
        (n + 1, s + (x - y) * (x - y))
    });
    if n == 0 {
        return Err(SyncError::NoValidPairs);
    }
    Ok((sum / n as f64).sqrt())
}

/// Pearson correlation over the pairs where both values are present.
pub fn pearson_correlation(a: &[Option<f64>], b: &[Option<f64>]) -> Result<f64, SyncError> {
    if a.len() != b.len() {
        return Err(SyncError::LengthMismatch(a.len(), b.len()));
    }
    let valid: Vec<(f64, f64)> = pairs(a, b).collect();
    if valid.is_empty() {
        return Err(SyncError::NoValidPairs);
    }
    let constant = |f: fn(&(f64, f64)) -> f64| {
        let (lo, hi) = valid
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        lo == hi
    };
    if valid.len() < 2 || constant(|p| p.0) || constant(|p| p.1) {
        return Err(SyncError::ZeroVariance);
    }
    let n = valid.len() as f64;
    let (mx, my) = valid
        .iter()
        .fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x, sy + y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &valid {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(SyncError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// Positive when `other` lags behind `reference`: `other[i + lag]` pairs
    /// with `reference[i]`.
    pub lag: i64,
    pub overlap: usize,
    pub rmse: f64,
}

/// Index ranges of `reference` and `other` that overlap at `lag`.
fn overlap_at(n_ref: usize, n_other: usize, lag: i64) -> Option<(usize, usize, usize)> {
    let start_ref = (-lag).max(0);
    let end_ref = (n_ref as i64).min(n_other as i64 - lag);
    (end_ref > start_ref).then(|| {
        let s = start_ref as usize;
        (s, (s as i64 + lag) as usize, (end_ref - start_ref) as usize)
    })
}

/// The two overlapping windows at `lag`, empty when they do not overlap.
pub fn aligned<'a>(
    reference: &'a [Option<f64>],
    other: &'a [Option<f64>],
    lag: i64,
) -> (&'a [Option<f64>], &'a [Option<f64>]) {
    match overlap_at(reference.len(), other.len(), lag) {
        Some((r, o, n)) => (&reference[r..r + n], &other[o..o + n]),
        None => (&[], &[]),
    }
}

/// Candidate lags in search order: 0, -1, 1, -2, 2, ...
fn lag_order(max_lag: usize) -> impl Iterator<Item = i64> {
    std::iter::once(0).chain((1..=max_lag as i64).flat_map(|k| [-k, k]))
}

/// Integer lag in `[-max_lag, max_lag]` minimizing the RMSE on the overlap.
/// Lags whose overlap is shorter than `min_overlap` are not considered.
/// Ties go to the smaller |lag|, then to the negative lag.
pub fn align_min_rmse(
    reference: &[Option<f64>],
    other: &[Option<f64>],
    max_lag: usize,
    min_overlap: usize,
) -> Result<AlignmentResult, SyncError> {
    let mut best: Option<AlignmentResult> = None;
    for lag in lag_order(max_lag) {
        let (r, o) = aligned(reference, other, lag);
        if r.is_empty() || r.len() < min_overlap {
            continue;
        }
        let Ok(e) = rmse(r, o) else { continue };
        if best.is_none_or(|b| e < b.rmse) {
            best = Some(AlignmentResult {
                lag,
                overlap: r.len(),
                rmse: e,
            });
        }
    }
    best.ok_or(SyncError::InsufficientOverlap {
        max_lag,
        required: min_overlap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    /// Pearson at the global alignment lag.
    #[default]
    ZeroLag,
    /// Largest Pearson over per-channel lags within the search window.
    PeakCrossCorrelation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub reference: JointChannel,
    pub max_lag_seconds: f64,
    pub min_overlap_seconds: f64,
    /// Channels with fewer valid pairs than this fraction of the overlap are unavailable.
    pub min_valid_fraction: f64,
    /// Correlations below this are flagged as low quality.
    pub quality_threshold: f64,
    pub correlation_mode: CorrelationMode,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            reference: JointChannel::ArmFlexR,
            max_lag_seconds: 10.0,
            min_overlap_seconds: 5.0,
            min_valid_fraction: 0.5,
            quality_threshold: 0.3,
            correlation_mode: CorrelationMode::ZeroLag,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Unavailable {
    MissingChannel { recording: Recording },
    InsufficientValid { fraction: f64 },
    ZeroVariance,
}

impl fmt::Display for Unavailable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unavailable::MissingChannel { recording } => write!(f, "missing from {recording}"),
            Unavailable::InsufficientValid { fraction } => {
                write!(f, "only {:.1} % valid pairs", fraction * 100.0)
            }
            Unavailable::ZeroVariance => f.write_str("constant signal"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelComparison {
    pub rmse: Option<f64>,
    pub correlation: Option<f64>,
    /// Valid pairs over overlap length.
    pub valid_fraction: f64,
    pub unavailable: Option<Unavailable>,
    /// Correlation below the quality threshold.
    pub low_quality: bool,
}

impl ChannelComparison {
    fn missing(recording: Recording) -> Self {
        Self {
            rmse: None,
            correlation: None,
            valid_fraction: 0.0,
            unavailable: Some(Unavailable::MissingChannel { recording }),
            low_quality: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub reference: JointChannel,
    pub sample_rate: f64,
    pub lag: i64,
    pub overlap: usize,
    pub channels: BTreeMap<JointChannel, ChannelComparison>,
}

impl ComparisonReport {
    pub fn lag_seconds(&self) -> f64 {
        self.lag as f64 / self.sample_rate
    }
}

fn peak_correlation(
    a: &[Option<f64>],
    b: &[Option<f64>],
    max_lag: usize,
) -> Result<f64, SyncError> {
    let mut best: Result<f64, SyncError> = Err(SyncError::ZeroVariance);
    for lag in lag_order(max_lag) {
        let (r, o) = aligned(a, b, lag);
        if let Ok(c) = pearson_correlation(r, o) {
            if best.as_ref().map_or(true, |&b| c > b) {
                best = Ok(c);
            }
        }
    }
    best
}

/// Align `b` to `a` on the reference channel, then compute per-channel
/// agreement at that one lag. Every channel present in either recording
/// gets an entry.
pub fn compare_recordings(
    a: &JointAngleSeries,
    b: &JointAngleSeries,
    opts: &CompareOptions,
) -> Result<ComparisonReport, SyncError> {
    if a.sample_rate() != b.sample_rate() {
        return Err(SyncError::RateMismatch(a.sample_rate(), b.sample_rate()));
    }
    let rate = a.sample_rate();
    let ref_a = a
        .channel(opts.reference)
        .ok_or(SyncError::ReferenceChannelMissing(
            opts.reference,
            Recording::A,
        ))?;
    let ref_b = b
        .channel(opts.reference)
        .ok_or(SyncError::ReferenceChannelMissing(
            opts.reference,
            Recording::B,
        ))?;
    let max_lag = (opts.max_lag_seconds * rate).round().max(0.0) as usize;
    let min_overlap = (opts.min_overlap_seconds * rate).ceil().max(1.0) as usize;
    let alignment = align_min_rmse(ref_a, ref_b, max_lag, min_overlap)?;

    let names: BTreeSet<JointChannel> = a.channel_names().chain(b.channel_names()).collect();
    let mut channels = BTreeMap::new();
    for channel in names {
        let entry = match (a.channel(channel), b.channel(channel)) {
            (None, _) => ChannelComparison::missing(Recording::A),
            (_, None) => ChannelComparison::missing(Recording::B),
            (Some(xa), Some(xb)) => {
                let (r, o) = aligned(xa, xb, alignment.lag);
                let valid = pairs(r, o).count();
                let valid_fraction = if r.is_empty() {
                    0.0
                } else {
                    valid as f64 / r.len() as f64
                };
                if valid == 0 || valid_fraction < opts.min_valid_fraction {
                    ChannelComparison {
                        rmse: None,
                        correlation: None,
                        valid_fraction,
                        unavailable: Some(Unavailable::InsufficientValid {
                            fraction: valid_fraction,
                        }),
                        low_quality: false,
                    }
                } else {
                    let rmse = rmse(r, o)?;
                    let correlation = match opts.correlation_mode {
                        CorrelationMode::ZeroLag => pearson_correlation(r, o),
                        CorrelationMode::PeakCrossCorrelation => peak_correlation(xa, xb, max_lag),
                    }
                    .ok();
                    ChannelComparison {
                        rmse: Some(rmse),
                        correlation,
                        valid_fraction,
                        unavailable: correlation.is_none().then_some(Unavailable::ZeroVariance),
                        low_quality: correlation.is_some_and(|c| c < opts.quality_threshold),
                    }
                }
            }
        };
        channels.insert(channel, entry);
    }
    Ok(ComparisonReport {
        reference: opts.reference,
        sample_rate: rate,
        lag: alignment.lag,
        overlap: alignment.overlap,
        channels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rmse,
    Correlation,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Correlation => "correlation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowFlag {
    LowCorrelation,
    Unavailable,
}

impl RowFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            RowFlag::LowCorrelation => "low_correlation",
            RowFlag::Unavailable => "unavailable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: Metric,
    pub channel: JointChannel,
    /// One value per run; `None` where the run had no value.
    pub values: Vec<Option<f64>>,
    /// Mean over the runs that have a value.
    pub mean: Option<f64>,
    pub flag: Option<RowFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub runs: usize,
    pub lags: Vec<i64>,
    pub sample_rates: Vec<f64>,
    pub rows: Vec<SummaryRow>,
}

impl RunSummary {
    pub fn row(&self, metric: Metric, channel: JointChannel) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.channel == channel)
    }
}

fn mean(values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

/// Per-channel values of every run side by side with their mean, all RMSE
/// rows first, then all correlation rows.
pub fn summarize_runs(reports: &[ComparisonReport]) -> Result<RunSummary, SyncError> {
    let first = reports.first().ok_or(SyncError::NoRuns)?;
    let expected: Vec<JointChannel> = first.channels.keys().copied().collect();
    for (i, r) in reports.iter().enumerate().skip(1) {
        let found: Vec<JointChannel> = r.channels.keys().copied().collect();
        if found != expected {
            return Err(SyncError::ChannelSetMismatch {
                run: i + 1,
                expected,
                found,
            });
        }
    }
    let mut rows = Vec::new();
    for metric in [Metric::Rmse, Metric::Correlation] {
        for &channel in &expected {
            let cells: Vec<&ChannelComparison> =
                reports.iter().map(|r| &r.channels[&channel]).collect();
            let values: Vec<Option<f64>> = cells
                .iter()
                .map(|c| match metric {
                    Metric::Rmse => c.rmse,
                    Metric::Correlation => c.correlation,
                })
                .collect();
            let flag = if values.iter().any(Option::is_none) {
                Some(RowFlag::Unavailable)
            } else if metric == Metric::Correlation && cells.iter().any(|c| c.low_quality) {
                Some(RowFlag::LowCorrelation)
            } else {
                None
            };
            rows.push(SummaryRow {
                metric,
                channel,
                mean: mean(&values),
                values,
                flag,
            });
        }
    }
    Ok(RunSummary {
        runs: reports.len(),
        lags: reports.iter().map(|r| r.lag).collect(),
        sample_rates: reports.iter().map(|r| r.sample_rate).collect(),
        rows,
    })
}
