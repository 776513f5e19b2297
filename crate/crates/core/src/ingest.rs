//! Readers and writers for the three input formats, plus uniform-grid resampling.
//!
//! * IMU joint-angle CSV: header row, one row per sample, one column per
//!   channel. Column names default to the channel labels (`arm_flex_r`, ...).
//! * Keypoint stream: JSON Lines, one frame per line:
//!   `{"frame": 0, "t": 0.0, "keypoints": {"nose": [x, y, z], ...}, "confidence": {"nose": 0.9}}`.
//!   `frame`, `t` and `confidence` are optional.
//! * Annotations: `t0,t1,arm_muscle,arm_force,neck_muscle,neck_force,legs`,
//!   optional header row, `#` comments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Deserialize;
use thiserror::Error;

use crate::geometry::AngleDefinitions;
use crate::model::{
    AnnotationInterval, AnnotationTrack, JointAngleSeries, JointChannel, KeypointFrame, Landmark,
    ModelError, TaskFactors, Vec3,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("input is empty")]
    EmptyFile,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("mapped column `{0}` not found in header")]
    MissingColumn(String),
    #[error("channel {0} is mapped from more than one column")]
    DuplicateChannel(JointChannel),
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: u64, reason: String },
    #[error("line {line}: timestamp {t} precedes previous timestamp {prev}")]
    NonMonotonicTimestamps { line: u64, prev: f64, t: f64 },
    #[error("line {line}: {field} = {value} is outside 0..=3")]
    InvalidForceValue {
        line: u64,
        field: &'static str,
        value: i64,
    },
    #[error("line {line}: {field} = {value} is out of range")]
    InvalidFactorValue {
        line: u64,
        field: &'static str,
        value: i64,
    },
    #[error("line {line}: interval [{t0}, {t1}) is inverted")]
    InvertedInterval { line: u64, t0: f64, t1: f64 },
    #[error("intervals [{0}, {1}) and [{2}, {3}) overlap")]
    OverlappingIntervals(f64, f64, f64, f64),
    #[error("series needs at least 2 samples to resample, got {0}")]
    TooShort(usize),
    #[error("invalid rate {0}")]
    InvalidRate(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Layout of an IMU joint-angle CSV export.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuCsvSpec {
    pub delimiter: u8,
    /// Used for the start time when present in the header; otherwise time
    /// starts at zero and advances at `declared_rate`.
    pub time_column: Option<String>,
    /// Header name to channel. `None` picks up every column whose header is
    /// a channel label.
    pub channel_columns: Option<BTreeMap<String, JointChannel>>,
    pub declared_rate: f64,
}

impl Default for ImuCsvSpec {
    fn default() -> Self {
        Self {
            delimiter: b',',
            time_column: Some("time".to_string()),
            channel_columns: None,
            declared_rate: 100.0,
        }
    }
}

impl ImuCsvSpec {
    pub fn with_rate(declared_rate: f64) -> Self {
        Self {
            declared_rate,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImuParse {
    pub series: JointAngleSeries,
    /// Cells that were empty or not a finite number; each became a missing sample.
    pub warnings: usize,
}

fn csv_line(err: &csv::Error) -> u64 {
    err.position().map_or(0, |p| p.line())
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn parse_imu_joint_csv(bytes: &[u8], spec: &ImuCsvSpec) -> Result<ImuParse, IngestError> {
    if !(spec.declared_rate.is_finite() && spec.declared_rate > 0.0) {
        return Err(IngestError::InvalidRate(spec.declared_rate));
    }
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(IngestError::EmptyFile);
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(spec.delimiter)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| IngestError::MalformedHeader(e.to_string()))?
        .clone();
    let mut seen = BTreeSet::new();
    for name in header.iter() {
        if name.is_empty() {
            return Err(IngestError::MalformedHeader("empty column name".into()));
        }
        if !seen.insert(name) {
            return Err(IngestError::MalformedHeader(format!(
                "duplicate column `{name}`"
            )));
        }
    }
    let column_of = |name: &str| header.iter().position(|h| h == name);

    let mapping: Vec<(usize, JointChannel)> = match &spec.channel_columns {
        Some(map) => {
            let mut used = BTreeSet::new();
            let mut out = Vec::with_capacity(map.len());
            for (name, &channel) in map {
                if !used.insert(channel) {
                    return Err(IngestError::DuplicateChannel(channel));
                }
                let idx =
                    column_of(name).ok_or_else(|| IngestError::MissingColumn(name.clone()))?;
                out.push((idx, channel));
            }
            out
        }
        None => header
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.parse::<JointChannel>().ok().map(|c| (i, c)))
            .collect(),
    };
    if mapping.is_empty() {
        return Err(IngestError::MalformedHeader(
            "no joint-angle columns".into(),
        ));
    }
    let time_idx = spec.time_column.as_deref().and_then(column_of);

    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); mapping.len()];
    let mut start_time = None;
    let mut warnings = 0;
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::MalformedRecord {
            line: csv_line(&e),
            reason: e.to_string(),
        })?;
        if start_time.is_none() {
            start_time = Some(match time_idx {
                Some(i) => parse_cell(&record[i]).ok_or_else(|| IngestError::MalformedRecord {
                    line: record.position().map_or(0, |p| p.line()),
                    reason: format!("unreadable time `{}`", &record[i]),
                })?,
                None => 0.0,
            });
        }
        for (col, &(idx, _)) in columns.iter_mut().zip(&mapping) {
            let value = parse_cell(&record[idx]);
            warnings += usize::from(value.is_none());
            col.push(value);
        }
    }
    let Some(start_time) = start_time else {
        return Err(IngestError::EmptyFile);
    };
    let channels = mapping.iter().map(|&(_, c)| c).zip(columns).collect();
    let series = JointAngleSeries::new(spec.declared_rate, start_time, channels)?;
    Ok(ImuParse { series, warnings })
}

/// Render a series in the default IMU layout: `time` then one column per
/// channel. Missing samples are empty cells. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_imu_csv(series: &JointAngleSeries) -> String {
    let mut out = String::from("time");
    let channels: Vec<_> = series.channels().collect();
    for (c, _) in &channels {
        out.push(',');
        out.push_str(c.as_str());
    }
    out.push('\n');
    for i in 0..series.len() {
        write!(out, "{}", series.timestamp(i)).unwrap();
        for (_, samples) in &channels {
            out.push(',');
            if let Some(v) = samples[i] {
                write!(out, "{v}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

/// How to read a keypoint stream.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointStreamSpec {
    /// Used to synthesize timestamps for records without `t`.
    pub frame_rate: f64,
    /// Tracker label to landmark. Labels not in the map are ignored.
    pub labels: BTreeMap<String, Landmark>,
    /// Landmarks whose absence flags a frame incomplete.
    pub required: BTreeSet<Landmark>,
}

impl Default for KeypointStreamSpec {
    fn default() -> Self {
        Self {
            frame_rate: 30.0,
            labels: Landmark::ALL
                .iter()
                .map(|l| (l.as_str().to_string(), *l))
                .collect(),
            required: AngleDefinitions::default().required_landmarks(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeypointRecord {
    frame: Option<u64>,
    t: Option<f64>,
    keypoints: BTreeMap<String, [f64; 3]>,
    #[serde(default)]
    confidence: Option<BTreeMap<String, f64>>,
}

pub fn parse_keypoint_stream(
    bytes: &[u8],
    spec: &KeypointStreamSpec,
) -> Result<Vec<KeypointFrame>, IngestError> {
    if !(spec.frame_rate.is_finite() && spec.frame_rate > 0.0) {
        return Err(IngestError::InvalidRate(spec.frame_rate));
    }
    let text = std::str::from_utf8(bytes).map_err(|e| IngestError::MalformedRecord {
        line: 0,
        reason: e.to_string(),
    })?;
    let mut frames: Vec<KeypointFrame> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n as u64 + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let malformed = |reason: String| IngestError::MalformedRecord { line, reason };
        let rec: KeypointRecord =
            serde_json::from_str(raw).map_err(|e| malformed(e.to_string()))?;
        let index = rec.frame.unwrap_or(frames.len() as u64);
        let t = rec.t.unwrap_or(index as f64 / spec.frame_rate);
        if !(t.is_finite() && t >= 0.0) {
            return Err(malformed(format!("invalid timestamp {t}")));
        }
        if let Some(prev) = frames.last().map(|f| f.timestamp) {
            if t < prev {
                return Err(IngestError::NonMonotonicTimestamps { line, prev, t });
            }
        }
        let mut positions = BTreeMap::new();
        for (label, [x, y, z]) in rec.keypoints {
            let Some(&landmark) = spec.labels.get(&label) else {
                continue;
            };
            let p = Vec3::new(x, y, z);
            if !p.is_finite() {
                return Err(malformed(format!("non-finite coordinate for `{label}`")));
            }
            positions.insert(landmark, p);
        }
        let confidence = rec.confidence.map(|conf| {
            conf.into_iter()
                .filter_map(|(label, c)| spec.labels.get(&label).map(|&l| (l, c.clamp(0.0, 1.0))))
                .collect()
        });
        let mut frame = KeypointFrame::new(index, t, positions);
        frame.confidence = confidence;
        frame.flag_missing(&spec.required);
        frames.push(frame);
    }
    Ok(frames)
}

/// One JSON record per frame, readable by [`parse_keypoint_stream`].
pub fn write_keypoint_stream(frames: &[KeypointFrame]) -> String {
    let mut out = String::new();
    for f in frames {
        let keypoints: BTreeMap<&str, [f64; 3]> = f
            .positions
            .iter()
            .map(|(l, p)| (l.as_str(), [p.x, p.y, p.z]))
            .collect();
        let mut rec =
            serde_json::json!({ "frame": f.index, "t": f.timestamp, "keypoints": keypoints });
        if let Some(conf) = &f.confidence {
            let conf: BTreeMap<&str, f64> = conf.iter().map(|(l, c)| (l.as_str(), *c)).collect();
            rec["confidence"] = serde_json::json!(conf);
        }
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    out
}

const ANNOTATION_FIELDS: [&str; 7] = [
    "t0",
    "t1",
    "arm_muscle",
    "arm_force",
    "neck_muscle",
    "neck_force",
    "legs",
];

pub fn parse_annotations(bytes: &[u8]) -> Result<AnnotationTrack, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes);
    let mut intervals = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IngestError::MalformedRecord {
            line: csv_line(&e),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let malformed = |reason: String| IngestError::MalformedRecord { line, reason };
        if record.iter().all(str::is_empty) {
            continue;
        }
        if n == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if record.len() != ANNOTATION_FIELDS.len() {
            return Err(malformed(format!(
                "expected {} fields, found {}",
                ANNOTATION_FIELDS.len(),
                record.len()
            )));
        }
        let time = |i: usize| {
            record[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    malformed(format!(
                        "{} `{}` is not a number",
                        ANNOTATION_FIELDS[i], &record[i]
                    ))
                })
        };
        let int = |i: usize| {
            record[i].parse::<i64>().map_err(|_| {
                malformed(format!(
                    "{} `{}` is not an integer",
                    ANNOTATION_FIELDS[i], &record[i]
                ))
            })
        };
        let (t0, t1) = (time(0)?, time(1)?);
        if t0 >= t1 {
            return Err(IngestError::InvertedInterval { line, t0, t1 });
        }
        let mut values = [0u8; 5];
        for (k, slot) in values.iter_mut().enumerate() {
            let i = k + 2;
            let field = ANNOTATION_FIELDS[i];
            let v = int(i)?;
            let (range, is_force) = match field {
                "arm_force" | "neck_force" => (0..=3, true),
                "legs" => (1..=2, false),
                _ => (0..=1, false),
            };
            if !range.contains(&v) {
                return Err(if is_force {
                    IngestError::InvalidForceValue {
                        line,
                        field,
                        value: v,
                    }
                } else {
                    IngestError::InvalidFactorValue {
                        line,
                        field,
                        value: v,
                    }
                });
            }
            *slot = v as u8;
        }
        let [arm_muscle, arm_force, neck_muscle, neck_force, legs] = values;
        intervals.push(AnnotationInterval {
            t0,
            t1,
            factors: TaskFactors {
                arm_muscle,
                arm_force,
                neck_muscle,
                neck_force,
                legs,
            },
        });
    }
    AnnotationTrack::new(intervals).map_err(|e| match e {
        ModelError::OverlappingIntervals(a, b, c, d) => {
            IngestError::OverlappingIntervals(a, b, c, d)
        }
        other => IngestError::Model(other),
    })
}

pub fn write_annotations(track: &AnnotationTrack) -> String {
    let mut out = ANNOTATION_FIELDS.join(",");
    out.push('\n');
    for iv in track.intervals() {
        let f = iv.factors;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            iv.t0, iv.t1, f.arm_muscle, f.arm_force, f.neck_muscle, f.neck_force, f.legs
        )
        .unwrap();
    }
    out
}

/// Linear interpolation onto a uniform grid at `target_rate` spanning the
/// original recording. Output length is `floor(duration * target_rate) + 1`.
/// An output sample is missing when either input sample it interpolates
/// between is missing.
pub fn resample(
    series: &JointAngleSeries,
    target_rate: f64,
) -> Result<JointAngleSeries, IngestError> {
    if !(target_rate.is_finite() && target_rate > 0.0) {
        return Err(IngestError::InvalidRate(target_rate));
    }
    let n = series.len();
    if n < 2 {
        return Err(IngestError::TooShort(n));
    }
    let ratio = series.sample_rate() / target_rate;
    // tolerance absorbs rounding in (n-1)/rate*rate
    let out_len = ((n - 1) as f64 / ratio + 1e-9).floor() as usize + 1;
    let stencil: Vec<(usize, f64)> = (0..out_len)
        .map(|k| {
            let pos = k as f64 * ratio;
            let i = (pos.floor() as usize).min(n - 1);
            (i, (pos - i as f64).max(0.0))
        })
        .collect();
    let channels = series
        .channels()
        .map(|(channel, samples)| {
            let out = stencil
                .iter()
                .map(|&(i, frac)| {
                    if frac == 0.0 || i + 1 >= n {
                        samples[i]
                    } else {
                        let (a, b) = (samples[i]?, samples[i + 1]?);
                        Some(a + (b - a) * frac)
                    }
                })
                .collect();
            (channel, out)
        })
        .collect();
    Ok(JointAngleSeries::new(
        target_rate,
        series.start_time(),
        channels,
    )?)
}
