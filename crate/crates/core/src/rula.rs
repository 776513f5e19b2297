//! Data-driven RULA scoring.
//!
//! A [`RulaConfig`] holds everything the method needs: per-joint angle ranges,
//! posture adjustments, the three lookup tables and the risk-band cut points.
//! The shipped default lives in `config/rula.toml`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{AnnotationTrack, JointAngleSeries, JointChannel, Side, TaskFactors};

const DEFAULT_CONFIG: &str = include_str!("../config/rula.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RulaError {
    #[error("unknown joint `{0}`")]
    UnknownJoint(String),
    #[error("table {table} index {index} outside 1..={max}")]
    OutOfRangeIndex {
        table: &'static str,
        index: u8,
        max: u8,
    },
    #[error("frame {frame}: required channel {channel} missing")]
    IncompleteFrame { frame: usize, channel: JointChannel },
    #[error("timeline is empty")]
    EmptyTimeline,
    #[error("config is not valid TOML: {0}")]
    Syntax(String),
    #[error("config has {} problem(s): {}", .0.len(), .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidConfig(Vec<ConfigIssue>),
}

/// One violated config invariant and where it is.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub location: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Body segments scored by the method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Joint {
    UpperArm,
    LowerArm,
    Wrist,
    WristTwist,
    Neck,
    Trunk,
}

impl Joint {
    pub const ALL: [Joint; 6] = [
        Joint::UpperArm,
        Joint::LowerArm,
        Joint::Wrist,
        Joint::WristTwist,
        Joint::Neck,
        Joint::Trunk,
    ];

    /// Largest score the lookup tables accept for this joint.
    pub fn max_score(self) -> u8 {
        match self {
            Joint::UpperArm | Joint::Neck | Joint::Trunk => 6,
            Joint::LowerArm => 3,
            Joint::Wrist => 4,
            Joint::WristTwist => 2,
        }
    }

    /// Arm joints are scored once per side; neck and trunk once per frame.
    pub fn is_sided(self) -> bool {
        !matches!(self, Joint::Neck | Joint::Trunk)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Joint::UpperArm => "upper_arm",
            Joint::LowerArm => "lower_arm",
            Joint::Wrist => "wrist",
            Joint::WristTwist => "wrist_twist",
            Joint::Neck => "neck",
            Joint::Trunk => "trunk",
        }
    }
}

impl fmt::Display for Joint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Joint {
    type Err = RulaError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Joint::ALL
            .into_iter()
            .find(|j| j.as_str() == s)
            .ok_or_else(|| RulaError::UnknownJoint(s.to_string()))
    }
}

/// A channel as named in the config: either a concrete channel or a
/// side-neutral base name such as `arm_flex`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelRef {
    Fixed(JointChannel),
    Sided {
        left: JointChannel,
        right: JointChannel,
    },
}

impl ChannelRef {
    pub fn parse(name: &str) -> Option<Self> {
        if let Ok(c) = name.parse() {
            return Some(ChannelRef::Fixed(c));
        }
        Some(ChannelRef::Sided {
            left: JointChannel::sided(name, Side::Left)?,
            right: JointChannel::sided(name, Side::Right)?,
        })
    }

    pub fn resolve(self, side: Side) -> JointChannel {
        match self {
            ChannelRef::Fixed(c) => c,
            ChannelRef::Sided { left, right } => match side {
                Side::Left => left,
                Side::Right => right,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreInterval {
    pub lo: f64,
    pub hi: f64,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeRuleFile {
    pub channel: String,
    pub intervals: Vec<ScoreInterval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Above,
    Below,
    Outside,
}

impl Trigger {
    pub fn fires(self, angle: f64, threshold: f64) -> bool {
        match self {
            Trigger::Above => angle > threshold,
            Trigger::Below => angle < threshold,
            Trigger::Outside => angle.abs() > threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionRuleFile {
    pub joint: String,
    pub channel: String,
    pub when: Trigger,
    pub threshold: f64,
    pub adjust: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableFile {
    pub rows: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandsFile {
    pub negligible: [i64; 2],
    pub low: [i64; 2],
    pub medium: [i64; 2],
    pub very_high: [i64; 2],
}

/// The config file as written, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulaConfigFile {
    pub range: BTreeMap<String, RangeRuleFile>,
    #[serde(default)]
    pub position: Vec<PositionRuleFile>,
    pub table_a: TableFile,
    pub table_b: TableFile,
    pub table_c: TableFile,
    pub bands: BandsFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskBand {
    Negligible,
    Low,
    Medium,
    VeryHigh,
}

impl RiskBand {
    pub const ALL: [RiskBand; 4] = [
        RiskBand::Negligible,
        RiskBand::Low,
        RiskBand::Medium,
        RiskBand::VeryHigh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RiskBand::Negligible => "negligible",
            RiskBand::Low => "low",
            RiskBand::Medium => "medium",
            RiskBand::VeryHigh => "very_high",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            RiskBand::Negligible => "Negligible risk",
            RiskBand::Low => "Low risk",
            RiskBand::Medium => "Medium risk",
            RiskBand::VeryHigh => "Very high risk",
        }
    }
}

impl fmt::Display for RiskBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeRule {
    pub channel: ChannelRef,
    pub intervals: Vec<ScoreInterval>,
}

impl RangeRule {
    /// Score of the interval containing `angle`: `[lo, hi)`, with the last
    /// interval also closed above.
    pub fn score(&self, angle: f64) -> u8 {
        let last = self.intervals.len() - 1;
        self.intervals
            .iter()
            .enumerate()
            .find(|&(i, iv)| angle >= iv.lo && (angle < iv.hi || (i == last && angle <= iv.hi)))
            .map_or(self.min_score(), |(_, iv)| iv.score)
    }

    pub fn min_score(&self) -> u8 {
        self.intervals.iter().map(|iv| iv.score).min().unwrap_or(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionRule {
    pub joint: Joint,
    pub channel: ChannelRef,
    pub when: Trigger,
    pub threshold: f64,
    pub adjust: i8,
}

type TableA = [[[[u8; 2]; 4]; 3]; 6];
type TableB = [[[u8; 2]; 6]; 6];
type TableC = [[u8; 9]; 9];

/// A validated scoring configuration. Every lookup is total over its index range.
#[derive(Debug, Clone, PartialEq)]
pub struct RulaConfig {
    range: BTreeMap<Joint, RangeRule>,
    position: Vec<PositionRule>,
    table_a: TableA,
    table_b: TableB,
    table_c: TableC,
    bands: [RiskBand; 7],
    source: RulaConfigFile,
}

impl Default for RulaConfig {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG).expect("shipped RULA config is valid")
    }
}

/// Shipped default config text.
pub fn default_config_text() -> &'static str {
    DEFAULT_CONFIG
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Issues(Vec<ConfigIssue>);

impl Issues {
    fn push(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.0.push(ConfigIssue {
            location: location.into(),
            message: message.into(),
        });
    }
}

fn check_table<const N: usize>(
    issues: &mut Issues,
    name: &str,
    table: &TableFile,
    shape: [usize; N],
    labels: [&str; N],
    max: i64,
) -> Vec<u8> {
    // the first two index dims form rows (or one for table_b/table_c); the
    // rest are laid out along a row
    let row_dims = if N == 4 { 2 } else { 1 };
    let n_rows: usize = shape[..row_dims].iter().product();
    let n_cols: usize = shape[row_dims..].iter().product();
    if table.rows.len() != n_rows {
        issues.push(
            name,
            format!("expected {n_rows} rows, found {}", table.rows.len()),
        );
    }
    let mut cells = vec![0u8; n_rows * n_cols];
    for (flat, cell) in cells.iter_mut().enumerate() {
        let (r, c) = (flat / n_cols, flat % n_cols);
        let mut rem = flat;
        let mut idx = [0usize; N];
        for d in (0..N).rev() {
            idx[d] = rem % shape[d] + 1;
            rem /= shape[d];
        }
        let coords = labels
            .iter()
            .zip(idx)
            .map(|(l, i)| format!("{l}={i}"))
            .collect::<Vec<_>>()
            .join(" ");
        match table.rows.get(r).and_then(|row| row.get(c)) {
            None => issues.push(format!("{name}[{coords}]"), "missing cell"),
            Some(&v) if !(1..=max).contains(&v) => issues.push(
                format!("{name}[{coords}]"),
                format!("value {v} outside 1..={max}"),
            ),
            Some(&v) => *cell = v as u8,
        }
    }
    for (r, row) in table.rows.iter().enumerate() {
        if row.len() > n_cols {
            issues.push(
                format!("{name} row {}", r + 1),
                format!("{} cells, expected {n_cols}", row.len()),
            );
        }
    }
    cells
}

impl RulaConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, RulaError> {
        let file: RulaConfigFile =
            toml::from_str(text).map_err(|e| RulaError::Syntax(e.to_string()))?;
        Self::from_file(file)
    }

    /// Validate a parsed config. Every violated invariant is reported.
    pub fn from_file(file: RulaConfigFile) -> Result<Self, RulaError> {
        let mut issues = Issues(Vec::new());

        let mut range = BTreeMap::new();
        for (name, rule) in &file.range {
            let loc = format!("range.{name}");
            let joint = match name.parse::<Joint>() {
                Ok(j) => j,
                Err(_) => {
                    issues.push(&loc, "unknown joint");
                    continue;
                }
            };
            let channel = ChannelRef::parse(&rule.channel);
            match channel {
                None => issues.push(&loc, format!("unknown channel `{}`", rule.channel)),
                Some(ChannelRef::Sided { .. }) if !joint.is_sided() => issues.push(
                    &loc,
                    format!(
                        "{joint} is scored once per frame; `{}` is sided",
                        rule.channel
                    ),
                ),
                _ => {}
            }
            let mut ivs = rule.intervals.clone();
            ivs.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(a.hi.total_cmp(&b.hi)));
            if ivs.is_empty() {
                issues.push(&loc, "no intervals");
                continue;
            }
            for iv in &ivs {
                if iv.lo.is_nan() || iv.hi.is_nan() || iv.lo >= iv.hi {
                    issues.push(
                        &loc,
                        format!("interval [{}, {}) is empty or inverted", iv.lo, iv.hi),
                    );
                }
                if !(1..=joint.max_score()).contains(&iv.score) {
                    issues.push(
                        &loc,
                        format!(
                            "score {} for [{}, {}) outside 1..={}",
                            iv.score,
                            iv.lo,
                            iv.hi,
                            joint.max_score()
                        ),
                    );
                }
            }
            if ivs[0].lo != f64::NEG_INFINITY {
                issues.push(&loc, format!("angles below {} are not covered", ivs[0].lo));
            }
            if ivs[ivs.len() - 1].hi != f64::INFINITY {
                issues.push(
                    &loc,
                    format!("angles above {} are not covered", ivs[ivs.len() - 1].hi),
                );
            }
            for w in ivs.windows(2) {
                let (a, b) = (w[0], w[1]);
                if b.lo < a.hi {
                    issues.push(
                        &loc,
                        format!(
                            "intervals [{}, {}) and [{}, {}) overlap",
                            a.lo, a.hi, b.lo, b.hi
                        ),
                    );
                } else if b.lo > a.hi {
                    issues.push(&loc, format!("gap between {} and {}", a.hi, b.lo));
                }
            }
            if let Some(channel) = channel {
                range.insert(
                    joint,
                    RangeRule {
                        channel,
                        intervals: ivs,
                    },
                );
            }
        }
        for joint in Joint::ALL {
            if !file.range.contains_key(joint.as_str()) {
                issues.push(format!("range.{joint}"), "missing");
            }
        }

        let mut position = Vec::new();
        for (i, rule) in file.position.iter().enumerate() {
            let loc = format!("position[{}]", i + 1);
            let joint = rule.joint.parse::<Joint>();
            let channel = ChannelRef::parse(&rule.channel);
            if joint.is_err() {
                issues.push(&loc, format!("unknown joint `{}`", rule.joint));
            }
            if channel.is_none() {
                issues.push(&loc, format!("unknown channel `{}`", rule.channel));
            }
            if !rule.threshold.is_finite() {
                issues.push(&loc, "threshold must be finite");
            }
            if rule.adjust == 0 {
                issues.push(&loc, "adjustment of 0 has no effect");
            }
            if let (Ok(joint), Some(channel)) = (joint, channel) {
                if !joint.is_sided() && matches!(channel, ChannelRef::Sided { .. }) {
                    issues.push(
                        &loc,
                        format!(
                            "{joint} is scored once per frame; `{}` is sided",
                            rule.channel
                        ),
                    );
                }
                position.push(PositionRule {
                    joint,
                    channel,
                    when: rule.when,
                    threshold: rule.threshold,
                    adjust: rule.adjust,
                });
            }
        }

        let a = check_table(
            &mut issues,
            "table_a",
            &file.table_a,
            [6, 3, 4, 2],
            ["arm", "forearm", "wrist", "twist"],
            9,
        );
        let b = check_table(
            &mut issues,
            "table_b",
            &file.table_b,
            [6, 6, 2],
            ["neck", "trunk", "legs"],
            9,
        );
        let c = check_table(
            &mut issues,
            "table_c",
            &file.table_c,
            [9, 9],
            ["score_c", "score_d"],
            7,
        );

        let mut bands: [Option<RiskBand>; 7] = [None; 7];
        let b_file = &file.bands;
        for (band, [lo, hi]) in [
            (RiskBand::Negligible, b_file.negligible),
            (RiskBand::Low, b_file.low),
            (RiskBand::Medium, b_file.medium),
            (RiskBand::VeryHigh, b_file.very_high),
        ] {
            if !(1..=7).contains(&lo) || !(1..=7).contains(&hi) || lo > hi {
                issues.push(
                    format!("bands.{band}"),
                    format!("[{lo}, {hi}] is not a range within 1..=7"),
                );
                continue;
            }
            for s in lo..=hi {
                let slot = &mut bands[(s - 1) as usize];
                if let Some(prev) = slot.replace(band) {
                    issues.push(
                        format!("bands.{band}"),
                        format!("score {s} already assigned to {prev}"),
                    );
                }
            }
        }
        for (i, slot) in bands.iter().enumerate() {
            if slot.is_none() {
                issues.push("bands", format!("final score {} has no band", i + 1));
            }
        }

        if !issues.0.is_empty() {
            return Err(RulaError::InvalidConfig(issues.0));
        }

        let mut table_a = [[[[0u8; 2]; 4]; 3]; 6];
        for (i, v) in a.into_iter().enumerate() {
            table_a[i / 24][(i / 8) % 3][(i / 2) % 4][i % 2] = v;
        }
        let mut table_b = [[[0u8; 2]; 6]; 6];
        for (i, v) in b.into_iter().enumerate() {
            table_b[i / 12][(i / 2) % 6][i % 2] = v;
        }
        let mut table_c = [[0u8; 9]; 9];
        for (i, v) in c.into_iter().enumerate() {
            table_c[i / 9][i % 9] = v;
        }
        Ok(Self {
            range,
            position,
            table_a,
            table_b,
            table_c,
            bands: bands.map(|b| b.expect("checked above")),
            source: file,
        })
    }

    pub fn source(&self) -> &RulaConfigFile {
        &self.source
    }

    pub fn range_rule(&self, joint: Joint) -> &RangeRule {
        &self.range[&joint]
    }

    pub fn position_rules(&self) -> &[PositionRule] {
        &self.position
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn checksum(&self) -> String {
        sha256_hex(
            serde_json::to_string(&self.source)
                .expect("config serializes")
                .as_bytes(),
        )
    }

    /// Per-table SHA-256 over the canonical JSON rows.
    pub fn table_checksums(&self) -> [(&'static str, String); 3] {
        let h = |t: &TableFile| {
            sha256_hex(
                serde_json::to_string(&t.rows)
                    .expect("rows serialize")
                    .as_bytes(),
            )
        };
        [
            ("table_a", h(&self.source.table_a)),
            ("table_b", h(&self.source.table_b)),
            ("table_c", h(&self.source.table_c)),
        ]
    }

    pub fn table_a(&self, arm: u8, forearm: u8, wrist: u8, twist: u8) -> Result<u8, RulaError> {
        let ix = |index: u8, max: u8| {
            if (1..=max).contains(&index) {
                Ok(index as usize - 1)
            } else {
                Err(RulaError::OutOfRangeIndex {
                    table: "table_a",
                    index,
                    max,
                })
            }
        };
        Ok(self.table_a[ix(arm, 6)?][ix(forearm, 3)?][ix(wrist, 4)?][ix(twist, 2)?])
    }

    pub fn table_b(&self, neck: u8, trunk: u8, legs: u8) -> Result<u8, RulaError> {
        let ix = |index: u8, max: u8| {
            if (1..=max).contains(&index) {
                Ok(index as usize - 1)
            } else {
                Err(RulaError::OutOfRangeIndex {
                    table: "table_b",
                    index,
                    max,
                })
            }
        };
        Ok(self.table_b[ix(neck, 6)?][ix(trunk, 6)?][ix(legs, 2)?])
    }

    /// Final score. Both inputs are clamped to 1..=9 first.
    pub fn table_c(&self, score_c: u8, score_d: u8) -> u8 {
        self.table_c[score_c.clamp(1, 9) as usize - 1][score_d.clamp(1, 9) as usize - 1]
    }

    /// Band of a final score; inputs are clamped to 1..=7.
    pub fn risk_band(&self, final_score: u8) -> RiskBand {
        self.bands[final_score.clamp(1, 7) as usize - 1]
    }
}

/// Score of the interval containing `angle` for a joint named in the config.
pub fn score_range(joint: &str, angle: f64, config: &RulaConfig) -> Result<u8, RulaError> {
    Ok(config.range_rule(joint.parse()?).score(angle))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Adjusted {
    pub scores: BTreeMap<Joint, u8>,
    /// Trigger channels that were missing, so their rule could not be checked.
    pub unchecked: Vec<JointChannel>,
}

/// Apply every position rule targeting a joint in `base`, once each, then
/// clamp to the joint's table input range. `side` resolves side-neutral
/// channel names.
pub fn apply_position_adjustments(
    base: &BTreeMap<Joint, u8>,
    angles: &BTreeMap<JointChannel, f64>,
    side: Side,
    config: &RulaConfig,
) -> Adjusted {
    let mut totals: BTreeMap<Joint, i32> = base.iter().map(|(&j, &s)| (j, i32::from(s))).collect();
    let mut unchecked = Vec::new();
    for rule in config.position_rules() {
        let Some(total) = totals.get_mut(&rule.joint) else {
            continue;
        };
        let channel = rule.channel.resolve(side);
        match angles.get(&channel) {
            Some(&angle) if rule.when.fires(angle, rule.threshold) => {
                *total += i32::from(rule.adjust)
            }
            Some(_) => {}
            None => unchecked.push(channel),
        }
    }
    let scores = totals
        .into_iter()
        .map(|(j, s)| (j, s.clamp(1, i32::from(j.max_score())) as u8))
        .collect();
    Adjusted { scores, unchecked }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Missing channels score the joint's minimum and mark the frame degraded.
    #[default]
    Lenient,
    /// Missing channels are an error.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideScore {
    pub upper_arm: u8,
    pub lower_arm: u8,
    pub wrist: u8,
    pub wrist_twist: u8,
    pub table_a: u8,
    pub score_c: u8,
    pub final_score: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedScore {
    pub neck: u8,
    pub trunk: u8,
    pub legs: u8,
    pub table_b: u8,
    pub score_d: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulaFrameScore {
    pub left: SideScore,
    pub right: SideScore,
    pub shared: SharedScore,
    /// Worse of the two sides.
    pub combined: u8,
    pub band: RiskBand,
    /// Some channel was missing and a default was substituted.
    pub degraded: bool,
}

impl RulaFrameScore {
    pub fn side(&self, side: Side) -> &SideScore {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

struct FrameScorer<'a> {
    angles: &'a BTreeMap<JointChannel, f64>,
    config: &'a RulaConfig,
    policy: MissingPolicy,
    frame: usize,
    degraded: bool,
}

impl FrameScorer<'_> {
    fn missing(&mut self, channel: JointChannel) -> Result<(), RulaError> {
        match self.policy {
            MissingPolicy::Strict => Err(RulaError::IncompleteFrame {
                frame: self.frame,
                channel,
            }),
            MissingPolicy::Lenient => {
                self.degraded = true;
                Ok(())
            }
        }
    }

    fn local(&mut self, joints: &[Joint], side: Side) -> Result<BTreeMap<Joint, u8>, RulaError> {
        let mut base = BTreeMap::new();
        for &joint in joints {
            let rule = self.config.range_rule(joint);
            let channel = rule.channel.resolve(side);
            let score = match self.angles.get(&channel) {
                Some(&angle) => rule.score(angle),
                None => {
                    self.missing(channel)?;
                    rule.min_score()
                }
            };
            base.insert(joint, score);
        }
        let adjusted = apply_position_adjustments(&base, self.angles, side, self.config);
        for channel in adjusted.unchecked {
            self.missing(channel)?;
        }
        Ok(adjusted.scores)
    }
}

const ARM_JOINTS: [Joint; 4] = [
    Joint::UpperArm,
    Joint::LowerArm,
    Joint::Wrist,
    Joint::WristTwist,
];

/// Score one frame: local joint scores, posture adjustments, Tables A and B,
/// task factors, then Table C per side. The combined score is the worse side.
pub fn score_frame(
    angles: &BTreeMap<JointChannel, f64>,
    factors: TaskFactors,
    config: &RulaConfig,
    policy: MissingPolicy,
) -> Result<RulaFrameScore, RulaError> {
    score_frame_at(0, angles, factors, config, policy)
}

fn score_frame_at(
    frame: usize,
    angles: &BTreeMap<JointChannel, f64>,
    factors: TaskFactors,
    config: &RulaConfig,
    policy: MissingPolicy,
) -> Result<RulaFrameScore, RulaError> {
    let mut scorer = FrameScorer {
        angles,
        config,
        policy,
        frame,
        degraded: false,
    };
    let shared_local = scorer.local(&[Joint::Neck, Joint::Trunk], Side::Right)?;
    let (neck, trunk) = (shared_local[&Joint::Neck], shared_local[&Joint::Trunk]);
    let legs = factors.legs.clamp(1, 2);
    let table_b = config.table_b(neck, trunk, legs)?;
    let shared = SharedScore {
        neck,
        trunk,
        legs,
        table_b,
        score_d: table_b + factors.neck_muscle + factors.neck_force,
    };

    let mut side_score = |side: Side| -> Result<SideScore, RulaError> {
        let s = scorer.local(&ARM_JOINTS, side)?;
        let (upper_arm, lower_arm, wrist, wrist_twist) = (
            s[&Joint::UpperArm],
            s[&Joint::LowerArm],
            s[&Joint::Wrist],
            s[&Joint::WristTwist],
        );
        let table_a = config.table_a(upper_arm, lower_arm, wrist, wrist_twist)?;
        let score_c = table_a + factors.arm_muscle + factors.arm_force;
        Ok(SideScore {
            upper_arm,
            lower_arm,
            wrist,
            wrist_twist,
            table_a,
            score_c,
            final_score: config.table_c(score_c, shared.score_d),
        })
    };
    let left = side_score(Side::Left)?;
    let right = side_score(Side::Right)?;
    let combined = left.final_score.max(right.final_score);
    Ok(RulaFrameScore {
        left,
        right,
        shared,
        combined,
        band: config.risk_band(combined),
        degraded: scorer.degraded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RulaTimeline {
    pub start_time: f64,
    pub sample_rate: f64,
    pub frames: Vec<RulaFrameScore>,
}

impl RulaTimeline {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> f64 {
        self.start_time + index as f64 / self.sample_rate
    }

    pub fn degraded_count(&self) -> usize {
        self.frames.iter().filter(|f| f.degraded).count()
    }

    /// Span from first to last sample.
    pub fn duration(&self) -> f64 {
        self.frames.len().saturating_sub(1) as f64 / self.sample_rate
    }
}

/// Score every sample. Task factors come from the annotation interval
/// containing the sample time, defaults elsewhere.
pub fn score_timeline(
    series: &JointAngleSeries,
    annotations: &AnnotationTrack,
    config: &RulaConfig,
    policy: MissingPolicy,
) -> Result<RulaTimeline, RulaError> {
    if series.is_empty() {
        return Err(RulaError::EmptyTimeline);
    }
    let frames = (0..series.len())
        .map(|i| {
            let factors = annotations.factors_at(series.timestamp(i));
            score_frame_at(i, &series.frame(i), factors, config, policy)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RulaTimeline {
        start_time: series.start_time(),
        sample_rate: series.sample_rate(),
        frames,
    })
}

/// Share of samples per risk band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandShares {
    pub negligible: f64,
    pub low: f64,
    pub medium: f64,
    pub very_high: f64,
    pub samples: usize,
}

impl BandShares {
    pub fn get(&self, band: RiskBand) -> f64 {
        match band {
            RiskBand::Negligible => self.negligible,
            RiskBand::Low => self.low,
            RiskBand::Medium => self.medium,
            RiskBand::VeryHigh => self.very_high,
        }
    }

    pub fn total(&self) -> f64 {
        RiskBand::ALL.iter().map(|&b| self.get(b)).sum()
    }

    /// Four percentages in band order, e.g. `0.0 % / 78.7 % / 13.4 % / 7.9 %`.
    pub fn format_row(&self) -> String {
        RiskBand::ALL
            .iter()
            .map(|&b| format_percent(self.get(b)))
            .collect::<Vec<_>>()
            .join(" / ")
    }
}

pub fn format_percent(p: f64) -> String {
    format!("{p:.1} %")
}

/// Percentage of timeline samples in each band.
pub fn band_percentages(timeline: &RulaTimeline) -> Result<BandShares, RulaError> {
    if timeline.is_empty() {
        return Err(RulaError::EmptyTimeline);
    }
    let mut counts = [0usize; 4];
    for f in &timeline.frames {
        counts[f.band as usize] += 1;
    }
    let n = timeline.len() as f64;
    let pct = |i: usize| counts[i] as f64 * 100.0 / n;
    Ok(BandShares {
        negligible: pct(0),
        low: pct(1),
        medium: pct(2),
        very_high: pct(3),
        samples: timeline.len(),
    })
}
