//! Domain types shared by every stage of the pipeline: 3D points, anatomical
//! landmarks, joint-angle channels, angle series and task annotations.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("unknown landmark `{0}`")]
    UnknownLandmark(String),
    #[error("channel {0} has no valid samples")]
    EmptyChannel(JointChannel),
    #[error("channel {channel} has {got} samples, expected {expected}")]
    LengthMismatch {
        channel: JointChannel,
        expected: usize,
        got: usize,
    },
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("non-finite sample in channel {channel} at index {index}")]
    NonFiniteSample { channel: JointChannel, index: usize },
    #[error("interval [{t0}, {t1}) is inverted or empty")]
    InvertedInterval { t0: f64, t1: f64 },
    #[error("intervals [{0}, {1}) and [{2}, {3}) overlap")]
    OverlappingIntervals(f64, f64, f64, f64),
    #[error("{field} = {value} is out of range")]
    InvalidFactor { field: &'static str, value: u8 },
}

/// A point or direction in the capture volume. Units are whatever the source
/// uses; every angle computed from these is scale invariant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Self) -> Self {
        Self::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector, or `None` when the norm does not exceed `eps`.
    pub fn normalized(self, eps: f64) -> Option<Self> {
        let n = self.norm();
        (n > eps).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn midpoint(self, other: Self) -> Self {
        (self + other) * 0.5
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

macro_rules! named_enum {
    (
        $(#[$meta:meta])*
        $vis:vis enum $name:ident { $($variant:ident => $label:literal),+ $(,)? }
        err = $err:ident
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        $vis enum $name {
            $(
                #[serde(rename = $label)]
                $variant,
            )+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ModelError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($label => Ok($name::$variant),)+
                    other => Err(ModelError::$err(other.to_string())),
                }
            }
        }
    };
}

named_enum! {
    /// Anatomical landmarks needed by the joint-angle definitions. Tracker
    /// keypoints outside this set are dropped at ingestion.
    pub enum Landmark {
        Nose => "nose",
        Neck => "neck",
        Torso => "torso",
        Pelvis => "pelvis",
        ShoulderL => "shoulder_l",
        ShoulderR => "shoulder_r",
        ElbowL => "elbow_l",
        ElbowR => "elbow_r",
        WristL => "wrist_l",
        WristR => "wrist_r",
        MiddleKnuckleL => "middle_knuckle_l",
        MiddleKnuckleR => "middle_knuckle_r",
        PinkyKnuckleL => "pinky_knuckle_l",
        PinkyKnuckleR => "pinky_knuckle_r",
        HipL => "hip_l",
        HipR => "hip_r",
        KneeL => "knee_l",
        KneeR => "knee_r",
        AnkleL => "ankle_l",
        AnkleR => "ankle_r",
    }
    err = UnknownLandmark
}

named_enum! {
    /// Joint-angle channels, labelled the way motion-capture exports name them.
    pub enum JointChannel {
        HeadNeckFe => "T1_head_neck_FE",
        HeadNeckAr => "T1_head_neck_AR",
        HeadNeckLb => "T1_head_neck_LB",
        LumbarFlexion => "lumbar_flexion",
        LumbarRotation => "lumbar_rotation",
        LumbarBending => "lumbar_bending",
        ArmFlexL => "arm_flex_l",
        ArmFlexR => "arm_flex_r",
        ArmAddL => "arm_add_l",
        ArmAddR => "arm_add_r",
        ArmRotL => "arm_rot_l",
        ArmRotR => "arm_rot_r",
        ElbowFlexL => "elbow_flex_l",
        ElbowFlexR => "elbow_flex_r",
        ProSupL => "pro_sup_l",
        ProSupR => "pro_sup_r",
        WristFlexL => "wrist_flex_l",
        WristFlexR => "wrist_flex_r",
        WristDevL => "wrist_dev_l",
        WristDevR => "wrist_dev_r",
    }
    err = UnknownChannel
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn suffix(self) -> &'static str {
        match self {
            Side::Left => "_l",
            Side::Right => "_r",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// Left/right for sided channels, `None` for the axial neck and lumbar channels.
pub fn channel_side(channel: JointChannel) -> Option<Side> {
    let label = channel.as_str();
    if label.ends_with("_l") {
        Some(Side::Left)
    } else if label.ends_with("_r") {
        Some(Side::Right)
    } else {
        None
    }
}

impl JointChannel {
    pub fn side(self) -> Option<Side> {
        channel_side(self)
    }

    /// Channel label without its side suffix, e.g. `arm_flex` for `arm_flex_r`.
    pub fn base_name(self) -> &'static str {
        let label = self.as_str();
        match self.side() {
            Some(_) => &label[..label.len() - 2],
            None => label,
        }
    }

    /// Resolve a side-neutral base name (`elbow_flex`) to the sided channel.
    pub fn sided(base: &str, side: Side) -> Option<JointChannel> {
        format!("{base}{}", side.suffix()).parse().ok()
    }
}

/// One frame of tracked landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointFrame {
    pub index: u64,
    /// Seconds since the start of the stream.
    pub timestamp: f64,
    pub positions: BTreeMap<Landmark, Vec3>,
    pub confidence: Option<BTreeMap<Landmark, f64>>,
    /// Required landmarks absent from this frame. Empty means complete.
    pub missing: Vec<Landmark>,
}

impl KeypointFrame {
    pub fn new(index: u64, timestamp: f64, positions: BTreeMap<Landmark, Vec3>) -> Self {
        Self {
            index,
            timestamp,
            positions,
            confidence: None,
            missing: Vec::new(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn get(&self, landmark: Landmark) -> Option<Vec3> {
        self.positions.get(&landmark).copied()
    }

    /// Recompute the incomplete flag against a required landmark set.
    pub fn flag_missing<'a>(&mut self, required: impl IntoIterator<Item = &'a Landmark>) {
        self.missing = required
            .into_iter()
            .filter(|l| !self.positions.contains_key(l))
            .copied()
            .collect();
        self.missing.sort();
        self.missing.dedup();
    }
}

/// Multi-channel joint-angle recording in degrees on a uniform time grid.
/// `None` marks a missing sample.
#[derive(Debug, Clone, PartialEq)]
pub struct JointAngleSeries {
    sample_rate: f64,
    start_time: f64,
    len: usize,
    channels: BTreeMap<JointChannel, Vec<Option<f64>>>,
}

impl JointAngleSeries {
    pub fn new(
        sample_rate: f64,
        start_time: f64,
        channels: BTreeMap<JointChannel, Vec<Option<f64>>>,
    ) -> Result<Self, ModelError> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(ModelError::InvalidRate(sample_rate));
        }
        let len = channels.values().next().map_or(0, Vec::len);
        for (&channel, samples) in &channels {
            if samples.len() != len {
                return Err(ModelError::LengthMismatch {
                    channel,
                    expected: len,
                    got: samples.len(),
                });
            }
            if let Some(index) = samples
                .iter()
                .position(|s| s.is_some_and(|v| !v.is_finite()))
            {
                return Err(ModelError::NonFiniteSample { channel, index });
            }
        }
        Ok(Self {
            sample_rate,
            start_time,
            len,
            channels,
        })
    }

    /// Series with every sample present.
    pub fn from_dense(
        sample_rate: f64,
        start_time: f64,
        channels: impl IntoIterator<Item = (JointChannel, Vec<f64>)>,
    ) -> Result<Self, ModelError> {
        let channels = channels
            .into_iter()
            .map(|(c, v)| (c, v.into_iter().map(Some).collect()))
            .collect();
        Self::new(sample_rate, start_time, channels)
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Span from first to last sample: `(len - 1) / rate`.
    pub fn duration(&self) -> f64 {
        self.len.saturating_sub(1) as f64 / self.sample_rate
    }

    pub fn timestamp(&self, index: usize) -> f64 {
        self.start_time + index as f64 / self.sample_rate
    }

    pub fn channel(&self, channel: JointChannel) -> Option<&[Option<f64>]> {
        self.channels.get(&channel).map(Vec::as_slice)
    }

    pub fn channels(&self) -> impl Iterator<Item = (JointChannel, &[Option<f64>])> {
        self.channels.iter().map(|(&c, v)| (c, v.as_slice()))
    }

    pub fn channel_names(&self) -> impl Iterator<Item = JointChannel> + '_ {
        self.channels.keys().copied()
    }

    /// All present channel values at one sample index.
    pub fn frame(&self, index: usize) -> BTreeMap<JointChannel, f64> {
        self.channels
            .iter()
            .filter_map(|(&c, v)| v.get(index).copied().flatten().map(|x| (c, x)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    /// Number of non-missing samples the statistics were computed over.
    pub count: usize,
}

/// Mean, population standard deviation and extrema over the non-missing samples.
pub fn channel_summary(
    series: &JointAngleSeries,
    channel: JointChannel,
) -> Result<ChannelSummary, ModelError> {
    let samples = series
        .channel(channel)
        .ok_or_else(|| ModelError::UnknownChannel(channel.to_string()))?;
    let values: Vec<f64> = samples.iter().flatten().copied().collect();
    if values.is_empty() {
        return Err(ModelError::EmptyChannel(channel));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    Ok(ChannelSummary {
        // rounding in the sum can push the mean a hair outside the extrema
        mean: mean.clamp(min, max),
        std_dev: var.sqrt(),
        min,
        max,
        count: values.len(),
    })
}

/// Task factors entered by the assessor: muscle use, force/load and leg support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFactors {
    pub arm_muscle: u8,
    pub arm_force: u8,
    pub neck_muscle: u8,
    pub neck_force: u8,
    pub legs: u8,
}

impl Default for TaskFactors {
    fn default() -> Self {
        Self {
            arm_muscle: 0,
            arm_force: 0,
            neck_muscle: 0,
            neck_force: 0,
            legs: 1,
        }
    }
}

impl TaskFactors {
    pub fn validate(&self) -> Result<(), ModelError> {
        let checks = [
            ("arm_muscle", self.arm_muscle, 0..=1),
            ("arm_force", self.arm_force, 0..=3),
            ("neck_muscle", self.neck_muscle, 0..=1),
            ("neck_force", self.neck_force, 0..=3),
            ("legs", self.legs, 1..=2),
        ];
        match checks.into_iter().find(|(_, v, range)| !range.contains(v)) {
            Some((field, value, _)) => Err(ModelError::InvalidFactor { field, value }),
            None => Ok(()),
        }
    }
}

/// A span of the recording `[t0, t1)` with fixed task factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotationInterval {
    pub t0: f64,
    pub t1: f64,
    #[serde(flatten)]
    pub factors: TaskFactors,
}

impl AnnotationInterval {
    pub fn contains(&self, t: f64) -> bool {
        self.t0 <= t && t < self.t1
    }
}

/// Validated, sorted and non-overlapping annotation intervals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationTrack {
    intervals: Vec<AnnotationInterval>,
}

impl AnnotationTrack {
    pub fn new(mut intervals: Vec<AnnotationInterval>) -> Result<Self, ModelError> {
        for iv in &intervals {
            if !(iv.t0.is_finite() && iv.t1.is_finite() && iv.t0 < iv.t1) {
                return Err(ModelError::InvertedInterval {
                    t0: iv.t0,
                    t1: iv.t1,
                });
            }
            iv.factors.validate()?;
        }
        intervals.sort_by(|a, b| a.t0.total_cmp(&b.t0));
        for pair in intervals.windows(2) {
            if pair[1].t0 < pair[0].t1 {
                return Err(ModelError::OverlappingIntervals(
                    pair[0].t0, pair[0].t1, pair[1].t0, pair[1].t1,
                ));
            }
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[AnnotationInterval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Factors in effect at `t`; defaults outside every interval.
    pub fn factors_at(&self, t: f64) -> TaskFactors {
        let idx = self.intervals.partition_point(|iv| iv.t0 <= t);
        idx.checked_sub(1)
            .map(|i| &self.intervals[i])
            .filter(|iv| iv.contains(t))
            .map_or_else(TaskFactors::default, |iv| iv.factors)
    }
}
