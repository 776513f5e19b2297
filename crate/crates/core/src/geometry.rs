//! Joint angles from 3D keypoints.
//!
//! Every channel is the angle between two body-segment vectors, optionally
//! projected onto an anatomical plane and signed. The definitions are data
//! (`config/angles.toml` is the shipped default) so they can be changed
//! without touching code.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{JointAngleSeries, JointChannel, KeypointFrame, Landmark, ModelError, Vec3};

/// Norms at or below this (in source length units) are degenerate.
pub const EPS: f64 = 1e-9;

/// Default number of complete frames used to capture the baseline.
pub const DEFAULT_BASELINE_FRAMES: usize = 15;

const DEFAULT_ANGLES: &str = include_str!("../config/angles.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate vector (norm <= {EPS})")]
    DegenerateVector,
    #[error("degenerate projection onto plane (norm <= {EPS})")]
    DegenerateProjection,
    #[error("landmark {0} missing")]
    MissingLandmark(Landmark),
    #[error("body axes undefined: pelvis/torso/hips degenerate")]
    DegenerateBodyFrame,
    #[error("no baseline value for {0}")]
    MissingBaseline(JointChannel),
    #[error("no complete frames to capture a baseline from")]
    NoCompleteFrames,
    #[error("invalid angle definitions: {0}")]
    InvalidDefinitions(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Unsigned angle between two vectors, degrees in [0, 180].
///
/// Evaluated as `atan2(|a x b|, a . b)`, which equals the arccosine of the
/// clamped normalized dot product but keeps full precision near 0 and 180.
pub fn vector_angle(a: Vec3, b: Vec3) -> Result<f64, GeometryError> {
    if a.norm() <= EPS || b.norm() <= EPS {
        return Err(GeometryError::DegenerateVector);
    }
    Ok(a.cross(b).norm().atan2(a.dot(b)).to_degrees())
}

/// Angle from `u` to `v` after projecting both onto the plane orthogonal to
/// `plane_normal`, signed by the right-hand rule about the normal.
/// Degrees in (-180, 180].
pub fn signed_plane_angle(u: Vec3, v: Vec3, plane_normal: Vec3) -> Result<f64, GeometryError> {
    let n = plane_normal
        .normalized(EPS)
        .ok_or(GeometryError::DegenerateVector)?;
    let pu = u - n * u.dot(n);
    let pv = v - n * v.dot(n);
    if pu.norm() <= EPS || pv.norm() <= EPS {
        return Err(GeometryError::DegenerateProjection);
    }
    let deg = pu.cross(pv).dot(n).atan2(pu.dot(pv)).to_degrees();
    Ok(if deg <= -180.0 { 180.0 } else { deg })
}

/// A landmark, or the midpoint of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Point {
    Landmark(Landmark),
    Midpoint([Landmark; 2]),
}

impl Point {
    fn landmarks(&self) -> impl Iterator<Item = Landmark> {
        let (a, b) = match *self {
            Point::Landmark(l) => (l, None),
            Point::Midpoint([l, m]) => (l, Some(m)),
        };
        std::iter::once(a).chain(b)
    }

    fn resolve(&self, frame: &KeypointFrame) -> Result<Vec3, GeometryError> {
        let get = |l: Landmark| frame.get(l).ok_or(GeometryError::MissingLandmark(l));
        match *self {
            Point::Landmark(l) => get(l),
            Point::Midpoint([l, m]) => Ok(get(l)?.midpoint(get(m)?)),
        }
    }
}

/// Directed segment `[from, to]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Segment(pub [Point; 2]);

impl Segment {
    pub fn new(from: Landmark, to: Landmark) -> Self {
        Segment([Point::Landmark(from), Point::Landmark(to)])
    }

    fn landmarks(&self) -> impl Iterator<Item = Landmark> + '_ {
        self.0.iter().flat_map(Point::landmarks)
    }

    fn vector(&self, frame: &KeypointFrame) -> Result<Vec3, GeometryError> {
        Ok(self.0[1].resolve(frame)? - self.0[0].resolve(frame)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Segment(Segment),
    /// Mean direction of the segment over the baseline frames.
    Baseline {
        baseline: Segment,
    },
}

impl VectorSpec {
    fn segment(&self) -> &Segment {
        match self {
            VectorSpec::Segment(s) | VectorSpec::Baseline { baseline: s } => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyAxis {
    Up,
    Down,
    Left,
    Right,
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlaneNormal {
    Body(BodyAxis),
    Segment(Segment),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleDefinition {
    pub channel: JointChannel,
    pub a: VectorSpec,
    pub b: VectorSpec,
    /// Projection plane normal and sign axis. `None` means unsigned 3D angle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<PlaneNormal>,
    /// With a normal, report the magnitude only.
    #[serde(default = "yes", skip_serializing_if = "Clone::clone")]
    pub signed: bool,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub offset: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub subtract_baseline: bool,
}

fn yes() -> bool {
    true
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl AngleDefinition {
    fn baseline_segment(&self) -> Option<&Segment> {
        [&self.a, &self.b].into_iter().find_map(|v| match v {
            VectorSpec::Baseline { baseline } => Some(baseline),
            VectorSpec::Segment(_) => None,
        })
    }

    /// Every landmark the definition reads, including the body-axis landmarks
    /// when the normal is a body axis.
    pub fn landmarks(&self) -> BTreeSet<Landmark> {
        let mut set: BTreeSet<Landmark> = self
            .a
            .segment()
            .landmarks()
            .chain(self.b.segment().landmarks())
            .collect();
        match &self.normal {
            Some(PlaneNormal::Segment(s)) => set.extend(s.landmarks()),
            Some(PlaneNormal::Body(_)) => set.extend(BodyFrame::LANDMARKS),
            None => {}
        }
        set
    }
}

/// The ordered list of channel definitions in use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleDefinitions {
    #[serde(rename = "angle")]
    angles: Vec<AngleDefinition>,
}

impl Default for AngleDefinitions {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_ANGLES).expect("shipped angle definitions are valid")
    }
}

impl AngleDefinitions {
    pub fn new(angles: Vec<AngleDefinition>) -> Result<Self, GeometryError> {
        let mut seen = BTreeSet::new();
        for def in &angles {
            let bad =
                |msg: &str| GeometryError::InvalidDefinitions(format!("{}: {msg}", def.channel));
            if !seen.insert(def.channel) {
                return Err(bad("defined twice"));
            }
            if matches!(def.a, VectorSpec::Baseline { .. })
                && matches!(def.b, VectorSpec::Baseline { .. })
            {
                return Err(bad("at most one vector may be a baseline direction"));
            }
            if !def.offset.is_finite() {
                return Err(bad("offset must be finite"));
            }
        }
        Ok(Self { angles })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, GeometryError> {
        let parsed: AngleDefinitions =
            toml::from_str(text).map_err(|e| GeometryError::InvalidDefinitions(e.to_string()))?;
        Self::new(parsed.angles)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("angle definitions serialize")
    }

    pub fn iter(&self) -> impl Iterator<Item = &AngleDefinition> {
        self.angles.iter()
    }

    pub fn channels(&self) -> impl Iterator<Item = JointChannel> + '_ {
        self.angles.iter().map(|d| d.channel)
    }

    /// Keep only the listed channels.
    pub fn restricted_to(&self, channels: &BTreeSet<JointChannel>) -> Self {
        Self {
            angles: self
                .angles
                .iter()
                .filter(|d| channels.contains(&d.channel))
                .cloned()
                .collect(),
        }
    }

    pub fn required_landmarks(&self) -> BTreeSet<Landmark> {
        self.angles
            .iter()
            .flat_map(AngleDefinition::landmarks)
            .collect()
    }

    fn frame_is_complete(&self, frame: &KeypointFrame, required: &BTreeSet<Landmark>) -> bool {
        required.iter().all(|l| frame.positions.contains_key(l))
    }
}

/// Orthonormal anatomical axes of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyFrame {
    pub up: Vec3,
    pub right: Vec3,
    pub forward: Vec3,
}

impl BodyFrame {
    pub const LANDMARKS: [Landmark; 4] = [
        Landmark::Pelvis,
        Landmark::Torso,
        Landmark::HipL,
        Landmark::HipR,
    ];

    pub fn from_frame(frame: &KeypointFrame) -> Result<Self, GeometryError> {
        let get = |l: Landmark| frame.get(l).ok_or(GeometryError::MissingLandmark(l));
        let up = (get(Landmark::Torso)? - get(Landmark::Pelvis)?)
            .normalized(EPS)
            .ok_or(GeometryError::DegenerateBodyFrame)?;
        let hips = get(Landmark::HipR)? - get(Landmark::HipL)?;
        let right = (hips - up * hips.dot(up))
            .normalized(EPS)
            .ok_or(GeometryError::DegenerateBodyFrame)?;
        Ok(Self {
            up,
            right,
            forward: up.cross(right),
        })
    }

    pub fn axis(&self, axis: BodyAxis) -> Vec3 {
        match axis {
            BodyAxis::Up => self.up,
            BodyAxis::Down => -self.up,
            BodyAxis::Right => self.right,
            BodyAxis::Left => -self.right,
            BodyAxis::Forward => self.forward,
            BodyAxis::Backward => -self.forward,
        }
    }
}

/// Start-of-task neck inclination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeckBaseline {
    pub inclination: f64,
}

/// Reference values captured from the first complete frames of a recording:
/// mean raw values for channels that subtract a baseline, and mean unit
/// directions for baseline-referenced vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Baseline {
    pub offsets: BTreeMap<JointChannel, f64>,
    pub directions: BTreeMap<JointChannel, Vec3>,
    pub frames_used: usize,
}

impl Baseline {
    pub fn neck(&self) -> Option<NeckBaseline> {
        self.offsets
            .get(&JointChannel::HeadNeckFe)
            .map(|&inclination| NeckBaseline { inclination })
    }
}

struct FrameContext<'a> {
    frame: &'a KeypointFrame,
    body: Option<Result<BodyFrame, GeometryError>>,
}

impl<'a> FrameContext<'a> {
    fn new(frame: &'a KeypointFrame) -> Self {
        Self { frame, body: None }
    }

    fn body(&mut self) -> Result<BodyFrame, GeometryError> {
        self.body
            .get_or_insert_with(|| BodyFrame::from_frame(self.frame))
            .clone()
    }

    fn raw_angle(
        &mut self,
        def: &AngleDefinition,
        directions: &BTreeMap<JointChannel, Vec3>,
    ) -> Result<f64, GeometryError> {
        let resolve = |spec: &VectorSpec, frame: &KeypointFrame| match spec {
            VectorSpec::Segment(s) => s.vector(frame),
            VectorSpec::Baseline { .. } => directions
                .get(&def.channel)
                .copied()
                .ok_or(GeometryError::MissingBaseline(def.channel)),
        };
        let a = resolve(&def.a, self.frame)?;
        let b = resolve(&def.b, self.frame)?;
        let normal = match &def.normal {
            None => return Ok(vector_angle(a, b)? + def.offset),
            Some(PlaneNormal::Body(axis)) => self.body()?.axis(*axis),
            Some(PlaneNormal::Segment(s)) => s.vector(self.frame)?,
        };
        let angle = signed_plane_angle(a, b, normal)?;
        Ok(if def.signed { angle } else { angle.abs() } + def.offset)
    }
}

/// Capture the baseline from the first `window` complete frames.
pub fn capture_baseline(
    frames: &[KeypointFrame],
    defs: &AngleDefinitions,
    window: usize,
) -> Result<Baseline, GeometryError> {
    let required = defs.required_landmarks();
    let chosen: Vec<&KeypointFrame> = frames
        .iter()
        .filter(|f| defs.frame_is_complete(f, &required))
        .take(window.max(1))
        .collect();
    if chosen.is_empty() {
        return Err(GeometryError::NoCompleteFrames);
    }
    let mut baseline = Baseline {
        frames_used: chosen.len(),
        ..Baseline::default()
    };
    for def in defs.iter() {
        let Some(segment) = def.baseline_segment() else {
            continue;
        };
        let sum = chosen
            .iter()
            .filter_map(|f| segment.vector(f).ok()?.normalized(EPS))
            .fold(Vec3::default(), |acc, v| acc + v);
        if let Some(dir) = sum.normalized(EPS) {
            baseline.directions.insert(def.channel, dir);
        }
    }
    for def in defs.iter().filter(|d| d.subtract_baseline) {
        let values: Vec<f64> = chosen
            .iter()
            .filter_map(|f| {
                FrameContext::new(f)
                    .raw_angle(def, &baseline.directions)
                    .ok()
            })
            .collect();
        if !values.is_empty() {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            baseline.offsets.insert(def.channel, mean);
        }
    }
    Ok(baseline)
}

/// Mean raw neck-flexion inclination over the first `window` complete frames.
pub fn neck_baseline(
    frames: &[KeypointFrame],
    defs: &AngleDefinitions,
    window: usize,
) -> Result<NeckBaseline, GeometryError> {
    let fe = defs
        .iter()
        .find(|d| d.channel == JointChannel::HeadNeckFe)
        .cloned()
        .ok_or_else(|| GeometryError::InvalidDefinitions("no T1_head_neck_FE definition".into()))?;
    let only_fe = AngleDefinitions::new(vec![AngleDefinition {
        subtract_baseline: true,
        ..fe
    }])?;
    capture_baseline(frames, &only_fe, window)?
        .neck()
        .ok_or(GeometryError::MissingBaseline(JointChannel::HeadNeckFe))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDiagnostic {
    pub channel: JointChannel,
    pub error: GeometryError,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameAngles {
    pub values: BTreeMap<JointChannel, f64>,
    /// Channels that could not be computed and why.
    pub diagnostics: Vec<ChannelDiagnostic>,
}

/// All requested channels for one frame. Channels that cannot be computed
/// are left out of `values` and reported in `diagnostics`.
pub fn compute_joint_angles(
    frame: &KeypointFrame,
    defs: &AngleDefinitions,
    baseline: &Baseline,
) -> FrameAngles {
    let mut ctx = FrameContext::new(frame);
    let mut out = FrameAngles::default();
    for def in defs.iter() {
        let result = ctx.raw_angle(def, &baseline.directions).and_then(|raw| {
            if !def.subtract_baseline {
                return Ok(raw);
            }
            baseline
                .offsets
                .get(&def.channel)
                .map(|off| raw - off)
                .ok_or(GeometryError::MissingBaseline(def.channel))
        });
        match result {
            Ok(v) => {
                out.values.insert(def.channel, v);
            }
            Err(error) => out.diagnostics.push(ChannelDiagnostic {
                channel: def.channel,
                error,
            }),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOptions {
    /// Complete frames used for the baseline.
    pub baseline_frames: usize,
    /// Rate assumed when the stream has fewer than two distinct timestamps.
    pub fallback_rate: f64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            baseline_frames: DEFAULT_BASELINE_FRAMES,
            fallback_rate: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleSeriesOutput {
    pub series: JointAngleSeries,
    pub baseline: Baseline,
    /// Per-channel count of frames whose value could not be computed.
    pub missing_counts: BTreeMap<JointChannel, usize>,
}

/// Sample rate from the median spacing of distinct timestamps, rounded to
/// the micro-hertz so nominal rates come out exact.
pub fn estimate_rate(frames: &[KeypointFrame]) -> Option<f64> {
    let mut gaps: Vec<f64> = frames
        .windows(2)
        .map(|w| w[1].timestamp - w[0].timestamp)
        .filter(|dt| *dt > 0.0)
        .collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_by(f64::total_cmp);
    let mid = gaps.len() / 2;
    let median = if gaps.len() % 2 == 1 {
        gaps[mid]
    } else {
        0.5 * (gaps[mid - 1] + gaps[mid])
    };
    Some(((1.0 / median) * 1e6).round() / 1e6)
}

/// Angles for every frame on a uniform grid. Frames are placed by timestamp,
/// so dropped frames and uncomputable channels become missing samples.
pub fn compute_angle_series(
    frames: &[KeypointFrame],
    defs: &AngleDefinitions,
    options: SeriesOptions,
) -> Result<AngleSeriesOutput, GeometryError> {
    let baseline = capture_baseline(frames, defs, options.baseline_frames)?;
    let rate = estimate_rate(frames).unwrap_or(options.fallback_rate);
    let t0 = frames[0].timestamp;
    let slot = |t: f64| ((t - t0) * rate).round() as usize;
    let len = slot(frames[frames.len() - 1].timestamp) + 1;

    let mut channels: BTreeMap<JointChannel, Vec<Option<f64>>> =
        defs.channels().map(|c| (c, vec![None; len])).collect();
    let mut filled = vec![false; len];
    for frame in frames {
        let i = slot(frame.timestamp);
        if std::mem::replace(&mut filled[i], true) {
            continue;
        }
        let angles = compute_joint_angles(frame, defs, &baseline);
        for (channel, value) in angles.values {
            channels.get_mut(&channel).expect("defined channel")[i] = Some(value);
        }
    }
    let missing_counts = channels
        .iter()
        .map(|(&c, v)| (c, v.iter().filter(|s| s.is_none()).count()))
        .collect();
    let series = JointAngleSeries::new(rate, t0, channels)?;
    Ok(AngleSeriesOutput {
        series,
        baseline,
        missing_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{neutral_pose, pose_frame};
    use proptest::prelude::*;

    const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    #[test]
    fn vector_angle_known_cases() {
        assert_eq!(vector_angle(X, X).unwrap(), 0.0);
        assert_eq!(vector_angle(X, Y).unwrap(), 90.0);
        assert_eq!(vector_angle(X, -X).unwrap(), 180.0);
        assert!((vector_angle(X, Vec3::new(1.0, 1.0, 0.0)).unwrap() - 45.0).abs() < 1e-9);
        assert_eq!(
            vector_angle(X, Vec3::default()),
            Err(GeometryError::DegenerateVector)
        );
        assert_eq!(
            vector_angle(Vec3::new(1e-10, 0.0, 0.0), X),
            Err(GeometryError::DegenerateVector)
        );
    }

    #[test]
    fn signed_plane_angle_known_cases() {
        assert_eq!(signed_plane_angle(X, Y, Z).unwrap(), 90.0);
        assert_eq!(signed_plane_angle(X, -Y, Z).unwrap(), -90.0);
        assert_eq!(signed_plane_angle(X, X, Z).unwrap(), 0.0);
        assert_eq!(signed_plane_angle(X, -X, Z).unwrap(), 180.0);
        // out-of-plane components are ignored
        assert!((signed_plane_angle(X + Z * 5.0, Y - Z, Z).unwrap() - 90.0).abs() < 1e-12);
        assert_eq!(
            signed_plane_angle(Z, Y, Z),
            Err(GeometryError::DegenerateProjection)
        );
    }

    proptest! {
        #[test]
        fn vector_angle_symmetric(a in prop::array::uniform3(-10.0f64..10.0), b in prop::array::uniform3(-10.0f64..10.0)) {
            let (a, b) = (Vec3::new(a[0], a[1], a[2]), Vec3::new(b[0], b[1], b[2]));
            prop_assume!(a.norm() > 1e-3 && b.norm() > 1e-3);
            let ab = vector_angle(a, b).unwrap();
            prop_assert_eq!(ab, vector_angle(b, a).unwrap());
            prop_assert!((0.0..=180.0).contains(&ab));
        }

        #[test]
        fn signed_plane_angle_antisymmetric(
            u in prop::array::uniform3(-10.0f64..10.0),
            v in prop::array::uniform3(-10.0f64..10.0),
            n in prop::array::uniform3(-10.0f64..10.0),
        ) {
            let (u, v, n) = (Vec3::new(u[0], u[1], u[2]), Vec3::new(v[0], v[1], v[2]), Vec3::new(n[0], n[1], n[2]));
            prop_assume!(n.norm() > 1e-2);
            let (Ok(uv), Ok(vu)) = (signed_plane_angle(u, v, n), signed_plane_angle(v, u, n)) else {
                return Ok(());
            };
            prop_assume!(uv.abs() < 179.999);
            prop_assert!((uv + vu).abs() < 1e-9);
        }
    }

    #[test]
    fn default_definitions_cover_all_channels() {
        let defs = AngleDefinitions::default();
        let channels: BTreeSet<_> = defs.channels().collect();
        assert_eq!(channels.len(), JointChannel::ALL.len());
        assert!(!defs.required_landmarks().contains(&Landmark::KneeL));
        let again = AngleDefinitions::from_toml_str(&defs.to_toml_string()).unwrap();
        assert_eq!(again, defs);
    }

    #[test]
    fn duplicate_definition_rejected() {
        let text = "[[angle]]\nchannel='elbow_flex_r'\na=['shoulder_r','elbow_r']\nb=['elbow_r','wrist_r']\n".repeat(2);
        assert!(matches!(
            AngleDefinitions::from_toml_str(&text),
            Err(GeometryError::InvalidDefinitions(_))
        ));
    }

    #[test]
    fn neutral_pose_reads_zero_everywhere() {
        let frame = pose_frame(0, 0.0, &neutral_pose());
        let defs = AngleDefinitions::default();
        let baseline = capture_baseline(std::slice::from_ref(&frame), &defs, 1).unwrap();
        let angles = compute_joint_angles(&frame, &defs, &baseline);
        assert!(angles.diagnostics.is_empty(), "{:?}", angles.diagnostics);
        for (c, v) in &angles.values {
            assert!(v.abs() < 1e-9, "{c} = {v}");
        }
    }

    #[test]
    fn straight_and_right_angle_elbow() {
        let defs = AngleDefinitions::default();
        let mut pose = neutral_pose();
        let elbow = pose[&Landmark::ElbowR];
        // forearm forward, upper arm hanging: a constructed right angle
        pose.insert(Landmark::WristR, elbow + Vec3::new(0.0, 0.26, 0.0));
        let frame = pose_frame(0, 0.0, &pose);
        let baseline = Baseline::default();
        let angles = compute_joint_angles(&frame, &defs, &baseline);
        assert!((angles.values[&JointChannel::ElbowFlexR] - 90.0).abs() < 1e-9);
        assert!(angles.values[&JointChannel::ElbowFlexL].abs() < 1e-9);
        // baseline-dependent channels are reported, not zeroed
        assert!(!angles.values.contains_key(&JointChannel::HeadNeckFe));
        assert!(angles
            .diagnostics
            .iter()
            .any(|d| d.channel == JointChannel::HeadNeckFe
                && d.error == GeometryError::MissingBaseline(JointChannel::HeadNeckFe)));
    }

    #[test]
    fn arm_flexion_and_abduction_signs() {
        let defs = AngleDefinitions::default();
        let base = neutral_pose();
        let baseline = capture_baseline(&[pose_frame(0, 0.0, &base)], &defs, 1).unwrap();
        let shoulder = base[&Landmark::ShoulderR];
        let len = (base[&Landmark::ElbowR] - shoulder).norm();

        let mut forward = base.clone();
        forward.insert(Landmark::ElbowR, shoulder + Vec3::new(0.0, len, 0.0));
        let a = compute_joint_angles(&pose_frame(1, 0.1, &forward), &defs, &baseline);
        assert!((a.values[&JointChannel::ArmFlexR] - 90.0).abs() < 1e-9);

        let mut back = base.clone();
        back.insert(Landmark::ElbowR, shoulder + Vec3::new(0.0, -len, -len));
        let a = compute_joint_angles(&pose_frame(1, 0.1, &back), &defs, &baseline);
        assert!((a.values[&JointChannel::ArmFlexR] + 45.0).abs() < 1e-9);

        let mut side = base.clone();
        side.insert(Landmark::ElbowR, shoulder + Vec3::new(len, 0.0, 0.0));
        let a = compute_joint_angles(&pose_frame(1, 0.1, &side), &defs, &baseline);
        assert!((a.values[&JointChannel::ArmAddR] - 90.0).abs() < 1e-9);
    }

    #[test]
    fn neck_flexion_positive_forward() {
        let defs = AngleDefinitions::default();
        let base = neutral_pose();
        let baseline = capture_baseline(&[pose_frame(0, 0.0, &base)], &defs, 1).unwrap();
        let neck = base[&Landmark::Neck];
        let head = base[&Landmark::Nose] - neck;
        // rotate the head 30 degrees forward about the right (x) axis
        let (s, c) = (-30f64).to_radians().sin_cos();
        let rotated = Vec3::new(head.x, head.y * c - head.z * s, head.y * s + head.z * c);
        let mut pose = base.clone();
        pose.insert(Landmark::Nose, neck + rotated);
        let a = compute_joint_angles(&pose_frame(1, 0.1, &pose), &defs, &baseline);
        assert!((a.values[&JointChannel::HeadNeckFe] - 30.0).abs() < 1e-9);
    }

    fn with_nose_inclination(deg: f64) -> KeypointFrame {
        let mut pose = neutral_pose();
        let neck = pose[&Landmark::Neck];
        let (s, c) = deg.to_radians().sin_cos();
        pose.insert(Landmark::Nose, neck + Vec3::new(0.0, 0.1 * s, 0.1 * c));
        pose_frame(0, 0.0, &pose)
    }

    #[test]
    fn neck_baseline_cases() {
        let defs = AngleDefinitions::default();
        let frames = vec![with_nose_inclination(12.0); 4];
        let b = neck_baseline(&frames, &defs, 15).unwrap();
        assert!((b.inclination - 12.0).abs() < 1e-9);

        let frames = [with_nose_inclination(10.0), with_nose_inclination(14.0)];
        let b = neck_baseline(&frames, &defs, 2).unwrap();
        assert!((b.inclination - 12.0).abs() < 1e-9);

        let mut incomplete = with_nose_inclination(10.0);
        incomplete.positions.remove(&Landmark::Nose);
        assert_eq!(
            neck_baseline(&[incomplete], &defs, 15),
            Err(GeometryError::NoCompleteFrames)
        );
    }

    #[test]
    fn series_time_invariant_and_missing_policy() {
        let defs = AngleDefinitions::default();
        let mut frames: Vec<_> = (0..10)
            .map(|i| pose_frame(i, i as f64 / 30.0, &neutral_pose()))
            .collect();
        frames[5].positions.remove(&Landmark::WristR);
        let out = compute_angle_series(&frames, &defs, SeriesOptions::default()).unwrap();
        assert_eq!(out.series.len(), 10);
        assert_eq!(out.series.sample_rate(), 30.0);
        for (c, samples) in out.series.channels() {
            let touches_wrist = defs
                .iter()
                .find(|d| d.channel == c)
                .unwrap()
                .landmarks()
                .contains(&Landmark::WristR);
            for (i, s) in samples.iter().enumerate() {
                if touches_wrist && i == 5 {
                    assert_eq!(*s, None, "{c}");
                } else {
                    assert!(s.unwrap().abs() < 1e-9, "{c}[{i}]");
                }
            }
        }
        assert_eq!(out.missing_counts[&JointChannel::ElbowFlexR], 1);
        assert_eq!(out.missing_counts[&JointChannel::ElbowFlexL], 0);
    }

    #[test]
    fn dropped_frame_leaves_a_gap() {
        let defs = AngleDefinitions::default();
        let frames: Vec<_> = [0usize, 1, 2, 4, 5]
            .iter()
            .map(|&i| pose_frame(i as u64, i as f64 / 30.0, &neutral_pose()))
            .collect();
        let out = compute_angle_series(&frames, &defs, SeriesOptions::default()).unwrap();
        assert_eq!(out.series.len(), 6);
        assert_eq!(
            out.series.channel(JointChannel::ElbowFlexR).unwrap()[3],
            None
        );
    }

    #[test]
    fn series_requires_a_complete_frame() {
        let mut frame = pose_frame(0, 0.0, &neutral_pose());
        frame.positions.remove(&Landmark::Pelvis);
        assert_eq!(
            compute_angle_series(
                &[frame],
                &AngleDefinitions::default(),
                SeriesOptions::default()
            ),
            Err(GeometryError::NoCompleteFrames)
        );
    }
}
