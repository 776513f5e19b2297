//! Synthetic skeletons for tests, examples and demos.
//!
//! Coordinates are metres with x to the subject's right, y forward and z up.

use std::collections::BTreeMap;

use crate::model::{KeypointFrame, Landmark, Vec3};

/// Upright standing pose: arms hanging straight, palms facing the body,
/// head level. Every default joint angle reads zero against itself as baseline.
pub fn neutral_pose() -> BTreeMap<Landmark, Vec3> {
    use Landmark::*;
    let mut pose = BTreeMap::new();
    let mut put = |l, x, y, z| {
        pose.insert(l, Vec3::new(x, y, z));
    };
    put(Pelvis, 0.0, 0.0, 1.0);
    put(Torso, 0.0, 0.0, 1.25);
    put(Neck, 0.0, 0.0, 1.45);
    put(Nose, 0.0, 0.1, 1.6);
    for (sign, sh, el, wr, mk, pk, hip, knee, ankle) in [
        (
            1.0,
            ShoulderR,
            ElbowR,
            WristR,
            MiddleKnuckleR,
            PinkyKnuckleR,
            HipR,
            KneeR,
            AnkleR,
        ),
        (
            -1.0,
            ShoulderL,
            ElbowL,
            WristL,
            MiddleKnuckleL,
            PinkyKnuckleL,
            HipL,
            KneeL,
            AnkleL,
        ),
    ] {
        put(sh, 0.18 * sign, 0.0, 1.45);
        put(el, 0.18 * sign, 0.0, 1.17);
        put(wr, 0.18 * sign, 0.0, 0.92);
        put(mk, 0.18 * sign, 0.0, 0.83);
        put(pk, 0.18 * sign, -0.025, 0.845);
        put(hip, 0.1 * sign, 0.0, 1.0);
        put(knee, 0.1 * sign, 0.0, 0.55);
        put(ankle, 0.1 * sign, 0.0, 0.1);
    }
    pose
}

pub fn pose_frame(index: u64, timestamp: f64, pose: &BTreeMap<Landmark, Vec3>) -> KeypointFrame {
    KeypointFrame::new(index, timestamp, pose.clone())
}

/// Pose with the right forearm rotated about the elbow in the sagittal plane
/// so that elbow flexion equals `flexion_deg` exactly.
pub fn right_elbow_flexed(flexion_deg: f64) -> BTreeMap<Landmark, Vec3> {
    let mut pose = neutral_pose();
    let elbow = pose[&Landmark::ElbowR];
    let (s, c) = flexion_deg.to_radians().sin_cos();
    // rotate each forearm/hand point about the x axis through the elbow
    for l in [
        Landmark::WristR,
        Landmark::MiddleKnuckleR,
        Landmark::PinkyKnuckleR,
    ] {
        let d = pose[&l] - elbow;
        let rotated = Vec3::new(d.x, d.y * c - d.z * s, d.y * s + d.z * c);
        pose.insert(l, elbow + rotated);
    }
    pose
}
