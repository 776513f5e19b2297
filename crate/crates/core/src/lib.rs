//! Ergonomic risk assessment from motion capture.
//!
//! Joint angles come either from IMU exports (`ingest::parse_imu_joint_csv`)
//! or are computed from 3D pose keypoints (`geometry`). They are scored per
//! frame with a data-driven RULA engine (`rula`), compared across capture
//! systems (`sync`), and rendered into reports and plot data (`report`).

pub mod fixtures;
pub mod geometry;
pub mod ingest;
pub mod model;
pub mod report;
pub mod rula;
pub mod sync;

pub use model::{
    channel_side, channel_summary, AnnotationInterval, AnnotationTrack, ChannelSummary,
    JointAngleSeries, JointChannel, KeypointFrame, Landmark, Side, TaskFactors, Vec3,
};
