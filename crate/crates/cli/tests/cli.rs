use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use tempfile::TempDir;

use rulakit::fixtures::{neutral_pose, pose_frame, right_elbow_flexed};
use rulakit::ingest::{write_imu_csv, write_keypoint_stream};
use rulakit::{JointAngleSeries, JointChannel};

fn rulakit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rulakit"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn put(dir: &TempDir, name: &str, contents: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, contents).unwrap();
    path
}

/// 20 s at 30 Hz of smooth motion on every channel.
fn moving_series() -> JointAngleSeries {
    let n = 600;
    JointAngleSeries::from_dense(
        30.0,
        0.0,
        JointChannel::ALL.iter().enumerate().map(|(k, &c)| {
            let v = (0..n)
                .map(|i| {
                    let t = i as f64 / 30.0;
                    15.0 * (t * (0.5 + 0.1 * k as f64)).sin() + 5.0 * (t * 2.3 + k as f64).cos()
                })
                .collect();
            (c, v)
        }),
    )
    .unwrap()
}

fn neutral_csv(n: usize) -> String {
    let s = JointAngleSeries::from_dense(
        30.0,
        0.0,
        JointChannel::ALL.iter().map(|&c| (c, vec![0.0; n])),
    )
    .unwrap();
    write_imu_csv(&s)
}

/// Keypoint stream with the right elbow swinging through 20..120 degrees.
fn keypoint_stream(n: usize) -> String {
    let frames: Vec<_> = (0..n)
        .map(|i| {
            let pose = if i < 15 {
                neutral_pose()
            } else {
                right_elbow_flexed(70.0 + 50.0 * (i as f64 / 10.0).sin())
            };
            pose_frame(i as u64, i as f64 / 30.0, &pose)
        })
        .collect();
    write_keypoint_stream(&frames)
}

#[test]
fn score_neutral_imu() {
    let dir = TempDir::new().unwrap();
    let input = put(&dir, "neutral.csv", &neutral_csv(90));
    let out = dir.path().join("out");
    let o = rulakit(&["score", p(&input), "--input-rate", "30", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(
        report.contains("band_row,100.0 % / 0.0 % / 0.0 % / 0.0 %\n"),
        "{report}"
    );
    assert!(report.contains("band.negligible.percent,100.0 %\n"));
    assert!(report.contains("duration,2.967\n"));
    let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 91);
    assert!(out.join("report.json").exists());
    assert!(out.join("bands.csv").exists());
    // no temporary files left behind
    assert_eq!(fs::read_dir(&out).unwrap().count(), 4);
}

#[test]
fn score_missing_mapped_column() {
    let dir = TempDir::new().unwrap();
    let input = put(&dir, "neutral.csv", &neutral_csv(10));
    let o = rulakit(&[
        "score",
        p(&input),
        "--map",
        "RightElbow=elbow_flex_r",
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.starts_with("rulakit: error[ingest]:"), "{err}");
    assert!(err.contains("RightElbow"), "{err}");
}

#[test]
fn score_strict_rejects_missing_channels() {
    let dir = TempDir::new().unwrap();
    let s =
        JointAngleSeries::from_dense(30.0, 0.0, [(JointChannel::ArmFlexR, vec![0.0; 10])]).unwrap();
    let input = put(&dir, "partial.csv", &write_imu_csv(&s));
    let out = dir.path().join("o");
    let o = rulakit(&["score", p(&input), "--strict", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("missing"));
    let o = rulakit(&["score", p(&input), "--out", p(&out)]);
    assert!(o.status.success());
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.contains("degraded_frames,10\n"));
}

#[test]
fn score_with_annotations() {
    let dir = TempDir::new().unwrap();
    let input = put(&dir, "neutral.csv", &neutral_csv(60));
    let ann = put(
        &dir,
        "ann.csv",
        "t0,t1,arm_muscle,arm_force,neck_muscle,neck_force,legs\n1.0,2.0,0,3,0,3,1\n",
    );
    let out = dir.path().join("o");
    let o = rulakit(&[
        "score",
        p(&input),
        "--input-rate",
        "30",
        "--annotations",
        p(&ann),
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    // samples at 1.0 .. 1.9667 s get score 4
    assert!(report.contains("band.low.samples,30\n"), "{report}");
}

#[test]
fn score_keypoints() {
    let dir = TempDir::new().unwrap();
    let input = put(&dir, "kp.jsonl", &keypoint_stream(120));
    let out = dir.path().join("o");
    let o = rulakit(&["score", p(&input), "--kind", "keypoints", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.contains("source_kind,video\n"));
    assert!(report.contains("samples,120\n"));
    assert!(report.contains("summary.elbow_flex_r.max,"));
}

#[test]
fn convert_then_score_matches_direct() {
    let dir = TempDir::new().unwrap();
    let input = put(&dir, "kp.jsonl", &keypoint_stream(120));
    let csv = dir.path().join("angles.csv");
    let o = rulakit(&["convert", p(&input), "--out", p(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    let header: Vec<_> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 21);
    assert_eq!(header[0], "time");

    let (d1, d2) = (dir.path().join("direct"), dir.path().join("via_csv"));
    assert!(
        rulakit(&["score", p(&input), "--kind", "keypoints", "--out", p(&d1)])
            .status
            .success()
    );
    assert!(
        rulakit(&["score", p(&csv), "--input-rate", "30", "--out", p(&d2)])
            .status
            .success()
    );
    for name in ["report.csv", "report.json", "scores.csv", "bands.csv"] {
        let a = fs::read_to_string(d1.join(name)).unwrap();
        let b = fs::read_to_string(d2.join(name)).unwrap();
        let strip = |s: &str| s.replace("video", "SOURCE").replace("imu", "SOURCE");
        assert_eq!(strip(&a), strip(&b), "{name}");
    }
}

#[test]
fn convert_empty_fails() {
    let dir = TempDir::new().unwrap();
    let input = put(&dir, "empty.jsonl", "");
    let o = rulakit(&["convert", p(&input), "--out", p(&dir.path().join("x.csv"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("rulakit: error["));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn compare_self() {
    let dir = TempDir::new().unwrap();
    let input = put(&dir, "a.csv", &write_imu_csv(&moving_series()));
    let out = dir.path().join("cmp");
    let o = rulakit(&[
        "compare",
        "--a",
        p(&input),
        "--b",
        p(&input),
        "--input-rate",
        "30",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("metric,channel,flag,Record 1,MEAN"));
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 40);
    for row in rows.iter().filter(|r| r.starts_with("rmse,")) {
        assert!(row.ends_with(",,0.000,0.000"), "{row}");
    }
    for row in rows.iter().filter(|r| r.starts_with("correlation,")) {
        assert!(row.ends_with(",,1.000,1.000"), "{row}");
    }
    let bars = fs::read_to_string(out.join("comparison_bars.csv")).unwrap();
    assert_eq!(bars.lines().count(), 21);
}

#[test]
fn compare_reference_missing() {
    let dir = TempDir::new().unwrap();
    let input = put(&dir, "a.csv", &write_imu_csv(&moving_series()));
    let o = rulakit(&[
        "compare",
        "--a",
        p(&input),
        "--b",
        p(&input),
        "--map",
        "elbow_flex_r=elbow_flex_r",
        "--out",
        p(&dir.path().join("c")),
    ]);
    assert_eq!(o.status.code(), Some(6));
    assert!(
        stderr(&o).contains("reference channel arm_flex_r is missing"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn compare_noisy_copy() {
    let dir = TempDir::new().unwrap();
    let clean = moving_series();
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let noise = Normal::new(0.0, 5.0).unwrap();
    let noisy = JointAngleSeries::from_dense(
        30.0,
        0.0,
        clean.channels().map(|(c, v)| {
            (
                c,
                v.iter()
                    .map(|x| x.unwrap() + noise.sample(&mut rng))
                    .collect(),
            )
        }),
    )
    .unwrap();
    let a = put(&dir, "a.csv", &write_imu_csv(&clean));
    let b = put(&dir, "b.csv", &write_imu_csv(&noisy));
    let out = dir.path().join("cmp");
    let o = rulakit(&[
        "compare",
        "--a",
        p(&a),
        "--b",
        p(&b),
        "--input-rate",
        "30",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("lag 0 samples"));
    let table = fs::read_to_string(out.join("comparison.csv")).unwrap();
    for row in table.lines().filter(|r| r.starts_with("rmse,")) {
        let mean: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        // 600 samples: allow a wider band than the 10k-sample oracle
        assert!((mean - 5.0).abs() < 0.5, "{row}");
    }
}

#[test]
fn compare_multiple_runs() {
    let dir = TempDir::new().unwrap();
    let a = put(&dir, "a.csv", &write_imu_csv(&moving_series()));
    let out = dir.path().join("cmp");
    let o = rulakit(&[
        "compare",
        "--a",
        p(&a),
        "--b",
        p(&a),
        "--a",
        p(&a),
        "--b",
        p(&a),
        "--input-rate",
        "30",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert!(table.starts_with("metric,channel,flag,Record 1,Record 2,MEAN\n"));
    assert!(out.join("run_2.json").exists());
    let o = rulakit(&[
        "compare",
        "--a",
        p(&a),
        "--a",
        p(&a),
        "--b",
        p(&a),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_config_default() {
    let o = rulakit(&["check-config"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("ok\nchecksum "));
    assert!(text.contains("table_a "));
}

fn default_config() -> String {
    fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../core/config/rula.toml"
    ))
    .unwrap()
}

#[test]
fn check_config_table_hole() {
    let dir = TempDir::new().unwrap();
    let cfg = default_config().replacen("[1, 2, 2, 2, 2, 3, 3, 3],", "[1, 2, 2, 2, 2, 3, 3],", 1);
    let path = put(&dir, "hole.toml", &cfg);
    let o = rulakit(&["check-config", p(&path)]);
    assert_eq!(o.status.code(), Some(5));
    assert!(
        stdout(&o).contains("table_a[arm=1 forearm=1 wrist=4 twist=2]: missing cell"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn check_config_overlap() {
    let dir = TempDir::new().unwrap();
    let cfg = default_config().replace(
        "{ lo = 10.0, hi = 20.0, score = 2 }",
        "{ lo = 5.0, hi = 20.0, score = 2 }",
    );
    let path = put(&dir, "overlap.toml", &cfg);
    let o = rulakit(&["check-config", p(&path)]);
    assert_eq!(o.status.code(), Some(5));
    let text = stdout(&o);
    assert!(
        text.contains("range.neck: intervals [-5, 10) and [5, 20) overlap"),
        "{text}"
    );
}

#[test]
fn unreadable_input() {
    let o = rulakit(&["score", "/nonexistent/file.csv", "--out", "/tmp/never"]);
    assert_eq!(o.status.code(), Some(8));
    assert!(stderr(&o).starts_with("rulakit: error[io]:"));
}
