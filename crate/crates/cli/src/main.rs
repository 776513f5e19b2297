use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rulakit::geometry::{compute_angle_series, AngleDefinitions, GeometryError, SeriesOptions};
use rulakit::ingest::{
    parse_annotations, parse_imu_joint_csv, parse_keypoint_stream, resample, write_imu_csv,
    ImuCsvSpec, IngestError, KeypointStreamSpec,
};
use rulakit::report::{
    band_share_csv, comparison_bars_csv, emit_comparison_report, emit_pairwise,
    emit_session_report, score_series_csv, Format, ReportError, SessionReport, SourceKind,
};
use rulakit::rula::{default_config_text, score_timeline, MissingPolicy, RulaConfig, RulaError};
use rulakit::sync::{
    compare_recordings, summarize_runs, CompareOptions, CorrelationMode, SyncError,
};
use rulakit::{AnnotationTrack, JointAngleSeries, JointChannel};

#[derive(Parser)]
#[command(
    name = "rulakit",
    version,
    about = "RULA scoring and capture-system comparison"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    ImuCsv,
    Keypoints,
}

#[derive(clap::Args)]
struct InputArgs {
    /// Sample rate of IMU CSV rows, or frame rate for keypoint records without `t`.
    #[arg(long, value_name = "HZ")]
    input_rate: Option<f64>,
    /// Map a CSV column to a channel; repeatable. Without it, columns named
    /// after channels are used.
    #[arg(long = "map", value_name = "HEADER=CHANNEL")]
    map: Vec<String>,
    /// Complete frames averaged for the keypoint baseline.
    #[arg(long, value_name = "N", default_value_t = rulakit::geometry::DEFAULT_BASELINE_FRAMES)]
    baseline_frames: usize,
    /// Angle definition file (TOML) replacing the built-in one.
    #[arg(long, value_name = "PATH")]
    angles: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Score one recording and write a session report with plot data.
    Score {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "imu-csv")]
        kind: Kind,
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        annotations: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Resample to this rate before scoring.
        #[arg(long, value_name = "HZ")]
        rate: Option<f64>,
        /// Fail on frames with missing channels instead of scoring them degraded.
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        input_args: InputArgs,
    },
    /// Compare recordings from two capture systems, run by run.
    Compare {
        /// First-system recording; repeat once per run.
        #[arg(long = "a", value_name = "PATH", required = true)]
        a: Vec<PathBuf>,
        /// Second-system recording, paired with the --a of the same position.
        #[arg(long = "b", value_name = "PATH", required = true)]
        b: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "imu-csv")]
        kind_a: Kind,
        #[arg(long, value_enum, default_value = "imu-csv")]
        kind_b: Kind,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Common rate; defaults to the rate of the --a recording.
        #[arg(long, value_name = "HZ")]
        rate: Option<f64>,
        #[arg(long, value_name = "SECONDS", default_value_t = 10.0)]
        max_lag: f64,
        #[arg(long, value_name = "SECONDS", default_value_t = 5.0)]
        min_overlap: f64,
        #[arg(long, value_name = "CHANNEL", default_value = "arm_flex_r")]
        reference: String,
        /// Report the peak of the cross-correlation instead of the zero-lag value.
        #[arg(long)]
        peak: bool,
        #[command(flatten)]
        input_args: InputArgs,
    },
    /// Compute joint angles from keypoints and write them as an IMU-layout CSV.
    Convert {
        input: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[command(flatten)]
        input_args: InputArgs,
    },
    /// Validate a scoring config and print its checksums.
    CheckConfig {
        /// Defaults to the built-in config.
        path: Option<PathBuf>,
    },
}

/// A failed run: category for the diagnostic prefix plus exit code.
struct Failure {
    kind: &'static str,
    code: u8,
    message: String,
}

impl Failure {
    fn new(kind: &'static str, code: u8, message: impl Into<String>) -> Self {
        Self {
            kind,
            code,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new("usage", 2, message)
    }
}

macro_rules! failure_from {
    ($($ty:ty => $kind:literal, $code:literal;)*) => {$(
        impl From<$ty> for Failure {
            fn from(e: $ty) -> Self {
                Failure::new($kind, $code, e.to_string())
            }
        }
    )*};
}

failure_from! {
    IngestError => "ingest", 3;
    GeometryError => "geometry", 4;
    RulaError => "config", 5;
    SyncError => "sync", 6;
    ReportError => "report", 7;
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::new("io", 8, format!("{}: {e}", path.display())))
}

/// Write via a temporary sibling and rename into place.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::new("io", 8, format!("{}: {e}", path.display()));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn out_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::new("io", 8, format!("{}: {e}", dir.display())))
}

fn positive_rate(name: &str, rate: Option<f64>) -> Result<Option<f64>, Failure> {
    match rate {
        Some(r) if !(r.is_finite() && r > 0.0) => Err(Failure::usage(format!(
            "--{name} must be a positive number, got {r}"
        ))),
        r => Ok(r),
    }
}

fn load_series(path: &Path, kind: Kind, args: &InputArgs) -> Result<JointAngleSeries, Failure> {
    let bytes = read(path)?;
    let input_rate = positive_rate("input-rate", args.input_rate)?;
    match kind {
        Kind::ImuCsv => {
            let mut spec = ImuCsvSpec::default();
            if let Some(r) = input_rate {
                spec.declared_rate = r;
            }
            if !args.map.is_empty() {
                let mut columns = BTreeMap::new();
                for m in &args.map {
                    let (header, channel) = m.split_once('=').ok_or_else(|| {
                        Failure::usage(format!("--map expects HEADER=CHANNEL, got `{m}`"))
                    })?;
                    let channel: JointChannel = channel.parse().map_err(|_| {
                        Failure::usage(format!("--map: unknown channel `{channel}`"))
                    })?;
                    columns.insert(header.to_string(), channel);
                }
                spec.channel_columns = Some(columns);
            }
            Ok(parse_imu_joint_csv(&bytes, &spec)?.series)
        }
        Kind::Keypoints => {
            let defs = match &args.angles {
                Some(p) => AngleDefinitions::from_toml_str(&String::from_utf8_lossy(&read(p)?))?,
                None => AngleDefinitions::default(),
            };
            let mut spec = KeypointStreamSpec {
                required: defs.required_landmarks(),
                ..KeypointStreamSpec::default()
            };
            if let Some(r) = input_rate {
                spec.frame_rate = r;
            }
            let frames = parse_keypoint_stream(&bytes, &spec)?;
            if frames.is_empty() {
                return Err(IngestError::EmptyFile.into());
            }
            let options = SeriesOptions {
                baseline_frames: args.baseline_frames,
                fallback_rate: spec.frame_rate,
            };
            Ok(compute_angle_series(&frames, &defs, options)?.series)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RulaConfig, Failure> {
    match path {
        Some(p) => Ok(RulaConfig::from_toml_str(&String::from_utf8_lossy(&read(
            p,
        )?))?),
        None => Ok(RulaConfig::default()),
    }
}

fn source_kind(kind: Kind) -> SourceKind {
    match kind {
        Kind::ImuCsv => SourceKind::Imu,
        Kind::Keypoints => SourceKind::Video,
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_score(
    input: &Path,
    kind: Kind,
    config: Option<&Path>,
    annotations: Option<&Path>,
    out: &Path,
    rate: Option<f64>,
    strict: bool,
    args: &InputArgs,
) -> Result<(), Failure> {
    let rate = positive_rate("rate", rate)?;
    let cfg = load_config(config)?;
    let track = match annotations {
        Some(p) => parse_annotations(&read(p)?)?,
        None => AnnotationTrack::default(),
    };
    let mut series = load_series(input, kind, args)?;
    if let Some(r) = rate {
        series = resample(&series, r)?;
    }
    let policy = if strict {
        MissingPolicy::Strict
    } else {
        MissingPolicy::Lenient
    };
    let timeline = score_timeline(&series, &track, &cfg, policy)?;

    let mut settings = BTreeMap::from([("strict".to_string(), strict.to_string())]);
    if let Some(p) = config {
        settings.insert("config".into(), p.display().to_string());
    }
    if let Some(p) = annotations {
        settings.insert("annotations".into(), p.display().to_string());
    }
    if let Some(r) = rate {
        settings.insert("rate".into(), r.to_string());
    }
    let report = SessionReport::new(&timeline, &series, &cfg, source_kind(kind), settings)?;

    out_dir(out)?;
    write_atomic(
        &out.join("report.json"),
        &emit_session_report(&report, Format::Structured),
    )?;
    write_atomic(
        &out.join("report.csv"),
        &emit_session_report(&report, Format::Delimited),
    )?;
    write_atomic(&out.join("scores.csv"), &score_series_csv(&timeline)?)?;
    write_atomic(&out.join("bands.csv"), &band_share_csv(&timeline)?)?;
    println!("{} samples, {}", timeline.len(), report.band_row);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare(
    a: &[PathBuf],
    b: &[PathBuf],
    kinds: (Kind, Kind),
    out: &Path,
    rate: Option<f64>,
    opts: CompareOptions,
    args: &InputArgs,
) -> Result<(), Failure> {
    if a.len() != b.len() {
        return Err(Failure::usage(format!(
            "{} --a inputs but {} --b inputs",
            a.len(),
            b.len()
        )));
    }
    let rate = positive_rate("rate", rate)?;
    let mut reports = Vec::with_capacity(a.len());
    for (pa, pb) in a.iter().zip(b) {
        let mut sa = load_series(pa, kinds.0, args)?;
        let mut sb = load_series(pb, kinds.1, args)?;
        let target = rate.unwrap_or(sa.sample_rate());
        if sa.sample_rate() != target {
            sa = resample(&sa, target)?;
        }
        if sb.sample_rate() != target {
            sb = resample(&sb, target)?;
        }
        reports.push(compare_recordings(&sa, &sb, &opts)?);
    }
    let summary = summarize_runs(&reports)?;
    out_dir(out)?;
    for (i, r) in reports.iter().enumerate() {
        write_atomic(&out.join(format!("run_{}.json", i + 1)), &emit_pairwise(r))?;
    }
    write_atomic(
        &out.join("comparison.json"),
        &emit_comparison_report(&summary, Format::Structured),
    )?;
    write_atomic(
        &out.join("comparison.csv"),
        &emit_comparison_report(&summary, Format::Delimited),
    )?;
    write_atomic(
        &out.join("comparison_bars.csv"),
        &comparison_bars_csv(&summary)?,
    )?;
    for (i, r) in reports.iter().enumerate() {
        println!(
            "run {}: lag {} samples ({:.3} s)",
            i + 1,
            r.lag,
            r.lag_seconds()
        );
    }
    Ok(())
}

fn cmd_convert(input: &Path, out: &Path, args: &InputArgs) -> Result<(), Failure> {
    let series = load_series(input, Kind::Keypoints, args)?;
    write_atomic(out, &write_imu_csv(&series))?;
    println!("{} samples at {} Hz", series.len(), series.sample_rate());
    Ok(())
}

fn cmd_check_config(path: Option<&Path>) -> Result<(), Failure> {
    let text = match path {
        Some(p) => String::from_utf8_lossy(&read(p)?).into_owned(),
        None => default_config_text().to_string(),
    };
    match RulaConfig::from_toml_str(&text) {
        Ok(cfg) => {
            println!("ok");
            println!("checksum {}", cfg.checksum());
            for (name, sum) in cfg.table_checksums() {
                println!("{name} {sum}");
            }
            Ok(())
        }
        Err(RulaError::InvalidConfig(issues)) => {
            for issue in &issues {
                println!("{issue}");
            }
            Err(Failure::new(
                "config",
                5,
                format!("{} problem(s) found", issues.len()),
            ))
        }
        Err(e) => Err(e.into()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Score {
            input,
            kind,
            config,
            annotations,
            out,
            rate,
            strict,
            input_args,
        } => cmd_score(
            &input,
            kind,
            config.as_deref(),
            annotations.as_deref(),
            &out,
            rate,
            strict,
            &input_args,
        ),
        Command::Compare {
            a,
            b,
            kind_a,
            kind_b,
            out,
            rate,
            max_lag,
            min_overlap,
            reference,
            peak,
            input_args,
        } => {
            let reference: JointChannel = reference.parse().map_err(|_| {
                Failure::usage(format!("--reference: unknown channel `{reference}`"))
            })?;
            if !(max_lag.is_finite() && max_lag >= 0.0)
                || !(min_overlap.is_finite() && min_overlap >= 0.0)
            {
                return Err(Failure::usage(
                    "--max-lag and --min-overlap must be non-negative",
                ));
            }
            let opts = CompareOptions {
                reference,
                max_lag_seconds: max_lag,
                min_overlap_seconds: min_overlap,
                correlation_mode: if peak {
                    CorrelationMode::PeakCrossCorrelation
                } else {
                    CorrelationMode::ZeroLag
                },
                ..CompareOptions::default()
            };
            cmd_compare(&a, &b, (kind_a, kind_b), &out, rate, opts, &input_args)
        }
        Command::Convert {
            input,
            out,
            input_args,
        } => cmd_convert(&input, &out, &input_args),
        Command::CheckConfig { path } => cmd_check_config(path.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!(
                "rulakit: error[{}]: {}",
                f.kind,
                f.message.replace('\n', " ")
            );
            ExitCode::from(f.code)
        }
    }
}
