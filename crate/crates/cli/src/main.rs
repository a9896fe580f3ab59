use std::fs;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pianofinger_core::export::{export_annotations, ExportFormat};
use pianofinger_core::geometry::Calibration;
use pianofinger_core::midi::{write_midi, WriteOptions};
use pianofinger_core::payload::{decode_control_payload, encode_control_payload, ControlPayload};
use pianofinger_core::session::{
    valid_session_id, write_atomic, FileRefs, PieceMeta, SessionDir, SessionManifest, StoreError,
    SyncRecord, ANNOTATIONS_FILE, SCHEMA_VERSION,
};
use pianofinger_core::{apply_offset_to_midi, cross_correlate_offset, decode_wav, parse_midi, pipeline};
use pianofinger_service::{serve, ServiceConfig};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "pianofinger", version, about = "Piano performance capture and fingering annotation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Output {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the DAW-to-video offset and record it in the session manifest.
    Align {
        #[arg(long)]
        session_dir: PathBuf,
        #[arg(long)]
        midi: PathBuf,
        /// WAV extracted from the video container.
        #[arg(long)]
        reference: PathBuf,
        /// WAV recorded by the DAW alongside the MIDI.
        #[arg(long)]
        other: PathBuf,
        #[arg(long)]
        video: Option<PathBuf>,
        #[arg(long)]
        skeleton: Option<PathBuf>,
        /// Used only when the session is new.
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
        #[arg(long, default_value = "unknown")]
        profile_id: String,
        /// Also write the MIDI shifted onto the video timeline.
        #[arg(long)]
        trimmed_midi: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Output::Text)]
        output: Output,
    },
    /// Store a keystone calibration document for a session.
    Calibrate {
        #[arg(long)]
        session_dir: PathBuf,
        #[arg(long)]
        keystones: PathBuf,
    },
    /// Score every note and write candidate fingerings.
    Prelabel {
        #[arg(long)]
        session_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Output::Text)]
        output: Output,
    },
    /// Write annotations as CSV.
    Export {
        #[arg(long)]
        session_dir: PathBuf,
        #[arg(long, default_value = "full")]
        format: String,
        /// Standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encode or decode recorder control payloads.
    Payload {
        #[command(subcommand)]
        action: PayloadAction,
    },
    /// Run the annotation HTTP service.
    Serve {
        #[arg(long)]
        store_root: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long)]
        media_root: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum PayloadAction {
    Profile { profile_id: String },
    Play,
    Stop,
    Decode { text: String },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    fn data(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<StoreError> for CliError {
    fn from(err: StoreError) -> Self {
        match err {
            StoreError::Io { path, source } => CliError::Io { path, source },
            StoreError::Document { .. }
            | StoreError::UnsupportedSchema { .. }
            | StoreError::Calibration(_)
            | StoreError::Midi(_)
            | StoreError::Skeleton(_) => CliError::Data(err.to_string()),
            StoreError::SessionNotFound(_)
            | StoreError::InvalidId(_)
            | StoreError::IncompleteSession(_)
            | StoreError::PreconditionFailed(_) => CliError::Usage(err.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn absolute(path: &Path) -> String {
    std::path::absolute(path)
        .unwrap_or_else(|_| path.to_path_buf())
        .display()
        .to_string()
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

#[allow(clippy::too_many_arguments)]
fn align(
    session_dir: &Path,
    midi: &Path,
    reference: &Path,
    other: &Path,
    video: Option<&Path>,
    skeleton: Option<&Path>,
    fps: f64,
    profile_id: String,
    trimmed_midi: Option<&Path>,
    output: Output,
) -> Result<()> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(CliError::Usage(format!("invalid fps {fps}")));
    }
    let perf = parse_midi(&read(midi)?).map_err(|e| CliError::data(midi, e))?;
    let ref_audio = decode_wav(&read(reference)?).map_err(|e| CliError::data(reference, e))?;
    let other_audio = decode_wav(&read(other)?).map_err(|e| CliError::data(other, e))?;
    let result = cross_correlate_offset(&ref_audio, &other_audio)
        .map_err(|e| CliError::Data(format!("alignment: {e}")))?;
    let sync = SyncRecord::from_result(&result, other_audio.sample_rate);

    let mut manifest = match SessionDir::open(session_dir) {
        Ok(dir) => dir.manifest()?,
        Err(_) => {
            let name = session_dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let session_id = if valid_session_id(&name) {
                name
            } else {
                return Err(CliError::Usage(format!(
                    "session directory name {name:?} is not a valid session id"
                )));
            };
            SessionManifest {
                schema_version: SCHEMA_VERSION,
                session_id,
                profile_id,
                piece: PieceMeta::default(),
                files: FileRefs::default(),
                fps,
                sync: None,
                annotation_state: ANNOTATIONS_FILE.into(),
                created_at: chrono::Utc::now(),
            }
        }
    };
    manifest.files.midi = Some(absolute(midi));
    manifest.files.audio_video = Some(absolute(reference));
    manifest.files.audio_daw = Some(absolute(other));
    if let Some(v) = video {
        manifest.files.video = Some(absolute(v));
    }
    if let Some(s) = skeleton {
        manifest.files.skeleton = Some(absolute(s));
    }
    manifest.sync = Some(sync.clone());
    SessionDir::init(session_dir, &manifest)?;

    if let Some(path) = trimmed_midi {
        let shifted = apply_offset_to_midi(&perf, sync.midi_offset_s);
        write_atomic(path, &write_midi(&shifted, WriteOptions::default()))?;
    }

    match output {
        Output::Json => print_json(&sync),
        Output::Text => println!(
            "lag {} samples ({:.6} s) at {} Hz; midi offset {:+.6} s; peak {:.4}; confidence {:.3}",
            sync.lag_samples,
            sync.lag_s,
            sync.reference_sample_rate,
            sync.midi_offset_s,
            sync.peak_correlation,
            sync.confidence
        ),
    }
    Ok(())
}

fn calibrate(session_dir: &Path, keystones: &Path) -> Result<()> {
    let calibration: Calibration =
        serde_json::from_slice(&read(keystones)?).map_err(|e| CliError::data(keystones, e))?;
    let layout = SessionDir::open(session_dir)?.put_calibration(&calibration)?;
    println!("{} key regions", layout.regions().len());
    Ok(())
}

fn prelabel(session_dir: &Path, output: Output) -> Result<()> {
    let stats = pipeline::prelabel_session(&SessionDir::open(session_dir)?)?;
    match output {
        Output::Json => print_json(&stats),
        Output::Text => {
            let by = |m: &std::collections::BTreeMap<String, usize>| {
                m.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
            };
            println!("{} notes; {}; {}", stats.total, by(&stats.by_outcome), by(&stats.by_status));
        }
    }
    Ok(())
}

fn export(session_dir: &Path, format: &str, out: Option<&Path>) -> Result<()> {
    let format: ExportFormat = format.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
    let doc = SessionDir::open(session_dir)?.annotations()?;
    let csv = export_annotations(&doc, format);
    match out {
        Some(path) => write_atomic(path, csv.as_bytes())?,
        None => std::io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|source| CliError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })?,
    }
    Ok(())
}

fn payload(action: PayloadAction) -> Result<()> {
    let encode = |p: ControlPayload| encode_control_payload(&p).map_err(|e| CliError::Usage(e.to_string()));
    match action {
        PayloadAction::Profile { profile_id } => println!("{}", encode(ControlPayload::profile(profile_id))?),
        PayloadAction::Play => println!("{}", encode(ControlPayload::play())?),
        PayloadAction::Stop => println!("{}", encode(ControlPayload::stop())?),
        PayloadAction::Decode { text } => {
            let p = decode_control_payload(&text).map_err(|e| CliError::Data(e.to_string()))?;
            print_json(&p);
        }
    }
    Ok(())
}

fn run_serve(store_root: PathBuf, bind: SocketAddr, media_root: Option<PathBuf>) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Other(e.to_string()))?;
    runtime
        .block_on(serve(ServiceConfig {
            store_root,
            bind,
            media_root,
        }))
        .map_err(|e| match e {
            pianofinger_service::ServiceError::Store(s) => s.into(),
            other => CliError::Other(other.to_string()),
        })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Align {
            session_dir,
            midi,
            reference,
            other,
            video,
            skeleton,
            fps,
            profile_id,
            trimmed_midi,
            output,
        } => align(
            &session_dir,
            &midi,
            &reference,
            &other,
            video.as_deref(),
            skeleton.as_deref(),
            fps,
            profile_id,
            trimmed_midi.as_deref(),
            output,
        ),
        Command::Calibrate {
            session_dir,
            keystones,
        } => calibrate(&session_dir, &keystones),
        Command::Prelabel {
            session_dir,
            output,
        } => prelabel(&session_dir, output),
        Command::Export {
            session_dir,
            format,
            out,
        } => export(&session_dir, &format, out.as_deref()),
        Command::Payload { action } => payload(action),
        Command::Serve {
            store_root,
            bind,
            media_root,
        } => run_serve(store_root, bind, media_root),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pianofinger: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
