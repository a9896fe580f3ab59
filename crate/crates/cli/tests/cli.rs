use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pianofinger_core::audio::encode_wav_pcm16;
use pianofinger_core::fingering::Finger;
use pianofinger_core::midi::{parse_midi, write_midi, WriteOptions};
use pianofinger_core::session::{SessionDir, SessionManifest};
use pianofinger_core::skeleton::write_skeletons;
use pianofinger_core::{synth, AudioBuffer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pianofinger"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Noise at 8 kHz, and a copy delayed by `delay` samples.
fn write_audio(dir: &Path, delay: usize) -> (std::path::PathBuf, std::path::PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Vec<f32> = (0..8_000).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let mut y = vec![0.0; delay];
    y.extend_from_slice(&x[..x.len() - delay]);
    let reference = dir.join("video.wav");
    let other = dir.join("daw.wav");
    fs::write(&reference, encode_wav_pcm16(&AudioBuffer::new(x, 8_000).unwrap())).unwrap();
    fs::write(&other, encode_wav_pcm16(&AudioBuffer::new(y, 8_000).unwrap())).unwrap();
    (reference, other)
}

fn write_take(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
    let layout = synth::demo_calibration().build().unwrap();
    let perf = synth::performance(vec![
        synth::note(60, 0.5, 1.0),
        synth::note(64, 1.0, 1.5),
        synth::note(67, 1.5, 2.0),
    ]);
    let fingers: Vec<Finger> = [5, 7, 9].iter().map(|&i| Finger::new(i).unwrap()).collect();
    let track = synth::planted_track(&layout, &perf, &fingers, 30.0, 0.0);
    let midi = dir.join("take.mid");
    let hands = dir.join("hands.jsonl");
    let keys = dir.join("keys.json");
    fs::write(&midi, write_midi(&perf, WriteOptions::default())).unwrap();
    fs::write(&hands, write_skeletons(&track)).unwrap();
    fs::write(&keys, serde_json::to_vec(&synth::demo_calibration()).unwrap()).unwrap();
    (midi, hands, keys)
}

#[test]
fn align_identical_files_reports_zero_lag() {
    let tmp = tempfile::tempdir().unwrap();
    let (reference, _) = write_audio(tmp.path(), 0);
    let (midi, _, _) = write_take(tmp.path());
    let session = tmp.path().join("take1");
    let out = run(&[
        "align", "--session-dir", s(&session), "--midi", s(&midi),
        "--reference", s(&reference), "--other", s(&reference), "--output", "json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["lag_samples"], 0);
    assert_eq!(v["lag_s"], 0.0);
    assert!((v["peak_correlation"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn align_records_sync_and_trims_midi() {
    let tmp = tempfile::tempdir().unwrap();
    let (reference, other) = write_audio(tmp.path(), 400);
    let (midi, hands, _) = write_take(tmp.path());
    let session = tmp.path().join("take1");
    let trimmed = tmp.path().join("aligned.mid");
    let out = run(&[
        "align", "--session-dir", s(&session), "--midi", s(&midi),
        "--reference", s(&reference), "--other", s(&other),
        "--skeleton", s(&hands), "--trimmed-midi", s(&trimmed),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("lag 400 samples (0.050000 s)"), "{}", stdout(&out));

    let m: SessionManifest = SessionDir::open(&session).unwrap().manifest().unwrap();
    assert_eq!(m.session_id, "take1");
    let sync = m.sync.unwrap();
    assert_eq!(sync.lag_samples, 400);
    assert_eq!(sync.midi_offset_s, -0.05);
    assert_eq!(sync.reference_stream, "video_audio");
    assert!(m.files.skeleton.is_some());
    assert!(session.join("annotations.json").is_file());

    // DAW audio lags the video by 50 ms, so MIDI moves 50 ms earlier.
    let shifted = parse_midi(&fs::read(&trimmed).unwrap()).unwrap();
    assert!((shifted.notes[0].onset_s - 0.45).abs() < 1e-3);

    // Re-aligning an existing session keeps its identity.
    let out = run(&[
        "align", "--session-dir", s(&session), "--midi", s(&midi),
        "--reference", s(&reference), "--other", s(&reference),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let again = SessionDir::open(&session).unwrap().manifest().unwrap();
    assert_eq!(again.created_at, m.created_at);
    assert_eq!(again.sync.unwrap().lag_samples, 0);
}

#[test]
fn align_rejects_silence() {
    let tmp = tempfile::tempdir().unwrap();
    let (reference, _) = write_audio(tmp.path(), 0);
    let (midi, _, _) = write_take(tmp.path());
    let silent = tmp.path().join("silent.wav");
    fs::write(&silent, encode_wav_pcm16(&AudioBuffer::new(vec![0.0; 800], 8_000).unwrap())).unwrap();
    let out = run(&[
        "align", "--session-dir", s(&tmp.path().join("x")), "--midi", s(&midi),
        "--reference", s(&reference), "--other", s(&silent),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("degenerate"), "{}", stderr(&out));
}

#[test]
fn align_reports_parse_and_io_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let (reference, _) = write_audio(tmp.path(), 0);
    let bad = tmp.path().join("bad.mid");
    fs::write(&bad, b"not midi").unwrap();
    let out = run(&[
        "align", "--session-dir", s(&tmp.path().join("x")), "--midi", s(&bad),
        "--reference", s(&reference), "--other", s(&reference),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("bad.mid"));

    let out = run(&[
        "align", "--session-dir", s(&tmp.path().join("x")), "--midi", s(&tmp.path().join("missing.mid")),
        "--reference", s(&reference), "--other", s(&reference),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn calibrate_prelabel_export() {
    let tmp = tempfile::tempdir().unwrap();
    let (reference, _) = write_audio(tmp.path(), 0);
    let (midi, hands, keys) = write_take(tmp.path());
    let session = tmp.path().join("take1");
    let out = run(&[
        "align", "--session-dir", s(&session), "--midi", s(&midi), "--reference", s(&reference),
        "--other", s(&reference), "--skeleton", s(&hands),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let out = run(&["prelabel", "--session-dir", s(&session)]);
    assert_eq!(out.status.code(), Some(2), "prelabel without keystones");
    assert!(stderr(&out).contains("keystones"));

    let out = run(&["calibrate", "--session-dir", s(&session), "--keystones", s(&keys)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "88 key regions");

    let out = run(&["prelabel", "--session-dir", s(&session), "--output", "json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let stats: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(stats["total"], 3);
    assert_eq!(stats["by_outcome"]["single"], 3);

    let csv = tmp.path().join("labels.csv");
    let out = run(&["export", "--session-dir", s(&session), "--format", "labels", "--out", s(&csv)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(&csv).unwrap(), "note_index,label\n0,R1\n1,R3\n2,R5\n");

    let out = run(&["export", "--session-dir", s(&session)]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 4);

    let out = run(&["export", "--session-dir", s(&session), "--format", "xml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn payload_round_trip() {
    let out = run(&["payload", "profile", "alice-01"]);
    assert!(out.status.success());
    let text = stdout(&out).trim().to_string();
    assert_eq!(text, "PIAREC:1:PROFILE:alice-01");
    let out = run(&["payload", "decode", &text]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["profile_id"], "alice-01");
    let out = run(&["payload", "decode", "HELLO"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn serve_fails_fast() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["serve", "--store-root", s(&tmp.path().join("absent")), "--bind", "127.0.0.1:0"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("absent"), "{}", stderr(&out));

    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = held.local_addr().unwrap().to_string();
    let out = run(&["serve", "--store-root", s(tmp.path()), "--bind", &addr]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cannot bind"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["prelabel"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["prelabel", "--session-dir", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn serve_answers_requests() {
    use std::io::{Read, Write};
    let tmp = tempfile::tempdir().unwrap();
    let addr = {
        let probe = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        probe.local_addr().unwrap()
    };
    let mut child = Command::new(env!("CARGO_BIN_EXE_pianofinger"))
        .args(["serve", "--store-root", s(tmp.path()), "--bind", &addr.to_string()])
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let deadline = std::time::Instant::now() + std::time::Duration::from_secs(10);
    let response = loop {
        if let Ok(mut stream) = std::net::TcpStream::connect(addr) {
            stream
                .write_all(b"GET /api/v1/sessions HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
                .unwrap();
            let mut body = String::new();
            stream.read_to_string(&mut body).unwrap();
            break body;
        }
        assert!(std::time::Instant::now() < deadline, "service never listened");
        std::thread::sleep(std::time::Duration::from_millis(50));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.ends_with("[]"), "{response}");
}
