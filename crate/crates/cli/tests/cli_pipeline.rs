//! Happy-path behavior of each subcommand, driven through the real binary.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::Duration;

fn facekit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facekit"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "command failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Ten-frame, two-vertex position animation with a smooth y ramp on the
/// first vertex, plus a matching model whose neutral is frame 0.
fn write_position_scene(dir: &Path) {
    let frames: Vec<String> = (0..10)
        .map(|t| format!("[0, {}, 0, 0, 1, 0]", 0.05 * t as f64))
        .collect();
    std::fs::write(
        dir.join("anim.json"),
        format!(
            r#"{{"frame_rate": 30, "is_delta": false, "frames": [{}]}}"#,
            frames.join(", ")
        ),
    )
    .unwrap();
    std::fs::write(
        dir.join("model.json"),
        r#"{
  "vertex_count": 2,
  "neutral": [0, 0, 0, 0, 1, 0],
  "shapes": [{"name": "raise", "delta": [0, 1, 0, 0, 0, 0]}],
  "features": [{"name": "mouth", "kind": "pair", "vertices": [0, 1], "range": 2.0}]
}"#,
    )
    .unwrap();
}

#[test]
fn metrics_report_scores_pred_equal_to_gt_as_zero_distance() {
    let dir = tempfile::tempdir().unwrap();
    write_position_scene(dir.path());

    let output = facekit(
        &[
            "metrics",
            "--animation",
            "anim.json",
            "--gt",
            "anim.json",
            "--model",
            "model.json",
            "--out",
            "report.json",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["frechet_distance"].as_f64(), Some(0.0));
    // The model declares a feature, so expressiveness must be present.
    assert!(report["expressiveness"].is_number());
    // No alignment was given, so the bilabial field must be absent.
    assert!(report.get("bilabial_score").is_none());
}

#[test]
fn metrics_scores_a_constant_clip_as_zero_jitter() {
    let dir = tempfile::tempdir().unwrap();
    write_position_scene(dir.path());
    let frames = ["[0, 0, 0, 0, 1, 0]"; 12].join(", ");
    std::fs::write(
        dir.path().join("flat.json"),
        format!(r#"{{"frame_rate": 30, "is_delta": false, "frames": [{frames}]}}"#),
    )
    .unwrap();

    let output = facekit(
        &[
            "metrics",
            "--animation",
            "flat.json",
            "--model",
            "model.json",
            "--out",
            "report.json",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["fourier_jitter"].as_f64(), Some(0.0));
}

#[test]
fn lip_gap_csv_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    write_position_scene(dir.path());
    std::fs::write(
        dir.path().join("two.json"),
        concat!(
            r#"{"frame_rate": 2, "is_delta": false, "frames": "#,
            r#"[[0, 0, 0, 0, 1, 0], [0, 0.5, 0, 0, 1, 0], [0, 0, 0, 0, 1, 0], [0, 0.5, 0, 0, 1, 0], "#,
            r#"[0, 0, 0, 0, 1, 0], [0, 0.5, 0, 0, 1, 0], [0, 0, 0, 0, 1, 0], [0, 0.5, 0, 0, 1, 0]]}"#
        ),
    )
    .unwrap();
    std::fs::write(
        dir.path().join("config.json"),
        r#"{"metrics": {"lip_pairs": [[1, 0]], "central_pair": 0}}"#,
    )
    .unwrap();

    let output = facekit(
        &[
            "metrics",
            "--animation",
            "two.json",
            "--model",
            "model.json",
            "--config",
            "config.json",
            "--out",
            "report.json",
            "--lipgap-csv",
            "gaps.csv",
            "--cutoff-hz",
            "0.5",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let csv = std::fs::read_to_string(dir.path().join("gaps.csv")).unwrap();
    let expected = "frame,time_s,gap_0_mm\n\
                    0,0,1\n1,0.5,0.5\n2,1,1\n3,1.5,0.5\n\
                    4,2,1\n5,2.5,0.5\n6,3,1\n7,3.5,0.5\n";
    assert_eq!(csv, expected);
}

#[test]
fn postprocess_with_neutral_params_reproduces_the_input() {
    let dir = tempfile::tempdir().unwrap();
    write_position_scene(dir.path());
    std::fs::write(dir.path().join("params.json"), "{}").unwrap();

    let output = facekit(
        &[
            "postprocess",
            "--animation",
            "anim.json",
            "--params",
            "params.json",
            "--model",
            "model.json",
            "--out",
            "clean.json",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let before = read_json(&dir.path().join("anim.json"));
    let after = read_json(&dir.path().join("clean.json"));
    let a = before["frames"].as_array().unwrap();
    let b = after["frames"].as_array().unwrap();
    assert_eq!(a.len(), b.len());
    for (fa, fb) in a.iter().zip(b) {
        for (va, vb) in fa.as_array().unwrap().iter().zip(fb.as_array().unwrap()) {
            let (x, y) = (va.as_f64().unwrap(), vb.as_f64().unwrap());
            assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
        }
    }
}

#[test]
fn postprocess_with_zero_skin_strength_flattens_deltas() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("anim.json"),
        r#"{"frame_rate": 30, "is_delta": true, "frames": [[0.3, -0.7, 2.0], [1.0, 0.5, -0.25]]}"#,
    )
    .unwrap();
    std::fs::write(dir.path().join("params.json"), r#"{"skin_strength": 0.0}"#).unwrap();

    let output = facekit(
        &[
            "postprocess",
            "--animation",
            "anim.json",
            "--params",
            "params.json",
            "--out",
            "flat.json",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let flat = read_json(&dir.path().join("flat.json"));
    for frame in flat["frames"].as_array().unwrap() {
        for v in frame.as_array().unwrap() {
            assert_eq!(v.as_f64(), Some(0.0));
        }
    }
}

#[test]
fn postprocess_smooths_a_step_like_the_recursion() {
    let dir = tempfile::tempdir().unwrap();
    // One vertex stepping 0 -> 1 -> 1 on x; c = 0.5 gives 0, 0.5, 0.75.
    std::fs::write(
        dir.path().join("step.json"),
        r#"{"frame_rate": 30, "is_delta": true, "frames": [[0, 0, 0], [1, 0, 0], [1, 0, 0]]}"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("params.json"),
        r#"{"upper_face_smoothing": 0.5, "lower_face_smoothing": 0.5}"#,
    )
    .unwrap();

    let output = facekit(
        &[
            "postprocess",
            "--animation",
            "step.json",
            "--params",
            "params.json",
            "--out",
            "out.json",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let smoothed = read_json(&dir.path().join("out.json"));
    let x: Vec<f64> = smoothed["frames"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f[0].as_f64().unwrap())
        .collect();
    assert_eq!(x, vec![0.0, 0.5, 0.75]);
}

#[test]
fn emotion_offline_turns_a_single_record_into_a_constant_track() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("probs.json"),
        r#"[{"time": 0.5, "probs": [0.5, 0.25, 0.125, 0.0625, 0.03125, 0.03125]}]"#,
    )
    .unwrap();

    let output = facekit(
        &[
            "emotion",
            "--probs",
            "probs.json",
            "--mode",
            "offline",
            "--out",
            "track.json",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let track = read_json(&dir.path().join("track.json"));
    let keyframes = track["keyframes"].as_array().unwrap();
    assert_eq!(
        keyframes.len(),
        1,
        "a sub-2s clip fits a single analysis window"
    );
    let probs = keyframes[0]["probs"].as_array().unwrap();
    assert_eq!(probs[0].as_f64(), Some(0.5));
    assert_eq!(probs[5].as_f64(), Some(0.03125));
}

#[test]
fn emotion_offline_with_defaults_keyframes_a_ten_second_clip_18_times() {
    let dir = tempfile::tempdir().unwrap();
    // Records every 0.31 s; the inferred duration lands just past 10 s.
    let records: Vec<String> = (0..31)
        .map(|k| {
            format!(
                r#"{{"time": {}, "probs": [0.5, 0.1, 0.1, 0.1, 0.1, 0.1]}}"#,
                0.31 * k as f64 + 0.3125
            )
        })
        .collect();
    std::fs::write(
        dir.path().join("probs.json"),
        format!("[{}]", records.join(", ")),
    )
    .unwrap();

    let output = facekit(
        &[
            "emotion",
            "--probs",
            "probs.json",
            "--mode",
            "offline",
            "--out",
            "track.json",
        ],
        dir.path(),
    );
    assert_ok(&output);
    let track = read_json(&dir.path().join("track.json"));
    assert_eq!(track["keyframes"].as_array().unwrap().len(), 18);
}

#[test]
fn emotion_online_with_zero_smoothing_is_a_passthrough() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("config.json"),
        r#"{"emotion": {"smoothing": 0.0}}"#,
    )
    .unwrap();

    let mut child = Command::new(env!("CARGO_BIN_EXE_facekit"))
        .args(["emotion", "--mode", "online", "--config", "config.json"])
        .current_dir(dir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();

    // Dyadic probabilities sum to exactly 1, so renormalization cannot
    // move a single bit and the stream must echo the inputs.
    let lines = [
        r#"{"time": 0.0, "probs": [0.5, 0.25, 0.125, 0.0625, 0.03125, 0.03125]}"#,
        r#"{"time": 0.5, "probs": [0.03125, 0.5, 0.25, 0.125, 0.0625, 0.03125]}"#,
        r#"{"time": 1.0, "probs": [0.25, 0.03125, 0.5, 0.03125, 0.125, 0.0625]}"#,
    ];
    let mut stdin = child.stdin.take().unwrap();
    for line in &lines {
        writeln!(stdin, "{line}").unwrap();
    }
    drop(stdin);
    let output = child.wait_with_output().unwrap();
    assert!(output.status.success());

    let stdout = String::from_utf8(output.stdout).unwrap();
    let got: Vec<serde_json::Value> = stdout
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(got.len(), 3);
    for (line, out) in lines.iter().zip(&got) {
        let input: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(input["probs"], out["probs"]);
        assert_eq!(input["time"], out["time"]);
    }
}

#[test]
fn emotion_online_answers_each_record_before_the_next_arrives() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_facekit"))
        .args(["emotion", "--mode", "online"])
        .current_dir(dir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();

    let mut stdin = child.stdin.take().unwrap();
    let stdout = child.stdout.take().unwrap();

    // Read on a helper thread so a buffering regression shows up as a
    // timeout instead of a deadlocked test.
    let (tx, rx) = std::sync::mpsc::channel();
    let reader = std::thread::spawn(move || {
        let mut lines = BufReader::new(stdout).lines();
        while let Some(Ok(line)) = lines.next() {
            if tx.send(line).is_err() {
                break;
            }
        }
    });

    for k in 0..3 {
        writeln!(stdin, r#"{{"time": {k}, "probs": [1, 0, 0, 0, 0, 0]}}"#).unwrap();
        stdin.flush().unwrap();
        let line = rx
            .recv_timeout(Duration::from_secs(30))
            .expect("no response within one record of input");
        let record: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(record["time"].as_f64(), Some(k as f64));
    }
    drop(stdin);
    reader.join().unwrap();
    assert!(child.wait().unwrap().success());
}
