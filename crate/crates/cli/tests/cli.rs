use std::path::Path;
use std::process::{Command, Output};

use stylemorph::fixtures::{cool_checks, moving_disc_video, warm_stripes};
use stylemorph::io::image::{write_frames, write_png};

fn stylemorph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stylemorph")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr_line(out: &Output) -> String {
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    err
}

fn alphas(csv: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("frame,alpha"));
    lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect()
}

#[test]
fn alpha_curve_linear_golden() {
    let out = stylemorph(&["alpha-curve", "--alpha-mid", "0.5", "--frames", "5"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "frame,alpha\n0,0\n1,0.25\n2,0.5\n3,0.75\n4,1\n");
}

#[test]
fn alpha_curve_warped_golden() {
    let out = stylemorph(&["alpha-curve", "--alpha-mid", "0.3", "--lambda", "5", "--frames", "5"]);
    assert!(out.status.success());
    let got = alphas(&stdout(&out));
    for (a, b) in got.iter().zip([0.0, 0.1667, 0.3889, 0.6667, 1.0]) {
        assert!((a - b).abs() < 1e-4, "{got:?}");
    }
}

#[test]
fn alpha_curve_from_curves_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curves.csv");
    std::fs::write(&path, "frame,d0,d1\n0,0,1\n1,2,1\n2,2,1\n3,2,1\n").unwrap();
    let out = stylemorph(&["alpha-curve", "--curves", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr_line(&out));
    let got = alphas(&stdout(&out));
    assert_eq!(got.len(), 4);
    assert_eq!((got[0], got[3]), (0.0, 1.0));
    // The crossing is early, so the warped curve sits below the linear one.
    assert!(got[1] < 1.0 / 3.0 && got[2] < 2.0 / 3.0);
}

#[test]
fn errors_are_single_lines_with_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = stylemorph(&["alpha-curve", "--curves", "/nonexistent/c.csv"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(stderr_line(&missing).starts_with("error[missing_file]"));

    let bad_csv = dir.path().join("bad.csv");
    std::fs::write(&bad_csv, "d0,d1\n1,x\n").unwrap();
    let malformed = stylemorph(&["alpha-curve", "--curves", bad_csv.to_str().unwrap()]);
    assert_eq!(malformed.status.code(), Some(4));
    assert!(stderr_line(&malformed).starts_with("error[malformed]"));

    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "t_qend = 5000\n").unwrap();
    let cfg = stylemorph(&["invert", "--video", "x", "--out", "y", "--config", conf.to_str().unwrap()]);
    assert_eq!(cfg.status.code(), Some(5));
    assert!(stderr_line(&cfg).starts_with("error[config]"));

    let usage = stylemorph(&["alpha-curve", "--frames", "4"]);
    assert_eq!(usage.status.code(), Some(2));
    assert!(stderr_line(&usage).starts_with("error[usage]"));

    let invalid = stylemorph(&["alpha-curve", "--alpha-mid", "0.3"]);
    assert_eq!(invalid.status.code(), Some(6));
    stderr_line(&invalid);
}

fn write_inputs(root: &Path, frames: usize) {
    write_frames(&root.join("video"), &moving_disc_video(frames, 32)).unwrap();
    write_png(&root.join("s0.png"), &warm_stripes(32)).unwrap();
    write_png(&root.join("s1.png"), &cool_checks(32)).unwrap();
    std::fs::write(root.join("run.conf"), "steps = 20\n").unwrap();
}

fn path(root: &Path, name: &str) -> String {
    root.join(name).to_str().unwrap().to_string()
}

#[test]
fn invert_writes_latents_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_inputs(root, 2);
    let out = stylemorph(&["invert", "--video", &path(root, "video"), "--out", &path(root, "inv"), "--config", &path(root, "run.conf")]);
    assert!(out.status.success(), "{}", stderr_line(&out));
    let latents = stylemorph::io::tensor_file::read_tensor(&root.join("inv/latents.stns")).unwrap();
    assert_eq!(latents.shape(), &[2, 12, 16, 16]);
    let cache = stylemorph::injection::AttentionCache::load(&root.join("inv/cache")).unwrap();
    assert!(cache.is_complete());
}

#[test]
fn morph_then_eval_and_replay_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_inputs(root, 3);
    let (video, s0, s1) = (path(root, "video"), path(root, "s0.png"), path(root, "s1.png"));
    let out = stylemorph(&["morph", "--video", &video, "--style0", &s0, "--style1", &s1, "--config", &path(root, "run.conf"), "--out", &path(root, "a")]);
    assert!(out.status.success(), "{}", stderr_line(&out));
    for name in ["frame_0000.png", "frame_0001.png", "frame_0002.png", "manifest.jsonl", "alpha.csv"] {
        assert!(root.join("a").join(name).exists(), "{name}");
    }
    let manifest = std::fs::read_to_string(root.join("a/manifest.jsonl")).unwrap();
    for key in stylemorph::io::config::KEYS {
        assert!(manifest.lines().next().unwrap().contains(&format!("\"{key}\"")), "{key}");
    }

    let replay = stylemorph(&["morph", "--video", &video, "--style0", &s0, "--style1", &s1, "--config", &path(root, "a/manifest.jsonl"), "--out", &path(root, "b")]);
    assert!(replay.status.success(), "{}", stderr_line(&replay));
    for i in 0..3 {
        let name = format!("frame_{i:04}.png");
        assert_eq!(std::fs::read(root.join("a").join(&name)).unwrap(), std::fs::read(root.join("b").join(&name)).unwrap());
    }

    let eval = |dir: &str| {
        stylemorph(&["eval", "--frames", &path(root, dir), "--src", &video, "--style0", &s0, "--style1", &s1, "--manifest", &path(root, "a/manifest.jsonl")])
    };
    let (ea, eb) = (eval("a"), eval("b"));
    assert!(ea.status.success(), "{}", stderr_line(&ea));
    assert_eq!(ea.stdout, eb.stdout);
    let text = stdout(&ea);
    assert!(text.starts_with("ppl,pdv,style_loss,structure_distance,frame_similarity\n"));
    assert_eq!(text.lines().count(), 2);

    let json = stylemorph(&["eval", "--frames", &video, "--src", &video, "--style0", &s0, "--style1", &s1, "--json"]);
    let value: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(value["structure_distance"], 0.0);
}
