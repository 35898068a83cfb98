use std::path::Path;
use std::process::{Command, Output};

use ico3d_avatar::compose::{write_rig, RigAlignment};
use ico3d_cli::{cmd_validate, ValidateArgs};
use ico3d_core::{synth, Bundle, Image};
use rand::Rng;

fn ico3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ico3d")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = ico3d(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn toy(dir: &Path, frames: usize) {
    ok(&["toy", "--out", s(dir), "--seed", "4", "--head-splats", "120", "--body-splats", "300", "--frames", &frames.to_string()]);
}

#[test]
fn toy_compose_validate_render() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    toy(d, 10);
    let avatar = d.join("avatar.ico3d");
    let summary = ok(&[
        "compose", "--head", s(&d.join("head.ico3d")), "--body", s(&d.join("body.ico3d")), "--rig", s(&d.join("rig.txt")),
        "--boundary", s(&d.join("boundary.txt")), "--harmonize", "0.06", "--out", s(&avatar),
    ]);
    assert!(summary.starts_with("head 120 body "), "{summary}");
    assert!(ok(&["validate", "--bundle", s(&avatar)]).starts_with("ok: "));

    let tiled = d.join("tiled");
    ok(&["render", "--bundle", s(&avatar), "--out", s(&tiled), "--resolution", "40x32", "--workers", "2"]);
    let names: Vec<_> = (0..10).map(|i| format!("frame_{i:05}.png")).collect();
    for n in &names {
        assert!(tiled.join(n).exists(), "{n}");
    }
    let oracle = d.join("oracle");
    ok(&["render", "--bundle", s(&avatar), "--out", s(&oracle), "--resolution", "40x32", "--oracle", "--frames", "3..5"]);
    for n in &names[3..5] {
        let a = Image::read_png(&tiled.join(n)).unwrap();
        let b = Image::read_png(&oracle.join(n)).unwrap();
        // 8-bit export: identical float images give identical bytes, so allow one code step
        assert!(a.max_abs_diff(&b) <= 1.0 / 255.0 + 1e-12);
    }
    assert!(!oracle.join(&names[5]).exists());

    let scored = d.join("scored");
    ok(&["render", "--bundle", s(&avatar), "--out", s(&scored), "--resolution", "40x32", "--frames", "0..2", "--reference", s(&tiled)]);
    let csv = std::fs::read_to_string(scored.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "frame,psnr,psnr_masked,ssim,l1");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0,99.0000,,1.000000,0.000000"), "{}", rows[1]);
}

#[test]
fn camera_path_renders_every_frame() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    toy(d, 6);
    let eye = |x: f64| ico3d_core::camera::look_at_pose(nalgebra::Vector3::new(x, -0.1, -1.6), nalgebra::Vector3::new(0.0, 0.0, 0.0), nalgebra::Vector3::new(0.0, -1.0, 0.0));
    let cam = |x: f64| ico3d_core::CameraModel::new(30.0, 30.0, 12.0, 12.0, 24, 24, eye(x)).unwrap();
    let path = d.join("path.csv");
    std::fs::write(&path, ico3d_cli::camera_path::write_camera_path(&[(0, cam(-0.5)), (7, cam(0.5))])).unwrap();
    let out = d.join("orbit");
    ok(&["render", "--bundle", s(&d.join("body.ico3d")), "--out", s(&out), "--camera-path", s(&path)]);
    let n = std::fs::read_dir(&out).unwrap().count();
    assert_eq!(n, 8);
    let a = Image::read_png(&out.join("frame_00000.png")).unwrap();
    assert_eq!((a.width, a.height), (24, 24));
    let b = Image::read_png(&out.join("frame_00007.png")).unwrap();
    assert!(a.max_abs_diff(&b) > 0.0);
}

#[test]
fn identity_rig_without_pruning_keeps_every_splat() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    toy(d, 5);
    let rig = d.join("identity.txt");
    std::fs::write(&rig, write_rig(&RigAlignment::identity(5))).unwrap();
    let out = d.join("merged.ico3d");
    let summary = ok(&["compose", "--head", s(&d.join("head.ico3d")), "--body", s(&d.join("body.ico3d")), "--rig", s(&rig), "--no-prune", "--out", s(&out)]);
    let body = ico3d_cli::load_avatar(&d.join("body.ico3d")).unwrap().body.unwrap();
    let n = body.windows.iter().map(|w| w.canonical.len()).max().unwrap();
    assert!(summary.contains(&format!("head 120 body {n} pruned 0 border 0 total {}", 120 + n)), "{summary}");
}

#[test]
fn sphere_over_the_whole_body_warns() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    toy(d, 5);
    let prune = d.join("prune.txt");
    std::fs::write(&prune, "sphere_center = 0 0 0\nsphere_radius = 100\n").unwrap();
    let out = ico3d(&[
        "compose", "--head", s(&d.join("head.ico3d")), "--body", s(&d.join("body.ico3d")), "--rig", s(&d.join("rig.txt")),
        "--prune", s(&prune), "--out", s(&d.join("x.ico3d")),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains(" body 0 "));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn corrupted_quaternion_is_listed() {
    let t = tempfile::tempdir().unwrap();
    let mut set = synth::random_scene(2, 30, 0);
    set.rotations[17] *= 3.0;
    let p = t.path().join("bad.ico3d");
    std::fs::write(&p, Bundle::from_splats(set).encode()).unwrap();
    let out = ico3d(&["validate", "--bundle", s(&p)]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("splat 17: rotation"), "{err}");
}

#[test]
fn fuzzed_bundles_are_always_diagnosed() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    toy(d, 4);
    let clean = std::fs::read(d.join("body.ico3d")).unwrap();
    let p = d.join("fuzz.ico3d");
    let mut r = synth::rng(77);
    for case in 0..300 {
        let mut b = clean.clone();
        match case % 3 {
            0 => b.truncate(r.random_range(0..clean.len())),
            1 => {
                for _ in 0..r.random_range(1..8) {
                    let i = r.random_range(0..b.len());
                    b[i] = r.random();
                }
            }
            _ => {
                let i = r.random_range(0..b.len());
                b.insert(i, r.random());
            }
        }
        std::fs::write(&p, &b).unwrap();
        // panics would abort the test; every outcome must be a verdict
        match cmd_validate(&ValidateArgs { bundle: p.clone() }) {
            Ok(_) => {}
            Err(e) => assert_eq!(e.code(), 1, "case {case}: {e}"),
        }
    }
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    assert_eq!(code(&ico3d(&["render", "--bundle"])), 2);
    assert_eq!(code(&ico3d(&["bench", "--resolution", "12by4"])), 2);
    assert_eq!(code(&ico3d(&["validate", "--bundle", s(&d.join("missing.ico3d"))])), 3);
    let junk = d.join("junk.ico3d");
    std::fs::write(&junk, b"not a bundle").unwrap();
    assert_eq!(code(&ico3d(&["render", "--bundle", s(&junk), "--out", s(d)])), 4);
    assert_eq!(code(&ico3d(&["validate", "--bundle", s(&junk)])), 1);
    toy(d, 4);
    let out = ico3d(&["render", "--bundle", s(&d.join("body.ico3d")), "--out", s(&d.join("r")), "--frames", "2..9"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn bench_reports_three_configurations_per_worker_count() {
    let out = ok(&["bench", "--resolution", "32x32", "--workers", "1,2", "--seconds", "0", "--warmup", "0", "--min-frames", "2"]);
    let rows: Vec<Vec<String>> = out.lines().map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows[0].join(","), "scene,background,body,head,splats,resolution,workers,frames,mean_ms,p99_ms,fps");
    assert_eq!(rows.len(), 7);
    let marks: Vec<String> = rows[1..4].iter().map(|r| r[1..4].join("|")).collect();
    assert_eq!(marks, ["✓||", "✓|✓|", "✓|✓|✓"]);
    let splats: Vec<usize> = rows[1..4].iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(splats[0] < splats[1] && splats[1] < splats[2]);
    assert_eq!(rows[4][6], "2");
}

#[test]
fn empty_scene_still_gets_a_row() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path().join("empty.ico3d");
    std::fs::write(&p, Bundle::from_splats(ico3d_core::GaussianSet::new(0)).encode()).unwrap();
    let out = ok(&["bench", "--bundle", s(&p), "--resolution", "16x16", "--seconds", "0", "--warmup", "0"]);
    assert_eq!(out.lines().count(), 4);
    assert!(out.lines().nth(1).unwrap().starts_with("empty,✓,,,0,16x16,1,"));
}

#[test]
fn demo_writes_frames_and_audio() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let out = ok(&["demo", "--out", s(d), "--text", "Hi", "--resolution", "32x32", "--seed", "1"]);
    assert!(out.contains("\"You said: Hi\""), "{out}");
    let frames = std::fs::read_dir(d.join("frames")).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png")).count();
    assert_eq!(frames, 30);
    assert!(d.join("frames/reply.wav").exists());
    assert!(d.join("avatar.ico3d").exists());
}
