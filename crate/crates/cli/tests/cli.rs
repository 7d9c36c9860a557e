use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use skinfit::anim::read_anim;
use skinfit::codec::encode;
use skinfit::metrics::compression_rate;
use skinfit::{BoneTransformSet, SkinningModel, Vec3, WeightMap};

fn skinfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skinfit")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = skinfit(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Parses the second line of a two-line CSV into floats.
fn csv_values(stdout: &str) -> Vec<f64> {
    let row = stdout.lines().nth(1).expect("data row");
    row.split(',').map(|v| v.parse().unwrap()).collect()
}

fn synth(dir: &Path, bones: usize, frames: usize, count: usize, seed: u64) -> PathBuf {
    ok(&[
        "synth",
        "--bones",
        &bones.to_string(),
        "--vertices-per-segment",
        "24",
        "--frames",
        &frames.to_string(),
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
        "--out-dir",
        p(dir),
    ]);
    dir.join("rig_000.anim")
}

#[test]
fn synth_is_deterministic_and_parses() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), 2, 8, 1, 3);
    synth(b.path(), 2, 8, 1, 3);
    for name in ["rig_000.anim", "rig_000.labels", "rig_000.weights"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let text = fs::read_to_string(a.path().join("rig_000.anim")).unwrap();
    let seq = read_anim(text.as_bytes()).unwrap();
    assert_eq!(seq.vertex_count(), 48);
    let labels = fs::read_to_string(a.path().join("rig_000.labels")).unwrap();
    for row in labels.lines().skip(1) {
        let ones = row.split_whitespace().filter(|v| *v == "1").count();
        assert!((1..=2).contains(&ones), "{row}");
    }
}

#[test]
fn decompose_reconstruct_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let anim = synth(dir.path(), 3, 12, 1, 0);
    let packed = dir.path().join("m.sknd");
    let trace = dir.path().join("trace.csv");
    let summary = ok(&["decompose", p(&anim), "--init", "cluster:5", "--iterations", "3", "--out", p(&packed), "--trace", p(&trace)]);
    assert_eq!(summary.lines().next().unwrap(), "vertices,frames,bones,disper,erms,maxavgdist,normdistort,crp");
    let values = csv_values(&summary);
    let (n, f, b) = (values[0] as usize, values[1] as usize, values[2] as usize);
    assert_eq!((n, f), (72, 12));
    assert_eq!(values[7], format!("{:.10e}", compression_rate(n, f, b).unwrap()).parse::<f64>().unwrap());
    assert_eq!(fs::read_to_string(&trace).unwrap().lines().count(), 1 + 1 + 2 * 3);

    let rebuilt = dir.path().join("r.anim");
    ok(&["reconstruct", p(&packed), "--out", p(&rebuilt)]);
    let from_anim = csv_values(&ok(&["evaluate", p(&anim), p(&rebuilt), "--bones", &b.to_string()]));
    let from_packed = csv_values(&ok(&["evaluate", p(&anim), p(&packed)]));
    for (i, (x, y)) in from_anim.iter().zip(&values[3..]).enumerate() {
        assert!((x - y).abs() <= 1e-4 * y.abs().max(1.0), "column {i}: {x} vs {y}");
    }
    assert_eq!(from_anim, from_packed);

    let info = ok(&["info", p(&packed)]);
    assert!(info.contains(&format!("bones,{b}")) && info.contains("vertices,72") && info.contains("frames,12"));
}

#[test]
fn evaluate_self_and_per_vertex_dump() {
    let dir = tempfile::tempdir().unwrap();
    let anim = synth(dir.path(), 2, 6, 1, 1);
    let row = csv_values(&ok(&["evaluate", p(&anim), p(&anim)]));
    assert_eq!(&row[..4], &[0.0; 4]);
    assert!(row[4].is_nan());

    let packed = dir.path().join("m.sknd");
    let summary = csv_values(&ok(&["decompose", p(&anim), "--init", "cluster:3", "--iterations", "1", "--out", p(&packed)]));
    let dump = dir.path().join("pv.csv");
    ok(&["evaluate", p(&anim), p(&packed), "--frame", "2", "--per-vertex", p(&dump)]);
    let errors: Vec<f64> = fs::read_to_string(&dump)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(errors.len(), 48);

    // the dump's maximum is frame 2's term of MaxAvgDist
    let seq = read_anim(fs::read_to_string(&anim).unwrap().as_bytes()).unwrap();
    let model = skinfit::codec::decode(&fs::read(&packed).unwrap()).unwrap();
    let approx = skinfit::anim::lbs_sequence(&model).unwrap();
    let frame_max = (0..48).map(|i| (seq.frames()[2][i] - approx.frames()[2][i]).norm()).fold(0.0, f64::max);
    let dump_max = errors.iter().cloned().fold(0.0, f64::max);
    assert!((frame_max - dump_max).abs() <= 1e-9 * frame_max.max(1e-12));
    assert!(summary[5] > 0.0);
}

#[test]
fn identity_model_replays_rest_pose() {
    let dir = tempfile::tempdir().unwrap();
    let rest = vec![Vec3::new(0.5, 0.0, 0.0), Vec3::new(0.0, 1.5, 0.0), Vec3::new(0.0, 0.0, -2.0)];
    let model = SkinningModel::new(rest.clone(), WeightMap::rigid(3), BoneTransformSet::identity(1, 4), vec![[0, 1, 2]]).unwrap();
    let packed = dir.path().join("id.sknd");
    fs::write(&packed, encode(&model).unwrap()).unwrap();
    let out = dir.path().join("id.anim");
    ok(&["reconstruct", p(&packed), "--out", p(&out)]);
    let seq = read_anim(fs::read_to_string(&out).unwrap().as_bytes()).unwrap();
    assert_eq!(seq.frame_count(), 4);
    assert!(seq.frames().iter().all(|f| f == &rest));
}

#[test]
fn corrupt_input_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.sknd");
    fs::write(&bad, b"SKNDgarbage").unwrap();
    let out = dir.path().join("out.anim");
    let run = skinfit(&["reconstruct", p(&bad), "--out", p(&out)]);
    assert!(!run.status.success());
    assert!(!out.exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1, "temporary file left behind");
}

#[test]
fn train_rejects_mixed_frame_counts() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 2, 6, 1, 0);
    let other = tempfile::tempdir().unwrap();
    synth(other.path(), 2, 9, 1, 0);
    fs::copy(other.path().join("rig_000.anim"), dir.path().join("long.anim")).unwrap();
    fs::copy(other.path().join("rig_000.labels"), dir.path().join("long.labels")).unwrap();
    let ckpt = dir.path().join("m.cnn");
    let run = skinfit(&["train", "--data-dir", p(dir.path()), "--out", p(&ckpt), "--epochs", "1"]);
    assert!(!run.status.success());
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("long.anim") && err.contains("rig_000.anim") && err.contains("9 frames"), "{err}");
    assert!(!ckpt.exists());
}

#[test]
fn train_then_decompose_with_network() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--bones", "2", "--vertices-per-segment", "24", "--frames", "6", "--count", "3", "--b-max", "4", "--out-dir", p(dir.path())]);
    let ckpt = dir.path().join("m.cnn");
    let log = dir.path().join("log.csv");
    let args = ["train", "--data-dir", p(dir.path()), "--out", p(&ckpt), "--log", p(&log), "--epochs", "3", "--batch-size", "32", "--b-max", "4", "--quiet"];
    ok(&args);
    let first = fs::read(&ckpt).unwrap();
    let text = fs::read_to_string(&log).unwrap();
    assert_eq!(text.lines().next().unwrap(), "epoch,loss,binary_accuracy");
    assert_eq!(text.lines().count(), 4);
    ok(&args);
    assert_eq!(fs::read(&ckpt).unwrap(), first, "training is not deterministic");

    let init = format!("cnn:{}", p(&ckpt));
    let summary = csv_values(&ok(&["decompose", p(&dir.path().join("rig_001.anim")), "--init", &init, "--quiet"]));
    assert!(summary[2] >= 1.0 && summary[2] <= 4.0);
    assert!(dir.path().join("rig_001.sknd").exists());
}

#[test]
fn strict_promotes_solver_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let anim = synth(dir.path(), 2, 6, 1, 2);
    let args = ["decompose", p(&anim), "--init", "cluster:3", "--iterations", "1", "--cg-tolerance", "1e-300"];
    ok(&args);
    let mut strict = args.to_vec();
    strict.push("--strict");
    let run = skinfit(&strict);
    assert!(!run.status.success());
    assert!(String::from_utf8_lossy(&run.stderr).contains("--strict"));
}

#[test]
fn bad_flags_are_rejected() {
    assert!(!skinfit(&["decompose", "x.anim", "--init", "kmeans:3"]).status.success());
    assert!(!skinfit(&["decompose", "x.anim", "--rest", "first"]).status.success());
    assert!(!skinfit(&["evaluate", "a", "b", "--frame", "1"]).status.success());
}

#[test]
fn stored_rest_pose_is_used_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let anim = synth(dir.path(), 2, 6, 1, 4);
    let seq = read_anim(fs::read_to_string(&anim).unwrap().as_bytes()).unwrap();
    let packed = dir.path().join("s.sknd");
    ok(&["decompose", p(&anim), "--rest", "stored", "--init", "cluster:2", "--iterations", "0", "--out", p(&packed)]);
    let model = skinfit::codec::decode(&fs::read(&packed).unwrap()).unwrap();
    let expected: Vec<Vec3> = seq.rest_pose().iter().map(|v| v.map(|c| c as f32 as f64)).collect();
    assert_eq!(model.rest_pose(), expected.as_slice());
}
