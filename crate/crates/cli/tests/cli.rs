use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn semdist(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semdist")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = semdist(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn report(dir: &Path, file: &str) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join(file)).unwrap()).unwrap()
}

#[test]
fn generate_writes_scenes_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["generate", "--seed", "1", "--count", "2", "--out", "a"]);
    ok(dir, &["generate", "--seed", "1", "--count", "2", "--out", "b"]);
    let mut names: Vec<_> =
        fs::read_dir(dir.join("a")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["manifest.json", "scene_0000.json", "scene_0001.json"]);
    for name in &names {
        assert_eq!(fs::read(dir.join("a").join(name)).unwrap(), fs::read(dir.join("b").join(name)).unwrap());
    }
    let manifest = report(&dir.join("a"), "manifest.json");
    let scenes = manifest["scenes"].as_array().unwrap();
    assert_eq!(scenes[1]["seed"], 2);
    for s in scenes {
        let objects = s["objects"].as_u64().unwrap();
        let strata = ["gt_none", "gt_partial", "gt_heavy"].map(|k| s[k].as_u64().unwrap());
        assert_eq!(strata.iter().sum::<u64>(), objects);
        assert!((1..=4).contains(&s["max_depth"].as_u64().unwrap()));
    }
}

#[test]
fn usage_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    for args in [
        &["generate", "--objects", "5..3", "--out", "x"][..],
        &["generate", "--objects", "three", "--out", "x"],
        &["decode", "--map", "m.sdm", "--mode", "sideways", "--out", "x.pgm"],
        &["encode", "--scene", "s.json", "--confidence", "1.5", "--out", "x"],
        &["frobnicate"],
    ] {
        assert_eq!(semdist(tmp.path(), args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn data_errors_exit_1() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["generate", "--seed", "3", "--out", "gt"]);
    let out = semdist(dir, &["eval", "--gt", "gt/scene_0000.json", "--pred", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
    fs::write(dir.join("bad.sdm"), b"SDM1\x02\0\0\0").unwrap();
    let out = semdist(dir, &["decode", "--map", "bad.sdm", "--mode", "amodal", "--out", "x.pgm"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.sdm"));
    fs::write(dir.join("bad.json"), r#"{"width":2,"height":1,"instances":[],"stacks":{"7":[]}}"#).unwrap();
    assert_eq!(semdist(dir, &["render", "--scene", "bad.json", "--out", "x.ppm"]).status.code(), Some(1));
}

#[test]
fn amodal_round_trip_through_files() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["generate", "--seed", "11", "--count", "3", "--out", "gt"]);
    for i in 0..3 {
        let scene = format!("gt/scene_{i:04}.json");
        let maps = format!("maps{i}");
        let masks = format!("masks{i}");
        ok(dir, &["encode", "--scene", &scene, "--out", &maps]);
        ok(dir, &["render", "--scene", &scene, "--out", "scene.ppm", "--masks", &masks]);
        for entry in fs::read_dir(dir.join(&maps)).unwrap() {
            let name = entry.unwrap().file_name().into_string().unwrap();
            let id = name.trim_start_matches("instance_").trim_end_matches(".sdm");
            let map = format!("{maps}/{name}");
            ok(dir, &["decode", "--map", &map, "--mode", "amodal", "--out", "a.pgm"]);
            ok(dir, &["decode", "--map", &map, "--mode", "modal", "--out", "v.pgm"]);
            let expected = |kind: &str| fs::read(dir.join(&masks).join(format!("{kind}_{id}.pgm"))).unwrap();
            assert_eq!(fs::read(dir.join("a.pgm")).unwrap(), expected("amodal"));
            assert_eq!(fs::read(dir.join("v.pgm")).unwrap(), expected("visible"));
        }
    }
}

#[test]
fn decode_levels_writes_level_plus_one() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("s.json"),
        r#"{"width":3,"height":1,"instances":[{"id":1},{"id":2}],"stacks":{"0":[1],"1":[2,1],"2":[2]}}"#,
    )
    .unwrap();
    ok(dir, &["encode", "--scene", "s.json", "--out", "maps"]);
    ok(dir, &["decode", "--map", "maps/instance_1.sdm", "--mode", "levels", "--out", "l.pgm"]);
    assert_eq!(fs::read(dir.join("l.pgm")).unwrap(), b"P5\n3 1\n255\n\x01\x02\x00");
    let line = ok(dir, &["order", "--map-a", "maps/instance_1.sdm", "--map-b", "maps/instance_2.sdm"]);
    assert_eq!(line.trim(), "B_in_front overlap=1 regions=-1");
}

#[test]
fn eval_gt_against_itself_and_perturbed() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["generate", "--seed", "21", "--count", "8", "--out", "gt"]);
    ok(dir, &["eval", "--gt", "gt", "--pred", "gt", "--report", "self.json"]);
    let own = report(dir, "self.json");
    assert_eq!(own["ap"], 1.0);
    assert_eq!(own["ar10"], 1.0);
    assert_eq!(own["ar100"], 1.0);
    assert_eq!(own["order_accuracy"], 1.0);
    assert_eq!(own["per_image"].as_array().unwrap().len(), 8);

    fs::create_dir(dir.join("pred")).unwrap();
    for i in 0..8 {
        let gt = format!("gt/scene_{i:04}.json");
        let out = format!("pred/scene_{i:04}.json");
        ok(dir, &["perturb", "--gt", &gt, "--erode", "2", "--seed", "5", "--out", &out]);
    }
    ok(dir, &["eval", "--gt", "gt", "--pred", "pred", "--k10", "1", "--report", "eroded.json"]);
    let eroded = report(dir, "eroded.json");
    assert!(eroded["ap"].as_f64().unwrap() < 1.0);
    assert!(eroded["ar10"].as_f64().unwrap() <= eroded["ar100"].as_f64().unwrap());
    assert!(eroded["order_accuracy"].is_null());

    ok(dir, &["eval", "--gt", "gt", "--pred", "pred", "--k10", "1", "--report", "again.json"]);
    assert_eq!(fs::read(dir.join("eroded.json")).unwrap(), fs::read(dir.join("again.json")).unwrap());
}

#[test]
fn perturb_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["generate", "--seed", "4", "--out", "gt"]);
    let args = |out: &'static str| {
        [
            "perturb",
            "--gt",
            "gt/scene_0000.json",
            "--dilate",
            "1",
            "--drop-occluded",
            "0.5",
            "--score-noise",
            "0.2",
            "--seed",
            "9",
            "--out",
            out,
        ]
    };
    ok(dir, &args("p1.json"));
    ok(dir, &args("p2.json"));
    assert_eq!(fs::read(dir.join("p1.json")).unwrap(), fs::read(dir.join("p2.json")).unwrap());
}
