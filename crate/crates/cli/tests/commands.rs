use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mtaf_cli::commands::table;
use mtaf_cli::config::{RunConfig, Settings};
use mtaf_cli::io::{self, read_dataset};
use mtaf_cli::pipeline;
use mtaf_core::synthgen::generate_world;
use mtaf_core::siamese_affinity;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

const SMALL: &str = r#"
seed = 3
[world]
n_targets = 6
dwell_range = [30, 60]
visits_range = [2, 3]
spawn_horizon = 600
feature_dim = 16
[train]
epochs = 6
[sampler]
pair_count = 400
[scopes]
max_pairs = 3000
bins = 20
"#;

fn mtaf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtaf"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mtaf(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    mtaf(dir, args).status.code().expect("exit code")
}

fn workspace(config: &str) -> TempDir {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("run.toml"), config).unwrap();
    t
}

fn with_cfg<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["--config", "run.toml"];
    v.extend_from_slice(args);
    v
}

fn read(p: PathBuf) -> Vec<u8> {
    fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn csv_rows(p: PathBuf) -> Vec<HashMap<String, String>> {
    let mut r = csv::Reader::from_path(&p).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(str::to_string).collect();
    r.records()
        .map(|rec| header.iter().cloned().zip(rec.unwrap().iter().map(str::to_string)).collect())
        .collect()
}

fn settings(config: &str) -> Settings {
    Settings::resolve(&RunConfig::parse(config).unwrap(), None, None).unwrap()
}

#[test]
fn gen_is_deterministic_and_round_trips_bit_exactly() {
    let t = workspace(SMALL);
    let d = t.path();
    ok(d, &with_cfg(&["gen", "--out", "a"]));
    ok(d, &with_cfg(&["gen", "--out", "b"]));
    let names = ["cam_0.csv", "cam_1.csv", "cam_2.csv", "cam_3.csv", "features.bin", "gt.csv", "tracks.csv", "manifest.json"];
    for f in names {
        assert_eq!(read(d.join("a").join(f)), read(d.join("b").join(f)), "{f} differs");
    }
    let s = settings(SMALL);
    let mem = generate_world::<f32>(&s.world).unwrap();
    let disk = read_dataset(&d.join("a")).unwrap();
    assert_eq!(disk.detections.len(), mem.detections.len());
    for (x, y) in disk.detections.iter().zip(&mem.detections) {
        assert_eq!(x, y);
        let bits = |f: &[f32]| f.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(x.feature.as_slice()), bits(y.feature.as_slice()));
    }
}

#[test]
fn gen_with_no_targets_writes_headers_only() {
    let t = workspace(&SMALL.replace("n_targets = 6", "n_targets = 0"));
    ok(t.path(), &with_cfg(&["gen", "--out", "empty"]));
    let cam = fs::read_to_string(t.path().join("empty/cam_0.csv")).unwrap();
    assert_eq!(cam, "frame,target_id,x,y,w,h,conf,feature_row\n");
    let gt = fs::read_to_string(t.path().join("empty/gt.csv")).unwrap();
    assert_eq!(gt, "camera,frame,identity,x,y,w,h\n");
    assert_eq!(read_dataset(&t.path().join("empty")).unwrap().detections.len(), 0);
}

#[test]
fn configuration_errors_exit_2() {
    let t = workspace(SMALL);
    let d = t.path();
    assert_eq!(code(d, &["--config", "missing.toml", "gen", "--out", "x"]), 2);
    fs::write(d.join("bad.toml"), "[world]\ncolour = 1\n").unwrap();
    assert_eq!(code(d, &["--config", "bad.toml", "gen", "--out", "x"]), 2);
    fs::write(d.join("neg.toml"), "[world]\nsigma = -0.5\n").unwrap();
    let out = mtaf(d, &["--config", "neg.toml", "gen", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma"));
    assert_eq!(code(d, &["no-such-command"]), 2);
}

#[test]
fn unreadable_or_corrupt_inputs_exit_3() {
    let t = workspace(SMALL);
    let d = t.path();
    assert_eq!(code(d, &with_cfg(&["calibrate", "--data", "nowhere", "--out", "c.json"])), 3);
    ok(d, &with_cfg(&["gen", "--out", "ds"]));
    fs::write(d.join("ds/features.bin"), b"MTAX\x01").unwrap();
    assert_eq!(code(d, &with_cfg(&["calibrate", "--data", "ds", "--out", "c.json"])), 3);
}

#[test]
fn train_checkpoint_reloads_to_identical_affinities() {
    let t = workspace(SMALL);
    let d = t.path();
    ok(d, &with_cfg(&["gen", "--out", "ds"]));
    ok(d, &with_cfg(&["train", "--data", "ds", "--scheme", "intra", "--out", "m/intra.json"]));
    let (ckpt, model) = io::read_checkpoint(&d.join("m/intra.json")).unwrap();
    assert_eq!(ckpt.dims, vec![16, 128, 64, 32, 2]);
    assert_eq!(ckpt.provenance.scheme, "intra");
    assert_eq!(ckpt.provenance.tau, Some(150));
    assert_eq!(ckpt.pair_count, 400);

    let s = settings(SMALL);
    let ds = read_dataset(&d.join("ds")).unwrap();
    let tc = &s.train.config;
    let mem = pipeline::train_scheme(&ds.detections, mtaf_core::metric_train::Scheme::Intra, 150, 400, s.sampler.seed, tc, tc.seed)
        .unwrap()
        .model;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = ds.detections.len();
    for _ in 0..100 {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let (a, b) = (&ds.detections[i].feature, &ds.detections[j].feature);
        let x = siamese_affinity(&model, a, b).unwrap();
        let y = siamese_affinity(&mem, a, b).unwrap();
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn train_on_separable_data_is_accurate() {
    let cfg = SMALL.replace("epochs = 6", "epochs = 30");
    let t = workspace(&cfg);
    let d = t.path();
    ok(d, &with_cfg(&["gen", "--out", "ds"]));
    ok(d, &with_cfg(&["train", "--data", "ds", "--scheme", "intra", "--out", "intra.json"]));
    let (ckpt, _) = io::read_checkpoint(&d.join("intra.json")).unwrap();
    assert!(ckpt.final_accuracy >= 0.99, "accuracy {}", ckpt.final_accuracy);
}

#[test]
fn inter_scheme_on_one_camera_exits_4() {
    let cfg = SMALL.replace("[world]", "[world]\ncameras = 1\nedges = []");
    let t = workspace(&cfg);
    let d = t.path();
    ok(d, &with_cfg(&["gen", "--out", "ds"]));
    let out = mtaf(d, &with_cfg(&["train", "--data", "ds", "--scheme", "inter", "--out", "x.json"]));
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("positive"));
}

#[test]
fn track_covers_every_detection_and_checks_dimensions() {
    let t = workspace(SMALL);
    let d = t.path();
    ok(d, &with_cfg(&["gen", "--out", "ds"]));
    ok(d, &with_cfg(&["calibrate", "--data", "ds", "--out", "cal.json"]));
    ok(d, &with_cfg(&["track", "--data", "ds", "--sct", "eq1:cal.json", "--mct", "eq1:cal.json", "--out", "h1.csv"]));
    ok(d, &with_cfg(&["track", "--data", "ds", "--sct", "eq1:cal.json", "--mct", "eq1:cal.json", "--out", "h2.csv"]));
    assert_eq!(read(d.join("h1.csv")), read(d.join("h2.csv")));
    let n = read_dataset(&d.join("ds")).unwrap().detections.len();
    assert_eq!(csv_rows(d.join("h1.csv")).len(), n);

    // eq1 without a file calibrates on the tracked dataset with the same settings
    ok(d, &with_cfg(&["track", "--data", "ds", "--sct", "eq1", "--mct", "eq1", "--out", "h3.csv"]));
    assert_eq!(read(d.join("h1.csv")), read(d.join("h3.csv")));

    ok(d, &with_cfg(&["train", "--data", "ds", "--scheme", "global", "--out", "g.json"]));
    let other = SMALL.replace("feature_dim = 16", "feature_dim = 8");
    fs::write(d.join("d8.toml"), other).unwrap();
    ok(d, &["--config", "d8.toml", "gen", "--out", "d8"]);
    assert_eq!(code(d, &["--config", "d8.toml", "track", "--data", "d8", "--sct", "g.json", "--mct", "eq1", "--out", "x.csv"]), 5);
}

#[test]
fn oracle_tracking_scores_perfectly() {
    let cfg = format!("{SMALL}\n[tracker]\nsct_window = 5000\nmct_window = 5000\n");
    let t = workspace(&cfg);
    let d = t.path();
    ok(d, &with_cfg(&["gen", "--out", "ds"]));
    ok(d, &with_cfg(&["track", "--data", "ds", "--sct", "oracle", "--mct", "oracle", "--out", "h.csv"]));
    ok(d, &with_cfg(&["eval", "--gt", "ds/gt.csv", "--hyp", "h.csv", "--out", "ev.csv"]));
    for row in csv_rows(d.join("ev.csv")) {
        assert_eq!(row["idf1"], "1.000000", "{row:?}");
    }
}

fn write_boxes(path: &Path, rows: &[(u32, i64, i64)]) {
    let mut s = String::from("camera,frame,identity,x,y,w,h\n");
    for (c, f, id) in rows {
        s += &format!("{c},{f},{id},10,{},20,40\n", 50 * (f % 3));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn eval_fixtures() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    // one true identity over ten frames, split 6/4 by the hypothesis
    let gt: Vec<(u32, i64, i64)> = (0..10).map(|f| (0, f, 7)).collect();
    let hyp: Vec<(u32, i64, i64)> = (0..10).map(|f| (0, f, if f < 6 { 1 } else { 2 })).collect();
    write_boxes(&d.join("gt.csv"), &gt);
    write_boxes(&d.join("hyp.csv"), &hyp);
    ok(d, &["eval", "--gt", "gt.csv", "--hyp", "hyp.csv", "--out", "ev.csv"]);
    let rows = csv_rows(d.join("ev.csv"));
    let mct = rows.iter().find(|r| r["level"] == "mct").unwrap();
    assert_eq!(mct["idf1"], "0.600000");
    assert_eq!((mct["idtp"].as_str(), mct["idfp"].as_str(), mct["idfn"].as_str()), ("6", "4", "4"));

    ok(d, &["eval", "--gt", "gt.csv", "--hyp", "gt.csv", "--out", "self.csv"]);
    assert!(csv_rows(d.join("self.csv")).iter().all(|r| r["idf1"] == "1.000000"));

    // a box the ground truth does not contain
    let mut foreign = gt.clone();
    foreign.push((3, 99, 1));
    write_boxes(&d.join("foreign.csv"), &foreign);
    assert_eq!(code(d, &["eval", "--gt", "gt.csv", "--hyp", "foreign.csv"]), 6);
    // overlap matching tolerates it as a false positive
    ok(d, &["eval", "--gt", "gt.csv", "--hyp", "foreign.csv", "--iou", "0.5"]);
}

#[test]
fn eval_is_invariant_to_relabelling() {
    let t = workspace(SMALL);
    let d = t.path();
    ok(d, &with_cfg(&["gen", "--out", "ds"]));
    ok(d, &with_cfg(&["track", "--data", "ds", "--sct", "eq1", "--mct", "eq1", "--out", "h.csv"]));
    let text = fs::read_to_string(d.join("h.csv")).unwrap();
    let mut lines = text.lines();
    let mut out = format!("{}\n", lines.next().unwrap());
    for l in lines {
        let mut cells: Vec<String> = l.split(',').map(str::to_string).collect();
        let id: i64 = cells[2].parse().unwrap();
        cells[2] = (1000 - 7 * id).to_string();
        out += &cells.join(",");
        out.push('\n');
    }
    fs::write(d.join("relabelled.csv"), out).unwrap();
    ok(d, &["eval", "--gt", "ds/gt.csv", "--hyp", "h.csv", "--out", "a.csv"]);
    ok(d, &["eval", "--gt", "ds/gt.csv", "--hyp", "relabelled.csv", "--out", "b.csv"]);
    assert_eq!(read(d.join("a.csv")), read(d.join("b.csv")));
}

#[test]
fn scopes_reports_and_histograms() {
    let t = workspace(SMALL);
    let d = t.path();
    ok(d, &with_cfg(&["gen", "--out", "ds"]));
    let console = ok(d, &with_cfg(&["scopes", "--data", "ds", "--scorer", "eq1", "--scorer", "oracle", "--out", "sc"]));
    assert!(console.contains("oracle"));
    for scope in ["reid", "mct", "sct"] {
        let row = &csv_rows(d.join(format!("sc/{scope}_oracle.csv")))[0];
        assert_eq!((row["false_pos"].as_str(), row["false_neg"].as_str()), ("0", "0"), "{scope}");
        for scorer in ["eq1", "oracle"] {
            let hist = csv_rows(d.join(format!("sc/{scope}_{scorer}_hist.csv")));
            assert_eq!(hist.len(), 20);
            for col in ["pos_density", "neg_density"] {
                let sum: f64 = hist.iter().map(|r| r[col].parse::<f64>().unwrap()).sum();
                assert!((sum - 1.0).abs() < 1e-9, "{scope}/{scorer}/{col}: {sum}");
            }
        }
    }
    let cmp = csv_rows(d.join("sc/comparison.csv"));
    assert_eq!(cmp.len(), 6);
    assert!(cmp.iter().filter(|r| r["scorer"] == "eq1").all(|r| r["delta_fp"] == "0.000000"));
}

#[test]
fn sweep_at_unit_multiplier_matches_a_standalone_run() {
    let t = workspace(SMALL);
    let d = t.path();
    ok(d, &with_cfg(&["gen", "--out", "train", "--split", "1"]));
    ok(d, &with_cfg(&["gen", "--out", "eval"]));
    ok(d, &with_cfg(&["sweep", "--data", "train", "--eval", "eval", "--scheme", "inter", "--multipliers", "1", "--out", "sw.csv"]));
    let sweep = csv_rows(d.join("sw.csv"));
    assert_eq!(sweep.len(), 1);
    assert_eq!(sweep[0]["tau"], "500");

    ok(d, &with_cfg(&["train", "--data", "train", "--scheme", "intra", "--out", "intra.json"]));
    ok(d, &with_cfg(&["train", "--data", "train", "--scheme", "inter", "--out", "inter.json"]));
    ok(d, &with_cfg(&["track", "--data", "eval", "--sct", "intra.json", "--mct", "inter.json", "--out", "h.csv"]));
    ok(d, &["eval", "--gt", "eval/gt.csv", "--hyp", "h.csv", "--out", "ev.csv"]);
    let ev = csv_rows(d.join("ev.csv"));
    let level = |l: &str| ev.iter().find(|r| r["level"] == l && r["camera"] == "all").unwrap()["idf1"].clone();
    assert_eq!(sweep[0]["mct_idf1"], level("mct"));
    assert_eq!(sweep[0]["sct_idf1"], level("sct"));

    assert_eq!(code(d, &with_cfg(&["sweep", "--data", "train", "--scheme", "inter", "--multipliers", "", "--out", "x.csv"])), 2);
    assert_eq!(code(d, &with_cfg(&["sweep", "--data", "train", "--scheme", "global", "--multipliers", "1", "--out", "x.csv"])), 2);
}

#[test]
fn console_tables_are_fixed_width() {
    let t = table(&["k", "value"], &[vec!["alpha".into(), "1".into()], vec!["b".into(), "22".into()]]);
    let widths: Vec<usize> = t.lines().map(str::len).collect();
    assert!(widths.iter().all(|&w| w == widths[0]), "{t}");
}
