use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use levelset::formats::{read_segments_csv, Checkpoint};

const DROP_WAVE: &str = r#"
seed = 11
[problem]
function = "drop-wave"
[domain]
lower = [-5.0, -5.0]
upper = [5.0, 5.0]
[grid]
base_size = 0.15625
length_unit = 10.0
[oracle]
kind = "gaussian"
variance_factor = 1.0
variance_power = 4.0
[method]
beta = 0.5
max_level = 3
[estimate]
n_runs = 4
points_per_cell = 32
[sweep]
levels = [1, 2, 3, 4]
"#;

const SPHERE_3D: &str = r#"
seed = 2
[problem]
function = "sphere"
center = [0.0, 0.0, 0.0]
radius = 0.6
[domain]
lower = [-1.0, -1.0, -1.0]
upper = [1.0, 1.0, 1.0]
[grid]
base_size = 0.5
length_unit = 2.0
[method]
max_level = 2
"#;

fn levelset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levelset")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_ok(config: &Path, out: &Path) {
    let o = levelset(&["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn run_writes_four_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "dw.toml", DROP_WAVE);
    let out = dir.path().join("out");
    run_ok(&cfg, &out);
    let mut names: Vec<_> =
        std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["ledger.json", "mesh.json", "run.json", "segments.csv"]);

    let cp = Checkpoint::load(&out.join("mesh.json")).unwrap();
    let hash = &cp.provenance.config_hash;
    assert_eq!(cp.provenance.seed, 11);
    for name in names {
        let text = std::fs::read_to_string(out.join(&name)).unwrap();
        assert!(text.contains(hash.as_str()), "{name} lacks the config hash");
    }
}

#[test]
fn invalid_strictness_names_the_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &DROP_WAVE.replace("beta = 0.5", "beta = 0.5\nstrictness = 2.0"));
    let o = levelset(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("`R`"), "{}", stderr(&o));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn missing_config_is_an_io_error() {
    let o = levelset(&["run", "--config", "/nonexistent/levelset.toml"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/nonexistent/levelset.toml"), "{}", stderr(&o));
}

#[test]
fn sweep_writes_one_row_per_level_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "dw.toml", DROP_WAVE);
    let sweep = |out: &Path| {
        let o = levelset(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out.join("metrics.csv")).unwrap()
    };
    let a = sweep(&dir.path().join("a"));
    let text = String::from_utf8(a.clone()).unwrap();
    let rows: Vec<_> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "L,h_L,mean_error,std_error,total_work,n_cells");
    assert_eq!(rows.len(), 5);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/summary.json")).unwrap()).unwrap();
    assert!(summary["fitted_slope"].is_f64());
    assert_eq!(summary["target_slope"], -2.5);

    assert_eq!(a, sweep(&dir.path().join("b")));
}

#[test]
fn empty_sweep_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "dw.toml", &DROP_WAVE.replace("levels = [1, 2, 3, 4]", "levels = []"));
    let o = levelset(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("sweep.levels"), "{}", stderr(&o));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "dw.toml", &DROP_WAVE.replace("max_level = 3", "max_level = 1"));
    let out = dir.path().join("o");
    let o = levelset(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "99"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(Checkpoint::load(&out.join("mesh.json")).unwrap().provenance.seed, 99);
}

#[test]
fn extract_format_pairings() {
    let dir = tempfile::tempdir().unwrap();
    let out2 = dir.path().join("2d");
    run_ok(&write_config(dir.path(), "dw.toml", DROP_WAVE), &out2);
    let mesh2 = out2.join("mesh.json");
    let seg = dir.path().join("again.csv");
    let o = levelset(&["extract", "--checkpoint", mesh2.to_str().unwrap(), "--out", seg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    // Extraction from the checkpoint reproduces the run's own export.
    assert_eq!(std::fs::read(&seg).unwrap(), std::fs::read(out2.join("segments.csv")).unwrap());
    let pieces = read_segments_csv::<2>(&std::fs::read_to_string(&seg).unwrap()).unwrap();
    assert!(!pieces.is_empty());

    let o = levelset(&["extract", "--checkpoint", mesh2.to_str().unwrap(), "--format", "obj"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("dimension 2"), "{}", stderr(&o));

    let out3 = dir.path().join("3d");
    run_ok(&write_config(dir.path(), "s.toml", SPHERE_3D), &out3);
    assert!(out3.join("surface.obj").exists());
    let obj = dir.path().join("s.obj");
    let mesh3 = out3.join("mesh.json");
    let o = levelset(&[
        "extract",
        "--checkpoint",
        mesh3.to_str().unwrap(),
        "--format",
        "obj",
        "--out",
        obj.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&obj).unwrap();
    let vertices: Vec<[f64; 3]> = text
        .lines()
        .filter_map(|l| l.strip_prefix("v "))
        .map(|l| {
            let v: Vec<f64> = l.split_whitespace().map(|t| t.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect();
    assert!(text.lines().any(|l| l.starts_with("f ")));
    // Every vertex lies on a cell edge of the sphere's piecewise interpolant,
    // so within one cell width of the true sphere.
    for v in vertices {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        assert!((r - 0.6).abs() < 0.125, "{v:?}");
    }
}

#[test]
fn validate_fresh_roundtrip_and_corrupted() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    run_ok(&write_config(dir.path(), "dw.toml", DROP_WAVE), &out);
    let mesh = out.join("mesh.json");
    let o = levelset(&["validate", "--checkpoint", mesh.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok:"));

    // Read, rewrite and validate again.
    let cp = Checkpoint::load(&mesh).unwrap();
    let copy = dir.path().join("copy.json");
    std::fs::write(&copy, serde_json::to_string(&cp).unwrap()).unwrap();
    assert!(levelset(&["validate", "--checkpoint", copy.to_str().unwrap()]).status.success());
    assert_eq!(Checkpoint::load(&copy).unwrap().leaves, cp.leaves);

    // A leaf with the wrong number of vertex values.
    let mut bad = cp.clone();
    bad.leaves[7].values.pop();
    let path = dir.path().join("short.json");
    std::fs::write(&path, serde_json::to_string(&bad).unwrap()).unwrap();
    let o = levelset(&["validate", "--checkpoint", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("leaf record 7"), "{}", stderr(&o));

    // A leaf dropped: the partition has a hole.
    let mut bad = cp.clone();
    let gone = bad.leaves.remove(3);
    let path = dir.path().join("hole.json");
    std::fs::write(&path, serde_json::to_string(&bad).unwrap()).unwrap();
    let o = levelset(&["validate", "--checkpoint", path.to_str().unwrap()]);
    assert!(!o.status.success());
    let msg = stderr(&o);
    assert!(msg.contains(&format!("{:?}", gone.index)), "{msg}");

    // A leaf duplicated: overlap.
    let mut bad = cp;
    let dup = bad.leaves[5].clone();
    bad.leaves.push(dup.clone());
    let path = dir.path().join("dup.json");
    std::fs::write(&path, serde_json::to_string(&bad).unwrap()).unwrap();
    let o = levelset(&["validate", "--checkpoint", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains(&format!("{:?}", dup.index)), "{}", stderr(&o));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let c = levelset::commands::load_config(&path, None).unwrap();
            c.validate_sweep().unwrap();
            seen += 1;
        }
    }
    assert_eq!(seen, 3);
}
