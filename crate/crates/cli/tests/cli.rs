use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

use scene_placer_cli::args::Cli;
use scene_placer_cli::config::Config;
use scene_placer_cli::{Context, SEED_ENV};

use clap::Parser;

const BIN: &str = env!("CARGO_BIN_EXE_scene-placer");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove(SEED_ENV)
        .output()
        .expect("spawn scene-placer")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        "[contact_net]\nwidth = 8\n\n[train.pose]\nsteps = 5\n\n[train.contact]\nsteps = 3\nbatch_size = 4\n{extra}"
    );
    std::fs::write(&path, text).unwrap();
    path
}

/// A room fixture with assets and briefly trained networks, shared by the
/// tests of this binary. Placement outputs go to per-test directories.
struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

fn workspace() -> &'static Workspace {
    static WS: OnceLock<Workspace> = OnceLock::new();
    WS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = write_config(&root, "");
        let c = config.to_str().unwrap();
        let o = run(&["--config", c, "build-assets", "--fixture", "room"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let o = run(&["--config", c, "train"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        Workspace {
            _dir: dir,
            root,
            config,
        }
    })
}

fn out_dir(name: &str) -> String {
    workspace().root.join(name).to_str().unwrap().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn without_meta(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("meta");
    v
}

#[test]
fn default_config_round_trips() {
    let cfg = Config::default();
    let text = cfg.to_toml().unwrap();
    let back = Config::parse(&text, Path::new("default.toml")).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_toml().unwrap(), text);
}

#[test]
fn shipped_toy_config_round_trips() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.toml");
    let text = std::fs::read_to_string(&path).unwrap();
    let cfg = Config::parse(&text, &path).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.contact_net.width, 16);
    let again = Config::parse(&cfg.to_toml().unwrap(), &path).unwrap();
    assert_eq!(again, cfg);
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[feasibility]\ngrid_spacin = 0.2\n").unwrap();
    let err = Config::load(&path).unwrap_err().to_string();
    assert!(err.contains("grid_spacin"), "{err}");
    assert!(err.contains("bad.toml"), "{err}");

    std::fs::write(&path, "[feasibility]\ngrid_spacing = -0.1\n").unwrap();
    let err = Config::load(&path).unwrap_err().to_string();
    assert!(err.contains("grid_spacing"), "{err}");

    let o = run(&["--config", path.to_str().unwrap(), "evaluate"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn relative_paths_follow_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested").join("c.toml");
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(&path, "[paths]\nscene = \"./scenes/a.ply\"\n").unwrap();
    let cfg = Config::load(&path).unwrap();
    assert_eq!(cfg.paths.scene, dir.path().join("nested/scenes/a.ply"));
    assert_eq!(cfg.paths.body, dir.path().join("nested/assets/body.spbody"));
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let with_seed = dir.path().join("s.toml");
    std::fs::write(&with_seed, "seed = 11\n").unwrap();
    let seed = |args: &[&str], env: Option<&str>| {
        let mut full = vec!["scene-placer"];
        full.extend_from_slice(args);
        full.push("evaluate");
        Context::from_cli(&Cli::try_parse_from(full).unwrap(), env).map(|c| c.seed)
    };
    let c = with_seed.to_str().unwrap();
    assert_eq!(seed(&[], None).unwrap(), 0);
    assert_eq!(seed(&[], Some("7")).unwrap(), 7);
    assert_eq!(seed(&["--config", c], Some("7")).unwrap(), 11);
    assert_eq!(seed(&["--config", c, "--seed", "3"], Some("7")).unwrap(), 3);
    assert_eq!(
        seed(&["--seed", "18446744073709551615"], None).unwrap(),
        u64::MAX
    );
    let err = seed(&[], Some("seven")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains(SEED_ENV));
}

#[test]
fn unknown_action_lists_the_valid_ones() {
    let o = run(&["place", "--action", "jump", "--object", "chair"]);
    assert_eq!(code(&o), 2);
    let msg = stderr(&o);
    for a in ["stand", "sit", "lie"] {
        assert!(msg.contains(a), "{msg}");
    }
}

#[test]
fn unknown_object_lists_the_vocabulary() {
    let o = run(&["place", "--action", "sit", "--object", "throne"]);
    assert_eq!(code(&o), 2);
    let msg = stderr(&o);
    assert!(
        msg.contains("throne") && msg.contains("chair") && msg.contains("bench"),
        "{msg}"
    );
}

#[test]
fn zero_jobs_is_a_usage_error() {
    let o = run(&["--jobs", "0", "evaluate"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn missing_labels_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let c = config.to_str().unwrap();
    let o = run(&["--config", c, "build-assets", "--fixture", "room"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let labels = dir.path().join("scene.labels.json");
    std::fs::remove_file(&labels).unwrap();
    let o = run(&["--config", c, "build-assets"]);
    assert_eq!(code(&o), 3);
    let msg = stderr(&o);
    assert!(msg.contains("labels file"), "{msg}");
    assert!(msg.contains(labels.to_str().unwrap()), "{msg}");
}

#[test]
fn asset_builds_are_cached_and_reproducible() {
    let ws = workspace();
    let c = ws.config.to_str().unwrap();
    let o = run(&["--config", c, "build-assets"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let first = read_json(&ws.root.join("assets/manifest.json"));
    assert_eq!(first["meta"]["sdf_cache_hit"], Value::Bool(true));

    // A fresh build elsewhere from the same inputs.
    let other = tempfile::tempdir().unwrap();
    for f in ["scene.ply", "scene.labels.json"] {
        std::fs::copy(ws.root.join(f), other.path().join(f)).unwrap();
    }
    let config = write_config(other.path(), "");
    let o = run(&["--config", config.to_str().unwrap(), "build-assets"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let second = read_json(&other.path().join("assets/manifest.json"));
    assert_eq!(second["meta"]["sdf_cache_hit"], Value::Bool(false));
    assert_eq!(without_meta(first), without_meta(second));
    for f in [
        "body.spbody",
        "spiral.json",
        "scene.spsdf",
        "pose.spcorpus",
        "contact.spcorpus",
    ] {
        let a = std::fs::read(ws.root.join("assets").join(f)).unwrap();
        let b = std::fs::read(other.path().join("assets").join(f)).unwrap();
        assert!(a == b, "{f} differs between builds");
    }

    // Changing the SDF settings invalidates the cache.
    let config = write_config(other.path(), "\n[sdf]\nvoxel_size = 0.04\n");
    let o = run(&["--config", config.to_str().unwrap(), "build-assets"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let third = read_json(&other.path().join("assets/manifest.json"));
    assert_eq!(third["meta"]["sdf_cache_hit"], Value::Bool(false));
}

#[test]
fn training_is_seed_pinned_and_logs_the_loss_curve() {
    let ws = workspace();
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("again.spnet");
    let o = run(&[
        "--config",
        ws.config.to_str().unwrap(),
        "--pose-net",
        net.to_str().unwrap(),
        "train",
        "pose",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let a = std::fs::read(&net).unwrap();
    let b = std::fs::read(ws.root.join("assets/pose.spnet")).unwrap();
    assert!(a == b, "retrained checkpoint differs");
    let curve = std::fs::read_to_string(dir.path().join("again_loss.csv")).unwrap();
    let lines: Vec<&str> = curve.lines().collect();
    assert_eq!(lines[0], "step,total,reconstruction,kl");
    assert_eq!(lines.len(), 1 + 5);
}

#[test]
fn training_without_a_corpus_fails_validation() {
    let ws = workspace();
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--config",
        ws.config.to_str().unwrap(),
        "--assets-dir",
        dir.path().to_str().unwrap(),
        "train",
        "contact",
    ]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("contact corpus"), "{}", stderr(&o));
}

#[test]
fn raw_placements_are_written_without_filtering_or_refinement() {
    let ws = workspace();
    let out = out_dir("raw");
    let o = run(&[
        "--config",
        ws.config.to_str().unwrap(),
        "--output-dir",
        &out,
        "place",
        "--action",
        "sit",
        "--object",
        "chair",
        "--no-pft",
        "--no-opt",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = read_json(&Path::new(&out).join("report.json"));
    assert_eq!(report["ablation"]["enable_pft"], Value::Bool(false));
    assert_eq!(report["ablation"]["enable_opt"], Value::Bool(false));
    let placed = report["placements"].as_array().unwrap().len();
    assert_eq!(
        placed,
        report["tallies"]["candidates"].as_u64().unwrap() as usize
    );
    assert!(placed > 0);
    for rank in 0..placed {
        assert!(Path::new(&out)
            .join(format!("placement_{rank:03}.ply"))
            .is_file());
    }
    // No refinement, so no traces.
    assert!(!Path::new(&out).join("trace_000.csv").exists());
}

#[test]
fn barely_trained_networks_find_no_placement() {
    let ws = workspace();
    let out = out_dir("none");
    let o = run(&[
        "--config",
        ws.config.to_str().unwrap(),
        "--output-dir",
        &out,
        "place",
        "--action",
        "sit",
        "--object",
        "chair",
    ]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let report = read_json(&Path::new(&out).join("report.json"));
    assert!(report["placements"].as_array().unwrap().is_empty());
    assert!(stderr(&o).contains("no feasible placement"));
}

#[test]
fn evaluation_clusters_a_hundred_placements_and_is_reproducible() {
    let ws = workspace();
    let out = out_dir("corpus");
    let c = ws.config.to_str().unwrap();
    let o = run(&[
        "--config",
        c,
        "--output-dir",
        &out,
        "place",
        "--action",
        "sit",
        "--object",
        "chair",
        "--no-pft",
        "--no-opt",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // One run places a single sampled pose at every candidate; spread the
    // poses so the clustering has something to separate.
    let path = Path::new(&out).join("report.json");
    let mut report = read_json(&path);
    for (i, p) in report["placements"]
        .as_array_mut()
        .unwrap()
        .iter_mut()
        .enumerate()
    {
        for (j, t) in p["pose"]["theta"]
            .as_array_mut()
            .unwrap()
            .iter_mut()
            .enumerate()
        {
            let v = t.as_f64().unwrap() + 0.3 * ((i * 7 + j * 13) as f64).sin();
            *t = serde_json::json!(v);
        }
    }
    std::fs::write(&path, serde_json::to_string_pretty(&report).unwrap()).unwrap();
    let eval = |args: &[&str]| {
        let mut full = vec!["--config", c];
        full.extend_from_slice(args);
        full.extend(["evaluate", &out]);
        let o = run(&full);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        read_json(&Path::new(&out).join("evaluation.json"))
    };
    let first = eval(&[]);
    assert_eq!(first["summary"]["placements"], 100);
    assert_eq!(first["diversity"]["clusters"], 50);
    assert!(first["clustering_skipped"].is_null());
    let entropy = first["diversity"]["entropy"].as_f64().unwrap();
    assert!(entropy > 0.0 && entropy <= 50f64.ln() + 1e-12);
    let csv = std::fs::read_to_string(Path::new(&out).join("evaluation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 100);

    let second = eval(&[]);
    assert_eq!(without_meta(first.clone()), without_meta(second));
    let sequential = eval(&["--jobs", "1"]);
    assert_eq!(without_meta(first.clone()), without_meta(sequential));
    let reseeded = eval(&["--seed", "5"]);
    assert_eq!(first["summary"], reseeded["summary"]);
}

#[test]
fn small_corpora_skip_clustering_with_a_warning() {
    let ws = workspace();
    let out = out_dir("small");
    let c = ws.config.to_str().unwrap();
    let o = run(&[
        "--config",
        c,
        "--output-dir",
        &out,
        "place",
        "--action",
        "sit",
        "--object",
        "chair",
        "--no-pft",
        "--no-opt",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // 100 placements; ask for more clusters than that.
    let path = ws.root.join("many_clusters.toml");
    std::fs::copy(&ws.config, &path).unwrap();
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("\n[evaluate]\nclusters = 150\n");
    std::fs::write(&path, text).unwrap();
    let o = run(&["--config", path.to_str().unwrap(), "evaluate", &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("diversity skipped"), "{}", stderr(&o));
    let report = read_json(&Path::new(&out).join("evaluation.json"));
    assert!(report["diversity"].is_null());
    assert_eq!(report["summary"]["placements"], 100);
    assert!(report["summary"]["mean_nc"].as_f64().unwrap() > 0.0);
}

#[test]
fn evaluating_an_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["evaluate", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("no report.json"), "{}", stderr(&o));
}

#[test]
fn placement_is_identical_with_one_worker() {
    let ws = workspace();
    let c = ws.config.to_str().unwrap();
    let (a, b) = (out_dir("jobs_default"), out_dir("jobs_one"));
    for (out, jobs) in [(&a, None), (&b, Some("1"))] {
        let mut args = vec!["--config", c, "--output-dir", out.as_str(), "--seed", "4"];
        if let Some(j) = jobs {
            args.extend(["--jobs", j]);
        }
        args.extend(["place", "--action", "sit", "--object", "chair", "--no-pft"]);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let ra = read_json(&Path::new(&a).join("report.json"));
    let rb = read_json(&Path::new(&b).join("report.json"));
    assert_eq!(without_meta(ra), without_meta(rb));
    for f in ["placement_000.ply", "trace_000.csv"] {
        let x = std::fs::read(Path::new(&a).join(f)).unwrap();
        let y = std::fs::read(Path::new(&b).join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}
