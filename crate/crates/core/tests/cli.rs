use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use slca::data::SyntheticSpec;
use slca::experiment::{DatasetSpec, DictSize, ExperimentConfig};

fn slca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slca")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn small_config() -> ExperimentConfig {
    let spec = SyntheticSpec {
        height: 6,
        width: 6,
        frames: 3,
        train_per_class: 2,
        val_per_class: 1,
        density: 0.3,
        ..Default::default()
    };
    let mut cfg = ExperimentConfig::new(DatasetSpec::Synthetic { seed: None, spec });
    cfg.dictionary_size = DictSize::Absolute(12);
    cfg.tau = 10.0;
    cfg.display_ms = 30.0;
    cfg.epochs = 2;
    cfg
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let p = dir.join("cfg.json");
    fs::write(&p, cfg.to_json()).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn missing_config_is_a_usage_error_naming_the_path() {
    let out = slca(&["train", "--config", "missing.json", "--out", "x"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
    assert!(!Path::new("x").exists());
}

#[test]
fn unknown_flags_and_keys_are_rejected() {
    assert_eq!(code(&slca(&["train", "--frobnicate"])), 1);
    assert_eq!(code(&slca(&["nonsense"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"dataset": {"kind": "synthetic"}, "lamda": 0.2}"#).unwrap();
    let out = slca(&["train", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config());
    let out = slca(&["infer", "--config", &cfg, "--dict", "no-such.lcad", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn train_writes_echo_metrics_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.classifier = Some(Default::default());
    let cfg_path = write_config(dir.path(), &cfg);
    let run = dir.path().join("run");
    let out = slca(&["train", "--config", &cfg_path, "--seed", "3", "--out", run.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(run.join("config.json")).unwrap(), fs::read_to_string(&cfg_path).unwrap());
    let resolved = ExperimentConfig::from_json(&fs::read_to_string(run.join("config.resolved.json")).unwrap()).unwrap();
    assert_eq!(resolved.seed, 3);
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "epoch,rmse_train,rmse_val,sparsity_pct,accuracy,max_spikes_per_step");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,"));
    assert!(!lines[2].split(',').nth(4).unwrap().is_empty());
    for k in [0, 2] {
        assert!(run.join(format!("dict_epoch_{k}.lcad")).exists());
    }
    assert!(run.join("activity.csv").exists());
}

#[test]
fn sweep_table_has_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.epochs = 1;
    let cfg_path = write_config(dir.path(), &cfg);
    let run = dir.path().join("sweep");
    let out = slca(&["sweep", "--config", &cfg_path, "--axis", "s", "--values", "1,5,10,20", "--out", run.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(run.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    let values: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(values, ["1", "5", "10", "20"]);
}

#[test]
fn synth_is_deterministic_and_loads_as_events() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(code(&slca(&["synth", "--seed", "7", "--out", d.to_str().unwrap()])), 0);
    }
    let mut names: Vec<_> = fs::read_dir(a.join("train")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 4 * 12);
    for n in &names {
        assert_eq!(fs::read(a.join("train").join(n)).unwrap(), fs::read(b.join("train").join(n)).unwrap());
    }
    let samples = slca::data::load_event_dir(a.join("val"), &Default::default()).unwrap();
    assert_eq!(samples.len(), 4 * 5);
    let direct = slca::data::generate_synthetic(7, &SyntheticSpec::default()).unwrap();
    let mut expected: Vec<_> = direct.val.iter().map(|s| (s.label, s.input.values.clone())).collect();
    let mut loaded: Vec<_> = samples.iter().map(|s| (s.label, s.input.values.clone())).collect();
    let key = |x: &(usize, Vec<f64>)| (x.0, x.1.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    expected.sort_by_key(key);
    loaded.sort_by_key(key);
    assert_eq!(expected, loaded);
}

#[test]
fn events_to_frames_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rec.csv");
    fs::write(&csv, "t_us,x,y,p\n0,0,0,1\n10,1,0,-1\n1500,2,1,1\n1600,2,1,1\n").unwrap();
    let out_dir = dir.path().join("frames");
    let out = slca(&["events-to-frames", "--input", csv.to_str().unwrap(), "--sensor", "4x2", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read_to_string(out_dir.join("frames.csv")).unwrap(),
        "frame,y,x,value\n0,0,0,0.5\n0,0,1,-0.5\n1,1,2,1\n"
    );
    let pgm = fs::read(out_dir.join("frames.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n8 2\n255\n"));

    let cfg_path = write_config(dir.path(), &small_config());
    let run = dir.path().join("run");
    assert_eq!(code(&slca(&["train", "--config", &cfg_path, "--out", run.to_str().unwrap()])), 0);
    let dict = run.join("dict_epoch_2.lcad");
    let ex = dir.path().join("ex");
    let out = slca(&["export-dict", "--dict", dict.to_str().unwrap(), "--rows", "2", "--cols", "3", "--out", ex.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let img = fs::read(ex.join("dictionary.pgm")).unwrap();
    // 3 frames of 6 columns plus padding per cell
    assert!(img.starts_with(b"P5\n57 14\n255\n"));
    let out = slca(&["export-recon", "--config", &cfg_path, "--dict", dict.to_str().unwrap(), "--count", "2", "--out", ex.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read(ex.join("reconstructions.pgm")).unwrap().starts_with(b"P5\n38 14\n255\n"));
}

#[test]
fn classify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config());
    let run = dir.path().join("run");
    assert_eq!(code(&slca(&["train", "--config", &cfg_path, "--out", run.to_str().unwrap()])), 0);
    let dict = run.join("dict_epoch_2.lcad");
    let cls = dir.path().join("cls");
    let out = slca(&["classify-train", "--config", &cfg_path, "--dict", dict.to_str().unwrap(), "--out", cls.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let model = cls.join("classifier.lcls");
    let out = slca(&["classify-eval", "--config", &cfg_path, "--dict", dict.to_str().unwrap(), "--model", model.to_str().unwrap(), "--out", cls.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(cls.join("classify_eval.csv")).unwrap();
    let acc: f64 = report.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(fs::read_to_string(cls.join("predictions.csv")).unwrap().lines().count(), 1 + 4);
}

#[test]
fn conv_check_passes() {
    let out = slca(&["conv-check", "--seed", "4"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains(",true"));
}
