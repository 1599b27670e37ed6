//! End-to-end tests of the `mosrank` binary: exit codes, artifact layout,
//! determinism, and the per-command error contracts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mosrank_core::data::{load_dataset, save_jsonl, FileFormat};
use mosrank_core::simulate::{simulate_dataset, SimConfig};
use mosrank_core::{Dataset, DatasetRecord};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mosrank"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_toy_data(dir: &Path) -> (PathBuf, PathBuf) {
    let cfg = SimConfig {
        n_systems: 10,
        samples_per_system: 12,
        raters_per_sample: 8,
        feature_dim: 4,
        seed: 5,
        ..Default::default()
    };
    let ds = simulate_dataset(&cfg).unwrap();
    let train = Dataset {
        name: "train".into(),
        records: ds.records[..90].to_vec(),
    };
    let dev = Dataset {
        name: "dev".into(),
        records: ds.records[90..].to_vec(),
    };
    let train_path = dir.join("train.jsonl");
    let dev_path = dir.join("dev.jsonl");
    let mut buf = Vec::new();
    save_jsonl(&train, &mut buf).unwrap();
    fs::write(&train_path, buf).unwrap();
    let mut buf = Vec::new();
    save_jsonl(&dev, &mut buf).unwrap();
    fs::write(&dev_path, buf).unwrap();
    (train_path, dev_path)
}

fn minimal_train_config(dir: &Path, extra_loss: &str) -> PathBuf {
    let (train_path, dev_path) = write_toy_data(dir);
    let cfg = format!
        ("seed = 3\n\n[data]\ntrain = {}\ndev = {}\n\n[model]\narchitecture = linear\n\n[loss]\nfamily = l1\n{extra_loss}\n[train]\nbatch_size = 16\nepochs = 4\npatience = 4\n",
        train_path.display(),
        dev_path.display());
    let path = dir.join("train.cfg");
    fs::write(&path, cfg).unwrap();
    path
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn train_minimal_config_writes_four_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = minimal_train_config(tmp.path(), "");
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        vec!["checkpoint.json", "config.resolved", "metrics_dev.json", "trainlog.csv"]
    );
}

#[test]
fn invalid_lambda_names_field_and_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = minimal_train_config(tmp.path(), "lambda_c = 1.5\n");
    let out = run(&["train", "--config", cfg.to_str().unwrap(), "--out", "unused"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.contains("loss.lambda_c"), "{stderr}");
}

#[test]
fn unknown_config_key_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = minimal_train_config(tmp.path(), "definitely_not_a_key = 1\n");
    let out = run(&["train", "--config", cfg.to_str().unwrap(), "--out", "unused"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("definitely_not_a_key"));
}

#[test]
fn bad_invocation_exits_two() {
    let out = run(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rerun_is_byte_identical_and_resolved_config_roundtrips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = minimal_train_config(tmp.path(), "");
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out in [&out_a, &out_b] {
        let res = run(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--quiet",
        ]);
        assert!(res.status.success());
    }
    assert_eq!(dir_bytes(&out_a), dir_bytes(&out_b));

    // The resolved config reruns to identical results.
    let out_c = tmp.path().join("c");
    let res = run(&[
        "train",
        "--config",
        out_a.join("config.resolved").to_str().unwrap(),
        "--out",
        out_c.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(res.status.success());
    assert_eq!(dir_bytes(&out_a), dir_bytes(&out_c));
}

#[test]
fn eval_matches_trainlog_and_counts_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = minimal_train_config(tmp.path(), "");
    let out_dir = tmp.path().join("out");
    assert!(run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ])
    .status
    .success());

    let eval_dir = tmp.path().join("eval");
    let res = run(&[
        "eval",
        "--checkpoint",
        out_dir.join("checkpoint.json").to_str().unwrap(),
        "--data",
        tmp.path().join("dev.jsonl").to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    // predictions.csv has one row per record plus the header.
    let preds = fs::read_to_string(eval_dir.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 30 + 1);

    // Eval on the dev set reproduces the best dev SRCC from the train log.
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval_dir.join("metrics.json")).unwrap()).unwrap();
    let eval_srcc = metrics[0]["srcc"].as_f64().unwrap();
    let log = fs::read_to_string(out_dir.join("trainlog.csv")).unwrap();
    let best_logged = log
        .lines()
        .skip(1)
        .map(|line| line.split(',').nth(4).unwrap().parse::<f64>().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(eval_srcc, best_logged);
}

#[test]
fn eval_single_system_reports_undefined_status() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = minimal_train_config(tmp.path(), "");
    let out_dir = tmp.path().join("out");
    assert!(run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ])
    .status
    .success());

    // Rewrite dev data as a single system.
    let dev = load_dataset(&tmp.path().join("dev.jsonl"), FileFormat::Jsonl).unwrap();
    let single = Dataset {
        name: "single".into(),
        records: dev
            .records
            .iter()
            .map(|r| DatasetRecord {
                system_id: "only".into(),
                ..r.clone()
            })
            .collect(),
    };
    let single_path = tmp.path().join("single.jsonl");
    let mut buf = Vec::new();
    save_jsonl(&single, &mut buf).unwrap();
    fs::write(&single_path, buf).unwrap();

    let eval_dir = tmp.path().join("eval_single");
    let res = run(&[
        "eval",
        "--checkpoint",
        out_dir.join("checkpoint.json").to_str().unwrap(),
        "--data",
        single_path.to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(res.status.success());
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics[1]["level"], "system");
    assert_eq!(metrics[1]["status"], "undefined");
    assert!(metrics[1]["srcc"].is_null());
}

#[test]
fn eval_dimension_mismatch_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = minimal_train_config(tmp.path(), "");
    let out_dir = tmp.path().join("out");
    assert!(run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ])
    .status
    .success());

    // A dataset with a different feature dimension.
    let other = SimConfig {
        n_systems: 3,
        samples_per_system: 4,
        feature_dim: 7,
        seed: 9,
        ..Default::default()
    };
    let ds = simulate_dataset(&other).unwrap();
    let path = tmp.path().join("wrong_dim.jsonl");
    let mut buf = Vec::new();
    save_jsonl(&ds, &mut buf).unwrap();
    fs::write(&path, buf).unwrap();

    let res = run(&[
        "eval",
        "--checkpoint",
        out_dir.join("checkpoint.json").to_str().unwrap(),
        "--data",
        path.to_str().unwrap(),
        "--out",
        tmp.path().join("eval_bad").to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(res.status.code(), Some(1));
}

fn write_semisup_inputs(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let cfg = SimConfig {
        n_systems: 8,
        samples_per_system: 15,
        raters_per_sample: 8,
        feature_dim: 4,
        seed: 31,
        ..Default::default()
    };
    let ds = simulate_dataset(&cfg).unwrap();
    let labeled = Dataset {
        name: "labeled".into(),
        records: ds.records[..40].to_vec(),
    };
    let pool = Dataset {
        name: "pool".into(),
        records: ds.records[40..90].to_vec(),
    };
    let dev = Dataset {
        name: "dev".into(),
        records: ds.records[90..].to_vec(),
    };
    let mut paths = Vec::new();
    for (name, part) in [("labeled", &labeled), ("pool", &pool), ("dev", &dev)] {
        let path = dir.join(format!("{name}.jsonl"));
        let mut buf = Vec::new();
        save_jsonl(part, &mut buf).unwrap();
        fs::write(&path, buf).unwrap();
        paths.push(path);
    }
    (paths.remove(0), paths.remove(0), paths.remove(0))
}

fn train_starting_checkpoint(dir: &Path, labeled: &Path, dev: &Path) -> PathBuf {
    let cfg_text = format!(
        "seed = 2\n\n[data]\ntrain = {}\ndev = {}\n\n[model]\narchitecture = mlp\nhidden_sizes = 8\n\n[loss]\nfamily = l1\n\n[train]\nbatch_size = 16\nepochs = 6\npatience = 6\n",
        labeled.display(),
        dev.display()
    );
    let cfg_path = dir.join("pretrain.cfg");
    fs::write(&cfg_path, cfg_text).unwrap();
    let out = dir.join("pretrain_out");
    assert!(run(&[
        "train",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ])
    .status
    .success());
    out.join("checkpoint.json")
}

#[test]
fn semisup_zero_shot_degenerates_to_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let (labeled, _pool, dev) = write_semisup_inputs(tmp.path());
    let ckpt = train_starting_checkpoint(tmp.path(), &labeled, &dev);

    let cfg_text = format!(
        "seed = 4\n\n[data]\ndev = {}\nstart_checkpoint = {}\n\n[loss]\nfamily = l1\n\n[train]\nbatch_size = 16\nepochs = 3\npatience = 3\n",
        dev.display(),
        ckpt.display()
    );
    let cfg_path = tmp.path().join("zero.cfg");
    fs::write(&cfg_path, cfg_text).unwrap();
    let out_dir = tmp.path().join("zero_out");
    let res = run(&[
        "semisup",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    // One round (round 0), and the dev metrics equal a plain eval of the
    // starting checkpoint.
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);

    let eval_dir = tmp.path().join("zero_eval");
    assert!(run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        dev.to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
        "--quiet",
    ])
    .status
    .success());
    let a: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("metrics_dev.json")).unwrap())
            .unwrap();
    let b: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn semisup_few_shot_is_single_round() {
    let tmp = tempfile::tempdir().unwrap();
    let (labeled, _pool, dev) = write_semisup_inputs(tmp.path());

    let cfg_text = format!(
        "seed = 4\n\n[data]\nlabeled = {}\ndev = {}\n\n[model]\narchitecture = linear\n\n[loss]\nfamily = l1\n\n[train]\nbatch_size = 16\nepochs = 4\npatience = 4\n",
        labeled.display(),
        dev.display()
    );
    let cfg_path = tmp.path().join("few.cfg");
    fs::write(&cfg_path, cfg_text).unwrap();
    let out_dir = tmp.path().join("few_out");
    let res = run(&[
        "semisup",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("0,40,0,0,true"));
}

#[test]
fn semisup_bapmos_summary_matches_selection_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let (labeled, pool, dev) = write_semisup_inputs(tmp.path());
    let ckpt = train_starting_checkpoint(tmp.path(), &labeled, &dev);

    let cfg_text = format!(
        "seed = 4\n\n[data]\nunlabeled = {}\ndev = {}\nstart_checkpoint = {}\n\n[semisup]\nrounds_max = 2\nselection = bapmos\n\n[bapmos]\nbins = 4\n\n[model]\narchitecture = mlp\nhidden_sizes = 8\n\n[loss]\nfamily = l1\n\n[train]\nbatch_size = 16\nepochs = 3\npatience = 3\ndropout = 0.2\n",
        pool.display(),
        dev.display(),
        ckpt.display()
    );
    let cfg_path = tmp.path().join("bapmos.cfg");
    fs::write(&cfg_path, cfg_text).unwrap();
    let out_dir = tmp.path().join("bapmos_out");
    let res = run(&[
        "semisup",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    for line in summary.lines().skip(2) {
        let fields: Vec<&str> = line.split(',').collect();
        let round: usize = fields[0].parse().unwrap();
        let n_selected: usize = fields[3].parse().unwrap();
        let idx_file = out_dir
            .join("rounds")
            .join(format!("round_{round:02}"))
            .join("selected_indices.json");
        let indices: Vec<usize> =
            serde_json::from_str(&fs::read_to_string(idx_file).unwrap()).unwrap();
        assert_eq!(indices.len(), n_selected);
        // Balanced selection: equal counts per non-empty bin means the total
        // divides evenly by the number of bins used.
        let pseudo = fs::read_to_string(
            out_dir
                .join("rounds")
                .join(format!("round_{round:02}"))
                .join("pseudo_labels.jsonl"),
        )
        .unwrap();
        assert_eq!(pseudo.lines().count(), n_selected);
    }
}

#[test]
fn simulate_generate_output_is_loadable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_text = "seed = 6\n\n[sim]\nmode = generate\nn_systems = 5\nsamples_per_system = 6\nfeature_dim = 3\n";
    let cfg_path = tmp.path().join("gen.cfg");
    fs::write(&cfg_path, cfg_text).unwrap();
    let out_dir = tmp.path().join("gen_out");
    let res = run(&[
        "simulate",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(res.status.success());
    let ds = load_dataset(&out_dir.join("dataset.jsonl"), FileFormat::Jsonl).unwrap();
    assert_eq!(ds.len(), 30);
    assert_eq!(ds.feature_dim(), 3);
}

#[test]
fn simulate_distortion_reports_zero_srcc_delta() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_text = "seed = 6\n\n[sim]\nmode = distortion\nn_systems = 8\nsamples_per_system = 10\nfeature_dim = 3\n\n[distortion]\nkind = shift\nc = 100\n\n[model]\narchitecture = linear\n\n[loss]\nfamily = l1\n\n[train]\nbatch_size = 8\nepochs = 3\npatience = 3\n";
    let cfg_path = tmp.path().join("dist.cfg");
    fs::write(&cfg_path, cfg_text).unwrap();
    let out_dir = tmp.path().join("dist_out");
    let res = run(&[
        "simulate",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("distortion.json")).unwrap())
            .unwrap();
    assert_eq!(report["srcc_delta"].as_f64(), Some(0.0));
    assert_eq!(report["ktau_delta"].as_f64(), Some(0.0));
    assert!(report["mse_delta"].as_f64().unwrap() > 9000.0);
}

#[test]
fn simulate_comparison_emits_rows_per_family_and_level() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_text = "seed = 6\n\n[sim]\nmode = comparison\nn_systems = 8\nsamples_per_system = 10\nfeature_dim = 3\n\n[comparison]\nfamilies = l1,prs,utmos_margin,combined\n\n[model]\narchitecture = linear\n\n[train]\nbatch_size = 8\nepochs = 3\npatience = 3\n";
    let cfg_path = tmp.path().join("cmp.cfg");
    fs::write(&cfg_path, cfg_text).unwrap();
    let out_dir = tmp.path().join("cmp_out");
    let res = run(&[
        "simulate",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = fs::read_to_string(out_dir.join("comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 4 * 2);
    let curves = fs::read_to_string(out_dir.join("srcc_curves.csv")).unwrap();
    assert!(curves.lines().count() > 4);
}
