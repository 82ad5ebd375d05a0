//! End-to-end command-line tests: every command runs through
//! `cli::dispatch` against temporary files, checking the exit-code contract
//! and the produced artifacts.

use rnnlab::cells::{init_params, load_model, save_model, CellKind};
use rnnlab::cli::dispatch;
use std::path::Path;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["rnnlab"];
    argv.extend_from_slice(args);
    dispatch(argv)
}

fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["--version"]), 0);
    assert_eq!(run(&["predict", "--help"]), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["no-such-command"]), 1);
    assert_eq!(run(&["gen-data"]), 1); // missing required flags
    assert_eq!(run(&["train", "--data", "x.csv", "--cell", "weird", "--neurons", "4", "--seed", "1", "--out", "m.txt"]), 1);
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = path_str(&dir.path().join("p.csv"));
    // model file does not exist
    assert_eq!(
        run(&[
            "predict", "--model", "/nonexistent/model.txt", "--wave", "sine", "--window", "20",
            "--seed", "1", "--horizon", "5", "--out", &out,
        ]),
        2
    );
}

#[test]
fn generated_window_without_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("m.txt");
    save_model(&init_params(CellKind::Basic, 3, 1, 1), &model_path).unwrap();
    let out = path_str(&dir.path().join("p.csv"));
    let code = run(&[
        "predict", "--model", &path_str(&model_path), "--wave", "sine", "--window", "20",
        "--horizon", "5", "--out", &out,
    ]);
    assert_eq!(code, 1);
}

#[test]
fn gen_data_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data.csv");
    let args = [
        "gen-data", "--out", out.to_str().unwrap(), "--segments", "30", "--length-min", "5",
        "--length-max", "12", "--seed", "7",
    ];
    assert_eq!(run(&args), 0);
    let first = std::fs::read_to_string(&out).unwrap();
    assert_eq!(run(&args), 0);
    let second = std::fs::read_to_string(&out).unwrap();
    assert_eq!(first, second);
    // one comment line plus one row per example, two waves
    assert_eq!(first.lines().count(), 1 + 60);
}

#[test]
fn train_predict_pipeline_produces_well_formed_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = path_str(&dir.path().join("data.csv"));
    let model = path_str(&dir.path().join("model.txt"));
    let history = path_str(&dir.path().join("history.csv"));
    let pred = path_str(&dir.path().join("pred.csv"));
    let fast = path_str(&dir.path().join("fast.csv"));

    assert_eq!(
        run(&[
            "gen-data", "--out", &data, "--segments", "40", "--length-min", "5",
            "--length-max", "15", "--seed", "3",
        ]),
        0
    );
    assert_eq!(
        run(&[
            "train", "--data", &data, "--cell", "lstm", "--neurons", "4", "--epochs", "2",
            "--val", "0.2", "--seed", "3", "--out", &model, "--history", &history,
        ]),
        0
    );

    let bundle = load_model(Path::new(&model)).unwrap();
    assert_eq!(bundle.kind, CellKind::Lstm);
    assert_eq!(bundle.n, 4);
    assert_eq!(bundle.meta.epochs, 2);

    let hist = std::fs::read_to_string(&history).unwrap();
    assert_eq!(hist.lines().count(), 3); // header + 2 epochs
    assert!(hist.starts_with("epoch,train_loss,val_loss"));

    for (cmd, out) in [("predict", &pred), ("fast-predict", &fast)] {
        assert_eq!(
            run(&[
                cmd, "--model", &model, "--wave", "sine", "--window", "30", "--noise", "0.15",
                "--seed", "9", "--horizon", "12", "--out", out,
            ]),
            0
        );
        let text = std::fs::read_to_string(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 13);
        assert_eq!(lines[0], "step,t,predicted_1,reference_1");
    }

    // identical inputs and seeds give identical output bytes
    let first = std::fs::read_to_string(&pred).unwrap();
    assert_eq!(
        run(&[
            "predict", "--model", &model, "--wave", "sine", "--window", "30", "--noise", "0.15",
            "--seed", "9", "--horizon", "12", "--out", &pred,
        ]),
        0
    );
    assert_eq!(first, std::fs::read_to_string(&pred).unwrap());
}

#[test]
fn predict_reads_series_files() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("m.txt");
    save_model(&init_params(CellKind::Gated, 3, 1, 5), &model_path).unwrap();

    let series = rnnlab::signal::sample_series(rnnlab::signal::WaveKind::Triangle, 0.2, 25, 0.01).unwrap();
    let series_path = dir.path().join("x.csv");
    std::fs::write(&series_path, rnnlab::signal::series_to_csv(&series)).unwrap();

    let out = dir.path().join("p.csv");
    assert_eq!(
        run(&[
            "predict", "--model", &path_str(&model_path), "--input", &path_str(&series_path),
            "--horizon", "8", "--out", &path_str(&out),
        ]),
        0
    );
    let text = std::fs::read_to_string(&out).unwrap();
    // no reference columns when the input comes from a file
    assert!(text.starts_with("step,t,predicted_1\n"));
    assert_eq!(text.lines().count(), 9);
}

#[test]
fn diagnose_writes_series_fits_and_linearity() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("m.txt");
    save_model(&init_params(CellKind::Lstm, 4, 1, 11), &model_path).unwrap();
    let out_dir = dir.path().join("diag");
    assert_eq!(
        run(&[
            "diagnose", "--model", &path_str(&model_path), "--wave", "sine", "--window", "12",
            "--horizon", "5", "--amplitudes", "0,0.15", "--seed", "4", "--out-dir",
            &path_str(&out_dir),
        ]),
        0
    );
    for name in [
        "delta_hidden_a0.csv",
        "delta_hidden_a0_15.csv",
        "delta_cell_a0.csv",
        "delta_cell_a0_15.csv",
        "epsilon_a0.csv",
        "epsilon_a0_15.csv",
        "linearity.csv",
    ] {
        let path = out_dir.join(name);
        assert!(path.exists(), "missing {name}");
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with('#'), "{name} lacks a metadata header");
    }
    let delta = std::fs::read_to_string(out_dir.join("delta_hidden_a0_15.csv")).unwrap();
    // metadata header, i,value header, 12 rows, fit footer
    assert_eq!(delta.lines().count(), 1 + 1 + 12 + 1);
    assert!(delta.lines().last().unwrap().starts_with("# fit window=6..12"));
}

#[test]
fn contract_requires_a_basic_model() {
    let dir = tempfile::tempdir().unwrap();
    let lstm_path = dir.path().join("lstm.txt");
    save_model(&init_params(CellKind::Lstm, 4, 1, 2), &lstm_path).unwrap();
    let out = dir.path().join("c.csv");
    assert_eq!(
        run(&[
            "contract", "--model", &path_str(&lstm_path), "--window", "10", "--horizon", "3",
            "--seed", "1", "--out", &path_str(&out),
        ]),
        1
    );

    let basic_path = dir.path().join("basic.txt");
    save_model(&init_params(CellKind::Basic, 4, 1, 2), &basic_path).unwrap();
    assert_eq!(
        run(&[
            "contract", "--model", &path_str(&basic_path), "--window", "10", "--horizon", "3",
            "--seed", "1", "--out", &path_str(&out),
        ]),
        0
    );
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# fraction_contracting="));
    // (horizon-1) * (window-1) analysed transitions
    assert_eq!(text.lines().count(), 2 + 2 * 9);
}

#[test]
fn bench_and_robust_write_reports_with_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("m.txt");
    save_model(&init_params(CellKind::Lstm, 4, 1, 3), &model_path).unwrap();

    let bench_dir = dir.path().join("bench");
    assert_eq!(
        run(&[
            "bench", "--model", &path_str(&model_path), "--window", "20", "--horizon", "20",
            "--reps", "5", "--seed", "2", "--out-dir", &path_str(&bench_dir),
        ]),
        0
    );
    assert!(bench_dir.join("bench.csv").exists());
    let manifest = std::fs::read_to_string(bench_dir.join("bench.manifest.json")).unwrap();
    assert!(manifest.contains("kappa_theoretical"));

    let robust_dir = dir.path().join("robust");
    assert_eq!(
        run(&[
            "robust", "--model", &path_str(&model_path), "--window", "10", "--horizon", "6",
            "--rates", "0,0.002", "--fractions", "0.2", "--runs", "2", "--seed", "5",
            "--out-dir", &path_str(&robust_dir),
        ]),
        0
    );
    for stem in ["decay", "reshuffle"] {
        assert!(robust_dir.join(format!("{stem}.csv")).exists());
        assert!(robust_dir.join(format!("{stem}.manifest.json")).exists());
    }
}

#[test]
fn quality_sweep_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    assert_eq!(
        run(&[
            "quality-sweep", "--cells", "basic", "--neurons", "2", "--segments", "10",
            "--epochs", "1", "--eval-window", "10", "--eval-horizon", "6", "--runs", "2",
            "--seed", "1", "--out-dir", &path_str(&out_dir),
        ]),
        0
    );
    let csv = std::fs::read_to_string(out_dir.join("quality_sweep.csv")).unwrap();
    assert!(csv.starts_with("kind,n,seed,q,roughness_ratio,final_val_loss"));
    assert_eq!(csv.lines().count(), 3);
}
