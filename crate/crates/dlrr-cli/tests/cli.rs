//! End-to-end runs of the `dlrr` binary: the synth -> corrupt -> train ->
//! evaluate flow, the benchmark runner, and the documented exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(tag: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("cli-{tag}"));
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn dlrr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlrr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

#[test]
fn synth_corrupt_train_evaluate_flow() {
    let dir = scratch("flow");
    let data = dir.join("data");
    assert_success(&dlrr(&[
        "synth",
        "--classes", "3",
        "--ambient-dim", "64",
        "--rank", "2",
        "--per-class", "8",
        "--noise", "0.02",
        "--seed", "5",
        "--out", data.to_str().unwrap(),
    ]));
    assert!(data.join("samples.mat").exists());
    assert!(data.join("labels.csv").exists());
    assert!(data.join("clean.mat").exists());

    let corrupted = dir.join("corrupted");
    assert_success(&dlrr(&[
        "corrupt",
        "--input", data.to_str().unwrap(),
        "--kind", "pixel",
        "--fraction", "0.25",
        "--extent", "0.2",
        "--seed", "9",
        "--out", corrupted.to_str().unwrap(),
    ]));
    assert!(corrupted.join("samples.mat").exists());
    let sidecar = fs::read_to_string(corrupted.join("corruption.txt")).unwrap();
    assert!(sidecar.contains("kind = pixel"));
    assert!(sidecar.contains("rng_seed = 9"));

    let model = dir.join("model");
    assert_success(&dlrr(&[
        "train",
        "--data", corrupted.to_str().unwrap(),
        "--dim", "4",
        "--lambda", "0.4",
        "--trace",
        "--out", model.to_str().unwrap(),
    ]));
    assert!(model.join("config.txt").exists());
    assert!(model.join("crc_dictionary.mat").exists());
    let trace = fs::read_to_string(model.join("trace.csv")).unwrap();
    assert!(trace.starts_with("class_id,iteration,"));

    let predict = dlrr(&[
        "predict",
        "--model", model.to_str().unwrap(),
        "--queries", data.join("samples.mat").to_str().unwrap(),
    ]);
    assert_success(&predict);
    let csv = String::from_utf8(predict.stdout).unwrap();
    assert!(csv.starts_with("query_index,true_label,predicted_label"));
    assert_eq!(csv.lines().count(), 25); // header + 24 queries

    let report = dir.join("report.csv");
    let evaluate = dlrr(&[
        "evaluate",
        "--model", model.to_str().unwrap(),
        "--data", data.to_str().unwrap(),
        "--out", report.to_str().unwrap(),
    ]);
    assert_success(&evaluate);
    let stdout = String::from_utf8(evaluate.stdout).unwrap();
    assert!(stdout.contains("accuracy:"), "stdout: {stdout}");
    assert!(report.exists());
}

#[test]
fn recover_writes_per_class_outputs() {
    let dir = scratch("recover");
    let data = dir.join("data");
    assert_success(&dlrr(&[
        "synth",
        "--classes", "2",
        "--ambient-dim", "40",
        "--rank", "2",
        "--per-class", "6",
        "--seed", "3",
        "--out", data.to_str().unwrap(),
    ]));
    let out = dir.join("recovery");
    let output = dlrr(&[
        "recover",
        "--data", data.to_str().unwrap(),
        "--lambda", "0.5",
        "--trace",
        "--out", out.to_str().unwrap(),
    ]);
    assert_success(&output);
    assert!(out.join("clean_dictionary.mat").exists());
    assert!(out.join("class_0_z.mat").exists());
    assert!(out.join("class_1_e.mat").exists());
    assert!(out.join("trace.csv").exists());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("converged = true"), "stdout: {stdout}");
}

const BENCH_CONFIG: &str = "\
[data]
kind = synthetic
classes = 3
ambient_dim = 49
rank = 2
per_class = 10
train_per_class = 7
noise = 0.02
scale = 2.0

[corruption]
kind = pixel
sample_fraction = 0.2
per_image_extent = 0.2

[experiment]
methods = crc,nn
dims = 3,5
seeds = 1,2

[solver]
lambda = 0.2
";

#[test]
fn benchmark_is_deterministic_across_runs() {
    let dir = scratch("bench");
    let config = dir.join("exp.conf");
    fs::write(&config, BENCH_CONFIG).unwrap();
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out in [&out_a, &out_b] {
        assert_success(&dlrr(&[
            "benchmark",
            "--config", config.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ]));
    }
    let long_a = fs::read(out_a.join("accuracy_long.csv")).unwrap();
    let long_b = fs::read(out_b.join("accuracy_long.csv")).unwrap();
    assert_eq!(long_a, long_b);
    let wide = fs::read_to_string(out_a.join("accuracy_wide.csv")).unwrap();
    assert!(wide.starts_with("method,dim,mean_accuracy\n"));
    assert_eq!(wide.lines().count(), 5);
    assert!(!out_a.join("errors.csv").exists());
}

#[test]
fn config_errors_exit_with_code_one() {
    let dir = scratch("badconfig");
    let config = dir.join("exp.conf");
    fs::write(&config, format!("{BENCH_CONFIG}\n[solver]\nmystery = 1\n")).unwrap();
    let output = dlrr(&[
        "benchmark",
        "--config", config.to_str().unwrap(),
        "--out", dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1);
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("mystery"), "stderr: {stderr}");

    // invalid flag combinations are also configuration errors
    let output = dlrr(&["corrupt", "--input", "x.mat", "--kind", "squiggle",
        "--fraction", "0.1", "--extent", "0.5", "--out", "o"]);
    assert_eq!(exit_code(&output), 1);
}

#[test]
fn data_errors_exit_with_code_two() {
    let dir = scratch("baddata");
    let output = dlrr(&[
        "train",
        "--data", dir.join("missing").to_str().unwrap(),
        "--dim", "3",
        "--out", dir.join("model").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 2);

    let output = dlrr(&[
        "evaluate",
        "--model", dir.join("nomodel").to_str().unwrap(),
        "--data", dir.join("missing").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn numerical_failures_exit_with_code_three() {
    let dir = scratch("numfail");
    let data = dir.join("data");
    assert_success(&dlrr(&[
        "synth",
        "--classes", "2",
        "--ambient-dim", "30",
        "--rank", "1",
        "--per-class", "5",
        "--seed", "2",
        "--out", data.to_str().unwrap(),
    ]));
    let model = dir.join("model");
    assert_success(&dlrr(&[
        "train",
        "--data", data.to_str().unwrap(),
        "--dim", "1",
        "--lambda", "0.5",
        "--out", model.to_str().unwrap(),
    ]));
    // queries of the wrong dimensionality fail in the numerical stages
    let bad_queries = dir.join("bad.mat");
    let m = nalgebra::DMatrix::<f64>::zeros(7, 2);
    dlrr::data::save_matrix(&bad_queries, &m).unwrap();
    let output = dlrr(&[
        "predict",
        "--model", model.to_str().unwrap(),
        "--queries", bad_queries.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 3);
}

#[test]
fn manifest_inputs_work_end_to_end() {
    let dir = scratch("manifest");
    // tiny 4x4 PGM corpus: 2 subjects x 4 images
    for subject in 0..2 {
        for image in 0..4 {
            let value = 60 + 40 * subject + 10 * image;
            let body = format!(
                "P2\n4 4\n255\n{}\n",
                vec![value.to_string(); 16].join(" ")
            );
            fs::write(dir.join(format!("s{subject}_{image}.pgm")), body).unwrap();
        }
    }
    let mut manifest = String::from("path,label,split\n");
    for subject in 0..2 {
        for image in 0..4 {
            let split = if image < 3 { "train" } else { "test" };
            manifest.push_str(&format!("s{subject}_{image}.pgm,{subject},{split}\n"));
        }
    }
    let manifest_path = dir.join("data.csv");
    fs::write(&manifest_path, manifest).unwrap();

    let model = dir.join("model");
    assert_success(&dlrr(&[
        "train",
        "--manifest", manifest_path.to_str().unwrap(),
        "--height", "4",
        "--width", "4",
        "--dim", "1",
        "--lambda", "0.3",
        "--out", model.to_str().unwrap(),
    ]));
    let output = dlrr(&[
        "evaluate",
        "--model", model.to_str().unwrap(),
        "--manifest", manifest_path.to_str().unwrap(),
        "--height", "4",
        "--width", "4",
    ]);
    assert_success(&output);
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("accuracy:"), "stdout: {stdout}");
}
