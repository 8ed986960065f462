//! End-to-end tests driving the real binary: command chaining, determinism,
//! seed precedence, manifest replay, and the error contract
//! (`error: <Kind>: <detail>` on stderr with exit code 1).

use qoeseq_core::artifact::save_hmm;
use qoeseq_core::HmmParams;
use std::path::{Path, PathBuf};
use std::process::Output;

fn qoeseq_env(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_qoeseq"));
    // isolate from whatever the host shell exports
    cmd.env_remove("QOESEQ_SEED");
    for (key, value) in envs {
        cmd.env(key, value);
    }
    cmd.args(args).output().expect("binary spawns")
}

fn qoeseq(args: &[&str]) -> Output {
    qoeseq_env(args, &[])
}

fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

fn assert_fails_with(output: &Output, kind: &str, detail: &str) {
    assert_eq!(output.status.code(), Some(1), "expected exit code 1");
    let stderr = String::from_utf8_lossy(&output.stderr);
    let line = stderr.lines().last().unwrap_or("");
    assert!(
        line.starts_with(&format!("error: {kind}: ")),
        "stderr line {line:?} does not announce {kind}"
    );
    assert!(
        line.contains(detail),
        "stderr line {line:?} does not mention {detail:?}"
    );
}

/// A small self-contained config with an inline generator spec, written
/// into `dir` so each test owns its inputs.
fn write_small_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
  "synth_spec": {
    "num_sessions": 6,
    "steps_per_session": 40,
    "state_means": [[0.0, 0.0], [2.0, 2.0], [4.0, 4.0]],
    "state_std_devs": [[1.0, 0.5], [0.5, 0.5], [0.5, 1.0]],
    "transitions": [[0.9, 0.08, 0.02], [0.05, 0.9, 0.05], [0.02, 0.08, 0.9]]
  },
  "states": 3,
  "codebook_size": 8,
  "seed": 5,
  "test_fraction": 0.25,
  "reps": 0
}"#,
    )
    .unwrap();
    path
}

fn read_manifest_seed(out_dir: &Path) -> u64 {
    let text = std::fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["seed"].as_u64().unwrap()
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(root, &path, out);
        } else {
            out.push(path.strip_prefix(root).unwrap().to_path_buf());
        }
    }
}

fn assert_dirs_identical(a: &Path, b: &Path) {
    let mut files_a = Vec::new();
    let mut files_b = Vec::new();
    collect_files(a, a, &mut files_a);
    collect_files(b, b, &mut files_b);
    files_a.sort();
    files_b.sort();
    assert_eq!(files_a, files_b, "file sets differ");
    for rel in &files_a {
        assert_eq!(
            std::fs::read(a.join(rel)).unwrap(),
            std::fs::read(b.join(rel)).unwrap(),
            "{} differs",
            rel.display()
        );
    }
}

#[test]
fn generate_with_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        assert_ok(&qoeseq(&[
            "generate",
            "--config",
            config.to_str().unwrap(),
            "--length",
            "200",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]));
    }
    assert_dirs_identical(&out_a, &out_b);
    let csv = std::fs::read_to_string(out_a.join("synthetic.csv")).unwrap();
    // 6 sessions x 200 steps (the --length override) plus the header
    assert_eq!(csv.lines().count(), 6 * 200 + 1);
}

#[test]
fn full_command_chain_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let cfg = config.to_str().unwrap();
    let sub = |name: &str| {
        let path = dir.path().join(name);
        (path.to_str().unwrap().to_string(), path)
    };
    let (gen_out, gen_dir) = sub("gen");
    assert_ok(&qoeseq(&["generate", "--config", cfg, "--out", &gen_out]));
    let synthetic = gen_dir.join("synthetic.csv");
    let synthetic = synthetic.to_str().unwrap();

    let (ingest_out, ingest_dir) = sub("ingest");
    assert_ok(&qoeseq(&[
        "ingest", "--config", cfg, "--input", synthetic, "--out", &ingest_out,
    ]));
    assert!(ingest_dir.join("summary.json").exists());

    let (vq_out, vq_dir) = sub("vq");
    assert_ok(&qoeseq(&[
        "fit-vq", "--config", cfg, "--input", synthetic, "--out", &vq_out,
    ]));
    let codebook = vq_dir.join("codebook.json");
    let codebook = codebook.to_str().unwrap();

    let (enc_out, enc_dir) = sub("enc");
    assert_ok(&qoeseq(&[
        "encode", "--config", cfg, "--input", synthetic, "--codebook", codebook, "--out", &enc_out,
    ]));
    let tokens = enc_dir.join("tokens.csv");
    let tokens = tokens.to_str().unwrap();

    let (hmm_out, hmm_dir) = sub("hmm");
    assert_ok(&qoeseq(&[
        "fit-hmm", "--config", cfg, "--tokens", tokens, "--codebook", codebook, "--out", &hmm_out,
    ]));
    let model = hmm_dir.join("model.json");
    let model = model.to_str().unwrap();

    let (dec_out, dec_dir) = sub("dec");
    assert_ok(&qoeseq(&[
        "decode", "--config", cfg, "--tokens", tokens, "--model", model, "--codebook", codebook,
        "--out", &dec_out,
    ]));
    assert!(dec_dir.join("decoded.csv").exists());

    let (eval_out, eval_dir) = sub("eval");
    assert_ok(&qoeseq(&[
        "evaluate", "--config", cfg, "--tokens", tokens, "--model", model, "--out", &eval_out,
    ]));
    assert!(eval_dir.join("metrics.json").exists());
    assert!(eval_dir.join("confusion.csv").exists());

    // the shared config pins reps to 0 for reproducibility, so bench needs
    // an explicit count (flags take precedence over the config file)
    let (bench_out, bench_dir) = sub("bench");
    assert_ok(&qoeseq(&[
        "bench", "--config", cfg, "--model", model, "--reps", "50", "--out", &bench_out,
    ]));
    let latency = std::fs::read_to_string(bench_dir.join("latency.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&latency).unwrap();
    assert_eq!(doc["repetitions"], 50);
    assert!(doc["median_s"].as_f64().unwrap() > 0.0);

    // every stage left a manifest naming its own command
    for (dir, command) in [
        (&gen_dir, "generate"),
        (&ingest_dir, "ingest"),
        (&vq_dir, "fit-vq"),
        (&enc_dir, "encode"),
        (&hmm_dir, "fit-hmm"),
        (&dec_dir, "decode"),
        (&eval_dir, "evaluate"),
        (&bench_dir, "bench"),
    ] {
        let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["command"], command);
    }
}

#[test]
fn pipeline_replays_byte_identically_from_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let out_first = dir.path().join("first");
    assert_ok(&qoeseq(&[
        "pipeline",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_first.to_str().unwrap(),
    ]));
    let manifest = out_first.join("manifest.json");
    let out_replay = dir.path().join("replay");
    assert_ok(&qoeseq(&[
        "pipeline",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        out_replay.to_str().unwrap(),
    ]));
    assert_dirs_identical(&out_first, &out_replay);
}

#[test]
fn decode_rejects_model_whose_alphabet_differs_from_codebook() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let cfg = config.to_str().unwrap();
    let gen_out = dir.path().join("gen");
    assert_ok(&qoeseq(&[
        "generate", "--config", cfg, "--out", gen_out.to_str().unwrap(),
    ]));
    let synthetic = gen_out.join("synthetic.csv");
    let synthetic = synthetic.to_str().unwrap();

    // codebook with K=8 feeds the model; a second fit with K=4 disagrees
    let fit = |k: &str, out: &Path| {
        assert_ok(&qoeseq(&[
            "fit-vq",
            "--config",
            cfg,
            "--input",
            synthetic,
            "--codebook-size",
            k,
            "--out",
            out.to_str().unwrap(),
        ]));
        out.join("codebook.json")
    };
    let codebook8 = fit("8", &dir.path().join("vq8"));
    let codebook4 = fit("4", &dir.path().join("vq4"));

    let enc_out = dir.path().join("enc");
    assert_ok(&qoeseq(&[
        "encode",
        "--config",
        cfg,
        "--input",
        synthetic,
        "--codebook",
        codebook8.to_str().unwrap(),
        "--out",
        enc_out.to_str().unwrap(),
    ]));
    let tokens = enc_out.join("tokens.csv");
    let hmm_out = dir.path().join("hmm");
    assert_ok(&qoeseq(&[
        "fit-hmm",
        "--config",
        cfg,
        "--tokens",
        tokens.to_str().unwrap(),
        "--codebook",
        codebook8.to_str().unwrap(),
        "--out",
        hmm_out.to_str().unwrap(),
    ]));

    let result = qoeseq(&[
        "decode",
        "--config",
        cfg,
        "--tokens",
        tokens.to_str().unwrap(),
        "--model",
        hmm_out.join("model.json").to_str().unwrap(),
        "--codebook",
        codebook4.to_str().unwrap(),
        "--out",
        dir.path().join("dec").to_str().unwrap(),
    ]);
    assert_fails_with(
        &result,
        "SchemaMismatch",
        "model alphabet V=8 does not match codebook K=4",
    );
}

#[test]
fn missing_input_reports_file_missing() {
    let dir = tempfile::tempdir().unwrap();
    let result = qoeseq(&[
        "ingest",
        "--input",
        "/nonexistent/telemetry.csv",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_fails_with(&result, "FileMissing", "/nonexistent/telemetry.csv");
}

#[test]
fn negative_alpha_reports_config_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let result = qoeseq(&[
        "fit-hmm",
        "--tokens",
        config.to_str().unwrap(),
        "--alpha",
        "-1",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_fails_with(&result, "ConfigInvalid", "alpha must be finite and >= 0");
}

#[test]
fn unknown_config_key_reports_config_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"statez": 3}"#).unwrap();
    let result = qoeseq(&[
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_fails_with(&result, "ConfigInvalid", "statez");
}

#[test]
fn token_file_with_time_gap_reports_schema_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let tokens = dir.path().join("tokens.csv");
    std::fs::write(
        &tokens,
        "session_id,t,token,state\ns1,0,0,0\ns1,1,1,0\ns1,3,1,1\n",
    )
    .unwrap();
    let result = qoeseq(&[
        "fit-hmm",
        "--tokens",
        tokens.to_str().unwrap(),
        "--states",
        "2",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_fails_with(&result, "SchemaMismatch", "gap at");
}

#[test]
fn evaluate_without_state_column_reports_schema_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    let model = HmmParams::new(
        vec![0.5, 0.5],
        vec![vec![0.9, 0.1], vec![0.1, 0.9]],
        vec![vec![0.7, 0.3], vec![0.2, 0.8]],
    )
    .unwrap();
    save_hmm(&model_path, &model, 1.0, None).unwrap();
    let tokens = dir.path().join("tokens.csv");
    std::fs::write(&tokens, "session_id,t,token\ns1,0,0\ns1,1,1\n").unwrap();
    let result = qoeseq(&[
        "evaluate",
        "--tokens",
        tokens.to_str().unwrap(),
        "--model",
        model_path.to_str().unwrap(),
        "--states",
        "2",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_fails_with(&result, "SchemaMismatch", "no state column");
}

#[test]
fn seed_env_var_is_overridden_by_flag_and_config() {
    let dir = tempfile::tempdir().unwrap();
    // config without a seed of its own, so the env var is next in line
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{
  "synth_spec": {
    "num_sessions": 2,
    "steps_per_session": 10,
    "state_means": [[0.0], [2.0]],
    "state_std_devs": [[0.5], [0.5]],
    "transitions": [[0.9, 0.1], [0.1, 0.9]]
  },
  "states": 2,
  "reps": 0
}"#,
    )
    .unwrap();
    let cfg = config.to_str().unwrap();

    let from_env = dir.path().join("env");
    assert_ok(&qoeseq_env(
        &["generate", "--config", cfg, "--out", from_env.to_str().unwrap()],
        &[("QOESEQ_SEED", "99")],
    ));
    assert_eq!(read_manifest_seed(&from_env), 99);

    let from_flag = dir.path().join("flag");
    assert_ok(&qoeseq_env(
        &[
            "generate", "--config", cfg, "--seed", "3", "--out",
            from_flag.to_str().unwrap(),
        ],
        &[("QOESEQ_SEED", "99")],
    ));
    assert_eq!(read_manifest_seed(&from_flag), 3);

    let unset = dir.path().join("default");
    assert_ok(&qoeseq(&[
        "generate", "--config", cfg, "--out", unset.to_str().unwrap(),
    ]));
    // falls through to the built-in default seed
    assert_eq!(read_manifest_seed(&unset), 7);

    let bad_env = qoeseq_env(
        &["generate", "--config", cfg, "--out", dir.path().join("bad").to_str().unwrap()],
        &[("QOESEQ_SEED", "not-a-number")],
    );
    assert_fails_with(&bad_env, "ConfigInvalid", "QOESEQ_SEED");
}
