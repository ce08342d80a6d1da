//! Train, test and analyze at toy scale.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use nest_core::analysis::{self, AnalyzeOptions, ChickReference, OUTPUT_FILES, REPORT_FILE};
use nest_core::harness::{
    self, load_run, run_population, run_test, run_training, sha256_hex, HarnessError, PopulationOptions, RunConfig,
    RunManifest, CHECKPOINT_FILE, CONFIG_FILE, EPISODES_FILE, MANIFEST_FILE, METRICS_FILE, TEST_SUMMARY_FILE,
};
use nest_core::intrinsic::Algorithm;
use nest_core::world::{TrialKind, VIEWPOINT_COUNT};

fn tiny(algo: Algorithm, seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        seed,
        episodes: 2,
        episode_length: 30,
        test_trial_length: 5,
        ..RunConfig::default()
    };
    cfg.ppo.buffer_size = 32;
    cfg.ppo.batch_size = 16;
    cfg.ppo.max_steps = 60;
    cfg.intrinsic.algorithm = algo;
    cfg
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("pipeline").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

/// One tiny trained-and-tested run shared by the read-only tests.
fn shared_run() -> &'static PathBuf {
    static RUN: OnceLock<PathBuf> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = scratch("shared").join("icm/agent_00");
        run_training(&tiny(Algorithm::Icm, 5), &dir).unwrap();
        run_test(&dir.join(CHECKPOINT_FILE), &dir.join("test"), false).unwrap();
        dir
    })
}

fn nest(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_nest")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr),
    )
}

fn tree_hashes(dir: &Path) -> Vec<(PathBuf, String)> {
    let mut v: Vec<_> = walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| (e.path().to_path_buf(), sha256_hex(&fs::read(e.path()).unwrap())))
        .collect();
    v.sort();
    v
}

#[test]
fn training_writes_a_complete_run_directory() {
    let dir = shared_run();
    let m = RunManifest::load(dir).unwrap();
    assert!(m.complete && m.error.is_none());
    assert_eq!(m.env_steps, 60);
    assert!(m.updates >= 1);
    m.verify(dir).unwrap();
    for f in [CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE, EPISODES_FILE] {
        assert!(m.file(f).is_some(), "{f} missing from manifest");
    }
    let metrics = fs::read_to_string(dir.join(METRICS_FILE)).unwrap();
    assert!(
        metrics.starts_with("update,env_step,lr,policy_loss,value_loss,entropy,clip_fraction,mean_intrinsic_reward")
    );
    let episodes = fs::read_to_string(dir.join(EPISODES_FILE)).unwrap();
    assert_eq!(episodes.lines().count(), 3);
}

#[test]
fn checkpoint_round_trips_byte_exact() {
    let dir = shared_run();
    let bytes = fs::read(dir.join(CHECKPOINT_FILE)).unwrap();
    let (cfg, agent, digest) = load_run(&dir.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(agent.checkpoint_bytes(), bytes);
    assert_eq!(digest, sha256_hex(&bytes));
    assert_eq!(cfg, RunConfig::load(&dir.join(CONFIG_FILE)).unwrap());
}

#[test]
fn test_phase_records_and_frozen_weights() {
    let dir = shared_run();
    let (summary, records) = harness::read_test_output(&dir.join("test")).unwrap();
    assert_eq!(summary.trials, 520);
    assert_eq!(summary.weights_hash_before, summary.weights_hash_after);
    let rec: Vec<_> = records.iter().filter(|r| r.kind == TrialKind::Recognition).collect();
    assert_eq!(rec.len(), 480);
    for v in 0..VIEWPOINT_COUNT {
        assert_eq!(rec.iter().filter(|r| r.viewpoint_index == Some(v)).count(), 40);
    }
    let cfg = &summary.config;
    for r in &records {
        assert_eq!(r.trace.len(), cfg.test_trial_length);
        assert!(r.trace.iter().all(|p| p.within_margins(&cfg.chamber, &cfg.body)));
    }
}

#[test]
fn test_phase_leaves_the_run_untouched() {
    let dir = scratch("purity");
    run_training(&tiny(Algorithm::Rnd, 9), &dir).unwrap();
    let before = tree_hashes(&dir);
    let out = scratch("purity_test");
    let a = run_test(&dir.join(CHECKPOINT_FILE), &out, false).unwrap();
    assert_eq!(tree_hashes(&dir), before);
    // Same checkpoint, same trials.
    let b = run_test(&dir.join(CHECKPOINT_FILE), &scratch("purity_test2"), false).unwrap();
    assert_eq!(a.records, b.records);
}

#[test]
fn greedy_test_is_reproducible() {
    let dir = shared_run();
    let a = run_test(&dir.join(CHECKPOINT_FILE), &scratch("greedy_a"), true).unwrap();
    let b = run_test(&dir.join(CHECKPOINT_FILE), &scratch("greedy_b"), true).unwrap();
    assert!(a.summary.greedy);
    assert_eq!(a.records, b.records);
}

fn copy_run(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for f in [CHECKPOINT_FILE, CONFIG_FILE, MANIFEST_FILE, METRICS_FILE, EPISODES_FILE] {
        fs::copy(from.join(f), to.join(f)).unwrap();
    }
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let root = scratch("corrupt");
    let flipped = root.join("flipped");
    copy_run(shared_run(), &flipped);
    let mut bytes = fs::read(flipped.join(CHECKPOINT_FILE)).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x55;
    fs::write(flipped.join(CHECKPOINT_FILE), &bytes).unwrap();
    let err = run_test(&flipped.join(CHECKPOINT_FILE), &root.join("t1"), false).unwrap_err();
    assert!(matches!(err, HarnessError::CorruptCheckpoint { .. }), "{err}");
    assert_eq!(err.exit_code(), 4);

    // Without a manifest the decoder itself has to catch truncation.
    let truncated = root.join("truncated");
    copy_run(shared_run(), &truncated);
    fs::remove_file(truncated.join(MANIFEST_FILE)).unwrap();
    let bytes = fs::read(truncated.join(CHECKPOINT_FILE)).unwrap();
    fs::write(truncated.join(CHECKPOINT_FILE), &bytes[..bytes.len() - 7]).unwrap();
    let err = run_test(&truncated.join(CHECKPOINT_FILE), &root.join("t2"), false).unwrap_err();
    assert_eq!(err.exit_code(), 4, "{err}");

    let (code, msg) = nest(&[
        "test",
        "--checkpoint",
        flipped.join(CHECKPOINT_FILE).to_str().unwrap(),
        "--out",
        root.join("t3").to_str().unwrap(),
    ]);
    assert_eq!(code, 4, "{msg}");
}

#[test]
fn analysis_is_byte_identical_on_rerun_and_lists_absent_runs() {
    let runs = scratch("analyze_runs");
    for (k, algo) in [(0, Algorithm::Contrastive), (1, Algorithm::Contrastive)] {
        let dir = runs.join(format!("contrastive/agent_{k:02}"));
        run_training(&tiny(algo, 20 + k), &dir).unwrap();
        run_test(&dir.join(CHECKPOINT_FILE), &dir.join("test"), false).unwrap();
    }
    // Trained but never tested.
    run_training(&tiny(Algorithm::Contrastive, 30), &runs.join("contrastive/agent_02")).unwrap();

    let reference =
        ChickReference::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/chick_reference_synthetic.json"))
            .unwrap();
    let opts = AnalyzeOptions::default();
    let a = scratch("analyze_a");
    let b = scratch("analyze_b");
    let report = analysis::emit_report(&runs, &reference, &a, &opts).unwrap();
    analysis::emit_report(&runs, &reference, &b, &opts).unwrap();
    for f in OUTPUT_FILES {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
    assert_eq!(report.agents.len(), 2);
    assert_eq!(report.absent_runs.len(), 1);
    assert!(report.absent_runs[0].path.ends_with("agent_02"));
    assert!(!report.warnings.is_empty());
    let t = report.tsne.as_ref().unwrap();
    assert_eq!((t.n_chick, t.n_machine), (reference.individuals.len(), 2));
    assert!(fs::read_to_string(a.join(REPORT_FILE))
        .unwrap()
        .contains("\"predictively_adequate\""));
}

#[test]
fn population_layout_and_summary() {
    let out = scratch("population");
    let opts = PopulationOptions {
        agents: 1,
        algorithms: vec![Algorithm::Rnd],
        conditions: vec![2],
        greedy: false,
        jobs: Some(1),
    };
    let results = run_population(&tiny(Algorithm::Icm, 3), &opts, &out).unwrap();
    assert_eq!(results.len(), 1);
    assert!(results[0].error.is_none());
    let dir = out.join("rnd/condition_2/agent_00");
    assert!(dir.join(MANIFEST_FILE).exists());
    assert!(dir.join("test").join(TEST_SUMMARY_FILE).exists());
    let (summary, _) = harness::read_test_output(&dir.join("test")).unwrap();
    assert_eq!(summary.algorithm, Algorithm::Rnd);
    assert_eq!(summary.condition, 2);
    assert!(out.join("population.json").exists());
}

#[test]
fn cli_exit_codes() {
    assert_eq!(nest(&["--help"]).0, 0);
    assert_eq!(nest(&["--version"]).0, 0);
    assert_eq!(nest(&["train"]).0, 1);
    assert_eq!(nest(&["bogus"]).0, 1);
    let dir = scratch("cli");
    let bad = dir.join("bad.json");
    fs::write(&bad, r#"{"condition": 7}"#).unwrap();
    let out = dir.join("out");
    let (code, msg) = nest(&[
        "train",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{msg}");
    let unknown = dir.join("unknown.json");
    fs::write(&unknown, r#"{"episodez": 3}"#).unwrap();
    assert_eq!(
        nest(&[
            "train",
            "--config",
            unknown.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ])
        .0,
        2
    );
    let missing = dir.join("missing.json");
    assert_eq!(
        nest(&[
            "train",
            "--config",
            missing.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ])
        .0,
        3
    );
    let (code, msg) = nest(&[
        "analyze",
        "--runs",
        dir.join("nothing").to_str().unwrap(),
        "--ref",
        missing.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 3, "{msg}");
}

#[test]
fn frame_command_writes_ppm() {
    let dir = scratch("frame");
    let out = dir.join("view.ppm");
    let (code, msg) = nest(&[
        "frame",
        "--x",
        "8",
        "--y",
        "7",
        "--heading",
        "180",
        "--xl",
        "B",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{msg}");
    let bytes = fs::read(&out).unwrap();
    let header = b"P6\n96 96\n255\n";
    assert!(bytes.starts_with(header));
    assert_eq!(bytes.len(), header.len() + 96 * 96 * 3);
    let (code, _) = nest(&["frame", "--x", "0", "--y", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn configs_match_the_documented_schema() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let schema: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("docs/run_config.schema.json")).unwrap()).unwrap();
    let v = jsonschema::validator_for(&schema).unwrap();
    let mut docs = vec![
        fs::read_to_string(root.join("configs/smoke.json")).unwrap(),
        fs::read_to_string(root.join("configs/full.json")).unwrap(),
        RunConfig::default().to_json(),
    ];
    docs.push(fs::read_to_string(shared_run().join(CONFIG_FILE)).unwrap());
    for d in docs {
        let value: serde_json::Value = serde_json::from_str(&d).unwrap();
        let errors: Vec<String> = v.iter_errors(&value).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{errors:?}");
    }
    assert!(!v.is_valid(&serde_json::json!({"episodez": 3})));
}
