use std::fs;
use std::path::Path;
use std::process::Command;

use hierpath::cli::{
    load_envelope_csv, load_history_csv, load_json, load_timing_csv, load_trace_csv, run, trace_final_state, Envelope,
    ExperimentConfig, ProblemSection, RunMode, SolveOutput, ThreePath,
};
use hierpath::path::{HyperPath, PathTrace, Waypoint, CSV_COLUMNS};
use hierpath::problems::{load_problem, DeconvolutionConfig};

fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig {
        problem: ProblemSection::Deconvolution(DeconvolutionConfig {
            n_grid: 24,
            jump_locations: vec![0.2, 0.5, 0.8],
            jump_amplitudes: vec![1.0, -0.5, 0.7],
            ..DeconvolutionConfig::default()
        }),
        ..ExperimentConfig::default()
    };
    c.hyper.path = Some(HyperPath::deconvolution(6));
    c.hyper.threepath_steps = Some(10);
    c.run.repetitions = 6;
    c.run.envelope_iterations = 30;
    c
}

fn binary(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hierpath")).args(args).arg("--out").arg(dir).output().unwrap()
}

#[test]
fn every_mode_writes_loadable_outputs() {
    let config = small_config();
    let tmp = tempfile::tempdir().unwrap();
    for mode in [RunMode::Solve, RunMode::Follow, RunMode::Diagnose, RunMode::Envelope, RunMode::Threepath] {
        let out = tmp.path().join(mode.name());
        let summary = run(&config, mode, &out).unwrap();
        assert!(summary.files.iter().all(|f| f.exists()), "{:?}", summary.files);

        let problem = load_problem(&out.join("problem.bin")).unwrap();
        assert_eq!(problem.problem.dim(), 24);
        let back = ExperimentConfig::load(&out.join("config.toml")).unwrap();
        assert_eq!(back, config);
        assert!(!load_timing_csv(&out.join("timing.csv")).unwrap().is_empty());

        match mode {
            RunMode::Solve => {
                let s: SolveOutput = load_json(&out.join("solve.json")).unwrap();
                assert!(s.converged);
                assert_eq!(load_history_csv(&out.join("history.csv")).unwrap(), s.history);
            }
            RunMode::Follow | RunMode::Diagnose => {
                let stem = if mode == RunMode::Follow { "trace" } else { "diagnose" };
                let rows = load_trace_csv(&out.join(format!("{stem}.csv"))).unwrap();
                let trace: PathTrace = load_json(&out.join(format!("{stem}.json"))).unwrap();
                assert_eq!(rows.len(), 7);
                assert_eq!(rows, trace.rows);
                let header = fs::read_to_string(out.join(format!("{stem}.csv"))).unwrap();
                assert_eq!(header.lines().next().unwrap(), CSV_COLUMNS.join(","));
                assert_eq!(rows[0].cond_raw.is_some(), mode == RunMode::Diagnose);
                let end = trace_final_state(&out.join(format!("{stem}.json"))).unwrap();
                assert_eq!(end.x().as_slice(), trace.steps.last().unwrap().x.as_slice());
            }
            RunMode::Envelope => {
                let env: Envelope = load_json(&out.join("envelope.json")).unwrap();
                assert_eq!(env.repetitions.len(), 6);
                let rows = load_envelope_csv(&out.join("envelope.csv")).unwrap();
                assert_eq!(rows.len(), 24);
                assert!(rows.iter().all(|r| r.lower <= r.upper && r.truth.is_some()));
            }
            RunMode::Threepath => {
                let res: ThreePath = load_json(&out.join("threepath.json")).unwrap();
                assert_eq!(res.traces.len(), 3);
                for i in 1..=3 {
                    assert_eq!(load_trace_csv(&out.join(format!("path{i}.csv"))).unwrap().len(), 21);
                }
            }
        }
    }
}

#[test]
fn same_seed_gives_identical_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("small.toml");
    fs::write(&cfg_path, small_config().to_toml().unwrap()).unwrap();
    let cfg = cfg_path.to_str().unwrap();
    for cmd in ["solve", "follow", "envelope", "threepath"] {
        let (a, b) = (tmp.path().join(format!("{cmd}-a")), tmp.path().join(format!("{cmd}-b")));
        for (dir, threads) in [(&a, "1"), (&b, "3")] {
            let out = binary(dir, &[cmd, "--config", cfg, "--seed", "5", "--threads", threads]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        }
        let mut compared = 0;
        for entry in fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            let name = name.to_str().unwrap();
            if name.ends_with(".csv") && name != "timing.csv" || name == "problem.bin" {
                assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{cmd}: {name}");
                compared += 1;
            }
        }
        assert!(compared >= 2, "{cmd}");
    }
}

#[test]
fn seed_flag_changes_the_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("small.toml");
    fs::write(&cfg_path, small_config().to_toml().unwrap()).unwrap();
    let cfg = cfg_path.to_str().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(binary(&a, &["solve", "--config", cfg, "--seed", "1"]).status.success());
    assert!(binary(&b, &["solve", "--config", cfg, "--seed", "2"]).status.success());
    let pa = load_problem(&a.join("problem.bin")).unwrap().problem;
    let pb = load_problem(&b.join("problem.bin")).unwrap().problem;
    assert_eq!(pa.operator(), pb.operator());
    assert_ne!(pa.data(), pb.data());
}

#[test]
fn invalid_configs_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("unknown.toml", "[run]\nbogus = 1\n"),
        ("syntax.toml", "[problem\n"),
        (
            "jumps.toml",
            "[problem]\nkind = \"deconvolution\"\njump_locations = [0.5, 0.2]\njump_amplitudes = [1.0, 1.0]\n",
        ),
        ("mode.toml", "[run]\nmode = \"envelope\"\n"),
    ];
    for (name, text) in cases {
        let p = tmp.path().join(name);
        fs::write(&p, text).unwrap();
        let out_dir = tmp.path().join(format!("out-{name}"));
        let out = binary(&out_dir, &["solve", "--config", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(1), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let record: serde_json::Value = load_json(&out_dir.join("error.json")).unwrap();
        assert_eq!(record["exit_code"], 1);
    }
    let missing = binary(&tmp.path().join("missing"), &["solve", "--config", "/nonexistent/config.toml"]);
    assert_ne!(missing.status.code(), Some(0));
    let full = binary(&tmp.path().join("full"), &["solve", "--full-scale"]);
    assert_eq!(full.status.code(), Some(1));
}

#[test]
fn configured_point_is_used() {
    let mut config = small_config();
    config.hyper.point = Some(Waypoint::new(1.2, 0.8, 1e-4));
    let tmp = tempfile::tempdir().unwrap();
    run(&config, RunMode::Solve, tmp.path()).unwrap();
    let s: SolveOutput = load_json(&tmp.path().join("solve.json")).unwrap();
    assert_eq!((s.r, s.eta, s.vartheta), (1.2, 0.8, 1e-4));
}
