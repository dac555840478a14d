use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use dt_cellsim::env::{EnvConfig, NetEnv};
use dt_cellsim::eval::{evaluate_policy, EvalReport, MaxSinr};
use dt_cellsim::geo::{load_traces, MobilityModel, MobilitySource, StreetGraph};
use dt_cellsim::radio::Channel;
use dt_cellsim::scenario::ScenarioConfig;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dt-cellsim"));
    c.env_remove("DT_CELLSIM_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn scenario_init_full_round_trips() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("sc.json");
    ok(&["scenario", "init", "--out", s(&out)]);
    let sc = ScenarioConfig::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(sc.tx_power, 46.0);
    assert_eq!(sc.sites.len(), 22);
    assert_eq!(sc.num_base_stations(), 44);
    assert_eq!(sc.user_count_range, (100, 400));
    let m = manifest(&d.path().join("sc.json.manifest.json"));
    assert_eq!(m["command"], "scenario init");
    assert_eq!(m["artifacts"][0], s(&out));
}

#[test]
fn scenario_init_desk() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("desk.json");
    ok(&["scenario", "init", "--scale", "desk", "--seed", "9", "--out", s(&out)]);
    let sc = ScenarioConfig::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(sc.sites.len(), 7);
    assert_eq!(sc.user_count_range, (20, 60));
    assert_eq!(sc.master_seed, 9);
}

#[test]
fn scenario_check_rejects_bad_config() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.json");
    let mut v: serde_json::Value = serde_json::from_str(&ScenarioConfig::desk().to_json().unwrap()).unwrap();
    v["mask_top_n"] = 0.into();
    fs::write(&bad, v.to_string()).unwrap();
    let o = run(&["scenario", "check", "--config", s(&bad)]);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
}

#[test]
fn manifest_hash_matches_config() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("t.csv");
    ok(&["mobility", "gen", "--model", "rwp", "--count", "3", "--out", s(&out)]);
    let m = manifest(&d.path().join("t.csv.manifest.json"));
    let bytes = serde_json::to_vec(&m["config"]).unwrap();
    let want: String = {
        use sha2::{Digest, Sha256};
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    };
    assert_eq!(m["config_hash"], want.as_str());
    assert_eq!(m["seed"], 0);
}

#[test]
fn mobility_gen_zero_count_is_header_only() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("t.csv");
    ok(&["mobility", "gen", "--model", "gm", "--count", "0", "--out", s(&out)]);
    assert_eq!(fs::read_to_string(&out).unwrap().trim_end(), "traj_id,t_s,x_m,y_m");
}

#[test]
fn mobility_gen_same_seed_same_bytes() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a.csv");
    let b = d.path().join("b.csv");
    let c = d.path().join("c.csv");
    ok(&["mobility", "gen", "--model", "rwp", "--count", "5", "--seed", "3", "--out", s(&a)]);
    ok(&["mobility", "gen", "--model", "rwp", "--count", "5", "--seed", "3", "--out", s(&b)]);
    ok(&["mobility", "gen", "--model", "rwp", "--count", "5", "--seed", "4", "--out", s(&c)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn map_restricted_models_need_a_graph() {
    let d = tempfile::tempdir().unwrap();
    for model in ["mrwp", "mgm"] {
        let out = d.path().join(format!("{model}.csv"));
        let o = run(&["mobility", "gen", "--model", model, "--count", "2", "--out", s(&out)]);
        assert!(!o.status.success(), "{model} ran without a graph");
        assert!(String::from_utf8_lossy(&o.stderr).contains("--graph"));
    }
}

#[test]
fn mrwp_traces_stay_on_streets() {
    let d = tempfile::tempdir().unwrap();
    let map = d.path().join("map");
    ok(&["map", "synth", "--seed", "5", "--out", s(&map)]);
    for f in ["graph.json", "map_c0.png", "map_c1.png", "map_c2.png", "manifest.json"] {
        assert!(map.join(f).exists(), "{f} missing");
    }
    let graph = map.join("graph.json");
    let g = StreetGraph::load_json(&graph).unwrap();
    for model in ["mrwp", "mgm"] {
        let out = d.path().join(format!("{model}.csv"));
        ok(&["mobility", "gen", "--model", model, "--count", "20", "--graph", s(&graph), "--out", s(&out)]);
        let trajs = load_traces(&out).unwrap();
        assert_eq!(trajs.len(), 20);
        for t in &trajs {
            for p in t.positions() {
                assert!(g.distance_to_street(p) < 1e-6, "{model} point {p:?} off street");
            }
        }
    }
}

#[test]
fn train_smoke_writes_checkpoint() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("run");
    let o = ok(&[
        "train",
        "--sample-budget",
        "10000",
        "--parallel-envs",
        "2",
        "--hidden",
        "16",
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("round"));
    let ckpts: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("ckpt_"))
        .collect();
    assert!(!ckpts.is_empty());
    let curve = fs::read_to_string(out.join("curve.csv")).unwrap();
    assert!(curve.starts_with("round,samples_seen,mean_utility,mean_reward,entropy,kl\n"));
    assert!(curve.lines().count() >= 2);
    let m = manifest(&out.join("manifest.json"));
    assert_eq!(m["artifacts"].as_array().unwrap().len(), ckpts.len() + 3);
    let updates = fs::read_to_string(out.join("updates.jsonl")).unwrap();
    assert_eq!(updates.lines().count(), curve.lines().count() - 1);
    for l in updates.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert!(v["update"]["entropy"].is_number() && v["round"].is_number());
    }

    let ckpt = ckpts[0].path();
    let report = d.path().join("r.json");
    let log = d.path().join("log.jsonl");
    ok(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--slots",
        "20",
        "--out",
        s(&report),
        "--sample-log",
        s(&log),
    ]);
    let r: EvalReport = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.slots, 20);
    assert_eq!(fs::read_to_string(&log).unwrap().lines().count() as u64, r.samples);
}

#[test]
fn max_sinr_eval_matches_library() {
    let d = tempfile::tempdir().unwrap();
    let report = d.path().join("r.json");
    ok(&["eval", "--max-sinr", "--slots", "40", "--users", "30", "--seed", "8", "--out", s(&report)]);
    let got: EvalReport = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();

    let sc = Arc::new(ScenarioConfig::desk());
    let ch = Arc::new(Channel::new(&sc));
    let src = MobilitySource::new(MobilityModel::from_name("rwp").unwrap(), sc.bbox());
    let mut env = NetEnv::new(sc.clone(), ch, src, EnvConfig::for_scenario(&sc), 8, 30).unwrap();
    let want = evaluate_policy(&mut MaxSinr, &mut env, 40).unwrap();
    assert_eq!(serde_json::to_value(&got).unwrap(), serde_json::to_value(&want).unwrap());
}

#[test]
fn eval_without_policy_fails() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["eval", "--out", s(&d.path().join("r.json"))]);
    assert!(!o.status.success());
}

#[test]
fn missing_input_fails_with_message() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&[
        "traj-metrics",
        "--generated",
        "/nonexistent/a.csv",
        "--real",
        "/nonexistent/b.csv",
        "--out",
        s(&d.path().join("m.csv")),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("a.csv"));
}

fn metrics(path: &Path) -> Vec<(String, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k.to_string(), v.parse().unwrap())
        })
        .collect()
}

#[test]
fn traj_metrics_identity() {
    let d = tempfile::tempdir().unwrap();
    let t = d.path().join("t.csv");
    ok(&["mobility", "gen", "--model", "gm", "--count", "6", "--out", s(&t)]);
    let out = d.path().join("m.csv");
    ok(&["traj-metrics", "--generated", s(&t), "--real", s(&t), "--out", s(&out)]);
    let m = metrics(&out);
    let names: Vec<&str> = m.iter().map(|(k, _)| k.as_str()).collect();
    assert_eq!(names, ["edr", "dtw", "cosine", "swd"]);
    assert_eq!(m[0].1, 0.0);
    assert_eq!(m[1].1, 0.0);
    assert!((m[2].1 - 1.0).abs() < 1e-12, "cosine {}", m[2].1);
    assert_eq!(m[3].1, 0.0);

    let other = d.path().join("o.csv");
    ok(&["mobility", "gen", "--model", "rwp", "--count", "6", "--seed", "2", "--out", s(&other)]);
    ok(&["traj-metrics", "--generated", s(&other), "--real", s(&t), "--out", s(&out)]);
    let m = metrics(&out);
    assert!(m[0].1 > 0.0 && m[1].1 > 0.0 && m[2].1 < 1.0 && m[3].1 > 0.0, "{m:?}");
}

#[test]
fn report_cdf_is_monotone_csv() {
    let d = tempfile::tempdir().unwrap();
    let report = d.path().join("r.json");
    ok(&["eval", "--max-sinr", "--slots", "10", "--out", s(&report)]);
    let out = d.path().join("cdf.csv");
    ok(&["report", "cdf", "--report", s(&report), "--out", s(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rate,p"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert!(!rows.is_empty());
    assert!(rows.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    assert_eq!(rows.last().unwrap().1, 1.0);
}

#[test]
fn thread_count_does_not_change_training() {
    let d = tempfile::tempdir().unwrap();
    let mut weights = Vec::new();
    for threads in ["1", "3"] {
        let out = d.path().join(format!("t{threads}"));
        let o = bin()
            .env("DT_CELLSIM_THREADS", threads)
            .args([
                "train",
                "--sample-budget",
                "8000",
                "--parallel-envs",
                "3",
                "--hidden",
                "8",
                "--seed",
                "4",
                "--out",
                s(&out),
            ])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        weights.push(fs::read(out.join("policy.dtcw")).unwrap());
    }
    assert_eq!(weights[0], weights[1]);
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = bin().env("DT_CELLSIM_THREADS", "zero").args(["scenario", "check"]).output().unwrap();
    assert!(!o.status.success());
}
