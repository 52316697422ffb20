use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_privileged-rl"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("privileged-rl-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn gen_writes_a_valid_model() {
    let dir = scratch("gen");
    let out = dir.join("m.json");
    let status = bin()
        .args(["gen", "--kind", "deterministic_transition", "--S", "3", "--A", "2", "--O", "2", "--H", "4", "--seed", "7", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let file: privileged_rl::model::ModelFile = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(file.validate().is_empty());
    fs::remove_dir_all(dir).ok();
}

#[test]
fn infeasible_sizes_exit_2() {
    let dir = scratch("bad");
    let status = bin()
        .args(["gen", "--kind", "block_mdp", "--S", "3", "--A", "2", "--O", "2", "--H", "2", "--out"])
        .arg(dir.join("m.json"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let status = bin().args(["check", "--case", "nope"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
    fs::remove_dir_all(dir).ok();
}

#[test]
fn checks_pass() {
    for case in ["traj", "trick", "mask"] {
        let out = bin().args(["check", "--case", case, "--trials", "30", "--seed", "2"]).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{case}");
        let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(report["failures"], 0);
    }
}

#[test]
fn run_then_plot() {
    let dir = scratch("run");
    let cfg = dir.join("cfg.json");
    fs::write(
        &cfg,
        r#"{"kinds":["block_mdp"],"S":2,"A":2,"O":2,"H":3,"instances":2,"budget":400,"curve_points":2,"hyper":{"npg_iterations":4}}"#,
    )
    .unwrap();
    let status = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.join("out")).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = dir.join("out/results.csv");
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("algo,instance_kind,S,A,O,H,seed,episodes_used,metric,value\n"));
    let status = bin().args(["plot", "--csv"]).arg(&csv).arg("--out").arg(dir.join("plots")).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let svg = fs::read_to_string(dir.join("plots/block_mdp_S2_A2_O2_H3.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 4);

    fs::write(&cfg, r#"{"kinds":["block_mdp"],"S":2,"A":2,"O":2,"H":3,"seeds":[1,1],"budget":400}"#).unwrap();
    let status = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.join("out2")).status().unwrap();
    assert_eq!(status.code(), Some(2));
    fs::remove_dir_all(dir).ok();
}
