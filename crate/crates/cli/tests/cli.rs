use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seeds = [1]
train_episodes = 1
eval_episodes = 1
schemes = ["pbu-greedy", "pbu-mab", "proposed"]
demand_units_mb = [10.0]
moving_average_window = 2

[env]
rbs = 6
slots_per_cycle = 4
cycles = 2

[agent]
policy_hidden = [8]
value_hidden = [8]
tail_hidden = [8]
"#;

fn ntn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ntn")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_accepts_defaults_and_tiny_config() {
    let o = ntn(&["validate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("config ok"));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    assert!(ntn(&["validate", "--config", &cfg]).status.success());
}

#[test]
fn validate_reports_the_offending_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{TINY}\nbogus = 1\n"));
    let o = ntn(&["validate", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("agent.bogus"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), &TINY.replace("rbs = 6", "rbs = 0"));
    let o = ntn(&["validate", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("env."), "{}", stderr(&o));
}

#[test]
fn unknown_scheme_is_a_usage_error() {
    let o = ntn(&["baseline", "--scheme", "nope"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown scheme"));
}

#[test]
fn train_writes_log_checkpoint_and_trace_then_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let o = ntn(&["train", "--config", &cfg, "--seed", "3", "--episodes", "2", "--out", out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = std::fs::read_to_string(out.join("train_proposed_seed3.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let ckpt = out.join("checkpoint_proposed_seed3.json");
    assert!(out.join("eval_trace_proposed_seed3.csv").exists());

    let o = ntn(&["train", "--config", &cfg, "--seed", "3", "--episodes", "1", "--out", out_s, "--resume", ckpt.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("total 3"));

    let o = ntn(&["train", "--config", &cfg, "--scheme", "bfs-greedy", "--out", out_s]);
    assert!(!o.status.success());
}

#[test]
fn baseline_appends_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    for scheme in ["pbu-greedy", "bfs-mab"] {
        let o = ntn(&["baseline", "--config", &cfg, "--scheme", scheme, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("demand_unit_mb,scheme"));
    assert!(lines[1].contains("pbu-greedy") && lines[2].contains("bfs-mab"));
    assert!(out.join("series_bfs-mab_10mb.csv").exists());
}

#[test]
fn compare_is_byte_identical_and_plot_rerenders() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = ntn(&["compare", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["comparison.csv", "summary.json", "series_proposed_10mb.csv", "series_pbu-mab_10mb.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let svg = a.join("reward_10mb.svg");
    std::fs::remove_file(&svg).unwrap();
    let o = ntn(&["plot", "--config", &cfg, "--out", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(&svg).unwrap(), std::fs::read(b.join("reward_10mb.svg")).unwrap());
}

#[test]
fn compare_scheme_flag_restricts_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = ntn(&["compare", "--config", &cfg, "--scheme", "pbu-greedy", "--scheme", "pbu-mab", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!out.join("series_proposed_10mb.csv").exists());
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert_eq!(summary.matches("\"weights\"").count(), 4);
}

#[test]
fn plot_without_series_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = ntn(&["plot", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn shipped_desk_config_matches_the_desk_preset() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let cfg = ntn_core::config::ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg, ntn_core::config::ExperimentConfig::desk());
}
