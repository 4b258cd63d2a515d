use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nondiff-rl"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn text(o: &Output) -> (String, String) {
    (String::from_utf8_lossy(&o.stdout).into(), String::from_utf8_lossy(&o.stderr).into())
}

const PPO: &str = "algorithm = ppo\ntotal_steps = 512\nppo.actors = 2\nppo.steps_per_actor = 32\nppo.minibatch = 32\nppo.hidden = 16\nthreads = 8\n";

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", PPO);
    let out = dir.path().join("run");
    let o = bin().args(["train", "--config"]).arg(&cfg).args(["--seed", "3", "--out"]).arg(&out).output().unwrap();
    let (stdout, stderr) = text(&o);
    assert!(o.status.success(), "{stderr}");
    assert!(stdout.contains("over 20 greedy episodes"), "{stdout}");
    let saved = std::fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(saved.contains("seed = 3\n"));

    let o = bin().args(["eval", "--checkpoint"]).arg(out.join("final.ndrl")).args(["--episodes", "4"]).output().unwrap();
    let (stdout, stderr) = text(&o);
    assert!(o.status.success(), "{stderr}");
    assert!(stdout.contains("over 4 greedy episodes"), "{stdout}");
}

#[test]
fn thread_cap_does_not_change_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", PPO);
    let mut logs = Vec::new();
    for cap in ["1", "8"] {
        let out = dir.path().join(format!("cap{cap}"));
        let o = bin()
            .env("NONDIFF_RL_THREADS", cap)
            .args(["train", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", text(&o).1);
        logs.push(std::fs::read(out.join("metrics.jsonl")).unwrap());
    }
    assert_eq!(logs[0], logs[1]);

    let o = bin().env("NONDIFF_RL_THREADS", "zero").args(["train", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("bad")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).1.contains("NONDIFF_RL_THREADS"));
}

#[test]
fn invalid_config_exits_nonzero_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "algorithm = qlern\n");
    let o = bin().args(["train", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let (_, stderr) = text(&o);
    for name in ["qlearn", "reinforce", "sac", "ppo", "updown", "plan"] {
        assert!(stderr.contains(name), "{stderr}");
    }
    let cfg = write(dir.path(), "range.cfg", "gamma = 1.5\n");
    let o = bin().args(["classify", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).1.contains("gamma"));
}

#[test]
fn plan_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().args(["plan", "--env", "chain", "--budget", "200", "--budget", "400", "--trials", "5"]).output().unwrap();
    let (stdout, stderr) = text(&o);
    assert!(o.status.success(), "{stderr}");
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "env,budget,trials,optimal_action,mcts_agreement,random_agreement");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("chain6,200,5,1,"));

    let cfg = write(dir.path(), "grid.cfg", "env.width = 3\nenv.height = 3\nenv.obstacles = 1:0\n");
    let csv = dir.path().join("agree.csv");
    let o = bin().args(["plan", "--env", "grid", "--budget", "300", "--trials", "4", "--config"]).arg(&cfg).arg("--out").arg(&csv).output().unwrap();
    assert!(o.status.success(), "{}", text(&o).1);
    let body = std::fs::read_to_string(&csv).unwrap();
    assert!(body.lines().nth(1).unwrap().starts_with("grid3x3,300,4,"), "{body}");

    let o = bin().args(["plan", "--env", "maze", "--budget", "10"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn classify_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", "classify.seeds = 2\nclassify.epochs = 5\n");
    let o = bin().args(["classify", "--config"]).arg(&cfg).output().unwrap();
    let (stdout, stderr) = text(&o);
    assert!(o.status.success(), "{stderr}");
    assert!(stdout.starts_with("seed,mse_accuracy,ce_accuracy\n"));
    assert_eq!(stdout.lines().count(), 4);
}
