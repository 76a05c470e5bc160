use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = "\
sim.actors = 4
sim.horizon = 5
sim.sigma_u = 150
policy.kind = me
policy.n_scenarios = 3
run.episodes = 25
run.repetitions = 2
run.eval_samples = 20
run.offline_scenarios = 3
";

fn mblab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mblab"))
        .args(args)
        .current_dir(dir)
        .env_remove("MBLAB_SEED")
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("exp.cfg"), CONFIG).unwrap();
    dir
}

fn stderr_line(o: &Output) -> String {
    let s = String::from_utf8_lossy(&o.stderr).to_string();
    assert_eq!(s.trim_end().lines().count(), 1, "{s:?}");
    s
}

#[test]
fn run_is_byte_identical_across_invocations() {
    let dir = setup();
    let files = ["rep_000.csv", "rep_001.csv", "summary.csv", "regret.svg", "store_rep_000.txt", "config.txt"];
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let o = mblab(&["run", "exp.cfg", "--out", "a"], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        snapshots.push(files.map(|f| fs::read(dir.path().join("a").join(f)).unwrap()));
    }
    for (f, (x, y)) in files.iter().zip(snapshots[0].iter().zip(&snapshots[1])) {
        assert!(x == y, "{f} differs between runs");
    }
    let csv = fs::read_to_string(dir.path().join("a/rep_000.csv")).unwrap();
    assert!(csv.starts_with("run_id,episode,policy,reward_w,opt_reward_w,regret_w,norm_regret,cum_norm_regret,backend,solver_moves_or_ms,solver_gap\n"));
    assert_eq!(csv.lines().count(), 26);
}

#[test]
fn seed_env_overrides_the_config() {
    let dir = setup();
    let plain = mblab(&["run", "exp.cfg", "--out", "plain"], dir.path());
    assert!(plain.status.success());
    let seeded = Command::new(env!("CARGO_BIN_EXE_mblab"))
        .args(["run", "exp.cfg", "--out", "seeded"])
        .current_dir(dir.path())
        .env("MBLAB_SEED", "77")
        .output()
        .unwrap();
    assert!(seeded.status.success());
    let cfg = fs::read_to_string(dir.path().join("seeded/config.txt")).unwrap();
    assert!(cfg.contains("run.master_seed = 77"));
    assert_ne!(
        fs::read(dir.path().join("plain/rep_000.csv")).unwrap(),
        fs::read(dir.path().join("seeded/rep_000.csv")).unwrap()
    );
    let bad = Command::new(env!("CARGO_BIN_EXE_mblab"))
        .args(["run", "exp.cfg"])
        .current_dir(dir.path())
        .env("MBLAB_SEED", "x")
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(stderr_line(&bad).contains("MBLAB_SEED"));
}

#[test]
fn errors_exit_nonzero_with_one_line() {
    let dir = setup();
    fs::write(dir.path().join("bad.cfg"), "sim.actors = 3\nsim.bogus = 1\n").unwrap();
    let o = mblab(&["run", "bad.cfg"], dir.path());
    assert!(!o.status.success());
    assert!(stderr_line(&o).contains("line 2"));

    let o = mblab(&["run", "missing.cfg"], dir.path());
    assert!(!o.status.success());
    stderr_line(&o);

    let o = mblab(&["sweep", "exp.cfg", "--axis", "gamma", "--values", "1"], dir.path());
    assert!(!o.status.success());
    stderr_line(&o);

    let o = mblab(&["nonsense"], dir.path());
    assert!(!o.status.success());
    stderr_line(&o);

    fs::write(dir.path().join("ext.cfg"), format!("{CONFIG}optimizer.backend = external\noptimizer.external_command = /bin/false\n"))
        .unwrap();
    let o = mblab(&["run", "ext.cfg", "--out", "ext"], dir.path());
    assert!(!o.status.success());
    assert!(stderr_line(&o).contains("aborted"));
    let csv = fs::read_to_string(dir.path().join("ext/rep_000.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains("external error"), "{csv}");
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn sweep_writes_points_and_summary() {
    let dir = setup();
    let o = mblab(&["sweep", "exp.cfg", "--axis", "n_scenarios", "--values", "1,4", "--out", "sw", "--set", "run.repetitions=1"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("sw/sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(dir.path().join("sw/n_scenarios=4/rep_000.csv").exists());
    assert!(dir.path().join("sw/sweep.svg").exists());
}

#[test]
fn plot_and_export_lp() {
    let dir = setup();
    assert!(mblab(&["run", "exp.cfg", "--out", "r"], dir.path()).status.success());
    let o = mblab(&["plot", "r/rep_000.csv", "r/rep_001.csv", "--out", "p.svg"], dir.path());
    assert!(o.status.success());
    let svg = fs::read_to_string(dir.path().join("p.svg")).unwrap();
    assert!(svg.contains(">rep_000<") && svg.contains(">rep_001<"));

    let o = mblab(&["export-lp", "exp.cfg", "--episode-snapshot", "r/store_rep_000.txt", "--out", "m.lp"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lp = fs::read_to_string(dir.path().join("m.lp")).unwrap();
    assert!(lp.contains("obj: M_1 + M_2 + M_3"));
    assert!(lp.contains("one_4:"));

    fs::write(dir.path().join("other.cfg"), "sim.actors = 3\nsim.horizon = 5\n").unwrap();
    let o = mblab(&["export-lp", "other.cfg", "--episode-snapshot", "r/store_rep_000.txt"], dir.path());
    assert!(!o.status.success());
    stderr_line(&o);
}

#[test]
fn bound_reports_the_constant() {
    let dir = setup();
    fs::write(
        dir.path().join("inst.txt"),
        "1 1 cat 0.9 : 2 0 ; 0.1 : 1 0\n1 2 cat 0.1 : 2 0 ; 0.9 : 1 0\n2 1 cat 0.9 : 0 2 ; 0.1 : 0 1\n2 2 cat 0.1 : 0 2 ; 0.9 : 0 1\n",
    )
    .unwrap();
    let o = mblab(&["bound", "inst.txt"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rho: f64 = text.lines().find_map(|l| l.strip_prefix("rho ")).unwrap().parse().unwrap();
    assert!((rho - 1.0 / 9f64.ln()).abs() < 1e-8, "{text}");
    assert!(text.contains("weight (2,2)"));
    assert_eq!(text.lines().filter(|l| l.starts_with("single_bandit actor")).count(), 2);

    fs::write(dir.path().join("broken.txt"), "1 1 cat 0.5 : 1\n").unwrap();
    let o = mblab(&["bound", "broken.txt"], dir.path());
    assert!(!o.status.success());
    assert!(stderr_line(&o).contains("line 1"));
}
