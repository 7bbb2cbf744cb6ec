use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_incentive-lab"));
    c.env_remove("INCENTIVE_LAB_OUTPUT_ROOT").env_remove("INCENTIVE_LAB_SEEDS");
    c
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run_in(root: &Path, config: &Path) -> Output {
    bin().env("INCENTIVE_LAB_OUTPUT_ROOT", root).arg("run").arg(config).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn golden_tables_are_byte_identical() {
    for name in ["prop1_small", "tournament_small", "solve_small"] {
        let root = TempDir::new().unwrap();
        let o = run_in(root.path(), &golden(&format!("{name}.toml")));
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        let got = std::fs::read(root.path().join(name).join("results.csv")).unwrap();
        let want = std::fs::read(golden(&format!("{name}.csv"))).unwrap();
        assert!(got == want, "{name} differs from its golden table");
        let s = summary(&root.path().join(name));
        assert_eq!(s["partial"], false);
        assert_eq!(s["config_hash"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn same_config_twice_and_thread_count_do_not_change_results() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cfg = golden("tournament_small.toml");
    assert!(run_in(a.path(), &cfg).status.success());
    assert!(run_in(a.path(), &cfg).status.success(), "re-running an unchanged config may overwrite");
    let o = bin().env("INCENTIVE_LAB_OUTPUT_ROOT", b.path()).args(["--jobs", "2", "run"]).arg(&cfg).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let read = |d: &TempDir| std::fs::read(d.path().join("tournament_small/results.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn mismatched_result_directory_is_not_overwritten() {
    let root = TempDir::new().unwrap();
    let cfg = golden("prop1_small.toml");
    assert!(run_in(root.path(), &cfg).status.success());
    let table = root.path().join("prop1_small/results.csv");
    let before = std::fs::read(&table).unwrap();
    let o = bin().env("INCENTIVE_LAB_OUTPUT_ROOT", root.path()).env("INCENTIVE_LAB_SEEDS", "4").arg("run").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("refusing to overwrite"));
    assert_eq!(std::fs::read(&table).unwrap(), before);
}

#[test]
fn seed_override_changes_the_hash() {
    let cfg = golden("prop1_small.toml");
    let plain = bin().arg("validate").arg(&cfg).output().unwrap();
    let seeded = bin().env("INCENTIVE_LAB_SEEDS", "1,2").arg("validate").arg(&cfg).output().unwrap();
    assert!(plain.status.success() && seeded.status.success());
    assert_ne!(plain.stdout, seeded.stdout);
}

#[test]
fn validation_errors_are_structured() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("kind = \"threshold-scan\"\noutput = \"o\"\n[grid]\ngamma = [0.5]\n", "grid.alpha"),
        ("kind = \"threshold-scan\"\noutput = \"o\"\nseeds = []\n[grid]\nalpha = [0.3]\ngamma = [0.5]\n", "seeds"),
        ("kind = \"threshold-scan\"\noutput = \"o\"\n[grid]\nalpha = [0.7]\ngamma = [0.5]\n", "outside"),
        ("kind = \"bogus\"\noutput = \"o\"\n", "config"),
        ("kind = \"prop1\"\noutput = \"o\"\ncolour = 1\n[grid]\nalpha = [0.4]\nk = [2]\nn = [1]\n", "colour"),
        ("kind = \"prop1\"\noutput = \"o\"\n[grid]\nalpha = [0.4]\nk = [1]\nn = [1]\n", "grid.k"),
        (
            "kind = \"multiagent-tournament\"\noutput = \"o\"\nmatchups = [[\"honest\", \"greedy\"]]\n[grid]\nalpha = [0.2]\ngamma = [0.5]\nm = [4]\n",
            "unknown strategy 'greedy'",
        ),
        ("kind = \"replay\"\noutput = \"o\"\ninputs = [\"missing.csv\"]\n[grid]\nalpha = [0.4]\ngamma = [0.5]\n", "does not exist"),
        ("kind = \"casper\"\nprotocol = \"bitcoin\"\noutput = \"o\"\n[grid]\nalpha = [0.3]\nbeta = [0.1]\ntau = [0.3]\n", "protocol"),
    ];
    for (i, (body, needle)) in cases.iter().enumerate() {
        let p = write_config(dir.path(), &format!("c{i}.toml"), body);
        for cmd in ["validate", "run"] {
            let o = bin().current_dir(dir.path()).arg(cmd).arg(&p).output().unwrap();
            assert_eq!(o.status.code(), Some(2), "case {i} ({cmd}): {}", stderr(&o));
            assert!(stderr(&o).contains(needle), "case {i}: expected '{needle}' in {}", stderr(&o));
        }
    }
    assert!(!dir.path().join("o").exists(), "failed validation must not create outputs");
    let o = bin().arg("validate").arg(dir.path().join("absent.toml")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn prop1_bound_column_dominates_gap() {
    let root = TempDir::new().unwrap();
    let body = "kind = \"prop1\"\noutput = \"p\"\nseeds = [1]\n[grid]\nalpha = [0.4]\ngamma = [0.5]\nk = [2]\nn = { start = 1, stop = 50, step = 1 }\n";
    // `n` is an integer list; the range form is for real-valued axes.
    let bad = write_config(root.path(), "bad.toml", body);
    assert_eq!(bin().arg("validate").arg(&bad).output().unwrap().status.code(), Some(2));
    let ns: Vec<String> = (1..=50).map(|n| n.to_string()).collect();
    let body = format!(
        "kind = \"prop1\"\noutput = \"p\"\nseeds = [1]\n[grid]\nalpha = [0.4]\ngamma = [0.5]\nk = [2]\nn = [{}]\n",
        ns.join(", ")
    );
    let cfg = write_config(root.path(), "p.toml", &body);
    let o = run_in(root.path(), &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = csv::Reader::from_path(root.path().join("p/results.csv")).unwrap();
    let h = r.headers().unwrap().clone();
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let (gap, bound, holds, n) = (col("gap"), col("bound"), col("holds"), col("n"));
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        let (g, b): (f64, f64) = (rec[gap].parse().unwrap(), rec[bound].parse().unwrap());
        let epochs: f64 = rec[n].parse().unwrap();
        assert!(b >= g, "gap {g} above bound {b}");
        assert_eq!(&rec[holds], "true");
        assert!((b - 1.0 / epochs).abs() < 1e-15);
        rows += 1;
    }
    // extremal account plus three simulated strategies, each for n = 1..=50
    assert_eq!(rows, 4 * 50);
    assert_eq!(summary(&root.path().join("p"))["highlights"]["violations"], 0);
}

#[test]
fn threshold_scan_finds_quarter_stake() {
    let root = TempDir::new().unwrap();
    let body = "kind = \"threshold-scan\"\noutput = \"t\"\ncap = 20\n[grid]\nalpha = { start = 0.2, stop = 0.3, step = 0.01 }\ngamma = [0.5]\n";
    let cfg = write_config(root.path(), "t.toml", body);
    let o = run_in(root.path(), &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = summary(&root.path().join("t"))["highlights"]["thresholds"][0]["first_profitable_alpha"].as_f64().unwrap();
    assert!((first - 0.25).abs() <= 0.01 + 1e-12, "first profitable alpha {first}");
}

#[test]
fn honest_three_agent_tournament_is_fair() {
    let root = TempDir::new().unwrap();
    let body = "kind = \"multiagent-tournament\"\noutput = \"k3\"\nordering = \"time-segmented\"\nseeds = [2]\nepisodes = 4000\nmatchups = [[\"honest\", \"honest\", \"honest\"]]\n[grid]\nalpha = [0.1733]\ngamma = [0.333333333333]\nm = [4]\n";
    let cfg = write_config(root.path(), "k3.toml", body);
    let o = run_in(root.path(), &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let worst = summary(&root.path().join("k3"))["highlights"]["matchups"][0]["max_abs_excess"].as_f64().unwrap();
    assert!(worst <= 0.005, "excess {worst}");
}

#[test]
fn failed_run_keeps_partial_marker_and_flushed_rows() {
    let root = TempDir::new().unwrap();
    // the second line-up has gammas summing past 1, which only the game constructor rejects
    let body = "kind = \"multiagent-tournament\"\noutput = \"x\"\nordering = \"rushing\"\nepisodes = 20\nmatchups = [[\"honest\"], [\"honest\", \"honest\", \"honest\"]]\n[grid]\nalpha = [0.2]\ngamma = [0.4]\n";
    let cfg = write_config(root.path(), "x.toml", body);
    let o = run_in(root.path(), &cfg);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert_eq!(summary(&root.path().join("x"))["partial"], true);
    let rows = csv::Reader::from_path(root.path().join("x/results.csv")).unwrap().records().count();
    assert_eq!(rows, 2);
}

#[test]
fn plotdata_figures() {
    let root = TempDir::new().unwrap();
    for name in ["solve_small", "tournament_small"] {
        assert!(run_in(root.path(), &golden(&format!("{name}.toml"))).status.success());
    }
    let casper = write_config(
        root.path(),
        "c.toml",
        "kind = \"casper\"\noutput = \"c\"\nrounds = 300\n[grid]\nalpha = [0.3]\nbeta = [0.3, 0.1]\ntau = [0.3]\n",
    );
    assert!(run_in(root.path(), &casper).status.success());

    let plot = |dir: &str, fig: &str, extra: &[&str]| {
        bin().arg("plotdata").arg(root.path().join(dir)).args(["--figure", fig]).args(extra).output().unwrap()
    };
    let first_line = |o: &Output| String::from_utf8_lossy(&o.stdout).lines().next().unwrap_or_default().to_string();

    let o = plot("solve_small", "btc_r_vs_alpha", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(first_line(&o), "alpha,honest,sm1,osm,learned");

    let o = plot("tournament_small", "osm_vs_rl", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(first_line(&o), "alpha,excess_rel_reward_honest+osm-wait,excess_rel_reward_sm1+honest");
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 3);

    let o = plot("c", "casper_voting", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "beta,honest_vote_reward,attack_vote_reward,gain_pct");
    assert!(lines[1].starts_with("0.1,") && lines[2].starts_with("0.3,"), "rows sorted by beta");

    let o = plot("c", "casper_voting", &["--select", "beta=0.3"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 2);

    let o = plot("c", "no_such_figure", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown figure"));

    let o = plot("c", "btc_r_vs_alpha", &[]);
    assert_eq!(o.status.code(), Some(2));
}
