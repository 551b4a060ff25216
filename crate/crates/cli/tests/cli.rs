use std::path::Path;
use std::process::{Command, Output};

const CRITERION: &str = "h = 1\nl_list = 4, 6\np_list = 0.2, 0.4\nn_samples = 30\nseed = 9\n";

fn depin(args: &[&str], dir: &Path, envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_depin"));
    cmd.args(args).current_dir(dir).env_remove("DEPIN_SEED").env_remove("DEPIN_WORKERS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

/// Rows keyed by everything but `wall_ms`, sorted.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let mut out: Vec<Vec<String>> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            r.iter().take(10).map(str::to_string).collect()
        })
        .collect();
    out.sort();
    out
}

fn aggregate<'a>(rows: &'a [Vec<String>], l: &str, param: &str, metric: &str) -> Option<&'a str> {
    rows.iter()
        .find(|r| r[1] == "aggregate" && r[2] == l && r[3] == param && r[6] == metric)
        .map(|r| r[7].as_str())
}

#[test]
fn resumed_runs_match_a_full_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.conf"), CRITERION).unwrap();
    let full = depin(&["criterion", "--config", "c.conf", "--out", "full.csv"], dir.path(), &[]);
    assert!(full.status.success(), "{}", String::from_utf8_lossy(&full.stderr));

    // cut inside a record, then exactly after a row in the middle of a sample
    for cut in [7, 0] {
        let part = depin(
            &["criterion", "--config", "c.conf", "--out", "part.csv", "--max-samples", "50"],
            dir.path(),
            &[],
        );
        assert!(part.status.success());
        assert!(String::from_utf8_lossy(&part.stderr).contains("samples left"));
        let text = std::fs::read_to_string(dir.path().join("part.csv")).unwrap();
        let keep = if cut > 0 {
            text.len() - cut
        } else {
            text.trim_end().rfind('\n').unwrap() + 1
        };
        std::fs::write(dir.path().join("part.csv"), &text[..keep]).unwrap();
        let rest = depin(&["criterion", "--config", "c.conf", "--out", "part.csv", "--resume"], dir.path(), &[]);
        assert!(rest.status.success(), "{}", String::from_utf8_lossy(&rest.stderr));
        assert_eq!(rows(&dir.path().join("full.csv")), rows(&dir.path().join("part.csv")));
    }

    let again = depin(&["criterion", "--config", "c.conf", "--out", "part.csv", "--resume"], dir.path(), &[]);
    assert!(String::from_utf8_lossy(&again.stderr).contains("already complete"));
}

#[test]
fn no_traps_never_block() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.conf"), "h = 1\nl_list = 4, 8\np_list = 0\nn_samples = 20\n").unwrap();
    let out = depin(&["criterion", "--config", "c.conf", "--out", "o.csv"], dir.path(), &[]);
    assert!(out.status.success());
    let r = rows(&dir.path().join("o.csv"));
    assert_eq!(aggregate(&r, "4", "p=0", "p_hat"), Some("0"));
    assert_eq!(aggregate(&r, "8", "p=0", "p_hat"), Some("0"));
}

#[test]
fn unknown_keys_are_rejected_with_the_valid_ones() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.conf"), "l_lst = 4\n").unwrap();
    let out = depin(&["criterion", "--config", "c.conf"], dir.path(), &[]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unknown key `l_lst`") && err.contains("l_list"), "{err}");
}

#[test]
fn seed_override_changes_the_hash_and_workers_do_not() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.conf"), CRITERION).unwrap();
    let hash = |envs: &[(&str, &str)]| {
        let out = depin(&["criterion", "--config", "c.conf"], dir.path(), envs);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        text.lines().nth(1).unwrap().split(',').next().unwrap().to_string()
    };
    let base = hash(&[]);
    assert_eq!(base.len(), 16);
    assert_eq!(base, hash(&[("DEPIN_WORKERS", "2")]));
    assert_ne!(base, hash(&[("DEPIN_SEED", "10")]));
    assert!(!depin(&["criterion", "--config", "c.conf"], dir.path(), &[("DEPIN_SEED", "x")]).status.success());
}
