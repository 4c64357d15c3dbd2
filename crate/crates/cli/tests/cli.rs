use std::path::Path;
use std::process::{Command, Output};

use hxd_core::datagen::SyntheticDist;
use hxd_core::SampleMatrix;

fn hxd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hxd"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn hxd")
}

fn write_samples(dir: &Path, name: &str, s: &SampleMatrix) {
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    std::fs::write(dir.join(name), buf).unwrap();
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn fit_uniform_has_unit_dc_and_matching_metadata() {
    let dir = tempfile::tempdir().unwrap();
    write_samples(dir.path(), "u.csv", &SyntheticDist::uniform(3).draw(300, 1).unwrap());
    let o = hxd(dir.path(), &["fit", "-i", "u.csv", "-o", "m.csv", "--policy", "fixed", "--level", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().nth(1).unwrap().split(',').take(3).collect::<Vec<_>>(), ["300", "3", "2"]);
    let table = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    let dc = table.lines().nth(2).unwrap();
    assert_eq!(dc, "0,0,0,0,0,0,1");
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.csv.json")).unwrap()).unwrap();
    assert_eq!(meta["dim"], 3);
    assert_eq!(meta["seed"], 0);
}

#[test]
fn fit_error_codes_and_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "0.1,0.2\n0.3,oops\n").unwrap();
    std::fs::write(dir.path().join("ragged.csv"), "0.1,0.2\n0.3\n").unwrap();
    std::fs::write(dir.path().join("oob.csv"), "0.1,0.2\n0.3,1.2\n").unwrap();
    assert_eq!(hxd(dir.path(), &["fit", "-i", "missing.csv", "-o", "m.csv"]).status.code(), Some(2));
    assert_eq!(hxd(dir.path(), &["fit", "-i", "bad.csv", "-o", "m.csv"]).status.code(), Some(2));
    assert_eq!(hxd(dir.path(), &["fit", "-i", "ragged.csv", "-o", "m.csv"]).status.code(), Some(2));
    assert_eq!(hxd(dir.path(), &["fit", "-i", "oob.csv", "-o", "m.csv"]).status.code(), Some(3));
    assert!(!dir.path().join("m.csv").exists());
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(leftovers.len(), 3, "{leftovers:?}");
}

#[test]
fn eval_and_sample_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = SyntheticDist::product_beta(vec![2.0], vec![5.0]).draw(2000, 2).unwrap();
    write_samples(dir.path(), "b.csv", &s);
    assert!(hxd(dir.path(), &["fit", "-i", "b.csv", "-o", "m.csv"]).status.success());
    std::fs::write(dir.path().join("q.csv"), "0.2\n0.9\n").unwrap();
    let o = hxd(dir.path(), &["eval", "-m", "m.csv", "-i", "q.csv"]);
    let vals: Vec<f64> = stdout(&o).lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(vals.len(), 2);
    assert!(vals[0] > vals[1], "{vals:?}");
    let o = hxd(dir.path(), &["--seed", "5", "sample", "-m", "m.csv", "-n", "500"]);
    let pts = SampleMatrix::read_csv(&o.stdout[..]).unwrap();
    assert_eq!((pts.len(), pts.dim()), (500, 1));
    pts.check_unit_cube().unwrap();
    std::fs::write(dir.path().join("q2.csv"), "0.2,0.3\n").unwrap();
    assert_eq!(hxd(dir.path(), &["eval", "-m", "m.csv", "-i", "q2.csv"]).status.code(), Some(2));
}

#[test]
fn gof_calibration_under_uniform_null() {
    let dir = tempfile::tempdir().unwrap();
    let mut accepted = 0;
    for seed in 0..20u64 {
        write_samples(dir.path(), "u.csv", &SyntheticDist::uniform(2).draw(200, 100 + seed).unwrap());
        let seed_s = seed.to_string();
        let o = hxd(dir.path(), &["--seed", &seed_s, "gof", "-i", "u.csv", "-B", "300"]);
        let code = o.status.code().unwrap();
        assert!(code <= 1, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).starts_with("n,D,l,T_n,threshold,reject,z_score,sigma_hat,seed\n"));
        if code == 0 {
            accepted += 1;
        }
    }
    assert!(accepted >= 18, "{accepted}/20");
}

#[test]
fn gof_rejects_shifted_alternative() {
    let dir = tempfile::tempdir().unwrap();
    let alt = SyntheticDist::BetaPlusUniform {
        a: vec![2.0, 2.0],
        b: vec![2.0, 5.0],
        shift: 0.2,
    };
    write_samples(dir.path(), "x.csv", &alt.draw(500, 7).unwrap());
    let o = hxd(
        dir.path(),
        &["gof", "-i", "x.csv", "--null", "beta", "--null-a", "2,2", "--null-b", "2,5", "-l", "4"],
    );
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).lines().nth(1).unwrap().contains(",true,"));
}

#[test]
fn gof_flag_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_samples(dir.path(), "u.csv", &SyntheticDist::uniform(2).draw(50, 1).unwrap());
    assert_eq!(hxd(dir.path(), &["gof", "-i", "u.csv", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(hxd(dir.path(), &["gof", "-i", "u.csv", "--null", "beta"]).status.code(), Some(2));
    assert_eq!(hxd(dir.path(), &["gof", "-i", "u.csv", "--significance", "1.5"]).status.code(), Some(2));
}

#[test]
fn selfcheck_passes_and_detects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let o = hxd(dir.path(), &["selfcheck"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().count() >= 8);
    assert!(text.lines().all(|l| l.starts_with("PASS ")));
    let bad = hxd(dir.path(), &["selfcheck", "--corrupt-order"]);
    assert_ne!(bad.status.code(), Some(0));
    assert!(stdout(&bad).contains("FAIL coefficient_order"));
}

#[test]
fn experiment_writes_outputs_and_rejects_bad_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "schema_version = 1\nid = \"gap\"\nkind = \"empirical_gap\"\nn_grid = [64, 256]\nreplications = 2\n\n[gap]\ndim = 2\nbeta = 1\n";
    std::fs::write(dir.path().join("gap.toml"), cfg).unwrap();
    let o = hxd(dir.path(), &["experiment", "-c", "gap.toml", "-o", "res"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = std::fs::read_to_string(dir.path().join("res/results.csv")).unwrap();
    assert!(results.starts_with("experiment,estimator,n,metric,value,stderr\n"));
    assert!(dir.path().join("res/series/empirical_gap.csv").exists());
    assert!(stdout(&o).contains("log-log slope"));
    std::fs::write(dir.path().join("bad.toml"), cfg.replace("schema_version = 1", "schema_version = 9")).unwrap();
    assert_eq!(hxd(dir.path(), &["experiment", "-c", "bad.toml"]).status.code(), Some(2));
}
