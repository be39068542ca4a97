use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use banach_fbs::banach::weighted_norm;
use banach_fbs::operators::{integration_operator, LinearOperator};
use banach_fbs::tv::io::GridField;
use banach_fbs::tv::tv_seminorm;
use banach_fbs_cli::config::SEED_ENV;
use banach_fbs_cli::sparse::NNZ_THRESHOLD;
use banach_fbs_cli::table::read_table;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_banach-fbs"));
    cmd.env_remove(SEED_ENV);
    cmd
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn sparse_config(out: &Path, extra: &str) -> String {
    format!(
        "kind = sparse-integration\nn = 80\np = 1.5, 2\nalpha = 0.001\nnoise = 0.005\n\
         max_iters = 400\nseed = 3\noutput = {}\n{extra}",
        out.display()
    )
}

/// Every `.table` and `.csv` under `dir`, with the wall-clock column of
/// history files removed.
fn deterministic_outputs(dir: &Path) -> Vec<(PathBuf, String)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            if ext != "table" && ext != "csv" {
                continue;
            }
            let mut text = fs::read_to_string(&path).unwrap();
            if path.file_name().unwrap() == "history.csv" {
                text = text
                    .lines()
                    .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
                    .collect();
            }
            files.push((path.strip_prefix(dir).unwrap().to_path_buf(), text));
        }
    }
    files.sort();
    files
}

#[test]
fn sparse_demo_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "s.conf", &sparse_config(&out, ""));
    let res = run(bin().args(["sparse-demo", "--config"]).arg(&cfg));
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in [
        "u_true.table",
        "f.table",
        "u_p1.5.table",
        "u_p2.table",
        "Ku_p1.5.table",
        "Ku_p2.table",
        "summary.csv",
        "p1.5/history.csv",
        "p2/history.csv",
        "p2/fdelta.table",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("p,discrepancy,nnz,data_error,alpha\n"));
    let history = fs::read_to_string(out.join("p2/history.csv")).unwrap();
    assert!(history.starts_with("n,objective,D,tau,step_norm,seconds\n"));
}

#[test]
fn summary_rows_are_recomputable_from_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "s.conf", &sparse_config(&out, ""));
    assert!(run(bin().args(["sparse-demo", "--config"]).arg(&cfg)).status.success());
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let op = integration_operator(80).unwrap();
    let h = vec![1.0 / 80.0; 80];
    for row in summary.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        let p: f64 = cols[0].parse().unwrap();
        let (_, u) = read_table(&out.join(format!("u_p{}.table", cols[0]))).unwrap();
        let (_, fd) = read_table(&out.join(format!("p{}/fdelta.table", cols[0]))).unwrap();
        let (_, f) = read_table(&out.join("f.table")).unwrap();
        let res: Vec<f64> = op.apply(&u).iter().zip(&fd).map(|(a, b)| a - b).collect();
        let disc: f64 = cols[1].parse().unwrap();
        assert!((weighted_norm(&res, &h, p) - disc).abs() <= 1e-10);
        let nnz: usize = cols[2].parse().unwrap();
        assert_eq!(u.iter().filter(|x| x.abs() > NNZ_THRESHOLD).count(), nnz);
        let err: Vec<f64> = f.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let data_error: f64 = cols[3].parse().unwrap();
        assert!((weighted_norm(&err, &h, p) - data_error).abs() <= 1e-10);
        assert!((data_error - 0.005).abs() <= 1e-12);
    }
}

#[test]
fn seed_and_environment_override_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let outs: Vec<PathBuf> = (0..3).map(|i| tmp.path().join(format!("o{i}"))).collect();
    // run 0: config seed 11; run 1: same again; run 2: config seed 1, env 11
    for (i, out) in outs.iter().enumerate() {
        let seed = if i == 2 { 1 } else { 11 };
        let text = sparse_config(out, "").replace("seed = 3", &format!("seed = {seed}"));
        let cfg = write_config(tmp.path(), &format!("c{i}.conf"), &text);
        let mut cmd = bin();
        cmd.args(["sparse-demo", "--jobs", "2", "--config"]).arg(&cfg);
        if i == 2 {
            cmd.env(SEED_ENV, "11");
        }
        assert!(run(&mut cmd).status.success());
    }
    let a = deterministic_outputs(&outs[0]);
    assert!(a.len() >= 10);
    assert_eq!(a, deterministic_outputs(&outs[1]));
    assert_eq!(a, deterministic_outputs(&outs[2]));

    let other = tmp.path().join("o3");
    let cfg = write_config(tmp.path(), "c3.conf", &sparse_config(&other, "").replace("seed = 3", "seed = 12"));
    assert!(run(bin().args(["sparse-demo", "--config"]).arg(&cfg)).status.success());
    assert_ne!(a, deterministic_outputs(&other));
}

#[test]
fn config_errors_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cases = [
        sparse_config(&out, "bogus_key = 1"),
        sparse_config(&out, "").replace("p = 1.5, 2", "p = 0.5"),
        sparse_config(&out, "").replace("n = 80", "n = eighty"),
        "no equals sign here\n".to_string(),
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("bad{i}.conf"), text);
        let res = run(bin().args(["sparse-demo", "--config"]).arg(&cfg));
        assert_eq!(res.status.code(), Some(2), "case {i}: {}", String::from_utf8_lossy(&res.stderr));
    }
    let res = run(bin().args(["tv", "--config"]).arg(tmp.path().join("missing.conf")));
    assert_eq!(res.status.code(), Some(2));
    let cfg = write_config(tmp.path(), "bad_seed.conf", &sparse_config(&out, ""));
    let res = run(bin().args(["sparse-demo", "--config"]).arg(&cfg).env(SEED_ENV, "minus one"));
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn failure_while_producing_results_exits_with_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("occupied");
    fs::write(&blocker, "a file, not a directory").unwrap();
    let cfg = write_config(tmp.path(), "s.conf", &sparse_config(&blocker.join("out"), ""));
    let res = run(bin().args(["sparse-demo", "--config"]).arg(&cfg));
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}

fn synthetic_history(path: &Path, r: impl Fn(f64) -> f64, len: usize) {
    let mut text = String::from("n,objective,D,tau,step_norm,seconds\n");
    for n in 0..len {
        text.push_str(&format!("{n},{},0,1,0,0\n", r(n as f64)));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn diagnose_recovers_synthetic_slope() {
    let tmp = tempfile::tempdir().unwrap();
    let hist = tmp.path().join("history.csv");
    synthetic_history(&hist, |n| 1.0 / n.max(1.0), 1000);
    let res = run(bin().args(["diagnose", "--ref", "0", "--p", "2", "--history"]).arg(&hist));
    assert!(res.status.success());
    let stdout = String::from_utf8_lossy(&res.stdout);
    let slope: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("slope = "))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((slope + 1.0).abs() <= 0.01);
    let table = fs::read_to_string(tmp.path().join("rate.table")).unwrap();
    let first: Vec<f64> = table.lines().next().unwrap().split_whitespace().map(|x| x.parse().unwrap()).collect();
    assert_eq!(first, vec![1.0, 1.0]);
}

#[test]
fn diagnose_names_missing_column() {
    let tmp = tempfile::tempdir().unwrap();
    let hist = tmp.path().join("history.csv");
    fs::write(&hist, "n,D,tau,step_norm,seconds\n0,1,1,1,0\n").unwrap();
    let res = run(bin().args(["diagnose", "--ref", "0", "--p", "2", "--history"]).arg(&hist));
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("objective"));
}

#[test]
fn diagnose_rejects_a_reference_above_the_history() {
    let tmp = tempfile::tempdir().unwrap();
    let hist = tmp.path().join("history.csv");
    synthetic_history(&hist, |n| 1.0 / n.max(1.0), 50);
    let res = run(bin().args(["diagnose", "--ref", "0.5", "--p", "2", "--history"]).arg(&hist));
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn tv_no_op_problem_reproduces_its_input() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("tv");
    let text = format!(
        "kind = tv-denoise\ndims = 16 16\np = 2\nalpha = 0\nnoise = 0\nkernel = none\n\
         d_tol = 0\nmax_iters = 400\noutput = {}\n",
        out.display()
    );
    let cfg = write_config(tmp.path(), "tv.conf", &text);
    let res = run(bin().args(["tv", "--config"]).arg(&cfg));
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let f = GridField::load(out.join("f.hdr")).unwrap();
    let u = GridField::load(out.join("u.hdr")).unwrap();
    let truth = GridField::load(out.join("u_true.hdr")).unwrap();
    assert_eq!(f.values(), truth.values());
    let gap = u.values().iter().zip(f.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(gap <= 1e-10, "max deviation {gap}");
    for name in ["u.pgm", "u.pgm.scale.txt", "history.csv", "summary.csv"] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
}

#[test]
fn tv_summary_matches_written_volume() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("tv");
    let text = format!(
        "kind = tv-deblur\ndims = 12 10 8\nalpha = 0.01\nnoise = 0.01\nkernel = uniform\n\
         kernel_size = 3\nmax_iters = 10\noutput = {}\n",
        out.display()
    );
    let cfg = write_config(tmp.path(), "tv.conf", &text);
    let res = run(bin().args(["tv", "--config"]).arg(&cfg));
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let u = GridField::load(out.join("u.hdr")).unwrap();
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let row: Vec<f64> = summary.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(row[0], 1.5);
    assert!((tv_seminorm(u.values(), u.shape()) - row[3]).abs() <= 1e-10);
}
