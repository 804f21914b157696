use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use matern_info::design::{random_design, Region};
use matern_info::likelihood::simulate;
use matern_info::CovarianceParams;
use nalgebra::{DMatrix, DVector};
use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_matern-info"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

fn write_dataset(dir: &Path) -> PathBuf {
    let design = random_design(40, Region::unit_square(), 4).unwrap();
    let params = CovarianceParams::new(1.0, 0.2, 0.2, 0.5).unwrap();
    let f = DMatrix::from_element(40, 1, 1.0);
    let data = simulate(&params, &DVector::from_vec(vec![3.0]), &design, &f, 9).unwrap();
    let mut text = String::from("# simulated\nx,y,z\n");
    for (p, z) in design.points.iter().zip(data.z.iter()) {
        text.push_str(&format!("{},{},{}\n", p[0], p[1], z));
    }
    let path = dir.join("data.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn degenerate_bachoc_matches_regular_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("regular.csv");
    let b = dir.path().join("bachoc.csv");
    assert!(bin(&["design", "--type", "regular", "--n1", "15", "--out", path_str(&a)]).status.success());
    let out = bin(&["design", "--type", "bachoc", "--n1", "15", "--n2", "15", "--eps", "0", "--seed", "1", "--out", path_str(&b)]);
    assert!(out.status.success());
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    assert_eq!(data_rows(std::str::from_utf8(&ta).unwrap()).len(), 225);
    let meta: Value = serde_json::from_slice(&std::fs::read(a.with_extension("json")).unwrap()).unwrap();
    assert_eq!(meta["n"], 225);
    assert!(meta["invocation"].as_str().unwrap().contains("--n1 15"));
}

#[test]
fn cluster_design_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let args = ["design", "--type", "regular+cluster", "--n1", "14", "--nc", "10", "--ppc", "4", "--eps", "0.04", "--seed", "7", "--out", path_str(&out)];
    assert!(bin(&args).status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 227);
    assert_eq!(data_rows(&text).len(), 226);
    let again = dir.path().join("d.csv");
    let mut args2 = args;
    args2[14] = path_str(&again);
    assert!(bin(&args2).status.success());
    assert_eq!(text, std::fs::read_to_string(&again).unwrap());
}

#[test]
fn empty_grid_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let r = bin(&["info-surface", "--type", "random", "--n", "20", "--vartheta", "0.5:0.1:0.1", "--nu", "0.5", "--out", path_str(&out)]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("vartheta"));
    assert!(!out.exists());
}

#[test]
fn surface_rows_follow_grid_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let r = bin(&["info-surface", "--type", "random", "--n", "30", "--vartheta", "0.1:0.3:0.1", "--nu", "0.5,1.5", "--out", path_str(&out), "--threads", "2"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# matern-info "));
    assert!(text.lines().nth(1).unwrap().starts_with("vartheta,nu,info_sigma2,info_tau2,info_vartheta,info_nu,info_zeta,status"));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 6);
    assert!(rows[0].starts_with("0.1,0.5,") && rows[1].starts_with("0.1,1.5,") && rows[5].starts_with("0.3,1.5,"));
    assert!(rows.iter().all(|r| r.ends_with(",ok")));
    let single = dir.path().join("t.csv");
    let r = bin(&["info-surface", "--type", "random", "--n", "30", "--vartheta", "0.1:0.3:0.1", "--nu", "0.5,1.5", "--out", path_str(&single), "--threads", "1"]);
    assert!(r.status.success());
    assert_eq!(data_rows(&text), data_rows(&std::fs::read_to_string(&single).unwrap()));
}

#[test]
fn info_vs_n_single_and_growth() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.csv");
    assert!(bin(&["info-vs-n", "--type", "random", "--n-list", "50", "--out", path_str(&one)]).status.success());
    assert_eq!(data_rows(&std::fs::read_to_string(&one).unwrap()).len(), 1);

    // columns: n, r_max, sigma2, tau2, vartheta, nu, zeta
    let path = dir.path().join("many.csv");
    let r = bin(&["info-vs-n", "--type", "random", "--n-list", "100,225,400", "--nu", "1.5", "--out", path_str(&path)]);
    assert!(r.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let smooth: Vec<Vec<f64>> = data_rows(&text)
        .iter()
        .map(|r| r.split(',').take(7).map(|c| c.parse().unwrap()).collect())
        .collect();
    let slope = |rows: &[Vec<f64>], k: usize| (rows[2][k] - rows[0][k]) / 300.0;
    for k in 2..7 {
        assert!(smooth[0][k] < smooth[1][k] && smooth[1][k] < smooth[2][k], "column {k}");
    }
    assert!(slope(&smooth, 4) > slope(&smooth, 5), "{} vs {}", slope(&smooth, 4), slope(&smooth, 5));
}

#[test]
fn fixed_smoothness_fit_reports_nugget_share() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path());
    let out = dir.path().join("fit.json");
    let r = bin(&["fit", "--data", path_str(&data), "--fix", "nu=0.5", "--starts", "1", "--out", path_str(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let report: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(report["params_hat"]["nu"], 0.5);
    assert_eq!(report["fixed"], serde_json::json!(["nu"]));
    let p = &report["params_hat"];
    let ratio = report["nugget_to_sill"].as_f64().unwrap();
    let (s2, t2) = (p["sigma2"].as_f64().unwrap(), p["tau2"].as_f64().unwrap());
    assert!((ratio - t2 / (s2 + t2)).abs() < 1e-15);
    assert!(report["information"]["info_vector"]["info_nu"].as_f64().unwrap() > 0.0);
    assert_eq!(report["observed_information"]["params"].as_array().unwrap().len(), 3);
}

#[test]
fn missing_data_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.json");
    let r = bin(&["fit", "--data", "no-such-file.csv", "--out", path_str(&out)]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("no-such-file.csv"));
    assert!(!out.exists());
}

#[test]
fn profile_flags_grid_without_mle() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path());
    let out = dir.path().join("p.csv");
    let r = bin(&["profile", "--data", path_str(&data), "--grid", "nu=40,50", "--starts", "1", "--out", path_str(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("contains_mle=false"));
    assert!(text.lines().find(|l| !l.starts_with('#')).unwrap().starts_with("nu,loglik,"));
    assert_eq!(data_rows(&text).len(), 2);
}

#[test]
fn influence_pass_through_and_rejection() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    std::fs::write(&m, "[[3,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]").unwrap();
    let out = dir.path().join("i.json");
    assert!(bin(&["influence", "--matrix", path_str(&m), "--out", path_str(&out)]).status.success());
    let report: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let text = report.to_string();
    assert!(text.contains("\"lambda_star\":3.0"), "{text}");

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2,0,0\n0,1,0,0\n0,0,1,0\n0,0,0,1\n").unwrap();
    let out2 = dir.path().join("j.json");
    let r = bin(&["influence", "--matrix", path_str(&bad), "--out", path_str(&out2)]);
    assert!(!r.status.success());
    assert!(!out2.exists());
}

#[test]
fn run_accepts_library_invocation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    matern_info::cli::run(["matern-info", "design", "--type", "random", "--n", "12", "--seed", "3", "--out", path_str(&out)]).unwrap();
    assert_eq!(data_rows(&std::fs::read_to_string(&out).unwrap()).len(), 12);
    assert!(matern_info::cli::run(["matern-info", "design", "--type", "random"]).is_err());
}
