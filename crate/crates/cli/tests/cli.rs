use std::path::Path;
use std::process::{Command, Output};

use ppdre::numeric::{standard_normal, SeededRng};
use ppdre::RatioModel;

fn ppdre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppdre"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

const SMALL_TOY: &str = r#"{
  "scenario": {"name": "toy2d", "n_p": 300, "n_q": 300},
  "methods": ["ppdre", "ulsif"],
  "seeds": [4],
  "folds": 3,
  "grids": {
    "ppdre": {"k": [2], "j": [10], "lambda": [0.5], "lr": [0.1]},
    "ulsif": {"sigma_scale": [0.5, 1.0], "lambda": [0.1], "centers": 50}
  },
  "selection": {"fit": {"max_inner_iters": 60}},
  "grid_steps": 11
}"#;

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn bench_writes_report_and_grid_dump_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL_TOY);
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = ppdre(&["bench", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", "1"]);
        assert!(o.status.success(), "{}", text(&o.stderr));
        let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
        let rows: Vec<&str> = report.lines().skip(1).collect();
        assert!(rows.len() >= 2);
        assert!(rows.iter().any(|r| r.starts_with("toy2d,ppdre,4,rmsle,")));
        assert!(rows.iter().any(|r| r.starts_with("toy2d,ulsif")));
        let grid = std::fs::read_to_string(out.join("grid_toy2d_ppdre_4.csv")).unwrap();
        assert_eq!(grid.lines().count(), 1 + 11 * 11);
        reports.push(report);
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL_TOY);
    let out = dir.path().join("o");
    let o = ppdre(&[
        "bench", "--config", &cfg, "--out", out.to_str().unwrap(), "--methods", "logistic", "--seeds", "1,2",
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let methods: Vec<&str> = report.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(methods, vec!["logistic", "logistic"]);
}

#[test]
fn unknown_method_fails_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = ppdre(&["bench", "--methods", "ppdre,lightgbm", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("unknown method `lightgbm`"));
    assert!(!out.exists());

    let bad = write(dir.path(), "bad.json", r#"{"methods": ["ppdre"], "sedes": [1]}"#);
    let o = ppdre(&["bench", "--config", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("sedes"));
}

#[test]
fn fit_then_eval_near_truth_and_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let o = ppdre(&[
        "fit", "--scenario", "toy2d", "--seed", "2", "--k", "2", "--j", "30", "--model",
        model.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let summary = text(&o.stdout);
    assert!(summary.starts_with("method=ppdre K=2 train_loss="), "{summary}");

    let origin = write(dir.path(), "origin.csv", "x1,x2\n0,0\n");
    let o = ppdre(&["eval", "--model", model.to_str().unwrap(), "--points", &origin]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let v: f64 = text(&o.stdout).lines().nth(1).unwrap().parse().unwrap();
    assert!((1.3..=2.7).contains(&v), "r(0) = {v}");

    // 100 points through the CLI match the library evaluation
    let pts = standard_normal(&mut SeededRng::new(8), 100, 2);
    let mut csv = String::from("a,b\n");
    for r in pts.row_iter() {
        csv.push_str(&format!("{:.17e},{:.17e}\n", r[0], r[1]));
    }
    let path = write(dir.path(), "pts.csv", &csv);
    let out_csv = dir.path().join("r.csv");
    let o = ppdre(&[
        "eval", "--model", model.to_str().unwrap(), "--points", &path, "--out", out_csv.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let m = RatioModel::load(&model).unwrap();
    let got: Vec<f64> = std::fs::read_to_string(&out_csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(got.len(), 100);
    for (g, r) in got.iter().zip(pts.row_iter()) {
        let want = m.evaluate(r).unwrap();
        assert!(*g > 0.0);
        assert_eq!(g.to_bits(), want.to_bits());
    }
}

#[test]
fn fit_from_csv_with_named_columns() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SeededRng::new(1);
    let mut p = String::from("u,v,w\n");
    let mut q = String::from("u,v,w\n");
    for _ in 0..80 {
        p.push_str(&format!("{},{},{}\n", rng.normal(), rng.normal(), 9.0));
        q.push_str(&format!("{},{},{}\n", 1.5 * rng.normal(), rng.normal(), 9.0));
    }
    let pp = write(dir.path(), "p.csv", &p);
    let qq = write(dir.path(), "q.csv", &q);
    let model = dir.path().join("m.json");
    let o = ppdre(&[
        "fit", "--method", "ulsif", "--numerator", &pp, "--denominator", &qq, "--columns", "u,v", "--sigma",
        "1.0", "--model", model.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).starts_with("method=ulsif b=80"));
    assert_eq!(RatioModel::load(&model).unwrap().d(), 2);

    let o = ppdre(&[
        "fit", "--numerator", &pp, "--denominator", &qq, "--columns", "u,target", "--model",
        model.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("column `target` not found"), "{}", text(&o.stderr));
}

#[test]
fn csv_scenario_names_missing_target() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", "a,b\n1,2\n");
    let cfg = write(
        dir.path(),
        "cfg.json",
        &format!(
            r#"{{"scenario": {{"name": "covariate_shift_csv", "path": "{data}", "target": "price", "features": ["a"]}}}}"#
        ),
    );
    let o = ppdre(&["bench", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("column `price` not found"), "{}", text(&o.stderr));
}

#[test]
fn eval_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "k0.json", r#"{"method": "ppdre", "d": 2, "K": 0, "projections": []}"#);
    let pts = write(dir.path(), "p.csv", "x1,x2\n1,2\n-3,4\n");
    let o = ppdre(&["eval", "--model", &model, "--points", &pts]);
    assert!(o.status.success());
    let vals: Vec<f64> = text(&o.stdout).lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(vals, vec![1.0, 1.0]);

    let empty = write(dir.path(), "e.csv", "x1,x2\n");
    let o = ppdre(&["eval", "--model", &model, "--points", &empty]);
    assert_eq!(text(&o.stdout), "r_hat\n");

    let wide = write(dir.path(), "w.csv", "x1,x2,x3\n1,2,3\n");
    let o = ppdre(&["eval", "--model", &model, "--points", &wide]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("at row 1"), "{}", text(&o.stderr));
}
