use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robust-w1"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn exact_prints_the_distance() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("a.csv");
    let y = dir.path().join("b.csv");
    fs::write(&x, "x0,x1\n0,0\n1,0\n").unwrap();
    fs::write(&y, "x0,x1\n0,3\n1,4\n").unwrap();
    let o = run(dir.path(), &["exact", x.to_str().unwrap(), y.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    // pairs (0,0)-(0,3) and (1,0)-(1,4): (3 + 4) / 2
    assert_eq!(stdout(&o).trim(), "3.5");
}

#[test]
fn gen_data_then_exact_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--seed", "3", "gen-data", "--n", "40", "--tau", "0.1"]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let (x, y) = (dir.path().join("x.csv"), dir.path().join("y.csv"));
    assert!(x.exists() && y.exists());
    let o = run(dir.path(), &["exact", x.to_str().unwrap(), y.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!(v > 0.0);
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["gen-data", "--tau", "0.7"],
        vec!["estimate", "--n", "10", "--k", "11"],
        vec!["--no-such-flag"],
    ] {
        let o = run(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {o:?}");
    }
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["estimate", "--n", "50", "--epochs", "5", "--lr", "1e308", "--no-clip-biases"]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
}

#[test]
fn estimate_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["estimate", "--n", "60", "--k", "3", "--epochs", "4", "--hidden", "8"]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert!(stdout(&o).contains("estimate="));
    let trace = fs::read_to_string(dir.path().join("estimate_mou-diag_k3.csv")).unwrap();
    let rows: Vec<&str> = trace.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "iteration,epoch,objective");
    assert_eq!(rows.len(), 1 + 12);
}

#[test]
fn plot_rejects_an_empty_csv() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let o = run(dir.path(), &["plot", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
    let headers_only = dir.path().join("headers.csv");
    fs::write(&headers_only, "dataset,estimator,tau,k,repeat,seed,estimate,clean_reference,abs_error\n").unwrap();
    assert_eq!(run(dir.path(), &["plot", headers_only.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn sweep_plot_draws_one_image_per_dataset_with_a_curve_per_tau() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let mut body = String::from("dataset,estimator,tau,k,repeat,seed,estimate,clean_reference,abs_error\n");
    for ds in ["D1", "D2"] {
        for tau in ["0", "0.05", "0.1", "0.15"] {
            for k in [1, 10, 50] {
                for r in 0..3 {
                    let err = 0.1 + r as f64 * 0.01 + 1.0 / k as f64;
                    body.push_str(&format!("{ds},mou-diag,{tau},{k},{r},{r},1.0,1.0,{err}\n"));
                }
            }
        }
    }
    fs::write(&csv, body).unwrap();
    let o = run(dir.path(), &["plot", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let mut svgs: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.file_name().into_string().unwrap()))
        .filter(|n| n.ends_with(".svg"))
        .collect();
    svgs.sort();
    assert_eq!(svgs, ["sweep_D1.svg", "sweep_D2.svg"]);
    let svg = fs::read_to_string(dir.path().join("sweep_D1.svg")).unwrap();
    for tau in ["0", "0.05", "0.1", "0.15"] {
        assert!(svg.contains(&format!("\ntau = {tau}\n")), "missing legend for tau {tau}");
    }
    // each curve is one coloured line plus its legend swatch; axes are black
    let coloured = svg.match_indices("<polyline").filter(|(i, _)| !svg[*i..].split('>').next().unwrap().contains("#000000")).count();
    assert_eq!(coloured, 2 * 4);
}
