use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SOLVE_CONFIG: &str = "
[grid]
nx = 17
ny = 17
[material]
mu = 1
lambda = 1
[thickness]
g1 = 0.5
g2 = 0.5 + 0.25*x1
[growth]
eps_11 = 0.1*x2
kappa_11 = 0.5 + 0.3*x2
kappa_22 = 0.2*x1
kappa_12 = 0.1
[solver]
grad_tol = 1e-6
seed = 3
n_tests = 8
";

fn fvk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fvk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(cmd: &str, config: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = fvk(&args);
    assert!(
        o.status.success(),
        "{cmd} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn exit_code(cmd: &str, config: &Path, out: &Path) -> (i32, String) {
    let o = fvk(&[
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    (
        o.status.code().unwrap(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_then_residual_reproduces_stationarity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "plate.ini", SOLVE_CONFIG);
    let solve_out = dir.path().join("solve");
    run_ok("solve", &cfg, &solve_out, &[]);
    let report = json(&solve_out.join("report.json"));
    assert_eq!(report["termination"], "grad_tol");

    let residual_cfg = format!("{SOLVE_CONFIG}[residual]\nfields = solve/fields.csv\n");
    let cfg2 = write_config(dir.path(), "residual.ini", &residual_cfg);
    let res_out = dir.path().join("residual");
    run_ok("residual", &cfg2, &res_out, &[]);
    let res = json(&res_out.join("residual.json"));
    for key in [
        "stationarity_max",
        "stationarity_max_r1",
        "stationarity_max_r2",
        "el_r1_l2",
        "el_r2_l2",
        "bdry_b1",
        "bdry_b2",
        "bdry_b3",
        "airy_ls_residual",
    ] {
        let a = report[key].as_f64().unwrap();
        let b = res[key].as_f64().unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "{key}: {a} vs {b}");
    }
    let energy = res["energy"].as_f64().unwrap();
    let final_energy = report["final_energy"].as_f64().unwrap();
    assert!((energy - final_energy).abs() <= 1e-12 * final_energy.abs());
    assert!(res_out.join("residual_fields.csv").exists());
}

#[test]
fn resolved_config_rerun_is_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "plate.ini", SOLVE_CONFIG);
    let first = dir.path().join("first");
    run_ok("solve", &cfg, &first, &[]);
    let second = dir.path().join("second");
    run_ok("solve", &first.join("config.resolved.ini"), &second, &[]);
    for file in ["fields.csv", "report.json", "trace.csv", "config.resolved.ini"] {
        assert_eq!(
            fs::read(first.join(file)).unwrap(),
            fs::read(second.join(file)).unwrap(),
            "{file} differs"
        );
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "plate.ini", SOLVE_CONFIG);
    let one = dir.path().join("one");
    run_ok("solve", &cfg, &one, &["--threads", "1"]);
    let four = dir.path().join("four");
    run_ok("solve", &cfg, &four, &["--threads", "4"]);
    assert_eq!(
        fs::read(one.join("fields.csv")).unwrap(),
        fs::read(four.join("fields.csv")).unwrap()
    );
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "plate.ini", SOLVE_CONFIG);
    let out = dir.path().join("out");
    run_ok("solve", &cfg, &out, &["--seed", "11"]);
    assert_eq!(json(&out.join("report.json"))["seed"], 11);
    let echo = fs::read_to_string(out.join("config.resolved.ini")).unwrap();
    assert!(echo.contains("seed = 11"));
}

#[test]
fn material_table_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.ini", "[material]\nmu = 1\nlambda = 1\n");
    run_ok("material-table", &cfg, dir.path(), &[]);
    let text = fs::read_to_string(dir.path().join("material_table.csv")).unwrap();
    let header: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let identity: Vec<&str> = text
        .lines()
        .find(|l| l.starts_with("identity,"))
        .unwrap()
        .split(',')
        .collect();
    let col = |name: &str| identity[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("q2"), "6.666666666666667");
    assert_eq!(col("c3"), "-0.6666666666666666");
    assert_eq!(col("q3_embedded"), "8");
}

#[test]
fn gamma_writes_table_with_footer() {
    let dir = tempfile::tempdir().unwrap();
    let text = "
[grid]
nx = 9
ny = 9
[material]
[thickness]
g1 = 0.5
g2 = 0.5
[growth]
kappa_11 = 1
[gamma]
h_list = 0.04, 0.02
n_inplane = 17
[displacement]
";
    let cfg = write_config(dir.path(), "g.ini", text);
    run_ok("gamma", &cfg, dir.path(), &[]);
    let csv = fs::read_to_string(dir.path().join("gamma.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "h,scaled_energy,rel_gap_to_Ig");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("# extrapolated="));
    let gap: f64 = lines[2].split(',').nth(2).unwrap().parse().unwrap();
    assert!(gap < 1e-6, "pure bending gap {gap}");
}

#[test]
fn export_samples_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[grid]\nnx = 5\nny = 5\n[thickness]\ng1 = 0.5\ng2 = 1 + x1\n[displacement]\nv = x2\n";
    let cfg = write_config(dir.path(), "e.ini", text);
    run_ok("export", &cfg, dir.path(), &[]);
    let csv = fs::read_to_string(dir.path().join("inputs.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 2 + 2 + 18 + 3);
    let last: Vec<f64> = csv
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|c| c.parse().unwrap())
        .collect();
    assert_eq!(last[3], 2.0);
    assert_eq!(*last.last().unwrap(), 1.0);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_g = write_config(
        dir.path(),
        "a.ini",
        "[grid]\n[material]\n[thickness]\ng1 = -0.1\ng2 = 0.5\n",
    );
    let (code, err) = exit_code("solve", &bad_g, dir.path());
    assert_eq!(code, 2);
    assert!(
        err.contains("line 4") && err.contains("thickness must be positive"),
        "{err}"
    );

    let unknown = write_config(dir.path(), "b.ini", "[grid]\nnx = 9\nspacing = 2\n");
    let (code, err) = exit_code("solve", &unknown, dir.path());
    assert_eq!(code, 2);
    assert!(err.contains("line 3") && err.contains("spacing"), "{err}");

    let no_thickness = write_config(dir.path(), "c.ini", "[grid]\n[material]\n");
    let (code, err) = exit_code("solve", &no_thickness, dir.path());
    assert_eq!(code, 2);
    assert!(err.contains("[thickness]"), "{err}");

    let bad_expr = write_config(
        dir.path(),
        "d.ini",
        "[grid]\n[material]\n[thickness]\ng1 = 0.5*\ng2 = 0.5\n",
    );
    assert_eq!(exit_code("solve", &bad_expr, dir.path()).0, 2);
}

#[test]
fn missing_files_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.ini");
    assert_eq!(exit_code("solve", &missing, dir.path()).0, 4);
    let text = format!("{SOLVE_CONFIG}[residual]\nfields = absent.csv\n");
    let cfg = write_config(dir.path(), "r.ini", &text);
    assert_eq!(exit_code("residual", &cfg, dir.path()).0, 4);
}

#[test]
fn failed_line_search_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[grid]\nnx = 9\nny = 9\n[material]\n[thickness]\ng1 = 0.5\ng2 = 0.5\n[growth]\nkappa_11 = 1\n[solver]\narmijo = 0.999\nmax_backtracks = 1\n";
    let cfg = write_config(dir.path(), "ls.ini", text);
    let (code, err) = exit_code("solve", &cfg, dir.path());
    assert_eq!(code, 3, "{err}");
}

#[test]
fn singular_growth_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[grid]\nnx = 9\nny = 9\n[material]\n[thickness]\ng1 = 0.5\ng2 = 0.5\n[growth]\neps_11 = -156.25\n[gamma]\nh_list = 0.08, 0.04\nn_inplane = 9\n[displacement]\n";
    let cfg = write_config(dir.path(), "s.ini", text);
    let (code, err) = exit_code("gamma", &cfg, dir.path());
    assert_eq!(code, 5, "{err}");
    assert!(err.contains("not invertible"));
}
