use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sphere-fv");

fn sphere_fv(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    listing(dir).into_iter().map(|n| (n.clone(), fs::read(dir.join(&n)).unwrap())).collect()
}

const SMALL_RUN: &str =
    "mesh.n_bands = 8\nmesh.n_lon_equator = 16\nflux.kind = burgers\ntime.t_end = 0.2\ntime.n_outputs = 3\n";

#[test]
fn missing_config_exits_2_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sphere_fv(&["run", "--config", "absent.cfg", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(listing(tmp.path()).is_empty());
}

#[test]
fn invalid_config_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "bad.cfg", "mesh.n_bands = 8\nmesh.colour = red\n");
    let out = sphere_fv(&["run", "--config", "bad.cfg", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn run_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "a.cfg", SMALL_RUN);
    for d in ["o1", "o2"] {
        let out = sphere_fv(&["run", "--config", "a.cfg", "--out", d], tmp.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = read_all(&tmp.path().join("o1"));
    let b = read_all(&tmp.path().join("o2"));
    assert_eq!(a.len(), b.len());
    for ((na, ca), (nb, cb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        if na != "run_config.txt" {
            assert_eq!(ca, cb, "{na} differs");
        }
    }
    let names = listing(&tmp.path().join("o1"));
    for n in ["run_diagnostics.csv", "run_state_0000.csv", "run_state_0003.csv", "run_status.txt"] {
        assert!(names.iter().any(|x| x == n), "missing {n}");
    }
}

#[test]
fn echoed_config_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "a.cfg", &format!("{SMALL_RUN}output.directory = first\n"));
    assert_eq!(sphere_fv(&["run", "--config", "a.cfg"], tmp.path()).status.code(), Some(0));
    fs::copy(tmp.path().join("first/run_config.txt"), tmp.path().join("echo.cfg")).unwrap();
    assert_eq!(sphere_fv(&["run", "--config", "echo.cfg"], tmp.path()).status.code(), Some(0));
    // The echo names the same directory, so the re-run overwrote it; re-run
    // into a fresh one to compare.
    let echoed = fs::read_to_string(tmp.path().join("echo.cfg")).unwrap();
    let moved = echoed.replace("output.directory = first", "output.directory = second");
    write_config(tmp.path(), "echo2.cfg", &moved);
    assert_eq!(sphere_fv(&["run", "--config", "echo2.cfg"], tmp.path()).status.code(), Some(0));
    let a = read_all(&tmp.path().join("first"));
    let b = read_all(&tmp.path().join("second"));
    for ((na, ca), (_, cb)) in a.iter().zip(&b) {
        if na != "run_config.txt" {
            assert_eq!(ca, cb, "{na} differs");
        }
    }
    let second_echo = fs::read_to_string(tmp.path().join("second/run_config.txt")).unwrap();
    assert_eq!(second_echo, moved);
}

#[test]
fn constant_run_keeps_every_state() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(
        tmp.path(),
        "c.cfg",
        "mesh.n_bands = 8\nmesh.n_lon_equator = 16\nflux.kind = trig\ninit.kind = constant\ninit.value = 0.3\ntime.t_end = 0.5\n",
    );
    let out = sphere_fv(&["run", "--config", "c.cfg", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let o = tmp.path().join("o");
    let first = fs::read(o.join("run_state_0000.csv")).unwrap();
    let states: Vec<String> = listing(&o).into_iter().filter(|n| n.starts_with("run_state_")).collect();
    assert_eq!(states.len(), 5);
    for n in states {
        assert_eq!(fs::read(o.join(&n)).unwrap(), first, "{n}");
    }
}

#[test]
fn check_compat_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "g.cfg", "mesh.n_bands = 8\nmesh.n_lon_equator = 16\nflux.kind = trig\n");
    let out = sphere_fv(&["check-compat", "--config", "g.cfg"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("worst_cell=") && text.contains("worst_u=") && text.contains("PASS"));
    let residual: f64 = text.lines().find_map(|l| l.strip_prefix("max_residual=")).unwrap().parse().unwrap();
    assert!(residual <= 1e-12);

    write_config(tmp.path(), "p.cfg", "mesh.n_bands = 8\nmesh.n_lon_equator = 16\nflux.kind = projected\n");
    let out = sphere_fv(&["check-compat", "--config", "p.cfg"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL"));
}

#[test]
fn torus_rejects_non_convex_flux() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "t.cfg", "torus.flux = cubic\n");
    let out = sphere_fv(&["torus", "--config", "t.cfg", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("convexity violation"));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn torus_constant_data_has_zero_error() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "t.cfg", "torus.init = constant\ntorus.value = 0.4\ntorus.resolutions = 16,32\n");
    let out = sphere_fv(&["torus", "--config", "t.cfg", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(tmp.path().join("o/run_torus_errors.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("N,l1_error,observed_order"));
    for l in lines {
        let err: f64 = l.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(err, 0.0);
    }
    assert!(tmp.path().join("o/run_torus_profile_32.csv").exists());
}

#[test]
fn converge_writes_decreasing_errors() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.cfg", "time.t_end = 0.5\n");
    let out = sphere_fv(&["converge", "--config", "c.cfg", "--out", "o", "--resolutions", "8x16,16x32"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let table = fs::read_to_string(tmp.path().join("o/run_convergence.csv")).unwrap();
    let errs: Vec<f64> = table.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(errs.len(), 2);
    assert!(errs[1] < errs[0]);
}

#[test]
fn converge_rejects_nonlinear_flux() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.cfg", "flux.kind = burgers\n");
    let out = sphere_fv(&["converge", "--config", "c.cfg", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn runtime_failure_exits_3_with_flagged_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    // u^2 overflows, so the first flux evaluation is not finite.
    write_config(
        tmp.path(),
        "big.cfg",
        "mesh.n_bands = 8\nmesh.n_lon_equator = 16\nflux.kind = burgers\ninit.amplitude = 1e200\n",
    );
    let out = sphere_fv(&["run", "--config", "big.cfg", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    let o = tmp.path().join("o");
    assert!(o.join("run_state_0000.csv").exists());
    let status = fs::read_to_string(o.join("run_status.txt")).unwrap();
    assert!(status.starts_with("status=error\n"), "{status}");
}
