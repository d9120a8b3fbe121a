use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ferrosolve"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str], scenario: &Path, out: Option<&Path>) -> Output {
    let mut cmd = bin();
    cmd.args(&args[..1]).arg(scenario).args(&args[1..]);
    if let Some(o) = out {
        cmd.arg("--out").arg(o);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Copy of a bundled scenario with `edit` applied to its text.
fn variant(dir: &Path, name: &str, edit: impl Fn(String) -> String) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, edit(fs::read_to_string(scenario(name)).unwrap())).unwrap();
    path
}

/// Numeric CSV cells, skipping the version line, header and the integer columns.
fn csv_values(path: &Path, skip: usize) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(2)
        .flat_map(|l| l.split(',').skip(skip).map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .collect()
}

#[test]
fn zero_scenario_writes_zero_outputs() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["run"], &scenario("zero.toml"), Some(out.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let traj = out.path().join("trajectory.csv");
    assert!(fs::read_to_string(&traj).unwrap().starts_with("# ferrosolve trajectory v1\nlevel,step,time,cell,r0,P0,sigma0,E0,certificate\n"));
    // columns after level, step, time, cell
    assert!(csv_values(&traj, 4).iter().all(|v| *v == 0.0));
    assert!(csv_values(&out.path().join("ledger.csv"), 2).iter().all(|v| *v == 0.0));
    for file in ["summary.txt", "fields_0000.vtk", "fields_0008.vtk", "fields_0008.csv"] {
        assert!(out.path().join(file).exists(), "{file}");
    }
}

#[test]
fn zero_scenario_converges_trivially() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["converge", "--levels", "1..3"], &scenario("zero.toml"), Some(out.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let conv = fs::read_to_string(out.path().join("convergence.csv")).unwrap();
    for line in conv.lines().skip(2).take(2) {
        assert_eq!(line.split(',').nth(1), Some("0e0"), "{line}");
    }
}

#[test]
fn unattainable_step_tolerance_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = variant(dir.path(), "reference.toml", |s| {
        s + "\n[tolerances]\nstep = 1e-16\nmax_iterations = 500\n"
    });
    let o = run(&["run", "--level", "3"], &path, Some(&dir.path().join("out")));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("StepSolveFailure"), "{}", stderr(&o));
}

#[test]
fn indefinite_permittivity_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = variant(dir.path(), "reference.toml", |s| {
        s.replace("dielectric = { kind = \"diagonal\", values = [1.5] }", "dielectric = { kind = \"diagonal\", values = [-1.5] }")
    });
    let o = run(&["check"], &path, None);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("NonPositiveDefinite"), "{}", stderr(&o));
}

#[test]
fn check_reports_static_certificates() {
    let o = run(&["check"], &scenario("reference.toml"), None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    for key in ["ellipticity c0", "lambda_min(D)", "growth of g", "regime"] {
        assert!(text.contains(key), "{key} missing from\n{text}");
    }
}

#[test]
fn reversed_levels_exit_3() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["converge", "--levels", "5..4"], &scenario("reference.toml"), Some(out.path()));
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("ValidationError"), "{}", stderr(&o));
}

#[test]
fn malformed_file_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    fs::write(&path, "[grid]\ncells = [4\n").unwrap();
    let o = run(&["check"], &path, None);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("ParseError at line 2"), "{}", stderr(&o));
}

#[test]
fn missing_file_is_a_validation_error() {
    let o = run(&["check"], Path::new("/nonexistent/scenario.toml"), None);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let path = scenario("rate_independent.toml");
    let first = run(&["converge", "--levels", "3..5"], &path, Some(a.path()));
    let second = bin()
        .env("FERROSOLVE_THREADS", "1")
        .args(["converge"])
        .arg(&path)
        .args(["--levels", "3..5", "--out"])
        .arg(b.path())
        .output()
        .unwrap();
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    assert_eq!(second.status.code(), Some(0), "{}", stderr(&second));
    for file in ["trajectory.csv", "convergence.csv", "mvs.csv", "atoms.csv"] {
        let (x, y) = (fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap());
        assert!(x == y, "{file} differs");
    }
}

#[test]
fn vtk_snapshot_layout() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["run", "--level", "2"], &scenario("coupled_2d.toml"), Some(out.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let vtk = fs::read_to_string(out.path().join("fields_0004.vtk")).unwrap();
    let lines: Vec<&str> = vtk.lines().collect();
    assert_eq!(lines[0], "# vtk DataFile Version 3.0");
    assert_eq!(lines[3], "DATASET STRUCTURED_POINTS");
    assert_eq!(lines[4], "DIMENSIONS 7 7 1");
    assert_eq!(lines[7], "POINT_DATA 49");
    let blocks: Vec<&str> = lines
        .iter()
        .filter(|l| l.starts_with("VECTORS") || l.starts_with("SCALARS") || l.starts_with("TENSORS") || l.starts_with("CELL_DATA"))
        .copied()
        .collect();
    assert_eq!(
        blocks,
        [
            "VECTORS displacement double",
            "SCALARS potential double 1",
            "CELL_DATA 36",
            "TENSORS r double",
            "TENSORS sigma double",
            "VECTORS P double",
            "VECTORS E double",
            "VECTORS D double",
        ]
    );
    // tensors are symmetric 3x3 per cell
    let start = lines.iter().position(|l| *l == "TENSORS sigma double").unwrap() + 1;
    let t: Vec<f64> = lines[start].split(' ').map(|v| v.parse().unwrap()).collect();
    assert_eq!(t.len(), 9);
    assert_eq!(t[1], t[3]);
    assert_eq!(t[8], 0.0);
}
