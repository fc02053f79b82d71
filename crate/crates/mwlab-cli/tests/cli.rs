//! End-to-end checks of the command-line contract: every subcommand writes a
//! CSV table plus a JSON sidecar, reruns are byte-identical, config errors
//! name the offending field, and numeric failures land in flagged rows.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mwlab_core::dyadic::CubeWindow;
use mwlab_core::seqspaces::{seq_norm, Exponent, Family, SequenceField, SpaceParams, Weighting};
use tempfile::TempDir;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mwlab")
}

/// Runs `mwlab <cmd> --config <cfg> --out <out>` with the given extra env.
fn run(cmd: &str, cfg: &Path, out: &Path, envs: &[(&str, &str)]) -> Output {
    let mut c = Command::new(bin());
    c.arg(cmd).arg("--config").arg(cfg).arg("--out").arg(out);
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().expect("spawn mwlab")
}

/// Writes the config, runs the command, asserts success, returns the out dir.
fn run_ok(dir: &TempDir, cmd: &str, config: &str) -> PathBuf {
    let cfg = dir.path().join(format!("{cmd}.toml"));
    fs::write(&cfg, config).unwrap();
    let out = dir.path().join(format!("{cmd}-out"));
    let o = run(cmd, &cfg, &out, &[]);
    assert!(
        o.status.success(),
        "{cmd} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    out
}

/// Parses `<out>/<cmd>.csv` into a header row and string records.
fn read_table(out: &Path, cmd: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let path = out.join(format!("{cmd}.csv"));
    let mut rdr = csv::Reader::from_path(&path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    let headers = rdr.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(str::to_owned).collect())
        .collect();
    (headers, rows)
}

fn col(headers: &[String], name: &str) -> usize {
    headers
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("column {name} missing from {headers:?}"))
}

#[test]
fn identity_weight_constants_are_all_one() {
    let dir = TempDir::new().unwrap();
    let out = run_ok(
        &dir,
        "constants",
        r#"
p = 2.0
[weight]
kind = "identity"
n = 1
m = 2
[window]
j_min = 0
j_max = 2
"#,
    );
    let (h, rows) = read_table(&out, "constants");
    assert_eq!(rows.len(), 1);
    for name in ["ap", "apinfty", "fujii_sc", "fujii_vec"] {
        let v: f64 = rows[0][col(&h, name)].parse().unwrap();
        assert!((v - 1.0).abs() < 1e-9, "{name} = {v}");
    }
    assert_eq!(rows[0][col(&h, "status")], "ok");
}

#[test]
fn threshold_example_row_is_exact() {
    let dir = TempDir::new().unwrap();
    let out = run_ok(
        &dir,
        "adop-thresholds",
        r#"
n = 1
d1 = 0.0
d2 = 0.0
[space]
family = "B"
s = 0.0
tau = 0.0
p = 2.0
q = 2.0
"#,
    );
    let (h, rows) = read_table(&out, "adop-thresholds");
    assert_eq!(rows[0][col(&h, "d_threshold")], "1");
    assert_eq!(rows[0][col(&h, "e_threshold")], "0.5");
    assert_eq!(rows[0][col(&h, "f_threshold")], "0.5");
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let config = r#"
seed = 7
n = 2
weighting = "averaged"
method = "gram2"
[space]
family = "F"
s = 0.2
tau = 0.3
p = 1.5
q = 2.0
[weight]
kind = "power"
n = 2
d = 0.8
[window]
j_min = 0
j_max = 2
[field]
source = "random"
m = 2
fill = 0.7
"#;
    let cfg = dir.path().join("seqnorm.toml");
    fs::write(&cfg, config).unwrap();
    let outs: Vec<PathBuf> = (0..3).map(|i| dir.path().join(format!("run{i}"))).collect();
    for (i, out) in outs.iter().enumerate() {
        let threads = ["1", "4", "1"][i];
        let o = run("seqnorm", &cfg, out, &[("MWLAB_THREADS", threads)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["seqnorm.csv", "seqnorm.json"] {
        let a = fs::read(outs[0].join(name)).unwrap();
        let b = fs::read(outs[1].join(name)).unwrap();
        let c = fs::read(outs[2].join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between 1 and 4 threads");
        assert_eq!(a, c, "{name} differs between reruns");
    }
}

#[test]
fn unknown_config_key_is_named_in_the_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "n = 1\ntypo_key = 3\n[space]\nfamily = \"B\"\ns = 0.0\np = 2.0\nq = 2.0\n")
        .unwrap();
    let o = run("adop-thresholds", &cfg, &dir.path().join("out"), &[]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("typo_key"), "stderr: {err}");
}

#[test]
fn missing_required_field_is_named_in_the_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[space]\nfamily = \"B\"\ns = 0.0\np = 2.0\nq = 2.0\n").unwrap();
    let o = run("adop-thresholds", &cfg, &dir.path().join("out"), &[]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("`n`"), "stderr: {err}");
}

#[test]
fn toml_syntax_errors_report_the_location() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "p = = 2.0\n").unwrap();
    let o = run("constants", &cfg, &dir.path().join("out"), &[]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line"), "stderr: {err}");
}

#[test]
fn bad_thread_env_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "n = 1\n[space]\nfamily = \"B\"\ns = 0.0\np = 2.0\nq = 2.0\n").unwrap();
    let o = run(
        "adop-thresholds",
        &cfg,
        &dir.path().join("out"),
        &[("MWLAB_THREADS", "soon")],
    );
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("MWLAB_THREADS"), "stderr: {err}");
}

#[test]
fn numeric_failures_become_flagged_rows_not_crashes() {
    // Sampling lattice coarser than the band: every trial must fail softly.
    let dir = TempDir::new().unwrap();
    let out = run_ok(
        &dir,
        "sampling",
        r#"
n = 1
size = 64
j = 2
alpha = 2.0
band_j = 4
count = 2
"#,
    );
    let (h, rows) = read_table(&out, "sampling");
    assert_eq!(rows.len(), 2);
    for row in &rows {
        assert_eq!(row[col(&h, "max_error")], "nan");
        assert_ne!(row[col(&h, "status")], "ok");
    }
}

#[test]
fn sidecar_echoes_command_seed_version_and_config() {
    let dir = TempDir::new().unwrap();
    let out = run_ok(
        &dir,
        "constants",
        r#"
seed = 9
p = 1.5
grid_depth = 2
[weight]
kind = "identity"
n = 1
m = 1
[window]
j_min = 0
j_max = 1
"#,
    );
    let raw = fs::read_to_string(out.join("constants.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&raw).unwrap();
    assert_eq!(v["command"], "constants");
    assert_eq!(v["seed"], 9);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config"]["p"], 1.5);
    assert_eq!(v["config"]["weight"]["kind"], "identity");
}

#[test]
fn sequence_field_files_round_trip() {
    let dir = TempDir::new().unwrap();
    let window = CubeWindow::new(2, -1, 2, 2, false).unwrap();
    let field = SequenceField::random(window, 3, 0.6, 42).unwrap();
    let path = dir.path().join("field.txt");
    mwlab_cli::fieldio::write_field(&path, &field).unwrap();
    let back = mwlab_cli::fieldio::read_field(&path, window, 3).unwrap();
    assert_eq!(field.len(), back.len());
    for ((qa, va), (qb, vb)) in field.iter().zip(back.iter()) {
        assert_eq!(qa, qb);
        assert_eq!(va, vb);
    }
}

#[test]
fn grid_files_round_trip() {
    let dir = TempDir::new().unwrap();
    let modes = mwlab_cli::fieldio::random_modes(2, 2, 12.0, 5, 77);
    let f = mwlab_cli::fieldio::evaluate_modes(2, 16, &modes).unwrap();
    let path = dir.path().join("grid.csv");
    mwlab_cli::fieldio::write_grid(&path, &f).unwrap();
    let back = mwlab_cli::fieldio::read_grid(&path).unwrap();
    assert_eq!(back.n(), 2);
    assert_eq!(back.size(), 16);
    assert_eq!(back.m(), 2);
    assert_eq!(f.max_abs_diff(&back), 0.0);
}

#[test]
fn seqnorm_from_file_matches_the_library_norm() {
    let dir = TempDir::new().unwrap();
    let window = CubeWindow::new(2, 0, 2, 1, true).unwrap();
    let field = SequenceField::random(window, 2, 0.7, 11).unwrap();
    let path = dir.path().join("field.txt");
    mwlab_cli::fieldio::write_field(&path, &field).unwrap();

    let sp = SpaceParams::new(Family::B, 0.3, 0.1, 1.5, Exponent::Finite(2.0), false).unwrap();
    let want = seq_norm(&field, &sp, &Weighting::Unweighted).unwrap();

    let config = format!(
        r#"
n = 2
weighting = "unweighted"
[space]
family = "B"
s = 0.3
tau = 0.1
p = 1.5
q = 2.0
[window]
j_min = 0
j_max = 2
radius = 1
[field]
source = "file"
path = "{}"
m = 2
"#,
        path.display()
    );
    let out = run_ok(&dir, "seqnorm", &config);
    let (h, rows) = read_table(&out, "seqnorm");
    let got: f64 = rows[0][col(&h, "norm")].parse().unwrap();
    assert_eq!(got, want, "CSV norm must round-trip the library value");
}

#[test]
fn every_command_writes_csv_and_sidecar() {
    let cases: &[(&str, &str)] = &[
        (
            "constants",
            "p = 2.0\n[weight]\nkind = \"identity\"\nn = 1\nm = 1\n[window]\nj_min = 0\nj_max = 1\n",
        ),
        (
            "dimension",
            "p = 2.0\nlambda = [1.0, 2.0, 4.0]\n[weight]\nkind = \"power\"\nn = 1\nd = 0.5\n",
        ),
        (
            "reduce",
            "p = 2.0\n[weight]\nkind = \"identity\"\nn = 1\nm = 2\n[window]\nj_min = 0\nj_max = 1\n",
        ),
        (
            "rhi",
            "p = 2.0\nr = [1.1, 1.3]\n[weight]\nkind = \"power\"\nn = 1\nd = 0.5\n[window]\nj_min = 0\nj_max = 1\n",
        ),
        (
            "badset",
            "p = 2.0\nm_grid = [1.0, 2.0, 4.0]\n[cube]\nj = 0\nk = [1]\n[weight]\nkind = \"power\"\nn = 1\nd = 1.0\n",
        ),
        (
            "doubling",
            "p = 2.0\nd1 = 0.0\nd2 = 1.0\n[weight]\nkind = \"power\"\nn = 1\nd = 1.0\n[window]\nj_min = 0\nj_max = 2\n",
        ),
        (
            "seqnorm",
            "n = 1\n[space]\nfamily = \"B\"\ns = 0.1\ntau = 0.0\np = 2.0\nq = 2.0\n[weight]\nkind = \"power\"\nn = 1\nd = 0.5\n[window]\nj_min = 0\nj_max = 2\n[field]\nm = 1\n",
        ),
        (
            "equiv",
            "level = \"sequence\"\ncount = 2\n[space]\nfamily = \"B\"\ns = 0.1\ntau = 0.2\np = 2.0\nq = 2.0\n[weight]\nkind = \"power\"\nn = 1\nd = 0.5\n[window]\nj_min = 0\nj_max = 2\n",
        ),
        (
            "adop-thresholds",
            "n = 1\n[space]\nfamily = \"F\"\ns = 0.2\ntau = 0.1\np = 2.0\nq = \"inf\"\n",
        ),
        (
            "adop-probe",
            "n = 1\nd2 = 0.0\nmargin = 0.1\n[space]\nfamily = \"B\"\ns = 0.0\ntau = 0.0\np = 2.0\nq = 2.0\n[weight]\nkind = \"identity\"\nn = 1\nm = 1\n[probe]\nhome_j_min = -1\nhome_j_max = 2\nradius = 1\nhomogeneous = true\nschedule_j_max = [5, 6]\ncount = 2\n",
        ),
        (
            "adop-sharpness",
            "n = 1\nd2 = 0.0\nk_max = 4096\n[kernel]\nd = 1.5\ne = 10.0\nf = 10.0\n[space]\nfamily = \"B\"\ns = 0.0\ntau = 0.0\np = 2.0\nq = 2.0\n",
        ),
        ("calderon", "n = 1\nsize = 64\ncount = 2\n"),
        ("sampling", "n = 1\nsize = 64\nj = 2\ncount = 1\n"),
        (
            "generic-sampling",
            "n = 1\nsize = 64\nj = 2\ndepths = [2, 3]\npoints = \"corners\"\n",
        ),
    ];
    let dir = TempDir::new().unwrap();
    for (cmd, config) in cases {
        let out = run_ok(&dir, cmd, config);
        let (headers, rows) = read_table(&out, cmd);
        assert!(!headers.is_empty() && !rows.is_empty(), "{cmd} table empty");
        assert_eq!(*headers.last().unwrap(), "status", "{cmd} status column");
        let raw = fs::read_to_string(out.join(format!("{cmd}.json"))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&raw).unwrap();
        assert_eq!(v["command"], *cmd, "{cmd} sidecar");
    }
}
