use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_deficiency"))
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_tmp(name: &str, body: &str) -> PathBuf {
    let p = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("json report")
}

#[test]
fn golden_reports_are_byte_identical() {
    for name in ["single_point", "five_point_mixed", "lattice_z2"] {
        let cfg = golden(&format!("{name}.toml"));
        let out = run(&["defect", "--config", cfg.to_str().unwrap(), "--omit-timing"]);
        let expected = std::fs::read_to_string(golden(&format!("{name}.json"))).unwrap();
        assert_eq!(String::from_utf8(out.stdout).unwrap(), expected, "{name}");
    }
}

#[test]
fn repeated_runs_agree_apart_from_timing() {
    let cfg = golden("five_point_mixed.toml");
    let strip = |o: Output| {
        let mut v = json(&o);
        v.as_object_mut().unwrap().remove("timing");
        v
    };
    let a = strip(run(&["defect", "--config", cfg.to_str().unwrap()]));
    let b = strip(run(&["defect", "--config", cfg.to_str().unwrap(), "--threads", "1"]));
    assert_eq!(a, b);
}

#[test]
fn certify_five_dimensional_lattice() {
    let cfg = write_tmp(
        "lattice5.toml",
        r#"
version = 1
dimension = 5
[[lattice]]
basis = [[1, 0, 0, 0, 0], [0, 1, 0, 0, 0]]
region = "infinite"
potential = { kind = "inverse_square_point", coupling = 0, cutoff = 0.25 }
"#,
    );
    let out = run(&["certify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["result"]["verdict"], "essentially_self_adjoint");
}

#[test]
fn defect_of_two_points() {
    let cfg = write_tmp(
        "two.toml",
        r#"
version = 1
dimension = 3
[[singularity]]
position = [0, 0, 0]
potential = { kind = "inverse_square_point", coupling = 0, cutoff = 1 }
[[singularity]]
position = [5, 0, 0]
potential = { kind = "inverse_square_point", coupling = -3, cutoff = 1 }
"#,
    );
    let out = run(&["defect", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["result"]["verdict"]["defect"], 5);
    assert_eq!(v["result"]["total"]["n_plus"]["finite"], 5);
}

#[test]
fn overlapping_supports_are_rejected() {
    let cfg = write_tmp(
        "overlap.toml",
        r#"
version = 1
dimension = 3
[[singularity]]
position = [0, 0, 0]
potential = { kind = "inverse_square_point", coupling = 0, cutoff = 1 }
[[singularity]]
position = [2, 0, 0]
potential = { kind = "inverse_square_point", coupling = 0, cutoff = 1 }
"#,
    );
    let out = run(&["certify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("not separated"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_keys_and_usage_errors() {
    let cfg = write_tmp("typo.toml", "version = 1\ndimension = 3\ncoupling = 1\n");
    assert_eq!(run(&["defect", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["defect"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["classify"]).status.code(), Some(2));
}

#[test]
fn lmax_below_first_limit_point_channel() {
    let cfg = golden("five_point_mixed.toml");
    let c = cfg.to_str().unwrap();
    assert_eq!(run(&["defect", "--config", c, "--lmax", "1"]).status.code(), Some(2));
    let out = run(&["defect", "--config", c, "--lmax", "4"]);
    assert_eq!(out.status.code(), Some(1));
    let oracle = &json(&out)["result"]["pieces"][0]["evidence"]["oracle"];
    assert_eq!(oracle.as_array().unwrap().len(), 5);
}

#[test]
fn classify_exit_codes() {
    assert_eq!(run(&["classify", "--q", "2"]).status.code(), Some(0));
    assert_eq!(run(&["classify", "--q", "-1"]).status.code(), Some(1));
    assert_eq!(run(&["classify", "--q", "0.75"]).status.code(), Some(3));
    // n = 4, c = 0, ℓ = 0 sits exactly on q = 3/4
    let out = run(&["classify", "--dimension", "4", "--coupling", "0", "--z", "minus"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["result"]["q_eff"], 0.75);
    assert_eq!(json(&out)["result"]["closed_form"]["class"], "limit_point");
    let out = run(&["classify", "--dimension", "4", "--coupling", "0", "--ell", "1"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn wide_band_makes_near_threshold_indeterminate() {
    let out = run(&["classify", "--q", "0.8", "--tolerance-band", "0.2"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bounds_subcommand() {
    let out = run(&["bounds", "--dimension", "3", "--gamma", "0.2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["hardy"]["bound"]["a"], 0.8);
    assert_eq!(v["result"]["hardy"]["pass"], true);
    assert_eq!(run(&["bounds", "--dimension", "3", "--gamma", "0.25"]).status.code(), Some(2));
    let out = run(&["bounds", "--local-a", "0.5", "--kind", "operator", "--d", "2", "--e", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["result"]["global"]["b"], 1.5);
    let out = run(&["bounds", "--local-a", "0.4", "--e-tilde", "2", "--epsilon", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["partition"]["d"], 2.0);
    assert_eq!(v["result"]["partition"]["e"], 4.0);
}

#[test]
fn partition_subcommand_exports_a_grid() {
    let export = Path::new(env!("CARGO_TARGET_TMPDIR")).join("phi.grid");
    let cfg = golden("single_point.toml");
    let out = run(&[
        "partition",
        "--config",
        cfg.to_str().unwrap(),
        "--resolution",
        "24",
        "--export",
        export.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["result"]["pass"], true);
    let t = deficiency::grid_table::GridTable::parse(&std::fs::read_to_string(export).unwrap()).unwrap();
    assert_eq!(t.shape, vec![24, 24, 24]);
}

#[test]
fn support_check_subcommand() {
    let f = "# grid-table v1\ndim 1\nshape 6\norigin 0\nspacing 1\ncolumns value mask\n1 1\n0 1\n0 1\n0 1\nnan 0\n2 1\n";
    let g = "# grid-table v1\ndim 1\nshape 6\norigin 0\nspacing 1\ncolumns value mask\n0 1\n0 1\n3 1\n0 1\nnan 0\n0 1\n";
    let pf = write_tmp("f.grid", f);
    let pg = write_tmp("g.grid", g);
    let out = run(&[
        "support-check",
        "--f",
        pf.to_str().unwrap(),
        "--g",
        pg.to_str().unwrap(),
        "--format",
        "text",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("spt-aaa"), "{text}");
    let bad = write_tmp("bad.grid", "# grid-table v1\ndim 1\nshape 3\n");
    let out = run(&["support-check", "--f", bad.to_str().unwrap(), "--g", pg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
