use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn hdblind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdblind"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = hdblind(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn header_and_body(text: &str) -> (Vec<&str>, Vec<&str>) {
    text.lines().partition(|l| l.starts_with('#'))
}

fn rows(text: &str) -> Vec<Vec<String>> {
    let (_, body) = header_and_body(text);
    body[1..]
        .iter()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(text: &str, name: &str) -> Vec<f64> {
    let (_, body) = header_and_body(text);
    let idx = body[0]
        .split(',')
        .position(|c| c == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    rows(text).iter().map(|r| r[idx].parse().unwrap()).collect()
}

fn header_value<'a>(text: &'a str, key: &str) -> &'a str {
    let prefix = format!("# {key}: ");
    text.lines()
        .find_map(|l| l.strip_prefix(prefix.as_str()))
        .unwrap_or_else(|| panic!("no header {key}"))
}

#[test]
fn unknown_key_is_a_configuration_error() {
    let dir = TempDir::new().unwrap();
    let out = hdblind(&[
        "fig3",
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "detector.etaa=0.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown configuration key 'detector.etaa'"));
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn invalid_values_and_presets_are_configuration_errors() {
    for args in [
        vec!["fig3", "--preset", "fig9"],
        vec!["run", "--set", "detector.eta=1.5"],
        vec!["run", "--set", "attack.gain=1.0"],
        vec!["run", "--format", "png"],
        vec!["fig3", "--no-such-flag"],
    ] {
        assert_eq!(hdblind(&args).status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("plain-file");
    fs::write(&file, "x").unwrap();
    let target = file.join("sub");
    let out = hdblind(&["fig3", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fig3_columns_and_reference_rows() {
    let dir = TempDir::new().unwrap();
    ok(&["fig3", "--out", dir.path().to_str().unwrap()]);
    let text = read(dir.path(), "fig3.csv");
    let (header, body) = header_and_body(&text);
    assert!(header[0].starts_with("# hdblind "));
    assert_eq!(header_value(&text, "config_sha256").len(), 64);
    assert_eq!(header_value(&text, "seed"), "1");
    assert!(header.contains(&"# config: detector.eta = 0.6"));
    assert_eq!(body[0], "r,n0_ext,vf_ext_f1,vf_ext_f2,xi_ir,xi_tech");

    let first = &rows(&text)[0];
    assert_eq!(first[..4], ["0.0", "0.0", "0.0", "0.0"]);
    assert!(column(&text, "xi_ir").iter().all(|v| *v == 2.0));
    assert!(column(&text, "xi_tech").iter().all(|v| *v == 0.1));
    let shot = column(&text, "n0_ext");
    let f2 = column(&text, "vf_ext_f2");
    assert!(f2.last().unwrap() > shot.last().unwrap());
    assert!(read(dir.path(), "fig3.svg").contains("config_sha256"));
}

#[test]
fn reruns_give_identical_files() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [&a, &b] {
        ok(&[
            "run",
            "--dump",
            "--n",
            "3000",
            "--seed",
            "11",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
    }
    for name in ["batch.csv", "run.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let batch = read(a.path(), "batch.csv");
    assert_eq!(
        header_and_body(&batch).1[0],
        "pulse_index,x_a,x_b,clipped_hi,clipped_lo"
    );
    assert_eq!(rows(&batch).len(), 3000);
    assert!(batch.lines().all(|l| !l.ends_with('\r')));
}

#[test]
fn header_hash_tracks_the_configuration() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    ok(&["fig3", "--out", a.path().to_str().unwrap()]);
    ok(&[
        "fig3",
        "--out",
        b.path().to_str().unwrap(),
        "--set",
        "attack.t_ext=0.48",
    ]);
    let (ta, tb) = (read(a.path(), "fig3.csv"), read(b.path(), "fig3.csv"));
    assert_ne!(header_value(&ta, "config_sha256"), header_value(&tb, "config_sha256"));
    assert_ne!(header_and_body(&ta).1, header_and_body(&tb).1);
}

#[test]
fn config_file_then_set_then_flags() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("run.toml");
    fs::write(
        &file,
        "[sim]\nseed = 5\nn = 2000\n\n[detector]\neta = 0.55\nv_ele = 0.02\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(&[
        "run",
        "--config",
        file.to_str().unwrap(),
        "--set",
        "detector.v_ele=0.03",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    let doc: Value = serde_json::from_str(&read(&out, "run.json")).unwrap();
    let cfg = &doc["meta"]["config"];
    assert_eq!(doc["meta"]["seed"], 7);
    assert_eq!(cfg["sim.n"], 2000);
    assert_eq!(cfg["detector.eta"], 0.55);
    assert_eq!(cfg["detector.v_ele"], 0.03);

    fs::write(&file, "[detector]\nspeed = 1.0\n").unwrap();
    assert_eq!(
        hdblind(&["run", "--config", file.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn format_selection() {
    let dir = TempDir::new().unwrap();
    ok(&["fig3", "--format", "csv", "--out", dir.path().to_str().unwrap()]);
    let names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names, ["fig3.csv"]);
}

#[test]
fn fig2_mean_pins_at_daq_limit() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "fig2",
        "--set",
        "fig2.n_per_point=4000",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let text = read(dir.path(), "fig2.csv");
    assert_eq!(header_and_body(&text).1[0], "power_uW,mean_V,var_V2,setting");
    let all = rows(&text);
    for setting in ["setting1", "setting2"] {
        let pts: Vec<(f64, f64)> = all
            .iter()
            .filter(|r| r[3] == setting)
            .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
            .collect();
        assert_eq!(pts.len(), 101);
        assert_eq!(pts[0].0, 0.0);
        assert!(pts[0].1.abs() < 1e-3);
        assert_eq!(pts.last().unwrap().1, 0.5);
    }
    let first_pinned = |setting: &str| {
        all.iter()
            .find(|r| r[3] == setting && r[1] == "0.5")
            .map(|r| r[0].parse::<f64>().unwrap())
            .unwrap()
    };
    assert!(first_pinned("setting1") < first_pinned("setting2"));
}

#[test]
fn fig4_reports_breach_only_for_the_breach_preset() {
    let dir = TempDir::new().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&[
        "fig4",
        "--preset",
        "fig4b",
        "--n",
        "300000",
        "--set",
        "fig4.scatter_points=500",
        "--out",
        d,
    ]);
    ok(&[
        "fig4",
        "--preset",
        "fig4a-r0.10",
        "--n",
        "300000",
        "--set",
        "fig4.scatter_points=500",
        "--out",
        d,
    ]);
    let b: Value = serde_json::from_str(&read(dir.path(), "fig4_fig4b.json")).unwrap();
    let a: Value = serde_json::from_str(&read(dir.path(), "fig4_fig4a-r0.10.json")).unwrap();
    assert_eq!(b["breach"], true);
    assert_eq!(a["breach"], false);
    assert!(a["clipped"]["xi_hat"].as_f64().unwrap() > 1.5);
    for key in ["t_hat", "xi_hat", "v_a_hat", "clipped_fraction", "n"] {
        assert!(
            b["linear"].get(key).is_some() && b["clipped"].get(key).is_some(),
            "{key}"
        );
    }
    let linear_gap = a["linear"]["xi_hat"].as_f64().unwrap() - a["xi_expected_linear"].as_f64().unwrap();
    assert!(linear_gap.abs() < 0.1, "{linear_gap}");

    let scatter = read(dir.path(), "fig4_fig4b_scatter.csv");
    assert_eq!(header_and_body(&scatter).1[0], "pulse_index,x_a,x_bi,x_b");
    assert_eq!(rows(&scatter).len(), 500);
    assert!(column(&scatter, "x_b").iter().all(|x| x.abs() <= 20.0));
    assert!(column(&scatter, "x_bi").iter().any(|x| *x > 20.0));
}

#[test]
fn fig5_small_sweep() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "fig5",
        "--n",
        "50000",
        "--set",
        "fig5.l_max_km=20",
        "--format",
        "csv",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let text = read(dir.path(), "fig5.csv");
    assert_eq!(header_and_body(&text).1[0], "L_km,r,t_hat");
    let r = column(&text, "r");
    assert_eq!(r.len(), 15);
    assert!(r.windows(2).all(|w| w[0] <= w[1]));
    let linear = read(dir.path(), "fig5_linear.csv");
    let t = column(&linear, "t_hat_i");
    assert_eq!(t.len(), 3);
    assert!((t[0] - 1.0).abs() < 0.05);
}

#[test]
fn fig6_reports_breach_points() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "fig6",
        "--n",
        "50000",
        "--set",
        "fig6.lengths_km=[25]",
        "--set",
        "fig6.fine_step=0.002",
        "--format",
        "csv",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let coarse = read(dir.path(), "fig6_coarse.csv");
    assert_eq!(header_and_body(&coarse).1[0], "r,L_km,xi_hat_r,xi_null");
    assert_eq!(rows(&coarse).len(), 15);
    assert_eq!(rows(&read(dir.path(), "fig6_fine.csv")).len(), 4);
    let breach = rows(&read(dir.path(), "fig6_breach.csv"));
    assert_eq!(breach.len(), 1);
    let r_star: f64 = breach[0][1].parse().unwrap();
    assert!((0.12..=0.132).contains(&r_star), "{r_star}");
}

#[test]
fn guard_writes_roc_and_verdicts() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "guard",
        "--set",
        "guard.blocks=4",
        "--set",
        "guard.block_size=20000",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let roc = read(dir.path(), "roc.csv");
    assert_eq!(
        header_and_body(&roc).1[0],
        "s_hi,s_lo,max_fraction,false_alarm,detection,n_blocks,block_size"
    );
    assert_eq!(rows(&roc).len(), 12);
    let verdicts = rows(&read(dir.path(), "verdicts.csv"));
    assert_eq!(verdicts.len(), 8);
    assert!(verdicts.iter().filter(|r| r[0] == "honest").all(|r| r[3] == "true"));
    assert!(verdicts.iter().filter(|r| r[0] == "attack").all(|r| r[3] == "false"));

    let bad = hdblind(&["guard", "--set", "guard.s_hi=25", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
}
