use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic")
}

fn ebmss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebmss"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fit_into(manifest: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec!["fit", "--manifest", s(manifest), "--years", "1955:2020", "--out", s(out)];
    args.extend_from_slice(extra);
    ok(&ebmss(&args));
}

/// (estimate, std_error) of one row of estimates.csv.
fn estimate(dir: &Path, name: &str) -> (f64, Option<f64>) {
    let text = fs::read_to_string(dir.join("estimates.csv")).unwrap();
    let row = text
        .lines()
        .find(|l| l.split(',').next() == Some(name))
        .unwrap_or_else(|| panic!("no row {name}"));
    let cells: Vec<&str> = row.split(',').collect();
    (cells[1].parse().unwrap(), cells[2].parse().ok())
}

fn key_paths(v: &serde_json::Value, prefix: &str, out: &mut BTreeSet<String>) {
    match v {
        serde_json::Value::Object(m) => {
            for (k, child) in m {
                let p = format!("{prefix}/{k}");
                out.insert(p.clone());
                key_paths(child, &p, out);
            }
        }
        serde_json::Value::Array(items) => {
            for item in items {
                key_paths(item, &format!("{prefix}[]"), out);
            }
        }
        _ => {}
    }
}

fn schema(path: &Path) -> BTreeSet<String> {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let mut keys = BTreeSet::new();
    key_paths(&v, "", &mut keys);
    keys
}

#[test]
fn fitted_feedback_covers_the_generating_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit");
    fit_into(&fixtures().join("manifest.toml"), &out, &[]);
    let (lambda, se) = estimate(&out, "lambda");
    let se = se.expect("standard error reported");
    assert!((lambda - 1.0828).abs() <= 3.0 * se, "lambda {lambda} se {se}");
    for f in ["estimates.csv", "residuals.csv", "fit.json", "report.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn single_product_report_has_the_full_schema() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full");
    let base = dir.path().join("base");
    fit_into(&fixtures().join("manifest.toml"), &full, &["--no-se", "--restarts", "0"]);
    fit_into(&fixtures().join("manifest_base.toml"), &base, &["--no-se", "--restarts", "0"]);
    assert_eq!(schema(&full.join("report.json")), schema(&base.join("report.json")));
    let header = |d: &Path| fs::read_to_string(d.join("estimates.csv")).unwrap().lines().next().unwrap().to_owned();
    assert_eq!(header(&full), header(&base));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(base.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["n_gmst"], 1);
    assert_eq!(report["n_ocean_pairs"], 1);
}

#[test]
fn corrupt_manifest_fails_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.toml");
    fs::write(&manifest, "[[series]\nlabel = \"gmst\"\n").unwrap();
    let out = dir.path().join("out");
    for cmd in ["sync", "fit", "diagnose"] {
        let mut args = vec![cmd, "--manifest", s(&manifest), "--out", s(&out)];
        if cmd != "sync" {
            args.extend(["--years", "1955:2020"]);
        }
        let r = ebmss(&args);
        assert_eq!(r.status.code(), Some(2), "{cmd}");
        assert!(!out.exists(), "{cmd} left output behind");
    }
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn missing_delta_names_the_series() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("g.csv"), "year,value\n2000,0.1\n").unwrap();
    let manifest = dir.path().join("m.toml");
    fs::write(
        &manifest,
        "[[series]]\nlabel = \"product_x\"\nkind = \"gmst\"\nfile = \"g.csv\"\nsync = { mode = \"preindustrial\", mean_1986_2005 = 0.4 }\n",
    )
    .unwrap();
    let r = ebmss(&["sync", "--manifest", s(&manifest), "--out", s(&dir.path().join("o"))]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("product_x") && err.contains("delta_preind"), "{err}");
}

#[test]
fn sync_shifts_each_product_by_its_offset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sync");
    ok(&ebmss(&["sync", "--manifest", s(&fixtures().join("manifest.toml")), "--out", s(&out)]));
    let offsets = fs::read_to_string(out.join("offsets.csv")).unwrap();
    let row = offsets.lines().find(|l| l.starts_with("gmst_1,")).unwrap();
    assert_eq!(row, "gmst_1,gmst,preindustrial,-0.230,false");
    assert!(offsets.lines().any(|l| l == "gmst_7,gmst,synchronized,,true"));

    let read = |p: PathBuf| -> Vec<(i32, Option<f64>)> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let (y, v) = l.split_once(',').unwrap();
                (y.parse().unwrap(), v.parse().ok())
            })
            .collect()
    };
    let raw = read(fixtures().join("series/gmst_1.csv"));
    let synced = read(out.join("synchronized/gmst_1.csv"));
    assert_eq!(raw.len(), synced.len());
    for ((y0, a), (y1, b)) in raw.iter().zip(&synced) {
        assert_eq!(y0, y1);
        assert!((a.unwrap() - b.unwrap() - (0.42 - 0.65)).abs() < 1e-5);
    }
    let panel = fs::read_to_string(out.join("panel.csv")).unwrap();
    assert_eq!(panel.lines().next(), Some("label,kind,pair_id,year,value"));
    assert!(panel.lines().any(|l| l.starts_with("ocean_temp_1,ocean_temp,")));
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixtures().join("manifest.toml");
    let scenarios: Vec<String> = ["pathway_2p6", "pathway_8p5"]
        .iter()
        .map(|n| fixtures().join(format!("scenarios/{n}.csv")).to_string_lossy().into_owned())
        .collect();
    let mut runs = Vec::new();
    for (i, workers) in ["1", "2"].iter().enumerate() {
        let fit = dir.path().join(format!("fit{i}"));
        fit_into(&manifest, &fit, &["--restarts", "1"]);
        let proj = dir.path().join(format!("proj{i}"));
        let fit_file = fit.join("fit.json");
        ok(&ebmss(&[
            "--workers", workers, "project", "--manifest", s(&manifest), "--years", "1955:2020", "--seed", "11",
            "--draws", "300", "--fit-file", s(&fit_file), "--scenario", &scenarios[0], "--scenario",
            &scenarios[1], "--out", s(&proj),
        ]));
        runs.push((tree(&fit), tree(&proj)));
    }
    assert_eq!(runs[0].0, runs[1].0);
    assert_eq!(runs[0].1, runs[1].1);
    let names: Vec<_> = runs[0].1.iter().map(|(p, _)| p.to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["fans/pathway_2p6.csv", "fans/pathway_8p5.csv", "report.json"]);
}

#[test]
fn usage_errors_exit_with_input_code() {
    let dir = tempfile::tempdir().unwrap();
    let forcing = fixtures().join("forcing.csv");
    // Seed is mandatory.
    let r = ebmss(&["simulate", "--forcing", s(&forcing), "--out", s(&dir.path().join("x"))]);
    assert_eq!(r.status.code(), Some(2));
    let r = ebmss(&["fit", "--manifest", "m.toml", "--years", "2020:1955", "--out", "x"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn scenario_must_start_after_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("late.csv");
    fs::write(&scenario, "year,forcing\n2030,3.0\n2031,3.1\n").unwrap();
    let out = dir.path().join("p");
    let r = ebmss(&[
        "project", "--manifest", s(&fixtures().join("manifest.toml")), "--years", "1955:2020", "--seed", "1",
        "--draws", "10", "--restarts", "0", "--scenario", s(&scenario), "--out", s(&out),
    ]);
    assert_eq!(r.status.code(), Some(2), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(!out.exists());
}

#[test]
fn diagnose_covers_panel_and_forcing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("adf");
    ok(&ebmss(&[
        "diagnose", "--manifest", s(&fixtures().join("manifest.toml")), "--years", "1955:2020", "--max-lag", "8",
        "--out", s(&out),
    ]));
    let table = fs::read_to_string(out.join("adf.csv")).unwrap();
    for label in ["gmst_1", "ohc_2", "forcing_natural", "forcing_anthropogenic"] {
        let rows = table.lines().filter(|l| l.starts_with(&format!("{label},"))).count();
        assert_eq!(rows, 4, "{label}");
    }
}
