use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mourre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mourre")).args(args).output().expect("binary runs")
}

fn run_config(dir: &Path, name: &str, text: &str, extra: &[&str]) -> (Output, std::path::PathBuf) {
    let cfg = dir.join(format!("{name}.toml"));
    fs::write(&cfg, text).unwrap();
    let out = dir.join(name);
    let mut args = vec!["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (mourre(&args), out)
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn list_shows_six_kinds() {
    let o = mourre(&["list"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for k in ["mourre-scan", "lap-scan", "virial-scan", "correlation-decay", "regularity-scan", "identity-suite"] {
        assert!(text.contains(k), "{k} missing");
    }
    assert!(text.contains("range"));
    let o = mourre(&["list", "--json"]);
    let cat: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let entries = cat.as_array().unwrap();
    assert_eq!(entries.len(), 6);
    assert!(entries.iter().all(|e| e["params"].as_array().unwrap().iter().all(|p| p["range"].is_string())));
}

#[test]
fn identity_suite_defaults_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, out) = run_config(tmp.path(), "ids", "kind = \"identity-suite\"\n", &["--threads", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["passed"], true);
    let band = r["checks"].as_array().unwrap().iter().find(|c| c["name"] == "max band identity deviation").unwrap();
    assert!(band["value"].as_f64().unwrap() <= 1e-12);
    assert_eq!(band["threshold"].as_f64().unwrap(), 1e-12);
    let csv = fs::read_to_string(out.join("band_identities.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("deviation (dimensionless)"));
}

const KOOPMAN: &str = "kind = \"correlation-decay\"\n[model]\ntype = \"koopman\"\nl = 1000\nn_max = 1\n[numeric]\ns = 2.0\nm_range = [20, 200]\n";

#[test]
fn koopman_correlation_matches_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, out) = run_config(tmp.path(), "kc", KOOPMAN, &[]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("correlation.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(|s| s.to_string()).collect();
    assert_eq!(header[0], "m (steps)");
    assert!(header[1].starts_with("c_m") && header[2].starts_with("oracle") && header[3].starts_with("ratio"));
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert!(rec[1].contains('e'));
        let ratio: f64 = rec[3].parse().unwrap();
        assert!((ratio - 1.0).abs() < 1e-12);
    }
    let e = report(&out)["results"]["fit"]["exponent"].as_f64().unwrap();
    assert!((e - 2.0).abs() <= 0.05);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "kind = \"regularity-scan\"\nseed = 5\n[model]\ntype = \"random\"\ndim = 20\n[numeric]\nk = 1\n";
    let (a, out_a) = run_config(tmp.path(), "a", text, &[]);
    let (b, out_b) = run_config(tmp.path(), "b", text, &[]);
    assert_eq!(a.status.code(), b.status.code());
    assert_eq!(fs::read(out_a.join("q_decay.csv")).unwrap(), fs::read(out_b.join("q_decay.csv")).unwrap());
    let (ra, rb) = (report(&out_a), report(&out_b));
    assert_eq!(ra["results"], rb["results"]);
    assert_eq!(ra["checks"], rb["checks"]);
    let (c, out_c) = run_config(tmp.path(), "c", text, &["--seed", "6"]);
    assert!(c.status.code().is_some());
    let rc = report(&out_c);
    assert_eq!(rc["config"]["seed"], 6);
    assert_ne!(rc["results"], ra["results"]);
}

#[test]
fn malformed_config_leaves_no_output() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("syntax", "kind = \"identity-suite\"\n[numeric\n"),
        ("unknown", "kind = \"identity-suite\"\nfoo = 1\n"),
        ("kind", "kind = \"nope\"\n"),
        ("range", "kind = \"identity-suite\"\n[numeric]\ns = -2.0\n"),
        ("model", "kind = \"virial-scan\"\n"),
    ] {
        let (o, out) = run_config(tmp.path(), name, text, &[]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{name} wrote output");
    }
    let o = mourre(&["run", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_names_the_operation() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "kind = \"virial-scan\"\n[model]\ntype = \"koopman\"\nl = 50\nn_max = 3\ncap = 10\n";
    let (o, out) = run_config(tmp.path(), "big", text, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("koopman_build"));
    assert!(!out.exists());
}

#[test]
fn failed_check_exits_one_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "kind = \"identity-suite\"\n[numeric]\nsequences = 2\n[numeric.tolerances]\nidentity = 0.0\n";
    let (o, out) = run_config(tmp.path(), "strict", text, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(report(&out)["passed"], false);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let text = fs::read_to_string(entry.unwrap().path()).unwrap();
        let v: toml::Value = toml::from_str(&text).unwrap();
        assert!(v.get("kind").is_some());
        n += 1;
    }
    assert!(n >= 6);
}
