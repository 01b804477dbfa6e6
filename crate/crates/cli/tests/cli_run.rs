use akq_cli::report::{RunReport, REPORT_SCHEMA};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SPHERE_CONFIG: &str = r#"
[run]
output = "out"
cache = "cache"
threads = 3
seed = 11

[solver]
tol = 1e-10

[[backend]]
name = "s2"
kind = "sphere"
resolution = 8

[[suite]]
backend = "s2"
kind = "bergman"
k = { from = 1, to = 5 }

[[suite]]
backend = "s2"
kind = "drift"
k = [2, 3, 4, 5, 6]

[[suite]]
name = "sphere_gap"
backend = "s2"
kind = "gap"
k = [2, 3, 4, 5, 6]

[[suite]]
backend = "s2"
kind = "deformation"
scheme = "spinc"
f = "X"
g = "Y"
k = [6, 8, 10, 12, 14]
slope_tolerance = 0.5
"#;

fn akq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_akq")).args(args).env_remove("AKQ_CACHE_DIR").output().unwrap()
}

fn write_config(dir: &Path, src: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, src).unwrap();
    path.to_string_lossy().into_owned()
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn validate(report: &Path) {
    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&doc).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

#[test]
fn sphere_run_passes_and_reruns_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SPHERE_CONFIG);
    let first = akq(&["run", &cfg]);
    let stdout = String::from_utf8_lossy(&first.stdout);
    assert!(first.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&first.stderr));
    let out = dir.path().join("out");
    let r1 = RunReport::read(&out).unwrap();
    assert!(r1.passed && r1.consistent());
    assert_eq!(r1.suites.len(), 4);
    assert!(r1.cache.stored > 0 && r1.cache.hits == 0);
    validate(&out.join("report.json"));
    let csv1 = csvs(&out);
    assert_eq!(csv1.len(), 4);
    assert!(csv1.iter().all(|(_, b)| b.starts_with(b"claim_id,k,value,slope,residual,pass\n")));

    let second = akq(&["run", &cfg]);
    assert!(second.status.success());
    let r2 = RunReport::read(&out).unwrap();
    assert_eq!(r2.cache.misses, 0, "{:?}", r2.cache);
    assert_eq!(r2.cache.stored, 0);
    assert!(r2.timing.previous_wall_seconds.is_some() && r2.timing.speedup.is_some());
    assert_eq!(csvs(&out), csv1, "reruns from the same cache must give byte-identical CSV");

    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.lines().last().unwrap().starts_with("PASS: 4 of 4"), "{summary}");
    let rep = akq(&["report", &out.to_string_lossy()]);
    assert!(rep.status.success());
    assert_eq!(String::from_utf8_lossy(&rep.stdout), summary);

    let inspect = akq(&["inspect-cache", &dir.path().join("cache").to_string_lossy()]);
    assert!(inspect.status.success());
    let listing = String::from_utf8_lossy(&inspect.stdout);
    assert!(listing.contains("sphere2:res=8:standard") && listing.contains("dirac_squared_even"), "{listing}");
}

#[test]
fn corrupt_cache_entry_is_quarantined_and_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let src = SPHERE_CONFIG.split("[[suite]]").take(2).collect::<Vec<_>>().join("[[suite]]");
    let cfg = write_config(dir.path(), &src);
    assert!(akq(&["run", &cfg]).status.success());
    let out = dir.path().join("out");
    let before = csvs(&out);
    let cache = dir.path().join("cache");
    let victim = fs::read_dir(&cache).unwrap().map(|e| e.unwrap().path()).find(|p| p.is_file()).unwrap();
    let mut bytes = fs::read(&victim).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x55;
    fs::write(&victim, bytes).unwrap();

    let bad = akq(&["inspect-cache", &cache.to_string_lossy()]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stdout).contains("checksum"));

    assert!(akq(&["run", &cfg]).status.success());
    let r = RunReport::read(&out).unwrap();
    assert_eq!(r.cache.quarantined, 1);
    assert_eq!(r.cache.stored, 1);
    assert_eq!(r.cache_notes.len(), 1);
    assert!(cache.join("quarantine").read_dir().unwrap().count() == 1);
    assert_eq!(csvs(&out), before);
}

#[test]
fn empty_suite_list_is_a_passing_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let src = SPHERE_CONFIG.split("[[suite]]").next().unwrap();
    let out = akq(&["run", &write_config(dir.path(), src)]);
    assert!(out.status.success());
    let r = RunReport::read(&dir.path().join("out")).unwrap();
    assert!(r.suites.is_empty() && r.passed);
    validate(&dir.path().join("out/report.json"));
}

#[test]
fn schema_errors_name_the_line_and_stop_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SPHERE_CONFIG.replace("seed = 11", "seed = 11\nspeed = 3"));
    let out = akq(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("speed") && err.contains("line"), "{err}");
    assert!(!dir.path().join("out").exists());

    let coarse = SPHERE_CONFIG.replace("kind = \"sphere\"\nresolution = 8", "kind = \"torus4\"\nresolution = 4");
    let out = akq(&["run", &write_config(dir.path(), &coarse)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("resolution"));
    assert!(!dir.path().join("cache").exists());
}

#[test]
fn unwritable_output_fails_preflight() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("blocker"), b"").unwrap();
    let src = SPHERE_CONFIG.replace("output = \"out\"", "output = \"blocker/out\"");
    let out = akq(&["run", &write_config(dir.path(), &src)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not writable"));
    assert!(!dir.path().join("cache").exists());
}

#[test]
fn failing_suite_gives_nonzero_exit_and_failing_rows() {
    // two k values are too few for the drift fit: the suite fails, the run
    // still writes its reports
    let dir = tempfile::tempdir().unwrap();
    let src = SPHERE_CONFIG.split("[[suite]]").next().unwrap().to_string()
        + "[[suite]]\nbackend = \"s2\"\nkind = \"drift\"\nk = [1, 2]\n";
    let out = akq(&["run", &write_config(dir.path(), &src)]);
    assert_eq!(out.status.code(), Some(1));
    let r = RunReport::read(&dir.path().join("out")).unwrap();
    assert!(!r.passed && r.consistent());
    assert!(r.suites[0].rows.iter().any(|row| !row.pass && row.claim_id == "drift_slope"));
    let rep = akq(&["report", &dir.path().join("out").to_string_lossy()]);
    assert_eq!(rep.status.code(), Some(1));
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|x| x == "toml") {
            akq_cli::RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}
