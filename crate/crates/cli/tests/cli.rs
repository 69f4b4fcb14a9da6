use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn privknap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privknap"))
        .args(args)
        .env_remove("PRIVKNAP_OUTPUT_DIR")
        .env_remove("PRIVKNAP_THREADS")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(Result::unwrap).collect()
}

const SCENARIO: &str = r#"
name = "contention"
schedulers = [{ kind = "dpf" }, { kind = "dpk" }, { kind = "optimal" }]
[workload]
kind = "scenario"
name = "multi_block_contention"
"#;

const MICRO: &str = r#"
name = "micro"
seeds = [0, 1]
schedulers = [{ kind = "dpk" }, { kind = "dpf" }]
[workload]
kind = "microbenchmark"
task_count = 60
mu_blocks = 3
sigma_blocks = 1.0
[blocks]
count = 6
"#;

#[test]
fn scenario_run_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", SCENARIO);
    let out = tmp.path().join("out");
    let o = privknap(&["run", &cfg, "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["results.csv", "runtime.csv", "steps.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let allocated: Vec<(String, String)> = rows(&out.join("results.csv"))
        .iter()
        .map(|r| (r[0].to_string(), r[5].to_string()))
        .collect();
    assert_eq!(
        allocated,
        [("dpf", "1"), ("dpk", "3"), ("optimal", "3")].map(|(a, b)| (a.to_string(), b.to_string()))
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["errored"], 0);
    assert_eq!(summary["config_sha256"].as_str().unwrap().len(), 64);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("dpk"));
}

#[test]
fn empty_workload_succeeds_with_nothing_allocated() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        &MICRO.replace("task_count = 60", "task_count = 0"),
    );
    let out = tmp.path().join("out");
    let o = privknap(&["run", &cfg, "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rs = rows(&out.join("results.csv"));
    assert_eq!(rs.len(), 4);
    for r in rs {
        assert_eq!(&r[3], "ok");
        assert_eq!(&r[4], "0");
        assert_eq!(&r[5], "0");
    }
}

#[test]
fn invalid_config_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &MICRO.replace("mu_blocks = 3", "mu_blocks = 30"));
    let o = privknap(&["validate", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("workload.mu_blocks"));

    let cfg = write(
        tmp.path(),
        "d.toml",
        &MICRO.replace("count = 6", "count = 6\ncolour = 1"),
    );
    let o = privknap(&["validate", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn validate_prints_canonical_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", MICRO);
    let o = privknap(&["validate", &cfg]);
    assert!(o.status.success());
    let again = write(tmp.path(), "again.toml", &String::from_utf8(o.stdout).unwrap());
    let o2 = privknap(&["validate", &again]);
    assert!(o2.status.success());
}

#[test]
fn generated_workload_replays_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &MICRO.replace("seeds = [0, 1]", "seeds = [1]"));
    let json = tmp.path().join("w.json");
    let o = privknap(&["gen-workload", &cfg, "-s", "1", "-o", json.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let file_cfg = MICRO.replace("seeds = [0, 1]", "seeds = [1]").replace(
        "kind = \"microbenchmark\"\ntask_count = 60\nmu_blocks = 3\nsigma_blocks = 1.0",
        "kind = \"file\"\npath = \"w.json\"",
    );
    let file_cfg = write(tmp.path(), "f.toml", &file_cfg);

    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(privknap(&["run", &cfg, "-o", a.to_str().unwrap()]).status.success());
    assert!(privknap(&["run", &file_cfg, "-o", b.to_str().unwrap()])
        .status
        .success());
    let strip = |p: &Path| -> Vec<Vec<String>> {
        rows(&p.join("results.csv"))
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(i, _)| *i != 1)
                    .map(|(_, f)| f.to_string())
                    .collect()
            })
            .collect()
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn sweep_writes_one_run_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", MICRO);
    let out = tmp.path().join("sweep");
    let o = privknap(&[
        "sweep",
        &cfg,
        "-p",
        "task_count",
        "-v",
        "10,20",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("task_count=10/results.csv").exists());
    assert!(out.join("task_count=20/results.csv").exists());
    let rs = rows(&out.join("sweep.csv"));
    assert_eq!(rs.len(), 8);
    assert!(rs.iter().all(|r| &r[0] == "task_count"));
    assert_eq!(rs.iter().filter(|r| &r[1] == "20" && &r[6] == "20").count(), 4);

    let o = privknap(&["sweep", &cfg, "-p", "T", "-v", "5", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn describe_result_reads_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", SCENARIO);
    let out = tmp.path().join("out");
    assert!(privknap(&["run", &cfg, "-o", out.to_str().unwrap()]).status.success());
    let o = privknap(&["describe-result", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("optimal") && text.contains("dpf"));
    assert_eq!(
        privknap(&["describe-result", tmp.path().join("missing").to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn output_dir_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", SCENARIO);
    let out = tmp.path().join("env_out");
    let o = Command::new(env!("CARGO_BIN_EXE_privknap"))
        .args(["run", &cfg])
        .env("PRIVKNAP_OUTPUT_DIR", &out)
        .env("PRIVKNAP_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("results.csv").exists());
}
