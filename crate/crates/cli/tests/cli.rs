use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use boundary_cli::output::json_bytes;
use boundary_core::catalogue::CatalogueRow;
use serde_json::Value;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn boundary(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boundary"))
        .args(args)
        .env("BOUNDARY_OUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn missing_config_exits_2_and_names_path() {
    let tmp = TempDir::new().unwrap();
    let o = boundary(tmp.path(), &["run", "no/such/scenario.toml"]);
    assert_eq!(code(&o), 2);
    assert!(
        stderr(&o).contains("no/such/scenario.toml"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn unknown_key_exits_2() {
    let tmp = TempDir::new().unwrap();
    let p = write_config(
        tmp.path(),
        "c.toml",
        "command = \"chain\"\n[chain]\nlenghts = [2]\n",
    );
    let o = boundary(tmp.path(), &["run", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("lenghts"), "{}", stderr(&o));

    let p = write_config(tmp.path(), "d.toml", "command = \"chain\"\nextra = 1\n");
    assert_eq!(
        code(&boundary(tmp.path(), &["run", p.to_str().unwrap()])),
        2
    );
}

#[test]
fn bad_probability_exits_2() {
    let tmp = TempDir::new().unwrap();
    let p = write_config(tmp.path(), "c.toml", "[chain]\neps = [1.5]\n");
    let o = boundary(tmp.path(), &["chain", "--config", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn guard_trip_exits_3() {
    let tmp = TempDir::new().unwrap();
    let p = write_config(
        tmp.path(),
        "t.toml",
        "command = \"trust\"\n[trust.agent]\neps1 = 0.0\nprompt_shift = 0.1\nk_star = 2\n",
    );
    let o = boundary(tmp.path(), &["run", p.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn catalogue_lists_sixteen_rows() {
    let tmp = TempDir::new().unwrap();
    let o = boundary(tmp.path(), &["catalogue"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    // header plus one line per row
    assert_eq!(text.lines().count(), 17);

    let o = boundary(tmp.path(), &["catalogue", "--json"]);
    let rows: Vec<CatalogueRow> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r.verdict.is_none()));
}

#[test]
fn catalogue_horizon_row() {
    let tmp = TempDir::new().unwrap();
    let o = boundary(
        tmp.path(),
        &["catalogue", "--spec", "2", "--L", "32", "--d", "4096"],
    );
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains("27.387"), "{text}");

    let o = boundary(
        tmp.path(),
        &[
            "catalogue",
            "--spec",
            "2",
            "--L",
            "32",
            "--d",
            "4096",
            "--json",
        ],
    );
    let rows: Vec<CatalogueRow> = serde_json::from_slice(&o.stdout).unwrap();
    let d = rows[0].verdict.as_ref().unwrap().boundary_value;
    assert!((d - 27.4).abs() < 0.05, "{d}");

    assert_eq!(
        code(&boundary(tmp.path(), &["catalogue", "--spec", "17"])),
        2
    );
    assert_eq!(
        code(&boundary(tmp.path(), &["catalogue", "--depth", "3"])),
        2
    );
}

#[test]
fn catalogue_json_round_trips() {
    let tmp = TempDir::new().unwrap();
    let o = boundary(tmp.path(), &["catalogue", "--reference", "--json"]);
    assert_eq!(code(&o), 0);
    let rows: Vec<CatalogueRow> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r.verdict.is_some()));
    // re-emitting the parsed rows reproduces the output exactly
    let again = json_bytes(&serde_json::to_value(&rows).unwrap());
    assert_eq!(again, o.stdout);
    let back: Vec<CatalogueRow> = serde_json::from_slice(&again).unwrap();
    assert_eq!(back, rows);
}

#[test]
fn catalogue_json_matches_schema() {
    let schema: Value = serde_json::from_str(
        &fs::read_to_string(
            Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/catalogue.schema.json"),
        )
        .unwrap(),
    )
    .unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let tmp = TempDir::new().unwrap();
    for args in [
        &["catalogue", "--json"][..],
        &["catalogue", "--reference", "--json"],
        &[
            "catalogue",
            "--spec",
            "2",
            "--L",
            "32",
            "--d",
            "4096",
            "--depth",
            "40",
            "--json",
        ],
    ] {
        let o = boundary(tmp.path(), args);
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        let errors: Vec<String> = validator.iter_errors(&v).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{args:?}: {errors:?}");
    }
    let mut bad: Value =
        serde_json::from_slice(&boundary(tmp.path(), &["catalogue", "--json"]).stdout).unwrap();
    bad[0]["rule"] = Value::String("not-a-rule".into());
    assert!(!validator.is_valid(&bad));
}

#[test]
fn worked_example_design_plan() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("horizon.toml");
    let o = boundary(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["plan"]["k_star"], 3);
    let saved: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("horizon.json")).unwrap())
            .unwrap();
    assert_eq!(saved, v);
    assert!(tmp.path().join("horizon.manifest.json").exists());
    assert!(tmp.path().join("decay.csv").exists());
}

#[test]
fn shipped_configs_load() {
    let tmp = TempDir::new().unwrap();
    for entry in fs::read_dir(configs()).unwrap() {
        let p = entry.unwrap().path();
        let loaded = boundary_cli::scenario::load(&p, None);
        assert!(loaded.is_ok(), "{}: {:?}", p.display(), loaded.err());
    }
    let _ = tmp;
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.to_string_lossy().ends_with(".manifest.json"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn manifest_replay_is_byte_identical() {
    let first = TempDir::new().unwrap();
    let cfg = write_config(
        first.path(),
        "c.toml",
        "command = \"chain\"\nseed = 9\n[chain]\nlengths = [5, 10]\neps = [0.05]\ntrials = 2000\n",
    );
    assert_eq!(
        code(&boundary(first.path(), &["run", cfg.to_str().unwrap()])),
        0
    );
    fs::remove_file(&cfg).unwrap();
    let manifest = first.path().join("chain.manifest.json");
    let m: Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
    assert_eq!(
        m["outputs"],
        serde_json::json!(["chain.json", "chain_sim.csv"])
    );

    for threads in ["1", "4"] {
        let second = TempDir::new().unwrap();
        let o = boundary(
            second.path(),
            &["--threads", threads, "run", manifest.to_str().unwrap()],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_eq!(outputs(first.path()), outputs(second.path()));
    }
}

#[test]
fn seed_flag_overrides_config() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cfg = write_config(
        a.path(),
        "c.toml",
        "[chain]\nlengths = [5]\neps = [0.05]\ntrials = 500\n",
    );
    let c = cfg.to_str().unwrap();
    boundary(a.path(), &["chain", "--config", c, "--seed", "1"]);
    boundary(b.path(), &["chain", "--config", c, "--seed", "2"]);
    let read = |d: &TempDir| fs::read(d.path().join("chain_sim.csv")).unwrap();
    assert_ne!(read(&a), read(&b));
}

#[test]
fn report_empty_directory_exits_2() {
    let tmp = TempDir::new().unwrap();
    let out = TempDir::new().unwrap();
    let o = boundary(out.path(), &["report", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = boundary(
        out.path(),
        &["report", tmp.path().join("missing").to_str().unwrap()],
    );
    assert_eq!(code(&o), 2);
    fs::write(tmp.path().join("notes.txt"), "nothing to check").unwrap();
    assert_eq!(
        code(&boundary(
            out.path(),
            &["report", tmp.path().to_str().unwrap()]
        )),
        2
    );
}

#[test]
fn report_chain_cells_pass() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "[chain]\nlengths = [2, 5, 10, 15, 20]\neps = [0.01, 0.05, 0.1]\ntrials = 100000\n",
    );
    assert_eq!(
        code(&boundary(
            tmp.path(),
            &["chain", "--config", cfg.to_str().unwrap()]
        )),
        0
    );
    let o = boundary(tmp.path(), &["report", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    // in-regime cells only: n * eps < 1
    assert_eq!(
        text.lines()
            .filter(|l| l.starts_with("chain_sim.csv"))
            .count(),
        11
    );
}

#[test]
fn report_mixed_results_exit_4() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("chain_sim.csv"),
        "n,eps,bound,estimate,ci_low,ci_high,rel_err,in_regime,kredundant_bound,kredundant_exact\n\
         5,0.05,0.2262190625,0.2265,0.22,0.23,0.001,true,0.0375,0.0357\n\
         10,0.05,0.401263060762,0.30,0.29,0.31,0.25,true,0.075,0.07\n\
         20,0.1,0.878423345409,0.2,0.19,0.21,0.77,false,0.6,0.43\n",
    )
    .unwrap();
    let o = boundary(tmp.path(), &["report", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(
        text.contains("n=5 eps=0.05") && text.contains("PASS"),
        "{text}"
    );
    assert!(
        text.contains("n=10 eps=0.05") && text.contains("FAIL"),
        "{text}"
    );
    assert!(!text.contains("n=20"), "{text}");
}

#[test]
fn report_rechecks_saved_json() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("x.json"),
        r#"{"checks": [{"name": "claims pass", "kind": "at_most", "observed": 2.0, "target": 1.0, "tolerance": 0.0, "pass": true}]}"#,
    )
    .unwrap();
    let o = boundary(tmp.path(), &["report", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 4);
}
