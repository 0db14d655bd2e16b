//! CLI integration tests: exit codes, output atomicity and subcommand
//! behavior through the real binary.

use std::path::Path;
use std::process::{Command, Output};

use chrono::NaiveDate;

use symgrid_core::grid::{CoverageWindow, HalfGridCode};
use symgrid_core::synth::ScenarioConfig;
use symgrid_core::timespan::{StudyWindow, UtcOffset};

fn symgrid() -> Command {
    Command::new(env!("CARGO_BIN_EXE_symgrid"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed: {}\nstdout: {}",
        String::from_utf8_lossy(&out.stderr),
        String::from_utf8_lossy(&out.stdout)
    );
    out
}

fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

fn null_scenario_toml() -> String {
    let cfg = ScenarioConfig {
        seed: 1,
        users: 20,
        window: StudyWindow::new(date("2020-02-03"), date("2020-02-06")).unwrap(),
        tz: UtcOffset::default(),
        coverage: CoverageWindow::new(43.0, 141.2, 43.1, 141.4).unwrap(),
        background_match_rate: 0.0,
        noise_queries_per_day: 2,
        consent_rate: 1.0,
        cluster: None,
        movement: Default::default(),
    };
    toml::to_string(&cfg).unwrap()
}

#[test]
fn patterns_export_then_validate_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("patterns.txt");
    run_ok(symgrid().args(["patterns", "export", "--out"]).arg(&file));
    let text = std::fs::read_to_string(&file).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("mode")).count(), 63);
    let out = run_ok(symgrid().args(["patterns", "validate"]).arg(&file));
    assert!(String::from_utf8_lossy(&out.stdout).contains("63 patterns"));
}

#[test]
fn patterns_validate_rejects_corrupt_file_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.txt");
    std::fs::write(&file, "ok|single|fine\nbroken|double|co%na|x\n").unwrap();
    let out = symgrid().args(["patterns", "validate"]).arg(&file).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "diagnostic must carry the line: {stderr}");
}

#[test]
fn run_on_null_scenario_yields_empty_report_and_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("null.toml");
    std::fs::write(&cfg_path, null_scenario_toml()).unwrap();
    let sim_out = dir.path().join("sim");
    run_ok(symgrid().args(["simulate", "--config"]).arg(&cfg_path).arg("--out").arg(&sim_out));

    let run_out = dir.path().join("run");
    run_ok(
        symgrid()
            .args(["run", "--salt-env", "CLI_TEST_SALT", "--study-window", "2020-02-03..2020-02-06"])
            .args(["--coverage", "43.0,141.2,43.1,141.4"])
            .arg("--search")
            .arg(sim_out.join("search.csv"))
            .arg("--locations")
            .arg(sim_out.join("locations.csv"))
            .arg("--out")
            .arg(&run_out)
            .env("CLI_TEST_SALT", "s"),
    );
    let hotspots = std::fs::read_to_string(run_out.join("hotspots.csv")).unwrap();
    let data_rows =
        hotspots.lines().filter(|l| !l.starts_with('#') && !l.starts_with("rank")).count();
    assert_eq!(data_rows, 0, "null scenario must produce an empty report");
    let counter = std::fs::read_to_string(run_out.join("counter.csv")).unwrap();
    assert!(counter.starts_with("# symgrid counter v1 mode=exact"));
}

#[test]
fn missing_input_exits_nonzero_without_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let loc = dir.path().join("loc.csv");
    std::fs::write(&loc, "user_id,timestamp,lat,lon,consent\n").unwrap();
    let out = symgrid()
        .args(["run", "--salt-env", "CLI_TEST_SALT"])
        .arg("--search")
        .arg(dir.path().join("missing.csv"))
        .arg("--locations")
        .arg(&loc)
        .arg("--out")
        .arg(&out_dir)
        .env("CLI_TEST_SALT", "s")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("stage ingest"),
        "error names the failing stage"
    );
    assert!(!out_dir.exists(), "failed run must leave no outputs behind");
}

#[test]
fn unset_salt_env_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = symgrid()
        .args(["run", "--salt-env", "SALT_VAR_THAT_DOES_NOT_EXIST"])
        .arg("--search")
        .arg(dir.path().join("s.csv"))
        .arg("--locations")
        .arg(dir.path().join("l.csv"))
        .arg("--out")
        .arg(dir.path().join("o"))
        .env_remove("SALT_VAR_THAT_DOES_NOT_EXIST")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("SALT_VAR_THAT_DOES_NOT_EXIST"));
}

#[test]
fn simulate_rejects_bad_seed_type_with_schema_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.toml");
    std::fs::write(&cfg_path, null_scenario_toml().replace("seed = 1", "seed = \"abc\"")).unwrap();
    let out = symgrid()
        .args(["simulate", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path().join("sim"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("seed"), "diagnostic names the offending field: {stderr}");
}

#[test]
fn sketch_mode_runs_and_checkpoint_records_the_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("s.toml");
    let toml_text = null_scenario_toml().replace(
        "background_match_rate = 0.0",
        "background_match_rate = 0.5",
    );
    std::fs::write(&cfg_path, toml_text).unwrap();
    let sim_out = dir.path().join("sim");
    run_ok(symgrid().args(["simulate", "--config"]).arg(&cfg_path).arg("--out").arg(&sim_out));

    let exact_out = dir.path().join("exact");
    let sketch_out = dir.path().join("sketch");
    for (mode, out_dir) in [("exact", &exact_out), ("sketch", &sketch_out)] {
        run_ok(
            symgrid()
                .args(["run", "--salt-env", "CLI_TEST_SALT", "--mode", mode])
                .args(["--study-window", "2020-02-03..2020-02-06"])
                .args(["--coverage", "43.0,141.2,43.1,141.4", "--threshold", "0"])
                .arg("--search")
                .arg(sim_out.join("search.csv"))
                .arg("--locations")
                .arg(sim_out.join("locations.csv"))
                .arg("--out")
                .arg(out_dir)
                .env("CLI_TEST_SALT", "s"),
        );
    }
    let sketch_counter = std::fs::read_to_string(sketch_out.join("counter.csv")).unwrap();
    assert!(sketch_counter.starts_with("# symgrid counter v1 mode=sketch:14"));

    // At these cardinalities the sketch counts match the exact ones.
    let strip = |p: &Path| {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(str::to_string)
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&exact_out.join("counter.csv")), strip(&sketch_out.join("counter.csv")));

    // Merging checkpoints of different modes is refused.
    let out = symgrid()
        .args(["run", "--salt-env", "CLI_TEST_SALT", "--mode", "exact"])
        .args(["--study-window", "2020-02-03..2020-02-06"])
        .args(["--coverage", "43.0,141.2,43.1,141.4"])
        .arg("--search")
        .arg(sim_out.join("search.csv"))
        .arg("--locations")
        .arg(sim_out.join("locations.csv"))
        .arg("--merge-with")
        .arg(sketch_out.join("counter.csv"))
        .arg("--out")
        .arg(dir.path().join("clash"))
        .env("CLI_TEST_SALT", "s")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mode"));
}

#[test]
fn baseline_ratio_report_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let t = date("2020-02-14").and_hms_opt(3, 0, 0).unwrap().and_utc().timestamp();
    let (lat, lon) = HalfGridCode::parse("533935992").unwrap().bounds().center();
    std::fs::write(
        dir.path().join("search.csv"),
        format!("user_id,timestamp,query\nu1,{t},cough corona\nu2,{t},corona fevered\n"),
    )
    .unwrap();
    std::fs::write(
        dir.path().join("locations.csv"),
        format!(
            "user_id,timestamp,lat,lon,consent\nu1,{t},{lat},{lon},true\nu2,{t},{lat},{lon},true\n"
        ),
    )
    .unwrap();
    std::fs::write(dir.path().join("baseline.csv"), "block_code,value\n53393599,1000\n").unwrap();

    let out_dir = dir.path().join("out");
    run_ok(
        symgrid()
            .args(["run", "--salt-env", "CLI_TEST_SALT", "--threshold", "0", "--level", "third"])
            .arg("--search")
            .arg(dir.path().join("search.csv"))
            .arg("--locations")
            .arg(dir.path().join("locations.csv"))
            .arg("--baseline")
            .arg(dir.path().join("baseline.csv"))
            .arg("--out")
            .arg(&out_dir)
            .env("CLI_TEST_SALT", "s"),
    );
    let ratios = std::fs::read_to_string(out_dir.join("baseline_ratios.csv")).unwrap();
    assert!(ratios.contains("53393599,2,1000,0.002"), "ratio row present: {ratios}");
}

#[test]
fn merge_with_equals_single_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("s.toml");
    std::fs::write(
        &cfg_path,
        null_scenario_toml().replace("background_match_rate = 0.0", "background_match_rate = 0.4"),
    )
    .unwrap();
    let sim_out = dir.path().join("sim");
    run_ok(symgrid().args(["simulate", "--config"]).arg(&cfg_path).arg("--out").arg(&sim_out));

    // Split the location log in two, preserving header/comment lines.
    let full = std::fs::read_to_string(sim_out.join("locations.csv")).unwrap();
    let (head, data): (Vec<&str>, Vec<&str>) = full
        .lines()
        .partition(|l| l.starts_with('#') || l.starts_with("user_id"));
    let mid = data.len() / 2;
    let part = |rows: &[&str]| {
        let mut text = head.join("\n");
        text.push('\n');
        text.push_str(&rows.join("\n"));
        text.push('\n');
        text
    };
    std::fs::write(dir.path().join("loc_a.csv"), part(&data[..mid])).unwrap();
    std::fs::write(dir.path().join("loc_b.csv"), part(&data[mid..])).unwrap();

    let run_with = |locations: &Path, merge: Option<&Path>, out: &Path| {
        let mut cmd = symgrid();
        cmd.args(["run", "--salt-env", "CLI_TEST_SALT", "--threshold", "0"])
            .args(["--study-window", "2020-02-03..2020-02-06"])
            .args(["--coverage", "43.0,141.2,43.1,141.4"])
            .arg("--search")
            .arg(sim_out.join("search.csv"))
            .arg("--locations")
            .arg(locations)
            .arg("--out")
            .arg(out)
            .env("CLI_TEST_SALT", "s");
        if let Some(checkpoint) = merge {
            cmd.arg("--merge-with").arg(checkpoint);
        }
        run_ok(&mut cmd);
    };
    let out_a = dir.path().join("a");
    let out_merged = dir.path().join("merged");
    let out_single = dir.path().join("single");
    run_with(&dir.path().join("loc_a.csv"), None, &out_a);
    run_with(
        &dir.path().join("loc_b.csv"),
        Some(&out_a.join("counter.csv")),
        &out_merged,
    );
    run_with(&sim_out.join("locations.csv"), None, &out_single);

    // Data rows must agree; headers differ only in input digests.
    let data_rows = |p: &Path| {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(str::to_string)
            .collect::<Vec<_>>()
    };
    assert_eq!(
        data_rows(&out_merged.join("counter.csv")),
        data_rows(&out_single.join("counter.csv")),
        "split + merge must equal the single pass"
    );
    assert_eq!(
        data_rows(&out_merged.join("hotspots.csv")),
        data_rows(&out_single.join("hotspots.csv"))
    );
}

#[test]
fn report_command_reuses_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("s.toml");
    std::fs::write(
        &cfg_path,
        null_scenario_toml().replace("background_match_rate = 0.0", "background_match_rate = 0.4"),
    )
    .unwrap();
    let sim_out = dir.path().join("sim");
    run_ok(
        symgrid()
            .args(["simulate", "--then-run", "--threshold", "0", "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&sim_out),
    );

    let rep_out = dir.path().join("rep");
    run_ok(
        symgrid()
            .args(["report", "--level", "second", "--threshold", "0", "--format", "geojson"])
            .arg("--counter")
            .arg(sim_out.join("run/counter.csv"))
            .arg("--out")
            .arg(&rep_out),
    );
    let geojson = std::fs::read_to_string(rep_out.join("choropleth.geojson")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&geojson).unwrap();
    assert_eq!(doc["type"], "FeatureCollection");
    assert!(!doc["features"].as_array().unwrap().is_empty());
    // Second-level codes are 6 digits.
    assert_eq!(
        doc["features"][0]["properties"]["block_code"].as_str().unwrap().len(),
        6
    );
}
