use std::path::Path;
use std::process::{Command, Output};

use renewwatch::pipeline::RunManifest;

const SMALL: &str = r#"
workers = 2
[synth]
tiles_x = 2
tiles_y = 1
solar_count = 8
wind_count = 24
decoy_count = 1
bright_roof_count = 4
dark_roof_count = 2
tower_count = 4
bare_lot_count = 2
greenhouse_count = 1
countries_x = 2
countries_y = 1
"#;

fn renewwatch(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_renewwatch"))
        .args(args)
        .arg("--stage-dir")
        .arg(dir.join("run"))
        .env("RENEWWATCH_CONFIG", dir.join("config.toml"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn stages_run_in_order_and_report_errors_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("config.toml"), SMALL).unwrap();

    let early = renewwatch(dir.path(), &["infer"]);
    assert_eq!(early.status.code(), Some(3), "{}", stderr(&early));
    assert!(stderr(&early).contains("run `renewwatch"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[inference]\nbinarize = 1.5\n").unwrap();
    let o = renewwatch(dir.path(), &["synth", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("binarize"));

    let all = renewwatch(dir.path(), &["all"]);
    assert!(all.status.success(), "{}", stderr(&all));
    let stdout = String::from_utf8_lossy(&all.stdout);
    for stage in ["synth", "train", "clean", "infer", "vectorize", "filter", "date", "enrich", "aggregate", "evaluate"] {
        assert!(stdout.lines().any(|l| l.starts_with(&format!("{stage}: "))), "{stage} missing from\n{stdout}");
        assert!(dir.path().join("run").join(stage).join("manifest.json").exists());
    }

    let run = dir.path().join("run");
    for f in ["filter/solar.geojson", "filter/wind_verdicts.csv", "date/series.csv", "aggregate/countries.csv", "evaluate/report.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let header = std::fs::read_to_string(run.join("date/series.csv")).unwrap();
    assert!(header.starts_with("technology,id,2017Q4,2018Q1,"));
    assert!(header.lines().next().unwrap().ends_with(",2024Q2"));

    let enriched: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("enrich/solar.geojson")).unwrap()).unwrap();
    for f in enriched["features"].as_array().unwrap() {
        let p = &f["properties"];
        for key in ["built_quarter", "landcover_2018", "country_iso3", "capacity_mw"] {
            assert!(p.get(key).is_some(), "{key} missing in {p}");
        }
    }

    // rerunning a stage reproduces its files byte for byte
    let before = RunManifest::read(&run.join("vectorize")).unwrap().files;
    let again = renewwatch(dir.path(), &["vectorize", "--workers", "1"]);
    assert!(again.status.success(), "{}", stderr(&again));
    assert_eq!(RunManifest::read(&run.join("vectorize")).unwrap().files, before);
}

#[test]
fn print_config_reflects_overrides() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("config.toml"), SMALL).unwrap();
    let o = renewwatch(dir.path(), &["print-config", "--seed", "44"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let back = renewwatch::pipeline::PipelineConfig::from_toml(&text).unwrap();
    assert_eq!(back.seed, 44);
    assert_eq!(back.workers, 2);
    assert_eq!(back.synth.tiles_x, 2);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("config.toml"), "[synth]\nno_such_field = 3\n").unwrap();
    let o = renewwatch(dir.path(), &["synth"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
