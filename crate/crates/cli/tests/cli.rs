use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phonocomb_cli::demo::demo_config;
use phonocomb_cli::{run_scenario_in, Pipeline, RunReport};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phonocomb"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], out_root: &Path) -> Output {
    bin().args(args).env("PHONOCOMB_OUT", out_root).output().unwrap()
}

const SMALL_MULTIMODE: &[(&str, &str)] = &[("n_samples = 100000", "n_samples = 20000"), ("interval_count = 75", "interval_count = 8")];

fn demo_with(p: Pipeline, edits: &[(&str, &str)]) -> String {
    let mut text = demo_config(p).to_string();
    for (from, to) in edits {
        assert!(text.contains(from), "demo lacks {from}");
        text = text.replace(from, to);
    }
    text
}

#[test]
fn demo_prints_valid_configs() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["twomode", "multimode", "calibration", "scattering"] {
        let path = dir.path().join(format!("{name}.toml"));
        let out = bin().args(["demo", name, "-o"]).arg(&path).output().unwrap();
        assert!(out.status.success());
        let out = bin().arg("validate").arg(&path).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains(&format!("valid {name} scenario")));
    }
    let out = bin().args(["demo", "scattering"]).output().unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), demo_config(Pipeline::Scattering));
}

#[test]
fn missing_mode_index_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let text = demo_config(Pipeline::Twomode).replace("modes = [0, 2]", "modes = [0, 9]");
    let cfg = write(dir.path(), "bad.toml", &text);
    let line = text.lines().position(|l| l.contains("modes = [0, 9]")).unwrap() + 1;
    for cmd in ["validate", "run"] {
        let out = bin().arg(cmd).arg(&cfg).output().unwrap();
        assert_eq!(out.status.code(), Some(2));
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(&format!("bad.toml:{line}:")), "{err}");
        assert!(err.contains("probes.modes") && err.contains("mode index 9"), "{err}");
    }
}

#[test]
fn malformed_and_missing_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "typo.toml", &demo_config(Pipeline::Scattering).replace("pump_count", "pump_cnt"));
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pump_cnt"));
    let out = bin().arg("run").arg(dir.path().join("absent.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let cfg = write(dir.path(), "noseed.toml", &demo_config(Pipeline::Twomode).replace("seed = 7\n", ""));
    let out = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sampling.seed"));
}

#[test]
fn drive_above_threshold_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "hot.toml", &demo_config(Pipeline::Twomode).replace("epsilon_hz = 5e3", "epsilon_hz = 25e3"));
    let out = run(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numerical error"));
}

#[test]
fn report_manifest_matches_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "scat.toml", demo_config(Pipeline::Scattering));
    let root = dir.path().join("root");
    let out = run(&["run", cfg.to_str().unwrap()], &root);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let printed: RunReport = serde_json::from_slice(&out.stdout).unwrap();
    let out_dir = root.join("out-scattering");
    let stored: RunReport = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(printed, stored);
    let mut on_disk: Vec<String> =
        std::fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    on_disk.sort();
    assert_eq!(on_disk, stored.files);
    assert_eq!(stored.files.iter().filter(|f| f.starts_with("scattering_0")).count(), 21);
    assert_eq!(stored.metrics["max_matches"], 9);
}

#[test]
fn twomode_is_reproducible_and_squeezes_on_resonance() {
    let dir = tempfile::tempdir().unwrap();
    let text = demo_with(Pipeline::Twomode, &[("n_samples = 200000", "n_samples = 40000"), ("detuning_steps = 13", "detuning_steps = 3")]);
    let cfg = write(dir.path(), "two.toml", &text);
    let a = run_scenario_in(&cfg, Some(&dir.path().join("a"))).unwrap();
    let b = run_scenario_in(&cfg, Some(&dir.path().join("b"))).unwrap();
    assert_eq!(a, b);
    for f in &a.files {
        let pa = dir.path().join("a/out-twomode").join(f);
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(dir.path().join("b/out-twomode").join(f)).unwrap(), "{f}");
    }
    let points = a.metrics["points"].as_array().unwrap();
    let centre = &points[1];
    assert_eq!(centre["detuning_hz"], 0.0);
    let (r_e, r_th) = (centre["r_e"].as_f64().unwrap(), centre["r_e_theory"].as_f64().unwrap());
    assert!((r_e - r_th).abs() < 0.05 * r_th, "{r_e} vs {r_th}");
    assert!(r_e > points[0]["r_e"].as_f64().unwrap());
    assert!(a.files.contains(&"histograms_001.csv".to_string()));
}

#[test]
fn multimode_with_phase_drift_finds_all_bipartitions_entangled() {
    let dir = tempfile::tempdir().unwrap();
    let mut edits = SMALL_MULTIMODE.to_vec();
    edits.push(("phase_drift = false", "phase_drift = true"));
    let cfg = write(dir.path(), "mm.toml", &demo_with(Pipeline::Multimode, &edits));
    let r = run_scenario_in(&cfg, Some(dir.path())).unwrap();
    let rows = r.metrics["bipartitions"].as_array().unwrap();
    assert_eq!(rows.len(), 7);
    for row in rows {
        assert!(row["e_weighted"].as_f64().unwrap() < 0.0, "{row}");
        assert!(row["sigma_w"].as_f64().unwrap() < -2.0, "{row}");
    }
    let table: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out-multimode/entanglement_table.json")).unwrap())
            .unwrap();
    assert_eq!(table.as_array().unwrap().len(), 7);
}

#[test]
fn calibration_store_feeds_multimode_deamplification() {
    let dir = tempfile::tempdir().unwrap();
    let cal = demo_config(Pipeline::Calibration)
        .replace(
            "modes = [\n  { index = 0, freq_hz = 3.8500e9, loss_ext_hz = 20e3, loss_int_hz = 20e3 },\n  { index = 2, freq_hz = 3.8546e9, loss_ext_hz = 20e3, loss_int_hz = 20e3 },\n]",
            "modes = [\n  { index = 0, freq_hz = 3.8500e9, loss_ext_hz = 20e3, loss_int_hz = 20e3 },\n  { index = 2, freq_hz = 3.8546e9, loss_ext_hz = 20e3, loss_int_hz = 20e3 },\n  { index = 4, freq_hz = 3.8592e9, loss_ext_hz = 20e3, loss_int_hz = 20e3 },\n  { index = 6, freq_hz = 3.8638e9, loss_ext_hz = 20e3, loss_int_hz = 20e3 },\n]",
        )
        .replace("[probes]\nmodes = [0, 2]", "[probes]\nmodes = [0, 2, 4, 6]")
        .replace("output_dir = \"out-calibration\"", "output_dir = \"cal\"");
    let cal_cfg = write(dir.path(), "cal.toml", &cal);
    let report = run_scenario_in(&cal_cfg, None).unwrap();
    let planck = report.metrics["planck"].as_array().unwrap();
    assert_eq!(planck.len(), 4);
    for p in planck {
        assert!((p["gain"].as_f64().unwrap() / 1e8 - 1.0).abs() < 0.05);
        assert!((p["added"].as_f64().unwrap() - 0.08).abs() < 0.02);
    }
    assert!(report.metrics.get("lineshape").is_none());

    let mut edits = SMALL_MULTIMODE.to_vec();
    edits.push(("sigma_added = 0.01\n", "sigma_added = 0.01\ncalibration_path = \"cal/calibration.json\"\n"));
    let mm = write(dir.path(), "mm.toml", &demo_with(Pipeline::Multimode, &edits));
    let r = run_scenario_in(&mm, None).unwrap();
    for row in r.metrics["bipartitions"].as_array().unwrap() {
        assert!(row["e_weighted"].as_f64().unwrap() < 0.0, "{row}");
    }
    // the digest covers the calibration file as well as the scenario
    std::fs::write(dir.path().join("cal/calibration.json"), std::fs::read_to_string(dir.path().join("cal/calibration.json")).unwrap() + " ").unwrap();
    let r2 = run_scenario_in(&mm, None).unwrap();
    assert_ne!(r.inputs_digest, r2.inputs_digest);
}

#[test]
fn calibration_demo_recovers_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cal.toml", demo_config(Pipeline::Calibration));
    let r = run_scenario_in(&cfg, Some(dir.path())).unwrap();
    let l = &r.metrics["lineshape"];
    assert!((l["gain"].as_f64().unwrap() / 1e8 - 1.0).abs() < 1e-6);
    assert!((l["epsilon_hz"].as_f64().unwrap() - 6e3).abs() < 1e-3);
    assert!((l["added"].as_f64().unwrap() - 0.08).abs() < 1e-6);
    assert!(l["ppt_crossing_k"].as_f64().unwrap() > 0.03);
    for f in ["planck_fits.csv", "lineshape.csv", "ppt_sweep.csv", "calibration.json"] {
        assert!(r.files.contains(&f.to_string()), "{f}");
    }
}

#[test]
fn csv_inputs_replace_synthesis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cal.toml", demo_config(Pipeline::Calibration));
    let first = run_scenario_in(&cfg, Some(&dir.path().join("a"))).unwrap();
    let out = dir.path().join("a/out-calibration");
    std::fs::copy(out.join("planck_data.csv"), dir.path().join("planck.csv")).unwrap();
    let shape: String = std::fs::read_to_string(out.join("lineshape.csv"))
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
        .collect();
    write(dir.path(), "shape.csv", &shape);
    let text = demo_config(Pipeline::Calibration)
        .replace("[calibration]\n", "[calibration]\nplanck_csv = \"planck.csv\"\nlineshape_csv = \"shape.csv\"\n");
    let cfg2 = write(dir.path(), "cal2.toml", &text);
    let second = run_scenario_in(&cfg2, Some(&dir.path().join("b"))).unwrap();
    let g = |r: &RunReport| r.metrics["planck"][0]["gain"].as_f64().unwrap();
    assert!((g(&first) - g(&second)).abs() < 1e-6 * g(&first));
    let e = |r: &RunReport| r.metrics["lineshape"]["epsilon_hz"].as_f64().unwrap();
    assert!((e(&first) - e(&second)).abs() < 1e-3, "{} vs {}", e(&first), e(&second));
}
