use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mmqubit_cli::{record, registry, run, CliError, Format, RunConfig, RunRecord};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shipped(name: &str) -> String {
    fs::read_to_string(configs_dir().join(name)).unwrap()
}

fn mmqubit(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmqubit"))
        .args(args)
        .env(mmqubit_cli::OUTPUT_ROOT_VAR, root)
        .output()
        .unwrap()
}

/// Shipped config with its axes replaced by something quick to run.
fn small(name: &str, axes: &str) -> String {
    let text = shipped(name);
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("axes.")).collect();
    let mut out = String::new();
    for line in kept {
        out.push_str(line);
        out.push('\n');
        if line.starts_with("id = ") {
            out.push_str(axes);
            out.push('\n');
        }
    }
    out
}

fn quick_t1() -> String {
    small("fig4a.toml", "axes.delay = { start = 0.0, stop = 40.0, count = 41 }")
        .replace("dt_ns = 0.002", "dt_ns = 0.005")
}

#[test]
fn list_names_every_experiment_with_its_figure() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mmqubit(&["list"], tmp.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("punchout → Fig 2a"), "{text}");
    assert!(text.contains("ramsey → Fig 4b"), "{text}");
    assert!(text.lines().count() >= 7);
    for id in ["punchout", "two-tone", "rabi-time", "chevron", "t1", "ramsey", "purcell-sweep"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{id} → "))), "{id}");
    }
    assert_eq!(registry::listing().len(), registry::EXPERIMENTS.len());
}

#[test]
fn reversed_axis_is_a_validation_error_naming_it() {
    let text = small("fig4a.toml", "axes.delay = { start = 60.0, stop = 0.0, count = 11 }");
    let err = RunConfig::parse(&text).unwrap_err();
    assert!(matches!(err, CliError::Validation(_)));
    assert!(err.to_string().contains("experiment.axes.delay"), "{err}");

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, text).unwrap();
    let out = mmqubit(&["run", path.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("delay"));
}

#[test]
fn every_missing_device_parameter_is_named() {
    let text = shipped("fig4a.toml");
    let fields: Vec<String> = text
        .lines()
        .skip_while(|l| *l != "[device]")
        .skip(1)
        .take_while(|l| !l.is_empty())
        .map(|l| l.split('=').next().unwrap().trim().to_string())
        .collect();
    assert_eq!(fields.len(), 16);
    for field in &fields {
        let without: String = text
            .lines()
            .filter(|l| !l.starts_with(&format!("{field} =")))
            .map(|l| format!("{l}\n"))
            .collect();
        let err = RunConfig::parse(&without).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(field.as_str()) && msg.contains("device"), "{field}: {msg}");
    }
}

#[test]
fn schema_errors_carry_field_paths() {
    let bad_type = quick_t1().replace("count = 41", "count = \"many\"");
    let msg = RunConfig::parse(&bad_type).unwrap_err().to_string();
    assert!(msg.contains("experiment.axes.delay.count"), "{msg}");

    let unknown = quick_t1().replace("id = \"t1\"", "id = \"t3\"");
    let msg = RunConfig::parse(&unknown).unwrap_err().to_string();
    assert!(msg.contains("experiment.id") && msg.contains("t3"), "{msg}");

    let wrong_axes = small("fig4a.toml", "axes.tau = { start = 0.0, stop = 1.0, count = 3 }");
    let msg = RunConfig::parse(&wrong_axes).unwrap_err().to_string();
    assert!(msg.contains("delay"), "{msg}");

    let typo = quick_t1().replace("[dynamics]", "[dynamics]\nnq = 3");
    assert!(RunConfig::parse(&typo).is_err());

    let no_pulse: String = quick_t1().lines().filter(|l| !l.starts_with("pulse")).map(|l| format!("{l}\n")).collect();
    let msg = RunConfig::parse(&no_pulse).unwrap_err().to_string();
    assert!(msg.contains("experiment.pulse"), "{msg}");
}

#[test]
fn resource_guard_breach_exits_with_runtime_code() {
    let text = small(
        "figS8.toml",
        "axes.drive_frequency = { start = 71.8, stop = 72.3, count = 101 }\naxes.amplitude = { start = 0.0, stop = 0.25, count = 101 }",
    );
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("huge.toml");
    fs::write(&path, text).unwrap();
    let out = mmqubit(&["run", path.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid points"));
}

#[test]
fn unknown_emit_format_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mmqubit(&["emit", "whatever", "--format", "xlsx"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let out = mmqubit(&["emit", tmp.path().join("none").to_str().unwrap(), "--format", "csv"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != record::TIMING_FILE)
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn identical_configs_give_identical_bytes() {
    let cfg = RunConfig::parse(&quick_t1()).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run(&cfg, a.path()).unwrap();
    let rb = run(&cfg, b.path()).unwrap();
    let (ta, tb) = (tree(&ra.dir), tree(&rb.dir));
    assert!(ta.len() >= 5);
    assert_eq!(ta, tb);
    assert!(ra.dir.join(record::TIMING_FILE).exists());
}

#[test]
fn t1_run_fits_and_emits_two_columns() {
    let cfg = RunConfig::parse(&quick_t1()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let art = run(&cfg, tmp.path()).unwrap();
    let t1 = art.record.fits["t1"].value("T").unwrap();
    assert!((t1 / 15.849 - 1.0).abs() < 0.01, "{t1}");
    let csv = fs::read_to_string(art.dir.join("t1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("delay [ns],value"));
    assert!(lines.all(|l| l.split(',').count() == 2));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(art.dir.join("t1.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["dt_ns"], 0.005);
    assert_eq!(meta["seed"], 0);
    assert_eq!(meta["config_hash"], art.record.config_hash);
    assert_eq!(meta["axes"][0]["unit"], "ns");
}

#[test]
fn persisted_record_re_emits_byte_for_byte() {
    let cfg = RunConfig::parse(&quick_t1()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let art = run(&cfg, tmp.path()).unwrap();
    let rec = RunRecord::load(&art.dir).unwrap();
    assert_eq!(rec, art.record);
    let again = tmp.path().join("again");
    for f in [Format::Csv, Format::Json] {
        record::emit(&rec, f, &again).unwrap();
    }
    let original: Vec<_> = tree(&art.dir).into_iter().filter(|(n, _)| n != record::RECORD_FILE).collect();
    assert_eq!(original, tree(&again));

    let cli_out = tmp.path().join("cli");
    let out = mmqubit(
        &["emit", art.dir.join("record.json").to_str().unwrap(), "--format", "csv", "--out", cli_out.to_str().unwrap()],
        tmp.path(),
    );
    assert!(out.status.success());
    assert_eq!(fs::read(cli_out.join("t1.csv")).unwrap(), fs::read(art.dir.join("t1.csv")).unwrap());
}

#[test]
fn chevron_grid_header_holds_amplitudes() {
    let text = small(
        "figS8.toml",
        "axes.drive_frequency = { start = 72.0, stop = 72.2, count = 3 }\naxes.amplitude = { start = 0.0, stop = 0.2, count = 5 }",
    )
    .replace("n_q = 3", "n_q = 2")
    .replace("tau_ns = 4.0", "tau_ns = 1.0");
    let cfg = RunConfig::parse(&text).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let art = run(&cfg, tmp.path()).unwrap();
    let csv = fs::read_to_string(art.dir.join("chevron.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    let header: Vec<f64> = rows[0][1..].iter().map(|v| v.parse().unwrap()).collect();
    for (h, want) in header.iter().zip([0.0, 0.05, 0.1, 0.15, 0.2]) {
        assert!((h - want).abs() < 1e-12, "{header:?}");
    }
    assert_eq!(header.len(), 5);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.len() == 6));
    let long = fs::read_to_string(art.dir.join("chevron_long.csv")).unwrap();
    assert_eq!(long.lines().count(), 1 + 15);
}

#[test]
fn hash_ignores_layout_and_comments() {
    let text = quick_t1();
    let a = RunConfig::parse(&text).unwrap();
    let reshuffled = format!("# another comment\n{}", text.replace("ej_ghz = 2871.0", "ej_ghz   =   2.871e3"));
    let b = RunConfig::parse(&reshuffled).unwrap();
    assert_eq!(a.hash(), b.hash());
    let c = RunConfig::parse(&text.replace("t1_ns = 15.849", "t1_ns = 15.85")).unwrap();
    assert_ne!(a.hash(), c.hash());
    assert_eq!(a.hash().len(), 64);
}

#[test]
fn every_shipped_config_validates() {
    let mut n = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert_eq!(n, 9);
}

#[test]
fn noise_is_seeded() {
    let noisy = quick_t1().replace("dt_ns = 0.005", "dt_ns = 0.005\nnoise_amplitude = 0.01\nnoise_seed = 7");
    let cfg = RunConfig::parse(&noisy).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run(&cfg, a.path()).unwrap();
    let rb = run(&cfg, b.path()).unwrap();
    assert_eq!(ra.record.sweep, rb.record.sweep);
    let clean = run(&RunConfig::parse(&quick_t1()).unwrap(), a.path().join("c").as_path()).unwrap();
    assert_ne!(ra.record.sweep.values, clean.record.sweep.values);
}
