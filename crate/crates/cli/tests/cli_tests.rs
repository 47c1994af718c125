//! Behavioral tests of the `sqzcomb` binary: exit codes, diagnostics,
//! output-file contracts, flag overrides, and the binary trace format as
//! written to disk.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sqzcomb_cli::config::RunConfig;
use sqzcomb_cli::trace_io::{self, TraceIoError};

/// Deliberately small run: every command finishes in well under a second.
const SMALL_CONFIG: &str = r#"
output_dir = "outrel"

[opo]
fsr_hz = 1e8
input_transmission = 0.05
intracavity_loss = 0.02
nonlinear_rate_hz = 4e6

[trace]
sample_rate_hz = 1e9
segment_length = 1024
segment_count = 100
rng_seed = 7
quadrature = "phase"
averaging_mode = "power"

[detector]
analogue_bandwidth_hz = 4e8

[spectrum]
max_frequency_hz = 5e8
frequency_step_hz = 1e6

[capacity]
photon_flux = 1.0
analogue_bandwidth_hz = 2.0
signal_bandwidth_hz = 1.0

[plan]
n_channels = 2
guard_band_hz = 2e7
subband_width_bins = 4
floor_bins_per_side = 6
misaligned_offset_bins = [-30.0, -28.0]
write_crosstalk = true
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn sqzcomb(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqzcomb"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn assert_exit(output: &Output, code: i32, context: &str) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "{context}: stderr = {}",
        stderr_of(output)
    );
}

fn sorted_file_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

#[test]
fn missing_config_source_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sqzcomb(dir.path(), &["capacity"]);
    assert_exit(&out, 2, "no --config or --paper-defaults");
    assert!(stderr_of(&out).contains("--config"), "{}", stderr_of(&out));

    let out = sqzcomb(dir.path(), &["nonsense-command"]);
    assert_exit(&out, 2, "unknown subcommand");
}

#[test]
fn malformed_configs_exit_2_naming_the_offending_key() {
    let dir = tempfile::tempdir().unwrap();
    // (mutation of the small config, fragment the diagnostic must contain)
    let cases: &[(&str, &str, &str)] = &[
        ("fsr_hz = 1e8", "fsr_hz = 1e8\nbogus_key = 3", "bogus_key"),
        (
            "fsr_hz = 1e8",
            "fsr_hz = 1e8\nround_trip_time_s = 1e-8",
            "mutually exclusive",
        ),
        ("intracavity_loss = 0.02\n", "", "intracavity_loss"),
        (
            "nonlinear_rate_hz = 4e6",
            "nonlinear_rate_hz = 4e6\n\n[opo.gain_fit]\namplification_db = 3.9\ndeamplification_db = 2.6",
            "gain_fit",
        ),
        ("quadrature = \"phase\"", "quadrature = \"both\"", "quadrature"),
        (
            "signal_bandwidth_hz = 1.0",
            "signal_bandwidth_hz = 3.0",
            "signal",
        ),
        (
            "misaligned_offset_bins = [-30.0, -28.0]",
            "misaligned_offset_bins = [-30.0]",
            "misaligned_offset_bins",
        ),
        (
            "analogue_bandwidth_hz = 4e8",
            "analogue_bandwidth_hz = 6e8",
            "Nyquist",
        ),
        (
            "frequency_step_hz = 1e6",
            "frequency_step_hz = 0.0",
            "frequency_step_hz",
        ),
        ("segment_length = 1024", "segment_length = 1000", "segment"),
    ];
    for (from, to, fragment) in cases {
        let mutated = SMALL_CONFIG.replace(from, to);
        assert_ne!(mutated, SMALL_CONFIG, "mutation {from:?} must apply");
        let path = write_config(dir.path(), &mutated);
        let out = sqzcomb(dir.path(), &["capacity", "--config", path.to_str().unwrap()]);
        assert_exit(&out, 2, &format!("mutation {from:?} -> {to:?}"));
        assert!(
            stderr_of(&out).contains(fragment),
            "diagnostic for {to:?} should contain {fragment:?}, got: {}",
            stderr_of(&out)
        );
    }
}

#[test]
fn runtime_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), SMALL_CONFIG);
    let out = sqzcomb(
        dir.path(),
        &[
            "capacity",
            "--config",
            path.to_str().unwrap(),
            "--out",
            "/proc/1/nope",
        ],
    );
    assert_exit(&out, 1, "unwritable output directory");
}

#[test]
fn fit_gains_requires_the_gain_fit_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), SMALL_CONFIG);
    let out = sqzcomb(dir.path(), &["fit-gains", "--config", path.to_str().unwrap()]);
    assert_exit(&out, 2, "explicit pump parameters but fit-gains invoked");
    assert!(stderr_of(&out).contains("gain_fit"), "{}", stderr_of(&out));
}

#[test]
fn seed_flag_overrides_config_and_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), SMALL_CONFIG);
    let cfg = path.to_str().unwrap().to_owned();

    let mut traces = Vec::new();
    for (sub, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        let out_dir = dir.path().join(sub);
        let out = sqzcomb(
            dir.path(),
            &["synth", "--config", &cfg, "--seed", seed, "--out", out_dir.to_str().unwrap()],
        );
        assert_exit(&out, 0, "synth");
        traces.push(fs::read(out_dir.join("trace.sqzt")).unwrap());
    }
    assert_eq!(traces[0], traces[1], "same seed, same bytes");
    assert_ne!(traces[0], traces[2], "different seed, different noise");
}

#[test]
fn written_traces_read_back_and_reject_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), SMALL_CONFIG);
    let out_dir = dir.path().join("out");
    let out = sqzcomb(
        dir.path(),
        &["synth", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
    );
    assert_exit(&out, 0, "synth");

    let trace_path = out_dir.join("trace.sqzt");
    let trace = trace_io::read_trace(&trace_path).unwrap();
    assert_eq!(trace.sample_rate_hz, 1e9);
    assert_eq!(trace.len(), 100 * 1024);

    let bytes = fs::read(&trace_path).unwrap();
    fs::write(&trace_path, &bytes[..bytes.len() - 1]).unwrap();
    assert!(matches!(
        trace_io::read_trace(&trace_path),
        Err(TraceIoError::Truncated(..))
    ));

    let mut versioned = bytes.clone();
    versioned[4..8].copy_from_slice(&9u32.to_le_bytes());
    fs::write(&trace_path, &versioned).unwrap();
    let err = trace_io::read_trace(&trace_path).unwrap_err().to_string();
    assert!(
        err.contains("expected 1") && err.contains("found 9"),
        "version diagnostic: {err}"
    );
}

#[test]
fn every_command_writes_only_inside_the_output_dir() {
    let work = tempfile::tempdir().unwrap();
    let cfg_dir = tempfile::tempdir().unwrap();
    let cfg = write_config(cfg_dir.path(), SMALL_CONFIG);
    let cfg = cfg.to_str().unwrap().to_owned();

    let expected: &[(&[&str], &[&str])] = &[
        (
            &["spectrum", "--monte-carlo"],
            &["spectrum.csv", "spectrum_estimate.csv", "spectrum_vacuum.csv"],
        ),
        (&["capacity"], &["capacity.csv"]),
        (&["synth"], &["psd.csv", "trace.sqzt"]),
        (
            &["fdm-demo"],
            &["crosstalk.csv", "fdm_aligned.csv", "fdm_misaligned.csv"],
        ),
    ];
    for (i, (args, files)) in expected.iter().enumerate() {
        let out_dir = work.path().join(format!("only{i}"));
        let mut full = args.to_vec();
        full.extend_from_slice(&["--config", &cfg, "--out", out_dir.to_str().unwrap()]);
        let out = sqzcomb(work.path(), &full);
        assert_exit(&out, 0, &format!("{args:?}"));
        assert_eq!(sorted_file_names(&out_dir), *files, "{args:?}");
    }

    // fit-gains needs the defaults profile (the small config is explicit).
    let out_dir = work.path().join("fit");
    let out = sqzcomb(
        work.path(),
        &["fit-gains", "--paper-defaults", "--out", out_dir.to_str().unwrap()],
    );
    assert_exit(&out, 0, "fit-gains");
    assert_eq!(sorted_file_names(&out_dir), ["gain_fit.csv"]);

    // Nothing leaked into the working directory alongside the out dirs.
    let leftovers: Vec<String> = sorted_file_names(work.path())
        .into_iter()
        .filter(|name| !name.starts_with("only") && name != "fit")
        .collect();
    assert!(leftovers.is_empty(), "stray files in cwd: {leftovers:?}");
}

#[test]
fn relative_output_dir_resolves_under_the_working_directory() {
    let work = tempfile::tempdir().unwrap();
    let cfg = write_config(work.path(), SMALL_CONFIG);
    let out = sqzcomb(work.path(), &["capacity", "--config", cfg.to_str().unwrap()]);
    assert_exit(&out, 0, "capacity with config output_dir");
    assert!(work.path().join("outrel").join("capacity.csv").is_file());
}

#[test]
fn channels_flag_overrides_the_configured_count() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), SMALL_CONFIG);
    let cfg = path.to_str().unwrap().to_owned();

    let out_dir = dir.path().join("one");
    let out = sqzcomb(
        dir.path(),
        &["fdm-demo", "--config", &cfg, "--channels", "1", "--out", out_dir.to_str().unwrap()],
    );
    assert_exit(&out, 0, "single-channel demo");
    for name in ["fdm_aligned.csv", "fdm_misaligned.csv"] {
        let text = fs::read_to_string(out_dir.join(name)).unwrap();
        assert_eq!(text.lines().count(), 2, "{name}: header plus one row");
    }

    let out = sqzcomb(dir.path(), &["fdm-demo", "--config", &cfg, "--channels", "5"]);
    assert_exit(&out, 2, "more channels than offsets");
    assert!(
        stderr_of(&out).contains("misaligned_offset_bins"),
        "{}",
        stderr_of(&out)
    );
}

#[test]
fn spectrum_csv_has_the_pinned_header_and_uniform_grid() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), SMALL_CONFIG);
    let out_dir = dir.path().join("out");
    let out = sqzcomb(
        dir.path(),
        &["spectrum", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
    );
    assert_exit(&out, 0, "spectrum");

    let text = fs::read_to_string(out_dir.join("spectrum.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("frequency_hz,v_plus_qnl,v_minus_qnl"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 501, "0 to 500 MHz in 1 MHz steps");
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), 3);
        assert_eq!(row[0], k as f64 * 1e6);
        assert!(row[1].is_finite() && row[1] > 0.0, "v_plus at row {k}");
        assert!(row[2].is_finite() && row[2] > 0.0, "v_minus at row {k}");
    }
    // The first tooth is a genuine squeezing dip with antisqueezing opposite.
    assert!(rows[100][2] < 1.0 && rows[100][1] > 1.0, "tooth at 100 MHz");
}

#[test]
fn canonical_config_form_is_idempotent_for_the_small_profile() {
    let cfg = RunConfig::parse(SMALL_CONFIG).unwrap();
    let canon = cfg.to_canonical_toml();
    let reparsed = RunConfig::parse(&canon).unwrap();
    assert_eq!(reparsed, cfg);
    assert_eq!(reparsed.to_canonical_toml(), canon);
}
