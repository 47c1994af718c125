//! Command-line front end for the squeezing-comb FDM toolkit.
//!
//! One TOML configuration drives every subcommand; flags override individual
//! values. All randomness is seeded, so reruns with the same config and seed
//! produce byte-identical files and stdout regardless of worker-thread
//! count.
//!
//! Exit codes: 0 on success, 1 for runtime failures (I/O, numerics), 2 for
//! configuration and usage errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sqzcomb_core::{
    averaged_psd, calibrate_amplitudes, calibrate_qnl, capacity_report, crosstalk_matrix,
    design_plan, homodyne_detect, run_link, squeezing_minima, synthesize_trace, FluxBudget,
    LinkConfig, OpoParams, PlanSpec, Quadrature, QuadratureSpectrum, SubbandMeasurement,
};

use sqzcomb_cli::config::{ConfigError, RunConfig};
use sqzcomb_cli::outputs::{csv_text, OutputDir};
use sqzcomb_cli::trace_io;

#[derive(Parser)]
#[command(
    name = "sqzcomb",
    version,
    about = "Squeezing-comb spectra, channel capacities and FDM link demos"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "FILE", conflicts_with = "paper_defaults")]
    config: Option<PathBuf>,

    /// Use the built-in defaults profile instead of a config file.
    #[arg(long)]
    paper_defaults: bool,

    /// Override the configured RNG seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the configured output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the analytic comb spectrum; optionally estimate it by Monte Carlo.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Also synthesize a trace and write the estimated spectrum with its
        /// paired vacuum reference.
        #[arg(long)]
        monte_carlo: bool,
    },
    /// Channel capacities under the configured photon-flux budget.
    Capacity {
        #[command(flatten)]
        common: Common,
    },
    /// Synthesize a quadrature trace; write it in binary with its averaged
    /// spectrum.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Run comb-aligned and misaligned FDM links on the same noise
    /// realization and compare sub-band SNRs and capacities.
    FdmDemo {
        #[command(flatten)]
        common: Common,
        /// Override the configured channel count.
        #[arg(long)]
        channels: Option<usize>,
    },
    /// Fit pump rate and intracavity loss from measured parametric gains.
    FitGains {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    /// Configuration or usage problem; exits 2.
    #[error("{0}")]
    Config(String),
    /// Failure while executing a valid configuration; exits 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<sqzcomb_core::Error> for CliError {
    fn from(e: sqzcomb_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    // Restore default SIGPIPE behavior so `sqzcomb ... | head` dies quietly
    // instead of panicking on a closed stdout.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }

    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Spectrum {
            common,
            monte_carlo,
        } => {
            let (cfg, out) = setup(&common)?;
            cmd_spectrum(&cfg, &out, common.seed, monte_carlo)
        }
        Command::Capacity { common } => {
            let (cfg, out) = setup(&common)?;
            cmd_capacity(&cfg, &out)
        }
        Command::Synth { common } => {
            let (cfg, out) = setup(&common)?;
            cmd_synth(&cfg, &out, common.seed)
        }
        Command::FdmDemo { common, channels } => {
            let (cfg, out) = setup(&common)?;
            cmd_fdm_demo(&cfg, &out, common.seed, channels)
        }
        Command::FitGains { common } => {
            let (cfg, out) = setup(&common)?;
            cmd_fit_gains(&cfg, &out)
        }
    }
}

fn setup(common: &Common) -> Result<(RunConfig, OutputDir), CliError> {
    let mut cfg = match (&common.config, common.paper_defaults) {
        (Some(path), false) => RunConfig::load(path)?,
        (None, true) => RunConfig::paper_defaults(),
        (None, false) => {
            return Err(CliError::Config(
                "pass --config <FILE> or --paper-defaults".into(),
            ))
        }
        (Some(_), true) => unreachable!("clap rejects --config with --paper-defaults"),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    let out = OutputDir::create(cfg.output_dir.as_ref())
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", cfg.output_dir)))?;
    Ok((cfg, out))
}

/// Analytic spectrum grid from the `[spectrum]` section: 0 to the maximum
/// frequency in uniform steps.
fn spectrum_grid(cfg: &RunConfig) -> Vec<f64> {
    let step = cfg.spectrum.frequency_step_hz;
    let n = (cfg.spectrum.max_frequency_hz / step).floor() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

fn cmd_spectrum(
    cfg: &RunConfig,
    out: &OutputDir,
    seed: Option<u64>,
    monte_carlo: bool,
) -> Result<(), CliError> {
    let params = cfg.build_opo()?;
    let grid = spectrum_grid(cfg);
    let spectrum = params
        .comb_spectrum(&grid)
        .map_err(|e| CliError::Config(format!("[spectrum] {e}")))?;

    let rows = (0..spectrum.len())
        .map(|i| format!("{},{},{}", grid[i], spectrum.v_plus[i], spectrum.v_minus[i]));
    out.write_text(
        "spectrum.csv",
        &csv_text("frequency_hz,v_plus_qnl,v_minus_qnl", rows),
    )?;
    let minima = squeezing_minima(&spectrum);
    println!(
        "wrote spectrum.csv: {} points, {} squeezing minima up to {} Hz",
        grid.len(),
        minima.len(),
        cfg.spectrum.max_frequency_hz
    );

    if monte_carlo {
        let trace_cfg = cfg.build_trace(seed)?;
        let bins = trace_cfg.bin_frequencies();
        let target = params.comb_spectrum(&bins)?;
        let unit = QuadratureSpectrum::unit(bins)?;
        let mode = cfg.trace.averaging_mode.into();

        let signal = synthesize_trace(&target, &trace_cfg)?;
        let vacuum = synthesize_trace(&unit, &trace_cfg)?;
        let signal_psd = averaged_psd(&signal, trace_cfg.segment_length, mode)?;
        let vacuum_psd = averaged_psd(&vacuum, trace_cfg.segment_length, mode)?;
        let calibrated = calibrate_qnl(&signal_psd, &vacuum_psd)?;

        let estimate_rows = calibrated
            .frequencies
            .iter()
            .zip(&calibrated.power)
            .map(|(f, p)| format!("{f},{p}"));
        out.write_text(
            "spectrum_estimate.csv",
            &csv_text("frequency_hz,power_qnl", estimate_rows),
        )?;
        let vacuum_rows = vacuum_psd
            .frequencies
            .iter()
            .zip(&vacuum_psd.power)
            .map(|(f, p)| format!("{f},{p}"));
        out.write_text(
            "spectrum_vacuum.csv",
            &csv_text("frequency_hz,power_qnl", vacuum_rows),
        )?;
        println!(
            "wrote spectrum_estimate.csv and spectrum_vacuum.csv: {} segments averaged",
            calibrated.segments_averaged
        );
    }
    Ok(())
}

fn cmd_capacity(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let cap = &cfg.capacity;
    let budget = FluxBudget::new(
        cap.photon_flux,
        cap.analogue_bandwidth_hz,
        cap.signal_bandwidth_hz,
    )
    .map_err(|e| CliError::Config(format!("[capacity] {e}")))?;
    let report = capacity_report(&budget)?;

    println!("photon_flux: {} photons/s", cap.photon_flux);
    println!("analogue_bandwidth_hz: {}", cap.analogue_bandwidth_hz);
    println!("signal_bandwidth_hz: {}", cap.signal_bandwidth_hz);
    println!("c_comb: {} bits/use", report.c_comb);
    println!("c_white: {} bits/use", report.c_white);
    println!("c_coherent: {} bits/use", report.c_coherent);
    println!("v_opt: {} QNL", report.v_opt);
    println!("snr_opt: {}", report.snr_opt);
    println!("bit_rate: {} bits/s", report.bit_rate);

    let row = format!(
        "{},{},{},{},{},{},{},{},{}",
        cap.photon_flux,
        cap.analogue_bandwidth_hz,
        cap.signal_bandwidth_hz,
        report.c_comb,
        report.c_white,
        report.c_coherent,
        report.v_opt,
        report.snr_opt,
        report.bit_rate
    );
    out.write_text(
        "capacity.csv",
        &csv_text(
            "photon_flux,analogue_bandwidth_hz,signal_bandwidth_hz,c_comb,c_white,c_coherent,\
             v_opt,snr_opt,bit_rate",
            [row],
        ),
    )?;

    if let Some(sweep) = &cap.sweep {
        let mut rows = Vec::with_capacity(sweep.points);
        for i in 0..sweep.points {
            let flux = sweep.max_photon_flux * i as f64 / (sweep.points - 1) as f64;
            let budget = FluxBudget::new(flux, cap.analogue_bandwidth_hz, cap.signal_bandwidth_hz)
                .map_err(|e| CliError::Config(format!("[capacity.sweep] {e}")))?;
            let r = capacity_report(&budget)?;
            rows.push(format!(
                "{},{},{},{},{}",
                flux, r.c_comb, r.c_white, r.c_coherent, r.v_opt
            ));
        }
        out.write_text(
            "capacity_sweep.csv",
            &csv_text("photon_flux,c_comb,c_white,c_coherent,v_opt", rows),
        )?;
        println!("wrote capacity_sweep.csv: {} flux points", sweep.points);
    }
    Ok(())
}

fn quadrature_name(quadrature: Quadrature) -> &'static str {
    match quadrature {
        Quadrature::Amplitude => "amplitude",
        Quadrature::Phase => "phase",
    }
}

fn cmd_synth(cfg: &RunConfig, out: &OutputDir, seed: Option<u64>) -> Result<(), CliError> {
    let params = cfg.build_opo()?;
    let trace_cfg = cfg.build_trace(seed)?;
    let target = params.comb_spectrum(&trace_cfg.bin_frequencies())?;

    let mut trace = synthesize_trace(&target, &trace_cfg)?;
    if let Some(bw) = cfg.detector.analogue_bandwidth_hz {
        trace = homodyne_detect(&trace, bw)
            .map_err(|e| CliError::Config(format!("[detector] {e}")))?;
    }

    trace_io::write_trace(&out.path("trace.sqzt"), &trace)?;
    let psd = averaged_psd(&trace, trace_cfg.segment_length, cfg.trace.averaging_mode.into())?;
    let rows = psd
        .frequencies
        .iter()
        .zip(&psd.power)
        .map(|(f, p)| format!("{f},{p}"));
    out.write_text("psd.csv", &csv_text("frequency_hz,power_qnl", rows))?;

    println!(
        "wrote trace.sqzt: {} samples at {} Hz, {} quadrature",
        trace.len(),
        trace.sample_rate_hz,
        quadrature_name(trace.quadrature)
    );
    println!(
        "wrote psd.csv: {} bins, {} segments averaged, sample variance {}",
        psd.len(),
        psd.segments_averaged,
        trace.sample_variance()
    );
    Ok(())
}

fn measurement_rows(measurements: &[SubbandMeasurement]) -> Vec<String> {
    measurements
        .iter()
        .map(|m| {
            format!(
                "{},{},{},{},{}",
                m.center_hz, m.signal_power, m.noise_floor, m.snr, m.capacity_bits
            )
        })
        .collect()
}

const MEASUREMENT_HEADER: &str = "band_center_hz,signal_power,noise_floor,snr,capacity_bits";

fn cmd_fdm_demo(
    cfg: &RunConfig,
    out: &OutputDir,
    seed: Option<u64>,
    channels: Option<usize>,
) -> Result<(), CliError> {
    let params = cfg.build_opo()?;
    let trace_cfg = cfg.build_trace(seed)?;
    let plan_cfg = &cfg.plan;
    let n = channels.unwrap_or(plan_cfg.n_channels);
    if plan_cfg.misaligned_offset_bins.len() < n {
        return Err(CliError::Config(format!(
            "[plan] misaligned_offset_bins lists {} offsets for {} channels",
            plan_cfg.misaligned_offset_bins.len(),
            n
        )));
    }

    let bin_hz = trace_cfg.bin_width_hz();
    let offsets_hz = plan_cfg.misaligned_offset_bins[..n]
        .iter()
        .map(|bins| bins * bin_hz)
        .collect();
    let mut aligned_spec = PlanSpec::comb_aligned(n, plan_cfg.guard_band_hz);
    aligned_spec.subband_width_bins = plan_cfg.subband_width_bins;
    let mut misaligned_spec = PlanSpec::with_offsets(n, plan_cfg.guard_band_hz, offsets_hz);
    misaligned_spec.subband_width_bins = plan_cfg.subband_width_bins;

    let to_config_error = |e: sqzcomb_core::Error| CliError::Config(format!("[plan] {e}"));
    let aligned_plan = design_plan(&params, &aligned_spec, &trace_cfg).map_err(to_config_error)?;
    let misaligned_plan =
        design_plan(&params, &misaligned_spec, &trace_cfg).map_err(to_config_error)?;

    let link = LinkConfig {
        trace: trace_cfg,
        analogue_bandwidth_hz: cfg.detector.analogue_bandwidth_hz,
        floor_bins_per_side: plan_cfg.floor_bins_per_side,
    };

    // Carrier amplitudes are calibrated for unit SNR against the misaligned
    // floor; the aligned run reuses them, so any gain it shows comes from
    // riding the squeezing teeth. Both runs share the seed and therefore the
    // noise realization.
    let amplitudes = calibrate_amplitudes(&params, &misaligned_plan, &link)?;
    let aligned = run_link(&params, &aligned_plan, &amplitudes, &link)?;
    let misaligned = run_link(&params, &misaligned_plan, &amplitudes, &link)?;

    out.write_text(
        "fdm_aligned.csv",
        &csv_text(MEASUREMENT_HEADER, measurement_rows(&aligned)),
    )?;
    out.write_text(
        "fdm_misaligned.csv",
        &csv_text(MEASUREMENT_HEADER, measurement_rows(&misaligned)),
    )?;

    for (i, (a, m)) in aligned.iter().zip(&misaligned).enumerate() {
        println!(
            "channel {i}: aligned snr {} ({} bits/use) | misaligned snr {} ({} bits/use)",
            a.snr, a.capacity_bits, m.snr, m.capacity_bits
        );
    }
    let mean = |ms: &[SubbandMeasurement]| {
        ms.iter().map(|m| m.capacity_bits).sum::<f64>() / ms.len() as f64
    };
    println!(
        "aligned mean capacity {} bits/use vs misaligned {} bits/use over {} channels",
        mean(&aligned),
        mean(&misaligned),
        n
    );

    if plan_cfg.write_crosstalk {
        let matrix = crosstalk_matrix(&params, &aligned_plan, &amplitudes, &link)?;
        let rows = matrix
            .entries
            .iter()
            .map(|row| {
                row.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>();
        let header: String = (0..n)
            .map(|j| format!("into_channel_{j}"))
            .collect::<Vec<_>>()
            .join(",");
        out.write_text("crosstalk.csv", &csv_text(&header, rows))?;
        println!("wrote crosstalk.csv: {n} x {n} power matrix");
    }
    Ok(())
}

fn cmd_fit_gains(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let fit = cfg.opo.gain_fit.as_ref().ok_or_else(|| {
        CliError::Config("[opo.gain_fit] table required for fit-gains".into())
    })?;
    let tau = cfg.round_trip_time_s();
    let t = cfg.opo.input_transmission;
    let params = OpoParams::fit_gains(fit.amplification_db, fit.deamplification_db, t, tau)
        .map_err(|e| CliError::Config(format!("[opo.gain_fit] {e}")))?;

    let (amplification_db, deamplification_db) = params.forward_gains();
    let chi_over_kappa = params.nonlinear_rate() / params.kappa();
    let escape_efficiency = params.kappa_in() / params.kappa();

    println!("amplification_db: {amplification_db}");
    println!("deamplification_db: {deamplification_db}");
    println!("nonlinear_rate_hz: {}", params.nonlinear_rate());
    println!("intracavity_loss: {}", params.intracavity_loss());
    println!("chi_over_kappa: {chi_over_kappa}");
    println!("escape_efficiency: {escape_efficiency}");

    let row = format!(
        "{},{},{},{},{},{},{},{}",
        fit.amplification_db,
        fit.deamplification_db,
        t,
        tau,
        params.nonlinear_rate(),
        params.intracavity_loss(),
        chi_over_kappa,
        escape_efficiency
    );
    out.write_text(
        "gain_fit.csv",
        &csv_text(
            "amplification_db,deamplification_db,input_transmission,round_trip_time_s,\
             nonlinear_rate_hz,intracavity_loss,chi_over_kappa,escape_efficiency",
            [row],
        ),
    )?;
    Ok(())
}
