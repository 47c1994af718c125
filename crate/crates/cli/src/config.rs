//! Strict run configuration: one TOML file drives every subcommand.
//!
//! Unknown keys are rejected and mutually exclusive keys are diagnosed by
//! name, so a config typo cannot silently change an experiment. The
//! canonical form produced by [`RunConfig::to_canonical_toml`] parses back
//! to the same value.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sqzcomb_core::{AveragingMode, FluxBudget, OpoParams, Quadrature, TraceConfig};

/// Configuration failure; the message names the offending key or table.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory all output files are written into (created on demand).
    pub output_dir: String,
    pub opo: OpoSection,
    pub trace: TraceSection,
    pub detector: DetectorSection,
    pub spectrum: SpectrumSection,
    pub capacity: CapacitySection,
    pub plan: PlanSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpoSection {
    /// Free spectral range in Hz; exclusive with `round_trip_time_s`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fsr_hz: Option<f64>,
    /// Cavity round-trip time in seconds; exclusive with `fsr_hz`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round_trip_time_s: Option<f64>,
    pub input_transmission: f64,
    /// Explicit pump parameters; exclusive with `[opo.gain_fit]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intracavity_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonlinear_rate_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_fit: Option<GainFitSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainFitSection {
    pub amplification_db: f64,
    pub deamplification_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureName {
    Amplitude,
    Phase,
}

impl From<QuadratureName> for Quadrature {
    fn from(name: QuadratureName) -> Self {
        match name {
            QuadratureName::Amplitude => Quadrature::Amplitude,
            QuadratureName::Phase => Quadrature::Phase,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AveragingName {
    Power,
    Magnitude,
}

impl From<AveragingName> for AveragingMode {
    fn from(name: AveragingName) -> Self {
        match name {
            AveragingName::Power => AveragingMode::Power,
            AveragingName::Magnitude => AveragingMode::Magnitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSection {
    pub sample_rate_hz: f64,
    pub segment_length: usize,
    pub segment_count: usize,
    pub rng_seed: u64,
    pub quadrature: QuadratureName,
    pub averaging_mode: AveragingName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    /// Homodyne analogue bandwidth in Hz; omit for an ideal detector.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analogue_bandwidth_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub max_frequency_hz: f64,
    pub frequency_step_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySection {
    pub photon_flux: f64,
    pub analogue_bandwidth_hz: f64,
    pub signal_bandwidth_hz: f64,
    /// Optional flux sweep written next to the point report.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub max_photon_flux: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub n_channels: usize,
    pub guard_band_hz: f64,
    pub subband_width_bins: usize,
    pub floor_bins_per_side: usize,
    /// Per-channel misalignment in DFT bins (scaled by the bin width of the
    /// trace config) for the deliberately detuned comparison run.
    pub misaligned_offset_bins: Vec<f64>,
    #[serde(default)]
    pub write_crosstalk: bool,
}

/// The in-repo defaults profile: bin-aligned desk-scale sampling with the
/// cavity calibrated from its published parametric gains.
pub const PAPER_DEFAULTS: &str = include_str!("../configs/paper_defaults.toml");

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn paper_defaults() -> Self {
        Self::parse(PAPER_DEFAULTS).expect("shipped defaults must parse")
    }

    /// Canonical serialized form; parsing it back yields an equal value.
    pub fn to_canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Cross-key validation beyond what each constituent type checks.
    fn validate(&self) -> Result<(), ConfigError> {
        let opo = &self.opo;
        match (opo.fsr_hz, opo.round_trip_time_s) {
            (Some(_), Some(_)) => {
                return Err(ConfigError(
                    "[opo] fsr_hz and round_trip_time_s are mutually exclusive".into(),
                ))
            }
            (None, None) => {
                return Err(ConfigError(
                    "[opo] needs either fsr_hz or round_trip_time_s".into(),
                ))
            }
            _ => {}
        }
        let explicit = opo.intracavity_loss.is_some() || opo.nonlinear_rate_hz.is_some();
        match (&opo.gain_fit, explicit) {
            (Some(_), true) => {
                return Err(ConfigError(
                    "[opo.gain_fit] is mutually exclusive with intracavity_loss and \
                     nonlinear_rate_hz"
                        .into(),
                ))
            }
            (None, _) if opo.intracavity_loss.is_none() || opo.nonlinear_rate_hz.is_none() => {
                return Err(ConfigError(
                    "[opo] needs both intracavity_loss and nonlinear_rate_hz, or an \
                     [opo.gain_fit] table"
                        .into(),
                ))
            }
            _ => {}
        }
        if self.plan.misaligned_offset_bins.len() < self.plan.n_channels {
            return Err(ConfigError(format!(
                "[plan] misaligned_offset_bins lists {} offsets for n_channels = {}",
                self.plan.misaligned_offset_bins.len(),
                self.plan.n_channels
            )));
        }
        if self.plan.n_channels == 0 {
            return Err(ConfigError("[plan] n_channels must be at least 1".into()));
        }

        // Re-validate the invariants of every constituent type now, so a bad
        // value is diagnosed at load time under its key, not mid-run.
        self.build_opo()?;
        let trace = self.build_trace(None)?;
        if let Some(bw) = self.detector.analogue_bandwidth_hz {
            if !bw.is_finite() || bw <= 0.0 || bw >= trace.nyquist_hz() {
                return Err(ConfigError(format!(
                    "[detector] analogue_bandwidth_hz = {bw} must be positive and below the \
                     Nyquist frequency {}",
                    trace.nyquist_hz()
                )));
            }
        }

        let spectrum = &self.spectrum;
        if !spectrum.frequency_step_hz.is_finite() || spectrum.frequency_step_hz <= 0.0 {
            return Err(ConfigError(
                "[spectrum] frequency_step_hz must be finite and positive".into(),
            ));
        }
        if !spectrum.max_frequency_hz.is_finite()
            || spectrum.max_frequency_hz < spectrum.frequency_step_hz
        {
            return Err(ConfigError(
                "[spectrum] max_frequency_hz must be finite and at least frequency_step_hz"
                    .into(),
            ));
        }
        if spectrum.max_frequency_hz / spectrum.frequency_step_hz > 1e7 {
            return Err(ConfigError(
                "[spectrum] grid would exceed 1e7 points; raise frequency_step_hz".into(),
            ));
        }

        let cap = &self.capacity;
        FluxBudget::new(
            cap.photon_flux,
            cap.analogue_bandwidth_hz,
            cap.signal_bandwidth_hz,
        )
        .map_err(|e| ConfigError(format!("[capacity] {e}")))?;
        if let Some(sweep) = &cap.sweep {
            if sweep.points < 2 {
                return Err(ConfigError(
                    "[capacity.sweep] points must be at least 2".into(),
                ));
            }
            if !sweep.max_photon_flux.is_finite() || sweep.max_photon_flux <= 0.0 {
                return Err(ConfigError(
                    "[capacity.sweep] max_photon_flux must be finite and positive".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn round_trip_time_s(&self) -> f64 {
        match (self.opo.fsr_hz, self.opo.round_trip_time_s) {
            (Some(fsr), None) => 1.0 / fsr,
            (None, Some(tau)) => tau,
            _ => unreachable!("validated on load"),
        }
    }

    pub fn build_opo(&self) -> Result<OpoParams, ConfigError> {
        let tau = self.round_trip_time_s();
        let t = self.opo.input_transmission;
        let built = match &self.opo.gain_fit {
            Some(fit) => {
                OpoParams::fit_gains(fit.amplification_db, fit.deamplification_db, t, tau)
            }
            None => OpoParams::new(
                tau,
                t,
                self.opo.intracavity_loss.expect("validated on load"),
                self.opo.nonlinear_rate_hz.expect("validated on load"),
            ),
        };
        built.map_err(|e| ConfigError(format!("[opo] {e}")))
    }

    pub fn build_trace(&self, seed_override: Option<u64>) -> Result<TraceConfig, ConfigError> {
        TraceConfig::new(
            self.trace.sample_rate_hz,
            self.trace.segment_length,
            self.trace.segment_count,
            seed_override.unwrap_or(self.trace.rng_seed),
            self.trace.quadrature.into(),
        )
        .map_err(|e| ConfigError(format!("[trace] {e}")))
    }
}
