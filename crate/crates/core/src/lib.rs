//! Squeezing-comb FDM toolkit.
//!
//! Models a below-threshold optical parametric oscillator whose output
//! spectrum is a periodic comb of squeezing teeth, computes the information
//! capacity of Gaussian channels built on that comb, synthesizes
//! time-domain quadrature traces for Monte Carlo experiments, and simulates
//! frequency-division-multiplexed links whose carriers ride the teeth.
//!
//! The crate splits into four layers:
//!
//! - [`opo`]: closed-form cavity transfer functions, the squeezing comb,
//!   and calibration of the pump rate and intracavity loss from measured
//!   parametric gains;
//! - [`capacity`]: Shannon capacities under a photon-flux budget for
//!   comb-matched, white and coherent signaling, with the optimal squeezing
//!   level;
//! - [`trace`]: spectrally shaped Gaussian trace synthesis, carrier
//!   encoding, a bandwidth-limited detector model, and segment-averaged
//!   spectral estimation with quantum-noise-limit calibration;
//! - [`fdm`]: channel planning on the comb and end-to-end link runs
//!   measuring per-sub-band SNR, capacity and crosstalk.
//!
//! All spectra are normalised to the quantum noise limit (vacuum variance
//! of 1) and all randomness is reproducible: a seed fully determines every
//! trace and estimate, independent of thread count.

pub mod capacity;
pub mod error;
pub mod fdm;
mod filter;
pub mod opo;
pub mod trace;

pub use error::{Error, Result};

pub use opo::{
    squeezing_minima, OpoParams, Quadrature, QuadratureSpectrum, TransferCoefficients,
};

pub use capacity::{
    c_coherent, c_comb, c_white, capacity_report, flux_comb, flux_white, invert_flux_comb,
    mean_photon_number, optimal_squeezing, optimize_comb_numeric, shannon_capacity,
    CapacityReport, CombOptimum, FluxBudget, NoiseModel, SqueezingOptimum,
};

pub use trace::{
    averaged_psd, bin_frequencies, calibrate_qnl, encode_fdm, homodyne_detect, synthesize_trace,
    AveragingMode, SpectrumEstimate, Tone, Trace, TraceConfig,
};

pub use fdm::{
    calibrate_amplitudes, crosstalk_matrix, design_plan, measure_subband, run_link,
    run_link_spectra, ChannelPlan, CrosstalkMatrix, LinkConfig, LinkSpectra, PlanAlignment,
    PlanSpec, Subband, SubbandMeasurement,
};

pub use filter::FirFilter;
