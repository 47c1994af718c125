use thiserror::Error;

/// Errors produced by spectrum, capacity, synthesis and link operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {name} = {value} must satisfy {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("above threshold: nonlinear rate {chi} 1/s must stay below cavity decay rate {kappa} 1/s")]
    AboveThreshold { chi: f64, kappa: f64 },

    #[error("frequency grid is empty")]
    EmptyGrid,

    #[error("frequency grid must be ascending and non-negative (offending index {index})")]
    GridNotAscending { index: usize },

    #[error(
        "no sub-threshold cavity (chi < kappa, loss <= 0.5) reproduces gains \
         {amp_gain_db} dB / {deamp_gain_db} dB"
    )]
    GainFitInfeasible { amp_gain_db: f64, deamp_gain_db: f64 },

    #[error("gain fit stalled at residual {residual:.3e} after {iterations} iterations")]
    GainFitDiverged { residual: f64, iterations: usize },

    #[error("noise variance must be positive, got {0}")]
    NonPositiveNoise(f64),

    #[error("signal variance must be non-negative, got {0}")]
    NegativeSignal(f64),

    #[error("bandwidths must satisfy 0 < signal <= analogue, got signal {signal_hz} Hz, analogue {analogue_hz} Hz")]
    BandwidthOrder { signal_hz: f64, analogue_hz: f64 },

    #[error("photon flux {flux} is not attainable by any squeezing level in (0, 1]")]
    InfeasibleFlux { flux: f64 },

    #[error("segment length {0} must be a power of two of at least 64 samples")]
    BadSegmentLength(usize),

    #[error("synthesis target grid must equal the DFT bin grid of the trace config")]
    TargetGridMismatch,

    #[error("trace length {length} is not divisible by segment length {segment_length}")]
    TraceNotSegmentable { length: usize, segment_length: usize },

    #[error("carrier {carrier_hz} Hz must lie below the Nyquist frequency {nyquist_hz} Hz")]
    CarrierAboveNyquist { carrier_hz: f64, nyquist_hz: f64 },

    #[error("analogue bandwidth {bandwidth_hz} Hz must be positive and at most the Nyquist frequency {nyquist_hz} Hz")]
    BandwidthAboveNyquist { bandwidth_hz: f64, nyquist_hz: f64 },

    #[error("operation requires a phase-quadrature trace, got an amplitude-quadrature trace")]
    PhaseQuadratureRequired,

    #[error("spectrum estimates disagree in {what}")]
    EstimateMismatch { what: &'static str },

    #[error("reference spectrum is zero at bin {index}")]
    ZeroReferenceBin { index: usize },

    #[error("channel plan: {0}")]
    InvalidPlan(String),

    #[error("sub-band at {center_hz} Hz (width {width_hz} Hz) falls outside the estimated spectrum")]
    BandOutsideSpectrum { center_hz: f64, width_hz: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
