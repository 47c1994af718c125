//! Shared fixtures for the criterion benches.

use sqzcomb_core::{OpoParams, Quadrature, TraceConfig};

/// Desk-scale comb spacing: 815 bins of 1 GS/s / 4096.
pub const DESK_FSR_HZ: f64 = 198_974_609.375;

/// Squeezer with desk-scale FSR, mid-range pump.
pub fn desk_params() -> OpoParams {
    let tau = 1.0 / DESK_FSR_HZ;
    let t = 0.05;
    let l = 0.016;
    let kappa = (t + l) / tau;
    OpoParams::new(tau, t, l, 0.6 * kappa).expect("valid desk parameters")
}

/// Desk-scale sampling: 1 GS/s, 4096-sample segments.
pub fn desk_trace_config(segments: usize) -> TraceConfig {
    TraceConfig::new(1e9, 4096, segments, 7, Quadrature::Phase).expect("valid desk trace config")
}
