//! Photon-flux-constrained channel-capacity calculus.
//!
//! Shannon capacity of a Gaussian channel at the bandwidth limit, mean photon
//! number of a squeezed beam, the photon flux consumed by white versus
//! comb-matched squeezing spectra, the resulting capacities, the coherent
//! baseline, the closed-form optimum squeezing level, and an independent
//! numeric optimizer that double-checks the closed form.
//!
//! Units: photon flux in photons/second, bandwidths in Hz; every capacity
//! formula consumes the dimensionless ratio flux/bandwidth, and capacities
//! are bits per channel use at the bandwidth limit.

use crate::error::{Error, Result};

/// Shannon capacity (1/2) log2(1 + v_signal/v_noise) in bits per use.
pub fn shannon_capacity(v_signal: f64, v_noise: f64) -> Result<f64> {
    if !v_noise.is_finite() || v_noise <= 0.0 {
        return Err(Error::NonPositiveNoise(v_noise));
    }
    if !v_signal.is_finite() || v_signal < 0.0 {
        return Err(Error::NegativeSignal(v_signal));
    }
    Ok(0.5 * (1.0 + v_signal / v_noise).log2())
}

/// Mean photon number per bandwidth per second, (v_plus + v_minus - 2)/4.
///
/// Zero exactly for vacuum; any minimum-uncertainty squeezed state carries
/// photons because v + 1/v >= 2.
pub fn mean_photon_number(v_plus: f64, v_minus: f64) -> Result<f64> {
    for (name, v) in [("v_plus", v_plus), ("v_minus", v_minus)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidParameter {
                name,
                value: v,
                constraint: "finite and non-negative (QNL units)",
            });
        }
    }
    Ok(0.25 * (v_plus + v_minus - 2.0))
}

/// Squeezed noise floor and signal level of the encoded quadrature, in QNL
/// units, for minimum-uncertainty states with phase-quadrature encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Squeezed noise floor, in (0, 1].
    pub v_minus_tilde: f64,
    /// Signal power spectral level, >= 0.
    pub v_signal_tilde: f64,
}

impl NoiseModel {
    pub fn new(v_minus_tilde: f64, v_signal_tilde: f64) -> Result<Self> {
        if !v_minus_tilde.is_finite() || v_minus_tilde <= 0.0 || v_minus_tilde > 1.0 {
            return Err(Error::InvalidParameter {
                name: "v_minus_tilde",
                value: v_minus_tilde,
                constraint: "0 < v <= 1 (QNL units)",
            });
        }
        if !v_signal_tilde.is_finite() || v_signal_tilde < 0.0 {
            return Err(Error::NegativeSignal(v_signal_tilde));
        }
        Ok(Self {
            v_minus_tilde,
            v_signal_tilde,
        })
    }

    /// Noise variance in the encoded quadrature, v_minus + v_signal.
    pub fn encoded_noise(&self) -> f64 {
        self.v_minus_tilde + self.v_signal_tilde
    }

    /// Noise variance in the unencoded quadrature, 1/v_minus.
    pub fn unencoded_noise(&self) -> f64 {
        1.0 / self.v_minus_tilde
    }
}

/// Photon budget of a channel: flux plus analogue and signal bandwidths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxBudget {
    /// Mean photon flux in photons/second.
    pub photon_flux: f64,
    /// Analogue bandwidth of the channel in Hz.
    pub analogue_bandwidth_hz: f64,
    /// Integrated bandwidth consumed by the signaling scheme, in Hz.
    pub signal_bandwidth_hz: f64,
}

impl FluxBudget {
    pub fn new(
        photon_flux: f64,
        analogue_bandwidth_hz: f64,
        signal_bandwidth_hz: f64,
    ) -> Result<Self> {
        if !photon_flux.is_finite() || photon_flux < 0.0 {
            return Err(Error::InvalidParameter {
                name: "photon_flux",
                value: photon_flux,
                constraint: "finite and non-negative (photons/second)",
            });
        }
        check_bandwidths(analogue_bandwidth_hz, signal_bandwidth_hz)?;
        Ok(Self {
            photon_flux,
            analogue_bandwidth_hz,
            signal_bandwidth_hz,
        })
    }
}

fn check_bandwidths(analogue_hz: f64, signal_hz: f64) -> Result<()> {
    if !signal_hz.is_finite()
        || !analogue_hz.is_finite()
        || signal_hz <= 0.0
        || analogue_hz < signal_hz
    {
        return Err(Error::BandwidthOrder {
            signal_hz,
            analogue_hz,
        });
    }
    Ok(())
}

/// Photon flux of a spectrally white squeezing floor carrying a comb signal:
/// (1/4) [B_s v_signal + B (v_minus - 1)^2 / v_minus].
pub fn flux_white(noise: &NoiseModel, analogue_bandwidth_hz: f64, signal_bandwidth_hz: f64) -> Result<f64> {
    check_bandwidths(analogue_bandwidth_hz, signal_bandwidth_hz)?;
    let v = noise.v_minus_tilde;
    Ok(0.25
        * (signal_bandwidth_hz * noise.v_signal_tilde
            + analogue_bandwidth_hz * (v - 1.0).powi(2) / v))
}

/// Photon flux when the squeezing comb matches the signal comb:
/// (1/4) [v_signal + (v_minus - 1)^2 / v_minus] B_s.
pub fn flux_comb(noise: &NoiseModel, signal_bandwidth_hz: f64) -> Result<f64> {
    if !signal_bandwidth_hz.is_finite() || signal_bandwidth_hz <= 0.0 {
        return Err(Error::BandwidthOrder {
            signal_hz: signal_bandwidth_hz,
            analogue_hz: signal_bandwidth_hz,
        });
    }
    let v = noise.v_minus_tilde;
    Ok(0.25 * (noise.v_signal_tilde + (v - 1.0).powi(2) / v) * signal_bandwidth_hz)
}

fn check_flux(flux: f64) -> Result<()> {
    if !flux.is_finite() || flux < 0.0 {
        return Err(Error::InvalidParameter {
            name: "photon_flux",
            value: flux,
            constraint: "finite and non-negative (photons/second)",
        });
    }
    Ok(())
}

/// Capacity of a white-squeezing channel at photon flux `flux`:
/// (1/2) log2[(B B_s + 4 flux^2 + 4 flux B)/(B B_s)].
pub fn c_white(flux: f64, analogue_bandwidth_hz: f64, signal_bandwidth_hz: f64) -> Result<f64> {
    check_flux(flux)?;
    check_bandwidths(analogue_bandwidth_hz, signal_bandwidth_hz)?;
    let bbs = analogue_bandwidth_hz * signal_bandwidth_hz;
    Ok(0.5 * ((bbs + 4.0 * flux * flux + 4.0 * flux * analogue_bandwidth_hz) / bbs).log2())
}

/// Capacity of a comb-matched squeezing channel: log2(1 + 2 flux/B_s).
pub fn c_comb(flux: f64, signal_bandwidth_hz: f64) -> Result<f64> {
    check_flux(flux)?;
    if !signal_bandwidth_hz.is_finite() || signal_bandwidth_hz <= 0.0 {
        return Err(Error::BandwidthOrder {
            signal_hz: signal_bandwidth_hz,
            analogue_hz: signal_bandwidth_hz,
        });
    }
    Ok((1.0 + 2.0 * flux / signal_bandwidth_hz).log2())
}

/// Coherent-state baseline with homodyne detection:
/// log2(sqrt(1 + 4 flux/B_s)).
pub fn c_coherent(flux: f64, signal_bandwidth_hz: f64) -> Result<f64> {
    check_flux(flux)?;
    if !signal_bandwidth_hz.is_finite() || signal_bandwidth_hz <= 0.0 {
        return Err(Error::BandwidthOrder {
            signal_hz: signal_bandwidth_hz,
            analogue_hz: signal_bandwidth_hz,
        });
    }
    Ok(0.5 * (1.0 + 4.0 * flux / signal_bandwidth_hz).log2())
}

/// Closed-form optimum squeezing level and the SNR it affords.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezingOptimum {
    /// Optimal squeezed floor v_opt = B_s/(B_s + 2 flux), in (0, 1].
    pub v_opt: f64,
    /// Maximum SNR 4 (flux^2 + flux B_s)/B_s^2 at that floor.
    pub snr_opt: f64,
}

/// Optimum squeezing for a comb-matched channel at the given flux.
pub fn optimal_squeezing(flux: f64, signal_bandwidth_hz: f64) -> Result<SqueezingOptimum> {
    check_flux(flux)?;
    if !signal_bandwidth_hz.is_finite() || signal_bandwidth_hz <= 0.0 {
        return Err(Error::BandwidthOrder {
            signal_hz: signal_bandwidth_hz,
            analogue_hz: signal_bandwidth_hz,
        });
    }
    let bs = signal_bandwidth_hz;
    Ok(SqueezingOptimum {
        v_opt: bs / (bs + 2.0 * flux),
        snr_opt: 4.0 * (flux * flux + flux * bs) / (bs * bs),
    })
}

/// Signal level that spends exactly `flux` at squeezed floor `v_minus`,
/// from inverting the comb flux: v_signal = 4 flux/B_s - (v - 1)^2 / v.
/// Negative values mean the floor cannot be afforded at this flux.
pub fn invert_flux_comb(flux: f64, signal_bandwidth_hz: f64, v_minus: f64) -> f64 {
    4.0 * flux / signal_bandwidth_hz - (v_minus - 1.0).powi(2) / v_minus
}

/// Numeric maximizer found by [`optimize_comb_numeric`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombOptimum {
    pub v_best: f64,
    pub snr_best: f64,
    pub c_best: f64,
}

const OPTIMIZER_GRID_POINTS: usize = 2000;
const OPTIMIZER_INTERVAL_TOLERANCE: f64 = 1e-10;

/// Independent numeric verification of the comb-channel optimum.
///
/// Deterministic grid search over the squeezed floor in (0, 1] (signal level
/// fixed by flux inversion, infeasible floors skipped) followed by
/// golden-section refinement of the bracketing interval.
pub fn optimize_comb_numeric(flux: f64, signal_bandwidth_hz: f64) -> Result<CombOptimum> {
    if !flux.is_finite() || flux <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "photon_flux",
            value: flux,
            constraint: "finite and positive for numeric optimization",
        });
    }
    if !signal_bandwidth_hz.is_finite() || signal_bandwidth_hz <= 0.0 {
        return Err(Error::BandwidthOrder {
            signal_hz: signal_bandwidth_hz,
            analogue_hz: signal_bandwidth_hz,
        });
    }

    let capacity_at = |v: f64| -> Option<f64> {
        let v_signal = invert_flux_comb(flux, signal_bandwidth_hz, v);
        if v_signal < 0.0 {
            return None;
        }
        Some(0.5 * (1.0 + v_signal / v).log2())
    };

    let grid_value = |i: usize| i as f64 / OPTIMIZER_GRID_POINTS as f64;
    let mut best: Option<(usize, f64)> = None;
    for i in 1..=OPTIMIZER_GRID_POINTS {
        if let Some(c) = capacity_at(grid_value(i)) {
            if best.map_or(true, |(_, c_best)| c > c_best) {
                best = Some((i, c));
            }
        }
    }
    let (i_best, _) = best.ok_or(Error::InfeasibleFlux { flux })?;

    // Floors below 1/(x + sqrt(x^2 - 1)) with x = 1 + 2 flux/B_s cannot be
    // afforded (negative implied signal), so clamp the bracket to the
    // feasible interval before refining; the stable reciprocal form avoids
    // cancellation at large flux.
    let x = 1.0 + 2.0 * flux / signal_bandwidth_hz;
    let v_feasible_min = 1.0 / (x + (x * x - 1.0).sqrt());

    // Golden-section refinement on the bracketing interval; infeasible
    // evaluations from float rounding at the edge count as negative infinity.
    let eval = |v: f64| capacity_at(v).unwrap_or(f64::NEG_INFINITY);
    let mut lo = if i_best > 1 {
        grid_value(i_best - 1)
    } else {
        0.0
    }
    .max(v_feasible_min);
    let mut hi = grid_value((i_best + 1).min(OPTIMIZER_GRID_POINTS));
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    while hi - lo > OPTIMIZER_INTERVAL_TOLERANCE {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = eval(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = eval(x1);
        }
    }
    let v_best = if f1 >= f2 { x1 } else { x2 };
    let c_best = eval(v_best);
    let snr_best = invert_flux_comb(flux, signal_bandwidth_hz, v_best).max(0.0) / v_best;
    Ok(CombOptimum {
        v_best,
        snr_best,
        c_best,
    })
}

/// Side-by-side capacities and the squeezing optimum for one flux budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityReport {
    /// Comb-matched squeezing capacity, bits/use.
    pub c_comb: f64,
    /// White-squeezing capacity, bits/use.
    pub c_white: f64,
    /// Coherent-state homodyne baseline, bits/use.
    pub c_coherent: f64,
    /// Optimal squeezed floor for the comb channel, QNL units.
    pub v_opt: f64,
    /// SNR at the optimal floor.
    pub snr_opt: f64,
    /// Aggregate rate c_comb * B_s in bits/second.
    pub bit_rate: f64,
}

/// Evaluate all capacities for one budget; always satisfies
/// c_comb >= c_white >= c_coherent.
pub fn capacity_report(budget: &FluxBudget) -> Result<CapacityReport> {
    let flux = budget.photon_flux;
    let b = budget.analogue_bandwidth_hz;
    let bs = budget.signal_bandwidth_hz;
    let optimum = optimal_squeezing(flux, bs)?;
    Ok(CapacityReport {
        c_comb: c_comb(flux, bs)?,
        c_white: c_white(flux, b, bs)?,
        c_coherent: c_coherent(flux, bs)?,
        v_opt: optimum.v_opt,
        snr_opt: optimum.snr_opt,
        bit_rate: c_comb(flux, bs)? * bs,
    })
}
