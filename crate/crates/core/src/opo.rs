//! Analytic model of a sub-threshold OPO output: the squeezing comb.
//!
//! A two-port cavity (input coupler transmission `T`, round-trip loss `L`,
//! round-trip time `tau`) pumped below threshold maps two independent vacuum
//! inputs (the input port and the loss port) onto each output quadrature.
//! Output variances normalised to the quantum noise limit are the summed
//! squared magnitudes of the two transfer coefficients; squeezing resonances
//! repeat at every multiple of the free spectral range 1/tau.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Output quadrature of the OPO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quadrature {
    /// Anti-squeezed amplitude quadrature (X+).
    Amplitude,
    /// Squeezed phase quadrature (X-).
    Phase,
}

impl Quadrature {
    /// Sign of the nonlinear rate in the denominator kappa + sign*chi - g.
    fn chi_sign(self) -> f64 {
        match self {
            Quadrature::Phase => 1.0,
            Quadrature::Amplitude => -1.0,
        }
    }
}

/// Cavity and pump description of a sub-threshold OPO.
///
/// Constructed through [`OpoParams::new`] or [`OpoParams::fit_gains`]; both
/// reject above-threshold pumping (`chi >= kappa`), so every held value is a
/// valid squeezed-vacuum source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpoParams {
    round_trip_time: f64,
    input_transmission: f64,
    intracavity_loss: f64,
    nonlinear_rate: f64,
}

impl OpoParams {
    /// Validate and build cavity parameters.
    ///
    /// `round_trip_time` is in seconds, `input_transmission` in (0, 1),
    /// `intracavity_loss` in [0, 1), `nonlinear_rate` in 1/seconds with
    /// `0 <= nonlinear_rate < kappa`.
    pub fn new(
        round_trip_time: f64,
        input_transmission: f64,
        intracavity_loss: f64,
        nonlinear_rate: f64,
    ) -> Result<Self> {
        if !round_trip_time.is_finite() || round_trip_time <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "round_trip_time",
                value: round_trip_time,
                constraint: "0 < tau (seconds)",
            });
        }
        if !input_transmission.is_finite()
            || input_transmission <= 0.0
            || input_transmission >= 1.0
        {
            return Err(Error::InvalidParameter {
                name: "input_transmission",
                value: input_transmission,
                constraint: "0 < T < 1",
            });
        }
        if !intracavity_loss.is_finite() || intracavity_loss < 0.0 || intracavity_loss >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "intracavity_loss",
                value: intracavity_loss,
                constraint: "0 <= L < 1",
            });
        }
        if !nonlinear_rate.is_finite() || nonlinear_rate < 0.0 {
            return Err(Error::InvalidParameter {
                name: "nonlinear_rate",
                value: nonlinear_rate,
                constraint: "0 <= chi (1/seconds)",
            });
        }
        let kappa = (input_transmission + intracavity_loss) / round_trip_time;
        if nonlinear_rate >= kappa {
            return Err(Error::AboveThreshold {
                chi: nonlinear_rate,
                kappa,
            });
        }
        Ok(Self {
            round_trip_time,
            input_transmission,
            intracavity_loss,
            nonlinear_rate,
        })
    }

    /// Round-trip time tau in seconds.
    pub fn round_trip_time(&self) -> f64 {
        self.round_trip_time
    }

    /// Input coupler transmission T.
    pub fn input_transmission(&self) -> f64 {
        self.input_transmission
    }

    /// Round-trip intracavity loss L.
    pub fn intracavity_loss(&self) -> f64 {
        self.intracavity_loss
    }

    /// Nonlinear frequency conversion rate chi in 1/seconds.
    pub fn nonlinear_rate(&self) -> f64 {
        self.nonlinear_rate
    }

    /// Input coupling rate kappa_in = T/tau in 1/seconds.
    pub fn kappa_in(&self) -> f64 {
        self.input_transmission / self.round_trip_time
    }

    /// Loss rate kappa_l = L/tau in 1/seconds.
    pub fn kappa_loss(&self) -> f64 {
        self.intracavity_loss / self.round_trip_time
    }

    /// Total cavity decay rate kappa = kappa_in + kappa_l in 1/seconds.
    pub fn kappa(&self) -> f64 {
        (self.input_transmission + self.intracavity_loss) / self.round_trip_time
    }

    /// Free spectral range 1/tau in Hz.
    pub fn fsr(&self) -> f64 {
        1.0 / self.round_trip_time
    }

    /// Single-round-trip term (1 - e^{i omega tau})/tau.
    ///
    /// The angle is reduced modulo 2 pi before evaluation and 1 - e^{i theta}
    /// is expanded as 2 sin(theta/2) (sin(theta/2) - i cos(theta/2)), so the
    /// FSR periodicity is exact and the real part keeps full precision near
    /// resonances (no 1 - cos cancellation).
    fn round_trip_term(&self, omega: f64) -> Complex64 {
        let theta = (omega * self.round_trip_time).rem_euclid(TAU);
        let (s, c) = (0.5 * theta).sin_cos();
        Complex64::new(2.0 * s * s, -2.0 * s * c) / self.round_trip_time
    }

    /// Vacuum transfer coefficients onto one output quadrature at angular
    /// frequency `omega` (rad/s).
    pub fn transfer_coefficients(&self, omega: f64, quadrature: Quadrature) -> TransferCoefficients {
        let s = quadrature.chi_sign();
        let g = self.round_trip_term(omega);
        let numerator = g + (2.0 * self.kappa_in() - self.kappa() - s * self.nonlinear_rate);
        let denominator = -g + (self.kappa() + s * self.nonlinear_rate);
        // Sub-threshold params keep |denominator| >= kappa - chi > 0.
        debug_assert!(denominator.norm_sqr() > 0.0);
        TransferCoefficients {
            quadrature,
            input_coeff: numerator / denominator,
            loss_coeff: 2.0 * (self.kappa_in() * self.kappa_loss()).sqrt() / denominator,
        }
    }

    /// QNL-normalised output variances (v_plus, v_minus) at angular frequency
    /// `omega` (rad/s).
    ///
    /// The two vacuum inputs are independent with unit variance, so each
    /// output variance is the sum of the squared coefficient magnitudes.
    pub fn quadrature_variances(&self, omega: f64) -> (f64, f64) {
        (
            self.transfer_coefficients(omega, Quadrature::Amplitude)
                .output_variance(),
            self.transfer_coefficients(omega, Quadrature::Phase)
                .output_variance(),
        )
    }

    /// Evaluate both quadrature variances on an ascending, non-negative
    /// frequency grid in Hz.
    pub fn comb_spectrum(&self, frequencies_hz: &[f64]) -> Result<QuadratureSpectrum> {
        if frequencies_hz.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if !frequencies_hz[0].is_finite() || frequencies_hz[0] < 0.0 {
            return Err(Error::GridNotAscending { index: 0 });
        }
        for i in 1..frequencies_hz.len() {
            if !frequencies_hz[i].is_finite() || frequencies_hz[i] <= frequencies_hz[i - 1] {
                return Err(Error::GridNotAscending { index: i });
            }
        }
        let mut v_plus = Vec::with_capacity(frequencies_hz.len());
        let mut v_minus = Vec::with_capacity(frequencies_hz.len());
        for &f in frequencies_hz {
            let (vp, vm) = self.quadrature_variances(TAU * f);
            v_plus.push(vp);
            v_minus.push(vm);
        }
        Ok(QuadratureSpectrum {
            frequencies: frequencies_hz.to_vec(),
            v_plus,
            v_minus,
        })
    }

    /// Cavity resonances n/tau (n >= 1) up to and including `band_hz`.
    pub fn resonance_frequencies(&self, band_hz: f64) -> Vec<f64> {
        let fsr = self.fsr();
        let mut out = Vec::new();
        let mut n = 1u64;
        loop {
            let f = n as f64 * fsr;
            if !(f <= band_hz) {
                break;
            }
            out.push(f);
            n += 1;
        }
        out
    }

    /// Classical parametric gains of a resonant seed, as
    /// (amplification_db, deamplification_db).
    ///
    /// The gain in each quadrature is the squared magnitude of the zero-
    /// frequency input transfer coefficient; deamplification is reported as a
    /// positive decibel number.
    pub fn forward_gains(&self) -> (f64, f64) {
        let g_plus = self
            .transfer_coefficients(0.0, Quadrature::Amplitude)
            .input_coeff
            .norm_sqr();
        let g_minus = self
            .transfer_coefficients(0.0, Quadrature::Phase)
            .input_coeff
            .norm_sqr();
        (10.0 * g_plus.log10(), -10.0 * g_minus.log10())
    }

    /// Calibrate (chi, L) from measured parametric gains.
    ///
    /// `amp_gain_db` is the amplification of a resonant seed in the amplified
    /// quadrature, `deamp_gain_db` the de-amplification in the orthogonal
    /// quadrature, both as positive decibel numbers for a squeezer. The gain
    /// equations G = ((2 kappa_in - kappa -/+ chi)/(kappa +/- chi))^2 are
    /// solved by a damped 2-D Newton iteration over (chi tau, L), bounded to
    /// chi < kappa and L in [0, 0.5], starting from (chi, L) = (0.5 kappa,
    /// 0.01). If that start stalls, deterministic restarts seeded from the
    /// closed-form branch roots of the decoupled gain equations are tried.
    ///
    /// A gain pair does not always identify the cavity: each gain equation
    /// is quadratic in its rate combination, so a second sub-threshold
    /// solution with identical gains can exist (for example whenever
    /// chi tau + L > T). This fit resolves the ambiguity by returning the
    /// minimal-loss solution, so recovered parameters are exact precisely
    /// when the true cavity is the minimal-loss member of its gain class.
    pub fn fit_gains(
        amp_gain_db: f64,
        deamp_gain_db: f64,
        input_transmission: f64,
        round_trip_time: f64,
    ) -> Result<Self> {
        if !amp_gain_db.is_finite() {
            return Err(Error::InvalidParameter {
                name: "amp_gain_db",
                value: amp_gain_db,
                constraint: "finite",
            });
        }
        if !deamp_gain_db.is_finite() {
            return Err(Error::InvalidParameter {
                name: "deamp_gain_db",
                value: deamp_gain_db,
                constraint: "finite",
            });
        }
        // Validate T and tau through a chi = 0 construction.
        let passive = Self::new(round_trip_time, input_transmission, 0.0, 0.0)?;
        let t = passive.input_transmission;

        let fit = GainFit {
            t,
            target_plus: 10f64.powf(amp_gain_db / 10.0),
            target_minus: 10f64.powf(-deamp_gain_db / 10.0),
        };

        let mut starts = vec![(0.5 * (t + 0.01), 0.01)];
        starts.extend(fit.branch_starts());
        let mut best: Option<(f64, f64)> = None;
        let mut last_residual = f64::INFINITY;
        for (chi_tau, loss) in starts {
            match fit.newton(chi_tau, loss) {
                Ok((chi_tau, loss)) => {
                    let better = match best {
                        Some((_, best_loss)) => loss < best_loss,
                        None => true,
                    };
                    if better {
                        best = Some((chi_tau, loss));
                    }
                }
                Err(residual) => last_residual = last_residual.min(residual),
            }
        }
        match best {
            Some((chi_tau, loss)) => Self::new(
                round_trip_time,
                input_transmission,
                loss,
                chi_tau / round_trip_time,
            ),
            None => {
                if fit.feasible_roots().is_empty() {
                    Err(Error::GainFitInfeasible {
                        amp_gain_db,
                        deamp_gain_db,
                    })
                } else {
                    Err(Error::GainFitDiverged {
                        residual: last_residual,
                        iterations: NEWTON_MAX_ITERATIONS,
                    })
                }
            }
        }
    }
}

const NEWTON_MAX_ITERATIONS: usize = 100;
const NEWTON_TOLERANCE: f64 = 1e-12;

/// Gain-fit problem in dimensionless variables c = chi tau and l = L.
///
/// The forward gains depend only on a = c - l and b = c + l:
/// G_plus = ((T + a)/(T - a))^2 and G_minus = ((T - b)/(T + b))^2,
/// which gives closed-form branch roots used for restart points.
struct GainFit {
    t: f64,
    target_plus: f64,
    target_minus: f64,
}

impl GainFit {
    fn gains(&self, c: f64, l: f64) -> (f64, f64) {
        let t = self.t;
        let gp = ((t - l + c) / (t + l - c)).powi(2);
        let gm = ((t - l - c) / (t + l + c)).powi(2);
        (gp, gm)
    }

    fn residual(&self, c: f64, l: f64) -> (f64, f64) {
        let (gp, gm) = self.gains(c, l);
        (gp / self.target_plus - 1.0, gm / self.target_minus - 1.0)
    }

    fn in_bounds(&self, c: f64, l: f64) -> bool {
        let kappa_tau = self.t + l;
        (0.0..=0.5).contains(&l) && c >= 0.0 && c < kappa_tau * (1.0 - 1e-9)
    }

    /// Sub-threshold roots (c, l) with l in [0, 0.5], from the branch
    /// solutions of the decoupled gain equations.
    fn feasible_roots(&self) -> Vec<(f64, f64)> {
        let t = self.t;
        let sqrt_plus = self.target_plus.sqrt();
        let sqrt_minus = self.target_minus.sqrt();
        let mut a_roots = Vec::new();
        let mut b_roots = Vec::new();
        for sign in [1.0, -1.0] {
            // (T + a) = sign * sqrt(G+) * (T - a)
            let denom = 1.0 + sign * sqrt_plus;
            if denom.abs() > 1e-300 {
                a_roots.push(t * (sign * sqrt_plus - 1.0) / denom);
            }
            // (T - b) = sign * sqrt(G-) * (T + b)
            let denom = 1.0 + sign * sqrt_minus;
            if denom.abs() > 1e-300 {
                b_roots.push(t * (1.0 - sign * sqrt_minus) / denom);
            }
        }
        let mut roots = Vec::new();
        for &a in &a_roots {
            for &b in &b_roots {
                let c = 0.5 * (a + b);
                let l = 0.5 * (b - a);
                if self.in_bounds(c, l) {
                    roots.push((c, l));
                }
            }
        }
        roots
    }

    fn branch_starts(&self) -> Vec<(f64, f64)> {
        let mut roots = self.feasible_roots();
        roots.sort_by(|x, y| x.1.total_cmp(&y.1));
        roots
    }

    /// Damped Newton iteration with residual backtracking; trial points are
    /// projected onto the bound box. Returns the solution or the final
    /// residual norm on stall.
    fn newton(&self, mut c: f64, mut l: f64) -> std::result::Result<(f64, f64), f64> {
        let t = self.t;
        let norm = |r: (f64, f64)| r.0.abs().max(r.1.abs());
        let mut r = self.residual(c, l);
        for _ in 0..NEWTON_MAX_ITERATIONS {
            if norm(r) < NEWTON_TOLERANCE {
                return Ok((c, l));
            }
            // Analytic Jacobian: with u = T - l + c, w = T + l - c,
            // d g_plus/dc = 4 T u / w^3 = -d g_plus/dl, and with
            // u' = T - l - c, w' = T + l + c,
            // d g_minus/dc = -4 T u' / w'^3 = d g_minus/dl.
            let u = t - l + c;
            let w = t + l - c;
            let up = t - l - c;
            let wp = t + l + c;
            let j11 = 4.0 * t * u / (w * w * w) / self.target_plus;
            let j21 = -4.0 * t * up / (wp * wp * wp) / self.target_minus;
            // Solve J * step = -r for J = [[j11, -j11], [j21, j21]].
            let det = 2.0 * j11 * j21;
            if det.abs() < 1e-300 {
                return Err(norm(r));
            }
            let dc = (-r.0 * j21 - r.1 * j11) / det;
            let dl = (r.0 * j21 - r.1 * j11) / det;
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cc = (c + step * dc).clamp(0.0, (t + 0.5) * (1.0 - 1e-9));
                let ll = (l + step * dl).clamp(0.0, 0.5);
                let cc = cc.min((t + ll) * (1.0 - 1e-9));
                let rr = self.residual(cc, ll);
                if norm(rr) < norm(r) {
                    c = cc;
                    l = ll;
                    r = rr;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                return Err(norm(r));
            }
        }
        if norm(r) < NEWTON_TOLERANCE {
            Ok((c, l))
        } else {
            Err(norm(r))
        }
    }
}

/// Complex vacuum transfer coefficients onto one output quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferCoefficients {
    /// Output quadrature the coefficients refer to.
    pub quadrature: Quadrature,
    /// Coefficient applied to the input-port vacuum.
    pub input_coeff: Complex64,
    /// Coefficient applied to the loss-port vacuum.
    pub loss_coeff: Complex64,
}

impl TransferCoefficients {
    /// Output variance in QNL units: |input_coeff|^2 + |loss_coeff|^2.
    pub fn output_variance(&self) -> f64 {
        self.input_coeff.norm_sqr() + self.loss_coeff.norm_sqr()
    }
}

/// Both quadrature variances on a frequency grid, QNL-normalised.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpectrum {
    /// Ascending frequency grid in Hz.
    pub frequencies: Vec<f64>,
    /// Amplitude-quadrature variance per bin.
    pub v_plus: Vec<f64>,
    /// Phase-quadrature variance per bin.
    pub v_minus: Vec<f64>,
}

impl QuadratureSpectrum {
    /// Validate and build a spectrum from raw grids.
    pub fn new(frequencies: Vec<f64>, v_plus: Vec<f64>, v_minus: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if frequencies.len() != v_plus.len() || frequencies.len() != v_minus.len() {
            return Err(Error::EstimateMismatch {
                what: "grid lengths",
            });
        }
        if !frequencies[0].is_finite() || frequencies[0] < 0.0 {
            return Err(Error::GridNotAscending { index: 0 });
        }
        for i in 1..frequencies.len() {
            if !frequencies[i].is_finite() || frequencies[i] <= frequencies[i - 1] {
                return Err(Error::GridNotAscending { index: i });
            }
        }
        for v in v_plus.iter().chain(v_minus.iter()) {
            if !v.is_finite() || *v <= 0.0 {
                return Err(Error::InvalidParameter {
                    name: "variance",
                    value: *v,
                    constraint: "finite and positive at every bin",
                });
            }
        }
        Ok(Self {
            frequencies,
            v_plus,
            v_minus,
        })
    }

    /// Vacuum spectrum: unit variance in both quadratures on `frequencies`.
    pub fn unit(frequencies: Vec<f64>) -> Result<Self> {
        let ones = vec![1.0; frequencies.len()];
        Self::new(frequencies, ones.clone(), ones)
    }

    /// Number of frequency bins.
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    /// True when the spectrum holds no bins.
    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Variance grid of one quadrature.
    pub fn variances(&self, quadrature: Quadrature) -> &[f64] {
        match quadrature {
            Quadrature::Amplitude => &self.v_plus,
            Quadrature::Phase => &self.v_minus,
        }
    }
}

/// Frequencies of strict interior minima of v_minus that dip below the QNL.
pub fn squeezing_minima(spectrum: &QuadratureSpectrum) -> Vec<f64> {
    let v = &spectrum.v_minus;
    let mut out = Vec::new();
    for i in 1..v.len().saturating_sub(1) {
        if v[i] < v[i - 1] && v[i] < v[i + 1] && v[i] < 1.0 {
            out.push(spectrum.frequencies[i]);
        }
    }
    out
}
