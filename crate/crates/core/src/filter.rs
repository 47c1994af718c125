//! Linear-phase FIR low-pass used as the homodyne detector bandwidth model.
//!
//! Blackman-windowed sinc, normalised to exactly unit DC gain, with the
//! cutoff tuned by bisection so the magnitude response crosses -3 dB at the
//! requested bandwidth. The tap count scales with the ratio of sample rate
//! to bandwidth (clamped to 65..=1025) so that within that budget the
//! response is flat within 0.1 dB below 0.8 x bandwidth and at least 40 dB
//! down at twice the bandwidth.

use std::f64::consts::TAU;

const MIN_TAPS: usize = 65;
const MAX_TAPS: usize = 1025;
const MINUS_3DB: f64 = 0.707_945_784_384_138; // 10^(-3/20)

/// Symmetric FIR taps; always an odd count for an integer group delay.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
}

impl FirFilter {
    /// Design a low-pass whose -3 dB point sits at `bandwidth_hz`.
    ///
    /// Callers validate `0 < bandwidth_hz <= sample_rate/2`.
    pub fn low_pass(sample_rate: f64, bandwidth_hz: f64) -> Self {
        let requested = (24.0 * sample_rate / bandwidth_hz).ceil() as usize;
        let n_taps = (requested | 1).clamp(MIN_TAPS, MAX_TAPS);

        // The -3 dB point of a windowed sinc sits slightly below its design
        // cutoff; bisect the cutoff until the response crosses -3 dB at the
        // requested bandwidth.
        let normalized_bw = bandwidth_hz / sample_rate;
        let mut lo = normalized_bw;
        let mut hi = (2.0 * normalized_bw).min(0.5);
        let response_at_bw = |cutoff: f64| {
            let taps = windowed_sinc(n_taps, cutoff);
            magnitude_response(&taps, normalized_bw)
        };
        // Expanding upper bound: response at bw grows with cutoff.
        for _ in 0..8 {
            if response_at_bw(hi) >= MINUS_3DB || hi >= 0.5 {
                break;
            }
            hi = (hi * 1.5).min(0.5);
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if response_at_bw(mid) < MINUS_3DB {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Self {
            taps: windowed_sinc(n_taps, 0.5 * (lo + hi)),
        }
    }

    /// Number of taps (odd).
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Group delay in samples, (len - 1)/2.
    pub fn group_delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    /// Magnitude response at `frequency_hz` for the given sample rate.
    pub fn magnitude_at(&self, frequency_hz: f64, sample_rate: f64) -> f64 {
        magnitude_response(&self.taps, frequency_hz / sample_rate)
    }

    /// Group-delay-compensated convolution with zero-padded edges; output
    /// length equals input length.
    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let mut output = vec![0.0; input.len()];
        self.apply_range(input, 0, &mut output);
        output
    }

    /// Filter `output.len()` samples starting at `offset` into `context`,
    /// reading neighbourhoods from `context` and treating samples outside it
    /// as zero. `apply_range(x, 0, out)` with `out.len() == x.len()` equals
    /// `apply(x)`.
    pub fn apply_range(&self, context: &[f64], offset: usize, output: &mut [f64]) {
        let half = self.group_delay() as isize;
        for (i, out) in output.iter_mut().enumerate() {
            let center = offset as isize + i as isize;
            let mut acc = 0.0;
            for (k, &h) in self.taps.iter().enumerate() {
                let j = center + half - k as isize;
                if j >= 0 && (j as usize) < context.len() {
                    acc += h * context[j as usize];
                }
            }
            *out = acc;
        }
    }
}

/// Blackman-windowed sinc with normalised cutoff (cycles/sample), taps
/// rescaled to exactly unit DC gain.
fn windowed_sinc(n_taps: usize, cutoff: f64) -> Vec<f64> {
    let half = (n_taps - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|i| {
            let t = i as f64 - half;
            let sinc = if t == 0.0 {
                TAU * cutoff
            } else {
                (TAU * cutoff * t).sin() / t
            };
            let w = 0.42 - 0.5 * (TAU * i as f64 / (n_taps - 1) as f64).cos()
                + 0.08 * (2.0 * TAU * i as f64 / (n_taps - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for tap in &mut taps {
        *tap /= sum;
    }
    taps
}

fn magnitude_response(taps: &[f64], normalized_frequency: f64) -> f64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (i, &h) in taps.iter().enumerate() {
        let phase = -TAU * normalized_frequency * i as f64;
        re += h * phase.cos();
        im += h * phase.sin();
    }
    (re * re + im * im).sqrt()
}
