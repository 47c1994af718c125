//! Time-domain Monte Carlo engine: synthesize Gaussian quadrature noise
//! against a target spectrum, phase-modulate carriers onto it, model the
//! detector bandwidth, and estimate spectra by segment-averaged DFTs with
//! quantum-noise-limit calibration.
//!
//! # Normalisation
//!
//! Samples are in QNL quadrature units: a flat unit target spectrum gives
//! unit sample variance. The per-bin estimate in power mode is
//! `|X_k|^2 / segment_length`, whose expectation equals the two-sided target
//! variance `V(f_k)` at every bin, so QNL input reads 1.0 everywhere. A
//! bin-aligned sinusoid of amplitude `a` therefore shows
//! `a^2 * segment_length / 4` in its (one-sided) bin, and the two-sided bin
//! sum `P_0 + P_{N/2} + 2 * sum(P_interior)` equals the segment energy
//! `sum(x_n^2)` (Parseval).
//!
//! # Determinism
//!
//! Each segment draws from an independent counter-based substream
//! (`rng_seed` selects the key, the segment index the stream), so synthesis
//! parallelises without any cross-thread ordering effects. Spectral
//! accumulation folds per-segment spectra in ascending segment order, making
//! every estimate bit-identical across thread counts.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::filter::FirFilter;
use crate::opo::{Quadrature, QuadratureSpectrum};

/// Smallest accepted DFT segment.
pub const MIN_SEGMENT_LENGTH: usize = 64;

/// Segments processed per parallel batch; bounds memory without affecting
/// results (accumulation order is per-segment, not per-batch).
pub(crate) const BATCH_SEGMENTS: usize = 256;

/// Synthesis and estimation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceConfig {
    /// Sampling rate in Hz.
    pub sample_rate_hz: f64,
    /// DFT segment length in samples; a power of two, at least 64.
    pub segment_length: usize,
    /// Number of segments in the trace.
    pub segment_count: usize,
    /// Seed for the per-segment RNG substreams.
    pub rng_seed: u64,
    /// Which quadrature the trace represents.
    pub quadrature: Quadrature,
}

impl TraceConfig {
    pub fn new(
        sample_rate_hz: f64,
        segment_length: usize,
        segment_count: usize,
        rng_seed: u64,
        quadrature: Quadrature,
    ) -> Result<Self> {
        let cfg = Self {
            sample_rate_hz,
            segment_length,
            segment_count,
            rng_seed,
            quadrature,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.sample_rate_hz.is_finite() || self.sample_rate_hz <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "sample_rate_hz",
                value: self.sample_rate_hz,
                constraint: "finite and positive",
            });
        }
        if self.segment_length < MIN_SEGMENT_LENGTH || !self.segment_length.is_power_of_two() {
            return Err(Error::BadSegmentLength(self.segment_length));
        }
        if self.segment_count == 0 {
            return Err(Error::InvalidParameter {
                name: "segment_count",
                value: 0.0,
                constraint: "at least 1",
            });
        }
        Ok(())
    }

    pub fn nyquist_hz(&self) -> f64 {
        0.5 * self.sample_rate_hz
    }

    /// DFT bin spacing, sample_rate / segment_length.
    pub fn bin_width_hz(&self) -> f64 {
        self.sample_rate_hz / self.segment_length as f64
    }

    pub fn total_samples(&self) -> usize {
        self.segment_length * self.segment_count
    }

    /// One-sided DFT bin grid, 0 to Nyquist inclusive.
    pub fn bin_frequencies(&self) -> Vec<f64> {
        bin_frequencies(self.sample_rate_hz, self.segment_length)
    }
}

/// One-sided DFT bin frequencies k * sample_rate / segment_length for
/// k = 0..=segment_length/2.
pub fn bin_frequencies(sample_rate_hz: f64, segment_length: usize) -> Vec<f64> {
    (0..=segment_length / 2)
        .map(|k| k as f64 * sample_rate_hz / segment_length as f64)
        .collect()
}

/// A real sampled quadrature record in QNL units.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub sample_rate_hz: f64,
    pub quadrature: Quadrature,
    pub samples: Vec<f64>,
}

impl Trace {
    pub fn nyquist_hz(&self) -> f64 {
        0.5 * self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean square of the samples (the process is zero-mean by
    /// construction, so this is the QNL-units variance estimate).
    pub fn sample_variance(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64
    }
}

/// A coherent carrier added to the phase quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tone {
    pub frequency_hz: f64,
    /// Peak amplitude in QNL^(1/2) quadrature units.
    pub amplitude: f64,
    pub phase_rad: f64,
}

/// How per-segment DFTs are averaged.
///
/// Power mode averages `|X_k|^2` and is the unbiased variance estimate.
/// Magnitude mode averages `|X_k|` first and squares the mean, which lands a
/// factor pi/4 below power mode on Gaussian bins (Rayleigh mean; 2/pi at the
/// purely real DC and Nyquist bins).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AveragingMode {
    Power,
    Magnitude,
}

/// Segment-averaged one-sided spectrum estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate {
    /// Bin frequencies in Hz, 0 to Nyquist inclusive.
    pub frequencies: Vec<f64>,
    /// Per-bin estimate in QNL units (>= 0).
    pub power: Vec<f64>,
    pub averaging_mode: AveragingMode,
    pub segments_averaged: usize,
    /// Set when fewer than two segments were averaged; such an estimate has
    /// no variance reduction and chi-squared scatter per bin.
    pub low_averaging: bool,
}

impl SpectrumEstimate {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Index of the bin whose frequency is closest to `frequency_hz`.
    pub fn nearest_bin(&self, frequency_hz: f64) -> usize {
        let spacing = self.bin_width_hz();
        let i = (frequency_hz / spacing).round();
        (i.max(0.0) as usize).min(self.frequencies.len() - 1)
    }

    pub fn bin_width_hz(&self) -> f64 {
        if self.frequencies.len() < 2 {
            return f64::NAN;
        }
        self.frequencies[1] - self.frequencies[0]
    }
}

/// Synthesize a Gaussian trace whose per-bin spectrum matches `target` in
/// the configured quadrature.
///
/// `target` must be evaluated exactly on the one-sided DFT bin grid of
/// `cfg` (see [`bin_frequencies`]); closed-form spectra make interpolation
/// unnecessary and bin-exact targets keep estimator checks sharp. Segments
/// are statistically independent; see the module notes on determinism.
pub fn synthesize_trace(target: &QuadratureSpectrum, cfg: &TraceConfig) -> Result<Trace> {
    cfg.validate()?;
    let variances = target_bin_variances(target, cfg)?;
    let mut samples = vec![0.0; cfg.total_samples()];
    synthesize_segments_into(&variances, cfg, 0, &mut samples);
    Ok(Trace {
        sample_rate_hz: cfg.sample_rate_hz,
        quadrature: cfg.quadrature,
        samples,
    })
}

/// Check the target grid against the config's bin grid and return the
/// variances of the configured quadrature.
fn target_bin_variances(target: &QuadratureSpectrum, cfg: &TraceConfig) -> Result<Vec<f64>> {
    let expected = cfg.bin_frequencies();
    if target.frequencies.len() != expected.len() {
        return Err(Error::TargetGridMismatch);
    }
    let tolerance = 1e-9 * cfg.bin_width_hz();
    for (have, want) in target.frequencies.iter().zip(&expected) {
        if (have - want).abs() > tolerance {
            return Err(Error::TargetGridMismatch);
        }
    }
    Ok(target.variances(cfg.quadrature).to_vec())
}

/// Fill `out` (a whole number of segments) with segments starting at global
/// index `first_segment`, in parallel.
fn synthesize_segments_into(
    variances: &[f64],
    cfg: &TraceConfig,
    first_segment: usize,
    out: &mut [f64],
) {
    let n = cfg.segment_length;
    debug_assert_eq!(out.len() % n, 0);
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    out.par_chunks_mut(n)
        .enumerate()
        .for_each_init(
            || SegmentScratch::new(&ifft),
            |scratch, (i, chunk)| {
                synthesize_one_segment(
                    variances,
                    cfg,
                    (first_segment + i) as u64,
                    scratch,
                    chunk,
                );
            },
        );
}

/// Serial variant reusing the caller's scratch, for per-segment streaming.
fn synthesize_segments_serial(
    variances: &[f64],
    cfg: &TraceConfig,
    first_segment: usize,
    scratch: &mut SegmentScratch,
    out: &mut [f64],
) {
    let n = cfg.segment_length;
    debug_assert_eq!(out.len() % n, 0);
    for (i, chunk) in out.chunks_mut(n).enumerate() {
        synthesize_one_segment(variances, cfg, (first_segment + i) as u64, scratch, chunk);
    }
}

/// Reusable FFT buffers for one worker thread.
pub(crate) struct SegmentScratch {
    fft: Arc<dyn Fft<f64>>,
    spectrum: Vec<Complex64>,
    fft_scratch: Vec<Complex64>,
}

impl SegmentScratch {
    pub(crate) fn new(fft: &Arc<dyn Fft<f64>>) -> Self {
        Self {
            fft: Arc::clone(fft),
            spectrum: vec![Complex64::new(0.0, 0.0); fft.len()],
            fft_scratch: vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
        }
    }
}

/// Draw one segment: Hermitian complex-Gaussian bins scaled by sqrt(V),
/// inverse DFT, 1/N normalisation.
///
/// Draw order per segment is fixed (DC, Nyquist, then re/im pairs for bins
/// 1..N/2); changing it changes every synthesized trace.
fn synthesize_one_segment(
    variances: &[f64],
    cfg: &TraceConfig,
    segment_index: u64,
    scratch: &mut SegmentScratch,
    out: &mut [f64],
) {
    let n = cfg.segment_length;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(segment_index);
    let normal = StandardNormal;

    let z_dc: f64 = normal.sample(&mut rng);
    let z_nyquist: f64 = normal.sample(&mut rng);
    // Real bins carry the full variance; complex bins split it between the
    // two Gaussian components so that E|X_k|^2 = N V_k at every bin.
    scratch.spectrum[0] = Complex64::new((variances[0] * n as f64).sqrt() * z_dc, 0.0);
    scratch.spectrum[n / 2] =
        Complex64::new((variances[n / 2] * n as f64).sqrt() * z_nyquist, 0.0);
    for k in 1..n / 2 {
        let g_re: f64 = normal.sample(&mut rng);
        let g_im: f64 = normal.sample(&mut rng);
        let scale = (variances[k] * n as f64 / 2.0).sqrt();
        let coeff = Complex64::new(scale * g_re, scale * g_im);
        scratch.spectrum[k] = coeff;
        scratch.spectrum[n - k] = coeff.conj();
    }
    scratch
        .fft
        .process_with_scratch(&mut scratch.spectrum, &mut scratch.fft_scratch);
    let inv_n = 1.0 / n as f64;
    for (x, c) in out.iter_mut().zip(&scratch.spectrum) {
        *x = c.re * inv_n;
    }
}

/// Add coherent carriers to a phase-quadrature trace in place:
/// `samples[n] += a_i sin(2 pi f_i n / fs + phi_i)` for every tone.
///
/// The amplitude quadrature is never modulated, so a paired
/// amplitude-quadrature trace is unaffected by encoding.
pub fn encode_fdm(trace: &mut Trace, tones: &[Tone]) -> Result<()> {
    if trace.quadrature != Quadrature::Phase {
        return Err(Error::PhaseQuadratureRequired);
    }
    validate_tones(tones, trace.nyquist_hz())?;
    add_tones(&mut trace.samples, 0, tones, trace.sample_rate_hz);
    Ok(())
}

pub(crate) fn validate_tones(tones: &[Tone], nyquist_hz: f64) -> Result<()> {
    for tone in tones {
        if !tone.frequency_hz.is_finite() || tone.frequency_hz < 0.0 {
            return Err(Error::InvalidParameter {
                name: "tone frequency_hz",
                value: tone.frequency_hz,
                constraint: "finite and non-negative",
            });
        }
        if tone.frequency_hz >= nyquist_hz {
            return Err(Error::CarrierAboveNyquist {
                carrier_hz: tone.frequency_hz,
                nyquist_hz,
            });
        }
        if !tone.amplitude.is_finite() || !tone.phase_rad.is_finite() {
            return Err(Error::InvalidParameter {
                name: "tone amplitude/phase",
                value: tone.amplitude,
                constraint: "finite",
            });
        }
    }
    Ok(())
}

/// Add tones to a sample run whose first element has global index
/// `start_index`. Tone-outer ordering is part of the determinism contract:
/// whole-trace and per-segment encoding produce bit-identical samples.
fn add_tones(samples: &mut [f64], start_index: usize, tones: &[Tone], sample_rate_hz: f64) {
    for tone in tones {
        let w = TAU * tone.frequency_hz / sample_rate_hz;
        for (i, x) in samples.iter_mut().enumerate() {
            let n = (start_index + i) as f64;
            *x += tone.amplitude * (w * n + tone.phase_rad).sin();
        }
    }
}

/// Model the detector's analogue bandwidth: linear-phase FIR low-pass with
/// its -3 dB point at `analogue_bandwidth_hz`, group-delay compensated,
/// zero-padded at the trace edges.
pub fn homodyne_detect(trace: &Trace, analogue_bandwidth_hz: f64) -> Result<Trace> {
    let filter = design_detector_filter(trace.sample_rate_hz, analogue_bandwidth_hz)?;
    Ok(Trace {
        sample_rate_hz: trace.sample_rate_hz,
        quadrature: trace.quadrature,
        samples: filter.apply(&trace.samples),
    })
}

pub(crate) fn design_detector_filter(
    sample_rate_hz: f64,
    analogue_bandwidth_hz: f64,
) -> Result<FirFilter> {
    if !analogue_bandwidth_hz.is_finite() || analogue_bandwidth_hz <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "analogue_bandwidth_hz",
            value: analogue_bandwidth_hz,
            constraint: "finite and positive",
        });
    }
    let nyquist_hz = 0.5 * sample_rate_hz;
    if analogue_bandwidth_hz > nyquist_hz {
        return Err(Error::BandwidthAboveNyquist {
            bandwidth_hz: analogue_bandwidth_hz,
            nyquist_hz,
        });
    }
    Ok(FirFilter::low_pass(sample_rate_hz, analogue_bandwidth_hz))
}

/// Segment-averaged one-sided spectrum of `trace` with rectangular windows
/// and no overlap.
///
/// The trace length must be a whole number of segments. A single segment is
/// allowed but flags `low_averaging` in the result.
pub fn averaged_psd(
    trace: &Trace,
    segment_length: usize,
    mode: AveragingMode,
) -> Result<SpectrumEstimate> {
    if segment_length < MIN_SEGMENT_LENGTH || !segment_length.is_power_of_two() {
        return Err(Error::BadSegmentLength(segment_length));
    }
    if trace.samples.is_empty() || trace.samples.len() % segment_length != 0 {
        return Err(Error::TraceNotSegmentable {
            length: trace.samples.len(),
            segment_length,
        });
    }
    let mut accumulator = PsdAccumulator::new(trace.sample_rate_hz, segment_length, mode);
    let fft = FftPlanner::new().plan_fft_forward(segment_length);
    for batch in trace.samples.chunks(segment_length * BATCH_SEGMENTS) {
        let spectra: Vec<Vec<f64>> = batch
            .par_chunks(segment_length)
            .map_init(
                || SegmentScratch::new(&fft),
                |scratch, segment| segment_bin_amplitudes(segment, mode, scratch),
            )
            .collect();
        for spectrum in &spectra {
            accumulator.fold(spectrum);
        }
    }
    Ok(accumulator.finish())
}

/// Per-segment one-sided bin statistic: |X_k|^2 for power mode, |X_k| for
/// magnitude mode.
pub(crate) fn segment_bin_amplitudes(
    segment: &[f64],
    mode: AveragingMode,
    scratch: &mut SegmentScratch,
) -> Vec<f64> {
    let n = segment.len();
    debug_assert_eq!(n, scratch.spectrum.len());
    for (slot, &x) in scratch.spectrum.iter_mut().zip(segment) {
        *slot = Complex64::new(x, 0.0);
    }
    scratch
        .fft
        .process_with_scratch(&mut scratch.spectrum, &mut scratch.fft_scratch);
    scratch.spectrum[..=n / 2]
        .iter()
        .map(|c| match mode {
            AveragingMode::Power => c.norm_sqr(),
            AveragingMode::Magnitude => c.norm(),
        })
        .collect()
}

/// Ordered spectral accumulator shared by [`averaged_psd`] and the
/// streaming link executor; folding per-segment spectra in ascending
/// segment order keeps estimates bit-identical across batch sizes and
/// thread counts.
pub(crate) struct PsdAccumulator {
    sample_rate_hz: f64,
    segment_length: usize,
    mode: AveragingMode,
    acc: Vec<f64>,
    segments: usize,
}

impl PsdAccumulator {
    pub(crate) fn new(sample_rate_hz: f64, segment_length: usize, mode: AveragingMode) -> Self {
        Self {
            sample_rate_hz,
            segment_length,
            mode,
            acc: vec![0.0; segment_length / 2 + 1],
            segments: 0,
        }
    }

    pub(crate) fn fold(&mut self, segment_spectrum: &[f64]) {
        debug_assert_eq!(segment_spectrum.len(), self.acc.len());
        for (a, v) in self.acc.iter_mut().zip(segment_spectrum) {
            *a += v;
        }
        self.segments += 1;
    }

    pub(crate) fn finish(self) -> SpectrumEstimate {
        let m = self.segments as f64;
        let n = self.segment_length as f64;
        let power = self
            .acc
            .iter()
            .map(|&a| match self.mode {
                // E |X_k|^2 = N V_k, so |X|^2 / (m N) estimates V_k.
                AveragingMode::Power => a / (m * n),
                // Mean magnitude first, then square, as in magnitude-mode
                // averaging; sits pi/4 below power mode on Gaussian bins.
                AveragingMode::Magnitude => (a / m).powi(2) / n,
            })
            .collect();
        SpectrumEstimate {
            frequencies: bin_frequencies(self.sample_rate_hz, self.segment_length),
            power,
            averaging_mode: self.mode,
            segments_averaged: self.segments,
            low_averaging: self.segments < 2,
        }
    }
}

/// Divide a measured spectrum by a vacuum (QNL) reference, bin by bin.
///
/// Both estimates must share grid and averaging mode. Using the ratio of
/// averaged spectra (never averaging per-segment ratios, whose heavy-tailed
/// distribution has no mean) keeps the calibrated floor stable.
pub fn calibrate_qnl(
    signal: &SpectrumEstimate,
    vacuum_reference: &SpectrumEstimate,
) -> Result<SpectrumEstimate> {
    if signal.averaging_mode != vacuum_reference.averaging_mode {
        return Err(Error::EstimateMismatch {
            what: "averaging mode",
        });
    }
    if signal.frequencies.len() != vacuum_reference.frequencies.len() {
        return Err(Error::EstimateMismatch {
            what: "frequency grid length",
        });
    }
    let tolerance = 1e-9 * signal.bin_width_hz().abs();
    for (a, b) in signal.frequencies.iter().zip(&vacuum_reference.frequencies) {
        if (a - b).abs() > tolerance {
            return Err(Error::EstimateMismatch {
                what: "frequency grid",
            });
        }
    }
    let mut power = Vec::with_capacity(signal.power.len());
    for (i, (s, v)) in signal.power.iter().zip(&vacuum_reference.power).enumerate() {
        if *v == 0.0 {
            return Err(Error::ZeroReferenceBin { index: i });
        }
        power.push(s / v);
    }
    Ok(SpectrumEstimate {
        frequencies: signal.frequencies.clone(),
        power,
        averaging_mode: signal.averaging_mode,
        segments_averaged: signal.segments_averaged,
        low_averaging: signal.low_averaging || vacuum_reference.low_averaging,
    })
}

/// Streaming per-segment pipeline: synthesize -> encode -> filter, one
/// segment at a time, bit-identical to running the whole-trace operations
/// in sequence.
///
/// When a filter is present the pipeline regenerates just enough neighbour
/// segments to give the FIR its full context, so segment boundaries match
/// the whole-trace convolution exactly (zero-padded only at the trace
/// edges).
pub(crate) struct SegmentPipeline<'a> {
    variances: &'a [f64],
    cfg: &'a TraceConfig,
    tones: &'a [Tone],
    filter: Option<&'a FirFilter>,
    ifft: Arc<dyn Fft<f64>>,
    /// Neighbour segments needed per side for full FIR context.
    context_segments: usize,
}

impl<'a> SegmentPipeline<'a> {
    pub(crate) fn new(
        variances: &'a [f64],
        cfg: &'a TraceConfig,
        tones: &'a [Tone],
        filter: Option<&'a FirFilter>,
    ) -> Self {
        let context_segments = filter
            .map(|f| f.group_delay().div_ceil(cfg.segment_length))
            .unwrap_or(0);
        Self {
            variances,
            cfg,
            tones,
            filter,
            ifft: FftPlanner::new().plan_fft_inverse(cfg.segment_length),
            context_segments,
        }
    }

    /// Fresh synthesis scratch sized for this pipeline, one per worker.
    pub(crate) fn scratch(&self) -> SegmentScratch {
        SegmentScratch::new(&self.ifft)
    }

    /// Produce the fully processed samples of segment `index`.
    pub(crate) fn processed_segment(&self, index: usize, scratch: &mut SegmentScratch) -> Vec<f64> {
        let n = self.cfg.segment_length;
        let first = index.saturating_sub(self.context_segments);
        let last = (index + self.context_segments).min(self.cfg.segment_count - 1);
        let mut context = vec![0.0; (last - first + 1) * n];
        synthesize_segments_serial(self.variances, self.cfg, first, scratch, &mut context);
        add_tones(&mut context, first * n, self.tones, self.cfg.sample_rate_hz);
        match self.filter {
            None => {
                let offset = (index - first) * n;
                context.drain(..offset);
                context.truncate(n);
                context
            }
            Some(filter) => {
                let mut out = vec![0.0; n];
                filter.apply_range(&context, (index - first) * n, &mut out);
                out
            }
        }
    }
}
