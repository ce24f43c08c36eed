//! Per-block sinusoid estimation.
//!
//! Each block of `N` samples is treated as a sum of stationary sinusoids and
//! peeled one at a time, strongest first:
//!
//! 1. window the (residual) block;
//! 2. take its `N`-point DFT and stop unless the strongest bin clears the
//!    median bin power by `detect_threshold_db`;
//! 3. maximize the correlation magnitude `|Σ y_w[k]·exp(-j2πf·t_k)|` over a
//!    grid of frequencies spaced `fine_grid_fraction` of a bin around the
//!    coarse peak;
//! 4. take magnitude and phase from the correlation at that frequency and
//!    divide out the window's coherent gain;
//! 5. subtract the estimated sinusoid from the unwindowed residual and repeat.
//!
//! Times `t_k` are measured from the block center, `t_k = (k - (N-1)/2)/F_S`,
//! so every phase refers to the center of its block.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, StsaError};
use crate::iq_io::SampleStream;
use crate::window::{self, WindowFunction};

/// Spacing of consecutive analysis blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Overlap {
    /// Contiguous blocks, hop = N.
    #[default]
    None,
    /// 50% overlap, hop = N/2.
    Half,
}

impl FromStr for Overlap {
    type Err = StsaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "0" => Ok(Overlap::None),
            "half" | "50" => Ok(Overlap::Half),
            other => Err(StsaError::param(format!("unknown overlap mode '{other}'"))),
        }
    }
}

impl fmt::Display for Overlap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Overlap::None => "none",
            Overlap::Half => "half",
        })
    }
}

/// Estimator configuration. Immutable once built; cheap to clone.
#[derive(Debug, Clone)]
pub struct StsaConfig {
    pub block_len_n: usize,
    pub window: Arc<dyn WindowFunction>,
    /// Required ratio of the strongest DFT bin to the median bin, dB.
    pub detect_threshold_db: f64,
    /// Fine-search step as a fraction of the bin width `F_S/N`.
    pub fine_grid_fraction: f64,
    /// Half-width of the fine search around the coarse peak, in bins.
    pub fine_search_span_bins: f64,
    pub max_peel: usize,
    pub overlap: Overlap,
    /// Largest frequency change, in bins per block step, that still joins an
    /// estimate to an existing track.
    pub jump_limit_bins: f64,
}

impl Default for StsaConfig {
    fn default() -> Self {
        Self {
            block_len_n: 256,
            window: window::triangular(),
            detect_threshold_db: 13.0,
            fine_grid_fraction: 0.01,
            fine_search_span_bins: 1.0,
            max_peel: 8,
            overlap: Overlap::None,
            jump_limit_bins: 0.5,
        }
    }
}

impl StsaConfig {
    pub fn with_block_len(mut self, n: usize) -> Self {
        self.block_len_n = n;
        self
    }

    pub fn with_window(mut self, window: Arc<dyn WindowFunction>) -> Self {
        self.window = window;
        self
    }

    pub fn with_overlap(mut self, overlap: Overlap) -> Self {
        self.overlap = overlap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_len_n < 8 {
            return Err(StsaError::param(format!(
                "block length must be at least 8, got {}",
                self.block_len_n
            )));
        }
        if self.overlap == Overlap::Half && !self.block_len_n.is_multiple_of(2) {
            return Err(StsaError::param("half overlap needs an even block length"));
        }
        if self.max_peel < 1 {
            return Err(StsaError::param("max_peel must be at least 1"));
        }
        if !(self.fine_grid_fraction > 0.0 && self.fine_grid_fraction <= 1.0) {
            return Err(StsaError::param(format!(
                "fine grid fraction must be in (0, 1], got {}",
                self.fine_grid_fraction
            )));
        }
        if !(self.fine_search_span_bins.is_finite() && self.fine_search_span_bins >= 0.0) {
            return Err(StsaError::param("fine search span must be non-negative"));
        }
        if self.detect_threshold_db.is_nan() {
            return Err(StsaError::param("detection threshold is NaN"));
        }
        if !(self.jump_limit_bins.is_finite() && self.jump_limit_bins > 0.0) {
            return Err(StsaError::param("jump limit must be positive"));
        }
        Ok(())
    }

    /// Samples between consecutive block starts.
    pub fn hop(&self) -> usize {
        match self.overlap {
            Overlap::None => self.block_len_n,
            Overlap::Half => self.block_len_n / 2,
        }
    }

    pub fn bin_width_hz(&self, sample_rate_hz: f64) -> f64 {
        sample_rate_hz / self.block_len_n as f64
    }

    pub fn grid_step_hz(&self, sample_rate_hz: f64) -> f64 {
        self.fine_grid_fraction * self.bin_width_hz(sample_rate_hz)
    }

    /// Whether `N ≤ F_S/B` holds for a signal of bandwidth `bandwidth_hz`.
    /// Logs a warning when it does not.
    pub fn check_short_term_condition(&self, sample_rate_hz: f64, bandwidth_hz: f64) -> bool {
        let limit = sample_rate_hz / bandwidth_hz;
        let ok = self.block_len_n as f64 <= limit;
        if !ok {
            log::warn!(
                "block length {} exceeds F_S/B = {:.1}; a {} Hz wide signal is not stationary over one block",
                self.block_len_n,
                limit,
                bandwidth_hz
            );
        }
        ok
    }
}

/// One stationary sinusoid `amp·exp(j(2π·freq·(t - t_center) + phase))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidEstimate {
    pub amp: f64,
    pub freq_hz: f64,
    /// Phase at the block center, in (-π, π].
    pub phase_rad: f64,
    pub block_index: usize,
    pub t_center_s: f64,
    /// 0 for the first sinusoid peeled from the block.
    pub peel_rank: usize,
}

impl SinusoidEstimate {
    /// Value of the modeled sinusoid at absolute time `t`.
    #[inline]
    pub fn value_at(&self, t: f64) -> Complex64 {
        Complex64::from_polar(
            self.amp,
            2.0 * PI * self.freq_hz * (t - self.t_center_s) + self.phase_rad,
        )
    }
}

/// Everything extracted from one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockEstimates {
    pub block_index: usize,
    pub t_center_s: f64,
    /// In peel order.
    pub estimates: Vec<SinusoidEstimate>,
    /// Mean |x|² of the unwindowed residual after the last accepted peel.
    pub residual_power: f64,
    /// Median DFT bin power seen by the last detection attempt.
    pub noise_floor: f64,
}

/// Result of scanning one windowed block's DFT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPeak {
    pub coarse_bin: usize,
    pub coarse_freq_hz: f64,
    pub peak_power: f64,
    pub noise_floor: f64,
}

impl SpectrumPeak {
    pub fn clears(&self, threshold_db: f64) -> bool {
        if self.peak_power <= 0.0 {
            return false;
        }
        if self.noise_floor <= 0.0 {
            return true;
        }
        self.peak_power / self.noise_floor >= 10f64.powf(threshold_db / 10.0)
    }
}

/// Windowed energy below this fraction of the block's starting energy counts
/// as fully explained; what remains is rounding error.
const EXHAUSTED_ENERGY_RATIO: f64 = 1e-24;

/// Block estimator bound to one configuration and sample rate.
///
/// Holds the window coefficients, the DFT plan and the fine-search phasor
/// table so that per-block work is only multiply-accumulates.
pub struct BlockEstimator {
    config: StsaConfig,
    sample_rate_hz: f64,
    window: Vec<f64>,
    window_mean: f64,
    fft: Arc<dyn Fft<f64>>,
    /// Grid offsets in tie-break priority order: 0, +1, -1, +2, -2, ...
    grid_offsets: Vec<i64>,
    /// Row r holds `exp(-j2π·grid_offsets[r]·δ·t_k)` for k in 0..N.
    grid_phasors: Vec<Complex64>,
}

impl fmt::Debug for BlockEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockEstimator")
            .field("config", &self.config)
            .field("sample_rate_hz", &self.sample_rate_hz)
            .finish_non_exhaustive()
    }
}

impl BlockEstimator {
    pub fn new(config: StsaConfig, sample_rate_hz: f64) -> Result<Self> {
        config.validate()?;
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(StsaError::param("sample rate must be positive"));
        }
        let n = config.block_len_n;
        let window = config.window.coefficients(n);
        let window_mean = window.iter().sum::<f64>() / n as f64;
        if window_mean.is_nan() || window_mean <= 0.0 {
            return Err(StsaError::param(format!(
                "window '{}' has non-positive mean",
                config.window.name()
            )));
        }
        let fft = FftPlanner::new().plan_fft_forward(n);

        let half = (config.fine_search_span_bins / config.fine_grid_fraction + 1e-9).floor() as i64;
        let mut grid_offsets = vec![0i64];
        for i in 1..=half {
            grid_offsets.push(i);
            grid_offsets.push(-i);
        }
        let center = (n as f64 - 1.0) / 2.0;
        let mut grid_phasors = Vec::with_capacity(grid_offsets.len() * n);
        for &i in &grid_offsets {
            // δ·t_k = frac·(k - center)/N cycles
            let cycles_per_sample = i as f64 * config.fine_grid_fraction / n as f64;
            for k in 0..n {
                let phase = -2.0 * PI * cycles_per_sample * (k as f64 - center);
                grid_phasors.push(Complex64::from_polar(1.0, phase));
            }
        }
        Ok(Self {
            config,
            sample_rate_hz,
            window,
            window_mean,
            fft,
            grid_offsets,
            grid_phasors,
        })
    }

    pub fn config(&self) -> &StsaConfig {
        &self.config
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn block_len(&self) -> usize {
        self.config.block_len_n
    }

    pub fn window_coefficients(&self) -> &[f64] {
        &self.window
    }

    pub fn window_mean(&self) -> f64 {
        self.window_mean
    }

    /// Time of sample `k` relative to the block center.
    #[inline]
    pub fn centered_time(&self, k: usize) -> f64 {
        centered_time(k, self.config.block_len_n, self.sample_rate_hz)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.config.block_len_n {
            return Err(StsaError::param(format!(
                "block has {len} samples, configuration expects {}",
                self.config.block_len_n
            )));
        }
        Ok(())
    }

    pub fn apply_window(&self, block: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(block.len())?;
        Ok(self.windowed(block))
    }

    fn windowed(&self, block: &[Complex64]) -> Vec<Complex64> {
        block
            .iter()
            .zip(&self.window)
            .map(|(x, w)| x * *w)
            .collect()
    }

    /// Frequency of DFT bin `bin`, mapped into [-F_S/2, F_S/2).
    pub fn bin_frequency(&self, bin: usize) -> f64 {
        let n = self.config.block_len_n;
        let signed = if bin < n.div_ceil(2) {
            bin as f64
        } else {
            bin as f64 - n as f64
        };
        signed * self.sample_rate_hz / n as f64
    }

    /// Strongest DFT bin of a windowed block and the median bin power.
    pub fn spectrum_peak(&self, windowed: &[Complex64]) -> SpectrumPeak {
        let mut buf = windowed.to_vec();
        self.fft.process(&mut buf);
        let mut powers: Vec<f64> = buf.iter().map(|c| c.norm_sqr()).collect();
        let (coarse_bin, peak_power) =
            powers
                .iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |(bi, bp), (i, &p)| {
                    if p > bp {
                        (i, p)
                    } else {
                        (bi, bp)
                    }
                });
        let noise_floor = median_in_place(&mut powers);
        SpectrumPeak {
            coarse_bin,
            coarse_freq_hz: self.bin_frequency(coarse_bin),
            peak_power,
            noise_floor,
        }
    }

    pub fn detect_peak(&self, windowed: &[Complex64], threshold_db: f64) -> Option<SpectrumPeak> {
        let peak = self.spectrum_peak(windowed);
        peak.clears(threshold_db).then_some(peak)
    }

    /// Grid-search argmax of the correlation magnitude around `coarse_freq_hz`.
    ///
    /// Candidates outside [-F_S/2, F_S/2) are skipped. Ties go to the
    /// candidate nearest the coarse frequency.
    pub fn refine_frequency(&self, windowed: &[Complex64], coarse_freq_hz: f64) -> f64 {
        let n = self.config.block_len_n;
        debug_assert_eq!(windowed.len(), n);
        let mixed: Vec<Complex64> = windowed
            .iter()
            .enumerate()
            .map(|(k, y)| {
                y * Complex64::from_polar(1.0, -2.0 * PI * coarse_freq_hz * self.centered_time(k))
            })
            .collect();
        let step = self.config.grid_step_hz(self.sample_rate_hz);
        let nyq = self.sample_rate_hz / 2.0;
        let mut best_offset = 0i64;
        let mut best = f64::NEG_INFINITY;
        for (row, &offset) in self.grid_phasors.chunks_exact(n).zip(&self.grid_offsets) {
            let f = coarse_freq_hz + offset as f64 * step;
            if f < -nyq || f >= nyq {
                continue;
            }
            let acc = mixed
                .iter()
                .zip(row)
                .fold(Complex64::new(0.0, 0.0), |acc, (z, g)| acc + z * g);
            let mag = acc.norm_sqr();
            if mag > best {
                best = mag;
                best_offset = offset;
            }
        }
        coarse_freq_hz + best_offset as f64 * step
    }

    /// Magnitude and center-referenced phase of the correlation at `freq_hz`,
    /// corrected for the window's coherent gain.
    pub fn estimate_amp_phase(&self, windowed: &[Complex64], freq_hz: f64) -> (f64, f64) {
        let n = self.config.block_len_n;
        let acc = windowed
            .iter()
            .enumerate()
            .fold(Complex64::new(0.0, 0.0), |acc, (k, y)| {
                acc + y * Complex64::from_polar(1.0, -2.0 * PI * freq_hz * self.centered_time(k))
            });
        let c = acc / n as f64;
        (c.norm() / self.window_mean, principal_phase(c.arg()))
    }

    pub fn subtract_sinusoid(&self, block: &[Complex64], est: &SinusoidEstimate) -> Vec<Complex64> {
        subtract_sinusoid(block, est, self.sample_rate_hz)
    }

    /// Peels sinusoids from one block until detection fails, the residual
    /// stops shrinking, or `max_peel` is reached.
    pub fn estimate_block(
        &self,
        block: &[Complex64],
        block_index: usize,
        t_center_s: f64,
    ) -> Result<BlockEstimates> {
        self.check_len(block.len())?;
        let mut residual = block.to_vec();
        let mut windowed = self.windowed(&residual);
        let start_energy = energy(&windowed);
        let mut current_energy = start_energy;
        let mut estimates = Vec::new();
        let mut noise_floor = 0.0;

        while estimates.len() < self.config.max_peel {
            if current_energy <= EXHAUSTED_ENERGY_RATIO * start_energy {
                break;
            }
            let peak = self.spectrum_peak(&windowed);
            noise_floor = peak.noise_floor;
            if !peak.clears(self.config.detect_threshold_db) {
                break;
            }
            let freq_hz = self.refine_frequency(&windowed, peak.coarse_freq_hz);
            let (amp, phase_rad) = self.estimate_amp_phase(&windowed, freq_hz);
            let est = SinusoidEstimate {
                amp,
                freq_hz,
                phase_rad,
                block_index,
                t_center_s,
                peel_rank: estimates.len(),
            };
            let next = self.subtract_sinusoid(&residual, &est);
            let next_windowed = self.windowed(&next);
            let next_energy = energy(&next_windowed);
            if next_energy > current_energy {
                break;
            }
            estimates.push(est);
            residual = next;
            windowed = next_windowed;
            current_energy = next_energy;
        }

        let residual_power =
            residual.iter().map(|c| c.norm_sqr()).sum::<f64>() / residual.len() as f64;
        Ok(BlockEstimates {
            block_index,
            t_center_s,
            estimates,
            residual_power,
            noise_floor,
        })
    }

    /// Start sample and center time of block `index` within `stream`.
    pub fn block_geometry(&self, stream: &SampleStream, index: usize) -> (usize, f64) {
        let start = index * self.config.hop();
        let center = stream.t0_s()
            + (start as f64 + (self.config.block_len_n as f64 - 1.0) / 2.0) / self.sample_rate_hz;
        (start, center)
    }

    /// Number of complete blocks that fit in `len` samples.
    pub fn block_count(&self, len: usize) -> usize {
        let n = self.config.block_len_n;
        if len < n {
            0
        } else {
            (len - n) / self.config.hop() + 1
        }
    }

    /// Runs [`Self::estimate_block`] over every complete block of `stream`.
    /// Blocks are independent and processed in parallel; output is in block order.
    pub fn estimate_stream(&self, stream: &SampleStream) -> Result<Vec<BlockEstimates>> {
        if stream.sample_rate_hz() != self.sample_rate_hz {
            return Err(StsaError::param(format!(
                "stream sampled at {} Hz, estimator built for {} Hz",
                stream.sample_rate_hz(),
                self.sample_rate_hz
            )));
        }
        let n = self.config.block_len_n;
        let samples = stream.samples();
        (0..self.block_count(stream.len()))
            .into_par_iter()
            .map(|i| {
                let (start, center) = self.block_geometry(stream, i);
                self.estimate_block(&samples[start..start + n], i, center)
            })
            .collect()
    }
}

#[inline]
pub fn centered_time(k: usize, n: usize, sample_rate_hz: f64) -> f64 {
    (k as f64 - (n as f64 - 1.0) / 2.0) / sample_rate_hz
}

/// Maps an angle from `atan2` into (-π, π].
#[inline]
pub fn principal_phase(phi: f64) -> f64 {
    if phi <= -PI {
        phi + 2.0 * PI
    } else if phi > PI {
        phi - 2.0 * PI
    } else {
        phi
    }
}

fn energy(x: &[Complex64]) -> f64 {
    x.iter().map(|c| c.norm_sqr()).sum()
}

fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower_max = lower.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_max + upper)
    }
}

/// Elementwise window product.
pub fn apply_window(block: &[Complex64], window: &dyn WindowFunction) -> Vec<Complex64> {
    let n = block.len();
    block
        .iter()
        .enumerate()
        .map(|(k, x)| x * window.weight(k, n))
        .collect()
}

/// `block[k] - amp·exp(j(2π·freq·t_k + phase))` with `t_k` centered on the block.
pub fn subtract_sinusoid(
    block: &[Complex64],
    est: &SinusoidEstimate,
    sample_rate_hz: f64,
) -> Vec<Complex64> {
    let n = block.len();
    block
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let t = centered_time(k, n, sample_rate_hz);
            x - Complex64::from_polar(est.amp, 2.0 * PI * est.freq_hz * t + est.phase_rad)
        })
        .collect()
}

/// Runs the estimator over a whole stream with a freshly built estimator.
pub fn estimate_stream(stream: &SampleStream, config: &StsaConfig) -> Result<Vec<BlockEstimates>> {
    BlockEstimator::new(config.clone(), stream.sample_rate_hz())?.estimate_stream(stream)
}

/// CSV with columns `block_index,t_center_s,peel_rank,amp,freq_hz,phase_rad`.
pub fn write_estimates_csv<W: Write>(blocks: &[BlockEstimates], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "block_index,t_center_s,peel_rank,amp,freq_hz,phase_rad"
    )?;
    for b in blocks {
        for e in &b.estimates {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                e.block_index, e.t_center_s, e.peel_rank, e.amp, e.freq_hz, e.phase_rad
            )?;
        }
    }
    Ok(())
}
