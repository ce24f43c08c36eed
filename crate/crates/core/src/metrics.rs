//! Averaged power spectra, dynamic spectra and suppression measurements.
//!
//! Analysis spectra use rectangular, non-overlapping segments. Each bin holds
//! `|X_k|² / L²` averaged over segments, so the bins of a frame sum to the
//! mean-square sample power of the analyzed segments.

use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Result, StsaError};
use crate::iq_io::SampleStream;

/// Resolution used for published spectra and suppression reports.
pub const DEFAULT_RESOLUTION_HZ: f64 = 125.0;

/// One averaged power spectrum, bins in ascending frequency from -F_S/2.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFrame {
    pub freqs_hz: Vec<f64>,
    /// Linear power per bin.
    pub power: Vec<f64>,
    pub resolution_hz: f64,
    pub averaging_count: usize,
}

impl SpectrumFrame {
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Power spectral density, power per Hz.
    pub fn psd(&self) -> Vec<f64> {
        self.power.iter().map(|p| p / self.resolution_hz).collect()
    }

    fn tol(&self) -> f64 {
        1e-9 * self.resolution_hz
    }

    /// Sum of bins whose center lies in `[lo, hi]`.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        let eps = self.tol();
        self.freqs_hz
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f >= lo - eps && **f <= hi + eps)
            .map(|(_, p)| p)
            .sum()
    }

    /// Sum of bins whose center lies strictly outside `[lo, hi]`.
    pub fn power_outside(&self, lo: f64, hi: f64) -> f64 {
        let eps = self.tol();
        self.freqs_hz
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f < lo - eps || **f > hi + eps)
            .map(|(_, p)| p)
            .sum()
    }

    /// Index and frequency of the strongest bin.
    pub fn peak(&self) -> (usize, f64) {
        let (i, _) =
            self.power
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bp), (i, &p)| {
                    if p > bp {
                        (i, p)
                    } else {
                        (bi, bp)
                    }
                });
        (i, self.freqs_hz[i])
    }

    /// Band holding `fraction` of the total power, with `(1 - fraction)/2`
    /// left below the lower edge and above the upper edge. Edges are bin centers.
    pub fn occupied_band(&self, fraction: f64) -> (f64, f64) {
        let total = self.total_power();
        let tail = 0.5 * (1.0 - fraction) * total;
        let mut acc = 0.0;
        let mut lo = self.freqs_hz[0];
        for (f, p) in self.freqs_hz.iter().zip(&self.power) {
            acc += p;
            if acc > tail {
                lo = *f;
                break;
            }
        }
        let mut acc = 0.0;
        let mut hi = *self.freqs_hz.last().unwrap();
        for (f, p) in self.freqs_hz.iter().zip(&self.power).rev() {
            acc += p;
            if acc > tail {
                hi = *f;
                break;
            }
        }
        (lo, hi)
    }
}

fn check_band(lo: f64, hi: f64, sample_rate_hz: f64) -> Result<()> {
    let nyq = sample_rate_hz / 2.0;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(StsaError::param(format!(
            "band ({lo}, {hi}) Hz is inverted or not finite"
        )));
    }
    if lo < -nyq || hi > nyq {
        return Err(StsaError::param(format!(
            "band ({lo}, {hi}) Hz exceeds ±{nyq} Hz"
        )));
    }
    Ok(())
}

fn segment_len(sample_rate_hz: f64, resolution_hz: f64) -> Result<usize> {
    if !(resolution_hz.is_finite() && resolution_hz > 0.0) {
        return Err(StsaError::param("resolution must be positive"));
    }
    let l = (sample_rate_hz / resolution_hz).round();
    if l < 1.0 {
        return Err(StsaError::param(format!(
            "resolution {resolution_hz} Hz is coarser than the sample rate"
        )));
    }
    Ok(l as usize)
}

fn spectrum_of(samples: &[Complex64], sample_rate_hz: f64, seg_len: usize) -> SpectrumFrame {
    let mut fft = FftPlanner::new();
    let plan = fft.plan_fft_forward(seg_len);
    let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    let mut acc = vec![0.0; seg_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); seg_len];
    let segments = samples.len() / seg_len;
    for chunk in samples.chunks_exact(seg_len) {
        buf.copy_from_slice(chunk);
        plan.process_with_scratch(&mut buf, &mut scratch);
        for (a, x) in acc.iter_mut().zip(&buf) {
            *a += x.norm_sqr();
        }
    }
    let norm = 1.0 / (segments as f64 * (seg_len * seg_len) as f64);
    let half = seg_len / 2;
    let res = sample_rate_hz / seg_len as f64;
    let mut freqs = Vec::with_capacity(seg_len);
    let mut power = Vec::with_capacity(seg_len);
    for j in 0..seg_len {
        let bin = (j + seg_len - half) % seg_len;
        freqs.push((j as f64 - half as f64) * res);
        power.push(acc[bin] * norm);
    }
    SpectrumFrame {
        freqs_hz: freqs,
        power,
        resolution_hz: res,
        averaging_count: segments,
    }
}

/// Averages the spectra of consecutive segments of `round(F_S/resolution)` samples.
pub fn power_spectrum(stream: &SampleStream, resolution_hz: f64) -> Result<SpectrumFrame> {
    let l = segment_len(stream.sample_rate_hz(), resolution_hz)?;
    if stream.len() < l {
        return Err(StsaError::param(format!(
            "{} samples cannot resolve {resolution_hz} Hz (need at least {l})",
            stream.len()
        )));
    }
    Ok(spectrum_of(stream.samples(), stream.sample_rate_hz(), l))
}

/// Time-frequency power matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicSpectrum {
    pub freqs_hz: Vec<f64>,
    /// Center time of each row.
    pub times_s: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub resolution_hz: f64,
    pub cell_len: usize,
    pub segments_per_cell: usize,
}

impl DynamicSpectrum {
    /// Bin-wise mean over rows.
    pub fn mean_row(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.freqs_hz.len()];
        for row in &self.rows {
            for (a, p) in m.iter_mut().zip(row) {
                *a += p;
            }
        }
        let n = self.rows.len().max(1) as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

/// Splits the stream into cells of `round(t_res·F_S)` samples and computes an
/// averaged spectrum at `f_res_hz` in each.
pub fn dynamic_spectrum(
    stream: &SampleStream,
    t_res_s: f64,
    f_res_hz: f64,
) -> Result<DynamicSpectrum> {
    let rate = stream.sample_rate_hz();
    let l = segment_len(rate, f_res_hz)?;
    if !(t_res_s.is_finite() && t_res_s > 0.0) {
        return Err(StsaError::param("time resolution must be positive"));
    }
    let cell = (t_res_s * rate).round() as usize;
    if cell < l {
        return Err(StsaError::param(format!(
            "a {t_res_s} s cell holds {cell} samples, fewer than one {l}-sample segment at {f_res_hz} Hz"
        )));
    }
    let rows: Vec<SpectrumFrame> = stream
        .samples()
        .chunks_exact(cell)
        .map(|c| spectrum_of(c, rate, l))
        .collect();
    if rows.is_empty() {
        return Err(StsaError::param("stream is shorter than one time cell"));
    }
    let times_s = (0..rows.len())
        .map(|i| stream.t0_s() + (i as f64 + 0.5) * cell as f64 / rate)
        .collect();
    Ok(DynamicSpectrum {
        freqs_hz: rows[0].freqs_hz.clone(),
        times_s,
        resolution_hz: rows[0].resolution_hz,
        segments_per_cell: rows[0].averaging_count,
        rows: rows.into_iter().map(|r| r.power).collect(),
        cell_len: cell,
    })
}

/// Power of the stream within `[lo, hi]`, from an averaged spectrum at `resolution_hz`.
pub fn band_power(stream: &SampleStream, band_hz: (f64, f64), resolution_hz: f64) -> Result<f64> {
    check_band(band_hz.0, band_hz.1, stream.sample_rate_hz())?;
    Ok(power_spectrum(stream, resolution_hz)?.band_power(band_hz.0, band_hz.1))
}

/// `10·log10(a/b)` computed as a difference of logs so that swapping the
/// arguments negates the result exactly.
fn ratio_db(a: f64, b: f64) -> f64 {
    match (a > 0.0, b > 0.0) {
        (true, true) => 10.0 * (a.log10() - b.log10()),
        (true, false) => f64::INFINITY,
        (false, true) => f64::NEG_INFINITY,
        (false, false) => 0.0,
    }
}

/// Before/after power comparison for one band.
#[derive(Debug, Clone, PartialEq)]
pub struct SuppressionReport {
    pub band_hz: (f64, f64),
    pub resolution_hz: f64,
    pub power_before: f64,
    pub power_after: f64,
    /// `10·log10(before/after)`; `+∞` when nothing remains in band.
    pub suppression_db: f64,
    pub out_of_band_before: f64,
    pub out_of_band_after: f64,
    /// `10·log10(after/before)` outside the band and its one-bin guard.
    pub out_of_band_delta_db: f64,
    pub snr_in_band_db: Option<f64>,
}

impl fmt::Display for SuppressionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "band_hz:              {} .. {}",
            self.band_hz.0, self.band_hz.1
        )?;
        writeln!(f, "resolution_hz:        {}", self.resolution_hz)?;
        writeln!(f, "power_before:         {:e}", self.power_before)?;
        writeln!(f, "power_after:          {:e}", self.power_after)?;
        writeln!(f, "suppression_db:       {:.3}", self.suppression_db)?;
        writeln!(f, "out_of_band_delta_db: {:.4}", self.out_of_band_delta_db)?;
        match self.snr_in_band_db {
            Some(s) => writeln!(f, "snr_in_band_db:       {s:.3}"),
            None => writeln!(f, "snr_in_band_db:       n/a"),
        }
    }
}

impl SuppressionReport {
    pub fn csv_header() -> &'static str {
        "band_lo_hz,band_hi_hz,resolution_hz,power_before,power_after,suppression_db,out_of_band_before,out_of_band_after,out_of_band_delta_db,snr_in_band_db"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.band_hz.0,
            self.band_hz.1,
            self.resolution_hz,
            self.power_before,
            self.power_after,
            self.suppression_db,
            self.out_of_band_before,
            self.out_of_band_after,
            self.out_of_band_delta_db,
            self.snr_in_band_db
                .map(|s| s.to_string())
                .unwrap_or_default()
        )
    }
}

fn check_pair(a: &SampleStream, b: &SampleStream) -> Result<()> {
    if a.len() != b.len() {
        return Err(StsaError::param(format!(
            "streams differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.sample_rate_hz() != b.sample_rate_hz() {
        return Err(StsaError::param("streams differ in sample rate"));
    }
    Ok(())
}

/// Compares `residual` against `original` in `band_hz`.
///
/// `noise_in_band` is the known noise power inside the band, when the caller
/// has ground truth; it yields `snr_in_band_db`.
pub fn suppression_report(
    original: &SampleStream,
    residual: &SampleStream,
    band_hz: (f64, f64),
    resolution_hz: f64,
    noise_in_band: Option<f64>,
) -> Result<SuppressionReport> {
    check_pair(original, residual)?;
    check_band(band_hz.0, band_hz.1, original.sample_rate_hz())?;
    let before = power_spectrum(original, resolution_hz)?;
    let after = power_spectrum(residual, resolution_hz)?;
    Ok(report_from_frames(&before, &after, band_hz, noise_in_band))
}

/// Same as [`suppression_report`] on precomputed spectra of equal resolution.
pub fn report_from_frames(
    before: &SpectrumFrame,
    after: &SpectrumFrame,
    band_hz: (f64, f64),
    noise_in_band: Option<f64>,
) -> SuppressionReport {
    let (lo, hi) = band_hz;
    let res = before.resolution_hz;
    let pb = before.band_power(lo, hi);
    let pa = after.band_power(lo, hi);
    let ob = before.power_outside(lo - res, hi + res);
    let oa = after.power_outside(lo - res, hi + res);
    let snr = noise_in_band
        .filter(|n| *n > 0.0)
        .map(|n| 10.0 * ((pb - n) / n).log10());
    SuppressionReport {
        band_hz,
        resolution_hz: res,
        power_before: pb,
        power_after: pa,
        suppression_db: ratio_db(pb, pa),
        out_of_band_before: ob,
        out_of_band_after: oa,
        out_of_band_delta_db: ratio_db(oa, ob),
        snr_in_band_db: snr,
    }
}

/// Power near one offset from the carrier, before and after cancellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombProbe {
    pub offset_hz: f64,
    pub power_before: f64,
    pub power_after: f64,
}

impl CombProbe {
    /// Residual power relative to the original at this offset, dB.
    pub fn excess_db(&self) -> f64 {
        ratio_db(self.power_after, self.power_before)
    }
}

/// Measures the block-rate artifact: power within `±half_window_hz` of
/// `center_hz ± k·block_rate_hz` for `k` in `1..=harmonics`.
pub fn comb_artifact(
    before: &SpectrumFrame,
    after: &SpectrumFrame,
    center_hz: f64,
    block_rate_hz: f64,
    half_window_hz: f64,
    harmonics: usize,
) -> Vec<CombProbe> {
    let mut probes = Vec::with_capacity(2 * harmonics);
    for k in 1..=harmonics {
        for sign in [-1.0, 1.0] {
            let off = sign * k as f64 * block_rate_hz;
            let f = center_hz + off;
            probes.push(CombProbe {
                offset_hz: off,
                power_before: before.band_power(f - half_window_hz, f + half_window_hz),
                power_after: after.band_power(f - half_window_hz, f + half_window_hz),
            });
        }
    }
    probes
}

/// CSV with columns `freq_hz,power`.
pub fn write_spectrum_csv<W: Write>(frame: &SpectrumFrame, mut out: W) -> std::io::Result<()> {
    writeln!(out, "freq_hz,power")?;
    for (f, p) in frame.freqs_hz.iter().zip(&frame.power) {
        writeln!(out, "{f},{p}")?;
    }
    Ok(())
}

/// Row-major CSV: header `t_s,<f_0>,<f_1>,...`, then one row per time cell.
pub fn write_dynamic_csv<W: Write>(ds: &DynamicSpectrum, mut out: W) -> std::io::Result<()> {
    write!(out, "t_s")?;
    for f in &ds.freqs_hz {
        write!(out, ",{f}")?;
    }
    writeln!(out)?;
    for (t, row) in ds.times_s.iter().zip(&ds.rows) {
        write!(out, "{t}")?;
        for p in row {
            write!(out, ",{p}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
