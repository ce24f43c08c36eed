//! Synthetic sinusoidal-carrier-modulated signals with known ground truth.
//!
//! Every generator returns the emitted stream together with a [`TruthRecord`]
//! holding the instantaneous amplitude and frequency of each component at
//! every sample. Frequencies are complex-baseband offsets in Hz; the angular
//! frequency is `2π·f`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, StsaError};
use crate::iq_io::SampleStream;

/// Ground truth for one generated component.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTruth {
    pub label: String,
    /// A(t) at each sample, never negative.
    pub amplitude: Vec<f64>,
    /// f(t) at each sample, Hz.
    pub f_inst_hz: Vec<f64>,
    /// Phase of sample 0. Sample k has phase
    /// `initial_phase_rad + Σ_{i=1..=k} 2π f_inst_hz[i] / F_S`.
    pub initial_phase_rad: f64,
}

/// Ground truth for every component of a (possibly mixed) stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub sample_rate_hz: f64,
    pub signals: Vec<SignalTruth>,
}

impl TruthRecord {
    fn single(sample_rate_hz: f64, truth: SignalTruth) -> Self {
        Self {
            sample_rate_hz,
            signals: vec![truth],
        }
    }

    /// Concatenates the component lists of several records.
    pub fn merge(records: impl IntoIterator<Item = TruthRecord>) -> Result<Self> {
        let mut iter = records.into_iter();
        let mut first = iter
            .next()
            .ok_or_else(|| StsaError::param("cannot merge zero truth records"))?;
        for rec in iter {
            if rec.sample_rate_hz != first.sample_rate_hz {
                return Err(StsaError::param(
                    "truth records have different sample rates",
                ));
            }
            first.signals.extend(rec.signals);
        }
        Ok(first)
    }
}

/// The modulating waveform m(t) of an FM signal, normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub enum Modulation {
    /// Sum of `a·cos(2π f t)` terms; amplitudes must sum to at most 1.
    Tones(Vec<ModTone>),
    /// Voice-like band-limited noise: a sum of `components` sinusoids with
    /// seeded random frequencies in (0, max_freq_hz] and random phases, scaled
    /// so that max |m| over the generated span is exactly 1.
    BandLimitedNoise {
        max_freq_hz: f64,
        components: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModTone {
    pub freq_hz: f64,
    pub amplitude: f64,
}

impl Modulation {
    pub fn tone(freq_hz: f64) -> Self {
        Modulation::Tones(vec![ModTone {
            freq_hz,
            amplitude: 1.0,
        }])
    }

    pub fn noise(max_freq_hz: f64, seed: u64) -> Self {
        Modulation::BandLimitedNoise {
            max_freq_hz,
            components: 48,
            seed,
        }
    }

    /// Highest modulating frequency, used by Carson's rule.
    pub fn max_freq_hz(&self) -> f64 {
        match self {
            Modulation::Tones(tones) => tones
                .iter()
                .filter(|t| t.amplitude != 0.0)
                .map(|t| t.freq_hz.abs())
                .fold(0.0, f64::max),
            Modulation::BandLimitedNoise { max_freq_hz, .. } => *max_freq_hz,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Modulation::Tones(tones) => {
                let mut total = 0.0;
                for t in tones {
                    if !(0.0..=1.0).contains(&t.amplitude) || !t.freq_hz.is_finite() {
                        return Err(StsaError::param(format!(
                            "modulating tone {} Hz has amplitude {} outside [0, 1]",
                            t.freq_hz, t.amplitude
                        )));
                    }
                    total += t.amplitude;
                }
                if total > 1.0 + 1e-12 {
                    return Err(StsaError::param(format!(
                        "modulating tone amplitudes sum to {total}, must be at most 1"
                    )));
                }
            }
            Modulation::BandLimitedNoise {
                max_freq_hz,
                components,
                ..
            } => {
                if !(max_freq_hz.is_finite() && *max_freq_hz > 0.0) || *components == 0 {
                    return Err(StsaError::param(
                        "band-limited modulation needs a positive bandwidth and at least one component",
                    ));
                }
            }
        }
        Ok(())
    }

    /// m(k) for k in 0..n.
    pub fn render(&self, n: usize, sample_rate_hz: f64) -> Vec<f64> {
        let dt = 1.0 / sample_rate_hz;
        match self {
            Modulation::Tones(tones) => (0..n)
                .map(|k| {
                    let t = k as f64 * dt;
                    tones
                        .iter()
                        .map(|tone| tone.amplitude * (2.0 * PI * tone.freq_hz * t).cos())
                        .sum()
                })
                .collect(),
            Modulation::BandLimitedNoise {
                max_freq_hz,
                components,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let parts: Vec<(f64, f64)> = (0..*components)
                    .map(|_| {
                        let f = max_freq_hz * (1.0 - rng.random::<f64>());
                        let phase = 2.0 * PI * rng.random::<f64>();
                        (f, phase)
                    })
                    .collect();
                let mut m: Vec<f64> = (0..n)
                    .map(|k| {
                        let t = k as f64 * dt;
                        parts
                            .iter()
                            .map(|(f, p)| (2.0 * PI * f * t + p).cos())
                            .sum()
                    })
                    .collect();
                let peak = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if peak > 0.0 {
                    m.iter_mut().for_each(|v| *v /= peak);
                }
                m
            }
        }
    }
}

/// Narrowband FM signal description.
#[derive(Debug, Clone, PartialEq)]
pub struct NbfmSpec {
    pub carrier_offset_hz: f64,
    /// Peak frequency deviation, Hz.
    pub deviation_hz: f64,
    pub modulation: Modulation,
    pub amplitude: f64,
    pub duration_s: f64,
    pub initial_phase_rad: f64,
}

impl NbfmSpec {
    /// `2·(deviation + highest modulating frequency)`.
    pub fn carson_bandwidth_hz(&self) -> f64 {
        carson_bandwidth_hz(self.deviation_hz, self.modulation.max_freq_hz())
    }

    /// Carson band centered on the carrier.
    pub fn carson_band(&self) -> (f64, f64) {
        let half = 0.5 * self.carson_bandwidth_hz();
        (self.carrier_offset_hz - half, self.carrier_offset_hz + half)
    }
}

pub fn carson_bandwidth_hz(deviation_hz: f64, max_mod_freq_hz: f64) -> f64 {
    2.0 * (deviation_hz.abs() + max_mod_freq_hz.abs())
}

/// Converts an in-band SNR to the SNR over the full Nyquist bandwidth.
pub fn full_band_snr_db(in_band_snr_db: f64, band_width_hz: f64, sample_rate_hz: f64) -> f64 {
    in_band_snr_db - 10.0 * (sample_rate_hz / band_width_hz).log10()
}

fn check_rate(sample_rate_hz: f64) -> Result<()> {
    if sample_rate_hz.is_finite() && sample_rate_hz > 0.0 {
        Ok(())
    } else {
        Err(StsaError::param(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )))
    }
}

fn check_nyquist(f_hz: f64, sample_rate_hz: f64, what: &str) -> Result<()> {
    if f_hz.is_finite() && f_hz.abs() < sample_rate_hz / 2.0 {
        Ok(())
    } else {
        Err(StsaError::param(format!(
            "{what} {f_hz} Hz violates Nyquist (|f| < {} Hz)",
            sample_rate_hz / 2.0
        )))
    }
}

#[inline]
fn wrap_phase(mut phi: f64) -> f64 {
    if phi > PI {
        phi -= 2.0 * PI;
    } else if phi <= -PI {
        phi += 2.0 * PI;
    }
    phi
}

/// Constant-parameter tone: sample k is `A·exp(j(2πf·k/F_S + ψ))`.
pub fn gen_tone(
    amplitude: f64,
    f_hz: f64,
    psi_rad: f64,
    n: usize,
    sample_rate_hz: f64,
) -> Result<(SampleStream, TruthRecord)> {
    check_rate(sample_rate_hz)?;
    check_nyquist(f_hz, sample_rate_hz, "tone frequency")?;
    if !(amplitude.is_finite() && amplitude >= 0.0) {
        return Err(StsaError::param(format!(
            "amplitude must be >= 0, got {amplitude}"
        )));
    }
    let w = 2.0 * PI * f_hz / sample_rate_hz;
    let samples = (0..n)
        .map(|k| Complex64::from_polar(amplitude, w * k as f64 + psi_rad))
        .collect();
    let truth = SignalTruth {
        label: format!("tone {f_hz} Hz"),
        amplitude: vec![amplitude; n],
        f_inst_hz: vec![f_hz; n],
        initial_phase_rad: psi_rad,
    };
    Ok((
        SampleStream::new(samples, sample_rate_hz)?,
        TruthRecord::single(sample_rate_hz, truth),
    ))
}

/// Frequency-modulated carrier with phase accumulated sample by sample.
pub fn gen_nbfm(spec: &NbfmSpec, sample_rate_hz: f64) -> Result<(SampleStream, TruthRecord)> {
    check_rate(sample_rate_hz)?;
    spec.modulation.validate()?;
    if !(spec.amplitude.is_finite() && spec.amplitude > 0.0) {
        return Err(StsaError::param("FM amplitude must be positive"));
    }
    if !(spec.deviation_hz.is_finite() && spec.deviation_hz >= 0.0) {
        return Err(StsaError::param("FM deviation must be non-negative"));
    }
    if !(spec.duration_s.is_finite() && spec.duration_s >= 0.0) {
        return Err(StsaError::param("duration must be non-negative"));
    }
    let carson = spec.carson_bandwidth_hz();
    if carson >= sample_rate_hz {
        return Err(StsaError::param(format!(
            "Carson bandwidth {carson} Hz must be below the sample rate {sample_rate_hz} Hz"
        )));
    }
    let peak = spec.carrier_offset_hz.abs() + spec.deviation_hz;
    check_nyquist(peak, sample_rate_hz, "peak instantaneous frequency")?;

    let n = (spec.duration_s * sample_rate_hz).round() as usize;
    let m = spec.modulation.render(n, sample_rate_hz);
    let f_inst: Vec<f64> = m
        .iter()
        .map(|v| spec.carrier_offset_hz + spec.deviation_hz * v)
        .collect();

    let scale = 2.0 * PI / sample_rate_hz;
    let mut phi = wrap_phase(spec.initial_phase_rad);
    let mut samples = Vec::with_capacity(n);
    for (k, f) in f_inst.iter().enumerate() {
        if k > 0 {
            phi = wrap_phase(phi + scale * f);
        }
        samples.push(Complex64::from_polar(spec.amplitude, phi));
    }
    let truth = SignalTruth {
        label: format!("nbfm {} Hz", spec.carrier_offset_hz),
        amplitude: vec![spec.amplitude; n],
        f_inst_hz: f_inst,
        initial_phase_rad: spec.initial_phase_rad,
    };
    Ok((
        SampleStream::new(samples, sample_rate_hz)?,
        TruthRecord::single(sample_rate_hz, truth),
    ))
}

/// Amplitude-modulated carrier: `A(t) = A0·(1 + m·cos(2π f_m t))`.
pub fn gen_am(
    carrier_offset_hz: f64,
    a0: f64,
    mod_index: f64,
    mod_freq_hz: f64,
    n: usize,
    sample_rate_hz: f64,
) -> Result<(SampleStream, TruthRecord)> {
    check_rate(sample_rate_hz)?;
    check_nyquist(carrier_offset_hz, sample_rate_hz, "carrier offset")?;
    check_nyquist(
        carrier_offset_hz.abs() + mod_freq_hz.abs(),
        sample_rate_hz,
        "upper sideband",
    )?;
    if !(0.0..=1.0).contains(&mod_index) {
        return Err(StsaError::param(format!(
            "AM index {mod_index} outside [0, 1]"
        )));
    }
    if !(a0.is_finite() && a0 >= 0.0) {
        return Err(StsaError::param("AM carrier amplitude must be >= 0"));
    }
    let w = 2.0 * PI * carrier_offset_hz / sample_rate_hz;
    let wm = 2.0 * PI * mod_freq_hz / sample_rate_hz;
    let amplitude: Vec<f64> = (0..n)
        .map(|k| a0 * (1.0 + mod_index * (wm * k as f64).cos()))
        .collect();
    let samples = amplitude
        .iter()
        .enumerate()
        .map(|(k, a)| Complex64::from_polar(*a, w * k as f64))
        .collect();
    let truth = SignalTruth {
        label: format!("am {carrier_offset_hz} Hz"),
        amplitude,
        f_inst_hz: vec![carrier_offset_hz; n],
        initial_phase_rad: 0.0,
    };
    Ok((
        SampleStream::new(samples, sample_rate_hz)?,
        TruthRecord::single(sample_rate_hz, truth),
    ))
}

/// Elementwise sum of equally long, equally sampled streams.
pub fn mix(streams: &[SampleStream]) -> Result<SampleStream> {
    let first = streams
        .first()
        .ok_or_else(|| StsaError::param("mix needs at least one stream"))?;
    let mut acc = first.samples().to_vec();
    for s in &streams[1..] {
        if s.len() != first.len() {
            return Err(StsaError::param(format!(
                "cannot mix streams of length {} and {}",
                first.len(),
                s.len()
            )));
        }
        if s.sample_rate_hz() != first.sample_rate_hz() {
            return Err(StsaError::param(
                "cannot mix streams with different sample rates",
            ));
        }
        for (a, b) in acc.iter_mut().zip(s.samples()) {
            *a += b;
        }
    }
    Ok(first.with_samples(acc))
}

/// Complex noise variance (E|n|²) that puts `snr_db` of `signal_power` over the
/// noise falling in a band of `band_width_hz`, for noise flat across `sample_rate_hz`.
pub fn noise_variance_for_snr(
    signal_power: f64,
    snr_db: f64,
    band_width_hz: f64,
    sample_rate_hz: f64,
) -> f64 {
    signal_power * sample_rate_hz / (band_width_hz * 10f64.powf(snr_db / 10.0))
}

/// Seeded circular complex Gaussian noise with E|n|² = `variance`.
pub fn complex_awgn(len: usize, variance: f64, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = (variance / 2.0).sqrt();
    (0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(sigma * re, sigma * im)
        })
        .collect()
}

/// Adds white noise so that signal power over the in-band noise power equals
/// `10^(snr_db/10)`. `snr_db = +∞` returns the input untouched.
pub fn add_awgn(
    stream: &SampleStream,
    snr_db: f64,
    signal_band_hz: (f64, f64),
    rng_seed: u64,
) -> Result<SampleStream> {
    let (lo, hi) = signal_band_hz;
    let nyq = stream.sample_rate_hz() / 2.0;
    if !(lo < hi && lo >= -nyq && hi <= nyq) {
        return Err(StsaError::param(format!(
            "signal band ({lo}, {hi}) Hz must be ordered and within ±{nyq} Hz"
        )));
    }
    if stream.is_empty() {
        return Err(StsaError::param("cannot add noise to an empty stream"));
    }
    if snr_db == f64::INFINITY {
        return Ok(stream.clone());
    }
    if snr_db.is_nan() {
        return Err(StsaError::param("SNR is NaN"));
    }
    let p = stream.mean_power();
    if p <= 0.0 {
        return Err(StsaError::param(
            "zero-power input cannot be given a finite SNR",
        ));
    }
    let var = noise_variance_for_snr(p, snr_db, hi - lo, stream.sample_rate_hz());
    let noise = complex_awgn(stream.len(), var, rng_seed);
    let out = stream
        .samples()
        .iter()
        .zip(noise)
        .map(|(s, n)| s + n)
        .collect();
    Ok(stream.with_samples(out))
}
