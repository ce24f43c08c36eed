#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use stsa::prelude::*;
use stsa::siggen::{complex_awgn, noise_variance_for_snr};

pub const RATE: f64 = 2.048e6;

/// Tone sampled on a block's centered time axis.
pub fn tone_block(n: usize, amp: f64, f: f64, phase: f64, rate: f64) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let t = (k as f64 - (n as f64 - 1.0) / 2.0) / rate;
            Complex64::from_polar(amp, 2.0 * PI * f * t + phase)
        })
        .collect()
}

pub fn energy(x: &[Complex64]) -> f64 {
    x.iter().map(|c| c.norm_sqr()).sum()
}

pub fn nbfm(carrier: f64, seed: u64, duration_s: f64) -> NbfmSpec {
    NbfmSpec {
        carrier_offset_hz: carrier,
        deviation_hz: 4e3,
        modulation: Modulation::noise(1e3, seed),
        amplitude: 0.3,
        duration_s,
        initial_phase_rad: 0.0,
    }
}

/// The single-signal reproduction scenario: noise-modulated NBFM at 34 dB
/// in its Carson band, 2.048 MHz, `duration_s` long.
pub struct NbfmScenario {
    pub spec: NbfmSpec,
    pub clean: SampleStream,
    pub noisy: SampleStream,
    pub band: (f64, f64),
}

pub fn nbfm_scenario(duration_s: f64, seed: u64) -> NbfmScenario {
    let spec = nbfm(0.0, seed, duration_s);
    let (clean, _) = gen_nbfm(&spec, RATE).unwrap();
    let band = spec.carson_band();
    let noisy = add_awgn(&clean, 34.0, band, seed ^ 0xA5A5).unwrap();
    NbfmScenario {
        spec,
        clean,
        noisy,
        band,
    }
}

/// Three NBFM carriers at −25 kHz / 0 / +25 kHz with in-band SNRs 24/34/20 dB
/// over a common white noise floor.
pub struct ThreeCarrier {
    pub mixed: SampleStream,
    pub carriers: [f64; 3],
    pub snrs_db: [f64; 3],
}

pub fn three_carrier(duration_s: f64) -> ThreeCarrier {
    let carriers = [0.0, -25e3, 25e3];
    let snrs_db = [34.0, 24.0, 20.0];
    let reference = 0.3f64 * 0.3;
    let var = noise_variance_for_snr(reference, 34.0, 10e3, RATE);
    let mut parts = Vec::new();
    for (i, (c, snr)) in carriers.iter().zip(snrs_db).enumerate() {
        let mut spec = nbfm(*c, 100 + i as u64, duration_s);
        let power = var * 10e3 / RATE * 10f64.powf(snr / 10.0);
        spec.amplitude = power.sqrt();
        parts.push(gen_nbfm(&spec, RATE).unwrap().0);
    }
    let len = parts[0].len();
    parts.push(SampleStream::new(complex_awgn(len, var, 77), RATE).unwrap());
    ThreeCarrier {
        mixed: mix(&parts).unwrap(),
        carriers,
        snrs_db,
    }
}

/// Cramér–Rao bounds (variances) for (amplitude, frequency in Hz, phase) of
/// `amp·exp(j(2πf·t_k + φ))` in circular white noise of variance `sigma2`,
/// with t_k centered on the block and only samples where `mask[k]` is true
/// observed. The Fisher matrix is built from finite-difference derivatives.
pub fn crb_tone(mask: &[bool], amp: f64, f: f64, phase: f64, sigma2: f64, rate: f64) -> [f64; 3] {
    let n = mask.len();
    let model = |theta: [f64; 3], k: usize| {
        let t = (k as f64 - (n as f64 - 1.0) / 2.0) / rate;
        Complex64::from_polar(theta[0], 2.0 * PI * theta[1] * t + theta[2])
    };
    let theta = [amp, f, phase];
    let steps = [1e-6 * amp.max(1e-12), 1e-3, 1e-6];
    let mut grads = vec![[Complex64::new(0.0, 0.0); 3]; n];
    for (k, g) in grads.iter_mut().enumerate() {
        for p in 0..3 {
            let mut up = theta;
            let mut dn = theta;
            up[p] += steps[p];
            dn[p] -= steps[p];
            g[p] = (model(up, k) - model(dn, k)) / (2.0 * steps[p]);
        }
    }
    let mut fim = [[0.0f64; 3]; 3];
    for (k, g) in grads.iter().enumerate() {
        if !mask[k] {
            continue;
        }
        for i in 0..3 {
            for j in 0..3 {
                fim[i][j] += 2.0 / sigma2 * (g[i].conj() * g[j]).re;
            }
        }
    }
    let inv = invert3(fim);
    [inv[0][0], inv[1][1], inv[2][2]]
}

fn invert3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det
        })
    })
}

/// Direct `|Σ y[k]·exp(-j2πf·t_k)|` on the centered time axis.
pub fn correlation_mag(y: &[Complex64], f: f64, rate: f64) -> f64 {
    let n = y.len();
    y.iter()
        .enumerate()
        .map(|(k, v)| {
            let t = (k as f64 - (n as f64 - 1.0) / 2.0) / rate;
            v * Complex64::from_polar(1.0, -2.0 * PI * f * t)
        })
        .sum::<Complex64>()
        .norm()
}
