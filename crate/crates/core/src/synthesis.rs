//! Track assembly, waveform synthesis and coherent cancellation.
//!
//! Each block estimate is taken to be exact at its block center. Between
//! the centers of two adjacent blocks of the same track the synthesized
//! waveform cross-fades linearly from one block's sinusoid to the next:
//!
//! ```text
//! s(t) = (1 - α)·x̂_i(t) + α·x̂_{i+1}(t),   α = (t - c_i) / (c_{i+1} - c_i)
//! ```
//!
//! Outside a run of adjacent blocks each block's own sinusoid is used
//! unblended up to its block edge. Samples no block of the track reaches
//! are left at zero and flagged as uncovered.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;

use crate::blockproc::{BlockEstimates, SinusoidEstimate, StsaConfig};
use crate::error::{Result, StsaError};
use crate::iq_io::SampleStream;

/// Time-ordered estimates attributed to one signal, at most one per block.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub signal_id: usize,
    pub entries: Vec<SinusoidEstimate>,
}

impl Track {
    pub fn mean_amp(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.iter().map(|e| e.amp).sum::<f64>() / self.entries.len() as f64
    }

    pub fn mean_freq_hz(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.iter().map(|e| e.freq_hz).sum::<f64>() / self.entries.len() as f64
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Strategy that groups per-block estimates into tracks.
pub trait TrackAssociator: Send + Sync {
    fn name(&self) -> &'static str;

    /// `blocks` must be in increasing block-index order.
    fn assemble(
        &self,
        blocks: &[BlockEstimates],
        config: &StsaConfig,
        sample_rate_hz: f64,
    ) -> Vec<Track>;
}

impl fmt::Debug for dyn TrackAssociator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TrackAssociator({})", self.name())
    }
}

/// Greedy nearest-frequency association.
///
/// Estimates are visited block by block in peel order. Each one joins the
/// not-yet-extended track whose last frequency is nearest, provided the jump
/// is within `jump_limit_bins · bin_width · (block index difference)`;
/// otherwise it starts a new track. Equal distances go to the older track.
#[derive(Debug, Clone, Copy, Default)]
pub struct NearestFrequency;

impl TrackAssociator for NearestFrequency {
    fn name(&self) -> &'static str {
        "nearest"
    }

    fn assemble(
        &self,
        blocks: &[BlockEstimates],
        config: &StsaConfig,
        sample_rate_hz: f64,
    ) -> Vec<Track> {
        let limit_per_step = config.jump_limit_bins * config.bin_width_hz(sample_rate_hz);
        let mut tracks: Vec<Track> = Vec::new();
        for block in blocks {
            let mut extended = vec![false; tracks.len()];
            for est in &block.estimates {
                let mut best: Option<(usize, f64)> = None;
                for (id, track) in tracks.iter().enumerate() {
                    if extended.get(id).copied().unwrap_or(true) {
                        continue;
                    }
                    let last = track.entries.last().expect("tracks are never empty");
                    if last.block_index >= est.block_index {
                        continue;
                    }
                    let steps = (est.block_index - last.block_index) as f64;
                    let jump = (est.freq_hz - last.freq_hz).abs();
                    if jump > limit_per_step * steps {
                        continue;
                    }
                    if best.is_none_or(|(_, d)| jump < d) {
                        best = Some((id, jump));
                    }
                }
                match best {
                    Some((id, _)) => {
                        tracks[id].entries.push(*est);
                        extended[id] = true;
                    }
                    None => {
                        tracks.push(Track {
                            signal_id: tracks.len(),
                            entries: vec![*est],
                        });
                    }
                }
            }
        }
        tracks
    }
}

/// Name → track associator lookup.
#[derive(Clone)]
pub struct AssociatorRegistry {
    entries: BTreeMap<String, Arc<dyn TrackAssociator>>,
}

impl Default for AssociatorRegistry {
    fn default() -> Self {
        let mut reg = Self {
            entries: BTreeMap::new(),
        };
        reg.register(Arc::new(NearestFrequency));
        reg
    }
}

impl AssociatorRegistry {
    pub fn register(&mut self, associator: Arc<dyn TrackAssociator>) {
        self.entries
            .insert(associator.name().to_string(), associator);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn TrackAssociator>> {
        self.entries.get(name).cloned().ok_or_else(|| {
            StsaError::param(format!(
                "unknown track associator '{name}' (known: {})",
                self.entries.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }
}

/// Groups estimates with the default [`NearestFrequency`] rule.
pub fn assemble_tracks(
    blocks: &[BlockEstimates],
    config: &StsaConfig,
    sample_rate_hz: f64,
) -> Vec<Track> {
    NearestFrequency.assemble(blocks, config, sample_rate_hz)
}

/// Length, rate and start time of the stream a waveform is synthesized for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamMeta {
    pub len: usize,
    pub sample_rate_hz: f64,
    pub t0_s: f64,
}

impl From<&SampleStream> for StreamMeta {
    fn from(s: &SampleStream) -> Self {
        Self {
            len: s.len(),
            sample_rate_hz: s.sample_rate_hz(),
            t0_s: s.t0_s(),
        }
    }
}

/// Estimated waveform aligned sample-for-sample with the analyzed stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedWaveform {
    pub samples: Vec<Complex64>,
    pub coverage: Vec<bool>,
}

impl SynthesizedWaveform {
    pub fn zeros(len: usize) -> Self {
        Self {
            samples: vec![Complex64::new(0.0, 0.0); len],
            coverage: vec![false; len],
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Adds another waveform of the same length in place.
    pub fn accumulate(&mut self, other: &SynthesizedWaveform) {
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            *a += b;
        }
        for (a, b) in self.coverage.iter_mut().zip(&other.coverage) {
            *a |= *b;
        }
    }

    pub fn covered_count(&self) -> usize {
        self.coverage.iter().filter(|c| **c).count()
    }
}

/// Block placement needed to evaluate a track, in sample positions.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    hop: usize,
    rate: f64,
}

impl Geometry {
    fn new(config: &StsaConfig, rate: f64) -> Self {
        Self {
            n: config.block_len_n,
            hop: config.hop(),
            rate,
        }
    }

    fn start(&self, e: &SinusoidEstimate) -> usize {
        e.block_index * self.hop
    }

    fn center(&self, e: &SinusoidEstimate) -> f64 {
        self.start(e) as f64 + (self.n as f64 - 1.0) / 2.0
    }

    /// `x̂_e` at sample position `p`.
    #[inline]
    fn value(&self, e: &SinusoidEstimate, p: f64) -> Complex64 {
        let dt = (p - self.center(e)) / self.rate;
        Complex64::from_polar(
            e.amp,
            2.0 * std::f64::consts::PI * e.freq_hz * dt + e.phase_rad,
        )
    }

    #[inline]
    fn blend(&self, a: &SinusoidEstimate, b: &SinusoidEstimate, p: f64) -> Complex64 {
        let ca = self.center(a);
        let alpha = (p - ca) / (self.center(b) - ca);
        self.value(a, p) * (1.0 - alpha) + self.value(b, p) * alpha
    }
}

/// Renders one track over a stream of the given shape.
pub fn synthesize(track: &Track, meta: StreamMeta, config: &StsaConfig) -> SynthesizedWaveform {
    let mut out = SynthesizedWaveform::zeros(meta.len);
    let g = Geometry::new(config, meta.sample_rate_hz);
    let entries = &track.entries;
    let len = meta.len as i64;
    let clamp = |x: i64| x.clamp(0, len) as usize;

    let mut put = |k: usize, v: Complex64| {
        out.samples[k] = v;
        out.coverage[k] = true;
    };

    for (j, e) in entries.iter().enumerate() {
        let c = g.center(e);
        let first_center_sample = c.ceil() as i64;
        let has_prev = j > 0 && entries[j - 1].block_index + 1 == e.block_index;
        let next = entries
            .get(j + 1)
            .filter(|nx| nx.block_index == e.block_index + 1);

        if !has_prev {
            let lo = clamp(g.start(e) as i64);
            let hi = clamp(first_center_sample);
            for k in lo..hi {
                put(k, g.value(e, k as f64));
            }
        }
        match next {
            Some(nx) => {
                let hi = clamp(g.center(nx).ceil() as i64);
                for k in clamp(first_center_sample)..hi {
                    put(k, g.blend(e, nx, k as f64));
                }
            }
            None => {
                let hi = clamp((g.start(e) + g.n) as i64);
                for k in clamp(first_center_sample)..hi {
                    put(k, g.value(e, k as f64));
                }
            }
        }
    }
    out
}

/// Evaluates a track's synthesized waveform at an absolute time, which need
/// not fall on a sample. Returns `None` outside the track's coverage.
pub fn evaluate_track(
    track: &Track,
    t_s: f64,
    meta: StreamMeta,
    config: &StsaConfig,
) -> Option<Complex64> {
    let g = Geometry::new(config, meta.sample_rate_hz);
    let p = (t_s - meta.t0_s) * meta.sample_rate_hz;
    let entries = &track.entries;
    for (j, e) in entries.iter().enumerate() {
        let c = g.center(e);
        let start = g.start(e) as f64;
        let end = (g.start(e) + g.n) as f64;
        let has_prev = j > 0 && entries[j - 1].block_index + 1 == e.block_index;
        let next = entries
            .get(j + 1)
            .filter(|nx| nx.block_index == e.block_index + 1);
        if !has_prev && p >= start && p < c {
            return Some(g.value(e, p));
        }
        match next {
            Some(nx) if p >= c && p < g.center(nx) => return Some(g.blend(e, nx, p)),
            None if p >= c && p < end => return Some(g.value(e, p)),
            _ => {}
        }
    }
    None
}

/// Sum of the synthesized waveforms of all `tracks`.
pub fn synthesize_all(
    tracks: &[Track],
    meta: StreamMeta,
    config: &StsaConfig,
) -> SynthesizedWaveform {
    let mut total = SynthesizedWaveform::zeros(meta.len);
    for t in tracks {
        total.accumulate(&synthesize(t, meta, config));
    }
    total
}

/// `original - synthesized`, sample by sample.
pub fn cancel(original: &SampleStream, synthesized: &SynthesizedWaveform) -> Result<SampleStream> {
    if original.len() != synthesized.len() {
        return Err(StsaError::param(format!(
            "cannot cancel a {}-sample waveform from a {}-sample stream",
            synthesized.len(),
            original.len()
        )));
    }
    let out = original
        .samples()
        .iter()
        .zip(&synthesized.samples)
        .map(|(x, s)| x - s)
        .collect();
    SampleStream::with_start(out, original.sample_rate_hz(), original.t0_s())
}

/// CSV with columns `signal_id,block_index,t_center_s,peel_rank,amp,freq_hz,phase_rad`.
pub fn write_tracks_csv<W: Write>(tracks: &[Track], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "signal_id,block_index,t_center_s,peel_rank,amp,freq_hz,phase_rad"
    )?;
    for t in tracks {
        for e in &t.entries {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                t.signal_id,
                e.block_index,
                e.t_center_s,
                e.peel_rank,
                e.amp,
                e.freq_hz,
                e.phase_rad
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const RATE: f64 = 1e6;

    fn est(
        block_index: usize,
        amp: f64,
        freq_hz: f64,
        phase_rad: f64,
        cfg: &StsaConfig,
    ) -> SinusoidEstimate {
        let n = cfg.block_len_n as f64;
        SinusoidEstimate {
            amp,
            freq_hz,
            phase_rad,
            block_index,
            t_center_s: (block_index as f64 * cfg.hop() as f64 + (n - 1.0) / 2.0) / RATE,
            peel_rank: 0,
        }
    }

    fn block(index: usize, ests: Vec<SinusoidEstimate>) -> BlockEstimates {
        BlockEstimates {
            block_index: index,
            t_center_s: 0.0,
            estimates: ests,
            residual_power: 0.0,
            noise_floor: 0.0,
        }
    }

    fn meta(len: usize) -> StreamMeta {
        StreamMeta {
            len,
            sample_rate_hz: RATE,
            t0_s: 0.0,
        }
    }

    #[test]
    fn single_signal_forms_one_track() {
        let cfg = StsaConfig::default().with_block_len(64);
        let blocks: Vec<_> = (0..10)
            .map(|i| block(i, vec![est(i, 1.0, 1000.0 + 50.0 * i as f64, 0.0, &cfg)]))
            .collect();
        let tracks = assemble_tracks(&blocks, &cfg, RATE);
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].len(), 10);
    }

    #[test]
    fn gap_joins_only_within_scaled_limit() {
        // bin width 15625 Hz, limit 0.5 bin per step.
        let cfg = StsaConfig::default().with_block_len(64);
        let mk = |jump: f64| {
            let mut blocks: Vec<_> = (0..5)
                .map(|i| block(i, vec![est(i, 1.0, 0.0, 0.0, &cfg)]))
                .collect();
            for i in 5..10 {
                blocks.push(block(i, vec![]));
            }
            blocks.push(block(10, vec![est(10, 1.0, jump, 0.0, &cfg)]));
            assemble_tracks(&blocks, &cfg, RATE).len()
        };
        // 6 steps from block 4 to block 10: limit 46875 Hz.
        assert_eq!(mk(40_000.0), 1);
        assert_eq!(mk(50_000.0), 2);
        assert_eq!(mk(40_000.0), mk(40_000.0));
    }

    #[test]
    fn one_entry_per_block_per_track() {
        let cfg = StsaConfig::default().with_block_len(64);
        let blocks = vec![
            block(0, vec![est(0, 1.0, 0.0, 0.0, &cfg)]),
            block(
                1,
                vec![est(1, 1.0, 10.0, 0.0, &cfg), est(1, 0.5, 20.0, 0.0, &cfg)],
            ),
        ];
        let tracks = assemble_tracks(&blocks, &cfg, RATE);
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].entries[1].freq_hz, 10.0);
        assert_eq!(tracks[1].entries[0].freq_hz, 20.0);
    }

    #[test]
    fn associator_registry() {
        let reg = AssociatorRegistry::default();
        assert_eq!(reg.get("nearest").unwrap().name(), "nearest");
        assert!(reg.get("hungarian").is_err());
    }

    #[test]
    fn endpoint_anchoring_odd_block() {
        let cfg = StsaConfig::default().with_block_len(65);
        let track = Track {
            signal_id: 0,
            entries: (0..4)
                .map(|i| {
                    est(
                        i,
                        1.0 + 0.1 * i as f64,
                        3000.0 * i as f64,
                        0.4 * i as f64,
                        &cfg,
                    )
                })
                .collect(),
        };
        let w = synthesize(&track, meta(65 * 4), &cfg);
        for e in &track.entries {
            let k = e.block_index * 65 + 32;
            assert_eq!(w.samples[k], Complex64::from_polar(e.amp, e.phase_rad));
            assert_eq!(
                evaluate_track(&track, e.t_center_s, meta(260), &cfg),
                Some(e.value_at(e.t_center_s))
            );
        }
        assert_eq!(w.covered_count(), 260);
    }

    #[test]
    fn gaps_are_zero_filled() {
        let cfg = StsaConfig::default().with_block_len(16);
        let track = Track {
            signal_id: 0,
            entries: vec![est(0, 1.0, 0.0, 0.0, &cfg), est(3, 1.0, 0.0, 0.0, &cfg)],
        };
        let w = synthesize(&track, meta(80), &cfg);
        for k in 0..80 {
            let inside = k < 16 || (48..64).contains(&k);
            assert_eq!(w.coverage[k], inside, "sample {k}");
            if !inside {
                assert_eq!(w.samples[k], Complex64::new(0.0, 0.0));
            }
        }
        assert!(evaluate_track(&track, 20.0 / RATE, meta(80), &cfg).is_none());
    }

    #[test]
    fn half_overlap_tiling() {
        let cfg = StsaConfig::default()
            .with_block_len(16)
            .with_overlap(crate::blockproc::Overlap::Half);
        let track = Track {
            signal_id: 0,
            entries: (0..5)
                .map(|i| {
                    let mut e = est(i, 1.0, 1e4, 0.0, &cfg);
                    e.phase_rad = 0.2 + 2.0 * std::f64::consts::PI * 1e4 * e.t_center_s;
                    e
                })
                .collect(),
        };
        // Blocks span [0, 16) .. [32, 48).
        let w = synthesize(&track, meta(100), &cfg);
        for k in 0..100 {
            assert_eq!(w.coverage[k], k < 48);
        }
        // A stationary tone renders exactly.
        for k in 0..48 {
            let t = k as f64 / RATE;
            let want = Complex64::from_polar(1.0, 0.2 + 2.0 * std::f64::consts::PI * 1e4 * t);
            assert!((w.samples[k] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn cancel_identities() {
        let s = SampleStream::new(
            (0..32)
                .map(|k| Complex64::new(k as f64, -(k as f64) * 0.5))
                .collect(),
            RATE,
        )
        .unwrap();
        let zero = SynthesizedWaveform::zeros(32);
        assert_eq!(cancel(&s, &zero).unwrap(), s);
        let same = SynthesizedWaveform {
            samples: s.samples().to_vec(),
            coverage: vec![true; 32],
        };
        assert!(cancel(&s, &same)
            .unwrap()
            .samples()
            .iter()
            .all(|x| x.norm() == 0.0));
        assert!(cancel(&s, &SynthesizedWaveform::zeros(31)).is_err());
    }

    #[test]
    fn tracks_csv_layout() {
        let cfg = StsaConfig::default().with_block_len(8);
        let t = Track {
            signal_id: 2,
            entries: vec![SinusoidEstimate {
                t_center_s: 0.25,
                ..est(1, 0.5, 10.0, -1.0, &cfg)
            }],
        };
        let mut out = Vec::new();
        write_tracks_csv(&[t], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "signal_id,block_index,t_center_s,peel_rank,amp,freq_hz,phase_rad\n2,1,0.25,0,0.5,10,-1\n"
        );
    }
}
