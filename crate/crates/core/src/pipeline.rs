//! End-to-end estimate → synthesize → cancel passes over a whole stream.

use std::sync::Arc;

use crate::blockproc::{BlockEstimates, BlockEstimator, StsaConfig};
use crate::error::{Result, StsaError};
use crate::iq_io::{IqFormat, SampleStream};
use crate::synthesis::{
    self, NearestFrequency, StreamMeta, SynthesizedWaveform, Track, TrackAssociator,
};

/// What one pass found and removed.
#[derive(Debug, Clone)]
pub struct PassOutcome {
    pub blocks: Vec<BlockEstimates>,
    pub tracks: Vec<Track>,
    pub synthesized: SynthesizedWaveform,
}

#[derive(Debug, Clone)]
pub struct CancelOutcome {
    /// Input minus every pass's synthesized waveform.
    pub residual: SampleStream,
    /// Sum of every pass's synthesized waveform.
    pub estimate: SampleStream,
    pub passes: Vec<PassOutcome>,
}

/// Repeated estimation and coherent subtraction.
pub struct Canceller {
    estimator: BlockEstimator,
    associator: Arc<dyn TrackAssociator>,
    quantize: Option<IqFormat>,
}

impl Canceller {
    pub fn new(config: StsaConfig, sample_rate_hz: f64) -> Result<Self> {
        Ok(Self {
            estimator: BlockEstimator::new(config, sample_rate_hz)?,
            associator: Arc::new(NearestFrequency),
            quantize: None,
        })
    }

    pub fn with_associator(mut self, associator: Arc<dyn TrackAssociator>) -> Self {
        self.associator = associator;
        self
    }

    /// Rounds each intermediate residual to `format` before the next pass, so
    /// that `k` in-process passes match `k` runs chained through files.
    pub fn quantize_between_passes(mut self, format: Option<IqFormat>) -> Self {
        self.quantize = format;
        self
    }

    pub fn estimator(&self) -> &BlockEstimator {
        &self.estimator
    }

    pub fn config(&self) -> &StsaConfig {
        self.estimator.config()
    }

    /// One estimate/synthesize/cancel pass.
    pub fn run_pass(&self, input: &SampleStream) -> Result<(PassOutcome, SampleStream)> {
        let blocks = self.estimator.estimate_stream(input)?;
        let tracks = self
            .associator
            .assemble(&blocks, self.config(), input.sample_rate_hz());
        let synthesized =
            synthesis::synthesize_all(&tracks, StreamMeta::from(input), self.config());
        let residual = synthesis::cancel(input, &synthesized)?;
        Ok((
            PassOutcome {
                blocks,
                tracks,
                synthesized,
            },
            residual,
        ))
    }

    pub fn run(&self, input: &SampleStream, passes: usize) -> Result<CancelOutcome> {
        if passes < 1 {
            return Err(StsaError::param("pass count must be at least 1"));
        }
        let mut current = input.clone();
        let mut total = SynthesizedWaveform::zeros(input.len());
        let mut outcomes = Vec::with_capacity(passes);
        for p in 0..passes {
            let (outcome, mut residual) = self.run_pass(&current)?;
            if let (Some(fmt), true) = (self.quantize, p + 1 < passes) {
                residual = SampleStream::with_start(
                    residual
                        .samples()
                        .iter()
                        .map(|s| fmt.quantize(*s))
                        .collect(),
                    residual.sample_rate_hz(),
                    residual.t0_s(),
                )?;
            }
            total.accumulate(&outcome.synthesized);
            outcomes.push(outcome);
            current = residual;
        }
        let estimate =
            SampleStream::with_start(total.samples, input.sample_rate_hz(), input.t0_s())?;
        Ok(CancelOutcome {
            residual: current,
            estimate,
            passes: outcomes,
        })
    }
}

/// Runs `passes` cancellation passes with the default associator.
pub fn cancel_stream(
    input: &SampleStream,
    config: &StsaConfig,
    passes: usize,
) -> Result<CancelOutcome> {
    Canceller::new(config.clone(), input.sample_rate_hz())?.run(input, passes)
}
