//! Short-term sinusoidal analysis of complex baseband data.
//!
//! A sinusoidal-carrier-modulated signal looks like a constant sinusoid over
//! a short enough block of samples. This crate estimates that sinusoid block
//! by block ([`blockproc`]), stitches the estimates into a continuous,
//! noise-free waveform ([`synthesis`]), and subtracts it from the data to
//! cancel the signal ([`pipeline`]). [`siggen`] produces test signals with
//! known truth, [`metrics`] measures spectra and suppression, and [`iq_io`]
//! reads and writes raw IQ files.
//!
//! ```
//! use stsa::prelude::*;
//!
//! let rate = 2.048e6;
//! let (tone, _) = gen_tone(1.0, 40_080.0, 0.3, 256 * 16, rate).unwrap();
//! let out = cancel_stream(&tone, &StsaConfig::default(), 1).unwrap();
//! assert!(out.residual.mean_power() < 1e-8 * tone.mean_power());
//! ```

pub mod blockproc;
pub mod error;
pub mod iq_io;
pub mod metrics;
pub mod pipeline;
pub mod siggen;
pub mod synthesis;
pub mod window;

pub use error::{Result, StsaError};

pub mod prelude {
    pub use crate::blockproc::{
        estimate_stream, BlockEstimates, BlockEstimator, Overlap, SinusoidEstimate, StsaConfig,
    };
    pub use crate::error::{Result, StsaError};
    pub use crate::iq_io::{read_iq, write_iq, IqFormat, SampleStream};
    pub use crate::metrics::{
        band_power, dynamic_spectrum, power_spectrum, suppression_report, SpectrumFrame,
        SuppressionReport,
    };
    pub use crate::pipeline::{cancel_stream, CancelOutcome, Canceller};
    pub use crate::siggen::{add_awgn, gen_am, gen_nbfm, gen_tone, mix, Modulation, NbfmSpec};
    pub use crate::synthesis::{
        assemble_tracks, cancel, synthesize, synthesize_all, StreamMeta, SynthesizedWaveform, Track,
    };
    pub use crate::window::{WindowFunction, WindowRegistry};
}
