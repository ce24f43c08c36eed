//! Complex baseband sample streams and their raw binary encodings.
//!
//! Two encodings are supported, both little-endian and headerless so that
//! files are interchangeable with plain SDR captures:
//!
//! * `int8`: one signed byte of I followed by one signed byte of Q. Values
//!   are scaled by 1/128 on read, giving the range [-1, 1).
//! * `float32`: I then Q as IEEE-754 single precision, unscaled.
//!
//! The sample rate is never stored in the file; callers supply it.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Result, StsaError};

/// Contiguous complex baseband samples taken at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    samples: Vec<Complex64>,
    sample_rate_hz: f64,
    t0_s: f64,
}

impl SampleStream {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64) -> Result<Self> {
        Self::with_start(samples, sample_rate_hz, 0.0)
    }

    pub fn with_start(samples: Vec<Complex64>, sample_rate_hz: f64, t0_s: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(StsaError::param(format!(
                "sample rate must be positive and finite, got {sample_rate_hz}"
            )));
        }
        if !t0_s.is_finite() {
            return Err(StsaError::param("start time must be finite"));
        }
        if let Some(k) = samples
            .iter()
            .position(|s| !(s.re.is_finite() && s.im.is_finite()))
        {
            return Err(StsaError::param(format!("sample {k} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            t0_s,
        })
    }

    /// A stream of `len` zero samples.
    pub fn zeros(len: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); len], sample_rate_hz)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn t0_s(&self) -> f64 {
        self.t0_s
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Time of sample `k` in seconds.
    pub fn time_of(&self, k: usize) -> f64 {
        self.t0_s + k as f64 / self.sample_rate_hz
    }

    /// Mean of |x|² over the stream (0 for an empty stream).
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    /// Same metadata, new samples. The caller guarantees the samples are finite.
    pub(crate) fn with_samples(&self, samples: Vec<Complex64>) -> Self {
        debug_assert_eq!(samples.len(), self.samples.len());
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
            t0_s: self.t0_s,
        }
    }

    pub fn negate(&self) -> Self {
        self.with_samples(self.samples.iter().map(|s| -s).collect())
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.with_samples(self.samples.iter().map(|s| s * factor).collect())
    }
}

/// On-disk sample encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IqFormat {
    Int8Interleaved,
    Float32Interleaved,
}

impl IqFormat {
    pub fn bytes_per_sample(self) -> usize {
        match self {
            IqFormat::Int8Interleaved => 2,
            IqFormat::Float32Interleaved => 8,
        }
    }

    /// Rounds a sample to exactly what a write/read round-trip would produce.
    pub fn quantize(self, s: Complex64) -> Complex64 {
        match self {
            IqFormat::Int8Interleaved => {
                Complex64::new(decode_i8(encode_i8(s.re).0), decode_i8(encode_i8(s.im).0))
            }
            IqFormat::Float32Interleaved => Complex64::new(s.re as f32 as f64, s.im as f32 as f64),
        }
    }
}

impl fmt::Display for IqFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IqFormat::Int8Interleaved => "i8",
            IqFormat::Float32Interleaved => "f32",
        })
    }
}

impl FromStr for IqFormat {
    type Err = StsaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i8" | "int8" | "int8_interleaved" => Ok(IqFormat::Int8Interleaved),
            "f32" | "float32" | "float32_interleaved" => Ok(IqFormat::Float32Interleaved),
            other => Err(StsaError::param(format!("unknown IQ format '{other}'"))),
        }
    }
}

/// Outcome of [`write_iq`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteSummary {
    pub samples: usize,
    /// Components that exceeded the int8 range and were saturated.
    pub clipped_components: usize,
}

#[inline]
fn decode_i8(b: u8) -> f64 {
    (b as i8) as f64 / 128.0
}

/// Returns the encoded byte and whether the value had to be saturated.
#[inline]
fn encode_i8(v: f64) -> (u8, bool) {
    let scaled = (v * 128.0).round();
    if scaled > 127.0 {
        (127i8 as u8, true)
    } else if scaled < -128.0 {
        (-128i8 as u8, true)
    } else {
        ((scaled as i8) as u8, false)
    }
}

/// Decodes an in-memory byte buffer. `path` is only used to label errors.
pub fn decode_iq(bytes: &[u8], format: IqFormat, path: &Path) -> Result<Vec<Complex64>> {
    let per = format.bytes_per_sample();
    let trailing = bytes.len() % per;
    if trailing != 0 {
        return Err(StsaError::Truncated {
            path: path.to_path_buf(),
            offset: (bytes.len() - trailing) as u64,
            trailing,
        });
    }
    let samples = match format {
        IqFormat::Int8Interleaved => bytes
            .chunks_exact(2)
            .map(|c| Complex64::new(decode_i8(c[0]), decode_i8(c[1])))
            .collect(),
        IqFormat::Float32Interleaved => bytes
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                Complex64::new(re as f64, im as f64)
            })
            .collect(),
    };
    Ok(samples)
}

/// Encodes samples, returning the bytes and the number of saturated components.
pub fn encode_iq(samples: &[Complex64], format: IqFormat) -> (Vec<u8>, usize) {
    let mut out = Vec::with_capacity(samples.len() * format.bytes_per_sample());
    let mut clipped = 0;
    match format {
        IqFormat::Int8Interleaved => {
            for s in samples {
                let (i, ci) = encode_i8(s.re);
                let (q, cq) = encode_i8(s.im);
                clipped += ci as usize + cq as usize;
                out.push(i);
                out.push(q);
            }
        }
        IqFormat::Float32Interleaved => {
            for s in samples {
                out.extend_from_slice(&(s.re as f32).to_le_bytes());
                out.extend_from_slice(&(s.im as f32).to_le_bytes());
            }
        }
    }
    (out, clipped)
}

pub fn read_iq(
    path: impl AsRef<Path>,
    format: IqFormat,
    sample_rate_hz: f64,
) -> Result<SampleStream> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| StsaError::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| StsaError::io(path, e))?;
    let samples = decode_iq(&bytes, format, path)?;
    SampleStream::new(samples, sample_rate_hz)
}

pub fn write_iq(
    stream: &SampleStream,
    path: impl AsRef<Path>,
    format: IqFormat,
) -> Result<WriteSummary> {
    let path = path.as_ref();
    let (bytes, clipped) = encode_iq(stream.samples(), format);
    if clipped > 0 {
        log::warn!(
            "{}: {clipped} components outside [-1, 1) were clipped to the int8 range",
            path.display()
        );
    }
    let file = File::create(path).map_err(|e| StsaError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| StsaError::io(path, e))?;
    w.flush().map_err(|e| StsaError::io(path, e))?;
    Ok(WriteSummary {
        samples: stream.len(),
        clipped_components: clipped,
    })
}
