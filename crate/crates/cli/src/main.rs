use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};
use log::info;
use stsa::blockproc::write_estimates_csv;
use stsa::metrics::{write_dynamic_csv, write_spectrum_csv, DEFAULT_RESOLUTION_HZ};
use stsa::prelude::*;
use stsa::siggen::{full_band_snr_db, TruthRecord};
use stsa::synthesis::write_tracks_csv;

const CSV_HELP: &str = "\
CSV outputs (fixed column order):
  truth      sample_index,f_inst_hz,amplitude
  estimates  block_index,t_center_s,peel_rank,amp,freq_hz,phase_rad
  tracks     signal_id,block_index,t_center_s,peel_rank,amp,freq_hz,phase_rad
  spectrum   freq_hz,power
  waterfall  t_s,<one column per bin frequency>
  report     band_lo_hz,band_hi_hz,resolution_hz,power_before,power_after,suppression_db,
             out_of_band_before,out_of_band_after,out_of_band_delta_db,snr_in_band_db";

/// Short-term sinusoidal analysis of complex-baseband IQ recordings.
#[derive(Parser, Debug)]
#[command(name = "stsa", version, after_help = CSV_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic test signal and its ground-truth sidecar.
    Generate(GenerateArgs),
    /// Estimate, synthesize and subtract the sinusoidal content of a recording.
    Cancel(CancelArgs),
    /// Spectra, dynamic spectra and suppression reports.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Debug)]
struct StreamArgs {
    /// Sample rate, Hz.
    #[arg(long)]
    rate: f64,
    /// IQ sample encoding.
    #[arg(long, default_value = "f32")]
    format: IqFormat,
}

#[derive(Args, Debug)]
struct EstimatorArgs {
    /// Block length in samples.
    #[arg(long, default_value_t = 256)]
    n: usize,
    #[arg(long, default_value = "tri", value_parser = parse_window)]
    window: String,
    /// Peak-to-median bin power needed to accept a sinusoid, dB.
    #[arg(long, default_value_t = 13.0, allow_hyphen_values = true)]
    threshold_db: f64,
    /// Fine frequency step as a fraction of the bin width.
    #[arg(long, default_value_t = 0.01)]
    grid_frac: f64,
    /// Sinusoids extracted per block at most.
    #[arg(long, default_value_t = 8)]
    max_peel: usize,
    #[arg(long, default_value = "none", value_parser = ["none", "half"])]
    overlap: String,
    /// Estimate/cancel iterations, each on the previous residual.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    passes: u32,
}

fn parse_window(s: &str) -> std::result::Result<String, String> {
    let reg = WindowRegistry::with_builtins();
    reg.get(s).map(|_| s.to_string()).map_err(|e| e.to_string())
}

impl EstimatorArgs {
    fn config(&self) -> Result<StsaConfig> {
        let cfg = StsaConfig {
            block_len_n: self.n,
            window: WindowRegistry::with_builtins().get(&self.window)?,
            detect_threshold_db: self.threshold_db,
            fine_grid_fraction: self.grid_frac,
            max_peel: self.max_peel,
            overlap: self.overlap.parse()?,
            ..StsaConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("kind").required(true).args(["tone", "nbfm", "am"])))]
#[command(group(ArgGroup::new("length").required(true).args(["dur", "n"])))]
struct GenerateArgs {
    #[command(flatten)]
    stream: StreamArgs,
    /// Constant tone.
    #[arg(long)]
    tone: bool,
    /// Narrowband FM carrier.
    #[arg(long)]
    nbfm: bool,
    /// AM carrier.
    #[arg(long)]
    am: bool,
    /// Tone or carrier frequency offset, Hz.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    freq: f64,
    /// Peak amplitude (carrier amplitude for AM).
    #[arg(long, default_value_t = 0.3)]
    amp: f64,
    /// Initial phase, rad.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    phase: f64,
    /// FM peak deviation, Hz.
    #[arg(long, default_value_t = 4000.0)]
    dev: f64,
    /// Modulating tone frequency, Hz (FM and AM).
    #[arg(long, conflicts_with = "mod_noise")]
    mod_tone: Option<f64>,
    /// Band-limited noise modulation up to this frequency, Hz (FM).
    #[arg(long)]
    mod_noise: Option<f64>,
    /// AM modulation index.
    #[arg(long, default_value_t = 0.5)]
    am_index: f64,
    /// Signal-to-noise ratio inside the occupied band, dB. Noiseless if omitted.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
    /// Duration, s.
    #[arg(long)]
    dur: Option<f64>,
    /// Length in samples.
    #[arg(long)]
    n: Option<usize>,
    /// Seed for noise and noise modulation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output IQ file.
    #[arg(long)]
    out: PathBuf,
    /// Truth CSV; defaults to `<out>.truth.csv`.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CancelArgs {
    #[command(flatten)]
    stream: StreamArgs,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Input IQ file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Residual IQ file (input minus the estimate).
    #[arg(long)]
    residual: PathBuf,
    /// Estimated-signal IQ file.
    #[arg(long)]
    estimate: Option<PathBuf>,
    /// Track CSV. Passes after the first go to `<stem>.pass<k>.<ext>`.
    #[arg(long)]
    tracks: Option<PathBuf>,
    /// Per-block estimate CSV, same naming for later passes.
    #[arg(long)]
    estimates: Option<PathBuf>,
    /// Signal band for the suppression report, Hz.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_hyphen_values = true)]
    band: Option<Vec<f64>>,
    /// Spectral resolution of the report, Hz.
    #[arg(long, default_value_t = DEFAULT_RESOLUTION_HZ)]
    res: f64,
    /// Report CSV; the report is always printed.
    #[arg(long, requires = "band")]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("mode").required(true).args(["spectrum", "waterfall", "suppression"])))]
struct AnalyzeArgs {
    #[command(flatten)]
    stream: StreamArgs,
    /// Averaged power spectrum of `--in`.
    #[arg(long, requires = "input")]
    spectrum: bool,
    /// Dynamic spectrum of `--in`.
    #[arg(long, requires = "input")]
    waterfall: bool,
    /// Compare `--before` and `--after` in `--band`.
    #[arg(long, requires_all = ["before", "after", "band"])]
    suppression: bool,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    before: Option<PathBuf>,
    #[arg(long)]
    after: Option<PathBuf>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_hyphen_values = true)]
    band: Option<Vec<f64>>,
    /// Spectrum and report resolution, Hz.
    #[arg(long, default_value_t = DEFAULT_RESOLUTION_HZ)]
    res: f64,
    /// Dynamic spectrum time resolution, s.
    #[arg(long, default_value_t = 0.008)]
    tres: f64,
    /// Dynamic spectrum frequency resolution, Hz.
    #[arg(long, default_value_t = DEFAULT_RESOLUTION_HZ)]
    fres: f64,
    /// Output CSV; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Cancel(a) => cancel_cmd(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn band_of(v: &Option<Vec<f64>>) -> Option<(f64, f64)> {
    v.as_ref().map(|b| (b[0], b[1]))
}

/// `dir/stem.pass<k>.ext` for pass `k` ≥ 2, `path` itself for pass 1.
fn pass_path(path: &Path, pass: usize) -> PathBuf {
    if pass == 1 {
        return path.to_path_buf();
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.pass{pass}.{}", ext.to_string_lossy()),
        None => format!("{stem}.pass{pass}"),
    };
    path.with_file_name(name)
}

fn generate(a: GenerateArgs) -> Result<()> {
    let rate = a.stream.rate;
    let n = match (a.n, a.dur) {
        (Some(n), _) => n,
        (None, Some(d)) => {
            if !(d.is_finite() && d >= 0.0) {
                bail!("duration must be non-negative");
            }
            (d * rate).round() as usize
        }
        (None, None) => unreachable!("clap requires --dur or --n"),
    };

    let (clean, truth, band) = if a.tone {
        let (s, t) = gen_tone(a.amp, a.freq, a.phase, n, rate)?;
        let band = occupied_band(&s)?;
        (s, t, band)
    } else if a.am {
        let fm = a.mod_tone.unwrap_or(1000.0);
        let (s, t) = gen_am(a.freq, a.amp, a.am_index, fm, n, rate)?;
        let band = occupied_band(&s)?;
        (s, t, band)
    } else {
        let modulation = match (a.mod_tone, a.mod_noise) {
            (Some(f), _) => Modulation::tone(f),
            (None, Some(f)) => Modulation::noise(f, a.seed),
            (None, None) => Modulation::tone(1000.0),
        };
        let spec = NbfmSpec {
            carrier_offset_hz: a.freq,
            deviation_hz: a.dev,
            modulation,
            amplitude: a.amp,
            duration_s: n as f64 / rate,
            initial_phase_rad: a.phase,
        };
        let (s, t) = gen_nbfm(&spec, rate)?;
        (s, t, spec.carson_band())
    };

    let stream = match a.snr {
        Some(snr) => {
            info!(
                "SNR {snr} dB in ({:.1}, {:.1}) Hz, {:.2} dB full band",
                band.0,
                band.1,
                full_band_snr_db(snr, band.1 - band.0, rate)
            );
            add_awgn(&clean, snr, band, a.seed)?
        }
        None => clean,
    };

    let summary = write_iq(&stream, &a.out, a.stream.format)?;
    info!("wrote {} samples to {}", summary.samples, a.out.display());
    let truth_path = a.truth.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".truth.csv");
        p.into()
    });
    write_truth_csv(&truth, create(&truth_path)?)?;
    Ok(())
}

/// 99%-power band of a clean signal, widened by half a bin on each side.
fn occupied_band(s: &SampleStream) -> Result<(f64, f64)> {
    if s.is_empty() {
        bail!("cannot measure the band of an empty signal");
    }
    let res = DEFAULT_RESOLUTION_HZ.max(s.sample_rate_hz() / s.len() as f64);
    let frame = power_spectrum(s, res)?;
    let (lo, hi) = frame.occupied_band(0.99);
    let half = frame.resolution_hz / 2.0;
    let nyq = s.sample_rate_hz() / 2.0;
    Ok(((lo - half).max(-nyq), (hi + half).min(nyq)))
}

fn write_truth_csv(truth: &TruthRecord, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "sample_index,f_inst_hz,amplitude")?;
    for sig in &truth.signals {
        for (k, (f, amp)) in sig.f_inst_hz.iter().zip(&sig.amplitude).enumerate() {
            writeln!(out, "{k},{f},{amp}")?;
        }
    }
    out.flush()
}

fn cancel_cmd(a: CancelArgs) -> Result<()> {
    let config = a.estimator.config()?;
    let format = a.stream.format;
    let input = read_iq(&a.input, format, a.stream.rate)?;
    let passes = a.estimator.passes as usize;

    let started = Instant::now();
    let out = Canceller::new(config, input.sample_rate_hz())?
        .quantize_between_passes(Some(format))
        .run(&input, passes)?;
    info!(
        "{passes} pass(es) over {} samples in {:.2?}",
        input.len(),
        started.elapsed()
    );

    let summary = write_iq(&out.residual, &a.residual, format)?;
    if summary.clipped_components > 0 {
        info!(
            "residual: {} components clipped",
            summary.clipped_components
        );
    }
    if let Some(p) = &a.estimate {
        write_iq(&out.estimate, p, format)?;
    }
    for (i, pass) in out.passes.iter().enumerate() {
        if let Some(p) = &a.tracks {
            let mut w = create(&pass_path(p, i + 1))?;
            write_tracks_csv(&pass.tracks, &mut w)?;
            w.flush()?;
        }
        if let Some(p) = &a.estimates {
            let mut w = create(&pass_path(p, i + 1))?;
            write_estimates_csv(&pass.blocks, &mut w)?;
            w.flush()?;
        }
    }

    if let Some(band) = band_of(&a.band) {
        let residual = read_iq(&a.residual, format, a.stream.rate)?;
        let report = suppression_report(&input, &residual, band, a.res, None)?;
        print!("{report}");
        if let Some(p) = &a.report {
            write_report_csv(&report, create(p)?)?;
        }
    }
    Ok(())
}

fn write_report_csv(report: &SuppressionReport, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{}", SuppressionReport::csv_header())?;
    writeln!(out, "{}", report.csv_row())?;
    out.flush()
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let (format, rate) = (a.stream.format, a.stream.rate);
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    if a.suppression {
        let before = read_iq(a.before.as_ref().expect("required by clap"), format, rate)?;
        let after = read_iq(a.after.as_ref().expect("required by clap"), format, rate)?;
        let band = band_of(&a.band).expect("required by clap");
        let report = suppression_report(&before, &after, band, a.res, None)?;
        if a.out.is_some() {
            print!("{report}");
        }
        write_report_csv(&report, out)?;
        return Ok(());
    }
    let input = read_iq(a.input.as_ref().expect("required by clap"), format, rate)?;
    if a.spectrum {
        write_spectrum_csv(&power_spectrum(&input, a.res)?, &mut out)?;
    } else {
        write_dynamic_csv(&dynamic_spectrum(&input, a.tres, a.fres)?, &mut out)?;
    }
    out.flush()?;
    Ok(())
}
