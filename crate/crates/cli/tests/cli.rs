use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stsa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = stsa(args);
    assert!(
        out.status.success(),
        "stsa {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_nbfm_length_follows_rate_and_duration() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fm.iq");
    ok(&[
        "generate",
        "--nbfm",
        "--rate",
        "2048000",
        "--dev",
        "4000",
        "--mod-tone",
        "1000",
        "--snr",
        "34",
        "--dur",
        "1",
        "--seed",
        "1",
        "--out",
        p(&out),
    ]);
    assert_eq!(fs::metadata(&out).unwrap().len(), 2_048_000 * 8);
    let truth = fs::read_to_string(dir.path().join("fm.iq.truth.csv")).unwrap();
    let mut lines = truth.lines();
    assert_eq!(lines.next(), Some("sample_index,f_inst_hz,amplitude"));
    assert_eq!(lines.count(), 2_048_000);
}

#[test]
fn generate_dc_tone() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dc.iq");
    ok(&[
        "generate",
        "--tone",
        "--freq",
        "0",
        "--amp",
        "1",
        "--n",
        "16",
        "--rate",
        "1000",
        "--out",
        p(&out),
    ]);
    let bytes = fs::read(&out).unwrap();
    assert_eq!(bytes.len(), 16 * 8);
    for pair in bytes.chunks_exact(8) {
        assert_eq!(f32::from_le_bytes(pair[..4].try_into().unwrap()), 1.0);
        assert_eq!(f32::from_le_bytes(pair[4..].try_into().unwrap()), 0.0);
    }
}

#[test]
fn missing_rate_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = stsa(&[
        "generate",
        "--tone",
        "--n",
        "16",
        "--out",
        p(&dir.path().join("x.iq")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--rate"));
}

#[test]
fn parameter_errors_are_runtime_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = stsa(&[
        "generate",
        "--tone",
        "--freq",
        "900",
        "--n",
        "16",
        "--rate",
        "1000",
        "--out",
        p(&dir.path().join("x.iq")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Nyquist"));
}

#[test]
fn generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec![
            "generate".to_string(),
            "--nbfm".into(),
            "--rate".into(),
            "2048000".into(),
            "--mod-noise".into(),
            "1000".into(),
            "--snr".into(),
            "20".into(),
            "--dur".into(),
            "0.05".into(),
            "--seed".into(),
            "9".into(),
            "--format".into(),
            "i8".into(),
            "--out".into(),
            out.into(),
        ]
    };
    let a = dir.path().join("a.iq");
    let b = dir.path().join("b.iq");
    ok(&args(p(&a)).iter().map(String::as_str).collect::<Vec<_>>());
    ok(&args(p(&b)).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn two_passes_equal_two_chained_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    for format in ["f32", "i8"] {
        ok(&[
            "generate",
            "--nbfm",
            "--rate",
            "2048000",
            "--mod-noise",
            "1000",
            "--snr",
            "34",
            "--dur",
            "0.1",
            "--seed",
            "3",
            "--format",
            format,
            "--out",
            p(&d("in.iq")),
        ]);
        let cancel = |input: &Path, residual: &Path, passes: &str| {
            ok(&[
                "cancel",
                "--rate",
                "2048000",
                "--format",
                format,
                "--passes",
                passes,
                "--in",
                p(input),
                "--residual",
                p(residual),
            ]);
        };
        cancel(&d("in.iq"), &d("r2.iq"), "2");
        cancel(&d("in.iq"), &d("r1.iq"), "1");
        cancel(&d("r1.iq"), &d("r11.iq"), "1");
        assert_eq!(
            fs::read(d("r2.iq")).unwrap(),
            fs::read(d("r11.iq")).unwrap(),
            "format {format}"
        );
        cancel(&d("in.iq"), &d("r2b.iq"), "2");
        assert_eq!(
            fs::read(d("r2.iq")).unwrap(),
            fs::read(d("r2b.iq")).unwrap()
        );
    }
}

#[test]
fn cancel_writes_tracks_estimates_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    ok(&[
        "generate",
        "--tone",
        "--freq",
        "56640",
        "--amp",
        "0.5",
        "--rate",
        "2048000",
        "--n",
        "25600",
        "--out",
        p(&d("tone.iq")),
    ]);
    let out = ok(&[
        "cancel",
        "--rate",
        "2048000",
        "--in",
        p(&d("tone.iq")),
        "--residual",
        p(&d("res.iq")),
        "--estimate",
        p(&d("est.iq")),
        "--tracks",
        p(&d("tracks.csv")),
        "--estimates",
        p(&d("blocks.csv")),
        "--passes",
        "2",
        "--band",
        "50000",
        "60000",
        "--res",
        "8000",
        "--report",
        p(&d("report.csv")),
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("suppression_db"));
    let tracks = fs::read_to_string(d("tracks.csv")).unwrap();
    assert!(
        tracks.starts_with("signal_id,block_index,t_center_s,peel_rank,amp,freq_hz,phase_rad\n")
    );
    assert!(tracks.lines().count() > 100);
    assert!(d("tracks.pass2.csv").exists());
    let blocks = fs::read_to_string(d("blocks.csv")).unwrap();
    assert!(blocks.starts_with("block_index,t_center_s,peel_rank,amp,freq_hz,phase_rad\n"));
    let report = fs::read_to_string(d("report.csv")).unwrap();
    let row: Vec<&str> = report.lines().nth(1).unwrap().split(',').collect();
    let suppression: f64 = row[5].parse().unwrap();
    assert!(suppression >= 80.0, "{suppression}");
    assert_eq!(fs::metadata(d("est.iq")).unwrap().len(), 25600 * 8);
}

#[test]
fn pure_noise_passes_through_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    let n = 256 * 200;
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 40) as f32 / (1u64 << 24) as f32 - 0.5
    };
    let bytes: Vec<u8> = (0..2 * n).flat_map(|_| next().to_le_bytes()).collect();
    fs::write(d("noise.iq"), &bytes).unwrap();
    ok(&[
        "cancel",
        "--rate",
        "2048000",
        "--in",
        p(&d("noise.iq")),
        "--residual",
        p(&d("res.iq")),
        "--estimates",
        p(&d("blocks.csv")),
    ]);
    let detected: Vec<usize> = fs::read_to_string(d("blocks.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    let res = fs::read(d("res.iq")).unwrap();
    assert!(detected.len() < 5, "{} detections in noise", detected.len());
    for b in 0..200 {
        if !detected.contains(&b) {
            let r = b * 256 * 8..(b + 1) * 256 * 8;
            assert_eq!(&res[r.clone()], &bytes[r], "block {b}");
        }
    }
}

#[test]
fn analyze_spectrum_and_waterfall_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    ok(&[
        "generate",
        "--nbfm",
        "--rate",
        "2048000",
        "--mod-tone",
        "1000",
        "--dur",
        "1",
        "--out",
        p(&d("fm.iq")),
    ]);
    ok(&[
        "analyze",
        "--spectrum",
        "--res",
        "125",
        "--rate",
        "2048000",
        "--in",
        p(&d("fm.iq")),
        "--out",
        p(&d("spec.csv")),
    ]);
    let spec = fs::read_to_string(d("spec.csv")).unwrap();
    assert_eq!(spec.lines().count(), 1 + 16_384);
    ok(&[
        "analyze",
        "--waterfall",
        "--tres",
        "0.008",
        "--fres",
        "125",
        "--rate",
        "2048000",
        "--in",
        p(&d("fm.iq")),
        "--out",
        p(&d("wf.csv")),
    ]);
    let wf = fs::read_to_string(d("wf.csv")).unwrap();
    let mut lines = wf.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 1 + 16_384);
    assert_eq!(lines.count(), 125);
}

#[test]
fn analyze_suppression_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    ok(&[
        "generate",
        "--nbfm",
        "--freq",
        "25000",
        "--rate",
        "2048000",
        "--mod-noise",
        "1000",
        "--snr",
        "30",
        "--dur",
        "0.1",
        "--out",
        p(&d("a.iq")),
    ]);
    ok(&[
        "cancel",
        "--rate",
        "2048000",
        "--in",
        p(&d("a.iq")),
        "--residual",
        p(&d("b.iq")),
    ]);
    let out = ok(&[
        "analyze",
        "--suppression",
        "--band",
        "15000",
        "35000",
        "--rate",
        "2048000",
        "--before",
        p(&d("a.iq")),
        "--after",
        p(&d("b.iq")),
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("band_lo_hz,band_hi_hz"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert!(row[5].parse::<f64>().unwrap() > 10.0);
}

#[test]
fn infeasible_resolution_fails() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    ok(&[
        "generate",
        "--tone",
        "--rate",
        "1000",
        "--n",
        "100",
        "--out",
        p(&d("t.iq")),
    ]);
    let out = stsa(&[
        "analyze",
        "--spectrum",
        "--res",
        "1",
        "--rate",
        "1000",
        "--in",
        p(&d("t.iq")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_window_is_a_usage_error() {
    let out = stsa(&[
        "cancel",
        "--rate",
        "1000",
        "--window",
        "kaiser",
        "--in",
        "x",
        "--residual",
        "y",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
