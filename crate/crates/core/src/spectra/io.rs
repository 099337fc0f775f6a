//! Plain-CSV readers and writers for sweeps, descriptor matrices, targets,
//! and the smaller stage reports.
//!
//! Floats are written with Rust's shortest-round-trip formatting, so a
//! write→read cycle reproduces every f64 bit-exactly. Parse errors carry the
//! file path and 1-based line number.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use super::{DescriptorMatrix, FeatureKind, FrequencySweep, SpectraError, DESCRIPTOR_COUNT};

pub const SWEEP_HEADER: &str = "round,kind,timestamp_s,freq_hz,re_z_ohm,im_z_ohm";
pub const TARGETS_HEADER: &str = "timestamp_s,target_pct";

fn io_err(path: &Path, source: std::io::Error) -> SpectraError {
    SpectraError::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> SpectraError {
    SpectraError::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

fn parse_f64(path: &Path, line: usize, field: &str, raw: &str) -> Result<f64, SpectraError> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("invalid {field} value {raw:?}")))
}

fn parse_usize(path: &Path, line: usize, field: &str, raw: &str) -> Result<usize, SpectraError> {
    raw.trim()
        .parse::<usize>()
        .map_err(|_| parse_err(path, line, format!("invalid {field} value {raw:?}")))
}

// ---------- sweeps ----------

/// Write sweeps as one sample per line under [`SWEEP_HEADER`].
pub fn write_sweep_csv(path: &Path, sweeps: &[FrequencySweep]) -> Result<(), SpectraError> {
    let mut out = String::with_capacity(sweeps.len() * 64 * 1000 + 64);
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for sweep in sweeps {
        for (f, z) in sweep.freq_hz.iter().zip(&sweep.z_ohm) {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                sweep.round_index, sweep.kind, sweep.timestamp_s, f, z.re, z.im
            )
            .expect("string write");
        }
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read sweeps back; consecutive lines sharing (round, kind) form one sweep.
/// An empty file yields an empty collection.
pub fn read_sweep_csv(path: &Path) -> Result<Vec<FrequencySweep>, SpectraError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut sweeps = Vec::new();
    let mut current: Option<(usize, FeatureKind, f64, Vec<f64>, Vec<Complex64>, usize)> = None;

    let flush = |cur: Option<(usize, FeatureKind, f64, Vec<f64>, Vec<Complex64>, usize)>,
                     sweeps: &mut Vec<FrequencySweep>|
     -> Result<(), SpectraError> {
        if let Some((round, kind, ts, freq, z, start_line)) = cur {
            let sweep = FrequencySweep::new(kind, round, ts, freq, z).map_err(|e| {
                parse_err(path, start_line, format!("sweep ({round}, {kind}): {e}"))
            })?;
            sweeps.push(sweep);
        }
        Ok(())
    };

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if idx == 0 {
            if line.trim() != SWEEP_HEADER {
                return Err(parse_err(path, 1, format!("expected header {SWEEP_HEADER:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(path, line_no, format!("expected 6 fields, got {}", fields.len())));
        }
        let round = parse_usize(path, line_no, "round", fields[0])?;
        let kind = FeatureKind::parse(fields[1].trim())
            .ok_or_else(|| parse_err(path, line_no, format!("unknown kind {:?}", fields[1])))?;
        let ts = parse_f64(path, line_no, "timestamp_s", fields[2])?;
        let freq = parse_f64(path, line_no, "freq_hz", fields[3])?;
        let re = parse_f64(path, line_no, "re_z_ohm", fields[4])?;
        let im = parse_f64(path, line_no, "im_z_ohm", fields[5])?;

        let same_group = matches!(&current, Some((r, k, ..)) if *r == round && *k == kind);
        if !same_group {
            flush(current.take(), &mut sweeps)?;
            current = Some((round, kind, ts, Vec::new(), Vec::new(), line_no));
        }
        let (_, _, _, freqs, zs, _) = current.as_mut().unwrap();
        freqs.push(freq);
        zs.push(Complex64::new(re, im));
    }
    flush(current, &mut sweeps)?;
    Ok(sweeps)
}

// ---------- descriptor matrix ----------

/// Write a descriptor matrix as `timestamp_s,target_pct,<52 names>`.
pub fn write_descriptor_csv(path: &Path, m: &DescriptorMatrix) -> Result<(), SpectraError> {
    let mut out = String::new();
    out.push_str("timestamp_s,target_pct");
    for name in &m.names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..m.n_rows() {
        write!(out, "{},{}", m.timestamps_s[i], m.y[i]).expect("string write");
        for v in m.row(i) {
            write!(out, ",{v}").expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a descriptor matrix, validating the canonical header.
pub fn read_descriptor_csv(path: &Path) -> Result<DescriptorMatrix, SpectraError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut m = DescriptorMatrix::new();
    let expected_header = {
        let mut h = String::from("timestamp_s,target_pct");
        for name in &m.names {
            h.push(',');
            h.push_str(name);
        }
        h
    };
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if idx == 0 {
            if line.trim() != expected_header {
                return Err(parse_err(path, 1, "descriptor header does not match canonical names"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 + DESCRIPTOR_COUNT {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {} fields, got {}", 2 + DESCRIPTOR_COUNT, fields.len()),
            ));
        }
        m.timestamps_s.push(parse_f64(path, line_no, "timestamp_s", fields[0])?);
        m.y.push(parse_f64(path, line_no, "target_pct", fields[1])?);
        for (j, raw) in fields[2..].iter().enumerate() {
            m.x.push(parse_f64(path, line_no, &m.names[j].clone(), raw)?);
        }
    }
    Ok(m)
}

// ---------- targets ----------

/// Write `(timestamp_s, target_pct)` pairs.
pub fn write_targets_csv(path: &Path, targets: &[(f64, f64)]) -> Result<(), SpectraError> {
    let mut out = String::from(TARGETS_HEADER);
    out.push('\n');
    for (ts, pct) in targets {
        writeln!(out, "{ts},{pct}").expect("string write");
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_targets_csv(path: &Path) -> Result<Vec<(f64, f64)>, SpectraError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if idx == 0 {
            if line.trim() != TARGETS_HEADER {
                return Err(parse_err(path, 1, format!("expected header {TARGETS_HEADER:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(parse_err(path, line_no, format!("expected 2 fields, got {}", fields.len())));
        }
        out.push((
            parse_f64(path, line_no, "timestamp_s", fields[0])?,
            parse_f64(path, line_no, "target_pct", fields[1])?,
        ));
    }
    Ok(out)
}

/// Linear interpolation of a (timestamp, value) series at `t`, clamped to
/// the series range. The series must be sorted by timestamp.
pub fn interpolate_series(series: &[(f64, f64)], t: f64) -> f64 {
    match series {
        [] => f64::NAN,
        [only] => only.1,
        _ => {
            if t <= series[0].0 {
                return series[0].1;
            }
            if t >= series[series.len() - 1].0 {
                return series[series.len() - 1].1;
            }
            let pos = series.partition_point(|(ts, _)| *ts <= t);
            let (t0, v0) = series[pos - 1];
            let (t1, v1) = series[pos];
            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        }
    }
}
