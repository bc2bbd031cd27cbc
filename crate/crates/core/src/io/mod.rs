//! On-disk formats. Times are integer picoseconds, energies μeV and rates
//! counts/s; writers go through a temporary file renamed into place.

mod scenario;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use scenario::{load_scenario, save_scenario, DetectorPair, Scenario, ScenarioParams};

use crate::error::{Error, Result};
use crate::estimate::CoherencePoint;
use crate::simulate::{Channel, CorrelationHistogram, DetectionRecord, HistogramGrid};

/// Magic bytes of the binary timestamp format.
pub const TIMESTAMP_MAGIC: &[u8; 4] = b"TPI1";
const RECORD_BYTES: usize = 9;

pub(crate) fn map_json_error(e: serde_json::Error) -> Error {
    let msg = e.to_string();
    if msg.contains("unknown field") {
        Error::UnknownField(msg)
    } else {
        Error::Parse(msg)
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn check_records(records: &[DetectionRecord]) -> Result<()> {
    let mut last: [Option<i64>; 2] = [None, None];
    for (i, r) in records.iter().enumerate() {
        if r.time_ps < 0 {
            return Err(Error::validation(format!("record {i}.time_ps"), "must be >= 0"));
        }
        let slot = &mut last[(r.channel.code() - 1) as usize];
        if matches!(slot, Some(prev) if r.time_ps < *prev) {
            return Err(Error::UnsortedInput {
                channel: r.channel.to_string(),
                index: i,
            });
        }
        *slot = Some(r.time_ps);
    }
    Ok(())
}

/// CSV with header `time_ps,channel`; channels are written as their codes 1 and 2.
pub fn write_timestamps_csv(path: impl AsRef<Path>, records: &[DetectionRecord]) -> Result<()> {
    check_records(records)?;
    let mut out = String::with_capacity(16 * records.len() + 16);
    out.push_str("time_ps,channel\n");
    for r in records {
        let _ = writeln!(out, "{},{}", r.time_ps, r.channel.code());
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

pub fn read_timestamps_csv(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>> {
    let text = read_to_string(path.as_ref())?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "time_ps,channel" => {}
        other => {
            return Err(Error::Parse(format!(
                "expected header `time_ps,channel`, found {other:?}"
            )))
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (t, c) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("line {}: expected two columns", i + 2)))?;
        let time_ps = t
            .trim()
            .parse::<i64>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?;
        let channel = c.trim().parse::<Channel>()?;
        records.push(DetectionRecord { time_ps, channel });
    }
    check_records(&records)?;
    Ok(records)
}

/// `TPI1` followed by little-endian `i64` picoseconds and a `u8` channel code
/// (1 = D1, 2 = D2) per record.
pub fn encode_timestamps(records: &[DetectionRecord]) -> Result<Vec<u8>> {
    check_records(records)?;
    let mut out = Vec::with_capacity(4 + RECORD_BYTES * records.len());
    out.extend_from_slice(TIMESTAMP_MAGIC);
    for r in records {
        out.extend_from_slice(&r.time_ps.to_le_bytes());
        out.push(r.channel.code());
    }
    Ok(out)
}

pub fn decode_timestamps(bytes: &[u8]) -> Result<Vec<DetectionRecord>> {
    if bytes.len() < 4 {
        return Err(Error::TruncatedFile(format!(
            "{} bytes, shorter than the magic",
            bytes.len()
        )));
    }
    if &bytes[..4] != TIMESTAMP_MAGIC {
        return Err(Error::MagicMismatch {
            found: bytes[..4].to_vec(),
        });
    }
    let body = &bytes[4..];
    if body.len() % RECORD_BYTES != 0 {
        return Err(Error::TruncatedFile(format!(
            "{} trailing bytes after {} whole records",
            body.len() % RECORD_BYTES,
            body.len() / RECORD_BYTES
        )));
    }
    let records = body
        .chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(i, c)| {
            let time_ps = i64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let channel = Channel::from_code(c[8])
                .ok_or_else(|| Error::Parse(format!("record {i}: unknown channel code {}", c[8])))?;
            Ok(DetectionRecord { time_ps, channel })
        })
        .collect::<Result<Vec<_>>>()?;
    check_records(&records)?;
    Ok(records)
}

pub fn write_timestamps_bin(path: impl AsRef<Path>, records: &[DetectionRecord]) -> Result<()> {
    write_atomic(path.as_ref(), &encode_timestamps(records)?)
}

pub fn read_timestamps_bin(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_timestamps(&bytes)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistogramFile {
    bin_width_ps: i64,
    tau_min_ps: i64,
    counts: Vec<u64>,
    overflow: u64,
    span_ps: i64,
    n_start: u64,
    n_stop: u64,
    seed_list: Vec<u64>,
}

pub fn histogram_to_json(h: &CorrelationHistogram) -> String {
    let file = HistogramFile {
        bin_width_ps: h.grid().bin_width(),
        tau_min_ps: h.grid().tau_min(),
        counts: h.counts().to_vec(),
        overflow: h.overflow(),
        span_ps: h.span_ps(),
        n_start: h.n_start(),
        n_stop: h.n_stop(),
        seed_list: h.seed_list().to_vec(),
    };
    serde_json::to_string(&file).expect("histogram serializes")
}

pub fn histogram_from_json(text: &str) -> Result<CorrelationHistogram> {
    let f: HistogramFile = serde_json::from_str(text).map_err(map_json_error)?;
    let grid = HistogramGrid::new(f.bin_width_ps, f.tau_min_ps, f.counts.len())
        .map_err(|e| Error::validation("tau_min_ps", e.to_string()))?;
    CorrelationHistogram::from_parts(
        grid,
        f.counts,
        f.overflow,
        f.span_ps,
        f.n_start,
        f.n_stop,
        f.seed_list,
    )
}

pub fn write_histogram(path: impl AsRef<Path>, h: &CorrelationHistogram) -> Result<()> {
    let mut text = histogram_to_json(h);
    text.push('\n');
    write_atomic(path.as_ref(), text.as_bytes())
}

pub fn read_histogram(path: impl AsRef<Path>) -> Result<CorrelationHistogram> {
    histogram_from_json(&read_to_string(path.as_ref())?)
}

/// Curve rows `tau_ps,value,sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub tau_ps: f64,
    pub value: f64,
    pub sigma: f64,
}

pub fn curve_to_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("tau_ps,value,sigma\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.tau_ps, r.value, r.sigma);
    }
    out
}

pub fn write_curve_csv(path: impl AsRef<Path>, rows: &[CurveRow]) -> Result<()> {
    write_atomic(path.as_ref(), curve_to_csv(rows).as_bytes())
}

fn parse_float_rows(text: &str, header: &str, ncols: usize) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => {}
        other => return Err(Error::Parse(format!("expected header `{header}`, found {other:?}"))),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let cols: Vec<&str> = l.split(',').map(str::trim).collect();
            if cols.len() != ncols {
                return Err(Error::Parse(format!(
                    "line {}: expected {ncols} columns, found {}",
                    i + 2,
                    cols.len()
                )));
            }
            cols.iter()
                .map(|c| {
                    c.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: `{c}`: {e}", i + 2)))
                })
                .collect()
        })
        .collect()
}

pub fn read_curve_csv(path: impl AsRef<Path>) -> Result<Vec<CurveRow>> {
    let rows = parse_float_rows(&read_to_string(path.as_ref())?, "tau_ps,value,sigma", 3)?;
    Ok(rows
        .into_iter()
        .map(|r| CurveRow {
            tau_ps: r[0],
            value: r[1],
            sigma: r[2],
        })
        .collect())
}

/// Coherence measurements with header `delay_ps,visibility,sigma`.
pub fn read_coherence_points(path: impl AsRef<Path>) -> Result<Vec<CoherencePoint>> {
    let rows = parse_float_rows(
        &read_to_string(path.as_ref())?,
        "delay_ps,visibility,sigma",
        3,
    )?;
    Ok(rows
        .into_iter()
        .map(|r| CoherencePoint {
            delay_ps: r[0],
            visibility: r[1],
            sigma: r[2],
        })
        .collect())
}

pub fn write_coherence_points(path: impl AsRef<Path>, points: &[CoherencePoint]) -> Result<()> {
    let mut out = String::from("delay_ps,visibility,sigma\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.delay_ps, p.visibility, p.sigma);
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

/// Pretty-printed JSON of any serializable report object.
pub fn write_report<T: Serialize + ?Sized>(path: impl AsRef<Path>, report: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Parse(format!("report serialization: {e}")))?;
    text.push('\n');
    write_atomic(path.as_ref(), text.as_bytes())
}
