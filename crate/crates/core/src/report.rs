//! CSV and JSON artifacts.
//!
//! CSV files use `,` separators, `.` decimals, LF line endings and a header
//! row. Floats are written with 17 significant digits so they read back to
//! the identical `f64`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::{FrameRecord, SlotRecord};
use crate::error::{Error, Result};
use crate::oracle::{OracleFrontier, ThetaStar};
use crate::sim::{SweepRow, Trace};
use crate::solver::{FrameCase, ValueTable};

/// Formats `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..=16).contains(&exp) {
        format!("{:.*}", (16 - exp) as usize, x)
    } else {
        format!("{x:.16e}")
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_frames_csv<W: Write>(w: W, trace: &Trace) -> csv::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["f", "L", "T", "power_sum", "surplus", "q_before", "q_after", "mode"])?;
    for f in &trace.frames {
        out.write_record([
            f.index.to_string(),
            f.packet_length.to_string(),
            f.len().to_string(),
            fmt_f64(f.power_sum),
            fmt_f64(f.surplus),
            fmt_f64(f.q_before),
            fmt_f64(f.q_after),
            f.mode.as_str().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_slots_csv<W: Write>(w: W, trace: &Trace) -> csv::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["t", "f", "power_index", "gain_index", "delivered_units"])?;
    for f in &trace.frames {
        for (i, s) in f.slots.iter().enumerate() {
            out.write_record([
                (f.start_slot + i as u64).to_string(),
                f.index.to_string(),
                s.power_index.to_string(),
                s.gain_index.to_string(),
                s.delivered.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct FrameRow {
    f: u64,
    #[serde(rename = "L")]
    length: u32,
    #[serde(rename = "T")]
    slots: u64,
    power_sum: f64,
    surplus: f64,
    q_before: f64,
    q_after: f64,
    mode: String,
}

#[derive(Debug, Deserialize)]
struct SlotRow {
    t: u64,
    f: u64,
    power_index: usize,
    gain_index: usize,
    delivered_units: u32,
}

/// Rebuilds a trace from `frames.csv` and `slots.csv`.
pub fn read_trace(frames_path: &Path, slots_path: &Path, fingerprint: String) -> Result<Trace> {
    let mut frames = Vec::new();
    let mut reader = csv::Reader::from_path(frames_path).map_err(csv_err(frames_path))?;
    let mut expected = Vec::new();
    let mut start = 0;
    for row in reader.deserialize() {
        let row: FrameRow = row.map_err(csv_err(frames_path))?;
        let mode = FrameCase::parse(&row.mode)
            .ok_or_else(|| format_err(frames_path, format!("unknown mode {:?}", row.mode)))?;
        frames.push(FrameRecord {
            index: row.f,
            packet_length: row.length,
            start_slot: start,
            slots: Vec::with_capacity(row.slots as usize),
            power_sum: row.power_sum,
            surplus: row.surplus,
            q_before: row.q_before,
            q_after: row.q_after,
            mode,
        });
        start += row.slots;
        expected.push(row.slots);
    }
    let mut reader = csv::Reader::from_path(slots_path).map_err(csv_err(slots_path))?;
    for row in reader.deserialize() {
        let row: SlotRow = row.map_err(csv_err(slots_path))?;
        let frame = frames
            .get_mut(row.f as usize)
            .ok_or_else(|| format_err(slots_path, format!("slot {} names unknown frame {}", row.t, row.f)))?;
        if row.t != frame.start_slot + frame.slots.len() as u64 {
            return Err(format_err(slots_path, format!("slot {} out of sequence", row.t)));
        }
        frame.slots.push(SlotRecord {
            power_index: row.power_index,
            gain_index: row.gain_index,
            delivered: row.delivered_units,
        });
    }
    for (f, n) in frames.iter().zip(expected) {
        if f.len() != n {
            return Err(format_err(
                slots_path,
                format!("frame {} has {} slots, expected {n}", f.index, f.len()),
            ));
        }
    }
    Ok(Trace {
        frames,
        fingerprint,
    })
}

/// Value table as CSV preceded by a `#` line naming the regime.
pub fn write_value_table<W: Write>(mut w: W, table: &ValueTable, q: f64, length: usize) -> Result<()> {
    let io = |e| Error::io("<value table>", e);
    writeln!(w, "# case={} q={} l={length}", table.mode().as_str(), fmt_f64(q)).map_err(io)?;
    let mut out = csv_writer(&mut w);
    let werr = |source| Error::Csv {
        path: "<value table>".into(),
        source,
    };
    out.write_record(["k", "m_k", "choice_k"]).map_err(werr)?;
    out.write_record(["0".to_string(), fmt_f64(table.value(0)), String::new()])
        .map_err(werr)?;
    for k in 1..=table.len() {
        out.write_record([
            k.to_string(),
            fmt_f64(table.value(k)),
            table.choose_power(k)?.to_string(),
        ])
        .map_err(werr)?;
    }
    out.flush().map_err(io)?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = csv_writer(create(path)?);
    let err = csv_err(path);
    out.write_record([
        "v",
        "mean_delay",
        "se_delay",
        "mean_slack",
        "q_max",
        "theta_star",
        "gap_times_v",
    ])
    .map_err(&err)?;
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for r in rows {
        out.write_record([
            fmt_f64(r.v),
            fmt_f64(r.mean_delay),
            fmt_f64(r.se_delay),
            fmt_f64(r.mean_slack),
            fmt_f64(r.q_max),
            opt(r.theta_star),
            opt(r.gap_times_v),
        ])
        .map_err(&err)?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct SweepCsvRow {
    pub v: f64,
    pub mean_delay: f64,
    pub se_delay: f64,
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepCsvRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    reader
        .deserialize()
        .collect::<csv::Result<Vec<SweepCsvRow>>>()
        .map_err(csv_err(path))
}

/// Contents of `oracle.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub beta: f64,
    pub theta_star: f64,
    pub expected_surplus: f64,
    pub support: Vec<crate::oracle::MixtureComponent>,
    pub frontier_csv: String,
}

impl OracleReport {
    pub fn new(beta: f64, theta: &ThetaStar, frontier_csv: &str) -> Self {
        Self {
            beta,
            theta_star: theta.theta,
            expected_surplus: theta.expected_surplus,
            support: theta.support.clone(),
            frontier_csv: frontier_csv.to_string(),
        }
    }
}

pub fn write_frontier_csv<W: Write>(w: W, front: &OracleFrontier) -> csv::Result<()> {
    let mut out = csv_writer(w);
    out.write_record([
        "L",
        "prob",
        "policy_index",
        "expected_surplus",
        "expected_length",
        "on_envelope",
    ])?;
    for lf in &front.frontiers {
        let mut on = vec![false; lf.points.len()];
        for &i in &lf.envelope {
            on[i] = true;
        }
        for (p, on) in lf.points.iter().zip(on) {
            out.write_record([
                lf.length.to_string(),
                fmt_f64(lf.prob),
                p.policy_index.to_string(),
                fmt_f64(p.expected_surplus),
                fmt_f64(p.expected_length),
                u8::from(on).to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&buf).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Sweep rows joined with the oracle optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareRow {
    pub v: f64,
    pub delay_gap: f64,
    pub gap_times_v: f64,
}

pub fn compare(rows: &[SweepCsvRow], theta_star: f64) -> Vec<CompareRow> {
    rows.iter()
        .map(|r| {
            let gap = r.mean_delay - theta_star;
            CompareRow {
                v: r.v,
                delay_gap: gap,
                gap_times_v: gap * r.v,
            }
        })
        .collect()
}

pub fn write_compare_csv<W: Write>(w: W, rows: &[CompareRow]) -> csv::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["v", "delay_gap", "gap_times_v"])?;
    for r in rows {
        out.write_record([fmt_f64(r.v), fmt_f64(r.delay_gap), fmt_f64(r.gap_times_v)])?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn write_to_file(
    path: &Path,
    f: impl FnOnce(BufWriter<File>) -> csv::Result<()>,
) -> Result<()> {
    f(create(path)?).map_err(csv_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.5), "0.50000000000000000");
        assert_eq!(fmt_f64(3.0), "3.0000000000000000");
        assert_eq!(fmt_f64(-90.0), "-90.000000000000000");
        assert_eq!(fmt_f64(0.0), "0");
        assert_eq!(fmt_f64(0.1), "0.10000000000000001");
        assert_eq!(fmt_f64(1e300), "1.0000000000000001e300");
        assert_eq!(fmt_f64(-2.5e-7), "-2.4999999999999999e-7");
    }

    proptest! {
        #[test]
        fn float_text_roundtrips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let s = fmt_f64(x);
            let y: f64 = s.parse().unwrap();
            prop_assert_eq!(x.abs().to_bits(), y.abs().to_bits());
            prop_assert!(!s.contains(','));
        }
    }

    #[test]
    fn compare_arithmetic() {
        let rows = [
            SweepCsvRow { v: 10.0, mean_delay: 4.5, se_delay: 0.1 },
            SweepCsvRow { v: 100.0, mean_delay: 4.05, se_delay: 0.1 },
        ];
        let out = compare(&rows, 4.0);
        assert_eq!(out[0].delay_gap, 0.5);
        assert_eq!(out[0].gap_times_v, 5.0);
        assert!((out[1].gap_times_v - 5.0).abs() < 1e-12);
    }
}
