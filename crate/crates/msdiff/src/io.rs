//! Snapshot and table formats.
//!
//! Binary snapshot frame, little-endian:
//!
//! | offset | type      | field                 |
//! |--------|-----------|-----------------------|
//! | 0      | `u32`     | spatial dimension     |
//! | 4      | `[u32;3]` | cells per axis (1 for unused axes) |
//! | 16     | `u32`     | species `n`           |
//! | 20     | `u32`     | reserved, 0           |
//! | 24     | `f64`     | time                  |
//! | 32     | `f64`     | `n * cells` values, species-major, row-major cells |
//!
//! Lengths are not stored; a reader supplies them.

use std::fmt::Write as _;
use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use msdiff_core::entropy::EntropyReport;
use msdiff_core::{ConcentrationState, PeriodicGrid};

use crate::error::{RunError, RunResult};

pub const HEADER_BYTES: usize = 32;

pub fn write_snapshot(w: &mut impl Write, state: &ConcentrationState) -> RunResult<()> {
    let grid = state.grid();
    let mut header = [0u8; HEADER_BYTES];
    header[0..4].copy_from_slice(&(grid.dim() as u32).to_le_bytes());
    for (a, c) in grid.cells().iter().enumerate() {
        header[4 + 4 * a..8 + 4 * a].copy_from_slice(&(*c as u32).to_le_bytes());
    }
    header[16..20].copy_from_slice(&(state.species_count() as u32).to_le_bytes());
    header[24..32].copy_from_slice(&state.time().to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(8 * state.data().len());
    for x in state.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads one frame; `Ok(None)` at a clean end of input.
pub fn read_snapshot(r: &mut impl Read, lengths: &[f64]) -> RunResult<Option<ConcentrationState>> {
    let mut header = [0u8; HEADER_BYTES];
    let mut filled = 0;
    while filled < HEADER_BYTES {
        let k = r.read(&mut header[filled..])?;
        if k == 0 {
            return if filled == 0 { Ok(None) } else { Err(RunError::Format("truncated header".into())) };
        }
        filled += k;
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().expect("4 bytes")) as usize;
    let dim = u32_at(0);
    if !(1..=3).contains(&dim) {
        return Err(RunError::Format(format!("dimension {dim}")));
    }
    if lengths.len() != dim {
        return Err(RunError::Format(format!("{} lengths for a {dim}-d snapshot", lengths.len())));
    }
    let cells: Vec<usize> = (0..dim).map(|a| u32_at(4 + 4 * a)).collect();
    let n = u32_at(16);
    let time = f64::from_le_bytes(header[24..32].try_into().expect("8 bytes"));
    let grid = PeriodicGrid::new(&cells, lengths)?;
    let mut payload = vec![0u8; 8 * n * grid.len()];
    r.read_exact(&mut payload).map_err(|_| RunError::Format("truncated payload".into()))?;
    let data = payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
    Ok(Some(ConcentrationState::from_raw(grid, n, data, time)?))
}

/// Shortest round-trip representation.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// A 1-D snapshot as `x,c1,...,cn`.
pub fn snapshot_csv(state: &ConcentrationState) -> RunResult<String> {
    let grid = state.grid();
    if grid.dim() != 1 {
        return Err(RunError::Format("CSV snapshots are one-dimensional".into()));
    }
    let n = state.species_count();
    let mut out = String::from("x");
    (1..=n).for_each(|i| write!(out, ",c{i}").expect("string write"));
    out.push('\n');
    for k in 0..grid.len() {
        out.push_str(&fmt_f64(grid.center(k)[0]));
        for i in 0..n {
            out.push(',');
            out.push_str(&fmt_f64(state.species(i)[k]));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Diagnostics rows under [`EntropyReport::COLUMNS`].
pub fn diagnostics_csv(reports: &[EntropyReport]) -> String {
    let mut out = EntropyReport::COLUMNS.join(",");
    out.push('\n');
    for r in reports {
        let row: Vec<String> = r.values().iter().map(|x| fmt_f64(*x)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// A table with a header and stringly cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        write!(s, "{b:02x}").expect("string write");
        s
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ConcentrationState {
        let grid = PeriodicGrid::new(&[4, 3], &[1.0, 2.0]).unwrap();
        ConcentrationState::from_fn(grid, 3, 0.125, |x, out| {
            out[0] = 0.2 + 0.1 * x[0];
            out[1] = 0.3 + 0.05 * x[1];
            out[2] = 1.0 - out[0] - out[1];
        })
        .unwrap()
    }

    #[test]
    fn snapshot_round_trip() {
        let s = sample();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &s).unwrap();
        write_snapshot(&mut buf, &s).unwrap();
        assert_eq!(buf.len(), 2 * (HEADER_BYTES + 8 * 3 * 12));
        let mut r = buf.as_slice();
        let a = read_snapshot(&mut r, &[1.0, 2.0]).unwrap().unwrap();
        assert_eq!(a.data(), s.data());
        assert_eq!(a.time(), 0.125);
        assert!(read_snapshot(&mut r, &[1.0, 2.0]).unwrap().is_some());
        assert!(read_snapshot(&mut r, &[1.0, 2.0]).unwrap().is_none());
    }

    #[test]
    fn truncated_snapshot_is_an_error() {
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &sample()).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_snapshot(&mut buf.as_slice(), &[1.0, 2.0]), Err(RunError::Format(_))));
        assert!(matches!(read_snapshot(&mut &buf[..10], &[1.0, 2.0]), Err(RunError::Format(_))));
    }

    #[test]
    fn csv_formats() {
        let grid = PeriodicGrid::new(&[4], &[2.0]).unwrap();
        let s = ConcentrationState::uniform(grid, &[0.25, 0.75]).unwrap();
        let csv = snapshot_csv(&s).unwrap();
        assert_eq!(csv.lines().next(), Some("x,c1,c2"));
        assert_eq!(csv.lines().nth(2), Some("7.5e-1,2.5e-1,7.5e-1"));
        assert_eq!(csv.lines().count(), 5);
        assert!(snapshot_csv(&sample()).is_err());
        let d = diagnostics_csv(&[EntropyReport::default()]);
        assert_eq!(d.lines().count(), 2);
        assert!(d.starts_with("t,H,H_rel,H_sym,F_delta"));
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }

    proptest::proptest! {
        #[test]
        fn numbers_round_trip(x in proptest::num::f64::ANY) {
            let back: f64 = fmt_f64(x).parse().unwrap();
            proptest::prop_assert!(back == x || (x.is_nan() && back.is_nan()));
        }

        #[test]
        fn snapshots_round_trip(cells in 3usize..9, n in 2usize..5, time in 0.0f64..10.0) {
            let grid = PeriodicGrid::new(&[cells], &[1.5]).unwrap();
            let s = ConcentrationState::from_fn(grid, n, time, |x, out| {
                let w = 0.5 + 0.25 * (6.0 * x[0]).sin();
                out[0] = w;
                out[1..].iter_mut().for_each(|c| *c = (1.0 - w) / (n - 1) as f64);
            })
            .unwrap();
            let mut buf = Vec::new();
            write_snapshot(&mut buf, &s).unwrap();
            let back = read_snapshot(&mut buf.as_slice(), &[1.5]).unwrap().unwrap();
            proptest::prop_assert_eq!(back.data(), s.data());
            proptest::prop_assert_eq!(back.time(), time);
        }
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
