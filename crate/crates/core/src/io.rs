//! Plain-text CSV exports and imports.
//!
//! Every file starts with a `# config_digest=<hex>` line, followed by the
//! column header.

use crate::detection::{ClickStream, CoincidenceHistogram, Detector};
use crate::error::{Error, Result};
use crate::mcwf::EmissionRecord;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

pub fn digest_line(digest: &str) -> String {
    format!("# config_digest={digest}\n")
}

/// Two-column CSV with a digest line and header.
pub fn two_column_csv(digest: &str, header: (&str, &str), rows: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut s = digest_line(digest);
    let _ = writeln!(s, "{},{}", header.0, header.1);
    for (x, y) in rows {
        let _ = writeln!(s, "{x},{y}");
    }
    s
}

/// CSV with a digest line, a header and preformatted rows.
pub fn table_csv(digest: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = digest_line(digest);
    s.push_str(&header.join(","));
    s.push('\n');
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// `trajectory_id,emission_time_ns` rows.
pub fn emission_csv(digest: &str, records: &[EmissionRecord]) -> String {
    let mut s = digest_line(digest);
    s.push_str("trajectory_id,emission_time_ns\n");
    for r in records {
        for &t in &r.emission_times {
            let _ = writeln!(s, "{},{}", r.trajectory_id, t * 1e9);
        }
    }
    s
}

/// Reads an emission CSV back into per-trajectory records (in order of
/// first appearance).
pub fn read_emission_csv(reader: impl BufRead) -> Result<Vec<EmissionRecord>> {
    let mut out: Vec<EmissionRecord> = Vec::new();
    let mut seen_header = false;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            if line != "trajectory_id,emission_time_ns" {
                return Err(Error::Parse {
                    line: n + 1,
                    message: format!("unexpected header `{line}`"),
                });
            }
            seen_header = true;
            continue;
        }
        let (id, t) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: n + 1,
            message: "expected two comma-separated fields".into(),
        })?;
        let id: u64 = id.trim().parse().map_err(|e| Error::Parse {
            line: n + 1,
            message: format!("bad trajectory id: {e}"),
        })?;
        let t: f64 = t.trim().parse().map_err(|e| Error::Parse {
            line: n + 1,
            message: format!("bad emission time: {e}"),
        })?;
        match out.iter_mut().find(|r| r.trajectory_id == id) {
            Some(r) => r.emission_times.push(t * 1e-9),
            None => out.push(EmissionRecord {
                trajectory_id: id,
                emission_times: vec![t * 1e-9],
            }),
        }
    }
    for r in &out {
        if r.emission_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(format!(
                "emission times of trajectory {} are not strictly increasing",
                r.trajectory_id
            )));
        }
    }
    Ok(out)
}

/// Click stream from a timestamp file in the emission-CSV format; all
/// trajectories are concatenated.
pub fn read_click_stream(detector: Detector, path: &Path) -> Result<ClickStream> {
    let file = std::fs::File::open(path)?;
    let mut times: Vec<f64> = read_emission_csv(std::io::BufReader::new(file))?
        .into_iter()
        .flat_map(|r| r.emission_times)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    ClickStream::new(detector, times)
}

/// `delay_ns,counts` rows at bin lower edges.
pub fn histogram_csv(digest: &str, h: &CoincidenceHistogram) -> String {
    let mut s = digest_line(digest);
    s.push_str("delay_ns,counts\n");
    for (i, c) in h.counts.iter().enumerate() {
        // rounded to 1 fs so edges print without binary noise
        let edge = (h.bin_start(i) * 1e15).round() / 1e6;
        let _ = writeln!(s, "{edge},{c}");
    }
    s
}

/// Parses a histogram CSV written by [`histogram_csv`].
pub fn read_histogram_csv(text: &str, total_starts: u64) -> Result<CoincidenceHistogram> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("delay_ns") {
            continue;
        }
        let parse = || -> Option<(f64, u64)> {
            let (d, c) = line.split_once(',')?;
            Some((d.trim().parse().ok()?, c.trim().parse().ok()?))
        };
        rows.push(parse().ok_or_else(|| Error::Parse {
            line: n + 1,
            message: format!("bad histogram row `{line}`"),
        })?);
    }
    if rows.len() < 2 {
        return Err(Error::Analysis("histogram file has fewer than two bins".into()));
    }
    let width = (rows[1].0 - rows[0].0) * 1e-9;
    let range = -rows[0].0 * 1e-9;
    let mut h = CoincidenceHistogram::new(width, range)?;
    if h.counts.len() != rows.len() {
        return Err(Error::Analysis("histogram bins do not cover a symmetric range".into()));
    }
    for (slot, (_, c)) in h.counts.iter_mut().zip(rows) {
        *slot = c;
    }
    h.total_starts = total_starts;
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emission_csv_round_trip() {
        let recs = vec![
            EmissionRecord {
                trajectory_id: 0,
                emission_times: vec![1.5e-9, 3e-7],
            },
            EmissionRecord {
                trajectory_id: 7,
                emission_times: vec![2e-9],
            },
        ];
        let text = emission_csv("abc", &recs);
        assert!(text.starts_with("# config_digest=abc\ntrajectory_id,emission_time_ns\n"));
        let back = read_emission_csv(text.as_bytes()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in back.iter().zip(&recs) {
            assert_eq!(a.trajectory_id, b.trajectory_id);
            for (x, y) in a.emission_times.iter().zip(&b.emission_times) {
                assert!((x - y).abs() < 1e-20);
            }
        }
        assert!(read_emission_csv("x,y\n".as_bytes()).is_err());
        assert!(read_emission_csv("trajectory_id,emission_time_ns\n0,5\n0,4\n".as_bytes()).is_err());
    }

    #[test]
    fn histogram_csv_round_trip() {
        let mut h = CoincidenceHistogram::new(1e-9, 20e-9).unwrap();
        h.counts[3] = 5;
        h.counts[39] = 2;
        let back = read_histogram_csv(&histogram_csv("d", &h), 0).unwrap();
        assert_eq!(back.counts, h.counts);
    }
}
