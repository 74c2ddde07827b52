//! Trace CSV files.
//!
//! Long format, one binned depth slice per row:
//!
//! ```text
//! depth_m,intensity_mean,intensity_std,target_rho
//! ```
//!
//! Numbers are written with 9 significant digits, so any value that already
//! has at most 9 significant digits survives a write/read cycle unchanged.
//! The wide layout with per-target column groups (`x_5,mean_5,std_5,...`) is
//! accepted on input and converted.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use fogbench_core::scene::{DepthBin, TargetTrace};

use crate::error::{CliError, Result};

pub const HEADER: [&str; 4] = ["depth_m", "intensity_mean", "intensity_std", "target_rho"];

/// One long-format row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub depth_m: f64,
    pub intensity_mean: f64,
    pub intensity_std: f64,
    pub target_rho: f64,
}

/// Formats `x` with 9 significant digits in plain decimal notation.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{}", if x == 0.0 { 0.0 } else { x });
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("scientific notation parses");
    format!("{rounded}")
}

pub fn rows_from_traces(traces: &[TargetTrace]) -> Vec<TraceRow> {
    traces
        .iter()
        .flat_map(|t| {
            t.binned.iter().map(move |b| TraceRow {
                depth_m: b.center_m,
                intensity_mean: b.mean_intensity,
                intensity_std: b.std,
                target_rho: t.rho,
            })
        })
        .collect()
}

/// Groups rows by reflectivity, ascending, with bins sorted by depth.
pub fn traces_from_rows(rows: &[TraceRow]) -> Vec<TargetTrace> {
    let mut groups: BTreeMap<u64, (f64, Vec<DepthBin>)> = BTreeMap::new();
    for r in rows {
        let entry = groups.entry(r.target_rho.to_bits()).or_insert_with(|| (r.target_rho, Vec::new()));
        entry.1.push(DepthBin { center_m: r.depth_m, mean_intensity: r.intensity_mean, std: r.intensity_std, count: 1 });
    }
    let mut traces: Vec<TargetTrace> = groups
        .into_values()
        .map(|(rho, mut bins)| {
            bins.sort_by(|a, b| a.center_m.total_cmp(&b.center_m));
            TargetTrace::from_bins(rho, bins)
        })
        .collect();
    traces.sort_by(|a, b| a.rho.total_cmp(&b.rho));
    traces
}

pub fn write_rows<W: Write>(w: W, rows: &[TraceRow]) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(HEADER)?;
    for r in rows {
        out.write_record([
            format_sig9(r.depth_m),
            format_sig9(r.intensity_mean),
            format_sig9(r.intensity_std),
            format_sig9(r.target_rho),
        ])?;
    }
    out.flush()
}

pub fn to_bytes(rows: &[TraceRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows).expect("writing to memory");
    buf
}

/// Parses a trace file in either layout. `source` names the input in errors.
pub fn read_rows<R: Read>(r: R, source: &str) -> Result<Vec<TraceRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| schema(source, format!("unreadable header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.iter().all(String::is_empty) {
        return Err(schema(source, "missing header".into()));
    }
    let rows = if header.iter().any(|h| h.starts_with("x_")) {
        read_wide(&mut reader, &header, source)?
    } else {
        read_long(&mut reader, &header, source)?
    };
    if rows.is_empty() {
        return Err(schema(source, "no data rows".into()));
    }
    Ok(rows)
}

pub fn read_path(path: &Path) -> Result<Vec<TraceRow>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_rows(std::io::BufReader::new(file), &path.display().to_string())
}

fn read_long<R: Read>(reader: &mut csv::Reader<R>, header: &[String], source: &str) -> Result<Vec<TraceRow>> {
    for h in header {
        if !HEADER.contains(&h.as_str()) {
            return Err(schema(source, format!("unknown column '{h}'")));
        }
    }
    if header != HEADER {
        return Err(schema(source, format!("header must be exactly '{}'", HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| malformed(source, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut v = [0.0; 4];
        for (i, name) in HEADER.iter().enumerate() {
            v[i] = parse_field(record.get(i).unwrap_or(""), name, source, line)?;
        }
        let row = TraceRow { depth_m: v[0], intensity_mean: v[1], intensity_std: v[2], target_rho: v[3] };
        check_row(&row, source, line)?;
        rows.push(row);
    }
    Ok(rows)
}

/// Wide layout: for each target a triple `x_<pct>, mean_<pct>, std_<pct>`,
/// where `<pct>` is the reflectivity in percent. Targets may have different
/// depths per row, and blank cells mark rows where a target is absent.
fn read_wide<R: Read>(reader: &mut csv::Reader<R>, header: &[String], source: &str) -> Result<Vec<TraceRow>> {
    let mut groups: BTreeMap<String, [Option<usize>; 3]> = BTreeMap::new();
    for (col, h) in header.iter().enumerate() {
        let (slot, pct) = match h.split_once('_') {
            Some(("x", p)) => (0, p),
            Some(("mean", p)) => (1, p),
            Some(("std", p)) => (2, p),
            _ => return Err(schema(source, format!("unknown column '{h}'"))),
        };
        if pct.parse::<f64>().is_err() {
            return Err(schema(source, format!("unknown column '{h}'")));
        }
        groups.entry(pct.to_owned()).or_default()[slot] = Some(col);
    }
    let mut targets = Vec::new();
    for (pct, cols) in &groups {
        let [Some(x), Some(mean), Some(std)] = *cols else {
            return Err(schema(source, format!("target '{pct}' needs x_{pct}, mean_{pct} and std_{pct}")));
        };
        let rho = pct.parse::<f64>().expect("checked above") / 100.0;
        targets.push((rho, x, mean, std));
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| malformed(source, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        for &(rho, x, mean, std) in &targets {
            let cells = [x, mean, std].map(|c| record.get(c).unwrap_or(""));
            if cells.iter().all(|c| c.is_empty()) {
                continue;
            }
            let row = TraceRow {
                depth_m: parse_field(cells[0], &header[x], source, line)?,
                intensity_mean: parse_field(cells[1], &header[mean], source, line)?,
                intensity_std: parse_field(cells[2], &header[std], source, line)?,
                target_rho: rho,
            };
            check_row(&row, source, line)?;
            rows.push(row);
        }
    }
    Ok(rows)
}

fn parse_field(cell: &str, name: &str, source: &str, line: u64) -> Result<f64> {
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| malformed(source, line, format!("{name} '{cell}' is not a finite number")))
}

fn check_row(row: &TraceRow, source: &str, line: u64) -> Result<()> {
    if !(row.depth_m > 0.0) {
        return Err(malformed(source, line, format!("depth_m must be positive, got {}", row.depth_m)));
    }
    for (name, v) in [
        ("intensity_mean", row.intensity_mean),
        ("intensity_std", row.intensity_std),
        ("target_rho", row.target_rho),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(malformed(source, line, format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    Ok(())
}

fn schema(source: &str, msg: String) -> CliError {
    CliError::validation(format!("{source}: schema error: {msg}"))
}

fn malformed(source: &str, line: u64, msg: String) -> CliError {
    CliError::validation(format!("{source}: line {line}: {msg}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<Vec<TraceRow>> {
        read_rows(text.as_bytes(), "test.csv")
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.123456789123), "0.123456789");
        assert_eq!(format_sig9(10.5), "10.5");
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(123456789.6), "123456790");
    }

    #[test]
    fn round_trip_long_format() {
        let rows = vec![
            TraceRow { depth_m: 0.5, intensity_mean: 0.123456789, intensity_std: 0.01, target_rho: 0.05 },
            TraceRow { depth_m: 1.5, intensity_mean: 0.2, intensity_std: 0.0, target_rho: 0.9 },
        ];
        let bytes = to_bytes(&rows);
        assert!(bytes.starts_with(b"depth_m,intensity_mean,intensity_std,target_rho\n"));
        assert_eq!(read_rows(&bytes[..], "mem").unwrap(), rows);
    }

    #[test]
    fn groups_by_rho() {
        let text = "depth_m,intensity_mean,intensity_std,target_rho\n2,0.2,0,0.9\n1,0.1,0,0.9\n1,0.05,0,0.05\n";
        let traces = traces_from_rows(&read(text).unwrap());
        assert_eq!(traces.len(), 2);
        assert_eq!(traces[0].rho, 0.05);
        assert_eq!(traces[1].binned[0].center_m, 1.0);
        assert_eq!(traces[1].binned[1].mean_intensity, 0.2);
    }

    #[test]
    fn header_only_is_schema_error() {
        let err = read("depth_m,intensity_mean,intensity_std,target_rho\n").unwrap_err();
        assert!(err.to_string().contains("schema error"), "{err}");
        assert!(read("").unwrap_err().to_string().contains("schema error"));
    }

    #[test]
    fn unknown_column_is_schema_error() {
        let err = read("depth_m,intensity_mean,intensity_std,target_rho,extra\n1,0.1,0,0.5,9\n").unwrap_err();
        assert!(err.to_string().contains("unknown column 'extra'"), "{err}");
        let err = read("depth_m,intensity_mean,target_rho\n1,0.1,0.5\n").unwrap_err();
        assert!(err.to_string().contains("schema error"), "{err}");
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let head = "depth_m,intensity_mean,intensity_std,target_rho\n";
        for (body, needle) in [
            ("1,0.1,0,0.5\n2,abc,0,0.5\n", "line 3"),
            ("1,0.1,0,0.5\n-2,0.1,0,0.5\n", "line 3"),
            ("1,1.1,0,0.5\n", "line 2"),
            ("1,0.1,0\n", "line 2"),
        ] {
            let err = read(&format!("{head}{body}")).unwrap_err();
            assert!(err.to_string().contains(needle), "{body}: {err}");
        }
    }

    #[test]
    fn wide_layout_keeps_per_target_depths() {
        let text = "x_5,mean_5,std_5,x_90,mean_90,std_90\n1.1,0.1,0.01,0.9,0.5,0.02\n2.0,0.12,0.01,,,\n";
        let rows = read(text).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0], TraceRow { depth_m: 1.1, intensity_mean: 0.1, intensity_std: 0.01, target_rho: 0.05 });
        assert_eq!(rows[1].depth_m, 0.9);
        assert_eq!(rows[1].target_rho, 0.9);
        assert_eq!(rows[2].depth_m, 2.0);
    }

    #[test]
    fn wide_layout_needs_complete_groups() {
        assert!(read("x_5,mean_5\n1,0.1\n").is_err());
        assert!(read("x_5,mean_5,std_5,foo\n1,0.1,0,3\n").is_err());
    }
}
