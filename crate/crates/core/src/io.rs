//! CSV and JSON exchange formats.
//!
//! Layout files are plain text with one access point per line; `#` starts a
//! comment and blank lines are skipped. A `.json` file is read as
//! `{"access_points": [...], "L": .., "c": ..}` instead. Field files are either
//! `ω,value` CSV on a uniform grid starting at 0 or `{"h": .., "values": [...]}`.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{ChainError, Result};
use crate::grid::{ControlSignal, FieldSpec, SpatialGrid, StateField, Trajectory};
use crate::layout::{build_chain, ChainLayout, LayoutSpec};

pub const FIELD_HEADER: [&str; 2] = ["ω", "value"];
pub const TRAJECTORY_HEADER: [&str; 3] = ["t", "ω", "value"];
pub const CONTROL_HEADER: [&str; 3] = ["t", "channel", "value"];

/// Writes `ω,value` rows.
pub fn write_field_csv<W: Write>(field: &StateField, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIELD_HEADER)?;
    for (omega, v) in field.grid().nodes().zip(field.values()) {
        w.serialize((omega, v))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `t,ω,value` rows, time-major.
pub fn write_trajectory_csv<W: Write>(trajectory: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for (t, field) in trajectory.times.iter().zip(&trajectory.fields) {
        for (omega, v) in field.grid().nodes().zip(field.values()) {
            w.serialize((t, omega, v))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `t,channel,value` rows with 1-based channels, channel-major.
pub fn write_control_csv<W: Write>(control: &ControlSignal, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CONTROL_HEADER)?;
    for (i, samples) in control.channels().iter().enumerate() {
        for (k, v) in samples.iter().enumerate() {
            w.serialize((control.time(k), i + 1, v))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize + ?Sized, W: Write>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Parses the plain-text layout format. Errors carry the 1-based line.
pub fn parse_layout_text(text: &str, length: f64, velocity: f64) -> Result<ChainLayout> {
    let mut points: Vec<f64> = Vec::new();
    let mut last_line = 0;
    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let at = |inner| ChainError::AtLine {
            line,
            inner: Box::new(inner),
        };
        let value: f64 = body
            .parse()
            .map_err(|_| at(ChainError::BadParam(format!("not a number: {body:?}"))))?;
        if let Some(&prev) = points.last() {
            if value <= prev {
                return Err(at(ChainError::NonMonotone {
                    index: points.len(),
                    prev,
                    next: value,
                }));
            }
        }
        points.push(value);
        last_line = line;
    }
    build_chain(&points, length, velocity).map_err(|e| match e {
        ChainError::BadAnchor(_) | ChainError::Uncovered { .. } if last_line > 0 => ChainError::AtLine {
            line: last_line,
            inner: Box::new(e),
        },
        other => other,
    })
}

/// Reads a layout file; `length` and `velocity` apply to the text format only.
pub fn read_layout_file(path: &Path, length: f64, velocity: f64) -> Result<ChainLayout> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        let spec: LayoutSpec = serde_json::from_str(&text)?;
        return ChainLayout::try_from(spec);
    }
    parse_layout_text(&text, length, velocity)
}

/// Reads `ω,value` CSV. Abscissae must start at 0 and be uniformly spaced.
pub fn read_field_csv<R: Read>(input: R) -> Result<StateField> {
    let mut r = csv::Reader::from_reader(input);
    let mut omegas = Vec::new();
    let mut values = Vec::new();
    for row in r.deserialize() {
        let (omega, v): (f64, f64) = row?;
        omegas.push(omega);
        values.push(v);
    }
    if omegas.len() < 2 {
        return Err(ChainError::BadInitialData("field CSV needs at least two rows".into()));
    }
    let length = *omegas.last().expect("nonempty");
    let h = length / (omegas.len() - 1) as f64;
    if omegas[0].abs() > 1e-12 * length {
        return Err(ChainError::BadInitialData(format!("field CSV starts at {} instead of 0", omegas[0])));
    }
    if let Some((j, w)) = omegas.iter().enumerate().find(|(j, w)| (**w - *j as f64 * h).abs() > 1e-9 * length) {
        return Err(ChainError::AtLine {
            line: j + 2,
            inner: Box::new(ChainError::BadInitialData(format!("nonuniform abscissa {w}"))),
        });
    }
    StateField::new(SpatialGrid::new(length, h)?, values)
}

/// Reads a field file (CSV or `.json`) and resamples it onto `grid`.
pub fn read_field_file(path: &Path, grid: &SpatialGrid) -> Result<StateField> {
    let field = if path.extension().is_some_and(|e| e == "json") {
        let spec: FieldSpec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        StateField::from_spec(&spec)?
    } else {
        read_field_csv(std::fs::File::open(path)?)?
    };
    if (field.grid().length() - grid.length()).abs() > 1e-9 * grid.length() {
        return Err(ChainError::BadInitialData(format!(
            "field covers [0, {}] but the domain is [0, {}]",
            field.grid().length(),
            grid.length()
        )));
    }
    if field.grid() == grid {
        return Ok(field);
    }
    StateField::from_fn(*grid, |omega| field.sample(omega))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_text_reports_line() {
        let text = "# chain\n0\n1.5\n\n1.0  # oops\n3\n";
        let err = parse_layout_text(text, 3.0, 1.0).unwrap_err();
        assert!(matches!(err, ChainError::AtLine { line: 5, .. }), "{err}");
        assert!(matches!(err.root(), ChainError::NonMonotone { index: 2, .. }));
        assert!(err.to_string().starts_with("line 5:"));
    }

    #[test]
    fn layout_text_roundtrip() {
        let layout = parse_layout_text("0\n1\n2.5\n", 2.5, 2.0).unwrap();
        assert_eq!(layout.access_points(), &[0.0, 1.0, 2.5]);
        let err = parse_layout_text("0\n1\n", 2.5, 2.0).unwrap_err();
        assert!(matches!(err.root(), ChainError::Uncovered { .. }));
        let err = parse_layout_text("0\nx\n", 2.5, 2.0).unwrap_err();
        assert!(matches!(err, ChainError::AtLine { line: 2, .. }));
    }

    #[test]
    fn field_csv_roundtrip() {
        let g = SpatialGrid::new(2.0, 0.25).unwrap();
        let f = StateField::from_fn(g, |w| w * w - 0.1).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("ω,value\n0.0,-0.1\n"));
        let back = read_field_csv(buf.as_slice()).unwrap();
        assert_eq!(back.grid().cells(), 8);
        for (a, b) in back.values().iter().zip(f.values()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn trajectory_and_control_csv() {
        let g = SpatialGrid::new(1.0, 0.5).unwrap();
        let fields = vec![StateField::zeros(g), StateField::from_fn(g, |w| w).unwrap()];
        let u = ControlSignal::new(0.0, 0.5, vec![vec![1.0, 2.0]]).unwrap();
        let tr = Trajectory::new(vec![0.0, 0.5], fields, Some(u.clone())).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert_eq!(text.lines().next(), Some("t,ω,value"));
        assert_eq!(text.lines().last(), Some("0.5,1.0,1.0"));
        let mut buf = Vec::new();
        write_control_csv(&u, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,channel,value\n0.0,1,1.0\n0.5,1,2.0\n");
    }

    #[test]
    fn nonuniform_field_rejected() {
        let err = read_field_csv("ω,value\n0,1\n0.5,1\n0.7,1\n1.5,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, ChainError::AtLine { line: 4, .. }), "{err}");
    }
}
