//! CSV datasets.
//!
//! Header `label,f0,f1,...,f{H*W-1}`, one example per row, features in
//! row-major grid order and within `[0, 1]`.

use std::io::{Read, Write};
use std::path::Path;

use rfc_core::data::{Example, Grid};

use crate::error::{Result, SimError};

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> SimError {
    SimError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn read_csv<R: Read>(
    reader: R,
    origin: &Path,
    grid: Grid,
    num_classes: usize,
) -> Result<Vec<Example>> {
    let cells = grid.cells();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(origin, 1, e.to_string()))?
        .clone();
    if header.len() != cells + 1 || header.get(0) != Some("label") {
        return Err(parse_err(
            origin,
            1,
            format!(
                "expected header label,f0..f{} ({} columns), got {} columns",
                cells - 1,
                cells + 1,
                header.len()
            ),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(origin, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != cells + 1 {
            return Err(parse_err(
                origin,
                line,
                format!("expected {} columns, got {}", cells + 1, rec.len()),
            ));
        }
        let label: usize = rec[0].trim().parse().map_err(|_| {
            parse_err(
                origin,
                line,
                format!("label {:?} is not a non-negative integer", &rec[0]),
            )
        })?;
        if label >= num_classes {
            return Err(parse_err(
                origin,
                line,
                format!("label {label} out of range for {num_classes} classes"),
            ));
        }
        let features = rec
            .iter()
            .skip(1)
            .map(|s| {
                let v: f64 = s.trim().parse().map_err(|_| {
                    parse_err(origin, line, format!("feature {s:?} is not a number"))
                })?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(parse_err(
                        origin,
                        line,
                        format!("feature {v} outside [0, 1]"),
                    ));
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(Example { features, label });
    }
    if out.is_empty() {
        return Err(parse_err(origin, 1, "no examples"));
    }
    Ok(out)
}

pub fn load_csv(path: &Path, grid: Grid, num_classes: usize) -> Result<Vec<Example>> {
    let file = std::fs::File::open(path).map_err(|e| SimError::io(path, e))?;
    read_csv(std::io::BufReader::new(file), path, grid, num_classes)
}

pub fn write_csv<W: Write>(writer: W, data: &[Example]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let dim = data.first().map_or(0, |e| e.features.len());
    let mut header = vec!["label".to_string()];
    header.extend((0..dim).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for e in data {
        let mut row = vec![e.label.to_string()];
        row.extend(e.features.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(path: &Path, data: &[Example]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| SimError::io(path, e))?;
    write_csv(std::io::BufWriter::new(file), data).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => SimError::io(path, io),
        other => SimError::Config(format!("{other:?}")),
    })
}
