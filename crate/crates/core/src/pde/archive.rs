//! JSON-lines archives of restricted samples and CSV profile export.

use std::io::{BufRead, Write};

use super::grid::FieldSample;
use crate::error::{Error, Result};

/// Writes one JSON object per line.
pub fn write_samples(mut out: impl Write, samples: &[FieldSample]) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_samples(input: impl BufRead) -> Result<Vec<FieldSample>> {
    let mut samples = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: FieldSample = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("line {}: {e}", i + 1)))?;
        samples.push(s);
    }
    Ok(samples)
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// `x,u` profile CSV with a header row.
pub fn write_profile_csv(mut out: impl Write, x: &[f64], u: &[f64]) -> Result<()> {
    if x.len() != u.len() {
        return Err(Error::Shape("profile coordinates and values differ in length".into()));
    }
    writeln!(out, "x,u")?;
    for (a, b) in x.iter().zip(u) {
        writeln!(out, "{},{}", fmt_f64(*a), fmt_f64(*b))?;
    }
    Ok(())
}
