use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "step,g_value,x_norm,wall_ms";

/// State of a chain after producing `x^step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub g_value: f64,
    pub x_norm: f64,
    /// Milliseconds since the run started.
    pub wall_ms: f64,
}

pub fn write_trace_csv(rows: &[TraceRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.3}",
            r.step, r.g_value, r.x_norm, r.wall_ms
        )
        .expect("writing to a String");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
