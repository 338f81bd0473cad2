//! Line-delimited JSON reports. `serde_json` maps keep sorted keys, so a
//! report is byte-stable across runs except for the `*_ms` timing fields.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::Result;
use serde_json::Value;

pub struct Report {
    sink: Box<dyn Write>,
    ok: usize,
    failed: usize,
}

impl Report {
    pub fn to_stdout() -> Report {
        Report {
            sink: Box::new(io::stdout().lock()),
            ok: 0,
            failed: 0,
        }
    }

    pub fn to_file(path: &Path) -> Result<Report> {
        Ok(Report {
            sink: Box::new(BufWriter::new(File::create(path)?)),
            ok: 0,
            failed: 0,
        })
    }

    pub fn emit(&mut self, record: Value) -> Result<()> {
        writeln!(self.sink, "{record}")?;
        Ok(())
    }

    /// Emit a per-scan record, counting it toward the summary.
    pub fn emit_scan(&mut self, record: Value, succeeded: bool) -> Result<()> {
        if succeeded {
            self.ok += 1;
        } else {
            self.failed += 1;
        }
        self.emit(record)
    }

    /// Emit the summary line; true when every per-scan record succeeded.
    pub fn finish(mut self, total_ms: f64) -> Result<bool> {
        let summary = serde_json::json!({
            "record": "summary",
            "ok": self.ok,
            "failed": self.failed,
            "elapsed_ms": total_ms,
        });
        self.emit(summary)?;
        self.sink.flush()?;
        Ok(self.failed == 0)
    }
}

/// Milliseconds elapsed since `start`.
pub fn ms_since(start: std::time::Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}
