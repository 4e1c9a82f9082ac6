//! Result persistence: CSV and JSON-lines with identical fields.

use std::io::Write;
use std::path::Path;

use crate::error::Error;
use crate::Result;

use super::sweep::ResultRecord;

pub const CSV_HEADER: &str =
    "experiment,detector,snr_db,sigma_e2,gamma,symbols,errors,ser,wall_time_s,seed";

/// Output format for result records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for EmitFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(EmitFormat::Csv),
            "jsonl" => Ok(EmitFormat::Jsonl),
            other => Err(Error::Parse(format!("unknown format '{other}' (csv|jsonl)"))),
        }
    }
}

/// Write records as CSV. Floats print in shortest round-trip decimal
/// form, so the `ser` field re-parses to errors/symbols exactly.
pub fn write_csv<W: Write>(records: &[ResultRecord], w: &mut W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.experiment,
            r.detector,
            r.snr_db,
            r.sigma_e2,
            r.gamma,
            r.symbols,
            r.errors,
            r.ser,
            r.wall_time_s,
            r.seed
        )?;
    }
    Ok(())
}

/// Write records as JSON lines with the same fields as the CSV columns.
pub fn write_jsonl<W: Write>(records: &[ResultRecord], w: &mut W) -> Result<()> {
    for r in records {
        let line =
            serde_json::to_string(r).map_err(|e| Error::Parse(format!("jsonl encode: {e}")))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Write records to a file in the requested format.
pub fn emit_results(records: &[ResultRecord], path: &Path, format: EmitFormat) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Domain("emit_results: no records".into()));
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        EmitFormat::Csv => write_csv(records, &mut file)?,
        EmitFormat::Jsonl => write_jsonl(records, &mut file)?,
    }
    file.flush()?;
    Ok(())
}
