//! CSV emission with a stable, lossless format: comma separated, header
//! row, LF endings, reals at 17 significant digits, rationals as
//! "num/den" strings.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use groupthink_core::error::{Error, Result};
use groupthink_core::rational::Rat;

/// 17 significant digits round-trip any f64 exactly.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn format_rational(x: &Rat) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

pub struct CsvWriter {
    sink: Box<dyn Write>,
    columns: usize,
}

impl CsvWriter {
    pub fn create(path: Option<&Path>) -> Result<Self> {
        let sink: Box<dyn Write> = match path {
            Some(path) => Box::new(BufWriter::new(File::create(path).map_err(io_err)?)),
            None => Box::new(BufWriter::new(io::stdout())),
        };
        Ok(Self { sink, columns: 0 })
    }

    pub fn header(&mut self, names: &[&str]) -> Result<()> {
        self.columns = names.len();
        let line = names.join(",");
        writeln!(self.sink, "{line}").map_err(io_err)
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<()> {
        debug_assert_eq!(fields.len(), self.columns, "row width mismatch");
        let line = fields
            .iter()
            .map(|f| f.as_ref())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(self.sink, "{line}").map_err(io_err)
    }

    pub fn finish(mut self) -> Result<()> {
        self.sink.flush().map_err(io_err)
    }
}

fn io_err(err: io::Error) -> Error {
    Error::Resource(format!("output: {err}"))
}
