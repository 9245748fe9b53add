use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::Formatter;

use crate::CliError;

/// JSON layout with indented objects, single-line arrays and every float
/// written with 17 significant digits.
#[derive(Default)]
struct Layout {
    indent: usize,
    has_value: bool,
}

impl Layout {
    fn newline<W: ?Sized + Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(b"\n")?;
        for _ in 0..self.indent {
            w.write_all(b"  ")?;
        }
        Ok(())
    }
}

impl Formatter for Layout {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            w.write_all(b", ")
        }
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"{")
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"}")
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(b": ")
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Layout::default());
    value.serialize(&mut ser).expect("in-memory JSON serialization");
    buf.push(b'\n');
    buf
}

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Collects the artifacts of one command and writes them under `out`.
pub struct Artifacts<'a> {
    dir: &'a Path,
    pub written: Vec<String>,
}

impl<'a> Artifacts<'a> {
    pub fn new(dir: &'a Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Artifacts { dir, written: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path.display().to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, &to_json(value))
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
        self.csv_fields(name, header, rows.into_iter().map(|row| row.into_iter().map(num).collect()))
    }

    /// Like [`Artifacts::csv`] with fields already formatted.
    pub fn csv_fields(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let map = |e: csv::Error| CliError::Numerical(format!("writing {name}: {e}"));
        w.write_record(header).map_err(map)?;
        for row in rows {
            w.write_record(&row).map_err(map)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Numerical(format!("writing {name}: {e}")))?;
        self.write(name, &bytes)
    }
}
