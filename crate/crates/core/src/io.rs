//! Tab-separated tick input and indicator output.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::MultiGzDecoder;

use crate::error::{Error, Result};
use crate::moments::Tick;
use crate::pipeline::{field_index, IndicatorRecord, FIELD_COUNT, FIELD_NAMES};

/// `TOTAL:T:P:V`, zero-based column indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColumnSpec {
    pub total: usize,
    pub t: usize,
    pub p: usize,
    pub v: usize,
}

impl ColumnSpec {
    pub fn new(total: usize, t: usize, p: usize, v: usize) -> Result<Self> {
        let idx = [t, p, v];
        if idx.iter().any(|&c| c >= total) {
            return Err(Error::Config(format!(
                "column indices {t}:{p}:{v} must be below the total {total}"
            )));
        }
        if t == p || t == v || p == v {
            return Err(Error::Config(format!(
                "column indices {t}:{p}:{v} must be distinct"
            )));
        }
        Ok(Self { total, t, p, v })
    }
}

impl FromStr for ColumnSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(':')
            .map(|x| x.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("column spec `{s}` is not TOTAL:T:P:V")))?;
        match parts[..] {
            [total, t, p, v] => Self::new(total, t, p, v),
            _ => Err(Error::Config(format!(
                "column spec `{s}` is not TOTAL:T:P:V"
            ))),
        }
    }
}

/// Streams ticks from tab-separated lines. Blank lines are skipped.
pub struct TickReader<R> {
    lines: std::io::Lines<R>,
    cols: ColumnSpec,
    line: usize,
}

impl<R: BufRead> TickReader<R> {
    pub fn new(reader: R, cols: ColumnSpec) -> Self {
        Self {
            lines: reader.lines(),
            cols,
            line: 0,
        }
    }

    fn parse(&self, s: &str) -> Result<Tick> {
        let fields: Vec<&str> = s.split('\t').collect();
        let line = self.line;
        if fields.len() != self.cols.total {
            return Err(Error::Parse {
                line,
                msg: format!(
                    "expected {} columns, found {}",
                    self.cols.total,
                    fields.len()
                ),
            });
        }
        let bad = |what: &str, raw: &str| Error::Parse {
            line,
            msg: format!("bad {what} `{raw}`"),
        };
        let raw_t = fields[self.cols.t].trim();
        let t = raw_t.parse::<i64>().map_err(|_| bad("time", raw_t))?;
        let raw_p = fields[self.cols.p].trim();
        let p = raw_p.parse::<f64>().map_err(|_| bad("price", raw_p))?;
        let raw_v = fields[self.cols.v].trim();
        let v = raw_v.parse::<f64>().map_err(|_| bad("shares", raw_v))?;
        let tick = Tick::new(t, p, v);
        tick.validate().map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        Ok(tick)
    }
}

impl<R: BufRead> Iterator for TickReader<R> {
    type Item = Result<Tick>;

    fn next(&mut self) -> Option<Result<Tick>> {
        loop {
            self.line += 1;
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => {
                    return Some(Err(Error::Parse {
                        line: self.line,
                        msg: e.to_string(),
                    }))
                }
            };
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse(line));
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Opens a tick file; a `.gz` suffix selects gzip decompression.
pub fn open_ticks(path: &Path, cols: ColumnSpec) -> Result<TickReader<Box<dyn BufRead>>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader: Box<dyn BufRead> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    Ok(TickReader::new(reader, cols))
}

pub fn read_ticks(path: &Path, cols: ColumnSpec) -> Result<Vec<Tick>> {
    open_ticks(path, cols)?.collect()
}

/// Shortest round-trip decimal, `NaN` for every non-finite value.
pub fn format_value(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "NaN".to_string()
    }
}

/// Writes records as they arrive: a header line, then one tab-separated line per record.
pub struct RecordWriter<W: Write> {
    out: W,
    path: PathBuf,
    buf: String,
}

impl RecordWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        Self::new(BufWriter::new(file), path)
    }
}

impl<W: Write> RecordWriter<W> {
    pub fn new(out: W, path: &Path) -> Result<Self> {
        let mut w = Self {
            out,
            path: path.to_path_buf(),
            buf: String::new(),
        };
        let header = FIELD_NAMES.join("\t");
        writeln!(w.out, "{header}").map_err(|e| io_err(path, e))?;
        Ok(w)
    }

    pub fn write(&mut self, rec: &IndicatorRecord) -> Result<()> {
        use std::fmt::Write as _;
        self.buf.clear();
        for (k, &x) in rec.values.iter().enumerate() {
            if k > 0 {
                self.buf.push('\t');
            }
            if x.is_finite() {
                write!(self.buf, "{x}").expect("write to string");
            } else {
                self.buf.push_str("NaN");
            }
        }
        self.buf.push('\n');
        self.out
            .write_all(self.buf.as_bytes())
            .map_err(|e| io_err(&self.path, e))
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(|e| io_err(&self.path, e))?;
        Ok(self.out)
    }
}

pub fn write_output(records: &[IndicatorRecord], path: &Path) -> Result<()> {
    let mut w = RecordWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    w.finish().map(|_| ())
}

/// Parses a file written by [`write_output`].
pub fn read_output(path: &Path) -> Result<Vec<IndicatorRecord>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?
        .map_err(|e| io_err(path, e))?;
    if header.split('\t').ne(FIELD_NAMES.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: "header does not match the record layout".into(),
        });
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let lineno = k + 2;
        let mut values = [0.0; FIELD_COUNT];
        let mut n = 0;
        for (slot, raw) in values.iter_mut().zip(line.split('\t')) {
            *slot = raw.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad number `{raw}`"),
            })?;
            n += 1;
        }
        if n != FIELD_COUNT || line.split('\t').count() != FIELD_COUNT {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {FIELD_COUNT} columns"),
            });
        }
        out.push(IndicatorRecord { values });
    }
    Ok(out)
}

/// A plotted field with `value·scale + shift`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotField {
    pub name: String,
    pub shift: f64,
    pub scale: f64,
}

impl FromStr for PlotField {
    type Err = Error;

    /// `name[:shift[:scale]]`.
    fn from_str(s: &str) -> Result<Self> {
        let mut it = s.split(':');
        let name = it.next().unwrap_or_default().trim().to_string();
        let num = |raw: Option<&str>, default: f64| -> Result<f64> {
            match raw {
                None => Ok(default),
                Some(r) => r
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad plot transform `{s}`"))),
            }
        };
        let shift = num(it.next(), 0.0)?;
        let scale = num(it.next(), 1.0)?;
        if it.next().is_some() {
            return Err(Error::Config(format!("bad plot field `{s}`")));
        }
        field_index(&name)?;
        Ok(Self { name, shift, scale })
    }
}

/// Narrow series: time then the selected fields, with the transforms listed in a
/// `#` comment line.
pub fn emit_plot_series<W: Write>(
    records: &[IndicatorRecord],
    fields: &[PlotField],
    out: &mut W,
) -> Result<()> {
    let idx: Vec<usize> = fields
        .iter()
        .map(|f| field_index(&f.name))
        .collect::<Result<_>>()?;
    let path = Path::new("<plot>");
    let e = |err| io_err(path, err);
    let transforms: Vec<String> = fields
        .iter()
        .map(|f| format!("{}*{}+{}", f.name, f.scale, f.shift))
        .collect();
    writeln!(out, "# {}", transforms.join("\t")).map_err(e)?;
    let names: Vec<&str> = fields.iter().map(|f| f.name.as_str()).collect();
    writeln!(out, "T\t{}", names.join("\t")).map_err(e)?;
    for r in records {
        let mut line = format_value(r.values[0]);
        for (f, &k) in fields.iter().zip(&idx) {
            line.push('\t');
            line.push_str(&format_value(r.values[k] * f.scale + f.shift));
        }
        writeln!(out, "{line}").map_err(e)?;
    }
    Ok(())
}
