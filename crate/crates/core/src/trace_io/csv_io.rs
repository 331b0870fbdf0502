use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{PacketRecord, Trace};
use crate::error::{Error, Result};

const HEADER: [&str; 4] = ["timestamp_s", "direction", "size_bytes", "protocol"];
const LABEL_COLUMN: &str = "app_label";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum UnsortedPolicy {
    #[default]
    Reject,
    /// Stable sort, so duplicate timestamps keep their file order.
    Sort,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub unsorted: UnsortedPolicy,
    /// Declared trace duration; defaults to the last timestamp.
    pub duration: Option<f64>,
}

pub fn load_trace(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Trace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trace(BufReader::new(file), opts)
}

pub fn parse_trace<R: Read>(reader: R, opts: &LoadOptions) -> Result<Trace> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let labeled = match cols.as_slice() {
        [a, b, c, d] if [*a, *b, *c, *d] == HEADER => false,
        [a, b, c, d, e] if [*a, *b, *c, *d] == HEADER && *e == LABEL_COLUMN => true,
        [] => {
            return Ok(Trace {
                records: Vec::new(),
                duration: opts.duration.unwrap_or(0.0),
                labeled: false,
            })
        }
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected header `{}[,{LABEL_COLUMN}]`, found `{}`",
                    HEADER.join(","),
                    cols.join(",")
                ),
            })
        }
    };
    let width = if labeled { 5 } else { 4 };

    let mut records = Vec::new();
    let mut sorted = true;
    let mut first_unsorted = None;
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::Parse { line, message };
        if row.len() != width {
            return Err(bad(format!("expected {width} fields, found {}", row.len())));
        }
        let timestamp: f64 = row[0]
            .parse()
            .map_err(|_| bad(format!("invalid timestamp `{}`", &row[0])))?;
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(bad(format!("timestamp must be finite and >= 0, found {timestamp}")));
        }
        let direction = row[1].parse().map_err(bad)?;
        let size: i64 = row[2]
            .parse()
            .map_err(|_| bad(format!("invalid size `{}`", &row[2])))?;
        if size < 0 || size > u32::MAX as i64 {
            return Err(bad(format!("size must be a non-negative byte count, found {size}")));
        }
        let protocol = row[3].parse().map_err(bad)?;
        let app = if labeled {
            if row[4].is_empty() {
                return Err(bad("labeled trace row without app_label".into()));
            }
            Some(row[4].parse().map_err(|e: Error| bad(e.to_string()))?)
        } else {
            None
        };
        if let Some(prev) = records.last().map(|r: &PacketRecord| r.timestamp) {
            if timestamp < prev && sorted {
                sorted = false;
                first_unsorted = Some((line, prev, timestamp));
            }
        }
        records.push(PacketRecord {
            timestamp,
            direction,
            size: size as u32,
            protocol,
            app,
        });
    }

    if let Some((line, previous, current)) = first_unsorted {
        match opts.unsorted {
            UnsortedPolicy::Reject => {
                return Err(Error::Unsorted {
                    line,
                    previous,
                    current,
                })
            }
            UnsortedPolicy::Sort => records.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp)),
        }
    }

    let last = records.last().map_or(0.0, |r| r.timestamp);
    let duration = opts.duration.map_or(last, |d| d.max(last));
    Ok(Trace {
        labeled: labeled && !records.is_empty(),
        records,
        duration,
    })
}

pub fn save_trace(path: impl AsRef<Path>, trace: &Trace) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_trace(&mut w, trace).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trace<W: Write>(w: &mut W, trace: &Trace) -> std::io::Result<()> {
    let labeled = trace.labeled;
    write!(w, "{}", HEADER.join(","))?;
    if labeled {
        write!(w, ",{LABEL_COLUMN}")?;
    }
    writeln!(w)?;
    for r in &trace.records {
        write!(
            w,
            "{:.6},{},{},{}",
            r.timestamp, r.direction, r.size, r.protocol
        )?;
        if labeled {
            let label = r.app.map_or("", |a| a.as_str());
            write!(w, ",{label}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
