//! Per-evaluation run records and their CSV form.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which part of the algorithm produced an evaluated point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    /// Initial uniform draw inside hypothesis `j`.
    InitHypothesis(usize),
    /// Initial uniform draw over the whole space.
    InitGlobal,
    /// Lower-level seed from hypothesis `j`.
    Lower(usize),
    /// Upper-level (global) acquisition, or a baseline's post-init draw.
    Upper,
}

impl Source {
    pub fn tag(&self) -> &'static str {
        match self {
            Source::InitHypothesis(_) => "init_h",
            Source::InitGlobal => "init_g",
            Source::Lower(_) => "lower",
            Source::Upper => "upper",
        }
    }

    pub fn hypothesis(&self) -> Option<usize> {
        match self {
            Source::InitHypothesis(j) | Source::Lower(j) => Some(*j),
            _ => None,
        }
    }

    pub fn is_init(&self) -> bool {
        matches!(self, Source::InitHypothesis(_) | Source::InitGlobal)
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hypothesis() {
            Some(j) => write!(f, "{}({j})", self.tag()),
            None => f.write_str(self.tag()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    /// 0 for the initial design, otherwise the budget index `1..=i_max`.
    pub iteration: usize,
    pub source: Source,
    pub x: Vec<f64>,
    pub y: f64,
    pub incumbent_after: f64,
    pub acq_value: Option<f64>,
    pub l: usize,
    pub u: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

/// Float rendering with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn init_records(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.source.is_init())
    }

    /// Records after the initial design, one per budget unit.
    pub fn budget_records(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| !r.source.is_init())
    }

    pub fn final_incumbent(&self) -> Option<f64> {
        self.records.last().map(|r| r.incumbent_after)
    }

    pub fn dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.x.len())
    }

    pub fn header(dim: usize) -> Vec<String> {
        let mut h: Vec<String> = ["trial", "iteration", "source", "hypothesis"].iter().map(|s| s.to_string()).collect();
        h.extend((0..dim).map(|i| format!("x_{i}")));
        h.extend(["y", "incumbent", "acq_value", "l", "u"].iter().map(|s| s.to_string()));
        h
    }

    pub fn write_csv<W: Write>(&self, writer: W, trial: usize) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(Self::header(self.dim()))?;
        for r in &self.records {
            let mut row = vec![
                trial.to_string(),
                r.iteration.to_string(),
                r.source.tag().to_string(),
                r.source.hypothesis().map(|j| j.to_string()).unwrap_or_default(),
            ];
            row.extend(r.x.iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(r.y));
            row.push(fmt_f64(r.incumbent_after));
            row.push(r.acq_value.map(fmt_f64).unwrap_or_default());
            row.push(r.l.to_string());
            row.push(r.u.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self, trial: usize) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, trial).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Parses a trace CSV; returns the trial index and the records.
    pub fn read_csv<R: Read>(reader: R) -> Result<(usize, Trace)> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let dim = headers.iter().filter(|h| h.starts_with("x_")).count();
        if headers.len() != dim + 9 {
            return Err(Error::Schema(format!("unexpected trace header with {} columns", headers.len())));
        }
        let mut trial = 0;
        let mut records = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| -> Result<f64> {
                f64::from_str(field(i)).map_err(|e| Error::Parse {
                    row: row + 1,
                    column: headers[i].to_string(),
                    message: e.to_string(),
                })
            };
            let int = |i: usize| -> Result<usize> {
                field(i).parse::<usize>().map_err(|e| Error::Parse {
                    row: row + 1,
                    column: headers[i].to_string(),
                    message: e.to_string(),
                })
            };
            trial = int(0)?;
            let hyp = if field(3).is_empty() { None } else { Some(int(3)?) };
            let source = match (field(2), hyp) {
                ("init_h", Some(j)) => Source::InitHypothesis(j),
                ("init_g", None) => Source::InitGlobal,
                ("lower", Some(j)) => Source::Lower(j),
                ("upper", None) => Source::Upper,
                (s, _) => {
                    return Err(Error::Parse {
                        row: row + 1,
                        column: "source".into(),
                        message: format!("bad source `{s}`"),
                    })
                }
            };
            let x = (0..dim).map(|k| num(4 + k)).collect::<Result<Vec<_>>>()?;
            let acq = field(6 + dim);
            records.push(TraceRecord {
                iteration: int(1)?,
                source,
                x,
                y: num(4 + dim)?,
                incumbent_after: num(5 + dim)?,
                acq_value: if acq.is_empty() { None } else { Some(num(6 + dim)?) },
                l: int(7 + dim)?,
                u: int(8 + dim)?,
            });
        }
        Ok((trial, Trace { records }))
    }
}
