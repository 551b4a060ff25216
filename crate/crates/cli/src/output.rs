//! Result rows: one CSV record per Monte Carlo sample and metric, plus
//! aggregate records.
//!
//! Columns, in order: `hash, record, l, param, sample, seed, metric, value,
//! uncertainty, n, wall_ms`. Empty cells mean "not applicable". Floats are
//! written in shortest round-trip form, so a resumed run reads back exactly
//! the values it wrote. A finished run ends with an aggregate row whose
//! metric is `complete` and whose value is the number of samples.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Seek, SeekFrom, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const HEADER: [&str; 11] = [
    "hash",
    "record",
    "l",
    "param",
    "sample",
    "seed",
    "metric",
    "value",
    "uncertainty",
    "n",
    "wall_ms",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Record {
    Sample,
    Aggregate,
}

impl Record {
    fn as_str(self) -> &'static str {
        match self {
            Record::Sample => "sample",
            Record::Aggregate => "aggregate",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub record: Record,
    pub l: Option<i64>,
    pub param: String,
    pub sample: Option<u64>,
    pub seed: Option<u64>,
    pub metric: String,
    pub value: f64,
    pub uncertainty: Option<f64>,
    pub n: Option<u64>,
    pub wall_ms: u128,
}

impl Row {
    pub fn aggregate(l: Option<i64>, param: impl Into<String>, metric: impl Into<String>, value: f64) -> Self {
        Row {
            record: Record::Aggregate,
            l,
            param: param.into(),
            sample: None,
            seed: None,
            metric: metric.into(),
            value,
            uncertainty: None,
            n: None,
            wall_ms: 0,
        }
    }

    pub fn with_uncertainty(mut self, u: f64) -> Self {
        self.uncertainty = Some(u);
        self
    }

    pub fn with_n(mut self, n: u64) -> Self {
        self.n = Some(n);
        self
    }

    fn fields(&self, hash: &str) -> [String; 11] {
        let opt = |v: Option<String>| v.unwrap_or_default();
        [
            hash.to_string(),
            self.record.as_str().to_string(),
            opt(self.l.map(|v| v.to_string())),
            self.param.clone(),
            opt(self.sample.map(|v| v.to_string())),
            opt(self.seed.map(|v| v.to_string())),
            self.metric.clone(),
            self.value.to_string(),
            opt(self.uncertainty.map(|v| v.to_string())),
            opt(self.n.map(|v| v.to_string())),
            self.wall_ms.to_string(),
        ]
    }
}

/// Key of a sample: `(l, param, sample index)`.
pub type SampleKey = (Option<i64>, String, u64);

/// Samples already present in an output file for a given config hash.
#[derive(Debug, Default)]
pub struct Existing {
    pub samples: BTreeMap<SampleKey, Vec<(String, f64)>>,
    pub complete: bool,
}

pub struct RowWriter {
    inner: csv::Writer<Box<dyn Write + Send>>,
    hash: String,
}

impl RowWriter {
    pub fn write(&mut self, row: &Row) -> Result<()> {
        self.inner.write_record(row.fields(&self.hash))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn stdout_writer(hash: &str) -> Result<RowWriter> {
    let mut inner = csv::Writer::from_writer(Box::new(io::stdout()) as Box<dyn Write + Send>);
    inner.write_record(HEADER)?;
    Ok(RowWriter {
        inner,
        hash: hash.to_string(),
    })
}

/// Creates (or truncates) `path` and writes the header.
pub fn create_writer(path: &Path, hash: &str) -> Result<RowWriter> {
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut inner = csv::Writer::from_writer(Box::new(file) as Box<dyn Write + Send>);
    inner.write_record(HEADER)?;
    inner.flush()?;
    Ok(RowWriter {
        inner,
        hash: hash.to_string(),
    })
}

/// Metric of the row that closes a finished run.
pub const COMPLETE: &str = "complete";

/// Reads the samples of `hash` from `path` and returns a writer appending to
/// the file.
///
/// Samples are written as contiguous row groups, so an interruption can only
/// damage the last group in the file (or the aggregates of an unfinished
/// run). Unless the run is finished, a trailing partial record, trailing
/// aggregates of `hash` and the last sample group are cut off and recomputed.
pub fn resume_writer(path: &Path, hash: &str) -> Result<(RowWriter, Existing)> {
    if !path.exists() || std::fs::metadata(path)?.len() == 0 {
        return Ok((create_writer(path, hash)?, Existing::default()));
    }
    // (start byte, parsed record)
    let mut records: Vec<(u64, Parsed)> = Vec::new();
    let mut good_end = 0u64;
    {
        let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(file);
        let mut rec = csv::StringRecord::new();
        let mut first = true;
        loop {
            let start = rdr.position().byte();
            match rdr.read_record(&mut rec) {
                Ok(false) => break,
                Ok(true) => {}
                Err(_) => break,
            }
            if first {
                if rec.iter().ne(HEADER.iter().copied()) {
                    bail!("{} does not start with the result header", path.display());
                }
                first = false;
                good_end = rdr.position().byte();
                continue;
            }
            let Some(parsed) = parse_record(&rec) else { break };
            good_end = rdr.position().byte();
            records.push((start, parsed));
        }
    }
    let complete = records
        .iter()
        .any(|(_, r)| r.0 == hash && r.1 == Record::Aggregate && r.5 == COMPLETE);
    if !complete {
        while records.last().is_some_and(|(_, r)| r.0 == hash && r.1 == Record::Aggregate) {
            good_end = records.pop().map(|(b, _)| b).unwrap_or(good_end);
        }
        if let Some((_, last)) = records.last().filter(|(_, r)| r.1 == Record::Sample) {
            let key = (last.0.clone(), last.2, last.3.clone(), last.4);
            while records
                .last()
                .is_some_and(|(_, r)| r.1 == Record::Sample && (r.0.clone(), r.2, r.3.clone(), r.4) == key)
            {
                good_end = records.pop().map(|(b, _)| b).unwrap_or(good_end);
            }
        }
    }
    let mut existing = Existing {
        complete,
        ..Default::default()
    };
    for (_, r) in records {
        if r.0 == hash && r.1 == Record::Sample {
            existing.samples.entry((r.2, r.3, r.4)).or_default().push((r.5, r.6));
        }
    }
    let mut file = OpenOptions::new().read(true).write(true).open(path)?;
    let len = file.metadata()?.len();
    if good_end < len {
        file.set_len(good_end)?;
    }
    file.seek(SeekFrom::End(0))?;
    let inner = csv::Writer::from_writer(Box::new(file) as Box<dyn Write + Send>);
    Ok((
        RowWriter {
            inner,
            hash: hash.to_string(),
        },
        existing,
    ))
}

type Parsed = (String, Record, Option<i64>, String, u64, String, f64);

fn parse_record(rec: &csv::StringRecord) -> Option<Parsed> {
    if rec.len() != HEADER.len() {
        return None;
    }
    let record = match &rec[1] {
        "sample" => Record::Sample,
        "aggregate" => Record::Aggregate,
        _ => return None,
    };
    let l = if rec[2].is_empty() { None } else { Some(rec[2].parse().ok()?) };
    let sample = if record == Record::Sample { rec[4].parse().ok()? } else { 0 };
    let value: f64 = rec[7].parse().ok()?;
    rec[10].parse::<u128>().ok()?;
    Some((rec[0].to_string(), record, l, rec[3].to_string(), sample, rec[6].to_string(), value))
}
