//! Deterministic parallel execution of per-sample tasks.

use std::sync::mpsc;
use std::time::Instant;

use anyhow::{anyhow, Result};
use rayon::prelude::*;

use crate::output::{Existing, Record, Row, RowWriter, COMPLETE};

/// A group of samples sharing parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub l: Option<i64>,
    pub param: String,
    pub samples: u64,
}

pub type Metrics = Vec<(String, f64)>;

/// Value of `name` in `m`, NaN when absent.
pub fn metric(m: &Metrics, name: &str) -> f64 {
    m.iter().find(|(k, _)| k == name).map_or(f64::NAN, |(_, v)| *v)
}

pub trait Experiment: Sync {
    fn cells(&self) -> Vec<Cell>;
    fn seed_of(&self, cell: usize, index: u64) -> u64;
    fn run_sample(&self, cell: usize, index: u64) -> Result<Metrics>;
    /// `samples[c][i]` holds sample `i` of cell `c`, in index order.
    fn aggregate(&self, samples: &[Vec<Metrics>]) -> Result<Vec<Row>>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub workers: usize,
    /// Stop after this many new samples, without aggregating.
    pub max_new: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Complete,
    AlreadyComplete,
    Partial { remaining: u64 },
}

pub fn execute(exp: &dyn Experiment, mut writer: RowWriter, existing: Existing, opts: RunOptions) -> Result<Status> {
    if existing.complete {
        return Ok(Status::AlreadyComplete);
    }
    let start = Instant::now();
    let cells = exp.cells();
    let mut samples: Vec<Vec<Option<Metrics>>> = cells.iter().map(|c| vec![None; c.samples as usize]).collect();
    let mut pending = Vec::new();
    for (ci, cell) in cells.iter().enumerate() {
        for i in 0..cell.samples {
            match existing.samples.get(&(cell.l, cell.param.clone(), i)) {
                Some(m) => samples[ci][i as usize] = Some(m.clone()),
                None => pending.push((ci, i)),
            }
        }
    }
    let total_pending = pending.len() as u64;
    if let Some(max) = opts.max_new {
        pending.truncate(max as usize);
    }
    let remaining = total_pending - pending.len() as u64;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.workers).build()?;
    let (tx, rx) = mpsc::channel::<(usize, u64, u64, Metrics, u128)>();
    let cells_ref = &cells;
    let (mut writer, done) = std::thread::scope(|scope| -> Result<(RowWriter, Vec<(usize, u64, Metrics)>)> {
        let handle = scope.spawn(move || -> Result<(RowWriter, Vec<(usize, u64, Metrics)>)> {
            let mut got = Vec::new();
            for (ci, i, seed, m, ms) in rx {
                let cell = &cells_ref[ci];
                for (name, value) in &m {
                    writer.write(&Row {
                        record: Record::Sample,
                        l: cell.l,
                        param: cell.param.clone(),
                        sample: Some(i),
                        seed: Some(seed),
                        metric: name.clone(),
                        value: *value,
                        uncertainty: None,
                        n: None,
                        wall_ms: ms,
                    })?;
                }
                writer.flush()?;
                got.push((ci, i, m));
            }
            Ok((writer, got))
        });
        let result = pool.install(|| {
            pending.par_iter().try_for_each_with(tx, |tx, &(ci, i)| -> Result<()> {
                let t = Instant::now();
                let m = exp.run_sample(ci, i)?;
                tx.send((ci, i, exp.seed_of(ci, i), m, t.elapsed().as_millis()))
                    .map_err(|_| anyhow!("result writer stopped"))
            })
        });
        let out = handle.join().map_err(|_| anyhow!("result writer panicked"))??;
        result?;
        Ok(out)
    })?;
    for (ci, i, m) in done {
        samples[ci][i as usize] = Some(m);
    }
    if remaining > 0 {
        return Ok(Status::Partial { remaining });
    }
    let samples: Vec<Vec<Metrics>> = samples
        .into_iter()
        .map(|c| c.into_iter().map(|m| m.expect("every sample present")).collect())
        .collect();
    let total: usize = samples.iter().map(Vec::len).sum();
    let mut rows = exp.aggregate(&samples)?;
    rows.push(Row::aggregate(None, "", COMPLETE, total as f64).with_n(total as u64));
    let ms = start.elapsed().as_millis();
    for mut row in rows {
        row.wall_ms = ms;
        writer.write(&row)?;
    }
    writer.flush()?;
    Ok(Status::Complete)
}
