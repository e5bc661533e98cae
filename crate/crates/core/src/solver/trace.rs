//! Iteration traces and a generic fixed-point loop.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::driver::estimate_rate;
use crate::error::{Error, Result};

/// Window of trailing step norms used for the running rate estimate.
pub const RATE_WINDOW: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub step_norm: f64,
    pub theta: f64,
    pub objective: f64,
    pub active_set_size: usize,
    /// NaN until enough steps are available.
    pub rate_estimate: f64,
    pub seconds: f64,
}

/// What an engine reports for one step; the loop adds the bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSummary {
    pub step_norm: f64,
    pub theta: f64,
    pub objective: f64,
    pub active_set_size: usize,
}

impl StepSummary {
    pub fn step_only(step_norm: f64) -> Self {
        StepSummary {
            step_norm,
            theta: f64::NAN,
            objective: f64::NAN,
            active_set_size: 0,
        }
    }
}

pub trait Engine {
    type State: Clone;
    fn step(&mut self, state: &Self::State) -> Result<(Self::State, StepSummary)>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_iters: usize,
    pub step_tol: f64,
}

/// Append-only per-iteration log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    records: Vec<TraceRecord>,
}

impl SolverTrace {
    pub fn new() -> Self {
        SolverTrace::default()
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn step_norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.step_norm).collect()
    }

    /// Appends a record; iteration indices must increase.
    pub fn push(&mut self, record: TraceRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.iter <= last.iter {
                return Err(Error::Invariant(format!(
                    "trace iteration {} does not follow {}",
                    record.iter, last.iter
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    /// Appends a summary with the next index, a running rate and elapsed time.
    pub fn record(&mut self, summary: StepSummary, seconds: f64) {
        let iter = self.records.last().map_or(1, |r| r.iter + 1);
        let mut tail: Vec<f64> = self
            .records
            .iter()
            .rev()
            .take(RATE_WINDOW - 1)
            .map(|r| r.step_norm)
            .collect();
        tail.reverse();
        tail.push(summary.step_norm);
        let rate_estimate = estimate_rate(&tail).map_or(f64::NAN, |r| r.rate);
        self.records.push(TraceRecord {
            iter,
            step_norm: summary.step_norm,
            theta: summary.theta,
            objective: summary.objective,
            active_set_size: summary.active_set_size,
            rate_estimate,
            seconds,
        });
    }

    pub fn extend(&mut self, other: &SolverTrace) {
        let offset = self.records.last().map_or(0, |r| r.iter);
        let t0 = self.records.last().map_or(0.0, |r| r.seconds);
        self.records.extend(other.records.iter().map(|r| TraceRecord {
            iter: r.iter + offset,
            seconds: r.seconds + t0,
            ..*r
        }));
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        if self.records.is_empty() {
            wr.write_record(["iter", "step_norm", "theta", "objective", "active_set_size", "rate_estimate", "seconds"])
                .map_err(csv_err)?;
        }
        for r in &self.records {
            wr.serialize(r).map_err(csv_err)?;
        }
        wr.flush().map_err(|e| Error::invalid(format!("writing trace: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut trace = SolverTrace::new();
        for rec in rd.deserialize() {
            trace.push(rec.map_err(csv_err)?)?;
        }
        Ok(trace)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SolverTrace::read_csv(text.as_bytes()).map_err(|e| Error::parse(path, e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("trace csv: {e}"))
}

/// Iterates until the step norm drops to `step_tol` or `max_iters` steps ran.
pub fn run_fixed_point<E: Engine>(engine: &mut E, initial: E::State, stop: StopRule) -> Result<(E::State, SolverTrace)> {
    if !(stop.step_tol >= 0.0) {
        return Err(Error::invalid(format!("step tolerance must be >= 0, got {}", stop.step_tol)));
    }
    let start = Instant::now();
    let mut trace = SolverTrace::new();
    let mut state = initial;
    for _ in 0..stop.max_iters {
        let (next, summary) = engine.step(&state)?;
        state = next;
        trace.record(summary, start.elapsed().as_secs_f64());
        if summary.step_norm <= stop.step_tol {
            break;
        }
    }
    Ok((state, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Halving;
    impl Engine for Halving {
        type State = f64;
        fn step(&mut self, x: &f64) -> Result<(f64, StepSummary)> {
            Ok((x / 2.0, StepSummary::step_only(x / 2.0)))
        }
    }

    #[test]
    fn infinite_tolerance_stops_after_one_step() {
        let (x, t) = run_fixed_point(&mut Halving, 1.0, StopRule { max_iters: 100, step_tol: f64::INFINITY }).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(x, 0.5);
    }

    #[test]
    fn cap_is_not_an_error() {
        let (_, t) = run_fixed_point(&mut Halving, 1.0, StopRule { max_iters: 30, step_tol: 0.0 }).unwrap();
        assert_eq!(t.len(), 30);
        let iters: Vec<usize> = t.records().iter().map(|r| r.iter).collect();
        assert_eq!(iters, (1..=30).collect::<Vec<_>>());
        assert!((t.last().unwrap().rate_estimate - 0.5).abs() < 1e-12);
        assert!(t.records()[3].rate_estimate.is_nan());
        assert!(run_fixed_point(&mut Halving, 1.0, StopRule { max_iters: 3, step_tol: -1.0 }).is_err());
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let (_, t) = run_fixed_point(&mut Halving, 3.0, StopRule { max_iters: 25, step_tol: 0.0 }).unwrap();
        let mut t = t;
        t.record(
            StepSummary {
                step_norm: 1e-300,
                theta: 0.1 + 0.2,
                objective: -7.25e17,
                active_set_size: 12,
            },
            1.5,
        );
        let s = t.to_csv_string();
        assert!(s.starts_with("iter,step_norm,theta,objective,active_set_size,rate_estimate,seconds\n"));
        let back = SolverTrace::read_csv(s.as_bytes()).unwrap();
        assert_eq!(back.to_csv_string(), s);
        assert_eq!(back.len(), t.len());
        assert_eq!(back.records()[25].theta, 0.1 + 0.2);
    }

    #[test]
    fn push_rejects_non_monotone_index() {
        let mut t = SolverTrace::new();
        t.record(StepSummary::step_only(1.0), 0.0);
        let mut r = *t.last().unwrap();
        assert!(t.push(r).is_err());
        r.iter = 5;
        t.push(r).unwrap();
    }
}
