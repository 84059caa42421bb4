//! Running scenarios: in one thread, or with the flight computer and the
//! vision computer on separate threads joined only by link traffic.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use hexaland_core::scenario::Scenario;
use hexaland_core::sim::{
    self, FlightComputer, FlightRecorder, RunReport, VisionComputer, VisionRecorder,
};
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::logs::{create_logs, LOG_FILES};

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    #[default]
    Sequential,
    Threaded,
}

/// Same exchange order as the sequential engine: frame `k` goes to the
/// vision thread while the flight thread advances to frame `k + 1` with the
/// reply to frame `k - 1`.
pub fn run_threaded<F, V>(
    scenario: &Scenario,
    flight_rec: &mut F,
    vision_rec: &mut V,
) -> Result<RunReport>
where
    F: FlightRecorder + Send,
    V: VisionRecorder + Send,
{
    scenario.validate()?;
    let mut flight = FlightComputer::new(scenario)?;
    let mut vision = VisionComputer::new(scenario)?;
    let (to_vision, frames) = mpsc::sync_channel(1);
    let (to_flight, replies) = mpsc::sync_channel::<(Vec<u8>, bool)>(1);

    thread::scope(|s| {
        let vision_side = s.spawn(|| {
            for exchange in frames {
                let reply = vision.process(&exchange, vision_rec);
                if to_flight.send((reply, vision.finished())).is_err() {
                    break;
                }
            }
            vision
        });

        let flight_side = (|| {
            let mut exchange = flight.start();
            let mut pending = Vec::new();
            loop {
                let last = exchange.last;
                to_vision
                    .send(exchange)
                    .map_err(|_| HarnessError::Panicked)?;
                let next = flight.advance(&pending, flight_rec)?;
                let (reply, finished) = replies.recv().map_err(|_| HarnessError::Panicked)?;
                if last || finished {
                    return Ok(());
                }
                pending = reply;
                exchange = next;
            }
        })();
        drop(to_vision);
        let vision = vision_side.join().map_err(|_| HarnessError::Panicked)?;
        flight_side.map(|()| RunReport::assemble(scenario, &flight.summary(), &vision.summary()))
    })
}

pub fn run_with<F, V>(
    scenario: &Scenario,
    schedule: Schedule,
    flight_rec: &mut F,
    vision_rec: &mut V,
) -> Result<RunReport>
where
    F: FlightRecorder + Send,
    V: VisionRecorder + Send,
{
    match schedule {
        Schedule::Sequential => Ok(sim::run(scenario, flight_rec, vision_rec)?),
        Schedule::Threaded => run_threaded(scenario, flight_rec, vision_rec),
    }
}

/// Report plus where the logs went.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    #[serde(flatten)]
    pub report: RunReport,
    /// Log file names, relative to the output directory.
    pub logs: Vec<String>,
    #[serde(skip)]
    pub directory: PathBuf,
}

/// Runs the scenario writing every CSV log and `report.json` into `dir`.
pub fn run_to_dir(scenario: &Scenario, dir: &Path, schedule: Schedule) -> Result<RunOutput> {
    scenario.validate()?;
    let (mut flight_log, mut vision_log) = create_logs(dir)?;
    let result = run_with(scenario, schedule, &mut flight_log, &mut vision_log);
    // keep whatever was logged up to a divergence
    flight_log.finish()?;
    vision_log.finish()?;
    let output = RunOutput {
        report: result?,
        logs: LOG_FILES.iter().map(|s| (*s).to_owned()).collect(),
        directory: dir.to_owned(),
    };
    let path = dir.join(REPORT_FILE);
    let json = serde_json::to_string_pretty(&output)?;
    fs::write(&path, json + "\n").map_err(|e| HarnessError::io(path, e))?;
    Ok(output)
}

/// Runs many scenarios without logs, spread over the available cores.
/// Results come back in input order.
pub fn run_batch(scenarios: &[Scenario]) -> Vec<Result<RunReport>> {
    let workers = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(scenarios.len().max(1));
    let next = AtomicUsize::new(0);
    let mut results: Vec<Option<Result<RunReport>>> = scenarios.iter().map(|_| None).collect();
    let done = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut out = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(scn) = scenarios.get(i) else { break };
                        out.push((
                            i,
                            sim::run(scn, &mut (), &mut ()).map_err(HarnessError::from),
                        ));
                    }
                    out
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join()).collect::<Vec<_>>()
    });
    for (i, r) in done.into_iter().flatten().flatten() {
        results[i] = Some(r);
    }
    results
        .into_iter()
        .map(|r| r.unwrap_or(Err(HarnessError::Panicked)))
        .collect()
}
