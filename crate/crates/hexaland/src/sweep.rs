//! Batch runs over seeds and, optionally, the values of one parameter.

use std::io::Write;
use std::ops::Range;

use hexaland_core::scenario::Scenario;
use hexaland_core::sim::RunReport;
use toml::Table;

use crate::config::{from_table, parse_literal, set_path};
use crate::error::Result;
use crate::runner::run_batch;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Dotted key, e.g. `landing.descent_speed`.
    pub param: Option<String>,
    /// TOML literals for `param`.
    pub values: Vec<String>,
    /// Seeds to run; `None` keeps the scenario's own seed.
    pub seeds: Option<Range<u64>>,
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub value: Option<String>,
    pub seed: u64,
    pub report: RunReport,
}

/// Expands the spec into concrete scenarios, values outermost.
pub fn expand(base: &Table, spec: &SweepSpec) -> Result<Vec<(Option<String>, Scenario)>> {
    let values: Vec<Option<&String>> = match &spec.param {
        Some(_) => spec.values.iter().map(Some).collect(),
        None => vec![None],
    };
    let mut out = Vec::new();
    for value in values {
        let mut table = base.clone();
        if let (Some(param), Some(v)) = (&spec.param, value) {
            set_path(&mut table, param, parse_literal(v))?;
        }
        let scenario = from_table(table)?;
        let seeds: Vec<Option<u64>> = match &spec.seeds {
            Some(r) => r.clone().map(Some).collect(),
            None => vec![scenario.seed],
        };
        for seed in seeds {
            let s = Scenario {
                seed,
                ..scenario.clone()
            };
            s.validate()?;
            out.push((value.cloned(), s));
        }
    }
    Ok(out)
}

pub fn sweep(base: &Table, spec: &SweepSpec) -> Result<Vec<SweepRun>> {
    let jobs = expand(base, spec)?;
    let scenarios: Vec<Scenario> = jobs.iter().map(|(_, s)| s.clone()).collect();
    let reports = run_batch(&scenarios);
    jobs.into_iter()
        .zip(reports)
        .map(|((value, s), r)| {
            Ok(SweepRun {
                value,
                seed: s.seed(),
                report: r?,
            })
        })
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

pub fn write_csv<W: Write>(runs: &[SweepRun], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "value",
        "seed",
        "final_phase",
        "touchdown_error",
        "detection_time",
        "detection_latency",
        "identification_latency",
        "identified_correctly",
        "recovery_time",
        "max_hold_error",
    ])?;
    for run in runs {
        let r = &run.report;
        w.write_record([
            run.value.clone().unwrap_or_default(),
            run.seed.to_string(),
            r.final_phase.as_str().to_owned(),
            opt(r.touchdown_error),
            opt(r.detection_time),
            opt(r.detection_latency),
            opt(r.identification_latency),
            r.identified_correctly
                .map_or(String::new(), |b| b.to_string()),
            opt(r.recovery_time),
            opt(r.max_hold_error),
        ])?;
    }
    w.flush().map_err(|e| csv::Error::from(e).into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_table;

    #[test]
    fn expands_values_times_seeds() {
        let base = parse_table("seed = 1\n").unwrap();
        let spec = SweepSpec {
            param: Some("landing.descent_speed".into()),
            values: vec!["0.3".into(), "0.6".into()],
            seeds: Some(5..8),
        };
        let jobs = expand(&base, &spec).unwrap();
        assert_eq!(jobs.len(), 6);
        assert_eq!(jobs[0].1.landing.descent_speed, 0.3);
        assert_eq!(jobs[5].1.landing.descent_speed, 0.6);
        assert_eq!(jobs[4].1.seed, Some(6));
    }

    #[test]
    fn invalid_values_are_reported() {
        let base = parse_table("seed = 1\n").unwrap();
        let spec = SweepSpec {
            param: Some("fdi.observer_gain".into()),
            values: vec!["-1.0".into()],
            seeds: None,
        };
        assert_eq!(expand(&base, &spec).unwrap_err().exit_code(), 2);
    }
}
