//! The step-response run the default gains were tuned on, kept as a golden
//! log. Set `HEXALAND_BLESS=1` to rewrite it after a deliberate change.

use std::path::PathBuf;

use hexaland::config::read_table;
use hexaland_core::sim::{run, MemoryRecorder};

fn paths() -> (PathBuf, PathBuf) {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    (
        root.join("../../scenarios/step_response.toml"),
        root.join("tests/data/step_response.csv"),
    )
}

/// `t, x, z, pitch` every 0.1 s.
fn trace() -> Vec<[f64; 4]> {
    let (scenario, _) = paths();
    let s = hexaland::config::from_table(read_table(&scenario).unwrap()).unwrap();
    let mut flight = MemoryRecorder::default();
    run(&s, &mut flight, &mut ()).unwrap();
    flight
        .flight
        .iter()
        .step_by(10)
        .map(|r| [r.t, r.position.x, r.position.z, r.euler[1]])
        .collect()
}

fn parse(text: &str) -> Vec<[f64; 4]> {
    text.lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            [v[0], v[1], v[2], v[3]]
        })
        .collect()
}

#[test]
fn step_response_matches_golden_log() {
    let (_, golden) = paths();
    let now = trace();
    if std::env::var_os("HEXALAND_BLESS").is_some() {
        let mut text = String::from("t,x,z,pitch\n");
        for r in &now {
            text.push_str(&format!("{},{},{},{}\n", r[0], r[1], r[2], r[3]));
        }
        std::fs::write(&golden, text).unwrap();
    }
    let expected = parse(&std::fs::read_to_string(&golden).unwrap());
    assert_eq!(now.len(), expected.len());
    for (a, b) in now.iter().zip(&expected) {
        for k in 0..4 {
            assert!((a[k] - b[k]).abs() <= 1e-9, "t = {}: {a:?} vs {b:?}", a[0]);
        }
    }
}

#[test]
fn golden_step_settles_within_four_seconds() {
    let (_, golden) = paths();
    let log = parse(&std::fs::read_to_string(golden).unwrap());
    let last_outside = log
        .iter()
        .filter(|r| (r[1] - 1.0).abs() > 0.05)
        .map(|r| r[0])
        .fold(0.0, f64::max);
    assert!(last_outside < 4.0, "{last_outside}");
}
