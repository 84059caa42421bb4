//! CSV logs, one file per subsystem, all keyed by simulated time `t` [s].
//!
//! | file | columns |
//! |------|---------|
//! | `flight.csv` | `t`, true position `x y z` [m, NED], velocity `vx vy vz` [m/s], `roll pitch yaw` [deg], body rates `p q r` [rad/s], attitude setpoint `roll_sp pitch_sp yaw_sp` [deg], velocity command `vcmd_x vcmd_y vcmd_z` [m/s] (empty when holding), `vertical_force` [N], commanded rotor forces `f1_cmd..f6_cmd` [N], actual rotor forces `f1..f6` [N], `servo_angle` [deg] |
//! | `fdi.csv` | `t`, residues `r0..r6` [rad/s] (`r0` nominal, `ri` rotor `i` failed), `believed_state` (0 nominal, 1..6 failed rotor, -1 unresolved) |
//! | `observations.csv` | `t`, `marker` (big/small), marker position in the camera frame `pc_x pc_y pc_z` [m], corner pixels `u1 v1 .. u4 v4`, measured vehicle position relative to the marker `y_x y_y y_z` [m] |
//! | `estimate.csv` | `t`, estimate `est_x est_y est_z`, truth `true_x true_y true_z` [m], correction `source` (none/marker/gnss), `marker` used (empty if none), innovation `innov_x innov_y innov_z` [m], mission `phase` |
//! | `phases.csv` | `t`, `from`, `to` |
//!
//! Rows are 100 Hz for `flight.csv`, the attitude-loop rate for `fdi.csv`
//! and the camera rate for the rest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hexaland_core::math::Vec3;
use hexaland_core::mission::PhaseTransition;
use hexaland_core::sim::{
    EstimateRecord, FdiRecord, FlightRecord, FlightRecorder, ObservationRecord, VisionRecorder,
};

use crate::error::{HarnessError, Result};

pub const FLIGHT_LOG: &str = "flight.csv";
pub const FDI_LOG: &str = "fdi.csv";
pub const OBSERVATION_LOG: &str = "observations.csv";
pub const ESTIMATE_LOG: &str = "estimate.csv";
pub const PHASE_LOG: &str = "phases.csv";
pub const LOG_FILES: [&str; 5] = [
    FLIGHT_LOG,
    FDI_LOG,
    OBSERVATION_LOG,
    ESTIMATE_LOG,
    PHASE_LOG,
];

fn num(x: f64) -> String {
    x.to_string()
}

fn vec3(row: &mut Vec<String>, v: &Vec3) {
    row.extend(v.iter().map(|x| num(*x)));
}

fn headers(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| (*s).to_owned()).collect()
}

fn numbered<'a>(
    prefix: &'a str,
    suffix: &'a str,
    range: std::ops::Range<usize>,
) -> impl Iterator<Item = String> + 'a {
    range.map(move |i| format!("{prefix}{i}{suffix}"))
}

/// A CSV writer that remembers the first failure instead of aborting the
/// simulation mid-step.
struct Sheet<W: Write> {
    out: csv::Writer<W>,
    error: Option<csv::Error>,
}

impl<W: Write> Sheet<W> {
    fn new(out: W, header: Vec<String>) -> Self {
        let mut sheet = Self {
            out: csv::Writer::from_writer(out),
            error: None,
        };
        sheet.row(header);
        sheet
    }

    fn row(&mut self, row: Vec<String>) {
        if self.error.is_none() {
            if let Err(e) = self.out.write_record(&row) {
                self.error = Some(e);
            }
        }
    }

    fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e.into());
        }
        self.out.flush().map_err(|e| HarnessError::Csv(e.into()))
    }
}

fn flight_header() -> Vec<String> {
    let mut h = headers(&[
        "t",
        "x",
        "y",
        "z",
        "vx",
        "vy",
        "vz",
        "roll",
        "pitch",
        "yaw",
        "p",
        "q",
        "r",
        "roll_sp",
        "pitch_sp",
        "yaw_sp",
        "vcmd_x",
        "vcmd_y",
        "vcmd_z",
        "vertical_force",
    ]);
    h.extend(numbered("f", "_cmd", 1..7));
    h.extend(numbered("f", "", 1..7));
    h.push("servo_angle".into());
    h
}

fn fdi_header() -> Vec<String> {
    let mut h = headers(&["t"]);
    h.extend(numbered("r", "", 0..7));
    h.push("believed_state".into());
    h
}

fn observation_header() -> Vec<String> {
    let mut h = headers(&["t", "marker", "pc_x", "pc_y", "pc_z"]);
    for i in 1..5 {
        h.push(format!("u{i}"));
        h.push(format!("v{i}"));
    }
    h.extend(headers(&["y_x", "y_y", "y_z"]));
    h
}

fn estimate_header() -> Vec<String> {
    headers(&[
        "t", "est_x", "est_y", "est_z", "true_x", "true_y", "true_z", "source", "marker",
        "innov_x", "innov_y", "innov_z", "phase",
    ])
}

/// Flight-computer logs.
pub struct FlightLog<W: Write> {
    flight: Sheet<W>,
    fdi: Sheet<W>,
}

impl<W: Write> FlightLog<W> {
    pub fn new(flight: W, fdi: W) -> Self {
        Self {
            flight: Sheet::new(flight, flight_header()),
            fdi: Sheet::new(fdi, fdi_header()),
        }
    }

    pub fn finish(self) -> Result<()> {
        self.flight.finish()?;
        self.fdi.finish()
    }
}

impl<W: Write> FlightRecorder for FlightLog<W> {
    fn flight(&mut self, r: &FlightRecord) {
        let mut row = vec![num(r.t)];
        vec3(&mut row, &r.position);
        vec3(&mut row, &r.velocity);
        row.extend(r.euler.iter().map(|a| num(a.to_degrees())));
        vec3(&mut row, &r.angular_rate);
        row.extend(r.setpoint_euler.iter().map(|a| num(a.to_degrees())));
        match &r.velocity_command {
            Some(v) => vec3(&mut row, v),
            None => row.extend([String::new(), String::new(), String::new()]),
        }
        row.push(num(r.vertical_force));
        row.extend(r.forces_cmd.iter().map(|f| num(*f)));
        row.extend(r.forces.iter().map(|f| num(*f)));
        row.push(num(r.servo_angle.to_degrees()));
        self.flight.row(row);
    }

    fn fdi(&mut self, r: &FdiRecord) {
        let mut row = vec![num(r.t)];
        row.extend(r.residues.iter().map(|x| num(*x)));
        row.push(r.believed.to_string());
        self.fdi.row(row);
    }
}

/// Vision-computer logs.
pub struct VisionLog<W: Write> {
    observations: Sheet<W>,
    estimates: Sheet<W>,
    phases: Sheet<W>,
}

impl<W: Write> VisionLog<W> {
    pub fn new(observations: W, estimates: W, phases: W) -> Self {
        Self {
            observations: Sheet::new(observations, observation_header()),
            estimates: Sheet::new(estimates, estimate_header()),
            phases: Sheet::new(phases, headers(&["t", "from", "to"])),
        }
    }

    pub fn finish(self) -> Result<()> {
        self.observations.finish()?;
        self.estimates.finish()?;
        self.phases.finish()
    }
}

impl<W: Write> VisionRecorder for VisionLog<W> {
    fn observation(&mut self, r: &ObservationRecord) {
        let mut row = vec![num(r.t), r.marker.as_str().to_owned()];
        vec3(&mut row, &r.p_c);
        for c in &r.corners {
            row.push(num(c[0]));
            row.push(num(c[1]));
        }
        vec3(&mut row, &r.y);
        self.observations.row(row);
    }

    fn estimate(&mut self, r: &EstimateRecord) {
        let mut row = vec![num(r.t)];
        vec3(&mut row, &r.estimate);
        vec3(&mut row, &r.truth);
        row.push(r.source.as_str().to_owned());
        row.push(r.marker.map_or(String::new(), |m| m.as_str().to_owned()));
        match &r.innovation {
            Some(v) => vec3(&mut row, v),
            None => row.extend([String::new(), String::new(), String::new()]),
        }
        row.push(r.phase.as_str().to_owned());
        self.estimates.row(row);
    }

    fn phase(&mut self, r: &PhaseTransition) {
        self.phases.row(vec![
            num(r.t),
            r.from.as_str().to_owned(),
            r.to.as_str().to_owned(),
        ]);
    }
}

pub type FileFlightLog = FlightLog<BufWriter<File>>;
pub type FileVisionLog = VisionLog<BufWriter<File>>;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

/// Opens every log file in `dir`, creating the directory if needed.
pub fn create_logs(dir: &Path) -> Result<(FileFlightLog, FileVisionLog)> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    Ok((
        FlightLog::new(create(dir, FLIGHT_LOG)?, create(dir, FDI_LOG)?),
        VisionLog::new(
            create(dir, OBSERVATION_LOG)?,
            create(dir, ESTIMATE_LOG)?,
            create(dir, PHASE_LOG)?,
        ),
    ))
}

pub fn log_paths(dir: &Path) -> Vec<PathBuf> {
    LOG_FILES.iter().map(|f| dir.join(f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use hexaland_core::mission::LandingPhase;

    #[test]
    fn headers_match_row_width() {
        let mut log = FlightLog::new(Vec::new(), Vec::new());
        log.flight(&FlightRecord {
            t: 0.0,
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
            euler: [0.0; 3],
            angular_rate: Vec3::zeros(),
            setpoint_euler: [0.0; 3],
            velocity_command: None,
            vertical_force: 0.0,
            forces_cmd: [0.0; 6],
            forces: [0.0; 6],
            servo_angle: 0.0,
        });
        log.fdi(&FdiRecord {
            t: 0.0,
            residues: [0.0; 7],
            believed: 0,
        });
        assert!(log.flight.error.is_none());
        assert!(log.fdi.error.is_none());
        assert_eq!(flight_header().len(), 33);

        let mut v = VisionLog::new(Vec::new(), Vec::new(), Vec::new());
        v.phase(&PhaseTransition {
            t: 1.5,
            from: LandingPhase::EnRoute,
            to: LandingPhase::AcquireTarget,
        });
        let text = String::from_utf8(v.phases.out.into_inner().unwrap()).unwrap();
        assert_eq!(text, "t,from,to\n1.5,en_route,acquire_target\n");
    }
}
