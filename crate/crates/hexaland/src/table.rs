use std::io::Write;

use hexaland_core::reconfig::{ReconfigEntry, ReconfigTable};
use hexaland_core::scenario::Scenario;

use crate::error::Result;

/// Reconfiguration table for the scenario's vehicle: fitted servo rotors
/// only, or every design slot with `all_slots`.
pub fn reconfig_entries(scenario: &Scenario, all_slots: bool) -> Result<Vec<ReconfigEntry>> {
    let table = ReconfigTable::build(
        &scenario.vehicle_geometry(),
        &scenario.reconfig_criteria(),
        all_slots,
    )?;
    Ok(table.entries)
}

pub fn write_csv<W: Write>(entries: &[ReconfigEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "failed_rotor",
        "reconfig_rotor",
        "tilt_angle_deg",
        "min_singular_value",
    ])?;
    for e in entries {
        w.write_record([
            e.failed.number().to_string(),
            e.reconfig_rotor.number().to_string(),
            format!("{:.4}", e.tilt_angle.to_degrees()),
            format!("{:.6}", e.min_singular_value),
        ])?;
    }
    w.flush().map_err(|e| csv::Error::from(e).into())
}
