//! Scenario files are TOML. Every key is optional except `seed`; missing
//! keys take their defaults. Unknown keys are rejected so typos surface.

use std::fs;
use std::path::Path;

use hexaland_core::scenario::Scenario;
use toml::{Table, Value};

use crate::error::{HarnessError, Result};

pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_table(&text)
}

pub fn parse_table(text: &str) -> Result<Table> {
    text.parse::<Table>()
        .map_err(|e| HarnessError::Parse(e.to_string()))
}

pub fn from_table(table: Table) -> Result<Scenario> {
    Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| HarnessError::Parse(e.to_string()))
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let scenario = from_table(read_table(path)?)?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn to_toml(scenario: &Scenario) -> Result<String> {
    toml::to_string(scenario).map_err(|e| HarnessError::Parse(e.to_string()))
}

/// Interprets a command-line value as a TOML literal (`0.3`, `true`,
/// `[1, 2]`, `{ time = 6.3, rotor = 3 }`), falling back to a bare string.
pub fn parse_literal(text: &str) -> Value {
    format!("v = {text}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(text.to_owned()))
}

/// Sets `a.b.c` in the tree, creating intermediate tables.
pub fn set_path(table: &mut Table, path: &str, value: Value) -> Result<()> {
    let bad = || HarnessError::ParamPath(path.to_owned());
    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys.pop().filter(|k| !k.is_empty()).ok_or_else(bad)?;
    let mut node = table;
    for key in keys {
        if key.is_empty() {
            return Err(bad());
        }
        node = match node
            .entry(key)
            .or_insert_with(|| Value::Table(Table::new()))
        {
            Value::Table(t) => t,
            _ => return Err(bad()),
        };
    }
    node.insert(last.to_owned(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_keys() {
        let s = parse_scenario("seed = 4\n[landing]\ndescent_speed = 0.4\n").unwrap();
        assert_eq!(s.seed, Some(4));
        assert_eq!(s.landing.descent_speed, 0.4);
        assert_eq!(s.duration, Scenario::default().duration);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_scenario("seed = 1\n[landing]\ndescnet_speed = 0.4\n").is_err());
    }

    #[test]
    fn round_trip_through_toml() {
        let mut s = Scenario::seeded(9);
        s.mode = hexaland_core::scenario::FlightMode::Hold {
            setpoint: Some([1.0, 2.0, -3.0]),
        };
        let text = to_toml(&s).unwrap();
        assert_eq!(parse_scenario(&text).unwrap(), s);
    }

    #[test]
    fn gains_accept_one_number_or_three() {
        let s = parse_scenario(
            "seed = 1\n[estimator]\nmarker_gain = 0.5\ngnss_gain = [0.1, 0.2, 0.3]\n",
        )
        .unwrap();
        assert_eq!(s.estimator.marker_gain.0, [0.5; 3]);
        assert_eq!(s.estimator.gnss_gain.0, [0.1, 0.2, 0.3]);
    }

    #[test]
    fn literals() {
        assert_eq!(parse_literal("0.5"), Value::Float(0.5));
        assert_eq!(parse_literal("3"), Value::Integer(3));
        assert_eq!(parse_literal("nominal"), Value::String("nominal".into()));
        assert!(matches!(parse_literal("[1, 2]"), Value::Array(_)));
    }

    #[test]
    fn dotted_paths() {
        let mut t = parse_table("seed = 1\n").unwrap();
        set_path(&mut t, "fdi.detection_threshold", Value::Float(0.2)).unwrap();
        set_path(&mut t, "seed", Value::Integer(7)).unwrap();
        let s = from_table(t.clone()).unwrap();
        assert_eq!(s.fdi.detection_threshold, 0.2);
        assert_eq!(s.seed, Some(7));
        assert!(set_path(&mut t, "seed.x", Value::Integer(1)).is_err());
        assert!(set_path(&mut t, "fdi..x", Value::Integer(1)).is_err());
    }
}
