use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ReportError;
use crate::fitness::effective_period;
use crate::model::PpaMetrics;

fn default_area() -> String {
    r"Chip area[^:\n]*:\s*([-+0-9.eE]+)".to_string()
}
fn default_power() -> String {
    r"(?m)^\s*Total\s+[-+0-9.eE]+\s+[-+0-9.eE]+\s+[-+0-9.eE]+\s+([-+0-9.eE]+)".to_string()
}
fn default_slack() -> String {
    r"(?mi)^\s*(?:worst slack|wns)\s*:?\s+([-+0-9.eE]+)".to_string()
}

/// Regular expressions locating each figure in the raw synthesis output.
/// Capture group 1 is the number; the last match wins.
///
/// The defaults read Yosys `stat -liberty` for area and OpenSTA's
/// `report_power` / `report_worst_slack` for power and slack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportPatterns {
    #[serde(default = "default_area")]
    pub area: String,
    #[serde(default = "default_power")]
    pub power: String,
    #[serde(default = "default_slack")]
    pub slack: String,
}

impl Default for ReportPatterns {
    fn default() -> Self {
        Self {
            area: default_area(),
            power: default_power(),
            slack: default_slack(),
        }
    }
}

fn extract(raw: &str, pattern: &str, field: &'static str) -> Result<f64, ReportError> {
    let re = Regex::new(pattern).map_err(|e| ReportError::Pattern {
        field,
        message: e.to_string(),
    })?;
    let text = re
        .captures_iter(raw)
        .filter_map(|c| c.get(1))
        .last()
        .ok_or(ReportError::Missing(field))?
        .as_str();
    let value: f64 = text.parse().map_err(|_| ReportError::Unparsable {
        field,
        text: text.to_string(),
    })?;
    if !value.is_finite() {
        return Err(ReportError::Unparsable {
            field,
            text: text.to_string(),
        });
    }
    Ok(value)
}

/// Extracts area, power and worst slack, converting slack into an
/// effective clock period at `clock_period`.
pub fn parse_ppa_report(
    raw: &str,
    patterns: &ReportPatterns,
    clock_period: f64,
) -> Result<PpaMetrics, ReportError> {
    let area = extract(raw, &patterns.area, "area")?;
    let power = extract(raw, &patterns.power, "power")?;
    let slack = extract(raw, &patterns.slack, "slack")?;
    for (field, value) in [("area", area), ("power", power)] {
        if value < 0.0 {
            return Err(ReportError::Negative { field, value });
        }
    }
    Ok(PpaMetrics::new(power, area, effective_period(clock_period, slack)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const FIXTURE: &str = include_str!("../../tests/fixtures/synth_report.txt");

    #[test]
    fn parses_fixture() {
        let ppa = parse_ppa_report(FIXTURE, &ReportPatterns::default(), 0.01).unwrap();
        assert_eq!(ppa.area, 42.18);
        assert_eq!(ppa.power, 1.76e-5);
        assert_abs_diff_eq!(ppa.effective_clock_period, 0.38, epsilon = 1e-12);
    }

    #[test]
    fn missing_power_section() {
        let raw: String = FIXTURE
            .lines()
            .filter(|l| !l.trim_start().starts_with("Total"))
            .collect::<Vec<_>>()
            .join("\n");
        assert_eq!(
            parse_ppa_report(&raw, &ReportPatterns::default(), 0.01),
            Err(ReportError::Missing("power"))
        );
    }

    #[test]
    fn negative_area_rejected() {
        let raw = FIXTURE.replace("42.180000", "-1.5");
        assert!(matches!(
            parse_ppa_report(&raw, &ReportPatterns::default(), 0.01),
            Err(ReportError::Negative { field: "area", .. })
        ));
    }

    #[test]
    fn custom_patterns() {
        let raw = "AREA=10\nPOWER=2e-3\nSLACK=0.001\n";
        let patterns = ReportPatterns {
            area: r"AREA=(\S+)".into(),
            power: r"POWER=(\S+)".into(),
            slack: r"SLACK=(\S+)".into(),
        };
        let ppa = parse_ppa_report(raw, &patterns, 0.01).unwrap();
        assert_eq!(ppa.area, 10.0);
        assert_abs_diff_eq!(ppa.effective_clock_period, 0.009, epsilon = 1e-12);
    }

    #[test]
    fn wns_alias() {
        let raw = FIXTURE.replace("worst slack -0.37", "wns -0.49");
        let ppa = parse_ppa_report(&raw, &ReportPatterns::default(), 0.01).unwrap();
        assert_abs_diff_eq!(ppa.effective_clock_period, 0.50, epsilon = 1e-12);
    }
}
