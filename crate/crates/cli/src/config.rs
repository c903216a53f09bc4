//! System configuration: one JSON document with the network and the analysis
//! settings.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use symmod_core::devices::{DeviceSpec, Shared};
use symmod_core::network::{LineSpec, NetworkSpec};

use crate::error::{CliError, Result};

/// Analysis settings; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Absolute clustering distance; widened where the decomposition predicts
    /// repeated modes that lie further apart.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_quasi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_ext: Option<f64>,
    /// Modification factor per group id (`g1`, `g2`, ...); default `1/M`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub c: BTreeMap<String, f64>,
    /// Relative change (percent) below which a mode counts as invariant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariance_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default)]
    pub shared: Shared,
    pub devices: Vec<DeviceSpec>,
    #[serde(default)]
    pub lines: Vec<LineSpec>,
    pub grid: DeviceSpec,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

impl SystemConfig {
    pub fn network(&self) -> NetworkSpec {
        NetworkSpec {
            shared: self.shared,
            devices: self.devices.clone(),
            lines: self.lines.clone(),
            grid: self.grid.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        parse_json(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Applies one `<element>.<param>=<value>` change. `element` is a device
    /// id, the grid id, a line label (`from-to` or its id) or `shared`.
    pub fn set(&mut self, element: &str, param: &str, change: Change) -> Result<()> {
        let unknown = || CliError::Config(format!("unknown parameter `{element}.{param}`"));
        if element == "shared" {
            let slot = match param {
                "omega0_hz" => &mut self.shared.omega0_hz,
                "Sbase" => &mut self.shared.sbase,
                "Vbase" => &mut self.shared.vbase,
                _ => return Err(unknown()),
            };
            *slot = change.apply(*slot);
            return Ok(());
        }
        if let Some(line) = self.lines.iter_mut().find(|l| l.label() == element) {
            match param {
                "R" => line.r = change.apply(line.r),
                "X" => line.x = change.apply(line.x),
                "Z" => {
                    let mag = line.r.hypot(line.x);
                    if mag == 0.0 {
                        return Err(CliError::Config(format!(
                            "line `{element}` has zero impedance"
                        )));
                    }
                    let k = change.apply(mag) / mag;
                    line.r *= k;
                    line.x *= k;
                }
                _ => return Err(unknown()),
            }
            return Ok(());
        }
        let dev = if self.grid.id == element {
            &mut self.grid
        } else {
            self.devices
                .iter_mut()
                .find(|d| d.id == element)
                .ok_or_else(unknown)?
        };
        if let Some(v) = dev.params.get_mut(param) {
            *v = change.apply(*v);
        } else if let Some(v) = dev
            .operating_point
            .as_mut()
            .and_then(|op| op.get_mut(param))
        {
            *v = change.apply(*v);
        } else {
            return Err(unknown());
        }
        Ok(())
    }

    /// Current value of `<element>.<param>` as understood by [`Self::set`].
    pub fn get(&self, element: &str, param: &str) -> Option<f64> {
        if element == "shared" {
            return match param {
                "omega0_hz" => Some(self.shared.omega0_hz),
                "Sbase" => Some(self.shared.sbase),
                "Vbase" => Some(self.shared.vbase),
                _ => None,
            };
        }
        if let Some(line) = self.lines.iter().find(|l| l.label() == element) {
            return match param {
                "R" => Some(line.r),
                "X" => Some(line.x),
                "Z" => Some(line.r.hypot(line.x)),
                _ => None,
            };
        }
        let dev = std::iter::once(&self.grid)
            .chain(&self.devices)
            .find(|d| d.id == element)?;
        dev.params
            .get(param)
            .or_else(|| dev.operating_point.as_ref().and_then(|op| op.get(param)))
            .copied()
    }
}

/// Deserializes with the JSON path of the offending field in the message.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("field `{path}`: {}", e.inner()))
    })
}

/// A relative (`±x%`) or absolute change of one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Change {
    Percent(f64),
    Value(f64),
    /// Additive step, used by parameter disturbances.
    Add(f64),
}

impl Change {
    pub fn apply(self, old: f64) -> f64 {
        match self {
            Self::Percent(p) => old * (1.0 + p / 100.0),
            Self::Value(v) => v,
            Self::Add(d) => old + d,
        }
    }
}

/// `<element>.<param>=<±x%|value>`, split at the last `.` before `=`.
#[derive(Debug, Clone, PartialEq)]
pub struct Variation {
    pub element: String,
    pub param: String,
    pub change: Change,
}

impl std::str::FromStr for Variation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (target, value) = s
            .split_once('=')
            .ok_or_else(|| format!("`{s}`: expected <element>.<param>=<value>"))?;
        let (element, param) = target
            .rsplit_once('.')
            .filter(|(e, p)| !e.is_empty() && !p.is_empty())
            .ok_or_else(|| format!("`{target}`: expected <element>.<param>"))?;
        let value = value.trim();
        let change = if let Some(p) = value.strip_suffix('%') {
            Change::Percent(
                p.parse()
                    .map_err(|_| format!("`{value}` is not a percentage"))?,
            )
        } else {
            Change::Value(
                value
                    .parse()
                    .map_err(|_| format!("`{value}` is not a number"))?,
            )
        };
        Ok(Self {
            element: element.to_string(),
            param: param.to_string(),
            change,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RL: &str = r#"{
        "shared": {"omega0_hz": 50},
        "devices": [
            {"id": "b1", "kind": "rl_branch", "params": {"R": 1, "L": 1}},
            {"id": "b2", "kind": "rl_branch", "params": {"R": 1, "L": 1}}
        ],
        "grid": {"id": "grid", "kind": "grid_rl", "params": {"Rg": 0.2, "Lg": 0.1, "RL_coupling": 0.5}}
    }"#;

    #[test]
    fn parses_and_defaults_analysis() {
        let c = SystemConfig::from_json(RL).unwrap();
        assert_eq!(c.devices.len(), 2);
        assert_eq!(c.analysis, AnalysisConfig::default());
    }

    #[test]
    fn unknown_kind_names_the_field() {
        let bad = RL.replacen("rl_branch", "flux_capacitor", 1);
        let Err(CliError::Config(m)) = SystemConfig::from_json(&bad) else {
            panic!()
        };
        assert!(m.contains("devices[0].kind"), "{m}");
    }

    #[test]
    fn variation_syntax() {
        let v: Variation = "grid.Lg=-50%".parse().unwrap();
        assert_eq!((v.element.as_str(), v.param.as_str()), ("grid", "Lg"));
        assert_eq!(v.change, Change::Percent(-50.0));
        let v: Variation = "1-5.Z=0.02".parse().unwrap();
        assert_eq!(v.element, "1-5");
        assert_eq!(v.change, Change::Value(0.02));
        assert!("grid=1".parse::<Variation>().is_err());
        assert!("grid.Lg=abc%".parse::<Variation>().is_err());
    }

    #[test]
    fn set_and_get() {
        let mut c = SystemConfig::from_json(RL).unwrap();
        c.set("grid", "Lg", Change::Percent(-50.0)).unwrap();
        assert!((c.get("grid", "Lg").unwrap() - 0.05).abs() < 1e-15);
        c.set("b1", "R", Change::Value(2.0)).unwrap();
        assert_eq!(c.get("b1", "R"), Some(2.0));
        assert!(c.set("b1", "nope", Change::Value(1.0)).is_err());
        assert!(c.set("b9", "R", Change::Value(1.0)).is_err());
    }
}
