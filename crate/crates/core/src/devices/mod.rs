//! Small-signal device templates.
//!
//! Every template produces a [`Subsystem`] whose port takes the terminal
//! voltage and returns the current injected into the terminal (positive into
//! the network). The external grid is the complement: it takes the summed
//! device current and returns the coupling voltage.
//!
//! Two port forms exist. The complex form packs `d + jq` into one complex
//! signal and is used by the RL templates. The real form keeps `d` and `q`
//! as separate real signals and is used by the inverter templates.
//!
//! Units: `rl_branch.L` and `grid_rl.Lg` are inductances in time units
//! (`L = X / omega0`). Inverter filter parameters `Lf`, `Cf`, `Lc` are per-unit
//! reactance/susceptance at the base frequency `omega0 = 2 pi omega0_hz`, and
//! every bandwidth `f_*` is in Hz.

mod generic;
mod gfl;
mod gfm;
mod rl;

pub use generic::{build_generic_lti, GenericMatrices};
pub use gfl::{build_gfl, GFL_STATES};
pub use gfm::{build_gfm, GFM_STATES};
pub use rl::{build_grid_rl, build_rl_branch};

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dual::{self, Dual};
use crate::linalg::from_real;
use crate::lti::{Channels, LtiError, Probes, Subsystem};

/// Residual above which an operating point is reported as inconsistent.
pub const OPERATING_POINT_WARN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("operating point residual {0:.3e} is too large")]
    OperatingPointResidualTooLarge(f64),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> DeviceError {
    DeviceError::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    RlBranch,
    GridRl,
    Gfm,
    Gfl,
    GenericLti,
}

impl DeviceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::RlBranch => "rl_branch",
            Self::GridRl => "grid_rl",
            Self::Gfm => "gfm",
            Self::Gfl => "gfl",
            Self::GenericLti => "generic_lti",
        }
    }
}

/// Port representation of a device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortForm {
    /// One complex `d + jq` signal per port.
    Complex,
    /// Separate real `d` and `q` signals.
    Real,
}

impl PortForm {
    pub fn width(self) -> usize {
        match self {
            Self::Complex => 1,
            Self::Real => 2,
        }
    }

    pub(crate) fn labels(self, base: &str) -> Vec<String> {
        match self {
            Self::Complex => vec![base.to_string()],
            Self::Real => vec![format!("{base}_d"), format!("{base}_q")],
        }
    }
}

/// System-wide base quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shared {
    pub omega0_hz: f64,
    #[serde(rename = "Sbase", default = "one")]
    pub sbase: f64,
    #[serde(rename = "Vbase", default = "one")]
    pub vbase: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for Shared {
    fn default() -> Self {
        Self {
            omega0_hz: 50.0,
            sbase: 1.0,
            vbase: 1.0,
        }
    }
}

impl Shared {
    /// Base angular frequency in rad/s.
    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.omega0_hz
    }
}

/// Kind, parameters and operating point of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub id: String,
    pub kind: DeviceKind,
    /// Network bus the device is attached to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bus: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operating_point: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<GenericMatrices>,
}

impl DeviceSpec {
    pub fn new(id: impl Into<String>, kind: DeviceKind) -> Self {
        Self {
            id: id.into(),
            kind,
            bus: None,
            params: BTreeMap::new(),
            operating_point: None,
            matrices: None,
        }
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn at_bus(mut self, bus: &str) -> Self {
        self.bus = Some(bus.to_string());
        self
    }

    pub fn with_op(mut self, name: &str, value: f64) -> Self {
        self.operating_point
            .get_or_insert_with(BTreeMap::new)
            .insert(name.to_string(), value);
        self
    }

    pub(crate) fn param(&self, name: &str) -> Result<f64, DeviceError> {
        let v = *self.params.get(name).ok_or_else(|| {
            invalid(
                name,
                format!("missing for {} `{}`", self.kind.as_str(), self.id),
            )
        })?;
        if !v.is_finite() {
            return Err(invalid(name, "not finite"));
        }
        Ok(v)
    }

    pub(crate) fn param_or(&self, name: &str, default: f64) -> Result<f64, DeviceError> {
        match self.params.get(name) {
            None => Ok(default),
            Some(v) if v.is_finite() => Ok(*v),
            Some(_) => Err(invalid(name, "not finite")),
        }
    }

    pub(crate) fn positive(&self, name: &str) -> Result<f64, DeviceError> {
        let v = self.param(name)?;
        if v <= 0.0 {
            return Err(invalid(name, format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    pub(crate) fn non_negative(&self, name: &str, default: f64) -> Result<f64, DeviceError> {
        let v = self.param_or(name, default)?;
        if v < 0.0 {
            return Err(invalid(name, format!("must be non-negative, got {v}")));
        }
        Ok(v)
    }

    pub(crate) fn op(&self) -> Result<&BTreeMap<String, f64>, DeviceError> {
        self.operating_point.as_ref().ok_or_else(|| {
            invalid(
                "operating_point",
                format!("required for {} `{}`", self.kind.as_str(), self.id),
            )
        })
    }

    pub(crate) fn op_value(&self, name: &str) -> Result<f64, DeviceError> {
        let op = self.op()?;
        let v = op
            .get(name)
            .or_else(|| self.params.get(name))
            .copied()
            .ok_or_else(|| {
                invalid(
                    name,
                    format!("missing from operating point of `{}`", self.id),
                )
            })?;
        if !v.is_finite() {
            return Err(invalid(name, "not finite"));
        }
        Ok(v)
    }

    pub(crate) fn op_value_or(&self, name: &str, default: f64) -> Result<f64, DeviceError> {
        match self.op_value(name) {
            Ok(v) => Ok(v),
            Err(DeviceError::InvalidParameter { reason, .. }) if reason.starts_with("missing") => {
                Ok(default)
            }
            Err(e) => Err(e),
        }
    }
}

/// Nonlinear equations of an inverter template kept next to its
/// linearization so the operating point can be re-checked.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Nonlinear {
    Gfm(gfm::GfmParams),
    Gfl(gfl::GflParams),
}

/// Equilibrium the linear model was derived at.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    /// State values in template order.
    pub state: Vec<f64>,
    /// Terminal voltage in the common frame.
    pub terminal: [f64; 2],
    /// Exogenous setpoints in channel order.
    pub setpoints: Vec<f64>,
}

/// A built device: the linear port model plus its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceModel {
    pub spec: DeviceSpec,
    pub form: PortForm,
    pub subsystem: Subsystem,
    pub equilibrium: Option<Equilibrium>,
    pub(crate) nonlinear: Option<Nonlinear>,
}

/// Builds any device kind. `form` selects the port representation of the RL
/// templates; inverters are always real.
pub fn build_device(
    spec: &DeviceSpec,
    shared: &Shared,
    form: PortForm,
) -> Result<DeviceModel, DeviceError> {
    match spec.kind {
        DeviceKind::RlBranch => build_rl_branch(spec, shared, form),
        DeviceKind::GridRl => build_grid_rl(spec, shared, form),
        DeviceKind::Gfm => build_gfm(spec, shared),
        DeviceKind::Gfl => build_gfl(spec, shared),
        DeviceKind::GenericLti => build_generic_lti(spec),
    }
}

/// Largest residual of the nonlinear equilibrium equations at the stored
/// operating point; `0` for linear templates. Logs a warning above
/// [`OPERATING_POINT_WARN`].
pub fn check_operating_point(device: &DeviceModel) -> f64 {
    let (Some(nl), Some(eq)) = (&device.nonlinear, &device.equilibrium) else {
        return 0.0;
    };
    let res = match nl {
        Nonlinear::Gfm(p) => gfm::residual(p, &eq.state, eq.terminal, &eq.setpoints),
        Nonlinear::Gfl(p) => gfl::residual(p, &eq.state, eq.terminal, &eq.setpoints),
    };
    let worst = res.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if worst > OPERATING_POINT_WARN {
        log::warn!(
            "operating point of `{}` has residual {worst:.3e} (> {OPERATING_POINT_WARN:.0e})",
            device.spec.id
        );
    }
    worst
}

/// Rotation by `angle`.
pub(crate) fn rot<T: dual::Scalar>(angle: T, v: [T; 2]) -> [T; 2] {
    let (c, s) = (angle.cos(), angle.sin());
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// `J v` with `J = [[0, -1], [1, 0]]`.
pub(crate) fn jrot<T: dual::Scalar>(v: [T; 2]) -> [T; 2] {
    [-v[1], v[0]]
}

/// Linear model of `x' = f(x, u, w)`, `y = h(x, u, w)` around `z0 = [x0; u0; w0]`.
pub(crate) struct Linearized {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub probe_x: DMatrix<f64>,
    pub probe_w: DMatrix<f64>,
}

pub(crate) fn linearize<F, H, P>(
    n: usize,
    n_u: usize,
    z0: &[f64],
    n_probes: usize,
    f: F,
    h: H,
    probes: P,
) -> Linearized
where
    F: Fn(&[Dual]) -> Vec<Dual>,
    H: Fn(&[Dual]) -> Vec<Dual>,
    P: Fn(&[Dual]) -> Vec<Dual>,
{
    let m = z0.len();
    let jf = dual::jacobian(z0, n, f);
    let jh = dual::jacobian(z0, n_u, h);
    let jp = dual::jacobian(z0, n_probes, probes);
    let n_w = m - n - n_u;
    Linearized {
        a: jf.view((0, 0), (n, n)).into_owned(),
        b: jf.view((0, n), (n, n_u)).into_owned(),
        e: jf.view((0, n + n_u), (n, n_w)).into_owned(),
        c: jh.view((0, 0), (n_u, n)).into_owned(),
        d: jh.view((0, n), (n_u, n_u)).into_owned(),
        probe_x: jp.view((0, 0), (n_probes, n)).into_owned(),
        probe_w: jp.view((0, n + n_u), (n_probes, n_w)).into_owned(),
    }
}

pub(crate) fn channels(e: &DMatrix<f64>, labels: &[&str]) -> Channels {
    Channels {
        matrix: from_real(e),
        labels: labels.iter().map(|s| s.to_string()).collect(),
    }
}

pub(crate) fn probes(x: &DMatrix<f64>, w: &DMatrix<f64>, labels: &[&str]) -> Probes {
    Probes {
        states: from_real(x),
        feedthrough: from_real(w),
        labels: labels.iter().map(|s| s.to_string()).collect(),
    }
}

/// Applies `name -> value` overrides from an operating-point map onto a
/// state vector with the given labels.
pub(crate) fn apply_overrides(state: &mut [f64], labels: &[&str], op: &BTreeMap<String, f64>) {
    for (i, l) in labels.iter().enumerate() {
        if let Some(v) = op.get(*l) {
            state[i] = *v;
        }
    }
}
