//! Radial networks: devices attached to buses, series RL lines, and one
//! external grid.
//!
//! The bus where the devices meet the grid (the PCC) is found by walking from
//! the grid bus through device-free pass-through buses; the lines on that walk
//! are merged into the grid impedance. Every remaining line is folded into the
//! devices behind it. Devices that share a line end up in one composite unit.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::{
    build_device, DeviceError, DeviceKind, DeviceModel, DeviceSpec, PortForm, Shared,
};
use crate::linalg::{cplx, CMat};
use crate::lti::{
    self, AssembledSystem, Channels, Labels, LtiError, Probes, StateSpaceModel, Subsystem,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("device `{0}` has no bus")]
    MissingBus(String),
    #[error("duplicate element id `{0}`")]
    DuplicateId(String),
    #[error("invalid line `{id}`: {reason}")]
    InvalidLine { id: String, reason: String },
    #[error("bus graph is not connected: `{0}` cannot reach the grid")]
    Disconnected(String),
    #[error("network is not radial: {0}")]
    NotRadial(String),
    #[error("grid element must be of kind grid_rl, got {0}")]
    GridKind(String),
    #[error("device `{0}` is not a unit device")]
    UnitKind(String),
    #[error("port forms cannot be mixed: {0}")]
    MixedPortForms(String),
    #[error("no devices")]
    Empty,
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Series RL line in per-unit (`X` at the base frequency).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub from: String,
    pub to: String,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "X")]
    pub x: f64,
    /// Collector segment of a string topology.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub collector: bool,
}

impl LineSpec {
    pub fn new(from: &str, to: &str, r: f64, x: f64) -> Self {
        Self {
            id: None,
            from: from.to_string(),
            to: to.to_string(),
            r,
            x,
            collector: false,
        }
    }

    pub fn label(&self) -> String {
        self.id
            .clone()
            .unwrap_or_else(|| format!("{}-{}", self.from, self.to))
    }
}

/// Devices, lines and the grid of one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default)]
    pub shared: Shared,
    pub devices: Vec<DeviceSpec>,
    #[serde(default)]
    pub lines: Vec<LineSpec>,
    pub grid: DeviceSpec,
}

impl NetworkSpec {
    /// Copy with every collector line removed (zero impedance).
    pub fn parallel_variant(&self) -> Self {
        self.with_collector_impedance(0.0)
    }

    /// Copy with every collector line scaled to impedance magnitude `z`,
    /// keeping its R/X ratio (pure reactance when both are zero).
    pub fn with_collector_impedance(&self, z: f64) -> Self {
        let mut out = self.clone();
        for l in out.lines.iter_mut().filter(|l| l.collector) {
            let mag = l.r.hypot(l.x);
            let (ur, ux) = if mag > 0.0 {
                (l.r / mag, l.x / mag)
            } else {
                (0.0, 1.0)
            };
            l.r = z * ur;
            l.x = z * ux;
        }
        out
    }

    pub fn has_collectors(&self) -> bool {
        self.lines.iter().any(|l| l.collector)
    }
}

/// An assembled network together with the device models it came from.
#[derive(Debug, Clone)]
pub struct Network {
    pub assembled: AssembledSystem,
    /// Subsystems in unit order, before assembly.
    pub subsystems: Vec<Subsystem>,
    pub devices: Vec<DeviceModel>,
    /// Grid model with the feeder impedance merged in.
    pub grid: DeviceModel,
    pub form: PortForm,
    pub pcc: String,
    /// Device indices per unit.
    pub unit_devices: Vec<Vec<usize>>,
}

impl Network {
    /// True when at least one unit is a composite of several devices.
    pub fn has_composites(&self) -> bool {
        self.unit_devices.iter().any(|u| u.len() > 1)
    }
}

fn port_form(devices: &[DeviceSpec]) -> Result<PortForm, NetworkError> {
    let mut real = false;
    let mut complex_generic = None;
    for d in devices {
        match d.kind {
            DeviceKind::Gfm | DeviceKind::Gfl => real = true,
            DeviceKind::GenericLti => match d.matrices.as_ref().map(|m| m.form) {
                Some(PortForm::Real) => real = true,
                Some(PortForm::Complex) => complex_generic = Some(d.id.clone()),
                None => {}
            },
            _ => {}
        }
    }
    match (real, complex_generic) {
        (true, Some(id)) => Err(NetworkError::MixedPortForms(format!(
            "`{id}` is complex but the network contains real-form devices"
        ))),
        (true, None) => Ok(PortForm::Real),
        (false, _) => Ok(PortForm::Complex),
    }
}

/// `R + X J` and `X / omega0` as port-sized blocks.
fn impedance_blocks(form: PortForm, r: f64, x: f64, omega0: f64) -> (CMat, CMat) {
    let l = if omega0 > 0.0 { x / omega0 } else { 0.0 };
    match form {
        PortForm::Complex => (
            CMat::from_element(1, 1, cplx(r, x)),
            CMat::from_element(1, 1, cplx(l, 0.0)),
        ),
        PortForm::Real => (
            CMat::from_row_slice(
                2,
                2,
                &[cplx(r, 0.0), cplx(-x, 0.0), cplx(x, 0.0), cplx(r, 0.0)],
            ),
            CMat::from_row_slice(
                2,
                2,
                &[cplx(l, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0), cplx(l, 0.0)],
            ),
        ),
    }
}

struct Graph {
    /// bus -> list of (line index, neighbour)
    adj: BTreeMap<String, Vec<(usize, String)>>,
}

impl Graph {
    fn new(spec: &NetworkSpec) -> Result<Self, NetworkError> {
        let mut adj: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
        let mut ids = BTreeSet::new();
        for d in spec.devices.iter().chain(std::iter::once(&spec.grid)) {
            let bus = d
                .bus
                .clone()
                .ok_or_else(|| NetworkError::MissingBus(d.id.clone()))?;
            if !ids.insert(d.id.clone()) {
                return Err(NetworkError::DuplicateId(d.id.clone()));
            }
            adj.entry(bus).or_default();
        }
        for (k, l) in spec.lines.iter().enumerate() {
            let id = l.label();
            if !ids.insert(id.clone()) {
                return Err(NetworkError::DuplicateId(id));
            }
            if !(l.r.is_finite() && l.x.is_finite()) || l.r < 0.0 || l.x < 0.0 {
                return Err(NetworkError::InvalidLine {
                    id,
                    reason: format!(
                        "R and X must be finite and non-negative, got R={} X={}",
                        l.r, l.x
                    ),
                });
            }
            if l.from == l.to {
                return Err(NetworkError::InvalidLine {
                    id,
                    reason: "both ends on the same bus".into(),
                });
            }
            adj.entry(l.from.clone())
                .or_default()
                .push((k, l.to.clone()));
            adj.entry(l.to.clone())
                .or_default()
                .push((k, l.from.clone()));
        }
        Ok(Self { adj })
    }

    fn degree(&self, bus: &str) -> usize {
        self.adj.get(bus).map_or(0, Vec::len)
    }
}

/// Builds every device, folds the lines and assembles the closed system.
pub fn build_network(spec: &NetworkSpec) -> Result<Network, NetworkError> {
    if spec.devices.is_empty() {
        return Err(NetworkError::Empty);
    }
    if spec.grid.kind != DeviceKind::GridRl {
        return Err(NetworkError::GridKind(spec.grid.kind.as_str().into()));
    }
    if let Some(d) = spec.devices.iter().find(|d| d.kind == DeviceKind::GridRl) {
        return Err(NetworkError::UnitKind(d.id.clone()));
    }
    let graph = Graph::new(spec)?;
    let grid_bus = spec
        .grid
        .bus
        .clone()
        .ok_or_else(|| NetworkError::MissingBus(spec.grid.id.clone()))?;

    // connectivity and tree shape
    let mut seen = BTreeSet::from([grid_bus.clone()]);
    let mut queue = VecDeque::from([grid_bus.clone()]);
    while let Some(b) = queue.pop_front() {
        for (_, nb) in &graph.adj[&b] {
            if seen.insert(nb.clone()) {
                queue.push_back(nb.clone());
            }
        }
    }
    if let Some(b) = graph.adj.keys().find(|b| !seen.contains(*b)) {
        return Err(NetworkError::Disconnected(b.clone()));
    }
    if spec.lines.len() + 1 != graph.adj.len() {
        return Err(NetworkError::NotRadial(format!(
            "{} buses but {} lines",
            graph.adj.len(),
            spec.lines.len()
        )));
    }

    let device_buses: BTreeSet<&str> = spec
        .devices
        .iter()
        .filter_map(|d| d.bus.as_deref())
        .collect();

    // walk from the grid bus through device-free pass-through buses
    let mut feeder = Vec::new();
    let mut pcc = grid_bus.clone();
    let mut prev: Option<usize> = None;
    loop {
        if device_buses.contains(pcc.as_str()) {
            break;
        }
        let onward: Vec<&(usize, String)> = graph.adj[&pcc]
            .iter()
            .filter(|(k, _)| Some(*k) != prev)
            .collect();
        if onward.len() != 1 {
            break;
        }
        let (k, nb) = onward[0];
        feeder.push(*k);
        prev = Some(*k);
        pcc = nb.clone();
        if graph.degree(&pcc) > 2 {
            break;
        }
    }

    // path from every bus to the PCC, as line indices
    let mut path: BTreeMap<String, Vec<usize>> = BTreeMap::from([(pcc.clone(), Vec::new())]);
    let mut queue = VecDeque::from([pcc.clone()]);
    while let Some(b) = queue.pop_front() {
        let base = path[&b].clone();
        for (k, nb) in &graph.adj[&b] {
            if feeder.contains(k) || path.contains_key(nb) {
                continue;
            }
            let mut p = base.clone();
            p.push(*k);
            path.insert(nb.clone(), p);
            queue.push_back(nb.clone());
        }
    }

    let form = port_form(&spec.devices)?;
    let shared = spec.shared;
    let omega0 = shared.omega0();
    let devices: Vec<DeviceModel> = spec
        .devices
        .iter()
        .map(|d| build_device(d, &shared, form))
        .collect::<Result<_, _>>()?;

    let mut grid_spec = spec.grid.clone();
    let (mut r_extra, mut x_extra) = (0.0, 0.0);
    for &k in &feeder {
        r_extra += spec.lines[k].r;
        x_extra += spec.lines[k].x;
    }
    if !feeder.is_empty() {
        let rg = grid_spec.params.get("Rg").copied().unwrap_or(0.0);
        let lg = grid_spec.params.get("Lg").copied().unwrap_or(f64::NAN);
        grid_spec.params.insert("Rg".into(), rg + r_extra);
        grid_spec.params.insert("Lg".into(), lg + x_extra / omega0);
        log::debug!(
            "feeder of {} line(s) merged into the grid impedance",
            feeder.len()
        );
    }
    let grid = build_device(&grid_spec, &shared, form)?;

    // shared impedance between device paths
    let dev_path: Vec<&Vec<usize>> = spec
        .devices
        .iter()
        .map(|d| {
            let bus = d.bus.as_deref().unwrap_or_default();
            path.get(bus)
                .ok_or_else(|| NetworkError::NotRadial(format!("bus `{bus}` sits on the feeder")))
        })
        .collect::<Result<_, _>>()?;
    let shared_z = |a: usize, b: usize| -> (f64, f64) {
        let (mut r, mut x) = (0.0, 0.0);
        for k in dev_path[a].iter().filter(|k| dev_path[b].contains(k)) {
            r += spec.lines[*k].r;
            x += spec.lines[*k].x;
        }
        (r, x)
    };

    // units: devices linked by a nonzero shared impedance
    let n = devices.len();
    let mut unit_of: Vec<usize> = (0..n).collect();
    fn find(u: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while u[r] != r {
            r = u[r];
        }
        u[i] = r;
        r
    }
    for a in 0..n {
        for b in a + 1..n {
            let (r, x) = shared_z(a, b);
            if r > 0.0 || x > 0.0 {
                let (ra, rb) = (find(&mut unit_of, a), find(&mut unit_of, b));
                unit_of[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut unit_of, i);
        groups.entry(r).or_default().push(i);
    }

    let w = form.width();
    let mut subsystems = Vec::new();
    let mut unit_devices = Vec::new();
    for members in groups.into_values() {
        let parts: Vec<Subsystem> = members
            .iter()
            .map(|&i| devices[i].subsystem.clone())
            .collect();
        let kd = members.len() * w;
        let mut gr = CMat::zeros(kd, kd);
        let mut gl = CMat::zeros(kd, kd);
        for (a, &da) in members.iter().enumerate() {
            for (b, &db) in members.iter().enumerate() {
                let (r, x) = shared_z(da, db);
                let (zr, zl) = impedance_blocks(form, r, x, omega0);
                gr.view_mut((a * w, b * w), (w, w)).copy_from(&zr);
                gl.view_mut((a * w, b * w), (w, w)).copy_from(&zl);
            }
        }
        let sub = if members.len() == 1 {
            if gr.iter().chain(gl.iter()).all(|z| z.norm() == 0.0) {
                parts.into_iter().next().unwrap_or_else(|| unreachable!())
            } else {
                let id = parts[0].id.clone();
                let folded = lti::fold_series_impedance(
                    &id,
                    &parts,
                    &lti::PortCoupling {
                        resistive: gr,
                        inductive: gl,
                    },
                )?;
                strip_prefix(folded, &id)?
            }
        } else {
            let id = members
                .iter()
                .map(|&i| devices[i].spec.id.as_str())
                .collect::<Vec<_>>()
                .join("+");
            lti::fold_series_impedance(
                &id,
                &parts,
                &lti::PortCoupling {
                    resistive: gr,
                    inductive: gl,
                },
            )?
        };
        subsystems.push(sub);
        unit_devices.push(members);
    }

    let assembled = lti::assemble_group_grid(&subsystems, &grid.subsystem)?;
    Ok(Network {
        assembled,
        subsystems,
        devices,
        grid,
        form,
        pcc,
        unit_devices,
    })
}

/// Undoes the `id.` prefix a single-device fold adds to labels.
fn strip_prefix(sub: Subsystem, id: &str) -> Result<Subsystem, LtiError> {
    let pre = format!("{id}.");
    let strip = |v: &[String]| -> Vec<String> {
        v.iter()
            .map(|s| s.strip_prefix(&pre).unwrap_or(s).to_string())
            .collect()
    };
    let m = &sub.model;
    let labels = Labels {
        states: strip(m.states()),
        inputs: m.labels().inputs.clone(),
        outputs: m.labels().outputs.clone(),
    };
    let model = StateSpaceModel::new(
        m.a().clone(),
        m.b().clone(),
        m.c().clone(),
        m.d().clone(),
        labels,
    )?;
    Ok(Subsystem {
        id: sub.id,
        model,
        disturbances: Channels {
            labels: strip(&sub.disturbances.labels),
            matrix: sub.disturbances.matrix,
        },
        probes: Probes {
            labels: strip(&sub.probes.labels),
            ..sub.probes
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigenvalues, spectrum_distance};

    fn branch(id: &str, bus: &str) -> DeviceSpec {
        DeviceSpec::new(id, DeviceKind::RlBranch)
            .with_param("R", 0.1)
            .with_param("L", 0.01)
            .at_bus(bus)
    }

    fn grid(bus: &str) -> DeviceSpec {
        DeviceSpec::new("grid", DeviceKind::GridRl)
            .with_param("Rg", 0.05)
            .with_param("Lg", 0.005)
            .with_param("RL_coupling", 2.0)
            .at_bus(bus)
    }

    fn star(with_feeder: bool) -> NetworkSpec {
        let gbus = if with_feeder { "g" } else { "pcc" };
        let mut lines = vec![
            LineSpec::new("a", "pcc", 0.01, 0.3),
            LineSpec::new("b", "pcc", 0.01, 0.3),
        ];
        if with_feeder {
            lines.push(LineSpec::new("pcc", "mid", 0.02, 0.1));
            lines.push(LineSpec::new("mid", "g", 0.02, 0.1));
        }
        NetworkSpec {
            shared: Shared::default(),
            devices: vec![branch("b1", "a"), branch("b2", "b")],
            lines,
            grid: grid(gbus),
        }
    }

    #[test]
    fn devices_on_the_grid_bus_match_direct_assembly() {
        let spec = NetworkSpec {
            shared: Shared::default(),
            devices: vec![
                branch("b1", "pcc"),
                branch("b2", "pcc"),
                branch("b3", "pcc"),
            ],
            lines: vec![],
            grid: grid("pcc"),
        };
        let net = build_network(&spec).unwrap();
        let direct =
            lti::assemble_rl_example(0.1, 0.01, 2.0, 0.05, 0.005, Shared::default().omega0())
                .unwrap();
        assert!((net.assembled.a() - direct.a())
            .iter()
            .all(|z| z.norm() < 1e-12));
        assert_eq!(net.assembled.units, ["b1", "b2", "b3"]);
        assert_eq!(net.pcc, "pcc");
    }

    #[test]
    fn feeder_merges_into_grid() {
        let net = build_network(&star(true)).unwrap();
        assert_eq!(net.pcc, "pcc");
        let lg = net.grid.spec.params["Lg"];
        assert!((lg - (0.005 + 0.2 / Shared::default().omega0())).abs() < 1e-15);
        assert!((net.grid.spec.params["Rg"] - 0.09).abs() < 1e-15);
        assert!(!net.has_composites());
    }

    #[test]
    fn branch_line_folds_into_its_own_inductance() {
        // an RL branch behind a line equals a branch with the summed impedance
        let net = build_network(&star(false)).unwrap();
        let w = Shared::default().omega0();
        let mut direct = star(false);
        direct.lines.clear();
        for d in &mut direct.devices {
            d.params.insert("R".into(), 0.11);
            d.params.insert("L".into(), 0.01 + 0.3 / w);
            d.bus = Some("pcc".into());
        }
        let ref_net = build_network(&direct).unwrap();
        let e1 = eigenvalues(net.assembled.a()).unwrap();
        let e2 = eigenvalues(ref_net.assembled.a()).unwrap();
        assert!(spectrum_distance(&e1, &e2) < 1e-9, "{e1:?} {e2:?}");
        assert_eq!(net.assembled.model.states()[0], "b1.i");
    }

    #[test]
    fn shared_line_makes_a_composite() {
        let spec = NetworkSpec {
            shared: Shared::default(),
            devices: vec![branch("b1", "a"), branch("b2", "b"), branch("b3", "pcc")],
            lines: vec![
                LineSpec::new("a", "b", 0.01, 0.05),
                LineSpec::new("b", "pcc", 0.01, 0.05),
            ],
            grid: grid("pcc"),
        };
        let net = build_network(&spec).unwrap();
        assert!(net.has_composites());
        assert_eq!(net.assembled.units, ["b1+b2", "b3"]);
        assert_eq!(net.assembled.model.states()[0], "b1+b2.b1.i");
    }

    #[test]
    fn zero_collector_equals_star() {
        let mut spec = NetworkSpec {
            shared: Shared::default(),
            devices: vec![branch("b1", "a"), branch("b2", "b")],
            lines: vec![
                LineSpec::new("a", "b", 0.01, 0.05),
                LineSpec::new("b", "pcc", 0.0, 0.0),
            ],
            grid: grid("pcc"),
        };
        spec.lines[0].collector = true;
        spec.lines[1].collector = true;
        let par = build_network(&spec.parallel_variant()).unwrap();
        assert!(!par.has_composites());
        let scaled = spec.with_collector_impedance(2.0);
        let l0 = &scaled.lines[0];
        assert!((l0.r.hypot(l0.x) - 2.0).abs() < 1e-12 && (l0.x / l0.r - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_loops_and_islands() {
        let mut s = star(false);
        s.lines.push(LineSpec::new("a", "b", 0.0, 0.1));
        assert!(matches!(build_network(&s), Err(NetworkError::NotRadial(_))));
        let mut s = star(false);
        s.lines.pop();
        assert!(matches!(
            build_network(&s),
            Err(NetworkError::Disconnected(_))
        ));
    }

    #[test]
    fn rejects_missing_bus_and_negative_line() {
        let mut s = star(false);
        s.devices[0].bus = None;
        assert!(matches!(
            build_network(&s),
            Err(NetworkError::MissingBus(_))
        ));
        let mut s = star(false);
        s.lines[0].x = -1.0;
        assert!(matches!(
            build_network(&s),
            Err(NetworkError::InvalidLine { .. })
        ));
    }
}
