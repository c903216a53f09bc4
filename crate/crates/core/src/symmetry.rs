//! Symmetry groups, the similarity transform that separates them, and the
//! resulting inner-group / group-grid decomposition.

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{self, cplx, CMat};
use crate::lti::{self, AssembledSystem, Labels, LtiError, Owner, StateSpaceModel, Subsystem};

/// Deviation at or below which a group counts as ideal.
pub const IDEAL_DEVIATION: f64 = 1e-12;
/// Default relative deviation accepted inside a quasi group.
pub const DEFAULT_TOL_QUASI: f64 = 0.35;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymmetryError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("partition does not match the assembled system: {0}")]
    PartitionMismatch(String),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryClass {
    Ideal,
    Quasi,
}

/// Whole-system symmetry type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemSymmetry {
    /// One group of identical subsystems.
    Ideally,
    /// One group with small parameter deviations.
    Quasi,
    /// Several groups, at least one with two or more members.
    Group,
    /// No two subsystems could be grouped.
    Asymmetric,
}

impl SystemSymmetry {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ideally => "ideally-symmetric",
            Self::Quasi => "quasi-symmetric",
            Self::Group => "group-symmetric",
            Self::Asymmetric => "asymmetric",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub id: String,
    pub member_ids: Vec<String>,
    /// Entrywise mean of the member models.
    pub template: StateSpaceModel,
    pub class: SymmetryClass,
    /// Largest relative Frobenius deviation of a member from the template.
    pub deviation: f64,
}

impl Group {
    pub fn size(&self) -> usize {
        self.member_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPartition {
    pub groups: Vec<Group>,
}

impl GroupPartition {
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn classification(&self) -> SystemSymmetry {
        let multi: Vec<&Group> = self.groups.iter().filter(|g| g.size() > 1).collect();
        match (self.groups.len(), multi.len()) {
            (_, 0) => SystemSymmetry::Asymmetric,
            (1, 1) => match multi[0].class {
                SymmetryClass::Ideal => SystemSymmetry::Ideally,
                SymmetryClass::Quasi => SystemSymmetry::Quasi,
            },
            _ => SystemSymmetry::Group,
        }
    }

    /// True when any multi-member group is quasi.
    pub fn is_quasi(&self) -> bool {
        self.groups
            .iter()
            .any(|g| g.size() > 1 && g.class == SymmetryClass::Quasi)
    }

    /// Member id to group id.
    pub fn group_of(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        for g in &self.groups {
            for m in &g.member_ids {
                out.insert(m.clone(), g.id.clone());
            }
        }
        out
    }

    pub fn group(&self, id: &str) -> Option<&Group> {
        self.groups.iter().find(|g| g.id == id)
    }
}

fn schema_key(m: &StateSpaceModel) -> (Vec<String>, Vec<String>, Vec<String>) {
    let l = m.labels();
    (l.states.clone(), l.inputs.clone(), l.outputs.clone())
}

fn mean_model(models: &[&StateSpaceModel]) -> StateSpaceModel {
    let k = cplx(models.len() as f64, 0.0);
    let sum = |f: fn(&StateSpaceModel) -> &CMat| {
        let mut acc = f(models[0]).clone();
        for m in &models[1..] {
            acc += f(m);
        }
        acc / k
    };
    StateSpaceModel::new(
        sum(StateSpaceModel::a),
        sum(StateSpaceModel::b),
        sum(StateSpaceModel::c),
        sum(StateSpaceModel::d),
        models[0].labels().clone(),
    )
    .expect("mean of consistent models is consistent")
}

/// Relative Frobenius deviation of `m` from `template` over all four matrices.
pub fn relative_deviation(m: &StateSpaceModel, template: &StateSpaceModel) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, t) in [
        (m.a(), template.a()),
        (m.b(), template.b()),
        (m.c(), template.c()),
        (m.d(), template.d()),
    ] {
        num += linalg::frobenius(&(x - t)).powi(2);
        den += linalg::frobenius(t).powi(2);
    }
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        (num / den).sqrt()
    }
}

fn max_deviation(models: &[&StateSpaceModel]) -> (StateSpaceModel, f64) {
    let template = mean_model(models);
    let dev = models
        .iter()
        .map(|m| relative_deviation(m, &template))
        .fold(0.0, f64::max);
    (template, dev)
}

/// Partitions subsystems into symmetry groups.
///
/// Subsystems are first bucketed by label schema; inside a bucket each
/// subsystem joins the first group whose mean template stays within
/// `tol_quasi` of every member, otherwise it starts a new group. Group ids are
/// `g1, g2, ...` in order of first member.
pub fn detect_groups(
    subsystems: &[Subsystem],
    tol_quasi: f64,
) -> Result<GroupPartition, SymmetryError> {
    if subsystems.is_empty() {
        return Err(SymmetryError::InvalidParameter("no subsystems".into()));
    }
    if !(tol_quasi > 0.0 && tol_quasi < 1.0) {
        return Err(SymmetryError::InvalidParameter(format!(
            "tol_quasi must lie in (0, 1), got {tol_quasi}"
        )));
    }
    // clusters of subsystem indices, in creation order
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (k, s) in subsystems.iter().enumerate() {
        let key = schema_key(&s.model);
        let mut placed = false;
        for cl in clusters.iter_mut() {
            if schema_key(&subsystems[cl[0]].model) != key {
                continue;
            }
            let mut trial: Vec<&StateSpaceModel> =
                cl.iter().map(|&i| &subsystems[i].model).collect();
            trial.push(&s.model);
            if max_deviation(&trial).1 <= tol_quasi {
                cl.push(k);
                placed = true;
                break;
            }
        }
        if !placed {
            clusters.push(vec![k]);
        }
    }
    let groups = clusters
        .into_iter()
        .enumerate()
        .map(|(gi, cl)| {
            let models: Vec<&StateSpaceModel> = cl.iter().map(|&i| &subsystems[i].model).collect();
            let (template, deviation) = max_deviation(&models);
            Group {
                id: format!("g{}", gi + 1),
                member_ids: cl.iter().map(|&i| subsystems[i].id.clone()).collect(),
                template,
                class: if deviation <= IDEAL_DEVIATION {
                    SymmetryClass::Ideal
                } else {
                    SymmetryClass::Quasi
                },
                deviation,
            }
        })
        .collect();
    Ok(GroupPartition { groups })
}

/// Similarity transform for one group of `members` subsystems with `states`
/// states each.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformP {
    pub matrix: CMat,
    pub c: f64,
    pub members: usize,
    pub states: usize,
}

/// Block rows `e_k - e_M` for `k < M`, last block row `c (I, ..., I)`.
pub fn build_transform(members: usize, states: usize, c: f64) -> Result<TransformP, SymmetryError> {
    if members == 0 || states == 0 {
        return Err(SymmetryError::InvalidParameter(
            "group size and state count must be positive".into(),
        ));
    }
    if c == 0.0 || !c.is_finite() {
        return Err(SymmetryError::InvalidParameter(format!(
            "modification factor must be nonzero and finite, got {c}"
        )));
    }
    let n = members * states;
    let mut p = CMat::zeros(n, n);
    let one = cplx(1.0, 0.0);
    let last = (members - 1) * states;
    for k in 0..members - 1 {
        for i in 0..states {
            p[(k * states + i, k * states + i)] = one;
            p[(k * states + i, last + i)] = -one;
        }
    }
    for j in 0..members {
        for i in 0..states {
            p[(last + i, j * states + i)] = cplx(c, 0.0);
        }
    }
    Ok(TransformP {
        matrix: p,
        c,
        members,
        states,
    })
}

/// Per-group inner model: the template state matrix, repeated
/// `multiplicity = M - 1` times.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerModel {
    pub group_id: String,
    pub a: CMat,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub inner: Vec<InnerModel>,
    /// Aggregated groups closed with the grid.
    pub group_grid: StateSpaceModel,
    /// Modification factor used per group, in partition order.
    pub c: Vec<f64>,
    /// Set when any group is quasi; the decomposition then uses templates.
    pub approximate: bool,
}

impl Decomposition {
    /// Spectrum predicted by the decomposition: every inner eigenvalue with its
    /// multiplicity, followed by the group-grid eigenvalues.
    pub fn spectrum(&self) -> Option<Vec<Complex64>> {
        let mut out = Vec::new();
        for m in &self.inner {
            if m.multiplicity == 0 {
                continue;
            }
            let ev = linalg::eigenvalues(&m.a)?;
            for _ in 0..m.multiplicity {
                out.extend_from_slice(&ev);
            }
        }
        out.extend(linalg::eigenvalues(self.group_grid.a())?);
        Some(out)
    }

    pub fn inner_spectrum(&self, group_id: &str) -> Option<Vec<Complex64>> {
        let m = self.inner.iter().find(|m| m.group_id == group_id)?;
        linalg::eigenvalues(&m.a)
    }
}

fn resolve_c(partition: &GroupPartition, c: &[Option<f64>]) -> Result<Vec<f64>, SymmetryError> {
    if !c.is_empty() && c.len() != partition.groups.len() {
        return Err(SymmetryError::InvalidParameter(format!(
            "{} modification factors for {} groups",
            c.len(),
            partition.groups.len()
        )));
    }
    partition
        .groups
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let v = c.get(j).copied().flatten().unwrap_or(1.0 / g.size() as f64);
            if v == 0.0 || !v.is_finite() {
                Err(SymmetryError::InvalidParameter(format!(
                    "modification factor for {} must be nonzero and finite",
                    g.id
                )))
            } else {
                Ok(v)
            }
        })
        .collect()
}

fn check_partition(
    assembled: &AssembledSystem,
    partition: &GroupPartition,
) -> Result<(), SymmetryError> {
    let Some(parts) = &assembled.interconnection else {
        return Err(SymmetryError::PartitionMismatch(
            "assembled system does not keep its port-level parts".into(),
        ));
    };
    if parts.subsystems.len() != assembled.units.len() {
        return Err(SymmetryError::PartitionMismatch(
            "units and port-level subsystems differ".into(),
        ));
    }
    let mut seen = vec![false; assembled.units.len()];
    for g in &partition.groups {
        for id in &g.member_ids {
            let Some(k) = assembled.unit_index(id) else {
                return Err(SymmetryError::PartitionMismatch(format!(
                    "unknown subsystem `{id}`"
                )));
            };
            if seen[k] {
                return Err(SymmetryError::PartitionMismatch(format!(
                    "`{id}` is in two groups"
                )));
            }
            seen[k] = true;
            let m = &parts.subsystems[k];
            if schema_key(m) != schema_key(&g.template) || m.n_states() != g.template.n_states() {
                return Err(SymmetryError::PartitionMismatch(format!(
                    "`{id}` does not match the template of {}",
                    g.id
                )));
            }
        }
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(SymmetryError::PartitionMismatch(format!(
            "`{}` is not covered by the partition",
            assembled.units[k]
        )));
    }
    Ok(())
}

fn aggregate(template: &StateSpaceModel, members: usize, c: f64) -> StateSpaceModel {
    let m = members as f64;
    StateSpaceModel::new(
        template.a().clone(),
        template.b() * cplx(c * m, 0.0),
        template.c() / cplx(c, 0.0),
        template.d() * cplx(m, 0.0),
        template.labels().clone(),
    )
    .expect("scaled template is consistent")
}

/// Splits the assembled system into per-group inner models and the combined
/// group-grid model.
///
/// `c` holds an optional modification factor per group (partition order);
/// missing entries default to `1/M`.
pub fn decompose(
    assembled: &AssembledSystem,
    partition: &GroupPartition,
    c: &[Option<f64>],
) -> Result<Decomposition, SymmetryError> {
    check_partition(assembled, partition)?;
    let c = resolve_c(partition, c)?;
    let grid = &assembled.interconnection.as_ref().expect("checked").grid;
    let mut inner = Vec::new();
    let mut aggregates = Vec::new();
    let mut states = Vec::new();
    for (g, &cj) in partition.groups.iter().zip(&c) {
        inner.push(InnerModel {
            group_id: g.id.clone(),
            a: g.template.a().clone(),
            multiplicity: g.size() - 1,
        });
        let agg = aggregate(&g.template, g.size(), cj);
        states.extend(agg.prefixed(&g.id).labels().states.clone());
        aggregates.push(agg);
    }
    let refs: Vec<&StateSpaceModel> = aggregates.iter().collect();
    let a = lti::assemble_matrix(&refs, grid)?;
    states.extend(grid.prefixed("grid").labels().states.clone());
    let group_grid = StateSpaceModel::new(
        a,
        CMat::zeros(states.len(), 0),
        CMat::zeros(0, states.len()),
        CMat::zeros(0, 0),
        Labels::closed(states),
    )?;
    Ok(Decomposition {
        inner,
        group_grid,
        c,
        approximate: partition.is_quasi(),
    })
}

/// Full-system transform: inner coordinates of every group first, then each
/// group's aggregate, then the grid states (unchanged).
pub fn system_transform(
    assembled: &AssembledSystem,
    partition: &GroupPartition,
    c: &[Option<f64>],
) -> Result<CMat, SymmetryError> {
    check_partition(assembled, partition)?;
    let c = resolve_c(partition, c)?;
    let n = assembled.n_states();
    let mut p = CMat::zeros(n, n);
    let mut inner_rows = Vec::new();
    let mut agg_rows = Vec::new();
    for (g, &cj) in partition.groups.iter().zip(&c) {
        let tp = build_transform(g.size(), g.template.n_states(), cj)?;
        let cols: Vec<usize> = g
            .member_ids
            .iter()
            .flat_map(|id| assembled.unit_states(assembled.unit_index(id).expect("checked")))
            .collect();
        let m = tp.states;
        for r in 0..tp.matrix.nrows() {
            let row: Vec<(usize, Complex64)> = cols
                .iter()
                .enumerate()
                .map(|(j, &col)| (col, tp.matrix[(r, j)]))
                .collect();
            if r < (g.size() - 1) * m {
                inner_rows.push(row);
            } else {
                agg_rows.push(row);
            }
        }
    }
    let grid_rows = assembled
        .ownership
        .iter()
        .enumerate()
        .filter(|(_, o)| **o == Owner::ExternalGrid)
        .map(|(i, _)| vec![(i, cplx(1.0, 0.0))]);
    for (r, row) in inner_rows
        .into_iter()
        .chain(agg_rows)
        .chain(grid_rows)
        .enumerate()
    {
        for (col, v) in row {
            p[(r, col)] = v;
        }
    }
    Ok(p)
}
