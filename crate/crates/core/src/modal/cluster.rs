use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{analysis::geometric_multiplicity, ModalResult, DEFAULT_RANK_TOL};
use crate::linalg::{self, CMat};
use crate::lti::Owner;

/// Inner-group, group-grid or neither.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "group", rename_all = "kebab-case")]
pub enum Classification {
    InnerGroup(String),
    GroupGrid,
    Unclassified,
}

impl Classification {
    pub fn label(&self) -> String {
        match self {
            Self::InnerGroup(g) => format!("inner-group({g})"),
            Self::GroupGrid => "group-grid".into(),
            Self::Unclassified => "unclassified".into(),
        }
    }
}

/// A set of repeated or close eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeCluster {
    /// Indices into [`ModalResult::eigenvalues`], ascending.
    pub members: Vec<usize>,
    pub centroid: Complex64,
    /// Largest member distance from the centroid.
    pub radius: f64,
    /// Largest distance between two members.
    pub diameter: f64,
    /// Only evaluated for clusters of numerically repeated modes.
    pub geometric_multiplicity: Option<usize>,
    pub classification: Classification,
    pub gpf: Option<Vec<Complex64>>,
}

impl ModeCluster {
    pub fn n_g(&self) -> usize {
        self.members.len()
    }

    fn from_members(result: &ModalResult, members: Vec<usize>) -> Self {
        let values: Vec<Complex64> = members.iter().map(|&i| result.eigenvalues[i]).collect();
        let centroid = values.iter().sum::<Complex64>() / values.len() as f64;
        let radius = values
            .iter()
            .map(|z| (z - centroid).norm())
            .fold(0.0, f64::max);
        let mut diameter: f64 = 0.0;
        for x in &values {
            for y in &values {
                diameter = diameter.max((x - y).norm());
            }
        }
        let repeated_tol = default_cluster_tol(&result.a);
        // zero means the members are distinct at rank resolution, not repeated
        let geometric_multiplicity = (members.len() > 1 && diameter <= repeated_tol)
            .then(|| geometric_multiplicity(&result.a, centroid, DEFAULT_RANK_TOL))
            .filter(|&g| g > 0);
        Self {
            members,
            centroid,
            radius,
            diameter,
            geometric_multiplicity,
            classification: Classification::Unclassified,
            gpf: None,
        }
    }
}

/// `max(1e-6 * |A|_F, 1e-9)`.
pub fn default_cluster_tol(a: &CMat) -> f64 {
    (1e-6 * linalg::frobenius(a)).max(1e-9)
}

fn half_plane(z: Complex64, tol: f64) -> i8 {
    if z.im > 0.5 * tol {
        1
    } else if z.im < -0.5 * tol {
        -1
    } else {
        0
    }
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut k = i;
    while parent[k] != r {
        let next = parent[k];
        parent[k] = r;
        k = next;
    }
    r
}

/// Single-linkage clustering of the spectrum with absolute distance `tol`.
///
/// Modes in the upper and lower half-planes never share a cluster; modes on
/// the real axis (within `tol / 2`) may link to either side. Clusters are
/// ordered by their first member.
pub fn cluster_modes(result: &ModalResult, tol: f64) -> Vec<ModeCluster> {
    let ev = &result.eigenvalues;
    let n = ev.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let side: Vec<i8> = ev.iter().map(|&z| half_plane(z, tol)).collect();
    for i in 0..n {
        for j in i + 1..n {
            let compatible = side[i] == side[j] || side[i] == 0 || side[j] == 0;
            if compatible && (ev[i] - ev[j]).norm() <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut sets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        sets.entry(r).or_default().push(i);
    }
    let mut clusters: Vec<ModeCluster> = sets
        .into_values()
        .map(|m| ModeCluster::from_members(result, m))
        .collect();
    clusters.sort_by_key(|c| c.members[0]);
    clusters
}

/// Cluster tolerance wide enough to keep together the actual modes that
/// correspond to each predicted repeated eigenvalue.
///
/// `predicted` is the spectrum of a symmetry decomposition; entries sharing a
/// tag come from the same repeated inner eigenvalue, untagged entries are
/// simple modes. The result is never below `base`.
pub fn guided_cluster_tol(
    actual: &[Complex64],
    predicted: &[(Complex64, Option<usize>)],
    base: f64,
) -> f64 {
    let values: Vec<Complex64> = predicted.iter().map(|p| p.0).collect();
    let mut by_tag: BTreeMap<usize, Vec<Complex64>> = BTreeMap::new();
    for (pi, ai, _) in linalg::match_greedy(&values, actual) {
        if let Some(tag) = predicted[pi].1 {
            by_tag.entry(tag).or_default().push(actual[ai]);
        }
    }
    let mut tol = base;
    for members in by_tag.values() {
        for x in members {
            for y in members {
                tol = tol.max(1.05 * (x - y).norm());
            }
        }
    }
    tol
}

/// Labels each cluster from its group participation factors.
///
/// `ownership` maps states to units, `units` names them and `group_of` maps
/// unit ids to group ids. Clusters without a gpf stay unclassified.
pub fn classify_clusters(
    clusters: &mut [ModeCluster],
    ownership: &[Owner],
    units: &[String],
    group_of: &BTreeMap<String, String>,
    tau_ext: f64,
) {
    let group_ids: Vec<&String> = {
        let mut v: Vec<&String> = group_of.values().collect();
        v.sort();
        v.dedup();
        v
    };
    for cl in clusters.iter_mut() {
        let Some(gpf) = &cl.gpf else {
            cl.classification = Classification::Unclassified;
            continue;
        };
        let n_g = cl.n_g() as f64;
        let mut ext = 0.0;
        let mut mass: BTreeMap<&String, f64> = BTreeMap::new();
        for (k, owner) in ownership.iter().enumerate() {
            let v = gpf[k].norm();
            match owner {
                Owner::ExternalGrid => ext += v,
                Owner::Unit(u) => {
                    if let Some(g) = units.get(*u).and_then(|id| group_of.get(id)) {
                        *mass.entry(g).or_insert(0.0) += v;
                    }
                }
            }
        }
        cl.classification = if ext >= tau_ext * n_g {
            Classification::GroupGrid
        } else {
            group_ids
                .iter()
                .find(|g| mass.get(**g).copied().unwrap_or(0.0) > (1.0 - tau_ext) * n_g)
                .map(|g| Classification::InnerGroup((*g).clone()))
                .unwrap_or(Classification::Unclassified)
        };
    }
}
