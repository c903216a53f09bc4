//! Group, classify, analyze and participate: the analysis workflow shared by
//! every command.

use std::collections::BTreeMap;

use log::{debug, info, warn};
use symmod_core::devices::{check_operating_point, OPERATING_POINT_WARN};
use symmod_core::lti::Owner;
use symmod_core::modal::{
    self, classify_clusters, cluster_modes, default_cluster_tol, group_participation,
    group_participation_projector, guided_cluster_tol, ModalResult, ModeCluster,
    DEFAULT_QUADRATURE_POINTS, TAU_EXT_IDEAL, TAU_EXT_QUASI,
};
use symmod_core::network::{build_network, Network};
use symmod_core::symmetry::{
    decompose, detect_groups, Decomposition, GroupPartition, SystemSymmetry, DEFAULT_TOL_QUASI,
};
use symmod_core::{linalg, Complex64};

use crate::config::SystemConfig;
use crate::error::{CliError, Result};

/// Command-line overrides of the analysis settings.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub cluster_tol: Option<f64>,
    pub tol_quasi: Option<f64>,
    pub tau_ext: Option<f64>,
}

/// Grouping stage only.
#[derive(Debug, Clone)]
pub struct Grouping {
    pub network: Network,
    pub partition: GroupPartition,
    pub tol_quasi: f64,
    pub warnings: Vec<String>,
}

impl Grouping {
    pub fn symmetry(&self) -> SystemSymmetry {
        self.partition.classification()
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub grouping: Grouping,
    pub decomposition: Option<Decomposition>,
    pub modal: ModalResult,
    pub clusters: Vec<ModeCluster>,
    pub cluster_tol: f64,
    pub tau_ext: f64,
}

impl Analysis {
    pub fn network(&self) -> &Network {
        &self.grouping.network
    }

    pub fn warnings(&self) -> &[String] {
        &self.grouping.warnings
    }

    /// Cluster index of every mode.
    pub fn cluster_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.modal.n()];
        for (c, cl) in self.clusters.iter().enumerate() {
            for &i in &cl.members {
                out[i] = c;
            }
        }
        out
    }

    /// Sum of `|gpf_k|` over the grid states.
    pub fn grid_participation(&self, cluster: &ModeCluster) -> Option<f64> {
        let gpf = cluster.gpf.as_ref()?;
        Some(owner_mass(gpf, &self.network().assembled.ownership, |o| {
            matches!(o, Owner::ExternalGrid)
        }))
    }

    /// Sum of `|gpf_k|` per group id.
    pub fn group_mass(&self, cluster: &ModeCluster) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        let Some(gpf) = &cluster.gpf else { return out };
        let asm = &self.network().assembled;
        let group_of = self.grouping.partition.group_of();
        for (k, owner) in asm.ownership.iter().enumerate() {
            if let Owner::Unit(u) = owner {
                if let Some(g) = group_of.get(&asm.units[*u]) {
                    *out.entry(g.clone()).or_insert(0.0) += gpf[k].norm();
                }
            }
        }
        out
    }
}

fn owner_mass(gpf: &[Complex64], ownership: &[Owner], pick: impl Fn(&Owner) -> bool) -> f64 {
    gpf.iter()
        .zip(ownership)
        .filter(|(_, o)| pick(o))
        .map(|(g, _)| g.norm())
        .sum()
}

/// Frequency in Hz (signed) of an eigenvalue.
pub fn freq_hz(z: Complex64) -> f64 {
    z.im / (2.0 * std::f64::consts::PI)
}

/// `-Re(lambda) / |lambda|`, `1` at the origin.
pub fn damping_ratio(z: Complex64) -> f64 {
    let m = z.norm();
    if m == 0.0 {
        1.0
    } else {
        -z.re / m
    }
}

fn check_range(name: &str, v: f64, lo: f64, hi: f64) -> Result<f64> {
    if v.is_finite() && v > lo && v < hi {
        Ok(v)
    } else {
        Err(CliError::Config(format!(
            "{name} must lie in ({lo}, {hi}), got {v}"
        )))
    }
}

/// Builds the network and partitions its units into symmetry groups.
pub fn group(cfg: &SystemConfig, ov: &Overrides) -> Result<Grouping> {
    let tol_quasi = ov
        .tol_quasi
        .or(cfg.analysis.tol_quasi)
        .unwrap_or(DEFAULT_TOL_QUASI);
    check_range("tol_quasi", tol_quasi, 0.0, 1.0)?;
    let network = build_network(&cfg.network())?;
    let mut warnings = Vec::new();
    if ov.tol_quasi.is_none() && cfg.analysis.tol_quasi.is_none() {
        warnings.push(format!(
            "tol_quasi defaults to {DEFAULT_TOL_QUASI}; parameter similarity has no canonical threshold"
        ));
    }
    for dev in network.devices.iter().chain(std::iter::once(&network.grid)) {
        let r = check_operating_point(dev);
        if r > OPERATING_POINT_WARN {
            warnings.push(format!(
                "operating point of `{}` has residual {r:.3e}",
                dev.spec.id
            ));
        }
    }
    let partition = detect_groups(&network.subsystems, tol_quasi)?;
    for g in &partition.groups {
        info!(
            "{}: {} member(s) {:?}, {:?}, deviation {:.3e}",
            g.id,
            g.size(),
            g.member_ids,
            g.class,
            g.deviation
        );
    }
    Ok(Grouping {
        network,
        partition,
        tol_quasi,
        warnings,
    })
}

/// Decomposition spectrum with one tag per repeated inner eigenvalue.
fn tagged_prediction(dec: &Decomposition) -> Option<Vec<(Complex64, Option<usize>)>> {
    let mut out = Vec::new();
    let mut tag = 0;
    for m in &dec.inner {
        if m.multiplicity == 0 {
            continue;
        }
        for z in linalg::eigenvalues(&m.a)? {
            let t = (m.multiplicity > 1).then_some(tag);
            tag += 1;
            out.extend(std::iter::repeat_n((z, t), m.multiplicity));
        }
    }
    out.extend(
        linalg::eigenvalues(dec.group_grid.a())?
            .into_iter()
            .map(|z| (z, None)),
    );
    Some(out)
}

/// Runs the whole workflow on one configuration.
pub fn analyze(cfg: &SystemConfig, ov: &Overrides) -> Result<Analysis> {
    let mut grouping = group(cfg, ov)?;
    grouping.network.assembled.group_of = grouping.partition.group_of();
    let asm = &grouping.network.assembled;
    let a = asm.a();

    let c: Vec<Option<f64>> = grouping
        .partition
        .groups
        .iter()
        .map(|g| cfg.analysis.c.get(&g.id).copied())
        .collect();
    for id in cfg.analysis.c.keys() {
        if grouping.partition.group(id).is_none() {
            return Err(CliError::Config(format!(
                "analysis.c names unknown group `{id}`"
            )));
        }
    }
    let decomposition = match decompose(asm, &grouping.partition, &c) {
        Ok(d) => Some(d),
        Err(e) => {
            grouping
                .warnings
                .push(format!("no symmetry decomposition: {e}"));
            None
        }
    };

    let modal = modal::modal_analysis(a)?;
    let base = match ov.cluster_tol.or(cfg.analysis.cluster_tol) {
        Some(t) => check_range("cluster_tol", t, 0.0, f64::INFINITY)?,
        None => default_cluster_tol(a),
    };
    let cluster_tol = match decomposition.as_ref().and_then(tagged_prediction) {
        Some(pred) => guided_cluster_tol(&modal.eigenvalues, &pred, base),
        None => base,
    };
    debug!("cluster tolerance {cluster_tol:.3e} (base {base:.3e})");

    let mut clusters = cluster_modes(&modal, cluster_tol);
    for cl in clusters.iter_mut() {
        cl.gpf = match group_participation(&modal, cl) {
            Ok(g) => Some(g),
            Err(e) => {
                match group_participation_projector(
                    &modal,
                    cl,
                    cluster_tol,
                    DEFAULT_QUADRATURE_POINTS,
                ) {
                    Ok(g) => Some(g),
                    Err(e2) => {
                        grouping
                            .warnings
                            .push(format!("no gpf for modes {:?}: {e}; {e2}", cl.members));
                        None
                    }
                }
            }
        };
    }
    let tau_ext = match ov.tau_ext.or(cfg.analysis.tau_ext) {
        Some(t) => check_range("tau_ext", t, 0.0, 1.0)?,
        None if grouping.partition.is_quasi() => TAU_EXT_QUASI,
        None => TAU_EXT_IDEAL,
    };
    classify_clusters(
        &mut clusters,
        &asm.ownership,
        &asm.units,
        &asm.group_of,
        tau_ext,
    );
    for w in &grouping.warnings {
        warn!("{w}");
    }
    Ok(Analysis {
        grouping,
        decomposition,
        modal,
        clusters,
        cluster_tol,
        tau_ext,
    })
}
