//! Tables, `clusters.json` and the pole map.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use symmod_core::lti::Owner;
use symmod_core::modal::{classify_clusters, Classification, ModeCluster};
use symmod_core::simkit::fmt15;
use symmod_core::symmetry::SymmetryClass;
use symmod_core::Complex64;

use crate::pipeline::{damping_ratio, freq_hz, Analysis, Grouping};

pub const GRID_OWNER: &str = "external_grid";

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

/// `index,re,im,freq_hz,damping_ratio,cluster,classification`.
pub fn eigenvalues_csv(an: &Analysis) -> String {
    let cluster_of = an.cluster_of();
    let mut out = String::from("index,re,im,freq_hz,damping_ratio,cluster,classification\n");
    for (i, z) in an.modal.eigenvalues.iter().enumerate() {
        let c = cluster_of[i];
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{c},{}",
            fmt15(z.re),
            fmt15(z.im),
            fmt15(freq_hz(*z)),
            fmt15(damping_ratio(*z)),
            an.clusters[c].classification.label()
        );
    }
    out
}

/// Participation magnitudes `|pf_ki|`: one row per state, one column per mode.
pub fn participation_csv(an: &Analysis) -> String {
    let states = an.network().assembled.model.states();
    let n = an.modal.n();
    let mut out = String::from("state");
    for i in 0..n {
        let _ = write!(out, ",mode_{i}");
    }
    out.push('\n');
    for (k, s) in states.iter().enumerate() {
        out.push_str(s);
        for i in 0..n {
            out.push(',');
            out.push_str(&fmt15(an.modal.pf[(k, i)].norm()));
        }
        out.push('\n');
    }
    out
}

fn owner_label(an: &Analysis, k: usize) -> String {
    let asm = &an.network().assembled;
    match asm.ownership[k] {
        Owner::ExternalGrid => GRID_OWNER.to_string(),
        Owner::Unit(u) => asm.units[u].clone(),
    }
}

/// `cluster,classification,state,owner,re,im,abs`, one row per state of
/// every cluster that has a gpf.
pub fn gpf_csv(an: &Analysis) -> String {
    let states = an.network().assembled.model.states();
    let mut out = String::from("cluster,classification,state,owner,re,im,abs\n");
    for (c, cl) in an.clusters.iter().enumerate() {
        let Some(g) = &cl.gpf else { continue };
        let class = cl.classification.label();
        for (k, s) in states.iter().enumerate() {
            let _ = writeln!(
                out,
                "{c},{class},{s},{},{},{},{}",
                owner_label(an, k),
                fmt15(g[k].re),
                fmt15(g[k].im),
                fmt15(g[k].norm())
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub id: String,
    pub members: Vec<String>,
    pub class: SymmetryClass,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEntry {
    pub label: String,
    /// Unit id or `external_grid`.
    pub owner: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub id: usize,
    pub members: Vec<usize>,
    pub eigenvalues: Vec<[f64; 2]>,
    pub centroid: [f64; 2],
    pub freq_hz: f64,
    pub damping_ratio: f64,
    pub n_g: usize,
    pub diameter: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometric_multiplicity: Option<usize>,
    pub classification: Classification,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_participation: Option<f64>,
    #[serde(default)]
    pub group_mass: BTreeMap<String, f64>,
    /// Per-state `[re, im]` in state order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gpf: Option<Vec<[f64; 2]>>,
}

/// Grouping report (`classify`) and, after analysis, the clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersFile {
    pub symmetry: String,
    pub tol_quasi: f64,
    pub groups: Vec<GroupEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_ext: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<StateEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clusters: Vec<ClusterEntry>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

pub fn grouping_report(g: &Grouping) -> ClustersFile {
    ClustersFile {
        symmetry: g.symmetry().as_str().to_string(),
        tol_quasi: g.tol_quasi,
        groups: g
            .partition
            .groups
            .iter()
            .map(|gr| GroupEntry {
                id: gr.id.clone(),
                members: gr.member_ids.clone(),
                class: gr.class,
                deviation: gr.deviation,
            })
            .collect(),
        cluster_tol: None,
        tau_ext: None,
        states: Vec::new(),
        clusters: Vec::new(),
        warnings: g.warnings.clone(),
    }
}

pub fn clusters_report(an: &Analysis) -> ClustersFile {
    let mut f = grouping_report(&an.grouping);
    f.cluster_tol = Some(an.cluster_tol);
    f.tau_ext = Some(an.tau_ext);
    f.states = an
        .network()
        .assembled
        .model
        .states()
        .iter()
        .enumerate()
        .map(|(k, s)| StateEntry {
            label: s.clone(),
            owner: owner_label(an, k),
        })
        .collect();
    f.clusters = an
        .clusters
        .iter()
        .enumerate()
        .map(|(id, cl)| ClusterEntry {
            id,
            members: cl.members.clone(),
            eigenvalues: cl
                .members
                .iter()
                .map(|&i| pair(an.modal.eigenvalues[i]))
                .collect(),
            centroid: pair(cl.centroid),
            freq_hz: freq_hz(cl.centroid),
            damping_ratio: damping_ratio(cl.centroid),
            n_g: cl.n_g(),
            diameter: cl.diameter,
            geometric_multiplicity: cl.geometric_multiplicity,
            classification: cl.classification.clone(),
            grid_participation: an.grid_participation(cl),
            group_mass: an.group_mass(cl),
            gpf: cl
                .gpf
                .as_ref()
                .map(|g| g.iter().map(|z| pair(*z)).collect()),
        })
        .collect();
    f
}

/// Re-derives the classification of every cluster from the stored gpf.
pub fn reclassify(file: &ClustersFile) -> Vec<Classification> {
    let mut units: Vec<String> = Vec::new();
    let ownership: Vec<Owner> = file
        .states
        .iter()
        .map(|s| {
            if s.owner == GRID_OWNER {
                Owner::ExternalGrid
            } else {
                let k = units.iter().position(|u| *u == s.owner).unwrap_or_else(|| {
                    units.push(s.owner.clone());
                    units.len() - 1
                });
                Owner::Unit(k)
            }
        })
        .collect();
    let mut group_of = BTreeMap::new();
    for g in &file.groups {
        for m in &g.members {
            group_of.insert(m.clone(), g.id.clone());
        }
    }
    let mut clusters: Vec<ModeCluster> = file
        .clusters
        .iter()
        .map(|c| ModeCluster {
            members: c.members.clone(),
            centroid: Complex64::new(c.centroid[0], c.centroid[1]),
            radius: 0.5 * c.diameter,
            diameter: c.diameter,
            geometric_multiplicity: c.geometric_multiplicity,
            classification: Classification::Unclassified,
            gpf: c
                .gpf
                .as_ref()
                .map(|g| g.iter().map(|p| Complex64::new(p[0], p[1])).collect()),
        })
        .collect();
    classify_clusters(
        &mut clusters,
        &ownership,
        &units,
        &group_of,
        file.tau_ext.unwrap_or(symmod_core::modal::TAU_EXT_IDEAL),
    );
    clusters.into_iter().map(|c| c.classification).collect()
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 60.0;
const INNER_COLOR: &str = "#f28e2b";
const GRID_COLOR: &str = "#1f77b4";
const OTHER_COLOR: &str = "#7f7f7f";

fn nice_step(span: f64) -> f64 {
    let raw = span / 8.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    mag * if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    }
}

fn svg_num(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// 800x600 pole map: real axis horizontal, conjugate pairs both drawn,
/// inner-group modes orange, group-grid modes blue.
pub fn polemap_svg(an: &Analysis, title: &str) -> String {
    let cluster_of = an.cluster_of();
    let ev = &an.modal.eigenvalues;
    let (mut x0, mut x1, mut y0, mut y1) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for z in ev {
        x0 = x0.min(z.re);
        x1 = x1.max(z.re);
        y0 = y0.min(z.im);
        y1 = y1.max(z.im);
    }
    let pad = |a: f64, b: f64| {
        let s = (b - a).max(1.0);
        (a - 0.05 * s, b + 0.05 * s)
    };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = pad(y0, y1);
    let pw = WIDTH - 2.0 * MARGIN;
    let ph = HEIGHT - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<!-- symmod {} -->"#, env!("CARGO_PKG_VERSION"));
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        xml_escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let step_x = nice_step(x1 - x0);
    let mut t = (x0 / step_x).ceil() * step_x;
    while t <= x1 {
        let x = sx(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{MARGIN}" x2="{x:.2}" y2="{}" stroke="#e0e0e0"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
            HEIGHT - MARGIN,
            HEIGHT - MARGIN + 16.0,
            svg_num(t)
        );
        t += step_x;
    }
    let step_y = nice_step(y1 - y0);
    let mut t = (y0 / step_y).ceil() * step_y;
    while t <= y1 {
        let y = sy(t);
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            WIDTH - MARGIN,
            MARGIN - 6.0,
            y + 4.0,
            svg_num(t)
        );
        t += step_y;
    }
    if x0 < 0.0 && x1 > 0.0 {
        let _ = writeln!(
            s,
            r#"<line x1="{0:.2}" y1="{MARGIN}" x2="{0:.2}" y2="{1}" stroke="black" stroke-dasharray="4 3"/>"#,
            sx(0.0),
            HEIGHT - MARGIN
        );
    }
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            s,
            r#"<line x1="{MARGIN}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="black" stroke-dasharray="4 3"/>"#,
            sy(0.0),
            WIDTH - MARGIN
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">Re(λ) [1/s]</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">Im(λ) [rad/s]</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, z) in ev.iter().enumerate() {
        let color = match an.clusters[cluster_of[i]].classification {
            Classification::InnerGroup(_) => INNER_COLOR,
            Classification::GroupGrid => GRID_COLOR,
            Classification::Unclassified => OTHER_COLOR,
        };
        let _ = writeln!(
            s,
            r#"<g stroke="{color}" stroke-width="1.5"><line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/></g>"#,
            sx(z.re) - 4.0,
            sy(z.im) - 4.0,
            sx(z.re) + 4.0,
            sy(z.im) + 4.0,
            sx(z.re) - 4.0,
            sy(z.im) + 4.0,
            sx(z.re) + 4.0,
            sy(z.im) - 4.0
        );
    }
    for (k, (label, color)) in [
        ("inner-group", INNER_COLOR),
        ("group-grid", GRID_COLOR),
        ("unclassified", OTHER_COLOR),
    ]
    .iter()
    .enumerate()
    {
        let y = MARGIN + 14.0 + 16.0 * k as f64;
        let x = WIDTH - MARGIN - 110.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{y}">{label}</text>"#,
            y - 9.0,
            x + 16.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
