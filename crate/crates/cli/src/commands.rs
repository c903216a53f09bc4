//! The CLI verbs as library functions: each computes an outcome and, through
//! its `write_*` companion, emits the files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::info;
use serde::Serialize;
use symmod_core::lti::AssembledSystem;
use symmod_core::modal::{relative_change, Classification, InvarianceReport};
use symmod_core::network::build_network;
use symmod_core::simkit::{self, fmt15, Scenario, SimError, Trace};
use symmod_core::{linalg, Complex64};

use crate::config::{Change, SystemConfig, Variation};
use crate::error::{CliError, Result};
use crate::pipeline::{self, freq_hz, Analysis, Grouping, Overrides};
use crate::report;

/// Default invariance threshold in percent.
pub const DEFAULT_INVARIANCE_THRESHOLD: f64 = 1.0;
/// Peaks reported per probe in the simulation cross-check.
pub const CROSSCHECK_PEAKS: usize = 3;
/// Zero followed by five log-spaced collector impedances from 1e-4 to 1e-2
/// p.u.
pub fn default_sweep() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((0..5).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)))
        .collect()
}

/// Poles below this frequency count as low-frequency in the sweep summary.
pub const DEFAULT_SPLIT_HZ: f64 = 20.0;

pub(crate) fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| CliError::io(&path, e))
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

/// `classify`: grouping report only.
pub fn write_classify(g: &Grouping, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    write(out, "groups.json", &to_json(&report::grouping_report(g)))
}

/// `analyze`: eigenvalue, participation and gpf tables, clusters and pole map.
pub fn write_analysis(an: &Analysis, out: &Path, title: &str) -> Result<()> {
    ensure_dir(out)?;
    write(out, "eigenvalues.csv", &report::eigenvalues_csv(an))?;
    write(out, "participation.csv", &report::participation_csv(an))?;
    write(out, "gpf.csv", &report::gpf_csv(an))?;
    write(out, "clusters.json", &to_json(&report::clusters_report(an)))?;
    write(out, "polemap.svg", &report::polemap_svg(an, title))
}

/// Before/after analyses of one set of parameter changes.
#[derive(Debug, Clone)]
pub struct InvarianceOutcome {
    pub before: Analysis,
    pub after: Analysis,
    pub report: InvarianceReport,
    pub threshold: f64,
}

impl InvarianceOutcome {
    /// Largest member-wise RC of a tracked cluster.
    pub fn max_rc(&self, cluster: usize) -> Option<f64> {
        self.report.max_rc(cluster)
    }

    /// Diameter of the after-values paired with a tracked cluster.
    pub fn after_diameter(&self, cluster: usize) -> f64 {
        let v = self.report.after_values(cluster);
        let mut d: f64 = 0.0;
        for x in &v {
            for y in &v {
                d = d.max((x - y).norm());
            }
        }
        d
    }

    /// Tracked clusters (indices into `before.clusters`) with the given class.
    pub fn tracked<'a>(
        &'a self,
        pick: impl Fn(&Classification) -> bool + 'a,
    ) -> impl Iterator<Item = usize> + 'a {
        let tracked: std::collections::BTreeSet<usize> =
            self.report.entries.iter().map(|e| e.cluster).collect();
        tracked
            .into_iter()
            .filter(move |&c| pick(&self.before.clusters[c].classification))
    }
}

pub fn run_invariance(
    cfg: &SystemConfig,
    ov: &Overrides,
    vary: &[Variation],
) -> Result<InvarianceOutcome> {
    if vary.is_empty() {
        return Err(CliError::Config(
            "invariance needs at least one --vary".into(),
        ));
    }
    let before = pipeline::analyze(cfg, ov)?;
    let mut changed = cfg.clone();
    for v in vary {
        changed.set(&v.element, &v.param, v.change)?;
        info!(
            "{}.{}: {:?} -> {:?}",
            v.element,
            v.param,
            cfg.get(&v.element, &v.param),
            changed.get(&v.element, &v.param)
        );
    }
    // keep the clustering of the original system so cluster growth is visible
    let ov_after = Overrides {
        cluster_tol: Some(before.cluster_tol),
        ..*ov
    };
    let after = pipeline::analyze(&changed, &ov_after)?;
    let report = relative_change(&before.modal, &after.modal, &before.clusters)?;
    Ok(InvarianceOutcome {
        before,
        after,
        report,
        threshold: cfg
            .analysis
            .invariance_threshold
            .unwrap_or(DEFAULT_INVARIANCE_THRESHOLD),
    })
}

pub fn rc_csv(o: &InvarianceOutcome) -> String {
    let mut s = String::from(
        "cluster,classification,n_g,before_re,before_im,after_re,after_im,rc_percent,below_threshold,diameter_before,diameter_after\n",
    );
    for e in &o.report.entries {
        let cl = &o.before.clusters[e.cluster];
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            e.cluster,
            cl.classification.label(),
            cl.n_g(),
            fmt15(e.before.re),
            fmt15(e.before.im),
            fmt15(e.after.re),
            fmt15(e.after.im),
            fmt15(e.rc_percent),
            e.rc_percent < o.threshold,
            fmt15(cl.diameter),
            fmt15(o.after_diameter(e.cluster))
        );
    }
    s
}

pub fn write_invariance(o: &InvarianceOutcome, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    write(out, "rc.csv", &rc_csv(o))
}

/// One FFT peak compared with the nearest predicted mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCheck {
    pub probe: String,
    pub rank: usize,
    pub fft_hz: f64,
    pub amplitude: f64,
    pub resolution: f64,
    pub cluster: usize,
    pub predicted_hz: f64,
    pub classification: Classification,
}

impl CrossCheck {
    pub fn within_bin(&self) -> bool {
        (self.fft_hz.abs() - self.predicted_hz).abs() <= self.resolution
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub analysis: Analysis,
    pub trace: Trace,
    pub crosscheck: Vec<CrossCheck>,
}

fn assembled_with(cfg: &SystemConfig) -> std::result::Result<AssembledSystem, String> {
    build_network(&cfg.network())
        .map(|n| n.assembled)
        .map_err(|e| e.to_string())
}

/// Runs a scenario and compares the FFT peaks of every probe with the modal
/// frequencies. A diverged run yields the truncated trace and no cross-check.
pub fn run_simulation(
    cfg: &SystemConfig,
    ov: &Overrides,
    scenario: &Scenario,
) -> Result<SimulationOutcome> {
    let analysis = pipeline::analyze(cfg, ov)?;
    let inputs = &analysis.network().assembled.disturbances.labels;
    for d in &scenario.disturbances {
        let known = inputs.contains(&d.target)
            || d.target
                .rsplit_once('.')
                .is_some_and(|(e, p)| cfg.get(e, p).is_some());
        if !known {
            return Err(CliError::Config(format!(
                "disturbance target `{}` is neither an input ({}) nor a parameter",
                d.target,
                inputs.join(", ")
            )));
        }
    }
    let mut current = cfg.clone();
    let mut hook = |target: &str, magnitude: f64| -> std::result::Result<AssembledSystem, String> {
        let (element, param) = target
            .rsplit_once('.')
            .ok_or_else(|| format!("`{target}` is neither an input nor <element>.<param>"))?;
        current
            .set(element, param, Change::Add(magnitude))
            .map_err(|e| e.to_string())?;
        assembled_with(&current)
    };
    let mut sc = scenario.clone();
    sc.allow_divergence = true;
    let trace = simkit::simulate(&analysis.network().assembled, &sc, Some(&mut hook))?;
    let mut crosscheck = Vec::new();
    if !trace.diverged {
        for probe in &trace.probes {
            let peaks = match simkit::dominant_frequencies(&trace, probe, CROSSCHECK_PEAKS) {
                Ok(p) => p,
                Err(SimError::TraceTooShort { len }) => {
                    log::warn!("trace of {len} samples is too short for a spectrum");
                    break;
                }
                Err(e) => return Err(e.into()),
            };
            for (rank, p) in peaks.peaks.iter().enumerate() {
                let (cluster, predicted_hz) = analysis
                    .clusters
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.centroid.im >= 0.0)
                    .map(|(i, c)| (i, freq_hz(c.centroid).abs()))
                    .min_by(|a, b| {
                        (a.1 - p.frequency.abs())
                            .abs()
                            .total_cmp(&(b.1 - p.frequency.abs()).abs())
                    })
                    .unwrap_or((0, f64::NAN));
                crosscheck.push(CrossCheck {
                    probe: probe.clone(),
                    rank,
                    fft_hz: p.frequency,
                    amplitude: p.amplitude,
                    resolution: peaks.resolution,
                    cluster,
                    predicted_hz,
                    classification: analysis.clusters[cluster].classification.clone(),
                });
            }
        }
    }
    Ok(SimulationOutcome {
        analysis,
        trace,
        crosscheck,
    })
}

pub fn crosscheck_csv(rows: &[CrossCheck]) -> String {
    let mut s = String::from(
        "probe,rank,fft_hz,amplitude,resolution_hz,cluster,predicted_hz,classification,within_bin\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.probe,
            r.rank,
            fmt15(r.fft_hz),
            fmt15(r.amplitude),
            fmt15(r.resolution),
            r.cluster,
            fmt15(r.predicted_hz),
            r.classification.label(),
            r.within_bin()
        );
    }
    s
}

/// Writes `trace.csv` and `modal_crosscheck.csv`; a diverged run is an error
/// unless the scenario allows it.
pub fn write_simulation(o: &SimulationOutcome, scenario: &Scenario, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    write(out, "trace.csv", &o.trace.to_csv())?;
    write(out, "modal_crosscheck.csv", &crosscheck_csv(&o.crosscheck))?;
    if o.trace.diverged && !scenario.allow_divergence {
        let t = o.trace.time.last().copied().unwrap_or(0.0);
        return Err(CliError::Divergence(format!(
            "state magnitude limit exceeded at t = {t} s"
        )));
    }
    Ok(())
}

/// Poles of the string and parallel variants paired at one collector impedance.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub z: f64,
    /// `(string, parallel, distance)`, sorted by parallel pole frequency.
    pub pairs: Vec<(Complex64, Complex64, f64)>,
}

impl SweepPoint {
    pub fn max_distance(&self) -> f64 {
        self.pairs.iter().map(|p| p.2).fold(0.0, f64::max)
    }

    /// Largest distance among parallel poles with `|f|` below (`low`) or at or
    /// above `split_hz`.
    pub fn max_distance_band(&self, split_hz: f64, low: bool) -> f64 {
        self.pairs
            .iter()
            .filter(|p| (freq_hz(p.1).abs() < split_hz) == low)
            .map(|p| p.2)
            .fold(0.0, f64::max)
    }
}

pub fn run_string_vs_parallel(cfg: &SystemConfig, sweep: &[f64]) -> Result<Vec<SweepPoint>> {
    let spec = cfg.network();
    if !spec.has_collectors() {
        return Err(CliError::Config(
            "no line is marked as a collector segment".into(),
        ));
    }
    if let Some(z) = sweep.iter().find(|z| !(z.is_finite() && **z >= 0.0)) {
        return Err(CliError::Config(format!(
            "collector impedance must be non-negative, got {z}"
        )));
    }
    let eig = |s: &symmod_core::network::NetworkSpec| -> Result<Vec<Complex64>> {
        let net = build_network(s)?;
        linalg::eigenvalues(net.assembled.a())
            .ok_or_else(|| CliError::Numerical("eigensolver did not converge".into()))
    };
    let parallel = eig(&spec.parallel_variant())?;
    sweep
        .iter()
        .map(|&z| {
            let string = eig(&spec.with_collector_impedance(z))?;
            if string.len() != parallel.len() {
                return Err(CliError::Numerical(format!(
                    "string variant has {} poles, parallel {}",
                    string.len(),
                    parallel.len()
                )));
            }
            let mut pairs: Vec<(Complex64, Complex64, f64)> =
                linalg::match_greedy(&string, &parallel)
                    .into_iter()
                    .map(|(i, j, d)| (string[i], parallel[j], d))
                    .collect();
            pairs.sort_by(|a, b| {
                freq_hz(a.1)
                    .total_cmp(&freq_hz(b.1))
                    .then(a.1.re.total_cmp(&b.1.re))
            });
            Ok(SweepPoint { z, pairs })
        })
        .collect()
}

pub fn write_string_vs_parallel(points: &[SweepPoint], split_hz: f64, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let mut sweep = format!("z_collector,max_distance,max_distance_below_{split_hz}hz,max_distance_above_{split_hz}hz\n");
    let mut poles = String::from(
        "z_collector,index,string_re,string_im,parallel_re,parallel_im,freq_hz,distance\n",
    );
    for p in points {
        let _ = writeln!(
            sweep,
            "{},{},{},{}",
            fmt15(p.z),
            fmt15(p.max_distance()),
            fmt15(p.max_distance_band(split_hz, true)),
            fmt15(p.max_distance_band(split_hz, false))
        );
        for (k, (s, q, d)) in p.pairs.iter().enumerate() {
            let _ = writeln!(
                poles,
                "{},{k},{},{},{},{},{},{}",
                fmt15(p.z),
                fmt15(s.re),
                fmt15(s.im),
                fmt15(q.re),
                fmt15(q.im),
                fmt15(freq_hz(*q)),
                fmt15(*d)
            );
        }
    }
    write(out, "sweep.csv", &sweep)?;
    write(out, "poles.csv", &poles)
}
