//! Linear time-domain simulation of assembled systems and FFT peak picking.
//!
//! Between events the model is LTI with piecewise-constant inputs, so every
//! segment is propagated exactly with the matrix exponential of
//! `[[A, B], [0, 0]] dt` (zero-order hold). Events falling between grid
//! points split the step.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::linalg::{self, CMat};
use crate::lti::AssembledSystem;

/// Any state magnitude above this ends the run.
pub const DIVERGENCE_LIMIT: f64 = 1e6;
/// Shortest trace accepted by [`dominant_frequencies`].
pub const MIN_FFT_SAMPLES: usize = 64;
/// Longest default step.
pub const MAX_DEFAULT_STEP: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("state magnitude exceeded {DIVERGENCE_LIMIT:e} at t = {time} s")]
    DivergenceDetected { time: f64, trace: Box<Trace> },
    #[error("trace has {len} samples, at least {MIN_FFT_SAMPLES} are needed")]
    TraceTooShort { len: usize },
    #[error("unknown probe `{0}`")]
    UnknownProbe(String),
    #[error("re-assembly for `{target}` failed: {reason}")]
    Reassembly { target: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    Step,
    Impulse,
}

/// A scripted change at `time`. `target` names a disturbance input of the
/// assembled system (for example `grid.v_q` or `gfm2.P_set`) or, when a
/// re-assembly hook is supplied, a parameter `<element>.<param>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub time: f64,
    pub target: String,
    pub kind: DisturbanceKind,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub duration: f64,
    /// Sampling step; derived from the spectrum when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    pub probes: Vec<String>,
    /// Initial state deviations by state label.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub initial_state: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_divergence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub scenario_hash: String,
    pub model_hash: String,
    pub step: f64,
}

/// Sampled probe signals on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub time: Vec<f64>,
    pub probes: Vec<String>,
    /// One sample vector per probe.
    pub samples: Vec<Vec<Complex64>>,
    /// Set when the run stopped early on divergence.
    pub diverged: bool,
    pub meta: TraceMeta,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn probe(&self, label: &str) -> Option<&[Complex64]> {
        self.probes
            .iter()
            .position(|p| p == label)
            .map(|i| self.samples[i].as_slice())
    }

    /// CSV with a `time` column and one column per probe (`.re`/`.im` pairs
    /// for probes with a nonzero imaginary part), 15 significant digits.
    pub fn to_csv(&self) -> String {
        let complex: Vec<bool> = self
            .samples
            .iter()
            .map(|s| s.iter().any(|z| z.im != 0.0))
            .collect();
        let mut out = String::from("time");
        for (p, c) in self.probes.iter().zip(&complex) {
            if *c {
                out.push_str(&format!(",{p}.re,{p}.im"));
            } else {
                out.push_str(&format!(",{p}"));
            }
        }
        out.push('\n');
        for k in 0..self.len() {
            out.push_str(&fmt15(self.time[k]));
            for (s, c) in self.samples.iter().zip(&complex) {
                out.push(',');
                out.push_str(&fmt15(s[k].re));
                if *c {
                    out.push(',');
                    out.push_str(&fmt15(s[k].im));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Fixed 15-significant-digit scientific notation.
pub fn fmt15(v: f64) -> String {
    format!("{v:.14e}")
}

/// Re-assembly callback for parameter disturbances: receives the target and
/// the step magnitude, returns the modified system.
pub type Reassemble<'a> = dyn FnMut(&str, f64) -> Result<AssembledSystem, String> + 'a;

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn model_hash(a: &CMat, b: &CMat) -> String {
    let mut bytes = Vec::new();
    for m in [a, b] {
        bytes.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
        bytes.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
        for z in m.iter() {
            bytes.extend_from_slice(&z.re.to_le_bytes());
            bytes.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    sha256_hex(&bytes)
}

fn scenario_hash(s: &Scenario) -> String {
    let mut text = format!("{}|{:?}|{}|", s.duration, s.step, s.allow_divergence);
    for d in &s.disturbances {
        text.push_str(&format!(
            "{}:{}:{:?}:{};",
            d.time, d.target, d.kind, d.magnitude
        ));
    }
    text.push('|');
    text.push_str(&s.probes.join(","));
    text.push('|');
    for (k, v) in &s.initial_state {
        text.push_str(&format!("{k}={v};"));
    }
    sha256_hex(text.as_bytes())
}

/// `min(1e-4, 1 / (50 f_max))` with `f_max = max |Im lambda| / 2 pi`.
pub fn default_step(a: &CMat) -> f64 {
    let fmax = linalg::eigenvalues(a)
        .unwrap_or_default()
        .iter()
        .map(|z| z.im.abs() / (2.0 * std::f64::consts::PI))
        .fold(0.0, f64::max);
    if fmax > 0.0 {
        MAX_DEFAULT_STEP.min(1.0 / (50.0 * fmax))
    } else {
        MAX_DEFAULT_STEP
    }
}

/// Exact ZOH pair `(Phi, Gamma)` for one interval.
fn discretize(a: &CMat, b: &CMat, dt: f64) -> (CMat, CMat) {
    let n = a.nrows();
    let m = b.ncols();
    let mut aug = CMat::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n))
        .copy_from(&(a * Complex64::new(dt, 0.0)));
    aug.view_mut((0, n), (n, m))
        .copy_from(&(b * Complex64::new(dt, 0.0)));
    let e = linalg::expm(&aug);
    (
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    )
}

struct Readout {
    states: CMat,
    inputs: CMat,
}

fn readout(sys: &AssembledSystem, probes: &[String]) -> Result<Readout, SimError> {
    let n = sys.n_states();
    let m = sys.disturbances.labels.len();
    let mut states = CMat::zeros(probes.len(), n);
    let mut inputs = CMat::zeros(probes.len(), m);
    for (r, p) in probes.iter().enumerate() {
        if let Some(k) = sys.model.state_index(p) {
            states[(r, k)] = Complex64::new(1.0, 0.0);
        } else if let Some(k) = sys.probes.labels.iter().position(|l| l == p) {
            states.row_mut(r).copy_from(&sys.probes.states.row(k));
            inputs.row_mut(r).copy_from(&sys.probes.feedthrough.row(k));
        } else {
            return Err(SimError::UnknownProbe(p.clone()));
        }
    }
    Ok(Readout { states, inputs })
}

fn validate(s: &Scenario, step: f64) -> Result<(), SimError> {
    let bad = |m: String| Err(SimError::InvalidScenario(m));
    if !(step > 0.0 && step.is_finite()) {
        return bad(format!("step must be positive, got {step}"));
    }
    if !(s.duration.is_finite() && s.duration >= 10.0 * step) {
        return bad(format!(
            "duration {} is shorter than 10 steps of {step}",
            s.duration
        ));
    }
    for d in &s.disturbances {
        if !(0.0..=s.duration).contains(&d.time) {
            return bad(format!(
                "disturbance on `{}` at t = {} lies outside [0, {}]",
                d.target, d.time, s.duration
            ));
        }
        if !d.magnitude.is_finite() {
            return bad(format!(
                "disturbance on `{}` has a non-finite magnitude",
                d.target
            ));
        }
    }
    if s.probes.is_empty() {
        return bad("no probes".into());
    }
    Ok(())
}

struct Stepper {
    sys: AssembledSystem,
    phi: CMat,
    gamma: CMat,
    h: f64,
    out: Readout,
}

impl Stepper {
    fn new(sys: AssembledSystem, h: f64, probes: &[String]) -> Result<Self, SimError> {
        let (phi, gamma) = discretize(sys.a(), &sys.disturbances.matrix, h);
        let out = readout(&sys, probes)?;
        Ok(Self {
            sys,
            phi,
            gamma,
            h,
            out,
        })
    }

    fn advance(
        &self,
        x: &nalgebra::DVector<Complex64>,
        u: &nalgebra::DVector<Complex64>,
        dt: f64,
    ) -> nalgebra::DVector<Complex64> {
        if dt <= 0.0 {
            return x.clone();
        }
        if (dt - self.h).abs() <= 1e-12 * self.h {
            &self.phi * x + &self.gamma * u
        } else {
            let (p, g) = discretize(self.sys.a(), &self.sys.disturbances.matrix, dt);
            p * x + g * u
        }
    }
}

/// Simulates `system` under `scenario`. Parameter disturbances need
/// `reassemble`; states are carried over by label.
pub fn simulate(
    system: &AssembledSystem,
    scenario: &Scenario,
    mut reassemble: Option<&mut Reassemble<'_>>,
) -> Result<Trace, SimError> {
    let h = scenario.step.unwrap_or_else(|| default_step(system.a()));
    validate(scenario, h)?;
    let steps = (scenario.duration / h).round() as usize;

    let mut st = Stepper::new(system.clone(), h, &scenario.probes)?;
    let meta = TraceMeta {
        scenario_hash: scenario_hash(scenario),
        model_hash: model_hash(system.a(), &system.disturbances.matrix),
        step: h,
    };
    for d in &scenario.disturbances {
        let is_input = system.disturbances.labels.contains(&d.target);
        if !is_input && reassemble.is_none() {
            return Err(SimError::InvalidScenario(format!(
                "`{}` is not a disturbance input of the system",
                d.target
            )));
        }
        if !is_input && d.kind == DisturbanceKind::Impulse {
            return Err(SimError::InvalidScenario(format!(
                "impulse on parameter `{}`",
                d.target
            )));
        }
    }

    let n = system.n_states();
    let mut x = nalgebra::DVector::<Complex64>::zeros(n);
    for (label, v) in &scenario.initial_state {
        let k = system.model.state_index(label).ok_or_else(|| {
            SimError::InvalidScenario(format!("unknown state `{label}` in initial_state"))
        })?;
        x[k] = Complex64::new(*v, 0.0);
    }
    let mut u = nalgebra::DVector::<Complex64>::zeros(system.disturbances.labels.len());
    let mut events: Vec<&Disturbance> = scenario.disturbances.iter().collect();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut next = 0;

    let mut trace = Trace {
        time: Vec::with_capacity(steps + 1),
        probes: scenario.probes.clone(),
        samples: vec![Vec::with_capacity(steps + 1); scenario.probes.len()],
        diverged: false,
        meta,
    };

    let mut apply = |st: &mut Stepper,
                     x: &mut nalgebra::DVector<Complex64>,
                     u: &mut nalgebra::DVector<Complex64>,
                     d: &Disturbance|
     -> Result<(), SimError> {
        if let Some(k) = st
            .sys
            .disturbances
            .labels
            .iter()
            .position(|l| *l == d.target)
        {
            let mag = Complex64::new(d.magnitude, 0.0);
            match d.kind {
                DisturbanceKind::Step => u[k] += mag,
                DisturbanceKind::Impulse => {
                    let col = st.sys.disturbances.matrix.column(k) * mag;
                    *x += col;
                }
            }
            return Ok(());
        }
        let hook = reassemble
            .as_mut()
            .ok_or_else(|| SimError::InvalidScenario(d.target.clone()))?;
        let new = hook(&d.target, d.magnitude).map_err(|reason| SimError::Reassembly {
            target: d.target.clone(),
            reason,
        })?;
        let mut nx = nalgebra::DVector::<Complex64>::zeros(new.n_states());
        for (i, label) in new.model.states().iter().enumerate() {
            if let Some(j) = st.sys.model.state_index(label) {
                nx[i] = x[j];
            }
        }
        let mut nu = nalgebra::DVector::<Complex64>::zeros(new.disturbances.labels.len());
        for (i, label) in new.disturbances.labels.iter().enumerate() {
            if let Some(j) = st.sys.disturbances.labels.iter().position(|l| l == label) {
                nu[i] = u[j];
            }
        }
        log::debug!("re-assembled for `{}` at t = {}", d.target, d.time);
        *st = Stepper::new(new, st.h, &scenario.probes)?;
        *x = nx;
        *u = nu;
        Ok(())
    };

    for k in 0..=steps {
        let t = k as f64 * h;
        while next < events.len() && events[next].time <= t + 1e-12 * h {
            apply(&mut st, &mut x, &mut u, events[next])?;
            next += 1;
        }
        trace.time.push(t);
        let y = &st.out.states * &x + &st.out.inputs * &u;
        for (s, v) in trace.samples.iter_mut().zip(y.iter()) {
            s.push(*v);
        }
        if x.iter()
            .any(|z| !z.is_finite() || z.norm() > DIVERGENCE_LIMIT)
        {
            trace.diverged = true;
            log::warn!("simulation diverged at t = {t}");
            if scenario.allow_divergence {
                return Ok(trace);
            }
            return Err(SimError::DivergenceDetected {
                time: t,
                trace: Box::new(trace),
            });
        }
        if k == steps {
            break;
        }
        let t_end = t + h;
        let mut t_cur = t;
        while next < events.len() && events[next].time < t_end - 1e-12 * h {
            let te = events[next].time;
            x = st.advance(&x, &u, te - t_cur);
            t_cur = te;
            apply(&mut st, &mut x, &mut u, events[next])?;
            next += 1;
        }
        x = st.advance(&x, &u, t_end - t_cur);
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Hz; signed for complex signals.
    pub frequency: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    /// Bin spacing `1 / (N dt)` in Hz.
    pub resolution: f64,
    pub peaks: Vec<Peak>,
}

/// Largest local maxima of the Hann-windowed spectrum of one probe,
/// excluding DC. The mean is removed before windowing.
pub fn dominant_frequencies(
    trace: &Trace,
    probe: &str,
    n_peaks: usize,
) -> Result<PeakReport, SimError> {
    let samples = trace
        .probe(probe)
        .ok_or_else(|| SimError::UnknownProbe(probe.to_string()))?;
    let n = samples.len();
    if n < MIN_FFT_SAMPLES {
        return Err(SimError::TraceTooShort { len: n });
    }
    let dt = trace.meta.step;
    let real = samples.iter().all(|z| z.im == 0.0);
    let mean = samples.iter().sum::<Complex64>() / n as f64;
    let w: Vec<f64> = (0..n)
        .map(|k| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos()))
        .collect();
    let wsum: f64 = w.iter().sum();
    let mut buf: Vec<Complex64> = samples
        .iter()
        .zip(&w)
        .map(|(z, wk)| (z - mean) * wk)
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mag: Vec<f64> = buf.iter().map(|z| z.norm() / wsum).collect();
    let resolution = 1.0 / (n as f64 * dt);

    let bins: Vec<usize> = if real {
        (1..=n / 2).collect()
    } else {
        (1..n).collect()
    };
    // DC keeps its windowed value so a slow trend does not peak at bin 1
    let at = |k: isize| -> f64 { mag[k.rem_euclid(n as isize) as usize] };
    let mut peaks: Vec<Peak> = bins
        .iter()
        .filter(|&&k| {
            let k = k as isize;
            at(k) > at(k - 1) && at(k) >= at(k + 1)
        })
        .map(|&k| {
            let signed = if k > n / 2 {
                k as f64 - n as f64
            } else {
                k as f64
            };
            Peak {
                frequency: signed * resolution,
                amplitude: if real { 2.0 * mag[k] } else { mag[k] },
            }
        })
        .collect();
    peaks.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    peaks.truncate(n_peaks);
    Ok(PeakReport { resolution, peaks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cplx;
    use crate::lti::{self, Channels, Owner, Probes, StateSpaceModel};

    fn scalar(a: f64) -> AssembledSystem {
        let model =
            StateSpaceModel::closed(CMat::from_element(1, 1, cplx(a, 0.0)), vec!["x".into()])
                .unwrap();
        AssembledSystem {
            model,
            ownership: vec![Owner::Unit(0)],
            units: vec!["u".into()],
            group_of: BTreeMap::new(),
            disturbances: Channels {
                matrix: CMat::from_element(1, 1, cplx(1.0, 0.0)),
                labels: vec!["u.w".into()],
            },
            probes: Probes::none(1, 1),
            interconnection: None,
        }
    }

    fn scenario(duration: f64, step: f64) -> Scenario {
        Scenario {
            duration,
            step: Some(step),
            disturbances: vec![],
            probes: vec!["x".into()],
            initial_state: BTreeMap::from([("x".into(), 1.0)]),
            allow_divergence: false,
        }
    }

    #[test]
    fn scalar_decay_matches_closed_form() {
        let tr = simulate(&scalar(-1.0), &scenario(5.0, 0.01), None).unwrap();
        let err = tr
            .time
            .iter()
            .zip(tr.probe("x").unwrap())
            .map(|(t, x)| (x.re - (-t).exp()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        assert_eq!(tr.len(), 501);
    }

    #[test]
    fn unstable_scalar_diverges() {
        let r = simulate(&scalar(1.0), &scenario(20.0, 0.01), None);
        let Err(SimError::DivergenceDetected { trace, time }) = r else {
            panic!("expected divergence")
        };
        assert!(trace.diverged && time > 13.0 && time < 14.5);
        let mut s = scenario(20.0, 0.01);
        s.allow_divergence = true;
        assert!(simulate(&scalar(1.0), &s, None).unwrap().diverged);
    }

    #[test]
    fn step_between_samples_splits_the_interval() {
        // x' = -x + w, step of 1 at t = 0.105: x(t) = 1 - exp(-(t - 0.105))
        let mut s = scenario(1.0, 0.01);
        s.initial_state.clear();
        s.disturbances.push(Disturbance {
            time: 0.105,
            target: "u.w".into(),
            kind: DisturbanceKind::Step,
            magnitude: 1.0,
        });
        let tr = simulate(&scalar(-1.0), &s, None).unwrap();
        for (t, x) in tr.time.iter().zip(tr.probe("x").unwrap()) {
            let exact = if *t < 0.105 {
                0.0
            } else {
                1.0 - (-(t - 0.105)).exp()
            };
            assert!((x.re - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_jumps_the_state() {
        let mut s = scenario(1.0, 0.1);
        s.initial_state.clear();
        s.disturbances.push(Disturbance {
            time: 0.0,
            target: "u.w".into(),
            kind: DisturbanceKind::Impulse,
            magnitude: 2.0,
        });
        let tr = simulate(&scalar(-1.0), &s, None).unwrap();
        assert!((tr.probe("x").unwrap()[0].re - 2.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut s = scenario(1.0, 0.01);
        s.disturbances.push(Disturbance {
            time: 2.0,
            target: "u.w".into(),
            kind: DisturbanceKind::Step,
            magnitude: 1.0,
        });
        assert!(matches!(
            simulate(&scalar(-1.0), &s, None),
            Err(SimError::InvalidScenario(_))
        ));
        assert!(matches!(
            simulate(&scalar(-1.0), &scenario(0.05, 0.01), None),
            Err(SimError::InvalidScenario(_))
        ));
        let mut s = scenario(1.0, 0.01);
        s.probes = vec!["nope".into()];
        assert!(matches!(
            simulate(&scalar(-1.0), &s, None),
            Err(SimError::UnknownProbe(_))
        ));
    }

    #[test]
    fn parameter_step_reassembles_and_carries_state() {
        let mut s = scenario(2.0, 0.01);
        s.disturbances.push(Disturbance {
            time: 1.0,
            target: "u.a".into(),
            kind: DisturbanceKind::Step,
            magnitude: -1.0,
        });
        let mut hook = |target: &str, mag: f64| -> Result<AssembledSystem, String> {
            assert_eq!(target, "u.a");
            Ok(scalar(-1.0 + mag))
        };
        let tr = simulate(&scalar(-1.0), &s, Some(&mut hook)).unwrap();
        let x = tr.probe("x").unwrap();
        let exact = (-1.0f64).exp() * (-2.0f64).exp();
        assert!((x[200].re - exact).abs() < 1e-12);
        assert!(simulate(&scalar(-1.0), &s, None).is_err());
    }

    fn synthetic(f: f64, sigma: f64, duration: f64, dt: f64) -> Trace {
        let n = (duration / dt) as usize;
        let time: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let x = time
            .iter()
            .map(|t| {
                cplx(
                    (-sigma * t).exp() * (2.0 * std::f64::consts::PI * f * t).cos(),
                    0.0,
                )
            })
            .collect();
        Trace {
            time,
            probes: vec!["y".into()],
            samples: vec![x],
            diverged: false,
            meta: TraceMeta {
                scenario_hash: String::new(),
                model_hash: String::new(),
                step: dt,
            },
        }
    }

    #[test]
    fn fft_finds_synthetic_peak() {
        let tr = synthetic(5.0, 0.1, 10.0, 1e-3);
        let rep = dominant_frequencies(&tr, "y", 3).unwrap();
        assert!((rep.resolution - 0.1).abs() < 1e-12);
        assert!((rep.peaks[0].frequency - 5.0).abs() <= 0.1, "{rep:?}");
    }

    #[test]
    fn short_trace_is_rejected() {
        let tr = synthetic(5.0, 0.1, 0.05, 1e-3);
        assert!(matches!(
            dominant_frequencies(&tr, "y", 1),
            Err(SimError::TraceTooShort { len: 50 })
        ));
    }

    #[test]
    fn rl_grid_step_rings_at_the_group_grid_frequency() {
        let (r, l, rl, rg, lg) = (0.01, 0.01, 0.02, 0.005, 0.02);
        let sys = lti::assemble_rl_example(r, l, rl, rg, lg, 0.0).unwrap();
        let sys = AssembledSystem {
            disturbances: Channels {
                matrix: CMat::from_fn(4, 1, |i, _| cplx(if i == 3 { 1.0 / lg } else { 0.0 }, 0.0)),
                labels: vec!["grid.v".into()],
            },
            ..sys
        };
        // a rotating grid frame makes the response oscillate at Im(lambda)
        let w = 2.0 * std::f64::consts::PI * 5.0;
        let sys = AssembledSystem {
            model: StateSpaceModel::closed(
                sys.a() - CMat::identity(4, 4) * cplx(0.0, w),
                sys.model.states().to_vec(),
            )
            .unwrap(),
            ..sys
        };
        let s = Scenario {
            duration: 10.0,
            step: Some(1e-3),
            disturbances: vec![Disturbance {
                time: 0.0,
                target: "grid.v".into(),
                kind: DisturbanceKind::Impulse,
                magnitude: 1.0,
            }],
            probes: vec!["grid.i".into()],
            initial_state: BTreeMap::new(),
            allow_divergence: false,
        };
        let tr = simulate(&sys, &s, None).unwrap();
        let rep = dominant_frequencies(&tr, "grid.i", 1).unwrap();
        let ev = linalg::eigenvalues(sys.a()).unwrap();
        let target = ev
            .iter()
            .filter(|z| (z.re + (r / l)).abs() > 1e-6)
            .max_by(|a, b| a.re.total_cmp(&b.re))
            .unwrap();
        assert!(
            (rep.peaks[0].frequency - target.im / (2.0 * std::f64::consts::PI)).abs()
                <= rep.resolution,
            "{rep:?} {ev:?}"
        );
    }

    #[test]
    fn passive_rl_energy_never_grows() {
        let (r, l, rl, rg, lg) = (0.2, 0.01, 1.0, 0.1, 0.02);
        let sys =
            lti::assemble_rl_example(r, l, rl, rg, lg, 2.0 * std::f64::consts::PI * 50.0).unwrap();
        let sys = AssembledSystem {
            disturbances: Channels::none(4),
            ..sys
        };
        let labels = sys.model.states().to_vec();
        let s = Scenario {
            duration: 0.2,
            step: Some(1e-4),
            disturbances: vec![],
            probes: labels.clone(),
            initial_state: labels
                .iter()
                .enumerate()
                .map(|(k, s)| (s.clone(), 1.0 + k as f64))
                .collect(),
            allow_divergence: false,
        };
        let tr = simulate(&sys, &s, None).unwrap();
        let energy: Vec<f64> = (0..tr.len())
            .map(|k| {
                (0..3).map(|i| l * tr.samples[i][k].norm_sqr()).sum::<f64>()
                    + lg * tr.samples[3][k].norm_sqr()
            })
            .collect();
        assert!(energy.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn csv_has_fifteen_significant_digits() {
        let tr = simulate(&scalar(-1.0), &scenario(0.1, 0.01), None).unwrap();
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("time,x"));
        assert_eq!(lines.next(), Some("0.00000000000000e0,1.00000000000000e0"));
    }
}
