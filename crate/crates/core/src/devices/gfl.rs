//! Grid-following inverter: L filter, PI current loop and a synchronous-frame
//! PLL acting on the q-axis terminal voltage.
//!
//! ```text
//! v_l        = R(-theta) v_bus
//! omega_pll  = 1 + kp v_lq + ki x_pll
//! e          = Lf J i + kpc (i_ref - i) + kic xc
//! Lf/wb i'   = e - v_l - Rf i - omega_pll Lf J i
//! theta'     = wb (omega_pll - 1),  x_pll' = v_lq,  xc' = i_ref - i
//! ```
//!
//! The PLL is tuned as a second-order loop with damping 0.707 and natural
//! frequency `2 pi f_pll`.

use super::{
    apply_overrides, channels, invalid, jrot, linearize, probes, rot, DeviceError, DeviceModel,
    DeviceSpec, Equilibrium, Nonlinear, PortForm, Shared,
};
use crate::dual::{Dual, Scalar};
use crate::linalg::from_real;
use crate::lti::{Labels, StateSpaceModel, Subsystem};

pub const GFL_STATES: [&str; 6] = ["i_d", "i_q", "θ_pll", "ω_pll_i", "i_d_i", "i_q_i"];
const SETPOINTS: [&str; 2] = ["i_d_ref", "i_q_ref"];
const PLL_DAMPING: f64 = 0.707;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GflParams {
    lf: f64,
    rf: f64,
    wb: f64,
    kp: f64,
    ki: f64,
    kpc: f64,
    kic: f64,
}

impl GflParams {
    fn from_spec(spec: &DeviceSpec, shared: &Shared, v0: f64) -> Result<Self, DeviceError> {
        let lf = spec.positive("Lf")?;
        let rf = spec.non_negative("Rf", 0.1 * lf)?;
        let two_pi = 2.0 * std::f64::consts::PI;
        let wn = two_pi * spec.positive("f_pll")?;
        let ac = two_pi * spec.positive("f_idq")?;
        let wb = shared.omega0();
        if wb <= 0.0 {
            return Err(invalid("omega0_hz", "must be positive for inverter models"));
        }
        let kpc = ac * lf / wb;
        Ok(Self {
            lf,
            rf,
            wb,
            kp: 2.0 * PLL_DAMPING * wn / (wb * v0),
            ki: wn * wn / (wb * v0),
            kpc,
            kic: if rf > 0.0 { ac * rf } else { kpc * ac / 4.0 },
        })
    }
}

fn equations<T: Scalar>(p: &GflParams, x: &[T], vbus: [T; 2], w: &[T]) -> [T; 6] {
    let c = T::cst;
    let i = [x[0], x[1]];
    let (theta, xp) = (x[2], x[3]);
    let xc = [x[4], x[5]];
    let vl = rot(-theta, vbus);
    let omega = c(1.0) + c(p.kp) * vl[1] + c(p.ki) * xp;
    let ji = jrot(i);
    let mut g = [c(0.0); 6];
    for k in 0..2 {
        let e = c(p.lf) * ji[k] + c(p.kpc) * (w[k] - i[k]) + c(p.kic) * xc[k];
        g[k] = e - vl[k] - c(p.rf) * i[k] - omega * c(p.lf) * ji[k];
        g[4 + k] = w[k] - i[k];
    }
    g[2] = omega - c(1.0);
    g[3] = vl[1];
    g
}

fn scale(p: &GflParams) -> [f64; 6] {
    let a = p.wb / p.lf;
    [a, a, p.wb, 1.0, 1.0, 1.0]
}

pub(crate) fn residual(p: &GflParams, x: &[f64], vbus: [f64; 2], w: &[f64]) -> Vec<f64> {
    equations(p, x, vbus, w).to_vec()
}

/// Linearized 6-state grid-following inverter.
///
/// Operating point keys: `P0`, `Q0`, `V0`, `theta0` (terminal voltage
/// angle). State labels, `v_bus_d`, `v_bus_q`, `i_d_ref` and `i_q_ref`
/// override derived values.
pub fn build_gfl(spec: &DeviceSpec, shared: &Shared) -> Result<DeviceModel, DeviceError> {
    let op = spec.op()?;
    let p0 = spec.op_value("P0")?;
    let q0 = spec.op_value_or("Q0", 0.0)?;
    let v0 = spec.op_value("V0")?;
    let th0 = spec.op_value("theta0")?;
    if v0 <= 0.0 {
        return Err(invalid("V0", format!("must be positive, got {v0}")));
    }
    let p = GflParams::from_spec(spec, shared, v0)?;

    let i = [p0 / v0, -q0 / v0];
    let xc = [(v0 + p.rf * i[0]) / p.kic, p.rf * i[1] / p.kic];
    let mut x = vec![i[0], i[1], th0, 0.0, xc[0], xc[1]];
    apply_overrides(&mut x, &GFL_STATES, op);
    let mut vbus = rot(th0, [v0, 0.0]);
    if let Some(v) = op.get("v_bus_d") {
        vbus[0] = *v;
    }
    if let Some(v) = op.get("v_bus_q") {
        vbus[1] = *v;
    }
    let mut w = vec![i[0], i[1]];
    apply_overrides(&mut w, &SETPOINTS, op);

    let mut z0 = x.clone();
    z0.extend_from_slice(&vbus);
    z0.extend_from_slice(&w);
    let sc = scale(&p);
    let pp = p.clone();
    let f = move |z: &[Dual]| -> Vec<Dual> {
        let g = equations(&pp, &z[..6], [z[6], z[7]], &z[8..]);
        g.iter()
            .zip(sc.iter())
            .map(|(gi, s)| *gi * Dual::cst(*s))
            .collect()
    };
    let h = |z: &[Dual]| -> Vec<Dual> { rot(z[2], [z[0], z[1]]).to_vec() };
    let pr = |_: &[Dual]| -> Vec<Dual> { Vec::new() };
    let lin = linearize(6, 2, &z0, 0, f, h, pr);

    let labels = Labels {
        states: GFL_STATES.iter().map(|s| s.to_string()).collect(),
        inputs: PortForm::Real.labels("v"),
        outputs: PortForm::Real.labels("i"),
    };
    let model = StateSpaceModel::new(
        from_real(&lin.a),
        from_real(&lin.b),
        from_real(&lin.c),
        from_real(&lin.d),
        labels,
    )?;
    Ok(DeviceModel {
        spec: spec.clone(),
        form: PortForm::Real,
        subsystem: Subsystem {
            id: spec.id.clone(),
            model,
            disturbances: channels(&lin.e, &SETPOINTS),
            probes: probes(&lin.probe_x, &lin.probe_w, &[]),
        },
        equilibrium: Some(Equilibrium {
            state: x,
            terminal: vbus,
            setpoints: w,
        }),
        nonlinear: Some(Nonlinear::Gfl(p)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::{build_grid_rl, check_operating_point, DeviceKind};
    use crate::linalg;
    use crate::lti;

    fn spec(f_pll: f64) -> DeviceSpec {
        DeviceSpec::new("gfl1", DeviceKind::Gfl)
            .with_param("Lf", 0.05)
            .with_param("f_pll", f_pll)
            .with_param("f_idq", 250.0)
            .with_op("P0", 0.5)
            .with_op("Q0", 0.1)
            .with_op("V0", 1.0)
            .with_op("theta0", 0.2)
    }

    #[test]
    fn schema_and_equilibrium() {
        let d = build_gfl(&spec(10.0), &Shared::default()).unwrap();
        assert_eq!(d.subsystem.model.n_states(), 6);
        assert_eq!(d.subsystem.model.states()[2], "θ_pll");
        assert!(check_operating_point(&d) < 1e-10);
    }

    #[test]
    fn current_loop_poles_on_stiff_grid() {
        // open port = terminal voltage held by an infinitely stiff grid
        let d = build_gfl(&spec(5.0), &Shared::default()).unwrap();
        let ev = linalg::eigenvalues(d.subsystem.model.a()).unwrap();
        let target = -2.0 * std::f64::consts::PI * 250.0;
        let hits = ev
            .iter()
            .filter(|z| (z.re - target).abs() < 0.05 * target.abs())
            .count();
        assert!(hits >= 2, "{ev:?}");
        assert!(ev.iter().all(|z| z.re < 1e-9));
    }

    #[test]
    fn fast_pll_stays_damped_on_strong_grid() {
        let sh = Shared::default();
        let d = build_gfl(&spec(50.0), &sh).unwrap();
        let g = DeviceSpec::new("grid", DeviceKind::GridRl)
            .with_param("Rg", 0.0)
            .with_param("Lg", 0.02 / sh.omega0())
            .with_param("RL_coupling", 20.0);
        let g = build_grid_rl(&g, &sh, PortForm::Real).unwrap();
        let sys = lti::assemble_group_grid(&[d.subsystem], &g.subsystem).unwrap();
        let ev = linalg::eigenvalues(sys.a()).unwrap();
        assert!(ev.iter().all(|z| z.re < 0.0), "{ev:?}");
    }

    #[test]
    fn missing_operating_point_is_rejected() {
        let mut s = spec(10.0);
        s.operating_point = None;
        assert!(matches!(
            build_gfl(&s, &Shared::default()),
            Err(DeviceError::InvalidParameter { .. })
        ));
    }
}
