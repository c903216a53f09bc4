//! Grid-forming inverter: LCL filter, P-omega droop with a low-pass filter
//! on measured power, cascaded PI voltage and current loops.
//!
//! The controller works in a local frame at angle `delta` from the common
//! frame. Per-unit equations (`wb` is the base frequency, `J` the 90 degree
//! rotation):
//!
//! ```text
//! omega      = 1 + m (P_set - P_f)
//! i_ref      = F i_o + Cf J v_o + kpv (V_ref - v_o) + kiv xv
//! e          = Lf J i_l + kpc (i_ref - i_l) + kic xc
//! Lf/wb i_l' = e - v_o - Rf i_l - omega Lf J i_l
//! Cf/wb v_o' = i_l - i_o - omega Cf J v_o
//! Lc/wb i_o' = v_o - v_b - Rc i_o - omega Lc J i_o
//! delta'     = wb (omega - 1)
//! P_f'       = wf (v_o . i_o - P_f)
//! xv'        = V_ref - v_o,   xc' = i_ref - i_l
//! ```
//!
//! The output-current feedforward gain is `F = 0.75`; a unit gain
//! destabilizes the voltage loop against the finite current-loop bandwidth.
//! Current-loop gains cancel the filter pole (`kpc = ac Lf / wb`,
//! `kic = ac Rf`, or `kpc ac / 4` when `Rf = 0`), the voltage loop is
//! critically damped (`kpv = av Cf / wb`, `kiv = kpv av / 4`). The power
//! filter corner `wf` combines the droop and filter bandwidths as series time
//! constants.

use super::{
    apply_overrides, channels, invalid, jrot, linearize, probes, rot, DeviceError, DeviceModel,
    DeviceSpec, Equilibrium, Nonlinear, PortForm, Shared,
};
use crate::dual::{Dual, Scalar};
use crate::linalg::from_real;
use crate::lti::{Labels, StateSpaceModel, Subsystem};

pub const GFM_STATES: [&str; 12] = [
    "i_ld", "i_lq", "v_od", "v_oq", "i_od", "i_oq", "δ", "P_f", "v_od_i", "v_oq_i", "i_ld_i",
    "i_lq_i",
];
const SETPOINTS: [&str; 2] = ["P_set", "V_ref"];
const IO_FEEDFORWARD: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GfmParams {
    lf: f64,
    cf: f64,
    lc: f64,
    rf: f64,
    rc: f64,
    m: f64,
    wf: f64,
    wb: f64,
    kpv: f64,
    kiv: f64,
    kpc: f64,
    kic: f64,
}

impl GfmParams {
    fn from_spec(spec: &DeviceSpec, shared: &Shared) -> Result<Self, DeviceError> {
        let lf = spec.positive("Lf")?;
        let cf = spec.positive("Cf")?;
        let lc = spec.positive("Lc")?;
        let rf = spec.non_negative("Rf", 0.1 * lf)?;
        let rc = spec.non_negative("Rc", 0.1 * lc)?;
        let m = spec.non_negative("droop_gain", f64::NAN)?;
        if m.is_nan() {
            return Err(invalid("droop_gain", "missing"));
        }
        let tau = |name: &str| -> Result<f64, DeviceError> {
            Ok(1.0 / (2.0 * std::f64::consts::PI * spec.positive(name)?))
        };
        let wf = 1.0 / (tau("f_droop")? + tau("f_lpf")?);
        let av = 1.0 / tau("f_vdq")?;
        let ac = 1.0 / tau("f_idq")?;
        let wb = shared.omega0();
        if wb <= 0.0 {
            return Err(invalid("omega0_hz", "must be positive for inverter models"));
        }
        let kpv = av * cf / wb;
        let kpc = ac * lf / wb;
        Ok(Self {
            lf,
            cf,
            lc,
            rf,
            rc,
            m,
            wf,
            wb,
            kpv,
            kiv: kpv * av / 4.0,
            kpc,
            kic: if rf > 0.0 { ac * rf } else { kpc * ac / 4.0 },
        })
    }
}

/// Unscaled equilibrium equations; the state derivative is `scale .* g`.
fn equations<T: Scalar>(p: &GfmParams, x: &[T], vbus: [T; 2], w: &[T]) -> [T; 12] {
    let c = T::cst;
    let il = [x[0], x[1]];
    let vo = [x[2], x[3]];
    let io = [x[4], x[5]];
    let (delta, pf) = (x[6], x[7]);
    let xv = [x[8], x[9]];
    let xc = [x[10], x[11]];
    let (p_set, v_ref) = (w[0], w[1]);
    let omega = c(1.0) + c(p.m) * (p_set - pf);
    let vb = rot(-delta, vbus);
    let vref = [v_ref, c(0.0)];
    let jil = jrot(il);
    let jvo = jrot(vo);
    let jio = jrot(io);
    let mut g = [c(0.0); 12];
    for k in 0..2 {
        let i_ref = c(IO_FEEDFORWARD) * io[k]
            + c(p.cf) * jvo[k]
            + c(p.kpv) * (vref[k] - vo[k])
            + c(p.kiv) * xv[k];
        let e = c(p.lf) * jil[k] + c(p.kpc) * (i_ref - il[k]) + c(p.kic) * xc[k];
        g[k] = e - vo[k] - c(p.rf) * il[k] - omega * c(p.lf) * jil[k];
        g[2 + k] = il[k] - io[k] - omega * c(p.cf) * jvo[k];
        g[4 + k] = vo[k] - vb[k] - c(p.rc) * io[k] - omega * c(p.lc) * jio[k];
        g[8 + k] = vref[k] - vo[k];
        g[10 + k] = i_ref - il[k];
    }
    g[6] = p_set - pf;
    g[7] = vo[0] * io[0] + vo[1] * io[1] - pf;
    g
}

fn scale(p: &GfmParams) -> [f64; 12] {
    let (a, b, c) = (p.wb / p.lf, p.wb / p.cf, p.wb / p.lc);
    [a, a, b, b, c, c, p.wb * p.m, p.wf, 1.0, 1.0, 1.0, 1.0]
}

pub(crate) fn residual(p: &GfmParams, x: &[f64], vbus: [f64; 2], w: &[f64]) -> Vec<f64> {
    equations(p, x, vbus, w).to_vec()
}

/// Linearized 12-state grid-forming inverter.
///
/// Operating point keys: `P0`, `V0`, `theta0` (angle of the capacitor
/// voltage), optional `Q0`. Any state label, `v_bus_d`, `v_bus_q`, `P_set` or
/// `V_ref` present in the map overrides the derived equilibrium value.
pub fn build_gfm(spec: &DeviceSpec, shared: &Shared) -> Result<DeviceModel, DeviceError> {
    let p = GfmParams::from_spec(spec, shared)?;
    let op = spec.op()?;
    let p0 = spec.op_value("P0")?;
    let v0 = spec.op_value("V0")?;
    let th0 = spec.op_value("theta0")?;
    let q0 = spec.op_value_or("Q0", 0.0)?;
    if v0 <= 0.0 {
        return Err(invalid("V0", format!("must be positive, got {v0}")));
    }

    let vo = [v0, 0.0];
    let io = [p0 / v0, -q0 / v0];
    let jvo = jrot(vo);
    let il = [io[0] + p.cf * jvo[0], io[1] + p.cf * jvo[1]];
    let jio = jrot(io);
    let vb = [
        vo[0] - p.rc * io[0] - p.lc * jio[0],
        vo[1] - p.rc * io[1] - p.lc * jio[1],
    ];
    let xv = [
        (1.0 - IO_FEEDFORWARD) * io[0] / p.kiv,
        (1.0 - IO_FEEDFORWARD) * io[1] / p.kiv,
    ];
    let xc = [
        (vo[0] + p.rf * il[0]) / p.kic,
        (vo[1] + p.rf * il[1]) / p.kic,
    ];
    let mut x = vec![
        il[0],
        il[1],
        vo[0],
        vo[1],
        io[0],
        io[1],
        th0,
        vo[0] * io[0] + vo[1] * io[1],
        xv[0],
        xv[1],
        xc[0],
        xc[1],
    ];
    apply_overrides(&mut x, &GFM_STATES, op);
    let mut vbus = rot(th0, vb);
    if let Some(v) = op.get("v_bus_d") {
        vbus[0] = *v;
    }
    if let Some(v) = op.get("v_bus_q") {
        vbus[1] = *v;
    }
    let mut w = vec![p0, v0];
    apply_overrides(&mut w, &SETPOINTS, op);

    let mut z0 = x.clone();
    z0.extend_from_slice(&vbus);
    z0.extend_from_slice(&w);
    let sc = scale(&p);
    let pp = p.clone();
    let f = move |z: &[Dual]| -> Vec<Dual> {
        let g = equations(&pp, &z[..12], [z[12], z[13]], &z[14..]);
        g.iter()
            .zip(sc.iter())
            .map(|(gi, s)| *gi * Dual::cst(*s))
            .collect()
    };
    let h = |z: &[Dual]| -> Vec<Dual> { rot(z[6], [z[4], z[5]]).to_vec() };
    let m = p.m;
    let pr = move |z: &[Dual]| -> Vec<Dual> {
        let omega = Dual::cst(1.0) + Dual::cst(m) * (z[14] - z[7]);
        vec![omega, z[2] * z[4] + z[3] * z[5]]
    };
    let lin = linearize(12, 2, &z0, 2, f, h, pr);

    let labels = Labels {
        states: GFM_STATES.iter().map(|s| s.to_string()).collect(),
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
            probes: probes(&lin.probe_x, &lin.probe_w, &["omega", "P"]),
        },
        equilibrium: Some(Equilibrium {
            state: x,
            terminal: vbus,
            setpoints: w,
        }),
        nonlinear: Some(Nonlinear::Gfm(p)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::{check_operating_point, DeviceKind};
    use crate::linalg;
    use nalgebra::DMatrix;

    fn spec(id: &str) -> DeviceSpec {
        DeviceSpec::new(id, DeviceKind::Gfm)
            .with_param("Lf", 0.05)
            .with_param("Cf", 0.05)
            .with_param("Lc", 0.3)
            .with_param("f_droop", 5.0)
            .with_param("droop_gain", 0.02)
            .with_param("f_lpf", 50.0)
            .with_param("f_vdq", 250.0)
            .with_param("f_idq", 1000.0)
            .with_op("P0", 0.5)
            .with_op("V0", 1.0)
            .with_op("theta0", 0.1)
    }

    fn numeric_jacobian(p: &GfmParams, z0: &[f64]) -> DMatrix<f64> {
        let sc = scale(p);
        let f = |z: &[f64]| -> Vec<f64> {
            let g = equations(p, &z[..12], [z[12], z[13]], &z[14..]);
            g.iter().zip(sc.iter()).map(|(a, b)| a * b).collect()
        };
        let mut jac = DMatrix::zeros(12, z0.len());
        for j in 0..z0.len() {
            let h = 1e-6 * z0[j].abs().max(1.0);
            let mut zp = z0.to_vec();
            let mut zm = z0.to_vec();
            zp[j] += h;
            zm[j] -= h;
            let (fp, fm) = (f(&zp), f(&zm));
            for i in 0..12 {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }

    #[test]
    fn schema_and_equilibrium() {
        let d = build_gfm(&spec("gfm1"), &Shared::default()).unwrap();
        assert_eq!(
            d.subsystem.model.states(),
            GFM_STATES.map(String::from).as_slice()
        );
        assert!(check_operating_point(&d) < 1e-10);
        assert!(d.subsystem.model.is_real());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let d = build_gfm(&spec("gfm1"), &Shared::default()).unwrap();
        let Some(Nonlinear::Gfm(p)) = &d.nonlinear else {
            panic!()
        };
        let eq = d.equilibrium.as_ref().unwrap();
        let mut z0 = eq.state.clone();
        z0.extend_from_slice(&eq.terminal);
        z0.extend_from_slice(&eq.setpoints);
        let num = numeric_jacobian(p, &z0);
        let a = d.subsystem.model.a().map(|z| z.re);
        let b = d.subsystem.model.b().map(|z| z.re);
        let scale = num.abs().max();
        assert!((num.view((0, 0), (12, 12)) - a).abs().max() < 1e-6 * scale);
        assert!((num.view((0, 12), (12, 2)) - b).abs().max() < 1e-6 * scale);
    }

    #[test]
    fn zero_droop_leaves_free_angle() {
        let s = spec("gfm1").with_param("droop_gain", 0.0);
        let d = build_gfm(&s, &Shared::default()).unwrap();
        let ev = linalg::eigenvalues(d.subsystem.model.a()).unwrap();
        assert!(ev.iter().any(|z| z.norm() < 1e-9));
    }

    #[test]
    fn negative_filter_inductance_is_rejected() {
        let s = spec("gfm1").with_param("Lf", -0.05);
        assert!(matches!(
            build_gfm(&s, &Shared::default()),
            Err(DeviceError::InvalidParameter { .. })
        ));
    }

    #[test]
    fn missing_operating_point_is_rejected() {
        let mut s = spec("gfm1");
        s.operating_point = None;
        assert!(matches!(
            build_gfm(&s, &Shared::default()),
            Err(DeviceError::InvalidParameter { .. })
        ));
    }

    #[test]
    fn unbalanced_power_shows_in_residual() {
        let mut s = spec("gfm1");
        for l in GFM_STATES {
            s = s.with_op(l, 0.0);
        }
        s = s
            .with_op("v_bus_d", 0.0)
            .with_op("v_bus_q", 0.0)
            .with_op("V_ref", 0.0);
        let d = build_gfm(&s, &Shared::default()).unwrap();
        let r = check_operating_point(&d);
        assert!((r - 0.5).abs() < 1e-12, "residual {r}");
    }

    #[test]
    fn relinearizing_is_idempotent() {
        let a = build_gfm(&spec("x"), &Shared::default()).unwrap();
        let b = build_gfm(&spec("x"), &Shared::default()).unwrap();
        assert_eq!(a.subsystem, b.subsystem);
    }

    #[test]
    fn isolated_inverter_on_stiff_bus_is_stable() {
        let d = build_gfm(&spec("gfm1"), &Shared::default()).unwrap();
        let ev = linalg::eigenvalues(d.subsystem.model.a()).unwrap();
        // terminal voltage held: the open-port model is the stiff-bus case
        assert!(ev.iter().all(|z| z.re < 0.0), "{ev:?}");
    }
}
