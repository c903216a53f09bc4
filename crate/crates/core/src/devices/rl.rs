use nalgebra::DMatrix;

use super::{invalid, DeviceError, DeviceModel, DeviceSpec, PortForm, Shared};
use crate::linalg::{cplx, CMat};
use crate::lti::{Channels, Labels, Probes, StateSpaceModel, Subsystem};

/// `aI + bJ` embedded as a complex scalar (`a + jb`) or a real 2x2 block.
fn rotor(form: PortForm, a: f64, b: f64) -> CMat {
    match form {
        PortForm::Complex => CMat::from_element(1, 1, cplx(a, b)),
        PortForm::Real => {
            let m = DMatrix::from_row_slice(2, 2, &[a, -b, b, a]);
            crate::linalg::from_real(&m)
        }
    }
}

fn states(form: PortForm, base: &str) -> Vec<String> {
    match form {
        PortForm::Complex => vec![base.to_string()],
        PortForm::Real => vec![format!("{base}_d"), format!("{base}_q")],
    }
}

/// Series RL branch: `L di/dt = v_src - R i - j omega L i - v`, output `i`.
pub fn build_rl_branch(
    spec: &DeviceSpec,
    shared: &Shared,
    form: PortForm,
) -> Result<DeviceModel, DeviceError> {
    let r = spec.non_negative("R", 0.0)?;
    let l = spec.param("L")?;
    if l <= 0.0 {
        return Err(invalid("L", format!("must be positive, got {l}")));
    }
    let w = shared.omega0();
    let a = rotor(form, -r / l, -w);
    let b = rotor(form, -1.0 / l, 0.0);
    let c = rotor(form, 1.0, 0.0);
    let d = rotor(form, 0.0, 0.0);
    let n = form.width();
    let labels = Labels {
        states: states(form, "i"),
        inputs: form.labels("v"),
        outputs: form.labels("i"),
    };
    let model = StateSpaceModel::new(a, b, c, d, labels)?;
    let subsystem = Subsystem {
        id: spec.id.clone(),
        model,
        disturbances: Channels {
            matrix: rotor(form, 1.0 / l, 0.0),
            labels: form.labels("v_src"),
        },
        probes: Probes::none(n, n),
    };
    Ok(DeviceModel {
        spec: spec.clone(),
        form,
        subsystem,
        equilibrium: None,
        nonlinear: None,
    })
}

/// Grid source behind `Rg + j omega Lg`, with the coupling resistor `R_L`
/// shunting the coupling node.
///
/// With `i_g` the grid current and `i_c` the summed device current,
/// `v_c = R_L (i_g + i_c)` and `Lg di_g/dt = e - Rg i_g - v_c - j omega Lg i_g`.
pub fn build_grid_rl(
    spec: &DeviceSpec,
    shared: &Shared,
    form: PortForm,
) -> Result<DeviceModel, DeviceError> {
    let rg = spec.non_negative("Rg", 0.0)?;
    let lg = spec.param("Lg")?;
    if lg <= 0.0 {
        return Err(invalid("Lg", format!("must be positive, got {lg}")));
    }
    let rl = spec.non_negative("RL_coupling", 0.0)?;
    let w = shared.omega0();
    let a = rotor(form, -(rg + rl) / lg, -w);
    let b = rotor(form, -rl / lg, 0.0);
    let c = rotor(form, rl, 0.0);
    let d = rotor(form, rl, 0.0);
    let n = form.width();
    let labels = Labels {
        states: states(form, "i"),
        inputs: form.labels("i"),
        outputs: form.labels("v"),
    };
    let model = StateSpaceModel::new(a, b, c, d, labels)?;
    let subsystem = Subsystem {
        id: spec.id.clone(),
        model,
        disturbances: Channels {
            matrix: rotor(form, 1.0 / lg, 0.0),
            labels: form.labels("v"),
        },
        probes: Probes::none(n, n),
    };
    Ok(DeviceModel {
        spec: spec.clone(),
        form,
        subsystem,
        equilibrium: None,
        nonlinear: None,
    })
}
