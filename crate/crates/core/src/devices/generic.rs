use serde::{Deserialize, Serialize};

use super::{invalid, DeviceError, DeviceModel, DeviceSpec, PortForm};
use crate::linalg::{cplx, CMat};
use crate::lti::{Labels, StateSpaceModel, Subsystem};

/// User-supplied matrices, row-major, with optional imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericMatrices {
    pub states: Vec<String>,
    pub form: PortForm,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    #[serde(rename = "A_im", default, skip_serializing_if = "Option::is_none")]
    pub a_im: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B_im", default, skip_serializing_if = "Option::is_none")]
    pub b_im: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C_im", default, skip_serializing_if = "Option::is_none")]
    pub c_im: Option<Vec<Vec<f64>>>,
    #[serde(rename = "D_im", default, skip_serializing_if = "Option::is_none")]
    pub d_im: Option<Vec<Vec<f64>>>,
}

fn to_matrix(
    name: &str,
    re: &[Vec<f64>],
    im: Option<&Vec<Vec<f64>>>,
    rows: usize,
    cols: usize,
) -> Result<CMat, DeviceError> {
    let shape_ok = |m: &[Vec<f64>]| m.len() == rows && m.iter().all(|r| r.len() == cols);
    // an empty list stands for a matrix with no rows
    if !(shape_ok(re) || (rows == 0 && re.is_empty())) {
        return Err(invalid(name, format!("expected {rows}x{cols}")));
    }
    if let Some(im) = im {
        if !shape_ok(im) {
            return Err(invalid(
                &format!("{name}_im"),
                format!("expected {rows}x{cols}"),
            ));
        }
    }
    Ok(CMat::from_fn(rows, cols, |i, j| {
        cplx(re[i][j], im.map_or(0.0, |m| m[i][j]))
    }))
}

/// Wraps user matrices as a device. Input and output labels follow the port
/// form (`v`/`i` or `v_d, v_q`/`i_d, i_q`).
pub fn build_generic_lti(spec: &DeviceSpec) -> Result<DeviceModel, DeviceError> {
    let m = spec.matrices.as_ref().ok_or_else(|| {
        invalid(
            "matrices",
            format!("required for generic_lti `{}`", spec.id),
        )
    })?;
    let n = m.states.len();
    let w = m.form.width();
    let a = to_matrix("A", &m.a, m.a_im.as_ref(), n, n)?;
    let b = to_matrix("B", &m.b, m.b_im.as_ref(), n, w)?;
    let c = to_matrix("C", &m.c, m.c_im.as_ref(), w, n)?;
    let d = to_matrix("D", &m.d, m.d_im.as_ref(), w, w)?;
    let labels = Labels {
        states: m.states.clone(),
        inputs: m.form.labels("v"),
        outputs: m.form.labels("i"),
    };
    let model = StateSpaceModel::new(a, b, c, d, labels)?;
    Ok(DeviceModel {
        spec: spec.clone(),
        form: m.form,
        subsystem: Subsystem::new(spec.id.clone(), model),
        equilibrium: None,
        nonlinear: None,
    })
}
