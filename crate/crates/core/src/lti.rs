//! Complex LTI state-space models and the parallel group/grid interconnection.
//!
//! Every subsystem sees the common coupling voltage `v_c` as its input and
//! injects its output current into the coupling node; the external grid
//! receives the summed current `i_c` and returns `v_c`. Algebraic loops through
//! the feedthrough matrices are resolved exactly.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{self, block_diag, cplx, CMat};

/// Condition number above which a similarity transform is reported as
/// untrustworthy.
pub const TRANSFORM_COND_WARN: f64 = 1e8;
/// Condition number above which a matrix is treated as singular.
pub const SINGULAR_COND: f64 = 1e13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry in {matrix} at ({row}, {col})")]
    NonFiniteEntry {
        matrix: &'static str,
        row: usize,
        col: usize,
    },
    #[error("duplicate state label `{0}`")]
    DuplicateLabel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("algebraic loop matrix is singular (condition number {0:.3e})")]
    AlgebraicLoopSingular(f64),
    #[error("port mismatch: {0}")]
    PortMismatch(String),
    #[error("similarity transform is singular")]
    SingularTransform,
}

/// State, input and output names of a model.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Labels {
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl Labels {
    pub fn new<S: Into<String>>(
        states: impl IntoIterator<Item = S>,
        inputs: impl IntoIterator<Item = S>,
        outputs: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            states: states.into_iter().map(Into::into).collect(),
            inputs: inputs.into_iter().map(Into::into).collect(),
            outputs: outputs.into_iter().map(Into::into).collect(),
        }
    }

    /// Labels for a closed model (no inputs or outputs).
    pub fn closed<S: Into<String>>(states: impl IntoIterator<Item = S>) -> Self {
        Self {
            states: states.into_iter().map(Into::into).collect(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }
}

/// Validated complex LTI quadruple `(A, B, C, D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: CMat,
    b: CMat,
    c: CMat,
    d: CMat,
    labels: Labels,
}

impl StateSpaceModel {
    pub fn new(a: CMat, b: CMat, c: CMat, d: CMat, labels: Labels) -> Result<Self, LtiError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LtiError::DimensionMismatch(format!(
                "A is {}x{}, expected square",
                a.nrows(),
                a.ncols()
            )));
        }
        if labels.states.len() != n {
            return Err(LtiError::DimensionMismatch(format!(
                "{} state labels for {n} states",
                labels.states.len()
            )));
        }
        let p = labels.inputs.len();
        let q = labels.outputs.len();
        let check = |name: &str, m: &CMat, r: usize, c: usize| {
            if m.nrows() != r || m.ncols() != c {
                Err(LtiError::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    m.nrows(),
                    m.ncols()
                )))
            } else {
                Ok(())
            }
        };
        check("B", &b, n, p)?;
        check("C", &c, q, n)?;
        check("D", &d, q, p)?;
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if let Some((row, col)) = linalg::all_finite(m) {
                return Err(LtiError::NonFiniteEntry {
                    matrix: name,
                    row,
                    col,
                });
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &labels.states {
            if !seen.insert(s.as_str()) {
                return Err(LtiError::DuplicateLabel(s.clone()));
            }
        }
        Ok(Self { a, b, c, d, labels })
    }

    /// A model without inputs or outputs.
    pub fn closed(a: CMat, states: Vec<String>) -> Result<Self, LtiError> {
        let n = a.nrows();
        Self::new(
            a,
            CMat::zeros(n, 0),
            CMat::zeros(0, n),
            CMat::zeros(0, 0),
            Labels {
                states,
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
        )
    }

    /// Embeds a real model.
    pub fn from_real(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        c: &DMatrix<f64>,
        d: &DMatrix<f64>,
        labels: Labels,
    ) -> Result<Self, LtiError> {
        Self::new(
            linalg::from_real(a),
            linalg::from_real(b),
            linalg::from_real(c),
            linalg::from_real(d),
            labels,
        )
    }

    pub fn a(&self) -> &CMat {
        &self.a
    }
    pub fn b(&self) -> &CMat {
        &self.b
    }
    pub fn c(&self) -> &CMat {
        &self.c
    }
    pub fn d(&self) -> &CMat {
        &self.d
    }
    pub fn labels(&self) -> &Labels {
        &self.labels
    }
    pub fn states(&self) -> &[String] {
        &self.labels.states
    }
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }
    pub fn is_closed(&self) -> bool {
        self.n_inputs() == 0 && self.n_outputs() == 0
    }
    /// True when every matrix has zero imaginary part.
    pub fn is_real(&self) -> bool {
        [&self.a, &self.b, &self.c, &self.d]
            .iter()
            .all(|m| linalg::is_real(m))
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.labels.states.iter().position(|s| s == label)
    }

    /// Same matrices with every state label prefixed by `prefix.`.
    pub fn prefixed(&self, prefix: &str) -> Self {
        let mut out = self.clone();
        out.labels.states = self
            .labels
            .states
            .iter()
            .map(|s| format!("{prefix}.{s}"))
            .collect();
        out
    }
}

/// Exogenous inputs entering the state equation (`x' += E w`).
#[derive(Debug, Clone, PartialEq)]
pub struct Channels {
    pub matrix: CMat,
    pub labels: Vec<String>,
}

impl Channels {
    pub fn none(n: usize) -> Self {
        Self {
            matrix: CMat::zeros(n, 0),
            labels: Vec::new(),
        }
    }
}

/// Linear read-outs `y = C x + D w` over states and exogenous inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Probes {
    pub states: CMat,
    pub feedthrough: CMat,
    pub labels: Vec<String>,
}

impl Probes {
    pub fn none(n: usize, w: usize) -> Self {
        Self {
            states: CMat::zeros(0, n),
            feedthrough: CMat::zeros(0, w),
            labels: Vec::new(),
        }
    }
}

/// A port model plus its disturbance channels and extra read-outs.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsystem {
    pub id: String,
    pub model: StateSpaceModel,
    pub disturbances: Channels,
    pub probes: Probes,
}

impl Subsystem {
    pub fn new(id: impl Into<String>, model: StateSpaceModel) -> Self {
        let n = model.n_states();
        Self {
            id: id.into(),
            model,
            disturbances: Channels::none(n),
            probes: Probes::none(n, 0),
        }
    }
}

/// Who a state of an assembled system belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    /// Index into [`AssembledSystem::units`].
    Unit(usize),
    ExternalGrid,
}

/// The port-level parts an assembled system was built from, kept so the
/// symmetry decomposition can work from the original subsystem models.
#[derive(Debug, Clone, PartialEq)]
pub struct Interconnection {
    pub subsystems: Vec<StateSpaceModel>,
    pub grid: StateSpaceModel,
}

/// Closed whole-system model with per-state ownership.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSystem {
    pub model: StateSpaceModel,
    pub ownership: Vec<Owner>,
    pub units: Vec<String>,
    pub group_of: BTreeMap<String, String>,
    pub disturbances: Channels,
    pub probes: Probes,
    pub interconnection: Option<Interconnection>,
}

impl AssembledSystem {
    pub fn a(&self) -> &CMat {
        self.model.a()
    }
    pub fn n_states(&self) -> usize {
        self.model.n_states()
    }

    /// State indices owned by the given unit.
    pub fn unit_states(&self, unit: usize) -> Vec<usize> {
        self.ownership
            .iter()
            .enumerate()
            .filter(|(_, o)| **o == Owner::Unit(unit))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn grid_states(&self) -> Vec<usize> {
        self.ownership
            .iter()
            .enumerate()
            .filter(|(_, o)| **o == Owner::ExternalGrid)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn unit_index(&self, id: &str) -> Option<usize> {
        self.units.iter().position(|u| u == id)
    }
}

/// Builds and validates a model (`make_model`).
pub fn make_model(
    a: CMat,
    b: CMat,
    c: CMat,
    d: CMat,
    labels: Labels,
) -> Result<StateSpaceModel, LtiError> {
    StateSpaceModel::new(a, b, c, d, labels)
}

/// Whole-system matrix of three identical RL branches feeding a common
/// resistor `r_load` that also carries the grid current.
///
/// Diagonal entries are `o, o, o, t`; branch rows couple through `r` and the
/// grid row through `s`.
pub fn assemble_rl_example(
    r: f64,
    l: f64,
    r_load: f64,
    r_grid: f64,
    l_grid: f64,
    omega: f64,
) -> Result<AssembledSystem, LtiError> {
    for (name, v) in [
        ("R", r),
        ("L", l),
        ("R_L", r_load),
        ("R_g", r_grid),
        ("L_g", l_grid),
        ("omega", omega),
    ] {
        if !v.is_finite() {
            return Err(LtiError::InvalidParameter(format!("{name} is not finite")));
        }
    }
    if l <= 0.0 || l_grid <= 0.0 {
        return Err(LtiError::InvalidParameter(
            "inductances must be positive".into(),
        ));
    }
    if r < 0.0 || r_load < 0.0 || r_grid < 0.0 {
        return Err(LtiError::InvalidParameter(
            "resistances must be non-negative".into(),
        ));
    }
    let o = cplx(-(r / l + r_load / l), -omega);
    let rr = cplx(-r_load / l, 0.0);
    let s = cplx(-r_load / l_grid, 0.0);
    let t = cplx(-(r_grid / l_grid + r_load / l_grid), -omega);
    let a = CMat::from_fn(4, 4, |i, j| match (i, j) {
        (3, 3) => t,
        (3, _) => s,
        (i, j) if i == j => o,
        _ => rr,
    });
    let states = vec![
        "branch1.i".to_string(),
        "branch2.i".to_string(),
        "branch3.i".to_string(),
        "grid.i".to_string(),
    ];
    let model = StateSpaceModel::closed(a, states)?;
    Ok(AssembledSystem {
        model,
        ownership: vec![
            Owner::Unit(0),
            Owner::Unit(1),
            Owner::Unit(2),
            Owner::ExternalGrid,
        ],
        units: vec!["branch1".into(), "branch2".into(), "branch3".into()],
        group_of: BTreeMap::new(),
        disturbances: Channels::none(4),
        probes: Probes::none(4, 0),
        interconnection: None,
    })
}

fn check_ports(subsystems: &[&StateSpaceModel], grid: &StateSpaceModel) -> Result<(), LtiError> {
    let p = grid.n_outputs();
    let q = grid.n_inputs();
    if p == 0 || q == 0 {
        return Err(LtiError::PortMismatch(
            "grid model needs current input and voltage output".into(),
        ));
    }
    for (k, s) in subsystems.iter().enumerate() {
        if s.n_inputs() != p || s.n_outputs() != q {
            return Err(LtiError::PortMismatch(format!(
                "subsystem {k} has {} inputs/{} outputs, grid expects {p}/{q}",
                s.n_inputs(),
                s.n_outputs()
            )));
        }
    }
    Ok(())
}

/// Closes a set of parallel subsystems with the external grid and returns
/// the whole-system state matrix.
///
/// Works for non-identical subsystems; for `M` copies of one model it reduces
/// to the block pattern computed by [`ideal_blocks`].
pub fn assemble_matrix(
    subsystems: &[&StateSpaceModel],
    grid: &StateSpaceModel,
) -> Result<CMat, LtiError> {
    check_ports(subsystems, grid)?;
    let p = grid.n_outputs();
    let q = grid.n_inputs();
    let mut d_sum = CMat::zeros(q, p);
    for s in subsystems {
        d_sum += s.d();
    }
    let loop_mat = CMat::identity(p, p) - grid.d() * &d_sum;
    let loop_inv = linalg::guarded_inverse(&loop_mat, SINGULAR_COND)
        .ok_or_else(|| LtiError::AlgebraicLoopSingular(linalg::condition_number(&loop_mat)))?;

    let sizes: Vec<usize> = subsystems.iter().map(|s| s.n_states()).collect();
    let n_sub: usize = sizes.iter().sum();
    let e = grid.n_states();
    let n = n_sub + e;
    let mut a = CMat::zeros(n, n);

    // v_c = W^-1 (C_b x_E + D_b sum_j C_j x_j)
    let v_from_grid = &loop_inv * grid.c();
    let v_from_sub: Vec<CMat> = subsystems
        .iter()
        .map(|s| &loop_inv * grid.d() * s.c())
        .collect();

    let mut row = 0;
    for (k, s) in subsystems.iter().enumerate() {
        let mut col = 0;
        for (j, _) in subsystems.iter().enumerate() {
            let mut blk = s.b() * &v_from_sub[j];
            if j == k {
                blk += s.a();
            }
            a.view_mut((row, col), (sizes[k], sizes[j])).copy_from(&blk);
            col += sizes[j];
        }
        let blk = s.b() * &v_from_grid;
        a.view_mut((row, n_sub), (sizes[k], e)).copy_from(&blk);
        row += sizes[k];
    }
    // i_c = sum_j C_j x_j + D_sum v_c
    let mut col = 0;
    for (j, s) in subsystems.iter().enumerate() {
        let blk = grid.b() * (s.c() + &d_sum * &v_from_sub[j]);
        a.view_mut((n_sub, col), (e, sizes[j])).copy_from(&blk);
        col += sizes[j];
    }
    let blk = grid.a() + grid.b() * &d_sum * &v_from_grid;
    a.view_mut((n_sub, n_sub), (e, e)).copy_from(&blk);
    Ok(a)
}

/// Assembles subsystems and grid into a closed [`AssembledSystem`].
///
/// State labels are prefixed with the subsystem (or grid) id. Disturbance
/// channels and probes of the parts are stacked block-diagonally.
pub fn assemble_group_grid(
    subsystems: &[Subsystem],
    grid: &Subsystem,
) -> Result<AssembledSystem, LtiError> {
    let models: Vec<&StateSpaceModel> = subsystems.iter().map(|s| &s.model).collect();
    let a = assemble_matrix(&models, &grid.model)?;

    let mut states = Vec::new();
    let mut ownership = Vec::new();
    for (k, s) in subsystems.iter().enumerate() {
        states.extend(s.model.prefixed(&s.id).labels.states);
        ownership.extend(std::iter::repeat_n(Owner::Unit(k), s.model.n_states()));
    }
    states.extend(grid.model.prefixed(&grid.id).labels.states);
    ownership.extend(std::iter::repeat_n(
        Owner::ExternalGrid,
        grid.model.n_states(),
    ));

    let parts: Vec<&Subsystem> = subsystems.iter().chain(std::iter::once(grid)).collect();
    let (disturbances, probes) = stack_channels(&parts);

    let model = StateSpaceModel::closed(a, states)?;
    Ok(AssembledSystem {
        model,
        ownership,
        units: subsystems.iter().map(|s| s.id.clone()).collect(),
        group_of: BTreeMap::new(),
        disturbances,
        probes,
        interconnection: Some(Interconnection {
            subsystems: models.into_iter().cloned().collect(),
            grid: grid.model.clone(),
        }),
    })
}

/// Block-diagonal stacking of disturbance channels and probes, labels
/// prefixed with the part id.
pub(crate) fn stack_channels(parts: &[&Subsystem]) -> (Channels, Probes) {
    let dist: Vec<&CMat> = parts.iter().map(|s| &s.disturbances.matrix).collect();
    let pst: Vec<&CMat> = parts.iter().map(|s| &s.probes.states).collect();
    let pft: Vec<&CMat> = parts.iter().map(|s| &s.probes.feedthrough).collect();
    let mut dl = Vec::new();
    let mut pl = Vec::new();
    for s in parts {
        dl.extend(
            s.disturbances
                .labels
                .iter()
                .map(|l| format!("{}.{l}", s.id)),
        );
        pl.extend(s.probes.labels.iter().map(|l| format!("{}.{l}", s.id)));
    }
    (
        Channels {
            matrix: block_diag(&dist),
            labels: dl,
        },
        Probes {
            states: block_diag(&pst),
            feedthrough: block_diag(&pft),
            labels: pl,
        },
    )
}

/// The five distinct blocks of the state matrix of `M` identical subsystems
/// closed with a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealBlocks {
    /// Diagonal subsystem block.
    pub o: CMat,
    /// Off-diagonal subsystem-to-subsystem block.
    pub r: CMat,
    /// Grid row, subsystem column.
    pub s: CMat,
    /// Grid diagonal block.
    pub t: CMat,
    /// Subsystem row, grid column.
    pub v: CMat,
    pub members: usize,
}

/// Closed-form blocks for `members` identical copies of `template`.
pub fn ideal_blocks(
    template: &StateSpaceModel,
    grid: &StateSpaceModel,
    members: usize,
) -> Result<IdealBlocks, LtiError> {
    check_ports(&[template], grid)?;
    if members == 0 {
        return Err(LtiError::InvalidParameter(
            "group needs at least one member".into(),
        ));
    }
    let m = cplx(members as f64, 0.0);
    let p = grid.n_outputs();
    let q = grid.n_inputs();
    let w_bd = CMat::identity(p, p) - grid.d() * template.d() * m;
    let w_db = CMat::identity(q, q) - template.d() * grid.d() * m;
    let inv_bd = linalg::guarded_inverse(&w_bd, SINGULAR_COND)
        .ok_or_else(|| LtiError::AlgebraicLoopSingular(linalg::condition_number(&w_bd)))?;
    let inv_db = linalg::guarded_inverse(&w_db, SINGULAR_COND)
        .ok_or_else(|| LtiError::AlgebraicLoopSingular(linalg::condition_number(&w_db)))?;
    let r = template.b() * &inv_bd * grid.d() * template.c();
    let o = template.a() + &r;
    let s = grid.b() * &inv_db * template.c();
    let t = grid.a() + grid.b() * &inv_db * template.d() * grid.c() * m;
    let v = template.b() * &inv_bd * grid.c();
    Ok(IdealBlocks {
        o,
        r,
        s,
        t,
        v,
        members,
    })
}

impl IdealBlocks {
    /// Expands the blocks into the full state matrix.
    pub fn to_matrix(&self) -> CMat {
        let m = self.o.nrows();
        let e = self.t.nrows();
        let big_m = self.members;
        let n = big_m * m + e;
        let mut a = CMat::zeros(n, n);
        for k in 0..big_m {
            for j in 0..big_m {
                let blk = if k == j { &self.o } else { &self.r };
                a.view_mut((k * m, j * m), (m, m)).copy_from(blk);
            }
            a.view_mut((k * m, big_m * m), (m, e)).copy_from(&self.v);
            a.view_mut((big_m * m, k * m), (e, m)).copy_from(&self.s);
        }
        a.view_mut((big_m * m, big_m * m), (e, e))
            .copy_from(&self.t);
        a
    }
}

/// Result of a similarity transform.
#[derive(Debug, Clone)]
pub struct Transformed {
    pub model: StateSpaceModel,
    pub condition: f64,
}

/// `A' = P A P^-1` on a closed model.
pub fn apply_similarity(model: &StateSpaceModel, p: &CMat) -> Result<Transformed, LtiError> {
    let n = model.n_states();
    if p.nrows() != n || p.ncols() != n {
        return Err(LtiError::DimensionMismatch(format!(
            "transform is {}x{}, model has {n} states",
            p.nrows(),
            p.ncols()
        )));
    }
    if !model.is_closed() {
        return Err(LtiError::PortMismatch(
            "similarity transform expects a closed model".into(),
        ));
    }
    let condition = linalg::condition_number(p);
    if condition > SINGULAR_COND {
        return Err(LtiError::SingularTransform);
    }
    if condition > TRANSFORM_COND_WARN {
        log::warn!("similarity transform condition number {condition:.3e} exceeds {TRANSFORM_COND_WARN:.0e}");
    }
    let p_inv = p.clone().try_inverse().ok_or(LtiError::SingularTransform)?;
    let a = p * model.a() * p_inv;
    let states = model.states().iter().map(|s| format!("{s}'")).collect();
    Ok(Transformed {
        model: StateSpaceModel::closed(a, states)?,
        condition,
    })
}

/// Series impedance seen between each port and the coupling node:
/// `v_k = v_c + sum_j (Gr_kj i_j + Gl_kj di_j/dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PortCoupling {
    pub resistive: CMat,
    pub inductive: CMat,
}

/// Folds shared series impedances into a set of current-output subsystems and
/// returns one composite subsystem whose input is the coupling voltage and
/// whose output is the summed current.
///
/// Every subsystem whose port sits behind a nonzero impedance must have
/// `D = 0`. The derivative coupling is removed by solving
/// `(I - B Gl C) x' = (A + B Gr C) x + B U v_c`.
pub fn fold_series_impedance(
    id: &str,
    parts: &[Subsystem],
    coupling: &PortCoupling,
) -> Result<Subsystem, LtiError> {
    let Some(first) = parts.first() else {
        return Err(LtiError::InvalidParameter("no subsystems to fold".into()));
    };
    let port_in = first.model.n_inputs();
    let port_out = first.model.n_outputs();
    if port_in != port_out {
        return Err(LtiError::PortMismatch(
            "series impedance needs equal voltage and current port sizes".into(),
        ));
    }
    let d = port_in;
    for s in parts {
        if s.model.n_inputs() != d || s.model.n_outputs() != d {
            return Err(LtiError::PortMismatch(format!(
                "`{}` has a different port size",
                s.id
            )));
        }
    }
    let kd = parts.len() * d;
    for (name, m) in [
        ("resistive", &coupling.resistive),
        ("inductive", &coupling.inductive),
    ] {
        if m.nrows() != kd || m.ncols() != kd {
            return Err(LtiError::DimensionMismatch(format!(
                "{name} coupling is {}x{}, expected {kd}x{kd}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    for (k, s) in parts.iter().enumerate() {
        let behind = (0..d).any(|r| {
            (0..kd).any(|c| {
                coupling.resistive[(k * d + r, c)].norm() > 0.0
                    || coupling.inductive[(k * d + r, c)].norm() > 0.0
            })
        });
        if behind && s.model.d().iter().any(|z| z.norm() > 0.0) {
            return Err(LtiError::PortMismatch(format!(
                "`{}` has direct feedthrough and cannot sit behind a series impedance",
                s.id
            )));
        }
    }

    let a_blk = block_diag(&parts.iter().map(|s| s.model.a()).collect::<Vec<_>>());
    let b_blk = block_diag(&parts.iter().map(|s| s.model.b()).collect::<Vec<_>>());
    let c_blk = block_diag(&parts.iter().map(|s| s.model.c()).collect::<Vec<_>>());
    let n = a_blk.nrows();
    let mut stack = CMat::zeros(kd, d);
    for k in 0..parts.len() {
        stack.view_mut((k * d, 0), (d, d)).fill_with_identity();
    }
    let e = CMat::identity(n, n) - &b_blk * &coupling.inductive * &c_blk;
    let e_inv = linalg::guarded_inverse(&e, SINGULAR_COND)
        .ok_or_else(|| LtiError::AlgebraicLoopSingular(linalg::condition_number(&e)))?;
    let a = &e_inv * (&a_blk + &b_blk * &coupling.resistive * &c_blk);
    let b = &e_inv * &b_blk * &stack;
    let c = stack.transpose() * &c_blk;
    let mut dd = CMat::zeros(d, d);
    for s in parts {
        dd += s.model.d();
    }
    let mut states = Vec::new();
    for s in parts {
        states.extend(s.model.prefixed(&s.id).labels.states);
    }
    let labels = Labels {
        states,
        inputs: first.model.labels().inputs.clone(),
        outputs: first.model.labels().outputs.clone(),
    };
    let model = StateSpaceModel::new(a, b, c, dd, labels)?;

    let refs: Vec<&Subsystem> = parts.iter().collect();
    let (mut disturbances, probes) = stack_channels(&refs);
    disturbances.matrix = &e_inv * &disturbances.matrix;
    Ok(Subsystem {
        id: id.to_string(),
        model,
        disturbances,
        probes,
    })
}

/// Convenience: eigenvalues of a square matrix (`None` if the solver fails).
pub fn spectrum(a: &CMat) -> Option<Vec<Complex64>> {
    linalg::eigenvalues(a)
}
