//! Forward-mode dual numbers for exact Jacobians of the device equations.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use nalgebra::DMatrix;

/// Arithmetic needed by the device residual functions.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn cst(v: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
}

/// `re + eps * du` with `du^2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub du: f64,
}

impl Dual {
    pub fn new(re: f64, du: f64) -> Self {
        Self { re, du }
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.du + o.du)
    }
}
impl AddAssign for Dual {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}
impl Sub for Dual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.du - o.du)
    }
}
impl Mul for Dual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.du * o.re + self.re * o.du)
    }
}
impl Div for Dual {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        Self::new(
            self.re / o.re,
            (self.du * o.re - self.re * o.du) / (o.re * o.re),
        )
    }
}
impl Neg for Dual {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.du)
    }
}

impl Scalar for Dual {
    fn cst(v: f64) -> Self {
        Self::new(v, 0.0)
    }
    fn sin(self) -> Self {
        Self::new(self.re.sin(), self.du * self.re.cos())
    }
    fn cos(self) -> Self {
        Self::new(self.re.cos(), -self.du * self.re.sin())
    }
}

/// Jacobian of `f` at `x`, one forward pass per column.
pub fn jacobian<F>(x: &[f64], n_out: usize, f: F) -> DMatrix<f64>
where
    F: Fn(&[Dual]) -> Vec<Dual>,
{
    let mut jac = DMatrix::zeros(n_out, x.len());
    let mut arg: Vec<Dual> = x.iter().map(|&v| Dual::cst(v)).collect();
    for j in 0..x.len() {
        arg[j].du = 1.0;
        let y = f(&arg);
        debug_assert_eq!(y.len(), n_out);
        for (i, yi) in y.iter().enumerate() {
            jac[(i, j)] = yi.du;
        }
        arg[j].du = 0.0;
    }
    jac
}
