//! Line-shape model evaluation and analytic Jacobians.
//!
//! Two forms are fitted: the two-term Gaussian
//! `g(x) = a1·exp(−((x−b1)/c1)²) + a2·exp(−((x−b2)/c2)²)`
//! used for all non-conductance features, and the Lorentzian with constant
//! offset `L(x) = a/((x−b)²+c²) + d` used for the conductance peak. An
//! opt-in triple-Lorentzian shares one offset across three terms and reports
//! the dominant term.

/// Which parametric form to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// 3 parameters: a, b, c. Used internally to seed the two-term fit.
    Gauss1,
    /// 6 parameters: a1, b1, c1, a2, b2, c2.
    Gauss2,
    /// 4 parameters: a, b, c, d.
    Lorentz,
    /// 10 parameters: (a, b, c) × 3 terms + shared d.
    Lorentz3,
}

impl Model {
    pub fn n_params(self) -> usize {
        match self {
            Model::Gauss1 => 3,
            Model::Gauss2 => 6,
            Model::Lorentz => 4,
            Model::Lorentz3 => 10,
        }
    }

    /// Model value at `x` for parameter vector `p`.
    pub fn eval(self, p: &[f64], x: f64) -> f64 {
        match self {
            Model::Gauss1 => gauss_term(p[0], p[1], p[2], x),
            Model::Gauss2 => gauss_term(p[0], p[1], p[2], x) + gauss_term(p[3], p[4], p[5], x),
            Model::Lorentz => lorentz_term(p[0], p[1], p[2], x) + p[3],
            Model::Lorentz3 => {
                lorentz_term(p[0], p[1], p[2], x)
                    + lorentz_term(p[3], p[4], p[5], x)
                    + lorentz_term(p[6], p[7], p[8], x)
                    + p[9]
            }
        }
    }

    /// Row of the Jacobian ∂f/∂p at `x`, written into `out`.
    pub fn jacobian_row(self, p: &[f64], x: f64, out: &mut [f64]) {
        match self {
            Model::Gauss1 => gauss_grad(p[0], p[1], p[2], x, &mut out[0..3]),
            Model::Gauss2 => {
                gauss_grad(p[0], p[1], p[2], x, &mut out[0..3]);
                gauss_grad(p[3], p[4], p[5], x, &mut out[3..6]);
            }
            Model::Lorentz => {
                lorentz_grad(p[0], p[1], p[2], x, &mut out[0..3]);
                out[3] = 1.0;
            }
            Model::Lorentz3 => {
                lorentz_grad(p[0], p[1], p[2], x, &mut out[0..3]);
                lorentz_grad(p[3], p[4], p[5], x, &mut out[3..6]);
                lorentz_grad(p[6], p[7], p[8], x, &mut out[6..9]);
                out[9] = 1.0;
            }
        }
    }
}

#[inline]
fn gauss_term(a: f64, b: f64, c: f64, x: f64) -> f64 {
    let t = (x - b) / c;
    a * (-t * t).exp()
}

#[inline]
fn gauss_grad(a: f64, b: f64, c: f64, x: f64, out: &mut [f64]) {
    let t = (x - b) / c;
    let e = (-t * t).exp();
    out[0] = e;
    out[1] = a * e * 2.0 * t / c;
    out[2] = a * e * 2.0 * t * t / c;
}

#[inline]
fn lorentz_term(a: f64, b: f64, c: f64, x: f64) -> f64 {
    let u = x - b;
    a / (u * u + c * c)
}

#[inline]
fn lorentz_grad(a: f64, b: f64, c: f64, x: f64, out: &mut [f64]) {
    let u = x - b;
    let den = u * u + c * c;
    out[0] = 1.0 / den;
    out[1] = 2.0 * a * u / (den * den);
    out[2] = -2.0 * a * c / (den * den);
}
