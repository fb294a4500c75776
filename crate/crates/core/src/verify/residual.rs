//! Central-difference residuals of the HJB equation for `v` and the linear
//! equation for `u`:
//!
//! ```text
//! ∂ₜv + ½tr(σσᵀD²v) + ⟨μ,∇v⟩ − ¼|σᵀ∇v|² + f = 0
//! ∂ₜu + ½tr(σσᵀD²u) + ⟨μ,∇u⟩ − ½fu = 0
//! ```

use crate::dynamics::{mat_t_vec, CoefficientField};
use crate::error::{Error, Result};
use crate::estimator::CostFn;
use crate::policy::{UFunction, ValueFunction};

/// The four signed summands of a residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualTerms {
    /// `∂ₜw`
    pub time: f64,
    /// `½tr(σσᵀD²w) + ⟨μ,∇w⟩`
    pub generator: f64,
    /// `−¼|σᵀ∇v|²` (zero for the linear equation)
    pub quadratic: f64,
    /// `f` for the HJB equation, `−½fu` for the linear one
    pub running: f64,
}

impl ResidualTerms {
    pub fn sum(&self) -> f64 {
        self.time + self.generator + self.quadratic + self.running
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub t: f64,
    pub x: Vec<f64>,
    pub residual: f64,
    pub h_t: f64,
    pub h_x: f64,
    pub terms: ResidualTerms,
}

struct Derivatives {
    value: f64,
    time: f64,
    grad: Vec<f64>,
    /// row-major `d×d`
    hess: Vec<f64>,
}

fn central_derivatives(
    w: &dyn Fn(f64, &[f64]) -> f64,
    valid: fn(f64) -> bool,
    horizon: f64,
    t: f64,
    x: &[f64],
    h_t: f64,
    h_x: f64,
) -> Result<Derivatives> {
    if !(h_t > 0.0 && h_x > 0.0) {
        return Err(Error::InvalidArgument(format!("difference steps must be positive, got ({h_t}, {h_x})")));
    }
    let outside = || Error::ProbeOutsideC { t, x: x.to_vec() };
    if t - h_t < 0.0 || t + h_t >= horizon {
        return Err(outside());
    }
    let eval = |s: f64, y: &[f64]| -> Result<f64> {
        let v = w(s, y);
        if valid(v) {
            Ok(v)
        } else {
            Err(Error::ProbeOutsideC { t: s, x: y.to_vec() })
        }
    };
    let d = x.len();
    let value = eval(t, x)?;
    let time = (eval(t + h_t, x)? - eval(t - h_t, x)?) / (2.0 * h_t);
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    let mut y = x.to_vec();
    for i in 0..d {
        y[i] = x[i] + h_x;
        let up = eval(t, &y)?;
        y[i] = x[i] - h_x;
        let down = eval(t, &y)?;
        y[i] = x[i];
        grad[i] = (up - down) / (2.0 * h_x);
        hess[i * d + i] = (up - 2.0 * value + down) / (h_x * h_x);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                y[i] = x[i] + si * h_x;
                y[j] = x[j] + sj * h_x;
                let r = eval(t, &y);
                y[i] = x[i];
                y[j] = x[j];
                r
            };
            let mixed = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?)
                / (4.0 * h_x * h_x);
            hess[i * d + j] = mixed;
            hess[j * d + i] = mixed;
        }
    }
    Ok(Derivatives {
        value,
        time,
        grad,
        hess,
    })
}

/// `⟨μ,∇w⟩ + ½Σᵢⱼ(σσᵀ)ᵢⱼ∂ᵢⱼw` and `σᵀ∇w`.
fn generator(field: &dyn CoefficientField, t: f64, x: &[f64], der: &Derivatives) -> (f64, Vec<f64>) {
    let (d, dn) = (field.dim_state(), field.dim_noise());
    let mut mu = vec![0.0; d];
    let mut sigma = vec![0.0; d * dn];
    field.drift(t, x, &mut mu);
    field.dispersion(t, x, &mut sigma);
    let drift: f64 = mu.iter().zip(&der.grad).map(|(m, g)| m * g).sum();
    let mut diffusion = 0.0;
    for i in 0..d {
        for j in 0..d {
            let a: f64 = (0..dn).map(|k| sigma[i * dn + k] * sigma[j * dn + k]).sum();
            diffusion += a * der.hess[i * d + j];
        }
    }
    let mut st_grad = vec![0.0; dn];
    mat_t_vec(&sigma, &der.grad, &mut st_grad);
    (drift + 0.5 * diffusion, st_grad)
}

fn check_dim(field: &dyn CoefficientField, x: &[f64]) -> Result<()> {
    if x.len() != field.dim_state() {
        return Err(Error::DimensionMismatch {
            expected: field.dim_state(),
            got: x.len(),
        });
    }
    Ok(())
}

/// HJB residual of `v` at `(t, x)`. Every stencil point must have finite
/// `v` and satisfy `0 ≤ t ± h_t < horizon`.
pub fn hjb_residual(
    v: &ValueFunction,
    field: &dyn CoefficientField,
    running: &CostFn,
    horizon: f64,
    (t, x): (f64, &[f64]),
    h_t: f64,
    h_x: f64,
) -> Result<ResidualReport> {
    check_dim(field, x)?;
    let der = central_derivatives(&|s, y| v.evaluate(s, y), f64::is_finite, horizon, t, x, h_t, h_x)?;
    let (gen, st_grad) = generator(field, t, x, &der);
    let terms = ResidualTerms {
        time: der.time,
        generator: gen,
        quadratic: -0.25 * st_grad.iter().map(|g| g * g).sum::<f64>(),
        running: running.eval(t, x),
    };
    Ok(ResidualReport {
        t,
        x: x.to_vec(),
        residual: terms.sum(),
        h_t,
        h_x,
        terms,
    })
}

/// Residual of the linear equation for `u` at `(t, x)`. Every stencil point
/// must have `u > 0`.
pub fn pde_residual_u(
    u: &dyn UFunction,
    field: &dyn CoefficientField,
    running: &CostFn,
    (t, x): (f64, &[f64]),
    h_t: f64,
    h_x: f64,
) -> Result<ResidualReport> {
    check_dim(field, x)?;
    let der = central_derivatives(&|s, y| u.u(s, y), |w| w > 0.0, u.horizon(), t, x, h_t, h_x)?;
    let (gen, _) = generator(field, t, x, &der);
    let terms = ResidualTerms {
        time: der.time,
        generator: gen,
        quadratic: 0.0,
        running: -0.5 * running.eval(t, x) * der.value,
    };
    Ok(ResidualReport {
        t,
        x: x.to_vec(),
        residual: terms.sum(),
        h_t,
        h_x,
        terms,
    })
}
