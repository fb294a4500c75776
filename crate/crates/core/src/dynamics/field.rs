//! Drift and dispersion coefficients shared by the uncontrolled process `Z`
//! and the controlled process `X`.
//!
//! Coefficients are expected to be locally Lipschitz in the state and of
//! linear growth, uniformly in time. Nothing here can check that; it is the
//! caller's obligation.

use std::fmt;
use std::sync::Arc;

/// The coefficient pair `(μ, σ)` with `μ: [0,T]×ℝᵈ → ℝᵈ` and
/// `σ: [0,T]×ℝᵈ → ℝ^{d×d'}`.
///
/// Both methods write into caller-provided buffers so that the Euler loop
/// does not allocate. `dispersion` is written row-major: entry `(i, j)` lives
/// at `out[i * dim_noise + j]`.
pub trait CoefficientField: Send + Sync {
    fn dim_state(&self) -> usize;
    fn dim_noise(&self) -> usize;
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn dispersion(&self, t: f64, x: &[f64], out: &mut [f64]);
}

/// Constant drift and dispersion.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantField {
    drift: Vec<f64>,
    dispersion: Vec<f64>,
    dim_noise: usize,
}

impl ConstantField {
    /// Panics if `dispersion.len() != drift.len() * dim_noise`.
    pub fn new(drift: Vec<f64>, dispersion: Vec<f64>, dim_noise: usize) -> Self {
        assert!(dim_noise >= 1 && !drift.is_empty());
        assert_eq!(dispersion.len(), drift.len() * dim_noise);
        Self {
            drift,
            dispersion,
            dim_noise,
        }
    }

    /// Standard Brownian motion in `ℝᵈ`: `μ ≡ 0`, `σ ≡ I`.
    pub fn brownian(dim: usize) -> Self {
        let mut sigma = vec![0.0; dim * dim];
        for i in 0..dim {
            sigma[i * dim + i] = 1.0;
        }
        Self::new(vec![0.0; dim], sigma, dim)
    }

    /// Scalar field with constant `μ` and `σ`.
    pub fn scalar(mu: f64, sigma: f64) -> Self {
        Self::new(vec![mu], vec![sigma], 1)
    }
}

impl CoefficientField for ConstantField {
    fn dim_state(&self) -> usize {
        self.drift.len()
    }

    fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    fn drift(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.drift);
    }

    fn dispersion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.dispersion);
    }
}

type VecFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// Coefficients given by closures.
#[derive(Clone)]
pub struct FnField {
    dim_state: usize,
    dim_noise: usize,
    drift: Arc<VecFn>,
    dispersion: Arc<VecFn>,
}

impl FnField {
    pub fn new<D, S>(dim_state: usize, dim_noise: usize, drift: D, dispersion: S) -> Self
    where
        D: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        S: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        assert!(dim_state >= 1 && dim_noise >= 1);
        Self {
            dim_state,
            dim_noise,
            drift: Arc::new(drift),
            dispersion: Arc::new(dispersion),
        }
    }
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnField")
            .field("dim_state", &self.dim_state)
            .field("dim_noise", &self.dim_noise)
            .finish_non_exhaustive()
    }
}

impl CoefficientField for FnField {
    fn dim_state(&self) -> usize {
        self.dim_state
    }

    fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }

    fn dispersion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.dispersion)(t, x, out)
    }
}

/// `out = σ · v` for a row-major `d×d'` matrix.
pub(crate) fn mat_vec(sigma: &[f64], v: &[f64], out: &mut [f64]) {
    let dn = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &sigma[i * dn..(i + 1) * dn];
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

/// `out = σᵀ · p`.
pub(crate) fn mat_t_vec(sigma: &[f64], p: &[f64], out: &mut [f64]) {
    let dn = out.len();
    out.iter_mut().for_each(|o| *o = 0.0);
    for (i, pi) in p.iter().enumerate() {
        let row = &sigma[i * dn..(i + 1) * dn];
        for (o, s) in out.iter_mut().zip(row) {
            *o += s * pi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brownian_field_is_identity_dispersion() {
        let f = ConstantField::brownian(2);
        let mut s = [0.0; 4];
        f.dispersion(0.0, &[1.0, 2.0], &mut s);
        assert_eq!(s, [1.0, 0.0, 0.0, 1.0]);
        let mut m = [9.0; 2];
        f.drift(0.3, &[1.0, 2.0], &mut m);
        assert_eq!(m, [0.0, 0.0]);
    }

    #[test]
    fn matrix_products() {
        // σ = [[1, 2, 3], [4, 5, 6]]
        let sigma = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut out = [0.0; 2];
        mat_vec(&sigma, &[1.0, 0.0, -1.0], &mut out);
        assert_eq!(out, [-2.0, -2.0]);
        let mut out_t = [0.0; 3];
        mat_t_vec(&sigma, &[1.0, 1.0], &mut out_t);
        assert_eq!(out_t, [5.0, 7.0, 9.0]);
    }
}
