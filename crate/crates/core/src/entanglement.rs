//! Two-gas Gaussian entanglement of formation.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{GasId, Orientation, Quadrature};
use crate::state::GaussianState;

const TEMPLATE_TOLERANCE: f64 = 1e-6;

/// Symmetric standard form
///
/// ```text
/// | n    0    k_x  0   |
/// | 0    n    0   -k_p |
/// | k_x  0    n    0   |
/// | 0   -k_p  0    n   |
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardFormParams {
    pub n: f64,
    pub k_x: f64,
    pub k_p: f64,
}

impl StandardFormParams {
    /// `Δ = min(1, √((n − k_x)(n − k_p)))`.
    pub fn delta(&self) -> Result<f64> {
        let prod = (self.n - self.k_x) * (self.n - self.k_p);
        if !(prod >= 0.0) {
            return Err(Error::Domain(format!("(n - k_x)(n - k_p) = {prod} is negative")));
        }
        Ok(prod.sqrt().min(1.0))
    }

    fn check(&self) -> Result<()> {
        if !(self.n >= 1.0 - 1e-9) || self.k_x.abs() > self.n || self.k_p.abs() > self.n {
            return Err(Error::Domain(format!(
                "standard form (n, k_x, k_p) = ({}, {}, {}) is not physical",
                self.n, self.k_x, self.k_p
            )));
        }
        Ok(())
    }
}

fn quarter_turns(q: usize) -> Matrix2<f64> {
    match q % 4 {
        0 => Matrix2::identity(),
        1 => Matrix2::new(0.0, 1.0, -1.0, 0.0),
        2 => -Matrix2::identity(),
        _ => Matrix2::new(0.0, -1.0, 1.0, 0.0),
    }
}

fn template_residual(g: &Matrix4<f64>) -> (StandardFormParams, f64) {
    let n = (g[(0, 0)] + g[(1, 1)] + g[(2, 2)] + g[(3, 3)]) / 4.0;
    let k_x = g[(0, 2)];
    let k_p = -g[(1, 3)];
    let mut residual: f64 = 0.0;
    for i in 0..4 {
        residual = residual.max((g[(i, i)] - n).abs());
    }
    for (i, j) in [(0, 1), (0, 3), (1, 2), (2, 3)] {
        residual = residual.max(g[(i, j)].abs()).max(g[(j, i)].abs());
    }
    residual = residual.max((g[(2, 0)] - k_x).abs()).max((g[(3, 1)] + k_p).abs());
    (StandardFormParams { n, k_x, k_p }, residual)
}

/// Reads `(n, k_x, k_p)` off a 4×4 covariance ordered `(x₁, p₁, x₂, p₂)`,
/// with both pairs canonical. Local quarter-turn rotations of either gas
/// are tried; among the orientations that fit the template within
/// `10⁻⁶ · max|γ|` the one with the smallest `(n − k_x)(n − k_p)` is kept.
pub fn standard_form(gamma: &DMatrix<f64>) -> Result<StandardFormParams> {
    if gamma.nrows() != 4 || gamma.ncols() != 4 {
        return Err(Error::LayoutMismatch { expected: 4, found: gamma.nrows().max(gamma.ncols()) });
    }
    if gamma.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("covariance has non-finite entries".into()));
    }
    let g = Matrix4::from_iterator(gamma.iter().copied());
    let tolerance = TEMPLATE_TOLERANCE * g.amax();
    let mut best: Option<(StandardFormParams, f64)> = None;
    let mut smallest_residual = f64::INFINITY;
    for qa in 0..4 {
        for qb in 0..4 {
            let mut r = Matrix4::zeros();
            r.fixed_view_mut::<2, 2>(0, 0).copy_from(&quarter_turns(qa));
            r.fixed_view_mut::<2, 2>(2, 2).copy_from(&quarter_turns(qb));
            let rotated = r * g * r.transpose();
            let (params, residual) = template_residual(&rotated);
            smallest_residual = smallest_residual.min(residual);
            if residual > tolerance {
                continue;
            }
            let prod = (params.n - params.k_x) * (params.n - params.k_p);
            if best.is_none_or(|(_, p)| prod < p) {
                best = Some((params, prod));
            }
        }
    }
    let (params, _) = best.ok_or(Error::NotStandardForm { residual: smallest_residual, tolerance })?;
    params.check()?;
    Ok(params)
}

/// `E = c₊ log₂ c₊ − c₋ log₂ c₋` with `c± = (Δ^{-1/2} ± Δ^{1/2})² / 4`.
pub fn geof(p: &StandardFormParams) -> Result<f64> {
    p.check()?;
    let delta = p.delta()?;
    if delta == 0.0 {
        return Ok(f64::INFINITY);
    }
    if delta >= 1.0 {
        return Ok(0.0);
    }
    let (a, b) = (delta.powf(-0.5), delta.sqrt());
    let c_plus = (a + b).powi(2) / 4.0;
    let c_minus = (a - b).powi(2) / 4.0;
    let xlog = |c: f64| if c == 0.0 { 0.0 } else { c * c.log2() };
    Ok((xlog(c_plus) - xlog(c_minus)).max(0.0))
}

/// Atomic block `(x_a, p_a, x_b, p_b)` of a state, with negatively
/// oriented gasses flipped `p → −p` so both pairs are canonical.
pub fn atomic_pair_block(state: &GaussianState, a: GasId, b: GasId) -> Result<DMatrix<f64>> {
    let layout = state.layout();
    let idx = [
        layout.atom(a, Quadrature::X)?,
        layout.atom(a, Quadrature::P)?,
        layout.atom(b, Quadrature::X)?,
        layout.atom(b, Quadrature::P)?,
    ];
    let sign = |g: GasId| if layout.orientation(g) == Orientation::Negative { -1.0 } else { 1.0 };
    let s = [1.0, sign(a), 1.0, sign(b)];
    Ok(DMatrix::from_fn(4, 4, |i, j| s[i] * s[j] * state.cov()[(idx[i], idx[j])]))
}

pub fn pair_geof(state: &GaussianState, a: GasId, b: GasId) -> Result<f64> {
    geof(&standard_form(&atomic_pair_block(state, a, b)?)?)
}

/// GEoF of one gas pair at each state; samples whose block is not in
/// standard form are `None`.
pub fn pair_geof_series(states: &[GaussianState], a: GasId, b: GasId) -> Result<Vec<Option<f64>>> {
    if let Some(first) = states.first() {
        first.layout().atom(a, Quadrature::X)?;
        first.layout().atom(b, Quadrature::X)?;
    }
    Ok(states.iter().map(|s| pair_geof(s, a, b).ok()).collect())
}
