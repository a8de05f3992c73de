//! Bilinear interaction Hamiltonians and their first-order step matrices.

use crate::error::{Error, Result};
use crate::layout::{Variable, VariableLayout};
use crate::step::StepMatrix;

/// One term `coefficient · a · b` of `H τ`. The coefficient is the full
/// per-segment prefactor (e.g. `μ_τ`, `±κ_τ`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearTerm {
    pub coefficient: f64,
    pub a: Variable,
    pub b: Variable,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BilinearHamiltonian {
    terms: Vec<BilinearTerm>,
}

impl BilinearHamiltonian {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `coefficient · a · b`. Products of two classical field
    /// components carry no quantum dynamics and are rejected.
    pub fn add(&mut self, coefficient: f64, a: Variable, b: Variable) -> Result<&mut Self> {
        if !coefficient.is_finite() {
            return Err(Error::InvalidHamiltonian(format!("non-finite coefficient on {a}·{b}")));
        }
        if a.is_field() && b.is_field() {
            return Err(Error::InvalidHamiltonian(format!(
                "term {a}·{b} couples two classical field components"
            )));
        }
        self.terms.push(BilinearTerm { coefficient, a, b });
        Ok(self)
    }

    pub fn with(mut self, coefficient: f64, a: Variable, b: Variable) -> Result<Self> {
        self.add(coefficient, a, b)?;
        Ok(self)
    }

    pub fn terms(&self) -> &[BilinearTerm] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn extend(&mut self, other: &BilinearHamiltonian) {
        self.terms.extend_from_slice(&other.terms);
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient.abs()).fold(0.0, f64::max)
    }
}

/// Nonzero entries `(row, col, value)` of the generator `G = Ω·∇²H`, so that
/// one segment maps `y ↦ (I + G) y`.
///
/// Heisenberg's equations give `ẏ_i = Σ_j Ω_ij ∂H/∂y_j` with `Ω` the signed
/// symplectic form of the layout; field rows of `Ω` vanish, so fields source
/// rotations but never move.
pub fn compile_generator(h: &BilinearHamiltonian, layout: &VariableLayout) -> Result<Vec<(usize, usize, f64)>> {
    let n = layout.len();
    // Hessian of H, stored densely: layouts are small
    let mut hess = vec![0.0; n * n];
    for t in h.terms() {
        if t.a.is_field() && t.b.is_field() {
            return Err(Error::InvalidHamiltonian(format!(
                "term {}·{} couples two classical field components",
                t.a, t.b
            )));
        }
        let a = layout.require(t.a)?;
        let b = layout.require(t.b)?;
        hess[a * n + b] += t.coefficient;
        hess[b * n + a] += t.coefficient;
    }
    let mut entries = Vec::new();
    for (row, partner, sign) in layout.symplectic_entries() {
        for col in 0..n {
            let v = sign * hess[partner * n + col];
            if v != 0.0 {
                entries.push((row, col, v));
            }
        }
    }
    Ok(entries)
}

/// First-order step matrix `S = I + G` for `H τ`.
pub fn compile(h: &BilinearHamiltonian, layout: &VariableLayout) -> Result<StepMatrix> {
    let g = compile_generator(h, layout)?;
    StepMatrix::from_generator(layout.clone(), &g)
}
