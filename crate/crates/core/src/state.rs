//! Gaussian state: mean vector and doubled covariance matrix.
//!
//! The covariance follows the doubled convention
//! `γ_ij = 2 Re<(y_i - <y_i>)(y_j - <y_j>)>`, so a vacuum quadrature has
//! diagonal entry 1 and a field component stores `2 var(B)`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::layout::{Axis, BeamId, PerAxis, Quadrature, Variable, VariableLayout};
use crate::step::StepMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    layout: VariableLayout,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

/// Where a homodyne outcome comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutcomeSource {
    /// Drawn from the state's own predictive distribution `N(<q>, B11/2)`.
    Sampled,
    Forced(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSpec {
    pub beam: BeamId,
    pub kind: Quadrature,
    pub outcome: OutcomeSource,
}

impl MeasurementSpec {
    pub fn sampled(beam: BeamId, kind: Quadrature) -> Self {
        Self { beam, kind, outcome: OutcomeSource::Sampled }
    }

    pub fn forced(beam: BeamId, kind: Quadrature, value: f64) -> Self {
        Self { beam, kind, outcome: OutcomeSource::Forced(value) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementResult {
    pub outcome: f64,
    /// Outcome minus the predicted mean of the measured quadrature.
    pub innovation: f64,
}

/// Fresh state: `γ = diag(2 var(B), …, 1, …)`, zero mean.
pub fn make_initial_state(layout: VariableLayout, prior_variance: PerAxis) -> Result<GaussianState> {
    let n = layout.len();
    let mut cov = DMatrix::identity(n, n);
    for (i, v) in layout.entries().iter().enumerate() {
        if let Variable::Field(axis) = v {
            let var = prior_variance.get(*axis);
            if !(var > 0.0) || !var.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "prior variance of B_{axis} must be positive and finite, got {var}"
                )));
            }
            cov[(i, i)] = 2.0 * var;
        }
    }
    Ok(GaussianState { layout, mean: DVector::zeros(n), cov })
}

impl GaussianState {
    pub fn from_parts(layout: VariableLayout, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = layout.len();
        if mean.len() != n {
            return Err(Error::LayoutMismatch { expected: n, found: mean.len() });
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::LayoutMismatch { expected: n, found: cov.nrows() });
        }
        let mut s = Self { layout, mean, cov };
        s.symmetrize();
        Ok(s)
    }

    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut DVector<f64>, &mut DMatrix<f64>) {
        (&mut self.mean, &mut self.cov)
    }

    /// `var(B_axis) = γ_BB / 2`, if the axis is part of the layout.
    pub fn field_variance(&self, axis: Axis) -> Option<f64> {
        self.layout.field_index(axis).map(|i| self.cov[(i, i)] / 2.0)
    }

    pub fn field_uncertainty(&self, axis: Axis) -> Option<f64> {
        self.field_variance(axis).map(f64::sqrt)
    }

    pub fn field_mean(&self, axis: Axis) -> Option<f64> {
        self.layout.field_index(axis).map(|i| self.mean[i])
    }

    /// `m ← S m`, `γ ← S γ Sᵀ`.
    pub fn evolve_linear(&self, s: &StepMatrix) -> Result<GaussianState> {
        let mut out = self.clone();
        out.evolve_in_place(s)?;
        Ok(out)
    }

    pub fn evolve_in_place(&mut self, s: &StepMatrix) -> Result<()> {
        if s.layout() != &self.layout {
            return Err(Error::LayoutMismatch { expected: self.layout.len(), found: s.layout().len() });
        }
        self.apply_generator(s.generator());
        Ok(())
    }

    /// Applies `S = I + G` given the nonzero entries of `G`; the caller
    /// guarantees the indices are in range for this layout.
    pub(crate) fn apply_generator(&mut self, g: &[(usize, usize, f64)]) {
        if g.is_empty() {
            return;
        }
        let mut v = self.mean.clone();
        propagate_vector(&mut self.mean, &mut v, g);
        let mut t = self.cov.clone();
        propagate_cov(&mut self.cov, &mut t, g);
    }

    /// Homodyne measurement of one quadrature of a beam, followed by the
    /// replacement of that beam's segment with a fresh vacuum segment.
    pub fn measure<R: Rng + ?Sized>(
        &self,
        spec: &MeasurementSpec,
        rng: &mut R,
    ) -> Result<(GaussianState, MeasurementResult)> {
        let mut out = self.clone();
        let r = out.measure_in_place(spec, rng)?;
        Ok((out, r))
    }

    pub fn measure_in_place<R: Rng + ?Sized>(
        &mut self,
        spec: &MeasurementSpec,
        rng: &mut R,
    ) -> Result<MeasurementResult> {
        let m = self.layout.photon(spec.beam, spec.kind)?;
        let other = self.layout.photon(spec.beam, spec.kind.conjugate())?;
        let b11 = self.cov[(m, m)];
        assert!(b11 > 0.0, "measured quadrature has non-positive variance {b11}");
        let predicted = self.mean[m];
        let outcome = match spec.outcome {
            OutcomeSource::Forced(v) => v,
            OutcomeSource::Sampled => {
                let z: f64 = rng.sample(StandardNormal);
                predicted + (b11 / 2.0).sqrt() * z
            }
        };
        let innovation = outcome - predicted;
        self.condition_on(m, other, innovation);
        Ok(MeasurementResult { outcome, innovation })
    }

    /// Schur-complement update on quadrature `m` with innovation `chi`,
    /// then reset of the `(m, other)` pair to vacuum.
    pub(crate) fn condition_on(&mut self, m: usize, other: usize, chi: f64) {
        let mut c = Vec::new();
        c.extend(self.cov.column(m).iter().copied());
        condition_mean(&mut self.mean, &c, m, other, chi);
        condition_cov(&mut self.cov, &mut c, m, other);
    }

    pub(crate) fn symmetrize(&mut self) {
        symmetrize(&mut self.cov);
    }
    /// Principal submatrix over `vars`, in the requested order.
    pub fn subcov(&self, vars: &[Variable]) -> Result<DMatrix<f64>> {
        let idx = vars.iter().map(|v| self.layout.require(*v)).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.cov[(idx[i], idx[j])]))
    }

    /// `γ_xx γ_pp − γ_xp²` for each canonical pair; at least 1 for any
    /// physical state.
    pub fn uncertainty_products(&self) -> Vec<f64> {
        self.layout
            .canonical_pairs()
            .into_iter()
            .map(|(x, p)| self.cov[(x, x)] * self.cov[(p, p)] - self.cov[(x, p)].powi(2))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite()) && self.cov.iter().all(|v| v.is_finite())
    }

    /// Debug dump: header of variable names, a `mean` row, then the rows
    /// of the covariance.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for v in self.layout.entries() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
        out.push_str("mean");
        for m in self.mean.iter() {
            let _ = write!(out, ",{m:e}");
        }
        out.push('\n');
        for (i, v) in self.layout.entries().iter().enumerate() {
            let _ = write!(out, "{v}");
            for j in 0..self.layout.len() {
                let _ = write!(out, ",{:e}", self.cov[(i, j)]);
            }
            out.push('\n');
        }
        out
    }
}

/// `v ← (I + G) v`; `scratch` receives the old `v`.
pub(crate) fn propagate_vector(v: &mut DVector<f64>, scratch: &mut DVector<f64>, g: &[(usize, usize, f64)]) {
    scratch.copy_from(v);
    for &(i, j, x) in g {
        v[i] += x * scratch[j];
    }
}

/// `γ ← (I + G) γ (I + G)ᵀ` by row then column operations; `scratch`
/// holds the intermediate `(I + G) γ`.
pub(crate) fn propagate_cov(cov: &mut DMatrix<f64>, scratch: &mut DMatrix<f64>, g: &[(usize, usize, f64)]) {
    if g.is_empty() {
        return;
    }
    let n = cov.nrows();
    scratch.copy_from(cov);
    for &(i, j, x) in g {
        for k in 0..n {
            scratch[(i, k)] += x * cov[(j, k)];
        }
    }
    cov.copy_from(scratch);
    for &(i, j, x) in g {
        for k in 0..n {
            cov[(k, i)] += x * scratch[(k, j)];
        }
    }
    symmetrize(cov);
}

/// Mean part of the measurement update, `c` being column `m` of the
/// covariance before the update.
pub(crate) fn condition_mean(mean: &mut DVector<f64>, c: &[f64], m: usize, other: usize, chi: f64) {
    let gain = chi / c[m];
    for (j, cj) in c.iter().enumerate() {
        mean[j] += cj * gain;
    }
    mean[m] = 0.0;
    mean[other] = 0.0;
}

/// `γ ← γ − c cᵀ / c_m` with the `(m, other)` pair reset to vacuum. `c`
/// must hold column `m` of `γ` and is consumed as scratch.
pub(crate) fn condition_cov(cov: &mut DMatrix<f64>, c: &mut [f64], m: usize, other: usize) {
    let n = cov.nrows();
    let inv = 1.0 / c[m];
    for j in 0..n {
        let cj = c[j] * inv;
        for i in 0..=j {
            let v = cov[(i, j)] - c[i] * cj;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    for idx in [m, other] {
        cov.row_mut(idx).fill(0.0);
        cov.column_mut(idx).fill(0.0);
        cov[(idx, idx)] = 1.0;
    }
}

pub(crate) fn symmetrize(cov: &mut DMatrix<f64>) {
    let n = cov.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{GasId, Orientation};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const KAPPA_SQ: f64 = 0.0183;
    const MU: f64 = 8.8e-4;

    fn one_axis_layout() -> VariableLayout {
        VariableLayout::builder()
            .field(Axis::Y)
            .gas(GasId(1), Orientation::Positive)
            .beam(BeamId(1))
            .build()
            .unwrap()
    }

    // the single-component step matrix, written out by hand
    fn one_axis_matrix(kappa: f64, mu: f64) -> DMatrix<f64> {
        let mut s = DMatrix::identity(5, 5);
        s[(1, 4)] = kappa;
        s[(2, 0)] = -mu;
        s[(3, 2)] = kappa;
        s
    }

    fn xph() -> MeasurementSpec {
        MeasurementSpec::sampled(BeamId(1), Quadrature::X)
    }

    #[test]
    fn initial_state_uses_doubled_convention() {
        let st = make_initial_state(one_axis_layout(), PerAxis::splat(1e4)).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![2e4, 1.0, 1.0, 1.0, 1.0]));
        assert_eq!(st.cov(), &expect);
        assert_eq!(st.mean(), &DVector::zeros(5));

        let st = make_initial_state(one_axis_layout(), PerAxis::splat(0.5)).unwrap();
        assert_eq!(st.cov()[(0, 0)], 1.0);
    }

    #[test]
    fn initial_state_two_gas_layout() {
        let layout = VariableLayout::builder()
            .field(Axis::Z)
            .field(Axis::Y)
            .gas(GasId(1), Orientation::Positive)
            .gas(GasId(2), Orientation::Negative)
            .beam(BeamId(1))
            .beam(BeamId(2))
            .build()
            .unwrap();
        let st = make_initial_state(layout, PerAxis::splat(3.0)).unwrap();
        let diag: Vec<f64> = st.cov().diagonal().iter().copied().collect();
        assert_eq!(diag, vec![6.0, 6.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn non_positive_prior_is_rejected() {
        let err = make_initial_state(one_axis_layout(), PerAxis::splat(0.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        let err = make_initial_state(one_axis_layout(), PerAxis { x: 1.0, y: -2.0, z: 1.0 }).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn identity_step_leaves_state_unchanged() {
        let st = make_initial_state(one_axis_layout(), PerAxis::splat(1e4)).unwrap();
        let out = st.evolve_linear(&StepMatrix::identity(one_axis_layout())).unwrap();
        assert_eq!(out, st);
    }

    #[test]
    fn sparse_evolution_matches_dense_product() {
        let layout = one_axis_layout();
        let dense = one_axis_matrix(KAPPA_SQ.sqrt(), MU);
        let s = StepMatrix::new(layout.clone(), dense.clone()).unwrap();
        let mut st = make_initial_state(layout, PerAxis::splat(1e4)).unwrap();
        st.mean[0] = 0.3;
        st.mean[2] = -1.5;
        let out = st.evolve_linear(&s).unwrap();
        let oracle_cov = &dense * st.cov() * dense.transpose();
        let oracle_mean = &dense * st.mean();
        for (a, b) in out.cov().iter().zip(oracle_cov.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
        for (a, b) in out.mean().iter().zip(oracle_mean.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
        // γ_xph,xph = 1 + κ²
        assert_relative_eq!(out.cov()[(3, 3)], 1.0183, max_relative = 1e-14);
        // γ_pp = 1 + μ² · 2 var(B0)
        assert_relative_eq!(out.cov()[(2, 2)], 1.0 + MU * MU * 2e4, max_relative = 1e-14);
        assert_relative_eq!(out.cov()[(2, 2)], 1.0154879, max_relative = 1e-6);
    }

    #[test]
    fn layout_mismatch_is_an_error() {
        let st = make_initial_state(one_axis_layout(), PerAxis::splat(1.0)).unwrap();
        let other = VariableLayout::builder().field(Axis::Y).build().unwrap();
        let err = st.evolve_linear(&StepMatrix::identity(other)).unwrap_err();
        assert!(matches!(err, Error::LayoutMismatch { .. }));
    }

    #[test]
    fn uncorrelated_beam_leaves_rest_untouched() {
        let st = make_initial_state(one_axis_layout(), PerAxis::splat(1e4)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for v in [-3.0, 0.0, 2.5] {
            let spec = MeasurementSpec::forced(BeamId(1), Quadrature::X, v);
            let (out, r) = st.measure(&spec, &mut rng).unwrap();
            assert_eq!(out.cov(), st.cov());
            assert_eq!(out.mean(), st.mean());
            assert_eq!(r.innovation, v);
        }
    }

    #[test]
    fn one_step_squeezes_by_schur_complement() {
        let layout = one_axis_layout();
        let dense = one_axis_matrix(KAPPA_SQ.sqrt(), 0.0);
        let s = StepMatrix::new(layout.clone(), dense.clone()).unwrap();
        let st = make_initial_state(layout, PerAxis::splat(1e4)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let (out, _) = st.evolve_linear(&s).unwrap().measure(&xph(), &mut rng).unwrap();

        // hand Schur complement: A - c cᵀ / B11 with c = κ e_p, B11 = 1 + κ²
        let evolved = &dense * st.cov() * dense.transpose();
        let c = evolved.column(3).clone_owned();
        let oracle = &evolved - &c * c.transpose() / evolved[(3, 3)];
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(out.cov()[(i, j)], oracle[(i, j)], epsilon = 1e-15);
            }
        }
        assert_relative_eq!(out.cov()[(2, 2)], 1.0 / 1.0183, max_relative = 1e-14);
        assert_relative_eq!(out.cov()[(2, 2)], 0.982029, max_relative = 1e-6);
        // fresh segment
        assert_eq!(out.cov()[(3, 3)], 1.0);
        assert_eq!(out.cov()[(4, 4)], 1.0);
        assert_eq!(out.cov()[(3, 2)], 0.0);
        assert_eq!(out.mean()[3], 0.0);
    }

    #[test]
    fn repeated_cycles_follow_squeeze_law() {
        let layout = one_axis_layout();
        let s = StepMatrix::new(layout.clone(), one_axis_matrix(KAPPA_SQ.sqrt(), 0.0)).unwrap();
        let mut st = make_initial_state(layout, PerAxis::splat(1e4)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for k in 1..=2000u32 {
            st.evolve_in_place(&s).unwrap();
            st.measure_in_place(&xph(), &mut rng).unwrap();
            if k % 250 == 0 {
                let expect = 1.0 / (1.0 + k as f64 * KAPPA_SQ);
                assert_relative_eq!(st.cov()[(2, 2)], expect, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn forced_expectation_gives_zero_shift() {
        let layout = one_axis_layout();
        let s = StepMatrix::new(layout.clone(), one_axis_matrix(KAPPA_SQ.sqrt(), MU)).unwrap();
        let mut st = make_initial_state(layout, PerAxis::splat(1e4)).unwrap();
        st.mean[0] = 1.7;
        let st = st.evolve_linear(&s).unwrap();
        let spec = MeasurementSpec::forced(BeamId(1), Quadrature::X, st.mean()[3]);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let (out, r) = st.measure(&spec, &mut rng).unwrap();
        assert_eq!(r.innovation, 0.0);
        for i in 0..3 {
            assert_eq!(out.mean()[i], st.mean()[i]);
        }
    }

    #[test]
    fn covariance_is_seed_independent() {
        let layout = one_axis_layout();
        let s = StepMatrix::new(layout.clone(), one_axis_matrix(KAPPA_SQ.sqrt(), MU)).unwrap();
        let run = |seed| {
            let mut st = make_initial_state(layout.clone(), PerAxis::splat(1e4)).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            for _ in 0..500 {
                st.evolve_in_place(&s).unwrap();
                st.measure_in_place(&xph(), &mut rng).unwrap();
            }
            st
        };
        let (a, b) = (run(1), run(2));
        assert_eq!(a.cov(), b.cov());
        assert_ne!(a.mean(), b.mean());
    }

    #[test]
    fn subcov_selects_in_requested_order() {
        let st = make_initial_state(one_axis_layout(), PerAxis::splat(4.0)).unwrap();
        let all: Vec<Variable> = st.layout().entries().to_vec();
        assert_eq!(&st.subcov(&all).unwrap(), st.cov());
        assert_eq!(st.subcov(&[Variable::Field(Axis::Y)]).unwrap()[(0, 0)], 8.0);
        let err = st.subcov(&[Variable::Field(Axis::X)]).unwrap_err();
        assert!(matches!(err, Error::UnknownVariable(_)));
    }

    #[test]
    fn csv_dump_has_header_mean_and_rows() {
        let st = make_initial_state(one_axis_layout(), PerAxis::splat(1.0)).unwrap();
        let csv = st.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "row,B_y,x_gas1,p_gas1,x_beam1,p_beam1");
        assert!(lines[1].starts_with("mean,"));
    }
}
