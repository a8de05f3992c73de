//! Photon absorption and atomic decay.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{BeamId, Quadrature, Variable, VariableLayout};
use crate::state::GaussianState;

/// Physical inputs for the absorption and decay probabilities. Rates and
/// detuning share one unit (s⁻¹); areas share one unit (m²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalNoiseParams {
    /// Atomic decay rate `Γ`.
    pub decay_rate: f64,
    /// Resonant absorption cross-section `σ = λ²/2π`.
    pub cross_section: f64,
    /// Beam cross-section `A`.
    pub beam_area: f64,
    pub detuning: f64,
    /// Photon flux `Φ` in s⁻¹.
    pub photon_flux: f64,
    pub atom_number: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseParams {
    /// `ε` per pass and `η_τ` per segment, given directly.
    Direct { epsilon: f64, eta_tau: f64 },
    Physical(PhysicalNoiseParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRates {
    pub epsilon: f64,
    pub eta_tau: f64,
}

impl NoiseRates {
    pub fn is_silent(&self) -> bool {
        self.epsilon == 0.0 && self.eta_tau == 0.0
    }
}

/// How absorption accumulates for a beam crossing several gasses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbsorptionCompounding {
    /// `ε` per gas traversed: transmission `(1 − ε)^gasses`.
    #[default]
    PerGas,
    /// `ε` once per beam, independent of the path.
    PerBeam,
}

/// `ε = N_at (σ/A) L(Δ)` and `η_τ = Φ τ (σ/A) L(Δ)` with the Lorentzian
/// `L(Δ) = (Γ²/4) / (Γ²/4 + Δ²)`.
pub fn rates_from_physical(params: &NoiseParams, tau: f64) -> Result<NoiseRates> {
    let rates = match *params {
        NoiseParams::Direct { epsilon, eta_tau } => NoiseRates { epsilon, eta_tau },
        NoiseParams::Physical(p) => {
            let fields = [p.decay_rate, p.cross_section, p.beam_area, p.detuning.abs(), p.photon_flux, p.atom_number];
            if fields.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || !(p.beam_area > 0.0) {
                return Err(Error::InvalidConfig("physical noise parameters must be finite and non-negative".into()));
            }
            let half = p.decay_rate * p.decay_rate / 4.0;
            let lorentz = if half == 0.0 { 0.0 } else { half / (half + p.detuning * p.detuning) };
            let ratio = p.cross_section / p.beam_area;
            NoiseRates {
                epsilon: p.atom_number * ratio * lorentz,
                eta_tau: p.photon_flux * tau * ratio * lorentz,
            }
        }
    };
    for (name, v) in [("epsilon", rates.epsilon), ("eta_tau", rates.eta_tau)] {
        if !(0.0..1.0).contains(&v) {
            return Err(Error::InvalidConfig(format!("{name} = {v} must lie in [0, 1)")));
        }
    }
    Ok(rates)
}

/// Absorption probability of one beam after crossing `gasses` gasses.
pub fn effective_absorption(epsilon: f64, gasses: usize, compounding: AbsorptionCompounding) -> f64 {
    match compounding {
        AbsorptionCompounding::PerBeam => epsilon,
        AbsorptionCompounding::PerGas => match gasses {
            0 => 0.0,
            1 => epsilon,
            n => 1.0 - (1.0 - epsilon).powi(n as i32),
        },
    }
}

/// Diagonal loss `L`, atomic noise `M` and photonic noise `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoherenceMatrices {
    pub l: DVector<f64>,
    pub m: DVector<f64>,
    pub n: DVector<f64>,
}

impl DecoherenceMatrices {
    /// Every atomic quadrature decays with `η_τ`; each listed beam loses
    /// its own absorption probability. Fields and unlisted beams are
    /// untouched.
    pub fn for_layout(layout: &VariableLayout, eta_tau: f64, absorption: &[(BeamId, f64)]) -> Result<Self> {
        if !(0.0..1.0).contains(&eta_tau) {
            return Err(Error::InvalidConfig(format!("eta_tau = {eta_tau} must lie in [0, 1)")));
        }
        let size = layout.len();
        let mut l = DVector::from_element(size, 1.0);
        let mut m = DVector::zeros(size);
        let mut n = DVector::zeros(size);
        for (i, v) in layout.entries().iter().enumerate() {
            if let Variable::Atom { .. } = v {
                l[i] = (1.0 - eta_tau).sqrt();
                m[i] = eta_tau;
            }
        }
        for &(beam, eps) in absorption {
            if !(0.0..1.0).contains(&eps) {
                return Err(Error::InvalidConfig(format!("absorption {eps} of {beam} must lie in [0, 1)")));
            }
            for kind in [Quadrature::X, Quadrature::P] {
                let i = layout.photon(beam, kind)?;
                l[i] = (1.0 - eps).sqrt();
                n[i] = eps;
            }
        }
        Ok(Self { l, m, n })
    }
}

/// `m ← L m`, `γ ← L γ L + (2/P) M + N`, where `P = <J_x(t)>/<J_x(0)>` is
/// the remaining atomic polarization (so `ħ N_at / <J_x(t)> = 2/P`) and
/// each probe segment is fresh (`ħ N_ph / 2<S_x> = 1`).
pub fn apply_decoherence(
    state: &GaussianState,
    d: &DecoherenceMatrices,
    polarization_factor: f64,
) -> Result<GaussianState> {
    let mut out = state.clone();
    apply_decoherence_in_place(&mut out, d, polarization_factor)?;
    Ok(out)
}

pub fn apply_decoherence_in_place(
    state: &mut GaussianState,
    d: &DecoherenceMatrices,
    polarization_factor: f64,
) -> Result<()> {
    let size = state.layout().len();
    if d.l.len() != size {
        return Err(Error::LayoutMismatch { expected: size, found: d.l.len() });
    }
    if !(polarization_factor > 0.0 && polarization_factor <= 1.0) {
        return Err(Error::Domain(format!("polarization factor {polarization_factor} outside (0, 1]")));
    }
    let (mean, cov) = state.parts_mut();
    for j in 0..size {
        mean[j] *= d.l[j];
    }
    decohere_cov(cov, d, polarization_factor);
    Ok(())
}

pub(crate) fn decohere_cov(cov: &mut DMatrix<f64>, d: &DecoherenceMatrices, polarization_factor: f64) {
    let n = cov.nrows();
    let atom_scale = 2.0 / polarization_factor;
    for j in 0..n {
        for i in 0..n {
            cov[(i, j)] *= d.l[i] * d.l[j];
        }
        cov[(j, j)] += atom_scale * d.m[j] + d.n[j];
    }
}

/// Polarization and probe coupling after `steps` segments of decay:
/// `<J_x>` shrinks by `(1 − η_τ)` per segment and `κ_τ` by its square root.
pub fn decay_couplings(kappa_tau: f64, polarization_factor: f64, eta_tau: f64, steps: u64) -> (f64, f64) {
    let factor = (1.0 - eta_tau).powf(steps as f64);
    (kappa_tau * factor.sqrt(), polarization_factor * factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{Axis, GasId, Orientation, PerAxis};
    use crate::state::{make_initial_state, MeasurementSpec};
    use crate::step::StepMatrix;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn layout() -> VariableLayout {
        VariableLayout::builder()
            .field(Axis::Y)
            .gas(GasId(1), Orientation::Positive)
            .beam(BeamId(1))
            .build()
            .unwrap()
    }

    fn step(kappa: f64, mu: f64) -> StepMatrix {
        let mut s = DMatrix::identity(5, 5);
        s[(1, 4)] = kappa;
        s[(2, 0)] = -mu;
        s[(3, 2)] = kappa;
        StepMatrix::new(layout(), s).unwrap()
    }

    fn physical(detuning: f64) -> NoiseParams {
        NoiseParams::Physical(PhysicalNoiseParams {
            decay_rate: 3.0e7,
            cross_section: 1.0e-13,
            beam_area: 1.0e-6,
            detuning,
            photon_flux: 1.0e14,
            atom_number: 1.0e5,
        })
    }

    #[test]
    fn far_detuned_is_silent() {
        let r = rates_from_physical(&physical(1e30), 1e-8).unwrap();
        assert!(r.epsilon < 1e-40 && r.eta_tau < 1e-40);
    }

    #[test]
    fn resonant_limit() {
        let r = rates_from_physical(&physical(0.0), 1e-8).unwrap();
        assert_relative_eq!(r.epsilon, 1.0e5 * 1.0e-7, max_relative = 1e-14);
        assert_relative_eq!(r.eta_tau, 1.0e14 * 1e-8 * 1.0e-7, max_relative = 1e-14);
    }

    #[test]
    fn direct_rates_pass_through() {
        let p = NoiseParams::Direct { epsilon: 0.0281, eta_tau: 1.76e-8 };
        let r = rates_from_physical(&p, 1e-8).unwrap();
        assert_eq!(r, NoiseRates { epsilon: 0.0281, eta_tau: 1.76e-8 });
    }

    #[test]
    fn saturated_probabilities_are_rejected() {
        let p = NoiseParams::Direct { epsilon: 1.0, eta_tau: 0.0 };
        assert!(matches!(rates_from_physical(&p, 1e-8), Err(Error::InvalidConfig(_))));
        let mut q = match physical(0.0) {
            NoiseParams::Physical(q) => q,
            _ => unreachable!(),
        };
        q.atom_number = 1e9;
        assert!(matches!(rates_from_physical(&NoiseParams::Physical(q), 1e-8), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn zero_noise_is_bitwise_identity() {
        let mut st = make_initial_state(layout(), PerAxis::splat(1e4)).unwrap();
        st.evolve_in_place(&step(0.135, 8.8e-4)).unwrap();
        let d = DecoherenceMatrices::for_layout(&layout(), 0.0, &[(BeamId(1), 0.0)]).unwrap();
        let out = apply_decoherence(&st, &d, 1.0).unwrap();
        assert_eq!(out, st);
    }

    #[test]
    fn single_step_plug_in_values() {
        let (eta, eps, k2): (f64, f64, f64) = (1e-3, 0.0281, 0.0183);
        let mut st = make_initial_state(layout(), PerAxis::splat(1e4)).unwrap();
        st.evolve_in_place(&step(k2.sqrt(), 0.0)).unwrap();
        let d = DecoherenceMatrices::for_layout(&layout(), eta, &[(BeamId(1), eps)]).unwrap();
        let out = apply_decoherence(&st, &d, 1.0).unwrap();
        assert_relative_eq!(out.cov()[(2, 2)], (1.0 - eta) + 2.0 * eta, max_relative = 1e-15);
        assert_relative_eq!(out.cov()[(2, 2)], 1.0 + eta, max_relative = 1e-15);
        assert_relative_eq!(out.cov()[(3, 3)], (1.0 - eps) * (1.0 + k2) + eps, max_relative = 1e-15);
        assert_eq!(out.cov()[(0, 0)], st.cov()[(0, 0)]);
    }

    #[test]
    fn depolarized_gas_gets_more_atomic_noise() {
        let st = make_initial_state(layout(), PerAxis::splat(1.0)).unwrap();
        let d = DecoherenceMatrices::for_layout(&layout(), 0.01, &[]).unwrap();
        let out = apply_decoherence(&st, &d, 0.5).unwrap();
        assert_relative_eq!(out.cov()[(1, 1)], 0.99 + 4.0 * 0.01, max_relative = 1e-15);
        assert!(apply_decoherence(&st, &d, 0.0).is_err());
    }

    #[test]
    fn decay_of_couplings() {
        assert_eq!(decay_couplings(0.3, 1.0, 1.76e-8, 0), (0.3, 1.0));
        assert_eq!(decay_couplings(0.3, 0.7, 0.0, 12345), (0.3, 0.7));
        let (k, p) = decay_couplings(1.0, 1.0, 1.76e-8, 500_000);
        assert_relative_eq!(p, (-8.8e-3f64).exp(), max_relative = 1e-6);
        assert_relative_eq!(p, 0.99124, max_relative = 1e-5);
        assert_relative_eq!(k, p.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn compounding_rules() {
        assert_eq!(effective_absorption(0.1, 4, AbsorptionCompounding::PerBeam), 0.1);
        assert_relative_eq!(effective_absorption(0.1, 4, AbsorptionCompounding::PerGas), 1.0 - 0.9f64.powi(4));
        assert_eq!(effective_absorption(0.1, 1, AbsorptionCompounding::PerGas), 0.1);
    }

    #[test]
    fn noisy_cycles_keep_physical_bounds_and_settle() {
        let (eta, eps) = (1e-3, 0.0281);
        let s = step(0.0183f64.sqrt(), 8.8e-4);
        let d = DecoherenceMatrices::for_layout(&layout(), eta, &[(BeamId(1), eps)]).unwrap();
        let mut st = make_initial_state(layout(), PerAxis::splat(1e4)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let spec = MeasurementSpec::sampled(BeamId(1), Quadrature::X);
        let mut last_b = f64::INFINITY;
        for _ in 0..3000 {
            st.evolve_in_place(&s).unwrap();
            apply_decoherence_in_place(&mut st, &d, 1.0).unwrap();
            st.measure_in_place(&spec, &mut rng).unwrap();
            assert!(st.cov()[(0, 0)] <= last_b);
            last_b = st.cov()[(0, 0)];
            for p in st.uncertainty_products() {
                assert!(p >= 1.0 - 1e-9, "product {p}");
            }
        }
    }

    #[test]
    fn squeezing_reaches_a_noise_floor() {
        let (eta, eps, k2): (f64, f64, f64) = (1e-3, 0.0281, 0.0183);
        let s = step(k2.sqrt(), 0.0);
        let d = DecoherenceMatrices::for_layout(&layout(), eta, &[(BeamId(1), eps)]).unwrap();
        let mut st = make_initial_state(layout(), PerAxis::splat(1.0)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let spec = MeasurementSpec::sampled(BeamId(1), Quadrature::X);
        let mut prev = 0.0;
        for _ in 0..20_000 {
            prev = st.cov()[(2, 2)];
            st.evolve_in_place(&s).unwrap();
            apply_decoherence_in_place(&mut st, &d, 1.0).unwrap();
            st.measure_in_place(&spec, &mut rng).unwrap();
        }
        let floor = st.cov()[(2, 2)];
        assert!((floor - prev).abs() < 1e-10);
        assert!(floor < 1.0 && floor > 1.0 / (1.0 + k2 / eta));
    }
}
