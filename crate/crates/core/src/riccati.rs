//! Reduced `(B, p_at)` covariance dynamics in continuous time.
//!
//! `A` is the doubled 2×2 covariance block of `(B, p_at)` and obeys
//! `Ȧ = C − D A − A E − A B A`. Writing `A = W U⁻¹` linearizes it:
//! `Ẇ = −D W + C U`, `U̇ = B W + E U`.

use nalgebra::{Matrix2, Matrix4};

use crate::error::{Error, Result};

/// Largest `‖M‖∞ · h` allowed per propagation chunk before `(W, U)` is
/// renormalized to `(W U⁻¹, I)`.
const MAX_CHUNK_NORM: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiCoeffs {
    pub c: Matrix2<f64>,
    pub d: Matrix2<f64>,
    pub e: Matrix2<f64>,
    pub b: Matrix2<f64>,
}

/// Continuous-time rates: `κ² = κ_τ²/τ` (s⁻¹), `μ = μ_τ/τ` (pT⁻¹ s⁻¹),
/// `η = η_τ/τ` (s⁻¹) and the per-pass absorption `ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyRates {
    pub kappa_sq: f64,
    pub mu: f64,
    pub eta: f64,
    pub epsilon: f64,
    /// `N_at / <J_x>` in units of ħ; 2 for a fully polarized gas.
    pub atom_noise_factor: f64,
    /// `N_ph / (2 <S_x>)` in units of ħ; 1 for a coherent segment.
    pub photon_noise_factor: f64,
}

impl NoisyRates {
    pub fn frozen(kappa_sq: f64, mu: f64, eta: f64, epsilon: f64) -> Self {
        Self { kappa_sq, mu, eta, epsilon, atom_noise_factor: 2.0, photon_noise_factor: 1.0 }
    }
}

impl RiccatiCoeffs {
    pub fn zero() -> Self {
        Self { c: Matrix2::zeros(), d: Matrix2::zeros(), e: Matrix2::zeros(), b: Matrix2::zeros() }
    }

    pub fn noiseless(kappa_sq: f64, mu: f64) -> Self {
        let d = Matrix2::new(0.0, 0.0, mu, 0.0);
        Self { c: Matrix2::zeros(), d, e: d.transpose(), b: Matrix2::new(0.0, 0.0, 0.0, kappa_sq) }
    }

    /// Coefficients with atomic decay and photon absorption, with the
    /// polarizations frozen at their initial values.
    pub fn noisy(r: NoisyRates) -> Self {
        let d = Matrix2::new(0.0, 0.0, r.mu, r.eta / 2.0);
        let gain = (1.0 - r.epsilon) * r.kappa_sq / (1.0 - r.epsilon * (1.0 - r.photon_noise_factor));
        Self {
            c: Matrix2::new(0.0, 0.0, 0.0, r.atom_noise_factor * r.eta),
            d,
            e: d.transpose(),
            b: Matrix2::new(0.0, 0.0, 0.0, gain),
        }
    }

    /// Right-hand side `C − D A − A E − A B A`.
    pub fn rhs(&self, a: &Matrix2<f64>) -> Matrix2<f64> {
        self.c - self.d * a - a * self.e - a * self.b * a
    }

    fn block(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<2, 2>(0, 0).copy_from(&(-self.d));
        m.fixed_view_mut::<2, 2>(0, 2).copy_from(&self.c);
        m.fixed_view_mut::<2, 2>(2, 0).copy_from(&self.b);
        m.fixed_view_mut::<2, 2>(2, 2).copy_from(&self.e);
        m
    }
}

/// Closed-form noiseless field variance (pT²) after probing for `t`
/// seconds, starting from prior variance `var0`.
pub fn var_noiseless(t: f64, kappa_sq: f64, mu: f64, var0: f64) -> f64 {
    let k2t = kappa_sq * t;
    let m2 = mu * mu;
    let num = var0 * (k2t + 1.0);
    let den = kappa_sq * kappa_sq * m2 * var0 * t.powi(4) / 6.0
        + 2.0 * kappa_sq * m2 * var0 * t.powi(3) / 3.0
        + k2t
        + 1.0;
    num / den
}

/// Long-time noisy asymptote `η / (μ² t)`, valid once `√(η κ²) t ≫ 1`
/// (and `η t ≪ 1`); checking that regime is the caller's job.
pub fn var_noisy_asymptote(t: f64, eta: f64, mu: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("asymptote needs t > 0, got {t}")));
    }
    Ok(eta / (mu * mu * t))
}

/// Propagates `A(0) = a0` to time `t` through the linear `(W, U)` system.
pub fn integrate_wu(coeffs: &RiccatiCoeffs, a0: &Matrix2<f64>, t: f64) -> Result<Matrix2<f64>> {
    Ok(integrate_wu_series(coeffs, a0, &[t])?[0])
}

/// Same as [`integrate_wu`] for an increasing list of times, reusing the
/// propagation between consecutive points.
pub fn integrate_wu_series(coeffs: &RiccatiCoeffs, a0: &Matrix2<f64>, times: &[f64]) -> Result<Vec<Matrix2<f64>>> {
    let m = coeffs.block();
    let norm = m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut a = *a0;
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if !(t >= now) {
            return Err(Error::Domain(format!("times must be non-negative and increasing, got {t} after {now}")));
        }
        let span = t - now;
        if span > 0.0 {
            let chunks = ((norm * span / MAX_CHUNK_NORM).ceil() as usize).max(1);
            let h = span / chunks as f64;
            let phi = (m * h).exp();
            for _ in 0..chunks {
                a = renormalized_step(&phi, &a)?;
            }
        }
        now = t;
        out.push(a);
    }
    Ok(out)
}

fn renormalized_step(phi: &Matrix4<f64>, a: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let w = phi.fixed_view::<2, 2>(0, 0) * a + phi.fixed_view::<2, 2>(0, 2);
    let u = phi.fixed_view::<2, 2>(2, 0) * a + phi.fixed_view::<2, 2>(2, 2);
    let scale = u.abs().max().max(f64::MIN_POSITIVE);
    if u.determinant().abs() < 1e-13 * scale * scale {
        return Err(Error::NumericalConditioning(format!("U is singular (det {:e})", u.determinant())));
    }
    let inv = u
        .try_inverse()
        .ok_or_else(|| Error::NumericalConditioning("U is not invertible".into()))?;
    let next = w * inv;
    Ok((next + next.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const TAU: f64 = 1e-8;
    const KAPPA_SQ: f64 = 0.0183 / TAU;
    const MU: f64 = 8.8e-4 / TAU;
    const ETA: f64 = 1.76e-8 / TAU;
    const EPS: f64 = 0.0281;
    const VAR0: f64 = 1e4;
    const T_END: f64 = 5e-3;

    fn a0(var0: f64) -> Matrix2<f64> {
        Matrix2::new(2.0 * var0, 0.0, 0.0, 1.0)
    }

    fn slope(f: impl Fn(f64) -> f64, t0: f64, t1: f64) -> f64 {
        // least squares over 50 log-spaced points
        let pts: Vec<(f64, f64)> = (0..50)
            .map(|i| {
                let t = t0 * (t1 / t0).powf(i as f64 / 49.0);
                (t.ln(), f(t).ln())
            })
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn closed_form_starts_at_prior() {
        assert_eq!(var_noiseless(0.0, KAPPA_SQ, MU, VAR0), VAR0);
    }

    #[test]
    fn closed_form_reference_value() {
        let db = var_noiseless(T_END, KAPPA_SQ, MU, VAR0).sqrt();
        assert_relative_eq!(db, 5.814e-5, max_relative = 5e-3);
    }

    #[test]
    fn closed_form_approaches_cubic_law() {
        let v = var_noiseless(T_END, KAPPA_SQ, MU, VAR0);
        let ratio = v * KAPPA_SQ * MU * MU * T_END.powi(3) / 6.0;
        assert!((ratio - 1.0).abs() < 1e-3, "ratio {ratio}");
    }

    #[test]
    fn closed_form_forgets_prior() {
        let a = var_noiseless(T_END, KAPPA_SQ, MU, 1e2);
        let b = var_noiseless(T_END, KAPPA_SQ, MU, 1e6);
        assert_relative_eq!(a, b, max_relative = 1e-3);
    }

    #[test]
    fn closed_form_is_non_increasing() {
        let mut last = f64::INFINITY;
        for i in 0..=1000 {
            let v = var_noiseless(T_END * i as f64 / 1000.0, KAPPA_SQ, MU, VAR0);
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn closed_form_satisfies_riccati_equation() {
        // d/dt of the closed form against the Riccati right-hand side, by
        // central differences on the B entry
        let coeffs = RiccatiCoeffs::noiseless(KAPPA_SQ, MU);
        let a = integrate_wu(&coeffs, &a0(VAR0), 1e-4).unwrap();
        let h = 1e-9;
        let deriv = (var_noiseless(1e-4 + h, KAPPA_SQ, MU, VAR0) - var_noiseless(1e-4 - h, KAPPA_SQ, MU, VAR0)) / (2.0 * h);
        assert_relative_eq!(2.0 * deriv, coeffs.rhs(&a)[(0, 0)], max_relative = 1e-5);
    }

    #[test]
    fn late_time_slope_is_minus_three() {
        let s = slope(|t| var_noiseless(t, KAPPA_SQ, MU, VAR0), T_END / 10.0, T_END);
        assert!((s + 3.0).abs() < 0.02, "slope {s}");
    }

    #[test]
    fn zero_coefficients_freeze_the_block() {
        let a = Matrix2::new(3.0, 0.5, 0.5, 2.0);
        assert_eq!(integrate_wu(&RiccatiCoeffs::zero(), &a, 1.0).unwrap(), a);
    }

    #[test]
    fn linearized_solution_matches_closed_form() {
        let coeffs = RiccatiCoeffs::noiseless(KAPPA_SQ, MU);
        let times: Vec<f64> = (1..=100).map(|i| T_END * i as f64 / 100.0).collect();
        let sol = integrate_wu_series(&coeffs, &a0(VAR0), &times).unwrap();
        for (t, a) in times.iter().zip(&sol) {
            let exact = var_noiseless(*t, KAPPA_SQ, MU, VAR0);
            assert_relative_eq!(a[(0, 0)] / 2.0, exact, max_relative = 1e-9);
        }
    }

    #[test]
    fn single_time_equals_series() {
        let coeffs = RiccatiCoeffs::noiseless(KAPPA_SQ, MU);
        let a = integrate_wu(&coeffs, &a0(VAR0), 2e-3).unwrap();
        assert_relative_eq!(a[(0, 0)] / 2.0, var_noiseless(2e-3, KAPPA_SQ, MU, VAR0), max_relative = 1e-9);
    }

    #[test]
    fn decreasing_times_are_rejected() {
        let coeffs = RiccatiCoeffs::noiseless(KAPPA_SQ, MU);
        assert!(matches!(
            integrate_wu_series(&coeffs, &a0(VAR0), &[2e-3, 1e-3]),
            Err(Error::Domain(_))
        ));
    }

    fn noisy() -> RiccatiCoeffs {
        RiccatiCoeffs::noisy(NoisyRates::frozen(KAPPA_SQ, MU, ETA, EPS))
    }

    #[test]
    fn noisy_reference_value() {
        let a = integrate_wu(&noisy(), &a0(VAR0), T_END).unwrap();
        let db = (a[(0, 0)] / 2.0).sqrt();
        assert_relative_eq!(db, 2.333e-4, max_relative = 0.03);
    }

    #[test]
    fn noisy_solution_stays_above_asymptote() {
        let times: Vec<f64> = (1..=200).map(|i| T_END * i as f64 / 200.0).collect();
        let sol = integrate_wu_series(&noisy(), &a0(VAR0), &times).unwrap();
        for (t, a) in times.iter().zip(&sol) {
            if (ETA * KAPPA_SQ).sqrt() * t > 5.0 {
                let asym = var_noisy_asymptote(*t, ETA, MU).unwrap();
                assert!(a[(0, 0)] / 2.0 >= 0.9 * asym, "t = {t}");
            }
        }
    }

    #[test]
    fn noisy_solution_approaches_inverse_time_law() {
        // the 1/t law is the leading term only; corrections decay like 1/t,
        // so the slope approaches -1 well after the crossover
        let coeffs = noisy();
        let f = |t: f64| integrate_wu(&coeffs, &a0(VAR0), t).unwrap()[(0, 0)] / 2.0;
        let s = slope(f, 0.1, 1.0);
        assert!((s + 1.0).abs() < 0.05, "slope {s}");
        let late = f(1.0) / var_noisy_asymptote(1.0, ETA, MU).unwrap();
        assert!((late - 1.0).abs() < 0.05, "ratio {late}");
    }

    #[test]
    fn asymptote_arithmetic() {
        let v = var_noisy_asymptote(T_END, ETA, MU).unwrap();
        assert_relative_eq!(v, 4.545e-8, max_relative = 1e-3);
        assert_relative_eq!(v.sqrt(), 2.132e-4, max_relative = 1e-3);
        assert_relative_eq!(var_noisy_asymptote(2.0 * T_END, ETA, MU).unwrap(), v / 2.0, max_relative = 1e-15);
        assert_eq!(var_noisy_asymptote(T_END, 0.0, MU).unwrap(), 0.0);
        assert!(var_noisy_asymptote(0.0, ETA, MU).is_err());
    }
}
