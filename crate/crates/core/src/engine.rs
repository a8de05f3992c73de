//! Full scenario runs: evolve → decohere → measure, segment by segment.
//!
//! Measurement outcomes come from a hidden sample of the physical system.
//! The field holds the true value, every quadrature starts as a draw from
//! its vacuum distribution, and the sample follows the same linear dynamics
//! as the filter. Each measured beam segment is read off the hidden sample
//! and then replaced by a fresh vacuum draw. The filter starts from zero
//! mean and only sees the outcomes.
//!
//! Trajectories of an ensemble share one covariance matrix, which does not
//! depend on the outcomes; means, hidden samples and generators are kept
//! per trajectory.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::entanglement::pair_geof;
use crate::error::{Error, Result};
use crate::hamiltonian::compile_generator;
use crate::layout::{Axis, BeamId, GasId, PerAxis, Variable, VariableLayout};
use crate::noise::{
    decohere_cov, effective_absorption, rates_from_physical, AbsorptionCompounding, DecoherenceMatrices, NoiseParams,
};
use crate::record::{AxisValues, RunSummary, Sample, TrajectoryRecord};
use crate::setup::{builtin_descriptor, Couplings, ScenarioName, SetupDescriptor};
use crate::state::{condition_cov, condition_mean, make_initial_state, propagate_cov, propagate_vector, GaussianState};

pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.9), normals by ziggurat (rand_distr 0.5 StandardNormal)";

#[derive(Debug, Clone, PartialEq)]
pub enum SetupSource {
    Builtin(ScenarioName),
    Custom(SetupDescriptor),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrueField {
    Fixed(PerAxis),
    /// Drawn per trajectory from the prior `N(0, var(B₀))`.
    SampledFromPrior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub params: NoiseParams,
    pub compounding: AbsorptionCompounding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub setup: SetupSource,
    /// Overrides of the setup's atom fractions, in gas order.
    pub atom_fractions: Option<Vec<f64>>,
    /// Overrides of the setup's flux fractions, in beam order.
    pub flux_fractions: Option<Vec<f64>>,
    pub couplings: Couplings,
    /// Segment duration, s.
    pub tau: f64,
    /// Total time, s.
    pub duration: f64,
    /// `var(B₀)` per axis, pT².
    pub prior_variance: PerAxis,
    pub true_field: TrueField,
    pub noise: Option<NoiseConfig>,
    pub seed: u64,
    /// Record every `stride` steps (plus `t = 0` and the final step).
    pub stride: u64,
    pub geof_pairs: Vec<(GasId, GasId)>,
    pub keep_states: bool,
}

impl ScenarioConfig {
    /// Reference operating point: τ = 10⁻⁸ s, T = 5 ms, `κ_τ² = 0.0183`,
    /// `μ_τ = 8.8×10⁻⁴`, `var(B₀) = 10⁴ pT²`, zero true field, no noise.
    pub fn new(name: ScenarioName) -> Self {
        Self {
            setup: SetupSource::Builtin(name),
            atom_fractions: None,
            flux_fractions: None,
            couplings: Couplings::reference(),
            tau: 1e-8,
            duration: 5e-3,
            prior_variance: PerAxis::splat(1e4),
            true_field: TrueField::Fixed(PerAxis::splat(0.0)),
            noise: None,
            seed: 0,
            stride: 1000,
            geof_pairs: Vec::new(),
            keep_states: false,
        }
    }

    pub fn scenario_name(&self) -> String {
        match &self.setup {
            SetupSource::Builtin(n) => n.to_string(),
            SetupSource::Custom(d) => d.name.clone(),
        }
    }

    pub fn descriptor(&self) -> Result<SetupDescriptor> {
        let base = match &self.setup {
            SetupSource::Builtin(n) => builtin_descriptor(*n, self.couplings)?,
            SetupSource::Custom(d) => SetupDescriptor { couplings: self.couplings, ..d.clone() },
        };
        base.with_fractions(self.atom_fractions.as_deref(), self.flux_fractions.as_deref())
    }

    /// `⌈T/τ⌉`, ignoring round-off in the ratio.
    pub fn step_count(&self) -> u64 {
        let r = self.duration / self.tau;
        (r * (1.0 - 1e-12)).ceil().max(1.0) as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidConfig(format!("tau = {} must be positive", self.tau)));
        }
        if !(self.duration >= self.tau) || !self.duration.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "duration = {} must be at least tau = {}",
                self.duration, self.tau
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        if let TrueField::Fixed(b) = self.true_field {
            if Axis::ALL.iter().any(|a| !b.get(*a).is_finite()) {
                return Err(Error::InvalidConfig("true field must be finite".into()));
            }
        }
        let d = self.descriptor()?;
        for (a, b) in &self.geof_pairs {
            d.gas(*a)?;
            d.gas(*b)?;
            if a == b {
                return Err(Error::InvalidConfig(format!("GEoF pair ({a}, {b}) repeats a gas")));
            }
        }
        if let Some(n) = &self.noise {
            rates_from_physical(&n.params, self.tau)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub trajectories: usize,
    pub final_delta_b: AxisValues,
    /// Empirical RMS of `m_B(T) − B_true`.
    pub rms_error: AxisValues,
    /// Fraction of trajectories with `|m_B(T) − B_true| ≤ 3 ΔB(T)`.
    pub coverage_3sigma: AxisValues,
}

struct Window {
    first: u64,
    end: u64,
    larmor: Vec<(usize, usize, f64)>,
    probe: Vec<(usize, usize, f64)>,
    measured: Vec<(usize, usize)>,
    decoherence: Option<DecoherenceMatrices>,
}

struct Member {
    mean: DVector<f64>,
    hidden: DVector<f64>,
    rng: ChaCha20Rng,
    true_field: PerAxis,
    samples: Vec<Sample>,
    states: Vec<GaussianState>,
}

struct Plan {
    layout: VariableLayout,
    windows: Vec<Window>,
    eta_tau: f64,
    noisy: bool,
    steps: u64,
}

fn plan(config: &ScenarioConfig) -> Result<Plan> {
    config.validate()?;
    let d = config.descriptor()?;
    let layout = d.layout()?;
    let steps = config.step_count();
    let rates = match &config.noise {
        Some(n) => Some((rates_from_physical(&n.params, config.tau)?, n.compounding)),
        None => None,
    };
    let noisy = rates.is_some_and(|(r, _)| !r.is_silent());
    let eta_tau = rates.map_or(0.0, |(r, _)| r.eta_tau);
    let mut windows = Vec::new();
    for w in &d.schedule {
        let h = d.window_hamiltonian(w)?;
        let measured = d
            .measurements(w)?
            .into_iter()
            .map(|(b, q)| Ok((layout.photon(b, q)?, layout.photon(b, q.conjugate())?)))
            .collect::<Result<Vec<_>>>()?;
        let decoherence = match rates {
            Some((r, compounding)) if noisy => {
                let absorption: Vec<(BeamId, f64)> = w
                    .beams
                    .iter()
                    .map(|b| (*b, effective_absorption(r.epsilon, d.gasses_traversed(w, *b), compounding)))
                    .collect();
                Some(DecoherenceMatrices::for_layout(&layout, r.eta_tau, &absorption)?)
            }
            _ => None,
        };
        windows.push(Window {
            first: (w.start * steps as f64).round() as u64,
            end: (w.end * steps as f64).round() as u64,
            larmor: compile_generator(&h.larmor, &layout)?,
            probe: compile_generator(&h.probe, &layout)?,
            measured,
            decoherence,
        });
    }
    Ok(Plan { layout, windows, eta_tau, noisy, steps })
}

fn axis_values(layout: &VariableLayout, v: impl Fn(usize) -> f64) -> AxisValues {
    let mut out = [None; 3];
    for a in Axis::ALL {
        if let Some(i) = layout.field_index(a) {
            out[a.index()] = Some(v(i));
        }
    }
    out
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn new_member(config: &ScenarioConfig, layout: &VariableLayout, seed: u64) -> Member {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let true_field = match config.true_field {
        TrueField::Fixed(b) => b,
        TrueField::SampledFromPrior => {
            let mut b = PerAxis::splat(0.0);
            for a in layout.field_axes() {
                b.set(a, config.prior_variance.get(a).sqrt() * normal(&mut rng));
            }
            b
        }
    };
    let n = layout.len();
    let mut hidden = DVector::zeros(n);
    for (i, v) in layout.entries().iter().enumerate() {
        hidden[i] = match v {
            Variable::Field(a) => true_field.get(*a),
            _ => std::f64::consts::FRAC_1_SQRT_2 * normal(&mut rng),
        };
    }
    Member { mean: DVector::zeros(n), hidden, rng, true_field, samples: Vec::new(), states: Vec::new() }
}

/// Single trajectory with the configured seed.
pub fn run(config: &ScenarioConfig) -> Result<TrajectoryRecord> {
    Ok(run_ensemble(config, 1)?.pop().expect("one trajectory"))
}

/// `count` trajectories with seeds `seed, seed + 1, …`; trajectory `k`
/// is identical to [`run`] with seed `seed + k`.
pub fn run_ensemble(config: &ScenarioConfig, count: usize) -> Result<Vec<TrajectoryRecord>> {
    if count == 0 {
        return Err(Error::InvalidConfig("at least one trajectory is required".into()));
    }
    let p = plan(config)?;
    let layout = &p.layout;
    let n = layout.len();
    let state0 = make_initial_state(layout.clone(), config.prior_variance)?;
    let mut cov = state0.cov().clone();
    let mut cov_scratch = cov.clone();
    let mut vec_scratch = DVector::zeros(n);
    let mut column = vec![0.0; n];
    let mut members: Vec<Member> =
        (0..count).map(|k| new_member(config, layout, config.seed.wrapping_add(k as u64))).collect();

    let record = |members: &mut [Member], cov: &DMatrix<f64>, step: u64, innovations: &[Vec<f64>]| {
        let delta_b = axis_values(layout, |i| (cov[(i, i)] / 2.0).sqrt());
        let shared = GaussianState::from_parts(layout.clone(), DVector::zeros(n), cov.clone())
            .expect("covariance matches layout");
        let geof: Vec<Option<f64>> =
            config.geof_pairs.iter().map(|(a, b)| pair_geof(&shared, *a, *b).ok()).collect();
        for (k, m) in members.iter_mut().enumerate() {
            m.samples.push(Sample {
                step,
                t: step as f64 * config.tau,
                delta_b,
                mean_b: axis_values(layout, |i| m.mean[i]),
                innovations: innovations.get(k).cloned().unwrap_or_default(),
                geof: geof.clone(),
            });
            if config.keep_states {
                let s = GaussianState::from_parts(layout.clone(), m.mean.clone(), cov.clone())
                    .expect("covariance matches layout");
                m.states.push(s);
            }
        }
    };
    record(&mut members, &cov, 0, &[]);

    let mut polarization: f64 = 1.0;
    let mut generator: Vec<(usize, usize, f64)> = Vec::new();
    let mut current: Option<usize> = None;
    let mut innovations: Vec<Vec<f64>> = vec![Vec::new(); count];
    for step in 0..p.steps {
        let window = p.windows.iter().position(|w| w.first <= step && step < w.end);
        let scale = polarization.sqrt();
        if p.noisy || window != current {
            generator.clear();
            if let Some(w) = window.map(|k| &p.windows[k]) {
                generator.extend_from_slice(&w.larmor);
                generator.extend(w.probe.iter().map(|&(i, j, v)| (i, j, scale * v)));
            }
            current = window;
        }

        propagate_cov(&mut cov, &mut cov_scratch, &generator);
        for m in members.iter_mut() {
            propagate_vector(&mut m.mean, &mut vec_scratch, &generator);
            propagate_vector(&mut m.hidden, &mut vec_scratch, &generator);
        }

        let w = window.map(|k| &p.windows[k]);
        if let Some(d) = w.and_then(|w| w.decoherence.as_ref()) {
            decohere_cov(&mut cov, d, polarization);
            let atom_scale = 2.0 / polarization;
            for m in members.iter_mut() {
                for i in 0..n {
                    m.mean[i] *= d.l[i];
                    m.hidden[i] *= d.l[i];
                    let added = atom_scale * d.m[i] + d.n[i];
                    if added > 0.0 {
                        m.hidden[i] += (added / 2.0).sqrt() * normal(&mut m.rng);
                    }
                }
            }
        }
        if p.noisy {
            polarization *= 1.0 - p.eta_tau;
        }

        let recording = (step + 1) % config.stride == 0 || step + 1 == p.steps;
        for inn in innovations.iter_mut() {
            inn.clear();
        }
        for &(mi, other) in w.map(|w| w.measured.as_slice()).unwrap_or(&[]) {
            let b11 = cov[(mi, mi)];
            if !b11.is_finite() {
                return Err(Error::NonFinite { step });
            }
            if !(b11 > 0.0) {
                return Err(Error::NumericalConditioning(format!(
                    "measured quadrature variance {b11} at step {step}"
                )));
            }
            column.copy_from_slice(cov.column(mi).as_slice());
            for (k, m) in members.iter_mut().enumerate() {
                let outcome = m.hidden[mi];
                let chi = outcome - m.mean[mi];
                condition_mean(&mut m.mean, &column, mi, other, chi);
                m.hidden[mi] = std::f64::consts::FRAC_1_SQRT_2 * normal(&mut m.rng);
                m.hidden[other] = std::f64::consts::FRAC_1_SQRT_2 * normal(&mut m.rng);
                if recording {
                    innovations[k].push(chi);
                }
            }
            condition_cov(&mut cov, &mut column, mi, other);
        }

        if !cov.iter().all(|v| v.is_finite())
            || members.iter().any(|m| !m.mean.iter().all(|v| v.is_finite()))
        {
            return Err(Error::NonFinite { step });
        }
        if recording {
            record(&mut members, &cov, step + 1, &innovations);
        }
    }

    let scenario = config.scenario_name();
    Ok(members
        .into_iter()
        .enumerate()
        .map(|(k, m)| {
            let last = m.samples.last().expect("t = 0 sample");
            let true_field = axis_values(layout, |i| match layout.entries()[i] {
                Variable::Field(a) => m.true_field.get(a),
                _ => unreachable!(),
            });
            let mut final_error = [None; 3];
            for a in 0..3 {
                final_error[a] = last.mean_b[a].zip(true_field[a]).map(|(m, b)| m - b);
            }
            TrajectoryRecord {
                summary: RunSummary {
                    scenario: scenario.clone(),
                    seed: config.seed.wrapping_add(k as u64),
                    rng_algorithm: RNG_ALGORITHM.to_string(),
                    tau: config.tau,
                    duration: config.duration,
                    steps: p.steps,
                    true_field,
                    final_delta_b: last.delta_b,
                    final_mean_b: last.mean_b,
                    final_error,
                },
                geof_pairs: config.geof_pairs.clone(),
                samples: m.samples,
                states: m.states,
            }
        })
        .collect())
}

/// RMS of the final estimator error and its 3σ coverage over `count`
/// seeded trajectories.
pub fn estimator_error_stats(config: &ScenarioConfig, count: usize) -> Result<ErrorStats> {
    if count < 2 {
        return Err(Error::InvalidConfig(format!("{count} trajectories; at least 2 are required")));
    }
    error_stats(&run_ensemble(config, count)?)
}

/// Final-time RMS error and 3σ coverage of already computed trajectories.
pub fn error_stats(records: &[TrajectoryRecord]) -> Result<ErrorStats> {
    let count = records.len();
    if count < 2 {
        return Err(Error::InvalidConfig(format!("{count} trajectories; at least 2 are required")));
    }
    let final_delta_b = records[0].summary.final_delta_b;
    let mut rms = [None; 3];
    let mut coverage = [None; 3];
    for a in 0..3 {
        let Some(sigma) = final_delta_b[a] else { continue };
        let errors: Vec<f64> = records.iter().map(|r| r.summary.final_error[a].expect("estimated axis")).collect();
        rms[a] = Some((errors.iter().map(|e| e * e).sum::<f64>() / count as f64).sqrt());
        coverage[a] = Some(errors.iter().filter(|e| e.abs() <= 3.0 * sigma).count() as f64 / count as f64);
    }
    Ok(ErrorStats { trajectories: count, final_delta_b, rms_error: rms, coverage_3sigma: coverage })
}
