//! Physical setups: gasses, probe beams, resource sharing and schedules.
//!
//! Interaction terms are written in terms of collective spin components
//! `J_a` of each gas and converted to quadratures using the gas's own
//! polarization: for a gas polarized along `a`, the transverse components
//! `(b, c)` with `(a, b, c)` cyclic become `(x, p)`, both normalized by the
//! gas's own `|<J_a>|`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::BilinearHamiltonian;
use crate::layout::{Axis, BeamId, GasId, Orientation, Quadrature, Variable, VariableLayout};

const FRACTION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    OneAxis,
    OneGasTwoBeams,
    TwoSeparate,
    TwoSequential,
    TwoEntangled,
    SixGasVector,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 6] = [
        ScenarioName::OneAxis,
        ScenarioName::OneGasTwoBeams,
        ScenarioName::TwoSeparate,
        ScenarioName::TwoSequential,
        ScenarioName::TwoEntangled,
        ScenarioName::SixGasVector,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::OneAxis => "one-axis",
            ScenarioName::OneGasTwoBeams => "one-gas-two-beams",
            ScenarioName::TwoSeparate => "two-separate",
            ScenarioName::TwoSequential => "two-sequential",
            ScenarioName::TwoEntangled => "two-entangled",
            ScenarioName::SixGasVector => "six-gas-vector",
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

/// Per-segment couplings at full resources (all atoms, full flux).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Couplings {
    pub kappa_tau: f64,
    pub mu_tau: f64,
}

impl Couplings {
    /// Default operating point: `κ_τ² = 0.0183`, `μ_τ = 8.8e-4`.
    pub fn reference() -> Self {
        Self { kappa_tau: 0.0183f64.sqrt(), mu_tau: 8.8e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasSpec {
    pub id: GasId,
    /// Macroscopic polarization axis and its sign.
    pub polarization: Axis,
    pub orientation: Orientation,
    pub atom_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSpec {
    pub id: BeamId,
    /// `None` where the beam path is folded through several gasses.
    pub propagation: Option<Axis>,
    /// Classical (macroscopic) Stokes component.
    pub stokes: Axis,
    pub flux_fraction: f64,
    pub measured: Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Partner {
    Field(Axis),
    Photon(BeamId, Quadrature),
}

/// `sign · J_component(gas) · partner`, scaled by the resource-adjusted
/// `μ_τ` (field partner) or `κ_τ` (photon partner).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinTerm {
    pub sign: f64,
    pub gas: GasId,
    pub component: Axis,
    pub partner: Partner,
}

impl SpinTerm {
    pub fn larmor(sign: f64, gas: u8, component: Axis, field: Axis) -> Self {
        Self { sign, gas: GasId(gas), component, partner: Partner::Field(field) }
    }

    pub fn probe(sign: f64, gas: u8, component: Axis, beam: u8, kind: Quadrature) -> Self {
        Self { sign, gas: GasId(gas), component, partner: Partner::Photon(BeamId(beam), kind) }
    }
}

/// A schedule window covering `[start, end)` as fractions of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
    pub terms: Vec<SpinTerm>,
    /// Beams switched on (and read out) during the window.
    pub beams: Vec<BeamId>,
}

/// Split of a window's Hamiltonian into field-driven and probe parts; the
/// probe part is the one that weakens as the atomic polarization decays.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowHamiltonian {
    pub larmor: BilinearHamiltonian,
    pub probe: BilinearHamiltonian,
}

impl WindowHamiltonian {
    pub fn total(&self) -> BilinearHamiltonian {
        let mut h = self.larmor.clone();
        h.extend(&self.probe);
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetupDescriptor {
    pub name: String,
    pub field_axes: Vec<Axis>,
    pub gasses: Vec<GasSpec>,
    pub beams: Vec<BeamSpec>,
    pub couplings: Couplings,
    pub schedule: Vec<Window>,
}

impl SetupDescriptor {
    pub fn validate(&self) -> Result<()> {
        let atoms: f64 = self.gasses.iter().map(|g| g.atom_fraction).sum();
        if self.gasses.iter().any(|g| !(g.atom_fraction > 0.0)) || atoms > 1.0 + FRACTION_SLACK {
            return Err(Error::InvalidConfig(format!(
                "atom fractions must be positive and sum to at most 1 (sum = {atoms})"
            )));
        }
        if self.beams.iter().any(|b| !(b.flux_fraction > 0.0)) {
            return Err(Error::InvalidConfig("flux fractions must be positive".into()));
        }
        if !self.couplings.kappa_tau.is_finite() || !self.couplings.mu_tau.is_finite() {
            return Err(Error::InvalidConfig("couplings must be finite".into()));
        }
        let mut last_end = 0.0;
        for (k, w) in self.schedule.iter().enumerate() {
            if !(w.start >= last_end && w.end > w.start && w.end <= 1.0) {
                return Err(Error::InvalidConfig(format!("schedule window {k} is not ordered and disjoint")));
            }
            last_end = w.end;
            let mut flux = 0.0;
            for b in &w.beams {
                flux += self.beam(*b)?.flux_fraction;
            }
            if flux > 1.0 + FRACTION_SLACK {
                return Err(Error::InvalidConfig(format!(
                    "flux fractions of simultaneous beams in window {k} sum to {flux} > 1"
                )));
            }
            for t in &w.terms {
                self.gas(t.gas)?;
                if let Partner::Photon(b, _) = t.partner {
                    if !w.beams.contains(&b) {
                        return Err(Error::InvalidConfig(format!("{b} couples in window {k} but is not active")));
                    }
                }
                if let Partner::Field(a) = t.partner {
                    if !self.field_axes.contains(&a) {
                        return Err(Error::InvalidConfig(format!("field B_{a} is not estimated by this setup")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn gas(&self, id: GasId) -> Result<&GasSpec> {
        self.gasses.iter().find(|g| g.id == id).ok_or_else(|| Error::UnknownVariable(id.to_string()))
    }

    pub fn beam(&self, id: BeamId) -> Result<&BeamSpec> {
        self.beams.iter().find(|b| b.id == id).ok_or_else(|| Error::UnknownVariable(id.to_string()))
    }

    /// Replaces atom and/or flux fractions (in gas / beam order) and
    /// re-validates the resource budget.
    pub fn with_fractions(mut self, atoms: Option<&[f64]>, flux: Option<&[f64]>) -> Result<Self> {
        if let Some(a) = atoms {
            if a.len() != self.gasses.len() {
                return Err(Error::InvalidConfig(format!(
                    "{} atom fractions given for {} gasses",
                    a.len(),
                    self.gasses.len()
                )));
            }
            for (g, f) in self.gasses.iter_mut().zip(a) {
                g.atom_fraction = *f;
            }
        }
        if let Some(fl) = flux {
            if fl.len() != self.beams.len() {
                return Err(Error::InvalidConfig(format!(
                    "{} flux fractions given for {} beams",
                    fl.len(),
                    self.beams.len()
                )));
            }
            for (b, f) in self.beams.iter_mut().zip(fl) {
                b.flux_fraction = *f;
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn layout(&self) -> Result<VariableLayout> {
        let mut b = VariableLayout::builder();
        for a in &self.field_axes {
            b = b.field(*a);
        }
        for g in &self.gasses {
            b = b.gas(g.id, g.orientation);
        }
        for beam in &self.beams {
            b = b.beam(beam.id);
        }
        b.build()
    }

    /// Quadrature carrying spin component `component` of `gas`.
    pub fn spin_quadrature(&self, gas: GasId, component: Axis) -> Result<Variable> {
        let g = self.gas(gas)?;
        let (x_axis, p_axis) = match g.polarization {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::Z, Axis::X),
            Axis::Z => (Axis::X, Axis::Y),
        };
        let kind = if component == x_axis {
            Quadrature::X
        } else if component == p_axis {
            Quadrature::P
        } else {
            return Err(Error::InvalidHamiltonian(format!(
                "J_{component} of {gas} is its classical polarization component"
            )));
        };
        Ok(Variable::Atom { gas, kind })
    }

    pub fn window_hamiltonian(&self, window: &Window) -> Result<WindowHamiltonian> {
        let mut larmor = BilinearHamiltonian::new();
        let mut probe = BilinearHamiltonian::new();
        for t in &window.terms {
            let spin = self.spin_quadrature(t.gas, t.component)?;
            match t.partner {
                Partner::Field(axis) => {
                    let mu = self.couplings.mu_tau * self.gas(t.gas)?.atom_fraction.sqrt();
                    larmor.add(t.sign * mu, Variable::Field(axis), spin)?;
                }
                Partner::Photon(beam, kind) => {
                    let (kappa, _) = resource_scaled_couplings(self, t.gas, beam)?;
                    probe.add(t.sign * kappa, spin, Variable::Photon { beam, kind })?;
                }
            }
        }
        Ok(WindowHamiltonian { larmor, probe })
    }

    /// Number of distinct gasses a beam couples to within a window.
    pub fn gasses_traversed(&self, window: &Window, beam: BeamId) -> usize {
        let mut gasses: Vec<GasId> = window
            .terms
            .iter()
            .filter(|t| matches!(t.partner, Partner::Photon(b, _) if b == beam))
            .map(|t| t.gas)
            .collect();
        gasses.sort();
        gasses.dedup();
        gasses.len()
    }

    pub fn measurements(&self, window: &Window) -> Result<Vec<(BeamId, Quadrature)>> {
        window.beams.iter().map(|b| Ok((*b, self.beam(*b)?.measured))).collect()
    }
}

/// `(κ_τ, μ_τ)` for one gas and one beam when the atoms and photons are
/// shared: `κ_τ ∝ √(<J_x> Φ τ)` and `μ_τ ∝ √<J_x>`.
pub fn resource_scaled_couplings(setup: &SetupDescriptor, gas: GasId, beam: BeamId) -> Result<(f64, f64)> {
    let g = setup.gas(gas)?;
    let b = setup.beam(beam)?;
    let kappa = setup.couplings.kappa_tau * (g.atom_fraction * b.flux_fraction).sqrt();
    let mu = setup.couplings.mu_tau * g.atom_fraction.sqrt();
    Ok((kappa, mu))
}

fn gas(id: u8, polarization: Axis, orientation: Orientation, atom_fraction: f64) -> GasSpec {
    GasSpec { id: GasId(id), polarization, orientation, atom_fraction }
}

fn beam(id: u8, propagation: Option<Axis>, stokes: Axis, flux_fraction: f64, measured: Quadrature) -> BeamSpec {
    BeamSpec { id: BeamId(id), propagation, stokes, flux_fraction, measured }
}

/// Larmor terms for every transverse spin component of every gas.
fn all_larmor(gasses: &[GasSpec], fields: &[Axis]) -> Vec<SpinTerm> {
    let mut out = Vec::new();
    for g in gasses {
        for f in fields {
            if *f != g.polarization {
                out.push(SpinTerm::larmor(1.0, g.id.0, *f, *f));
            }
        }
    }
    out
}

fn whole_run(terms: Vec<SpinTerm>, beams: &[u8]) -> Vec<Window> {
    vec![Window { start: 0.0, end: 1.0, terms, beams: beams.iter().map(|b| BeamId(*b)).collect() }]
}

/// Reference setups. Every setup uses the same total atom number and
/// photon flux; sharing enters through the fractions.
pub fn builtin_descriptor(name: ScenarioName, couplings: Couplings) -> Result<SetupDescriptor> {
    use Axis::{X, Y, Z};
    use Orientation::{Negative, Positive};
    use Quadrature::{P as QP, X as QX};

    let d = match name {
        ScenarioName::OneAxis => {
            let gasses = vec![gas(1, X, Positive, 1.0)];
            let mut terms = all_larmor(&gasses, &[Y]);
            terms.push(SpinTerm::probe(1.0, 1, Z, 1, QP));
            SetupDescriptor {
                name: name.to_string(),
                field_axes: vec![Y],
                gasses,
                beams: vec![beam(1, Some(Y), X, 1.0, QX)],
                couplings,
                schedule: whole_run(terms, &[1]),
            }
        }
        ScenarioName::OneGasTwoBeams => {
            let gasses = vec![gas(1, X, Positive, 1.0)];
            let mut terms = all_larmor(&gasses, &[Y, Z]);
            terms.push(SpinTerm::probe(1.0, 1, Z, 1, QP));
            terms.push(SpinTerm::probe(1.0, 1, Y, 2, QX));
            SetupDescriptor {
                name: name.to_string(),
                field_axes: vec![Y, Z],
                gasses,
                beams: vec![beam(1, Some(Y), X, 0.5, QX), beam(2, Some(Z), X, 0.5, QP)],
                couplings,
                schedule: whole_run(terms, &[1, 2]),
            }
        }
        ScenarioName::TwoSeparate => {
            let gasses = vec![gas(1, X, Positive, 0.5), gas(2, X, Positive, 0.5)];
            let mut terms = all_larmor(&gasses, &[Y, Z]);
            terms.push(SpinTerm::probe(1.0, 1, Z, 1, QP));
            terms.push(SpinTerm::probe(1.0, 2, Y, 2, QX));
            SetupDescriptor {
                name: name.to_string(),
                field_axes: vec![Y, Z],
                gasses,
                beams: vec![beam(1, Some(Y), X, 0.5, QX), beam(2, Some(Z), X, 0.5, QP)],
                couplings,
                schedule: whole_run(terms, &[1, 2]),
            }
        }
        ScenarioName::TwoSequential => {
            let gasses = vec![gas(1, X, Positive, 1.0)];
            let larmor = all_larmor(&gasses, &[Y, Z]);
            let mut first = larmor.clone();
            first.push(SpinTerm::probe(1.0, 1, Z, 1, QP));
            let mut second = larmor;
            second.push(SpinTerm::probe(1.0, 1, Y, 2, QX));
            SetupDescriptor {
                name: name.to_string(),
                field_axes: vec![Y, Z],
                gasses,
                beams: vec![beam(1, Some(Y), X, 1.0, QX), beam(2, Some(Z), X, 1.0, QP)],
                couplings,
                schedule: vec![
                    Window { start: 0.0, end: 0.5, terms: first, beams: vec![BeamId(1)] },
                    Window { start: 0.5, end: 1.0, terms: second, beams: vec![BeamId(2)] },
                ],
            }
        }
        ScenarioName::TwoEntangled => {
            // μ B_y (x1 + x2) + μ B_z (p1 + p2) + κ (p1 − p2) p_ph1 + κ (x1 − x2) x_ph2
            let gasses = vec![gas(1, X, Positive, 0.5), gas(2, X, Negative, 0.5)];
            let mut terms = all_larmor(&gasses, &[Y, Z]);
            terms.push(SpinTerm::probe(1.0, 1, Z, 1, QP));
            terms.push(SpinTerm::probe(-1.0, 2, Z, 1, QP));
            terms.push(SpinTerm::probe(1.0, 1, Y, 2, QX));
            terms.push(SpinTerm::probe(-1.0, 2, Y, 2, QX));
            SetupDescriptor {
                name: name.to_string(),
                field_axes: vec![Z, Y],
                gasses,
                beams: vec![beam(1, Some(Y), X, 0.5, QX), beam(2, Some(Z), X, 0.5, QP)],
                couplings,
                schedule: whole_run(terms, &[1, 2]),
            }
        }
        ScenarioName::SixGasVector => {
            let f = 1.0 / 6.0;
            let gasses = vec![
                gas(1, X, Positive, f),
                gas(2, Y, Positive, f),
                gas(3, Z, Positive, f),
                gas(4, X, Negative, f),
                gas(5, Y, Negative, f),
                gas(6, Z, Negative, f),
            ];
            let mut terms = all_larmor(&gasses, &[X, Y, Z]);
            // beam 1: (J_y1 − J_x2 − J_y4 + J_x5) S_1
            for (s, g, c) in [(1.0, 1, Y), (-1.0, 2, X), (-1.0, 4, Y), (1.0, 5, X)] {
                terms.push(SpinTerm::probe(s, g, c, 1, QP));
            }
            // beam 2: (J_z1 − J_x3 − J_z4 + J_x6) S_2
            for (s, g, c) in [(1.0, 1, Z), (-1.0, 3, X), (-1.0, 4, Z), (1.0, 6, X)] {
                terms.push(SpinTerm::probe(s, g, c, 2, QP));
            }
            // beam 3: (J_z2 − J_y3 − J_z5 + J_y6) S_3
            for (s, g, c) in [(1.0, 2, Z), (-1.0, 3, Y), (-1.0, 5, Z), (1.0, 6, Y)] {
                terms.push(SpinTerm::probe(s, g, c, 3, QP));
            }
            let third = 1.0 / 3.0;
            SetupDescriptor {
                name: name.to_string(),
                field_axes: vec![X, Y, Z],
                gasses,
                beams: vec![
                    beam(1, None, Z, third, QX),
                    beam(2, None, Y, third, QX),
                    beam(3, None, X, third, QX),
                ],
                couplings,
                schedule: whole_run(terms, &[1, 2, 3]),
            }
        }
    };
    d.validate()?;
    Ok(d)
}

/// Layout, descriptor and per-window Hamiltonians of a reference setup.
pub fn builtin_setup(
    name: ScenarioName,
    couplings: Couplings,
) -> Result<(VariableLayout, SetupDescriptor, Vec<WindowHamiltonian>)> {
    let d = builtin_descriptor(name, couplings)?;
    let layout = d.layout()?;
    let hs = d.schedule.iter().map(|w| d.window_hamiltonian(w)).collect::<Result<Vec<_>>>()?;
    Ok((layout, d, hs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::compile;
    use nalgebra::{DMatrix, DVector};

    fn unit() -> Couplings {
        Couplings { kappa_tau: 1.0, mu_tau: 1.0 }
    }

    #[test]
    fn names_round_trip() {
        for n in ScenarioName::ALL {
            assert_eq!(n.as_str().parse::<ScenarioName>().unwrap(), n);
        }
        assert!(matches!("three-axis".parse::<ScenarioName>(), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn full_resources_keep_couplings() {
        let d = builtin_descriptor(ScenarioName::OneAxis, Couplings { kappa_tau: 0.3, mu_tau: 0.2 }).unwrap();
        assert_eq!(resource_scaled_couplings(&d, GasId(1), BeamId(1)).unwrap(), (0.3, 0.2));
    }

    #[test]
    fn halved_resources_scale_couplings() {
        let d = builtin_descriptor(ScenarioName::TwoSeparate, unit()).unwrap();
        let (k, m) = resource_scaled_couplings(&d, GasId(1), BeamId(1)).unwrap();
        assert!((k * k - 0.25).abs() < 1e-15);
        assert!((m * m - 0.5).abs() < 1e-15);
        // var ∝ 1/(κ² μ²) at late times, so ΔB grows by √(4·2)
        let ratio = (1.0 / (k * k * m * m)).sqrt();
        assert!((ratio - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn six_gas_effective_collective_couplings() {
        let d = builtin_descriptor(ScenarioName::SixGasVector, unit()).unwrap();
        let (k, m) = resource_scaled_couplings(&d, GasId(1), BeamId(1)).unwrap();
        // four gasses add coherently into a collective variable with norm 2
        let k_coll_sq = (2.0 * k).powi(2);
        let m_coll_sq = (2.0 * m).powi(2);
        let ratio = (1.0 / (k_coll_sq * m_coll_sq)).sqrt();
        assert!((ratio - 3.0 * 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn one_axis_compiles_to_reference_matrix() {
        let c = Couplings::reference();
        let (layout, _, hs) = builtin_setup(ScenarioName::OneAxis, c).unwrap();
        assert_eq!(layout.len(), 5);
        let s = compile(&hs[0].total(), &layout).unwrap();
        let mut expect = DMatrix::identity(5, 5);
        expect[(1, 4)] = c.kappa_tau;
        expect[(2, 0)] = -c.mu_tau;
        expect[(3, 2)] = c.kappa_tau;
        assert_eq!(s.matrix(), &expect);
    }

    fn eq25(k: f64, m: f64) -> DMatrix<f64> {
        #[rustfmt::skip]
        let rows = [
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [m,   0.0, 1.0, 0.0, 0.0, 0.0, 0.0, k,   0.0, 0.0],
            [0.0, -m,  0.0, 1.0, 0.0, 0.0, 0.0, 0.0, -k,  0.0],
            [-m,  0.0, 0.0, 0.0, 1.0, 0.0, 0.0, k,   0.0, 0.0],
            [0.0, m,   0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -k,  0.0],
            [0.0, 0.0, 0.0, k,   0.0, -k,  1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, -k,  0.0, k,   0.0, 0.0, 0.0, 0.0, 1.0],
        ];
        DMatrix::from_fn(10, 10, |i, j| rows[i][j])
    }

    #[test]
    fn two_entangled_reproduces_transformation_matrix() {
        let c = Couplings::reference();
        let (layout, d, hs) = builtin_setup(ScenarioName::TwoEntangled, c).unwrap();
        let (k, m) = resource_scaled_couplings(&d, GasId(1), BeamId(1)).unwrap();
        let s = compile(&hs[0].total(), &layout).unwrap();
        assert_eq!(s.matrix(), &eq25(k, m));
    }

    #[test]
    fn six_gas_layout_has_21_variables() {
        let (layout, _, _) = builtin_setup(ScenarioName::SixGasVector, Couplings::reference()).unwrap();
        assert_eq!(layout.len(), 21);
        assert_eq!(layout.field_axes(), vec![Axis::X, Axis::Y, Axis::Z]);
        assert_eq!(layout.gasses().len(), 6);
        assert_eq!(layout.beams().len(), 3);
    }

    fn observable(layout: &VariableLayout, h: &BilinearHamiltonian, beam: BeamId) -> DVector<f64> {
        let mut v = DVector::zeros(layout.len());
        for t in h.terms() {
            if t.b == (Variable::Photon { beam, kind: Quadrature::P }) {
                v[layout.index_of(t.a).unwrap()] += t.coefficient;
            }
        }
        v
    }

    #[test]
    fn six_gas_measured_observables_commute() {
        let (layout, _, hs) = builtin_setup(ScenarioName::SixGasVector, Couplings::reference()).unwrap();
        let n = layout.len();
        let mut omega = DMatrix::zeros(n, n);
        for (i, j, v) in layout.symplectic_entries() {
            omega[(i, j)] = v;
        }
        let obs: Vec<_> = (1..=3).map(|b| observable(&layout, &hs[0].probe, BeamId(b))).collect();
        for a in &obs {
            assert_eq!(a.iter().filter(|v| **v != 0.0).count(), 4);
            for b in &obs {
                assert_eq!((a.transpose() * &omega * b)[(0, 0)], 0.0);
            }
        }
    }

    #[test]
    fn six_gas_observables_respond_to_one_field_each() {
        let (layout, _, hs) = builtin_setup(ScenarioName::SixGasVector, Couplings::reference()).unwrap();
        let g = compile(&hs[0].total(), &layout).unwrap();
        let gen = g.matrix() - DMatrix::<f64>::identity(21, 21);
        // beam b's observable moves only with one field component
        for (b, axis) in [(1u8, Axis::Z), (2, Axis::Y), (3, Axis::X)] {
            let v = observable(&layout, &hs[0].probe, BeamId(b));
            let drift = v.transpose() * &gen;
            for a in Axis::ALL {
                let d = drift[(0, layout.field_index(a).unwrap())];
                if a == axis {
                    assert!(d.abs() > 0.0);
                } else {
                    assert_eq!(d, 0.0, "beam {b} responds to B_{a}");
                }
            }
        }
    }

    #[test]
    fn builtin_steps_are_symplectic_to_first_order() {
        for name in ScenarioName::ALL {
            let (layout, _, hs) = builtin_setup(name, Couplings::reference()).unwrap();
            let n = layout.len();
            let mut omega = DMatrix::zeros(n, n);
            for (i, j, v) in layout.symplectic_entries() {
                omega[(i, j)] = v;
            }
            for h in &hs {
                let total = h.total();
                let s = compile(&total, &layout).unwrap();
                let dev = s.matrix() * &omega * s.matrix().transpose() - &omega;
                let bound = total.max_abs_coefficient().powi(2);
                let fields = layout.field_axes().len();
                for i in fields..n {
                    for j in fields..n {
                        assert!(dev[(i, j)].abs() <= bound * (1.0 + 1e-12), "{name}: {} > {bound}", dev[(i, j)]);
                    }
                }
            }
        }
    }

    #[test]
    fn over_budget_flux_is_rejected() {
        let d = builtin_descriptor(ScenarioName::OneGasTwoBeams, unit()).unwrap();
        let err = d.with_fractions(None, Some(&[0.6, 0.6])).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn classical_spin_component_is_rejected() {
        let d = builtin_descriptor(ScenarioName::OneAxis, unit()).unwrap();
        assert!(matches!(d.spin_quadrature(GasId(1), Axis::X), Err(Error::InvalidHamiltonian(_))));
    }

    #[test]
    fn sequential_windows_and_traversal_counts() {
        let d = builtin_descriptor(ScenarioName::TwoSequential, unit()).unwrap();
        assert_eq!(d.schedule.len(), 2);
        assert_eq!(d.measurements(&d.schedule[0]).unwrap(), vec![(BeamId(1), Quadrature::X)]);
        assert_eq!(d.measurements(&d.schedule[1]).unwrap(), vec![(BeamId(2), Quadrature::P)]);
        let six = builtin_descriptor(ScenarioName::SixGasVector, unit()).unwrap();
        for b in 1..=3 {
            assert_eq!(six.gasses_traversed(&six.schedule[0], BeamId(b)), 4);
        }
    }
}
