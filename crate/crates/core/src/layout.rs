//! Variable layouts: the mapping from physical roles to matrix indices.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Position-like (`X`) or momentum-like (`P`) member of a canonical pair.
/// One value per Cartesian field axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerAxis {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl PerAxis {
    pub const fn splat(v: f64) -> Self {
        Self { x: v, y: v, z: v }
    }

    pub fn get(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }

    pub fn set(&mut self, axis: Axis, v: f64) {
        match axis {
            Axis::X => self.x = v,
            Axis::Y => self.y = v,
            Axis::Z => self.z = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    X,
    P,
}

impl Quadrature {
    pub fn conjugate(self) -> Quadrature {
        match self {
            Quadrature::X => Quadrature::P,
            Quadrature::P => Quadrature::X,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GasId(pub u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BeamId(pub u8);

impl fmt::Display for GasId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "gas{}", self.0)
    }
}

impl fmt::Display for BeamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "beam{}", self.0)
    }
}

/// Sign of the commutator `[x, p] = i·sign` for a gas.
///
/// A gas polarized against its reference axis has an inverted canonical
/// pair when its quadratures are normalized by `|<J>|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    Positive,
    Negative,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variable {
    Field(Axis),
    Atom { gas: GasId, kind: Quadrature },
    Photon { beam: BeamId, kind: Quadrature },
}

impl Variable {
    pub fn is_field(&self) -> bool {
        matches!(self, Variable::Field(_))
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variable::Field(a) => write!(f, "B_{a}"),
            Variable::Atom { gas, kind } => write!(f, "{}_{}", quad_name(*kind), gas),
            Variable::Photon { beam, kind } => write!(f, "{}_{}", quad_name(*kind), beam),
        }
    }
}

fn quad_name(q: Quadrature) -> &'static str {
    match q {
        Quadrature::X => "x",
        Quadrature::P => "p",
    }
}

/// Ordered list of state variables.
///
/// Atomic and photonic quadratures always come in complete `(x, p)` pairs;
/// field components are static classical parameters with no conjugate.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableLayout {
    entries: Vec<Variable>,
    orientations: Vec<(GasId, Orientation)>,
}

impl VariableLayout {
    pub fn builder() -> LayoutBuilder {
        LayoutBuilder::default()
    }

    /// Builds a layout from an explicit entry order. Gasses not listed in
    /// `orientations` default to [`Orientation::Positive`].
    pub fn new(entries: Vec<Variable>, orientations: Vec<(GasId, Orientation)>) -> Result<Self> {
        for (i, v) in entries.iter().enumerate() {
            if entries[..i].contains(v) {
                return Err(Error::InvalidLayout(format!("{v} appears twice")));
            }
        }
        for v in &entries {
            let partner = match *v {
                Variable::Field(_) => continue,
                Variable::Atom { gas, kind } => Variable::Atom { gas, kind: kind.conjugate() },
                Variable::Photon { beam, kind } => Variable::Photon { beam, kind: kind.conjugate() },
            };
            if !entries.contains(&partner) {
                return Err(Error::InvalidLayout(format!("{v} has no conjugate partner {partner}")));
            }
        }
        for (gas, _) in &orientations {
            if !entries.contains(&Variable::Atom { gas: *gas, kind: Quadrature::X }) {
                return Err(Error::InvalidLayout(format!("orientation given for absent {gas}")));
            }
        }
        Ok(Self { entries, orientations })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Variable] {
        &self.entries
    }

    pub fn index_of(&self, var: Variable) -> Option<usize> {
        self.entries.iter().position(|v| *v == var)
    }

    pub fn require(&self, var: Variable) -> Result<usize> {
        self.index_of(var).ok_or_else(|| Error::UnknownVariable(var.to_string()))
    }

    pub fn field_index(&self, axis: Axis) -> Option<usize> {
        self.index_of(Variable::Field(axis))
    }

    pub fn atom(&self, gas: GasId, kind: Quadrature) -> Result<usize> {
        self.require(Variable::Atom { gas, kind })
    }

    pub fn photon(&self, beam: BeamId, kind: Quadrature) -> Result<usize> {
        self.require(Variable::Photon { beam, kind })
    }

    pub fn orientation(&self, gas: GasId) -> Orientation {
        self.orientations
            .iter()
            .find(|(g, _)| *g == gas)
            .map(|(_, o)| *o)
            .unwrap_or(Orientation::Positive)
    }

    pub fn field_axes(&self) -> Vec<Axis> {
        self.entries
            .iter()
            .filter_map(|v| match v {
                Variable::Field(a) => Some(*a),
                _ => None,
            })
            .collect()
    }

    pub fn gasses(&self) -> Vec<GasId> {
        self.entries
            .iter()
            .filter_map(|v| match v {
                Variable::Atom { gas, kind: Quadrature::X } => Some(*gas),
                _ => None,
            })
            .collect()
    }

    pub fn beams(&self) -> Vec<BeamId> {
        self.entries
            .iter()
            .filter_map(|v| match v {
                Variable::Photon { beam, kind: Quadrature::X } => Some(*beam),
                _ => None,
            })
            .collect()
    }

    /// Entries of the symplectic form `Ω` with `[y_i, y_j] = i·Ω_ij`, listed
    /// as `(i, j, value)` for the nonzero elements.
    pub fn symplectic_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, v) in self.entries.iter().enumerate() {
            let (partner, sign) = match *v {
                Variable::Field(_) => continue,
                Variable::Atom { gas, kind } => (
                    Variable::Atom { gas, kind: kind.conjugate() },
                    self.orientation(gas).sign(),
                ),
                Variable::Photon { beam, kind } => {
                    (Variable::Photon { beam, kind: kind.conjugate() }, 1.0)
                }
            };
            let j = self.index_of(partner).expect("validated pair");
            let s = match v {
                Variable::Atom { kind: Quadrature::X, .. } | Variable::Photon { kind: Quadrature::X, .. } => sign,
                _ => -sign,
            };
            out.push((i, j, s));
        }
        out
    }

    /// Pairs `(x index, p index)` of every canonical pair, atoms first.
    pub fn canonical_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for g in self.gasses() {
            out.push((self.atom(g, Quadrature::X).unwrap(), self.atom(g, Quadrature::P).unwrap()));
        }
        for b in self.beams() {
            out.push((self.photon(b, Quadrature::X).unwrap(), self.photon(b, Quadrature::P).unwrap()));
        }
        out
    }
}

#[derive(Debug, Default)]
pub struct LayoutBuilder {
    entries: Vec<Variable>,
    orientations: Vec<(GasId, Orientation)>,
}

impl LayoutBuilder {
    pub fn field(mut self, axis: Axis) -> Self {
        self.entries.push(Variable::Field(axis));
        self
    }

    pub fn gas(mut self, gas: GasId, orientation: Orientation) -> Self {
        self.entries.push(Variable::Atom { gas, kind: Quadrature::X });
        self.entries.push(Variable::Atom { gas, kind: Quadrature::P });
        if orientation == Orientation::Negative {
            self.orientations.push((gas, orientation));
        }
        self
    }

    pub fn beam(mut self, beam: BeamId) -> Self {
        self.entries.push(Variable::Photon { beam, kind: Quadrature::X });
        self.entries.push(Variable::Photon { beam, kind: Quadrature::P });
        self
    }

    pub fn build(self) -> Result<VariableLayout> {
        VariableLayout::new(self.entries, self.orientations)
    }
}
