use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::layout::VariableLayout;

/// Linear map applied to the state vector during one segment.
///
/// Field rows are identity: the field is a static parameter that only
/// sources rotations of the quadratures.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMatrix {
    layout: VariableLayout,
    s: DMatrix<f64>,
    // nonzero entries of S - I, used by the update loops
    generator: Vec<(usize, usize, f64)>,
}

impl StepMatrix {
    pub fn new(layout: VariableLayout, s: DMatrix<f64>) -> Result<Self> {
        let n = layout.len();
        if s.nrows() != n || s.ncols() != n {
            return Err(Error::LayoutMismatch { expected: n, found: s.nrows().max(s.ncols()) });
        }
        for (i, v) in layout.entries().iter().enumerate() {
            if v.is_field() {
                for j in 0..n {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    if s[(i, j)] != expect {
                        return Err(Error::InvalidHamiltonian(format!(
                            "row of static field {v} is not an identity row"
                        )));
                    }
                }
            }
        }
        let mut generator = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let g = s[(i, j)] - if i == j { 1.0 } else { 0.0 };
                if g != 0.0 {
                    generator.push((i, j, g));
                }
            }
        }
        Ok(Self { layout, s, generator })
    }

    pub fn identity(layout: VariableLayout) -> Self {
        let n = layout.len();
        Self { layout, s: DMatrix::identity(n, n), generator: Vec::new() }
    }

    /// `S = I + G` from the nonzero entries of `G`.
    pub fn from_generator(layout: VariableLayout, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let n = layout.len();
        let mut s = DMatrix::identity(n, n);
        for &(i, j, g) in entries {
            if i >= n || j >= n {
                return Err(Error::LayoutMismatch { expected: n, found: i.max(j) + 1 });
            }
            s[(i, j)] += g;
        }
        Self::new(layout, s)
    }

    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn generator(&self) -> &[(usize, usize, f64)] {
        &self.generator
    }
}
