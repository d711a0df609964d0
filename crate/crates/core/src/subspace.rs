//! Qubit ↔ transmon subspace embedding.

use nalgebra::Matrix4;

use crate::error::{dims, invalid, Result};
use crate::matrix::{CMatrix, C64, ONE, ZERO};

/// Isometry from the two-qubit space into two `levels`-level transmons.
///
/// Column `2*q1 + q2` holds a single unit entry at row `levels*q1 + q2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceIsometry {
    levels: usize,
    indices: [usize; 4],
    matrix: CMatrix,
}

impl SubspaceIsometry {
    pub fn new(levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(invalid("levels", format!("need at least 2, got {levels}")));
        }
        let indices = [0, 1, levels, levels + 1];
        let dim = levels * levels;
        let matrix = CMatrix::from_fn(dim, 4, |r, c| if indices[c] == r { ONE } else { ZERO });
        Ok(Self {
            levels,
            indices,
            matrix,
        })
    }

    /// Isometry matching a square operator of side `levels²`.
    pub fn for_dimension(dim: usize) -> Result<Self> {
        let levels = (dim as f64).sqrt().round() as usize;
        if levels * levels != dim {
            return Err(dims("a square number", format!("{dim}")));
        }
        Self::new(levels)
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn dim(&self) -> usize {
        self.levels * self.levels
    }

    /// Transmon indices of the computational states, in qubit order.
    pub fn indices(&self) -> [usize; 4] {
        self.indices
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Unitary extension of a 4×4 gate: acts as `u` on the computational
    /// subspace and as the identity on every leakage level.
    pub fn embed(&self, u: &CMatrix) -> Result<CMatrix> {
        if u.shape() != (4, 4) {
            return Err(dims("4x4", format!("{:?}", u.shape())));
        }
        let mut out = CMatrix::identity(self.dim());
        for (a, &ra) in self.indices.iter().enumerate() {
            for (b, &rb) in self.indices.iter().enumerate() {
                out.set(ra, rb, u.get(a, b));
            }
        }
        Ok(out)
    }

    /// `P† u P` as a fixed-size matrix; `u` must be `dim × dim`.
    pub(crate) fn project_fixed(&self, u: &CMatrix) -> Matrix4<C64> {
        Matrix4::from_fn(|a, b| u.get(self.indices[a], self.indices[b]))
    }
}

/// `P† u P`: the computational block of a transmon propagator.
///
/// The result is unitary only when nothing leaks out of the qubit subspace.
pub fn project_gate(u: &CMatrix, p: &SubspaceIsometry) -> Result<CMatrix> {
    let d = p.dim();
    if u.shape() != (d, d) {
        return Err(dims(format!("{d}x{d}"), format!("{:?}", u.shape())));
    }
    p.matrix.adjoint().matmul(u)?.matmul(&p.matrix)
}
