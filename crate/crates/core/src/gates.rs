//! Gate library: Paulis, single-qubit rotations, Euler layers and the
//! two-qubit targets.
//!
//! Two-qubit operators use the index `2*q1 + q2`, so qubit 1 (the driven
//! transmon) is the left Kronecker factor.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{Matrix2, Matrix4};

use crate::error::{dims, Result};
use crate::matrix::{kron, CMatrix, C64, I, ONE, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Number of angles in one two-qubit Euler layer.
pub const LAYER_ANGLES: usize = 6;

pub fn pauli_x() -> CMatrix {
    CMatrix::from_real_rows(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]).unwrap()
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_real_rows(2, 2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
}

pub fn hadamard() -> CMatrix {
    let h = FRAC_1_SQRT_2;
    CMatrix::from_real_rows(2, 2, &[h, h, h, -h]).unwrap()
}

/// CNOT with qubit 1 as control: swaps |10> and |11>.
pub fn cnot() -> CMatrix {
    #[rustfmt::skip]
    let m = [
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, 1.0, 0.0,
    ];
    CMatrix::from_real_rows(4, 4, &m).unwrap()
}

/// Controlled-Z, `diag(1, 1, 1, -1)`.
pub fn cphase() -> CMatrix {
    CMatrix::from_diagonal(&[ONE, ONE, ONE, -ONE])
}

/// `exp(-i angle σ_axis / 2)`.
pub fn rotation(axis: Axis, angle: f64) -> CMatrix {
    CMatrix::from_nalgebra(nalgebra::DMatrix::from_iterator(
        2,
        2,
        rotation_fixed(axis, angle).iter().copied(),
    ))
}

pub(crate) fn rotation_fixed(axis: Axis, angle: f64) -> Matrix2<C64> {
    let (s, c) = (0.5 * angle).sin_cos();
    match axis {
        Axis::X => Matrix2::new(C64::new(c, 0.0), C64::new(0.0, -s), C64::new(0.0, -s), C64::new(c, 0.0)),
        Axis::Y => Matrix2::new(C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)),
        Axis::Z => Matrix2::new(C64::new(c, -s), ZERO, ZERO, C64::new(c, s)),
    }
}

/// `R_z(c) R_y(b) R_z(a)` for angles `[a, b, c]`; `a` acts first.
pub(crate) fn zyz_fixed(a: f64, b: f64, c: f64) -> Matrix2<C64> {
    rotation_fixed(Axis::Z, c) * rotation_fixed(Axis::Y, b) * rotation_fixed(Axis::Z, a)
}

pub(crate) fn kron2(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|i, j| a[(i / 2, j / 2)] * b[(i % 2, j % 2)])
}

pub(crate) fn euler_layer_fixed(theta: &[f64]) -> Matrix4<C64> {
    let q1 = zyz_fixed(theta[0], theta[1], theta[2]);
    let q2 = zyz_fixed(theta[3], theta[4], theta[5]);
    kron2(&q1, &q2)
}

/// Two-qubit layer of ZYZ Euler rotations.
///
/// `theta[0..3]` rotate qubit 1 as `R_z(θ3) R_y(θ2) R_z(θ1)`, `theta[3..6]`
/// rotate qubit 2 the same way. Qubit 1 is the left factor.
pub fn euler_layer(theta: &[f64]) -> Result<CMatrix> {
    if theta.len() != LAYER_ANGLES {
        return Err(dims("6 angles", format!("{} angles", theta.len())));
    }
    let q1 = CMatrix::from_nalgebra(nalgebra::DMatrix::from_iterator(
        2,
        2,
        zyz_fixed(theta[0], theta[1], theta[2]).iter().copied(),
    ));
    let q2 = CMatrix::from_nalgebra(nalgebra::DMatrix::from_iterator(
        2,
        2,
        zyz_fixed(theta[3], theta[4], theta[5]).iter().copied(),
    ));
    Ok(kron(&q1, &q2))
}

/// Unitary from the QR factor of a matrix with uniform complex entries.
///
/// Covers the whole group but is not Haar-distributed.
pub fn random_unitary<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let m = nalgebra::DMatrix::from_fn(dim, dim, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    CMatrix::from_nalgebra(m.qr().q())
}

pub(crate) fn to_fixed4(m: &CMatrix) -> Matrix4<C64> {
    Matrix4::from_fn(|i, j| m.get(i, j))
}

pub(crate) fn from_fixed4(m: &Matrix4<C64>) -> CMatrix {
    CMatrix::from_fn(4, 4, |i, j| m[(i, j)])
}
