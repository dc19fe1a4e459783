//! Random well-conditioned test matrices.

use rand::Rng;

use crate::numerics::{SymMatrix, Vector};

pub fn random_vector<R: Rng>(rng: &mut R, dim: usize) -> Vector {
    Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0))
}

/// `B B' / dim + I/2` with `B` uniform in [-1, 1].
pub fn random_spd<R: Rng>(rng: &mut R, dim: usize) -> SymMatrix {
    let b = SymMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    let mut m = &b * b.transpose() / dim as f64 + SymMatrix::identity(dim, dim) * 0.5;
    crate::numerics::symmetrize(&mut m);
    m
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}
