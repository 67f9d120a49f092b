//! Ready-made offspring laws used by tests, examples and the shipped model files.

use crate::error::Result;
use crate::model::{PgfModel, RationalForm};
use crate::multi_index::MultiIndex;
use crate::poly::Poly;

fn poly(n: usize, terms: &[(&[u32], f64)]) -> Poly {
    Poly::from_terms(
        n,
        terms
            .iter()
            .map(|(k, c)| (MultiIndex::new(k.to_vec()), *c)),
    )
}

/// Two types, quadratic: `P1 = p z1 + (1-p) z2^2`, `P2 = q z2 + (1-q) z1^2`.
pub fn two_type_quadratic(p: f64, q: f64) -> Result<PgfModel> {
    PgfModel::polynomial(vec![
        poly(2, &[(&[1, 0], p), (&[0, 2], 1.0 - p)]),
        poly(2, &[(&[0, 1], q), (&[2, 0], 1.0 - q)]),
    ])
}

/// Single type, geometric offspring: `P = p z / (1 - (1-p) z)`.
pub fn geometric(p: f64) -> Result<PgfModel> {
    let num = poly(1, &[(&[1], p)]);
    let den = poly(1, &[(&[0], 1.0), (&[1], -(1.0 - p))]);
    PgfModel::new(vec![Poly::zero(1)], vec![Some(RationalForm { num, den })], 1.0)
}

/// Two types with a rational first component:
/// `P1 = (z1 + z2 + z1^3) / (5 - z1 z2 - z1)`,
/// `P2 = 0.3 z2 + 0.1 z1 + 0.3 z1 z2 + 0.1 z2^2 + 0.2 z1^3`.
pub fn mixed_rational() -> Result<PgfModel> {
    let num = poly(2, &[(&[1, 0], 1.0), (&[0, 1], 1.0), (&[3, 0], 1.0)]);
    let den = poly(2, &[(&[0, 0], 5.0), (&[1, 1], -1.0), (&[1, 0], -1.0)]);
    let p2 = poly(
        2,
        &[
            (&[0, 1], 0.3),
            (&[1, 0], 0.1),
            (&[1, 1], 0.3),
            (&[0, 2], 0.1),
            (&[3, 0], 0.2),
        ],
    );
    PgfModel::new(
        vec![Poly::zero(2), p2],
        vec![Some(RationalForm { num, den }), None],
        1.0,
    )
}

/// Three types whose linear part at the origin is a scaled cyclic shift, so
/// its eigenvalues are `a` times the cube roots of unity:
/// `P_i = a z_{i+1} + (1-a) z1 z2 z3`.
pub fn cyclic_three_type(a: f64) -> Result<PgfModel> {
    let shifts: [&[u32]; 3] = [&[0, 1, 0], &[0, 0, 1], &[1, 0, 0]];
    PgfModel::polynomial(
        shifts
            .iter()
            .map(|s| poly(3, &[(*s, a), (&[1, 1, 1], 1.0 - a)]))
            .collect(),
    )
}

/// Single type, binary splitting: `P = p z + (1-p) z^2`.
pub fn binary_splitting(p: f64) -> Result<PgfModel> {
    PgfModel::polynomial(vec![poly(1, &[(&[1], p), (&[2], 1.0 - p)])])
}
