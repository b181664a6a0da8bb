//! Independent certificate verification.
//!
//! A certificate claims that for each surviving row `i`, the integer
//! combination `k row_i + sum_j c_ij row_pivot_j` dotted with the test
//! variable stays within `beta n^C` with probability at least `n^-C`. The
//! check here recomputes that probability from scratch by exact
//! enumeration; nothing is trusted from the pipeline that emitted the
//! certificate.

use std::collections::BTreeMap;

use crate::randvar::DiscreteDist;
use crate::scalar::{powi, Scalar};
use crate::smallball::{linear_form_atoms, rho_from_atoms, CenterMode, CoeffMatrix};
use crate::vecs;

use super::{InverseError, StructureCertificate};

/// `k row_i + sum_j coeffs_j row_pivot_j`, one vector per column.
pub fn combined_row_parts<T: Scalar>(
    a: &CoeffMatrix<T>,
    k: i64,
    pivots: &[usize],
    coeffs: &[i64],
    row: usize,
) -> Vec<Vec<T>> {
    let n = a.n();
    let kk = T::from_int(k);
    (0..n)
        .map(|j| {
            let mut v = vecs::scale(&a.entries[row][j], &kk);
            for (&p, &c) in pivots.iter().zip(coeffs) {
                vecs::add_scaled(&mut v, &a.entries[p][j], &T::from_int(c));
            }
            v
        })
        .collect()
}

/// The combined row a certificate asserts for `row`.
pub fn combined_row<T: Scalar>(
    a: &CoeffMatrix<T>,
    cert: &StructureCertificate,
    row: usize,
) -> Result<Vec<Vec<T>>, InverseError> {
    let coeffs = cert
        .coeffs_for(row)
        .ok_or_else(|| InverseError::Invalid(format!("row {row} is not in the certificate")))?;
    if cert.pivot_rows.iter().any(|&p| p >= a.n()) || row >= a.n() {
        return Err(InverseError::Invalid("certificate indexes past the matrix".into()));
    }
    Ok(combined_row_parts(a, cert.k, &cert.pivot_rows, coeffs, row))
}

/// Exact probability that the combined row dotted with the test variable
/// lands within `radius` of the origin.
#[allow(clippy::too_many_arguments)]
pub fn row_probability<T: Scalar>(
    a: &CoeffMatrix<T>,
    k: i64,
    pivots: &[usize],
    coeffs: &[i64],
    row: usize,
    z_dist: &DiscreteDist<T>,
    radius: &T,
    budget: u64,
) -> Result<T, InverseError> {
    let combined = combined_row_parts(a, k, pivots, coeffs, row);
    let atoms = linear_form_atoms(&combined, z_dist, budget)?;
    let center = vecs::zero(a.dim);
    let r = rho_from_atoms(&atoms, a.dim, radius, &CenterMode::FixedCenter(center))?;
    Ok(r.estimate.exact_value().expect("fixed center is exact"))
}

/// Verifies every surviving row of a certificate: the exact probability
/// that `z . (k row_i + sum_j c_ij row_pivot_j)` has norm at most
/// `beta n^C`. The caller compares against its floor `n^-C`.
pub fn verify_certificate<T: Scalar>(
    a: &CoeffMatrix<T>,
    cert: &StructureCertificate,
    z_dist: &DiscreteDist<T>,
    beta: &T,
    budget: u64,
) -> Result<BTreeMap<usize, T>, InverseError> {
    if beta.is_negative() {
        return Err(InverseError::Invalid("beta must be non-negative".into()));
    }
    let n = a.n();
    let radius = beta.clone() * powi(&T::from_int(n as i64), cert.bound_exponent.max(0) as u32);
    let mut out = BTreeMap::new();
    for &i in &cert.surviving {
        let coeffs = cert
            .coeffs_for(i)
            .ok_or_else(|| InverseError::Invalid(format!("surviving row {i} has no coefficients")))?;
        let p = row_probability(a, cert.k, &cert.pivot_rows, coeffs, i, z_dist, &radius, budget)?;
        out.insert(i, p);
    }
    Ok(out)
}
