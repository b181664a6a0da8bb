//! Inverse pipelines: from a high-concentration coefficient array to an
//! explicit structure certificate.
//!
//! Three stages, each usable on its own:
//!
//! * [`fit_gap_linear`] searches a bounded family of proper symmetric GAPs
//!   for one that covers most of a point list within radius beta.
//! * [`bilinear_certificate`] runs the proof-shaped pipeline for bilinear
//!   forms: classify good projection vectors, fit a GAP per good vector,
//!   reduce each fit until its assigned points span it, then pigeonhole by
//!   voting: common spanning index tuple, common coefficient matrix, and a
//!   common determinant identity per row. The emitted integer combination
//!   of rows is re-verified exactly on every supporting vector.
//! * [`quadratic_certificate`] decouples a symmetric matrix through all (or
//!   sampled) bipartite masks, runs the bilinear stage per mask over the
//!   symmetrized variable, and majority-votes the results into a single
//!   certificate over the lazy symmetrized variable.
//!
//! Voting replaces measure pigeonholing: the guaranteed-popular tuple is
//! taken as the observed mode, and every downstream claim is then checked
//! exactly rather than trusted from the count.

mod fit;
mod pipeline;
mod verify;

pub use fit::{fit_gap_linear, FitParams, GapFit};
pub use pipeline::{
    bilinear_certificate, classify_good, quadratic_certificate, CertOptions, GoodVector,
    MatrixVote, PipelineTrace, QuadOptions, RowTrace, SubsetMode, SubsetStage, SubsetSummary,
    TupleVote, YMode,
};
pub use verify::{combined_row, verify_certificate};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gap::GapError;
use crate::randvar::RandVarError;
use crate::smallball::SmallBallError;

#[derive(Debug, Clone, PartialEq)]
pub enum InverseError {
    SearchSpaceExceeded { candidates: u128, ceiling: u64 },
    NoGoodVectors,
    NoSpanningTuple,
    CoverageFloorMissed { surviving: usize, floor: usize },
    InsufficientSubsetConsensus,
    Invalid(String),
    Overflow(String),
    Gap(GapError),
    SmallBall(SmallBallError),
    RandVar(RandVarError),
}

impl fmt::Display for InverseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InverseError::SearchSpaceExceeded { candidates, ceiling } => {
                write!(f, "search space has {candidates} candidates, ceiling is {ceiling}")
            }
            InverseError::NoGoodVectors => write!(f, "no good vectors found"),
            InverseError::NoSpanningTuple => {
                write!(f, "no good vector produced a usable gap fit")
            }
            InverseError::CoverageFloorMissed { surviving, floor } => {
                write!(f, "only {surviving} rows survive, floor is {floor}")
            }
            InverseError::InsufficientSubsetConsensus => {
                write!(f, "no subset produced a certificate to vote on")
            }
            InverseError::Invalid(msg) => write!(f, "{msg}"),
            InverseError::Overflow(msg) => write!(f, "integer overflow: {msg}"),
            InverseError::Gap(e) => write!(f, "{e}"),
            InverseError::SmallBall(e) => write!(f, "{e}"),
            InverseError::RandVar(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for InverseError {}

impl From<GapError> for InverseError {
    fn from(e: GapError) -> Self {
        InverseError::Gap(e)
    }
}

impl From<SmallBallError> for InverseError {
    fn from(e: SmallBallError) -> Self {
        InverseError::SmallBall(e)
    }
}

impl From<RandVarError> for InverseError {
    fn from(e: RandVarError) -> Self {
        InverseError::RandVar(e)
    }
}

/// One row's integer coefficients against the pivot rows, in pivot order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowCoeffs {
    pub row: usize,
    pub coeffs: Vec<i64>,
}

/// The output of the inverse pipelines: a nonzero integer `k`, a small set
/// of pivot rows, and per-row integer coefficients such that the
/// combination `k row_i + sum_j coeffs[j] row_pivot_j` concentrates near
/// zero under the documented test variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureCertificate {
    pub k: i64,
    pub pivot_rows: Vec<usize>,
    /// One entry per surviving row, sorted by row index.
    pub row_coeffs: Vec<RowCoeffs>,
    pub surviving: Vec<usize>,
    /// Exponent `C`: radii are `beta n^C`, probability floors `n^-C`, and
    /// emitted coefficients are bounded by `n^C`.
    pub bound_exponent: i32,
}

impl StructureCertificate {
    pub fn coeffs_for(&self, row: usize) -> Option<&[i64]> {
        self.row_coeffs
            .binary_search_by_key(&row, |rc| rc.row)
            .ok()
            .map(|idx| self.row_coeffs[idx].coeffs.as_slice())
    }

    /// The trivial certificate: no pivots, every row surviving.
    pub fn trivial(n: usize, bound_exponent: i32) -> Self {
        StructureCertificate {
            k: 1,
            pivot_rows: vec![],
            row_coeffs: (0..n).map(|row| RowCoeffs { row, coeffs: vec![] }).collect(),
            surviving: (0..n).collect(),
            bound_exponent,
        }
    }
}
