//! Structured instances with machine-checkable pigeonhole certificates.
//!
//! Four generators, one per structural mechanism that forces a large
//! small-ball probability:
//!
//! * `linear_gap`: every coefficient is delta-close to a point of a proper
//!   symmetric GAP `Q`, so the sum always lands in the dilate `nQ` and some
//!   value carries mass at least `1 / Vol(nQ)`.
//! * `quadratic_gap`: same with `q_ij in Q` and the dilate `n^2 Q`.
//! * `rank_one`: `q_ij = k_i b_j + k_j b_i`, so the form factors through
//!   `(sum k_i x_i)(sum b_j x_j)` and vanishes on the kernel event.
//! * `mixed`: a GAP part plus `r` algebraic rank-one parts; the bound is the
//!   joint kernel probability divided by `Vol(n^2 Q)`.
//!
//! Perturbations are seeded scaled integer lattice points, so the
//! delta-closeness invariant is exactly checkable in rationals.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gap::{Gap, GapError};
use crate::randvar::DiscreteDist;
use crate::scalar::{serde_scalar, Scalar};
use crate::smallball::{
    linear_form_atoms, rho_linear_exact, rho_quadratic_exact, CenterMode, CoeffMatrix,
    CoeffVector, SmallBallError,
};
use crate::vecs;

#[derive(Debug, Clone, PartialEq)]
pub enum ConstructError {
    InfeasibleK,
    Invalid(String),
    Gap(GapError),
    SmallBall(SmallBallError),
}

impl fmt::Display for ConstructError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstructError::InfeasibleK => {
                write!(f, "kernel event has probability zero for the given integer rows")
            }
            ConstructError::Invalid(msg) => write!(f, "invalid construction: {msg}"),
            ConstructError::Gap(e) => write!(f, "{e}"),
            ConstructError::SmallBall(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ConstructError {}

impl From<GapError> for ConstructError {
    fn from(e: GapError) -> Self {
        ConstructError::Gap(e)
    }
}

impl From<SmallBallError> for ConstructError {
    fn from(e: SmallBallError) -> Self {
        ConstructError::SmallBall(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    LinearGap,
    QuadraticGap,
    RankOne,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", rename_all = "snake_case")]
pub enum Coefficients<T: Scalar> {
    Vector(CoeffVector<T>),
    Matrix(CoeffMatrix<T>),
}

/// The planted data an inverse pipeline is scored against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HiddenData<T: Scalar> {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub planted_vector: Option<CoeffVector<T>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub planted_matrix: Option<CoeffMatrix<T>>,
    /// Box coordinates of the planted GAP elements, row-major.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub planted_coords: Option<Vec<Vec<i64>>>,
    /// Integer kernel rows, one length-n array per algebraic part.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k_rows: Option<Vec<Vec<i64>>>,
    /// The paired coefficient vectors of the algebraic parts.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub b_rows: Option<Vec<CoeffVector<T>>>,
}

impl<T: Scalar> Default for HiddenData<T> {
    fn default() -> Self {
        HiddenData {
            planted_vector: None,
            planted_matrix: None,
            planted_coords: None,
            k_rows: None,
            b_rows: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct StructuredInstance<T: Scalar> {
    pub kind: InstanceKind,
    pub n: usize,
    pub coefficients: Coefficients<T>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gap: Option<Gap<T>>,
    #[serde(with = "serde_scalar")]
    pub perturbation: T,
    pub hidden: HiddenData<T>,
    #[serde(with = "serde_scalar")]
    pub claimed_beta: T,
    #[serde(with = "serde_scalar")]
    pub claimed_rho_lower: T,
}

const PERTURB_GRID: i64 = 8;

/// Seeded perturbation of Euclidean norm at most delta: a random integer
/// lattice point scaled by delta / (grid * d), so the norm bound is exact.
fn perturbation<T: Scalar>(dim: usize, delta: &T, rng: &mut ChaCha8Rng) -> Vec<T> {
    if delta.is_zero() {
        return vecs::zero(dim);
    }
    let scale = delta.clone() / T::from_int(PERTURB_GRID * dim as i64);
    let p: Vec<T> = (0..dim)
        .map(|_| T::from_int(rng.gen_range(-PERTURB_GRID..=PERTURB_GRID)) * scale.clone())
        .collect();
    debug_assert!(vecs::norm_sq(&p) <= delta.clone() * delta.clone());
    p
}

fn random_coords<T: Scalar>(gap: &Gap<T>, rng: &mut ChaCha8Rng) -> Vec<i64> {
    gap.lower_bounds()
        .iter()
        .zip(gap.upper_bounds())
        .map(|(&lo, &hi)| rng.gen_range(lo..=hi))
        .collect()
}

fn require_proper_symmetric<T: Scalar>(gap: &Gap<T>, cap: u128) -> Result<(), ConstructError> {
    if !gap.is_symmetric() {
        return Err(GapError::NotSymmetric.into());
    }
    if !gap.is_proper(cap)? {
        return Err(GapError::NotProper.into());
    }
    Ok(())
}

fn volume_as_scalar<T: Scalar>(v: u128) -> Result<T, ConstructError> {
    let v = i64::try_from(v)
        .map_err(|_| ConstructError::Invalid("dilate volume exceeds i64".into()))?;
    Ok(T::from_int(v))
}

/// Coefficients delta-close to a GAP; the sum of n of them lives in `nQ`.
pub fn build_linear_gap_instance<T: Scalar>(
    n: usize,
    gap: &Gap<T>,
    delta: &T,
    seed: u64,
    cap: u128,
) -> Result<StructuredInstance<T>, ConstructError> {
    require_proper_symmetric(gap, cap)?;
    let dilated = gap.dilate(n as u64)?;
    let vol = dilated.volume();
    if vol > cap {
        return Err(GapError::VolumeExceedsCap { volume: vol, cap }.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = gap.ambient_dim();
    let mut coords = Vec::with_capacity(n);
    let mut planted = Vec::with_capacity(n);
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let c = random_coords(gap, &mut rng);
        let value = gap.value_of(&c);
        let noisy = vecs::add(&value, &perturbation(dim, delta, &mut rng));
        coords.push(c);
        planted.push(value);
        entries.push(noisy);
    }
    Ok(StructuredInstance {
        kind: InstanceKind::LinearGap,
        n,
        coefficients: Coefficients::Vector(CoeffVector::new(dim, entries)?),
        gap: Some(gap.clone()),
        perturbation: delta.clone(),
        hidden: HiddenData {
            planted_vector: Some(CoeffVector::new(dim, planted)?),
            planted_coords: Some(coords),
            ..HiddenData::default()
        },
        claimed_beta: T::from_int(n as i64) * delta.clone(),
        claimed_rho_lower: T::one() / volume_as_scalar::<T>(vol)?,
    })
}

/// Symmetric matrix with entries delta-close to a GAP; the quadratic form
/// lives in `n^2 Q`.
pub fn build_quadratic_gap_instance<T: Scalar>(
    n: usize,
    gap: &Gap<T>,
    delta: &T,
    seed: u64,
    cap: u128,
) -> Result<StructuredInstance<T>, ConstructError> {
    require_proper_symmetric(gap, cap)?;
    let dilated = gap.dilate((n * n) as u64)?;
    let vol = dilated.volume();
    if vol > cap {
        return Err(GapError::VolumeExceedsCap { volume: vol, cap }.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = gap.ambient_dim();
    let mut planted = CoeffMatrix::zeros(dim, n);
    let mut noisy = CoeffMatrix::zeros(dim, n);
    for i in 0..n {
        for j in i..n {
            let c = random_coords(gap, &mut rng);
            let value = gap.value_of(&c);
            let e = vecs::add(&value, &perturbation(dim, delta, &mut rng));
            planted.entries[i][j] = value.clone();
            planted.entries[j][i] = value;
            noisy.entries[i][j] = e.clone();
            noisy.entries[j][i] = e;
        }
    }
    Ok(StructuredInstance {
        kind: InstanceKind::QuadraticGap,
        n,
        coefficients: Coefficients::Matrix(noisy),
        gap: Some(gap.clone()),
        perturbation: delta.clone(),
        hidden: HiddenData { planted_matrix: Some(planted), ..HiddenData::default() },
        claimed_beta: T::from_int((n * n) as i64) * delta.clone(),
        claimed_rho_lower: T::one() / volume_as_scalar::<T>(vol)?,
    })
}

/// Exact probability that every integer row dotted with a +-1 vector
/// vanishes simultaneously: the rows become d-dimensional coefficients of
/// one linear form, and we read off the mass at the origin.
pub fn joint_kernel_probability<T: Scalar>(
    k_rows: &[Vec<i64>],
    n: usize,
    budget: u64,
) -> Result<T, ConstructError> {
    if k_rows.is_empty() {
        return Ok(T::one());
    }
    if k_rows.iter().any(|row| row.len() != n) {
        return Err(ConstructError::Invalid("kernel row length mismatch".into()));
    }
    let r = k_rows.len();
    let coeffs: Vec<Vec<T>> = (0..n)
        .map(|i| (0..r).map(|s| T::from_int(k_rows[s][i])).collect())
        .collect();
    let atoms = linear_form_atoms(&coeffs, &DiscreteDist::<T>::bernoulli(), budget)?;
    let zero = vecs::zero(r);
    Ok(atoms
        .iter()
        .find(|(v, _)| *v == zero)
        .map(|(_, m)| m.clone())
        .unwrap_or_else(T::zero))
}

/// `q_ij = k_i b_j + k_j b_i`: the quadratic form factors and vanishes
/// whenever `sum k_i x_i = 0`.
pub fn build_rank_one_instance<T: Scalar>(
    n: usize,
    k: &[i64],
    b: &CoeffVector<T>,
    delta: &T,
    seed: u64,
    k_bound: i64,
    budget: u64,
) -> Result<StructuredInstance<T>, ConstructError> {
    if k.len() != n || b.len() != n {
        return Err(ConstructError::Invalid("k and b must have length n".into()));
    }
    if k.iter().any(|&ki| ki.abs() > k_bound) {
        return Err(ConstructError::Invalid(format!("|k_i| exceeds the bound {k_bound}")));
    }
    let kernel = joint_kernel_probability::<T>(&[k.to_vec()], n, budget)?;
    if kernel.is_zero() {
        return Err(ConstructError::InfeasibleK);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = b.dim;
    let mut planted = CoeffMatrix::zeros(dim, n);
    let mut noisy = CoeffMatrix::zeros(dim, n);
    for i in 0..n {
        for j in i..n {
            let mut value = vecs::scale(&b.entries[j], &T::from_int(k[i]));
            vecs::add_scaled(&mut value, &b.entries[i], &T::from_int(k[j]));
            let e = vecs::add(&value, &perturbation(dim, delta, &mut rng));
            planted.entries[i][j] = value.clone();
            planted.entries[j][i] = value;
            noisy.entries[i][j] = e.clone();
            noisy.entries[j][i] = e;
        }
    }
    Ok(StructuredInstance {
        kind: InstanceKind::RankOne,
        n,
        coefficients: Coefficients::Matrix(noisy),
        gap: None,
        perturbation: delta.clone(),
        hidden: HiddenData {
            planted_matrix: Some(planted),
            k_rows: Some(vec![k.to_vec()]),
            b_rows: Some(vec![b.clone()]),
            ..HiddenData::default()
        },
        claimed_beta: T::from_int((n * n) as i64) * delta.clone(),
        claimed_rho_lower: kernel,
    })
}

/// GAP part plus `r` rank-one algebraic parts.
pub fn build_mixed_instance<T: Scalar>(
    n: usize,
    gap: &Gap<T>,
    k_rows: &[Vec<i64>],
    b_rows: &[CoeffVector<T>],
    delta: &T,
    seed: u64,
    cap: u128,
    budget: u64,
) -> Result<StructuredInstance<T>, ConstructError> {
    if k_rows.len() != b_rows.len() {
        return Err(ConstructError::Invalid("need one b row per k row".into()));
    }
    require_proper_symmetric(gap, cap)?;
    let dim = gap.ambient_dim();
    if b_rows.iter().any(|b| b.len() != n || b.dim != dim) {
        return Err(ConstructError::Invalid("b row shape mismatch".into()));
    }
    let dilated = gap.dilate(((n * n) as u64).max(1))?;
    let vol = dilated.volume();
    if vol > cap {
        return Err(GapError::VolumeExceedsCap { volume: vol, cap }.into());
    }
    let kernel = joint_kernel_probability::<T>(k_rows, n, budget)?;
    if kernel.is_zero() {
        return Err(ConstructError::InfeasibleK);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planted = CoeffMatrix::zeros(dim, n);
    let mut noisy = CoeffMatrix::zeros(dim, n);
    for i in 0..n {
        for j in i..n {
            let c = random_coords(gap, &mut rng);
            let mut value = gap.value_of(&c);
            for (ks, bs) in k_rows.iter().zip(b_rows) {
                vecs::add_scaled(&mut value, &bs.entries[j], &T::from_int(ks[i]));
                vecs::add_scaled(&mut value, &bs.entries[i], &T::from_int(ks[j]));
            }
            let e = vecs::add(&value, &perturbation(dim, delta, &mut rng));
            planted.entries[i][j] = value.clone();
            planted.entries[j][i] = value;
            noisy.entries[i][j] = e.clone();
            noisy.entries[j][i] = e;
        }
    }
    Ok(StructuredInstance {
        kind: InstanceKind::Mixed,
        n,
        coefficients: Coefficients::Matrix(noisy),
        gap: Some(gap.clone()),
        perturbation: delta.clone(),
        hidden: HiddenData {
            planted_matrix: Some(planted),
            k_rows: Some(k_rows.to_vec()),
            b_rows: Some(b_rows.to_vec()),
            ..HiddenData::default()
        },
        claimed_beta: T::from_int((n * n) as i64) * delta.clone(),
        claimed_rho_lower: kernel / volume_as_scalar::<T>(vol)?,
    })
}

/// Exact structural checks: coefficients within delta of the planted values
/// entrywise, and exact symmetry for matrix instances.
pub fn check_instance_invariants<T: Scalar>(inst: &StructuredInstance<T>) -> bool {
    let d2 = inst.perturbation.clone() * inst.perturbation.clone();
    match (&inst.coefficients, &inst.hidden.planted_vector, &inst.hidden.planted_matrix) {
        (Coefficients::Vector(c), Some(p), _) => c
            .entries
            .iter()
            .zip(&p.entries)
            .all(|(a, q)| vecs::dist_sq(a, q) <= d2),
        (Coefficients::Matrix(c), _, Some(p)) => {
            c.is_symmetric()
                && c.entries
                    .iter()
                    .flatten()
                    .zip(p.entries.iter().flatten())
                    .all(|(a, q)| vecs::dist_sq(a, q) <= d2)
        }
        _ => false,
    }
}

/// Exact small-ball mass at the claimed radius (sup center), as a certified
/// lower bound, next to the claimed pigeonhole floor.
pub fn verify_pigeonhole<T: Scalar>(
    inst: &StructuredInstance<T>,
    dist: &DiscreteDist<T>,
    budget: u64,
) -> Result<(T, bool), ConstructError> {
    let rho = match &inst.coefficients {
        Coefficients::Vector(c) => {
            rho_linear_exact(c, dist, &inst.claimed_beta, &CenterMode::SupOverCenter, budget)?
        }
        Coefficients::Matrix(a) => {
            let b = CoeffVector::zeros(a.dim, a.n());
            rho_quadratic_exact(a, &b, dist, &inst.claimed_beta, &CenterMode::SupOverCenter, budget)?
        }
    };
    let lb = rho
        .estimate
        .lower_bound()
        .expect("exact engine returns a bound");
    let ok = lb >= inst.claimed_rho_lower;
    Ok((lb, ok))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Q;
    use num_traits::{One, Zero};

    const CAP: u128 = 1 << 24;
    const BUDGET: u64 = 1 << 22;

    fn q(n: i64, d: i64) -> Q {
        Q::from_ratio(n, d)
    }

    fn rank1_gap(g: i64, k: i64) -> Gap<Q> {
        Gap::symmetric(1, vec![vec![Q::from_int(g)]], vec![k]).unwrap()
    }

    fn bernoulli() -> DiscreteDist<Q> {
        DiscreteDist::bernoulli()
    }

    #[test]
    fn linear_gap_pigeonhole_exact_delta_zero() {
        let gap = rank1_gap(1, 2);
        let inst = build_linear_gap_instance(4, &gap, &Q::zero(), 11, CAP).unwrap();
        // |4Q| = 2*8 + 1 = 17
        assert_eq!(inst.claimed_rho_lower, q(1, 17));
        assert_eq!(inst.claimed_beta, Q::zero());
        assert!(check_instance_invariants(&inst));
        let (rho, ok) = verify_pigeonhole(&inst, &bernoulli(), BUDGET).unwrap();
        assert!(ok, "exact rho {rho} below claimed {}", inst.claimed_rho_lower);
    }

    #[test]
    fn linear_gap_all_zero_plant_gives_rho_one() {
        let gap = Gap::<Q>::zero(1);
        let inst = build_linear_gap_instance(5, &gap, &Q::zero(), 3, CAP).unwrap();
        let (rho, ok) = verify_pigeonhole(&inst, &bernoulli(), BUDGET).unwrap();
        assert!(ok);
        assert_eq!(rho, Q::one());
    }

    #[test]
    fn linear_gap_perturbed_bound_still_holds() {
        let gap = rank1_gap(1, 2);
        let inst = build_linear_gap_instance(4, &gap, &q(1, 100), 5, CAP).unwrap();
        assert_eq!(inst.claimed_beta, q(4, 100));
        assert!(check_instance_invariants(&inst));
        let (_, ok) = verify_pigeonhole(&inst, &bernoulli(), BUDGET).unwrap();
        assert!(ok);
    }

    #[test]
    fn quadratic_gap_examples() {
        let gap = rank1_gap(1, 1);
        let inst = build_quadratic_gap_instance(3, &gap, &Q::zero(), 2, CAP).unwrap();
        // |9Q| = 19
        assert_eq!(inst.claimed_rho_lower, q(1, 19));
        assert!(check_instance_invariants(&inst));
        let (_, ok) = verify_pigeonhole(&inst, &bernoulli(), BUDGET).unwrap();
        assert!(ok);

        let trivial = build_quadratic_gap_instance(3, &Gap::zero(1), &Q::zero(), 2, CAP).unwrap();
        let (rho, ok) = verify_pigeonhole(&trivial, &bernoulli(), BUDGET).unwrap();
        assert!(ok);
        assert_eq!(rho, Q::one());

        let perturbed = build_quadratic_gap_instance(3, &gap, &q(1, 1000), 9, CAP).unwrap();
        assert_eq!(perturbed.claimed_beta, q(9, 1000));
        let (_, ok) = verify_pigeonhole(&perturbed, &bernoulli(), BUDGET).unwrap();
        assert!(ok);
    }

    #[test]
    fn rank_one_kernel_probability_and_bound() {
        let b = CoeffVector::new(1, vec![vec![q(7, 3)], vec![q(-1, 2)], vec![q(5, 1)], vec![q(2, 7)]])
            .unwrap();
        let inst =
            build_rank_one_instance(4, &[1, 1, -1, -1], &b, &Q::zero(), 13, 10, BUDGET).unwrap();
        assert_eq!(inst.claimed_rho_lower, q(3, 8));
        assert!(check_instance_invariants(&inst));
        let (rho, ok) = verify_pigeonhole(&inst, &bernoulli(), BUDGET).unwrap();
        assert!(ok);
        assert!(rho >= q(3, 8));

        // all-zero k makes the form identically zero through the planted part
        let zk = build_rank_one_instance(4, &[0, 0, 0, 0], &b, &Q::zero(), 13, 10, BUDGET).unwrap();
        let (rho, _) = verify_pigeonhole(&zk, &bernoulli(), BUDGET).unwrap();
        assert_eq!(rho, Q::one());

        // n = 2 with k = (1, 1): kernel probability 1/2
        let b2 = CoeffVector::new(1, vec![vec![Q::one()], vec![Q::one()]]).unwrap();
        let small = build_rank_one_instance(2, &[1, 1], &b2, &Q::zero(), 1, 10, BUDGET).unwrap();
        assert_eq!(small.claimed_rho_lower, q(1, 2));
        let (_, ok) = verify_pigeonhole(&small, &bernoulli(), BUDGET).unwrap();
        assert!(ok);
    }

    #[test]
    fn rank_one_rejects_infeasible_kernel() {
        let b = CoeffVector::new(1, vec![vec![Q::one()], vec![Q::one()], vec![Q::one()]]).unwrap();
        // odd number of odd coefficients: the signed sum can never vanish
        let err = build_rank_one_instance(3, &[1, 1, 1], &b, &Q::zero(), 1, 10, BUDGET);
        assert!(matches!(err, Err(ConstructError::InfeasibleK)));
    }

    #[test]
    fn mixed_reduces_and_composes() {
        let gap = rank1_gap(1, 1);
        // r = 0 behaves like the quadratic-gap construction
        let r0 = build_mixed_instance(3, &gap, &[], &[], &Q::zero(), 21, CAP, BUDGET).unwrap();
        assert_eq!(r0.claimed_rho_lower, q(1, 19));
        let (_, ok) = verify_pigeonhole(&r0, &bernoulli(), BUDGET).unwrap();
        assert!(ok);

        // rank-one part over the zero gap behaves like the rank-one builder
        let b = CoeffVector::new(1, vec![vec![q(1, 3)]; 4]).unwrap();
        let alg = build_mixed_instance(
            4,
            &Gap::zero(1),
            &[vec![1, 1, -1, -1]],
            &[b.clone()],
            &Q::zero(),
            21,
            CAP,
            BUDGET,
        )
        .unwrap();
        assert_eq!(alg.claimed_rho_lower, q(3, 8));
        let (_, ok) = verify_pigeonhole(&alg, &bernoulli(), BUDGET).unwrap();
        assert!(ok);

        // the full composition: claimed = P(kernel) / |16 Q| = (3/8) / 33
        let full = build_mixed_instance(
            4,
            &gap,
            &[vec![1, 1, -1, -1]],
            &[b],
            &Q::zero(),
            21,
            CAP,
            BUDGET,
        )
        .unwrap();
        assert_eq!(full.claimed_rho_lower, q(3, 8) * q(1, 33));
        assert!(check_instance_invariants(&full));
        let (_, ok) = verify_pigeonhole(&full, &bernoulli(), BUDGET).unwrap();
        assert!(ok);
    }

    #[test]
    fn joint_kernel_matches_direct_enumeration() {
        // oracle: enumerate all sign vectors and test both rows
        let rows = vec![vec![1i64, 1, -1, -1], vec![1, -1, 1, -1]];
        let n = 4;
        let mut hits = 0i64;
        for bits in 0..(1u32 << n) {
            let x: Vec<i64> = (0..n).map(|i| if bits >> i & 1 == 1 { 1 } else { -1 }).collect();
            if rows.iter().all(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum::<i64>() == 0) {
                hits += 1;
            }
        }
        let oracle = q(hits, 1 << n);
        assert_eq!(joint_kernel_probability::<Q>(&rows, n, BUDGET).unwrap(), oracle);
    }

    #[test]
    fn instances_roundtrip_through_json() {
        let gap = rank1_gap(1, 2);
        let inst = build_linear_gap_instance(4, &gap, &q(1, 100), 5, CAP).unwrap();
        let text = serde_json::to_string(&inst).unwrap();
        let back: StructuredInstance<Q> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn determinism_per_seed() {
        let gap = rank1_gap(1, 2);
        let a = build_quadratic_gap_instance(4, &gap, &q(1, 50), 99, CAP).unwrap();
        let b = build_quadratic_gap_instance(4, &gap, &q(1, 50), 99, CAP).unwrap();
        assert_eq!(a, b);
        let c = build_quadratic_gap_instance(4, &gap, &q(1, 50), 100, CAP).unwrap();
        assert_ne!(a, c);
    }
}
