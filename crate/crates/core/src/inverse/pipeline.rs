//! The proof-shaped certificate pipelines.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoupling::{mask_matrix, DecouplingConstants, SubsetMask};
use crate::enclosure::{default_tol, ln_enclosure, sqrt_upper};
use crate::gap::rank_reduce;
use crate::randvar::DiscreteDist;
use crate::scalar::{serde_scalar, serde_scalar_opt, serde_scalar_vec, Scalar};
use crate::smallball::{
    pow_u128, rho_bilinear_exact, rho_linear_exact, rho_quadratic_exact, CenterMode, CoeffMatrix,
    CoeffVector,
};
use crate::vecs;

use super::fit::{fit_gap_linear, FitParams};
use super::verify::row_probability;
use super::{InverseError, RowCoeffs, StructureCertificate};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YMode {
    Exhaustive,
    Sampled { seed: u64, count: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetMode {
    Exhaustive,
    Sampled { seed: u64, count: usize },
}

#[derive(Debug, Clone)]
pub struct CertOptions<T> {
    /// Witness for the hypothesis `rho >= n^-B`; computed exactly if absent.
    pub rho_witness: Option<T>,
    pub y_mode: YMode,
    /// Enumeration budget for inner probabilities and verification sums.
    pub budget: u64,
}

impl<T> Default for CertOptions<T> {
    fn default() -> Self {
        CertOptions { rho_witness: None, y_mode: YMode::Exhaustive, budget: 1 << 22 }
    }
}

#[derive(Debug, Clone)]
pub struct QuadOptions<T> {
    pub rho_witness: Option<T>,
    /// Threshold constant in `tau = c_log * beta * sqrt(ln n)` for the
    /// per-mask bilinear radius.
    pub c_log: T,
    pub subset_mode: SubsetMode,
    pub y_mode: YMode,
    pub budget: u64,
    /// Minimum number of subsets that must agree on the winning key.
    pub min_support: usize,
}

impl<T: Scalar> Default for QuadOptions<T> {
    fn default() -> Self {
        QuadOptions {
            rho_witness: None,
            c_log: T::one(),
            subset_mode: SubsetMode::Exhaustive,
            y_mode: YMode::Exhaustive,
            budget: 1 << 22,
            min_support: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GoodVector<T: Scalar> {
    #[serde(with = "serde_scalar_vec")]
    pub y: Vec<T>,
    pub covered: Vec<usize>,
    pub rank: usize,
    pub tuple: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TupleVote<T: Scalar> {
    pub tuple: Vec<usize>,
    #[serde(with = "serde_scalar")]
    pub mass: T,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MatrixVote<T: Scalar> {
    pub matrix: Vec<Vec<i64>>,
    #[serde(with = "serde_scalar")]
    pub mass: T,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RowTrace<T: Scalar> {
    pub row: usize,
    pub coeffs: Vec<i64>,
    #[serde(with = "serde_scalar")]
    pub support_mass: T,
    pub support_count: usize,
    /// Which side of the mask the row's winning population sat on
    /// (quadratic stage only).
    pub side: Option<String>,
    #[serde(with = "serde_scalar_opt")]
    pub verified_probability: Option<T>,
    /// Same check under the doubled test variable.
    #[serde(with = "serde_scalar_opt")]
    pub verified_probability_scaled: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSummary {
    pub bits: u64,
    pub outcome: String,
    pub surviving: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SubsetStage<T: Scalar> {
    #[serde(with = "serde_scalar")]
    pub rho_quadratic: T,
    #[serde(with = "serde_scalar")]
    pub rho_bilinear_floor: T,
    #[serde(with = "serde_scalar")]
    pub bilinear_beta: T,
    pub total: usize,
    pub successes: usize,
    pub winner_pivots: Vec<usize>,
    pub winner_k: i64,
    pub winner_support: usize,
    /// The pivots lying inside the voted mask pattern (coefficients over
    /// these get their sign flipped for rows outside the mask).
    pub partition_in_pivots: Vec<usize>,
    pub partition_support: usize,
    pub subsets: Vec<SubsetSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PipelineTrace<T: Scalar> {
    pub y_population: usize,
    pub good_count: usize,
    #[serde(with = "serde_scalar")]
    pub good_mass: T,
    pub fitted_count: usize,
    pub good_vectors: Vec<GoodVector<T>>,
    pub tuple_votes: Vec<TupleVote<T>>,
    pub common_index_tuple: Vec<usize>,
    pub matrix_votes: Vec<MatrixVote<T>>,
    pub common_coeff_matrix: Vec<Vec<i64>>,
    pub rows: Vec<RowTrace<T>>,
    pub dropped_rows: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub subset_stage: Option<SubsetStage<T>>,
}

impl<T: Scalar> PipelineTrace<T> {
    fn empty() -> Self {
        PipelineTrace {
            y_population: 0,
            good_count: 0,
            good_mass: T::zero(),
            fitted_count: 0,
            good_vectors: vec![],
            tuple_votes: vec![],
            common_index_tuple: vec![],
            matrix_votes: vec![],
            common_coeff_matrix: vec![],
            rows: vec![],
            dropped_rows: vec![],
            subset_stage: None,
        }
    }
}

/// A projection vector is good when the inner linear form concentrates at
/// least a quarter as well as the hypothesis says the bilinear form does.
pub fn classify_good<T: Scalar>(
    a: &CoeffMatrix<T>,
    y: &[T],
    rho: &T,
    beta: &T,
    dist: &DiscreteDist<T>,
    budget: u64,
) -> Result<bool, InverseError> {
    let proj = CoeffVector::new(a.dim, a.project_rows(y))?;
    let r = rho_linear_exact(&proj, dist, beta, &CenterMode::SupOverCenter, budget)?;
    let lb = r.estimate.lower_bound().expect("exact engine yields a bound");
    Ok(lb * T::from_int(4) >= *rho)
}

/// Exact rank of a set of integer coordinate rows.
fn coord_rank<T: Scalar>(rows: &[&Vec<i64>], cols: usize) -> usize {
    let mut mat: Vec<Vec<T>> = rows
        .iter()
        .map(|r| r.iter().map(|&c| T::from_int(c)).collect())
        .collect();
    let mut rank = 0;
    for col in 0..cols {
        let Some(p) = (rank..mat.len()).find(|&i| !mat[i][col].is_zero()) else { continue };
        mat.swap(rank, p);
        let inv = T::one() / mat[rank][col].clone();
        for c in col..cols {
            mat[rank][c] = mat[rank][c].clone() * inv.clone();
        }
        for i in 0..mat.len() {
            if i != rank && !mat[i][col].is_zero() {
                let f = mat[i][col].clone();
                for c in col..cols {
                    let delta = f.clone() * mat[rank][c].clone();
                    mat[i][c] = mat[i][c].clone() - delta;
                }
            }
        }
        rank += 1;
        if rank == mat.len() {
            break;
        }
    }
    rank
}

fn det_i128(rows: &[Vec<i128>]) -> Option<i128> {
    let n = rows.len();
    match n {
        0 => Some(1),
        1 => Some(rows[0][0]),
        _ => {
            let mut acc: i128 = 0;
            for j in 0..n {
                if rows[0][j] == 0 {
                    continue;
                }
                let minor: Vec<Vec<i128>> = rows[1..]
                    .iter()
                    .map(|r| {
                        r.iter()
                            .enumerate()
                            .filter(|&(c, _)| c != j)
                            .map(|(_, &v)| v)
                            .collect()
                    })
                    .collect();
                let sub = det_i128(&minor)?;
                let term = rows[0][j].checked_mul(sub)?;
                acc = if j % 2 == 0 { acc.checked_add(term)? } else { acc.checked_sub(term)? };
            }
            Some(acc)
        }
    }
}

/// Per-good-vector digest after fitting and rank reduction.
#[derive(Debug, Clone)]
struct FitDigest {
    covered: Vec<usize>,
    coords: BTreeMap<usize, Vec<i64>>,
    rank: usize,
    tuple: Vec<usize>,
    cmat: Vec<Vec<i64>>,
}

#[derive(Debug, Clone)]
enum Digest {
    NotGood,
    NoFit,
    Fit(FitDigest),
}

fn digest_projection<T: Scalar>(
    proj: &[Vec<T>],
    rho: &T,
    dist: &DiscreteDist<T>,
    fit_params: &FitParams<T>,
    budget: u64,
) -> Result<Digest, InverseError> {
    let cv = CoeffVector::new(proj.first().map_or(1, |p| p.len()), proj.to_vec())?;
    let r = rho_linear_exact(&cv, dist, &fit_params.beta, &CenterMode::SupOverCenter, budget)?;
    let lb = r.estimate.lower_bound().expect("exact engine yields a bound");
    if lb * T::from_int(4) < *rho {
        return Ok(Digest::NotGood);
    }
    let Some(fit) = fit_gap_linear(proj, fit_params)? else {
        return Ok(Digest::NoFit);
    };
    // reduce until the assigned points span the gap
    let pts: Vec<_> = fit.covered.iter().map(|i| fit.assignments[i].clone()).collect();
    let reduction = match rank_reduce(&fit.gap, &pts, fit_params.size_cap.saturating_mul(1 << 16)) {
        Ok(r) => r,
        Err(_) => return Ok(Digest::NoFit),
    };
    let rank = reduction.gap.rank();
    let coords: BTreeMap<usize, Vec<i64>> = fit
        .covered
        .iter()
        .copied()
        .zip(reduction.points.iter().map(|p| p.coords.clone()))
        .collect();
    // lexicographically first spanning subset of the covered indices
    let mut tuple = Vec::with_capacity(rank);
    let mut chosen: Vec<&Vec<i64>> = Vec::with_capacity(rank);
    for i in &fit.covered {
        if tuple.len() == rank {
            break;
        }
        chosen.push(&coords[i]);
        if coord_rank::<T>(&chosen, rank) == chosen.len() {
            tuple.push(*i);
        } else {
            chosen.pop();
        }
    }
    debug_assert_eq!(tuple.len(), rank);
    let cmat: Vec<Vec<i64>> = tuple.iter().map(|i| coords[i].clone()).collect();
    Ok(Digest::Fit(FitDigest { covered: fit.covered, coords, rank, tuple, cmat }))
}

/// Enumerates (or samples) the y population with its exact masses.
fn y_population<T: Scalar>(
    n: usize,
    dist: &DiscreteDist<T>,
    mode: &YMode,
    budget: u64,
) -> Result<Vec<(Vec<T>, T)>, InverseError> {
    match mode {
        YMode::Exhaustive => {
            let s = dist.support_size() as u64;
            let total = pow_u128(s, n as u32);
            if total > budget as u128 {
                return Err(InverseError::Invalid(format!(
                    "exhaustive y enumeration needs {total} outcomes, budget {budget}; use sampling"
                )));
            }
            let atoms = dist.atoms();
            let mut out = Vec::with_capacity(total as usize);
            crate::smallball::for_each_outcome(n, atoms.len(), |digits| {
                let y: Vec<T> = digits.iter().map(|&d| atoms[d].0.clone()).collect();
                let mass = digits.iter().fold(T::one(), |m, &d| m * atoms[d].1.clone());
                out.push((y, mass));
            });
            Ok(out)
        }
        YMode::Sampled { seed, count } => {
            if *count == 0 {
                return Err(InverseError::Invalid("sample count must be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let atoms = dist.atoms();
            let cumulative: Vec<f64> = {
                let mut acc = 0.0;
                atoms
                    .iter()
                    .map(|(_, m)| {
                        acc += m.approx_f64();
                        acc
                    })
                    .collect()
            };
            let mass = T::one() / T::from_int(*count as i64);
            Ok((0..*count)
                .map(|_| {
                    let y: Vec<T> = (0..n)
                        .map(|_| {
                            let u: f64 = rng.gen();
                            let idx = cumulative
                                .iter()
                                .position(|&c| u < c)
                                .unwrap_or(atoms.len() - 1);
                            atoms[idx].0.clone()
                        })
                        .collect();
                    (y, mass.clone())
                })
                .collect())
        }
    }
}

/// Picks the maximal-mass entry; ties go to the lexicographically smallest
/// key because the map iterates in key order.
fn vote_winner<K: Clone + Ord, T: Scalar>(votes: &BTreeMap<K, (T, usize)>) -> Option<(K, T, usize)> {
    let mut best: Option<(K, T, usize)> = None;
    for (k, (mass, count)) in votes {
        match &best {
            Some((_, bm, _)) if bm >= mass => {}
            _ => best = Some((k.clone(), mass.clone(), *count)),
        }
    }
    best
}

fn coverage_floor<T: Scalar>(n: usize, eps: &T) -> usize {
    let x = (n as f64).powf(eps.approx_f64());
    n.saturating_sub((2.0 * x).ceil() as usize)
}

/// Runs the bilinear certificate pipeline.
pub fn bilinear_certificate<T: Scalar>(
    a: &CoeffMatrix<T>,
    dist: &DiscreteDist<T>,
    beta: &T,
    fit_params: &FitParams<T>,
    opts: &CertOptions<T>,
) -> Result<(StructureCertificate, PipelineTrace<T>), InverseError> {
    let n = a.n();
    if n == 0 {
        return Err(InverseError::Invalid("empty matrix".into()));
    }
    let mut fit_params = fit_params.clone();
    fit_params.beta = beta.clone();
    let rho = match &opts.rho_witness {
        Some(r) => r.clone(),
        None => rho_bilinear_exact(a, dist, beta, &CenterMode::SupOverCenter, opts.budget)?
            .estimate
            .lower_bound()
            .expect("exact engine yields a bound"),
    };

    let ys = y_population(n, dist, &opts.y_mode, opts.budget)?;
    let mut trace = PipelineTrace::<T>::empty();
    trace.y_population = ys.len();

    let mut cache: BTreeMap<Vec<Vec<T>>, Digest> = BTreeMap::new();
    let mut fitted: Vec<(usize, FitDigest)> = Vec::new(); // index into ys
    for (yi, (y, mass)) in ys.iter().enumerate() {
        let proj = a.project_rows(y);
        let digest = match cache.get(&proj) {
            Some(d) => d.clone(),
            None => {
                let d = digest_projection(&proj, &rho, dist, &fit_params, opts.budget)?;
                cache.insert(proj, d.clone());
                d
            }
        };
        match digest {
            Digest::NotGood => {}
            Digest::NoFit => {
                trace.good_count += 1;
                trace.good_mass = trace.good_mass.clone() + mass.clone();
            }
            Digest::Fit(f) => {
                trace.good_count += 1;
                trace.good_mass = trace.good_mass.clone() + mass.clone();
                trace.good_vectors.push(GoodVector {
                    y: y.clone(),
                    covered: f.covered.clone(),
                    rank: f.rank,
                    tuple: f.tuple.clone(),
                });
                fitted.push((yi, f));
            }
        }
    }
    if trace.good_count == 0 {
        return Err(InverseError::NoGoodVectors);
    }
    trace.fitted_count = fitted.len();
    if fitted.is_empty() {
        return Err(InverseError::NoSpanningTuple);
    }

    // stage: common spanning index tuple
    let mut tuple_votes: BTreeMap<Vec<usize>, (T, usize)> = BTreeMap::new();
    for (yi, f) in &fitted {
        let slot = tuple_votes
            .entry(f.tuple.clone())
            .or_insert_with(|| (T::zero(), 0));
        slot.0 = slot.0.clone() + ys[*yi].1.clone();
        slot.1 += 1;
    }
    trace.tuple_votes = tuple_votes
        .iter()
        .map(|(t, (m, c))| TupleVote { tuple: t.clone(), mass: m.clone(), count: *c })
        .collect();
    let (pivot_rows, _, _) = vote_winner(&tuple_votes).expect("nonempty votes");
    trace.common_index_tuple = pivot_rows.clone();
    let stage1: Vec<(usize, &FitDigest)> = fitted
        .iter()
        .filter(|(_, f)| f.tuple == pivot_rows)
        .map(|(yi, f)| (*yi, f))
        .collect();

    // stage: common coefficient matrix over the pivots
    let mut matrix_votes: BTreeMap<Vec<Vec<i64>>, (T, usize)> = BTreeMap::new();
    for (yi, f) in &stage1 {
        let slot = matrix_votes
            .entry(f.cmat.clone())
            .or_insert_with(|| (T::zero(), 0));
        slot.0 = slot.0.clone() + ys[*yi].1.clone();
        slot.1 += 1;
    }
    trace.matrix_votes = matrix_votes
        .iter()
        .map(|(m, (mass, c))| MatrixVote { matrix: m.clone(), mass: mass.clone(), count: *c })
        .collect();
    let (cmat, _, _) = vote_winner(&matrix_votes).expect("nonempty votes");
    trace.common_coeff_matrix = cmat.clone();
    let stage2: Vec<(usize, &FitDigest)> =
        stage1.iter().filter(|(_, f)| f.cmat == cmat).copied().collect();

    let cmat128: Vec<Vec<i128>> =
        cmat.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    let k128 = det_i128(&cmat128)
        .ok_or_else(|| InverseError::Overflow("pivot determinant".into()))?;
    if k128 == 0 {
        return Err(InverseError::Invalid("pivot matrix is singular".into()));
    }
    let k = i64::try_from(k128).map_err(|_| InverseError::Overflow("k".into()))?;

    let r = pivot_rows.len();
    let n_pow = (n as i128)
        .checked_pow(fit_params.bound_exponent as u32)
        .ok_or_else(|| InverseError::Overflow("n^C".into()))?;
    let radius = fit_params.beta.clone()
        * crate::scalar::powi(&T::from_int(n as i64), fit_params.bound_exponent as u32);
    let radius_sq = radius.clone() * radius.clone();

    // stage: per-row determinant identities
    let mut row_coeffs = Vec::new();
    let mut surviving = Vec::new();
    for i in 0..n {
        let population: Vec<(usize, &FitDigest)> = stage2
            .iter()
            .filter(|(_, f)| f.coords.contains_key(&i))
            .copied()
            .collect();
        if population.is_empty() {
            continue;
        }
        let mut votes: BTreeMap<Vec<i64>, (T, usize)> = BTreeMap::new();
        let mut supporters: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
        for &(yi, f) in &population {
            let v: Vec<i128> = f.coords[&i].iter().map(|&c| c as i128).collect();
            // Cramer: k v + sum_j coeff_j C_j = 0 with
            // coeff_j = -det(C with row j replaced by v)
            let mut coeffs = Vec::with_capacity(r);
            for j in 0..r {
                let mut replaced = cmat128.clone();
                replaced[j] = v.clone();
                let d = det_i128(&replaced)
                    .ok_or_else(|| InverseError::Overflow("identity determinant".into()))?;
                coeffs.push(
                    i64::try_from(-d).map_err(|_| InverseError::Overflow("coefficient".into()))?,
                );
            }
            // the identity holds exactly on coordinates by construction
            debug_assert!({
                (0..r).all(|c| {
                    let mut s = k128 * v[c];
                    for j in 0..r {
                        s += coeffs[j] as i128 * cmat128[j][c];
                    }
                    s == 0
                })
            });
            let slot = votes.entry(coeffs.clone()).or_insert_with(|| (T::zero(), 0));
            slot.0 = slot.0.clone() + ys[yi].1.clone();
            slot.1 += 1;
            supporters.entry(coeffs).or_default().push(yi);
        }
        let (coeffs, support_mass, support_count) = vote_winner(&votes).expect("nonempty votes");
        // bound and radius checks; rows that fail are dropped, not fudged
        let bounds_ok = k128.abs() <= n_pow && coeffs.iter().all(|&c| (c as i128).abs() <= n_pow);
        let combined = super::verify::combined_row_parts(a, k, &pivot_rows, &coeffs, i);
        let radius_ok = bounds_ok
            && supporters[&coeffs].iter().all(|&yi| {
                let mut acc = vecs::zero(a.dim);
                for (w, yv) in combined.iter().zip(&ys[yi].0) {
                    vecs::add_scaled(&mut acc, w, yv);
                }
                vecs::norm_sq(&acc) <= radius_sq
            });
        if radius_ok {
            trace.rows.push(RowTrace {
                row: i,
                coeffs: coeffs.clone(),
                support_mass,
                support_count,
                side: None,
                verified_probability: None,
                verified_probability_scaled: None,
            });
            row_coeffs.push(RowCoeffs { row: i, coeffs });
            surviving.push(i);
        } else {
            trace.dropped_rows.push(i);
        }
    }

    let floor = coverage_floor(n, &fit_params.eps);
    if surviving.len() < floor {
        return Err(InverseError::CoverageFloorMissed { surviving: surviving.len(), floor });
    }
    let cert = StructureCertificate {
        k,
        pivot_rows,
        row_coeffs,
        surviving,
        bound_exponent: fit_params.bound_exponent,
    };
    Ok((cert, trace))
}

fn subset_population(n: usize, mode: &SubsetMode) -> Result<Vec<u64>, InverseError> {
    let total: u128 = 1u128 << n.min(127);
    match mode {
        SubsetMode::Exhaustive => {
            if n > 20 {
                return Err(InverseError::Invalid(
                    "exhaustive subsets past n = 20 are unreasonable; use sampling".into(),
                ));
            }
            Ok((0..total as u64).collect())
        }
        SubsetMode::Sampled { seed, count } => {
            if *count == 0 {
                return Err(InverseError::Invalid("sample count must be positive".into()));
            }
            if *count as u128 >= total {
                return Ok((0..total as u64).collect());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut seen = std::collections::BTreeSet::new();
            let mut out = Vec::with_capacity(*count);
            while out.len() < *count {
                let bits = rng.gen_range(0..total as u64);
                if seen.insert(bits) {
                    out.push(bits);
                }
            }
            Ok(out)
        }
    }
}

/// Runs the quadratic certificate pipeline: decouple through subset masks,
/// certify each mask bilinearly over the symmetrized variable, and vote the
/// per-mask certificates into one certificate over the lazy symmetrized
/// variable.
pub fn quadratic_certificate<T: Scalar>(
    a: &CoeffMatrix<T>,
    dist: &DiscreteDist<T>,
    beta: &T,
    fit_params: &FitParams<T>,
    opts: &QuadOptions<T>,
) -> Result<(StructureCertificate, PipelineTrace<T>), InverseError> {
    let n = a.n();
    if n == 0 {
        return Err(InverseError::Invalid("empty matrix".into()));
    }
    if !a.is_symmetric() {
        return Err(InverseError::Invalid("quadratic pipeline needs a symmetric matrix".into()));
    }
    if beta.is_negative() {
        return Err(InverseError::Invalid("beta must be non-negative".into()));
    }
    let b0 = CoeffVector::zeros(a.dim, n);
    let rho_q = match &opts.rho_witness {
        Some(r) => r.clone(),
        None => {
            rho_quadratic_exact(a, &b0, dist, beta, &CenterMode::SupOverCenter, opts.budget)?
                .estimate
                .lower_bound()
                .expect("exact engine yields a bound")
        }
    };
    let constants = DecouplingConstants::<T>::for_dim(a.dim);
    let rho_bil = constants.floor_exp4(&rho_q);

    // bilinear radius: rational upper bound of c_log * beta * sqrt(ln n)
    let bil_beta = if beta.is_zero() || n <= 1 || opts.c_log.is_zero() {
        T::zero()
    } else {
        let tol = default_tol::<T>();
        let scaled = opts.c_log.clone() * beta.clone();
        let tau_sq = scaled.clone() * scaled * ln_enclosure::<T>(n as u64, &tol).hi;
        sqrt_upper(&tau_sq, &(beta.clone() * crate::scalar::powi(&T::from_ratio(1, 2), 24)))
    };

    let sym = dist.symmetrize();
    let z_dist = sym.lazy_product(&T::from_ratio(1, 2))?;
    let z_scaled = DiscreteDist::new(
        z_dist
            .atoms()
            .iter()
            .map(|(v, m)| (v.clone() * T::from_int(2), m.clone()))
            .collect(),
    )?;

    let subsets = subset_population(n, &opts.subset_mode)?;
    let sub_opts = CertOptions {
        rho_witness: Some(rho_bil.clone()),
        y_mode: opts.y_mode.clone(),
        budget: opts.budget,
    };
    let results: Vec<(u64, Result<(StructureCertificate, PipelineTrace<T>), InverseError>)> =
        subsets
            .par_iter()
            .map(|&bits| {
                let u = SubsetMask::new(n, bits).expect("bits checked by construction");
                let masked = mask_matrix(a, &u).expect("matrix validated symmetric");
                (bits, bilinear_certificate(&masked, &sym, &bil_beta, fit_params, &sub_opts))
            })
            .collect();

    let mut summaries = Vec::with_capacity(results.len());
    let mut successes: Vec<(u64, StructureCertificate)> = Vec::new();
    for (bits, res) in results {
        match res {
            Ok((cert, _)) => {
                summaries.push(SubsetSummary {
                    bits,
                    outcome: format!("ok: pivots {:?}, k {}", cert.pivot_rows, cert.k),
                    surviving: cert.surviving.len(),
                });
                successes.push((bits, cert));
            }
            Err(e) => {
                summaries.push(SubsetSummary { bits, outcome: format!("err: {e}"), surviving: 0 });
            }
        }
    }
    if successes.is_empty() {
        return Err(InverseError::InsufficientSubsetConsensus);
    }

    // vote the (pivot set, k) pair across masks
    let mut key_votes: BTreeMap<(Vec<usize>, i64), (T, usize)> = BTreeMap::new();
    for (_, cert) in &successes {
        let slot = key_votes
            .entry((cert.pivot_rows.clone(), cert.k))
            .or_insert_with(|| (T::zero(), 0));
        slot.0 = slot.0.clone() + T::one();
        slot.1 += 1;
    }
    let ((pivot_rows, k), _, winner_support) = vote_winner(&key_votes).expect("nonempty votes");
    if winner_support < opts.min_support {
        return Err(InverseError::InsufficientSubsetConsensus);
    }
    let agreeing: Vec<(u64, &StructureCertificate)> = successes
        .iter()
        .filter(|(_, c)| c.pivot_rows == pivot_rows && c.k == k)
        .map(|(bits, c)| (*bits, c))
        .collect();

    // vote the partition: which pivots fall inside the mask
    let inside_of = |bits: u64| -> Vec<usize> {
        pivot_rows.iter().copied().filter(|&p| bits >> p & 1 == 1).collect()
    };
    let mut part_votes: BTreeMap<Vec<usize>, (T, usize)> = BTreeMap::new();
    for &(bits, _) in &agreeing {
        let slot = part_votes.entry(inside_of(bits)).or_insert_with(|| (T::zero(), 0));
        slot.0 = slot.0.clone() + T::one();
        slot.1 += 1;
    }
    let (in_pivots, _, partition_support) = vote_winner(&part_votes).expect("nonempty votes");
    let partitioned: Vec<(u64, &StructureCertificate)> = agreeing
        .iter()
        .filter(|&&(bits, _)| inside_of(bits) == in_pivots)
        .copied()
        .collect();

    let n_pow = (n as i128)
        .checked_pow(fit_params.bound_exponent as u32)
        .ok_or_else(|| InverseError::Overflow("n^C".into()))?;
    let radius =
        beta.clone() * crate::scalar::powi(&T::from_int(n as i64), fit_params.bound_exponent as u32);

    // per-row: vote within each mask side, unmask with the side-aware sign
    // flip, and keep the side whose combination verifies better
    let mut trace = PipelineTrace::<T>::empty();
    let mut row_coeffs = Vec::new();
    let mut surviving = Vec::new();
    for i in 0..n {
        let mut side_candidates: Vec<(String, Vec<i64>, T, usize)> = Vec::new();
        for inside_mask in [false, true] {
            let mut votes: BTreeMap<Vec<i64>, (T, usize)> = BTreeMap::new();
            for &(bits, cert) in &partitioned {
                if (bits >> i & 1 == 1) != inside_mask {
                    continue;
                }
                if let Some(c) = cert.coeffs_for(i) {
                    let slot = votes.entry(c.to_vec()).or_insert_with(|| (T::zero(), 0));
                    slot.0 = slot.0.clone() + T::one();
                    slot.1 += 1;
                }
            }
            if let Some((masked_coeffs, mass, count)) = vote_winner(&votes) {
                // unmasking flips the sign of coefficients whose pivot sits
                // on the opposite side of the mask from row i
                let flipped: Vec<i64> = pivot_rows
                    .iter()
                    .zip(&masked_coeffs)
                    .map(|(&p, &c)| {
                        let pivot_inside = in_pivots.contains(&p);
                        if pivot_inside != inside_mask {
                            -c
                        } else {
                            c
                        }
                    })
                    .collect();
                let side = if inside_mask { "in" } else { "out" };
                side_candidates.push((side.to_string(), flipped, mass, count));
            }
        }
        if side_candidates.is_empty() {
            continue;
        }
        // evaluate both sides exactly and keep the better one
        let mut best: Option<(String, Vec<i64>, T, usize, T, T)> = None;
        for (side, coeffs, mass, count) in side_candidates {
            if coeffs.iter().any(|&c| (c as i128).abs() > n_pow) || k128_abs(k) > n_pow {
                continue;
            }
            let prob = row_probability(a, k, &pivot_rows, &coeffs, i, &z_dist, &radius, opts.budget)?;
            let prob2 =
                row_probability(a, k, &pivot_rows, &coeffs, i, &z_scaled, &radius, opts.budget)?;
            let better = match &best {
                None => true,
                Some((_, _, _, _, bp, _)) => prob > *bp,
            };
            if better {
                best = Some((side, coeffs, mass, count, prob, prob2));
            }
        }
        if let Some((side, coeffs, mass, count, prob, prob2)) = best {
            trace.rows.push(RowTrace {
                row: i,
                coeffs: coeffs.clone(),
                support_mass: mass,
                support_count: count,
                side: Some(side),
                verified_probability: Some(prob),
                verified_probability_scaled: Some(prob2),
            });
            row_coeffs.push(RowCoeffs { row: i, coeffs });
            surviving.push(i);
        } else {
            trace.dropped_rows.push(i);
        }
    }

    let floor = coverage_floor(n, &fit_params.eps);
    if surviving.len() < floor {
        return Err(InverseError::CoverageFloorMissed { surviving: surviving.len(), floor });
    }
    trace.subset_stage = Some(SubsetStage {
        rho_quadratic: rho_q,
        rho_bilinear_floor: rho_bil,
        bilinear_beta: bil_beta,
        total: subsets.len(),
        successes: successes.len(),
        winner_pivots: pivot_rows.clone(),
        winner_k: k,
        winner_support,
        partition_in_pivots: in_pivots,
        partition_support,
        subsets: summaries,
    });
    let cert = StructureCertificate {
        k,
        pivot_rows,
        row_coeffs,
        surviving,
        bound_exponent: fit_params.bound_exponent,
    };
    Ok((cert, trace))
}

fn k128_abs(k: i64) -> i128 {
    (k as i128).abs()
}
