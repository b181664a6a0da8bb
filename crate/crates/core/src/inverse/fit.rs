//! Bounded brute-force GAP fitting.
//!
//! For `beta > 0` the candidate steps have the quantized form
//! `beta * m / p` with integer numerator vectors `|m_j| <= m_max` and a
//! shared denominator `p <= p_max`; this is the shape a linear inverse
//! theorem produces, so a planted instance built from such steps is always
//! inside the search family. At `beta = 0` that family degenerates to the
//! zero gap, so candidate steps are instead derived from the data: the
//! points themselves and their pairwise differences, divided by small
//! integers. Coverage is exact containment in that case.
//!
//! Per candidate step tuple, dimensions are not enumerated: each point gets
//! its best bounded lattice representation (coordinates up to `k_max`), the
//! box then shrinks to the coordinates actually used, unused generators are
//! dropped, and improper or oversized candidates are discarded. The winner
//! maximizes coverage, breaking ties by smaller rank, then smaller volume,
//! then lexicographically smaller steps.

use std::collections::{BTreeMap, BTreeSet};

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::gap::{Gap, GapPoint};
use crate::scalar::{serde_scalar, Scalar};
use crate::vecs;

use super::InverseError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FitParams<T: Scalar> {
    #[serde(with = "serde_scalar")]
    pub beta: T,
    #[serde(default = "default_r_max")]
    pub r_max: usize,
    #[serde(default = "default_p_max")]
    pub p_max: i64,
    #[serde(default = "default_m_max")]
    pub m_max: i64,
    #[serde(default = "default_k_max")]
    pub k_max: i64,
    #[serde(default = "default_size_cap")]
    pub size_cap: u128,
    #[serde(default = "default_n_prime")]
    pub n_prime: usize,
    /// Hypothesis exponent `B` (thresholds of the form `rho >= n^-B`).
    #[serde(with = "serde_scalar", default = "default_b_exp")]
    pub b_exp: T,
    /// Set-size exponent `epsilon` (floors of the form `n - 2 n^epsilon`).
    #[serde(with = "serde_scalar", default = "default_eps")]
    pub eps: T,
    #[serde(default = "default_search_ceiling")]
    pub search_ceiling: u64,
    /// Exponent `C`: emitted radii `beta n^C`, floors `n^-C`.
    #[serde(default = "default_bound_exponent")]
    pub bound_exponent: i32,
}

fn default_r_max() -> usize {
    2
}
fn default_p_max() -> i64 {
    3
}
fn default_m_max() -> i64 {
    12
}
fn default_k_max() -> i64 {
    8
}
fn default_size_cap() -> u128 {
    4096
}
fn default_n_prime() -> usize {
    1
}
fn default_b_exp<T: Scalar>() -> T {
    T::from_int(2)
}
fn default_eps<T: Scalar>() -> T {
    T::from_ratio(3, 10)
}
fn default_search_ceiling() -> u64 {
    10_000_000
}
fn default_bound_exponent() -> i32 {
    3
}

impl<T: Scalar> FitParams<T> {
    pub fn with_beta(beta: T) -> Self {
        FitParams {
            beta,
            r_max: default_r_max(),
            p_max: default_p_max(),
            m_max: default_m_max(),
            k_max: default_k_max(),
            size_cap: default_size_cap(),
            n_prime: default_n_prime(),
            b_exp: default_b_exp(),
            eps: default_eps(),
            search_ceiling: default_search_ceiling(),
            bound_exponent: default_bound_exponent(),
        }
    }

    fn validate(&self) -> Result<(), InverseError> {
        if self.beta.is_negative() {
            return Err(InverseError::Invalid("beta must be non-negative".into()));
        }
        if self.p_max < 1 || self.m_max < 1 || self.k_max < 1 || self.size_cap == 0 {
            return Err(InverseError::Invalid("search bounds must be positive".into()));
        }
        Ok(())
    }
}

/// A fitted GAP: the covered indices and the assigned gap point per index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GapFit<T: Scalar> {
    pub gap: Gap<T>,
    pub covered: Vec<usize>,
    pub assignments: BTreeMap<usize, GapPoint<T>>,
}

/// A candidate evaluation: everything the selection key needs.
struct Candidate<T: Scalar> {
    covered: Vec<usize>,
    assignments: BTreeMap<usize, (T, Vec<i64>)>, // dist^2 and coords
    steps: Vec<Vec<T>>,
    half_widths: Vec<i64>,
    volume: u128,
}

impl<T: Scalar> Candidate<T> {
    fn key(&self) -> (usize, usize, u128, Vec<Vec<T>>) {
        (usize::MAX - self.covered.len(), self.steps.len(), self.volume, self.steps.clone())
    }
}

/// Searches for a proper symmetric GAP covering at least `n - n_prime` of
/// the points within `params.beta`; `None` when nothing reaches the floor.
pub fn fit_gap_linear<T: Scalar>(
    points: &[Vec<T>],
    params: &FitParams<T>,
) -> Result<Option<GapFit<T>>, InverseError> {
    params.validate()?;
    if points.is_empty() {
        return Err(InverseError::Invalid("need at least one point".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(InverseError::Invalid("point dimension mismatch".into()));
    }
    let n = points.len();
    let floor = n.saturating_sub(params.n_prime);

    // every point at the origin: the zero gap covers everything exactly
    if points.iter().all(|p| vecs::is_zero(p)) {
        return Ok(Some(zero_fit(dim, n)));
    }

    let step_pool: Vec<Vec<T>> = if params.beta.is_zero() {
        data_derived_steps(points, params)
    } else {
        quantized_steps(points, params)
    };

    let mut candidate_count: u128 = 1; // the zero gap
    for r in 1..=params.r_max.min(step_pool.len()) {
        candidate_count = candidate_count.saturating_add(binomial(step_pool.len() as u128, r));
    }
    if candidate_count > params.search_ceiling as u128 {
        return Err(InverseError::SearchSpaceExceeded {
            candidates: candidate_count,
            ceiling: params.search_ceiling,
        });
    }

    let mut best: Option<Candidate<T>> = None;
    let mut consider = |cand: Option<Candidate<T>>| {
        if let Some(c) = cand {
            if c.covered.is_empty() {
                return;
            }
            match &best {
                Some(b) if b.key() <= c.key() => {}
                _ => best = Some(c),
            }
        }
    };

    consider(evaluate_candidate(points, &[], params));
    let mut combo = vec![0usize; params.r_max];
    for r in 1..=params.r_max.min(step_pool.len()) {
        combinations(step_pool.len(), r, &mut combo, &mut |idx| {
            let steps: Vec<Vec<T>> = idx.iter().map(|&i| step_pool[i].clone()).collect();
            consider(evaluate_candidate(points, &steps, params));
        });
    }

    let Some(winner) = best else { return Ok(None) };
    if winner.covered.len() < floor {
        return Ok(None);
    }
    let gap = Gap::symmetric(dim, winner.steps.clone(), winner.half_widths.clone())
        .map_err(InverseError::Gap)?;
    let assignments: BTreeMap<usize, GapPoint<T>> = winner
        .assignments
        .iter()
        .map(|(&i, (_, coords))| (i, gap.point(coords.clone())))
        .collect();
    Ok(Some(GapFit { gap, covered: winner.covered, assignments }))
}

fn zero_fit<T: Scalar>(dim: usize, n: usize) -> GapFit<T> {
    let gap = Gap::zero(dim);
    GapFit {
        covered: (0..n).collect(),
        assignments: (0..n).map(|i| (i, gap.point(vec![]))).collect(),
        gap,
    }
}

fn binomial(n: u128, r: usize) -> u128 {
    let mut v: u128 = 1;
    for i in 0..r as u128 {
        v = v.saturating_mul(n.saturating_sub(i)) / (i + 1);
    }
    v
}

/// Visits all strictly increasing index combinations of size r.
fn combinations(n: usize, r: usize, buf: &mut [usize], f: &mut impl FnMut(&[usize])) {
    fn rec(n: usize, r: usize, start: usize, depth: usize, buf: &mut [usize], f: &mut impl FnMut(&[usize])) {
        if depth == r {
            f(&buf[..r]);
            return;
        }
        for i in start..n {
            buf[depth] = i;
            rec(n, r, i + 1, depth + 1, buf, f);
        }
    }
    rec(n, r, 0, 0, buf, f);
}

/// Sign-normalizes so the first nonzero entry is positive.
fn normalize_sign<T: Scalar>(v: &[T]) -> Vec<T> {
    match v.iter().find(|x| !x.is_zero()) {
        Some(first) if first.is_negative() => vecs::neg(v),
        _ => v.to_vec(),
    }
}

/// Candidate steps `beta * m / p`: integer numerator vectors up to `m_max`,
/// shared denominator up to `p_max`, canonical (content coprime to p,
/// leading entry positive).
fn quantized_steps<T: Scalar>(points: &[Vec<T>], params: &FitParams<T>) -> Vec<Vec<T>> {
    let dim = points[0].len();
    let mut pool: BTreeSet<Vec<T>> = BTreeSet::new();
    for p in 1..=params.p_max {
        let scale = params.beta.clone() / T::from_int(p);
        let mut numer = vec![-params.m_max; dim];
        loop {
            let content = numer.iter().fold(0i64, |g, &x| g.gcd(&x));
            if content != 0 && content.gcd(&p) == 1 {
                let step: Vec<T> = numer.iter().map(|&x| T::from_int(x) * scale.clone()).collect();
                pool.insert(normalize_sign(&step));
            }
            let mut i = dim;
            let mut done = true;
            while i > 0 {
                i -= 1;
                if numer[i] < params.m_max {
                    numer[i] += 1;
                    for x in numer.iter_mut().skip(i + 1) {
                        *x = -params.m_max;
                    }
                    done = false;
                    break;
                }
            }
            if done {
                break;
            }
        }
    }
    pool.into_iter().collect()
}

/// Candidate steps for exact fitting: points and pairwise differences
/// divided by small integers.
fn data_derived_steps<T: Scalar>(points: &[Vec<T>], params: &FitParams<T>) -> Vec<Vec<T>> {
    let mut pool: BTreeSet<Vec<T>> = BTreeSet::new();
    let mut push = |v: Vec<T>| {
        if !vecs::is_zero(&v) {
            for t in 1..=params.p_max {
                let scaled = vecs::scale(&v, &T::from_ratio(1, t));
                pool.insert(normalize_sign(&scaled));
            }
        }
    };
    for p in points {
        push(p.clone());
    }
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            push(vecs::sub(&points[i], &points[j]));
        }
    }
    pool.into_iter().collect()
}

/// Evaluates one step tuple: assigns every point its best bounded
/// representation, shrinks the box, drops unused generators, and rejects
/// oversized or improper results.
fn evaluate_candidate<T: Scalar>(
    points: &[Vec<T>],
    steps: &[Vec<T>],
    params: &FitParams<T>,
) -> Option<Candidate<T>> {
    let dim = points[0].len();
    let mut assignments: BTreeMap<usize, (T, Vec<i64>)> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        if let Some((d2, coords)) = closest_bounded(p, steps, params) {
            assignments.insert(i, (d2, coords));
        }
    }
    if assignments.is_empty() {
        return None;
    }
    // shrink to the used box and drop generators nobody uses
    let r = steps.len();
    let mut used = vec![0i64; r];
    for (_, coords) in assignments.values() {
        for (u, &c) in used.iter_mut().zip(coords) {
            *u = (*u).max(c.abs());
        }
    }
    let keep: Vec<usize> = (0..r).filter(|&j| used[j] > 0).collect();
    let kept_steps: Vec<Vec<T>> = keep.iter().map(|&j| steps[j].clone()).collect();
    let half: Vec<i64> = keep.iter().map(|&j| used[j]).collect();
    let assignments: BTreeMap<usize, (T, Vec<i64>)> = assignments
        .into_iter()
        .map(|(i, (d2, coords))| (i, (d2, keep.iter().map(|&j| coords[j]).collect())))
        .collect();
    let mut volume: u128 = 1;
    for &k in &half {
        volume = volume.saturating_mul(2 * k as u128 + 1);
    }
    if volume > params.size_cap {
        return None;
    }
    if !candidate_is_proper(dim, &kept_steps, &half, params.size_cap) {
        return None;
    }
    Some(Candidate {
        covered: assignments.keys().copied().collect(),
        assignments,
        steps: kept_steps,
        half_widths: half,
        volume,
    })
}

fn candidate_is_proper<T: Scalar>(
    dim: usize,
    steps: &[Vec<T>],
    half: &[i64],
    cap: u128,
) -> bool {
    match steps.len() {
        0 | 1 => true, // nonzero single generator is injective on a box
        2 if dim == 1 => {
            // collision iff d1 g1 = -d2 g2 for some 0 < |d_i| <= 2 K_i;
            // the minimal relation decides it
            if let (Some((n1, d1)), Some((n2, d2))) = (steps[0][0].int_pair(), steps[1][0].int_pair())
            {
                let a1 = n1.checked_mul(d2);
                let a2 = n2.checked_mul(d1);
                if let (Some(a1), Some(a2)) = (a1, a2) {
                    let g = a1.gcd(&a2);
                    if g != 0 {
                        let m1 = (a2 / g).abs();
                        let m2 = (a1 / g).abs();
                        return !(m1 <= 2 * half[0] as i128 && m2 <= 2 * half[1] as i128);
                    }
                }
            }
            fallback_proper(dim, steps, half, cap)
        }
        _ => fallback_proper(dim, steps, half, cap),
    }
}

fn fallback_proper<T: Scalar>(dim: usize, steps: &[Vec<T>], half: &[i64], cap: u128) -> bool {
    match Gap::symmetric(dim, steps.to_vec(), half.to_vec()) {
        Ok(g) => g.is_proper(cap).unwrap_or(false),
        Err(_) => false,
    }
}

/// Best representation of `p` as `sum l_j steps_j` with `|l_j| <= k_max`
/// and distance at most beta: minimal squared distance, ties by
/// lexicographically smallest coordinates.
fn closest_bounded<T: Scalar>(
    p: &[T],
    steps: &[Vec<T>],
    params: &FitParams<T>,
) -> Option<(T, Vec<i64>)> {
    let beta_sq = params.beta.clone() * params.beta.clone();
    match steps.len() {
        0 => {
            let d2 = vecs::norm_sq(p);
            (d2 <= beta_sq).then_some((d2, vec![]))
        }
        1 if p.len() == 1 => closest_rank1_1d(p, &steps[0], params, &beta_sq),
        2 if p.len() == 1 => closest_rank2_1d(p, steps, params, &beta_sq)
            .unwrap_or_else(|| closest_by_enumeration(p, steps, params, &beta_sq)),
        _ => closest_by_enumeration(p, steps, params, &beta_sq),
    }
}

fn div_floor_i(a: i128, b: i128) -> i128 {
    debug_assert!(b != 0);
    let (a, b) = if b < 0 { (-a, -b) } else { (a, b) };
    a.div_euclid(b)
}

fn div_ceil_i(a: i128, b: i128) -> i128 {
    -div_floor_i(-a, b)
}

fn closest_rank1_1d<T: Scalar>(
    p: &[T],
    step: &[T],
    params: &FitParams<T>,
    beta_sq: &T,
) -> Option<(T, Vec<i64>)> {
    let ratio = p[0].clone() / step[0].clone();
    let (num, den) = ratio.int_pair()?;
    let lo = div_floor_i(num, den);
    let mut best: Option<(T, Vec<i64>)> = None;
    for cand in [lo, lo + 1] {
        let l = cand.clamp(-params.k_max as i128, params.k_max as i128) as i64;
        let value = vecs::scale(step, &T::from_int(l));
        let d2 = vecs::dist_sq(p, &value);
        if d2 <= *beta_sq {
            match &best {
                Some((bd, bc)) if *bd < d2 || (*bd == d2 && bc <= &vec![l]) => {}
                _ => best = Some((d2, vec![l])),
            }
        }
    }
    best
}

/// Rank-2 one-dimensional bounded lattice solve: walk the multiples of the
/// generated lattice outward from the target and test bounded
/// representability via the extended gcd line of solutions. Returns `None`
/// to request the enumeration fallback when integer extraction fails or
/// too many multiples are within reach.
fn closest_rank2_1d<T: Scalar>(
    p: &[T],
    steps: &[Vec<T>],
    params: &FitParams<T>,
    beta_sq: &T,
) -> Option<Option<(T, Vec<i64>)>> {
    let (n1, d1) = steps[0][0].int_pair()?;
    let (n2, d2) = steps[1][0].int_pair()?;
    // common denominator b: steps are a1/b and a2/b
    let b = d1.checked_mul(d2)?;
    let a1 = n1.checked_mul(d2)?;
    let a2 = n2.checked_mul(d1)?;
    let g = a1.gcd(&a2); // lattice = (g/b) Z
    let a1p = a1 / g;
    let a2p = a2 / g;
    let lattice_step = T::from_ratio_i128(g, b)?;
    let ratio = p[0].clone() / lattice_step.clone();
    let (rn, rd) = ratio.int_pair()?;
    let m0 = div_floor_i(rn, rd);
    let k = params.k_max as i128;
    let (_, x, y) = ext_gcd(a1p, a2p);
    let mut best: Option<(T, Vec<i64>)> = None;
    let mut tries = 0;
    // candidates m0, m0+1, m0-1, m0+2, ... ordered by distance
    for offset in 0..128i128 {
        for m in [m0 + offset, m0 - 1 - offset] {
            tries += 1;
            if tries > 256 {
                return None; // fall back to enumeration
            }
            let value = lattice_step.clone() * T::from_int(i64::try_from(m).ok()?);
            let d2v = vecs::dist_sq(p, &[value]);
            if d2v > *beta_sq {
                continue;
            }
            if let Some((bd, _)) = &best {
                if d2v > *bd {
                    continue;
                }
            }
            // solutions: (x m + t a2p, y m - t a1p), both within [-k, k]
            let l1_0 = x.checked_mul(m)?;
            let l2_0 = y.checked_mul(m)?;
            let (lo1, hi1) = sym_interval(l1_0, a2p, k);
            let (lo2, hi2) = sym_interval(l2_0, -a1p, k);
            let lo = lo1.max(lo2);
            let hi = hi1.min(hi2);
            if lo > hi {
                continue;
            }
            // lexicographically smallest (l1, l2): l1 = l1_0 + t a2p is
            // monotone in t, so pick the end minimizing it
            let t = if a2p > 0 { lo } else { hi };
            let l1 = l1_0 + t * a2p;
            let l2 = l2_0 - t * a1p;
            let coords = vec![i64::try_from(l1).ok()?, i64::try_from(l2).ok()?];
            match &best {
                Some((bd, bc)) if *bd < d2v || (*bd == d2v && bc <= &coords) => {}
                _ => best = Some((d2v, coords)),
            }
        }
        // both directions out of radius: stop early
        let right = lattice_step.clone() * T::from_int(i64::try_from(m0 + offset + 1).ok()?);
        let left = lattice_step.clone() * T::from_int(i64::try_from(m0 - 2 - offset).ok()?);
        if vecs::dist_sq(p, &[right]) > *beta_sq && vecs::dist_sq(p, &[left]) > *beta_sq {
            break;
        }
    }
    Some(best)
}

/// `|base + t * coef| <= bound` solved for integer t (coef != 0).
fn sym_interval(base: i128, coef: i128, bound: i128) -> (i128, i128) {
    debug_assert!(coef != 0);
    if coef > 0 {
        (div_ceil_i(-bound - base, coef), div_floor_i(bound - base, coef))
    } else {
        (div_ceil_i(bound - base, coef), div_floor_i(-bound - base, coef))
    }
}

fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        if a >= 0 {
            (a, 1, 0)
        } else {
            (-a, -1, 0)
        }
    } else {
        let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
        (g, y, x - a.div_euclid(b) * y)
    }
}

fn closest_by_enumeration<T: Scalar>(
    p: &[T],
    steps: &[Vec<T>],
    params: &FitParams<T>,
    beta_sq: &T,
) -> Option<(T, Vec<i64>)> {
    let r = steps.len();
    let mut best: Option<(T, Vec<i64>)> = None;
    let mut coords = vec![-params.k_max; r];
    loop {
        let mut value = vecs::zero(p.len());
        for (s, &c) in steps.iter().zip(&coords) {
            vecs::add_scaled(&mut value, s, &T::from_int(c));
        }
        let d2 = vecs::dist_sq(p, &value);
        if d2 <= *beta_sq {
            match &best {
                Some((bd, bc)) if *bd < d2 || (*bd == d2 && bc <= &coords) => {}
                _ => best = Some((d2, coords.clone())),
            }
        }
        let mut i = r;
        let mut done = true;
        while i > 0 {
            i -= 1;
            if coords[i] < params.k_max {
                coords[i] += 1;
                for c in coords.iter_mut().skip(i + 1) {
                    *c = -params.k_max;
                }
                done = false;
                break;
            }
        }
        if done {
            return best;
        }
    }
}

trait FromRatioI128: Sized {
    fn from_ratio_i128(num: i128, den: i128) -> Option<Self>;
}

impl<T: Scalar> FromRatioI128 for T {
    fn from_ratio_i128(num: i128, den: i128) -> Option<Self> {
        let n = i64::try_from(num).ok()?;
        let d = i64::try_from(den).ok()?;
        Some(T::from_ratio(n, d))
    }
}
