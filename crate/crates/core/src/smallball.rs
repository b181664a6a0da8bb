//! Small-ball probabilities of linear, bilinear, and quadratic forms in iid
//! discrete variables.
//!
//! Exact engines enumerate the outcome space and aggregate the form's value
//! distribution as exact rationals; the supremum over centers is computed by
//! a sliding window over sorted atoms in dimension one and bracketed by
//! atom-centered balls in higher dimension (any radius-beta ball contains an
//! atom, and that atom's 2 beta ball covers it, so the bracket is honest).
//! A seeded Monte-Carlo engine covers instances past the enumeration budget.
//!
//! Linear forms aggregate by convolving one coefficient at a time, so the
//! working map holds partial-sum atoms rather than raw outcomes; this is
//! what lets `n` grow past 20 while the support of the sum stays small.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::randvar::DiscreteDist;
use crate::scalar::{serde_scalar, serde_scalar_cube, serde_scalar_mat, Scalar};
use crate::vecs;

#[derive(Debug, Clone, PartialEq)]
pub enum SmallBallError {
    BudgetExceeded { needed: u128, budget: u64 },
    EmptyCenterGrid,
    Mismatch(String),
}

impl fmt::Display for SmallBallError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmallBallError::BudgetExceeded { needed, budget } => {
                write!(f, "enumeration needs {needed} outcomes, budget is {budget}")
            }
            SmallBallError::EmptyCenterGrid => write!(f, "sup mode needs a candidate center grid"),
            SmallBallError::Mismatch(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for SmallBallError {}

/// Length-n list of coefficient vectors in Q^d.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CoeffVector<T: Scalar> {
    pub dim: usize,
    #[serde(with = "serde_scalar_mat")]
    pub entries: Vec<Vec<T>>,
}

impl<T: Scalar> CoeffVector<T> {
    pub fn new(dim: usize, entries: Vec<Vec<T>>) -> Result<Self, SmallBallError> {
        if entries.iter().any(|e| e.len() != dim) {
            return Err(SmallBallError::Mismatch("entry dimension mismatch".into()));
        }
        Ok(CoeffVector { dim, entries })
    }

    pub fn zeros(dim: usize, n: usize) -> Self {
        CoeffVector { dim, entries: vec![vecs::zero(dim); n] }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// n-by-n array of coefficient vectors in Q^d.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CoeffMatrix<T: Scalar> {
    pub dim: usize,
    #[serde(with = "serde_scalar_cube")]
    pub entries: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> CoeffMatrix<T> {
    pub fn new(dim: usize, entries: Vec<Vec<Vec<T>>>) -> Result<Self, SmallBallError> {
        let n = entries.len();
        if entries.iter().any(|row| row.len() != n) {
            return Err(SmallBallError::Mismatch("matrix is not square".into()));
        }
        if entries.iter().flatten().any(|e| e.len() != dim) {
            return Err(SmallBallError::Mismatch("entry dimension mismatch".into()));
        }
        Ok(CoeffMatrix { dim, entries })
    }

    pub fn zeros(dim: usize, n: usize) -> Self {
        CoeffMatrix { dim, entries: vec![vec![vecs::zero(dim); n]; n] }
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (i + 1..n).all(|j| self.entries[i][j] == self.entries[j][i]))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().flatten().all(|e| vecs::is_zero(e))
    }

    pub fn row(&self, i: usize) -> &[Vec<T>] {
        &self.entries[i]
    }

    /// `row_i . y = sum_j a_ij y_j` for every row.
    pub fn project_rows(&self, y: &[T]) -> Vec<Vec<T>> {
        self.entries
            .iter()
            .map(|row| {
                let mut acc = vecs::zero(self.dim);
                for (a, yj) in row.iter().zip(y) {
                    vecs::add_scaled(&mut acc, a, yj);
                }
                acc
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CenterMode<T> {
    SupOverCenter,
    FixedCenter(Vec<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", tag = "kind", rename_all = "snake_case")]
pub enum EstimateKind<T: Scalar> {
    Exact {
        #[serde(with = "serde_scalar")]
        value: T,
    },
    ExactBracket {
        #[serde(with = "serde_scalar")]
        lower: T,
        #[serde(with = "serde_scalar")]
        upper: T,
    },
    MonteCarlo {
        value: f64,
        ci_low: f64,
        ci_high: f64,
        samples: u64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SmallBallEstimate<T: Scalar> {
    #[serde(with = "serde_scalar")]
    pub beta: T,
    #[serde(flatten)]
    pub kind: EstimateKind<T>,
}

impl<T: Scalar> SmallBallEstimate<T> {
    /// A certified lower bound on the estimated probability (exact kinds).
    pub fn lower_bound(&self) -> Option<T> {
        match &self.kind {
            EstimateKind::Exact { value } => Some(value.clone()),
            EstimateKind::ExactBracket { lower, .. } => Some(lower.clone()),
            EstimateKind::MonteCarlo { .. } => None,
        }
    }

    pub fn exact_value(&self) -> Option<T> {
        match &self.kind {
            EstimateKind::Exact { value } => Some(value.clone()),
            _ => None,
        }
    }
}

/// Exact result plus the center achieving it when one is known.
#[derive(Debug, Clone)]
pub struct RhoExact<T: Scalar> {
    pub estimate: SmallBallEstimate<T>,
    pub best_center: Option<Vec<T>>,
}

/// Visits every outcome tuple in mixed-radix order (last index fastest).
pub(crate) fn for_each_outcome(n: usize, radix: usize, mut f: impl FnMut(&[usize])) {
    debug_assert!(radix > 0);
    let mut digits = vec![0usize; n];
    loop {
        f(&digits);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if digits[i] + 1 < radix {
                digits[i] += 1;
                for d in digits.iter_mut().skip(i + 1) {
                    *d = 0;
                }
                break;
            }
        }
    }
}

pub(crate) fn pow_u128(base: u64, exp: u32) -> u128 {
    let mut v: u128 = 1;
    for _ in 0..exp {
        v = v.saturating_mul(base as u128);
    }
    v
}

/// Exact distribution of `sum_i a_i x_i` as sorted (value, mass) atoms,
/// computed by convolving one coefficient at a time.
pub fn linear_form_atoms<T: Scalar>(
    coeffs: &[Vec<T>],
    dist: &DiscreteDist<T>,
    budget: u64,
) -> Result<Vec<(Vec<T>, T)>, SmallBallError> {
    let n = coeffs.len();
    let s = dist.support_size() as u64;
    let half = pow_u128(s, n.div_ceil(2) as u32);
    if half > budget as u128 {
        return Err(SmallBallError::BudgetExceeded { needed: half, budget });
    }
    let dim = coeffs.first().map_or(1, |c| c.len());
    let mut acc: BTreeMap<Vec<T>, T> = BTreeMap::new();
    acc.insert(vecs::zero(dim), T::one());
    for a in coeffs {
        let mut next: BTreeMap<Vec<T>, T> = BTreeMap::new();
        for (v, m) in &acc {
            for (x, mx) in dist.atoms() {
                let mut key = v.clone();
                vecs::add_scaled(&mut key, a, x);
                let slot = next.entry(key).or_insert_with(T::zero);
                *slot = slot.clone() + m.clone() * mx.clone();
            }
        }
        if next.len() as u128 > budget as u128 {
            return Err(SmallBallError::BudgetExceeded { needed: next.len() as u128, budget });
        }
        acc = next;
    }
    Ok(acc.into_iter().collect())
}

/// Exact distribution of `sum_ij a_ij x_i x_j + sum_i b_i x_i`.
pub fn quadratic_form_atoms<T: Scalar>(
    a: &CoeffMatrix<T>,
    b: &CoeffVector<T>,
    dist: &DiscreteDist<T>,
    budget: u64,
) -> Result<Vec<(Vec<T>, T)>, SmallBallError> {
    let n = a.n();
    if b.len() != n || b.dim != a.dim {
        return Err(SmallBallError::Mismatch("linear part shape mismatch".into()));
    }
    let s = dist.support_size() as u64;
    let outcomes = pow_u128(s, n as u32);
    if outcomes > budget as u128 {
        return Err(SmallBallError::BudgetExceeded { needed: outcomes, budget });
    }
    let atoms = dist.atoms();
    let mut acc: BTreeMap<Vec<T>, T> = BTreeMap::new();
    for_each_outcome(n, atoms.len(), |digits| {
        let mut value = vecs::zero(a.dim);
        for i in 0..n {
            let xi = &atoms[digits[i]].0;
            // x_i * (row_i . x) plus the linear term
            let mut row_dot = vecs::zero(a.dim);
            for j in 0..n {
                vecs::add_scaled(&mut row_dot, &a.entries[i][j], &atoms[digits[j]].0);
            }
            vecs::add_scaled(&mut value, &row_dot, xi);
            vecs::add_scaled(&mut value, &b.entries[i], xi);
        }
        let mass = digits.iter().fold(T::one(), |m, &d| m * atoms[d].1.clone());
        let slot = acc.entry(value).or_insert_with(T::zero);
        *slot = slot.clone() + mass;
    });
    Ok(acc.into_iter().collect())
}

/// Exact distribution of `sum_ij a_ij x_i y_j` over the (x, y) product space.
pub fn bilinear_form_atoms<T: Scalar>(
    a: &CoeffMatrix<T>,
    dist: &DiscreteDist<T>,
    budget: u64,
) -> Result<Vec<(Vec<T>, T)>, SmallBallError> {
    let n = a.n();
    let s = dist.support_size() as u64;
    let outcomes = pow_u128(s, 2 * n as u32);
    if outcomes > budget as u128 {
        return Err(SmallBallError::BudgetExceeded { needed: outcomes, budget });
    }
    let atoms = dist.atoms();
    let mut acc: BTreeMap<Vec<T>, T> = BTreeMap::new();
    for_each_outcome(n, atoms.len(), |ydigits| {
        let y: Vec<T> = ydigits.iter().map(|&d| atoms[d].0.clone()).collect();
        let ymass = ydigits.iter().fold(T::one(), |m, &d| m * atoms[d].1.clone());
        let proj = a.project_rows(&y);
        for_each_outcome(n, atoms.len(), |xdigits| {
            let mut value = vecs::zero(a.dim);
            for (i, &d) in xdigits.iter().enumerate() {
                vecs::add_scaled(&mut value, &proj[i], &atoms[d].0);
            }
            let mass = xdigits.iter().fold(ymass.clone(), |m, &d| m * atoms[d].1.clone());
            let slot = acc.entry(value).or_insert_with(T::zero);
            *slot = slot.clone() + mass;
        });
    });
    Ok(acc.into_iter().collect())
}

/// Distribution of the squared norm of a bilinear form; smaller than the
/// full value distribution and enough for threshold probabilities.
pub fn bilinear_norm_sq_atoms<T: Scalar>(
    a: &CoeffMatrix<T>,
    dist: &DiscreteDist<T>,
    budget: u64,
) -> Result<Vec<(T, T)>, SmallBallError> {
    let atoms = bilinear_form_atoms(a, dist, budget)?;
    let mut acc: BTreeMap<T, T> = BTreeMap::new();
    for (v, m) in atoms {
        let slot = acc.entry(vecs::norm_sq(&v)).or_insert_with(T::zero);
        *slot = slot.clone() + m;
    }
    Ok(acc.into_iter().collect())
}

/// Mass of the closed ball of radius `beta` around `center`.
pub fn ball_mass<T: Scalar>(atoms: &[(Vec<T>, T)], center: &[T], beta: &T) -> T {
    let r2 = beta.clone() * beta.clone();
    let mut total = T::zero();
    for (v, m) in atoms {
        if vecs::dist_sq(v, center) <= r2 {
            total = total + m.clone();
        }
    }
    total
}

/// Optimal closed window of width 2 beta over sorted 1-d atoms; returns the
/// maximal mass and the midpoint of the first window achieving it.
fn sup_window_1d<T: Scalar>(atoms: &[(Vec<T>, T)], beta: &T) -> (T, Vec<T>) {
    debug_assert!(!atoms.is_empty());
    let two_beta = beta.clone() + beta.clone();
    let half = T::from_ratio(1, 2);
    let mut best = T::zero();
    let mut best_center = atoms[0].0.clone();
    let mut running = T::zero();
    let mut j = 0;
    for i in 0..atoms.len() {
        while j < atoms.len() && atoms[j].0[0].clone() - atoms[i].0[0].clone() <= two_beta {
            running = running + atoms[j].1.clone();
            j += 1;
        }
        if running > best {
            best = running.clone();
            best_center =
                vec![(atoms[i].0[0].clone() + atoms[j - 1].0[0].clone()) * half.clone()];
        }
        running = running - atoms[i].1.clone();
    }
    (best, best_center)
}

/// Turns an exact atom distribution into a small-ball estimate for the given
/// center handling.
pub fn rho_from_atoms<T: Scalar>(
    atoms: &[(Vec<T>, T)],
    dim: usize,
    beta: &T,
    center: &CenterMode<T>,
) -> Result<RhoExact<T>, SmallBallError> {
    if beta.is_negative() {
        return Err(SmallBallError::Mismatch("negative radius".into()));
    }
    match center {
        CenterMode::FixedCenter(c) => {
            if c.len() != dim {
                return Err(SmallBallError::Mismatch("center dimension mismatch".into()));
            }
            let value = ball_mass(atoms, c, beta);
            Ok(RhoExact {
                estimate: SmallBallEstimate {
                    beta: beta.clone(),
                    kind: EstimateKind::Exact { value },
                },
                best_center: Some(c.clone()),
            })
        }
        CenterMode::SupOverCenter => {
            if dim == 1 {
                let (value, center) = sup_window_1d(atoms, beta);
                Ok(RhoExact {
                    estimate: SmallBallEstimate {
                        beta: beta.clone(),
                        kind: EstimateKind::Exact { value },
                    },
                    best_center: Some(center),
                })
            } else {
                // bracket: best atom-centered beta ball from below, best
                // atom-centered 2 beta ball from above
                let mut lower = T::zero();
                let mut upper = T::zero();
                let mut best_center = atoms[0].0.clone();
                let double = beta.clone() + beta.clone();
                for (v, _) in atoms {
                    let lo = ball_mass(atoms, v, beta);
                    if lo > lower {
                        lower = lo;
                        best_center = v.clone();
                    }
                    let hi = ball_mass(atoms, v, &double);
                    if hi > upper {
                        upper = hi;
                    }
                }
                let kind = if lower == upper {
                    EstimateKind::Exact { value: lower }
                } else {
                    EstimateKind::ExactBracket { lower, upper }
                };
                Ok(RhoExact {
                    estimate: SmallBallEstimate { beta: beta.clone(), kind },
                    best_center: Some(best_center),
                })
            }
        }
    }
}

pub fn rho_linear_exact<T: Scalar>(
    coeffs: &CoeffVector<T>,
    dist: &DiscreteDist<T>,
    beta: &T,
    center: &CenterMode<T>,
    budget: u64,
) -> Result<RhoExact<T>, SmallBallError> {
    let atoms = linear_form_atoms(&coeffs.entries, dist, budget)?;
    rho_from_atoms(&atoms, coeffs.dim, beta, center)
}

/// Quadratic small-ball probability for a *given* linear witness `b`; the
/// supremum in the definition ranges over an infinite family, so callers
/// certify lower bounds by exhibiting a witness.
pub fn rho_quadratic_exact<T: Scalar>(
    a: &CoeffMatrix<T>,
    b: &CoeffVector<T>,
    dist: &DiscreteDist<T>,
    beta: &T,
    center: &CenterMode<T>,
    budget: u64,
) -> Result<RhoExact<T>, SmallBallError> {
    let atoms = quadratic_form_atoms(a, b, dist, budget)?;
    rho_from_atoms(&atoms, a.dim, beta, center)
}

pub fn rho_bilinear_exact<T: Scalar>(
    a: &CoeffMatrix<T>,
    dist: &DiscreteDist<T>,
    beta: &T,
    center: &CenterMode<T>,
    budget: u64,
) -> Result<RhoExact<T>, SmallBallError> {
    let atoms = bilinear_form_atoms(a, dist, budget)?;
    rho_from_atoms(&atoms, a.dim, beta, center)
}

/// The form a Monte-Carlo run samples.
pub enum McForm<'a, T: Scalar> {
    Linear(&'a CoeffVector<T>),
    Bilinear(&'a CoeffMatrix<T>),
    Quadratic(&'a CoeffMatrix<T>, &'a CoeffVector<T>),
}

impl<T: Scalar> McForm<'_, T> {
    fn dim(&self) -> usize {
        match self {
            McForm::Linear(c) => c.dim,
            McForm::Bilinear(a) => a.dim,
            McForm::Quadratic(a, _) => a.dim,
        }
    }

    fn n(&self) -> usize {
        match self {
            McForm::Linear(c) => c.len(),
            McForm::Bilinear(a) => a.n(),
            McForm::Quadratic(a, _) => a.n(),
        }
    }

    fn eval(&self, x: &[T], y: &[T]) -> Vec<T> {
        match self {
            McForm::Linear(c) => {
                let mut v = vecs::zero(c.dim);
                for (a, xi) in c.entries.iter().zip(x) {
                    vecs::add_scaled(&mut v, a, xi);
                }
                v
            }
            McForm::Bilinear(a) => {
                let proj = a.project_rows(y);
                let mut v = vecs::zero(a.dim);
                for (p, xi) in proj.iter().zip(x) {
                    vecs::add_scaled(&mut v, p, xi);
                }
                v
            }
            McForm::Quadratic(a, b) => {
                let proj = a.project_rows(x);
                let mut v = vecs::zero(a.dim);
                for i in 0..a.n() {
                    vecs::add_scaled(&mut v, &proj[i], &x[i]);
                    vecs::add_scaled(&mut v, &b.entries[i], &x[i]);
                }
                v
            }
        }
    }
}

const MC_STREAMS: u64 = 64;

/// Seeded Monte-Carlo estimate. Sampling splits into 64 fixed ChaCha
/// sub-streams (stream id = index + 1), so the result depends only on
/// `(seed, samples)`, never on thread count. `sup` mode maximizes the
/// empirical frequency over the supplied candidate centers and is a
/// lower-bound estimate of the true supremum.
pub fn rho_monte_carlo<T: Scalar>(
    form: &McForm<'_, T>,
    dist: &DiscreteDist<T>,
    beta: &T,
    center: &CenterMode<T>,
    center_grid: Option<&[Vec<T>]>,
    samples: u64,
    seed: u64,
) -> Result<SmallBallEstimate<T>, SmallBallError> {
    if samples == 0 {
        return Err(SmallBallError::Mismatch("need at least one sample".into()));
    }
    let centers: Vec<Vec<T>> = match center {
        CenterMode::FixedCenter(c) => {
            if c.len() != form.dim() {
                return Err(SmallBallError::Mismatch("center dimension mismatch".into()));
            }
            vec![c.clone()]
        }
        CenterMode::SupOverCenter => match center_grid {
            Some(g) if !g.is_empty() => g.to_vec(),
            _ => return Err(SmallBallError::EmptyCenterGrid),
        },
    };
    let cumulative: Vec<f64> = {
        let mut acc = 0.0;
        dist.atoms()
            .iter()
            .map(|(_, m)| {
                acc += m.approx_f64();
                acc
            })
            .collect()
    };
    let n = form.n();
    let needs_y = matches!(form, McForm::Bilinear(_));
    let r2 = beta.clone() * beta.clone();
    let per_stream: Vec<u64> = (0..MC_STREAMS)
        .map(|k| samples / MC_STREAMS + u64::from(k < samples % MC_STREAMS))
        .collect();
    let counts: Vec<Vec<u64>> = per_stream
        .par_iter()
        .enumerate()
        .map(|(k, &count)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            let mut hits = vec![0u64; centers.len()];
            let sample_vec = |rng: &mut ChaCha8Rng| -> Vec<T> {
                (0..n)
                    .map(|_| {
                        let u: f64 = rng.gen();
                        let idx = cumulative
                            .iter()
                            .position(|&c| u < c)
                            .unwrap_or(cumulative.len() - 1);
                        dist.atoms()[idx].0.clone()
                    })
                    .collect()
            };
            for _ in 0..count {
                let x = sample_vec(&mut rng);
                let y = if needs_y { sample_vec(&mut rng) } else { Vec::new() };
                let v = form.eval(&x, &y);
                for (ci, c) in centers.iter().enumerate() {
                    if vecs::dist_sq(&v, c) <= r2 {
                        hits[ci] += 1;
                    }
                }
            }
            hits
        })
        .collect();
    let mut totals = vec![0u64; centers.len()];
    for h in counts {
        for (t, c) in totals.iter_mut().zip(h) {
            *t += c;
        }
    }
    let best = totals.into_iter().max().unwrap();
    let (value, ci_low, ci_high) = wilson_interval(best, samples);
    Ok(SmallBallEstimate {
        beta: beta.clone(),
        kind: EstimateKind::MonteCarlo { value, ci_low, ci_high, samples, seed },
    })
}

/// Two-sided 95% Wilson score interval. Degenerate counts (all hits or none)
/// report a zero-width interval: the sampled value never varied.
fn wilson_interval(hits: u64, samples: u64) -> (f64, f64, f64) {
    let n = samples as f64;
    let p = hits as f64 / n;
    if hits == 0 || hits == samples {
        return (p, p, p);
    }
    let z = 1.959_963_984_540_054_f64;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    (p, (center - half).max(0.0), (center + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Q;
    use num_traits::{One, Zero};

    const BUDGET: u64 = 1 << 22;

    fn q(n: i64, d: i64) -> Q {
        Q::from_ratio(n, d)
    }

    fn ones(n: usize) -> CoeffVector<Q> {
        CoeffVector::new(1, vec![vec![Q::one()]; n]).unwrap()
    }

    fn bernoulli() -> DiscreteDist<Q> {
        DiscreteDist::bernoulli()
    }

    #[test]
    fn linear_three_ones_sup() {
        let r = rho_linear_exact(&ones(3), &bernoulli(), &q(1, 2), &CenterMode::SupOverCenter, BUDGET)
            .unwrap();
        assert_eq!(r.estimate.exact_value().unwrap(), q(3, 8));
    }

    #[test]
    fn linear_all_zero_coefficients() {
        let zeros = CoeffVector::zeros(1, 5);
        let r = rho_linear_exact(&zeros, &bernoulli(), &q(0, 1), &CenterMode::SupOverCenter, BUDGET)
            .unwrap();
        assert_eq!(r.estimate.exact_value().unwrap(), Q::one());
    }

    #[test]
    fn linear_ten_ones_gives_central_binomial() {
        let r = rho_linear_exact(&ones(10), &bernoulli(), &q(1, 2), &CenterMode::SupOverCenter, BUDGET)
            .unwrap();
        assert_eq!(r.estimate.exact_value().unwrap(), q(252, 1024));
        assert_eq!(r.best_center, Some(vec![q(0, 1)]));
    }

    #[test]
    fn linear_atoms_match_brute_force_oracle() {
        // independent oracle: enumerate all sign vectors directly
        let coeffs =
            CoeffVector::new(1, vec![vec![q(1, 2)], vec![q(3, 1)], vec![q(-5, 4)], vec![q(1, 2)]])
                .unwrap();
        let atoms = linear_form_atoms(&coeffs.entries, &bernoulli(), BUDGET).unwrap();
        let mut oracle: BTreeMap<Q, Q> = BTreeMap::new();
        let n = coeffs.len();
        for bits in 0..(1u32 << n) {
            let mut v = Q::zero();
            for i in 0..n {
                let sign = if bits >> i & 1 == 1 { Q::one() } else { -Q::one() };
                v = v + sign * coeffs.entries[i][0].clone();
            }
            let slot = oracle.entry(v).or_insert_with(Q::zero);
            *slot = slot.clone() + q(1, 1 << n);
        }
        let got: BTreeMap<Q, Q> = atoms.into_iter().map(|(v, m)| (v[0].clone(), m)).collect();
        assert_eq!(got, oracle);
    }

    #[test]
    fn quadratic_two_by_two_off_diagonal() {
        let mut a = CoeffMatrix::zeros(1, 2);
        a.entries[0][1] = vec![Q::one()];
        a.entries[1][0] = vec![Q::one()];
        let b = CoeffVector::zeros(1, 2);
        let r = rho_quadratic_exact(&a, &b, &bernoulli(), &q(0, 1), &CenterMode::SupOverCenter, BUDGET)
            .unwrap();
        assert_eq!(r.estimate.exact_value().unwrap(), q(1, 2));

        let zero = rho_quadratic_exact(
            &CoeffMatrix::zeros(1, 3),
            &CoeffVector::zeros(1, 3),
            &bernoulli(),
            &q(0, 1),
            &CenterMode::SupOverCenter,
            BUDGET,
        )
        .unwrap();
        assert_eq!(zero.estimate.exact_value().unwrap(), Q::one());
    }

    #[test]
    fn bilinear_examples() {
        let mut a = CoeffMatrix::zeros(1, 1);
        a.entries[0][0] = vec![Q::one()];
        let r = rho_bilinear_exact(&a, &bernoulli(), &q(0, 1), &CenterMode::SupOverCenter, BUDGET)
            .unwrap();
        assert_eq!(r.estimate.exact_value().unwrap(), q(1, 2));

        let zero = rho_bilinear_exact(
            &CoeffMatrix::zeros(1, 2),
            &bernoulli(),
            &q(0, 1),
            &CenterMode::SupOverCenter,
            BUDGET,
        )
        .unwrap();
        assert_eq!(zero.estimate.exact_value().unwrap(), Q::one());
    }

    #[test]
    fn bilinear_all_ones_matches_16_outcome_oracle() {
        // oracle: direct enumeration of (x1, x2, y1, y2) in {-1, 1}^4
        let mut hits = 0u32;
        for bits in 0..16u32 {
            let sgn = |k: u32| if bits >> k & 1 == 1 { 1i64 } else { -1 };
            let v = (sgn(0) + sgn(1)) * (sgn(2) + sgn(3));
            if v == 0 {
                hits += 1;
            }
        }
        let expected = q(hits as i64, 16);

        let mut a = CoeffMatrix::zeros(1, 2);
        for i in 0..2 {
            for j in 0..2 {
                a.entries[i][j] = vec![Q::one()];
            }
        }
        let r = rho_bilinear_exact(&a, &bernoulli(), &q(0, 1), &CenterMode::SupOverCenter, BUDGET)
            .unwrap();
        assert_eq!(r.estimate.exact_value().unwrap(), expected);
        assert_eq!(expected, q(3, 4));
    }

    #[test]
    fn budget_is_enforced() {
        let err = rho_bilinear_exact(
            &CoeffMatrix::zeros(1, 8),
            &bernoulli(),
            &q(0, 1),
            &CenterMode::SupOverCenter,
            100,
        );
        assert!(matches!(err, Err(SmallBallError::BudgetExceeded { .. })));
    }

    #[test]
    fn fixed_center_never_beats_sup() {
        let coeffs = ones(4);
        let sup =
            rho_linear_exact(&coeffs, &bernoulli(), &q(1, 2), &CenterMode::SupOverCenter, BUDGET)
                .unwrap()
                .estimate
                .exact_value()
                .unwrap();
        for c in [-4i64, -2, 0, 2, 4, 1] {
            let fixed = rho_linear_exact(
                &coeffs,
                &bernoulli(),
                &q(1, 2),
                &CenterMode::FixedCenter(vec![q(c, 1)]),
                BUDGET,
            )
            .unwrap()
            .estimate
            .exact_value()
            .unwrap();
            assert!(fixed <= sup);
        }
    }

    #[test]
    fn monotone_in_beta_and_scale_covariant() {
        let coeffs =
            CoeffVector::new(1, vec![vec![q(1, 3)], vec![q(2, 1)], vec![q(-3, 5)]]).unwrap();
        let betas = [q(0, 1), q(1, 10), q(1, 2), q(2, 1)];
        let mut last = Q::zero();
        for b in &betas {
            let v = rho_linear_exact(&coeffs, &bernoulli(), b, &CenterMode::SupOverCenter, BUDGET)
                .unwrap()
                .estimate
                .exact_value()
                .unwrap();
            assert!(v >= last);
            last = v;
        }
        // scaling all coefficients and beta by lambda > 0 changes nothing
        let lambda = q(7, 3);
        let scaled = CoeffVector::new(
            1,
            coeffs.entries.iter().map(|e| vecs::scale(e, &lambda)).collect(),
        )
        .unwrap();
        for b in &betas {
            let v1 = rho_linear_exact(&coeffs, &bernoulli(), b, &CenterMode::SupOverCenter, BUDGET)
                .unwrap()
                .estimate
                .exact_value()
                .unwrap();
            let v2 = rho_linear_exact(
                &scaled,
                &bernoulli(),
                &(b.clone() * lambda.clone()),
                &CenterMode::SupOverCenter,
                BUDGET,
            )
            .unwrap()
            .estimate
            .exact_value()
            .unwrap();
            assert_eq!(v1, v2);
        }
    }

    #[test]
    fn d2_bracket_sandwiches_midpoint_brute_force() {
        // two-dimensional coefficients: the bracket must contain the best
        // midpoint-centered ball mass
        let coeffs = CoeffVector::new(
            2,
            vec![vec![q(1, 1), q(0, 1)], vec![q(0, 1), q(1, 1)], vec![q(1, 2), q(1, 3)]],
        )
        .unwrap();
        let beta = q(1, 2);
        let atoms = linear_form_atoms(&coeffs.entries, &bernoulli(), BUDGET).unwrap();
        let r = rho_from_atoms(&atoms, 2, &beta, &CenterMode::SupOverCenter).unwrap();
        let (lower, upper) = match r.estimate.kind {
            EstimateKind::Exact { value } => (value.clone(), value),
            EstimateKind::ExactBracket { lower, upper } => (lower, upper),
            _ => unreachable!(),
        };
        let mut brute = Q::zero();
        for (v1, _) in &atoms {
            for (v2, _) in &atoms {
                let mid: Vec<Q> = v1
                    .iter()
                    .zip(v2)
                    .map(|(a, b)| (a.clone() + b.clone()) * q(1, 2))
                    .collect();
                let mass = ball_mass(&atoms, &mid, &beta);
                if mass > brute {
                    brute = mass;
                }
            }
        }
        assert!(lower <= brute && brute <= upper);
    }

    #[test]
    fn monte_carlo_is_deterministic_and_near_exact() {
        let coeffs = ones(3);
        let exact = q(3, 8);
        let grid = [vec![q(-1, 1)], vec![q(1, 1)]];
        let run = || {
            rho_monte_carlo(
                &McForm::Linear(&coeffs),
                &bernoulli(),
                &q(1, 2),
                &CenterMode::SupOverCenter,
                Some(&grid),
                50_000,
                42,
            )
            .unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        match a.kind {
            EstimateKind::MonteCarlo { ci_low, ci_high, .. } => {
                let e = exact.approx_f64();
                assert!(ci_low <= e && e <= ci_high);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn monte_carlo_constant_form_zero_width() {
        let zeros = CoeffMatrix::zeros(1, 4);
        let b = CoeffVector::zeros(1, 4);
        let est = rho_monte_carlo(
            &McForm::Quadratic(&zeros, &b),
            &bernoulli(),
            &q(0, 1),
            &CenterMode::FixedCenter(vec![q(0, 1)]),
            None,
            1000,
            7,
        )
        .unwrap();
        match est.kind {
            EstimateKind::MonteCarlo { value, ci_low, ci_high, .. } => {
                assert_eq!(value, 1.0);
                assert_eq!(ci_low, 1.0);
                assert_eq!(ci_high, 1.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn monte_carlo_requires_grid_in_sup_mode() {
        let coeffs = ones(2);
        let err = rho_monte_carlo(
            &McForm::Linear(&coeffs),
            &bernoulli(),
            &q(1, 2),
            &CenterMode::SupOverCenter,
            None,
            100,
            1,
        );
        assert!(matches!(err, Err(SmallBallError::EmptyCenterGrid)));
    }

    #[test]
    fn ci_contains_exact_in_most_seeded_trials() {
        // statistical contract: at least 90 of 100 seeded runs cover the truth
        let coeffs = ones(3);
        let exact = q(3, 8).approx_f64();
        let mut covered = 0;
        for seed in 0..100u64 {
            let est = rho_monte_carlo(
                &McForm::Linear(&coeffs),
                &bernoulli(),
                &q(1, 2),
                &CenterMode::FixedCenter(vec![q(1, 1)]),
                None,
                4_000,
                seed,
            )
            .unwrap();
            if let EstimateKind::MonteCarlo { ci_low, ci_high, .. } = est.kind {
                if ci_low <= exact && exact <= ci_high {
                    covered += 1;
                }
            }
        }
        assert!(covered >= 90, "only {covered} of 100 intervals covered the exact value");
    }

    #[test]
    fn estimate_json_roundtrip() {
        let est = SmallBallEstimate { beta: q(1, 2), kind: EstimateKind::Exact { value: q(63, 256) } };
        let text = serde_json::to_string(&est).unwrap();
        let back: SmallBallEstimate<Q> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, est);
    }
}
