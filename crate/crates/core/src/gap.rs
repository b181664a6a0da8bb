//! Generalized arithmetic progressions with exact rational geometry.
//!
//! A GAP of rank `r` is the image of an integer box under the affine map
//! `(k_1, ..., k_r) -> g_0 + k_1 g_1 + ... + k_r g_r` with generators in Q^d.
//! It is *proper* when that map is injective on the box, and *symmetric*
//! when the offset is zero and the box is `[-K_i, K_i]` in every coordinate.
//!
//! Everything here is exact: properness and span tests compare rationals for
//! equality, and the rank-reduction algorithm manipulates integer relations
//! found by exact nullspace elimination. No floating point enters.

use std::collections::BTreeMap;
use std::fmt;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::scalar::{serde_scalar_mat, serde_scalar_vec, Scalar};
use crate::vecs;

#[derive(Debug, Clone, PartialEq)]
pub enum GapError {
    VolumeExceedsCap { volume: u128, cap: u128 },
    NotSymmetric,
    NotProper,
    PointOutsideBox { index: usize },
    InvalidGap(String),
    InvalidParameter(String),
    Overflow(String),
}

impl fmt::Display for GapError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GapError::VolumeExceedsCap { volume, cap } => {
                write!(f, "volume {volume} exceeds cap {cap}")
            }
            GapError::NotSymmetric => write!(f, "gap is not symmetric"),
            GapError::NotProper => write!(f, "gap is not proper"),
            GapError::PointOutsideBox { index } => {
                write!(f, "point {index} lies outside the coordinate box")
            }
            GapError::InvalidGap(msg) => write!(f, "invalid gap: {msg}"),
            GapError::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            GapError::Overflow(msg) => write!(f, "integer overflow: {msg}"),
        }
    }
}

impl std::error::Error for GapError {}

/// A point of a GAP: its box coordinates and the mapped value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GapPoint<T: Scalar> {
    pub coords: Vec<i64>,
    #[serde(with = "serde_scalar_vec")]
    pub value: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "GapRepr<T>")]
pub struct Gap<T: Scalar> {
    ambient_dim: usize,
    #[serde(with = "serde_scalar_vec")]
    offset: Vec<T>,
    #[serde(with = "serde_scalar_mat")]
    generators: Vec<Vec<T>>,
    lower_bounds: Vec<i64>,
    upper_bounds: Vec<i64>,
    symmetric: bool,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct GapRepr<T: Scalar> {
    ambient_dim: usize,
    #[serde(with = "serde_scalar_vec")]
    offset: Vec<T>,
    #[serde(with = "serde_scalar_mat")]
    generators: Vec<Vec<T>>,
    lower_bounds: Vec<i64>,
    upper_bounds: Vec<i64>,
    symmetric: bool,
}

impl<T: Scalar> TryFrom<GapRepr<T>> for Gap<T> {
    type Error = GapError;
    fn try_from(r: GapRepr<T>) -> Result<Self, GapError> {
        Gap::new(
            r.ambient_dim,
            r.offset,
            r.generators,
            r.lower_bounds,
            r.upper_bounds,
            r.symmetric,
        )
    }
}

impl<T: Scalar> Gap<T> {
    pub fn new(
        ambient_dim: usize,
        offset: Vec<T>,
        generators: Vec<Vec<T>>,
        lower_bounds: Vec<i64>,
        upper_bounds: Vec<i64>,
        symmetric: bool,
    ) -> Result<Self, GapError> {
        if ambient_dim == 0 {
            return Err(GapError::InvalidGap("ambient dimension must be positive".into()));
        }
        if offset.len() != ambient_dim {
            return Err(GapError::InvalidGap("offset dimension mismatch".into()));
        }
        let r = generators.len();
        if generators.iter().any(|g| g.len() != ambient_dim) {
            return Err(GapError::InvalidGap("generator dimension mismatch".into()));
        }
        if lower_bounds.len() != r || upper_bounds.len() != r {
            return Err(GapError::InvalidGap("bounds length must equal rank".into()));
        }
        for i in 0..r {
            if lower_bounds[i] > upper_bounds[i] {
                return Err(GapError::InvalidGap(format!(
                    "lower bound exceeds upper bound at index {i}"
                )));
            }
        }
        if symmetric {
            if !vecs::is_zero(&offset) {
                return Err(GapError::InvalidGap("symmetric gap requires zero offset".into()));
            }
            for i in 0..r {
                if lower_bounds[i] != -upper_bounds[i] {
                    return Err(GapError::InvalidGap(format!(
                        "symmetric gap requires lower = -upper at index {i}"
                    )));
                }
            }
        }
        Ok(Gap { ambient_dim, offset, generators, lower_bounds, upper_bounds, symmetric })
    }

    /// Symmetric GAP: zero offset, bounds `[-k_i, k_i]`.
    pub fn symmetric(
        ambient_dim: usize,
        generators: Vec<Vec<T>>,
        half_widths: Vec<i64>,
    ) -> Result<Self, GapError> {
        if half_widths.iter().any(|&k| k < 0) {
            return Err(GapError::InvalidGap("negative half-width".into()));
        }
        let lower: Vec<i64> = half_widths.iter().map(|&k| -k).collect();
        Gap::new(ambient_dim, vecs::zero(ambient_dim), generators, lower, half_widths, true)
    }

    /// Rank-0 symmetric GAP `{0}`.
    pub fn zero(ambient_dim: usize) -> Self {
        Gap {
            ambient_dim,
            offset: vecs::zero(ambient_dim),
            generators: vec![],
            lower_bounds: vec![],
            upper_bounds: vec![],
            symmetric: true,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn generators(&self) -> &[Vec<T>] {
        &self.generators
    }

    pub fn offset(&self) -> &[T] {
        &self.offset
    }

    pub fn lower_bounds(&self) -> &[i64] {
        &self.lower_bounds
    }

    pub fn upper_bounds(&self) -> &[i64] {
        &self.upper_bounds
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Box cardinality; 1 for rank 0. Saturates at `u128::MAX`.
    pub fn volume(&self) -> u128 {
        let mut v: u128 = 1;
        for i in 0..self.rank() {
            let side = (self.upper_bounds[i] - self.lower_bounds[i]) as u128 + 1;
            v = v.saturating_mul(side);
        }
        v
    }

    pub fn contains_coords(&self, coords: &[i64]) -> bool {
        coords.len() == self.rank()
            && coords
                .iter()
                .enumerate()
                .all(|(i, &c)| self.lower_bounds[i] <= c && c <= self.upper_bounds[i])
    }

    /// The affine map applied to a coordinate tuple.
    pub fn value_of(&self, coords: &[i64]) -> Vec<T> {
        debug_assert_eq!(coords.len(), self.rank());
        let mut v = self.offset.clone();
        for (g, &c) in self.generators.iter().zip(coords) {
            vecs::add_scaled(&mut v, g, &T::from_int(c));
        }
        v
    }

    pub fn point(&self, coords: Vec<i64>) -> GapPoint<T> {
        let value = self.value_of(&coords);
        GapPoint { coords, value }
    }

    fn check_cap(&self, cap: u128) -> Result<(), GapError> {
        let v = self.volume();
        if v > cap {
            return Err(GapError::VolumeExceedsCap { volume: v, cap });
        }
        Ok(())
    }

    /// All points in lexicographic coordinate order (first coordinate slowest).
    pub fn enumerate(&self, cap: u128) -> Result<Vec<GapPoint<T>>, GapError> {
        self.check_cap(cap)?;
        let r = self.rank();
        let mut out = Vec::with_capacity(self.volume() as usize);
        let mut coords: Vec<i64> = self.lower_bounds.clone();
        loop {
            out.push(self.point(coords.clone()));
            // odometer with the last coordinate fastest = lexicographic order
            let mut i = r;
            loop {
                if i == 0 {
                    return Ok(out);
                }
                i -= 1;
                if coords[i] < self.upper_bounds[i] {
                    coords[i] += 1;
                    for (j, c) in coords.iter_mut().enumerate().skip(i + 1) {
                        *c = self.lower_bounds[j];
                    }
                    break;
                }
            }
        }
    }

    /// True iff the box-to-value map is injective, i.e. `|Q| = Vol(Q)`.
    pub fn is_proper(&self, cap: u128) -> Result<bool, GapError> {
        let points = self.enumerate(cap)?;
        let mut values: Vec<&Vec<T>> = points.iter().map(|p| &p.value).collect();
        values.sort();
        Ok(values.windows(2).all(|w| w[0] != w[1]))
    }

    /// The point minimizing the Euclidean distance to `target`, if that
    /// minimum is at most `delta`; ties broken by lexicographically smallest
    /// coordinates. Distances are compared as exact squared rationals.
    pub fn closest_element(
        &self,
        target: &[T],
        delta: &T,
        cap: u128,
    ) -> Result<Option<GapPoint<T>>, GapError> {
        if delta.is_negative() {
            return Err(GapError::InvalidParameter("negative radius".into()));
        }
        if target.len() != self.ambient_dim {
            return Err(GapError::InvalidParameter("target dimension mismatch".into()));
        }
        let points = self.enumerate(cap)?;
        let mut best: Option<(T, GapPoint<T>)> = None;
        for p in points {
            let d2 = vecs::dist_sq(target, &p.value);
            match &best {
                Some((bd, _)) if *bd <= d2 => {}
                _ => best = Some((d2, p)),
            }
        }
        let delta_sq = delta.clone() * delta.clone();
        Ok(best.and_then(|(d2, p)| if d2 <= delta_sq { Some(p) } else { None }))
    }

    /// Scales the box of a symmetric GAP by a positive integer factor.
    pub fn dilate(&self, m: u64) -> Result<Self, GapError> {
        if !self.symmetric {
            return Err(GapError::NotSymmetric);
        }
        if m == 0 {
            return Err(GapError::InvalidParameter("dilation factor must be positive".into()));
        }
        let mut upper = Vec::with_capacity(self.rank());
        for &k in &self.upper_bounds {
            let scaled = k
                .checked_mul(m as i64)
                .ok_or_else(|| GapError::Overflow("dilated bound".into()))?;
            upper.push(scaled);
        }
        let lower = upper.iter().map(|&k| -k).collect();
        Gap::new(self.ambient_dim, self.offset.clone(), self.generators.clone(), lower, upper, true)
    }

    /// True iff the coordinate tuples of `points` have full rank `r`.
    pub fn spans(&self, points: &[GapPoint<T>]) -> Result<bool, GapError> {
        for (i, p) in points.iter().enumerate() {
            if !self.contains_coords(&p.coords) {
                return Err(GapError::PointOutsideBox { index: i });
            }
        }
        let rows: Vec<Vec<T>> = points
            .iter()
            .map(|p| p.coords.iter().map(|&c| T::from_int(c)).collect())
            .collect();
        Ok(matrix_rank(rows, self.rank()) == self.rank())
    }

    /// Replaces generators using the unimodular change of basis determined by
    /// a primitive integer relation `sum_i alpha_i g_i = 0`; the first new
    /// generator is zero and gets dropped, so the rank decreases by one while
    /// every old box point keeps an exact representation.
    fn eliminate_generator_relation(
        &self,
        alpha: &[i128],
        points: &[GapPoint<T>],
    ) -> Result<(Self, Vec<GapPoint<T>>), GapError> {
        let r = self.rank();
        debug_assert_eq!(alpha.len(), r);
        let basis = relation_basis(alpha)?;
        // new generators h_k = sum_i Vinv[k][i] g_i, k >= 1 (h_0 vanishes)
        let mut new_gens = Vec::with_capacity(r - 1);
        for k in 1..r {
            let mut h = vecs::zero(self.ambient_dim);
            for i in 0..r {
                let c = basis.vinv[k][i];
                if c != 0 {
                    vecs::add_scaled(&mut h, &self.generators[i], &T::from_int(to_i64(c)?));
                }
            }
            new_gens.push(h);
        }
        #[cfg(debug_assertions)]
        {
            let mut h0 = vecs::zero(self.ambient_dim);
            for i in 0..r {
                vecs::add_scaled(&mut h0, &self.generators[i], &T::from_int(to_i64(basis.vinv[0][i]).unwrap()));
            }
            debug_assert!(vecs::is_zero(&h0));
        }
        // new bounds dominate the remapped coordinates of the whole old box
        let mut half = Vec::with_capacity(r - 1);
        for k in 1..r {
            let mut b: i128 = 0;
            for i in 0..r {
                b = b
                    .checked_add(basis.v[i][k].unsigned_abs() as i128 * self.upper_bounds[i] as i128)
                    .ok_or_else(|| GapError::Overflow("properization bound".into()))?;
            }
            half.push(to_i64(b)?);
        }
        let new_gap = Gap::symmetric(self.ambient_dim, new_gens, half)?;
        let mut new_points = Vec::with_capacity(points.len());
        for p in points {
            let mut coords = Vec::with_capacity(r - 1);
            for k in 1..r {
                let mut c: i128 = 0;
                for i in 0..r {
                    c += basis.v[i][k] * p.coords[i] as i128;
                }
                coords.push(to_i64(c)?);
            }
            let np = new_gap.point(coords);
            debug_assert_eq!(np.value, p.value);
            new_points.push(np);
        }
        Ok((new_gap, new_points))
    }

    /// Makes a symmetric GAP proper by repeatedly finding a colliding pair of
    /// coordinate tuples and eliminating the implied generator relation.
    fn properize(
        mut gap: Self,
        mut points: Vec<GapPoint<T>>,
        cap: u128,
    ) -> Result<(Self, Vec<GapPoint<T>>), GapError> {
        loop {
            gap.check_cap(cap)?;
            match find_collision(&gap, cap)? {
                None => return Ok((gap, points)),
                Some(alpha) => {
                    let (g, p) = gap.eliminate_generator_relation(&alpha, &points)?;
                    gap = g;
                    points = p;
                }
            }
        }
    }
}

/// Result of [`rank_reduce`]: the reduced GAP, the same geometric points
/// re-expressed in it, and the realized volume blow-up.
#[derive(Debug, Clone)]
pub struct RankReduction<T: Scalar> {
    pub gap: Gap<T>,
    pub points: Vec<GapPoint<T>>,
    pub input_volume: u128,
    pub output_volume: u128,
    pub iterations: usize,
}

/// Shrinks a proper symmetric GAP until the given points span it.
///
/// Loop: if the coordinate tuples already have full rank, stop. Otherwise
/// take a primitive integer relation annihilating every tuple (exact
/// nullspace, smallest max-norm, ties lexicographic), substitute
/// `w = g_j / alpha_j` at the last nonzero index and replace
/// `g_i <- g_i - alpha_i w`, dropping generator `j`. The substitution keeps
/// every point value fixed because the relation kills the cross term. The
/// candidate is then re-properized before the next round. Rank strictly
/// decreases, so at most `r` rounds run.
pub fn rank_reduce<T: Scalar>(
    gap: &Gap<T>,
    points: &[GapPoint<T>],
    cap: u128,
) -> Result<RankReduction<T>, GapError> {
    if !gap.is_symmetric() {
        return Err(GapError::NotSymmetric);
    }
    if !gap.is_proper(cap)? {
        return Err(GapError::NotProper);
    }
    for (i, p) in points.iter().enumerate() {
        if !gap.contains_coords(&p.coords) || gap.value_of(&p.coords) != p.value {
            return Err(GapError::PointOutsideBox { index: i });
        }
    }
    let input_volume = gap.volume();
    let mut current = gap.clone();
    let mut pts = points.to_vec();
    let mut iterations = 0;
    loop {
        if current.spans(&pts)? {
            break;
        }
        iterations += 1;
        let coord_rows: Vec<Vec<i64>> = pts.iter().map(|p| p.coords.clone()).collect();
        let alpha = primitive_annihilator::<T>(&coord_rows, current.rank())?;
        let j = alpha
            .iter()
            .rposition(|&a| a != 0)
            .expect("relation is nonzero");
        // w = g_j / alpha_j; g_i' = g_i - alpha_i w for i != j
        let w = vecs::scale(
            &current.generators[j],
            &(T::one() / T::from_int(to_i64(alpha[j])?)),
        );
        let mut new_gens = Vec::with_capacity(current.rank() - 1);
        let mut new_half = Vec::with_capacity(current.rank() - 1);
        for i in 0..current.rank() {
            if i == j {
                continue;
            }
            let mut g = current.generators[i].clone();
            vecs::add_scaled(&mut g, &w, &-T::from_int(to_i64(alpha[i])?));
            new_gens.push(g);
            new_half.push(current.upper_bounds[i]);
        }
        let reduced = Gap::symmetric(current.ambient_dim, new_gens, new_half)?;
        let new_pts: Vec<GapPoint<T>> = pts
            .iter()
            .map(|p| {
                let coords: Vec<i64> = p
                    .coords
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != j)
                    .map(|(_, &c)| c)
                    .collect();
                let np = reduced.point(coords);
                debug_assert_eq!(np.value, p.value);
                np
            })
            .collect();
        let (proper, remapped) = Gap::properize(reduced, new_pts, cap)?;
        current = proper;
        pts = remapped;
    }
    let output_volume = current.volume();
    Ok(RankReduction { gap: current, points: pts, input_volume, output_volume, iterations })
}

/// Rank of a rational matrix by Gaussian elimination.
fn matrix_rank<T: Scalar>(mut rows: Vec<Vec<T>>, cols: usize) -> usize {
    let mut rank = 0;
    for col in 0..cols {
        let pivot = (rank..rows.len()).find(|&i| !rows[i][col].is_zero());
        let Some(p) = pivot else { continue };
        rows.swap(rank, p);
        let inv = T::one() / rows[rank][col].clone();
        for c in col..cols {
            rows[rank][c] = rows[rank][c].clone() * inv.clone();
        }
        for i in 0..rows.len() {
            if i != rank && !rows[i][col].is_zero() {
                let f = rows[i][col].clone();
                for c in col..cols {
                    let delta = f.clone() * rows[rank][c].clone();
                    rows[i][c] = rows[i][c].clone() - delta;
                }
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

/// A primitive integer vector annihilating every row of the given integer
/// matrix: exact nullspace basis, scaled to primitive integers, sign
/// normalized; among basis vectors the one with smallest max-norm wins,
/// ties by lexicographic order.
fn primitive_annihilator<T: Scalar>(rows: &[Vec<i64>], cols: usize) -> Result<Vec<i128>, GapError> {
    let mut mat: Vec<Vec<T>> = rows
        .iter()
        .map(|r| r.iter().map(|&c| T::from_int(c)).collect())
        .collect();
    // reduced row echelon form
    let mut pivot_cols = Vec::new();
    let mut rank = 0;
    for col in 0..cols {
        let pivot = (rank..mat.len()).find(|&i| !mat[i][col].is_zero());
        let Some(p) = pivot else { continue };
        mat.swap(rank, p);
        let inv = T::one() / mat[rank][col].clone();
        for c in 0..cols {
            mat[rank][c] = mat[rank][c].clone() * inv.clone();
        }
        for i in 0..mat.len() {
            if i != rank && !mat[i][col].is_zero() {
                let f = mat[i][col].clone();
                for c in 0..cols {
                    let delta = f.clone() * mat[rank][c].clone();
                    mat[i][c] = mat[i][c].clone() - delta;
                }
            }
        }
        pivot_cols.push(col);
        rank += 1;
        if rank == mat.len() {
            break;
        }
    }
    let free_cols: Vec<usize> = (0..cols).filter(|c| !pivot_cols.contains(c)).collect();
    if free_cols.is_empty() {
        return Err(GapError::InvalidParameter("matrix has full column rank".into()));
    }
    let mut candidates = Vec::new();
    for &fc in &free_cols {
        let mut v = vec![T::zero(); cols];
        v[fc] = T::one();
        for (row, &pc) in pivot_cols.iter().enumerate() {
            v[pc] = -mat[row][fc].clone();
        }
        candidates.push(scale_to_primitive(&v)?);
    }
    candidates.sort_by(|a, b| {
        let na = a.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0);
        let nb = b.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0);
        na.cmp(&nb).then_with(|| a.cmp(b))
    });
    Ok(candidates.into_iter().next().unwrap())
}

/// Scales a rational vector to a primitive integer vector with positive
/// leading entry.
fn scale_to_primitive<T: Scalar>(v: &[T]) -> Result<Vec<i128>, GapError> {
    let mut denom_lcm: i128 = 1;
    for x in v {
        let (_, d) = x
            .int_pair()
            .ok_or_else(|| GapError::Overflow("relation entry".into()))?;
        denom_lcm = denom_lcm.lcm(&d);
    }
    let mut ints = Vec::with_capacity(v.len());
    for x in v {
        let (n, d) = x.int_pair().unwrap();
        ints.push(
            n.checked_mul(denom_lcm / d)
                .ok_or_else(|| GapError::Overflow("relation scaling".into()))?,
        );
    }
    let mut g: i128 = 0;
    for &x in &ints {
        g = g.gcd(&x);
    }
    if g == 0 {
        return Err(GapError::InvalidParameter("zero relation".into()));
    }
    for x in ints.iter_mut() {
        *x /= g;
    }
    if let Some(first) = ints.iter().find(|&&x| x != 0) {
        if *first < 0 {
            for x in ints.iter_mut() {
                *x = -*x;
            }
        }
    }
    Ok(ints)
}

/// Searches the box for two coordinate tuples with equal values and returns
/// the primitive relation their difference implies on the generators.
fn find_collision<T: Scalar>(gap: &Gap<T>, cap: u128) -> Result<Option<Vec<i128>>, GapError> {
    let points = gap.enumerate(cap)?;
    let mut by_value: BTreeMap<&Vec<T>, &Vec<i64>> = BTreeMap::new();
    let mut collision: Option<(Vec<i64>, Vec<i64>)> = None;
    for p in &points {
        match by_value.get(&p.value) {
            Some(prev) => {
                collision = Some(((*prev).clone(), p.coords.clone()));
                break;
            }
            None => {
                by_value.insert(&p.value, &p.coords);
            }
        }
    }
    let Some((a, b)) = collision else { return Ok(None) };
    let diff: Vec<T> = a
        .iter()
        .zip(&b)
        .map(|(&x, &y)| T::from_int(x - y))
        .collect();
    Ok(Some(scale_to_primitive(&diff)?))
}

struct RelationBasis {
    /// `alpha^T V = e_1^T`; new coordinates are `V^T c`.
    v: Vec<Vec<i128>>,
    /// `V^{-1}`; new generators are `Vinv * g` and its first row is `alpha`.
    vinv: Vec<Vec<i128>>,
}

/// Completes a primitive integer relation to a unimodular change of basis by
/// Euclidean column reduction.
fn relation_basis(alpha: &[i128]) -> Result<RelationBasis, GapError> {
    let r = alpha.len();
    let mut a = alpha.to_vec();
    let mut v = identity(r);
    let mut vinv = identity(r);
    // reduce a to (±1, 0, ..., 0) by 2x2 unimodular column operations
    for i in 1..r {
        if a[i] == 0 {
            continue;
        }
        let (g, x, y) = ext_gcd(a[0], a[i]);
        let (a0, ai) = (a[0], a[i]);
        // columns (0, i) right-multiplied by [[x, -ai/g], [y, a0/g]]
        a[0] = g;
        a[i] = 0;
        apply_col_op(&mut v, 0, i, x, y, -ai / g, a0 / g)?;
        // inverse op [[a0/g, ai/g], [-y, x]] left-applied to rows of vinv
        apply_row_op(&mut vinv, 0, i, a0 / g, ai / g, -y, x)?;
    }
    if a[0] == -1 {
        for row in v.iter_mut() {
            row[0] = -row[0];
        }
        for x in vinv[0].iter_mut() {
            *x = -*x;
        }
    } else if a[0] != 1 {
        return Err(GapError::InvalidParameter("relation is not primitive".into()));
    }
    Ok(RelationBasis { v, vinv })
}

fn identity(r: usize) -> Vec<Vec<i128>> {
    (0..r)
        .map(|i| (0..r).map(|j| i128::from(i == j)).collect())
        .collect()
}

/// Extended gcd: returns (g, x, y) with a x + b y = g > 0.
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

/// cols (c0, c1) of m <- (m c0, m c1) * [[p, rq], [qv, s]]
fn apply_col_op(
    m: &mut [Vec<i128>],
    c0: usize,
    c1: usize,
    p: i128,
    q: i128,
    rq: i128,
    s: i128,
) -> Result<(), GapError> {
    for row in m.iter_mut() {
        let a = row[c0];
        let b = row[c1];
        row[c0] = mul_add(a, p, b, q)?;
        row[c1] = mul_add(a, rq, b, s)?;
    }
    Ok(())
}

/// rows (r0, r1) of m <- [[p, q], [rr, s]] * (rows r0, r1)
fn apply_row_op(
    m: &mut [Vec<i128>],
    r0: usize,
    r1: usize,
    p: i128,
    q: i128,
    rr: i128,
    s: i128,
) -> Result<(), GapError> {
    let cols = m[0].len();
    for c in 0..cols {
        let a = m[r0][c];
        let b = m[r1][c];
        m[r0][c] = mul_add(p, a, q, b)?;
        m[r1][c] = mul_add(rr, a, s, b)?;
    }
    Ok(())
}

fn mul_add(a: i128, b: i128, c: i128, d: i128) -> Result<i128, GapError> {
    a.checked_mul(b)
        .and_then(|x| c.checked_mul(d).and_then(|y| x.checked_add(y)))
        .ok_or_else(|| GapError::Overflow("unimodular reduction".into()))
}

fn to_i64(v: i128) -> Result<i64, GapError> {
    i64::try_from(v).map_err(|_| GapError::Overflow("coordinate out of i64 range".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Q;

    const CAP: u128 = 1 << 20;

    fn q(n: i64) -> Q {
        Q::from_int(n)
    }

    fn gap1(gens: &[i64], half: &[i64]) -> Gap<Q> {
        Gap::symmetric(1, gens.iter().map(|&g| vec![q(g)]).collect(), half.to_vec()).unwrap()
    }

    #[test]
    fn volume_examples() {
        assert_eq!(gap1(&[1], &[2]).volume(), 5);
        assert_eq!(gap1(&[1, 10], &[1, 2]).volume(), 15);
        assert_eq!(Gap::<Q>::zero(1).volume(), 1);
    }

    #[test]
    fn enumerate_small_cases() {
        let g = gap1(&[1], &[1]);
        let vals: Vec<Q> = g.enumerate(CAP).unwrap().iter().map(|p| p.value[0].clone()).collect();
        assert_eq!(vals, vec![q(-1), q(0), q(1)]);

        let single = Gap::new(1, vec![q(3)], vec![], vec![], vec![], false).unwrap();
        let pts = single.enumerate(CAP).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].value, vec![q(3)]);

        // oracle: direct double loop over the box
        let g2 = gap1(&[1, 10], &[1, 1]);
        let mut oracle = Vec::new();
        for k1 in -1i64..=1 {
            for k2 in -1i64..=1 {
                oracle.push(q(k1 + 10 * k2));
            }
        }
        let got: Vec<Q> = g2.enumerate(CAP).unwrap().iter().map(|p| p.value[0].clone()).collect();
        assert_eq!(got, oracle);
        assert_eq!(got.len(), 9);

        assert!(matches!(
            g2.enumerate(4),
            Err(GapError::VolumeExceedsCap { volume: 9, cap: 4 })
        ));
    }

    #[test]
    fn properness_examples() {
        assert!(!gap1(&[1, 3], &[2, 2]).is_proper(CAP).unwrap()); // 2 = -1 + 3
        assert!(gap1(&[1, 10], &[2, 2]).is_proper(CAP).unwrap());
        assert!(gap1(&[7], &[5]).is_proper(CAP).unwrap());
    }

    #[test]
    fn properness_matches_distinct_count_oracle() {
        for (gens, half) in [
            (vec![1i64, 3], vec![2i64, 2]),
            (vec![1, 10], vec![2, 2]),
            (vec![2, 4], vec![1, 3]),
            (vec![5], vec![4]),
            (vec![0], vec![1]),
        ] {
            let g = gap1(&gens, &half);
            let pts = g.enumerate(CAP).unwrap();
            let mut vals: Vec<_> = pts.iter().map(|p| p.value.clone()).collect();
            vals.sort();
            vals.dedup();
            let distinct = vals.len() as u128;
            assert_eq!(g.is_proper(CAP).unwrap(), distinct == g.volume());
        }
    }

    #[test]
    fn closest_element_examples() {
        let g = gap1(&[1], &[3]);
        let got = g
            .closest_element(&[Q::from_ratio(12, 5)], &Q::from_ratio(1, 2), CAP)
            .unwrap()
            .unwrap();
        assert_eq!(got.coords, vec![2]);

        let none = g
            .closest_element(&[Q::from_ratio(18, 5)], &Q::from_ratio(1, 2), CAP)
            .unwrap();
        assert!(none.is_none());

        let z = Gap::<Q>::zero(1);
        let got = z.closest_element(&[q(0)], &q(0), CAP).unwrap().unwrap();
        assert_eq!(got.coords, Vec::<i64>::new());
        assert_eq!(got.value, vec![q(0)]);
    }

    #[test]
    fn closest_element_finds_members_exactly() {
        let g = gap1(&[2, 7], &[2, 1]);
        for p in g.enumerate(CAP).unwrap() {
            let hit = g.closest_element(&p.value, &q(0), CAP).unwrap().unwrap();
            assert_eq!(hit.value, p.value);
        }
    }

    #[test]
    fn dilate_examples() {
        let g = gap1(&[1], &[2]);
        assert_eq!(g.dilate(1).unwrap(), g);
        let d3 = g.dilate(3).unwrap();
        assert_eq!(d3.upper_bounds(), &[6]);
        assert_eq!(d3.volume(), 13);

        let g2 = gap1(&[1, 10], &[1, 1]);
        assert_eq!(g2.dilate(2).unwrap().volume(), 25);

        let asym = Gap::new(1, vec![q(1)], vec![vec![q(1)]], vec![0], vec![2], false).unwrap();
        assert!(matches!(asym.dilate(2), Err(GapError::NotSymmetric)));
    }

    #[test]
    fn dilation_composes() {
        let g = gap1(&[3, 5], &[2, 4]);
        let a = g.dilate(2).unwrap().dilate(3).unwrap();
        let b = g.dilate(6).unwrap();
        assert_eq!(a.upper_bounds(), b.upper_bounds());
        assert_eq!(a.lower_bounds(), b.lower_bounds());
    }

    #[test]
    fn spans_examples() {
        let g = gap1(&[1, 10], &[2, 2]);
        let basis = vec![g.point(vec![1, 0]), g.point(vec![0, 1])];
        assert!(g.spans(&basis).unwrap());
        let collinear = vec![g.point(vec![1, 1]), g.point(vec![2, 2])];
        assert!(!g.spans(&collinear).unwrap());

        let g1 = gap1(&[1], &[2]);
        assert!(!g1.spans(&[g1.point(vec![0])]).unwrap());

        assert!(matches!(
            g.spans(&[g.point(vec![5, 0])]),
            Err(GapError::PointOutsideBox { index: 0 })
        ));
    }

    #[test]
    fn rank_reduce_drops_unused_generator() {
        let g = gap1(&[1, 10], &[3, 3]);
        let pts = vec![g.point(vec![1, 0]), g.point(vec![2, 0]), g.point(vec![-3, 0])];
        let red = rank_reduce(&g, &pts, CAP).unwrap();
        assert_eq!(red.gap.rank(), 1);
        assert_eq!(red.gap.generators()[0], vec![q(1)]);
        let values: Vec<Q> = red.points.iter().map(|p| p.value[0].clone()).collect();
        assert_eq!(values, vec![q(1), q(2), q(-3)]);
        assert!(red.gap.spans(&red.points).unwrap());
    }

    #[test]
    fn rank_reduce_merges_diagonal_relation() {
        let g = gap1(&[1, 10], &[2, 2]);
        let pts = vec![g.point(vec![0, 0]), g.point(vec![1, 1]), g.point(vec![2, 2])];
        let red = rank_reduce(&g, &pts, CAP).unwrap();
        assert_eq!(red.gap.rank(), 1);
        assert_eq!(red.gap.generators()[0], vec![q(11)]);
        let values: Vec<Q> = red.points.iter().map(|p| p.value[0].clone()).collect();
        assert_eq!(values, vec![q(0), q(11), q(22)]);
    }

    #[test]
    fn rank_reduce_noop_when_already_spanning() {
        let g = gap1(&[1, 10], &[2, 2]);
        let pts = vec![g.point(vec![1, 0]), g.point(vec![0, 1])];
        let red = rank_reduce(&g, &pts, CAP).unwrap();
        assert_eq!(red.gap, g);
        assert_eq!(red.iterations, 0);
    }

    #[test]
    fn rank_reduce_degenerate_all_zero() {
        let g = gap1(&[1, 10], &[2, 2]);
        let pts = vec![g.point(vec![0, 0])];
        let red = rank_reduce(&g, &pts, CAP).unwrap();
        assert_eq!(red.gap.rank(), 0);
        assert_eq!(red.points[0].value, vec![q(0)]);
    }

    #[test]
    fn rank_reduce_rejects_bad_inputs() {
        let improper = gap1(&[1, 3], &[2, 2]);
        let p = improper.point(vec![0, 0]);
        assert!(matches!(
            rank_reduce(&improper, &[p], CAP),
            Err(GapError::NotProper)
        ));

        let asym = Gap::new(1, vec![q(0)], vec![vec![q(1)]], vec![0], vec![2], false).unwrap();
        assert!(matches!(
            rank_reduce(&asym, &[], CAP),
            Err(GapError::NotSymmetric)
        ));
    }

    #[test]
    fn rank_reduce_preserves_invariants_on_seeded_cases() {
        // mini version of the acceptance sweep: random proper symmetric gaps
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut done = 0;
        while done < 25 {
            let rank = rng.gen_range(0..=3usize);
            let gens: Vec<Vec<Q>> = (0..rank)
                .map(|_| vec![Q::from_ratio(rng.gen_range(-12i64..=12), rng.gen_range(1i64..=3))])
                .collect();
            let half: Vec<i64> = (0..rank).map(|_| rng.gen_range(1i64..=3)).collect();
            let Ok(g) = Gap::symmetric(1, gens, half) else { continue };
            if g.volume() > 10_000 || !g.is_proper(CAP).unwrap() {
                continue;
            }
            let all = g.enumerate(CAP).unwrap();
            let m = rng.gen_range(0..=4usize).min(all.len());
            let pts: Vec<GapPoint<Q>> =
                (0..m).map(|_| all[rng.gen_range(0..all.len())].clone()).collect();
            let red = rank_reduce(&g, &pts, CAP).unwrap();
            assert!(red.gap.is_symmetric());
            assert!(red.gap.is_proper(CAP).unwrap());
            assert!(red.gap.rank() <= g.rank());
            assert!(red.gap.spans(&red.points).unwrap());
            for (orig, new) in pts.iter().zip(&red.points) {
                assert_eq!(orig.value, new.value);
                assert!(red.gap.contains_coords(&new.coords));
            }
            done += 1;
        }
    }

    #[test]
    fn json_roundtrip_is_bit_exact() {
        let g = Gap::new(
            2,
            vec![Q::from_ratio(1, 3), q(0)],
            vec![vec![q(1), Q::from_ratio(-2, 7)], vec![q(0), q(5)]],
            vec![-1, 0],
            vec![2, 4],
            false,
        )
        .unwrap();
        let text = serde_json::to_string(&g).unwrap();
        let back: Gap<Q> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);

        // invalid payloads are rejected on the way in
        let bad = r#"{"ambient_dim":1,"offset":["1"],"generators":[["1"]],"lower_bounds":[-2],"upper_bounds":[2],"symmetric":true}"#;
        assert!(serde_json::from_str::<Gap<Q>>(bad).is_err());
    }
}
