//! Finite-support random variables with exact rational masses.
//!
//! The distributions that matter downstream are all derived from a base
//! variable by exact convolution: the symmetrized difference of two
//! independent copies, the lazy (zero-inflated) sign variable, and products
//! of the two. Atom masses are rationals and always sum to exactly one.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scalar::{serde_atoms, serde_scalar, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub enum RandVarError {
    InvalidParameter(String),
    InvalidDistribution(String),
}

impl fmt::Display for RandVarError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RandVarError::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            RandVarError::InvalidDistribution(msg) => write!(f, "invalid distribution: {msg}"),
        }
    }
}

impl std::error::Error for RandVarError {}

/// A finite-support distribution: strictly increasing atom values with
/// positive masses summing to exactly one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DiscreteDist<T: Scalar> {
    #[serde(with = "serde_atoms")]
    atoms: Vec<(T, T)>,
}

impl<T: Scalar> DiscreteDist<T> {
    /// Builds a distribution from (value, mass) pairs; duplicate values are
    /// merged and zero masses dropped.
    pub fn new(pairs: Vec<(T, T)>) -> Result<Self, RandVarError> {
        let mut merged: BTreeMap<T, T> = BTreeMap::new();
        for (v, m) in pairs {
            if m.is_negative() {
                return Err(RandVarError::InvalidDistribution(format!(
                    "negative mass {m} at value {v}"
                )));
            }
            let slot = merged.entry(v).or_insert_with(T::zero);
            *slot = slot.clone() + m;
        }
        let atoms: Vec<(T, T)> = merged.into_iter().filter(|(_, m)| !m.is_zero()).collect();
        let total = atoms.iter().fold(T::zero(), |acc, (_, m)| acc + m.clone());
        if total != T::one() {
            return Err(RandVarError::InvalidDistribution(format!(
                "masses sum to {total}, expected 1"
            )));
        }
        Ok(DiscreteDist { atoms })
    }

    pub fn point_mass(v: T) -> Self {
        DiscreteDist { atoms: vec![(v, T::one())] }
    }

    /// The +-1 coin.
    pub fn bernoulli() -> Self {
        DiscreteDist {
            atoms: vec![
                (-T::one(), T::from_ratio(1, 2)),
                (T::one(), T::from_ratio(1, 2)),
            ],
        }
    }

    /// Atoms in increasing value order.
    pub fn atoms(&self) -> &[(T, T)] {
        &self.atoms
    }

    pub fn support_size(&self) -> usize {
        self.atoms.len()
    }

    pub fn mass_at(&self, v: &T) -> T {
        self.atoms
            .iter()
            .find(|(a, _)| a == v)
            .map(|(_, m)| m.clone())
            .unwrap_or_else(T::zero)
    }

    /// Distribution of `X - X'` for two independent copies.
    pub fn symmetrize(&self) -> Self {
        let mut acc: BTreeMap<T, T> = BTreeMap::new();
        for (v, m) in &self.atoms {
            for (w, mw) in &self.atoms {
                let key = v.clone() - w.clone();
                let slot = acc.entry(key).or_insert_with(T::zero);
                *slot = slot.clone() + m.clone() * mw.clone();
            }
        }
        DiscreteDist { atoms: acc.into_iter().filter(|(_, m)| !m.is_zero()).collect() }
    }

    /// Distribution of `E * Z` where `E` is the lazy sign variable of
    /// parameter `mu` (+-1 with mass mu/2 each, 0 otherwise) independent of
    /// `Z ~ self`. Computed as the exact product distribution.
    pub fn lazy_product(&self, mu: &T) -> Result<Self, RandVarError> {
        let eta = bernoulli_lazy(mu)?;
        let mut acc: BTreeMap<T, T> = BTreeMap::new();
        for (e, me) in eta.atoms() {
            for (z, mz) in &self.atoms {
                let key = e.clone() * z.clone();
                let slot = acc.entry(key).or_insert_with(T::zero);
                *slot = slot.clone() + me.clone() * mz.clone();
            }
        }
        Ok(DiscreteDist { atoms: acc.into_iter().filter(|(_, m)| !m.is_zero()).collect() })
    }

    /// Exact mass of `{v : c1 <= |v| <= c2}` under the symmetrized
    /// distribution, and whether it clears the floor `c3`.
    pub fn check_condition(&self, p: &ConditionParams<T>) -> (T, bool) {
        let sym = self.symmetrize();
        let mut prob = T::zero();
        for (v, m) in sym.atoms() {
            let a = v.abs();
            if a >= p.c1 && a <= p.c2 {
                prob = prob + m.clone();
            }
        }
        let ok = prob >= p.c3;
        (prob, ok)
    }
}

/// The lazy sign variable: +-1 with probability mu/2 each, 0 otherwise.
pub fn bernoulli_lazy<T: Scalar>(mu: &T) -> Result<DiscreteDist<T>, RandVarError> {
    if !mu.is_positive() || *mu > T::one() {
        return Err(RandVarError::InvalidParameter(format!(
            "lazy parameter {mu} outside (0, 1]"
        )));
    }
    let half_mu = mu.clone() * T::from_ratio(1, 2);
    let mut pairs = vec![(-T::one(), half_mu.clone()), (T::one(), half_mu)];
    let rest = T::one() - mu.clone();
    if !rest.is_zero() {
        pairs.push((T::zero(), rest));
    }
    DiscreteDist::new(pairs)
}

/// Anti-concentration window: requires mass >= c3 on `c1 <= |X - X'| <= c2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ConditionParams<T: Scalar> {
    #[serde(with = "serde_scalar")]
    pub c1: T,
    #[serde(with = "serde_scalar")]
    pub c2: T,
    #[serde(with = "serde_scalar")]
    pub c3: T,
}

impl<T: Scalar> ConditionParams<T> {
    pub fn new(c1: T, c2: T, c3: T) -> Result<Self, RandVarError> {
        if !c1.is_positive() || c1 >= c2 {
            return Err(RandVarError::InvalidParameter(
                "need 0 < c1 < c2".into(),
            ));
        }
        if !c3.is_positive() || c3 > T::one() {
            return Err(RandVarError::InvalidParameter(
                "need 0 < c3 <= 1".into(),
            ));
        }
        Ok(ConditionParams { c1, c2, c3 })
    }

    /// The classical window (1, 2, 1/2).
    pub fn standard() -> Self {
        ConditionParams {
            c1: T::one(),
            c2: T::from_int(2),
            c3: T::from_ratio(1, 2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Q;
    use num_traits::{One, Signed, Zero};

    fn q(n: i64, d: i64) -> Q {
        Q::from_ratio(n, d)
    }

    fn dist(pairs: &[(i64, i64, i64, i64)]) -> DiscreteDist<Q> {
        DiscreteDist::new(
            pairs
                .iter()
                .map(|&(vn, vd, mn, md)| (q(vn, vd), q(mn, md)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn lazy_bernoulli_atoms() {
        let full = bernoulli_lazy(&Q::one()).unwrap();
        assert_eq!(full, DiscreteDist::bernoulli());

        let half = bernoulli_lazy(&q(1, 2)).unwrap();
        assert_eq!(
            half.atoms(),
            &[(q(-1, 1), q(1, 4)), (q(0, 1), q(1, 2)), (q(1, 1), q(1, 4))]
        );

        assert!(bernoulli_lazy(&q(2, 1)).is_err());
        assert!(bernoulli_lazy(&q(0, 1)).is_err());
    }

    #[test]
    fn symmetrize_bernoulli() {
        let sym = DiscreteDist::<Q>::bernoulli().symmetrize();
        assert_eq!(
            sym.atoms(),
            &[(q(-2, 1), q(1, 4)), (q(0, 1), q(1, 2)), (q(2, 1), q(1, 4))]
        );
    }

    #[test]
    fn symmetrize_point_mass_and_lazy_half() {
        let pm = DiscreteDist::point_mass(q(7, 3)).symmetrize();
        assert_eq!(pm.atoms(), &[(q(0, 1), q(1, 1))]);

        let eta = bernoulli_lazy(&q(1, 2)).unwrap();
        let sym = eta.symmetrize();
        assert_eq!(
            sym.atoms(),
            &[
                (q(-2, 1), q(1, 16)),
                (q(-1, 1), q(1, 4)),
                (q(0, 1), q(3, 8)),
                (q(1, 1), q(1, 4)),
                (q(2, 1), q(1, 16)),
            ]
        );
    }

    #[test]
    fn lazy_product_cases() {
        let sym = DiscreteDist::<Q>::bernoulli().symmetrize();
        let z = sym.lazy_product(&q(1, 2)).unwrap();
        assert_eq!(
            z.atoms(),
            &[(q(-2, 1), q(1, 8)), (q(0, 1), q(3, 4)), (q(2, 1), q(1, 8))]
        );

        let pm = DiscreteDist::point_mass(q(0, 1));
        assert_eq!(pm.lazy_product(&q(1, 3)).unwrap(), pm);

        // mu = 1 leaves a symmetric distribution unchanged
        assert_eq!(sym.lazy_product(&Q::one()).unwrap(), sym);
    }

    #[test]
    fn lazy_product_zero_mass_identity() {
        // mass at 0 equals (1 - mu) + mu * mass_Z(0)
        let z = dist(&[(-3, 1, 1, 6), (0, 1, 1, 2), (2, 1, 1, 3)]);
        for (mn, md) in [(1i64, 3i64), (1, 2), (1, 1)] {
            let mu = q(mn, md);
            let got = z.lazy_product(&mu).unwrap().mass_at(&q(0, 1));
            let expect = (Q::one() - mu.clone()) + mu * z.mass_at(&q(0, 1));
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn condition_standard_window() {
        let (p, ok) = DiscreteDist::<Q>::bernoulli().check_condition(&ConditionParams::standard());
        assert_eq!(p, q(1, 2));
        assert!(ok);

        let eta = bernoulli_lazy(&q(1, 2)).unwrap();
        let (p, ok) = eta.check_condition(&ConditionParams::standard());
        assert_eq!(p, q(5, 8));
        assert!(ok);

        let pm = DiscreteDist::point_mass(q(4, 1));
        let (p, ok) = pm.check_condition(&ConditionParams::standard());
        assert_eq!(p, q(0, 1));
        assert!(!ok);
    }

    #[test]
    fn condition_probability_matches_double_sum_oracle() {
        // independent oracle: sum over ordered atom pairs of the base variable
        let d = dist(&[(-1, 2, 1, 4), (1, 3, 1, 4), (5, 2, 1, 2)]);
        let params = ConditionParams::new(q(1, 2), q(3, 1), q(1, 10)).unwrap();
        let mut oracle = Q::zero();
        for (v, mv) in d.atoms() {
            for (w, mw) in d.atoms() {
                let gap = (v.clone() - w.clone()).abs();
                if gap >= params.c1 && gap <= params.c2 {
                    oracle = oracle + mv.clone() * mw.clone();
                }
            }
        }
        let (p, _) = d.check_condition(&params);
        assert_eq!(p, oracle);
    }

    #[test]
    fn masses_always_sum_to_one() {
        let d = dist(&[(-2, 1, 1, 3), (1, 7, 1, 3), (9, 4, 1, 3)]);
        for derived in [d.symmetrize(), d.lazy_product(&q(2, 5)).unwrap()] {
            let total = derived
                .atoms()
                .iter()
                .fold(Q::zero(), |acc, (_, m)| acc + m.clone());
            assert_eq!(total, Q::one());
        }
    }

    #[test]
    fn constructor_rejects_bad_masses() {
        assert!(DiscreteDist::new(vec![(q(0, 1), q(1, 2))]).is_err());
        assert!(DiscreteDist::new(vec![(q(0, 1), q(3, 2)), (q(1, 1), q(-1, 2))]).is_err());
        // duplicates merge before validation
        let ok = DiscreteDist::new(vec![(q(1, 1), q(1, 2)), (q(1, 1), q(1, 2))]).unwrap();
        assert_eq!(ok.atoms(), &[(q(1, 1), q(1, 1))]);
    }

    #[test]
    fn json_roundtrip() {
        let d = dist(&[(-1, 1, 1, 2), (1, 1, 1, 2)]);
        let text = serde_json::to_string(&d).unwrap();
        assert_eq!(text, r#"{"atoms":[["-1","1/2"],["1","1/2"]]}"#);
        let back: DiscreteDist<Q> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
    }
}
