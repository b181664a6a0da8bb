//! Certified rational enclosures of the transcendental quantities the
//! decoupling verdict needs: pi, ln n, exp, and square roots.
//!
//! Every function returns (or consumes) a closed interval `[lo, hi]` that
//! provably contains the true value; downstream comparisons pick whichever
//! endpoint makes the final boolean conservative. Series are evaluated in
//! exact rational arithmetic with explicit remainder bounds, and results are
//! rounded outward onto a dyadic grid so that numerators and denominators
//! stay bounded through chained operations.
//!
//! Intended for big-integer-backed scalars; fixed-width rationals will
//! overflow at the default precision.

use crate::scalar::{powi, Scalar};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enclosure<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Enclosure<T> {
    pub fn point(v: T) -> Self {
        Enclosure { lo: v.clone(), hi: v }
    }

    /// Product of two enclosures of non-negative values.
    pub fn mul(&self, other: &Self) -> Self {
        debug_assert!(!self.lo.is_negative() && !other.lo.is_negative());
        Enclosure {
            lo: self.lo.clone() * other.lo.clone(),
            hi: self.hi.clone() * other.hi.clone(),
        }
    }

    pub fn pow(&self, e: u32) -> Self {
        debug_assert!(!self.lo.is_negative());
        Enclosure { lo: powi(&self.lo, e), hi: powi(&self.hi, e) }
    }

    pub fn scale_int(&self, c: i64) -> Self {
        debug_assert!(c >= 0);
        let c = T::from_int(c);
        Enclosure { lo: self.lo.clone() * c.clone(), hi: self.hi.clone() * c }
    }

    pub fn width(&self) -> T {
        self.hi.clone() - self.lo.clone()
    }

    /// Rounds outward onto the 2^-bits grid, keeping containment.
    fn round_out(self, bits: u32) -> Self {
        Enclosure { lo: dyadic_down(&self.lo, bits), hi: dyadic_up(&self.hi, bits) }
    }
}

/// Default tolerance: 2^-128.
pub fn default_tol<T: Scalar>() -> T {
    powi(&T::from_ratio(1, 2), 128)
}

/// Smallest b with 2^-b <= tol/8, capped defensively.
fn bits_for_tol<T: Scalar>(tol: &T) -> u32 {
    let half = T::from_ratio(1, 2);
    let target = tol.clone() * T::from_ratio(1, 8);
    let mut p = T::one();
    let mut b: u32 = 0;
    while p > target && b < 4096 {
        p = p * half.clone();
        b += 1;
    }
    b
}

/// floor(x) for x >= 0, using only ring comparisons: builds the integer part
/// power-of-two digit by digit.
fn floor_nonneg<T: Scalar>(x: &T) -> T {
    debug_assert!(!x.is_negative());
    if *x < T::one() {
        return T::zero();
    }
    let two = T::from_int(2);
    let mut p = T::one();
    while p.clone() * two.clone() <= *x {
        p = p * two.clone();
    }
    let mut n = T::zero();
    loop {
        let cand = n.clone() + p.clone();
        if cand <= *x {
            n = cand;
        }
        if p == T::one() {
            return n;
        }
        p = p / two.clone();
    }
}

/// Largest multiple of 2^-bits that is <= x (x >= 0).
fn dyadic_down<T: Scalar>(x: &T, bits: u32) -> T {
    let scale = powi(&T::from_int(2), bits);
    floor_nonneg(&(x.clone() * scale.clone())) / scale
}

/// Smallest multiple of 2^-bits that is >= x (x >= 0).
fn dyadic_up<T: Scalar>(x: &T, bits: u32) -> T {
    let scale = powi(&T::from_int(2), bits);
    let s = x.clone() * scale.clone();
    let f = floor_nonneg(&s);
    if f == s {
        x.clone()
    } else {
        (f + T::one()) / scale
    }
}

/// Bisection square-root bracket: returns (lo, hi) with
/// `lo^2 <= x <= hi^2` and `hi - lo <= tol`. Endpoint sizes stay bounded
/// because the bisection starts from integer powers of two.
fn sqrt_bracket<T: Scalar>(x: &T, tol: &T) -> (T, T) {
    assert!(!x.is_negative(), "sqrt of negative value");
    if x.is_zero() {
        return (T::zero(), T::zero());
    }
    let two = T::from_int(2);
    let mut hi = T::one();
    while hi.clone() * hi.clone() < *x {
        hi = hi * two.clone();
    }
    let mut lo = T::zero();
    let half = T::from_ratio(1, 2);
    while hi.clone() - lo.clone() > *tol {
        let mid = (lo.clone() + hi.clone()) * half.clone();
        if mid.clone() * mid.clone() >= *x {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}

/// An upper bound on sqrt(x), within `tol` of the truth. Requires `x >= 0`.
pub fn sqrt_upper<T: Scalar>(x: &T, tol: &T) -> T {
    sqrt_bracket(x, tol).1
}

/// Encloses sqrt over a non-negative enclosure.
pub fn sqrt_enclosure<T: Scalar>(x: &Enclosure<T>, tol: &T) -> Enclosure<T> {
    let hi = sqrt_bracket(&x.hi, tol).1;
    let lo = sqrt_bracket(&x.lo, tol).0;
    Enclosure { lo, hi }
}

/// Encloses arctan(1/m) for integer m >= 2 via the alternating series.
fn atan_inv<T: Scalar>(m: i64, tol: &T) -> Enclosure<T> {
    let inv_m2 = T::from_ratio(1, m * m);
    let mut term = T::from_ratio(1, m);
    let mut power = term.clone();
    let mut partial = T::zero();
    let mut below = T::zero();
    let mut above = term.clone();
    let mut k: i64 = 0;
    loop {
        let signed = if k % 2 == 0 { term.clone() } else { -term.clone() };
        partial = partial + signed;
        // alternating series with decreasing terms: consecutive partial sums
        // bracket the limit
        if k % 2 == 0 {
            above = partial.clone();
        } else {
            below = partial.clone();
        }
        power = power * inv_m2.clone();
        k += 1;
        term = power.clone() / T::from_int(2 * k + 1);
        if term <= *tol && k >= 1 {
            if k % 2 == 1 {
                below = partial.clone() - term.clone();
            } else {
                above = partial.clone() + term.clone();
            }
            break;
        }
    }
    Enclosure { lo: below, hi: above }
}

/// Encloses pi via Machin's formula 16 atan(1/5) - 4 atan(1/239).
pub fn pi_enclosure<T: Scalar>(tol: &T) -> Enclosure<T> {
    let t = tol.clone() * T::from_ratio(1, 64);
    let a5 = atan_inv(5, &t);
    let a239 = atan_inv(239, &t);
    Enclosure {
        lo: T::from_int(16) * a5.lo - T::from_int(4) * a239.hi,
        hi: T::from_int(16) * a5.hi - T::from_int(4) * a239.lo,
    }
    .round_out(bits_for_tol(tol))
}

/// Encloses ln x for rational x in [1, 2) via 2 atanh((x-1)/(x+1)).
fn ln_small<T: Scalar>(x: &T, tol: &T) -> Enclosure<T> {
    let y = (x.clone() - T::one()) / (x.clone() + T::one());
    if y.is_zero() {
        return Enclosure::point(T::zero());
    }
    let y2 = y.clone() * y.clone();
    let two = T::from_int(2);
    let mut power = y.clone();
    let mut sum = T::zero();
    let mut j: i64 = 0;
    loop {
        sum = sum + two.clone() * power.clone() / T::from_int(2 * j + 1);
        power = power * y2.clone();
        j += 1;
        let next = two.clone() * power.clone() / T::from_int(2 * j + 1);
        if next <= *tol {
            // geometric tail bound: rest <= next / (1 - y^2)
            let rest = next / (T::one() - y2.clone());
            return Enclosure { lo: sum.clone(), hi: sum + rest };
        }
    }
}

/// Encloses ln n for integer n >= 1 (ln 1 = 0 exactly).
pub fn ln_enclosure<T: Scalar>(n: u64, tol: &T) -> Enclosure<T> {
    assert!(n >= 1);
    if n == 1 {
        return Enclosure::point(T::zero());
    }
    let k = 63 - n.leading_zeros() as i64; // floor(log2 n)
    let t = tol.clone() * T::from_ratio(1, 4 * (k + 1));
    let ln2 = ln_small(&T::from_int(2), &t);
    let m = T::from_ratio(n as i64, 1 << k); // in [1, 2)
    let rest = ln_small(&m, &t);
    Enclosure {
        lo: ln2.lo * T::from_int(k) + rest.lo,
        hi: ln2.hi * T::from_int(k) + rest.hi,
    }
    .round_out(bits_for_tol(tol))
}

/// Encloses exp over a non-negative enclosure via the Taylor series with an
/// explicit geometric remainder bound.
pub fn exp_enclosure<T: Scalar>(x: &Enclosure<T>, tol: &T) -> Enclosure<T> {
    assert!(!x.lo.is_negative());
    let bits = bits_for_tol(tol);
    // round the arguments first so powers stay manageable
    let lo_arg = dyadic_down(&x.lo, bits);
    let hi_arg = dyadic_up(&x.hi, bits);
    let eval_below = |v: &T| -> T {
        // partial sums only: always <= e^v
        let mut term = T::one();
        let mut sum = T::one();
        let mut k: i64 = 1;
        loop {
            term = term * v.clone() / T::from_int(k);
            sum = sum + term.clone();
            k += 1;
            if term <= *tol {
                return sum;
            }
        }
    };
    let eval_above = |v: &T| -> T {
        let mut term = T::one();
        let mut sum = T::one();
        let mut k: i64 = 1;
        loop {
            term = term * v.clone() / T::from_int(k);
            sum = sum + term.clone();
            k += 1;
            // once k exceeds v the terms decay at least geometrically with
            // ratio v/k; bound the tail and stop when it is small
            if T::from_int(k) > v.clone() + T::one() {
                let ratio = v.clone() / T::from_int(k);
                let tail = term.clone() * ratio.clone() / (T::one() - ratio);
                if tail <= *tol {
                    return sum + tail;
                }
            }
        }
    };
    Enclosure { lo: eval_below(&lo_arg), hi: eval_above(&hi_arg) }.round_out(bits)
}

/// Encloses (2 pi)^(e/2) for a positive integer e.
pub fn two_pi_half_power<T: Scalar>(e: u32, tol: &T) -> Enclosure<T> {
    let bits = bits_for_tol(tol);
    let pi = pi_enclosure::<T>(tol);
    let two_pi = pi.scale_int(2);
    if e % 2 == 0 {
        two_pi.pow(e / 2).round_out(bits)
    } else {
        sqrt_enclosure(&two_pi.pow(e).round_out(bits), tol).round_out(bits)
    }
}
