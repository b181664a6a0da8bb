//! Small helpers for vectors in Q^d represented as `Vec<T>`.

use crate::scalar::Scalar;

pub fn zero<T: Scalar>(dim: usize) -> Vec<T> {
    vec![T::zero(); dim]
}

pub fn is_zero<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_zero())
}

pub fn add<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.clone() + y.clone()).collect()
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.clone() - y.clone()).collect()
}

pub fn neg<T: Scalar>(a: &[T]) -> Vec<T> {
    a.iter().map(|x| -x.clone()).collect()
}

pub fn scale<T: Scalar>(a: &[T], c: &T) -> Vec<T> {
    a.iter().map(|x| x.clone() * c.clone()).collect()
}

/// `a += c * b`, in place.
pub fn add_scaled<T: Scalar>(a: &mut [T], b: &[T], c: &T) {
    debug_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter_mut().zip(b) {
        *x = x.clone() + c.clone() * y.clone();
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

pub fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

pub fn dist_sq<T: Scalar>(a: &[T], b: &[T]) -> T {
    norm_sq(&sub(a, b))
}
