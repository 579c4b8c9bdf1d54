//! Leave-one-out products over a node's neighbor factors without division.

use crate::scalar::Scalar;

/// Writes `out[k] = prod_{m != k} f[m]` and returns the full product.
pub(crate) fn leave_one_out<S: Scalar>(factors: &[S], out: &mut Vec<S>) -> S {
    out.clear();
    let mut prefix = S::one();
    for &f in factors {
        out.push(prefix);
        prefix *= f;
    }
    let mut suffix = S::one();
    for (o, &f) in out.iter_mut().zip(factors).rev() {
        *o *= suffix;
        suffix *= f;
    }
    prefix
}

/// Writes `out[i] = sum_{k != i} w[k] * prod_{m not in {i, k}} f[m]`.
///
/// Left/right accumulators: `L[i+1] = L[i] f[i] + w[i] P[i]` with `P[i]` the
/// product of `f[..i]`, mirrored for the right side; then `out[i] = L[i] Q[i] + P[i] R[i]`.
pub(crate) fn leave_two_out_weighted<S: Scalar>(factors: &[S], weights: &[S], out: &mut Vec<S>) {
    debug_assert_eq!(factors.len(), weights.len());
    let d = factors.len();
    out.clear();
    out.resize(d, S::zero());
    let mut left = S::zero();
    let mut prefix = S::one();
    let mut lefts = Vec::with_capacity(d);
    let mut prefixes = Vec::with_capacity(d);
    for i in 0..d {
        lefts.push(left);
        prefixes.push(prefix);
        left = left * factors[i] + weights[i] * prefix;
        prefix *= factors[i];
    }
    let mut right = S::zero();
    let mut suffix = S::one();
    for i in (0..d).rev() {
        out[i] = lefts[i] * suffix + prefixes[i] * right;
        right = right * factors[i] + weights[i] * suffix;
        suffix *= factors[i];
    }
}
