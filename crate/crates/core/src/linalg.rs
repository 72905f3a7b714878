//! Matrix-vector products with order-invariant accumulation.
//!
//! Each dot product is accumulated on a fixed-point grid scaled to an upper
//! bound of the largest term, with all arithmetic past the per-term rounding
//! done in integers. The result is a deterministic function of the multiset
//! of products: reordering addends cannot change it, and negating one factor
//! negates it exactly. This turns permutation equivariance and sign-flip
//! oddness of the iterative solvers into bitwise identities and makes
//! row-parallel matvecs independent of thread count. The truncation grid sits
//! ≥ 90 bits below the largest term, far beyond compensated-summation
//! accuracy for the well-scaled data handled here.

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

/// Exponent headroom: scaled terms stay below 2^97, so i128 totals cannot
/// overflow for any realistic vector length and per-chunk i64 partial sums
/// cannot overflow either.
const TARGET_EXP: i32 = 97;
const CHUNK: usize = 256;
const TWO_POW_53: f64 = 9007199254740992.0;

#[inline(always)]
fn exp_of_bits(bits: u64) -> i32 {
    ((bits >> 52) & 0x7ff) as i32 - 1023
}

#[inline(always)]
fn max_abs_bits(v: ArrayView1<'_, f64>) -> u64 {
    let mut m = 0u64;
    for &x in v.iter() {
        let b = x.to_bits() & 0x7fff_ffff_ffff_ffff;
        if b > m {
            m = b;
        }
    }
    m
}

#[inline(always)]
fn pow2(e: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((1023 + e) as u64) << 52)
}

/// Dot product with order-invariant fixed-point accumulation.
///
/// Products are rounded once each (IEEE multiply), scaled by a power of two
/// chosen from the factors' magnitude bounds, split into integer (hi, lo)
/// parts exactly, and summed in integers.
pub fn stable_dot(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let bound = exp_bound(a, b);
    stable_dot_bounded(a, b, bound)
}

/// Exponent bound for products of entries of `a` and `b`.
pub fn exp_bound(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> i32 {
    let ma = max_abs_bits(a);
    let mb = max_abs_bits(b);
    if ma == 0 || mb == 0 {
        i32::MIN
    } else {
        exp_of_bits(ma) + exp_of_bits(mb) + 2
    }
}

/// The accumulation kernel; `bound` must satisfy |a_i·b_i| < 2^bound.
pub fn stable_dot_bounded(
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    bound: i32,
) -> f64 {
    if bound == i32::MIN {
        return 0.0;
    }
    let shift = (TARGET_EXP - bound).clamp(-1022, 1022);
    let factor = pow2(shift);
    let inv_53 = 1.0 / TWO_POW_53;

    let mut acc: i128 = 0;
    let (sa, sb) = (a.as_slice(), b.as_slice());
    if let (Some(sa), Some(sb)) = (sa, sb) {
        // contiguous fast path
        for (ca, cb) in sa.chunks(CHUNK).zip(sb.chunks(CHUNK)) {
            let mut hi_sum: i64 = 0;
            let mut lo_sum: i64 = 0;
            for (&x, &y) in ca.iter().zip(cb.iter()) {
                let t = x * y * factor;
                let hi = (t * inv_53) as i64;
                let lo = (t - (hi as f64) * TWO_POW_53) as i64;
                hi_sum += hi;
                lo_sum += lo;
            }
            acc += (hi_sum as i128) << 53;
            acc += lo_sum as i128;
        }
    } else {
        let mut hi_sum: i64 = 0;
        let mut lo_sum: i64 = 0;
        for (i, (&x, &y)) in a.iter().zip(b.iter()).enumerate() {
            let t = x * y * factor;
            let hi = (t * inv_53) as i64;
            let lo = (t - (hi as f64) * TWO_POW_53) as i64;
            hi_sum += hi;
            lo_sum += lo;
            if i % CHUNK == CHUNK - 1 {
                acc += (hi_sum as i128) << 53;
                acc += lo_sum as i128;
                hi_sum = 0;
                lo_sum = 0;
            }
        }
        acc += (hi_sum as i128) << 53;
        acc += lo_sum as i128;
    }
    (acc as f64) * pow2(-shift)
}

/// Work threshold above which matvec rows run in parallel. Each row is
/// independent and internally order-invariant, so threading never changes
/// the output.
const PAR_THRESHOLD: usize = 1 << 21;

/// y = M·x with order-invariant rows.
pub fn matvec(m: &Array2<f64>, x: &Array1<f64>) -> Array1<f64> {
    let (rows, cols) = m.dim();
    debug_assert_eq!(cols, x.len());
    let mx = max_abs_bits(x.view());
    let mm = {
        let mut b = 0u64;
        if let Some(s) = m.as_slice() {
            for &v in s {
                let vb = v.to_bits() & 0x7fff_ffff_ffff_ffff;
                if vb > b {
                    b = vb;
                }
            }
        } else {
            for v in m.iter() {
                let vb = v.to_bits() & 0x7fff_ffff_ffff_ffff;
                if vb > b {
                    b = vb;
                }
            }
        }
        b
    };
    let bound = if mx == 0 || mm == 0 {
        i32::MIN
    } else {
        exp_of_bits(mx) + exp_of_bits(mm) + 2
    };
    if rows * cols >= PAR_THRESHOLD && rayon::current_num_threads() > 1 {
        let out: Vec<f64> = (0..rows)
            .into_par_iter()
            .map(|i| stable_dot_bounded(m.row(i), x.view(), bound))
            .collect();
        Array1::from_vec(out)
    } else {
        Array1::from_iter((0..rows).map(|i| stable_dot_bounded(m.row(i), x.view(), bound)))
    }
}
