//! Scalar numeric primitives: stable log-sum-exp and interpolated quantiles.
//!
//! Log-domain sums show up everywhere in the density code because the
//! concentration parameters we work with push `exp(κ·cos)` to e^700 and
//! beyond, far past f64 range. Quantiles back every calibrated threshold,
//! so the interpolation convention is fixed once here (linear between
//! order statistics; the "type 7" rule) and never reimplemented.

use crate::error::{Error, Result};

/// Numerically stable `ln Σ exp(v_i)`.
///
/// Shifts by the maximum before exponentiating, so inputs of any
/// magnitude are safe as long as they are finite. Exact (bitwise) for a
/// single element.
///
/// Errors with [`Error::EmptyInput`] on an empty slice.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    let m = values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return Err(Error::EmptyInput {
            context: "log_sum_exp over empty sequence",
        });
    }
    if values.len() == 1 {
        return Ok(values[0]);
    }
    let sum: f64 = values.iter().map(|&v| (v - m).exp()).sum();
    Ok(m + sum.ln())
}

/// Linearly interpolated quantile of an unsorted sequence.
///
/// Sorts a copy, then evaluates at fractional index `h = (N−1)·p`:
/// `v[⌊h⌋] + (h−⌊h⌋)·(v[⌈h⌉] − v[⌊h⌋])`. `p = 0` yields the minimum,
/// `p = 1` the maximum.
///
/// Errors with [`Error::EmptyInput`] on an empty slice and
/// [`Error::POutOfRange`] if `p ∉ [0, 1]`.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput {
            context: "quantile over empty sequence",
        });
    }
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::POutOfRange { p });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    Ok(quantile_sorted(&sorted, p))
}

/// Same as [`quantile`] but assumes `sorted` is already ascending and
/// nonempty, and `p ∈ [0, 1]`. Used internally where the sort is hoisted
/// out of a loop.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lse_single_element_is_exact() {
        assert_eq!(log_sum_exp(&[3.7]).unwrap(), 3.7);
        assert_eq!(log_sum_exp(&[-1234.5]).unwrap(), -1234.5);
    }

    #[test]
    fn lse_two_equal_entries_is_ln2() {
        let got = log_sum_exp(&[0.0, 0.0]).unwrap();
        assert!((got - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn lse_survives_large_magnitudes() {
        // Value frozen from a 50-digit arbitrary-precision evaluation.
        let got = log_sum_exp(&[700.0, 690.0, 650.0]).unwrap();
        let expected = 700.00004539889922;
        assert!(
            ((got - expected) / expected).abs() < 1e-12,
            "got {got}, expected {expected}"
        );
    }

    #[test]
    fn lse_empty_is_error() {
        assert!(matches!(
            log_sum_exp(&[]),
            Err(Error::EmptyInput { .. })
        ));
    }

    #[test]
    fn quantile_median_of_three() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5).unwrap(), 2.0);
    }

    #[test]
    fn quantile_single_element_any_p() {
        assert_eq!(quantile(&[5.0], 0.05).unwrap(), 5.0);
        assert_eq!(quantile(&[5.0], 0.99).unwrap(), 5.0);
    }

    #[test]
    fn quantile_interpolates_between_order_stats() {
        // 0..=99, p = 0.05: h = 99·0.05 = 4.95 → 4 + 0.95·(5−4) = 4.95.
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(quantile(&v, 0.05).unwrap(), 4.95);
    }

    #[test]
    fn quantile_rejects_bad_p() {
        assert!(matches!(
            quantile(&[1.0], -0.1),
            Err(Error::POutOfRange { .. })
        ));
        assert!(matches!(
            quantile(&[1.0], 1.5),
            Err(Error::POutOfRange { .. })
        ));
        assert!(matches!(
            quantile(&[1.0], f64::NAN),
            Err(Error::POutOfRange { .. })
        ));
    }

    #[test]
    fn quantile_empty_is_error() {
        assert!(matches!(quantile(&[], 0.5), Err(Error::EmptyInput { .. })));
    }

    proptest! {
        #[test]
        fn lse_shift_invariance(
            v in proptest::collection::vec(-100.0f64..100.0, 1..50),
            c in -50.0f64..50.0,
        ) {
            let base = log_sum_exp(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let got = log_sum_exp(&shifted).unwrap();
            prop_assert!((got - (base + c)).abs() < 1e-12);
        }

        #[test]
        fn lse_dominates_max(v in proptest::collection::vec(-100.0f64..100.0, 1..50)) {
            let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let got = log_sum_exp(&v).unwrap();
            // lse ≥ max, and lse ≤ max + ln N.
            prop_assert!(got >= m - 1e-12);
            prop_assert!(got <= m + (v.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn quantile_extremes_hit_min_max(
            v in proptest::collection::vec(-1e6f64..1e6, 1..200),
        ) {
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(quantile(&v, 0.0).unwrap(), min);
            prop_assert_eq!(quantile(&v, 1.0).unwrap(), max);
        }

        #[test]
        fn quantile_is_monotone_in_p(
            v in proptest::collection::vec(-1e6f64..1e6, 1..200),
            p1 in 0.0f64..=1.0,
            p2 in 0.0f64..=1.0,
        ) {
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            prop_assert!(quantile(&v, lo).unwrap() <= quantile(&v, hi).unwrap() + 1e-12);
        }
    }
}
