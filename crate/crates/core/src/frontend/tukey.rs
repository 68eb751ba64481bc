//! Tukey fence on flow magnitudes.

use crate::error::{Error, Result};

/// Type-7 quantile (linear interpolation between order statistics) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Upper Tukey fence `Q3 + 1.5 * IQR`.
pub fn upper_fence(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    Ok(q3 + 1.5 * (q3 - q1))
}

/// Keep-mask: `true` where the magnitude does not exceed the upper fence.
pub fn tukey_filter(magnitudes: &[f64]) -> Result<Vec<bool>> {
    let fence = upper_fence(magnitudes)?;
    Ok(magnitudes.iter().map(|&m| m <= fence).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_quartiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 100.0];
        assert_eq!(upper_fence(&v).unwrap(), 13.0);
        let keep = tukey_filter(&v).unwrap();
        assert_eq!(keep.iter().filter(|k| !**k).count(), 1);
        assert!(!keep[8]);

        let v = [0.0, 0.0, 0.0, 50.0];
        assert_eq!(upper_fence(&v).unwrap(), 31.25);
        assert_eq!(tukey_filter(&v).unwrap(), vec![true, true, true, false]);
    }

    #[test]
    fn equal_values_all_kept() {
        assert!(tukey_filter(&[4.2; 7]).unwrap().into_iter().all(|k| k));
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(tukey_filter(&[]), Err(Error::EmptyInput)));
    }
}
