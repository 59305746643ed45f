//! Small descriptive helpers shared across modules.

/// Sample quantile by linear interpolation between order statistics
/// (the "type 7" definition). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Min, lower quartile, median, upper quartile, max.
pub fn five_number(values: &[f64]) -> [f64; 5] {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    [
        v[0],
        quantile_sorted(&v, 0.25),
        quantile_sorted(&v, 0.5),
        quantile_sorted(&v, 0.75),
        v[v.len() - 1],
    ]
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance (divisor n - 1).
pub fn sample_variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn sample_sd(x: &[f64]) -> f64 {
    sample_variance(x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ordered_integers() {
        assert_eq!(five_number(&[3.0, 1.0, 5.0, 2.0, 4.0]), [1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(five_number(&[7.0; 4]), [7.0; 5]);
    }

    #[test]
    fn interpolates_between_order_statistics() {
        // 1..4: h = 0.75 for q = 0.25
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.25), 1.75);
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    }

    proptest! {
        #[test]
        fn five_numbers_are_ordered_and_bracketed(v in prop::collection::vec(-1e6f64..1e6, 1..60)) {
            let f = five_number(&v);
            for k in 0..4 {
                prop_assert!(f[k] <= f[k + 1]);
            }
            // direct sorting oracle for the extremes and the median of odd lengths
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            prop_assert_eq!(f[0], s[0]);
            prop_assert_eq!(f[4], s[s.len() - 1]);
            if s.len() % 2 == 1 {
                prop_assert_eq!(f[2], s[s.len() / 2]);
            } else {
                let mid = 0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2]);
                prop_assert!((f[2] - mid).abs() <= 1e-9 * mid.abs().max(1.0));
            }
        }
    }
}
