//! Order statistics used by the experiment aggregation.

/// Linearly interpolated quantile (`q` in `[0, 1]`) of unsorted data.
///
/// Returns `NaN` for empty input.
pub fn quantile(data: &[f64], q: f64) -> f64 {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            if lo == hi {
                sorted[lo]
            } else {
                sorted[lo] + (sorted[hi] - sorted[lo]) * frac
            }
        }
    }
}

pub fn median(data: &[f64]) -> f64 {
    quantile(data, 0.5)
}

/// 25th, 50th and 75th percentiles.
pub fn quartiles(data: &[f64]) -> (f64, f64, f64) {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    (
        quantile_sorted(&sorted, 0.25),
        quantile_sorted(&sorted, 0.5),
        quantile_sorted(&sorted, 0.75),
    )
}

pub fn rms(data: &[f64]) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    (data.iter().map(|v| v * v).sum::<f64>() / data.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_cases() {
        assert!(median(&[]).is_nan());
        assert_eq!(median(&[3.0]), 3.0);
        assert_eq!(median(&[4.0, 1.0]), 2.5);
        assert_eq!(quartiles(&[1.0, 2.0, 3.0, 4.0, 5.0]), (2.0, 3.0, 4.0));
        assert_eq!(rms(&[3.0, -4.0]), (12.5f64).sqrt());
    }

    proptest! {
        #[test]
        fn quartiles_are_ordered(data in prop::collection::vec(-10.0f64..10.0, 1..50)) {
            let (a, b, c) = quartiles(&data);
            prop_assert!(a <= b && b <= c);
        }
    }
}
