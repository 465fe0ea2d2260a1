//! Knee detection on a within-cluster inertia curve (Kneedle).
//!
//! The curve is mapped into the unit square with `x = (k - k_1) / (k_n - k_1)`
//! and `y = inertia_k / inertia_1`, i.e. the fraction of scatter left
//! unexplained at `k` clusters. The difference curve `(1 - y) - x` measures
//! how far the explained scatter runs ahead of the diagonal. Its maximum is a
//! knee only if it exceeds `S · mean(Δx)` and the difference curve later falls
//! below `max - S · mean(Δx)`.

pub const DEFAULT_SENSITIVITY: f64 = 1.0;

/// The difference curve `(1 - inertia_k / inertia_1) - x_k`.
pub fn difference_curve(curve: &[(usize, f64)]) -> Option<Vec<f64>> {
    if curve.len() < 2 {
        return None;
    }
    let (k0, i0) = curve[0];
    let k_last = curve[curve.len() - 1].0;
    if k_last <= k0 || !(i0 > 0.0) || !i0.is_finite() {
        return None;
    }
    let span = (k_last - k0) as f64;
    Some(
        curve
            .iter()
            .map(|&(k, inertia)| {
                let x = (k - k0) as f64 / span;
                (1.0 - inertia / i0) - x
            })
            .collect(),
    )
}

/// Returns the knee `k`, or `None` when the curve has fewer than 3 points or
/// no point clears the sensitivity threshold.
pub fn detect_knee(curve: &[(usize, f64)], sensitivity: f64) -> Option<usize> {
    if curve.len() < 3 {
        return None;
    }
    let diff = difference_curve(curve)?;
    let step = 1.0 / (curve.len() - 1) as f64;
    let threshold = sensitivity * step;

    let (mut best, mut best_i) = (f64::NEG_INFINITY, 0);
    for (i, &d) in diff.iter().enumerate() {
        if d > best {
            best = d;
            best_i = i;
        }
    }
    if best <= threshold {
        return None;
    }
    let floor = best - threshold;
    diff[best_i + 1..]
        .iter()
        .any(|&d| d < floor)
        .then_some(curve[best_i].0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(v: &[f64]) -> Vec<(usize, f64)> {
        v.iter().enumerate().map(|(i, &x)| (i + 1, x)).collect()
    }

    #[test]
    fn linear_decay_has_no_knee() {
        let c = curve(&[8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        assert_eq!(detect_knee(&c, 1.0), None);
    }

    #[test]
    fn sharp_elbow_at_two() {
        let c = curve(&[100.0, 8.0, 7.5, 7.0, 6.6, 6.3, 6.0, 5.8]);
        assert_eq!(detect_knee(&c, 1.0), Some(2));
    }

    #[test]
    fn gentle_power_law_is_refused() {
        // k^(-1/4): the shape of k-means on one isotropic Gaussian in 8-d
        let v: Vec<f64> = (1..=8).map(|k| (k as f64).powf(-0.25)).collect();
        assert_eq!(detect_knee(&curve(&v), 1.0), None);
    }

    #[test]
    fn short_or_degenerate_curves() {
        assert_eq!(detect_knee(&curve(&[3.0, 1.0]), 1.0), None);
        assert_eq!(detect_knee(&curve(&[0.0, 0.0, 0.0]), 1.0), None);
    }

    #[test]
    fn higher_sensitivity_is_stricter() {
        let c = curve(&[100.0, 40.0, 30.0, 25.0, 22.0, 20.0, 19.0, 18.0]);
        assert_eq!(detect_knee(&c, 1.0), Some(2));
        assert_eq!(detect_knee(&c, 5.0), None);
    }
}
