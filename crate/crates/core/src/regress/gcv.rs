//! One-dimensional search for the smoothing parameter.

/// Points on the coarse lattice before golden-section refinement.
pub(crate) const GCV_GRID: usize = 80;

/// Minimise `f` over `[lo, hi]`: coarse lattice, then golden section on the
/// bracket around the best lattice point. Non-finite scores are treated as
/// worse than any finite score. Returns `hi` if nothing is finite.
pub(crate) fn minimise_log(lo: f64, hi: f64, grid: usize, f: impl Fn(f64) -> f64) -> f64 {
    let step = (hi - lo) / (grid - 1) as f64;
    let pts: Vec<f64> = (0..grid).map(|i| lo + step * i as f64).collect();
    let vals: Vec<f64> = pts.iter().map(|&x| f(x)).collect();
    let mut best = None;
    for (i, v) in vals.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b: usize| *v < vals[b]) {
            best = Some(i);
        }
    }
    let Some(b) = best else { return hi };
    let mut a = pts[b.saturating_sub(1)];
    let mut c = pts[(b + 1).min(grid - 1)];
    let (mut best_x, mut best_v) = (pts[b], vals[b]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = c - g * (c - a);
    let mut x2 = a + g * (c - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..40 {
        if !(f2 < f1) {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - g * (c - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (c - a);
            f2 = f(x2);
        }
        if (c - a).abs() < 1e-6 {
            break;
        }
    }
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v.is_finite() && v < best_v {
            best_x = x;
            best_v = v;
        }
    }
    best_x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_minimum() {
        let x = minimise_log(-5.0, 5.0, 30, |x| (x - 1.234).powi(2));
        assert!((x - 1.234).abs() < 1e-5);
    }

    #[test]
    fn skips_infinite_region() {
        let x = minimise_log(-5.0, 5.0, 30, |x| if x < 0.0 { f64::INFINITY } else { x });
        assert!(x >= 0.0 && x < 0.4);
    }
}
