//! Small statistical helpers: moments, regression slope, chi-square goodness
//! of fit and the one-sided paired t-test.

use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n - 1` denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Bins after merging.
    pub bins: usize,
}

/// Pearson goodness of fit of `observed` counts against `probs`.
///
/// Adjacent bins are merged left to right until each has expected count at
/// least 5; a short tail is folded into the last full bin. Bins with zero
/// probability must be empty, otherwise the statistic is infinite.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> ChiSquareResult {
    assert_eq!(observed.len(), probs.len());
    let n: u64 = observed.iter().sum();
    let total = n as f64;
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    let mut impossible = false;
    for (&o, &p) in observed.iter().zip(probs) {
        if p <= 0.0 {
            impossible |= o > 0;
            continue;
        }
        obs += o as f64;
        exp += p * total;
        if exp >= 5.0 {
            merged.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 {
        match merged.last_mut() {
            Some(last) => {
                last.0 += obs;
                last.1 += exp;
            }
            None => merged.push((obs, exp)),
        }
    }
    let bins = merged.len();
    let dof = bins.saturating_sub(1);
    if impossible {
        return ChiSquareResult { statistic: f64::INFINITY, dof, p_value: 0.0, bins };
    }
    let statistic: f64 = merged.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let p_value = if dof == 0 { 1.0 } else { ChiSquared::new(dof as f64).expect("positive dof").sf(statistic) };
    ChiSquareResult { statistic, dof, p_value, bins }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedTTest {
    pub pairs: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub t: f64,
    /// `P(T >= t)` under the null of zero mean difference.
    pub p_one_sided: f64,
}

/// One-sided test of `mean(a - b) > 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> PairedTTest {
    assert_eq!(a.len(), b.len());
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len();
    let (m, sd) = (mean(&diffs), std_dev(&diffs));
    let t = m / (sd / (n as f64).sqrt());
    let p_one_sided = if n < 2 || !t.is_finite() {
        if t == f64::INFINITY {
            0.0
        } else {
            1.0
        }
    } else {
        StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive dof").sf(t)
    };
    PairedTTest { pairs: n, mean_diff: m, sd_diff: sd, t, p_one_sided }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| -2.0 * x + 1.0).collect();
        assert!((ols_slope(&xs, &ys) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_perfect_fit() {
        let r = chi_square_gof(&[25, 25, 50], &[0.25, 0.25, 0.5]);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.dof, 2);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_reference_value() {
        // (30-25)^2/25 + (20-25)^2/25 = 2 on 1 dof.
        let r = chi_square_gof(&[30, 20], &[0.5, 0.5]);
        assert!((r.statistic - 2.0).abs() < 1e-12);
        assert!((r.p_value - 0.157_299_207_050_285_1).abs() < 1e-9);
    }

    #[test]
    fn chi_square_merges_small_bins() {
        let r = chi_square_gof(&[48, 1, 1, 50], &[0.48, 0.01, 0.01, 0.5]);
        assert_eq!(r.bins, 2);
        let r = chi_square_gof(&[3, 0, 7], &[0.3, 0.0, 0.7]);
        assert_eq!(r.bins, 1);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn chi_square_rejects_impossible_bins() {
        let r = chi_square_gof(&[10, 1], &[1.0, 0.0]);
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn paired_t_reference() {
        // Differences 1, 2, 3: mean 2, sd 1, t = 2 sqrt(3) on 2 dof.
        let r = paired_t_test(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]);
        assert!((r.t - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        // Closed form for 2 dof: 0.5 (1 - t / sqrt(t^2 + 2)).
        let expect = 0.5 * (1.0 - (12.0f64 / 14.0).sqrt());
        assert!((r.p_one_sided - expect).abs() < 1e-9);
    }
}
