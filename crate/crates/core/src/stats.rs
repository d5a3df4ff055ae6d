//! Small statistics kit shared by the estimators.

use std::collections::BTreeMap;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// A binomial frequency with its Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proportion {
    pub hits: u64,
    pub trials: u64,
}

impl Proportion {
    pub fn new(hits: u64, trials: u64) -> Self {
        Self { hits, trials }
    }

    pub fn p(&self) -> f64 {
        if self.trials == 0 {
            return f64::NAN;
        }
        self.hits as f64 / self.trials as f64
    }

    pub fn se(&self) -> f64 {
        let p = self.p();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    pub fn wilson(&self) -> (f64, f64) {
        wilson_interval(self.hits, self.trials, 1.96)
    }
}

pub fn wilson_interval(hits: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Result of a weighted straight-line fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub points: usize,
}

/// Weighted least squares with weights read as inverse variances, so the
/// slope standard error is model based rather than residual based.
pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<LineFit> {
    assert_eq!(x.len(), y.len());
    assert_eq!(x.len(), w.len());
    if x.len() < 2 {
        return None;
    }
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    let slope = sxy / sxx;
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        slope_se: (1.0 / sxx).sqrt(),
        points: x.len(),
    })
}

/// Ordinary least squares for `y ~ X beta`; columns of `design` are
/// regressors. Returns `beta`, or `None` when the normal equations are
/// singular.
pub fn least_squares(design: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let p = design.len();
    let n = y.len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            a[i][j] = (0..n).map(|k| design[i][k] * design[j][k]).sum();
        }
        a[i][p] = (0..n).map(|k| design[i][k] * y[k]).sum();
    }
    // Gauss-Jordan with partial pivoting
    for col in 0..p {
        let piv = (col..p).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v /= d;
        }
        for r in 0..p {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for c in col..=p {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    Some(a.iter().map(|row| row[p]).collect())
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
///
/// Samples may contain `f64::INFINITY` for censored observations; ties are
/// handled by stepping through distinct values, which keeps the test
/// conservative for discrete data.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let v = a[i].min(b[j]);
        while i < na && a[i] <= v {
            i += 1;
        }
        while j < nb && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Total-variation distance between two discrete laws keyed by outcome.
pub fn total_variation<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut tv = 0.0;
    for (k, pv) in p {
        tv += (pv - q.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, qv) in q {
        if !p.contains_key(k) {
            tv += qv.abs();
        }
    }
    0.5 * tv
}

pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let num: f64 = xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    let den: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_p_and_is_clamped() {
        let (lo, hi) = wilson_interval(0, 100, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert!(lo < 0.5 && hi > 0.5);
        assert!((hi - lo - 0.19).abs() < 0.01);
    }

    #[test]
    fn weighted_fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 1.5 - 0.25 * v).collect();
        let f = weighted_line_fit(&x, &y, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((f.slope + 0.25).abs() < 1e-12);
        assert!((f.intercept - 1.5).abs() < 1e-12);
    }

    #[test]
    fn least_squares_three_columns() {
        let n: Vec<f64> = (1..=10).map(f64::from).collect();
        let design = vec![vec![1.0; 10], n.iter().map(|v| v.ln()).collect(), n.clone()];
        let y: Vec<f64> = n.iter().map(|v| 2.0 - 3.0 * v.ln() - 0.1 * v).collect();
        let beta = least_squares(&design, &y).unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-8);
        assert!((beta[1] + 3.0).abs() < 1e-8);
        assert!((beta[2] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..1000).map(|i| f64::from(i % 37)).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
        let b: Vec<f64> = a.iter().map(|v| v + 10.0).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert!(d > 0.2);
        assert!(p < 1e-6);
    }

    #[test]
    fn kolmogorov_known_value() {
        // 1.3581 is the classical 5% critical point
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn tv_of_disjoint_laws_is_one() {
        let p = BTreeMap::from([(0, 0.5), (1, 0.5)]);
        let q = BTreeMap::from([(2, 1.0)]);
        assert!((total_variation(&p, &q) - 1.0).abs() < 1e-15);
        assert_eq!(total_variation(&p, &p), 0.0);
    }
}
