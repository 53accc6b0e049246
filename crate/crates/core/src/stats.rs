//! Small descriptive-statistics toolkit: moments, quantiles, goodness of fit, R-hat.

use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Sample quantile by linear interpolation between order statistics
/// (the "type 7" rule: position `(n - 1) q` in the sorted sample).
///
/// `sorted` must be sorted ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Equal-tailed interval with tail mass `(1 - level) / 2` on each side.
pub fn equal_tailed(xs: &[f64], level: f64) -> (f64, f64) {
    let s = sorted_copy(xs);
    let tail = 0.5 * (1.0 - level);
    (quantile_sorted(&s, tail), quantile_sorted(&s, 1.0 - tail))
}

/// One-sample Kolmogorov–Smirnov distance between the empirical CDF of `xs` and `cdf`.
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let s = sorted_copy(xs);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        let above = (i + 1) as f64 / n - f;
        let below = f - i as f64 / n;
        d.max(above).max(below)
    })
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let a = sorted_copy(a);
    let b = sorted_copy(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0_f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Pearson χ² test that integer ranks in `0..=max_rank` are uniform, using
/// `bins` equal-width bins. Returns `(statistic, p_value)`.
pub fn rank_uniformity_chi2(ranks: &[usize], max_rank: usize, bins: usize) -> (f64, f64) {
    let levels = max_rank + 1;
    assert!(
        levels % bins == 0,
        "bins must divide the number of rank levels"
    );
    let per_bin = levels / bins;
    let mut counts = vec![0usize; bins];
    for &r in ranks {
        counts[(r / per_bin).min(bins - 1)] += 1;
    }
    let expected = ranks.len() as f64 / bins as f64;
    let stat = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum::<f64>();
    let dist = ChiSquared::new((bins - 1) as f64).expect("df > 0");
    (stat, 1.0 - dist.cdf(stat))
}

/// Split-R̂ (Gelman et al.) over equal-length chains, each split in half.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let half = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    if half < 2 {
        return f64::NAN;
    }
    let pieces: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[half..2 * half]])
        .collect();
    let m = pieces.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = pieces.iter().map(|p| mean(p)).collect();
    let grand = mean(&means);
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = pieces.iter().map(|p| variance(p)).sum::<f64>() / m;
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Ordinary least squares fit of `y = a + b x`; returns `(b, se(b), a)`.
pub fn simple_ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let se = if n > 2.0 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    (slope, se, intercept)
}

/// Slope of `ln y` on `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (b, se, _) = simple_ols(&lx, &ly);
    (b, se)
}
