//! Z-score thresholding and the generalized ESD test on one series.

use log::warn;

use super::stats::t_quantile;
use crate::error::{Error, Result};

/// Consistency factor turning a MAD into a normal-scale std estimate.
pub const MAD_SCALE: f64 = 1.4826;

/// Compensated (Neumaier) accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct Accum {
    sum: f64,
    comp: f64,
}

impl Accum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Mean and sample standard deviation (two-pass).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// `|x - mean| / std` per point, or `None` when the std is zero.
pub fn zscore_scores(series: &[f64]) -> Option<Vec<f64>> {
    if series.len() < 2 {
        return None;
    }
    let (mean, std) = mean_std(series);
    if !(std > 0.0) {
        return None;
    }
    Some(series.iter().map(|x| (x - mean).abs() / std).collect())
}

/// Flags points whose z-score strictly exceeds `threshold`.
pub fn zscore_detect(series: &[f64], threshold: f64) -> Vec<bool> {
    match zscore_scores(series) {
        Some(z) => z.into_iter().map(|v| v > threshold).collect(),
        None => vec![false; series.len()],
    }
}

/// Critical value of the `i`-th (1-based) ESD step on `n` points.
pub fn esd_critical(n: usize, i: usize, alpha: f64) -> Result<f64> {
    if i == 0 || n < i + 2 {
        return Err(Error::InvalidArgument(format!(
            "ESD step {i} undefined for {n} points"
        )));
    }
    let rem = (n - i) as f64;
    let p = 1.0 - alpha / (2.0 * (rem + 1.0));
    let t = t_quantile(p, rem - 1.0)?;
    Ok(rem * t / ((rem - 1.0 + t * t) * (rem + 1.0)).sqrt())
}

/// Full trace of one generalized ESD run.
#[derive(Debug, Clone, PartialEq)]
pub struct EsdOutcome {
    /// Original indices in removal order.
    pub removed: Vec<usize>,
    pub r: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Number of outliers declared (prefix of `removed`).
    pub n_outliers: usize,
    pub flags: Vec<bool>,
    /// `R_i` for removed points, deviation under the last statistics otherwise.
    pub scores: Vec<f64>,
}

pub fn validate_esd(n: usize, alpha: f64, k_max: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ESD alpha {alpha} outside (0, 1)"
        )));
    }
    if n <= k_max + 2 {
        return Err(Error::InvalidArgument(format!(
            "ESD needs more than k_max + 2 = {} points, got {n}",
            k_max + 2
        )));
    }
    Ok(())
}

/// Generalized ESD test.
///
/// Sorts once; the most extreme remaining point is always at one end of the
/// sorted range, so each step only moves one pointer. Classical statistics
/// come from running compensated sums, robust ones from the sorted range.
/// Ties in deviation go to the smaller original index.
pub fn esd_test(series: &[f64], alpha: f64, k_max: usize, robust: bool) -> Result<EsdOutcome> {
    let n = series.len();
    validate_esd(n, alpha, k_max)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| series[a].total_cmp(&series[b]).then(a.cmp(&b)));
    let shift = series[order[n / 2]];
    let (mut sum, mut sumsq) = (Accum::default(), Accum::default());
    for &x in series {
        let y = x - shift;
        sum.add(y);
        sumsq.add(y * y);
    }
    let (mut lo, mut hi) = (0usize, n);
    let mut removed = Vec::with_capacity(k_max);
    let mut r = Vec::with_capacity(k_max);
    let mut lambda = Vec::with_capacity(k_max);
    let mut last = (f64::NAN, 0.0);
    let mut warned = false;
    for i in 1..=k_max {
        let m = hi - lo;
        let classical = || {
            let mf = m as f64;
            let s = sum.value();
            let var = ((sumsq.value() - s * s / mf) / (mf - 1.0)).max(0.0);
            (shift + s / mf, var.sqrt())
        };
        let (center, scale) = if robust {
            let vals: Vec<f64> = order[lo..hi].iter().map(|&j| series[j]).collect();
            let (med, mad) = sorted_median_mad(&vals);
            if mad > 0.0 {
                (med, MAD_SCALE * mad)
            } else {
                if !warned {
                    warn!("MAD is zero; ESD step {i} falls back to mean and standard deviation");
                    warned = true;
                }
                classical()
            }
        } else {
            classical()
        };
        last = (center, scale);
        if !(scale > 0.0) {
            break;
        }
        let (x_lo, x_hi) = (series[order[lo]], series[order[hi - 1]]);
        let (d_lo, d_hi) = ((x_lo - center).abs(), (x_hi - center).abs());
        let run = top_run_start(&order, series, lo, hi);
        let take_low = d_lo > d_hi || (d_lo == d_hi && order[lo] < order[run]);
        let idx = if take_low {
            lo += 1;
            order[lo - 1]
        } else {
            order[run..hi].rotate_left(1);
            hi -= 1;
            order[hi]
        };
        let y = series[idx] - shift;
        sum.add(-y);
        sumsq.add(-(y * y));
        removed.push(idx);
        r.push(d_lo.max(d_hi) / scale);
        lambda.push(esd_critical(n, i, alpha)?);
    }
    let n_outliers = (0..r.len())
        .rev()
        .find(|&i| r[i] > lambda[i])
        .map_or(0, |i| i + 1);
    let mut flags = vec![false; n];
    for &j in &removed[..n_outliers] {
        flags[j] = true;
    }
    let (center, scale) = last;
    let mut scores: Vec<f64> = series
        .iter()
        .map(|x| {
            if scale > 0.0 {
                (x - center).abs() / scale
            } else {
                0.0
            }
        })
        .collect();
    for (&j, &ri) in removed.iter().zip(&r) {
        scores[j] = ri;
    }
    Ok(EsdOutcome {
        removed,
        r,
        lambda,
        n_outliers,
        flags,
        scores,
    })
}

pub fn esd_detect(series: &[f64], alpha: f64, k_max: usize, robust: bool) -> Result<Vec<bool>> {
    Ok(esd_test(series, alpha, k_max, robust)?.flags)
}

/// First position of the run of values equal to the top of `order[lo..hi]`;
/// that run is kept in increasing index order.
fn top_run_start(order: &[usize], series: &[f64], lo: usize, hi: usize) -> usize {
    let top = series[order[hi - 1]];
    let mut k = hi - 1;
    while k > lo && series[order[k - 1]] == top {
        k -= 1;
    }
    k
}

/// Median and MAD of an ascending slice.
fn sorted_median_mad(vals: &[f64]) -> (f64, f64) {
    let m = vals.len();
    let med = if m % 2 == 1 {
        vals[m / 2]
    } else {
        0.5 * (vals[m / 2 - 1] + vals[m / 2])
    };
    // Deviations grow leftwards from the split on one side, rightwards on the other.
    let split = vals.partition_point(|&v| v < med);
    let (mut l, mut r) = (split, split);
    let mut next = || {
        let dl = if l > 0 { Some(med - vals[l - 1]) } else { None };
        let dr = if r < m { Some(vals[r] - med) } else { None };
        match (dl, dr) {
            (Some(a), Some(b)) if a <= b => {
                l -= 1;
                a
            }
            (Some(a), None) => {
                l -= 1;
                a
            }
            (_, Some(b)) => {
                r += 1;
                b
            }
            (None, None) => unreachable!("walk stays within the slice"),
        }
    };
    for _ in 0..(m - 1) / 2 {
        next();
    }
    let mid = next();
    let mad = if m % 2 == 1 {
        mid
    } else {
        0.5 * (mid + next())
    };
    (med, mad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zscore_examples() {
        assert!(zscore_detect(&[0.0; 10], 3.0).iter().all(|&f| !f));
        let mut xs = vec![0.0; 100];
        xs[42] = 10.0;
        let z = zscore_scores(&xs).unwrap();
        assert!((z[42] - 9.9).abs() < 1e-12);
        let flags = zscore_detect(&xs, 3.0);
        assert_eq!(flags.iter().filter(|&&f| f).count(), 1);
        assert!(flags[42]);
    }

    #[test]
    fn zscore_threshold_is_strict() {
        // mean 0, sample std 1 for [-1, 0, 1]: z of the ends is exactly 1
        let xs = [-1.0, 0.0, 1.0];
        assert!(zscore_detect(&xs, 1.0).iter().all(|&f| !f));
        assert_eq!(zscore_detect(&xs, 0.999), vec![true, false, true]);
    }

    #[test]
    fn median_mad_small() {
        assert_eq!(sorted_median_mad(&[1.0, 2.0, 3.0, 4.0, 100.0]), (3.0, 1.0));
        assert_eq!(sorted_median_mad(&[1.0, 2.0, 3.0, 4.0]), (2.5, 1.0));
        assert_eq!(sorted_median_mad(&[5.0, 5.0, 5.0, 9.0]), (5.0, 0.0));
    }

    #[test]
    fn constant_series_no_flags() {
        for robust in [false, true] {
            let out = esd_test(&[3.0; 20], 0.05, 4, robust).unwrap();
            assert!(out.flags.iter().all(|&f| !f));
        }
    }

    #[test]
    fn esd_rejects_short_series() {
        assert!(esd_detect(&[1.0, 2.0, 3.0], 0.05, 1, false).is_err());
        assert!(esd_detect(&[1.0; 10], 1.5, 1, false).is_err());
    }

    #[test]
    fn rosner_textbook_critical_values() {
        // n = 54, alpha = 0.05: tabulated lambda_1 = 3.159, lambda_10 = 3.085
        assert!((esd_critical(54, 1, 0.05).unwrap() - 3.159).abs() < 5e-4);
        assert!((esd_critical(54, 10, 0.05).unwrap() - 3.085).abs() < 5e-4);
    }

    #[test]
    fn tie_goes_to_smaller_index() {
        let mut xs = vec![0.0; 30];
        for (i, x) in xs.iter_mut().enumerate() {
            *x = ((i * 7) % 5) as f64 * 0.1;
        }
        xs[3] = 9.0;
        xs[20] = 9.0;
        let out = esd_test(&xs, 0.05, 3, false).unwrap();
        assert_eq!(&out.removed[..2], &[3, 20]);
    }
}
