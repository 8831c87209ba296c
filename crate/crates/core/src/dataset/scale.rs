use serde::{Deserialize, Serialize};

use super::panel::TimeSeriesPanel;
use crate::error::{Error, Result};

/// Floor applied to the interquartile range.
pub const IQR_FLOOR: f64 = 1e-8;

/// IQR of a standard normal; `IQR / NORMAL_IQR` estimates the std robustly.
pub const NORMAL_IQR: f64 = 1.348_979_500_392_163_5;

/// Quantile of already sorted data, linear interpolation between order
/// statistics at position `q * (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// `(median, IQR)` of `xs`, IQR not floored.
pub fn median_iqr(xs: &[f64]) -> (f64, f64) {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let med = quantile_sorted(&s, 0.5);
    (med, quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25))
}

/// Robust standard deviation estimate `IQR / 1.349`.
pub fn robust_std(xs: &[f64]) -> f64 {
    median_iqr(xs).1 / NORMAL_IQR
}

/// Per cell, per signal centring and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    /// `median[cell][signal]`.
    pub median: Vec<Vec<f64>>,
    /// `iqr[cell][signal]`, floored at [`IQR_FLOOR`].
    pub iqr: Vec<Vec<f64>>,
}

impl ScalerParams {
    pub fn fit(panel: &TimeSeriesPanel) -> Result<Self> {
        if panel.len() < 2 {
            return Err(Error::InvalidArgument("robust scaling needs T >= 2".into()));
        }
        let mut median = Vec::with_capacity(panel.num_cells());
        let mut iqr = Vec::with_capacity(panel.num_cells());
        for m in panel.cells() {
            let (meds, iqrs): (Vec<f64>, Vec<f64>) = m
                .rows()
                .into_iter()
                .map(|row| {
                    let (med, q) = median_iqr(&row.to_vec());
                    (med, q.max(IQR_FLOOR))
                })
                .unzip();
            median.push(meds);
            iqr.push(iqrs);
        }
        Ok(Self { median, iqr })
    }

    fn check(&self, panel: &TimeSeriesPanel) -> Result<()> {
        if self.median.len() != panel.num_cells()
            || self.median.iter().any(|m| m.len() != panel.num_signals())
        {
            return Err(Error::shape("scaler does not match panel".to_string()));
        }
        Ok(())
    }

    pub fn transform(&self, panel: &TimeSeriesPanel) -> Result<TimeSeriesPanel> {
        self.check(panel)?;
        let mut out = panel.clone();
        for c in 0..out.num_cells() {
            for (s, mut row) in out.cell_mut(c).rows_mut().into_iter().enumerate() {
                let (med, iqr) = (self.median[c][s], self.iqr[c][s]);
                row.mapv_inplace(|x| (x - med) / iqr);
            }
        }
        out.set_scaled(true);
        Ok(out)
    }

    pub fn inverse(&self, panel: &TimeSeriesPanel) -> Result<TimeSeriesPanel> {
        self.check(panel)?;
        let mut out = panel.clone();
        for c in 0..out.num_cells() {
            for (s, mut row) in out.cell_mut(c).rows_mut().into_iter().enumerate() {
                let (med, iqr) = (self.median[c][s], self.iqr[c][s]);
                row.mapv_inplace(|x| x * iqr + med);
            }
        }
        out.set_scaled(false);
        Ok(out)
    }
}

/// `x' = (x - median) / max(IQR, 1e-8)` per cell and signal.
pub fn robust_scale(panel: &TimeSeriesPanel) -> Result<(TimeSeriesPanel, ScalerParams)> {
    let params = ScalerParams::fit(panel)?;
    let scaled = params.transform(panel)?;
    Ok((scaled, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn panel(rows: &[&[f64]]) -> TimeSeriesPanel {
        let t = rows[0].len();
        let m = Array2::from_shape_fn((rows.len(), t), |(s, i)| rows[s][i]);
        TimeSeriesPanel::new(
            vec!["c".into()],
            (0..rows.len()).map(|i| format!("s{i}")).collect(),
            (0..t as i64).collect(),
            vec![m],
        )
        .unwrap()
    }

    #[test]
    fn constant_maps_to_zero() {
        let (p, params) = robust_scale(&panel(&[&[4.0; 6]])).unwrap();
        assert!(p.cell(0).iter().all(|&x| x == 0.0));
        assert_eq!(params.iqr[0][0], IQR_FLOOR);
    }

    #[test]
    fn median_maps_to_zero() {
        let (_, params) = robust_scale(&panel(&[&[1.0, 2.0, 3.0, 100.0]])).unwrap();
        assert_eq!(params.median[0][0], 2.5);
        // quartiles at positions 0.75 and 2.25: 1.75 and 27.25
        assert_eq!(params.iqr[0][0], 25.5);
    }

    #[test]
    fn scaled_has_unit_iqr() {
        let xs: Vec<f64> = (0..101)
            .map(|i| ((i * 37) % 101) as f64 * 0.7 - 3.0)
            .collect();
        let (p, _) = robust_scale(&panel(&[&xs])).unwrap();
        let (med, iqr) = median_iqr(&p.cell(0).row(0).to_vec());
        assert!(med.abs() < 1e-12);
        assert!((iqr - 1.0).abs() < 1e-12);
        assert!(p.is_scaled());
    }

    #[test]
    fn needs_two_points() {
        assert!(robust_scale(&panel(&[&[1.0]])).is_err());
    }
}
