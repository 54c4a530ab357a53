use serde::{Deserialize, Serialize};

use super::{quantile_sorted, AnalysisError};

/// Per-window amplitude histograms of a decay population, each column
/// normalized to unit mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityChart {
    pub windows: usize,
    pub bins: usize,
    pub range: (f64, f64),
    /// Row-major `windows x bins`.
    pub grid: Vec<f64>,
}

impl DensityChart {
    pub fn column(&self, window: usize) -> &[f64] {
        &self.grid[window * self.bins..(window + 1) * self.bins]
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        let (lo, hi) = self.range;
        (0..=self.bins)
            .map(|i| lo + (hi - lo) * i as f64 / self.bins as f64)
            .collect()
    }

    /// Per window, the number of bins spanned by the central `mass` of the
    /// column (trimming `(1 − mass) / 2` from each tail).
    pub fn support(&self, mass: f64) -> Vec<usize> {
        let tail = (1.0 - mass) / 2.0;
        (0..self.windows)
            .map(|j| {
                let col = self.column(j);
                let mut acc = 0.0;
                let mut first = None;
                let mut last = 0;
                for (i, &p) in col.iter().enumerate() {
                    acc += p;
                    if first.is_none() && acc > tail {
                        first = Some(i);
                    }
                    if acc - p < 1.0 - tail {
                        last = i;
                    }
                }
                first.map_or(0, |f| last.saturating_sub(f) + 1)
            })
            .collect()
    }
}

/// Amplitude interval holding the central `coverage` of all window values.
pub fn reference_range<X: AsRef<[f64]>>(decays: &[X], coverage: f64) -> Result<(f64, f64), AnalysisError> {
    let mut values: Vec<f64> = decays.iter().flat_map(|d| d.as_ref().iter().copied()).collect();
    if values.is_empty() {
        return Err(AnalysisError::TooFew {
            what: "decays",
            required: 1,
            found: 0,
        });
    }
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - coverage) / 2.0;
    let lo = quantile_sorted(&values, tail);
    let mut hi = quantile_sorted(&values, 1.0 - tail);
    if hi <= lo {
        hi = lo + 1.0;
    }
    Ok((lo, hi))
}

/// Bins every window of every decay. Values outside `range` are counted in
/// the edge bins so each non-empty column sums to one.
pub fn density_chart<X: AsRef<[f64]>>(decays: &[X], bins: usize, range: (f64, f64)) -> Result<DensityChart, AnalysisError> {
    let (lo, hi) = range;
    if bins == 0 || !(hi > lo) {
        return Err(AnalysisError::Invalid(format!(
            "need bins >= 1 and a non-empty range, got {bins} bins over [{lo}, {hi}]"
        )));
    }
    let windows = decays.first().map_or(0, |d| d.as_ref().len());
    let mut grid = vec![0.0; windows * bins];
    for d in decays {
        let d = d.as_ref();
        if d.len() != windows {
            return Err(AnalysisError::LengthMismatch(windows, d.len()));
        }
        for (j, &v) in d.iter().enumerate() {
            let b = ((v - lo) / (hi - lo) * bins as f64).floor();
            let b = if b.is_nan() { 0 } else { b.clamp(0.0, (bins - 1) as f64) as usize };
            grid[j * bins + b] += 1.0;
        }
    }
    if !decays.is_empty() {
        let n = decays.len() as f64;
        grid.iter_mut().for_each(|v| *v /= n);
    }
    Ok(DensityChart {
        windows,
        bins,
        range,
        grid,
    })
}

/// Mean absolute cell difference between two charts of equal shape.
pub fn dlc_difference(a: &DensityChart, b: &DensityChart) -> Result<f64, AnalysisError> {
    if a.windows != b.windows || a.bins != b.bins || a.range != b.range {
        return Err(AnalysisError::ChartShape);
    }
    let total: f64 = a.grid.iter().zip(&b.grid).map(|(x, y)| (x - y).abs()).sum();
    Ok(total / a.grid.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn population(n: usize, offset: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..5).map(|j| offset + ((i * 7 + j * 3) % 10) as f64).collect())
            .collect()
    }

    #[test]
    fn columns_sum_to_one() {
        let chart = density_chart(&population(100, 0.0), 20, (0.0, 10.0)).unwrap();
        for j in 0..chart.windows {
            let s: f64 = chart.column(j).iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
        // out-of-range values land in edge bins
        let chart = density_chart(&population(100, 50.0), 20, (0.0, 10.0)).unwrap();
        assert_eq!(chart.column(0)[19], 1.0);
    }

    #[test]
    fn self_difference_is_zero_and_symmetric() {
        let a = density_chart(&population(50, 0.0), 10, (0.0, 12.0)).unwrap();
        let b = density_chart(&population(80, 1.5), 10, (0.0, 12.0)).unwrap();
        assert_eq!(dlc_difference(&a, &a).unwrap(), 0.0);
        assert_eq!(dlc_difference(&a, &b).unwrap(), dlc_difference(&b, &a).unwrap());
        let c = density_chart(&population(50, 0.0), 11, (0.0, 12.0)).unwrap();
        assert!(dlc_difference(&a, &c).is_err());
    }

    #[test]
    fn disjoint_point_masses_differ_by_two_over_bins() {
        let bins = 40;
        let a = density_chart(&vec![vec![1.0; 6]; 10], bins, (0.0, 10.0)).unwrap();
        let b = density_chart(&vec![vec![7.0; 6]; 25], bins, (0.0, 10.0)).unwrap();
        let diff = dlc_difference(&a, &b).unwrap();
        assert!((diff - 2.0 / bins as f64).abs() < 1e-15);
    }

    #[test]
    fn reference_range_trims_tails() {
        let decays: Vec<Vec<f64>> = (0..1000).map(|i| vec![i as f64]).collect();
        let (lo, hi) = reference_range(&decays, 0.995).unwrap();
        assert!((lo - 2.4975).abs() < 1e-9 && (hi - 996.5025).abs() < 1e-9, "{lo} {hi}");
    }

    #[test]
    fn support_grows_with_spread() {
        let narrow: Vec<Vec<f64>> = (0..200).map(|i| vec![5.0 + (i % 10) as f64 * 0.1]).collect();
        let wide: Vec<Vec<f64>> = (0..200).map(|i| vec![5.0 + (i % 10) as f64 * 0.4]).collect();
        let a = density_chart(&narrow, 50, (0.0, 10.0)).unwrap();
        let b = density_chart(&wide, 50, (0.0, 10.0)).unwrap();
        assert!(b.support(0.99)[0] > a.support(0.99)[0]);
        let point = density_chart(&vec![vec![3.3]; 10], 50, (0.0, 10.0)).unwrap();
        assert_eq!(point.support(0.99), vec![1]);
    }
}
