//! Reversible robust scaling and replicate-padded moving averages.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// IQR at or below this is treated as zero dispersion.
pub const DEGENERATE_IQR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustScaleParams {
    pub median: f64,
    /// Always positive; `1.0` when the fallback fired.
    pub iqr: f64,
    /// Set when the observed IQR was degenerate and centering only was applied.
    pub fallback: bool,
}

impl RobustScaleParams {
    pub const IDENTITY: RobustScaleParams = RobustScaleParams {
        median: 0.0,
        iqr: 1.0,
        fallback: false,
    };

    pub fn scale(&self, x: f64) -> f64 {
        (x - self.median) / self.iqr
    }

    pub fn unscale(&self, z: f64) -> f64 {
        z * self.iqr + self.median
    }
}

/// Quantile by linear interpolation between closest order statistics
/// (the "type 7" estimator). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn robust_params(values: &[f64]) -> RobustScaleParams {
    if values.is_empty() {
        return RobustScaleParams {
            fallback: true,
            ..RobustScaleParams::IDENTITY
        };
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = quantile_sorted(&sorted, 0.5);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    if iqr > DEGENERATE_IQR {
        RobustScaleParams {
            median,
            iqr,
            fallback: false,
        }
    } else {
        RobustScaleParams {
            median,
            iqr: 1.0,
            fallback: true,
        }
    }
}

/// `(x − median) / IQR`, with the parameters needed to invert it.
pub fn robust_scale(column: &[f64]) -> (Vec<f64>, RobustScaleParams) {
    let params = robust_params(column);
    (column.iter().map(|&x| params.scale(x)).collect(), params)
}

pub fn inverse_robust_scale(scaled: &[f64], params: &RobustScaleParams) -> Vec<f64> {
    scaled.iter().map(|&z| params.unscale(z)).collect()
}

/// Per-column robust scaling of a window that ignores structural padding.
///
/// Statistics for column `j` come from rows `valid_from[j]..`; rows before
/// that stay exactly zero in the output.
pub fn robust_scale_columns(
    input: ArrayView2<'_, f64>,
    valid_from: &[usize],
) -> Result<(Array2<f64>, Vec<RobustScaleParams>)> {
    let (l, k) = input.dim();
    if valid_from.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "{k} columns but {} padding offsets",
            valid_from.len()
        )));
    }
    let mut out = Array2::zeros((l, k));
    let mut params = Vec::with_capacity(k);
    for (j, &from) in valid_from.iter().enumerate() {
        let from = from.min(l);
        let col: Vec<f64> = input.column(j).iter().skip(from).copied().collect();
        let p = robust_params(&col);
        for t in from..l {
            out[[t, j]] = p.scale(input[[t, j]]);
        }
        params.push(p);
    }
    Ok((out, params))
}

/// Applies per-column parameters to a matrix with one column per parameter set.
pub fn scale_columns(matrix: ArrayView2<'_, f64>, params: &[RobustScaleParams]) -> Array2<f64> {
    let mut out = matrix.to_owned();
    for (mut col, p) in out.axis_iter_mut(Axis(1)).zip(params) {
        col.mapv_inplace(|x| p.scale(x));
    }
    out
}

pub fn unscale_columns(matrix: ArrayView2<'_, f64>, params: &[RobustScaleParams]) -> Array2<f64> {
    let mut out = matrix.to_owned();
    for (mut col, p) in out.axis_iter_mut(Axis(1)).zip(params) {
        col.mapv_inplace(|z| p.unscale(z));
    }
    out
}

pub fn clip(t: i64, a: i64, b: i64) -> Result<i64> {
    if a > b {
        return Err(Error::InvalidBounds { lo: a, hi: b });
    }
    Ok(t.clamp(a, b))
}

/// Centered moving average along the time axis with replicate padding.
///
/// `S[p, j] = (1/w) Σ_{r<w} M[clip(p + r − ⌊w/2⌋, 0, l−1), j]`. Any scale
/// `1 ≤ w ≤ l` is accepted; even scales lean one step to the past.
///
/// The mean is accumulated as offsets from the centre cell, which keeps
/// constant columns bit-exact.
pub fn moving_average(matrix: ArrayView2<'_, f64>, scale: usize) -> Result<Array2<f64>> {
    let (l, k) = matrix.dim();
    if scale == 0 {
        return Err(Error::InvalidConfig("moving-average scale must be ≥ 1".into()));
    }
    if scale > l {
        return Err(Error::ScaleTooLarge { scale, len: l });
    }
    if scale == 1 {
        return Ok(matrix.to_owned());
    }
    let half = (scale / 2) as i64;
    let last = l as i64 - 1;
    let w = scale as f64;
    let mut out = Array2::zeros((l, k));
    for j in 0..k {
        let col = matrix.column(j);
        for p in 0..l {
            let centre = col[p];
            let mut acc = 0.0;
            for r in 0..scale as i64 {
                acc += col[(p as i64 + r - half).clamp(0, last) as usize] - centre;
            }
            out[[p, j]] = centre + acc / w;
        }
    }
    Ok(out)
}

/// Moving-average scales, one per tower; the first is always 1 (identity).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SmoothScales(Vec<usize>);

impl SmoothScales {
    pub fn new(scales: Vec<usize>) -> Result<Self> {
        if scales.first() != Some(&1) {
            return Err(Error::InvalidConfig(format!(
                "smoothing scales must start with 1, got {scales:?}"
            )));
        }
        if scales.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidConfig(format!(
                "smoothing scales must be strictly increasing, got {scales:?}"
            )));
        }
        Ok(SmoothScales(scales))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Number of towers (`d + 1`).
    pub fn towers(&self) -> usize {
        self.0.len()
    }
}

impl Default for SmoothScales {
    fn default() -> Self {
        SmoothScales(vec![1, 3, 7, 14])
    }
}

impl TryFrom<Vec<usize>> for SmoothScales {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        SmoothScales::new(v)
    }
}

impl From<SmoothScales> for Vec<usize> {
    fn from(s: SmoothScales) -> Vec<usize> {
        s.0
    }
}
