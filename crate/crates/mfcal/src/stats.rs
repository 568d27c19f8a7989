//! Small univariate summaries used by the calibration and decision
//! reports. Quantiles follow the linear-interpolation convention of
//! most statistical software (R's default, type 7).

use crate::error::{Error, Result};

/// Linear-interpolation quantile of `data` at probability `p`.
///
/// `data` need not be sorted; a sorted copy is taken internally. For a
/// sorted sample x_0..x_{n-1} the estimate is x_h interpolated at
/// h = p (n - 1).
pub fn quantile(data: &[f64], p: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::domain("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!(
            "quantile probability must lie in [0, 1], got {p}"
        )));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, p))
}

/// Quantile of an already-sorted sample.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = lo + 1;
    if hi >= n {
        return sorted[n - 1];
    }
    let w = h - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

pub fn median(data: &[f64]) -> Result<f64> {
    quantile(data, 0.5)
}

pub fn mean(data: &[f64]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::domain("mean of an empty sample"));
    }
    Ok(data.iter().sum::<f64>() / data.len() as f64)
}

/// Sample standard deviation (n - 1 denominator); zero for n = 1.
pub fn std_dev(data: &[f64]) -> Result<f64> {
    let m = mean(data)?;
    let n = data.len();
    if n == 1 {
        return Ok(0.0);
    }
    let ss: f64 = data.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((ss / (n - 1) as f64).sqrt())
}

/// Silverman's rule-of-thumb bandwidth for a Gaussian smoothing
/// kernel: 0.9 min(sd, IQR/1.34) n^(-1/5). Returns zero for samples
/// with no spread, which callers treat as "resample without noise".
pub fn silverman_bandwidth(data: &[f64]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::domain("bandwidth of an empty sample"));
    }
    let sd = std_dev(data)?;
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * (data.len() as f64).powf(-0.2))
}
