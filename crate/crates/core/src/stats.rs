//! Small regression and rank-correlation helpers.

use crate::error::{LabError, Result};

/// Ordinary least squares fit `y = slope·x + intercept`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(LabError::input("regression needs at least two paired points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(LabError::input("regression abscissae are all equal"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Least-squares polynomial of degree `deg`; coefficients from the constant up.
pub fn polyfit(x: &[f64], y: &[f64], deg: usize) -> Result<Vec<f64>> {
    if x.len() != y.len() || x.len() <= deg {
        return Err(LabError::input(format!("degree {deg} fit needs at least {} paired points", deg + 1)));
    }
    // scale the abscissae to unit size before building the Vandermonde matrix
    let sc = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sc == 0.0 {
        return Err(LabError::input("regression abscissae are all zero"));
    }
    let a = nalgebra::DMatrix::from_fn(x.len(), deg + 1, |i, j| (x[i] / sc).powi(j as i32));
    let b = nalgebra::DVector::from_column_slice(y);
    let c = a.svd(true, true).solve(&b, 1e-14).map_err(|e| LabError::input(format!("polynomial fit failed: {e}")))?;
    Ok((0..=deg).map(|j| c[j] / sc.powi(j as i32)).collect())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(LabError::input("rank correlation needs at least two paired points"));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let m = (n + 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - m) * (b - m)).sum();
    let vx: f64 = rx.iter().map(|a| (a - m).powi(2)).sum();
    let vy: f64 = ry.iter().map(|a| (a - m).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyfit_recovers_a_quadratic() {
        let x = [3e-4, 1e-3, 3e-3, 1e-2];
        let y: Vec<f64> = x.iter().map(|e| 0.25 - 2.0 * e + 7.0 * e * e).collect();
        let c = polyfit(&x, &y, 2).unwrap();
        assert!((c[0] - 0.25).abs() < 1e-12 && (c[1] + 2.0).abs() < 1e-9 && (c[2] - 7.0).abs() < 1e-6, "{c:?}");
    }

    #[test]
    fn ols_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let (s, c) = ols(&x, &y).unwrap();
        assert!((s - 2.5).abs() < 1e-14 && (c + 1.0).abs() < 1e-14);
    }

    #[test]
    fn spearman_monotone() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.0, 8.0, 27.0, 64.0, 125.0];
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-14);
        let z = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert!((spearman(&x, &z).unwrap() + 1.0).abs() < 1e-14);
    }
}
