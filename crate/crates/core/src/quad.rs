//! Quadrature rules shared by the numerical modules.

use crate::error::{LabError, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let h = 0.5 * (b - a);
        let c = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(c + h * x)).sum::<f64>() * h
    }

    pub fn integrate_complex<F: FnMut(f64) -> Complex64>(&self, mut f: F, a: f64, b: f64) -> Complex64 {
        let h = 0.5 * (b - a);
        let c = 0.5 * (a + b);
        let mut acc = Complex64::new(0.0, 0.0);
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += f(c + h * x) * w;
        }
        acc * h
    }

    /// Composite rule with `segments` equal panels.
    pub fn composite<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64, segments: usize) -> f64 {
        let h = (b - a) / segments as f64;
        (0..segments).map(|k| self.integrate(&mut f, a + k as f64 * h, a + (k + 1) as f64 * h)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive Simpson quadrature with an absolute tolerance.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<f64> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut failed = false;
    let v = simpson_rec(&mut f, a, b, fa, fm, fb, whole, tol, max_depth, &mut failed);
    if failed || !v.is_finite() {
        return Err(LabError::Quadrature(format!(
            "adaptive Simpson on [{a}, {b}] exceeded depth {max_depth} at tolerance {tol:e}"
        )));
    }
    Ok(v)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    failed: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *failed = true;
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, failed)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, failed)
}

/// Double-exponential (tanh–sinh) quadrature on [a, b] for complex integrands
/// with integrable endpoint singularities.
///
/// The integrand receives `(x, x − a, b − x)` so that factors singular at an
/// endpoint can be evaluated from the exact distance instead of a cancelled
/// difference. Returns the value and the change between the last two levels.
pub fn tanh_sinh<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<(Complex64, f64)>
where
    F: FnMut(f64, f64, f64) -> Complex64,
{
    let half = 0.5 * (b - a);
    // Wide enough that the node spacing reaches the smallest doubles, which
    // strong endpoint singularities such as x^-0.9 need.
    let t_max = 6.5;
    let mut h = 0.5;
    let node = |t: f64| -> (f64, f64) {
        let u = 0.5 * PI * t.sinh();
        // 1 − tanh(u), computed without cancellation.
        let comp = 2.0 / (1.0 + (2.0 * u).exp());
        let w = 0.5 * PI * t.cosh() / (u.cosh() * u.cosh());
        (comp, w)
    };
    let eval = |t: f64, f: &mut F| -> Complex64 {
        let (comp, w) = node(t);
        if w == 0.0 || comp == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let d = half * comp;
        let right = f(b - d, b - a - d, d);
        let left = f(a + d, d, b - a - d);
        (right + left) * w
    };
    let (_, w0) = node(0.0);
    let mut sum = f(a + half, half, half) * w0;
    let mut k = 1;
    while k as f64 * h <= t_max {
        sum += eval(k as f64 * h, &mut f);
        k += 1;
    }
    let mut estimate = sum * h * half;
    for _level in 0..10 {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= t_max {
            sum += eval(k as f64 * h, &mut f);
            k += 2;
        }
        let next = sum * h * half;
        let change = (next - estimate).norm();
        estimate = next;
        if change <= tol * estimate.norm().max(1e-300) {
            return Ok((estimate, change));
        }
    }
    Err(LabError::Quadrature(format!("tanh-sinh on [{a}, {b}] did not reach relative tolerance {tol:e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(8);
        // degree 15 is integrated exactly by 8 nodes
        let v = gl.integrate(|x| x.powi(14) + 3.0 * x.powi(3), -1.0, 1.0);
        assert!((v - 2.0 / 15.0).abs() < 1e-14);
        let w: f64 = gl.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
        let gl64 = GaussLegendre::new(64);
        let s4 = gl64.integrate(|x| x.sin().powi(4), 0.0, PI);
        assert!((s4 - 3.0 * PI / 8.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_simpson_matches_closed_form() {
        let v = adaptive_simpson(|x| x.exp(), 0.0, 1.0, 1e-12, 40).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        // ∫_0^1 x^{-0.9} dx = 10
        let (v, _) = tanh_sinh(|_, da, _| Complex64::new(da.powf(-0.9), 0.0), 0.0, 1.0, 1e-12).unwrap();
        assert!((v.re - 10.0).abs() < 1e-8, "{v}");
    }
}
