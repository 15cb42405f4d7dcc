//! Indicial computations on the model cusp: the function H, the Π₂ and Π₀
//! indicial forms (closed form and direct sphere quadrature), strip scans for
//! roots and the symbol constant B_d.

use crate::cusp::sphere_volume;
use crate::error::{LabError, Result};
use crate::quad::{tanh_sinh, GaussLegendre};
use crate::special::gamma_ratio;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

const QUAD_TOL: f64 = 1e-11;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn check_right(rho: Complex64) -> Result<()> {
    if !(rho.re > 0.0) || !rho.im.is_finite() {
        return Err(LabError::Domain(format!("H needs Re ρ > 0, got ρ = {rho}")));
    }
    Ok(())
}

fn check_strip(d: usize, rho: Complex64) -> Result<()> {
    if d == 0 {
        return Err(LabError::input("dimension d must be positive"));
    }
    if !(rho.re > 0.0 && rho.re < d as f64) || !rho.im.is_finite() {
        return Err(LabError::Domain(format!("ρ = {rho} is outside the strip 0 < Re ρ < {d}")));
    }
    Ok(())
}

/// `H(ρ) = √π Γ(ρ/2) / Γ((ρ+1)/2)`.
pub fn h_closed(rho: Complex64) -> Result<Complex64> {
    check_right(rho)?;
    Ok(PI.sqrt() * gamma_ratio(rho / 2.0, (rho + 1.0) / 2.0))
}

/// `H(ρ) = ∫ sin^ρ(φ_t) dt` along the model flow. With `φ̇ = sin φ` the time
/// integral becomes `∫₀^π sin^{ρ−1} φ dφ`, evaluated by tanh–sinh.
pub fn h_quadrature(rho: Complex64) -> Result<Complex64> {
    check_right(rho)?;
    let e = rho - 1.0;
    let (half, _) = tanh_sinh(|_, da, _| (e * da.sin().ln()).exp(), 0.0, PI / 2.0, QUAD_TOL)?;
    Ok(2.0 * half)
}

/// `|H(ρ) − H(ρ+2) − H(ρ)/(ρ+1)|` with the closed form.
pub fn h_identity_residual(rho: Complex64) -> Result<f64> {
    let h = h_closed(rho)?;
    Ok((h - h_closed(rho + 2.0)? - h / (rho + 1.0)).norm())
}

/// Mode-0 power-law data `y^ρ (a dy² + Σ c_ij dθ_i dθ_j)/y²` with `b = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct IndicialPoint {
    pub d: usize,
    pub rho: Complex64,
    pub a: Complex64,
    /// Row-major symmetric d × d matrix.
    pub c: Vec<Complex64>,
}

impl IndicialPoint {
    pub fn new(d: usize, rho: Complex64, a: Complex64, c: Vec<Complex64>) -> Result<Self> {
        check_strip(d, rho)?;
        if c.len() != d * d {
            return Err(LabError::input(format!("c must have {} entries, got {}", d * d, c.len())));
        }
        Ok(IndicialPoint { d, rho, a, c })
    }

    pub fn trace_c(&self) -> Complex64 {
        (0..self.d).map(|i| self.c[i * self.d + i]).sum()
    }

    /// `|a(ρ − d) + Tr c|`, zero for divergence-free data.
    pub fn solenoidal_defect(&self) -> f64 {
        (self.a * (self.rho - self.d as f64) + self.trace_c()).norm()
    }

    fn require_solenoidal(&self) -> Result<()> {
        let scale = 1.0 + self.a.norm() * (1.0 + self.rho.norm()) + self.c.iter().map(|v| v.norm()).sum::<f64>();
        if self.solenoidal_defect() > 1e-12 * scale {
            return Err(LabError::input(format!(
                "data is not solenoidal: |a(ρ−d) + Tr c| = {:.3e}",
                self.solenoidal_defect()
            )));
        }
        Ok(())
    }

    fn quadratic(&self, u: &[f64]) -> Complex64 {
        let d = self.d;
        let mut s = c(0.0);
        for i in 0..d {
            for j in 0..d {
                s += self.c[i * d + j] * u[i] * u[j];
            }
        }
        s
    }

    /// `Σ |c_ij|²`.
    pub fn c_norm_sq(&self) -> f64 {
        self.c.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// A direction in the solenoidal subspace: real `a` and a real trace-free
/// symmetric `c0`; at a given ρ the data is `c = c0 + a(d−ρ)/d · I`.
#[derive(Debug, Clone, Serialize)]
pub struct Probe {
    pub id: String,
    pub a: f64,
    pub c0: Vec<f64>,
}

impl Probe {
    pub fn at(&self, d: usize, rho: Complex64) -> Result<IndicialPoint> {
        if self.c0.len() != d * d {
            return Err(LabError::input(format!("probe {} does not have dimension {d}", self.id)));
        }
        let mut cm: Vec<Complex64> = self.c0.iter().map(|&v| c(v)).collect();
        let diag = self.a * (d as f64 - rho) / d as f64;
        for i in 0..d {
            cm[i * d + i] += diag;
        }
        IndicialPoint::new(d, rho, c(self.a), cm)
    }

    /// The a-dominant probe and, for d ≥ 2, trace-free diagonal and
    /// off-diagonal probes.
    pub fn family(d: usize) -> Vec<Probe> {
        let mut out = vec![Probe { id: "a".into(), a: 1.0, c0: vec![0.0; d * d] }];
        if d >= 2 {
            let mut diag = vec![0.0; d * d];
            diag[0] = 1.0;
            diag[d + 1] = -1.0;
            out.push(Probe { id: "c-diag".into(), a: 0.0, c0: diag });
            let mut off = vec![0.0; d * d];
            off[1] = 1.0;
            off[d] = 1.0;
            out.push(Probe { id: "c-off".into(), a: 0.0, c0: off.clone() });
            let mut mixed = off;
            mixed[0] = 0.5;
            mixed[d + 1] = -0.5;
            out.push(Probe { id: "mixed".into(), a: 0.8, c0: mixed });
        }
        out
    }
}

fn prefactor(d: usize, rho: Complex64) -> Complex64 {
    let df = d as f64;
    let cross = gamma_ratio(rho / 2.0, (rho + 1.0) / 2.0) * gamma_ratio((df - rho) / 2.0, (df + 1.0 - rho) / 2.0);
    PI * cross / ((rho + 1.0) * (df + 1.0 - rho))
}

/// Gamma cross-ratio prefactor `π Γ(ρ/2)Γ((d−ρ)/2) / ((ρ+1)(d+1−ρ) Γ((ρ+1)/2)Γ((d+1−ρ)/2))`.
pub fn pi2_prefactor(d: usize, rho: Complex64) -> Result<Complex64> {
    check_strip(d, rho)?;
    Ok(prefactor(d, rho))
}

/// The bracket `λ(ρ) + ρ(d−ρ) μ(ρ)` of the closed form, split into (λ, μ).
pub fn bracket_parts(p: &IndicialPoint) -> (f64, f64) {
    let df = p.d as f64;
    let a2 = p.a.norm_sqr();
    let dr2 = (df - p.rho).norm_sqr();
    let lambda = a2 * (1.0 + dr2 / df);
    let mu = a2 / df + a2 * dr2 / (df * (df + 2.0)) + 2.0 * p.c_norm_sq() / (df * (df + 2.0));
    (lambda, mu)
}

pub fn bracket(p: &IndicialPoint) -> Complex64 {
    let (l, m) = bracket_parts(p);
    l + p.rho * (p.d as f64 - p.rho) * m
}

/// Closed-form `(1/vol S^{d−1}) ⟨y^{−ρ} Π π₂* f, y^{−ρ} π₂* f⟩`.
pub fn pi2_indicial_form(p: &IndicialPoint) -> Result<Complex64> {
    check_strip(p.d, p.rho)?;
    p.require_solenoidal()?;
    Ok(prefactor(p.d, p.rho) * bracket(p))
}

/// Same expression without the strip and solenoidal checks, for scans that
/// leave the strip.
pub fn pi2_form_unchecked(p: &IndicialPoint) -> Complex64 {
    prefactor(p.d, p.rho) * bracket(p)
}

/// Nodes and weights of a rule on S^{d−1} exact for polynomials of degree ≤ 4.
fn sphere_rule(d: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    match d {
        1 => Ok(vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)]),
        2 => {
            let n = 8;
            Ok((0..n)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / n as f64;
                    (vec![t.cos(), t.sin()], 2.0 * PI / n as f64)
                })
                .collect())
        }
        3 => {
            let gl = GaussLegendre::new(4);
            let n = 8;
            let mut out = Vec::new();
            for (z, w) in gl.nodes.iter().zip(&gl.weights) {
                let r = (1.0 - z * z).sqrt();
                for k in 0..n {
                    let t = 2.0 * PI * k as f64 / n as f64;
                    out.push((vec![r * t.cos(), r * t.sin(), *z], w * 2.0 * PI / n as f64));
                }
            }
            Ok(out)
        }
        _ => Err(LabError::input(format!("direct sphere quadrature supports d ∈ {{1, 2, 3}}, got {d}"))),
    }
}

/// The pairing assembled from the flow integrals: `Π π₂* f` at `(y, φ, u)` is
/// `(y/sin φ)^ρ [a (H(ρ) − H(ρ+2)) + c(u,u) H(ρ+2)]` with both H values from
/// [`h_quadrature`], paired with `π₂* f` over S^d and divided by vol S^{d−1}.
pub fn pi2_indicial_direct(p: &IndicialPoint) -> Result<Complex64> {
    check_strip(p.d, p.rho)?;
    p.require_solenoidal()?;
    let rule = sphere_rule(p.d)?;
    let h0 = h_quadrature(p.rho)?;
    let h2 = h_quadrature(p.rho + 2.0)?;
    let qs: Vec<(Complex64, f64)> = rule.iter().map(|(u, w)| (p.quadratic(u), *w)).collect();
    let a = p.a;
    let e = c(p.d as f64 - 1.0) - p.rho;
    let integrand = |phi: f64, da: f64, db: f64| -> Complex64 {
        let s = da.min(db).sin();
        let (s2, c2) = (s * s, phi.cos().powi(2));
        let mut acc = c(0.0);
        for (q, w) in &qs {
            let pi_f = a * (h0 - h2) + q * h2;
            let f = a * c2 + q * s2;
            acc += pi_f * f.conj() * *w;
        }
        acc * (e * s.ln()).exp()
    };
    let (v, _) = tanh_sinh(integrand, 0.0, PI, QUAD_TOL)?;
    Ok(v / sphere_volume(p.d - 1))
}

/// `⟨y^{−ρ} Π π₀*(y^ρ), y^{−ρ} π₀*(y^ρ)⟩` for `a∞ = 1`.
pub fn pi0_indicial(d: usize, rho: Complex64) -> Result<Complex64> {
    check_strip(d, rho)?;
    let df = d as f64;
    Ok(PI * gamma_ratio(rho / 2.0, (rho + 1.0) / 2.0) * gamma_ratio((df - rho) / 2.0, (df - rho) / 2.0 + 0.5))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SymbolConstant {
    pub d: usize,
    pub b_d: f64,
    pub b_d_quadrature: f64,
    /// `2π / B_d`.
    pub factor: f64,
}

/// `B_d = ∫₀^π sin^{d+3} φ dφ` by the Wallis recursion and by quadrature.
pub fn symbol_constant(d: usize) -> Result<SymbolConstant> {
    if d == 0 {
        return Err(LabError::input("dimension d must be positive"));
    }
    let n = d + 3;
    let mut w = if n.is_multiple_of(2) { PI } else { 2.0 };
    let mut k = if n.is_multiple_of(2) { 2 } else { 3 };
    while k <= n {
        w *= (k - 1) as f64 / k as f64;
        k += 2;
    }
    let q = GaussLegendre::new(64).integrate(|x| x.sin().powi(n as i32), 0.0, PI);
    Ok(SymbolConstant { d, b_d: w, b_d_quadrature: q, factor: 2.0 * PI / w })
}

/// Rectangular grid in the ρ plane, inclusive of both ends.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StripGrid {
    pub re_min: f64,
    pub re_max: f64,
    pub im_max: f64,
    pub n_re: usize,
    pub n_im: usize,
}

impl StripGrid {
    pub fn standard(d: usize) -> Self {
        StripGrid { re_min: 0.05, re_max: d as f64 - 0.05, im_max: 20.0, n_re: 50, n_im: 50 }
    }

    pub fn points(&self) -> Vec<Complex64> {
        let lin = |a: f64, b: f64, n: usize, k: usize| {
            if n == 1 {
                0.5 * (a + b)
            } else {
                a + (b - a) * k as f64 / (n - 1) as f64
            }
        };
        let mut out = Vec::with_capacity(self.n_re * self.n_im);
        for i in 0..self.n_re {
            for j in 0..self.n_im {
                out.push(Complex64::new(
                    lin(self.re_min, self.re_max, self.n_re, i),
                    lin(-self.im_max, self.im_max, self.n_im, j),
                ));
            }
        }
        out
    }

    /// Clip the real range to the open strip; returns the warnings issued.
    pub fn clip_to_strip(&mut self, d: usize, margin: f64) -> Vec<String> {
        let mut warnings = Vec::new();
        if self.re_min < margin {
            warnings.push(format!("grid Re ρ min {} clipped to {margin}", self.re_min));
            self.re_min = margin;
        }
        let hi = d as f64 - margin;
        if self.re_max > hi {
            warnings.push(format!("grid Re ρ max {} clipped to {hi}", self.re_max));
            self.re_max = hi;
        }
        warnings
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
    pub probe: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub d: usize,
    pub min_modulus: f64,
    pub argmin: Complex64,
    pub argmin_probe: String,
    pub rows: Vec<ScanRow>,
}

/// Minimum of `|Π₂ form|` over a grid and a probe family. Points off the
/// open strip are evaluated without the domain checks; they are excluded
/// only where the form has a pole (Re ρ = d or a non-positive Gamma argument).
pub fn scan_roots(d: usize, grid: &StripGrid, probes: &[Probe]) -> Result<ScanReport> {
    if d == 0 {
        return Err(LabError::input("dimension d must be positive"));
    }
    if probes.is_empty() {
        return Err(LabError::input("scan needs at least one probe"));
    }
    let pts = grid.points();
    let rows: Vec<ScanRow> = pts
        .par_iter()
        .flat_map_iter(|&rho| {
            probes.iter().map(move |pr| {
                let mut cm: Vec<Complex64> = pr.c0.iter().map(|&v| c(v)).collect();
                for i in 0..d {
                    cm[i * d + i] += pr.a * (d as f64 - rho) / d as f64;
                }
                let p = IndicialPoint { d, rho, a: c(pr.a), c: cm };
                ScanRow { re: rho.re, im: rho.im, modulus: pi2_form_unchecked(&p).norm(), probe: pr.id.clone() }
            })
        })
        .collect();
    let best = rows
        .iter()
        .filter(|r| r.modulus.is_finite())
        .min_by(|a, b| a.modulus.total_cmp(&b.modulus))
        .ok_or_else(|| LabError::NoConvergence("scan produced no finite values".into()))?;
    Ok(ScanReport {
        d,
        min_modulus: best.modulus,
        argmin: Complex64::new(best.re, best.im),
        argmin_probe: best.probe.clone(),
        rows: rows.clone(),
    })
}

/// Polish a grid minimum of `|Π₂ form|` for one probe by compass search,
/// keeping `Re ρ` inside `re_range`.
pub fn refine_minimum(
    d: usize,
    probe: &Probe,
    start: Complex64,
    step: f64,
    re_range: (f64, f64),
) -> Result<(Complex64, f64)> {
    if probe.c0.len() != d * d {
        return Err(LabError::input(format!("probe {} does not have dimension {d}", probe.id)));
    }
    let eval = |rho: Complex64| {
        let mut cm: Vec<Complex64> = probe.c0.iter().map(|&v| c(v)).collect();
        for i in 0..d {
            cm[i * d + i] += probe.a * (d as f64 - rho) / d as f64;
        }
        pi2_form_unchecked(&IndicialPoint { d, rho, a: c(probe.a), c: cm }).norm()
    };
    let (mut z, mut fz, mut h) = (start, eval(start), step);
    let dirs = [c(1.0), c(-1.0), Complex64::i(), -Complex64::i()];
    while h > 1e-14 {
        let mut moved = false;
        for dir in dirs {
            let cand = z + dir * h;
            if cand.re < re_range.0 || cand.re > re_range.1 {
                continue;
            }
            let fc = eval(cand);
            if fc < fz {
                z = cand;
                fz = fc;
                moved = true;
                break;
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    Ok((z, fz))
}

/// Closed form versus direct quadrature over a point set.
#[derive(Debug, Clone, Serialize)]
pub struct NormalizationFinding {
    pub d: usize,
    pub points: usize,
    pub max_rel_error: f64,
    /// Mean of direct/closed; a uniform constant factor would show here.
    pub mean_ratio: Complex64,
    pub ratio_spread: f64,
}

pub fn compare_direct(d: usize, probes: &[Probe], rhos: &[Complex64]) -> Result<NormalizationFinding> {
    let pairs: Vec<(Complex64, Complex64)> = rhos
        .par_iter()
        .flat_map_iter(|&rho| probes.iter().map(move |pr| (rho, pr)))
        .map(|(rho, pr)| {
            let p = pr.at(d, rho)?;
            Ok((pi2_indicial_form(&p)?, pi2_indicial_direct(&p)?))
        })
        .collect::<Result<_>>()?;
    let ratios: Vec<Complex64> = pairs.iter().map(|(cl, di)| di / cl).collect();
    let mean = ratios.iter().sum::<Complex64>() / ratios.len().max(1) as f64;
    Ok(NormalizationFinding {
        d,
        points: pairs.len(),
        max_rel_error: pairs.iter().map(|(cl, di)| (di - cl).norm() / cl.norm()).fold(0.0, f64::max),
        mean_ratio: mean,
        ratio_spread: ratios.iter().map(|r| (r - mean).norm()).fold(0.0, f64::max),
    })
}

/// Twenty points spread over the interior of the strip.
pub fn comparison_points(d: usize) -> Vec<Complex64> {
    let df = d as f64;
    let mut out = Vec::new();
    for fr in [0.1, 0.3, 0.5, 0.7, 0.9] {
        for im in [-6.0, -1.5, 1.5, 6.0] {
            out.push(Complex64::new(fr * df, im));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson;
    use proptest::prelude::*;

    fn z(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn h_values() {
        for (rho, want) in [(1.0, PI), (2.0, 2.0), (3.0, PI / 2.0)] {
            let sech = adaptive_simpson(|t: f64| 1.0 / t.cosh().powf(rho), -40.0, 40.0, 1e-13, 50).unwrap();
            assert!((h_closed(c(rho)).unwrap().re - want).abs() < 1e-13);
            assert!((sech - want).abs() < 1e-9);
        }
        assert!((h_quadrature(c(2.0)).unwrap() - 2.0).norm() <= 1e-10);
        assert!((h_quadrature(c(1.0)).unwrap() - PI).norm() <= 1e-9);
        let r = z(0.5, 3.0);
        let (hq, hc) = (h_quadrature(r).unwrap(), h_closed(r).unwrap());
        assert!((hq - hc).norm() / hc.norm() <= 1e-7);
        assert!(h_closed(z(0.0, 1.0)).is_err());
        assert!(h_closed(c(-1.0)).is_err());
    }

    #[test]
    fn h_identity() {
        assert!(h_identity_residual(c(1.0)).unwrap() <= 1e-12);
        assert!(h_identity_residual(c(2.0)).unwrap() <= 1e-12);
        assert!((h_closed(c(4.0)).unwrap().re - 4.0 / 3.0).abs() < 1e-13);
        assert!(h_identity_residual(z(0.7, 5.0)).unwrap() <= 1e-12);
    }

    #[test]
    fn h_quadrature_on_sample() {
        let mut worst: f64 = 0.0;
        for k in 0..50 {
            let re = 0.3 + 3.7 * (k % 10) as f64 / 9.0;
            let im = -10.0 + 20.0 * (k / 10) as f64 / 4.0 + 0.37 * (k % 3) as f64;
            let r = z(re, im.clamp(-10.0, 10.0));
            let (hq, hc) = (h_quadrature(r).unwrap(), h_closed(r).unwrap());
            worst = worst.max((hq - hc).norm() / hc.norm());
        }
        assert!(worst <= 1e-8, "{worst:e}");
    }

    #[test]
    fn bracket_example() {
        let p = IndicialPoint::new(1, c(0.5), c(1.0), vec![c(0.5)]).unwrap();
        assert!((bracket(&p) - 1.5625).norm() < 1e-15);
        let cl = pi2_indicial_form(&p).unwrap();
        let di = pi2_indicial_direct(&p).unwrap();
        assert!((cl - di).norm() / cl.norm() <= 1e-6, "{cl} {di}");
        assert!(di.re > 0.0 && di.im.abs() < 1e-12);
    }

    #[test]
    fn critical_line_and_trace_free() {
        for lam in [0.0, 1.0, 5.0] {
            let p = Probe::family(2)[0].at(2, z(1.0, lam)).unwrap();
            let v = pi2_indicial_form(&p).unwrap();
            assert!(v.re > 0.0 && v.im.abs() <= 1e-12 * v.re, "{v}");
        }
        let p = IndicialPoint::new(2, c(1.0), c(0.0), vec![c(1.0), c(0.0), c(0.0), c(-1.0)]).unwrap();
        let v = pi2_indicial_form(&p).unwrap();
        let expect = prefactor(2, c(1.0)) * 2.0 * 2.0 * 1.0 / 8.0;
        assert!((v - expect).norm() < 1e-14 && v.re > 0.0);
    }

    #[test]
    fn refuses_non_solenoidal_and_out_of_strip() {
        let p = IndicialPoint::new(1, c(0.5), c(1.0), vec![c(1.0)]).unwrap();
        assert!(pi2_indicial_form(&p).is_err());
        assert!(IndicialPoint::new(1, c(1.2), c(1.0), vec![c(-0.2)]).is_err());
        assert!(IndicialPoint::new(0, c(0.5), c(1.0), vec![]).is_err());
        assert!(pi0_indicial(2, c(2.0)).is_err());
    }

    #[test]
    fn direct_matches_closed_on_grid() {
        for d in 1..=3 {
            let f = compare_direct(d, &Probe::family(d), &comparison_points(d)).unwrap();
            assert!(f.max_rel_error <= 1e-6, "d={d} {f:?}");
            assert!((f.mean_ratio - 1.0).norm() <= 1e-6);
        }
    }

    #[test]
    fn direct_is_conjugate_symmetric() {
        let pr = &Probe::family(2)[3];
        let r = z(0.6, 2.5);
        let a = pi2_indicial_direct(&pr.at(2, r).unwrap()).unwrap();
        let b = pi2_indicial_direct(&pr.at(2, r.conj()).unwrap()).unwrap();
        assert!((a - b.conj()).norm() <= 1e-9 * a.norm());
    }

    #[test]
    fn strip_scans_are_positive() {
        for d in 1..=3 {
            let r = scan_roots(d, &StripGrid::standard(d), &Probe::family(d)).unwrap();
            assert!(r.min_modulus > 0.0 && r.min_modulus.is_finite(), "d={d} {}", r.min_modulus);
            let p0 = scan_roots(d, &StripGrid::standard(d), &Probe::family(d)[..1]).unwrap();
            let pi0 = StripGrid::standard(d)
                .points()
                .iter()
                .map(|&r| pi0_indicial(d, r).unwrap().norm())
                .fold(f64::INFINITY, f64::min);
            assert!(pi0 > 0.0 && p0.min_modulus > 0.0);
        }
    }

    #[test]
    fn widened_strip_finds_exterior_root() {
        let probes = &Probe::family(1)[..1];
        let grid = StripGrid { re_min: 0.05, re_max: 1.7, im_max: 20.0, n_re: 50, n_im: 50 };
        let scan = scan_roots(1, &grid, probes).unwrap();
        assert!(scan.argmin.re > 1.0, "{}", scan.argmin);
        let (root, val) = refine_minimum(1, &probes[0], scan.argmin, 0.05, (grid.re_min, grid.re_max)).unwrap();
        assert!(root.re > 1.0 && val < 1e-10, "{root} {val:e}");
        // the fixed point ρ = d/2 + √(d²/4 + λ/μ) at the root
        let p = IndicialPoint { d: 1, rho: root, a: c(1.0), c: vec![1.0 - root] };
        let (l, m) = bracket_parts(&p);
        let pred = 0.5 + (0.25 + l / m).sqrt();
        assert!((root.re - pred).abs() < 1e-6 && root.im.abs() < 1e-6, "{root} {pred}");
        let inner = scan_roots(1, &StripGrid::standard(1), probes).unwrap();
        assert!(val < 1e-6 * inner.min_modulus);
    }

    #[test]
    fn pi0_values() {
        let v = pi0_indicial(1, c(0.5)).unwrap();
        let g = crate::special::gamma_real(0.25) / crate::special::gamma_real(0.75);
        assert!((v.re - PI * g * g).abs() < 1e-12);
        assert!((v.re - 27.500743272081).abs() < 1e-10);
        let h = h_quadrature(c(0.5)).unwrap();
        assert!((h * h - v).norm() < 1e-8);
        let (a, b) = (pi0_indicial(2, c(0.3)).unwrap(), pi0_indicial(2, c(1.7)).unwrap());
        assert!((a - b).norm() <= 1e-12 * a.norm());
    }

    #[test]
    fn symbol_constants() {
        assert!((symbol_constant(1).unwrap().b_d - 3.0 * PI / 8.0).abs() < 1e-15);
        assert!((symbol_constant(2).unwrap().b_d - 16.0 / 15.0).abs() < 1e-15);
        for d in 1..=6 {
            let s = symbol_constant(d).unwrap();
            assert!((s.b_d - s.b_d_quadrature).abs() <= 1e-12);
            assert!((s.factor * s.b_d - 2.0 * PI).abs() < 1e-14);
        }
        assert!(symbol_constant(0).is_err());
    }

    #[test]
    fn clipping_warns() {
        let mut g = StripGrid { re_min: 0.0, re_max: 1.0, im_max: 1.0, n_re: 3, n_im: 3 };
        let w = g.clip_to_strip(1, 0.05);
        assert_eq!(w.len(), 2);
        assert!(g.points().iter().all(|r| r.re > 0.0 && r.re < 1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn positive_on_critical_line(a in -2.0f64..2.0, t in -1.0f64..1.0, o in -1.0f64..1.0, d in 1usize..4) {
            let mut c0 = vec![0.0; d * d];
            if d >= 2 {
                c0[0] = t;
                c0[d + 1] = -t;
                c0[1] = o;
                c0[d] = o;
            }
            let pr = Probe { id: "p".into(), a, c0 };
            prop_assume!(a.abs() > 1e-3 || d >= 2 && (t.abs() + o.abs()) > 1e-3);
            for k in 0..20 {
                let lam = -20.0 + 40.0 * k as f64 / 19.0;
                let v = pi2_indicial_form(&pr.at(d, z(d as f64 / 2.0, lam)).unwrap()).unwrap();
                prop_assert!(v.re > 0.0);
                prop_assert!(v.im.abs() <= 1e-12 * v.re);
            }
        }

        #[test]
        fn prefactor_reflects(re in 0.05f64..0.95, im in -15.0f64..15.0, d in 1usize..4) {
            let r = z(re * d as f64, im);
            let a = pi2_prefactor(d, r).unwrap();
            let b = pi2_prefactor(d, d as f64 - r.conj()).unwrap();
            prop_assert!((a - b.conj()).norm() <= 1e-12 * a.norm());
        }

        #[test]
        fn h_identity_everywhere(re in 0.01f64..8.0, im in -30.0f64..30.0) {
            prop_assert!(h_identity_residual(z(re, im)).unwrap() <= 1e-12 * (1.0 + h_closed(z(re, im)).unwrap().norm()));
        }
    }
}
