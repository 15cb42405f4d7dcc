//! X-ray transforms along closed geodesics, the first-variation ladder for
//! the marked length spectrum, and the stability probe.

use crate::error::{LabError, Result};
use crate::geodesic::{geodesic_in_class, ClosedGeodesic, FinderOptions};
use crate::hyperbolic::{GroupPresentation, HomotopyClass, Point};
use crate::metric::PerturbedMetric;
use crate::quad::GaussLegendre;
use crate::stats::{ols, polyfit, spearman};
use crate::surface::Surface;
use crate::tensor::{covariant_derivative, divergence_at, TensorField};
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, Serialize)]
pub struct XrayValue {
    #[serde(skip)]
    pub class: HomotopyClass,
    pub value: f64,
    /// Change under one doubling of the quadrature nodes.
    pub error: f64,
}

/// `π_m^* h` at arc length `s`, contracted with the actual velocity (unit for
/// the metric the orbit was computed in).
fn integrand(h: &dyn TensorField, geo: &ClosedGeodesic, s: f64) -> Result<f64> {
    let st = geo.state_at(s)?;
    let p = Point::new(st[0], st[1]);
    Ok(h.eval(p).contract([st[3] / st[1], st[2] / st[1]]))
}

fn orbit_integral(h: &dyn TensorField, geo: &ClosedGeodesic, gl: &GaussLegendre, sub: usize) -> Result<f64> {
    let n = geo.samples.len() - 1;
    let step = geo.length / (n * sub) as f64;
    let mut total = 0.0;
    for k in 0..n * sub {
        let a = k as f64 * step;
        let mut acc = 0.0;
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            acc += w * integrand(h, geo, a + 0.5 * step * (x + 1.0))?;
        }
        total += 0.5 * step * acc;
    }
    Ok(total)
}

/// `(1/ℓ) ∫₀^ℓ π_m^* h(γ(t), γ̇(t)) dt` with 8-point Gauss–Legendre per
/// sample segment and one refinement for the error estimate.
pub fn xray_transform(h: &dyn TensorField, geo: &ClosedGeodesic) -> Result<XrayValue> {
    let gl = GaussLegendre::new(8);
    let coarse = orbit_integral(h, geo, &gl, 1)? / geo.length;
    let fine = orbit_integral(h, geo, &gl, 2)? / geo.length;
    if !fine.is_finite() {
        return Err(LabError::Quadrature("non-finite X-ray integrand along the orbit".into()));
    }
    Ok(XrayValue { class: geo.class.clone(), value: fine, error: (fine - coarse).abs() })
}

/// X-ray transform on several orbits, in input order.
pub fn xray_on_orbits(h: &dyn TensorField, geos: &[ClosedGeodesic]) -> Result<Vec<XrayValue>> {
    geos.par_iter().map(|g| xray_transform(h, g)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct VariationRow {
    pub eps: f64,
    pub length: f64,
    /// `L_{g+εf}/L_g − 1`.
    pub delta: f64,
    /// `δ − κ·I₂f·ε` with the fitted κ.
    pub remainder: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VariationReport {
    pub word: String,
    pub base_length: f64,
    pub i2: f64,
    /// Fitted coefficient of `ε·I₂f` (NaN when I₂f is below the floor).
    pub kappa: f64,
    /// Fitted first-order coefficient `κ·I₂f` itself.
    pub first_order: f64,
    pub remainder_slope: f64,
    pub rows: Vec<VariationRow>,
    pub flags: Vec<String>,
}

/// Below this |I₂f| the first-order coefficient is not resolved.
pub const FIRST_ORDER_FLOOR: f64 = 1e-9;

/// Fit `L_{g+εf}(c)/L_g(c) − 1 = κ·ε·I₂f(c) + r(ε)` over a ladder of ε.
pub fn variation_check(
    group: &GroupPresentation,
    f: Arc<dyn TensorField>,
    class: &HomotopyClass,
    epsilons: &[f64],
    opts: &FinderOptions,
) -> Result<VariationReport> {
    if epsilons.len() < 3 {
        return Err(LabError::input(format!("ladder needs ≥ 3 points, got {}", epsilons.len())));
    }
    if epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(LabError::input("ladder values must be positive"));
    }
    let base = geodesic_in_class(&PerturbedMetric::hyperbolic(), group, class, opts)?;
    let i2 = xray_transform(f.as_ref(), &base)?.value;
    let lengths: Vec<f64> = epsilons
        .par_iter()
        .map(|&e| {
            let m = PerturbedMetric::new(f.clone(), e)?;
            Ok(geodesic_in_class(&m, group, class, opts)?.length)
        })
        .collect::<Result<_>>()?;
    let deltas: Vec<f64> = lengths.iter().map(|l| l / base.length - 1.0).collect();
    let mut flags = Vec::new();
    // δ/ε = κI + cε + c'ε²: the intercept is the first-order coefficient; the
    // ε² term only once the ladder has a spare point
    let ratio: Vec<f64> = deltas.iter().zip(epsilons).map(|(d, e)| d / e).collect();
    let first_order = polyfit(epsilons, &ratio, if epsilons.len() >= 4 { 2 } else { 1 })?[0];
    let kappa = if i2.abs() > FIRST_ORDER_FLOOR {
        first_order / i2
    } else {
        flags.push("first order below floor".to_string());
        f64::NAN
    };
    let rows: Vec<VariationRow> = epsilons
        .iter()
        .zip(&lengths)
        .zip(&deltas)
        .map(|((&eps, &length), &delta)| VariationRow { eps, length, delta, remainder: delta - first_order * eps })
        .collect();
    let logs: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.remainder != 0.0).map(|r| (r.eps.ln(), r.remainder.abs().ln())).collect();
    let remainder_slope = if logs.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = logs.into_iter().unzip();
        ols(&x, &y)?.0
    } else {
        flags.push("remainder identically zero".to_string());
        f64::NAN
    };
    Ok(VariationReport {
        word: group.format_word(class),
        base_length: base.length,
        i2,
        kappa,
        first_order,
        remainder_slope,
        rows,
        flags,
    })
}

/// Fixed-grid surrogate norms on the fundamental strip of a surface.
///
/// The weak norm is the L² norm of the frame components after a Gaussian
/// mollification of fixed width in the chart `(x, ln y)`; the C¹ norm is the
/// sup of `max(|f|, |∇f|)` over the same grid.
#[derive(Debug, Clone)]
pub struct WeakNormProxy {
    pub x0: f64,
    pub width: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
    /// Mollifier width in chart units.
    pub sigma: f64,
}

impl WeakNormProxy {
    pub fn for_surface(s: &Surface) -> Self {
        WeakNormProxy {
            x0: s.x0,
            width: s.width,
            y_min: s.max_radius,
            y_max: 8.0 * s.cusp_height,
            nx: 48,
            ny: 48,
            sigma: 0.1,
        }
    }

    fn grid(&self) -> Vec<Point> {
        let (lo, hi) = (self.y_min.ln(), self.y_max.ln());
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny {
            let y = (lo + (hi - lo) * (j as f64 + 0.5) / self.ny as f64).exp();
            for i in 0..self.nx {
                out.push(Point::new(self.x0 + self.width * (i as f64 + 0.5) / self.nx as f64, y));
            }
        }
        out
    }

    pub fn weak_norm(&self, f: &dyn TensorField) -> f64 {
        let pts = self.grid();
        let vals: Vec<Vec<f64>> = pts.par_iter().map(|&p| f.eval(p).comps).collect();
        let ncomp = vals.first().map_or(0, |v| v.len());
        let (nx, ny) = (self.nx, self.ny);
        let dx = self.width / nx as f64;
        let dr = (self.y_max.ln() - self.y_min.ln()) / ny as f64;
        let kern = |d: f64| (-0.5 * (d / self.sigma).powi(2)).exp();
        let kx: Vec<f64> = (0..nx)
            .map(|i| {
                let d = (i.min(nx - i)) as f64 * dx;
                kern(d)
            })
            .collect();
        let sx: f64 = kx.iter().sum();
        let mut total = 0.0;
        for c in 0..ncomp {
            // x (periodic), then ln y (zero padded)
            let mut a = vec![0.0; nx * ny];
            for j in 0..ny {
                for i in 0..nx {
                    let mut s = 0.0;
                    for k in 0..nx {
                        s += kx[k] * vals[j * nx + (i + k) % nx][c];
                    }
                    a[j * nx + i] = s / sx;
                }
            }
            for j in 0..ny {
                let y = pts[j * nx].y;
                let mut wsum = 0.0;
                let mut row = vec![0.0; nx];
                for jj in 0..ny {
                    let w = kern((j as f64 - jj as f64) * dr);
                    wsum += w;
                    for i in 0..nx {
                        row[i] += w * a[jj * nx + i];
                    }
                }
                for v in row {
                    total += (v / wsum).powi(2) * dx * dr / y;
                }
            }
        }
        total.sqrt()
    }

    pub fn c1_norm(&self, f: &dyn TensorField) -> f64 {
        self.grid()
            .par_iter()
            .map(|&p| f.eval(p).norm().max(covariant_derivative(f, p).norm()))
            .reduce(|| 0.0, f64::max)
    }

    /// Sup of `|D*f|` over the grid.
    pub fn divergence_sup(&self, f: &dyn TensorField) -> Result<f64> {
        let v: Vec<f64> =
            self.grid().par_iter().map(|&p| divergence_at(f, p).map(|t| t.norm())).collect::<Result<_>>()?;
        Ok(v.into_iter().fold(0.0, f64::max))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub label: String,
    pub weak: f64,
    pub i2_sup: f64,
    pub c1: f64,
    pub divergence: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    /// Slope of log‖f‖_weak against log‖I₂f‖_∞.
    pub theta: f64,
    /// Rank correlation of ‖f‖_weak with ‖I₂f‖_∞^θ ‖f‖_{C¹}^{1−θ}.
    pub spearman: f64,
}

/// Tabulate (‖f‖_weak, ‖I₂f‖_∞, ‖f‖_{C¹}) over a family and fit the exponent.
pub fn stability_probe(
    family: &[(String, Arc<dyn TensorField>)],
    geos: &[ClosedGeodesic],
    proxy: &WeakNormProxy,
) -> Result<StabilityReport> {
    if family.len() < 5 {
        return Err(LabError::input(format!("stability probe needs at least 5 family members, got {}", family.len())));
    }
    if geos.is_empty() {
        return Err(LabError::input("stability probe needs at least one class"));
    }
    let mut rows = Vec::with_capacity(family.len());
    for (label, f) in family {
        let i2 = xray_on_orbits(f.as_ref(), geos)?;
        rows.push(StabilityRow {
            label: label.clone(),
            weak: proxy.weak_norm(f.as_ref()),
            i2_sup: i2.iter().map(|v| v.value.abs()).fold(0.0, f64::max),
            c1: proxy.c1_norm(f.as_ref()),
            divergence: proxy.divergence_sup(f.as_ref())?,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.i2_sup.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.weak.ln()).collect();
    let (theta, _) = ols(&x, &y)?;
    let pred: Vec<f64> = rows.iter().map(|r| r.i2_sup.powf(theta) * r.c1.powf(1.0 - theta)).collect();
    let w: Vec<f64> = rows.iter().map(|r| r.weak).collect();
    let rho = spearman(&w, &pred)?;
    Ok(StabilityReport { rows, theta, spearman: rho })
}


#[cfg(test)]
mod ladder {
    use super::*;
    use crate::tensor::{ConformalBump, SurfaceBump};

    #[test]
    fn first_variation_coefficient_is_one_half() {
        let g = GroupPresentation::one_cusp_genus_one();
        let s = Arc::new(Surface::preset("one-cusp-genus-1", None).unwrap());
        let f: Arc<dyn TensorField> =
            Arc::new(ConformalBump { bump: SurfaceBump::new(s, Point::new(-0.25, 0.2), 0.35), amplitude: 1.0 });
        let opts = FinderOptions { check_hessian: false, ..Default::default() };
        let c = g.parse_word("ab").unwrap();
        let r = variation_check(&g, f, &c, &[1e-2, 3e-3, 1e-3, 3e-4], &opts).unwrap();
        assert!((r.kappa - 0.5).abs() <= 0.01, "{}", r.kappa);
        assert!((r.remainder_slope - 2.0).abs() <= 0.1, "{}", r.remainder_slope);
    }
}
