//! The perturbed metric g' = g + ε f on the universal cover.
//!
//! Coordinates are ordered `q = (x, y)`; frame components of `f` use the
//! `(e_y, e_x)` order of [`crate::tensor`].

use crate::error::{LabError, Result};
use crate::hyperbolic::{flow_h2, Phase, Point};
use crate::ode::{dopri5, Tolerance};
use crate::quad::GaussLegendre;
use crate::tensor::{Tensor, TensorField};
use std::sync::Arc;

pub type Mat2 = [[f64; 2]; 2];
/// Christoffel symbols `Γ[a][b][c] = Γ^a_{bc}`.
pub type Christoffel = [[[f64; 2]; 2]; 2];

#[derive(Clone)]
pub struct PerturbedMetric {
    pub perturbation: Option<Arc<dyn TensorField>>,
    pub eps: f64,
    /// Fields with exact derivatives skip the finite-difference stencil.
    pub analytic_derivatives: bool,
}

impl std::fmt::Debug for PerturbedMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PerturbedMetric").field("eps", &self.eps).finish()
    }
}

const FD_REL_STEP: f64 = 1e-5;

impl PerturbedMetric {
    pub fn hyperbolic() -> Self {
        PerturbedMetric { perturbation: None, eps: 0.0, analytic_derivatives: true }
    }

    pub fn new(f: Arc<dyn TensorField>, eps: f64) -> Result<Self> {
        if f.rank() != 2 {
            return Err(LabError::input(format!("metric perturbation must have rank 2, got {}", f.rank())));
        }
        Ok(PerturbedMetric { perturbation: Some(f), eps, analytic_derivatives: false })
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.eps == 0.0 || self.perturbation.is_none()
    }

    fn frame_perturbation(&self, p: Point) -> Option<Tensor> {
        if self.is_hyperbolic() {
            return None;
        }
        Some(self.perturbation.as_ref().unwrap().eval(p))
    }

    /// Frame components `G = I + ε f` in the `(e_y, e_x)` order.
    pub fn frame_metric(&self, p: Point) -> Mat2 {
        match self.frame_perturbation(p) {
            None => [[1.0, 0.0], [0.0, 1.0]],
            Some(t) => {
                let e = self.eps;
                [[1.0 + e * t.comps[0], e * t.comps[1]], [e * t.comps[2], 1.0 + e * t.comps[3]]]
            }
        }
    }

    /// `g'(v, v)` for frame components `v = (v_y, v_x)`.
    pub fn frame_norm2(&self, p: Point, v: [f64; 2]) -> f64 {
        let g = self.frame_metric(p);
        g[0][0] * v[0] * v[0] + 2.0 * g[0][1] * v[0] * v[1] + g[1][1] * v[1] * v[1]
    }

    /// Coordinate metric in `(x, y)` order.
    pub fn coord_metric(&self, p: Point) -> Mat2 {
        let g = self.frame_metric(p);
        let s = 1.0 / (p.y * p.y);
        [[g[1][1] * s, g[0][1] * s], [g[0][1] * s, g[0][0] * s]]
    }

    fn perturbation_derivatives(&self, p: Point) -> [Tensor; 2] {
        let f = self.perturbation.as_ref().unwrap();
        if self.analytic_derivatives {
            return f.derivatives(p);
        }
        let h = FD_REL_STEP * p.y;
        let d = |dx: f64, dy: f64| {
            let e = |k: f64| f.eval(Point::new(p.x + k * dx, p.y + k * dy));
            let (p2, p1, m1, m2) = (e(2.0), e(1.0), e(-1.0), e(-2.0));
            let comps = (0..4)
                .map(|i| (-p2.comps[i] + 8.0 * p1.comps[i] - 8.0 * m1.comps[i] + m2.comps[i]) / (12.0 * h))
                .collect();
            Tensor { rank: 2, comps }
        };
        [d(0.0, h), d(h, 0.0)]
    }

    pub fn christoffel(&self, p: Point) -> Christoffel {
        let y = p.y;
        if self.is_hyperbolic() {
            let mut g = [[[0.0; 2]; 2]; 2];
            g[0][0][1] = -1.0 / y;
            g[0][1][0] = -1.0 / y;
            g[1][0][0] = 1.0 / y;
            g[1][1][1] = -1.0 / y;
            return g;
        }
        let e = self.eps;
        let t = self.perturbation.as_ref().unwrap().eval(p);
        let [dfy, dfx] = self.perturbation_derivatives(p);
        // frame G in coordinate order: (x,x) ↔ frame (1,1), (y,y) ↔ (0,0)
        let gf = |t: &Tensor, a: usize, b: usize| t.comps[2 * (1 - a) + (1 - b)];
        let s = 1.0 / (y * y);
        let mut g = [[0.0; 2]; 2];
        let mut dg = [[[0.0; 2]; 2]; 2]; // dg[c][a][b] = ∂_c g_ab
        for a in 0..2 {
            for b in 0..2 {
                let delta = if a == b { 1.0 } else { 0.0 };
                let gab = delta + e * gf(&t, a, b);
                g[a][b] = gab * s;
                dg[0][a][b] = e * gf(&dfx, a, b) * s;
                dg[1][a][b] = e * gf(&dfy, a, b) * s - 2.0 * gab * s / y;
            }
        }
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let gi = [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]];
        let mut out = [[[0.0; 2]; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let mut v = 0.0;
                    for d in 0..2 {
                        v += gi[a][d] * (dg[b][d][c] + dg[c][d][b] - dg[d][b][c]);
                    }
                    out[a][b][c] = 0.5 * v;
                }
            }
        }
        out
    }

    /// Gaussian curvature, from finite differences of the Christoffel symbols.
    pub fn curvature(&self, p: Point) -> f64 {
        if self.is_hyperbolic() {
            return -1.0;
        }
        let h = 1e-4 * p.y;
        let gam = self.christoffel(p);
        let dgam = |dx: f64, dy: f64| {
            let e = |k: f64| self.christoffel(Point::new(p.x + k * dx, p.y + k * dy));
            let (p2, p1, m1, m2) = (e(2.0), e(1.0), e(-1.0), e(-2.0));
            let mut out = [[[0.0; 2]; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    for c in 0..2 {
                        out[a][b][c] =
                            (-p2[a][b][c] + 8.0 * p1[a][b][c] - 8.0 * m1[a][b][c] + m2[a][b][c]) / (12.0 * h);
                    }
                }
            }
            out
        };
        let dg = [dgam(h, 0.0), dgam(0.0, h)];
        // R^a_{bcd} = ∂_c Γ^a_{db} − ∂_d Γ^a_{cb} + Γ^a_{ce} Γ^e_{db} − Γ^a_{de} Γ^e_{cb}
        let riem = |a: usize, b: usize, c: usize, d: usize| {
            let mut v = dg[c][a][d][b] - dg[d][a][c][b];
            for e in 0..2 {
                v += gam[a][c][e] * gam[e][d][b] - gam[a][d][e] * gam[e][c][b];
            }
            v
        };
        let g = self.coord_metric(p);
        let r0101: f64 = (0..2).map(|a| g[0][a] * riem(a, 1, 0, 1)).sum();
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        r0101 / det
    }

    /// Smallest eigenvalue of the frame metric over the sample points.
    pub fn min_eigenvalue(&self, points: &[Point]) -> f64 {
        points
            .iter()
            .map(|&p| {
                let g = self.frame_metric(p);
                let tr = g[0][0] + g[1][1];
                let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
                0.5 * tr - (0.25 * tr * tr - det).max(0.0).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Reject metrics that are not positive definite on the sample points.
    pub fn check_positive(&self, points: &[Point]) -> Result<()> {
        let m = self.min_eigenvalue(points);
        if !(m > 0.0) {
            return Err(LabError::input(format!("perturbed metric not positive definite (min eigenvalue {m:e})")));
        }
        Ok(())
    }

    /// Right-hand side of the geodesic equation for `(x, y, ẋ, ẏ)`.
    pub fn geodesic_rhs(&self, s: &[f64; 4]) -> [f64; 4] {
        let p = Point::new(s[0], s[1]);
        let g = self.christoffel(p);
        let v = [s[2], s[3]];
        let mut acc = [0.0; 2];
        for (a, ac) in acc.iter_mut().enumerate() {
            for b in 0..2 {
                for c in 0..2 {
                    *ac -= g[a][b][c] * v[b] * v[c];
                }
            }
        }
        [v[0], v[1], acc[0], acc[1]]
    }

    /// Unit-speed initial state for a unit tangent vector whose direction is
    /// given by the hyperbolic frame angle ψ.
    pub fn unit_state(&self, ph: Phase) -> [f64; 4] {
        let v = ph.direction();
        let n = self.frame_norm2(ph.p, v).sqrt();
        let y = ph.p.y;
        [ph.p.x, y, y * v[1] / n, y * v[0] / n]
    }

    /// Frame angle of a coordinate velocity.
    pub fn state_phase(s: &[f64; 4]) -> Phase {
        Phase::new(s[0], s[1], s[2].atan2(s[3]))
    }

    pub fn integrate(&self, s0: [f64; 4], t: f64, tol: Tolerance) -> Result<[f64; 4]> {
        dopri5(|_, s| self.geodesic_rhs(s), s0, 0.0, t, tol)
    }

    /// g'-length of the hyperbolic segment from `a` to `b` (8-point Gauss–Legendre).
    pub fn segment_length(&self, gl: &GaussLegendre, a: Point, b: Point) -> f64 {
        let d = crate::hyperbolic::distance(a, b);
        if d == 0.0 {
            return 0.0;
        }
        if self.is_hyperbolic() {
            return d;
        }
        let ph = Phase { p: a, psi: direction_to(a, b) };
        gl.integrate(
            |s| {
                let q = flow_h2(ph, s * d);
                d * self.frame_norm2(q.p, q.direction()).sqrt()
            },
            0.0,
            1.0,
        )
    }
}

/// Frame angle at `a` of the hyperbolic geodesic towards `b`.
pub fn direction_to(a: Point, b: Point) -> f64 {
    // move a to i by z ↦ (z − x)/y, then read the direction in the disk model
    let w = num_complex::Complex64::new((b.x - a.x) / a.y, b.y / a.y);
    let i = num_complex::Complex64::new(0.0, 1.0);
    let zeta = (w - i) / (w + i);
    let v = zeta * i * 2.0;
    v.re.atan2(v.im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolic::distance;
    use crate::surface::Surface;
    use crate::tensor::{ConformalBump, PowerLaw2, SurfaceBump};

    #[test]
    fn direction_to_matches_flow() {
        let a = Point::new(0.3, 0.7);
        let b = Point::new(-1.1, 2.4);
        let psi = direction_to(a, b);
        let d = distance(a, b);
        let q = flow_h2(Phase { p: a, psi }, d);
        assert!(distance(q.p, b) < 1e-12);
    }

    #[test]
    fn hyperbolic_curvature_is_minus_one_numerically() {
        // zero field through the generic path
        let f = Arc::new(PowerLaw2 { rho: 0.0, a: 0.0, b: 0.0, c: 0.0 });
        let m = PerturbedMetric::new(f, 0.1).unwrap();
        for p in [Point::new(0.0, 1.0), Point::new(0.3, 0.2)] {
            assert!((m.curvature(p) + 1.0).abs() < 1e-6, "{}", m.curvature(p));
        }
    }

    #[test]
    fn conformal_scaling_curvature() {
        // g' = (1 + ε)g has K = −1/(1 + ε)
        let f = Arc::new(PowerLaw2 { rho: 0.0, a: 1.0, b: 0.0, c: 1.0 });
        let m = PerturbedMetric::new(f, 0.5).unwrap();
        let k = m.curvature(Point::new(0.1, 0.8));
        assert!((k + 1.0 / 1.5).abs() < 1e-6, "{k}");
    }

    #[test]
    fn christoffel_generic_path_matches_analytic() {
        let f = Arc::new(PowerLaw2 { rho: 0.0, a: 0.0, b: 0.0, c: 0.0 });
        let m = PerturbedMetric::new(f, 0.3).unwrap();
        let h = PerturbedMetric::hyperbolic();
        let p = Point::new(0.2, 1.3);
        let (a, b) = (m.christoffel(p), h.christoffel(p));
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    assert!((a[i][j][k] - b[i][j][k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn hyperbolic_geodesic_ode_matches_flow() {
        let m = PerturbedMetric::hyperbolic();
        let ph = Phase::new(0.2, 0.9, 1.1);
        let s = m.integrate(m.unit_state(ph), 2.5, Tolerance::default()).unwrap();
        let q = flow_h2(ph, 2.5);
        assert!(distance(Point::new(s[0], s[1]), q.p) < 1e-10);
        let back = PerturbedMetric::state_phase(&s);
        assert!(crate::hyperbolic::wrap_angle(back.psi - q.psi).abs() < 1e-10);
    }

    #[test]
    fn segment_length_perturbed() {
        let s = Arc::new(Surface::preset("one-cusp-genus-1", None).unwrap());
        let f = Arc::new(ConformalBump { bump: SurfaceBump::new(s, Point::new(0.0, 1.0), 0.5), amplitude: 2.0 });
        let m = PerturbedMetric::new(f, 0.0).unwrap();
        let gl = GaussLegendre::new(8);
        let (a, b) = (Point::new(0.0, 0.9), Point::new(0.05, 1.0));
        assert!((m.segment_length(&gl, a, b) - distance(a, b)).abs() < 1e-15);
        assert!(m.check_positive(&[a, b]).is_ok());
    }
}
