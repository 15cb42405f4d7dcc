//! Exact geodesic flow in the model cusp [a, ∞) × ℝ/Λ.
//!
//! Phase points are `(y, θ, φ, u)` with `φ ∈ [0, π]` the angle from `y∂_y`
//! and `u = ±1` the side. The angle obeys `φ̇ = sin φ`, so with
//! `t₀ = ln tan(φ₀/2)` one has `sin φ_t = sech(t₀ + t)` and the depth
//! `y / sin φ` is conserved.

use crate::error::{LabError, Result};
use crate::hyperbolic::Phase;
use crate::quad::adaptive_simpson;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Distance to a pole below which the vertical-ray formulas are used.
pub const POLE_EPS: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuspChart {
    pub a: f64,
    pub circumference: f64,
    pub d: usize,
}

impl CuspChart {
    pub fn new(a: f64, circumference: f64, d: usize) -> Result<Self> {
        if !(a > 0.0) || !(circumference > 0.0) || d == 0 {
            return Err(LabError::input(format!(
                "cusp chart needs a > 0, circumference > 0, d ≥ 1 (got a = {a}, circumference = {circumference}, d = {d})"
            )));
        }
        Ok(CuspChart { a, circumference, d })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub y: f64,
    /// Lifted coordinate; reduce with [`PhasePoint::theta_mod`].
    pub theta: f64,
    pub phi: f64,
    /// +1 or −1.
    pub u: f64,
}

impl PhasePoint {
    pub fn new(y: f64, theta: f64, phi: f64, u: f64) -> Result<Self> {
        if !(y > 0.0) || !(0.0..=PI).contains(&phi) || (u.abs() - 1.0).abs() > 1e-12 {
            return Err(LabError::input(format!("invalid phase point (y={y}, φ={phi}, u={u})")));
        }
        Ok(PhasePoint { y, theta, phi, u: u.signum() })
    }

    pub fn theta_mod(&self, circumference: f64) -> f64 {
        self.theta.rem_euclid(circumference)
    }

    pub fn winding(&self, circumference: f64) -> i64 {
        (self.theta / circumference).floor() as i64
    }

    /// The same unit vector in the signed-angle convention of the half-plane.
    pub fn to_phase(&self) -> Phase {
        Phase::new(self.theta, self.y, self.u * self.phi)
    }

    pub fn from_phase(ph: Phase) -> Self {
        let u = if ph.psi < 0.0 { -1.0 } else { 1.0 };
        PhasePoint { y: ph.p.y, theta: ph.p.x, phi: ph.psi.abs().min(PI), u }
    }
}

/// Components (ẏ, θ̇, φ̇) of the geodesic vector field.
pub fn flow_field(p: &PhasePoint) -> [f64; 3] {
    let (s, c) = p.phi.sin_cos();
    [p.y * c, p.y * s * p.u, s]
}

/// ln cosh x without overflow.
pub fn ln_cosh(x: f64) -> f64 {
    let ax = x.abs();
    ax + (-2.0 * ax).exp().ln_1p() - std::f64::consts::LN_2
}

fn near_pole(phi: f64) -> Option<bool> {
    if phi < POLE_EPS {
        Some(true)
    } else if PI - phi < POLE_EPS {
        Some(false)
    } else {
        None
    }
}

/// Closed-form flow for time `t`.
pub fn flow_exact(p: &PhasePoint, t: f64) -> PhasePoint {
    match near_pole(p.phi) {
        Some(true) => return PhasePoint { y: p.y * t.exp(), ..*p },
        Some(false) => return PhasePoint { y: p.y * (-t).exp(), ..*p },
        None => {}
    }
    let t0 = (0.5 * p.phi).tan().ln();
    let s = t0 + t;
    let phi = 2.0 * s.exp().atan();
    let y = (p.y.ln() + ln_cosh(t0) - ln_cosh(s)).exp();
    let dtheta = if t.abs() < 1.0 {
        p.y * t.sinh() / s.cosh()
    } else {
        let depth = (p.y.ln() + ln_cosh(t0)).exp();
        depth * (s.tanh() - t0.tanh())
    };
    PhasePoint { y, theta: p.theta + p.u * dtheta, phi: phi.clamp(0.0, PI), u: p.u }
}

/// The flow-invariant depth y / sin φ.
pub fn conserved_depth(p: &PhasePoint) -> Result<f64> {
    if near_pole(p.phi).is_some() {
        return Err(LabError::Domain("vertical ray, depth infinite".into()));
    }
    Ok(p.y / p.phi.sin())
}

/// Forward and backward times at which the orbit leaves y ≥ a.
pub fn exit_time(p: &PhasePoint, chart: &CuspChart) -> Result<(f64, f64)> {
    let a = chart.a;
    if p.y < a * (1.0 - 1e-12) {
        return Err(LabError::input(format!("point at height {} lies below the cusp boundary {a}", p.y)));
    }
    let y = p.y.max(a);
    match near_pole(p.phi) {
        Some(true) => return Ok((f64::INFINITY, -(y / a).ln())),
        Some(false) => return Ok(((y / a).ln(), f64::NEG_INFINITY)),
        None => {}
    }
    let t0 = (0.5 * p.phi).tan().ln();
    let depth = y / p.phi.sin();
    let s = (depth / a).max(1.0).acosh();
    Ok((s - t0, -s - t0))
}

/// Liouville volume of the region a ≤ y ≤ Y of the unit tangent bundle, by quadrature.
pub fn liouville_volume(chart: &CuspChart, y_max: f64) -> Result<f64> {
    let d = chart.d as i32;
    let base = adaptive_simpson(|r| (-(d as f64) * r).exp(), chart.a.ln(), y_max.ln(), 1e-13, 50)?;
    let sphere = adaptive_simpson(|phi| phi.sin().powi(d - 1), 0.0, PI, 1e-13, 50)? * sphere_volume(chart.d - 1);
    Ok(chart.circumference.powi(d) * base * sphere)
}

/// Closed-form counterpart of [`liouville_volume`].
pub fn liouville_volume_exact(chart: &CuspChart, y_max: f64) -> f64 {
    let d = chart.d as f64;
    chart.circumference.powi(chart.d as i32) * (chart.a.powf(-d) - y_max.powf(-d)) / d * sphere_volume(chart.d)
}

/// Volume of the unit sphere Sⁿ (S⁰ has two points).
pub fn sphere_volume(n: usize) -> f64 {
    let k = (n + 1) as f64;
    2.0 * PI.powf(0.5 * k) / crate::special::gamma_real(0.5 * k)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DeepSetMeasure {
    pub numeric: f64,
    pub bound: f64,
}

/// Inner integral ∫_Y^∞ (1 + ln y) y^{−1−2δ} dy in closed form.
pub fn deep_inner_exact(y_low: f64, delta: f64) -> f64 {
    y_low.powf(-2.0 * delta) * ((1.0 + y_low.ln()) / (2.0 * delta) + 1.0 / (4.0 * delta * delta))
}

/// Weighted measure of the ε-deep part {(a/y)·sin φ < ε^{2ν}, y > a}:
/// ∫_0^{π/2} sin^{d−1}φ ∫ (1 + ln y) y^{−1−2δ} dy dφ, next to the bound
/// ε^{2νd} + ε^{4νδ}|ln ε|.
pub fn deep_set_measure(chart: &CuspChart, eps: f64, nu: f64, delta: f64) -> Result<DeepSetMeasure> {
    if !(eps > 0.0 && eps < 1.0) || !(nu > 0.0) || !(delta > 0.0 && delta <= chart.d as f64) {
        return Err(LabError::input(format!(
            "deep-set measure needs 0 < ε < 1, ν > 0, 0 < δ ≤ d (got ε = {eps}, ν = {nu}, δ = {delta})"
        )));
    }
    if chart.a < (-1.0f64).exp() {
        return Err(LabError::Domain("weight 1 + ln y changes sign above a < 1/e".into()));
    }
    let d = chart.d as i32;
    let a = chart.a;
    let e2n = eps.powf(2.0 * nu);
    let tol = 1e-10;
    // y = Y·e^s, truncated where the exponential tail is below tolerance
    let inner = |y_low: f64| -> Result<f64> {
        let s_max = (40.0 + (1.0 + y_low.ln().abs()).ln()) / (2.0 * delta);
        let lny = y_low.ln();
        let body =
            adaptive_simpson(|s| (1.0 + lny + s) * (-2.0 * delta * (lny + s)).exp(), 0.0, s_max, tol * 1e-2, 50)?;
        Ok(body + deep_inner_exact(y_low * s_max.exp(), delta))
    };
    let mut err = None;
    let mut integrand = |phi: f64| {
        let y_low = a.max(a * phi.sin() / e2n);
        match inner(y_low) {
            Ok(v) => phi.sin().powi(d - 1) * v,
            Err(e) => {
                err = Some(e);
                0.0
            }
        }
    };
    let kink = e2n.min(1.0).asin();
    let mut numeric = adaptive_simpson(&mut integrand, 0.0, kink, tol, 50)?;
    numeric += adaptive_simpson(&mut integrand, kink, 0.5 * PI, tol, 50)?;
    if let Some(e) = err {
        return Err(e);
    }
    let bound = eps.powf(2.0 * nu * chart.d as f64) + eps.powf(4.0 * nu * delta) * eps.ln().abs();
    Ok(DeepSetMeasure { numeric, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{dopri5, rk4, Tolerance};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pp(y: f64, theta: f64, phi: f64, u: f64) -> PhasePoint {
        PhasePoint::new(y, theta, phi, u).unwrap()
    }

    fn close3(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
        a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn flow_field_examples() {
        assert!(close3(flow_field(&pp(1.0, 0.0, 0.0, 1.0)), [1.0, 0.0, 0.0], 0.0));
        assert!(close3(flow_field(&pp(1.0, 0.0, PI / 2.0, 1.0)), [0.0, 1.0, 1.0], 1e-15));
        let s2 = 2f64.sqrt();
        assert!(close3(flow_field(&pp(2.0, 0.0, PI / 4.0, 1.0)), [s2, s2, s2 / 2.0], 1e-15));
    }

    #[test]
    fn flow_exact_examples() {
        let q = flow_exact(&pp(1.5, 0.2, 0.0, 1.0), 0.7);
        assert!((q.y - 1.5 * 0.7f64.exp()).abs() < 1e-14 && q.theta == 0.2 && q.phi == 0.0);
        let t = (2.0 + 3f64.sqrt()).ln();
        let q = flow_exact(&pp(1.0, 0.0, PI / 2.0, 1.0), t);
        assert!((q.phi - 5.0 * PI / 6.0).abs() < 1e-14);
        assert!((q.y - 0.5).abs() < 1e-14);
    }

    #[test]
    fn flow_exact_matches_integration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let p = pp(rng.gen_range(0.5..3.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.05..PI - 0.05), 1.0);
            let f = |_t: f64, s: &[f64; 3]| [s[0] * s[2].cos(), s[0] * s[2].sin(), s[2].sin()];
            let y = rk4(f, [p.y, p.theta, p.phi], 0.0, 3.0, 4000);
            let q = flow_exact(&p, 3.0);
            worst = worst.max((y[0] - q.y).abs()).max((y[1] - q.theta).abs()).max((y[2] - q.phi).abs());
        }
        assert!(worst <= 1e-8, "{worst:e}");
    }

    #[test]
    fn depth_examples() {
        assert!((conserved_depth(&pp(2.0, 0.0, PI / 2.0, 1.0)).unwrap() - 2.0).abs() < 1e-15);
        let p = pp(1.0, 0.0, PI / 6.0, 1.0);
        assert!((conserved_depth(&p).unwrap() - 2.0).abs() < 1e-14);
        for t in [1.0, -1.0, 5.0, -5.0] {
            assert!((conserved_depth(&flow_exact(&p, t)).unwrap() - 2.0).abs() <= 1e-12);
        }
        assert!(conserved_depth(&pp(1.0, 0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn exit_time_examples() {
        let chart = CuspChart::new(0.8, 1.0, 1).unwrap();
        let a = chart.a;
        let (lp, lm) = exit_time(&pp(a, 0.0, PI / 4.0, 1.0), &chart).unwrap();
        assert!((lp - 1.762_747_174_039_086).abs() < 1e-12 && lm.abs() < 1e-12);
        // oracle: integrate φ̇ = sin φ until φ = 3π/4
        let t = dopri5(|phi, _: &[f64; 1]| [1.0 / phi.sin()], [0.0], PI / 4.0, 3.0 * PI / 4.0, Tolerance::default())
            .unwrap();
        assert!((lp - t[0]).abs() < 1e-9);
        let (lp, lm) = exit_time(&pp(a, 0.0, 0.0, 1.0), &chart).unwrap();
        assert!(lp.is_infinite() && lm == 0.0);
        let (lp, _) = exit_time(&pp(2.0 * a, 0.0, PI / 2.0, -1.0), &chart).unwrap();
        assert!((lp - (2.0 + 3f64.sqrt()).ln()).abs() < 1e-12);
        assert!(exit_time(&pp(0.5 * a, 0.0, 1.0, 1.0), &chart).is_err());
    }

    #[test]
    fn exit_reflects_angle() {
        let chart = CuspChart::new(1.0, 1.0, 1).unwrap();
        for phi in [0.1, 0.5, 1.0, 1.5] {
            let p = pp(1.0, 0.0, phi, 1.0);
            let (lp, _) = exit_time(&p, &chart).unwrap();
            let q = flow_exact(&p, lp);
            assert!((q.y - 1.0).abs() < 1e-9 && (q.phi - (PI - phi)).abs() < 1e-9);
        }
    }

    #[test]
    fn liouville_volume_matches() {
        for d in 1..=3 {
            let chart = CuspChart::new(0.7, 1.3, d).unwrap();
            let v = liouville_volume(&chart, 9.0).unwrap();
            let e = liouville_volume_exact(&chart, 9.0);
            assert!((v - e).abs() <= 1e-10 * e.max(1.0), "d={d}: {v} vs {e}");
        }
    }

    #[test]
    fn deep_set_inner_integral_matches_closed_form() {
        let chart = CuspChart::new(1.0, 1.0, 1).unwrap();
        let m = deep_set_measure(&chart, 0.01, 0.25, 0.5).unwrap();
        // independent: outer Simpson with the analytic inner integral
        let e2n = 0.01f64.powf(0.5);
        let f = |phi: f64| deep_inner_exact(1f64.max(phi.sin() / e2n), 0.5);
        let k = e2n.asin();
        let oracle =
            adaptive_simpson(f, 0.0, k, 1e-12, 50).unwrap() + adaptive_simpson(f, k, PI / 2.0, 1e-12, 50).unwrap();
        assert!((m.numeric - oracle).abs() < 1e-9, "{} vs {oracle}", m.numeric);
    }

    #[test]
    fn deep_set_monotone_and_saturates() {
        let chart = CuspChart::new(1.0, 1.0, 1).unwrap();
        let full = 0.5 * PI * deep_inner_exact(1.0, 0.5);
        let near_one = deep_set_measure(&chart, 1.0 - 1e-9, 0.25, 0.5).unwrap().numeric;
        assert!((near_one - full).abs() < 1e-6);
        let mut prev = f64::INFINITY;
        for k in 1..12 {
            let eps = 0.5f64.powi(k);
            let v = deep_set_measure(&chart, eps, 0.25, 0.5).unwrap().numeric;
            assert!(v < prev);
            prev = v;
        }
    }

    fn arb_point() -> impl Strategy<Value = PhasePoint> {
        (0.2..5.0f64, -2.0..2.0f64, 1e-3..PI - 1e-3, prop::bool::ANY).prop_map(|(y, th, phi, s)| PhasePoint {
            y,
            theta: th,
            phi,
            u: if s { 1.0 } else { -1.0 },
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn group_law(p in arb_point(), s in -4.0..4.0f64, t in -4.0..4.0f64) {
            let a = flow_exact(&flow_exact(&p, s), t);
            let b = flow_exact(&p, s + t);
            prop_assert!((a.y - b.y).abs() <= 1e-10 * (1.0 + b.y));
            prop_assert!((a.theta - b.theta).abs() <= 1e-10 * (1.0 + b.theta.abs()));
            prop_assert!((a.phi - b.phi).abs() <= 1e-10);
        }

        #[test]
        fn depth_and_side_conserved(p in arb_point(), t in -3.0..3.0f64) {
            // φ is stored directly, so sin φ near the poles carries a relative
            // error of ulp(π)/min(φ, π − φ); keep orbits away from that regime
            prop_assume!(p.phi > 0.1 && p.phi < PI - 0.1);
            let q = flow_exact(&p, t);
            let d0 = conserved_depth(&p).unwrap();
            let d1 = conserved_depth(&q).unwrap();
            prop_assert!((d0 - d1).abs() <= 1e-12 * d0.max(1.0));
            prop_assert_eq!(p.u, q.u);
        }
    }
}
