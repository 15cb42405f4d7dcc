//! Closed geodesics of a perturbed metric in a free homotopy class.
//!
//! The primary path minimizes the energy of a discrete loop whose last vertex
//! is the deck image of the first, then polishes the result by shooting on the
//! geodesic ODE so that the reported length and samples are exact to the ODE
//! tolerance. The displacement function `L_γ(x) = d(x, γx)`, its gradient and
//! the Jacobi-field Hessian serve as independent checks.

use crate::error::{LabError, Result};
use crate::hyperbolic::{distance, flow_h2, wrap_angle, GroupPresentation, HomotopyClass, Mobius, Phase, Point};
use crate::metric::{direction_to, PerturbedMetric};
use crate::ode::{dopri5, Tolerance};
use crate::quad::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct FinderOptions {
    pub max_iter: usize,
    /// Scaled gradient tolerance for the discrete energy.
    pub grad_tol: f64,
    pub min_points: usize,
    pub points_per_length: f64,
    /// Polish the discrete minimizer by shooting on the geodesic ODE.
    pub refine: bool,
    pub ode_tol: Tolerance,
    /// Check positivity of the Jacobi Hessian before returning.
    pub check_hessian: bool,
}

impl Default for FinderOptions {
    fn default() -> Self {
        FinderOptions {
            max_iter: 500,
            grad_tol: 1e-9,
            min_points: 64,
            points_per_length: 20.0,
            refine: true,
            ode_tol: Tolerance::default(),
            check_hessian: true,
        }
    }
}

impl FinderOptions {
    pub fn points_for(&self, length: f64) -> usize {
        self.min_points.max((self.points_per_length * length).ceil() as usize)
    }
}

/// A point of the geodesic at arc length `s` with its unit coordinate velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeodesicSample {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl GeodesicSample {
    fn from_state(s: f64, st: &[f64; 4]) -> Self {
        GeodesicSample { s, x: st[0], y: st[1], vx: st[2], vy: st[3] }
    }

    pub fn state(&self) -> [f64; 4] {
        [self.x, self.y, self.vx, self.vy]
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn phase(&self) -> Phase {
        PerturbedMetric::state_phase(&self.state())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    /// Norm of the displacement gradient at the base point of the final orbit.
    pub gradient_norm: f64,
    /// Scaled gradient of the discrete energy when the minimization stopped.
    pub discrete_gradient: f64,
    /// Closing residual of the shooting solve (0 when refinement is off).
    pub shooting_residual: f64,
    /// Smallest eigenvalue of the transverse Jacobi Hessian (NaN if not computed).
    pub min_hessian: f64,
    pub iterations: usize,
    /// Discrete length after every accepted step, starting with the initial loop.
    pub length_history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ClosedGeodesic {
    pub class: HomotopyClass,
    /// Deck transformation closing the loop: the sample at `s = length` is its image of the first.
    pub map: Mobius,
    pub length: f64,
    /// `n + 1` samples equispaced in arc length, the last one closing the loop.
    pub samples: Vec<GeodesicSample>,
    pub certificate: Certificate,
    pub metric: PerturbedMetric,
    pub ode_tol: Tolerance,
}

impl ClosedGeodesic {
    /// Coordinate state at arc length `s` (taken modulo the length, in the lift
    /// that starts at the first sample).
    pub fn state_at(&self, s: f64) -> Result<[f64; 4]> {
        let s = s.rem_euclid(self.length);
        let h = self.length / (self.samples.len() - 1) as f64;
        let k = ((s / h).floor() as usize).min(self.samples.len() - 2);
        let base = &self.samples[k];
        let dt = s - base.s;
        if dt == 0.0 {
            return Ok(base.state());
        }
        if self.metric.is_hyperbolic() {
            let ph = flow_h2(base.phase(), dt);
            return Ok(self.metric.unit_state(ph));
        }
        self.metric.integrate(base.state(), dt, self.ode_tol)
    }

    pub fn phase_at(&self, s: f64) -> Result<Phase> {
        Ok(PerturbedMetric::state_phase(&self.state_at(s)?))
    }

    /// Distance between the deck image of the first sample and the last one,
    /// plus the angle mismatch of the velocities.
    pub fn closure_error(&self) -> f64 {
        let first = self.samples[0].phase();
        let last = self.samples.last().unwrap().phase();
        let img = self.map.apply_phase(first);
        distance(img.p, last.p) + wrap_angle(img.psi - last.psi).abs()
    }

    /// Largest deviation of the g'-speed from 1 over the samples.
    pub fn speed_defect(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| {
                let p = s.point();
                let v = [s.vy / p.y, s.vx / p.y];
                (self.metric.frame_norm2(p, v).sqrt() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// CSV rows: arc length, chart coordinates, velocity.
    pub fn to_table(&self) -> crate::output::Table {
        let mut t = crate::output::Table::new(&["s", "x", "y", "vx", "vy"]);
        for s in &self.samples {
            t.push([s.s, s.x, s.y, s.vx, s.vy].iter().map(|v| crate::output::fmt_f64(*v)).collect());
        }
        t
    }
}

/// Vertices on the axis of `map`, starting at its highest point and equally
/// spaced in g'-arc length.
pub fn initial_loop(metric: &PerturbedMetric, map: &Mobius, n: usize) -> Result<Vec<Point>> {
    let axis = map.axis()?;
    let t0 = axis.top_parameter();
    let step = axis.length / n as f64;
    if metric.is_hyperbolic() {
        return Ok((0..n).map(|k| axis.point(t0 + step * k as f64)).collect());
    }
    let gl = GaussLegendre::new(8);
    let speed = |t: f64| {
        let ph = axis.phase(t);
        metric.frame_norm2(ph.p, ph.direction()).sqrt()
    };
    let arc = |a: f64, b: f64| gl.integrate(speed, a, b);
    let total: f64 = (0..n).map(|k| arc(t0 + step * k as f64, t0 + step * (k + 1) as f64)).sum();
    let target = total / n as f64;
    let mut ts = vec![t0];
    let mut t = t0;
    for _ in 1..n {
        let prev = t;
        t += target;
        for _ in 0..50 {
            let r = arc(prev, t) - target;
            t -= r / speed(t);
            if r.abs() < 1e-15 * target {
                break;
            }
        }
        ts.push(t);
    }
    Ok(ts.into_iter().map(|t| axis.point(t)).collect())
}

/// Closed geodesic of `metric` in `class`, started from the hyperbolic axis.
pub fn geodesic_in_class(
    metric: &PerturbedMetric,
    group: &GroupPresentation,
    class: &HomotopyClass,
    opts: &FinderOptions,
) -> Result<ClosedGeodesic> {
    class.validate(group)?;
    let map = group.evaluate_word(class)?;
    let n = opts.points_for(map.trace_length()?);
    let init = initial_loop(metric, &map, n)?;
    geodesic_from_loop(metric, class.clone(), map, init, opts)
}

/// Closed geodesic from an explicit initial loop; vertex `n` is `map(init[0])`.
pub fn geodesic_from_loop(
    metric: &PerturbedMetric,
    class: HomotopyClass,
    map: Mobius,
    init: Vec<Point>,
    opts: &FinderOptions,
) -> Result<ClosedGeodesic> {
    map.trace_length()?;
    if init.len() < 3 {
        return Err(LabError::input("initial loop needs at least three vertices"));
    }
    metric.check_positive(&init)?;
    let mut lp = DiscreteLoop { metric, map, points: init, gl: GaussLegendre::new(8) };
    let stats = lp.minimize(opts)?;
    let (start, length, residual) = if opts.refine {
        // the closing residual floors near the integrator tolerance; tighten once
        // per retry before giving up
        let mut tol = opts.ode_tol;
        let mut tries = 0;
        loop {
            match lp.shoot(tol) {
                Err(LabError::NoConvergence(_)) if tries < 2 && !metric.is_hyperbolic() => {
                    tries += 1;
                    tol.rtol /= 10.0;
                    tol.atol /= 10.0;
                }
                r => break r?,
            }
        }
    } else {
        let p0 = lp.points[0];
        let ph = Phase { p: p0, psi: direction_to(p0, lp.points[1]) };
        (metric.unit_state(ph), stats.length, 0.0)
    };
    let n = lp.points.len();
    let samples = sample_orbit(metric, start, length, n, opts.ode_tol)?;
    let mut geo = ClosedGeodesic {
        class,
        map,
        length,
        samples,
        certificate: Certificate {
            gradient_norm: f64::NAN,
            discrete_gradient: stats.gradient,
            shooting_residual: residual,
            min_hessian: f64::NAN,
            iterations: stats.iterations,
            length_history: stats.history,
        },
        metric: metric.clone(),
        ode_tol: opts.ode_tol,
    };
    geo.certificate.gradient_norm = closed_orbit_gradient(&geo);
    if opts.check_hessian {
        let h = jacobi_hessian(&geo)?;
        geo.certificate.min_hessian = h.min_eigenvalue;
        if !(h.min_eigenvalue > 0.0) {
            return Err(LabError::NotPositiveDefinite(h.min_eigenvalue));
        }
    }
    Ok(geo)
}

fn sample_orbit(
    metric: &PerturbedMetric,
    start: [f64; 4],
    length: f64,
    n: usize,
    tol: Tolerance,
) -> Result<Vec<GeodesicSample>> {
    let h = length / n as f64;
    let mut out = Vec::with_capacity(n + 1);
    let mut st = start;
    out.push(GeodesicSample::from_state(0.0, &st));
    for k in 1..=n {
        st = if metric.is_hyperbolic() {
            metric.unit_state(flow_h2(PerturbedMetric::state_phase(&st), h))
        } else {
            metric.integrate(st, h, tol)?
        };
        out.push(GeodesicSample::from_state(k as f64 * h, &st));
    }
    Ok(out)
}

/// Displacement gradient at the base point of a closed orbit, where the
/// connecting geodesic from `x` to `γx` is the orbit itself.
fn closed_orbit_gradient(geo: &ClosedGeodesic) -> f64 {
    let first = geo.samples[0];
    let last = *geo.samples.last().unwrap();
    let x = first.point();
    let u0 = frame_velocity(&first.state());
    let ul = frame_velocity(&last.state());
    let g = gradient_from_ends(&geo.metric, x, &geo.map, u0, ul);
    (g[0] * g[0] + g[1] * g[1]).sqrt()
}

fn frame_velocity(s: &[f64; 4]) -> [f64; 2] {
    [s[3] / s[1], s[2] / s[1]]
}

/// `−ċ(0)♭ + (dγ)ᵀ ċ(L)♭` in frame components at `x`.
fn gradient_from_ends(metric: &PerturbedMetric, x: Point, map: &Mobius, u0: [f64; 2], ul: [f64; 2]) -> [f64; 2] {
    // dγ turns frame angles by −α; pull ċ(L) back by turning +α
    let alpha = map.rotation_at(x);
    let (s, c) = alpha.sin_cos();
    // ψ measured from e_y: components (cos ψ, sin ψ)
    let w = [c * ul[0] - s * ul[1], s * ul[0] + c * ul[1]];
    let d = [w[0] - u0[0], w[1] - u0[1]];
    let g = metric.frame_metric(x);
    [g[0][0] * d[0] + g[0][1] * d[1], g[1][0] * d[0] + g[1][1] * d[1]]
}

struct MinimizeStats {
    length: f64,
    gradient: f64,
    iterations: usize,
    history: Vec<f64>,
}

struct DiscreteLoop<'a> {
    metric: &'a PerturbedMetric,
    map: Mobius,
    points: Vec<Point>,
    gl: GaussLegendre,
}

const GRAD_STEP: f64 = 1e-6;
const HESS_STEP: f64 = 1e-4;

impl DiscreteLoop<'_> {
    fn n(&self) -> usize {
        self.points.len()
    }

    /// Vertex `k` displaced by local coordinates `(δx / y, δ ln y)`.
    fn moved(p: Point, u: [f64; 2]) -> Point {
        Point::new(p.x + p.y * u[0], p.y * u[1].exp())
    }

    fn endpoint(&self, k: usize, u: [f64; 2]) -> Point {
        let n = self.n();
        if k + 1 < n {
            Self::moved(self.points[k + 1], u)
        } else {
            self.map.apply_point(Self::moved(self.points[0], u))
        }
    }

    fn segment(&self, k: usize, v: [f64; 4]) -> f64 {
        let a = Self::moved(self.points[k], [v[0], v[1]]);
        let b = self.endpoint(k, [v[2], v[3]]);
        self.metric.segment_length(&self.gl, a, b)
    }

    fn lengths_at(&self, pts: &[Point]) -> Vec<f64> {
        let n = pts.len();
        (0..n)
            .map(|k| {
                let b = if k + 1 < n { pts[k + 1] } else { self.map.apply_point(pts[0]) };
                self.metric.segment_length(&self.gl, pts[k], b)
            })
            .collect()
    }

    /// Energy gradient and Hessian in the local coordinates of every vertex.
    fn derivatives(&self, lens: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n();
        let dim = 2 * n;
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for k in 0..n {
            let idx = [2 * k, 2 * k + 1, (2 * k + 2) % dim, (2 * k + 3) % dim];
            let s0 = lens[k];
            let f = |v: [f64; 4]| self.segment(k, v);
            let e = |i: usize, h: f64| {
                let mut v = [0.0; 4];
                v[i] = h;
                v
            };
            let mut gs = [0.0; 4];
            for (i, g) in gs.iter_mut().enumerate() {
                *g = (f(e(i, GRAD_STEP)) - f(e(i, -GRAD_STEP))) / (2.0 * GRAD_STEP);
            }
            let h = HESS_STEP;
            let mut hs = [[0.0; 4]; 4];
            for i in 0..4 {
                hs[i][i] = (f(e(i, h)) - 2.0 * s0 + f(e(i, -h))) / (h * h);
                for j in 0..i {
                    let pp = |a: f64, b: f64| {
                        let mut v = [0.0; 4];
                        v[i] = a;
                        v[j] = b;
                        f(v)
                    };
                    let d = (pp(h, h) - pp(h, -h) - pp(-h, h) + pp(-h, -h)) / (4.0 * h * h);
                    hs[i][j] = d;
                    hs[j][i] = d;
                }
            }
            for i in 0..4 {
                grad[idx[i]] += 2.0 * s0 * gs[i];
                for j in 0..4 {
                    hess[(idx[i], idx[j])] += 2.0 * (gs[i] * gs[j] + s0 * hs[i][j]);
                }
            }
        }
        (grad, hess)
    }

    fn apply_step(&self, delta: &DVector<f64>, scale: f64) -> Vec<Point> {
        self.points
            .iter()
            .enumerate()
            .map(|(k, &p)| Self::moved(p, [scale * delta[2 * k], scale * delta[2 * k + 1]]))
            .collect()
    }

    fn minimize(&mut self, opts: &FinderOptions) -> Result<MinimizeStats> {
        let n = self.n();
        let mut lens = self.lengths_at(&self.points);
        let mut energy: f64 = lens.iter().map(|l| l * l).sum();
        let mut length: f64 = lens.iter().sum();
        let mut history = vec![length];
        let mut mu = 1e-9;
        let mut gnorm = f64::INFINITY;
        let mut iterations = 0;
        let accept = |e_new: f64, l_new: f64, e: f64, l: f64| e_new < e && l_new <= l * (1.0 + 1e-14);
        while iterations < opts.max_iter {
            let (grad, hess) = self.derivatives(&lens);
            gnorm = grad.amax() / (2.0 * length / n as f64);
            if gnorm <= opts.grad_tol {
                break;
            }
            iterations += 1;
            let scale = hess.diagonal().amax().max(1e-300);
            let mut stepped = false;
            while mu <= 1e8 {
                let damped = &hess + DMatrix::identity(2 * n, 2 * n) * (mu * scale);
                if let Some(ch) = damped.cholesky() {
                    let delta = -ch.solve(&grad);
                    let pts = self.apply_step(&delta, 1.0);
                    let l_new = self.lengths_at(&pts);
                    let e_new: f64 = l_new.iter().map(|l| l * l).sum();
                    let len_new: f64 = l_new.iter().sum();
                    if accept(e_new, len_new, energy, length) {
                        self.points = pts;
                        lens = l_new;
                        energy = e_new;
                        length = len_new;
                        mu = (mu * 0.1).max(1e-12);
                        stepped = true;
                        break;
                    }
                }
                mu *= 10.0;
            }
            if !stepped {
                // Armijo gradient descent
                mu = 1e-6;
                let g2 = grad.norm_squared();
                let mut t = 1.0 / scale;
                for _ in 0..60 {
                    let pts = self.apply_step(&grad, -t);
                    let l_new = self.lengths_at(&pts);
                    let e_new: f64 = l_new.iter().map(|l| l * l).sum();
                    let len_new: f64 = l_new.iter().sum();
                    if e_new <= energy - 1e-4 * t * g2 && accept(e_new, len_new, energy, length) {
                        self.points = pts;
                        lens = l_new;
                        energy = e_new;
                        length = len_new;
                        stepped = true;
                        break;
                    }
                    t *= 0.5;
                }
            }
            if !stepped {
                // no representable decrease left: the floor of the finite differences
                break;
            }
            history.push(length);
        }
        if !(gnorm <= opts.grad_tol) && !(gnorm <= 1e-6) {
            return Err(LabError::NoConvergence(format!(
                "discrete loop stopped after {iterations} iterations at scaled gradient {gnorm:.3e}"
            )));
        }
        Ok(MinimizeStats { length, gradient: gnorm, iterations, history })
    }

    /// Newton shooting on (transverse offset σ, angle ψ, period T) so that the
    /// orbit closes up under the deck transformation.
    fn shoot(&self, tol: Tolerance) -> Result<([f64; 4], f64, f64)> {
        let p0 = self.points[0];
        let psi0 = direction_to(p0, self.points[1]);
        let normal = Phase { p: p0, psi: psi0 + 0.5 * std::f64::consts::PI };
        let t0: f64 = self.lengths_at(&self.points).iter().sum();
        let metric = self.metric;
        let inv = self.map.inverse();
        let start_of = |z: &[f64; 3]| -> [f64; 4] {
            let p = flow_h2(normal, z[0]).p;
            metric.unit_state(Phase { p, psi: z[1] })
        };
        let residual = |z: &[f64; 3]| -> Result<[f64; 3]> {
            let s0 = start_of(z);
            let end = if metric.is_hyperbolic() {
                metric.unit_state(flow_h2(PerturbedMetric::state_phase(&s0), z[2]))
            } else {
                metric.integrate(s0, z[2], tol)?
            };
            let back = inv.apply_phase(PerturbedMetric::state_phase(&end));
            let start = PerturbedMetric::state_phase(&s0);
            Ok([(back.p.x - start.p.x) / start.p.y, (back.p.y / start.p.y).ln(), wrap_angle(back.psi - start.psi)])
        };
        let mut z = [0.0, psi0, t0];
        let mut r = residual(&z)?;
        let norm = |r: &[f64; 3]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for _ in 0..30 {
            if norm(&r) <= 1e-13 {
                break;
            }
            let h = 1e-6;
            let mut jac = nalgebra::Matrix3::zeros();
            for j in 0..3 {
                let mut zp = z;
                let mut zm = z;
                zp[j] += h;
                zm[j] -= h;
                let (rp, rm) = (residual(&zp)?, residual(&zm)?);
                for i in 0..3 {
                    jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
            let Some(lu) = jac.lu().solve(&nalgebra::Vector3::new(r[0], r[1], r[2])) else {
                return Err(LabError::NoConvergence("singular shooting Jacobian".into()));
            };
            // backtrack on the residual norm
            let mut t = 1.0;
            let before = norm(&r);
            loop {
                let zn = [z[0] - t * lu[0], z[1] - t * lu[1], z[2] - t * lu[2]];
                let rn = residual(&zn)?;
                if norm(&rn) < before || t < 1e-3 {
                    z = zn;
                    r = rn;
                    break;
                }
                t *= 0.5;
            }
            if norm(&r) >= before {
                break;
            }
        }
        let res = norm(&r);
        if !(res <= 1e-9) {
            return Err(LabError::NoConvergence(format!("shooting stopped at closing residual {res:.3e}")));
        }
        if !(z[2] > 0.0) {
            return Err(LabError::NoConvergence(format!("shooting produced non-positive period {}", z[2])));
        }
        Ok((start_of(&z), z[2], res))
    }
}

/// Geodesic from `a` to `b` for the perturbed metric: initial frame angle,
/// length and end state.
#[derive(Debug, Clone, Copy)]
pub struct Connection {
    pub psi: f64,
    pub length: f64,
    pub end: [f64; 4],
}

/// Solve the two-point problem by shooting on (ψ, T) from the hyperbolic guess.
pub fn connect(metric: &PerturbedMetric, a: Point, b: Point, tol: Tolerance) -> Result<Connection> {
    let psi0 = direction_to(a, b);
    let d0 = distance(a, b);
    if metric.is_hyperbolic() {
        let end = metric.unit_state(flow_h2(Phase { p: a, psi: psi0 }, d0));
        return Ok(Connection { psi: psi0, length: d0, end });
    }
    let shoot = |z: [f64; 2]| -> Result<([f64; 2], [f64; 4])> {
        let end = metric.integrate(metric.unit_state(Phase { p: a, psi: z[0] }), z[1], tol)?;
        Ok(([(end[0] - b.x) / b.y, (end[1] / b.y).ln()], end))
    };
    let mut z = [psi0, d0];
    let (mut r, mut end) = shoot(z)?;
    for _ in 0..30 {
        if r[0].abs().max(r[1].abs()) <= 1e-13 {
            break;
        }
        let h = 1e-6;
        let mut jac = nalgebra::Matrix2::zeros();
        for j in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[j] += h;
            zm[j] -= h;
            let (rp, _) = shoot(zp)?;
            let (rm, _) = shoot(zm)?;
            for i in 0..2 {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let Some(step) = jac.lu().solve(&nalgebra::Vector2::new(r[0], r[1])) else {
            return Err(LabError::NoConvergence("singular two-point Jacobian".into()));
        };
        let before = r[0].abs().max(r[1].abs());
        z = [z[0] - step[0], z[1] - step[1]];
        (r, end) = shoot(z)?;
        if r[0].abs().max(r[1].abs()) >= before {
            break;
        }
    }
    let res = r[0].abs().max(r[1].abs());
    if !(res <= 1e-9) {
        return Err(LabError::NoConvergence(format!("two-point solve stopped at residual {res:.3e}")));
    }
    Ok(Connection { psi: z[0], length: z[1], end })
}

/// `L_γ(x) = d_{g'}(x, γx)`.
pub fn displacement(metric: &PerturbedMetric, x: Point, map: &Mobius, tol: Tolerance) -> Result<f64> {
    Ok(connect(metric, x, map.apply_point(x), tol)?.length)
}

/// Gradient of the displacement function as a covector in frame components
/// `(e_y, e_x)` at `x`.
pub fn displacement_gradient(metric: &PerturbedMetric, x: Point, map: &Mobius, tol: Tolerance) -> Result<[f64; 2]> {
    let c = connect(metric, x, map.apply_point(x), tol)?;
    let dir = [c.psi.cos(), c.psi.sin()];
    let n = metric.frame_norm2(x, dir).sqrt();
    let u0 = [dir[0] / n, dir[1] / n];
    let ul = frame_velocity(&c.end);
    Ok(gradient_from_ends(metric, x, map, u0, ul))
}

#[derive(Debug, Clone, Serialize)]
pub struct TransverseHessian {
    /// Quadratic form on normal directions (1×1 on a surface).
    pub matrix: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
}

/// Second variation of the displacement function across the orbit:
/// `w'(L) − w'(0)` for the Jacobi solution of `w'' + K w = 0` with
/// `w(0) = w(L) = 1`, i.e. `∫ ẇ² − K w²`.
pub fn jacobi_hessian(geo: &ClosedGeodesic) -> Result<TransverseHessian> {
    let metric = &geo.metric;
    let s0 = geo.samples[0].state();
    let rhs = |_: f64, z: &[f64; 8]| -> [f64; 8] {
        let g = metric.geodesic_rhs(&[z[0], z[1], z[2], z[3]]);
        let k = metric.curvature(Point::new(z[0], z[1]));
        [g[0], g[1], g[2], g[3], z[5], -k * z[4], z[7], -k * z[6]]
    };
    let z0 = [s0[0], s0[1], s0[2], s0[3], 1.0, 0.0, 0.0, 1.0];
    let z = dopri5(rhs, z0, 0.0, geo.length, geo.ode_tol)?;
    if z[6].abs() < 1e-300 {
        return Err(LabError::NoConvergence("conjugate point along the orbit".into()));
    }
    let k = (1.0 - z[4]) / z[6];
    let value = z[5] + k * z[7] - k;
    Ok(TransverseHessian { matrix: vec![vec![value]], min_eigenvalue: value })
}

/// Second difference of `L_γ` along the normal geodesic through a sample of
/// the orbit (finite-difference oracle for [`jacobi_hessian`]).
pub fn displacement_hessian_fd(geo: &ClosedGeodesic, step: f64) -> Result<f64> {
    let metric = &geo.metric;
    let base = geo.samples[0];
    let ph = base.phase();
    let normal = Phase { p: ph.p, psi: ph.psi + 0.5 * std::f64::consts::PI };
    let at = |s: f64| -> Result<f64> {
        let p = if metric.is_hyperbolic() {
            flow_h2(normal, s).p
        } else {
            let st = metric.integrate(metric.unit_state(normal), s, geo.ode_tol)?;
            Point::new(st[0], st[1])
        };
        displacement(metric, p, &geo.map, geo.ode_tol)
    };
    let (lp, l0, lm) = (at(step)?, at(0.0)?, at(-step)?);
    Ok((lp - 2.0 * l0 + lm) / (step * step))
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumEntry {
    pub word: String,
    #[serde(skip)]
    pub class: HomotopyClass,
    pub length: f64,
    pub trace_length: f64,
    pub gradient_norm: f64,
    pub min_hessian: f64,
}

/// The marked length spectrum on a finite list of classes, in input order.
pub fn marked_length_spectrum(
    metric: &PerturbedMetric,
    group: &GroupPresentation,
    classes: &[HomotopyClass],
    opts: &FinderOptions,
) -> Result<Vec<SpectrumEntry>> {
    let results: Vec<Result<SpectrumEntry>> = classes
        .par_iter()
        .map(|c| {
            let geo = geodesic_in_class(metric, group, c, opts)?;
            Ok(SpectrumEntry {
                word: group.format_word(c),
                class: c.clone(),
                length: geo.length,
                trace_length: geo.map.trace_length()?,
                gradient_norm: geo.certificate.gradient_norm,
                min_hessian: geo.certificate.min_hessian,
            })
        })
        .collect();
    let mut out = Vec::with_capacity(classes.len());
    let mut failures = Vec::new();
    let mut validation = true;
    for (c, r) in classes.iter().zip(results) {
        match r {
            Ok(e) => out.push(e),
            Err(e) => {
                validation &= e.is_validation();
                failures.push(format!("class {}: {e}", group.format_word(c)));
            }
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else if validation {
        Err(LabError::input(failures.join("; ")))
    } else {
        Err(LabError::NoConvergence(failures.join("; ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::Surface;
    use crate::tensor::{ConformalBump, SurfaceBump};
    use std::sync::Arc;

    fn torus() -> GroupPresentation {
        GroupPresentation::one_cusp_genus_one()
    }

    fn fast() -> FinderOptions {
        FinderOptions { check_hessian: false, ..Default::default() }
    }

    #[test]
    fn unperturbed_length_matches_trace() {
        let g = torus();
        let c = g.parse_word("ab").unwrap();
        let geo = geodesic_in_class(&PerturbedMetric::hyperbolic(), &g, &c, &FinderOptions::default()).unwrap();
        assert!((geo.length - 1.924_847_300_238_487).abs() < 1e-6, "{}", geo.length);
        assert!(geo.closure_error() < 1e-8);
        assert!(geo.speed_defect() < 1e-8);
        assert!(geo.certificate.gradient_norm < 1e-9);
        assert!(geo.certificate.min_hessian > 0.0);
    }

    #[test]
    fn square_class_doubles() {
        let g = torus();
        let c = g.parse_word("abab").unwrap();
        let geo = geodesic_in_class(&PerturbedMetric::hyperbolic(), &g, &c, &fast()).unwrap();
        // tr(M²) = tr(M)² − 2 = 7
        assert!((geo.length - 2.0 * 3.5f64.acosh()).abs() < 1e-6);
        assert!((geo.length - 2.0 * 1.924_847_300_238_487).abs() < 1e-6);
    }

    #[test]
    fn displacement_gradient_vanishes_on_axis_and_matches_fd() {
        let m = Mobius::new(2.0, 1.0, 1.0, 1.0).unwrap();
        let metric = PerturbedMetric::hyperbolic();
        let tol = Tolerance::default();
        let ax = m.axis().unwrap();
        for t in [-0.5, 0.0, 0.7] {
            let g = displacement_gradient(&metric, ax.point(t), &m, tol).unwrap();
            assert!(g[0].hypot(g[1]) <= 1e-9, "{g:?}");
        }
        let x = Point::new(0.3, 0.6);
        let g = displacement_gradient(&metric, x, &m, tol).unwrap();
        let h = 1e-5;
        let l = |p: Point| displacement(&metric, p, &m, tol).unwrap();
        let gy = (l(Point::new(x.x, x.y + h * x.y)) - l(Point::new(x.x, x.y - h * x.y))) / (2.0 * h);
        let gx = (l(Point::new(x.x + h * x.y, x.y)) - l(Point::new(x.x - h * x.y, x.y))) / (2.0 * h);
        assert!((g[0] - gy).abs() < 1e-6 && (g[1] - gx).abs() < 1e-6, "{g:?} vs {gy} {gx}");
    }

    #[test]
    fn jacobi_hessian_is_two_tanh_and_matches_fd() {
        let g = torus();
        let c = g.parse_word("ab").unwrap();
        let geo = geodesic_in_class(&PerturbedMetric::hyperbolic(), &g, &c, &fast()).unwrap();
        let h = jacobi_hessian(&geo).unwrap();
        assert!((h.min_eigenvalue - 2.0 * (0.5 * geo.length).tanh()).abs() < 1e-9);
        let fd = displacement_hessian_fd(&geo, 1e-3).unwrap();
        assert!((fd - h.min_eigenvalue).abs() <= 1e-3 * h.min_eigenvalue, "{fd} {}", h.min_eigenvalue);
    }

    #[test]
    fn inverse_and_conjugate_words_agree() {
        let g = torus();
        let metric = PerturbedMetric::hyperbolic();
        let c = g.parse_word("aaB").unwrap();
        let l0 = geodesic_in_class(&metric, &g, &c, &fast()).unwrap().length;
        let l1 = geodesic_in_class(&metric, &g, &c.inverse(), &fast()).unwrap().length;
        let conj = HomotopyClass::new(vec![2, 1, 1, -2, -2]).unwrap();
        let l2 = geodesic_in_class(&metric, &g, &conj, &fast()).unwrap().length;
        assert!((l0 - l1).abs() <= 1e-9 && (l0 - l2).abs() <= 1e-9);
    }

    #[test]
    fn parabolic_class_is_rejected() {
        let g = torus();
        // the commutator of the punctured torus is parabolic
        let c = g.parse_word("abAB").unwrap();
        let err = geodesic_in_class(&PerturbedMetric::hyperbolic(), &g, &c, &fast()).unwrap_err();
        assert!(matches!(err, LabError::NotHyperbolic { .. }));
    }

    #[test]
    fn bump_off_the_orbit_leaves_length_unchanged() {
        let g = torus();
        let s = Arc::new(Surface::preset("one-cusp-genus-1", None).unwrap());
        let c = g.parse_word("ab").unwrap();
        let geo0 = geodesic_in_class(&PerturbedMetric::hyperbolic(), &g, &c, &fast()).unwrap();
        // a bump high in the cusp, far from the orbit
        let f = ConformalBump { bump: SurfaceBump::new(s, Point::new(0.0, 3.0), 0.3), amplitude: 2.0 };
        let metric = PerturbedMetric::new(Arc::new(f), 1e-2).unwrap();
        let geo = geodesic_in_class(&metric, &g, &c, &fast()).unwrap();
        assert!((geo.length - geo0.length).abs() < 1e-10);
    }

    #[test]
    fn discrete_length_is_monotone() {
        let g = torus();
        let s = Arc::new(Surface::preset("one-cusp-genus-1", None).unwrap());
        let c = g.parse_word("ab").unwrap();
        let map = g.evaluate_word(&c).unwrap();
        let ax = map.axis().unwrap();
        // off the axis, so the orbit has to move
        let top = ax.phase(ax.top_parameter());
        let centre = flow_h2(Phase { p: top.p, psi: top.psi + 0.5 * std::f64::consts::PI }, 0.15).p;
        let f = ConformalBump { bump: SurfaceBump::new(s, centre, 0.3), amplitude: 2.0 };
        let metric = PerturbedMetric::new(Arc::new(f), 1e-2).unwrap();
        let geo = geodesic_in_class(&metric, &g, &c, &FinderOptions::default()).unwrap();
        let h = &geo.certificate.length_history;
        assert!(geo.certificate.iterations >= 1);
        assert!(h.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14)));
        assert!(geo.length > geo_len0(&g, &c));
        assert!(geo.closure_error() < 1e-8, "{}", geo.closure_error());
        assert!(geo.speed_defect() < 1e-8);
        assert!(geo.certificate.gradient_norm < 1e-9, "{}", geo.certificate.gradient_norm);
        assert!(geo.certificate.min_hessian > 0.0);
    }

    fn geo_len0(g: &GroupPresentation, c: &HomotopyClass) -> f64 {
        g.evaluate_word(c).unwrap().trace_length().unwrap()
    }
}
