//! Symmetric tensors on the upper half-plane and on the model cusp.
//!
//! Components live in the orthonormal coframe `(dy/y, dx/y)`; index 0 is the
//! `y` direction and index 1 the `x` (= θ) direction. With `e_y = y∂_y`,
//! `e_x = y∂_x` the Levi-Civita connection is
//! `∇_{e_x} e_x = e_y`, `∇_{e_x} e_y = −e_x`, `∇_{e_y} = 0`.

use crate::error::{LabError, Result};
use crate::hyperbolic::{Phase, Point};
use crate::surface::Surface;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Dense rank-m tensor over ℝ², flattened with the first index most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rank: usize,
    pub comps: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rank: usize) -> Self {
        Tensor { rank, comps: vec![0.0; 1 << rank] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { rank: 0, comps: vec![v] }
    }

    pub fn vector(v0: f64, v1: f64) -> Self {
        Tensor { rank: 1, comps: vec![v0, v1] }
    }

    pub fn matrix(m00: f64, m01: f64, m11: f64) -> Self {
        Tensor { rank: 2, comps: vec![m00, m01, m01, m11] }
    }

    pub fn metric() -> Self {
        Tensor::matrix(1.0, 0.0, 1.0)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.comps[flat(idx)]
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.comps.iter_mut().for_each(|c| *c *= s);
        self
    }

    pub fn add(&self, o: &Tensor) -> Result<Tensor> {
        if self.rank != o.rank {
            return Err(LabError::input(format!("rank mismatch: {} vs {}", self.rank, o.rank)));
        }
        Ok(Tensor { rank: self.rank, comps: self.comps.iter().zip(&o.comps).map(|(a, b)| a + b).collect() })
    }

    /// Frame inner product Σ T_I S_I.
    pub fn dot(&self, o: &Tensor) -> f64 {
        self.comps.iter().zip(&o.comps).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Full contraction with a vector, m times.
    pub fn contract(&self, v: [f64; 2]) -> f64 {
        let mut acc = self.comps.clone();
        for _ in 0..self.rank {
            let half = acc.len() / 2;
            acc = (0..half).map(|i| v[0] * acc[i] + v[1] * acc[i + half]).collect();
        }
        acc[0]
    }

    /// Largest difference between a component and its index permutations.
    pub fn asymmetry(&self) -> f64 {
        let n = self.comps.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let idx = unflat(i, self.rank);
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            worst = worst.max((self.comps[i] - self.comps[flat(&sorted)]).abs());
        }
        worst
    }

    /// Average over index permutations.
    pub fn symmetrize(&self) -> Tensor {
        let n = self.comps.len();
        let mut out = vec![0.0; n];
        let mut buckets: std::collections::HashMap<Vec<usize>, (f64, usize)> = Default::default();
        for i in 0..n {
            let mut key = unflat(i, self.rank);
            key.sort_unstable();
            let e = buckets.entry(key).or_insert((0.0, 0));
            e.0 += self.comps[i];
            e.1 += 1;
        }
        for (i, o) in out.iter_mut().enumerate() {
            let mut key = unflat(i, self.rank);
            key.sort_unstable();
            let (s, c) = buckets[&key];
            *o = s / c as f64;
        }
        Tensor { rank: self.rank, comps: out }
    }

    /// Components of `γ^*T` at `z` given `T` at `γz`, where `dγ` rotates
    /// tangent vectors by `alpha`.
    pub fn pull_by_rotation(&self, alpha: f64) -> Tensor {
        if self.rank == 0 || alpha == 0.0 {
            return self.clone();
        }
        let (s, c) = alpha.sin_cos();
        // columns: images of e_y and e_x
        let r = [[c, s], [-s, c]];
        let n = self.comps.len();
        let mut cur = self.comps.clone();
        for slot in 0..self.rank {
            let stride = 1 << (self.rank - 1 - slot);
            let mut next = vec![0.0; n];
            for (i, nx) in next.iter_mut().enumerate() {
                let bit = (i / stride) & 1;
                let base = i - bit * stride;
                *nx = r[0][bit] * cur[base] + r[1][bit] * cur[base + stride];
            }
            cur = next;
        }
        Tensor { rank: self.rank, comps: cur }
    }
}

fn flat(idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| 2 * acc + i)
}

fn unflat(mut i: usize, rank: usize) -> Vec<usize> {
    let mut out = vec![0; rank];
    for k in (0..rank).rev() {
        out[k] = i & 1;
        i >>= 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Compact,
    /// ‖f‖_x · y^N stays bounded.
    Decay(f64),
    Unbounded,
}

/// A symmetric tensor field given by an evaluator.
pub trait TensorField: Send + Sync {
    fn rank(&self) -> usize;

    fn eval(&self, p: Point) -> Tensor;

    /// Coordinate derivatives `(∂_y T, ∂_x T)` of the frame components.
    /// Default: fourth-order central differences with step `1e−4·y`.
    fn derivatives(&self, p: Point) -> [Tensor; 2] {
        fd_derivatives(|q| self.eval(q), p)
    }

    fn support(&self) -> Support {
        Support::Unbounded
    }
}

/// Fourth-order central differences of `f` with step `1e−4·y`.
pub fn fd_derivatives(f: impl Fn(Point) -> Tensor, p: Point) -> [Tensor; 2] {
    let h = 1e-4 * p.y;
    let d = |dx: f64, dy: f64| {
        let at = |k: f64| f(Point::new(p.x + k * dx, p.y + k * dy));
        let (p2, p1, m1, m2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
        let comps = (0..p1.comps.len())
            .map(|i| (-p2.comps[i] + 8.0 * p1.comps[i] - 8.0 * m1.comps[i] + m2.comps[i]) / (12.0 * h))
            .collect();
        Tensor { rank: p1.rank, comps }
    };
    [d(0.0, h), d(h, 0.0)]
}

impl<T: TensorField + ?Sized> TensorField for Arc<T> {
    fn rank(&self) -> usize {
        (**self).rank()
    }
    fn eval(&self, p: Point) -> Tensor {
        (**self).eval(p)
    }
    fn derivatives(&self, p: Point) -> [Tensor; 2] {
        (**self).derivatives(p)
    }
    fn support(&self) -> Support {
        (**self).support()
    }
}

impl<T: TensorField + ?Sized> TensorField for Box<T> {
    fn rank(&self) -> usize {
        (**self).rank()
    }
    fn eval(&self, p: Point) -> Tensor {
        (**self).eval(p)
    }
    fn derivatives(&self, p: Point) -> [Tensor; 2] {
        (**self).derivatives(p)
    }
    fn support(&self) -> Support {
        (**self).support()
    }
}

/// `π_m^* h` at a unit tangent vector.
pub fn pullback_pi_m(h: &dyn TensorField, ph: Phase) -> f64 {
    h.eval(ph.p).contract(ph.direction())
}

/// `(∇T)(e_k; e_{i1}, …)` with the derivative index first.
pub fn covariant_derivative(h: &dyn TensorField, p: Point) -> Tensor {
    let t = h.eval(p);
    let [dy, dx] = h.derivatives(p);
    let m = t.rank;
    let n = t.comps.len();
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        let idx = unflat(i, m);
        // k = 0 (e_y): plain derivative
        out[i] = p.y * dy.comps[i];
        // k = 1 (e_x): derivative minus connection terms
        let mut v = p.y * dx.comps[i];
        for slot in 0..m {
            let mut j = idx.clone();
            // ∇_{e_x} e_x = e_y, ∇_{e_x} e_y = −e_x
            if idx[slot] == 1 {
                j[slot] = 0;
                v -= t.comps[flat(&j)];
            } else {
                j[slot] = 1;
                v += t.comps[flat(&j)];
            }
        }
        out[n + i] = v;
    }
    Tensor { rank: m + 1, comps: out }
}

/// `Dh = σ(∇h)`.
pub fn symmetric_derivative_at(h: &dyn TensorField, p: Point) -> Tensor {
    covariant_derivative(h, p).symmetrize()
}

/// `D*h = Tr ∇h` (contraction of the derivative index with the first slot).
pub fn divergence_at(h: &dyn TensorField, p: Point) -> Result<Tensor> {
    if h.rank() == 0 {
        return Err(LabError::input("divergence of a function is undefined"));
    }
    let nab = covariant_derivative(h, p);
    let m = h.rank();
    let n_out = 1 << (m - 1);
    let n = 1 << m;
    let comps = (0..n_out).map(|i| nab.comps[i] + nab.comps[n + n_out + i]).collect();
    Ok(Tensor { rank: m - 1, comps })
}

/// The field `Dp`.
pub struct SymDerivative<F>(pub F);

impl<F: TensorField> TensorField for SymDerivative<F> {
    fn rank(&self) -> usize {
        self.0.rank() + 1
    }
    fn eval(&self, p: Point) -> Tensor {
        symmetric_derivative_at(&self.0, p)
    }
    fn support(&self) -> Support {
        self.0.support()
    }
}

/// The field `D*f`.
pub struct Divergence<F>(pub F);

impl<F: TensorField> TensorField for Divergence<F> {
    fn rank(&self) -> usize {
        self.0.rank().saturating_sub(1)
    }
    fn eval(&self, p: Point) -> Tensor {
        divergence_at(&self.0, p).expect("rank ≥ 1")
    }
    fn support(&self) -> Support {
        self.0.support()
    }
}

/// Linear combination Σ c_k f_k of fields of equal rank.
pub struct Combination {
    pub terms: Vec<(f64, Arc<dyn TensorField>)>,
}

impl TensorField for Combination {
    fn rank(&self) -> usize {
        self.terms.first().map_or(0, |t| t.1.rank())
    }
    fn eval(&self, p: Point) -> Tensor {
        let mut out = Tensor::zeros(self.rank());
        for (c, f) in &self.terms {
            for (o, v) in out.comps.iter_mut().zip(f.eval(p).comps) {
                *o += c * v;
            }
        }
        out
    }
    fn derivatives(&self, p: Point) -> [Tensor; 2] {
        let mut out = [Tensor::zeros(self.rank()), Tensor::zeros(self.rank())];
        for (c, f) in &self.terms {
            let d = f.derivatives(p);
            for k in 0..2 {
                for (o, v) in out[k].comps.iter_mut().zip(&d[k].comps) {
                    *o += c * v;
                }
            }
        }
        out
    }
    fn support(&self) -> Support {
        let all_compact = self.terms.iter().all(|t| t.1.support() == Support::Compact);
        if all_compact {
            Support::Compact
        } else {
            Support::Unbounded
        }
    }
}

/// The hyperbolic metric tensor (rank 2) or its symmetric powers.
pub struct MetricPower(pub usize);

impl TensorField for MetricPower {
    fn rank(&self) -> usize {
        2 * self.0
    }
    fn eval(&self, _p: Point) -> Tensor {
        // σ(g^k): contraction with a unit vector gives |v|^{2k} = 1
        let mut t = Tensor::scalar(1.0);
        for _ in 0..self.0 {
            let g = Tensor::metric();
            let mut comps = Vec::with_capacity(t.comps.len() * 4);
            for a in &t.comps {
                for b in &g.comps {
                    comps.push(a * b);
                }
            }
            t = Tensor { rank: t.rank + 2, comps };
        }
        t.symmetrize()
    }
    fn derivatives(&self, _p: Point) -> [Tensor; 2] {
        [Tensor::zeros(self.rank()), Tensor::zeros(self.rank())]
    }
}

/// C^∞ bump exp(1 − 1/(1 − t²)) on |t| < 1.
pub fn bump(t: f64) -> f64 {
    let s = 1.0 - t * t;
    if s <= 0.0 {
        0.0
    } else {
        (1.0 - 1.0 / s).exp()
    }
}

/// Scalar bump of hyperbolic radius `radius` around `center`, evaluated via
/// the quotient distance so that it descends to the surface.
#[derive(Clone)]
pub struct SurfaceBump {
    pub surface: Arc<Surface>,
    pub center: Point,
    pub radius: f64,
    images: Vec<Point>,
}

impl SurfaceBump {
    pub fn new(surface: Arc<Surface>, center: Point, radius: f64) -> Self {
        let (c, _) = surface.reduce(center);
        let images = surface.neighbor_maps().iter().map(|m| m.apply_point(c)).collect();
        SurfaceBump { surface, center: c, radius, images }
    }

    pub fn value(&self, p: Point) -> f64 {
        let (q, _) = self.surface.reduce(p);
        // minimize |q − c|²/(y_q y_c), a monotone function of the distance
        let r =
            self.images.iter().map(|c| ((q.x - c.x).powi(2) + (q.y - c.y).powi(2)) / c.y).fold(f64::INFINITY, f64::min)
                / q.y;
        let d = 2.0 * (0.5 * r.sqrt()).asinh();
        bump(d / self.radius)
    }

    /// `(∂_y χ, ∂_x χ)` at `p`, when the reduction near `p` is a translation.
    pub fn gradient(&self, p: Point) -> Option<[f64; 2]> {
        let (q, g) = self.surface.reduce(p);
        if g.c != 0.0 {
            return None;
        }
        let c = self.images.iter().min_by(|a, b| {
            let ra = ((q.x - a.x).powi(2) + (q.y - a.y).powi(2)) / a.y;
            let rb = ((q.x - b.x).powi(2) + (q.y - b.y).powi(2)) / b.y;
            ra.total_cmp(&rb)
        })?;
        let n = (q.x - c.x).powi(2) + (q.y - c.y).powi(2);
        let r = n / (c.y * q.y);
        if r == 0.0 {
            return Some([0.0, 0.0]);
        }
        let d = 2.0 * (0.5 * r.sqrt()).asinh();
        let t = d / self.radius;
        let s = 1.0 - t * t;
        if s <= 0.0 {
            return Some([0.0, 0.0]);
        }
        // dχ/dr = bump'(t)/R · dd/dr
        let dchi = bump(t) * (-2.0 * t / (s * s)) / self.radius / (r * (4.0 + r)).sqrt();
        let dr_dx = 2.0 * (q.x - c.x) / (c.y * q.y);
        let dr_dy = (2.0 * (q.y - c.y) * q.y - n) / (c.y * q.y * q.y);
        Some([dchi * dr_dy, dchi * dr_dx])
    }
}

/// `amplitude · χ · g` for a surface bump χ.
#[derive(Clone)]
pub struct ConformalBump {
    pub bump: SurfaceBump,
    pub amplitude: f64,
}

impl TensorField for ConformalBump {
    fn rank(&self) -> usize {
        2
    }
    fn eval(&self, p: Point) -> Tensor {
        Tensor::metric().scale(self.amplitude * self.bump.value(p))
    }
    fn support(&self) -> Support {
        Support::Compact
    }
}

/// A scalar bump as a rank-0 field.
impl TensorField for SurfaceBump {
    fn rank(&self) -> usize {
        0
    }
    fn eval(&self, p: Point) -> Tensor {
        Tensor::scalar(self.value(p))
    }
    fn support(&self) -> Support {
        Support::Compact
    }
}

/// Compactly supported 1-form `χ·(α dy/y + β dx/y)`, with the frame
/// components fixed in the fundamental-domain chart and pulled back elsewhere.
/// The support must stay above the isometric circles, where the only
/// identifications are translations and the form is smooth.
#[derive(Clone)]
pub struct BumpOneForm {
    pub bump: SurfaceBump,
    pub alpha: f64,
    pub beta: f64,
}

impl TensorField for BumpOneForm {
    fn rank(&self) -> usize {
        1
    }
    fn eval(&self, p: Point) -> Tensor {
        let (q, g) = self.bump.surface.reduce(p);
        let chi = self.bump.value(q);
        if chi == 0.0 {
            return Tensor::zeros(1);
        }
        Tensor::vector(chi * self.alpha, chi * self.beta).pull_by_rotation(g.rotation_at(p))
    }
    fn derivatives(&self, p: Point) -> [Tensor; 2] {
        match self.bump.gradient(p) {
            Some([gy, gx]) => {
                [Tensor::vector(gy * self.alpha, gy * self.beta), Tensor::vector(gx * self.alpha, gx * self.beta)]
            }
            None => fd_derivatives(|q| self.eval(q), p),
        }
    }
    fn support(&self) -> Support {
        Support::Compact
    }
}

/// Real mode-0 power law `y^ρ (a dy² + b dy dθ + c dθ²)/y²` on a d = 1 cusp chart.
#[derive(Debug, Clone, Copy)]
pub struct PowerLaw2 {
    pub rho: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl TensorField for PowerLaw2 {
    fn rank(&self) -> usize {
        2
    }
    fn eval(&self, p: Point) -> Tensor {
        let s = p.y.powf(self.rho);
        Tensor::matrix(self.a * s, 0.5 * self.b * s, self.c * s)
    }
    fn derivatives(&self, p: Point) -> [Tensor; 2] {
        let s = self.rho * p.y.powf(self.rho - 1.0);
        [Tensor::matrix(self.a * s, 0.5 * self.b * s, self.c * s), Tensor::zeros(2)]
    }
    fn support(&self) -> Support {
        if self.rho < 0.0 {
            Support::Decay(-self.rho)
        } else {
            Support::Unbounded
        }
    }
}

/// [`PowerLaw2`] placed in the cusp of a surface: evaluated at the reduced
/// point and switched off smoothly between heights `a` and `2a`, so it is
/// invariant under the group (only translations act above `a`).
#[derive(Clone)]
pub struct CuspPowerLaw {
    pub surface: Arc<Surface>,
    pub law: PowerLaw2,
}

impl CuspPowerLaw {
    fn cutoff(&self, y: f64) -> f64 {
        let a = self.surface.cusp_height;
        let t = (y - a) / a;
        if t <= 0.0 {
            0.0
        } else if t >= 1.0 {
            1.0
        } else {
            let g = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() };
            g(t) / (g(t) + g(1.0 - t))
        }
    }
}

impl TensorField for CuspPowerLaw {
    fn rank(&self) -> usize {
        2
    }
    fn eval(&self, p: Point) -> Tensor {
        let (q, g) = self.surface.reduce(p);
        let chi = self.cutoff(q.y);
        if chi == 0.0 {
            return Tensor::zeros(2);
        }
        self.law.eval(q).scale(chi).pull_by_rotation(g.rotation_at(p))
    }
    fn support(&self) -> Support {
        self.law.support()
    }
}

/// The function y^ρ.
#[derive(Debug, Clone, Copy)]
pub struct PowerFunction(pub f64);

impl TensorField for PowerFunction {
    fn rank(&self) -> usize {
        0
    }
    fn eval(&self, p: Point) -> Tensor {
        Tensor::scalar(p.y.powf(self.0))
    }
    fn derivatives(&self, p: Point) -> [Tensor; 2] {
        [Tensor::scalar(self.0 * p.y.powf(self.0 - 1.0)), Tensor::scalar(0.0)]
    }
}

/// Check `‖f‖·y^N` stays bounded by `bound` on the given sample heights.
pub fn check_decay(f: &dyn TensorField, xs: &[f64], ys: &[f64], bound: f64) -> Result<()> {
    let n = match f.support() {
        Support::Decay(n) => n,
        Support::Compact => 0.0,
        Support::Unbounded => return Ok(()),
    };
    for &x in xs {
        for &y in ys {
            let v = f.eval(Point::new(x, y)).norm() * y.powf(n);
            if !(v <= bound) {
                return Err(LabError::input(format!("decay y^-{n} violated at (x={x}, y={y}): {v:e}")));
            }
        }
    }
    Ok(())
}

/// Zero Fourier mode power-law tensor in the cusp of dimension d+1:
/// `a = a∞ y^ρ`, `b_i = b∞_i y^ρ`, `c_ij = c∞_ij y^ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode0CuspTensor {
    pub rho: Complex64,
    pub a: Complex64,
    pub b: Vec<Complex64>,
    pub c: Vec<Vec<Complex64>>,
}

impl Mode0CuspTensor {
    pub fn new(rho: Complex64, a: Complex64, b: Vec<Complex64>, c: Vec<Vec<Complex64>>) -> Result<Self> {
        let d = b.len();
        if d == 0 || c.len() != d || c.iter().any(|r| r.len() != d) {
            return Err(LabError::input("mode-0 tensor needs b of length d and c of size d×d with d ≥ 1"));
        }
        for i in 0..d {
            for j in 0..i {
                if (c[i][j] - c[j][i]).norm() > 1e-12 {
                    return Err(LabError::input("c∞ must be symmetric"));
                }
            }
        }
        Ok(Mode0CuspTensor { rho, a, b, c })
    }

    /// The hyperbolic metric (ρ = 0, a = 1, c = I).
    pub fn metric(d: usize) -> Self {
        let mut c = vec![vec![Complex64::new(0.0, 0.0); d]; d];
        for (i, row) in c.iter_mut().enumerate() {
            row[i] = Complex64::new(1.0, 0.0);
        }
        Mode0CuspTensor {
            rho: Complex64::new(0.0, 0.0),
            a: Complex64::new(1.0, 0.0),
            b: vec![Complex64::new(0.0, 0.0); d],
            c,
        }
    }

    pub fn d(&self) -> usize {
        self.b.len()
    }

    pub fn trace_c(&self) -> Complex64 {
        (0..self.d()).map(|i| self.c[i][i]).sum()
    }

    /// Σ |c_ij|².
    pub fn c_norm_sqr(&self) -> f64 {
        self.c.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    /// `π₂^* f / y^ρ` at the unit vector `cos φ·e_y + sin φ·u·e_θ`.
    pub fn pullback_profile(&self, phi: f64, u: &[f64]) -> Complex64 {
        let (s, c) = phi.sin_cos();
        let d = self.d();
        let bu: Complex64 = (0..d).map(|i| self.b[i] * u[i]).sum();
        let mut cuu = Complex64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                cuu += self.c[i][j] * u[i] * u[j];
            }
        }
        self.a * c * c + bu * c * s + cuu * s * s
    }

    pub fn is_solenoidal(&self, tol: f64) -> bool {
        let (al, be) = divergence_mode0(self);
        al.norm() <= tol && be.iter().all(|b| b.norm() <= tol)
    }
}

/// Leading coefficients `(α∞, β∞)` of `D*f = y^ρ(α∞ dy/y + Σ β∞_i dθ_i/y)`.
pub fn divergence_mode0(f: &Mode0CuspTensor) -> (Complex64, Vec<Complex64>) {
    let d = f.d() as f64;
    let alpha = f.a * (f.rho - d) + f.trace_c();
    let beta = f.b.iter().map(|b| 0.5 * (f.rho - (d + 1.0)) * b).collect();
    (alpha, beta)
}

/// Roots `λ_d^± = d/2 ± √(d + d²/4)` of ρ² − dρ − d.
pub fn lambda_pm(d: usize) -> Result<(f64, f64)> {
    if d == 0 {
        return Err(LabError::input("dimension d must be ≥ 1"));
    }
    let d = d as f64;
    let r = (d + 0.25 * d * d).sqrt();
    // product of roots is −d
    let plus = 0.5 * d + r;
    Ok((-d / plus, plus))
}

/// Real radial profiles of a mode-0 tensor on a log-uniform grid in y.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub d: usize,
    /// Uniform grid in r = ln y.
    pub r: Vec<f64>,
    pub a: Vec<f64>,
    /// b[i][k]: component i at node k.
    pub b: Vec<Vec<f64>>,
    /// c[i][j][k].
    pub c: Vec<Vec<Vec<f64>>>,
}

impl RadialProfile {
    pub fn zeros(d: usize, y_min: f64, y_max: f64, nodes: usize) -> Result<Self> {
        if d == 0 || !(y_min > 0.0 && y_max > y_min) || nodes < 8 {
            return Err(LabError::input("radial grid needs d ≥ 1, 0 < y_min < y_max and at least 8 nodes"));
        }
        let (r0, r1) = (y_min.ln(), y_max.ln());
        let r = (0..nodes).map(|k| r0 + (r1 - r0) * k as f64 / (nodes - 1) as f64).collect();
        Ok(RadialProfile {
            d,
            r,
            a: vec![0.0; nodes],
            b: vec![vec![0.0; nodes]; d],
            c: vec![vec![vec![0.0; nodes]; d]; d],
        })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.r[1] - self.r[0]
    }

    /// Frame L² norm with the measure dr (the zero-mode volume up to the torus factor and y^{-d}).
    pub fn norm(&self) -> f64 {
        let n = self.len();
        let mut s = 0.0;
        for k in 0..n {
            let mut v = self.a[k] * self.a[k];
            for i in 0..self.d {
                v += 0.5 * self.b[i][k] * self.b[i][k];
                for j in 0..self.d {
                    v += self.c[i][j][k] * self.c[i][j][k];
                }
            }
            s += v;
        }
        (s * self.step()).sqrt()
    }

    pub fn sub(&self, o: &RadialProfile) -> RadialProfile {
        let mut out = self.clone();
        for k in 0..self.len() {
            out.a[k] -= o.a[k];
            for i in 0..self.d {
                out.b[i][k] -= o.b[i][k];
                for j in 0..self.d {
                    out.c[i][j][k] -= o.c[i][j][k];
                }
            }
        }
        out
    }

    /// Divergence profiles (α, β_i), with r-derivatives by fourth-order differences.
    pub fn divergence(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let d = self.d as f64;
        let da = diff4(&self.a, self.step());
        let n = self.len();
        let alpha = (0..n).map(|k| da[k] - d * self.a[k] + (0..self.d).map(|i| self.c[i][i][k]).sum::<f64>()).collect();
        let beta = (0..self.d)
            .map(|i| {
                let db = diff4(&self.b[i], self.step());
                (0..n).map(|k| 0.5 * (db[k] - (d + 1.0) * self.b[i][k])).collect()
            })
            .collect();
        (alpha, beta)
    }

    /// CSV with columns y, a, b1.., c11, c12, ….
    pub fn to_csv(&self) -> String {
        let mut head = vec!["y".to_string(), "a".to_string()];
        for i in 0..self.d {
            head.push(format!("b{}", i + 1));
        }
        for i in 0..self.d {
            for j in 0..self.d {
                head.push(format!("c{}{}", i + 1, j + 1));
            }
        }
        let mut out = head.join(",") + "\n";
        for k in 0..self.len() {
            let mut row = vec![crate::output::fmt_f64(self.r[k].exp()), crate::output::fmt_f64(self.a[k])];
            for i in 0..self.d {
                row.push(crate::output::fmt_f64(self.b[i][k]));
            }
            for i in 0..self.d {
                for j in 0..self.d {
                    row.push(crate::output::fmt_f64(self.c[i][j][k]));
                }
            }
            out += &(row.join(",") + "\n");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head: Vec<&str> = lines.next().ok_or_else(|| LabError::input("empty profile CSV"))?.split(',').collect();
        let ncol = head.len();
        let d = (1..8).find(|&d| 2 + d + d * d == ncol).ok_or_else(|| {
            LabError::input(format!("profile CSV has {ncol} columns; expected y, a, b1..bd, c11..cdd"))
        })?;
        let mut rows = Vec::new();
        for (ln, l) in lines.enumerate() {
            let vals: std::result::Result<Vec<f64>, _> = l.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| LabError::input(format!("profile CSV line {}: {e}", ln + 2)))?;
            if vals.len() != ncol {
                return Err(LabError::input(format!("profile CSV line {}: wrong column count", ln + 2)));
            }
            rows.push(vals);
        }
        let n = rows.len();
        if n < 8 {
            return Err(LabError::input("profile CSV needs at least 8 rows"));
        }
        let mut p = RadialProfile::zeros(d, rows[0][0], rows[n - 1][0], n)?;
        for (k, row) in rows.iter().enumerate() {
            if (row[0].ln() - p.r[k]).abs() > 1e-9 * (1.0 + p.r[k].abs()) {
                return Err(LabError::input(format!("profile CSV row {} is not on a log-uniform grid", k + 2)));
            }
            p.a[k] = row[1];
            for i in 0..d {
                p.b[i][k] = row[2 + i];
                for j in 0..d {
                    p.c[i][j][k] = row[2 + d + i * d + j];
                }
            }
        }
        Ok(p)
    }
}

/// Fourth-order central differences (second order at the two outer nodes each side).
fn diff4(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    for k in 0..n {
        out[k] = if k >= 2 && k + 2 < n {
            (-v[k + 2] + 8.0 * v[k + 1] - 8.0 * v[k - 1] + v[k - 2]) / (12.0 * h)
        } else if k == 0 {
            (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
        } else if k == n - 1 {
            (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h)
        } else {
            (v[k + 1] - v[k - 1]) / (2.0 * h)
        };
    }
    out
}

fn diff2_4(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    for k in 1..n - 1 {
        out[k] = if k >= 2 && k + 2 < n {
            (-v[k + 2] + 16.0 * v[k + 1] - 30.0 * v[k] + 16.0 * v[k - 1] - v[k - 2]) / (12.0 * h * h)
        } else {
            (v[k + 1] - 2.0 * v[k] + v[k - 1]) / (h * h)
        };
    }
    out
}

/// Potential `p = α dy/y + Σ β_i dθ_i/y` of a mode-0 splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialPotential {
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
}

impl RadialPotential {
    pub fn norm(&self, h: f64) -> f64 {
        let s: f64 =
            self.alpha.iter().map(|v| v * v).sum::<f64>() + self.beta.iter().flatten().map(|v| v * v).sum::<f64>();
        (s * h).sqrt()
    }

    /// `Dp` as profiles on the same grid.
    pub fn sym_derivative(&self, like: &RadialProfile) -> RadialProfile {
        let h = like.step();
        let mut out = like.clone();
        let da = diff4(&self.alpha, h);
        let n = like.len();
        for k in 0..n {
            out.a[k] = da[k];
            for i in 0..like.d {
                for j in 0..like.d {
                    out.c[i][j][k] = if i == j { -self.alpha[k] } else { 0.0 };
                }
            }
        }
        for i in 0..like.d {
            let db = diff4(&self.beta[i], h);
            for k in 0..n {
                // b_i/2 is the frame component (Dp)_{0i} = (∂_r β_i + β_i)/2
                out.b[i][k] = db[k] + self.beta[i][k];
            }
        }
        out
    }
}

/// Result of the mode-0 splitting `f = Dp + h`.
#[derive(Debug, Clone)]
pub struct SolenoidalSplit {
    pub potential: RadialPotential,
    pub potential_part: RadialProfile,
    pub solenoidal: RadialProfile,
    /// Max |D*h| over interior nodes.
    pub residual: f64,
}

/// Solve `u'' − d·u' − k·u = rhs` (r-derivatives) with u = 0 at both ends:
/// second-order tridiagonal solve plus one deferred-correction sweep.
fn solve_indicial(rhs: &[f64], h: f64, d: f64, k: f64) -> Result<Vec<f64>> {
    let n = rhs.len();
    let tri = |f: &[f64]| -> Result<Vec<f64>> {
        // unknowns u_1..u_{n−2}
        let m = n - 2;
        let lo = 1.0 / (h * h) + 0.5 * d / h;
        let di = -2.0 / (h * h) - k;
        let up = 1.0 / (h * h) - 0.5 * d / h;
        let mut cp = vec![0.0; m];
        let mut dp = vec![0.0; m];
        for i in 0..m {
            let (a, b, c) = (if i > 0 { lo } else { 0.0 }, di, if i + 1 < m { up } else { 0.0 });
            let denom = b - a * if i > 0 { cp[i - 1] } else { 0.0 };
            if denom.abs() < 1e-300 {
                return Err(LabError::NoConvergence("singular radial system".into()));
            }
            cp[i] = c / denom;
            dp[i] = (f[i + 1] - a * if i > 0 { dp[i - 1] } else { 0.0 }) / denom;
        }
        let mut u = vec![0.0; n];
        for i in (0..m).rev() {
            u[i + 1] = dp[i] - cp[i] * if i + 1 < m { u[i + 2] } else { 0.0 };
        }
        Ok(u)
    };
    let u1 = tri(rhs)?;
    // defect of the fourth-order operator, fed back through the second-order one
    let d1 = diff4(&u1, h);
    let d2 = diff2_4(&u1, h);
    let mut defect = vec![0.0; n];
    for i in 1..n - 1 {
        defect[i] = rhs[i] - (d2[i] - d * d1[i] - k * u1[i]);
    }
    let du = tri(&defect)?;
    Ok(u1.iter().zip(&du).map(|(a, b)| a + b).collect())
}

/// Split a mode-0 profile into potential and solenoidal parts.
pub fn solenoidal_split_mode0(f: &RadialProfile) -> Result<SolenoidalSplit> {
    if f.len() < 8 {
        return Err(LabError::input("radial grid too small"));
    }
    let edge = |v: &[f64]| v[0].abs().max(v[v.len() - 1].abs());
    let scale = f.norm().max(1e-300);
    let mut worst = edge(&f.a);
    for i in 0..f.d {
        worst = worst.max(edge(&f.b[i]));
        for j in 0..f.d {
            worst = worst.max(edge(&f.c[i][j]));
        }
    }
    if worst > 1e-8 * scale.max(1.0) {
        return Err(LabError::input(format!("profile does not decay at the ends (edge value {worst:e})")));
    }
    let h = f.step();
    let d = f.d as f64;
    let (alpha_rhs, beta_rhs) = f.divergence();
    let alpha = solve_indicial(&alpha_rhs, h, d, d)?;
    let beta = beta_rhs
        .iter()
        .map(|b| {
            let rhs: Vec<f64> = b.iter().map(|v| 2.0 * v).collect();
            solve_indicial(&rhs, h, d, d + 1.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let potential = RadialPotential { alpha, beta };
    let potential_part = potential.sym_derivative(f);
    let solenoidal = f.sub(&potential_part);
    let (ra, rb) = solenoidal.divergence();
    let n = f.len();
    let mut residual: f64 = 0.0;
    for k in 3..n - 3 {
        residual = residual.max(ra[k].abs());
        for b in &rb {
            residual = residual.max(b[k].abs());
        }
    }
    if !residual.is_finite() {
        return Err(LabError::NoConvergence("radial solve produced non-finite values".into()));
    }
    Ok(SolenoidalSplit { potential, potential_part, solenoidal, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolic::flow_h2;
    use crate::quad::GaussLegendre;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn pullback_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let ph = Phase::new(rng.gen_range(-2.0..2.0), rng.gen_range(0.1..4.0), rng.gen_range(-PI..PI));
            assert!((pullback_pi_m(&MetricPower(1), ph) - 1.0).abs() < 1e-14);
        }
        let ph = Phase::new(0.0, 2.0, 0.7);
        let dy2 = PowerLaw2 { rho: 0.0, a: 1.0, b: 0.0, c: 0.0 };
        let dx2 = PowerLaw2 { rho: 0.0, a: 0.0, b: 0.0, c: 1.0 };
        assert!((pullback_pi_m(&dy2, ph) - 0.7f64.cos().powi(2)).abs() < 1e-15);
        assert!((pullback_pi_m(&dx2, ph) - 0.7f64.sin().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn metric_powers_contract_to_one() {
        let ph = Phase::new(0.3, 1.1, 2.2);
        for k in 1..=3 {
            assert!((pullback_pi_m(&MetricPower(k), ph) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn divergence_mode0_examples() {
        let m = Mode0CuspTensor::metric(3);
        let (al, be) = divergence_mode0(&m);
        assert!(al.norm() < 1e-15 && be.iter().all(|b| b.norm() == 0.0));
        let f = Mode0CuspTensor::new(c(0.5), c(1.0), vec![c(0.0)], vec![vec![c(0.5)]]).unwrap();
        assert!(f.is_solenoidal(1e-15));
        let f = Mode0CuspTensor::new(c(0.0), c(0.0), vec![c(1.0)], vec![vec![c(0.0)]]).unwrap();
        let (al, be) = divergence_mode0(&f);
        assert_eq!(al, c(0.0));
        assert_eq!(be[0], c(-1.0));
    }

    #[test]
    fn numeric_divergence_matches_mode0_formula() {
        for &(rho, a, b, cc) in &[(0.5, 1.0, 0.0, 0.5), (1.3, -0.4, 0.7, 2.0), (-2.0, 0.3, 1.1, -0.6)] {
            let f = PowerLaw2 { rho, a, b, c: cc };
            let m = Mode0CuspTensor::new(c(rho), c(a), vec![c(b)], vec![vec![c(cc)]]).unwrap();
            let (al, be) = divergence_mode0(&m);
            let y: f64 = 1.7;
            let v = divergence_at(&f, Point::new(0.2, y)).unwrap();
            let s = y.powf(rho);
            assert!((v.comps[0] - al.re * s).abs() < 1e-12, "{rho}");
            assert!((v.comps[1] - be[0].re * s).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_power_function() {
        let rho = 1.7;
        let p = Point::new(0.0, 2.5);
        let dp = symmetric_derivative_at(&PowerFunction(rho), p);
        assert!((dp.comps[0] - rho * p.y.powf(rho)).abs() < 1e-12);
        assert!(dp.comps[1].abs() < 1e-15);
        let zero = symmetric_derivative_at(&PowerLaw2 { rho: 0.0, a: 0.0, b: 0.0, c: 0.0 }, p);
        assert!(zero.norm() == 0.0);
    }

    fn test_surface() -> Arc<Surface> {
        Arc::new(Surface::preset("one-cusp-genus-1", None).unwrap())
    }

    #[test]
    fn bump_gradient_matches_differences() {
        let s = test_surface();
        let p = BumpOneForm { bump: SurfaceBump::new(s, Point::new(-0.3, 0.26), 0.4), alpha: 0.7, beta: -1.1 };
        for q in [Point::new(-0.2, 0.3), Point::new(-0.45, 0.22), Point::new(0.7, 0.35), Point::new(-0.3, 0.26)] {
            let a = p.derivatives(q);
            let f = fd_derivatives(|r| p.eval(r), q);
            for k in 0..2 {
                for i in 0..2 {
                    assert!((a[k].comps[i] - f[k].comps[i]).abs() < 1e-7, "{q:?} {k} {i}");
                }
            }
        }
    }

    #[test]
    fn flow_derivative_of_one_form() {
        let s = test_surface();
        let p = BumpOneForm { bump: SurfaceBump::new(s, Point::new(0.05, 0.6), 0.5), alpha: 0.8, beta: -0.3 };
        let dp = SymDerivative(p.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let ph = Phase::new(rng.gen_range(-0.3..0.4), rng.gen_range(0.35..1.0), rng.gen_range(-PI..PI));
            let h = 1e-3;
            let f = |t: f64| pullback_pi_m(&p, flow_h2(ph, t));
            let xd = (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h);
            worst = worst.max((xd - pullback_pi_m(&dp, ph)).abs());
        }
        assert!(worst <= 1e-6, "{worst:e}");
    }

    fn integrate_box(f: impl Fn(Point) -> f64 + Sync, x: (f64, f64), y: (f64, f64), panels: usize) -> f64 {
        use rayon::prelude::*;
        let gl = GaussLegendre::new(8);
        let h = (y.1 - y.0) / panels as f64;
        (0..panels)
            .into_par_iter()
            .map(|k| {
                let (a, b) = (y.0 + k as f64 * h, y.0 + (k + 1) as f64 * h);
                gl.integrate(|yy| gl.composite(|xx| f(Point::new(xx, yy)), x.0, x.1, panels) / (yy * yy), a, b)
            })
            .sum()
    }

    #[test]
    fn adjointness_on_compact_support() {
        // radii stay below half the translation length at each centre, so the
        // bumps are smooth on the quotient
        let s = test_surface();
        let p = BumpOneForm { bump: SurfaceBump::new(s.clone(), Point::new(0.0, 0.75), 0.4), alpha: 0.5, beta: 1.0 };
        let f = Combination {
            terms: vec![
                (
                    1.0,
                    Arc::new(ConformalBump {
                        bump: SurfaceBump::new(s.clone(), Point::new(0.1, 0.8), 0.45),
                        amplitude: 1.0,
                    }),
                ),
                (
                    0.7,
                    Arc::new(SymDerivative(BumpOneForm {
                        bump: SurfaceBump::new(s, Point::new(-0.05, 0.7), 0.4),
                        alpha: -1.0,
                        beta: 0.4,
                    })),
                ),
            ],
        };
        // one period in x; the supports lie in 0.45 < y < 1.3
        let xr = (-0.5, 0.5);
        let yr = (0.45, 1.3);
        let lhs = integrate_box(|q| symmetric_derivative_at(&p, q).dot(&f.eval(q)), xr, yr, 32);
        let rhs = integrate_box(|q| p.eval(q).dot(&divergence_at(&f, q).unwrap()), xr, yr, 32);
        assert!((lhs + rhs).abs() <= 1e-6 * lhs.abs(), "{lhs} {rhs}");
    }

    #[test]
    fn lambda_examples() {
        let (m, p) = lambda_pm(1).unwrap();
        assert!((m - (1.0 - 5f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((p - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
        let (m, p) = lambda_pm(4).unwrap();
        assert!((m - (2.0 - 2.0 * 2f64.sqrt())).abs() < 1e-14);
        assert!((p - (2.0 + 2.0 * 2f64.sqrt())).abs() < 1e-14);
        for d in 1..=10 {
            let (m, p) = lambda_pm(d).unwrap();
            let df = d as f64;
            assert!(-1.0 < m && m < -0.5 && df + 0.5 < p && p < df + 1.0);
            for r in [m, p] {
                assert!((r * r - df * r - df).abs() <= 1e-12 * (1.0 + df * df));
            }
        }
        assert!(lambda_pm(0).is_err());
    }

    fn smooth_bump_profile(r: &[f64], lo: f64, hi: f64) -> Vec<f64> {
        r.iter().map(|&x| bump((2.0 * x - lo - hi) / (hi - lo))).collect()
    }

    #[test]
    fn split_of_solenoidal_profile_has_no_potential() {
        let mut f = RadialProfile::zeros(1, 0.5, 40.0, 2000).unwrap();
        let (lo, hi) = (0.0, 3.0);
        let a = smooth_bump_profile(&f.r, lo, hi);
        let da = diff4(&a, f.step());
        f.a = a.clone();
        // D*f = ∂_r a − d·a + c = 0
        f.c[0][0] = (0..f.len()).map(|k| a[k] - da[k]).collect();
        let s = solenoidal_split_mode0(&f).unwrap();
        assert!(s.potential.norm(f.step()) <= 1e-6 * f.norm(), "{}", s.potential.norm(f.step()));
    }

    #[test]
    fn split_recovers_manufactured_parts() {
        let mut base = RadialProfile::zeros(2, 0.5, 40.0, 2000).unwrap();
        let alpha = smooth_bump_profile(&base.r, -0.3, 2.5);
        let beta0: Vec<f64> = smooth_bump_profile(&base.r, 0.5, 3.2).iter().map(|v| 0.6 * v).collect();
        let beta1: Vec<f64> = smooth_bump_profile(&base.r, 0.2, 2.0).iter().map(|v| -0.9 * v).collect();
        let p0 = RadialPotential { alpha, beta: vec![beta0, beta1] };
        let dp = p0.sym_derivative(&base);
        let s = solenoidal_split_mode0(&dp).unwrap();
        assert!(s.solenoidal.norm() <= 1e-6 * dp.norm(), "{:e}", s.solenoidal.norm() / dp.norm());

        // solenoidal piece: a bump, c = diag so that D*h = 0, plus a trace-free c
        let a = smooth_bump_profile(&base.r, 0.8, 3.4);
        let da = diff4(&a, base.step());
        base.a = a.clone();
        for k in 0..base.len() {
            let t = (2.0 * a[k] - da[k]) / 2.0;
            base.c[0][0][k] = t + 0.3 * a[k];
            base.c[1][1][k] = t - 0.3 * a[k];
            base.c[0][1][k] = 0.2 * a[k];
            base.c[1][0][k] = 0.2 * a[k];
        }
        let h0 = base;
        let mut mixed = dp.clone();
        for k in 0..mixed.len() {
            mixed.a[k] += h0.a[k];
            for i in 0..2 {
                for j in 0..2 {
                    mixed.c[i][j][k] += h0.c[i][j][k];
                }
            }
        }
        let s = solenoidal_split_mode0(&mixed).unwrap();
        let e1 = s.potential_part.sub(&dp).norm() / dp.norm();
        let e2 = s.solenoidal.sub(&h0).norm() / h0.norm();
        assert!(e1 <= 1e-5 && e2 <= 1e-5, "{e1:e} {e2:e}");
    }

    #[test]
    fn split_rejects_non_decaying_profile() {
        let mut f = RadialProfile::zeros(1, 1.0, 10.0, 100).unwrap();
        f.a.iter_mut().for_each(|v| *v = 1.0);
        assert!(solenoidal_split_mode0(&f).is_err());
    }

    #[test]
    fn profile_csv_round_trip() {
        let mut f = RadialProfile::zeros(2, 1.0, 10.0, 20).unwrap();
        f.a = smooth_bump_profile(&f.r, 0.2, 2.0);
        f.c[0][1] = f.a.iter().map(|v| 0.5 * v).collect();
        f.c[1][0] = f.c[0][1].clone();
        let back = RadialProfile::from_csv(&f.to_csv()).unwrap();
        assert_eq!(back.d, 2);
        for k in 0..f.len() {
            assert!((back.a[k] - f.a[k]).abs() < 1e-15);
            assert!((back.c[1][0][k] - f.c[1][0][k]).abs() < 1e-15);
        }
    }

    #[test]
    fn rotation_pullback_is_consistent_with_contraction() {
        let t = Tensor::matrix(1.3, -0.4, 0.2);
        let alpha = 0.77;
        let pulled = t.pull_by_rotation(alpha);
        let psi: f64 = 0.4;
        let v = [psi.cos(), psi.sin()];
        let w = [(psi - alpha).cos(), (psi - alpha).sin()];
        assert!((pulled.contract(v) - t.contract(w)).abs() < 1e-14);
        assert!(pulled.asymmetry() < 1e-15);
    }

    proptest! {
        #[test]
        fn divergence_mode0_is_linear(
            a1 in -2.0..2.0f64, b1 in -2.0..2.0f64, c1 in -2.0..2.0f64,
            a2 in -2.0..2.0f64, b2 in -2.0..2.0f64, c2 in -2.0..2.0f64,
            rho in -1.0..3.0f64, s in -2.0..2.0f64,
        ) {
            let mk = |a: f64, b: f64, cc: f64| Mode0CuspTensor::new(c(rho), c(a), vec![c(b)], vec![vec![c(cc)]]).unwrap();
            let (x1, y1) = divergence_mode0(&mk(a1, b1, c1));
            let (x2, y2) = divergence_mode0(&mk(a2, b2, c2));
            let (x3, y3) = divergence_mode0(&mk(a1 + s * a2, b1 + s * b2, c1 + s * c2));
            prop_assert!((x3 - (x1 + x2 * s)).norm() <= 1e-12);
            prop_assert!((y3[0] - (y1[0] + y2[0] * s)).norm() <= 1e-12);
        }

        #[test]
        fn symmetric_derivative_is_symmetric(x in -0.4..0.4f64, y in 0.4..1.5f64) {
            let s = Arc::new(Surface::preset("one-cusp-genus-1", None).unwrap());
            let p = BumpOneForm { bump: SurfaceBump::new(s, Point::new(0.0, 0.8), 0.5), alpha: 1.0, beta: 0.5 };
            prop_assert!(symmetric_derivative_at(&p, Point::new(x, y)).asymmetry() <= 1e-12);
        }
    }
}
