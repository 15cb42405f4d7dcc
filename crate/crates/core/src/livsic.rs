//! Constructive approximate Livsic decomposition `f = Xu + h` on the unit
//! tangent bundle of a one-cusp surface (d = 1).
//!
//! Pick a closed orbit by word enumeration, integrate `f` along it, extend
//! the primitive from the orbit's hits on transverse sections by the
//! sup-of-cones formula, push each extension along its flowbox and glue with
//! a partition of unity.

use crate::error::{LabError, Result};
use crate::hyperbolic::{distance, flow_h2, wrap_angle, HomotopyClass, Mobius, Phase, Point};
use crate::quad::GaussLegendre;
use crate::stats::{ols, spearman};
use crate::surface::Surface;
use crate::tensor::{BumpOneForm, Combination, ConformalBump, SurfaceBump, SymDerivative, TensorField};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::sync::Arc;

/// A function on the unit tangent bundle: `π_m^* h` for a tensor field `h`.
#[derive(Clone)]
pub struct SphereFunction {
    pub tensor: Arc<dyn TensorField>,
}

impl SphereFunction {
    pub fn new(tensor: Arc<dyn TensorField>) -> Self {
        SphereFunction { tensor }
    }

    pub fn eval(&self, z: Phase) -> f64 {
        let (s, c) = z.psi.sin_cos();
        self.tensor.eval(z.p).contract([c, s])
    }

    pub fn scaled(&self, c: f64) -> SphereFunction {
        SphereFunction::new(Arc::new(Combination { terms: vec![(c, self.tensor.clone())] }))
    }
}

/// Longest first-level panel for integrals of `f` along the flow.
const PANEL: f64 = 0.1;
/// Absolute tolerance per panel for the bisection refinement.
const PANEL_TOL: f64 = 1e-14;

fn gl_panel(f: &SphereFunction, gl: &GaussLegendre, z: Phase, lo: f64, hi: f64) -> f64 {
    let h = hi - lo;
    let acc: f64 =
        gl.nodes.iter().zip(&gl.weights).map(|(x, w)| w * f.eval(flow_h2(z, lo + 0.5 * h * (x + 1.0)))).sum();
    0.5 * h * acc
}

fn gl_refine(f: &SphereFunction, gl: &GaussLegendre, z: Phase, lo: f64, hi: f64, whole: f64, depth: u32) -> f64 {
    let mid = 0.5 * (lo + hi);
    let (l, r) = (gl_panel(f, gl, z, lo, mid), gl_panel(f, gl, z, mid, hi));
    if depth == 0 || (l + r - whole).abs() <= PANEL_TOL {
        return l + r;
    }
    gl_refine(f, gl, z, lo, mid, l, depth - 1) + gl_refine(f, gl, z, mid, hi, r, depth - 1)
}

/// `∫_a^b f(φ_σ z) dσ` by 8-point Gauss–Legendre panels of length at most
/// `max_panel`, bisected until halving changes a panel by under `PANEL_TOL`.
pub fn flow_integral(f: &SphereFunction, gl: &GaussLegendre, z: Phase, a: f64, b: f64, max_panel: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let n = ((b - a).abs() / max_panel).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    (0..n)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            let whole = gl_panel(f, gl, z, lo, hi);
            gl_refine(f, gl, z, lo, hi, whole, 10)
        })
        .sum()
}

fn smooth_g(x: f64) -> (f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0)
    } else {
        let g = (-1.0 / x).exp();
        (g, g / (x * x))
    }
}

/// C^∞ step from 0 at x ≤ 0 to 1 at x ≥ 1, with its derivative.
pub fn smooth_step(x: f64) -> (f64, f64) {
    let (a, da) = smooth_g(x);
    let (b, db) = smooth_g(1.0 - x);
    let s = a + b;
    (a / s, (da * b + a * db) / (s * s))
}

/// `exp(1 − 1/(1−x²))` on (−1, 1), with its derivative.
fn bump(x: f64) -> (f64, f64) {
    if x.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - x * x;
    let b = (1.0 - 1.0 / q).exp();
    (b, -2.0 * x / (q * q) * b)
}

/// Distance proxy on the unit tangent bundle: hyperbolic base distance plus
/// angle difference, minimized over neighbouring translates.
pub fn proxy_distance(surface: &Surface, a: Phase, b: Phase) -> f64 {
    surface
        .neighbor_maps()
        .iter()
        .map(|n| {
            let nb = n.apply_phase(b);
            distance(a.p, nb.p) + wrap_angle(a.psi - nb.psi).abs()
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Serialize)]
pub struct LivsicOptions {
    /// Target accuracy ε; the period budget is ε^{−1/2}.
    pub eps: f64,
    /// Collar ramp width of the cusp flowboxes.
    pub eta: f64,
    pub beta: f64,
    pub nu: f64,
    pub delta: f64,
    pub max_word_len: usize,
    pub max_candidates: usize,
    pub sample_dt: f64,
    /// Interior sections: half-width in position along the section geodesic.
    pub section_radius: f64,
    /// Interior sections: half-width in crossing angle.
    pub angle_width: f64,
    /// Interior flowboxes: half-length along the flow.
    pub box_half_length: f64,
    /// Spacing of the base-point mesh of interior sections.
    pub mesh_spacing: f64,
    pub mesh_directions: usize,
    /// Interior sections are placed below `core_height · a`.
    pub core_height: f64,
    pub grid: [usize; 3],
    /// Above this ratio ‖I f‖∞ / ‖f‖_{C¹} the trivial decomposition is returned.
    pub trivial_threshold: f64,
    /// Number of shortest classes used for ‖I f‖∞.
    pub classes: usize,
}

impl Default for LivsicOptions {
    fn default() -> Self {
        LivsicOptions {
            eps: 1e-3,
            eta: 0.1,
            beta: 0.3,
            nu: 0.25,
            delta: 0.25,
            max_word_len: 10,
            max_candidates: 48,
            sample_dt: 0.02,
            section_radius: 0.45,
            angle_width: 1.0,
            box_half_length: 0.45,
            mesh_spacing: 0.3,
            mesh_directions: 10,
            core_height: 1.8,
            grid: [12, 12, 16],
            trivial_threshold: 0.5,
            classes: 5,
        }
    }
}

impl LivsicOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(LabError::input(format!("ε must lie in (0, 1), got {}", self.eps)));
        }
        if !(self.beta > 0.0 && self.beta < 0.5) {
            return Err(LabError::input(format!("β must lie in (0, 1/2), got {}", self.beta)));
        }
        if !(self.eta > 0.0 && self.eta < 0.5) || !(self.nu > 0.0) || !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(LabError::input("need 0 < η < 1/2, ν > 0 and 0 < δ ≤ 1"));
        }
        if !(self.section_radius > 0.0
            && self.box_half_length > 0.0
            && self.angle_width > 0.0
            && self.angle_width < FRAC_PI_2)
        {
            return Err(LabError::input("section widths and box length must be positive, angle width below π/2"));
        }
        if !(self.mesh_spacing > 0.0 && self.core_height >= 1.0) || self.mesh_directions < 2 {
            return Err(LabError::input("mesh spacing must be positive, at least 2 directions, core height ≥ 1"));
        }
        if !(self.sample_dt > 0.0 && self.sample_dt <= 0.5 * self.box_half_length.min(self.eta)) {
            return Err(LabError::input("sample step must be positive and at most half the box length and η"));
        }
        if self.grid.iter().any(|&n| n < 2) || self.max_word_len == 0 || self.max_candidates == 0 {
            return Err(LabError::input("grid sizes must be ≥ 2 and search bounds positive"));
        }
        Ok(())
    }

    pub fn period_budget(&self) -> f64 {
        self.eps.powf(-0.5)
    }

    /// Entry angle at or below which an excursion counts as deep.
    pub fn deep_angle(&self) -> f64 {
        self.eps.powf(2.0 * self.nu)
    }
}

/// A grid point of the unit tangent bundle over the fundamental domain.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub in_m_eps: bool,
    /// Volume weight dx d(ln y) dψ / y.
    pub weight: f64,
}

/// True when the cusp vector at height `y ≥ a` and angle φ lies on an
/// excursion that entered at angle ≤ the deep angle.
fn is_deep(a: f64, y: f64, phi: f64, deep_angle: f64) -> bool {
    if y < a {
        return false;
    }
    let s = phi.sin();
    if s <= 0.0 {
        return true;
    }
    (a * s / y).min(1.0).asin() <= deep_angle
}

/// Regular grid in (x, ln y, ψ) over the fundamental domain between
/// `y_lo` and `y_hi`.
fn grid_between(surface: &Surface, opts: &LivsicOptions, dims: [usize; 3], y_lo: f64, y_hi: f64) -> Vec<GridPoint> {
    let a = surface.cusp_height;
    let [nx, ny, np] = dims;
    let (l0, l1) = (y_lo.ln(), y_hi.ln());
    let dx = surface.width / nx as f64;
    let dl = (l1 - l0) / ny as f64;
    let dp = 2.0 * PI / np as f64;
    let mut out = Vec::new();
    for j in 0..ny {
        let y = (l0 + dl * (j as f64 + 0.5)).exp();
        for i in 0..nx {
            let x = surface.x0 + dx * (i as f64 + 0.5);
            if surface.floor_height(x) >= y {
                continue;
            }
            for k in 0..np {
                let psi = -PI + dp * (k as f64 + 0.5);
                out.push(GridPoint {
                    x,
                    y,
                    psi,
                    in_m_eps: !is_deep(a, y, psi.abs(), opts.deep_angle()),
                    weight: dx * dl * dp / y,
                });
            }
        }
    }
    out
}

/// Evaluation grid reaching past the deep-set threshold so both parts of the
/// weighted norm are sampled.
pub fn evaluation_grid(surface: &Surface, opts: &LivsicOptions) -> Vec<GridPoint> {
    let y_hi = 1.5 * surface.cusp_height / opts.deep_angle().sin();
    grid_between(surface, opts, opts.grid, 0.5 * surface.max_radius, y_hi)
}

fn core_grid(surface: &Surface, opts: &LivsicOptions) -> Vec<GridPoint> {
    let dims = [opts.grid[0].min(10), opts.grid[1].min(8), opts.grid[2].min(12)];
    grid_between(surface, opts, dims, 0.5 * surface.max_radius, surface.cusp_height)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CuspSide {
    Out,
    In,
}

/// Cusp-chart data of a vector: angle φ from the upward vertical, entry
/// angle φ_e, flow time to its section (entry for `Out`, exit for `In`) and
/// the section's θ.
#[derive(Debug, Clone, Copy)]
pub struct CuspCoords {
    pub phi: f64,
    pub phi_e: f64,
    pub t_sec: f64,
    pub theta_sec: f64,
}

pub fn cusp_coords(a: f64, width: f64, z: Phase, side: CuspSide) -> Option<CuspCoords> {
    let phi = z.psi.abs();
    let s = phi.sin();
    if s <= 1e-300 {
        return None;
    }
    let depth = z.p.y / s;
    if depth <= a {
        return None;
    }
    let t0 = (0.5 * phi).tan().ln();
    let sc = (depth / a).acosh();
    let t_sec = match side {
        CuspSide::Out => -sc - t0,
        CuspSide::In => sc - t0,
    };
    let at = flow_h2(z, t_sec);
    Some(CuspCoords { phi, phi_e: (a / depth).min(1.0).asin(), t_sec, theta_sec: at.p.x.rem_euclid(width) })
}

impl CuspCoords {
    pub fn section_angle(&self, side: CuspSide) -> f64 {
        match side {
            CuspSide::Out => self.phi_e,
            CuspSide::In => PI - self.phi_e,
        }
    }
}

/// A crossing of the orbit with a section.
#[derive(Debug, Clone, Serialize)]
pub struct SectionHit {
    pub coords: [f64; 2],
    /// Orbit time of the crossing.
    pub time: f64,
    pub value: f64,
}

/// Crossings of Σ_out / Σ_in (y = a, entry angle ≤ π/4) by orbit samples:
/// `(θ, angle, sample index, flow offset)`.
fn cusp_crossings(a: f64, width: f64, samples: &[Phase], dt: f64, side: CuspSide) -> Vec<([f64; 2], usize, f64)> {
    let half = 0.5 * dt;
    let mut out = Vec::new();
    for (k, z) in samples.iter().enumerate() {
        if z.p.y < 0.5 * a {
            continue;
        }
        if let Some(cc) = cusp_coords(a, width, *z, side) {
            if cc.t_sec > -half && cc.t_sec <= half && cc.phi_e <= FRAC_PI_4 {
                out.push(([cc.theta_sec, cc.section_angle(side)], k, cc.t_sec));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct GoodOrbit {
    pub word: String,
    #[serde(skip)]
    pub class: HomotopyClass,
    pub period: f64,
    pub dt: f64,
    /// Vector at time 0.
    #[serde(skip)]
    pub start: Phase,
    /// Samples reduced to the fundamental domain at times `k·dt`.
    #[serde(skip)]
    pub samples: Vec<Phase>,
    /// Largest proxy distance from a thick-part grid point to the orbit.
    pub core_density: f64,
    /// Largest section distance from a Σ_out/Σ_in grid point to a hit.
    pub cusp_density: f64,
    pub density_radius: f64,
    pub separation: f64,
    pub closure_error: f64,
}

impl GoodOrbit {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateScore {
    pub word: String,
    pub period: f64,
    pub density_radius: f64,
    pub separation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitSearch {
    pub best: GoodOrbit,
    pub budget: f64,
    /// Words within budget that were not scored because of the candidate cap.
    pub skipped: usize,
    pub candidates: Vec<CandidateScore>,
}

/// Largest distance from a grid point to the nearest orbit sample.
fn core_density(surface: &Surface, samples: &[Phase], grid: &[GridPoint]) -> f64 {
    let images: Vec<Phase> =
        samples.iter().flat_map(|s| surface.neighbor_maps().iter().map(move |n| n.apply_phase(*s))).collect();
    grid.iter()
        .map(|g| {
            let p = Point::new(g.x, g.y);
            let mut best = f64::INFINITY;
            for im in &images {
                let dpsi = wrap_angle(g.psi - im.psi).abs();
                if dpsi >= best {
                    continue;
                }
                let r = ((p.x - im.p.x).powi(2) + (p.y - im.p.y).powi(2)) / (p.y * im.p.y);
                best = best.min((1.0 + 0.5 * r).acosh() + dpsi);
            }
            best
        })
        .fold(0.0, f64::max)
}

fn cusp_density(surface: &Surface, samples: &[Phase], dt: f64, deep_angle: f64) -> f64 {
    let (a, w) = (surface.cusp_height, surface.width);
    let hits: Vec<Vec<[f64; 2]>> = [CuspSide::Out, CuspSide::In]
        .iter()
        .map(|&side| cusp_crossings(a, w, samples, dt, side).into_iter().map(|h| h.0).collect())
        .collect();
    if hits.iter().all(|h| !h.is_empty()) {
        return section_grid_distance(surface, &hits, deep_angle);
    }
    // no crossing of some section: distance from the section vectors to the orbit
    let coarse: Vec<Phase> = samples.iter().step_by(((0.05 / dt).round() as usize).max(1)).copied().collect();
    let mut worst: f64 = 0.0;
    for (q, _) in section_grid(surface, deep_angle) {
        let ph = |sgn: f64| Phase::new(surface.x0 + q[0], a, sgn * q[1]);
        let d = coarse
            .iter()
            .map(|z| proxy_distance(surface, ph(1.0), *z).min(proxy_distance(surface, ph(-1.0), *z)))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(d);
    }
    worst
}

/// Test points `[θ, angle]` on Σ_out (side 0) and Σ_in (side 1) with entry
/// angle between the deep angle and π/4.
fn section_grid(surface: &Surface, deep_angle: f64) -> Vec<([f64; 2], usize)> {
    let w = surface.width;
    let mut out = Vec::with_capacity(120);
    for side in 0..2 {
        for i in 0..10 {
            for j in 0..6 {
                let phi_e = deep_angle + (FRAC_PI_4 - deep_angle) * (j as f64 + 0.5) / 6.0;
                let angle = if side == 0 { phi_e } else { PI - phi_e };
                out.push(([w * (i as f64 + 0.5) / 10.0, angle], side));
            }
        }
    }
    out
}

fn section_grid_distance(surface: &Surface, hits: &[Vec<[f64; 2]>], deep_angle: f64) -> f64 {
    let metric = SectionMetric::Horocycle { a: surface.cusp_height, width: surface.width };
    section_grid(surface, deep_angle)
        .into_iter()
        .map(|(q, side)| hits[side].iter().map(|h| metric.distance(q, *h)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Smallest distance between samples on different passes (more than one
/// time unit apart along the orbit, cyclically).
fn separation(surface: &Surface, samples: &[Phase], dt: f64, period: f64) -> f64 {
    let stride = ((0.1 / dt).round() as usize).max(1);
    let idx: Vec<usize> = (0..samples.len()).step_by(stride).collect();
    let mut best = f64::INFINITY;
    for (ii, &i) in idx.iter().enumerate() {
        for &j in &idx[ii + 1..] {
            let gap = (j - i) as f64 * dt;
            if gap.min(period - gap) <= 1.0 {
                continue;
            }
            best = best.min(proxy_distance(surface, samples[i], samples[j]));
        }
    }
    best
}

/// Samples of the closed orbit of `g` at `n + 1` equally spaced times over
/// one period, stepping the reduced vector and snapping it back onto the
/// axis of the conjugate of `g` whose axis it lies on, so that rounding
/// errors are not amplified along the unstable direction.
fn stable_samples(surface: &Surface, g: &Mobius, n: usize, dt: f64) -> Result<Vec<Phase>> {
    let axis = g.axis()?;
    let (z0, m0) = surface.reduce_phase(axis.phase(axis.top_parameter()));
    let mut h = m0 * *g * m0.inverse();
    let mut ax = h.axis()?;
    let mut t = ax.foot_parameter(z0.p);
    let mut out = Vec::with_capacity(n + 1);
    out.push(ax.phase(t));
    for _ in 0..n {
        let (w, m) = surface.reduce_phase(ax.phase(t + dt));
        if m != Mobius::IDENTITY {
            h = m * h * m.inverse();
            ax = h.axis()?;
            t = ax.foot_parameter(w.p);
        } else {
            t += dt;
        }
        out.push(ax.phase(t));
    }
    Ok(out)
}

/// Matrix of the cyclic rotation of the word whose axis top reduces lowest.
/// Starting the sampling there keeps the cut out of cusp excursions; the
/// matrix is evaluated from the letters, since conjugating an already
/// rounded matrix through a full period amplifies its error by about `e^T`.
fn low_start_rotation(surface: &Surface, class: &HomotopyClass) -> Result<Mobius> {
    let w = class.word();
    let mut best: Option<(f64, Mobius)> = None;
    for r in 0..w.len() {
        let rot: Vec<i32> = w[r..].iter().chain(&w[..r]).copied().collect();
        let m = surface.group.evaluate_letters(&rot)?;
        let ax = m.axis()?;
        let y = surface.reduce(ax.phase(ax.top_parameter()).p).0.y;
        if best.is_none_or(|(b, _)| y < b) {
            best = Some((y, m));
        }
    }
    best.map(|b| b.1).ok_or_else(|| LabError::input("empty word"))
}

fn build_orbit(
    surface: &Surface,
    class: &HomotopyClass,
    opts: &LivsicOptions,
    grid: &[GridPoint],
) -> Result<GoodOrbit> {
    let m = surface.group.evaluate_word(class)?;
    let period = m.trace_length()?;
    let n = (period / opts.sample_dt).ceil() as usize;
    let dt = period / n as f64;
    let mut samples = stable_samples(surface, &low_start_rotation(surface, class)?, n, dt)?;
    let end = samples.pop().expect("n + 1 samples");
    let closure_error = proxy_distance(surface, end, samples[0]);
    let start = samples[0];
    let coarse: Vec<Phase> = samples.iter().step_by(((0.05 / dt).round() as usize).max(1)).copied().collect();
    let core = core_density(surface, &coarse, grid);
    let cusp = cusp_density(surface, &samples, dt, opts.deep_angle());
    Ok(GoodOrbit {
        word: surface.group.format_word(class),
        class: class.clone(),
        period,
        dt,
        start,
        core_density: core,
        cusp_density: cusp,
        density_radius: core.max(cusp),
        separation: separation(surface, &samples, dt, period),
        closure_error,
        samples,
    })
}

/// Highest point of the closed geodesic above the real axis, as the largest
/// axis radius over the cyclic rotations of the word.
pub fn apex_height(surface: &Surface, class: &HomotopyClass) -> f64 {
    let w = class.word();
    let mut best: f64 = 0.0;
    for r in 0..w.len() {
        let rot: Vec<i32> = w[r..].iter().chain(&w[..r]).copied().collect();
        if let Ok(m) = surface.group.evaluate_letters(&rot) {
            let t = m.a + m.d;
            if m.c != 0.0 {
                best = best.max((t * t - 4.0).max(0.0).sqrt() / (2.0 * m.c.abs()));
            }
        }
    }
    best
}

/// Cusp part of the density radius from a coarse sampling of the orbit;
/// infinite when the orbit never crosses a cusp section.
pub fn cusp_screen(surface: &Surface, class: &HomotopyClass, period: f64, opts: &LivsicOptions) -> Result<f64> {
    let n = (period / SCREEN_DT).ceil() as usize;
    let dt = period / n as f64;
    let samples = stable_samples(surface, &low_start_rotation(surface, class)?, n, dt)?;
    let (a, w) = (surface.cusp_height, surface.width);
    let mut hits: Vec<Vec<[f64; 2]>> = Vec::new();
    for side in [CuspSide::Out, CuspSide::In] {
        let h: Vec<[f64; 2]> = cusp_crossings(a, w, &samples[..n], dt, side).into_iter().map(|h| h.0).collect();
        if h.is_empty() {
            return Ok(f64::INFINITY);
        }
        hits.push(h);
    }
    Ok(section_grid_distance(surface, &hits, opts.deep_angle()))
}

const SCREEN_DT: f64 = 0.05;

/// Enumerate cyclically reduced words, keep those with period ≤ ε^{−1/2},
/// score the longest ones by (density radius, −separation) and return the
/// best.
pub fn find_good_orbit(surface: &Surface, opts: &LivsicOptions) -> Result<OrbitSearch> {
    search_with(surface, opts, &[])
}

/// Searches for a list of ε (sorted from coarse to fine), each rung also
/// scoring the previous rung's winner, so the achieved density radius never
/// grows along the ladder.
pub fn search_ladder(surface: &Surface, opts: &LivsicOptions, eps: &[f64]) -> Result<Vec<OrbitSearch>> {
    let mut order: Vec<f64> = eps.to_vec();
    order.sort_by(|a, b| b.total_cmp(a));
    let mut out: Vec<OrbitSearch> = Vec::new();
    for e in order {
        let o = LivsicOptions { eps: e, ..opts.clone() };
        let carried: Vec<HomotopyClass> = out.last().map(|s| vec![s.best.class.clone()]).unwrap_or_default();
        out.push(search_with(surface, &o, &carried)?);
    }
    Ok(out)
}

fn search_with(surface: &Surface, opts: &LivsicOptions, carried: &[HomotopyClass]) -> Result<OrbitSearch> {
    opts.validate()?;
    let budget = opts.period_budget();
    let all: Vec<(HomotopyClass, f64)> =
        surface.group.hyperbolic_classes(opts.max_word_len).into_iter().filter(|(_, l)| *l <= budget).collect();
    if all.is_empty() {
        return Err(LabError::NoConvergence(format!(
            "no orbit within budget meets both criteria: no closed orbit with period ≤ {budget:.4} up to word length {}",
            opts.max_word_len
        )));
    }
    // two strata: the best words by the cheap cusp screen, then the longest
    // words, which cover the thick part best
    let mut screened: Vec<(f64, &HomotopyClass)> =
        all.iter().map(|(c, l)| Ok((cusp_screen(surface, c, *l, opts)?, c))).collect::<Result<_>>()?;
    screened.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(y.1)));
    let n_cusp = opts.max_candidates.div_ceil(2);
    let mut chosen: Vec<&HomotopyClass> =
        screened.iter().filter(|x| x.0.is_finite()).take(n_cusp).map(|x| x.1).collect();
    for c in all.iter().rev() {
        if chosen.len() >= opts.max_candidates {
            break;
        }
        if !chosen.contains(&&c.0) {
            chosen.push(&c.0);
        }
    }
    for c in carried {
        if !chosen.contains(&c) {
            chosen.push(c);
        }
    }
    let grid = core_grid(surface, opts);
    let scored: Vec<GoodOrbit> =
        chosen.par_iter().map(|c| build_orbit(surface, c, opts, &grid)).collect::<Result<_>>()?;
    let best = scored
        .iter()
        .min_by(|a, b| {
            a.density_radius
                .total_cmp(&b.density_radius)
                .then(b.separation.total_cmp(&a.separation))
                .then(a.class.cmp(&b.class))
        })
        .cloned()
        .expect("at least one candidate");
    let mut candidates: Vec<CandidateScore> = scored
        .iter()
        .map(|o| CandidateScore {
            word: o.word.clone(),
            period: o.period,
            density_radius: o.density_radius,
            separation: o.separation,
        })
        .collect();
    candidates.sort_by(|a, b| a.word.cmp(&b.word));
    Ok(OrbitSearch { best, budget, skipped: all.len().saturating_sub(chosen.len()), candidates })
}

/// The closed orbit of a given class, scored like a search candidate.
pub fn orbit_of_class(surface: &Surface, class: &HomotopyClass, opts: &LivsicOptions) -> Result<GoodOrbit> {
    opts.validate()?;
    build_orbit(surface, class, opts, &core_grid(surface, opts))
}

/// `ũ(φ_t z₀) = ∫₀^t f(φ_s z₀) ds` at every sample of the orbit.
pub fn primitive_along_orbit(f: &SphereFunction, orbit: &GoodOrbit) -> Vec<f64> {
    let gl = GaussLegendre::new(8);
    let steps: Vec<f64> = (0..orbit.samples.len())
        .into_par_iter()
        .map(|k| flow_integral(f, &gl, orbit.samples[k], 0.0, orbit.dt, orbit.dt))
        .collect();
    let mut out = Vec::with_capacity(steps.len());
    let mut acc = 0.0;
    for s in steps {
        out.push(acc);
        acc += s;
    }
    out
}

/// Distance used on a section.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum SectionMetric {
    /// `|Δs| + |Δα|` in flowbox coordinates.
    Flat,
    /// Horocycle `y = a` with angle: `2 asinh(|Δθ|/2a) + |Δφ|`, θ periodic.
    Horocycle { a: f64, width: f64 },
}

impl SectionMetric {
    pub fn distance(&self, p: [f64; 2], q: [f64; 2]) -> f64 {
        match *self {
            SectionMetric::Flat => (p[0] - q[0]).abs() + (p[1] - q[1]).abs(),
            SectionMetric::Horocycle { a, width } => {
                let mut dt = (p[0] - q[0]).rem_euclid(width);
                dt = dt.min(width - dt);
                2.0 * (dt / (2.0 * a)).asinh() + (p[1] - q[1]).abs()
            }
        }
    }
}

/// Below this distance two section points are treated as the same point.
pub const SNAP: f64 = 1e-10;

/// `sup_y ũ(y) − K d(·, y)^β` over the hits of one section.
#[derive(Debug, Clone)]
pub struct HolderExtension {
    pub hits: Vec<([f64; 2], f64)>,
    pub metric: SectionMetric,
    pub beta: f64,
    pub bound: f64,
}

/// Hölder-β seminorm of the values over pairs of hits.
pub fn holder_seminorm(hits: &[([f64; 2], f64)], metric: SectionMetric, beta: f64) -> f64 {
    let mut k: f64 = 0.0;
    for (i, (p, u)) in hits.iter().enumerate() {
        for (q, v) in &hits[i + 1..] {
            let d = metric.distance(*p, *q);
            if d > SNAP {
                k = k.max((u - v).abs() / d.powf(beta));
            }
        }
    }
    k
}

pub fn holder_extend(
    hits: Vec<([f64; 2], f64)>,
    metric: SectionMetric,
    beta: f64,
    bound: f64,
) -> Result<HolderExtension> {
    if hits.is_empty() {
        return Err(LabError::input("Hölder extension needs at least one hit"));
    }
    if !(beta > 0.0 && beta < 0.5) {
        return Err(LabError::input(format!("β must lie in (0, 1/2), got {beta}")));
    }
    if !(bound > 0.0) {
        return Err(LabError::input("seminorm bound must be positive"));
    }
    Ok(HolderExtension { hits, metric, beta, bound })
}

impl HolderExtension {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.hits
            .iter()
            .map(|(y, u)| {
                let d = self.metric.distance(x, *y);
                if d <= SNAP {
                    *u
                } else {
                    u - self.bound * d.powf(self.beta)
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Hyperboloid coordinates of a unit vector: position and velocity.
fn hyperboloid(z: Phase) -> ([f64; 3], [f64; 3]) {
    let (x, y) = (z.p.x, z.p.y);
    let r2 = x * x + y * y;
    let p = [(r2 + 1.0) / (2.0 * y), (r2 - 1.0) / (2.0 * y), x / y];
    let (s, c) = z.psi.sin_cos();
    let (xd, yd) = (y * s, y * c);
    let common = (x * xd + y * yd) / y;
    let v = [common - p[0] * yd / y, common - p[1] * yd / y, xd / y - x * yd / (y * y)];
    (p, v)
}

/// Coordinates of a vector in a flowbox: `t` is the flow time since the
/// section, `s` the position along it and `alpha` the crossing angle.
#[derive(Debug, Clone, Copy)]
pub struct BoxCoords {
    pub t: f64,
    pub s: f64,
    pub alpha: f64,
}

/// Flowbox over the geodesic segment perpendicular to a centre vector.
#[derive(Debug, Clone)]
pub struct InteriorBox {
    pub center: Phase,
    to_std: Mobius,
    pub radius: f64,
    pub angle_width: f64,
    pub half_length: f64,
    pub ext: Option<HolderExtension>,
    pub hits: Vec<SectionHit>,
}

impl InteriorBox {
    pub fn new(center: Phase, radius: f64, angle_width: f64, half_length: f64) -> Self {
        InteriorBox {
            center,
            to_std: Mobius::frame_of(center).inverse(),
            radius,
            angle_width,
            half_length,
            ext: None,
            hits: Vec::new(),
        }
    }

    fn coords_of_lift(&self, z: Phase) -> Option<BoxCoords> {
        let w = self.to_std.apply_phase(z);
        let (p, v) = hyperboloid(w);
        if p[1].abs() >= v[1].abs() {
            return None;
        }
        let ts = (-p[1] / v[1]).atanh();
        let (ch, sh) = (ts.cosh(), ts.sinh());
        let q: Vec<f64> = (0..3).map(|i| p[i] * ch + v[i] * sh).collect();
        let dir: Vec<f64> = (0..3).map(|i| p[i] * sh + v[i] * ch).collect();
        let s = q[2].asinh();
        let alpha = (dir[2] * s.cosh() - dir[0] * s.sinh()).atan2(dir[1]);
        Some(BoxCoords { t: -ts, s, alpha })
    }

    /// Box coordinates of `z` for the first lift inside the box with
    /// `|t| < t_max`.
    pub fn coords(&self, surface: &Surface, z: Phase, t_max: f64) -> Option<BoxCoords> {
        let ch = (t_max + self.radius + 1e-9).cosh();
        let c = self.center.p;
        for n in surface.neighbor_maps() {
            let q = n.apply_point(z.p);
            let cosh_d = 1.0 + ((q.x - c.x).powi(2) + (q.y - c.y).powi(2)) / (2.0 * q.y * c.y);
            if cosh_d > ch {
                continue;
            }
            if let Some(bc) = self.coords_of_lift(n.apply_phase(z)) {
                if bc.t.abs() < t_max && bc.s.abs() < self.radius && bc.alpha.abs() < self.angle_width {
                    return Some(bc);
                }
            }
        }
        None
    }

    /// `(ψ, Xψ)` of the product bump profile.
    fn profile(&self, bc: &BoxCoords) -> (f64, f64) {
        let (pt, dpt) = bump(bc.t / self.half_length);
        let (ps, _) = bump(bc.s / self.radius);
        let (pa, _) = bump(bc.alpha / self.angle_width);
        (pt * ps * pa, dpt / self.half_length * ps * pa)
    }
}

/// Σ_out / Σ_in pushed through the cusp by the flow.
#[derive(Debug, Clone)]
pub struct CuspBox {
    pub side: CuspSide,
    pub ext: Option<HolderExtension>,
    pub hits: Vec<SectionHit>,
}

const ENTRY_RAMP: f64 = 0.2;

impl CuspBox {
    fn profile(&self, a: f64, eta: f64, y: f64, cc: &CuspCoords) -> (f64, f64) {
        let (hgt, dhgt) = smooth_step(((y / a).ln() + eta) / eta);
        let (phi_eff, sign) = match self.side {
            CuspSide::Out => (cc.phi, 1.0),
            CuspSide::In => (PI - cc.phi, -1.0),
        };
        let (st, dst) = smooth_step((phi_eff - (FRAC_PI_2 - eta)) / (2.0 * eta));
        let (se, _) = smooth_step((cc.phi_e - (FRAC_PI_4 - ENTRY_RAMP)) / ENTRY_RAMP);
        let (g, e) = (1.0 - st, 1.0 - se);
        // along the flow: (ln y)˙ = cos φ, φ˙ = sin φ, φ_e constant
        let (sphi, cphi) = cc.phi.sin_cos();
        let val = hgt * g * e;
        let xval = (dhgt * cphi / eta * g - hgt * dst * sign * sphi / (2.0 * eta)) * e;
        (val, xval)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverSummary {
    pub interior_boxes: usize,
    pub empty_boxes: usize,
    pub cusp_hits: [usize; 2],
    pub seminorm_bound: f64,
    pub mean_hits_per_box: f64,
}

/// Base-point mesh of interior sections: log-spaced heights below
/// `core_height · a`, hyperbolically spaced abscissae, evenly spaced directions.
pub fn section_mesh(surface: &Surface, opts: &LivsicOptions) -> Vec<Phase> {
    let h = opts.mesh_spacing;
    let top = opts.core_height * surface.cusp_height;
    let floor = (0..64)
        .map(|i| surface.floor_height(surface.x0 + surface.width * (i as f64 + 0.5) / 64.0))
        .fold(f64::INFINITY, f64::min);
    let mut out = Vec::new();
    let mut y = top;
    while y > floor * (-h).exp() {
        let n = (surface.width / (h * y)).ceil() as usize;
        for i in 0..n {
            let x = surface.x0 + surface.width * (i as f64 + 0.5) / n as f64;
            if y < surface.floor_height(x) * (-0.5 * h).exp() {
                continue;
            }
            for j in 0..opts.mesh_directions {
                let psi = -PI + 2.0 * PI * (j as f64 + 0.5) / opts.mesh_directions as f64;
                out.push(Phase::new(x, y, psi));
            }
        }
        y *= (-h).exp();
    }
    out
}

/// Flowbox cover with section extensions, built for one function and orbit.
pub struct Decomposer<'a> {
    pub surface: &'a Surface,
    pub f: SphereFunction,
    pub opts: LivsicOptions,
    pub orbit: GoodOrbit,
    pub primitive: Vec<f64>,
    pub boxes: Vec<InteriorBox>,
    pub cusp: [CuspBox; 2],
    pub summary: CoverSummary,
    gl: GaussLegendre,
}

/// One flowbox's contribution at a point.
#[derive(Debug, Clone, Copy)]
pub struct Term {
    pub psi: f64,
    pub xpsi: f64,
    pub u: f64,
    /// Flow time from the point to its section.
    pub offset: f64,
}

/// Partition data at one point.
#[derive(Debug, Clone, Default)]
pub struct LocalTerms {
    pub sum: f64,
    pub xsum: f64,
    pub terms: Vec<Term>,
}

impl LocalTerms {
    fn xtheta(&self, t: &Term) -> f64 {
        (t.xpsi * self.sum - t.psi * self.xsum) / (self.sum * self.sum)
    }
    pub fn theta_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.psi / self.sum).sum()
    }
    pub fn xtheta_sum(&self) -> f64 {
        self.terms.iter().map(|t| self.xtheta(t)).sum()
    }
    pub fn u(&self) -> f64 {
        self.terms.iter().map(|t| t.psi / self.sum * t.u).sum()
    }
    pub fn h(&self) -> f64 {
        -self.terms.iter().map(|t| t.u * self.xtheta(t)).sum::<f64>()
    }
}

/// Points with Σψ below this are reported as uncovered.
pub const COVER_FLOOR: f64 = 1e-6;

impl<'a> Decomposer<'a> {
    pub fn new(surface: &'a Surface, f: SphereFunction, orbit: GoodOrbit, opts: LivsicOptions) -> Result<Self> {
        opts.validate()?;
        let primitive = primitive_along_orbit(&f, &orbit);
        let gl = GaussLegendre::new(8);
        let (a, width) = (surface.cusp_height, surface.width);
        let n = orbit.samples.len();
        let last_time = orbit.period - 1.0;
        let half = 0.5 * orbit.dt;
        let value_at = |k: usize, dt: f64| primitive[k] + flow_integral(&f, &gl, orbit.samples[k], 0.0, dt, PANEL);

        let mut boxes: Vec<InteriorBox> = section_mesh(surface, &opts)
            .into_iter()
            .map(|c| InteriorBox::new(c, opts.section_radius, opts.angle_width, opts.box_half_length))
            .collect();
        boxes.par_iter_mut().for_each(|b| {
            for k in 0..n {
                if let Some(bc) = b.coords(surface, orbit.samples[k], half + 1e-12) {
                    if bc.t > -half && bc.t <= half {
                        let time = orbit.time(k) - bc.t;
                        if (0.0..=last_time).contains(&time) {
                            b.hits.push(SectionHit { coords: [bc.s, bc.alpha], time, value: value_at(k, -bc.t) });
                        }
                    }
                }
            }
        });
        let mut cusp = [
            CuspBox { side: CuspSide::Out, ext: None, hits: Vec::new() },
            CuspBox { side: CuspSide::In, ext: None, hits: Vec::new() },
        ];
        for cb in cusp.iter_mut() {
            for (coords, k, off) in cusp_crossings(a, width, &orbit.samples, orbit.dt, cb.side) {
                let time = orbit.time(k) + off;
                if (0.0..=last_time).contains(&time) {
                    cb.hits.push(SectionHit { coords, time, value: value_at(k, off) });
                }
            }
        }
        let horo = SectionMetric::Horocycle { a, width };
        let pairs = |h: &[SectionHit]| -> Vec<([f64; 2], f64)> { h.iter().map(|x| (x.coords, x.value)).collect() };
        let mut bound = boxes
            .par_iter()
            .map(|b| holder_seminorm(&pairs(&b.hits), SectionMetric::Flat, opts.beta))
            .reduce(|| 0.0, f64::max);
        for cb in &cusp {
            bound = bound.max(holder_seminorm(&pairs(&cb.hits), horo, opts.beta));
        }
        let bound = bound.max(1e-300);
        let total_boxes = boxes.len();
        boxes.retain(|b| !b.hits.is_empty());
        let hit_total: usize = boxes.iter().map(|b| b.hits.len()).sum();
        for b in boxes.iter_mut() {
            b.ext = Some(holder_extend(pairs(&b.hits), SectionMetric::Flat, opts.beta, bound)?);
        }
        for cb in cusp.iter_mut() {
            if !cb.hits.is_empty() {
                cb.ext = Some(holder_extend(pairs(&cb.hits), horo, opts.beta, bound)?);
            }
        }
        let summary = CoverSummary {
            interior_boxes: boxes.len(),
            empty_boxes: total_boxes - boxes.len(),
            cusp_hits: [cusp[0].hits.len(), cusp[1].hits.len()],
            seminorm_bound: bound,
            mean_hits_per_box: hit_total as f64 / boxes.len().max(1) as f64,
        };
        Ok(Decomposer { surface, f, opts, orbit, primitive, boxes, cusp, summary, gl })
    }

    /// Partition terms and section primitives at `z` (any lift).
    pub fn local(&self, z: Phase) -> LocalTerms {
        let (z, _) = self.surface.reduce_phase(z);
        let a = self.surface.cusp_height;
        let mut lt = LocalTerms::default();
        for b in &self.boxes {
            if let Some(bc) = b.coords(self.surface, z, b.half_length) {
                let (psi, xpsi) = b.profile(&bc);
                if psi <= 0.0 {
                    continue;
                }
                let ext = b.ext.as_ref().expect("boxes without hits are dropped");
                let u = ext.eval([bc.s, bc.alpha]) + flow_integral(&self.f, &self.gl, z, -bc.t, 0.0, PANEL);
                lt.terms.push(Term { psi, xpsi, u, offset: -bc.t });
            }
        }
        if z.p.y > a * (-self.opts.eta).exp() {
            for cb in &self.cusp {
                let Some(ext) = &cb.ext else { continue };
                let Some(cc) = cusp_coords(a, self.surface.width, z, cb.side) else { continue };
                let (psi, xpsi) = cb.profile(a, self.opts.eta, z.p.y, &cc);
                if psi <= 0.0 {
                    continue;
                }
                let along = -flow_integral(&self.f, &self.gl, z, 0.0, cc.t_sec, PANEL);
                let u = ext.eval([cc.theta_sec, cc.section_angle(cb.side)]) + along;
                lt.terms.push(Term { psi, xpsi, u, offset: cc.t_sec });
            }
        }
        lt.sum = lt.terms.iter().map(|t| t.psi).sum();
        lt.xsum = lt.terms.iter().map(|t| t.xpsi).sum();
        lt
    }

    /// `u` at `z`, or `None` where the cover does not reach.
    pub fn u_at(&self, z: Phase) -> Option<f64> {
        let lt = self.local(z);
        (lt.sum >= COVER_FLOOR).then(|| lt.u())
    }

    /// `|h|` at orbit samples whose section crossings all fall in the
    /// primitive's time window `[0, T − 1]`; also returns the number checked.
    pub fn orbit_residual(&self) -> (f64, usize) {
        let step = ((0.1 / self.orbit.dt).round() as usize).max(1);
        let last = self.orbit.period - 1.0;
        let idx: Vec<usize> = (0..self.orbit.samples.len()).step_by(step).collect();
        let vals: Vec<Option<f64>> = idx
            .par_iter()
            .map(|&k| {
                let t = self.orbit.time(k);
                let lt = self.local(self.orbit.samples[k]);
                let inside = lt.terms.iter().all(|term| (0.0..=last).contains(&(t + term.offset)));
                (lt.sum >= COVER_FLOOR && inside).then(|| lt.h().abs())
            })
            .collect();
        let checked: Vec<f64> = vals.into_iter().flatten().collect();
        (checked.iter().fold(0.0, |m, v| m.max(*v)), checked.len())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridRow {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub in_m_eps: bool,
    pub covered: bool,
    pub f: f64,
    pub u: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoboundaryDecomposition {
    pub word: String,
    pub period: f64,
    pub c1_norm: f64,
    /// ‖I f‖∞ over the shortest classes, for f normalized to ‖f‖_{C¹} = 1.
    pub xray_sup: f64,
    pub trivial_branch: bool,
    pub flags: Vec<String>,
    pub cover: Option<CoverSummary>,
    /// Fraction of M_ε grid points reached by the cover.
    pub coverage: f64,
    /// Sup of |h| over covered grid points of M_ε.
    pub h_c0: f64,
    /// ‖y^{d/2−δ} h‖_{L²} over the covered grid.
    pub h_weighted_l2: f64,
    /// Squared weighted norm over M_ε.
    pub part_one: f64,
    /// Squared weighted norm over the complement.
    pub part_two: f64,
    pub orbit_h_max: f64,
    pub orbit_points_checked: usize,
    pub partition_residual: f64,
    pub xtheta_residual: f64,
    /// `|Xu + h − f|` with Xu by a five-point stencil along the flow.
    pub consistency_residual: f64,
    /// Sup over cusp rows of |h̄|, the θ-average of h.
    pub cusp_average_h: f64,
    pub cusp_h: f64,
    #[serde(skip)]
    pub rows: Vec<GridRow>,
}

/// `max(|f|, |∇f|)` over the grid, the gradient taken in the orthonormal
/// frame (flow, horizontal, vertical) by central differences.
pub fn c1_norm(f: &SphereFunction, grid: &[GridPoint]) -> f64 {
    let h = 1e-4;
    grid.par_iter()
        .map(|g| {
            let z = Phase::new(g.x, g.y, g.psi);
            let fx = (f.eval(flow_h2(z, h)) - f.eval(flow_h2(z, -h))) / (2.0 * h);
            let side = |t: f64| {
                let w = flow_h2(Phase::new(g.x, g.y, g.psi + FRAC_PI_2), t);
                Phase { p: w.p, psi: w.psi - FRAC_PI_2 }
            };
            let fh = (f.eval(side(h)) - f.eval(side(-h))) / (2.0 * h);
            let fv = (f.eval(Phase::new(g.x, g.y, g.psi + h)) - f.eval(Phase::new(g.x, g.y, g.psi - h))) / (2.0 * h);
            f.eval(z).abs().max((fx * fx + fh * fh + fv * fv).sqrt())
        })
        .reduce(|| 0.0, f64::max)
}

/// `sup_c |(1/ℓ) ∫ f|` over the shortest hyperbolic classes, by quadrature
/// along the axes.
pub fn xray_sup(surface: &Surface, f: &SphereFunction, classes: usize) -> Result<f64> {
    let gl = GaussLegendre::new(8);
    let list: Vec<(HomotopyClass, f64)> = surface.group.hyperbolic_classes(6).into_iter().take(classes).collect();
    let vals: Vec<f64> = list
        .par_iter()
        .map(|(c, l)| {
            let axis = surface.group.evaluate_word(c)?.axis()?;
            let z = axis.phase(axis.top_parameter());
            Ok((flow_integral(f, &gl, z, 0.0, *l, 0.05) / l).abs())
        })
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

fn weighted_parts(rows: &[GridRow], grid: &[GridPoint], delta: f64) -> (f64, f64) {
    let mut parts = (0.0, 0.0);
    for (r, g) in rows.iter().zip(grid) {
        if !r.covered {
            continue;
        }
        let v = (r.y.powf(0.5 - delta) * r.h).powi(2) * g.weight;
        if r.in_m_eps {
            parts.0 += v;
        } else {
            parts.1 += v;
        }
    }
    parts
}

/// `f = Xu + h` with `u = Σ u_i θ_i` and `h = −Σ u_i Xθ_i`. `f` is normalized
/// to ‖f‖_{C¹} = 1 first; all reported norms refer to the normalized `f`.
pub fn decompose(
    surface: &Surface,
    f: &SphereFunction,
    orbit: &GoodOrbit,
    opts: &LivsicOptions,
) -> Result<CoboundaryDecomposition> {
    opts.validate()?;
    let grid = evaluation_grid(surface, opts);
    let c1 = c1_norm(f, &grid);
    if !(c1 > 0.0) {
        return Err(LabError::input("f vanishes on the grid; nothing to decompose"));
    }
    let fnorm = f.scaled(1.0 / c1);
    let xs = xray_sup(surface, &fnorm, opts.classes)?;
    if xs > opts.trivial_threshold {
        let rows: Vec<GridRow> = grid
            .iter()
            .map(|g| {
                let v = fnorm.eval(Phase::new(g.x, g.y, g.psi));
                GridRow { x: g.x, y: g.y, psi: g.psi, in_m_eps: g.in_m_eps, covered: true, f: v, u: 0.0, h: v }
            })
            .collect();
        let (one, two) = weighted_parts(&rows, &grid, opts.delta);
        return Ok(CoboundaryDecomposition {
            word: orbit.word.clone(),
            period: orbit.period,
            c1_norm: c1,
            xray_sup: xs,
            trivial_branch: true,
            flags: vec!["trivial branch: ‖I f‖∞ above threshold, h = f".into()],
            cover: None,
            coverage: 1.0,
            h_c0: rows.iter().filter(|r| r.in_m_eps).map(|r| r.h.abs()).fold(0.0, f64::max),
            h_weighted_l2: (one + two).sqrt(),
            part_one: one,
            part_two: two,
            orbit_h_max: f64::NAN,
            orbit_points_checked: 0,
            partition_residual: 0.0,
            xtheta_residual: 0.0,
            consistency_residual: 0.0,
            cusp_average_h: f64::NAN,
            cusp_h: f64::NAN,
            rows,
        });
    }
    let dec = Decomposer::new(surface, fnorm.clone(), orbit.clone(), opts.clone())?;
    let locals: Vec<(GridRow, f64, f64)> = grid
        .par_iter()
        .map(|g| {
            let z = Phase::new(g.x, g.y, g.psi);
            let lt = dec.local(z);
            let covered = lt.sum >= COVER_FLOOR;
            let row = GridRow {
                x: g.x,
                y: g.y,
                psi: g.psi,
                in_m_eps: g.in_m_eps,
                covered,
                f: fnorm.eval(z),
                u: if covered { lt.u() } else { f64::NAN },
                h: if covered { lt.h() } else { f64::NAN },
            };
            if covered {
                (row, (lt.theta_sum() - 1.0).abs(), lt.xtheta_sum().abs())
            } else {
                (row, 0.0, 0.0)
            }
        })
        .collect();
    let rows: Vec<GridRow> = locals.iter().map(|l| l.0.clone()).collect();
    let m_eps = rows.iter().filter(|r| r.in_m_eps).count();
    let covered = rows.iter().filter(|r| r.in_m_eps && r.covered).count();
    let mut flags = Vec::new();
    if covered < m_eps {
        flags.push(format!("{} of {} M_ε grid points outside the cover", m_eps - covered, m_eps));
    }
    if dec.summary.empty_boxes > 0 {
        flags.push(format!("{} interior sections without orbit hits dropped", dec.summary.empty_boxes));
    }
    if dec.cusp.iter().any(|c| c.ext.is_none()) {
        flags.push("a cusp section has no orbit hits".into());
    }
    let (one, two) = weighted_parts(&rows, &grid, opts.delta);
    let (orbit_h, checked) = dec.orbit_residual();
    let dt = 5e-4;
    let sub: Vec<&GridRow> = rows.iter().filter(|r| r.covered && r.in_m_eps).step_by(7).collect();
    let consistency = sub
        .par_iter()
        .map(|r| {
            let z = Phase::new(r.x, r.y, r.psi);
            let us: Vec<Option<f64>> = [-2.0, -1.0, 1.0, 2.0].iter().map(|k| dec.u_at(flow_h2(z, k * dt))).collect();
            match (us[0], us[1], us[2], us[3]) {
                (Some(m2), Some(m1), Some(p1), Some(p2)) => {
                    let xu = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * dt);
                    (xu + r.h - r.f).abs()
                }
                _ => 0.0,
            }
        })
        .reduce(|| 0.0, f64::max);
    let a = surface.cusp_height;
    let mut lines: std::collections::BTreeMap<(u64, u64), (f64, usize, f64)> = Default::default();
    for r in rows.iter().filter(|r| r.y >= a && r.covered) {
        let e = lines.entry((r.y.to_bits(), r.psi.to_bits())).or_insert((0.0, 0, 0.0));
        e.0 += r.h;
        e.1 += 1;
        e.2 = e.2.max(r.h.abs());
    }
    let cusp_average_h = lines.values().map(|(s, n, _)| (s / *n as f64).abs()).fold(0.0, f64::max);
    let cusp_h = lines.values().map(|v| v.2).fold(0.0, f64::max);
    Ok(CoboundaryDecomposition {
        word: dec.orbit.word.clone(),
        period: dec.orbit.period,
        c1_norm: c1,
        xray_sup: xs,
        trivial_branch: false,
        flags,
        cover: Some(dec.summary.clone()),
        coverage: covered as f64 / m_eps.max(1) as f64,
        h_c0: rows.iter().filter(|r| r.in_m_eps && r.covered).map(|r| r.h.abs()).fold(0.0, f64::max),
        h_weighted_l2: (one + two).sqrt(),
        part_one: one,
        part_two: two,
        orbit_h_max: orbit_h,
        orbit_points_checked: checked,
        partition_residual: locals.iter().map(|l| l.1).fold(0.0, f64::max),
        xtheta_residual: locals.iter().map(|l| l.2).fold(0.0, f64::max),
        consistency_residual: consistency,
        cusp_average_h,
        cusp_h,
        rows,
    })
}

/// Smooth compactly supported 1-form `v`; as a function on the unit tangent
/// bundle its flow derivative is the symmetrized covariant derivative.
pub fn coboundary_potential(surface: &Arc<Surface>) -> BumpOneForm {
    BumpOneForm { bump: SurfaceBump::new(surface.clone(), Point::new(-0.25, 0.26), 0.4), alpha: 0.6, beta: -0.9 }
}

/// `Xv` for a 1-form `v`.
pub fn coboundary(v: &BumpOneForm) -> SphereFunction {
    SphereFunction::new(Arc::new(SymDerivative(v.clone())))
}

/// Nonnegative conformal bump; its X-ray transform is positive on every
/// class through its support.
pub fn visible_bump(surface: &Arc<Surface>) -> ConformalBump {
    ConformalBump { bump: SurfaceBump::new(surface.clone(), Point::new(0.2, 0.2), 0.45), amplitude: 1.0 }
}

/// `f_s = Xv + s·h₀` for `s = 2^{−k}`, labelled by `k`.
pub fn mixed_family(v: &BumpOneForm, h0: &ConformalBump, ks: &[u32]) -> Vec<(String, SphereFunction)> {
    let xv: Arc<dyn TensorField> = Arc::new(SymDerivative(v.clone()));
    let h0: Arc<dyn TensorField> = Arc::new(h0.clone());
    ks.iter()
        .map(|&k| {
            let s = 0.5f64.powi(k as i32);
            let comb = Combination { terms: vec![(1.0, xv.clone()), (s, h0.clone())] };
            (format!("s=2^-{k}"), SphereFunction::new(Arc::new(comb)))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct InterpolationRow {
    pub label: String,
    pub xray_sup: f64,
    pub c1_norm: f64,
    pub h_weighted: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InterpolationReport {
    pub rows: Vec<InterpolationRow>,
    pub slope: f64,
    pub intercept: f64,
    pub spearman: f64,
    pub degenerate: Option<String>,
}

/// Below this the weighted norm or the X-ray sup counts as zero.
pub const NORM_FLOOR: f64 = 1e-12;

/// Slope of log‖y^{d/2−δ}h‖ against log ‖I f‖∞ over a family.
pub fn interpolation_report(decs: &[(String, CoboundaryDecomposition)]) -> Result<InterpolationReport> {
    if decs.len() < 5 {
        return Err(LabError::input(format!(
            "interpolation report needs at least 5 family members, got {}",
            decs.len()
        )));
    }
    let rows: Vec<InterpolationRow> = decs
        .iter()
        .map(|(l, d)| InterpolationRow {
            label: l.clone(),
            xray_sup: d.xray_sup,
            c1_norm: d.c1_norm,
            h_weighted: d.h_weighted_l2,
        })
        .collect();
    if rows.iter().all(|r| r.xray_sup < NORM_FLOOR) || rows.iter().all(|r| r.h_weighted < NORM_FLOOR) {
        return Ok(InterpolationReport {
            rows,
            slope: f64::NAN,
            intercept: f64::NAN,
            spearman: f64::NAN,
            degenerate: Some("family degenerate, all h below floor".into()),
        });
    }
    let mut xs: Vec<f64> = rows.iter().map(|r| r.xray_sup).collect();
    xs.sort_by(f64::total_cmp);
    if xs.windows(2).any(|w| (w[1] - w[0]).abs() <= 1e-12 * w[1].abs()) {
        return Err(LabError::input("family members must have distinct ‖I f‖∞"));
    }
    let x: Vec<f64> = rows.iter().map(|r| r.xray_sup.max(NORM_FLOOR).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.h_weighted.max(NORM_FLOOR).ln()).collect();
    let (slope, intercept) = ols(&x, &y)?;
    let rho = spearman(&x, &y)?;
    Ok(InterpolationReport { rows, slope, intercept, spearman: rho, degenerate: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::MetricPower;

    fn surface() -> Surface {
        Surface::preset("one-cusp-genus-1", None).unwrap()
    }

    #[test]
    fn smooth_profiles() {
        assert_eq!(smooth_step(-1.0).0, 0.0);
        assert_eq!(smooth_step(2.0).0, 1.0);
        let h = 1e-6;
        for x in [0.2, 0.5, 0.8] {
            let fd = (smooth_step(x + h).0 - smooth_step(x - h).0) / (2.0 * h);
            assert!((fd - smooth_step(x).1).abs() < 1e-8);
            let fb = (bump(x + h).0 - bump(x - h).0) / (2.0 * h);
            assert!((fb - bump(x).1).abs() < 1e-8);
        }
    }

    #[test]
    fn box_coordinates_follow_the_flow() {
        let s = surface();
        let c = Phase::new(-0.2, 0.2, 0.7);
        let b = InteriorBox::new(c, 0.5, 1.0, 0.5);
        let bc = b.coords(&s, c, 0.1).unwrap();
        assert!(bc.t.abs() < 1e-12 && bc.s.abs() < 1e-12 && bc.alpha.abs() < 1e-12);
        let z = Phase::new(-0.2, 0.21, 0.8);
        let b0 = b.coords(&s, z, 0.5).unwrap();
        let b1 = b.coords(&s, flow_h2(z, 0.03), 0.5).unwrap();
        assert!((b1.t - b0.t - 0.03).abs() < 1e-12);
        assert!((b1.s - b0.s).abs() < 1e-12 && (b1.alpha - b0.alpha).abs() < 1e-12);
    }

    #[test]
    fn cusp_profile_derivative_matches_flow() {
        let a = 0.25;
        let z = Phase::new(0.1, 0.27, 1.45);
        let h = 1e-5;
        for side in [CuspSide::Out, CuspSide::In] {
            let b = CuspBox { side, ext: None, hits: vec![] };
            let val = |w: Phase| {
                let cc = cusp_coords(a, 1.0, w, side).unwrap();
                b.profile(a, 0.1, w.p.y, &cc)
            };
            let fd = (val(flow_h2(z, h)).0 - val(flow_h2(z, -h)).0) / (2.0 * h);
            assert!((fd - val(z).1).abs() < 1e-6, "{fd} {}", val(z).1);
        }
    }

    #[test]
    fn holder_extension_examples() {
        let m = SectionMetric::Flat;
        let e = holder_extend(vec![([0.0, 0.0], 2.0)], m, 0.3, 1.0).unwrap();
        assert_eq!(e.eval([0.0, 0.0]), 2.0);
        assert!((e.eval([0.5, 0.0]) - (2.0 - 0.5f64.powf(0.3))).abs() < 1e-15);
        let hits = vec![([0.0, 0.0], 0.0), ([1.0, 0.0], 0.5)];
        let k = holder_seminorm(&hits, m, 0.3);
        assert!((k - 0.5).abs() < 1e-15);
        let e = holder_extend(hits, m, 0.3, k).unwrap();
        assert_eq!(e.eval([0.0, 0.0]), 0.0);
        assert_eq!(e.eval([1.0, 0.0]), 0.5);
        assert!(holder_extend(vec![], m, 0.3, 1.0).is_err());
        assert!(holder_extend(vec![([0.0, 0.0], 1.0)], m, 0.6, 1.0).is_err());
        assert!(holder_extend(vec![([0.0, 0.0], 1.0)], m, 0.3, 0.0).is_err());
    }

    #[test]
    fn extension_reproduces_holder_function() {
        let beta = 0.3;
        let g = |p: [f64; 2]| (p[0].abs() + p[1].abs()).powf(beta) * 0.7 + 0.2 * p[1];
        let n = 21;
        let h = 1.0 / (n - 1) as f64;
        let mut hits = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let p = [i as f64 * h - 0.5, j as f64 * h - 0.5];
                hits.push((p, g(p)));
            }
        }
        let k = holder_seminorm(&hits, SectionMetric::Flat, beta);
        let e = holder_extend(hits, SectionMetric::Flat, beta, k).unwrap();
        let mut worst: f64 = 0.0;
        let mut test_pts = Vec::new();
        for i in 0..37 {
            for j in 0..37 {
                let p = [i as f64 / 36.0 - 0.5, j as f64 / 36.0 - 0.5];
                worst = worst.max((e.eval(p) - g(p)).abs());
                test_pts.push((p, e.eval(p)));
            }
        }
        let scale = k * (2.0 * h).powf(beta);
        assert!(worst <= 2.0 * scale, "{worst} {scale}");
        // the extension keeps the seminorm bound on a test grid
        assert!(holder_seminorm(&test_pts, SectionMetric::Flat, beta) <= k * (1.0 + 1e-12));
    }

    #[test]
    fn primitive_examples() {
        let s = surface();
        let opts = LivsicOptions::default();
        let c = s.group.parse_word("ab").unwrap();
        let orbit = orbit_of_class(&s, &c, &opts).unwrap();
        assert!(orbit.closure_error < 1e-8);
        let zero = SphereFunction::new(Arc::new(MetricPower(1))).scaled(0.0);
        assert!(primitive_along_orbit(&zero, &orbit).iter().all(|v| *v == 0.0));
        let one = SphereFunction::new(Arc::new(MetricPower(1)));
        let p = primitive_along_orbit(&one, &orbit);
        for (k, v) in p.iter().enumerate() {
            assert!((v - orbit.time(k)).abs() < 1e-12);
        }
        let sr = Arc::new(s.clone());
        let form = BumpOneForm { bump: SurfaceBump::new(sr, Point::new(-0.25, 0.26), 0.4), alpha: 0.6, beta: -0.9 };
        let v = SphereFunction::new(Arc::new(form.clone()));
        let xv = SphereFunction::new(Arc::new(SymDerivative(form)));
        let p = primitive_along_orbit(&xv, &orbit);
        let v0 = v.eval(orbit.samples[0]);
        let worst = p.iter().enumerate().map(|(k, u)| (u - (v.eval(orbit.samples[k]) - v0)).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-6, "{worst:e}");
    }

    #[test]
    fn rotation_gives_same_orbit() {
        let s = surface();
        let opts = LivsicOptions::default();
        let a = orbit_of_class(&s, &s.group.parse_word("abAAB").unwrap(), &opts).unwrap();
        let b = orbit_of_class(&s, &s.group.parse_word("AABab").unwrap(), &opts).unwrap();
        assert_eq!(a.word, b.word);
        assert_eq!(a.period, b.period);
        assert_eq!(a.density_radius, b.density_radius);
        assert_eq!(a.separation, b.separation);
    }

    fn fake(xray_sup: f64, h: f64) -> CoboundaryDecomposition {
        CoboundaryDecomposition {
            word: "ab".into(),
            period: 1.0,
            c1_norm: 1.0,
            xray_sup,
            trivial_branch: false,
            flags: vec![],
            cover: None,
            coverage: 1.0,
            h_c0: h,
            h_weighted_l2: h,
            part_one: h * h,
            part_two: 0.0,
            orbit_h_max: 0.0,
            orbit_points_checked: 0,
            partition_residual: 0.0,
            xtheta_residual: 0.0,
            consistency_residual: 0.0,
            cusp_average_h: 0.0,
            cusp_h: 0.0,
            rows: vec![],
        }
    }

    #[test]
    fn report_needs_five_members() {
        assert!(interpolation_report(&[]).is_err());
        let four: Vec<_> = (0..4).map(|k| (k.to_string(), fake(0.1 * (k + 1) as f64, 0.1))).collect();
        assert!(interpolation_report(&four).is_err());
    }

    #[test]
    fn pure_coboundary_family_is_degenerate() {
        let fam: Vec<_> = (0..5).map(|k| (k.to_string(), fake(1e-15 * k as f64, 1e-14))).collect();
        let r = interpolation_report(&fam).unwrap();
        assert_eq!(r.degenerate.as_deref(), Some("family degenerate, all h below floor"));
    }

    #[test]
    fn report_slope_is_shift_invariant() {
        let fam = |c: f64| -> Vec<(String, CoboundaryDecomposition)> {
            (0..6)
                .map(|k| {
                    let x = 0.5f64.powi(k);
                    (k.to_string(), fake(x, c * 0.03 * x.powf(0.4) * (1.0 + 0.01 * k as f64)))
                })
                .collect()
        };
        let a = interpolation_report(&fam(1.0)).unwrap();
        let b = interpolation_report(&fam(7.5)).unwrap();
        assert!(a.slope > 0.0 && a.spearman > 0.99);
        assert!((a.slope - b.slope).abs() < 1e-12);
        assert_eq!(a.spearman, b.spearman);
    }

    #[test]
    fn constant_function_takes_trivial_branch() {
        let s = surface();
        let opts = LivsicOptions { grid: [4, 4, 6], ..Default::default() };
        let orbit = orbit_of_class(&s, &s.group.parse_word("ab").unwrap(), &opts).unwrap();
        let one = SphereFunction::new(Arc::new(MetricPower(1)));
        let d = decompose(&s, &one, &orbit, &opts).unwrap();
        assert!(d.trivial_branch);
        assert!((d.xray_sup - 1.0).abs() < 1e-10);
        assert!(d.rows.iter().all(|r| r.u == 0.0 && r.h == r.f));
    }

    #[test]
    fn coboundary_decomposition_invariants() {
        let s = Arc::new(surface());
        let opts = LivsicOptions { grid: [6, 6, 8], ..Default::default() };
        let orbit = orbit_of_class(&s, &s.group.parse_word("BBBAAAbaba").unwrap(), &opts).unwrap();
        assert!(orbit.closure_error <= 1e-8);
        let f = coboundary(&coboundary_potential(&s));
        let d = decompose(&s, &f, &orbit, &opts).unwrap();
        assert!(!d.trivial_branch);
        assert!(d.xray_sup < 1e-10, "{}", d.xray_sup);
        assert!(d.partition_residual <= 1e-12, "{:e}", d.partition_residual);
        assert!(d.xtheta_residual <= 1e-10, "{:e}", d.xtheta_residual);
        assert!(d.orbit_points_checked > 50);
        assert!(d.orbit_h_max <= 1e-8, "{:e}", d.orbit_h_max);
        assert!(d.consistency_residual <= 1e-6, "{:e}", d.consistency_residual);
        assert!(d.coverage > 0.95);
    }
}
