//! Constant-curvature backend on the upper half-plane: Möbius maps,
//! group presentations, cyclically reduced words, translation lengths and axes.
//!
//! Tangent directions use the cusp convention throughout the crate: a unit
//! vector at `z = x + iy` is `cos ψ · y∂_y + sin ψ · y∂_x`, so `ψ = 0` points
//! straight up and the cusp angle is `φ = |ψ|` with side `u = sign ψ`.

use crate::error::{LabError, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

/// Traces within this distance of ±2 are treated as parabolic.
pub const PARABOLIC_TOL: f64 = 1e-9;

/// A point of the upper half-plane. `x` doubles as the cusp coordinate θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.x, self.y)
    }

    pub fn from_complex(z: Complex64) -> Self {
        Point { x: z.re, y: z.im }
    }
}

/// Hyperbolic distance on the upper half-plane.
pub fn distance(p: Point, q: Point) -> f64 {
    let dx = p.x - q.x;
    let dy = p.y - q.y;
    let r = (dx * dx + dy * dy).sqrt() / (2.0 * (p.y * q.y).sqrt());
    2.0 * r.asinh()
}

/// Unit tangent vector of the upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub p: Point,
    pub psi: f64,
}

impl Phase {
    pub const fn new(x: f64, y: f64, psi: f64) -> Self {
        Phase { p: Point { x, y }, psi }
    }

    /// Frame components (v_y, v_x) of the unit vector.
    pub fn direction(&self) -> [f64; 2] {
        [self.psi.cos(), self.psi.sin()]
    }
}

/// Wrap an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Point of the ideal boundary ℝ ∪ {∞}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Ideal {
    Finite(f64),
    Infinity,
}

impl Ideal {
    pub fn finite(self) -> Option<f64> {
        match self {
            Ideal::Finite(x) => Some(x),
            Ideal::Infinity => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Elliptic,
    Parabolic,
    Hyperbolic,
}

/// Element of PSL(2, ℝ), stored with unit determinant and the sign fixed by
/// `a + d ≥ 0` (then `a ≥ 0`, then `b ≥ 0` on ties).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mobius {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mobius {
    pub const IDENTITY: Mobius = Mobius { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    /// Normalizes the determinant to one; rejects non-positive determinants.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let det = a * d - b * c;
        if !(det > 0.0) || !det.is_finite() {
            return Err(LabError::input(format!("matrix (({a}, {b}), ({c}, {d})) has non-positive determinant {det}")));
        }
        let s = det.sqrt();
        Ok(Mobius { a: a / s, b: b / s, c: c / s, d: d / s }.sign_normalized())
    }

    fn from_raw(a: f64, b: f64, c: f64, d: f64) -> Self {
        let det = a * d - b * c;
        let s = det.sqrt();
        Mobius { a: a / s, b: b / s, c: c / s, d: d / s }.sign_normalized()
    }

    fn sign_normalized(self) -> Self {
        let tr = self.a + self.d;
        let flip = if tr != 0.0 {
            tr < 0.0
        } else if self.a != 0.0 {
            self.a < 0.0
        } else {
            self.b < 0.0
        };
        if flip {
            Mobius { a: -self.a, b: -self.b, c: -self.c, d: -self.d }
        } else {
            self
        }
    }

    pub fn translation(w: f64) -> Self {
        Mobius { a: 1.0, b: w, c: 0.0, d: 1.0 }
    }

    pub fn diagonal(lambda: f64) -> Self {
        Mobius { a: lambda, b: 0.0, c: 0.0, d: 1.0 / lambda }
    }

    /// Elliptic rotation about `i` turning tangent vectors counterclockwise by `alpha`.
    pub fn rotation_about_i(alpha: f64) -> Self {
        let (s, c) = (0.5 * alpha).sin_cos();
        Mobius::from_raw(c, s, -s, c)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn inverse(&self) -> Self {
        Mobius { a: self.d, b: -self.b, c: -self.c, d: self.a }.sign_normalized()
    }

    pub fn negated(&self) -> Self {
        Mobius { a: -self.a, b: -self.b, c: -self.c, d: -self.d }
    }

    pub fn apply(&self, z: Complex64) -> Complex64 {
        (z * self.a + self.b) / (z * self.c + self.d)
    }

    pub fn apply_point(&self, p: Point) -> Point {
        Point::from_complex(self.apply(p.to_complex()))
    }

    pub fn apply_ideal(&self, x: Ideal) -> Ideal {
        match x {
            Ideal::Infinity => {
                if self.c == 0.0 {
                    Ideal::Infinity
                } else {
                    Ideal::Finite(self.a / self.c)
                }
            }
            Ideal::Finite(x) => {
                let den = self.c * x + self.d;
                if den == 0.0 {
                    Ideal::Infinity
                } else {
                    Ideal::Finite((self.a * x + self.b) / den)
                }
            }
        }
    }

    /// Complex derivative at z: 1 / (cz + d)².
    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let w = z * self.c + self.d;
        1.0 / (w * w)
    }

    /// Rotation angle that the map applies to tangent vectors at `p`.
    pub fn rotation_at(&self, p: Point) -> f64 {
        self.derivative(p.to_complex()).arg()
    }

    /// Push a unit tangent vector forward.
    pub fn apply_phase(&self, ph: Phase) -> Phase {
        let alpha = self.rotation_at(ph.p);
        Phase { p: self.apply_point(ph.p), psi: wrap_angle(ph.psi - alpha) }
    }

    pub fn classify(&self) -> MapKind {
        let t = self.trace().abs();
        if (t - 2.0).abs() < PARABOLIC_TOL {
            MapKind::Parabolic
        } else if t < 2.0 {
            MapKind::Elliptic
        } else {
            MapKind::Hyperbolic
        }
    }

    /// Translation length 2·arccosh(|tr|/2) of a hyperbolic map.
    pub fn trace_length(&self) -> Result<f64> {
        if self.classify() != MapKind::Hyperbolic {
            return Err(LabError::NotHyperbolic { trace: self.trace() });
        }
        Ok(2.0 * (0.5 * self.trace().abs()).acosh())
    }

    /// Fixed points `(repelling, attracting)` of a hyperbolic map.
    pub fn fixed_points(&self) -> Result<(Ideal, Ideal)> {
        if self.classify() != MapKind::Hyperbolic {
            return Err(LabError::NotHyperbolic { trace: self.trace() });
        }
        let Mobius { a, b, c, d } = *self;
        if c == 0.0 {
            let finite = Ideal::Finite(b / (d - a));
            return Ok(if a.abs() > d.abs() { (finite, Ideal::Infinity) } else { (Ideal::Infinity, finite) });
        }
        let disc = ((a + d) * (a + d) - 4.0).sqrt();
        // roots of c x² + (d − a) x − b, computed without cancellation
        let s = if a - d >= 0.0 { 1.0 } else { -1.0 };
        let q = 0.5 * ((a - d) + s * disc);
        let x1 = q / c;
        let x2 = -b / q;
        let mult = |x: f64| 1.0 / (c * x + d).powi(2);
        Ok(if mult(x1) < 1.0 { (Ideal::Finite(x2), Ideal::Finite(x1)) } else { (Ideal::Finite(x1), Ideal::Finite(x2)) })
    }

    /// Invariant geodesic of a hyperbolic map, oriented from the repelling to
    /// the attracting fixed point.
    pub fn axis(&self) -> Result<Axis> {
        let (rep, att) = self.fixed_points()?;
        let length = self.trace_length()?;
        let conj = match (rep, att) {
            (Ideal::Finite(r), Ideal::Finite(t)) => {
                if t > r {
                    Mobius::from_raw(t, r, 1.0, 1.0)
                } else {
                    Mobius::from_raw(t, -r, 1.0, -1.0)
                }
            }
            (Ideal::Finite(r), Ideal::Infinity) => Mobius::from_raw(1.0, r, 0.0, 1.0),
            (Ideal::Infinity, Ideal::Finite(t)) => Mobius::from_raw(t, -1.0, 1.0, 0.0),
            _ => unreachable!("hyperbolic maps have two distinct fixed points"),
        };
        Ok(Axis { repelling: rep, attracting: att, conj, length })
    }

    /// Frame of PSL(2,ℝ) whose action sends (i, up) to the given unit vector.
    pub fn frame_of(ph: Phase) -> Self {
        let s = ph.p.y.sqrt();
        let na = Mobius { a: s, b: ph.p.x / s, c: 0.0, d: 1.0 / s };
        na * Mobius::rotation_about_i(-ph.psi)
    }

    /// Unit vector represented by this frame (image of (i, up)).
    pub fn phase_of_frame(&self) -> Phase {
        let i = Complex64::new(0.0, 1.0);
        let z = self.apply(i);
        let v = self.derivative(i) * i;
        Phase { p: Point::from_complex(z), psi: v.re.atan2(v.im) }
    }
}

impl Mul for Mobius {
    type Output = Mobius;
    fn mul(self, o: Mobius) -> Mobius {
        Mobius::from_raw(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

impl fmt::Display for Mobius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(({}, {}), ({}, {}))", self.a, self.b, self.c, self.d)
    }
}

/// Exact geodesic flow of the hyperbolic plane.
pub fn flow_h2(ph: Phase, t: f64) -> Phase {
    let g = Mobius::frame_of(ph) * Mobius::diagonal((0.5 * t).exp());
    g.phase_of_frame()
}

/// The invariant geodesic of a hyperbolic map with its unit-speed
/// parameterization `t ↦ C(i·eᵗ)`.
#[derive(Debug, Clone, Copy)]
pub struct Axis {
    pub repelling: Ideal,
    pub attracting: Ideal,
    /// Maps the imaginary axis (0 → ∞) onto the axis (repelling → attracting).
    pub conj: Mobius,
    pub length: f64,
}

impl Axis {
    pub fn point(&self, t: f64) -> Point {
        self.conj.apply_point(Point::new(0.0, t.exp()))
    }

    pub fn phase(&self, t: f64) -> Phase {
        self.conj.apply_phase(Phase::new(0.0, t.exp(), 0.0))
    }

    /// Parameter of the point of the axis closest to `p`.
    pub fn foot_parameter(&self, p: Point) -> f64 {
        let w = self.conj.inverse().apply(p.to_complex());
        w.norm().ln()
    }

    /// Parameter of the highest point of the axis (the natural, well-scaled base point).
    pub fn top_parameter(&self) -> f64 {
        match (self.repelling, self.attracting) {
            (Ideal::Finite(r), Ideal::Finite(t)) => {
                let c = 0.5 * (r + t);
                let rad = 0.5 * (t - r).abs();
                self.foot_parameter(Point::new(c, rad))
            }
            _ => self
                .foot_parameter(Point::new(self.repelling.finite().or(self.attracting.finite()).unwrap_or(0.0), 1.0)),
        }
    }
}

/// Generators of a Fuchsian group together with their names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupPresentation {
    pub generators: Vec<Mobius>,
    pub names: Vec<String>,
    /// Relators as signed 1-based words; empty for free groups.
    #[serde(default)]
    pub relations: Vec<Vec<i32>>,
}

impl GroupPresentation {
    pub fn new(generators: Vec<Mobius>, names: Vec<String>) -> Result<Self> {
        if generators.is_empty() || generators.len() != names.len() {
            return Err(LabError::input("need one name per generator and at least one generator"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for n in &names {
            if n.is_empty() || !seen.insert(n.clone()) {
                return Err(LabError::input(format!("invalid or duplicate generator name '{n}'")));
            }
        }
        for (g, n) in generators.iter().zip(&names) {
            if (g.det() - 1.0).abs() > 1e-12 {
                return Err(LabError::input(format!("generator {n} is degenerate")));
            }
        }
        Ok(GroupPresentation { generators, names, relations: Vec::new() })
    }

    /// Generators ((1,2),(0,1)) and ((1,0),(2,1)): the level-two congruence
    /// subgroup, a free group uniformizing the thrice-punctured sphere.
    pub fn thrice_punctured() -> Self {
        GroupPresentation::new(
            vec![Mobius::new(1.0, 2.0, 0.0, 1.0).unwrap(), Mobius::new(1.0, 0.0, 2.0, 1.0).unwrap()],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    /// Once-punctured torus: the commutator subgroup of SL(2,ℤ), conjugated
    /// so that the cusp sits at ∞ with width one. Both generators and their
    /// product have trace 3.
    pub fn one_cusp_genus_one() -> Self {
        GroupPresentation::new(
            vec![Mobius::new(2.0, -1.0 / 6.0, -6.0, 1.0).unwrap(), Mobius::new(2.0, 1.0 / 6.0, 6.0, 1.0).unwrap()],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    /// Parabolic pair ((1,1),(0,1)), ((1,0),(1,1)) generating SL(2,ℤ); used
    /// for word algebra only (the group has relations).
    pub fn modular_pair() -> Self {
        let mut g = GroupPresentation::new(
            vec![Mobius::new(1.0, 1.0, 0.0, 1.0).unwrap(), Mobius::new(1.0, 0.0, 1.0, 1.0).unwrap()],
            vec!["g".into(), "h".into()],
        )
        .unwrap();
        // (g h⁻¹ g)⁴ = 1 and (g h⁻¹ g)² = (g h⁻¹)³ in PSL(2,ℤ)
        g.relations = vec![vec![1, -2, 1, 1, -2, 1, 1, -2, 1, 1, -2, 1]];
        g
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "thrice-punctured" => Ok(Self::thrice_punctured()),
            "one-cusp-genus-1" => Ok(Self::one_cusp_genus_one()),
            "modular-pair" => Ok(Self::modular_pair()),
            other => Err(LabError::input(format!(
                "unknown preset '{other}' (expected thrice-punctured, one-cusp-genus-1 or modular-pair)"
            ))),
        }
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn is_free(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn letter(&self, idx: i32) -> Result<Mobius> {
        let k = idx.unsigned_abs() as usize;
        if idx == 0 || k > self.generators.len() {
            return Err(LabError::input(format!("generator index {idx} out of range 1..={}", self.generators.len())));
        }
        let g = self.generators[k - 1];
        Ok(if idx > 0 { g } else { g.inverse() })
    }

    /// Product of the word's letters in order.
    pub fn evaluate_word(&self, class: &HomotopyClass) -> Result<Mobius> {
        self.evaluate_letters(class.word())
    }

    pub fn evaluate_letters(&self, letters: &[i32]) -> Result<Mobius> {
        let mut m = Mobius::IDENTITY;
        for &l in letters {
            m = m * self.letter(l)?;
        }
        Ok(m)
    }

    /// Parse a word. Tokens are generator names, optionally followed by `^-1`;
    /// an upper-case single-letter name denotes the inverse. Without separators
    /// (spaces or `*`) each character is a token.
    pub fn parse_word(&self, s: &str) -> Result<HomotopyClass> {
        let s = s.trim();
        let tokens: Vec<String> = if s.contains(|c: char| c.is_whitespace() || c == '*') {
            s.split(|c: char| c.is_whitespace() || c == '*').filter(|t| !t.is_empty()).map(String::from).collect()
        } else {
            let mut out: Vec<String> = Vec::new();
            for ch in s.chars() {
                if ch == '^' || ch == '-' || ch == '1' {
                    match out.last_mut() {
                        Some(last) => last.push(ch),
                        None => return Err(LabError::input(format!("malformed word '{s}'"))),
                    }
                } else {
                    out.push(ch.to_string());
                }
            }
            out
        };
        let mut letters = Vec::with_capacity(tokens.len());
        for t in tokens {
            let (base, inv) = match t.strip_suffix("^-1") {
                Some(b) => (b.to_string(), true),
                None => (t.clone(), false),
            };
            let idx = if let Some(k) = self.names.iter().position(|n| *n == base) {
                k as i32 + 1
            } else if let Some(k) = self.names.iter().position(|n| n.to_uppercase() == base && n.to_lowercase() == *n) {
                if inv {
                    return Err(LabError::input(format!("ambiguous inverse token '{t}'")));
                }
                -(k as i32 + 1)
            } else {
                return Err(LabError::input(format!("unknown generator '{base}' in word '{s}'")));
            };
            letters.push(if inv { -idx } else { idx });
        }
        HomotopyClass::new(letters)
    }

    pub fn format_word(&self, class: &HomotopyClass) -> String {
        if class.is_empty() {
            return "1".into();
        }
        let single = self.names.iter().all(|n| n.chars().count() == 1 && n.to_lowercase() == *n);
        let mut parts = Vec::new();
        for &l in class.word() {
            let name = &self.names[l.unsigned_abs() as usize - 1];
            parts.push(match (l > 0, single) {
                (true, _) => name.clone(),
                (false, true) => name.to_uppercase(),
                (false, false) => format!("{name}^-1"),
            });
        }
        if single {
            parts.concat()
        } else {
            parts.join(" ")
        }
    }

    /// All hyperbolic classes represented by cyclically reduced words of
    /// length ≤ `max_len`, sorted by translation length then canonical word.
    pub fn hyperbolic_classes(&self, max_len: usize) -> Vec<(HomotopyClass, f64)> {
        let r = self.rank() as i32;
        let letters: Vec<i32> = (1..=r).flat_map(|k| [k, -k]).collect();
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        let mut stack: Vec<Vec<i32>> = letters.iter().map(|&l| vec![l]).collect();
        while let Some(w) = stack.pop() {
            if let Ok(c) = HomotopyClass::new(w.clone()) {
                if c.len() == w.len() && seen.insert(c.word().to_vec()) {
                    if let Ok(m) = self.evaluate_word(&c) {
                        if let Ok(l) = m.trace_length() {
                            out.push((c, l));
                        }
                    }
                }
            }
            if w.len() < max_len {
                let last = *w.last().unwrap();
                for &l in &letters {
                    if l != -last {
                        let mut n = w.clone();
                        n.push(l);
                        stack.push(n);
                    }
                }
            }
        }
        out.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        out
    }
}

/// A free homotopy class, named by a cyclically reduced word in canonical
/// (lexicographically minimal) rotation. Letters are signed 1-based indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HomotopyClass {
    word: Vec<i32>,
}

impl HomotopyClass {
    pub fn new(letters: Vec<i32>) -> Result<Self> {
        if letters.contains(&0) {
            return Err(LabError::input("generator index 0 is not allowed (indices are signed and 1-based)"));
        }
        // free reduction
        let mut w: Vec<i32> = Vec::with_capacity(letters.len());
        for l in letters {
            if w.last() == Some(&-l) {
                w.pop();
            } else {
                w.push(l);
            }
        }
        // cyclic reduction
        let mut lo = 0;
        let mut hi = w.len();
        while hi - lo >= 2 && w[lo] == -w[hi - 1] {
            lo += 1;
            hi -= 1;
        }
        let w = w[lo..hi].to_vec();
        Ok(HomotopyClass { word: canonical_rotation(&w) })
    }

    pub fn identity() -> Self {
        HomotopyClass { word: Vec::new() }
    }

    pub fn word(&self) -> &[i32] {
        &self.word
    }

    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    pub fn inverse(&self) -> Self {
        HomotopyClass::new(self.word.iter().rev().map(|l| -l).collect()).unwrap()
    }

    /// The class of the n-th power.
    pub fn power(&self, n: usize) -> Self {
        HomotopyClass::new(self.word.repeat(n)).unwrap()
    }

    /// Check letters against a presentation's rank.
    pub fn validate(&self, group: &GroupPresentation) -> Result<()> {
        for &l in &self.word {
            group.letter(l)?;
        }
        Ok(())
    }
}

fn canonical_rotation(w: &[i32]) -> Vec<i32> {
    if w.is_empty() {
        return Vec::new();
    }
    (0..w.len()).map(|k| w[k..].iter().chain(&w[..k]).copied().collect::<Vec<_>>()).min().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(a: f64, b: f64, c: f64, d: f64) -> Mobius {
        Mobius::new(a, b, c, d).unwrap()
    }

    #[test]
    fn evaluate_word_examples() {
        let g = GroupPresentation::modular_pair();
        let id = g.evaluate_word(&HomotopyClass::identity()).unwrap();
        assert_eq!(id, Mobius::IDENTITY);
        assert_eq!(id.trace(), 2.0);
        let single = g.evaluate_letters(&[1]).unwrap();
        assert_eq!(single, m(1.0, 1.0, 0.0, 1.0));
        let gh = g.evaluate_letters(&[1, 2]).unwrap();
        assert_eq!(gh, m(2.0, 1.0, 1.0, 1.0));
        assert_eq!(gh.trace(), 3.0);
        assert!(g.evaluate_letters(&[3]).is_err());
    }

    #[test]
    fn classify_examples() {
        assert_eq!(m(1.0, 1.0, 0.0, 1.0).classify(), MapKind::Parabolic);
        assert_eq!(m(2.0, 1.0, 1.0, 1.0).classify(), MapKind::Hyperbolic);
        let t: f64 = 0.3;
        assert_eq!(m(t.cos(), -t.sin(), t.sin(), t.cos()).classify(), MapKind::Elliptic);
    }

    #[test]
    fn trace_length_examples() {
        let l = m(2.0, 1.0, 1.0, 1.0).trace_length().unwrap();
        assert!((l - 1.924_847_300_238_487).abs() < 1e-12);
        let e = std::f64::consts::E;
        assert!((Mobius::diagonal(e).trace_length().unwrap() - 2.0).abs() < 1e-14);
        assert!(matches!(m(1.0, 1.0, 0.0, 1.0).trace_length(), Err(LabError::NotHyperbolic { .. })));
    }

    #[test]
    fn trace_length_matches_minimal_displacement() {
        // Oracle: minimize d(z, Mz) over a grid refined around the minimum.
        let g = m(2.0, 1.0, 1.0, 1.0);
        let disp = |x: f64, y: f64| distance(Point::new(x, y), g.apply_point(Point::new(x, y)));
        let (mut bx, mut by, mut best): (f64, f64, f64) = (0.0, 1.0, f64::INFINITY);
        let mut span = 2.0;
        for _ in 0..40 {
            let (cx, cy) = (bx, by);
            for i in -10..=10 {
                for j in -10..=10 {
                    let x = cx + span * i as f64 / 10.0;
                    let y = (cy.ln() + span * j as f64 / 10.0).exp();
                    let v = disp(x, y);
                    if v < best {
                        best = v;
                        bx = x;
                        by = y;
                    }
                }
            }
            span *= 0.5;
        }
        assert!((best - g.trace_length().unwrap()).abs() < 1e-9, "{best}");
    }

    #[test]
    fn axis_examples() {
        let g = m(2.0, 1.0, 1.0, 1.0);
        let ax = g.axis().unwrap();
        let s5 = 5f64.sqrt();
        let (r, t) = (ax.repelling.finite().unwrap(), ax.attracting.finite().unwrap());
        let mut fps = [r, t];
        fps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((fps[0] - (1.0 - s5) / 2.0).abs() < 1e-12);
        assert!((fps[1] - (1.0 + s5) / 2.0).abs() < 1e-12);
        for x in fps {
            assert!(((2.0 * x + 1.0) / (x + 1.0) - x).abs() < 1e-10);
        }
        // the axis is translated by the map by its length
        for t in [-1.0, 0.0, 0.7, 3.0] {
            let p = g.apply_point(ax.point(t));
            let q = ax.point(t + ax.length);
            assert!(distance(p, q) < 1e-9);
        }
        let lam = 2.0;
        let ax = Mobius::diagonal(lam).axis().unwrap();
        assert_eq!(ax.attracting, Ideal::Infinity);
        assert_eq!(ax.repelling, Ideal::Finite(0.0));
        assert!(ax.point(0.3).x.abs() < 1e-15);
    }

    #[test]
    fn conjugate_axis_is_image_of_axis() {
        let mm = m(2.0, 1.0, 1.0, 1.0);
        let c = m(1.3, 0.4, -0.7, 0.55);
        let conj = c * mm * c.inverse();
        let a0 = mm.axis().unwrap();
        let a1 = conj.axis().unwrap();
        for t in [-2.0, 0.0, 1.5] {
            let p = c.apply_point(a0.point(t));
            // the image lies on the conjugate's axis
            let s = a1.foot_parameter(p);
            assert!(distance(a1.point(s), p) < 1e-9);
        }
    }

    #[test]
    fn axis_has_unit_speed() {
        let ax = m(5.0, 2.0, 2.0, 1.0).axis().unwrap();
        let h = 1e-5;
        for t in [-1.0, 0.0, 2.0] {
            let v = distance(ax.point(t - h), ax.point(t + h)) / (2.0 * h);
            assert!((v - 1.0).abs() < 1e-6);
        }
        // and its tangent agrees with the flow
        let ph = ax.phase(0.4);
        let moved = flow_h2(ph, 0.9);
        assert!(distance(moved.p, ax.point(1.3)) < 1e-10);
    }

    #[test]
    fn frames_round_trip() {
        for &(x, y, psi) in &[(0.3, 1.7, 0.2), (-2.0, 0.1, -2.9), (0.0, 1.0, PI)] {
            let ph = Phase::new(x, y, psi);
            let back = Mobius::frame_of(ph).phase_of_frame();
            assert!((back.p.x - x).abs() < 1e-12 && (back.p.y - y).abs() < 1e-12);
            assert!(wrap_angle(back.psi - psi).abs() < 1e-12);
        }
        // flowing straight up multiplies the height
        let up = flow_h2(Phase::new(0.5, 2.0, 0.0), 1.0);
        assert!((up.p.y - 2.0 * 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn words_are_cyclically_reduced_and_canonical() {
        let c = HomotopyClass::new(vec![2, 1, -1, 1, 2, -2]).unwrap();
        assert_eq!(c.word(), &[1, 2]);
        let c = HomotopyClass::new(vec![-1, 2, 1]).unwrap();
        assert_eq!(c.word(), &[2]);
        let r1 = HomotopyClass::new(vec![2, 1, 1]).unwrap();
        let r2 = HomotopyClass::new(vec![1, 2, 1]).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.word(), &[1, 1, 2]);
    }

    #[test]
    fn parse_and_format_words() {
        let g = GroupPresentation::one_cusp_genus_one();
        let c = g.parse_word("abAB").unwrap();
        // canonical rotation orders letters as B < A < a < b
        assert_eq!(g.format_word(&c), "BabA");
        let c2 = g.parse_word("a b^-1").unwrap();
        assert_eq!(c2.word(), &[-2, 1]);
        assert!(g.parse_word("ax").is_err());
    }

    #[test]
    fn presets_have_expected_traces() {
        let g = GroupPresentation::one_cusp_genus_one();
        let ab = g.parse_word("ab").unwrap();
        assert!((g.evaluate_word(&ab).unwrap().trace() - 3.0).abs() < 1e-12);
        let comm = g.evaluate_letters(&[1, 2, -1, -2]).unwrap();
        assert_eq!(comm.classify(), MapKind::Parabolic);
        assert!(comm.c.abs() < 1e-12);
        let t = GroupPresentation::thrice_punctured();
        assert_eq!(t.evaluate_letters(&[1, -2]).unwrap().classify(), MapKind::Parabolic);
    }

    #[test]
    fn shortest_classes_enumeration() {
        let g = GroupPresentation::one_cusp_genus_one();
        let cls = g.hyperbolic_classes(4);
        assert!(cls.len() > 10);
        assert!((cls[0].1 - 2.0 * 1.5f64.acosh()).abs() < 1e-12);
        for w in cls.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
    }

    fn arb_mobius() -> impl Strategy<Value = Mobius> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_filter_map("det", |(a, b, c)| {
            if a.abs() < 0.2 {
                return None;
            }
            let d = (1.0 + b * c) / a;
            Mobius::new(a, b, c, d).ok()
        })
    }

    proptest! {
        #[test]
        fn length_is_a_conjugacy_invariant(mm in arb_mobius(), c in arb_mobius()) {
            prop_assume!(mm.trace().abs() > 2.05 && mm.trace().abs() < 40.0);
            let l = mm.trace_length().unwrap();
            let lc = (c * mm * c.inverse()).trace_length().unwrap();
            let li = mm.inverse().trace_length().unwrap();
            prop_assert!((l - lc).abs() < 1e-10 * (1.0 + c.a.abs() + c.b.abs() + c.c.abs() + c.d.abs()).powi(2));
            prop_assert!((l - li).abs() < 1e-10);
            for n in 2..=3usize {
                let mut p = Mobius::IDENTITY;
                for _ in 0..n { p = p * mm; }
                let ln = p.trace_length().unwrap();
                prop_assert!((ln - n as f64 * l).abs() < 1e-9 * (1.0 + ln));
            }
        }

        #[test]
        fn classification_ignores_sign(mm in arb_mobius()) {
            prop_assert_eq!(mm.classify(), mm.negated().classify());
            prop_assert!((mm.det() - 1.0).abs() < 1e-12);
        }
    }
}
