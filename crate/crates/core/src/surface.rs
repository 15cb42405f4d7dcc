//! A cusped hyperbolic surface Γ\ℍ with one cusp at ∞: Ford-domain
//! reduction, the precisely invariant horoball y > a, and quotient distances.

use crate::error::{LabError, Result};
use crate::hyperbolic::{distance, GroupPresentation, MapKind, Mobius, Phase, Point};
use serde::Serialize;

/// Word length used to collect isometric circles.
const CANDIDATE_WORD_LEN: usize = 4;
/// Word length used for neighbouring translates of the fundamental domain.
const NEIGHBOR_WORD_LEN: usize = 3;

#[derive(Debug, Clone)]
pub struct Surface {
    pub group: GroupPresentation,
    /// Width of the cusp at ∞ (the parabolic stabilizer translates by this).
    pub width: f64,
    /// Height `a` of the cusp boundary; the region y > a embeds in the quotient.
    pub cusp_height: f64,
    /// Left edge of the reduction window [x0, x0 + width).
    pub x0: f64,
    /// Largest isometric-circle radius; horoballs above it are precisely invariant.
    pub max_radius: f64,
    candidates: Vec<Mobius>,
    neighbors: Vec<Mobius>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SurfaceSummary {
    pub width: f64,
    pub cusp_height: f64,
    pub max_radius: f64,
    pub area: f64,
}

/// All freely reduced words up to `max_len`, as letter sequences.
fn reduced_words(rank: usize, max_len: usize) -> Vec<Vec<i32>> {
    let letters: Vec<i32> = (1..=rank as i32).flat_map(|k| [k, -k]).collect();
    let mut out = Vec::new();
    let mut layer: Vec<Vec<i32>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &layer {
            for &l in &letters {
                if w.last() == Some(&-l) {
                    continue;
                }
                let mut n = w.clone();
                n.push(l);
                next.push(n);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

fn same_map(m: &Mobius, n: &Mobius) -> bool {
    let close =
        |p: &Mobius, q: &Mobius| (p.a - q.a).abs() + (p.b - q.b).abs() + (p.c - q.c).abs() + (p.d - q.d).abs() < 1e-9;
    close(m, n) || close(m, &n.negated())
}

impl Surface {
    /// Build the surface of a group with a cusp at ∞. `cusp_height` defaults
    /// to 1.5 times the largest isometric-circle radius.
    pub fn new(group: GroupPresentation, cusp_height: Option<f64>) -> Result<Self> {
        let words = reduced_words(group.rank(), CANDIDATE_WORD_LEN);
        let mut width = f64::INFINITY;
        let mut candidates: Vec<Mobius> = Vec::new();
        for w in &words {
            let m = group.evaluate_letters(w)?;
            if m.c.abs() < 1e-12 {
                if m.classify() == MapKind::Parabolic && m.b.abs() > 1e-12 {
                    width = width.min((m.b / m.a).abs());
                }
                continue;
            }
            if !candidates.iter().any(|c| same_map(c, &m)) {
                candidates.push(m);
            }
        }
        if !width.is_finite() {
            return Err(LabError::input("group has no parabolic element fixing ∞; cannot place a cusp there"));
        }
        let max_radius = candidates.iter().map(|m| 1.0 / m.c.abs()).fold(0.0, f64::max);
        let cusp_height = cusp_height.unwrap_or(1.5 * max_radius);
        if !(cusp_height > max_radius) {
            return Err(LabError::input(format!(
                "cusp height {cusp_height} must exceed the largest isometric radius {max_radius}"
            )));
        }
        let tr = Mobius::translation(width);
        let mut neighbors = vec![Mobius::IDENTITY];
        for w in reduced_words(group.rank(), NEIGHBOR_WORD_LEN) {
            neighbors.push(group.evaluate_letters(&w)?);
        }
        let base = neighbors.clone();
        for m in base {
            neighbors.push(tr * m);
            neighbors.push(tr.inverse() * m);
        }
        let mut uniq: Vec<Mobius> = Vec::new();
        for m in neighbors {
            if !uniq.iter().any(|u| same_map(u, &m)) {
                uniq.push(m);
            }
        }
        Ok(Surface { group, width, cusp_height, x0: -0.5 * width, max_radius, candidates, neighbors: uniq })
    }

    pub fn preset(name: &str, cusp_height: Option<f64>) -> Result<Self> {
        Surface::new(GroupPresentation::preset(name)?, cusp_height)
    }

    /// Map `p` into the Ford domain. Returns the reduced point and the group
    /// element `g` with `g(p)` equal to it.
    pub fn reduce(&self, p: Point) -> (Point, Mobius) {
        let mut z = p.to_complex();
        let mut g = Mobius::IDENTITY;
        for _ in 0..10_000 {
            let k = ((z.re - self.x0) / self.width).floor();
            if k != 0.0 {
                let t = Mobius::translation(-k * self.width);
                z = t.apply(z);
                g = t * g;
            }
            let mut best: Option<(f64, &Mobius)> = None;
            for m in &self.candidates {
                let n = (z * m.c + m.d).norm_sqr();
                if n < 1.0 - 1e-13 && best.is_none_or(|(b, _)| n < b) {
                    best = Some((n, m));
                }
            }
            match best {
                Some((_, m)) => {
                    z = m.apply(z);
                    g = *m * g;
                }
                None => break,
            }
        }
        (Point::from_complex(z), g)
    }

    pub fn reduce_phase(&self, ph: Phase) -> (Phase, Mobius) {
        let (_, g) = self.reduce(ph.p);
        (g.apply_phase(ph), g)
    }

    /// True when `p` lies in the embedded cusp region y > a (after reduction).
    pub fn in_cusp(&self, p: Point) -> bool {
        self.reduce(p).0.y > self.cusp_height
    }

    /// Distance in the quotient between two points, taken as the minimum over
    /// neighbouring translates (exact for points of the fundamental domain
    /// closer than the injectivity scale of its sides).
    pub fn quotient_distance(&self, p: Point, q: Point) -> f64 {
        let (p, _) = self.reduce(p);
        let (q, _) = self.reduce(q);
        self.neighbors.iter().map(|n| distance(p, n.apply_point(q))).fold(f64::INFINITY, f64::min)
    }

    /// Translates used by [`Surface::quotient_distance`].
    pub fn neighbor_maps(&self) -> &[Mobius] {
        &self.neighbors
    }

    /// Height of the lower boundary of the Ford domain above `x`.
    pub fn floor_height(&self, x: f64) -> f64 {
        let mut h: f64 = 0.0;
        for m in &self.candidates {
            let r = 1.0 / m.c.abs();
            let c = -m.d / m.c;
            for k in [-1.0, 0.0, 1.0] {
                let dx = x - (c + k * self.width);
                if dx.abs() < r {
                    h = h.max((r * r - dx * dx).sqrt());
                }
            }
        }
        h
    }

    /// Hyperbolic area of the Ford domain by quadrature of ∫ dx / floor(x).
    pub fn area(&self) -> f64 {
        let n = 20_000;
        let h = self.width / n as f64;
        (0..n)
            .map(|i| {
                let x = self.x0 + (i as f64 + 0.5) * h;
                h / self.floor_height(x)
            })
            .sum()
    }

    pub fn summary(&self) -> SurfaceSummary {
        SurfaceSummary {
            width: self.width,
            cusp_height: self.cusp_height,
            max_radius: self.max_radius,
            area: self.area(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn torus_preset_geometry() {
        let s = Surface::preset("one-cusp-genus-1", None).unwrap();
        assert!((s.width - 1.0).abs() < 1e-12);
        assert!((s.max_radius - 1.0 / 6.0).abs() < 1e-12);
        assert!((s.cusp_height - 0.25).abs() < 1e-12);
        // χ = −1
        assert!((s.area() - 2.0 * PI).abs() < 1e-3, "{}", s.area());
    }

    #[test]
    fn thrice_punctured_width() {
        let s = Surface::preset("thrice-punctured", None).unwrap();
        assert!((s.width - 2.0).abs() < 1e-12);
    }

    #[test]
    fn reduction_lands_in_ford_domain() {
        let s = Surface::preset("one-cusp-genus-1", None).unwrap();
        let all: Vec<Mobius> = reduced_words(2, 6)
            .iter()
            .map(|w| s.group.evaluate_letters(w).unwrap())
            .filter(|m| m.c.abs() > 1e-12)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let p = Point::new(rng.gen_range(-3.0..3.0), rng.gen_range(0.01..2.0));
            let (q, g) = s.reduce(p);
            assert!(distance(g.apply_point(p), q) < 1e-9);
            assert!(q.x >= s.x0 - 1e-12 && q.x < s.x0 + s.width + 1e-12);
            for m in &all {
                assert!((q.to_complex() * m.c + m.d).norm() >= 1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn quotient_distance_is_invariant() {
        let s = Surface::preset("one-cusp-genus-1", None).unwrap();
        let p = Point::new(0.1, 0.3);
        let q = Point::new(0.45, 0.2);
        let g = s.group.evaluate_letters(&[1, -2, 1]).unwrap();
        let d0 = s.quotient_distance(p, q);
        let d1 = s.quotient_distance(g.apply_point(p), q);
        assert!((d0 - d1).abs() < 1e-10);
        assert!(d0 <= distance(p, q) + 1e-12);
        // across the vertical side
        let d = s.quotient_distance(Point::new(-0.49, 1.0), Point::new(0.49, 1.0));
        assert!((d - distance(Point::new(0.0, 1.0), Point::new(0.02, 1.0))).abs() < 1e-12);
    }

    #[test]
    fn rejects_low_cusp_height() {
        assert!(Surface::preset("one-cusp-genus-1", Some(0.1)).is_err());
    }
}
