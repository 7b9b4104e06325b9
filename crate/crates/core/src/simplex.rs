//! Planar simplex projection and the triangle cover decision.
//!
//! Points live in the reference triangle `Δ = {x ≥ 0, y ≥ 0, x + y ≤ 1}`
//! obtained by normalizing a nonnegative 3-vector to unit sum and dropping
//! its first coordinate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Vector;

const ANGLE_STEPS: usize = 720;
const REFINE_STEPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexPoint {
    pub x: f64,
    pub y: f64,
}

impl SimplexPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Largest violation of the three inequalities defining `Δ`.
    pub fn outside_distance(&self) -> f64 {
        let d = [-self.x, -self.y, (self.x + self.y - 1.0) / 2f64.sqrt()];
        d.into_iter().fold(0.0, f64::max)
    }

    /// Point of the standard simplex in ℝ³ with this projection.
    pub fn lift(&self) -> Vector {
        Vector::from_column_slice(&[1.0 - self.x - self.y, self.x, self.y])
    }

    fn sub(self, o: Self) -> (f64, f64) {
        (self.x - o.x, self.y - o.y)
    }

    fn dist(self, o: Self) -> f64 {
        let (dx, dy) = self.sub(o);
        dx.hypot(dy)
    }
}

pub fn simplex_project(x: &Vector) -> Result<SimplexPoint> {
    if x.len() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "simplex projection needs a 3-vector, got {}",
            x.len()
        )));
    }
    let sum = x.sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::Hypothesis(format!(
            "coordinate sum must be positive, got {sum:e}"
        )));
    }
    Ok(SimplexPoint::new(x[1] / sum, x[2] / sum))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    /// `y = 0`
    Bottom,
    /// `x = 0`
    Left,
    /// `x + y = 1`
    Hypotenuse,
}

impl Edge {
    pub const ALL: [Edge; 3] = [Edge::Bottom, Edge::Left, Edge::Hypotenuse];

    pub fn distance(self, p: SimplexPoint) -> f64 {
        match self {
            Edge::Bottom => p.y.abs(),
            Edge::Left => p.x.abs(),
            Edge::Hypotenuse => (p.x + p.y - 1.0).abs() / 2f64.sqrt(),
        }
    }

    fn corners(self) -> [SimplexPoint; 2] {
        let o = SimplexPoint::new(0.0, 0.0);
        let ex = SimplexPoint::new(1.0, 0.0);
        let ey = SimplexPoint::new(0.0, 1.0);
        match self {
            Edge::Bottom => [o, ex],
            Edge::Left => [o, ey],
            Edge::Hypotenuse => [ex, ey],
        }
    }

    fn shared_corner(self, other: Edge) -> SimplexPoint {
        let [a, b] = self.corners();
        if other.corners().contains(&a) {
            a
        } else {
            b
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeContact {
    pub edge: Edge,
    pub point: SimplexPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InfeasibilityCertificate {
    /// `v0` and two points of `S` touch all three edges, which pins any
    /// admissible triangle inside `conv{v0, c1, c2}`; `outlier` lies outside it.
    EdgeContacts {
        contacts: Vec<EdgeContact>,
        outlier: SimplexPoint,
        outlier_distance: f64,
    },
    /// The directions from `v0` to `S` span an angle larger than π, so no
    /// triangle with corner `v0` can contain `S`.
    Wedge {
        first: SimplexPoint,
        last: SimplexPoint,
        angle: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Feasible,
    Infeasible,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverDecision {
    pub verdict: Verdict,
    pub witnesses: Option<(SimplexPoint, SimplexPoint)>,
    pub certificate: Option<InfeasibilityCertificate>,
    /// Largest distance of a point of `S` from the best triangle tried when
    /// the verdict is not `Infeasible`.
    pub best_violation: f64,
}

fn cross(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

fn segment_distance(p: SimplexPoint, a: SimplexPoint, b: SimplexPoint) -> f64 {
    let (dx, dy) = b.sub(a);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let (px, py) = p.sub(a);
    let t = ((px * dx + py * dy) / len2).clamp(0.0, 1.0);
    p.dist(SimplexPoint::new(a.x + t * dx, a.y + t * dy))
}

/// Euclidean distance from `p` to the (possibly degenerate) triangle `abc`.
pub fn triangle_distance(p: SimplexPoint, a: SimplexPoint, b: SimplexPoint, c: SimplexPoint) -> f64 {
    let area = cross(b.sub(a), c.sub(a));
    if area.abs() > 1e-300 {
        let s = area.signum();
        let inside = [(a, b), (b, c), (c, a)]
            .iter()
            .all(|&(u, v)| s * cross(v.sub(u), p.sub(u)) >= 0.0);
        if inside {
            return 0.0;
        }
    }
    segment_distance(p, a, b)
        .min(segment_distance(p, b, c))
        .min(segment_distance(p, c, a))
}

fn max_violation(v0: SimplexPoint, p: SimplexPoint, q: SimplexPoint, s: &[SimplexPoint]) -> f64 {
    s.iter()
        .map(|&x| triangle_distance(x, v0, p, q))
        .fold(0.0, f64::max)
}

/// Far end of the ray from `v0` in direction `theta`, clipped to `Δ`.
fn ray_exit(v0: SimplexPoint, theta: f64) -> SimplexPoint {
    let (dx, dy) = (theta.cos(), theta.sin());
    let mut t = f64::INFINITY;
    // Constraints x ≥ 0, y ≥ 0, x + y ≤ 1 in the form g + t·dg ≥ 0.
    for (g, dg) in [(v0.x, dx), (v0.y, dy), (1.0 - v0.x - v0.y, -(dx + dy))] {
        if dg < 0.0 {
            t = t.min((g.max(0.0)) / -dg);
        }
    }
    let t = if t.is_finite() { t } else { 0.0 };
    SimplexPoint::new(v0.x + t * dx, v0.y + t * dy)
}

fn edge_contacts_certificate(
    v0: SimplexPoint,
    s: &[SimplexPoint],
    tol: f64,
) -> Option<InfeasibilityCertificate> {
    let on: Vec<Edge> = Edge::ALL
        .into_iter()
        .filter(|e| e.distance(v0) <= tol)
        .collect();
    // v0 must sit in the relative interior of exactly one edge.
    let [e0] = on[..] else { return None };
    let others: Vec<Edge> = Edge::ALL.into_iter().filter(|&e| e != e0).collect();
    let corner = others[0].shared_corner(others[1]);
    let mut contacts = vec![EdgeContact { edge: e0, point: v0 }];
    for &e in &others {
        let best = s
            .iter()
            .copied()
            .filter(|&p| p.dist(corner) > tol && e.distance(p) <= tol)
            .min_by(|&p, &q| e.distance(p).total_cmp(&e.distance(q)))?;
        contacts.push(EdgeContact { edge: e, point: best });
    }
    let (c1, c2) = (contacts[1].point, contacts[2].point);
    let (outlier, outlier_distance) = s
        .iter()
        .map(|&p| (p, triangle_distance(p, v0, c1, c2)))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    (outlier_distance > tol).then_some(InfeasibilityCertificate::EdgeContacts {
        contacts,
        outlier,
        outlier_distance,
    })
}

/// Directions of `S` seen from `v0`, or `None` when every point coincides with `v0`.
/// Returns the smallest wedge `[lo, lo + width]` containing them and the
/// points realizing its sides.
fn direction_wedge(
    v0: SimplexPoint,
    s: &[SimplexPoint],
    tol: f64,
) -> Option<(f64, f64, SimplexPoint, SimplexPoint)> {
    let mut dirs: Vec<(f64, SimplexPoint)> = s
        .iter()
        .filter(|p| p.dist(v0) > tol)
        .map(|&p| {
            let (dx, dy) = p.sub(v0);
            (dy.atan2(dx).rem_euclid(2.0 * PI), p)
        })
        .collect();
    if dirs.is_empty() {
        return None;
    }
    dirs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let m = dirs.len();
    // The wedge complements the largest angular gap between neighbours.
    let (gap_end, _) = (0..m)
        .map(|i| {
            let next = if i + 1 < m { dirs[i + 1].0 } else { dirs[0].0 + 2.0 * PI };
            (i, next - dirs[i].0)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");
    let start = (gap_end + 1) % m;
    let lo = dirs[start].0;
    let width = (dirs[gap_end].0 - lo).rem_euclid(2.0 * PI);
    Some((lo, width, dirs[start].1, dirs[gap_end].1))
}

/// Decides whether some `p, q ∈ Δ` satisfy `S ⊆ conv{v0, p, q}`.
///
/// `Infeasible` is backed by a certificate that can be re-checked; `Feasible`
/// carries witnesses; configurations where neither is found yield `Unknown`.
pub fn triangle_cover_decision(
    v0: SimplexPoint,
    s: &[SimplexPoint],
    tol: f64,
) -> Result<CoverDecision> {
    for &p in std::iter::once(&v0).chain(s) {
        if !(p.x.is_finite() && p.y.is_finite()) || p.outside_distance() > tol {
            return Err(Error::OutsideTriangle { x: p.x, y: p.y });
        }
    }
    if let Some(cert) = edge_contacts_certificate(v0, s, tol) {
        return Ok(infeasible(cert));
    }
    let Some((lo, width, first, last)) = direction_wedge(v0, s, tol) else {
        return Ok(feasible(v0, v0, 0.0));
    };
    let angle_slack = tol / s.iter().map(|p| p.dist(v0)).fold(tol, f64::max);
    if width > PI + angle_slack {
        return Ok(infeasible(InfeasibilityCertificate::Wedge { first, last, angle: width }));
    }

    let spare = (PI - width).max(0.0);
    let step = spare / ANGLE_STEPS as f64;
    let try_pair = |a: f64, b: f64| {
        let p = ray_exit(v0, lo - a);
        let q = ray_exit(v0, lo + width + b);
        (p, q, max_violation(v0, p, q, s))
    };
    let mut best = try_pair(0.0, 0.0);
    let mut best_ij = (0.0, 0.0);
    if best.2 <= tol {
        return Ok(feasible(best.0, best.1, best.2));
    }
    for i in 0..=ANGLE_STEPS {
        for j in 0..=(ANGLE_STEPS - i) {
            let (a, b) = (i as f64 * step, j as f64 * step);
            let cand = try_pair(a, b);
            if cand.2 < best.2 {
                best = cand;
                best_ij = (a, b);
                if best.2 <= tol {
                    return Ok(feasible(best.0, best.1, best.2));
                }
            }
        }
    }
    let fine = step / REFINE_STEPS as f64;
    let half = REFINE_STEPS as isize;
    for i in -half..=half {
        for j in -half..=half {
            let a = best_ij.0 + i as f64 * fine;
            let b = best_ij.1 + j as f64 * fine;
            if a < 0.0 || b < 0.0 || a + b > spare {
                continue;
            }
            let cand = try_pair(a, b);
            if cand.2 <= tol {
                return Ok(feasible(cand.0, cand.1, cand.2));
            }
            if cand.2 < best.2 {
                best = cand;
            }
        }
    }
    Ok(CoverDecision {
        verdict: Verdict::Unknown,
        witnesses: None,
        certificate: None,
        best_violation: best.2,
    })
}

fn feasible(p: SimplexPoint, q: SimplexPoint, violation: f64) -> CoverDecision {
    CoverDecision {
        verdict: Verdict::Feasible,
        witnesses: Some((p, q)),
        certificate: None,
        best_violation: violation,
    }
}

fn infeasible(cert: InfeasibilityCertificate) -> CoverDecision {
    CoverDecision {
        verdict: Verdict::Infeasible,
        witnesses: None,
        certificate: Some(cert),
        best_violation: f64::INFINITY,
    }
}

/// Re-checks a decision against `v0` and `S` from scratch.
pub fn verify_cover(v0: SimplexPoint, s: &[SimplexPoint], d: &CoverDecision, tol: f64) -> bool {
    match d.verdict {
        Verdict::Feasible => d.witnesses.is_some_and(|(p, q)| {
            p.outside_distance() <= tol
                && q.outside_distance() <= tol
                && max_violation(v0, p, q, s) <= tol
        }),
        Verdict::Infeasible => match &d.certificate {
            Some(InfeasibilityCertificate::EdgeContacts { contacts, outlier, .. }) => {
                contacts.len() == 3
                    && contacts[0].point == v0
                    && contacts.iter().all(|c| c.edge.distance(c.point) <= tol)
                    && contacts[0].edge != contacts[1].edge
                    && contacts[1].edge != contacts[2].edge
                    && contacts[0].edge != contacts[2].edge
                    && Edge::ALL
                        .into_iter()
                        .filter(|e| e.distance(v0) <= tol)
                        .count()
                        == 1
                    && {
                        let corner = contacts[1].edge.shared_corner(contacts[2].edge);
                        contacts[1..].iter().all(|c| c.point.dist(corner) > tol)
                    }
                    && contacts[1..].iter().all(|c| s.contains(&c.point))
                    && s.contains(outlier)
                    && triangle_distance(*outlier, v0, contacts[1].point, contacts[2].point) > tol
            }
            Some(InfeasibilityCertificate::Wedge { .. }) => {
                direction_wedge(v0, s, tol).is_some_and(|(_, w, _, _)| {
                    let slack = tol / s.iter().map(|p| p.dist(v0)).fold(tol, f64::max);
                    w > PI + slack
                })
            }
            None => false,
        },
        Verdict::Unknown => d.witnesses.is_none() && d.certificate.is_none(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, y: f64) -> SimplexPoint {
        SimplexPoint::new(x, y)
    }

    fn figure_points() -> Vec<SimplexPoint> {
        [
            (5.0000000e-01, 0.0000000e+00),
            (2.4000000e-01, 7.6000000e-01),
            (8.1818182e-02, 3.1363636e-01),
            (3.0379747e-02, 6.9789030e-01),
            (9.9401749e-03, 4.5724804e-01),
            (3.4601522e-03, 6.2515018e-01),
            (1.1464765e-03, 5.1553759e-01),
            (3.9146805e-04, 5.8886733e-01),
            (1.3090841e-04, 5.4039031e-01),
            (4.4372480e-05, 5.7255958e-01),
            (0.0, 5.5972972e-01),
        ]
        .into_iter()
        .map(|(x, y)| pt(x, y))
        .collect()
    }

    #[test]
    fn projection_examples() {
        let p = simplex_project(&Vector::from_column_slice(&[1.0, 1.0, 0.0])).unwrap();
        assert_eq!(p, pt(0.5, 0.0));
        let p = simplex_project(&Vector::from_column_slice(&[0.0, 6.0, 19.0])).unwrap();
        assert!((p.x - 0.24).abs() < 1e-15 && (p.y - 0.76).abs() < 1e-15);
        let p = simplex_project(&Vector::from_column_slice(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(p, pt(0.0, 0.0));
        assert!(simplex_project(&Vector::zeros(3)).is_err());
        assert!(simplex_project(&Vector::zeros(2)).is_err());
    }

    #[test]
    fn figure_configuration_is_infeasible() {
        let s = figure_points();
        let v0 = pt(0.5, 0.0);
        let d = triangle_cover_decision(v0, &s, 1e-7).unwrap();
        assert_eq!(d.verdict, Verdict::Infeasible);
        let Some(InfeasibilityCertificate::EdgeContacts { contacts, outlier, .. }) = &d.certificate
        else {
            panic!("expected edge contacts, got {d:?}");
        };
        assert_eq!(contacts[1].edge, Edge::Left);
        assert_eq!(contacts[1].point, pt(0.0, 5.5972972e-01));
        assert_eq!(contacts[2].edge, Edge::Hypotenuse);
        assert_eq!(contacts[2].point, pt(0.24, 0.76));
        assert_eq!(*outlier, pt(8.1818182e-02, 3.1363636e-01));
        assert!(verify_cover(v0, &s, &d, 1e-7));
    }

    #[test]
    fn trivial_feasible_configurations() {
        let d = triangle_cover_decision(pt(0.0, 0.0), &[pt(0.2, 0.2)], 1e-9).unwrap();
        assert_eq!(d.verdict, Verdict::Feasible);
        assert!(verify_cover(pt(0.0, 0.0), &[pt(0.2, 0.2)], &d, 1e-9));
        let d = triangle_cover_decision(pt(0.5, 0.0), &[pt(0.5, 0.0)], 1e-9).unwrap();
        assert_eq!(d.witnesses, Some((pt(0.5, 0.0), pt(0.5, 0.0))));
    }

    #[test]
    fn spread_points_need_the_angle_search() {
        let v0 = pt(0.0, 0.0);
        let s = [pt(0.9, 0.05), pt(0.05, 0.9), pt(0.45, 0.45), pt(0.3, 0.1)];
        let d = triangle_cover_decision(v0, &s, 1e-9).unwrap();
        assert_eq!(d.verdict, Verdict::Feasible);
        assert!(verify_cover(v0, &s, &d, 1e-9));
    }

    #[test]
    fn wide_wedge_is_infeasible() {
        let v0 = pt(0.3, 0.3);
        let s = [pt(0.5, 0.3), pt(0.1, 0.32), pt(0.3, 0.1)];
        let d = triangle_cover_decision(v0, &s, 1e-9).unwrap();
        assert_eq!(d.verdict, Verdict::Infeasible);
        assert!(matches!(d.certificate, Some(InfeasibilityCertificate::Wedge { .. })));
        assert!(verify_cover(v0, &s, &d, 1e-9));
    }

    #[test]
    fn points_outside_are_rejected() {
        assert!(triangle_cover_decision(pt(0.7, 0.7), &[], 1e-9).is_err());
        assert!(triangle_cover_decision(pt(0.1, 0.1), &[pt(-0.1, 0.0)], 1e-9).is_err());
    }

    #[test]
    fn tampered_certificate_fails_verification() {
        let s = figure_points();
        let v0 = pt(0.5, 0.0);
        let mut d = triangle_cover_decision(v0, &s, 1e-7).unwrap();
        if let Some(InfeasibilityCertificate::EdgeContacts { outlier, .. }) = &mut d.certificate {
            *outlier = pt(0.2, 0.2);
        }
        assert!(!verify_cover(v0, &s, &d, 1e-7));
    }
}
