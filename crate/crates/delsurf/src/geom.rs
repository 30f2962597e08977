//! Exact-decision geometric predicates and metric constructions.
//!
//! Predicates (`orient3d`, `insphere`) return exact signs via adaptive
//! floating-point filters that escalate to exact expansion arithmetic only
//! when the fast evaluation cannot certify the sign. Constructions
//! (circumcentres, circumballs) are ordinary floating point with relative
//! accuracy contracts.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::{Error, Result};

/// Reciprocal of the radius-edge ratio lower bound: `rho == 1/sqrt(3)`
/// for an equilateral triangle.
pub const RHO_EQUILATERAL: f64 = 0.577_350_269_189_625_8;

/// A point in model units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// A displacement between points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_vec(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn distance(self, other: Point3) -> f64 {
        (self - other).norm()
    }

    pub fn distance2(self, other: Point3) -> f64 {
        (self - other).norm2()
    }

    pub fn midpoint(self, other: Point3) -> Point3 {
        Point3::new(
            0.5 * (self.x + other.x),
            0.5 * (self.y + other.y),
            0.5 * (self.z + other.z),
        )
    }

    pub fn min_coords(self, other: Point3) -> Point3 {
        Point3::new(self.x.min(other.x), self.y.min(other.y), self.z.min(other.z))
    }

    pub fn max_coords(self, other: Point3) -> Point3 {
        Point3::new(self.x.max(other.x), self.y.max(other.y), self.z.max(other.z))
    }
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    /// Unit vector, or `None` when the norm underflows to zero.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n == 0.0 {
            None
        } else {
            Some(self / n)
        }
    }
}

impl Sub for Point3 {
    type Output = Vec3;
    fn sub(self, rhs: Point3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Add<Vec3> for Point3 {
    type Output = Point3;
    fn add(self, rhs: Vec3) -> Point3 {
        Point3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub<Vec3> for Point3 {
    type Output = Point3;
    fn sub(self, rhs: Vec3) -> Point3 {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, rhs: f64) -> Vec3 {
        Vec3::new(self.x * rhs, self.y * rhs, self.z * rhs)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, rhs: f64) -> Vec3 {
        Vec3::new(self.x / rhs, self.y / rhs, self.z / rhs)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// A closed ball `B(centre, radius)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball3 {
    pub centre: Point3,
    pub radius: f64,
}

impl Ball3 {
    pub fn new(centre: Point3, radius: f64) -> Self {
        debug_assert!(radius >= 0.0);
        Ball3 { centre, radius }
    }

    pub fn contains(&self, p: Point3) -> bool {
        self.centre.distance2(p) <= self.radius * self.radius
    }
}

/// An oriented plane defined by a point and a unit normal.
#[derive(Debug, Clone, Copy)]
pub struct Plane3 {
    pub origin: Point3,
    pub normal: Vec3,
}

impl Plane3 {
    /// Builds a plane, normalising `normal`. Fails on a zero normal.
    pub fn new(origin: Point3, normal: Vec3) -> Result<Plane3> {
        let normal = normal
            .normalized()
            .ok_or(Error::DegenerateSimplex("plane normal has zero length"))?;
        Ok(Plane3 { origin, normal })
    }

    /// Signed distance from `p` to the plane.
    pub fn signed_distance(&self, p: Point3) -> f64 {
        (p - self.origin).dot(self.normal)
    }
}

fn coord(p: Point3) -> robust::Coord3D<f64> {
    robust::Coord3D {
        x: p.x,
        y: p.y,
        z: p.z,
    }
}

fn sign_of(v: f64) -> i32 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Sign of the determinant `det[b-a, c-a, d-a]`: +1 when `d` lies on the
/// positive side of the oriented plane through `(a, b, c)`, 0 when the four
/// points are coplanar. Exact decision.
pub fn orient3d(a: Point3, b: Point3, c: Point3, d: Point3) -> i32 {
    // robust::orient3d computes det[a-d, b-d, c-d], the opposite sign.
    -sign_of(robust::orient3d(coord(a), coord(b), coord(c), coord(d)))
}

/// +1 when `e` lies strictly inside the circumsphere of `(a, b, c, d)`,
/// -1 strictly outside, 0 exactly on it, independent of the orientation of
/// the base tetrahedron. Exact decision. Fails on a degenerate base.
pub fn insphere(a: Point3, b: Point3, c: Point3, d: Point3, e: Point3) -> Result<i32> {
    let orient = sign_of(robust::orient3d(coord(a), coord(b), coord(c), coord(d)));
    if orient == 0 {
        return Err(Error::DegenerateSimplex("insphere on a coplanar tetrahedron"));
    }
    let raw = sign_of(robust::insphere(
        coord(a),
        coord(b),
        coord(c),
        coord(d),
        coord(e),
    ));
    Ok(raw * orient)
}

/// Smallest ball through `a`, `b`, `c` with its centre in the triangle's
/// plane (the diametric ball of the 2-simplex). Fails on collinear input.
pub fn circumball_tri3(a: Point3, b: Point3, c: Point3) -> Result<Ball3> {
    let ab = b - a;
    let ac = c - a;
    let n = ab.cross(ac);
    let n2 = n.norm2();
    if n2 == 0.0 {
        return Err(Error::DegenerateSimplex("circumball of collinear points"));
    }
    let offset = (n.cross(ab) * ac.norm2() + ac.cross(n) * ab.norm2()) / (2.0 * n2);
    let centre = a + offset;
    let radius = offset.norm();
    if !centre.is_finite() || !radius.is_finite() {
        return Err(Error::DegenerateSimplex("circumball overflow on near-degenerate input"));
    }
    Ok(Ball3::new(centre, radius))
}

/// Circumcentre of a tetrahedron: the point equidistant from all four
/// vertices. Fails on (near-)degenerate tetrahedra.
pub fn circumcentre_tet(a: Point3, b: Point3, c: Point3, d: Point3) -> Result<Point3> {
    let u = b - a;
    let v = c - a;
    let w = d - a;
    let det = u.dot(v.cross(w));
    if det == 0.0 {
        return Err(Error::DegenerateSimplex("circumcentre of a flat tetrahedron"));
    }
    let offset = (v.cross(w) * u.norm2() + w.cross(u) * v.norm2() + u.cross(v) * w.norm2())
        / (2.0 * det);
    let centre = a + offset;
    if !centre.is_finite() {
        return Err(Error::DegenerateSimplex("circumcentre overflow on near-degenerate input"));
    }
    Ok(centre)
}

/// Squared lengths of the three edges `(b-a, c-b, a-c)`.
pub fn edge_lengths(a: Point3, b: Point3, c: Point3) -> [f64; 3] {
    [a.distance(b), b.distance(c), c.distance(a)]
}

/// Radius-edge ratio of a triangle: circumradius over shortest edge.
/// Degenerate triangles map to `+inf`.
pub fn radius_edge(a: Point3, b: Point3, c: Point3) -> f64 {
    let la = a.distance(b);
    let lb = b.distance(c);
    let lc = c.distance(a);
    let shortest = la.min(lb).min(lc);
    if shortest == 0.0 {
        return f64::INFINITY;
    }
    let area2 = (b - a).cross(c - a).norm(); // twice the area
    if area2 == 0.0 {
        return f64::INFINITY;
    }
    // R = abc / (4A)
    let r = (la * lb * lc) / (2.0 * area2);
    r / shortest
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    const UNIT_TET: [Point3; 4] = [
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(1.0, 0.0, 0.0),
        Point3::new(0.0, 1.0, 0.0),
        Point3::new(0.0, 0.0, 1.0),
    ];

    #[test]
    fn orient3d_canonical_cases() {
        let [a, b, c, d] = UNIT_TET;
        assert_eq!(orient3d(a, b, c, d), 1);
        assert_eq!(orient3d(a, b, c, pt(1.0, 1.0, 0.0)), 0);
        assert_eq!(orient3d(a, b, c, pt(0.0, 0.0, -1.0)), -1);
    }

    #[test]
    fn insphere_canonical_cases() {
        let [a, b, c, d] = UNIT_TET;
        assert_eq!(insphere(a, b, c, d, pt(0.25, 0.25, 0.25)).unwrap(), 1);
        assert_eq!(insphere(a, b, c, d, pt(10.0, 10.0, 10.0)).unwrap(), -1);
        assert_eq!(insphere(a, b, c, d, a).unwrap(), 0);
        // Orientation-independent: swapping two base points keeps the answer.
        assert_eq!(insphere(b, a, c, d, pt(0.25, 0.25, 0.25)).unwrap(), 1);
    }

    #[test]
    fn insphere_rejects_coplanar_base() {
        let [a, b, c, _] = UNIT_TET;
        assert!(insphere(a, b, c, pt(1.0, 1.0, 0.0), pt(0.0, 0.0, 5.0)).is_err());
    }

    #[test]
    fn circumball_equilateral_and_right() {
        let b = circumball_tri3(pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0), pt(0.5, 3f64.sqrt() / 2.0, 0.0))
            .unwrap();
        assert!((b.radius - 1.0 / 3f64.sqrt()).abs() < 1e-12);

        let b = circumball_tri3(pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0), pt(0.0, 1.0, 0.0)).unwrap();
        assert!((b.centre.distance(pt(0.5, 0.5, 0.0))) < 1e-12);
        assert!((b.radius - 2f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn circumball_rejects_collinear() {
        assert!(circumball_tri3(pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0), pt(2.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn circumcentre_tet_symmetric_cases() {
        // Regular tetrahedron inscribed in the unit sphere: centre at origin.
        let s = 1.0 / 3f64.sqrt();
        let cc = circumcentre_tet(
            pt(s, s, s),
            pt(s, -s, -s),
            pt(-s, s, -s),
            pt(-s, -s, s),
        )
        .unwrap();
        assert!(cc.distance(pt(0.0, 0.0, 0.0)) < 1e-12);

        // Corner tetrahedron.
        let [a, b, c, d] = UNIT_TET;
        let cc = circumcentre_tet(a, b, c, d).unwrap();
        assert!(cc.distance(pt(0.5, 0.5, 0.5)) < 1e-12);

        // Degenerate input is rejected.
        assert!(circumcentre_tet(a, b, c, pt(1.0, 1.0, 0.0)).is_err());
    }

    // Independent oracle: solve for the in-plane circumcentre as
    // a + alpha*ab + beta*ac from the two equidistance constraints.
    fn circumcentre_oracle(a: Point3, b: Point3, c: Point3) -> Point3 {
        let ab = b - a;
        let ac = c - a;
        let m = [
            [ab.dot(ab), ab.dot(ac)],
            [ab.dot(ac), ac.dot(ac)],
        ];
        let rhs = [0.5 * ab.norm2(), 0.5 * ac.norm2()];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let alpha = (rhs[0] * m[1][1] - rhs[1] * m[0][1]) / det;
        let beta = (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det;
        a + ab * alpha + ac * beta
    }

    proptest! {
        #[test]
        fn orient3d_permutation_parity(
            coords in proptest::collection::vec(-10.0f64..10.0, 12)
        ) {
            let p: Vec<Point3> = coords.chunks(3).map(|c| pt(c[0], c[1], c[2])).collect();
            let (a, b, c, d) = (p[0], p[1], p[2], p[3]);
            let s = orient3d(a, b, c, d);
            // Odd permutations flip, even permutations preserve.
            prop_assert_eq!(orient3d(b, a, c, d), -s);
            prop_assert_eq!(orient3d(a, c, b, d), -s);
            prop_assert_eq!(orient3d(b, c, a, d), s);
            prop_assert_eq!(orient3d(c, a, b, d), s);
            // Reversal of four arguments is an even permutation.
            prop_assert_eq!(orient3d(d, c, b, a), s);
        }

        #[test]
        fn circumball_matches_linear_system_oracle(
            coords in proptest::collection::vec(-5.0f64..5.0, 9)
        ) {
            let a = pt(coords[0], coords[1], coords[2]);
            let b = pt(coords[3], coords[4], coords[5]);
            let c = pt(coords[6], coords[7], coords[8]);
            let area2 = (b - a).cross(c - a).norm();
            prop_assume!(area2 > 1e-6);
            let ball = circumball_tri3(a, b, c).unwrap();
            let oracle = circumcentre_oracle(a, b, c);
            prop_assert!(ball.centre.distance(oracle) <= 1e-9 * ball.radius.max(1.0));
            // Equidistance within 1e-9 relative.
            for p in [a, b, c] {
                prop_assert!((ball.centre.distance(p) - ball.radius).abs() <= 1e-9 * ball.radius);
            }
            // Centre lies in the triangle plane.
            let n = (b - a).cross(c - a).normalized().unwrap();
            prop_assert!((ball.centre - a).dot(n).abs() <= 1e-9 * ball.radius);
        }

        #[test]
        fn circumcentre_tet_equidistance(
            coords in proptest::collection::vec(-5.0f64..5.0, 12)
        ) {
            let p: Vec<Point3> = coords.chunks(3).map(|c| pt(c[0], c[1], c[2])).collect();
            let (a, b, c, d) = (p[0], p[1], p[2], p[3]);
            let vol = (b - a).dot((c - a).cross(d - a)).abs();
            prop_assume!(vol > 0.1);
            let cc = circumcentre_tet(a, b, c, d).unwrap();
            let r = cc.distance(a);
            for p in [b, c, d] {
                prop_assert!((cc.distance(p) - r).abs() <= 1e-9 * r.max(1.0));
            }
        }

        #[test]
        fn radius_edge_equals_half_inverse_sine_of_min_angle(
            coords in proptest::collection::vec(-5.0f64..5.0, 9)
        ) {
            let a = pt(coords[0], coords[1], coords[2]);
            let b = pt(coords[3], coords[4], coords[5]);
            let c = pt(coords[6], coords[7], coords[8]);
            let area2 = (b - a).cross(c - a).norm();
            prop_assume!(area2 > 1e-6);
            let rho = radius_edge(a, b, c);
            let theta_min = min_angle(a, b, c);
            let expected = 0.5 / theta_min.sin();
            prop_assert!((rho - expected).abs() <= 1e-9 * expected);
        }
    }

    fn min_angle(a: Point3, b: Point3, c: Point3) -> f64 {
        let angle_at = |v: Point3, p: Point3, q: Point3| -> f64 {
            let u = (p - v).normalized().unwrap();
            let w = (q - v).normalized().unwrap();
            u.dot(w).clamp(-1.0, 1.0).acos()
        };
        angle_at(a, b, c).min(angle_at(b, c, a)).min(angle_at(c, a, b))
    }

    #[test]
    fn radius_edge_canonical_values() {
        // Equilateral.
        let rho = radius_edge(pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0), pt(0.5, 3f64.sqrt() / 2.0, 0.0));
        assert!((rho - RHO_EQUILATERAL).abs() < 1e-12);
        // theta_min = 30 degrees => rho = 1.
        let theta: f64 = 30f64.to_radians();
        let tri = (
            pt(0.0, 0.0, 0.0),
            pt(1.0, 0.0, 0.0),
            pt(theta.cos() * theta.cos(), theta.cos() * theta.sin(), 0.0),
        );
        let rho = radius_edge(tri.0, tri.1, tri.2);
        assert!((rho - 1.0).abs() < 1e-9, "rho = {rho}");
        // Needle.
        let rho = radius_edge(pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0), pt(0.5, 1e-3, 0.0));
        assert!(rho > 100.0);
        // Degenerate.
        assert!(radius_edge(pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0), pt(2.0, 0.0, 0.0)).is_infinite());
    }

    #[test]
    fn insphere_orient_consistency_brute_force() {
        // For every Delaunay tet of a small random set, no other point is inside.
        // Pinned pseudo-random points (LCG) keep the test deterministic.
        let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let pts: Vec<Point3> = (0..24).map(|_| pt(next(), next(), next())).collect();
        let n = pts.len();
        let mut delaunay_tets = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    for l in (k + 1)..n {
                        if orient3d(pts[i], pts[j], pts[k], pts[l]) == 0 {
                            continue;
                        }
                        let empty = (0..n)
                            .filter(|m| ![i, j, k, l].contains(m))
                            .all(|m| {
                                insphere(pts[i], pts[j], pts[k], pts[l], pts[m]).unwrap() <= 0
                            });
                        if empty {
                            delaunay_tets += 1;
                        }
                    }
                }
            }
        }
        assert!(delaunay_tets > 0);
    }
}
