//! Small toolbox of spherical geometry on the unit sphere `S²`.
//!
//! Loops are closed polylines whose consecutive vertices are joined by the
//! minor great-circle arc. The region "of" a loop is the one on its left when
//! the sphere is viewed from outside.

use std::f64::consts::PI;

use nalgebra::Unit;
use rand::Rng;

use crate::Vec3;

pub const FOUR_PI: f64 = 4.0 * PI;

/// Right-handed orthonormal frame `(v0, v1, v2 = v0 × v1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Basis {
    pub v0: Vec3,
    pub v1: Vec3,
    pub v2: Vec3,
}

impl Basis {
    /// Frame from an axis and a reference direction; `v1` is re-orthogonalised
    /// against `v0` and both are normalised.
    pub fn new(v0: Vec3, v1: Vec3) -> Self {
        let v0 = v0.normalize();
        let v1 = (v1 - v0 * v0.dot(&v1)).normalize();
        Basis { v0, v1, v2: v0.cross(&v1) }
    }

    /// Frame about `v0` with a deterministic reference direction.
    pub fn about(v0: Vec3) -> Self {
        Basis::new(v0, any_perpendicular(&v0))
    }

    pub fn standard() -> Self {
        Basis { v0: Vec3::x(), v1: Vec3::y(), v2: Vec3::z() }
    }

    /// `sinθ·v0 + cosθ·(cosφ·v1 + sinφ·v2)`: the point at latitude `θ` on the
    /// meridian half-plane `A_φ`.
    pub fn meridian_point(&self, theta: f64, phi: f64) -> Vec3 {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        self.v0 * st + (self.v1 * cp + self.v2 * sp) * ct
    }

    /// Coordinates `(α, β, γ)` of `x` in this frame.
    pub fn coords(&self, x: &Vec3) -> Vec3 {
        Vec3::new(x.dot(&self.v0), x.dot(&self.v1), x.dot(&self.v2))
    }

    pub fn from_coords(&self, c: &Vec3) -> Vec3 {
        self.v0 * c.x + self.v1 * c.y + self.v2 * c.z
    }

    /// Meridian angle `φ ∈ [0, 2π)` of a direction.
    pub fn azimuth(&self, x: &Vec3) -> f64 {
        let a = x.dot(&self.v2).atan2(x.dot(&self.v1));
        if a < 0.0 {
            a + 2.0 * PI
        } else {
            a
        }
    }

    pub fn rotated(&self, rot: &nalgebra::UnitQuaternion<f64>) -> Self {
        Basis { v0: rot * self.v0, v1: rot * self.v1, v2: rot * self.v2 }
    }
}

/// A unit vector orthogonal to `v`, chosen against the least aligned axis.
pub fn any_perpendicular(v: &Vec3) -> Vec3 {
    let a = v.abs();
    let e = if a.x <= a.y && a.x <= a.z {
        Vec3::x()
    } else if a.y <= a.z {
        Vec3::y()
    } else {
        Vec3::z()
    };
    e.cross(v).normalize()
}

/// Angle between two vectors in `[0, π]`, accurate for small angles.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Uniform random point on `S²`.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n2 = v.norm_squared();
        if n2 > 1e-6 && n2 <= 1.0 {
            return v / n2.sqrt();
        }
    }
}

/// Random rotation whose angle is uniform in `[0, max_angle]` about a uniform
/// random axis.
pub fn random_rotation<R: Rng + ?Sized>(
    rng: &mut R,
    max_angle: f64,
) -> nalgebra::UnitQuaternion<f64> {
    let axis = Unit::new_normalize(random_unit(rng));
    let angle = rng.random_range(0.0..=max_angle);
    nalgebra::UnitQuaternion::from_axis_angle(&axis, angle)
}

/// Signed area of the geodesic triangle `(a, b, c)` (positive when
/// counter-clockwise seen from outside).
pub fn triangle_excess(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let num = a.dot(&b.cross(c));
    let den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * num.atan2(den)
}

/// Signed turning angle at `b` when walking `a → b → c` along geodesics
/// (positive = left turn).
pub fn turning_angle(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let d_in = b * a.dot(b) - a;
    let d_out = c - b * b.dot(c);
    d_in.cross(&d_out).dot(b).atan2(d_in.dot(&d_out))
}

/// Area of the region to the left of a closed geodesic polygon, by
/// Gauss–Bonnet: `2π − Σ turning angles`. Repeated vertices are skipped.
pub fn geodesic_loop_area(points: &[Vec3]) -> f64 {
    let pts = dedup_loop(points);
    let m = pts.len();
    if m < 3 {
        // A degenerate loop encloses nothing on its left or everything; the
        // caller never produces those for real faces.
        return 0.0;
    }
    let mut turn = 0.0;
    for k in 0..m {
        let a = &pts[(k + m - 1) % m];
        let b = &pts[k];
        let c = &pts[(k + 1) % m];
        turn += turning_angle(a, b, c);
    }
    2.0 * PI - turn
}

fn dedup_loop(points: &[Vec3]) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = Vec::with_capacity(points.len());
    for p in points {
        if out.last().is_none_or(|q| (p - q).norm() > 1e-15) {
            out.push(*p);
        }
    }
    while out.len() > 1 && (out[0] - out[out.len() - 1]).norm() <= 1e-15 {
        out.pop();
    }
    out
}

/// Signed area between the chord `p → q` and the small-circle arc leaving `p`
/// with unit tangent `tp` and passing through `q`.
///
/// Positive when the arc bends left (so the arc runs to the right of the
/// chord and the region left of the arc is larger than the one left of the
/// chord). Exact when the true curve is a circle.
pub fn circular_lens(p: &Vec3, tp: &Vec3, q: &Vec3) -> f64 {
    let w = 1.0 - p.dot(q);
    if w <= 0.0 {
        return 0.0;
    }
    let n = p.cross(tp);
    let c = n.dot(q);
    if c.abs() < 1e-300 {
        return 0.0;
    }
    let sigma = c.signum();
    let rho = w.atan2(c.abs());
    let (sr, cr) = rho.sin_cos();
    let centre = p * cr + n * (sigma * sr);
    let pc = p - centre * cr;
    let qc = q - centre * centre.dot(q);
    let sweep = pc.cross(&qc).dot(&centre).atan2(pc.dot(&qc)).abs();
    let sector = sweep * (1.0 - cr);
    let tri = triangle_excess(&centre, p, q).abs();
    sigma * (sector - tri)
}

/// Area of the region to the left of a closed smooth loop given by samples
/// `(point, unit tangent along the direction of travel)`.
///
/// The geodesic polygon through the samples is corrected segment by segment
/// by the average of the two circular lenses fitted at either end.
pub fn smooth_loop_area(samples: &[(Vec3, Vec3)]) -> f64 {
    let points: Vec<Vec3> = samples.iter().map(|s| s.0).collect();
    let mut area = geodesic_loop_area(&points);
    let m = samples.len();
    if m < 2 {
        return area;
    }
    for k in 0..m {
        let (p, tp) = &samples[k];
        let (q, tq) = &samples[(k + 1) % m];
        area += lens_correction(p, tp, q, tq);
    }
    area
}

/// Lens correction of one curve segment `p → q` with end tangents.
pub fn lens_correction(p: &Vec3, tp: &Vec3, q: &Vec3, tq: &Vec3) -> f64 {
    if (p - q).norm() <= 1e-15 {
        return 0.0;
    }
    0.5 * (circular_lens(p, tp, q) - circular_lens(q, &(-tq), p))
}

/// Sum of signed triangle areas `(pole, a_k, a_{k+1})` around a loop: the
/// area of the region bounded by the loop that avoids `−pole`, signed by
/// orientation.
pub fn pole_solid_angle(pole: &Vec3, points: &[Vec3]) -> f64 {
    let m = points.len();
    let mut s = 0.0;
    for k in 0..m {
        s += triangle_excess(pole, &points[k], &points[(k + 1) % m]);
    }
    s
}

/// Whether `y` lies in the region left of the closed polyline, whose left
/// area (as computed by [`geodesic_loop_area`]) is `left_area`.
///
/// Uses the signed solid angle about the antipode `−y`: it equals
/// `left_area` when `y` is outside and `left_area − 4π` when inside.
pub fn loop_contains(y: &Vec3, points: &[Vec3], left_area: f64) -> bool {
    loop_containment_margin(y, points, left_area) < -2.0 * PI
}

/// `pole_solid_angle(−y) − left_area`, which is ≈ 0 outside and ≈ −4π inside.
pub fn loop_containment_margin(y: &Vec3, points: &[Vec3], left_area: f64) -> f64 {
    pole_solid_angle(&(-y), points) - left_area
}

/// Intersection of the minor arcs `a0→a1` and `b0→b1`.
///
/// Returns the crossing point and the fractions of arc angle from `a0` and
/// `b0`. End points are treated half-open (`[start, end)`) so that crossings
/// at shared polyline vertices are reported once.
pub fn arc_intersection(a0: &Vec3, a1: &Vec3, b0: &Vec3, b1: &Vec3) -> Option<(Vec3, f64, f64)> {
    let na = a0.cross(a1);
    let nb = b0.cross(b1);
    let sb0 = na.dot(b0);
    let sb1 = na.dot(b1);
    let sa0 = nb.dot(a0);
    let sa1 = nb.dot(a1);
    if !straddles(sb0, sb1) || !straddles(sa0, sa1) {
        return None;
    }
    let dir = na.cross(&nb);
    let len = dir.norm();
    if len == 0.0 {
        return None;
    }
    let mut x = dir / len;
    if x.dot(&(a0 + a1)) < 0.0 {
        x = -x;
    }
    if x.dot(&(b0 + b1)) <= 0.0 {
        return None;
    }
    let fa = sa0 / (sa0 - sa1);
    let fb = sb0 / (sb0 - sb1);
    Some((x, fa.clamp(0.0, 1.0), fb.clamp(0.0, 1.0)))
}

// A zero side value counts as positive, which makes shared end points
// half-open.
fn straddles(s0: f64, s1: f64) -> bool {
    (s0 >= 0.0) != (s1 >= 0.0)
}

/// Angular distance from `y` to the minor arc `a → b`.
pub fn distance_to_arc(y: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let n = a.cross(b);
    let nn = n.norm();
    if nn < 1e-15 {
        return angle_between(y, a);
    }
    let n = n / nn;
    let proj = y - n * n.dot(y);
    let pn = proj.norm();
    if pn > 1e-15 {
        let foot = proj / pn;
        // foot lies on the arc when it is between a and b.
        if a.cross(&foot).dot(&n) >= 0.0 && foot.cross(b).dot(&n) >= 0.0 {
            return n.dot(y).abs().asin();
        }
    }
    angle_between(y, a).min(angle_between(y, b))
}

/// Smallest angular distance from `y` to a closed polyline.
pub fn distance_to_loop(y: &Vec3, points: &[Vec3]) -> f64 {
    let m = points.len();
    (0..m)
        .map(|k| distance_to_arc(y, &points[k], &points[(k + 1) % m]))
        .fold(f64::INFINITY, f64::min)
}

/// Area of the spherical cap `{ω : ω·axis > sin(latitude)}`.
pub fn cap_area(latitude: f64) -> f64 {
    2.0 * PI * (1.0 - latitude.sin())
}
