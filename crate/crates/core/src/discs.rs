//! Closed discs on the sphere bounded by C¹ Jordan curves.
//!
//! Every boundary is a graph over the meridian angle `φ` of its own frame:
//! the point at `φ` lies on the half-plane `A_φ`, and the interior (the side
//! containing the frame axis) is on the left of the direction of increasing
//! `φ`. Boundaries are stored as dense polylines; metric refinements go back
//! to the generator.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{self, BufRead, Write};

use nalgebra::{Quaternion, UnitQuaternion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{Body, ModelFunction, ModelSpec};
use crate::preseam::{
    solve_sample, trace_placed, trace_preseam, PairDescriptor, PlacedPair, PreseamCurve,
    PreseamError, TracePolicy,
};
use crate::sphere::{
    angle_between, arc_intersection, geodesic_loop_area, loop_contains, random_rotation,
    smooth_loop_area, Basis,
};
use crate::{Exec, Vec3};

/// Crossings whose tangents meet at a smaller angle count as tangential.
pub const EPS_ANGLE: f64 = 1e-6;
/// Crossings of different pairs closer than this violate general position.
pub const TRIPLE_TOLERANCE: f64 = 1e-9;
/// Margin kept from the poles of a synthetic boundary.
pub const POLE_MARGIN: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscError {
    #[error("boundary is not simple: {0}")]
    NotSimple(String),
    #[error(transparent)]
    Preseam(#[from] PreseamError),
    #[error("tangential contact between discs {a} and {b} (angle {angle:e} rad)")]
    TangentialContact { a: usize, b: usize, angle: f64 },
    #[error("odd number of crossings ({count}) between discs {a} and {b}")]
    OddCrossings { a: usize, b: usize, count: usize },
    #[error("crossing refinement failed between discs {a} and {b}")]
    Refinement { a: usize, b: usize },
    #[error("no general position after {attempts} perturbation attempts")]
    GiveUp { attempts: usize },
    #[error("bad disc record: {0}")]
    Record(String),
}

/// One Fourier term `amplitude·cos(k·φ + phase)` of a synthetic boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fourier {
    pub k: u32,
    pub amplitude: f64,
    pub phase: f64,
}

/// Where a boundary comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    /// Pre-seam of a placed pair traced in `basis`; the interior is the
    /// hidden side `ωᵀq(ω) > 0` of body 0.
    Preseam { pair: PlacedPair, basis: Basis },
    /// Latitude `θ(φ) = base + Σ a·cos(kφ + phase)` in `basis`.
    Synthetic { base: f64, coefficients: Vec<Fourier>, basis: Basis },
}

impl Generator {
    fn basis(&self) -> Basis {
        match self {
            Generator::Preseam { basis, .. } | Generator::Synthetic { basis, .. } => *basis,
        }
    }

    /// Point and `d/dφ` in the generator's own placement.
    fn sample(&self, phi: f64) -> Result<(Vec3, Vec3), PreseamError> {
        match self {
            Generator::Preseam { pair, basis } => {
                let s = solve_sample(pair, basis, phi)?;
                Ok((s.point, s.tangent))
            }
            Generator::Synthetic { base, coefficients, basis } => {
                let (theta, dtheta) = synthetic_latitude(*base, coefficients, phi);
                let (st, ct) = theta.sin_cos();
                let (sp, cp) = phi.sin_cos();
                let radial = basis.v1 * cp + basis.v2 * sp;
                let point = basis.v0 * st + radial * ct;
                let tangent = (basis.v0 * ct - radial * st) * dtheta + (basis.v2 * cp - basis.v1 * sp) * ct;
                Ok((point, tangent))
            }
        }
    }
}

fn synthetic_latitude(base: f64, coefficients: &[Fourier], phi: f64) -> (f64, f64) {
    let mut theta = base;
    let mut dtheta = 0.0;
    for c in coefficients {
        let arg = c.k as f64 * phi + c.phase;
        theta += c.amplitude * arg.cos();
        dtheta -= c.amplitude * c.k as f64 * arg.sin();
    }
    (theta, dtheta)
}

/// A boundary sample: meridian angle, point and `d/dφ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySample {
    pub phi: f64,
    pub point: Vec3,
    pub tangent: Vec3,
}

/// A closed disc on `S²` with its interior on the left of the boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct SphericalDisc {
    pub label: usize,
    pub generator: Generator,
    /// Extra rigid rotation applied on top of the generator.
    pub rotation: UnitQuaternion<f64>,
    /// Generator frame after [`SphericalDisc::rotation`].
    pub frame: Basis,
    /// Samples at increasing `φ ∈ [0, 2π)`.
    pub samples: Vec<BoundarySample>,
    /// Area of the geodesic polygon through the samples.
    pub polygon_area: f64,
    /// Area with the circular-lens correction of every segment.
    pub area: f64,
}

impl SphericalDisc {
    fn from_samples(label: usize, generator: Generator, samples: Vec<BoundarySample>) -> Self {
        let frame = generator.basis();
        let mut d = SphericalDisc {
            label,
            generator,
            rotation: UnitQuaternion::identity(),
            frame,
            samples,
            polygon_area: 0.0,
            area: 0.0,
        };
        d.update_areas();
        d
    }

    fn update_areas(&mut self) {
        let points = self.points();
        self.polygon_area = geodesic_loop_area(&points);
        let with_tangents: Vec<(Vec3, Vec3)> =
            self.samples.iter().map(|s| (s.point, s.tangent.normalize())).collect();
        self.area = smooth_loop_area(&with_tangents);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn points(&self) -> Vec<Vec3> {
        self.samples.iter().map(|s| s.point).collect()
    }

    /// Point and `d/dφ` on the smooth boundary, re-queried from the generator.
    pub fn evaluate(&self, phi: f64) -> Result<(Vec3, Vec3), PreseamError> {
        let (p, t) = self.generator.sample(phi.rem_euclid(2.0 * PI))?;
        Ok((self.rotation * p, self.rotation * t))
    }

    /// Copy rotated rigidly by `rot` (composed with any earlier rotation).
    pub fn rotated(&self, rot: &UnitQuaternion<f64>) -> Self {
        let mut d = self.clone();
        d.rotation = rot * self.rotation;
        d.frame = self.frame.rotated(rot);
        for s in &mut d.samples {
            s.point = rot * s.point;
            s.tangent = rot * s.tangent;
        }
        d.update_areas();
        d
    }

    /// Index `k` of the polyline segment `k → k+1` that spans meridian `phi`.
    pub fn segment_at(&self, phi: f64) -> usize {
        let phi = phi.rem_euclid(2.0 * PI);
        let idx = self.samples.partition_point(|s| s.phi <= phi);
        if idx == 0 {
            self.samples.len() - 1
        } else {
            idx - 1
        }
    }

    /// Point-in-disc test against the boundary polygon, using the meridian of
    /// `y` in the disc's frame.
    pub fn contains(&self, y: &Vec3) -> bool {
        self.side(y) > 0.0
    }

    /// Signed side value of `y`: positive inside the polygon, negative
    /// outside, zero on the boundary.
    pub fn side(&self, y: &Vec3) -> f64 {
        let c = self.frame.coords(y);
        if c.y == 0.0 && c.z == 0.0 {
            return c.x;
        }
        let k = self.segment_at(self.frame.azimuth(y));
        let a = self.samples[k].point;
        let b = self.samples[(k + 1) % self.samples.len()].point;
        a.cross(&b).dot(y)
    }

    /// Point-in-disc test by the signed solid angle (winding) of the boundary
    /// about `y`; agrees with [`SphericalDisc::contains`].
    pub fn winding_contains(&self, y: &Vec3) -> bool {
        loop_contains(y, &self.points(), self.polygon_area)
    }

    /// A point just left of the boundary midpoint of segment `k`.
    pub fn interior_probe(&self, k: usize, offset: f64) -> Vec3 {
        let a = self.samples[k].point;
        let b = self.samples[(k + 1) % self.samples.len()].point;
        let mid = (a + b).normalize();
        let left = mid.cross(&(b - a)).normalize();
        (mid + left * offset).normalize()
    }

    /// Largest distance from a sample of `self` to the polyline of `other`
    /// and back (sampled Hausdorff distance).
    pub fn hausdorff(&self, other: &SphericalDisc) -> f64 {
        let pa = self.points();
        let pb = other.points();
        let one = |from: &[Vec3], to: &[Vec3]| {
            from.iter().map(|p| crate::sphere::distance_to_loop(p, to)).fold(0.0, f64::max)
        };
        one(&pa, &pb).max(one(&pb, &pa))
    }

    /// Fixture record of this disc.
    pub fn to_record(&self) -> DiscRecord {
        let q = self.rotation.quaternion();
        let rotation = [q.w, q.i, q.j, q.k];
        match &self.generator {
            Generator::Synthetic { base, coefficients, basis } => DiscRecord::Synthetic {
                label: self.label,
                base_latitude: *base,
                coefficients: coefficients.clone(),
                frame: [vec_arr(&basis.v0), vec_arr(&basis.v1)],
                rotation,
            },
            Generator::Preseam { pair, basis } => DiscRecord::Hidden {
                label: self.label,
                body0: BodyRecord::of(&pair.body0),
                body1: BodyRecord::of(&pair.body1),
                frame: [vec_arr(&basis.v0), vec_arr(&basis.v1)],
                rotation,
            },
        }
    }
}

fn vec_arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn arr_vec(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

/// Closed disc of directions hidden from body 0 by body 1.
pub fn hidden_disc(desc: &PairDescriptor, policy: &TracePolicy, label: usize) -> Result<SphericalDisc, DiscError> {
    Ok(from_curve(trace_preseam(desc, policy)?, label))
}

/// Same as [`hidden_disc`] for a pair already placed, traced in `basis`.
pub fn hidden_disc_placed(
    pair: PlacedPair,
    basis: Basis,
    policy: &TracePolicy,
    label: usize,
) -> Result<SphericalDisc, DiscError> {
    Ok(from_curve(trace_placed(pair, basis, policy)?, label))
}

fn from_curve(curve: PreseamCurve, label: usize) -> SphericalDisc {
    let samples = curve
        .samples
        .iter()
        .map(|s| BoundarySample { phi: s.phi, point: s.point, tangent: s.tangent })
        .collect();
    SphericalDisc::from_samples(label, Generator::Preseam { pair: curve.pair, basis: curve.basis }, samples)
}

/// Synthetic disc above the latitude curve `θ(φ)` about `rotation·e_z`.
pub fn synthetic_disc(
    base_latitude: f64,
    coefficients: &[Fourier],
    rotation: UnitQuaternion<f64>,
    label: usize,
) -> Result<SphericalDisc, DiscError> {
    let basis = Basis { v0: Vec3::z(), v1: Vec3::x(), v2: Vec3::y() }.rotated(&rotation);
    synthetic_in_frame(base_latitude, coefficients, basis, label)
}

fn synthetic_in_frame(
    base: f64,
    coefficients: &[Fourier],
    basis: Basis,
    label: usize,
) -> Result<SphericalDisc, DiscError> {
    let bound = base.abs() + coefficients.iter().map(|c| c.amplitude.abs()).sum::<f64>();
    if bound >= FRAC_PI_2 - POLE_MARGIN {
        // The bound is attained only when the phases line up; sample to decide.
        let worst = (0..4096)
            .map(|k| synthetic_latitude(base, coefficients, 2.0 * PI * k as f64 / 4096.0).0.abs())
            .fold(0.0, f64::max);
        if worst >= FRAC_PI_2 - POLE_MARGIN {
            return Err(DiscError::NotSimple(format!(
                "latitude reaches {worst:.4} rad, beyond the pole margin"
            )));
        }
    }
    let generator = Generator::Synthetic { base, coefficients: coefficients.to_vec(), basis };
    let samples = sample_adaptive(&generator, &TracePolicy { initial: 256, ..TracePolicy::default() })?;
    let disc = SphericalDisc::from_samples(label, generator, samples);
    if let Some((a, b)) = self_intersection(&disc.points()) {
        return Err(DiscError::NotSimple(format!("segments {a} and {b} cross")));
    }
    Ok(disc)
}

fn sample_adaptive(generator: &Generator, policy: &TracePolicy) -> Result<Vec<BoundarySample>, PreseamError> {
    let n = policy.initial.max(3);
    let eval = |phi: f64| generator.sample(phi).map(|(point, tangent)| BoundarySample { phi, point, tangent });
    let mut samples: Vec<BoundarySample> =
        (0..n).map(|k| eval(2.0 * PI * k as f64 / n as f64)).collect::<Result<_, _>>()?;
    while samples.len() < policy.max_samples {
        let m = samples.len();
        let mut out = Vec::with_capacity(2 * m);
        let mut added = 0;
        for k in 0..m {
            out.push(samples[k]);
            let b = &samples[(k + 1) % m];
            if m + added < policy.max_samples && angle_between(&samples[k].tangent, &b.tangent) > policy.max_turn {
                let end = if k + 1 == m { 2.0 * PI } else { b.phi };
                out.push(eval(0.5 * (samples[k].phi + end))?);
                added += 1;
            }
        }
        samples = out;
        if added == 0 {
            break;
        }
    }
    Ok(samples)
}

/// Spatial hash of polyline segments by their (slightly inflated) bounding
/// boxes in `R³`.
struct SegmentGrid {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl SegmentGrid {
    fn new(points: &[Vec3], cell: f64) -> Self {
        let mut g = SegmentGrid { cell, cells: HashMap::new() };
        let m = points.len();
        for k in 0..m {
            let (lo, hi) = g.range(&points[k], &points[(k + 1) % m]);
            for i in lo.0..=hi.0 {
                for j in lo.1..=hi.1 {
                    for l in lo.2..=hi.2 {
                        g.cells.entry((i, j, l)).or_default().push(k);
                    }
                }
            }
        }
        g
    }

    fn range(&self, a: &Vec3, b: &Vec3) -> ((i64, i64, i64), (i64, i64, i64)) {
        // An arc bulges outward from its chord by at most chord²/8.
        let pad = (a - b).norm_squared() * 0.125 + 1e-9;
        let lo = a.inf(b).add_scalar(-pad) / self.cell;
        let hi = a.sup(b).add_scalar(pad) / self.cell;
        (
            (lo.x.floor() as i64, lo.y.floor() as i64, lo.z.floor() as i64),
            (hi.x.floor() as i64, hi.y.floor() as i64, hi.z.floor() as i64),
        )
    }

    /// Segments of the grid whose cells meet the box of `a → b`, sorted.
    fn candidates(&self, a: &Vec3, b: &Vec3) -> Vec<usize> {
        let (lo, hi) = self.range(a, b);
        let mut out = Vec::new();
        for i in lo.0..=hi.0 {
            for j in lo.1..=hi.1 {
                for l in lo.2..=hi.2 {
                    if let Some(v) = self.cells.get(&(i, j, l)) {
                        out.extend_from_slice(v);
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn max_chord(points: &[Vec3]) -> f64 {
    let m = points.len();
    (0..m).map(|k| (points[k] - points[(k + 1) % m]).norm()).fold(0.0, f64::max)
}

/// Crossings between the polylines `p` and `q` as `(segment of p, fraction,
/// segment of q, fraction, point)`.
pub fn polyline_crossings(p: &[Vec3], q: &[Vec3]) -> Vec<(usize, f64, usize, f64, Vec3)> {
    let cell = max_chord(p).max(max_chord(q)).max(1e-3);
    let grid = SegmentGrid::new(q, cell);
    let mut out = Vec::new();
    let (mp, mq) = (p.len(), q.len());
    for i in 0..mp {
        let (a0, a1) = (&p[i], &p[(i + 1) % mp]);
        for j in grid.candidates(a0, a1) {
            if let Some((x, fa, fb)) = arc_intersection(a0, a1, &q[j], &q[(j + 1) % mq]) {
                out.push((i, fa, j, fb, x));
            }
        }
    }
    out
}

/// First pair of non-adjacent crossing segments of a closed polyline.
pub fn self_intersection(points: &[Vec3]) -> Option<(usize, usize)> {
    let m = points.len();
    let grid = SegmentGrid::new(points, max_chord(points).max(1e-3));
    for i in 0..m {
        let (a0, a1) = (&points[i], &points[(i + 1) % m]);
        for j in grid.candidates(a0, a1) {
            if j <= i + 1 || (i == 0 && j == m - 1) {
                continue;
            }
            if arc_intersection(a0, a1, &points[j], &points[(j + 1) % m]).is_some() {
                return Some((i, j));
            }
        }
    }
    None
}

/// A refined crossing of two boundaries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossingPoint {
    pub position: Vec3,
    /// Meridian parameters on the first and second boundary.
    pub params: (f64, f64),
    /// Polyline segments holding the crossing on each boundary.
    pub segments: (usize, usize),
    /// Angle between the tangents, folded into `[0, π/2]`.
    pub angle: f64,
    pub transversal: bool,
    /// `+1` when the second boundary crosses the first from right to left.
    pub sign: i8,
}

fn param_on(d: &SphericalDisc, seg: usize, frac: f64) -> f64 {
    let a = d.samples[seg].phi;
    let b = if seg + 1 == d.samples.len() { 2.0 * PI } else { d.samples[seg + 1].phi };
    a + frac * (b - a)
}

fn circular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Refines `s1(φ1) = s2(φ2)` by Gauss–Newton from a polyline crossing.
fn refine(d1: &SphericalDisc, d2: &SphericalDisc, mut u: f64, mut v: f64) -> Option<(f64, f64, Vec3, Vec3, Vec3)> {
    let mut last = f64::INFINITY;
    for _ in 0..40 {
        let (p, tp) = d1.evaluate(u).ok()?;
        let (q, tq) = d2.evaluate(v).ok()?;
        let f = p - q;
        let r = f.norm();
        if r < 1e-13 || (r < 1e-11 && r >= last) {
            return Some((u.rem_euclid(2.0 * PI), v.rem_euclid(2.0 * PI), (p + q).normalize(), tp, tq));
        }
        last = r;
        // J = [tp, −tq]; solve (JᵀJ)Δ = −Jᵀf.
        let a11 = tp.dot(&tp);
        let a12 = -tp.dot(&tq);
        let a22 = tq.dot(&tq);
        let b1 = -tp.dot(&f);
        let b2 = tq.dot(&f);
        let det = a11 * a22 - a12 * a12;
        if det.abs() < 1e-300 {
            return None;
        }
        let du = (b1 * a22 - a12 * b2) / det;
        let dv = (a11 * b2 - a12 * b1) / det;
        let cap = 0.1;
        let scale = (cap / du.abs().max(dv.abs())).min(1.0);
        u += du * scale;
        v += dv * scale;
    }
    None
}

/// All crossings between the boundaries of two discs, ordered by the
/// parameter on the first.
pub fn curve_intersections(d1: &SphericalDisc, d2: &SphericalDisc) -> Result<Vec<CrossingPoint>, DiscError> {
    let raw = polyline_crossings(&d1.points(), &d2.points());
    let mut out: Vec<CrossingPoint> = Vec::with_capacity(raw.len());
    for (i, fa, j, fb, _) in raw {
        let (u, v, x, tp, tq) = refine(d1, d2, param_on(d1, i, fa), param_on(d2, j, fb))
            .ok_or(DiscError::Refinement { a: d1.label, b: d2.label })?;
        if out.iter().any(|c| circular_gap(c.params.0, u) < 1e-8 && circular_gap(c.params.1, v) < 1e-8) {
            continue;
        }
        let raw_angle = angle_between(&tp, &tq);
        let angle = raw_angle.min(PI - raw_angle);
        let transversal = angle > EPS_ANGLE;
        if !transversal {
            return Err(DiscError::TangentialContact { a: d1.label, b: d2.label, angle });
        }
        let sign = if tp.cross(&tq).dot(&x) > 0.0 { 1 } else { -1 };
        out.push(CrossingPoint {
            position: x,
            params: (u, v),
            segments: (d1.segment_at(u), d2.segment_at(v)),
            angle,
            transversal,
            sign,
        });
    }
    if out.len() % 2 == 1 {
        return Err(DiscError::OddCrossings { a: d1.label, b: d2.label, count: out.len() });
    }
    out.sort_by(|a, b| a.params.0.total_cmp(&b.params.0));
    Ok(out)
}

/// Crossings of every pair `i < j`, in lexicographic pair order.
pub type PairCrossings = Vec<((usize, usize), Vec<CrossingPoint>)>;

/// Crossings for all pairs of discs (by index in `discs`).
pub fn all_crossings(discs: &[SphericalDisc], exec: Exec) -> Result<PairCrossings, DiscError> {
    let pairs: Vec<(usize, usize)> =
        (0..discs.len()).flat_map(|i| (i + 1..discs.len()).map(move |j| (i, j))).collect();
    let lists = exec.try_map(&pairs, |&(i, j)| curve_intersections(&discs[i], &discs[j]))?;
    Ok(pairs.into_iter().zip(lists).collect())
}

/// First pair of crossings of different disc pairs closer than
/// [`TRIPLE_TOLERANCE`].
pub fn triple_point(crossings: &PairCrossings) -> Option<Vec3> {
    let pts: Vec<(usize, Vec3)> = crossings
        .iter()
        .enumerate()
        .flat_map(|(k, (_, list))| list.iter().map(move |c| (k, c.position)))
        .collect();
    let cell = 1e-6;
    let key = |p: &Vec3| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (idx, (_, p)) in pts.iter().enumerate() {
        grid.entry(key(p)).or_default().push(idx);
    }
    for (idx, (k, p)) in pts.iter().enumerate() {
        let (x, y, z) = key(p);
        for i in x - 1..=x + 1 {
            for j in y - 1..=y + 1 {
                for l in z - 1..=z + 1 {
                    for &other in grid.get(&(i, j, l)).map(|v| v.as_slice()).unwrap_or(&[]) {
                        if other != idx && pts[other].0 != *k && (pts[other].1 - p).norm() < TRIPLE_TOLERANCE {
                            return Some(*p);
                        }
                    }
                }
            }
        }
    }
    None
}

/// Whether to rotate discs that are already in general position.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbPolicy {
    /// Always apply a fresh random rotation to every disc.
    #[default]
    Always,
    /// Return the input unchanged when it is already in general position.
    WhenNeeded,
}

/// Discs in general position with their pairwise crossings.
#[derive(Clone, Debug)]
pub struct GeneralPosition {
    pub discs: Vec<SphericalDisc>,
    pub crossings: PairCrossings,
    /// Rotation cap of the successful attempt (zero when nothing was rotated).
    pub magnitude: f64,
    pub attempts: usize,
}

pub const INITIAL_ROTATION: f64 = 1e-4;
pub const MAX_ROTATION: f64 = 1e-2;
pub const MAX_ATTEMPTS: usize = 20;

/// Angular tolerance under which two boundaries count as the same curve.
pub const COINCIDENCE_TOLERANCE: f64 = 1e-9;

/// Relation of two discs whose boundaries coincide.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coincidence {
    /// Same curve, same interior.
    Equal,
    /// Same curve, opposite interiors: together they cover the sphere.
    Complementary,
}

/// Whether every sample of `b` lies on the smooth boundary of `a` within
/// `tol` radians, and if so how the interiors relate. The boundary of `a`
/// is queried on the meridian of each sample, so the test is exact up to
/// the curve solver rather than the polyline spacing.
pub fn coincidence(a: &SphericalDisc, b: &SphericalDisc, tol: f64) -> Result<Option<Coincidence>, DiscError> {
    // Chords sag by far less than this at any sampling we produce.
    const QUICK_REJECT: f64 = 1e-2;
    if b.samples.iter().any(|s| a.side(&s.point).abs() > QUICK_REJECT) {
        return Ok(None);
    }
    let mut agree = 0usize;
    for s in &b.samples {
        let (p, t) = a.evaluate(a.frame.azimuth(&s.point))?;
        if angle_between(&p, &s.point) > tol {
            return Ok(None);
        }
        if t.dot(&s.tangent) > 0.0 {
            agree += 1;
        }
    }
    Ok(Some(if 2 * agree > b.samples.len() { Coincidence::Equal } else { Coincidence::Complementary }))
}

/// Rotates every disc by an independent random rotation of angle at most
/// 1e−4 rad and retries, doubling the cap up to 1e−2 rad, until all crossings
/// are transversal and no two crossings of different pairs coincide.
pub fn perturb_general_position(discs: &[SphericalDisc], seed: u64) -> Result<Vec<SphericalDisc>, DiscError> {
    Ok(general_position(discs, seed, PerturbPolicy::Always, Exec::default())?.discs)
}

pub fn general_position(
    discs: &[SphericalDisc],
    seed: u64,
    policy: PerturbPolicy,
    exec: Exec,
) -> Result<GeneralPosition, DiscError> {
    let check = |ds: &[SphericalDisc]| -> Option<PairCrossings> {
        let c = all_crossings(ds, exec).ok()?;
        triple_point(&c).is_none().then_some(c)
    };
    if policy == PerturbPolicy::WhenNeeded {
        if let Some(crossings) = check(discs) {
            return Ok(GeneralPosition { discs: discs.to_vec(), crossings, magnitude: 0.0, attempts: 0 });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cap = INITIAL_ROTATION;
    for attempt in 1..=MAX_ATTEMPTS {
        let rotated: Vec<SphericalDisc> =
            discs.iter().map(|d| d.rotated(&random_rotation(&mut rng, cap))).collect();
        if let Some(crossings) = check(&rotated) {
            return Ok(GeneralPosition { discs: rotated, crossings, magnitude: cap, attempts: attempt });
        }
        cap = (cap * 2.0).min(MAX_ROTATION);
    }
    Err(DiscError::GiveUp { attempts: MAX_ATTEMPTS })
}

/// Model and translation of a body inside a disc record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyRecord {
    pub model: ModelSpec,
    pub translation: [f64; 3],
}

impl BodyRecord {
    pub fn of(body: &Body) -> Self {
        BodyRecord { model: body.model.to_spec(), translation: vec_arr(&body.translation) }
    }

    pub fn to_body(&self) -> Result<Body, DiscError> {
        let m = ModelFunction::from_spec(&self.model).map_err(|e| DiscError::Record(e.to_string()))?;
        Ok(Body::new(m, arr_vec(&self.translation)))
    }
}

/// One line of a disc fixture file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum DiscRecord {
    Synthetic {
        label: usize,
        base_latitude: f64,
        #[serde(default)]
        coefficients: Vec<Fourier>,
        /// Axis and reference direction of the generator frame.
        frame: [[f64; 3]; 2],
        /// Extra rotation `[w, x, y, z]`.
        rotation: [f64; 4],
    },
    Hidden {
        label: usize,
        body0: BodyRecord,
        body1: BodyRecord,
        frame: [[f64; 3]; 2],
        rotation: [f64; 4],
    },
}

impl DiscRecord {
    /// Rebuilds the disc (re-tracing hidden discs with `policy`).
    pub fn to_disc(&self, policy: &TracePolicy) -> Result<SphericalDisc, DiscError> {
        let (disc, rotation) = match self {
            DiscRecord::Synthetic { label, base_latitude, coefficients, frame, rotation } => {
                let basis = Basis::new(arr_vec(&frame[0]), arr_vec(&frame[1]));
                (synthetic_in_frame(*base_latitude, coefficients, basis, *label)?, rotation)
            }
            DiscRecord::Hidden { label, body0, body1, frame, rotation } => {
                let pair = PlacedPair { body0: body0.to_body()?, body1: body1.to_body()? };
                let basis = Basis::new(arr_vec(&frame[0]), arr_vec(&frame[1]));
                (hidden_disc_placed(pair, basis, policy, *label)?, rotation)
            }
        };
        let [w, x, y, z] = *rotation;
        let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
        Ok(if q.angle() == 0.0 { disc } else { disc.rotated(&q) })
    }
}

/// Writes one JSON record per line.
pub fn write_fixture<W: Write>(discs: &[SphericalDisc], mut w: W) -> io::Result<()> {
    for d in discs {
        serde_json::to_writer(&mut w, &d.to_record())?;
        writeln!(w)?;
    }
    Ok(())
}

/// Reads records written by [`write_fixture`]; blank lines are skipped.
pub fn read_fixture<R: BufRead>(r: R) -> Result<Vec<DiscRecord>, DiscError> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| DiscError::Record(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DiscError::Record(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::halton_direction;
    use crate::preseam::height_difference;
    use crate::sphere::cap_area;
    use nalgebra::Vector3;

    fn sphere(r: f64) -> ModelFunction {
        ModelFunction::sphere(r).unwrap()
    }

    fn great_circle(axis: Vec3, label: usize) -> SphericalDisc {
        let rot = UnitQuaternion::rotation_between(&Vec3::z(), &axis).unwrap_or_else(|| {
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI)
        });
        synthetic_disc(0.0, &[], rot, label).unwrap()
    }

    pub(crate) fn wiggly(label: usize, turn: f64) -> SphericalDisc {
        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), turn);
        synthetic_disc(0.0, &[Fourier { k: 2, amplitude: 0.3, phase: 0.0 }], rot, label).unwrap()
    }

    #[test]
    fn hidden_disc_areas() {
        let d = PairDescriptor::new(sphere(1.0), sphere(1.0), Vec3::x(), 3.0, Vec3::y()).unwrap();
        let disc = hidden_disc(&d, &TracePolicy::default(), 0).unwrap();
        assert!((disc.area - 2.0 * PI).abs() < 1e-6);
        assert!(disc.contains(&Vec3::x()) && !disc.contains(&-Vec3::x()));

        let d = PairDescriptor::new(sphere(1.0), sphere(0.5), Vec3::x(), 3.0, Vec3::y()).unwrap();
        let disc = hidden_disc(&d, &TracePolicy::default(), 0).unwrap();
        assert!((disc.area - cap_area((1.0f64 / 9.0).asin())).abs() < 1e-6);
        assert!((disc.area - 2.0 * PI * (1.0 - 1.0 / 9.0)).abs() < 1e-6);

        let rev = hidden_disc(&d.reversed(), &TracePolicy::default(), 1).unwrap();
        assert!(rev.contains(&-Vec3::x()) && !rev.contains(&Vec3::x()));
        assert!((rev.area - cap_area(-(1.0f64 / 9.0).asin())).abs() < 1e-6);
    }

    #[test]
    fn synthetic_examples() {
        let g = synthetic_disc(0.0, &[], UnitQuaternion::identity(), 0).unwrap();
        assert!((g.area - 2.0 * PI).abs() < 1e-9);
        let (a, b) = (wiggly(0, 0.0), wiggly(1, FRAC_PI_2));
        assert!(self_intersection(&a.points()).is_none());
        assert_eq!(curve_intersections(&a, &b).unwrap().len(), 4);
        let bad = synthetic_disc(0.1, &[Fourier { k: 2, amplitude: 1.5, phase: 0.0 }], UnitQuaternion::identity(), 0);
        assert!(matches!(bad, Err(DiscError::NotSimple(_))));
    }

    #[test]
    fn great_circle_crossings() {
        let a = great_circle(Vec3::z(), 0);
        let b = great_circle(Vec3::new(1.0, 0.0, 1.0).normalize(), 1);
        let c = curve_intersections(&a, &b).unwrap();
        assert_eq!(c.len(), 2);
        assert!((c[0].position + c[1].position).norm() < 1e-10);
        for x in &c {
            assert!(x.position.z.abs() < 1e-12);
            assert!(x.transversal && x.angle > 0.5);
        }
        let north = synthetic_disc(0.6, &[], UnitQuaternion::identity(), 0).unwrap();
        let flip = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI);
        let south = synthetic_disc(0.6, &[], flip, 1).unwrap();
        assert!(curve_intersections(&north, &south).unwrap().is_empty());
    }

    #[test]
    fn crossings_are_refined() {
        let (a, b) = (wiggly(0, 0.3), wiggly(1, 1.9));
        for c in curve_intersections(&a, &b).unwrap() {
            let (p, _) = a.evaluate(c.params.0).unwrap();
            let (q, _) = b.evaluate(c.params.1).unwrap();
            assert!((p - q).norm() < 1e-12);
            assert!((p - c.position).norm() < 1e-12);
        }
    }

    #[test]
    fn perturbation_examples() {
        let a = great_circle(Vec3::z(), 0);
        let out = perturb_general_position(&[a.clone(), a.clone()], 3).unwrap();
        let n = curve_intersections(&out[0], &out[1]).unwrap().len();
        assert!(n == 2 || n == 0);

        let (w0, w1) = (wiggly(0, 0.0), wiggly(1, FRAC_PI_2));
        let gp = general_position(&[w0.clone(), w1.clone()], 5, PerturbPolicy::Always, Exec::Sequential).unwrap();
        assert_eq!(gp.attempts, 1);
        assert!(gp.magnitude <= INITIAL_ROTATION);
        assert_eq!(gp.crossings[0].1.len(), 4);
        assert!(gp.discs[0].hausdorff(&w0) <= 2.0 * INITIAL_ROTATION);

        let single = perturb_general_position(std::slice::from_ref(&w0), 9).unwrap();
        assert!(single[0].rotation.angle() <= INITIAL_ROTATION && single[0].rotation.angle() > 0.0);

        let again = perturb_general_position(&[w0.clone(), w1.clone()], 5).unwrap();
        assert_eq!(again, gp.discs);
        let kept = general_position(&[w0.clone(), w1], 5, PerturbPolicy::WhenNeeded, Exec::Parallel).unwrap();
        assert_eq!(kept.attempts, 0);
        assert_eq!(kept.discs[0], w0);
    }

    #[test]
    fn triple_points_are_rejected() {
        // Three great circles through the poles meet there.
        let discs: Vec<SphericalDisc> = (0..3)
            .map(|k| {
                let a = k as f64 * PI / 3.0;
                great_circle(Vec3::new(a.cos(), a.sin(), 0.0), k)
            })
            .collect();
        let c = all_crossings(&discs, Exec::Sequential).unwrap();
        assert!(triple_point(&c).is_some());
        let gp = general_position(&discs, 1, PerturbPolicy::WhenNeeded, Exec::Sequential).unwrap();
        assert!(gp.attempts >= 1 && triple_point(&gp.crossings).is_none());
    }

    #[test]
    fn interior_tests_agree() {
        let f0 = ModelFunction::ellipsoid([1.2, 1.0, 0.8], 1.3, 1.5).unwrap();
        let d = PairDescriptor::new(f0, sphere(0.9), Vec3::new(0.3, 1.0, 0.2), 1.5, Vec3::z()).unwrap();
        let disc = hidden_disc(&d, &TracePolicy::default(), 0).unwrap();
        let Generator::Preseam { pair, .. } = &disc.generator else { unreachable!() };
        let points = disc.points();
        let mut disagreements = 0;
        for k in 0..1000 {
            let y = halton_direction(k);
            let by_sign = height_difference(pair, &y).unwrap() > 0.0;
            let by_winding = disc.winding_contains(&y);
            assert_eq!(by_winding, disc.contains(&y));
            if by_sign != by_winding {
                assert!(crate::sphere::distance_to_loop(&y, &points) < 1e-3);
                disagreements += 1;
            }
        }
        assert!(disagreements <= 1);
        for k in 0..disc.len() {
            assert!(disc.contains(&disc.interior_probe(k, 1e-6)));
            assert!(!disc.contains(&disc.interior_probe(k, -1e-6)));
        }
    }

    #[test]
    fn coincident_boundaries() {
        let tol = COINCIDENCE_TOLERANCE;
        // Same hemisphere from a hidden disc and a differently sampled great circle.
        let d = PairDescriptor::new(sphere(1.0), sphere(1.0), Vec3::x(), 3.0, Vec3::y()).unwrap();
        let hidden = hidden_disc(&d, &TracePolicy::default(), 0).unwrap();
        let cap = great_circle(Vec3::x(), 1);
        assert_eq!(coincidence(&hidden, &cap, tol).unwrap(), Some(Coincidence::Equal));
        assert_eq!(coincidence(&cap, &hidden, tol).unwrap(), Some(Coincidence::Equal));
        let opposite = great_circle(-Vec3::x(), 2);
        assert_eq!(coincidence(&cap, &opposite, tol).unwrap(), Some(Coincidence::Complementary));
        let tilted = great_circle(Vec3::new(1.0, 1e-6, 0.0).normalize(), 3);
        assert_eq!(coincidence(&cap, &tilted, tol).unwrap(), None);
        assert_eq!(coincidence(&wiggly(4, 0.0), &wiggly(5, 0.1), tol).unwrap(), None);
    }

    #[test]
    fn fixture_round_trip() {
        let f0 = ModelFunction::ellipsoid([1.2, 1.0, 0.8], 1.3, 1.5).unwrap();
        let d = PairDescriptor::new(f0, sphere(0.9), Vec3::new(0.3, 1.0, 0.2), 1.5, Vec3::z()).unwrap();
        let discs = vec![
            hidden_disc(&d, &TracePolicy::default(), 0).unwrap(),
            wiggly(1, 0.4).rotated(&UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3)),
        ];
        let mut buf = Vec::new();
        write_fixture(&discs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 2);
        let records = read_fixture(&buf[..]).unwrap();
        for (r, d) in records.iter().zip(&discs) {
            let back = r.to_disc(&TracePolicy::default()).unwrap();
            assert_eq!(back.len(), d.len());
            assert!(back.hausdorff(d) < 1e-12);
        }
    }
}
