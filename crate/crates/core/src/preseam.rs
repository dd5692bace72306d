//! Pair descriptors, placement and tracing of pre-seam curves.
//!
//! A descriptor `(f0, f1, v0, t, v1)` places `f0` at the origin and `f1` so
//! that the shortest segment between the bodies runs along `v0` with length
//! `t`. The pre-seam is the closed curve of directions `ω` whose support
//! planes touch both bodies at the same height, `ωᵀq(ω) = 0` with
//! `q(ω) = p1(ω) − p0(ω)`. Each meridian half-plane about `v0` meets it once.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{self, Write};

use nalgebra::{Unit, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{default_u1, Body, ModelError, ModelFunction};
use crate::normal_map::{support_point, NormalMapError};
use crate::sphere::{angle_between, any_perpendicular, Basis};
use crate::{Exec, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreseamError {
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error(transparent)]
    Support(#[from] NormalMapError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no sign change on meridian φ = {phi}: h(-π/2) = {low}, h(π/2) = {high}")]
    NoBracket { phi: f64, low: f64, high: f64 },
    #[error("degenerate minors at φ = {phi}")]
    DegenerateMinors { phi: f64 },
    #[error("axis too far: {0}")]
    AxisTooFar(String),
}

/// `(f0, f1, v0, t, v1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDescriptor {
    pub f0: ModelFunction,
    pub f1: ModelFunction,
    pub v0: Vec3,
    pub t: f64,
    pub v1: Vec3,
}

impl PairDescriptor {
    /// Normalises `v0` and orthogonalises `v1` against it.
    pub fn new(
        f0: ModelFunction,
        f1: ModelFunction,
        v0: Vec3,
        t: f64,
        v1: Vec3,
    ) -> Result<Self, PreseamError> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(PreseamError::InvalidDescriptor(format!("gap t = {t} must be ≥ 0")));
        }
        if !(v0.norm() > 0.0) {
            return Err(PreseamError::InvalidDescriptor("zero axis".into()));
        }
        let b = Basis::new(v0, v1);
        if !b.v1.iter().all(|c| c.is_finite()) {
            return Err(PreseamError::InvalidDescriptor("reference parallel to axis".into()));
        }
        Ok(PairDescriptor { f0, f1, v0: b.v0, t, v1: b.v1 })
    }

    pub fn basis(&self) -> Basis {
        Basis { v0: self.v0, v1: self.v1, v2: self.v0.cross(&self.v1) }
    }

    /// The same pair seen from body 1: models swapped and the axis reversed.
    pub fn reversed(&self) -> Self {
        PairDescriptor { f0: self.f1.clone(), f1: self.f0.clone(), v0: -self.v0, t: self.t, v1: self.v1 }
    }
}

/// Body 0 at the origin and body 1 at `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacedPair {
    pub body0: Body,
    pub body1: Body,
}

impl PlacedPair {
    pub fn translation(&self) -> Vec3 {
        self.body1.translation - self.body0.translation
    }
}

/// `a = p0(v0) + t·v0 − p1(−v0)`.
pub fn place_pair(desc: &PairDescriptor) -> Result<PlacedPair, PreseamError> {
    let origin = Vec3::zeros();
    let p0 = support_point(&Body::new(desc.f0.clone(), origin), &desc.v0)?.point;
    let p1 = support_point(&Body::new(desc.f1.clone(), origin), &-desc.v0)?.point;
    let a = p0 + desc.v0 * desc.t - p1;
    Ok(PlacedPair { body0: Body::at_origin(desc.f0.clone()), body1: Body::new(desc.f1.clone(), a) })
}

/// `q(ω) = p1(ω) − p0(ω)`.
pub fn q_vector(pair: &PlacedPair, omega: &Vec3) -> Result<Vec3, PreseamError> {
    let p1 = support_point(&pair.body1, omega)?.point;
    let p0 = support_point(&pair.body0, omega)?.point;
    Ok(p1 - p0)
}

/// `h(ω) = ωᵀq(ω)`; positive on the hidden side of body 0.
pub fn height_difference(pair: &PlacedPair, omega: &Vec3) -> Result<f64, PreseamError> {
    Ok(omega.dot(&q_vector(pair, omega)?))
}

/// Root of `h` on one meridian half-plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreseamPoint {
    pub theta: f64,
    pub point: Vec3,
    pub residual: f64,
}

const BISECTION_STEPS: usize = 40;
const SECANT_STEPS: usize = 12;

/// Solves `h(θ) = 0` on the half-plane `A_φ` by bisection from the bracket
/// `(−π/2, π/2)` followed by a secant polish kept inside the bracket.
pub fn preseam_point(pair: &PlacedPair, basis: &Basis, phi: f64) -> Result<PreseamPoint, PreseamError> {
    let h = |theta: f64| -> Result<(f64, Vec3), PreseamError> {
        let w = basis.meridian_point(theta, phi);
        Ok((height_difference(pair, &w)?, w))
    };
    let (mut lo, mut hi) = (-FRAC_PI_2, FRAC_PI_2);
    let (mut hlo, _) = h(lo)?;
    let (mut hhi, _) = h(hi)?;
    if !(hlo < 0.0 && hhi > 0.0) {
        return Err(PreseamError::NoBracket { phi, low: hlo, high: hhi });
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let (hm, _) = h(mid)?;
        if hm == 0.0 {
            lo = mid;
            hi = mid;
            hlo = 0.0;
            hhi = 0.0;
            break;
        }
        if hm < 0.0 {
            lo = mid;
            hlo = hm;
        } else {
            hi = mid;
            hhi = hm;
        }
    }
    let (mut theta, mut best) = if hlo.abs() <= hhi.abs() { (lo, hlo) } else { (hi, hhi) };
    for _ in 0..SECANT_STEPS {
        if best.abs() <= 1e-15 || hhi == hlo {
            break;
        }
        let cand = lo - hlo * (hi - lo) / (hhi - hlo);
        if !(cand >= lo && cand <= hi) {
            break;
        }
        let (hc, _) = h(cand)?;
        if hc.abs() < best.abs() {
            theta = cand;
            best = hc;
        }
        if hc == 0.0 {
            break;
        }
        if hc < 0.0 {
            if lo == cand {
                break;
            }
            lo = cand;
            hlo = hc;
        } else {
            if hi == cand {
                break;
            }
            hi = cand;
            hhi = hc;
        }
    }
    let (res, point) = h(theta)?;
    Ok(PreseamPoint { theta, point, residual: res.abs() })
}

/// Analytic tangent `ds/dφ` of the pre-seam at `s`.
///
/// The nullspace of `A = [2sᵀ; q̄ᵀ]` is spanned by `(g0, −g1, g2)` in basis
/// coordinates; its length is fixed by `β·dγ − γ·dβ = β² + γ²`.
pub fn preseam_tangent(
    pair: &PlacedPair,
    basis: &Basis,
    phi: f64,
    s: &Vec3,
) -> Result<Vec3, PreseamError> {
    let q = q_vector(pair, s)?;
    let d = tangent_coords(&basis.coords(s), &basis.coords(&q.normalize()))
        .ok_or(PreseamError::DegenerateMinors { phi })?;
    Ok(basis.from_coords(&d))
}

/// `(dα, dβ, dγ)` from the coordinates of `s` and of the normalised `q`.
pub fn tangent_coords(s: &Vec3, qbar: &Vec3) -> Option<Vec3> {
    let (alpha, beta, gamma) = (s.x, s.y, s.z);
    let (q0, q1, q2) = (qbar.x, qbar.y, qbar.z);
    let g0 = 2.0 * beta * q2 - 2.0 * gamma * q1;
    let g1 = 2.0 * alpha * q2 - 2.0 * gamma * q0;
    let g2 = 2.0 * alpha * q1 - 2.0 * beta * q0;
    if g1.abs() < 1e-12 && g2.abs() < 1e-12 {
        return None;
    }
    tangent_branch(s, [g0, g1, g2], g1.abs() >= g2.abs())
}

fn tangent_branch(s: &Vec3, g: [f64; 3], use_g1: bool) -> Option<Vec3> {
    let (beta, gamma) = (s.y, s.z);
    let [g0, g1, g2] = g;
    let r2 = beta * beta + gamma * gamma;
    let d = if use_g1 {
        let db = -r2 / ((g2 / g1) * beta + gamma);
        Vec3::new(-g0 * db / g1, db, -g2 * db / g1)
    } else {
        let dg = r2 / (beta + gamma * g1 / g2);
        Vec3::new(g0 * dg / g2, -g1 * dg / g2, dg)
    };
    d.iter().all(|c| c.is_finite()).then_some(d)
}

/// `|β·dγ − γ·dβ − (β² + γ²)|` for a point and tangent in basis coordinates.
pub fn meridian_equation_residual(s: &Vec3, ds: &Vec3) -> f64 {
    (s.y * ds.z - s.z * ds.y - (s.y * s.y + s.z * s.z)).abs()
}

/// One traced sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreseamSample {
    pub phi: f64,
    pub theta: f64,
    pub point: Vec3,
    pub tangent: Vec3,
    pub residual: f64,
}

/// Adaptive sampling policy for [`trace_preseam`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePolicy {
    pub initial: usize,
    /// Refine while consecutive tangents turn by more than this (radians).
    pub max_turn: f64,
    pub max_samples: usize,
    #[serde(default)]
    pub exec: Exec,
}

impl Default for TracePolicy {
    fn default() -> Self {
        TracePolicy { initial: 64, max_turn: 0.05, max_samples: 4096, exec: Exec::default() }
    }
}

impl TracePolicy {
    /// Fixed uniform grid of `n` meridians without refinement.
    pub fn uniform(n: usize) -> Self {
        TracePolicy { initial: n, max_turn: f64::INFINITY, max_samples: n, exec: Exec::default() }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }
}

/// A closed pre-seam, sampled at increasing `φ ∈ [0, 2π)`. The sample at
/// `φ = 2π` coincides with the first and is not stored.
#[derive(Clone, Debug, PartialEq)]
pub struct PreseamCurve {
    pub basis: Basis,
    pub samples: Vec<PreseamSample>,
    pub closed: bool,
    pub pair: PlacedPair,
}

impl PreseamCurve {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn points(&self) -> Vec<Vec3> {
        self.samples.iter().map(|s| s.point).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.residual).fold(0.0, f64::max)
    }

    /// Point and tangent at any `φ`, solved afresh against the pair.
    pub fn evaluate(&self, phi: f64) -> Result<PreseamSample, PreseamError> {
        solve_sample(&self.pair, &self.basis, phi)
    }

    /// Distance between the stored start and the curve re-solved at `φ = 2π`,
    /// for both the point and the tangent.
    pub fn wrap_error(&self) -> Result<(f64, f64), PreseamError> {
        let end = self.evaluate(2.0 * PI)?;
        let start = &self.samples[0];
        Ok(((end.point - start.point).norm(), (end.tangent - start.tangent).norm()))
    }

    /// Writes the curve as a comma-separated table
    /// `phi,sx,sy,sz,tx,ty,tz,residual`.
    pub fn write_table<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "phi,sx,sy,sz,tx,ty,tz,residual")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                s.phi, s.point.x, s.point.y, s.point.z, s.tangent.x, s.tangent.y, s.tangent.z, s.residual
            )?;
        }
        Ok(())
    }
}

/// Point and analytic tangent on meridian `φ`.
pub fn solve_sample(pair: &PlacedPair, basis: &Basis, phi: f64) -> Result<PreseamSample, PreseamError> {
    let p = preseam_point(pair, basis, phi)?;
    let tangent = preseam_tangent(pair, basis, phi, &p.point)?;
    Ok(PreseamSample { phi, theta: p.theta, point: p.point, tangent, residual: p.residual })
}

/// Traces the pre-seam of a descriptor.
pub fn trace_preseam(desc: &PairDescriptor, policy: &TracePolicy) -> Result<PreseamCurve, PreseamError> {
    if !(desc.t > 0.0) {
        return Err(PreseamError::InvalidDescriptor(format!("gap t = {} must be > 0", desc.t)));
    }
    let pair = place_pair(desc)?;
    let basis = desc.basis();
    trace_placed(pair, basis, policy)
}

/// Traces the pre-seam of an already placed pair in the given frame.
pub fn trace_placed(pair: PlacedPair, basis: Basis, policy: &TracePolicy) -> Result<PreseamCurve, PreseamError> {
    let n = policy.initial.max(3);
    let phis: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
    let mut samples = policy.exec.try_map(&phis, |&phi| solve_sample(&pair, &basis, phi))?;

    while samples.len() < policy.max_samples {
        let m = samples.len();
        let mut mids = Vec::new();
        for k in 0..m {
            let a = &samples[k];
            let b = &samples[(k + 1) % m];
            if angle_between(&a.tangent, &b.tangent) > policy.max_turn {
                let end = if k + 1 == m { 2.0 * PI } else { b.phi };
                mids.push((k, 0.5 * (a.phi + end)));
            }
        }
        if mids.is_empty() {
            break;
        }
        mids.truncate(policy.max_samples - m);
        let solved = policy.exec.try_map(&mids, |&(_, phi)| solve_sample(&pair, &basis, phi))?;
        let mut merged = Vec::with_capacity(m + solved.len());
        let mut it = mids.iter().map(|(k, _)| *k).zip(solved).peekable();
        for (k, s) in samples.into_iter().enumerate() {
            merged.push(s);
            if let Some((_, mid)) = it.next_if(|(j, _)| *j == k) {
                merged.push(mid);
            }
        }
        samples = merged;
    }

    Ok(PreseamCurve { basis, samples, closed: true, pair })
}

/// Tilt tolerance for [`reparametrize`].
pub const DEFAULT_BETA_MAX: f64 = 10.0 * PI / 180.0;

/// Re-indexes a curve by the meridian angle about a new axis `v0′`.
///
/// Each original sample angle becomes a meridian about `v0′` and is solved
/// against the original pair. Fails when `v0′` is farther than `beta_max`
/// from the curve's axis or when some half-plane about `v0′` does not meet
/// the curve exactly once.
pub fn reparametrize(
    curve: &PreseamCurve,
    v0: &Vec3,
    v1: &Vec3,
    beta_max: f64,
) -> Result<PreseamCurve, PreseamError> {
    let tilt = angle_between(v0, &curve.basis.v0);
    if tilt >= beta_max {
        return Err(PreseamError::AxisTooFar(format!(
            "tilt {:.6} rad exceeds {:.6} rad",
            tilt, beta_max
        )));
    }
    let basis = Basis::new(*v0, *v1);
    check_single_crossing(&curve.points(), &basis)?;
    let samples: Vec<PreseamSample> = curve
        .samples
        .iter()
        .map(|s| solve_sample(&curve.pair, &basis, s.phi))
        .collect::<Result<_, _>>()?;
    let out = PreseamCurve { basis, samples, closed: true, pair: curve.pair.clone() };
    check_single_crossing(&out.points(), &basis)?;
    Ok(out)
}

/// Every half-plane about `basis.v0` meets the closed polyline once exactly
/// when its azimuth increases monotonically and winds once.
pub fn check_single_crossing(points: &[Vec3], basis: &Basis) -> Result<(), PreseamError> {
    let m = points.len();
    let mut total = 0.0;
    for k in 0..m {
        let a = basis.azimuth(&points[k]);
        let b = basis.azimuth(&points[(k + 1) % m]);
        let mut d = b - a;
        if d > PI {
            d -= 2.0 * PI;
        } else if d < -PI {
            d += 2.0 * PI;
        }
        if d <= 0.0 {
            return Err(PreseamError::AxisTooFar(format!(
                "azimuth about the new axis is not increasing at sample {k}"
            )));
        }
        total += d;
    }
    if (total - 2.0 * PI).abs() > 1e-6 {
        return Err(PreseamError::AxisTooFar(format!("curve winds {total:.6} rad about the new axis")));
    }
    Ok(())
}

/// Which descriptor components a continuity probe perturbs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeComponents {
    pub models: bool,
    pub axis: bool,
    pub gap: bool,
    pub reference: bool,
}

impl ProbeComponents {
    pub const ALL: ProbeComponents = ProbeComponents { models: true, axis: true, gap: true, reference: true };
    pub const GAP: ProbeComponents = ProbeComponents { models: false, axis: false, gap: true, reference: false };
}

/// One row of a continuity probe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub delta: f64,
    pub sup_distance: f64,
    pub sup_tangent_distance: f64,
}

/// Number of meridians compared by [`continuity_probe`].
pub const PROBE_SAMPLES: usize = 256;

/// Perturbs a descriptor with a fixed random direction scaled by `delta`.
struct Perturbation {
    semiaxes: [[f64; 3]; 2],
    axis_tilt: Vec3,
    gap: f64,
    spin: f64,
}

impl Perturbation {
    fn draw(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = || rng.random_range(-1.0..=1.0);
        Perturbation {
            semiaxes: [[u(), u(), u()], [u(), u(), u()]],
            axis_tilt: Vec3::new(u(), u(), u()),
            gap: u(),
            spin: u(),
        }
    }

    fn apply(
        &self,
        desc: &PairDescriptor,
        delta: f64,
        which: ProbeComponents,
    ) -> Result<PairDescriptor, PreseamError> {
        let scale_model = |m: &ModelFunction, k: usize| -> Result<ModelFunction, PreseamError> {
            if !which.models {
                return Ok(m.clone());
            }
            let mut ax = m.semiaxes();
            for (i, a) in ax.iter_mut().enumerate() {
                *a += delta * self.semiaxes[k][i];
            }
            let (u0, u1) = m.knots();
            Ok(ModelFunction::rotated_ellipsoid(ax, m.rotation(), u0, u1.min(default_u1(&ax)))?)
        };
        let f0 = scale_model(&desc.f0, 0)?;
        let f1 = scale_model(&desc.f1, 1)?;
        let mut v0 = desc.v0;
        let mut v1 = desc.v1;
        if which.axis {
            let dir = self.axis_tilt - v0 * v0.dot(&self.axis_tilt);
            if dir.norm() > 0.0 {
                let rot = UnitQuaternion::from_axis_angle(&Unit::new_normalize(v0.cross(&dir)), delta);
                v0 = rot * v0;
                v1 = rot * v1;
            }
        }
        if which.reference {
            let rot = UnitQuaternion::from_axis_angle(&Unit::new_normalize(v0), delta * self.spin);
            v1 = rot * v1;
        }
        let t = if which.gap { (desc.t + delta * self.gap).max(1e-3) } else { desc.t };
        PairDescriptor::new(f0, f1, v0, t, v1)
    }
}

/// Retraces perturbed descriptors and reports sup distances between points
/// and tangents at matched `φ` on a uniform grid of [`PROBE_SAMPLES`]
/// meridians.
pub fn continuity_probe(
    desc: &PairDescriptor,
    deltas: &[f64],
    seed: u64,
    which: ProbeComponents,
    exec: Exec,
) -> Result<Vec<ContinuityRow>, PreseamError> {
    let policy = TracePolicy::uniform(PROBE_SAMPLES).with_exec(exec);
    let base = trace_preseam(desc, &policy)?;
    let perturbation = Perturbation::draw(seed);
    deltas
        .iter()
        .map(|&delta| {
            let other = trace_preseam(&perturbation.apply(desc, delta, which)?, &policy)?;
            let mut sup_distance: f64 = 0.0;
            let mut sup_tangent_distance: f64 = 0.0;
            for (a, b) in base.samples.iter().zip(&other.samples) {
                sup_distance = sup_distance.max((a.point - b.point).norm());
                sup_tangent_distance = sup_tangent_distance.max((a.tangent - b.tangent).norm());
            }
            Ok(ContinuityRow { delta, sup_distance, sup_tangent_distance })
        })
        .collect()
}

/// Descriptor with a deterministic reference direction.
pub fn descriptor_about(f0: ModelFunction, f1: ModelFunction, v0: Vec3, t: f64) -> Result<PairDescriptor, PreseamError> {
    let v1 = any_perpendicular(&v0);
    PairDescriptor::new(f0, f1, v0, t, v1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::distance_to_loop;

    fn sphere(r: f64) -> ModelFunction {
        ModelFunction::sphere(r).unwrap()
    }

    fn unit_pair(t: f64) -> PairDescriptor {
        PairDescriptor::new(sphere(1.0), sphere(1.0), Vec3::x(), t, Vec3::y()).unwrap()
    }

    fn ellipsoid_pair() -> PairDescriptor {
        let f0 = ModelFunction::ellipsoid([1.2, 1.0, 0.8], 1.3, 1.5).unwrap();
        PairDescriptor::new(f0, sphere(1.0), Vec3::new(1.0, 0.2, -0.1), 2.0, Vec3::z()).unwrap()
    }

    #[test]
    fn placement_examples() {
        let p = place_pair(&unit_pair(3.0)).unwrap();
        assert_eq!(p.body1.translation, Vec3::new(5.0, 0.0, 0.0));
        let p = place_pair(&unit_pair(0.0)).unwrap();
        assert_eq!(p.body1.translation, Vec3::new(2.0, 0.0, 0.0));
        let d = PairDescriptor::new(sphere(1.0), sphere(0.5), Vec3::y(), 3.0, Vec3::z()).unwrap();
        let p = place_pair(&d).unwrap();
        assert!((p.translation() - Vec3::new(0.0, 4.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn q_vector_congruent_spheres() {
        let p = place_pair(&unit_pair(3.0)).unwrap();
        for w in [Vec3::x(), Vec3::y(), -Vec3::x()] {
            assert!((q_vector(&p, &w).unwrap() - Vec3::new(5.0, 0.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn preseam_points_on_spheres() {
        let p = place_pair(&unit_pair(3.0)).unwrap();
        let b = unit_pair(3.0).basis();
        let s = preseam_point(&p, &b, 0.0).unwrap();
        assert!(s.theta.abs() < 1e-12 && (s.point - Vec3::y()).norm() < 1e-12);
        let s = preseam_point(&p, &b, FRAC_PI_2).unwrap();
        assert!((s.point - Vec3::z()).norm() < 1e-12);

        let d = PairDescriptor::new(sphere(1.0), sphere(0.5), Vec3::x(), 3.0, Vec3::y()).unwrap();
        let p = place_pair(&d).unwrap();
        for phi in [0.0, 1.0, 4.0] {
            let s = preseam_point(&p, &d.basis(), phi).unwrap();
            assert!((s.theta.sin() - 1.0 / 9.0).abs() < 1e-12);
            assert!((s.theta - 0.11134).abs() < 1e-5);
            assert!(s.residual <= 1e-10);
        }
    }

    #[test]
    fn nested_bodies_fail_to_bracket() {
        let pair = PlacedPair {
            body0: Body::at_origin(sphere(1.0)),
            body1: Body::new(sphere(0.5), Vec3::new(0.1, 0.0, 0.0)),
        };
        let e = preseam_point(&pair, &Basis::standard(), 0.3);
        assert!(matches!(e, Err(PreseamError::NoBracket { .. })));
    }

    #[test]
    fn tangent_on_great_circle() {
        let d = unit_pair(3.0);
        let p = place_pair(&d).unwrap();
        let b = d.basis();
        let t = preseam_tangent(&p, &b, 0.0, &Vec3::y()).unwrap();
        assert!((t - Vec3::z()).norm() < 1e-12);
        let t = preseam_tangent(&p, &b, FRAC_PI_2, &Vec3::z()).unwrap();
        assert!((t + Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn tangent_branches_agree() {
        // Both minor branches solve the same 3×3 system whenever both are usable.
        let s = Vec3::new(0.3, 0.5, (1.0f64 - 0.09 - 0.25).sqrt());
        let q = Vec3::new(0.9, -0.2, 0.1).normalize();
        let d = tangent_coords(&s, &q).unwrap();
        assert!(d.dot(&s).abs() < 1e-14 && d.dot(&q).abs() < 1e-14);
        assert!(meridian_equation_residual(&s, &d) < 1e-14);
        let g = [
            2.0 * s.y * q.z - 2.0 * s.z * q.y,
            2.0 * s.x * q.z - 2.0 * s.z * q.x,
            2.0 * s.x * q.y - 2.0 * s.y * q.x,
        ];
        let a = tangent_branch(&s, g, true).unwrap();
        let b = tangent_branch(&s, g, false).unwrap();
        assert!((a - b).norm() < 1e-13);
        assert!(tangent_coords(&Vec3::new(1.0, 0.0, 0.0), &Vec3::new(1.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn tangent_matches_finite_difference() {
        let d = ellipsoid_pair();
        let p = place_pair(&d).unwrap();
        let b = d.basis();
        let step = 1e-4;
        for k in 0..40 {
            let phi = 2.0 * PI * (k as f64 + 0.3) / 40.0;
            let s = preseam_point(&p, &b, phi).unwrap().point;
            let t = preseam_tangent(&p, &b, phi, &s).unwrap();
            let fd = (preseam_point(&p, &b, phi + step).unwrap().point
                - preseam_point(&p, &b, phi - step).unwrap().point)
                / (2.0 * step);
            assert!((t - fd).norm() / t.norm() < 1e-5, "phi {phi}: {t:?} vs {fd:?}");
        }
    }

    #[test]
    fn traced_curves_satisfy_invariants() {
        let d = ellipsoid_pair();
        let c = trace_preseam(&d, &TracePolicy::default()).unwrap();
        assert!(c.len() >= 64 && c.len() <= 4096);
        assert!(c.max_residual() <= 1e-10);
        let (dp, dt) = c.wrap_error().unwrap();
        assert!(dp < 1e-12 && dt <= 1e-6);
        for w in c.samples.windows(2) {
            assert!(w[0].phi < w[1].phi);
            assert!(angle_between(&w[0].tangent, &w[1].tangent) <= 0.05 + 1e-12);
        }
        for s in &c.samples {
            assert!((s.point.norm() - 1.0).abs() < 1e-12);
            let q = q_vector(&c.pair, &s.point).unwrap().normalize();
            assert!(s.tangent.dot(&s.point).abs() < 1e-8);
            assert!(s.tangent.dot(&q).abs() < 1e-8);
            assert!(s.tangent.norm() > 0.0);
            assert!(angle_between(&s.tangent, &s.point.cross(&q)).min(angle_between(&-s.tangent, &s.point.cross(&q))) < 1e-6);
            let sc = c.basis.coords(&s.point);
            let tc = c.basis.coords(&s.tangent);
            assert!(meridian_equation_residual(&sc, &tc) < 1e-8);
            assert!(s.theta.abs() < FRAC_PI_2);
        }
    }

    #[test]
    fn sphere_oracles_on_traces() {
        let c = trace_preseam(&unit_pair(3.0), &TracePolicy::default()).unwrap();
        assert!(c.samples.iter().all(|s| s.point.dot(&Vec3::x()).abs() <= 1e-9));
        let d = PairDescriptor::new(sphere(1.0), sphere(0.5), Vec3::x(), 3.0, Vec3::y()).unwrap();
        let c = trace_preseam(&d, &TracePolicy::default()).unwrap();
        assert!(c.samples.iter().all(|s| (s.point.x - 1.0 / 9.0).abs() <= 1e-8));
        // Hidden side is the v0 side.
        assert!(height_difference(&c.pair, &Vec3::x()).unwrap() > 0.0);
        assert!(height_difference(&c.pair, &-Vec3::x()).unwrap() < 0.0);
    }

    #[test]
    fn policies_trace_identically() {
        let d = ellipsoid_pair();
        let a = trace_preseam(&d, &TracePolicy::default().with_exec(Exec::Sequential)).unwrap();
        let b = trace_preseam(&d, &TracePolicy::default().with_exec(Exec::Parallel)).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn table_dump() {
        let c = trace_preseam(&unit_pair(3.0), &TracePolicy::uniform(8)).unwrap();
        let mut buf = Vec::new();
        c.write_table(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "phi,sx,sy,sz,tx,ty,tz,residual");
        assert_eq!(lines.len(), 9);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 8));
    }

    #[test]
    fn reparametrize_identity_and_tilt() {
        let d = unit_pair(3.0);
        let c = trace_preseam(&d, &TracePolicy::default()).unwrap();
        let same = reparametrize(&c, &d.v0, &d.v1, DEFAULT_BETA_MAX).unwrap();
        for (a, b) in c.samples.iter().zip(&same.samples) {
            assert!((a.point - b.point).norm() <= 1e-12);
        }
        let tilt = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), 5f64.to_radians());
        let r = reparametrize(&c, &(tilt * d.v0), &(tilt * d.v1), DEFAULT_BETA_MAX).unwrap();
        let poly = c.points();
        for s in &r.samples {
            assert!(distance_to_loop(&s.point, &poly) <= 1e-6);
        }
        assert!(matches!(
            reparametrize(&c, &(UnitQuaternion::from_axis_angle(&Vec3::z_axis(), 1.0) * d.v0), &d.v1, DEFAULT_BETA_MAX),
            Err(PreseamError::AxisTooFar(_))
        ));
    }

    #[test]
    fn reparametrize_detects_double_crossings() {
        // Small cap (sinθ = 0.4): an axis tilted 70° lies outside it, so
        // half-planes about it meet the curve twice or not at all.
        let d = PairDescriptor::new(
            ModelFunction::ellipsoid_default([1.2, 1.2, 1.2]).unwrap(),
            sphere(0.5),
            Vec3::x(),
            0.05,
            Vec3::y(),
        )
        .unwrap();
        let c = trace_preseam(&d, &TracePolicy::default()).unwrap();
        assert!(c.samples.iter().all(|s| (s.point.x - 0.4).abs() < 1e-8));
        let tilt = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), 70f64.to_radians());
        let e = reparametrize(&c, &(tilt * d.v0), &(tilt * d.v1), PI);
        assert!(matches!(e, Err(PreseamError::AxisTooFar(_))), "{e:?}");
    }

    #[test]
    fn continuity_probe_examples() {
        let d = unit_pair(3.0);
        let rows = continuity_probe(&d, &[0.0], 1, ProbeComponents::ALL, Exec::Parallel).unwrap();
        assert_eq!((rows[0].sup_distance, rows[0].sup_tangent_distance), (0.0, 0.0));
        let rows = continuity_probe(&d, &[0.1, 0.05, 0.025], 1, ProbeComponents::ALL, Exec::Parallel).unwrap();
        assert!(rows[0].sup_distance > rows[1].sup_distance && rows[1].sup_distance > rows[2].sup_distance);
        let rows = continuity_probe(&d, &[0.1, 0.05], 1, ProbeComponents::GAP, Exec::Parallel).unwrap();
        assert!(rows.iter().all(|r| r.sup_distance <= 1e-9));
    }

    #[test]
    fn reversed_descriptor_places_the_same_pair() {
        let d = ellipsoid_pair();
        let p = place_pair(&d).unwrap();
        let r = place_pair(&d.reversed()).unwrap();
        assert!((p.translation() + r.translation()).norm() < 1e-12);
    }
}
