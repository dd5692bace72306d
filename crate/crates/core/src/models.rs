//! Model bodies `{x : f(x) ≤ 1}` given by C² saturated quadratic forms.
//!
//! A model is `f(x) = ψ(xᵀMx)` with `M` symmetric positive definite and a
//! monotone blend `ψ` that is the identity below `u0`, a quintic Hermite
//! polynomial on `[u0, u1]` and the constant `2` above `u1`. Requiring
//! `u1 ≤ 2.25·λ_min(M)` makes `f ≡ 2` outside the ball of radius 1.5.
//!
//! The sublevel set `{f ≤ 1}` is exactly the ellipsoid `xᵀMx ≤ 1` since
//! `u0 > 1`, which is what makes closed-form oracles available downstream.

use std::f64::consts::PI;

use nalgebra::{SymmetricEigen, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{Mat3, Vec3};

/// Radius outside which every model is constant.
pub const SATURATION_RADIUS: f64 = 1.5;
/// Value of every model outside [`SATURATION_RADIUS`].
pub const SATURATED_VALUE: f64 = 2.0;

/// Lower knot used when none is given.
pub const DEFAULT_U0: f64 = 1.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("degenerate axes: every semiaxis must be positive and finite, got {0:?}")]
    DegenerateAxes([f64; 3]),
    #[error("infeasible knots: u1 = {u1} exceeds 2.25·λ_min = {bound}")]
    InfeasibleKnots { u1: f64, bound: f64 },
    #[error("knots must satisfy 1 < u0 < u1, got u0 = {u0}, u1 = {u1}")]
    KnotOrder { u0: f64, u1: f64 },
    #[error("blend is not monotone: (2 - u0) / (u1 - u0) = {ratio} < 0.4")]
    NonMonotoneBlend { ratio: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    EllipsoidSaturated,
}

/// File representation of a model (scene files, fixtures).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub semiaxes: [f64; 3],
    /// Unit quaternion `[w, x, y, z]` taking model axes to world axes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[f64; 4]>,
    pub u0: f64,
    pub u1: f64,
}

/// Value, gradient and Hessian of a model at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec3,
    pub hessian: Mat3,
}

/// A member of the saturated-ellipsoid model family.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFunction {
    kind: ModelKind,
    semiaxes: [f64; 3],
    rotation: UnitQuaternion<f64>,
    matrix: Mat3,
    inverse: Mat3,
    u0: f64,
    u1: f64,
    /// Coefficients of ψ on `[u0, u1]` in `s = (u − u0)/(u1 − u0)`.
    blend: [f64; 6],
}

/// Largest `u1` allowed for a quadratic form with smallest eigenvalue `lambda_min`.
pub fn saturation_bound(lambda_min: f64) -> f64 {
    SATURATION_RADIUS * SATURATION_RADIUS * lambda_min
}

/// Quintic Hermite blend: ψ(u0)=u0, ψ′(u0)=1, ψ″(u0)=0, ψ(u1)=2, ψ′(u1)=ψ″(u1)=0.
pub fn quintic_blend(u0: f64, u1: f64) -> [f64; 6] {
    let h = u1 - u0;
    let d = SATURATED_VALUE - u0;
    [u0, h, 0.0, -6.0 * h + 10.0 * d, 8.0 * h - 15.0 * d, -3.0 * h + 6.0 * d]
}

impl ModelFunction {
    /// Axis-aligned saturated ellipsoid.
    pub fn ellipsoid(semiaxes: [f64; 3], u0: f64, u1: f64) -> Result<Self, ModelError> {
        Self::rotated_ellipsoid(semiaxes, UnitQuaternion::identity(), u0, u1)
    }

    /// Saturated ellipsoid whose principal axes are rotated by `rotation`.
    pub fn rotated_ellipsoid(
        semiaxes: [f64; 3],
        rotation: UnitQuaternion<f64>,
        u0: f64,
        u1: f64,
    ) -> Result<Self, ModelError> {
        if semiaxes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(ModelError::DegenerateAxes(semiaxes));
        }
        if !(u0 > 1.0 && u1 > u0) {
            return Err(ModelError::KnotOrder { u0, u1 });
        }
        let amax = semiaxes.iter().cloned().fold(0.0, f64::max);
        let bound = saturation_bound(1.0 / (amax * amax));
        if u1 > bound {
            return Err(ModelError::InfeasibleKnots { u1, bound });
        }
        let ratio = (SATURATED_VALUE - u0) / (u1 - u0);
        if ratio < 0.4 {
            return Err(ModelError::NonMonotoneBlend { ratio });
        }
        let r = rotation.to_rotation_matrix();
        let d = Mat3::from_diagonal(&Vec3::new(
            1.0 / (semiaxes[0] * semiaxes[0]),
            1.0 / (semiaxes[1] * semiaxes[1]),
            1.0 / (semiaxes[2] * semiaxes[2]),
        ));
        let dinv = Mat3::from_diagonal(&Vec3::new(
            semiaxes[0] * semiaxes[0],
            semiaxes[1] * semiaxes[1],
            semiaxes[2] * semiaxes[2],
        ));
        let matrix = r.matrix() * d * r.matrix().transpose();
        let inverse = r.matrix() * dinv * r.matrix().transpose();
        Ok(ModelFunction {
            kind: ModelKind::EllipsoidSaturated,
            semiaxes,
            rotation,
            matrix: symmetrize(&matrix),
            inverse: symmetrize(&inverse),
            u0,
            u1,
            blend: quintic_blend(u0, u1),
        })
    }

    /// Ellipsoid with knots `u0 = 1.2` and `u1 = min(2, 2.25·λ_min)` (pulled in
    /// by a relative 1e−9 so that radius 1.5 saturates despite rounding).
    pub fn ellipsoid_default(semiaxes: [f64; 3]) -> Result<Self, ModelError> {
        Self::rotated_ellipsoid_default(semiaxes, UnitQuaternion::identity())
    }

    pub fn rotated_ellipsoid_default(
        semiaxes: [f64; 3],
        rotation: UnitQuaternion<f64>,
    ) -> Result<Self, ModelError> {
        let u1 = default_u1(&semiaxes);
        Self::rotated_ellipsoid(semiaxes, rotation, DEFAULT_U0, u1)
    }

    /// Round model of radius `r` with default knots.
    pub fn sphere(r: f64) -> Result<Self, ModelError> {
        Self::ellipsoid_default([r, r, r])
    }

    /// Assembles a model from raw parts without any checks. Meant for
    /// exercising [`validate_model`] on deliberately broken models.
    pub fn from_raw(matrix: Mat3, u0: f64, u1: f64, blend: [f64; 6]) -> Self {
        let inverse = matrix.try_inverse().unwrap_or_else(Mat3::zeros);
        let eig = SymmetricEigen::new(matrix);
        let semiaxes = [
            1.0 / eig.eigenvalues[0].abs().sqrt(),
            1.0 / eig.eigenvalues[1].abs().sqrt(),
            1.0 / eig.eigenvalues[2].abs().sqrt(),
        ];
        ModelFunction {
            kind: ModelKind::EllipsoidSaturated,
            semiaxes,
            rotation: UnitQuaternion::identity(),
            matrix,
            inverse,
            u0,
            u1,
            blend,
        }
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self, ModelError> {
        let rot = match spec.rotation {
            Some([w, x, y, z]) => {
                // Stored unit quaternions are kept bit for bit so that a
                // model survives a round trip through its spec.
                let q = nalgebra::Quaternion::new(w, x, y, z);
                if (q.norm() - 1.0).abs() <= 1e-12 {
                    UnitQuaternion::new_unchecked(q)
                } else {
                    UnitQuaternion::from_quaternion(q)
                }
            }
            None => UnitQuaternion::identity(),
        };
        Self::rotated_ellipsoid(spec.semiaxes, rot, spec.u0, spec.u1)
    }

    pub fn to_spec(&self) -> ModelSpec {
        let q = self.rotation.quaternion();
        let rotation = if self.rotation.angle() == 0.0 {
            None
        } else {
            Some([q.w, q.i, q.j, q.k])
        };
        ModelSpec { kind: self.kind, semiaxes: self.semiaxes, rotation, u0: self.u0, u1: self.u1 }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn semiaxes(&self) -> [f64; 3] {
        self.semiaxes
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.rotation
    }

    /// The quadratic form `M`.
    pub fn matrix(&self) -> &Mat3 {
        &self.matrix
    }

    /// `M⁻¹`, used by the closed-form support point.
    pub fn inverse_matrix(&self) -> &Mat3 {
        &self.inverse
    }

    pub fn knots(&self) -> (f64, f64) {
        (self.u0, self.u1)
    }

    pub fn blend_coefficients(&self) -> [f64; 6] {
        self.blend
    }

    pub fn lambda_min(&self) -> f64 {
        SymmetricEigen::new(self.matrix).eigenvalues.min()
    }

    /// `ψ(u), ψ′(u), ψ″(u)`.
    pub fn blend(&self, u: f64) -> (f64, f64, f64) {
        if u <= self.u0 {
            (u, 1.0, 0.0)
        } else if u >= self.u1 {
            (SATURATED_VALUE, 0.0, 0.0)
        } else {
            self.blend_piece(u)
        }
    }

    /// The quintic piece evaluated at any `u` (also outside `[u0, u1]`).
    pub fn blend_piece(&self, u: f64) -> (f64, f64, f64) {
        let h = self.u1 - self.u0;
        let s = (u - self.u0) / h;
        let c = &self.blend;
        let v = c[0] + s * (c[1] + s * (c[2] + s * (c[3] + s * (c[4] + s * c[5]))));
        let d1 = c[1] + s * (2.0 * c[2] + s * (3.0 * c[3] + s * (4.0 * c[4] + s * 5.0 * c[5])));
        let d2 = 2.0 * c[2] + s * (6.0 * c[3] + s * (12.0 * c[4] + s * 20.0 * c[5]));
        (v, d1 / h, d2 / (h * h))
    }

    /// Value only.
    pub fn value(&self, x: &Vec3) -> f64 {
        self.blend(x.dot(&(self.matrix * x))).0
    }

    /// Value, gradient and Hessian by the chain rule through ψ.
    pub fn evaluate(&self, x: &Vec3) -> Evaluation {
        let mx = self.matrix * x;
        let u = x.dot(&mx);
        let (v, d1, d2) = self.blend(u);
        if d1 == 0.0 && d2 == 0.0 {
            return Evaluation { value: v, gradient: Vec3::zeros(), hessian: Mat3::zeros() };
        }
        let gradient = mx * (2.0 * d1);
        let hessian = self.matrix * (2.0 * d1) + (mx * mx.transpose()) * (4.0 * d2);
        Evaluation { value: v, gradient, hessian }
    }

    /// Inverse of ψ on `[0, 2)`: the quadratic-form level `u` with `ψ(u) = level`.
    pub fn blend_inverse(&self, level: f64) -> f64 {
        if level <= self.u0 {
            return level;
        }
        let (mut lo, mut hi) = (self.u0, self.u1);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.blend(mid).0 < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// A model placed by a translation: `{x : f(x − a) ≤ 1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Body {
    pub model: ModelFunction,
    pub translation: Vec3,
}

impl Body {
    pub fn new(model: ModelFunction, translation: Vec3) -> Self {
        Body { model, translation }
    }

    pub fn at_origin(model: ModelFunction) -> Self {
        Body { model, translation: Vec3::zeros() }
    }

    /// `f(x − a)`.
    pub fn value(&self, x: &Vec3) -> f64 {
        self.model.value(&(x - self.translation))
    }

    pub fn evaluate(&self, x: &Vec3) -> Evaluation {
        self.model.evaluate(&(x - self.translation))
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        self.value(x) <= 1.0
    }
}

fn symmetrize(m: &Mat3) -> Mat3 {
    (m + m.transpose()) * 0.5
}

/// Default upper knot for the given semiaxes.
pub fn default_u1(semiaxes: &[f64; 3]) -> f64 {
    let amax = semiaxes.iter().cloned().fold(0.0, f64::max);
    SATURATED_VALUE.min(saturation_bound(1.0 / (amax * amax)) * (1.0 - 1e-9))
}

/// Radical-inverse (Halton) coordinate of `index` in `base`.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Deterministic low-discrepancy unit direction number `k`.
pub fn halton_direction(k: u64) -> Vec3 {
    let z = 2.0 * halton(k + 1, 2) - 1.0;
    let phi = 2.0 * PI * halton(k + 1, 3);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Deterministic low-discrepancy point in the ball of the given radius.
pub fn halton_ball_point(k: u64, radius: f64) -> Vec3 {
    let r = radius * halton(k + 1, 5).cbrt();
    halton_direction(k) * r
}

/// Outcome of [`validate_model`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub failures: Vec<ValidationFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationFailure {
    pub check: String,
    pub witness: [f64; 3],
}

impl ValidationReport {
    fn from_failures(failures: Vec<ValidationFailure>) -> Self {
        ValidationReport { passed: failures.is_empty(), failures }
    }

    pub fn failed(&self, check: &str) -> bool {
        self.failures.iter().any(|f| f.check == check)
    }
}

/// Checks a model against the family assumptions on deterministic sample
/// points: interior origin, saturation beyond radius 1.5, positive-definite
/// Hessian and nonzero gradient on the shell `0.9 ≤ f ≤ 1.1`, monotone blend
/// and C² continuity of ψ at both knots. Only the first witness of each
/// failing check is recorded.
pub fn validate_model(model: &ModelFunction, samples: usize) -> ValidationReport {
    let samples = samples.max(100) as u64;
    let mut failures: Vec<ValidationFailure> = Vec::new();
    let mut fail = |check: &str, x: Vec3| {
        if !failures.iter().any(|f| f.check == check) {
            failures.push(ValidationFailure { check: check.to_string(), witness: [x.x, x.y, x.z] });
        }
    };

    if model.value(&Vec3::zeros()) >= 1.0 {
        fail("origin-interior", Vec3::zeros());
    }

    for k in 0..samples {
        let r = SATURATION_RADIUS * (1.0 + halton(k + 1, 5));
        let x = halton_direction(k) * r;
        let e = model.evaluate(&x);
        if e.value != SATURATED_VALUE || e.gradient != Vec3::zeros() || e.hessian != Mat3::zeros() {
            fail("saturation", x);
        }
    }

    for k in 0..samples {
        let d = halton_direction(k);
        let level = 0.9 + 0.2 * halton(k + 1, 5);
        let u = model.blend_inverse(level);
        let x = d * (u / d.dot(&(model.matrix * d))).sqrt();
        let e = model.evaluate(&x);
        if e.gradient.norm() <= 1e-12 {
            fail("shell-gradient", x);
        }
        if e.hessian.cholesky().is_none() {
            fail("shell-hessian", x);
        }
    }

    let (u0, u1) = model.knots();
    for k in 0..samples {
        let u = u0 + (u1 - u0) * (k as f64 + 0.5) / samples as f64;
        if model.blend(u).1 < -1e-12 {
            fail("monotone-blend", knot_witness(model, u));
        }
    }

    if !knot_continuous(model, u0, true) {
        fail("knot-continuity-u0", knot_witness(model, u0));
    }
    if !knot_continuous(model, u1, false) {
        fail("knot-continuity-u1", knot_witness(model, u1));
    }

    ValidationReport::from_failures(failures)
}

fn knot_witness(model: &ModelFunction, u: f64) -> Vec3 {
    let e = Vec3::x();
    e * (u / e.dot(&(model.matrix * e))).sqrt()
}

/// Compares the one-sided limits of ψ, ψ′, ψ″ at a knot and the two one-sided
/// difference quotients of ψ.
fn knot_continuous(model: &ModelFunction, knot: f64, lower: bool) -> bool {
    let outer = if lower { (knot, 1.0, 0.0) } else { (SATURATED_VALUE, 0.0, 0.0) };
    let inner = model.blend_piece(knot);
    let scale = 1.0 + knot.abs();
    let analytic_ok = (outer.0 - inner.0).abs() <= 1e-9 * scale
        && (outer.1 - inner.1).abs() <= 1e-7 * scale
        && (outer.2 - inner.2).abs() <= 1e-5 * scale;

    let h = 1e-6 * scale;
    let psi = |u: f64| model.blend(u).0;
    let left = (psi(knot) - psi(knot - h)) / h;
    let right = (psi(knot + h) - psi(knot)) / h;
    let fd_ok = (left - right).abs() <= 1e-4;
    analytic_ok && fd_ok
}

/// Sampled C² distance: the maximum over deterministic points of the ball of
/// radius 1.5 of `max(|Δf|, ‖Δ∇f‖, ‖Δf″‖₂)`. A lower bound on the true sup.
pub fn c2_distance(m1: &ModelFunction, m2: &ModelFunction, samples: usize) -> f64 {
    let samples = samples.max(100) as u64;
    let mut best: f64 = 0.0;
    for k in 0..samples {
        let x = halton_ball_point(k, SATURATION_RADIUS);
        let a = m1.evaluate(&x);
        let b = m2.evaluate(&x);
        let dv = (a.value - b.value).abs();
        let dg = (a.gradient - b.gradient).norm();
        let dh = spectral_norm(&(a.hessian - b.hessian));
        best = best.max(dv).max(dg).max(dh);
    }
    best
}

fn spectral_norm(m: &Mat3) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.amax()
}
