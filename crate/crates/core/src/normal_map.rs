//! Outward unit normal map of a placed body and its right inverse, the
//! support point.

use nalgebra::{Matrix4, Vector4};
use thiserror::Error;

use crate::models::{Body, ModelFunction};
use crate::Vec3;

/// Tolerance on the Lagrange-system residual.
pub const SUPPORT_TOLERANCE: f64 = 1e-12;
/// Newton iteration cap.
pub const SUPPORT_MAX_ITERATIONS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalMapError {
    #[error("zero gradient at {0:?}")]
    ZeroGradient([f64; 3]),
    #[error("zero direction")]
    ZeroDirection,
    #[error("support solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// Boundary point with prescribed outward normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupportSolution {
    pub point: Vec3,
    /// `∇f(point − a) = λ·ω`.
    pub multiplier: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// `∇f(p − a)/‖∇f(p − a)‖`.
pub fn outward_normal(body: &Body, p: &Vec3) -> Result<Vec3, NormalMapError> {
    let g = body.evaluate(p).gradient;
    let n = g.norm();
    if n < 1e-12 {
        return Err(NormalMapError::ZeroGradient([p.x, p.y, p.z]));
    }
    Ok(g / n)
}

/// Support point of `body` in direction `omega` (normalised internally).
///
/// Solved at the origin and translated afterwards, so translating a body
/// translates its support points exactly.
pub fn support_point(body: &Body, omega: &Vec3) -> Result<SupportSolution, NormalMapError> {
    let norm = omega.norm();
    if !(norm > 0.0) {
        return Err(NormalMapError::ZeroDirection);
    }
    let w = omega / norm;
    let model = &body.model;

    let mw = model.inverse_matrix() * w;
    let scale = w.dot(&mw).sqrt();
    let (x, multiplier, residual, iterations) = newton(model, &w, mw / scale, 2.0 / scale)?;
    Ok(SupportSolution { point: x + body.translation, multiplier, residual, iterations })
}

/// Support point by Newton iteration alone, started from the body-frame
/// guess `start` (relative to the translation) with multiplier `multiplier`.
pub fn support_point_from(
    body: &Body,
    omega: &Vec3,
    start: Vec3,
    multiplier: f64,
) -> Result<SupportSolution, NormalMapError> {
    let norm = omega.norm();
    if !(norm > 0.0) {
        return Err(NormalMapError::ZeroDirection);
    }
    let (x, multiplier, residual, iterations) = newton(&body.model, &(omega / norm), start, multiplier)?;
    Ok(SupportSolution { point: x + body.translation, multiplier, residual, iterations })
}

/// Newton on `{∇f(x) = λω, f(x) = 1}`, with step halving whenever `f`
/// leaves `[0.5, 2)`.
fn newton(
    model: &ModelFunction,
    w: &Vec3,
    mut x: Vec3,
    mut lambda: f64,
) -> Result<(Vec3, f64, f64, usize), NormalMapError> {
    let residual_at = |x: &Vec3, lambda: f64| {
        let e = model.evaluate(x);
        let r = (e.gradient - w * lambda).amax().max((e.value - 1.0).abs());
        (e, r)
    };

    let (mut eval, mut residual) = residual_at(&x, lambda);
    let mut iterations = 0;
    while residual > SUPPORT_TOLERANCE {
        if iterations == SUPPORT_MAX_ITERATIONS {
            return Err(NormalMapError::NoConvergence { iterations, residual });
        }
        iterations += 1;
        let h = eval.hessian;
        let g = eval.gradient;
        #[rustfmt::skip]
        let jac = Matrix4::new(
            h[(0, 0)], h[(0, 1)], h[(0, 2)], -w.x,
            h[(1, 0)], h[(1, 1)], h[(1, 2)], -w.y,
            h[(2, 0)], h[(2, 1)], h[(2, 2)], -w.z,
            g.x, g.y, g.z, 0.0,
        );
        let rhs = -Vector4::new(
            g.x - lambda * w.x,
            g.y - lambda * w.y,
            g.z - lambda * w.z,
            eval.value - 1.0,
        );
        let Some(step) = jac.lu().solve(&rhs) else {
            return Err(NormalMapError::NoConvergence { iterations, residual });
        };
        let dx = Vec3::new(step[0], step[1], step[2]);
        let mut damping = 1.0;
        loop {
            let cand = x + dx * damping;
            let v = model.value(&cand);
            if (0.5..2.0).contains(&v) || damping < 1e-6 {
                x = cand;
                lambda += step[3] * damping;
                break;
            }
            damping *= 0.5;
        }
        (eval, residual) = residual_at(&x, lambda);
    }
    Ok((x, lambda, residual, iterations))
}

/// Support function `h(ω) = ωᵀ·p(ω)` for unit `ω`.
pub fn support_value(body: &Body, omega: &Vec3) -> Result<f64, NormalMapError> {
    let s = support_point(body, omega)?;
    Ok(omega.normalize().dot(&s.point))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{halton_direction, ModelFunction};
    use nalgebra::UnitQuaternion;

    fn unit_sphere(a: Vec3) -> Body {
        Body::new(ModelFunction::ellipsoid([1.0, 1.0, 1.0], 1.2, 2.0).unwrap(), a)
    }

    fn stretched() -> Body {
        Body::at_origin(ModelFunction::ellipsoid([1.2, 1.0, 1.0], 1.2, 1.5).unwrap())
    }

    #[test]
    fn normals_on_axes() {
        assert_eq!(outward_normal(&unit_sphere(Vec3::zeros()), &Vec3::x()).unwrap(), Vec3::x());
        let b = unit_sphere(Vec3::new(5.0, 0.0, 0.0));
        assert_eq!(outward_normal(&b, &Vec3::new(6.0, 0.0, 0.0)).unwrap(), Vec3::x());
        let n = outward_normal(&stretched(), &Vec3::new(1.2, 0.0, 0.0)).unwrap();
        assert!((n - Vec3::x()).norm() < 1e-15);
        assert!(matches!(
            outward_normal(&b, &Vec3::new(9.0, 0.0, 0.0)),
            Err(NormalMapError::ZeroGradient(_))
        ));
    }

    #[test]
    fn support_examples() {
        let s = support_point(&unit_sphere(Vec3::zeros()), &Vec3::z()).unwrap();
        assert!((s.point - Vec3::z()).norm() < 1e-15);
        let s = support_point(&stretched(), &Vec3::x()).unwrap();
        assert!((s.point - Vec3::new(1.2, 0.0, 0.0)).norm() < 1e-14);

        let w = Vec3::new(1.0, 1.0, 0.0).normalize();
        let s = support_point(&stretched(), &w).unwrap();
        let expect = Vec3::new(1.44, 1.0, 0.0) / (1.22f64 * 2.0).sqrt();
        assert!((s.point - expect).norm() < 1e-12);
        assert!((s.point - Vec3::new(0.92186, 0.64018, 0.0)).norm() < 1e-5);
        assert!((stretched().value(&s.point) - 1.0).abs() < 1e-12);
        assert!(s.multiplier > 0.0);

        let v = support_value(&stretched(), &w).unwrap();
        assert!((v - 1.22f64.sqrt()).abs() < 1e-12);
        assert!((v - 1.1045).abs() < 1e-4);
        assert_eq!(support_value(&unit_sphere(Vec3::new(5.0, 0.0, 0.0)), &Vec3::x()).unwrap(), 6.0);
    }

    #[test]
    fn round_trip_and_covariance() {
        let q = UnitQuaternion::from_euler_angles(0.4, 0.1, -0.7);
        let m = ModelFunction::rotated_ellipsoid([1.2, 1.0, 0.8], q, 1.3, 1.5).unwrap();
        let a = Vec3::new(3.0, -2.0, 7.5);
        let b0 = Body::at_origin(m.clone());
        let b1 = Body::new(m, a);
        for k in 0..300 {
            let w = halton_direction(k);
            let s0 = support_point(&b0, &w).unwrap();
            let s1 = support_point(&b1, &w).unwrap();
            assert_eq!(s1.point, s0.point + a);
            assert!(s0.residual <= 1e-10);
            let n = outward_normal(&b1, &s1.point).unwrap();
            assert!((n - w).norm() < 1e-8);
            let width = support_value(&b0, &w).unwrap() + support_value(&b0, &-w).unwrap();
            assert!(width > 0.0 && width <= 3.0);
        }
    }

    #[test]
    fn newton_from_a_sphere_guess() {
        let q = UnitQuaternion::from_euler_angles(-0.3, 0.5, 1.1);
        let m = ModelFunction::rotated_ellipsoid([1.2, 0.9, 0.8], q, 1.3, 1.5).unwrap();
        let b = Body::new(m, Vec3::new(1.0, 2.0, 3.0));
        for k in 0..100 {
            let w = halton_direction(k);
            let s = support_point_from(&b, &w, w * 0.8, 2.0).unwrap();
            assert!((s.point - support_point(&b, &w).unwrap().point).norm() < 1e-12);
        }
    }

    #[test]
    fn newton_converges_from_perturbed_start() {
        let m = ModelFunction::ellipsoid([1.2, 1.0, 0.8], 1.3, 1.5).unwrap();
        let b = Body::at_origin(m.clone());
        for k in 0..50 {
            let w = halton_direction(k);
            let exact = support_point(&b, &w).unwrap();
            assert_eq!(exact.iterations, 0);
            let start = exact.point * 0.9 + halton_direction(k + 99) * 0.05;
            let (x, lambda, r, it) = newton(&m, &w, start, exact.multiplier * 1.1).unwrap();
            assert!(it > 0 && r <= SUPPORT_TOLERANCE);
            assert!((x - exact.point).norm() < 1e-10);
            assert!((lambda - exact.multiplier).abs() < 1e-10);
        }
    }
}
