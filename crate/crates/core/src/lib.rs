//! Convex hulls of disjoint smooth convex bodies, studied through their
//! hidden discs on the unit sphere.
//!
//! The crate is organised bottom-up:
//!
//! * [`models`] builds saturated-ellipsoid model functions `f` with analytic
//!   gradients and Hessians, and validates them.
//! * [`normal_map`] provides the outward normal map of a placed body and its
//!   right inverse, the support point.
//! * [`preseam`] places body pairs from descriptors and traces the pre-seam
//!   curve `{ω : ωᵀq(ω) = 0}` with analytic tangents.
//! * [`discs`] turns closed curves on the sphere into discs, perturbs them
//!   into general position and intersects their boundaries.
//! * [`arrangement`] builds the arrangement of disc boundaries and derives
//!   overlaps, crossways, hubs, links, coves and holes.
//! * [`ds`] checks Davenport–Schinzel sequences and tabulates `λ_s(n)`.
//! * [`pipeline`] ties everything together for whole scenes.
//!
//! Data-parallel loops go through [`exec::Exec`]; with the `parallel`
//! feature disabled every loop runs sequentially.

pub mod arrangement;
pub mod discs;
pub mod ds;
pub mod exec;
pub mod models;
pub mod normal_map;
pub mod pipeline;
pub mod preseam;
pub mod sphere;

pub use exec::Exec;

/// Column vector in world coordinates.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3×3 matrix (quadratic forms, Hessians).
pub type Mat3 = nalgebra::Matrix3<f64>;
