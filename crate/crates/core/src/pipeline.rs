//! Scenes of disjoint bodies, per-body hidden-disc unions and hull feature
//! accounting, random scenes and the scaling experiment.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::{Unit, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arrangement::{self, build_with_crossings, holes, verify_with, Arrangement, ArrangementError, AREA_TOLERANCE};
use crate::discs::{
    coincidence, general_position, hidden_disc_placed, Coincidence, DiscError, PerturbPolicy, SphericalDisc,
    COINCIDENCE_TOLERANCE,
};
use crate::ds::{self, LabelSequence};
use crate::models::{validate_model, Body, ModelFunction, ModelSpec};
use crate::normal_map::{support_point, support_value, NormalMapError};
use crate::preseam::{trace_placed, PairDescriptor, PlacedPair, PreseamCurve, TracePolicy};
use crate::sphere::{angle_between, any_perpendicular, distance_to_loop, random_unit, Basis, FOUR_PI};
use crate::{Exec, Vec3};

pub const SCENE_VERSION: u32 = 1;
/// Bodies fit in balls of this radius, so centres farther apart than twice
/// it are disjoint.
pub const BOUNDING_RADIUS: f64 = 1.5;
/// Tolerance of the closest-direction iteration.
pub const SEPARATION_TOLERANCE: f64 = 1e-10;
const SEPARATION_MAX_ITERATIONS: usize = 200;
/// Sample count for model validation on load.
const VALIDATION_SAMPLES: usize = 256;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported scene version {0} (expected {SCENE_VERSION})")]
    Version(u32),
    #[error("model {index}: {reason}")]
    InvalidModel { index: usize, reason: String },
    #[error("bodies {a} and {b} overlap (best separation {separation:e})")]
    Overlap { a: usize, b: usize, separation: f64 },
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bodies {a} and {b}: closest direction did not converge")]
    Separation { a: usize, b: usize },
    #[error("body {body} vs body {other}: {source}")]
    Pair { body: usize, other: usize, source: DiscError },
    #[error("body {body}: {source}")]
    Arrangement { body: usize, source: ArrangementError },
}

impl PipelineError {
    /// Whether the error is a problem with the input rather than a numerical
    /// failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            PipelineError::Parse(_)
                | PipelineError::Version(_)
                | PipelineError::InvalidModel { .. }
                | PipelineError::Overlap { .. }
                | PipelineError::Io(_)
        )
    }
}

impl From<NormalMapError> for DiscError {
    fn from(e: NormalMapError) -> Self {
        DiscError::Preseam(e.into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyEntry {
    pub model: usize,
    pub translation: [f64; 3],
}

/// On-disk form of a scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub models: Vec<ModelSpec>,
    pub bodies: Vec<BodyEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub name: String,
    pub seed: Option<u64>,
    pub models: Vec<ModelFunction>,
    /// Model index and translation of every body.
    pub bodies: Vec<(usize, Vec3)>,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.bodies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bodies.is_empty()
    }

    pub fn body(&self, i: usize) -> Body {
        let (m, a) = self.bodies[i];
        Body::new(self.models[m].clone(), a)
    }

    pub fn to_file(&self) -> SceneFile {
        SceneFile {
            version: SCENE_VERSION,
            name: self.name.clone(),
            seed: self.seed,
            models: self.models.iter().map(|m| m.to_spec()).collect(),
            bodies: self.bodies.iter().map(|(m, a)| BodyEntry { model: *m, translation: [a.x, a.y, a.z] }).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scene serialises")
    }

    /// Builds and validates a scene: every model passes [`validate_model`]
    /// and the bodies are pairwise disjoint.
    pub fn from_file(file: SceneFile) -> Result<Self, PipelineError> {
        if file.version != SCENE_VERSION {
            return Err(PipelineError::Version(file.version));
        }
        let mut models = Vec::with_capacity(file.models.len());
        for (index, spec) in file.models.iter().enumerate() {
            let m = ModelFunction::from_spec(spec)
                .map_err(|e| PipelineError::InvalidModel { index, reason: e.to_string() })?;
            let report = validate_model(&m, VALIDATION_SAMPLES);
            if !report.passed {
                let names: Vec<&str> = report.failures.iter().map(|f| f.check.as_str()).collect();
                return Err(PipelineError::InvalidModel {
                    index,
                    reason: format!("validation failed: {}", names.join(", ")),
                });
            }
            models.push(m);
        }
        let mut bodies = Vec::with_capacity(file.bodies.len());
        for (i, b) in file.bodies.iter().enumerate() {
            if b.model >= models.len() {
                return Err(PipelineError::Parse(format!("body {i} refers to missing model {}", b.model)));
            }
            bodies.push((b.model, Vec3::from(b.translation)));
        }
        let scene = Scene { name: file.name, seed: file.seed, models, bodies };
        check_disjoint(&scene)?;
        Ok(scene)
    }
}

pub fn parse_scene(text: &str) -> Result<Scene, PipelineError> {
    let file: SceneFile = serde_json::from_str(text).map_err(|e| PipelineError::Parse(e.to_string()))?;
    Scene::from_file(file)
}

pub fn load_scene(path: &Path) -> Result<Scene, PipelineError> {
    parse_scene(&fs::read_to_string(path)?)
}

/// Pairwise disjointness: bounding balls first, then a positive separation
/// along the closest direction.
pub fn check_disjoint(scene: &Scene) -> Result<(), PipelineError> {
    for a in 0..scene.len() {
        for b in a + 1..scene.len() {
            let d = (scene.bodies[b].1 - scene.bodies[a].1).norm();
            if d > 2.0 * BOUNDING_RADIUS {
                continue;
            }
            let (ba, bb) = (scene.body(a), scene.body(b));
            let sep = match closest_direction(&ba, &bb) {
                Ok((_, gap)) => gap,
                Err(ClosestError::NotConverged { best }) => best,
                Err(ClosestError::Support(_)) => f64::NEG_INFINITY,
            };
            if !(sep > 0.0) {
                return Err(PipelineError::Overlap { a, b, separation: sep });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClosestError {
    Support(NormalMapError),
    /// Best separation found before giving up; positive values still prove
    /// disjointness.
    NotConverged { best: f64 },
}

/// `uᵀ(p1(−u) − p0(u))`: the width of the slab between the bodies
/// perpendicular to `u`, with the support points.
fn separation(b0: &Body, b1: &Body, u: &Vec3) -> Result<(f64, Vec3), NormalMapError> {
    let p = support_point(b0, u)?.point;
    let q = support_point(b1, &-u)?.point;
    Ok((u.dot(&(q - p)), q - p))
}

/// Direction of the shortest segment from `b0` to `b1` and the gap.
///
/// The separation `uᵀ(p1(−u) − p0(u))` is maximised over unit `u`; its
/// gradient is `q − p`, exact from the support points. Newton steps use a
/// finite-difference Hessian in a local chart, with backtracking.
pub fn closest_direction(b0: &Body, b1: &Body) -> Result<(Vec3, f64), ClosestError> {
    const H: f64 = 1e-5;
    let chart = |u: &Vec3, e1: &Vec3, e2: &Vec3, x: f64, y: f64| -> Result<(Vec3, f64, [f64; 2]), ClosestError> {
        let w = u + e1 * x + e2 * y;
        let v = w.normalize();
        let (sep, d) = separation(b0, b1, &v).map_err(ClosestError::Support)?;
        let proj = |e: &Vec3| d.dot(&(e - v * v.dot(e))) / w.norm();
        Ok((v, sep, [proj(e1), proj(e2)]))
    };
    let mut u = (b1.translation - b0.translation).normalize();
    let (mut sep, _) = separation(b0, b1, &u).map_err(ClosestError::Support)?;
    for _ in 0..SEPARATION_MAX_ITERATIONS {
        let e1 = any_perpendicular(&u);
        let e2 = u.cross(&e1);
        let (_, _, g) = chart(&u, &e1, &e2, 0.0, 0.0)?;
        let (_, d) = separation(b0, b1, &u).map_err(ClosestError::Support)?;
        let scale = d.norm().max(1e-300);
        if (g[0] * g[0] + g[1] * g[1]).sqrt() <= SEPARATION_TOLERANCE * scale {
            return if sep > 0.0 { Ok((u, sep)) } else { Err(ClosestError::NotConverged { best: sep }) };
        }
        let mut hess = [[0.0; 2]; 2];
        for k in 0..2 {
            let (x, y) = if k == 0 { (H, 0.0) } else { (0.0, H) };
            let (_, _, gp) = chart(&u, &e1, &e2, x, y)?;
            let (_, _, gm) = chart(&u, &e1, &e2, -x, -y)?;
            for r in 0..2 {
                hess[r][k] = (gp[r] - gm[r]) / (2.0 * H);
            }
        }
        let off = 0.5 * (hess[0][1] + hess[1][0]);
        let det = hess[0][0] * hess[1][1] - off * off;
        let step = if hess[0][0] < 0.0 && det > 0.0 {
            [-(hess[1][1] * g[0] - off * g[1]) / det, -(hess[0][0] * g[1] - off * g[0]) / det]
        } else {
            [g[0] / scale, g[1] / scale]
        };
        let mut t = 1.0;
        loop {
            let (v, s, _) = chart(&u, &e1, &e2, step[0] * t, step[1] * t)?;
            if s >= sep - 1e-15 * sep.abs().max(1.0) || t < 1e-9 {
                u = v;
                sep = s;
                break;
            }
            t *= 0.5;
        }
    }
    Err(ClosestError::NotConverged { best: sep })
}

/// Descriptor of the pair `(b0, b1)`: the closest direction as axis, the gap,
/// and a fixed perpendicular as reference.
pub fn recover_descriptor(b0: &Body, b1: &Body) -> Result<PairDescriptor, ClosestError> {
    let (v0, t) = closest_direction(b0, b1)?;
    PairDescriptor::new(b0.model.clone(), b1.model.clone(), v0, t, any_perpendicular(&v0))
        .map_err(|_| ClosestError::NotConverged { best: t })
}

/// Body `i` at the origin and body `j` relative to it, with the basis
/// whose axis is the closest direction.
fn placed_pair(scene: &Scene, i: usize, j: usize) -> Result<(PlacedPair, Basis), PipelineError> {
    let b0 = Body::at_origin(scene.models[scene.bodies[i].0].clone());
    let b1 = Body::new(scene.models[scene.bodies[j].0].clone(), scene.bodies[j].1 - scene.bodies[i].1);
    let (v0, _) = closest_direction(&b0, &b1).map_err(|e| match e {
        ClosestError::Support(s) => PipelineError::Pair { body: i, other: j, source: s.into() },
        ClosestError::NotConverged { .. } => PipelineError::Separation { a: i, b: j },
    })?;
    Ok((PlacedPair { body0: b0, body1: b1 }, Basis::new(v0, any_perpendicular(&v0))))
}

/// Pre-seam of body `i` against body `j`.
pub fn pair_curve(scene: &Scene, i: usize, j: usize, policy: &TracePolicy) -> Result<PreseamCurve, PipelineError> {
    let (pair, basis) = placed_pair(scene, i, j)?;
    trace_placed(pair, basis, policy).map_err(|e| PipelineError::Pair { body: i, other: j, source: e.into() })
}

/// Hidden disc of body `i` caused by body `j`, labelled `j`.
pub fn pair_disc(scene: &Scene, i: usize, j: usize, policy: &TracePolicy) -> Result<SphericalDisc, PipelineError> {
    let (pair, basis) = placed_pair(scene, i, j)?;
    hidden_disc_placed(pair, basis, policy, j).map_err(|source| PipelineError::Pair { body: i, other: j, source })
}

/// Knobs of the per-body analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub trace: TracePolicy,
    pub perturb: PerturbPolicy,
    pub area_tolerance: f64,
    pub seed: u64,
    #[serde(default)]
    pub exec: Exec,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            trace: TracePolicy::default(),
            perturb: PerturbPolicy::WhenNeeded,
            area_tolerance: AREA_TOLERANCE,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

impl AnalysisOptions {
    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self.trace.exec = exec;
        self
    }
}

/// Exposed-region combinatorics of one body.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BodyReport {
    pub body: usize,
    pub discs: usize,
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub covered_faces: usize,
    pub overlaps: usize,
    pub crossways: usize,
    pub contained: usize,
    pub min_crossway_area: Option<f64>,
    pub hubs: usize,
    pub links: usize,
    pub coves: usize,
    pub holes: usize,
    pub multiply_connected_holes: usize,
    pub disc_hole_incidences: usize,
    /// Vertices, edges and faces of the union boundary (exposed faces).
    pub boundary_vertices: usize,
    pub boundary_edges: usize,
    pub features: usize,
    pub hidden_area: f64,
    pub exposed_area: f64,
    pub max_pair_crossings: usize,
    pub max_hole_sequence: usize,
    pub max_alternation: usize,
    /// Order at which hole sequences are checked: max pair crossings + 1.
    pub measured_order: usize,
    pub sequences_ok: bool,
    /// Every hole sequence within `λ_s(n)` when that is brute-forceable.
    pub within_lambda: bool,
    pub fully_hidden: bool,
    pub perturbation: f64,
    /// Discs dropped because an earlier disc has the same boundary and interior.
    pub coincident_discs: usize,
}

impl BodyReport {
    fn exposed(body: usize) -> Self {
        BodyReport {
            body,
            discs: 0,
            vertices: 0,
            edges: 0,
            faces: 1,
            covered_faces: 0,
            overlaps: 0,
            crossways: 0,
            contained: 0,
            min_crossway_area: None,
            hubs: 0,
            links: 0,
            coves: 0,
            holes: 1,
            multiply_connected_holes: 0,
            disc_hole_incidences: 0,
            boundary_vertices: 0,
            boundary_edges: 0,
            features: 1,
            hidden_area: 0.0,
            exposed_area: FOUR_PI,
            max_pair_crossings: 0,
            max_hole_sequence: 0,
            max_alternation: 0,
            measured_order: 1,
            sequences_ok: true,
            within_lambda: true,
            fully_hidden: false,
            perturbation: 0.0,
            coincident_discs: 0,
        }
    }

    /// Two discs with complementary interiors cover the whole sphere.
    fn covered(body: usize, discs: usize, coincident_discs: usize) -> Self {
        BodyReport {
            discs,
            covered_faces: 1,
            holes: 0,
            features: 0,
            hidden_area: FOUR_PI,
            exposed_area: 0.0,
            fully_hidden: true,
            coincident_discs,
            ..Self::exposed(body)
        }
    }
}

/// Report together with the arrangement it was computed from.
#[derive(Clone, Debug)]
pub struct BodyAnalysis {
    pub report: BodyReport,
    pub arrangement: Option<Arrangement>,
    pub hole_sequences: Vec<LabelSequence>,
}

pub fn analyze_body(scene: &Scene, i: usize, options: &AnalysisOptions) -> Result<BodyReport, PipelineError> {
    Ok(analyze_body_full(scene, i, options)?.report)
}

pub fn analyze_body_full(scene: &Scene, i: usize, options: &AnalysisOptions) -> Result<BodyAnalysis, PipelineError> {
    if scene.len() <= 1 {
        return Ok(BodyAnalysis { report: BodyReport::exposed(i), arrangement: None, hole_sequences: Vec::new() });
    }
    let others: Vec<usize> = (0..scene.len()).filter(|&j| j != i).collect();
    let traced = options.exec.try_map(&others, |&j| pair_disc(scene, i, j, &options.trace))?;
    let (discs, coincident_discs, complementary) = merge_coincident(i, traced, options.exec)?;
    if complementary {
        let report = BodyReport::covered(i, discs.len(), coincident_discs);
        return Ok(BodyAnalysis { report, arrangement: None, hole_sequences: Vec::new() });
    }
    let seed = options.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let gp = general_position(&discs, seed, options.perturb, options.exec)
        .map_err(|source| pair_error(i, &discs, source))?;
    let arr = build_with_crossings(&gp.discs, &gp.crossings)
        .map_err(|source| PipelineError::Arrangement { body: i, source })?;
    verify_with(&arr, options.area_tolerance).map_err(|source| PipelineError::Arrangement { body: i, source })?;

    let summary = arrangement::report(&arr);
    let hole_list = holes(&arr);
    let max_pair_crossings = gp.crossings.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    let measured_order = max_pair_crossings + 1;
    let mut sequences = Vec::new();
    for h in &hole_list {
        for s in &h.sequences {
            sequences.push(LabelSequence::new(s.clone(), true).expect("hole sequences have no repeats"));
        }
    }
    let sequences_ok = sequences.iter().all(|s| ds::is_davenport_schinzel(s, measured_order));
    let within_lambda = sequences.iter().all(|s| {
        let n = s.alphabet().len();
        match ds::lambda_brute(n, measured_order) {
            Ok(l) => s.len() <= l,
            Err(_) => true,
        }
    });

    let is_hole: Vec<bool> = arr.faces.iter().map(|f| f.cover.is_empty()).collect();
    let boundary_edges = arr.edge_faces().filter(|&(_, a, b)| is_hole[a] || is_hole[b]).count();
    let boundary_vertices = arr
        .vertices
        .iter()
        .filter(|v| v.outgoing.iter().any(|&h| is_hole[arr.face_of[h]]))
        .count();
    let exposed_area: f64 = hole_list.iter().map(|h| h.area).sum();
    let report = BodyReport {
        body: i,
        discs: arr.discs.len(),
        vertices: summary.vertices,
        edges: summary.edges,
        faces: summary.faces,
        covered_faces: summary.faces - hole_list.len(),
        overlaps: summary.overlaps,
        crossways: summary.crossways,
        contained: summary.contained,
        min_crossway_area: summary.min_crossway_area,
        hubs: summary.hubs,
        links: summary.links,
        coves: summary.coves,
        holes: hole_list.len(),
        multiply_connected_holes: hole_list.iter().filter(|h| !h.simply_connected).count(),
        disc_hole_incidences: summary.disc_hole_incidences,
        boundary_vertices,
        boundary_edges,
        features: boundary_vertices + boundary_edges + hole_list.len(),
        hidden_area: summary.area_sum - exposed_area,
        exposed_area,
        max_pair_crossings,
        max_hole_sequence: sequences.iter().map(|s| s.len()).max().unwrap_or(0),
        max_alternation: sequences.iter().map(ds::max_alternation).max().unwrap_or(0),
        measured_order,
        sequences_ok,
        within_lambda,
        fully_hidden: hole_list.is_empty(),
        perturbation: gp.magnitude,
        coincident_discs,
    };
    Ok(BodyAnalysis { report, arrangement: Some(arr), hole_sequences: sequences })
}

/// Drops discs equal to an earlier one. Returns the kept discs, the number
/// dropped, and whether some pair is complementary.
fn merge_coincident(
    body: usize,
    discs: Vec<SphericalDisc>,
    exec: Exec,
) -> Result<(Vec<SphericalDisc>, usize, bool), PipelineError> {
    let pairs: Vec<(usize, usize)> =
        (0..discs.len()).flat_map(|a| (a + 1..discs.len()).map(move |b| (a, b))).collect();
    let relations = exec.try_map(&pairs, |&(a, b)| {
        coincidence(&discs[a], &discs[b], COINCIDENCE_TOLERANCE)
            .map_err(|source| PipelineError::Pair { body, other: discs[b].label, source })
    })?;
    let mut dropped = vec![false; discs.len()];
    let mut complementary = false;
    for (&(_, b), r) in pairs.iter().zip(&relations) {
        match r {
            Some(Coincidence::Equal) => dropped[b] = true,
            Some(Coincidence::Complementary) => complementary = true,
            None => {}
        }
    }
    let count = dropped.iter().filter(|&&d| d).count();
    let kept = discs.into_iter().zip(dropped).filter(|(_, d)| !d).map(|(disc, _)| disc).collect();
    Ok((kept, count, complementary))
}

/// Attaches pair provenance to a general-position failure.
fn pair_error(body: usize, discs: &[SphericalDisc], source: DiscError) -> PipelineError {
    let other = match &source {
        DiscError::TangentialContact { a, .. } | DiscError::OddCrossings { a, .. } | DiscError::Refinement { a, .. } => *a,
        _ => discs.first().map_or(body, |d| d.label),
    };
    PipelineError::Pair { body, other, source }
}

/// Per-body reports and the total feature estimate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HullFeatureReport {
    pub scene: String,
    pub seed: Option<u64>,
    pub bodies: Vec<BodyReport>,
    pub total_features: usize,
    pub fully_hidden: usize,
    pub total_hubs: usize,
    pub total_overlaps: usize,
    pub total_crossways: usize,
    pub total_disc_hole_incidences: usize,
}

pub fn hull_feature_report(scene: &Scene, options: &AnalysisOptions) -> Result<HullFeatureReport, PipelineError> {
    let bodies = options.exec.try_map_range(scene.len(), |i| analyze_body(scene, i, options))?;
    let sum = |f: fn(&BodyReport) -> usize| bodies.iter().map(f).sum::<usize>();
    Ok(HullFeatureReport {
        scene: scene.name.clone(),
        seed: scene.seed,
        total_features: sum(|b| b.features),
        fully_hidden: bodies.iter().filter(|b| b.fully_hidden).count(),
        total_hubs: sum(|b| b.hubs),
        total_overlaps: sum(|b| b.overlaps),
        total_crossways: sum(|b| b.crossways),
        total_disc_hole_incidences: sum(|b| b.disc_hole_incidences),
        bodies,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Spheres,
    #[default]
    Ellipsoids,
}

/// Random scene parameters: semiaxes (or radii) uniform in `axis_range`,
/// centres on a grid of `spacing` jittered by up to `jitter` per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub family: Family,
    pub axis_range: (f64, f64),
    pub spacing: f64,
    pub jitter: f64,
}

impl Default for FamilyParams {
    fn default() -> Self {
        FamilyParams { family: Family::Ellipsoids, axis_range: (0.8, 1.2), spacing: 4.0, jitter: 0.4 }
    }
}

impl FamilyParams {
    pub fn spheres() -> Self {
        FamilyParams { family: Family::Spheres, ..Self::default() }
    }

    pub fn ellipsoids() -> Self {
        Self::default()
    }
}

/// `n` bodies on the first `n` cells of the smallest cubic grid holding them.
pub fn random_scene(n: usize, params: &FamilyParams, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut side = 1;
    while side * side * side < n {
        side += 1;
    }
    let (lo, hi) = params.axis_range;
    let mut models = Vec::with_capacity(n);
    let mut bodies = Vec::with_capacity(n);
    for k in 0..n {
        let cell = Vec3::new((k % side) as f64, ((k / side) % side) as f64, (k / (side * side)) as f64);
        let jitter = Vec3::from_fn(|_, _| rng.random_range(-params.jitter..=params.jitter));
        let model = match params.family {
            Family::Spheres => ModelFunction::sphere(rng.random_range(lo..=hi)),
            Family::Ellipsoids => {
                let axes = [rng.random_range(lo..=hi), rng.random_range(lo..=hi), rng.random_range(lo..=hi)];
                let axis = Unit::new_normalize(random_unit(&mut rng));
                let rot = UnitQuaternion::from_axis_angle(&axis, rng.random_range(0.0..std::f64::consts::PI));
                ModelFunction::rotated_ellipsoid_default(axes, rot)
            }
        }
        .expect("family parameters give valid models");
        models.push(model);
        bodies.push((k, cell * params.spacing + jitter));
    }
    let name = format!("{}-{n}-{seed}", match params.family {
        Family::Spheres => "spheres",
        Family::Ellipsoids => "ellipsoids",
    });
    Scene { name, seed: Some(seed), models, bodies }
}

/// Outcome of sampling directions against the true support functions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HiddenSideCheck {
    pub checked: usize,
    pub skipped: usize,
    pub violations: Vec<[f64; 3]>,
}

/// Compares union membership with `max_j h_j(ω) > h_i(ω)` at random `ω`.
/// Directions within `max(1e−6, sagitta)` of a disc boundary polyline, or
/// with the two sides within `tolerance`, are skipped.
pub fn hidden_side_check(
    scene: &Scene,
    i: usize,
    analysis: &BodyAnalysis,
    samples: usize,
    tolerance: f64,
    seed: u64,
) -> Result<HiddenSideCheck, PipelineError> {
    let Some(arr) = &analysis.arrangement else {
        return Ok(HiddenSideCheck { checked: 0, skipped: samples, violations: Vec::new() });
    };
    let bodies: Vec<Body> = (0..scene.len()).map(|k| scene.body(k)).collect();
    let margins: Vec<f64> = arr.discs.iter().map(|d| sagitta(d).max(1e-6)).collect();
    let polylines: Vec<Vec<Vec3>> = arr.discs.iter().map(|d| d.points()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = HiddenSideCheck { checked: 0, skipped: 0, violations: Vec::new() };
    for _ in 0..samples {
        let w = random_unit(&mut rng);
        if polylines.iter().zip(&margins).any(|(p, m)| distance_to_loop(&w, p) < *m) {
            out.skipped += 1;
            continue;
        }
        let own = support_value(&bodies[i], &w).map_err(|e| PipelineError::Pair { body: i, other: i, source: e.into() })?;
        let mut best = f64::NEG_INFINITY;
        for (k, b) in bodies.iter().enumerate() {
            if k != i {
                let h = support_value(b, &w).map_err(|e| PipelineError::Pair { body: i, other: k, source: e.into() })?;
                best = best.max(h);
            }
        }
        if (best - own).abs() <= tolerance {
            out.skipped += 1;
            continue;
        }
        out.checked += 1;
        let covered = arr.discs.iter().any(|d| d.contains(&w));
        if covered != (best > own) {
            out.violations.push([w.x, w.y, w.z]);
        }
    }
    Ok(out)
}

/// Largest deviation between a boundary polyline and the smooth curve,
/// estimated per segment as `length · turn / 8`.
fn sagitta(disc: &SphericalDisc) -> f64 {
    let m = disc.samples.len();
    (0..m)
        .map(|k| {
            let (a, b) = (&disc.samples[k], &disc.samples[(k + 1) % m]);
            angle_between(&a.point, &b.point) * angle_between(&a.tangent, &b.tangent) / 8.0
        })
        .fold(0.0, f64::max)
}

/// Configuration of the scaling experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub ns: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub family: FamilyParams,
    pub options: AnalysisOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub total_features: usize,
    pub overlaps: usize,
    pub crossways: usize,
    pub hubs: usize,
    pub mean_hubs_per_body: f64,
    pub disc_hole_incidences: usize,
    pub holes: usize,
    pub fully_hidden: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub n: usize,
    pub trial: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
    /// Log–log slope of mean total features against `n`.
    pub feature_slope: f64,
    /// Log–log slope of the mean per-body hub count against `n`.
    pub hub_slope: f64,
}

impl ExperimentTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "n,trial,seed,total_features,overlaps,crossways,hubs,mean_hubs_per_body,disc_hole_incidences,holes,fully_hidden")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.n,
                r.trial,
                r.seed,
                r.total_features,
                r.overlaps,
                r.crossways,
                r.hubs,
                r.mean_hubs_per_body,
                r.disc_hole_incidences,
                r.holes,
                r.fully_hidden
            )?;
        }
        writeln!(w, "# feature_slope,{}", self.feature_slope)?;
        writeln!(w, "# hub_slope,{}", self.hub_slope)
    }
}

/// Seed of trial `trial` at size `n`.
pub fn trial_seed(seed: u64, n: usize, trial: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add((n as u64) << 20).wrapping_add(trial as u64)
}

/// Runs every `(n, trial)` and fits slopes. Wall times are returned
/// separately so the table itself is reproducible.
pub fn scaling_experiment(config: &ExperimentConfig) -> Result<(ExperimentTable, Vec<TimingRow>), PipelineError> {
    let jobs: Vec<(usize, usize)> =
        config.ns.iter().flat_map(|&n| (0..config.trials).map(move |t| (n, t))).collect();
    let results = config.options.exec.try_map(&jobs, |&(n, trial)| {
        let seed = trial_seed(config.seed, n, trial);
        let scene = random_scene(n, &config.family, seed);
        let options = AnalysisOptions { seed, ..config.options.clone() };
        let start = std::time::Instant::now();
        let r = hull_feature_report(&scene, &options)?;
        let seconds = start.elapsed().as_secs_f64();
        let row = ExperimentRow {
            n,
            trial,
            seed,
            total_features: r.total_features,
            overlaps: r.total_overlaps,
            crossways: r.total_crossways,
            hubs: r.total_hubs,
            mean_hubs_per_body: r.total_hubs as f64 / n as f64,
            disc_hole_incidences: r.total_disc_hole_incidences,
            holes: r.bodies.iter().map(|b| b.holes).sum(),
            fully_hidden: r.fully_hidden,
        };
        Ok::<_, PipelineError>((row, TimingRow { n, trial, seconds }))
    })?;
    let (rows, timings): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let sizes: BTreeSet<usize> = rows.iter().map(|r| r.n).collect();
    let mean = |n: usize, f: &dyn Fn(&ExperimentRow) -> f64| {
        let sel: Vec<f64> = rows.iter().filter(|r| r.n == n).map(f).collect();
        sel.iter().sum::<f64>() / sel.len() as f64
    };
    let features: Vec<(f64, f64)> = sizes.iter().map(|&n| (n as f64, mean(n, &|r| r.total_features as f64))).collect();
    let hubs: Vec<(f64, f64)> = sizes.iter().map(|&n| (n as f64, mean(n, &|r| r.mean_hubs_per_body))).collect();
    Ok((ExperimentTable { feature_slope: loglog_slope(&features), hub_slope: loglog_slope(&hubs), rows }, timings))
}

/// Least-squares slope of `ln y` against `ln x` (points with `y ≤ 0` are
/// ignored; NaN with fewer than two usable points).
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).map(|p| (p.0.ln(), p.1.ln())).collect();
    if logs.len() < 2 {
        return f64::NAN;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    fn spheres(radii: &[f64], centres: &[[f64; 3]]) -> Scene {
        Scene {
            name: "test".into(),
            seed: None,
            models: radii.iter().map(|&r| ModelFunction::sphere(r).unwrap()).collect(),
            bodies: centres.iter().enumerate().map(|(k, c)| (k, Vec3::from(*c))).collect(),
        }
    }

    fn sphere_file(distance: f64) -> String {
        let spec = ModelFunction::sphere(1.0).unwrap().to_spec();
        let file = SceneFile {
            version: SCENE_VERSION,
            name: "pair".into(),
            seed: None,
            models: vec![spec],
            bodies: vec![
                BodyEntry { model: 0, translation: [0.0, 0.0, 0.0] },
                BodyEntry { model: 0, translation: [distance, 0.0, 0.0] },
            ],
        };
        serde_json::to_string(&file).unwrap()
    }

    #[test]
    fn load_examples() {
        let s = parse_scene(&sphere_file(5.0)).unwrap();
        assert_eq!(s.len(), 2);
        assert!(matches!(parse_scene(&sphere_file(1.0)), Err(PipelineError::Overlap { a: 0, b: 1, .. })));
        let touching_free = parse_scene(&sphere_file(2.05)).unwrap();
        assert_eq!(touching_free.len(), 2);

        let mut file: SceneFile = serde_json::from_str(&sphere_file(5.0)).unwrap();
        file.models[0].u1 = 3.0;
        let err = Scene::from_file(file.clone()).unwrap_err();
        assert!(matches!(err, PipelineError::InvalidModel { index: 0, .. }));
        assert!(err.is_validation());
        file.version = 7;
        assert!(matches!(Scene::from_file(file), Err(PipelineError::Version(7))));
        assert!(matches!(parse_scene("{"), Err(PipelineError::Parse(_))));
        assert_eq!(s.models[0].kind(), ModelKind::EllipsoidSaturated);
    }

    #[test]
    fn scene_round_trip() {
        let s = random_scene(5, &FamilyParams::ellipsoids(), 3);
        let back = parse_scene(&s.to_json()).unwrap();
        assert_eq!(back.len(), 5);
        for k in 0..5 {
            assert!((back.bodies[k].1 - s.bodies[k].1).norm() == 0.0);
            assert!((back.models[k].matrix() - s.models[k].matrix()).norm() < 1e-12);
        }
    }

    #[test]
    fn random_scene_examples() {
        let s = random_scene(2, &FamilyParams::ellipsoids(), 1);
        assert!((s.bodies[1].1 - s.bodies[0].1).norm() >= 3.2);
        let s = random_scene(27, &FamilyParams::ellipsoids(), 7);
        for a in 0..27 {
            for b in a + 1..27 {
                assert!((s.bodies[a].1 - s.bodies[b].1).norm() >= 3.2);
            }
            let c = s.bodies[a].1 / 4.0;
            assert!(c.iter().all(|x| x.round() >= 0.0 && x.round() <= 2.0));
        }
        assert_eq!(random_scene(6, &FamilyParams::spheres(), 9), random_scene(6, &FamilyParams::spheres(), 9));
        check_disjoint(&s).unwrap();
    }

    #[test]
    fn closest_direction_of_spheres_and_ellipsoids() {
        let b0 = Body::at_origin(ModelFunction::sphere(1.0).unwrap());
        let b1 = Body::new(ModelFunction::sphere(0.5).unwrap(), Vec3::new(3.0, 4.0, 0.0));
        let (u, gap) = closest_direction(&b0, &b1).unwrap();
        assert!((u - Vec3::new(0.6, 0.8, 0.0)).norm() < 1e-12);
        assert!((gap - 3.5).abs() < 1e-12);

        let s = random_scene(4, &FamilyParams::ellipsoids(), 5);
        let (b0, b1) = (s.body(0), s.body(3));
        let (u, gap) = closest_direction(&b0, &b1).unwrap();
        // Optimality: no nearby direction separates better.
        for k in 0..50 {
            let v = (u + crate::models::halton_direction(k) * 1e-3).normalize();
            assert!(separation(&b0, &b1, &v).unwrap().0 <= gap + 1e-12);
        }
        let p = support_point(&b0, &u).unwrap().point;
        let q = support_point(&b1, &-u).unwrap().point;
        assert!(((q - p).norm() - gap).abs() < 1e-9);
    }

    #[test]
    fn congruent_pair() {
        let s = spheres(&[1.0, 1.0], &[[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]]);
        let r = analyze_body(&s, 0, &AnalysisOptions::default()).unwrap();
        assert_eq!((r.discs, r.holes, r.vertices, r.hubs), (1, 1, 0, 1));
        assert!((r.exposed_area - 2.0 * std::f64::consts::PI).abs() < 1e-6);
        let h = hull_feature_report(&s, &AnalysisOptions::default()).unwrap();
        assert_eq!(h.total_features, 4);
    }

    #[test]
    fn collinear_spheres_leave_a_band() {
        let s = spheres(&[0.6, 1.0, 0.6], &[[-4.0, 0.0, 0.0], [0.0, 0.0, 0.0], [4.0, 0.0, 0.0]]);
        let r = analyze_body(&s, 1, &AnalysisOptions::default()).unwrap();
        assert_eq!((r.discs, r.holes, r.multiply_connected_holes), (2, 1, 1));
        assert_eq!(r.vertices, 0);
        assert!(!r.fully_hidden);
    }

    #[test]
    fn surrounded_body_is_hidden() {
        let mut centres = vec![[0.0, 0.0, 0.0]];
        let mut radii = vec![0.6];
        for axis in 0..3 {
            for sign in [-1.0, 1.0] {
                let mut c = [0.0; 3];
                c[axis] = 3.0 * sign;
                centres.push(c);
                radii.push(1.0);
            }
        }
        let s = spheres(&radii, &centres);
        let r = analyze_body(&s, 0, &AnalysisOptions::default()).unwrap();
        assert_eq!(r.discs, 6);
        assert_eq!(r.holes, 0);
        assert!(r.fully_hidden);
        assert_eq!(r.features, 0);
    }

    #[test]
    fn single_body_is_exposed() {
        let s = spheres(&[1.0], &[[0.0; 3]]);
        let h = hull_feature_report(&s, &AnalysisOptions::default()).unwrap();
        assert_eq!(h.bodies[0].discs, 0);
        assert_eq!(h.total_features, 1);
    }

    #[test]
    fn hidden_side_agrees_with_support_values() {
        let s = random_scene(6, &FamilyParams::ellipsoids(), 21);
        let options = AnalysisOptions::default();
        for i in [0, 5] {
            let a = analyze_body_full(&s, i, &options).unwrap();
            let c = hidden_side_check(&s, i, &a, 400, 1e-8, 4).unwrap();
            assert!(c.checked > 300);
            assert!(c.violations.is_empty(), "{:?}", c.violations);
            assert!(a.report.sequences_ok && a.report.within_lambda);
            assert!((a.report.hidden_area + a.report.exposed_area - FOUR_PI).abs() < 1e-5);
        }
    }

    #[test]
    fn reports_are_deterministic_across_exec() {
        let s = random_scene(5, &FamilyParams::ellipsoids(), 2);
        let a = hull_feature_report(&s, &AnalysisOptions::default().with_exec(Exec::Parallel)).unwrap();
        let b = hull_feature_report(&s, &AnalysisOptions::default().with_exec(Exec::Sequential)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn slopes() {
        let pts: Vec<(f64, f64)> = [2.0, 4.0, 8.0].iter().map(|&x: &f64| (x, 3.0 * x.powf(1.5))).collect();
        assert!((loglog_slope(&pts) - 1.5).abs() < 1e-12);
        assert!(loglog_slope(&pts[..1]).is_nan());
    }

    #[test]
    fn small_experiment_is_reproducible() {
        let config = ExperimentConfig {
            ns: vec![2, 3],
            trials: 2,
            seed: 5,
            family: FamilyParams::spheres(),
            options: AnalysisOptions::default(),
        };
        let (a, _) = scaling_experiment(&config).unwrap();
        let (b, t) = scaling_experiment(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 4);
        assert_eq!(t.len(), 4);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("n,trial,seed,total_features"));
    }
}
