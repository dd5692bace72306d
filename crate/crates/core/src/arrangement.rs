//! Arrangements of disc boundaries on the sphere and the combinatorics of
//! disc unions: intersection components (overlaps and crossways), crossing
//! content, hubs, links, coves, holes and their boundary label sequences.
//!
//! Vertices are the refined crossings of pairs of boundaries. Each boundary
//! is split at its vertices into edges running in the direction of
//! increasing `φ`; the forward half-edge of an edge has its disc's interior
//! on the left. Faces are traced by always leaving a vertex along the
//! outgoing half-edge immediately clockwise from the one we arrived by.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::discs::{all_crossings, DiscError, PairCrossings, SphericalDisc};
use crate::sphere::{geodesic_loop_area, lens_correction, loop_containment_margin, random_unit, FOUR_PI};
use crate::{Exec, Vec3};

/// Tolerance of the area and probe checks in [`verify`].
pub const AREA_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArrangementError {
    #[error("degenerate input: {0}")]
    Degenerate(#[from] DiscError),
    #[error("inconsistent arrangement: {0}")]
    Inconsistent(String),
    #[error("the union of the discs is disconnected")]
    DisconnectedUnion,
}

/// A crossing of the boundaries of discs `curves[0] < curves[1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub position: Vec3,
    pub curves: [usize; 2],
    pub params: [f64; 2],
    pub tangents: [Vec3; 2],
    /// Outgoing half-edges in counter-clockwise order seen from outside.
    pub outgoing: [usize; 4],
}

/// A boundary arc between consecutive vertices of one disc boundary, or a
/// whole boundary without vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub curve: usize,
    pub start: Option<usize>,
    pub end: Option<usize>,
    /// Points with unit tangents in the forward direction.
    pub polyline: Vec<(Vec3, Vec3)>,
}

/// One boundary cycle of a face as a closed polygon.
#[derive(Clone, Debug, PartialEq)]
pub struct Cycle {
    pub half_edges: Vec<usize>,
    pub points: Vec<Vec3>,
    /// Area left of the geodesic polygon through `points`.
    pub polygon_area: f64,
    /// Area left of the smooth cycle.
    pub area: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    pub cycles: Vec<Cycle>,
    pub area: f64,
    /// Indices of the discs containing the face, ascending.
    pub cover: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Arrangement {
    pub discs: Vec<SphericalDisc>,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    /// `next[h]` of half-edge `h`; half-edges `2e` (forward) and `2e + 1`.
    pub next: Vec<usize>,
    pub face_of: Vec<usize>,
    pub faces: Vec<Face>,
    /// Connected components of the union of boundaries.
    pub curve_components: usize,
    /// Boundaries without vertices.
    pub loops: usize,
}

impl Arrangement {
    pub fn half_edge_curve(&self, h: usize) -> usize {
        self.edges[h / 2].curve
    }

    pub fn is_forward(h: usize) -> bool {
        h.is_multiple_of(2)
    }

    /// Sum of face areas.
    pub fn total_area(&self) -> f64 {
        self.faces.iter().map(|f| f.area).sum()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        self.faces[f].area
    }

    /// `V + loops − E + F − (1 + components)`, zero for a valid subdivision.
    pub fn euler_defect(&self) -> i64 {
        self.vertices.len() as i64 + self.loops as i64 - self.edges.len() as i64 + self.faces.len() as i64
            - 1
            - self.curve_components as i64
    }

    pub fn covers(&self, f: usize, disc: usize) -> bool {
        self.faces[f].cover.binary_search(&disc).is_ok()
    }

    /// Face adjacency across one edge: `(edge, face left of forward, face left of backward)`.
    pub fn edge_faces(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.edges.len()).map(|e| (e, self.face_of[2 * e], self.face_of[2 * e + 1]))
    }

    /// The face containing `y`, found by point location among the faces with
    /// the same cover.
    pub fn locate(&self, y: &Vec3) -> Option<usize> {
        let cover: Vec<usize> = (0..self.discs.len()).filter(|&i| self.discs[i].contains(y)).collect();
        let candidates: Vec<usize> = (0..self.faces.len()).filter(|&f| self.faces[f].cover == cover).collect();
        match candidates.len() {
            0 => None,
            1 => Some(candidates[0]),
            _ => candidates
                .into_iter()
                .map(|f| (f, face_margin(&self.faces[f], y)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(f, _)| f),
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        self.discs.iter().map(|d| d.label).collect()
    }
}

/// Largest containment margin over the cycles of a face: negative (about
/// −4π) when `y` is inside every cycle.
fn face_margin(face: &Face, y: &Vec3) -> f64 {
    face.cycles
        .iter()
        .map(|c| loop_containment_margin(y, &c.points, c.polygon_area))
        .fold(f64::NEG_INFINITY, f64::max)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }

    /// Groups of members by root, each sorted, ordered by smallest member.
    fn groups(&mut self, members: &[usize]) -> Vec<Vec<usize>> {
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &m in members {
            let r = self.find(m);
            by_root.entry(r).or_default().push(m);
        }
        let mut out: Vec<Vec<usize>> = by_root.into_values().collect();
        for g in &mut out {
            g.sort_unstable();
        }
        out.sort();
        out
    }
}

/// Builds the arrangement of discs in general position, computing their
/// crossings first.
pub fn build_arrangement(discs: &[SphericalDisc]) -> Result<Arrangement, ArrangementError> {
    let crossings = all_crossings(discs, Exec::default())?;
    build_with_crossings(discs, &crossings)
}

/// Builds the arrangement from precomputed pairwise crossings (indices into
/// `discs`).
pub fn build_with_crossings(discs: &[SphericalDisc], crossings: &PairCrossings) -> Result<Arrangement, ArrangementError> {
    let n = discs.len();

    struct RawVertex {
        position: Vec3,
        curves: [usize; 2],
        params: [f64; 2],
        tangents: [Vec3; 2],
    }
    let mut raw: Vec<RawVertex> = Vec::new();
    for ((i, j), list) in crossings {
        for c in list {
            if !c.transversal {
                return Err(DiscError::TangentialContact { a: discs[*i].label, b: discs[*j].label, angle: c.angle }.into());
            }
            let ti = discs[*i].evaluate(c.params.0).map_err(DiscError::from)?.1.normalize();
            let tj = discs[*j].evaluate(c.params.1).map_err(DiscError::from)?.1.normalize();
            raw.push(RawVertex { position: c.position, curves: [*i, *j], params: [c.params.0, c.params.1], tangents: [ti, tj] });
        }
    }
    raw.sort_by(|a, b| {
        a.position
            .x
            .total_cmp(&b.position.x)
            .then(a.position.y.total_cmp(&b.position.y))
            .then(a.position.z.total_cmp(&b.position.z))
    });

    // Vertices along each curve, by parameter.
    let mut on_curve: Vec<Vec<(f64, usize)>> = vec![Vec::new(); n];
    for (v, r) in raw.iter().enumerate() {
        on_curve[r.curves[0]].push((r.params[0], v));
        on_curve[r.curves[1]].push((r.params[1], v));
    }
    for list in &mut on_curve {
        list.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    // Edges; remember the edge leaving and entering each vertex per curve.
    let mut edges: Vec<Edge> = Vec::new();
    let mut leaving: HashMap<(usize, usize), usize> = HashMap::new();
    let mut entering: HashMap<(usize, usize), usize> = HashMap::new();
    let mut loops = 0;
    for (c, list) in on_curve.iter().enumerate() {
        let disc = &discs[c];
        if list.is_empty() {
            let polyline = disc.samples.iter().map(|s| (s.point, s.tangent.normalize())).collect();
            edges.push(Edge { curve: c, start: None, end: None, polyline });
            loops += 1;
            continue;
        }
        let k = list.len();
        for a in 0..k {
            let (ua, va) = list[a];
            let (mut ub, vb) = list[(a + 1) % k];
            if a + 1 == k {
                ub += 2.0 * PI;
            }
            let tangent_at = |v: usize| {
                let r = &raw[v];
                if r.curves[0] == c {
                    r.tangents[0]
                } else {
                    r.tangents[1]
                }
            };
            let mut polyline = vec![(raw[va].position, tangent_at(va))];
            let m = disc.samples.len();
            let first = disc.segment_at(ua) + 1;
            for step in 0..m {
                let idx = (first + step) % m;
                let s = &disc.samples[idx];
                let mut phi = s.phi;
                while phi <= ua {
                    phi += 2.0 * PI;
                }
                if phi >= ub {
                    break;
                }
                if (s.point - raw[va].position).norm() < 1e-8 || (s.point - raw[vb].position).norm() < 1e-8 {
                    continue;
                }
                polyline.push((s.point, s.tangent.normalize()));
            }
            polyline.push((raw[vb].position, tangent_at(vb)));
            let e = edges.len();
            leaving.insert((va, c), e);
            entering.insert((vb, c), e);
            edges.push(Edge { curve: c, start: Some(va), end: Some(vb), polyline });
        }
    }

    // Counter-clockwise outgoing half-edges at each vertex.
    let vertices: Vec<Vertex> = raw
        .iter()
        .enumerate()
        .map(|(v, r)| {
            let [a, b] = r.curves;
            let fa = 2 * leaving[&(v, a)];
            let ba = 2 * entering[&(v, a)] + 1;
            let fb = 2 * leaving[&(v, b)];
            let bb = 2 * entering[&(v, b)] + 1;
            let outgoing = if r.tangents[0].cross(&r.tangents[1]).dot(&r.position) > 0.0 {
                [fa, fb, ba, bb]
            } else {
                [fa, bb, ba, fb]
            };
            Vertex { position: r.position, curves: r.curves, params: r.params, tangents: r.tangents, outgoing }
        })
        .collect();

    let nh = 2 * edges.len();
    let mut next = vec![usize::MAX; nh];
    for h in 0..nh {
        let e = &edges[h / 2];
        let dest = if h % 2 == 0 { e.end } else { e.start };
        match dest {
            None => next[h] = h,
            Some(v) => {
                let twin = h ^ 1;
                let out = &vertices[v].outgoing;
                let pos = out.iter().position(|&o| o == twin).expect("twin leaves the vertex");
                next[h] = out[(pos + 3) % 4];
            }
        }
    }

    // Cycles.
    let mut cycle_of = vec![usize::MAX; nh];
    let mut cycles: Vec<Cycle> = Vec::new();
    for h0 in 0..nh {
        if cycle_of[h0] != usize::MAX {
            continue;
        }
        let id = cycles.len();
        let mut hs = Vec::new();
        let mut h = h0;
        loop {
            cycle_of[h] = id;
            hs.push(h);
            h = next[h];
            if h == h0 {
                break;
            }
            if hs.len() > nh {
                return Err(ArrangementError::Inconsistent("face walk does not close".into()));
            }
        }
        cycles.push(cycle_geometry(&edges, hs));
    }

    // Components of the boundary graph.
    let mut uf = UnionFind::new(n);
    for v in &vertices {
        uf.union(v.curves[0], v.curves[1]);
    }
    let mut comp_of_curve = vec![0; n];
    let mut comp_ids: BTreeMap<usize, usize> = BTreeMap::new();
    for c in 0..n {
        let r = uf.find(c);
        let next_id = comp_ids.len();
        comp_of_curve[c] = *comp_ids.entry(r).or_insert(next_id);
    }
    let ncomp = comp_ids.len();
    let comp_of_cycle: Vec<usize> =
        cycles.iter().map(|c| comp_of_curve[edges[c.half_edges[0] / 2].curve]).collect();

    // Group cycles into faces: a face is fixed by one cycle of every component.
    let faces_of_cycles: Vec<Vec<usize>> = if ncomp <= 1 {
        (0..cycles.len()).map(|c| vec![c]).collect()
    } else {
        let by_comp: Vec<Vec<usize>> =
            (0..ncomp).map(|k| (0..cycles.len()).filter(|&c| comp_of_cycle[c] == k).collect()).collect();
        let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for c in 0..cycles.len() {
            let probe = cycles[c].points[0];
            let key: Vec<usize> = (0..ncomp)
                .map(|k| {
                    if k == comp_of_cycle[c] {
                        c
                    } else {
                        *by_comp[k]
                            .iter()
                            .min_by(|&&a, &&b| {
                                let ma = loop_containment_margin(&probe, &cycles[a].points, cycles[a].polygon_area);
                                let mb = loop_containment_margin(&probe, &cycles[b].points, cycles[b].polygon_area);
                                ma.total_cmp(&mb)
                            })
                            .expect("components have cycles")
                    }
                })
                .collect();
            groups.entry(key).or_default().push(c);
        }
        let mut fs: Vec<Vec<usize>> = groups.into_values().collect();
        fs.sort();
        fs
    };

    let mut face_of = vec![usize::MAX; nh];
    let mut faces: Vec<Face> = Vec::with_capacity(faces_of_cycles.len());
    for (f, members) in faces_of_cycles.iter().enumerate() {
        let cs: Vec<Cycle> = members.iter().map(|&c| cycles[c].clone()).collect();
        for c in &cs {
            for &h in &c.half_edges {
                face_of[h] = f;
            }
        }
        let area = cs.iter().map(|c| c.area).sum::<f64>() - (cs.len() as f64 - 1.0) * FOUR_PI;
        faces.push(Face { cycles: cs, area, cover: Vec::new() });
    }

    let covers = compute_covers(n, &edges, &face_of, faces.len());
    for (f, cover) in covers.into_iter().enumerate() {
        faces[f].cover = cover;
    }

    Ok(Arrangement {
        discs: discs.to_vec(),
        vertices,
        edges,
        next,
        face_of,
        faces,
        curve_components: ncomp,
        loops,
    })
}

fn cycle_geometry(edges: &[Edge], half_edges: Vec<usize>) -> Cycle {
    let mut pts: Vec<(Vec3, Vec3)> = Vec::new();
    let mut lens = 0.0;
    for &h in &half_edges {
        let e = &edges[h / 2];
        let seq: Vec<(Vec3, Vec3)> = if h % 2 == 0 {
            e.polyline.clone()
        } else {
            e.polyline.iter().rev().map(|(p, t)| (*p, -t)).collect()
        };
        for w in seq.windows(2) {
            lens += lens_correction(&w[0].0, &w[0].1, &w[1].0, &w[1].1);
        }
        if e.start.is_none() {
            let (p, tp) = seq[seq.len() - 1];
            let (q, tq) = seq[0];
            lens += lens_correction(&p, &tp, &q, &tq);
        }
        let skip = usize::from(!pts.is_empty());
        pts.extend(seq.into_iter().skip(skip));
    }
    if half_edges.len() > 1 || edges[half_edges[0] / 2].start.is_some() {
        pts.pop();
    }
    let points: Vec<Vec3> = pts.into_iter().map(|p| p.0).collect();
    let polygon_area = geodesic_loop_area(&points);
    Cycle { half_edges, points, polygon_area, area: polygon_area + lens }
}

/// Disc membership of every face: faces left of forward half-edges of disc
/// `j` are inside it, faces left of backward ones outside, and membership in
/// `j` does not change across edges of other discs.
fn compute_covers(n: usize, edges: &[Edge], face_of: &[usize], nfaces: usize) -> Vec<Vec<usize>> {
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nfaces];
    for (e, edge) in edges.iter().enumerate() {
        let (a, b) = (face_of[2 * e], face_of[2 * e + 1]);
        adjacency[a].push((b, edge.curve));
        adjacency[b].push((a, edge.curve));
    }
    let mut cover = vec![Vec::new(); nfaces];
    for j in 0..n {
        let mut state: Vec<Option<bool>> = vec![None; nfaces];
        let mut queue = VecDeque::new();
        for (e, edge) in edges.iter().enumerate() {
            if edge.curve == j {
                for (h, inside) in [(2 * e, true), (2 * e + 1, false)] {
                    let f = face_of[h];
                    if state[f].is_none() {
                        state[f] = Some(inside);
                        queue.push_back(f);
                    }
                }
            }
        }
        while let Some(f) = queue.pop_front() {
            for &(g, curve) in &adjacency[f] {
                if curve != j && state[g].is_none() {
                    state[g] = state[f];
                    queue.push_back(g);
                }
            }
        }
        for f in 0..nfaces {
            if state[f] == Some(true) {
                cover[f].push(j);
            }
        }
    }
    cover
}

/// Checks Euler's formula, area conservation and face covers at up to three
/// probe points per face.
pub fn verify(arr: &Arrangement) -> Result<(), ArrangementError> {
    verify_with(arr, AREA_TOLERANCE)
}

/// [`verify`] with a custom area tolerance.
pub fn verify_with(arr: &Arrangement, tolerance: f64) -> Result<(), ArrangementError> {
    if arr.euler_defect() != 0 {
        return Err(ArrangementError::Inconsistent(format!(
            "Euler defect {} (V={}, E={}, F={}, loops={}, components={})",
            arr.euler_defect(),
            arr.vertices.len(),
            arr.edges.len(),
            arr.faces.len(),
            arr.loops,
            arr.curve_components
        )));
    }
    let total = arr.total_area();
    if (total - FOUR_PI).abs() > tolerance {
        return Err(ArrangementError::Inconsistent(format!("face areas sum to {total}")));
    }
    for (f, face) in arr.faces.iter().enumerate() {
        if face.area < -tolerance {
            return Err(ArrangementError::Inconsistent(format!("face {f} has area {}", face.area)));
        }
        for y in probe_points(arr, f, 3) {
            let cover: Vec<usize> = (0..arr.discs.len()).filter(|&i| arr.discs[i].contains(&y)).collect();
            if cover != face.cover {
                return Err(ArrangementError::Inconsistent(format!(
                    "face {f}: cover {:?} but probe sees {:?}",
                    face.cover, cover
                )));
            }
        }
    }
    Ok(())
}

/// Points just left of the midpoints of the longest boundary segments of
/// face `f` whose end points are both boundary samples (not crossings), so
/// that the face polygon and the disc polygons agree along them.
pub fn probe_points(arr: &Arrangement, f: usize, count: usize) -> Vec<Vec3> {
    let mut segs: Vec<(f64, Vec3, Vec3)> = Vec::new();
    for c in &arr.faces[f].cycles {
        for &h in &c.half_edges {
            let e = &arr.edges[h / 2];
            let m = e.polyline.len();
            let pairs: Vec<(usize, usize)> = if e.start.is_none() {
                (0..m).map(|k| (k, (k + 1) % m)).collect()
            } else {
                (1..m.saturating_sub(2)).map(|k| (k, k + 1)).collect()
            };
            for (i, j) in pairs {
                let (a, b) = if h % 2 == 0 { (e.polyline[i].0, e.polyline[j].0) } else { (e.polyline[j].0, e.polyline[i].0) };
                segs.push(((a - b).norm(), a, b));
            }
        }
    }
    segs.sort_by(|x, y| y.0.total_cmp(&x.0));
    segs.into_iter()
        .filter(|s| s.0 > 1e-9)
        .take(count)
        .map(|(len, a, b)| {
            let mid = (a + b).normalize();
            let left = mid.cross(&(b - a)).normalize();
            (mid + left * (1e-3 * len).min(1e-7)).normalize()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentKind {
    /// Bounded by exactly two edges.
    Overlap,
    /// Bounded by four or more edges.
    Crossway,
    /// No corners: one disc lies inside the other.
    Contained,
}

/// A connected component of `D_i° ∩ D_j°`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntersectionComponent {
    /// Disc indices.
    pub pair: (usize, usize),
    pub faces: Vec<usize>,
    pub edge_count: usize,
    pub kind: ComponentKind,
    pub area: f64,
}

/// Components of the intersection of discs `i` and `j`.
pub fn classify_components(arr: &Arrangement, i: usize, j: usize) -> Vec<IntersectionComponent> {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    let both: Vec<usize> = (0..arr.faces.len()).filter(|&f| arr.covers(f, i) && arr.covers(f, j)).collect();
    if both.is_empty() || i == j {
        return Vec::new();
    }
    let mut uf = UnionFind::new(arr.faces.len());
    for (e, a, b) in arr.edge_faces() {
        let c = arr.edges[e].curve;
        if c != i && c != j && arr.covers(a, i) && arr.covers(a, j) && arr.covers(b, i) && arr.covers(b, j) {
            uf.union(a, b);
        }
    }
    let mut corners: HashMap<usize, usize> = HashMap::new();
    for v in &arr.vertices {
        if v.curves == [i, j] {
            if let Some(f) = v.outgoing.iter().map(|&h| arr.face_of[h]).find(|&f| arr.covers(f, i) && arr.covers(f, j)) {
                *corners.entry(uf.find(f)).or_default() += 1;
            }
        }
    }
    uf.groups(&both)
        .into_iter()
        .map(|faces| {
            let edge_count = corners.get(&uf.find(faces[0])).copied().unwrap_or(0);
            let kind = match edge_count {
                0 => ComponentKind::Contained,
                2 => ComponentKind::Overlap,
                _ => ComponentKind::Crossway,
            };
            let area = faces.iter().map(|&f| arr.faces[f].area).sum();
            IntersectionComponent { pair: (i, j), faces, edge_count, kind, area }
        })
        .collect()
}

/// Pairs of discs that intersect (share a covered face).
pub fn intersecting_pairs(arr: &Arrangement) -> Vec<(usize, usize)> {
    let mut pairs = std::collections::BTreeSet::new();
    for f in &arr.faces {
        for (a, &i) in f.cover.iter().enumerate() {
            for &j in &f.cover[a + 1..] {
                pairs.insert((i, j));
            }
        }
    }
    pairs.into_iter().collect()
}

/// Intersection components of every intersecting pair.
pub fn all_components(arr: &Arrangement) -> Vec<IntersectionComponent> {
    intersecting_pairs(arr).into_iter().flat_map(|(i, j)| classify_components(arr, i, j)).collect()
}

/// Smallest crossway area and the number of crossways.
pub fn crossing_content(arr: &Arrangement) -> (Option<f64>, usize) {
    content_of(&all_components(arr))
}

fn content_of(components: &[IntersectionComponent]) -> (Option<f64>, usize) {
    let crossways: Vec<f64> =
        components.iter().filter(|c| c.kind == ComponentKind::Crossway).map(|c| c.area).collect();
    let min = crossways.iter().cloned().fold(None, |m: Option<f64>, a| Some(m.map_or(a, |m| m.min(a))));
    (min, crossways.len())
}

/// Faces lying in some crossway.
pub fn crossway_faces(arr: &Arrangement, components: &[IntersectionComponent]) -> Vec<bool> {
    let mut mark = vec![false; arr.faces.len()];
    for c in components.iter().filter(|c| c.kind == ComponentKind::Crossway) {
        for &f in &c.faces {
            mark[f] = true;
        }
    }
    mark
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hub {
    /// Maximal connected union of crossway interiors, by face.
    Crossways { faces: Vec<usize> },
    /// A disc whose interior meets no crossway.
    Disc { disc: usize },
}

/// Hubs of the arrangement.
pub fn hubs(arr: &Arrangement) -> Vec<Hub> {
    hubs_with(arr, &all_components(arr))
}

pub fn hubs_with(arr: &Arrangement, components: &[IntersectionComponent]) -> Vec<Hub> {
    let mark = crossway_faces(arr, components);
    let mut uf = UnionFind::new(arr.faces.len());
    for (_, a, b) in arr.edge_faces() {
        if mark[a] && mark[b] {
            uf.union(a, b);
        }
    }
    let members: Vec<usize> = (0..arr.faces.len()).filter(|&f| mark[f]).collect();
    let mut out: Vec<Hub> = uf.groups(&members).into_iter().map(|faces| Hub::Crossways { faces }).collect();
    for d in 0..arr.discs.len() {
        if !(0..arr.faces.len()).any(|f| mark[f] && arr.covers(f, d)) {
            out.push(Hub::Disc { disc: d });
        }
    }
    out
}

/// A component of `D_i` minus the crossways, with the runs of boundary edges
/// of `D_i` it meets (each run is a connected piece of its intersection with
/// `∂D_i`, as edge indices in boundary order).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscPiece {
    pub faces: Vec<usize>,
    pub segments: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LinksAndCoves {
    /// Pieces meeting `∂D_i` in a disconnected set; their segments are the
    /// external link segments. A crossway-free disc is a single link.
    pub links: Vec<DiscPiece>,
    /// Pieces meeting `∂D_i` in a connected set.
    pub coves: Vec<DiscPiece>,
    /// Pieces not meeting `∂D_i` at all.
    pub enclosed: usize,
}

pub fn links_and_coves(arr: &Arrangement, i: usize) -> LinksAndCoves {
    links_and_coves_with(arr, i, &crossway_faces(arr, &all_components(arr)))
}

pub fn links_and_coves_with(arr: &Arrangement, i: usize, crossway: &[bool]) -> LinksAndCoves {
    let inside: Vec<usize> = (0..arr.faces.len()).filter(|&f| arr.covers(f, i)).collect();
    let boundary: Vec<usize> = (0..arr.edges.len()).filter(|&e| arr.edges[e].curve == i).collect();
    if !inside.iter().any(|&f| crossway[f]) {
        return LinksAndCoves {
            links: vec![DiscPiece { faces: inside, segments: vec![boundary] }],
            coves: Vec::new(),
            enclosed: 0,
        };
    }
    let mut uf = UnionFind::new(arr.faces.len());
    for (e, a, b) in arr.edge_faces() {
        if arr.edges[e].curve != i && arr.covers(a, i) && arr.covers(b, i) && !crossway[a] && !crossway[b] {
            uf.union(a, b);
        }
    }
    let free: Vec<usize> = inside.iter().copied().filter(|&f| !crossway[f]).collect();
    let mut out = LinksAndCoves::default();
    // Boundary edges of D_i are stored consecutively in boundary order.
    let k = boundary.len();
    for faces in uf.groups(&free) {
        let root = uf.find(faces[0]);
        let member: Vec<bool> = boundary.iter().map(|&e| uf.find(arr.face_of[2 * e]) == root && !crossway[arr.face_of[2 * e]]).collect();
        let mut segments: Vec<Vec<usize>> = Vec::new();
        if member.iter().all(|&m| m) {
            segments.push(boundary.clone());
        } else if let Some(start) = (0..k).find(|&a| !member[a]) {
            let mut run: Vec<usize> = Vec::new();
            for step in 1..=k {
                let a = (start + step) % k;
                if member[a] {
                    run.push(boundary[a]);
                } else if !run.is_empty() {
                    segments.push(std::mem::take(&mut run));
                }
            }
            if !run.is_empty() {
                segments.push(run);
            }
        }
        match segments.len() {
            0 => out.enclosed += 1,
            1 => out.coves.push(DiscPiece { faces, segments }),
            _ => out.links.push(DiscPiece { faces, segments }),
        }
    }
    out
}

/// A face of the complement of the union.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Hole {
    pub face: usize,
    /// Disc labels along each boundary cycle, adjacent repeats merged
    /// cyclically.
    pub sequences: Vec<Vec<usize>>,
    pub simply_connected: bool,
    pub area: f64,
}

impl Hole {
    /// The label sequence of a simply connected hole.
    pub fn sequence(&self) -> &[usize] {
        &self.sequences[0]
    }
}

/// Holes: faces covered by no disc.
pub fn holes(arr: &Arrangement) -> Vec<Hole> {
    (0..arr.faces.len())
        .filter(|&f| arr.faces[f].cover.is_empty())
        .map(|f| {
            let face = &arr.faces[f];
            let sequences: Vec<Vec<usize>> = face
                .cycles
                .iter()
                .map(|c| {
                    let labels: Vec<usize> =
                        c.half_edges.iter().map(|&h| arr.discs[arr.half_edge_curve(h)].label).collect();
                    merge_cyclic_repeats(&labels)
                })
                .collect();
            Hole { face: f, simply_connected: sequences.len() == 1, sequences, area: face.area }
        })
        .collect()
}

fn merge_cyclic_repeats(labels: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(labels.len());
    for &l in labels {
        if out.last() != Some(&l) {
            out.push(l);
        }
    }
    while out.len() > 1 && out[0] == out[out.len() - 1] {
        out.pop();
    }
    out
}

/// Number of (disc, hole) pairs sharing a boundary edge.
pub fn disc_hole_incidences(arr: &Arrangement) -> usize {
    holes(arr)
        .iter()
        .map(|h| {
            let mut discs: Vec<usize> = arr.faces[h.face]
                .cycles
                .iter()
                .flat_map(|c| c.half_edges.iter().map(|&he| arr.half_edge_curve(he)))
                .collect();
            discs.sort_unstable();
            discs.dedup();
            discs.len()
        })
        .sum()
}

/// An order of `0..n` in which every prefix union is connected, given the
/// pairs of intersecting discs. Built by removing leaves of a spanning tree.
pub fn connected_order(n: usize, pairs: &[(usize, usize)]) -> Result<Vec<usize>, ArrangementError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in pairs {
        adj[a].push(b);
        adj[b].push(a);
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    // BFS spanning tree from 0.
    let mut parent = vec![usize::MAX; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut tree_deg = vec![0usize; n];
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                parent[w] = v;
                tree_deg[v] += 1;
                tree_deg[w] += 1;
                queue.push_back(w);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(ArrangementError::DisconnectedUnion);
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for w in 0..n {
        if parent[w] != usize::MAX {
            children[parent[w]].push(w);
        }
    }
    let mut removed = vec![false; n];
    let mut removal = Vec::with_capacity(n);
    while removal.len() < n {
        let leaf = (0..n)
            .find(|&v| !removed[v] && (tree_deg[v] <= 1))
            .expect("a tree has a leaf");
        removed[leaf] = true;
        removal.push(leaf);
        if parent[leaf] != usize::MAX && !removed[parent[leaf]] {
            tree_deg[parent[leaf]] -= 1;
        }
        for &c in &children[leaf] {
            if !removed[c] {
                tree_deg[c] -= 1;
            }
        }
    }
    removal.reverse();
    Ok(removal)
}

/// Whether every prefix of `order` has a connected union.
pub fn prefix_connected(order: &[usize], pairs: &[(usize, usize)]) -> bool {
    let n = order.iter().copied().max().map_or(0, |m| m + 1);
    let mut uf = UnionFind::new(n);
    let mut placed = vec![false; n];
    for (k, &v) in order.iter().enumerate() {
        placed[v] = true;
        for &(a, b) in pairs {
            if placed[a] && placed[b] && (a == v || b == v) {
                uf.union(a, b);
            }
        }
        let r = uf.find(order[0]);
        if order[..=k].iter().any(|&w| uf.find(w) != r) {
            return false;
        }
    }
    true
}

/// Monte-Carlo estimate of every face area from uniform sphere samples:
/// `(estimate, standard error)` per face.
pub fn monte_carlo_areas(arr: &Arrangement, samples: usize, seed: u64, exec: Exec) -> Vec<(f64, f64)> {
    const CHUNK: usize = 1 << 14;
    let chunks = samples.div_ceil(CHUNK);
    let counts: Vec<Vec<usize>> = exec.map_range(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let m = CHUNK.min(samples - c * CHUNK);
        let mut hits = vec![0usize; arr.faces.len()];
        for _ in 0..m {
            let y = random_unit(&mut rng);
            if let Some(f) = arr.locate(&y) {
                hits[f] += 1;
            }
        }
        hits
    });
    let mut total = vec![0usize; arr.faces.len()];
    for h in counts {
        for (t, x) in total.iter_mut().zip(h) {
            *t += x;
        }
    }
    total
        .into_iter()
        .map(|k| {
            let p = k as f64 / samples as f64;
            (FOUR_PI * p, FOUR_PI * (p * (1.0 - p) / samples as f64).sqrt())
        })
        .collect()
}

/// Summary row of one intersection component.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentRow {
    pub discs: (usize, usize),
    pub edge_count: usize,
    pub kind: ComponentKind,
    pub area: f64,
}

/// Summary row of one hole.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HoleRow {
    pub face: usize,
    pub area: f64,
    pub simply_connected: bool,
    pub sequences: Vec<Vec<usize>>,
}

/// Structured report of an arrangement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArrangementReport {
    pub discs: Vec<usize>,
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub loops: usize,
    pub curve_components: usize,
    pub face_areas: Vec<f64>,
    pub area_sum: f64,
    pub components: Vec<ComponentRow>,
    pub overlaps: usize,
    pub crossways: usize,
    pub contained: usize,
    pub min_crossway_area: Option<f64>,
    pub hubs: usize,
    pub links: usize,
    pub coves: usize,
    pub external_link_segments: usize,
    pub holes: Vec<HoleRow>,
    pub disc_hole_incidences: usize,
}

pub fn report(arr: &Arrangement) -> ArrangementReport {
    let components = all_components(arr);
    let (min_crossway_area, crossways) = content_of(&components);
    let mark = crossway_faces(arr, &components);
    let labels = arr.labels();
    let mut links = 0;
    let mut coves = 0;
    let mut segments = 0;
    for i in 0..arr.discs.len() {
        let lc = links_and_coves_with(arr, i, &mark);
        links += lc.links.len();
        coves += lc.coves.len();
        segments += lc.links.iter().map(|l| l.segments.len()).sum::<usize>();
    }
    let count = |k: ComponentKind| components.iter().filter(|c| c.kind == k).count();
    ArrangementReport {
        discs: labels.clone(),
        vertices: arr.vertices.len(),
        edges: arr.edges.len(),
        faces: arr.faces.len(),
        loops: arr.loops,
        curve_components: arr.curve_components,
        face_areas: arr.faces.iter().map(|f| f.area).collect(),
        area_sum: arr.total_area(),
        components: components
            .iter()
            .map(|c| ComponentRow {
                discs: (labels[c.pair.0], labels[c.pair.1]),
                edge_count: c.edge_count,
                kind: c.kind,
                area: c.area,
            })
            .collect(),
        overlaps: count(ComponentKind::Overlap),
        crossways,
        contained: count(ComponentKind::Contained),
        min_crossway_area,
        hubs: hubs_with(arr, &components).len(),
        links,
        coves,
        external_link_segments: segments,
        holes: holes(arr)
            .into_iter()
            .map(|h| HoleRow { face: h.face, area: h.area, simply_connected: h.simply_connected, sequences: h.sequences })
            .collect(),
        disc_hole_incidences: disc_hole_incidences(arr),
    }
}
