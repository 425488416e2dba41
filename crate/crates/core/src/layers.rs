//! Interior layers: characteristic tracing, node snapping and embedding of a
//! layer characteristic into a triangulation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::fem::ProblemSpec;
use crate::mesh::{
    cross, dist, dot, edge_key, norm, orient, red_refine, sub, BoundaryEdge, LayerEdge, MeshError, Point, Triangulation,
};
use crate::wind_geometry::OmegaPlusDecomposition;

#[derive(Debug, Error)]
pub enum LayerError {
    #[error("the wind at {0:?} does not point into the domain")]
    NotInflow(Point),
    #[error("characteristic from {0:?} did not leave the domain within {1} steps")]
    StepBudget(Point, usize),
    #[error("degenerate crossing of element {element}: {detail}; snap nodes onto the path first")]
    Degenerate { element: usize, detail: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Ordered polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct PolylinePath {
    pub points: Vec<Point>,
    pub closed: bool,
}

impl PolylinePath {
    pub fn open(points: Vec<Point>) -> Self {
        Self { points, closed: false }
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.points.len();
        let extra = if self.closed && n > 2 { 1 } else { 0 };
        (0..n.saturating_sub(1) + extra).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    /// Closest point on the path, its distance and the segment index and parameter.
    pub fn project(&self, p: Point) -> (Point, f64, usize, f64) {
        let mut best = (self.points[0], dist(p, self.points[0]), 0, 0.0);
        for (k, (a, b)) in self.segments().enumerate() {
            let d = sub(b, a);
            let l2 = dot(d, d);
            let s = if l2 == 0.0 { 0.0 } else { (dot(sub(p, a), d) / l2).clamp(0.0, 1.0) };
            let q = [a[0] + s * d[0], a[1] + s * d[1]];
            let dq = dist(p, q);
            if dq < best.1 {
                best = (q, dq, k, s);
            }
        }
        best
    }

    pub fn distance(&self, p: Point) -> f64 {
        self.project(p).1
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| dist(a, b)).sum()
    }
}

/// A traced characteristic with the reduced-problem value at each vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCharacteristic {
    pub path: PolylinePath,
    pub values: Vec<f64>,
    pub origin: Point,
}

impl LayerCharacteristic {
    /// Value at the projection of `p` onto the path, interpolated linearly.
    pub fn value_at(&self, p: Point) -> f64 {
        let (_, _, k, s) = self.path.project(p);
        let n = self.values.len();
        let (a, b) = (self.values[k], self.values[(k + 1) % n]);
        a + s * (b - a)
    }
}

/// Options for [`trace_characteristic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    /// Step in the flow time `t` of `dx/dt = b`.
    pub step: f64,
    pub max_steps: usize,
    /// Offset across the path used to sample the two one-sided limits.
    pub side_offset: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { step: 1e-2, max_steps: 100_000, side_offset: 1e-7 }
    }
}

fn rk4(spec: &ProblemSpec, p: Point, h: f64) -> Point {
    let b = |q: Point| spec.wind.at(q);
    let k1 = b(p);
    let k2 = b([p[0] + 0.5 * h * k1[0], p[1] + 0.5 * h * k1[1]]);
    let k3 = b([p[0] + 0.5 * h * k2[0], p[1] + 0.5 * h * k2[1]]);
    let k4 = b([p[0] + h * k3[0], p[1] + h * k3[1]]);
    [
        p[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        p[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

fn inside(mesh: &Triangulation, p: Point) -> bool {
    mesh.locate(p).is_some()
}

/// Last point of the segment `[a, b]` inside the mesh, `a` inside and `b` outside.
fn boundary_crossing(mesh: &Triangulation, a: Point, b: Point) -> Point {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let p = [a[0] + mid * (b[0] - a[0]), a[1] + mid * (b[1] - a[1])];
        if inside(mesh, p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    [a[0] + lo * (b[0] - a[0]), a[1] + lo * (b[1] - a[1])]
}

/// First boundary edge crossed by `[a, b]` after leaving `a`; a step can
/// jump over a thin sliver outside the domain, which `locate` alone misses.
fn first_boundary_hit(mesh: &Triangulation, a: Point, b: Point) -> Option<Point> {
    let mut best: Option<f64> = None;
    for be in mesh.boundary() {
        let [p, q] = be.nodes;
        if let Some((t, u)) = segment_intersection(a, b, mesh.node(p), mesh.node(q)) {
            if t > 1e-9 && t <= 1.0 && (0.0..=1.0).contains(&u) && best.is_none_or(|s| t < s) {
                best = Some(t);
            }
        }
    }
    best.map(|t| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])])
}

/// Follows `dx/dt = sign·b` from `p` until leaving the mesh; returns the
/// polyline and `∫ f dt` along it.
fn follow(
    mesh: &Triangulation,
    spec: &ProblemSpec,
    p: Point,
    sign: f64,
    opts: &TraceOptions,
) -> Result<(Vec<Point>, f64), LayerError> {
    let h = sign * opts.step;
    let mut pts = vec![p];
    let mut integral = 0.0;
    let mut cur = p;
    for _ in 0..opts.max_steps {
        let next = rk4(spec, cur, h);
        let hit = first_boundary_hit(mesh, cur, next);
        if hit.is_some() || !inside(mesh, next) {
            let end = hit.unwrap_or_else(|| boundary_crossing(mesh, cur, next));
            let frac = dist(cur, end) / dist(cur, next).max(f64::MIN_POSITIVE);
            integral += 0.5 * ((spec.f)(cur) + (spec.f)(end)) * frac * opts.step;
            pts.push(end);
            return Ok((pts, integral));
        }
        integral += 0.5 * ((spec.f)(cur) + (spec.f)(next)) * opts.step;
        pts.push(next);
        cur = next;
    }
    Err(LayerError::StepBudget(p, opts.max_steps))
}

/// Inflow value of the reduced problem just beside `x`, found by tracing
/// back to the boundary and adding `∫ f` along the way (`c = 0`).
fn reduced_value(mesh: &Triangulation, spec: &ProblemSpec, x: Point, opts: &TraceOptions) -> Result<f64, LayerError> {
    let (pts, integral) = follow(mesh, spec, x, -1.0, opts)?;
    let start = *pts.last().expect("nonempty trace");
    Ok((spec.g1)(start) + integral)
}

/// Value assigned to a layer starting at a data discontinuity: the mean of
/// the reduced-problem limits on the two sides of the characteristic.
pub fn layer_inflow_value(
    mesh: &Triangulation,
    spec: &ProblemSpec,
    origin: Point,
    opts: &TraceOptions,
) -> Result<f64, LayerError> {
    let b = spec.wind.at(origin);
    let bn = norm(b);
    let n = [-b[1] / bn, b[0] / bn];
    let d = opts.side_offset;
    // Sample a little downstream so both sides lie inside the domain.
    let ahead = [origin[0] + 1e3 * d * b[0] / bn, origin[1] + 1e3 * d * b[1] / bn];
    let mut limits = Vec::with_capacity(2);
    for s in [1.0, -1.0] {
        let x = [ahead[0] + s * d * n[0], ahead[1] + s * d * n[1]];
        if !inside(mesh, x) {
            return Err(LayerError::NotInflow(origin));
        }
        limits.push(reduced_value(mesh, spec, x, opts)?);
    }
    Ok(0.5 * (limits[0] + limits[1]))
}

/// Traces the characteristic `dx/dt = b` from `origin` until it leaves the
/// mesh. A constant wind gives a single straight segment.
pub fn trace_characteristic(
    mesh: &Triangulation,
    spec: &ProblemSpec,
    origin: Point,
    opts: &TraceOptions,
) -> Result<LayerCharacteristic, LayerError> {
    let b = spec.wind.at(origin);
    let bn = norm(b);
    if bn == 0.0 || !inside(mesh, [origin[0] + 1e-6 * b[0] / bn, origin[1] + 1e-6 * b[1] / bn]) {
        return Err(LayerError::NotInflow(origin));
    }
    let start_value = layer_inflow_value(mesh, spec, origin, opts)?;
    let (mut pts, _) = follow(mesh, spec, origin, 1.0, opts)?;
    if spec.wind.constant().is_some() {
        pts = vec![origin, *pts.last().expect("nonempty trace")];
    }
    // u along the path: u' = f in flow time.
    let mut values = vec![start_value];
    for w in pts.windows(2) {
        let bm = spec.wind.at([0.5 * (w[0][0] + w[1][0]), 0.5 * (w[0][1] + w[1][1])]);
        let dt = dist(w[0], w[1]) / norm(bm).max(f64::MIN_POSITIVE);
        let last = *values.last().expect("nonempty");
        values.push(last + 0.5 * ((spec.f)(w[0]) + (spec.f)(w[1])) * dt);
    }
    Ok(LayerCharacteristic { path: PolylinePath::open(pts), values, origin })
}

/// Which nodes move onto the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnapRule {
    /// For every mesh edge crossed by the path, its endpoint nearer the path.
    Closest,
    /// Every node closer than `factor · h_min(τ)²`, `τ` any incident element.
    HminSq(f64),
}

#[derive(Debug, Clone)]
pub struct SnapResult {
    pub mesh: Triangulation,
    pub moved: Vec<usize>,
    /// Candidates left in place because moving them would invert an element
    /// or take a boundary node off the boundary.
    pub skipped: Vec<usize>,
}

/// Proper intersection parameters of segments `[p, q]` and `[a, b]`.
fn segment_intersection(p: Point, q: Point, a: Point, b: Point) -> Option<(f64, f64)> {
    let r = sub(q, p);
    let s = sub(b, a);
    let den = cross(r, s);
    if den.abs() <= 1e-14 * norm(r) * norm(s) {
        return None;
    }
    let ap = sub(a, p);
    let t = cross(ap, s) / den;
    let u = cross(ap, r) / den;
    Some((t, u))
}

fn unique_edges(mesh: &Triangulation) -> Vec<(usize, usize)> {
    let mut set = BTreeSet::new();
    for el in mesh.elements() {
        for k in 0..3 {
            set.insert(edge_key(el[k], el[(k + 1) % 3]));
        }
    }
    set.into_iter().collect()
}

/// Boundary neighbours of each boundary node.
fn boundary_links(mesh: &Triangulation) -> HashMap<usize, Vec<usize>> {
    let mut m: HashMap<usize, Vec<usize>> = HashMap::new();
    for be in mesh.boundary() {
        let [a, b] = be.nodes;
        m.entry(a).or_default().push(b);
        m.entry(b).or_default().push(a);
    }
    m
}

/// Moves nodes near the path onto it.
pub fn snap_nodes(mesh: &Triangulation, layer: &LayerCharacteristic, rule: SnapRule) -> Result<SnapResult, LayerError> {
    let path = &layer.path;
    let mut candidates: BTreeSet<usize> = BTreeSet::new();
    match rule {
        SnapRule::Closest => {
            for (a, b) in unique_edges(mesh) {
                let (pa, pb) = (mesh.node(a), mesh.node(b));
                let crossed = path.segments().any(|(p, q)| {
                    segment_intersection(p, q, pa, pb).is_some_and(|(t, u)| {
                        (-1e-12..=1.0 + 1e-12).contains(&t) && u > 1e-12 && u < 1.0 - 1e-12
                    })
                });
                if crossed {
                    let v = if path.distance(pa) <= path.distance(pb) { a } else { b };
                    candidates.insert(v);
                }
            }
        }
        SnapRule::HminSq(factor) => {
            for i in 0..mesh.n_nodes() {
                let d = path.distance(mesh.node(i));
                let hmin = mesh
                    .node_elements(i)
                    .iter()
                    .map(|&e| mesh.h_min(e))
                    .fold(0.0, f64::max);
                if d > 0.0 && d < factor * hmin * hmin {
                    candidates.insert(i);
                }
            }
        }
    }
    let links = boundary_links(mesh);
    let on_boundary = mesh.boundary_nodes();
    let mut nodes = mesh.nodes().to_vec();
    let (mut moved, mut skipped) = (Vec::new(), Vec::new());
    for v in candidates {
        let p = nodes[v];
        let (q, d, _, _) = path.project(p);
        if d == 0.0 {
            continue;
        }
        if on_boundary[v] {
            // Slide along a straight boundary line only.
            let nb = &links[&v];
            let ok = nb.len() == 2 && {
                let (a, b) = (nodes[nb[0]], nodes[nb[1]]);
                let len = dist(a, b);
                orient(a, b, p).abs() <= 1e-12 * len * len && orient(a, b, q).abs() <= 1e-12 * len * len
            };
            if !ok {
                skipped.push(v);
                continue;
            }
        }
        let old = nodes[v];
        nodes[v] = q;
        let inverted = mesh.node_elements(v).iter().any(|&e| {
            let el = mesh.elements()[e];
            let before = orient(mesh.node(el[0]), mesh.node(el[1]), mesh.node(el[2]));
            orient(nodes[el[0]], nodes[el[1]], nodes[el[2]]) <= 1e-6 * before
        });
        if inverted {
            nodes[v] = old;
            skipped.push(v);
        } else {
            moved.push(v);
        }
    }
    let mesh = mesh.with_nodes(nodes)?;
    Ok(SnapResult { mesh, moved, skipped })
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub mesh: Triangulation,
    /// Nodes of the result lying on the path, ascending.
    pub on_path: Vec<usize>,
}

/// Relative tolerance for collapsing near-vertex crossings.
pub const VERTEX_TOL: f64 = 1e-10;

/// Splits every element crossed by the path so that the path becomes a chain
/// of edges; the new interior edges along it become layer edges carrying the
/// characteristic's value.
///
/// An element crossed through a vertex and the opposite edge is bisected.
/// One crossed through two edges is cut into a triangle and a quadrilateral,
/// the quadrilateral split into four triangles around its vertex mean.
pub fn embed_characteristic(mesh: &Triangulation, layer: &LayerCharacteristic) -> Result<Embedding, LayerError> {
    let path = &layer.path;
    let mut nodes = mesh.nodes().to_vec();
    let n0 = nodes.len();
    // Vertices on the path.
    let mut on_vertex = vec![false; n0];
    for i in 0..n0 {
        let h = mesh
            .node_elements(i)
            .iter()
            .map(|&e| mesh.h_min(e))
            .fold(f64::INFINITY, f64::min);
        on_vertex[i] = path.distance(nodes[i]) <= VERTEX_TOL * h;
    }
    // Edge cuts, one per crossed edge.
    let mut cut: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (a, b) in unique_edges(mesh) {
        let (pa, pb) = (nodes[a], nodes[b]);
        let len = dist(pa, pb);
        let mut hits: Vec<Point> = Vec::new();
        let push = |x: Point, hits: &mut Vec<Point>| {
            if dist(x, pa) > VERTEX_TOL * len && dist(x, pb) > VERTEX_TOL * len && hits.iter().all(|h| dist(*h, x) > VERTEX_TOL * len) {
                hits.push(x);
            }
        };
        // Path vertices lying on the edge (e.g. the path ends on the boundary).
        for &x in &path.points {
            let s = dot(sub(x, pa), sub(pb, pa)) / (len * len);
            if s > 0.0 && s < 1.0 && orient(pa, pb, x).abs() <= VERTEX_TOL * len * len {
                push(x, &mut hits);
            }
        }
        for (p, q) in path.segments() {
            let seg = dist(p, q);
            if seg == 0.0 {
                continue;
            }
            let collinear = orient(pa, pb, p).abs() <= VERTEX_TOL * len * len && orient(pa, pb, q).abs() <= VERTEX_TOL * len * len;
            if collinear {
                // Running along the edge is fine when both ends are on the path.
                let ta = dot(sub(pa, p), sub(q, p)) / (seg * seg);
                let tb = dot(sub(pb, p), sub(q, p)) / (seg * seg);
                let overlap = ta.max(tb).min(1.0) - ta.min(tb).max(0.0);
                if overlap > VERTEX_TOL && !(on_vertex[a] && on_vertex[b]) {
                    let e = mesh.node_elements(a).iter().copied().find(|e| mesh.node_elements(b).contains(e)).unwrap_or(0);
                    return Err(LayerError::Degenerate {
                        element: e,
                        detail: format!("path runs along part of edge {a}-{b}"),
                    });
                }
                continue;
            }
            if let Some((t, u)) = segment_intersection(p, q, pa, pb) {
                if (0.0..=1.0).contains(&t) && u > 0.0 && u < 1.0 {
                    push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])], &mut hits);
                }
            }
        }
        match hits.len() {
            0 => {}
            1 => {
                cut.insert((a, b), nodes.len());
                nodes.push(hits[0]);
            }
            _ => {
                let e = mesh.node_elements(a).iter().copied().find(|e| mesh.node_elements(b).contains(e)).unwrap_or(0);
                return Err(LayerError::Degenerate {
                    element: e,
                    detail: format!("edge {a}-{b} crossed {} times", hits.len()),
                });
            }
        }
    }

    let mut elements = Vec::with_capacity(mesh.n_elements() + 4 * cut.len());
    let mut along: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (e, &el) in mesh.elements().iter().enumerate() {
        let edge_cut: Vec<(usize, usize)> = (0..3)
            .filter_map(|k| cut.get(&edge_key(el[k], el[(k + 1) % 3])).map(|&c| (k, c)))
            .collect();
        let verts: Vec<usize> = (0..3).filter(|&k| on_vertex[el[k]]).collect();
        match (edge_cut.as_slice(), verts.len()) {
            ([], _) => elements.push(el),
            ([(k, c)], _) if verts.contains(&((k + 2) % 3)) => {
                let v = el[(k + 2) % 3];
                elements.push([el[*k], *c, v]);
                elements.push([*c, el[(k + 1) % 3], v]);
                along.insert(edge_key(v, *c));
            }
            ([(k1, c1), (k2, c2)], _) => {
                // Corner shared by the two cut edges.
                let corner = if (k1 + 1) % 3 == *k2 { (k1 + 1) % 3 } else { *k1 };
                let (ca, cb) = if corner == (k1 + 1) % 3 { (*c1, *c2) } else { (*c2, *c1) };
                let v = el[corner];
                let w1 = el[(corner + 1) % 3];
                let w2 = el[(corner + 2) % 3];
                elements.push([ca, v, cb]);
                let quad = [cb, w1, w2, ca];
                let m = quad.iter().fold([0.0, 0.0], |s, &q| [s[0] + 0.25 * nodes[q][0], s[1] + 0.25 * nodes[q][1]]);
                let mid = nodes.len();
                nodes.push(m);
                for i in 0..4 {
                    elements.push([quad[i], quad[(i + 1) % 4], mid]);
                }
                along.insert(edge_key(ca, cb));
            }
            _ => {
                return Err(LayerError::Degenerate {
                    element: e,
                    detail: format!("{} edge crossings and {} vertices on the path", edge_cut.len(), verts.len()),
                });
            }
        }
    }

    let split = |a: usize, b: usize| -> Option<usize> { cut.get(&edge_key(a, b)).copied() };
    let mut boundary = Vec::with_capacity(mesh.boundary().len() + 2);
    for be in mesh.boundary() {
        let [a, b] = be.nodes;
        match split(a, b) {
            Some(c) => {
                boundary.push(BoundaryEdge { nodes: [a, c], tag: be.tag });
                boundary.push(BoundaryEdge { nodes: [c, b], tag: be.tag });
            }
            None => boundary.push(*be),
        }
    }
    let boundary_keys: BTreeSet<(usize, usize)> = boundary.iter().map(|b| edge_key(b.nodes[0], b.nodes[1])).collect();
    let mut layers = Vec::new();
    for le in mesh.layer_edges() {
        let [a, b] = le.nodes;
        match split(a, b) {
            Some(c) => {
                layers.push(LayerEdge { nodes: [a, c], value: le.value });
                layers.push(LayerEdge { nodes: [c, b], value: le.value });
            }
            None => layers.push(*le),
        }
    }
    // Existing edges with both ends on the path and running along it.
    for (a, b) in unique_edges(mesh) {
        if on_vertex[a] && on_vertex[b] && !cut.contains_key(&(a, b)) {
            let m = [0.5 * (nodes[a][0] + nodes[b][0]), 0.5 * (nodes[a][1] + nodes[b][1])];
            if path.distance(m) <= VERTEX_TOL * dist(nodes[a], nodes[b]) {
                along.insert((a, b));
            }
        }
    }
    let existing: BTreeSet<(usize, usize)> = layers.iter().map(|l| edge_key(l.nodes[0], l.nodes[1])).collect();
    for &(a, b) in &along {
        if boundary_keys.contains(&(a, b)) || existing.contains(&(a, b)) {
            continue;
        }
        let m = [0.5 * (nodes[a][0] + nodes[b][0]), 0.5 * (nodes[a][1] + nodes[b][1])];
        layers.push(LayerEdge { nodes: [a, b], value: layer.value_at(m) });
    }
    let mut pinned = mesh.pinned().to_vec();
    pinned.resize(nodes.len(), false);
    let mut on_path: Vec<usize> = (0..n0).filter(|&i| on_vertex[i]).chain(cut.values().copied()).collect();
    on_path.sort_unstable();
    let mesh = Triangulation::with_extras(nodes, elements, boundary, layers, pinned)?;
    Ok(Embedding { mesh, on_path })
}

/// Red-refines every element of `Ω_h⁺` with a vertex on a layer edge.
pub fn refine_along_layers(mesh: &Triangulation, d: &OmegaPlusDecomposition) -> Result<Triangulation, LayerError> {
    let mut on_layer = vec![false; mesh.n_nodes()];
    for l in mesh.layer_edges() {
        on_layer[l.nodes[0]] = true;
        on_layer[l.nodes[1]] = true;
    }
    let selected: Vec<usize> = d
        .omega_plus
        .iter()
        .copied()
        .filter(|&e| mesh.elements()[e].iter().any(|&v| on_layer[v]))
        .collect();
    Ok(red_refine(mesh, &selected)?)
}
