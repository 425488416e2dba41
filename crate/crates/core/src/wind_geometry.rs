//! Boundary classification against the wind and construction of `Ω_h⁺`,
//! `Ω̂_h` and `N_δ`, plus uniqueness diagnostics and their remediation.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::fem::{ProblemSpec, Wind};
use crate::mesh::{cross, dot, norm, orient, red_refine, sub, BoundaryTag, MeshError, Point, Triangulation};

/// `|b·n| ≤ CHAR_TOL·|b|` counts as characteristic.
pub const CHAR_TOL: f64 = 1e-12;
/// `|b × e| ≤ PARALLEL_TOL·|b||e|` counts as parallel.
pub const PARALLEL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("inflow boundary edge {edge} ({a:?}-{b:?}) is not Dirichlet")]
    InflowNotDirichlet { edge: usize, a: Point, b: Point },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("no upwind element for node {0}")]
    NoUpwind(usize),
    #[error("defects persist after {rounds} refinement rounds:\n{report}")]
    RemediationFailed { rounds: usize, report: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowClass {
    Inflow,
    Characteristic,
    Outflow,
}

#[derive(Debug, Clone)]
pub struct BoundaryClassification {
    /// One entry per boundary edge of the mesh.
    pub classes: Vec<FlowClass>,
    /// Boundary edges in `Γ_D^{0+}`.
    pub gamma_d0plus: Vec<usize>,
    /// Nodes on `Γ_D^{0+}` or on a layer edge.
    pub gamma_d0plus_nodes: Vec<bool>,
}

impl BoundaryClassification {
    pub fn edges_of(&self, class: FlowClass) -> Vec<usize> {
        (0..self.classes.len()).filter(|&i| self.classes[i] == class).collect()
    }
}

fn flow_class(b: Point, n: Point) -> FlowClass {
    let bn = dot(b, n);
    if bn.abs() <= CHAR_TOL * norm(b) {
        FlowClass::Characteristic
    } else if bn < 0.0 {
        FlowClass::Inflow
    } else {
        FlowClass::Outflow
    }
}

/// Classifies each boundary edge by the sign of `b·n` at its midpoint.
pub fn classify_boundary(mesh: &Triangulation, wind: &Wind) -> Result<BoundaryClassification, GeometryError> {
    let mut classes = Vec::with_capacity(mesh.boundary().len());
    let mut gamma = Vec::new();
    let mut nodes = vec![false; mesh.n_nodes()];
    for (i, be) in mesh.boundary().iter().enumerate() {
        let class = flow_class(wind.at(mesh.boundary_midpoint(i)), mesh.boundary_normal(i));
        if class == FlowClass::Inflow && be.tag != BoundaryTag::Dirichlet {
            let [a, b] = be.nodes;
            return Err(GeometryError::InflowNotDirichlet {
                edge: i,
                a: mesh.node(a),
                b: mesh.node(b),
            });
        }
        if class != FlowClass::Inflow && be.tag == BoundaryTag::Dirichlet {
            gamma.push(i);
            nodes[be.nodes[0]] = true;
            nodes[be.nodes[1]] = true;
        }
        classes.push(class);
    }
    for le in mesh.layer_edges() {
        nodes[le.nodes[0]] = true;
        nodes[le.nodes[1]] = true;
    }
    Ok(BoundaryClassification {
        classes,
        gamma_d0plus: gamma,
        gamma_d0plus_nodes: nodes,
    })
}

pub fn classify(mesh: &Triangulation, spec: &ProblemSpec) -> Result<BoundaryClassification, GeometryError> {
    classify_boundary(mesh, &spec.wind)
}

/// Incident element of `node` whose corner contains the direction `d`.
/// Ties (direction along an edge) go to the lowest element index.
pub fn element_in_direction(mesh: &Triangulation, node: usize, d: Point, exclude: Option<usize>) -> Option<usize> {
    let p = mesh.node(node);
    let dn = norm(d);
    let mut best: Option<usize> = None;
    for &e in mesh.node_elements(node) {
        if Some(e) == exclude {
            continue;
        }
        let el = mesh.elements()[e];
        let k = el.iter().position(|&v| v == node).unwrap();
        let (q, r) = (mesh.node(el[(k + 1) % 3]), mesh.node(el[(k + 2) % 3]));
        let (eq, er) = (sub(q, p), sub(r, p));
        let tol_q = 1e-12 * norm(eq) * dn;
        let tol_r = 1e-12 * norm(er) * dn;
        // Counter-clockwise corner from eq to er.
        if cross(eq, d) >= -tol_q && cross(d, er) >= -tol_r && best.map_or(true, |b| e < b) {
            best = Some(e);
        }
    }
    best
}

/// Upwind element `τ₋(x_i)`: the element containing `x_i − λb` for small `λ > 0`.
pub fn upwind_element(mesh: &Triangulation, node: usize, b: Point) -> Option<usize> {
    if norm(b) == 0.0 {
        return None;
    }
    element_in_direction(mesh, node, [-b[0], -b[1]], None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaPlusDecomposition {
    pub omega_plus: Vec<usize>,
    pub omega_hat: Vec<usize>,
    /// Constraint nodes, ascending global indices.
    pub n_delta: Vec<usize>,
    pub b_h: Vec<usize>,
    pub interior_nodes: Vec<usize>,
    pub removed_upwind: Vec<usize>,
    in_plus: Vec<bool>,
}

impl OmegaPlusDecomposition {
    /// Completes a decomposition from the element set `Ω_h⁺`.
    pub fn from_plus(mesh: &Triangulation, omega_plus: Vec<usize>) -> Self {
        let mut in_plus = vec![false; mesh.n_elements()];
        for &e in &omega_plus {
            in_plus[e] = true;
        }
        let omega_plus: Vec<usize> = (0..mesh.n_elements()).filter(|&e| in_plus[e]).collect();
        let omega_hat: Vec<usize> = (0..mesh.n_elements()).filter(|&e| !in_plus[e]).collect();
        let on_boundary = mesh.boundary_nodes();
        let dirichlet = mesh.dirichlet_nodes();
        let n_delta = (0..mesh.n_nodes())
            .filter(|&i| {
                let elems = mesh.node_elements(i);
                let touches_plus = elems.iter().any(|&e| in_plus[e]);
                let on_border = on_boundary[i] || elems.iter().any(|&e| !in_plus[e]);
                touches_plus && on_border && !dirichlet[i]
            })
            .collect();
        Self {
            omega_plus,
            omega_hat,
            n_delta,
            b_h: Vec::new(),
            interior_nodes: Vec::new(),
            removed_upwind: Vec::new(),
            in_plus,
        }
    }

    pub fn contains(&self, e: usize) -> bool {
        self.in_plus[e]
    }

    pub fn in_plus(&self) -> &[bool] {
        &self.in_plus
    }
}

/// Elements with a vertex on `Γ_D^{0+}` (or on a layer edge).
pub fn b_h(mesh: &Triangulation, classification: &BoundaryClassification) -> Vec<usize> {
    (0..mesh.n_elements())
        .filter(|&e| mesh.elements()[e].iter().any(|&v| classification.gamma_d0plus_nodes[v]))
        .collect()
}

/// `Ω_h⁺ = B_h` minus the upwind elements of nodes interior to `B_h`.
///
/// A node is interior to `B_h` when it is off `∂Ω`, not a Dirichlet node
/// and all of its elements lie in `B_h`.
pub fn build_omega_plus(
    mesh: &Triangulation,
    classification: &BoundaryClassification,
    wind: &Wind,
) -> Result<OmegaPlusDecomposition, GeometryError> {
    build_omega_plus_with(mesh, classification, wind, true)
}

/// As [`build_omega_plus`]; with `remove_upwind = false` the result is `Ω_h⁺ = B_h`.
pub fn build_omega_plus_with(
    mesh: &Triangulation,
    classification: &BoundaryClassification,
    wind: &Wind,
    remove_upwind: bool,
) -> Result<OmegaPlusDecomposition, GeometryError> {
    let bh = b_h(mesh, classification);
    let mut in_bh = vec![false; mesh.n_elements()];
    for &e in &bh {
        in_bh[e] = true;
    }
    let on_boundary = mesh.boundary_nodes();
    let dirichlet = mesh.dirichlet_nodes();
    let interior: Vec<usize> = (0..mesh.n_nodes())
        .filter(|&i| {
            !on_boundary[i]
                && !dirichlet[i]
                && !mesh.node_elements(i).is_empty()
                && mesh.node_elements(i).iter().all(|&e| in_bh[e])
        })
        .collect();
    let mut removed = BTreeSet::new();
    if remove_upwind {
        for &i in &interior {
            let b = wind.at(mesh.node(i));
            let e = upwind_element(mesh, i, b).ok_or(GeometryError::NoUpwind(i))?;
            removed.insert(e);
        }
    }
    let plus: Vec<usize> = bh.iter().copied().filter(|e| !removed.contains(e)).collect();
    let mut d = OmegaPlusDecomposition::from_plus(mesh, plus);
    d.b_h = bh;
    d.interior_nodes = interior;
    d.removed_upwind = removed.into_iter().collect();
    Ok(d)
}

/// Closed segment–triangle intersection test.
fn segment_hits_triangle(p: Point, q: Point, tri: [Point; 3], tol: f64) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    let d = sub(q, p);
    for k in 0..3 {
        let (a, b) = (tri[k], tri[(k + 1) % 3]);
        // Inside: orient(a, b, x) ≥ −tol·|b−a|.
        let e = sub(b, a);
        let f0 = orient(a, b, p) + tol * norm(e);
        let df = cross(e, d);
        if df.abs() < 1e-300 {
            if f0 < 0.0 {
                return false;
            }
        } else {
            let t = -f0 / df;
            if df > 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Sub-segments of `[p, q]` where `b·n ≥ 0`, endpoints located by bisection.
fn outflow_pieces(wind: &Wind, p: Point, q: Point, n: Point) -> Vec<(Point, Point)> {
    let at = |s: f64| [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
    let out = |s: f64| {
        let b = wind.at(at(s));
        dot(b, n) >= -CHAR_TOL * norm(b)
    };
    const SAMPLES: usize = 2048;
    let mut pieces = Vec::new();
    let mut start: Option<f64> = if out(0.0) { Some(0.0) } else { None };
    let refine = |mut lo: f64, mut hi: f64, lo_val: bool| {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if out(mid) == lo_val {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, hi)
    };
    for k in 1..=SAMPLES {
        let (s0, s1) = ((k - 1) as f64 / SAMPLES as f64, k as f64 / SAMPLES as f64);
        let (v0, v1) = (out(s0), out(s1));
        if v0 && !v1 {
            let (lo, _) = refine(s0, s1, true);
            pieces.push((at(start.take().unwrap()), at(lo)));
        } else if !v0 && v1 {
            let (_, hi) = refine(s0, s1, false);
            start = Some(hi);
        }
    }
    if let Some(s) = start {
        pieces.push((at(s), at(1.0)));
    }
    pieces
}

/// `Ω_h⁺` from the outflow part of the boundary of the bounding box inset by `δ`.
pub fn build_omega_plus_shrunk(
    mesh: &Triangulation,
    wind: &Wind,
    delta: f64,
) -> Result<OmegaPlusDecomposition, GeometryError> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in mesh.nodes() {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    if !(delta > 0.0) || 2.0 * delta >= (hi[0] - lo[0]).min(hi[1] - lo[1]) {
        return Err(GeometryError::Argument(format!("inset {delta} leaves an empty square")));
    }
    let (x0, x1, y0, y1) = (lo[0] + delta, hi[0] - delta, lo[1] + delta, hi[1] - delta);
    let sides = [
        ([x0, y0], [x1, y0], [0.0, -1.0]),
        ([x1, y0], [x1, y1], [1.0, 0.0]),
        ([x1, y1], [x0, y1], [0.0, 1.0]),
        ([x0, y1], [x0, y0], [-1.0, 0.0]),
    ];
    let pieces: Vec<(Point, Point)> = sides
        .iter()
        .flat_map(|&(p, q, n)| outflow_pieces(wind, p, q, n))
        .collect();
    let tol = 1e-12 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let plus: Vec<usize> = (0..mesh.n_elements())
        .filter(|&e| {
            let tri = mesh.vertices(e);
            pieces.iter().any(|&(p, q)| segment_hits_triangle(p, q, tri, tol))
        })
        .collect();
    let mut d = OmegaPlusDecomposition::from_plus(mesh, plus.clone());
    d.b_h = plus;
    Ok(d)
}

/// Uniqueness defects of a decomposition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsReport {
    /// Components of `Ω̂_h` cut off from the inflow boundary.
    pub isolated_components: Vec<Vec<usize>>,
    /// `(element, local edge)` pairs: an edge parallel to `b` in an element
    /// of `Ω̂_h` downwind of `Ω_h⁺`.
    pub parallel_edges: Vec<(usize, usize)>,
    /// Per element of the mesh: true when its barycenter is downwind of `Ω_h⁺`.
    pub downwind: Vec<bool>,
    /// Component sizes of `Ω̂_h`, in order of smallest element index.
    pub component_sizes: Vec<usize>,
}

impl DiagnosticsReport {
    pub fn has_defects(&self) -> bool {
        !self.isolated_components.is_empty() || !self.parallel_edges.is_empty()
    }

    /// Plain-text summary with stable ordering.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "components {}", self.component_sizes.len());
        for (k, n) in self.component_sizes.iter().enumerate() {
            let _ = writeln!(s, "component {k} size {n}");
        }
        let _ = writeln!(s, "isolated {}", self.isolated_components.len());
        for c in &self.isolated_components {
            let ids: Vec<String> = c.iter().map(|e| e.to_string()).collect();
            let _ = writeln!(s, "isolated elements {}", ids.join(" "));
        }
        let _ = writeln!(s, "parallel {}", self.parallel_edges.len());
        for (e, k) in &self.parallel_edges {
            let _ = writeln!(s, "parallel element {e} edge {k}");
        }
        s
    }
}

/// Outcome of walking upstream from a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Walk {
    /// The walk entered this element of `Ω_h⁺`.
    HitPlus(usize),
    /// The walk left the domain.
    Exited,
}

/// Follows `x − t·b` (constant `b`) through element adjacency from element `e`.
pub fn walk_upstream(mesh: &Triangulation, start: usize, x: Point, b: Point, in_plus: &[bool]) -> Walk {
    let d = [-b[0], -b[1]];
    let mut e = start;
    let mut p = x;
    for _ in 0..(4 * mesh.n_elements() + 16) {
        let el = mesh.elements()[e];
        let v = mesh.vertices(e);
        // Exit parameters per edge.
        let mut exits: Vec<(f64, usize)> = Vec::new();
        for k in 0..3 {
            let (a, bb) = (v[k], v[(k + 1) % 3]);
            let c = cross(sub(bb, a), d);
            let scale = norm(sub(bb, a)) * norm(d);
            if c < -1e-14 * scale {
                let t = orient(a, bb, p) / -c;
                exits.push((t.max(0.0), k));
            }
        }
        if exits.is_empty() {
            return Walk::Exited;
        }
        exits.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (t, k) = exits[0];
        let q = [p[0] + t * d[0], p[1] + t * d[1]];
        let h = mesh.diameter(e);
        // Exit through a vertex when the ray lands within tolerance of one.
        let vertex = (0..3).find(|&j| norm(sub(v[j], q)) <= 1e-10 * h);
        let next = match vertex {
            Some(j) => element_in_direction(mesh, el[j], d, Some(e)),
            None => mesh.neighbors(e)[k],
        };
        match next {
            None => return Walk::Exited,
            Some(n) if in_plus[n] => return Walk::HitPlus(n),
            Some(n) => {
                p = match vertex {
                    Some(j) => v[j],
                    None => q,
                };
                e = n;
            }
        }
    }
    Walk::Exited
}

fn wind_constant_or_barycenter(wind: &Wind, mesh: &Triangulation, e: usize) -> Point {
    match wind.constant() {
        Some(b) => b,
        None => wind.at(mesh.barycenter(e)),
    }
}

/// Edge-connected components of `Ω̂_h`.
pub fn omega_hat_components(mesh: &Triangulation, d: &OmegaPlusDecomposition) -> Vec<Vec<usize>> {
    let mut seen = vec![false; mesh.n_elements()];
    let mut comps = Vec::new();
    for &start in &d.omega_hat {
        if seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(e) = queue.pop_front() {
            comp.push(e);
            for n in mesh.neighbors(e).into_iter().flatten() {
                if !seen[n] && !d.contains(n) {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Reports isolated components of `Ω̂_h` and elements with an edge parallel
/// to `b` downwind of `Ω_h⁺`.
///
/// A component is isolated when none of its elements has an inflow boundary
/// edge and it contains no removed upwind element. A parallel edge is
/// flagged only when the vertex opposite it is a free node.
pub fn diagnose(mesh: &Triangulation, d: &OmegaPlusDecomposition, wind: &Wind) -> DiagnosticsReport {
    let comps = omega_hat_components(mesh, d);
    let classes = classify_boundary(mesh, wind).ok().map(|c| c.classes);
    let mut inflow_elem = vec![false; mesh.n_elements()];
    for i in 0..mesh.boundary().len() {
        let class = match &classes {
            Some(c) => c[i],
            None => flow_class(wind.at(mesh.boundary_midpoint(i)), mesh.boundary_normal(i)),
        };
        if class == FlowClass::Inflow {
            inflow_elem[mesh.boundary_owner(i).0] = true;
        }
    }
    let removed: BTreeSet<usize> = d.removed_upwind.iter().copied().collect();
    let isolated: Vec<Vec<usize>> = comps
        .iter()
        .filter(|c| !c.iter().any(|&e| inflow_elem[e] || removed.contains(&e)))
        .cloned()
        .collect();

    let dirichlet = mesh.dirichlet_nodes();
    let mut downwind = vec![false; mesh.n_elements()];
    let mut parallel = Vec::new();
    for &e in &d.omega_hat {
        let b = wind_constant_or_barycenter(wind, mesh, e);
        if norm(b) == 0.0 {
            continue;
        }
        let hit = walk_upstream(mesh, e, mesh.barycenter(e), b, d.in_plus());
        downwind[e] = matches!(hit, Walk::HitPlus(_));
        if !downwind[e] {
            continue;
        }
        let el = mesh.elements()[e];
        let v = mesh.vertices(e);
        for k in 0..3 {
            let ed = sub(v[(k + 1) % 3], v[k]);
            let opposite = el[(k + 2) % 3];
            if cross(b, ed).abs() <= PARALLEL_TOL * norm(b) * norm(ed) && !dirichlet[opposite] {
                parallel.push((e, k));
            }
        }
    }
    DiagnosticsReport {
        isolated_components: isolated,
        parallel_edges: parallel,
        downwind,
        component_sizes: comps.iter().map(|c| c.len()).collect(),
    }
}

/// Elements of `Ω_h⁺` to refine for the defects in `report`.
pub fn remediation_targets(
    mesh: &Triangulation,
    d: &OmegaPlusDecomposition,
    report: &DiagnosticsReport,
    wind: &Wind,
) -> Vec<usize> {
    let mut targets = BTreeSet::new();
    let upwind_neighbors = |e: usize, targets: &mut BTreeSet<usize>| {
        let b = wind_constant_or_barycenter(wind, mesh, e);
        let v = mesh.vertices(e);
        for k in 0..3 {
            let ed = sub(v[(k + 1) % 3], v[k]);
            let n = [ed[1], -ed[0]];
            if dot(b, n) < -CHAR_TOL * norm(b) * norm(n) {
                if let Some(nb) = mesh.neighbors(e)[k] {
                    if d.contains(nb) {
                        targets.insert(nb);
                    }
                }
            }
        }
    };
    for comp in &report.isolated_components {
        for &e in comp {
            upwind_neighbors(e, &mut targets);
        }
    }
    for &(e, _) in &report.parallel_edges {
        upwind_neighbors(e, &mut targets);
        let b = wind_constant_or_barycenter(wind, mesh, e);
        if let Walk::HitPlus(p) = walk_upstream(mesh, e, mesh.barycenter(e), b, d.in_plus()) {
            targets.insert(p);
        }
    }
    targets.into_iter().collect()
}

/// Result of [`remediate`].
#[derive(Debug, Clone)]
pub struct Remediation {
    pub mesh: Triangulation,
    pub decomposition: OmegaPlusDecomposition,
    pub rounds: usize,
}

/// Red-refines the `Ω_h⁺` elements upwind of each defect and rebuilds the
/// decomposition, for at most two rounds.
pub fn remediate(mesh: &Triangulation, wind: &Wind) -> Result<Remediation, GeometryError> {
    let mut current = mesh.clone();
    for round in 0..=2 {
        let classification = classify_boundary(&current, wind)?;
        let d = build_omega_plus(&current, &classification, wind)?;
        let report = diagnose(&current, &d, wind);
        if !report.has_defects() {
            return Ok(Remediation { mesh: current, decomposition: d, rounds: round });
        }
        if round == 2 {
            return Err(GeometryError::RemediationFailed { rounds: 2, report: report.to_text() });
        }
        let targets = remediation_targets(&current, &d, &report, wind);
        if targets.is_empty() {
            return Err(GeometryError::RemediationFailed { rounds: round, report: report.to_text() });
        }
        current = red_refine(&current, &targets)?;
    }
    unreachable!("loop returns within three iterations")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{unit_square, build_outflow_strip, StripThickness, Diagonal};

    fn constant(b: Point) -> Wind {
        Wind::Constant(b)
    }

    #[test]
    fn square_classification() {
        let m = unit_square(4, Diagonal::SwNe).unwrap();
        let c = classify_boundary(&m, &constant([1.0, 1.0])).unwrap();
        for &i in &c.gamma_d0plus {
            let mid = m.boundary_midpoint(i);
            assert!(mid[0] == 1.0 || mid[1] == 1.0);
        }
        assert_eq!(c.gamma_d0plus.len(), 8);

        let c = classify_boundary(&m, &constant([1.0, 0.0])).unwrap();
        for i in 0..m.boundary().len() {
            let mid = m.boundary_midpoint(i);
            let expect = if mid[1] == 0.0 || mid[1] == 1.0 {
                FlowClass::Characteristic
            } else if mid[0] == 1.0 {
                FlowClass::Outflow
            } else {
                FlowClass::Inflow
            };
            assert_eq!(c.classes[i], expect);
        }
        let c = classify_boundary(&m, &constant([-1.0, 0.0])).unwrap();
        let i = (0..m.boundary().len()).find(|&i| m.boundary_midpoint(i)[0] == 1.0).unwrap();
        assert_eq!(c.classes[i], FlowClass::Inflow);
    }

    #[test]
    fn scaling_b_keeps_classes() {
        let m = unit_square(3, Diagonal::NwSe).unwrap();
        let a = classify_boundary(&m, &constant([0.3, -0.7])).unwrap();
        let b = classify_boundary(&m, &constant([3e5, -7e5])).unwrap();
        assert_eq!(a.classes, b.classes);
    }

    #[test]
    fn neumann_inflow_rejected() {
        let mut m = unit_square(2, Diagonal::SwNe).unwrap();
        m.set_boundary_tags(|_, _| BoundaryTag::Neumann);
        assert!(matches!(
            classify_boundary(&m, &constant([1.0, 0.0])),
            Err(GeometryError::InflowNotDirichlet { .. })
        ));
    }

    #[test]
    fn upwind_on_uniform_grid() {
        let m = unit_square(4, Diagonal::NwSe).unwrap();
        let node = 2 * 5 + 2;
        let b = [1.0, 1.0];
        let e = upwind_element(&m, node, b).unwrap();
        let h = 0.25;
        let p = m.node(node);
        let probe = [p[0] - 1e-9 * h * b[0], p[1] - 1e-9 * h * b[1]];
        let l = m.barycentric(e, probe);
        assert!(l.iter().all(|&x| x >= -1e-15));
        // Along the diagonal on a SW-NE grid: lowest index wins.
        let m = unit_square(4, Diagonal::SwNe).unwrap();
        let e = upwind_element(&m, node, b).unwrap();
        let candidates: Vec<usize> = m
            .node_elements(node)
            .iter()
            .copied()
            .filter(|&k| {
                let el = m.elements()[k];
                el.contains(&(node - 6))
            })
            .collect();
        assert_eq!(candidates.len(), 2);
        assert_eq!(e, *candidates.iter().min().unwrap());
        // Inflow corner.
        assert_eq!(upwind_element(&m, 0, b), None);
    }

    #[test]
    fn strip_gives_plus_equal_to_strip() {
        let m = unit_square(4, Diagonal::SwNe).unwrap();
        let east: Vec<usize> = (0..m.boundary().len())
            .filter(|&i| m.boundary_normal(i)[0] > 0.5)
            .collect();
        let s = build_outflow_strip(&m, &east, StripThickness::default(), Some([1.0, 0.0])).unwrap();
        let mut s = s;
        s.set_boundary_tags(|mid, _| {
            if mid[1] == 0.0 || mid[1] == 1.0 {
                BoundaryTag::Neumann
            } else {
                BoundaryTag::Dirichlet
            }
        });
        let w = constant([1.0, 0.0]);
        let c = classify_boundary(&s, &w).unwrap();
        let d = build_omega_plus(&s, &c, &w).unwrap();
        let strip: Vec<usize> = (m.n_elements()..s.n_elements()).collect();
        assert_eq!(d.omega_plus, strip);
        assert!(d.removed_upwind.is_empty());
        let report = diagnose(&s, &d, &w);
        assert!(!report.has_defects());
        assert_eq!(report.component_sizes, vec![m.n_elements()]);
    }

    #[test]
    fn partition_is_exhaustive() {
        let m = unit_square(6, Diagonal::NwSe).unwrap();
        let w = constant([2.0, 3.0]);
        let c = classify_boundary(&m, &w).unwrap();
        let d = build_omega_plus(&m, &c, &w).unwrap();
        assert_eq!(d.omega_plus.len() + d.omega_hat.len(), m.n_elements());
        assert!(d.omega_plus.iter().all(|e| !d.omega_hat.contains(e)));
        let dir = m.dirichlet_nodes();
        assert!(d.n_delta.iter().all(|&i| !dir[i]));
    }

    #[test]
    fn shrunk_plus_rejects_large_inset() {
        let m = unit_square(4, Diagonal::SwNe).unwrap();
        assert!(build_omega_plus_shrunk(&m, &constant([1.0, 0.0]), 0.6).is_err());
    }

    #[test]
    fn segment_triangle_cases() {
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(segment_hits_triangle([-1.0, 0.2], [2.0, 0.2], tri, 1e-12));
        assert!(segment_hits_triangle([0.5, 0.5], [1.0, 1.0], tri, 1e-12));
        assert!(!segment_hits_triangle([0.6, 0.6], [1.0, 1.0], tri, 1e-12));
    }
}
