//! One-dimensional partitions and conforming triangulations.
//!
//! A [`Triangulation`] stores counter-clockwise elements, tagged boundary
//! edges, optional interior Dirichlet edges (embedded layer
//! characteristics) and a per-node pinned flag for nodes that generators
//! must not move.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("nonconforming mesh: {0}")]
    Nonconforming(String),
    #[error("mesh generation failed: {0}")]
    Generation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub(crate) fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

pub(crate) fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Twice the signed area of `(a, b, c)`.
pub(crate) fn orient(a: Point, b: Point, c: Point) -> f64 {
    cross(sub(b, a), sub(c, a))
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

// ---------------------------------------------------------------------------
// 1D

/// Strictly increasing partition `x₀ < x₁ < … < x_J`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    nodes: Vec<f64>,
}

impl Mesh1D {
    pub fn new(nodes: Vec<f64>) -> Result<Self, MeshError> {
        if nodes.len() < 3 {
            return Err(MeshError::Argument(format!(
                "a 1D mesh needs at least 2 cells, got {}",
                nodes.len().saturating_sub(1)
            )));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(MeshError::Argument("nodes must be strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of cells `J`.
    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Width `h_j = x_j − x_{j−1}` for `j = 1..=J`.
    pub fn width(&self, j: usize) -> f64 {
        self.nodes[j] - self.nodes[j - 1]
    }

    /// Widths `h_1, …, h_J` (index 0 holds `h_1`).
    pub fn widths(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Mesh diameter `max h_j`.
    pub fn h(&self) -> f64 {
        self.widths().into_iter().fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        self.widths().into_iter().fold(f64::INFINITY, f64::min)
    }
}

pub fn uniform_mesh_1d(cells: usize) -> Result<Mesh1D, MeshError> {
    uniform_mesh_on(cells, 0.0, 1.0)
}

/// Uniform partition of `[a, b]` into `cells` cells.
pub fn uniform_mesh_on(cells: usize, a: f64, b: f64) -> Result<Mesh1D, MeshError> {
    if cells < 2 {
        return Err(MeshError::Argument(format!("J must be at least 2, got {cells}")));
    }
    if !(b > a) {
        return Err(MeshError::Argument(format!("empty interval [{a}, {b}]")));
    }
    let mut nodes: Vec<f64> = (0..=cells)
        .map(|j| a + (b - a) * j as f64 / cells as f64)
        .collect();
    nodes[cells] = b;
    Mesh1D::new(nodes)
}

/// Shishkin transition parameters for a mesh with `2N` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShishkinSpec1D {
    pub n: usize,
    pub eps: f64,
    pub beta: f64,
}

impl ShishkinSpec1D {
    /// `σ = min(1/2, (2/β) ε log N)`.
    pub fn sigma(&self) -> f64 {
        (2.0 / self.beta * self.eps * (self.n as f64).ln()).min(0.5)
    }
}

pub fn shishkin_mesh_1d(spec: ShishkinSpec1D) -> Result<Mesh1D, MeshError> {
    if spec.n < 2 {
        return Err(MeshError::Argument(format!(
            "N must be at least 2 (log N vanishes for N = {})",
            spec.n
        )));
    }
    if !(spec.eps > 0.0) || !(spec.beta > 0.0) {
        return Err(MeshError::Argument("eps and beta must be positive".into()));
    }
    shishkin_mesh_with_sigma(spec.n, spec.sigma())
}

/// Piecewise uniform mesh: `N` cells on `[0, 1−σ]` and `N` on `[1−σ, 1]`.
pub fn shishkin_mesh_with_sigma(n: usize, sigma: f64) -> Result<Mesh1D, MeshError> {
    if n < 1 {
        return Err(MeshError::Argument("N must be positive".into()));
    }
    if !(sigma > 0.0 && sigma <= 0.5) {
        return Err(MeshError::Argument(format!("sigma {sigma} outside (0, 1/2]")));
    }
    let tp = 1.0 - sigma;
    let mut nodes = Vec::with_capacity(2 * n + 1);
    for j in 0..=n {
        nodes.push(j as f64 * tp / n as f64);
    }
    for j in 1..=n {
        nodes.push(tp + j as f64 * sigma / n as f64);
    }
    nodes[n] = tp;
    nodes[2 * n] = 1.0;
    Mesh1D::new(nodes)
}

// ---------------------------------------------------------------------------
// 2D

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

/// Boundary edge, stored in the counter-clockwise direction of its element
/// so that the outward normal is the edge vector rotated clockwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// Interior edge carrying a prescribed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerEdge {
    pub nodes: [usize; 2],
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagonal {
    /// Southwest to northeast.
    SwNe,
    /// Northwest to southeast.
    NwSe,
}

#[derive(Debug, Clone)]
pub struct Triangulation {
    nodes: Vec<Point>,
    elements: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    layers: Vec<LayerEdge>,
    pinned: Vec<bool>,
    /// Neighbor across local edge `k = (v[k], v[k+1])`.
    neighbors: Vec<[Option<usize>; 3]>,
    node_elements: Vec<Vec<usize>>,
    boundary_owner: Vec<(usize, usize)>,
    boundary_index: HashMap<(usize, usize), usize>,
}

impl Triangulation {
    /// Builds and validates a triangulation. Elements are reoriented
    /// counter-clockwise and boundary edges are reoriented to match.
    pub fn new(
        nodes: Vec<Point>,
        elements: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
    ) -> Result<Self, MeshError> {
        Self::with_extras(nodes, elements, boundary, Vec::new(), Vec::new())
    }

    /// Builds a triangulation whose every free edge carries `tag`.
    pub fn from_elements(nodes: Vec<Point>, elements: Vec<[usize; 3]>, tag: BoundaryTag) -> Result<Self, MeshError> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for el in &elements {
            for k in 0..3 {
                *count.entry(edge_key(el[k], el[(k + 1) % 3])).or_default() += 1;
            }
        }
        let mut free: Vec<(usize, usize)> = count.into_iter().filter(|&(_, c)| c == 1).map(|(k, _)| k).collect();
        free.sort_unstable();
        let boundary = free
            .into_iter()
            .map(|(a, b)| BoundaryEdge { nodes: [a, b], tag })
            .collect();
        Self::new(nodes, elements, boundary)
    }

    pub fn with_extras(
        nodes: Vec<Point>,
        mut elements: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
        layers: Vec<LayerEdge>,
        pinned: Vec<bool>,
    ) -> Result<Self, MeshError> {
        let nn = nodes.len();
        for (e, el) in elements.iter_mut().enumerate() {
            if el.iter().any(|&v| v >= nn) {
                return Err(MeshError::Nonconforming(format!(
                    "element {e} references a missing node"
                )));
            }
            let a = orient(nodes[el[0]], nodes[el[1]], nodes[el[2]]);
            if a == 0.0 || !a.is_finite() {
                return Err(MeshError::Nonconforming(format!("element {e} is degenerate")));
            }
            if a < 0.0 {
                el.swap(1, 2);
            }
        }
        let pinned = if pinned.is_empty() {
            vec![false; nn]
        } else if pinned.len() == nn {
            pinned
        } else {
            return Err(MeshError::Argument("pinned flags length mismatch".into()));
        };

        let mut edge_elems: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (e, el) in elements.iter().enumerate() {
            for k in 0..3 {
                edge_elems
                    .entry(edge_key(el[k], el[(k + 1) % 3]))
                    .or_default()
                    .push((e, k));
            }
        }
        let mut neighbors = vec![[None; 3]; elements.len()];
        let mut free_edges: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (key, list) in &edge_elems {
            match list.as_slice() {
                [one] => {
                    free_edges.insert(*key, *one);
                }
                [(e1, k1), (e2, k2)] => {
                    neighbors[*e1][*k1] = Some(*e2);
                    neighbors[*e2][*k2] = Some(*e1);
                }
                _ => {
                    return Err(MeshError::Nonconforming(format!(
                        "edge {key:?} shared by {} elements",
                        list.len()
                    )))
                }
            }
        }

        let mut boundary_index = HashMap::new();
        let mut boundary_owner = Vec::with_capacity(boundary.len());
        let mut oriented = Vec::with_capacity(boundary.len());
        for (i, be) in boundary.iter().enumerate() {
            let key = edge_key(be.nodes[0], be.nodes[1]);
            let Some(&(e, k)) = free_edges.get(&key) else {
                return Err(MeshError::Nonconforming(format!(
                    "boundary edge {:?} is not a free edge of the triangulation",
                    be.nodes
                )));
            };
            if boundary_index.insert(key, i).is_some() {
                return Err(MeshError::Nonconforming(format!(
                    "boundary edge {:?} listed twice",
                    be.nodes
                )));
            }
            let el = elements[e];
            oriented.push(BoundaryEdge {
                nodes: [el[k], el[(k + 1) % 3]],
                tag: be.tag,
            });
            boundary_owner.push((e, k));
        }
        if boundary_index.len() != free_edges.len() {
            let mut missing: Vec<_> = free_edges
                .keys()
                .filter(|k| !boundary_index.contains_key(*k))
                .copied()
                .collect();
            missing.sort();
            return Err(MeshError::Nonconforming(format!(
                "{} free edges without boundary tag (first {:?}); hanging node or missing tag",
                missing.len(),
                missing[0]
            )));
        }
        for le in &layers {
            let key = edge_key(le.nodes[0], le.nodes[1]);
            match edge_elems.get(&key) {
                Some(l) if l.len() == 2 => {}
                _ => {
                    return Err(MeshError::Nonconforming(format!(
                        "layer edge {:?} is not an interior edge",
                        le.nodes
                    )))
                }
            }
        }

        let mut node_elements = vec![Vec::new(); nn];
        for (e, el) in elements.iter().enumerate() {
            for &v in el {
                node_elements[v].push(e);
            }
        }
        Ok(Self {
            nodes,
            elements,
            boundary: oriented,
            layers,
            pinned,
            neighbors,
            node_elements,
            boundary_owner,
            boundary_index,
        })
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> Point {
        self.nodes[i]
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn boundary(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn layer_edges(&self) -> &[LayerEdge] {
        &self.layers
    }

    pub fn pinned(&self) -> &[bool] {
        &self.pinned
    }

    /// Neighbors across local edges `(v0,v1)`, `(v1,v2)`, `(v2,v0)`.
    pub fn neighbors(&self, e: usize) -> [Option<usize>; 3] {
        self.neighbors[e]
    }

    pub fn node_elements(&self, i: usize) -> &[usize] {
        &self.node_elements[i]
    }

    /// Element and local edge index owning boundary edge `i`.
    pub fn boundary_owner(&self, i: usize) -> (usize, usize) {
        self.boundary_owner[i]
    }

    pub fn boundary_edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.boundary_index.get(&edge_key(a, b)).copied()
    }

    pub fn vertices(&self, e: usize) -> [Point; 3] {
        let el = self.elements[e];
        [self.nodes[el[0]], self.nodes[el[1]], self.nodes[el[2]]]
    }

    pub fn area(&self, e: usize) -> f64 {
        let [a, b, c] = self.vertices(e);
        0.5 * orient(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.area(e)).sum()
    }

    pub fn barycenter(&self, e: usize) -> Point {
        let [a, b, c] = self.vertices(e);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Longest edge length of element `e`.
    pub fn diameter(&self, e: usize) -> f64 {
        let [a, b, c] = self.vertices(e);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    /// Shortest edge length of element `e`.
    pub fn h_min(&self, e: usize) -> f64 {
        let [a, b, c] = self.vertices(e);
        dist(a, b).min(dist(b, c)).min(dist(c, a))
    }

    /// Outward unit normal of boundary edge `i`.
    pub fn boundary_normal(&self, i: usize) -> Point {
        let [a, b] = self.boundary[i].nodes;
        let d = sub(self.nodes[b], self.nodes[a]);
        let l = norm(d);
        [d[1] / l, -d[0] / l]
    }

    pub fn boundary_midpoint(&self, i: usize) -> Point {
        let [a, b] = self.boundary[i].nodes;
        midpoint(self.nodes[a], self.nodes[b])
    }

    pub fn boundary_nodes(&self) -> Vec<bool> {
        let mut on = vec![false; self.n_nodes()];
        for be in &self.boundary {
            on[be.nodes[0]] = true;
            on[be.nodes[1]] = true;
        }
        on
    }

    /// Nodes on a Dirichlet boundary edge or on a layer edge.
    pub fn dirichlet_nodes(&self) -> Vec<bool> {
        let mut d = vec![false; self.n_nodes()];
        for be in self.boundary.iter().filter(|b| b.tag == BoundaryTag::Dirichlet) {
            d[be.nodes[0]] = true;
            d[be.nodes[1]] = true;
        }
        for le in &self.layers {
            d[le.nodes[0]] = true;
            d[le.nodes[1]] = true;
        }
        d
    }

    /// Retags every boundary edge from its midpoint and outward normal.
    pub fn set_boundary_tags(&mut self, rule: impl Fn(Point, Point) -> BoundaryTag) {
        for i in 0..self.boundary.len() {
            let tag = rule(self.boundary_midpoint(i), self.boundary_normal(i));
            self.boundary[i].tag = tag;
        }
    }

    pub fn with_layer_edges(&self, layers: Vec<LayerEdge>) -> Result<Self, MeshError> {
        Self::with_extras(
            self.nodes.clone(),
            self.elements.clone(),
            self.boundary.clone(),
            layers,
            self.pinned.clone(),
        )
    }

    pub fn with_pinned(&self, pinned: Vec<bool>) -> Result<Self, MeshError> {
        Self::with_extras(
            self.nodes.clone(),
            self.elements.clone(),
            self.boundary.clone(),
            self.layers.clone(),
            pinned,
        )
    }

    /// Same connectivity and tags with new coordinates.
    pub fn with_nodes(&self, nodes: Vec<Point>) -> Result<Self, MeshError> {
        if nodes.len() != self.n_nodes() {
            return Err(MeshError::Argument("node count changed".into()));
        }
        for e in 0..self.n_elements() {
            let el = self.elements[e];
            if !(orient(nodes[el[0]], nodes[el[1]], nodes[el[2]]) > 0.0) {
                return Err(MeshError::Nonconforming(format!("element {e} inverted")));
            }
        }
        let mut out = self.clone();
        out.nodes = nodes;
        Ok(out)
    }

    /// Conformity audit: interior edges shared by two elements, boundary
    /// edges by one, positive areas.
    pub fn audit(&self) -> Result<(), MeshError> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for (e, el) in self.elements.iter().enumerate() {
            if !(self.area(e) > 0.0) {
                return Err(MeshError::Nonconforming(format!("element {e} has area {}", self.area(e))));
            }
            for k in 0..3 {
                *count.entry(edge_key(el[k], el[(k + 1) % 3])).or_default() += 1;
            }
        }
        for (key, c) in &count {
            let on_boundary = self.boundary_index.contains_key(key);
            match (c, on_boundary) {
                (1, true) | (2, false) => {}
                _ => {
                    return Err(MeshError::Nonconforming(format!(
                        "edge {key:?} used {c} times (boundary: {on_boundary})"
                    )))
                }
            }
        }
        Ok(())
    }

    /// Index of the element containing `p`, by linear search.
    pub fn locate(&self, p: Point) -> Option<usize> {
        let tol = 1e-12;
        (0..self.n_elements()).find(|&e| {
            let [a, b, c] = self.vertices(e);
            let s = orient(a, b, c);
            orient(a, b, p) >= -tol * s && orient(b, c, p) >= -tol * s && orient(c, a, p) >= -tol * s
        })
    }

    /// Barycentric coordinates of `p` in element `e`.
    pub fn barycentric(&self, e: usize, p: Point) -> [f64; 3] {
        let [a, b, c] = self.vertices(e);
        let s = orient(a, b, c);
        [orient(b, c, p) / s, orient(c, a, p) / s, orient(a, b, p) / s]
    }

    /// P1 interpolation of nodal `values` at `p`.
    pub fn interpolate(&self, values: &[f64], p: Point) -> Option<f64> {
        let e = self.locate(p)?;
        let l = self.barycentric(e, p);
        let el = self.elements[e];
        Some(l[0] * values[el[0]] + l[1] * values[el[1]] + l[2] * values[el[2]])
    }

    /// Gradients of the three barycentric basis functions on element `e`.
    pub fn basis_gradients(&self, e: usize) -> [Point; 3] {
        let [a, b, c] = self.vertices(e);
        let s = orient(a, b, c);
        [
            [(b[1] - c[1]) / s, (c[0] - b[0]) / s],
            [(c[1] - a[1]) / s, (a[0] - c[0]) / s],
            [(a[1] - b[1]) / s, (b[0] - a[0]) / s],
        ]
    }

    /// Gradient of the P1 function with nodal `values` on element `e`.
    pub fn gradient(&self, values: &[f64], e: usize) -> Point {
        let g = self.basis_gradients(e);
        let el = self.elements[e];
        let mut out = [0.0; 2];
        for k in 0..3 {
            out[0] += values[el[k]] * g[k][0];
            out[1] += values[el[k]] * g[k][1];
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Generators

/// Tensor grid triangulation with all boundary edges Dirichlet.
///
/// Nodes are numbered row by row, `x` fastest: node `(i, j)` has index
/// `j·(nx+1) + i`.
pub fn structured_from_lines(xs: &[f64], ys: &[f64], diagonal: Diagonal) -> Result<Triangulation, MeshError> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(MeshError::Argument("need at least one cell per direction".into()));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) || ys.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MeshError::Argument("grid lines must be strictly increasing".into()));
    }
    let (nx, ny) = (xs.len() - 1, ys.len() - 1);
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for &y in ys {
        for &x in xs {
            nodes.push([x, y]);
        }
    }
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (p00, p10, p11, p01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            match diagonal {
                Diagonal::SwNe => {
                    elements.push([p00, p10, p11]);
                    elements.push([p00, p11, p01]);
                }
                Diagonal::NwSe => {
                    elements.push([p00, p10, p01]);
                    elements.push([p10, p11, p01]);
                }
            }
        }
    }
    let mut boundary = Vec::new();
    let d = BoundaryTag::Dirichlet;
    for i in 0..nx {
        boundary.push(BoundaryEdge { nodes: [id(i, 0), id(i + 1, 0)], tag: d });
        boundary.push(BoundaryEdge { nodes: [id(i + 1, ny), id(i, ny)], tag: d });
    }
    for j in 0..ny {
        boundary.push(BoundaryEdge { nodes: [id(nx, j), id(nx, j + 1)], tag: d });
        boundary.push(BoundaryEdge { nodes: [id(0, j + 1), id(0, j)], tag: d });
    }
    Triangulation::new(nodes, elements, boundary)
}

/// Uniform `nx × ny` grid on `[x0, x1] × [y0, y1]`.
pub fn structured_triangulation(
    nx: usize,
    ny: usize,
    diagonal: Diagonal,
    x_range: [f64; 2],
    y_range: [f64; 2],
) -> Result<Triangulation, MeshError> {
    if nx < 1 || ny < 1 {
        return Err(MeshError::Argument("nx and ny must be at least 1".into()));
    }
    let line = |n: usize, r: [f64; 2]| -> Vec<f64> {
        let mut v: Vec<f64> = (0..=n).map(|i| r[0] + (r[1] - r[0]) * i as f64 / n as f64).collect();
        v[n] = r[1];
        v
    };
    structured_from_lines(&line(nx, x_range), &line(ny, y_range), diagonal)
}

pub fn unit_square(n: usize, diagonal: Diagonal) -> Result<Triangulation, MeshError> {
    structured_triangulation(n, n, diagonal, [0.0, 1.0], [0.0, 1.0])
}

/// Tensor product of two 1D Shishkin meshes with `2N` cells each.
pub fn tensor_shishkin_2d(
    nx: usize,
    ny: usize,
    sigma_x: f64,
    sigma_y: f64,
) -> Result<Triangulation, MeshError> {
    if !(sigma_x > 0.0 && sigma_x < 1.0 && sigma_y > 0.0 && sigma_y < 1.0) {
        return Err(MeshError::Argument("transition widths must lie in (0, 1)".into()));
    }
    let xs = shishkin_mesh_with_sigma(nx, sigma_x.min(0.5))?;
    let ys = shishkin_mesh_with_sigma(ny, sigma_y.min(0.5))?;
    structured_from_lines(xs.nodes(), ys.nodes(), Diagonal::SwNe)
}

/// Random interior displacements of up to `amplitude_fraction · h` per
/// coordinate, `h` being the shortest edge at the node. Boundary and
/// pinned nodes stay fixed.
pub fn perturb_structured(
    mesh: &Triangulation,
    amplitude_fraction: f64,
    seed: u64,
) -> Result<Triangulation, MeshError> {
    if !(0.0..=1.0 / 3.0 + 1e-15).contains(&amplitude_fraction) {
        return Err(MeshError::Argument(format!(
            "amplitude fraction {amplitude_fraction} outside [0, 1/3]"
        )));
    }
    if amplitude_fraction == 0.0 {
        return Ok(mesh.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let on_boundary = mesh.boundary_nodes();
    let mut fixed = on_boundary.clone();
    for (i, &p) in mesh.pinned().iter().enumerate() {
        fixed[i] |= p;
    }
    for le in mesh.layer_edges() {
        fixed[le.nodes[0]] = true;
        fixed[le.nodes[1]] = true;
    }
    let mut h = vec![f64::INFINITY; mesh.n_nodes()];
    for el in mesh.elements() {
        for k in 0..3 {
            let (a, b) = (el[k], el[(k + 1) % 3]);
            let l = dist(mesh.node(a), mesh.node(b));
            h[a] = h[a].min(l);
            h[b] = h[b].min(l);
        }
    }
    let mut nodes = mesh.nodes().to_vec();
    const RETRIES: usize = 100;
    for i in 0..nodes.len() {
        if fixed[i] {
            continue;
        }
        let amp = amplitude_fraction * h[i];
        let orig = nodes[i];
        let mut ok = false;
        for _ in 0..RETRIES {
            let cand = [
                orig[0] + rng.gen_range(-amp..=amp),
                orig[1] + rng.gen_range(-amp..=amp),
            ];
            nodes[i] = cand;
            ok = mesh.node_elements(i).iter().all(|&e| {
                let el = mesh.elements()[e];
                orient(nodes[el[0]], nodes[el[1]], nodes[el[2]]) > 0.0
            });
            if ok {
                break;
            }
        }
        if !ok {
            return Err(MeshError::Generation(format!(
                "node {i}: no admissible displacement after {RETRIES} draws"
            )));
        }
    }
    mesh.with_nodes(nodes)
}

/// Strip thickness rule for [`build_outflow_strip`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StripThickness {
    /// Fraction of the shortest target boundary edge at each node.
    EdgeFraction(f64),
    Absolute(f64),
}

impl Default for StripThickness {
    fn default() -> Self {
        StripThickness::EdgeFraction(0.5)
    }
}

/// Adds a layer of elements along the selected boundary edges.
///
/// Each target boundary node is moved inward and a new node is placed at its
/// old position; every target edge then bounds a quadrilateral split into
/// two triangles. Corner nodes of the target set move along the normalized
/// sum of the two edge normals; endpoints slide along the adjacent
/// non-target edge. With `wind`, the split diagonal starts at the upstream
/// corner.
pub fn build_outflow_strip(
    mesh: &Triangulation,
    targets: &[usize],
    thickness: StripThickness,
    wind: Option<Point>,
) -> Result<Triangulation, MeshError> {
    if targets.is_empty() {
        return Ok(mesh.clone());
    }
    let target_set: HashSet<usize> = targets.iter().copied().collect();
    if target_set.iter().any(|&i| i >= mesh.boundary().len()) {
        return Err(MeshError::Argument("target boundary edge out of range".into()));
    }
    // Boundary edges at each node.
    let mut node_edges: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, be) in mesh.boundary().iter().enumerate() {
        node_edges.entry(be.nodes[0]).or_default().push(i);
        node_edges.entry(be.nodes[1]).or_default().push(i);
    }
    let edge_len = |i: usize| {
        let [a, b] = mesh.boundary()[i].nodes;
        dist(mesh.node(a), mesh.node(b))
    };
    let mut target_nodes: Vec<usize> = target_set
        .iter()
        .flat_map(|&i| mesh.boundary()[i].nodes)
        .collect();
    target_nodes.sort_unstable();
    target_nodes.dedup();

    let mut nodes = mesh.nodes().to_vec();
    let mut pinned = mesh.pinned().to_vec();
    let mut copy_of: HashMap<usize, usize> = HashMap::new();
    let mut extra_boundary = Vec::new();
    for &p in &target_nodes {
        let edges = &node_edges[&p];
        if edges.len() != 2 {
            return Err(MeshError::Generation(format!(
                "boundary node {p} has {} boundary edges",
                edges.len()
            )));
        }
        let tgt: Vec<usize> = edges.iter().copied().filter(|i| target_set.contains(i)).collect();
        let t = match thickness {
            StripThickness::EdgeFraction(f) => {
                f * tgt.iter().map(|&i| edge_len(i)).fold(f64::INFINITY, f64::min)
            }
            StripThickness::Absolute(t) => t,
        };
        if !(t > 0.0) {
            return Err(MeshError::Argument("strip thickness must be positive".into()));
        }
        let disp = if tgt.len() == 2 {
            let (n1, n2) = (mesh.boundary_normal(tgt[0]), mesh.boundary_normal(tgt[1]));
            let s = [-(n1[0] + n2[0]), -(n1[1] + n2[1])];
            let l = norm(s);
            if l < 1e-10 {
                return Err(MeshError::Generation(format!("cusp at node {p}")));
            }
            let d = [s[0] / l, s[1] / l];
            let c = -dot(d, n1);
            if c < 0.1 {
                return Err(MeshError::Generation(format!("corner at node {p} too sharp")));
            }
            [d[0] * t / c, d[1] * t / c]
        } else {
            let other = edges.iter().copied().find(|i| !target_set.contains(i)).unwrap();
            let [a, b] = mesh.boundary()[other].nodes;
            let q = if a == p { b } else { a };
            let w = sub(mesh.node(q), mesh.node(p));
            let wl = norm(w);
            let w = [w[0] / wl, w[1] / wl];
            let n = mesh.boundary_normal(tgt[0]);
            let c = -dot(w, n);
            if c < 0.1 {
                return Err(MeshError::Generation(format!(
                    "adjacent edge at node {p} is nearly tangent to the strip"
                )));
            }
            let tag = mesh.boundary()[other].tag;
            extra_boundary.push((p, tag));
            [w[0] * t / c, w[1] * t / c]
        };
        let old = nodes[p];
        nodes[p] = [old[0] + disp[0], old[1] + disp[1]];
        copy_of.insert(p, nodes.len());
        nodes.push(old);
        pinned[p] = true;
        pinned.push(false);
    }

    let mut elements = mesh.elements().to_vec();
    for (e, el) in elements.iter().enumerate() {
        if !(orient(nodes[el[0]], nodes[el[1]], nodes[el[2]]) > 0.0) {
            return Err(MeshError::Generation(format!(
                "strip displacement inverts element {e}; reduce the thickness"
            )));
        }
    }
    let mut boundary = Vec::new();
    for (i, be) in mesh.boundary().iter().enumerate() {
        let [p, q] = be.nodes;
        if target_set.contains(&i) {
            let (pb, qb) = (copy_of[&p], copy_of[&q]);
            boundary.push(BoundaryEdge { nodes: [pb, qb], tag: be.tag });
            // Quad corners in counter-clockwise order.
            let quad = [pb, qb, q, p];
            let start = match wind {
                Some(b) => (0..4)
                    .min_by(|&x, &y| dot(b, nodes[quad[x]]).total_cmp(&dot(b, nodes[quad[y]])))
                    .unwrap(),
                None => 0,
            };
            let (c0, c1, c2, c3) = (
                quad[start],
                quad[(start + 1) % 4],
                quad[(start + 2) % 4],
                quad[(start + 3) % 4],
            );
            elements.push([c0, c1, c2]);
            elements.push([c0, c2, c3]);
        } else {
            boundary.push(*be);
        }
    }
    for (p, tag) in extra_boundary {
        boundary.push(BoundaryEdge { nodes: [copy_of[&p], p], tag });
    }
    let layers = mesh.layer_edges().to_vec();
    let out = Triangulation::with_extras(nodes, elements, boundary, layers, pinned)?;
    out.audit()?;
    Ok(out)
}

/// Regular refinement of `selected`, closed by longest-edge bisection.
pub fn red_refine(mesh: &Triangulation, selected: &[usize]) -> Result<Triangulation, MeshError> {
    if selected.is_empty() {
        return Err(MeshError::Argument("no elements selected for refinement".into()));
    }
    if selected.iter().any(|&e| e >= mesh.n_elements()) {
        return Err(MeshError::Argument("selected element out of range".into()));
    }
    let is_red: HashSet<usize> = selected.iter().copied().collect();
    let len2 = |a: usize, b: usize| {
        let d = sub(mesh.node(a), mesh.node(b));
        dot(d, d)
    };
    let longest = |el: &[usize; 3]| -> (usize, usize) {
        let mut best = edge_key(el[0], el[1]);
        for k in 1..3 {
            let cand = edge_key(el[k], el[(k + 1) % 3]);
            let (lc, lb) = (len2(cand.0, cand.1), len2(best.0, best.1));
            if lc > lb || (lc == lb && cand < best) {
                best = cand;
            }
        }
        best
    };
    let mut marked: HashSet<(usize, usize)> = HashSet::new();
    for &e in selected {
        let el = mesh.elements()[e];
        for k in 0..3 {
            marked.insert(edge_key(el[k], el[(k + 1) % 3]));
        }
    }
    loop {
        let mut changed = false;
        for (e, el) in mesh.elements().iter().enumerate() {
            if is_red.contains(&e) {
                continue;
            }
            let any = (0..3).any(|k| marked.contains(&edge_key(el[k], el[(k + 1) % 3])));
            if any && marked.insert(longest(el)) {
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut nodes = mesh.nodes().to_vec();
    let mut pinned = mesh.pinned().to_vec();
    let mut mid: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut sorted_marked: Vec<_> = marked.iter().copied().collect();
    sorted_marked.sort_unstable();
    for key in sorted_marked {
        mid.insert(key, nodes.len());
        nodes.push(midpoint(mesh.node(key.0), mesh.node(key.1)));
        pinned.push(false);
    }

    fn bisect_rec(
        tri: [usize; 3],
        mid: &BTreeMap<(usize, usize), usize>,
        nodes: &[Point],
        out: &mut Vec<[usize; 3]>,
    ) {
        // The longest marked edge of this triangle, if any.
        let mut pick: Option<(usize, f64)> = None;
        for k in 0..3 {
            let key = edge_key(tri[k], tri[(k + 1) % 3]);
            if mid.contains_key(&key) {
                let d = sub(nodes[key.0], nodes[key.1]);
                let l = dot(d, d);
                if pick.map_or(true, |(_, lb)| l > lb) {
                    pick = Some((k, l));
                }
            }
        }
        match pick {
            None => out.push(tri),
            Some((k, _)) => {
                let (a, b, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let m = mid[&edge_key(a, b)];
                bisect_rec([a, m, c], mid, nodes, out);
                bisect_rec([m, b, c], mid, nodes, out);
            }
        }
    }

    let mut elements = Vec::new();
    for (e, el) in mesh.elements().iter().enumerate() {
        if is_red.contains(&e) {
            let [a, b, c] = *el;
            let (mab, mbc, mca) = (
                mid[&edge_key(a, b)],
                mid[&edge_key(b, c)],
                mid[&edge_key(c, a)],
            );
            elements.push([a, mab, mca]);
            elements.push([mab, b, mbc]);
            elements.push([mca, mbc, c]);
            elements.push([mab, mbc, mca]);
        } else {
            // Longest edge first; children then split their remaining marked edge.
            let lk = longest(el);
            if marked.contains(&lk) {
                let k = (0..3)
                    .find(|&k| edge_key(el[k], el[(k + 1) % 3]) == lk)
                    .unwrap();
                let (a, b, c) = (el[k], el[(k + 1) % 3], el[(k + 2) % 3]);
                let m = mid[&lk];
                bisect_rec([a, m, c], &mid, &nodes, &mut elements);
                bisect_rec([m, b, c], &mid, &nodes, &mut elements);
            } else {
                elements.push(*el);
            }
        }
    }

    let mut boundary = Vec::new();
    for be in mesh.boundary() {
        let [a, b] = be.nodes;
        match mid.get(&edge_key(a, b)) {
            Some(&m) => {
                boundary.push(BoundaryEdge { nodes: [a, m], tag: be.tag });
                boundary.push(BoundaryEdge { nodes: [m, b], tag: be.tag });
            }
            None => boundary.push(*be),
        }
    }
    let mut layers = Vec::new();
    for le in mesh.layer_edges() {
        let [a, b] = le.nodes;
        match mid.get(&edge_key(a, b)) {
            Some(&m) => {
                layers.push(LayerEdge { nodes: [a, m], value: le.value });
                layers.push(LayerEdge { nodes: [m, b], value: le.value });
            }
            None => layers.push(*le),
        }
    }
    let out = Triangulation::with_extras(nodes, elements, boundary, layers, pinned)?;
    out.audit()?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// File I/O

fn tag_str(t: BoundaryTag) -> &'static str {
    match t {
        BoundaryTag::Dirichlet => "D",
        BoundaryTag::Neumann => "N",
    }
}

/// Serializes a mesh in the plain-text format read by [`parse_mesh`].
pub fn format_mesh(mesh: &Triangulation) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "NODES {}", mesh.n_nodes());
    for p in mesh.nodes() {
        let _ = writeln!(s, "{:?} {:?}", p[0], p[1]);
    }
    let _ = writeln!(s, "ELEMENTS {}", mesh.n_elements());
    for el in mesh.elements() {
        let _ = writeln!(s, "{} {} {}", el[0], el[1], el[2]);
    }
    let nb = mesh.boundary().len() + mesh.layer_edges().len();
    let _ = writeln!(s, "BOUNDARY {nb}");
    for be in mesh.boundary() {
        let _ = writeln!(s, "{} {} {}", be.nodes[0], be.nodes[1], tag_str(be.tag));
    }
    for le in mesh.layer_edges() {
        let _ = writeln!(s, "{} {} D {:?}", le.nodes[0], le.nodes[1], le.value);
    }
    let pins: Vec<usize> = (0..mesh.n_nodes()).filter(|&i| mesh.pinned()[i]).collect();
    if !pins.is_empty() {
        let _ = writeln!(s, "PINNED {}", pins.len());
        for i in pins {
            let _ = writeln!(s, "{i}");
        }
    }
    s
}

pub fn write_mesh(mesh: &Triangulation, path: impl AsRef<Path>) -> Result<(), MeshError> {
    fs::write(path, format_mesh(mesh))?;
    Ok(())
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<Triangulation, MeshError> {
    parse_mesh(&fs::read_to_string(path)?)
}

/// Parses the mesh format: sections `NODES n`, `ELEMENTS m`, `BOUNDARY b`
/// and optionally `PINNED p`. Boundary lines are `i j D`, `i j N`, or
/// `i j D v` for an interior edge carrying the value `v`.
pub fn parse_mesh(text: &str) -> Result<Triangulation, MeshError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let perr = |line: usize, msg: String| MeshError::Parse { line, msg };
    let mut pos = 0;
    let mut nodes = Vec::new();
    let mut elements = Vec::new();
    let mut boundary = Vec::new();
    let mut layers = Vec::new();
    let mut pins = Vec::new();
    let mut seen = HashSet::new();
    let mut element_lines = Vec::new();
    let mut boundary_lines = Vec::new();
    while pos < lines.len() {
        let (ln, header) = lines[pos];
        let mut parts = header.split_whitespace();
        let name = parts.next().unwrap_or("");
        let count: usize = parts
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| perr(ln, format!("expected section header with count, got '{header}'")))?;
        if !seen.insert(name.to_string()) {
            return Err(perr(ln, format!("duplicate section {name}")));
        }
        pos += 1;
        if pos + count > lines.len() {
            return Err(perr(ln, format!("section {name} truncated")));
        }
        for &(ln, body) in &lines[pos..pos + count] {
            let f: Vec<&str> = body.split_whitespace().collect();
            match name {
                "NODES" => {
                    let xy: Vec<f64> = f
                        .iter()
                        .map(|s| s.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| perr(ln, format!("bad coordinate: {e}")))?;
                    if xy.len() != 2 {
                        return Err(perr(ln, "node line needs 2 coordinates".into()));
                    }
                    nodes.push([xy[0], xy[1]]);
                }
                "ELEMENTS" => {
                    let ids: Vec<usize> = f
                        .iter()
                        .map(|s| s.parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| perr(ln, format!("bad index: {e}")))?;
                    if ids.len() != 3 {
                        return Err(perr(ln, "element line needs 3 indices".into()));
                    }
                    elements.push([ids[0], ids[1], ids[2]]);
                    element_lines.push(ln);
                }
                "BOUNDARY" => {
                    if f.len() < 3 || f.len() > 4 {
                        return Err(perr(ln, "boundary line is 'i j D|N [value]'".into()));
                    }
                    let i: usize = f[0].parse().map_err(|e| perr(ln, format!("bad index: {e}")))?;
                    let j: usize = f[1].parse().map_err(|e| perr(ln, format!("bad index: {e}")))?;
                    let tag = match f[2] {
                        "D" => BoundaryTag::Dirichlet,
                        "N" => BoundaryTag::Neumann,
                        t => return Err(perr(ln, format!("unknown tag '{t}'"))),
                    };
                    if f.len() == 4 {
                        if tag != BoundaryTag::Dirichlet {
                            return Err(perr(ln, "only D edges may carry a value".into()));
                        }
                        let v: f64 = f[3].parse().map_err(|e| perr(ln, format!("bad value: {e}")))?;
                        layers.push(LayerEdge { nodes: [i, j], value: v });
                    } else {
                        boundary.push(BoundaryEdge { nodes: [i, j], tag });
                    }
                    boundary_lines.push((ln, i, j));
                }
                "PINNED" => {
                    let i: usize = body.parse().map_err(|e| perr(ln, format!("bad index: {e}")))?;
                    pins.push((ln, i));
                }
                other => return Err(perr(ln, format!("unknown section '{other}'"))),
            }
        }
        pos += count;
    }
    if !seen.contains("NODES") || !seen.contains("ELEMENTS") {
        return Err(perr(lines.last().map_or(0, |l| l.0), "missing NODES or ELEMENTS".into()));
    }
    let nn = nodes.len();
    for (el, &ln) in elements.iter().zip(&element_lines) {
        if let Some(&bad) = el.iter().find(|&&v| v >= nn) {
            return Err(perr(ln, format!("element references node {bad} of {nn}")));
        }
    }
    for &(ln, i, j) in &boundary_lines {
        if i >= nn || j >= nn {
            return Err(perr(ln, format!("boundary edge references node {} of {nn}", i.max(j))));
        }
    }
    let mut pinned = vec![false; nn];
    for (ln, i) in pins {
        if i >= nn {
            return Err(perr(ln, format!("pinned node {i} of {nn}")));
        }
        pinned[i] = true;
    }
    Triangulation::with_extras(nodes, elements, boundary, layers, pinned)
}

/// CSV of nodal values with header `x,y,value`.
pub fn format_node_csv(mesh: &Triangulation, values: &[f64]) -> String {
    let mut s = String::from("x,y,value\n");
    for (p, v) in mesh.nodes().iter().zip(values) {
        let _ = writeln!(s, "{:?},{:?},{:?}", p[0], p[1], v);
    }
    s
}

// ---------------------------------------------------------------------------
// Curved domain

/// Trochoid-like closed curve, tilted by 45 degrees, with `σ = 0.9`.
pub fn trochoid_point(t: f64) -> Point {
    let sigma = 0.9;
    let r = (26.0 + 7.0 * (1.0 - (2.0 * t).sin().powi(9))) / (40.0 * (2.0 + sigma) * 2f64.sqrt());
    let u = 2.0 * t.cos() - sigma * (2.0 * t).cos();
    let v = 2.0 * t.sin() - sigma * (2.0 * t).sin();
    [r * (u - v), r * (u + v)]
}

/// `n` points of the curve at equally spaced parameters.
pub fn trochoid_polygon(n: usize) -> Vec<Point> {
    (0..n)
        .map(|k| trochoid_point(2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect()
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}
