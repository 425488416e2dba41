//! Named test problems, manufactured solutions and small regression meshes.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::fem::{constant_field, ProblemSpec, ScalarField, Wind};
use crate::fem1d::Problem1D;
use crate::mesh::{perturb_structured, unit_square, BoundaryTag, Diagonal, MeshError, Point, Triangulation};
use crate::wind_geometry::{classify, GeometryError};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown problem `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type TagRule = Arc<dyn Fn(Point, Point) -> BoundaryTag + Send + Sync>;
pub type GradientField = Arc<dyn Fn(Point) -> Point + Send + Sync>;

#[derive(Clone)]
pub enum Model {
    OneD(Problem1D),
    TwoD(ProblemSpec),
}

/// A problem from the catalog together with its boundary partition rule and,
/// when known, the exact solution.
#[derive(Clone)]
pub struct NamedProblem {
    pub id: &'static str,
    pub model: Model,
    /// Boundary tag from edge midpoint and outward normal.
    pub tags: Option<TagRule>,
    pub exact: Option<ScalarField>,
    pub exact_gradient: Option<GradientField>,
    /// Published reference values for this problem.
    pub reference: Vec<(&'static str, f64)>,
}

impl fmt::Debug for NamedProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NamedProblem")
            .field("id", &self.id)
            .field("reference", &self.reference)
            .finish_non_exhaustive()
    }
}

impl NamedProblem {
    pub fn spec(&self) -> Option<&ProblemSpec> {
        match &self.model {
            Model::TwoD(s) => Some(s),
            Model::OneD(_) => None,
        }
    }

    pub fn problem_1d(&self) -> Option<&Problem1D> {
        match &self.model {
            Model::OneD(p) => Some(p),
            Model::TwoD(_) => None,
        }
    }

    /// Applies the boundary partition to a mesh of this problem's domain.
    pub fn tag(&self, mesh: &mut Triangulation) {
        if let Some(rule) = &self.tags {
            mesh.set_boundary_tags(|m, n| rule(m, n));
        }
    }
}

pub const IDS: [&str; 8] = ["fig1", "ex1", "ex3", "ex4", "ex5", "ex6", "ex6-theta", "ex7"];

/// Default problem for `id` with its customary `ε`.
pub fn catalog(id: &str) -> Result<NamedProblem, ProblemError> {
    Ok(match id {
        "fig1" => fig1(),
        "ex1" => ex1(1e-8),
        "ex3" => ex3(1e-8),
        "ex4" => ex4(1e-8),
        "ex5" => ex5(1e-8),
        "ex6" => hemker(1e-8),
        "ex6-theta" => hemker_theta(1e-8, PI / 4.0),
        "ex7" => double_glazing(1e-4),
        other => return Err(ProblemError::Unknown(other.to_string())),
    })
}

/// `ε = 1e−8`, `b = f = 1`, `c = 0` on the unit interval.
pub fn fig1() -> NamedProblem {
    NamedProblem {
        id: "fig1",
        model: Model::OneD(Problem1D::constant_source(1e-8, 1.0, 1.0)),
        tags: None,
        exact: None,
        exact_gradient: None,
        reference: Vec::new(),
    }
}

/// Transition width `4ε log(2N)` used for the 1D coarse domain.
pub fn fig1_sigma(eps: f64, n: usize) -> f64 {
    4.0 * eps * ((2 * n) as f64).ln()
}

/// Manufactured solution `u = (x − e^{2(x−1)/ε})(y² − e^{3(y−1)/ε})` with `b = [2, 3]`.
pub struct Ex1Solution {
    pub eps: f64,
}

impl Ex1Solution {
    fn parts(&self, p: Point) -> (f64, f64, f64, f64, f64, f64, f64, f64) {
        let e = self.eps;
        let ex = (2.0 * (p[0] - 1.0) / e).exp();
        let ey = (3.0 * (p[1] - 1.0) / e).exp();
        let x = p[0] - ex;
        let xp = 1.0 - 2.0 / e * ex;
        let xpp = -4.0 / (e * e) * ex;
        let y = p[1] * p[1] - ey;
        let yp = 2.0 * p[1] - 3.0 / e * ey;
        let ypp = 2.0 - 9.0 / (e * e) * ey;
        (x, xp, xpp, y, yp, ypp, ex, ey)
    }

    pub fn value(&self, p: Point) -> f64 {
        let (x, _, _, y, ..) = self.parts(p);
        x * y
    }

    pub fn gradient(&self, p: Point) -> Point {
        let (x, xp, _, y, yp, ..) = self.parts(p);
        [xp * y, x * yp]
    }

    pub fn laplacian(&self, p: Point) -> f64 {
        let (x, _, xpp, y, _, ypp, ..) = self.parts(p);
        xpp * y + x * ypp
    }

    /// `−εΔu + b·∇u` with the layer terms cancelled analytically.
    pub fn source(&self, p: Point) -> f64 {
        let (x, _, _, y, ..) = self.parts(p);
        2.0 * y + (6.0 * p[1] - 2.0 * self.eps) * x
    }
}

pub fn ex1(eps: f64) -> NamedProblem {
    let sol = Arc::new(Ex1Solution { eps });
    let (s1, s2, s3) = (sol.clone(), sol.clone(), sol);
    NamedProblem {
        id: "ex1",
        model: Model::TwoD(ProblemSpec::new(eps, [2.0, 3.0], 0.0).with_source(Arc::new(move |p| s1.source(p)))),
        tags: Some(Arc::new(|_, _| BoundaryTag::Dirichlet)),
        exact: Some(Arc::new(move |p| s2.value(p))),
        exact_gradient: Some(Arc::new(move |p| s3.gradient(p))),
        reference: Vec::new(),
    }
}

/// Transition widths `(2ε log N, (3/2) ε log 2N)` of the tensor Shishkin mesh.
pub fn ex1_sigmas(eps: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    ((2.0 * eps * nf.ln()).min(0.5), (1.5 * eps * (2.0 * nf).ln()).min(0.5))
}

/// `b = [2, 3]`, `f = 1`, homogeneous Dirichlet data; the domain is either
/// the trochoid or, at desk scale, the unit square.
pub fn ex3(eps: f64) -> NamedProblem {
    NamedProblem {
        id: "ex3",
        model: Model::TwoD(ProblemSpec::new(eps, [2.0, 3.0], 1.0)),
        tags: Some(Arc::new(|_, _| BoundaryTag::Dirichlet)),
        exact: None,
        exact_gradient: None,
        reference: vec![
            ("ratio_supg_sms_galerkin_eps1e-4", 9.64),
            ("ratio_supg_sms_supg_eps1e-4", 30.19),
            ("ratio_supg_sms_galerkin_eps1e-8", 11.42),
            ("ratio_supg_sms_supg_eps1e-8", 37.69),
        ],
    }
}

/// `b = [1, 0]`, `f = 1` on the unit square: exponential layer at `x = 1`,
/// characteristic layers at `y = 0, 1`.
pub fn ex4(eps: f64) -> NamedProblem {
    NamedProblem {
        id: "ex4",
        model: Model::TwoD(ProblemSpec::new(eps, [1.0, 0.0], 1.0)),
        tags: Some(Arc::new(|_, _| BoundaryTag::Dirichlet)),
        exact: None,
        exact_gradient: None,
        reference: vec![("osc_supg_64", 0.134)],
    }
}

/// Inflow jump of the interior-layer problem.
pub const EX5_JUMP: Point = [0.0, 0.7];

/// Boundary data: 0 if `x = 1` or `y ≤ 0.7`, 1 otherwise (in that precedence).
pub fn ex5_boundary(p: Point) -> f64 {
    if (p[0] - 1.0).abs() < 1e-12 || p[1] <= 0.7 {
        0.0
    } else {
        1.0
    }
}

pub fn ex5_wind() -> Point {
    [(-PI / 3.0).cos(), (-PI / 3.0).sin()]
}

pub fn ex5(eps: f64) -> NamedProblem {
    let mut spec = ProblemSpec::new(eps, ex5_wind(), 0.0).with_dirichlet(Arc::new(ex5_boundary));
    spec.dirichlet_jumps = vec![EX5_JUMP];
    NamedProblem {
        id: "ex5",
        model: Model::TwoD(spec),
        tags: Some(Arc::new(|_, _| BoundaryTag::Dirichlet)),
        exact: None,
        exact_gradient: None,
        reference: vec![("layer_value", 0.5), ("smear_int_sms_64", 1.3e-2), ("osc_int_supg_64", 0.59), ("smear_int_supg_64", 0.062)],
    }
}

/// Radius below which a boundary midpoint is on the cylinder.
const CYLINDER_TEST_RADIUS: f64 = 1.5;

fn on_cylinder(p: Point) -> bool {
    p[0].hypot(p[1]) < CYLINDER_TEST_RADIUS
}

fn hemker_data(p: Point) -> f64 {
    if on_cylinder(p) {
        1.0
    } else {
        0.0
    }
}

/// Flow past the unit cylinder in `(−3, 9) × (−3, 3)`: `u = 0` on `x = −3`,
/// `u = 1` on the circle, homogeneous Neumann elsewhere.
pub fn hemker(eps: f64) -> NamedProblem {
    NamedProblem {
        id: "ex6",
        model: Model::TwoD(ProblemSpec::new(eps, [1.0, 0.0], 0.0).with_dirichlet(Arc::new(hemker_data))),
        tags: Some(Arc::new(|m, _| {
            if on_cylinder(m) || (m[0] + 3.0).abs() < 1e-9 {
                BoundaryTag::Dirichlet
            } else {
                BoundaryTag::Neumann
            }
        })),
        exact: None,
        exact_gradient: None,
        reference: vec![("overshoot_supg", 0.04), ("undershoot_supg", -0.52)],
    }
}

/// Rotated wind `[cos θ, sin θ]`, with `y = −3` added to the Dirichlet part.
pub fn hemker_theta(eps: f64, theta: f64) -> NamedProblem {
    NamedProblem {
        id: "ex6-theta",
        model: Model::TwoD(
            ProblemSpec::new(eps, [theta.cos(), theta.sin()], 0.0).with_dirichlet(Arc::new(hemker_data)),
        ),
        tags: Some(Arc::new(|m, _| {
            if on_cylinder(m) || (m[0] + 3.0).abs() < 1e-9 || (m[1] + 3.0).abs() < 1e-9 {
                BoundaryTag::Dirichlet
            } else {
                BoundaryTag::Neumann
            }
        })),
        exact: None,
        exact_gradient: None,
        reference: Vec::new(),
    }
}

/// Points where the Hemker interior layers leave the cylinder for wind angle `θ`.
pub fn hemker_layer_origins(theta: f64) -> [Point; 2] {
    [[-theta.sin(), theta.cos()], [theta.sin(), -theta.cos()]]
}

/// Vertices of the polygonal cylinder farthest on either side of the line
/// through the origin along `[cos θ, sin θ]`; on ties the downstream one.
/// These are where the interior layers leave the discrete cylinder.
pub fn hemker_polygon_origins(mesh: &Triangulation, theta: f64) -> Option<[Point; 2]> {
    let (b, n) = ([theta.cos(), theta.sin()], [-theta.sin(), theta.cos()]);
    let on_circle = mesh.boundary_nodes();
    let circle: Vec<Point> = (0..mesh.n_nodes())
        .filter(|&i| on_circle[i] && on_cylinder(mesh.node(i)))
        .map(|i| mesh.node(i))
        .collect();
    let key = |p: &Point, s: f64| (s * (n[0] * p[0] + n[1] * p[1]), b[0] * p[0] + b[1] * p[1]);
    let pick = |s: f64| {
        circle.iter().copied().max_by(|p, q| {
            let (kp, kq) = (key(p, s), key(q, s));
            if (kp.0 - kq.0).abs() <= 1e-12 {
                kp.1.total_cmp(&kq.1)
            } else {
                kp.0.total_cmp(&kq.0)
            }
        })
    };
    Some([pick(1.0)?, pick(-1.0)?])
}

pub fn double_glazing_wind(p: Point) -> Point {
    [p[1] * (1.0 - p[0] * p[0]), -p[0] * (1.0 - p[1] * p[1])]
}

/// Recirculating wind on `(−1, 1)²`, `u = 1` on `x = 1` and 0 elsewhere.
pub fn double_glazing(eps: f64) -> NamedProblem {
    let spec = ProblemSpec::new(eps, [0.0, 0.0], 0.0)
        .with_wind(Wind::Field(Arc::new(double_glazing_wind)))
        .with_source(constant_field(0.0))
        .with_dirichlet(Arc::new(|p| if (p[0] - 1.0).abs() < 1e-12 { 1.0 } else { 0.0 }));
    NamedProblem {
        id: "ex7",
        model: Model::TwoD(spec),
        tags: Some(Arc::new(|_, _| BoundaryTag::Dirichlet)),
        exact: None,
        exact_gradient: None,
        reference: Vec::new(),
    }
}

// ---------------------------------------------------------------------------
// Regression meshes on the unit square for `b = [1, 1]`, all boundary Dirichlet.

/// Interior node `P` whose elements all lie in `B_h`; its upwind element lies
/// along the edge to `Q`.
pub fn regression_interior_node() -> Result<Triangulation, MeshError> {
    let nodes = vec![
        [0.0, 0.0],
        [1.0, 0.0],
        [1.0, 1.0],
        [0.0, 1.0],
        [0.5, 0.0],
        [1.0, 0.5],
        [0.5, 1.0],
        [0.0, 0.5],
        [0.4, 0.4],
        [0.75, 0.75],
    ];
    let (q, p) = (8, 9);
    let elements = vec![
        [0, 4, q],
        [4, 1, 5],
        [4, 5, q],
        [q, 5, p],
        [p, 5, 2],
        [p, 2, 6],
        [q, p, 6],
        [q, 6, 7],
        [7, 6, 3],
        [0, q, 7],
    ];
    Triangulation::from_elements(nodes, elements, BoundaryTag::Dirichlet)
}

/// An element of `Ω̂_h` surrounded by `Ω_h⁺` on its inflow side.
pub fn regression_isolated_element() -> Result<Triangulation, MeshError> {
    let nodes = vec![
        [0.0, 0.0],
        [0.5, 0.0],
        [1.0, 0.0],
        [1.0, 0.4],
        [1.0, 1.0],
        [0.4, 1.0],
        [0.0, 1.0],
        [0.0, 0.5],
        [0.5, 0.5],
        [0.85, 0.6],
        [0.6, 0.85],
        [0.2, 0.7],
        [0.7, 0.2],
    ];
    let elements = vec![
        [8, 9, 10],
        [9, 4, 10],
        [8, 3, 9],
        [9, 3, 4],
        [8, 10, 5],
        [10, 4, 5],
        [8, 5, 11],
        [11, 5, 6],
        [11, 6, 7],
        [8, 11, 7],
        [8, 7, 0],
        [8, 0, 1],
        [8, 1, 12],
        [12, 1, 2],
        [12, 2, 3],
        [8, 12, 3],
    ];
    Triangulation::from_elements(nodes, elements, BoundaryTag::Dirichlet)
}

/// An element of `Ω̂_h` with an edge parallel to `b`, downwind of `Ω_h⁺`.
pub fn regression_parallel_edge() -> Result<Triangulation, MeshError> {
    let nodes = vec![
        [0.0, 0.0],
        [1.0, 0.0],
        [1.0, 1.0],
        [0.0, 1.0],
        [0.5, 0.5],
        [0.8, 0.8],
        [0.85, 0.55],
        [0.55, 0.85],
        [1.0, 0.5],
        [0.5, 1.0],
        [0.2, 0.6],
        [0.5, 0.0],
        [0.0, 0.5],
        [0.25, 0.25],
    ];
    let (a, b, c, d, r, t, e, m1, m2, p) = (4, 5, 6, 7, 8, 9, 10, 11, 12, 13);
    let elements = vec![
        [a, c, b],
        [a, b, d],
        [c, r, b],
        [b, r, 2],
        [b, 2, t],
        [d, b, t],
        [a, d, e],
        [e, d, t],
        [e, t, 3],
        [e, 3, m2],
        [a, e, m2],
        [a, m2, p],
        [a, p, m1],
        [a, m1, 1],
        [a, 1, c],
        [c, 1, r],
        [m2, 0, p],
        [p, 0, m1],
    ];
    Triangulation::from_elements(nodes, elements, BoundaryTag::Dirichlet)
}

/// Mildly irregular grid on the unit square: the `n × n` grid with nodes
/// displaced by up to `h/3`, except the nodes of the elements touching the
/// outflow boundary, which form an undisturbed strip of width `h`.
pub fn mild_random_grid(spec: &ProblemSpec, n: usize, seed: u64) -> Result<Triangulation, ProblemError> {
    let mesh = unit_square(n, Diagonal::SwNe)?;
    let c = classify(&mesh, spec)?;
    let mut pinned = vec![false; mesh.n_nodes()];
    for el in mesh.elements() {
        if el.iter().any(|&v| c.gamma_d0plus_nodes[v]) {
            for &v in el {
                pinned[v] = true;
            }
        }
    }
    Ok(perturb_structured(&mesh.with_pinned(pinned)?, 1.0 / 3.0, seed)?)
}

/// Problem used with the regression meshes: `ε = 0`, `b = [1, 1]`, `c = 0`, `f = 1`.
pub fn regression_spec() -> ProblemSpec {
    ProblemSpec::new(0.0, [1.0, 1.0], 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ex1_source_matches_operator() {
        let s = Ex1Solution { eps: 1e-2 };
        for p in [[0.3, 0.4], [0.95, 0.97], [0.1, 0.99]] {
            let g = s.gradient(p);
            let direct = -s.eps * s.laplacian(p) + 2.0 * g[0] + 3.0 * g[1];
            assert!((direct - s.source(p)).abs() <= 1e-9 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn regression_meshes_build() {
        assert_eq!(regression_interior_node().unwrap().n_elements(), 10);
        assert_eq!(regression_isolated_element().unwrap().n_elements(), 16);
        let m = regression_parallel_edge().unwrap();
        assert_eq!(m.n_elements(), 18);
        assert!((m.total_area() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unknown_id() {
        assert!(catalog("ex9").is_err());
        for id in IDS {
            assert!(catalog(id).is_ok());
        }
    }
}
