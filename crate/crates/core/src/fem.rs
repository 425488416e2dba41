//! P1 assembly of the Galerkin and SUPG forms, the residual Gram matrix,
//! the constraint selector and the Dirichlet lifting.
//!
//! Matrices are indexed `A[i][j] = a(φ_j, φ_i)`: row `i` is the test
//! function, so `A u = F` is the discrete equation.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::mesh::{dist, dot, BoundaryTag, Point, Triangulation};
use crate::sparse_linalg::{LinalgError, SparseMatrix};
use crate::wind_geometry::OmegaPlusDecomposition;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> Point + Send + Sync>;

/// Wind field `b`.
#[derive(Clone)]
pub enum Wind {
    Constant(Point),
    Field(VectorField),
}

impl Wind {
    pub fn at(&self, p: Point) -> Point {
        match self {
            Wind::Constant(b) => *b,
            Wind::Field(f) => f(p),
        }
    }

    pub fn constant(&self) -> Option<Point> {
        match self {
            Wind::Constant(b) => Some(*b),
            Wind::Field(_) => None,
        }
    }
}

impl fmt::Debug for Wind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Wind::Constant(b) => write!(f, "Constant({b:?})"),
            Wind::Field(_) => write!(f, "Field(..)"),
        }
    }
}

pub fn constant_field(v: f64) -> ScalarField {
    Arc::new(move |_| v)
}

/// Data of `−εΔu + b·∇u + cu = f`, `u = g₁` on Dirichlet edges and
/// `ε∇u·n = εg₂` on Neumann edges. The Dirichlet/Neumann partition is
/// carried by the mesh tags.
#[derive(Clone)]
pub struct ProblemSpec {
    pub eps: f64,
    pub wind: Wind,
    pub c: ScalarField,
    pub f: ScalarField,
    pub g1: ScalarField,
    pub g2: ScalarField,
    /// Points where `g₁` jumps; a Dirichlet node there takes the mean of the
    /// one-sided limits along the boundary.
    pub dirichlet_jumps: Vec<Point>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("eps", &self.eps)
            .field("wind", &self.wind)
            .field("dirichlet_jumps", &self.dirichlet_jumps)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Constant wind, `c = 0`, homogeneous boundary data.
    pub fn new(eps: f64, b: Point, f: f64) -> Self {
        Self {
            eps,
            wind: Wind::Constant(b),
            c: constant_field(0.0),
            f: constant_field(f),
            g1: constant_field(0.0),
            g2: constant_field(0.0),
            dirichlet_jumps: Vec::new(),
        }
    }

    pub fn with_source(mut self, f: ScalarField) -> Self {
        self.f = f;
        self
    }

    pub fn with_dirichlet(mut self, g1: ScalarField) -> Self {
        self.g1 = g1;
        self
    }

    pub fn with_wind(mut self, wind: Wind) -> Self {
        self.wind = wind;
        self
    }

    pub fn with_reaction(mut self, c: ScalarField) -> Self {
        self.c = c;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn validate(&self) -> Result<(), FemError> {
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(FemError::Invalid(format!("eps must be finite and nonnegative, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Maps between global node indices and free (non-Dirichlet) unknowns.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub free: Vec<usize>,
    pub index: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(mesh: &Triangulation) -> Self {
        let dir = mesh.dirichlet_nodes();
        let mut free = Vec::new();
        let mut index = vec![None; mesh.n_nodes()];
        for i in 0..mesh.n_nodes() {
            if !dir[i] {
                index[i] = Some(free.len());
                free.push(i);
            }
        }
        Self { free, index }
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Full nodal vector from free values and the lifting.
    pub fn expand(&self, free_values: &[f64], lift: &[f64]) -> Vec<f64> {
        let mut u = lift.to_vec();
        for (k, &g) in self.free.iter().enumerate() {
            u[g] = free_values[k];
        }
        u
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&g| full[g]).collect()
    }
}

/// Nodal interpolant of `g₁` at Dirichlet nodes, zero elsewhere.
///
/// Nodes on layer edges that are not on a Dirichlet boundary edge take the
/// layer value. At declared jump points the lift is the mean of `g₁`
/// evaluated just inside each incident Dirichlet boundary edge.
pub fn dirichlet_lift(mesh: &Triangulation, spec: &ProblemSpec) -> Vec<f64> {
    let n = mesh.n_nodes();
    let mut lift = vec![0.0; n];
    let mut on_dirichlet_edge = vec![false; n];
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for be in mesh.boundary().iter().filter(|b| b.tag == BoundaryTag::Dirichlet) {
        let [a, b] = be.nodes;
        on_dirichlet_edge[a] = true;
        on_dirichlet_edge[b] = true;
        incident[a].push(b);
        incident[b].push(a);
    }
    for le in mesh.layer_edges() {
        for &v in &le.nodes {
            if !on_dirichlet_edge[v] {
                lift[v] = le.value;
            }
        }
    }
    for i in 0..n {
        if !on_dirichlet_edge[i] {
            continue;
        }
        let p = mesh.node(i);
        let h = incident[i]
            .iter()
            .map(|&q| dist(p, mesh.node(q)))
            .fold(f64::INFINITY, f64::min);
        let at_jump = spec
            .dirichlet_jumps
            .iter()
            .any(|&j| dist(j, p) <= 1e-10 * h.max(1e-300));
        lift[i] = if at_jump && !incident[i].is_empty() {
            let limits: Vec<f64> = incident[i]
                .iter()
                .map(|&q| {
                    let d = mesh.node(q);
                    let s = 1e-9;
                    (spec.g1)([p[0] + s * (d[0] - p[0]), p[1] + s * (d[1] - p[1])])
                })
                .collect();
            limits.iter().sum::<f64>() / limits.len() as f64
        } else {
            (spec.g1)(p)
        };
    }
    lift
}

/// Per-element SUPG data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupgElement {
    pub delta: f64,
    pub peclet: f64,
    pub diam: f64,
}

/// SUPG options: optional crosswind weight `δ_c` on `∂_x φ` and a multiplier
/// applied to every `δ_τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupgOptions {
    pub crosswind: f64,
    pub multiplier: f64,
}

impl Default for SupgOptions {
    fn default() -> Self {
        Self { crosswind: 0.0, multiplier: 1.0 }
    }
}

impl SupgOptions {
    /// Tuned values for the comparison on uniform grids with N ∈ {10, 20, 40}.
    pub fn tuned_crosswind(n: usize) -> Option<Self> {
        match n {
            10 => Some(Self { crosswind: 0.7701, multiplier: 1.57 }),
            20 => Some(Self { crosswind: 0.8783, multiplier: 1.615 }),
            40 => Some(Self { crosswind: 0.9365, multiplier: 1.64 }),
            _ => None,
        }
    }
}

/// Streamline diffusion parameter for one element, `b` taken at the barycenter.
pub fn supg_element(mesh: &Triangulation, e: usize, spec: &ProblemSpec) -> SupgElement {
    let b = spec.wind.at(mesh.barycenter(e));
    let bn = b[0].hypot(b[1]);
    let g = mesh.basis_gradients(e);
    let sum: f64 = g.iter().map(|gk| dot(b, *gk).abs()).sum();
    if bn == 0.0 || sum == 0.0 {
        return SupgElement { delta: 0.0, peclet: 0.0, diam: 0.0 };
    }
    let diam = 2.0 * bn / sum;
    let peclet = bn * diam / (2.0 * spec.eps);
    let delta = if peclet > 1.0 {
        diam / (2.0 * bn)
    } else {
        diam * diam / (4.0 * spec.eps)
    };
    SupgElement { delta, peclet, diam }
}

/// Mid-edge quadrature points of an element and the barycentric values
/// of the basis there (weights are `|τ|/3`).
fn midedge_rule(v: &[Point; 3]) -> [(Point, [f64; 3]); 3] {
    let m = |a: Point, b: Point| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    [
        (m(v[0], v[1]), [0.5, 0.5, 0.0]),
        (m(v[1], v[2]), [0.0, 0.5, 0.5]),
        (m(v[2], v[0]), [0.5, 0.0, 0.5]),
    ]
}

/// What to assemble into the square operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Form {
    Galerkin,
    Supg(SupgOptions),
}

/// Discrete operators over the free nodes.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    pub dofs: DofMap,
    pub lift: Vec<f64>,
    /// Galerkin `A` or SUPG `A_h`.
    pub a: SparseMatrix,
    /// `F − A_{f,D} u^D`, Neumann term included.
    pub load: Vec<f64>,
    /// Present when assembled against a decomposition.
    pub residual: Option<ResidualOperators>,
}

/// Residual least-squares blocks over `Ω̂_h`.
#[derive(Debug, Clone)]
pub struct ResidualOperators {
    pub s: SparseMatrix,
    pub e: SparseMatrix,
    /// `(L φ_i, f − L u^D)_{Ω̂_h}` over free nodes.
    pub rhs: Vec<f64>,
    /// `N_δ` indices into the free unknowns, ascending by global index.
    pub n_delta_free: Vec<usize>,
}

/// Assembles the square operator and load with Dirichlet lifting.
pub fn assemble(
    mesh: &Triangulation,
    spec: &ProblemSpec,
    form: Form,
) -> Result<(DofMap, Vec<f64>, SparseMatrix, Vec<f64>), FemError> {
    spec.validate()?;
    if matches!(form, Form::Supg(_)) && spec.eps == 0.0 {
        return Err(FemError::Invalid("SUPG needs eps > 0; use the Galerkin form for eps = 0".into()));
    }
    let dofs = DofMap::new(mesh);
    let lift = dirichlet_lift(mesh, spec);
    let mut trip = Vec::with_capacity(9 * mesh.n_elements());
    let mut load = vec![0.0; dofs.n_free()];
    for e in 0..mesh.n_elements() {
        let el = mesh.elements()[e];
        let v = mesh.vertices(e);
        let g = mesh.basis_gradients(e);
        let area = mesh.area(e);
        let w = area / 3.0;
        let mut k = [[0.0; 3]; 3];
        let mut fl = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                k[i][j] += spec.eps * area * dot(g[i], g[j]);
            }
        }
        let supg = match form {
            Form::Supg(opt) => {
                let p = supg_element(mesh, e, spec);
                Some((p.delta * opt.multiplier, opt.crosswind))
            }
            Form::Galerkin => None,
        };
        for (x, phi) in midedge_rule(&v) {
            let b = spec.wind.at(x);
            let c = (spec.c)(x);
            let f = (spec.f)(x);
            let lj: [f64; 3] = std::array::from_fn(|j| dot(b, g[j]) + c * phi[j]);
            for i in 0..3 {
                let mut test = phi[i];
                if let Some((delta, dc)) = supg {
                    test += delta * (dot(b, g[i]) + dc * g[i][0]);
                }
                fl[i] += w * f * test;
                for j in 0..3 {
                    k[i][j] += w * lj[j] * test;
                }
            }
        }
        for i in 0..3 {
            let Some(fi) = dofs.index[el[i]] else { continue };
            load[fi] += fl[i];
            for j in 0..3 {
                match dofs.index[el[j]] {
                    Some(fj) => trip.push((fi, fj, k[i][j])),
                    None => load[fi] -= k[i][j] * lift[el[j]],
                }
            }
        }
    }
    // Neumann data, two-point Gauss rule per edge.
    if spec.eps > 0.0 {
        let gp = 0.5 / 3f64.sqrt();
        for be in mesh.boundary().iter().filter(|b| b.tag == BoundaryTag::Neumann) {
            let [a, b] = be.nodes;
            let (pa, pb) = (mesh.node(a), mesh.node(b));
            let len = dist(pa, pb);
            for s in [0.5 - gp, 0.5 + gp] {
                let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                let gv = spec.eps * (spec.g2)(x) * 0.5 * len;
                if let Some(fa) = dofs.index[a] {
                    load[fa] += gv * (1.0 - s);
                }
                if let Some(fb) = dofs.index[b] {
                    load[fb] += gv * s;
                }
            }
        }
    }
    let n = dofs.n_free();
    let a = SparseMatrix::from_triplets(n, n, &trip)?;
    Ok((dofs, lift, a, load))
}

/// Galerkin operators; with a decomposition the residual blocks are added.
pub fn assemble_galerkin(
    mesh: &Triangulation,
    spec: &ProblemSpec,
    decomposition: Option<&OmegaPlusDecomposition>,
) -> Result<DiscreteOperators, FemError> {
    assemble_operators(mesh, spec, Form::Galerkin, decomposition)
}

pub fn assemble_supg(
    mesh: &Triangulation,
    spec: &ProblemSpec,
    options: SupgOptions,
    decomposition: Option<&OmegaPlusDecomposition>,
) -> Result<DiscreteOperators, FemError> {
    assemble_operators(mesh, spec, Form::Supg(options), decomposition)
}

pub fn assemble_operators(
    mesh: &Triangulation,
    spec: &ProblemSpec,
    form: Form,
    decomposition: Option<&OmegaPlusDecomposition>,
) -> Result<DiscreteOperators, FemError> {
    let (dofs, lift, a, load) = assemble(mesh, spec, form)?;
    let residual = match decomposition {
        Some(d) => Some(assemble_residual(mesh, spec, d, &dofs, &lift)?),
        None => None,
    };
    Ok(DiscreteOperators { dofs, lift, a, load, residual })
}

/// `S`, `E` and the residual load over the elements of `Ω̂_h`.
pub fn assemble_residual(
    mesh: &Triangulation,
    spec: &ProblemSpec,
    decomposition: &OmegaPlusDecomposition,
    dofs: &DofMap,
    lift: &[f64],
) -> Result<ResidualOperators, FemError> {
    let n = dofs.n_free();
    let mut trip = Vec::new();
    let mut rhs = vec![0.0; n];
    for &e in &decomposition.omega_hat {
        let el = mesh.elements()[e];
        let v = mesh.vertices(e);
        let g = mesh.basis_gradients(e);
        let w = mesh.area(e) / 3.0;
        let mut s = [[0.0; 3]; 3];
        let mut r = [0.0; 3];
        for (x, phi) in midedge_rule(&v) {
            let b = spec.wind.at(x);
            let c = (spec.c)(x);
            let l: [f64; 3] = std::array::from_fn(|k| dot(b, g[k]) + c * phi[k]);
            let lu_d: f64 = (0..3).map(|k| l[k] * lift[el[k]]).sum();
            let res = (spec.f)(x) - lu_d;
            for i in 0..3 {
                r[i] += w * l[i] * res;
                for j in 0..3 {
                    s[i][j] += w * l[i] * l[j];
                }
            }
        }
        for i in 0..3 {
            let Some(fi) = dofs.index[el[i]] else { continue };
            rhs[fi] += r[i];
            for j in 0..3 {
                if let Some(fj) = dofs.index[el[j]] {
                    trip.push((fi, fj, s[i][j]));
                }
            }
        }
    }
    let s = SparseMatrix::from_triplets(n, n, &trip)?;
    let mut n_delta_free = Vec::with_capacity(decomposition.n_delta.len());
    for &g in &decomposition.n_delta {
        match dofs.index[g] {
            Some(k) => n_delta_free.push(k),
            None => {
                return Err(FemError::Invalid(format!("N_delta node {g} is a Dirichlet node")));
            }
        }
    }
    let et: Vec<_> = n_delta_free.iter().enumerate().map(|(c, &r)| (r, c, 1.0)).collect();
    let e = SparseMatrix::from_triplets(n, n_delta_free.len(), &et)?;
    Ok(ResidualOperators { s, e, rhs, n_delta_free })
}

/// `B[i][j] = (b·∇φ_j, φ_i)` over all nodes, used to check `a = (L·, ·)` at `ε = 0`.
pub fn convection_matrix(mesh: &Triangulation, b: Point) -> SparseMatrix {
    let n = mesh.n_nodes();
    let mut trip = Vec::new();
    for e in 0..mesh.n_elements() {
        let el = mesh.elements()[e];
        let g = mesh.basis_gradients(e);
        let area = mesh.area(e);
        for i in 0..3 {
            for j in 0..3 {
                // ∫ φ_i = |τ|/3 and ∇φ_j is constant.
                trip.push((el[i], el[j], area / 3.0 * dot(b, g[j])));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, &trip).expect("indices in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{unit_square, BoundaryEdge, Diagonal};
    use crate::wind_geometry::OmegaPlusDecomposition;
    use approx::assert_abs_diff_eq;

    fn single_triangle() -> Triangulation {
        Triangulation::new(
            vec![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![
                BoundaryEdge { nodes: [0, 1], tag: BoundaryTag::Neumann },
                BoundaryEdge { nodes: [1, 2], tag: BoundaryTag::Neumann },
                BoundaryEdge { nodes: [2, 0], tag: BoundaryTag::Neumann },
            ],
        )
        .unwrap()
    }

    #[test]
    fn gram_matrix_on_one_triangle() {
        let mesh = single_triangle();
        let spec = ProblemSpec::new(0.0, [1.0, 0.0], 0.0);
        let d = OmegaPlusDecomposition::from_plus(&mesh, vec![]);
        let ops = assemble_galerkin(&mesh, &spec, Some(&d)).unwrap();
        let s = &ops.residual.as_ref().unwrap().s;
        let g = mesh.basis_gradients(0);
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(s.get(i, j), mesh.area(0) * g[i][0] * g[j][0], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn linear_interpolant_has_zero_residual() {
        let mut mesh = unit_square(4, Diagonal::SwNe).unwrap();
        mesh.set_boundary_tags(|_, _| BoundaryTag::Dirichlet);
        let b = [2.0, 3.0];
        let u = |p: Point| 1.0 + 0.5 * p[0] - 2.0 * p[1];
        let spec = ProblemSpec::new(0.0, b, 2.0 * 0.5 - 3.0 * 2.0).with_dirichlet(Arc::new(u));
        let (dofs, _, a, load) = assemble(&mesh, &spec, Form::Galerkin).unwrap();
        let x: Vec<f64> = dofs.free.iter().map(|&g| u(mesh.node(g))).collect();
        let ax = a.mul_vec(&x);
        for (l, r) in ax.iter().zip(&load) {
            assert_abs_diff_eq!(l, r, epsilon = 1e-13);
        }
    }

    #[test]
    fn supg_branches_agree_at_unit_peclet() {
        let mesh = single_triangle();
        let spec = ProblemSpec::new(1.0, [1.0, 0.0], 0.0);
        let p = supg_element(&mesh, 0, &spec);
        let eps = 1.0 * p.diam / 2.0;
        let at = supg_element(&mesh, 0, &spec.clone().with_eps(eps));
        assert_abs_diff_eq!(at.peclet, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(at.delta, at.diam / 2.0, epsilon = 1e-14);
        let above = supg_element(&mesh, 0, &spec.clone().with_eps(eps * 0.5));
        assert_abs_diff_eq!(above.delta, above.diam / 2.0, epsilon = 1e-14);
        let below = supg_element(&mesh, 0, &spec.with_eps(eps * 2.0));
        assert_abs_diff_eq!(below.delta, below.diam * below.diam / (8.0 * eps), epsilon = 1e-14);
    }

    #[test]
    fn supg_diameter_on_grid_cell() {
        let mesh = unit_square(4, Diagonal::SwNe).unwrap();
        let spec = ProblemSpec::new(1e-8, [1.0, 0.0], 1.0);
        let p = supg_element(&mesh, 0, &spec);
        assert_abs_diff_eq!(p.diam, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p.delta, 0.125, epsilon = 1e-15);
    }

    #[test]
    fn supg_rejects_zero_eps() {
        let mesh = unit_square(2, Diagonal::SwNe).unwrap();
        let spec = ProblemSpec::new(0.0, [1.0, 0.0], 1.0);
        assert!(assemble(&mesh, &spec, Form::Supg(SupgOptions::default())).is_err());
    }

    #[test]
    fn zero_eps_form_is_convection() {
        let mut mesh = unit_square(3, Diagonal::NwSe).unwrap();
        mesh.set_boundary_tags(|_, _| BoundaryTag::Neumann);
        let b = [1.0, 0.4];
        let spec = ProblemSpec::new(0.0, b, 0.0);
        let (_, _, a, _) = assemble(&mesh, &spec, Form::Galerkin).unwrap();
        let c = convection_matrix(&mesh, b);
        for i in 0..mesh.n_nodes() {
            for j in 0..mesh.n_nodes() {
                assert_abs_diff_eq!(a.get(i, j), c.get(i, j), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn jump_point_takes_mean() {
        let mesh = unit_square(10, Diagonal::SwNe).unwrap();
        let g: ScalarField = Arc::new(|p: Point| if p[0] == 1.0 || p[1] <= 0.7 { 0.0 } else { 1.0 });
        let mut spec = ProblemSpec::new(1e-8, [0.5, -0.8], 0.0).with_dirichlet(g);
        spec.dirichlet_jumps.push([0.0, 0.7]);
        let lift = dirichlet_lift(&mesh, &spec);
        let k = mesh
            .nodes()
            .iter()
            .position(|p| p[0] == 0.0 && (p[1] - 0.7).abs() < 1e-12)
            .unwrap();
        assert_abs_diff_eq!(lift[k], 0.5, epsilon = 1e-15);
    }
}
