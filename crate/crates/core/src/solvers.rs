//! Galerkin, SUPG and SMS solves in 1D and 2D, and the Shishkin-mesh oracles.

use std::fmt;

use thiserror::Error;

use crate::fem::{assemble, assemble_residual, FemError, Form, ProblemSpec, SupgOptions};
use crate::fem1d::{assemble_1d, residual_1d, with_boundary, Problem1D};
use crate::mesh::{shishkin_mesh_with_sigma, tensor_shishkin_2d, uniform_mesh_on, Mesh1D, MeshError, Triangulation};
use crate::sparse_linalg::{self, LinalgError, SaddleSystem, SparseMatrix};
use crate::wind_geometry::OmegaPlusDecomposition;

/// Constraint equations must hold to this relative accuracy.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// `max |z(x_j)|` over `N_δ`, relative to `‖z‖_∞`.
pub const MULTIPLIER_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("{method}: singular system ({reason}); check uniqueness with `diagnose` and refine with `remediate`")]
    RankDeficient {
        method: Method,
        reason: String,
        near_null: Option<Vec<f64>>,
    },
    #[error(transparent)]
    Linalg(LinalgError),
    #[error("{method}: post-solve check failed: {detail}")]
    PostCheck { method: Method, detail: String },
}

impl SolverError {
    fn from_linalg(method: Method, e: LinalgError) -> Self {
        match e {
            LinalgError::RankDeficient { reason, near_null } => SolverError::RankDeficient {
                method,
                reason,
                near_null,
            },
            other => SolverError::Linalg(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Galerkin,
    Supg,
    SmsGalerkin,
    SmsSupg,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Galerkin, Method::Supg, Method::SmsGalerkin, Method::SmsSupg];

    pub fn name(self) -> &'static str {
        match self {
            Method::Galerkin => "galerkin",
            Method::Supg => "supg",
            Method::SmsGalerkin => "sms-galerkin",
            Method::SmsSupg => "sms-supg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn is_sms(self) -> bool {
        matches!(self, Method::SmsGalerkin | Method::SmsSupg)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Nodal values on every node, Dirichlet values included.
#[derive(Debug, Clone)]
pub struct NodalSolution {
    pub values: Vec<f64>,
    pub method: Method,
    pub residual: f64,
    pub size: usize,
}

/// Base discretization of the SMS constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmsBase {
    Galerkin,
    Supg(SupgOptions),
}

impl SmsBase {
    fn form(self) -> Form {
        match self {
            SmsBase::Galerkin => Form::Galerkin,
            SmsBase::Supg(o) => Form::Supg(o),
        }
    }

    fn method(self) -> Method {
        match self {
            SmsBase::Galerkin => Method::SmsGalerkin,
            SmsBase::Supg(_) => Method::SmsSupg,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmsSolution {
    /// `ũ_h` on all nodes.
    pub u_tilde: Vec<f64>,
    /// Multiplier on the free nodes, in the original sign.
    pub z: Vec<f64>,
    /// Constraint values, one per `N_δ` node (in 1D the single value `α`).
    pub t: Vec<f64>,
    pub method: Method,
    pub residual: f64,
    pub size: usize,
    /// Relative residual of `A ũ + E t = F`.
    pub feasibility: f64,
}

fn norm_max(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn solve_square(method: Method, a: &SparseMatrix, load: &[f64]) -> Result<(Vec<f64>, f64), SolverError> {
    let x = sparse_linalg::solve(a, load).map_err(|e| SolverError::from_linalg(method, e))?;
    let res = sparse_linalg::relative_residual(a, &x, load);
    Ok((x, res))
}

/// Galerkin solution on a triangulation.
pub fn solve_galerkin(mesh: &Triangulation, spec: &ProblemSpec) -> Result<NodalSolution, SolverError> {
    solve_form(mesh, spec, Form::Galerkin, Method::Galerkin)
}

/// SUPG solution; requires `ε > 0`.
pub fn solve_supg(mesh: &Triangulation, spec: &ProblemSpec, options: SupgOptions) -> Result<NodalSolution, SolverError> {
    solve_form(mesh, spec, Form::Supg(options), Method::Supg)
}

fn solve_form(mesh: &Triangulation, spec: &ProblemSpec, form: Form, method: Method) -> Result<NodalSolution, SolverError> {
    let (dofs, lift, a, load) = assemble(mesh, spec, form)?;
    let (x, residual) = solve_square(method, &a, &load)?;
    Ok(NodalSolution {
        values: dofs.expand(&x, &lift),
        method,
        residual,
        size: dofs.n_free(),
    })
}

/// Relative residual of the constraint `A u + E t = F`.
fn feasibility(a: &SparseMatrix, e: &SparseMatrix, u: &[f64], t: &[f64], load: &[f64]) -> f64 {
    let au = a.mul_vec(u);
    let et = e.mul_vec(t);
    let r = au.iter().zip(&et).zip(load).map(|((x, y), f)| (x + y - f).abs()).fold(0.0, f64::max);
    let scale = (a.norm_inf() * norm_max(u)).max(norm_max(load)).max(e.norm_inf() * norm_max(t));
    if scale == 0.0 {
        r
    } else {
        r / scale
    }
}

/// Solves the saddle system and verifies feasibility and the multiplier
/// condition on `N_δ`.
fn solve_saddle(method: Method, system: SaddleSystem) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, f64, f64), SolverError> {
    let sol = sparse_linalg::solve_symmetric_indefinite(&system).map_err(|e| SolverError::from_linalg(method, e))?;
    let feas = feasibility(&system.a, &system.e, &sol.u, &sol.t, &system.rhs_a);
    if !(feas <= FEASIBILITY_TOL) {
        return Err(SolverError::PostCheck {
            method,
            detail: format!("constraint residual {feas:e}"),
        });
    }
    let zn = norm_max(&sol.z);
    let et_z = system.e.mul_transpose_vec(&sol.z);
    let zd = norm_max(&et_z);
    if zd > MULTIPLIER_TOL * zn {
        return Err(SolverError::PostCheck {
            method,
            detail: format!("multiplier {zd:e} on N_delta (norm {zn:e})"),
        });
    }
    Ok((sol.u, sol.t, sol.z, sol.residual, feas))
}

/// SMS solution: least squares of the convective residual over `Ω̂_h`
/// subject to the discrete equations relaxed at `N_δ`.
pub fn solve_sms(
    mesh: &Triangulation,
    spec: &ProblemSpec,
    decomposition: &OmegaPlusDecomposition,
    base: SmsBase,
) -> Result<SmsSolution, SolverError> {
    let method = base.method();
    let (dofs, lift, a, load) = assemble(mesh, spec, base.form())?;
    let res = assemble_residual(mesh, spec, decomposition, &dofs, &lift)?;
    let system = SaddleSystem::new(res.s, a, res.e, res.rhs, load).map_err(SolverError::Linalg)?;
    let size = system.size();
    let (u, t, z, residual, feasibility) = solve_saddle(method, system)?;
    Ok(SmsSolution {
        u_tilde: dofs.expand(&u, &lift),
        z,
        t,
        method,
        residual,
        size,
        feasibility,
    })
}

/// The symmetrized saddle matrix of the SMS system, for spectral diagnostics.
pub fn sms_matrix(
    mesh: &Triangulation,
    spec: &ProblemSpec,
    decomposition: &OmegaPlusDecomposition,
    base: SmsBase,
) -> Result<SparseMatrix, SolverError> {
    let (dofs, lift, a, load) = assemble(mesh, spec, base.form())?;
    let res = assemble_residual(mesh, spec, decomposition, &dofs, &lift)?;
    let system = SaddleSystem::new(res.s, a, res.e, res.rhs, load).map_err(SolverError::Linalg)?;
    Ok(system.symmetrize().matrix())
}

// ---------------------------------------------------------------------------
// 1D

/// Galerkin nodal values `u_0..u_J` for a 1D problem.
pub fn solve_galerkin_1d(mesh: &Mesh1D, p: &Problem1D) -> Result<Vec<f64>, SolverError> {
    let (a, load) = assemble_1d(mesh, p);
    let (x, _) = solve_square(Method::Galerkin, &a, &load)?;
    Ok(with_boundary(&x))
}

/// 1D SMS with `Ω̂_h = (0, x_{J−1})` and `N_δ = {x_{J−1}}`.
pub fn solve_sms_1d(mesh: &Mesh1D, p: &Problem1D) -> Result<SmsSolution, SolverError> {
    let jn = mesh.cells();
    let (a, load) = assemble_1d(mesh, p);
    let (s, rhs) = residual_1d(mesh, p, jn - 1);
    let e = SparseMatrix::from_triplets(jn - 1, 1, &[(jn - 2, 0, 1.0)]).map_err(SolverError::Linalg)?;
    let system = SaddleSystem::new(s, a, e, rhs, load).map_err(SolverError::Linalg)?;
    let size = system.size();
    let (u, t, z, residual, feasibility) = solve_saddle(Method::SmsGalerkin, system)?;
    Ok(SmsSolution {
        u_tilde: with_boundary(&u),
        z,
        t,
        method: Method::SmsGalerkin,
        residual,
        size,
        feasibility,
    })
}

/// Galerkin solution on the Shishkin mesh with `2N` cells and its coarse part.
#[derive(Debug, Clone)]
pub struct ShishkinOracle1D {
    pub mesh: Mesh1D,
    /// Nodal values on all `2N + 1` nodes.
    pub u: Vec<f64>,
    /// `U_c` at the coarse nodes `x_0..x_N`; its value at `x_N = 1−σ` is 0.
    pub coarse: Vec<f64>,
    /// `α* = u_N a(φ_N, φ_{N−1})`.
    pub alpha_star: f64,
}

pub fn solve_shishkin_oracle_1d(p: &Problem1D, n: usize, sigma: f64) -> Result<ShishkinOracle1D, SolverError> {
    let mesh = shishkin_mesh_with_sigma(n, sigma)?;
    let (a, load) = assemble_1d(&mesh, p);
    let (x, _) = solve_square(Method::Galerkin, &a, &load)?;
    let u = with_boundary(&x);
    let mut coarse: Vec<f64> = u[..n].to_vec();
    coarse.push(0.0);
    // Row N−1 (test φ_{N−1}), column N (trial φ_N) in free numbering.
    let alpha_star = u[n] * a.get(n - 2, n - 1);
    Ok(ShishkinOracle1D { mesh, u, coarse, alpha_star })
}

/// Uniform mesh with `n` cells on the coarse interval `[0, 1−σ]`.
pub fn coarse_mesh_1d(n: usize, sigma: f64) -> Result<Mesh1D, SolverError> {
    Ok(uniform_mesh_on(n, 0.0, 1.0 - sigma)?)
}

/// SUPG on a tensor Shishkin mesh of the unit square with `2N` cells per direction.
#[derive(Debug, Clone)]
pub struct ShishkinOracle2D {
    pub mesh: Triangulation,
    pub solution: NodalSolution,
    /// Node indices with `x ≤ 1−σ_x`, `y ≤ 1−σ_y` (the coarse part).
    pub coarse_nodes: Vec<usize>,
}

pub fn solve_shishkin_oracle_2d(
    spec: &ProblemSpec,
    n: usize,
    sigma_x: f64,
    sigma_y: f64,
    options: SupgOptions,
) -> Result<ShishkinOracle2D, SolverError> {
    let mesh = tensor_shishkin_2d(n, n, sigma_x, sigma_y)?;
    let solution = solve_supg(&mesh, spec, options)?;
    let stride = 2 * n + 1;
    let coarse_nodes = (0..=n).flat_map(|j| (0..=n).map(move |i| j * stride + i)).collect();
    Ok(ShishkinOracle2D { mesh, solution, coarse_nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::constant_field;
    use crate::mesh::{unit_square, uniform_mesh_1d, BoundaryTag, Diagonal};
    use crate::wind_geometry::{build_omega_plus, classify_boundary};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    #[test]
    fn zero_data_gives_zero() {
        let mesh = unit_square(4, Diagonal::SwNe).unwrap();
        let spec = ProblemSpec::new(1e-3, [1.0, 2.0], 0.0);
        let g = solve_galerkin(&mesh, &spec).unwrap();
        assert!(g.values.iter().all(|v| *v == 0.0));
        let s = solve_supg(&mesh, &spec, SupgOptions::default()).unwrap();
        assert!(s.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn supg_rejects_zero_eps() {
        let mesh = unit_square(2, Diagonal::SwNe).unwrap();
        let spec = ProblemSpec::new(0.0, [1.0, 0.0], 1.0);
        assert!(matches!(
            solve_supg(&mesh, &spec, SupgOptions::default()),
            Err(SolverError::Fem(FemError::Invalid(_)))
        ));
    }

    #[test]
    fn sms_reproduces_linear_solution() {
        let mesh = unit_square(5, Diagonal::NwSe).unwrap();
        let b = [1.0, 0.5];
        let u = |p: [f64; 2]| 0.3 + p[0] - 0.7 * p[1];
        let spec = ProblemSpec::new(0.0, b, 1.0 - 0.35).with_dirichlet(Arc::new(u));
        let c = classify_boundary(&mesh, &spec.wind).unwrap();
        let d = build_omega_plus(&mesh, &c, &spec.wind).unwrap();
        let sol = solve_sms(&mesh, &spec, &d, SmsBase::Galerkin).unwrap();
        for (i, p) in mesh.nodes().iter().enumerate() {
            assert_abs_diff_eq!(sol.u_tilde[i], u(*p), epsilon = 1e-10);
        }
        assert!(norm_max(&sol.t) < 1e-10);
        assert!(norm_max(&sol.z) < 1e-10);
    }

    #[test]
    fn galerkin_1d_even_cells_singular() {
        let mesh = uniform_mesh_1d(8).unwrap();
        let p = Problem1D::constant_source(0.0, 1.0, 1.0);
        assert!(matches!(solve_galerkin_1d(&mesh, &p), Err(SolverError::RankDeficient { .. })));
    }

    #[test]
    fn galerkin_1d_odd_cells_telescopes() {
        let mesh = uniform_mesh_1d(9).unwrap();
        let p = Problem1D::constant_source(0.0, 1.0, 1.0);
        let u = solve_galerkin_1d(&mesh, &p).unwrap();
        let h = 1.0 / 9.0;
        // u_{2j} = 2 Σ f_{2i−1} = 2 j h, u_{2j−1} = −2 Σ_{i≥j} f_{2i}.
        for j in 1..=4 {
            assert_abs_diff_eq!(u[2 * j], 2.0 * j as f64 * h, epsilon = 1e-12);
            assert_abs_diff_eq!(u[2 * j - 1], -2.0 * (5 - j) as f64 * h, epsilon = 1e-12);
        }
    }

    #[test]
    fn shishkin_oracle_zero_source() {
        let p = Problem1D::constant_source(1e-8, 1.0, 0.0);
        let o = solve_shishkin_oracle_1d(&p, 9, 4e-8 * 18f64.ln()).unwrap();
        assert_eq!(o.alpha_star, 0.0);
        assert_eq!(o.coarse.len(), 10);
    }

    #[test]
    fn sms_neumann_strip_feasible() {
        let mut mesh = unit_square(6, Diagonal::SwNe).unwrap();
        mesh.set_boundary_tags(|m, _| if m[1] == 0.0 || m[1] == 1.0 { BoundaryTag::Neumann } else { BoundaryTag::Dirichlet });
        let spec = ProblemSpec::new(1e-6, [1.0, 0.0], 1.0).with_dirichlet(constant_field(0.0));
        let c = classify_boundary(&mesh, &spec.wind).unwrap();
        let d = build_omega_plus(&mesh, &c, &spec.wind).unwrap();
        let sol = solve_sms(&mesh, &spec, &d, SmsBase::Galerkin).unwrap();
        assert!(sol.feasibility <= FEASIBILITY_TOL);
        assert_eq!(sol.t.len(), d.n_delta.len());
    }
}
