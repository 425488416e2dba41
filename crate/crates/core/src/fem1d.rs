//! P1 elements on a 1D partition for `−εu'' + bu' + cu = f`, `u(x₀) = u(x_J) = 0`,
//! with constant `b` and `c`.
//!
//! Unknown `k` is node `k + 1`; matrices follow `A[i][j] = a(φ_j, φ_i)`.

use std::fmt;
use std::sync::Arc;

use crate::mesh::Mesh1D;
use crate::sparse_linalg::SparseMatrix;

pub type Source1D = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Problem1D {
    pub eps: f64,
    pub b: f64,
    pub c: f64,
    pub f: Source1D,
}

impl fmt::Debug for Problem1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem1D")
            .field("eps", &self.eps)
            .field("b", &self.b)
            .field("c", &self.c)
            .finish_non_exhaustive()
    }
}

impl Problem1D {
    pub fn new(eps: f64, b: f64, c: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { eps, b, c, f: Arc::new(f) }
    }

    pub fn constant_source(eps: f64, b: f64, f: f64) -> Self {
        Self::new(eps, b, 0.0, move |_| f)
    }

    pub fn with_source(&self, f: Source1D) -> Self {
        Self { f, ..self.clone() }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..self.clone() }
    }
}

const GAUSS5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// `∫_{x_{j−1}}^{x_j} g(x) dx` by five-point Gauss.
pub fn integrate_cell(mesh: &Mesh1D, j: usize, g: impl Fn(f64) -> f64) -> f64 {
    let (a, b) = (mesh.nodes()[j - 1], mesh.nodes()[j]);
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    GAUSS5.iter().map(|&(s, w)| w * r * g(m + r * s)).sum()
}

/// Hat-function moments `f_j = ∫ f φ_j`, `j = 1..J−1` (index 0 holds `f_1`).
pub fn moments(mesh: &Mesh1D, f: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let x = mesh.nodes();
    let jn = mesh.cells();
    (1..jn)
        .map(|j| {
            let left = integrate_cell(mesh, j, |t| f(t) * (t - x[j - 1]) / (x[j] - x[j - 1]));
            let right = integrate_cell(mesh, j + 1, |t| f(t) * (x[j + 1] - t) / (x[j + 1] - x[j]));
            left + right
        })
        .collect()
}

/// Local element matrix of `a` on a cell of width `h`.
fn local_a(p: &Problem1D, h: f64) -> [[f64; 2]; 2] {
    let (e, b, c) = (p.eps, p.b, p.c);
    [
        [e / h - b / 2.0 + c * h / 3.0, -e / h + b / 2.0 + c * h / 6.0],
        [-e / h - b / 2.0 + c * h / 6.0, e / h + b / 2.0 + c * h / 3.0],
    ]
}

/// Scatters a local 2×2 matrix of cell `j` into free-unknown triplets.
fn scatter(trip: &mut Vec<(usize, usize, f64)>, jn: usize, j: usize, k: [[f64; 2]; 2]) {
    let nodes = [j - 1, j];
    for a in 0..2 {
        for b in 0..2 {
            let (ni, nj) = (nodes[a], nodes[b]);
            if ni >= 1 && ni < jn && nj >= 1 && nj < jn {
                trip.push((ni - 1, nj - 1, k[a][b]));
            }
        }
    }
}

/// The Galerkin matrix and load `(f, φ_i)` over the interior nodes.
pub fn assemble_1d(mesh: &Mesh1D, p: &Problem1D) -> (SparseMatrix, Vec<f64>) {
    let jn = mesh.cells();
    let mut trip = Vec::new();
    for j in 1..=jn {
        scatter(&mut trip, jn, j, local_a(p, mesh.width(j)));
    }
    let a = SparseMatrix::from_triplets(jn - 1, jn - 1, &trip).expect("indices in range");
    (a, moments(mesh, &*p.f))
}

/// Gram matrix `(Lφ_j, Lφ_i)` and `(f, Lφ_i)` over the first `cells` cells, `L = b d/dx + c`.
pub fn residual_1d(mesh: &Mesh1D, p: &Problem1D, cells: usize) -> (SparseMatrix, Vec<f64>) {
    let jn = mesh.cells();
    let x = mesh.nodes();
    let mut trip = Vec::new();
    let mut rhs = vec![0.0; jn - 1];
    for j in 1..=cells {
        let h = mesh.width(j);
        let (b, c) = (p.b, p.c);
        let d = [-1.0 / h, 1.0 / h];
        let mut k = [[0.0; 2]; 2];
        for a in 0..2 {
            for bb in 0..2 {
                let mass = if a == bb { h / 3.0 } else { h / 6.0 };
                k[a][bb] = b * b * d[a] * d[bb] * h + b * c * (d[a] + d[bb]) * h / 2.0 + c * c * mass;
            }
        }
        scatter(&mut trip, jn, j, k);
        let (xl, xr) = (x[j - 1], x[j]);
        let psi = |a: usize, t: f64| if a == 0 { (xr - t) / h } else { (t - xl) / h };
        for a in 0..2 {
            let node = j - 1 + a;
            if node >= 1 && node < jn {
                rhs[node - 1] += integrate_cell(mesh, j, |t| (p.f)(t) * (b * d[a] + c * psi(a, t)));
            }
        }
    }
    let s = SparseMatrix::from_triplets(jn - 1, jn - 1, &trip).expect("indices in range");
    (s, rhs)
}

/// Pads interior values with the homogeneous boundary values.
pub fn with_boundary(interior: &[f64]) -> Vec<f64> {
    let mut u = Vec::with_capacity(interior.len() + 2);
    u.push(0.0);
    u.extend_from_slice(interior);
    u.push(0.0);
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{uniform_mesh_1d, Mesh1D};
    use approx::assert_abs_diff_eq;

    #[test]
    fn convection_matrix_is_skew_with_halves() {
        let mesh = uniform_mesh_1d(4).unwrap();
        let (a, _) = assemble_1d(&mesh, &Problem1D::constant_source(0.0, 1.0, 0.0));
        for i in 0..3 {
            assert_abs_diff_eq!(a.get(i, i), 0.0, epsilon = 1e-15);
        }
        for i in 0..2 {
            assert_abs_diff_eq!(a.get(i, i + 1), 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(a.get(i + 1, i), -0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn constant_moments() {
        let mesh = Mesh1D::new(vec![0.0, 0.1, 0.4, 1.0]).unwrap();
        let m = moments(&mesh, &|_| 2.0);
        assert_abs_diff_eq!(m[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], 0.9, epsilon = 1e-15);
    }

    #[test]
    fn residual_gram_matches_hand_values() {
        let mesh = uniform_mesh_1d(3).unwrap();
        let p = Problem1D::constant_source(0.0, 2.0, 1.0);
        let (s, r) = residual_1d(&mesh, &p, 2);
        let h = 1.0 / 3.0;
        assert_abs_diff_eq!(s.get(0, 0), 2.0 * 4.0 / h, epsilon = 1e-12);
        assert_abs_diff_eq!(s.get(0, 1), -4.0 / h, epsilon = 1e-12);
        assert_abs_diff_eq!(s.get(1, 1), 4.0 / h, epsilon = 1e-12);
        // (1, 2φ₁') over two cells cancels; (1, 2φ₂') only sees cell 2.
        assert_abs_diff_eq!(r[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r[1], 2.0, epsilon = 1e-14);
    }
}
