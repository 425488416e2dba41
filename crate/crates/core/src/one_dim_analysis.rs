//! Executable checks for the one-dimensional analysis of SMS: the discrete
//! negative norm, the alternating function `q_h`, the stability bound and
//! convergence rates.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fem1d::{assemble_1d, integrate_cell, moments, Problem1D};
use crate::mesh::{Mesh1D, MeshError};
use crate::metrics::{fit_rate, MetricError};
use crate::solvers::{solve_sms_1d, SolverError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("q_h identity violated at row {row}: got {got:e}, expected {expected:e}")]
    Identity { row: usize, got: f64, expected: f64 },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Tolerance of the `q_h` identities.
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NegNormWork {
    /// `f_j = ∫ f φ_j`, `j = 1..J−1` (index 0 holds `f_1`).
    pub moments: Vec<f64>,
    /// `S_1..S_{J′−1}` (index 0 holds `S_1`).
    pub partial: Vec<f64>,
    pub j_prime: usize,
    pub norm: f64,
}

/// `J′`: `J` when odd, `J − 1` when even.
pub fn j_prime(cells: usize) -> usize {
    if cells % 2 == 1 {
        cells
    } else {
        cells - 1
    }
}

/// Partial sums and `‖·‖₋ₕ` from given moments on a mesh of `cells` cells.
pub fn negative_norm_from_moments(m: &[f64], cells: usize) -> NegNormWork {
    let jp = j_prime(cells);
    let half = (jp - 1) / 2;
    let f = |k: usize| m[k - 1];
    let mut partial = vec![0.0; jp - 1];
    let mut acc = 0.0;
    for j in 1..=half {
        acc += f(2 * j - 1);
        partial[2 * j - 1] = acc;
    }
    let mut acc = 0.0;
    for j in (1..=half).rev() {
        acc += f(2 * j);
        partial[2 * j - 2] = acc;
    }
    let norm = partial.iter().fold(0.0f64, |a, s| a.max(s.abs()));
    NegNormWork { moments: m.to_vec(), partial, j_prime: jp, norm }
}

pub fn discrete_negative_norm(f: &dyn Fn(f64) -> f64, mesh: &Mesh1D) -> NegNormWork {
    negative_norm_from_moments(&moments(mesh, f), mesh.cells())
}

#[derive(Debug, Clone, PartialEq)]
pub struct QhCheck {
    /// Nodal values at `x_0..x_J`.
    pub values: Vec<f64>,
    /// `a(q_h, φ_i)` for `i = 1..J−1` with `ε = 0`.
    pub action: Vec<f64>,
    /// `L(q_h) = b q_h'` on cells `1..J`.
    pub l_cells: Vec<f64>,
}

/// `q_j = −(1 − (−1)^j)/b` and a check of its action under the `ε = 0` form:
/// `a(q_h, φ) = φ(x_{J−1})` for `J` odd, `0` for `J` even.
pub fn build_q_h(mesh: &Mesh1D, b: f64) -> Result<QhCheck, AnalysisError> {
    if !(b > 0.0) {
        return Err(AnalysisError::Argument(format!("b must be positive, got {b}")));
    }
    let jn = mesh.cells();
    let mut values = vec![0.0; jn + 1];
    for (j, v) in values.iter_mut().enumerate().take(jn).skip(1) {
        *v = if j % 2 == 1 { -2.0 / b } else { 0.0 };
    }
    let (a, _) = assemble_1d(mesh, &Problem1D::constant_source(0.0, b, 0.0));
    let action = a.mul_vec(&values[1..jn]);
    for (i, &got) in action.iter().enumerate() {
        let row = i + 1;
        let expected = if jn % 2 == 1 && row == jn - 1 { 1.0 } else { 0.0 };
        if (got - expected).abs() > IDENTITY_TOL {
            return Err(AnalysisError::Identity { row, got, expected });
        }
    }
    let l_cells = (1..=jn).map(|j| b * (values[j] - values[j - 1]) / mesh.width(j)).collect();
    Ok(QhCheck { values, action, l_cells })
}

/// `r = (f, L_h(q_h))` over `(0, x_{J−1})`.
pub fn r_functional(mesh: &Mesh1D, f: &dyn Fn(f64) -> f64) -> f64 {
    (1..mesh.cells())
        .map(|j| {
            let s = if j % 2 == 0 { 2.0 } else { -2.0 };
            s / mesh.width(j) * integrate_cell(mesh, j, f)
        })
        .sum()
}

/// Random partition of `(0,1)` with widths `(1 + u_j)/Σ(1 + u_k)`.
pub fn random_mesh(cells: usize, rng: &mut impl Rng) -> Result<Mesh1D, MeshError> {
    let w: Vec<f64> = (0..cells).map(|_| 1.0 + rng.gen::<f64>()).collect();
    let total: f64 = w.iter().sum();
    let mut x = Vec::with_capacity(cells + 1);
    let mut acc = 0.0;
    x.push(0.0);
    for wj in &w[..cells - 1] {
        acc += wj / total;
        x.push(acc);
    }
    x.push(1.0);
    Mesh1D::new(x)
}

/// `x_j = ψ(j/J)` with `ψ(s) = s + 0.2 sin(πs)/π`.
pub fn asymptotically_uniform_mesh(cells: usize) -> Result<Mesh1D, MeshError> {
    let psi = |s: f64| s + 0.2 * (std::f64::consts::PI * s).sin() / std::f64::consts::PI;
    let mut x: Vec<f64> = (0..=cells).map(|j| psi(j as f64 / cells as f64)).collect();
    x[0] = 0.0;
    x[cells] = 1.0;
    Mesh1D::new(x)
}

/// `ε = b · min h_j / (100 J)`.
pub fn small_eps(mesh: &Mesh1D, b: f64) -> f64 {
    b * mesh.h_min() / (100.0 * mesh.cells() as f64)
}

/// Piecewise smooth source: a constant, a sine and a jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSource {
    pub mean: f64,
    pub amp: f64,
    pub freq: f64,
    pub phase: f64,
    pub jump: f64,
    pub at: f64,
}

impl RandomSource {
    pub fn draw(rng: &mut impl Rng) -> Self {
        Self {
            mean: rng.gen_range(-1.0..1.0),
            amp: rng.gen_range(-1.0..1.0),
            freq: rng.gen_range(1.0..8.0),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
            jump: rng.gen_range(-1.0..1.0),
            at: rng.gen_range(0.1..0.9),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let step = if x > self.at { self.jump } else { 0.0 };
        self.mean + self.amp * (self.freq * std::f64::consts::PI * x + self.phase).sin() + step
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityTrial {
    pub cells: usize,
    pub b: f64,
    pub source: RandomSource,
    pub lhs: f64,
    pub rhs: f64,
    /// `|t − Σ f_{2j−1}|` for even `J`.
    pub alpha_error: Option<f64>,
}

impl StabilityTrial {
    pub fn holds(&self, alpha_tol: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-12) + 1e-14 && self.alpha_error.is_none_or(|e| e <= alpha_tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub trials: Vec<StabilityTrial>,
    pub alpha_tol: f64,
}

impl StabilityReport {
    pub fn violations(&self) -> Vec<&StabilityTrial> {
        self.trials.iter().filter(|t| !t.holds(self.alpha_tol)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("J,b,bound_lhs,bound_rhs,alpha_error\n");
        for t in &self.trials {
            let a = t.alpha_error.map(|e| format!("{e:e}")).unwrap_or_default();
            let _ = writeln!(s, "{},{},{:e},{:e},{}", t.cells, t.b, t.lhs, t.rhs, a);
        }
        s
    }
}

/// One `ε = 0` SMS solve checked against
/// `‖ũ‖_∞ ≤ (6/b)(‖f‖₋ₕ + h|r|/(6J))`.
pub fn stability_trial(mesh: &Mesh1D, b: f64, source: RandomSource) -> Result<StabilityTrial, AnalysisError> {
    let f = move |x: f64| source.eval(x);
    let p = Problem1D::new(0.0, b, 0.0, f);
    let sol = solve_sms_1d(mesh, &p)?;
    let jn = mesh.cells();
    let work = discrete_negative_norm(&f, mesh);
    let r = r_functional(mesh, &f);
    let lhs = sol.u_tilde.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let rhs = 6.0 / b * (work.norm + mesh.h() * r.abs() / (6.0 * jn as f64));
    let alpha_error = (jn % 2 == 0).then(|| {
        let sum: f64 = (1..=jn / 2).map(|j| work.moments[2 * j - 2]).sum();
        (sol.t[0] - sum).abs()
    });
    Ok(StabilityTrial { cells: jn, b, source, lhs, rhs, alpha_error })
}

/// Random trials with `J` drawn from `cells` (both ends included) on random meshes.
pub fn verify_stability(
    trials: usize,
    cells: std::ops::RangeInclusive<usize>,
    seed: u64,
) -> Result<StabilityReport, AnalysisError> {
    if *cells.start() < 3 {
        return Err(AnalysisError::Argument("need at least 3 cells".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let jn = rng.gen_range(cells.clone());
        let mesh = random_mesh(jn, &mut rng)?;
        let b = rng.gen_range(0.5..2.0);
        let source = RandomSource::draw(&mut rng);
        out.push(stability_trial(&mesh, b, source)?);
    }
    Ok(StabilityReport { trials: out, alpha_tol: 1e-12 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFamily {
    Random { seed: u64 },
    AsymptoticallyUniform,
}

/// A smooth source with its basic solution `b u' = f`, `u(0) = 0`.
#[derive(Clone)]
pub struct BasicProblem {
    pub b: f64,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub u0: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for BasicProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BasicProblem").field("b", &self.b).finish_non_exhaustive()
    }
}

impl BasicProblem {
    /// `f = cos x + 2x`, `u₀ = (sin x + x²)/b`.
    pub fn smooth(b: f64) -> Self {
        Self {
            b,
            f: Arc::new(|x: f64| x.cos() + 2.0 * x),
            u0: Arc::new(move |x: f64| (x.sin() + x * x) / b),
        }
    }

    pub fn constant(b: f64, c: f64) -> Self {
        Self { b, f: Arc::new(move |_| c), u0: Arc::new(move |x| c * x / b) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub h: f64,
    pub eps: f64,
    pub error: f64,
    /// Right-hand side of the stability bound for the error's data.
    pub bound_lhs: f64,
    pub bound_rhs: f64,
    /// `(b q_h', b ẽ')` over `(0, x_{J−1})`, relative to the product of norms.
    pub orthogonality: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub rate: f64,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("J,h,error,bound_lhs,bound_rhs\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:e},{:e},{:e},{:e}", r.cells, r.h, r.error, r.bound_lhs, r.bound_rhs);
        }
        let _ = writeln!(s, "# rate={}", self.rate);
        s
    }
}

/// Relative `(b q_h', b ẽ')_{L²(0,x_{J−1})}` for nodal `ẽ`.
pub fn orthogonality_defect(mesh: &Mesh1D, b: f64, e: &[f64]) -> Result<f64, AnalysisError> {
    let q = build_q_h(mesh, b)?;
    let (mut dot, mut nq, mut ne) = (0.0, 0.0, 0.0);
    for j in 1..mesh.cells() {
        let h = mesh.width(j);
        let de = b * (e[j] - e[j - 1]) / h;
        let dq = q.l_cells[j - 1];
        dot += dq * de * h;
        nq += dq * dq * h;
        ne += de * de * h;
    }
    let scale = (nq * ne).sqrt();
    Ok(if scale == 0.0 { 0.0 } else { dot.abs() / scale })
}

fn study_mesh(family: MeshFamily, cells: usize, index: usize) -> Result<Mesh1D, MeshError> {
    match family {
        MeshFamily::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
            random_mesh(cells, &mut rng)
        }
        MeshFamily::AsymptoticallyUniform => asymptotically_uniform_mesh(cells),
    }
}

/// `‖ũ − I_h u₀‖_∞` at `x_0..x_{J−1}` and the fitted order in `h`.
/// `eps_override` replaces the small-`ε` rule.
pub fn convergence_study(
    family: MeshFamily,
    cells: &[usize],
    problem: &BasicProblem,
    eps_override: Option<f64>,
) -> Result<ConvergenceReport, AnalysisError> {
    let mut rows = Vec::with_capacity(cells.len());
    for (k, &jn) in cells.iter().enumerate() {
        let mesh = study_mesh(family, jn, k)?;
        let eps = eps_override.unwrap_or_else(|| small_eps(&mesh, problem.b));
        let f = problem.f.clone();
        let p = Problem1D::new(eps, problem.b, 0.0, move |x| f(x));
        let sol = solve_sms_1d(&mesh, &p)?;
        let e: Vec<f64> = mesh.nodes()[..jn]
            .iter()
            .zip(&sol.u_tilde)
            .map(|(&x, &u)| u - (problem.u0)(x))
            .collect();
        let error = e.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let f2 = problem.f.clone();
        let fd = move |x: f64| f2(x);
        let work = discrete_negative_norm(&fd, &mesh);
        let r = r_functional(&mesh, &fd);
        let bound_lhs = sol.u_tilde.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let bound_rhs = 6.0 / problem.b * (work.norm + mesh.h() * r.abs() / (6.0 * jn as f64));
        let orthogonality = orthogonality_defect(&mesh, problem.b, &e)?;
        rows.push(ConvergenceRow { cells: jn, h: mesh.h(), eps, error, bound_lhs, bound_rhs, orthogonality });
    }
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.error)).collect();
    let rate = fit_rate(&pairs)?;
    Ok(ConvergenceReport { rows, rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::uniform_mesh_1d;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_source_has_zero_norm() {
        let m = uniform_mesh_1d(7).unwrap();
        assert_eq!(discrete_negative_norm(&|_| 0.0, &m).norm, 0.0);
    }

    #[test]
    fn j_prime_parity() {
        assert_eq!(j_prime(9), 9);
        assert_eq!(j_prime(10), 9);
    }

    #[test]
    fn q_h_three_cells() {
        let m = uniform_mesh_1d(3).unwrap();
        let q = build_q_h(&m, 1.0).unwrap();
        assert_eq!(q.values, vec![0.0, -2.0, 0.0, 0.0]);
        assert_abs_diff_eq!(q.action[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.action[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn sms_zero_source_is_zero() {
        let m = uniform_mesh_1d(8).unwrap();
        let t = stability_trial(&m, 1.0, RandomSource { mean: 0.0, amp: 0.0, freq: 1.0, phase: 0.0, jump: 0.0, at: 0.5 }).unwrap();
        assert_eq!(t.lhs, 0.0);
        assert_eq!(t.rhs, 0.0);
    }
}
