//! Sparse storage, saddle-point assembly and direct solves.
//!
//! Matrices are assembled from coordinate triplets and compressed into CSR
//! form. Factorization goes through `faer`'s sparse LU with partial pivoting;
//! `nalgebra` provides the dense oracle and the singular value diagnostic.

use std::io::{self, Write};
use std::cell::Cell;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Largest matrix accepted by the dense diagnostics.
pub const DENSE_LIMIT: usize = 2000;

/// Relative residual accepted by [`solve`].
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Condition lower bound beyond which a solve is reported rank deficient.
const CONDITION_LIMIT: f64 = 1e14;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("entry ({row}, {col}) outside a {n_rows}x{n_cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is rank deficient to working precision ({reason})")]
    RankDeficient {
        reason: String,
        /// Approximate kernel vector, present for systems small enough for a dense SVD.
        near_null: Option<Vec<f64>>,
    },
    #[error("dense diagnostic limited to {limit} rows, got {rows}")]
    TooLarge { rows: usize, limit: usize },
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Sum duplicates and sort columns within each row.
pub fn compress(
    n_rows: usize,
    n_cols: usize,
    triplets: &[(usize, usize, f64)],
) -> Result<SparseMatrix, LinalgError> {
    SparseMatrix::from_triplets(n_rows, n_cols, triplets)
}

impl SparseMatrix {
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, LinalgError> {
        for &(row, col, _) in triplets {
            if row >= n_rows || col >= n_cols {
                return Err(LinalgError::IndexOutOfRange {
                    row,
                    col,
                    n_rows,
                    n_cols,
                });
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        // Sorting by (row, col) and then value makes the summation order, and
        // hence the rounding, independent of the input order.
        sorted.sort_by(|a, b| {
            (a.0, a.1)
                .cmp(&(b.0, b.1))
                .then(a.2.total_cmp(&b.2))
        });
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (row, col, v) in sorted {
            if last == Some((row, col)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(col);
                values.push(v);
                row_ptr[row + 1] += 1;
                last = Some((row, col));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t).expect("identity indices in range")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `i` as (column, value) pairs, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                out.push((i, j, v));
            }
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols, "mul_vec length");
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `selfᵀ x`.
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_rows, "mul_transpose_vec length");
        let mut y = vec![0.0; self.n_cols];
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.n_cols, self.n_rows, &t).expect("transpose in range")
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Max row sum of absolute values.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `max |M - Mᵀ|` over all entries.
    pub fn asymmetry(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for (i, j, v) in self.triplets() {
            worst = worst.max((v - self.get(j, i)).abs());
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    /// Plain-text dump: header `rows cols nnz`, then `row col value`, 0-based.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v:e}")?;
        }
        Ok(())
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>, LinalgError> {
        let t: Vec<Triplet<usize, usize, f64>> = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| Triplet::new(i, j, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &t)
            .map_err(|e| LinalgError::Dimension(format!("{e:?}")))
    }
}

/// Appends the entries of `block` shifted by (`row0`, `col0`) and scaled by `s`.
fn push_block(
    out: &mut Vec<(usize, usize, f64)>,
    block: &SparseMatrix,
    row0: usize,
    col0: usize,
    s: f64,
) {
    for (i, j, v) in block.triplets() {
        out.push((row0 + i, col0 + j, s * v));
    }
}

/// The block system coupling the residual Gram matrix `S`, the discrete
/// operator `A` and the constraint selector `E`.
///
/// Unknowns are ordered `(u, t, z)`. Unsymmetrized, the matrix is
///
/// ```text
/// [ S   0  -Aᵀ ]
/// [ 0   0  -Eᵀ ]
/// [ A   E   0  ]
/// ```
///
/// and symmetrization substitutes `z̃ = -z`, flipping the sign of the last
/// block column.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub s: SparseMatrix,
    pub a: SparseMatrix,
    pub e: SparseMatrix,
    pub rhs_s: Vec<f64>,
    pub rhs_a: Vec<f64>,
    pub symmetrized: bool,
}

/// Solution of a [`SaddleSystem`], with `z` in its original sign.
#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub u: Vec<f64>,
    pub t: Vec<f64>,
    pub z: Vec<f64>,
    pub residual: f64,
}

impl SaddleSystem {
    pub fn new(
        s: SparseMatrix,
        a: SparseMatrix,
        e: SparseMatrix,
        rhs_s: Vec<f64>,
        rhs_a: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        let n = a.n_rows();
        let dims_ok = a.n_cols() == n
            && s.n_rows() == n
            && s.n_cols() == n
            && e.n_rows() == n
            && rhs_s.len() == n
            && rhs_a.len() == n;
        if !dims_ok {
            return Err(LinalgError::Dimension(format!(
                "S {}x{}, A {}x{}, E {}x{}, rhs {} / {}",
                s.n_rows(),
                s.n_cols(),
                a.n_rows(),
                a.n_cols(),
                e.n_rows(),
                e.n_cols(),
                rhs_s.len(),
                rhs_a.len()
            )));
        }
        Ok(Self {
            s,
            a,
            e,
            rhs_s,
            rhs_a,
            symmetrized: false,
        })
    }

    pub fn n(&self) -> usize {
        self.a.n_rows()
    }

    pub fn m(&self) -> usize {
        self.e.n_cols()
    }

    pub fn size(&self) -> usize {
        2 * self.n() + self.m()
    }

    pub fn symmetrize(mut self) -> Self {
        self.symmetrized = true;
        self
    }

    /// The assembled block matrix in the current sign convention.
    pub fn matrix(&self) -> SparseMatrix {
        let (n, m) = (self.n(), self.m());
        let zs = if self.symmetrized { 1.0 } else { -1.0 };
        let mut t = Vec::new();
        push_block(&mut t, &self.s, 0, 0, 1.0);
        push_block(&mut t, &self.a.transpose(), 0, n + m, zs);
        push_block(&mut t, &self.e.transpose(), n, n + m, zs);
        push_block(&mut t, &self.a, n + m, 0, 1.0);
        push_block(&mut t, &self.e, n + m, n, 1.0);
        SparseMatrix::from_triplets(2 * n + m, 2 * n + m, &t).expect("blocks in range")
    }

    pub fn rhs(&self) -> Vec<f64> {
        let mut r = self.rhs_s.clone();
        r.extend(std::iter::repeat(0.0).take(self.m()));
        r.extend_from_slice(&self.rhs_a);
        r
    }

    /// Splits a solution vector of the current convention into (u, t, z).
    pub fn split(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (n, m) = (self.n(), self.m());
        let zs = if self.symmetrized { -1.0 } else { 1.0 };
        (
            x[..n].to_vec(),
            x[n..n + m].to_vec(),
            x[n + m..].iter().map(|v| zs * v).collect(),
        )
    }
}

/// Symmetrizes the system, solves it and restores the sign of `z`.
pub fn solve_symmetric_indefinite(system: &SaddleSystem) -> Result<SaddleSolution, LinalgError> {
    let sym = system.clone().symmetrize();
    let m = sym.matrix();
    let r = sym.rhs();
    let x = solve(&m, &r)?;
    let residual = relative_residual(&m, &x, &r);
    let (u, t, z) = sym.split(&x);
    Ok(SaddleSolution { u, t, z, residual })
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn norm_max(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `‖Mx − r‖₂ / max(‖r‖₂, 1)`.
pub fn relative_residual(m: &SparseMatrix, x: &[f64], r: &[f64]) -> f64 {
    let mx = m.mul_vec(x);
    let d: Vec<f64> = mx.iter().zip(r).map(|(a, b)| a - b).collect();
    norm2(&d) / norm2(r).max(1.0)
}

fn lu_solve_once(
    lu: &faer::sparse::linalg::solvers::Lu<usize, f64>,
    r: &[f64],
) -> Vec<f64> {
    let rhs = Mat::from_fn(r.len(), 1, |i, _| r[i]);
    let x = lu.solve(&rhs);
    (0..r.len()).map(|i| x[(i, 0)]).collect()
}

thread_local! {
    static QUIET: Cell<bool> = const { Cell::new(false) };
}

/// Suppresses the panic message for panics caught inside the factorization.
fn install_quiet_hook() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        let prev = panic::take_hook();
        panic::set_hook(Box::new(move |info| {
            if !QUIET.with(|q| q.get()) {
                prev(info);
            }
        }));
    });
}

fn rank_deficient(m: &SparseMatrix, reason: String) -> LinalgError {
    let near_null = if m.n_rows() <= DENSE_LIMIT {
        min_singular_diagnostic(m).ok().map(|(_, v)| v)
    } else {
        None
    };
    LinalgError::RankDeficient { reason, near_null }
}

/// Direct solve of a square sparse system by pivoted LU.
///
/// One step of residual correction is applied if the first solve misses
/// [`RESIDUAL_TOL`]. Singular or numerically singular matrices produce
/// [`LinalgError::RankDeficient`].
pub fn solve(m: &SparseMatrix, r: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = m.n_rows();
    if m.n_cols() != n || r.len() != n {
        return Err(LinalgError::Dimension(format!(
            "{}x{} matrix with rhs of length {}",
            m.n_rows(),
            m.n_cols(),
            r.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let fm = m.to_faer()?;
    // faer's simplicial kernel panics on an exactly zero pivot rather than
    // returning an error; that case is singularity too.
    install_quiet_hook();
    QUIET.with(|q| q.set(true));
    let factor = panic::catch_unwind(AssertUnwindSafe(|| fm.sp_lu()));
    QUIET.with(|q| q.set(false));
    let lu = match factor {
        Ok(Ok(lu)) => lu,
        Ok(Err(e)) => return Err(rank_deficient(m, format!("factorization failed: {e:?}"))),
        Err(_) => return Err(rank_deficient(m, "zero pivot".into())),
    };
    let mut x = lu_solve_once(&lu, r);
    let mut res = relative_residual(m, &x, r);
    if !(res <= RESIDUAL_TOL) && x.iter().all(|v| v.is_finite()) {
        let mx = m.mul_vec(&x);
        let d: Vec<f64> = r.iter().zip(&mx).map(|(a, b)| a - b).collect();
        let dx = lu_solve_once(&lu, &d);
        x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        res = relative_residual(m, &x, r);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(rank_deficient(m, "non-finite solution".into()));
    }
    if !(res <= RESIDUAL_TOL) {
        return Err(rank_deficient(m, format!("relative residual {res:e}")));
    }
    let rn = norm_max(r);
    if rn > 0.0 {
        let bound = m.norm_inf() * norm_max(&x) / rn;
        if bound > CONDITION_LIMIT {
            return Err(rank_deficient(m, format!("condition number above {bound:e}")));
        }
    }
    Ok(x)
}

/// Dense LU solve, used as an independent oracle.
pub fn dense_solve(m: &SparseMatrix, r: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if m.n_rows() > DENSE_LIMIT {
        return Err(LinalgError::TooLarge {
            rows: m.n_rows(),
            limit: DENSE_LIMIT,
        });
    }
    let d = m.to_dense();
    let rhs = DVector::from_column_slice(r);
    d.lu()
        .solve(&rhs)
        .map(|x| x.as_slice().to_vec())
        .ok_or_else(|| LinalgError::RankDeficient {
            reason: "dense LU singular".into(),
            near_null: None,
        })
}

/// Smallest singular value and its right singular vector.
pub fn min_singular_diagnostic(m: &SparseMatrix) -> Result<(f64, Vec<f64>), LinalgError> {
    if m.n_rows() > DENSE_LIMIT || m.n_cols() > DENSE_LIMIT {
        return Err(LinalgError::TooLarge {
            rows: m.n_rows().max(m.n_cols()),
            limit: DENSE_LIMIT,
        });
    }
    let svd = m.to_dense().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested right vectors");
    let (k, &value) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| LinalgError::Dimension("empty matrix".into()))?;
    // For wide matrices the kernel is not spanned by the returned rows.
    let vec = v_t.row(k).iter().copied().collect();
    Ok((value, vec))
}

/// Ratio of extreme singular values, `σ_min / σ_max`.
pub fn relative_min_singular(m: &SparseMatrix) -> Result<f64, LinalgError> {
    if m.n_rows() > DENSE_LIMIT {
        return Err(LinalgError::TooLarge {
            rows: m.n_rows(),
            limit: DENSE_LIMIT,
        });
    }
    let sv = m.to_dense().singular_values();
    let max = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    let min = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    Ok(if max > 0.0 { min / max } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn duplicates_are_summed() {
        let m = compress(1, 1, &[(0, 0, 1.0), (0, 0, 2.0)]).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 0), 3.0);
    }

    #[test]
    fn identity_has_three_entries() {
        let m = SparseMatrix::identity(3);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(1, 1), 1.0);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn out_of_range_rejected() {
        let err = compress(2, 2, &[(2, 0, 1.0)]).unwrap_err();
        assert!(matches!(err, LinalgError::IndexOutOfRange { row: 2, .. }));
    }

    #[test]
    fn diagonal_solve() {
        let m = compress(2, 2, &[(0, 0, 2.0), (1, 1, -3.0)]).unwrap();
        let x = solve(&m, &[2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn small_saddle_solve() {
        let m = compress(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let x = solve(&m, &[2.0, 1.0]).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_matrix_reports_kernel() {
        let m = compress(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        match solve(&m, &[1.0, 2.0]) {
            Err(LinalgError::RankDeficient { near_null: Some(v), .. }) => {
                assert_abs_diff_eq!(v[0].abs(), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
                assert_abs_diff_eq!(v[0] + v[1], 0.0, epsilon = 1e-12);
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn rank_one_kernel() {
        let m = compress(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let (s, v) = min_singular_diagnostic(&m).unwrap();
        assert!(s < 1e-15);
        assert_abs_diff_eq!((v[0] - v[1]).abs(), 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn identity_singular_value() {
        let (s, v) = min_singular_diagnostic(&SparseMatrix::identity(3)).unwrap();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(norm2(&v), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn dense_guard() {
        let m = SparseMatrix::identity(DENSE_LIMIT + 1);
        assert!(matches!(
            min_singular_diagnostic(&m),
            Err(LinalgError::TooLarge { .. })
        ));
    }

    #[test]
    fn saddle_layout_and_symmetry() {
        let s = compress(2, 2, &[(0, 0, 2.0), (1, 1, 1.0), (0, 1, 0.5), (1, 0, 0.5)]).unwrap();
        let a = compress(2, 2, &[(0, 0, 1.0), (0, 1, 3.0), (1, 1, 1.0)]).unwrap();
        let e = compress(2, 1, &[(1, 0, 1.0)]).unwrap();
        let sys = SaddleSystem::new(s, a, e, vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        let m = sys.matrix();
        assert_eq!(m.get(0, 3), -1.0);
        assert_eq!(m.get(0, 4), 0.0);
        assert_eq!(m.get(1, 3), -3.0);
        assert_eq!(m.get(2, 4), -1.0);
        assert_eq!(m.get(4, 2), 1.0);
        assert!(m.asymmetry() > 0.0);
        let sym = sys.clone().symmetrize().matrix();
        assert!(sym.asymmetry() <= 1e-14 * sym.max_abs());
        let sol = solve_symmetric_indefinite(&sys).unwrap();
        let x: Vec<f64> = sol.u.iter().chain(&sol.t).chain(&sol.z).copied().collect();
        assert!(relative_residual(&m, &x, &sys.rhs()) < 1e-12);
    }

    #[test]
    fn matrix_market_dump() {
        let m = compress(2, 3, &[(1, 2, 1.5)]).unwrap();
        let mut buf = Vec::new();
        m.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("2 3 1"));
        assert!(text.lines().nth(1).unwrap().starts_with("1 2 1.5"));
    }
}
