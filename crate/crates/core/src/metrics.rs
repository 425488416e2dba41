//! Error, oscillation and smearing measures for nodal P1 solutions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::fem::ProblemSpec;
use crate::mesh::{dot, Point, Triangulation};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("sample point {0:?} is outside the mesh")]
    OutsideMesh(Point),
}

/// Named metric values plus free-form provenance entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub values: BTreeMap<String, f64>,
    pub provenance: Vec<(String, String)>,
}

impl MetricReport {
    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.provenance.push((key.into(), value.into()));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    /// `metric,value` rows, provenance as leading `#` comments.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.provenance {
            let _ = writeln!(s, "# {k}={v}");
        }
        s.push_str("metric,value\n");
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k},{v:e}");
        }
        s
    }
}

/// `max |w(x_i) − u(x_i)|` over the listed nodes.
pub fn linf_nodal_error(
    mesh: &Triangulation,
    values: &[f64],
    exact: &dyn Fn(Point) -> f64,
    nodes: &[usize],
) -> Result<f64, MetricError> {
    if nodes.is_empty() {
        return Err(MetricError::Argument("empty node subset".into()));
    }
    Ok(nodes
        .iter()
        .map(|&i| (values[i] - exact(mesh.node(i))).abs())
        .fold(0.0, f64::max))
}

/// Mid-edge points of an element, each with weight `|τ|/3`.
fn midedges(mesh: &Triangulation, e: usize) -> [Point; 3] {
    let v = mesh.vertices(e);
    let m = |a: Point, b: Point| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    [m(v[0], v[1]), m(v[1], v[2]), m(v[2], v[0])]
}

/// `‖b·∇w − f‖_{L²}` over the listed elements (`c` is ignored).
pub fn convective_residual_l2(mesh: &Triangulation, values: &[f64], spec: &ProblemSpec, elements: &[usize]) -> f64 {
    let mut sum = 0.0;
    for &e in elements {
        let g = mesh.gradient(values, e);
        let w = mesh.area(e) / 3.0;
        for x in midedges(mesh, e) {
            let r = dot(spec.wind.at(x), g) - (spec.f)(x);
            sum += w * r * r;
        }
    }
    sum.sqrt()
}

/// Value at `p`, exact when `p` is a node.
fn sample(mesh: &Triangulation, values: &[f64], p: Point) -> Result<f64, MetricError> {
    let e = mesh.locate(p).ok_or(MetricError::OutsideMesh(p))?;
    let el = mesh.elements()[e];
    let scale = mesh.diameter(e);
    for &v in &el {
        let q = mesh.node(v);
        if (q[0] - p[0]).hypot(q[1] - p[1]) <= 1e-12 * scale {
            return Ok(values[v]);
        }
    }
    mesh.interpolate(values, p).ok_or(MetricError::OutsideMesh(p))
}

/// `osc = max_y {w(½, y) − w(½, ½)}`, `smear = max_y {w(½, ½) − w(½, y)}` for
/// `y ∈ {1/64, …, 63/64}`.
pub fn osc_smear(mesh: &Triangulation, values: &[f64]) -> Result<(f64, f64), MetricError> {
    let mid = sample(mesh, values, [0.5, 0.5])?;
    let mut osc = f64::NEG_INFINITY;
    let mut smear = f64::NEG_INFINITY;
    for k in 1..64 {
        let w = sample(mesh, values, [0.5, k as f64 / 64.0])?;
        osc = osc.max(w - mid);
        smear = smear.max(mid - w);
    }
    Ok((osc, smear))
}

/// `osc_para(2)` and `osc_exp` from element gradients at barycenters.
pub fn osc_para_exp(mesh: &Triangulation, values: &[f64]) -> Result<(f64, f64), MetricError> {
    let (mut para, mut exp) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for e in 0..mesh.n_elements() {
        let [x, y] = mesh.barycenter(e);
        let g = mesh.gradient(values, e);
        let inside_x = x > 0.0 && x < 0.9;
        if inside_x && y > 0.0 && y <= 0.1 {
            para = para.max(-g[1]);
        }
        if inside_x && y >= 0.9 && y < 1.0 {
            para = para.max(g[1]);
        }
        if (0.9..1.0).contains(&x) && y > 0.1 && y < 0.9 {
            exp = exp.max(g[0]);
        }
    }
    if !para.is_finite() || !exp.is_finite() {
        return Err(MetricError::Argument("no barycenters in the sampling regions".into()));
    }
    Ok((para, exp))
}

/// Layer thickness along `y = 0.25`, or the thresholds are never reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmearInt {
    Width(f64),
    NotCrossed,
}

impl SmearInt {
    pub fn width(self) -> Option<f64> {
        match self {
            SmearInt::Width(w) => Some(w),
            SmearInt::NotCrossed => None,
        }
    }
}

/// Step of the sampling along `y = 0.25`.
pub const SMEAR_STEP: f64 = 1.0 / 512.0;

/// `osc_int` over nodes with `x ≤ 0.5`, `y ≥ 0.1`, and `smear_int = x₂ − x₁`.
pub fn osc_int_smear_int(mesh: &Triangulation, values: &[f64]) -> Result<(f64, SmearInt), MetricError> {
    let mut sum = 0.0;
    for (i, p) in mesh.nodes().iter().enumerate() {
        if p[0] <= 0.5 && p[1] >= 0.1 {
            let w = values[i];
            sum += w.min(0.0).powi(2) + (w - 1.0).max(0.0).powi(2);
        }
    }
    let steps = (1.0 / SMEAR_STEP).round() as usize;
    let samples: Vec<(f64, f64)> = (0..=steps)
        .map(|k| {
            let x = k as f64 * SMEAR_STEP;
            sample(mesh, values, [x, 0.25]).map(|w| (x, w))
        })
        .collect::<Result<_, _>>()?;
    let first = |t: f64| -> Option<f64> {
        if samples[0].1 >= t {
            return Some(samples[0].0);
        }
        samples.windows(2).find(|w| w[1].1 >= t).map(|w| {
            let ((x0, w0), (x1, w1)) = (w[0], w[1]);
            x0 + (t - w0) / (w1 - w0) * (x1 - x0)
        })
    };
    let smear = match (first(0.1), first(0.9)) {
        (Some(a), Some(b)) => SmearInt::Width(b - a),
        _ => SmearInt::NotCrossed,
    };
    Ok((sum.sqrt(), smear))
}

/// `(max(0, max w − 1), min(0, min w))` over the nodal values.
pub fn over_undershoot(values: &[f64]) -> (f64, f64) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    ((max - 1.0).max(0.0), min.min(0.0))
}

/// `|w − u|_{H¹}` by the mid-edge rule.
pub fn h1_seminorm_error(mesh: &Triangulation, values: &[f64], exact_gradient: &dyn Fn(Point) -> Point) -> f64 {
    let all: Vec<usize> = (0..mesh.n_elements()).collect();
    h1_seminorm_error_on(mesh, values, exact_gradient, &all)
}

/// As [`h1_seminorm_error`], restricted to the listed elements.
pub fn h1_seminorm_error_on(
    mesh: &Triangulation,
    values: &[f64],
    exact_gradient: &dyn Fn(Point) -> Point,
    elements: &[usize],
) -> f64 {
    let mut sum = 0.0;
    for &e in elements {
        let g = mesh.gradient(values, e);
        let w = mesh.area(e) / 3.0;
        for x in midedges(mesh, e) {
            let ge = exact_gradient(x);
            sum += w * ((g[0] - ge[0]).powi(2) + (g[1] - ge[1]).powi(2));
        }
    }
    sum.sqrt()
}

/// Least-squares slope of `log e` against `log h`.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<f64, MetricError> {
    if pairs.len() < 3 {
        return Err(MetricError::Argument(format!("need at least 3 pairs, got {}", pairs.len())));
    }
    if pairs.iter().any(|&(h, e)| !(h > 0.0) || !(e > 0.0)) {
        return Err(MetricError::Argument("entries must be positive".into()));
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(MetricError::Argument("all h values coincide".into()));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{unit_square, BoundaryEdge, BoundaryTag, Diagonal};
    use approx::assert_abs_diff_eq;

    #[test]
    fn shift_by_one() {
        let m = unit_square(3, Diagonal::SwNe).unwrap();
        let vals: Vec<f64> = m.nodes().iter().map(|p| p[0] + 1.0).collect();
        let nodes: Vec<usize> = (0..m.n_nodes()).collect();
        assert_abs_diff_eq!(linf_nodal_error(&m, &vals, &|p| p[0], &nodes).unwrap(), 1.0, epsilon = 1e-15);
        assert!(linf_nodal_error(&m, &vals, &|p| p[0], &[]).is_err());
    }

    #[test]
    fn residual_on_unit_area_element() {
        let m = Triangulation::new(
            vec![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![
                BoundaryEdge { nodes: [0, 1], tag: BoundaryTag::Dirichlet },
                BoundaryEdge { nodes: [1, 2], tag: BoundaryTag::Dirichlet },
                BoundaryEdge { nodes: [2, 0], tag: BoundaryTag::Dirichlet },
            ],
        )
        .unwrap();
        let spec = ProblemSpec::new(0.0, [1.0, 0.0], 1.0);
        // w = 3x gives b·∇w − 1 = 2.
        let vals = [0.0, 6.0, 0.0];
        assert_abs_diff_eq!(convective_residual_l2(&m, &vals, &spec, &[0]), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn constants_have_no_oscillation() {
        let m = unit_square(8, Diagonal::SwNe).unwrap();
        let vals = vec![0.3; m.n_nodes()];
        let (osc, smear) = osc_smear(&m, &vals).unwrap();
        assert_eq!((osc, smear), (0.0, 0.0));
    }

    #[test]
    fn reduced_solution_targets() {
        let m = unit_square(20, Diagonal::SwNe).unwrap();
        let vals: Vec<f64> = m.nodes().iter().map(|p| p[0]).collect();
        let (para, exp) = osc_para_exp(&m, &vals).unwrap();
        assert_abs_diff_eq!(para, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(exp, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn step_smear_bounded_by_cell() {
        let m = unit_square(16, Diagonal::SwNe).unwrap();
        let vals: Vec<f64> = m.nodes().iter().map(|p| if p[0] >= 0.5 { 1.0 } else { 0.0 }).collect();
        let (osc, smear) = osc_int_smear_int(&m, &vals).unwrap();
        assert_eq!(osc, 0.0);
        assert!(smear.width().unwrap() <= 1.0 / 16.0 + 1e-12);
        let zero = vec![0.0; m.n_nodes()];
        assert_eq!(osc_int_smear_int(&m, &zero).unwrap().1, SmearInt::NotCrossed);
    }

    #[test]
    fn extrema_are_clipped() {
        assert_eq!(over_undershoot(&[0.0, 0.5, 1.0]), (0.0, 0.0));
        let (o, u) = over_undershoot(&[-0.5, 1.25]);
        assert_eq!((o, u), (0.25, -0.5));
    }

    #[test]
    fn h1_of_zero_against_x() {
        let m = unit_square(4, Diagonal::NwSe).unwrap();
        let vals = vec![0.0; m.n_nodes()];
        assert_abs_diff_eq!(h1_seminorm_error(&m, &vals, &|_| [1.0, 0.0]), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rates() {
        let sq: Vec<(f64, f64)> = [0.1, 0.05, 0.025, 0.0125].iter().map(|&h| (h, 3.0 * h * h)).collect();
        assert_abs_diff_eq!(fit_rate(&sq).unwrap(), 2.0, epsilon = 1e-10);
        let flat = [(0.1, 1.0), (0.2, 1.0), (0.4, 1.0)];
        assert_abs_diff_eq!(fit_rate(&flat).unwrap(), 0.0, epsilon = 1e-12);
        assert!(fit_rate(&[(0.1, 0.0), (0.2, 1.0), (0.3, 1.0)]).is_err());
    }
}
