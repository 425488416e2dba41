//! Experiment runners. Each returns typed rows; [`run`] turns them into
//! tables and plot curves.

use std::f64::consts::FRAC_PI_4;
use std::path::Path;
use std::time::Instant;

use sms_core::fem::{ProblemSpec, SupgOptions};
use sms_core::layers::{
    embed_characteristic, refine_along_layers, snap_nodes, trace_characteristic, LayerError, TraceOptions,
};
use sms_core::mesh::{read_mesh, structured_from_lines, tensor_shishkin_2d, unit_square, MeshError, Triangulation};
use sms_core::metrics::{
    convective_residual_l2, fit_rate, h1_seminorm_error_on, linf_nodal_error, osc_int_smear_int, osc_para_exp,
    osc_smear, over_undershoot, MetricError, SmearInt,
};
use sms_core::problems::{
    double_glazing, ex1, ex3, ex4, ex5, fig1, fig1_sigma, hemker, hemker_polygon_origins, hemker_theta,
    mild_random_grid, NamedProblem, ProblemError, EX5_JUMP,
};
use sms_core::solvers::{
    coarse_mesh_1d, solve_galerkin, solve_galerkin_1d, solve_shishkin_oracle_1d, solve_shishkin_oracle_2d,
    solve_sms, solve_sms_1d, solve_supg, Method, SmsBase, SolverError,
};
use sms_core::wind_geometry::{
    build_omega_plus, build_omega_plus_shrunk, classify, GeometryError, OmegaPlusDecomposition,
};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ExperimentId, GridFamily, Snap};
use crate::output::{Cell, ExperimentOutput, PlotData, Table};

/// Lowest nodal value allowed for SMS on the double-glazing problem.
pub const EX7_MIN_TOL: f64 = 1e-10;
/// Refinement passes along the layers tried on a singular Hemker system.
pub const LAYER_REFINEMENTS: usize = 2;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{0}")]
    Check(String),
    #[error("writing results: {0}")]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    /// Process exit code: 2 for configuration errors, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            _ => 3,
        }
    }
}

fn spec_of(p: &NamedProblem) -> ProblemSpec {
    p.spec().expect("two-dimensional problem").clone()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

fn grid_lines(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}

fn decomposition(mesh: &Triangulation, spec: &ProblemSpec) -> Result<OmegaPlusDecomposition, ExperimentError> {
    let c = classify(mesh, spec)?;
    Ok(build_omega_plus(mesh, &c, &spec.wind)?)
}

/// Nodal values of `method`; SUPG and SMS-SUPG take `supg`.
pub fn solve_method(
    method: Method,
    mesh: &Triangulation,
    spec: &ProblemSpec,
    d: &OmegaPlusDecomposition,
    supg: SupgOptions,
) -> Result<Vec<f64>, SolverError> {
    Ok(match method {
        Method::Galerkin => solve_galerkin(mesh, spec)?.values,
        Method::Supg => solve_supg(mesh, spec, supg)?.values,
        Method::SmsGalerkin => solve_sms(mesh, spec, d, SmsBase::Galerkin)?.u_tilde,
        Method::SmsSupg => solve_sms(mesh, spec, d, SmsBase::Supg(supg))?.u_tilde,
    })
}

/// Nodes off the boundary of a structured `(n+1) × (n+1)` grid.
fn interior_grid_nodes(n: usize, stride: usize) -> Vec<usize> {
    (1..n).flat_map(|j| (1..n).map(move |i| j * stride + i)).collect()
}

fn minmax(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

// ---------------------------------------------------------------------------
// Fig. 1

#[derive(Debug, Clone)]
pub struct Fig1Case {
    pub n: usize,
    pub eps: f64,
    pub sigma: f64,
    pub x: Vec<f64>,
    pub galerkin: Vec<f64>,
    pub sms: Vec<f64>,
    /// Coarse part of the Shishkin-mesh Galerkin solution.
    pub oracle: Vec<f64>,
    pub sign_changes: usize,
    pub max_gap: f64,
    pub alpha: f64,
    pub alpha_star: f64,
}

/// Sign changes in successive differences of `u`.
pub fn difference_sign_changes(u: &[f64]) -> usize {
    let d: Vec<f64> = u.windows(2).map(|w| w[1] - w[0]).filter(|x| *x != 0.0).collect();
    d.windows(2).filter(|w| w[0].signum() != w[1].signum()).count()
}

pub fn run_fig1(cfg: &ExperimentConfig) -> Result<Vec<Fig1Case>, ExperimentError> {
    let base = fig1().problem_1d().expect("one-dimensional problem").clone();
    let mut out = Vec::new();
    for &eps in &cfg.eps {
        for &n in &cfg.n {
            let p = base.with_eps(eps);
            let sigma = fig1_sigma(eps, n);
            let mesh = coarse_mesh_1d(n, sigma)?;
            let galerkin = solve_galerkin_1d(&mesh, &p)?;
            let sms = solve_sms_1d(&mesh, &p)?;
            let oracle = solve_shishkin_oracle_1d(&p, n, sigma)?;
            let max_gap = sms
                .u_tilde
                .iter()
                .zip(&oracle.coarse)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            out.push(Fig1Case {
                n,
                eps,
                sigma,
                x: mesh.nodes().to_vec(),
                sign_changes: difference_sign_changes(&galerkin),
                galerkin,
                max_gap,
                alpha: sms.t[0],
                alpha_star: oracle.alpha_star,
                sms: sms.u_tilde,
                oracle: oracle.coarse,
            });
        }
    }
    Ok(out)
}

fn fig1_output(cases: &[Fig1Case], out: &mut ExperimentOutput) {
    let mut nodal = Table::new("fig1_nodal", &["n", "eps", "x", "galerkin", "sms_galerkin", "shishkin_coarse"]);
    let mut summary = Table::new("fig1", &["n", "eps", "sigma", "galerkin_sign_changes", "sms_max_gap", "alpha", "alpha_star"]);
    for c in cases {
        for i in 0..c.x.len() {
            nodal.push(vec![c.n.into(), c.eps.into(), c.x[i].into(), c.galerkin[i].into(), c.sms[i].into(), c.oracle[i].into()]);
        }
        summary.push(vec![
            c.n.into(),
            c.eps.into(),
            c.sigma.into(),
            c.sign_changes.into(),
            c.max_gap.into(),
            c.alpha.into(),
            c.alpha_star.into(),
        ]);
        let tag = format!("n{}_eps{:e}", c.n, c.eps);
        for (name, v) in [("galerkin", &c.galerkin), ("sms_galerkin", &c.sms), ("shishkin_coarse", &c.oracle)] {
            out.plots.push(PlotData {
                name: format!("fig1_{name}_{tag}"),
                points: c.x.iter().copied().zip(v.iter().copied()).collect(),
            });
        }
    }
    out.tables.push(summary);
    out.tables.push(nodal);
}

// ---------------------------------------------------------------------------
// Examples 1 and 2

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub method: Method,
    pub n: usize,
    pub eps: f64,
    pub linf: f64,
    /// `|w − u|_{H¹}` over `Ω̂_h`; only computed on shared grids.
    pub h1: Option<f64>,
    pub seconds: f64,
}

/// SUPG on the `2N × 2N` Shishkin mesh against both SMS variants on its
/// `N × N` coarse part; errors at interior coarse nodes.
pub fn run_ex1(cfg: &ExperimentConfig) -> Result<Vec<ErrorRow>, ExperimentError> {
    let mut rows = Vec::new();
    for &eps in &cfg.eps {
        let p = ex1(eps);
        let spec = spec_of(&p);
        let exact = p.exact.clone().expect("manufactured solution");
        for &n in &cfg.n {
            let (sx, sy) = cfg.sigma.sigmas(eps, [2.0, 3.0], n);
            for &method in &cfg.methods {
                let opts = cfg.supg_options(n);
                let (linf, seconds) = match method {
                    Method::Supg => {
                        let (o, s) = timed(|| solve_shishkin_oracle_2d(&spec, n, sx, sy, opts));
                        let o = o?;
                        let nodes = interior_grid_nodes(n, 2 * n + 1);
                        (linf_nodal_error(&o.mesh, &o.solution.values, &*exact, &nodes)?, s)
                    }
                    Method::Galerkin => {
                        let mesh = tensor_shishkin_2d(n, n, sx, sy)?;
                        let (v, s) = timed(|| solve_galerkin(&mesh, &spec));
                        let nodes = interior_grid_nodes(n, 2 * n + 1);
                        (linf_nodal_error(&mesh, &v?.values, &*exact, &nodes)?, s)
                    }
                    Method::SmsGalerkin | Method::SmsSupg => {
                        let mesh = structured_from_lines(
                            &grid_lines(0.0, 1.0 - sx, n),
                            &grid_lines(0.0, 1.0 - sy, n),
                            cfg.diagonal,
                        )?;
                        let mut coarse = spec.clone();
                        coarse.g1 = sms_core::fem::constant_field(0.0);
                        let (v, s) = timed(|| -> Result<Vec<f64>, ExperimentError> {
                            let d = decomposition(&mesh, &coarse)?;
                            Ok(solve_method(method, &mesh, &coarse, &d, opts)?)
                        });
                        let nodes = interior_grid_nodes(n, n + 1);
                        (linf_nodal_error(&mesh, &v?, &*exact, &nodes)?, s)
                    }
                };
                rows.push(ErrorRow { method, n, eps, linf, h1: None, seconds });
            }
        }
    }
    Ok(rows)
}

/// All methods on the same uniform `N × N` grid.
pub fn run_ex2(cfg: &ExperimentConfig) -> Result<Vec<ErrorRow>, ExperimentError> {
    let mut rows = Vec::new();
    for &eps in &cfg.eps {
        let p = ex1(eps);
        let spec = spec_of(&p);
        let exact = p.exact.clone().expect("manufactured solution");
        let grad = p.exact_gradient.clone().expect("manufactured gradient");
        for &n in &cfg.n {
            let mesh = unit_square(n, cfg.diagonal)?;
            let d = decomposition(&mesh, &spec)?;
            let nodes = interior_grid_nodes(n, n + 1);
            for &method in &cfg.methods {
                // Crosswind tuning applies to the SUPG method only.
                let opts = if method == Method::Supg { cfg.supg_options(n) } else { SupgOptions::default() };
                let (v, seconds) = timed(|| solve_method(method, &mesh, &spec, &d, opts));
                let v = v?;
                rows.push(ErrorRow {
                    method,
                    n,
                    eps,
                    linf: linf_nodal_error(&mesh, &v, &*exact, &nodes)?,
                    h1: Some(h1_seminorm_error_on(&mesh, &v, &*grad, &d.omega_hat)),
                    seconds,
                });
            }
        }
    }
    Ok(rows)
}

fn error_output(name: &str, rows: &[ErrorRow], out: &mut ExperimentOutput) {
    let mut t = Table::new(name, &["method", "n", "eps", "linf", "h1_omega_hat"]);
    for r in rows {
        t.push(vec![
            r.method.name().into(),
            r.n.into(),
            r.eps.into(),
            r.linf.into(),
            r.h1.unwrap_or(f64::NAN).into(),
        ]);
        out.time(format!("{} n={} eps={:e}", r.method, r.n, r.eps), r.seconds);
    }
    let mut curves: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in rows {
        let key = format!("{name}_{}_eps{:e}", r.method, r.eps);
        match curves.iter_mut().find(|c| c.0 == key) {
            Some(c) => c.1.push((r.n as f64, r.linf)),
            None => curves.push((key, vec![(r.n as f64, r.linf)])),
        }
    }
    out.plots.extend(curves.into_iter().map(|(name, points)| PlotData { name, points }));
    out.tables.push(t);
}

// ---------------------------------------------------------------------------
// Example 3: random grids

#[derive(Debug, Clone, PartialEq)]
pub struct GridErrors {
    pub grid: usize,
    pub seed: u64,
    pub n: usize,
    pub eps: f64,
    /// Convective residual `‖b·∇w − f‖` over `Ω̂_h`, per method in config order.
    pub errors: Vec<(Method, f64)>,
}

impl GridErrors {
    pub fn error(&self, m: Method) -> Option<f64> {
        self.errors.iter().find(|e| e.0 == m).map(|e| e.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomStudy {
    pub n: usize,
    pub eps: f64,
    pub grids: Vec<GridErrors>,
}

impl RandomStudy {
    /// Arithmetic mean over grids of `error(num) / error(den)`.
    pub fn mean_ratio(&self, num: Method, den: Method) -> Option<f64> {
        if self.grids.is_empty() {
            return None;
        }
        let mut s = 0.0;
        for g in &self.grids {
            s += g.error(num)? / g.error(den)?;
        }
        Some(s / self.grids.len() as f64)
    }

    pub fn mean_error(&self, m: Method) -> Option<f64> {
        if self.grids.is_empty() {
            return None;
        }
        let mut s = 0.0;
        for g in &self.grids {
            s += g.error(m)?;
        }
        Some(s / self.grids.len() as f64)
    }

    /// Grids ordered by decreasing SUPG error.
    pub fn sorted_by_supg(&self) -> Vec<&GridErrors> {
        let mut v: Vec<&GridErrors> = self.grids.iter().collect();
        v.sort_by(|a, b| {
            let (ea, eb) = (a.error(Method::Supg).unwrap_or(0.0), b.error(Method::Supg).unwrap_or(0.0));
            eb.total_cmp(&ea).then(a.grid.cmp(&b.grid))
        });
        v
    }
}

fn study_meshes(cfg: &ExperimentConfig, spec: &ProblemSpec, n: usize) -> Result<Vec<(u64, Triangulation)>, ExperimentError> {
    match cfg.family {
        GridFamily::Mild => (0..cfg.grids as u64)
            .map(|g| {
                let seed = cfg.seed + g;
                Ok((seed, mild_random_grid(spec, n, seed)?))
            })
            .collect(),
        GridFamily::High => {
            let count = if cfg.grids == 0 { cfg.fixtures.len() } else { cfg.grids.min(cfg.fixtures.len()) };
            cfg.fixtures[..count]
                .iter()
                .enumerate()
                .map(|(g, path)| Ok((g as u64, read_mesh(path)?)))
                .collect()
        }
    }
}

/// Convective-residual errors of every method on each grid of the family.
pub fn run_random_study(cfg: &ExperimentConfig) -> Result<Vec<RandomStudy>, ExperimentError> {
    let mut out = Vec::new();
    for &eps in &cfg.eps {
        let p = ex3(eps);
        let spec = spec_of(&p);
        for &n in &cfg.n {
            let mut grids = Vec::new();
            for (g, (seed, mut mesh)) in study_meshes(cfg, &spec, n)?.into_iter().enumerate() {
                p.tag(&mut mesh);
                let d = decomposition(&mesh, &spec)?;
                let mut errors = Vec::new();
                for &m in &cfg.methods {
                    let v = solve_method(m, &mesh, &spec, &d, cfg.supg_options(n))?;
                    errors.push((m, convective_residual_l2(&mesh, &v, &spec, &d.omega_hat)));
                }
                grids.push(GridErrors { grid: g, seed, n, eps, errors });
            }
            out.push(RandomStudy { n, eps, grids });
        }
    }
    Ok(out)
}

fn random_output(cfg: &ExperimentConfig, studies: &[RandomStudy], out: &mut ExperimentOutput) {
    let mut cols = vec!["n", "eps", "grid", "seed"];
    let names: Vec<&str> = cfg.methods.iter().map(|m| m.name()).collect();
    cols.extend(names.iter().copied());
    let mut per_grid = Table::new("ex3_grids", &cols);
    let mut summary = Table::new(
        "ex3_summary",
        &["n", "eps", "grids", "mean_ratio_supg_sms_supg", "mean_ratio_supg_sms_galerkin"],
    );
    for s in studies {
        for g in &s.grids {
            let mut row: Vec<Cell> = vec![s.n.into(), s.eps.into(), g.grid.into(), g.seed.into()];
            row.extend(cfg.methods.iter().map(|&m| Cell::from(g.error(m).unwrap_or(f64::NAN))));
            per_grid.push(row);
        }
        summary.push(vec![
            s.n.into(),
            s.eps.into(),
            s.grids.len().into(),
            s.mean_ratio(Method::Supg, Method::SmsSupg).unwrap_or(f64::NAN).into(),
            s.mean_ratio(Method::Supg, Method::SmsGalerkin).unwrap_or(f64::NAN).into(),
        ]);
        let sorted = s.sorted_by_supg();
        for &m in &cfg.methods {
            out.plots.push(PlotData {
                name: format!("ex3_{m}_n{}_eps{:e}_sorted", s.n, s.eps),
                points: sorted
                    .iter()
                    .enumerate()
                    .map(|(k, g)| ((k + 1) as f64, g.error(m).unwrap_or(f64::NAN)))
                    .collect(),
            });
        }
    }
    out.tables.push(summary);
    out.tables.push(per_grid);
}

/// Mean error per method against `N`, with least-squares slopes in `log N`.
fn rates_output(cfg: &ExperimentConfig, studies: &[RandomStudy], out: &mut ExperimentOutput) {
    let mut means = Table::new("comp-ex3", &["method", "eps", "n", "mean_error"]);
    let mut rates = Table::new("comp-ex3_rates", &["method", "eps", "slope_vs_n"]);
    for &eps in &cfg.eps {
        for &m in &cfg.methods {
            let pts: Vec<(f64, f64)> = studies
                .iter()
                .filter(|s| s.eps == eps)
                .filter_map(|s| Some((s.n as f64, s.mean_error(m)?)))
                .collect();
            for &(n, e) in &pts {
                means.push(vec![m.name().into(), eps.into(), (n as usize).into(), e.into()]);
            }
            let slope = fit_rate(&pts).unwrap_or(f64::NAN);
            rates.push(vec![m.name().into(), eps.into(), slope.into()]);
            out.plots.push(PlotData {
                name: format!("comp-ex3_{m}_eps{eps:e}"),
                points: pts,
            });
        }
    }
    out.tables.push(means);
    out.tables.push(rates);
}

// ---------------------------------------------------------------------------
// Example 4

#[derive(Debug, Clone, PartialEq)]
pub struct OscRow {
    pub method: Method,
    pub n: usize,
    pub eps: f64,
    pub osc: f64,
    pub smear: f64,
    pub osc_para: f64,
    pub osc_exp: f64,
    /// `(y, w(½, y))` samples.
    pub profile: Vec<(f64, f64)>,
}

pub fn run_ex4(cfg: &ExperimentConfig) -> Result<Vec<OscRow>, ExperimentError> {
    let mut rows = Vec::new();
    for &eps in &cfg.eps {
        let spec = spec_of(&ex4(eps));
        for &n in &cfg.n {
            let mesh = unit_square(n, cfg.diagonal)?;
            let d = decomposition(&mesh, &spec)?;
            for &method in &cfg.methods {
                let v = solve_method(method, &mesh, &spec, &d, cfg.supg_options(n))?;
                let (osc, smear) = osc_smear(&mesh, &v)?;
                let (osc_para, osc_exp) = osc_para_exp(&mesh, &v)?;
                let profile = (0..=64)
                    .filter_map(|k| {
                        let y = k as f64 / 64.0;
                        mesh.interpolate(&v, [0.5, y]).map(|w| (y, w))
                    })
                    .collect();
                rows.push(OscRow { method, n, eps, osc, smear, osc_para, osc_exp, profile });
            }
        }
    }
    Ok(rows)
}

fn ex4_output(id: ExperimentId, rows: &[OscRow], out: &mut ExperimentOutput) {
    let comp = id == ExperimentId::CompEx4;
    let cols: &[&str] = if comp {
        &["method", "n", "eps", "osc_para", "osc_exp"]
    } else {
        &["method", "n", "eps", "osc", "smear"]
    };
    let mut t = Table::new(id.name(), cols);
    for r in rows {
        let (a, b) = if comp { (r.osc_para, r.osc_exp) } else { (r.osc, r.smear) };
        t.push(vec![r.method.name().into(), r.n.into(), r.eps.into(), a.into(), b.into()]);
        out.plots.push(PlotData {
            name: format!("{}_{}_n{}_eps{:e}_x0.5", id, r.method, r.n, r.eps),
            points: r.profile.clone(),
        });
    }
    out.tables.push(t);
}

// ---------------------------------------------------------------------------
// Example 5

#[derive(Debug, Clone, PartialEq)]
pub struct InteriorRow {
    /// `regular` or `snapped`.
    pub grid: &'static str,
    pub n: usize,
    pub eps: f64,
    pub method: Method,
    pub elements: usize,
    pub overshoot: f64,
    pub undershoot: f64,
    pub osc_int: f64,
    pub smear_int: SmearInt,
}

/// Status of a grid variant that could not be built.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedGrid {
    pub grid: &'static str,
    pub n: usize,
    pub reason: String,
}

pub fn run_ex5(cfg: &ExperimentConfig) -> Result<(Vec<InteriorRow>, Vec<SkippedGrid>), ExperimentError> {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &eps in &cfg.eps {
        let spec = spec_of(&ex5(eps));
        for &n in &cfg.n {
            let base = unit_square(n, cfg.diagonal)?;
            let layer = trace_characteristic(&base, &spec, EX5_JUMP, &TraceOptions::default())?;
            let mut variants: Vec<(&'static str, Triangulation)> = vec![("regular", base.clone())];
            if let Snap::Rule(rule) = cfg.snap {
                variants.push(("snapped", snap_nodes(&base, &layer, rule)?.mesh));
            }
            for (grid, m) in variants {
                let mesh = match embed_characteristic(&m, &layer) {
                    Ok(e) => e.mesh,
                    Err(e @ LayerError::Degenerate { .. }) => {
                        skipped.push(SkippedGrid { grid, n, reason: e.to_string() });
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                let d = decomposition(&mesh, &spec)?;
                for &method in &cfg.methods {
                    let v = solve_method(method, &mesh, &spec, &d, cfg.supg_options(n))?;
                    let (overshoot, undershoot) = over_undershoot(&v);
                    let (osc_int, smear_int) = osc_int_smear_int(&mesh, &v)?;
                    rows.push(InteriorRow {
                        grid,
                        n,
                        eps,
                        method,
                        elements: mesh.n_elements(),
                        overshoot,
                        undershoot,
                        osc_int,
                        smear_int,
                    });
                }
            }
        }
    }
    Ok((rows, skipped))
}

fn ex5_output(id: ExperimentId, rows: &[InteriorRow], skipped: &[SkippedGrid], out: &mut ExperimentOutput) {
    let mut t = Table::new(
        id.name(),
        &["grid", "n", "eps", "method", "elements", "overshoot", "undershoot", "osc_int", "smear_int"],
    );
    for r in rows {
        t.push(vec![
            r.grid.into(),
            r.n.into(),
            r.eps.into(),
            r.method.name().into(),
            r.elements.into(),
            r.overshoot.into(),
            r.undershoot.into(),
            r.osc_int.into(),
            match r.smear_int {
                SmearInt::Width(w) => w.into(),
                SmearInt::NotCrossed => "not-crossed".into(),
            },
        ]);
    }
    out.tables.push(t);
    let mut s = Table::new(format!("{}_skipped", id.name()), &["grid", "n", "reason"]);
    for k in skipped {
        s.push(vec![k.grid.into(), k.n.into(), k.reason.clone().into()]);
    }
    out.tables.push(s);
}

// ---------------------------------------------------------------------------
// Example 6: Hemker problem

#[derive(Debug, Clone, PartialEq)]
pub struct HemkerRow {
    pub theta: f64,
    pub eps: f64,
    pub method: Method,
    pub nodes: usize,
    pub elements: usize,
    /// Refinement passes along the layers before the SMS system was regular.
    pub refinements: usize,
    pub layer_values: Vec<f64>,
    pub result: Result<(f64, f64), String>,
}

impl HemkerRow {
    /// Overshoot minus undershoot.
    pub fn spread(&self) -> Option<f64> {
        self.result.as_ref().ok().map(|(o, u)| o - u)
    }
}

fn load_fixture(cfg: &ExperimentConfig) -> Result<Triangulation, ExperimentError> {
    let path = cfg
        .fixtures
        .first()
        .ok_or_else(|| ConfigError::Invalid("the Hemker runs need a fixture".into()))?;
    Ok(read_mesh(path)?)
}

/// Embeds both interior layers, then refines along them while the SMS
/// system is singular.
fn hemker_case(
    cfg: &ExperimentConfig,
    fixture: &Triangulation,
    p: &NamedProblem,
    theta: f64,
) -> Result<Vec<HemkerRow>, ExperimentError> {
    let spec = spec_of(p);
    let mut mesh = fixture.clone();
    p.tag(&mut mesh);
    let origins = hemker_polygon_origins(&mesh, theta)
        .ok_or_else(|| ExperimentError::Check("fixture has no cylinder nodes".into()))?;
    let mut values = Vec::new();
    for o in origins {
        let layer = trace_characteristic(&mesh, &spec, o, &TraceOptions::default())?;
        if let Snap::Rule(rule) = cfg.snap {
            mesh = snap_nodes(&mesh, &layer, rule)?.mesh;
        }
        mesh = embed_characteristic(&mesh, &layer)?.mesh;
        values.push(layer.values[0]);
    }
    let mut d = decomposition(&mesh, &spec)?;
    let mut refinements = 0;
    let results = loop {
        let results: Vec<(Method, Result<Vec<f64>, SolverError>)> = cfg
            .methods
            .iter()
            .map(|&m| (m, solve_method(m, &mesh, &spec, &d, cfg.supg_options(0))))
            .collect();
        let singular = results
            .iter()
            .any(|(m, r)| m.is_sms() && matches!(r, Err(SolverError::RankDeficient { .. })));
        if !singular || refinements == LAYER_REFINEMENTS {
            break results;
        }
        mesh = refine_along_layers(&mesh, &d)?;
        d = decomposition(&mesh, &spec)?;
        refinements += 1;
    };
    let rows = results
        .into_iter()
        .map(|(method, r)| HemkerRow {
            theta,
            eps: spec.eps,
            method,
            nodes: mesh.n_nodes(),
            elements: mesh.n_elements(),
            refinements,
            layer_values: values.clone(),
            result: r.map(|v| over_undershoot(&v)).map_err(|e| e.to_string()),
        })
        .collect();
    Ok(rows)
}

pub fn run_ex6(cfg: &ExperimentConfig) -> Result<Vec<HemkerRow>, ExperimentError> {
    let fixture = load_fixture(cfg)?;
    let mut rows = Vec::new();
    for &eps in &cfg.eps {
        rows.extend(hemker_case(cfg, &fixture, &hemker(eps), 0.0)?);
    }
    Ok(rows)
}

/// Wind angles of the sweep: the configured list, or `count` equidistant
/// values in `(0, π/4]`.
pub fn sweep_angles(cfg: &ExperimentConfig) -> Vec<f64> {
    if !cfg.theta.is_empty() {
        return cfg.theta.clone();
    }
    let c = cfg.theta_count;
    (1..=c).map(|k| FRAC_PI_4 * k as f64 / c as f64).collect()
}

pub fn run_theta_sweep(cfg: &ExperimentConfig) -> Result<Vec<HemkerRow>, ExperimentError> {
    let fixture = load_fixture(cfg)?;
    let mut rows = Vec::new();
    for &eps in &cfg.eps {
        for theta in sweep_angles(cfg) {
            match hemker_case(cfg, &fixture, &hemker_theta(eps, theta), theta) {
                Ok(r) => rows.extend(r),
                // A failed layer embedding is reported for that angle only.
                Err(ExperimentError::Layer(e)) => rows.extend(cfg.methods.iter().map(|&method| HemkerRow {
                    theta,
                    eps,
                    method,
                    nodes: 0,
                    elements: 0,
                    refinements: 0,
                    layer_values: Vec::new(),
                    result: Err(e.to_string()),
                })),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(rows)
}

fn hemker_output(id: ExperimentId, rows: &[HemkerRow], out: &mut ExperimentOutput) {
    let mut t = Table::new(
        id.name(),
        &["theta", "eps", "method", "nodes", "elements", "refinements", "layer_value", "overshoot", "undershoot", "spread", "status"],
    );
    for r in rows {
        let (o, u, status) = match &r.result {
            Ok((o, u)) => (*o, *u, "ok".to_string()),
            Err(e) => (f64::NAN, f64::NAN, e.clone()),
        };
        let lv = r.layer_values.iter().copied().fold(f64::NAN, |a, b| if a.is_nan() { b } else { a.max(b) });
        t.push(vec![
            r.theta.into(),
            r.eps.into(),
            r.method.name().into(),
            r.nodes.into(),
            r.elements.into(),
            r.refinements.into(),
            lv.into(),
            o.into(),
            u.into(),
            (o - u).into(),
            status.into(),
        ]);
    }
    if id == ExperimentId::CompEx6 {
        let mut keys: Vec<(Method, u64)> = Vec::new();
        for r in rows {
            if !keys.contains(&(r.method, r.eps.to_bits())) {
                keys.push((r.method, r.eps.to_bits()));
            }
        }
        for (m, eb) in keys {
            let eps = f64::from_bits(eb);
            out.plots.push(PlotData {
                name: format!("comp-ex6_{m}_eps{eps:e}"),
                points: rows
                    .iter()
                    .filter(|r| r.method == m && r.eps == eps)
                    .filter_map(|r| Some((r.theta, r.spread()?)))
                    .collect(),
            });
        }
    }
    out.tables.push(t);
}

// ---------------------------------------------------------------------------
// Example 7: double glazing

#[derive(Debug, Clone, PartialEq)]
pub struct RangeRow {
    pub n: usize,
    pub eps: f64,
    pub method: Method,
    pub min: f64,
    pub max: f64,
}

/// Nodal ranges; SMS builds `Ω_h⁺` from the square inset by `shrink` cell widths.
/// Fails when an SMS minimum falls below `−EX7_MIN_TOL`.
pub fn run_ex7(cfg: &ExperimentConfig) -> Result<Vec<RangeRow>, ExperimentError> {
    let rows = ex7_rows(cfg)?;
    if let Some(r) = rows.iter().find(|r| r.method.is_sms() && r.min < -EX7_MIN_TOL) {
        return Err(ExperimentError::Check(format!(
            "{} at N = {}, eps = {:e} has min nodal value {:e}",
            r.method, r.n, r.eps, r.min
        )));
    }
    Ok(rows)
}

/// As [`run_ex7`] without the nonnegativity check.
pub fn ex7_rows(cfg: &ExperimentConfig) -> Result<Vec<RangeRow>, ExperimentError> {
    let mut rows = Vec::new();
    for &n in &cfg.n {
        let lines = grid_lines(-1.0, 1.0, n);
        let mesh = structured_from_lines(&lines, &lines, cfg.diagonal)?;
        for &eps in &cfg.eps {
            let spec = spec_of(&double_glazing(eps));
            let d = build_omega_plus_shrunk(&mesh, &spec.wind, cfg.shrink * 2.0 / n as f64)?;
            for &method in &cfg.methods {
                let v = solve_method(method, &mesh, &spec, &d, cfg.supg_options(n))?;
                let (min, max) = minmax(&v);
                rows.push(RangeRow { n, eps, method, min, max });
            }
        }
    }
    Ok(rows)
}

fn ex7_output(rows: &[RangeRow], out: &mut ExperimentOutput) {
    let mut t = Table::new("ex7", &["n", "eps", "method", "min", "max"]);
    for r in rows {
        t.push(vec![r.n.into(), r.eps.into(), r.method.name().into(), r.min.into(), r.max.into()]);
    }
    out.tables.push(t);
}

// ---------------------------------------------------------------------------

/// Validates `cfg` and runs its experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    cfg.validate()?;
    let mut out = ExperimentOutput::new(cfg.comment_lines());
    let start = Instant::now();
    use ExperimentId::*;
    match cfg.experiment {
        Fig1 => fig1_output(&run_fig1(cfg)?, &mut out),
        Ex1 => error_output("ex1", &run_ex1(cfg)?, &mut out),
        Ex2 => error_output("ex2", &run_ex2(cfg)?, &mut out),
        CompEx2 => error_output("comp-ex2", &run_ex2(cfg)?, &mut out),
        Ex3 => random_output(cfg, &run_random_study(cfg)?, &mut out),
        CompEx3 => rates_output(cfg, &run_random_study(cfg)?, &mut out),
        Ex4 | CompEx4 => ex4_output(cfg.experiment, &run_ex4(cfg)?, &mut out),
        Ex5 | CompEx5 => {
            let (rows, skipped) = run_ex5(cfg)?;
            ex5_output(cfg.experiment, &rows, &skipped, &mut out)
        }
        Ex6 => hemker_output(Ex6, &run_ex6(cfg)?, &mut out),
        CompEx6 => hemker_output(CompEx6, &run_theta_sweep(cfg)?, &mut out),
        Ex7 => ex7_output(&run_ex7(cfg)?, &mut out),
    }
    out.time("total", start.elapsed().as_secs_f64());
    Ok(out)
}

/// Runs `cfg` and writes its files under `dir`.
pub fn run_to(cfg: &ExperimentConfig, dir: &Path) -> Result<ExperimentOutput, ExperimentError> {
    let out = run(cfg)?;
    out.write(dir)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_changes_of_zigzag() {
        assert_eq!(difference_sign_changes(&[0.0, 1.0, 0.5, 1.5, 1.0]), 3);
        assert_eq!(difference_sign_changes(&[0.0, 1.0, 2.0]), 0);
    }

    #[test]
    fn theta_grid_ends_at_quarter_pi() {
        let cfg = ExperimentConfig::defaults(ExperimentId::CompEx6, crate::config::Scale::Desk);
        let t = sweep_angles(&cfg);
        assert_eq!(t.len(), 10);
        assert!((t[9] - FRAC_PI_4).abs() < 1e-15 && t[0] > 0.0);
    }

    #[test]
    fn zero_grids_give_header_only() {
        let mut cfg = ExperimentConfig::defaults(ExperimentId::Ex3, crate::config::Scale::Desk);
        cfg.grids = 0;
        let out = run(&cfg).unwrap();
        let t = out.table("ex3_grids").unwrap();
        assert!(t.rows.is_empty());
        assert_eq!(t.to_csv(&[]), "n,eps,grid,seed,supg,sms-galerkin,sms-supg\n");
    }
}
