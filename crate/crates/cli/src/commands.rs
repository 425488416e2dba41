//! The `mesh`, `solve` and `diagnose` subcommands.

use std::fmt::Write as _;
use std::path::Path;

use sms_core::mesh::{
    format_node_csv, perturb_structured, read_mesh, red_refine, structured_from_lines, unit_square, write_mesh,
    BoundaryTag, Diagonal, MeshError, Triangulation,
};
use sms_core::problems::{
    catalog, regression_interior_node, regression_isolated_element, regression_parallel_edge, regression_spec,
};
use sms_core::solvers::sms_matrix;
use sms_core::solvers::SmsBase;
use sms_core::sparse_linalg::{relative_min_singular, DENSE_LIMIT};
use sms_core::wind_geometry::{build_omega_plus, build_omega_plus_shrunk, classify, diagnose, remediate};

use crate::config::{ConfigError, ExperimentConfig, ExperimentId};
use crate::experiments::{solve_method, ExperimentError};

/// Maps a catalog problem to the experiment whose defaults it borrows.
pub fn experiment_for_problem(problem: &str) -> Result<ExperimentId, ConfigError> {
    Ok(match problem {
        "fig1" => ExperimentId::Fig1,
        "ex1" => ExperimentId::Ex2,
        "ex3" => ExperimentId::Ex3,
        "ex4" => ExperimentId::Ex4,
        "ex5" => ExperimentId::Ex5,
        "ex6" => ExperimentId::Ex6,
        "ex6-theta" => ExperimentId::CompEx6,
        "ex7" => ExperimentId::Ex7,
        other => return Err(ConfigError::Invalid(format!("unknown problem `{other}`"))),
    })
}

/// Reads a `solve`/`diagnose` config, whose `problem` key picks the defaults.
pub fn load_problem_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let problem = text
        .lines()
        .filter_map(|l| l.split('#').next()?.split_once('='))
        .find(|(k, _)| k.trim() == "problem")
        .map(|(_, v)| v.trim().to_string())
        .unwrap_or_else(|| "ex4".into());
    let mut cfg = ExperimentConfig::parse(text, Some(experiment_for_problem(&problem)?), None)?;
    cfg.problem = Some(problem);
    Ok(cfg)
}

fn problem_mesh(cfg: &ExperimentConfig, id: &str, n: usize) -> Result<Triangulation, ExperimentError> {
    if let Some(p) = &cfg.mesh {
        return Ok(read_mesh(p)?);
    }
    Ok(match id {
        "ex6" | "ex6-theta" => read_mesh(cfg.fixtures.first().ok_or(ConfigError::Invalid("no fixture".into()))?)?,
        "ex7" => {
            let l: Vec<f64> = (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
            structured_from_lines(&l, &l, cfg.diagonal)?
        }
        _ => unit_square(n, cfg.diagonal)?,
    })
}

/// Solution files of a single solve, keyed by method name.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub summary: String,
    pub files: Vec<(String, String)>,
}

/// Solves the configured problem with every configured method on one grid.
pub fn solve(cfg: &ExperimentConfig) -> Result<SolveOutput, ExperimentError> {
    cfg.validate()?;
    let id = cfg.problem.clone().unwrap_or_else(|| "ex4".into());
    let problem = catalog(&id)?;
    let eps = *cfg.eps.first().ok_or(ConfigError::Invalid("no eps".into()))?;
    let n = cfg.n.first().copied().unwrap_or(16);
    let spec = problem
        .spec()
        .ok_or_else(|| ConfigError::Invalid(format!("`{id}` is one-dimensional; run `experiment fig1`")))?
        .clone()
        .with_eps(eps);
    let mut mesh = problem_mesh(cfg, &id, n)?;
    problem.tag(&mut mesh);
    let d = if id == "ex7" {
        build_omega_plus_shrunk(&mesh, &spec.wind, cfg.shrink * 2.0 / n as f64)?
    } else {
        build_omega_plus(&mesh, &classify(&mesh, &spec)?, &spec.wind)?
    };
    let comments = cfg.comment_lines().join("\n");
    let mut summary = String::new();
    let mut files = Vec::new();
    for &m in &cfg.methods {
        let v = solve_method(m, &mesh, &spec, &d, cfg.supg_options(n))?;
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &x| (a.0.min(x), a.1.max(x)));
        let _ = writeln!(summary, "{m}: {} nodes, min {lo:e}, max {hi:e}", mesh.n_nodes());
        files.push((format!("solution_{m}.csv"), format!("{comments}\n{}", format_node_csv(&mesh, &v))));
    }
    Ok(SolveOutput { summary, files })
}

/// Source of the mesh examined by `diagnose`.
#[derive(Debug, Clone)]
pub enum DiagnoseTarget {
    /// One of `interior-node`, `isolated-element`, `parallel-edge`.
    Regression(String),
    Config(ExperimentConfig),
}

/// Uniqueness report, with the relative smallest singular value of the SMS
/// matrix before and after remediation when the system is small enough.
pub fn diagnose_report(target: &DiagnoseTarget) -> Result<String, ExperimentError> {
    let (mesh, spec) = match target {
        DiagnoseTarget::Regression(name) => {
            let mesh = match name.as_str() {
                "interior-node" => regression_interior_node()?,
                "isolated-element" => regression_isolated_element()?,
                "parallel-edge" => regression_parallel_edge()?,
                other => return Err(ConfigError::Invalid(format!("unknown regression mesh `{other}`")).into()),
            };
            (mesh, regression_spec())
        }
        DiagnoseTarget::Config(cfg) => {
            cfg.validate()?;
            let id = cfg.problem.clone().unwrap_or_else(|| "ex4".into());
            let problem = catalog(&id)?;
            let spec = problem
                .spec()
                .ok_or_else(|| ConfigError::Invalid(format!("`{id}` is one-dimensional")))?
                .clone();
            let mut mesh = problem_mesh(cfg, &id, cfg.n.first().copied().unwrap_or(16))?;
            problem.tag(&mut mesh);
            (mesh, spec)
        }
    };
    let d = build_omega_plus(&mesh, &classify(&mesh, &spec)?, &spec.wind)?;
    let report = diagnose(&mesh, &d, &spec.wind);
    let mut s = format!(
        "nodes {}\nelements {}\nomega_plus {}\nn_delta {}\n{}",
        mesh.n_nodes(),
        mesh.n_elements(),
        d.omega_plus.len(),
        d.n_delta.len(),
        report.to_text()
    );
    let sigma = |m: &Triangulation, d| -> Option<f64> {
        let a = sms_matrix(m, &spec, d, SmsBase::Galerkin).ok()?;
        (a.n_rows() <= DENSE_LIMIT).then(|| relative_min_singular(&a).ok()).flatten()
    };
    if let Some(v) = sigma(&mesh, &d) {
        let _ = writeln!(s, "relative_min_singular {v:e}");
    }
    if report.has_defects() {
        match remediate(&mesh, &spec.wind) {
            Ok(r) => {
                let _ = writeln!(s, "remediation rounds {} elements {}", r.rounds, r.mesh.n_elements());
                if let Some(v) = sigma(&r.mesh, &r.decomposition) {
                    let _ = writeln!(s, "remediated_relative_min_singular {v:e}");
                }
            }
            Err(e) => {
                let _ = writeln!(s, "remediation failed: {e}");
            }
        }
    }
    Ok(s)
}

/// `mesh generate`: a uniform grid, optionally perturbed.
pub fn generate_mesh(n: usize, diagonal: Diagonal, perturb: f64, seed: u64) -> Result<Triangulation, MeshError> {
    let m = unit_square(n, diagonal)?;
    perturb_structured(&m, perturb, seed)
}

/// `mesh inspect` summary.
pub fn inspect_mesh(mesh: &Triangulation) -> String {
    let dirichlet = mesh.boundary().iter().filter(|b| b.tag == BoundaryTag::Dirichlet).count();
    let min_area = (0..mesh.n_elements()).map(|e| mesh.area(e)).fold(f64::INFINITY, f64::min);
    let max_diam = (0..mesh.n_elements()).map(|e| mesh.diameter(e)).fold(0.0, f64::max);
    let audit = match mesh.audit() {
        Ok(()) => "conforming".to_string(),
        Err(e) => e.to_string(),
    };
    format!(
        "nodes {}\nelements {}\nboundary_edges {} (dirichlet {}, neumann {})\nlayer_edges {}\nmin_area {min_area:e}\nmax_diameter {max_diam:e}\ntotal_area {:e}\naudit {audit}\n",
        mesh.n_nodes(),
        mesh.n_elements(),
        mesh.boundary().len(),
        dirichlet,
        mesh.boundary().len() - dirichlet,
        mesh.layer_edges().len(),
        mesh.total_area(),
    )
}

/// `mesh refine`: red refinement of `elements`, or of every element.
pub fn refine_mesh(mesh: &Triangulation, elements: &[usize]) -> Result<Triangulation, MeshError> {
    let all: Vec<usize>;
    let sel = if elements.is_empty() {
        all = (0..mesh.n_elements()).collect();
        &all
    } else {
        elements
    };
    red_refine(mesh, sel)
}

pub fn save_mesh(mesh: &Triangulation, path: &Path) -> Result<(), MeshError> {
    write_mesh(mesh, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn problem_key_selects_defaults() {
        let c = load_problem_config("problem=ex7\nn=8").unwrap();
        assert_eq!(c.experiment, ExperimentId::Ex7);
        assert_eq!(c.n, vec![8]);
    }

    #[test]
    fn refining_everything_quadruples() {
        let m = unit_square(2, Diagonal::SwNe).unwrap();
        assert_eq!(refine_mesh(&m, &[]).unwrap().n_elements(), 32);
    }

    #[test]
    fn regression_report_shows_remediation() {
        let s = diagnose_report(&DiagnoseTarget::Regression("isolated-element".into())).unwrap();
        assert!(s.contains("isolated 1"), "{s}");
        assert!(s.contains("remediated_relative_min_singular"), "{s}");
    }
}
