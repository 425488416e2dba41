use sms_core::problems::{regression_interior_node, regression_isolated_element, regression_parallel_edge, regression_spec};
use sms_core::solvers::{sms_matrix, solve_sms, SmsBase, SolverError};
use sms_core::sparse_linalg::relative_min_singular;
use sms_core::wind_geometry::{build_omega_plus, build_omega_plus_with, classify_boundary, diagnose, remediate};

const SINGULAR: f64 = 1e-12;
const REGULAR: f64 = 1e-8;

fn sigma(mesh: &sms_core::mesh::Triangulation, d: &sms_core::wind_geometry::OmegaPlusDecomposition) -> f64 {
    relative_min_singular(&sms_matrix(mesh, &regression_spec(), d, SmsBase::Galerkin).unwrap()).unwrap()
}

#[test]
fn interior_node_needs_upwind_removal() {
    let spec = regression_spec();
    let mesh = regression_interior_node().unwrap();
    let c = classify_boundary(&mesh, &spec.wind).unwrap();
    let plain = build_omega_plus_with(&mesh, &c, &spec.wind, false).unwrap();
    assert!(sigma(&mesh, &plain) <= SINGULAR);
    let fixed = build_omega_plus(&mesh, &c, &spec.wind).unwrap();
    assert!(!fixed.removed_upwind.is_empty());
    assert!(sigma(&mesh, &fixed) >= REGULAR);
}

#[test]
fn singular_system_is_reported_not_solved() {
    let spec = regression_spec();
    let mesh = regression_interior_node().unwrap();
    let c = classify_boundary(&mesh, &spec.wind).unwrap();
    let plain = build_omega_plus_with(&mesh, &c, &spec.wind, false).unwrap();
    let err = solve_sms(&mesh, &spec, &plain, SmsBase::Galerkin).unwrap_err();
    assert!(matches!(err, SolverError::RankDeficient { .. }), "{err}");
}

#[test]
fn isolated_element_is_diagnosed_and_remediated() {
    let spec = regression_spec();
    let mesh = regression_isolated_element().unwrap();
    let c = classify_boundary(&mesh, &spec.wind).unwrap();
    let d = build_omega_plus(&mesh, &c, &spec.wind).unwrap();
    assert!(sigma(&mesh, &d) <= SINGULAR);
    let rep = diagnose(&mesh, &d, &spec.wind);
    assert!(rep.has_defects());
    assert!(!rep.isolated_components.is_empty());
    let r = remediate(&mesh, &spec.wind).unwrap();
    assert!(r.rounds >= 1);
    assert!(sigma(&r.mesh, &r.decomposition) >= REGULAR);
}

#[test]
fn parallel_edge_is_diagnosed_and_remediated() {
    let spec = regression_spec();
    let mesh = regression_parallel_edge().unwrap();
    let c = classify_boundary(&mesh, &spec.wind).unwrap();
    let d = build_omega_plus(&mesh, &c, &spec.wind).unwrap();
    assert!(sigma(&mesh, &d) <= SINGULAR);
    let rep = diagnose(&mesh, &d, &spec.wind);
    assert!(rep.has_defects());
    let r = remediate(&mesh, &spec.wind).unwrap();
    assert!(sigma(&r.mesh, &r.decomposition) >= REGULAR);
}
