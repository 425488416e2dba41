use proptest::prelude::*;
use sms_core::fem::ProblemSpec;
use sms_core::mesh::{perturb_structured, unit_square, BoundaryTag, Diagonal, Triangulation};
use sms_core::metrics::{convective_residual_l2, fit_rate, osc_int_smear_int, osc_smear, over_undershoot};
use sms_core::problems::Ex1Solution;

fn field(p: [f64; 2]) -> f64 {
    (3.0 * p[0]).sin() * (1.0 - p[1]) + p[1] * p[1]
}

/// The same mesh with nodes relabelled by `perm` (new index of old node `i` is `perm[i]`).
fn relabel(m: &Triangulation, perm: &[usize]) -> Triangulation {
    let mut nodes = vec![[0.0; 2]; m.n_nodes()];
    for (i, &p) in perm.iter().enumerate() {
        nodes[p] = m.node(i);
    }
    let elements = m.elements().iter().map(|el| el.map(|v| perm[v])).collect();
    Triangulation::from_elements(nodes, elements, BoundaryTag::Dirichlet).unwrap()
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    // Multiplicative shuffle by a unit modulo n.
    let mut a = (seed as usize % n.max(2)) | 1;
    while gcd(a, n) != 1 {
        a += 2;
    }
    (0..n).map(|i| (a * i + seed as usize) % n).collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

proptest! {
    #[test]
    fn metrics_ignore_node_numbering(seed in any::<u64>(), frac in 0.0f64..0.3) {
        let m = perturb_structured(&unit_square(8, Diagonal::SwNe).unwrap(), frac, seed).unwrap();
        let perm = permutation(m.n_nodes(), seed);
        let r = relabel(&m, &perm);
        let v: Vec<f64> = m.nodes().iter().map(|&p| field(p)).collect();
        let w: Vec<f64> = r.nodes().iter().map(|&p| field(p)).collect();
        let (a, b) = (osc_smear(&m, &v).unwrap(), osc_smear(&r, &w).unwrap());
        prop_assert!((a.0 - b.0).abs() <= 1e-12 && (a.1 - b.1).abs() <= 1e-12);
        let (ia, sa) = osc_int_smear_int(&m, &v).unwrap();
        let (ib, sb) = osc_int_smear_int(&r, &w).unwrap();
        prop_assert!((ia - ib).abs() <= 1e-12);
        prop_assert_eq!(sa.width().is_some(), sb.width().is_some());
        let spec = ProblemSpec::new(1e-8, [1.0, 0.5], 1.0);
        let all_m: Vec<usize> = (0..m.n_elements()).collect();
        let ca = convective_residual_l2(&m, &v, &spec, &all_m);
        let cb = convective_residual_l2(&r, &w, &spec, &all_m);
        prop_assert!((ca - cb).abs() <= 1e-12 * (1.0 + ca));
    }

    #[test]
    fn constant_profile_has_no_oscillation(c in -2.0f64..2.0, n in 2usize..12) {
        let m = unit_square(2 * n, Diagonal::NwSe).unwrap();
        let v = vec![c; m.n_nodes()];
        let (osc, smear) = osc_smear(&m, &v).unwrap();
        prop_assert!(osc.abs() <= 1e-14 && smear.abs() <= 1e-14);
    }

    #[test]
    fn values_in_range_have_no_over_or_undershoot(v in prop::collection::vec(0.0f64..=1.0, 1..50)) {
        prop_assert_eq!(over_undershoot(&v), (0.0, 0.0));
    }

    #[test]
    fn power_law_rate_is_recovered(p in -3.0f64..3.0, c in 0.1f64..10.0) {
        let pairs: Vec<(f64, f64)> = [4.0, 8.0, 16.0, 32.0].iter().map(|&n: &f64| (n, c * n.powf(p))).collect();
        prop_assert!((fit_rate(&pairs).unwrap() - p).abs() <= 1e-10);
    }

    #[test]
    fn manufactured_residual_vanishes(x in 0.0f64..1.0, y in 0.0f64..1.0, k in 2i32..6) {
        let eps = 10f64.powi(-k);
        let s = Ex1Solution { eps };
        let p = [x, y];
        let g = s.gradient(p);
        let lap = s.laplacian(p);
        let lhs = -eps * lap + 2.0 * g[0] + 3.0 * g[1];
        let scale = 1.0 + (eps * lap).abs() + 2.0 * g[0].abs() + 3.0 * g[1].abs();
        prop_assert!((lhs - s.source(p)).abs() <= 1e-8 * scale, "residual {}", lhs - s.source(p));
    }
}

#[test]
fn manufactured_gradient_matches_differences() {
    let s = Ex1Solution { eps: 0.1 };
    let h = 1e-6;
    for i in 1..10 {
        for j in 1..10 {
            let p = [i as f64 / 10.0, j as f64 / 10.0];
            let g = s.gradient(p);
            let dx = (s.value([p[0] + h, p[1]]) - s.value([p[0] - h, p[1]])) / (2.0 * h);
            let dy = (s.value([p[0], p[1] + h]) - s.value([p[0], p[1] - h])) / (2.0 * h);
            assert!((dx - g[0]).abs() <= 1e-4 * (1.0 + g[0].abs()), "{p:?}");
            assert!((dy - g[1]).abs() <= 1e-4 * (1.0 + g[1].abs()), "{p:?}");
        }
    }
}

#[test]
fn manufactured_solution_vanishes_on_the_boundary() {
    let s = Ex1Solution { eps: 1e-3 };
    for k in 0..=20 {
        let t = k as f64 / 20.0;
        for p in [[0.0, t], [1.0, t], [t, 0.0], [t, 1.0]] {
            assert!(s.value(p).abs() <= 1e-12, "{p:?} -> {}", s.value(p));
        }
    }
}
