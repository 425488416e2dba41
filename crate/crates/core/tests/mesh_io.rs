use proptest::prelude::*;
use sms_core::mesh::{format_mesh, parse_mesh, perturb_structured, red_refine, unit_square, Diagonal};

proptest! {
    #[test]
    fn text_round_trip(n in 1usize..8, frac in 0.0f64..0.33, seed in 0u64..1000, nwse in any::<bool>()) {
        let d = if nwse { Diagonal::NwSe } else { Diagonal::SwNe };
        let m = perturb_structured(&unit_square(n, d).unwrap(), frac, seed).unwrap();
        let back = parse_mesh(&format_mesh(&m)).unwrap();
        prop_assert_eq!(back.elements(), m.elements());
        prop_assert_eq!(back.boundary(), m.boundary());
        for (p, q) in back.nodes().iter().zip(m.nodes()) {
            prop_assert!((p[0] - q[0]).abs() <= 1e-15 && (p[1] - q[1]).abs() <= 1e-15);
        }
    }

    #[test]
    fn perturbation_is_deterministic_and_conforming(n in 2usize..10, frac in 0.0f64..0.33, seed in 0u64..1000) {
        let base = unit_square(n, Diagonal::SwNe).unwrap();
        let a = perturb_structured(&base, frac, seed).unwrap();
        let b = perturb_structured(&base, frac, seed).unwrap();
        prop_assert_eq!(a.nodes(), b.nodes());
        prop_assert!(a.audit().is_ok());
        prop_assert!((a.total_area() - 1.0).abs() <= 1e-12);
        for e in 0..a.n_elements() {
            prop_assert!(a.area(e) > 0.0);
        }
    }

    #[test]
    fn red_refinement_keeps_area(n in 1usize..6, picks in prop::collection::vec(0usize..72, 1..6)) {
        let m = unit_square(n, Diagonal::NwSe).unwrap();
        let sel: Vec<usize> = picks.into_iter().map(|e| e % m.n_elements()).collect();
        let r = red_refine(&m, &sel).unwrap();
        prop_assert!(r.audit().is_ok());
        prop_assert!((r.total_area() - 1.0).abs() <= 1e-12);
        prop_assert!(r.n_elements() >= m.n_elements());
    }
}

#[test]
fn perturbation_beyond_a_third_is_rejected() {
    let m = unit_square(3, Diagonal::SwNe).unwrap();
    assert!(perturb_structured(&m, 0.4, 1).is_err());
}
