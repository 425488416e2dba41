use proptest::prelude::*;
use sms_core::fem::{constant_field, ProblemSpec};
use sms_core::layers::{embed_characteristic, snap_nodes, trace_characteristic, SnapRule, TraceOptions};
use sms_core::mesh::{unit_square, Diagonal};

/// Distance from `p` to the line through `o` with direction `b`.
fn off_line(p: [f64; 2], o: [f64; 2], b: [f64; 2]) -> f64 {
    let n = b[0].hypot(b[1]);
    ((p[0] - o[0]) * b[1] - (p[1] - o[1]) * b[0]).abs() / n
}

proptest! {
    #[test]
    fn straight_layer_is_embedded_as_edges(y0 in 0.15f64..0.85, slope in -0.4f64..0.4, n in 3usize..12, g in 0.1f64..2.0) {
        let b = [1.0, slope];
        let spec = ProblemSpec::new(1e-8, b, 0.0).with_dirichlet(constant_field(g));
        let mesh = unit_square(n, Diagonal::SwNe).unwrap();
        let o = [0.0, y0];
        let layer = trace_characteristic(&mesh, &spec, o, &TraceOptions::default()).unwrap();
        for &v in &layer.values {
            prop_assert!((v - g).abs() <= 1e-9, "value {} for boundary data {}", v, g);
        }
        let end = *layer.path.points.last().unwrap();
        prop_assert!(off_line(end, o, b) <= 1e-9);
        prop_assert!((end[0] - 1.0).abs() <= 1e-9 || end[1].abs() <= 1e-9 || (end[1] - 1.0).abs() <= 1e-9);

        let emb = embed_characteristic(&mesh, &layer).unwrap();
        prop_assert!(emb.mesh.audit().is_ok());
        prop_assert!((emb.mesh.total_area() - 1.0).abs() <= 1e-12);
        prop_assert!(!emb.mesh.layer_edges().is_empty());
        for &i in &emb.on_path {
            prop_assert!(off_line(emb.mesh.node(i), o, b) <= 1e-9);
        }
        for le in emb.mesh.layer_edges() {
            for &v in &le.nodes {
                prop_assert!(off_line(emb.mesh.node(v), o, b) <= 1e-9);
            }
        }
    }

    #[test]
    fn snapping_keeps_the_mesh_valid(y0 in 0.15f64..0.85, slope in -0.4f64..0.4, n in 3usize..12) {
        let spec = ProblemSpec::new(1e-8, [1.0, slope], 0.0);
        let mesh = unit_square(n, Diagonal::NwSe).unwrap();
        let layer = trace_characteristic(&mesh, &spec, [0.0, y0], &TraceOptions::default()).unwrap();
        let s = snap_nodes(&mesh, &layer, SnapRule::Closest).unwrap();
        prop_assert!(s.mesh.audit().is_ok());
        prop_assert!((s.mesh.total_area() - 1.0).abs() <= 1e-12);
        prop_assert_eq!(s.mesh.n_nodes(), mesh.n_nodes());
        let emb = embed_characteristic(&s.mesh, &layer).unwrap();
        prop_assert!(emb.mesh.n_elements() >= s.mesh.n_elements());
    }
}
