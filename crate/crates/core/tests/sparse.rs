use proptest::prelude::*;
use sms_core::sparse_linalg::{compress, SparseMatrix};

fn triplets(n: usize) -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
    prop::collection::vec((0..n, 0..n, -10.0f64..10.0), 0..60)
}

fn dense(m: &SparseMatrix) -> Vec<Vec<f64>> {
    (0..m.n_rows()).map(|i| (0..m.n_cols()).map(|j| m.get(i, j)).collect()).collect()
}

proptest! {
    #[test]
    fn compress_ignores_triplet_order(t in triplets(7), rot in 0usize..60) {
        let a = compress(7, 7, &t).unwrap();
        let mut r = t.clone();
        if !r.is_empty() {
            let k = rot % r.len();
            r.rotate_left(k);
            r.reverse();
        }
        let b = compress(7, 7, &r).unwrap();
        let (da, db) = (dense(&a), dense(&b));
        for i in 0..7 {
            for j in 0..7 {
                prop_assert!((da[i][j] - db[i][j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn duplicates_are_summed(t in triplets(5)) {
        let m = compress(5, 5, &t).unwrap();
        let mut d = vec![vec![0.0; 5]; 5];
        for &(i, j, v) in &t {
            d[i][j] += v;
        }
        let got = dense(&m);
        for i in 0..5 {
            for j in 0..5 {
                prop_assert!((got[i][j] - d[i][j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_part_is_symmetric(t in triplets(6)) {
        let a = compress(6, 6, &t).unwrap();
        let mut s = a.triplets();
        s.extend(a.transpose().triplets());
        let sym = compress(6, 6, &s).unwrap();
        prop_assert!(sym.asymmetry() <= 1e-12);
    }

    #[test]
    fn scaling_and_transpose_act_on_products(t in triplets(6), x in prop::collection::vec(-1.0f64..1.0, 6), s in -3.0f64..3.0) {
        let a = compress(6, 6, &t).unwrap();
        let ax = a.mul_vec(&x);
        let sax = a.scale(s).mul_vec(&x);
        for (p, q) in ax.iter().zip(&sax) {
            prop_assert!((s * p - q).abs() <= 1e-10);
        }
        let at = a.mul_transpose_vec(&x);
        let tt = a.transpose().mul_vec(&x);
        for (p, q) in at.iter().zip(&tt) {
            prop_assert!((p - q).abs() <= 1e-10);
        }
    }
}

#[test]
fn out_of_range_triplet_is_rejected() {
    assert!(compress(2, 2, &[(2, 0, 1.0)]).is_err());
}
