//! Acceptance criteria. Prints one PASS/FAIL line per criterion and fails
//! if any criterion fails. Run with `--nocapture` to see the lines.

use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sms_cli::config::{ExperimentConfig, ExperimentId, Scale};
use sms_cli::experiments::{
    ex7_rows, run_ex1, run_ex4, run_ex5, run_ex6, run_fig1, run_random_study, run_theta_sweep,
};
use sms_core::mesh::{uniform_mesh_1d, Triangulation};
use sms_core::one_dim_analysis::{
    asymptotically_uniform_mesh, build_q_h, convergence_study, random_mesh, verify_stability, BasicProblem,
    MeshFamily,
};
use sms_core::problems::{regression_interior_node, regression_isolated_element, regression_parallel_edge, regression_spec};
use sms_core::solvers::{sms_matrix, Method, SmsBase};
use sms_core::sparse_linalg::relative_min_singular;
use sms_core::wind_geometry::{build_omega_plus, build_omega_plus_with, classify_boundary, remediate, OmegaPlusDecomposition};

type Outcome = Result<(bool, String), String>;

fn desk(id: ExperimentId) -> ExperimentConfig {
    ExperimentConfig::defaults(id, Scale::Desk)
}

fn c1_fig1() -> Outcome {
    let t = Instant::now();
    let cases = run_fig1(&desk(ExperimentId::Fig1)).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let c = &cases[0];
    let ok = c.sign_changes >= 4 && c.max_gap < 1e-2 && secs < 1.0;
    Ok((ok, format!("sign_changes={} (>=4) max_gap={:e} (<1e-2) time={secs:.2}s (<1s)", c.sign_changes, c.max_gap)))
}

fn c2_q_h() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for j in 3..=64 {
        let meshes = [
            uniform_mesh_1d(j).map_err(|e| e.to_string())?,
            random_mesh(j, &mut rng).map_err(|e| e.to_string())?,
            asymptotically_uniform_mesh(j).map_err(|e| e.to_string())?,
        ];
        for m in &meshes {
            let q = build_q_h(m, 1.3).map_err(|e| e.to_string())?;
            for (i, &a) in q.action.iter().enumerate() {
                let expect = if j % 2 == 1 && i + 1 == j - 1 { 1.0 } else { 0.0 };
                worst = worst.max((a - expect).abs());
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Ok((
        worst <= 1e-12 && secs < 1.0,
        format!("max identity defect {worst:e} (<=1e-12) over J=3..64, time={secs:.2}s (<1s)"),
    ))
}

fn c3_stability() -> Outcome {
    let t = Instant::now();
    let odd = verify_stability(100, 3..=63, 31).map_err(|e| e.to_string())?;
    let even = verify_stability(100, 4..=64, 32).map_err(|e| e.to_string())?;
    let mut odd_trials = 0;
    let mut even_trials = 0;
    let mut violations = 0;
    let mut alpha = 0.0f64;
    for t in odd.trials.iter().chain(&even.trials) {
        if t.cells % 2 == 0 {
            even_trials += 1;
        } else {
            odd_trials += 1;
        }
        if !t.holds(1e-12) {
            violations += 1;
        }
        alpha = alpha.max(t.alpha_error.unwrap_or(0.0));
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = violations == 0 && alpha <= 1e-12 && odd_trials >= 50 && even_trials >= 50 && secs < 10.0;
    Ok((
        ok,
        format!(
            "{violations} violations in {} trials ({odd_trials} odd, {even_trials} even), max alpha error {alpha:e} (<=1e-12), time={secs:.2}s (<10s)",
            odd_trials + even_trials
        ),
    ))
}

fn c4_convergence() -> Outcome {
    let t = Instant::now();
    let cells = [16, 32, 64, 128, 256];
    let p = BasicProblem::smooth(1.0);
    let r = convergence_study(MeshFamily::Random { seed: 4 }, &cells, &p, None).map_err(|e| e.to_string())?;
    let u = convergence_study(MeshFamily::AsymptoticallyUniform, &cells, &p, None).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let ok = r.rate >= 0.9 && u.rate >= 1.8 && secs < 30.0;
    Ok((
        ok,
        format!(
            "random rate {:.3} (>=0.9), asymptotically uniform rate {:.3} (>=1.8), time={secs:.2}s (<30s)",
            r.rate, u.rate
        ),
    ))
}

fn c5_ex1() -> Outcome {
    let mut cfg = desk(ExperimentId::Ex1);
    cfg.n = vec![5, 10, 20, 40];
    cfg.eps = vec![1e-4, 1e-8];
    cfg.methods = vec![Method::Supg, Method::SmsGalerkin, Method::SmsSupg];
    let rows = run_ex1(&cfg).map_err(|e| e.to_string())?;
    let mut worst = 1.0f64;
    let mut monotone = true;
    for &eps in &cfg.eps {
        for sms in [Method::SmsGalerkin, Method::SmsSupg] {
            let mut prev = f64::INFINITY;
            for &n in &cfg.n {
                let get = |m: Method| rows.iter().find(|r| r.method == m && r.n == n && r.eps == eps).map(|r| r.linf);
                let (Some(s), Some(o)) = (get(sms), get(Method::Supg)) else {
                    return Err(format!("missing row N={n} eps={eps:e}"));
                };
                worst = worst.max(s / o).max(o / s);
                monotone &= s <= prev;
                prev = s;
            }
        }
    }
    Ok((worst <= 3.0 && monotone, format!("largest SMS/oracle factor {worst:.3} (<=3), monotone in N: {monotone}")))
}

fn c6_ex4() -> Outcome {
    let mut cfg = desk(ExperimentId::Ex4);
    cfg.n = vec![64];
    let t = Instant::now();
    let rows = run_ex4(&cfg).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let supg = rows.iter().find(|r| r.method == Method::Supg).ok_or("no SUPG row")?;
    let sms: Vec<_> = rows.iter().filter(|r| r.method.is_sms()).collect();
    let sms_osc = sms.iter().map(|r| r.osc).fold(0.0, f64::max);
    let sms_smear = sms.iter().map(|r| r.smear).fold(0.0, f64::max);
    let ok = (supg.osc - 0.134).abs() <= 0.01 && sms_osc <= 1e-10 && sms_smear <= 1e-10 && secs < 60.0;
    Ok((
        ok,
        format!(
            "SUPG osc {:.5} (0.134+-0.01), SMS osc {sms_osc:e} smear {sms_smear:e} (<=1e-10), time={secs:.1}s (<60s)",
            supg.osc
        ),
    ))
}

fn c7_ex5() -> Outcome {
    let cfg = desk(ExperimentId::Ex5);
    let (rows, skipped) = run_ex5(&cfg).map_err(|e| e.to_string())?;
    let pick = |grid: &str, n: usize, sms: bool| -> Vec<_> {
        rows.iter().filter(|r| r.grid == grid && r.n == n && r.method.is_sms() == sms).collect()
    };
    let snapped = pick("snapped", 16, true);
    let supg = pick("snapped", 16, false);
    let regular = pick("regular", 64, true);
    if snapped.is_empty() || supg.is_empty() || regular.is_empty() {
        return Err(format!("missing ex5 rows, skipped grids: {skipped:?}"));
    }
    let over = snapped.iter().map(|r| r.overshoot).fold(0.0, f64::max);
    let under = snapped.iter().map(|r| r.undershoot).fold(0.0, f64::min);
    let s_over = supg.iter().map(|r| r.overshoot).fold(f64::INFINITY, f64::min);
    let s_under = supg.iter().map(|r| r.undershoot).fold(f64::NEG_INFINITY, f64::max);
    let osc = regular.iter().map(|r| r.osc_int).fold(0.0, f64::max);
    let smear = regular
        .iter()
        .map(|r| r.smear_int.width().unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let ok = over <= 1e-10 && under >= -1e-10 && s_over >= 1e-2 && s_under <= -1e-2 && osc <= 1e-10 && smear <= 2e-2;
    Ok((
        ok,
        format!(
            "snapped 16: SMS over {over:e} under {under:e} (|.|<=1e-10), SUPG over {s_over:.4} under {s_under:.4} (>=1e-2 both); \
             regular 64: SMS osc_int {osc:e} (<=1e-10) smear_int {smear:.4} (<=2e-2)"
        ),
    ))
}

fn c8_ex6() -> Outcome {
    let rows = run_ex6(&desk(ExperimentId::Ex6)).map_err(|e| e.to_string())?;
    let mut sms_over = 0.0f64;
    let mut sms_under = 0.0f64;
    let mut supg_under = 0.0f64;
    for r in &rows {
        let (o, u) = r.result.clone().map_err(|e| format!("{} at eps={:e}: {e}", r.method, r.eps))?;
        if r.method.is_sms() {
            sms_over = sms_over.max(o);
            sms_under = sms_under.min(u);
        } else {
            supg_under = supg_under.min(u);
        }
    }
    let ok = sms_over <= 1e-9 && sms_under >= -1e-12 && supg_under <= -0.1;
    Ok((ok, format!("SMS over {sms_over:e} (<=1e-9) under {sms_under:e} (>=-1e-12), SUPG under {supg_under:.4} (<=-0.1)")))
}

fn c9_ex7() -> Outcome {
    let rows = ex7_rows(&desk(ExperimentId::Ex7)).map_err(|e| e.to_string())?;
    let supg = rows
        .iter()
        .find(|r| r.method == Method::Supg && r.n == 20 && r.eps == 1e-4)
        .ok_or("no SUPG row at N=20, eps=1e-4")?;
    let sms_min = rows.iter().filter(|r| r.method.is_sms()).map(|r| r.min).fold(f64::INFINITY, f64::min);
    let ok = supg.min < -1e-3 && sms_min >= -1e-10;
    Ok((ok, format!("SUPG min {:.4} (<-1e-3), SMS min {sms_min:e} over all cases (>=-1e-10)", supg.min)))
}

fn sigma(m: &Triangulation, d: &OmegaPlusDecomposition) -> Result<f64, String> {
    let a = sms_matrix(m, &regression_spec(), d, SmsBase::Galerkin).map_err(|e| e.to_string())?;
    relative_min_singular(&a).map_err(|e| e.to_string())
}

fn c10_uniqueness() -> Outcome {
    let spec = regression_spec();
    let mut parts = Vec::new();
    let mut ok = true;
    let mesh = regression_interior_node().map_err(|e| e.to_string())?;
    let c = classify_boundary(&mesh, &spec.wind).map_err(|e| e.to_string())?;
    let before = sigma(&mesh, &build_omega_plus_with(&mesh, &c, &spec.wind, false).map_err(|e| e.to_string())?)?;
    let after = sigma(&mesh, &build_omega_plus(&mesh, &c, &spec.wind).map_err(|e| e.to_string())?)?;
    ok &= before <= 1e-12 && after >= 1e-8;
    parts.push(format!("interior-node {before:.1e} -> {after:.1e}"));
    for (name, mesh) in [
        ("isolated-element", regression_isolated_element()),
        ("parallel-edge", regression_parallel_edge()),
    ] {
        let mesh = mesh.map_err(|e| e.to_string())?;
        let c = classify_boundary(&mesh, &spec.wind).map_err(|e| e.to_string())?;
        let before = sigma(&mesh, &build_omega_plus(&mesh, &c, &spec.wind).map_err(|e| e.to_string())?)?;
        let r = remediate(&mesh, &spec.wind).map_err(|e| e.to_string())?;
        let after = sigma(&r.mesh, &r.decomposition)?;
        ok &= before <= 1e-12 && after >= 1e-8;
        parts.push(format!("{name} {before:.1e} -> {after:.1e}"));
    }
    Ok((ok, format!("{} (before <=1e-12, after >=1e-8)", parts.join(", "))))
}

fn c11_random() -> Outcome {
    let t = Instant::now();
    let studies = run_random_study(&desk(ExperimentId::Ex3)).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let s = &studies[0];
    let r1 = s.mean_ratio(Method::Supg, Method::SmsSupg).ok_or("missing errors")?;
    let r2 = s.mean_ratio(Method::Supg, Method::SmsGalerkin).ok_or("missing errors")?;
    let ok = s.grids.len() == 50 && r1 > 5.0 && r2 > 3.0;
    Ok((
        ok,
        format!("{} grids, mean SUPG/SMS-SUPG {r1:.2} (>5), SUPG/SMS-Galerkin {r2:.2} (>3), time={secs:.1}s", s.grids.len()),
    ))
}

/// Reported only: the outcome is not expected to be uniform over angles.
fn theta_sweep_report() -> String {
    match run_theta_sweep(&desk(ExperimentId::CompEx6)) {
        Ok(rows) => {
            let failed = rows.iter().filter(|r| r.result.is_err()).count();
            let worst = rows
                .iter()
                .filter(|r| r.method.is_sms())
                .filter_map(|r| r.result.as_ref().ok().map(|&(o, u)| (r.theta, o.max(-u))))
                .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
            let refined = rows.iter().filter(|r| r.refinements > 0).count();
            format!(
                "{} rows, {failed} failed solves, {refined} after layer refinement, worst SMS violation {:.3e} at theta={:.4}",
                rows.len(),
                worst.1,
                worst.0
            )
        }
        Err(e) => format!("sweep failed: {e}"),
    }
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("C1 one-dimensional Galerkin oscillates, SMS matches the Shishkin solve", c1_fig1),
        ("C2 discrete q_h identities", c2_q_h),
        ("C3 one-dimensional stability bound", c3_stability),
        ("C4 one-dimensional convergence orders", c4_convergence),
        ("C5 SMS versus Shishkin-mesh SUPG on the layer problem", c5_ex1),
        ("C6 characteristic layer, oscillation and smearing", c6_ex4),
        ("C7 interior layer, over- and undershoots", c7_ex5),
        ("C8 Hemker problem at theta=0", c8_ex6),
        ("C9 double glazing positivity", c9_ex7),
        ("C10 regression meshes and remediation", c10_uniqueness),
        ("C11 random grids, error ratios", c11_random),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed.push(name);
        }
    }
    println!("INFO theta sweep: {}", theta_sweep_report());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
