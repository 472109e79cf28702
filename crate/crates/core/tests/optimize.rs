use entangled_mdi::decoy::FiniteKeyParams;
use entangled_mdi::interference::DetectorParams;
use entangled_mdi::optimize::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fig3() -> ScenarioTemplate {
    ScenarioTemplate::new(DetectorParams::new(0.145, 6.02e-6).unwrap(), 0.03, 4)
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

fn random_variables(rng: &mut ChaCha8Rng) -> OptimizationVariables {
    OptimizationVariables {
        mu_a: log_uniform(rng, 1e-6, 1.0),
        mu_b: log_uniform(rng, 1e-6, 1.0),
        mu_c: log_uniform(rng, 2e-6, 0.2),
        split_a: rng.gen_range(0.0..1.0),
        split_b: rng.gen_range(0.0..1.0),
        decoy_a: None,
        decoy_b: None,
    }
}

#[test]
fn optimum_beats_random_settings() {
    let t = fig3();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for loss in [10.0, 40.0] {
        let opt = optimize_point(loss, &t, Mode::Asymptotic).unwrap();
        assert!(opt.r_optimal > 0.0);
        for _ in 0..100 {
            let v = random_variables(&mut rng);
            let p = evaluate_point(loss, &t, Mode::Asymptotic, &v).unwrap();
            assert!(p.r_optimal <= opt.r_optimal, "loss {loss}: {v:?} gives {} > {}", p.r_optimal, opt.r_optimal);
        }
        // also against small perturbations of the optimum itself
        for _ in 0..20 {
            let mut v = opt.variables;
            v.mu_a *= rng.gen_range(0.8..1.25);
            v.mu_c *= rng.gen_range(0.8..1.25);
            v.split_b = (v.split_b + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0);
            let p = evaluate_point(loss, &t, Mode::Asymptotic, &v).unwrap();
            assert!(p.r_optimal <= opt.r_optimal * (1.0 + 1e-3));
        }
    }
}

#[test]
fn symmetric_scenario_has_symmetric_argmax() {
    let t = fig3();
    let mu_resolution = 10f64.ln() / 2.0;
    for loss in [0.0, 20.0, 45.0] {
        let p = optimize_point(loss, &t, Mode::Asymptotic).unwrap();
        let v = p.variables;
        assert!((v.mu_a / v.mu_b).ln().abs() < mu_resolution, "loss {loss}: {v:?}");
        assert!((v.split_a - v.split_b).abs() < 0.1, "loss {loss}: {v:?}");
        let m = evaluate_point(loss, &t, Mode::Asymptotic, &v.mirrored()).unwrap();
        assert!((m.r_raw - p.r_raw).abs() <= 1e-12 * p.r_raw.abs());
    }
}

#[test]
fn optimization_is_deterministic() {
    let t = fig3();
    let a = optimize_point(30.0, &t, Mode::Asymptotic).unwrap();
    let b = optimize_point(30.0, &t, Mode::Asymptotic).unwrap();
    assert_eq!(a, b);
    let c1 = scan_curve(20.0, 24.0, 2.0, &t, Mode::Asymptotic).unwrap();
    let c2 = scan_curve(20.0, 24.0, 2.0, &t, Mode::Asymptotic).unwrap();
    assert_eq!(c1, c2);
}

#[test]
fn warm_start_agrees_with_cold_start() {
    let t = fig3();
    for (prev, loss) in [(9.0, 10.0), (29.0, 30.0), (49.0, 50.0)] {
        let cold = optimize_point(loss, &t, Mode::Asymptotic).unwrap();
        let before = optimize_point(prev, &t, Mode::Asymptotic).unwrap();
        let warm = optimize_point_from(loss, &t, Mode::Asymptotic, &before.variables).unwrap();
        let rel = (warm.r_optimal - cold.r_optimal).abs() / cold.r_optimal;
        assert!(rel < 1e-2, "loss {loss}: warm {} cold {}", warm.r_optimal, cold.r_optimal);
    }
}

#[test]
fn curve_is_non_increasing() {
    let c = scan_curve(0.0, 70.0, 5.0, &fig3(), Mode::Asymptotic).unwrap();
    assert_eq!(c.points.len(), 15);
    for w in c.points.windows(2) {
        assert!(w[1].r_optimal <= w[0].r_optimal, "{} dB: {} > {}", w[1].total_loss_db, w[1].r_optimal, w[0].r_optimal);
    }
    let cut = c.cutoff_db().unwrap();
    assert!(c.points.iter().filter(|p| p.total_loss_db > cut).all(|p| p.flags.dark_count_floor));
}

#[test]
fn dead_detectors_give_no_key() {
    let t = ScenarioTemplate::new(DetectorParams::new(0.0, 6.02e-6).unwrap(), 0.03, 3);
    let c = scan_curve(0.0, 20.0, 10.0, &t, Mode::Asymptotic).unwrap();
    for p in &c.points {
        assert_eq!(p.r_optimal, 0.0);
        assert!(p.flags.dark_count_floor);
    }
    assert_eq!(c.cutoff_db(), None);
}

#[test]
fn far_beyond_the_cutoff_is_the_dark_count_floor() {
    let p = optimize_point(200.0, &fig3(), Mode::Asymptotic).unwrap();
    assert_eq!(p.r_optimal, 0.0);
    assert!(p.flags.dark_count_floor);
}

#[test]
fn degenerate_loss_range_is_one_point() {
    assert_eq!(loss_grid(12.0, 12.0, 1.0).unwrap(), vec![12.0]);
    assert_eq!(loss_grid(12.0, 12.0, 0.0).unwrap(), vec![12.0]);
    assert_eq!(loss_grid(0.0, 1.0, 0.25).unwrap().len(), 5);
    assert_eq!(loss_grid(0.0, 80.0, 1.0).unwrap().len(), 81);
    assert!(loss_grid(5.0, 1.0, 1.0).is_err());
    assert!(loss_grid(0.0, 1.0, 0.0).is_err());
    let c = scan_curve(12.0, 12.0, 1.0, &fig3(), Mode::Asymptotic).unwrap();
    assert_eq!(c.points.len(), 1);
}

#[test]
fn negative_loss_is_rejected() {
    assert!(optimize_point(-1.0, &fig3(), Mode::Asymptotic).is_err());
}

#[test]
fn finite_optimum_is_below_the_asymptotic_one() {
    let t = ScenarioTemplate::new(DetectorParams::new(0.93, 1e-6).unwrap(), 0.03, 4);
    let mode = Mode::Finite {
        params: FiniteKeyParams::new(1e15, 1e-10).unwrap(),
        decoys: DecoyChoice::Fixed { weak: 0.005, vacuum: 0.0 },
    };
    let fin = optimize_point(0.0, &t, mode).unwrap();
    let asym = optimize_point(0.0, &t, Mode::Asymptotic).unwrap();
    assert!(fin.r_optimal <= asym.r_optimal);
    assert!(fin.variables.mu_a > 0.005 && fin.variables.mu_b > 0.005);
}
