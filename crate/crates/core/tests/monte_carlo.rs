//! Behaviour of the time-stepped estimator.
//!
//! The simulated loss splits into a tracking-penalty part, which converges
//! to the closed-form value as `h → 0`, and an arbitrage-cost part. A step
//! that leaves the interval overshoots by O(√h) and pays a cost quadratic
//! in the overshoot; exits happen O(1/√h) times per unit time, so the cost
//! part shrinks only like √h. These tests pin down both facts.

use g3m_fee_lab::simulator::{estimate_value, DynamicsMode, NoiseMode, PathStats, SimConfig};
use g3m_fee_lab::{MarketParams, PenaltyParams, PoolParams, ValueSolution};

fn market() -> MarketParams {
    MarketParams::new(0.04, 0.02, 0.2).unwrap()
}

fn run(gamma: f64, lambda: f64, cfg: SimConfig) -> PathStats {
    let penalty = PenaltyParams::new(lambda, 0.5).unwrap();
    let pool = PoolParams::symmetric(0.5, gamma).unwrap();
    estimate_value(0.5, &cfg, &market(), &penalty, &pool).unwrap()
}

fn cfg(step_h: f64, n_paths: usize) -> SimConfig {
    SimConfig {
        step_h,
        n_paths,
        truncation_tol: 1e-3,
        dynamics_mode: DynamicsMode::Approximated,
        ..SimConfig::default()
    }
}

fn analytic(gamma: f64) -> f64 {
    let pool = PoolParams::symmetric(0.5, gamma).unwrap();
    ValueSolution::solve(&market(), &PenaltyParams::new(1.0, 0.5).unwrap(), &pool)
        .unwrap()
        .value_at_target()
}

#[test]
fn penalty_part_approaches_closed_form() {
    let j = analytic(0.9);
    let coarse = run(0.9, 1.0, cfg(1e-3, 100));
    let fine = run(0.9, 1.0, cfg(1e-4, 100));
    let coarse_err = (coarse.penalty_estimate - j).abs();
    let fine_err = (fine.penalty_estimate - j).abs();
    assert!(fine_err < coarse_err, "{coarse:?} {fine:?} vs {j}");
    assert!(fine_err < 0.03 * j, "{fine:?} vs {j}");
}

#[test]
fn cost_part_scales_like_root_h() {
    let coarse = run(0.9, 1.0, cfg(1e-3, 20));
    let fine = run(0.9, 1.0, cfg(1e-4, 20));
    let ratio = coarse.cost_estimate / fine.cost_estimate;
    assert!(
        (2.8..3.5).contains(&ratio),
        "ratio {ratio}, expected near sqrt(10)"
    );
}

/// With a wide interval the penalty dominates and the estimate is stable
/// under step halving; with a narrow one the cost part moves it by many
/// standard errors.
#[test]
fn step_halving_sensitivity_depends_on_interval_width() {
    let wide_a = run(0.5, 1.0, cfg(1e-4, 100));
    let wide_b = run(0.5, 1.0, cfg(5e-5, 100));
    let se = wide_a.std_error.hypot(wide_b.std_error);
    assert!(
        (wide_a.j_estimate - wide_b.j_estimate).abs() < 2.0 * se,
        "{wide_a:?} {wide_b:?}"
    );

    let narrow_a = run(0.9, 1.0, cfg(1e-4, 20));
    let narrow_b = run(0.9, 1.0, cfg(5e-5, 20));
    let se = narrow_a.std_error.hypot(narrow_b.std_error);
    assert!(
        (narrow_a.j_estimate - narrow_b.j_estimate).abs() > 10.0 * se,
        "{narrow_a:?} {narrow_b:?}"
    );
}

/// Shrinking the fee lowers the penalty part but, at a fixed step, raises
/// the total: nearly every step leaves a very narrow interval.
#[test]
fn small_fee_trades_penalty_for_cost() {
    let wide = run(0.9, 1.0, cfg(1e-4, 4));
    let narrow = run(0.9999, 1.0, cfg(1e-4, 4));
    assert!(narrow.penalty_estimate < wide.penalty_estimate);
    assert!(narrow.j_estimate > wide.j_estimate);
}

#[test]
fn costless_loss_shrinks_as_interval_widens() {
    let losses: Vec<f64> = [0.95, 0.7, 0.3]
        .iter()
        .map(|&g| run(g, 0.0, cfg(1e-3, 8)).j_estimate)
        .collect();
    assert!(losses.windows(2).all(|l| l[1] < l[0]), "{losses:?}");
    assert!(losses[2] < 0.1 * losses[0], "{losses:?}");
}

#[test]
fn noise_modes_agree_on_penalty() {
    let base = SimConfig {
        truncation_tol: 1e-3,
        ..cfg(1e-3, 100)
    };
    let rad = run(0.5, 1.0, base);
    let gauss = run(
        0.5,
        1.0,
        SimConfig {
            noise_mode: NoiseMode::Gaussian,
            ..base
        },
    );
    let se = rad.penalty_std_error.hypot(gauss.penalty_std_error);
    assert!((rad.penalty_estimate - gauss.penalty_estimate).abs() < 4.0 * se);
}

#[test]
fn full_and_linearised_dynamics_agree_near_target() {
    let approx = run(0.9, 1.0, cfg(1e-3, 50));
    let full = run(
        0.9,
        1.0,
        SimConfig {
            dynamics_mode: DynamicsMode::Full,
            ..cfg(1e-3, 50)
        },
    );
    let rel = (approx.penalty_estimate - full.penalty_estimate).abs() / full.penalty_estimate;
    assert!(rel < 0.05, "{approx:?} {full:?}");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let c = cfg(1e-3, 24);
    let runs: Vec<PathStats> = [1, 3, 8]
        .iter()
        .map(|&threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run(0.9, 1.0, c))
        })
        .collect();
    for r in &runs[1..] {
        assert_eq!(r.j_estimate.to_bits(), runs[0].j_estimate.to_bits());
        assert_eq!(r.std_error.to_bits(), runs[0].std_error.to_bits());
        assert_eq!(r.n_up_events, runs[0].n_up_events);
    }
    let reseeded = run(
        0.9,
        1.0,
        SimConfig {
            master_seed: 43,
            ..c
        },
    );
    assert_ne!(reseeded.j_estimate, runs[0].j_estimate);
}
