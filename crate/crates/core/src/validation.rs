//! Deterministic property checks run by the `validate` command.
//!
//! Every check compares two independent computations or tests a structural
//! identity on a fixed grid, so a run takes well under a second. The Monte
//! Carlo estimators are not exercised here: their time-discretised loss
//! carries an arbitrage-cost term that vanishes only as `h → 0` and cannot
//! be compared with the continuous-time value at a fixed step.

use serde::Serialize;

use crate::arbitrage::{
    self, brute_force_arb_profit, constant_product, optimal_trade, PoolParams, PoolState, Weight,
};
use crate::simulator::boundary_cost_order;
use crate::value::{MarketParams, PenaltyParams, SweepContext, ValueSolution};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed violation, in the check's own units.
    pub worst: f64,
    pub tolerance: f64,
}

const THETAS: [f64; 3] = [0.2, 0.5, 0.8];
const GAMMAS: [f64; 3] = [0.9, 0.97, 0.997];

struct Tracker {
    name: &'static str,
    tolerance: f64,
    worst: f64,
    failed: bool,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            worst: 0.0,
            failed: false,
        }
    }

    /// Records a violation size; NaN counts as a failure.
    fn record(&mut self, violation: f64) {
        if violation.is_nan() || violation > self.tolerance {
            self.failed = true;
        }
        if violation.is_nan() || violation > self.worst {
            self.worst = violation;
        }
    }

    fn fail(&mut self) {
        self.failed = true;
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name,
            passed: !self.failed,
            worst: self.worst,
            tolerance: self.tolerance,
        }
    }
}

fn pools() -> impl Iterator<Item = PoolParams> {
    THETAS.into_iter().flat_map(|t| {
        GAMMAS
            .into_iter()
            .flat_map(move |g| [(g, g), (g, 1.0), (1.0, g)])
            .map(move |(g1, g2)| PoolParams::new(t, g1, g2).expect("valid grid"))
    })
}

fn weight_grid(n: usize) -> impl Iterator<Item = f64> {
    (1..n).map(move |k| k as f64 / n as f64)
}

fn interval_ordering() -> CheckResult {
    let mut t = Tracker::new("interval_ordering", 0.0);
    for pool in pools() {
        let i = pool.no_arb_interval();
        let theta = pool.theta();
        t.record(
            (i.w_d - theta)
                .max(theta - i.w_u)
                .max(-i.w_d)
                .max(i.w_u - 1.0),
        );
    }
    t.finish()
}

fn costs_nonnegative() -> CheckResult {
    let mut t = Tracker::new("costs_nonnegative", 0.0);
    for pool in pools() {
        let i = pool.no_arb_interval();
        for w in weight_grid(200) {
            let wt = Weight::new(w).expect("grid weight");
            if w >= i.w_u {
                t.record(-arbitrage::cost_up(wt, &pool).unwrap_or(f64::NAN));
            }
            if w <= i.w_d {
                t.record(-arbitrage::cost_down(wt, &pool).unwrap_or(f64::NAN));
            }
        }
    }
    t.finish()
}

/// Reserve-level profit of the closed-form trade over pool wealth against
/// the weight-space cost formula.
fn cost_representations_agree() -> CheckResult {
    let mut t = Tracker::new("cost_representations_agree", 1e-10);
    for pool in pools() {
        for w in weight_grid(40) {
            let state = PoolState::from_weight(Weight::new(w).expect("grid weight"), 1.7, 3.0)
                .expect("valid state");
            match optimal_trade(&state, 1.7, &pool) {
                Ok(out) => {
                    t.record((out.profit(1.7) / state.wealth(1.7) - out.cost_fraction).abs())
                }
                Err(_) => t.fail(),
            }
        }
    }
    t.finish()
}

/// Inside the interval no trade earns a positive profit, checked by direct
/// maximisation of the arbitrage objective.
fn no_arbitrage_inside() -> CheckResult {
    let mut t = Tracker::new("no_arbitrage_inside", 1e-12);
    for pool in pools() {
        let i = pool.no_arb_interval();
        for k in 0..=4 {
            let w = i.w_d + i.width() * k as f64 / 4.0;
            let state = PoolState::from_weight(Weight::new(w).expect("grid weight"), 1.0, 1.0)
                .expect("valid state");
            match brute_force_arb_profit(&state, 1.0, &pool, 400) {
                Ok(b) => t.record(b.max_profit),
                Err(_) => t.fail(),
            }
        }
    }
    t.finish()
}

fn constant_product_reduction() -> CheckResult {
    let mut t = Tracker::new("constant_product_reduction", 1e-12);
    for g in GAMMAS {
        let pool = PoolParams::symmetric(0.5, g).expect("valid pool");
        let i = pool.no_arb_interval();
        for w in weight_grid(100) {
            let wt = Weight::new(w).expect("grid weight");
            if w >= i.w_u {
                let cost = arbitrage::cost_up(wt, &pool).unwrap_or(f64::NAN);
                let post = arbitrage::post_weight_up(wt, &pool).map_or(f64::NAN, |p| p.value());
                t.record((cost - constant_product::cost_up(w, g)).abs());
                t.record((post - constant_product::post_weight_up(w, g)).abs());
            }
            if w <= i.w_d {
                let cost = arbitrage::cost_down(wt, &pool).unwrap_or(f64::NAN);
                let post = arbitrage::post_weight_down(wt, &pool).map_or(f64::NAN, |p| p.value());
                t.record((cost - constant_product::cost_down(w, g)).abs());
                t.record((post - constant_product::post_weight_down(w, g)).abs());
            }
        }
    }
    t.finish()
}

fn solutions(market: &MarketParams, penalty: &PenaltyParams) -> Vec<Option<ValueSolution>> {
    GAMMAS
        .into_iter()
        .map(|g| {
            let pool = PoolParams::symmetric(penalty.w_star, g).ok()?;
            ValueSolution::solve(market, penalty, &pool).ok()
        })
        .collect()
}

/// `w J'(w)` at the endpoints relative to the penalty scale `½λσ²`.
fn boundary_conditions(sols: &[Option<ValueSolution>]) -> CheckResult {
    let mut t = Tracker::new("boundary_conditions", 1e-10);
    for sol in sols {
        let Some(sol) = sol else {
            t.fail();
            continue;
        };
        let scale = (0.5 * sol.penalty.lambda * sol.market.sigma.powi(2)).max(f64::MIN_POSITIVE);
        for w in [sol.interval.w_d, sol.interval.w_u] {
            let d = sol.value_d1(w).unwrap_or(f64::NAN);
            t.record((d * w / scale).abs());
        }
    }
    t.finish()
}

/// ODE residual relative to the penalty scale `½λσ²`.
fn ode_residual(sols: &[Option<ValueSolution>]) -> CheckResult {
    let mut t = Tracker::new("ode_residual", 1e-8);
    for sol in sols.iter().flatten() {
        let scale = (0.5 * sol.penalty.lambda * sol.market.sigma.powi(2)).max(f64::MIN_POSITIVE);
        for k in 0..=100 {
            let w = sol.interval.w_d + sol.interval.width() * k as f64 / 100.0;
            t.record(sol.ode_residual(w).map_or(f64::NAN, |r| r.abs() / scale));
        }
    }
    t.finish()
}

fn value_nonnegative(sols: &[Option<ValueSolution>]) -> CheckResult {
    let mut t = Tracker::new("value_nonnegative", 1e-10);
    for sol in sols.iter().flatten() {
        for k in 0..=100 {
            let w = sol.interval.w_d + sol.interval.width() * k as f64 / 100.0;
            t.record(-sol.value(w).unwrap_or(f64::NAN));
        }
    }
    t.finish()
}

/// `J(w*)` shrinks as the fee factor approaches one.
fn monotone_fee_limit(market: &MarketParams, penalty: &PenaltyParams) -> CheckResult {
    let mut t = Tracker::new("monotone_fee_limit", 0.0);
    let ctx = SweepContext {
        market: *market,
        penalty: *penalty,
        theta: penalty.w_star,
    };
    let mut previous = f64::INFINITY;
    for k in 3..=13 {
        let g = 1.0 - 2f64.powi(-k);
        match ctx.solve(g, g) {
            Ok(sol) => {
                let j = sol.value_at_target();
                t.record(j - previous);
                previous = j;
            }
            Err(_) => t.fail(),
        }
    }
    t.finish()
}

fn quadratic_boundary_cost() -> CheckResult {
    let mut t = Tracker::new("quadratic_boundary_cost", 0.05);
    let grid: Vec<f64> = (0..10)
        .map(|k| 1e-5 * 10f64.powf(2.0 * k as f64 / 9.0))
        .collect();
    for theta in [0.3, 0.5, 0.7] {
        match PoolParams::symmetric(theta, 0.9).map(|p| boundary_cost_order(&p, &grid)) {
            Ok(Ok(order)) => t.record((order.slope - 2.0).abs()),
            _ => t.fail(),
        }
    }
    t.finish()
}

/// Runs every check for the given market and penalty, with pools centred on
/// the target weight where a pool is needed.
pub fn run_checks(market: &MarketParams, penalty: &PenaltyParams) -> Vec<CheckResult> {
    let sols = solutions(market, penalty);
    vec![
        interval_ordering(),
        costs_nonnegative(),
        cost_representations_agree(),
        no_arbitrage_inside(),
        constant_product_reduction(),
        boundary_conditions(&sols),
        ode_residual(&sols),
        value_nonnegative(&sols),
        monotone_fee_limit(market, penalty),
        quadratic_boundary_cost(),
    ]
}
