//! Arbitrage math for a two-asset geometric mean market maker with
//! direction-dependent fees.
//!
//! Coin α is the numéraire and coin β the risky asset with external price
//! `S`. The pool accepts a trade when the weighted geometric mean
//! `R_α^(1-θ) R_β^θ` of its reserves is preserved, with the incoming coin
//! scaled by its fee factor: `gamma1` when β flows in, `gamma2` when α
//! flows in.
//!
//! Everything that the value function needs is expressed in terms of the
//! LP portfolio weight `w = S R_β / (R_α + S R_β)`. Reserve-level routines
//! ([`optimal_trade`], [`brute_force_arb_profit`]) exist to cross-check the
//! weight formulas.

use serde::Serialize;

use crate::error::{domain, Error, Result};

/// Smallest argument passed to a logarithm inside the power evaluations.
const POW_FLOOR: f64 = 1e-300;
/// Weights handed to the cost and post-weight formulas must lie in
/// `[WEIGHT_GUARD, 1 - WEIGHT_GUARD]`.
pub const WEIGHT_GUARD: f64 = 1e-12;

#[inline]
fn ln_floor(x: f64) -> f64 {
    x.max(POW_FLOOR).ln()
}

/// Weight parameter and fee factors of a G3M.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoolParams {
    theta: f64,
    gamma1: f64,
    gamma2: f64,
}

impl PoolParams {
    pub fn new(theta: f64, gamma1: f64, gamma2: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return domain(format!("theta must lie in (0, 1), got {theta}"));
        }
        for (name, g) in [("gamma1", gamma1), ("gamma2", gamma2)] {
            if !(g > 0.0 && g <= 1.0) {
                return domain(format!("{name} must lie in (0, 1], got {g}"));
            }
        }
        Ok(Self {
            theta,
            gamma1,
            gamma2,
        })
    }

    /// Same fee in both trading directions.
    pub fn symmetric(theta: f64, gamma: f64) -> Result<Self> {
        Self::new(theta, gamma, gamma)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    pub fn is_fee_free(&self) -> bool {
        self.gamma1 == 1.0 && self.gamma2 == 1.0
    }

    pub fn no_arb_interval(&self) -> NoArbInterval {
        no_arb_interval(self)
    }
}

/// Reserves of the numéraire (α) and the risky coin (β).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoolState {
    r_alpha: f64,
    r_beta: f64,
}

impl PoolState {
    pub fn new(r_alpha: f64, r_beta: f64) -> Result<Self> {
        if !(r_alpha > 0.0 && r_alpha.is_finite()) || !(r_beta > 0.0 && r_beta.is_finite()) {
            return domain(format!(
                "reserves must be positive and finite, got ({r_alpha}, {r_beta})"
            ));
        }
        Ok(Self { r_alpha, r_beta })
    }

    /// Reserves realising weight `w` at price `price` with total value `wealth`.
    pub fn from_weight(w: Weight, price: f64, wealth: f64) -> Result<Self> {
        check_price(price)?;
        Self::new((1.0 - w.value()) * wealth, w.value() * wealth / price)
    }

    pub fn r_alpha(&self) -> f64 {
        self.r_alpha
    }

    pub fn r_beta(&self) -> f64 {
        self.r_beta
    }

    /// LP portfolio value in numéraire units.
    pub fn wealth(&self, price: f64) -> f64 {
        self.r_alpha + price * self.r_beta
    }

    /// Reserves after the pool-side changes of `outcome` are applied.
    pub fn apply(&self, outcome: &ArbitrageOutcome) -> Result<Self> {
        Self::new(
            self.r_alpha + outcome.delta_alpha,
            self.r_beta + outcome.delta_beta,
        )
    }
}

/// Fraction of LP portfolio value held in the risky coin.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Weight(f64);

impl Weight {
    pub fn new(w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return domain(format!("weight must lie in [0, 1], got {w}"));
        }
        Ok(Self(w))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// The fee-induced no-trade region `[w_d, w_u]` in weight space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoArbInterval {
    pub w_d: f64,
    pub w_u: f64,
}

impl NoArbInterval {
    /// Closed membership: weights exactly on an endpoint trigger no trade.
    pub fn contains(&self, w: f64) -> bool {
        w >= self.w_d && w <= self.w_u
    }

    pub fn width(&self) -> f64 {
        self.w_u - self.w_d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Weight inside the interval.
    None,
    /// `w < w_d`: the arbitrageur sells β to the pool and takes α out.
    Down,
    /// `w > w_u`: the arbitrageur sells α to the pool and takes β out.
    Up,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::None => "none",
            Direction::Down => "down",
            Direction::Up => "up",
        }
    }
}

/// Result of the profit-maximising arbitrage trade.
///
/// `delta_alpha` and `delta_beta` are signed changes of the pool reserves
/// (positive: the pool receives the coin).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArbitrageOutcome {
    pub direction: Direction,
    pub delta_alpha: f64,
    pub delta_beta: f64,
    pub cost_fraction: f64,
    pub post_weight: Weight,
}

impl ArbitrageOutcome {
    /// Arbitrageur profit in numéraire units: the value the pool loses.
    pub fn profit(&self, price: f64) -> f64 {
        -(self.delta_alpha + price * self.delta_beta)
    }
}

fn check_price(price: f64) -> Result<()> {
    if !(price > 0.0 && price.is_finite()) {
        return domain(format!("price must be positive and finite, got {price}"));
    }
    Ok(())
}

fn check_guarded(w: f64) -> Result<()> {
    if !(WEIGHT_GUARD..=1.0 - WEIGHT_GUARD).contains(&w) {
        return domain(format!(
            "weight {w} outside [{WEIGHT_GUARD}, 1 - {WEIGHT_GUARD}] accepted by the cost formulas"
        ));
    }
    Ok(())
}

pub fn portfolio_weight(state: &PoolState, price: f64) -> Result<Weight> {
    check_price(price)?;
    let value_beta = price * state.r_beta;
    Weight::new(value_beta / (state.r_alpha + value_beta))
}

pub fn no_arb_interval(params: &PoolParams) -> NoArbInterval {
    let PoolParams {
        theta,
        gamma1,
        gamma2,
    } = *params;
    NoArbInterval {
        w_d: gamma1 * theta / (1.0 - theta + gamma1 * theta),
        w_u: theta / (gamma2 * (1.0 - theta) + theta),
    }
}

/// Zero-fee marginal price of β in units of α.
pub fn pool_spot_price(state: &PoolState, params: &PoolParams) -> f64 {
    params.theta * state.r_alpha / ((1.0 - params.theta) * state.r_beta)
}

/// Precomputed constants for the weight-space formulas. The simulator
/// evaluates these once per boundary exit, so the constant parts of every
/// power are folded into logarithms here.
#[derive(Debug, Clone, Copy)]
pub(crate) struct WeightFormulas {
    theta: f64,
    gamma1: f64,
    gamma2: f64,
    interval: NoArbInterval,
    ln_gamma1: f64,
    ln_gamma2: f64,
    /// ln((1-θ)/θ)
    ln_odds: f64,
}

impl WeightFormulas {
    pub(crate) fn new(params: &PoolParams) -> Self {
        let theta = params.theta;
        Self {
            theta,
            gamma1: params.gamma1,
            gamma2: params.gamma2,
            interval: no_arb_interval(params),
            ln_gamma1: params.gamma1.ln(),
            ln_gamma2: params.gamma2.ln(),
            ln_odds: ((1.0 - theta) / theta).ln(),
        }
    }

    pub(crate) fn interval(&self) -> NoArbInterval {
        self.interval
    }

    /// C_d(w) = (1-w) - K (w/γ₁)^θ (1-w)^(1-θ) + w/γ₁, evaluated as
    /// `-(1-w) expm1(θu) - (w/γ₁) expm1(-(1-θ)u)` with
    /// `u = ln((1-θ) w / (γ₁ θ (1-w)))`, which is zero at `w_d`. The direct
    /// form loses all digits as `w → w_d`.
    #[inline]
    pub(crate) fn cost_down(&self, w: f64) -> f64 {
        let th = self.theta;
        let u = self.ln_odds + ln_floor(w) - ln_floor(1.0 - w) - self.ln_gamma1;
        (-(1.0 - w) * (th * u).exp_m1() - w / self.gamma1 * (-(1.0 - th) * u).exp_m1()).max(0.0)
    }

    /// C_u(w) = (1-w)/γ₂ - K ((1-w)/γ₂)^(1-θ) w^θ + w, evaluated as
    /// `-w expm1(-(1-θ)u) - ((1-w)/γ₂) expm1(θu)` with
    /// `u = ln(γ₂ (1-θ) w / (θ (1-w)))`, zero at `w_u`.
    #[inline]
    pub(crate) fn cost_up(&self, w: f64) -> f64 {
        let th = self.theta;
        let u = self.ln_gamma2 + self.ln_odds + ln_floor(w) - ln_floor(1.0 - w);
        (-w * (-(1.0 - th) * u).exp_m1() - (1.0 - w) / self.gamma2 * (th * u).exp_m1()).max(0.0)
    }

    #[inline]
    pub(crate) fn post_weight_down(&self, w: f64) -> f64 {
        let th = self.theta;
        let t = (1.0 - 1.0 / self.gamma1)
            * (th * self.ln_gamma1 + (1.0 - th) * (self.ln_odds + ln_floor(w) - ln_floor(1.0 - w)))
                .exp();
        (1.0 + t) / (1.0 / th + t)
    }

    #[inline]
    pub(crate) fn post_weight_up(&self, w: f64) -> f64 {
        let th = self.theta;
        let t = (1.0 - 1.0 / self.gamma2)
            * ((1.0 - th) * (self.ln_gamma2 + self.ln_odds)
                + th * (ln_floor(1.0 - w) - ln_floor(w)))
            .exp();
        1.0 / (1.0 / th + t)
    }
}

/// LP cost, as a fraction of pre-trade wealth, of the arbitrage triggered at
/// `w <= w_d`. Vanishes at `w_d`.
pub fn cost_down(w: Weight, params: &PoolParams) -> Result<f64> {
    let f = WeightFormulas::new(params);
    let w = w.value();
    if w > f.interval.w_d {
        return Err(Error::Precondition(format!(
            "cost_down needs w <= w_d = {}, got {w}",
            f.interval.w_d
        )));
    }
    check_guarded(w)?;
    Ok(f.cost_down(w))
}

/// LP cost, as a fraction of pre-trade wealth, of the arbitrage triggered at
/// `w >= w_u`. Vanishes at `w_u`.
pub fn cost_up(w: Weight, params: &PoolParams) -> Result<f64> {
    let f = WeightFormulas::new(params);
    let w = w.value();
    if w < f.interval.w_u {
        return Err(Error::Precondition(format!(
            "cost_up needs w >= w_u = {}, got {w}",
            f.interval.w_u
        )));
    }
    check_guarded(w)?;
    Ok(f.cost_up(w))
}

/// Portfolio weight after the arbitrageur has traded against `w <= w_d`.
pub fn post_weight_down(w: Weight, params: &PoolParams) -> Result<Weight> {
    let f = WeightFormulas::new(params);
    let w = w.value();
    if w > f.interval.w_d {
        return Err(Error::Precondition(format!(
            "post_weight_down needs w <= w_d = {}, got {w}",
            f.interval.w_d
        )));
    }
    check_guarded(w)?;
    Weight::new(f.post_weight_down(w))
}

/// Portfolio weight after the arbitrageur has traded against `w >= w_u`.
pub fn post_weight_up(w: Weight, params: &PoolParams) -> Result<Weight> {
    let f = WeightFormulas::new(params);
    let w = w.value();
    if w < f.interval.w_u {
        return Err(Error::Precondition(format!(
            "post_weight_up needs w >= w_u = {}, got {w}",
            f.interval.w_u
        )));
    }
    check_guarded(w)?;
    Weight::new(f.post_weight_up(w))
}

/// Profit-maximising arbitrage against the pool at external price `price`.
///
/// Inside the closed interval `[w_d, w_u]` no trade is profitable and a zero
/// outcome is returned. Outside, the reserve changes come from the
/// first-order condition of the arbitrage problem while the cost and the
/// post-trade weight come from the weight-space formulas; the two routes
/// agree, which the tests check.
pub fn optimal_trade(
    state: &PoolState,
    price: f64,
    params: &PoolParams,
) -> Result<ArbitrageOutcome> {
    let w = portfolio_weight(state, price)?;
    let interval = params.no_arb_interval();
    let theta = params.theta;
    let (ra, rb) = (state.r_alpha, state.r_beta);

    if interval.contains(w.value()) {
        return Ok(ArbitrageOutcome {
            direction: Direction::None,
            delta_alpha: 0.0,
            delta_beta: 0.0,
            cost_fraction: 0.0,
            post_weight: w,
        });
    }

    // Each branch works with the log of the ratio between the pool's
    // fee-adjusted price and the market price, which vanishes on the
    // boundary; expm1 keeps small trades accurate.
    if w.value() < interval.w_d {
        let g = params.gamma1;
        let ln_q = ((1.0 - theta) * price * rb / (g * theta * ra)).ln();
        // α paid out by the pool and β tendered by the arbitrageur.
        let alpha_out = -ra * (theta * ln_q).exp_m1();
        let beta_in = rb / g * (-(1.0 - theta) * ln_q).exp_m1();
        Ok(ArbitrageOutcome {
            direction: Direction::Down,
            delta_alpha: -alpha_out,
            delta_beta: beta_in,
            cost_fraction: cost_down(w, params)?,
            post_weight: post_weight_down(w, params)?,
        })
    } else {
        let g = params.gamma2;
        let ln_q = (g * price * rb * (1.0 - theta) / (theta * ra)).ln();
        let alpha_in = ra * (theta * ln_q).exp_m1() / g;
        let beta_out = -rb * (-(1.0 - theta) * ln_q).exp_m1();
        Ok(ArbitrageOutcome {
            direction: Direction::Up,
            delta_alpha: alpha_in,
            delta_beta: -beta_out,
            cost_fraction: cost_up(w, params)?,
            post_weight: post_weight_up(w, params)?,
        })
    }
}

/// Maximum of the arbitrage objective found by direct grid evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteForceArb {
    pub max_profit: f64,
    /// Pool-side signed α change at the best grid point (negative when the
    /// pool pays α out).
    pub argmax_delta_alpha: f64,
    pub direction: Direction,
    /// Spacing of the finest grid around the returned argmax.
    pub resolution: f64,
}

/// Test oracle: maximises the arbitrageur's profit by evaluating the raw
/// objective on a composite linear and geometric grid in each trade
/// direction, then refining twice around the best point at 100x finer
/// spacing. Uses nothing from the closed-form trade.
pub fn brute_force_arb_profit(
    state: &PoolState,
    price: f64,
    params: &PoolParams,
    grid_points: usize,
) -> Result<BruteForceArb> {
    check_price(price)?;
    let n = grid_points.max(10);
    let (ra, rb) = (state.r_alpha, state.r_beta);
    let exponent = (1.0 - params.theta) / params.theta;

    // Remove x of α, tender just enough β to keep the invariant.
    let down = |x: f64| {
        let beta_in = rb / params.gamma1 * (-exponent * (-x / ra).ln_1p()).exp_m1();
        x - price * beta_in
    };
    // Tender y of α, remove the β the invariant releases.
    let up = |y: f64| {
        let beta_out = -rb * (-exponent * (params.gamma2 * y / ra).ln_1p()).exp_m1();
        price * beta_out - y
    };

    let (down_x, down_p, down_res) = grid_maximise(down, ra * (1.0 - 1e-9), n);
    let (up_y, up_p, up_res) = grid_maximise(up, price * rb, n);

    let best = if up_p > down_p {
        BruteForceArb {
            max_profit: up_p,
            argmax_delta_alpha: up_y,
            direction: Direction::Up,
            resolution: up_res,
        }
    } else {
        BruteForceArb {
            max_profit: down_p,
            argmax_delta_alpha: -down_x,
            direction: Direction::Down,
            resolution: down_res,
        }
    };
    if best.max_profit <= 0.0 {
        return Ok(BruteForceArb {
            max_profit: best.max_profit.max(0.0),
            argmax_delta_alpha: 0.0,
            direction: Direction::None,
            resolution: best.resolution,
        });
    }
    Ok(best)
}

/// Returns `(argmax, max, final_spacing)` of `f` on `[0, upper]`.
fn grid_maximise(f: impl Fn(f64) -> f64, upper: f64, n: usize) -> (f64, f64, f64) {
    let mut grid: Vec<f64> = (0..=n).map(|i| upper * i as f64 / n as f64).collect();
    // Geometric part resolves optima close to the null trade.
    let lo = upper * 1e-12;
    let ratio = (upper / lo).powf(1.0 / (n - 1) as f64);
    grid.extend((0..n).map(|i| lo * ratio.powi(i as i32)));
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();

    let (mut best_x, mut best_v, mut spacing) = scan(&f, &grid);
    for _ in 0..2 {
        let refined = spacing / 100.0;
        let a = (best_x - spacing).max(0.0);
        let b = (best_x + spacing).min(upper);
        let m = ((b - a) / refined).round().max(1.0) as usize;
        let fine: Vec<f64> = (0..=m).map(|i| a + (b - a) * i as f64 / m as f64).collect();
        let (x, v, _) = scan(&f, &fine);
        if v >= best_v {
            best_x = x;
            best_v = v;
        }
        spacing = (b - a) / m as f64;
    }
    (best_x, best_v, spacing)
}

/// Best point of a sorted grid and the larger of its two neighbour gaps.
fn scan(f: &impl Fn(f64) -> f64, grid: &[f64]) -> (f64, f64, f64) {
    let mut idx = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, &x) in grid.iter().enumerate() {
        let v = f(x);
        if v > best {
            best = v;
            idx = i;
        }
    }
    let left = if idx > 0 {
        grid[idx] - grid[idx - 1]
    } else {
        0.0
    };
    let right = if idx + 1 < grid.len() {
        grid[idx + 1] - grid[idx]
    } else {
        0.0
    };
    (grid[idx], best, left.max(right))
}

/// Closed forms for the constant-product pool (θ = 1/2) with one fee factor
/// `gamma` in both directions. Used as an independent cross-check of the
/// general weighted formulas.
pub mod constant_product {
    /// Relative arbitrage loss for `w > 1/(1+γ)`.
    pub fn cost_up(w: f64, gamma: f64) -> f64 {
        (((1.0 - w) / gamma).sqrt() - w.sqrt()).powi(2)
    }

    /// Relative arbitrage loss for `w < γ/(1+γ)`.
    pub fn cost_down(w: f64, gamma: f64) -> f64 {
        ((1.0 - w).sqrt() - (w / gamma).sqrt()).powi(2)
    }

    pub fn post_weight_up(w: f64, gamma: f64) -> f64 {
        1.0 / (2.0 + (gamma * (1.0 - w) / w).sqrt() * (1.0 - 1.0 / gamma))
    }

    pub fn post_weight_down(w: f64, gamma: f64) -> f64 {
        let s = (gamma * w / (1.0 - w)).sqrt() * (1.0 - 1.0 / gamma);
        (s + 1.0) / (s + 2.0)
    }
}
