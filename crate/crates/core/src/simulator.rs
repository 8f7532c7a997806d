//! Monte Carlo estimators of the discounted LP loss
//!
//! ```text
//! J(w) = E[ Σₙ e^{-n h r} (φ(w_{nh}) h + C(w_{nh}, ξ_{nh})) | w₀ = w ]
//! ```
//!
//! for the arbitrage-adjusted weight process. Between adjustments the
//! weight moves by one step of the discretised dynamics; when a step leaves
//! `[w_d, w_u]` the closed-form adjustment cost at the exited weight is
//! charged and the weight jumps to the post-arbitrage weight.
//!
//! Paths are independent: path `i` draws from its own ChaCha stream keyed by
//! the master seed, and per-path results are reduced in index order, so the
//! statistics do not depend on the number of worker threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::arbitrage::{NoArbInterval, PoolParams, WeightFormulas};
use crate::error::{Error, Result};
use crate::value::{drift_vol, penalty, DriftVol, MarketParams, PenaltyParams};

/// Simulated weights are kept inside `[WEIGHT_CLAMP, 1 - WEIGHT_CLAMP]`.
pub const WEIGHT_CLAMP: f64 = 1e-9;
/// Upper limit on steps per path.
pub const MAX_STEPS: u64 = 100_000_000;
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-6;

/// Steps between exact recomputations of the discount factor.
const DISCOUNT_RESYNC: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicsMode {
    /// `dw = w(1-w)(μ - r - wσ²) dt + w(1-w) σ dW`
    Full,
    /// `dw = a w dt + b w dW`, linearised around the target weight.
    Approximated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    Rademacher,
    Gaussian,
}

impl std::str::FromStr for DynamicsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "approximated" => Ok(Self::Approximated),
            _ => Err(Error::Config(format!(
                "unknown dynamics mode '{s}' (expected full or approximated)"
            ))),
        }
    }
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rademacher" => Ok(Self::Rademacher),
            "gaussian" => Ok(Self::Gaussian),
            _ => Err(Error::Config(format!(
                "unknown noise mode '{s}' (expected rademacher or gaussian)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub step_h: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    pub truncation_tol: f64,
    pub dynamics_mode: DynamicsMode,
    pub noise_mode: NoiseMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step_h: 1e-4,
            n_paths: 1000,
            master_seed: 42,
            truncation_tol: DEFAULT_TRUNCATION_TOL,
            dynamics_mode: DynamicsMode::Approximated,
            noise_mode: NoiseMode::Rademacher,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_h > 0.0 && self.step_h.is_finite()) {
            return Err(Error::Config(format!(
                "step h must be positive, got {}",
                self.step_h
            )));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("need at least one path".to_string()));
        }
        if !(self.truncation_tol > 0.0 && self.truncation_tol.is_finite()) {
            return Err(Error::Config(format!(
                "truncation tolerance must be positive, got {}",
                self.truncation_tol
            )));
        }
        Ok(())
    }
}

/// Monte Carlo summary. `j_estimate = penalty_estimate + cost_estimate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathStats {
    pub j_estimate: f64,
    pub std_error: f64,
    /// Discounted tracking-penalty part of the loss.
    pub penalty_estimate: f64,
    pub penalty_std_error: f64,
    /// Discounted arbitrage-cost part of the loss.
    pub cost_estimate: f64,
    pub n_up_events: u64,
    pub n_down_events: u64,
    pub horizon: f64,
    pub n_paths: usize,
}

/// One path's discounted loss split into its two sources.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PathOutcome {
    pub penalty: f64,
    pub cost: f64,
    pub n_up: u64,
    pub n_down: u64,
}

impl PathOutcome {
    pub fn loss(&self) -> f64 {
        self.penalty + self.cost
    }
}

/// Drift and diffusion of one weight step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightDynamics {
    Full { excess_return: f64, sigma: f64 },
    Approximated(DriftVol),
}

impl WeightDynamics {
    pub fn new(mode: DynamicsMode, market: &MarketParams, penalty: &PenaltyParams) -> Self {
        match mode {
            DynamicsMode::Full => WeightDynamics::Full {
                excess_return: market.mu - market.r,
                sigma: market.sigma,
            },
            DynamicsMode::Approximated => WeightDynamics::Approximated(drift_vol(penalty, market)),
        }
    }

    /// `(drift, diffusion)` coefficients at `w`.
    #[inline]
    fn coefficients(&self, w: f64) -> (f64, f64) {
        match *self {
            WeightDynamics::Full {
                excess_return,
                sigma,
            } => {
                let g = w * (1.0 - w);
                (g * (excess_return - w * sigma * sigma), g * sigma)
            }
            WeightDynamics::Approximated(DriftVol { a, b }) => (a * w, b * w),
        }
    }
}

/// One step of the unadjusted weight process, clamped to
/// `[WEIGHT_CLAMP, 1 - WEIGHT_CLAMP]`.
#[inline]
pub fn step_weight(w: f64, dynamics: &WeightDynamics, h: f64, noise: f64) -> f64 {
    step_with_root(w, dynamics, h, h.sqrt(), noise)
}

#[inline]
fn step_with_root(w: f64, dynamics: &WeightDynamics, h: f64, sqrt_h: f64, noise: f64) -> f64 {
    let (drift, diffusion) = dynamics.coefficients(w);
    let next = w + drift * h + diffusion * noise * sqrt_h;
    next.clamp(WEIGHT_CLAMP, 1.0 - WEIGHT_CLAMP)
}

/// Per-path random stream: ChaCha8 keyed by the master seed, stream number
/// equal to the path index.
pub fn path_rng(master_seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_index);
    rng
}

/// Validated inputs shared by every path of a run.
#[derive(Debug, Clone, Copy)]
pub struct SimModel {
    pub market: MarketParams,
    pub penalty: PenaltyParams,
    pub pool: PoolParams,
    formulas: WeightFormulas,
    interval: NoArbInterval,
}

impl SimModel {
    pub fn new(market: MarketParams, penalty: PenaltyParams, pool: PoolParams) -> Self {
        let formulas = WeightFormulas::new(&pool);
        Self {
            market,
            penalty,
            pool,
            formulas,
            interval: formulas.interval(),
        }
    }

    pub fn interval(&self) -> NoArbInterval {
        self.interval
    }

    fn check_start(&self, w0: f64) -> Result<()> {
        let i = self.interval();
        if !i.contains(w0) {
            return Err(Error::Precondition(format!(
                "start weight {w0} outside no-arbitrage interval [{}, {}]",
                i.w_d, i.w_u
            )));
        }
        Ok(())
    }

    /// Cost after an exit to `w` and the weight the arbitrage leaves behind,
    /// or `None` when `w` is inside the interval.
    #[inline]
    fn adjust(&self, w: f64) -> Option<(f64, f64, bool)> {
        let i = self.interval;
        if w > i.w_u {
            Some((
                self.formulas.cost_up(w),
                self.formulas.post_weight_up(w),
                true,
            ))
        } else if w < i.w_d {
            Some((
                self.formulas.cost_down(w),
                self.formulas.post_weight_down(w),
                false,
            ))
        } else {
            None
        }
    }

    /// Horizon `T` with `e^{-rT} cap / r <= tol`, where `cap` bounds the loss
    /// per unit time: `½λσ²` plus the largest exit cost, paid at most once per
    /// `dt` time units.
    fn horizon(&self, max_exit_cost: f64, dt: f64, tol: f64) -> f64 {
        let r = self.market.r;
        let cap = 0.5 * self.penalty.lambda * self.market.sigma.powi(2) + max_exit_cost / dt;
        (cap / (r * tol)).ln().max(0.0) / r
    }

    /// Largest adjustment cost over a coarse scan of weights reachable in a
    /// single step from either boundary.
    fn max_exit_cost(&self, dynamics: &WeightDynamics, h: f64, noise: NoiseMode) -> f64 {
        let i = self.interval();
        let noise_bound = match noise {
            NoiseMode::Rademacher => 1.0,
            NoiseMode::Gaussian => 8.0,
        };
        let reach = |w: f64| {
            let (drift, diffusion) = dynamics.coefficients(w);
            drift.abs() * h + diffusion.abs() * noise_bound * h.sqrt()
        };
        let (up_reach, down_reach) = (reach(i.w_u), reach(i.w_d));
        (1..=16)
            .map(|k| {
                let frac = k as f64 / 16.0;
                let up = (i.w_u + up_reach * frac).min(1.0 - WEIGHT_CLAMP);
                let down = (i.w_d - down_reach * frac).max(WEIGHT_CLAMP);
                let cu = if up > i.w_u {
                    self.formulas.cost_up(up)
                } else {
                    0.0
                };
                let cd = if down < i.w_d {
                    self.formulas.cost_down(down)
                } else {
                    0.0
                };
                cu.max(cd)
            })
            .fold(0.0, f64::max)
    }
}

/// Source of the ε draws.
trait Noise {
    fn draw(&mut self, rng: &mut ChaCha8Rng) -> f64;
}

struct Rademacher {
    bits: u64,
    left: u32,
}

impl Noise for Rademacher {
    #[inline]
    fn draw(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        if self.left == 0 {
            self.bits = rng.next_u64();
            self.left = 64;
        }
        let bit = self.bits & 1;
        self.bits >>= 1;
        self.left -= 1;
        if bit == 1 {
            1.0
        } else {
            -1.0
        }
    }
}

struct Gaussian;

impl Noise for Gaussian {
    #[inline]
    fn draw(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        rng.sample(StandardNormal)
    }
}

/// Path length in steps for a run, with the horizon it covers.
pub fn path_steps(cfg: &SimConfig, model: &SimModel) -> Result<(u64, f64)> {
    cfg.validate()?;
    let dynamics = WeightDynamics::new(cfg.dynamics_mode, &model.market, &model.penalty);
    let max_cost = model.max_exit_cost(&dynamics, cfg.step_h, cfg.noise_mode);
    let horizon = model.horizon(max_cost, cfg.step_h, cfg.truncation_tol);
    let steps = (horizon / cfg.step_h).ceil().max(1.0);
    if steps > MAX_STEPS as f64 {
        return Err(Error::Config(format!(
            "horizon {horizon:.3} needs {steps:e} steps of size {}, above the cap of {MAX_STEPS:e}",
            cfg.step_h
        )));
    }
    Ok((steps as u64, horizon))
}

/// Simulates one path from `w0` and returns its discounted loss.
pub fn simulate_path(
    w0: f64,
    cfg: &SimConfig,
    model: &SimModel,
    rng: &mut ChaCha8Rng,
) -> Result<PathOutcome> {
    model.check_start(w0)?;
    let (steps, _) = path_steps(cfg, model)?;
    let dynamics = WeightDynamics::new(cfg.dynamics_mode, &model.market, &model.penalty);
    Ok(match cfg.noise_mode {
        NoiseMode::Rademacher => run_path(
            w0,
            steps,
            cfg.step_h,
            model,
            &dynamics,
            rng,
            &mut Rademacher { bits: 0, left: 0 },
        ),
        NoiseMode::Gaussian => {
            run_path(w0, steps, cfg.step_h, model, &dynamics, rng, &mut Gaussian)
        }
    })
}

fn run_path<N: Noise>(
    w0: f64,
    steps: u64,
    h: f64,
    model: &SimModel,
    dynamics: &WeightDynamics,
    rng: &mut ChaCha8Rng,
    noise: &mut N,
) -> PathOutcome {
    let r = model.market.r;
    let w_star = model.penalty.w_star;
    let rho = (-r * h).exp();
    let sqrt_h = h.sqrt();
    let mut out = PathOutcome::default();
    let mut squared_dev = 0.0;
    let mut w = w0;
    let mut n = 0;
    while n < steps {
        let block_end = (n + DISCOUNT_RESYNC).min(steps);
        let mut disc = (-r * h * n as f64).exp();
        for _ in n..block_end {
            let d = w - w_star;
            squared_dev += disc * d * d;
            let mut next = step_with_root(w, dynamics, h, sqrt_h, noise.draw(rng));
            if let Some((cost, post, up)) = model.adjust(next) {
                out.cost += disc * cost;
                next = post;
                if up {
                    out.n_up += 1;
                } else {
                    out.n_down += 1;
                }
            }
            w = next;
            disc *= rho;
        }
        n = block_end;
    }
    // φ(w) h summed over steps; φ is quadratic so the constant factors out.
    out.penalty = 0.5 * model.penalty.lambda * model.market.sigma.powi(2) * squared_dev * h;
    out
}

/// Runs `n_paths` independent paths in parallel and reduces them in path
/// order.
pub fn estimate_value(
    w0: f64,
    cfg: &SimConfig,
    market: &MarketParams,
    penalty: &PenaltyParams,
    pool: &PoolParams,
) -> Result<PathStats> {
    let model = SimModel::new(*market, *penalty, *pool);
    model.check_start(w0)?;
    let (_, horizon) = path_steps(cfg, &model)?;
    let outcomes: Vec<PathOutcome> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(w0, cfg, &model, &mut path_rng(cfg.master_seed, i)))
        .collect::<Result<_>>()?;
    Ok(summarize(&outcomes, horizon))
}

fn summarize(outcomes: &[PathOutcome], horizon: f64) -> PathStats {
    let n = outcomes.len() as f64;
    let mut sum = 0.0;
    let mut pen = 0.0;
    let mut cost = 0.0;
    let (mut up, mut down) = (0, 0);
    for o in outcomes {
        sum += o.loss();
        pen += o.penalty;
        cost += o.cost;
        up += o.n_up;
        down += o.n_down;
    }
    let mean = sum / n;
    let pen_mean = pen / n;
    let std_error = |f: fn(&PathOutcome) -> f64, m: f64| {
        if outcomes.len() < 2 {
            return 0.0;
        }
        let ss: f64 = outcomes.iter().map(|o| (f(o) - m).powi(2)).sum();
        (ss / (n - 1.0) / n).sqrt()
    };
    PathStats {
        j_estimate: mean,
        std_error: std_error(|o| o.loss(), mean),
        penalty_estimate: pen_mean,
        penalty_std_error: std_error(|o| o.penalty, pen_mean),
        cost_estimate: cost / n,
        n_up_events: up,
        n_down_events: down,
        horizon,
        n_paths: outcomes.len(),
    }
}

/// Random-walk discretisation of the linearised weight process on the
/// equally spaced states `w_d = w_0 < … < w_N = w_u`.
///
/// From state `i` the walk moves one lattice step down with probability
/// `p_i = ½(1 - a w_i τ_i / ξ)` and up with `q_i = 1 - p_i`, taking time
/// `τ_i = ξ² / (b² w_i²)`. A step below `w_d` (above `w_u`) is an exit: the
/// arbitrage cost at `w_d - ξ` (`w_u + ξ`) is charged and the walk restarts
/// at the lattice state nearest to the post-arbitrage weight.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub xi: f64,
    pub states: Vec<f64>,
    pub tau: Vec<f64>,
    pub p_down: Vec<f64>,
    pub exit_cost_down: f64,
    pub exit_cost_up: f64,
    /// Lattice index the walk restarts from after each kind of exit.
    pub restart_down: usize,
    pub restart_up: usize,
}

impl Lattice {
    /// Builds the lattice whose spacing is the closest to `xi` that divides
    /// the interval evenly.
    pub fn new(xi: f64, model: &SimModel) -> Result<Self> {
        let i = model.interval();
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::Config(format!(
                "lattice step must be positive, got {xi}"
            )));
        }
        if !(i.width() > 0.0) {
            return Err(Error::Precondition(
                "lattice needs a non-empty no-arbitrage interval".to_string(),
            ));
        }
        let n = (i.width() / xi).round().max(1.0) as usize;
        let xi = i.width() / n as f64;
        let DriftVol { a, b } = drift_vol(&model.penalty, &model.market);
        let states: Vec<f64> = (0..=n).map(|k| i.w_d + xi * k as f64).collect();
        let tau: Vec<f64> = states.iter().map(|w| xi * xi / (b * b * w * w)).collect();
        let p_down: Vec<f64> = states
            .iter()
            .zip(&tau)
            .map(|(w, t)| 0.5 * (1.0 - a * w * t / xi))
            .collect();
        if let Some(p) = p_down.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Precondition(format!(
                "lattice step {xi} too large: transition probability {p} outside [0, 1]"
            )));
        }

        let f = &model.formulas;
        let below = (i.w_d - xi).max(WEIGHT_CLAMP);
        let above = (i.w_u + xi).min(1.0 - WEIGHT_CLAMP);
        let snap = |w: f64| (((w - i.w_d) / xi).round().max(0.0) as usize).min(n);
        Ok(Self {
            xi,
            exit_cost_down: f.cost_down(below),
            exit_cost_up: f.cost_up(above),
            restart_down: snap(f.post_weight_down(below)),
            restart_up: snap(f.post_weight_up(above)),
            states,
            tau,
            p_down,
        })
    }

    pub fn nearest(&self, w: f64) -> usize {
        let k = ((w - self.states[0]) / self.xi).round().max(0.0) as usize;
        k.min(self.states.len() - 1)
    }
}

/// Monte Carlo estimate of the loss under the lattice walk.
pub fn random_walk_estimate(
    w0: f64,
    lattice_xi: f64,
    cfg: &SimConfig,
    market: &MarketParams,
    penalty_params: &PenaltyParams,
    pool: &PoolParams,
) -> Result<PathStats> {
    cfg.validate()?;
    let model = SimModel::new(*market, *penalty_params, *pool);
    model.check_start(w0)?;
    let lattice = Lattice::new(lattice_xi, &model)?;
    let r = market.r;
    let max_cost = lattice.exit_cost_down.max(lattice.exit_cost_up);
    let min_tau = lattice.tau.iter().cloned().fold(f64::INFINITY, f64::min);
    let horizon = model.horizon(max_cost, min_tau, cfg.truncation_tol);
    if horizon / min_tau > MAX_STEPS as f64 {
        return Err(Error::Config(format!(
            "lattice horizon {horizon:.3} needs more than {MAX_STEPS:e} steps"
        )));
    }

    let penalty_rate: Vec<f64> = lattice
        .states
        .iter()
        .zip(&lattice.tau)
        .map(|(w, t)| penalty(*w, penalty_params, market.sigma) * t)
        .collect();
    let step_discount: Vec<f64> = lattice.tau.iter().map(|t| (-r * t).exp()).collect();
    // Threshold on a uniform u64 below which the walk steps down.
    let down_threshold: Vec<u64> = lattice
        .p_down
        .iter()
        .map(|p| (p * 2f64.powi(64)).min(u64::MAX as f64) as u64)
        .collect();
    let top = lattice.states.len() - 1;
    let start = lattice.nearest(w0);

    let outcomes: Vec<PathOutcome> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|path| {
            let mut rng = path_rng(cfg.master_seed, path);
            let mut out = PathOutcome::default();
            let mut k = start;
            let mut t = 0.0;
            let mut disc = 1.0;
            let mut steps = 0u64;
            while t < horizon {
                out.penalty += disc * penalty_rate[k];
                let down = rng.next_u64() < down_threshold[k];
                let next = if down {
                    if k == 0 {
                        out.cost += disc * lattice.exit_cost_down;
                        out.n_down += 1;
                        lattice.restart_down
                    } else {
                        k - 1
                    }
                } else if k == top {
                    out.cost += disc * lattice.exit_cost_up;
                    out.n_up += 1;
                    lattice.restart_up
                } else {
                    k + 1
                };
                t += lattice.tau[k];
                disc *= step_discount[k];
                steps += 1;
                if steps.is_multiple_of(DISCOUNT_RESYNC) {
                    disc = (-r * t).exp();
                }
                k = next;
            }
            out
        })
        .collect();
    Ok(summarize(&outcomes, horizon))
}

/// Local behaviour of the upper adjustment cost `C_u(w_u + ξ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryOrder {
    /// Least-squares slope of `ln C_u` against `ln ξ`.
    pub slope: f64,
    /// `κ` in `C_u ≈ κ ξ^slope`.
    pub coefficient: f64,
    /// `1 - w_u'(0)`, where `w_u(ξ)` is the post-arbitrage weight after an
    /// exit to `w_u + ξ`.
    pub smooth_pasting_factor: f64,
}

/// Fits the order at which the upper adjustment cost vanishes at `w_u`.
pub fn boundary_cost_order(pool: &PoolParams, xi_grid: &[f64]) -> Result<BoundaryOrder> {
    if pool.gamma2() == 1.0 {
        return Err(Error::Precondition(
            "gamma2 = 1 leaves no upper boundary to expand around".to_string(),
        ));
    }
    if xi_grid.len() < 8 {
        return Err(Error::Precondition(format!(
            "need at least 8 grid points, got {}",
            xi_grid.len()
        )));
    }
    if let Some(x) = xi_grid.iter().find(|x| !(1e-6..=1e-2).contains(*x)) {
        return Err(Error::Precondition(format!(
            "grid point {x} outside [1e-6, 1e-2]"
        )));
    }
    let f = WeightFormulas::new(pool);
    let w_u = f.interval().w_u;
    if w_u + xi_grid.iter().cloned().fold(0.0, f64::max) >= 1.0 {
        return Err(Error::Precondition("grid reaches past w = 1".to_string()));
    }
    let mut xs = Vec::with_capacity(xi_grid.len());
    let mut ys = Vec::with_capacity(xi_grid.len());
    for &xi in xi_grid {
        let c = f.cost_up(w_u + xi);
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Precondition(format!(
                "cost underflows at xi = {xi}: grid too small"
            )));
        }
        xs.push(xi.ln());
        ys.push(c.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let coefficient = (my - slope * mx).exp();

    // Richardson-extrapolated forward difference of w_u(ξ) at ξ = 0.
    let step = 1e-6;
    let diff = |h: f64| (f.post_weight_up(w_u + h) - w_u) / h;
    let derivative = 2.0 * diff(step / 2.0) - diff(step);
    Ok(BoundaryOrder {
        slope,
        coefficient,
        smooth_pasting_factor: 1.0 - derivative,
    })
}
