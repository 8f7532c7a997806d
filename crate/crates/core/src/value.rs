//! Closed-form discounted LP loss on the no-arbitrage interval.
//!
//! Inside `(w_d, w_u)` the weight follows `dw = a w dt + b w dW` (the
//! small-fee linearisation around the target weight) and the loss `J`
//! solves the Euler–Cauchy equation
//!
//! ```text
//! a w J'(w) + ½ b² w² J''(w) + φ(w) - r J(w) = 0,   φ(w) = ½ λ σ² (w - w*)²
//! ```
//!
//! with `J'(w_d) = J'(w_u) = 0`. Its solution is a quadratic particular term
//! plus `C₁ w^z₁ + C₂ w^z₂`, where `z₁ > 0 > z₂` are the characteristic roots.

use rayon::prelude::*;
use serde::Serialize;

use crate::arbitrage::{NoArbInterval, PoolParams};
use crate::error::{domain, Error, Result};

/// Distance from a pole of the particular solution below which parameters
/// are rejected.
pub const POLE_TOL: f64 = 1e-12;
/// Largest accepted condition number of the boundary system.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketParams {
    pub mu: f64,
    pub r: f64,
    pub sigma: f64,
}

impl MarketParams {
    pub fn new(mu: f64, r: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return domain(format!("mu must be finite, got {mu}"));
        }
        if !(r > 0.0 && r.is_finite()) {
            return domain(format!("discount rate r must be positive, got {r}"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return domain(format!("sigma must be positive, got {sigma}"));
        }
        Ok(Self { mu, r, sigma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenaltyParams {
    pub lambda: f64,
    pub w_star: f64,
}

impl PenaltyParams {
    /// `lambda = 0` is accepted: it switches the tracking penalty off, which
    /// the simulator uses to isolate adjustment costs.
    pub fn new(lambda: f64, w_star: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return domain(format!("lambda must be non-negative, got {lambda}"));
        }
        if !(w_star > 0.0 && w_star < 1.0) {
            return domain(format!("target weight must lie in (0, 1), got {w_star}"));
        }
        Ok(Self { lambda, w_star })
    }
}

/// Drift and volatility of the linearised weight process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftVol {
    pub a: f64,
    pub b: f64,
}

/// Growth-optimal weight `(μ - r) / σ²`; must be interior.
pub fn target_weight(market: &MarketParams) -> Result<f64> {
    let w = (market.mu - market.r) / (market.sigma * market.sigma);
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::Config(format!(
            "target weight (mu - r)/sigma^2 = {w} is not in (0, 1)"
        )));
    }
    Ok(w)
}

pub fn penalty(w: f64, penalty: &PenaltyParams, sigma: f64) -> f64 {
    let d = w - penalty.w_star;
    0.5 * penalty.lambda * sigma * sigma * d * d
}

pub fn drift_vol(penalty: &PenaltyParams, market: &MarketParams) -> DriftVol {
    let ws = penalty.w_star;
    let s2 = market.sigma * market.sigma;
    DriftVol {
        a: (1.0 - ws) * (market.mu - market.r - ws * s2),
        b: (1.0 - ws) * market.sigma,
    }
}

/// Roots of `½b² z² + (a - ½b²) z - r = 0`, larger first.
pub fn characteristic_roots(dv: &DriftVol, r: f64) -> Result<(f64, f64)> {
    let b2 = dv.b * dv.b;
    if !(b2 > 0.0) {
        return Err(Error::Degenerate(
            "effective weight volatility b is zero".to_string(),
        ));
    }
    let half = 0.5 * b2 - dv.a;
    let disc = half * half + 2.0 * b2 * r;
    assert!(disc > 0.0, "repeated roots cannot occur for r > 0, b > 0");
    let sq = disc.sqrt();
    // Take the root without cancellation directly and the other from the
    // product z₁ z₂ = -2r/b².
    let product = -2.0 * r / b2;
    if half >= 0.0 {
        let z1 = (half + sq) / b2;
        Ok((z1, product / z1))
    } else {
        let z2 = (half - sq) / b2;
        Ok((product / z2, z2))
    }
}

/// Quadratic particular solution
/// `½λσ² [w²/(r-2a-b²) - 2w w*/(r-a) + w*²/r]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particular {
    scale: f64,
    inv_quad: f64,
    inv_lin: f64,
    inv_r: f64,
    w_star: f64,
}

impl Particular {
    pub fn new(dv: &DriftVol, market: &MarketParams, penalty: &PenaltyParams) -> Result<Self> {
        let r = market.r;
        let quad = r - 2.0 * dv.a - dv.b * dv.b;
        let lin = r - dv.a;
        if quad.abs() < POLE_TOL {
            return Err(Error::Pole(format!(
                "r - 2a - b^2 = {quad:e} (r = {r}, a = {}, b = {})",
                dv.a, dv.b
            )));
        }
        if lin.abs() < POLE_TOL {
            return Err(Error::Pole(format!(
                "r - a = {lin:e} (r = {r}, a = {})",
                dv.a
            )));
        }
        Ok(Self {
            scale: 0.5 * penalty.lambda * market.sigma * market.sigma,
            inv_quad: 1.0 / quad,
            inv_lin: 1.0 / lin,
            inv_r: 1.0 / r,
            w_star: penalty.w_star,
        })
    }

    pub fn value(&self, w: f64) -> f64 {
        let ws = self.w_star;
        self.scale * (w * w * self.inv_quad - 2.0 * w * ws * self.inv_lin + ws * ws * self.inv_r)
    }

    pub fn d1(&self, w: f64) -> f64 {
        self.scale * (2.0 * w * self.inv_quad - 2.0 * self.w_star * self.inv_lin)
    }

    pub fn d2(&self, _w: f64) -> f64 {
        self.scale * 2.0 * self.inv_quad
    }
}

/// Imposes `J'(w_d) = J'(w_u) = 0` and returns `(C₁, C₂)`.
pub fn solve_boundary_coeffs(
    interval: &NoArbInterval,
    particular: &Particular,
    roots: (f64, f64),
) -> Result<(f64, f64)> {
    let (wd, wu) = (interval.w_d, interval.w_u);
    if !(wd < wu) {
        return Err(Error::UndefinedAtZeroFee);
    }
    let (z1, z2) = roots;
    if z1 == z2 {
        return Err(Error::Degenerate(
            "characteristic roots coincide".to_string(),
        ));
    }
    let m11 = z1 * wd.powf(z1 - 1.0);
    let m12 = z2 * wd.powf(z2 - 1.0);
    let m21 = z1 * wu.powf(z1 - 1.0);
    let m22 = z2 * wu.powf(z2 - 1.0);
    // det = m11 m22 - m12 m21 = m11 m22 (1 - (w_u/w_d)^(z1 - z2)); the
    // factored form keeps full precision for narrow intervals.
    let log_ratio = ((wu - wd) / wd).ln_1p();
    let det = -m11 * m22 * ((z1 - z2) * log_ratio).exp_m1();
    if det == 0.0 || !det.is_finite() {
        return Err(Error::Degenerate(format!(
            "boundary system singular for interval [{wd}, {wu}]"
        )));
    }
    let norm = (m11.abs() + m12.abs()).max(m21.abs() + m22.abs());
    let inv_norm = (m22.abs() + m12.abs()).max(m21.abs() + m11.abs()) / det.abs();
    let condition = norm * inv_norm;
    if condition > MAX_CONDITION {
        return Err(Error::Degenerate(format!(
            "boundary system condition number {condition:e} exceeds {MAX_CONDITION:e}"
        )));
    }
    let rhs1 = -particular.d1(wd);
    let rhs2 = -particular.d1(wu);
    let c1 = (rhs1 * m22 - m12 * rhs2) / det;
    let c2 = (m11 * rhs2 - m21 * rhs1) / det;
    Ok((c1, c2))
}

/// Everything needed to evaluate `J` and its derivatives for one fee pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueSolution {
    pub z1: f64,
    pub z2: f64,
    pub c1: f64,
    pub c2: f64,
    pub drift_vol: DriftVol,
    pub market: MarketParams,
    pub penalty: PenaltyParams,
    pub interval: NoArbInterval,
    pub gamma1: f64,
    pub gamma2: f64,
    particular: Particular,
}

impl ValueSolution {
    /// Solves the boundary problem on the interval of `pool`.
    pub fn solve(
        market: &MarketParams,
        penalty: &PenaltyParams,
        pool: &PoolParams,
    ) -> Result<Self> {
        if pool.is_fee_free() {
            return Err(Error::UndefinedAtZeroFee);
        }
        let drift_vol = drift_vol(penalty, market);
        let (z1, z2) = characteristic_roots(&drift_vol, market.r)?;
        let particular = Particular::new(&drift_vol, market, penalty)?;
        let interval = pool.no_arb_interval();
        let (c1, c2) = solve_boundary_coeffs(&interval, &particular, (z1, z2))?;
        Ok(Self {
            z1,
            z2,
            c1,
            c2,
            drift_vol,
            market: *market,
            penalty: *penalty,
            interval,
            gamma1: pool.gamma1(),
            gamma2: pool.gamma2(),
            particular,
        })
    }

    /// Same solution with the homogeneous coefficients replaced.
    pub fn with_coefficients(&self, c1: f64, c2: f64) -> Self {
        Self { c1, c2, ..*self }
    }

    pub fn particular(&self) -> &Particular {
        &self.particular
    }

    fn check(w: f64) -> Result<()> {
        if !(w > 0.0 && w.is_finite()) {
            return domain(format!("value function needs w > 0, got {w}"));
        }
        Ok(())
    }

    pub fn value(&self, w: f64) -> Result<f64> {
        Self::check(w)?;
        Ok(self.particular.value(w) + self.c1 * w.powf(self.z1) + self.c2 * w.powf(self.z2))
    }

    pub fn value_d1(&self, w: f64) -> Result<f64> {
        Self::check(w)?;
        let (z1, z2) = (self.z1, self.z2);
        Ok(self.particular.d1(w)
            + self.c1 * z1 * w.powf(z1 - 1.0)
            + self.c2 * z2 * w.powf(z2 - 1.0))
    }

    pub fn value_d2(&self, w: f64) -> Result<f64> {
        Self::check(w)?;
        let (z1, z2) = (self.z1, self.z2);
        Ok(self.particular.d2(w)
            + self.c1 * z1 * (z1 - 1.0) * w.powf(z1 - 2.0)
            + self.c2 * z2 * (z2 - 1.0) * w.powf(z2 - 2.0))
    }

    /// Left-hand side of the value ODE at `w`; zero for an exact solution.
    pub fn ode_residual(&self, w: f64) -> Result<f64> {
        let DriftVol { a, b } = self.drift_vol;
        Ok(a * w * self.value_d1(w)?
            + 0.5 * b * b * w * w * self.value_d2(w)?
            + penalty(w, &self.penalty, self.market.sigma)
            - self.market.r * self.value(w)?)
    }

    /// `(J''(w_d), J''(w_u))`; both vanish at an optimal fee pair.
    pub fn optimality_gap(&self) -> (f64, f64) {
        (
            self.value_d2(self.interval.w_d).unwrap_or(f64::NAN),
            self.value_d2(self.interval.w_u).unwrap_or(f64::NAN),
        )
    }

    pub fn value_at_target(&self) -> f64 {
        self.value(self.penalty.w_star).unwrap_or(f64::NAN)
    }
}

/// Fixed inputs of a fee sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepContext {
    pub market: MarketParams,
    pub penalty: PenaltyParams,
    /// Pool weight parameter; the interval is built around it.
    pub theta: f64,
}

impl SweepContext {
    pub fn solve(&self, gamma1: f64, gamma2: f64) -> Result<ValueSolution> {
        let pool = PoolParams::new(self.theta, gamma1, gamma2)?;
        ValueSolution::solve(&self.market, &self.penalty, &pool)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepValues {
    pub c1: f64,
    pub c2: f64,
    pub j_at_wstar: f64,
    pub j11_wd: f64,
    pub j11_wu: f64,
}

/// One point of a symmetric sweep `γ₁ = γ₂ = γ`. `values` is `None` at
/// `γ = 1`, where the boundary system has no solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub w_d: f64,
    pub w_u: f64,
    pub z1: f64,
    pub z2: f64,
    pub values: Option<SweepValues>,
}

/// Evaluates the closed form on every grid point, rows ordered by
/// ascending `γ`.
pub fn fee_sweep(gamma_grid: &[f64], ctx: &SweepContext) -> Result<Vec<SweepRow>> {
    let mut grid = gamma_grid.to_vec();
    for &g in &grid {
        if !(g > 0.0 && g <= 1.0) {
            return domain(format!("sweep fee factor must lie in (0, 1], got {g}"));
        }
    }
    grid.sort_by(|a, b| a.total_cmp(b));
    let dv = drift_vol(&ctx.penalty, &ctx.market);
    let (z1, z2) = characteristic_roots(&dv, ctx.market.r)?;
    Particular::new(&dv, &ctx.market, &ctx.penalty)?;

    grid.par_iter()
        .map(|&gamma| {
            let pool = PoolParams::symmetric(ctx.theta, gamma)?;
            let interval = pool.no_arb_interval();
            let values = if gamma == 1.0 {
                None
            } else {
                let sol = ValueSolution::solve(&ctx.market, &ctx.penalty, &pool)?;
                let (j11_wd, j11_wu) = sol.optimality_gap();
                Some(SweepValues {
                    c1: sol.c1,
                    c2: sol.c2,
                    j_at_wstar: sol.value_at_target(),
                    j11_wd,
                    j11_wu,
                })
            };
            Ok(SweepRow {
                gamma,
                w_d: interval.w_d,
                w_u: interval.w_u,
                z1,
                z2,
                values,
            })
        })
        .collect()
}

/// `n` fee factors whose fees `1 - γ` are geometrically spaced between
/// `1 - gamma_min` and `1 - gamma_max`, ascending in `γ`.
pub fn geometric_gamma_grid(gamma_min: f64, gamma_max: f64, n: usize) -> Result<Vec<f64>> {
    if !(gamma_min > 0.0 && gamma_min < gamma_max && gamma_max < 1.0) || n < 2 {
        return domain(format!(
            "need 0 < gamma_min < gamma_max < 1 and n >= 2, got ({gamma_min}, {gamma_max}, {n})"
        ));
    }
    let (hi, lo) = ((1.0 - gamma_min).ln(), (1.0 - gamma_max).ln());
    let mut grid: Vec<f64> = (0..n)
        .map(|i| 1.0 - (hi + (lo - hi) * i as f64 / (n - 1) as f64).exp())
        .collect();
    grid[0] = gamma_min;
    grid[n - 1] = gamma_max;
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeeOptimum {
    pub gamma1: f64,
    pub gamma2: f64,
    pub j_at_wstar: f64,
    /// True when the minimum sits at the largest `γ < 1` of the grid in both
    /// directions, i.e. the optimum is the zero-fee limit.
    pub at_zero_fee_edge: bool,
}

/// Minimises `J(w*)` over the product grid `γ₁ × γ₂`, both taken from
/// [`geometric_gamma_grid`].
pub fn optimize_fees(
    ctx: &SweepContext,
    gamma_min: f64,
    gamma_max: f64,
    resolution: usize,
) -> Result<FeeOptimum> {
    let grid = geometric_gamma_grid(gamma_min, gamma_max, resolution)?;
    let pairs: Vec<(f64, f64)> = grid
        .iter()
        .flat_map(|&g1| grid.iter().map(move |&g2| (g1, g2)))
        .collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(g1, g2)| ctx.solve(g1, g2).map(|s| s.value_at_target()))
        .collect::<Result<_>>()?;
    let (idx, &j) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is non-empty");
    let (gamma1, gamma2) = pairs[idx];
    Ok(FeeOptimum {
        gamma1,
        gamma2,
        j_at_wstar: j,
        at_zero_fee_edge: gamma1 == gamma_max && gamma2 == gamma_max,
    })
}
