use clap::{Args, Subcommand};
use serde::Serialize;

use g3m_fee_lab::arbitrage::{optimal_trade, PoolState};
use g3m_fee_lab::simulator::{
    estimate_value, random_walk_estimate, DynamicsMode, NoiseMode, PathStats, SimConfig,
};
use g3m_fee_lab::validation::run_checks;
use g3m_fee_lab::value::{fee_sweep, geometric_gamma_grid, optimize_fees, SweepContext};
use g3m_fee_lab::{ValueSolution, Weight};

use crate::config::{resolve, CommonArgs, Format, Resolved};
use crate::emit;
use crate::CliError;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// No-arbitrage weight interval of the pool.
    Interval(IntervalArgs),
    /// Optimal arbitrage trade at a given portfolio weight.
    Arb(ArbArgs),
    /// Closed-form expected discounted loss at one weight.
    Value(ValueArgs),
    /// Closed-form loss over a grid of symmetric fee factors.
    Sweep(SweepArgs),
    /// Grid search for the fee pair minimising the loss at the target.
    Optimize(OptimizeArgs),
    /// Monte Carlo estimate of the loss.
    Simulate(SimulateArgs),
    /// Runs the property suite; exits 3 if any check fails.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct IntervalArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ArbArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Portfolio weight of the risky coin at the market price.
    #[arg(long)]
    w: Option<f64>,
    /// Market price of the risky coin.
    #[arg(long)]
    price: Option<f64>,
    /// Pool value in numeraire units.
    #[arg(long)]
    wealth: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ValueArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Weight to evaluate at; defaults to the target weight.
    #[arg(long)]
    w: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    gamma_min: Option<f64>,
    #[arg(long)]
    gamma_max: Option<f64>,
    /// Number of grid points, with fees 1 - gamma geometrically spaced.
    #[arg(long)]
    points: Option<usize>,
    /// Explicit comma-separated grid; overrides the range.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    gamma_min: Option<f64>,
    #[arg(long)]
    gamma_max: Option<f64>,
    /// Grid points per fee direction.
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Starting weight; defaults to the target weight.
    #[arg(long)]
    w0: Option<f64>,
    /// Time step.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tail tolerance that sets the simulated horizon.
    #[arg(long)]
    tol: Option<f64>,
    /// full or approximated.
    #[arg(long)]
    dynamics: Option<DynamicsMode>,
    /// rademacher or gaussian.
    #[arg(long)]
    noise: Option<NoiseMode>,
    /// euler (time stepping) or lattice (random walk).
    #[arg(long)]
    method: Option<Method>,
    /// Lattice spacing; defaults to 1/32 of the interval width.
    #[arg(long)]
    xi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Lattice,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as clap::ValueEnum>::from_str(s, false)
    }
}

pub const DEFAULT_PATHS: usize = 10_000;
pub const DEFAULT_SWEEP_POINTS: usize = 50;

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Interval(a) => interval(a),
        Command::Arb(a) => arb(a),
        Command::Value(a) => value(a),
        Command::Sweep(a) => sweep(a),
        Command::Optimize(a) => optimize(a),
        Command::Simulate(a) => simulate(a),
        Command::Validate(a) => validate(a),
    }
}

fn finish(text: String, cfg: &Resolved) -> Result<(), CliError> {
    emit::write(&text, cfg.output.as_deref())
}

#[derive(Serialize)]
struct IntervalRecord {
    theta: f64,
    gamma1: f64,
    gamma2: f64,
    #[serde(rename = "w_D")]
    w_d: f64,
    #[serde(rename = "w_U")]
    w_u: f64,
}

fn interval(a: IntervalArgs) -> Result<(), CliError> {
    let cfg = resolve(&a.common)?;
    let pool = cfg.model.pool;
    let i = pool.no_arb_interval();
    let rec = IntervalRecord {
        theta: pool.theta(),
        gamma1: pool.gamma1(),
        gamma2: pool.gamma2(),
        w_d: i.w_d,
        w_u: i.w_u,
    };
    finish(
        emit::record(&rec, cfg.format.unwrap_or(Format::Json))?,
        &cfg,
    )
}

#[derive(Serialize)]
struct ArbRecord {
    w: f64,
    theta: f64,
    gamma1: f64,
    gamma2: f64,
    price: f64,
    wealth: f64,
    #[serde(rename = "w_D")]
    w_d: f64,
    #[serde(rename = "w_U")]
    w_u: f64,
    direction: &'static str,
    cost_fraction: f64,
    post_weight: f64,
    delta_alpha: f64,
    delta_beta: f64,
    profit: f64,
}

fn arb(a: ArbArgs) -> Result<(), CliError> {
    let cfg = resolve(&a.common)?;
    let w = cfg
        .file
        .layer(a.w, "w")?
        .ok_or_else(|| CliError::Usage("arb needs --w".to_string()))?;
    let price = cfg.file.pick(a.price, "price", 1.0)?;
    let wealth = cfg.file.pick(a.wealth, "wealth", 1.0)?;
    let pool = cfg.model.pool;
    let state = PoolState::from_weight(Weight::new(w)?, price, wealth)?;
    let out = optimal_trade(&state, price, &pool)?;
    let i = pool.no_arb_interval();
    let rec = ArbRecord {
        w,
        theta: pool.theta(),
        gamma1: pool.gamma1(),
        gamma2: pool.gamma2(),
        price,
        wealth,
        w_d: i.w_d,
        w_u: i.w_u,
        direction: out.direction.as_str(),
        cost_fraction: out.cost_fraction,
        post_weight: out.post_weight.value(),
        delta_alpha: out.delta_alpha,
        delta_beta: out.delta_beta,
        profit: out.profit(price),
    };
    finish(
        emit::record(&rec, cfg.format.unwrap_or(Format::Json))?,
        &cfg,
    )
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct ValueRecord {
    mu: f64,
    r: f64,
    sigma: f64,
    lambda: f64,
    w_star: f64,
    theta: f64,
    gamma1: f64,
    gamma2: f64,
    w_D: f64,
    w_U: f64,
    a: f64,
    b: f64,
    z1: f64,
    z2: f64,
    C1: f64,
    C2: f64,
    w: f64,
    J: f64,
    J_w: f64,
    J_ww: f64,
    J11_wD: f64,
    J11_wU: f64,
}

fn value(a: ValueArgs) -> Result<(), CliError> {
    let cfg = resolve(&a.common)?;
    let m = cfg.model;
    let w = cfg.file.pick(a.w, "w", m.penalty.w_star)?;
    let sol = ValueSolution::solve(&m.market, &m.penalty, &m.pool)?;
    if !sol.interval.contains(w) {
        return Err(CliError::Usage(format!(
            "w = {w} outside the no-arbitrage interval [{}, {}]",
            sol.interval.w_d, sol.interval.w_u
        )));
    }
    let (j11_wd, j11_wu) = sol.optimality_gap();
    let rec = ValueRecord {
        mu: m.market.mu,
        r: m.market.r,
        sigma: m.market.sigma,
        lambda: m.penalty.lambda,
        w_star: m.penalty.w_star,
        theta: m.pool.theta(),
        gamma1: m.pool.gamma1(),
        gamma2: m.pool.gamma2(),
        w_D: sol.interval.w_d,
        w_U: sol.interval.w_u,
        a: sol.drift_vol.a,
        b: sol.drift_vol.b,
        z1: sol.z1,
        z2: sol.z2,
        C1: sol.c1,
        C2: sol.c2,
        w,
        J: sol.value(w)?,
        J_w: sol.value_d1(w)?,
        J_ww: sol.value_d2(w)?,
        J11_wD: j11_wd,
        J11_wU: j11_wu,
    };
    finish(
        emit::record(&rec, cfg.format.unwrap_or(Format::Json))?,
        &cfg,
    )
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct SweepRecord {
    gamma: f64,
    w_D: f64,
    w_U: f64,
    z1: f64,
    z2: f64,
    C1: Option<f64>,
    C2: Option<f64>,
    J_at_wstar: Option<f64>,
    J11_wD: Option<f64>,
    J11_wU: Option<f64>,
}

fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let cfg = resolve(&a.common)?;
    let grid = match cfg.file.list(a.gammas, "gammas")? {
        Some(g) if g.is_empty() => return Err(CliError::Usage("empty gamma grid".to_string())),
        Some(g) => g,
        None => geometric_gamma_grid(
            cfg.file.pick(a.gamma_min, "gamma_min", 0.8)?,
            cfg.file.pick(a.gamma_max, "gamma_max", 0.9999)?,
            cfg.file.pick(a.points, "points", DEFAULT_SWEEP_POINTS)?,
        )
        .map_err(|e| CliError::Usage(e.to_string()))?,
    };
    let ctx = SweepContext {
        market: cfg.model.market,
        penalty: cfg.model.penalty,
        theta: cfg.model.pool.theta(),
    };
    let rows = fee_sweep(&grid, &ctx)?;
    let records: Vec<SweepRecord> = rows
        .iter()
        .map(|row| {
            let v = row.values;
            SweepRecord {
                gamma: row.gamma,
                w_D: row.w_d,
                w_U: row.w_u,
                z1: row.z1,
                z2: row.z2,
                C1: v.map(|v| v.c1),
                C2: v.map(|v| v.c2),
                J_at_wstar: v.map(|v| v.j_at_wstar),
                J11_wD: v.map(|v| v.j11_wd),
                J11_wU: v.map(|v| v.j11_wu),
            }
        })
        .collect();
    let text = emit::table(&records, cfg.format.unwrap_or(Format::Csv))?;
    if rows.iter().any(|r| r.values.is_none()) {
        eprintln!("warning: gamma = 1 means no fee; the loss is undefined there and the row is marked undefined");
    }
    finish(text, &cfg)
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct OptimizeRecord {
    gamma_min: f64,
    gamma_max: f64,
    points: usize,
    gamma1: f64,
    gamma2: f64,
    J_at_wstar: f64,
    at_zero_fee_edge: bool,
}

fn optimize(a: OptimizeArgs) -> Result<(), CliError> {
    let cfg = resolve(&a.common)?;
    let gamma_min = cfg.file.pick(a.gamma_min, "gamma_min", 0.8)?;
    let gamma_max = cfg.file.pick(a.gamma_max, "gamma_max", 0.9999)?;
    let points = cfg.file.pick(a.points, "points", 25)?;
    let ctx = SweepContext {
        market: cfg.model.market,
        penalty: cfg.model.penalty,
        theta: cfg.model.pool.theta(),
    };
    let best = optimize_fees(&ctx, gamma_min, gamma_max, points).map_err(|e| match e {
        g3m_fee_lab::Error::Domain(m) => CliError::Usage(m),
        other => CliError::Core(other),
    })?;
    let rec = OptimizeRecord {
        gamma_min,
        gamma_max,
        points,
        gamma1: best.gamma1,
        gamma2: best.gamma2,
        J_at_wstar: best.j_at_wstar,
        at_zero_fee_edge: best.at_zero_fee_edge,
    };
    finish(
        emit::record(&rec, cfg.format.unwrap_or(Format::Json))?,
        &cfg,
    )
}

#[derive(Serialize)]
struct SimulateRecord {
    method: Method,
    w0: f64,
    step_h: Option<f64>,
    lattice_xi: Option<f64>,
    n_paths: usize,
    seed: u64,
    truncation_tol: f64,
    dynamics: DynamicsMode,
    noise: NoiseMode,
    #[serde(flatten)]
    stats: PathStats,
    j_analytic: Option<f64>,
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let cfg = resolve(&a.common)?;
    let m = cfg.model;
    let f = &cfg.file;
    let defaults = SimConfig::default();
    let sim = SimConfig {
        step_h: f.pick(a.h, "h", defaults.step_h)?,
        n_paths: f.pick(a.paths, "paths", DEFAULT_PATHS)?,
        master_seed: f.pick(a.seed, "seed", defaults.master_seed)?,
        truncation_tol: f.pick(a.tol, "tol", defaults.truncation_tol)?,
        dynamics_mode: f.pick(a.dynamics, "dynamics", defaults.dynamics_mode)?,
        noise_mode: f.pick(a.noise, "noise", defaults.noise_mode)?,
    };
    sim.validate()?;
    let method = f.pick(a.method, "method", Method::Euler)?;
    let w0 = f.pick(a.w0, "w0", m.penalty.w_star)?;
    let (stats, step_h, lattice_xi) = match method {
        Method::Euler => (
            estimate_value(w0, &sim, &m.market, &m.penalty, &m.pool)?,
            Some(sim.step_h),
            None,
        ),
        Method::Lattice => {
            let xi = f.pick(a.xi, "xi", m.pool.no_arb_interval().width() / 32.0)?;
            let stats = random_walk_estimate(w0, xi, &sim, &m.market, &m.penalty, &m.pool)?;
            (stats, None, Some(xi))
        }
    };
    let j_analytic = ValueSolution::solve(&m.market, &m.penalty, &m.pool)
        .and_then(|s| s.value(w0))
        .ok();
    let rec = SimulateRecord {
        method,
        w0,
        step_h,
        lattice_xi,
        n_paths: sim.n_paths,
        seed: sim.master_seed,
        truncation_tol: sim.truncation_tol,
        dynamics: sim.dynamics_mode,
        noise: sim.noise_mode,
        stats,
        j_analytic,
    };
    finish(
        emit::record(&rec, cfg.format.unwrap_or(Format::Json))?,
        &cfg,
    )
}

fn validate(a: ValidateArgs) -> Result<(), CliError> {
    let cfg = resolve(&a.common)?;
    let checks = run_checks(&cfg.model.market, &cfg.model.penalty);
    let text = emit::table(&checks, cfg.format.unwrap_or(Format::Json))?;
    finish(text, &cfg)?;
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name)
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::ChecksFailed(failed.join(", ")))
    }
}
