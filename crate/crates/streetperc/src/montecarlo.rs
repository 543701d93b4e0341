//! Crossing-window Monte Carlo: estimate the probability that the
//! connectivity graph spans a window left to right, sweep parameters, and
//! locate critical values by bisection.
//!
//! Experiments are specified either in original parameters (seed intensity
//! lambda_s, relay probability p, user intensity lambda, range r) or in the
//! scale-invariant form (p, U, H) where U is the mean number of users per
//! typical street and H the mean number of hops to traverse it. Windows are
//! sized by their expected cell count, so results do not depend on the
//! absolute scale.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{cube, splitmix64, Point, RngStream, Window};
use crate::graph::{build_graph, build_graph_infinite_range, crosses_window};
use crate::processes::{sample_relays, sample_users, sample_users_marked, NodeSet, User};
use crate::pvt::{build_tessellation, sample_seeds};

#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("trial {index} failed: {msg}")]
    Trial { index: u64, msg: String },
    #[error("bracket does not straddle the target: estimates {est_low:.3} and {est_high:.3} at ({low}, {high})")]
    BracketDoesNotStraddle {
        low: f64,
        high: f64,
        est_low: f64,
        est_high: f64,
    },
    #[error("non-monotone response at {axis_value}: estimate {estimate:.3} outside bracket responses")]
    NonMonotoneResponse { axis_value: f64, estimate: f64 },
}

/// Connectivity range: finite threshold or same-street-suffices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConnectionRange {
    Finite(f64),
    Infinite,
}

/// Original model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Seed intensity of the tessellation (cells per unit area).
    pub lambda_s: f64,
    /// Relay probability on crossroads.
    pub p: f64,
    /// User intensity per unit street length.
    pub lambda: f64,
    pub range: ConnectionRange,
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), McError> {
        if !(self.lambda_s > 0.0 && self.lambda_s.is_finite()) {
            return Err(McError::InvalidParams(format!(
                "lambda_s must be positive, got {}",
                self.lambda_s
            )));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(McError::InvalidParams(format!(
                "p must lie in [0, 1], got {}",
                self.p
            )));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(McError::InvalidParams(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if let ConnectionRange::Finite(r) = self.range {
            if !(r > 0.0 && r.is_finite()) {
                return Err(McError::InvalidParams(format!(
                    "range must be positive, got {r}"
                )));
            }
        }
        Ok(())
    }
}

/// Scale-invariant parameters: `u` users per typical street, `h` hops per
/// typical street. `h = 0` encodes infinite range, `u = 0` no users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessParams {
    pub p: f64,
    pub u: f64,
    pub h: f64,
}

/// Mean length of the typical street of a planar Poisson-Voronoi
/// tessellation with seed intensity `lambda_s`.
pub fn mean_street_length(lambda_s: f64) -> f64 {
    2.0 / (3.0 * lambda_s.sqrt())
}

/// Street length per unit area for seed intensity `lambda_s`.
pub fn street_intensity(lambda_s: f64) -> f64 {
    2.0 * lambda_s.sqrt()
}

pub fn to_dimensionless(m: &ModelParams) -> Result<DimensionlessParams, McError> {
    m.validate()?;
    let lbar = mean_street_length(m.lambda_s);
    Ok(DimensionlessParams {
        p: m.p,
        u: m.lambda * lbar,
        h: match m.range {
            ConnectionRange::Finite(r) => lbar / r,
            ConnectionRange::Infinite => 0.0,
        },
    })
}

pub fn from_dimensionless(d: &DimensionlessParams, lambda_s: f64) -> Result<ModelParams, McError> {
    if d.u.is_nan() || d.u < 0.0 || d.h.is_nan() || d.h < 0.0 {
        return Err(McError::InvalidParams(format!(
            "U and H must be nonnegative, got U = {}, H = {}",
            d.u, d.h
        )));
    }
    let lbar = mean_street_length(lambda_s);
    let m = ModelParams {
        lambda_s,
        p: d.p,
        lambda: d.u / lbar,
        range: if d.h == 0.0 {
            ConnectionRange::Infinite
        } else {
            ConnectionRange::Finite(lbar / d.h)
        },
    };
    m.validate()?;
    Ok(m)
}

/// A crossing-probability experiment.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub params: ModelParams,
    /// Expected number of Voronoi cells in the window; the window side is
    /// sqrt(window_cells / lambda_s).
    pub window_cells: f64,
    /// Contact band of the crossing criterion. Default: the connectivity
    /// range for finite r, the mean street length for infinite r, both
    /// clamped to a quarter of the window side.
    pub band: Option<f64>,
    pub trials: u64,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn window(&self) -> Result<Window, McError> {
        if !(self.window_cells > 0.0 && self.window_cells.is_finite()) {
            return Err(McError::InvalidParams(format!(
                "window_cells must be positive, got {}",
                self.window_cells
            )));
        }
        let side = (self.window_cells / self.params.lambda_s).sqrt();
        cube(Point::new(0.0, 0.0), side)
            .map_err(|e| McError::InvalidParams(e.to_string()))
    }

    pub fn effective_band(&self) -> Result<f64, McError> {
        let width = self.window()?.width();
        match self.band {
            Some(b) => {
                if b > 0.0 && 2.0 * b < width {
                    Ok(b)
                } else {
                    Err(McError::InvalidParams(format!(
                        "band must satisfy 0 < 2 band < window width, got {b}"
                    )))
                }
            }
            None => {
                let natural = match self.params.range {
                    ConnectionRange::Finite(r) => r,
                    ConnectionRange::Infinite => mean_street_length(self.params.lambda_s),
                };
                Ok(natural.min(width / 4.0))
            }
        }
    }

    pub fn validate(&self) -> Result<(), McError> {
        self.params.validate()?;
        self.window()?;
        self.effective_band()?;
        if self.trials == 0 {
            return Err(McError::InvalidParams("trials must be at least 1".into()));
        }
        Ok(())
    }

    fn with_params(&self, params: ModelParams) -> ExperimentConfig {
        ExperimentConfig { params, ..*self }
    }
}

/// Flat parameter echo attached to every result record: both coordinate
/// systems plus the experiment geometry, so a record alone identifies the
/// run that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub lambda_s: f64,
    pub p: f64,
    pub lambda: f64,
    pub r: Option<f64>,
    pub u: f64,
    pub h: f64,
    pub window_cells: f64,
    pub band: f64,
    pub trials: u64,
    pub master_seed: u64,
}

impl ConfigEcho {
    fn of(cfg: &ExperimentConfig) -> Result<ConfigEcho, McError> {
        let d = to_dimensionless(&cfg.params)?;
        Ok(ConfigEcho {
            lambda_s: cfg.params.lambda_s,
            p: cfg.params.p,
            lambda: cfg.params.lambda,
            r: match cfg.params.range {
                ConnectionRange::Finite(r) => Some(r),
                ConnectionRange::Infinite => None,
            },
            u: d.u,
            h: d.h,
            window_cells: cfg.window_cells,
            band: cfg.effective_band()?,
            trials: cfg.trials,
            master_seed: cfg.master_seed,
        })
    }
}

/// A crossing-probability estimate with its Wilson 95% interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateResult {
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: u64,
    pub successes: u64,
    #[serde(flatten)]
    pub config: ConfigEcho,
    /// Not serialized: wall time is the one field allowed to differ
    /// between byte-identical reruns.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl EstimateResult {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("estimate records are serializable")
    }
}

const Z_95: f64 = 1.959963984540054;
/// 99% normal quantile, used by oracle-agreement tests.
pub const Z_99: f64 = 2.5758293035489004;

/// Wilson score interval for a binomial proportion. At the boundary counts
/// the exact endpoints are 0 and 1; rounding must not exclude them.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

/// One end-to-end realization: seeds, tessellation, users, relays, graph,
/// crossing decision. Deterministic given the stream.
fn run_trial(cfg: &ExperimentConfig, window: Window, band: f64, trial: u64) -> Result<bool, String> {
    let mut rng = RngStream::new(cfg.master_seed, trial).rng();
    let seeds =
        sample_seeds(window, cfg.params.lambda_s, &mut rng).map_err(|e| e.to_string())?;
    if seeds.points().is_empty() {
        return Ok(false); // no streets, no nodes, no crossing
    }
    let t = build_tessellation(seeds).map_err(|e| e.to_string())?;
    let users = sample_users(&t, cfg.params.lambda, &mut rng).map_err(|e| e.to_string())?;
    let relays = sample_relays(&t, cfg.params.p, &mut rng).map_err(|e| e.to_string())?;
    let z = NodeSet::new(&t, users, relays);
    let (nodes, labels) = match cfg.params.range {
        ConnectionRange::Finite(r) => build_graph(&t, &z, r).map_err(|e| e.to_string())?,
        ConnectionRange::Infinite => {
            build_graph_infinite_range(&t, &z).map_err(|e| e.to_string())?
        }
    };
    crosses_window(&nodes, &labels, &window, band).map_err(|e| e.to_string())
}

/// Estimate the crossing probability over `cfg.trials` independent
/// realizations; trial `i` owns stream `i` of the master seed, so results
/// are bit-reproducible and independent of scheduling.
pub fn crossing_probability(cfg: &ExperimentConfig) -> Result<EstimateResult, McError> {
    cfg.validate()?;
    let window = cfg.window()?;
    let band = cfg.effective_band()?;
    let started = std::time::Instant::now();

    let outcomes: Result<Vec<bool>, McError> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            run_trial(cfg, window, band, i).map_err(|msg| McError::Trial { index: i, msg })
        })
        .collect();
    let outcomes = outcomes?;

    let successes = outcomes.iter().filter(|&&c| c).count() as u64;
    let (ci_low, ci_high) = wilson_interval(successes, cfg.trials, Z_95);
    Ok(EstimateResult {
        p_hat: successes as f64 / cfg.trials as f64,
        ci_low,
        ci_high,
        trials: cfg.trials,
        successes,
        config: ConfigEcho::of(cfg)?,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// Sweepable / bisectable parameter axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    P,
    U,
    H,
    Lambda,
    R,
}

impl Axis {
    /// Whether the crossing probability is nondecreasing along this axis.
    pub fn increasing(self) -> bool {
        !matches!(self, Axis::H)
    }

    pub fn parse(s: &str) -> Option<Axis> {
        match s {
            "p" => Some(Axis::P),
            "U" | "u" => Some(Axis::U),
            "H" | "h" => Some(Axis::H),
            "lambda" => Some(Axis::Lambda),
            "r" => Some(Axis::R),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::P => "p",
            Axis::U => "u",
            Axis::H => "h",
            Axis::Lambda => "lambda",
            Axis::R => "r",
        }
    }
}

/// Set `axis` to `x`, keeping the other parameters fixed.
pub fn apply_axis(params: &ModelParams, axis: Axis, x: f64) -> Result<ModelParams, McError> {
    let lbar = mean_street_length(params.lambda_s);
    let mut out = *params;
    match axis {
        Axis::P => out.p = x,
        Axis::U => {
            if x.is_nan() || x < 0.0 {
                return Err(McError::InvalidParams(format!("U must be nonnegative, got {x}")));
            }
            out.lambda = x / lbar;
        }
        Axis::Lambda => out.lambda = x,
        Axis::H => {
            if x.is_nan() || x < 0.0 {
                return Err(McError::InvalidParams(format!("H must be nonnegative, got {x}")));
            }
            out.range = if x == 0.0 {
                ConnectionRange::Infinite
            } else {
                ConnectionRange::Finite(lbar / x)
            };
        }
        Axis::R => out.range = ConnectionRange::Finite(x),
    }
    out.validate()?;
    Ok(out)
}

/// Independent estimates along a sorted grid. Each grid point runs on its
/// own derived master seed; use [`coupled_sweep`] to share realizations.
pub fn sweep(
    axis: Axis,
    grid: &[f64],
    cfg: &ExperimentConfig,
) -> Result<Vec<EstimateResult>, McError> {
    check_grid(grid)?;
    let mut out = Vec::with_capacity(grid.len());
    for (i, &x) in grid.iter().enumerate() {
        let params = apply_axis(&cfg.params, axis, x)?;
        let sub = ExperimentConfig {
            params,
            master_seed: splitmix64(cfg.master_seed ^ splitmix64(i as u64)),
            ..*cfg
        };
        out.push(crossing_probability(&sub)?);
    }
    Ok(out)
}

fn check_grid(grid: &[f64]) -> Result<(), McError> {
    if grid.is_empty() {
        return Err(McError::InvalidParams("grid must be nonempty".into()));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(McError::InvalidParams("grid must be sorted ascending".into()));
    }
    Ok(())
}

/// Per-trial crossing indicators along a coupled sweep: one realization of
/// (tessellation, relay latents, marked users) per trial serves every grid
/// point, so indicators are exactly monotone along monotone axes.
///
/// Returns `indicators[trial][grid_point]`.
pub fn coupled_crossing_indicators(
    axis: Axis,
    grid: &[f64],
    cfg: &ExperimentConfig,
) -> Result<Vec<Vec<bool>>, McError> {
    cfg.validate()?;
    check_grid(grid)?;
    let window = cfg.window()?;
    let lbar = mean_street_length(cfg.params.lambda_s);

    // Pre-derive the per-point parameter sets (and reject bad grids early).
    let mut point_params = Vec::with_capacity(grid.len());
    for &x in grid {
        point_params.push(apply_axis(&cfg.params, axis, x)?);
    }
    let lambda_max = point_params
        .iter()
        .map(|p| p.lambda)
        .fold(0.0f64, f64::max);

    (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<bool>, McError> {
            let attach = |msg: String| McError::Trial { index: trial, msg };
            let mut rng = RngStream::new(cfg.master_seed, trial).rng();
            let seeds = sample_seeds(window, cfg.params.lambda_s, &mut rng)
                .map_err(|e| attach(e.to_string()))?;
            if seeds.points().is_empty() {
                return Ok(vec![false; grid.len()]);
            }
            let t = build_tessellation(seeds).map_err(|e| attach(e.to_string()))?;

            // Sample once at the envelope intensity with thinning marks,
            // and one latent per vertex for the relays.
            let marked = if lambda_max > 0.0 {
                sample_users_marked(&t, lambda_max, &mut rng).map_err(|e| attach(e.to_string()))?
            } else {
                Vec::new()
            };
            let relays = sample_relays(&t, cfg.params.p, &mut rng)
                .map_err(|e| attach(e.to_string()))?;

            let mut row = Vec::with_capacity(grid.len());
            for params in &point_params {
                let users: Vec<User> = if params.lambda == 0.0 {
                    Vec::new()
                } else {
                    let keep = params.lambda / lambda_max;
                    marked
                        .iter()
                        .filter(|(_, m)| *m < keep)
                        .map(|(u, _)| *u)
                        .collect()
                };
                let z = NodeSet::new(
                    &t,
                    users,
                    relays.with_p(params.p).map_err(|e| attach(e.to_string()))?,
                );
                let band = match params.range {
                    ConnectionRange::Finite(r) => {
                        cfg.band.unwrap_or_else(|| r.min(window.width() / 4.0))
                    }
                    ConnectionRange::Infinite => {
                        cfg.band.unwrap_or_else(|| lbar.min(window.width() / 4.0))
                    }
                };
                let (nodes, labels) = match params.range {
                    ConnectionRange::Finite(r) => {
                        build_graph(&t, &z, r).map_err(|e| attach(e.to_string()))?
                    }
                    ConnectionRange::Infinite => {
                        build_graph_infinite_range(&t, &z).map_err(|e| attach(e.to_string()))?
                    }
                };
                row.push(
                    crosses_window(&nodes, &labels, &window, band)
                        .map_err(|e| attach(e.to_string()))?,
                );
            }
            Ok(row)
        })
        .collect()
}

/// Coupled-sweep estimates: same trials as [`coupled_crossing_indicators`],
/// aggregated per grid point.
pub fn coupled_sweep(
    axis: Axis,
    grid: &[f64],
    cfg: &ExperimentConfig,
) -> Result<Vec<EstimateResult>, McError> {
    let started = std::time::Instant::now();
    let rows = coupled_crossing_indicators(axis, grid, cfg)?;
    let wall = started.elapsed().as_secs_f64();
    grid.iter()
        .enumerate()
        .map(|(j, &x)| {
            let successes = rows.iter().filter(|row| row[j]).count() as u64;
            let (ci_low, ci_high) = wilson_interval(successes, cfg.trials, Z_95);
            let params = apply_axis(&cfg.params, axis, x)?;
            Ok(EstimateResult {
                p_hat: successes as f64 / cfg.trials as f64,
                ci_low,
                ci_high,
                trials: cfg.trials,
                successes,
                config: ConfigEcho::of(&cfg.with_params(params))?,
                wall_time_secs: wall,
            })
        })
        .collect()
}

/// A located critical value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalEstimate {
    pub axis: Axis,
    pub value: f64,
    pub bracket: (f64, f64),
    pub target: f64,
    pub trials_per_point: u64,
}

impl CriticalEstimate {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("critical records are serializable")
    }
}

/// Tuning for [`find_critical`].
#[derive(Debug, Clone, Copy)]
pub struct CriticalSearch {
    /// Crossing probability defining the threshold (0.5 by default).
    pub target: f64,
    /// Stop when the bracket is narrower than this (axis units).
    pub tolerance: f64,
    /// Trials may double this many times when an estimate's CI straddles
    /// the target.
    pub max_escalations: u32,
}

impl Default for CriticalSearch {
    fn default() -> Self {
        CriticalSearch {
            target: 0.5,
            tolerance: 0.01,
            max_escalations: 2,
        }
    }
}

/// Bisect `axis` inside `bracket` for the crossing probability to reach
/// `opts.target`. The bracket must straddle the target; trials escalate
/// near the threshold, and the search stops early when confidence intervals
/// prevent a decision.
pub fn find_critical(
    axis: Axis,
    bracket: (f64, f64),
    cfg: &ExperimentConfig,
    opts: CriticalSearch,
) -> Result<CriticalEstimate, McError> {
    cfg.validate()?;
    let (mut lo, mut hi) = bracket;
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(McError::InvalidParams(format!(
            "bracket must satisfy low < high, got ({lo}, {hi})"
        )));
    }
    let increasing = axis.increasing();
    let mut eval_counter = 0u64;
    let eval = |x: f64, trials: u64, counter: &mut u64| -> Result<EstimateResult, McError> {
        let params = apply_axis(&cfg.params, axis, x)?;
        let sub = ExperimentConfig {
            params,
            trials,
            master_seed: splitmix64(cfg.master_seed ^ splitmix64(*counter)),
            ..*cfg
        };
        *counter += 1;
        crossing_probability(&sub)
    };

    let mut est_lo = eval(lo, cfg.trials, &mut eval_counter)?;
    let mut est_hi = eval(hi, cfg.trials, &mut eval_counter)?;
    let straddles = if increasing {
        est_lo.p_hat < opts.target && est_hi.p_hat > opts.target
    } else {
        est_lo.p_hat > opts.target && est_hi.p_hat < opts.target
    };
    if !straddles {
        return Err(McError::BracketDoesNotStraddle {
            low: lo,
            high: hi,
            est_low: est_lo.p_hat,
            est_high: est_hi.p_hat,
        });
    }

    let mut trials_used = cfg.trials;
    while hi - lo > opts.tolerance {
        // Both bracket responses ambiguous: refining cannot be justified.
        let lo_ambiguous = est_lo.ci_low <= opts.target && opts.target <= est_lo.ci_high;
        let hi_ambiguous = est_hi.ci_low <= opts.target && opts.target <= est_hi.ci_high;
        if lo_ambiguous && hi_ambiguous {
            break;
        }

        let mid = 0.5 * (lo + hi);
        let mut trials = cfg.trials;
        let mut est = eval(mid, trials, &mut eval_counter)?;
        let mut escalations = 0;
        while est.ci_low <= opts.target
            && opts.target <= est.ci_high
            && escalations < opts.max_escalations
        {
            trials *= 2;
            escalations += 1;
            est = eval(mid, trials, &mut eval_counter)?;
        }
        trials_used = trials;

        // Monotonicity guard: the midpoint response must not sit outside
        // both endpoint responses with disjoint confidence intervals.
        let (below, above) = if increasing {
            (&est_lo, &est_hi)
        } else {
            (&est_hi, &est_lo)
        };
        if est.ci_high < below.ci_low || est.ci_low > above.ci_high {
            return Err(McError::NonMonotoneResponse {
                axis_value: mid,
                estimate: est.p_hat,
            });
        }

        let above_target = est.p_hat > opts.target;
        if above_target == increasing {
            hi = mid;
            est_hi = est;
        } else {
            lo = mid;
            est_lo = est;
        }
    }

    Ok(CriticalEstimate {
        axis,
        value: 0.5 * (lo + hi),
        bracket: (lo, hi),
        target: opts.target,
        trials_per_point: trials_used,
    })
}
