//! Per-event parameter fitting by bounded Nelder-Mead, and batch fitting.
//!
//! Bounds are handled by optimizing over unconstrained `y` with
//! `x = lo + (hi - lo) sin^2(y)`, so every evaluated point is feasible.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::event::{ActorKind, MergeEvent, DEFAULT_SAMPLE_INTERVAL};
use crate::metrics::{summarize_errors, theil_u, ErrorSummary, EvalWindow};
use crate::params::{Bounds, ModelKind, ModelParams, ParamError};
use crate::simulate::{simulate_event, SimConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibError {
    #[error("parameter '{name}' has degenerate bounds [{lo}, {hi}]")]
    DegenerateBounds { name: String, lo: f64, hi: f64 },
    #[error("start point and bounds differ in dimension")]
    Dimension,
    #[error("unfittable event: no finite cost at any initial simplex")]
    Unfittable,
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Params(#[from] ParamError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OptimizerConfig {
    pub max_iter: usize,
    /// Converged once the simplex cost spread falls below this...
    pub cost_tol: f64,
    /// ...and the simplex diameter in transformed space below this.
    pub x_tol: f64,
    /// Extra runs after the first, each from jittered defaults.
    pub restarts: usize,
    /// Jitter half-width as a fraction of each parameter's range.
    pub jitter: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            cost_tol: 1e-4,
            x_tol: 1e-4,
            restarts: 3,
            jitter: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best cost after each iteration.
    pub history: Vec<f64>,
}

fn to_x(y: &[f64], bounds: &[Bounds]) -> Vec<f64> {
    y.iter()
        .zip(bounds)
        .map(|(y, b)| (b.lo + b.width() * y.sin().powi(2)).clamp(b.lo, b.hi))
        .collect()
}

fn to_y(x: &[f64], bounds: &[Bounds]) -> Vec<f64> {
    x.iter()
        .zip(bounds)
        .map(|(x, b)| ((x - b.lo) / b.width()).clamp(0.0, 1.0).sqrt().asin())
        .collect()
}

fn check_bounds(names: &[&str], bounds: &[Bounds]) -> Result<(), CalibError> {
    for (name, b) in names.iter().zip(bounds) {
        if !(b.lo.is_finite() && b.hi.is_finite() && b.lo < b.hi) {
            return Err(CalibError::DegenerateBounds {
                name: name.to_string(),
                lo: b.lo,
                hi: b.hi,
            });
        }
    }
    Ok(())
}

/// Minimizes `cost` over the box `bounds` from `x0`.
///
/// Non-finite costs rank worst. Returns `Unfittable` if every vertex of the
/// initial simplex has a non-finite cost.
pub fn minimize_bounded<F>(
    mut cost: F,
    x0: &[f64],
    bounds: &[Bounds],
    cfg: &OptimizerConfig,
) -> Result<Minimum, CalibError>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if bounds.len() != n {
        return Err(CalibError::Dimension);
    }
    let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    check_bounds(
        &names.iter().map(String::as_str).collect::<Vec<_>>(),
        bounds,
    )?;

    let mut evaluations = 0usize;
    let mut f = |y: &[f64]| {
        evaluations += 1;
        let c = cost(&to_x(y, bounds));
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    };

    // Initial simplex: 5% steps, a small absolute step for zero components.
    let y0 = to_y(x0, bounds);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((y0.clone(), f(&y0)));
    for i in 0..n {
        let mut y = y0.clone();
        y[i] = if y[i] != 0.0 { 1.05 * y[i] } else { 0.00025 };
        let c = f(&y);
        simplex.push((y, c));
    }
    if simplex.iter().all(|(_, c)| !c.is_finite()) {
        return Err(CalibError::Unfittable);
    }

    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    order(&mut simplex);

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect()
    };

    while iterations < cfg.max_iter {
        let best = simplex[0].1;
        let spread = simplex
            .iter()
            .map(|(_, c)| (c - best).abs())
            .fold(0.0, f64::max);
        let diameter = simplex
            .iter()
            .flat_map(|(y, _)| y.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= cfg.cost_tol && diameter <= cfg.x_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (y, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(y) {
                *c += v / n as f64;
            }
        }
        let (worst, f_worst) = simplex[n].clone();
        let f_second = simplex[n - 1].1;

        let reflected = lerp(&centroid, &worst, -1.0);
        let f_r = f(&reflected);
        if f_r < best {
            let expanded = lerp(&centroid, &worst, -2.0);
            let f_e = f(&expanded);
            simplex[n] = if f_e < f_r {
                (expanded, f_e)
            } else {
                (reflected, f_r)
            };
        } else if f_r < f_second {
            simplex[n] = (reflected, f_r);
        } else {
            let (contracted, f_c, accept) = if f_r < f_worst {
                let c = lerp(&centroid, &reflected, 0.5);
                let fc = f(&c);
                (c, fc, fc <= f_r)
            } else {
                let c = lerp(&centroid, &worst, 0.5);
                let fc = f(&c);
                (c, fc, fc < f_worst)
            };
            if accept {
                simplex[n] = (contracted, f_c);
            } else {
                let anchor = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let y = lerp(&anchor, &vertex.0, 0.5);
                    let c = f(&y);
                    *vertex = (y, c);
                }
            }
        }
        order(&mut simplex);
        history.push(simplex[0].1);
    }

    let (y_best, c_best) = simplex.swap_remove(0);
    Ok(Minimum {
        x: to_x(&y_best, bounds),
        cost: c_best,
        iterations,
        evaluations,
        converged,
        history,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitConfig {
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Cost window; the event's evaluation window when `None`.
    pub window: Option<EvalWindow>,
    pub step: f64,
    /// Rollouts in fallback for more than this share of the window cost 1.
    pub fallback_limit: f64,
    /// Start desired-speed parameters from the highest recorded TA speed.
    pub heuristic_init: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            seed: 0,
            window: None,
            step: DEFAULT_SAMPLE_INTERVAL,
            fallback_limit: 0.5,
            heuristic_init: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub event_id: String,
    pub model_kind: ModelKind,
    pub fitted_params: ModelParams,
    pub cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub restarts_used: usize,
}

/// Theil's U of a rollout with `params`, or 1 when fallback dominates.
/// Non-finite when the rollout itself fails.
pub fn rollout_cost(event: &MergeEvent, params: &ModelParams, config: &FitConfig) -> f64 {
    let mut sim = SimConfig::new(params.clone());
    sim.step = config.step;
    sim.window = config.window;
    let Ok(res) = simulate_event(event, &sim) else {
        return f64::INFINITY;
    };
    if res.fallback_fraction() > config.fallback_limit {
        return 1.0;
    }
    theil_u(&res.ta_speed, &res.raw_speed).map_or(f64::INFINITY, |t| t.u)
}

fn start_point(event: &MergeEvent, params: &ModelParams, config: &FitConfig) -> ModelParams {
    let mut p = params.clone();
    if config.heuristic_init {
        let top = event
            .track(ActorKind::Ta)
            .map(|t| t.samples.iter().map(|s| s.speed).fold(0.0, f64::max));
        for name in ["v0", "v_des"] {
            if let (Some(top), Some(b)) = (top, p.bounds.get(name).copied()) {
                let _ = p.set(name, top.clamp(b.lo, b.hi));
            }
        }
    }
    p
}

/// Fits the parameters carried by `initial` (values are the start point,
/// bounds the search box) to one event.
pub fn fit_event(
    event: &MergeEvent,
    initial: &ModelParams,
    config: &FitConfig,
) -> Result<FitResult, CalibError> {
    let start = start_point(event, initial, config);
    let names: Vec<&str> = start.names();
    let bounds: Vec<Bounds> = names.iter().map(|n| start.bounds[*n]).collect();
    check_bounds(&names, &bounds)?;
    let x_default: Vec<f64> = names.iter().map(|n| start.values[*n]).collect();

    let with_x = |x: &[f64]| {
        let mut p = start.clone();
        for (name, v) in names.iter().zip(x) {
            p.values.insert(name.to_string(), *v);
        }
        p
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut best: Option<(Minimum, usize)> = None;
    let mut iterations = 0;
    let mut evaluations = 0;
    for run in 0..=config.optimizer.restarts {
        let x0: Vec<f64> = if run == 0 {
            x_default.clone()
        } else {
            x_default
                .iter()
                .zip(&bounds)
                .map(|(x, b)| {
                    let j = rng.gen_range(-config.optimizer.jitter..=config.optimizer.jitter);
                    (x + j * b.width()).clamp(b.lo, b.hi)
                })
                .collect()
        };
        let outcome = minimize_bounded(
            |x| rollout_cost(event, &with_x(x), config),
            &x0,
            &bounds,
            &config.optimizer,
        );
        match outcome {
            Ok(m) => {
                iterations += m.iterations;
                evaluations += m.evaluations;
                if best.as_ref().is_none_or(|(b, _)| m.cost < b.cost) {
                    best = Some((m, run));
                }
            }
            Err(CalibError::Unfittable) => continue,
            Err(e) => return Err(e),
        }
    }

    let (m, _) = best.ok_or(CalibError::Unfittable)?;
    let fitted = with_x(&m.x);
    fitted.validate()?;
    Ok(FitResult {
        event_id: event.event_id.clone(),
        model_kind: fitted.model_kind,
        cost: m.cost.clamp(0.0, 1.0),
        fitted_params: fitted,
        iterations,
        evaluations,
        converged: m.converged,
        restarts_used: config.optimizer.restarts,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitFailure {
    pub event_id: String,
    pub model_kind: ModelKind,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusFit {
    pub results: Vec<FitResult>,
    pub failures: Vec<FitFailure>,
    pub summaries: BTreeMap<ModelKind, ErrorSummary>,
}

/// Seed for one (event, model) work item, independent of scheduling.
pub fn item_seed(seed: u64, event_index: usize, model_index: usize) -> u64 {
    let key = ((event_index as u64) << 16) | model_index as u64;
    seed ^ key.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Fits every (event, model) pair on a pool of `jobs` workers. Output order is
/// sorted by event id then model kind, whatever the scheduling.
pub fn fit_corpus(
    events: &[MergeEvent],
    kinds: &[ModelKind],
    config: &FitConfig,
    jobs: usize,
) -> Result<CorpusFit, CalibError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CalibError::Pool(e.to_string()))?;

    let items: Vec<(usize, usize)> = (0..events.len())
        .flat_map(|e| (0..kinds.len()).map(move |m| (e, m)))
        .collect();
    let outcomes: Vec<Result<FitResult, FitFailure>> = pool.install(|| {
        items
            .par_iter()
            .map(|&(e, m)| {
                let event = &events[e];
                let kind = kinds[m];
                let cfg = FitConfig {
                    seed: item_seed(config.seed, e, m),
                    ..config.clone()
                };
                fit_event(event, &ModelParams::defaults(kind), &cfg).map_err(|err| FitFailure {
                    event_id: event.event_id.clone(),
                    model_kind: kind,
                    error: err.to_string(),
                })
            })
            .collect()
    });

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(f) => failures.push(f),
        }
    }
    results.sort_by(|a, b| (&a.event_id, a.model_kind).cmp(&(&b.event_id, b.model_kind)));
    failures.sort_by(|a, b| (&a.event_id, a.model_kind).cmp(&(&b.event_id, b.model_kind)));

    let mut summaries = BTreeMap::new();
    for kind in kinds {
        let costs: Vec<f64> = results
            .iter()
            .filter(|r| r.model_kind == *kind)
            .map(|r| r.cost)
            .collect();
        if let Some(s) = summarize_errors(&costs) {
            summaries.insert(*kind, s);
        }
    }
    Ok(CorpusFit {
        results,
        failures,
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quadratic_minimum() {
        let m = minimize_bounded(
            |x| (x[0] - 0.3).powi(2),
            &[0.8],
            &[Bounds::new(0.0, 1.0)],
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!((m.x[0] - 0.3).abs() <= 1e-4, "x = {}", m.x[0]);
        assert!(m.converged);
    }

    #[test]
    fn minimum_on_the_bound() {
        let m = minimize_bounded(
            |x| x[0] + (x[1] - 2.0).powi(2),
            &[0.5, 0.0],
            &[Bounds::new(0.0, 1.0), Bounds::new(-1.0, 1.0)],
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!(m.x[0] < 1e-3 && (m.x[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn degenerate_bounds_rejected() {
        let err = minimize_bounded(
            |x| x[0],
            &[2.0],
            &[Bounds::new(2.0, 2.0)],
            &OptimizerConfig::default(),
        );
        assert!(matches!(err, Err(CalibError::DegenerateBounds { .. })));
    }

    #[test]
    fn all_infinite_is_unfittable() {
        let err = minimize_bounded(
            |_| f64::NAN,
            &[0.5],
            &[Bounds::new(0.0, 1.0)],
            &OptimizerConfig::default(),
        );
        assert_eq!(err.unwrap_err(), CalibError::Unfittable);
    }

    #[test]
    fn rosenbrock_in_a_box() {
        let cfg = OptimizerConfig {
            max_iter: 2000,
            cost_tol: 1e-12,
            x_tol: 1e-8,
            ..Default::default()
        };
        let m = minimize_bounded(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[Bounds::new(-2.0, 2.0), Bounds::new(-2.0, 3.0)],
            &cfg,
        )
        .unwrap();
        assert!(
            (m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] - 1.0).abs() < 1e-3,
            "{:?}",
            m.x
        );
    }

    proptest! {
        #[test]
        fn feasible_and_monotone(
            target in prop::collection::vec(-3.0f64..3.0, 1..4),
            seed_x in prop::collection::vec(0.0f64..1.0, 4)
        ) {
            let n = target.len();
            let bounds: Vec<Bounds> = (0..n).map(|i| Bounds::new(-1.0 - i as f64, 1.0 + 0.5 * i as f64)).collect();
            let x0: Vec<f64> = bounds.iter().zip(&seed_x).map(|(b, u)| b.lo + u * b.width()).collect();
            let mut seen = Vec::new();
            let m = minimize_bounded(
                |x| {
                    seen.push(x.to_vec());
                    x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum()
                },
                &x0,
                &bounds,
                &OptimizerConfig::default(),
            ).unwrap();
            for x in &seen {
                for (v, b) in x.iter().zip(&bounds) {
                    prop_assert!(b.contains(*v));
                }
            }
            prop_assert!(m.history.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
