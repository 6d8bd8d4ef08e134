//! Calibration cost and summary statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{ActorKind, MergeEvent};

/// Seconds after the merge that still count toward the evaluation window.
pub const POST_MERGE_SPAN: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("profiles differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty profile")]
    Empty,
    #[error("non-finite value in profile")]
    NonFinite,
    #[error("empty evaluation window [{0}, {1}]")]
    EmptyWindow(f64, f64),
}

/// Span over which simulated and recorded speeds are compared.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalWindow {
    pub t_start: f64,
    pub t_end: f64,
}

impl EvalWindow {
    pub fn new(t_start: f64, t_end: f64) -> Result<Self, MetricsError> {
        if !(t_start.is_finite() && t_end.is_finite() && t_start < t_end) {
            return Err(MetricsError::EmptyWindow(t_start, t_end));
        }
        Ok(Self { t_start, t_end })
    }

    /// From the interaction start to three seconds after the merge, clipped to
    /// the TA's recorded span.
    pub fn for_event(event: &MergeEvent) -> Result<Self, MetricsError> {
        let (mut lo, mut hi) = event.time_range();
        if let Some(ta) = event.track(ActorKind::Ta) {
            lo = lo.max(ta.start_time());
            hi = hi.min(ta.end_time());
        }
        let start = event.interaction_start.max(lo);
        let end = (event.merge_time + POST_MERGE_SPAN).min(hi);
        Self::new(start, end)
    }

    pub fn contains(&self, time: f64) -> bool {
        time >= self.t_start - 1e-9 && time <= self.t_end + 1e-9
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheilU {
    pub u: f64,
    /// Both profiles were identically zero.
    pub degenerate: bool,
}

fn rms(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    (values.map(|v| v * v).sum::<f64>() / n as f64).sqrt()
}

/// Theil's inequality coefficient between two equally long speed profiles.
pub fn theil_u(sim: &[f64], raw: &[f64]) -> Result<TheilU, MetricsError> {
    if sim.len() != raw.len() {
        return Err(MetricsError::LengthMismatch(sim.len(), raw.len()));
    }
    if sim.is_empty() {
        return Err(MetricsError::Empty);
    }
    if sim.iter().chain(raw).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let n = sim.len();
    let num = rms(sim.iter().zip(raw).map(|(a, b)| a - b), n);
    let den = rms(sim.iter().copied(), n) + rms(raw.iter().copied(), n);
    if den == 0.0 {
        return Ok(TheilU {
            u: 0.0,
            degenerate: true,
        });
    }
    Ok(TheilU {
        u: (num / den).min(1.0),
        degenerate: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub std: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

/// Linearly interpolated quantile of sorted data, `h = (n - 1) p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summary statistics of per-event costs. `None` for an empty list.
pub fn summarize_errors(values: &[f64]) -> Option<ErrorSummary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len();
    let rough = values.iter().sum::<f64>() / n as f64;
    // One refinement pass removes most of the summation rounding.
    let mean = rough + values.iter().map(|v| v - rough).sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(ErrorSummary {
        count: n,
        mean,
        median: quantile_sorted(&sorted, 0.5),
        std,
        q1: quantile_sorted(&sorted, 0.25),
        q3: quantile_sorted(&sorted, 0.75),
        min: sorted[0],
        max: sorted[n - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::tests::well_formed_event;
    use proptest::prelude::*;

    #[test]
    fn theil_examples() {
        assert_eq!(theil_u(&[3.0, 4.0, 5.0], &[3.0, 4.0, 5.0]).unwrap().u, 0.0);
        assert_eq!(theil_u(&[10.0, 10.0], &[0.0, 0.0]).unwrap().u, 1.0);
        let u = theil_u(&[10.0, 10.0, 10.0], &[8.0, 10.0, 12.0]).unwrap().u;
        assert!((u - 0.08111246603748304).abs() < 1e-12);
        let z = theil_u(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(z.degenerate && z.u == 0.0);
        assert!(theil_u(&[1.0], &[1.0, 2.0]).is_err());
        assert!(theil_u(&[], &[]).is_err());
    }

    #[test]
    fn summary_examples() {
        let s = summarize_errors(&[0.1, 0.1, 0.1]).unwrap();
        assert!((s.mean - 0.1).abs() < 1e-15);
        assert_eq!(s.std, 0.0);
        let s = summarize_errors(&[0.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.median), (0.5, 0.5));
        let s = summarize_errors(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (1.75, 2.5, 3.25));
        assert!(summarize_errors(&[]).is_none());
    }

    #[test]
    fn window_for_event() {
        let mut ev = well_formed_event();
        ev.interaction_start = 2.0;
        let w = EvalWindow::for_event(&ev).unwrap();
        assert_eq!((w.t_start, w.t_end), (2.0, 11.0));
        ev.merge_time = 14.5;
        assert_eq!(EvalWindow::for_event(&ev).unwrap().t_end, 15.0);
        assert!(EvalWindow::new(3.0, 3.0).is_err());
    }

    proptest! {
        #[test]
        fn theil_bounded_and_symmetric(
            pairs in prop::collection::vec((0.0f64..40.0, 0.0f64..40.0), 1..50)
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let u = theil_u(&a, &b).unwrap().u;
            prop_assert!((0.0..=1.0).contains(&u));
            prop_assert_eq!(u, theil_u(&b, &a).unwrap().u);
        }

        #[test]
        fn theil_duplication_invariant(a in prop::collection::vec(0.1f64..40.0, 1..30), shift in 0.0f64..5.0) {
            let b: Vec<f64> = a.iter().map(|x| x + shift).collect();
            let dup = |v: &[f64]| v.iter().flat_map(|x| [*x, *x]).collect::<Vec<_>>();
            let u1 = theil_u(&a, &b).unwrap().u;
            let u2 = theil_u(&dup(&a), &dup(&b)).unwrap().u;
            prop_assert!((u1 - u2).abs() <= 1e-12 * u1.max(1e-300) + 1e-15);
        }

        #[test]
        fn quartiles_match_sorting_oracle(v in prop::collection::vec(-100.0f64..100.0, 1..60)) {
            let s = summarize_errors(&v).unwrap();
            let mut sorted = v.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let pct = |p: f64| {
                let pos = p * (sorted.len() - 1) as f64;
                let i = pos as usize;
                if i + 1 < sorted.len() {
                    sorted[i] * (1.0 - (pos - i as f64)) + sorted[i + 1] * (pos - i as f64)
                } else {
                    sorted[i]
                }
            };
            prop_assert!((s.q1 - pct(0.25)).abs() < 1e-9);
            prop_assert!((s.median - pct(0.5)).abs() < 1e-9);
            prop_assert!((s.q3 - pct(0.75)).abs() < 1e-9);
            prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
        }
    }
}
