//! Forward simulation of the traffic actor through a recorded merge event.
//!
//! Every actor except the TA replays its recorded track (zero-order hold).
//! The TA's longitudinal state evolves under the configured model with
//! forward Euler; its lateral position and lane are taken from the record.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::association::{resolve_for, Ego, Neighbor};
use crate::event::{
    ActorKind, ActorTrack, LeaderView, MergeEvent, DEFAULT_SAMPLE_INTERVAL, DRIVER_OFFSET,
};
use crate::geometry::visual_angle;
use crate::metrics::{EvalWindow, MetricsError};
use crate::models::{MergeGeometry, Model, ModelError, ModelInput};
use crate::params::{ModelKind, ModelParams, ParamError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum FallbackPolicy {
    /// Track the recorded speed profile, keeping the current speed offset.
    #[default]
    RawProfile,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub step: f64,
    pub params: ModelParams,
    pub fallback: FallbackPolicy,
    /// Simulated span; the event's evaluation window when `None`.
    pub window: Option<EvalWindow>,
    pub driver_offset: f64,
}

impl SimConfig {
    pub fn new(params: ModelParams) -> Self {
        Self {
            step: DEFAULT_SAMPLE_INTERVAL,
            params,
            fallback: FallbackPolicy::RawProfile,
            window: None,
            driver_offset: DRIVER_OFFSET,
        }
    }

    pub fn defaults(kind: ModelKind) -> Self {
        Self::new(ModelParams::defaults(kind))
    }

    pub fn with_window(mut self, window: EvalWindow) -> Self {
        self.window = Some(window);
        self
    }

    pub fn model_kind(&self) -> ModelKind {
        self.params.model_kind
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("event has no TA track")]
    MissingTa,
    #[error("track '{0}' not found")]
    UnknownActor(String),
    #[error("step {step} s is incompatible with the sampling interval {interval} s")]
    IncompatibleStep { step: f64, interval: f64 },
    #[error("TA has no sample inside the simulation window")]
    NoInitialState,
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Window(#[from] MetricsError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum FallbackReason {
    NoLeader,
    PassedLeader,
    ModelError(String),
}

impl fmt::Display for FallbackReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FallbackReason::NoLeader => f.write_str("no_leader"),
            FallbackReason::PassedLeader => f.write_str("passed_leader"),
            FallbackReason::ModelError(e) => write!(f, "model_error: {e}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub la_id: Option<String>,
    pub ma_id: Option<String>,
    /// Model state label, or "fallback".
    pub state: &'static str,
    pub clamped: bool,
    pub fallback: Option<FallbackReason>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimResult {
    pub event_id: String,
    pub model_kind: ModelKind,
    pub times: Vec<f64>,
    pub ta_speed: Vec<f64>,
    pub ta_s: Vec<f64>,
    /// Acceleration applied from each grid point to the next.
    pub accel: Vec<f64>,
    /// Recorded TA speed on the same grid.
    pub raw_speed: Vec<f64>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl SimResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn fallback_fraction(&self) -> f64 {
        if self.diagnostics.is_empty() {
            return 0.0;
        }
        let n = self
            .diagnostics
            .iter()
            .filter(|d| d.fallback.is_some())
            .count();
        n as f64 / self.diagnostics.len() as f64
    }

    /// Indices of grid points inside `window`.
    pub fn indices_in(&self, window: &EvalWindow) -> Vec<usize> {
        (0..self.times.len())
            .filter(|&i| window.contains(self.times[i]))
            .collect()
    }
}

/// Per-step evaluation for one ego actor. Carries the previous visual angles
/// between calls.
pub struct Stepper<'a> {
    event: &'a MergeEvent,
    ego: &'a ActorTrack,
    model: Model,
    step: f64,
    driver_offset: f64,
    prev_la: Option<(String, f64)>,
    prev_ma: Option<(String, f64)>,
}

fn leader_view(n: &Neighbor<'_>, driver: f64, ego_t: f64) -> LeaderView {
    LeaderView {
        ds: n.rear() - driver,
        dt: n.sample.t - ego_t,
        v_l: n.sample.speed,
        a_l: n.sample.accel,
        width: n.track.width,
    }
}

/// Previous angle if it belongs to the same actor.
fn prev_for(prev: &Option<(String, f64)>, n: Option<&Neighbor<'_>>) -> Option<f64> {
    match (prev, n) {
        (Some((id, th)), Some(n)) if *id == n.track.actor_id => Some(*th),
        _ => None,
    }
}

impl<'a> Stepper<'a> {
    pub fn new(event: &'a MergeEvent, ego_id: &str, config: &SimConfig) -> Result<Self, SimError> {
        let ego = event
            .track_by_id(ego_id)
            .ok_or_else(|| SimError::UnknownActor(ego_id.to_string()))?;
        Ok(Self {
            event,
            ego,
            model: Model::from_params(&config.params)?,
            step: config.step,
            driver_offset: config.driver_offset,
            prev_la: None,
            prev_ma: None,
        })
    }

    pub fn ego(&self) -> &'a ActorTrack {
        self.ego
    }

    /// Control output at `time` for the ego at longitudinal position `s`
    /// moving at `v`. `None` accel means the fallback policy applies.
    pub fn evaluate(&mut self, time: f64, s: f64, v: f64) -> (Option<f64>, StepDiagnostics) {
        let recorded = self.ego.sample_at(time);
        let (ego_t, lane) = recorded.map_or((0.0, 0), |r| (r.t, r.lane_id));
        let ego = Ego {
            actor_id: &self.ego.actor_id,
            s,
            lane,
            length: self.ego.length,
        };
        let resolved = resolve_for(self.event, time, &ego, self.driver_offset);
        let driver = ego.driver_ref(self.driver_offset);
        let geom = &self.event.geometry;

        let la_view = resolved.la.map(|n| leader_view(&n, driver, ego_t));
        let ma_view = resolved.ma.map(|n| leader_view(&n, driver, ego_t));

        let theta =
            |view: &Option<LeaderView>| view.and_then(|v| visual_angle(v.ds, v.dt, v.width).ok());
        let theta_la = theta(&la_view);
        let theta_ma = theta(&ma_view);

        let ma_geometry = resolved.ma.map(|ma| {
            let gap_lo = ego.front();
            let gap_hi = resolved.la.map_or(f64::INFINITY, |la| la.rear());
            let overlap = (ma.front().min(gap_hi) - ma.rear().max(gap_lo)).max(0.0);
            let line = geom.boundary_between(ma.sample.lane_id, lane);
            MergeGeometry {
                ma_length: ma.track.length,
                gap_overlap: overlap,
                dt_to_lane_line: (ma.sample.t - line).abs(),
                lane_width: geom.lane_width,
                dist_ma_to_ramp_end: geom.ramp_end_s - ma.front(),
                theta_ma_prev: prev_for(&self.prev_ma, resolved.ma.as_ref()),
                theta_la_prev: prev_for(&self.prev_la, resolved.la.as_ref()),
            }
        });

        let input = ModelInput {
            v,
            la_view,
            ma_view,
            ma_geometry,
            step: self.step,
        };

        self.prev_la = resolved
            .la
            .zip(theta_la)
            .map(|(n, th)| (n.track.actor_id.clone(), th));
        self.prev_ma = resolved
            .ma
            .zip(theta_ma)
            .map(|(n, th)| (n.track.actor_id.clone(), th));

        let mut diag = StepDiagnostics {
            la_id: resolved.la.map(|n| n.track.actor_id.clone()),
            ma_id: resolved.ma.map(|n| n.track.actor_id.clone()),
            state: "fallback",
            clamped: false,
            fallback: None,
        };
        let fallback = match resolved.la {
            None => Some(FallbackReason::NoLeader),
            Some(la) if ego.front() > la.rear() => Some(FallbackReason::PassedLeader),
            Some(_) => None,
        };
        if let Some(reason) = fallback {
            diag.fallback = Some(reason);
            return (None, diag);
        }
        match self.model.accel(&input) {
            Ok(out) => {
                diag.state = out.state;
                diag.clamped = out.clamped;
                (Some(out.accel), diag)
            }
            Err(ModelError::NoLeader) => {
                diag.fallback = Some(FallbackReason::NoLeader);
                (None, diag)
            }
            Err(e) => {
                diag.fallback = Some(FallbackReason::ModelError(e.to_string()));
                (None, diag)
            }
        }
    }
}

fn step_compatible(step: f64, interval: f64) -> bool {
    if !(step > 0.0 && step.is_finite()) {
        return false;
    }
    let ratio = if step <= interval {
        interval / step
    } else {
        step / interval
    };
    (ratio - ratio.round()).abs() < 1e-6
}

/// TA span clipped to the event's common range.
pub fn full_window(event: &MergeEvent) -> Result<EvalWindow, SimError> {
    let ta = event.track(ActorKind::Ta).ok_or(SimError::MissingTa)?;
    let (lo, hi) = event.time_range();
    Ok(EvalWindow::new(
        lo.max(ta.start_time()),
        hi.min(ta.end_time()),
    )?)
}

/// Rolls the event's TA forward under `config`.
pub fn simulate_event(event: &MergeEvent, config: &SimConfig) -> Result<SimResult, SimError> {
    let ta = event.track(ActorKind::Ta).ok_or(SimError::MissingTa)?;
    if ta.samples.len() < 2 {
        return Err(SimError::NoInitialState);
    }
    let interval = ta.samples[1].time - ta.samples[0].time;
    if !step_compatible(config.step, interval) {
        return Err(SimError::IncompatibleStep {
            step: config.step,
            interval,
        });
    }
    let window = match config.window {
        Some(w) => w,
        None => EvalWindow::for_event(event)?,
    };
    let first = ta
        .first_index_from(window.t_start)
        .ok_or(SimError::NoInitialState)?;
    let init = ta.samples[first];
    let t_end = window.t_end.min(ta.end_time());
    if init.time > t_end + 1e-9 {
        return Err(SimError::NoInitialState);
    }
    let n_steps = ((t_end - init.time) / config.step + 1e-9).floor() as usize;

    let mut stepper = Stepper::new(event, &ta.actor_id, config)?;
    let raw_at = |time: f64| ta.sample_at(time).copied().unwrap_or(init);

    let n = n_steps + 1;
    let mut out = SimResult {
        event_id: event.event_id.clone(),
        model_kind: config.model_kind(),
        times: Vec::with_capacity(n),
        ta_speed: Vec::with_capacity(n),
        ta_s: Vec::with_capacity(n),
        accel: Vec::with_capacity(n),
        raw_speed: Vec::with_capacity(n),
        diagnostics: Vec::with_capacity(n),
    };

    let (mut s, mut v) = (init.s, init.speed);
    for k in 0..n {
        let time = init.time + k as f64 * config.step;
        let raw = raw_at(time);
        let (accel, diag) = stepper.evaluate(time, s, v);
        out.times.push(time);
        out.ta_speed.push(v);
        out.ta_s.push(s);
        out.raw_speed.push(raw.speed);

        let next_time = init.time + (k + 1) as f64 * config.step;
        let (applied, v_next) = match accel {
            Some(a) => (a, (v + a * config.step).max(0.0)),
            None => match config.fallback {
                FallbackPolicy::RawProfile => {
                    let offset = v - raw.speed;
                    (raw.accel, (raw_at(next_time).speed + offset).max(0.0))
                }
            },
        };
        out.accel.push(applied);
        out.diagnostics.push(diag);
        s += v * config.step;
        v = v_next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::tests::{straight_track, well_formed_event};

    #[test]
    fn kinematics_are_euler_consistent() {
        let ev = well_formed_event();
        let res = simulate_event(&ev, &SimConfig::defaults(ModelKind::MrIdm)).unwrap();
        assert!(res.len() > 10);
        for k in 1..res.len() {
            let ds = res.ta_s[k - 1] + res.ta_speed[k - 1] * 0.1;
            assert_eq!(res.ta_s[k], ds);
            assert!(res.ta_speed[k] >= 0.0);
        }
        let again = simulate_event(&ev, &SimConfig::defaults(ModelKind::MrIdm)).unwrap();
        assert_eq!(res, again);
    }

    #[test]
    fn no_leader_replays_raw_profile() {
        let mut ev = well_formed_event();
        ev.tracks
            .retain(|t| t.kind != ActorKind::La && t.kind != ActorKind::Ma);
        // A varying raw profile so replay is not trivially constant.
        for (i, s) in ev.tracks[0].samples.iter_mut().enumerate() {
            s.speed = 20.0 + (i as f64 * 0.1).sin();
        }
        let cfg =
            SimConfig::defaults(ModelKind::Idm).with_window(EvalWindow::new(0.0, 15.0).unwrap());
        let res = simulate_event(&ev, &cfg).unwrap();
        assert_eq!(res.ta_speed, res.raw_speed);
        assert!(res
            .diagnostics
            .iter()
            .all(|d| d.fallback == Some(FallbackReason::NoLeader)));
    }

    #[test]
    fn passing_the_leader_triggers_fallback() {
        let mut ev = well_formed_event();
        ev.tracks.retain(|t| t.kind != ActorKind::Ma);
        // LA center 3 m ahead of the TA center: bumpers overlap.
        ev.tracks[1] = straight_track("la", ActorKind::La, 103.0, 0.0, 25.0, 151);
        let cfg =
            SimConfig::defaults(ModelKind::Idm).with_window(EvalWindow::new(0.0, 2.0).unwrap());
        let res = simulate_event(&ev, &cfg).unwrap();
        assert_eq!(
            res.diagnostics[0].fallback,
            Some(FallbackReason::PassedLeader)
        );
    }

    #[test]
    fn step_must_divide_interval() {
        let ev = well_formed_event();
        let mut cfg = SimConfig::defaults(ModelKind::Idm);
        cfg.step = 0.03;
        assert!(matches!(
            simulate_event(&ev, &cfg),
            Err(SimError::IncompatibleStep { .. })
        ));
        cfg.step = 0.05;
        assert!(simulate_event(&ev, &cfg).is_ok());
    }

    #[test]
    fn looming_outside_domain_falls_back() {
        let mut ev = well_formed_event();
        ev.tracks.retain(|t| t.kind != ActorKind::Ma);
        let cfg =
            SimConfig::defaults(ModelKind::Looming).with_window(EvalWindow::new(0.0, 1.0).unwrap());
        let res = simulate_event(&ev, &cfg).unwrap();
        assert!(matches!(
            res.diagnostics[0].fallback,
            Some(FallbackReason::ModelError(_))
        ));
    }
}
