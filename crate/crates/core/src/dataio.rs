//! Event files, corpus loading and filtering, and synthetic event generation.
//!
//! One JSON document per event (`*.event.json`):
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "event_id": "ev-001",
//!   "geometry": {"centerline": [[0, 0], [1000, 0]], "lane_width": 3.5,
//!                "hard_nose_s": 150, "ramp_end_s": 400},
//!   "actors": [
//!     {"actor_id": "ta", "kind": "TA", "length": 4.5, "width": 1.9,
//!      "columns": ["time", "s", "t", "speed", "accel"],
//!      "samples": [[0.0, 100.0, 0.0, 25.0, 0.0], ...]}
//!   ]
//! }
//! ```
//!
//! Tracks may use `x`/`y` columns instead of `s`/`t`; those are projected
//! onto the centerline. `accel` is optional and `lane_id` is always recomputed
//! from `t`. `merge_time` and `interaction_start` are derived when absent.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::resolve_associations;
use crate::event::{
    is_uniform, validate_event, ActorKind, ActorTrack, MergeEvent, RoadGeometry, TrajectorySample,
    Violation, DEFAULT_SAMPLE_INTERVAL, SAMPLING_TOLERANCE,
};
use crate::geometry::xy_to_st;
use crate::params::{ModelKind, ModelParams, ParamError};
use crate::simulate::{full_window, simulate_event, SimConfig, SimError};

pub const SCHEMA_VERSION: u32 = 1;
pub const EVENT_SUFFIX: &str = ".event.json";
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported schema_version {0}")]
    Schema(u32),
    #[error("actor '{actor_id}': {problem}")]
    Track { actor_id: String, problem: String },
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("generator rollout: {0}")]
    Rollout(#[from] SimError),
    #[error(transparent)]
    Params(#[from] ParamError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Serialize, Deserialize)]
struct GeometryFile {
    centerline: Vec<[f64; 2]>,
    lane_width: f64,
    #[serde(default = "ramp_lane")]
    ramp_lane_id: i32,
    hard_nose_s: f64,
    ramp_end_s: f64,
}

fn ramp_lane() -> i32 {
    -1
}

#[derive(Serialize, Deserialize)]
struct ActorFile {
    actor_id: String,
    kind: ActorKind,
    length: f64,
    width: f64,
    columns: Vec<String>,
    samples: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct EventFile {
    schema_version: u32,
    event_id: String,
    geometry: GeometryFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    merge_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    interaction_start: Option<f64>,
    actors: Vec<ActorFile>,
}

const SAVED_COLUMNS: [&str; 5] = ["time", "s", "t", "speed", "accel"];

fn track_err(actor_id: &str, problem: impl Into<String>) -> DataError {
    DataError::Track {
        actor_id: actor_id.to_string(),
        problem: problem.into(),
    }
}

/// Centered-difference acceleration, one-sided at the ends.
pub fn derive_accel(samples: &mut [TrajectorySample]) {
    let n = samples.len();
    if n < 2 {
        for s in samples.iter_mut() {
            s.accel = 0.0;
        }
        return;
    }
    let acc: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (samples[b].speed - samples[a].speed) / (samples[b].time - samples[a].time)
        })
        .collect();
    for (s, a) in samples.iter_mut().zip(acc) {
        s.accel = a;
    }
}

/// Linear resampling onto `start + k * interval`.
pub fn resample_uniform(samples: &[TrajectorySample], interval: f64) -> Vec<TrajectorySample> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    let last = samples[samples.len() - 1].time;
    let n = ((last - first.time) / interval + 1e-9).floor() as usize + 1;
    let mut j = 0;
    (0..n)
        .map(|k| {
            let time = first.time + k as f64 * interval;
            while j + 2 < samples.len() && samples[j + 1].time < time {
                j += 1;
            }
            let (a, b) = if samples.len() == 1 {
                (&samples[0], &samples[0])
            } else {
                (&samples[j], &samples[j + 1])
            };
            let w = if b.time > a.time {
                ((time - a.time) / (b.time - a.time)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mix = |x: f64, y: f64| x + w * (y - x);
            TrajectorySample {
                time,
                s: mix(a.s, b.s),
                t: mix(a.t, b.t),
                speed: mix(a.speed, b.speed),
                accel: mix(a.accel, b.accel),
                lane_id: a.lane_id,
            }
        })
        .collect()
}

fn parse_track(actor: ActorFile, geometry: &RoadGeometry) -> Result<ActorTrack, DataError> {
    let id = actor.actor_id.as_str();
    let col = |name: &str| actor.columns.iter().position(|c| c == name);
    let time = col("time").ok_or_else(|| track_err(id, "missing column 'time'"))?;
    let speed = col("speed").ok_or_else(|| track_err(id, "missing column 'speed'"))?;
    let accel = col("accel");
    let planar = match (col("s"), col("t"), col("x"), col("y")) {
        (Some(s), Some(t), _, _) => (s, t, false),
        (_, _, Some(x), Some(y)) => (x, y, true),
        _ => return Err(track_err(id, "needs either s/t or x/y columns")),
    };
    if actor.samples.is_empty() {
        return Err(track_err(id, "no samples"));
    }

    let mut samples = Vec::with_capacity(actor.samples.len());
    for (i, row) in actor.samples.iter().enumerate() {
        if row.len() != actor.columns.len() {
            return Err(track_err(
                id,
                format!(
                    "row {i} has {} values, expected {}",
                    row.len(),
                    actor.columns.len()
                ),
            ));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(track_err(id, format!("row {i} has non-finite values")));
        }
        let (s, t) = if planar.2 {
            let p = xy_to_st([row[planar.0], row[planar.1]], &geometry.centerline)
                .map_err(|e| track_err(id, format!("row {i}: {e}")))?;
            (p.position.s, p.position.t)
        } else {
            (row[planar.0], row[planar.1])
        };
        samples.push(TrajectorySample {
            time: row[time],
            s,
            t,
            speed: row[speed],
            accel: accel.map_or(0.0, |a| row[a]),
            lane_id: geometry.lane_of(t),
        });
    }
    if let Some(w) = samples.windows(2).find(|w| w[1].time <= w[0].time) {
        return Err(track_err(
            id,
            format!("non-increasing time at {}", w[1].time),
        ));
    }
    if let Some(bad) = samples.iter().find(|s| s.speed < 0.0) {
        return Err(track_err(id, format!("negative speed at {}", bad.time)));
    }
    if !(actor.length > 0.0 && actor.width > 0.0) {
        return Err(track_err(id, "length and width must be positive"));
    }
    if accel.is_none() {
        derive_accel(&mut samples);
    }
    if !is_uniform(&samples, DEFAULT_SAMPLE_INTERVAL, SAMPLING_TOLERANCE) {
        samples = resample_uniform(&samples, DEFAULT_SAMPLE_INTERVAL);
        for s in &mut samples {
            s.lane_id = geometry.lane_of(s.t);
        }
    }
    Ok(ActorTrack {
        actor_id: actor.actor_id,
        kind: actor.kind,
        length: actor.length,
        width: actor.width,
        samples,
    })
}

/// First instant the MA shares the TA's lane; the end of the common range if never.
pub fn compute_merge_time(event: &MergeEvent) -> f64 {
    let end = event.time_range().1;
    let (Some(ta), Some(ma)) = (event.track(ActorKind::Ta), event.track(ActorKind::Ma)) else {
        return end;
    };
    ma.samples
        .iter()
        .find(|m| ta.sample_at(m.time).is_some_and(|t| t.lane_id == m.lane_id))
        .map_or(end, |m| m.time)
}

/// First TA sample time at which the MA is associated as the merging actor,
/// no later than `merge_time`; the start of the common range if never.
pub fn compute_interaction_start(event: &MergeEvent, merge_time: f64) -> f64 {
    let start = event.time_range().0;
    let (Some(ta), Some(ma)) = (event.track(ActorKind::Ta), event.track(ActorKind::Ma)) else {
        return start;
    };
    ta.samples
        .iter()
        .filter(|s| s.time >= start && s.time <= merge_time)
        .find(|s| {
            resolve_associations(event, s.time)
                .and_then(|a| a.ma_id)
                .is_some_and(|id| id == ma.actor_id)
        })
        .map_or(start, |s| s.time)
}

fn parse_event(text: &str, path: &str) -> Result<MergeEvent, DataError> {
    let file: EventFile = serde_json::from_str(text).map_err(|e| DataError::Parse {
        path: path.to_string(),
        message: e.to_string(),
    })?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(DataError::Schema(file.schema_version));
    }
    let g = file.geometry;
    let geometry = RoadGeometry {
        centerline: g.centerline,
        lane_width: g.lane_width,
        ramp_lane_id: g.ramp_lane_id,
        hard_nose_s: g.hard_nose_s,
        ramp_end_s: g.ramp_end_s,
    };
    let problems = geometry.problems();
    if !problems.is_empty() {
        return Err(DataError::Geometry(problems.join("; ")));
    }
    let tracks = file
        .actors
        .into_iter()
        .map(|a| parse_track(a, &geometry))
        .collect::<Result<Vec<_>, _>>()?;
    let mut event = MergeEvent {
        event_id: file.event_id,
        tracks,
        geometry,
        merge_time: 0.0,
        interaction_start: 0.0,
    };
    event.merge_time = file
        .merge_time
        .unwrap_or_else(|| compute_merge_time(&event));
    event.interaction_start = file
        .interaction_start
        .unwrap_or_else(|| compute_interaction_start(&event, event.merge_time));
    Ok(event)
}

pub fn load_event(path: &Path) -> Result<MergeEvent, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_event(&text, &path.display().to_string())
}

pub fn event_to_json(event: &MergeEvent) -> String {
    let g = &event.geometry;
    let file = EventFile {
        schema_version: SCHEMA_VERSION,
        event_id: event.event_id.clone(),
        geometry: GeometryFile {
            centerline: g.centerline.clone(),
            lane_width: g.lane_width,
            ramp_lane_id: g.ramp_lane_id,
            hard_nose_s: g.hard_nose_s,
            ramp_end_s: g.ramp_end_s,
        },
        merge_time: Some(event.merge_time),
        interaction_start: Some(event.interaction_start),
        actors: event
            .tracks
            .iter()
            .map(|t| ActorFile {
                actor_id: t.actor_id.clone(),
                kind: t.kind,
                length: t.length,
                width: t.width,
                columns: SAVED_COLUMNS.iter().map(|c| c.to_string()).collect(),
                samples: t
                    .samples
                    .iter()
                    .map(|s| vec![s.time, s.s, s.t, s.speed, s.accel])
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("event serializes")
}

pub fn save_event(event: &MergeEvent, path: &Path) -> Result<(), DataError> {
    fs::write(path, event_to_json(event)).map_err(io_err(path))
}

/// File name used for an event inside a corpus directory.
pub fn event_file_name(event: &MergeEvent) -> String {
    let safe: String = event
        .event_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}{EVENT_SUFFIX}")
}

pub fn save_corpus(events: &[MergeEvent], dir: &Path) -> Result<Vec<PathBuf>, DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    events
        .iter()
        .map(|e| {
            let path = dir.join(event_file_name(e));
            save_event(e, &path).map(|_| path)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LoadDiagnostic {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct Corpus {
    pub events: Vec<MergeEvent>,
    pub diagnostics: Vec<LoadDiagnostic>,
}

/// Loads every `*.event.json` file in `dir`, in file-name order. Files that
/// fail to parse are reported in `diagnostics` and skipped.
pub fn load_corpus(dir: &Path) -> Result<Corpus, DataError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(EVENT_SUFFIX))
        })
        .collect();
    paths.sort();

    let loaded: Vec<(PathBuf, Result<MergeEvent, DataError>)> = paths
        .into_par_iter()
        .map(|p| {
            let r = load_event(&p);
            (p, r)
        })
        .collect();

    let mut corpus = Corpus::default();
    for (path, result) in loaded {
        match result {
            Ok(e) => corpus.events.push(e),
            Err(e) => corpus.diagnostics.push(LoadDiagnostic {
                path: path.display().to_string(),
                message: e.to_string(),
            }),
        }
    }
    Ok(corpus)
}

#[derive(Clone, Debug, Default)]
pub struct FilterReport {
    pub valid: Vec<MergeEvent>,
    pub rejected: Vec<(MergeEvent, Vec<Violation>)>,
    /// Events per violation category; an event counts once per category.
    pub tallies: BTreeMap<String, usize>,
}

pub fn filter_corpus(events: &[MergeEvent]) -> FilterReport {
    let mut report = FilterReport::default();
    for event in events {
        let violations = validate_event(event);
        if violations.is_empty() {
            report.valid.push(event.clone());
            continue;
        }
        let mut categories: Vec<&str> = violations.iter().map(Violation::category).collect();
        categories.sort_unstable();
        categories.dedup();
        for c in categories {
            *report.tallies.entry(c.to_string()).or_default() += 1;
        }
        report.rejected.push((event.clone(), violations));
    }
    report
}

/// Speed that is constant except for one constant-acceleration phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedProfile {
    pub initial: f64,
    pub accel: f64,
    pub accel_start: f64,
    pub accel_duration: f64,
}

impl Default for SpeedProfile {
    fn default() -> Self {
        Self::constant(25.0)
    }
}

impl SpeedProfile {
    pub fn constant(speed: f64) -> Self {
        Self {
            initial: speed,
            accel: 0.0,
            accel_start: 0.0,
            accel_duration: 0.0,
        }
    }

    fn active(&self, time: f64) -> bool {
        time >= self.accel_start && time < self.accel_start + self.accel_duration
    }

    pub fn speed(&self, time: f64) -> f64 {
        let dt = (time - self.accel_start).clamp(0.0, self.accel_duration);
        (self.initial + self.accel * dt).max(0.0)
    }

    pub fn accel_at(&self, time: f64) -> f64 {
        if self.active(time) && self.speed(time) > 0.0 {
            self.accel
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeaderSpec {
    /// Center-to-center distance ahead of the TA at time zero.
    pub gap: f64,
    pub speed: SpeedProfile,
}

impl Default for LeaderSpec {
    fn default() -> Self {
        Self {
            gap: 60.0,
            speed: SpeedProfile::constant(25.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeSpec {
    /// Center offset ahead of the TA at time zero.
    pub offset: f64,
    pub speed: SpeedProfile,
    /// Start of the lateral move from the ramp lane center to the TA lane center.
    pub lateral_start: f64,
    pub lateral_duration: f64,
}

impl Default for MergeSpec {
    fn default() -> Self {
        Self {
            offset: 40.0,
            speed: SpeedProfile::constant(24.0),
            lateral_start: 6.0,
            lateral_duration: 4.0,
        }
    }
}

/// Random perturbations applied per generated event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JitterSpec {
    /// Half-width in metres for initial positions.
    pub position: f64,
    /// Half-width in m/s for initial speeds.
    pub speed: f64,
    /// Half-width in seconds for the lateral-move start.
    pub timing: f64,
    /// Half-width of generator parameter jitter as a fraction of each range.
    pub params: f64,
}

impl Default for JitterSpec {
    fn default() -> Self {
        Self {
            position: 2.0,
            speed: 0.5,
            timing: 0.5,
            params: 0.0,
        }
    }
}

/// Parametric description of a synthetic merge scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub duration: f64,
    pub lane_width: f64,
    pub road_length: f64,
    pub hard_nose_s: f64,
    pub ramp_end_s: f64,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    pub ta_start_s: f64,
    pub ta_speed: f64,
    pub la: Option<LeaderSpec>,
    pub ma: Option<MergeSpec>,
    /// Vehicles in the lane left of the TA, for scene-size testing.
    pub extra_traffic: usize,
    /// Model that drives the TA.
    pub generator: ModelParams,
    pub jitter: JitterSpec,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            duration: 20.0,
            lane_width: 3.5,
            road_length: 2000.0,
            hard_nose_s: 100.0,
            ramp_end_s: 600.0,
            vehicle_length: 4.5,
            vehicle_width: 1.9,
            ta_start_s: 100.0,
            ta_speed: 25.0,
            la: Some(LeaderSpec::default()),
            ma: Some(MergeSpec::default()),
            extra_traffic: 0,
            generator: ModelParams::defaults(ModelKind::MrIdm),
            jitter: JitterSpec::default(),
        }
    }
}

impl ScenarioSpec {
    /// Constant-speed leader, no merging actor.
    pub fn car_following() -> Self {
        Self {
            ma: None,
            ..Self::default()
        }
    }

    /// Ramp vehicle merging into the gap behind a gently braking LA.
    pub fn standard_merge() -> Self {
        Self {
            la: Some(LeaderSpec {
                gap: 60.0,
                speed: SpeedProfile {
                    initial: 25.0,
                    accel: -0.5,
                    accel_start: 4.0,
                    accel_duration: 4.0,
                },
            }),
            ..Self::default()
        }
    }

    /// Ramp vehicle that comes up from behind the TA, overtakes it on the
    /// ramp, settles to the main-lane speed and merges into the TA-LA gap.
    pub fn overtaking_merge() -> Self {
        Self {
            ta_speed: 22.0,
            la: Some(LeaderSpec {
                gap: 50.0,
                speed: SpeedProfile::constant(22.0),
            }),
            ma: Some(MergeSpec {
                offset: -10.0,
                speed: SpeedProfile {
                    initial: 27.0,
                    accel: -1.25,
                    accel_start: 5.0,
                    accel_duration: 4.0,
                },
                lateral_start: 9.0,
                lateral_duration: 4.0,
            }),
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidSpec(m.to_string()));
        if !(self.duration > 0.0) {
            return bad("duration must be positive");
        }
        if !(self.lane_width > 0.0 && self.vehicle_length > 0.0 && self.vehicle_width > 0.0) {
            return bad("lane and vehicle dimensions must be positive");
        }
        if !(self.hard_nose_s < self.ramp_end_s) {
            return bad("hard_nose_s must precede ramp_end_s");
        }
        if !(self.ta_speed >= 0.0) {
            return bad("ta_speed must be non-negative");
        }
        if let Some(la) = &self.la {
            if !(la.speed.initial >= 0.0) {
                return bad("LA speed must be non-negative");
            }
            if !(la.gap > self.vehicle_length) {
                return bad("LA gap must exceed the vehicle length");
            }
        }
        if let Some(ma) = &self.ma {
            if !(ma.speed.initial >= 0.0) {
                return bad("MA speed must be non-negative");
            }
            if !(ma.lateral_duration > 0.0 && ma.lateral_start >= 0.0) {
                return bad("MA lateral move needs a non-negative start and positive duration");
            }
            if ma.lateral_start + ma.lateral_duration > self.duration {
                return bad("MA lateral move must finish within the duration");
            }
        }
        if self.ta_start_s + self.vehicle_length > self.road_length {
            return bad("TA starts beyond the road end");
        }
        self.generator.validate()?;
        Ok(())
    }
}

fn jitter(rng: &mut ChaCha8Rng, half: f64) -> f64 {
    if half > 0.0 {
        rng.gen_range(-half..=half)
    } else {
        0.0
    }
}

fn profile_track(
    id: &str,
    kind: ActorKind,
    spec: &ScenarioSpec,
    s0: f64,
    speed: &SpeedProfile,
    lateral: impl Fn(f64) -> f64,
    geometry: &RoadGeometry,
) -> ActorTrack {
    let n = (spec.duration / DEFAULT_SAMPLE_INTERVAL + 1e-9).floor() as usize + 1;
    let mut s = s0;
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let time = k as f64 * DEFAULT_SAMPLE_INTERVAL;
        if k > 0 {
            let prev = time - DEFAULT_SAMPLE_INTERVAL;
            s += 0.5 * (speed.speed(prev) + speed.speed(time)) * DEFAULT_SAMPLE_INTERVAL;
        }
        let t = lateral(time);
        samples.push(TrajectorySample {
            time,
            s,
            t,
            speed: speed.speed(time),
            accel: speed.accel_at(time),
            lane_id: geometry.lane_of(t),
        });
    }
    ActorTrack {
        actor_id: id.to_string(),
        kind,
        length: spec.vehicle_length,
        width: spec.vehicle_width,
        samples,
    }
}

/// Builds an event from `spec`; the TA is driven by `spec.generator`.
///
/// The generator parameters actually used (after jitter) are returned too.
pub fn generate_synthetic_event_with_params(
    spec: &ScenarioSpec,
    seed: u64,
    event_id: &str,
) -> Result<(MergeEvent, ModelParams), DataError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geometry = RoadGeometry::straight(
        spec.road_length,
        spec.lane_width,
        spec.hard_nose_s,
        spec.ramp_end_s,
    );
    let w = spec.lane_width;

    let mut generator = spec.generator.clone();
    for name in generator
        .names()
        .into_iter()
        .map(str::to_string)
        .collect::<Vec<_>>()
    {
        let b = generator.bounds[&name];
        let v = generator.values[&name] + jitter(&mut rng, spec.jitter.params) * b.width();
        generator.values.insert(name, v.clamp(b.lo, b.hi));
    }

    let ta_speed = (spec.ta_speed + jitter(&mut rng, spec.jitter.speed)).max(0.0);
    let ta_placeholder = SpeedProfile::constant(ta_speed);
    let mut tracks = vec![profile_track(
        "ta",
        ActorKind::Ta,
        spec,
        spec.ta_start_s,
        &ta_placeholder,
        |_| 0.0,
        &geometry,
    )];

    if let Some(la) = &spec.la {
        let mut speed = la.speed;
        speed.initial = (speed.initial + jitter(&mut rng, spec.jitter.speed)).max(0.0);
        let gap = (la.gap + jitter(&mut rng, spec.jitter.position)).max(spec.vehicle_length + 0.5);
        tracks.push(profile_track(
            "la",
            ActorKind::La,
            spec,
            spec.ta_start_s + gap,
            &speed,
            |_| 0.0,
            &geometry,
        ));
    }
    if let Some(ma) = &spec.ma {
        let mut speed = ma.speed;
        speed.initial = (speed.initial + jitter(&mut rng, spec.jitter.speed)).max(0.0);
        let offset = ma.offset + jitter(&mut rng, spec.jitter.position);
        let start = (ma.lateral_start + jitter(&mut rng, spec.jitter.timing))
            .clamp(0.0, spec.duration - ma.lateral_duration);
        let dur = ma.lateral_duration;
        let lateral = move |time: f64| {
            let u = ((time - start) / dur).clamp(0.0, 1.0);
            -w * 0.5 * (1.0 + (std::f64::consts::PI * u).cos())
        };
        tracks.push(profile_track(
            "ma",
            ActorKind::Ma,
            spec,
            spec.ta_start_s + offset,
            &speed,
            lateral,
            &geometry,
        ));
    }
    for i in 0..spec.extra_traffic {
        let offset = -60.0 + 15.0 * i as f64 + jitter(&mut rng, spec.jitter.position);
        let speed = SpeedProfile::constant((ta_speed + jitter(&mut rng, 2.0)).max(0.0));
        let id = format!("x{i:02}");
        tracks.push(profile_track(
            &id,
            ActorKind::Other,
            spec,
            spec.ta_start_s + offset,
            &speed,
            |_| w,
            &geometry,
        ));
    }

    let mut event = MergeEvent {
        event_id: event_id.to_string(),
        tracks,
        geometry,
        merge_time: 0.0,
        interaction_start: 0.0,
    };

    // Drive the TA with the generator model over the whole scene.
    let config = SimConfig::new(generator.clone()).with_window(full_window(&event)?);
    let rollout = simulate_event(&event, &config)?;
    let ta = &mut event.tracks[0];
    for (k, sample) in ta.samples.iter_mut().enumerate().take(rollout.len()) {
        sample.s = rollout.ta_s[k];
        sample.speed = rollout.ta_speed[k];
        sample.accel = rollout.accel[k];
    }
    ta.samples.truncate(rollout.len());

    event.merge_time = compute_merge_time(&event);
    event.interaction_start = compute_interaction_start(&event, event.merge_time);
    Ok((event, generator))
}

pub fn generate_synthetic_event(spec: &ScenarioSpec, seed: u64) -> Result<MergeEvent, DataError> {
    generate_synthetic_event_with_params(spec, seed, &format!("syn-{seed:016x}")).map(|(e, _)| e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::tests::well_formed_event;

    #[test]
    fn json_round_trip() {
        let ev = well_formed_event();
        let back = parse_event(&event_to_json(&ev), "mem").unwrap();
        assert_eq!(back, ev);
    }

    #[test]
    fn accel_is_derived_when_missing() {
        let mut ev = well_formed_event();
        for (i, s) in ev.tracks[0].samples.iter_mut().enumerate() {
            s.speed = 20.0 + 0.5 * i as f64 * 0.1;
        }
        let json = event_to_json(&ev).replace("\"accel\"", "\"unused\"");
        let back = parse_event(&json, "mem").unwrap();
        assert!(back.tracks[0]
            .samples
            .iter()
            .all(|s| (s.accel - 0.5).abs() < 1e-9));
    }

    #[test]
    fn derived_merge_and_interaction() {
        let mut ev = well_formed_event();
        ev.merge_time = 0.0;
        assert_eq!(compute_merge_time(&ev), 8.0);
        // MA rear 37 m ahead of the TA driver at t = 0, closing at 1 m/s.
        assert_eq!(compute_interaction_start(&ev, 8.0), 0.0);
    }

    #[test]
    fn resampling_hits_the_grid() {
        let track = &well_formed_event().tracks[0];
        let sparse: Vec<TrajectorySample> = track.samples.iter().step_by(3).copied().collect();
        let dense = resample_uniform(&sparse, 0.1);
        assert_eq!(dense.len(), 151);
        for (a, b) in dense.iter().zip(&track.samples) {
            assert!((a.time - b.time).abs() < 1e-9);
            assert!((a.s - b.s).abs() < 1e-9);
        }
    }

    #[test]
    fn xy_variant_is_projected() {
        let ev = well_formed_event();
        let json = event_to_json(&ev).replace("\"s\",\n        \"t\"", "\"x\",\n        \"y\"");
        let back = parse_event(&json, "mem").unwrap();
        assert_eq!(back.tracks[2].samples[0].t, -3.5);
        assert_eq!(back.tracks[2].samples[0].lane_id, -1);
    }

    #[test]
    fn inconsistent_spec_is_named() {
        let spec = ScenarioSpec {
            hard_nose_s: 700.0,
            ..ScenarioSpec::default()
        };
        let err = generate_synthetic_event(&spec, 1).unwrap_err();
        assert!(err
            .to_string()
            .contains("hard_nose_s must precede ramp_end_s"));
        let spec = ScenarioSpec {
            ta_speed: -1.0,
            ..ScenarioSpec::default()
        };
        assert!(generate_synthetic_event(&spec, 1).is_err());
    }

    #[test]
    fn generated_merge_passes_filters() {
        let ev = generate_synthetic_event(&ScenarioSpec::standard_merge(), 7).unwrap();
        assert_eq!(validate_event(&ev), vec![]);
        assert!(ev.interaction_start < ev.merge_time);
        let again = generate_synthetic_event(&ScenarioSpec::standard_merge(), 7).unwrap();
        assert_eq!(ev, again);
    }

    #[test]
    fn car_following_lacks_only_the_ma() {
        let ev = generate_synthetic_event(&ScenarioSpec::car_following(), 3).unwrap();
        assert_eq!(
            validate_event(&ev),
            vec![Violation::MissingActor(ActorKind::Ma)]
        );
    }
}
