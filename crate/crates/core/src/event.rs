//! Actor tracks, road geometry and merge events.
//!
//! Positions are lane-based: `s` runs along the road centerline and `t` is the
//! signed lateral offset (left positive). A sample's `s` refers to the vehicle
//! center, so bumpers sit at `s ± length / 2`.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Nominal sampling interval of recorded tracks (10 Hz).
pub const DEFAULT_SAMPLE_INTERVAL: f64 = 0.1;

/// Relative tolerance on the sampling interval.
pub const SAMPLING_TOLERANCE: f64 = 0.01;

/// Distance of the traffic actor's driver reference point behind its front bumper.
pub const DRIVER_OFFSET: f64 = 1.5;

/// Minimum amount of common TA/LA/MA data an event must carry.
pub const MIN_EVENT_DURATION: f64 = 10.0;

/// Slack used when matching query times against sample times.
pub const TIME_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub time: f64,
    pub s: f64,
    pub t: f64,
    pub speed: f64,
    pub accel: f64,
    pub lane_id: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActorKind {
    #[serde(rename = "TA")]
    Ta,
    #[serde(rename = "LA")]
    La,
    #[serde(rename = "MA")]
    Ma,
    #[serde(rename = "FA")]
    Fa,
    #[serde(rename = "OTHER")]
    Other,
}

impl fmt::Display for ActorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ActorKind::Ta => "TA",
            ActorKind::La => "LA",
            ActorKind::Ma => "MA",
            ActorKind::Fa => "FA",
            ActorKind::Other => "OTHER",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorTrack {
    pub actor_id: String,
    pub kind: ActorKind,
    pub length: f64,
    pub width: f64,
    pub samples: Vec<TrajectorySample>,
}

impl ActorTrack {
    pub fn start_time(&self) -> f64 {
        self.samples.first().map_or(f64::NAN, |s| s.time)
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().map_or(f64::NAN, |s| s.time)
    }

    /// Whether `time` falls inside the recorded span.
    pub fn covers(&self, time: f64) -> bool {
        !self.samples.is_empty()
            && time >= self.start_time() - TIME_EPS
            && time <= self.end_time() + TIME_EPS
    }

    /// Zero-order hold lookup: the last sample at or before `time`.
    ///
    /// Returns `None` outside the recorded span.
    pub fn sample_at(&self, time: f64) -> Option<&TrajectorySample> {
        if !self.covers(time) {
            return None;
        }
        let idx = self
            .samples
            .partition_point(|s| s.time <= time + TIME_EPS)
            .saturating_sub(1);
        self.samples.get(idx)
    }

    /// Index of the first sample at or after `time`.
    pub fn first_index_from(&self, time: f64) -> Option<usize> {
        let idx = self.samples.partition_point(|s| s.time < time - TIME_EPS);
        (idx < self.samples.len()).then_some(idx)
    }

    pub fn front(&self, sample: &TrajectorySample) -> f64 {
        sample.s + 0.5 * self.length
    }

    pub fn rear(&self, sample: &TrajectorySample) -> f64 {
        sample.s - 0.5 * self.length
    }

    /// Whether `lane_id` ever changes along the track.
    pub fn changes_lane(&self) -> bool {
        self.samples
            .windows(2)
            .any(|w| w[0].lane_id != w[1].lane_id)
    }

    fn violations(&self, cfg: &ValidationConfig, out: &mut Vec<Violation>) {
        let id = || self.actor_id.clone();
        if !(self.length > 0.0 && self.width > 0.0) {
            out.push(Violation::BadDimensions { actor_id: id() });
        }
        if self.samples.len() < 2 {
            out.push(Violation::TrackTooShort { actor_id: id() });
        }
        let finite = self.samples.iter().all(|s| {
            s.time.is_finite()
                && s.s.is_finite()
                && s.t.is_finite()
                && s.speed.is_finite()
                && s.accel.is_finite()
        });
        if !finite {
            out.push(Violation::NonFinite { actor_id: id() });
            return;
        }
        if let Some(bad) = self.samples.iter().find(|s| s.speed < 0.0) {
            out.push(Violation::NegativeSpeed {
                actor_id: id(),
                time: bad.time,
            });
        }
        if let Some(w) = self.samples.windows(2).find(|w| w[1].time <= w[0].time) {
            out.push(Violation::NonIncreasingTime {
                actor_id: id(),
                time: w[1].time,
            });
        } else if !is_uniform(&self.samples, cfg.sample_interval, cfg.sampling_tolerance) {
            out.push(Violation::NonUniformSampling { actor_id: id() });
        }
    }
}

/// Whether consecutive sample times are spaced `interval` apart within `rel_tol`.
pub fn is_uniform(samples: &[TrajectorySample], interval: f64, rel_tol: f64) -> bool {
    samples.windows(2).all(|w| {
        let dt = w[1].time - w[0].time;
        (dt - interval).abs() <= rel_tol * interval
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadGeometry {
    pub centerline: Vec<[f64; 2]>,
    pub lane_width: f64,
    pub ramp_lane_id: i32,
    pub hard_nose_s: f64,
    pub ramp_end_s: f64,
}

impl RoadGeometry {
    /// Straight road along +x starting at the origin.
    pub fn straight(length: f64, lane_width: f64, hard_nose_s: f64, ramp_end_s: f64) -> Self {
        Self {
            centerline: vec![[0.0, 0.0], [length, 0.0]],
            lane_width,
            ramp_lane_id: -1,
            hard_nose_s,
            ramp_end_s,
        }
    }

    /// Lane index for a lateral offset. Lane `k` spans `[(k - 0.5) w, (k + 0.5) w)`.
    pub fn lane_of(&self, t: f64) -> i32 {
        (t / self.lane_width + 0.5).floor() as i32
    }

    /// Lateral position of the boundary shared by two adjacent lanes.
    pub fn boundary_between(&self, lane_a: i32, lane_b: i32) -> f64 {
        (lane_a.max(lane_b) as f64 - 0.5) * self.lane_width
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.centerline.len() < 2 {
            out.push("centerline needs at least 2 points".to_string());
        }
        if self.centerline.iter().flatten().any(|c| !c.is_finite()) {
            out.push("centerline has non-finite coordinates".to_string());
        }
        if self.centerline.windows(2).any(|w| w[0] == w[1]) {
            out.push("centerline has repeated consecutive points".to_string());
        }
        if !(self.lane_width > 0.0) {
            out.push("lane_width must be positive".to_string());
        }
        if !(self.hard_nose_s < self.ramp_end_s) {
            out.push("hard_nose_s must precede ramp_end_s".to_string());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub event_id: String,
    pub tracks: Vec<ActorTrack>,
    pub geometry: RoadGeometry,
    /// First instant the MA center is laterally inside the TA's lane.
    pub merge_time: f64,
    /// First instant the MA is relevant to the TA.
    pub interaction_start: f64,
}

impl MergeEvent {
    /// First track of the given kind.
    pub fn track(&self, kind: ActorKind) -> Option<&ActorTrack> {
        self.tracks.iter().find(|t| t.kind == kind)
    }

    pub fn track_by_id(&self, id: &str) -> Option<&ActorTrack> {
        self.tracks.iter().find(|t| t.actor_id == id)
    }

    /// Time span shared by the TA, LA and MA tracks that are present.
    ///
    /// Falls back to the union of all tracks when none of them exist.
    pub fn time_range(&self) -> (f64, f64) {
        let required: Vec<&ActorTrack> = [ActorKind::Ta, ActorKind::La, ActorKind::Ma]
            .iter()
            .filter_map(|k| self.track(*k))
            .filter(|t| !t.samples.is_empty())
            .collect();
        if required.is_empty() {
            let mut range = (f64::INFINITY, f64::NEG_INFINITY);
            for t in self.tracks.iter().filter(|t| !t.samples.is_empty()) {
                range.0 = range.0.min(t.start_time());
                range.1 = range.1.max(t.end_time());
            }
            return range;
        }
        required
            .iter()
            .fold((f64::NEG_INFINITY, f64::INFINITY), |acc, t| {
                (acc.0.max(t.start_time()), acc.1.min(t.end_time()))
            })
    }

    pub fn duration(&self) -> f64 {
        let (start, end) = self.time_range();
        (end - start).max(0.0)
    }
}

/// What a model sees of a vehicle ahead (leader or merging actor).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeaderView {
    /// Longitudinal distance from the TA driver reference to the target's rear bumper.
    pub ds: f64,
    /// Lateral offset from the TA center to the target center.
    pub dt: f64,
    pub v_l: f64,
    pub a_l: f64,
    pub width: f64,
}

/// A broken event invariant or filter rule.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    BadDimensions { actor_id: String },
    TrackTooShort { actor_id: String },
    NonFinite { actor_id: String },
    NegativeSpeed { actor_id: String, time: f64 },
    NonIncreasingTime { actor_id: String, time: f64 },
    NonUniformSampling { actor_id: String },
    InvalidGeometry(String),
    MissingActor(ActorKind),
    DuplicateActor(ActorKind),
    ShortDuration { duration: f64 },
    MergeOutsideTrack(ActorKind),
    InteractionAfterMerge,
    NonMaLaneChange { actors: Vec<String> },
}

impl Violation {
    /// Tally bucket used by corpus filtering.
    pub fn category(&self) -> &'static str {
        match self {
            Violation::BadDimensions { .. }
            | Violation::TrackTooShort { .. }
            | Violation::NonFinite { .. }
            | Violation::NegativeSpeed { .. }
            | Violation::NonIncreasingTime { .. }
            | Violation::NonUniformSampling { .. } => "track",
            Violation::InvalidGeometry(_) => "geometry",
            Violation::MissingActor(_) => "missing_actor",
            Violation::DuplicateActor(_) => "duplicate_actor",
            Violation::ShortDuration { .. } => "duration",
            Violation::MergeOutsideTrack(_) | Violation::InteractionAfterMerge => "timing",
            Violation::NonMaLaneChange { .. } => "lane_change",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadDimensions { actor_id } => {
                write!(f, "track {actor_id}: length and width must be positive")
            }
            Violation::TrackTooShort { actor_id } => {
                write!(f, "track {actor_id}: fewer than 2 samples")
            }
            Violation::NonFinite { actor_id } => write!(f, "track {actor_id}: non-finite value"),
            Violation::NegativeSpeed { actor_id, time } => {
                write!(f, "track {actor_id}: negative speed at t={time}")
            }
            Violation::NonIncreasingTime { actor_id, time } => {
                write!(f, "track {actor_id}: time not increasing at t={time}")
            }
            Violation::NonUniformSampling { actor_id } => {
                write!(f, "track {actor_id}: non-uniform sampling")
            }
            Violation::InvalidGeometry(msg) => write!(f, "geometry: {msg}"),
            Violation::MissingActor(kind) => write!(f, "missing {kind}"),
            Violation::DuplicateActor(kind) => write!(f, "multiple {kind} tracks"),
            Violation::ShortDuration { .. } => write!(f, "duration < 10 s"),
            Violation::MergeOutsideTrack(kind) => write!(f, "merge_time outside {kind} track"),
            Violation::InteractionAfterMerge => write!(f, "interaction_start after merge_time"),
            Violation::NonMaLaneChange { .. } => write!(f, "non-MA lane change"),
        }
    }
}

/// Thresholds applied by [`validate_event_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationConfig {
    pub sample_interval: f64,
    pub sampling_tolerance: f64,
    pub min_duration: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
            sampling_tolerance: SAMPLING_TOLERANCE,
            min_duration: MIN_EVENT_DURATION,
        }
    }
}

/// All invariant and filter violations of an event, in a fixed order.
pub fn validate_event(event: &MergeEvent) -> Vec<Violation> {
    validate_event_with(event, &ValidationConfig::default())
}

pub fn validate_event_with(event: &MergeEvent, cfg: &ValidationConfig) -> Vec<Violation> {
    let mut out = Vec::new();

    for track in &event.tracks {
        track.violations(cfg, &mut out);
    }
    out.extend(
        event
            .geometry
            .problems()
            .into_iter()
            .map(Violation::InvalidGeometry),
    );

    for kind in [ActorKind::Ta, ActorKind::La, ActorKind::Ma] {
        match event.tracks.iter().filter(|t| t.kind == kind).count() {
            0 => out.push(Violation::MissingActor(kind)),
            1 => {}
            _ => out.push(Violation::DuplicateActor(kind)),
        }
    }

    let duration = event.duration();
    if !(duration >= cfg.min_duration) {
        out.push(Violation::ShortDuration { duration });
    }

    for kind in [ActorKind::Ta, ActorKind::Ma, ActorKind::La] {
        if let Some(track) = event.track(kind) {
            if !track.covers(event.merge_time) {
                out.push(Violation::MergeOutsideTrack(kind));
            }
        }
    }
    if !(event.interaction_start <= event.merge_time) {
        out.push(Violation::InteractionAfterMerge);
    }

    let actors: Vec<String> = event
        .tracks
        .iter()
        .filter(|t| t.kind != ActorKind::Ma && t.changes_lane())
        .map(|t| t.actor_id.clone())
        .collect();
    if !actors.is_empty() {
        out.push(Violation::NonMaLaneChange { actors });
    }

    out
}
