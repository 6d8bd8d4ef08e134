#![allow(dead_code)]

use mergesim_core::{ActorKind, ActorTrack, MergeEvent, RoadGeometry, TrajectorySample};

pub const LANE: f64 = 3.5;

/// Constant-speed track on a 10 Hz grid.
pub fn track(id: &str, kind: ActorKind, s0: f64, t: f64, speed: f64, n: usize) -> ActorTrack {
    let samples = (0..n)
        .map(|k| {
            let time = k as f64 * 0.1;
            TrajectorySample {
                time,
                s: s0 + speed * time,
                t,
                speed,
                accel: 0.0,
                lane_id: (t / LANE + 0.5).floor() as i32,
            }
        })
        .collect();
    ActorTrack {
        actor_id: id.to_string(),
        kind,
        length: 4.5,
        width: 1.9,
        samples,
    }
}

/// TA, LA and an MA that moves into the TA lane at sample 80; 15 s long.
pub fn merge_event(id: &str) -> MergeEvent {
    let n = 151;
    let mut ma = track("ma", ActorKind::Ma, 140.0, -LANE, 24.0, n);
    for s in ma.samples.iter_mut().skip(80) {
        s.t = 0.0;
        s.lane_id = 0;
    }
    MergeEvent {
        event_id: id.to_string(),
        tracks: vec![
            track("ta", ActorKind::Ta, 100.0, 0.0, 25.0, n),
            track("la", ActorKind::La, 160.0, 0.0, 25.0, n),
            ma,
        ],
        geometry: RoadGeometry::straight(2000.0, LANE, 120.0, 600.0),
        merge_time: 8.0,
        interaction_start: 0.0,
    }
}

/// Leader-only scene for long car-following rollouts.
pub fn following_event(gap: f64, ta_speed: f64, la_speed: f64, seconds: f64) -> MergeEvent {
    let n = (seconds * 10.0).round() as usize + 1;
    MergeEvent {
        event_id: "following".into(),
        tracks: vec![
            track("ta", ActorKind::Ta, 0.0, 0.0, ta_speed, n),
            track("la", ActorKind::La, gap, 0.0, la_speed, n),
        ],
        geometry: RoadGeometry::straight(20_000.0, LANE, 10_000.0, 19_000.0),
        merge_time: seconds,
        interaction_start: 0.0,
    }
}

pub fn truncate(event: &mut MergeEvent, n: usize) {
    for t in &mut event.tracks {
        t.samples.truncate(n);
    }
}
