//! Per-timestep leader, follower and merging-actor resolution.
//!
//! Lane membership comes from each sample's `lane_id`; longitudinal
//! comparisons use bumper positions derived from the track length.

use serde::Serialize;

use crate::event::{ActorKind, ActorTrack, MergeEvent, TrajectorySample, DRIVER_OFFSET};

/// Longitudinal reach within which a merging actor is considered at all.
pub const PERCEPTION_RANGE: f64 = 40.0;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ActorAssociation {
    pub ta_id: String,
    pub la_id: Option<String>,
    pub ma_id: Option<String>,
    pub fa_id: Option<String>,
}

/// The traffic actor's pose as seen by the association rules. During
/// simulation this is the simulated state, not the recorded one.
#[derive(Clone, Copy, Debug)]
pub struct Ego<'a> {
    pub actor_id: &'a str,
    pub s: f64,
    pub lane: i32,
    pub length: f64,
}

impl Ego<'_> {
    pub fn front(&self) -> f64 {
        self.s + 0.5 * self.length
    }

    /// Driver eye point, `DRIVER_OFFSET` behind the front bumper.
    pub fn driver_ref(&self, driver_offset: f64) -> f64 {
        self.front() - driver_offset
    }
}

/// A surrounding actor at the query instant.
#[derive(Clone, Copy, Debug)]
pub struct Neighbor<'a> {
    pub track: &'a ActorTrack,
    pub sample: &'a TrajectorySample,
}

impl Neighbor<'_> {
    pub fn rear(&self) -> f64 {
        self.track.rear(self.sample)
    }

    pub fn front(&self) -> f64 {
        self.track.front(self.sample)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Resolved<'a> {
    pub la: Option<Neighbor<'a>>,
    pub ma: Option<Neighbor<'a>>,
    pub fa: Option<Neighbor<'a>>,
}

impl Resolved<'_> {
    pub fn to_association(&self, ta_id: &str) -> ActorAssociation {
        let id = |n: &Option<Neighbor<'_>>| n.map(|n| n.track.actor_id.clone());
        ActorAssociation {
            ta_id: ta_id.to_string(),
            la_id: id(&self.la),
            ma_id: id(&self.ma),
            fa_id: id(&self.fa),
        }
    }
}

/// Nearest same-lane actor whose center is ahead of `s`.
fn leader_of<'a>(
    present: &[Neighbor<'a>],
    lane: i32,
    s: f64,
    exclude: &str,
) -> Option<Neighbor<'a>> {
    present
        .iter()
        .filter(|n| n.track.actor_id != exclude && n.sample.lane_id == lane && n.sample.s > s)
        .min_by(|a, b| a.rear().total_cmp(&b.rear()))
        .copied()
}

/// Resolves associations for an explicit ego pose.
pub fn resolve_for<'a>(
    event: &'a MergeEvent,
    time: f64,
    ego: &Ego<'_>,
    driver_offset: f64,
) -> Resolved<'a> {
    let present: Vec<Neighbor<'a>> = event
        .tracks
        .iter()
        .filter(|t| t.actor_id != ego.actor_id)
        .filter_map(|track| {
            track
                .sample_at(time)
                .map(|sample| Neighbor { track, sample })
        })
        .collect();

    let la = leader_of(&present, ego.lane, ego.s, ego.actor_id);
    let fa = present
        .iter()
        .filter(|n| n.sample.lane_id == ego.lane && n.sample.s < ego.s)
        .max_by(|a, b| a.front().total_cmp(&b.front()))
        .copied();
    let la_leader = la.and_then(|l| leader_of(&present, ego.lane, l.sample.s, &l.track.actor_id));

    let geom = &event.geometry;
    let driver = ego.driver_ref(driver_offset);
    let ma = present
        .iter()
        .filter(|n| {
            let rear = n.rear();
            let in_ramp = n.sample.lane_id == geom.ramp_lane_id && geom.ramp_lane_id != ego.lane;
            let in_range = (rear - driver).abs() <= PERCEPTION_RANGE;
            let past_nose = n.sample.s >= geom.hard_nose_s;
            let ahead_of_driver = rear > driver;
            let behind_leader = match la {
                None => true,
                Some(l) => {
                    rear < l.rear()
                        || (n.sample.speed < l.sample.speed
                            && la_leader.is_none_or(|ll| rear < ll.rear()))
                }
            };
            in_ramp && in_range && past_nose && ahead_of_driver && behind_leader
        })
        .min_by(|a, b| {
            (a.rear() - driver)
                .abs()
                .total_cmp(&(b.rear() - driver).abs())
        })
        .copied();

    Resolved { la, ma, fa }
}

/// Associations of the event's recorded TA at `time`; `None` when the TA has
/// no sample there.
pub fn resolve_associations(event: &MergeEvent, time: f64) -> Option<ActorAssociation> {
    let ta = event.track(ActorKind::Ta)?;
    let sample = ta.sample_at(time)?;
    let ego = Ego {
        actor_id: &ta.actor_id,
        s: sample.s,
        lane: sample.lane_id,
        length: ta.length,
    };
    Some(resolve_for(event, time, &ego, DRIVER_OFFSET).to_association(&ta.actor_id))
}
