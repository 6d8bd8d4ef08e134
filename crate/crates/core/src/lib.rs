//! Merge-reactive car-following models for highway on-ramp interactions.
//!
//! The crate is organised bottom-up:
//!
//! * [`event`] and [`params`] hold the domain types (tracks, events, parameter sets).
//! * [`geometry`] does lane-based projection and the visual-angle math.
//! * [`association`] resolves each traffic actor's leader and merging actor.
//! * [`models`] implements the seven acceleration laws.
//! * [`simulate`] rolls the traffic actor through a recorded event.
//! * [`metrics`] and [`calibrate`] score and fit parameters.
//! * [`dataio`] reads, writes, filters and synthesises event corpora.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod association;
pub mod calibrate;
pub mod dataio;
pub mod event;
pub mod geometry;
pub mod metrics;
pub mod models;
pub mod params;
pub mod simulate;

pub use association::{resolve_associations, ActorAssociation};
pub use event::{
    validate_event, ActorKind, ActorTrack, LeaderView, MergeEvent, RoadGeometry, TrajectorySample,
    Violation,
};
pub use params::{Bounds, ModelKind, ModelParams, ParamError};
