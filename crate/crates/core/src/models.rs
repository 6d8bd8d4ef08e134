//! Longitudinal acceleration laws for the traffic actor.
//!
//! Every law is a pure function of a [`ModelInput`] and typed parameters. The
//! only memory a law needs, the previous visual angles for the looming rate
//! terms, is carried in the input by the caller.
//!
//! Gaps handed to the laws are the [`LeaderView::ds`] distances measured from
//! the TA driver reference, floored at [`DS_MIN`].

use thiserror::Error;

use crate::event::LeaderView;
use crate::geometry::{effective_distance, visual_angle, visual_angle_rate, GeometryError, DS_MIN};
use crate::params::{ModelKind, ModelParams, ParamError};

pub const ACCEL_FLOOR: f64 = -9.81;
pub const ACCEL_CEIL: f64 = 4.0;

/// IDM-CAH coolness factor when no `c` parameter is supplied.
pub const DEFAULT_COOLNESS: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("no leader")]
    NoLeader,
    #[error("outside looming domain")]
    OutsideLoomingDomain,
    #[error("merging actor present without merge geometry")]
    MissingMergeGeometry,
    #[error("non-finite acceleration")]
    NonFinite,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Params(#[from] ParamError),
}

/// Merge-specific quantities that only exist while an MA is relevant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergeGeometry {
    pub ma_length: f64,
    /// Length of the MA lying longitudinally inside the TA-LA gap.
    pub gap_overlap: f64,
    /// Lateral distance from the MA center to the line it is about to cross.
    pub dt_to_lane_line: f64,
    pub lane_width: f64,
    /// From the MA front bumper to the end of the ramp.
    pub dist_ma_to_ramp_end: f64,
    pub theta_ma_prev: Option<f64>,
    pub theta_la_prev: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelInput {
    pub v: f64,
    pub la_view: Option<LeaderView>,
    pub ma_view: Option<LeaderView>,
    pub ma_geometry: Option<MergeGeometry>,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    /// Acceleration after clamping to `[ACCEL_FLOOR, ACCEL_CEIL]`.
    pub accel: f64,
    pub raw_accel: f64,
    pub clamped: bool,
    /// Short label of the active model state.
    pub state: &'static str,
    pub diagnostics: Vec<(&'static str, f64)>,
}

impl ModelOutput {
    fn new(
        raw: f64,
        state: &'static str,
        diagnostics: Vec<(&'static str, f64)>,
    ) -> Result<Self, ModelError> {
        if !raw.is_finite() {
            return Err(ModelError::NonFinite);
        }
        let accel = raw.clamp(ACCEL_FLOOR, ACCEL_CEIL);
        Ok(Self {
            accel,
            raw_accel: raw,
            clamped: accel != raw,
            state,
            diagnostics,
        })
    }

    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdmParams {
    pub desired_speed: f64,
    pub time_headway: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub min_gap: f64,
}

impl IdmParams {
    /// `s* = s0 + vT + v (v - v_l) / (2 sqrt(ab))`
    pub fn desired_gap(&self, v: f64, v_l: f64) -> f64 {
        self.min_gap
            + v * self.time_headway
            + v * (v - v_l) / (2.0 * (self.max_accel * self.comfort_decel).sqrt())
    }

    fn free_road_deficit(&self, v: f64) -> f64 {
        (v / self.desired_speed).powi(4)
    }

    fn interaction(&self, v: f64, v_l: f64, gap: f64) -> f64 {
        (self.desired_gap(v, v_l) / gap.max(DS_MIN)).powi(2)
    }

    /// `a (1 - (v/v0)^4 - (s*/s)^2)`
    pub fn accel(&self, v: f64, v_l: f64, gap: f64) -> f64 {
        self.max_accel * (1.0 - self.free_road_deficit(v) - self.interaction(v, v_l, gap))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MobilParams {
    pub politeness: f64,
    pub threshold: f64,
}

/// Looming law constants shared by both variants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoomingParams {
    pub desired_speed: f64,
    pub speed_gain: f64,
    pub la_gain: f64,
    pub ma_gain: f64,
    /// Saturation of each rate term, m/s^2.
    pub rate_cap: f64,
    /// MA-only state of the unmodified law; `None` for Looming-Mod.
    pub merge_state: Option<LoomingMergeState>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoomingMergeState {
    /// MA lateral distance to the lane line below which the LA is dropped.
    pub switch_gap: f64,
    pub speed_gain: f64,
    pub ma_gain: f64,
}

/// A parameterised acceleration law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Model {
    Idm(IdmParams),
    IdmMsa(IdmParams, MobilParams),
    IdmCah {
        idm: IdmParams,
        coolness: f64,
    },
    Looming(LoomingParams),
    LoomingMod(LoomingParams),
    IdmLooming {
        idm: IdmParams,
        coolness: f64,
        looming: LoomingParams,
    },
    MrIdm {
        idm: IdmParams,
        coolness: f64,
        zeta: f64,
    },
}

fn req(p: &ModelParams, name: &str) -> Result<f64, ParamError> {
    p.get(name).ok_or_else(|| ParamError::Missing {
        kind: p.model_kind,
        name: name.to_string(),
    })
}

fn idm_from(p: &ModelParams) -> Result<IdmParams, ParamError> {
    Ok(IdmParams {
        desired_speed: req(p, "v0")?,
        time_headway: req(p, "T")?,
        max_accel: req(p, "a")?,
        comfort_decel: req(p, "b")?,
        min_gap: req(p, "s0")?,
    })
}

fn looming_from(p: &ModelParams, with_merge_state: bool) -> Result<LoomingParams, ParamError> {
    let merge_state = if with_merge_state {
        Some(LoomingMergeState {
            switch_gap: req(p, "switch_gap")?,
            speed_gain: req(p, "k_speed2")?,
            ma_gain: req(p, "k_ma2")?,
        })
    } else {
        None
    };
    Ok(LoomingParams {
        desired_speed: req(p, "v_des")?,
        speed_gain: req(p, "k_speed")?,
        la_gain: req(p, "k_la")?,
        ma_gain: req(p, "k_ma")?,
        rate_cap: req(p, "rate_cap")?,
        merge_state,
    })
}

impl Model {
    pub fn from_params(p: &ModelParams) -> Result<Self, ParamError> {
        p.validate()?;
        let coolness = p.get("c").unwrap_or(DEFAULT_COOLNESS);
        let model = match p.model_kind {
            ModelKind::Idm => Model::Idm(idm_from(p)?),
            ModelKind::IdmMsa => Model::IdmMsa(
                idm_from(p)?,
                MobilParams {
                    politeness: req(p, "p")?,
                    threshold: req(p, "da_th")?,
                },
            ),
            ModelKind::IdmCah => Model::IdmCah {
                idm: idm_from(p)?,
                coolness,
            },
            ModelKind::Looming => Model::Looming(looming_from(p, true)?),
            ModelKind::LoomingMod => Model::LoomingMod(looming_from(p, false)?),
            ModelKind::IdmLooming => Model::IdmLooming {
                idm: idm_from(p)?,
                coolness,
                looming: looming_from(p, false)?,
            },
            ModelKind::MrIdm => Model::MrIdm {
                idm: idm_from(p)?,
                coolness,
                zeta: req(p, "zeta")?,
            },
        };
        Ok(model)
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Idm(_) => ModelKind::Idm,
            Model::IdmMsa(..) => ModelKind::IdmMsa,
            Model::IdmCah { .. } => ModelKind::IdmCah,
            Model::Looming(_) => ModelKind::Looming,
            Model::LoomingMod(_) => ModelKind::LoomingMod,
            Model::IdmLooming { .. } => ModelKind::IdmLooming,
            Model::MrIdm { .. } => ModelKind::MrIdm,
        }
    }

    pub fn accel(&self, input: &ModelInput) -> Result<ModelOutput, ModelError> {
        match self {
            Model::Idm(idm) => idm_accel(input, idm),
            Model::IdmMsa(idm, mobil) => idm_msa_accel(input, idm, mobil),
            Model::IdmCah { idm, coolness } => idm_cah_accel(input, idm, *coolness),
            Model::Looming(l) => looming_accel(input, l, false),
            Model::LoomingMod(l) => looming_accel(input, l, true),
            Model::IdmLooming {
                idm,
                coolness,
                looming,
            } => idm_looming_accel(input, idm, *coolness, looming),
            Model::MrIdm {
                idm,
                coolness,
                zeta,
            } => mr_idm_accel(input, idm, *coolness, *zeta),
        }
    }
}

/// Plain IDM behind the leader in `la_view`.
pub fn idm_accel(input: &ModelInput, idm: &IdmParams) -> Result<ModelOutput, ModelError> {
    let la = input.la_view.ok_or(ModelError::NoLeader)?;
    let raw = idm.accel(input.v, la.v_l, la.ds);
    ModelOutput::new(
        raw,
        "follow",
        vec![("s_star", idm.desired_gap(input.v, la.v_l))],
    )
}

/// Share of the MOBIL lane-change threshold reached, clamped to `[0, 1]`.
pub fn mobil_incentive_ratio(da_ma: f64, da_ta: f64, politeness: f64, threshold: f64) -> f64 {
    ((da_ma + politeness * da_ta) / threshold).clamp(0.0, 1.0)
}

/// IDM whose gap term is shifted from the LA to the MA by the MOBIL ratio.
pub fn idm_msa_accel(
    input: &ModelInput,
    idm: &IdmParams,
    mobil: &MobilParams,
) -> Result<ModelOutput, ModelError> {
    let la = input.la_view.ok_or(ModelError::NoLeader)?;
    let Some(ma) = input.ma_view else {
        return idm_accel(input, idm);
    };
    let geo = input.ma_geometry.ok_or(ModelError::MissingMergeGeometry)?;
    let v = input.v;

    // TA: leader changes from the LA to the MA.
    let da_ta = idm.accel(v, ma.v_l, ma.ds) - idm.accel(v, la.v_l, la.ds);
    // MA: leader changes from the (stationary) ramp end to the LA.
    let ma_to_la = la.ds - ma.ds - geo.ma_length;
    let da_ma =
        idm.accel(ma.v_l, la.v_l, ma_to_la) - idm.accel(ma.v_l, 0.0, geo.dist_ma_to_ramp_end);
    let r = mobil_incentive_ratio(da_ma, da_ta, mobil.politeness, mobil.threshold);

    let gap_term =
        r * idm.interaction(v, ma.v_l, ma.ds) + (1.0 - r) * idm.interaction(v, la.v_l, la.ds);
    let raw = idm.max_accel * (1.0 - idm.free_road_deficit(v) - gap_term);
    ModelOutput::new(
        raw,
        "msa",
        vec![("r", r), ("da_ma", da_ma), ("da_ta", da_ta)],
    )
}

/// Constant-acceleration-heuristic acceleration.
pub fn cah_accel(v: f64, gap: f64, v_l: f64, a_l: f64, max_accel: f64) -> f64 {
    let s = gap.max(DS_MIN);
    let a_lead = a_l.min(max_accel);
    if v_l * (v - v_l) <= -2.0 * s * a_lead {
        let denom = v_l * v_l - 2.0 * s * a_lead;
        if denom.abs() < 1e-12 {
            // Only reachable with v_l = 0 and a_lead = 0: the limit as a_lead -> 0-.
            -v * v / (2.0 * s)
        } else {
            v * v * a_lead / denom
        }
    } else {
        let dv = v - v_l;
        let step = if dv > 0.0 { 1.0 } else { 0.0 };
        a_lead - dv * dv * step / (2.0 * s)
    }
}

/// IDM-CAH combination of the two accelerations.
pub fn idm_cah_blend(a_idm: f64, a_cah: f64, comfort_decel: f64, coolness: f64) -> f64 {
    if a_idm >= a_cah {
        a_idm
    } else {
        (1.0 - coolness) * a_idm
            + coolness * (a_cah + comfort_decel * ((a_idm - a_cah) / comfort_decel).tanh())
    }
}

fn idm_cah_raw(
    idm: &IdmParams,
    coolness: f64,
    v: f64,
    gap: f64,
    view: &LeaderView,
) -> (f64, f64, f64) {
    let a_idm = idm.accel(v, view.v_l, gap);
    let a_cah = cah_accel(v, gap, view.v_l, view.a_l, idm.max_accel);
    (
        idm_cah_blend(a_idm, a_cah, idm.comfort_decel, coolness),
        a_idm,
        a_cah,
    )
}

/// IDM with the constant-acceleration heuristic behind the LA.
pub fn idm_cah_accel(
    input: &ModelInput,
    idm: &IdmParams,
    coolness: f64,
) -> Result<ModelOutput, ModelError> {
    let la = input.la_view.ok_or(ModelError::NoLeader)?;
    let (raw, a_idm, a_cah) = idm_cah_raw(idm, coolness, input.v, la.ds, &la);
    ModelOutput::new(raw, "follow", vec![("a_idm", a_idm), ("a_cah", a_cah)])
}

struct LoomingTerms {
    accel: f64,
    state: &'static str,
    theta_la: Option<f64>,
    theta_ma: f64,
    ma_term: f64,
}

/// Stimulus-response looming law.
///
/// The stimulus of an actor is its opening rate, the negated rate of its
/// visual angle: positive when it pulls away, negative when it closes in.
/// With both actors relevant:
/// `k_speed (v_des - v) + sat(k_la * open_la) + sat(k_ma * open_ma)`.
/// The unmodified law switches to an MA-only state once the MA is within
/// `switch_gap` of the lane line.
fn looming_terms(
    input: &ModelInput,
    lp: &LoomingParams,
    modified: bool,
) -> Result<LoomingTerms, ModelError> {
    let ma = input.ma_view.ok_or(ModelError::OutsideLoomingDomain)?;
    let geo = input.ma_geometry.ok_or(ModelError::MissingMergeGeometry)?;
    let sat = |x: f64| x.clamp(-lp.rate_cap, lp.rate_cap);

    let theta_ma = visual_angle(ma.ds, ma.dt, ma.width)?;
    let open_ma = -visual_angle_rate(theta_ma, geo.theta_ma_prev, input.step);

    let (theta_la, open_la) = match input.la_view {
        Some(la) => {
            let th = visual_angle(la.ds, la.dt, la.width)?;
            (
                Some(th),
                -visual_angle_rate(th, geo.theta_la_prev, input.step),
            )
        }
        None => (None, 0.0),
    };

    if let Some(merge) = lp
        .merge_state
        .filter(|m| !modified && geo.dt_to_lane_line <= m.switch_gap)
    {
        let ma_term = sat(merge.ma_gain * open_ma);
        return Ok(LoomingTerms {
            accel: merge.speed_gain * (lp.desired_speed - input.v) + ma_term,
            state: "looming_ma",
            theta_la,
            theta_ma,
            ma_term,
        });
    }

    let ma_stimulus = if modified { open_ma.min(0.0) } else { open_ma };
    let ma_term = sat(lp.ma_gain * ma_stimulus);
    let accel = lp.speed_gain * (lp.desired_speed - input.v) + sat(lp.la_gain * open_la) + ma_term;
    Ok(LoomingTerms {
        accel,
        state: "looming_both",
        theta_la,
        theta_ma,
        ma_term,
    })
}

/// Looming law; `modified` selects the Looming-Mod variant.
pub fn looming_accel(
    input: &ModelInput,
    lp: &LoomingParams,
    modified: bool,
) -> Result<ModelOutput, ModelError> {
    let t = looming_terms(input, lp, modified)?;
    let mut diag = vec![("theta_ma", t.theta_ma), ("ma_term", t.ma_term)];
    if let Some(th) = t.theta_la {
        diag.push(("theta_la", th));
    }
    ModelOutput::new(t.accel, t.state, diag)
}

/// IDM-CAH while car-following, phased into Looming-Mod while the MA enters
/// the TA-LA gap, then into IDM-CAH behind the MA as it nears the lane line.
pub fn idm_looming_accel(
    input: &ModelInput,
    idm: &IdmParams,
    coolness: f64,
    lp: &LoomingParams,
) -> Result<ModelOutput, ModelError> {
    let la = input.la_view.ok_or(ModelError::NoLeader)?;
    let (cah_la, ..) = idm_cah_raw(idm, coolness, input.v, la.ds, &la);

    let (Some(ma), Some(geo)) = (input.ma_view, input.ma_geometry) else {
        return ModelOutput::new(cah_la, "follow", vec![("r", 1.0)]);
    };
    let length = geo.ma_length;
    let overlap = geo.gap_overlap.clamp(0.0, length);
    if overlap <= 0.0 {
        return ModelOutput::new(cah_la, "follow", vec![("r", 1.0)]);
    }

    let looming = looming_terms(input, &lp_mod(lp), true)?.accel;
    if overlap < length {
        let r = (length - overlap) / length;
        let raw = r * cah_la + (1.0 - r) * looming;
        return ModelOutput::new(raw, "blend_gap", vec![("r", r), ("looming", looming)]);
    }

    let r = (geo.dt_to_lane_line / (0.5 * geo.lane_width)).clamp(0.0, 1.0);
    let (cah_ma, ..) = idm_cah_raw(idm, coolness, input.v, ma.ds, &ma);
    let raw = r * looming + (1.0 - r) * cah_ma;
    ModelOutput::new(raw, "blend_lateral", vec![("r", r), ("looming", looming)])
}

fn lp_mod(lp: &LoomingParams) -> LoomingParams {
    LoomingParams {
        merge_state: None,
        ..*lp
    }
}

/// IDM-CAH against both the LA and the MA at their effective distances,
/// keeping the stronger deceleration.
pub fn mr_idm_accel(
    input: &ModelInput,
    idm: &IdmParams,
    coolness: f64,
    zeta: f64,
) -> Result<ModelOutput, ModelError> {
    let la = input.la_view.ok_or(ModelError::NoLeader)?;
    let ds_la = effective_distance(la.ds, la.dt, la.width, zeta)?.value;
    let (a_la, ..) = idm_cah_raw(idm, coolness, input.v, ds_la, &la);

    let Some(ma) = input.ma_view else {
        return ModelOutput::new(a_la, "mr_la", vec![("ds_e_la", ds_la), ("a_la", a_la)]);
    };
    let ds_ma = effective_distance(ma.ds, ma.dt, ma.width, zeta)?.value;
    let (a_ma, ..) = idm_cah_raw(idm, coolness, input.v, ds_ma, &ma);
    let (raw, state) = if a_ma < a_la {
        (a_ma, "mr_ma")
    } else {
        (a_la, "mr_la")
    };
    ModelOutput::new(
        raw,
        state,
        vec![
            ("ds_e_la", ds_la),
            ("ds_e_ma", ds_ma),
            ("a_la", a_la),
            ("a_ma", a_ma),
        ],
    )
}
