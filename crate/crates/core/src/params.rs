//! Model kinds and their named, bounded parameter sets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "IDM")]
    Idm,
    #[serde(rename = "IDM_MSA")]
    IdmMsa,
    #[serde(rename = "IDM_CAH")]
    IdmCah,
    #[serde(rename = "LOOMING")]
    Looming,
    #[serde(rename = "LOOMING_MOD")]
    LoomingMod,
    #[serde(rename = "IDM_LOOMING")]
    IdmLooming,
    #[serde(rename = "MR_IDM")]
    MrIdm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Idm,
        ModelKind::IdmMsa,
        ModelKind::IdmCah,
        ModelKind::Looming,
        ModelKind::LoomingMod,
        ModelKind::IdmLooming,
        ModelKind::MrIdm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Idm => "IDM",
            ModelKind::IdmMsa => "IDM_MSA",
            ModelKind::IdmCah => "IDM_CAH",
            ModelKind::Looming => "LOOMING",
            ModelKind::LoomingMod => "LOOMING_MOD",
            ModelKind::IdmLooming => "IDM_LOOMING",
            ModelKind::MrIdm => "MR_IDM",
        }
    }

    /// Parameters the model requires, in canonical order.
    pub fn required_params(self) -> &'static [&'static str] {
        match self {
            ModelKind::Idm | ModelKind::IdmCah => IDM_NAMES,
            ModelKind::IdmMsa => &["v0", "T", "a", "b", "s0", "p", "da_th"],
            ModelKind::Looming => &[
                "v_des",
                "k_speed",
                "k_la",
                "k_ma",
                "rate_cap",
                "switch_gap",
                "k_speed2",
                "k_ma2",
            ],
            ModelKind::LoomingMod => LOOMING_MOD_NAMES,
            ModelKind::IdmLooming => &[
                "v0", "T", "a", "b", "s0", "v_des", "k_speed", "k_la", "k_ma", "rate_cap",
            ],
            ModelKind::MrIdm => &["v0", "T", "a", "b", "s0", "zeta"],
        }
    }

    /// Optional parameters honoured when present.
    pub fn optional_params(self) -> &'static [&'static str] {
        match self {
            ModelKind::IdmCah | ModelKind::IdmLooming | ModelKind::MrIdm => &["c"],
            _ => &[],
        }
    }
}

const IDM_NAMES: &[&str] = &["v0", "T", "a", "b", "s0"];
const LOOMING_MOD_NAMES: &[&str] = &["v_des", "k_speed", "k_la", "k_ma", "rate_cap"];

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| ParamError::UnknownModel(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("unknown model kind '{0}'")]
    UnknownModel(String),
    #[error("{kind}: missing parameter '{name}'")]
    Missing { kind: ModelKind, name: String },
    #[error("{kind}: unexpected parameter '{name}'")]
    Unexpected { kind: ModelKind, name: String },
    #[error("parameter '{name}' = {value} outside [{lo}, {hi}]")]
    OutOfBounds {
        name: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("parameter '{name}' has invalid bounds [{lo}, {hi}]")]
    InvalidBounds { name: String, lo: f64, hi: f64 },
}

/// Default value and calibration bounds for a named parameter.
pub fn default_entry(name: &str) -> Option<(f64, Bounds)> {
    let entry = match name {
        "v0" => (30.0, Bounds::new(5.0, 45.0)),
        "T" => (1.5, Bounds::new(0.3, 4.0)),
        "a" => (1.4, Bounds::new(0.3, 4.0)),
        "b" => (2.0, Bounds::new(0.5, 5.0)),
        "s0" => (2.0, Bounds::new(0.5, 10.0)),
        "c" => (0.99, Bounds::new(0.8, 1.0)),
        "zeta" => (1.0, Bounds::new(0.1, 3.0)),
        "p" => (0.5, Bounds::new(0.0, 1.0)),
        "da_th" => (0.2, Bounds::new(0.05, 1.0)),
        "v_des" => (30.0, Bounds::new(5.0, 45.0)),
        "k_speed" => (0.3, Bounds::new(0.0, 2.0)),
        "k_la" => (80.0, Bounds::new(0.0, 500.0)),
        "k_ma" => (80.0, Bounds::new(0.0, 500.0)),
        "rate_cap" => (3.0, Bounds::new(0.5, 9.81)),
        "switch_gap" => (0.5, Bounds::new(0.0, 3.5)),
        "k_speed2" => (0.2, Bounds::new(0.0, 2.0)),
        "k_ma2" => (80.0, Bounds::new(0.0, 500.0)),
        _ => return None,
    };
    Some(entry)
}

/// Parameter values for one model kind, each with calibration bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub model_kind: ModelKind,
    pub values: BTreeMap<String, f64>,
    pub bounds: BTreeMap<String, Bounds>,
}

impl ModelParams {
    pub fn defaults(kind: ModelKind) -> Self {
        let mut values = BTreeMap::new();
        let mut bounds = BTreeMap::new();
        for name in kind.required_params() {
            let (v, b) = default_entry(name).expect("every required parameter has a default");
            values.insert(name.to_string(), v);
            bounds.insert(name.to_string(), b);
        }
        Self {
            model_kind: kind,
            values,
            bounds,
        }
    }

    /// Defaults overridden by `values`; unknown names are rejected.
    pub fn with_values<'a, I>(kind: ModelKind, values: I) -> Result<Self, ParamError>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut p = Self::defaults(kind);
        for (name, v) in values {
            p.set(name, v)?;
        }
        p.validate()?;
        Ok(p)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    /// Sets a value. Optional parameters are added with their default bounds.
    /// Bounds are not enforced here; see [`ModelParams::validate`].
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), ParamError> {
        let kind = self.model_kind;
        let known =
            kind.required_params().contains(&name) || kind.optional_params().contains(&name);
        if !known {
            return Err(ParamError::Unexpected {
                kind,
                name: name.to_string(),
            });
        }
        if !self.bounds.contains_key(name) {
            let (_, b) = default_entry(name).expect("optional parameter has a default");
            self.bounds.insert(name.to_string(), b);
        }
        self.values.insert(name.to_string(), value);
        Ok(())
    }

    pub fn set_bounds(&mut self, name: &str, bounds: Bounds) -> Result<(), ParamError> {
        if !self.values.contains_key(name) {
            return Err(ParamError::Unexpected {
                kind: self.model_kind,
                name: name.to_string(),
            });
        }
        self.bounds.insert(name.to_string(), bounds);
        Ok(())
    }

    /// Checks required names, bounds sanity and that every value is in range.
    pub fn validate(&self) -> Result<(), ParamError> {
        let kind = self.model_kind;
        for name in kind.required_params() {
            if !self.values.contains_key(*name) {
                return Err(ParamError::Missing {
                    kind,
                    name: name.to_string(),
                });
            }
        }
        for (name, &value) in &self.values {
            if !kind.required_params().contains(&name.as_str())
                && !kind.optional_params().contains(&name.as_str())
            {
                return Err(ParamError::Unexpected {
                    kind,
                    name: name.clone(),
                });
            }
            let b = self.bounds.get(name).ok_or_else(|| ParamError::Missing {
                kind,
                name: format!("bounds for {name}"),
            })?;
            if !(b.lo.is_finite() && b.hi.is_finite() && b.lo <= b.hi) {
                return Err(ParamError::InvalidBounds {
                    name: name.clone(),
                    lo: b.lo,
                    hi: b.hi,
                });
            }
            if !b.contains(value) {
                return Err(ParamError::OutOfBounds {
                    name: name.clone(),
                    value,
                    lo: b.lo,
                    hi: b.hi,
                });
            }
        }
        Ok(())
    }

    /// Names of all parameters carried, in canonical order.
    pub fn names(&self) -> Vec<&str> {
        let kind = self.model_kind;
        kind.required_params()
            .iter()
            .chain(kind.optional_params())
            .copied()
            .filter(|n| self.values.contains_key(*n))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
