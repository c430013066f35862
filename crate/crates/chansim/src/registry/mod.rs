//! Parameter registry: the statistical families that describe scatterer
//! geometry and power for a traffic condition, and complete tables of
//! their fitted values.
//!
//! A [`ParamTable`] holds one entry per (traffic density, scatterer
//! class, family) slot. [`builtin_table`] returns the values regressed
//! from the reference measurement campaign; alternative tables can be
//! loaded from TOML files produced by the fitting pipeline.

mod dist;
mod table;

pub use dist::{
    Distribution, ExponentialParams, GammaParams, GaussianParams, LogisticParams,
    PowerDelayParams, RayleighParams,
};
pub use table::{
    builtin_table, FamilyParams, ParamFamily, ParamKey, ParamTable, ScattererClass, VtdCondition,
};

use thiserror::Error;

/// Errors raised while validating parameters or loading tables.
#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("invalid {family} parameter: {field} = {value}")]
    InvalidParameter {
        family: &'static str,
        field: &'static str,
        value: f64,
    },
    #[error("probability {p} is outside the open interval (0, 1)")]
    ProbabilityOutOfRange { p: f64 },
    #[error("parameter table is missing the ({vtd}, {class}, {family}) entry")]
    MissingEntry {
        vtd: VtdCondition,
        class: ScattererClass,
        family: ParamFamily,
    },
    #[error("parameter table entry ({vtd}, {class}, {family}) has the wrong distribution kind")]
    WrongKind {
        vtd: VtdCondition,
        class: ScattererClass,
        family: ParamFamily,
    },
    #[error("parameter table lists ({vtd}, {class}, {family}) more than once")]
    DuplicateEntry {
        vtd: VtdCondition,
        class: ScattererClass,
        family: ParamFamily,
    },
    #[error("unknown parameter table key {key:?}")]
    UnknownKey { key: String },
    #[error("parameter table is not valid TOML: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
