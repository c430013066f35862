//! Parameter tables keyed by traffic density, scatterer class, and
//! characteristic family, plus the built-in table regressed from the
//! reference roadside measurement campaign.

use super::dist::*;
use super::RegistryError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

/// Vehicular traffic density condition of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VtdCondition {
    High,
    Medium,
    Low,
}

impl VtdCondition {
    pub const ALL: [VtdCondition; 3] = [VtdCondition::High, VtdCondition::Medium, VtdCondition::Low];

    pub fn as_str(self) -> &'static str {
        match self {
            VtdCondition::High => "high",
            VtdCondition::Medium => "medium",
            VtdCondition::Low => "low",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

impl fmt::Display for VtdCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a scatterer belongs to the still environment or to moving
/// road users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScattererClass {
    Static,
    Dynamic,
}

impl ScattererClass {
    pub const ALL: [ScattererClass; 2] = [ScattererClass::Static, ScattererClass::Dynamic];

    pub fn as_str(self) -> &'static str {
        match self {
            ScattererClass::Static => "static",
            ScattererClass::Dynamic => "dynamic",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for ScattererClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The eight per-(VTD, class) characteristic families a table stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamFamily {
    /// Scatterer count divided by transceiver distance, Logistic.
    ScattererNumber,
    /// Cluster count divided by transceiver distance, Logistic.
    ClusterNumber,
    /// Excess path-length ratio, Gamma (static) or Rayleigh (dynamic).
    Distance,
    /// Departure azimuth divided by transceiver distance, Gaussian.
    AzimuthDeparture,
    /// Arrival azimuth divided by transceiver distance, Gaussian.
    AzimuthArrival,
    /// Departure elevation divided by transceiver distance, Gaussian.
    ElevationDeparture,
    /// Arrival elevation divided by transceiver distance, Gaussian.
    ElevationArrival,
    /// Power-delay regression coefficients.
    PowerDelay,
}

impl ParamFamily {
    pub const ALL: [ParamFamily; 8] = [
        ParamFamily::ScattererNumber,
        ParamFamily::ClusterNumber,
        ParamFamily::Distance,
        ParamFamily::AzimuthDeparture,
        ParamFamily::AzimuthArrival,
        ParamFamily::ElevationDeparture,
        ParamFamily::ElevationArrival,
        ParamFamily::PowerDelay,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamFamily::ScattererNumber => "scatterer_number",
            ParamFamily::ClusterNumber => "cluster_number",
            ParamFamily::Distance => "distance",
            ParamFamily::AzimuthDeparture => "azimuth_departure",
            ParamFamily::AzimuthArrival => "azimuth_arrival",
            ParamFamily::ElevationDeparture => "elevation_departure",
            ParamFamily::ElevationArrival => "elevation_arrival",
            ParamFamily::PowerDelay => "power_delay",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }
}

impl fmt::Display for ParamFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters of one table entry, tagged by distribution kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum FamilyParams {
    Logistic(LogisticParams),
    Gamma(GammaParams),
    Rayleigh(RayleighParams),
    Gaussian(GaussianParams),
    PowerDelay(PowerDelayParams),
}

impl FamilyParams {
    /// The entry viewed as a sampleable distribution; power-delay entries
    /// are regression coefficients, not a distribution.
    pub fn as_distribution(&self) -> Option<&dyn Distribution> {
        match self {
            FamilyParams::Logistic(p) => Some(p),
            FamilyParams::Gamma(p) => Some(p),
            FamilyParams::Rayleigh(p) => Some(p),
            FamilyParams::Gaussian(p) => Some(p),
            FamilyParams::PowerDelay(_) => None,
        }
    }

    fn validate(&self) -> Result<(), RegistryError> {
        match *self {
            FamilyParams::Logistic(p) => LogisticParams::new(p.mu, p.scale).map(|_| ()),
            FamilyParams::Gamma(p) => GammaParams::new(p.shape, p.rate).map(|_| ()),
            FamilyParams::Rayleigh(p) => RayleighParams::new(p.sigma).map(|_| ()),
            FamilyParams::Gaussian(p) => GaussianParams::new(p.mu, p.sigma).map(|_| ()),
            FamilyParams::PowerDelay(p) => {
                PowerDelayParams::new(p.decay, p.offset, p.shadow_sigma_db).map(|_| ())
            }
        }
    }

    /// Whether the kind is admissible for the (class, family) slot.
    fn kind_matches(&self, class: ScattererClass, family: ParamFamily) -> bool {
        match family {
            ParamFamily::ScattererNumber | ParamFamily::ClusterNumber => {
                matches!(self, FamilyParams::Logistic(_))
            }
            ParamFamily::Distance => match class {
                ScattererClass::Static => matches!(self, FamilyParams::Gamma(_)),
                ScattererClass::Dynamic => matches!(self, FamilyParams::Rayleigh(_)),
            },
            ParamFamily::AzimuthDeparture
            | ParamFamily::AzimuthArrival
            | ParamFamily::ElevationDeparture
            | ParamFamily::ElevationArrival => matches!(self, FamilyParams::Gaussian(_)),
            ParamFamily::PowerDelay => matches!(self, FamilyParams::PowerDelay(_)),
        }
    }
}

pub type ParamKey = (VtdCondition, ScattererClass, ParamFamily);

/// A complete 48-entry parameter table: 3 traffic densities times
/// 2 scatterer classes times 8 families.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTable {
    entries: BTreeMap<ParamKey, FamilyParams>,
}

impl ParamTable {
    /// Builds a table from entries, rejecting duplicates, missing slots,
    /// invalid parameter values, and kind mismatches.
    pub fn from_entries(
        entries: impl IntoIterator<Item = (ParamKey, FamilyParams)>,
    ) -> Result<Self, RegistryError> {
        let mut map = BTreeMap::new();
        for (key, params) in entries {
            params.validate()?;
            if !params.kind_matches(key.1, key.2) {
                return Err(RegistryError::WrongKind { vtd: key.0, class: key.1, family: key.2 });
            }
            if map.insert(key, params).is_some() {
                return Err(RegistryError::DuplicateEntry { vtd: key.0, class: key.1, family: key.2 });
            }
        }
        for vtd in VtdCondition::ALL {
            for class in ScattererClass::ALL {
                for family in ParamFamily::ALL {
                    if !map.contains_key(&(vtd, class, family)) {
                        return Err(RegistryError::MissingEntry { vtd, class, family });
                    }
                }
            }
        }
        Ok(ParamTable { entries: map })
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ParamKey, &FamilyParams)> {
        self.entries.iter()
    }

    pub fn get(&self, vtd: VtdCondition, class: ScattererClass, family: ParamFamily) -> &FamilyParams {
        // Completeness is a construction invariant.
        &self.entries[&(vtd, class, family)]
    }

    pub fn scatterer_number(&self, vtd: VtdCondition, class: ScattererClass) -> &LogisticParams {
        match self.get(vtd, class, ParamFamily::ScattererNumber) {
            FamilyParams::Logistic(p) => p,
            _ => unreachable!("kind checked at construction"),
        }
    }

    pub fn cluster_number(&self, vtd: VtdCondition, class: ScattererClass) -> &LogisticParams {
        match self.get(vtd, class, ParamFamily::ClusterNumber) {
            FamilyParams::Logistic(p) => p,
            _ => unreachable!("kind checked at construction"),
        }
    }

    pub fn static_distance(&self, vtd: VtdCondition) -> &GammaParams {
        match self.get(vtd, ScattererClass::Static, ParamFamily::Distance) {
            FamilyParams::Gamma(p) => p,
            _ => unreachable!("kind checked at construction"),
        }
    }

    pub fn dynamic_distance(&self, vtd: VtdCondition) -> &RayleighParams {
        match self.get(vtd, ScattererClass::Dynamic, ParamFamily::Distance) {
            FamilyParams::Rayleigh(p) => p,
            _ => unreachable!("kind checked at construction"),
        }
    }

    /// The excess-ratio distribution for either class.
    pub fn distance_distribution(&self, vtd: VtdCondition, class: ScattererClass) -> &dyn Distribution {
        self.get(vtd, class, ParamFamily::Distance)
            .as_distribution()
            .expect("distance entries are sampleable")
    }

    pub fn angle(&self, vtd: VtdCondition, class: ScattererClass, family: ParamFamily) -> &GaussianParams {
        assert!(
            matches!(
                family,
                ParamFamily::AzimuthDeparture
                    | ParamFamily::AzimuthArrival
                    | ParamFamily::ElevationDeparture
                    | ParamFamily::ElevationArrival
            ),
            "{family} is not an angle family"
        );
        match self.get(vtd, class, family) {
            FamilyParams::Gaussian(p) => p,
            _ => unreachable!("kind checked at construction"),
        }
    }

    pub fn power_delay(&self, vtd: VtdCondition, class: ScattererClass) -> &PowerDelayParams {
        match self.get(vtd, class, ParamFamily::PowerDelay) {
            FamilyParams::PowerDelay(p) => p,
            _ => unreachable!("kind checked at construction"),
        }
    }

    /// Serializes to the on-disk text schema. The writer is deterministic,
    /// so equal tables produce byte-identical output.
    pub fn to_toml_string(&self) -> String {
        let mut tree: BTreeMap<String, BTreeMap<String, BTreeMap<String, FamilyParams>>> =
            BTreeMap::new();
        for (&(vtd, class, family), params) in &self.entries {
            tree.entry(vtd.as_str().to_owned())
                .or_default()
                .entry(class.as_str().to_owned())
                .or_default()
                .insert(family.as_str().to_owned(), *params);
        }
        toml::to_string(&tree).expect("table serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RegistryError> {
        let tree: BTreeMap<String, BTreeMap<String, BTreeMap<String, FamilyParams>>> =
            toml::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        let mut entries = Vec::new();
        for (vtd_key, classes) in tree {
            let vtd = VtdCondition::from_str(&vtd_key)
                .ok_or_else(|| RegistryError::UnknownKey { key: vtd_key.clone() })?;
            for (class_key, families) in classes {
                let class = ScattererClass::from_str(&class_key)
                    .ok_or_else(|| RegistryError::UnknownKey { key: class_key.clone() })?;
                for (family_key, params) in families {
                    let family = ParamFamily::from_str(&family_key)
                        .ok_or_else(|| RegistryError::UnknownKey { key: family_key.clone() })?;
                    entries.push(((vtd, class, family), params));
                }
            }
        }
        Self::from_entries(entries)
    }

    pub fn write_file(&self, path: &Path) -> Result<(), RegistryError> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

/// The built-in parameter table for the reference urban crossroad
/// measurement campaign at 28 GHz.
pub fn builtin_table() -> ParamTable {
    use ParamFamily::*;
    use ScattererClass::{Dynamic, Static};
    use VtdCondition::{High, Low, Medium};

    let lg = |mu, scale| FamilyParams::Logistic(LogisticParams { mu, scale });
    let gm = |shape, rate| FamilyParams::Gamma(GammaParams { shape, rate });
    let ry = |sigma| FamilyParams::Rayleigh(RayleighParams { sigma });
    let gs = |mu, sigma| FamilyParams::Gaussian(GaussianParams { mu, sigma });
    let pd = |decay, offset, shadow| {
        FamilyParams::PowerDelay(PowerDelayParams { decay, offset, shadow_sigma_db: shadow })
    };

    let entries = [
        ((High, Static, ScattererNumber), lg(0.45, 0.15)),
        ((Medium, Static, ScattererNumber), lg(0.82, 0.23)),
        ((Low, Static, ScattererNumber), lg(0.49, 0.16)),
        ((High, Dynamic, ScattererNumber), lg(0.53, 0.25)),
        ((Medium, Dynamic, ScattererNumber), lg(0.44, 0.18)),
        ((Low, Dynamic, ScattererNumber), lg(0.28, 0.17)),
        ((High, Static, ClusterNumber), lg(0.09, 0.03)),
        ((Medium, Static, ClusterNumber), lg(0.14, 0.04)),
        ((Low, Static, ClusterNumber), lg(0.08, 0.03)),
        ((High, Dynamic, ClusterNumber), lg(0.12, 0.06)),
        ((Medium, Dynamic, ClusterNumber), lg(0.09, 0.03)),
        ((Low, Dynamic, ClusterNumber), lg(0.06, 0.03)),
        ((High, Static, Distance), gm(0.68, 1.74)),
        ((Medium, Static, Distance), gm(0.83, 1.71)),
        ((Low, Static, Distance), gm(0.59, 2.08)),
        ((High, Dynamic, Distance), ry(0.55)),
        ((Medium, Dynamic, Distance), ry(0.37)),
        ((Low, Dynamic, Distance), ry(0.30)),
        ((High, Static, AzimuthDeparture), gs(-0.48, 1.85)),
        ((Medium, Static, AzimuthDeparture), gs(-0.12, 2.08)),
        ((Low, Static, AzimuthDeparture), gs(0.26, 1.76)),
        ((High, Dynamic, AzimuthDeparture), gs(-0.72, 1.98)),
        ((Medium, Dynamic, AzimuthDeparture), gs(-0.54, 1.78)),
        ((Low, Dynamic, AzimuthDeparture), gs(-0.09, 1.73)),
        ((High, Static, AzimuthArrival), gs(0.28, 1.89)),
        ((Medium, Static, AzimuthArrival), gs(0.52, 1.95)),
        ((Low, Static, AzimuthArrival), gs(0.35, 1.71)),
        ((High, Dynamic, AzimuthArrival), gs(0.62, 1.98)),
        ((Medium, Dynamic, AzimuthArrival), gs(0.81, 1.61)),
        ((Low, Dynamic, AzimuthArrival), gs(1.01, 1.58)),
        ((High, Static, ElevationDeparture), gs(0.06, 0.09)),
        ((Medium, Static, ElevationDeparture), gs(0.07, 0.16)),
        ((Low, Static, ElevationDeparture), gs(0.06, 0.10)),
        ((High, Dynamic, ElevationDeparture), gs(0.57, 0.62)),
        ((Medium, Dynamic, ElevationDeparture), gs(0.66, 0.59)),
        ((Low, Dynamic, ElevationDeparture), gs(0.80, 0.56)),
        ((High, Static, ElevationArrival), gs(0.06, 0.09)),
        ((Medium, Static, ElevationArrival), gs(0.07, 0.16)),
        ((Low, Static, ElevationArrival), gs(0.06, 0.10)),
        ((High, Dynamic, ElevationArrival), gs(0.57, 0.62)),
        ((Medium, Dynamic, ElevationArrival), gs(0.66, 0.59)),
        ((Low, Dynamic, ElevationArrival), gs(0.80, 0.56)),
        ((High, Static, PowerDelay), pd(7.75e6, 30.28, 9.81)),
        ((Medium, Static, PowerDelay), pd(8.0e6, 31.90, 11.10)),
        ((Low, Static, PowerDelay), pd(10.0e6, 29.38, 9.71)),
        ((High, Dynamic, PowerDelay), pd(4.54e6, 31.08, 9.60)),
        ((Medium, Dynamic, PowerDelay), pd(1.50e6, 32.80, 10.90)),
        ((Low, Dynamic, PowerDelay), pd(4.47e6, 30.17, 8.72)),
    ];
    ParamTable::from_entries(entries).expect("built-in table is complete and valid")
}
