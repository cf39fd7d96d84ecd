//! Travellers, multinomial-logit access-mode choice and day-to-day learning.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{NetworkError, NodeId, RoadNetwork};

/// Start of the morning study window, 06:30, in seconds since midnight.
pub const STUDY_WINDOW_START: f64 = 6.5 * 3600.0;
/// End of the study window, 07:30.
pub const STUDY_WINDOW_END: f64 = 7.5 * 3600.0;

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("no level of service known for mode {0}")]
    MissingLos(Mode),
    #[error("every mode has utility -inf")]
    NoAvailableMode,
    #[error("cost coefficient must be negative, got {0}")]
    NonNegativeCostCoefficient(f64),
    #[error("logit scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("invalid population: {0}")]
    InvalidPopulation(String),
    #[error("failed to read population file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed population file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Auto,
    Bus,
    Walk,
    Bike,
    /// The flexible on-demand service.
    Fts,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Auto, Mode::Bus, Mode::Walk, Mode::Bike, Mode::Fts];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Auto => "auto",
            Mode::Bus => "bus",
            Mode::Walk => "walk",
            Mode::Bike => "bike",
            Mode::Fts => "fts",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s}"))
    }
}

/// Fixed-size map keyed by [`Mode`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeMap<T>(pub [T; 5]);

impl<T> ModeMap<T> {
    pub fn from_fn(mut f: impl FnMut(Mode) -> T) -> Self {
        ModeMap(Mode::ALL.map(&mut f))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Mode, &T)> {
        Mode::ALL.into_iter().zip(self.0.iter())
    }

    pub fn values(&self) -> &[T; 5] {
        &self.0
    }
}

impl<T> Index<Mode> for ModeMap<T> {
    type Output = T;
    fn index(&self, m: Mode) -> &T {
        &self.0[m.index()]
    }
}

impl<T> IndexMut<Mode> for ModeMap<T> {
    fn index_mut(&mut self, m: Mode) -> &mut T {
        &mut self.0[m.index()]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelOfService {
    pub wait: f64,
    pub ivt: f64,
    pub cost: f64,
}

impl LevelOfService {
    /// `(1 - lambda) * self + lambda * observed`, componentwise.
    pub fn blend(self, observed: LevelOfService, lambda: f64) -> LevelOfService {
        let mix = |a: f64, b: f64| (1.0 - lambda) * a + lambda * b;
        LevelOfService {
            wait: mix(self.wait, observed.wait),
            ivt: mix(self.ivt, observed.ivt),
            cost: mix(self.cost, observed.cost),
        }
    }
}

/// What a traveller believes about each mode. `None` means never observed.
pub type PerceivedLevelOfService = ModeMap<Option<LevelOfService>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Traveler {
    pub id: u32,
    pub home: NodeId,
    pub station: NodeId,
    pub departure_time: f64,
    pub last_mode: Option<Mode>,
    pub perceived: PerceivedLevelOfService,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityCoefficients {
    pub asc: ModeMap<f64>,
    pub beta_ivt: f64,
    pub beta_wait: f64,
    pub beta_cost: f64,
    pub scale: f64,
}

impl Default for UtilityCoefficients {
    fn default() -> Self {
        UtilityCoefficients {
            asc: ModeMap([0.0; 5]),
            beta_ivt: -0.0008,
            beta_wait: -0.0016,
            beta_cost: -0.3,
            scale: 1.0,
        }
    }
}

impl UtilityCoefficients {
    pub fn validate(&self) -> Result<(), DemandError> {
        if !(self.beta_cost < 0.0) {
            return Err(DemandError::NonNegativeCostCoefficient(self.beta_cost));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(DemandError::NonPositiveScale(self.scale));
        }
        Ok(())
    }

    /// Systematic utility of a level of service for mode `m`.
    pub fn systematic(&self, m: Mode, los: &LevelOfService) -> f64 {
        self.asc[m] + self.beta_ivt * los.ivt + self.beta_wait * los.wait + self.beta_cost * los.cost
    }
}

/// Linear-in-parameters utility from the traveller's current perceptions.
pub fn utility(t: &Traveler, m: Mode, coef: &UtilityCoefficients) -> Result<f64, DemandError> {
    let los = t.perceived[m].as_ref().ok_or(DemandError::MissingLos(m))?;
    Ok(coef.systematic(m, los))
}

/// Logit probabilities `exp(scale * V_m) / sum_k exp(scale * V_k)`, shifted by
/// the maximum for stability. `-inf` utilities get probability 0.
pub fn choice_probabilities(utilities: &[f64], scale: f64) -> Result<Vec<f64>, DemandError> {
    let max = utilities
        .iter()
        .copied()
        .filter(|u| !u.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(DemandError::NoAvailableMode);
    }
    let mut p: Vec<f64> = utilities
        .iter()
        .map(|&u| (scale * (u - max)).exp())
        .collect();
    let total: f64 = p.iter().sum();
    for x in &mut p {
        *x /= total;
    }
    Ok(p)
}

/// Draw one mode using a single uniform variate from `rng`.
pub fn choose_mode<R: Rng + ?Sized>(
    utilities: &ModeMap<f64>,
    scale: f64,
    rng: &mut R,
) -> Result<Mode, DemandError> {
    let p = choice_probabilities(utilities.values(), scale)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    for (m, &pm) in Mode::ALL.iter().zip(&p) {
        if pm <= 0.0 {
            continue;
        }
        acc += pm;
        last = Some(*m);
        if u < acc {
            return Ok(*m);
        }
    }
    // Rounding left `acc` a hair under 1.
    last.ok_or(DemandError::NoAvailableMode)
}

/// Expected maximum utility `ln sum_m exp(scale * V_m)` (unscaled by money).
pub fn logsum(utilities: &[f64], scale: f64) -> Result<f64, DemandError> {
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(DemandError::NoAvailableMode);
    }
    let s: f64 = utilities.iter().map(|&u| (scale * (u - max)).exp()).sum();
    Ok(scale * max + s.ln())
}

/// Money-metric consumer surplus summed over travellers, in dollars.
pub fn consumer_surplus<'a, I>(utilities: I, coef: &UtilityCoefficients) -> Result<f64, DemandError>
where
    I: IntoIterator<Item = &'a ModeMap<f64>>,
{
    coef.validate()?;
    let money = (coef.beta_cost * coef.scale).abs();
    utilities.into_iter().try_fold(0.0, |acc, u| {
        Ok(acc + logsum(u.values(), coef.scale)? / money)
    })
}

/// Smooth the chosen mode's perception towards what was experienced. Other
/// modes keep their beliefs, except that the posted fts fare is common knowledge.
pub fn update_perception(
    perceived: &PerceivedLevelOfService,
    chosen: Mode,
    experienced: LevelOfService,
    lambda: f64,
    posted_fts_fare: Option<f64>,
) -> PerceivedLevelOfService {
    debug_assert!(lambda > 0.0 && lambda <= 1.0);
    let mut next = *perceived;
    next[chosen] = Some(match perceived[chosen] {
        Some(prior) => prior.blend(experienced, lambda),
        None => experienced,
    });
    if let (Some(fare), Some(los)) = (posted_fts_fare, next[Mode::Fts].as_mut()) {
        los.cost = fare;
    }
    next
}

/// Level-of-service assumptions for the non-fts modes and fts cold start.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccessModes {
    /// Parking plus vehicle operating cost of driving to the station, dollars.
    pub auto_cost: f64,
    /// Parking search and walk from the lot, seconds.
    pub auto_access_time: f64,
    pub bus_wait: f64,
    /// Bus in-vehicle time as a multiple of the car shortest-path time.
    pub bus_ivt_factor: f64,
    pub bus_fare: f64,
    pub walk_speed: f64,
    pub bike_speed: f64,
    /// Cold-start fts wait belief, seconds.
    pub fts_initial_wait: f64,
    /// Wait recorded when an fts chooser finds no service, seconds.
    pub fts_fallback_wait: f64,
}

impl Default for AccessModes {
    fn default() -> Self {
        AccessModes {
            auto_cost: 6.0,
            auto_access_time: 120.0,
            bus_wait: 600.0,
            bus_ivt_factor: 2.0,
            bus_fare: 3.0,
            walk_speed: 1.4,
            bike_speed: 4.0,
            fts_initial_wait: 600.0,
            fts_fallback_wait: 1800.0,
        }
    }
}

impl AccessModes {
    /// Level of service of every mode for a trip from `home` to the station.
    /// The fts entry uses the cold-start wait and the supplied fare.
    pub fn base_los(
        &self,
        net: &RoadNetwork,
        home: NodeId,
        fts_fare: f64,
    ) -> Result<ModeMap<LevelOfService>, DemandError> {
        let station = net.station();
        let drive = net.shortest_time(home, station)?;
        let dist = net.trip_distance(home, station)?;
        Ok(ModeMap([
            LevelOfService {
                wait: self.auto_access_time,
                ivt: drive,
                cost: self.auto_cost,
            },
            LevelOfService {
                wait: self.bus_wait,
                ivt: self.bus_ivt_factor * drive,
                cost: self.bus_fare,
            },
            LevelOfService {
                wait: 0.0,
                ivt: dist / self.walk_speed,
                cost: 0.0,
            },
            LevelOfService {
                wait: 0.0,
                ivt: dist / self.bike_speed,
                cost: 0.0,
            },
            LevelOfService {
                wait: self.fts_initial_wait,
                ivt: drive,
                cost: fts_fare,
            },
        ]))
    }
}

/// One traveller in a population file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationEntry {
    pub home: NodeId,
    #[serde(rename = "departure_time_s")]
    pub departure_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationFile {
    pub travelers: Vec<PopulationEntry>,
}

impl PopulationFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DemandError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Check homes exist and differ from the station, and departures fall
    /// inside the study window.
    pub fn validate(&self, net: &RoadNetwork) -> Result<(), DemandError> {
        if self.travelers.is_empty() {
            return Err(DemandError::InvalidPopulation("no travelers".into()));
        }
        for (i, e) in self.travelers.iter().enumerate() {
            if !net.contains(e.home) {
                return Err(DemandError::InvalidPopulation(format!(
                    "traveler {i}: unknown home node {}",
                    e.home
                )));
            }
            if e.home == net.station() {
                return Err(DemandError::InvalidPopulation(format!(
                    "traveler {i} lives at the station"
                )));
            }
            if !(STUDY_WINDOW_START..STUDY_WINDOW_END).contains(&e.departure_time) {
                return Err(DemandError::InvalidPopulation(format!(
                    "traveler {i} departs outside the study window"
                )));
            }
        }
        Ok(())
    }
}

/// Homes uniform over nodes other than the station and the depot,
/// departures uniform over the window.
pub fn synthesize_population<R: Rng + ?Sized>(
    net: &RoadNetwork,
    count: usize,
    rng: &mut R,
) -> PopulationFile {
    let homes: Vec<NodeId> = net
        .node_ids()
        .filter(|&n| n != net.station() && n != net.depot())
        .collect();
    let travelers = (0..count)
        .map(|_| PopulationEntry {
            home: homes[rng.gen_range(0..homes.len())],
            departure_time: rng.gen_range(STUDY_WINDOW_START..STUDY_WINDOW_END),
        })
        .collect();
    PopulationFile { travelers }
}

/// Share of each mode implied by summing choice probabilities.
pub fn expected_shares(
    los: &[ModeMap<LevelOfService>],
    coef: &UtilityCoefficients,
) -> Result<ModeMap<f64>, DemandError> {
    let mut shares = ModeMap([0.0; 5]);
    for l in los {
        let v = ModeMap::from_fn(|m| coef.systematic(m, &l[m]));
        let p = choice_probabilities(v.values(), coef.scale)?;
        for m in Mode::ALL {
            shares[m] += p[m.index()];
        }
    }
    let n = los.len().max(1) as f64;
    for m in Mode::ALL {
        shares[m] /= n;
    }
    Ok(shares)
}

/// Adjust alternative-specific constants until aggregate logit shares match
/// `target`. The auto constant is pinned at zero.
pub fn calibrate_ascs(
    los: &[ModeMap<LevelOfService>],
    coef: &UtilityCoefficients,
    target: &ModeMap<f64>,
    tolerance: f64,
    max_iter: usize,
) -> Result<UtilityCoefficients, DemandError> {
    let mut c = *coef;
    for _ in 0..max_iter {
        let shares = expected_shares(los, &c)?;
        let gap = Mode::ALL
            .iter()
            .map(|&m| (shares[m] - target[m]).abs())
            .fold(0.0, f64::max);
        if gap < tolerance {
            break;
        }
        for m in Mode::ALL {
            c.asc[m] += (target[m].ln() - shares[m].ln()) / c.scale;
        }
        let pin = c.asc[Mode::Auto];
        for m in Mode::ALL {
            c.asc[m] -= pin;
        }
    }
    Ok(c)
}
