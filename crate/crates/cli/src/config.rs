//! JSON run configuration and its validation.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ftsim::demand::{synthesize_population, PopulationEntry, PopulationFile};
use ftsim::engine::{ModelParams, Scenario, SimulationContext};
use ftsim::network::RoadNetwork;
use ftsim::supply::FleetKind;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSpec {
    /// Network JSON file with `nodes`, `links`, `depot` and `station`.
    Path(PathBuf),
    Grid(GridSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub link_length_m: f64,
    pub speed_mps: f64,
    #[serde(default)]
    pub seed: u64,
    /// Length of a road from corner node 0 to an off-grid depot; 0 keeps
    /// the depot at the corner.
    #[serde(default)]
    pub depot_access_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PopulationSpec {
    /// Population JSON file with a `travelers` list.
    Path(PathBuf),
    /// Homes uniform over non-station nodes, departures uniform over the
    /// morning window. Drawn from the master seed.
    Synthetic { count: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub network: NetworkSpec,
    pub population: PopulationSpec,
    #[serde(default)]
    pub model: ModelParams,
    pub scenarios: Vec<Scenario>,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}
fn default_seed() -> u64 {
    7
}
fn default_replications() -> usize {
    10
}

/// Command-line adjustments applied on top of a config file or preset.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub days: Option<usize>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub strict_eq103: bool,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Relative network/population paths are taken from `base`.
    pub fn rebase_paths(&mut self, base: &Path) {
        if let NetworkSpec::Path(p) = &mut self.network {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let PopulationSpec::Path(p) = &mut self.population {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(label) = &o.scenario {
            self.scenarios.retain(|s| &s.label == label);
            if self.scenarios.is_empty() {
                return Err(CliError::Config(format!("unknown scenario {label:?}")));
            }
        }
        if let Some(d) = o.days {
            for s in &mut self.scenarios {
                s.days = d;
            }
        }
        if let Some(r) = o.replications {
            self.replications = r;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if o.strict_eq103 {
            for s in &mut self.scenarios {
                if s.fleet_kind == FleetKind::AvCentral {
                    s.fleet_floor = 0;
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.scenarios.is_empty() {
            return Err(CliError::Config("no scenarios configured".into()));
        }
        if self.replications == 0 {
            return Err(CliError::Config("replications must be at least 1".into()));
        }
        let mut seen = HashSet::new();
        for s in &self.scenarios {
            if !seen.insert(s.label.as_str()) {
                return Err(CliError::Config(format!("duplicate scenario label {:?}", s.label)));
            }
            if s.label.contains([',', '/', '\\', '"', '\n']) {
                return Err(CliError::Config(format!("scenario label {:?} has a reserved character", s.label)));
            }
            s.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        for (what, path) in [
            ("network", match &self.network {
                NetworkSpec::Path(p) => Some(p),
                NetworkSpec::Grid(_) => None,
            }),
            ("population", match &self.population {
                PopulationSpec::Path(p) => Some(p),
                PopulationSpec::Synthetic { .. } => None,
            }),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(CliError::Config(format!("{what} file {} not found", p.display())));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of every field that affects results.
    pub fn semantic_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Load the network and population and calibrate the choice model.
    pub fn build_context(&self) -> Result<Arc<SimulationContext>, CliError> {
        let network = match &self.network {
            NetworkSpec::Path(p) => RoadNetwork::load(p),
            NetworkSpec::Grid(g) => {
                RoadNetwork::grid(g.rows, g.cols, g.link_length_m, g.speed_mps, g.seed).and_then(
                    |net| match g.depot_access_m {
                        d if d > 0.0 => net.with_depot_access(d, g.speed_mps),
                        _ => Ok(net),
                    },
                )
            }
        }
        .map_err(|e| CliError::Config(e.to_string()))?;
        let population: Vec<PopulationEntry> = match &self.population {
            PopulationSpec::Path(p) => {
                PopulationFile::load(p)
                    .map_err(|e| CliError::Config(e.to_string()))?
                    .travelers
            }
            PopulationSpec::Synthetic { count } => {
                let mut rng = stream(self.seed, u64::MAX);
                synthesize_population(&network, *count, &mut rng).travelers
            }
        };
        let ctx = SimulationContext::new(Arc::new(network), population, self.model.clone())
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Arc::new(ctx))
    }
}

fn stream(master: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(id);
    rng
}

/// Seed of one replication. Every scenario shares it, so replication `r`
/// of two scenarios is a paired comparison under common random numbers.
pub fn replication_seed(master: u64, replication: usize) -> u64 {
    stream(master, replication as u64).next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preset;

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = preset::table10_1();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.semantic_hash(), b.semantic_hash());
        b.scenarios[1].discount_pct = 10.0;
        assert_ne!(a.semantic_hash(), b.semantic_hash());
        let mut c = a.clone();
        c.seed += 1;
        assert_ne!(a.semantic_hash(), c.semantic_hash());
    }

    #[test]
    fn replication_seeds_differ() {
        let s: HashSet<u64> = (0..100).map(|r| replication_seed(7, r)).collect();
        assert_eq!(s.len(), 100);
        assert_eq!(replication_seed(7, 3), replication_seed(7, 3));
    }

    #[test]
    fn scenario_override_filters() {
        let mut c = preset::table10_1();
        c.apply(&Overrides {
            scenario: Some("AV_50".into()),
            days: Some(50),
            strict_eq103: true,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(c.scenarios.len(), 1);
        assert_eq!(c.scenarios[0].days, 50);
        assert_eq!(c.scenarios[0].fleet_floor, 0);
        let mut c = preset::table10_1();
        assert!(c
            .apply(&Overrides {
                scenario: Some("nope".into()),
                ..Default::default()
            })
            .is_err());
    }

    #[test]
    fn duplicate_labels_rejected() {
        let mut c = preset::table10_1();
        let dup = c.scenarios[0].clone();
        c.scenarios.push(dup);
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn config_json_round_trip() {
        let c = preset::table10_1();
        let text = serde_json::to_string_pretty(&c).unwrap();
        let back: ConfigFile = serde_json::from_str(&text).unwrap();
        assert_eq!(c, back);
    }
}
