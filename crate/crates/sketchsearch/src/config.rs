//! Experiment configuration files (TOML).
//!
//! ```toml
//! name = "uplift"
//! episodes = 100
//! base_seed = 1
//! preset = "desk"          # desk | sim | study
//! control = "robot-only"   # arm the others are tested against
//!
//! [episode]                # overrides on top of the preset
//! particles = 3000
//!
//! [[arms]]
//! name = "robot-only"
//!
//! [[arms]]
//! name = "human"
//! human = { eta = 0.95, xi = 0.9, sketch_period = 60 }
//! ```
//!
//! An optional `[sweep]` table expands the first arm into the Cartesian
//! product of the listed axes; see [`SweepAxes`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sketchsearch_core::episode::EpisodeConfig;
use sketchsearch_core::planner::PlanningMode;
use sketchsearch_core::sim_human::{HumanModel, HumanSensorModel};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Named parameter bundles for the episode engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Desk-scale batch budget: 600 s episodes with a reduced planner and
    /// particle budget so hundreds of episodes fit in minutes.
    #[default]
    Desk,
    /// 600 s episodes at the full default budget.
    Sim,
    /// 900 s sessions for live operators, answers expire after 15 s.
    Study,
}

impl Preset {
    pub fn episode(self) -> EpisodeConfig {
        let mut cfg = EpisodeConfig::default();
        match self {
            Preset::Desk => {
                cfg.particles = 2000;
                cfg.planner.sims_per_second = 50.0;
                cfg.planner.min_simulations = 100;
                // At this budget, half-greedy rollouts value moves toward the
                // belief far better than uniform random walks.
                cfg.planner.rollout_greedy = 0.5;
            }
            Preset::Sim => {}
            Preset::Study => {
                cfg.t_max = 900.0;
                cfg.query_timeout = 15.0;
                cfg.glimpse_period = 10.0;
            }
        }
        cfg
    }
}

/// A simulated human as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HumanSpec {
    #[serde(flatten)]
    pub model: HumanModel,
    /// Accuracy and availability the robot assumes; defaults to the true
    /// values (a matched model).
    pub assumed_eta: Option<f64>,
    pub assumed_xi: Option<f64>,
}

impl Default for HumanSpec {
    fn default() -> Self {
        HumanSpec { model: HumanModel::default(), assumed_eta: None, assumed_xi: None }
    }
}

impl HumanSpec {
    pub fn assumed(&self) -> HumanSensorModel {
        HumanSensorModel {
            eta: self.assumed_eta.unwrap_or(self.model.eta),
            xi: self.assumed_xi.unwrap_or(self.model.xi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub name: String,
    /// Absent for the robot-only arm.
    #[serde(default)]
    pub human: Option<HumanSpec>,
    #[serde(default)]
    pub planning: Option<PlanningMode>,
    /// Overrides the experiment-wide episode count.
    #[serde(default)]
    pub episodes: Option<usize>,
    /// Added to the episode seeds. Arms share seeds by default so that
    /// comparisons are paired (common random numbers).
    #[serde(default)]
    pub seed_offset: u64,
    /// Sweep coordinates, filled in by sweep expansion.
    #[serde(default)]
    pub axes: BTreeMap<String, String>,
}

impl ArmConfig {
    pub fn robot_only(name: &str) -> Self {
        ArmConfig {
            name: name.into(),
            human: None,
            planning: None,
            episodes: None,
            seed_offset: 0,
            axes: BTreeMap::new(),
        }
    }

    pub fn with_human(name: &str, model: HumanModel) -> Self {
        ArmConfig { human: Some(HumanSpec { model, ..HumanSpec::default() }), ..Self::robot_only(name) }
    }
}

/// Accuracy assumed by the robot in an accuracy sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AssumedAxis {
    /// `"matched"`: the robot's model equals the true accuracy.
    Matched(String),
    Values(Vec<f64>),
}

/// Axes expanded over the first arm. Empty axes are left alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SweepAxes {
    pub eta: Vec<f64>,
    pub assumed_eta: Option<AssumedAxis>,
    pub xi: Vec<f64>,
    #[serde(with = "extended_vec")]
    pub sketch_period: Vec<f64>,
    pub predictive: Vec<bool>,
}

mod extended_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use sketchsearch_core::math::extended_f64;

    #[derive(Serialize, Deserialize)]
    struct Wrapped(#[serde(with = "extended_f64")] f64);

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| Wrapped(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Wrapped>::deserialize(d)?.into_iter().map(|w| w.0).collect())
    }
}

fn format_axis(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
            && self.assumed_eta.is_none()
            && self.xi.is_empty()
            && self.sketch_period.is_empty()
            && self.predictive.is_empty()
    }

    /// Cartesian product of the axes applied to `base`.
    pub fn expand(&self, base: &ArmConfig) -> Result<Vec<ArmConfig>, ConfigError> {
        let mut arms = vec![base.clone()];
        let human_arm = |arm: &ArmConfig| -> Result<HumanSpec, ConfigError> {
            arm.human
                .clone()
                .ok_or_else(|| ConfigError::Invalid(format!("sweeping human axes needs a human on arm '{}'", arm.name)))
        };
        if !self.eta.is_empty() {
            arms = self.product(arms, &self.eta, "eta", |arm, v| {
                let mut h = human_arm(arm)?;
                h.model.eta = v;
                arm.human = Some(h);
                Ok(())
            })?;
        }
        match &self.assumed_eta {
            None => {}
            Some(AssumedAxis::Matched(word)) => {
                if word != "matched" {
                    return Err(ConfigError::Invalid(format!("assumed_eta must be \"matched\" or a list, got '{word}'")));
                }
                for arm in &mut arms {
                    let mut h = human_arm(arm)?;
                    h.assumed_eta = None;
                    arm.human = Some(h);
                    arm.axes.insert("assumed_eta".into(), "matched".into());
                }
            }
            Some(AssumedAxis::Values(values)) => {
                arms = self.product(arms, values, "assumed_eta", |arm, v| {
                    let mut h = human_arm(arm)?;
                    h.assumed_eta = Some(v);
                    arm.human = Some(h);
                    Ok(())
                })?;
            }
        }
        if !self.xi.is_empty() {
            arms = self.product(arms, &self.xi, "xi", |arm, v| {
                let mut h = human_arm(arm)?;
                h.model.xi = v;
                arm.human = Some(h);
                Ok(())
            })?;
        }
        if !self.sketch_period.is_empty() {
            arms = self.product(arms, &self.sketch_period, "sketch_period", |arm, v| {
                let mut h = human_arm(arm)?;
                h.model.sketch_period = v;
                arm.human = Some(h);
                Ok(())
            })?;
        }
        if !self.predictive.is_empty() {
            let flags: Vec<f64> = self.predictive.iter().map(|b| f64::from(u8::from(*b))).collect();
            arms = self.product(arms, &flags, "predictive", |arm, v| {
                arm.planning = Some(if v > 0.5 { PlanningMode::Predictive } else { PlanningMode::Blind });
                Ok(())
            })?;
            for arm in &mut arms {
                if let Some(v) = arm.axes.get_mut("predictive") {
                    *v = if v == "1" { "on".into() } else { "off".into() };
                }
            }
        }
        for arm in &mut arms {
            if !arm.axes.is_empty() {
                let coords: Vec<String> = arm.axes.iter().map(|(k, v)| format!("{k}={v}")).collect();
                arm.name = format!("{}[{}]", base.name, coords.join(","));
            }
        }
        Ok(arms)
    }

    fn product(
        &self,
        arms: Vec<ArmConfig>,
        values: &[f64],
        axis: &str,
        apply: impl Fn(&mut ArmConfig, f64) -> Result<(), ConfigError>,
    ) -> Result<Vec<ArmConfig>, ConfigError> {
        let mut out = Vec::with_capacity(arms.len() * values.len());
        for arm in &arms {
            for v in values {
                let mut a = arm.clone();
                apply(&mut a, *v)?;
                a.axes.insert(axis.into(), format_axis(*v));
                out.push(a);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub preset: Preset,
    /// Map file; the built-in map when absent.
    #[serde(default)]
    pub map: Option<PathBuf>,
    /// Arm the others are compared against in reports.
    #[serde(default)]
    pub control: Option<String>,
    /// Partial episode settings merged over the preset.
    #[serde(default)]
    pub episode: toml::Table,
    pub arms: Vec<ArmConfig>,
    #[serde(default, skip_serializing_if = "SweepAxes::is_empty")]
    pub sweep: SweepAxes,
}

fn default_episodes() -> usize {
    20
}

fn merge(base: &mut toml::Value, over: &toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::parse(&text)?;
        if let Some(map) = &cfg.map {
            if map.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.map = Some(dir.join(map));
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.arms.is_empty() {
            return Err(ConfigError::Invalid("at least one arm is required".into()));
        }
        let arms = self.expanded_arms()?;
        let mut names = std::collections::BTreeSet::new();
        for arm in &arms {
            if !names.insert(arm.name.clone()) {
                return Err(ConfigError::Invalid(format!("duplicate arm name '{}'", arm.name)));
            }
            if let Some(h) = &arm.human {
                h.model.validate().map_err(|e| ConfigError::Invalid(format!("arm '{}': {e:?}", arm.name)))?;
                let a = h.assumed();
                if !(0.0..=1.0).contains(&a.eta) || !(0.0..=1.0).contains(&a.xi) {
                    return Err(ConfigError::Invalid(format!("arm '{}': assumed model out of range", arm.name)));
                }
            }
        }
        if let Some(c) = &self.control {
            if !names.contains(c) {
                return Err(ConfigError::Invalid(format!("control arm '{c}' is not defined")));
            }
        }
        self.base_episode()?;
        Ok(())
    }

    /// Preset episode settings with the `[episode]` overrides applied.
    pub fn base_episode(&self) -> Result<EpisodeConfig, ConfigError> {
        let preset = self.preset.episode();
        if self.episode.is_empty() {
            return Ok(preset);
        }
        let mut value = toml::Value::try_from(&preset).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        merge(&mut value, &toml::Value::Table(self.episode.clone()));
        value.try_into().map_err(|e: toml::de::Error| ConfigError::Invalid(format!("[episode]: {e}")))
    }

    /// Arms after sweep expansion: every arm with a human is replaced by
    /// one arm per grid cell; robot-only arms pass through unchanged.
    pub fn expanded_arms(&self) -> Result<Vec<ArmConfig>, ConfigError> {
        if self.sweep.is_empty() {
            return Ok(self.arms.clone());
        }
        let mut arms = Vec::new();
        for arm in &self.arms {
            if arm.human.is_some() {
                arms.extend(self.sweep.expand(arm)?);
            } else {
                arms.push(arm.clone());
            }
        }
        if arms.iter().all(|a| a.human.is_none()) {
            return Err(ConfigError::Invalid("[sweep] needs at least one arm with a human".into()));
        }
        Ok(arms)
    }
}

/// Seed of episode `index` in an arm: a fixed mix of the base seed, the
/// arm's offset and the index.
pub fn episode_seed(base_seed: u64, arm: &ArmConfig, index: usize) -> u64 {
    // splitmix64 finaliser; keeps neighbouring indices decorrelated.
    let mut z = base_seed
        .wrapping_add(arm.seed_offset.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Episode settings for one run of an arm.
pub fn arm_episode(base: &EpisodeConfig, arm: &ArmConfig, seed: u64) -> (EpisodeConfig, Option<HumanModel>) {
    let mut cfg = base.clone();
    cfg.seed = seed;
    if let Some(p) = arm.planning {
        cfg.planning = p;
    }
    let human = arm.human.as_ref().map(|h| {
        cfg.assumed_human = h.assumed();
        h.model.clone()
    });
    (cfg, human)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
name = "demo"
episodes = 5
base_seed = 3
control = "robot-only"

[episode]
particles = 500
planner = { sims_per_second = 20.0 }

[[arms]]
name = "robot-only"

[[arms]]
name = "human"
human = { eta = 0.7, xi = 0.5, sketch_period = "inf", assumed_eta = 0.95 }
planning = "Blind"
"#;

    #[test]
    fn parses_and_merges_overrides() {
        let cfg = ExperimentConfig::parse(EXAMPLE).unwrap();
        let ep = cfg.base_episode().unwrap();
        assert_eq!(ep.particles, 500);
        assert_eq!(ep.planner.sims_per_second, 20.0);
        // Untouched preset values survive the partial override.
        assert_eq!(ep.planner.min_simulations, Preset::Desk.episode().planner.min_simulations);
        let h = cfg.arms[1].human.as_ref().unwrap();
        assert!(h.model.sketch_period.is_infinite());
        assert_eq!(h.assumed(), HumanSensorModel { eta: 0.95, xi: 0.5 });
        assert_eq!(cfg.arms[1].planning, Some(PlanningMode::Blind));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::parse(EXAMPLE).unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::parse("name = 'x'\narms = []\n").is_err());
        let dup = "name='x'\n[[arms]]\nname='a'\n[[arms]]\nname='a'\n";
        assert!(matches!(ExperimentConfig::parse(dup), Err(ConfigError::Invalid(_))));
        let ctl = "name='x'\ncontrol='b'\n[[arms]]\nname='a'\n";
        assert!(matches!(ExperimentConfig::parse(ctl), Err(ConfigError::Invalid(_))));
        let eta = "name='x'\n[[arms]]\nname='a'\nhuman={eta=1.5}\n";
        assert!(matches!(ExperimentConfig::parse(eta), Err(ConfigError::Invalid(_))));
        let ep = "name='x'\n[episode]\nparticles='many'\n[[arms]]\nname='a'\n";
        assert!(matches!(ExperimentConfig::parse(ep), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn accuracy_grid_expands_to_25_cells() {
        let text = r#"
name = "grid"
[sweep]
eta = [0.3, 0.5, 0.7, 0.9, 0.95]
assumed_eta = [0.3, 0.5, 0.7, 0.9, 0.95]
[[arms]]
name = "h"
human = {}
"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        let arms = cfg.expanded_arms().unwrap();
        assert_eq!(arms.len(), 25);
        let cell = arms.iter().find(|a| a.name == "h[assumed_eta=0.9,eta=0.3]").unwrap();
        let h = cell.human.as_ref().unwrap();
        assert_eq!((h.model.eta, h.assumed().eta), (0.3, 0.9));
    }

    #[test]
    fn matched_and_infinite_axes() {
        let text = r#"
name = "s"
[sweep]
eta = [0.5, 0.95]
assumed_eta = "matched"
sketch_period = [60, "inf"]
predictive = [true, false]
[[arms]]
name = "h"
human = {}
"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        let arms = cfg.expanded_arms().unwrap();
        assert_eq!(arms.len(), 8);
        let a = arms.iter().find(|a| a.axes["sketch_period"] == "inf" && a.axes["predictive"] == "off").unwrap();
        assert!(a.human.as_ref().unwrap().model.sketch_period.is_infinite());
        assert_eq!(a.planning, Some(PlanningMode::Blind));
        assert_eq!(a.axes["assumed_eta"], "matched");
    }

    #[test]
    fn human_axes_need_a_human() {
        let text = "name='s'\n[sweep]\neta=[0.5]\n[[arms]]\nname='r'\n";
        assert!(matches!(ExperimentConfig::parse(text), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn seeds_are_paired_across_arms_unless_offset() {
        let a = ArmConfig::robot_only("a");
        let b = ArmConfig::with_human("b", HumanModel::default());
        let c = ArmConfig { seed_offset: 1, ..ArmConfig::robot_only("c") };
        assert_eq!(episode_seed(7, &a, 3), episode_seed(7, &b, 3));
        assert_ne!(episode_seed(7, &a, 3), episode_seed(7, &c, 3));
        assert_ne!(episode_seed(7, &a, 3), episode_seed(7, &a, 4));
        let (cfg, human) = arm_episode(&EpisodeConfig::default(), &b, 11);
        assert_eq!(cfg.seed, 11);
        assert_eq!(human, Some(HumanModel::default()));
    }
}
