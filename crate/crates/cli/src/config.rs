//! Config file layout and command-line overrides, resolved onto a preset.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};

use sch_core::experiment::{
    ExperimentConfig, FailurePolicy, InitialCondition, Preset, ReferencePolicy,
};

use crate::CliError;

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub preset: Option<Preset>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    #[serde(rename = "T")]
    pub t_final: Option<f64>,
    pub h_list: Option<Vec<f64>>,
    pub tau_list: Option<Vec<f64>>,
    #[serde(rename = "M")]
    pub realizations: Option<usize>,
    pub reference_policy: Option<ReferencePolicy>,
    pub reference_h: Option<f64>,
    pub initial: Option<InitialCondition>,
    pub snapshots: Option<Vec<f64>>,
    pub failure_policy: Option<FailurePolicy>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub master_seed: Option<u64>,
    pub tau_ref: Option<f64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperSection {
    pub newton_tol: Option<f64>,
    pub newton_max_iter: Option<usize>,
    pub constraint_threshold: Option<f64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblySection {
    pub quad_order: Option<usize>,
}

/// On-disk config: one flat section per module, every key optional.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub stepper: StepperSection,
    #[serde(default)]
    pub assembly: AssemblySection,
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Fully populated file for `config`; printed by `validate` and stored in manifests.
    pub fn from_resolved(c: &ExperimentConfig) -> Self {
        ConfigFile {
            experiment: ExperimentSection {
                preset: Some(c.preset),
                epsilon: Some(c.epsilon),
                delta: Some(c.delta),
                t_final: Some(c.t_final),
                h_list: Some(c.h_list.clone()),
                tau_list: Some(c.tau_list.clone()),
                realizations: Some(c.realizations),
                reference_policy: Some(c.reference_policy),
                reference_h: c.reference_h,
                initial: Some(c.initial),
                snapshots: Some(c.snapshots.clone()),
                failure_policy: Some(c.failure_policy),
            },
            noise: NoiseSection {
                master_seed: Some(c.master_seed),
                tau_ref: Some(c.tau_ref),
            },
            stepper: StepperSection {
                newton_tol: Some(c.newton_tol),
                newton_max_iter: Some(c.newton_max_iter),
                constraint_threshold: Some(c.constraint_threshold),
            },
            assembly: AssemblySection {
                quad_order: Some(c.quad_order),
            },
        }
    }

    fn apply(&self, c: &mut ExperimentConfig) {
        let e = &self.experiment;
        set(&mut c.epsilon, e.epsilon);
        set(&mut c.delta, e.delta);
        set(&mut c.t_final, e.t_final);
        set(&mut c.h_list, e.h_list.clone());
        set(&mut c.tau_list, e.tau_list.clone());
        set(&mut c.realizations, e.realizations);
        set(&mut c.reference_policy, e.reference_policy);
        if e.reference_h.is_some() {
            c.reference_h = e.reference_h;
        }
        set(&mut c.initial, e.initial);
        set(&mut c.snapshots, e.snapshots.clone());
        set(&mut c.failure_policy, e.failure_policy);
        set(&mut c.master_seed, self.noise.master_seed);
        set(&mut c.tau_ref, self.noise.tau_ref);
        set(&mut c.newton_tol, self.stepper.newton_tol);
        set(&mut c.newton_max_iter, self.stepper.newton_max_iter);
        set(&mut c.constraint_threshold, self.stepper.constraint_threshold);
        set(&mut c.quad_order, self.assembly.quad_order);
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Flags shared by `run` and `validate`. Explicit flags win over the config file, which
/// wins over `--quick`, which wins over the preset.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// Preset name (test1-temporal, test1-spatial, test2, test3, custom).
    #[arg(long = "preset", value_name = "NAME")]
    pub preset: Option<String>,
    /// TOML config file with [experiment], [noise], [stepper] and [assembly] sections.
    #[arg(long, value_name = "FILE")]
    pub config: Option<std::path::PathBuf>,
    /// Monte Carlo realizations.
    #[arg(long = "M", value_name = "COUNT")]
    pub realizations: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Time step ladder, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub tau: Option<Vec<f64>>,
    /// Mesh spacing ladder `2/n`, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub h: Option<Vec<f64>>,
    /// Final time.
    #[arg(long = "T", value_name = "TIME")]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Snapshot times, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub snapshots: Option<Vec<f64>>,
    /// Shrink meshes and final time to a smoke-test scale.
    #[arg(long)]
    pub quick: bool,
}

/// Smoke-test scale: coarse meshes and a short horizon, same physics and ladder shape.
fn make_quick(c: &mut ExperimentConfig) {
    match c.preset {
        Preset::Test1Temporal | Preset::Custom => {
            c.h_list = vec![0.25];
            c.t_final = 0.0032;
        }
        Preset::Test1Spatial => {
            c.h_list = vec![0.5, 0.25];
            c.reference_h = Some(0.125);
            c.t_final = 0.0032;
        }
        Preset::Test2 | Preset::Test3 => {
            c.h_list = vec![2.0 / 16.0];
            c.t_final = 0.002;
            c.snapshots = vec![0.0, 0.001, 0.002];
        }
    }
}

impl Overrides {
    /// Resolves preset, file and flags into a config. Does not validate.
    pub fn resolve(&self, positional: Option<&str>) -> Result<ExperimentConfig, CliError> {
        let file = match &self.config {
            Some(p) => Some(ConfigFile::read(p)?),
            None => None,
        };
        let named = positional.or(self.preset.as_deref());
        let preset = match (named, file.as_ref().and_then(|f| f.experiment.preset)) {
            (Some(n), _) => n.parse::<Preset>().map_err(|e| CliError::Config(e.to_string()))?,
            (None, Some(p)) => p,
            (None, None) if file.is_some() => Preset::Custom,
            (None, None) => {
                return Err(CliError::Config("a preset or --config file is required".into()))
            }
        };
        let mut c = ExperimentConfig::from_preset(preset);
        if self.quick {
            make_quick(&mut c);
        }
        if let Some(f) = &file {
            f.apply(&mut c);
        }
        set(&mut c.realizations, self.realizations);
        set(&mut c.epsilon, self.epsilon);
        set(&mut c.delta, self.delta);
        set(&mut c.tau_list, self.tau.clone());
        set(&mut c.h_list, self.h.clone());
        set(&mut c.t_final, self.t_final);
        set(&mut c.master_seed, self.seed);
        set(&mut c.snapshots, self.snapshots.clone());
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_file_round_trips() {
        for p in [Preset::Test1Temporal, Preset::Test1Spatial, Preset::Test2] {
            let c = ExperimentConfig::from_preset(p);
            let text = toml::to_string(&ConfigFile::from_resolved(&c)).unwrap();
            let f: ConfigFile = toml::from_str(&text).unwrap();
            let mut d = ExperimentConfig::custom();
            d.preset = p;
            f.apply(&mut d);
            assert_eq!(c, d);
        }
    }

    #[test]
    fn flags_override_preset() {
        let o = Overrides {
            realizations: Some(7),
            tau: Some(vec![4e-4, 2e-4]),
            seed: Some(3),
            ..Default::default()
        };
        let c = o.resolve(Some("test1-temporal")).unwrap();
        assert_eq!(c.realizations, 7);
        assert_eq!(c.tau_list, vec![4e-4, 2e-4]);
        assert_eq!(c.master_seed, 3);
        assert_eq!(c.epsilon, 0.1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ConfigFile>("[experiment]\nepsilonn = 0.1\n").is_err());
        assert!(toml::from_str::<ConfigFile>("[noise]\nmaster_seed = 4\n").is_ok());
    }

    #[test]
    fn quick_configs_validate() {
        for name in ["test1-temporal", "test1-spatial", "test2", "test3", "custom"] {
            let o = Overrides {
                quick: true,
                ..Default::default()
            };
            o.resolve(Some(name)).unwrap().validate().unwrap();
        }
    }
}
