//! Experiment configuration files.
//!
//! A config is TOML with one optional table per module: `[sim]`,
//! `[estimator]`, `[profile]`, `[strategy]`, `[tracker]` and `[experiment]`.
//! Every key has a default, so an empty file is a valid config.

use std::path::{Path, PathBuf};

use rotsync::experiment::{StrategySpec, TrackerConfig};
use rotsync::{ErrorProfile, EstimatorConfig, SimConfig, StepChange};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Offset profile as written in a config; omitted parameters follow the
/// run length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    None,
    Constant {
        offset: f64,
    },
    Ramp {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start_step: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        end_step: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        final_offset: Option<f64>,
    },
    Steps {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        steps: Option<Vec<StepChange>>,
    },
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec::Ramp {
            start_step: None,
            end_step: None,
            final_offset: None,
        }
    }
}

impl ProfileSpec {
    pub fn resolve(&self, coarse_steps: usize) -> ErrorProfile {
        match self {
            ProfileSpec::None => ErrorProfile::None,
            ProfileSpec::Constant { offset } => ErrorProfile::constant(*offset),
            ProfileSpec::Ramp {
                start_step,
                end_step,
                final_offset,
            } => {
                let ErrorProfile::Ramp {
                    start_step: s,
                    end_step: e,
                    final_offset: f,
                } = ErrorProfile::default_ramp(coarse_steps)
                else {
                    unreachable!()
                };
                ErrorProfile::Ramp {
                    start_step: start_step.unwrap_or(s),
                    end_step: end_step.unwrap_or(e),
                    final_offset: final_offset.unwrap_or(f),
                }
            }
            ProfileSpec::Steps { steps: Some(steps) } => ErrorProfile::Steps {
                steps: steps.clone(),
            },
            ProfileSpec::Steps { steps: None } => ErrorProfile::default_steps(coarse_steps),
        }
    }

    /// Fully explicit form of a resolved profile, for config echoes.
    pub fn explicit(profile: &ErrorProfile) -> Self {
        match profile {
            ErrorProfile::None => ProfileSpec::None,
            ErrorProfile::Ramp {
                start_step,
                end_step,
                final_offset,
            } => ProfileSpec::Ramp {
                start_step: Some(*start_step),
                end_step: Some(*end_step),
                final_offset: Some(*final_offset),
            },
            ErrorProfile::Steps { steps } => ProfileSpec::Steps {
                steps: Some(steps.clone()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub runs: usize,
    /// Monte Carlo run `i` uses seed `base_seed + i`.
    pub base_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            runs: 1000,
            base_seed: 0,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub estimator: EstimatorConfig,
    pub profile: ProfileSpec,
    pub strategy: StrategySpec,
    pub tracker: TrackerConfig,
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        cfg.validate()
            .map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        Ok(cfg)
    }

    /// Reads `path`, or returns the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::input(p, e))?;
                Self::parse(&text, &p.display().to_string())
            }
        }
    }

    pub fn profile(&self) -> ErrorProfile {
        self.profile.resolve(self.sim.coarse_steps)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.sim.validate()?;
        self.estimator.validate()?;
        self.profile().validate(self.sim.fine_factor)?;
        if self.experiment.runs == 0 {
            return Err(CliError::Config("experiment.runs must be at least 1".into()));
        }
        if let StrategySpec::Hybrid { offset_min, .. } = self.strategy {
            if !(offset_min >= 0.0 && offset_min.is_finite()) {
                return Err(CliError::Config(
                    "strategy.offset_min must be non-negative".into(),
                ));
            }
        }
        Ok(())
    }

    /// The config with derived values written out, as echoed next to outputs.
    pub fn echo(&self) -> String {
        let explicit = ExperimentConfig {
            profile: ProfileSpec::explicit(&self.profile()),
            ..self.clone()
        };
        toml::to_string(&explicit).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_scenario() {
        let cfg = ExperimentConfig::parse("", "empty").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.sim.coarse_steps, 200);
        assert_eq!(cfg.profile(), ErrorProfile::default_ramp(200));
        assert_eq!(cfg.experiment.runs, 1000);
    }

    #[test]
    fn sections_override_defaults() {
        let text = r#"
            # low-noise ramp
            [sim]
            noise_level = 0.2
            coarse_steps = 100
            [estimator]
            window_size = 30
            [profile]
            kind = "ramp"
            final_offset = 2.0
            [strategy]
            kind = "uncertainty_gate"
            u_max = 0.5
        "#;
        let cfg = ExperimentConfig::parse(text, "t").unwrap();
        assert_eq!(cfg.sim.noise_level, 0.2);
        assert_eq!(cfg.estimator.window_size, 30);
        assert_eq!(
            cfg.profile(),
            ErrorProfile::Ramp {
                start_step: 25,
                end_step: 75,
                final_offset: 2.0
            }
        );
        assert_eq!(cfg.strategy, StrategySpec::UncertaintyGate { u_max: Some(0.5) });
    }

    #[test]
    fn errors_name_the_location() {
        let err = ExperimentConfig::parse("[sim]\nnoise_levle = 1\n", "bad.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.toml") && msg.contains("noise_levle") && msg.contains("line 2"), "{msg}");
        let err = ExperimentConfig::parse("[estimator]\nwindow_size = 1\n", "w.toml").unwrap_err();
        assert_eq!(err.code(), 2);
        let err = ExperimentConfig::parse("[profile]\nkind = \"constant\"\noffset = 0.001\n", "p").unwrap_err();
        assert!(err.to_string().contains("multiple"), "{err}");
    }

    #[test]
    fn echo_round_trips() {
        let cfg = ExperimentConfig::parse("[profile]\nkind = \"ramp\"\n", "t").unwrap();
        let back = ExperimentConfig::parse(&cfg.echo(), "echo").unwrap();
        assert_eq!(back.profile(), cfg.profile());
        assert_eq!(back.sim, cfg.sim);
        assert_eq!(back.strategy, cfg.strategy);
    }
}
