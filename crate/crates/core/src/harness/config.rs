//! Flat `key = value` experiment configuration with CLI overrides.

use std::path::PathBuf;

use super::{HarnessError, Result};
use crate::envs::EnvId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentMode {
    Ge,
    NoisyNet,
    Dqn,
    DdpgPlain,
    DdpgNoisy,
    DdpgGe,
    Bandit,
}

impl AgentMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ge" => Some(AgentMode::Ge),
            "noisynet" => Some(AgentMode::NoisyNet),
            "dqn" => Some(AgentMode::Dqn),
            "ddpg-plain" => Some(AgentMode::DdpgPlain),
            "ddpg-noisy" => Some(AgentMode::DdpgNoisy),
            "ddpg-ge" => Some(AgentMode::DdpgGe),
            "bandit" => Some(AgentMode::Bandit),
            _ => None,
        }
    }

    pub fn is_ddpg(self) -> bool {
        matches!(self, AgentMode::DdpgPlain | AgentMode::DdpgNoisy | AgentMode::DdpgGe)
    }
}

impl std::fmt::Display for AgentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AgentMode::Ge => "ge",
            AgentMode::NoisyNet => "noisynet",
            AgentMode::Dqn => "dqn",
            AgentMode::DdpgPlain => "ddpg-plain",
            AgentMode::DdpgNoisy => "ddpg-noisy",
            AgentMode::DdpgGe => "ddpg-ge",
            AgentMode::Bandit => "bandit",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub env: String,
    pub sparse: bool,
    pub agent: AgentMode,
    /// Initial shared pre-sigma parameter of the parameter distribution.
    pub rho: f64,
    /// Return-noise scale as a base-10 exponent: `sigma = 10^log10_sigma`.
    pub log10_sigma: f64,
    /// Learning rate.
    pub alpha: f64,
    pub gamma: f64,
    /// Target-network sync period in training steps.
    pub tau: u64,
    pub batch: usize,
    pub buffer: usize,
    pub episodes: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub hidden: Vec<usize>,
    /// Exploration rate for the dqn mode.
    pub epsilon: f64,
    /// Reparameterized theta samples per gradient step.
    pub theta_samples: usize,
    /// Ablation flag: hold one theta sample fixed for a whole episode
    /// instead of resampling every step.
    pub per_episode_theta: bool,
    /// Bandit mode only: true arm means and reward noise scale.
    pub bandit_means: Vec<f64>,
    pub bandit_sigma: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: "chain(10)".into(),
            sparse: false,
            agent: AgentMode::Ge,
            rho: -1.0,
            log10_sigma: -1.0,
            alpha: 1e-3,
            gamma: 0.99,
            tau: 100,
            batch: 32,
            buffer: 10_000,
            episodes: 200,
            seed: 0,
            out: None,
            hidden: vec![16],
            epsilon: 0.1,
            theta_samples: 1,
            per_episode_theta: false,
            bandit_means: vec![0.0, 1.0],
            bandit_sigma: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn sigma(&self) -> f64 {
        10f64.powf(self.log10_sigma)
    }

    /// Parses flat `key = value` text; `#` starts a comment, blank lines
    /// are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(HarnessError::BadConfig {
                    line: i + 1,
                    reason: format!("expected `key = value`, got {line:?}"),
                });
            };
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Sets one key; used both by the file parser and by CLI overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |reason: String| HarnessError::BadValue {
            key: key.to_string(),
            reason,
        };
        match key {
            "env" => self.env = value.to_string(),
            "sparse" => {
                self.sparse = value
                    .parse()
                    .map_err(|_| bad(format!("expected true/false, got {value:?}")))?
            }
            "agent" => {
                self.agent = AgentMode::parse(value)
                    .ok_or_else(|| bad(format!("unknown agent mode {value:?}")))?
            }
            "rho" => self.rho = parse_f64(key, value)?,
            "log10_sigma" => self.log10_sigma = parse_f64(key, value)?,
            "alpha" => self.alpha = parse_f64(key, value)?,
            "gamma" => self.gamma = parse_f64(key, value)?,
            "tau" => self.tau = parse_int(key, value)?,
            "batch" => self.batch = parse_int(key, value)? as usize,
            "buffer" => self.buffer = parse_int(key, value)? as usize,
            "episodes" => self.episodes = parse_int(key, value)? as usize,
            "seed" => self.seed = parse_int(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "hidden" => {
                self.hidden = value
                    .split(',')
                    .map(|w| w.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(format!("expected comma-separated widths, got {value:?}")))?
            }
            "epsilon" => self.epsilon = parse_f64(key, value)?,
            "theta_samples" => self.theta_samples = parse_int(key, value)? as usize,
            "per_episode_theta" => {
                self.per_episode_theta = value
                    .parse()
                    .map_err(|_| bad(format!("expected true/false, got {value:?}")))?
            }
            "bandit_means" => {
                self.bandit_means = value
                    .split(',')
                    .map(|w| w.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(format!("expected comma-separated means, got {value:?}")))?
            }
            "bandit_sigma" => self.bandit_sigma = parse_f64(key, value)?,
            _ => return Err(bad("unknown key".into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| {
            Err(HarnessError::BadValue {
                key: key.to_string(),
                reason,
            })
        };
        if self.agent != AgentMode::Bandit {
            EnvId::parse(&self.env)?;
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", format!("must be in (0, 1], got {}", self.gamma));
        }
        if self.alpha <= 0.0 {
            return bad("alpha", format!("must be positive, got {}", self.alpha));
        }
        if self.tau == 0 {
            return bad("tau", "must be at least 1".into());
        }
        if self.batch == 0 {
            return bad("batch", "must be at least 1".into());
        }
        if self.buffer < self.batch {
            return bad(
                "buffer",
                format!("capacity {} below batch size {}", self.buffer, self.batch),
            );
        }
        if self.episodes == 0 {
            return bad("episodes", "must be at least 1".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden", format!("widths must be nonempty and positive, got {:?}", self.hidden));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon", format!("must be in [0, 1], got {}", self.epsilon));
        }
        if self.theta_samples == 0 {
            return bad("theta_samples", "must be at least 1".into());
        }
        if self.agent == AgentMode::Bandit {
            if self.bandit_means.len() < 2 {
                return bad("bandit_means", "need at least two arms".into());
            }
            if self.bandit_sigma <= 0.0 {
                return bad("bandit_sigma", format!("must be positive, got {}", self.bandit_sigma));
            }
        }
        if self.agent.is_ddpg() {
            let id = EnvId::parse(&self.env)?;
            if id != EnvId::PendulumContinuous {
                return Err(HarnessError::IncompatibleAgent {
                    agent: self.agent.to_string(),
                    env: self.env.clone(),
                    reason: "ddpg requires a continuous action space".into(),
                });
            }
        }
        Ok(())
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value.parse().map_err(|_| HarnessError::BadValue {
        key: key.to_string(),
        reason: format!("expected a number, got {value:?}"),
    })?;
    if !v.is_finite() {
        return Err(HarnessError::BadValue {
            key: key.to_string(),
            reason: format!("must be finite, got {value:?}"),
        });
    }
    Ok(v)
}

fn parse_int(key: &str, value: &str) -> Result<u64> {
    value.parse().map_err(|_| HarnessError::BadValue {
        key: key.to_string(),
        reason: format!("expected a nonnegative integer, got {value:?}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn file_text_round_trip() {
        let text = "
            # chain experiment
            env = chain(32)
            agent = dqn
            epsilon = 0.05   # greedy most of the time
            episodes = 50
            hidden = 32,16
            seed = 9
        ";
        let c = ExperimentConfig::from_text(text).unwrap();
        assert_eq!(c.env, "chain(32)");
        assert_eq!(c.agent, AgentMode::Dqn);
        assert_eq!(c.epsilon, 0.05);
        assert_eq!(c.episodes, 50);
        assert_eq!(c.hidden, vec![32, 16]);
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut c = ExperimentConfig::from_text("seed = 1").unwrap();
        c.set("seed", "2").unwrap();
        assert_eq!(c.seed, 2);
    }

    #[test]
    fn malformed_lines_rejected_with_location() {
        let err = ExperimentConfig::from_text("env chain(5)").unwrap_err();
        assert!(matches!(err, HarnessError::BadConfig { line: 1, .. }));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_text("learning_rate = 0.1").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        for text in [
            "gamma = 1.5",
            "alpha = 0",
            "tau = 0",
            "batch = 0",
            "batch = 64\nbuffer = 32",
            "episodes = 0",
            "epsilon = 2",
            "env = atari",
            "agent = ppo",
            "hidden = 8,0",
        ] {
            assert!(ExperimentConfig::from_text(text).is_err(), "accepted {text:?}");
        }
    }

    #[test]
    fn ddpg_requires_continuous_actions() {
        let err = ExperimentConfig::from_text("agent = ddpg-ge\nenv = cartpole").unwrap_err();
        assert!(matches!(err, HarnessError::IncompatibleAgent { .. }));
        ExperimentConfig::from_text("agent = ddpg-ge\nenv = pendulum_continuous").unwrap();
    }

    #[test]
    fn sigma_is_base_ten_exponent() {
        let c = ExperimentConfig::from_text("log10_sigma = -2").unwrap();
        assert!((c.sigma() - 0.01).abs() < 1e-15);
    }
}
