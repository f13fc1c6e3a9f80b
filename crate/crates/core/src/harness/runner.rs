//! Seeded experiment execution: one agent, one environment, E episodes,
//! one metrics row per episode, optional CSV/summary persistence.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use super::config::{AgentMode, ExperimentConfig};
use super::metrics::{moving_average, plotted_reward, write_metrics_csv, MetricsRow};
use super::{HarnessError, Result};
use crate::agents::{
    BanditPosterior, CriticMode, DdpgAgent, DdpgConfig, GeAgent, GeConfig, ReplayBuffer, TrainMode,
    Transition,
};
use crate::envs::{make_env, Action, ActionSpace, EnvId};
use crate::numerics::{Activation, MlpSpec, OptimizerConfig};
use crate::returns::ReturnHead;

/// Everything a finished run leaves behind in memory. When the config names
/// an output directory, `metrics.csv` and `summary.txt` are also on disk.
#[derive(Debug)]
pub struct RunOutcome {
    pub dir: Option<PathBuf>,
    pub rows: Vec<MetricsRow>,
    /// Final value of the 20-episode moving average of the plotted reward.
    pub final_moving_average: f64,
    /// Bandit mode only: total regret across all pulls.
    pub cumulative_regret: Option<f64>,
    /// Chain runs only: greedy action under the learned means, per state.
    pub chain_greedy: Option<Vec<usize>>,
}

/// Independent rng streams forked from the master seed so that ablations
/// change one source of randomness at a time.
struct SeedStreams {
    env: ChaCha12Rng,
    init: ChaCha12Rng,
    acting: ChaCha12Rng,
    training: ChaCha12Rng,
}

impl SeedStreams {
    fn fork(master: u64) -> Self {
        let stream = |idx: u64| {
            ChaCha12Rng::seed_from_u64(master.wrapping_add(idx.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
        };
        SeedStreams {
            env: stream(1),
            init: stream(2),
            acting: stream(3),
            training: stream(4),
        }
    }
}

/// Runs the configured experiment to completion.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    run_experiment_with(config, None)
}

/// Like [`run_experiment`], but an optional early-stop rule sees each
/// finished episode row; returning `true` ends the run after that episode.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    mut stop: Option<&mut dyn FnMut(&MetricsRow) -> bool>,
) -> Result<RunOutcome> {
    config.validate()?;
    let streams = SeedStreams::fork(config.seed);
    let result = match config.agent {
        AgentMode::Bandit => run_bandit(config, streams, &mut stop),
        AgentMode::DdpgPlain | AgentMode::DdpgNoisy | AgentMode::DdpgGe => {
            run_ddpg(config, streams, &mut stop)
        }
        AgentMode::Ge | AgentMode::NoisyNet | AgentMode::Dqn => {
            run_discrete(config, streams, &mut stop)
        }
    };
    match result {
        Ok(mut outcome) => {
            persist(config, &outcome.rows, None, outcome.chain_greedy.as_deref())?;
            outcome.dir = config.out.clone();
            Ok(outcome)
        }
        Err(RunAbort { rows, error }) => {
            let aborted = if let HarnessError::NonFinite { episode } = &error {
                Some(*episode)
            } else {
                None
            };
            persist(config, &rows, aborted, None)?;
            Err(error)
        }
    }
}

/// A failed run still carries the rows completed so far, which the abort
/// path persists alongside the offending episode.
struct RunAbort {
    rows: Vec<MetricsRow>,
    error: HarnessError,
}

impl RunAbort {
    fn before_start(error: HarnessError) -> Self {
        RunAbort {
            rows: Vec::new(),
            error,
        }
    }
}

fn persist(
    config: &ExperimentConfig,
    rows: &[MetricsRow],
    aborted: Option<usize>,
    chain_greedy: Option<&[usize]>,
) -> Result<()> {
    let Some(dir) = &config.out else {
        return Ok(());
    };
    std::fs::create_dir_all(dir)?;
    write_metrics_csv(&dir.join("metrics.csv"), rows)?;
    let final_ma = final_moving_average(rows);
    let mut summary = format!(
        "env={}\nagent={}\nsparse={}\nseed={}\nepisodes_completed={}\nfinal_moving_average={}\n",
        config.env,
        config.agent,
        config.sparse,
        config.seed,
        rows.len(),
        final_ma,
    );
    if let Some(greedy) = chain_greedy {
        let actions: Vec<&str> = greedy.iter().map(|&a| if a == 0 { "L" } else { "R" }).collect();
        summary.push_str(&format!("chain_greedy={}\n", actions.join("")));
    }
    if let Some(episode) = aborted {
        summary.push_str(&format!("aborted_episode={episode}\n"));
    }
    std::fs::write(dir.join("summary.txt"), summary)?;
    Ok(())
}

fn final_moving_average(rows: &[MetricsRow]) -> f64 {
    let series: Vec<f64> = rows.iter().map(|r| r.plotted_reward).collect();
    moving_average(&series, 20).last().copied().unwrap_or(0.0)
}

fn should_stop(stop: &mut Option<&mut dyn FnMut(&MetricsRow) -> bool>, row: &MetricsRow) -> bool {
    match stop {
        Some(f) => f(row),
        None => false,
    }
}

fn run_discrete(
    config: &ExperimentConfig,
    mut streams: SeedStreams,
    stop: &mut Option<&mut dyn FnMut(&MetricsRow) -> bool>,
) -> std::result::Result<RunOutcome, RunAbort> {
    let env_id = EnvId::parse(&config.env).map_err(|e| RunAbort::before_start(e.into()))?;
    let mut env = make_env(&config.env, config.sparse)
        .map_err(|e| RunAbort::before_start(e.into()))?;
    let spec = env.spec();
    let n_actions = match spec.action_space {
        ActionSpace::Discrete(n) => n,
        ActionSpace::Box { .. } => {
            return Err(RunAbort::before_start(HarnessError::IncompatibleAgent {
                agent: config.agent.to_string(),
                env: config.env.clone(),
                reason: "discrete agents need a discrete action space".into(),
            }))
        }
    };

    let mut widths = vec![spec.obs_dim];
    widths.extend(&config.hidden);
    widths.push(n_actions);
    let mlp = MlpSpec::new(widths, Activation::Tanh)
        .map_err(|e| RunAbort::before_start(crate::agents::AgentsError::from(e).into()))?;
    let head = ReturnHead::gaussian(mlp, config.sigma());
    let mode = match config.agent {
        AgentMode::Ge => TrainMode::Ge,
        AgentMode::NoisyNet => TrainMode::NoisyNet,
        AgentMode::Dqn => TrainMode::Dqn,
        _ => unreachable!(),
    };
    let ge_config = GeConfig {
        mode,
        rho: config.rho,
        per_param_rho: false,
        gamma: config.gamma,
        target_sync_period: config.tau,
        optimizer: OptimizerConfig::adam(config.alpha),
        theta_samples: config.theta_samples,
    };
    let mut agent = GeAgent::new(head, ge_config, &mut streams.init)
        .map_err(|e| RunAbort::before_start(e.into()))?;
    let mut buffer = ReplayBuffer::new(config.buffer);

    let chain_n = match env_id {
        EnvId::Chain(n) => Some(n),
        _ => None,
    };
    let mut rows: Vec<MetricsRow> = Vec::with_capacity(config.episodes);
    for episode in 1..=config.episodes {
        let started = Instant::now();
        let mut state = env.reset(&mut streams.env);
        let mut steps = 0usize;
        let mut raw_return = 0.0;
        let mut sparse_return = 0.0;
        let mut goal_reached = false;
        let mut visited = chain_n.map(|n| {
            let mut v = vec![0u8; n];
            v[1] = 1; // every episode starts in state 2
            v
        });
        let episode_theta = if config.per_episode_theta && config.agent != AgentMode::Dqn {
            Some(
                agent
                    .online
                    .sample_parameters(&mut streams.acting)
                    .map_err(|e| RunAbort {
                        rows: rows.clone(),
                        error: crate::agents::AgentsError::from(e).into(),
                    })?
                    .theta,
            )
        } else {
            None
        };
        loop {
            let abort = |e: HarnessError, rows: &[MetricsRow]| RunAbort {
                rows: rows.to_vec(),
                error: e,
            };
            let action = match (config.agent, &episode_theta) {
                (AgentMode::Dqn, _) => agent
                    .act_epsilon_greedy(&state, config.epsilon, &mut streams.acting)
                    .map_err(|e| abort(e.into(), &rows))?,
                (_, Some(theta)) => crate::returns::greedy_action(&agent.head, theta, &state)
                    .map_err(|e| abort(crate::agents::AgentsError::from(e).into(), &rows))?,
                (_, None) => agent
                    .act_thompson(&state, &mut streams.acting)
                    .map_err(|e| abort(e.into(), &rows))?,
            };
            let r = env
                .step(&Action::Discrete(action))
                .map_err(|e| abort(e.into(), &rows))?;
            steps += 1;
            raw_return += r.info.raw_reward;
            sparse_return += r.reward;
            if r.info.terminated {
                goal_reached = true;
            }
            if let (Some(v), Some(s)) = (visited.as_mut(), r.info.state_index) {
                v[s - 1] = 1;
            }
            buffer.push(Transition {
                state: state.clone(),
                action: Action::Discrete(action),
                reward: r.reward,
                next_state: r.obs.clone(),
                // bootstrap through time-limit truncation, not through
                // natural termination
                done: r.info.terminated,
            });
            if let Some(loss) = agent
                .train_step(&buffer, config.batch, &mut streams.training)
                .map_err(|e| abort(e.into(), &rows))?
            {
                if !loss.is_finite() {
                    return Err(abort(HarnessError::NonFinite { episode }, &rows));
                }
            }
            state = r.obs;
            if r.done {
                break;
            }
        }
        let row = MetricsRow {
            episode,
            steps,
            raw_return,
            sparse_return,
            plotted_reward: plotted_reward(env_id, steps, goal_reached, raw_return),
            max_state: visited
                .as_ref()
                .map(|v| 1 + v.iter().rposition(|&b| b == 1).unwrap_or(0)),
            visit_bitmap: visited,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        rows.push(row);
        if should_stop(stop, rows.last().unwrap()) {
            break;
        }
    }

    let chain_greedy = match chain_n {
        Some(n) => {
            let mut greedy = Vec::with_capacity(n);
            for s in 1..=n {
                let mut obs = vec![0.0; n];
                obs[s - 1] = 1.0;
                greedy.push(agent.greedy_on_mean(&obs).map_err(|e| RunAbort {
                    rows: rows.clone(),
                    error: e.into(),
                })?);
            }
            Some(greedy)
        }
        None => None,
    };
    Ok(RunOutcome {
        dir: None,
        final_moving_average: final_moving_average(&rows),
        cumulative_regret: None,
        chain_greedy,
        rows,
    })
}

fn run_ddpg(
    config: &ExperimentConfig,
    mut streams: SeedStreams,
    stop: &mut Option<&mut dyn FnMut(&MetricsRow) -> bool>,
) -> std::result::Result<RunOutcome, RunAbort> {
    let env_id = EnvId::parse(&config.env).map_err(|e| RunAbort::before_start(e.into()))?;
    let mut env = make_env(&config.env, config.sparse)
        .map_err(|e| RunAbort::before_start(e.into()))?;
    let spec = env.spec();
    let (low, high) = match spec.action_space {
        ActionSpace::Box { low, high, .. } => (low, high),
        ActionSpace::Discrete(_) => {
            return Err(RunAbort::before_start(HarnessError::IncompatibleAgent {
                agent: config.agent.to_string(),
                env: config.env.clone(),
                reason: "ddpg requires a continuous action space".into(),
            }))
        }
    };
    let critic_mode = match config.agent {
        AgentMode::DdpgPlain => CriticMode::Plain,
        AgentMode::DdpgNoisy => CriticMode::Noisy,
        AgentMode::DdpgGe => CriticMode::Ge,
        _ => unreachable!(),
    };
    let ddpg_config = DdpgConfig {
        critic_mode,
        state_dim: spec.obs_dim,
        action_low: low,
        action_high: high,
        actor_hidden: config.hidden.clone(),
        critic_hidden: config.hidden.clone(),
        critic_sigma: config.sigma(),
        rho: config.rho,
        gamma: config.gamma,
        target_sync_period: config.tau,
        polyak: None,
        actor_optimizer: OptimizerConfig::adam(config.alpha),
        critic_optimizer: OptimizerConfig::adam(config.alpha),
        noise_frac: 0.1,
    };
    let mut agent = DdpgAgent::new(ddpg_config, &mut streams.init)
        .map_err(|e| RunAbort::before_start(e.into()))?;
    let mut buffer = ReplayBuffer::new(config.buffer);

    let mut rows: Vec<MetricsRow> = Vec::with_capacity(config.episodes);
    for episode in 1..=config.episodes {
        let started = Instant::now();
        let mut state = env.reset(&mut streams.env);
        let mut steps = 0usize;
        let mut raw_return = 0.0;
        let mut sparse_return = 0.0;
        let mut goal_reached = false;
        loop {
            let abort = |e: HarnessError, rows: &[MetricsRow]| RunAbort {
                rows: rows.to_vec(),
                error: e,
            };
            let action = agent.act(&state, &mut streams.acting);
            let r = env.step(&action).map_err(|e| abort(e.into(), &rows))?;
            steps += 1;
            raw_return += r.info.raw_reward;
            sparse_return += r.reward;
            if r.info.terminated {
                goal_reached = true;
            }
            buffer.push(Transition {
                state: state.clone(),
                action,
                reward: r.reward,
                next_state: r.obs.clone(),
                done: r.info.terminated,
            });
            if let Some(loss) = agent
                .train_step(&buffer, config.batch, &mut streams.training)
                .map_err(|e| abort(e.into(), &rows))?
            {
                if !loss.is_finite() {
                    return Err(abort(HarnessError::NonFinite { episode }, &rows));
                }
            }
            state = r.obs;
            if r.done {
                break;
            }
        }
        rows.push(MetricsRow {
            episode,
            steps,
            raw_return,
            sparse_return,
            plotted_reward: plotted_reward(env_id, steps, goal_reached, raw_return),
            max_state: None,
            visit_bitmap: None,
            wall_ms: started.elapsed().as_millis() as u64,
        });
        if should_stop(stop, rows.last().unwrap()) {
            break;
        }
    }
    Ok(RunOutcome {
        dir: None,
        final_moving_average: final_moving_average(&rows),
        cumulative_regret: None,
        chain_greedy: None,
        rows,
    })
}

fn run_bandit(
    config: &ExperimentConfig,
    mut streams: SeedStreams,
    stop: &mut Option<&mut dyn FnMut(&MetricsRow) -> bool>,
) -> std::result::Result<RunOutcome, RunAbort> {
    let means = &config.bandit_means;
    let best = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut posterior = BanditPosterior::new(means.len(), config.bandit_sigma);
    let mut rows: Vec<MetricsRow> = Vec::with_capacity(config.episodes);
    let mut regret = 0.0;
    for episode in 1..=config.episodes {
        let started = Instant::now();
        let arm = posterior.act(&mut streams.acting).map_err(|e| RunAbort {
            rows: rows.clone(),
            error: e.into(),
        })?;
        let noise: f64 = streams.env.sample(StandardNormal);
        let reward = means[arm] + config.bandit_sigma * noise;
        posterior.update(arm, reward).map_err(|e| RunAbort {
            rows: rows.clone(),
            error: e.into(),
        })?;
        regret += best - means[arm];
        rows.push(MetricsRow {
            episode,
            steps: 1,
            raw_return: reward,
            sparse_return: reward,
            // the regret curve: cumulative regret after this pull
            plotted_reward: regret,
            max_state: None,
            visit_bitmap: None,
            wall_ms: started.elapsed().as_millis() as u64,
        });
        if should_stop(stop, rows.last().unwrap()) {
            break;
        }
    }
    Ok(RunOutcome {
        dir: None,
        final_moving_average: final_moving_average(&rows),
        cumulative_regret: Some(regret),
        chain_greedy: None,
        rows,
    })
}
