//! Exact tabular solvers used to verify the learners: discounted value
//! iteration on an explicit transition table, and finite-horizon backward
//! induction specialized to the chain.

use super::{AgentsError, Result};
use crate::envs::ChainMdp;

/// Explicit finite MDP. `transitions[s][a]` lists `(probability, next_state,
/// reward)` triples; probabilities per `(s, a)` must sum to one.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub transitions: Vec<Vec<Vec<(f64, usize, f64)>>>,
}

impl TabularMdp {
    /// The chain as an infinite-horizon discounted MDP, states 0-indexed
    /// (tabular state `s` is chain state `s + 1`).
    pub fn chain(n: usize) -> Self {
        use crate::envs::{chain_next_state, chain_reward};
        let transitions = (1..=n)
            .map(|s| {
                (0..2)
                    .map(|a| {
                        let next = chain_next_state(n, s, a);
                        vec![(1.0, next - 1, chain_reward(n, next))]
                    })
                    .collect()
            })
            .collect();
        TabularMdp {
            n_states: n,
            n_actions: 2,
            transitions,
        }
    }
}

/// Optimal Q-table plus the sup-norm update deltas, which contract at
/// rate gamma and certify convergence.
#[derive(Debug, Clone)]
pub struct ValueIterationResult {
    pub q: Vec<Vec<f64>>,
    pub deltas: Vec<f64>,
}

impl ValueIterationResult {
    pub fn value(&self, state: usize) -> f64 {
        self.q[state].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy(&self, state: usize) -> usize {
        crate::returns::argmax(&self.q[state])
    }
}

/// Synchronous value iteration to sup-norm tolerance `tol`.
pub fn value_iteration(mdp: &TabularMdp, gamma: f64, tol: f64) -> Result<ValueIterationResult> {
    if !(0.0..1.0).contains(&gamma) || gamma == 0.0 {
        return Err(AgentsError::OracleInvalidGamma(gamma));
    }
    if tol <= 0.0 {
        return Err(AgentsError::OracleInvalidTolerance(tol));
    }
    let mut q = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
    let mut deltas = Vec::new();
    loop {
        let v: Vec<f64> = q
            .iter()
            .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut delta: f64 = 0.0;
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let backup: f64 = mdp.transitions[s][a]
                    .iter()
                    .map(|&(p, s2, r)| p * (r + gamma * v[s2]))
                    .sum();
                delta = delta.max((backup - q[s][a]).abs());
                q[s][a] = backup;
            }
        }
        deltas.push(delta);
        if delta < tol {
            return Ok(ValueIterationResult { q, deltas });
        }
    }
}

/// Finite-horizon solution of the chain by backward induction.
/// `q[t][s][a]` is the optimal return-to-go taking `a` in chain state
/// `s + 1` with `t` steps already elapsed; the horizon is `n + 9`.
#[derive(Debug, Clone)]
pub struct ChainPlan {
    pub n: usize,
    pub horizon: usize,
    pub q: Vec<Vec<[f64; 2]>>,
}

impl ChainPlan {
    pub fn value(&self, t: usize, state_one_based: usize) -> f64 {
        let row = &self.q[t][state_one_based - 1];
        row[0].max(row[1])
    }

    /// Undiscounted optimal return of a full episode from the start state.
    pub fn optimal_return(&self) -> f64 {
        self.value(0, 2)
    }
}

pub fn chain_backward_induction(n: usize) -> ChainPlan {
    use crate::envs::{chain_next_state, chain_reward};
    let horizon = ChainMdp::new(n).map(|e| e.horizon()).unwrap_or(n + 9);
    let mut q = vec![vec![[0.0f64; 2]; n]; horizon + 1];
    for t in (0..horizon).rev() {
        for s in 1..=n {
            for a in 0..2 {
                let next = chain_next_state(n, s, a);
                let v_next = q[t + 1][next - 1][0].max(q[t + 1][next - 1][1]);
                q[t][s - 1][a] = chain_reward(n, next) + v_next;
            }
        }
    }
    ChainPlan { n, horizon, q }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_ten_optimal_return_is_twelve() {
        let plan = chain_backward_induction(10);
        assert_eq!(plan.optimal_return(), 12.0);
        // always-left from the start yields one small reward per step
        let horizon = plan.horizon as f64;
        assert!((horizon * 0.001 - 0.019).abs() < 1e-12);
    }

    #[test]
    fn chain_optimal_first_action_is_right() {
        for n in [4, 8, 10, 32] {
            let plan = chain_backward_induction(n);
            let row = plan.q[0][1];
            assert!(row[1] > row[0], "n={n}: right must dominate at the start, got {row:?}");
        }
    }

    #[test]
    fn backward_induction_matches_simulated_greedy_rollout() {
        use crate::envs::{chain_next_state, chain_reward};
        let n = 10;
        let plan = chain_backward_induction(n);
        let mut s = 2;
        let mut total = 0.0;
        for t in 0..plan.horizon {
            let row = plan.q[t][s - 1];
            let a = if row[1] >= row[0] { 1 } else { 0 };
            let next = chain_next_state(n, s, a);
            total += chain_reward(n, next);
            s = next;
        }
        assert_eq!(total, plan.optimal_return());
    }

    #[test]
    fn value_iteration_matches_chain_closed_form() {
        // Right-forever from interior s reaches s_n in n - s steps; the
        // landing step and every absorbing step pay 1, so
        // V*(s) = gamma^(n - s - 1) / (1 - gamma).
        let n = 8;
        let gamma = 0.9;
        let res = value_iteration(&TabularMdp::chain(n), gamma, 1e-12).unwrap();
        for s in 2..n {
            let expected = gamma.powi((n - s - 1) as i32) / (1.0 - gamma);
            assert!(
                (res.value(s - 1) - expected).abs() < 1e-9,
                "V({s}) = {} vs {expected}",
                res.value(s - 1)
            );
            assert_eq!(res.greedy(s - 1), 1);
        }
        // absorbing right end collects 1 forever
        assert!((res.value(n - 1) - 1.0 / (1.0 - gamma)).abs() < 1e-9);
    }

    #[test]
    fn value_iteration_deltas_contract_at_rate_gamma() {
        let gamma = 0.9;
        let res = value_iteration(&TabularMdp::chain(10), gamma, 1e-10).unwrap();
        // skip the first few sweeps where rewards are still propagating
        for w in res.deltas[3..].windows(2) {
            if w[0] > 1e-13 {
                assert!(w[1] <= gamma * w[0] + 1e-12, "deltas {w:?} violate contraction");
            }
        }
    }

    #[test]
    fn value_iteration_two_state_hand_solution() {
        // Two states, one action: state 0 pays 1 and goes to 1, state 1
        // pays 0 and stays. V(0) = 1, V(1) = 0 for any gamma.
        let mdp = TabularMdp {
            n_states: 2,
            n_actions: 1,
            transitions: vec![vec![vec![(1.0, 1, 1.0)]], vec![vec![(1.0, 1, 0.0)]]],
        };
        let res = value_iteration(&mdp, 0.5, 1e-12).unwrap();
        assert!((res.value(0) - 1.0).abs() < 1e-12);
        assert!(res.value(1).abs() < 1e-12);
    }

    #[test]
    fn invalid_arguments_rejected() {
        let mdp = TabularMdp::chain(4);
        assert!(matches!(
            value_iteration(&mdp, 1.0, 1e-6),
            Err(AgentsError::OracleInvalidGamma(_))
        ));
        assert!(matches!(
            value_iteration(&mdp, 0.0, 1e-6),
            Err(AgentsError::OracleInvalidGamma(_))
        ));
        assert!(matches!(
            value_iteration(&mdp, 0.9, 0.0),
            Err(AgentsError::OracleInvalidTolerance(_))
        ));
    }
}
