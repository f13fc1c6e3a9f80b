//! Exact Thompson sampling for the Gaussian bandit with known noise scale.
//! Under a flat prior the posterior over an arm's mean after `n` pulls with
//! sample mean `m` is `Normal(m, sigma^2 / n)`, so sampling one value per
//! arm and playing the argmax is exact posterior sampling.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{AgentsError, Result};
use crate::returns::argmax;

#[derive(Debug, Clone)]
pub struct BanditPosterior {
    sigma: f64,
    counts: Vec<u64>,
    means: Vec<f64>,
}

impl BanditPosterior {
    pub fn new(n_arms: usize, sigma: f64) -> Self {
        assert!(n_arms > 0, "need at least one arm");
        assert!(sigma > 0.0, "noise scale must be positive");
        BanditPosterior {
            sigma,
            counts: vec![0; n_arms],
            means: vec![0.0; n_arms],
        }
    }

    pub fn n_arms(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, arm: usize) -> u64 {
        self.counts[arm]
    }

    fn check_arm(&self, arm: usize) -> Result<()> {
        if arm >= self.counts.len() {
            return Err(AgentsError::BanditArmOutOfRange {
                got: arm,
                arms: self.counts.len(),
            });
        }
        Ok(())
    }

    /// Incorporates one observed reward via a running mean.
    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        self.check_arm(arm)?;
        self.counts[arm] += 1;
        let n = self.counts[arm] as f64;
        self.means[arm] += (reward - self.means[arm]) / n;
        Ok(())
    }

    /// Posterior `(mean, variance)` for an arm's latent value.
    pub fn posterior_params(&self, arm: usize) -> Result<(f64, f64)> {
        self.check_arm(arm)?;
        if self.counts[arm] == 0 {
            return Err(AgentsError::BanditUninitialized(arm));
        }
        let n = self.counts[arm] as f64;
        Ok((self.means[arm], self.sigma * self.sigma / n))
    }

    /// One Thompson-sampling action: the lowest-index unpulled arm if any
    /// remain (round-robin initialization), otherwise the argmax over one
    /// posterior draw per arm.
    pub fn act<R: Rng>(&self, rng: &mut R) -> Result<usize> {
        if let Some(arm) = self.counts.iter().position(|&c| c == 0) {
            return Ok(arm);
        }
        let draws: Vec<f64> = (0..self.n_arms())
            .map(|a| {
                let (mean, var) = self.posterior_params(a)?;
                let eps: f64 = rng.sample(StandardNormal);
                Ok(mean + var.sqrt() * eps)
            })
            .collect::<Result<_>>()?;
        Ok(argmax(&draws))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn posterior_is_sample_mean_and_shrinking_variance() {
        let mut b = BanditPosterior::new(2, 1.0);
        for &x in &[1.0, 2.0, 3.0, 2.0] {
            b.update(0, x).unwrap();
        }
        let (m, v) = b.posterior_params(0).unwrap();
        assert!((m - 2.0).abs() < 1e-12);
        assert!((v - 0.25).abs() < 1e-12);
        assert!(matches!(
            b.posterior_params(1),
            Err(AgentsError::BanditUninitialized(1))
        ));
    }

    #[test]
    fn posterior_matches_grid_integration_of_the_likelihood() {
        // Flat prior: posterior density is proportional to the product of
        // the Gaussian likelihoods. Integrate moments numerically and
        // compare against the closed form Normal(mean(x), sigma^2 / n).
        let sigma = 0.7;
        let data = [0.3, -0.5, 1.1, 0.2, 0.6];
        let mut b = BanditPosterior::new(1, sigma);
        for &x in &data {
            b.update(0, x).unwrap();
        }
        let (m_closed, v_closed) = b.posterior_params(0).unwrap();

        let log_lik = |mu: f64| -> f64 {
            data.iter().map(|&x| -(x - mu).powi(2) / (2.0 * sigma * sigma)).sum()
        };
        let lo = -5.0;
        let hi = 5.0;
        let steps = 200_000;
        let dx = (hi - lo) / steps as f64;
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for i in 0..steps {
            let mu = lo + (i as f64 + 0.5) * dx;
            let w = log_lik(mu).exp();
            z += w;
            m1 += w * mu;
            m2 += w * mu * mu;
        }
        let mean = m1 / z;
        let var = m2 / z - mean * mean;
        assert!((mean - m_closed).abs() < 1e-6, "grid mean {mean} vs {m_closed}");
        assert!((var - v_closed).abs() < 1e-6, "grid var {var} vs {v_closed}");
    }

    #[test]
    fn unpulled_arms_are_played_first_in_order() {
        let mut b = BanditPosterior::new(3, 1.0);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        for expected in 0..3 {
            let a = b.act(&mut rng).unwrap();
            assert_eq!(a, expected);
            b.update(a, 0.0).unwrap();
        }
    }

    #[test]
    fn thompson_concentrates_on_the_better_arm() {
        let mut b = BanditPosterior::new(2, 1.0);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        // arm 1 is clearly better after plenty of evidence
        for _ in 0..50 {
            b.update(0, 0.0).unwrap();
            b.update(1, 1.0).unwrap();
        }
        let n = 2_000;
        let mut wins = 0;
        for _ in 0..n {
            if b.act(&mut rng).unwrap() == 1 {
                wins += 1;
            }
        }
        // separation is 1.0 with posterior sd ~0.14 each; arm 1 should win
        // almost every draw
        assert!(wins as f64 / n as f64 > 0.99, "arm 1 won only {wins}/{n}");
    }

    #[test]
    fn matched_arms_are_picked_evenly() {
        let mut b = BanditPosterior::new(2, 1.0);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..10 {
            b.update(0, 0.5).unwrap();
            b.update(1, 0.5).unwrap();
        }
        let n = 10_000;
        let mut first = 0;
        for _ in 0..n {
            if b.act(&mut rng).unwrap() == 0 {
                first += 1;
            }
        }
        let tol = 3.0 * 0.5 * (n as f64).sqrt();
        assert!((first as f64 - 5000.0).abs() < tol, "{first}/{n}");
    }

    #[test]
    fn out_of_range_arm_rejected() {
        let mut b = BanditPosterior::new(2, 1.0);
        assert!(matches!(
            b.update(2, 0.0),
            Err(AgentsError::BanditArmOutOfRange { got: 2, arms: 2 })
        ));
    }
}
