//! Seeded, bounded differential evolution (rand/1/bin).
//!
//! The mutation factor is dithered per generation, trial vectors are
//! reflected back into the box, selection keeps the incumbent on exact
//! fitness ties, and the whole trajectory is a pure function of the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeConfig {
    pub population_size: usize,
    pub max_generations: usize,
    /// Mutation-factor interval within [0, 2]; F is drawn uniformly from it
    /// once per generation.
    pub mutation: [f64; 2],
    /// Binomial crossover probability in [0, 1].
    pub crossover_rate: f64,
    /// Terminate once the max-min spread of population losses falls below
    /// this.
    pub convergence_tol: f64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            // 15x the six-dimensional search space
            population_size: 90,
            max_generations: 1000,
            mutation: [0.5, 1.0],
            crossover_rate: 0.7,
            convergence_tol: 1e-10,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(Error::Config(format!(
                "population_size = {} must be at least 4",
                self.population_size
            )));
        }
        if self.max_generations == 0 {
            return Err(Error::Config("max_generations must be at least 1".into()));
        }
        let [lo, hi] = self.mutation;
        if !(0.0..=2.0).contains(&lo) || !(0.0..=2.0).contains(&hi) || lo > hi {
            return Err(Error::Config(format!(
                "mutation interval [{lo}, {hi}] must satisfy 0 <= lo <= hi <= 2"
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::Config(format!(
                "crossover_rate = {} outside [0, 1]",
                self.crossover_rate
            )));
        }
        if !self.convergence_tol.is_finite() || self.convergence_tol <= 0.0 {
            return Err(Error::Config("convergence_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeOutcome {
    /// Best vector seen over the whole run; always within bounds.
    pub best: Vec<f64>,
    pub best_loss: f64,
    /// Completed generations (0 when the initial population already met the
    /// convergence tolerance).
    pub generations: usize,
    pub converged: bool,
    /// Best loss after initialization and after each completed generation;
    /// non-increasing by construction.
    pub best_loss_history: Vec<f64>,
}

/// Minimizes `objective` over the box `bounds`.
///
/// Every candidate ever evaluated lies within bounds. Non-finite objective
/// values are treated as +inf fitness. Identical (seed, config, bounds,
/// objective) reproduce the trajectory bit for bit.
pub fn differential_evolution<F>(
    objective: F,
    bounds: &[(f64, f64)],
    cfg: &DeConfig,
    seed: u64,
) -> Result<DeOutcome>
where
    F: Fn(&[f64]) -> f64,
{
    cfg.validate()?;
    if bounds.is_empty() {
        return Err(Error::EmptyInput("bounds"));
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::Config(format!(
                "bounds[{i}] = [{lo}, {hi}] must be a finite interval with lo < hi"
            )));
        }
    }

    let dim = bounds.len();
    let np = cfg.population_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fitness = |x: &[f64]| {
        let v = objective(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut population: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| lo + rng.random::<f64>() * (hi - lo))
                .collect()
        })
        .collect();
    let mut losses: Vec<f64> = population.iter().map(|x| fitness(x)).collect();

    let mut best_idx = 0;
    for i in 1..np {
        if losses[i] < losses[best_idx] {
            best_idx = i;
        }
    }
    let mut best = population[best_idx].clone();
    let mut best_loss = losses[best_idx];
    let mut history = vec![best_loss];

    let mut generations = 0;
    let mut converged = spread(&losses) < cfg.convergence_tol;

    while !converged && generations < cfg.max_generations {
        let f_scale = cfg.mutation[0] + rng.random::<f64>() * (cfg.mutation[1] - cfg.mutation[0]);

        // Trial generation consumes randomness in fixed index order, so
        // evaluation could run concurrently without changing the result.
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let [r1, r2, r3] = pick_distinct(&mut rng, np, i);
                let j_rand = rng.random_range(0..dim);
                (0..dim)
                    .map(|j| {
                        if rng.random::<f64>() < cfg.crossover_rate || j == j_rand {
                            let mutant = population[r1][j]
                                + f_scale * (population[r2][j] - population[r3][j]);
                            reflect_into(mutant, bounds[j])
                        } else {
                            population[i][j]
                        }
                    })
                    .collect()
            })
            .collect();

        let trial_losses: Vec<f64> = trials.iter().map(|t| fitness(t)).collect();

        // Selection in fixed index order; strict improvement keeps the
        // incumbent on ties.
        for (i, (trial, &trial_loss)) in trials.into_iter().zip(trial_losses.iter()).enumerate() {
            if trial_loss < losses[i] {
                population[i] = trial;
                losses[i] = trial_loss;
                if trial_loss < best_loss {
                    best = population[i].clone();
                    best_loss = trial_loss;
                }
            }
        }

        generations += 1;
        history.push(best_loss);
        converged = spread(&losses) < cfg.convergence_tol;
    }

    Ok(DeOutcome {
        best,
        best_loss,
        generations,
        converged,
        best_loss_history: history,
    })
}

fn spread(losses: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in losses {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo.is_finite() && hi.is_finite() {
        hi - lo
    } else {
        f64::INFINITY
    }
}

/// Three distinct population indices, all different from `target`.
fn pick_distinct(rng: &mut ChaCha8Rng, np: usize, target: usize) -> [usize; 3] {
    let mut out = [target; 3];
    for k in 0..3 {
        loop {
            let r = rng.random_range(0..np);
            if r != target && !out[..k].contains(&r) {
                out[k] = r;
                break;
            }
        }
    }
    out
}

/// Reflects an out-of-box proposal back inside; clamps if the overshoot
/// exceeds the interval width.
fn reflect_into(v: f64, (lo, hi): (f64, f64)) -> f64 {
    let reflected = if v < lo {
        lo + (lo - v)
    } else if v > hi {
        hi - (v - hi)
    } else {
        return v;
    };
    reflected.clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn sphere_reaches_global_minimum() {
        let bounds = vec![(-5.0, 5.0); 3];
        let cfg = DeConfig {
            max_generations: 200,
            ..DeConfig::default()
        };
        let out = differential_evolution(sphere, &bounds, &cfg, 42).unwrap();
        assert!(out.best_loss < 1e-6, "best loss {}", out.best_loss);
    }

    #[test]
    fn identical_seeds_identical_outcomes() {
        let bounds = vec![(-5.0, 5.0); 4];
        let cfg = DeConfig::default();
        let a = differential_evolution(sphere, &bounds, &cfg, 7).unwrap();
        let b = differential_evolution(sphere, &bounds, &cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = differential_evolution(sphere, &bounds, &cfg, 8).unwrap();
        assert_ne!(a.best, c.best);
    }

    #[test]
    fn constant_objective_converges_in_bounds() {
        let bounds = vec![(2.0, 3.0), (-1.0, 0.0)];
        let out = differential_evolution(|_| 1.5, &bounds, &DeConfig::default(), 1).unwrap();
        assert!(out.converged);
        assert_eq!(out.best_loss, 1.5);
        assert!(out.best[0] >= 2.0 && out.best[0] <= 3.0);
        assert!(out.best[1] >= -1.0 && out.best[1] <= 0.0);
    }

    #[test]
    fn every_candidate_stays_in_bounds() {
        let bounds = vec![(-1.0, 2.0), (10.0, 11.0)];
        let violations = Cell::new(0usize);
        let objective = |x: &[f64]| {
            for (v, &(lo, hi)) in x.iter().zip(&bounds) {
                if *v < lo || *v > hi {
                    violations.set(violations.get() + 1);
                }
            }
            sphere(x)
        };
        let cfg = DeConfig {
            max_generations: 60,
            ..DeConfig::default()
        };
        differential_evolution(objective, &bounds, &cfg, 3).unwrap();
        assert_eq!(violations.get(), 0);
    }

    #[test]
    fn best_loss_history_is_monotone() {
        let bounds = vec![(-5.0, 5.0); 5];
        let cfg = DeConfig {
            max_generations: 100,
            ..DeConfig::default()
        };
        let out = differential_evolution(sphere, &bounds, &cfg, 11).unwrap();
        for pair in out.best_loss_history.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }

    #[test]
    fn non_finite_losses_do_not_crash() {
        let bounds = vec![(-1.0, 1.0); 2];
        let objective = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::NAN
            } else {
                sphere(x)
            }
        };
        let cfg = DeConfig {
            max_generations: 100,
            ..DeConfig::default()
        };
        let out = differential_evolution(objective, &bounds, &cfg, 5).unwrap();
        assert!(out.best_loss.is_finite());
        assert!(out.best[0] >= 0.0);
    }

    #[test]
    fn rejects_invalid_bounds() {
        assert!(differential_evolution(sphere, &[], &DeConfig::default(), 0).is_err());
        assert!(differential_evolution(sphere, &[(1.0, 1.0)], &DeConfig::default(), 0).is_err());
        assert!(differential_evolution(sphere, &[(2.0, -2.0)], &DeConfig::default(), 0).is_err());
    }

    #[test]
    fn reflection_folds_back_into_interval() {
        assert_eq!(reflect_into(-1.5, (0.0, 4.0)), 1.5);
        assert_eq!(reflect_into(4.5, (0.0, 4.0)), 3.5);
        assert_eq!(reflect_into(2.0, (0.0, 4.0)), 2.0);
        // overshoot wider than the box clamps
        assert_eq!(reflect_into(-9.0, (0.0, 4.0)), 4.0);
    }
}
