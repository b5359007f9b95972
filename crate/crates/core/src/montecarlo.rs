//! Per-comment stochastic simulation of the reply process under moderation.
//!
//! Each replication draws every organic comment individually: it replies
//! to the post with probability `1 - alpha`, otherwise to a uniformly
//! chosen member of the previous step's post-control pool, and is
//! aggressive with the probability matching its parent type. Only the
//! aggressive count of a pool matters for a uniform parent draw, so pools
//! are tracked as `(aggressive, size)`.
//!
//! Replication `r` runs on ChaCha8 stream `r` of the configured seed, so
//! results do not depend on thread scheduling.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, invalid, Result};
use crate::fmt::fixed6;
use crate::meanfield::{ControlPolicy, ModelParams, Trajectory, TrajectoryPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub horizon: usize,
    pub n_per_step: u64,
    pub x0: f64,
    pub replications: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be positive"));
        }
        if self.n_per_step == 0 {
            return Err(invalid("n_per_step", "must be positive"));
        }
        if self.replications == 0 {
            return Err(invalid("replications", "must be positive"));
        }
        check_probability("x0", self.x0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStep {
    pub step: usize,
    pub mean_x_raw: f64,
    /// Sample standard deviation across replications (0 for one replication).
    pub std_x_raw: f64,
    pub mean_x_pool: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleTrajectory {
    pub steps: Vec<EnsembleStep>,
    pub replications: Vec<Trajectory>,
}

impl EnsembleTrajectory {
    /// Aggregates replications in index order.
    pub fn from_replications(replications: Vec<Trajectory>) -> Self {
        let r = replications.len();
        let horizon = replications.first().map_or(0, Trajectory::len);
        let steps = (0..horizon)
            .map(|t| {
                let raw: Vec<f64> = replications.iter().map(|tr| tr.points[t].x_raw).collect();
                let mean = raw.iter().sum::<f64>() / r as f64;
                let var = if r > 1 {
                    raw.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (r - 1) as f64
                } else {
                    0.0
                };
                EnsembleStep {
                    step: t + 1,
                    mean_x_raw: mean,
                    std_x_raw: var.sqrt(),
                    mean_x_pool: replications
                        .iter()
                        .map(|tr| tr.points[t].x_pool)
                        .sum::<f64>()
                        / r as f64,
                }
            })
            .collect();
        Self {
            steps,
            replications,
        }
    }

    /// Standard error of `mean_x_raw` at each step.
    pub fn std_errors(&self) -> Vec<f64> {
        let r = self.replications.len().max(1) as f64;
        self.steps.iter().map(|s| s.std_x_raw / r.sqrt()).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "mean_x_raw", "std_x_raw", "mean_x_pool"])?;
        for s in &self.steps {
            w.write_record([
                s.step.to_string(),
                fixed6(s.mean_x_raw),
                fixed6(s.std_x_raw),
                fixed6(s.mean_x_pool),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<EnsembleStep>> {
        let mut r = csv::Reader::from_reader(input);
        Ok(r.deserialize()
            .collect::<std::result::Result<Vec<EnsembleStep>, _>>()?)
    }
}

/// Post-control pool counts: deletions first, then injections.
fn control_pool(aggressive: u64, policy: &ControlPolicy) -> (u64, u64) {
    let deleted = policy.delete_per_step.min(aggressive);
    let size = policy.n_per_step - deleted + policy.add_per_step;
    (aggressive - deleted, size)
}

/// One replication on its own random stream.
pub fn simulate_replication(
    p: &ModelParams,
    policy: &ControlPolicy,
    cfg: &SimConfig,
    index: u64,
) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    run(p, policy, cfg, &mut rng)
}

fn run<R: Rng>(
    p: &ModelParams,
    policy: &ControlPolicy,
    cfg: &SimConfig,
    rng: &mut R,
) -> Trajectory {
    let n = cfg.n_per_step;
    let initial = (0..n).filter(|_| rng.gen::<f64>() < cfg.x0).count() as u64;
    let (mut pool_aggr, mut pool_size) = control_pool(initial, policy);

    let mut points = Vec::with_capacity(cfg.horizon);
    for t in 1..=cfg.horizon {
        let pool_frac = if pool_size == 0 {
            0.0
        } else {
            pool_aggr as f64 / pool_size as f64
        };
        let mut aggressive = 0u64;
        for _ in 0..n {
            // three draws per comment regardless of branch keep streams aligned
            let reply: f64 = rng.gen();
            let parent: f64 = rng.gen();
            let u: f64 = rng.gen();
            let prob = if reply < p.alpha {
                // uniform index into the pool lands on an aggressive member
                if ((parent * pool_size as f64) as u64) < pool_aggr {
                    p.p_reply_aggr
                } else {
                    p.p_reply_nonaggr
                }
            } else {
                p.p_reply_post
            };
            if u < prob {
                aggressive += 1;
            }
        }
        points.push(TrajectoryPoint {
            step: t,
            x_raw: aggressive as f64 / n as f64,
            x_pool: pool_frac,
        });
        (pool_aggr, pool_size) = control_pool(aggressive, policy);
    }
    Trajectory { points }
}

pub fn simulate(
    p: &ModelParams,
    policy: &ControlPolicy,
    cfg: &SimConfig,
) -> Result<EnsembleTrajectory> {
    p.validate()?;
    policy.validate()?;
    cfg.validate()?;
    if policy.n_per_step != cfg.n_per_step {
        return Err(invalid(
            "n_per_step",
            format!(
                "policy has {} but simulation has {}",
                policy.n_per_step, cfg.n_per_step
            ),
        ));
    }
    let replications: Vec<Trajectory> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| simulate_replication(p, policy, cfg, r))
        .collect();
    Ok(EnsembleTrajectory::from_replications(replications))
}

/// Per-step ensemble means as a single trajectory.
pub fn summarize(e: &EnsembleTrajectory) -> Trajectory {
    Trajectory {
        points: e
            .steps
            .iter()
            .map(|s| TrajectoryPoint {
                step: s.step,
                x_raw: s.mean_x_raw,
                x_pool: s.mean_x_pool,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::{equilibrium, floor};

    fn p_opp() -> ModelParams {
        ModelParams::new(0.5, 0.168, 0.425, 0.100).unwrap()
    }

    fn cfg(horizon: usize, replications: usize, seed: u64) -> SimConfig {
        SimConfig {
            horizon,
            n_per_step: 750,
            x0: 0.5,
            replications,
            seed,
        }
    }

    #[test]
    fn zero_probabilities_give_zero_paths() {
        let p = ModelParams::new(0.5, 0.0, 0.0, 0.0).unwrap();
        let e = simulate(&p, &ControlPolicy::uncontrolled(750), &cfg(10, 5, 1)).unwrap();
        for tr in &e.replications {
            assert!(tr.points.iter().all(|q| q.x_raw == 0.0));
            assert!(tr.points[1..].iter().all(|q| q.x_pool == 0.0));
        }
    }

    #[test]
    fn full_deletion_empties_pool_and_hits_floor() {
        let p = p_opp();
        let e = simulate(&p, &ControlPolicy::hard(750, 750), &cfg(30, 50, 2)).unwrap();
        assert!(e
            .replications
            .iter()
            .flat_map(|t| &t.points)
            .all(|q| q.x_pool == 0.0));
        let last = e.steps.last().unwrap().mean_x_raw;
        assert!((last - floor(&p)).abs() <= 0.005, "{last}");
    }

    #[test]
    fn uncontrolled_tail_mean_matches_mean_field() {
        let e = simulate(
            &p_opp(),
            &ControlPolicy::uncontrolled(750),
            &cfg(30, 200, 42),
        )
        .unwrap();
        let tail: Vec<f64> = e.steps[9..].iter().map(|s| s.mean_x_raw).collect();
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!((0.155..=0.165).contains(&mean), "{mean}");
        let terminal = summarize(&e).last_x_raw().unwrap();
        let x_star = equilibrium(&p_opp()).unwrap().x_star;
        assert!((terminal - x_star).abs() <= 0.005, "{terminal}");
    }

    #[test]
    fn summarize_small_ensembles() {
        let t = |v: f64| Trajectory {
            points: (1..=3)
                .map(|s| TrajectoryPoint {
                    step: s,
                    x_raw: v,
                    x_pool: v,
                })
                .collect(),
        };
        let single = EnsembleTrajectory::from_replications(vec![t(0.3)]);
        assert_eq!(summarize(&single), t(0.3));
        assert!(single.steps.iter().all(|s| s.std_x_raw == 0.0));
        let pair = EnsembleTrajectory::from_replications(vec![t(0.2), t(0.4)]);
        assert!(summarize(&pair)
            .points
            .iter()
            .all(|q| (q.x_raw - 0.3).abs() < 1e-15));
    }

    #[test]
    fn bit_identical_for_fixed_seed() {
        let policy = ControlPolicy {
            n_per_step: 750,
            add_per_step: 30,
            delete_per_step: 20,
        };
        let a = simulate(&p_opp(), &policy, &cfg(15, 16, 9)).unwrap();
        let b = simulate(&p_opp(), &policy, &cfg(15, 16, 9)).unwrap();
        assert_eq!(a, b);
        let c = simulate(&p_opp(), &policy, &cfg(15, 16, 10)).unwrap();
        assert_ne!(a, c);
        // replications are distinct streams
        assert_ne!(a.replications[0], a.replications[1]);
    }

    #[test]
    fn pool_conservation() {
        let policy = ControlPolicy {
            n_per_step: 100,
            add_per_step: 7,
            delete_per_step: 12,
        };
        for aggressive in [0, 5, 12, 60, 100] {
            let (aggr, size) = control_pool(aggressive, &policy);
            let deleted = aggressive.min(12);
            assert_eq!(size, 100 - deleted + 7);
            assert_eq!(aggr, aggressive - deleted);
        }
    }

    #[test]
    fn rejects_mismatched_sizes() {
        assert!(simulate(&p_opp(), &ControlPolicy::uncontrolled(700), &cfg(5, 2, 1)).is_err());
        let mut bad = cfg(5, 2, 1);
        bad.replications = 0;
        assert!(simulate(&p_opp(), &ControlPolicy::uncontrolled(750), &bad).is_err());
    }

    #[test]
    fn ensemble_csv_layout() {
        let e = simulate(&p_opp(), &ControlPolicy::soft(750, 75), &cfg(3, 4, 1)).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("step,mean_x_raw,std_x_raw,mean_x_pool\n1,0."));
        let back = EnsembleTrajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        assert!((back[2].mean_x_raw - e.steps[2].mean_x_raw).abs() <= 5e-7);
    }
}
