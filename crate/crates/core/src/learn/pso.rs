//! Global-best particle swarm optimization over a box, maximizing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::tracker::{FAST_THRESHOLD_MAX, PATCH_SIZE_MAX, PATCH_SIZE_MIN, RANSAC_THRESHOLD_MAX};
use crate::frontend::FrontendParams;
use crate::policy::action::map_action;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            particles: 24,
            iterations: 60,
            inertia: 0.7298,
            cognitive: 1.49618,
            social: 1.49618,
            lower: vec![0.0, PATCH_SIZE_MIN as f64, 0.0],
            upper: vec![
                f64::from(FAST_THRESHOLD_MAX),
                PATCH_SIZE_MAX as f64,
                RANSAC_THRESHOLD_MAX,
            ],
            seed: 0,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::InvalidConfig("PSO needs at least 2 particles".into()));
        }
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::InvalidConfig("PSO bounds must be nonempty and of equal length".into()));
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u))
        {
            return Err(Error::InvalidConfig("PSO bounds need lower < upper".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoResult {
    pub best_position: Vec<f64>,
    pub best_score: f64,
    /// Global best after initialization and after every iteration.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Swarm state, exposed so invariants can be checked between iterations.
#[derive(Debug, Clone)]
pub struct Swarm {
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub personal_best: Vec<Vec<f64>>,
    pub personal_score: Vec<f64>,
    pub best_position: Vec<f64>,
    pub best_score: f64,
    rng: ChaCha8Rng,
    evaluations: usize,
}

fn evaluate<F>(objective: &F, positions: &[Vec<f64>]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    positions
        .par_iter()
        .map(|p| {
            let s = objective(p);
            if s.is_nan() {
                f64::NEG_INFINITY
            } else {
                s
            }
        })
        .collect()
}

impl Swarm {
    /// Random positions in the box (or `init`), velocities uniform in half the box.
    pub fn new<F>(objective: &F, config: &PsoConfig, init: Option<Vec<Vec<f64>>>) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.dim();
        let positions: Vec<Vec<f64>> = match init {
            Some(p) => {
                if p.len() != config.particles || p.iter().any(|x| x.len() != d) {
                    return Err(Error::InvalidConfig("initial positions do not match the swarm".into()));
                }
                p.into_iter()
                    .map(|x| {
                        x.iter()
                            .enumerate()
                            .map(|(k, v)| v.clamp(config.lower[k], config.upper[k]))
                            .collect()
                    })
                    .collect()
            }
            None => (0..config.particles)
                .map(|_| (0..d).map(|k| rng.gen_range(config.lower[k]..=config.upper[k])).collect())
                .collect(),
        };
        let velocities = (0..config.particles)
            .map(|_| {
                (0..d)
                    .map(|k| {
                        let h = 0.5 * (config.upper[k] - config.lower[k]);
                        rng.gen_range(-h..=h)
                    })
                    .collect()
            })
            .collect();
        let scores = evaluate(objective, &positions);
        let mut best = 0;
        for i in 1..scores.len() {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        Ok(Self {
            best_position: positions[best].clone(),
            best_score: scores[best],
            personal_best: positions.clone(),
            personal_score: scores,
            positions,
            velocities,
            rng,
            evaluations: config.particles,
        })
    }

    /// Moves every particle once and updates the bests.
    pub fn iterate<F>(&mut self, objective: &F, config: &PsoConfig)
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let d = config.dim();
        for i in 0..self.positions.len() {
            for k in 0..d {
                let (lo, hi) = (config.lower[k], config.upper[k]);
                let vmax = 0.5 * (hi - lo);
                let r1: f64 = self.rng.gen();
                let r2: f64 = self.rng.gen();
                let x = self.positions[i][k];
                let v = config.inertia * self.velocities[i][k]
                    + config.cognitive * r1 * (self.personal_best[i][k] - x)
                    + config.social * r2 * (self.best_position[k] - x);
                let v = v.clamp(-vmax, vmax);
                let nx = x + v;
                if nx < lo || nx > hi {
                    self.positions[i][k] = nx.clamp(lo, hi);
                    self.velocities[i][k] = 0.0;
                } else {
                    self.positions[i][k] = nx;
                    self.velocities[i][k] = v;
                }
            }
        }
        let scores = evaluate(objective, &self.positions);
        self.evaluations += scores.len();
        for (i, s) in scores.into_iter().enumerate() {
            if s > self.personal_score[i] {
                self.personal_score[i] = s;
                self.personal_best[i] = self.positions[i].clone();
            }
            if s > self.best_score {
                self.best_score = s;
                self.best_position = self.positions[i].clone();
            }
        }
    }
}

/// Maximizes `objective` over the configured box.
pub fn pso_optimize<F>(objective: F, config: &PsoConfig) -> Result<PsoResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pso_optimize_from(objective, config, None)
}

/// As `pso_optimize`, optionally starting from given particle positions.
pub fn pso_optimize_from<F>(objective: F, config: &PsoConfig, init: Option<Vec<Vec<f64>>>) -> Result<PsoResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut swarm = Swarm::new(&objective, config, init)?;
    let mut history = vec![swarm.best_score];
    for _ in 0..config.iterations {
        swarm.iterate(&objective, config);
        history.push(swarm.best_score);
    }
    Ok(PsoResult {
        best_position: swarm.best_position,
        best_score: swarm.best_score,
        history,
        evaluations: swarm.evaluations,
    })
}

/// Outcome of optimizing a shifted sphere function.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereCheck {
    pub seed: u64,
    /// Euclidean distance from the best position to the optimum.
    pub position_error: f64,
    /// Gap between the optimal value 0 and the best score found.
    pub value_gap: f64,
    pub iterations: usize,
}

impl SphereCheck {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.position_error <= tolerance
    }
}

/// Maximizes `-|x - c|^2` on `[-5, 5]^dim` with `c` off-center.
pub fn sphere_self_test(seed: u64, dim: usize, iterations: usize) -> Result<SphereCheck> {
    let target: Vec<f64> = (0..dim).map(|k| 1.5 - 0.75 * k as f64).collect();
    let objective = |x: &[f64]| -x.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let config = PsoConfig {
        iterations,
        lower: vec![-5.0; dim],
        upper: vec![5.0; dim],
        seed,
        ..PsoConfig::default()
    };
    let res = pso_optimize(objective, &config)?;
    let err = res
        .best_position
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(SphereCheck {
        seed,
        position_error: err,
        value_gap: -res.best_score,
        iterations,
    })
}

/// Frontend parameters at a PSO position in `(fast, patch, ransac)` units,
/// quantized the same way as policy actions.
pub fn params_at(position: &[f64]) -> FrontendParams {
    let fast_half = f64::from(FAST_THRESHOLD_MAX) / 2.0;
    let (lo, hi) = (PATCH_SIZE_MIN as f64, PATCH_SIZE_MAX as f64);
    let ransac_half = RANSAC_THRESHOLD_MAX / 2.0;
    map_action([
        (position[0] - fast_half) / fast_half,
        (position[1] - 0.5 * (lo + hi)) / (0.5 * (hi - lo)),
        (position[2] - ransac_half) / ransac_half,
    ])
}
