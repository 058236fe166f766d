//! Macrorealist reference models: walkers that follow one definite
//! trajectory, read out non-invasively (or, for contrast, invasively).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{lg_k, Correlators, PROBABILITY_TOLERANCE};
use crate::error::{check_unit, Error, Result};
use crate::lattice::PositionDistribution;
use crate::measurement::{q3, Arm, Branch, EventRecord, QScheme};
use crate::rng::StreamSeed;

pub const MAX_ENUMERATION_STEPS: usize = 24;

/// A definite path: one left/right choice per step, starting at `x = 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Trajectory {
    branches: Vec<Branch>,
}

impl Trajectory {
    pub fn new(branches: Vec<Branch>) -> Self {
        Trajectory { branches }
    }

    /// Trajectory `index` of the `2ⁿ` paths: bit `k` set means step `k` goes right.
    pub fn from_index(steps: usize, index: u64) -> Self {
        Trajectory {
            branches: (0..steps)
                .map(|k| {
                    if (index >> k) & 1 == 1 {
                        Branch::Right
                    } else {
                        Branch::Left
                    }
                })
                .collect(),
        }
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn steps(&self) -> usize {
        self.branches.len()
    }

    /// `x₀ = 0, x₁, …, xₙ`.
    pub fn positions(&self) -> Vec<i64> {
        let mut x = 0;
        let mut out = vec![0];
        for b in &self.branches {
            x += match b {
                Branch::Left => -1,
                Branch::Right => 1,
            };
            out.push(x);
        }
        out
    }

    pub fn final_position(&self) -> i64 {
        *self
            .positions()
            .last()
            .expect("positions start at the origin")
    }

    /// Branch occupied at `t₂` (after the first step).
    pub fn branch_at_t2(&self) -> Option<Branch> {
        self.branches.first().copied()
    }
}

/// All `2ⁿ` trajectories, in [`Trajectory::from_index`] order.
pub fn enumerate_trajectories(steps: usize) -> Result<Vec<Trajectory>> {
    if steps > MAX_ENUMERATION_STEPS {
        return Err(Error::TooManySteps(steps));
    }
    Ok((0..1u64 << steps)
        .map(|i| Trajectory::from_index(steps, i))
        .collect())
}

/// Distribution of `xₙ` for independent steps going left with probability `p`.
pub fn classical_binomial_distribution(steps: usize, p_left: f64) -> Result<PositionDistribution> {
    check_unit("leftward probability", p_left)?;
    let n = steps as i64;
    // P(k left steps) by the multiplicative recurrence of binomial coefficients
    let mut probs = Vec::with_capacity(steps + 1);
    let mut coefficient = 1.0f64;
    for k in 0..=steps {
        if k > 0 {
            coefficient *= (steps - k + 1) as f64 / k as f64;
        }
        probs.push(coefficient * p_left.powi(k as i32) * (1.0 - p_left).powi((steps - k) as i32));
    }
    // k left steps end at n − 2k
    PositionDistribution::from_pairs(
        probs
            .into_iter()
            .enumerate()
            .map(|(k, p)| (n - 2 * k as i64, p)),
    )
}

/// Probability weights over the `2ⁿ` trajectories of [`enumerate_trajectories`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDistribution {
    steps: usize,
    weights: Vec<f64>,
}

impl TrajectoryDistribution {
    pub fn new(steps: usize, weights: Vec<f64>) -> Result<Self> {
        if steps > MAX_ENUMERATION_STEPS {
            return Err(Error::TooManySteps(steps));
        }
        if weights.len() != 1 << steps {
            return Err(Error::invalid(
                "trajectory weights",
                format!("expected {} weights, got {}", 1u64 << steps, weights.len()),
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid(
                "trajectory weights",
                "weights must be non-negative",
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::Unnormalized(total));
        }
        Ok(TrajectoryDistribution { steps, weights })
    }

    /// i.i.d. steps, leftward with probability `p_left`.
    pub fn independent(steps: usize, p_left: f64) -> Result<Self> {
        check_unit("leftward probability", p_left)?;
        let weights = (0..1u64 << steps.min(MAX_ENUMERATION_STEPS + 1))
            .map(|i| {
                let rights = i.count_ones() as i32;
                (1.0 - p_left).powi(rights) * p_left.powi(steps as i32 - rights)
            })
            .collect();
        TrajectoryDistribution::new(steps, weights)
    }

    /// All weight on trajectory `index`.
    pub fn deterministic(steps: usize, index: u64) -> Result<Self> {
        let mut weights = vec![0.0; 1 << steps.min(MAX_ENUMERATION_STEPS + 1)];
        if let Some(w) = weights.get_mut(index as usize) {
            *w = 1.0;
        }
        TrajectoryDistribution::new(steps, weights)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn final_positions(&self) -> PositionDistribution {
        PositionDistribution::from_pairs(self.weights.iter().enumerate().map(|(i, &w)| {
            (
                Trajectory::from_index(self.steps, i as u64).final_position(),
                w,
            )
        }))
        .expect("weights are non-negative")
    }
}

/// Correlators of a macrorealist ensemble: every `Q(tᵢ)` is read off the
/// same trajectory without disturbing it.
pub fn classical_correlators(
    dist: &TrajectoryDistribution,
    scheme: &QScheme,
) -> Result<Correlators> {
    if dist.steps == 0 {
        return Err(Error::invalid(
            "steps",
            "a trajectory needs at least one step for Q(t2)",
        ));
    }
    let (mut k12, mut k13, mut k23) = (0.0, 0.0, 0.0);
    for (i, &w) in dist.weights.iter().enumerate() {
        let t = Trajectory::from_index(dist.steps, i as u64);
        let q2 = scheme.q2(t.branch_at_t2().expect("at least one step"));
        let q3 = q3(t.final_position());
        k12 += w * q2;
        k23 += w * q2 * q3;
        k13 += w * q3;
    }
    Ok(Correlators { k12, k13, k23 })
}

/// `K` of a macrorealist ensemble; never exceeds 1.
pub fn classical_k(dist: &TrajectoryDistribution, scheme: &QScheme) -> Result<f64> {
    let c = classical_correlators(dist, scheme)?;
    Ok(lg_k(c.k12, c.k23, c.k13))
}

/// How the classical `t₂` measurement acts on the trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ClassicalMeasurement {
    /// The trajectory is left untouched.
    #[default]
    NonInvasive,
    /// A retained walker is kicked: its steps after `t₂` are redrawn, going
    /// left with probability `p_left_after`.
    Invasive { p_left_after: f64 },
}

/// Parameters of a classical sampling run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassicalRun {
    pub steps: usize,
    pub p_left: f64,
    pub theta: f64,
    pub removal_shift: i64,
    pub measurement: ClassicalMeasurement,
}

impl ClassicalRun {
    fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::invalid("steps", "need at least two steps"));
        }
        check_unit("leftward probability", self.p_left)?;
        if let ClassicalMeasurement::Invasive { p_left_after } = self.measurement {
            check_unit("post-measurement leftward probability", p_left_after)?;
        }
        Ok(())
    }

    fn step<R: Rng + ?Sized>(p_left: f64, rng: &mut R) -> Branch {
        if rng.random::<f64>() < p_left {
            Branch::Left
        } else {
            Branch::Right
        }
    }

    fn sample<R: Rng + ?Sized>(
        &self,
        arm: Arm,
        run_id: u64,
        seed: u64,
        rng: &mut R,
    ) -> EventRecord {
        let first = Self::step(self.p_left, rng);
        let conditioned = arm.conditioned_branch();
        let kicked = conditioned == Some(first);
        let p_after = match (self.measurement, kicked) {
            (ClassicalMeasurement::Invasive { p_left_after }, true) => p_left_after,
            _ => self.p_left,
        };
        let mut branches = vec![first];
        branches.extend((1..self.steps).map(|_| Self::step(p_after, rng)));
        let x = Trajectory::new(branches).final_position();
        let (reported, retained) = match conditioned {
            None => (x, true),
            Some(b) if b == first => (x, true),
            // the other branch is transported away from the origin
            Some(_) => {
                let away = if first == Branch::Right { 1 } else { -1 };
                (x + away * self.removal_shift, false)
            }
        };
        EventRecord {
            run_id,
            arm,
            theta: self.theta,
            reported_x3: reported,
            retained,
            q3: q3(reported),
            branch_at_t2: conditioned.map(|_| first),
            seed,
            wrong_prep: false,
            corrupt: false,
        }
    }
}

/// `shots` events for each of the three arms, in the same format as the
/// quantum sampler so the same analysis applies.
pub fn sample_classical_events(
    run: &ClassicalRun,
    shots: usize,
    seed: StreamSeed,
) -> Result<Vec<EventRecord>> {
    run.validate()?;
    let mut events = Vec::with_capacity(3 * shots);
    for (a, arm) in Arm::ALL.into_iter().enumerate() {
        let arm_seed = seed.derive(arm.stream_id());
        let first_id = (a * shots) as u64;
        let batch: Vec<EventRecord> = (0..shots as u64)
            .into_par_iter()
            .map(|i| run.sample(arm, first_id + i, seed.seed(), &mut arm_seed.stream(i)))
            .collect();
        events.extend(batch);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::collections::HashSet;

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_trajectories(4).unwrap().len(), 16);
        assert_eq!(enumerate_trajectories(1).unwrap().len(), 2);
        let empty = enumerate_trajectories(0).unwrap();
        assert_eq!(empty.len(), 1);
        assert_eq!(empty[0].positions(), vec![0]);
        assert!(matches!(
            enumerate_trajectories(25),
            Err(Error::TooManySteps(25))
        ));

        let all = enumerate_trajectories(6).unwrap();
        let unique: HashSet<_> = all.iter().collect();
        assert_eq!(unique.len(), 64);
        for t in &all {
            for (k, x) in t.positions().iter().enumerate() {
                assert!(x.unsigned_abs() as usize <= k);
            }
        }
    }

    #[test]
    fn binomial_examples() {
        let d = classical_binomial_distribution(4, 0.5).unwrap();
        for (x, c) in [(-4, 1.0), (-2, 4.0), (0, 6.0), (2, 4.0), (4, 1.0)] {
            assert_abs_diff_eq!(d.probability(x), c / 16.0, epsilon = 1e-15);
        }
        let d = classical_binomial_distribution(4, 1.0).unwrap();
        assert_eq!(d.probability(-4), 1.0);
        assert_eq!(d.support(0.0), vec![-4]);
        let d = classical_binomial_distribution(2, 0.5).unwrap();
        assert_eq!(d.probability(-2), 0.25);
        assert_eq!(d.probability(0), 0.5);
        assert_eq!(d.probability(2), 0.25);
    }

    #[test]
    fn binomial_variance() {
        let (n, p) = (7, 0.3);
        let d = classical_binomial_distribution(n, p).unwrap();
        let mean: f64 = d.iter().map(|(x, q)| x as f64 * q).sum();
        let var: f64 = d.iter().map(|(x, q)| (x as f64 - mean).powi(2) * q).sum();
        assert_abs_diff_eq!(var, n as f64 * 4.0 * p * (1.0 - p), epsilon = 1e-12);
    }

    #[test]
    fn binomial_matches_path_counting() {
        for n in 0..=10 {
            let counted = TrajectoryDistribution::independent(n, 0.5)
                .unwrap()
                .final_positions();
            let d = classical_binomial_distribution(n, 0.5).unwrap();
            assert!(d.total_variation(&counted) < 1e-15, "n = {n}");
        }
    }

    #[test]
    fn classical_k_constant_is_one() {
        let d = TrajectoryDistribution::independent(4, 0.37).unwrap();
        assert_eq!(classical_k(&d, &QScheme::ConstantOne).unwrap(), 1.0);
    }

    #[test]
    fn classical_k_uniform_dichotomic() {
        // direct average over the 16 paths: K = E[q2] + E[q2·q3] − E[q3]
        let mut sum = 0.0;
        for t in enumerate_trajectories(4).unwrap() {
            let q2 = if t.branches()[0] == Branch::Left {
                -1.0
            } else {
                1.0
            };
            let q3 = if t.final_position() <= 0 { -1.0 } else { 1.0 };
            sum += q2 + q2 * q3 - q3;
        }
        let expected = sum / 16.0;
        let d = TrajectoryDistribution::independent(4, 0.5).unwrap();
        let k = classical_k(&d, &QScheme::dichotomic(-1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(k, expected, epsilon = 1e-15);
        assert!((-3.0..=1.0).contains(&k));
    }

    #[test]
    fn invalid_distributions() {
        assert!(matches!(
            TrajectoryDistribution::new(2, vec![0.1, 0.1, 0.1, 0.1]),
            Err(Error::Unnormalized(_))
        ));
        assert!(TrajectoryDistribution::new(2, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn all_left_sampling() {
        let run = ClassicalRun {
            steps: 4,
            p_left: 1.0,
            theta: 0.0,
            removal_shift: 5,
            measurement: ClassicalMeasurement::NonInvasive,
        };
        let events = sample_classical_events(&run, 100, StreamSeed::new(1)).unwrap();
        assert_eq!(events.len(), 300);
        for e in &events {
            match e.arm {
                Arm::ConditionOnRight => {
                    assert!(!e.retained);
                    assert_eq!(e.reported_x3, -9);
                }
                _ => {
                    assert!(e.retained);
                    assert_eq!(e.reported_x3, -4);
                }
            }
        }
    }
}
