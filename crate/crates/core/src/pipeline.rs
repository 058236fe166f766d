//! From a configuration to correlators: exact evaluation of the full
//! protocol (including noise) and the estimator applied to sampled events.
//!
//! Both paths reduce every arm to an [`ArmTally`] and run the same
//! estimator, so the exact result is the large-sample limit of the sampled
//! one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    k12_from_arms, k23_from_arms, CorrelationReport, Correlators, Uncertainty, UncertaintyMethod,
};
use crate::config::ProtocolConfig;
use crate::error::{Error, Result};
use crate::measurement::{q3, Arm, ArmModel, EventRecord, EventSampler, QScheme, SiteClass};
use crate::rng::StreamSeed;

/// Weighted outcome counts of one arm: retained atoms by walk-frame final
/// position, and the rejected total. Weights are event counts for sampled
/// data and probabilities for the exact model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmTally {
    pub arm: Arm,
    pub total: f64,
    pub retained: Vec<(i64, f64)>,
    pub rejected: f64,
}

impl ArmTally {
    pub fn empty(arm: Arm) -> Self {
        ArmTally {
            arm,
            total: 0.0,
            retained: Vec::new(),
            rejected: 0.0,
        }
    }

    pub fn from_events<'a>(arm: Arm, events: impl IntoIterator<Item = &'a EventRecord>) -> Self {
        let mut retained = BTreeMap::<i64, f64>::new();
        let mut rejected = 0.0;
        let mut total = 0.0;
        for e in events {
            total += 1.0;
            if e.retained {
                *retained.entry(e.reported_x3).or_default() += 1.0;
            } else {
                rejected += 1.0;
            }
        }
        ArmTally {
            arm,
            total,
            retained: retained.into_iter().collect(),
            rejected,
        }
    }

    pub fn retained_weight(&self) -> f64 {
        self.retained.iter().map(|(_, w)| w).sum()
    }

    pub fn retained_fraction(&self) -> Option<f64> {
        (self.total > 0.0).then(|| self.retained_weight() / self.total)
    }

    /// `⟨Q(t₃)⟩` over retained atoms.
    pub fn mean_q3(&self) -> Option<f64> {
        let w = self.retained_weight();
        (w > 0.0).then(|| self.retained.iter().map(|(x, c)| c * q3(*x)).sum::<f64>() / w)
    }
}

/// Tallies of the unconditioned arm and the two removal arms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTallies {
    pub unconditioned: ArmTally,
    pub left: ArmTally,
    pub right: ArmTally,
}

impl ExperimentTallies {
    pub fn from_events(events: &EventSet) -> Self {
        ExperimentTallies {
            unconditioned: ArmTally::from_events(Arm::None, &events.unconditioned),
            left: ArmTally::from_events(Arm::ConditionOnLeft, &events.left),
            right: ArmTally::from_events(Arm::ConditionOnRight, &events.right),
        }
    }

    /// Estimated `P(t₂; x = −1)` and `P(t₂; x = +1)`: retention fractions of
    /// the two removal arms, normalized to sum to one.
    pub fn branch_probabilities(&self) -> Result<(f64, f64)> {
        let fraction = |t: &ArmTally| t.retained_fraction().ok_or(Error::EmptyArm(t.arm));
        let (rl, rr) = (fraction(&self.left)?, fraction(&self.right)?);
        if rl + rr <= 0.0 {
            return Err(Error::Degenerate(
                "no retained events in either removal arm".into(),
            ));
        }
        Ok((rl / (rl + rr), rr / (rl + rr)))
    }

    pub fn correlators(&self, scheme: &QScheme) -> Result<Correlators> {
        let k13 = self
            .unconditioned
            .mean_q3()
            .ok_or(Error::EmptyArm(Arm::None))?;
        let (pl, pr) = self.branch_probabilities()?;
        let ml = self.left.mean_q3().unwrap_or(f64::NAN);
        let mr = self.right.mean_q3().unwrap_or(f64::NAN);
        Ok(Correlators {
            k12: k12_from_arms(pl, pr, scheme)?,
            k13,
            k23: k23_from_arms(pl, ml, pr, mr, scheme)?,
        })
    }
}

/// Events grouped by arm, in input order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventSet {
    pub unconditioned: Vec<EventRecord>,
    pub left: Vec<EventRecord>,
    pub right: Vec<EventRecord>,
}

impl EventSet {
    pub fn new(events: impl IntoIterator<Item = EventRecord>) -> Self {
        let mut set = EventSet::default();
        for e in events {
            set.arm_mut(e.arm).push(e);
        }
        set
    }

    pub fn arm(&self, arm: Arm) -> &[EventRecord] {
        match arm {
            Arm::None => &self.unconditioned,
            Arm::ConditionOnLeft => &self.left,
            Arm::ConditionOnRight => &self.right,
        }
    }

    fn arm_mut(&mut self, arm: Arm) -> &mut Vec<EventRecord> {
        match arm {
            Arm::None => &mut self.unconditioned,
            Arm::ConditionOnLeft => &mut self.left,
            Arm::ConditionOnRight => &mut self.right,
        }
    }

    pub fn len(&self) -> usize {
        self.unconditioned.len() + self.left.len() + self.right.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &EventRecord> {
        self.unconditioned
            .iter()
            .chain(&self.left)
            .chain(&self.right)
    }

    /// Fraction of removal-arm events flagged as disturbed by the removal.
    pub fn corrupt_fraction(&self) -> f64 {
        let removal: Vec<&EventRecord> = self.left.iter().chain(&self.right).collect();
        if removal.is_empty() {
            return 0.0;
        }
        removal.iter().filter(|e| e.corrupt).count() as f64 / removal.len() as f64
    }
}

fn exact_tally(config: &ProtocolConfig, arm: Arm) -> Result<ArmTally> {
    let spec = config.walk_spec()?;
    let protocol = config.removal_protocol(arm);
    let noise = config.noise();
    let model = ArmModel::build(&spec, &protocol, &noise)?;
    let reported = model.reported_distribution(&noise, protocol.excitation_prob);
    let mut tally = ArmTally::empty(arm);
    for (x, p) in reported.iter().filter(|(_, p)| *p > 0.0) {
        tally.total += p;
        match model.classify(x) {
            SiteClass::Retained => tally.retained.push((x + model.frame_offset, p)),
            SiteClass::Rejected => tally.rejected += p,
        }
    }
    Ok(tally)
}

/// Expected tallies per unit shot, noise included.
pub fn exact_tallies(config: &ProtocolConfig) -> Result<ExperimentTallies> {
    config.validate()?;
    Ok(ExperimentTallies {
        unconditioned: exact_tally(config, Arm::None)?,
        left: exact_tally(config, Arm::ConditionOnLeft)?,
        right: exact_tally(config, Arm::ConditionOnRight)?,
    })
}

/// Infinite-statistics limit of the estimator.
pub fn exact_correlators(config: &ProtocolConfig) -> Result<Correlators> {
    exact_tallies(config)?.correlators(&config.q2_scheme)
}

pub fn exact_report(config: &ProtocolConfig) -> Result<CorrelationReport> {
    CorrelationReport::new(
        exact_correlators(config)?,
        config.excitation_prob,
        Some(Uncertainty {
            sigma: 0.0,
            method: UncertaintyMethod::Exact,
        }),
    )
}

/// `shots_per_arm` events for each arm, unconditioned first. Run ids are
/// unique across arms.
pub fn simulate_events(config: &ProtocolConfig) -> Result<Vec<EventRecord>> {
    config.validate()?;
    let spec = config.walk_spec()?;
    let noise = config.noise();
    let seed = StreamSeed::new(config.seed);
    let shots = config.shots_per_arm;
    let mut events = Vec::with_capacity(3 * shots);
    for (a, arm) in Arm::ALL.into_iter().enumerate() {
        let sampler = EventSampler::new(&spec, &config.removal_protocol(arm), &noise)?;
        events.extend(sampler.sample_many(shots, (a * shots) as u64, seed));
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::analytic_k_constant;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_fair_coin() {
        let c = exact_correlators(&ProtocolConfig::default()).unwrap();
        assert_abs_diff_eq!(c.k12, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.k13, -0.625, epsilon = 1e-12);
        assert_abs_diff_eq!(c.k23, -0.125, epsilon = 1e-12);
        assert_abs_diff_eq!(
            c.k(),
            analytic_k_constant(std::f64::consts::FRAC_PI_2),
            epsilon = 1e-12
        );
    }

    #[test]
    fn deterministic_walk_has_no_violation() {
        let config = ProtocolConfig {
            theta: 0.0,
            ..ProtocolConfig::default()
        };
        let c = exact_correlators(&config).unwrap();
        assert_eq!(c.k13, -1.0);
        assert_eq!(c.k23, -1.0);
        assert_eq!(c.k(), 1.0);
    }

    #[test]
    fn tallies_from_events() {
        let config = ProtocolConfig {
            shots_per_arm: 2000,
            seed: 5,
            ..ProtocolConfig::default()
        };
        let events = simulate_events(&config).unwrap();
        assert_eq!(events.len(), 6000);
        let ids: std::collections::HashSet<u64> = events.iter().map(|e| e.run_id).collect();
        assert_eq!(ids.len(), 6000);
        let set = EventSet::new(events);
        let t = ExperimentTallies::from_events(&set);
        assert_eq!(t.left.total, 2000.0);
        assert_eq!(t.left.retained_weight() + t.left.rejected, 2000.0);
        let c = t.correlators(&config.q2_scheme).unwrap();
        assert!((c.k() - 1.5).abs() < 0.15, "{}", c.k());
    }

    #[test]
    fn empty_arm_is_an_error() {
        let set = EventSet::default();
        let t = ExperimentTallies::from_events(&set);
        assert!(matches!(
            t.correlators(&QScheme::ConstantOne),
            Err(Error::EmptyArm(_))
        ));
    }
}
