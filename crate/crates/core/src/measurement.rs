//! The three measurements of the LG protocol.
//!
//! `Q(t₁)` is the preparation in `(↑, 0)`. `Q(t₂)` is an ideal negative
//! measurement after the first step: one of the two branches `(↑,−1)` /
//! `(↓,+1)` is transported far away by a state-selective shift, and atoms
//! that end up in the displaced window at `t₃` are rejected. `Q(t₃)` is the
//! sign of the final position.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_unit, Error, Result};
use crate::lattice::{
    PositionDistribution, Spin, SpinSite, Walker, WalkerDensity, WalkerState, Window,
};
use crate::rng::StreamSeed;
use crate::walk::{evolve, WalkSpec};

/// Below this Born probability a branch cannot be conditioned on.
pub const CONDITIONING_THRESHOLD: f64 = 1e-15;

/// Time index of the negative measurement, in steps.
pub const T2_STEP: usize = 1;

/// The two possible outcomes at `t₂`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `(↑, x = −1)`
    Left,
    /// `(↓, x = +1)`
    Right,
}

impl Branch {
    pub const ALL: [Branch; 2] = [Branch::Left, Branch::Right];

    pub fn spin_site(self) -> SpinSite {
        match self {
            Branch::Left => SpinSite::new(Spin::Up, -1),
            Branch::Right => SpinSite::new(Spin::Down, 1),
        }
    }

    pub fn other(self) -> Branch {
        match self {
            Branch::Left => Branch::Right,
            Branch::Right => Branch::Left,
        }
    }
}

/// How `Q(t₂)` is assigned to the two branches.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum QScheme {
    /// `Q(t₂) = 1` whatever the outcome.
    #[default]
    ConstantOne,
    /// `+1` for `(↓,+1)` and `xi` for `(↑,−1)`.
    Dichotomic { xi: f64 },
}

impl QScheme {
    pub fn dichotomic(xi: f64) -> Result<Self> {
        if !xi.is_finite() || xi.abs() > 1.0 {
            return Err(Error::invalid("xi", format!("|{xi}| exceeds 1")));
        }
        Ok(QScheme::Dichotomic { xi })
    }

    pub fn q2(&self, branch: Branch) -> f64 {
        match (self, branch) {
            (QScheme::ConstantOne, _) => 1.0,
            (QScheme::Dichotomic { .. }, Branch::Right) => 1.0,
            (QScheme::Dichotomic { xi }, Branch::Left) => *xi,
        }
    }
}

impl fmt::Display for QScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QScheme::ConstantOne => f.write_str("constant"),
            QScheme::Dichotomic { xi } => write!(f, "dichotomic:{xi}"),
        }
    }
}

impl FromStr for QScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "constant" || s == "constant_one" {
            return Ok(QScheme::ConstantOne);
        }
        if s == "dichotomic" {
            return QScheme::dichotomic(-1.0);
        }
        match s.strip_prefix("dichotomic:") {
            Some(xi) => {
                let xi: f64 = xi
                    .parse()
                    .map_err(|_| Error::invalid("q2 scheme", format!("bad xi in {s:?}")))?;
                QScheme::dichotomic(xi)
            }
            None => Err(Error::invalid(
                "q2 scheme",
                format!("{s:?} is neither \"constant\" nor \"dichotomic:<xi>\""),
            )),
        }
    }
}

impl Serialize for QScheme {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QScheme {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `Q(t₁)`: fixed by the preparation.
pub fn q1() -> f64 {
    1.0
}

/// `Q(t₂)` for an outcome at `t₂`.
pub fn q2(branch: Branch, scheme: &QScheme) -> f64 {
    scheme.q2(branch)
}

/// `Q(t₃)`: −1 for `x ≤ 0`, +1 for `x > 0`.
pub fn q3(x: i64) -> f64 {
    if x <= 0 {
        -1.0
    } else {
        1.0
    }
}

/// Which run of the experiment an event belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// No measurement at `t₂`.
    None,
    /// Keep the atoms that were at `(↑,−1)` at `t₂`.
    ConditionOnLeft,
    /// Keep the atoms that were at `(↓,+1)` at `t₂`.
    ConditionOnRight,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::None, Arm::ConditionOnLeft, Arm::ConditionOnRight];

    pub fn conditioned_branch(self) -> Option<Branch> {
        match self {
            Arm::None => None,
            Arm::ConditionOnLeft => Some(Branch::Left),
            Arm::ConditionOnRight => Some(Branch::Right),
        }
    }

    pub(crate) fn stream_id(self) -> u64 {
        match self {
            Arm::None => 0,
            Arm::ConditionOnLeft => 1,
            Arm::ConditionOnRight => 2,
        }
    }
}

/// Realization of the right-conditioned arm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RightArmVariant {
    /// Transport the `(↑,−1)` branch leftward, keep the untouched `(↓,+1)` atoms.
    #[default]
    Mirror,
    /// Transport the `(↓,+1)` branch leftward and read it back from the
    /// displaced window.
    Literal,
}

/// Classification of a final position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SiteClass {
    Retained,
    Rejected,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemovalProtocol {
    pub arm: Arm,
    pub removal_shift: i64,
    pub excitation_prob: f64,
    #[serde(default)]
    pub right_arm_variant: RightArmVariant,
}

impl RemovalProtocol {
    pub const DEFAULT_SHIFT: i64 = 5;

    pub fn new(arm: Arm) -> Self {
        RemovalProtocol {
            arm,
            removal_shift: Self::DEFAULT_SHIFT,
            excitation_prob: 0.0,
            right_arm_variant: RightArmVariant::Mirror,
        }
    }

    pub fn with_shift(mut self, removal_shift: i64) -> Self {
        self.removal_shift = removal_shift;
        self
    }

    pub fn with_excitation(mut self, excitation_prob: f64) -> Self {
        self.excitation_prob = excitation_prob;
        self
    }

    pub fn with_variant(mut self, variant: RightArmVariant) -> Self {
        self.right_arm_variant = variant;
        self
    }

    /// Checks the shift and that retained and displaced final supports are
    /// disjoint after `remaining` steps.
    pub fn validate(&self, remaining: usize) -> Result<()> {
        check_unit("excitation probability", self.excitation_prob)?;
        if self.removal_shift <= 0 || self.removal_shift % 2 == 0 {
            return Err(Error::ProtocolInvalid(format!(
                "removal shift must be a positive odd number of sites, got {}",
                self.removal_shift
            )));
        }
        let minimum = (2 * remaining as i64 - 1).max(1);
        if self.removal_shift < minimum {
            return Err(Error::ProtocolInvalid(format!(
                "removal shift {} is below {minimum} for {remaining} remaining steps",
                self.removal_shift
            )));
        }
        if let Some(geometry) = self.geometry() {
            let retained = geometry.retained_support(remaining);
            let rejected = geometry.rejected_support(remaining);
            if let Some(x) = retained.intersection(&rejected).next() {
                return Err(Error::ProtocolInvalid(format!(
                    "retained and displaced supports overlap at site {x}; increase the removal shift"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn geometry(&self) -> Option<RemovalGeometry> {
        let conditioned = self.arm.conditioned_branch()?;
        let (moved, direction) = match (conditioned, self.right_arm_variant) {
            (Branch::Left, _) => (Branch::Right, 1),
            (Branch::Right, RightArmVariant::Mirror) => (Branch::Left, -1),
            (Branch::Right, RightArmVariant::Literal) => (Branch::Right, -1),
        };
        Some(RemovalGeometry {
            conditioned,
            moved,
            offset: direction * self.removal_shift,
        })
    }
}

/// Which branch is transported, and by how much.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct RemovalGeometry {
    pub conditioned: Branch,
    pub moved: Branch,
    pub offset: i64,
}

impl RemovalGeometry {
    /// Lab-frame site of `branch` right after the transport.
    fn site_after_transport(&self, branch: Branch) -> i64 {
        let site = branch.spin_site().site;
        if branch == self.moved {
            site + self.offset
        } else {
            site
        }
    }

    /// Offset from lab frame to walk frame for retained atoms.
    pub fn frame_offset(&self) -> i64 {
        if self.moved == self.conditioned {
            -self.offset
        } else {
            0
        }
    }

    pub fn retained_support(&self, remaining: usize) -> BTreeSet<i64> {
        light_cone(self.site_after_transport(self.conditioned), remaining)
    }

    pub fn rejected_support(&self, remaining: usize) -> BTreeSet<i64> {
        light_cone(
            self.site_after_transport(self.conditioned.other()),
            remaining,
        )
    }
}

/// Sites reachable from `site` in exactly `steps` unit steps.
pub fn light_cone(site: i64, steps: usize) -> BTreeSet<i64> {
    let m = steps as i64;
    (0..=m).map(|j| site - m + 2 * j).collect()
}

/// Projects the one-step state onto `branch`. Returns the Born probability
/// and the renormalized conditioned state.
pub fn project_t2(state: &Walker, branch: Branch) -> Result<(f64, Walker)> {
    let label = branch.spin_site();
    let probability = state.population(label);
    if probability < CONDITIONING_THRESHOLD {
        return Err(Error::UndefinedConditioning {
            branch,
            probability,
        });
    }
    let window = state.window();
    let i = window.index(label)?;
    let conditioned = match state {
        Walker::Pure(s) => {
            let mut amplitudes = vec![Complex64::new(0.0, 0.0); window.dim()];
            amplitudes[i] = s.amplitudes()[i] / probability.sqrt();
            Walker::Pure(WalkerState::from_raw(window, amplitudes))
        }
        Walker::Mixed(_) => {
            let mut matrix = DMatrix::zeros(window.dim(), window.dim());
            matrix[(i, i)] = Complex64::new(1.0, 0.0);
            Walker::Mixed(WalkerDensity::from_raw(window, matrix))
        }
    };
    Ok((probability, conditioned))
}

/// Final-position statistics of one removal arm in the noiseless model.
#[derive(Clone, Debug)]
pub struct RemovalOutcome {
    /// Full lab-frame distribution at `t₃`.
    pub final_distribution: PositionDistribution,
    pub retained_support: BTreeSet<i64>,
    pub rejected_support: BTreeSet<i64>,
    /// Probability that the atom is found in the retained support.
    pub retention_probability: f64,
    /// Retained atoms, normalized, in walk coordinates.
    pub retained: Option<PositionDistribution>,
    /// Rejected atoms, normalized, in lab coordinates.
    pub rejected: Option<PositionDistribution>,
    /// Added to a lab-frame position of a retained atom to get its walk position.
    pub frame_offset: i64,
}

impl RemovalOutcome {
    /// Membership in the displaced support decides rejection. Sites in
    /// neither support (only reachable through readout noise) go to the
    /// nearer support, ties counted as rejected.
    pub fn classify(&self, x: i64) -> SiteClass {
        classify(x, &self.retained_support, &self.rejected_support)
    }

    /// Probability that a noiseless event is unambiguously classified.
    pub fn classification_confidence(&self) -> f64 {
        self.final_distribution
            .iter()
            .filter(|(x, _)| self.retained_support.contains(x) != self.rejected_support.contains(x))
            .map(|(_, p)| p)
            .sum()
    }
}

fn classify(x: i64, retained: &BTreeSet<i64>, rejected: &BTreeSet<i64>) -> SiteClass {
    if rejected.contains(&x) {
        return SiteClass::Rejected;
    }
    if retained.contains(&x) {
        return SiteClass::Retained;
    }
    let distance =
        |set: &BTreeSet<i64>| set.iter().map(|s| (s - x).abs()).min().unwrap_or(i64::MAX);
    if distance(retained) < distance(rejected) {
        SiteClass::Retained
    } else {
        SiteClass::Rejected
    }
}

/// Preparation state of a walk, `(↑, 0)` unless the preparation failed.
pub fn prepared_state(spin: Spin, window: Window) -> Result<Walker> {
    Ok(WalkerState::new_localized(0, spin, window)?.into())
}

/// Simulates the state-selective removal at `t₂ = 1` for `protocol.arm` and
/// splits the final distribution into retained and displaced parts.
pub fn negative_measurement_run(
    spec: &WalkSpec,
    protocol: &RemovalProtocol,
) -> Result<RemovalOutcome> {
    let window = Window::for_walk(spec.steps, protocol.removal_shift);
    removal_run_from(spec, protocol, &prepared_state(Spin::Up, window)?)
}

pub(crate) fn removal_run_from(
    spec: &WalkSpec,
    protocol: &RemovalProtocol,
    initial: &Walker,
) -> Result<RemovalOutcome> {
    spec.validate()?;
    if spec.steps <= T2_STEP {
        return Err(Error::ProtocolInvalid(format!(
            "the walk must outlast the measurement at step {T2_STEP}"
        )));
    }
    let remaining = spec.steps - T2_STEP;
    protocol.validate(remaining)?;
    let geometry = protocol
        .geometry()
        .ok_or_else(|| Error::ProtocolInvalid("arm \"none\" has no removal".into()))?;

    let at_t2 = evolve(initial, spec, T2_STEP)?;
    let transported = at_t2.translate_species(geometry.moved.spin_site().spin, geometry.offset)?;
    let final_distribution = evolve(&transported, spec, remaining)?.position_distribution();

    let retained_support = geometry.retained_support(remaining);
    let rejected_support = geometry.rejected_support(remaining);
    let part = |support: &BTreeSet<i64>| {
        PositionDistribution::from_pairs(
            final_distribution
                .iter()
                .filter(|(x, _)| support.contains(x)),
        )
    };
    let retained_part = part(&retained_support)?;
    let rejected_part = part(&rejected_support)?;
    let retention_probability = retained_part.total();
    let frame_offset = geometry.frame_offset();
    let normalized = |d: PositionDistribution| {
        if d.total() > CONDITIONING_THRESHOLD {
            d.normalized().ok()
        } else {
            None
        }
    };

    Ok(RemovalOutcome {
        retained: normalized(retained_part).map(|d| d.shifted(frame_offset)),
        rejected: normalized(rejected_part),
        final_distribution,
        retained_support,
        rejected_support,
        retention_probability,
        frame_offset,
    })
}

/// Readout and preparation imperfections.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Probability that the reported site is a neighbour of the true one.
    pub detection_error: f64,
    /// Probability of preparing `(↓, 0)` instead of `(↑, 0)`.
    pub prep_error: f64,
}

impl NoiseParams {
    pub fn none() -> Self {
        NoiseParams::default()
    }

    /// Readout 2 %, wrong-state preparation 1 %.
    pub fn experimental() -> Self {
        NoiseParams {
            detection_error: 0.02,
            prep_error: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("detection error", self.detection_error)?;
        check_unit("preparation error", self.prep_error)
    }
}

/// One simulated single-atom run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub run_id: u64,
    pub arm: Arm,
    pub theta: f64,
    pub reported_x3: i64,
    pub retained: bool,
    pub q3: f64,
    pub branch_at_t2: Option<Branch>,
    pub seed: u64,
    /// Prepared in the wrong internal state (not visible to the analysis).
    #[serde(default)]
    pub wrong_prep: bool,
    /// The removal disturbed this unshifted atom (venality accounting).
    #[serde(default)]
    pub corrupt: bool,
}

#[derive(Clone, Debug)]
struct Categorical {
    sites: Vec<i64>,
    index: WeightedIndex<f64>,
}

impl Categorical {
    fn new(d: &PositionDistribution) -> Option<Self> {
        let (sites, weights): (Vec<i64>, Vec<f64>) = d.iter().filter(|(_, p)| *p > 0.0).unzip();
        let index = WeightedIndex::new(weights).ok()?;
        Some(Categorical { sites, index })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.sites[self.index.sample(rng)]
    }
}

#[derive(Clone, Debug)]
enum Preparation {
    Unconditioned(Categorical),
    Removal {
        conditioned_probability: f64,
        retained: Option<Categorical>,
        rejected: Option<Categorical>,
    },
}

/// Exact per-preparation statistics of one arm, used for sampling and for
/// the exact estimator.
#[derive(Clone, Debug)]
pub(crate) struct ArmModel {
    pub arm: Arm,
    /// Index 0: correct preparation, 1: wrong spin.
    pub preparations: Vec<PreparationModel>,
    /// Final distribution (lab frame) of a corrupted conditioned atom.
    pub corrupt: Option<PositionDistribution>,
    pub retained_support: BTreeSet<i64>,
    pub rejected_support: BTreeSet<i64>,
    pub frame_offset: i64,
}

#[derive(Clone, Debug)]
pub(crate) enum PreparationModel {
    Unconditioned(PositionDistribution),
    Removal {
        conditioned_probability: f64,
        /// Lab frame, normalized.
        retained: Option<PositionDistribution>,
        rejected: Option<PositionDistribution>,
    },
}

impl ArmModel {
    pub fn build(spec: &WalkSpec, protocol: &RemovalProtocol, noise: &NoiseParams) -> Result<Self> {
        spec.validate()?;
        noise.validate()?;
        let window = Window::for_walk(spec.steps, protocol.removal_shift);
        let spins: &[Spin] = if noise.prep_error > 0.0 {
            &[Spin::Up, Spin::Down]
        } else {
            &[Spin::Up]
        };
        let Some(geometry) = protocol.geometry() else {
            let preparations = spins
                .iter()
                .map(|&spin| {
                    let initial = prepared_state(spin, window)?;
                    Ok(PreparationModel::Unconditioned(
                        evolve(&initial, spec, spec.steps)?.position_distribution(),
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(ArmModel {
                arm: protocol.arm,
                preparations,
                corrupt: None,
                retained_support: BTreeSet::new(),
                rejected_support: BTreeSet::new(),
                frame_offset: 0,
            });
        };

        let mut preparations = Vec::new();
        let mut supports = None;
        for &spin in spins {
            let outcome = removal_run_from(spec, protocol, &prepared_state(spin, window)?)?;
            preparations.push(PreparationModel::Removal {
                conditioned_probability: outcome.retention_probability,
                retained: outcome
                    .retained
                    .as_ref()
                    .map(|d| d.shifted(-outcome.frame_offset)),
                rejected: outcome.rejected.clone(),
            });
            supports = Some((outcome.retained_support, outcome.rejected_support));
        }
        let (retained_support, rejected_support) = supports.expect("at least one preparation");

        let corrupt = if protocol.excitation_prob > 0.0 {
            let remaining = spec.steps - T2_STEP;
            let site = geometry.site_after_transport(geometry.conditioned);
            let mixed: Walker = WalkerDensity::spin_mixed(site, window)?.into();
            Some(evolve(&mixed, spec, remaining)?.position_distribution())
        } else {
            None
        };

        Ok(ArmModel {
            arm: protocol.arm,
            preparations,
            corrupt,
            retained_support,
            rejected_support,
            frame_offset: geometry.frame_offset(),
        })
    }

    pub fn classify(&self, x: i64) -> SiteClass {
        if self.arm == Arm::None {
            SiteClass::Retained
        } else {
            classify(x, &self.retained_support, &self.rejected_support)
        }
    }

    /// Exact lab-frame distribution of reported positions, split by whether
    /// the conditioned branch was taken, including all noise sources.
    pub fn reported_distribution(
        &self,
        noise: &NoiseParams,
        excitation_prob: f64,
    ) -> PositionDistribution {
        let weights: Vec<f64> = if self.preparations.len() == 2 {
            vec![1.0 - noise.prep_error, noise.prep_error]
        } else {
            vec![1.0]
        };
        let mut parts: Vec<(f64, PositionDistribution)> = Vec::new();
        for (w, prep) in weights.iter().zip(&self.preparations) {
            match prep {
                PreparationModel::Unconditioned(d) => parts.push((*w, d.clone())),
                PreparationModel::Removal {
                    conditioned_probability,
                    retained,
                    rejected,
                } => {
                    let pc = *conditioned_probability;
                    if let Some(d) = retained {
                        parts.push((w * pc * (1.0 - excitation_prob), d.clone()));
                    }
                    if let (Some(d), true) = (&self.corrupt, retained.is_some()) {
                        parts.push((w * pc * excitation_prob, d.clone()));
                    }
                    if let Some(d) = rejected {
                        parts.push((w * (1.0 - pc), d.clone()));
                    }
                }
            }
        }
        PositionDistribution::mixture(parts.iter().map(|(w, d)| (*w, d)))
            .with_detection_error(noise.detection_error)
    }
}

/// Draws single-atom events for one arm of one configuration.
#[derive(Clone, Debug)]
pub struct EventSampler {
    arm: Arm,
    theta: f64,
    noise: NoiseParams,
    excitation_prob: f64,
    conditioned: Option<Branch>,
    preparations: Vec<Preparation>,
    corrupt: Option<Categorical>,
    model: ArmModel,
}

impl EventSampler {
    pub fn new(spec: &WalkSpec, protocol: &RemovalProtocol, noise: &NoiseParams) -> Result<Self> {
        let model = ArmModel::build(spec, protocol, noise)?;
        let preparations = model
            .preparations
            .iter()
            .map(|p| match p {
                PreparationModel::Unconditioned(d) => Preparation::Unconditioned(
                    Categorical::new(d).expect("a walk distribution has mass"),
                ),
                PreparationModel::Removal {
                    conditioned_probability,
                    retained,
                    rejected,
                } => Preparation::Removal {
                    conditioned_probability: *conditioned_probability,
                    retained: retained.as_ref().and_then(Categorical::new),
                    rejected: rejected.as_ref().and_then(Categorical::new),
                },
            })
            .collect();
        Ok(EventSampler {
            arm: protocol.arm,
            theta: spec.coin.theta(),
            noise: *noise,
            excitation_prob: protocol.excitation_prob,
            conditioned: protocol.arm.conditioned_branch(),
            preparations,
            corrupt: model.corrupt.as_ref().and_then(Categorical::new),
            model,
        })
    }

    pub fn arm(&self) -> Arm {
        self.arm
    }

    /// One event. The order of random draws is fixed: preparation, branch,
    /// corruption, final position, readout noise.
    pub fn sample<R: Rng + ?Sized>(&self, run_id: u64, seed: u64, rng: &mut R) -> EventRecord {
        let wrong_prep = rng.random::<f64>() < self.noise.prep_error;
        let prep = &self.preparations[usize::from(wrong_prep && self.preparations.len() > 1)];
        let mut corrupt = false;
        let (x, branch) = match prep {
            Preparation::Unconditioned(d) => (d.sample(rng), None),
            Preparation::Removal {
                conditioned_probability,
                retained,
                rejected,
            } => {
                let conditioned = self.conditioned.expect("removal arm");
                let took_conditioned = match (retained, rejected) {
                    (Some(_), Some(_)) => rng.random::<f64>() < *conditioned_probability,
                    (Some(_), None) => true,
                    _ => false,
                };
                if took_conditioned {
                    corrupt = self.corrupt.is_some() && rng.random::<f64>() < self.excitation_prob;
                    let d = if corrupt {
                        self.corrupt.as_ref()
                    } else {
                        retained.as_ref()
                    };
                    (
                        d.expect("conditioned branch").sample(rng),
                        Some(conditioned),
                    )
                } else {
                    let d = rejected.as_ref().expect("other branch");
                    (d.sample(rng), Some(conditioned.other()))
                }
            }
        };
        let mut reported = x;
        if rng.random::<f64>() < self.noise.detection_error {
            reported += if rng.random::<bool>() { 1 } else { -1 };
        }
        let retained = self.model.classify(reported) == SiteClass::Retained;
        if retained {
            reported += self.model.frame_offset;
        }
        EventRecord {
            run_id,
            arm: self.arm,
            theta: self.theta,
            reported_x3: reported,
            retained,
            q3: q3(reported),
            branch_at_t2: branch,
            seed,
            wrong_prep,
            corrupt,
        }
    }

    /// `count` events with run ids `first_id..first_id + count`, each drawn
    /// from its own stream of `seed`. Parallel, order-independent.
    pub fn sample_many(&self, count: usize, first_id: u64, seed: StreamSeed) -> Vec<EventRecord> {
        let arm_seed = seed.derive(self.arm.stream_id());
        (0..count as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = arm_seed.stream(i);
                self.sample(first_id + i, seed.seed(), &mut rng)
            })
            .collect()
    }
}

/// Samples one event; builds the sampler on every call, so prefer
/// [`EventSampler`] for more than a handful of events.
pub fn sample_event<R: Rng + ?Sized>(
    spec: &WalkSpec,
    protocol: &RemovalProtocol,
    noise: &NoiseParams,
    seed: u64,
    rng: &mut R,
) -> Result<EventRecord> {
    Ok(EventSampler::new(spec, protocol, noise)?.sample(0, seed, rng))
}
